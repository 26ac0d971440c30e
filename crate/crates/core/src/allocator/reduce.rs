//! Compression of the pattern support to at most one pattern per group.

use std::collections::BTreeMap;

use super::{Allocation, SHARE_EPS};
use crate::error::{Error, Result};
use crate::lp::{solve, LpModel, LpStatus, RowKind};
use crate::queueing::{service_rate, Shares, TrafficProfile};
use crate::radio::{EfficiencyTable, Pattern};

/// Outcome details of [`caratheodory_reduce`].
#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub support_before: usize,
    pub support_after: usize,
    /// Whether the extra pivot that raises one group's rate was needed.
    pub pivoted: bool,
}

/// Solves `m u = b` for a small dense square system; `None` when singular.
fn dense_solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))?;
        if m[p][c].abs() < 1e-12 {
            return None;
        }
        m.swap(p, c);
        b.swap(p, c);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            if f != 0.0 {
                for k in c..n {
                    m[r][k] -= f * m[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    let mut u = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r][k] * u[k]).sum();
        u[r] = (b[r] - s) / m[r][r];
    }
    Some(u)
}

/// Rewrites `alloc` so that at most `k` patterns (one per group) carry
/// bandwidth, keeping the on/off decisions and never lowering any rate.
///
/// Each pattern in use delivers the rate vector `t_A` per unit of
/// bandwidth. A basic solution of `sum_A v_A t_A >= r`, `sum_A v_A = 1`
/// has at most `k + 1` positive entries; if it has exactly `k + 1`, one
/// pivot raises the rate of a single group until a pattern drops out.
/// Picos with fractional activity add their budget rows to the system.
pub fn caratheodory_reduce(
    alloc: &Allocation,
    table: &EfficiencyTable,
    traffic: &TrafficProfile,
) -> Result<(Allocation, Reduction)> {
    let k = alloc.rates.len();
    if traffic.num_groups() != k || table.num_groups() != k {
        return Err(Error::Invalid("group counts of allocation, table and traffic differ".into()));
    }
    let support: Vec<(Pattern, f64)> = alloc
        .pattern_shares
        .iter()
        .filter(|(_, &y)| y > SHARE_EPS)
        .map(|(&p, &y)| (p, y))
        .collect();
    let before = support.len();
    if before <= k {
        return Ok((
            alloc.clone(),
            Reduction {
                support_before: before,
                support_after: before,
                pivoted: false,
            },
        ));
    }

    // Per-unit rate of each group and per-unit budget use of each station under each pattern.
    let index: BTreeMap<Pattern, usize> = support.iter().enumerate().map(|(a, &(p, _))| (p, a)).collect();
    let mut t = vec![vec![0.0; support.len()]; k];
    let mut used: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (link, &x) in &alloc.shares {
        let Some(&a) = index.get(&link.pattern) else { continue };
        let s = table.value_for(link.station, link.group, link.pattern).ok_or_else(|| {
            Error::Invalid(format!("pattern {} is not in the efficiency table", link.pattern))
        })?;
        let y = support[a].1;
        t[link.group][a] += s * x / y;
        used.entry(link.station).or_insert_with(|| vec![0.0; support.len()])[a] += x / y;
    }
    let n1 = table.num_stations() - alloc.activity.len();
    let fractional: Vec<(usize, f64)> = alloc
        .activity
        .iter()
        .enumerate()
        .filter(|(_, &z)| z > 0.0 && z < 1.0)
        .map(|(p, &z)| (n1 + p, z))
        .collect();

    let mut lp: LpModel<Pattern> = LpModel::new();
    for &(p, _) in &support {
        lp.add_column(p, 0.0, 0.0, f64::INFINITY);
    }
    for (j, tj) in t.iter().enumerate() {
        let entries = tj.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(a, &v)| (a, v)).collect();
        lp.add_row(RowKind::Ge, alloc.rates[j], entries);
    }
    for &(i, z) in &fractional {
        if let Some(u) = used.get(&i) {
            let entries = u.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(a, &v)| (a, v)).collect();
            lp.add_row(RowKind::Le, z, entries);
        }
    }
    lp.add_row(RowKind::Eq, 1.0, (0..support.len()).map(|a| (a, 1.0)).collect());
    let sol = solve(&lp, 1e-10)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Invalid("input allocation is not feasible for its own support".into()));
    }
    let mut v = sol.primal;
    for x in v.iter_mut() {
        if *x <= SHARE_EPS {
            *x = 0.0;
        }
    }

    let mut pivoted = false;
    let positive: Vec<usize> = (0..v.len()).filter(|&a| v[a] > 0.0).collect();
    if positive.len() > k && fractional.is_empty() && positive.len() == k + 1 {
        let mut b = vec![vec![0.0; k + 1]; k + 1];
        for (c, &a) in positive.iter().enumerate() {
            for j in 0..k {
                b[j][c] = t[j][a];
            }
            b[k][c] = 1.0;
        }
        for j in 0..k {
            let mut e = vec![0.0; k + 1];
            e[j] = 1.0;
            let Some(d) = dense_solve(b.clone(), e) else { break };
            let step = positive
                .iter()
                .zip(&d)
                .filter(|(_, &da)| da < -1e-14)
                .map(|(&a, &da)| (v[a] / -da, a))
                .min_by(|x, y| x.0.total_cmp(&y.0));
            if let Some((theta, leaving)) = step {
                for (&a, &da) in positive.iter().zip(&d) {
                    v[a] = (v[a] + theta * da).max(0.0);
                }
                v[leaving] = 0.0;
                pivoted = true;
                break;
            }
        }
    }
    let after = v.iter().filter(|&&x| x > 0.0).count();
    let limit = k + fractional.len();
    if after > limit {
        return Err(Error::ReductionIncomplete {
            support: after,
            groups: k,
        });
    }

    let total: f64 = v.iter().sum();
    let mut shares = Shares::new();
    for (link, &x) in &alloc.shares {
        if let Some(&a) = index.get(&link.pattern) {
            let scaled = x * v[a] / total / support[a].1;
            if scaled > 0.0 {
                shares.insert(*link, scaled);
            }
        }
    }
    let pattern_shares = support
        .iter()
        .enumerate()
        .filter(|(a, _)| v[*a] > 0.0)
        .map(|(a, &(p, _))| (p, v[a] / total))
        .collect();
    let rates = (0..k).map(|j| service_rate(&shares, table, j)).collect::<Result<Vec<_>>>()?;
    Ok((
        Allocation {
            rates,
            shares,
            pattern_shares,
            activity: alloc.activity.clone(),
            active_set: alloc.active_set.clone(),
            energy_cost: alloc.energy_cost,
        },
        Reduction {
            support_before: before,
            support_after: after,
            pivoted,
        },
    ))
}
