//! Delay-minimizing post-processing over a fixed set of active picos.
//!
//! The arrival-weighted mean sojourn time is convex in the rates, and the
//! feasible allocations form a polytope, so conditional gradient applies
//! directly: linearize at the current rates, let the LP pick the best
//! vertex, and step toward it with an exact line search. Every iterate is a
//! convex combination of feasible allocations and stays feasible.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::allocator::{
    audit, build_p4, build_pattern_model, energy_of, Allocation, BuiltModel, IterationRecord, IterationTrace,
    PicoMode, SolverConfig, StopReason,
};
use crate::error::{Error, Result};
use crate::lp::{solve_with, Basis, LpSolution, LpStatus, SolveOptions};
use crate::queueing::{average_sojourn, TrafficProfile};
use crate::radio::{EfficiencyTable, Pattern, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DelayOptions {
    /// Stop once the duality gap estimate drops to this (seconds).
    pub tol: f64,
    pub max_iters: usize,
    /// Smallest admissible `r_j - lambda_j` along a line search.
    pub margin: f64,
    pub lp_tol: f64,
}

impl Default for DelayOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 500,
            margin: 1e-9,
            lp_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayStep {
    pub iteration: usize,
    /// Mean sojourn time before the step.
    pub objective: f64,
    pub gap: f64,
    pub step: f64,
}

/// Result of [`minimize_delay`]: the final iterate and its history.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayDescentState {
    pub allocation: Allocation,
    pub objective: f64,
    pub gap: f64,
    pub iterations: usize,
    pub log: Vec<DelayStep>,
}

impl DelayDescentState {
    /// Per-iteration log as CSV text.
    pub fn log_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["iteration", "objective_s", "gap_s", "step"])?;
        for s in &self.log {
            w.write_record([
                s.iteration.to_string(),
                format!("{:.9e}", s.objective),
                format!("{:.9e}", s.gap),
                format!("{:.9e}", s.step),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Gradient of the mean sojourn time with respect to the rates.
pub fn delay_gradient(rates: &[f64], traffic: &TrafficProfile) -> Vec<f64> {
    let total = traffic.total_arrival();
    rates
        .iter()
        .zip(&traffic.arrival_rates)
        .map(|(&r, &l)| if l > 0.0 { -(l / total) / ((r - l) * (r - l)) } else { 0.0 })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizer over [0, 1] of `gamma * slope + weight * delay(r + gamma (s - r))`.
/// The function is convex, so this bisects on its derivative.
fn line_search(r: &[f64], s: &[f64], slope: f64, weight: f64, traffic: &TrafficProfile, margin: f64) -> f64 {
    let d: Vec<f64> = s.iter().zip(r).map(|(a, b)| a - b).collect();
    let mut hi = 1.0f64;
    for ((&rj, &dj), &l) in r.iter().zip(&d).zip(&traffic.arrival_rates) {
        if l > 0.0 && dj < 0.0 {
            hi = hi.min(((rj - l - margin) / -dj).max(0.0));
        }
    }
    let deriv = |g: f64| {
        let at: Vec<f64> = r.iter().zip(&d).map(|(a, b)| a + g * b).collect();
        slope + weight * dot(&delay_gradient(&at, traffic), &d)
    };
    if deriv(0.0) >= 0.0 {
        return 0.0;
    }
    if deriv(hi) <= 0.0 {
        return hi;
    }
    let (mut lo, mut up) = (0.0, hi);
    for _ in 0..80 {
        let mid = 0.5 * (lo + up);
        if deriv(mid) > 0.0 {
            up = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

fn blend_map<K: Ord + Copy>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>, g: f64) -> BTreeMap<K, f64> {
    let mut out: BTreeMap<K, f64> = a.iter().map(|(&k, &v)| (k, (1.0 - g) * v)).collect();
    for (&k, &v) in b {
        *out.entry(k).or_default() += g * v;
    }
    out.retain(|_, v| *v > 0.0);
    out
}

fn blend_vec(a: &[f64], b: &[f64], g: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (1.0 - g) * x + g * y).collect()
}

/// `(1 - g) a + g b`; on/off decisions and energy are taken from `a`.
fn blend(a: &Allocation, b: &Allocation, g: f64) -> Allocation {
    if g == 0.0 {
        return a.clone();
    }
    Allocation {
        rates: blend_vec(&a.rates, &b.rates, g),
        shares: blend_map(&a.shares, &b.shares, g),
        pattern_shares: blend_map(&a.pattern_shares, &b.pattern_shares, g),
        activity: blend_vec(&a.activity, &b.activity, g),
        active_set: a.active_set.clone(),
        energy_cost: a.energy_cost,
    }
}

/// Linear-minimization oracle: an LP over a fixed model whose rate (and
/// optionally activity) costs change every call.
struct Oracle {
    built: BuiltModel,
    basis: Option<Basis>,
    tol: f64,
}

impl Oracle {
    fn solve(&mut self, rate_costs: &[f64], activity_costs: Option<&[f64]>) -> Result<LpSolution> {
        let scale = rate_costs
            .iter()
            .chain(activity_costs.unwrap_or(&[]))
            .fold(0.0f64, |m, c| m.max(c.abs()));
        let scale = if scale > 0.0 { scale } else { 1.0 };
        for (&c, &g) in self.built.layout.rate_cols.iter().zip(rate_costs) {
            self.built.lp.set_cost(c, g / scale);
        }
        if let Some(ac) = activity_costs {
            let scaled: Vec<f64> = ac.iter().map(|c| c / scale).collect();
            self.built.set_activity_costs(&scaled);
        }
        let opts = SolveOptions::with_tol(self.tol).warm(self.basis.take());
        let sol = solve_with(&self.built.lp, &opts)?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => return Err(Error::Infeasible("delay caps cannot be met".into())),
            LpStatus::Unbounded => return Err(Error::Invalid("linear subproblem is unbounded".into())),
        }
        self.basis = Some(sol.basis.clone());
        Ok(sol)
    }
}

fn check_start(scenario: &Scenario, traffic: &TrafficProfile, start: &Allocation) -> Result<f64> {
    if !(traffic.total_arrival() > 0.0) {
        return Err(Error::BadStart("mean sojourn needs positive total traffic".into()));
    }
    let report = audit(scenario, traffic, start);
    if !report.passes(1e-7) {
        return Err(Error::BadStart(format!("start allocation is infeasible: {report}")));
    }
    average_sojourn(&start.rates, traffic)
        .map_err(|e| Error::BadStart(format!("start has unbounded delay: {e}")))
}

/// Lowers the mean sojourn time of `start` without touching its on/off decisions.
///
/// Vertices come from the allocation LP with the active picos fixed on and
/// every pattern containing an inactive pico removed. The start itself may
/// use any patterns.
pub fn minimize_delay(
    scenario: &Scenario,
    table: &EfficiencyTable,
    traffic: &TrafficProfile,
    start: &Allocation,
    opts: &DelayOptions,
) -> Result<DelayDescentState> {
    let mut objective = check_start(scenario, traffic, start)?;
    let n1 = scenario.num_macros();
    let on: Vec<bool> = (0..scenario.num_picos()).map(|p| start.active_set.contains(&(n1 + p))).collect();
    let modes: Vec<PicoMode> = on.iter().map(|&b| if b { PicoMode::On } else { PicoMode::Off }).collect();
    let off = Pattern::from_members((0..on.len()).filter(|&p| !on[p]).map(|p| n1 + p));
    let patterns = table.patterns().indices_avoiding(off);
    let mut oracle = Oracle {
        built: build_pattern_model(scenario, table, traffic, &patterns, &modes)?,
        basis: None,
        tol: opts.lp_tol,
    };

    let mut current = start.clone();
    let mut log = Vec::new();
    let mut gap = f64::INFINITY;
    for iteration in 1..=opts.max_iters {
        let grad = delay_gradient(&current.rates, traffic);
        let sol = oracle.solve(&grad, None)?;
        let vertex = vertex_allocation(&oracle.built, &sol, &current.active_set, current.energy_cost);
        gap = dot(&grad, &current.rates) - dot(&grad, &vertex.rates);
        if gap <= opts.tol {
            log.push(DelayStep {
                iteration,
                objective,
                gap,
                step: 0.0,
            });
            break;
        }
        let step = line_search(&current.rates, &vertex.rates, 0.0, 1.0, traffic, opts.margin);
        log.push(DelayStep {
            iteration,
            objective,
            gap,
            step,
        });
        if step == 0.0 {
            break;
        }
        current = blend(&current, &vertex, step);
        objective = average_sojourn(&current.rates, traffic)?;
    }
    Ok(DelayDescentState {
        allocation: current,
        objective,
        gap,
        iterations: log.len(),
        log,
    })
}

/// Allocation at an LP vertex with the given on/off bookkeeping.
fn vertex_allocation(built: &BuiltModel, sol: &LpSolution, active_set: &[usize], energy_cost: f64) -> Allocation {
    let x = &sol.primal;
    let layout = &built.layout;
    Allocation {
        rates: layout.rate_cols.iter().map(|&c| x[c]).collect(),
        shares: layout
            .share_cols
            .iter()
            .filter(|&&(c, _)| x[c] > 0.0)
            .map(|&(c, l)| (l, x[c]))
            .collect(),
        pattern_shares: layout
            .pattern_cols
            .iter()
            .filter(|&&(c, _)| x[c] > 0.0)
            .map(|&(c, p)| (p, x[c]))
            .collect(),
        activity: built.activity(x),
        active_set: active_set.to_vec(),
        energy_cost,
    }
}

/// Reweighted minimization of `energy + beta * mean sojourn time`.
///
/// Each outer iteration fixes the weights of the l1 term and minimizes the
/// resulting convex objective by conditional gradient over the relaxed
/// allocation polytope. After the weights settle, activities are rounded at
/// the threshold and the delay is minimized over the rounded active set.
pub fn minimize_energy_delay(
    scenario: &Scenario,
    table: &EfficiencyTable,
    traffic: &TrafficProfile,
    config: &SolverConfig,
    beta: f64,
    opts: &DelayOptions,
) -> Result<(DelayDescentState, IterationTrace)> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Invalid(format!("delay weight {beta} must be finite and nonnegative")));
    }
    if !(traffic.total_arrival() > 0.0) {
        return Err(Error::Invalid("energy-delay objective needs positive total traffic".into()));
    }
    let n2 = scenario.num_picos();
    let costs = config.costs(n2);
    let eps = config.eps_weight;
    let mut oracle = Oracle {
        built: build_p4(scenario, table, traffic, &vec![1.0; n2], config)?,
        basis: None,
        tol: config.lp_tol,
    };
    let zero_rates = vec![0.0; traffic.num_groups()];
    let sol = oracle.solve(&zero_rates, Some(&costs))?;
    let mut current = vertex_allocation(&oracle.built, &sol, &[], 0.0);

    let mut w = vec![1.0; n2];
    let (mut u_prev2, mut u_prev1) = (0.0, costs.iter().sum::<f64>());
    let mut records = Vec::new();
    let mut t = 1;
    while t <= config.max_iterations && (u_prev1 - u_prev2).abs() > config.eps_objective {
        let start = std::time::Instant::now();
        let wc: Vec<f64> = w.iter().zip(&costs).map(|(a, b)| a * b).collect();
        let value = |a: &Allocation| -> Result<f64> {
            Ok(dot(&wc, &a.activity) + beta * average_sojourn(&a.rates, traffic)?)
        };
        let mut lp_iterations = 0;
        for _ in 0..opts.max_iters {
            let grad: Vec<f64> = delay_gradient(&current.rates, traffic).iter().map(|g| beta * g).collect();
            let sol = oracle.solve(&grad, Some(&wc))?;
            lp_iterations += sol.iterations;
            let vertex = vertex_allocation(&oracle.built, &sol, &current.active_set, current.energy_cost);
            let gap = dot(&grad, &current.rates) - dot(&grad, &vertex.rates) + dot(&wc, &current.activity)
                - dot(&wc, &vertex.activity);
            if gap <= opts.tol * value(&current)?.abs().max(1.0) {
                break;
            }
            let slope = dot(&wc, &vertex.activity) - dot(&wc, &current.activity);
            let step = line_search(&current.rates, &vertex.rates, slope, beta, traffic, opts.margin);
            if step == 0.0 {
                break;
            }
            current = blend(&current, &vertex, step);
        }
        let u = value(&current)?;
        let z = current.activity.clone();
        records.push(IterationRecord {
            iteration: t,
            weights: w.clone(),
            z: z.clone(),
            lp_objective: u,
            surrogate: crate::allocator::surrogate_objective(&z, &costs, eps),
            patterns: table.patterns().len(),
            lp_iterations,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
        w = z.iter().map(|&zi| 1.0 / (zi + eps)).collect();
        u_prev2 = u_prev1;
        u_prev1 = u;
        t += 1;
    }
    let stop = if (u_prev1 - u_prev2).abs() > config.eps_objective {
        StopReason::IterationLimit
    } else {
        StopReason::Converged
    };

    let mut on: Vec<bool> = current.activity.iter().map(|&z| z > config.activity_threshold).collect();
    let mut repaired = Vec::new();
    let n1 = scenario.num_macros();
    let rounded = loop {
        let modes: Vec<PicoMode> = on.iter().map(|&b| if b { PicoMode::On } else { PicoMode::Off }).collect();
        let all: Vec<usize> = (0..table.patterns().len()).collect();
        let built = build_pattern_model(scenario, table, traffic, &all, &modes)?;
        let sol = solve_with(&built.lp, &SolveOptions::with_tol(config.lp_tol))?;
        if sol.is_optimal() {
            let mut a = vertex_allocation(&built, &sol, &[], 0.0);
            let (active, energy) = energy_of(scenario, &a.activity, &costs, config.activity_threshold);
            a.active_set = active;
            a.energy_cost = energy;
            break a;
        }
        let next = (0..n2)
            .filter(|&p| !on[p])
            .max_by(|&a, &b| current.activity[a].total_cmp(&current.activity[b]).then(b.cmp(&a)));
        match next {
            Some(p) => {
                on[p] = true;
                repaired.push(n1 + p);
            }
            None => return Err(Error::Infeasible("no feasible rounding of the relaxation".into())),
        }
    };
    let state = minimize_delay(scenario, table, traffic, &rounded, opts)?;
    Ok((
        state,
        IterationTrace {
            records,
            reductions: Vec::new(),
            stop,
            repaired,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::{reweighted_l1, SolverConfig};
    use crate::radio::{build_efficiency_table, enumerate_patterns, PatternPolicy};
    use crate::testutil::{macro_pico, one_macro};
    use proptest::prelude::*;

    fn full_table(s: &Scenario) -> EfficiencyTable {
        build_efficiency_table(s, &enumerate_patterns(s, PatternPolicy::Full).unwrap())
    }

    #[test]
    fn single_link_start_is_already_optimal() {
        let s = one_macro(1e-9);
        let table = full_table(&s);
        let traffic = TrafficProfile::with_uniform_cap(vec![5.0], 0.5).unwrap();
        let (a, _) = reweighted_l1(&s, &table, &traffic, &SolverConfig::default()).unwrap();
        let mut full = a.clone();
        for v in full.shares.values_mut() {
            *v = 1.0;
        }
        full.rates[0] = 20.0 * 1001f64.log2();
        let st = minimize_delay(&s, &table, &traffic, &full, &DelayOptions::default()).unwrap();
        assert_eq!(st.objective, average_sojourn(&full.rates, &traffic).unwrap());
        assert_eq!(st.allocation, full);
        assert!(st.gap <= 1e-6);
        // from a minimal start the first step jumps to the optimum
        let st = minimize_delay(&s, &table, &traffic, &a, &DelayOptions::default()).unwrap();
        assert!((st.objective - 1.0 / (20.0 * 1001f64.log2() - 5.0)).abs() < 1e-9);
    }

    #[test]
    fn bad_starts_are_rejected() {
        let s = one_macro(1e-9);
        let table = full_table(&s);
        let traffic = TrafficProfile::with_uniform_cap(vec![5.0], 0.5).unwrap();
        let (a, _) = reweighted_l1(&s, &table, &traffic, &SolverConfig::default()).unwrap();
        let idle = TrafficProfile::with_uniform_cap(vec![0.0], 0.5).unwrap();
        assert!(matches!(
            minimize_delay(&s, &table, &idle, &a, &DelayOptions::default()),
            Err(Error::BadStart(_))
        ));
        let mut broken = a.clone();
        broken.rates[0] = 4.0;
        broken.shares.values_mut().for_each(|v| *v = 4.0 / (20.0 * 1001f64.log2()));
        assert!(matches!(
            minimize_delay(&s, &table, &traffic, &broken, &DelayOptions::default()),
            Err(Error::BadStart(_))
        ));
    }

    #[test]
    fn two_station_descent_is_monotone_and_keeps_decisions() {
        let s = macro_pico(vec![vec![1e-12, 1e-9], vec![1e-9, 1e-13]]);
        let table = full_table(&s);
        let traffic = TrafficProfile::with_uniform_cap(vec![20.0, 60.0], 0.5).unwrap();
        let (a, _) = reweighted_l1(&s, &table, &traffic, &SolverConfig::default()).unwrap();
        let st = minimize_delay(&s, &table, &traffic, &a, &DelayOptions::default()).unwrap();
        for w in st.log.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-15);
        }
        assert!(st.objective <= st.log[0].objective);
        assert_eq!(st.allocation.active_set, a.active_set);
        assert_eq!(st.allocation.energy_cost, a.energy_cost);
        assert!(audit(&s, &traffic, &st.allocation).passes(1e-7));
        let y: f64 = st.allocation.pattern_shares.values().sum();
        assert!((y - 1.0).abs() < 1e-12);
        assert!(st.log_csv().unwrap().starts_with("iteration,objective_s,gap_s,step\n"));
    }

    #[test]
    fn energy_delay_hook_trades_energy_for_delay() {
        let s = macro_pico(vec![vec![1e-12, 1e-9], vec![1e-9, 1e-13]]);
        let table = full_table(&s);
        let traffic = TrafficProfile::with_uniform_cap(vec![5.0, 5.0], 0.5).unwrap();
        let cfg = SolverConfig::default();
        let (low, _) =
            minimize_energy_delay(&s, &table, &traffic, &cfg, 0.0, &DelayOptions::default()).unwrap();
        assert_eq!(low.allocation.energy_cost, 0.0);
        let (high, _) =
            minimize_energy_delay(&s, &table, &traffic, &cfg, 1e6, &DelayOptions::default()).unwrap();
        assert_eq!(high.allocation.energy_cost, 1.0);
        assert!(high.objective < low.objective);
        assert!(audit(&s, &traffic, &high.allocation).passes(1e-7));
    }

    proptest! {
        #[test]
        fn gradient_matches_central_differences(
            lambdas in prop::collection::vec(0.0f64..10.0, 1..6),
            margins in prop::collection::vec(0.2f64..20.0, 6),
        ) {
            prop_assume!(lambdas.iter().sum::<f64>() > 0.1);
            let traffic = TrafficProfile::with_uniform_cap(lambdas.clone(), 0.5).unwrap();
            let r: Vec<f64> = lambdas.iter().zip(&margins).map(|(l, m)| l + m).collect();
            let g = delay_gradient(&r, &traffic);
            for j in 0..r.len() {
                let h = 1e-6 * margins[j];
                let mut up = r.clone();
                let mut dn = r.clone();
                up[j] += h;
                dn[j] -= h;
                let fd = (average_sojourn(&up, &traffic).unwrap() - average_sojourn(&dn, &traffic).unwrap()) / (2.0 * h);
                prop_assert!((fd - g[j]).abs() <= 1e-5 * g[j].abs().max(1e-8), "{} vs {}", fd, g[j]);
            }
        }

        #[test]
        fn line_search_beats_grid(
            lambdas in prop::collection::vec(0.5f64..10.0, 1..5),
            a in prop::collection::vec(0.5f64..10.0, 5),
            b in prop::collection::vec(0.5f64..10.0, 5),
        ) {
            let traffic = TrafficProfile::with_uniform_cap(lambdas.clone(), 0.5).unwrap();
            let r: Vec<f64> = lambdas.iter().zip(&a).map(|(l, m)| l + m).collect();
            let s: Vec<f64> = lambdas.iter().zip(&b).map(|(l, m)| l + m).collect();
            let g = line_search(&r, &s, 0.0, 1.0, &traffic, 1e-9);
            let at = |t: f64| average_sojourn(&blend_vec(&r, &s, t), &traffic).unwrap();
            for i in 0..=100 {
                prop_assert!(at(g) <= at(i as f64 / 100.0) + 1e-12);
            }
        }
    }
}
