//! LP builders for the pattern-based allocation problem and its full-reuse variant.

use std::fmt;

use crate::error::{Error, Result};
use crate::lp::{LpModel, RowKind};
use crate::queueing::{Link, TrafficProfile};
use crate::radio::{spectral_efficiency, EfficiencyTable, Pattern, Scenario};

/// Identity of an LP column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    Rate(usize),
    Share { station: usize, group: usize, pattern: Pattern },
    PatternShare(Pattern),
    Activity(usize),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Rate(j) => write!(f, "r_{j}"),
            Var::Share {
                station,
                group,
                pattern,
            } => write!(f, "x_{station}_{group}_{pattern}"),
            Var::PatternShare(p) => write!(f, "y_{p}"),
            Var::Activity(i) => write!(f, "z_{i}"),
        }
    }
}

/// How a pico station enters a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PicoMode {
    /// Switched off: no share columns.
    Off,
    /// Switched on: activity fixed to one.
    On,
    /// Relaxed activity `z_i` in [0, 1] with the given objective coefficient.
    Free { cost: f64 },
}

/// Column bookkeeping of a built model.
#[derive(Debug, Clone)]
pub struct ModelLayout {
    pub rate_cols: Vec<usize>,
    pub share_cols: Vec<(usize, Link)>,
    pub pattern_cols: Vec<(usize, Pattern)>,
    /// Activity column per pico (indexed from the first pico); `None` unless `Free`.
    pub activity_cols: Vec<Option<usize>>,
    pub modes: Vec<PicoMode>,
    pub num_macros: usize,
}

#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub lp: LpModel<Var>,
    pub layout: ModelLayout,
}

impl BuiltModel {
    /// Activity levels per pico implied by a primal vector.
    pub fn activity(&self, primal: &[f64]) -> Vec<f64> {
        self.layout
            .modes
            .iter()
            .zip(&self.layout.activity_cols)
            .map(|(mode, col)| match (mode, col) {
                (_, Some(c)) => primal[*c].clamp(0.0, 1.0),
                (PicoMode::On, None) => 1.0,
                _ => 0.0,
            })
            .collect()
    }

    /// Updates the objective coefficient of every free activity column.
    pub fn set_activity_costs(&mut self, costs: &[f64]) {
        for (p, col) in self.layout.activity_cols.iter().enumerate() {
            if let Some(c) = col {
                self.lp.set_cost(*c, costs[p]);
            }
        }
    }
}

fn check_dims(scenario: &Scenario, traffic: &TrafficProfile, modes: &[PicoMode]) -> Result<()> {
    if traffic.num_groups() != scenario.num_groups() {
        return Err(Error::Invalid(format!(
            "traffic has {} groups, scenario has {}",
            traffic.num_groups(),
            scenario.num_groups()
        )));
    }
    if modes.len() != scenario.num_picos() {
        return Err(Error::Invalid(format!(
            "{} pico modes for {} picos",
            modes.len(),
            scenario.num_picos()
        )));
    }
    if let Some(PicoMode::Free { cost }) = modes
        .iter()
        .find(|m| matches!(m, PicoMode::Free { cost } if !cost.is_finite()))
    {
        return Err(Error::Invalid(format!("activity cost {cost} is not finite")));
    }
    Ok(())
}

fn rate_columns(lp: &mut LpModel<Var>, traffic: &TrafficProfile) -> Vec<usize> {
    (0..traffic.num_groups())
        .map(|j| lp.add_column(Var::Rate(j), 0.0, traffic.required_rate(j), f64::INFINITY))
        .collect()
}

fn activity_columns(lp: &mut LpModel<Var>, n1: usize, modes: &[PicoMode]) -> Vec<Option<usize>> {
    modes
        .iter()
        .enumerate()
        .map(|(p, m)| match m {
            PicoMode::Free { cost } => Some(lp.add_column(Var::Activity(n1 + p), *cost, 0.0, 1.0)),
            _ => None,
        })
        .collect()
}

/// Builds the pattern-based relaxation over the patterns at `pattern_idx` in
/// `table`. The empty pattern gets no column.
///
/// Rows: rate definitions, per-(station, pattern) budgets `sum_j x <= y_A`,
/// per-pico budgets `sum x <= z_i` for free picos, and `sum_A y_A = 1`.
/// Delay caps are lower bounds on the rate columns.
pub fn build_pattern_model(
    scenario: &Scenario,
    table: &EfficiencyTable,
    traffic: &TrafficProfile,
    pattern_idx: &[usize],
    modes: &[PicoMode],
) -> Result<BuiltModel> {
    check_dims(scenario, traffic, modes)?;
    if table.num_stations() != scenario.num_stations() || table.num_groups() != scenario.num_groups() {
        return Err(Error::Invalid("efficiency table does not match the scenario".into()));
    }
    let (n1, k) = (scenario.num_macros(), scenario.num_groups());
    let usable = |i: usize| i < n1 || modes[i - n1] != PicoMode::Off;
    let patterns = table.patterns().patterns();

    let mut lp = LpModel::new();
    let rate_cols = rate_columns(&mut lp, traffic);
    let activity_cols = activity_columns(&mut lp, n1, modes);
    let mut pattern_cols = Vec::with_capacity(pattern_idx.len());
    let mut share_cols = Vec::new();
    let mut rate_rows: Vec<Vec<(usize, f64)>> = rate_cols.iter().map(|&c| vec![(c, 1.0)]).collect();
    let mut budget_rows = Vec::new();
    let mut station_use: Vec<Vec<(usize, f64)>> = vec![Vec::new(); scenario.num_stations()];

    for &a in pattern_idx {
        let pattern = patterns[a];
        if pattern.is_empty() {
            // bandwidth left idle is never useful
            continue;
        }
        let y = lp.add_column(Var::PatternShare(pattern), 0.0, 0.0, f64::INFINITY);
        pattern_cols.push((y, pattern));
        for i in pattern.members().filter(|&i| usable(i)) {
            let mut budget = Vec::with_capacity(k + 1);
            for j in 0..k {
                let var = Var::Share {
                    station: i,
                    group: j,
                    pattern,
                };
                let c = lp.add_column(var, 0.0, 0.0, f64::INFINITY);
                share_cols.push((
                    c,
                    Link {
                        station: i,
                        group: j,
                        pattern,
                    },
                ));
                rate_rows[j].push((c, -table.value(i, j, a)));
                budget.push((c, 1.0));
                station_use[i].push((c, 1.0));
            }
            budget.push((y, -1.0));
            budget_rows.push(budget);
        }
    }
    for row in rate_rows {
        lp.add_row(RowKind::Eq, 0.0, row);
    }
    for row in budget_rows {
        lp.add_row(RowKind::Le, 0.0, row);
    }
    for (p, col) in activity_cols.iter().enumerate() {
        if let Some(z) = col {
            let mut row = std::mem::take(&mut station_use[n1 + p]);
            row.push((*z, -1.0));
            lp.add_row(RowKind::Le, 0.0, row);
        }
    }
    lp.add_row(RowKind::Eq, 1.0, pattern_cols.iter().map(|&(c, _)| (c, 1.0)).collect());

    Ok(BuiltModel {
        lp,
        layout: ModelLayout {
            rate_cols,
            share_cols,
            pattern_cols,
            activity_cols,
            modes: modes.to_vec(),
            num_macros: n1,
        },
    })
}

/// Builds the full-reuse model: every station transmits on the whole band,
/// so link efficiencies are those of the all-station pattern and each station
/// splits its time among groups (`sum_j x <= 1`, or `<= z_i` for free picos).
pub fn build_full_reuse_model(
    scenario: &Scenario,
    traffic: &TrafficProfile,
    modes: &[PicoMode],
) -> Result<BuiltModel> {
    check_dims(scenario, traffic, modes)?;
    let (n, n1, k) = (scenario.num_stations(), scenario.num_macros(), scenario.num_groups());
    let full = scenario.all_stations();

    let mut lp = LpModel::new();
    let rate_cols = rate_columns(&mut lp, traffic);
    let activity_cols = activity_columns(&mut lp, n1, modes);
    let mut share_cols = Vec::new();
    let mut rate_rows: Vec<Vec<(usize, f64)>> = rate_cols.iter().map(|&c| vec![(c, 1.0)]).collect();
    let mut station_rows = Vec::new();
    for i in 0..n {
        let mode = if i < n1 { PicoMode::On } else { modes[i - n1] };
        if mode == PicoMode::Off {
            continue;
        }
        let mut row = Vec::with_capacity(k + 1);
        for (j, rate_row) in rate_rows.iter_mut().enumerate() {
            let c = lp.add_column(
                Var::Share {
                    station: i,
                    group: j,
                    pattern: full,
                },
                0.0,
                0.0,
                f64::INFINITY,
            );
            share_cols.push((
                c,
                Link {
                    station: i,
                    group: j,
                    pattern: full,
                },
            ));
            rate_row.push((c, -spectral_efficiency(scenario, i, j, full)));
            row.push((c, 1.0));
        }
        match activity_cols.get(i.wrapping_sub(n1)).copied().flatten() {
            Some(z) if i >= n1 => {
                row.push((z, -1.0));
                station_rows.push((row, 0.0));
            }
            _ => station_rows.push((row, 1.0)),
        }
    }
    for row in rate_rows {
        lp.add_row(RowKind::Eq, 0.0, row);
    }
    for (row, rhs) in station_rows {
        lp.add_row(RowKind::Le, rhs, row);
    }
    Ok(BuiltModel {
        lp,
        layout: ModelLayout {
            rate_cols,
            share_cols,
            pattern_cols: Vec::new(),
            activity_cols,
            modes: modes.to_vec(),
            num_macros: n1,
        },
    })
}
