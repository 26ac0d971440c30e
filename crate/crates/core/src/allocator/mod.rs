//! Joint cell activation, user association and spectrum allocation.
//!
//! The mixed-integer problem chooses which pico stations to switch on
//! (`z`), how to split the band among interference patterns (`y`), and how
//! much of each pattern every station spends on every group (`x`), subject
//! to per-group delay caps. The relaxations here replace `z` by levels in
//! [0, 1] and drive them to zero by reweighted l1 minimization.

mod audit;
mod model;
mod oracle;
mod reduce;
mod reweighted;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::LpSolution;
use crate::queueing::{sojourn_time, Link, Shares, TrafficProfile};
use crate::radio::{Pattern, Scenario};

pub use audit::{audit, AuditReport};
pub use model::{build_full_reuse_model, build_pattern_model, BuiltModel, ModelLayout, PicoMode, Var};
pub use oracle::exact_oracle;
pub use reduce::{caratheodory_reduce, Reduction};
pub use reweighted::{
    build_p4, reweighted_l1, reweighted_l1_refined, solve_full_reuse, IterationRecord, IterationTrace,
    ReductionEvent, StopReason,
};

/// Shares below this are treated as absent when reading or writing allocations.
pub const SHARE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Iteration budget `T`.
    pub max_iterations: usize,
    /// Stop once consecutive LP objectives differ by at most this.
    pub eps_objective: f64,
    /// Regularizer in the weight update `w = 1 / (z + eps)`.
    pub eps_weight: f64,
    /// Reduction threshold scale of the refined algorithm.
    pub alpha: f64,
    /// Activity level above which a pico counts as switched on.
    pub activity_threshold: f64,
    /// Per-pico energy costs; all ones when absent.
    pub costs: Option<Vec<f64>>,
    pub lp_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            eps_objective: 1e-9,
            eps_weight: 1e-9,
            alpha: 0.1,
            activity_threshold: 1e-6,
            costs: None,
            lp_tol: 1e-9,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, num_picos: usize) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::Invalid("max_iterations must be at least 1".into()));
        }
        if !(self.eps_objective > 0.0 && self.eps_weight > 0.0) {
            return Err(Error::Invalid("eps_objective and eps_weight must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Invalid("alpha must lie in (0, 1)".into()));
        }
        if !(self.activity_threshold >= 0.0 && self.activity_threshold < 1.0) {
            return Err(Error::Invalid("activity_threshold must lie in [0, 1)".into()));
        }
        if !(self.lp_tol > 0.0) {
            return Err(Error::Invalid("lp_tol must be positive".into()));
        }
        if let Some(c) = &self.costs {
            if c.len() != num_picos {
                return Err(Error::Invalid(format!("{} costs for {num_picos} picos", c.len())));
            }
            if c.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::Invalid("energy costs must be positive and finite".into()));
            }
        }
        Ok(())
    }

    pub fn costs(&self, num_picos: usize) -> Vec<f64> {
        self.costs.clone().unwrap_or_else(|| vec![1.0; num_picos])
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Concave surrogate of the weighted on/off count: `sum_i c_i log(1 + z_i/eps) / log(1 + 1/eps)`.
pub fn surrogate_objective(z: &[f64], costs: &[f64], eps: f64) -> f64 {
    let norm = (1.0 / eps).ln_1p();
    z.iter()
        .zip(costs)
        .map(|(&zi, &c)| c * (zi.max(0.0) / eps).ln_1p() / norm)
        .sum()
}

/// A solution `(r, x, y, z)` of the allocation problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Service rate per group (packets/s).
    pub rates: Vec<f64>,
    /// Bandwidth fractions `x`.
    pub shares: Shares,
    /// Bandwidth fraction `y_A` of each pattern in use.
    pub pattern_shares: BTreeMap<Pattern, f64>,
    /// Activity level per pico, indexed from the first pico.
    pub activity: Vec<f64>,
    /// Station ids of the picos that are switched on.
    pub active_set: Vec<usize>,
    pub energy_cost: f64,
}

impl Allocation {
    pub fn num_active(&self) -> usize {
        self.active_set.len()
    }

    /// Number of patterns carrying positive bandwidth.
    pub fn support(&self) -> usize {
        self.pattern_shares.values().filter(|&&v| v > SHARE_EPS).count()
    }

    pub fn to_file(&self, traffic: &TrafficProfile) -> AllocationFile {
        AllocationFile {
            active_set: self.active_set.clone(),
            energy_cost: self.energy_cost,
            z: self.activity.clone(),
            y: self
                .pattern_shares
                .iter()
                .filter(|(_, &v)| v > SHARE_EPS)
                .map(|(&p, &v)| (p, v))
                .collect(),
            x: self
                .shares
                .iter()
                .filter(|(_, &v)| v > SHARE_EPS)
                .map(|(l, &v)| ShareEntry {
                    station: l.station,
                    group: l.group,
                    pattern: l.pattern,
                    share: v,
                })
                .collect(),
            r: self.rates.clone(),
            sojourn_s: self
                .rates
                .iter()
                .zip(&traffic.arrival_rates)
                .map(|(&r, &l)| Some(sojourn_time(r, l)).filter(|t| t.is_finite()))
                .collect(),
        }
    }

    pub fn to_json(&self, traffic: &TrafficProfile) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file(traffic))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: AllocationFile = serde_json::from_str(text)?;
        Ok(f.into())
    }
}

/// One nonzero entry of `x` in the on-disk allocation format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareEntry {
    pub station: usize,
    pub group: usize,
    pub pattern: Pattern,
    pub share: f64,
}

/// On-disk allocation format. Infinite sojourn times are written as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationFile {
    pub active_set: Vec<usize>,
    pub energy_cost: f64,
    pub z: Vec<f64>,
    pub y: BTreeMap<Pattern, f64>,
    pub x: Vec<ShareEntry>,
    pub r: Vec<f64>,
    pub sojourn_s: Vec<Option<f64>>,
}

impl From<AllocationFile> for Allocation {
    fn from(f: AllocationFile) -> Self {
        Allocation {
            rates: f.r,
            shares: f
                .x
                .into_iter()
                .map(|e| {
                    (
                        Link {
                            station: e.station,
                            group: e.group,
                            pattern: e.pattern,
                        },
                        e.share,
                    )
                })
                .collect(),
            pattern_shares: f.y,
            activity: f.z,
            active_set: f.active_set,
            energy_cost: f.energy_cost,
        }
    }
}

/// Energy cost and active set of the given activity levels.
pub fn energy_of(scenario: &Scenario, activity: &[f64], costs: &[f64], threshold: f64) -> (Vec<usize>, f64) {
    let n1 = scenario.num_macros();
    let mut active = Vec::new();
    let mut cost = 0.0;
    for (p, &z) in activity.iter().enumerate() {
        if z > threshold {
            active.push(n1 + p);
            cost += costs[p];
        }
    }
    (active, cost)
}

/// Reads an allocation out of an optimal solution of a built model. When
/// `full_reuse` is set, the whole band goes to that pattern.
pub(crate) fn extract(
    scenario: &Scenario,
    built: &BuiltModel,
    sol: &LpSolution,
    costs: &[f64],
    threshold: f64,
    full_reuse: Option<Pattern>,
) -> Allocation {
    let x = &sol.primal;
    let layout = &built.layout;
    let rates = layout.rate_cols.iter().map(|&c| x[c]).collect();
    let shares = layout
        .share_cols
        .iter()
        .filter(|&&(c, _)| x[c] > 0.0)
        .map(|&(c, l)| (l, x[c]))
        .collect();
    let pattern_shares = match full_reuse {
        Some(p) => BTreeMap::from([(p, 1.0)]),
        None => layout
            .pattern_cols
            .iter()
            .filter(|&&(c, _)| x[c] > 0.0)
            .map(|&(c, p)| (p, x[c]))
            .collect(),
    };
    let activity = built.activity(x);
    let (active_set, energy_cost) = energy_of(scenario, &activity, costs, threshold);
    Allocation {
        rates,
        shares,
        pattern_shares,
        activity,
        active_set,
        energy_cost,
    }
}
