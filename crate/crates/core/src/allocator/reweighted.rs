//! Reweighted l1 minimization of the number of active picos.

use std::time::Instant;

use log::{debug, warn};

use super::model::{build_full_reuse_model, build_pattern_model, BuiltModel, PicoMode};
use super::{extract, surrogate_objective, Allocation, SolverConfig};
use crate::error::{Error, Result};
use crate::lp::{solve_with, Basis, LpStatus, SolveOptions};
use crate::queueing::TrafficProfile;
use crate::radio::{EfficiencyTable, Pattern, Scenario};

/// Activity levels at or below this count as exactly zero in the reduction test.
const ZERO_ACTIVITY: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Weights used in this iteration, per pico.
    pub weights: Vec<f64>,
    /// Activity levels returned by the LP, per pico.
    pub z: Vec<f64>,
    /// Optimal LP objective `u^t`.
    pub lp_objective: f64,
    /// Concave surrogate evaluated at `z`.
    pub surrogate: f64,
    /// Patterns in the LP of this iteration.
    pub patterns: usize,
    pub lp_iterations: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionEvent {
    pub iteration: usize,
    /// Station ids of the picos removed for good.
    pub removed: Vec<usize>,
    pub patterns_after: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Consecutive LP objectives agreed within the threshold.
    Converged,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    pub reductions: Vec<ReductionEvent>,
    pub stop: StopReason,
    /// Picos switched back on because rounding broke feasibility.
    pub repaired: Vec<usize>,
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn surrogate_values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.surrogate).collect()
    }

    /// Largest increase of the surrogate between consecutive iterations.
    pub fn max_surrogate_increase(&self) -> f64 {
        self.records
            .windows(2)
            .map(|w| w[1].surrogate - w[0].surrogate)
            .fold(0.0, f64::max)
    }
}

/// The LP relaxation solved at every iteration.
trait Relaxation {
    fn num_picos(&self) -> usize;
    fn pattern_count(&self) -> usize;
    /// Solves with the given activity costs; returns `(z, u, lp_iterations)`.
    fn solve(&mut self, costs: &[f64]) -> Result<(Vec<f64>, f64, usize)>;
    /// Removes the given picos (indexed from the first pico) for good.
    fn remove(&mut self, picos: &[usize]) -> Result<()>;
    /// Feasible allocation with exactly the `on` picos switched on, if any.
    fn finalize(&self, on: &[bool]) -> Result<Option<Allocation>>;
}

struct Common<'a> {
    scenario: &'a Scenario,
    traffic: &'a TrafficProfile,
    costs: Vec<f64>,
    config: &'a SolverConfig,
}

impl Common<'_> {
    fn opts(&self, basis: Option<Basis>) -> SolveOptions {
        SolveOptions::with_tol(self.config.lp_tol).warm(basis)
    }

    fn fixed_modes(on: &[bool]) -> Vec<PicoMode> {
        on.iter().map(|&b| if b { PicoMode::On } else { PicoMode::Off }).collect()
    }
}

struct PatternRelaxation<'a> {
    common: Common<'a>,
    table: &'a EfficiencyTable,
    removed: Vec<bool>,
    pattern_idx: Vec<usize>,
    built: BuiltModel,
    basis: Option<Basis>,
}

impl<'a> PatternRelaxation<'a> {
    fn new(common: Common<'a>, table: &'a EfficiencyTable) -> Result<Self> {
        let n2 = common.scenario.num_picos();
        let pattern_idx: Vec<usize> = (0..table.patterns().len()).collect();
        let modes = vec![PicoMode::Free { cost: 1.0 }; n2];
        let built = build_pattern_model(common.scenario, table, common.traffic, &pattern_idx, &modes)?;
        Ok(Self {
            common,
            table,
            removed: vec![false; n2],
            pattern_idx,
            built,
            basis: None,
        })
    }
}

impl Relaxation for PatternRelaxation<'_> {
    fn num_picos(&self) -> usize {
        self.removed.len()
    }

    fn pattern_count(&self) -> usize {
        self.pattern_idx.len()
    }

    fn solve(&mut self, costs: &[f64]) -> Result<(Vec<f64>, f64, usize)> {
        self.built.set_activity_costs(costs);
        let sol = solve_with(&self.built.lp, &self.common.opts(self.basis.take()))?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => {
                return Err(Error::Infeasible(
                    "delay caps cannot be met even with every remaining pico on".into(),
                ))
            }
            LpStatus::Unbounded => return Err(Error::Invalid("relaxation reported unbounded".into())),
        }
        let z = self.built.activity(&sol.primal);
        self.basis = Some(sol.basis);
        Ok((z, sol.objective, sol.iterations))
    }

    fn remove(&mut self, picos: &[usize]) -> Result<()> {
        let n1 = self.common.scenario.num_macros();
        for &p in picos {
            self.removed[p] = true;
        }
        let gone = Pattern::from_members(
            self.removed
                .iter()
                .enumerate()
                .filter(|(_, &r)| r)
                .map(|(p, _)| n1 + p),
        );
        self.pattern_idx = self.table.patterns().indices_avoiding(gone);
        let modes: Vec<PicoMode> = self
            .removed
            .iter()
            .map(|&r| if r { PicoMode::Off } else { PicoMode::Free { cost: 1.0 } })
            .collect();
        self.built = build_pattern_model(
            self.common.scenario,
            self.table,
            self.common.traffic,
            &self.pattern_idx,
            &modes,
        )?;
        self.basis = None;
        Ok(())
    }

    fn finalize(&self, on: &[bool]) -> Result<Option<Allocation>> {
        let c = &self.common;
        let all: Vec<usize> = (0..self.table.patterns().len()).collect();
        let built = build_pattern_model(c.scenario, self.table, c.traffic, &all, &Common::fixed_modes(on))?;
        let sol = solve_with(&built.lp, &c.opts(None))?;
        Ok(sol.is_optimal().then(|| {
            extract(c.scenario, &built, &sol, &c.costs, c.config.activity_threshold, None)
        }))
    }
}

struct FullReuseRelaxation<'a> {
    common: Common<'a>,
    built: BuiltModel,
    basis: Option<Basis>,
}

impl Relaxation for FullReuseRelaxation<'_> {
    fn num_picos(&self) -> usize {
        self.built.layout.modes.len()
    }

    fn pattern_count(&self) -> usize {
        1
    }

    fn solve(&mut self, costs: &[f64]) -> Result<(Vec<f64>, f64, usize)> {
        self.built.set_activity_costs(costs);
        let sol = solve_with(&self.built.lp, &self.common.opts(self.basis.take()))?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => {
                return Err(Error::Infeasible(
                    "delay caps cannot be met under full reuse with every pico on".into(),
                ))
            }
            LpStatus::Unbounded => return Err(Error::Invalid("relaxation reported unbounded".into())),
        }
        let z = self.built.activity(&sol.primal);
        self.basis = Some(sol.basis);
        Ok((z, sol.objective, sol.iterations))
    }

    fn remove(&mut self, _picos: &[usize]) -> Result<()> {
        Err(Error::Invalid("full reuse does not support pico removal".into()))
    }

    fn finalize(&self, on: &[bool]) -> Result<Option<Allocation>> {
        let c = &self.common;
        let built = build_full_reuse_model(c.scenario, c.traffic, &Common::fixed_modes(on))?;
        let sol = solve_with(&built.lp, &c.opts(None))?;
        let full = c.scenario.all_stations();
        Ok(sol.is_optimal().then(|| {
            extract(c.scenario, &built, &sol, &c.costs, c.config.activity_threshold, Some(full))
        }))
    }
}

fn run<R: Relaxation>(
    relax: &mut R,
    costs: &[f64],
    config: &SolverConfig,
    refined: bool,
    n1: usize,
) -> Result<(Allocation, IterationTrace)> {
    let n2 = relax.num_picos();
    let eps = config.eps_weight;
    let mut w = vec![1.0; n2];
    let mut removed = vec![false; n2];
    let (mut u_prev2, mut u_prev1) = (0.0, costs.iter().sum::<f64>());
    let mut records = Vec::new();
    let mut reductions = Vec::new();
    let mut last_z = vec![1.0; n2];
    let mut t = 1;
    while t <= config.max_iterations && (u_prev1 - u_prev2).abs() > config.eps_objective {
        let start = Instant::now();
        let wc: Vec<f64> = w.iter().zip(costs).map(|(w, c)| w * c).collect();
        let (z, u, lp_iterations) = relax.solve(&wc)?;
        records.push(IterationRecord {
            iteration: t,
            weights: w.clone(),
            z: z.clone(),
            lp_objective: u,
            surrogate: surrogate_objective(&z, costs, eps),
            patterns: relax.pattern_count(),
            lp_iterations,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
        debug!("iteration {t}: u = {u:.9e}, lp pivots {lp_iterations}");
        let next: Vec<f64> = z.iter().map(|&zi| 1.0 / (zi + eps)).collect();
        if refined {
            let zero: Vec<usize> = (0..n2).filter(|&p| !removed[p] && z[p] <= ZERO_ACTIVITY).collect();
            let live: Vec<usize> = (0..n2).filter(|&p| !removed[p] && z[p] > ZERO_ACTIVITY).collect();
            let penalty: f64 = live.iter().map(|&p| next[p]).sum();
            if !zero.is_empty() && !live.is_empty() && penalty < config.alpha / eps {
                relax.remove(&zero)?;
                for &p in &zero {
                    removed[p] = true;
                }
                reductions.push(ReductionEvent {
                    iteration: t,
                    removed: zero.iter().map(|&p| n1 + p).collect(),
                    patterns_after: relax.pattern_count(),
                });
            }
        }
        w = next;
        last_z = z;
        u_prev2 = u_prev1;
        u_prev1 = u;
        t += 1;
    }
    let stop = if (u_prev1 - u_prev2).abs() > config.eps_objective {
        StopReason::IterationLimit
    } else {
        StopReason::Converged
    };

    let mut on: Vec<bool> = last_z.iter().map(|&z| z > config.activity_threshold).collect();
    let mut repaired = Vec::new();
    let alloc = loop {
        if let Some(a) = relax.finalize(&on)? {
            break a;
        }
        let candidate = (0..n2)
            .filter(|&p| !on[p])
            .max_by(|&a, &b| last_z[a].total_cmp(&last_z[b]).then(b.cmp(&a)));
        match candidate {
            Some(p) => {
                warn!("rounding lost feasibility; switching pico {} back on", n1 + p);
                on[p] = true;
                repaired.push(n1 + p);
            }
            None => return Err(Error::Infeasible("no feasible rounding of the relaxation".into())),
        }
    };
    Ok((
        alloc,
        IterationTrace {
            records,
            reductions,
            stop,
            repaired,
        },
    ))
}

/// The weighted relaxation with every pattern of `table` and weights `w` on the picos.
pub fn build_p4(
    scenario: &Scenario,
    table: &EfficiencyTable,
    traffic: &TrafficProfile,
    weights: &[f64],
    config: &SolverConfig,
) -> Result<BuiltModel> {
    let n2 = scenario.num_picos();
    config.validate(n2)?;
    if weights.len() != n2 || weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::Invalid("weights must be positive, one per pico".into()));
    }
    let modes: Vec<PicoMode> = weights
        .iter()
        .zip(config.costs(n2))
        .map(|(w, c)| PicoMode::Free { cost: w * c })
        .collect();
    let all: Vec<usize> = (0..table.patterns().len()).collect();
    build_pattern_model(scenario, table, traffic, &all, &modes)
}

fn common<'a>(scenario: &'a Scenario, traffic: &'a TrafficProfile, config: &'a SolverConfig) -> Result<Common<'a>> {
    config.validate(scenario.num_picos())?;
    Ok(Common {
        scenario,
        traffic,
        costs: config.costs(scenario.num_picos()),
        config,
    })
}

fn run_patterns(
    scenario: &Scenario,
    table: &EfficiencyTable,
    traffic: &TrafficProfile,
    config: &SolverConfig,
    refined: bool,
) -> Result<(Allocation, IterationTrace)> {
    let c = common(scenario, traffic, config)?;
    let costs = c.costs.clone();
    let mut relax = PatternRelaxation::new(c, table)?;
    run(&mut relax, &costs, config, refined, scenario.num_macros())
}

/// Reweighted l1 minimization over the pattern relaxation, followed by
/// rounding at the activity threshold and a re-solve with the rounded
/// on/off decisions.
pub fn reweighted_l1(
    scenario: &Scenario,
    table: &EfficiencyTable,
    traffic: &TrafficProfile,
    config: &SolverConfig,
) -> Result<(Allocation, IterationTrace)> {
    run_patterns(scenario, table, traffic, config, false)
}

/// As [`reweighted_l1`], but picos whose activity hits zero while the
/// remaining weights are small are dropped for good together with every
/// pattern that contains them.
pub fn reweighted_l1_refined(
    scenario: &Scenario,
    table: &EfficiencyTable,
    traffic: &TrafficProfile,
    config: &SolverConfig,
) -> Result<(Allocation, IterationTrace)> {
    run_patterns(scenario, table, traffic, config, true)
}

/// Reweighted l1 minimization over the full-reuse model.
pub fn solve_full_reuse(
    scenario: &Scenario,
    traffic: &TrafficProfile,
    config: &SolverConfig,
) -> Result<(Allocation, IterationTrace)> {
    let c = common(scenario, traffic, config)?;
    let costs = c.costs.clone();
    let modes = vec![PicoMode::Free { cost: 1.0 }; scenario.num_picos()];
    let built = build_full_reuse_model(scenario, traffic, &modes)?;
    let mut relax = FullReuseRelaxation {
        common: c,
        built,
        basis: None,
    };
    run(&mut relax, &costs, config, false, scenario.num_macros())
}
