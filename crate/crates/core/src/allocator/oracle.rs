//! Exact minimum-energy on/off decision by enumeration.

use rayon::prelude::*;

use super::model::{build_pattern_model, PicoMode};
use super::{extract, Allocation, SolverConfig};
use crate::error::{Error, Result};
use crate::lp::{feasible, solve};
use crate::queueing::TrafficProfile;
use crate::radio::{EfficiencyTable, Pattern, Scenario};

/// Largest pico count the oracle accepts (`2^12` feasibility checks).
pub const MAX_ORACLE_PICOS: usize = 12;

fn members(mask: u64) -> Vec<usize> {
    (0..64).filter(|b| mask >> b & 1 == 1).collect()
}

struct Candidates<'a> {
    scenario: &'a Scenario,
    table: &'a EfficiencyTable,
    traffic: &'a TrafficProfile,
    tol: f64,
}

impl Candidates<'_> {
    fn modes(&self, mask: u64) -> Vec<PicoMode> {
        (0..self.scenario.num_picos())
            .map(|p| if mask >> p & 1 == 1 { PicoMode::On } else { PicoMode::Off })
            .collect()
    }

    fn patterns(&self, mask: u64) -> Vec<usize> {
        let n1 = self.scenario.num_macros();
        let off = Pattern::from_members((0..self.scenario.num_picos()).filter(|p| mask >> p & 1 == 0).map(|p| n1 + p));
        self.table.patterns().indices_avoiding(off)
    }

    fn feasible(&self, mask: u64) -> Result<bool> {
        let built = build_pattern_model(self.scenario, self.table, self.traffic, &self.patterns(mask), &self.modes(mask))?;
        Ok(feasible(&built.lp, self.tol)?)
    }
}

/// Minimum-cost set of active picos for which the delay caps can be met.
///
/// Candidates are visited in order of increasing cost, ties broken by the
/// lexicographically smallest active set. A candidate fixes every off pico
/// to zero and drops every pattern containing one; candidates whose active
/// set is contained in a known infeasible one are skipped. Candidates of
/// equal cost are checked in parallel.
pub fn exact_oracle(
    scenario: &Scenario,
    table: &EfficiencyTable,
    traffic: &TrafficProfile,
    config: &SolverConfig,
) -> Result<Allocation> {
    let n2 = scenario.num_picos();
    config.validate(n2)?;
    if n2 > MAX_ORACLE_PICOS {
        return Err(Error::Refused(format!(
            "exact oracle enumerates 2^{n2} on/off vectors; at most {MAX_ORACLE_PICOS} picos are allowed"
        )));
    }
    let costs = config.costs(n2);
    let cand = Candidates {
        scenario,
        table,
        traffic,
        tol: config.lp_tol,
    };
    let all = (1u64 << n2) - 1;
    if !cand.feasible(all)? {
        return Err(Error::Infeasible("delay caps cannot be met with every pico on".into()));
    }

    let cost = |mask: u64| -> f64 { members(mask).iter().map(|&p| costs[p]).sum() };
    let mut order: Vec<(f64, Vec<usize>, u64)> = (0..=all).map(|m| (cost(m), members(m), m)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));

    let mut infeasible: Vec<u64> = Vec::new();
    let mut start = 0;
    let chosen = loop {
        if start == order.len() {
            unreachable!("the all-on candidate is feasible");
        }
        let level = order[start].0;
        let mut end = start;
        while end < order.len() && order[end].0 - level <= 1e-12 * level.abs().max(1.0) {
            end += 1;
        }
        let batch: Vec<u64> = order[start..end]
            .iter()
            .map(|c| c.2)
            .filter(|&m| !infeasible.iter().any(|&bad| m & !bad == 0))
            .collect();
        let verdicts: Vec<Result<bool>> = batch.par_iter().map(|&m| cand.feasible(m)).collect();
        let mut found = None;
        for (&m, v) in batch.iter().zip(verdicts) {
            if v? {
                found.get_or_insert(m);
            } else {
                infeasible.retain(|&bad| bad & !m != 0);
                infeasible.push(m);
            }
        }
        if let Some(m) = found {
            break m;
        }
        start = end;
    };

    let built = build_pattern_model(scenario, table, traffic, &cand.patterns(chosen), &cand.modes(chosen))?;
    let sol = solve(&built.lp, config.lp_tol)?;
    if !sol.is_optimal() {
        return Err(Error::Lp(crate::lp::LpError::NumericalFailure {
            iterations: sol.iterations,
            reason: "feasibility check and solve disagree".into(),
        }));
    }
    Ok(extract(scenario, &built, &sol, &costs, config.activity_threshold, None))
}
