//! Standalone feasibility check of an allocation, independent of any LP model.

use std::collections::BTreeMap;
use std::fmt;

use super::Allocation;
use crate::queueing::TrafficProfile;
use crate::radio::{spectral_efficiency, Pattern, Scenario};

/// Largest violation found for each constraint family.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    /// `sum_A y_A = 1`.
    pub total_bandwidth: f64,
    /// Negative `x`, `y` or `z`, or `z > 1`.
    pub sign: f64,
    /// `sum_j x <= y_A` per station and pattern.
    pub pattern_budget: f64,
    /// `sum x <= z_i` per station (one for macros).
    pub activity_budget: f64,
    /// `r_j = sum s x`, relative to `max(1, |r_j|)`.
    pub rate_definition: f64,
    /// `r_j - lambda_j >= 1/tau_j`.
    pub delay_cap: f64,
    /// Structural problems: unknown stations or groups, inconsistent active set.
    pub problems: Vec<String>,
}

impl AuditReport {
    pub fn max_violation(&self) -> f64 {
        [
            self.total_bandwidth,
            self.sign,
            self.pattern_budget,
            self.activity_budget,
            self.rate_definition,
            self.delay_cap,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.problems.is_empty() && self.max_violation() <= tol
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "sum_y {:.3e}, sign {:.3e}, pattern {:.3e}, activity {:.3e}, rate {:.3e}, delay {:.3e}",
            self.total_bandwidth,
            self.sign,
            self.pattern_budget,
            self.activity_budget,
            self.rate_definition,
            self.delay_cap
        )?;
        for p in &self.problems {
            write!(f, "; {p}")?;
        }
        Ok(())
    }
}

/// Recomputes every constraint of the allocation problem from the scenario.
/// Efficiencies come straight from the radio model, not from any table.
pub fn audit(scenario: &Scenario, traffic: &TrafficProfile, alloc: &Allocation) -> AuditReport {
    let mut rep = AuditReport::default();
    let (n, n1, k) = (scenario.num_stations(), scenario.num_macros(), scenario.num_groups());
    if alloc.rates.len() != k || traffic.num_groups() != k {
        rep.problems.push(format!("expected {k} rates and traffic entries"));
        return rep;
    }
    if alloc.activity.len() != n - n1 {
        rep.problems.push(format!("expected {} activity levels", n - n1));
        return rep;
    }

    let y_sum: f64 = alloc.pattern_shares.values().sum();
    rep.total_bandwidth = (y_sum - 1.0).abs();
    for &y in alloc.pattern_shares.values() {
        rep.sign = rep.sign.max(-y);
    }
    for &z in &alloc.activity {
        rep.sign = rep.sign.max(-z).max(z - 1.0);
    }

    let mut per_pattern: BTreeMap<(usize, Pattern), f64> = BTreeMap::new();
    let mut per_station = vec![0.0; n];
    let mut rate = vec![0.0; k];
    for (link, &x) in &alloc.shares {
        if link.station >= n || link.group >= k {
            rep.problems.push(format!("link {}->{} out of range", link.station, link.group));
            continue;
        }
        if !link.pattern.contains(link.station) {
            rep.problems
                .push(format!("station {} is not in pattern {}", link.station, link.pattern));
        }
        rep.sign = rep.sign.max(-x);
        *per_pattern.entry((link.station, link.pattern)).or_default() += x;
        per_station[link.station] += x;
        rate[link.group] += spectral_efficiency(scenario, link.station, link.group, link.pattern) * x;
    }
    for (&(_, pattern), &used) in &per_pattern {
        let y = alloc.pattern_shares.get(&pattern).copied().unwrap_or(0.0);
        rep.pattern_budget = rep.pattern_budget.max(used - y);
    }
    for (i, &used) in per_station.iter().enumerate() {
        let cap = if i < n1 { 1.0 } else { alloc.activity[i - n1] };
        rep.activity_budget = rep.activity_budget.max(used - cap);
    }
    for j in 0..k {
        let r = alloc.rates[j];
        rep.rate_definition = rep.rate_definition.max((r - rate[j]).abs() / r.abs().max(1.0));
        rep.delay_cap = rep.delay_cap.max(traffic.required_rate(j) - r);
    }

    let on: Vec<usize> = alloc
        .activity
        .iter()
        .enumerate()
        .filter(|(_, &z)| z > 0.0)
        .map(|(p, _)| n1 + p)
        .collect();
    if alloc.active_set.iter().any(|i| !on.contains(i)) {
        rep.problems.push("active set lists a pico with zero activity".into());
    }
    rep
}
