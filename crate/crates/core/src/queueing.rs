//! Traffic profiles and M/M/1 delay bookkeeping for user groups.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radio::{EfficiencyTable, Pattern};

pub const DEFAULT_DELAY_CAP_S: f64 = 0.5;
/// Absolute slack (packets/second) when checking delay constraints.
pub const DEFAULT_QOS_TOL: f64 = 1e-7;

/// Per-group Poisson arrival rates and delay caps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficProfile {
    pub arrival_rates: Vec<f64>,
    pub delay_caps: Vec<f64>,
    /// Groups without traffic carry no delay constraint when set.
    #[serde(default)]
    pub exempt_idle: bool,
}

impl TrafficProfile {
    pub fn new(arrival_rates: Vec<f64>, delay_caps: Vec<f64>) -> Result<Self> {
        if arrival_rates.len() != delay_caps.len() {
            return Err(Error::Invalid("arrival and delay-cap lengths differ".into()));
        }
        if arrival_rates.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Invalid("arrival rates must be finite and nonnegative".into()));
        }
        if delay_caps.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Invalid("delay caps must be positive".into()));
        }
        Ok(Self {
            arrival_rates,
            delay_caps,
            exempt_idle: false,
        })
    }

    pub fn with_uniform_cap(arrival_rates: Vec<f64>, delay_cap: f64) -> Result<Self> {
        let k = arrival_rates.len();
        Self::new(arrival_rates, vec![delay_cap; k])
    }

    pub fn num_groups(&self) -> usize {
        self.arrival_rates.len()
    }

    pub fn total_arrival(&self) -> f64 {
        self.arrival_rates.iter().sum()
    }

    fn exempt(&self, j: usize) -> bool {
        self.exempt_idle && self.arrival_rates[j] == 0.0
    }

    /// Smallest service rate meeting the delay cap of group `j`.
    pub fn required_rate(&self, j: usize) -> f64 {
        if self.exempt(j) {
            0.0
        } else {
            self.arrival_rates[j] + 1.0 / self.delay_caps[j]
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Relative traffic intensities `a_j`; a profile is `mean_rate * a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficShape {
    pub weights: Vec<f64>,
}

impl TrafficShape {
    /// Draws `a_j` i.i.d. uniform on [0.5, 1.5] (unit mean).
    pub fn random(k: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            weights: (0..k).map(|_| rng.random_range(0.5..=1.5)).collect(),
        }
    }

    pub fn uniform(k: usize) -> Self {
        Self { weights: vec![1.0; k] }
    }

    pub fn profile(&self, mean_rate: f64, delay_cap: f64) -> Result<TrafficProfile> {
        if !(mean_rate >= 0.0) {
            return Err(Error::Invalid(format!("mean rate {mean_rate} must be nonnegative")));
        }
        TrafficProfile::with_uniform_cap(self.weights.iter().map(|a| a * mean_rate).collect(), delay_cap)
    }
}

/// Seeded traffic with mean rate `mean_rate` per group and the default delay cap.
pub fn generate_traffic(k: usize, mean_rate: f64, seed: u64) -> Result<TrafficProfile> {
    if k == 0 {
        return Err(Error::Invalid("at least one group is required".into()));
    }
    TrafficShape::random(k, seed).profile(mean_rate, DEFAULT_DELAY_CAP_S)
}

/// Bandwidth share of link `station -> group` under `pattern`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Link {
    pub station: usize,
    pub group: usize,
    pub pattern: Pattern,
}

pub type Shares = BTreeMap<Link, f64>;

/// Total service rate of group `group`: sum of efficiency times bandwidth share.
pub fn service_rate(shares: &Shares, table: &EfficiencyTable, group: usize) -> Result<f64> {
    let mut rate = 0.0;
    for (link, &x) in shares.iter().filter(|(l, _)| l.group == group) {
        let s = table.value_for(link.station, group, link.pattern).ok_or_else(|| {
            Error::Invalid(format!("pattern {} is not in the efficiency table", link.pattern))
        })?;
        rate += s * x;
    }
    Ok(rate)
}

/// Mean time in an M/M/1 queue; infinite when the queue is unstable.
pub fn sojourn_time(rate: f64, arrival: f64) -> f64 {
    if rate > arrival {
        1.0 / (rate - arrival)
    } else {
        f64::INFINITY
    }
}

pub fn sojourn_times(rates: &[f64], profile: &TrafficProfile) -> Vec<f64> {
    rates
        .iter()
        .zip(&profile.arrival_rates)
        .map(|(&r, &l)| sojourn_time(r, l))
        .collect()
}

/// Whether each group's delay constraint `r_j - lambda_j >= 1/tau_j` holds within `tol`.
pub fn qos_satisfied(rates: &[f64], profile: &TrafficProfile, tol: f64) -> Vec<bool> {
    (0..profile.num_groups())
        .map(|j| rates[j] >= profile.required_rate(j) - tol)
        .collect()
}

/// Arrival-weighted mean sojourn time over the network.
pub fn average_sojourn(rates: &[f64], profile: &TrafficProfile) -> Result<f64> {
    let total = profile.total_arrival();
    if !(total > 0.0) {
        return Err(Error::Invalid("average sojourn needs positive total arrivals".into()));
    }
    let mut avg = 0.0;
    for (j, (&r, &l)) in rates.iter().zip(&profile.arrival_rates).enumerate() {
        if l == 0.0 {
            continue;
        }
        if r <= l {
            return Err(Error::InfeasibleRates {
                group: j,
                rate: r,
                arrival: l,
            });
        }
        avg += l / total / (r - l);
    }
    Ok(avg)
}
