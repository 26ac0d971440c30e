//! Python bindings: scenarios, traffic, the solvers and the delay post-processor.

use std::collections::BTreeMap;

use hetnet_core::allocator::{self, Allocation, IterationTrace, SolverConfig, StopReason};
use hetnet_core::experiments::{self, Instance, Method};
use hetnet_core::postprocess::{self, DelayOptions};
use hetnet_core::queueing::{self, TrafficProfile, TrafficShape};
use hetnet_core::radio::{self, EfficiencyTable, HexConfig, Pattern, PatternPolicy, Scenario};
use hetnet_core::Error;
use pyo3::exceptions::{PyException, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

pyo3::create_exception!(hetnet_opt, InfeasibleError, PyException, "The delay caps cannot be met.");

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Infeasible(_) | Error::InfeasibleRates { .. } => InfeasibleError::new_err(e.to_string()),
        Error::Invalid(_) | Error::BadStart(_) | Error::Json(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn policy(text: &str) -> PyResult<PatternPolicy> {
    text.parse().map_err(to_py)
}

#[pyclass(name = "Scenario", frozen)]
struct PyScenario {
    inner: Scenario,
}

#[pymethods]
impl PyScenario {
    /// Desk-scale hexagonal scenario: two macros and `picos` seeded picos.
    #[staticmethod]
    #[pyo3(signature = (picos = 4, seed = 1))]
    fn desk(picos: usize, seed: u64) -> PyResult<Self> {
        let inner = radio::build_hex_scenario(&HexConfig::desk(picos, seed)).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (seed = 1))]
    fn large(seed: u64) -> PyResult<Self> {
        let inner = radio::build_hex_scenario(&HexConfig::large(seed)).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: Scenario::from_json(text).map_err(to_py)? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn num_macros(&self) -> usize {
        self.inner.num_macros()
    }

    #[getter]
    fn num_picos(&self) -> usize {
        self.inner.num_picos()
    }

    #[getter]
    fn num_groups(&self) -> usize {
        self.inner.num_groups()
    }

    /// Efficiency of `station` towards `group` while exactly `pattern` transmits.
    fn spectral_efficiency(&self, station: usize, group: usize, pattern: Vec<usize>) -> PyResult<f64> {
        if station >= self.inner.num_stations() || group >= self.inner.num_groups() {
            return Err(PyValueError::new_err("station or group out of range"));
        }
        Ok(radio::spectral_efficiency(&self.inner, station, group, Pattern::from_members(pattern)))
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(macros={}, picos={}, groups={})",
            self.inner.num_macros(),
            self.inner.num_picos(),
            self.inner.num_groups()
        )
    }
}

#[pyclass(name = "Traffic", frozen)]
struct PyTraffic {
    inner: TrafficProfile,
}

#[pymethods]
impl PyTraffic {
    #[new]
    fn new(arrival_rates: Vec<f64>, delay_caps: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: TrafficProfile::new(arrival_rates, delay_caps).map_err(to_py)? })
    }

    #[staticmethod]
    #[pyo3(signature = (arrival_rates, delay_cap = queueing::DEFAULT_DELAY_CAP_S))]
    fn uniform(arrival_rates: Vec<f64>, delay_cap: f64) -> PyResult<Self> {
        Ok(Self { inner: TrafficProfile::with_uniform_cap(arrival_rates, delay_cap).map_err(to_py)? })
    }

    /// Mean rate scaled per group by seeded intensities in [0.5, 1.5].
    #[staticmethod]
    #[pyo3(signature = (num_groups, mean_rate, seed = 1, delay_cap = queueing::DEFAULT_DELAY_CAP_S))]
    fn seeded(num_groups: usize, mean_rate: f64, seed: u64, delay_cap: f64) -> PyResult<Self> {
        let inner = TrafficShape::random(num_groups, seed).profile(mean_rate, delay_cap).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn arrival_rates(&self) -> Vec<f64> {
        self.inner.arrival_rates.clone()
    }

    #[getter]
    fn delay_caps(&self) -> Vec<f64> {
        self.inner.delay_caps.clone()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }
}

#[pyclass(name = "PatternTable", frozen)]
struct PyTable {
    inner: EfficiencyTable,
}

#[pymethods]
impl PyTable {
    #[new]
    #[pyo3(signature = (scenario, policy = "full"))]
    fn new(scenario: &PyScenario, policy: &str) -> PyResult<Self> {
        let set = radio::enumerate_patterns(&scenario.inner, self::policy(policy)?).map_err(to_py)?;
        Ok(Self { inner: radio::build_efficiency_table(&scenario.inner, &set) })
    }

    fn __len__(&self) -> usize {
        self.inner.patterns().len()
    }

    fn value(&self, station: usize, group: usize, pattern: Vec<usize>) -> Option<f64> {
        self.inner.value_for(station, group, Pattern::from_members(pattern))
    }
}

#[pyclass(name = "SolverConfig", frozen)]
struct PyConfig {
    inner: SolverConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (max_iterations = 200, eps_objective = 1e-9, eps_weight = 1e-9, alpha = 0.1,
                        activity_threshold = 1e-6, costs = None, lp_tol = 1e-9))]
    fn new(
        max_iterations: usize,
        eps_objective: f64,
        eps_weight: f64,
        alpha: f64,
        activity_threshold: f64,
        costs: Option<Vec<f64>>,
        lp_tol: f64,
    ) -> Self {
        Self {
            inner: SolverConfig {
                max_iterations,
                eps_objective,
                eps_weight,
                alpha,
                activity_threshold,
                costs,
                lp_tol,
            },
        }
    }
}

fn config(c: Option<&PyConfig>) -> SolverConfig {
    c.map(|c| c.inner.clone()).unwrap_or_default()
}

#[pyclass(name = "Allocation", frozen)]
struct PyAllocation {
    inner: Allocation,
}

#[pymethods]
impl PyAllocation {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: Allocation::from_json(text).map_err(to_py)? })
    }

    fn to_json(&self, traffic: &PyTraffic) -> PyResult<String> {
        self.inner.to_json(&traffic.inner).map_err(to_py)
    }

    #[getter]
    fn energy_cost(&self) -> f64 {
        self.inner.energy_cost
    }

    #[getter]
    fn active_set(&self) -> Vec<usize> {
        self.inner.active_set.clone()
    }

    #[getter]
    fn rates(&self) -> Vec<f64> {
        self.inner.rates.clone()
    }

    /// Pico activity levels z.
    #[getter]
    fn activity(&self) -> Vec<f64> {
        self.inner.activity.clone()
    }

    /// Bandwidth fraction per pattern, keyed by hex bitmask.
    #[getter]
    fn pattern_shares(&self) -> BTreeMap<String, f64> {
        self.inner.pattern_shares.iter().map(|(p, v)| (p.to_hex(), *v)).collect()
    }

    /// `(station, group, pattern, share)` for every share column.
    #[getter]
    fn shares(&self) -> Vec<(usize, usize, String, f64)> {
        self.inner.shares.iter().map(|(l, v)| (l.station, l.group, l.pattern.to_hex(), *v)).collect()
    }

    #[getter]
    fn support(&self) -> usize {
        self.inner.support()
    }

    fn __repr__(&self) -> String {
        format!("Allocation(energy_cost={}, active_set={:?})", self.inner.energy_cost, self.inner.active_set)
    }
}

#[pyclass(name = "IterationTrace", frozen)]
struct PyTrace {
    inner: IterationTrace,
}

#[pymethods]
impl PyTrace {
    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations()
    }

    #[getter]
    fn surrogate_values(&self) -> Vec<f64> {
        self.inner.surrogate_values()
    }

    #[getter]
    fn lp_objectives(&self) -> Vec<f64> {
        self.inner.records.iter().map(|r| r.lp_objective).collect()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.stop == StopReason::Converged
    }

    /// Picos removed by each reduction, in order.
    #[getter]
    fn reductions(&self) -> Vec<Vec<usize>> {
        self.inner.reductions.iter().map(|r| r.removed.clone()).collect()
    }

    fn max_surrogate_increase(&self) -> f64 {
        self.inner.max_surrogate_increase()
    }
}

type Solved = (PyAllocation, PyTrace);

fn wrap(r: hetnet_core::Result<(Allocation, IterationTrace)>) -> PyResult<Solved> {
    let (a, t) = r.map_err(to_py)?;
    Ok((PyAllocation { inner: a }, PyTrace { inner: t }))
}

#[pyfunction]
#[pyo3(signature = (scenario, table, traffic, config = None))]
fn reweighted_l1(
    py: Python<'_>,
    scenario: &PyScenario,
    table: &PyTable,
    traffic: &PyTraffic,
    config: Option<&PyConfig>,
) -> PyResult<Solved> {
    let cfg = self::config(config);
    wrap(py.detach(|| allocator::reweighted_l1(&scenario.inner, &table.inner, &traffic.inner, &cfg)))
}

#[pyfunction]
#[pyo3(signature = (scenario, table, traffic, config = None))]
fn reweighted_l1_refined(
    py: Python<'_>,
    scenario: &PyScenario,
    table: &PyTable,
    traffic: &PyTraffic,
    config: Option<&PyConfig>,
) -> PyResult<Solved> {
    let cfg = self::config(config);
    wrap(py.detach(|| allocator::reweighted_l1_refined(&scenario.inner, &table.inner, &traffic.inner, &cfg)))
}

#[pyfunction]
#[pyo3(signature = (scenario, traffic, config = None))]
fn solve_full_reuse(py: Python<'_>, scenario: &PyScenario, traffic: &PyTraffic, config: Option<&PyConfig>) -> PyResult<Solved> {
    let cfg = self::config(config);
    wrap(py.detach(|| allocator::solve_full_reuse(&scenario.inner, &traffic.inner, &cfg)))
}

#[pyfunction]
#[pyo3(signature = (scenario, table, traffic, config = None))]
fn exact_oracle(
    py: Python<'_>,
    scenario: &PyScenario,
    table: &PyTable,
    traffic: &PyTraffic,
    config: Option<&PyConfig>,
) -> PyResult<PyAllocation> {
    let cfg = self::config(config);
    let a = py
        .detach(|| allocator::exact_oracle(&scenario.inner, &table.inner, &traffic.inner, &cfg))
        .map_err(to_py)?;
    Ok(PyAllocation { inner: a })
}

/// Rewrites an allocation onto at most k patterns without lowering any rate.
#[pyfunction]
fn caratheodory_reduce(allocation: &PyAllocation, table: &PyTable, traffic: &PyTraffic) -> PyResult<PyAllocation> {
    let (a, _) = allocator::caratheodory_reduce(&allocation.inner, &table.inner, &traffic.inner).map_err(to_py)?;
    Ok(PyAllocation { inner: a })
}

/// Returns the improved allocation and the objective before each step.
#[pyfunction]
#[pyo3(signature = (scenario, table, traffic, start, tol = 1e-6, max_iters = 500))]
fn minimize_delay(
    py: Python<'_>,
    scenario: &PyScenario,
    table: &PyTable,
    traffic: &PyTraffic,
    start: &PyAllocation,
    tol: f64,
    max_iters: usize,
) -> PyResult<(PyAllocation, Vec<f64>)> {
    let opts = DelayOptions { tol, max_iters, ..DelayOptions::default() };
    let st = py
        .detach(|| postprocess::minimize_delay(&scenario.inner, &table.inner, &traffic.inner, &start.inner, &opts))
        .map_err(to_py)?;
    let mut history: Vec<f64> = st.log.iter().map(|s| s.objective).collect();
    history.push(st.objective);
    Ok((PyAllocation { inner: st.allocation }, history))
}

/// Largest constraint violation found by the independent audit.
#[pyfunction]
fn audit(scenario: &PyScenario, traffic: &PyTraffic, allocation: &PyAllocation) -> f64 {
    allocator::audit(&scenario.inner, &traffic.inner, &allocation.inner).max_violation()
}

#[pyfunction]
fn average_sojourn(rates: Vec<f64>, traffic: &PyTraffic) -> PyResult<f64> {
    queueing::average_sojourn(&rates, &traffic.inner).map_err(to_py)
}

/// Largest mean arrival rate `method` supports, for seeded intensities.
#[pyfunction]
#[pyo3(signature = (scenario, method, seed = 1, delay_cap = queueing::DEFAULT_DELAY_CAP_S, tol = 0.05, policy = "full"))]
fn capacity(
    py: Python<'_>,
    scenario: &PyScenario,
    method: &str,
    seed: u64,
    delay_cap: f64,
    tol: f64,
    policy: &str,
) -> PyResult<f64> {
    let method: Method = method.parse().map_err(to_py)?;
    let inst = Instance::new(scenario.inner.clone(), self::policy(policy)?, seed).map_err(to_py)?;
    py.detach(|| experiments::capacity_bisect(&inst, method, delay_cap, tol, SolverConfig::default().lp_tol))
        .map_err(to_py)
}

#[pymodule]
pub fn hetnet_opt(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyTraffic>()?;
    m.add_class::<PyTable>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyAllocation>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(reweighted_l1, m)?)?;
    m.add_function(wrap_pyfunction!(reweighted_l1_refined, m)?)?;
    m.add_function(wrap_pyfunction!(solve_full_reuse, m)?)?;
    m.add_function(wrap_pyfunction!(exact_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(caratheodory_reduce, m)?)?;
    m.add_function(wrap_pyfunction!(minimize_delay, m)?)?;
    m.add_function(wrap_pyfunction!(audit, m)?)?;
    m.add_function(wrap_pyfunction!(average_sojourn, m)?)?;
    m.add_function(wrap_pyfunction!(capacity, m)?)?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    Ok(())
}
