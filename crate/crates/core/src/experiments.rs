//! Sweeps over traffic levels, capacity search and allocation layout dumps.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::{
    build_full_reuse_model, build_pattern_model, exact_oracle, reweighted_l1, reweighted_l1_refined,
    solve_full_reuse, Allocation, IterationTrace, PicoMode, SolverConfig,
};
use crate::error::{Error, Result};
use crate::lp::feasible;
use crate::postprocess::{minimize_delay, DelayOptions};
use crate::queueing::{average_sojourn, TrafficProfile, TrafficShape, DEFAULT_DELAY_CAP_S};
use crate::radio::{
    build_efficiency_table, build_hex_scenario, enumerate_patterns, EfficiencyTable, HexConfig, Pattern,
    PatternPolicy, Scenario,
};

/// Environment variable bounding the number of sweep workers.
pub const WORKERS_ENV: &str = "HETNET_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Alg1,
    Alg2,
    FullReuse,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Alg1, Method::Alg2, Method::FullReuse, Method::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Method::Alg1 => "alg1",
            Method::Alg2 => "alg2",
            Method::FullReuse => "fullreuse",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown method {s:?} (alg1, alg2, fullreuse, oracle)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioSource {
    File { path: PathBuf },
    Hex(HexConfig),
}

impl ScenarioSource {
    pub fn load(&self) -> Result<Scenario> {
        match self {
            ScenarioSource::File { path } => Scenario::from_json(&fs::read_to_string(path)?),
            ScenarioSource::Hex(cfg) => build_hex_scenario(cfg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSource,
    pub patterns: PatternPolicy,
    /// Seed of the per-group intensity vector shared by every sweep point.
    pub traffic_seed: u64,
    pub delay_cap_s: f64,
    /// Mean arrival rates per group (packets/s), strictly increasing.
    pub mean_rates: Vec<f64>,
    pub methods: Vec<Method>,
    pub solver: SolverConfig,
    pub postprocess: bool,
    pub delay: DelayOptions,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioSource::Hex(HexConfig::desk(4, 1)),
            patterns: PatternPolicy::Full,
            traffic_seed: 1,
            delay_cap_s: DEFAULT_DELAY_CAP_S,
            mean_rates: vec![0.5, 1.0, 2.0, 4.0],
            methods: Method::ALL.to_vec(),
            solver: SolverConfig::default(),
            postprocess: false,
            delay: DelayOptions::default(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mean_rates.is_empty() || self.mean_rates.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Invalid("mean rate grid must be nonempty and strictly increasing".into()));
        }
        if self.mean_rates[0] < 0.0 {
            return Err(Error::Invalid("mean rates must be nonnegative".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Invalid("at least one method is required".into()));
        }
        if !(self.delay_cap_s > 0.0) {
            return Err(Error::Invalid("delay cap must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Scenario, pattern table and traffic intensities shared by a sweep.
#[derive(Debug, Clone)]
pub struct Instance {
    pub scenario: Scenario,
    pub table: EfficiencyTable,
    pub shape: TrafficShape,
}

impl Instance {
    pub fn new(scenario: Scenario, policy: PatternPolicy, traffic_seed: u64) -> Result<Self> {
        let set = enumerate_patterns(&scenario, policy)?;
        let table = build_efficiency_table(&scenario, &set);
        let shape = TrafficShape::random(scenario.num_groups(), traffic_seed);
        Ok(Self { scenario, table, shape })
    }

    pub fn traffic(&self, mean_rate: f64, delay_cap: f64) -> Result<TrafficProfile> {
        self.shape.profile(mean_rate, delay_cap)
    }
}

/// Runs one method; full reuse ignores the pattern table.
pub fn run_method(
    inst: &Instance,
    traffic: &TrafficProfile,
    method: Method,
    config: &SolverConfig,
) -> Result<(Allocation, Option<IterationTrace>)> {
    let (s, t) = (&inst.scenario, &inst.table);
    match method {
        Method::Alg1 => reweighted_l1(s, t, traffic, config).map(|(a, tr)| (a, Some(tr))),
        Method::Alg2 => reweighted_l1_refined(s, t, traffic, config).map(|(a, tr)| (a, Some(tr))),
        Method::FullReuse => solve_full_reuse(s, traffic, config).map(|(a, tr)| (a, Some(tr))),
        Method::Oracle => exact_oracle(s, t, traffic, config).map(|a| (a, None)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointStatus {
    Feasible,
    Infeasible,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mean_rate: f64,
    pub method: Method,
    pub status: PointStatus,
    pub energy_cost: Option<f64>,
    pub active_set: Vec<usize>,
    pub iterations: Option<usize>,
    pub reductions: usize,
    pub wall_time_s: f64,
    pub sojourn_before_s: Option<f64>,
    pub sojourn_after_s: Option<f64>,
    pub allocation: Option<Allocation>,
    pub postprocessed: Option<Allocation>,
}

impl SweepRow {
    pub fn file_stem(&self) -> String {
        format!("{}_{}", self.method, fmt_sig(self.mean_rate))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn row(&self, mean_rate: f64, method: Method) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.mean_rate == mean_rate && r.method == method)
    }

    /// Energy per grid point for one method (`None` where infeasible).
    pub fn energy_curve(&self, method: Method) -> Vec<(f64, Option<f64>)> {
        self.rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| (r.mean_rate, r.energy_cost))
            .collect()
    }
}

/// Formats with at most nine significant digits, in plain notation where reasonable.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..9).contains(&e) {
        let decimals = (8 - e).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{x:.8e}");
        let (m, exp) = s.split_once('e').expect("exponent present");
        let m = if m.contains('.') { m.trim_end_matches('0').trim_end_matches('.') } else { m };
        format!("{m}e{exp}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

fn run_point(inst: &Instance, cfg: &ExperimentConfig, mean_rate: f64, method: Method) -> SweepRow {
    let mut row = SweepRow {
        mean_rate,
        method,
        status: PointStatus::Feasible,
        energy_cost: None,
        active_set: Vec::new(),
        iterations: None,
        reductions: 0,
        wall_time_s: 0.0,
        sojourn_before_s: None,
        sojourn_after_s: None,
        allocation: None,
        postprocessed: None,
    };
    let traffic = match inst.traffic(mean_rate, cfg.delay_cap_s) {
        Ok(t) => t,
        Err(e) => {
            row.status = PointStatus::Failed(e.to_string());
            return row;
        }
    };
    let start = Instant::now();
    let outcome = run_method(inst, &traffic, method, &cfg.solver);
    row.wall_time_s = start.elapsed().as_secs_f64();
    match outcome {
        Ok((alloc, trace)) => {
            row.energy_cost = Some(alloc.energy_cost);
            row.active_set = alloc.active_set.clone();
            row.iterations = trace.as_ref().map(|t| t.iterations());
            row.reductions = trace.as_ref().map_or(0, |t| t.reductions.len());
            row.sojourn_before_s = average_sojourn(&alloc.rates, &traffic).ok();
            if cfg.postprocess && traffic.total_arrival() > 0.0 {
                match minimize_delay(&inst.scenario, &inst.table, &traffic, &alloc, &cfg.delay) {
                    Ok(state) => {
                        row.sojourn_after_s = Some(state.objective);
                        row.postprocessed = Some(state.allocation);
                    }
                    Err(e) => row.status = PointStatus::Failed(format!("postprocess: {e}")),
                }
            }
            row.allocation = Some(alloc);
        }
        Err(Error::Infeasible(_)) => row.status = PointStatus::Infeasible,
        Err(e) => row.status = PointStatus::Failed(e.to_string()),
    }
    info!("{method} at {mean_rate}: {:?} in {:.2}s", row.status, row.wall_time_s);
    row
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Invalid(format!("{WORKERS_ENV} must be a positive integer")))?;
        b = b.num_threads(n.max(1));
    }
    b.build().map_err(|e| Error::Invalid(e.to_string()))
}

/// Runs every method at every grid point on one seeded intensity vector.
/// Per-point failures are recorded in the result, not propagated.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let inst = Instance::new(cfg.scenario.load()?, cfg.patterns, cfg.traffic_seed)?;
    let points: Vec<(f64, Method)> = cfg
        .mean_rates
        .iter()
        .flat_map(|&l| cfg.methods.iter().map(move |&m| (l, m)))
        .collect();
    let rows = worker_pool()?.install(|| {
        points
            .par_iter()
            .map(|&(l, m)| run_point(&inst, cfg, l, m))
            .collect::<Vec<_>>()
    });
    let result = SweepResult { rows };
    if let Some(dir) = &cfg.output_dir {
        write_sweep(dir, &inst, cfg, &result)?;
    }
    Ok(result)
}

fn status_str(s: &PointStatus) -> &str {
    match s {
        PointStatus::Feasible => "feasible",
        PointStatus::Infeasible => "infeasible",
        PointStatus::Failed(_) => "failed",
    }
}

/// Writes the sweep CSVs and one allocation JSON per feasible point.
pub fn write_sweep(dir: &Path, inst: &Instance, cfg: &ExperimentConfig, result: &SweepResult) -> Result<()> {
    let alloc_dir = dir.join("allocations");
    fs::create_dir_all(&alloc_dir)?;
    let mut energy = csv::Writer::from_path(dir.join("energy_vs_traffic.csv"))?;
    energy.write_record([
        "mean_rate",
        "method",
        "status",
        "energy_cost",
        "active_count",
        "active_set",
        "avg_sojourn_s",
        "avg_sojourn_post_s",
        "allocation_file",
    ])?;
    let mut iters = csv::Writer::from_path(dir.join("iterations.csv"))?;
    iters.write_record(["mean_rate", "method", "iterations", "reductions"])?;
    let mut times = csv::Writer::from_path(dir.join("runtimes.csv"))?;
    times.write_record(["mean_rate", "method", "wall_time_s"])?;

    for row in &result.rows {
        let traffic = inst.traffic(row.mean_rate, cfg.delay_cap_s)?;
        let mut file = String::new();
        if let Some(a) = &row.allocation {
            file = format!("allocations/{}.json", row.file_stem());
            fs::write(dir.join(&file), a.to_json(&traffic)?)?;
            if let Some(p) = &row.postprocessed {
                fs::write(alloc_dir.join(format!("{}_post.json", row.file_stem())), p.to_json(&traffic)?)?;
            }
        }
        let active: Vec<String> = row.active_set.iter().map(|i| i.to_string()).collect();
        energy.write_record([
            fmt_sig(row.mean_rate),
            row.method.to_string(),
            status_str(&row.status).to_string(),
            opt(row.energy_cost),
            if row.allocation.is_some() { active.len().to_string() } else { String::new() },
            active.join(";"),
            opt(row.sojourn_before_s),
            opt(row.sojourn_after_s),
            file,
        ])?;
        iters.write_record([
            fmt_sig(row.mean_rate),
            row.method.to_string(),
            row.iterations.map(|i| i.to_string()).unwrap_or_default(),
            row.reductions.to_string(),
        ])?;
        times.write_record([fmt_sig(row.mean_rate), row.method.to_string(), fmt_sig(row.wall_time_s)])?;
    }
    energy.flush()?;
    iters.flush()?;
    times.flush()?;
    Ok(())
}

/// Whether `method` can meet every delay cap at this traffic.
///
/// The reweighted solvers and the oracle succeed exactly when the relaxation
/// with every pico on is feasible (rounding can always fall back to all on),
/// so a single feasibility LP decides.
pub fn method_feasible(inst: &Instance, method: Method, traffic: &TrafficProfile, tol: f64) -> Result<bool> {
    let modes = vec![PicoMode::On; inst.scenario.num_picos()];
    let built = match method {
        Method::FullReuse => build_full_reuse_model(&inst.scenario, traffic, &modes)?,
        _ => {
            let all: Vec<usize> = (0..inst.table.patterns().len()).collect();
            build_pattern_model(&inst.scenario, &inst.table, traffic, &all, &modes)?
        }
    };
    Ok(feasible(&built.lp, tol)?)
}

/// Largest mean rate (within `tol`) at which `method` is feasible, for
/// traffic proportional to the instance's intensity vector.
pub fn capacity_bisect(inst: &Instance, method: Method, delay_cap: f64, tol: f64, lp_tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Invalid("bisection tolerance must be positive".into()));
    }
    let ok = |l: f64| -> Result<bool> { method_feasible(inst, method, &inst.traffic(l, delay_cap)?, lp_tol) };
    if !ok(0.0)? {
        return Err(Error::Infeasible(format!("{method} cannot meet the delay caps without traffic")));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while ok(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::Invalid("capacity search did not find an infeasible rate".into()));
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServingLink {
    pub station: usize,
    pub group: usize,
    /// Bandwidth fraction summed over patterns.
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLayout {
    pub group: usize,
    pub position: (f64, f64),
    pub rate: f64,
    /// Bandwidth this group receives under each pattern, summed over stations.
    pub pattern_shares: BTreeMap<Pattern, f64>,
    pub total_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationLayout {
    pub station: usize,
    pub class: crate::radio::StationClass,
    pub position: (f64, f64),
    pub active: bool,
}

/// Everything needed to redraw an allocation: per-group pie charts, serving links and the pattern bar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationLayout {
    pub stations: Vec<StationLayout>,
    pub groups: Vec<GroupLayout>,
    pub serving_links: Vec<ServingLink>,
    pub pattern_bar: BTreeMap<Pattern, f64>,
}

/// Serving links carry more than this bandwidth fraction.
pub const SERVING_LINK_MIN: f64 = 1e-9;

pub fn dump_allocation_layout(alloc: &Allocation, scenario: &Scenario) -> AllocationLayout {
    let n1 = scenario.num_macros();
    let stations = scenario
        .stations
        .iter()
        .map(|s| StationLayout {
            station: s.id,
            class: s.class,
            position: (s.position.x, s.position.y),
            active: s.id < n1 || alloc.active_set.contains(&s.id),
        })
        .collect();
    let mut per_group: Vec<BTreeMap<Pattern, f64>> = vec![BTreeMap::new(); scenario.num_groups()];
    let mut links: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (l, &x) in &alloc.shares {
        *per_group[l.group].entry(l.pattern).or_default() += x;
        *links.entry((l.station, l.group)).or_default() += x;
    }
    let groups = scenario
        .groups
        .iter()
        .zip(per_group)
        .map(|(g, shares)| GroupLayout {
            group: g.id,
            position: (g.position.x, g.position.y),
            rate: alloc.rates.get(g.id).copied().unwrap_or(0.0),
            total_share: shares.values().sum(),
            pattern_shares: shares,
        })
        .collect();
    AllocationLayout {
        stations,
        groups,
        serving_links: links
            .into_iter()
            .filter(|&(_, s)| s > SERVING_LINK_MIN)
            .map(|((station, group), share)| ServingLink { station, group, share })
            .collect(),
        pattern_bar: alloc.pattern_shares.clone(),
    }
}
