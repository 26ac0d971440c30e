//! Acceptance criteria A1-A10. Each test prints one `PASS`/`FAIL` line.
//!
//! The desk runs are computed once and shared: A4, A6 and A9 re-examine
//! the outputs of the other criteria.

#[allow(dead_code)]
mod common;

use std::io::Write;
use std::sync::OnceLock;

use common::{brute_force, random_lp, rel_close, Verdict};
use hetnet_core::allocator::*;
use hetnet_core::experiments::{capacity_bisect, Instance, Method};
use hetnet_core::lp::{solve, LpStatus};
use hetnet_core::postprocess::{minimize_delay, DelayOptions};
use hetnet_core::queueing::{average_sojourn, qos_satisfied, TrafficProfile};
use hetnet_core::radio::{
    build_efficiency_table, build_hex_scenario, enumerate_patterns, psd_from_power, spectral_efficiency, EfficiencyTable,
    Group, HexConfig, Pattern, PatternPolicy, Point, Scenario, Station, StationClass, THERMAL_NOISE_DBM_PER_HZ,
};
use hetnet_core::Error;

const TAU: f64 = 0.5;
const BISECT_TOL: f64 = 0.05;
/// Traffic levels of the oracle-gap suite, as fractions of alg1 capacity.
const LEVELS: [f64; 3] = [0.8, 0.9, 0.95];
const GAP_INSTANCES: u64 = 20;

fn report(id: &str, ok: bool, detail: String) {
    // through the raw handle so the line shows up even when output is captured
    let mut out = std::io::stdout().lock();
    writeln!(out, "{id} {}: {detail}", if ok { "PASS" } else { "FAIL" }).unwrap();
    out.flush().unwrap();
    drop(out);
    assert!(ok, "{id} failed: {detail}");
}

fn instance(picos: usize, seed: u64) -> Instance {
    Instance::new(build_hex_scenario(&HexConfig::desk(picos, seed)).unwrap(), PatternPolicy::Full, seed).unwrap()
}

/// One solver output together with everything needed to re-check it.
struct Run {
    label: String,
    scenario: Scenario,
    traffic: TrafficProfile,
    alloc: Allocation,
    trace: Option<IterationTrace>,
    from_a1_a3: bool,
}

struct GapPoint {
    alg1: f64,
    alg2: f64,
    oracle: f64,
    iters1: usize,
    iters2: usize,
    level: f64,
}

struct Reduced {
    label: String,
    before: Allocation,
    after: std::result::Result<(Allocation, Reduction), Error>,
}

struct Delay {
    label: String,
    start: f64,
    end: f64,
    same_active: bool,
    qos: bool,
}

struct Suite {
    runs: Vec<Run>,
    light_iters: Vec<(String, usize, usize)>,
    gap: Vec<GapPoint>,
    capacity: (f64, f64),
    reduced: Vec<Reduced>,
    delay: Vec<Delay>,
}

fn light(runs: &mut Vec<Run>, iters: &mut Vec<(String, usize, usize)>) {
    let inst = instance(4, 1);
    let cfg = SolverConfig::default();
    for mean in [0.1, 0.25, 0.5] {
        let traffic = inst.traffic(mean, TAU).unwrap();
        for (name, f) in [("alg1", reweighted_l1 as Solver), ("alg2", reweighted_l1_refined as Solver)] {
            let (a, t) = f(&inst.scenario, &inst.table, &traffic, &cfg).unwrap();
            iters.push((format!("{name}@{mean}"), a.num_active(), t.iterations()));
            runs.push(Run {
                label: format!("A1 {name} mean {mean}"),
                scenario: inst.scenario.clone(),
                traffic: traffic.clone(),
                alloc: a,
                trace: Some(t),
                from_a1_a3: true,
            });
        }
    }
}

type Solver =
    fn(&Scenario, &EfficiencyTable, &TrafficProfile, &SolverConfig) -> hetnet_core::Result<(Allocation, IterationTrace)>;

fn oracle_gap(runs: &mut Vec<Run>, gap: &mut Vec<GapPoint>) {
    let cfg = SolverConfig::default();
    for seed in 1..=GAP_INSTANCES {
        let picos = 4 + (seed as usize - 1) % 3;
        let inst = instance(picos, seed);
        let cap = capacity_bisect(&inst, Method::Alg1, TAU, BISECT_TOL, cfg.lp_tol).unwrap();
        for level in LEVELS {
            let traffic = inst.traffic(level * cap, TAU).unwrap();
            let (a1, t1) = reweighted_l1(&inst.scenario, &inst.table, &traffic, &cfg).unwrap();
            let (a2, t2) = reweighted_l1_refined(&inst.scenario, &inst.table, &traffic, &cfg).unwrap();
            let o = exact_oracle(&inst.scenario, &inst.table, &traffic, &cfg).unwrap();
            gap.push(GapPoint {
                alg1: a1.energy_cost,
                alg2: a2.energy_cost,
                oracle: o.energy_cost,
                iters1: t1.iterations(),
                iters2: t2.iterations(),
                level,
            });
            let tag = format!("picos {picos} seed {seed} level {level}");
            for (name, a, t) in [("alg1", a1, Some(t1)), ("alg2", a2, Some(t2)), ("oracle", o, None)] {
                runs.push(Run {
                    label: format!("A2 {name} {tag}"),
                    scenario: inst.scenario.clone(),
                    traffic: traffic.clone(),
                    alloc: a,
                    trace: t,
                    from_a1_a3: true,
                });
            }
        }
    }
}

fn throughput(runs: &mut Vec<Run>) -> (f64, f64) {
    let inst = instance(4, 1);
    let cfg = SolverConfig::default();
    let alg = capacity_bisect(&inst, Method::Alg1, TAU, BISECT_TOL, cfg.lp_tol).unwrap();
    let full = capacity_bisect(&inst, Method::FullReuse, TAU, BISECT_TOL, cfg.lp_tol).unwrap();
    // the allocations at each method's own capacity
    let at_alg = inst.traffic(alg, TAU).unwrap();
    let (a, t) = reweighted_l1(&inst.scenario, &inst.table, &at_alg, &cfg).unwrap();
    runs.push(Run {
        label: format!("A3 alg1 at capacity {alg}"),
        scenario: inst.scenario.clone(),
        traffic: at_alg,
        alloc: a,
        trace: Some(t),
        from_a1_a3: true,
    });
    let at_full = inst.traffic(full, TAU).unwrap();
    let (a, t) = solve_full_reuse(&inst.scenario, &at_full, &cfg).unwrap();
    runs.push(Run {
        label: format!("A3 fullreuse at capacity {full}"),
        scenario: inst.scenario.clone(),
        traffic: at_full,
        alloc: a,
        trace: Some(t),
        from_a1_a3: true,
    });
    (alg, full)
}

fn post(runs: &mut Vec<Run>) -> Vec<Delay> {
    let inst = instance(4, 1);
    let cfg = SolverConfig::default();
    let cap = capacity_bisect(&inst, Method::Alg1, TAU, BISECT_TOL, cfg.lp_tol).unwrap();
    let mut out = Vec::new();
    for (label, mean) in [("light", 0.5), ("heavy", 0.9 * cap)] {
        let traffic = inst.traffic(mean, TAU).unwrap();
        let (start, _) = reweighted_l1(&inst.scenario, &inst.table, &traffic, &cfg).unwrap();
        let st = minimize_delay(&inst.scenario, &inst.table, &traffic, &start, &DelayOptions::default()).unwrap();
        out.push(Delay {
            label: label.to_string(),
            start: average_sojourn(&start.rates, &traffic).unwrap(),
            end: average_sojourn(&st.allocation.rates, &traffic).unwrap(),
            same_active: st.allocation.active_set == start.active_set && st.allocation.activity == start.activity,
            qos: qos_satisfied(&st.allocation.rates, &traffic, 1e-9).iter().all(|&q| q),
        });
        runs.push(Run {
            label: format!("A7 {label} postprocessed"),
            scenario: inst.scenario.clone(),
            traffic,
            alloc: st.allocation,
            trace: None,
            from_a1_a3: false,
        });
    }
    out
}

fn suite() -> &'static Suite {
    static SUITE: OnceLock<Suite> = OnceLock::new();
    SUITE.get_or_init(|| {
        let mut runs = Vec::new();
        let mut light_iters = Vec::new();
        light(&mut runs, &mut light_iters);
        let mut gap = Vec::new();
        oracle_gap(&mut runs, &mut gap);
        let capacity = throughput(&mut runs);
        let delay = post(&mut runs);
        let mut reduced = Vec::new();
        let mut extra = Vec::new();
        for r in runs.iter().filter(|r| r.from_a1_a3) {
            let table = build_efficiency_table(&r.scenario, &enumerate_patterns(&r.scenario, PatternPolicy::Full).unwrap());
            let after = caratheodory_reduce(&r.alloc, &table, &r.traffic);
            if let Ok((a, _)) = &after {
                extra.push(Run {
                    label: format!("A6 reduced {}", r.label),
                    scenario: r.scenario.clone(),
                    traffic: r.traffic.clone(),
                    alloc: a.clone(),
                    trace: None,
                    from_a1_a3: false,
                });
            }
            reduced.push(Reduced { label: r.label.clone(), before: r.alloc.clone(), after });
        }
        runs.extend(extra);
        Suite { runs, light_iters, gap, capacity, reduced, delay }
    })
}

#[test]
fn a01_light_traffic_shutdown() {
    let s = suite();
    let bad: Vec<_> = s.light_iters.iter().filter(|(_, active, it)| *active != 0 || *it > 3).collect();
    let worst = s.light_iters.iter().map(|l| l.2).max().unwrap();
    report(
        "A1",
        bad.is_empty(),
        format!("{} runs, 0 picos on, at most {worst} iterations; offending {bad:?}", s.light_iters.len()),
    );
}

#[test]
fn a02_oracle_gap() {
    let s = suite();
    let mut within = 0;
    let mut negative = 0;
    let mut total = 0;
    for g in &s.gap {
        for alg in [g.alg1, g.alg2] {
            total += 1;
            let d = alg - g.oracle;
            if d < -1e-9 {
                negative += 1;
            }
            if d <= 1.0 + 1e-9 {
                within += 1;
            }
        }
    }
    let share = within as f64 / total as f64;
    let max = s.gap.iter().map(|g| (g.alg1 - g.oracle).max(g.alg2 - g.oracle)).fold(0.0, f64::max);
    report(
        "A2",
        share >= 0.9 && negative == 0,
        format!("gap <= 1 in {within}/{total} runs ({:.1}%), max gap {max}, negative gaps {negative}", 100.0 * share),
    );
}

#[test]
fn a03_throughput_ordering() {
    let (alg, full) = suite().capacity;
    let ratio = alg / full;
    report("A3", ratio >= 2.0, format!("capacity alg1 {alg:.3} vs fullreuse {full:.3}, ratio {ratio:.3}"));
}

#[test]
fn a04_surrogate_monotone() {
    let s = suite();
    let traced: Vec<_> = s.runs.iter().filter(|r| r.from_a1_a3).filter_map(|r| r.trace.as_ref().map(|t| (r, t))).collect();
    let worst = traced.iter().map(|(_, t)| t.max_surrogate_increase()).fold(f64::NEG_INFINITY, f64::max);
    let bad: Vec<_> = traced.iter().filter(|(_, t)| t.max_surrogate_increase() > 1e-9).map(|(r, _)| &r.label).collect();
    report("A4", bad.is_empty(), format!("{} traces, largest increase {worst:.3e}; offending {bad:?}", traced.len()));
}

#[test]
fn a05_refined_iterations() {
    let s = suite();
    let median = |mut v: Vec<usize>| {
        v.sort_unstable();
        let n = v.len();
        if n % 2 == 1 { v[n / 2] as f64 } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) as f64 }
    };
    let heavy: Vec<_> = s.gap.iter().filter(|g| g.level == 0.9).collect();
    let m1 = median(heavy.iter().map(|g| g.iters1).collect());
    let m2 = median(heavy.iter().map(|g| g.iters2).collect());
    let unequal = heavy.iter().filter(|g| g.alg1 != g.alg2).count();
    report(
        "A5",
        m2 <= m1 && unequal == 0,
        format!("{} instances at 0.9 capacity, median iterations alg1 {m1} alg2 {m2}, energy mismatches {unequal}", heavy.len()),
    );
}

#[test]
fn a06_support_reduction() {
    let s = suite();
    let mut problems = Vec::new();
    let mut incomplete = 0;
    let mut max_support = 0;
    let mut max_k = 0;
    for r in &s.reduced {
        let k = r.before.rates.len();
        max_k = max_k.max(k);
        match &r.after {
            Ok((a, _)) => {
                max_support = max_support.max(a.support());
                let rates_ok =
                    a.rates.iter().zip(&r.before.rates).all(|(new, old)| *new >= old - 1e-9 * old.max(1.0));
                if a.support() > k || a.activity != r.before.activity || !rates_ok {
                    problems.push(r.label.clone());
                }
            }
            Err(Error::ReductionIncomplete { .. }) => incomplete += 1,
            Err(e) => problems.push(format!("{}: {e}", r.label)),
        }
    }
    report(
        "A6",
        problems.is_empty() && incomplete == 0,
        format!(
            "{} outputs, largest support {max_support} (k = {max_k}), incomplete {incomplete}; offending {problems:?}",
            s.reduced.len()
        ),
    );
}

#[test]
fn a07_delay_postprocessing() {
    let s = suite();
    let light = s.delay.iter().find(|d| d.label == "light").unwrap();
    let heavy = s.delay.iter().find(|d| d.label == "heavy").unwrap();
    let cut = |d: &Delay| 1.0 - d.end / d.start;
    let ok = cut(light) >= 0.25
        && light.same_active
        && heavy.end <= heavy.start
        && heavy.same_active
        && heavy.qos
        && light.qos;
    report(
        "A7",
        ok,
        format!(
            "light {:.4} s -> {:.4} s ({:.1}% lower), heavy {:.4} s -> {:.4} s ({:.1}% lower), active sets kept {}, QoS kept {}",
            light.start,
            light.end,
            100.0 * cut(light),
            heavy.start,
            heavy.end,
            100.0 * cut(heavy),
            light.same_active && heavy.same_active,
            light.qos && heavy.qos
        ),
    );
}

#[test]
fn a08_lp_matches_enumeration() {
    let mut mismatches = Vec::new();
    let mut mix = [0usize; 3];
    for seed in 1000..1100 {
        let lp = random_lp(seed, 8, 8);
        let expected = brute_force(&lp);
        let sol = solve(&lp.to_model(), 1e-9).unwrap();
        let got = match sol.status {
            LpStatus::Optimal => Verdict::Optimal(sol.objective),
            LpStatus::Infeasible => Verdict::Infeasible,
            LpStatus::Unbounded => Verdict::Unbounded,
        };
        let agree = match (got, expected) {
            (Verdict::Optimal(a), Verdict::Optimal(b)) => rel_close(a, b, 1e-6),
            (a, b) => a == b,
        };
        if !agree {
            mismatches.push((seed, got, expected));
        }
        mix[match expected {
            Verdict::Optimal(_) => 0,
            Verdict::Infeasible => 1,
            Verdict::Unbounded => 2,
        }] += 1;
    }
    report(
        "A8",
        mismatches.is_empty(),
        format!(
            "100 LPs ({} optimal, {} infeasible, {} unbounded); mismatches {mismatches:?}",
            mix[0], mix[1], mix[2]
        ),
    );
}

#[test]
fn a09_feasibility_audit() {
    let s = suite();
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    for r in &s.runs {
        let rep = audit(&r.scenario, &r.traffic, &r.alloc);
        worst = worst.max(rep.max_violation());
        if !rep.passes(1e-7) {
            bad.push(format!("{}: {rep}", r.label));
        }
    }
    report(
        "A9",
        bad.is_empty(),
        format!("{} allocations audited, largest violation {worst:.3e}; offending {bad:?}", s.runs.len()),
    );
}

#[test]
fn a10_capped_efficiency() {
    // a strong link saturates the 30 dB SINR cap: 10 MHz / 0.5 Mbit * log2(1 + 1000)
    let station = Station {
        id: 0,
        class: StationClass::Macro,
        position: Point::new(0.0, 0.0),
        tx_psd_dbm_per_hz: psd_from_power(46.0, 10e6),
    };
    let group = Group {
        id: 0,
        position: Point::new(100.0, 0.0),
        noise_psd_dbm_per_hz: THERMAL_NOISE_DBM_PER_HZ,
    };
    let s = Scenario::new(100.0, 100.0, vec![station], vec![group], 10e6, 0.5e6, Some(30.0), Some(vec![vec![1e-9]]))
        .unwrap();
    let got = spectral_efficiency(&s, 0, 0, Pattern::singleton(0));
    let want = 20.0 * 1001f64.log2();
    let sig6 = |x: f64| format!("{x:.5e}");
    report("A10", sig6(got) == sig6(want), format!("s = {got:.6} packets/s, 20 log2(1001) = {want:.6}, both {}", sig6(want)));
}
