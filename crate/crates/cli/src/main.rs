use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hetnet_core::allocator::{
    audit, build_full_reuse_model, build_p4, exact_oracle, reweighted_l1, reweighted_l1_refined, solve_full_reuse,
    Allocation, IterationTrace, PicoMode, SolverConfig,
};
use hetnet_core::experiments::{capacity_bisect, dump_allocation_layout, run_sweep, ExperimentConfig, Instance, Method};
use hetnet_core::lp::write_lp;
use hetnet_core::postprocess::{minimize_delay, minimize_energy_delay, DelayOptions};
use hetnet_core::queueing::{TrafficProfile, TrafficShape, DEFAULT_DELAY_CAP_S};
use hetnet_core::radio::{build_efficiency_table, build_hex_scenario, enumerate_patterns, HexConfig, PatternPolicy, Scenario};

#[derive(Parser)]
#[command(name = "hetnet-opt", version, about = "Energy-aware cell activation and spectrum allocation for HetNets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a hexagonal-grid scenario (and optionally a traffic file).
    Scenario(ScenarioCmd),
    /// Reweighted l1 over interference patterns.
    Solve(SolveCmd),
    /// Reweighted l1 with permanent pico removal.
    SolveRefined(SolveCmd),
    /// Reweighted l1 with full spectrum reuse only.
    SolveFullreuse(SolveCmd),
    /// Exact minimum-energy allocation by enumerating on/off vectors.
    Oracle(SolveCmd),
    /// Lower the mean sojourn time of an allocation at fixed energy.
    Postprocess(PostprocessCmd),
    /// Energy-versus-traffic sweep described by a JSON config.
    Sweep(SweepCmd),
    /// Largest supported mean arrival rate of one method.
    Capacity(CapacityCmd),
    /// Per-group and per-station breakdown of an allocation.
    DumpLayout(DumpLayoutCmd),
}

#[derive(Args)]
struct InstanceArgs {
    /// Scenario JSON; a desk scenario is generated when absent.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Picos of the generated desk scenario.
    #[arg(long, default_value_t = 4)]
    picos: usize,
    /// Seed for pico placement and the per-group traffic intensities.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Pattern policy: full, max-card:<n> or distance:<metres>.
    #[arg(long, default_value = "full")]
    patterns: PatternPolicy,
}

impl InstanceArgs {
    fn scenario(&self) -> Result<Scenario> {
        match &self.scenario {
            Some(p) => Ok(Scenario::from_json(&read(p)?)?),
            None => Ok(build_hex_scenario(&HexConfig::desk(self.picos, self.seed))?),
        }
    }

    fn instance(&self) -> Result<Instance> {
        Ok(Instance::new(self.scenario()?, self.patterns, self.seed)?)
    }
}

#[derive(Args)]
struct TrafficArgs {
    /// Traffic profile JSON.
    #[arg(long, conflicts_with = "mean_rate")]
    traffic: Option<PathBuf>,
    /// Mean arrival rate per group (packets/s), scaled by seeded intensities.
    #[arg(long)]
    mean_rate: Option<f64>,
    /// Delay cap for every group (seconds).
    #[arg(long, default_value_t = DEFAULT_DELAY_CAP_S)]
    delay_cap: f64,
}

impl TrafficArgs {
    fn profile(&self, scenario: &Scenario, seed: u64) -> Result<TrafficProfile> {
        let t = match (&self.traffic, self.mean_rate) {
            (Some(p), _) => serde_json::from_str::<TrafficProfile>(&read(p)?)
                .with_context(|| format!("parsing {}", p.display()))?,
            (None, Some(l)) => TrafficShape::random(scenario.num_groups(), seed).profile(l, self.delay_cap)?,
            (None, None) => bail!("either --traffic or --mean-rate is required"),
        };
        if t.num_groups() != scenario.num_groups() {
            bail!("traffic has {} groups but the scenario has {}", t.num_groups(), scenario.num_groups());
        }
        Ok(t)
    }
}

#[derive(Args)]
struct ScenarioCmd {
    #[arg(long, default_value_t = 4)]
    picos: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Use the 66-hexagon profile (two macros, ten picos); ignores --picos.
    #[arg(long)]
    large: bool,
    /// Scenario output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a traffic profile at this mean rate.
    #[arg(long, requires = "traffic_out")]
    mean_rate: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_DELAY_CAP_S)]
    delay_cap: f64,
    #[arg(long)]
    traffic_out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveCmd {
    #[command(flatten)]
    instance: InstanceArgs,
    #[command(flatten)]
    traffic: TrafficArgs,
    /// Solver config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the first relaxation LP in CPLEX LP format to this directory.
    #[arg(long)]
    dump_lp: Option<PathBuf>,
    /// Add this weight times the mean sojourn time to the energy objective.
    #[arg(long)]
    delay_weight: Option<f64>,
    /// Allocation JSON output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PostprocessCmd {
    #[arg(long)]
    allocation: PathBuf,
    #[command(flatten)]
    instance: InstanceArgs,
    #[command(flatten)]
    traffic: TrafficArgs,
    /// Stop once the duality gap estimate is below this (seconds).
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-iteration objective log (CSV).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct SweepCmd {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CapacityCmd {
    #[arg(long)]
    method: Method,
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, default_value_t = DEFAULT_DELAY_CAP_S)]
    delay_cap: f64,
    /// Bisection tolerance (packets/s).
    #[arg(long, default_value_t = 0.05)]
    tol: f64,
}

#[derive(Args)]
struct DumpLayoutCmd {
    #[arg(long)]
    allocation: PathBuf,
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                writeln!(stdout)?;
            }
            Ok(())
        }
    }
}

fn solver_config(path: Option<&Path>) -> Result<SolverConfig> {
    match path {
        Some(p) => Ok(SolverConfig::from_json(&read(p)?)?),
        None => Ok(SolverConfig::default()),
    }
}

fn summarize(alloc: &Allocation, trace: Option<&IterationTrace>) {
    let iters = trace.map(|t| format!(", {} iterations", t.iterations())).unwrap_or_default();
    eprintln!(
        "energy cost {}, active picos {:?}, {} patterns in use{iters}",
        alloc.energy_cost,
        alloc.active_set,
        alloc.support()
    );
}

fn dump_first_lp(dir: &Path, method: Method, inst: &Instance, traffic: &TrafficProfile, cfg: &SolverConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    let n2 = inst.scenario.num_picos();
    let built = match method {
        Method::FullReuse => {
            let modes: Vec<PicoMode> = cfg.costs(n2).into_iter().map(|cost| PicoMode::Free { cost }).collect();
            build_full_reuse_model(&inst.scenario, traffic, &modes)?
        }
        _ => build_p4(&inst.scenario, &inst.table, traffic, &vec![1.0; n2], cfg)?,
    };
    let path = dir.join(format!("{method}_initial.lp"));
    let mut file = std::io::BufWriter::new(fs::File::create(&path)?);
    write_lp(&built.lp, &mut file)?;
    file.flush()?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn solve(cmd: &SolveCmd, method: Method) -> Result<()> {
    let inst = cmd.instance.instance()?;
    let traffic = cmd.traffic.profile(&inst.scenario, cmd.instance.seed)?;
    let cfg = solver_config(cmd.config.as_deref())?;
    if let Some(dir) = &cmd.dump_lp {
        dump_first_lp(dir, method, &inst, &traffic, &cfg)?;
    }
    let (alloc, trace) = match (method, cmd.delay_weight) {
        (Method::Alg1, Some(beta)) => {
            let (st, trace) =
                minimize_energy_delay(&inst.scenario, &inst.table, &traffic, &cfg, beta, &DelayOptions::default())?;
            (st.allocation, Some(trace))
        }
        (_, Some(_)) => bail!("--delay-weight is only supported by `solve`"),
        (Method::Alg1, None) => reweighted_l1(&inst.scenario, &inst.table, &traffic, &cfg).map(|(a, t)| (a, Some(t)))?,
        (Method::Alg2, None) => {
            reweighted_l1_refined(&inst.scenario, &inst.table, &traffic, &cfg).map(|(a, t)| (a, Some(t)))?
        }
        (Method::FullReuse, None) => solve_full_reuse(&inst.scenario, &traffic, &cfg).map(|(a, t)| (a, Some(t)))?,
        (Method::Oracle, None) => (exact_oracle(&inst.scenario, &inst.table, &traffic, &cfg)?, None),
    };
    let report = audit(&inst.scenario, &traffic, &alloc);
    log::debug!("audit: {report}");
    summarize(&alloc, trace.as_ref());
    emit(cmd.out.as_deref(), &alloc.to_json(&traffic)?)
}

fn postprocess(cmd: &PostprocessCmd) -> Result<()> {
    let scenario = cmd.instance.scenario()?;
    let traffic = cmd.traffic.profile(&scenario, cmd.instance.seed)?;
    let table = build_efficiency_table(&scenario, &enumerate_patterns(&scenario, cmd.instance.patterns)?);
    let start = Allocation::from_json(&read(&cmd.allocation)?)?;
    let opts = DelayOptions {
        tol: cmd.tol,
        max_iters: cmd.max_iters,
        ..DelayOptions::default()
    };
    let st = minimize_delay(&scenario, &table, &traffic, &start, &opts)?;
    let before = st.log.first().map(|s| s.objective).unwrap_or(st.objective);
    eprintln!(
        "mean sojourn {before:.6} s -> {:.6} s after {} iterations (gap {:.3e})",
        st.objective, st.iterations, st.gap
    );
    if let Some(p) = &cmd.log {
        fs::write(p, st.log_csv()?).with_context(|| format!("writing {}", p.display()))?;
    }
    emit(cmd.out.as_deref(), &st.allocation.to_json(&traffic)?)
}

fn scenario(cmd: &ScenarioCmd) -> Result<()> {
    let cfg = if cmd.large { HexConfig::large(cmd.seed) } else { HexConfig::desk(cmd.picos, cmd.seed) };
    let s = build_hex_scenario(&cfg)?;
    if let (Some(l), Some(p)) = (cmd.mean_rate, &cmd.traffic_out) {
        let t = TrafficShape::random(s.num_groups(), cmd.seed).profile(l, cmd.delay_cap)?;
        fs::write(p, t.to_json()?).with_context(|| format!("writing {}", p.display()))?;
    }
    emit(cmd.out.as_deref(), &s.to_json()?)
}

fn sweep(cmd: &SweepCmd) -> Result<()> {
    let mut cfg = ExperimentConfig::from_json(&read(&cmd.config)?)?;
    if let Some(d) = &cmd.out_dir {
        cfg.output_dir = Some(d.clone());
    }
    if cfg.output_dir.is_none() {
        bail!("no output directory: set output_dir in the config or pass --out-dir");
    }
    let res = run_sweep(&cfg)?;
    let feasible = res.rows.iter().filter(|r| r.allocation.is_some()).count();
    eprintln!("{} points, {feasible} feasible", res.rows.len());
    Ok(())
}

fn capacity(cmd: &CapacityCmd) -> Result<()> {
    let inst = cmd.instance.instance()?;
    let cap = capacity_bisect(&inst, cmd.method, cmd.delay_cap, cmd.tol, SolverConfig::default().lp_tol)?;
    println!("{cap}");
    Ok(())
}

fn dump_layout(cmd: &DumpLayoutCmd) -> Result<()> {
    let scenario = cmd.instance.scenario()?;
    let alloc = Allocation::from_json(&read(&cmd.allocation)?)?;
    let layout = dump_allocation_layout(&alloc, &scenario);
    emit(cmd.out.as_deref(), &serde_json::to_string_pretty(&layout)?)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Scenario(c) => scenario(c),
        Command::Solve(c) => solve(c, Method::Alg1),
        Command::SolveRefined(c) => solve(c, Method::Alg2),
        Command::SolveFullreuse(c) => solve(c, Method::FullReuse),
        Command::Oracle(c) => solve(c, Method::Oracle),
        Command::Postprocess(c) => postprocess(c),
        Command::Sweep(c) => sweep(c),
        Command::Capacity(c) => capacity(c),
        Command::DumpLayout(c) => dump_layout(c),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // a closed pipe downstream (e.g. `| head`) is not a failure
            if e.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe) {
                return ExitCode::SUCCESS;
            }
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
