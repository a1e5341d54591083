//! satsched: generate scenarios, run the schedulers, aggregate experiments.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use satsched_core::annealer::{AnnealParams, CounterMode, RunTrace};
use satsched_core::baselines::{classic_sa, hpfs, run_variant, ClassicParams, VariantMode};
use satsched_core::bench::{run_experiment, ExperimentConfig};
use satsched_core::model::{validate, Scenario, Schedule};
use satsched_core::neighborhoods::TieBreak;
use satsched_core::oracle::{exact_solve, OracleLimits};
use satsched_core::scenario::{generate, load_scenario, load_schedule, save_scenario, save_schedule, GeneratorConfig};

#[derive(Parser, Debug)]
#[command(name = "satsched", version, about = "Observation scheduling for earth-observing satellites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scenario file
    Generate(GenerateArgs),
    /// Run one algorithm on a scenario and write the schedule
    Solve(SolveArgs),
    /// Run a replicated experiment from a JSON config
    Bench(BenchArgs),
    /// Check a schedule file against every constraint
    Validate(ValidateArgs),
    /// Solve a tiny scenario exactly
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Wide,
    Dense,
    Tiny,
}

fn parse_pair<T: std::str::FromStr>(s: &str) -> Result<[T; 2], String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected LO,HI, got {s:?}"))?;
    let p = |x: &str| x.trim().parse::<T>().map_err(|_| format!("bad number {x:?}"));
    Ok([p(a)?, p(b)?])
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Base configuration; the tiny preset also sets n_orbits to 2 and the dense box
    #[arg(long, value_enum, default_value_t = Preset::Wide)]
    preset: Preset,
    /// JSON generator config; flags given on the command line override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// [default: 100; tiny: 10]
    #[arg(long)]
    n_targets: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// LO,HI degrees [default: -30,60; dense and tiny: 30,60]
    #[arg(long, value_parser = parse_pair::<f64>)]
    lat_bounds: Option<[f64; 2]>,
    /// LO,HI degrees [default: 0,150; dense and tiny: 90,120]
    #[arg(long, value_parser = parse_pair::<f64>)]
    lon_bounds: Option<[f64; 2]>,
    /// [default: 56; tiny: 2]
    #[arg(long)]
    n_orbits: Option<usize>,
    /// [default: 86400]
    #[arg(long)]
    horizon_seconds: Option<i64>,
    /// Mean opportunities per visible target [default: 2.8]
    #[arg(long)]
    windows_per_visible_target: Option<f64>,
    /// [default: 0.92]
    #[arg(long)]
    visibility_prob: Option<f64>,
    /// LO,HI seconds [default: 10,30]
    #[arg(long, value_parser = parse_pair::<i64>)]
    window_len_bounds: Option<[i64; 2]>,
    /// LO,HI degrees [default: 2,6]
    #[arg(long, value_parser = parse_pair::<f64>)]
    angle_range_halfwidth_bounds: Option<[f64; 2]>,
    /// LO,HI [default: 2,10]
    #[arg(long, value_parser = parse_pair::<u32>)]
    weight_bounds: Option<[u32; 2]>,
    /// Longest cluster window in seconds [default: 120]
    #[arg(long)]
    max_cluster_duration: Option<i64>,
    /// Output path; stdout when omitted
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgorithmArg {
    #[value(name = "ASA-DTC", alias = "dtc")]
    AsaDtc,
    #[value(name = "ASA-STC", alias = "stc")]
    AsaStc,
    #[value(name = "ASA-NONTC", alias = "nontc")]
    AsaNontc,
    #[value(name = "CLASSIC-SA", alias = "sa")]
    ClassicSa,
    #[value(name = "HPFS", alias = "hpfs")]
    Hpfs,
    #[value(name = "ORACLE", alias = "oracle")]
    Oracle,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CounterArg {
    EveryWorse,
    AcceptedWorse,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TieBreakArg {
    LowestId,
    Random,
}

#[derive(Args, Debug)]
struct AnnealArgs {
    #[arg(long, default_value_t = 0.5)]
    lambda_min: f64,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 10.0)]
    delta: f64,
    /// Inertia of the structure probabilities
    #[arg(long, default_value_t = 0.8)]
    eta: f64,
    /// Iterations between probability updates
    #[arg(long, default_value_t = 10)]
    itr: u64,
    /// Initial probabilities of insertion-removal and migration
    #[arg(long, value_parser = parse_pair::<f64>, default_value = "0.5,0.5")]
    initial_probs: [f64; 2],
    /// Tabu list capacity [default: max(1, N/50)]
    #[arg(long)]
    tabu_len: Option<usize>,
    /// Iteration budget [default: 200*N]
    #[arg(long)]
    max_itr: Option<u64>,
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    #[arg(long, value_enum, default_value_t = CounterArg::EveryWorse)]
    counter_mode: CounterArg,
    #[arg(long, value_enum, default_value_t = TieBreakArg::LowestId)]
    tie_break: TieBreakArg,
    /// Initial temperature of CLASSIC-SA
    #[arg(long, default_value_t = 5.0)]
    lambda0: f64,
    /// Cooling factor of CLASSIC-SA
    #[arg(long, default_value_t = 0.999)]
    gamma: f64,
}

impl AnnealArgs {
    fn params(&self) -> AnnealParams {
        AnnealParams {
            lambda_min: self.lambda_min,
            rho: self.rho,
            delta: self.delta,
            eta: self.eta,
            itr: self.itr,
            initial_probs: self.initial_probs,
            tabu_len: self.tabu_len,
            max_itr: self.max_itr,
            rng_seed: self.rng_seed,
            counter_mode: match self.counter_mode {
                CounterArg::EveryWorse => CounterMode::EveryWorse,
                CounterArg::AcceptedWorse => CounterMode::AcceptedWorse,
            },
            tie_break: match self.tie_break {
                TieBreakArg::LowestId => TieBreak::LowestId,
                TieBreakArg::Random => TieBreak::Random,
            },
        }
    }

    fn classic(&self) -> ClassicParams {
        ClassicParams {
            lambda0: self.lambda0,
            gamma: self.gamma,
            max_itr: self.max_itr,
            rng_seed: self.rng_seed,
        }
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Scenario file
    scenario: PathBuf,
    #[arg(short, long, value_enum, default_value_t = AlgorithmArg::AsaDtc)]
    algorithm: AlgorithmArg,
    #[command(flatten)]
    anneal: AnnealArgs,
    /// Schedule output path; stdout when omitted
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Per-iteration CSV trace (annealing algorithms only)
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Experiment config (JSON)
    config: PathBuf,
    /// Directory for summary.txt, summary.csv and replicas.csv
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Override the replica count of the config
    #[arg(long)]
    replicas: Option<usize>,
    /// Report wall time (makes outputs machine-dependent)
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Schedule file
    schedule: PathBuf,
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// Scenario file
    scenario: PathBuf,
    #[arg(long, default_value_t = 12)]
    max_tasks: usize,
    #[arg(long, default_value_t = 30)]
    max_opportunities: usize,
    #[arg(long, default_value_t = 100_000_000)]
    node_budget: u64,
    /// Do not branch on merges
    #[arg(long)]
    no_clustering: bool,
    /// Schedule output path
    #[arg(short, long)]
    output: Option<PathBuf>,
}

/// Error with the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 2,
        message: e.to_string(),
    }
}

fn with_path(path: &Path) -> impl Fn(io::Error) -> Failure + '_ {
    move |e| config_err(format!("{}: {e}", path.display()))
}

fn read_scenario(path: &Path) -> Result<Scenario, Failure> {
    let file = File::open(path).map_err(with_path(path))?;
    load_scenario(io::BufReader::new(file)).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

/// Writes through `f` to `path`, or to stdout.
fn emit<F>(path: Option<&Path>, f: F) -> Result<(), Failure>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).map_err(with_path(p))?);
            f(&mut w).and_then(|_| w.flush()).map_err(with_path(p))
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock).map_err(config_err)
        }
    }
}

fn to_io(e: satsched_core::scenario::FormatError) -> io::Error {
    io::Error::other(e.to_string())
}

fn cmd_generate(a: GenerateArgs) -> Result<(), Failure> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(with_path(p))?;
            serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", p.display())))?
        }
        None => match a.preset {
            Preset::Wide => GeneratorConfig::default(),
            Preset::Dense => GeneratorConfig::dense(100, 0),
            Preset::Tiny => GeneratorConfig::tiny(10, 0),
        },
    };
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = a.$f { cfg.$f = v; } )* };
    }
    set!(
        n_targets,
        seed,
        lat_bounds,
        lon_bounds,
        n_orbits,
        horizon_seconds,
        windows_per_visible_target,
        visibility_prob,
        window_len_bounds,
        angle_range_halfwidth_bounds,
        weight_bounds,
        max_cluster_duration
    );
    let scenario = generate(&cfg).map_err(config_err)?;
    emit(a.output.as_deref(), |w| save_scenario(&scenario, w).map_err(to_io))?;
    if a.output.is_some() {
        println!(
            "{} tasks, {} orbits, {} opportunities",
            scenario.n_tasks(),
            scenario.n_orbits(),
            scenario.opportunities().len()
        );
    }
    Ok(())
}

fn report(scenario: &Scenario, schedule: &Schedule, to_stderr: bool) {
    let line = format!(
        "profit {} finished {} openings {}",
        schedule.profit(),
        schedule.finished_tasks(scenario),
        schedule.n_items()
    );
    if to_stderr {
        eprintln!("{line}");
    } else {
        println!("{line}");
    }
}

fn cmd_solve(a: SolveArgs) -> Result<(), Failure> {
    let scenario = read_scenario(&a.scenario)?;
    let params = a.anneal.params();
    params.validate().map_err(config_err)?;
    let mut trace: Option<RunTrace> = None;
    let schedule = match a.algorithm {
        AlgorithmArg::Hpfs => hpfs(&scenario),
        AlgorithmArg::Oracle => exact_solve(&scenario, &OracleLimits::default()).map_err(config_err)?.schedule,
        AlgorithmArg::ClassicSa => {
            let r = classic_sa(&scenario, &a.anneal.classic()).map_err(config_err)?;
            trace = Some(r.trace);
            r.best
        }
        v => {
            let mode = match v {
                AlgorithmArg::AsaDtc => VariantMode::Dtc,
                AlgorithmArg::AsaStc => VariantMode::Stc,
                _ => VariantMode::Nontc,
            };
            let r = run_variant(&scenario, mode, &params).map_err(config_err)?;
            trace = Some(r.trace);
            r.best
        }
    };
    if let Some(p) = &a.trace {
        let Some(t) = &trace else {
            return Err(config_err("--trace needs an annealing algorithm"));
        };
        emit(Some(p), |w| t.write_csv(w))?;
    }
    emit(a.output.as_deref(), |w| save_schedule(&scenario, &schedule, w).map_err(to_io))?;
    report(&scenario, &schedule, a.output.is_none());
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&a.config).map_err(with_path(&a.config))?;
    let mut cfg: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", a.config.display())))?;
    if let Some(r) = a.replicas {
        cfg.replicas = r;
    }
    cfg.timing |= a.timing;
    let out = run_experiment(&cfg).map_err(config_err)?;
    let summary = out.summary_text();
    print!("{summary}");
    if let Some(dir) = &a.output {
        fs::create_dir_all(dir).map_err(with_path(dir))?;
        let p = dir.join("summary.txt");
        fs::write(&p, &summary).map_err(with_path(&p))?;
        emit(Some(&dir.join("summary.csv")), |w| out.write_summary_csv(w))?;
        emit(Some(&dir.join("replicas.csv")), |w| out.write_replicas_csv(w))?;
    }
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> Result<(), Failure> {
    let file = File::open(&a.schedule).map_err(with_path(&a.schedule))?;
    let (scenario, schedule) =
        load_schedule(io::BufReader::new(file)).map_err(|e| config_err(format!("{}: {e}", a.schedule.display())))?;
    let violations = validate(&schedule, &scenario);
    if violations.is_empty() {
        print!("ok: ");
        report(&scenario, &schedule, false);
        return Ok(());
    }
    let mut out = io::stdout().lock();
    for v in &violations {
        if writeln!(out, "{v}").is_err() {
            break;
        }
    }
    Err(Failure {
        code: 1,
        message: format!("{} violation(s)", violations.len()),
    })
}

fn cmd_oracle(a: OracleArgs) -> Result<(), Failure> {
    let scenario = read_scenario(&a.scenario)?;
    let limits = OracleLimits {
        max_tasks: a.max_tasks,
        max_opportunities: a.max_opportunities,
        node_budget: a.node_budget,
        clustering: !a.no_clustering,
    };
    let sol = exact_solve(&scenario, &limits).map_err(config_err)?;
    if let Some(p) = &a.output {
        emit(Some(p), |w| save_schedule(&scenario, &sol.schedule, w).map_err(to_io))?;
    }
    println!("optimum {} nodes {}", sol.profit, sol.nodes);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Oracle(a) => cmd_oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
