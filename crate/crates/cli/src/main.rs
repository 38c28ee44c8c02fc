//! `corrq`: simulate, sweep, tabulate limits and run couplings from the
//! command line. Exit codes: 0 success, 1 runtime failure, 2 configuration
//! error.

mod config;

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use log::info;
use serde_json::{json, Map, Value};

use corrq::coupling::{
    compare_pc_erlang_a_stationary, couple_pc_infserver, couple_pc_pc, CouplingKind, CouplingReport,
};
use corrq::des::{fmt17, simulate, write_trace_csv, EstimatorConfig, RecordGrid};
use corrq::harness::{run_experiment, write_outputs, ExperimentPlan};
use corrq::limits::{hw_stationary, lof_closed, lof_ode_solve, write_path_csv, x_star, OdeSpec};
use corrq::{SeedSpec, StreamKey};

use config::{decode, read_table, CoupleConfig, SimulateConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<corrq::Error> for CliError {
    fn from(e: corrq::Error) -> Self {
        use corrq::Error as E;
        match e {
            E::InsufficientData(_) | E::HorizonTooShort { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "corrq",
    version,
    about = "Many-server queues with perfectly correlated service and patience"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config file (JSON if the name ends in `.json`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; replaces the seed in the config.
    #[arg(long, global = true, env = "CORRQ_SEED")]
    seed: Option<u64>,
    /// Output directory, created if absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one trace and write it as CSV.
    Simulate,
    /// Run a harness experiment from a plan file.
    Experiment {
        /// Plan file; same as `--config`.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Tabulate the analytic limit objects.
    Limits(LimitsArgs),
    /// Run a coupling or stochastic-order check.
    Couple(CoupleArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("what").required(true).multiple(true).args(["xstar", "hw", "lof"])))]
struct LimitsArgs {
    /// Print the fluid fixed point.
    #[arg(long)]
    xstar: bool,
    /// Tabulate the stationary density and CDF of the Erlang-C diffusion.
    #[arg(long)]
    hw: bool,
    /// Tabulate the fluid path from `--x0`.
    #[arg(long)]
    lof: bool,
    #[arg(long, allow_negative_numbers = true)]
    beta: f64,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    x0: Option<f64>,
    /// Integrate the fluid path numerically instead of using the closed form.
    #[arg(long)]
    ode: bool,
    #[arg(long, default_value_t = 5.0)]
    horizon: f64,
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    /// Range of the density table.
    #[arg(long, allow_negative_numbers = true, default_value_t = -5.0)]
    from: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 5.0)]
    to: f64,
}

#[derive(Debug, Args)]
struct CoupleArgs {
    /// `pc_pc`, `pc_infserver` or `pc_erlangA_stat`.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("corrq: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    match &cli.command {
        Command::Simulate => cmd_simulate(&cli),
        Command::Experiment { plan } => cmd_experiment(&cli, plan.as_deref()),
        Command::Limits(args) => cmd_limits(&cli, args),
        Command::Couple(args) => cmd_couple(&cli, args),
    }
}

/// Config table with the seed override applied.
fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Map<String, Value>, CliError> {
    let mut table = match path {
        Some(p) => read_table(p)?,
        None => Map::new(),
    };
    if let Some(s) = seed {
        table.insert("seed".into(), json!(s));
    }
    Ok(table)
}

fn out_dir(cli: &Cli, from_config: Option<&PathBuf>) -> Result<PathBuf, CliError> {
    let dir = cli
        .out
        .clone()
        .or_else(|| from_config.cloned())
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn cmd_simulate(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("simulate needs --config".into()))?;
    let cfg: SimulateConfig = decode(load(Some(path), cli.seed)?, "simulate")?;
    let params = cfg.system().params()?;
    let grid = match cfg.record_step {
        Some(dt) => RecordGrid::Every(dt),
        None => RecordGrid::Events,
    };
    let key = StreamKey::new("simulate", params.n as u64, cfg.replication, "");
    info!(
        "simulating n = {} to t = {} with seed {}",
        params.n, cfg.horizon, cfg.seed
    );
    let trace = simulate(
        &params,
        &cfg.init,
        cfg.horizon,
        &SeedSpec::new(cfg.seed),
        &key,
        &grid,
        cfg.audit,
    )?;

    let dir = out_dir(cli, cfg.output.as_ref())?;
    let stem = format!(
        "trace_n{}_seed{}_rep{}",
        params.n, cfg.seed, cfg.replication
    );
    let csv = dir.join(format!("{stem}.csv"));
    let mut w = BufWriter::new(fs::File::create(&csv)?);
    write_trace_csv(&mut w, &trace.records)?;
    w.flush()?;
    let summary = json!({
        "seed": cfg.seed,
        "replication": cfg.replication,
        "params": params,
        "init": cfg.init,
        "horizon": cfg.horizon,
        "records": trace.records.len(),
        "counters": trace.counters,
        "final_x": trace.final_x,
        "conserved": trace.is_conserved(),
        "audit": trace.audit,
    });
    let json_path = dir.join(format!("{stem}.json"));
    fs::write(
        &json_path,
        serde_json::to_string_pretty(&summary).expect("serializable") + "\n",
    )?;
    println!("{}", csv.display());
    println!("{}", json_path.display());
    if let Some(a) = &trace.audit {
        if a.total_violations() > 0 {
            return Err(CliError::Runtime(format!(
                "{} invariant violations",
                a.total_violations()
            )));
        }
    }
    Ok(())
}

fn cmd_experiment(cli: &Cli, plan: Option<&Path>) -> Result<(), CliError> {
    let path = plan
        .or(cli.config.as_deref())
        .ok_or_else(|| CliError::Config("experiment needs --plan".into()))?;
    let plan: ExperimentPlan = decode(load(Some(path), cli.seed)?, "experiment")?;
    plan.validate()?;
    info!(
        "running {} for n = {:?} with seed {}",
        plan.kind.name(),
        plan.n_values,
        plan.seed
    );
    let out = run_experiment(&plan)?;
    let dir = out_dir(cli, plan.output.as_ref())?;
    let files = write_outputs(&out, &dir)?;
    for v in &out.report.verdicts {
        println!(
            "{} {}: {}",
            if v.passed { "PASS" } else { "FAIL" },
            v.name,
            v.detail
        );
    }
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn cmd_limits(cli: &Cli, args: &LimitsArgs) -> Result<(), CliError> {
    let theta = || {
        args.theta
            .ok_or_else(|| CliError::Config("missing --theta".into()))
    };
    if args.xstar {
        println!("{}", x_star(args.beta, theta()?)?);
    }
    if args.hw {
        let law = hw_stationary(args.beta)?;
        if !(args.step > 0.0 && args.to > args.from) {
            return Err(CliError::Config("need --step > 0 and --to > --from".into()));
        }
        let k = ((args.to - args.from) / args.step + 1e-9).floor() as usize;
        let mut table = String::from("x,pdf,cdf\n");
        for i in 0..=k {
            let x = args.from + i as f64 * args.step;
            table += &format!("{},{},{}\n", fmt17(x), fmt17(law.pdf(x)), fmt17(law.cdf(x)));
        }
        emit(cli, &format!("hw_beta{}.csv", args.beta), table.as_bytes())?;
    }
    if args.lof {
        let x0 = args
            .x0
            .ok_or_else(|| CliError::Config("missing --x0".into()))?;
        let spec = OdeSpec::new(args.beta, theta()?, x0)?;
        if !(args.step > 0.0 && args.horizon >= args.step) {
            return Err(CliError::Config("need 0 < --step <= --horizon".into()));
        }
        let k = (args.horizon / args.step + 1e-9).floor() as usize;
        let grid: Vec<f64> = (0..=k)
            .map(|i| (i as f64 * args.step).min(args.horizon))
            .collect();
        let xs = if args.ode {
            lof_ode_solve(&spec, &grid)?
        } else {
            grid.iter().map(|&t| lof_closed(t, &spec)).collect()
        };
        let mut buf = Vec::new();
        write_path_csv(&mut buf, &grid, &xs)?;
        emit(
            cli,
            &format!(
                "lof_beta{}_theta{}_from{}.csv",
                spec.beta, spec.theta, spec.x0
            ),
            &buf,
        )?;
    }
    Ok(())
}

/// Writes to `--out/name` when an output directory is given, else stdout.
fn emit(cli: &Cli, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    match &cli.out {
        Some(_) => {
            let path = out_dir(cli, None)?.join(name);
            fs::write(&path, bytes)?;
            println!("{}", path.display());
        }
        None => io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn cmd_couple(cli: &Cli, args: &CoupleArgs) -> Result<(), CliError> {
    let mut table = load(cli.config.as_deref(), cli.seed)?;
    let top = [
        ("kind", args.kind.as_ref().map(|k| json!(k))),
        ("horizon", args.horizon.map(|v| json!(v))),
        ("samples", args.samples.map(|v| json!(v))),
        ("alpha", args.alpha.map(|v| json!(v))),
    ];
    for (k, v) in top {
        if let Some(v) = v {
            table.insert(k.into(), v);
        }
    }
    let system = [
        ("n", args.n.map(|v| json!(v))),
        ("beta", args.beta.map(|v| json!(v))),
        ("lambda", args.lambda.map(|v| json!(v))),
        ("theta", args.theta.map(|v| json!(v))),
        ("mode", args.mode.as_ref().map(|v| json!(v))),
    ];
    if system.iter().any(|(_, v)| v.is_some()) {
        let entry = table.entry("system").or_insert_with(|| json!({}));
        let Value::Object(sys) = entry else {
            return Err(CliError::Config("`system` must be a table".into()));
        };
        for (k, v) in system {
            if let Some(v) = v {
                sys.insert(k.into(), v);
            }
        }
    }
    let cfg: CoupleConfig = decode(table, "couple")?;
    let seed = SeedSpec::new(cfg.seed);
    let report: CouplingReport = match cfg.kind {
        CouplingKind::PcPc => {
            let (p1, p2) = (
                cfg.system("system1")?.params()?,
                cfg.system("system2")?.params()?,
            );
            let key = StreamKey::new("couple_pc_pc", p1.n as u64, cfg.replication, "");
            couple_pc_pc(&p1, &p2, cfg.horizon()?, &seed, &key)?
        }
        CouplingKind::PcInfserver => {
            let p = cfg.system("system")?.params()?;
            let key = StreamKey::new("couple_pc_infserver", p.n as u64, cfg.replication, "");
            couple_pc_infserver(&p, cfg.horizon()?, &seed, &key)?
        }
        CouplingKind::PcErlangAStat => {
            let p = cfg.system("system")?.params()?;
            let key = StreamKey::new("couple_pc_erlangA_stat", p.n as u64, cfg.replication, "");
            let est =
                EstimatorConfig::scaled(p.n, cfg.samples, cfg.burn_in_factor, cfg.spacing_factor);
            compare_pc_erlang_a_stationary(&p, &est, &seed, &key, cfg.alpha)?
        }
    };
    let text = report.to_json();
    if cli.out.is_some() || cfg.output.is_some() {
        let dir = out_dir(cli, cfg.output.as_ref())?;
        let path = dir.join(format!("{}_seed{}.json", report.kind.name(), cfg.seed));
        fs::write(&path, text.clone() + "\n")?;
        info!("wrote {}", path.display());
    }
    println!("{text}");
    Ok(())
}
