use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ddvi::harness::{self, AlgoSpec, DeflationBuild, EnvSpec, ExperimentConfig, RunReport, SweepAxis};
use ddvi::td::{ModelSource, StepSizeSchedule};
use ddvi::{Error, Result};

/// Deflated dynamics value iteration and TD experiments on tabular MDPs
#[derive(Parser, Debug)]
#[command(name = "ddvi", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a planning (or any) experiment described by a JSON config
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for trace and summary CSVs
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed range "a..b" (exclusive), a list "1,2,5" or a single seed
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Run TD, DDTD or Dyna from flags (or a config)
    Td(TdArgs),
    /// Print the eigenvalues of an environment's evaluation chain
    Spectrum {
        /// maze, maze_td, chainwalk, cliffwalk or garnet:n,branching,reward_states[,seed]
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// Instance seed for Garnet environments without a fixed seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Build a deflation matrix and check it against the dense spectrum
    Verify {
        #[arg(long)]
        env: String,
        /// schur, schur_dense, hotelling or wielandt
        #[arg(long, default_value = "schur")]
        kind: String,
        #[arg(long, default_value_t = 1)]
        rank: usize,
        /// QR-iteration rounds for the schur kind
        #[arg(long, default_value_t = harness::DEFAULT_QR_M)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sweep a config over Garnet state counts or horizons
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// n_states or horizon
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<String>,
    },
}

#[derive(clap::Args, Debug)]
struct TdArgs {
    /// Use a JSON config instead of the flags below
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "maze_td")]
    env: String,
    /// td, ddtd or dyna
    #[arg(long, default_value = "td")]
    algo: String,
    #[arg(long, default_value_t = 1)]
    rank: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = ddvi::td::DEFAULT_THETA)]
    theta: f64,
    /// Model update period K
    #[arg(long, default_value_t = ddvi::td::DEFAULT_PERIOD)]
    period: usize,
    /// visit, harmonic:C or const:eta
    #[arg(long, default_value = "visit")]
    schedule: String,
    /// Build E once from the true chain instead of the learned model
    #[arg(long)]
    exact_model: bool,
    #[arg(long, default_value_t = 100_000)]
    budget: usize,
    #[arg(long, default_value_t = ddvi::envs::DEFAULT_DISCOUNT)]
    gamma: f64,
    #[arg(long, default_value_t = ddvi::td::DEFAULT_STRIDE)]
    stride: usize,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::config("--seeds", format!("cannot parse {s:?}"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
        if a >= b {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

fn apply_overrides(cfg: &mut ExperimentConfig, out: Option<PathBuf>, seeds: Option<&str>) -> Result<()> {
    if out.is_some() {
        cfg.out = out;
    }
    if let Some(s) = seeds {
        cfg.seeds = parse_seeds(s)?;
    }
    cfg.validate()
}

fn print_summary(report: &RunReport) {
    println!("{}", harness::SUMMARY_HEADER.join(","));
    let opt = |x: Option<f64>| x.map(|v| format!("{v:?}")).unwrap_or_default();
    for r in &report.summaries {
        println!(
            "{},{},{},{},{:?},{:?},{},{},{}",
            r.algo,
            r.env,
            r.seed_count,
            r.param,
            r.mean_err,
            r.stderr,
            opt(r.iters_to_target),
            opt(r.rate_fit),
            r.cost_shift
        );
    }
    for f in report.failures() {
        eprintln!("run {} seed {} failed: {}", f.label, f.seed, f.result.as_ref().unwrap_err());
    }
}

fn finish(report: RunReport) -> Result<ExitCode> {
    print_summary(&report);
    Ok(if report.failures().next().is_some() { ExitCode::from(3) } else { ExitCode::SUCCESS })
}

fn td_config(args: TdArgs) -> Result<ExperimentConfig> {
    if let Some(path) = &args.config {
        let mut cfg = ExperimentConfig::load(path)?;
        apply_overrides(&mut cfg, args.out, args.seeds.as_deref())?;
        return Ok(cfg);
    }
    let schedule: StepSizeSchedule = args.schedule.parse().map_err(|e: Error| Error::config("--schedule", e.to_string()))?;
    let algo = match args.algo.as_str() {
        "td" => AlgoSpec::Td { schedule },
        "ddtd" => AlgoSpec::Ddtd {
            rank: args.rank,
            alpha: args.alpha,
            schedule,
            period: args.period,
            theta: args.theta,
            m: harness::DEFAULT_QR_M,
            model: if args.exact_model { ModelSource::Exact } else { ModelSource::Learned },
        },
        "dyna" => AlgoSpec::Dyna { theta: args.theta, period: args.period },
        other => return Err(Error::config("--algo", format!("unknown algorithm {other:?}"))),
    };
    let cfg = ExperimentConfig {
        name: "td".into(),
        env: args.env.parse()?,
        gamma: args.gamma,
        algorithms: vec![algo],
        target: None,
        budget: Some(args.budget),
        max_iterations: harness::DEFAULT_MAX_ITERATIONS,
        seeds: match &args.seeds {
            Some(s) => parse_seeds(s)?,
            None => vec![0],
        },
        out: args.out,
        stride: args.stride,
        cost_shift: true,
        rate_tail: harness::DEFAULT_RATE_TAIL,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Command::Solve { config, out, seeds } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            apply_overrides(&mut cfg, out, seeds.as_deref())?;
            finish(harness::run_config(&cfg)?)
        }
        Command::Td(args) => finish(harness::run_config(&td_config(args)?)?),
        Command::Spectrum { env, top, seed } => {
            let env: EnvSpec = env.parse()?;
            let report = harness::env_spectrum(&env, seed)?;
            println!("# {} ordering={}", env.name(), report.ordering_rule);
            println!("index,re,im,modulus");
            for (i, l) in report.eigenvalues.iter().take(top).enumerate() {
                println!("{},{:?},{:?},{:?}", i + 1, l.re, l.im, l.norm());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { env, kind, rank, m, seed } => {
            let env: EnvSpec = env.parse()?;
            let how: DeflationBuild = serde_json::from_value(serde_json::Value::String(kind.clone()))
                .map_err(|_| Error::config("--kind", format!("unknown deflation kind {kind:?}")))?;
            let r = harness::env_verify(&env, how, rank, m, seed)?;
            println!("rank,rho_deflated,next_modulus,abs_diff,tail_mismatch,imag_residue,pass");
            println!(
                "{},{:?},{:?},{:?},{:?},{:?},{}",
                r.rank, r.rho_deflated, r.next_modulus, r.abs_diff, r.tail_mismatch, r.imag_residue, r.pass
            );
            Ok(if r.pass { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
        Command::Sweep { config, axis, values, out, seeds } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            apply_overrides(&mut cfg, out, seeds.as_deref())?;
            let axis: SweepAxis = axis.parse()?;
            let rows = harness::sweep(&cfg, axis, &values)?;
            println!("{}", harness::SWEEP_HEADER.join(","));
            let opt = |x: Option<f64>| x.map(|v| format!("{v:?}")).unwrap_or_default();
            for r in &rows {
                println!(
                    "{},{},{},{:?},{},{},{},{}",
                    r.algo,
                    r.env,
                    serde_json::to_value(r.axis).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
                    r.value,
                    r.seed_count,
                    r.censored,
                    opt(r.iters_to_target),
                    opt(r.wallclock_to_target)
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                _ if e.is_config() => ExitCode::from(2),
                Error::Io(_) | Error::Format(_) => ExitCode::from(1),
                _ => ExitCode::from(3),
            }
        }
    }
}
