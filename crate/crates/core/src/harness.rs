//! Experiment orchestration: JSON configs, per-run trace CSVs, seed
//! aggregation, cost shifting and sweeps over state count or horizon.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deflation::{self, DeflationMatrix, DeflationReport, SchurSource};
use crate::envs::{self, GarnetParams};
use crate::error::{Error, Result};
use crate::mdp::{self, Policy, TabularMdp};
use crate::solvers::{self, AutoConfig, SolveTrace, StopRule, TraceRecord};
use crate::spectra::{self, SpectrumReport};
use crate::td::{self, DdtdParams, ModelSource, SampleRun, StepSizeSchedule};

pub const TRACE_HEADER: [&str; 5] = ["iteration", "cost_index", "norm_err_l1", "sup_err", "wallclock_s"];
pub const SUMMARY_HEADER: [&str; 9] =
    ["algo", "env", "seed_count", "param", "mean_err", "stderr", "iters_to_target", "rate_fit", "cost_shift"];
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;
pub const DEFAULT_RATE_TAIL: f64 = 0.5;
pub const DEFAULT_QR_M: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Maze,
    /// Maze with the policy used for the sample-based experiments.
    MazeTd,
    Chainwalk,
    Cliffwalk,
    Garnet {
        n_states: usize,
        #[serde(default = "default_garnet_actions")]
        n_actions: usize,
        branching: usize,
        n_reward_states: usize,
        /// Fixed instance seed; when absent every run seed draws its own
        /// instance.
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn default_garnet_actions() -> usize {
    4
}

impl EnvSpec {
    pub fn name(&self) -> String {
        match self {
            EnvSpec::Maze => "maze".into(),
            EnvSpec::MazeTd => "maze_td".into(),
            EnvSpec::Chainwalk => "chainwalk".into(),
            EnvSpec::Cliffwalk => "cliffwalk".into(),
            EnvSpec::Garnet { n_states, branching, n_reward_states, .. } => {
                format!("garnet-n{n_states}-bp{branching}-br{n_reward_states}")
            }
        }
    }

    pub fn build(&self, run_seed: u64) -> Result<(TabularMdp, Policy)> {
        Ok(match self {
            EnvSpec::Maze => envs::build_maze(),
            EnvSpec::MazeTd => envs::build_maze_td(),
            EnvSpec::Chainwalk => envs::build_chainwalk(),
            EnvSpec::Cliffwalk => envs::build_cliffwalk(),
            EnvSpec::Garnet { .. } => envs::build_garnet(&self.garnet_params(run_seed).expect("garnet spec"))?,
        })
    }

    fn garnet_params(&self, run_seed: u64) -> Option<GarnetParams> {
        match *self {
            EnvSpec::Garnet { n_states, n_actions, branching, n_reward_states, seed } => Some(GarnetParams {
                n_states,
                n_actions,
                branching,
                n_reward_states,
                seed: seed.unwrap_or(run_seed),
            }),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Some(p) = self.garnet_params(0) {
            p.validate().map_err(|e| Error::config("env", e.to_string()))?;
        }
        Ok(())
    }
}

impl FromStr for EnvSpec {
    type Err = Error;

    /// "maze", "maze_td", "chainwalk", "cliffwalk" or
    /// "garnet:n,branching,reward_states[,seed]".
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config("env", format!("unknown environment {s:?}"));
        let spec = match s.split_once(':') {
            None => match s {
                "maze" => EnvSpec::Maze,
                "maze_td" => EnvSpec::MazeTd,
                "chainwalk" => EnvSpec::Chainwalk,
                "cliffwalk" => EnvSpec::Cliffwalk,
                _ => return Err(bad()),
            },
            Some(("garnet", args)) => {
                let nums: Vec<u64> =
                    args.split(',').map(|x| x.trim().parse()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
                match nums[..] {
                    [n, b, r] | [n, b, r, _] => EnvSpec::Garnet {
                        n_states: n as usize,
                        n_actions: default_garnet_actions(),
                        branching: b as usize,
                        n_reward_states: r as usize,
                        seed: nums.get(3).copied(),
                    },
                    _ => return Err(bad()),
                }
            }
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// How a fixed DDVI deflation matrix is obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeflationBuild {
    /// Schur vectors from QR iteration (m rounds).
    #[default]
    Schur,
    /// Schur vectors from the dense eigen-solver.
    SchurDense,
    Hotelling,
    /// Rank-1 with u = 𝟏 and uniform v.
    Wielandt,
}

fn one() -> f64 {
    1.0
}
fn auto_alpha() -> f64 {
    solvers::DEFAULT_AUTO_ALPHA
}
fn qr_m() -> usize {
    DEFAULT_QR_M
}
fn auto_c() -> usize {
    solvers::DEFAULT_AUTO_C
}
fn auto_eps() -> f64 {
    solvers::DEFAULT_AUTO_EPS
}
fn max_rank() -> usize {
    solvers::DEFAULT_MAX_RANK
}
fn period() -> usize {
    td::DEFAULT_PERIOD
}
fn theta() -> f64 {
    td::DEFAULT_THETA
}
fn learned() -> ModelSource {
    ModelSource::Learned
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgoSpec {
    Vi,
    Ddvi {
        rank: usize,
        #[serde(default = "one")]
        alpha: f64,
        #[serde(default = "qr_m")]
        m: usize,
        #[serde(default)]
        deflation: DeflationBuild,
    },
    Autopi {
        #[serde(default = "auto_alpha")]
        alpha: f64,
        #[serde(default = "auto_c")]
        c: usize,
        #[serde(default = "auto_eps")]
        epsilon: f64,
        #[serde(default = "max_rank")]
        max_rank: usize,
    },
    Autoqr {
        #[serde(default = "auto_alpha")]
        alpha: f64,
        #[serde(default = "auto_c")]
        c: usize,
        #[serde(default = "auto_eps")]
        epsilon: f64,
        #[serde(default = "max_rank")]
        max_rank: usize,
    },
    ViControl,
    /// Rank-1 DDVI for control with uniform v.
    DdviControl,
    Td {
        schedule: StepSizeSchedule,
    },
    Ddtd {
        rank: usize,
        #[serde(default = "one")]
        alpha: f64,
        schedule: StepSizeSchedule,
        #[serde(default = "period")]
        period: usize,
        #[serde(default = "theta")]
        theta: f64,
        #[serde(default = "qr_m")]
        m: usize,
        #[serde(default = "learned")]
        model: ModelSource,
    },
    Dyna {
        #[serde(default = "theta")]
        theta: f64,
        #[serde(default = "period")]
        period: usize,
    },
}

impl AlgoSpec {
    pub fn base_label(&self) -> String {
        match self {
            AlgoSpec::Vi => "vi".into(),
            AlgoSpec::Ddvi { rank, deflation, .. } => match deflation {
                DeflationBuild::Schur => format!("ddvi-r{rank}"),
                DeflationBuild::SchurDense => format!("ddvi-r{rank}-dense"),
                DeflationBuild::Hotelling => format!("ddvi-r{rank}-hotelling"),
                DeflationBuild::Wielandt => format!("ddvi-r{rank}-wielandt"),
            },
            AlgoSpec::Autopi { .. } => "autopi".into(),
            AlgoSpec::Autoqr { .. } => "autoqr".into(),
            AlgoSpec::ViControl => "vi-control".into(),
            AlgoSpec::DdviControl => "ddvi-control".into(),
            AlgoSpec::Td { .. } => "td".into(),
            AlgoSpec::Ddtd { rank, .. } => format!("ddtd-r{rank}"),
            AlgoSpec::Dyna { .. } => "dyna".into(),
        }
    }

    /// Parameters as `key=value` pairs joined by ';'.
    pub fn param(&self) -> String {
        match self {
            AlgoSpec::Vi | AlgoSpec::ViControl | AlgoSpec::DdviControl => String::new(),
            AlgoSpec::Ddvi { rank, alpha, m, deflation } => {
                format!("rank={rank};alpha={alpha:?};m={m};deflation={}", serde_name(deflation))
            }
            AlgoSpec::Autopi { alpha, c, epsilon, max_rank } | AlgoSpec::Autoqr { alpha, c, epsilon, max_rank } => {
                format!("alpha={alpha:?};c={c};epsilon={epsilon:?};max_rank={max_rank}")
            }
            AlgoSpec::Td { schedule } => format!("schedule={schedule}"),
            AlgoSpec::Ddtd { rank, alpha, schedule, period, theta, m, model } => format!(
                "rank={rank};alpha={alpha:?};schedule={schedule};period={period};theta={theta:?};m={m};model={}",
                serde_name(model)
            ),
            AlgoSpec::Dyna { theta, period } => format!("theta={theta:?};period={period}"),
        }
    }

    pub fn is_sample_based(&self) -> bool {
        matches!(self, AlgoSpec::Td { .. } | AlgoSpec::Ddtd { .. } | AlgoSpec::Dyna { .. })
    }

    pub fn is_control(&self) -> bool {
        matches!(self, AlgoSpec::ViControl | AlgoSpec::DdviControl)
    }

    fn validate(&self, path: &str) -> Result<()> {
        let alpha_ok = |a: f64| {
            if a > 0.0 && a <= 1.0 {
                Ok(())
            } else {
                Err(Error::config(format!("{path}.alpha"), format!("{a} outside (0,1]")))
            }
        };
        match *self {
            AlgoSpec::Ddvi { rank, alpha, m, deflation } => {
                alpha_ok(alpha)?;
                if deflation == DeflationBuild::Wielandt && rank != 1 {
                    return Err(Error::config(format!("{path}.rank"), "wielandt deflation is rank 1"));
                }
                if deflation == DeflationBuild::Schur && rank > 0 && m == 0 {
                    return Err(Error::config(format!("{path}.m"), "QR iteration needs at least one round"));
                }
            }
            AlgoSpec::Autopi { alpha, c, epsilon, max_rank } | AlgoSpec::Autoqr { alpha, c, epsilon, max_rank } => {
                alpha_ok(alpha)?;
                if c < 2 {
                    return Err(Error::config(format!("{path}.c"), "needs at least 2"));
                }
                if !(epsilon > 0.0) {
                    return Err(Error::config(format!("{path}.epsilon"), "must be positive"));
                }
                if max_rank == 0 {
                    return Err(Error::config(format!("{path}.max_rank"), "must be at least 1"));
                }
            }
            AlgoSpec::Ddtd { alpha, period, theta, m, rank, .. } => {
                alpha_ok(alpha)?;
                if period == 0 {
                    return Err(Error::config(format!("{path}.period"), "must be at least 1"));
                }
                if !(0.0..=1.0).contains(&theta) {
                    return Err(Error::config(format!("{path}.theta"), format!("{theta} outside [0,1]")));
                }
                if rank > 0 && m == 0 {
                    return Err(Error::config(format!("{path}.m"), "QR iteration needs at least one round"));
                }
            }
            AlgoSpec::Dyna { theta, period } => {
                if period == 0 {
                    return Err(Error::config(format!("{path}.period"), "must be at least 1"));
                }
                if !(0.0..=1.0).contains(&theta) {
                    return Err(Error::config(format!("{path}.theta"), format!("{theta} outside [0,1]")));
                }
            }
            AlgoSpec::Vi | AlgoSpec::ViControl | AlgoSpec::DdviControl | AlgoSpec::Td { .. } => {}
        }
        Ok(())
    }
}

fn serde_name<T: Serialize>(x: &T) -> String {
    serde_json::to_value(x).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

fn default_name() -> String {
    "experiment".into()
}
fn default_gamma() -> f64 {
    envs::DEFAULT_DISCOUNT
}
fn default_max_iterations() -> usize {
    DEFAULT_MAX_ITERATIONS
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_stride() -> usize {
    td::DEFAULT_STRIDE
}
fn yes() -> bool {
    true
}
fn default_tail() -> f64 {
    DEFAULT_RATE_TAIL
}

/// One experiment: every algorithm is run for every seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub env: EnvSpec,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub algorithms: Vec<AlgoSpec>,
    /// Normalized-error target for planning runs.
    #[serde(default)]
    pub target: Option<f64>,
    /// Exact iteration count for planning runs, sample count for TD runs.
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Samples between trace records of sample-based runs.
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Shift cost indices by the E-build cost m·s.
    #[serde(default = "yes")]
    pub cost_shift: bool,
    /// Fraction of the trace used for the empirical rate.
    #[serde(default = "default_tail")]
    pub rate_tail: f64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::config("<config>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), format!("cannot read: {e}")))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config { path: p, msg } if p == "<config>" => Error::config(path.display().to_string(), msg),
            e => e,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("gamma", format!("{} outside [0,1)", self.gamma)));
        }
        self.env.validate()?;
        if self.algorithms.is_empty() {
            return Err(Error::config("algorithms", "no algorithms listed"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "no seeds listed"));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("seeds", "duplicate seed"));
        }
        if let Some(t) = self.target {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::config("target", format!("{t} must be positive")));
            }
        }
        if self.stride == 0 {
            return Err(Error::config("stride", "must be positive"));
        }
        if !(self.rate_tail > 0.0 && self.rate_tail <= 1.0) {
            return Err(Error::config("rate_tail", "must lie in (0,1]"));
        }
        for (i, a) in self.algorithms.iter().enumerate() {
            let path = format!("algorithms[{i}]");
            a.validate(&path)?;
            if a.is_sample_based() && self.budget.is_none() {
                return Err(Error::config("budget", format!("{path} is sample-based and needs a sample budget")));
            }
            if !a.is_sample_based() && self.budget.is_none() && self.target.is_none() {
                return Err(Error::config("target", "planning runs need a target or a budget"));
            }
        }
        Ok(())
    }

    /// Unique file-name-safe labels, suffixed with the position when an
    /// algorithm appears more than once.
    pub fn labels(&self) -> Vec<String> {
        let base: Vec<String> = self.algorithms.iter().map(AlgoSpec::base_label).collect();
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for b in &base {
            *counts.entry(b).or_default() += 1;
        }
        base.iter().enumerate().map(|(i, b)| if counts[b.as_str()] > 1 { format!("{b}-{i}") } else { b.clone() }).collect()
    }

    fn stop_rule(&self, reference: Vec<f64>) -> StopRule {
        StopRule { max_iterations: self.max_iterations, target: self.target, budget: self.budget, reference: Some(reference) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostMode {
    /// cost_index = k + m·s.
    Iterations,
    /// cost_index = k.
    Unshifted,
}

/// Re-indexes a trace by VI-iteration cost. AutoPI/AutoQR build E inside the
/// iteration loop and are never shifted.
pub fn cost_shift(trace: &SolveTrace, m: usize, s: usize, mode: CostMode) -> SolveTrace {
    let auto = matches!(trace.meta.algo.as_str(), "autopi" | "autoqr");
    let shift = match mode {
        CostMode::Iterations if !auto => m * s,
        _ => 0,
    };
    let mut out = trace.clone();
    for r in &mut out.records {
        r.cost_index = r.iteration + shift;
    }
    out.meta.build_cost = shift;
    out
}

/// Runs one algorithm for one seed.
pub fn run_single(cfg: &ExperimentConfig, algo: &AlgoSpec, seed: u64) -> Result<SolveTrace> {
    let (mdp, policy) = cfg.env.build(seed)?;
    let gamma = cfg.gamma;
    let mdp = mdp.with_discount(gamma)?;
    let n = mdp.n_states();
    let v0 = vec![0.0; n];
    if algo.is_control() {
        let (vstar, _) = mdp::exact_value_control(&mdp, gamma)?;
        let stop = cfg.stop_rule(vstar);
        let mut trace = match algo {
            AlgoSpec::ViControl => solvers::vi_control(&mdp, gamma, &v0, &stop)?,
            _ => solvers::ddvi_control_rank1(&mdp, gamma, &vec![1.0 / n as f64; n], &v0, &stop)?,
        };
        trace.meta.seed = Some(seed);
        return Ok(trace);
    }
    let chain = mdp::induce_chain(&mdp, &policy)?;
    let vpi = mdp::exact_value_pe(&chain, gamma)?;
    if algo.is_sample_based() {
        let budget = cfg.budget.expect("validated");
        let mk = |schedule| SampleRun { stride: cfg.stride, ..SampleRun::new(gamma, schedule, budget, seed, vpi.clone()) };
        return match *algo {
            AlgoSpec::Td { schedule } => td::run_td(&mdp, &policy, &mk(schedule)),
            AlgoSpec::Ddtd { rank, alpha, schedule, period, theta, m, model } => {
                let params = DdtdParams { rank, alpha, period, theta, qr_m: m, model };
                td::run_ddtd(&mdp, &policy, &params, &mk(schedule))
            }
            AlgoSpec::Dyna { theta, period } => {
                td::run_dyna(&mdp, &policy, theta, period, &mk(StepSizeSchedule::VisitCount))
            }
            _ => unreachable!("sample-based variants handled above"),
        };
    }
    let stop = cfg.stop_rule(vpi);
    let mode = if cfg.cost_shift { CostMode::Iterations } else { CostMode::Unshifted };
    let mut trace = match *algo {
        AlgoSpec::Vi => solvers::vi_pe(&chain, gamma, &v0, &stop)?,
        AlgoSpec::Ddvi { rank, alpha, m, deflation: DeflationBuild::Schur } => {
            let t = solvers::ddvi_qr(&chain, gamma, rank, alpha, m, seed, &v0, &stop)?;
            let s = t.meta.rank;
            cost_shift(&t, m, s, mode)
        }
        AlgoSpec::Ddvi { rank, alpha, deflation, .. } => {
            let mut adjusted = None;
            let e = match deflation {
                DeflationBuild::Wielandt => deflation::build_wielandt_rank1(&vec![1.0 / n as f64; n])?,
                _ => {
                    let s = deflation::conjugate_adjusted_rank(&chain.p_pi, rank)?;
                    if s != rank {
                        adjusted = Some(rank);
                    }
                    build_dense(&chain.p_pi, s, deflation)?
                }
            };
            let mut t = solvers::ddvi(&chain, gamma, &e, alpha, &v0, &stop)?;
            t.meta.rank_adjusted_from = adjusted;
            t
        }
        AlgoSpec::Autopi { alpha, c, epsilon, max_rank } | AlgoSpec::Autoqr { alpha, c, epsilon, max_rank } => {
            let auto = AutoConfig { alpha_schedule: vec![alpha], c, epsilon, max_rank, v1: None };
            match algo {
                AlgoSpec::Autopi { .. } => solvers::ddvi_autopi(&chain, gamma, &auto, &v0, &stop)?,
                _ => solvers::ddvi_autoqr(&chain, gamma, &auto, &v0, &stop)?,
            }
        }
        _ => unreachable!("control and sample-based variants handled above"),
    };
    trace.meta.seed = Some(seed);
    Ok(trace)
}

fn build_dense(p: &crate::linalg::Mat, s: usize, how: DeflationBuild) -> Result<DeflationMatrix> {
    match how {
        DeflationBuild::Hotelling => deflation::build_hotelling(p, s),
        _ => deflation::build_schur(p, s, SchurSource::Dense),
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub label: String,
    pub seed: u64,
    pub result: std::result::Result<SolveTrace, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algo: String,
    pub env: String,
    pub seed_count: usize,
    pub param: String,
    pub mean_err: f64,
    pub stderr: f64,
    pub iters_to_target: Option<f64>,
    pub rate_fit: Option<f64>,
    pub cost_shift: usize,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub runs: Vec<RunOutcome>,
    pub summaries: Vec<SummaryRow>,
}

impl RunReport {
    pub fn failures(&self) -> impl Iterator<Item = &RunOutcome> {
        self.runs.iter().filter(|r| r.result.is_err())
    }
}

pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Aggregates the completed runs of one algorithm. Runs that never reach
/// the target are censored: they count towards the terminal error but not
/// towards iterations-to-target.
pub fn summarize(
    algo: &str,
    env: &str,
    param: &str,
    traces: &[&SolveTrace],
    target: Option<f64>,
    rate_tail: f64,
) -> SummaryRow {
    let terminal: Vec<f64> = traces.iter().map(|t| t.last_error()).collect();
    let (mean_err, stderr) = mean_stderr(&terminal);
    let hits: Vec<f64> =
        target.map_or(Vec::new(), |tg| traces.iter().filter_map(|t| t.iterations_to(tg)).map(|k| k as f64).collect());
    let rates: Vec<f64> = traces.iter().filter_map(|t| solvers::empirical_rate(t, rate_tail).ok()).collect();
    SummaryRow {
        algo: algo.into(),
        env: env.into(),
        seed_count: traces.len(),
        param: param.into(),
        mean_err,
        stderr,
        iters_to_target: (!hits.is_empty()).then(|| mean_stderr(&hits).0),
        rate_fit: (!rates.is_empty()).then(|| mean_stderr(&rates).0),
        cost_shift: traces.first().map_or(0, |t| t.meta.build_cost),
    }
}

/// Executes every (algorithm, seed) pair, writing one trace CSV per
/// completed run plus `summary.csv` when `cfg.out` is set.
pub fn run_config(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let labels = cfg.labels();
    let jobs: Vec<(usize, u64)> =
        (0..cfg.algorithms.len()).flat_map(|i| cfg.seeds.iter().map(move |&s| (i, s))).collect();
    let runs: Vec<RunOutcome> = jobs
        .par_iter()
        .map(|&(i, seed)| RunOutcome {
            label: labels[i].clone(),
            seed,
            result: run_single(cfg, &cfg.algorithms[i], seed).map_err(|e| e.to_string()),
        })
        .collect();
    let env = cfg.env.name();
    let summaries = labels
        .iter()
        .zip(&cfg.algorithms)
        .map(|(label, algo)| {
            let done: Vec<&SolveTrace> =
                runs.iter().filter(|r| &r.label == label).filter_map(|r| r.result.as_ref().ok()).collect();
            summarize(label, &env, &algo.param(), &done, cfg.target, cfg.rate_tail)
        })
        .collect();
    let report = RunReport { runs, summaries };
    if let Some(dir) = &cfg.out {
        write_report(dir, &report)?;
    }
    Ok(report)
}

pub fn trace_file_name(label: &str, seed: u64) -> String {
    format!("{label}_seed{seed}.csv")
}

pub fn write_report(dir: &Path, report: &RunReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    for run in &report.runs {
        if let Ok(trace) = &run.result {
            write_trace_csv(&dir.join(trace_file_name(&run.label, run.seed)), &trace.records)?;
        }
    }
    write_summary_csv(&dir.join("summary.csv"), &report.summaries)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Writes via a temporary file in the target directory and renames it into
/// place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn to_csv<T: Serialize>(header: &[&str], rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

pub fn trace_csv(records: &[TraceRecord]) -> Result<Vec<u8>> {
    to_csv(&TRACE_HEADER, records)
}

pub fn write_trace_csv(path: &Path, records: &[TraceRecord]) -> Result<()> {
    write_atomic(path, &trace_csv(records)?)
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_atomic(path, &to_csv(&SUMMARY_HEADER, rows)?)
}

fn from_csv<T: for<'de> Deserialize<'de>>(path: &Path, header: &[&str]) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let got: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    if got != header {
        return Err(Error::Format(format!("{}: unexpected header {got:?}", path.display())));
    }
    r.deserialize().collect::<std::result::Result<Vec<T>, _>>().map_err(csv_err)
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRecord>> {
    from_csv(path, &TRACE_HEADER)
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    from_csv(path, &SUMMARY_HEADER)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Garnet state count; the reward-state fraction of the template is kept.
    NStates,
    /// Effective horizon h, with γ = 1 − 1/h.
    Horizon,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n_states" => Ok(SweepAxis::NStates),
            "horizon" => Ok(SweepAxis::Horizon),
            _ => Err(Error::config("axis", format!("unknown sweep axis {s:?}"))),
        }
    }
}

pub const SWEEP_HEADER: [&str; 8] =
    ["algo", "env", "axis", "value", "seed_count", "censored", "iters_to_target", "wallclock_to_target"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub algo: String,
    pub env: String,
    pub axis: SweepAxis,
    pub value: f64,
    /// Runs that reached the target.
    pub seed_count: usize,
    /// Runs that did not reach the target (or failed).
    pub censored: usize,
    pub iters_to_target: Option<f64>,
    pub wallclock_to_target: Option<f64>,
}

/// The template with one sweep value applied.
pub fn sweep_point(template: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig> {
    let mut cfg = template.clone();
    cfg.out = None;
    match axis {
        SweepAxis::Horizon => {
            if !(value > 1.0) {
                return Err(Error::config("values", format!("horizon {value} must exceed 1")));
            }
            cfg.gamma = 1.0 - 1.0 / value;
        }
        SweepAxis::NStates => match &mut cfg.env {
            EnvSpec::Garnet { n_states, n_reward_states, branching, .. } => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::config("values", format!("state count {value} is not a positive integer")));
                }
                let n = value as usize;
                let frac = *n_reward_states as f64 / *n_states as f64;
                *n_reward_states = ((frac * n as f64).round() as usize).clamp(1, n);
                *branching = (*branching).min(n);
                *n_states = n;
            }
            _ => return Err(Error::config("axis", "the n_states axis needs a garnet environment")),
        },
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the template at every axis value and reports iterations and
/// wall-clock seconds to the target; runs missing the target are censored
/// and excluded from the means.
pub fn sweep(template: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    let target = template.target.ok_or_else(|| Error::config("target", "sweeps need a target"))?;
    let mut rows = Vec::new();
    for &value in values {
        let cfg = sweep_point(template, axis, value)?;
        let report = run_config(&cfg)?;
        let env = cfg.env.name();
        for label in cfg.labels() {
            let runs: Vec<&RunOutcome> = report.runs.iter().filter(|r| r.label == label).collect();
            let hits: Vec<&TraceRecord> = runs
                .iter()
                .filter_map(|r| r.result.as_ref().ok())
                .filter_map(|t| t.records.iter().find(|rec| rec.norm_err_l1 <= target))
                .collect();
            let iters: Vec<f64> = hits.iter().map(|r| r.iteration as f64).collect();
            let secs: Vec<f64> = hits.iter().map(|r| r.wallclock_s).collect();
            rows.push(SweepRow {
                algo: label,
                env: env.clone(),
                axis,
                value,
                seed_count: hits.len(),
                censored: runs.len() - hits.len(),
                iters_to_target: (!hits.is_empty()).then(|| mean_stderr(&iters).0),
                wallclock_to_target: (!hits.is_empty()).then(|| mean_stderr(&secs).0),
            });
        }
    }
    if let Some(dir) = &template.out {
        fs::create_dir_all(dir)?;
        write_atomic(&dir.join("sweep.csv"), &to_csv(&SWEEP_HEADER, &rows)?)?;
    }
    Ok(rows)
}

/// Dense spectrum of an environment's evaluation chain.
pub fn env_spectrum(env: &EnvSpec, seed: u64) -> Result<SpectrumReport> {
    let (mdp, policy) = env.build(seed)?;
    spectra::dense_spectrum(&mdp::induce_chain(&mdp, &policy)?.p_pi)
}

/// Builds a rank-s deflation of an environment's evaluation chain and checks
/// it against the dense spectrum. The rank is raised when it would split a
/// conjugate pair.
pub fn env_verify(env: &EnvSpec, how: DeflationBuild, s: usize, m: usize, seed: u64) -> Result<DeflationReport> {
    let (mdp, policy) = env.build(seed)?;
    let p = mdp::induce_chain(&mdp, &policy)?.p_pi;
    let e = match how {
        DeflationBuild::Wielandt => deflation::build_wielandt_rank1(&vec![1.0 / p.rows() as f64; p.rows()])?,
        DeflationBuild::Schur => {
            let s = deflation::conjugate_adjusted_rank(&p, s)?;
            deflation::build_schur(&p, s, SchurSource::Iterative { m, seed })?
        }
        _ => build_dense(&p, deflation::conjugate_adjusted_rank(&p, s)?, how)?,
    };
    deflation::verify_deflation(&p, &e)
}
