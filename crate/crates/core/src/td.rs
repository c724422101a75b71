//! Sample-based policy evaluation: TD(0), deflated dynamics TD and a Dyna
//! baseline, all driven by i.i.d. uniform-state transition samples.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::deflation::{self, DeflationMatrix, SchurSource};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::mdp::{self, Policy, PolicyInducedChain, TabularMdp};
use crate::solvers::{SolveTrace, TraceMeta, TraceRecord};

pub const DEFAULT_STRIDE: usize = 100;
pub const DEFAULT_PERIOD: usize = 10;
pub const DEFAULT_THETA: f64 = 0.3;
pub const DEFAULT_QR_ROUNDS: usize = 100;
/// Stream id of the generator that seeds QR-iteration starts, so rebuilding
/// E never perturbs the sample sequence.
const QR_STREAM: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionSample {
    pub x: usize,
    pub a: usize,
    pub r: f64,
    pub next: usize,
}

/// Draws (X, A, R, X') with X uniform, A ~ π(·|X), X' ~ P(·|X, A) and
/// R = r(X, A).
pub struct Sampler<'a> {
    mdp: &'a TabularMdp,
    actions: Vec<WeightedIndex<f64>>,
    next: Vec<WeightedIndex<f64>>,
}

impl<'a> Sampler<'a> {
    pub fn new(mdp: &'a TabularMdp, policy: &Policy) -> Result<Self> {
        if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
            return Err(Error::Dimension("policy and MDP sizes differ".into()));
        }
        let weighted = |w: &[f64]| WeightedIndex::new(w).map_err(|e| Error::Invalid(format!("sampling weights: {e}")));
        let actions = (0..mdp.n_states()).map(|x| weighted(policy.action_probs(x))).collect::<Result<_>>()?;
        let mut next = Vec::with_capacity(mdp.n_states() * mdp.n_actions());
        for x in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                next.push(weighted(mdp.p(x, a))?);
            }
        }
        Ok(Sampler { mdp, actions, next })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TransitionSample {
        let x = rng.gen_range(0..self.mdp.n_states());
        let a = self.actions[x].sample(rng);
        let next = self.next[x * self.mdp.n_actions() + a].sample(rng);
        TransitionSample { x, a, r: self.mdp.r(x, a), next }
    }
}

pub fn sample_transition<R: Rng + ?Sized>(mdp: &TabularMdp, policy: &Policy, rng: &mut R) -> Result<TransitionSample> {
    Ok(Sampler::new(mdp, policy)?.sample(rng))
}

/// Visit counts and reward sums per (x, a).
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalModel {
    n_states: usize,
    n_actions: usize,
    counts: Vec<u64>,
    visits: Vec<u64>,
    reward_sums: Vec<f64>,
}

impl EmpiricalModel {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        EmpiricalModel {
            n_states,
            n_actions,
            counts: vec![0; n_states * n_actions * n_states],
            visits: vec![0; n_states * n_actions],
            reward_sums: vec![0.0; n_states * n_actions],
        }
    }

    pub fn update(&mut self, t: &TransitionSample) {
        let xa = t.x * self.n_actions + t.a;
        self.counts[xa * self.n_states + t.next] += 1;
        self.visits[xa] += 1;
        self.reward_sums[xa] += t.r;
    }

    pub fn visits(&self, x: usize, a: usize) -> u64 {
        self.visits[x * self.n_actions + a]
    }

    /// Maximum-likelihood next-state row, None when (x, a) is unvisited.
    pub fn mle_row(&self, x: usize, a: usize) -> Option<Vec<f64>> {
        let xa = x * self.n_actions + a;
        let total = self.visits[xa];
        (total > 0).then(|| {
            self.counts[xa * self.n_states..(xa + 1) * self.n_states]
                .iter()
                .map(|&c| c as f64 / total as f64)
                .collect()
        })
    }

    /// Mean observed reward, 0 when unvisited.
    pub fn mean_reward(&self, x: usize, a: usize) -> f64 {
        let xa = x * self.n_actions + a;
        match self.visits[xa] {
            0 => 0.0,
            c => self.reward_sums[xa] / c as f64,
        }
    }

    /// π-chain of the θ-smoothed model; unvisited pairs use the uniform
    /// distribution over all states. Also returns the number of unvisited
    /// pairs that π puts mass on.
    pub fn smoothed_chain(&self, policy: &Policy, theta: f64) -> Result<(PolicyInducedChain, usize)> {
        let n = self.n_states;
        let mut p = Mat::zeros(n, n);
        let mut r = vec![0.0; n];
        let mut unvisited = 0;
        for x in 0..n {
            for a in 0..self.n_actions {
                let pa = policy.prob(x, a);
                if pa == 0.0 {
                    continue;
                }
                let (row, flagged) = match self.mle_row(x, a) {
                    Some(mle) => smooth_model(&mle, theta)?,
                    None => (vec![1.0 / n as f64; n], true),
                };
                unvisited += flagged as usize;
                r[x] += pa * self.mean_reward(x, a);
                linalg::axpy(pa, &row, p.row_mut(x));
            }
        }
        Ok((PolicyInducedChain::new(p, r)?, unvisited))
    }
}

/// (1−θ)·row + θ·Uniform(support of row). An empty support yields the
/// uniform distribution over all entries and a `true` flag.
pub fn smooth_model(row: &[f64], theta: f64) -> Result<(Vec<f64>, bool)> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Invalid(format!("smoothing θ = {theta} outside [0,1]")));
    }
    let support = row.iter().filter(|&&p| p > 0.0).count();
    if support == 0 {
        return Ok((vec![1.0 / row.len() as f64; row.len()], true));
    }
    let u = theta / support as f64;
    Ok((row.iter().map(|&p| if p > 0.0 { (1.0 - theta) * p + u } else { 0.0 }).collect(), false))
}

/// Serialized as its string form ("visit", "harmonic:C", "const:eta").
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StepSizeSchedule {
    /// 1/(number of visits to x so far, including this one).
    VisitCount,
    /// C/(k+1) with k the global sample index.
    Harmonic { c: f64 },
    Constant { eta: f64 },
}

impl StepSizeSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSizeSchedule::Harmonic { c } if !(c > 0.0 && c.is_finite()) => {
                Err(Error::Invalid(format!("harmonic step constant {c} must be positive")))
            }
            StepSizeSchedule::Constant { eta } if !(eta > 0.0 && eta.is_finite()) => {
                Err(Error::Invalid(format!("constant step {eta} must be positive")))
            }
            _ => Ok(()),
        }
    }

    pub fn step(&self, k: usize, visits: u64) -> f64 {
        match *self {
            StepSizeSchedule::VisitCount => 1.0 / visits.max(1) as f64,
            StepSizeSchedule::Harmonic { c } => c / (k + 1) as f64,
            StepSizeSchedule::Constant { eta } => eta,
        }
    }
}

impl FromStr for StepSizeSchedule {
    type Err = Error;

    /// Parses "visit", "harmonic:C" or "const:eta".
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Invalid(format!("unknown step-size schedule {s:?}"));
        let sched = match s.split_once(':') {
            None if s == "visit" => StepSizeSchedule::VisitCount,
            Some(("harmonic", c)) => StepSizeSchedule::Harmonic { c: c.parse().map_err(|_| bad())? },
            Some(("const", eta)) => StepSizeSchedule::Constant { eta: eta.parse().map_err(|_| bad())? },
            _ => return Err(bad()),
        };
        sched.validate()?;
        Ok(sched)
    }
}

impl TryFrom<String> for StepSizeSchedule {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StepSizeSchedule> for String {
    fn from(s: StepSizeSchedule) -> String {
        s.to_string()
    }
}

impl fmt::Display for StepSizeSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSizeSchedule::VisitCount => write!(f, "visit"),
            StepSizeSchedule::Harmonic { c } => write!(f, "harmonic:{c}"),
            StepSizeSchedule::Constant { eta } => write!(f, "const:{eta}"),
        }
    }
}

/// Settings shared by every sample-based run.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRun {
    pub gamma: f64,
    pub schedule: StepSizeSchedule,
    pub budget: usize,
    pub seed: u64,
    /// Record every `stride` samples (and after the last one).
    pub stride: usize,
    /// True value used for the recorded errors.
    pub oracle: Vec<f64>,
    /// Keep a copy of V at every record.
    pub keep_values: bool,
}

impl SampleRun {
    pub fn new(gamma: f64, schedule: StepSizeSchedule, budget: usize, seed: u64, oracle: Vec<f64>) -> Self {
        SampleRun { gamma, schedule, budget, seed, stride: DEFAULT_STRIDE, oracle, keep_values: false }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Invalid(format!("discount {} outside [0,1)", self.gamma)));
        }
        if self.stride == 0 {
            return Err(Error::Invalid("trace stride must be positive".into()));
        }
        if self.oracle.len() != n {
            return Err(Error::Dimension(format!("oracle of length {} for {n} states", self.oracle.len())));
        }
        if linalg::norm1(&self.oracle) == 0.0 {
            return Err(Error::Invalid("oracle value has zero L1 norm".into()));
        }
        self.schedule.validate()
    }
}

struct SampleRecorder<'a> {
    run: &'a SampleRun,
    start: Instant,
    records: Vec<TraceRecord>,
    values: Vec<Vec<f64>>,
}

impl<'a> SampleRecorder<'a> {
    fn new(run: &'a SampleRun) -> Self {
        SampleRecorder { run, start: Instant::now(), records: Vec::new(), values: Vec::new() }
    }

    fn maybe_push(&mut self, k: usize, v: &[f64]) {
        if k % self.run.stride != 0 && k != self.run.budget {
            return;
        }
        let oracle = &self.run.oracle;
        let l1 = v.iter().zip(oracle).map(|(a, b)| (a - b).abs()).sum::<f64>() / linalg::norm1(oracle);
        self.records.push(TraceRecord {
            iteration: k,
            cost_index: k,
            norm_err_l1: l1,
            sup_err: linalg::sup_dist(v, oracle),
            wallclock_s: self.start.elapsed().as_secs_f64(),
        });
        if self.run.keep_values {
            self.values.push(v.to_vec());
        }
    }

    fn finish(self, v: Vec<f64>, w: Option<Vec<f64>>, meta: TraceMeta) -> SolveTrace {
        SolveTrace {
            records: self.records,
            final_v: v,
            final_w: w,
            policies: Vec::new(),
            values: self.values,
            reached_target: false,
            meta,
        }
    }
}

/// TD(0): V(X) += η[R + γV(X') − V(X)].
pub fn run_td(mdp: &TabularMdp, policy: &Policy, run: &SampleRun) -> Result<SolveTrace> {
    let n = mdp.n_states();
    run.validate(n)?;
    let sampler = Sampler::new(mdp, policy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let mut visits = vec![0u64; n];
    let mut v = vec![0.0; n];
    let mut rec = SampleRecorder::new(run);
    rec.maybe_push(0, &v);
    for k in 0..run.budget {
        let t = sampler.sample(&mut rng);
        visits[t.x] += 1;
        let eta = run.schedule.step(k, visits[t.x]);
        let td = (t.r + run.gamma * v[t.next]) - v[t.x];
        v[t.x] += eta * td;
        rec.maybe_push(k + 1, &v);
    }
    let meta = TraceMeta { algo: "td".into(), alpha: 1.0, seed: Some(run.seed), ..TraceMeta::default() };
    Ok(rec.finish(v, None, meta))
}

/// Where DDTD gets its deflation matrix from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    /// Rebuilt every K samples from the θ-smoothed empirical model.
    Learned,
    /// Built once from the true π-chain.
    Exact,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DdtdParams {
    pub rank: usize,
    pub alpha: f64,
    pub period: usize,
    pub theta: f64,
    pub qr_m: usize,
    pub model: ModelSource,
}

impl DdtdParams {
    pub fn new(rank: usize, alpha: f64) -> Self {
        DdtdParams {
            rank,
            alpha,
            period: DEFAULT_PERIOD,
            theta: DEFAULT_THETA,
            qr_m: DEFAULT_QR_ROUNDS,
            model: ModelSource::Learned,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.rank > n {
            return Err(Error::Invalid(format!("rank {} exceeds {n} states", self.rank)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Invalid(format!("relaxation α = {} outside (0,1]", self.alpha)));
        }
        if self.period == 0 {
            return Err(Error::Invalid("model update period must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Invalid(format!("smoothing θ = {} outside [0,1]", self.theta)));
        }
        Ok(())
    }
}

/// Rank-s Schur deflation of a chain, or an error when the build fails or
/// cannot separate |λ_s| from |λ_{s+1}|.
fn model_deflation(p: &Mat, rank: usize, m: usize, seed: u64) -> Result<DeflationMatrix> {
    let e = deflation::build_schur(p, rank, SchurSource::Iterative { m, seed })?;
    if !e.separated {
        return Err(Error::NotSeparated { s: rank });
    }
    Ok(e)
}

/// Deflated dynamics TD. Each sample updates one coordinate of W,
/// W(X) += η[αR + αγV(X') − αγ(EV)(X) + (1−α)V(X) − W(X)], and V is
/// recovered as (I − αγE)^{-1}W. With a learned model, E is rebuilt every
/// K samples from the smoothed empirical π-chain by QR iteration and W is
/// reset to (I − αγE)V; until the first rebuild E is empty.
pub fn run_ddtd(mdp: &TabularMdp, policy: &Policy, params: &DdtdParams, run: &SampleRun) -> Result<SolveTrace> {
    let n = mdp.n_states();
    run.validate(n)?;
    params.validate(n)?;
    let sampler = Sampler::new(mdp, policy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let mut qr_rng = ChaCha8Rng::seed_from_u64(run.seed);
    qr_rng.set_stream(QR_STREAM);
    let ag = params.alpha * run.gamma;
    let mut meta = TraceMeta {
        algo: "ddtd".into(),
        rank: params.rank,
        alpha: params.alpha,
        seed: Some(run.seed),
        ..TraceMeta::default()
    };

    let mut e = DeflationMatrix::empty(n);
    if params.rank > 0 && params.model == ModelSource::Exact {
        let chain = mdp::induce_chain(mdp, policy)?;
        e = model_deflation(&chain.p_pi, params.rank, params.qr_m, qr_rng.gen())?;
    }
    e.resolvent_coefficients(ag)?;
    let mut model = EmpiricalModel::new(n, mdp.n_actions());
    let mut visits = vec![0u64; n];
    let mut v = vec![0.0; n];
    let mut w = reset_w(&e, ag, &v)?;
    let mut ev = e.apply(&v)?;
    let mut rec = SampleRecorder::new(run);
    rec.maybe_push(0, &v);
    for k in 0..run.budget {
        let t = sampler.sample(&mut rng);
        model.update(&t);
        if params.rank > 0 && params.model == ModelSource::Learned && (k + 1) % params.period == 0 {
            let (chain, _) = model.smoothed_chain(policy, params.theta)?;
            match model_deflation(&chain.p_pi, params.rank, params.qr_m, qr_rng.gen())
                .and_then(|e_new| e_new.resolvent_coefficients(ag).map(|_| e_new))
            {
                Ok(e_new) => {
                    e = e_new;
                    w = reset_w(&e, ag, &v)?;
                    ev = e.apply(&v)?;
                }
                Err(err) => meta.events.push(format!("sample {}: kept previous deflation ({err})", k + 1)),
            }
        }
        visits[t.x] += 1;
        let eta = run.schedule.step(k, visits[t.x]);
        let a = params.alpha;
        let td = (a * t.r + ag * v[t.next]) - ag * ev[t.x] + (1.0 - a) * v[t.x] - w[t.x];
        w[t.x] += eta * td;
        v = e.apply_resolvent(ag, &w)?;
        if e.rank() > 0 {
            ev = e.apply(&v)?;
        }
        rec.maybe_push(k + 1, &v);
    }
    Ok(rec.finish(v, Some(w), meta))
}

/// W = (I − αγE)V by direct multiplication.
fn reset_w(e: &DeflationMatrix, ag: f64, v: &[f64]) -> Result<Vec<f64>> {
    let ev = e.apply(v)?;
    Ok(v.iter().zip(&ev).map(|(x, y)| x - ag * y).collect())
}

/// Dyna: every K samples V is set to the exact value of the smoothed
/// empirical model, (I − γP̃^π)^{-1} r̂^π.
pub fn run_dyna(mdp: &TabularMdp, policy: &Policy, theta: f64, period: usize, run: &SampleRun) -> Result<SolveTrace> {
    let n = mdp.n_states();
    run.validate(n)?;
    if period == 0 {
        return Err(Error::Invalid("model update period must be at least 1".into()));
    }
    let sampler = Sampler::new(mdp, policy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let mut model = EmpiricalModel::new(n, mdp.n_actions());
    let mut meta = TraceMeta { algo: "dyna".into(), seed: Some(run.seed), ..TraceMeta::default() };
    let plan = |model: &EmpiricalModel, meta: &mut TraceMeta, k: usize| -> Result<Vec<f64>> {
        let (chain, unvisited) = model.smoothed_chain(policy, theta)?;
        if unvisited > 0 && k == 0 {
            meta.events.push(format!("sample 0: {unvisited} unvisited pairs use the uniform model"));
        }
        mdp::exact_value_pe(&chain, run.gamma)
    };
    let mut v = plan(&model, &mut meta, 0)?;
    let mut rec = SampleRecorder::new(run);
    rec.maybe_push(0, &v);
    for k in 0..run.budget {
        model.update(&sampler.sample(&mut rng));
        if (k + 1) % period == 0 {
            v = plan(&model, &mut meta, k + 1)?;
        }
        rec.maybe_push(k + 1, &v);
    }
    Ok(rec.finish(v, None, meta))
}

/// Limit of Dyna's normalized error as the counts grow: the value of the
/// θ-smoothed true model against V^π.
pub fn dyna_plateau(mdp: &TabularMdp, policy: &Policy, gamma: f64, theta: f64) -> Result<f64> {
    let n = mdp.n_states();
    let truth = mdp::induce_chain(mdp, policy)?;
    let mut p = Mat::zeros(n, n);
    for x in 0..n {
        for a in 0..mdp.n_actions() {
            let pa = policy.prob(x, a);
            if pa > 0.0 {
                linalg::axpy(pa, &smooth_model(mdp.p(x, a), theta)?.0, p.row_mut(x));
            }
        }
    }
    let smoothed = PolicyInducedChain::new(p, truth.r_pi.clone())?;
    let v_model = mdp::exact_value_pe(&smoothed, gamma)?;
    mdp::normalized_error(&v_model, &mdp::exact_value_pe(&truth, gamma)?)
}

/// n / (2·min_{j>s} Re(1 − γλ_j)): step constants above this give the
/// O(1/k) mean-squared-error rate for harmonic steps.
pub fn ddtd_stepsize_lower_bound(spectrum: &[Complex64], s: usize, gamma: f64, n: usize) -> Result<f64> {
    if s >= spectrum.len() {
        return Err(Error::Invalid(format!("rank {s} leaves no eigenvalues out of {}", spectrum.len())));
    }
    let lambda_min = spectrum[s..].iter().map(|l| 1.0 - gamma * l.re).fold(f64::INFINITY, f64::min);
    Ok(n as f64 / (2.0 * lambda_min))
}
