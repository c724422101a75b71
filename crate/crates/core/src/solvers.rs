//! Planning iterations: VI, DDVI for any α ∈ (0, 1], rank-1 DDVI for control,
//! DDVI with automatic rank growth (power-iteration and QR flavours), rank-s
//! DDVI on top of QR iteration, and rate estimation.

use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::deflation::{self, DeflationKind, DeflationMatrix, DeflationTerm, SchurSource};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::mdp::{self, Policy, PolicyInducedChain, TabularMdp};

/// Errors at or below this are treated as numerically exact when fitting
/// rates.
pub const RATE_FLOOR: f64 = 1e-13;
pub const MIN_RATE_POINTS: usize = 10;
pub const DEFAULT_AUTO_C: usize = 10;
pub const DEFAULT_AUTO_EPS: f64 = 1e-4;
pub const DEFAULT_MAX_RANK: usize = 10;
pub const DEFAULT_AUTO_ALPHA: f64 = 0.99;
/// Recovered eigenvalues closer than this to an existing one are rejected.
pub const DUPLICATE_LAMBDA_TOL: f64 = 1e-8;
pub const GRAM_SCHMIDT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct StopRule {
    pub max_iterations: usize,
    /// Stop once the normalized error drops to this value.
    pub target: Option<f64>,
    /// Run exactly this many iterations, ignoring `target`.
    pub budget: Option<usize>,
    /// Oracle value; without it errors are Bellman residuals.
    pub reference: Option<Vec<f64>>,
}

impl StopRule {
    pub fn target(reference: Vec<f64>, target: f64, max_iterations: usize) -> Self {
        StopRule { max_iterations, target: Some(target), budget: None, reference: Some(reference) }
    }

    pub fn budget(reference: Vec<f64>, budget: usize) -> Self {
        StopRule { max_iterations: budget, target: None, budget: Some(budget), reference: Some(reference) }
    }

    /// Residual-driven stopping when no oracle is available.
    pub fn residual(target: f64, max_iterations: usize) -> Self {
        StopRule { max_iterations, target: Some(target), budget: None, reference: None }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if let Some(r) = &self.reference {
            if r.len() != n {
                return Err(Error::Dimension(format!("reference of length {} for {n} states", r.len())));
            }
            if linalg::norm1(r) == 0.0 {
                return Err(Error::Invalid("reference value has zero L1 norm".into()));
            }
        }
        Ok(())
    }

    fn done(&self, k: usize, err: f64) -> bool {
        match self.budget {
            Some(b) => k >= b,
            None => k >= self.max_iterations || self.target.is_some_and(|t| err <= t),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub cost_index: usize,
    pub norm_err_l1: f64,
    pub sup_err: f64,
    pub wallclock_s: f64,
}

/// An attempted rank increase inside AutoPI/AutoQR.
#[derive(Clone, Debug, PartialEq)]
pub struct RankUpgrade {
    pub iteration: usize,
    pub lambda: f64,
    pub accepted: bool,
    pub rank_after: usize,
    pub note: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceMeta {
    pub algo: String,
    pub rank: usize,
    pub alpha: f64,
    pub seed: Option<u64>,
    /// Cost of building E_s in VI-iteration units (m·s).
    pub build_cost: usize,
    /// Set when the requested rank was raised to keep a conjugate pair.
    pub rank_adjusted_from: Option<usize>,
    pub upgrades: Vec<RankUpgrade>,
    pub events: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveTrace {
    pub records: Vec<TraceRecord>,
    pub final_v: Vec<f64>,
    pub final_w: Option<Vec<f64>>,
    /// Greedy policy per recorded iteration (control solvers only).
    pub policies: Vec<Vec<usize>>,
    /// Value snapshot per record, when requested by a sample-based run.
    pub values: Vec<Vec<f64>>,
    pub reached_target: bool,
    pub meta: TraceMeta,
}

impl SolveTrace {
    pub fn errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.norm_err_l1).collect()
    }

    pub fn last_error(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.norm_err_l1)
    }

    /// First iteration whose normalized error is at or below `target`.
    pub fn iterations_to(&self, target: f64) -> Option<usize> {
        self.records.iter().find(|r| r.norm_err_l1 <= target).map(|r| r.iteration)
    }

    pub fn cost_to(&self, target: f64) -> Option<usize> {
        self.records.iter().find(|r| r.norm_err_l1 <= target).map(|r| r.cost_index)
    }
}

struct Recorder {
    start: Instant,
    records: Vec<TraceRecord>,
    build_cost: usize,
}

impl Recorder {
    fn new(build_cost: usize) -> Self {
        Recorder { start: Instant::now(), records: Vec::new(), build_cost }
    }

    fn push(&mut self, k: usize, (l1, sup): (f64, f64)) {
        self.records.push(TraceRecord {
            iteration: k,
            cost_index: k + self.build_cost,
            norm_err_l1: l1,
            sup_err: sup,
            wallclock_s: self.start.elapsed().as_secs_f64(),
        });
    }
}

fn reference_errors(v: &[f64], reference: &[f64]) -> (f64, f64) {
    let l1 = v.iter().zip(reference).map(|(a, b)| (a - b).abs()).sum::<f64>() / linalg::norm1(reference);
    (l1, linalg::sup_dist(v, reference))
}

fn residual_errors(tv: &[f64], v: &[f64]) -> (f64, f64) {
    let diff = linalg::sub(tv, v);
    (linalg::norm1(&diff) / linalg::norm1(v).max(f64::MIN_POSITIVE), linalg::norm_inf(&diff))
}

fn pe_errors(chain: &PolicyInducedChain, gamma: f64, v: &[f64], stop: &StopRule) -> Result<(f64, f64)> {
    Ok(match &stop.reference {
        Some(r) => reference_errors(v, r),
        None => residual_errors(&mdp::bellman_pe_apply(chain, gamma, v)?, v),
    })
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Invalid(format!("discount {gamma} outside [0,1)")));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Invalid(format!("relaxation α = {alpha} outside (0,1]")));
    }
    Ok(())
}

/// Plain value iteration V ← T^π V.
pub fn vi_pe(chain: &PolicyInducedChain, gamma: f64, v0: &[f64], stop: &StopRule) -> Result<SolveTrace> {
    check_gamma(gamma)?;
    stop.validate(chain.n())?;
    let mut rec = Recorder::new(0);
    let mut v = v0.to_vec();
    let mut k = 0;
    let reached = loop {
        let err = pe_errors(chain, gamma, &v, stop)?;
        rec.push(k, err);
        if stop.done(k, err.0) {
            break stop.target.is_some_and(|t| err.0 <= t);
        }
        v = mdp::bellman_pe_apply(chain, gamma, &v)?;
        k += 1;
    };
    Ok(SolveTrace {
        records: rec.records,
        final_v: v,
        final_w: None,
        policies: Vec::new(),
        values: Vec::new(),
        reached_target: reached,
        meta: TraceMeta { algo: "vi".into(), alpha: 1.0, ..TraceMeta::default() },
    })
}

/// One DDVI step:
/// W = (1−α)V + αr + αγ(P − E)V, V' = (I − αγE)^{-1} W.
/// With α = 1 and an empty E this performs exactly the floating-point
/// operations of r + γPV.
pub fn ddvi_step(chain: &PolicyInducedChain, gamma: f64, e: &DeflationMatrix, alpha: f64, v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let pv = chain.p_pi.matvec(v);
    let ev = e.apply(v)?;
    let ag = alpha * gamma;
    let w: Vec<f64> = (0..v.len())
        .map(|i| ((1.0 - alpha) * v[i] + alpha * chain.r_pi[i]) + ag * (pv[i] - ev[i]))
        .collect();
    let v_next = e.apply_resolvent(ag, &w)?;
    Ok((w, v_next))
}

/// Deflated dynamics value iteration with a fixed deflation matrix.
pub fn ddvi(
    chain: &PolicyInducedChain,
    gamma: f64,
    e: &DeflationMatrix,
    alpha: f64,
    v0: &[f64],
    stop: &StopRule,
) -> Result<SolveTrace> {
    check_gamma(gamma)?;
    check_alpha(alpha)?;
    stop.validate(chain.n())?;
    if e.n() != chain.n() {
        return Err(Error::Dimension(format!("deflation of size {} for {} states", e.n(), chain.n())));
    }
    e.resolvent_coefficients(alpha * gamma)?;
    let mut rec = Recorder::new(0);
    let mut v = v0.to_vec();
    let mut w = None;
    let mut k = 0;
    let reached = loop {
        let err = pe_errors(chain, gamma, &v, stop)?;
        rec.push(k, err);
        if stop.done(k, err.0) {
            break stop.target.is_some_and(|t| err.0 <= t);
        }
        let (w_next, v_next) = ddvi_step(chain, gamma, e, alpha, &v)?;
        w = Some(w_next);
        v = v_next;
        k += 1;
    };
    Ok(SolveTrace {
        records: rec.records,
        final_v: v,
        final_w: w,
        policies: Vec::new(),
        values: Vec::new(),
        reached_target: reached,
        meta: TraceMeta { algo: "ddvi".into(), rank: e.rank(), alpha, ..TraceMeta::default() },
    })
}

/// Rate bound max{ |1−α|/|1−αγλ_i| (i ≤ s), |1−α+αγλ_j| (j > s) } for a
/// spectrum sorted by [`crate::spectra::sort_spectrum`].
pub fn theoretical_rate(alpha: f64, gamma: f64, spectrum: &[Complex64], s: usize) -> Result<f64> {
    if s >= spectrum.len() {
        return Err(Error::Invalid(format!("rank {s} needs at least {} eigenvalues", s + 1)));
    }
    let head = spectrum[..s]
        .iter()
        .map(|&l| (1.0 - alpha).abs() / (1.0 - alpha * gamma * l).norm())
        .fold(0.0, f64::max);
    let tail = spectrum[s..]
        .iter()
        .map(|&l| (1.0 - alpha + alpha * gamma * l).norm())
        .fold(0.0, f64::max);
    Ok(head.max(tail))
}

fn control_errors(mdp: &TabularMdp, gamma: f64, v: &[f64], stop: &StopRule) -> Result<(f64, f64)> {
    Ok(match &stop.reference {
        Some(r) => reference_errors(v, r),
        None => residual_errors(&mdp::bellman_opt_apply(mdp, gamma, v)?.0, v),
    })
}

/// Value iteration for control, V ← T*V, recording the greedy policy of
/// every iterate.
pub fn vi_control(mdp: &TabularMdp, gamma: f64, v0: &[f64], stop: &StopRule) -> Result<SolveTrace> {
    check_gamma(gamma)?;
    stop.validate(mdp.n_states())?;
    let mut rec = Recorder::new(0);
    let mut policies = Vec::new();
    let mut v = v0.to_vec();
    let mut k = 0;
    let reached = loop {
        let err = control_errors(mdp, gamma, &v, stop)?;
        rec.push(k, err);
        let (tv, greedy) = mdp::greedy_from_q(&mdp.q_values(gamma, &v), mdp.n_actions());
        policies.push(greedy);
        if stop.done(k, err.0) {
            break stop.target.is_some_and(|t| err.0 <= t);
        }
        v = tv;
        k += 1;
    };
    Ok(SolveTrace {
        records: rec.records,
        final_v: v,
        final_w: None,
        policies,
        values: Vec::new(),
        reached_target: reached,
        meta: TraceMeta { algo: "vi-control".into(), alpha: 1.0, ..TraceMeta::default() },
    })
}

/// V = (I + γ/(1−γ)·𝟏vᵀ) W.
pub fn rank1_control_value(gamma: f64, v: &[f64], w: &[f64]) -> Vec<f64> {
    let shift = gamma / (1.0 - gamma) * linalg::dot(v, w);
    w.iter().map(|x| x + shift).collect()
}

/// Rank-1 DDVI for control:
/// W^{k+1} = max_π{r^π + γP^πW^k} − γ(vᵀW^k)𝟏, reporting
/// V^k = (I + γ/(1−γ)𝟏vᵀ)W^k.
pub fn ddvi_control_rank1(mdp: &TabularMdp, gamma: f64, v: &[f64], w0: &[f64], stop: &StopRule) -> Result<SolveTrace> {
    check_gamma(gamma)?;
    stop.validate(mdp.n_states())?;
    if v.len() != mdp.n_states() || w0.len() != mdp.n_states() {
        return Err(Error::Dimension("deflation vector or W0 has the wrong length".into()));
    }
    // validates v as a probability vector
    deflation::build_wielandt_rank1(v)?;
    let mut rec = Recorder::new(0);
    let mut policies = Vec::new();
    let mut w = w0.to_vec();
    let mut k = 0;
    let reached = loop {
        let value = rank1_control_value(gamma, v, &w);
        let err = control_errors(mdp, gamma, &value, stop)?;
        rec.push(k, err);
        let (tw, greedy) = mdp::greedy_from_q(&mdp.q_values(gamma, &w), mdp.n_actions());
        policies.push(greedy);
        if stop.done(k, err.0) {
            break stop.target.is_some_and(|t| err.0 <= t);
        }
        let shift = gamma * linalg::dot(v, &w);
        w = tw.iter().map(|x| x - shift).collect();
        k += 1;
    };
    Ok(SolveTrace {
        records: rec.records,
        final_v: rank1_control_value(gamma, v, &w),
        final_w: Some(w),
        policies,
        values: Vec::new(),
        reached_target: reached,
        meta: TraceMeta { algo: "ddvi-control-r1".into(), rank: 1, alpha: 1.0, ..TraceMeta::default() },
    })
}

/// Greedy policy of the final iterate of a control trace.
pub fn final_policy(trace: &SolveTrace, n_actions: usize) -> Result<Policy> {
    let actions = trace.policies.last().ok_or_else(|| Error::Invalid("trace has no policies".into()))?;
    Policy::deterministic(actions, n_actions)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AutoFlavor {
    /// Eigenvector recovery with biorthogonal v's (power-iteration flavour).
    PowerIteration,
    /// Gram–Schmidt against the current orthonormal u's (QR flavour).
    Qr,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AutoConfig {
    /// α used at rank s is `alpha_schedule[min(s, len) - 1]`.
    pub alpha_schedule: Vec<f64>,
    pub c: usize,
    pub epsilon: f64,
    pub max_rank: usize,
    /// First-rank v for the power-iteration flavour (uniform when None).
    pub v1: Option<Vec<f64>>,
}

impl Default for AutoConfig {
    fn default() -> Self {
        AutoConfig {
            alpha_schedule: vec![DEFAULT_AUTO_ALPHA],
            c: DEFAULT_AUTO_C,
            epsilon: DEFAULT_AUTO_EPS,
            max_rank: DEFAULT_MAX_RANK,
            v1: None,
        }
    }
}

impl AutoConfig {
    fn alpha_at(&self, rank: usize) -> f64 {
        let i = rank.clamp(1, self.alpha_schedule.len()) - 1;
        self.alpha_schedule[i]
    }
}

/// Deflation state grown by AutoPI/AutoQR: real λ's, u's and v's.
struct AutoState {
    lambdas: Vec<f64>,
    us: Vec<Vec<f64>>,
    vs: Vec<Vec<f64>>,
}

impl AutoState {
    fn deflation(&self, kind: DeflationKind) -> Result<DeflationMatrix> {
        let c = |x: &Vec<f64>| x.iter().map(|&a| Complex64::new(a, 0.0)).collect::<Vec<_>>();
        let terms = self
            .lambdas
            .iter()
            .zip(self.us.iter().zip(&self.vs))
            .map(|(&l, (u, v))| DeflationTerm { lambda: Complex64::new(l, 0.0), u: c(u), v: c(v) })
            .collect();
        DeflationMatrix::from_terms(self.us[0].len(), kind, terms)
    }

    /// v's with Vᵀ U = I via V = U (UᵀU)^{-1}.
    fn rebiorthogonalize(&mut self) -> Result<()> {
        let u = Mat::from_columns(&self.us);
        let gram = u.transpose().matmul(&u);
        let inv = linalg::Lu::new(&gram)?.inverse();
        let v = u.matmul(&inv);
        self.vs = (0..v.cols()).map(|j| v.col(j)).collect();
        Ok(())
    }
}

fn normalized(x: &[f64]) -> Option<Vec<f64>> {
    let n = linalg::norm2(x);
    (n > 0.0 && n.is_finite()).then(|| x.iter().map(|a| a / n).collect())
}

/// DDVI with automatic rank growth. W-iterate differences act as power
/// iterates of the deflated iteration matrix; once C consecutive differences
/// have been collected and their directions agree within ε (sup norm), the
/// next eigenvalue and vector are recovered and the rank increases. DDVI
/// resumes from the current V.
pub fn ddvi_auto(
    chain: &PolicyInducedChain,
    gamma: f64,
    flavor: AutoFlavor,
    cfg: &AutoConfig,
    v0: &[f64],
    stop: &StopRule,
) -> Result<SolveTrace> {
    check_gamma(gamma)?;
    stop.validate(chain.n())?;
    if cfg.c < 2 || !(cfg.epsilon > 0.0) || cfg.alpha_schedule.is_empty() || cfg.max_rank == 0 {
        return Err(Error::Invalid("auto-rank DDVI needs C ≥ 2, ε > 0, a nonempty α schedule and max_rank ≥ 1".into()));
    }
    for &a in &cfg.alpha_schedule {
        check_alpha(a)?;
    }
    let n = chain.n();
    let (kind, mut state) = match flavor {
        AutoFlavor::PowerIteration => {
            let v1 = cfg.v1.clone().unwrap_or_else(|| vec![1.0 / n as f64; n]);
            deflation::build_wielandt_rank1(&v1)?;
            (DeflationKind::Wielandt, AutoState { lambdas: vec![1.0], us: vec![vec![1.0; n]], vs: vec![v1] })
        }
        AutoFlavor::Qr => {
            let u1 = vec![1.0 / (n as f64).sqrt(); n];
            (DeflationKind::Schur, AutoState { lambdas: vec![1.0], us: vec![u1.clone()], vs: vec![u1] })
        }
    };
    let mut e = state.deflation(kind)?;
    let mut alpha = cfg.alpha_at(1);
    e.resolvent_coefficients(alpha * gamma)?;
    let mut rec = Recorder::new(0);
    let mut meta = TraceMeta {
        algo: match flavor {
            AutoFlavor::PowerIteration => "autopi".into(),
            AutoFlavor::Qr => "autoqr".into(),
        },
        alpha,
        ..TraceMeta::default()
    };
    let mut v = v0.to_vec();
    let mut w_prev: Option<Vec<f64>> = None;
    let mut d_prev: Option<Vec<f64>> = None;
    let mut d_last: Option<Vec<f64>> = None;
    let mut c = 0usize;
    let mut k = 0;
    let reached = loop {
        let err = pe_errors(chain, gamma, &v, stop)?;
        rec.push(k, err);
        if stop.done(k, err.0) {
            break stop.target.is_some_and(|t| err.0 <= t);
        }
        if state.lambdas.len() < cfg.max_rank && c >= cfg.c {
            if let (Some(dk), Some(dk1)) = (&d_prev, &d_last) {
                if let (Some(a), Some(b)) = (normalized(dk), normalized(dk1)) {
                    if linalg::sup_dist(&a, &b) < cfg.epsilon {
                        let upgrade = try_upgrade(&mut state, flavor, alpha, gamma, dk, dk1, k)?;
                        let accepted = upgrade.accepted;
                        meta.upgrades.push(upgrade);
                        c = 0;
                        if accepted {
                            if flavor == AutoFlavor::PowerIteration {
                                state.rebiorthogonalize()?;
                            }
                            e = state.deflation(kind)?;
                            alpha = cfg.alpha_at(state.lambdas.len());
                            e.resolvent_coefficients(alpha * gamma)?;
                            w_prev = None;
                            d_prev = None;
                            d_last = None;
                        }
                    }
                }
            }
        }
        let (w, v_next) = ddvi_step(chain, gamma, &e, alpha, &v)?;
        if let Some(wp) = &w_prev {
            d_prev = d_last.take();
            d_last = Some(linalg::sub(&w, wp));
            if d_prev.is_some() {
                c += 1;
            }
        }
        w_prev = Some(w);
        v = v_next;
        k += 1;
    };
    meta.rank = state.lambdas.len();
    meta.alpha = alpha;
    Ok(SolveTrace {
        records: rec.records,
        final_v: v,
        final_w: w_prev,
        policies: Vec::new(),
        values: Vec::new(),
        reached_target: reached,
        meta,
    })
}

fn try_upgrade(
    state: &mut AutoState,
    flavor: AutoFlavor,
    alpha: f64,
    gamma: f64,
    dk: &[f64],
    dk1: &[f64],
    k: usize,
) -> Result<RankUpgrade> {
    let s = state.lambdas.len();
    let lambda_prime = linalg::dot(dk, dk1) / linalg::dot(dk, dk);
    let lambda = (lambda_prime - 1.0 + alpha) / (alpha * gamma);
    let reject = |note: String| RankUpgrade { iteration: k, lambda, accepted: false, rank_after: s, note };
    if !lambda.is_finite() {
        return Ok(reject("non-finite eigenvalue estimate".into()));
    }
    if let Some(&dup) = state.lambdas.iter().find(|&&l| (l - lambda).abs() < DUPLICATE_LAMBDA_TOL) {
        return Ok(reject(format!("estimate {lambda} duplicates λ = {dup}")));
    }
    let u_new = match flavor {
        AutoFlavor::PowerIteration => {
            let mut u = dk1.to_vec();
            for i in 0..s {
                let li = state.lambdas[i];
                let beta = alpha * li * (1.0 - gamma * li) / (1.0 - alpha * gamma * li);
                let coeff = beta * linalg::dot(&state.vs[i], dk1) / (li - lambda);
                linalg::axpy(-coeff, &state.us[i], &mut u);
            }
            match normalized(&u) {
                Some(u) => u,
                None => return Ok(reject("recovered eigenvector vanished".into())),
            }
        }
        AutoFlavor::Qr => {
            let mut u = normalized(dk1).expect("difference is nonzero when the trigger fires");
            for _ in 0..2 {
                for ui in &state.us {
                    let c = linalg::dot(ui, &u);
                    linalg::axpy(-c, ui, &mut u);
                }
            }
            let norm = linalg::norm2(&u);
            if norm < GRAM_SCHMIDT_TOL {
                return Ok(reject(format!("Gram–Schmidt residual {norm:e}")));
            }
            u.iter().map(|a| a / norm).collect()
        }
    };
    state.lambdas.push(lambda);
    state.vs.push(u_new.clone());
    state.us.push(u_new);
    Ok(RankUpgrade { iteration: k, lambda, accepted: true, rank_after: s + 1, note: String::new() })
}

/// AutoPI: [`ddvi_auto`] with eigenvector recovery.
pub fn ddvi_autopi(chain: &PolicyInducedChain, gamma: f64, cfg: &AutoConfig, v0: &[f64], stop: &StopRule) -> Result<SolveTrace> {
    ddvi_auto(chain, gamma, AutoFlavor::PowerIteration, cfg, v0, stop)
}

/// AutoQR: [`ddvi_auto`] with Gram–Schmidt Schur-vector growth.
pub fn ddvi_autoqr(chain: &PolicyInducedChain, gamma: f64, cfg: &AutoConfig, v0: &[f64], stop: &StopRule) -> Result<SolveTrace> {
    ddvi_auto(chain, gamma, AutoFlavor::Qr, cfg, v0, stop)
}

/// Rank-s DDVI with a Schur deflation from `m` rounds of QR iteration. A rank
/// that would split a conjugate pair is raised by one. s = 0 is plain VI.
pub fn ddvi_qr(
    chain: &PolicyInducedChain,
    gamma: f64,
    s: usize,
    alpha: f64,
    m: usize,
    seed: u64,
    v0: &[f64],
    stop: &StopRule,
) -> Result<SolveTrace> {
    if s == 0 {
        let mut t = vi_pe(chain, gamma, v0, stop)?;
        t.meta.seed = Some(seed);
        return Ok(t);
    }
    let mut rank = s;
    let mut adjusted = None;
    let e = loop {
        match deflation::build_schur(&chain.p_pi, rank, SchurSource::Iterative { m, seed }) {
            Ok(e) => break e,
            Err(Error::ConjugateSplit { suggested, .. }) if suggested <= chain.n() => {
                adjusted = Some(s);
                rank = suggested;
            }
            Err(err) => return Err(err),
        }
    };
    let mut trace = ddvi(chain, gamma, &e, alpha, v0, stop)?;
    let build_cost = m * rank;
    for r in &mut trace.records {
        r.cost_index = r.iteration + build_cost;
    }
    trace.meta.algo = "ddvi-qr".into();
    trace.meta.seed = Some(seed);
    trace.meta.build_cost = build_cost;
    trace.meta.rank_adjusted_from = adjusted;
    if !e.separated {
        trace.meta.events.push(format!("rank {rank}: |λ_s| and |λ_s+1| not separated"));
    }
    Ok(trace)
}

/// Per-step contraction factor from a least-squares fit of ln(err) against
/// the step index.
pub fn fit_contraction(errors: &[f64]) -> Result<f64> {
    if errors.len() < 2 {
        return Err(Error::Invalid("need at least two errors to fit a rate".into()));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::Invalid(format!("cannot fit a rate through error {e}")));
    }
    let m = errors.len() as f64;
    let xbar = (m - 1.0) / 2.0;
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let ybar = ys.iter().sum::<f64>() / m;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - xbar;
        sxy += dx * (y - ybar);
        sxx += dx * dx;
    }
    Ok((sxy / sxx).exp())
}

/// Contraction estimate over the final `tail_fraction` of an error sequence,
/// after dropping everything from the first error at or below
/// [`RATE_FLOOR`]. Needs at least [`MIN_RATE_POINTS`] points.
pub fn empirical_rate_of(errors: &[f64], tail_fraction: f64) -> Result<f64> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::Invalid(format!("tail fraction {tail_fraction} outside (0,1]")));
    }
    let cut = errors.iter().position(|&e| e <= RATE_FLOOR).unwrap_or(errors.len());
    let usable = &errors[..cut];
    let take = ((usable.len() as f64) * tail_fraction).ceil() as usize;
    if take < MIN_RATE_POINTS {
        return Err(Error::Invalid(format!(
            "only {take} tail points above {RATE_FLOOR:e}; need {MIN_RATE_POINTS}"
        )));
    }
    fit_contraction(&usable[usable.len() - take..])
}

pub fn empirical_rate(trace: &SolveTrace, tail_fraction: f64) -> Result<f64> {
    empirical_rate_of(&trace.errors(), tail_fraction)
}
