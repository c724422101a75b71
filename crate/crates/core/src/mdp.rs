//! Finite MDPs, policies, policy-induced chains, Bellman operators and the
//! exact reference solvers every convergence test is measured against.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

/// Largest state count accepted by the dense direct solver.
pub const DIRECT_SOLVE_CAP: usize = 5000;

const STOCHASTIC_TOL: f64 = 1e-12;

/// Actions whose Q-value is within this (relative) distance of the best are
/// treated as ties and resolved to the lowest index. Makes greedy choices
/// insensitive to last-bit rounding differences between solvers.
pub const GREEDY_TIE_TOL: f64 = 1e-10;

pub type ValueVector = Vec<f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// P(x'|x,a) flattened as [x][a][x'].
    transition: Vec<f64>,
    /// r(x,a) flattened as [x][a].
    reward: Vec<f64>,
    discount: f64,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Invalid("empty state or action set".into()));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::Dimension(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "reward has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::Invalid(format!("discount {discount} outside [0,1)")));
        }
        for (k, row) in transition.chunks(n_states).enumerate() {
            check_distribution(row).map_err(|msg| {
                Error::Invalid(format!("P(.|x={},a={}): {msg}", k / n_actions, k % n_actions))
            })?;
        }
        if let Some(i) = reward.iter().position(|r| !r.is_finite()) {
            return Err(Error::Invalid(format!("non-finite reward at index {i}")));
        }
        Ok(TabularMdp { n_states, n_actions, transition, reward, discount })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::Invalid(format!("discount {discount} outside [0,1)")));
        }
        Ok(TabularMdp { discount, ..self.clone() })
    }

    /// Next-state distribution P(·|x,a).
    pub fn p(&self, x: usize, a: usize) -> &[f64] {
        let start = (x * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn r(&self, x: usize, a: usize) -> f64 {
        self.reward[x * self.n_actions + a]
    }

    /// Q(x,a) = r(x,a) + γ Σ P(x'|x,a) v(x') for all pairs, as [x][a].
    pub fn q_values(&self, gamma: f64, v: &[f64]) -> Vec<f64> {
        let mut q = Vec::with_capacity(self.n_states * self.n_actions);
        for x in 0..self.n_states {
            for a in 0..self.n_actions {
                q.push(self.r(x, a) + gamma * linalg::dot(self.p(x, a), v));
            }
        }
        q
    }
}

fn check_distribution(row: &[f64]) -> std::result::Result<(), String> {
    if let Some(p) = row.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(format!("invalid probability {p}"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(format!("sums to {sum}"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    /// π(a|x) flattened as [x][a].
    probs: Vec<f64>,
    actions: Option<Vec<usize>>,
}

impl Policy {
    pub fn stochastic(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "policy has {} entries, expected {}",
                probs.len(),
                n_states * n_actions
            )));
        }
        for (x, row) in probs.chunks(n_actions).enumerate() {
            check_distribution(row).map_err(|msg| Error::Invalid(format!("π(.|x={x}): {msg}")))?;
        }
        Ok(Policy { n_states, n_actions, probs, actions: None })
    }

    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (x, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::Invalid(format!("action {a} at state {x} out of range")));
            }
            probs[x * n_actions + a] = 1.0;
        }
        Ok(Policy { n_states: actions.len(), n_actions, probs, actions: Some(actions.to_vec()) })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, x: usize, a: usize) -> f64 {
        self.probs[x * self.n_actions + a]
    }

    pub fn action_probs(&self, x: usize) -> &[f64] {
        &self.probs[x * self.n_actions..(x + 1) * self.n_actions]
    }

    /// The action list when the policy is deterministic.
    pub fn actions(&self) -> Option<&[usize]> {
        self.actions.as_deref()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyInducedChain {
    pub p_pi: Mat,
    pub r_pi: Vec<f64>,
}

impl PolicyInducedChain {
    pub fn new(p_pi: Mat, r_pi: Vec<f64>) -> Result<Self> {
        if !p_pi.is_square() || p_pi.rows() != r_pi.len() {
            return Err(Error::Dimension(format!(
                "chain matrix {}x{} with reward of length {}",
                p_pi.rows(),
                p_pi.cols(),
                r_pi.len()
            )));
        }
        for x in 0..p_pi.rows() {
            check_distribution(p_pi.row(x)).map_err(|msg| Error::Invalid(format!("row {x}: {msg}")))?;
        }
        Ok(PolicyInducedChain { p_pi, r_pi })
    }

    pub fn n(&self) -> usize {
        self.r_pi.len()
    }
}

pub fn induce_chain(mdp: &TabularMdp, policy: &Policy) -> Result<PolicyInducedChain> {
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(Error::Dimension(format!(
            "policy is {}x{}, MDP is {}x{}",
            policy.n_states(),
            policy.n_actions(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    let n = mdp.n_states();
    let mut p = Mat::zeros(n, n);
    let mut r = vec![0.0; n];
    for x in 0..n {
        for a in 0..mdp.n_actions() {
            let pa = policy.prob(x, a);
            if pa == 0.0 {
                continue;
            }
            r[x] += pa * mdp.r(x, a);
            linalg::axpy(pa, mdp.p(x, a), p.row_mut(x));
        }
    }
    PolicyInducedChain::new(p, r)
}

/// T^π v = r^π + γ P^π v.
pub fn bellman_pe_apply(chain: &PolicyInducedChain, gamma: f64, v: &[f64]) -> Result<ValueVector> {
    if v.len() != chain.n() {
        return Err(Error::Dimension(format!("value of length {} for {} states", v.len(), chain.n())));
    }
    let pv = chain.p_pi.matvec(v);
    Ok(chain.r_pi.iter().zip(&pv).map(|(r, p)| r + gamma * p).collect())
}

/// Per-state argmax over a [x][a] table with lowest-index tie-breaking.
pub fn greedy_from_q(q: &[f64], n_actions: usize) -> (Vec<f64>, Vec<usize>) {
    let mut values = Vec::with_capacity(q.len() / n_actions);
    let mut actions = Vec::with_capacity(q.len() / n_actions);
    for row in q.chunks(n_actions) {
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tol = GREEDY_TIE_TOL * (1.0 + best.abs());
        let a = row.iter().position(|&x| x >= best - tol).unwrap_or(0);
        values.push(best);
        actions.push(a);
    }
    (values, actions)
}

/// T* v together with the greedy policy.
pub fn bellman_opt_apply(mdp: &TabularMdp, gamma: f64, v: &[f64]) -> Result<(ValueVector, Policy)> {
    if v.len() != mdp.n_states() {
        return Err(Error::Dimension(format!(
            "value of length {} for {} states",
            v.len(),
            mdp.n_states()
        )));
    }
    let (values, actions) = greedy_from_q(&mdp.q_values(gamma, v), mdp.n_actions());
    Ok((values, Policy::deterministic(&actions, mdp.n_actions())?))
}

/// Solves (I − γP^π)V = r^π by partial-pivoted elimination.
pub fn exact_value_pe(chain: &PolicyInducedChain, gamma: f64) -> Result<ValueVector> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Invalid(format!("discount {gamma} outside [0,1)")));
    }
    let n = chain.n();
    if n > DIRECT_SOLVE_CAP {
        return Err(Error::Invalid(format!("{n} states exceeds direct-solve cap {DIRECT_SOLVE_CAP}")));
    }
    let a = Mat::identity(n).sub(&chain.p_pi.scale(gamma));
    let v = linalg::solve(&a, &chain.r_pi)?;
    let residual = linalg::norm_inf(&linalg::sub(&a.matvec(&v), &chain.r_pi));
    if residual > 1e-10 * linalg::norm2(&chain.r_pi).max(1.0) {
        return Err(Error::Singular(format!("direct solve residual {residual:e}")));
    }
    Ok(v)
}

/// Policy iteration to exact convergence.
pub fn exact_value_control(mdp: &TabularMdp, gamma: f64) -> Result<(ValueVector, Policy)> {
    let (_, mut policy) = bellman_opt_apply(mdp, gamma, &vec![0.0; mdp.n_states()])?;
    let mut v = exact_value_pe(&induce_chain(mdp, &policy)?, gamma)?;
    // Policy iteration terminates in finitely many steps; the cap only
    // guards against cycling between numerically tied policies.
    for _ in 0..10_000 {
        let (_, next) = bellman_opt_apply(mdp, gamma, &v)?;
        if next == policy {
            break;
        }
        let v_next = exact_value_pe(&induce_chain(mdp, &next)?, gamma)?;
        let improved = v_next.iter().zip(&v).any(|(a, b)| a - b > 1e-12 * (1.0 + b.abs()));
        policy = next;
        v = v_next;
        if !improved {
            break;
        }
    }
    Ok((v, policy))
}

/// ‖v − v_ref‖₁ / ‖v_ref‖₁.
pub fn normalized_error(v: &[f64], v_ref: &[f64]) -> Result<f64> {
    if v.len() != v_ref.len() {
        return Err(Error::Dimension(format!("{} vs {}", v.len(), v_ref.len())));
    }
    let denom = linalg::norm1(v_ref);
    if denom == 0.0 {
        return Err(Error::Invalid("reference value has zero L1 norm".into()));
    }
    Ok(v.iter().zip(v_ref).map(|(a, b)| (a - b).abs()).sum::<f64>() / denom)
}

/// ‖T^π v − v‖∞.
pub fn bellman_residual(chain: &PolicyInducedChain, gamma: f64, v: &[f64]) -> Result<f64> {
    Ok(linalg::sup_dist(&bellman_pe_apply(chain, gamma, v)?, v))
}
