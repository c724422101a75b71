//! Benchmark MDPs (Maze, Cliffwalk, Chain Walk, Garnet) and their evaluation
//! policies.

use rand::seq::index;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{exact_value_control, Policy, TabularMdp};

pub const DEFAULT_DISCOUNT: f64 = 0.99;

pub const UP: usize = 0;
pub const RIGHT: usize = 1;
pub const DOWN: usize = 2;
pub const LEFT: usize = 3;

const GRID_MOVES: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

pub const MAZE_SIZE: usize = 5;
pub const MAZE_GOAL: usize = 20;

/// Blocked adjacencies of the 5×5 maze as ((row, col), (row, col)) pairs.
pub const MAZE_WALLS: [((usize, usize), (usize, usize)); 16] = [
    ((0, 0), (0, 1)),
    ((0, 2), (1, 2)),
    ((0, 3), (1, 3)),
    ((0, 4), (1, 4)),
    ((1, 0), (2, 0)),
    ((1, 1), (1, 2)),
    ((1, 2), (1, 3)),
    ((1, 4), (2, 4)),
    ((2, 0), (3, 0)),
    ((2, 3), (2, 4)),
    ((2, 3), (3, 3)),
    ((3, 1), (3, 2)),
    ((3, 1), (4, 1)),
    ((3, 2), (4, 2)),
    ((3, 3), (4, 3)),
    ((4, 0), (4, 1)),
];

/// Row-major evaluation policy used for planning experiments on the maze.
pub const MAZE_POLICY: [usize; 25] =
    [2, 2, 3, 0, 3, 0, 2, 1, 3, 2, 2, 2, 3, 3, 1, 0, 3, 0, 3, 3, 2, 2, 1, 1, 0];

/// Row-major evaluation policy used for sample-based experiments on the maze.
pub const MAZE_TD_POLICY: [usize; 25] =
    [2, 2, 3, 0, 3, 0, 2, 1, 3, 2, 2, 2, 3, 3, 1, 0, 3, 0, 3, 3, 3, 3, 1, 1, 0];

pub const CHAIN_LEN: usize = 50;
pub const CHAIN_RIGHT: usize = 0;
pub const CHAIN_LEFT: usize = 1;
pub const CHAIN_GOAL: usize = 39;
pub const CHAIN_PENALTY: usize = 10;

pub const CHAIN_POLICY: [usize; CHAIN_LEN] = [
    0, 1, 1, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1,
    1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 1, 0, 1, 1,
];

pub const CLIFF_ROWS: usize = 3;
pub const CLIFF_COLS: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GarnetParams {
    pub n_states: usize,
    #[serde(default = "default_garnet_actions")]
    pub n_actions: usize,
    pub branching: usize,
    pub n_reward_states: usize,
    pub seed: u64,
}

fn default_garnet_actions() -> usize {
    4
}

impl GarnetParams {
    pub fn new(n_states: usize, branching: usize, n_reward_states: usize, seed: u64) -> Self {
        GarnetParams { n_states, n_actions: default_garnet_actions(), branching, n_reward_states, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(Error::Invalid("garnet needs at least one state and one action".into()));
        }
        if self.branching == 0 || self.branching > self.n_states {
            return Err(Error::Invalid(format!(
                "branching {} outside 1..={}",
                self.branching, self.n_states
            )));
        }
        if self.n_reward_states > self.n_states {
            return Err(Error::Invalid(format!(
                "{} reward states exceed {} states",
                self.n_reward_states, self.n_states
            )));
        }
        Ok(())
    }
}

/// Moves on a grid with blocked adjacencies; off-grid or blocked moves stay.
fn grid_step(rows: usize, cols: usize, blocked: &dyn Fn(usize, usize) -> bool, x: usize, a: usize) -> usize {
    let (r, c) = ((x / cols) as isize, (x % cols) as isize);
    let (dr, dc) = GRID_MOVES[a];
    let (nr, nc) = (r + dr, c + dc);
    if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
        return x;
    }
    let y = nr as usize * cols + nc as usize;
    if blocked(x, y) {
        x
    } else {
        y
    }
}

/// 90% intended direction, 10% split over the other three.
fn noisy_grid_transitions(
    rows: usize,
    cols: usize,
    blocked: &dyn Fn(usize, usize) -> bool,
    absorbing: &dyn Fn(usize) -> bool,
) -> Vec<f64> {
    let n = rows * cols;
    let mut p = vec![0.0; n * 4 * n];
    for x in 0..n {
        for a in 0..4 {
            let row = &mut p[(x * 4 + a) * n..(x * 4 + a + 1) * n];
            if absorbing(x) {
                row[x] = 1.0;
                continue;
            }
            for d in 0..4 {
                let prob = if d == a { 0.9 } else { 0.1 / 3.0 };
                row[grid_step(rows, cols, blocked, x, d)] += prob;
            }
        }
    }
    p
}

pub fn maze_walls_blocked(x: usize, y: usize) -> bool {
    let cell = |i: usize| (i / MAZE_SIZE, i % MAZE_SIZE);
    let (a, b) = (cell(x.min(y)), cell(x.max(y)));
    MAZE_WALLS.iter().any(|&(p, q)| (p == a && q == b) || (p == b && q == a))
}

/// 5×5 maze with 16 interior walls. Reward is state based: 10 at the
/// bottom-left goal, −1 everywhere else.
pub fn build_maze() -> (TabularMdp, Policy) {
    let n = MAZE_SIZE * MAZE_SIZE;
    let p = noisy_grid_transitions(MAZE_SIZE, MAZE_SIZE, &maze_walls_blocked, &|_| false);
    let reward = (0..n)
        .flat_map(|x| std::iter::repeat(if x == MAZE_GOAL { 10.0 } else { -1.0 }).take(4))
        .collect();
    let mdp = TabularMdp::new(n, 4, p, reward, DEFAULT_DISCOUNT).expect("maze is well formed");
    let policy = Policy::deterministic(&MAZE_POLICY, 4).expect("maze policy is well formed");
    (mdp, policy)
}

/// The maze with the policy used in the sample-based experiments.
pub fn build_maze_td() -> (TabularMdp, Policy) {
    let (mdp, _) = build_maze();
    (mdp, Policy::deterministic(&MAZE_TD_POLICY, 4).expect("maze policy is well formed"))
}

pub fn cliff_start() -> usize {
    0
}

pub fn cliff_goal() -> usize {
    CLIFF_COLS - 1
}

pub fn cliff_is_terminal(x: usize) -> bool {
    x > 0 && x < CLIFF_COLS
}

/// 3×7 cliff walk: start top-left, goal top-right, the cells between them
/// are cliffs. Rewards are paid on entering a cell; terminal cells absorb
/// with zero reward. The evaluation policy is the optimal one.
pub fn build_cliffwalk() -> (TabularMdp, Policy) {
    let n = CLIFF_ROWS * CLIFF_COLS;
    let p = noisy_grid_transitions(CLIFF_ROWS, CLIFF_COLS, &|_, _| false, &cliff_is_terminal);
    let entry = |y: usize| {
        if y == cliff_goal() {
            10.0
        } else if cliff_is_terminal(y) {
            -10.0
        } else {
            -1.0
        }
    };
    let mut reward = vec![0.0; n * 4];
    for x in (0..n).filter(|&x| !cliff_is_terminal(x)) {
        for a in 0..4 {
            let row = &p[(x * 4 + a) * n..(x * 4 + a + 1) * n];
            reward[x * 4 + a] = row.iter().enumerate().map(|(y, q)| q * entry(y)).sum();
        }
    }
    let mdp = TabularMdp::new(n, 4, p, reward, DEFAULT_DISCOUNT).expect("cliffwalk is well formed");
    let (_, policy) = exact_value_control(&mdp, DEFAULT_DISCOUNT).expect("cliffwalk is solvable");
    (mdp, policy)
}

/// 50-state circular chain. RIGHT steps towards the lower index, LEFT towards
/// the higher one; moves succeed 70%, stay 10%, reverse 20%.
pub fn build_chainwalk() -> (TabularMdp, Policy) {
    let n = CHAIN_LEN;
    let mut p = vec![0.0; n * 2 * n];
    for x in 0..n {
        for a in 0..2 {
            let (fwd, back) = if a == CHAIN_RIGHT { (n - 1, 1) } else { (1, n - 1) };
            let row = &mut p[(x * 2 + a) * n..(x * 2 + a + 1) * n];
            row[(x + fwd) % n] += 0.7;
            row[x] += 0.1;
            row[(x + back) % n] += 0.2;
        }
    }
    let mut reward = vec![0.0; n * 2];
    reward[CHAIN_GOAL * 2] = 1.0;
    reward[CHAIN_GOAL * 2 + 1] = 1.0;
    reward[CHAIN_PENALTY * 2] = -1.0;
    reward[CHAIN_PENALTY * 2 + 1] = -1.0;
    let mdp = TabularMdp::new(n, 2, p, reward, DEFAULT_DISCOUNT).expect("chain walk is well formed");
    let policy = Policy::deterministic(&CHAIN_POLICY, 2).expect("chain policy is well formed");
    (mdp, policy)
}

/// Probabilities from `k - 1` sorted uniform cut points in (0, 1).
fn cut_point_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let mut cuts: Vec<f64> = (0..k - 1).map(|_| rng.gen::<f64>()).collect();
    cuts.sort_by(f64::total_cmp);
    let mut probs = Vec::with_capacity(k);
    let mut prev = 0.0;
    for c in cuts {
        probs.push(c - prev);
        prev = c;
    }
    probs.push(1.0 - prev);
    probs
}

/// Random Garnet MDP with a seeded random stochastic evaluation policy.
pub fn build_garnet(params: &GarnetParams) -> Result<(TabularMdp, Policy)> {
    params.validate()?;
    let GarnetParams { n_states: n, n_actions: na, branching: bp, n_reward_states: br, seed } = *params;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = vec![0.0; n * na * n];
    for k in 0..n * na {
        let row = &mut p[k * n..(k + 1) * n];
        let next = index::sample(&mut rng, n, bp);
        let probs = cut_point_simplex(&mut rng, bp);
        for (y, q) in next.iter().zip(probs) {
            row[y] = q;
        }
        // cut-point differences may leave a last-bit residue
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|q| *q /= sum);
    }
    let mut state_reward = vec![0.0; n];
    for x in index::sample(&mut rng, n, br).iter() {
        let mut r = 0.0;
        while r == 0.0 {
            r = rng.gen::<f64>();
        }
        state_reward[x] = r;
    }
    let reward = (0..n * na).map(|k| state_reward[k / na]).collect();
    let mut probs = Vec::with_capacity(n * na);
    for _ in 0..n {
        probs.extend(cut_point_simplex(&mut rng, na));
    }
    let mdp = TabularMdp::new(n, na, p, reward, DEFAULT_DISCOUNT)?;
    let policy = Policy::stochastic(n, na, probs)?;
    Ok((mdp, policy))
}
