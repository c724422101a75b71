//! End-to-end acceptance checks. Runs every criterion, prints one line per
//! criterion and exits non-zero if any of them fails.

use std::path::Path;
use std::time::{Duration, Instant};

use ddvi::deflation::{self, DeflationMatrix, SchurSource};
use ddvi::envs::{self, GarnetParams};
use ddvi::harness::{self, ExperimentConfig, SweepAxis};
use ddvi::linalg::{self, Lu, Mat};
use ddvi::mdp::{self, Policy, PolicyInducedChain, TabularMdp};
use ddvi::solvers::{self, AutoConfig, AutoFlavor, StopRule};
use ddvi::spectra;
use ddvi::td::{self, DdtdParams, ModelSource, SampleRun, StepSizeSchedule};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const GAMMA: f64 = 0.99;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn chain_of(mdp: &TabularMdp, policy: &Policy) -> PolicyInducedChain {
    mdp::induce_chain(mdp, policy).unwrap()
}

fn garnet(n: usize, branching: usize, reward_states: usize, seed: u64) -> (TabularMdp, Policy) {
    envs::build_garnet(&GarnetParams { n_states: n, n_actions: 4, branching, n_reward_states: reward_states, seed }).unwrap()
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Eigenvalues from nalgebra's real Schur decomposition, sorted like ours.
fn nalgebra_spectrum(a: &Mat) -> Vec<Complex64> {
    let m = DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice());
    let eigs: Vec<Complex64> = m.complex_eigenvalues().iter().map(|z| Complex64::new(z.re, z.im)).collect();
    spectra::sort_spectrum(&eigs)
}

/// Worst distance in a greedy matching of `tail` into `pool`.
fn match_distance(tail: &[Complex64], pool: &[Complex64]) -> f64 {
    let mut pool = pool.to_vec();
    let mut worst = 0.0f64;
    for lam in tail {
        let (idx, d) = pool
            .iter()
            .enumerate()
            .map(|(i, z)| (i, (z - lam).norm()))
            .fold((usize::MAX, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
        worst = worst.max(d);
        if idx != usize::MAX {
            pool.swap_remove(idx);
        }
    }
    worst
}

/// Checks one deflation matrix through the library verifier and through an
/// independent nalgebra eigen-solve; both routes must agree.
fn deflation_ok(p: &Mat, e: &DeflationMatrix, worst: &mut f64) -> bool {
    let report = deflation::verify_deflation(p, e).unwrap();
    let s = e.rank();
    let spec_p = nalgebra_spectrum(p);
    let spec_d = nalgebra_spectrum(&p.sub(&e.assemble().0));
    let rho = spec_d.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let next = spec_p.get(s).map_or(0.0, |z| z.norm());
    let oracle_rho = (rho - next).abs();
    let oracle_tail = match_distance(&spec_p[s..], &spec_d);
    *worst = worst.max(report.abs_diff).max(report.tail_mismatch).max(oracle_rho).max(oracle_tail);
    report.pass && oracle_rho <= 1e-6 && oracle_tail <= 1e-6
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let (mut checked, mut failed, mut worst) = (0, Vec::new(), 0.0f64);
    for seed in 0..20u64 {
        let (g, pol) = garnet(50, 2, 5, seed);
        let p = chain_of(&g, &pol).p_pi;
        let uniform = vec![1.0 / 50.0; 50];
        let w = deflation::build_wielandt_rank1(&uniform).unwrap();
        checked += 1;
        if !deflation_ok(&p, &w, &mut worst) {
            failed.push(format!("wielandt seed {seed}"));
        }
        for s0 in [1usize, 2, 3, 5] {
            let s = deflation::conjugate_adjusted_rank(&p, s0).unwrap();
            for (kind, e) in [
                ("hotelling", deflation::build_hotelling(&p, s)),
                ("schur", deflation::build_schur(&p, s, SchurSource::Dense)),
            ] {
                checked += 1;
                match e {
                    Ok(e) if deflation_ok(&p, &e, &mut worst) => {}
                    Ok(_) => failed.push(format!("{kind} seed {seed} s {s}")),
                    Err(err) => failed.push(format!("{kind} seed {seed} s {s}: {err}")),
                }
            }
        }
    }
    let el = t0.elapsed();
    outcome(
        failed.is_empty() && within(el, 30.0),
        format!("{checked} builds, worst deviation {worst:.2e}, failures {failed:?}, {:.1}s", el.as_secs_f64()),
    )
}

fn criterion_2() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut cases = 0;
    while cases < 100 {
        let n = rng.gen_range(3..=30);
        let (g, pol) = garnet(n, rng.gen_range(1..=n.min(5)), 1, rng.gen());
        let p = chain_of(&g, &pol).p_pi;
        let s = deflation::conjugate_adjusted_rank(&p, rng.gen_range(1..n)).unwrap();
        let e = match deflation::build_schur(&p, s, SchurSource::Dense) {
            Ok(e) => e,
            Err(_) => continue,
        };
        let c = rng.gen_range(0.0..0.999);
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let closed = e.apply_resolvent(c, &w).unwrap();
        let (dense_e, _) = e.assemble();
        let a = Mat::identity(n).sub(&dense_e.scale(c));
        let direct = Lu::new(&a).unwrap().solve(&w);
        worst = worst.max(linalg::sup_dist(&closed, &direct));
        cases += 1;
    }
    let el = t0.elapsed();
    outcome(worst <= 1e-9 && within(el, 5.0), format!("100 cases, worst sup-norm gap {worst:.2e}, {:.2}s", el.as_secs_f64()))
}

fn criterion_3() -> Outcome {
    let (m, pol) = envs::build_chainwalk();
    let chain = chain_of(&m, &pol);
    let exact = mdp::exact_value_pe(&chain, GAMMA).unwrap();
    let stop = StopRule::target(exact.clone(), 1e-8, 3000);
    let trace = solvers::ddvi_qr(&chain, GAMMA, 3, 0.99, 100, 0, &vec![0.0; chain.n()], &stop).unwrap();
    let iters = trace.iterations_to(1e-8);
    let sup = linalg::sup_dist(&trace.final_v, &exact);
    outcome(
        iters.is_some() && sup <= 1e-7,
        format!("iterations to 1e-8: {iters:?} (limit 3000), final sup-norm gap {sup:.2e}"),
    )
}

const TAIL_ITERS: usize = 600;

fn criterion_4() -> Outcome {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    let mut failed = Vec::new();
    for seed in 0..10u64 {
        let (g, pol) = garnet(50, 2, 5, seed);
        let chain = chain_of(&g, &pol);
        let exact = mdp::exact_value_pe(&chain, GAMMA).unwrap();
        let sorted = spectra::dense_spectrum(&chain.p_pi).unwrap().eigenvalues;
        let homogeneous = PolicyInducedChain::new(chain.p_pi.clone(), vec![0.0; chain.n()]).unwrap();
        for s0 in [1usize, 2, 3] {
            let s = spectra::conjugate_closed_rank(&sorted, s0);
            let e = deflation::build_schur(&chain.p_pi, s, SchurSource::Dense).unwrap();
            // The error V^k − V* follows DDVI on the zero-reward chain started
            // from V^0 − V*; iterating that directly keeps full relative
            // precision long after the real run would hit rounding noise.
            let mut err: Vec<f64> = exact.iter().map(|x| -x).collect();
            let mut errors = Vec::with_capacity(TAIL_ITERS);
            for _ in 0..TAIL_ITERS {
                err = solvers::ddvi_step(&homogeneous, GAMMA, &e, 1.0, &err).unwrap().1;
                errors.push(linalg::norm1(&err) / linalg::norm1(&exact));
            }
            let rate = solvers::fit_contraction(&errors[TAIL_ITERS / 2..]).unwrap();
            let predicted = GAMMA * sorted[s].norm();
            let gap = (rate - predicted).abs();
            worst = worst.max(gap);
            if gap > 0.02 {
                failed.push(format!("seed {seed} s {s}: {rate:.4} vs {predicted:.4}"));
            }
        }
    }
    let el = t0.elapsed();
    outcome(
        failed.is_empty() && within(el, 60.0),
        format!("30 runs, worst |rate - γ|λ_s+1|| {worst:.4}, failures {failed:?}, {:.1}s", el.as_secs_f64()),
    )
}

fn criterion_5() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, (m, pol)) in [("chainwalk", envs::build_chainwalk()), ("maze", envs::build_maze())] {
        let chain = chain_of(&m, &pol);
        let exact = mdp::exact_value_pe(&chain, GAMMA).unwrap();
        let v0 = vec![0.0; chain.n()];
        let stop = StopRule::target(exact, 1e-6, 100_000);
        let vi = solvers::vi_pe(&chain, GAMMA, &v0, &stop).unwrap().iterations_to(1e-6);
        let mut iters = Vec::new();
        let mut costs = Vec::new();
        for s in [1usize, 2, 4] {
            let t = solvers::ddvi_qr(&chain, GAMMA, s, 1.0, 100, 0, &v0, &stop).unwrap();
            iters.push(t.iterations_to(1e-6));
            costs.push(t.cost_to(1e-6));
        }
        let decreasing = iters.iter().all(Option::is_some) && iters.windows(2).all(|w| w[1] < w[0]);
        let beats = match vi {
            Some(v) => costs.iter().all(|c| c.is_some_and(|c| c < v)),
            None => false,
        };
        pass &= decreasing && beats;
        parts.push(format!("{name}: VI {vi:?}, s=1,2,4 iterations {iters:?}, shifted costs {costs:?}"));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_6() -> Outcome {
    let gamma = 0.995;
    let (m, _) = envs::build_chainwalk();
    let (v_star, _) = mdp::exact_value_control(&m, gamma).unwrap();
    let n = m.n_states();
    let zeros = vec![0.0; n];
    let stop = StopRule::budget(v_star.clone(), 500);
    let uniform = vec![1.0 / n as f64; n];
    let ddvi = solvers::ddvi_control_rank1(&m, gamma, &uniform, &zeros, &stop).unwrap();
    let vi = solvers::vi_control(&m, gamma, &zeros, &stop).unwrap();
    let e0 = linalg::sup_dist(&zeros, &v_star);
    let mut violations = 0;
    let mut slack = f64::INFINITY;
    for r in &ddvi.records {
        let bound = 2.0 / (1.0 - gamma) * gamma.powi(r.iteration as i32) * e0;
        slack = slack.min(bound - r.sup_err);
        if r.sup_err > bound {
            violations += 1;
        }
    }
    let mismatched = ddvi.policies.iter().zip(&vi.policies).filter(|(a, b)| a != b).count();
    let same_len = ddvi.policies.len() == vi.policies.len() && ddvi.policies.len() == 501;
    outcome(
        violations == 0 && mismatched == 0 && same_len,
        format!(
            "{} iterates, bound violations {violations}, min slack {slack:.3e}, policy mismatches {mismatched}",
            ddvi.records.len()
        ),
    )
}

fn criterion_7() -> Outcome {
    let (m, pol) = envs::build_chainwalk();
    let chain = chain_of(&m, &pol);
    let exact = mdp::exact_value_pe(&chain, GAMMA).unwrap();
    let lambda2 = spectra::dense_spectrum(&chain.p_pi).unwrap().eigenvalues[1];
    let cfg = AutoConfig { c: 10, epsilon: 1e-4, ..AutoConfig::default() };
    let stop = StopRule::target(exact, 1e-12, 20_000);
    let mut pass = lambda2.im == 0.0;
    let mut parts = Vec::new();
    for flavor in [AutoFlavor::PowerIteration, AutoFlavor::Qr] {
        let trace = solvers::ddvi_auto(&chain, GAMMA, flavor, &cfg, &vec![0.0; chain.n()], &stop).unwrap();
        let Some(first) = trace.meta.upgrades.iter().find(|u| u.accepted) else {
            pass = false;
            parts.push(format!("{flavor:?}: no upgrade"));
            continue;
        };
        let errors = trace.errors();
        let split = first.iteration.min(errors.len());
        let pre = solvers::empirical_rate_of(&errors[..split], 0.5);
        let post = solvers::empirical_rate_of(&errors[split..], 0.5);
        let gap = (first.lambda - lambda2.re).abs();
        let ok = match (&pre, &post) {
            (Ok(a), Ok(b)) => gap <= 1e-3 && *b <= a + 0.01,
            _ => false,
        };
        pass &= ok;
        parts.push(format!(
            "{flavor:?}: λ {:.5} at iteration {} (oracle {:.5}), rate {:.4} -> {:.4}",
            first.lambda,
            first.iteration,
            lambda2.re,
            pre.unwrap_or(f64::NAN),
            post.unwrap_or(f64::NAN)
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_8() -> Outcome {
    let t0 = Instant::now();
    let cfg = ExperimentConfig::from_json(
        r#"{
            "name": "horizon",
            "env": {"id": "garnet", "n_states": 200, "branching": 2, "n_reward_states": 20, "seed": 8},
            "algorithms": [
                {"id": "vi"},
                {"id": "ddvi", "rank": 2, "deflation": "schur_dense"}
            ],
            "target": 1e-4,
            "max_iterations": 100000
        }"#,
    )
    .unwrap();
    let rows = harness::sweep(&cfg, SweepAxis::Horizon, &[100.0, 1000.0]).unwrap();
    let iters = |label: &str, h: f64| {
        rows.iter().find(|r| r.algo == label && r.value == h).and_then(|r| r.iters_to_target)
    };
    let labels = cfg.labels();
    let (vi, dd) = (&labels[0], &labels[1]);
    let el = t0.elapsed();
    match (iters(vi, 100.0), iters(vi, 1000.0), iters(dd, 100.0), iters(dd, 1000.0)) {
        (Some(a), Some(b), Some(c), Some(d)) => outcome(
            b / a >= 8.0 && d / c <= 2.0 && within(el, 300.0),
            format!(
                "VI {a} -> {b} ({:.2}x), rank-2 DDVI {c} -> {d} ({:.2}x), {:.1}s",
                b / a,
                d / c,
                el.as_secs_f64()
            ),
        ),
        other => outcome(false, format!("target not reached: {other:?}")),
    }
}

/// Frozen from the reference run of `criterion_9` (100 000 samples,
/// seeds 0..20), rounded up in the third significant digit.
const DDTD_MAZE_TERMINAL: [f64; 2] = [0.171, 0.175];

fn criterion_9() -> Outcome {
    let t0 = Instant::now();
    let budget = 100_000;
    let theta = 0.3;
    let (m, pol) = envs::build_maze_td();
    let chain = chain_of(&m, &pol);
    let exact = mdp::exact_value_pe(&chain, GAMMA).unwrap();
    let run = |seed: u64, eta: f64| {
        let mut r = SampleRun::new(GAMMA, StepSizeSchedule::Constant { eta }, budget, seed, exact.clone());
        r.stride = 1000;
        r
    };
    let seeds: Vec<u64> = (0..20).collect();
    let terminal = |f: &(dyn Fn(u64) -> f64 + Sync)| -> f64 {
        median(&seeds.par_iter().map(|&s| f(s)).collect::<Vec<_>>())
    };
    let td_med = terminal(&|s| td::run_td(&m, &pol, &run(s, 0.3)).unwrap().last_error());
    let ddtd_med: Vec<f64> = [3usize, 4]
        .iter()
        .map(|&rank| {
            let mut p = DdtdParams::new(rank, 0.9);
            p.period = 10;
            p.theta = theta;
            terminal(&|s| td::run_ddtd(&m, &pol, &p, &run(s, 0.07)).unwrap().last_error())
        })
        .collect();
    let dyna_med = terminal(&|s| td::run_dyna(&m, &pol, theta, 10, &run(s, 1.0)).unwrap().last_error());
    let plateau = td::dyna_plateau(&m, &pol, GAMMA, theta).unwrap();
    let el = t0.elapsed();
    let pass = ddtd_med
        .iter()
        .zip(DDTD_MAZE_TERMINAL)
        .all(|(&d, frozen)| d < td_med && d < plateau && d <= frozen)
        && within(el, 600.0);
    outcome(
        pass,
        format!(
            "median terminal error at {budget} samples: TD {td_med:.4}, DDTD r3 {:.4}, r4 {:.4}, Dyna {dyna_med:.4} (plateau {plateau:.4}), {:.0}s",
            ddtd_med[0],
            ddtd_med[1],
            el.as_secs_f64()
        ),
    )
}

fn criterion_10() -> Outcome {
    let (m, pol) = envs::build_chainwalk();
    let chain = chain_of(&m, &pol);
    let exact = mdp::exact_value_pe(&chain, GAMMA).unwrap();
    let spectrum = spectra::dense_spectrum(&chain.p_pi).unwrap().eigenvalues;
    let c = 1.1 * td::ddtd_stepsize_lower_bound(&spectrum, 2, GAMMA, chain.n()).unwrap();
    let budget = 100_000;
    let stride = 100;
    let mut params = DdtdParams::new(2, 1.0);
    params.model = ModelSource::Exact;
    let runs: Vec<Vec<f64>> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let mut r = SampleRun::new(GAMMA, StepSizeSchedule::Harmonic { c }, budget, seed, exact.clone());
            r.stride = stride;
            r.keep_values = true;
            let t = td::run_ddtd(&m, &pol, &params, &r).unwrap();
            t.values.iter().map(|v| linalg::sub(v, &exact).iter().map(|d| d * d).sum()).collect()
        })
        .collect();
    let points: Vec<(f64, f64)> = (1000 / stride..=budget / stride)
        .map(|i| {
            let mse = runs.iter().map(|r| r[i]).sum::<f64>() / runs.len() as f64;
            (((i * stride) as f64).ln(), mse.ln())
        })
        .collect();
    let k = points.len() as f64;
    let (mx, my) = (points.iter().map(|p| p.0).sum::<f64>() / k, points.iter().map(|p| p.1).sum::<f64>() / k);
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    outcome((-1.4..=-0.6).contains(&slope), format!("C = {c:.2}, log-log MSE slope over [1e3, 1e5] = {slope:.3}"))
}

fn criterion_11() -> Outcome {
    let mut mismatches = Vec::new();
    let (m, pol) = envs::build_chainwalk();
    let chain = chain_of(&m, &pol);
    let exact = mdp::exact_value_pe(&chain, GAMMA).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    for schedule in [StepSizeSchedule::VisitCount, StepSizeSchedule::Constant { eta: 0.5 }] {
        for seed in 0..5u64 {
            let mut r = SampleRun::new(GAMMA, schedule, 20_000, seed, exact.clone());
            r.keep_values = true;
            let a = td::run_td(&m, &pol, &r).unwrap();
            let b = td::run_ddtd(&m, &pol, &DdtdParams::new(0, 1.0), &r).unwrap();
            let same = a.values.len() == b.values.len()
                && a.values.iter().zip(&b.values).all(|(x, y)| bits(x) == bits(y))
                && bits(&a.final_v) == bits(&b.final_v);
            if !same {
                mismatches.push(format!("td/ddtd {schedule} seed {seed}"));
            }
        }
    }
    for (name, (m, pol)) in [("chainwalk", envs::build_chainwalk()), ("maze", envs::build_maze())] {
        let chain = chain_of(&m, &pol);
        let v0: Vec<f64> = (0..chain.n()).map(|i| i as f64 * 0.37 - 3.0).collect();
        let stop = StopRule::residual(0.0, 300);
        let a = solvers::vi_pe(&chain, GAMMA, &v0, &stop).unwrap();
        let b = solvers::ddvi(&chain, GAMMA, &DeflationMatrix::empty(chain.n()), 1.0, &v0, &stop).unwrap();
        let errs = |t: &solvers::SolveTrace| t.records.iter().map(|r| r.norm_err_l1.to_bits()).collect::<Vec<_>>();
        if bits(&a.final_v) != bits(&b.final_v) || errs(&a) != errs(&b) {
            mismatches.push(format!("vi/ddvi {name}"));
        }
    }
    outcome(mismatches.is_empty(), format!("10 TD/DDTD pairs and 2 VI/DDVI pairs, mismatches {mismatches:?}"))
}

fn strip_wallclock(bytes: &[u8]) -> String {
    let text = std::str::from_utf8(bytes).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap_or("").split(',').collect();
    let Some(col) = header.iter().position(|h| *h == "wallclock_s") else {
        return text.to_owned();
    };
    text.lines()
        .map(|l| l.split(',').enumerate().filter(|(i, _)| *i != col).map(|(_, f)| f).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("\n")
}

fn dir_snapshot(dir: &Path) -> Vec<(String, String)> {
    let mut files: Vec<(String, String)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), strip_wallclock(&std::fs::read(e.path()).unwrap()))
        })
        .collect();
    files.sort();
    files
}

fn criterion_12() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::from_json(
        r#"{
            "name": "determinism",
            "env": {"id": "garnet", "n_states": 30, "branching": 3, "n_reward_states": 3},
            "algorithms": [
                {"id": "vi"},
                {"id": "ddvi", "rank": 2, "alpha": 0.99},
                {"id": "autoqr"},
                {"id": "ddtd", "rank": 2, "alpha": 0.9, "schedule": "const:0.2"},
                {"id": "td", "schedule": "visit"},
                {"id": "dyna", "theta": 0.3}
            ],
            "target": 1e-6,
            "budget": 3000,
            "seeds": [0, 1, 2]
        }"#,
    )
    .unwrap();
    let mut snapshots = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        cfg.out = Some(out.clone());
        let report = harness::run_config(&cfg).unwrap();
        assert_eq!(report.failures().count(), 0);
        snapshots.push(dir_snapshot(&out));
    }
    let files = snapshots[0].len();
    let identical = snapshots[0] == snapshots[1];
    outcome(identical && files > 1, format!("{files} CSV files compared, identical without wallclock: {identical}"))
}

fn main() {
    let criteria: [(usize, &str, fn() -> Outcome); 12] = [
        (1, "deflation removes the top eigenvalues and keeps the tail", criterion_1),
        (2, "closed-form resolvent equals a direct solve", criterion_2),
        (3, "rank-3 Schur DDVI converges on Chain Walk", criterion_3),
        (4, "alpha=1 DDVI contracts at gamma*|lambda_s+1|", criterion_4),
        (5, "iterations fall with rank and beat VI after cost shift", criterion_5),
        (6, "rank-1 control bound and greedy policies", criterion_6),
        (7, "automatic rank growth finds lambda_2 and speeds up", criterion_7),
        (8, "horizon scaling of VI versus rank-2 DDVI", criterion_8),
        (9, "DDTD beats TD and the Dyna plateau on the maze", criterion_9),
        (10, "DDTD mean squared error decays like 1/k", criterion_10),
        (11, "DDTD and DDVI reduce bit-for-bit to TD and VI", criterion_11),
        (12, "reruns produce identical CSVs", criterion_12),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let o = run();
        println!("criterion {id:>2}: {} {name} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
