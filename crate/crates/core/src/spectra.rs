//! Eigenvalue machinery: power iteration, Householder QR, orthogonal (QR)
//! iteration with Rayleigh–Ritz extraction, a dense Hessenberg + Francis
//! double-shift real Schur solver, and the eigenvalue ordering rule.

use std::cmp::Ordering;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, CLu, CMat, Mat};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_QR_ROUNDS: usize = 100;
/// Relative modulus gap below which two eigenvalues count as unseparated.
pub const SEPARATION_TOL: f64 = 1e-6;
/// Moduli closer than this (relative) are ordered by the real/imaginary rule.
pub const ORDER_TIE_TOL: f64 = 1e-12;
/// Imaginary parts below this are treated as real when grouping pairs.
pub const REAL_TOL: f64 = 1e-10;
/// A guard Ritz pair counts as a genuine conjugate pair only when its
/// residual is below this fraction of its imaginary part.
pub const PAIR_RESOLUTION: f64 = 1e-3;
pub const ORDERING_RULE: &str = "modulus-desc,re-desc,im-desc";

/// A square linear map given by its action on vectors.
pub trait LinearOp {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;

    /// Applies the map to every column of `u`.
    fn apply_block(&self, u: &Mat) -> Mat {
        let cols: Vec<Vec<f64>> = (0..u.cols()).map(|j| self.apply(&u.col(j))).collect();
        Mat::from_columns(&cols)
    }
}

impl LinearOp for Mat {
    fn dim(&self) -> usize {
        self.rows()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matvec(x)
    }

    fn apply_block(&self, u: &Mat) -> Mat {
        self.matmul(u)
    }
}

/// Wraps a closure as a [`LinearOp`].
pub struct FnOp<F> {
    pub n: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> Vec<f64>> LinearOp for FnOp<F> {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerResult {
    pub lambda: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub zero_matrix: bool,
}

/// Power iteration b ← Ab/‖Ab‖₂ with Rayleigh estimate bᵀAb. Convergence is
/// tested up to sign so that negative dominant eigenvalues also settle.
pub fn power_iteration<A: LinearOp + ?Sized>(
    a: &A,
    b0: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<PowerResult> {
    if b0.len() != a.dim() {
        return Err(Error::Dimension(format!("start vector {} for dimension {}", b0.len(), a.dim())));
    }
    let nb = linalg::norm2(b0);
    if nb == 0.0 {
        return Err(Error::Invalid("power iteration needs a nonzero start vector".into()));
    }
    let mut b: Vec<f64> = b0.iter().map(|x| x / nb).collect();
    let mut lambda = 0.0;
    for it in 1..=max_iter.max(1) {
        let ab = a.apply(&b);
        let norm = linalg::norm2(&ab);
        if norm == 0.0 {
            return Ok(PowerResult { lambda: 0.0, vector: b, iterations: it, converged: true, zero_matrix: true });
        }
        let next: Vec<f64> = ab.iter().map(|x| x / norm).collect();
        lambda = linalg::dot(&next, &a.apply(&next));
        let diff = linalg::sup_dist(&next, &b);
        let flipped = next.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x + y).abs()));
        b = next;
        if diff.min(flipped) < tol {
            return Ok(PowerResult { lambda, vector: b, iterations: it, converged: true, zero_matrix: false });
        }
    }
    Ok(PowerResult { lambda, vector: b, iterations: max_iter, converged: false, zero_matrix: false })
}

/// Householder thin QR of an n×k matrix (n ≥ k) without rank checks; R has a
/// non-negative diagonal.
pub fn householder_qr(z: &Mat) -> (Mat, Mat) {
    let (n, k) = (z.rows(), z.cols());
    assert!(n >= k, "thin QR needs rows >= cols");
    let mut r = z.clone();
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let x: Vec<f64> = (j..n).map(|i| r[(i, j)]).collect();
        let norm = linalg::norm2(&x);
        let mut v = x;
        if norm == 0.0 {
            vs.push(Vec::new());
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vv = linalg::dot(&v, &v);
        if vv == 0.0 {
            vs.push(Vec::new());
            continue;
        }
        for c in j..k {
            let f = 2.0 * (0..n - j).map(|i| v[i] * r[(j + i, c)]).sum::<f64>() / vv;
            for i in 0..n - j {
                r[(j + i, c)] -= f * v[i];
            }
        }
        for i in j + 1..n {
            r[(i, j)] = 0.0;
        }
        vs.push(v.into_iter().map(|x| x / vv.sqrt()).collect());
    }
    // Q = H_0 H_1 ... H_{k-1} applied to the first k columns of I.
    let mut q = Mat::from_fn(n, k, |i, j| if i == j { 1.0 } else { 0.0 });
    for j in (0..k).rev() {
        let v = &vs[j];
        if v.is_empty() {
            continue;
        }
        for c in 0..k {
            let f = 2.0 * (0..n - j).map(|i| v[i] * q[(j + i, c)]).sum::<f64>();
            for i in 0..n - j {
                q[(j + i, c)] -= f * v[i];
            }
        }
    }
    let mut r_sq = Mat::from_fn(k, k, |i, j| if j >= i { r[(i, j)] } else { 0.0 });
    for i in 0..k {
        if r_sq[(i, i)] < 0.0 {
            for c in 0..k {
                r_sq[(i, c)] = -r_sq[(i, c)];
            }
            for row in 0..n {
                q[(row, i)] = -q[(row, i)];
            }
        }
    }
    (q, r_sq)
}

/// Thin QR factorization z = q·r with orthonormal q and upper-triangular r
/// with non-negative diagonal. Fails on rank deficiency.
pub fn qr_factorize(z: &Mat) -> Result<(Mat, Mat)> {
    if z.rows() < z.cols() {
        return Err(Error::Dimension(format!("QR of a wide {}x{} matrix", z.rows(), z.cols())));
    }
    let (q, r) = householder_qr(z);
    let scale = z.max_abs().max(1.0);
    for i in 0..r.rows() {
        if r[(i, i)] < 1e-12 * scale {
            return Err(Error::RankDeficient(format!("R[{i},{i}] = {:e}", r[(i, i)])));
        }
    }
    Ok((q, r))
}

/// Orders eigenvalues by descending modulus; near-equal moduli are ordered
/// by descending real part and then descending imaginary part, which keeps
/// conjugate pairs adjacent with the positive-imaginary member first.
pub fn sort_spectrum(eigs: &[Complex64]) -> Vec<Complex64> {
    let key = |a: &Complex64, b: &Complex64| -> Ordering {
        b.norm()
            .total_cmp(&a.norm())
            .then(b.re.total_cmp(&a.re))
            .then(b.im.total_cmp(&a.im))
    };
    let mut out = eigs.to_vec();
    out.sort_by(key);
    let mut start = 0;
    while start < out.len() {
        let mut end = start + 1;
        while end < out.len() && {
            let (m0, m1) = (out[end - 1].norm(), out[end].norm());
            m0 - m1 <= ORDER_TIE_TOL * m0.max(1.0)
        } {
            end += 1;
        }
        out[start..end].sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
        start = end;
    }
    out
}

/// Largest k ≥ s such that the first k sorted eigenvalues do not split a
/// conjugate pair.
pub fn conjugate_closed_rank(sorted: &[Complex64], s: usize) -> usize {
    let mut k = s.min(sorted.len());
    if k > 0 && k < sorted.len() && splits_pair(sorted, k) {
        k += 1;
    }
    k
}

/// True when slots k-1 and k hold the two members of a conjugate pair.
pub fn splits_pair(sorted: &[Complex64], k: usize) -> bool {
    if k == 0 || k >= sorted.len() {
        return false;
    }
    let (a, b) = (sorted[k - 1], sorted[k]);
    let scale = a.norm().max(1.0);
    a.im > REAL_TOL * scale && (a - b.conj()).norm() <= 1e-8 * scale
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<Complex64>,
    pub ordering_rule: &'static str,
    /// `separated[i]` is false when |λ_i| and |λ_{i+1}| are within
    /// [`SEPARATION_TOL`].
    pub separated: Vec<bool>,
    /// Optional eigen/Schur basis (columns).
    pub basis: Option<Vec<Vec<Complex64>>>,
    /// Per-eigenvalue singularity proxy: an upper bound on σ_min(A − λI).
    pub residuals: Vec<f64>,
}

impl SpectrumReport {
    pub fn from_eigenvalues(eigs: &[Complex64]) -> Self {
        let eigenvalues = sort_spectrum(eigs);
        let separated = separation_flags(&eigenvalues);
        SpectrumReport { eigenvalues, ordering_rule: ORDERING_RULE, separated, basis: None, residuals: Vec::new() }
    }

    pub fn moduli(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|z| z.norm()).collect()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.first().map_or(0.0, |z| z.norm())
    }
}

fn separation_flags(sorted: &[Complex64]) -> Vec<bool> {
    sorted
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].norm(), w[1].norm());
            a - b > SEPARATION_TOL * a.max(1e-300)
        })
        .collect()
}

/// Real Schur decomposition A = Z T Zᵀ.
#[derive(Clone, Debug)]
pub struct RealSchur {
    pub t: Mat,
    pub z: Mat,
    /// Eigenvalues in diagonal order of `t`.
    pub eigenvalues: Vec<Complex64>,
    /// Start index of every diagonal block (1×1 real or 2×2 complex).
    pub blocks: Vec<(usize, usize)>,
}

/// Householder reduction to upper Hessenberg form, A = Q H Qᵀ.
pub fn hessenberg(a: &Mat) -> (Mat, Mat) {
    let n = a.rows();
    let mut h = a.clone();
    let mut q = Mat::identity(n);
    for k in 0..n.saturating_sub(2) {
        let x: Vec<f64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let norm = linalg::norm2(&x);
        if norm == 0.0 {
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x;
        v[0] -= alpha;
        let vv = linalg::dot(&v, &v);
        if vv == 0.0 {
            continue;
        }
        let m = v.len();
        for j in k..n {
            let f = 2.0 * (0..m).map(|i| v[i] * h[(k + 1 + i, j)]).sum::<f64>() / vv;
            for i in 0..m {
                h[(k + 1 + i, j)] -= f * v[i];
            }
        }
        for mat in [&mut h, &mut q] {
            for i in 0..n {
                let f = 2.0 * (0..m).map(|j| mat[(i, k + 1 + j)] * v[j]).sum::<f64>() / vv;
                for j in 0..m {
                    mat[(i, k + 1 + j)] -= f * v[j];
                }
            }
        }
        h[(k + 1, k)] = alpha;
        for i in k + 2..n {
            h[(i, k)] = 0.0;
        }
    }
    (h, q)
}

/// Francis double-shift QR on a Hessenberg matrix, accumulating the
/// orthogonal transformations into `z`. Converged real-root 2×2 blocks are
/// split by a rotation; complex blocks are left as 2×2 blocks.
pub fn real_schur(a: &Mat) -> Result<RealSchur> {
    if !a.is_square() {
        return Err(Error::Dimension(format!("Schur of {}x{} matrix", a.rows(), a.cols())));
    }
    let nn = a.rows();
    if nn == 0 {
        return Ok(RealSchur { t: Mat::zeros(0, 0), z: Mat::zeros(0, 0), eigenvalues: Vec::new(), blocks: Vec::new() });
    }
    if a.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(Error::Invalid("matrix has non-finite entries".into()));
    }
    let (mut h, mut v) = hessenberg(a);
    let eps = f64::EPSILON;
    let mut d = vec![0.0; nn];
    let mut e = vec![0.0; nn];
    let mut complex_block = vec![false; nn];
    let mut norm = 0.0;
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm += h[(i, j)].abs();
        }
    }
    let mut n = nn as isize - 1;
    let mut exshift = 0.0;
    let mut iter = 0usize;
    let mut total_iter = 0usize;
    let max_total = 100 * nn.max(10);
    let (mut p, mut q, mut r, mut s, mut z);
    let (mut w, mut x, mut y);
    while n >= 0 {
        let nu = n as usize;
        let mut l = nu;
        while l > 0 {
            s = h[(l - 1, l - 1)].abs() + h[(l, l)].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[(l, l - 1)].abs() < eps * s {
                break;
            }
            l -= 1;
        }
        if l == nu {
            h[(nu, nu)] += exshift;
            d[nu] = h[(nu, nu)];
            e[nu] = 0.0;
            if nu > 0 {
                h[(nu, nu - 1)] = 0.0;
            }
            n -= 1;
            iter = 0;
        } else if l + 1 == nu {
            w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
            p = (h[(nu - 1, nu - 1)] - h[(nu, nu)]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            h[(nu, nu)] += exshift;
            h[(nu - 1, nu - 1)] += exshift;
            x = h[(nu, nu)];
            if q >= 0.0 {
                z = if p >= 0.0 { p + z } else { p - z };
                d[nu - 1] = x + z;
                d[nu] = d[nu - 1];
                if z != 0.0 {
                    d[nu] = x - w / z;
                }
                e[nu - 1] = 0.0;
                e[nu] = 0.0;
                x = h[(nu, nu - 1)];
                s = x.abs() + z.abs();
                p = x / s;
                q = z / s;
                r = (p * p + q * q).sqrt();
                p /= r;
                q /= r;
                for j in nu - 1..nn {
                    z = h[(nu - 1, j)];
                    h[(nu - 1, j)] = q * z + p * h[(nu, j)];
                    h[(nu, j)] = q * h[(nu, j)] - p * z;
                }
                for i in 0..=nu {
                    z = h[(i, nu - 1)];
                    h[(i, nu - 1)] = q * z + p * h[(i, nu)];
                    h[(i, nu)] = q * h[(i, nu)] - p * z;
                }
                for i in 0..nn {
                    z = v[(i, nu - 1)];
                    v[(i, nu - 1)] = q * z + p * v[(i, nu)];
                    v[(i, nu)] = q * v[(i, nu)] - p * z;
                }
                h[(nu, nu - 1)] = 0.0;
            } else {
                d[nu - 1] = x + p;
                d[nu] = x + p;
                e[nu - 1] = z;
                e[nu] = -z;
                complex_block[nu - 1] = true;
            }
            if nu >= 2 {
                h[(nu - 1, nu - 2)] = 0.0;
            }
            n -= 2;
            iter = 0;
        } else {
            x = h[(nu, nu)];
            y = 0.0;
            w = 0.0;
            if l < nu {
                y = h[(nu - 1, nu - 1)];
                w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
            }
            // exceptional shifts
            if iter == 10 {
                exshift += x;
                for i in 0..=nu {
                    h[(i, i)] -= x;
                }
                s = h[(nu, nu - 1)].abs() + h[(nu - 1, nu - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in 0..=nu {
                        h[(i, i)] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }
            iter += 1;
            total_iter += 1;
            if total_iter > max_total {
                return Err(Error::NoConvergence(format!("Schur QR exceeded {max_total} sweeps")));
            }
            // look for two consecutive small subdiagonal elements
            let mut m = nu - 2;
            loop {
                z = h[(m, m)];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[(m + 1, m)] + h[(m, m + 1)];
                q = h[(m + 1, m + 1)] - z - r - s;
                r = h[(m + 2, m + 1)];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[(m, m - 1)].abs() * (q.abs() + r.abs())
                    < eps * (p.abs() * (h[(m - 1, m - 1)].abs() + z.abs() + h[(m + 1, m + 1)].abs()))
                {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nu {
                h[(i, i - 2)] = 0.0;
                if i > m + 2 {
                    h[(i, i - 3)] = 0.0;
                }
            }
            // double QR step on rows l..=n, columns m..=n
            for k in m..nu {
                let notlast = k != nu - 1;
                if k != m {
                    p = h[(k, k - 1)];
                    q = h[(k + 1, k - 1)];
                    r = if notlast { h[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        h[(k, k - 1)] = -s * x;
                    } else if l != m {
                        h[(k, k - 1)] = -h[(k, k - 1)];
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..nn {
                        p = h[(k, j)] + q * h[(k + 1, j)];
                        if notlast {
                            p += r * h[(k + 2, j)];
                            h[(k + 2, j)] -= p * z;
                        }
                        h[(k, j)] -= p * x;
                        h[(k + 1, j)] -= p * y;
                    }
                    for i in 0..=nu.min(k + 3) {
                        p = x * h[(i, k)] + y * h[(i, k + 1)];
                        if notlast {
                            p += z * h[(i, k + 2)];
                            h[(i, k + 2)] -= p * r;
                        }
                        h[(i, k)] -= p;
                        h[(i, k + 1)] -= p * q;
                    }
                    for i in 0..nn {
                        p = x * v[(i, k)] + y * v[(i, k + 1)];
                        if notlast {
                            p += z * v[(i, k + 2)];
                            v[(i, k + 2)] -= p * r;
                        }
                        v[(i, k)] -= p;
                        v[(i, k + 1)] -= p * q;
                    }
                }
            }
        }
    }
    // clean everything below the quasi-triangular structure
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < nn {
        if complex_block[i] {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    for c in 0..nn {
        for rr in c + 1..nn {
            let keep = rr == c + 1 && complex_block[c];
            if !keep {
                h[(rr, c)] = 0.0;
            }
        }
    }
    let eigenvalues = d.iter().zip(&e).map(|(&re, &im)| Complex64::new(re, im)).collect();
    Ok(RealSchur { t: h, z: v, eigenvalues, blocks })
}

/// Upper bound on σ_min(H − λI) for upper-Hessenberg H, from one
/// inverse-iteration solve against a fixed right-hand side.
fn hessenberg_singularity_proxy(h: &Mat, lambda: Complex64) -> f64 {
    let n = h.rows();
    let mut m: Vec<Complex64> = h.as_slice().iter().map(|&x| Complex64::new(x, 0.0)).collect();
    for i in 0..n {
        m[i * n + i] -= lambda;
    }
    let scale = h.max_abs().max(lambda.norm()).max(f64::MIN_POSITIVE);
    let mut b: Vec<Complex64> = (0..n).map(|i| Complex64::new(1.0 + (i % 7) as f64 * 0.1, 0.0)).collect();
    let bnorm = linalg::cnorm2(&b);
    for k in 0..n {
        if k + 1 < n && m[(k + 1) * n + k].norm() > m[k * n + k].norm() {
            for j in k..n {
                m.swap(k * n + j, (k + 1) * n + j);
            }
            b.swap(k, k + 1);
        }
        if m[k * n + k].norm() < f64::EPSILON * scale {
            m[k * n + k] = Complex64::new(f64::EPSILON * scale, 0.0);
        }
        if k + 1 < n {
            let f = m[(k + 1) * n + k] / m[k * n + k];
            if f != Complex64::new(0.0, 0.0) {
                for j in k..n {
                    let u = m[k * n + j];
                    m[(k + 1) * n + j] -= f * u;
                }
                let bk = b[k];
                b[k + 1] -= f * bk;
            }
        }
    }
    for i in (0..n).rev() {
        let mut acc = b[i];
        for j in i + 1..n {
            acc -= m[i * n + j] * b[j];
        }
        b[i] = acc / m[i * n + i];
    }
    bnorm / linalg::cnorm2(&b)
}

/// Full spectrum of a dense matrix via Hessenberg reduction and shifted QR.
pub fn dense_spectrum(a: &Mat) -> Result<SpectrumReport> {
    let schur = real_schur(a)?;
    let (h, _) = hessenberg(a);
    let mut report = SpectrumReport::from_eigenvalues(&schur.eigenvalues);
    let scale = a.max_abs().max(1.0);
    report.residuals = report.eigenvalues.iter().map(|&l| hessenberg_singularity_proxy(&h, l)).collect();
    if let Some(bad) = report.residuals.iter().position(|&r| !(r <= 1e-8 * scale)) {
        return Err(Error::NoConvergence(format!(
            "eigenvalue {} fails residual check ({:e})",
            report.eigenvalues[bad], report.residuals[bad]
        )));
    }
    Ok(report)
}

/// Eigenvector for a (numerically) known eigenvalue by shifted inverse
/// iteration, normalized to unit 2-norm. With `left = true` the returned y
/// satisfies yᵀA = λyᵀ, i.e. it is a right eigenvector of Aᵀ.
pub fn eigenvector(a: &Mat, lambda: Complex64, left: bool, steps: usize) -> Vec<Complex64> {
    let n = a.rows();
    let src = if left { a.transpose() } else { a.clone() };
    let lu = CLu::new(&CMat::from_real_shifted(&src, lambda));
    let mut x: Vec<Complex64> =
        (0..n).map(|i| Complex64::new(1.0 + ((i * 7919) % 13) as f64 / 13.0, 0.0)).collect();
    for _ in 0..steps.max(1) {
        x = lu.solve(&x);
        let norm = linalg::cnorm2(&x);
        x.iter_mut().for_each(|z| *z /= norm);
    }
    // fix the phase so the largest component is real and positive
    let big = x.iter().copied().fold(Complex64::new(0.0, 0.0), |m, z| if z.norm() > m.norm() { z } else { m });
    if big.norm() > 0.0 {
        let phase = big.conj() / big.norm();
        x.iter_mut().for_each(|z| *z *= phase);
    }
    x
}

/// ‖Ax − λx‖₂ for a complex vector x.
pub fn eigen_residual(a: &Mat, lambda: Complex64, x: &[Complex64]) -> f64 {
    let n = a.rows();
    let mut acc = 0.0;
    for i in 0..n {
        let mut s = -lambda * x[i];
        for j in 0..n {
            s += a[(i, j)] * x[j];
        }
        acc += s.norm_sqr();
    }
    acc.sqrt()
}

/// Orthonormal basis of a dominant invariant subspace with its
/// Rayleigh–Ritz Schur form.
#[derive(Clone, Debug)]
pub struct SchurBasis {
    /// n×s orthonormal columns; U T Uᵀ restricted to span(U) matches A.
    pub u: Mat,
    /// s×s quasi-upper-triangular Ritz matrix Uᵀ A U.
    pub t: Mat,
    /// Diagonal blocks of `t` as (start, size).
    pub blocks: Vec<(usize, usize)>,
    /// Ritz values sorted by [`sort_spectrum`].
    pub eigen_estimates: Vec<Complex64>,
    /// Ritz estimate of λ_{s+1} from the guard column, when s < n.
    pub next_estimate: Option<Complex64>,
    /// False when |λ_s| ≈ |λ_{s+1}| by the guard estimate.
    pub separated: bool,
    /// True when the guard estimates put a conjugate pair across the cut.
    pub splits_pair: bool,
    /// ‖AU − UT‖_F.
    pub residual: f64,
}

fn seeded_orthonormal(n: usize, k: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Mat::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    householder_qr(&g).0
}

/// Rayleigh–Ritz on an orthonormal basis: U ← U Y with YᵀHY = T the real
/// Schur form of H = UᵀAU.
pub fn rayleigh_ritz<A: LinearOp + ?Sized>(a: &A, u: &Mat) -> Result<(Mat, RealSchur)> {
    let au = a.apply_block(u);
    let h = u.transpose().matmul(&au);
    let schur = real_schur(&h)?;
    Ok((u.matmul(&schur.z), schur))
}

/// Orthogonal iteration: m rounds of Z ← AU, U ← qr(Z).Q from a seeded
/// random orthonormal start, then Rayleigh–Ritz on the top s columns. One
/// guard column (when s < n) supplies the λ_{s+1} estimate used for the
/// separation and conjugate-split flags; the top-s columns are unaffected by
/// it because Householder QR keeps leading column spans nested.
pub fn orthogonal_iteration<A: LinearOp + ?Sized>(a: &A, s: usize, m: usize, seed: u64) -> Result<SchurBasis> {
    let n = a.dim();
    if s == 0 || s > n {
        return Err(Error::Invalid(format!("orthogonal iteration rank {s} outside 1..={n}")));
    }
    let k = (s + 1).min(n);
    let mut u = seeded_orthonormal(n, k, seed);
    for _ in 0..m {
        let z = a.apply_block(&u);
        if z.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::NoConvergence("orthogonal iteration produced non-finite values".into()));
        }
        u = householder_qr(&z).0;
    }
    finish_basis(a, &u, s)
}

/// Rayleigh–Ritz extraction plus separation diagnostics for a basis whose
/// leading s columns span the target subspace (extra columns are guards).
pub fn finish_basis<A: LinearOp + ?Sized>(a: &A, u: &Mat, s: usize) -> Result<SchurBasis> {
    let n = a.dim();
    let us = u.columns(0, s);
    let (basis, schur) = rayleigh_ritz(a, &us)?;
    let eigen_estimates = sort_spectrum(&schur.eigenvalues);
    let mut next_estimate = None;
    let mut separated = true;
    let mut split = false;
    if u.cols() > s && s < n {
        let (guard_basis, guard) = rayleigh_ritz(a, u)?;
        let guard_sorted = sort_spectrum(&guard.eigenvalues);
        let next = guard_sorted[s];
        let last = eigen_estimates[s - 1];
        next_estimate = Some(next);
        // an unconverged cluster can show up as a spurious complex pair, so
        // the pair must be resolved well below its imaginary part
        split = splits_pair(&guard_sorted, s)
            && ritz_residual(a, &guard_basis, &guard.t, guard_sorted[s - 1])
                < PAIR_RESOLUTION * guard_sorted[s - 1].im.abs();
        let (ml, mn) = (last.norm(), next.norm());
        separated = !split && ml - mn > SEPARATION_TOL * ml.max(1e-300);
    }
    let ab = a.apply_block(&basis);
    let residual = ab.sub(&basis.matmul(&schur.t)).frobenius();
    Ok(SchurBasis {
        u: basis,
        t: schur.t,
        blocks: schur.blocks,
        eigen_estimates,
        next_estimate,
        separated,
        splits_pair: split,
        residual,
    })
}

/// ‖A y − λ y‖₂ for the unit Ritz vector y = U x with T x = λ x.
fn ritz_residual<A: LinearOp + ?Sized>(a: &A, u: &Mat, t: &Mat, lambda: Complex64) -> f64 {
    let x = eigenvector(t, lambda, false, 3);
    let (n, k) = (u.rows(), u.cols());
    let yr: Vec<f64> = (0..n).map(|i| (0..k).map(|j| u[(i, j)] * x[j].re).sum()).collect();
    let yi: Vec<f64> = (0..n).map(|i| (0..k).map(|j| u[(i, j)] * x[j].im).sum()).collect();
    let (ar, ai) = (a.apply(&yr), a.apply(&yi));
    let mut acc = 0.0;
    for i in 0..n {
        let ay = Complex64::new(ar[i], ai[i]);
        acc += (ay - lambda * Complex64::new(yr[i], yi[i])).norm_sqr();
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cycle3() -> Mat {
        Mat::from_rows(&[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    }

    #[test]
    fn power_iteration_examples() {
        let a = Mat::from_rows(&[[2.0, 0.0], [0.0, 1.0]]);
        let b0 = [1.0 / 2f64.sqrt(); 2];
        let res = power_iteration(&a, &b0, 200, 1e-10).unwrap();
        assert!(res.converged);
        assert!((res.lambda - 2.0).abs() < 1e-9);
        assert!((res.vector[0].abs() - 1.0).abs() < 1e-9);

        let swap = Mat::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let res = power_iteration(&swap, &b0, 20, 1e-10).unwrap();
        assert_eq!(res.iterations, 1);
        assert!((res.lambda - 1.0).abs() < 1e-15);

        let res = power_iteration(&Mat::zeros(2, 2), &b0, 20, 1e-10).unwrap();
        assert!(res.zero_matrix);
        assert_eq!(res.lambda, 0.0);
        assert!(power_iteration(&swap, &[0.0, 0.0], 20, 1e-10).is_err());
    }

    #[test]
    fn qr_examples() {
        let (q, r) = qr_factorize(&Mat::identity(3)).unwrap();
        assert!(q.sub(&Mat::identity(3)).max_abs() < 1e-15);
        assert!(r.sub(&Mat::identity(3)).max_abs() < 1e-15);

        let tri = Mat::from_rows(&[[2.0, 1.0, -1.0], [0.0, 3.0, 0.5], [0.0, 0.0, 0.25]]);
        let (q, r) = qr_factorize(&tri).unwrap();
        assert!(q.sub(&Mat::identity(3)).max_abs() < 1e-15);
        assert!(r.sub(&tri).max_abs() < 1e-15);

        let z = Mat::from_rows(&[[1.0, 2.0], [-3.0, 0.5], [0.25, 4.0]]);
        let (q, r) = qr_factorize(&z).unwrap();
        assert!(q.matmul(&r).sub(&z).max_abs() < 1e-10);
        assert!(q.transpose().matmul(&q).sub(&Mat::identity(2)).max_abs() < 1e-10);
        assert!(r[(1, 0)] == 0.0 && r[(0, 0)] >= 0.0 && r[(1, 1)] >= 0.0);

        let deficient = Mat::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]);
        assert!(matches!(qr_factorize(&deficient), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn sort_examples() {
        assert_eq!(sort_spectrum(&[c(0.5, 0.0), c(-0.9, 0.0), c(1.0, 0.0)]), vec![c(1.0, 0.0), c(-0.9, 0.0), c(0.5, 0.0)]);
        assert_eq!(sort_spectrum(&[c(-0.5, 0.0), c(0.5, 0.0)]), vec![c(0.5, 0.0), c(-0.5, 0.0)]);
        assert_eq!(
            sort_spectrum(&[c(0.3, -0.4), c(1.0, 0.0), c(0.3, 0.4)]),
            vec![c(1.0, 0.0), c(0.3, 0.4), c(0.3, -0.4)]
        );
    }

    #[test]
    fn dense_spectrum_examples() {
        let d = Mat::from_rows(&[[3.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]);
        let rep = dense_spectrum(&d).unwrap();
        let re: Vec<f64> = rep.eigenvalues.iter().map(|z| z.re).collect();
        assert_eq!(re, vec![3.0, 2.0, 1.0]);

        let rep = dense_spectrum(&cycle3()).unwrap();
        let h = 3f64.sqrt() / 2.0;
        let want = [c(1.0, 0.0), c(-0.5, h), c(-0.5, -h)];
        for (got, want) in rep.eigenvalues.iter().zip(want) {
            assert!((got - want).norm() < 1e-12, "{got} vs {want}");
        }
        assert!(!rep.separated[0]);
    }

    #[test]
    fn schur_reconstructs() {
        let a = Mat::from_rows(&[[1.0, 2.0, 0.0, -1.0], [0.5, -1.0, 3.0, 0.0], [2.0, 0.0, 1.0, 1.0], [-1.0, 1.0, 0.0, 0.5]]);
        let s = real_schur(&a).unwrap();
        let back = s.z.matmul(&s.t).matmul(&s.z.transpose());
        assert!(back.sub(&a).max_abs() < 1e-12);
        assert!(s.z.transpose().matmul(&s.z).sub(&Mat::identity(4)).max_abs() < 1e-12);
        for j in 0..4 {
            for i in j + 2..4 {
                assert_eq!(s.t[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn orthogonal_iteration_examples() {
        let a = Mat::from_rows(&[[2.0, 1.0], [1.0, 2.0]]);
        let b = orthogonal_iteration(&a, 1, 100, 7).unwrap();
        assert!((b.eigen_estimates[0].re - 3.0).abs() < 1e-12);
        assert!((b.u[(0, 0)].abs() - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(b.separated);

        let d = Mat::from_rows(&[[3.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]);
        let b = orthogonal_iteration(&d, 2, 100, 1).unwrap();
        assert!((b.eigen_estimates[0].re - 3.0).abs() < 1e-9);
        assert!((b.eigen_estimates[1].re - 2.0).abs() < 1e-9);

        let b = orthogonal_iteration(&cycle3(), 1, 100, 3).unwrap();
        assert!(!b.separated);
    }

    #[test]
    fn eigenvector_by_inverse_iteration() {
        let a = Mat::from_rows(&[[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]);
        for &lam in &dense_spectrum(&a).unwrap().eigenvalues {
            let x = eigenvector(&a, lam, false, 3);
            assert!(eigen_residual(&a, lam, &x) < 1e-10);
            let y = eigenvector(&a, lam, true, 3);
            assert!(eigen_residual(&a.transpose(), lam, &y) < 1e-10);
        }
    }
}
