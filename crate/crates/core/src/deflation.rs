//! Rank-s deflation matrices E_s = Σ λ_i u_i v_i^† (Hotelling, rank-1
//! Wielandt, Schur), their action, the closed-form resolvent
//! (I − cE)^{-1} = I + Σ cλ_i/(1 − cλ_i) u_i v_i^†, and a dense check that
//! P − E_s keeps exactly the tail of P's spectrum.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cdot, cdot_real, CLu, CMat, Mat};
use crate::mdp::PolicyInducedChain;
use crate::spectra::{self, SchurBasis, SEPARATION_TOL};

/// Minimum |1 − cλ_i| accepted by the resolvent.
pub const RESOLVENT_TOL: f64 = 1e-10;
/// Minimum |u_i^† v_i| (unit vectors) before Hotelling is refused.
pub const DEFECTIVE_TOL: f64 = 1e-8;
/// Tolerance for matching the surviving spectrum and the next modulus.
pub const VERIFY_TOL: f64 = 1e-6;
const INVERSE_ITERATION_STEPS: usize = 3;
const EIGVEC_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeflationKind {
    Hotelling,
    Wielandt,
    Schur,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeflationTerm {
    pub lambda: Complex64,
    pub u: Vec<Complex64>,
    pub v: Vec<Complex64>,
}

/// Where the Schur vectors of [`build_schur`] come from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SchurSource {
    /// Orthogonal iteration with `m` rounds from a seeded start.
    Iterative { m: usize, seed: u64 },
    /// Exact invariant subspace from the dense eigen-solver (test oracle).
    Dense,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeflationMatrix {
    n: usize,
    pub kind: DeflationKind,
    pub terms: Vec<DeflationTerm>,
    /// Orthonormal real Schur basis (Schur kind only).
    pub schur_basis: Option<Mat>,
    /// False when the build could not separate |λ_s| from |λ_{s+1}|.
    pub separated: bool,
    /// Estimate of λ_{s+1} available at build time.
    pub next_estimate: Option<Complex64>,
}

impl DeflationMatrix {
    pub fn empty(n: usize) -> Self {
        DeflationMatrix {
            n,
            kind: DeflationKind::Schur,
            terms: Vec::new(),
            schur_basis: None,
            separated: true,
            next_estimate: None,
        }
    }

    /// Assembles a deflation from explicit terms; the caller is responsible
    /// for biorthogonality.
    pub fn from_terms(n: usize, kind: DeflationKind, terms: Vec<DeflationTerm>) -> Result<Self> {
        if let Some(t) = terms.iter().find(|t| t.u.len() != n || t.v.len() != n) {
            return Err(Error::Dimension(format!(
                "term vectors of length {}/{} for dimension {n}",
                t.u.len(),
                t.v.len()
            )));
        }
        Ok(DeflationMatrix { n, kind, terms, schur_basis: None, separated: true, next_estimate: None })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.terms.len()
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.terms.iter().map(|t| t.lambda).collect()
    }

    /// Re(Σ λ_i (v_i^† x) u_i).
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        Ok(self.combine(x, |t| t.lambda))
    }

    /// (I − c·E)^{-1} w in closed form.
    pub fn apply_resolvent(&self, c: f64, w: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(w.len())?;
        let coeffs = self.resolvent_coefficients(c)?;
        let mut out = w.to_vec();
        for (t, k) in self.terms.iter().zip(coeffs) {
            let f = k * cdot_real(&t.v, w);
            for (o, u) in out.iter_mut().zip(&t.u) {
                *o += (f * u).re;
            }
        }
        Ok(out)
    }

    /// cλ_i / (1 − cλ_i) for every term.
    pub fn resolvent_coefficients(&self, c: f64) -> Result<Vec<Complex64>> {
        self.terms
            .iter()
            .map(|t| {
                let denom = 1.0 - c * t.lambda;
                if denom.norm() < RESOLVENT_TOL {
                    Err(Error::Singular(format!("1 − {c}·λ = {denom} for λ = {}", t.lambda)))
                } else {
                    Ok(c * t.lambda / denom)
                }
            })
            .collect()
    }

    fn combine(&self, x: &[f64], coeff: impl Fn(&DeflationTerm) -> Complex64) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for t in &self.terms {
            let f = coeff(t) * cdot_real(&t.v, x);
            for (o, u) in out.iter_mut().zip(&t.u) {
                *o += (f * u).re;
            }
        }
        out
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::Dimension(format!("vector of length {len} for dimension {}", self.n)));
        }
        Ok(())
    }

    /// Dense real E_s and the largest imaginary residue of the complex sum.
    pub fn assemble(&self) -> (Mat, f64) {
        let n = self.n;
        let mut re = Mat::zeros(n, n);
        let mut im_max = 0.0f64;
        let mut acc = vec![Complex64::new(0.0, 0.0); n * n];
        for t in &self.terms {
            for i in 0..n {
                let li = t.lambda * t.u[i];
                for j in 0..n {
                    acc[i * n + j] += li * t.v[j].conj();
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                re[(i, j)] = acc[i * n + j].re;
                im_max = im_max.max(acc[i * n + j].im.abs());
            }
        }
        (re, im_max)
    }

    /// max |v_i^† u_j − δ_ij|.
    pub fn biorthogonality_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, ti) in self.terms.iter().enumerate() {
            for (j, tj) in self.terms.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((cdot(&ti.v, &tj.u) - want).norm());
            }
        }
        worst
    }

    /// True when every non-real eigenvalue has its conjugate among the terms.
    pub fn is_conjugate_closed(&self) -> bool {
        self.terms.iter().all(|t| {
            t.lambda.im.abs() <= spectra::REAL_TOL * t.lambda.norm().max(1.0)
                || self.terms.iter().any(|o| (o.lambda - t.lambda.conj()).norm() <= 1e-12 * t.lambda.norm().max(1.0))
        })
    }
}

/// E_s action.
pub fn apply_e(e: &DeflationMatrix, x: &[f64]) -> Result<Vec<f64>> {
    e.apply(x)
}

/// (I − ag·E)^{-1} w.
pub fn apply_resolvent(e: &DeflationMatrix, ag: f64, w: &[f64]) -> Result<Vec<f64>> {
    e.apply_resolvent(ag, w)
}

/// (P^π − E_s) x.
pub fn deflated_apply(chain: &PolicyInducedChain, e: &DeflationMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if chain.n() != e.n() {
        return Err(Error::Dimension(format!("chain of size {} with deflation of size {}", chain.n(), e.n())));
    }
    let ex = e.apply(x)?;
    let px = chain.p_pi.matvec(x);
    Ok(px.iter().zip(&ex).map(|(p, q)| p - q).collect())
}

fn real_vec(x: &[f64]) -> Vec<Complex64> {
    x.iter().map(|&a| Complex64::new(a, 0.0)).collect()
}

/// E₁ = 𝟏vᵀ for a probability vector v; deflates λ₁ = 1 of any stochastic
/// matrix.
pub fn build_wielandt_rank1(v: &[f64]) -> Result<DeflationMatrix> {
    if let Some(x) = v.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::Invalid(format!("negative or invalid entry {x} in deflation vector")));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::Invalid(format!("deflation vector sums to {sum}")));
    }
    let n = v.len();
    let term = DeflationTerm { lambda: Complex64::new(1.0, 0.0), u: real_vec(&vec![1.0; n]), v: real_vec(v) };
    DeflationMatrix::from_terms(n, DeflationKind::Wielandt, vec![term])
}

fn check_split(sorted: &[Complex64], s: usize) -> Result<()> {
    if spectra::splits_pair(sorted, s) {
        return Err(Error::ConjugateSplit { requested: s, suggested: s + 1 });
    }
    Ok(())
}

/// Right eigenvectors for the top-s eigenvalues; conjugate partners are
/// conjugated copies so that the assembled matrix is exactly real.
fn top_eigenvectors(p: &Mat, sorted: &[Complex64], s: usize, left: bool) -> Result<Vec<Vec<Complex64>>> {
    let a = if left { p.transpose() } else { p.clone() };
    let mut out: Vec<Vec<Complex64>> = Vec::with_capacity(s);
    for i in 0..s {
        let lam = sorted[i];
        if i > 0 && lam.im < 0.0 && (sorted[i - 1] - lam.conj()).norm() <= 1e-8 * lam.norm().max(1.0) {
            let prev = out[i - 1].iter().map(|z| z.conj()).collect();
            out.push(prev);
            continue;
        }
        let x = spectra::eigenvector(p, lam, left, INVERSE_ITERATION_STEPS);
        let res = spectra::eigen_residual(&a, lam, &x);
        if !(res <= EIGVEC_RESIDUAL_TOL * p.norm_inf().max(1.0)) {
            return Err(Error::NoConvergence(format!("eigenvector for {lam} has residual {res:e}")));
        }
        out.push(x);
    }
    Ok(out)
}

/// Inverse of a small complex matrix.
fn cinverse(m: &CMat) -> Result<(Vec<Complex64>, f64)> {
    let n = m.n;
    let lu = CLu::new(m);
    let mut inv = vec![Complex64::new(0.0, 0.0); n * n];
    for j in 0..n {
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        e[j] = Complex64::new(1.0, 0.0);
        let col = lu.solve(&e);
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    Ok((inv, lu.min_relative_pivot()))
}

/// Hotelling deflation from right and left eigenvectors of P, scaled so that
/// v_i^† u_j = δ_ij.
pub fn build_hotelling(p: &Mat, s: usize) -> Result<DeflationMatrix> {
    let n = p.rows();
    if !p.is_square() || s > n {
        return Err(Error::Invalid(format!("rank {s} for a {}x{} matrix", p.rows(), p.cols())));
    }
    if s == 0 {
        return Ok(DeflationMatrix { kind: DeflationKind::Hotelling, ..DeflationMatrix::empty(n) });
    }
    let spec = spectra::dense_spectrum(p)?;
    let sorted = &spec.eigenvalues;
    check_split(sorted, s)?;
    let us = top_eigenvectors(p, sorted, s, false)?;
    // yᵀP = λyᵀ from the transpose; conjugating gives y^†P = λy^†
    let ys: Vec<Vec<Complex64>> = top_eigenvectors(p, sorted, s, true)?
        .into_iter()
        .map(|y| y.into_iter().map(|z| z.conj()).collect())
        .collect();
    for (i, (u, y)) in us.iter().zip(&ys).enumerate() {
        let overlap = cdot(y, u).norm();
        if overlap < DEFECTIVE_TOL {
            return Err(Error::NearDefective(format!(
                "|y^† u| = {overlap:e} for λ_{} = {}; use Schur deflation",
                i + 1,
                sorted[i]
            )));
        }
    }
    // V^† = (Y^† U)^{-1} Y^†  ⇒  v_i = Σ_k conj(M^{-1}[i,k]) y_k
    let m = CMat::from_fn(s, |i, j| cdot(&ys[i], &us[j]));
    let (minv, pivot) = cinverse(&m)?;
    if pivot < DEFECTIVE_TOL {
        return Err(Error::NearDefective(format!("biorthogonalization pivot {pivot:e}")));
    }
    let mut terms = Vec::with_capacity(s);
    for i in 0..s {
        let mut v = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..s {
            let c = minv[i * s + k].conj();
            for (vj, yk) in v.iter_mut().zip(&ys[k]) {
                *vj += c * yk;
            }
        }
        terms.push(DeflationTerm { lambda: sorted[i], u: us[i].clone(), v });
    }
    let mut e = DeflationMatrix::from_terms(n, DeflationKind::Hotelling, terms)?;
    e.next_estimate = sorted.get(s).copied();
    e.separated = spec.separated.get(s - 1).copied().unwrap_or(true);
    Ok(e)
}

/// Splits a Rayleigh–Ritz Schur basis into terms: 1×1 blocks give
/// u_i = v_i = Schur vector; a 2×2 complex block B = G diag(μ, μ̄) G^{-1}
/// gives u = Q g_k and v = Q (G^{-1})^† e_k for its basis columns Q.
fn schur_terms(basis: &SchurBasis) -> Vec<DeflationTerm> {
    let (u, t) = (&basis.u, &basis.t);
    let n = u.rows();
    let mut terms = Vec::with_capacity(t.rows());
    for &(start, size) in &basis.blocks {
        if size == 1 {
            let col = real_vec(&u.col(start));
            terms.push(DeflationTerm { lambda: Complex64::new(t[(start, start)], 0.0), u: col.clone(), v: col });
            continue;
        }
        let (a, b, c, d) = (t[(start, start)], t[(start, start + 1)], t[(start + 1, start)], t[(start + 1, start + 1)]);
        let half_tr = (a + d) / 2.0;
        let disc = Complex64::new((a - d) * (a - d) / 4.0 + b * c, 0.0).sqrt();
        let mu = if disc.im >= 0.0 { half_tr + disc } else { half_tr - disc };
        // eigenvector of B for μ
        let g = if b.abs() >= c.abs() {
            [Complex64::new(b, 0.0), mu - a]
        } else {
            [mu - d, Complex64::new(c, 0.0)]
        };
        let gg = [g, [g[0].conj(), g[1].conj()]];
        // G = [g, ḡ] as columns; G^{-1} = adj / det
        let det = gg[0][0] * gg[1][1] - gg[1][0] * gg[0][1];
        let ginv = [[gg[1][1] / det, -gg[1][0] / det], [-gg[0][1] / det, gg[0][0] / det]];
        let q0 = u.col(start);
        let q1 = u.col(start + 1);
        for k in 0..2 {
            let lambda = if k == 0 { mu } else { mu.conj() };
            let uk: Vec<Complex64> = (0..n).map(|i| gg[k][0] * q0[i] + gg[k][1] * q1[i]).collect();
            let vk: Vec<Complex64> = (0..n).map(|i| ginv[k][0].conj() * q0[i] + ginv[k][1].conj() * q1[i]).collect();
            terms.push(DeflationTerm { lambda, u: uk, v: vk });
        }
    }
    terms
}

fn dense_schur_basis(p: &Mat, s: usize) -> Result<SchurBasis> {
    let spec = spectra::dense_spectrum(p)?;
    let sorted = &spec.eigenvalues;
    check_split(sorted, s)?;
    let vecs = top_eigenvectors(p, sorted, s, false)?;
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(s);
    let mut i = 0;
    while i < s {
        let x = &vecs[i];
        if sorted[i].im.abs() > spectra::REAL_TOL * sorted[i].norm().max(1.0) {
            cols.push(x.iter().map(|z| z.re).collect());
            cols.push(x.iter().map(|z| z.im).collect());
            i += 2;
        } else {
            cols.push(x.iter().map(|z| z.re).collect());
            i += 1;
        }
    }
    let (q, r) = spectra::householder_qr(&Mat::from_columns(&cols));
    if (0..s).any(|k| r[(k, k)] < DEFECTIVE_TOL) {
        return Err(Error::NearDefective("top eigenvectors are nearly dependent".into()));
    }
    let mut basis = spectra::finish_basis(p, &q, s)?;
    basis.next_estimate = sorted.get(s).copied();
    basis.separated = spec.separated.get(s - 1).copied().unwrap_or(true);
    Ok(basis)
}

/// Schur deflation E_s = Q_s blockdiag(T_s) Q_sᵀ from an orthonormal basis
/// of the dominant s-dimensional invariant subspace.
pub fn build_schur(p: &Mat, s: usize, source: SchurSource) -> Result<DeflationMatrix> {
    let n = p.rows();
    if !p.is_square() || s > n {
        return Err(Error::Invalid(format!("rank {s} for a {}x{} matrix", p.rows(), p.cols())));
    }
    if s == 0 {
        return Ok(DeflationMatrix::empty(n));
    }
    let basis = match source {
        SchurSource::Iterative { m, seed } => {
            let b = spectra::orthogonal_iteration(p, s, m, seed)?;
            if b.splits_pair {
                return Err(Error::ConjugateSplit { requested: s, suggested: s + 1 });
            }
            b
        }
        SchurSource::Dense => dense_schur_basis(p, s)?,
    };
    schur_from_basis(&basis)
}

/// Wraps an already computed Schur basis as a deflation matrix.
pub fn schur_from_basis(basis: &SchurBasis) -> Result<DeflationMatrix> {
    let n = basis.u.rows();
    let mut e = DeflationMatrix::from_terms(n, DeflationKind::Schur, schur_terms(basis))?;
    e.schur_basis = Some(basis.u.clone());
    e.separated = basis.separated;
    e.next_estimate = basis.next_estimate;
    Ok(e)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeflationReport {
    pub rank: usize,
    pub rho_deflated: f64,
    pub next_modulus: f64,
    pub abs_diff: f64,
    /// Largest distance in the greedy matching of P's tail spectrum into the
    /// spectrum of P − E.
    pub tail_mismatch: f64,
    pub tail_match: bool,
    pub imag_residue: f64,
    pub pass: bool,
}

/// Dense check that P − E_s has spectral radius |λ_{s+1}(P)| and keeps
/// P's tail eigenvalues.
pub fn verify_deflation(p: &Mat, e: &DeflationMatrix) -> Result<DeflationReport> {
    let s = e.rank();
    let spec_p = spectra::dense_spectrum(p)?;
    let (dense_e, imag_residue) = e.assemble();
    let spec_d = spectra::dense_spectrum(&p.sub(&dense_e))?;
    let next_modulus = spec_p.eigenvalues.get(s).map_or(0.0, |z| z.norm());
    let rho_deflated = spec_d.spectral_radius();
    let abs_diff = (rho_deflated - next_modulus).abs();
    let mut pool = spec_d.eigenvalues.clone();
    let mut tail_mismatch = 0.0f64;
    for lam in spec_p.eigenvalues.iter().skip(s) {
        let (idx, dist) = pool
            .iter()
            .enumerate()
            .map(|(i, z)| (i, (z - lam).norm()))
            .fold((usize::MAX, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best });
        tail_mismatch = tail_mismatch.max(dist);
        if idx != usize::MAX {
            pool.swap_remove(idx);
        }
    }
    let tail_match = tail_mismatch <= VERIFY_TOL;
    Ok(DeflationReport {
        rank: s,
        rho_deflated,
        next_modulus,
        abs_diff,
        tail_mismatch,
        tail_match,
        imag_residue,
        pass: abs_diff <= VERIFY_TOL && tail_match && imag_residue <= 1e-9,
    })
}

/// Rank adjusted upward by one when `s` would split a conjugate pair of
/// P's spectrum.
pub fn conjugate_adjusted_rank(p: &Mat, s: usize) -> Result<usize> {
    let spec = spectra::dense_spectrum(p)?;
    Ok(spectra::conjugate_closed_rank(&spec.eigenvalues, s))
}

/// |λ_s| − |λ_{s+1}| relative gap test used by callers that need a hard
/// separation guarantee.
pub fn is_separated(sorted: &[Complex64], s: usize) -> bool {
    if s == 0 || s >= sorted.len() {
        return true;
    }
    let (a, b) = (sorted[s - 1].norm(), sorted[s].norm());
    a - b > SEPARATION_TOL * a.max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sup_dist;

    fn half() -> Mat {
        Mat::from_rows(&[[0.5, 0.5], [0.5, 0.5]])
    }

    fn cycle3() -> Mat {
        Mat::from_rows(&[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    }

    #[test]
    fn wielandt_examples() {
        let e = build_wielandt_rank1(&[0.5, 0.5]).unwrap();
        let (dense, im) = e.assemble();
        assert_eq!(dense, half());
        assert_eq!(im, 0.0);
        let e = build_wielandt_rank1(&[1.0, 0.0]).unwrap();
        let rep = verify_deflation(&half(), &e).unwrap();
        assert!(rep.rho_deflated < 1e-12);
        assert!(build_wielandt_rank1(&[0.6, 0.5]).is_err());
        assert!(build_wielandt_rank1(&[1.5, -0.5]).is_err());
    }

    #[test]
    fn hotelling_examples() {
        let e = build_hotelling(&half(), 1).unwrap();
        let t = &e.terms[0];
        let scale = t.u[0];
        assert!((t.u[1] - scale).norm() < 1e-12);
        // rescale to u = 1: v becomes the stationary distribution
        let v: Vec<f64> = t.v.iter().map(|z| (z.conj() * scale).re).collect();
        assert!(sup_dist(&v, &[0.5, 0.5]) < 1e-12);
        assert!(e.assemble().0.sub(&half()).max_abs() < 1e-12);

        match build_hotelling(&cycle3(), 2) {
            Err(Error::ConjugateSplit { requested: 2, suggested: 3 }) => {}
            other => panic!("expected conjugate split, got {other:?}"),
        }

        let tri = Mat::from_rows(&[[0.5, 0.3, 0.2], [0.0, 0.6, 0.4], [0.0, 0.0, 1.0]]);
        let e = build_hotelling(&tri, 3).unwrap();
        let rep = verify_deflation(&tri, &e).unwrap();
        assert!(rep.rho_deflated < 1e-6, "{rep:?}");
    }

    #[test]
    fn schur_examples() {
        let a = Mat::from_rows(&[[2.0, 1.0], [1.0, 2.0]]);
        let e = build_schur(&a, 1, SchurSource::Iterative { m: 100, seed: 0 }).unwrap();
        assert!(e.assemble().0.sub(&Mat::from_rows(&[[1.5, 1.5], [1.5, 1.5]])).max_abs() < 1e-12);
        let rep = verify_deflation(&a, &e).unwrap();
        assert!((rep.rho_deflated - 1.0).abs() < 1e-12 && rep.pass);

        let p = Mat::from_rows(&[[0.2, 0.5, 0.3], [0.6, 0.1, 0.3], [0.3, 0.3, 0.4]]);
        let e = build_schur(&p, 3, SchurSource::Iterative { m: 50, seed: 1 }).unwrap();
        assert!(verify_deflation(&p, &e).unwrap().rho_deflated < 1e-6);
        let e = build_schur(&p, 1, SchurSource::Iterative { m: 100, seed: 1 }).unwrap();
        assert!((e.terms[0].lambda.re - 1.0).abs() < 1e-8);
    }

    #[test]
    fn schur_with_complex_block_is_real_and_biorthogonal() {
        // rotation-like block plus a dominant real eigenvalue
        let p = Mat::from_rows(&[
            [0.1, 0.6, 0.1, 0.2],
            [0.1, 0.1, 0.7, 0.1],
            [0.7, 0.1, 0.1, 0.1],
            [0.25, 0.25, 0.25, 0.25],
        ]);
        let spec = spectra::dense_spectrum(&p).unwrap();
        assert!(spec.eigenvalues[1].im.abs() > 1e-3);
        let e = build_schur(&p, 3, SchurSource::Dense).unwrap();
        assert!(e.is_conjugate_closed());
        assert!(e.biorthogonality_error() < 1e-10);
        let rep = verify_deflation(&p, &e).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(matches!(build_schur(&p, 2, SchurSource::Dense), Err(Error::ConjugateSplit { .. })));
    }

    #[test]
    fn apply_examples() {
        let e = build_wielandt_rank1(&[0.5, 0.5]).unwrap();
        assert_eq!(e.apply(&[1.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(DeflationMatrix::empty(3).apply(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 3]);
        assert!(e.apply(&[1.0]).is_err());
    }

    #[test]
    fn resolvent_examples() {
        let e = build_wielandt_rank1(&[0.5, 0.5]).unwrap();
        let w = [1.0, 0.0];
        assert_eq!(e.apply_resolvent(0.0, &w).unwrap(), w.to_vec());
        assert_eq!(DeflationMatrix::empty(2).apply_resolvent(0.9, &w).unwrap(), w.to_vec());
        let v = e.apply_resolvent(0.9, &w).unwrap();
        assert!(sup_dist(&v, &[5.5, 4.5]) < 1e-12);
        assert!(e.apply_resolvent(1.0, &w).is_err());
    }

    #[test]
    fn deflated_apply_examples() {
        let chain = PolicyInducedChain::new(half(), vec![1.0, 0.0]).unwrap();
        let x = [0.3, -1.7];
        let empty = DeflationMatrix::empty(2);
        assert_eq!(deflated_apply(&chain, &empty, &x).unwrap(), half().matvec(&x));
        let e = build_wielandt_rank1(&[0.5, 0.5]).unwrap();
        assert!(deflated_apply(&chain, &e, &x).unwrap().iter().all(|z| z.abs() < 1e-15));
        assert!(deflated_apply(&chain, &e, &[1.0, 1.0]).unwrap().iter().all(|z| z.abs() < 1e-15));
    }

    #[test]
    fn verify_flags_wrong_vectors() {
        let p = Mat::from_rows(&[[0.2, 0.5, 0.3], [0.6, 0.1, 0.3], [0.3, 0.3, 0.4]]);
        let good = build_hotelling(&p, 1).unwrap();
        assert!(verify_deflation(&p, &good).unwrap().pass);
        let mut bad = good.clone();
        bad.terms[0].v = real_vec(&[1.0, 0.0, 0.0]);
        bad.terms[0].u = real_vec(&[0.0, 1.0, 0.0]);
        assert!(!verify_deflation(&p, &bad).unwrap().pass);
        let rep = verify_deflation(&p, &DeflationMatrix::empty(3)).unwrap();
        assert!((rep.rho_deflated - 1.0).abs() < 1e-12 && rep.pass);
    }
}
