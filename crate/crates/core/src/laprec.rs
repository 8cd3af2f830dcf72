//! Recovery of the communication Laplacian from an identified one-step
//! matrix by alternating minimization of `‖K − (S + L ⊗ T)‖`.
//!
//! States are stacked agent-major, so the graph coupling appears as
//! `L ⊗ T` (Laplacian outside, per-agent block inside). `S` holds the
//! agent-local dynamics and is block-diagonal. `L` is kept in the cone of
//! candidate Laplacians: symmetric, zero row sums, positive semi-definite.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scalar::Real;

/// Ridge added to singular normal equations.
pub const RIDGE: f64 = 1e-12;

/// Default off-diagonal edge threshold, relative to the largest magnitude.
pub const EDGE_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct KroneckerModel<T: Real> {
    pub s: DMatrix<T>,
    pub t: DMatrix<T>,
    pub l: DMatrix<T>,
}

impl<T: Real> KroneckerModel<T> {
    /// `S + L ⊗ T`.
    pub fn assemble(&self) -> DMatrix<T> {
        &self.s + self.l.kronecker(&self.t)
    }

    /// Edge pattern of `L` under the relative threshold.
    pub fn graph(&self, rel_threshold: T) -> Result<Graph> {
        Graph::from_laplacian_pattern(&self.l, rel_threshold)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord<T: Real> {
    pub iteration: usize,
    pub frobenius: T,
    pub gamma: T,
    /// Smallest γ seen so far.
    pub best_gamma: T,
}

#[derive(Clone, Debug)]
pub struct RecoveryResult<T: Real> {
    pub model: KroneckerModel<T>,
    /// Spectral norm of the best iterate's residual.
    pub gamma: T,
    pub frobenius_residual: T,
    pub iterations: usize,
    pub converged: bool,
    /// A singular normal equation was regularized along the way.
    pub regularized: bool,
    pub trace: Vec<IterationRecord<T>>,
}

#[derive(Clone, Copy, Debug)]
pub struct RecoveryOptions<T: Real> {
    /// Per-agent block size of `K`.
    pub block: usize,
    /// Stop once the best γ improves by less than this in a sweep.
    pub threshold: T,
    pub max_iters: usize,
    pub seed: u64,
}

impl<T: Real> Default for RecoveryOptions<T> {
    fn default() -> Self {
        RecoveryOptions {
            block: 4,
            threshold: T::lit(1e-6),
            max_iters: 100,
            seed: 0,
        }
    }
}

/// Nearest (Frobenius) candidate Laplacian.
///
/// Symmetrize, remove the all-ones component from both sides, clip negative
/// eigenvalues; repeated until a fixed point at `1e-10` (the composition is
/// already idempotent, so the loop exits after the confirming pass).
pub fn project_laplacian_cone<T: Real>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::invalid("cone projection needs a square matrix"));
    }
    if n == 0 {
        return Ok(m.clone());
    }
    let mut cur = one_projection_pass(m);
    for _ in 0..8 {
        let next = one_projection_pass(&cur);
        let moved = (&next - &cur).norm();
        cur = next;
        if moved <= T::lit(1e-10) * (T::one() + cur.norm()) {
            break;
        }
    }
    Ok(cur)
}

fn one_projection_pass<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let n = m.nrows();
    let sym = (m + m.transpose()) * T::lit(0.5);
    let nf = T::from_usize_lossy(n);
    let row_means = sym.column_mean();
    let total = row_means.sum() / nf;
    let centered = DMatrix::from_fn(n, n, |i, j| sym[(i, j)] - row_means[i] - row_means[j] + total);
    let eig = SymmetricEigen::new(centered);
    let clipped = eig.eigenvalues.map(|v| v.max(T::zero()));
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    // restore exact symmetry lost to rounding
    out = (&out + out.transpose()) * T::lit(0.5);
    out
}

/// `(i,j)` block of size `b × b`.
fn block<T: Real>(m: &DMatrix<T>, b: usize, i: usize, j: usize) -> DMatrix<T> {
    m.view((i * b, j * b), (b, b)).into_owned()
}

fn check_dims<T: Real>(k: &DMatrix<T>, b: usize) -> Result<usize> {
    if b == 0 || k.nrows() != k.ncols() || k.nrows() % b != 0 || k.nrows() == 0 {
        return Err(Error::invalid(format!(
            "K must be square with side divisible into blocks of {b}, got {}×{}",
            k.nrows(),
            k.ncols()
        )));
    }
    Ok(k.nrows() / b)
}

/// Block-diagonal part of `m`.
pub fn block_diagonal<T: Real>(m: &DMatrix<T>, b: usize) -> DMatrix<T> {
    let n = m.nrows() / b;
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for i in 0..n {
        out.view_mut((i * b, i * b), (b, b)).copy_from(&m.view((i * b, i * b), (b, b)));
    }
    out
}

/// Frobenius norm of the off-diagonal blocks only.
fn offdiag_norm<T: Real>(m: &DMatrix<T>, b: usize) -> T {
    let n = m.nrows() / b;
    let mut s = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m.view((i * b, j * b), (b, b)).norm_squared();
            }
        }
    }
    s.sqrt()
}

/// S-step: block-diagonal minimizer `S = blockdiag(K − L ⊗ T)`.
pub fn s_step<T: Real>(k: &DMatrix<T>, t: &DMatrix<T>, l: &DMatrix<T>) -> Result<DMatrix<T>> {
    let b = t.nrows();
    let n = check_dims(k, b)?;
    if l.shape() != (n, n) {
        return Err(Error::invalid("L shape does not match the number of blocks"));
    }
    Ok(block_diagonal(&(k - l.kronecker(t)), b))
}

/// T-step given `L` and block-diagonal `S`.
///
/// Since `S` absorbs every diagonal block, only the off-diagonal blocks
/// constrain `T`: `T = Σ_{i≠j} L_ij K_ij / Σ_{i≠j} L_ij²`. Returns the new
/// `T` and whether the ridge was needed.
pub fn t_step<T: Real>(k: &DMatrix<T>, l: &DMatrix<T>, b: usize) -> Result<(DMatrix<T>, bool)> {
    let n = check_dims(k, b)?;
    if l.shape() != (n, n) {
        return Err(Error::invalid("L shape does not match the number of blocks"));
    }
    let mut num = DMatrix::zeros(b, b);
    let mut den = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j && l[(i, j)] != T::zero() {
                num += block(k, b, i, j) * l[(i, j)];
                den += l[(i, j)] * l[(i, j)];
            }
        }
    }
    let ridge = T::lit(RIDGE);
    let regularized = den <= ridge;
    let den = if regularized { den + ridge } else { den };
    Ok((num / den, regularized))
}

/// L-step given `S` and `T`.
///
/// Entry-wise least squares `L_ij = ⟨T, R_ij⟩ / ‖T‖²` on `R = K − S`, then
/// projection onto the Laplacian cone. The product is invariant under
/// `(L, T) → (−L, −T)` while the cone is not, and diagonal entries of `L`
/// are absorbed by `S`; so both signs, with and without a zero-row-sum
/// diagonal, are projected and the candidate with the least residual (after
/// diagonal absorption) is kept. Returns `(L, T, regularized)`.
pub fn l_step<T: Real>(
    k: &DMatrix<T>,
    s: &DMatrix<T>,
    t: &DMatrix<T>,
) -> Result<(DMatrix<T>, DMatrix<T>, bool)> {
    let b = t.nrows();
    let n = check_dims(k, b)?;
    if s.shape() != k.shape() {
        return Err(Error::invalid("S shape does not match K"));
    }
    let r = k - s;
    let tt = t.norm_squared();
    let ridge = T::lit(RIDGE);
    let regularized = tt <= ridge;
    let den = if regularized { tt + ridge } else { tt };
    let ls = DMatrix::from_fn(n, n, |i, j| t.dot(&block(&r, b, i, j)) / den);

    let mut rowsum = (&ls + ls.transpose()) * T::lit(0.5);
    for i in 0..n {
        rowsum[(i, i)] = T::zero();
    }
    for i in 0..n {
        let off: T = rowsum.row(i).sum();
        rowsum[(i, i)] = -off;
    }

    let mut best: Option<(T, DMatrix<T>, DMatrix<T>)> = None;
    for cand in [&ls, &rowsum] {
        for sign in [T::one(), -T::one()] {
            let l = project_laplacian_cone(&(cand * sign))?;
            let t_signed = t * sign;
            let res = offdiag_norm(&(k - l.kronecker(&t_signed)), b);
            if best.as_ref().map_or(true, |(r0, _, _)| res < *r0) {
                best = Some((res, l, t_signed));
            }
        }
    }
    let (_, l, t) = best.expect("four candidates");
    Ok((l, t, regularized))
}

/// Largest singular value.
pub fn spectral_norm<T: Real>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(T::zero(), |a, b| a.max(b))
}

/// Whether `[[γI, R], [Rᵀ, γI]]` is positive semi-definite (min eigenvalue
/// at least `-tol`), i.e. whether γ certifies `‖R‖₂ ≤ γ`.
pub fn schur_certificate<T: Real>(r: &DMatrix<T>, gamma: T, tol: T) -> bool {
    let (p, q) = r.shape();
    let mut m = DMatrix::zeros(p + q, p + q);
    m.view_mut((0, 0), (p, p)).fill_with_identity();
    m.view_mut((p, p), (q, q)).fill_with_identity();
    m *= gamma;
    m.view_mut((0, p), (p, q)).copy_from(r);
    m.view_mut((p, 0), (q, p)).copy_from(&r.transpose());
    let eig = SymmetricEigen::new(m);
    eig.eigenvalues.iter().all(|&v| v >= -tol)
}

fn initial_factors<T: Real>(k: &DMatrix<T>, opts: &RecoveryOptions<T>, n: usize) -> KroneckerModel<T> {
    let b = opts.block;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let scale = 0.5 + rand::Rng::random::<f64>(&mut rng);
    let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };
    let t = DMatrix::from_fn(b, b, |i, j| {
        let g = 0.1 * normal();
        T::lit(scale * (if i == j { 1.0 } else { 0.0 } + g))
    });
    let raw = DMatrix::from_fn(n, n, |_, _| T::lit(normal()));
    let l = project_laplacian_cone(&raw).expect("square");
    KroneckerModel {
        s: block_diagonal(k, b),
        t,
        l,
    }
}

/// Alternating (L, S, T) sweeps from a seeded start until the best spectral
/// residual γ improves by less than `threshold` or `max_iters` is reached.
/// Returns the best iterate.
pub fn recover<T: Real>(k: &DMatrix<T>, opts: &RecoveryOptions<T>) -> Result<RecoveryResult<T>> {
    let b = opts.block;
    let n = check_dims(k, b)?;
    if opts.max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }
    let mut cur = initial_factors(k, opts, n);
    let mut best_gamma = spectral_norm(&(k - cur.assemble()));
    let mut best_model = cur.clone();
    let mut trace = Vec::new();
    let mut regularized = false;
    let mut converged = false;

    for it in 1..=opts.max_iters {
        let (l, t, reg_l) = l_step(k, &cur.s, &cur.t)?;
        let s = s_step(k, &t, &l)?;
        let (t, reg_t) = t_step(k, &l, b)?;
        // S re-absorbs the diagonal blocks under the new T
        let s = if t == cur.t { s } else { s_step(k, &t, &l)? };
        regularized |= reg_l || reg_t;
        cur = KroneckerModel { s, t, l };

        let resid = k - cur.assemble();
        let gamma = spectral_norm(&resid);
        let prev_best = best_gamma;
        if gamma < best_gamma {
            best_gamma = gamma;
            best_model = cur.clone();
        }
        trace.push(IterationRecord {
            iteration: it,
            frobenius: resid.norm(),
            gamma,
            best_gamma,
        });
        if prev_best - best_gamma < opts.threshold {
            converged = true;
            break;
        }
    }

    let resid = k - best_model.assemble();
    Ok(RecoveryResult {
        gamma: spectral_norm(&resid),
        frobenius_residual: resid.norm(),
        iterations: trace.len(),
        converged,
        regularized,
        trace,
        model: best_model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p3() -> DMatrix<f64> {
        Graph::path(3).unwrap().laplacian()
    }

    fn in_cone(l: &DMatrix<f64>, tol: f64) -> bool {
        let sym = (l - l.transpose()).norm() <= tol;
        let rows = l.row_iter().all(|r| r.sum().abs() <= tol);
        let psd = SymmetricEigen::new(l.clone()).eigenvalues.iter().all(|&v| v >= -tol);
        sym && rows && psd
    }

    #[test]
    fn laplacian_is_fixed_point() {
        let l = p3();
        assert!((project_laplacian_cone(&l).unwrap() - &l).norm() < 1e-10);
    }

    #[test]
    fn zero_projects_to_zero() {
        let z = DMatrix::<f64>::zeros(4, 4);
        assert_eq!(project_laplacian_cone(&z).unwrap().norm(), 0.0);
    }

    #[test]
    fn negative_identity_lands_in_cone() {
        let p = project_laplacian_cone(&(-DMatrix::<f64>::identity(3, 3))).unwrap();
        assert!(in_cone(&p, 1e-10));
    }

    #[test]
    fn s_step_closed_form() {
        let t0 = DMatrix::from_fn(4, 4, |i, j| ((i * 4 + j) as f64 * 0.7).sin());
        let l0 = Graph::new(3, [(0, 1), (1, 2)]).unwrap().laplacian::<f64>();
        let mut s0 = DMatrix::zeros(12, 12);
        for i in 0..3 {
            s0.view_mut((4 * i, 4 * i), (4, 4))
                .copy_from(&DMatrix::from_fn(4, 4, |r, c| ((r + 2 * c + i) as f64).cos()));
        }
        let k = &s0 + l0.kronecker(&t0);
        assert!((s_step(&k, &t0, &l0).unwrap() - s0).norm() < 1e-12);
    }

    #[test]
    fn zero_t_leaves_l_unidentified() {
        let k = DMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) as f64).sin());
        let s = block_diagonal(&k, 2);
        let t = DMatrix::zeros(2, 2);
        let (l, _, reg) = l_step(&k, &s, &t).unwrap();
        assert!(reg);
        assert!(l.norm() < 1e-12);
        let resid = &k - &s - l.kronecker(&t);
        assert!((resid.norm() - (&k - &s).norm()).abs() < 1e-12);
    }

    #[test]
    fn zero_k_recovers_trivially() {
        let k = DMatrix::<f64>::zeros(8, 8);
        let r = recover(&k, &RecoveryOptions::default()).unwrap();
        assert_eq!(r.trace[0].gamma, 0.0);
        assert_eq!(r.gamma, 0.0);
        assert!(r.model.s.norm() == 0.0);
    }

    #[test]
    fn bad_dimensions() {
        let k = DMatrix::<f64>::zeros(6, 6);
        assert!(recover(&k, &RecoveryOptions::default()).is_err());
        assert!(recover(&DMatrix::<f64>::zeros(4, 8), &RecoveryOptions { block: 4, ..Default::default() }).is_err());
    }

    #[test]
    fn schur_block_psd_iff_bound() {
        let r = DMatrix::from_fn(3, 3, |i, j| (i as f64 - j as f64) * 0.3 + 0.1);
        let sigma = spectral_norm(&r);
        assert!(schur_certificate(&r, sigma * 1.001, 1e-12));
        assert!(!schur_certificate(&r, sigma * 0.999, 1e-12));
    }
}
