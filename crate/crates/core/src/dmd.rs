//! Snapshot buffering and dynamic mode decomposition.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default relative singular-value cutoff for the pseudoinverse.
pub const DEFAULT_SVD_TOL: f64 = 1e-10;

/// Rolling window of the most recent `width + 1` observed stacked states.
#[derive(Clone, Debug)]
pub struct SnapshotBuffer<T: Real> {
    width: usize,
    dim: usize,
    columns: VecDeque<DVector<T>>,
}

impl<T: Real> SnapshotBuffer<T> {
    pub fn new(width: usize, dim: usize) -> Result<Self> {
        if width == 0 || dim == 0 {
            return Err(Error::invalid("snapshot width and dimension must be positive"));
        }
        Ok(SnapshotBuffer {
            width,
            dim,
            columns: VecDeque::with_capacity(width + 1),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.columns.len() == self.width + 1
    }

    /// At least one `(x_k, x_{k+1})` pair is available.
    pub fn can_fit(&self) -> bool {
        self.columns.len() >= 2
    }

    /// Appends a sample, evicting the oldest once `width + 1` are held.
    pub fn push(&mut self, x: &DVector<T>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!(
                "snapshot has length {}, buffer holds {}",
                x.len(),
                self.dim
            )));
        }
        if self.columns.len() == self.width + 1 {
            self.columns.pop_front();
        }
        self.columns.push_back(x.clone());
        Ok(())
    }

    pub fn columns(&self) -> impl Iterator<Item = &DVector<T>> {
        self.columns.iter()
    }

    /// `(X, X⁺)`: all but the newest column, and all but the oldest.
    pub fn snapshot_matrices(&self) -> Result<(DMatrix<T>, DMatrix<T>)> {
        if !self.can_fit() {
            return Err(Error::InsufficientData(format!(
                "{} snapshot column(s); at least 2 required",
                self.columns.len()
            )));
        }
        let cols: Vec<&DVector<T>> = self.columns.iter().collect();
        let m = cols.len() - 1;
        let x = DMatrix::from_fn(self.dim, m, |r, c| cols[c][r]);
        let xp = DMatrix::from_fn(self.dim, m, |r, c| cols[c + 1][r]);
        Ok((x, xp))
    }
}

/// Identified one-step operator `x_{k+1} ≈ K x_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct DmdModel<T: Real> {
    pub k: DMatrix<T>,
    /// `‖X⁺ − K X‖_F / ‖X⁺‖_F` (zero when `X⁺` is zero).
    pub residual: T,
    pub rank_used: usize,
}

impl<T: Real> DmdModel<T> {
    pub fn dim(&self) -> usize {
        self.k.nrows()
    }

    pub fn predict(&self, x: &DVector<T>) -> Result<DVector<T>> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "state has length {}, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(&self.k * x)
    }
}

/// Fits `K = X⁺ X†` from the buffer contents.
pub fn fit<T: Real>(buf: &SnapshotBuffer<T>, svd_tol: T) -> Result<DmdModel<T>> {
    let (x, xp) = buf.snapshot_matrices()?;
    fit_snapshots(&x, &xp, svd_tol)
}

/// Fits `K = X⁺ X†` with singular values below `svd_tol · σ_max` truncated.
pub fn fit_snapshots<T: Real>(x: &DMatrix<T>, xp: &DMatrix<T>, svd_tol: T) -> Result<DmdModel<T>> {
    if x.shape() != xp.shape() {
        return Err(Error::invalid("X and X⁺ must have the same shape"));
    }
    if x.ncols() == 0 {
        return Err(Error::InsufficientData("no snapshot pairs".into()));
    }
    let (pinv, rank) = pseudo_inverse(x, svd_tol);
    let k = xp * pinv;
    let denom = xp.norm();
    let residual = if denom > T::zero() {
        (xp - &k * x).norm() / denom
    } else {
        T::zero()
    };
    Ok(DmdModel {
        k,
        residual,
        rank_used: rank,
    })
}

/// Truncated SVD pseudoinverse with a relative cutoff; returns the rank kept.
pub fn pseudo_inverse<T: Real>(m: &DMatrix<T>, rel_tol: T) -> (DMatrix<T>, usize) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let sigma = &svd.singular_values;
    let smax = sigma.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    if smax <= T::zero() {
        return (out, 0);
    }
    let cut = rel_tol * smax;
    let mut rank = 0;
    for (i, &s) in sigma.iter().enumerate() {
        if s > cut {
            rank += 1;
            out += v_t.row(i).transpose() * u.column(i).transpose() / s;
        }
    }
    (out, rank)
}
