//! Spectral data of a state matrix: eigenvalues together with right
//! eigenvectors (columns of `V`) and left eigenvectors (rows of `V⁻¹`).
//!
//! Conventions, fixed so that equal inputs give bit-identical output:
//!
//! * eigenvalues are sorted by descending real part, then descending
//!   imaginary part, so conjugate pairs sit next to each other with the
//!   positive-imaginary member first;
//! * each right eigenvector has unit Euclidean norm and its first
//!   largest-magnitude entry is real and positive;
//! * the left eigenvectors are the rows of `V⁻¹`, hence `ℓ^i r^j = δ_ij`.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative gap factor used when no explicit distinctness tolerance is given.
pub const DEFAULT_DISTINCT_FACTOR: f64 = 1e-8;

/// Largest accepted `‖V⁻¹V − I‖∞` before the decomposition is rejected.
const BIORTHOGONALITY_LIMIT: f64 = 1e-8;

/// A real square matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix(DMatrix<f64>);

impl StateMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidMatrix(format!(
                "shape {}x{} is not square",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidMatrix("empty matrix".into()));
        }
        if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix(format!(
                "entry ({}, {}) is not finite",
                pos % m.nrows(),
                pos / m.nrows()
            )));
        }
        Ok(StateMatrix(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::InvalidMatrix(format!(
                "row of length {} in a matrix with {} rows",
                bad.len(),
                n
            )));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        self.0
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Eigenvalues with biorthogonally normalized right/left eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    matrix: StateMatrix,
    eigenvalues: Vec<Complex64>,
    right: DMatrix<Complex64>,
    left: DMatrix<Complex64>,
    distinct_tol: f64,
}

impl EigenSystem {
    /// Decompose with the default tolerance `1e-8 · ‖A‖∞`.
    pub fn new(a: &StateMatrix) -> Result<Self> {
        eigendecompose(a, None)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn matrix(&self) -> &StateMatrix {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    pub fn distinct_tol(&self) -> f64 {
        self.distinct_tol
    }

    /// `V`, whose column `i` is `r^i`.
    pub fn right_matrix(&self) -> &DMatrix<Complex64> {
        &self.right
    }

    /// `V⁻¹`, whose row `i` is `ℓ^i`.
    pub fn left_matrix(&self) -> &DMatrix<Complex64> {
        &self.left
    }

    /// Entry `k` of right eigenvector `i`.
    #[inline]
    pub fn r(&self, k: usize, i: usize) -> Complex64 {
        self.right[(k, i)]
    }

    /// Entry `k` of left eigenvector `i`.
    #[inline]
    pub fn l(&self, i: usize, k: usize) -> Complex64 {
        self.left[(i, k)]
    }

    pub fn right_vector(&self, i: usize) -> Vec<Complex64> {
        self.right.column(i).iter().copied().collect()
    }

    pub fn left_vector(&self, i: usize) -> Vec<Complex64> {
        self.left.row(i).iter().copied().collect()
    }

    /// Index of the complex-conjugate partner of mode `i`, if any.
    pub fn conjugate_partner(&self, i: usize) -> Option<usize> {
        let lam = self.eigenvalues[i];
        if lam.im == 0.0 {
            return None;
        }
        let target = lam.conj();
        [i.wrapping_sub(1), i + 1]
            .into_iter()
            .filter(|&j| j < self.dim())
            .find(|&j| self.eigenvalues[j] == target)
    }

    /// Modes grouped into singletons (real) and adjacent conjugate pairs.
    pub fn mode_groups(&self) -> Vec<Vec<usize>> {
        let mut groups = Vec::new();
        let mut i = 0;
        while i < self.dim() {
            match self.conjugate_partner(i) {
                Some(j) if j == i + 1 => {
                    groups.push(vec![i, j]);
                    i += 2;
                }
                _ => {
                    groups.push(vec![i]);
                    i += 1;
                }
            }
        }
        groups
    }

    /// `‖L·V − I‖∞`.
    pub fn biorthogonality_error(&self) -> f64 {
        identity_deviation(&(&self.left * &self.right))
    }

    /// `‖Σ_i r^i ℓ^i − I‖∞`.
    pub fn reconstruction_error(&self) -> f64 {
        identity_deviation(&(&self.right * &self.left))
    }

    /// Modal coordinates `z = V⁻¹x`, i.e. `z_i = ℓ^i x`.
    pub fn modal_coordinates(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        self.check_dim(x.len())?;
        let n = self.dim();
        Ok((0..n)
            .map(|i| {
                (0..n).fold(Complex64::new(0.0, 0.0), |acc, k| {
                    acc + self.left[(i, k)] * x[k]
                })
            })
            .collect())
    }

    /// Inverse of [`modal_coordinates`](Self::modal_coordinates): `x = Σ_i z_i r^i`.
    pub fn from_modal(&self, z: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_dim(z.len())?;
        let n = self.dim();
        Ok((0..n)
            .map(|k| {
                (0..n).fold(Complex64::new(0.0, 0.0), |acc, i| {
                    acc + self.right[(k, i)] * z[i]
                })
            })
            .collect())
    }

    pub(crate) fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }
}

/// Decompose `a`, rejecting eigenvalue pairs closer than `distinct_tol`
/// (default `1e-8 · ‖A‖∞`).
pub fn eigendecompose(a: &StateMatrix, distinct_tol: Option<f64>) -> Result<EigenSystem> {
    let n = a.dim();
    let tol = distinct_tol.unwrap_or(DEFAULT_DISTINCT_FACTOR * a.norm_inf());
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "distinct_tol must be nonnegative, got {tol}"
        )));
    }

    let schur = Schur::try_new(a.as_matrix().clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::NumericalFailure("real Schur iteration did not converge".into()))?;
    let mut eigenvalues: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    if eigenvalues
        .iter()
        .any(|l| !l.re.is_finite() || !l.im.is_finite())
    {
        return Err(Error::NumericalFailure("non-finite eigenvalue".into()));
    }
    eigenvalues.sort_by(descending);
    pair_conjugates(&mut eigenvalues);

    for i in 0..n {
        for j in i + 1..n {
            let gap = (eigenvalues[i] - eigenvalues[j]).norm();
            if gap <= tol {
                return Err(Error::RepeatedEigenvalues { i, j, gap, tol });
            }
        }
    }

    let mut right = DMatrix::<Complex64>::zeros(n, n);
    let mut i = 0;
    while i < n {
        let lam = eigenvalues[i];
        if lam.im == 0.0 {
            let v = real_null_vector(a.as_matrix(), lam.re);
            right.set_column(i, &v.map(|x| Complex64::new(x, 0.0)));
            i += 1;
        } else {
            let v = complex_null_vector(a.as_matrix(), lam);
            right.set_column(i, &v);
            if i + 1 < n && eigenvalues[i + 1] == lam.conj() {
                right.set_column(i + 1, &v.map(|c| c.conj()));
                i += 2;
            } else {
                i += 1;
            }
        }
    }

    let left = right
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NumericalFailure("eigenvector matrix is singular".into()))?;

    let es = EigenSystem {
        matrix: a.clone(),
        eigenvalues,
        right,
        left,
        distinct_tol: tol,
    };
    let err = es.biorthogonality_error();
    if !(err <= BIORTHOGONALITY_LIMIT) {
        return Err(Error::NumericalFailure(format!(
            "eigenvector matrix ill-conditioned: ‖V⁻¹V − I‖ = {err:.3e}"
        )));
    }
    Ok(es)
}

/// Free-function form of [`EigenSystem::modal_coordinates`].
pub fn modal_coordinates(es: &EigenSystem, x: &[f64]) -> Result<Vec<Complex64>> {
    es.modal_coordinates(x)
}

fn descending(a: &Complex64, b: &Complex64) -> Ordering {
    b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im))
}

// Make each complex pair exactly conjugate so the eigenvectors can be
// shared between the two members.
fn pair_conjugates(eigs: &mut [Complex64]) {
    let n = eigs.len();
    let mut used = vec![false; n];
    for i in 0..n {
        if used[i] || eigs[i].im <= 0.0 {
            continue;
        }
        let target = eigs[i].conj();
        let partner = (0..n)
            .filter(|&j| !used[j] && j != i && eigs[j].im < 0.0)
            .min_by(|&p, &q| {
                (eigs[p] - target)
                    .norm()
                    .total_cmp(&(eigs[q] - target).norm())
            });
        if let Some(j) = partner {
            let mean = Complex64::new(
                0.5 * (eigs[i].re + eigs[j].re),
                0.5 * (eigs[i].im - eigs[j].im),
            );
            eigs[i] = mean;
            eigs[j] = mean.conj();
            used[i] = true;
            used[j] = true;
        }
    }
    eigs.sort_by(descending);
}

fn real_null_vector(a: &DMatrix<f64>, lam: f64) -> DVector<f64> {
    let n = a.nrows();
    let m = a - DMatrix::<f64>::identity(n, n) * lam;
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let idx = argmin(svd.singular_values.iter().copied());
    let mut v = DVector::from_fn(n, |k, _| v_t[(idx, k)]);
    let norm = v.norm();
    v /= norm;
    let p = pivot(v.iter().map(|x| x.abs()));
    if v[p] < 0.0 {
        v = -v;
    }
    v
}

fn complex_null_vector(a: &DMatrix<f64>, lam: Complex64) -> DVector<Complex64> {
    let n = a.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j {
            lam
        } else {
            Complex64::new(0.0, 0.0)
        };
        Complex64::new(a[(i, j)], 0.0) - d
    });
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested V^H");
    let idx = argmin(svd.singular_values.iter().copied());
    let mut v = DVector::from_fn(n, |k, _| v_t[(idx, k)].conj());
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let p = pivot(v.iter().map(|c| c.norm()));
    let phase = v[p].conj() / (v[p].norm() * norm);
    v.iter_mut().for_each(|c| *c *= phase);
    v[p] = Complex64::new(v[p].re, 0.0);
    v
}

fn argmin(it: impl Iterator<Item = f64>) -> usize {
    it.enumerate()
        .fold(
            (0, f64::INFINITY),
            |(bi, bv), (i, v)| {
                if v < bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            },
        )
        .0
}

// First index whose magnitude is within a relative 1e-9 of the maximum, so
// near-ties resolve the same way for a vector and its conjugate.
fn pivot(mags: impl Iterator<Item = f64> + Clone) -> usize {
    let max = mags.clone().fold(0.0, f64::max);
    mags.enumerate()
        .find(|&(_, m)| m >= max * (1.0 - 1e-9))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

fn identity_deviation(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let id = if i == j { 1.0 } else { 0.0 };
                    (m[(i, j)] - id).norm()
                })
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}
