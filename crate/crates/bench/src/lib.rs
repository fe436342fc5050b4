//! Shared fixtures for the criterion benches.

use modalpf::{eigendecompose, EigenSystem, PolynomialVectorField, StateMatrix};
use nalgebra::DMatrix;

/// Tridiagonal `n × n` matrix with spectrum `−1, −2, …, −n` shifted off the
/// diagonal by a weak coupling, so eigenvalues stay real and distinct.
pub fn chain(n: usize) -> EigenSystem {
    let a = DMatrix::from_fn(n, n, |i, j| match i as isize - j as isize {
        0 => -(i as f64 + 1.0),
        1 => 0.1,
        -1 => 0.05,
        _ => 0.0,
    });
    eigendecompose(&StateMatrix::new(a).unwrap(), None).unwrap()
}

/// Lightly damped oscillators, complex conjugate pairs.
pub fn oscillators(pairs: usize) -> EigenSystem {
    let n = 2 * pairs;
    let mut a = DMatrix::zeros(n, n);
    for p in 0..pairs {
        let (i, w) = (2 * p, 1.0 + p as f64);
        a[(i, i + 1)] = w;
        a[(i + 1, i)] = -w;
        a[(i, i)] = -0.05 * (p as f64 + 1.0);
        a[(i + 1, i + 1)] = -0.05 * (p as f64 + 1.0);
        if i + 2 < n {
            a[(i + 1, i + 2)] = 0.02;
        }
    }
    eigendecompose(&StateMatrix::new(a).unwrap(), None).unwrap()
}

/// Nonresonant triangular quadratic field with eigenvalues 1 and 3.
pub fn triangular() -> (PolynomialVectorField, EigenSystem) {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 3.0]);
    let f = PolynomialVectorField::from_real(
        &a,
        &[
            (0, vec![2, 0], 0.25),
            (0, vec![1, 1], -0.2),
            (1, vec![0, 2], 0.15),
            (1, vec![1, 1], 0.1),
        ],
    )
    .unwrap();
    (
        f,
        eigendecompose(&StateMatrix::new(a).unwrap(), None).unwrap(),
    )
}

/// Stable `n`-dimensional field with a quadratic coupling on every component.
pub fn stable_field(n: usize) -> (PolynomialVectorField, EigenSystem) {
    let es = chain(n);
    let a = es.matrix().as_matrix().clone();
    let terms: Vec<(usize, Vec<u32>, f64)> = (0..n)
        .map(|k| {
            let mut e = vec![0; n];
            e[(k + 1) % n] += 1;
            e[(k + 2) % n] += 1;
            (k, e, 0.3)
        })
        .collect();
    (PolynomialVectorField::from_real(&a, &terms).unwrap(), es)
}
