//! Poincaré / Poincaré–Dulac normal forms of polynomial vector fields.
//!
//! Working in modal coordinates `z = V⁻¹x`, where the linear part is
//! `Λ = diag(λ)`, each degree `k = 2..N` is normalized in turn. A monomial
//! `f_{s,m} z^m e_s` of the current field is removed by the near-identity map
//! `z̃ = z + h(z)` with
//!
//! ```text
//! h_{s,m} = f_{s,m} / (λ_s − (m, λ))
//! ```
//!
//! and kept in the resonant remainder `w` when the divisor is (nearly) zero.
//! After each stage the field is pushed forward exactly,
//! `G(z̃) = Dφ(ψ(z̃)) · F(ψ(z̃))` with `ψ` the series inverse, truncated at `N`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eigensystem::EigenSystem;
use crate::error::{Error, Result};
use crate::participation::{classic_pf, NonlinearBasis, ParticipationMatrix};
use crate::poly::{compose, MultiIndex, Polynomial, PolynomialMap, PolynomialVectorField};
use crate::resonance::{self, Theorem};

/// Largest supported truncation order.
pub const MAX_TRUNCATION: u32 = 8;
pub const DEFAULT_TRUNCATION: u32 = 4;
pub const DEFAULT_TERM_BUDGET: usize = 1_000_000;
/// Coefficientwise tolerance of the pushed-forward verification, relative to
/// the coefficient scale of the input.
pub const VERIFY_TOL: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
/// Coefficients below this multiple of the working scale are rounding noise.
const PRUNE_REL: f64 = 64.0 * f64::EPSILON;

#[derive(Debug, Clone, PartialEq)]
pub struct NormalFormOptions {
    pub truncation_order: u32,
    /// Divisors `|λ_s − (m,λ)|` at or below this are not divided by.
    /// Defaults to `1e-8 · max|λ|`.
    pub divisor_tol: Option<f64>,
    /// Exact-resonance tolerance; defaults to the resonance detector's.
    pub resonance_tol: Option<f64>,
    /// Fail with `SmallDivisor` on divisors that are small but above the
    /// resonance tolerance, instead of moving the term into `w`.
    pub refuse_small_divisors: bool,
    pub term_budget: usize,
}

impl Default for NormalFormOptions {
    fn default() -> Self {
        NormalFormOptions {
            truncation_order: DEFAULT_TRUNCATION,
            divisor_tol: None,
            resonance_tol: None,
            refuse_small_divisors: false,
            term_budget: DEFAULT_TERM_BUDGET,
        }
    }
}

/// A monomial kept in `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct RetainedTerm {
    pub component: usize,
    pub m: MultiIndex,
    pub divisor: f64,
    /// True when the divisor is within the resonance tolerance, false for a
    /// small-divisor term kept for numerical safety.
    pub resonant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalFormTransform {
    /// `z ↦ z̃` in modal coordinates.
    pub phi: PolynomialMap,
    /// Retained nonlinear terms; the normalized field is `Λz̃ + w(z̃)`.
    pub w: PolynomialVectorField,
    pub lambdas: Vec<Complex64>,
    pub truncation_order: u32,
    /// Smallest divisor used for a removed term (infinite if none).
    pub small_divisor_floor: f64,
    pub divisor_tol: f64,
    pub retained: Vec<RetainedTerm>,
    /// Largest coefficient mismatch between `f` pushed through `phi` in one
    /// step and `Λz̃ + w`, relative to the input scale.
    pub residual: f64,
}

impl NormalFormTransform {
    /// Whether `w = 0`, i.e. the field is linearizable to order `N`.
    pub fn is_linearizing(&self) -> bool {
        self.w.term_count() == 0
    }

    /// `x ↦ V φ(V⁻¹x)`, the same change of variables in state coordinates.
    pub fn phi_in_state(&self, es: &EigenSystem) -> Result<PolynomialMap> {
        es.check_dim(self.phi.dim())?;
        let comps = linear_conjugate(
            self.phi.components(),
            es.right_matrix(),
            es.left_matrix(),
            self.truncation_order,
        );
        PolynomialMap::new(snap_identity(comps), self.truncation_order)
    }

    /// `x ↦ V w(V⁻¹x)`.
    pub fn w_in_state(&self, es: &EigenSystem) -> Result<Vec<Polynomial>> {
        es.check_dim(self.w.dim())?;
        Ok(linear_conjugate(
            self.w.components(),
            es.right_matrix(),
            es.left_matrix(),
            self.truncation_order,
        ))
    }
}

/// Linear polynomials `y_s = Σ_j M[s][j] x_j`.
fn linear_polys(m: &DMatrix<Complex64>) -> Vec<Polynomial> {
    (0..m.nrows())
        .map(|s| Polynomial::linear(&m.row(s).iter().copied().collect::<Vec<_>>()))
        .collect()
}

/// `outer · P(inner · x)`, truncated at `degree`.
fn linear_conjugate(
    p: &[Polynomial],
    outer: &DMatrix<Complex64>,
    inner: &DMatrix<Complex64>,
    degree: u32,
) -> Vec<Polynomial> {
    let substituted = compose(p, &linear_polys(inner), degree);
    let n = outer.nrows();
    (0..n)
        .map(|s| {
            let mut acc = Polynomial::zero(n);
            for (j, q) in substituted.iter().enumerate() {
                let c = outer[(s, j)];
                if c != ZERO {
                    acc.add_assign(&q.scale(c));
                }
            }
            acc
        })
        .collect()
}

/// Replace the linear part by the exact identity and drop rounding noise.
fn snap_identity(mut comps: Vec<Polynomial>) -> Vec<Polynomial> {
    let n = comps.len();
    let scale = comps.iter().map(|p| p.max_abs()).fold(1.0, f64::max);
    for (s, p) in comps.iter_mut().enumerate() {
        p.prune(PRUNE_REL * scale);
        p.remove(&MultiIndex::zero(n));
        for j in 0..n {
            p.set_coeff(MultiIndex::unit(n, j), if j == s { ONE } else { ZERO });
        }
    }
    comps
}

/// Express `ẋ = f(x)` in modal coordinates `z = V⁻¹x`: substitute `x = Vz`
/// and left-multiply by `V⁻¹`. The linear part is set to `diag(λ)` exactly.
pub fn to_modal(f: &PolynomialVectorField, es: &EigenSystem) -> Result<PolynomialVectorField> {
    es.check_dim(f.dim())?;
    let n = f.dim();
    let a = es.matrix().as_matrix();
    let lin = f.linear_part();
    let scale = a.amax().max(1.0);
    let mismatch = (0..n)
        .flat_map(|s| (0..n).map(move |j| (s, j)))
        .map(|(s, j)| (lin[(s, j)] - Complex64::new(a[(s, j)], 0.0)).norm())
        .fold(0.0, f64::max);
    if mismatch > 1e-12 * scale {
        return Err(Error::LinearPartMismatch(mismatch));
    }

    let v = es.right_matrix();
    let l = es.left_matrix();
    let mut comps = linear_conjugate(&f.nonlinear_part(), l, v, f.degree());
    let coeff_scale = comps.iter().map(|p| p.max_abs()).fold(0.0, f64::max);
    for (s, p) in comps.iter_mut().enumerate() {
        p.prune(PRUNE_REL * coeff_scale);
        p.add_term(MultiIndex::unit(n, s), es.eigenvalues()[s]);
    }
    let modal = PolynomialVectorField::new(comps, f.degree())?;
    check_modal_equivalence(f, &modal, es)?;
    Ok(modal)
}

/// `V⁻¹ f(Vz) = g(z)` at 20 fixed points with `‖x‖ ≤ 0.1`.
fn check_modal_equivalence(
    f: &PolynomialVectorField,
    g: &PolynomialVectorField,
    es: &EigenSystem,
) -> Result<()> {
    let n = f.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d6f64616c);
    let scale = f.max_abs().max(1.0);
    for _ in 0..20 {
        let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = x
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
            .max(f64::MIN_POSITIVE);
        let r = 0.1 * rng.random::<f64>();
        x.iter_mut().for_each(|v| *v *= r / norm);
        let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let fx = f.eval(&xc);
        let z = es.modal_coordinates(&x)?;
        let gz = g.eval(&z);
        let back = es.from_modal(&gz)?;
        let err = fx
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        if err > 1e-10 * scale {
            return Err(Error::NumericalFailure(format!(
                "modal transform disagrees with the original field by {err:e}"
            )));
        }
    }
    Ok(())
}

/// `G(z̃) = (I + Dh)(ψ(z̃)) · F(ψ(z̃))`, truncated at `degree`.
fn push_forward(
    field: &[Polynomial],
    h: &[Polynomial],
    psi: &PolynomialMap,
    degree: u32,
) -> Vec<Polynomial> {
    let n = field.len();
    let f_psi = compose(field, psi.components(), degree);
    let jac: Vec<Polynomial> = h
        .iter()
        .flat_map(|hs| (0..n).map(move |j| hs.derivative(j)))
        .collect();
    let jac_psi = compose(&jac, psi.components(), degree);
    (0..n)
        .map(|s| {
            let mut out = f_psi[s].clone();
            for j in 0..n {
                let d = &jac_psi[s * n + j];
                if !d.is_zero() {
                    out.add_assign(&d.mul_trunc(&f_psi[j], degree));
                }
            }
            out
        })
        .collect()
}

/// Normal form with default options at truncation order `n_order`.
pub fn compute_normal_form(
    f_modal: &PolynomialVectorField,
    n_order: u32,
    divisor_tol: Option<f64>,
) -> Result<NormalFormTransform> {
    compute_normal_form_with(
        f_modal,
        &NormalFormOptions {
            truncation_order: n_order,
            divisor_tol,
            ..NormalFormOptions::default()
        },
    )
}

/// Terms of `f_modal` above the truncation order are dropped.
pub fn compute_normal_form_with(
    f_modal: &PolynomialVectorField,
    opts: &NormalFormOptions,
) -> Result<NormalFormTransform> {
    let n = f_modal.dim();
    let order = opts.truncation_order;
    if !(2..=MAX_TRUNCATION).contains(&order) {
        return Err(Error::InvalidArgument(format!(
            "truncation order must lie in [2, {MAX_TRUNCATION}], got {order}"
        )));
    }
    let needed = MultiIndex::count_between(n, 1, order).saturating_mul(n);
    if needed > opts.term_budget {
        return Err(Error::BudgetExceeded {
            needed,
            cap: opts.term_budget,
        });
    }
    let lin = f_modal.linear_part();
    let lambdas: Vec<Complex64> = (0..n).map(|s| lin[(s, s)]).collect();
    let off_diag = (0..n)
        .flat_map(|s| (0..n).map(move |j| (s, j)))
        .filter(|(s, j)| s != j)
        .map(|(s, j)| lin[(s, j)].norm())
        .fold(0.0, f64::max);
    if off_diag != 0.0 {
        return Err(Error::InvalidArgument(
            "normal forms need a field in modal coordinates (diagonal linear part)".into(),
        ));
    }
    let lam_max = lambdas.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let resonance_tol = opts
        .resonance_tol
        .unwrap_or_else(|| resonance::default_tol(&lambdas));
    let divisor_tol = opts
        .divisor_tol
        .unwrap_or(1e-8 * lam_max)
        .max(resonance_tol);
    if !(divisor_tol > 0.0) || !divisor_tol.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "divisor tolerance must be positive, got {divisor_tol}"
        )));
    }

    // Terms above the truncation order are outside the normal form.
    let truncated = PolynomialVectorField::new(
        f_modal
            .components()
            .iter()
            .map(|p| p.degree_range(1, order))
            .collect(),
        order,
    )?;
    let mut field: Vec<Polynomial> = truncated.components().to_vec();
    let mut total = PolynomialMap::identity(n, order);
    let mut floor = f64::INFINITY;
    let mut retained = Vec::new();

    for k in 2..=order {
        let mut h = vec![Polynomial::zero(n); n];
        for (s, comp) in field.iter().enumerate() {
            for (m, &c) in comp.terms().filter(|(m, _)| m.order() == k) {
                let divisor = lambdas[s] - m.dot(&lambdas);
                let d = divisor.norm();
                if d <= resonance_tol {
                    retained.push(RetainedTerm {
                        component: s,
                        m: m.clone(),
                        divisor: d,
                        resonant: true,
                    });
                } else if d <= divisor_tol {
                    if opts.refuse_small_divisors {
                        return Err(Error::SmallDivisor {
                            component: s,
                            divisor: d,
                            tol: divisor_tol,
                        });
                    }
                    retained.push(RetainedTerm {
                        component: s,
                        m: m.clone(),
                        divisor: d,
                        resonant: false,
                    });
                } else {
                    floor = floor.min(d);
                    h[s].add_term(m.clone(), c / divisor);
                }
            }
        }
        if h.iter().all(|p| p.is_zero()) {
            continue;
        }
        let mut stage_comps: Vec<Polynomial> = (0..n).map(|s| Polynomial::variable(n, s)).collect();
        for (s, p) in stage_comps.iter_mut().enumerate() {
            p.add_assign(&h[s]);
        }
        let stage = PolynomialMap::new(stage_comps, order)?;
        let psi = stage.series_inverse();
        field = push_forward(&field, &h, &psi, order);
        // Removed coefficients cancel analytically; drop the rounding residue.
        for (s, hs) in h.iter().enumerate() {
            for (m, _) in hs.terms() {
                field[s].remove(m);
            }
        }
        let scale = field.iter().map(|p| p.max_abs()).fold(0.0, f64::max);
        field.iter_mut().for_each(|p| p.prune(PRUNE_REL * scale));
        total = stage.compose(&total);
    }
    let phi = PolynomialMap::new(snap_identity(total.components().to_vec()), order)?;

    let w_comps: Vec<Polynomial> = field.iter().map(|p| p.degree_range(2, order)).collect();
    let w = PolynomialVectorField::new(w_comps, order)?;
    let residual = verify(&truncated, &phi, &lambdas, &w);
    if residual > VERIFY_TOL {
        return Err(Error::NumericalFailure(format!(
            "normalized field differs from Λz + w by {residual:e} (relative)"
        )));
    }
    Ok(NormalFormTransform {
        phi,
        w,
        lambdas,
        truncation_order: order,
        small_divisor_floor: floor,
        divisor_tol,
        retained,
        residual,
    })
}

/// Push the original field through the total map in one step and compare
/// with `Λz̃ + w(z̃)` coefficientwise.
fn verify(
    f: &PolynomialVectorField,
    phi: &PolynomialMap,
    lambdas: &[Complex64],
    w: &PolynomialVectorField,
) -> f64 {
    let n = f.dim();
    let order = phi.degree();
    let psi = phi.series_inverse();
    let pushed = push_forward(f.components(), &phi.higher_order(), &psi, order);
    let scale = f.max_abs().max(1.0);
    pushed
        .iter()
        .enumerate()
        .map(|(s, p)| {
            let mut target = w.component(s).clone();
            target.add_term(MultiIndex::unit(n, s), lambdas[s]);
            p.sub(&target).max_abs()
        })
        .fold(0.0, f64::max)
        / scale
}

/// `φ(z)`.
pub fn evaluate_map(phi: &PolynomialMap, z: &[Complex64]) -> Result<Vec<Complex64>> {
    phi.evaluate(z)
}

/// `φ⁻¹(z̃)` by fixed-point iteration; `NoConvergence` signals a point
/// outside the local validity region.
pub fn invert_map(
    phi: &PolynomialMap,
    ztilde: &[Complex64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<Complex64>> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tol must be positive, got {tol}"
        )));
    }
    phi.invert(ztilde, tol, max_iter)
}

/// Mode-in-state participation of the nonlinear system. Under nonresonance
/// (to the truncation order) or hyperbolicity the factors are those of the
/// linearization, so the classic matrix is returned tagged with the basis of
/// that equivalence.
pub fn mode_in_state_nonlinear(
    f: &PolynomialVectorField,
    es: &EigenSystem,
    nf: &NormalFormTransform,
) -> Result<ParticipationMatrix> {
    es.check_dim(f.dim())?;
    es.check_dim(nf.phi.dim())?;
    let a = es.matrix().as_matrix();
    let lin = f.linear_part();
    let mismatch = (0..f.dim())
        .flat_map(|s| (0..f.dim()).map(move |j| (s, j)))
        .map(|(s, j)| (lin[(s, j)] - Complex64::new(a[(s, j)], 0.0)).norm())
        .fold(0.0, f64::max);
    if mismatch > 1e-12 * a.amax().max(1.0) {
        return Err(Error::LinearPartMismatch(mismatch));
    }
    let lambda_gap = nf
        .lambdas
        .iter()
        .zip(es.eigenvalues())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    if lambda_gap > es.distinct_tol() {
        return Err(Error::InvalidArgument(
            "normal form was computed for a different spectrum".into(),
        ));
    }
    let lambdas = es.eigenvalues();
    let report = resonance::regime(
        lambdas,
        nf.truncation_order,
        resonance::default_tol(lambdas),
        1.0,
    )?;
    let basis = match report.applicable_theorem {
        Theorem::Poincare | Theorem::PoincareSiegel => NonlinearBasis::NonResonant {
            max_order: nf.truncation_order,
        },
        Theorem::HartmanGrobman => NonlinearBasis::Hyperbolic,
        Theorem::PoincareDulac | Theorem::None => return Err(Error::RegimeNotEstablished),
    };
    Ok(classic_pf(es).with_basis(basis))
}
