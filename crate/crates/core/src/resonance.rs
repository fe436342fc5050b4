//! Eigenvalue resonances `(m, λ) = λ_s`, `|m| ≥ 2`, and the regime
//! diagnostics deciding which linearization theorem covers a system.
//!
//! Resonance is defined over infinitely many `m`; the search here is
//! exhaustive up to `max_order` and the report says so. In the Poincaré
//! domain (all real parts of one sign) resonances can only occur for
//! `|m| ≤ max|Re λ| / min|Re λ|`, and when `max_order` reaches that bound
//! the report is marked `complete`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::poly::MultiIndex;

/// Largest accepted `max_order`.
pub const MAX_ORDER_LIMIT: u32 = 20;
/// Default cap on the number of `(s, m)` candidates examined.
pub const DEFAULT_CANDIDATE_CAP: usize = 10_000_000;
/// Default truncation order of the search.
pub const DEFAULT_MAX_ORDER: u32 = 10;
/// Near-resonances are residuals in `(tol, NEAR_FACTOR · tol]`.
pub const NEAR_FACTOR: f64 = 1e3;

/// Default resonance tolerance `1e-9 · max(1, max|λ|)`.
pub fn default_tol(lambdas: &[Complex64]) -> f64 {
    1e-9 * lambdas.iter().map(|l| l.norm()).fold(1.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceEntry {
    /// 0-based mode index `s`.
    pub mode: usize,
    pub m: MultiIndex,
    pub order: u32,
    /// `|(m, λ) − λ_s|`.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    NonResonant,
    Resonant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceReport {
    pub entries: Vec<ResonanceEntry>,
    /// Residuals in `(tol, 1e3·tol]`: small divisors for the normal form.
    pub near: Vec<ResonanceEntry>,
    pub max_order_checked: u32,
    pub tol: f64,
    pub classification: Classification,
    /// The search provably covers every order (Poincaré-domain bound reached).
    pub complete: bool,
}

impl ResonanceReport {
    pub fn is_resonant(&self) -> bool {
        self.classification == Classification::Resonant
    }

    /// `(m, s)` pairs, in the same order as `entries`.
    pub fn monomials(&self) -> Vec<(MultiIndex, usize)> {
        self.entries.iter().map(|e| (e.m.clone(), e.mode)).collect()
    }
}

fn validate(lambdas: &[Complex64], max_order: u32, tol: f64, cap: usize) -> Result<usize> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("no eigenvalues given".into()));
    }
    if !(2..=MAX_ORDER_LIMIT).contains(&max_order) {
        return Err(Error::InvalidArgument(format!(
            "max_order must lie in [2, {MAX_ORDER_LIMIT}], got {max_order}"
        )));
    }
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "tol must be positive, got {tol}"
        )));
    }
    let n = lambdas.len();
    let needed = MultiIndex::count_between(n, 2, max_order).saturating_mul(n);
    if needed > cap {
        return Err(Error::BudgetExceeded { needed, cap });
    }
    Ok(needed)
}

/// Upper bound on the order of any resonance when all real parts share a
/// sign, `None` outside the Poincaré domain.
pub fn poincare_order_bound(lambdas: &[Complex64], tol: f64) -> Option<u32> {
    let pos = lambdas.iter().all(|l| l.re > tol);
    let neg = lambdas.iter().all(|l| l.re < -tol);
    if !(pos || neg) {
        return None;
    }
    let min = lambdas
        .iter()
        .map(|l| l.re.abs())
        .fold(f64::INFINITY, f64::min);
    let max = lambdas.iter().map(|l| l.re.abs()).fold(0.0, f64::max);
    Some(((max + tol) / min).floor().max(1.0) as u32)
}

/// All `(s, m)` with `2 ≤ |m| ≤ max_order` and `|(m, λ) − λ_s| ≤ tol`,
/// ordered by `(order, s, m)`.
pub fn detect_resonances(
    lambdas: &[Complex64],
    max_order: u32,
    tol: f64,
) -> Result<ResonanceReport> {
    detect_resonances_capped(lambdas, max_order, tol, DEFAULT_CANDIDATE_CAP)
}

pub fn detect_resonances_capped(
    lambdas: &[Complex64],
    max_order: u32,
    tol: f64,
    cap: usize,
) -> Result<ResonanceReport> {
    validate(lambdas, max_order, tol, cap)?;
    let n = lambdas.len();
    let mut entries = Vec::new();
    let mut near = Vec::new();
    for order in 2..=max_order {
        let ms = MultiIndex::of_order(n, order);
        for (s, &lam_s) in lambdas.iter().enumerate() {
            for m in &ms {
                let residual = (m.dot(lambdas) - lam_s).norm();
                let entry = || ResonanceEntry {
                    mode: s,
                    m: m.clone(),
                    order,
                    residual,
                };
                if residual <= tol {
                    entries.push(entry());
                } else if residual <= NEAR_FACTOR * tol {
                    near.push(entry());
                }
            }
        }
    }
    let complete = poincare_order_bound(lambdas, tol).is_some_and(|b| b <= max_order);
    Ok(ResonanceReport {
        classification: if entries.is_empty() {
            Classification::NonResonant
        } else {
            Classification::Resonant
        },
        entries,
        near,
        max_order_checked: max_order,
        tol,
        complete,
    })
}

/// Resonant monomials `z^m e_s`, in bijection with the detected resonances.
pub fn resonant_monomials(
    lambdas: &[Complex64],
    max_order: u32,
    tol: f64,
) -> Result<Vec<(MultiIndex, usize)>> {
    Ok(detect_resonances(lambdas, max_order, tol)?.monomials())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Theorem {
    Poincare,
    PoincareSiegel,
    PoincareDulac,
    HartmanGrobman,
    None,
}

/// Finite-order small-divisor certificate. `c` is the minimum of
/// `|λ_s − (m, λ)| · |m|^ν` over all checked `(s, m)`; it is evidence, not a
/// proof, of the Siegel condition.
#[derive(Debug, Clone, PartialEq)]
pub struct SiegelDiagnostic {
    pub nu: f64,
    pub c: f64,
    /// `(order, minimum over that order)`.
    pub per_order: Vec<(u32, f64)>,
    pub max_order: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport {
    pub hyperbolic: bool,
    pub poincare_domain: bool,
    pub resonance: ResonanceReport,
    pub siegel: SiegelDiagnostic,
    /// Theorem under which nonlinear mode-in-state factors equal the linear ones.
    pub applicable_theorem: Theorem,
    /// Normal-form statement available: `Poincare` (w = 0) or `PoincareDulac`.
    pub normal_form: Theorem,
}

impl RegimeReport {
    /// Whether the nonlinear/linear participation equivalence is established.
    pub fn equivalence_established(&self) -> bool {
        self.applicable_theorem != Theorem::None
    }
}

pub fn siegel_diagnostic(
    lambdas: &[Complex64],
    max_order: u32,
    nu: f64,
) -> Result<SiegelDiagnostic> {
    validate(lambdas, max_order, 1.0, DEFAULT_CANDIDATE_CAP)?;
    if !(nu > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "nu must be positive, got {nu}"
        )));
    }
    let n = lambdas.len();
    let per_order: Vec<(u32, f64)> = (2..=max_order)
        .map(|order| {
            let weight = (order as f64).powf(nu);
            let min = MultiIndex::of_order(n, order)
                .iter()
                .flat_map(|m| {
                    let ml = m.dot(lambdas);
                    lambdas.iter().map(move |l| (l - ml).norm())
                })
                .fold(f64::INFINITY, f64::min);
            (order, min * weight)
        })
        .collect();
    let c = per_order.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    Ok(SiegelDiagnostic {
        nu,
        c,
        per_order,
        max_order,
    })
}

/// Hyperbolicity, Poincaré-domain membership, resonances and the Siegel
/// certificate, combined into the applicable theorem:
///
/// * nonresonant in the Poincaré domain → `PoincareSiegel` (analytic);
/// * nonresonant otherwise → `Poincare` (formal);
/// * resonant but hyperbolic → `HartmanGrobman`;
/// * anything else → `None`.
pub fn regime(lambdas: &[Complex64], max_order: u32, tol: f64, nu: f64) -> Result<RegimeReport> {
    let resonance = detect_resonances(lambdas, max_order, tol)?;
    let siegel = siegel_diagnostic(lambdas, max_order, nu)?;
    let hyperbolic = lambdas.iter().all(|l| l.re.abs() > tol);
    let poincare_domain = poincare_order_bound(lambdas, tol).is_some();
    let applicable_theorem = match (resonance.is_resonant(), poincare_domain, hyperbolic) {
        (false, true, _) => Theorem::PoincareSiegel,
        (false, false, _) => Theorem::Poincare,
        (true, _, true) => Theorem::HartmanGrobman,
        (true, _, false) => Theorem::None,
    };
    let normal_form = if resonance.is_resonant() {
        Theorem::PoincareDulac
    } else {
        Theorem::Poincare
    };
    Ok(RegimeReport {
        hyperbolic,
        poincare_domain,
        resonance,
        siegel,
        applicable_theorem,
        normal_form,
    })
}
