//! Mode-in-state and state-in-mode participation factors.
//!
//! Closed forms:
//!
//! * classic / symmetric mode-in-state: `p_ki = ℓ^i_k r^i_k`;
//! * state-in-mode under a uniform sphere law:
//!   `π_ki = ℓ^i_k r^i_k + Σ_{j≠i} ℓ^i_k r^j_k (ℓ^j ℓ^iᵀ)/(ℓ^i ℓ^iᵀ)`.
//!
//! The Monte-Carlo estimators evaluate the defining expectations
//! `E[(ℓ^i x⁰) r^i_k / x⁰_k]` and `E[ℓ^i_k x⁰_k / (ℓ^i x⁰)]` directly.
//! With `antithetic` pairing the odd cross terms cancel inside each sample
//! group (sign design for mode-in-state, reflection through
//! `{ℓ^i x = 0}` for state-in-mode), which turns the conditionally
//! convergent expectations into absolutely convergent estimators.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::eigensystem::EigenSystem;
use crate::error::{Error, Result};
use crate::sampling::{
    base_draws, run_groups, GroupEstimate, InitialConditionModel, ModelKind, SampleStream,
    SignDesign,
};

/// Denominators below this fraction of the model scale are discarded.
pub const CLIP_REL: f64 = 1e-6;

/// Minimum number of evaluations accepted by the Monte-Carlo estimators.
pub const MIN_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    ModeInState,
    StateInMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    ClassicFormula,
    ClosedFormSymmetric,
    MonteCarlo,
}

/// Why a nonlinear system's participation factors equal the linear ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonlinearBasis {
    /// Eigenvalues nonresonant up to the checked order (Poincaré linearization).
    NonResonant { max_order: u32 },
    /// Hyperbolic equilibrium (Hartman–Grobman conjugacy).
    Hyperbolic,
}

/// Monte-Carlo bookkeeping attached to an estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct McInfo {
    pub stderr_re: DMatrix<f64>,
    pub stderr_im: DMatrix<f64>,
    /// Independent sample groups averaged (pairs or sign-design orbits).
    pub groups: usize,
    /// Integrand evaluations, `groups × group size`.
    pub evaluations: usize,
    /// Discarded groups per entry.
    pub clipped: DMatrix<usize>,
}

/// `n × n` grid of participation values indexed `(k = state, i = mode)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticipationMatrix {
    values: DMatrix<Complex64>,
    kind: Kind,
    method: Method,
    mc: Option<McInfo>,
    basis: Option<NonlinearBasis>,
}

impl ParticipationMatrix {
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<Complex64> {
        &self.values
    }

    /// Value for state `k` and mode `i`.
    pub fn get(&self, k: usize, i: usize) -> Complex64 {
        self.values[(k, i)]
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn mc(&self) -> Option<&McInfo> {
        self.mc.as_ref()
    }

    pub fn basis(&self) -> Option<NonlinearBasis> {
        self.basis
    }

    pub(crate) fn with_basis(mut self, basis: NonlinearBasis) -> Self {
        self.basis = Some(basis);
        self
    }

    pub fn row_sums(&self) -> Vec<Complex64> {
        self.values.row_iter().map(|r| r.sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<Complex64> {
        self.values.column_iter().map(|c| c.sum()).collect()
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &ParticipationMatrix) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Real view with the columns of each conjugate mode pair added together.
    pub fn pair_summed(&self, es: &EigenSystem) -> PairSummed {
        let groups = es.mode_groups();
        let n = self.dim();
        let values = DMatrix::from_fn(n, groups.len(), |k, g| {
            groups[g]
                .iter()
                .map(|&i| self.values[(k, i)])
                .sum::<Complex64>()
                .re
        });
        let stderr = self.mc.as_ref().map(|mc| {
            DMatrix::from_fn(n, groups.len(), |k, g| {
                groups[g]
                    .iter()
                    .map(|&i| mc.stderr_re[(k, i)].powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
        });
        PairSummed {
            groups,
            values,
            stderr,
        }
    }
}

/// Participation values with conjugate pairs merged into one real column.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSummed {
    /// Mode indices merged into each column.
    pub groups: Vec<Vec<usize>>,
    pub values: DMatrix<f64>,
    pub stderr: Option<DMatrix<f64>>,
}

fn closed(
    es: &EigenSystem,
    kind: Kind,
    method: Method,
    values: DMatrix<Complex64>,
) -> ParticipationMatrix {
    debug_assert_eq!(values.nrows(), es.dim());
    ParticipationMatrix {
        values,
        kind,
        method,
        mc: None,
        basis: None,
    }
}

/// Classic participation factors `p_ki = ℓ^i_k r^i_k`.
pub fn classic_pf(es: &EigenSystem) -> ParticipationMatrix {
    let n = es.dim();
    let values = DMatrix::from_fn(n, n, |k, i| es.l(i, k) * es.r(k, i));
    closed(es, Kind::ModeInState, Method::ClassicFormula, values)
}

/// Mode-in-state factors for any flip-symmetric initial-condition law.
/// Numerically identical to [`classic_pf`].
pub fn mode_in_state_symmetric(es: &EigenSystem) -> ParticipationMatrix {
    let mut pm = classic_pf(es);
    pm.method = Method::ClosedFormSymmetric;
    pm
}

/// State-in-mode factors for a uniform law on a sphere.
pub fn state_in_mode_closed(es: &EigenSystem) -> Result<ParticipationMatrix> {
    let n = es.dim();
    // gram[(j, i)] = ℓ^j (ℓ^i)ᵀ, a bilinear (not Hermitian) product.
    let left = es.left_matrix();
    let gram = left * left.transpose();
    for i in 0..n {
        let scale: f64 = left.row(i).iter().map(|c| c.norm_sqr()).sum();
        if gram[(i, i)].norm() <= 1e-14 * scale {
            return Err(Error::ZeroLeftEigenvector { mode: i });
        }
    }
    let values = DMatrix::from_fn(n, n, |k, i| {
        let lik = es.l(i, k);
        let cross = (0..n)
            .filter(|&j| j != i)
            .map(|j| lik * es.r(k, j) * gram[(j, i)] / gram[(i, i)])
            .sum::<Complex64>();
        lik * es.r(k, i) + cross
    });
    Ok(closed(
        es,
        Kind::StateInMode,
        Method::ClosedFormSymmetric,
        values,
    ))
}

fn check_mc_inputs(
    es: &EigenSystem,
    icm: &InitialConditionModel,
    stream: &SampleStream,
) -> Result<()> {
    es.check_dim(icm.dimension())?;
    if stream.count < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "at least {MIN_SAMPLES} samples required, got {}",
            stream.count
        )));
    }
    Ok(())
}

fn into_matrix(
    es: &EigenSystem,
    kind: Kind,
    est: GroupEstimate,
    group_size: usize,
    clip_index: impl Fn(usize, usize) -> usize,
) -> Result<ParticipationMatrix> {
    let n = es.dim();
    for k in 0..n {
        for i in 0..n {
            let clipped = est.clipped[k * n + i];
            if 2 * clipped > est.groups {
                return Err(Error::DegenerateSamples {
                    index: clip_index(k, i),
                    clipped,
                    total: est.groups,
                });
            }
        }
    }
    let values = DMatrix::from_fn(n, n, |k, i| est.means[k * n + i]);
    let mc = McInfo {
        stderr_re: DMatrix::from_fn(n, n, |k, i| est.stderr[k * n + i].0),
        stderr_im: DMatrix::from_fn(n, n, |k, i| est.stderr[k * n + i].1),
        groups: est.groups,
        evaluations: est.groups * group_size,
        clipped: DMatrix::from_fn(n, n, |k, i| est.clipped[k * n + i]),
    };
    Ok(ParticipationMatrix {
        values,
        kind,
        method: Method::MonteCarlo,
        mc: Some(mc),
        basis: None,
    })
}

/// Shared estimator of `E[w_i(V⁻¹x) r^i_k / x_k]` over `x = amplitude · x̂`,
/// `x̂ ~ icm`. The linear estimator uses `w = id`; the nonlinear one passes
/// the normalizing map.
pub(crate) fn ratio_estimate<W>(
    es: &EigenSystem,
    icm: &InitialConditionModel,
    stream: &SampleStream,
    amplitude: f64,
    modal_map: W,
) -> Result<ParticipationMatrix>
where
    W: Fn(&[Complex64]) -> Vec<Complex64> + Sync,
{
    check_mc_inputs(es, icm, stream)?;
    let n = es.dim();
    let design = if stream.antithetic {
        SignDesign::new(n)
    } else {
        SignDesign::identity(n)
    };
    let draws = base_draws(stream, design.len());
    let thresholds: Vec<f64> = (0..n)
        .map(|k| CLIP_REL * amplitude * icm.axis_scale(k))
        .collect();
    let inv_len = 1.0 / design.len() as f64;

    let est = run_groups(icm, stream.seed, draws, n * n, |base, out| {
        let x: Vec<f64> = base.iter().map(|v| v * amplitude).collect();
        let mut sums = vec![Complex64::new(0.0, 0.0); n * n];
        for p in design.apply(&x) {
            let z = es.modal_coordinates(&p).expect("dimension checked");
            let w = modal_map(&z);
            for k in 0..n {
                for i in 0..n {
                    sums[k * n + i] += w[i] * es.r(k, i) / p[k];
                }
            }
        }
        for k in 0..n {
            if x[k].abs() < thresholds[k] {
                continue;
            }
            for i in 0..n {
                out[k * n + i] = Some(sums[k * n + i] * inv_len);
            }
        }
    });
    into_matrix(es, Kind::ModeInState, est, design.len(), |k, _| k)
}

/// Monte-Carlo estimate of the mode-in-state expectation
/// `E[(ℓ^i x⁰) r^i_k / x⁰_k]`.
pub fn mode_in_state_mc(
    es: &EigenSystem,
    icm: &InitialConditionModel,
    stream: &SampleStream,
) -> Result<ParticipationMatrix> {
    ratio_estimate(es, icm, stream, 1.0, |z| z.to_vec())
}

/// Monte-Carlo estimate of the state-in-mode expectation
/// `E[ℓ^i_k x⁰_k / (ℓ^i x⁰)]` under a uniform sphere law.
pub fn state_in_mode_mc(
    es: &EigenSystem,
    icm: &InitialConditionModel,
    stream: &SampleStream,
) -> Result<ParticipationMatrix> {
    check_mc_inputs(es, icm, stream)?;
    let radius = match icm.kind() {
        ModelKind::UniformSphere { radius } => *radius,
        other => {
            return Err(Error::UnsupportedModel(format!(
                "state-in-mode estimation requires a uniform sphere, got {other:?}"
            )))
        }
    };
    let n = es.dim();
    let reflections: Vec<Reflection> = (0..n)
        .map(|i| Reflection::new(&es.left_vector(i)))
        .collect();
    let thresholds: Vec<f64> = (0..n)
        .map(|i| {
            let norm: f64 = es
                .left_vector(i)
                .iter()
                .map(|c| c.norm_sqr())
                .sum::<f64>()
                .sqrt();
            CLIP_REL * radius * norm
        })
        .collect();
    let group_size = if stream.antithetic { 2 } else { 1 };
    let draws = base_draws(stream, group_size);

    let est = run_groups(icm, stream.seed, draws, n * n, |x, out| {
        for i in 0..n {
            let zi = dot(&es.left_vector(i), x);
            if zi.norm() < thresholds[i] {
                continue;
            }
            let mut vals: Vec<Complex64> = (0..n).map(|k| es.l(i, k) * x[k] / zi).collect();
            if stream.antithetic {
                let xr = reflections[i].apply(x);
                let zr = dot(&es.left_vector(i), &xr);
                for (k, v) in vals.iter_mut().enumerate() {
                    *v = (*v + es.l(i, k) * xr[k] / zr) * 0.5;
                }
            }
            for (k, v) in vals.into_iter().enumerate() {
                out[k * n + i] = Some(v);
            }
        }
    });
    into_matrix(es, Kind::StateInMode, est, group_size, |_, i| i)
}

fn dot(l: &[Complex64], x: &[f64]) -> Complex64 {
    l.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Orthogonal reflection `x ↦ x − 2Qx`, with `Q` the projector onto
/// `span{Re ℓ, Im ℓ}`; it maps `ℓx` to `−ℓx` and preserves every
/// rotation-invariant law.
#[derive(Debug, Clone)]
struct Reflection {
    basis: Vec<Vec<f64>>,
}

impl Reflection {
    fn new(l: &[Complex64]) -> Self {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let scale = l.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for part in [
            l.iter().map(|c| c.re).collect::<Vec<_>>(),
            l.iter().map(|c| c.im).collect::<Vec<_>>(),
        ] {
            let mut v = part;
            for q in &basis {
                let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 1e-12 * scale {
                basis.push(v.into_iter().map(|a| a / norm).collect());
            }
        }
        Reflection { basis }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for q in &self.basis {
            let d: f64 = x.iter().zip(q).map(|(a, b)| a * b).sum();
            y.iter_mut().zip(q).for_each(|(a, b)| *a -= 2.0 * d * b);
        }
        y
    }
}
