//! Trajectories of polynomial vector fields and the empirical nonlinear
//! mode-in-state estimator.
//!
//! The estimator averages `r^i_k φ_i(V⁻¹x⁰) / x⁰_k` over initial conditions
//! `x⁰ = ε·x̂`, `x̂` drawn from an initial-condition model. As `ε → 0` it
//! approaches the classic factors `ℓ^i_k r^i_k`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::eigensystem::EigenSystem;
use crate::error::{Error, Result};
use crate::normalform::NormalFormTransform;
use crate::participation::{ratio_estimate, ParticipationMatrix};
use crate::poly::PolynomialVectorField;
use crate::sampling::{InitialConditionModel, SampleStream};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_RTOL: f64 = 1e-8;
pub const DEFAULT_ATOL: f64 = 1e-10;
/// Minimum number of grid points used by the conjugacy check.
pub const CONJUGACY_GRID: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integrator {
    /// Classical fixed-step Runge–Kutta.
    Rk4,
    /// Dormand–Prince 5(4) with error control; `dt` is the initial step.
    Rk45 { rtol: f64, atol: f64 },
}

impl Integrator {
    pub fn rk45() -> Self {
        Integrator::Rk45 {
            rtol: DEFAULT_RTOL,
            atol: DEFAULT_ATOL,
        }
    }
}

/// RK45 when the real parts spread over more than two decades, RK4 otherwise.
pub fn default_integrator(lambdas: &[Complex64]) -> Integrator {
    let re: Vec<f64> = lambdas
        .iter()
        .map(|l| l.re.abs())
        .filter(|r| *r > 0.0)
        .collect();
    let min = re.iter().copied().fold(f64::INFINITY, f64::min);
    let max = re.iter().copied().fold(0.0, f64::max);
    if min.is_finite() && max / min > 100.0 {
        Integrator::rk45()
    } else {
        Integrator::Rk4
    }
}

/// Keep every step up to ten slowest time constants, every tenth beyond.
pub fn default_stride(lambdas: &[Complex64], t_end: f64) -> usize {
    let min = lambdas
        .iter()
        .map(|l| l.re.abs())
        .fold(f64::INFINITY, f64::min);
    if min == 0.0 || t_end <= 10.0 / min {
        1
    } else {
        10
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
    /// Smallest and largest step taken.
    pub dt_stats: (f64, f64),
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectories hold at least x0")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectories hold at least x0")
    }
}

fn axpy(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = y.to_vec();
    for &(c, k) in terms {
        if c != 0.0 {
            out.iter_mut().zip(k).for_each(|(o, v)| *o += h * c * v);
        }
    }
    out
}

fn rk4_step(f: &PolynomialVectorField, y: &[f64], h: f64) -> Vec<f64> {
    let k1 = f.eval_real(y);
    let k2 = f.eval_real(&axpy(y, h, &[(0.5, &k1)]));
    let k3 = f.eval_real(&axpy(y, h, &[(0.5, &k2)]));
    let k4 = f.eval_real(&axpy(y, h, &[(1.0, &k3)]));
    axpy(
        y,
        h,
        &[
            (1.0 / 6.0, &k1),
            (1.0 / 3.0, &k2),
            (1.0 / 3.0, &k3),
            (1.0 / 6.0, &k4),
        ],
    )
}

const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth- minus fourth-order weights.
const DP_E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

/// One Dormand–Prince step: `(y_new, error estimate)`.
fn dp_step(f: &PolynomialVectorField, y: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let mut k: Vec<Vec<f64>> = vec![f.eval_real(y)];
    for row in DP_A.iter() {
        let terms: Vec<(f64, &[f64])> = row
            .iter()
            .zip(&k)
            .map(|(&a, ki)| (a, ki.as_slice()))
            .collect();
        let yi = axpy(y, h, &terms);
        k.push(f.eval_real(&yi));
    }
    let terms: Vec<(f64, &[f64])> = DP_A[5]
        .iter()
        .zip(&k)
        .map(|(&a, ki)| (a, ki.as_slice()))
        .collect();
    let y_new = axpy(y, h, &terms);
    let err = (0..y.len())
        .map(|j| h * DP_E.iter().zip(&k).map(|(e, ki)| e * ki[j]).sum::<f64>())
        .collect();
    (y_new, err)
}

/// Solve `ẋ = f(x)`, `x(0) = x0` on `[0, t_end]`, storing every step.
pub fn integrate(
    f: &PolynomialVectorField,
    x0: &[f64],
    t_end: f64,
    dt: f64,
    method: Integrator,
) -> Result<Trajectory> {
    integrate_strided(f, x0, t_end, dt, method, 1)
}

/// As [`integrate`], storing every `stride`-th step plus the final state.
pub fn integrate_strided(
    f: &PolynomialVectorField,
    x0: &[f64],
    t_end: f64,
    dt: f64,
    method: Integrator,
    stride: usize,
) -> Result<Trajectory> {
    if x0.len() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: x0.len(),
        });
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "t_end must be positive, got {t_end}"
        )));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "dt must be positive, got {dt}"
        )));
    }
    if let Integrator::Rk45 { rtol, atol } = method {
        if !(rtol > 0.0 && atol > 0.0) {
            return Err(Error::InvalidArgument(
                "rtol and atol must be positive".into(),
            ));
        }
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { t: 0.0 });
    }
    let stride = stride.max(1);
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.to_vec()],
        x0: x0.to_vec(),
        dt_stats: (f64::INFINITY, 0.0),
    };
    let record = |traj: &mut Trajectory, step: usize, t: f64, y: &[f64], h: f64, last: bool| {
        traj.dt_stats.0 = traj.dt_stats.0.min(h);
        traj.dt_stats.1 = traj.dt_stats.1.max(h);
        if step.is_multiple_of(stride) || last {
            traj.times.push(t);
            traj.states.push(y.to_vec());
        }
    };

    match method {
        Integrator::Rk4 => {
            let ratio = t_end / dt;
            let steps = if (ratio - ratio.round()).abs() <= 1e-9 * ratio {
                ratio.round()
            } else {
                ratio.ceil()
            }
            .max(1.0) as usize;
            let h = t_end / steps as f64;
            let mut y = x0.to_vec();
            for step in 1..=steps {
                y = rk4_step(f, &y, h);
                let t = if step == steps {
                    t_end
                } else {
                    step as f64 * h
                };
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { t });
                }
                record(&mut traj, step, t, &y, h, step == steps);
            }
        }
        Integrator::Rk45 { rtol, atol } => {
            let mut y = x0.to_vec();
            let mut t = 0.0;
            let mut h = dt.min(t_end);
            let mut step = 0;
            while t < t_end {
                let floor = 1e-12 * t.abs().max(1.0);
                if h < floor {
                    return Err(Error::StepUnderflow { t, step: h });
                }
                let last = t + h >= t_end;
                let h_try = if last { t_end - t } else { h };
                let (y_new, err) = dp_step(f, &y, h_try);
                let norm = (err
                    .iter()
                    .zip(y.iter().zip(&y_new))
                    .map(|(e, (a, b))| {
                        let sc = atol + rtol * a.abs().max(b.abs());
                        (e / sc).powi(2)
                    })
                    .sum::<f64>()
                    / y.len() as f64)
                    .sqrt();
                if !norm.is_finite() {
                    if y_new.iter().any(|v| !v.is_finite()) && h_try < floor * 1e3 {
                        return Err(Error::NonFinite { t });
                    }
                    h = h_try * 0.1;
                    continue;
                }
                if norm <= 1.0 {
                    t = if last { t_end } else { t + h_try };
                    y = y_new;
                    step += 1;
                    record(&mut traj, step, t, &y, h_try, last);
                }
                let factor = if norm == 0.0 {
                    5.0
                } else {
                    (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0)
                };
                h = h_try * factor;
            }
        }
    }
    Ok(traj)
}

/// Nonlinear mode-in-state estimate at one amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalParticipation {
    pub estimate: ParticipationMatrix,
    pub epsilon: f64,
}

impl EmpiricalParticipation {
    pub fn values(&self) -> &DMatrix<Complex64> {
        self.estimate.values()
    }

    /// Integrand evaluations.
    pub fn samples(&self) -> usize {
        self.estimate.mc().map_or(0, |m| m.evaluations)
    }

    /// Entrywise standard error of the real and imaginary parts.
    pub fn stderr(&self) -> (&DMatrix<f64>, &DMatrix<f64>) {
        let mc = self
            .estimate
            .mc()
            .expect("empirical estimates carry sampling info");
        (&mc.stderr_re, &mc.stderr_im)
    }

    /// `|estimate − reference|` entrywise.
    pub fn deviation(&self, reference: &ParticipationMatrix) -> DMatrix<f64> {
        self.values()
            .zip_map(reference.values(), |a, b| (a - b).norm())
    }
}

fn check_transform(es: &EigenSystem, nf: &NormalFormTransform) -> Result<()> {
    es.check_dim(nf.phi.dim())?;
    let gap = nf
        .lambdas
        .iter()
        .zip(es.eigenvalues())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    if gap > es.distinct_tol() {
        return Err(Error::InvalidArgument(
            "normal form was computed for a different spectrum".into(),
        ));
    }
    Ok(())
}

/// Average of `r^i_k φ_i(V⁻¹x⁰) / x⁰_k` over `x⁰ = ε·x̂`, `x̂ ~ icm`, with the
/// same grouping, clipping and seeding as the linear estimator.
pub fn empirical_mode_in_state(
    f: &PolynomialVectorField,
    es: &EigenSystem,
    nf: &NormalFormTransform,
    icm: &InitialConditionModel,
    epsilon: f64,
    stream: &SampleStream,
) -> Result<EmpiricalParticipation> {
    es.check_dim(f.dim())?;
    check_transform(es, nf)?;
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let l = es.left_matrix();
    let l_inf = (0..l.nrows())
        .map(|i| l.row(i).iter().map(|c| c.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let radius = l_inf * epsilon * icm.extent();
    let limit = nf.phi.contraction_radius();
    if radius > limit {
        return Err(Error::RegionExceeded { radius, limit });
    }
    let phi = &nf.phi;
    let estimate = ratio_estimate(es, icm, stream, epsilon, |z| {
        phi.evaluate(z).expect("dimension checked")
    })?;
    Ok(EmpiricalParticipation { estimate, epsilon })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConjugacyCheck {
    pub max_residual: f64,
    pub pass: bool,
    pub times: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// Compare `φ(V⁻¹x(t))` with `e^{Λt} φ(V⁻¹x0)` on a uniform grid of
/// [`CONJUGACY_GRID`] intervals; RK4 with step at most [`DEFAULT_DT`].
pub fn verify_conjugacy(
    f: &PolynomialVectorField,
    es: &EigenSystem,
    nf: &NormalFormTransform,
    x0: &[f64],
    t_end: f64,
    tol: f64,
) -> Result<ConjugacyCheck> {
    es.check_dim(f.dim())?;
    check_transform(es, nf)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tol must be positive, got {tol}"
        )));
    }
    let interval = t_end / CONJUGACY_GRID as f64;
    let sub = (interval / DEFAULT_DT).ceil().max(1.0) as usize;
    let h = interval / sub as f64;
    let traj = integrate_strided(f, x0, t_end, h, Integrator::Rk4, sub)?;

    let w0 = nf.phi.evaluate(&es.modal_coordinates(x0)?)?;
    let lambdas = es.eigenvalues();
    let mut residuals = Vec::with_capacity(traj.len());
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let w = nf.phi.evaluate(&es.modal_coordinates(x)?)?;
        let r = w
            .iter()
            .zip(&w0)
            .zip(lambdas)
            .map(|((wt, w0), l)| (wt - (l * t).exp() * w0).norm_sqr())
            .sum::<f64>()
            .sqrt();
        residuals.push(r);
    }
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    Ok(ConjugacyCheck {
        max_residual,
        pass: max_residual <= tol,
        times: traj.times,
        residuals,
    })
}
