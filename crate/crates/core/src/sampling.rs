//! Symmetric initial-condition models and the deterministic, block-parallel
//! Monte-Carlo engine shared by the participation estimators.
//!
//! Draws are produced in fixed-size blocks; block `b` uses a ChaCha8 stream
//! seeded with `seed` and stream number `b`. Per-block statistics are merged
//! in block order, so results do not depend on the number of rayon workers.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Base draws per RNG block.
pub const BLOCK_DRAWS: usize = 2048;

/// Symmetric one-dimensional marginal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Marginal {
    /// Uniform on `[−a, a]`.
    Uniform(f64),
    /// Centered normal with standard deviation `σ`.
    Gaussian(f64),
    /// `±a` with probability 1/2 each.
    Rademacher(f64),
}

impl Marginal {
    fn scale(&self) -> f64 {
        match *self {
            Marginal::Uniform(a) | Marginal::Gaussian(a) | Marginal::Rademacher(a) => a,
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Marginal::Uniform(a) => rng.random_range(-a..=a),
            Marginal::Gaussian(s) => Normal::new(0.0, s).expect("validated sigma").sample(rng),
            Marginal::Rademacher(a) => {
                if rng.random::<bool>() {
                    a
                } else {
                    -a
                }
            }
        }
    }
}

/// Axis-aligned symmetric set, sampled with uniform density.
#[derive(Debug, Clone, PartialEq)]
pub enum SymmetricSet {
    Box { half_widths: Vec<f64> },
    Ellipsoid { semi_axes: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// Uniform on the sphere `‖x‖₂ = radius`.
    UniformSphere { radius: f64 },
    /// Independent coordinates sharing one symmetric marginal.
    SymmetricProduct(Marginal),
    /// Uniform density over a symmetric set.
    SymmetricSet(SymmetricSet),
}

/// Uncertainty law of the initial condition. Every supported model is
/// invariant under sign flips of each coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialConditionModel {
    kind: ModelKind,
    dimension: usize,
}

impl InitialConditionModel {
    pub fn new(kind: ModelKind, dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidArgument(
                "model dimension must be positive".into(),
            ));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let ok = match &kind {
            ModelKind::UniformSphere { radius } => positive(*radius),
            ModelKind::SymmetricProduct(m) => positive(m.scale()),
            ModelKind::SymmetricSet(SymmetricSet::Box { half_widths: v })
            | ModelKind::SymmetricSet(SymmetricSet::Ellipsoid { semi_axes: v }) => {
                if v.len() != dimension {
                    return Err(Error::DimensionMismatch {
                        expected: dimension,
                        got: v.len(),
                    });
                }
                v.iter().all(|&a| positive(a))
            }
        };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "model scales must be positive and finite: {kind:?}"
            )));
        }
        Ok(InitialConditionModel { kind, dimension })
    }

    pub fn uniform_sphere(dimension: usize, radius: f64) -> Result<Self> {
        Self::new(ModelKind::UniformSphere { radius }, dimension)
    }

    pub fn product(dimension: usize, marginal: Marginal) -> Result<Self> {
        Self::new(ModelKind::SymmetricProduct(marginal), dimension)
    }

    pub fn boxed(half_widths: Vec<f64>) -> Result<Self> {
        let n = half_widths.len();
        Self::new(
            ModelKind::SymmetricSet(SymmetricSet::Box { half_widths }),
            n,
        )
    }

    pub fn ellipsoid(semi_axes: Vec<f64>) -> Result<Self> {
        let n = semi_axes.len();
        Self::new(
            ModelKind::SymmetricSet(SymmetricSet::Ellipsoid { semi_axes }),
            n,
        )
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Typical magnitude of coordinate `k`; clipping thresholds are relative to it.
    pub fn axis_scale(&self, k: usize) -> f64 {
        match &self.kind {
            ModelKind::UniformSphere { radius } => *radius,
            ModelKind::SymmetricProduct(m) => m.scale(),
            ModelKind::SymmetricSet(SymmetricSet::Box { half_widths: v })
            | ModelKind::SymmetricSet(SymmetricSet::Ellipsoid { semi_axes: v }) => v[k],
        }
    }

    /// Largest distance from the origin a draw can have (3σ for Gaussians).
    pub fn extent(&self) -> f64 {
        let n = self.dimension as f64;
        match &self.kind {
            ModelKind::UniformSphere { radius } => *radius,
            ModelKind::SymmetricProduct(Marginal::Gaussian(s)) => 3.0 * s * n.sqrt(),
            ModelKind::SymmetricProduct(m) => m.scale() * n.sqrt(),
            ModelKind::SymmetricSet(SymmetricSet::Box { half_widths: v }) => {
                v.iter().map(|a| a * a).sum::<f64>().sqrt()
            }
            ModelKind::SymmetricSet(SymmetricSet::Ellipsoid { semi_axes: v }) => {
                v.iter().copied().fold(0.0, f64::max)
            }
        }
    }

    /// One draw from the model.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.dimension;
        match &self.kind {
            ModelKind::UniformSphere { radius } => {
                let mut v = unit_direction(n, rng);
                v.iter_mut().for_each(|x| *x *= radius);
                v
            }
            ModelKind::SymmetricProduct(m) => (0..n).map(|_| m.draw(rng)).collect(),
            ModelKind::SymmetricSet(SymmetricSet::Box { half_widths }) => half_widths
                .iter()
                .map(|&a| rng.random_range(-a..=a))
                .collect(),
            ModelKind::SymmetricSet(SymmetricSet::Ellipsoid { semi_axes }) => {
                let dir = unit_direction(n, rng);
                let u: f64 = rng.random();
                let rho = u.powf(1.0 / n as f64);
                dir.iter()
                    .zip(semi_axes)
                    .map(|(d, a)| d * rho * a)
                    .collect()
            }
        }
    }
}

fn unit_direction<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Seed, size and pairing mode of a Monte-Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleStream {
    pub seed: u64,
    /// Number of integrand evaluations; rounded up to whole antithetic groups.
    pub count: usize,
    pub antithetic: bool,
}

impl SampleStream {
    pub fn new(seed: u64, count: usize, antithetic: bool) -> Self {
        SampleStream {
            seed,
            count,
            antithetic,
        }
    }
}

/// Sign patterns whose columns are pairwise orthogonal, closed under
/// negation: the first `n` columns of a Sylvester–Hadamard matrix of order
/// `2^⌈log₂ n⌉`, stacked with their negatives.
///
/// Averaging `x_j / x_k` over `{s ⊙ x}` therefore gives exactly zero for
/// every `j ≠ k`, and every flip-symmetric law is preserved by each pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct SignDesign {
    n: usize,
    rows: Vec<Vec<f64>>,
}

impl SignDesign {
    pub fn new(n: usize) -> Self {
        let order = n.next_power_of_two();
        let mut rows = Vec::with_capacity(2 * order);
        for r in 0..order {
            let row: Vec<f64> = (0..n)
                .map(|c| {
                    if (r & c).count_ones() % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                })
                .collect();
            rows.push(row);
        }
        let negated: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|s| -s).collect())
            .collect();
        rows.extend(negated);
        SignDesign { n, rows }
    }

    /// The trivial design `{x}`, used when pairing is off.
    pub fn identity(n: usize) -> Self {
        SignDesign {
            n,
            rows: vec![vec![1.0; n]],
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// All sign-flipped copies of `x`.
    pub fn apply(&self, x: &[f64]) -> Vec<Vec<f64>> {
        debug_assert_eq!(x.len(), self.n);
        self.rows
            .iter()
            .map(|s| s.iter().zip(x).map(|(s, x)| s * x).collect())
            .collect()
    }
}

/// Number of base draws needed for `stream` when each draw expands to
/// `group_size` evaluations.
pub fn base_draws(stream: &SampleStream, group_size: usize) -> usize {
    if stream.antithetic {
        stream.count.div_ceil(group_size).max(1)
    } else {
        stream.count.max(1)
    }
}

fn block_rng(seed: u64, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block as u64);
    rng
}

/// The `draws` base draws of a stream, in deterministic order.
pub fn base_samples(icm: &InitialConditionModel, seed: u64, draws: usize) -> Vec<Vec<f64>> {
    let blocks = draws.div_ceil(BLOCK_DRAWS);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed, b);
            let len = BLOCK_DRAWS.min(draws - b * BLOCK_DRAWS);
            (0..len).map(|_| icm.draw(&mut rng)).collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Materialize the evaluation points of a stream. With `antithetic` each base
/// draw is expanded by the [`SignDesign`], so the returned multiset is closed
/// under `x ↦ −x` and has exactly zero per-axis means.
pub fn sample(icm: &InitialConditionModel, stream: &SampleStream) -> Vec<Vec<f64>> {
    if stream.antithetic {
        let design = SignDesign::new(icm.dimension());
        let draws = base_draws(stream, design.len());
        base_samples(icm, stream.seed, draws)
            .iter()
            .flat_map(|x| design.apply(x))
            .collect()
    } else {
        base_samples(icm, stream.seed, stream.count)
    }
}

/// Running mean and centered second moment, mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.count += 1;
        let d = v - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (v - self.mean);
    }

    fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n;
        self.m2 += other.m2 + d * d * (self.count as f64) * (other.count as f64) / n;
        self.count += other.count;
    }

    fn stderr(&self) -> f64 {
        if self.count < 2 {
            return f64::INFINITY;
        }
        let var = (self.m2 / (self.count - 1) as f64).max(0.0);
        (var / self.count as f64).sqrt()
    }
}

#[derive(Debug, Clone, Default)]
struct EntryStats {
    re: Moments,
    im: Moments,
    clipped: usize,
}

impl EntryStats {
    fn merge(&mut self, other: &EntryStats) {
        self.re.merge(&other.re);
        self.im.merge(&other.im);
        self.clipped += other.clipped;
    }
}

/// Result of a grouped Monte-Carlo run over `entries` quantities.
#[derive(Debug, Clone)]
pub(crate) struct GroupEstimate {
    pub means: Vec<Complex64>,
    pub stderr: Vec<(f64, f64)>,
    pub clipped: Vec<usize>,
    pub groups: usize,
}

/// Evaluate `group` on every base draw and average the per-entry group means.
///
/// `group` writes one value per entry, or `None` when the group was discarded
/// for that entry (near-zero denominator).
pub(crate) fn run_groups<G>(
    icm: &InitialConditionModel,
    seed: u64,
    draws: usize,
    entries: usize,
    group: G,
) -> GroupEstimate
where
    G: Fn(&[f64], &mut [Option<Complex64>]) + Sync,
{
    let blocks = draws.div_ceil(BLOCK_DRAWS);
    let per_block: Vec<Vec<EntryStats>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed, b);
            let len = BLOCK_DRAWS.min(draws - b * BLOCK_DRAWS);
            let mut stats = vec![EntryStats::default(); entries];
            let mut out = vec![None; entries];
            for _ in 0..len {
                let x = icm.draw(&mut rng);
                out.iter_mut().for_each(|o| *o = None);
                group(&x, &mut out);
                for (s, o) in stats.iter_mut().zip(&out) {
                    match o {
                        Some(v) => {
                            s.re.push(v.re);
                            s.im.push(v.im);
                        }
                        None => s.clipped += 1,
                    }
                }
            }
            stats
        })
        .collect();

    let mut total = vec![EntryStats::default(); entries];
    for block in &per_block {
        for (t, s) in total.iter_mut().zip(block) {
            t.merge(s);
        }
    }
    GroupEstimate {
        means: total
            .iter()
            .map(|s| Complex64::new(s.re.mean, s.im.mean))
            .collect(),
        stderr: total
            .iter()
            .map(|s| (s.re.stderr(), s.im.stderr()))
            .collect(),
        clipped: total.iter().map(|s| s.clipped).collect(),
        groups: draws,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_samples_have_exact_radius() {
        let icm = InitialConditionModel::uniform_sphere(2, 1.0).unwrap();
        for seed in [0, 1, 42] {
            for x in sample(&icm, &SampleStream::new(seed, 500, false)) {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((r - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn antithetic_samples_are_closed_under_negation() {
        let icm = InitialConditionModel::uniform_sphere(3, 2.0).unwrap();
        let pts = sample(&icm, &SampleStream::new(7, 1000, true));
        let key = |x: &[f64]| x.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        let mut set: Vec<_> = pts.iter().map(|x| key(x)).collect();
        set.sort();
        for x in &pts {
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            assert!(set.binary_search(&key(&neg)).is_ok());
        }
        // Points come in blocks of 2M: M sign patterns followed by their negatives.
        let m = SignDesign::new(3).len() / 2;
        for k in 0..3 {
            let total: f64 = pts
                .chunks(2 * m)
                .flat_map(|g| (0..m).map(move |r| g[r][k] + g[r + m][k]))
                .sum();
            assert_eq!(total, 0.0);
        }
    }

    #[test]
    fn uniform_product_stays_in_box() {
        let icm = InitialConditionModel::product(4, Marginal::Uniform(0.5)).unwrap();
        for x in sample(&icm, &SampleStream::new(3, 2000, true)) {
            assert!(x.iter().all(|v| v.abs() <= 0.5));
        }
    }

    #[test]
    fn ellipsoid_and_box_respect_their_sets() {
        let e = InitialConditionModel::ellipsoid(vec![1.0, 0.1]).unwrap();
        for x in sample(&e, &SampleStream::new(9, 1000, false)) {
            assert!((x[0] / 1.0).powi(2) + (x[1] / 0.1).powi(2) <= 1.0 + 1e-12);
        }
        let b = InitialConditionModel::boxed(vec![1.0, 3.0]).unwrap();
        for x in sample(&b, &SampleStream::new(9, 1000, false)) {
            assert!(x[0].abs() <= 1.0 && x[1].abs() <= 3.0);
        }
    }

    #[test]
    fn sign_design_columns_are_orthogonal() {
        for n in 1..=9 {
            let d = SignDesign::new(n);
            assert_eq!(d.len(), 2 * n.next_power_of_two());
            for j in 0..n {
                assert_eq!(d.rows().iter().map(|r| r[j]).sum::<f64>(), 0.0);
                for k in 0..j {
                    let dot: f64 = d.rows().iter().map(|r| r[j] * r[k]).sum();
                    assert_eq!(dot, 0.0);
                }
            }
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let icm = InitialConditionModel::product(3, Marginal::Gaussian(1.0)).unwrap();
        let a = sample(&icm, &SampleStream::new(11, 5000, false));
        let b = sample(&icm, &SampleStream::new(11, 5000, false));
        assert_eq!(a, b);
        let c = sample(&icm, &SampleStream::new(12, 5000, false));
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_invalid_models() {
        assert!(InitialConditionModel::uniform_sphere(2, 0.0).is_err());
        assert!(InitialConditionModel::uniform_sphere(0, 1.0).is_err());
        assert!(InitialConditionModel::product(2, Marginal::Gaussian(-1.0)).is_err());
        assert!(InitialConditionModel::new(
            ModelKind::SymmetricSet(SymmetricSet::Box {
                half_widths: vec![1.0]
            }),
            2
        )
        .is_err());
    }

    #[test]
    fn moments_merge_matches_sequential() {
        let vals: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut seq = Moments::default();
        vals.iter().for_each(|&v| seq.push(v));
        let (a, b) = vals.split_at(37);
        let mut ma = Moments::default();
        a.iter().for_each(|&v| ma.push(v));
        let mut mb = Moments::default();
        b.iter().for_each(|&v| mb.push(v));
        ma.merge(&mb);
        assert!((ma.mean - seq.mean).abs() < 1e-14);
        assert!((ma.m2 - seq.m2).abs() < 1e-12);
    }
}
