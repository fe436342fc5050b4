//! Truncated multivariate polynomials with complex coefficients, polynomial
//! vector fields and near-identity polynomial maps.
//!
//! Monomials are keyed by [`MultiIndex`] in graded order (total degree
//! first, then exponent vectors in descending lexicographic order, so
//! `x₁² ≺ x₁x₂ ≺ x₂²`). All products and compositions are truncated at an
//! explicit maximum degree.

use std::cmp::Ordering;
use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Exponent vector `m = (m₁, …, m_n)` of a monomial `z^m`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zero(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    /// `e_k` in `n` variables.
    pub fn unit(n: usize, k: usize) -> Self {
        let mut v = vec![0; n];
        v[k] = 1;
        MultiIndex(v)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Total degree `|m|`.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    /// `(m, λ) = Σ m_k λ_k`.
    pub fn dot(&self, lambdas: &[Complex64]) -> Complex64 {
        self.0.iter().zip(lambdas).map(|(&m, l)| l * m as f64).sum()
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// All multi-indices of total degree `order` in `n` variables, ascending.
    pub fn of_order(n: usize, order: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; n];
        fill(&mut cur, 0, order, &mut out);
        out
    }

    /// Number of multi-indices with `lo ≤ |m| ≤ hi` in `n` variables.
    pub fn count_between(n: usize, lo: u32, hi: u32) -> usize {
        (lo..=hi).map(|d| binomial(d as usize + n - 1, n - 1)).sum()
    }
}

fn fill(cur: &mut Vec<u32>, pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining;
        out.push(MultiIndex(cur.clone()));
        return;
    }
    for e in (0..=remaining).rev() {
        cur[pos] = e;
        fill(cur, pos + 1, remaining - e, out);
    }
    cur[pos] = 0;
}

pub(crate) fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k.min(n));
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order()
            .cmp(&other.order())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

/// Polynomial in `n` complex variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    n: usize,
    terms: BTreeMap<MultiIndex, Complex64>,
}

impl Polynomial {
    pub fn zero(n: usize) -> Self {
        Polynomial {
            n,
            terms: BTreeMap::new(),
        }
    }

    /// The coordinate function `z_k`.
    pub fn variable(n: usize, k: usize) -> Self {
        let mut p = Self::zero(n);
        p.add_term(MultiIndex::unit(n, k), Complex64::new(1.0, 0.0));
        p
    }

    /// `Σ_j coeffs[j] z_j`.
    pub fn linear(coeffs: &[Complex64]) -> Self {
        let n = coeffs.len();
        let mut p = Self::zero(n);
        for (j, &c) in coeffs.iter().enumerate() {
            p.add_term(MultiIndex::unit(n, j), c);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &Complex64)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &MultiIndex) -> Complex64 {
        self.terms.get(m).copied().unwrap_or(ZERO)
    }

    /// Highest total degree present, 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().next_back().map_or(0, |m| m.order())
    }

    /// Add `c z^m`; exact zeros are never stored.
    pub fn add_term(&mut self, m: MultiIndex, c: Complex64) {
        debug_assert_eq!(m.dim(), self.n);
        if c == ZERO {
            return;
        }
        match self.terms.entry(m) {
            Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if *e.get() == ZERO {
                    e.remove();
                }
            }
            Entry::Vacant(e) => {
                e.insert(c);
            }
        }
    }

    pub fn set_coeff(&mut self, m: MultiIndex, c: Complex64) {
        if c == ZERO {
            self.terms.remove(&m);
        } else {
            self.terms.insert(m, c);
        }
    }

    pub fn remove(&mut self, m: &MultiIndex) -> Option<Complex64> {
        self.terms.remove(m)
    }

    /// Terms with `lo ≤ |m| ≤ hi`.
    pub fn degree_range(&self, lo: u32, hi: u32) -> Polynomial {
        Polynomial {
            n: self.n,
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| (lo..=hi).contains(&m.order()))
                .map(|(m, c)| (m.clone(), *c))
                .collect(),
        }
    }

    pub fn truncate(&mut self, max_degree: u32) {
        self.terms.retain(|m, _| m.order() <= max_degree);
    }

    pub fn scale(&self, s: Complex64) -> Polynomial {
        let mut out = Self::zero(self.n);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c * s);
        }
        out
    }

    pub fn add_assign(&mut self, other: &Polynomial) {
        for (m, c) in &other.terms {
            self.add_term(m.clone(), *c);
        }
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -c);
        }
        out
    }

    /// Product truncated at `max_degree`.
    pub fn mul_trunc(&self, other: &Polynomial, max_degree: u32) -> Polynomial {
        let mut acc: BTreeMap<MultiIndex, Complex64> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            let da = ma.order();
            if da > max_degree {
                break;
            }
            for (mb, cb) in &other.terms {
                if da + mb.order() > max_degree {
                    break;
                }
                *acc.entry(ma.add(mb)).or_insert(ZERO) += ca * cb;
            }
        }
        acc.retain(|_, c| *c != ZERO);
        Polynomial {
            n: self.n,
            terms: acc,
        }
    }

    /// Partial derivative with respect to `z_k`.
    pub fn derivative(&self, k: usize) -> Polynomial {
        let mut out = Self::zero(self.n);
        for (m, c) in &self.terms {
            let e = m.0[k];
            if e == 0 {
                continue;
            }
            let mut d = m.0.clone();
            d[k] -= 1;
            out.add_term(MultiIndex(d), c * e as f64);
        }
        out
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        let powers = PowerTable::new(z, self.degree());
        self.eval_with(&powers)
    }

    fn eval_with(&self, powers: &PowerTable) -> Complex64 {
        self.terms
            .iter()
            .fold(ZERO, |acc, (m, c)| acc + c * powers.monomial(m))
    }

    /// Largest coefficient modulus.
    pub fn max_abs(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Drop coefficients with modulus `≤ tol`.
    pub fn prune(&mut self, tol: f64) {
        self.terms.retain(|_, c| c.norm() > tol);
    }
}

/// Table of `z_k^p` for fast monomial evaluation.
struct PowerTable {
    pows: Vec<Vec<Complex64>>,
}

impl PowerTable {
    fn new(z: &[Complex64], max_degree: u32) -> Self {
        let pows = z
            .iter()
            .map(|&zk| {
                let mut v = Vec::with_capacity(max_degree as usize + 1);
                v.push(Complex64::new(1.0, 0.0));
                for p in 1..=max_degree as usize {
                    let prev = v[p - 1];
                    v.push(prev * zk);
                }
                v
            })
            .collect();
        PowerTable { pows }
    }

    fn monomial(&self, m: &MultiIndex) -> Complex64 {
        m.0.iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .fold(Complex64::new(1.0, 0.0), |acc, (k, &e)| {
                acc * self.pows[k][e as usize]
            })
    }
}

/// `outer ∘ inner`, truncated at `max_degree`. Every component of `inner`
/// must vanish at the origin.
pub fn compose(outer: &[Polynomial], inner: &[Polynomial], max_degree: u32) -> Vec<Polynomial> {
    let nin = inner.first().map_or(0, |p| p.nvars());
    let max_exp = outer
        .iter()
        .flat_map(|p| p.terms.keys())
        .flat_map(|m| m.0.iter().copied())
        .max()
        .unwrap_or(0)
        .min(max_degree);
    // powers[k][p] = inner_k^p
    let powers: Vec<Vec<Polynomial>> = inner
        .iter()
        .map(|g| {
            let mut v = Vec::with_capacity(max_exp as usize + 1);
            let mut one = Polynomial::zero(nin);
            one.add_term(MultiIndex::zero(nin), Complex64::new(1.0, 0.0));
            v.push(one);
            for p in 1..=max_exp as usize {
                let next = v[p - 1].mul_trunc(g, max_degree);
                v.push(next);
            }
            v
        })
        .collect();
    let mut cache: BTreeMap<MultiIndex, Polynomial> = BTreeMap::new();
    outer
        .iter()
        .map(|p| {
            let mut out = Polynomial::zero(nin);
            for (m, c) in &p.terms {
                if m.order() > max_degree {
                    continue;
                }
                let mono = cache
                    .entry(m.clone())
                    .or_insert_with(|| {
                        m.0.iter()
                            .enumerate()
                            .filter(|(_, &e)| e > 0)
                            .fold(powers[0][0].clone(), |acc, (k, &e)| {
                                acc.mul_trunc(&powers[k][e as usize], max_degree)
                            })
                    })
                    .clone();
                out.add_assign(&mono.scale(*c));
            }
            out
        })
        .collect()
}

/// Truncated analytic vector field `ż = F(z)` with `F(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialVectorField {
    degree: u32,
    components: Vec<Polynomial>,
}

impl PolynomialVectorField {
    pub fn new(components: Vec<Polynomial>, degree: u32) -> Result<Self> {
        let n = components.len();
        if n == 0 {
            return Err(Error::InvalidArgument(
                "vector field needs at least one component".into(),
            ));
        }
        if degree == 0 {
            return Err(Error::InvalidArgument(
                "truncation degree must be at least 1".into(),
            ));
        }
        for (s, p) in components.iter().enumerate() {
            if p.nvars() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: p.nvars(),
                });
            }
            if p.coeff(&MultiIndex::zero(n)) != ZERO {
                return Err(Error::InvalidArgument(format!(
                    "component {} has a constant term; the equilibrium must be at the origin",
                    s + 1
                )));
            }
            if let Some((m, _)) = p
                .terms()
                .find(|(_, c)| !c.re.is_finite() || !c.im.is_finite())
            {
                return Err(Error::InvalidArgument(format!(
                    "component {} has a non-finite coefficient at {m}",
                    s + 1
                )));
            }
            if p.degree() > degree {
                return Err(Error::InvalidArgument(format!(
                    "component {} has degree {} above the truncation degree {degree}",
                    s + 1,
                    p.degree()
                )));
            }
        }
        Ok(PolynomialVectorField { degree, components })
    }

    /// Build a real field from a linear matrix plus `(component, exponents, coeff)`
    /// terms with 0-based components.
    pub fn from_real(linear: &DMatrix<f64>, terms: &[(usize, Vec<u32>, f64)]) -> Result<Self> {
        let n = linear.nrows();
        if linear.ncols() != n {
            return Err(Error::InvalidMatrix("linear part must be square".into()));
        }
        let mut comps: Vec<Polynomial> = (0..n)
            .map(|s| {
                Polynomial::linear(
                    &(0..n)
                        .map(|j| Complex64::new(linear[(s, j)], 0.0))
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        let mut degree = 1;
        for (s, exps, c) in terms {
            if *s >= n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: s + 1,
                });
            }
            if exps.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: exps.len(),
                });
            }
            let m = MultiIndex::new(exps.clone());
            degree = degree.max(m.order());
            comps[*s].add_term(m, Complex64::new(*c, 0.0));
        }
        Self::new(comps, degree)
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    pub fn component(&self, s: usize) -> &Polynomial {
        &self.components[s]
    }

    /// Jacobian at the origin, `A[s][j] = ∂F_s/∂z_j(0)`.
    pub fn linear_part(&self) -> DMatrix<Complex64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |s, j| {
            self.components[s].coeff(&MultiIndex::unit(n, j))
        })
    }

    /// Terms of degree `≥ 2`.
    pub fn nonlinear_part(&self) -> Vec<Polynomial> {
        self.components
            .iter()
            .map(|p| p.degree_range(2, self.degree))
            .collect()
    }

    pub fn is_linear(&self) -> bool {
        self.components.iter().all(|p| p.degree() <= 1)
    }

    /// `(component, monomial, coefficient)` in component-major graded order.
    pub fn terms(&self) -> impl Iterator<Item = (usize, &MultiIndex, Complex64)> {
        self.components
            .iter()
            .enumerate()
            .flat_map(|(s, p)| p.terms().map(move |(m, c)| (s, m, *c)))
    }

    pub fn term_count(&self) -> usize {
        self.components.iter().map(|p| p.len()).sum()
    }

    pub fn eval(&self, z: &[Complex64]) -> Vec<Complex64> {
        let powers = PowerTable::new(z, self.degree);
        self.components
            .iter()
            .map(|p| p.eval_with(&powers))
            .collect()
    }

    /// Evaluate at a real point, returning the real part.
    pub fn eval_real(&self, x: &[f64]) -> Vec<f64> {
        let z: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.eval(&z).into_iter().map(|c| c.re).collect()
    }

    /// Whether every coefficient is real.
    pub fn is_real(&self) -> bool {
        self.terms().all(|(_, _, c)| c.im == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.components
            .iter()
            .map(|p| p.max_abs())
            .fold(0.0, f64::max)
    }
}

/// Near-identity map `y ↦ y + h(y)` with `h` of degree `≥ 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialMap {
    degree: u32,
    components: Vec<Polynomial>,
}

impl PolynomialMap {
    pub fn identity(n: usize, degree: u32) -> Self {
        PolynomialMap {
            degree,
            components: (0..n).map(|k| Polynomial::variable(n, k)).collect(),
        }
    }

    /// Build from full components; the linear part must be the identity and
    /// the constant term zero.
    pub fn new(components: Vec<Polynomial>, degree: u32) -> Result<Self> {
        let n = components.len();
        for (s, p) in components.iter().enumerate() {
            if p.nvars() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: p.nvars(),
                });
            }
            let ok_const = p.coeff(&MultiIndex::zero(n)) == ZERO;
            let ok_lin = (0..n).all(|j| {
                let expect = if j == s { 1.0 } else { 0.0 };
                p.coeff(&MultiIndex::unit(n, j)) == Complex64::new(expect, 0.0)
            });
            if !ok_const || !ok_lin {
                return Err(Error::InvalidArgument(format!(
                    "map component {} is not of the form y_s + O(|y|²)",
                    s + 1
                )));
            }
        }
        let mut map = PolynomialMap { degree, components };
        map.components.iter_mut().for_each(|p| p.truncate(degree));
        Ok(map)
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    /// `h = φ − id`.
    pub fn higher_order(&self) -> Vec<Polynomial> {
        self.components
            .iter()
            .map(|p| p.degree_range(2, self.degree))
            .collect()
    }

    pub fn is_identity(&self) -> bool {
        self.higher_order().iter().all(|p| p.is_zero())
    }

    /// Coefficient of `z^m` in component `s`.
    pub fn coeff(&self, s: usize, m: &MultiIndex) -> Complex64 {
        self.components[s].coeff(m)
    }

    pub fn evaluate(&self, z: &[Complex64]) -> Result<Vec<Complex64>> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: z.len(),
            });
        }
        let powers = PowerTable::new(z, self.degree);
        Ok(self
            .higher_order()
            .iter()
            .zip(z)
            .map(|(h, &zs)| zs + h.eval_with(&powers))
            .collect())
    }

    /// Solve `φ(z) = z̃` by the fixed-point iteration `z ← z̃ − h(z)`.
    pub fn invert(
        &self,
        ztilde: &[Complex64],
        tol: f64,
        max_iter: usize,
    ) -> Result<Vec<Complex64>> {
        if ztilde.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: ztilde.len(),
            });
        }
        let h = self.higher_order();
        let mut z = ztilde.to_vec();
        let mut residual = f64::INFINITY;
        for _ in 0..max_iter.max(1) {
            let powers = PowerTable::new(&z, self.degree);
            let hz: Vec<Complex64> = h.iter().map(|p| p.eval_with(&powers)).collect();
            residual = z
                .iter()
                .zip(&hz)
                .zip(ztilde)
                .map(|((zi, hi), ti)| (zi + hi - ti).norm_sqr())
                .sum::<f64>()
                .sqrt();
            if residual <= tol {
                return Ok(z);
            }
            if !residual.is_finite() {
                break;
            }
            z = ztilde.iter().zip(&hz).map(|(t, hi)| t - hi).collect();
        }
        Err(Error::NoConvergence {
            iterations: max_iter,
            residual,
        })
    }

    /// `self ∘ inner`, truncated at the common degree.
    pub fn compose(&self, inner: &PolynomialMap) -> PolynomialMap {
        let degree = self.degree.min(inner.degree);
        PolynomialMap {
            degree,
            components: compose(&self.components, &inner.components, degree),
        }
    }

    /// Series inverse `ψ` with `φ ∘ ψ = id + O(degree + 1)`.
    pub fn series_inverse(&self) -> PolynomialMap {
        let n = self.dim();
        let h = self.higher_order();
        let mut psi = PolynomialMap::identity(n, self.degree);
        for _ in 1..self.degree {
            let hpsi = compose(&h, &psi.components, self.degree);
            let next: Vec<Polynomial> = (0..n)
                .map(|k| Polynomial::variable(n, k).sub(&hpsi[k]))
                .collect();
            if next == psi.components {
                break;
            }
            psi.components = next;
        }
        psi
    }

    /// Radius `ρ` of the polydisc on which the bound
    /// `Σ |c_{s,m}| |m| ρ^{|m|−1} ≤ 1/2` on `‖Dh‖` holds; the fixed-point
    /// inversion contracts inside it. Infinite for the identity.
    pub fn contraction_radius(&self) -> f64 {
        let terms: Vec<(f64, u32)> = self
            .higher_order()
            .iter()
            .flat_map(|p| {
                p.terms()
                    .map(|(m, c)| (c.norm(), m.order()))
                    .collect::<Vec<_>>()
            })
            .collect();
        if terms.is_empty() {
            return f64::INFINITY;
        }
        let lip = |rho: f64| -> f64 {
            terms
                .iter()
                .map(|&(c, d)| c * d as f64 * rho.powi(d as i32 - 1))
                .sum()
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        while lip(hi) < 0.5 {
            hi *= 2.0;
            if hi > 1e12 {
                return hi;
            }
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if lip(mid) < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}
