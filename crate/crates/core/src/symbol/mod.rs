//! Truncated Fourier–Taylor symbols on the cotangent bundle of the 2-torus.
//!
//! A [`ClassicalSymbol`] is a finite sum `Σ c(k,α,m) e^{ik·x} ξ^α ε^m` stored
//! sparsely. Every operation re-truncates to the caps and remembers whether
//! anything was dropped.
//!
//! Sign convention for brackets, used throughout the crate:
//! `{f, g} = Σ_j ∂_{ξ_j} f ∂_{x_j} g − ∂_{x_j} f ∂_{ξ_j} g` and `H_G f = {G, f}`,
//! so that `H_{a·ξ} G = a·∂_x G`.

mod bracket;
mod frequency;
mod json;
mod operator;

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bracket::{
    exp_hamiltonian_compose, lie_series, moyal_bracket, moyal_bracket_graded, poisson_bracket,
    poisson_bracket_graded,
};
pub use frequency::FrequencyVector;
pub use json::{SymbolDoc, TermDoc};
pub use operator::OperatorSymbol;

/// Fourier mode `k ∈ Z²`.
pub type Mode = [i32; 2];
/// Multi-index of a ξ-monomial.
pub type MultiIndex = [u32; 2];

/// Relative threshold below which coefficients are pruned.
pub const PRUNE_REL: f64 = 1e-14;

/// Key of a single term `e^{ik·x} ξ^α ε^m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Monomial {
    pub k: Mode,
    pub alpha: MultiIndex,
    pub m: u32,
}

impl Monomial {
    pub const ONE: Monomial = Monomial { k: [0, 0], alpha: [0, 0], m: 0 };

    pub const fn new(k: Mode, alpha: MultiIndex, m: u32) -> Self {
        Monomial { k, alpha, m }
    }

    pub fn xi_degree(&self) -> u32 {
        self.alpha[0] + self.alpha[1]
    }

    /// Total degree in `(ξ, ε)`.
    pub fn degree(&self) -> u32 {
        self.xi_degree() + self.m
    }

    pub fn is_x_independent(&self) -> bool {
        self.k == [0, 0]
    }

    pub fn fits(&self, caps: &Caps) -> bool {
        self.k[0].abs() <= caps.k_max
            && self.k[1].abs() <= caps.k_max
            && self.xi_degree() <= caps.n_xi
            && self.m <= caps.m_eps
    }

    /// Value of the term with unit coefficient.
    pub fn eval(&self, x: [f64; 2], xi: [Complex64; 2], eps: f64) -> Complex64 {
        let phase = self.k[0] as f64 * x[0] + self.k[1] as f64 * x[1];
        Complex64::from_polar(1.0, phase)
            * xi[0].powu(self.alpha[0])
            * xi[1].powu(self.alpha[1])
            * eps.powi(self.m as i32)
    }
}

/// Truncation caps: `‖k‖_∞ ≤ k_max`, `|α| ≤ n_xi`, `m ≤ m_eps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub k_max: i32,
    pub n_xi: u32,
    pub m_eps: u32,
}

impl Caps {
    pub const fn new(k_max: i32, n_xi: u32, m_eps: u32) -> Self {
        Caps { k_max, n_xi, m_eps }
    }
}

impl Default for Caps {
    fn default() -> Self {
        Caps::new(8, 8, 8)
    }
}

/// Sparse truncated symbol in `(x, ξ, ε)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalSymbol {
    caps: Caps,
    real_on_real: bool,
    truncated: bool,
    terms: BTreeMap<Monomial, Complex64>,
}

/// Collects terms under caps and an optional degree bound.
///
/// Keys above `max_degree` are discarded silently (graded truncation is a
/// request, not a loss); keys outside the caps set the truncation flag.
#[derive(Debug)]
pub(crate) struct Accum {
    caps: Caps,
    max_degree: Option<u32>,
    terms: BTreeMap<Monomial, Complex64>,
    dropped: bool,
}

impl Accum {
    pub(crate) fn new(caps: Caps, max_degree: Option<u32>) -> Self {
        Accum { caps, max_degree, terms: BTreeMap::new(), dropped: false }
    }

    #[inline]
    pub(crate) fn add(&mut self, mono: Monomial, c: Complex64) {
        if c == Complex64::new(0.0, 0.0) {
            return;
        }
        if let Some(d) = self.max_degree {
            if mono.degree() > d {
                return;
            }
        }
        if !mono.fits(&self.caps) {
            self.dropped = true;
            return;
        }
        *self.terms.entry(mono).or_default() += c;
    }

    pub(crate) fn finish(self, real_on_real: bool, truncated: bool) -> ClassicalSymbol {
        let mut s = ClassicalSymbol {
            caps: self.caps,
            real_on_real,
            truncated: truncated || self.dropped,
            terms: self.terms,
        };
        s.prune();
        s
    }
}

impl ClassicalSymbol {
    pub fn zero(caps: Caps) -> Self {
        ClassicalSymbol { caps, real_on_real: true, truncated: false, terms: BTreeMap::new() }
    }

    pub fn constant(caps: Caps, c: Complex64) -> Self {
        let mut s = Self::zero(caps);
        s.real_on_real = c.im == 0.0;
        if c != Complex64::new(0.0, 0.0) {
            s.terms.insert(Monomial::ONE, c);
        }
        s
    }

    /// Builds a symbol from explicit terms; duplicate keys are summed.
    ///
    /// The result is flagged real-on-real only when the terms satisfy the
    /// conjugate symmetry.
    pub fn from_terms<I>(caps: Caps, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Monomial, Complex64)>,
    {
        let mut map: BTreeMap<Monomial, Complex64> = BTreeMap::new();
        for (mono, c) in terms {
            if !mono.fits(&caps) {
                return Err(Error::KeyOutsideCaps(mono, caps));
            }
            *map.entry(mono).or_default() += c;
        }
        let mut s = ClassicalSymbol { caps, real_on_real: false, truncated: false, terms: map };
        s.prune();
        s.real_on_real = s.check_real_on_real();
        Ok(s)
    }

    pub fn monomial(caps: Caps, mono: Monomial, c: Complex64) -> Result<Self> {
        Self::from_terms(caps, [(mono, c)])
    }

    /// The linear form `a·ξ`.
    pub fn linear_xi(caps: Caps, a: [f64; 2]) -> Result<Self> {
        Self::from_terms(
            caps,
            [
                (Monomial::new([0, 0], [1, 0], 0), Complex64::from(a[0])),
                (Monomial::new([0, 0], [0, 1], 0), Complex64::from(a[1])),
            ],
        )
    }

    pub fn caps(&self) -> Caps {
        self.caps
    }

    pub fn is_real_on_real(&self) -> bool {
        self.real_on_real
    }

    /// True if any operation producing this symbol dropped keys outside the caps.
    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Complex64)> + '_ {
        self.terms.iter()
    }

    pub fn coeff(&self, mono: &Monomial) -> Complex64 {
        self.terms.get(mono).copied().unwrap_or_default()
    }

    /// Verifies `c(−k,α,m) = conj c(k,α,m)` to a relative tolerance.
    pub fn check_real_on_real(&self) -> bool {
        let tol = 1e-12 * self.max_norm().max(f64::MIN_POSITIVE);
        self.terms.iter().all(|(mono, c)| {
            let mirror = Monomial::new([-mono.k[0], -mono.k[1]], mono.alpha, mono.m);
            (self.coeff(&mirror) - c.conj()).norm() <= tol
        })
    }

    /// Declares the symbol real-on-real after checking the symmetry.
    pub fn into_real_on_real(mut self) -> Result<Self> {
        if !self.check_real_on_real() {
            return Err(Error::Invalid("symbol flagged real_on_real is not conjugate-symmetric".into()));
        }
        self.real_on_real = true;
        Ok(self)
    }

    pub(crate) fn with_flags(mut self, real_on_real: bool, truncated: bool) -> Self {
        self.real_on_real = real_on_real;
        self.truncated |= truncated;
        self
    }

    fn prune(&mut self) {
        let max = self.max_norm();
        if max == 0.0 {
            self.terms.clear();
            return;
        }
        let tol = PRUNE_REL * max;
        self.terms.retain(|_, c| c.norm() > tol);
    }

    pub fn max_norm(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn l1_norm(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).sum()
    }

    pub fn min_degree(&self) -> Option<u32> {
        self.terms.keys().map(Monomial::degree).min()
    }

    pub fn max_degree(&self) -> Option<u32> {
        self.terms.keys().map(Monomial::degree).max()
    }

    pub fn max_mode(&self) -> i32 {
        self.terms.keys().map(|m| m.k[0].abs().max(m.k[1].abs())).max().unwrap_or(0)
    }

    fn check_caps(&self, other: &Self) -> Result<()> {
        if self.caps != other.caps {
            return Err(Error::CapMismatch(self.caps, other.caps));
        }
        Ok(())
    }

    /// Keeps the terms selected by `pred`.
    pub fn filter<F: Fn(&Monomial) -> bool>(&self, pred: F) -> Self {
        ClassicalSymbol {
            caps: self.caps,
            real_on_real: self.real_on_real,
            truncated: self.truncated,
            terms: self.terms.iter().filter(|(m, _)| pred(m)).map(|(m, c)| (*m, *c)).collect(),
        }
    }

    /// Retains only `k = (0,0)` keys.
    pub fn torus_average(&self) -> Self {
        self.filter(Monomial::is_x_independent)
    }

    pub fn x_dependent_part(&self) -> Self {
        self.filter(|m| !m.is_x_independent())
    }

    pub fn is_x_independent(&self) -> bool {
        self.terms.keys().all(Monomial::is_x_independent)
    }

    /// Homogeneous part of `(ξ, ε)`-degree `d`.
    pub fn degree_part(&self, d: u32) -> Self {
        self.filter(|m| m.degree() == d)
    }

    pub fn truncate_degree(&self, d: u32) -> Self {
        self.filter(|m| m.degree() <= d)
    }

    /// Coefficient of `ε^m`, as a symbol with `m = 0`.
    pub fn eps_layer(&self, m: u32) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|(mono, _)| mono.m == m)
            .map(|(mono, c)| (Monomial::new(mono.k, mono.alpha, 0), *c))
            .collect();
        ClassicalSymbol { caps: self.caps, real_on_real: self.real_on_real, truncated: self.truncated, terms }
    }

    /// Multiplies by `ε^j`, dropping keys that leave the caps.
    pub fn shift_eps(&self, j: u32) -> Self {
        let mut acc = Accum::new(self.caps, None);
        for (mono, c) in &self.terms {
            acc.add(Monomial::new(mono.k, mono.alpha, mono.m + j), *c);
        }
        acc.finish(self.real_on_real, self.truncated)
    }

    /// Re-truncates into new caps.
    pub fn with_caps(&self, caps: Caps) -> Self {
        let mut acc = Accum::new(caps, None);
        for (mono, c) in &self.terms {
            acc.add(*mono, *c);
        }
        acc.finish(self.real_on_real, self.truncated)
    }

    pub fn evaluate(&self, x: [f64; 2], xi: [Complex64; 2], eps: f64) -> Complex64 {
        self.terms.iter().map(|(mono, c)| c * mono.eval(x, xi, eps)).sum()
    }

    /// Evaluation at real ξ.
    pub fn evaluate_real(&self, x: [f64; 2], xi: [f64; 2], eps: f64) -> Complex64 {
        self.evaluate(x, [xi[0].into(), xi[1].into()], eps)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_caps(other)?;
        let mut acc = Accum::new(self.caps, None);
        for (mono, c) in self.terms.iter().chain(other.terms.iter()) {
            acc.add(*mono, *c);
        }
        Ok(acc.finish(self.real_on_real && other.real_on_real, self.truncated || other.truncated))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.scale_real(-1.0)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut acc = Accum::new(self.caps, None);
        for (mono, v) in &self.terms {
            acc.add(*mono, v * c);
        }
        acc.finish(self.real_on_real && c.im == 0.0, self.truncated)
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(Complex64::from(c))
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.mul_graded(other, None)
    }

    /// Product with terms above total degree `max_degree` discarded.
    pub fn mul_graded(&self, other: &Self, max_degree: Option<u32>) -> Result<Self> {
        self.check_caps(other)?;
        let mut acc = Accum::new(self.caps, max_degree);
        for (mf, cf) in &self.terms {
            for (mg, cg) in &other.terms {
                let mono = Monomial::new(
                    [mf.k[0] + mg.k[0], mf.k[1] + mg.k[1]],
                    [mf.alpha[0] + mg.alpha[0], mf.alpha[1] + mg.alpha[1]],
                    mf.m + mg.m,
                );
                acc.add(mono, cf * cg);
            }
        }
        Ok(acc.finish(self.real_on_real && other.real_on_real, self.truncated || other.truncated))
    }

    /// `∂_{x_j}`.
    pub fn dx(&self, j: usize) -> Self {
        let mut acc = Accum::new(self.caps, None);
        for (mono, c) in &self.terms {
            acc.add(*mono, c * Complex64::new(0.0, mono.k[j] as f64));
        }
        acc.finish(self.real_on_real, self.truncated)
    }

    /// `∂_{ξ_j}`.
    pub fn dxi(&self, j: usize) -> Self {
        let mut acc = Accum::new(self.caps, None);
        for (mono, c) in &self.terms {
            if mono.alpha[j] == 0 {
                continue;
            }
            let mut alpha = mono.alpha;
            alpha[j] -= 1;
            acc.add(Monomial::new(mono.k, alpha, mono.m), c * mono.alpha[j] as f64);
        }
        acc.finish(self.real_on_real, self.truncated)
    }

    /// `a·∂_x`.
    pub fn transport(&self, a: [f64; 2]) -> Self {
        let mut acc = Accum::new(self.caps, None);
        for (mono, c) in &self.terms {
            let ak = a[0] * mono.k[0] as f64 + a[1] * mono.k[1] as f64;
            acc.add(*mono, c * Complex64::new(0.0, ak));
        }
        acc.finish(self.real_on_real, self.truncated)
    }
}
