use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Caps, ClassicalSymbol, Monomial, SymbolDoc};
use crate::error::{Error, Result};

/// `p_0 + h p_1 + h² p_2 + …` with shared caps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OperatorDoc", into = "OperatorDoc")]
pub struct OperatorSymbol {
    h_terms: Vec<ClassicalSymbol>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorDoc {
    pub h_terms: Vec<SymbolDoc>,
}

impl TryFrom<OperatorDoc> for OperatorSymbol {
    type Error = Error;
    fn try_from(doc: OperatorDoc) -> Result<Self> {
        let terms = doc.h_terms.into_iter().map(ClassicalSymbol::try_from).collect::<Result<Vec<_>>>()?;
        OperatorSymbol::new(terms)
    }
}

impl From<OperatorSymbol> for OperatorDoc {
    fn from(op: OperatorSymbol) -> Self {
        OperatorDoc { h_terms: op.h_terms.into_iter().map(SymbolDoc::from).collect() }
    }
}

impl OperatorSymbol {
    pub fn new(h_terms: Vec<ClassicalSymbol>) -> Result<Self> {
        let first = h_terms.first().ok_or_else(|| Error::Invalid("operator symbol needs at least one h-term".into()))?;
        let caps = first.caps();
        if let Some(bad) = h_terms.iter().find(|t| t.caps() != caps) {
            return Err(Error::CapMismatch(caps, bad.caps()));
        }
        let mut op = OperatorSymbol { h_terms };
        op.trim();
        Ok(op)
    }

    pub fn from_leading(p0: ClassicalSymbol) -> Self {
        OperatorSymbol { h_terms: vec![p0] }
    }

    pub fn zero(caps: Caps) -> Self {
        Self::from_leading(ClassicalSymbol::zero(caps))
    }

    fn trim(&mut self) {
        while self.h_terms.len() > 1 && self.h_terms.last().is_some_and(ClassicalSymbol::is_zero) {
            self.h_terms.pop();
        }
    }

    pub fn caps(&self) -> Caps {
        self.h_terms[0].caps()
    }

    pub fn h_terms(&self) -> &[ClassicalSymbol] {
        &self.h_terms
    }

    /// The coefficient of `h^n` (zero beyond the stored length).
    pub fn h_term(&self, n: usize) -> ClassicalSymbol {
        self.h_terms.get(n).cloned().unwrap_or_else(|| ClassicalSymbol::zero(self.caps()))
    }

    pub fn is_zero(&self) -> bool {
        self.h_terms.iter().all(ClassicalSymbol::is_zero)
    }

    pub fn is_truncated(&self) -> bool {
        self.h_terms.iter().any(ClassicalSymbol::is_truncated)
    }

    pub fn is_x_independent(&self) -> bool {
        self.h_terms.iter().all(ClassicalSymbol::is_x_independent)
    }

    pub fn evaluate(&self, x: [f64; 2], xi: [Complex64; 2], eps: f64, h: f64) -> Complex64 {
        self.h_terms
            .iter()
            .enumerate()
            .map(|(n, t)| t.evaluate(x, xi, eps) * h.powi(n as i32))
            .sum()
    }

    fn zip_with<F>(&self, other: &Self, f: F) -> Result<Self>
    where
        F: Fn(&ClassicalSymbol, &ClassicalSymbol) -> Result<ClassicalSymbol>,
    {
        if self.caps() != other.caps() {
            return Err(Error::CapMismatch(self.caps(), other.caps()));
        }
        let n = self.h_terms.len().max(other.h_terms.len());
        let terms = (0..n).map(|j| f(&self.h_term(j), &other.h_term(j))).collect::<Result<Vec<_>>>()?;
        Self::new(terms)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, ClassicalSymbol::add)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, ClassicalSymbol::sub)
    }

    fn map<F: Fn(usize, &ClassicalSymbol) -> ClassicalSymbol>(&self, f: F) -> Self {
        let mut op = OperatorSymbol { h_terms: self.h_terms.iter().enumerate().map(|(n, t)| f(n, t)).collect() };
        op.trim();
        op
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map(|_, t| t.scale(c))
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.map(|_, t| t.scale_real(c))
    }

    pub fn torus_average(&self) -> Self {
        self.map(|_, t| t.torus_average())
    }

    pub fn x_dependent_part(&self) -> Self {
        self.map(|_, t| t.x_dependent_part())
    }

    /// Total degree of `h^n e^{ik·x} ξ^α ε^m` is `n + |α| + m`.
    pub fn truncate_total_degree(&self, d: u32) -> Self {
        let mut op = OperatorSymbol {
            h_terms: self
                .h_terms
                .iter()
                .enumerate()
                .take(d as usize + 1)
                .map(|(n, t)| t.truncate_degree(d - n as u32))
                .collect(),
        };
        op.trim();
        op
    }

    /// Homogeneous part of total degree `d`.
    pub fn total_degree_part(&self, d: u32) -> Self {
        self.map(|n, t| if n as u32 <= d { t.degree_part(d - n as u32) } else { t.filter(|_| false) })
    }

    /// `(h-power, monomial, coefficient)` for every stored term.
    pub fn iter_terms(&self) -> impl Iterator<Item = (usize, &Monomial, &Complex64)> + '_ {
        self.h_terms.iter().enumerate().flat_map(|(n, t)| t.terms().map(move |(m, c)| (n, m, c)))
    }

    pub fn max_norm(&self) -> f64 {
        self.h_terms.iter().map(ClassicalSymbol::max_norm).fold(0.0, f64::max)
    }

    pub fn l1_norm(&self) -> f64 {
        self.h_terms.iter().map(ClassicalSymbol::l1_norm).sum()
    }

    /// Largest `‖k‖_∞` among stored terms.
    pub fn max_mode(&self) -> i32 {
        self.h_terms.iter().map(ClassicalSymbol::max_mode).max().unwrap_or(0)
    }

    /// Multiplies by `h^j`.
    pub fn shift_h(&self, j: usize) -> Self {
        let mut terms = vec![ClassicalSymbol::zero(self.caps()); j];
        terms.extend(self.h_terms.iter().cloned());
        let mut op = OperatorSymbol { h_terms: terms };
        op.trim();
        op
    }

    /// Re-truncates every h-term into new caps.
    pub fn with_caps(&self, caps: Caps) -> Self {
        let mut op = OperatorSymbol { h_terms: self.h_terms.iter().map(|t| t.with_caps(caps)).collect() };
        op.trim();
        op
    }

    /// Replaces the `h^n` coefficient, padding with zeros.
    pub fn with_h_term(&self, n: usize, t: ClassicalSymbol) -> Result<Self> {
        let mut terms = self.h_terms.clone();
        while terms.len() <= n {
            terms.push(ClassicalSymbol::zero(self.caps()));
        }
        terms[n] = t;
        Self::new(terms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_mixed_caps() {
        assert!(OperatorSymbol::new(vec![]).is_err());
        let a = ClassicalSymbol::zero(Caps::new(2, 2, 2));
        let b = ClassicalSymbol::zero(Caps::new(3, 2, 2));
        assert!(matches!(OperatorSymbol::new(vec![a, b]), Err(Error::CapMismatch(..))));
    }

    #[test]
    fn total_degree_truncation_counts_h() {
        let caps = Caps::default();
        let one = ClassicalSymbol::constant(caps, 1.0.into());
        let xi = ClassicalSymbol::linear_xi(caps, [1.0, 0.0]).unwrap();
        let op = OperatorSymbol::new(vec![xi.clone(), xi, one]).unwrap();
        let t = op.truncate_total_degree(1);
        assert_eq!(t.h_terms().len(), 1);
        let part = op.total_degree_part(2);
        assert!(part.h_term(0).is_zero());
        assert_eq!(part.h_term(1).len(), 1);
        assert_eq!(part.h_term(2).len(), 1);
    }

    #[test]
    fn evaluate_sums_powers_of_h() {
        let caps = Caps::default();
        let one = ClassicalSymbol::constant(caps, 1.0.into());
        let op = OperatorSymbol::new(vec![one.clone(), one.clone(), one]).unwrap();
        let v = op.evaluate([0.0; 2], [0.0.into(); 2], 0.0, 0.5);
        assert!((v.re - 1.75).abs() < 1e-15);
    }
}
