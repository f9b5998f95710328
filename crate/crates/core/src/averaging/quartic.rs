use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Homogeneous quartic `Σ_{|α|=4} v_α x^α` in two variables.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct QuarticForm {
    pub v40: f64,
    pub v31: f64,
    pub v22: f64,
    pub v13: f64,
    pub v04: f64,
}

impl QuarticForm {
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let [a, b] = x;
        self.v40 * a.powi(4) + self.v31 * a.powi(3) * b + self.v22 * a * a * b * b + self.v13 * a * b.powi(3)
            + self.v04 * b.powi(4)
    }

    pub fn scaled(&self, c: f64) -> Self {
        QuarticForm { v40: c * self.v40, v31: c * self.v31, v22: c * self.v22, v13: c * self.v13, v04: c * self.v04 }
    }
}

/// `c11 I₁² + c12 I₁I₂ + c22 I₂²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticForm {
    pub c11: f64,
    pub c12: f64,
    pub c22: f64,
}

impl QuadraticForm {
    pub fn eval(&self, i1: f64, i2: f64) -> f64 {
        self.c11 * i1 * i1 + self.c12 * i1 * i2 + self.c22 * i2 * i2
    }
}

/// Average of the quartic along a non-resonant harmonic flow, in the actions
/// `I_j = (x_j² + ξ_j²)/2`.
pub fn harmonic_quartic_average(v: &QuarticForm) -> QuadraticForm {
    QuadraticForm { c11: 1.5 * v.v40, c12: v.v22, c22: 1.5 * v.v04 }
}

/// Critical values of `⟨p₄⟩` on the simplex `λ₁I₁ + λ₂I₂ = 1`, `I ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalValues {
    pub a1: f64,
    pub a2: f64,
    /// Interior critical value, present when
    /// `(λ₁v₂₂ − 3λ₂v₄₀)(λ₂v₂₂ − 3λ₁v₀₄) > 0`.
    pub a3: Option<f64>,
}

impl CriticalValues {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.a1, self.a2];
        v.extend(self.a3);
        v
    }
}

pub fn critical_values(lambda: [f64; 2], v: &QuarticForm) -> Result<CriticalValues> {
    let [l1, l2] = lambda;
    if !(l1 > 0.0 && l2 > 0.0) {
        return Err(Error::Precondition(format!("frequencies must be positive, got {lambda:?}")));
    }
    let avg = harmonic_quartic_average(v);
    let a1 = avg.eval(0.0, 1.0 / l2);
    let a2 = avg.eval(1.0 / l1, 0.0);
    // Critical line: (λ₁v₂₂ − 3λ₂v₄₀) I₁ = (λ₂v₂₂ − 3λ₁v₀₄) I₂.
    let alpha = l1 * v.v22 - 3.0 * l2 * v.v40;
    let beta = l2 * v.v22 - 3.0 * l1 * v.v04;
    let a3 = (alpha * beta > 0.0).then(|| {
        let t = 1.0 / (l1 * beta + l2 * alpha);
        avg.eval(beta * t, alpha * t)
    });
    Ok(CriticalValues { a1, a2, a3 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn averages_of_pure_terms() {
        let q = harmonic_quartic_average(&QuarticForm { v40: 1.0, ..Default::default() });
        assert_eq!((q.c11, q.c12, q.c22), (1.5, 0.0, 0.0));
        let q = harmonic_quartic_average(&QuarticForm { v22: 1.0, ..Default::default() });
        assert_eq!((q.c11, q.c12, q.c22), (0.0, 1.0, 0.0));
    }

    #[test]
    fn critical_value_examples() {
        let cv = critical_values([1.0, 2f64.sqrt()], &QuarticForm { v40: 1.0, ..Default::default() }).unwrap();
        assert_eq!(cv.a1, 0.0);
        assert!((cv.a2 - 1.5).abs() < 1e-15);
        assert!(cv.a3.is_none());

        let v = QuarticForm { v40: 1.0, v04: 1.0, ..Default::default() };
        let cv = critical_values([1.0, 1.0], &v).unwrap();
        assert!((cv.a3.unwrap() - 0.75).abs() < 1e-15);

        let scaled = critical_values([1.0, 1.0], &v.scaled(2.5)).unwrap();
        for (a, b) in scaled.to_vec().iter().zip(cv.to_vec()) {
            assert!((a - 2.5 * b).abs() < 1e-14);
        }
        assert!(critical_values([0.0, 1.0], &v).is_err());
    }
}
