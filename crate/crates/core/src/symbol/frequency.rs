use serde::{Deserialize, Serialize};

use crate::averaging::check_diophantine;
use crate::error::{Error, Result};

/// Frequency `a` of the torus flow with Diophantine constants.
///
/// Certified means `|a·k| ≥ 1/(C0 |k|^{N0})` was checked for all nonzero
/// `k` with `‖k‖_∞ ≤ certified_cap`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyVector {
    pub a: [f64; 2],
    #[serde(rename = "C0")]
    pub c0: f64,
    #[serde(rename = "N0")]
    pub n0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certified_cap: Option<i32>,
}

impl FrequencyVector {
    pub fn new(a: [f64; 2], c0: f64, n0: f64) -> Result<Self> {
        let fv = FrequencyVector { a, c0, n0, certified_cap: None };
        fv.validate()?;
        Ok(fv)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a[0].is_finite() && self.a[1].is_finite()) || self.a == [0.0, 0.0] {
            return Err(Error::Invalid(format!("frequency must be finite and nonzero, got {:?}", self.a)));
        }
        if !(self.c0 > 0.0 && self.n0 > 0.0) {
            return Err(Error::Invalid("Diophantine constants C0, N0 must be positive".into()));
        }
        Ok(())
    }

    /// Checks the Diophantine inequality up to `k_cap` and records the cap.
    pub fn certify(mut self, k_cap: i32) -> Result<Self> {
        let report = check_diophantine(self.a, self.c0, self.n0, k_cap);
        if !report.ok {
            return Err(Error::SmallDivisor {
                k: report.worst_mode,
                divisor: self.dot(report.worst_mode).abs(),
                floor: 1.0 / (self.c0 * norm(report.worst_mode).powf(self.n0)),
            });
        }
        self.certified_cap = Some(k_cap);
        Ok(self)
    }

    pub fn dot(&self, k: [i32; 2]) -> f64 {
        self.a[0] * k[0] as f64 + self.a[1] * k[1] as f64
    }

    /// Divisor floor `1e−3 / (C0 |k|^{N0})` below which division is refused.
    pub fn guard(&self, k: [i32; 2]) -> f64 {
        (1e-3 / (self.c0 * norm(k).powf(self.n0))).max(1e-14)
    }
}

pub(crate) fn norm(k: [i32; 2]) -> f64 {
    ((k[0] as f64).powi(2) + (k[1] as f64).powi(2)).sqrt()
}
