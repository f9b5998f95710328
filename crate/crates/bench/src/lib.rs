//! Shared fixtures for the benchmarks.

use num_complex::Complex64;
use torilab::{Caps, ClassicalSymbol, FrequencyVector, Monomial, OperatorSymbol};

pub const PHI: f64 = 1.618_033_988_749_895;

pub fn golden() -> FrequencyVector {
    FrequencyVector::new([1.0, PHI], 2.0, 2.0).unwrap()
}

pub fn symbol(caps: Caps, terms: &[([i32; 2], [u32; 2], u32, f64, f64)]) -> ClassicalSymbol {
    ClassicalSymbol::from_terms(
        caps,
        terms.iter().map(|&(k, a, m, re, im)| (Monomial::new(k, a, m), Complex64::new(re, im))),
    )
    .unwrap()
}

/// `a·ξ + ½|ξ|² + iε(ξ₂ + cos x₁ + cos(x₁ − x₂)) + ε sin x₂ ξ₁`.
pub fn model(caps: Caps) -> OperatorSymbol {
    OperatorSymbol::from_leading(symbol(
        caps,
        &[
            ([0, 0], [1, 0], 0, 1.0, 0.0),
            ([0, 0], [0, 1], 0, PHI, 0.0),
            ([0, 0], [2, 0], 0, 0.5, 0.0),
            ([0, 0], [0, 2], 0, 0.5, 0.0),
            ([0, 0], [0, 1], 1, 0.0, 1.0),
            ([1, 0], [0, 0], 1, 0.0, 0.5),
            ([-1, 0], [0, 0], 1, 0.0, 0.5),
            ([1, -1], [0, 0], 1, 0.0, 0.5),
            ([-1, 1], [0, 0], 1, 0.0, 0.5),
            ([0, 1], [1, 0], 1, 0.5, 0.0),
            ([0, -1], [1, 0], 1, -0.5, 0.0),
        ],
    ))
}

/// Sparse right-hand side with modes up to `k_max` and `|α| ≤ 3`.
pub fn sparse_rhs(caps: Caps, k_max: i32) -> ClassicalSymbol {
    let mut terms = Vec::new();
    for k1 in -k_max..=k_max {
        for k2 in [-k_max, -1, 1, k_max] {
            let (a, m) = ([(k1.unsigned_abs() % 3).min(2), 1], (k2.unsigned_abs() % 2));
            terms.push(([k1, k2], a, m, 1.0 / (1 + k1.abs() + k2.abs()) as f64, 0.25));
        }
    }
    symbol(caps, &terms)
}
