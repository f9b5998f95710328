//! Flow averages along linear torus flows, Diophantine checks, resonant
//! ranges, and averages of quartics along harmonic flows.

mod intervals;
mod kernel;
mod quartic;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gcd, loglog_slope};
use crate::symbol::{ClassicalSymbol, Mode, Monomial};

pub use intervals::IntervalSet;
pub use kernel::{SmoothingKernel, MAX_MOMENT};
pub use quartic::{critical_values, harmonic_quartic_average, CriticalValues, QuadraticForm, QuarticForm};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiophantineReport {
    pub ok: bool,
    pub worst_mode: Mode,
    /// `min |a·k| |k|^{N0}` over the checked modes.
    pub worst_ratio: f64,
}

/// Checks `|a·k| C0 |k|^{N0} ≥ 1` for `0 ≠ k`, `‖k‖_∞ ≤ k_cap`.
///
/// Only one of `±k` is visited (first nonzero component positive); ties keep
/// the first mode found, which is the shortest on a resonance line.
pub fn check_diophantine(a: [f64; 2], c0: f64, n0: f64, k_cap: i32) -> DiophantineReport {
    let mut worst = ([0, 1], f64::INFINITY);
    let k_cap = k_cap.max(1);
    for k1 in 0..=k_cap {
        let lo = if k1 == 0 { 1 } else { -k_cap };
        for k2 in lo..=k_cap {
            let norm = ((k1 * k1 + k2 * k2) as f64).sqrt();
            let ratio = (a[0] * k1 as f64 + a[1] * k2 as f64).abs() * norm.powf(n0);
            if ratio < worst.1 {
                worst = ([k1, k2], ratio);
            }
        }
    }
    DiophantineReport { ok: worst.1 * c0 >= 1.0, worst_mode: worst.0, worst_ratio: worst.1 }
}

/// A frequency direction: exact integers or a floating vector.
///
/// Rationality is never guessed from floating values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frequency {
    Rational([i64; 2]),
    Irrational([f64; 2]),
}

fn split_modes(q: &ClassicalSymbol) -> BTreeMap<Mode, ClassicalSymbol> {
    let mut modes: BTreeMap<Mode, Vec<(Monomial, Complex64)>> = BTreeMap::new();
    for (m, c) in q.terms() {
        modes.entry(m.k).or_default().push((*m, *c));
    }
    modes
        .into_iter()
        .map(|(k, terms)| {
            let s = ClassicalSymbol::from_terms(q.caps(), terms).expect("keys come from a valid symbol");
            (k, s)
        })
        .collect()
}

/// Smoothed flow average `Σ_k e^{ik·x} q̂(k, ξ) K̂(T p′_N(ξ)·k)`.
///
/// With `p′_N(ξ) = ω₀ + δ(ξ, ε)`, the multiplier is expanded as
/// `Σ_j K̂^{(j)}(T ω₀·k) (T δ·k)^j / j!` up to the caps.
pub fn flow_average(
    q: &ClassicalSymbol,
    p_n: &ClassicalSymbol,
    t: f64,
    kernel: &SmoothingKernel,
) -> Result<ClassicalSymbol> {
    if !p_n.is_x_independent() {
        return Err(Error::Precondition("p_N must be x-independent".into()));
    }
    if !(t > 0.0) {
        return Err(Error::Precondition(format!("averaging time must be positive, got {t}")));
    }
    let caps = q.caps();
    let p_n = p_n.with_caps(caps);
    let grad = [p_n.dxi(0), p_n.dxi(1)];
    let omega0 = [grad[0].coeff(&Monomial::ONE).re, grad[1].coeff(&Monomial::ONE).re];
    let delta = [grad[0].filter(|m| m.degree() > 0), grad[1].filter(|m| m.degree() > 0)];
    let max_power = ((caps.n_xi + caps.m_eps) as usize).min(MAX_MOMENT);

    let mut out = ClassicalSymbol::zero(caps);
    for (k, part) in split_modes(q) {
        if k == [0, 0] {
            out = out.add(&part)?;
            continue;
        }
        let s0 = t * (omega0[0] * k[0] as f64 + omega0[1] * k[1] as f64);
        let dk = delta[0].scale_real(t * k[0] as f64).add(&delta[1].scale_real(t * k[1] as f64))?;
        let mut mult = ClassicalSymbol::constant(caps, kernel.transform(s0));
        let mut power = ClassicalSymbol::constant(caps, 1.0.into());
        let mut fact = 1.0;
        for j in 1..=max_power {
            if dk.is_zero() {
                break;
            }
            power = power.mul(&dk)?;
            if power.is_zero() {
                break;
            }
            fact *= j as f64;
            mult = mult.add(&power.scale(kernel.transform_derivative(s0, j) / fact))?;
        }
        out = out.add(&part.mul(&mult)?)?;
    }
    Ok(out)
}

/// `sup_x |s(x, 0, 0)|` on a uniform `grid × grid` sampling of the torus.
pub fn sup_over_torus(s: &ClassicalSymbol, grid: usize) -> f64 {
    let modes: Vec<(Mode, Complex64)> = split_modes(s)
        .into_iter()
        .map(|(k, part)| (k, part.coeff(&Monomial::new(k, [0, 0], 0))))
        .collect();
    (0..grid)
        .into_par_iter()
        .map(|i| {
            let x1 = 2.0 * PI * i as f64 / grid as f64;
            (0..grid)
                .map(|j| {
                    let x2 = 2.0 * PI * j as f64 / grid as f64;
                    modes
                        .iter()
                        .map(|(k, c)| c * Complex64::from_polar(1.0, k[0] as f64 * x1 + k[1] as f64 * x2))
                        .sum::<Complex64>()
                        .norm()
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Measured decay of `sup_x |⟨q⟩_{T,K} − ⟨q⟩|` in `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub ts: Vec<f64>,
    pub sup_diff: Vec<f64>,
    /// Minus the least-squares log-log slope.
    pub exponent: f64,
}

pub fn flow_average_decay(
    q: &ClassicalSymbol,
    p_n: &ClassicalSymbol,
    kernel: &SmoothingKernel,
    ts: &[f64],
    grid: usize,
) -> Result<DecayFit> {
    let avg = q.torus_average();
    let sup_diff = ts
        .iter()
        .map(|&t| Ok(sup_over_torus(&flow_average(q, p_n, t, kernel)?.sub(&avg)?, grid)))
        .collect::<Result<Vec<f64>>>()?;
    let exponent = -loglog_slope(ts, &sup_diff);
    Ok(DecayFit { ts: ts.to_vec(), sup_diff, exponent })
}

/// Range over the torus of `Re ⟨q⟩_{T,K}` at `ξ = 0, ε = 0`.
pub fn flow_range(
    q: &ClassicalSymbol,
    p_n: &ClassicalSymbol,
    t: f64,
    kernel: &SmoothingKernel,
    grid: usize,
) -> Result<IntervalSet> {
    let avg = flow_average(q, p_n, t, kernel)?.filter(|m| m.degree() == 0);
    let vals: Vec<f64> = (0..grid * grid)
        .into_par_iter()
        .map(|idx| {
            let x = [2.0 * PI * (idx / grid) as f64 / grid as f64, 2.0 * PI * (idx % grid) as f64 / grid as f64];
            avg.evaluate_real(x, [0.0, 0.0], 0.0).re
        })
        .collect();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(IntervalSet::interval(lo, hi))
}

fn rational_direction(b: &Frequency) -> Result<[i64; 2]> {
    match *b {
        Frequency::Irrational(_) => Err(Error::Precondition(
            "resonant average needs an exact rational direction; use flow_average for floating frequencies".into(),
        )),
        Frequency::Rational([0, 0]) => Err(Error::Precondition("zero frequency direction".into())),
        Frequency::Rational(b) => Ok(b),
    }
}

/// Limit of flow averages along the rational direction `b`: keeps `b·k = 0`.
pub fn resonant_average(q: &ClassicalSymbol, b: &Frequency) -> Result<ClassicalSymbol> {
    let b = rational_direction(b)?;
    Ok(q.filter(|m| b[0] * m.k[0] as i64 + b[1] * m.k[1] as i64 == 0))
}

/// `Q_∞`: a point for irrational directions, else the range over the torus of
/// `Re` of the resonant average at `ξ = 0, ε = 0`.
///
/// The resonant part only depends on `θ = k*·x` with `k*` the primitive mode
/// orthogonal to `b`, so the range is taken over `θ`, doubling the grid
/// until both endpoints move by less than `1e−8`.
pub fn q_infinity_range(q: &ClassicalSymbol, b: &Frequency, grid: usize) -> IntervalSet {
    let base = q.filter(|m| m.degree() == 0);
    let b = match b {
        Frequency::Irrational(_) | Frequency::Rational([0, 0]) => {
            return IntervalSet::point(base.coeff(&Monomial::ONE).re);
        }
        Frequency::Rational(b) => *b,
    };
    let g = gcd(b[0], b[1]);
    let kstar = [b[1] / g, -b[0] / g];
    let mut coeffs: Vec<(i64, Complex64)> = Vec::new();
    for (m, c) in base.terms() {
        let k = [m.k[0] as i64, m.k[1] as i64];
        if b[0] * k[0] + b[1] * k[1] != 0 {
            continue;
        }
        let j = if kstar[0] != 0 { k[0] / kstar[0] } else { k[1] / kstar[1] };
        coeffs.push((j, *c));
    }
    let f = |theta: f64| -> f64 {
        coeffs.iter().map(|(j, c)| (c * Complex64::from_polar(1.0, *j as f64 * theta)).re).sum()
    };
    let range_on = |n: usize| -> (f64, f64) {
        (0..n).map(|i| f(2.0 * PI * i as f64 / n as f64)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
    };
    let mut n = grid.max(8);
    let mut prev = range_on(n);
    while n < 1 << 22 {
        n *= 2;
        let cur = range_on(n);
        let stable = (cur.0 - prev.0).abs() < 1e-8 && (cur.1 - prev.1).abs() < 1e-8;
        prev = cur;
        if stable {
            break;
        }
    }
    IntervalSet::interval(prev.0, prev.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrableCheck {
    pub holds: bool,
    /// `min(inf_{μ∈[b̃,b]} Q_∞ − F0, F0 − sup_{μ∈[−b,−b̃]} Q_∞)`.
    pub margin: f64,
}

/// Separation of `F0` from the `Q_∞` ranges of a one-parameter family of tori.
pub fn verify_integrable_condition<Q, W>(
    q_family: Q,
    omega: W,
    f0: f64,
    b_tilde: f64,
    b: f64,
    grid: usize,
) -> Result<IntegrableCheck>
where
    Q: Fn(f64) -> ClassicalSymbol + Sync,
    W: Fn(f64) -> Frequency + Sync,
{
    if !(0.0 < b_tilde && b_tilde < b) {
        return Err(Error::Precondition(format!("need 0 < b_tilde < b, got {b_tilde}, {b}")));
    }
    let grid = grid.max(2);
    let mus: Vec<f64> = (0..grid).map(|i| b_tilde + (b - b_tilde) * i as f64 / (grid - 1) as f64).collect();
    let range = |mu: f64| q_infinity_range(&q_family(mu), &omega(mu), 64);
    let upper = mus
        .par_iter()
        .map(|&mu| range(mu).bounds().map_or(f64::INFINITY, |(lo, _)| lo))
        .reduce(|| f64::INFINITY, f64::min);
    let lower = mus
        .par_iter()
        .map(|&mu| range(-mu).bounds().map_or(f64::NEG_INFINITY, |(_, hi)| hi))
        .reduce(|| f64::NEG_INFINITY, f64::max);
    let margin = (upper - f0).min(f0 - lower);
    Ok(IntegrableCheck { holds: margin > 0.0, margin })
}
