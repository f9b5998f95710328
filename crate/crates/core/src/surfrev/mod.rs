//! Geodesic flow on simple analytic surfaces of revolution `ds² + f(s)²dθ²`:
//! profile validation, turning points, actions, rotation numbers, torus
//! averages and good-value sets.
//!
//! All orbit integrals go through the variable `x` with `f(c(x)) = √(1−x²)`,
//! `x > 0` on the branch `[0, s0]` and `x < 0` on `[s0, L]`. On the torus
//! `Λ_a` the substitution `x = √(1−a²) sin t` turns the time measure into
//! `h(x) dt` with `h(x) = x / f′(c(x))`, which is smooth through the equator.

mod good_set;
mod spline;
mod torus;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use spline::Spline;

pub use good_set::{good_set, GoodSample, GoodSetOptions, GoodSetReport, Preimage, ProbeReport};
pub use torus::{
    a_for_rotation, action_i1, j_integral, q_infinity_interval, rotation_number, torus_average, turning_points,
};

const SCAN_POINTS: usize = 4000;
const ANALYTIC_SLOPE_TOL: f64 = 1e-10;
const SAMPLED_SLOPE_TOL: f64 = 5e-3;
const CURVATURE_FLOOR: f64 = 1e-6;

/// Profile description as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProfileSpec {
    /// `f = sin s` on `[0, π]`.
    Sphere,
    /// `f = sin u (1 + b sin²u)` rescaled to unit maximum.
    Ellipsoid { b: f64 },
    /// Samples of `f` on an increasing grid starting at `s = 0`.
    Samples { s: Vec<f64>, f: Vec<f64> },
}

/// A validated profile, normalized so that `f(s0) = 1`.
///
/// Normalization is the homothety `f(s) ↦ f(κs)/κ` with `κ = f_max`, which
/// keeps the endpoint slopes `f′(0) = 1`, `f′(L) = −1`; `L` and `s0` refer to
/// the normalized profile.
#[derive(Debug, Clone, Serialize)]
pub struct SurfaceProfile {
    pub spec: ProfileSpec,
    #[serde(rename = "L")]
    pub l: f64,
    pub s0: f64,
    /// Maximum of the profile before normalization.
    pub f_max: f64,
    #[serde(skip)]
    raw: Raw,
}

#[derive(Debug, Clone)]
enum Raw {
    Sphere,
    Ellipsoid(f64),
    Samples { spline: Spline, u0: f64 },
}

/// Raw profile `g` in the offset `v = u − u0` from the maximum: returns
/// `(g_max − g, g′, g″)`.
impl Raw {
    fn eval(&self, v: f64, g_max: f64) -> (f64, f64, f64) {
        match self {
            Raw::Sphere => {
                let (sv, cv) = v.sin_cos();
                (2.0 * (0.5 * v).sin().powi(2), -sv, -cv)
            }
            Raw::Ellipsoid(b) => {
                let (sv, cv) = v.sin_cos();
                let drop = 2.0 * (0.5 * v).sin().powi(2) * (1.0 + b * (1.0 + cv + cv * cv));
                let d1 = -sv * (1.0 + 3.0 * b * cv * cv);
                let d2 = -cv * (1.0 + 3.0 * b * cv * cv) + 6.0 * b * cv * sv * sv;
                (drop, d1, d2)
            }
            Raw::Samples { spline, u0 } => {
                let (g, d1, d2) = spline.eval(u0 + v);
                (g_max - g, d1, d2)
            }
        }
    }
}

/// A point of the orbit parametrization: `s = c(x)`, `f(s) = √(1−x²)` and
/// the Jacobian `h(x) = x / f′(s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitPoint {
    pub x: f64,
    pub s: f64,
    pub f: f64,
    pub h: f64,
}

impl SurfaceProfile {
    /// `(1 − f, f′, f″)` at offset `t = s − s0`.
    fn at_offset(&self, t: f64) -> (f64, f64, f64) {
        let (drop, d1, d2) = self.raw.eval(self.f_max * t, self.f_max);
        (drop / self.f_max, d1, self.f_max * d2)
    }

    /// `1 − f(s)`, accurate near the maximum.
    pub fn one_minus_f(&self, s: f64) -> f64 {
        self.at_offset(s - self.s0).0
    }

    pub fn f(&self, s: f64) -> f64 {
        1.0 - self.one_minus_f(s)
    }

    pub fn df(&self, s: f64) -> f64 {
        self.at_offset(s - self.s0).1
    }

    pub fn d2f(&self, s: f64) -> f64 {
        self.at_offset(s - self.s0).2
    }

    /// `h(0) = 1/√|f″(s0)|`.
    pub fn h0(&self) -> f64 {
        1.0 / self.d2f(self.s0).abs().sqrt()
    }

    /// Solves `1 − f(s0 + t) = drop` on the branch selected by `left`.
    fn branch_offset(&self, drop: f64, left: bool) -> f64 {
        if drop <= 0.0 {
            return 0.0;
        }
        let phi = |t: f64| self.at_offset(t).0 - drop;
        let (mut lo, mut hi) = if left { (-self.s0, 0.0) } else { (0.0, self.l - self.s0) };
        // phi is negative at t = 0 and increases away from it on both branches.
        let outward = if left { -1.0 } else { 1.0 };
        let guess = outward * (2.0 * drop).sqrt() * self.h0();
        let mut t = guess.clamp(lo, hi);
        for _ in 0..200 {
            let val = phi(t);
            if val == 0.0 {
                return t;
            }
            let toward_outer = val < 0.0;
            if toward_outer == left {
                hi = t;
            } else {
                lo = t;
            }
            let slope = -self.at_offset(t).1;
            let mut next = t - val / slope;
            if !next.is_finite() || next <= lo || next >= hi {
                next = 0.5 * (lo + hi);
            }
            if (next - t).abs() <= 4.0 * f64::EPSILON * t.abs().max(1e-300) || hi - lo <= f64::EPSILON * self.l {
                return next;
            }
            t = next;
        }
        t
    }

    /// `c(x)` with its Jacobian, for `x ∈ [−1, 1]`.
    pub fn orbit_point(&self, x: f64) -> OrbitPoint {
        self.orbit_point_with(x, (1.0 - x * x).max(0.0).sqrt())
    }

    /// The point `x = √(1−a²) sin t` on `Λ_a`, with `f = √(cos²t + a² sin²t)`
    /// free of cancellation near the poles.
    pub(crate) fn torus_point(&self, a: f64, t: f64) -> OrbitPoint {
        let (st, ct) = t.sin_cos();
        let amp = ((1.0 - a) * (1.0 + a)).sqrt();
        self.orbit_point_with(amp * st, (ct * ct + a * a * st * st).sqrt())
    }

    fn orbit_point_with(&self, x: f64, f: f64) -> OrbitPoint {
        if x == 0.0 {
            return OrbitPoint { x, s: self.s0, f, h: self.h0() };
        }
        let drop = x * x / (1.0 + f);
        let t = self.branch_offset(drop, x > 0.0);
        OrbitPoint { x, s: self.s0 + t, f, h: x / self.at_offset(t).1 }
    }
}

/// Validates a profile: endpoint slopes, a unique sign change of `f′` and a
/// nondegenerate maximum. Normalizes `f(s0)` to 1.
pub fn validate_profile(spec: &ProfileSpec) -> Result<SurfaceProfile> {
    let (raw, l_raw, slope_tol) = match spec {
        ProfileSpec::Sphere => (Raw::Sphere, std::f64::consts::PI, ANALYTIC_SLOPE_TOL),
        ProfileSpec::Ellipsoid { b } => {
            if !b.is_finite() {
                return Err(Error::Invalid(format!("ellipsoid parameter must be finite, got {b}")));
            }
            (Raw::Ellipsoid(*b), std::f64::consts::PI, ANALYTIC_SLOPE_TOL)
        }
        ProfileSpec::Samples { s, f } => {
            let spline = sampled_spline(s, f)?;
            (Raw::Samples { spline, u0: 0.0 }, *s.last().expect("nonempty"), SAMPLED_SLOPE_TOL)
        }
    };
    // Raw slope on [0, l_raw]; analytic profiles are centred at π/2.
    let (raw, u0) = match raw {
        Raw::Samples { spline, .. } => {
            let u0 = locate_max(|u| spline.eval(u).1, l_raw)?;
            (Raw::Samples { spline, u0 }, u0)
        }
        other => {
            let u0 = 0.5 * l_raw;
            locate_max(|u| other.eval(u - u0, 1.0).1, l_raw)?;
            (other, u0)
        }
    };
    let slope = |u: f64| raw.eval(u - u0, 1.0).1;
    let (start, end) = (slope(0.0), slope(l_raw));
    if (start - 1.0).abs() > slope_tol || (end + 1.0).abs() > slope_tol {
        return Err(Error::Invalid(format!("endpoint slopes must be f'(0) = 1, f'(L) = -1, got {start}, {end}")));
    }
    let g_max = match &raw {
        Raw::Sphere => 1.0,
        Raw::Ellipsoid(b) => 1.0 + b,
        Raw::Samples { spline, u0 } => spline.eval(*u0).0,
    };
    if !(g_max > 0.0) {
        return Err(Error::Invalid("profile maximum must be positive".into()));
    }
    let curvature = quadratic_fit_curvature(&raw, g_max, l_raw);
    if !(curvature < -CURVATURE_FLOOR) {
        return Err(Error::Invalid(format!("degenerate maximum: fitted f'' = {curvature:e}")));
    }
    Ok(SurfaceProfile { spec: spec.clone(), l: l_raw / g_max, s0: u0 / g_max, f_max: g_max, raw })
}

/// Builds a sampled profile from a closure on `[0, l]` with `n` samples.
pub fn profile_from_fn<F: Fn(f64) -> f64>(f: F, l: f64, n: usize) -> Result<SurfaceProfile> {
    if !(l > 0.0 && l.is_finite()) || n < 8 {
        return Err(Error::Invalid(format!("need L > 0 and at least 8 samples, got L = {l}, n = {n}")));
    }
    let s: Vec<f64> = (0..n).map(|i| l * i as f64 / (n - 1) as f64).collect();
    let f = s.iter().map(|&si| f(si)).collect();
    validate_profile(&ProfileSpec::Samples { s, f })
}

fn sampled_spline(s: &[f64], f: &[f64]) -> Result<Spline> {
    if s.len() != f.len() || s.len() < 8 {
        return Err(Error::Invalid(format!("need matching s and f with at least 8 samples, got {} and {}", s.len(), f.len())));
    }
    if s[0] != 0.0 || s.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Invalid("sample grid must start at 0 and increase strictly".into()));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("profile samples must be finite".into()));
    }
    let top = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ends = f[0].abs().max(f[f.len() - 1].abs());
    if !(top > 0.0) || ends > 1e-6 * top {
        return Err(Error::Invalid("profile must vanish at both poles and be positive inside".into()));
    }
    Ok(Spline::natural(s, f))
}

/// Sign scan of `f′` on `[0, l]`: exactly one change, from `+` to `−`,
/// located by bisection.
fn locate_max<D: Fn(f64) -> f64>(slope: D, l: f64) -> Result<f64> {
    let step = l / SCAN_POINTS as f64;
    let values: Vec<f64> = (0..=SCAN_POINTS).map(|i| slope(i as f64 * step)).collect();
    let zero_tol = 1e-12;
    let flat = values.windows(2).filter(|w| w[0].abs() <= zero_tol && w[1].abs() <= zero_tol).count();
    if flat > 0 {
        return Err(Error::Invalid("degenerate maximum: f' vanishes on an interval".into()));
    }
    let signs: Vec<(usize, f64)> =
        values.iter().enumerate().filter(|(_, v)| v.abs() > zero_tol).map(|(i, v)| (i, v.signum())).collect();
    let changes: Vec<(usize, usize)> =
        signs.windows(2).filter(|w| w[0].1 != w[1].1).map(|w| (w[0].0, w[1].0)).collect();
    match changes.as_slice() {
        [(i, j)] if signs[0].1 > 0.0 => {
            crate::numerics::bisect(&slope, *i as f64 * step, *j as f64 * step, 1e-15 * l)
                .ok_or_else(|| Error::Invalid("could not bracket the maximum".into()))
        }
        [_] => Err(Error::Invalid("f' must change sign from + to -".into())),
        _ => Err(Error::Invalid(format!("profile has {} critical points, expected one", changes.len()))),
    }
}

/// Curvature at the maximum from a least-squares quadratic through nearby values.
fn quadratic_fit_curvature(raw: &Raw, g_max: f64, l: f64) -> f64 {
    let delta = 1e-3 * l;
    let offsets = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let ys: Vec<f64> = offsets.iter().map(|o| -raw.eval(o * delta, g_max).0).collect();
    // For symmetric nodes the quadratic coefficient decouples: c = Σ(o²−2)y / Σ(o²−2)² / δ².
    let num: f64 = offsets.iter().zip(&ys).map(|(o, y)| (o * o - 2.0) * y).sum();
    let den: f64 = offsets.iter().map(|o| (o * o - 2.0).powi(2)).sum();
    2.0 * num / den / (delta * delta)
}
