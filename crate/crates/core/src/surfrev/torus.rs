use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use super::{OrbitPoint, SurfaceProfile};
use crate::averaging::IntervalSet;
use crate::error::{Error, Result};
use crate::numerics::{bisect, gauss_legendre, gcd};

const J_TOL: f64 = 1e-13;
const J_MAX_LEVEL: usize = 6;
const THETA_NODES: usize = 64;

fn check_a(a: f64) -> Result<()> {
    if !(a.is_finite() && a != 0.0 && a.abs() < 1.0) {
        return Err(Error::Precondition(format!("need 0 < |a| < 1, got {a}")));
    }
    Ok(())
}

/// Panel breakpoints on `[−π/2, π/2]`, graded geometrically toward the ends
/// where `1/(1−x²)` has width `~|a|`.
fn panels(a: f64) -> Vec<f64> {
    let half = 0.5 * PI;
    let mut gaps = Vec::new();
    let mut g = a.abs().max(1e-12);
    while g < 0.25 * half {
        gaps.push(g);
        g *= 4.0;
    }
    let mut pts: Vec<f64> = gaps.iter().map(|g| -half + g).collect();
    pts.insert(0, -half);
    pts.extend(gaps.iter().rev().map(|g| half - g));
    pts.push(half);
    pts
}

/// `J(ψ_i, a) = ∫_{−π/2}^{π/2} ψ_i(c(x)) h(x) dt` with `x = √(1−a²) sin t`,
/// for several `ψ_i` sharing the orbit points. Composite Gauss–Legendre with
/// doubling until every component is stable to `1e−13` relative to `∫|ψ_i h|`.
pub(super) fn j_moments(sp: &SurfaceProfile, a: f64, psis: &[&dyn Fn(&OrbitPoint) -> f64]) -> (Vec<f64>, bool) {
    let breaks = panels(a);
    let eval = |level: usize| -> (Vec<f64>, Vec<f64>) {
        let mut acc = vec![0.0; psis.len()];
        let mut mass = vec![0.0; psis.len()];
        for w2 in breaks.windows(2) {
            let (mid, half) = (0.5 * (w2[0] + w2[1]), 0.5 * (w2[1] - w2[0]));
            for &(node, w) in gauss_legendre(level) {
                let p = sp.torus_point(a, mid + half * node);
                for ((slot, m), psi) in acc.iter_mut().zip(mass.iter_mut()).zip(psis) {
                    let v = w * half * psi(&p) * p.h;
                    *slot += v;
                    *m += v.abs();
                }
            }
        }
        (acc, mass)
    };
    let (mut prev, _) = eval(0);
    for level in 1..=J_MAX_LEVEL {
        let (cur, mass) = eval(level);
        let stable =
            cur.iter().zip(&prev).zip(&mass).all(|((c, p), m)| (c - p).abs() <= J_TOL * m.max(f64::MIN_POSITIVE));
        if stable {
            return (cur, true);
        }
        prev = cur;
    }
    (prev, false)
}

fn converged(values: (Vec<f64>, bool), what: &str, a: f64) -> Result<Vec<f64>> {
    if values.1 {
        Ok(values.0)
    } else {
        Err(Error::NoConvergence(format!("{what} quadrature at a = {a}")))
    }
}

/// `J(ψ, a) = ∫ ψ f (f²−a²)^{−1/2} ds` over the `s`-range of the torus.
pub fn j_integral<F: Fn(f64) -> f64>(sp: &SurfaceProfile, psi: F, a: f64) -> Result<f64> {
    check_a(a)?;
    let v = converged(j_moments(sp, a, &[&|p: &OrbitPoint| psi(p.s)]), "J", a)?;
    Ok(v[0])
}

/// `(s₋, s₊)` with `f(s±) = |a|` on either side of the maximum.
pub fn turning_points(sp: &SurfaceProfile, a: f64) -> Result<(f64, f64)> {
    check_a(a)?;
    let drop = 1.0 - a.abs();
    Ok((sp.s0 + sp.branch_offset(drop, true), sp.s0 + sp.branch_offset(drop, false)))
}

/// `I₁ = 2∫(E − F²/f²)^{1/2} ds`.
pub fn action_i1(sp: &SurfaceProfile, e: f64, f: f64) -> Result<f64> {
    if !(e > 0.0 && f != 0.0 && f * f < e) {
        return Err(Error::Precondition(format!("need 0 < |F| < E^(1/2), got E = {e}, F = {f}")));
    }
    let a = f / e.sqrt();
    let gap = (1.0 - a) * (1.0 + a);
    let v = converged(j_moments(sp, a, &[&|p: &OrbitPoint| (gap - p.x * p.x) / (p.f * p.f)]), "I1", a)?;
    Ok(2.0 * e.sqrt() * v[0])
}

/// `ω(a) = (a/π) J(f^{−2}, a)`.
pub fn rotation_number(sp: &SurfaceProfile, a: f64) -> Result<f64> {
    check_a(a)?;
    let v = converged(j_moments(sp, a, &[&|p: &OrbitPoint| 1.0 / (p.f * p.f)]), "rotation", a)?;
    Ok(a / PI * v[0])
}

/// `⟨q0⟩_{Λ_a} = J(q0, a) / J(1, a)`.
pub fn torus_average<F: Fn(f64) -> f64>(sp: &SurfaceProfile, q0: F, a: f64) -> Result<f64> {
    check_a(a)?;
    let v = converged(j_moments(sp, a, &[&|p: &OrbitPoint| q0(p.s), &|_: &OrbitPoint| 1.0]), "average", a)?;
    Ok(v[0] / v[1])
}

/// Solves `ω(a) = omega` on `[lo, hi]` by bisection.
pub fn a_for_rotation(sp: &SurfaceProfile, omega: f64, lo: f64, hi: f64) -> Result<f64> {
    check_a(lo)?;
    check_a(hi)?;
    let g = |a: f64| rotation_number(sp, a).map_or(f64::NAN, |w| w - omega);
    bisect(g, lo, hi, 1e-15).ok_or_else(|| Error::Precondition(format!("rotation number {omega} not bracketed by [{lo}, {hi}]")))
}

/// One full `s`-oscillation sampled at `M` equispaced phases `τ`: time
/// weights `h` and the angle advance `Θ(τ) = ∫_0^τ a h/(1−x²)`.
struct Orbit {
    s: Vec<f64>,
    weight: Vec<f64>,
    theta: Vec<f64>,
}

fn orbit(sp: &SurfaceProfile, a: f64, m: usize) -> Orbit {
    let pts: Vec<OrbitPoint> = (0..m).map(|j| sp.torus_point(a, TAU * j as f64 / m as f64)).collect();
    let g: Vec<f64> = pts.iter().map(|p| a * p.h / (p.f * p.f)).collect();
    // Termwise integration of the Fourier series of g.
    let half = m / 2;
    let coeff = |k: i64| -> Complex64 {
        g.iter()
            .enumerate()
            .map(|(j, gj)| gj * Complex64::from_polar(1.0, -TAU * (k * j as i64) as f64 / m as f64))
            .sum::<Complex64>()
            / m as f64
    };
    let ghat: Vec<(i64, Complex64)> = (1..half as i64).map(|k| (k, coeff(k))).collect();
    let mean = g.iter().sum::<f64>() / m as f64;
    let theta = (0..m)
        .map(|j| {
            let tau = TAU * j as f64 / m as f64;
            let osc: f64 = ghat
                .iter()
                .map(|(k, c)| {
                    let kf = *k as f64;
                    // Pair k with −k: 2 Re[c (e^{ikτ} − 1)/(ik)].
                    2.0 * (c * (Complex64::from_polar(1.0, kf * tau) - 1.0) / Complex64::new(0.0, kf)).re
                })
                .sum();
            mean * tau + osc
        })
        .collect();
    Orbit { s: pts.iter().map(|p| p.s).collect(), weight: pts.iter().map(|p| p.h).collect(), theta }
}

impl Orbit {
    /// Time average over one `s`-period starting at angle `θ0`.
    fn phi<Q: Fn(f64, f64) -> f64>(&self, q: &Q, theta0: f64) -> f64 {
        let total: f64 = self.weight.iter().sum();
        self.s.iter().zip(&self.weight).zip(&self.theta).map(|((s, w), th)| w * q(*s, theta0 + th)).sum::<f64>() / total
    }
}

/// `Q_∞(a)`: for `rational = None` the point `⟨q⟩_{Λ_a}`; for `ω(a) = m/n`
/// supplied exactly, the range over `θ0` of the average along the closed
/// geodesics `(1/n) Σ_l Φ(θ0 + 2πlm/n)`.
pub fn q_infinity_interval<Q: Fn(f64, f64) -> f64>(
    sp: &SurfaceProfile,
    q: Q,
    a: f64,
    grid: usize,
    rational: Option<(i64, i64)>,
) -> Result<IntervalSet> {
    check_a(a)?;
    let Some((m, n)) = rational else {
        let qbar = |s: f64| (0..THETA_NODES).map(|i| q(s, TAU * i as f64 / THETA_NODES as f64)).sum::<f64>() / THETA_NODES as f64;
        return torus_average(sp, qbar, a).map(IntervalSet::point);
    };
    if n <= 0 {
        return Err(Error::Precondition(format!("rotation denominator must be positive, got {n}")));
    }
    let g = gcd(m, n).max(1);
    let (m, n) = (m / g, n / g);
    let range_on = |orb: &Orbit, points: usize| -> (f64, f64) {
        let period = TAU / n as f64;
        (0..points)
            .map(|i| {
                let theta0 = period * i as f64 / points as f64;
                (0..n).map(|l| orb.phi(&q, theta0 + TAU * (l * m) as f64 / n as f64)).sum::<f64>() / n as f64
            })
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let mut nodes = 128;
    let mut points = grid.max(16);
    let mut prev = range_on(&orbit(sp, a, nodes), points);
    loop {
        nodes *= 2;
        points *= 2;
        let cur = range_on(&orbit(sp, a, nodes), points);
        let stable = (cur.0 - prev.0).abs() < 1e-10 && (cur.1 - prev.1).abs() < 1e-10;
        prev = cur;
        if stable {
            return Ok(IntervalSet::interval(prev.0, prev.1));
        }
        if nodes >= 4096 {
            return Err(Error::NoConvergence(format!("resonant range at a = {a} did not settle")));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surfrev::{validate_profile, ProfileSpec};

    fn sphere() -> SurfaceProfile {
        validate_profile(&ProfileSpec::Sphere).unwrap()
    }

    fn ellipsoid() -> SurfaceProfile {
        validate_profile(&ProfileSpec::Ellipsoid { b: 0.3 }).unwrap()
    }

    #[test]
    fn sphere_turning_points() {
        let (lo, hi) = turning_points(&sphere(), 0.5).unwrap();
        assert!((lo - PI / 6.0).abs() < 1e-13);
        assert!((hi - 5.0 * PI / 6.0).abs() < 1e-13);
        let sp = ellipsoid();
        for a in [0.2, -0.6, 0.999999] {
            let (lo, hi) = turning_points(&sp, a).unwrap();
            assert!((sp.f(lo) - a.abs()).abs() <= 1e-12);
            assert!((sp.f(hi) - a.abs()).abs() <= 1e-12);
            assert!(lo < sp.s0 && sp.s0 < hi);
        }
        assert!(turning_points(&sp, 0.0).is_err());
        assert!(turning_points(&sp, 1.0).is_err());
    }

    #[test]
    fn sphere_closed_forms() {
        let sp = sphere();
        for i in 1..10 {
            let a = i as f64 / 10.0;
            assert!((rotation_number(&sp, a).unwrap() - 1.0).abs() < 1e-12);
            let avg = torus_average(&sp, |s| s.cos().powi(2), a).unwrap();
            assert!((avg - (1.0 - a * a) / 2.0).abs() < 1e-12);
            let i1 = action_i1(&sp, 1.0, a).unwrap();
            assert!((i1 - TAU * (1.0 - a)).abs() < 1e-11 * i1);
        }
    }

    #[test]
    fn action_homogeneity_and_pinch() {
        let sp = ellipsoid();
        let base = action_i1(&sp, 1.0, 0.4).unwrap();
        let scaled = action_i1(&sp, 9.0, 1.2).unwrap();
        assert!((scaled - 3.0 * base).abs() < 1e-12 * scaled);
        assert!(action_i1(&sp, 1.0, 0.999999).unwrap() < 1e-4);
        assert!(action_i1(&sp, 1.0, 1.0).is_err());
    }

    /// Direct quadrature in `s` with the endpoint singularities removed by
    /// `s = s_mid + half·sin φ` on each monotone branch.
    fn brute_j<F: Fn(f64) -> f64>(sp: &SurfaceProfile, psi: F, a: f64) -> f64 {
        let (lo, hi) = turning_points(sp, a).unwrap();
        let integrand = |s: f64| psi(s) * sp.f(s) / (sp.f(s).powi(2) - a * a).sqrt();
        let piece = |l: f64, r: f64, left_end: bool| {
            // Singular at one end only: s = end ± w (1 − cos φ) removes it.
            let w = r - l;
            crate::numerics::integrate_adaptive(
                |phi: f64| {
                    let u = 1.0 - phi.cos();
                    let s = if left_end { l + w * u } else { r - w * u };
                    integrand(s) * w * phi.sin()
                },
                0.0,
                PI / 2.0,
                1e-12,
            )
            .0
        };
        piece(lo, sp.s0, true) + piece(sp.s0, hi, false)
    }

    #[test]
    fn j_matches_direct_quadrature() {
        let sp = ellipsoid();
        for a in [0.3, 0.7] {
            let psi = |s: f64| sp.df(s).powi(2) + 0.5;
            let j = j_integral(&sp, psi, a).unwrap();
            let brute = brute_j(&sp, psi, a);
            assert!((j - brute).abs() < 1e-8 * brute, "a = {a}: {j} vs {brute}");
            let w = rotation_number(&sp, a).unwrap();
            let wb = a / PI * brute_j(&sp, |s| 1.0 / sp.f(s).powi(2), a);
            assert!((w - wb).abs() < 1e-8 * wb);
        }
    }

    #[test]
    fn parity_and_monotonicity() {
        let sp = ellipsoid();
        let q0 = |s: f64| sp.df(s).powi(2);
        for a in [0.2, 0.55, 0.9] {
            let w = rotation_number(&sp, a).unwrap();
            assert!((rotation_number(&sp, -a).unwrap() + w).abs() < 1e-14);
            let avg = torus_average(&sp, q0, a).unwrap();
            assert!((torus_average(&sp, q0, -a).unwrap() - avg).abs() < 1e-14);
            assert!((torus_average(&sp, |_| 1.0, a).unwrap() - 1.0).abs() < 1e-14);
            let j1 = j_integral(&sp, q0, a).unwrap();
            let j2 = j_integral(&sp, |s| q0(s) + 0.1, a).unwrap();
            assert!(j1 > 0.0 && j1 <= j2);
        }
    }

    #[test]
    fn oblate_rotation_number_increases() {
        let sp = validate_profile(&ProfileSpec::Ellipsoid { b: -0.2 }).unwrap();
        let w: Vec<f64> = (1..20).map(|i| rotation_number(&sp, i as f64 / 20.0).unwrap()).collect();
        assert!(w.windows(2).all(|p| p[1] > p[0]), "{w:?}");
    }

    #[test]
    fn leading_constant_near_equator() {
        // ⟨(f′)²⟩ ≈ |f″(s0)|(1−a²)/2 as |a| → 1.
        let sp = ellipsoid();
        let c = sp.d2f(sp.s0).abs() / 2.0;
        let a: f64 = 1.0 - 1e-6;
        let avg = torus_average(&sp, |s| sp.df(s).powi(2), a).unwrap();
        assert!((avg / (1.0 - a * a) - c).abs() < 1e-4 * c, "{} vs {c}", avg / (1.0 - a * a));
        assert!((c - 0.5).abs() > 0.1);
    }

    #[test]
    fn theta_independent_q_is_a_point() {
        let sp = ellipsoid();
        let a = a_for_rotation(&sp, 0.8, 0.05, 0.95).unwrap();
        assert!((rotation_number(&sp, a).unwrap() - 0.8).abs() < 1e-12);
        let q = |s: f64, _: f64| sp.df(s).powi(2);
        let iv = q_infinity_interval(&sp, q, a, 32, Some((4, 5))).unwrap();
        let (lo, hi) = iv.bounds().unwrap();
        let avg = torus_average(&sp, |s| sp.df(s).powi(2), a).unwrap();
        assert!(hi - lo < 1e-10 && (lo - avg).abs() < 1e-10);
        let irr = q_infinity_interval(&sp, q, a, 32, None).unwrap();
        assert!((irr.bounds().unwrap().0 - avg).abs() < 1e-13);
    }

    #[test]
    fn resonant_width_is_bounded_by_perturbation() {
        let sp = ellipsoid();
        let eta = 0.05;
        let a = a_for_rotation(&sp, 0.75, 0.05, 0.95).unwrap();
        // The profile is symmetric about s0, so half an s-period already
        // advances θ by πω: at ω = 3/4 only θ-modes divisible by 8 survive.
        let q = |s: f64, th: f64| sp.df(s).powi(2) + eta * (8.0 * th).cos();
        let iv = q_infinity_interval(&sp, q, a, 32, Some((3, 4))).unwrap();
        let (lo, hi) = iv.bounds().unwrap();
        assert!(hi - lo > 1e-4 && hi - lo <= 2.0 * eta, "width {}", hi - lo);
    }
}
