//! Small numerical utilities shared by the modules.

use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;

const GL_LEVELS: usize = 10;
const GL_BASE: usize = 16;

/// Gauss–Legendre rule with `16·2^level` nodes on `[−1, 1]`, built once.
pub fn gauss_legendre(level: usize) -> &'static [(f64, f64)] {
    static RULES: [OnceLock<Vec<(f64, f64)>>; GL_LEVELS] = [const { OnceLock::new() }; GL_LEVELS];
    let level = level.min(GL_LEVELS - 1);
    RULES[level].get_or_init(|| {
        let n = GL_BASE << level;
        let rule = GaussLegendre::new(n.try_into().expect("nonzero"));
        rule.as_node_weight_pairs().to_vec()
    })
}

/// Integrates `f` over `[a, b]`, doubling the node count until two
/// successive rules agree to `rel_tol`. Returns the estimate and whether the
/// tolerance was met.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> (f64, bool) {
    let eval = |level: usize| -> f64 {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        gauss_legendre(level).iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>() * half
    };
    let mut prev = eval(0);
    for level in 1..GL_LEVELS {
        let cur = eval(level);
        if (cur - prev).abs() <= rel_tol * cur.abs().max(f64::MIN_POSITIVE) {
            return (cur, true);
        }
        prev = cur;
    }
    (prev, false)
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    ls_slope(&lx, &ly)
}

/// Root of `f` on `[lo, hi]` by bisection; `f(lo)` and `f(hi)` must differ in sign.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid == lo || mid == hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Continued-fraction convergents `p/q` of `x` with `q ≤ q_cap`.
pub fn convergents(x: f64, q_cap: i64) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    let (mut p0, mut q0, mut p1, mut q1) = (1i64, 0i64, x.floor() as i64, 1i64);
    out.push((p1, q1));
    let mut frac = x - x.floor();
    for _ in 0..64 {
        if frac.abs() < 1e-15 {
            break;
        }
        let inv = 1.0 / frac;
        let a = inv.floor();
        frac = inv - a;
        let a = a as i64;
        let (p2, q2) = (a * p1 + p0, a * q1 + q0);
        if q2 > q_cap {
            break;
        }
        out.push((p2, q2));
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
    }
    out
}

pub fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Central difference with one Richardson step: `O(δ⁴)` truncation error.
pub fn richardson_derivative<F: Fn(f64) -> f64>(f: F, x: f64, delta: f64) -> f64 {
    let d1 = (f(x + delta) - f(x - delta)) / (2.0 * delta);
    let d2 = (f(x + 2.0 * delta) - f(x - 2.0 * delta)) / (4.0 * delta);
    (4.0 * d1 - d2) / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_is_spectral_on_smooth_integrands() {
        let (v, ok) = integrate_adaptive(|t| t.cos(), 0.0, std::f64::consts::FRAC_PI_2, 1e-14);
        assert!(ok);
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn convergents_of_golden_ratio_are_fibonacci() {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let c = convergents(phi, 100);
        assert_eq!(&c[..6], &[(1, 1), (2, 1), (3, 2), (5, 3), (8, 5), (13, 8)]);
        assert!(c.iter().all(|&(_, q)| q <= 100));
    }

    #[test]
    fn slopes_and_roots() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powi(-4)).collect();
        assert!((loglog_slope(&xs, &ys) + 4.0).abs() < 1e-12);
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-15).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(gcd(12, -18), 6);
        let d = richardson_derivative(f64::sin, 0.3, 1e-3);
        assert!((d - 0.3f64.cos()).abs() < 1e-12);
    }
}
