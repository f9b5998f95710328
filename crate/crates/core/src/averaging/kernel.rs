use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Sample spacing of the unit bump on `[−1, 1]`.
const TAU_STEPS: usize = 2048;
/// FFT length; sets the transform grid pitch `2π·TAU_STEPS / FFT_LEN`.
const FFT_LEN: usize = 1 << 20;
/// Highest moment `∫ τ^j K(τ) e^{−iuτ} dτ` kept in the cache.
pub const MAX_MOMENT: usize = 12;

fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp()
    }
}

/// Transform table of `τ^j K₁(τ)` for the unit bump on `u ∈ [0, u_max]`.
///
/// Stores the cosine transform for even `j` and the sine transform for odd
/// `j`; the complex moment is `g` or `−i g` respectively.
struct MomentTable {
    du: f64,
    values: Vec<f64>,
}

impl MomentTable {
    fn build(j: usize) -> Self {
        let dt = 1.0 / TAU_STEPS as f64;
        let n = TAU_STEPS as i64;
        let norm: f64 = (-n..=n).map(|i| bump(i as f64 * dt)).sum::<f64>() * dt;
        let mut buf = vec![Complex64::new(0.0, 0.0); FFT_LEN];
        for i in -n..=n {
            let t = i as f64 * dt;
            let idx = i.rem_euclid(FFT_LEN as i64) as usize;
            buf[idx] = Complex64::from(t.powi(j as i32) * bump(t) / norm * dt);
        }
        FftPlanner::new().plan_fft_forward(FFT_LEN).process(&mut buf);
        let du = 2.0 * PI / (FFT_LEN as f64 * dt);
        // Beyond half the Nyquist frequency the trapezoid sum aliases; the
        // true transform there is below 1e−30 anyway.
        let keep = ((PI / dt) / 2.0 / du) as usize;
        let values = buf[..keep]
            .iter()
            .map(|c| if j % 2 == 0 { c.re } else { -c.im })
            .collect();
        MomentTable { du, values }
    }

    /// Four-point Lagrange interpolation at `u ≥ 0`; zero past the table.
    fn eval(&self, u: f64, odd: bool) -> f64 {
        let pos = u / self.du;
        let i = pos.floor() as isize;
        if i + 2 >= self.values.len() as isize {
            return 0.0;
        }
        // Stencil points left of u = 0 come from the even/odd continuation.
        let y = |k: isize| -> f64 {
            let v = self.values[k.unsigned_abs()];
            if k < 0 && odd {
                -v
            } else {
                v
            }
        };
        let x = pos - i as f64;
        let (y0, y1, y2, y3) = (y(i - 1), y(i), y(i + 1), y(i + 2));
        -x * (x - 1.0) * (x - 2.0) / 6.0 * y0 + (x + 1.0) * (x - 1.0) * (x - 2.0) / 2.0 * y1
            - (x + 1.0) * x * (x - 2.0) / 2.0 * y2
            + (x + 1.0) * x * (x - 1.0) / 6.0 * y3
    }
}

fn table(j: usize) -> &'static MomentTable {
    static TABLES: [OnceLock<MomentTable>; MAX_MOMENT + 1] = [const { OnceLock::new() }; MAX_MOMENT + 1];
    TABLES[j].get_or_init(|| MomentTable::build(j))
}

/// `∫ τ^j K₁(τ) e^{−iuτ} dτ` for the unit bump.
fn unit_moment(j: usize, u: f64) -> Complex64 {
    let odd = j % 2 == 1;
    let g = table(j).eval(u.abs(), odd);
    if odd {
        Complex64::new(0.0, -g * u.signum())
    } else {
        Complex64::from(g)
    }
}

/// Normalized bump `K(t) = c·exp(−1/(1−τ²))`, `τ = (t − center)/half_width`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingKernel {
    center: f64,
    half_width: f64,
}

impl Default for SmoothingKernel {
    fn default() -> Self {
        SmoothingKernel { center: 0.0, half_width: 1.0 }
    }
}

impl SmoothingKernel {
    /// The bump supported on `[t0, t1]`.
    pub fn on(t0: f64, t1: f64) -> Result<Self> {
        if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
            return Err(Error::Invalid(format!("kernel support [{t0}, {t1}] is empty")));
        }
        Ok(SmoothingKernel { center: 0.5 * (t0 + t1), half_width: 0.5 * (t1 - t0) })
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.half_width, self.center + self.half_width)
    }

    pub fn density(&self, t: f64) -> f64 {
        static NORM: OnceLock<f64> = OnceLock::new();
        let c = NORM.get_or_init(|| {
            let (v, _) = crate::numerics::integrate_adaptive(bump, -1.0, 1.0, 1e-15);
            1.0 / v
        });
        c * bump((t - self.center) / self.half_width) / self.half_width
    }

    /// `K̂(s) = ∫ e^{−its} K(t) dt`.
    pub fn transform(&self, s: f64) -> Complex64 {
        self.transform_derivative(s, 0)
    }

    /// `d^j K̂/ds^j = ∫ (−it)^j e^{−its} K(t) dt`, for `j ≤ MAX_MOMENT`.
    pub fn transform_derivative(&self, s: f64, j: usize) -> Complex64 {
        assert!(j <= MAX_MOMENT, "derivative order {j} exceeds the cached moments");
        let (c, l) = (self.center, self.half_width);
        let u = l * s;
        // t = c + lτ: (−it)^j = (−i)^j Σ_r C(j,r) c^{j−r} l^r τ^r
        let mut acc = Complex64::new(0.0, 0.0);
        let mut binom = 1.0;
        for r in 0..=j {
            if r > 0 {
                binom = binom * (j - r + 1) as f64 / r as f64;
            }
            let coeff = binom * c.powi((j - r) as i32) * l.powi(r as i32);
            if coeff != 0.0 {
                acc += unit_moment(r, u) * coeff;
            }
        }
        acc * Complex64::new(0.0, -1.0).powu(j as u32) * Complex64::from_polar(1.0, -s * c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::integrate_adaptive;

    fn direct(k: &SmoothingKernel, s: f64) -> Complex64 {
        let (t0, t1) = k.support();
        let re = integrate_adaptive(|t| k.density(t) * (s * t).cos(), t0, t1, 1e-14).0;
        let im = integrate_adaptive(|t| -k.density(t) * (s * t).sin(), t0, t1, 1e-14).0;
        Complex64::new(re, im)
    }

    #[test]
    fn normalized_at_zero() {
        assert!((SmoothingKernel::default().transform(0.0) - Complex64::from(1.0)).norm() < 1e-12);
    }

    #[test]
    fn matches_direct_quadrature() {
        let k = SmoothingKernel::default();
        for &s in &[0.37, 3.0, 17.5, 60.0] {
            let d = direct(&k, s);
            let err = (k.transform(s) - d).norm();
            assert!(err < 1e-10 * d.norm() + 1e-13, "s={s} err={err:e} d={d}");
        }
        let k = SmoothingKernel::on(0.0, 2.0).unwrap();
        for &s in &[-2.3, 0.5, 9.0] {
            assert!((k.transform(s) - direct(&k, s)).norm() < 5e-11, "s={s}");
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let k = SmoothingKernel::on(-0.5, 1.5).unwrap();
        for &s in &[-1.0, 0.0, 0.01, 2.5] {
            let d = 1e-4;
            let fd = (k.transform(s + d) - k.transform(s - d)) / (2.0 * d);
            assert!((k.transform_derivative(s, 1) - fd).norm() < 1e-7, "s={s}");
        }
    }

    #[test]
    fn decays_fast() {
        let k = SmoothingKernel::default();
        assert!(k.transform(200.0).norm() < 1e-6);
        assert!(k.transform(1e5).norm() == 0.0);
    }
}
