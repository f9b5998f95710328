//! Bohr–Sommerfeld quasi-eigenvalues on the shifted lattice
//! `ξ_k = h(k − k₀/4) − S/2π`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::birkhoff::NormalFormResult;
use crate::error::{Error, Result};
use crate::symbol::OperatorSymbol;

/// Default cap on the number of enumerated lattice points.
pub const POINT_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizationData {
    #[serde(rename = "S", default)]
    pub s: [f64; 2],
    #[serde(default)]
    pub k0: [i32; 2],
    pub h: f64,
    pub eps: f64,
    #[serde(alias = "window")]
    pub window_radius: f64,
}

impl QuantizationData {
    pub fn new(h: f64, eps: f64, window_radius: f64) -> Result<Self> {
        let qd = QuantizationData { s: [0.0; 2], k0: [0; 2], h, eps, window_radius };
        qd.validate()?;
        Ok(qd)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Invalid(format!("h must be positive, got {}", self.h)));
        }
        if !(self.window_radius > 0.0 && self.window_radius.is_finite()) {
            return Err(Error::Invalid(format!("window radius must be positive, got {}", self.window_radius)));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) || !self.s.iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid("eps must be nonnegative and S finite".into()));
        }
        Ok(())
    }

    pub fn with_radius(mut self, r: f64) -> Self {
        self.window_radius = r;
        self
    }

    pub fn xi(&self, k: [i32; 2]) -> [f64; 2] {
        [0, 1].map(|j| self.h * (k[j] as f64 - self.k0[j] as f64 / 4.0) - self.s[j] / (2.0 * PI))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticePoint {
    pub k: [i32; 2],
    pub xi: [f64; 2],
}

pub fn lattice_points(qd: &QuantizationData) -> Result<Vec<LatticePoint>> {
    lattice_points_capped(qd, POINT_CAP)
}

/// All `k` with `|ξ_k| ≤ window_radius`, ordered lexicographically in `k`.
pub fn lattice_points_capped(qd: &QuantizationData, cap: usize) -> Result<Vec<LatticePoint>> {
    qd.validate()?;
    let r = qd.window_radius;
    let estimate = PI * (r / qd.h + 1.0).powi(2);
    if estimate > 2.0 * cap as f64 {
        return Err(Error::Invalid(format!("window holds about {estimate:.0} lattice points, cap is {cap}")));
    }
    let range = |j: usize| {
        let shift = qd.s[j] / (2.0 * PI * qd.h) + qd.k0[j] as f64 / 4.0;
        let lo = (-r / qd.h + shift).floor() as i64 - 1;
        let hi = (r / qd.h + shift).ceil() as i64 + 1;
        (lo, hi)
    };
    let (lo0, hi0) = range(0);
    let (lo1, hi1) = range(1);
    let mut out = Vec::new();
    for k1 in lo0..=hi0 {
        for k2 in lo1..=hi1 {
            let k = [k1 as i32, k2 as i32];
            let xi = qd.xi(k);
            if xi[0].hypot(xi[1]) <= r {
                if out.len() == cap {
                    return Err(Error::Invalid(format!("more than {cap} lattice points in the window")));
                }
                out.push(LatticePoint { k, xi });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub re_center: f64,
    pub re_halfwidth: f64,
    pub im_center: f64,
    pub im_halfwidth: f64,
}

impl Rectangle {
    pub fn new(re_center: f64, re_halfwidth: f64, im_center: f64, im_halfwidth: f64) -> Result<Self> {
        let r = Rectangle { re_center, re_halfwidth, im_center, im_halfwidth };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.re_center, self.re_halfwidth, self.im_center, self.im_halfwidth].iter().all(|v| v.is_finite());
        if !finite || self.re_halfwidth <= 0.0 || self.im_halfwidth <= 0.0 {
            return Err(Error::Invalid(format!("invalid rectangle {self:?}")));
        }
        Ok(())
    }

    /// Rectangle with sides `[re_lo, re_hi] × [im_lo, im_hi]`.
    pub fn from_bounds(re: (f64, f64), im: (f64, f64)) -> Result<Self> {
        Self::new((re.0 + re.1) / 2.0, (re.1 - re.0) / 2.0, (im.0 + im.1) / 2.0, (im.1 - im.0) / 2.0)
    }

    pub fn re_bounds(&self) -> (f64, f64) {
        (self.re_center - self.re_halfwidth, self.re_center + self.re_halfwidth)
    }

    pub fn im_bounds(&self) -> (f64, f64) {
        (self.im_center - self.im_halfwidth, self.im_center + self.im_halfwidth)
    }

    pub fn contains(&self, z: Complex64) -> bool {
        (z.re - self.re_center).abs() <= self.re_halfwidth && (z.im - self.im_center).abs() <= self.im_halfwidth
    }

    /// Euclidean distance from `z` to the rectangle, zero inside.
    pub fn distance(&self, z: Complex64) -> f64 {
        let dx = ((z.re - self.re_center).abs() - self.re_halfwidth).max(0.0);
        let dy = ((z.im - self.im_center).abs() - self.im_halfwidth).max(0.0);
        dx.hypot(dy)
    }

    /// Moves each edge outward, in steps of `gap`, until no point lies within
    /// `gap` of it; the result is insensitive to perturbations smaller than
    /// `gap` in each coordinate.
    pub fn clear_of(&self, points: &[Complex64], gap: [f64; 2]) -> Rectangle {
        let near = |edge: f64, coord: &dyn Fn(&Complex64) -> f64, g: f64| {
            points.iter().any(|z| (coord(z) - edge).abs() < g)
        };
        let re = |z: &Complex64| z.re;
        let im = |z: &Complex64| z.im;
        let (mut re_lo, mut re_hi) = self.re_bounds();
        let (mut im_lo, mut im_hi) = self.im_bounds();
        let limit = 1000;
        for _ in 0..limit {
            if !near(re_lo, &re, gap[0]) {
                break;
            }
            re_lo -= gap[0];
        }
        for _ in 0..limit {
            if !near(re_hi, &re, gap[0]) {
                break;
            }
            re_hi += gap[0];
        }
        for _ in 0..limit {
            if !near(im_lo, &im, gap[1]) {
                break;
            }
            im_lo -= gap[1];
        }
        for _ in 0..limit {
            if !near(im_hi, &im, gap[1]) {
                break;
            }
            im_hi += gap[1];
        }
        Rectangle {
            re_center: (re_lo + re_hi) / 2.0,
            re_halfwidth: (re_hi - re_lo) / 2.0,
            im_center: (im_lo + im_hi) / 2.0,
            im_halfwidth: (im_hi - im_lo) / 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Lattice,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    pub z: Complex64,
    pub label: Option<[i32; 2]>,
    pub source: Source,
    /// Lattice position `ξ_k`, when labelled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<[f64; 2]>,
    /// Per-point error annotation `C·max(|ξ_k|, ε, h)^{N+1}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub err_budget: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpectralCloud {
    pub points: Vec<SpectralPoint>,
}

impl SpectralCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn values(&self) -> Vec<Complex64> {
        self.points.iter().map(|p| p.z).collect()
    }

    pub fn filter(&self, rect: &Rectangle) -> SpectralCloud {
        SpectralCloud { points: self.points.iter().filter(|p| rect.contains(p.z)).copied().collect() }
    }

    /// Smallest distance between two distinct points.
    pub fn min_spacing(&self) -> Option<f64> {
        let zs = self.values();
        (0..zs.len())
            .into_par_iter()
            .filter_map(|i| zs[i + 1..].iter().map(|w| (zs[i] - w).norm()).reduce(f64::min))
            .reduce_with(f64::min)
    }
}

/// Evaluates `Σ h^n p_n(ξ_k, ε)` on every lattice point, keeps those in `rect`.
pub fn lattice_cloud<B>(symbol: &OperatorSymbol, qd: &QuantizationData, rect: &Rectangle, budget: B) -> Result<SpectralCloud>
where
    B: Fn(&LatticePoint) -> Option<f64> + Sync,
{
    rect.validate()?;
    let pts = lattice_points(qd)?;
    let points = pts
        .par_iter()
        .filter_map(|lp| {
            let xi = lp.xi.map(Complex64::from);
            let z = symbol.evaluate([0.0, 0.0], xi, qd.eps, qd.h);
            rect.contains(z).then(|| SpectralPoint {
                z,
                label: Some(lp.k),
                source: Source::Lattice,
                xi: Some(lp.xi),
                err_budget: budget(lp),
            })
        })
        .collect();
    Ok(SpectralCloud { points })
}

/// Quasi-eigenvalues of a normal form, annotated with the error budget.
pub fn quasi_eigenvalues(nf: &NormalFormResult, qd: &QuantizationData, rect: &Rectangle) -> Result<SpectralCloud> {
    let power = nf.order_n as i32 + 1;
    let c = nf.remainder_norm;
    lattice_cloud(&nf.p_normal, qd, rect, |lp| {
        let rho = lp.xi[0].hypot(lp.xi[1]).max(qd.eps).max(qd.h);
        Some(c * rho.powi(power))
    })
}

/// A rescaled normal-form term `p̃_n(η, ε̃, ε)`.
pub trait ScaledTerm: Sync {
    fn eval(&self, eta: [f64; 2], eps_tilde: f64, eps: f64) -> Complex64;
}

impl<F> ScaledTerm for F
where
    F: Fn([f64; 2], f64, f64) -> Complex64 + Sync,
{
    fn eval(&self, eta: [f64; 2], eps_tilde: f64, eps: f64) -> Complex64 {
        self(eta, eps_tilde, eps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledCloud {
    pub cloud: SpectralCloud,
    /// `max_k |p̃_n(ξ_k, 1, ε)|` for each retained `n`.
    pub term_sup: Vec<f64>,
}

/// Relative tolerance of the homogeneity check.
const HOMOGENEITY_TOL: f64 = 1e-10;

/// `z(k) = Σ_{n<N1} h^n p̃_n(ξ_k, 1, ε)` after checking
/// `μ^{1−n} p̃_n(η/μ, μ ε̃, ε) = p̃_n(η, ε̃, ε)` at `μ = 2`.
pub fn rescaled_quasi_eigenvalues(
    terms: &[&dyn ScaledTerm],
    qd: &QuantizationData,
    n1: usize,
    rect: &Rectangle,
) -> Result<RescaledCloud> {
    rect.validate()?;
    let terms = &terms[..n1.min(terms.len())];
    let pts = lattice_points(qd)?;
    let probes: Vec<&LatticePoint> = if pts.is_empty() {
        Vec::new()
    } else {
        (0..5).map(|i| &pts[i * (pts.len() - 1) / 4]).collect()
    };
    let mu = 2.0_f64;
    for (n, t) in terms.iter().enumerate() {
        for lp in &probes {
            let direct = t.eval(lp.xi, 1.0, qd.eps);
            let scaled = t.eval(lp.xi.map(|v| v / mu), mu, qd.eps) * mu.powi(1 - n as i32);
            if (direct - scaled).norm() > HOMOGENEITY_TOL * direct.norm().max(1.0) {
                return Err(Error::Precondition(format!(
                    "term {n} fails the rescaling law at xi = {:?}: {direct} vs {scaled}",
                    lp.xi
                )));
            }
        }
    }
    let values: Vec<(Complex64, Vec<f64>)> = pts
        .par_iter()
        .map(|lp| {
            let mut z = Complex64::new(0.0, 0.0);
            let mut mags = Vec::with_capacity(terms.len());
            for (n, t) in terms.iter().enumerate() {
                let v = t.eval(lp.xi, 1.0, qd.eps);
                mags.push(v.norm());
                z += v * qd.h.powi(n as i32);
            }
            (z, mags)
        })
        .collect();
    let mut term_sup = vec![0.0; terms.len()];
    let mut points = Vec::new();
    for (lp, (z, mags)) in pts.iter().zip(values) {
        for (s, m) in term_sup.iter_mut().zip(mags) {
            *s = f64::max(*s, m);
        }
        if rect.contains(z) {
            points.push(SpectralPoint { z, label: Some(lp.k), source: Source::Lattice, xi: Some(lp.xi), err_budget: None });
        }
    }
    Ok(RescaledCloud { cloud: SpectralCloud { points }, term_sup })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbol::{Caps, ClassicalSymbol, Monomial};

    const PHI: f64 = 1.618_033_988_749_895;

    fn big_rect() -> Rectangle {
        Rectangle::new(0.0, 100.0, 0.0, 100.0).unwrap()
    }

    #[test]
    fn unit_lattice() {
        let qd = QuantizationData::new(1.0, 0.0, 1.5).unwrap();
        let pts = lattice_points(&qd).unwrap();
        assert_eq!(pts.len(), 9);
        assert!(pts.iter().all(|p| p.xi == [p.k[0] as f64, p.k[1] as f64]));
    }

    #[test]
    fn action_shift_and_pitch() {
        let mut qd = QuantizationData::new(0.5, 0.0, 2.0).unwrap();
        qd.s = [PI, 0.0];
        let pts = lattice_points(&qd).unwrap();
        let p = pts.iter().find(|p| p.k == [0, 0]).unwrap();
        assert_eq!(p.xi, [-0.5, 0.0]);
        let q = pts.iter().find(|p| p.k == [1, 0]).unwrap();
        assert!((q.xi[0] - p.xi[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn enumeration_is_exhaustive() {
        let mut qd = QuantizationData::new(0.07, 0.0, 0.9).unwrap();
        qd.s = [0.3, -1.1];
        qd.k0 = [1, 2];
        let pts = lattice_points(&qd).unwrap();
        let mut brute = 0;
        for k1 in -40..=40 {
            for k2 in -40..=40 {
                let xi = qd.xi([k1, k2]);
                if xi[0].hypot(xi[1]) <= 0.9 {
                    brute += 1;
                }
            }
        }
        assert_eq!(pts.len(), brute);
    }

    #[test]
    fn point_cap() {
        let qd = QuantizationData::new(1e-4, 0.0, 1.0).unwrap();
        assert!(lattice_points(&qd).is_err());
    }

    #[test]
    fn linear_readout() {
        let caps = Caps::new(2, 2, 2);
        let f = 0.7;
        let p0 = ClassicalSymbol::linear_xi(caps, [1.0, PHI])
            .unwrap()
            .add(&ClassicalSymbol::monomial(caps, Monomial::new([0, 0], [0, 0], 1), Complex64::new(0.0, f)).unwrap())
            .unwrap();
        let op = OperatorSymbol::from_leading(p0);
        let qd = QuantizationData::new(0.1, 0.05, 0.5).unwrap();
        let cloud = lattice_cloud(&op, &qd, &big_rect(), |_| None).unwrap();
        assert_eq!(cloud.len(), lattice_points(&qd).unwrap().len());
        for p in &cloud.points {
            let xi = p.xi.unwrap();
            let want = Complex64::new(xi[0] + PHI * xi[1], 0.05 * f);
            assert!((p.z - want).norm() < 1e-15);
        }
    }

    #[test]
    fn rect_filter_matches_direct() {
        let caps = Caps::new(2, 2, 2);
        let op = OperatorSymbol::from_leading(ClassicalSymbol::linear_xi(caps, [1.0, PHI]).unwrap());
        let qd = QuantizationData::new(0.05, 0.0, 1.0).unwrap();
        let rect = Rectangle::new(0.1, 0.3, 0.0, 0.01).unwrap();
        let cloud = lattice_cloud(&op, &qd, &rect, |_| None).unwrap();
        let direct = lattice_points(&qd)
            .unwrap()
            .iter()
            .filter(|p| rect.contains(Complex64::from(p.xi[0] + PHI * p.xi[1])))
            .count();
        assert_eq!(cloud.len(), direct);
        assert!(cloud.points.iter().all(|p| p.z.im.abs() < 1e-12));
    }

    #[test]
    fn translation_covariance() {
        let caps = Caps::new(2, 2, 2);
        let op = OperatorSymbol::from_leading(ClassicalSymbol::linear_xi(caps, [1.0, PHI]).unwrap());
        let qd = QuantizationData::new(0.05, 0.0, 2.0).unwrap();
        let rect = Rectangle::new(0.0, 0.4, 0.0, 0.1).unwrap();
        let mut shifted = qd;
        shifted.s = [2.0 * PI * qd.h * 3.0, -2.0 * PI * qd.h * 2.0];
        let mut a: Vec<f64> = lattice_cloud(&op, &qd, &rect, |_| None).unwrap().values().iter().map(|z| z.re).collect();
        let mut b: Vec<f64> = lattice_cloud(&op, &shifted, &rect, |_| None).unwrap().values().iter().map(|z| z.re).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a.len(), b.len());
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn spacing_on_nondegenerate_form() {
        // a·ξ + iε(1 + ξ₂): Re and Im/ε separate neighbours by at least h·min(1, ε)
        let caps = Caps::new(2, 2, 2);
        let eps = 0.1;
        let p0 = ClassicalSymbol::linear_xi(caps, [1.0, PHI])
            .unwrap()
            .add(
                &ClassicalSymbol::from_terms(
                    caps,
                    [
                        (Monomial::new([0, 0], [0, 0], 1), Complex64::new(0.0, 1.0)),
                        (Monomial::new([0, 0], [0, 1], 1), Complex64::new(0.0, 1.0)),
                    ],
                )
                .unwrap(),
            )
            .unwrap();
        let h = 0.02;
        let qd = QuantizationData::new(h, eps, 0.2).unwrap();
        let cloud = lattice_cloud(&OperatorSymbol::from_leading(p0), &qd, &big_rect(), |_| None).unwrap();
        assert!(cloud.min_spacing().unwrap() >= eps * h / 10.0);
    }

    #[test]
    fn clear_of_moves_edges_off_points() {
        let r = Rectangle::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let pts = [Complex64::new(1.0, 0.0), Complex64::new(0.0, -1.05)];
        let s = r.clear_of(&pts, [0.1, 0.1]);
        assert!(s.re_bounds().1 >= 1.1 - 1e-12);
        assert!(s.im_bounds().0 <= -1.15 + 1e-12);
        assert_eq!(s.re_bounds().0, -1.0);
    }

    #[test]
    fn rescaled_single_linear_term_matches_lattice() {
        let eps = 0.05;
        let lin = |eta: [f64; 2], _et: f64, _e: f64| Complex64::from(eta[0] + PHI * eta[1]);
        let qd = QuantizationData::new(0.1, eps, 0.5).unwrap();
        let r = rescaled_quasi_eigenvalues(&[&lin], &qd, 1, &big_rect()).unwrap();
        assert_eq!(r.cloud.len(), lattice_points(&qd).unwrap().len());
        for p in &r.cloud.points {
            let xi = p.xi.unwrap();
            assert!((p.z - Complex64::from(xi[0] + PHI * xi[1])).norm() < 1e-15);
        }
    }

    #[test]
    fn rescaled_checks_homogeneity() {
        let qd = QuantizationData::new(0.1, 0.05, 0.5).unwrap();
        let good0 = |eta: [f64; 2], et: f64, e: f64| Complex64::new(eta[0], e * (et * eta[1]).powi(2) / et);
        let good1 = |eta: [f64; 2], et: f64, _e: f64| Complex64::from(2.0 + (et * eta[0]).sin());
        let bad1 = |eta: [f64; 2], _et: f64, _e: f64| Complex64::from(eta[0]);
        let ok = rescaled_quasi_eigenvalues(&[&good0, &good1], &qd, 2, &big_rect()).unwrap();
        assert_eq!(ok.term_sup.len(), 2);
        assert!(rescaled_quasi_eigenvalues(&[&good0, &bad1], &qd, 2, &big_rect()).is_err());
        // terms beyond N1 are not inspected
        assert!(rescaled_quasi_eigenvalues(&[&good0, &bad1], &qd, 1, &big_rect()).is_ok());
    }
}
