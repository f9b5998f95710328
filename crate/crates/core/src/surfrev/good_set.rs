use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::torus::{j_moments, q_infinity_interval};
use super::{OrbitPoint, SurfaceProfile};
use crate::averaging::IntervalSet;
use crate::error::{Error, Result};
use crate::numerics::{bisect, convergents};

const THETA_NODES: usize = 32;
const DERIVATIVE_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodSetOptions {
    pub alpha: f64,
    pub d: f64,
    pub eta: f64,
    pub a_grid: usize,
    /// Largest denominator in the Diophantine test.
    pub q_cap: i64,
    /// Probe values `F0`.
    pub probes: Vec<f64>,
    /// Radius in `a` of the neighborhoods around preimages left out of the
    /// separation margin.
    pub neighborhood: f64,
    /// Resonances `ω = m/n` with `n ≤ resonance_cap` whose `Q_∞` intervals
    /// enter the separation margin.
    pub resonance_cap: i64,
}

impl GoodSetOptions {
    pub fn new(alpha: f64, d: f64, eta: f64) -> Self {
        GoodSetOptions { alpha, d, eta, a_grid: 2000, q_cap: 10_000, probes: Vec::new(), neighborhood: 0.01, resonance_cap: 6 }
    }

    pub fn with_probes(mut self, probes: Vec<f64>) -> Self {
        self.probes = probes;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.d > 0.0 && self.eta.is_finite() && self.neighborhood > 0.0) {
            return Err(Error::Invalid(format!("need alpha, d, neighborhood > 0 and finite eta, got {self:?}")));
        }
        if self.a_grid < 16 || self.q_cap < 1 {
            return Err(Error::Invalid("a_grid must be at least 16 and q_cap positive".into()));
        }
        Ok(())
    }
}

/// One row of the `a`-sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodSample {
    pub a: f64,
    pub omega: f64,
    pub domega: f64,
    pub avg_q0: f64,
    pub davg_q0: f64,
    /// `⟨q0⟩ + η⟨q1⟩`.
    pub avg: f64,
    pub is_good: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preimage {
    pub a: f64,
    pub omega: f64,
    pub davg_q0: f64,
    pub is_good: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub f0: f64,
    pub in_good_set: bool,
    pub preimages: Vec<Preimage>,
    /// `min dist(Q_∞(a), F0)` over sampled `a` off the preimage neighborhoods.
    pub separation_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodSetReport {
    pub alpha: f64,
    pub d: f64,
    pub eta: f64,
    /// Closed range of `a ↦ ⟨q0⟩ + η⟨q1⟩` on the grid.
    pub range: (f64, f64),
    pub good_intervals: IntervalSet,
    pub excluded_measure: f64,
    pub samples: Vec<GoodSample>,
    pub probes: Vec<ProbeReport>,
}

/// Values of `ω`, `⟨q0⟩` and `⟨q1⟩` on one torus.
#[derive(Clone, Copy)]
struct Moments {
    omega: f64,
    q0: f64,
    q1: f64,
}

struct Sweep<'a, Q0, Q1> {
    sp: &'a SurfaceProfile,
    q0: &'a Q0,
    q1: &'a Q1,
    eta: f64,
}

impl<Q0, Q1> Sweep<'_, Q0, Q1>
where
    Q0: Fn(f64) -> f64 + Sync,
    Q1: Fn(f64, f64) -> f64 + Sync,
{
    fn moments(&self, a: f64) -> Moments {
        let q1bar = |p: &OrbitPoint| {
            (0..THETA_NODES).map(|i| (self.q1)(p.s, TAU * i as f64 / THETA_NODES as f64)).sum::<f64>() / THETA_NODES as f64
        };
        let (v, _) = j_moments(
            self.sp,
            a,
            &[&|_: &OrbitPoint| 1.0, &|p: &OrbitPoint| 1.0 / (p.f * p.f), &|p: &OrbitPoint| (self.q0)(p.s), &q1bar],
        );
        Moments { omega: a / std::f64::consts::PI * v[1], q0: v[2] / v[0], q1: v[3] / v[0] }
    }

    fn avg(&self, m: &Moments) -> f64 {
        m.q0 + self.eta * m.q1
    }

    /// Sample at `a` with Richardson derivatives of `ω`, `⟨q0⟩` and the
    /// average map, the step shrunk to stay inside `(0, 1)` in `|a|`.
    fn sample(&self, a: f64) -> (Moments, f64, f64, f64) {
        let room = a.abs().min(1.0 - a.abs());
        let delta = DERIVATIVE_STEP.min(room / 4.0);
        let m = self.moments(a);
        let st: Vec<Moments> = [-2.0, -1.0, 1.0, 2.0].iter().map(|k| self.moments(a + k * delta)).collect();
        let rich = |f: &dyn Fn(&Moments) -> f64| {
            let d1 = (f(&st[2]) - f(&st[1])) / (2.0 * delta);
            let d2 = (f(&st[3]) - f(&st[0])) / (4.0 * delta);
            (4.0 * d1 - d2) / 3.0
        };
        (m, rich(&|m| m.omega), rich(&|m| m.q0), rich(&|m| self.avg(m)))
    }

    fn davg(&self, a: f64) -> f64 {
        let room = a.abs().min(1.0 - a.abs());
        let delta = DERIVATIVE_STEP.min(room / 4.0);
        crate::numerics::richardson_derivative(|x| self.avg(&self.moments(x)), a, delta)
    }
}

/// The `(α, d)` Diophantine test against the convergents of `|ω|`.
fn diophantine(omega: f64, alpha: f64, d: f64, q_cap: i64) -> bool {
    let w = omega.abs();
    convergents(w, q_cap).iter().all(|&(p, q)| (w - p as f64 / q as f64).abs() >= alpha / (q as f64).powf(2.0 + d))
}

/// Membership of `a` in `Ω_α`.
fn good_torus(a: f64, omega: f64, domega: f64, dq0: f64, opts: &GoodSetOptions) -> bool {
    let dist = (1.0 - a.abs()).min(a.abs());
    dist >= opts.alpha
        && domega.abs() >= opts.alpha
        && dq0.abs() >= opts.alpha
        && diophantine(omega, opts.alpha, opts.d, opts.q_cap)
}

/// Good values `G_{α,η}`: the range of `⟨q0⟩ + η⟨q1⟩` minus the image of the
/// bad tori, and separation margins for the probe values.
///
/// A grid point is bad when `dist(a, {−1, 0, 1}) < α`, `|ω′| < α`,
/// `|d_a⟨q0⟩| < α`, or `ω` fails `|ω − p/q| ≥ α/q^{2+d}`. A cell is bad when
/// either end is, or when `ω′` or `d_a⟨q0⟩` changes sign inside; its image is
/// the hull of the end values and, where the derivative of the average map
/// changes sign, of its value at the located extremum.
pub fn good_set<Q0, Q1>(sp: &SurfaceProfile, q0: Q0, q1: Q1, opts: &GoodSetOptions) -> Result<GoodSetReport>
where
    Q0: Fn(f64) -> f64 + Sync,
    Q1: Fn(f64, f64) -> f64 + Sync,
{
    opts.validate()?;
    let sweep = Sweep { sp, q0: &q0, q1: &q1, eta: opts.eta };
    let n = opts.a_grid;
    let grid: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / n as f64).filter(|a| *a != 0.0).collect();
    let samples: Vec<(GoodSample, f64)> = grid
        .par_iter()
        .map(|&a| {
            let (m, domega, dq0, davg) = sweep.sample(a);
            let is_good = good_torus(a, m.omega, domega, dq0, opts);
            let s = GoodSample { a, omega: m.omega, domega, avg_q0: m.q0, davg_q0: dq0, avg: sweep.avg(&m), is_good };
            (s, davg)
        })
        .collect();

    let mut range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut bad = Vec::new();
    for w in samples.windows(2) {
        let ((l, dl), (r, dr)) = (&w[0], &w[1]);
        let mut lo = l.avg.min(r.avg);
        let mut hi = l.avg.max(r.avg);
        // The cell across a = 0 is excluded anyway; a ↦ ⟨q0⟩ is even there.
        if dl.signum() != dr.signum() && l.a.signum() == r.a.signum() {
            let extremum = bisect(|a| sweep.davg(a), l.a, r.a, 1e-12).map(|a| sweep.avg(&sweep.moments(a)));
            if let Some(v) = extremum {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        range = (range.0.min(lo), range.1.max(hi));
        let sign_change = l.domega.signum() != r.domega.signum() || l.davg_q0.signum() != r.davg_q0.signum();
        if !l.is_good || !r.is_good || sign_change {
            bad.push((lo, hi));
        }
    }
    let bad_image = IntervalSet::new(bad).intersect(range.0, range.1);
    let good_intervals = bad_image.complement_within(range.0, range.1);
    let samples: Vec<GoodSample> = samples.into_iter().map(|(s, _)| s).collect();

    let probes = opts
        .probes
        .iter()
        .map(|&f0| probe(&sweep, &samples, &good_intervals, f0, opts))
        .collect::<Result<Vec<_>>>()?;

    Ok(GoodSetReport {
        alpha: opts.alpha,
        d: opts.d,
        eta: opts.eta,
        range,
        good_intervals,
        excluded_measure: bad_image.measure(),
        samples,
        probes,
    })
}

fn probe<Q0, Q1>(
    sweep: &Sweep<'_, Q0, Q1>,
    samples: &[GoodSample],
    good: &IntervalSet,
    f0: f64,
    opts: &GoodSetOptions,
) -> Result<ProbeReport>
where
    Q0: Fn(f64) -> f64 + Sync,
    Q1: Fn(f64, f64) -> f64 + Sync,
{
    let mut preimages = Vec::new();
    for w in samples.windows(2) {
        if (w[0].avg - f0) * (w[1].avg - f0) > 0.0 {
            continue;
        }
        let Some(a) = bisect(|a| sweep.avg(&sweep.moments(a)) - f0, w[0].a, w[1].a, 1e-14) else { continue };
        if preimages.iter().any(|p: &Preimage| (p.a - a).abs() < 1e-12) {
            continue;
        }
        let (m, domega, dq0, _) = sweep.sample(a);
        let is_good = good_torus(a, m.omega, domega, dq0, opts);
        preimages.push(Preimage { a, omega: m.omega, davg_q0: dq0, is_good });
    }
    let away = |a: f64| preimages.iter().all(|p| (p.a - a).abs() >= opts.neighborhood);

    let mut margin = samples.iter().filter(|s| away(s.a)).map(|s| (s.avg - f0).abs()).fold(f64::INFINITY, f64::min);

    // Resonant tori: Q_∞ is an interval there.
    let q = |s: f64, th: f64| (sweep.q0)(s) + sweep.eta * (sweep.q1)(s, th);
    for qd in 1..=opts.resonance_cap {
        for w in samples.windows(2) {
            if w[0].a.signum() != w[1].a.signum() {
                continue;
            }
            let lo = w[0].omega.min(w[1].omega);
            let hi = w[0].omega.max(w[1].omega);
            let first = (lo * qd as f64).ceil() as i64;
            let last = (hi * qd as f64).floor() as i64;
            for p in first..=last {
                if crate::numerics::gcd(p, qd) != 1 {
                    continue;
                }
                let target = p as f64 / qd as f64;
                let Some(a) = bisect(|a| sweep.moments(a).omega - target, w[0].a, w[1].a, 1e-15) else { continue };
                if !away(a) {
                    continue;
                }
                let iv = q_infinity_interval(sweep.sp, q, a, 32, Some((p, qd)))?;
                margin = margin.min(iv.distance_to(f0));
            }
        }
    }
    Ok(ProbeReport { f0, in_good_set: good.contains(f0), preimages, separation_margin: margin })
}
