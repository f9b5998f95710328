//! Fixed-point solver for `p(x, ξ + ε̃ρ'_x, ε) = z(ξ, ε)` with
//! `ρ = ρ_per + b w*`, and the action map `η(ξ)`.
//!
//! Each iterate solves `z'(ξ)·∂_x ρ_j + G(x, ρ'_{j−1}) = 0` on the retained
//! Fourier modes, where
//! `G(x, η) = (p(x, ξ + ε̃η) − z(ξ) − ε̃ z'(ξ)·η) / ε̃`
//! is evaluated pointwise on an FFT grid.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbol::{Caps, ClassicalSymbol, Monomial};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HjOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Upper bound for `(ε^M + ε̃^N) / (ε min(ε, ε̃))`.
    pub smallness_threshold: f64,
    /// Sobolev index of the gradient norm.
    pub sobolev_s: f64,
    /// Largest retained `|k_j|`. When unset, starts at the remainder's cap plus 4
    /// and doubles (up to 32) while the outer band of modes is above `tol`.
    pub mode_cap: Option<i32>,
}

impl Default for HjOptions {
    fn default() -> Self {
        HjOptions { tol: 1e-12, max_iter: 60, smallness_threshold: 0.1, sobolev_s: 2.0, mode_cap: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSolution {
    pub xi: [f64; 2],
    pub eps: f64,
    pub eps_tilde: f64,
    /// Periodic part as a symbol in `x` only, normalized by `ρ_per(0) = 0`.
    pub rho_per: ClassicalSymbol,
    pub b: Complex64,
    /// Constant gradient of `w*`.
    pub grad_w_star: [Complex64; 2],
    /// `max_x |p(x, φ'_x, ε) − z(ξ, ε)|`.
    pub residual: f64,
    pub iterations: usize,
    /// `‖ρ'_j − ρ'_{j−1}‖_{H^s}` for each iterate.
    pub contraction_history: Vec<f64>,
    /// `‖ρ'_x‖_{H^s}` of the final iterate.
    pub gradient_norm: f64,
    /// `(ε^M + ε̃^N) / (ε min(ε, ε̃))`.
    pub smallness: f64,
    pub converged: bool,
}

impl PhaseSolution {
    /// `ρ'_x(x)`.
    pub fn gradient(&self, x: [f64; 2]) -> [Complex64; 2] {
        let mut g = self.grad_w_star.map(|v| v * self.b);
        for (m, c) in self.rho_per.terms() {
            let e = c * Complex64::from_polar(1.0, m.k[0] as f64 * x[0] + m.k[1] as f64 * x[1]) * Complex64::i();
            g[0] += e * m.k[0] as f64;
            g[1] += e * m.k[1] as f64;
        }
        g
    }

    /// `ψ = ε̃ ρ` at `x`, with `w*` taken as the linear function vanishing at 0.
    pub fn psi(&self, x: [f64; 2]) -> Complex64 {
        let per = self.rho_per.evaluate_real(x, [0.0, 0.0], 0.0);
        let lin = self.b * (self.grad_w_star[0] * x[0] + self.grad_w_star[1] * x[1]);
        (per + lin) * self.eps_tilde
    }

    /// Successive ratios of the contraction history.
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.contraction_history.windows(2).filter(|w| w[0] > 0.0).map(|w| w[1] / w[0]).collect()
    }
}

/// Vanishing orders `(M, N)` with `r = O(ε^M + |ξ|^N)`; `None` when a part is absent.
pub fn vanishing_orders(r: &ClassicalSymbol) -> (Option<u32>, Option<u32>) {
    let m = r.terms().filter(|(mo, _)| mo.xi_degree() == 0).map(|(mo, _)| mo.m).min();
    let n = r.terms().filter(|(mo, _)| mo.m == 0).map(|(mo, _)| mo.xi_degree()).min();
    let fits = |mm: Option<u32>, nn: Option<u32>| {
        r.terms().all(|(mo, _)| {
            let a = mm.map_or(0.0, |v| mo.m as f64 / v as f64);
            let b = nn.map_or(0.0, |v| mo.xi_degree() as f64 / v as f64);
            a + b >= 1.0 - 1e-12
        })
    };
    if fits(m, n) {
        return (m, n);
    }
    let d = r.min_degree();
    (d, d)
}

pub fn smallness_ratio(r: &ClassicalSymbol, eps: f64, eps_tilde: f64) -> f64 {
    let (m, n) = vanishing_orders(r);
    let num = m.map_or(0.0, |m| eps.powi(m as i32)) + n.map_or(0.0, |n| eps_tilde.powi(n as i32));
    num / (eps * eps.min(eps_tilde))
}

fn gradient_at(s: &ClassicalSymbol, xi: [f64; 2], eps: f64) -> [Complex64; 2] {
    [0, 1].map(|j| s.dxi(j).evaluate_real([0.0, 0.0], xi, eps))
}

/// Square 2-D FFT grid with modes indexed `k mod n`.
struct Grid {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Grid {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Grid { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    fn point(&self, idx: usize) -> [f64; 2] {
        let h = 2.0 * std::f64::consts::PI / self.n as f64;
        [(idx / self.n) as f64 * h, (idx % self.n) as f64 * h]
    }

    fn slot(&self, k: [i32; 2]) -> usize {
        let n = self.n as i32;
        (k[0].rem_euclid(n) as usize) * self.n + k[1].rem_euclid(n) as usize
    }

    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        for row in data.chunks_mut(n) {
            fft.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = data[i * n + j];
            }
            fft.process(&mut col);
            for i in 0..n {
                data[i * n + j] = col[i];
            }
        }
    }

    /// Fourier coefficients `(1/n²) Σ f(x) e^{−ik·x}`.
    fn analyze(&self, mut values: Vec<Complex64>) -> Vec<Complex64> {
        self.transform(&mut values, &self.fwd);
        let s = 1.0 / (self.n * self.n) as f64;
        values.iter_mut().for_each(|v| *v *= s);
        values
    }

    fn synthesize(&self, mut coeffs: Vec<Complex64>) -> Vec<Complex64> {
        self.transform(&mut coeffs, &self.inv);
        coeffs
    }
}

fn modes(cap: i32) -> Vec<[i32; 2]> {
    (-cap..=cap).flat_map(|a| (-cap..=cap).map(move |b| [a, b])).collect()
}

fn sobolev_weight(k: [i32; 2], s: f64) -> f64 {
    (1.0 + (k[0] * k[0] + k[1] * k[1]) as f64).powf(s)
}

/// Solves the Hamilton–Jacobi equation for the phase `x·ξ + ε̃ρ`.
pub fn hj_solve(
    p_full: &ClassicalSymbol,
    p_poly: &ClassicalSymbol,
    xi: [f64; 2],
    eps: f64,
    eps_tilde: f64,
    opts: &HjOptions,
) -> Result<PhaseSolution> {
    if !p_poly.is_x_independent() {
        return Err(Error::Precondition("p_poly must be independent of x".into()));
    }
    if !(eps > 0.0 && eps_tilde > 0.0) {
        return Err(Error::Invalid("eps and eps_tilde must be positive".into()));
    }
    if xi[0].hypot(xi[1]) > eps_tilde {
        return Err(Error::Precondition(format!("|xi| = {:.3e} exceeds eps_tilde", xi[0].hypot(xi[1]))));
    }
    let r = p_full.sub(&p_poly.with_caps(p_full.caps()))?;
    let smallness = smallness_ratio(&r, eps, eps_tilde);
    if smallness > opts.smallness_threshold {
        return Err(Error::Precondition(format!(
            "smallness ratio {smallness:.3e} exceeds {}",
            opts.smallness_threshold
        )));
    }

    let z = p_poly.evaluate_real([0.0, 0.0], xi, eps);
    let dz = gradient_at(p_poly, xi, eps);
    let l1 = gradient_at(&p_poly.eps_layer(0), xi, 0.0);
    let l2 = [0, 1].map(|j| (dz[j] - l1[j]) / Complex64::new(0.0, eps));
    // Y = L^{-1}, rows of L are l1, l2; y_k = Y_{·k}·x.
    let det = l1[0] * l2[1] - l1[1] * l2[0];
    if det.norm() < 1e-12 * (l1[0].norm() + l1[1].norm()) * (l2[0].norm() + l2[1].norm()).max(1e-300) {
        return Err(Error::Precondition("d p and d q are linearly dependent at xi".into()));
    }
    let y1 = [l2[1] / det, -l2[0] / det];
    let y2 = [-l1[1] / det, l1[0] / det];
    let i = Complex64::i();
    let grad_w_star = [0, 1].map(|j| (y1[j] * eps - i * y2[j]) * 0.5);

    let setup = Setup { p_full, xi, eps, eps_tilde, z, dz, grad_w_star, smallness, r_modes: r.max_mode() };
    if let Some(cap) = opts.mode_cap {
        return solve_with_cap(&setup, cap.max(1), opts);
    }
    // Double the retained modes until the outer band carries no gradient mass.
    let mut cap = (r.max_mode() + 4).max(1);
    loop {
        let (sol, tail) = solve_with_cap_tail(&setup, cap, opts)?;
        if cap >= MAX_MODE_CAP || tail <= opts.tol * sol.gradient_norm.max(f64::MIN_POSITIVE) {
            return Ok(sol);
        }
        cap = (2 * cap).min(MAX_MODE_CAP);
    }
}

/// Ceiling of the adaptive mode cap.
const MAX_MODE_CAP: i32 = 32;

struct Setup<'a> {
    p_full: &'a ClassicalSymbol,
    xi: [f64; 2],
    eps: f64,
    eps_tilde: f64,
    z: Complex64,
    dz: [Complex64; 2],
    grad_w_star: [Complex64; 2],
    smallness: f64,
    r_modes: i32,
}

fn solve_with_cap(setup: &Setup, cap: i32, opts: &HjOptions) -> Result<PhaseSolution> {
    solve_with_cap_tail(setup, cap, opts).map(|(sol, _)| sol)
}

/// Fixed-point iteration on `|k_j| ≤ cap`; also returns `max |k||ρ̂(k)|` over
/// the band `cap − K_r < |k|_∞ ≤ cap`, which every new layer of modes crosses.
fn solve_with_cap_tail(setup: &Setup, cap: i32, opts: &HjOptions) -> Result<(PhaseSolution, f64)> {
    let &Setup { p_full, xi, eps, eps_tilde, z, dz, grad_w_star, smallness, r_modes } = setup;
    let i = Complex64::i();
    let degree = p_full.terms().map(|(m, _)| m.xi_degree()).max().unwrap_or(1).max(2);
    let n = (2 * (r_modes as usize + degree as usize * cap as usize) + 2).next_power_of_two().max(16);
    let grid = Grid::new(n);
    let retained = modes(cap);
    let divisors: Vec<Complex64> =
        retained.iter().map(|k| i * (dz[0] * k[0] as f64 + dz[1] * k[1] as f64)).collect();
    let floor = 1e-12 * (dz[0].norm() + dz[1].norm());
    if let Some((k, d)) = retained.iter().zip(&divisors).find(|(k, d)| **k != [0, 0] && d.norm() < floor) {
        return Err(Error::SmallDivisor { k: *k, divisor: d.norm(), floor });
    }

    let g_of = |grad: &[[Complex64; 2]]| -> Vec<Complex64> {
        (0..n * n)
            .into_par_iter()
            .map(|idx| {
                let x = grid.point(idx);
                let eta = grad[idx];
                let arg = [0, 1].map(|j| Complex64::from(xi[j]) + eta[j] * eps_tilde);
                let lin = dz[0] * eta[0] + dz[1] * eta[1];
                (p_full.evaluate(x, arg, eps) - z) / eps_tilde - lin
            })
            .collect()
    };

    // roundoff level of a gradient update: G carries O(scale/ε̃) terms, the
    // division by the transport symbol costs another 1/ε
    let scale = z.norm() + (dz[0].norm() + dz[1].norm()) * (xi[0].hypot(xi[1]) + eps_tilde);
    let noise = 100.0 * f64::EPSILON * scale / (eps * eps_tilde);

    let mut rho = vec![Complex64::new(0.0, 0.0); retained.len()];
    let mut b = Complex64::new(0.0, 0.0);
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut grad_norm = 0.0;
    for _ in 0..opts.max_iter {
        iterations += 1;
        let mut grad = vec![[Complex64::new(0.0, 0.0); 2]; n * n];
        for j in 0..2 {
            let mut coeffs = vec![Complex64::new(0.0, 0.0); n * n];
            for (k, c) in retained.iter().zip(&rho) {
                coeffs[grid.slot(*k)] += i * k[j] as f64 * c;
            }
            for (g, v) in grad.iter_mut().zip(grid.synthesize(coeffs)) {
                g[j] = v + b * grad_w_star[j];
            }
        }
        let g_hat = grid.analyze(g_of(&grad));
        let b_new = -g_hat[grid.slot([0, 0])] / eps;
        let mut rho_new: Vec<Complex64> = retained
            .iter()
            .zip(&divisors)
            .map(|(k, d)| if *k == [0, 0] { Complex64::new(0.0, 0.0) } else { -g_hat[grid.slot(*k)] / d })
            .collect();
        let at_origin: Complex64 = rho_new.iter().sum();
        rho_new[retained.len() / 2] = -at_origin;

        let grad_w2 = grad_w_star[0].norm_sqr() + grad_w_star[1].norm_sqr();
        let h_norm = |rh: &[Complex64], bb: Complex64| {
            let per: f64 = retained
                .iter()
                .zip(rh)
                .map(|(k, c)| sobolev_weight(*k, opts.sobolev_s) * c.norm_sqr() * (k[0] * k[0] + k[1] * k[1]) as f64)
                .sum();
            (per + bb.norm_sqr() * grad_w2).sqrt()
        };
        let delta: Vec<Complex64> = rho_new.iter().zip(&rho).map(|(a, c)| a - c).collect();
        let diff = h_norm(&delta, b_new - b);
        grad_norm = h_norm(&rho_new, b_new);
        history.push(diff);
        rho = rho_new;
        b = b_new;
        if diff <= (opts.tol * grad_norm).max(noise) {
            converged = true;
            break;
        }
    }

    let rho_caps = Caps::new(cap, 0, 0);
    let rho_per = ClassicalSymbol::from_terms(
        rho_caps,
        retained.iter().zip(&rho).filter(|(_, c)| c.norm() > 0.0).map(|(k, c)| (Monomial::new(*k, [0, 0], 0), *c)),
    )?;
    let mut sol = PhaseSolution {
        xi,
        eps,
        eps_tilde,
        rho_per,
        b,
        grad_w_star,
        residual: 0.0,
        iterations,
        contraction_history: history,
        gradient_norm: grad_norm,
        smallness,
        converged,
    };
    sol.residual = residual(&sol, p_full, z, n + 3);
    let tail = retained
        .iter()
        .zip(&rho)
        .filter(|(k, _)| k[0].abs().max(k[1].abs()) > cap - r_modes.max(1))
        .map(|(k, c)| c.norm() * (k[0] as f64).hypot(k[1] as f64))
        .fold(0.0, f64::max);
    Ok((sol, tail))
}

/// `max |p(x, ξ + ε̃ρ'(x), ε) − z|` on an `m × m` grid.
fn residual(sol: &PhaseSolution, p_full: &ClassicalSymbol, z: Complex64, m: usize) -> f64 {
    let h = 2.0 * std::f64::consts::PI / m as f64;
    (0..m * m)
        .into_par_iter()
        .map(|idx| {
            let x = [(idx / m) as f64 * h, (idx % m) as f64 * h];
            let g = sol.gradient(x);
            let arg = [0, 1].map(|j| Complex64::from(sol.xi[j]) + g[j] * sol.eps_tilde);
            (p_full.evaluate(x, arg, sol.eps) - z).norm()
        })
        .reduce(|| 0.0, f64::max)
}

/// Tolerance for the x-independence of the action increment.
const ACTION_TOL: f64 = 1e-10;

/// `η_j = ξ_j + (ψ(x + 2πe_j) − ψ(x)) / 2π`, checked at several `x`.
pub fn action_of(sol: &PhaseSolution) -> Result<[Complex64; 2]> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let probes = [[0.0, 0.0], [1.1, 0.4], [2.5, 5.0], [4.0, 3.3]];
    let mut eta = [Complex64::new(0.0, 0.0); 2];
    for (n, x) in probes.iter().enumerate() {
        for j in 0..2 {
            let mut shifted = *x;
            shifted[j] += two_pi;
            let v = Complex64::from(sol.xi[j]) + (sol.psi(shifted) - sol.psi(*x)) / two_pi;
            if n == 0 {
                eta[j] = v;
            } else if (v - eta[j]).norm() > ACTION_TOL * eta[j].norm().max(1.0) {
                return Err(Error::NoConvergence(format!("action increment depends on x at {x:?}")));
            }
        }
    }
    Ok(eta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionSample {
    pub xi: [f64; 2],
    pub eta: [Complex64; 2],
}

/// Solves the phase and reads off the action at every grid point.
pub fn action_map(
    p_full: &ClassicalSymbol,
    p_poly: &ClassicalSymbol,
    xis: &[[f64; 2]],
    eps: f64,
    eps_tilde: f64,
    opts: &HjOptions,
) -> Result<Vec<ActionSample>> {
    xis.par_iter()
        .map(|&xi| {
            let sol = hj_solve(p_full, p_poly, xi, eps, eps_tilde, opts)?;
            Ok(ActionSample { xi, eta: action_of(&sol)? })
        })
        .collect()
}

/// Finds real `ξ` with `η(ξ) = target` by damped Gauss–Newton.
pub fn invert_action(
    p_full: &ClassicalSymbol,
    p_poly: &ClassicalSymbol,
    target: [Complex64; 2],
    guess: [f64; 2],
    eps: f64,
    eps_tilde: f64,
    opts: &HjOptions,
) -> Result<[f64; 2]> {
    let eta = |xi: [f64; 2]| -> Result<[Complex64; 2]> { action_of(&hj_solve(p_full, p_poly, xi, eps, eps_tilde, opts)?) };
    let misfit = |e: [Complex64; 2]| [e[0] - target[0], e[1] - target[1]];
    let norm = |r: [Complex64; 2]| (r[0].norm_sqr() + r[1].norm_sqr()).sqrt();
    let mut xi = guess;
    let mut res = misfit(eta(xi)?);
    let step = 1e-7 * eps_tilde;
    for _ in 0..50 {
        if norm(res) < 1e-14 * eps_tilde.max(1.0) {
            return Ok(xi);
        }
        // Jacobian columns as 4 real rows (Re, Im of both components).
        let mut jac = [[0.0; 2]; 4];
        for c in 0..2 {
            let mut a = xi;
            a[c] += step;
            let mut bm = xi;
            bm[c] -= step;
            let (ea, eb) = (eta(a)?, eta(bm)?);
            for r in 0..2 {
                let d = (ea[r] - eb[r]) / (2.0 * step);
                jac[2 * r][c] = d.re;
                jac[2 * r + 1][c] = d.im;
            }
        }
        let rv = [res[0].re, res[0].im, res[1].re, res[1].im];
        let mut ata = [[0.0; 2]; 2];
        let mut atr = [0.0; 2];
        for r in 0..4 {
            for a in 0..2 {
                atr[a] += jac[r][a] * rv[r];
                for c in 0..2 {
                    ata[a][c] += jac[r][a] * jac[r][c];
                }
            }
        }
        let det = ata[0][0] * ata[1][1] - ata[0][1] * ata[1][0];
        if det.abs() < 1e-300 {
            return Err(Error::NoConvergence("singular action Jacobian".into()));
        }
        let dx = [
            (ata[1][1] * atr[0] - ata[0][1] * atr[1]) / det,
            (ata[0][0] * atr[1] - ata[1][0] * atr[0]) / det,
        ];
        let mut t = 1.0;
        loop {
            let trial = [xi[0] - t * dx[0], xi[1] - t * dx[1]];
            let r = misfit(eta(trial)?);
            if norm(r) < norm(res) || t < 1e-6 {
                xi = trial;
                res = r;
                break;
            }
            t *= 0.5;
        }
    }
    if norm(res) < 1e-11 {
        Ok(xi)
    } else {
        Err(Error::NoConvergence(format!("action inversion stalled at misfit {:.3e}", norm(res))))
    }
}
