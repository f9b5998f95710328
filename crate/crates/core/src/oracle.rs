//! Reference spectra: the Weyl quantization of a symbol as a dense matrix on
//! the Floquet basis `e_l`, `hD_x e_l = ξ_l e_l`, and matching of eigenvalue
//! clouds.

use std::collections::HashMap;

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantization::{lattice_points, QuantizationData, Rectangle, Source, SpectralCloud, SpectralPoint};
use crate::symbol::{lie_series, moyal_bracket, Caps, ClassicalSymbol, OperatorSymbol};

/// Default cap on the basis size.
pub const BASIS_CAP: usize = 4000;
/// Rectangles must stay this many mode widths `K h` inside the basis shell.
pub const SHELL_MODES: f64 = 5.0;
/// Above this many points, matching is greedy with swap refinement.
pub const EXACT_MATCH_LIMIT: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub h: f64,
    pub eps: f64,
    pub r: f64,
    pub caps: Caps,
    /// Largest `|k_j|` among the symbol's Fourier modes.
    pub max_mode: i32,
}

#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub basis: Vec<[i32; 2]>,
    pub xi: Vec<[f64; 2]>,
    pub entries: Mat<Complex64>,
    pub meta: MatrixMeta,
    /// Couplings whose target left the basis.
    pub dropped: usize,
}

impl OperatorMatrix {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.entries[(row, col)]
    }

    /// Row-major copy of the entries.
    pub fn row_major(&self) -> Vec<Complex64> {
        let n = self.dim();
        (0..n * n).map(|i| self.entries[(i / n, i % n)]).collect()
    }

    fn triangular(&self) -> bool {
        let n = self.dim();
        let lower = (0..n).all(|j| (0..j).all(|i| self.entries[(i, j)] == Complex64::new(0.0, 0.0)));
        let upper = || (0..n).all(|j| (j + 1..n).all(|i| self.entries[(i, j)] == Complex64::new(0.0, 0.0)));
        lower || upper()
    }
}

pub fn build_matrix(p: &OperatorSymbol, qd: &QuantizationData, r: f64) -> Result<OperatorMatrix> {
    build_matrix_capped(p, qd, r, BASIS_CAP)
}

/// Adds `h^n ε^m c (ξ_l + hk/2)^α` to entry `(l + k, l)` for every term.
pub fn build_matrix_capped(p: &OperatorSymbol, qd: &QuantizationData, r: f64, cap: usize) -> Result<OperatorMatrix> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Invalid(format!("basis radius must be positive, got {r}")));
    }
    let pts = lattice_points(&qd.with_radius(r))?;
    if pts.len() > cap {
        return Err(Error::Invalid(format!("basis has {} elements, cap is {cap}", pts.len())));
    }
    let basis: Vec<[i32; 2]> = pts.iter().map(|p| p.k).collect();
    let xi: Vec<[f64; 2]> = pts.iter().map(|p| p.xi).collect();
    let index: HashMap<[i32; 2], usize> = basis.iter().enumerate().map(|(i, k)| (*k, i)).collect();
    let terms: Vec<_> = p
        .iter_terms()
        .map(|(n, m, c)| (m.k, m.alpha, c * qd.h.powi(n as i32) * qd.eps.powi(m.m as i32)))
        .collect();
    let columns: Vec<(Vec<(usize, Complex64)>, usize)> = (0..basis.len())
        .into_par_iter()
        .map(|col| {
            let l = basis[col];
            let mut acc: HashMap<usize, Complex64> = HashMap::new();
            let mut dropped = 0;
            for &(k, alpha, c) in &terms {
                let Some(&row) = index.get(&[l[0] + k[0], l[1] + k[1]]) else {
                    dropped += 1;
                    continue;
                };
                let mid = [0, 1].map(|j| xi[col][j] + qd.h * k[j] as f64 / 2.0);
                *acc.entry(row).or_default() += c * mid[0].powi(alpha[0] as i32) * mid[1].powi(alpha[1] as i32);
            }
            (acc.into_iter().collect(), dropped)
        })
        .collect();
    let n = basis.len();
    let mut entries = Mat::<Complex64>::zeros(n, n);
    let mut dropped = 0;
    for (col, (vals, d)) in columns.into_iter().enumerate() {
        dropped += d;
        for (row, v) in vals {
            entries[(row, col)] = v;
        }
    }
    Ok(OperatorMatrix {
        basis,
        xi,
        entries,
        meta: MatrixMeta { h: qd.h, eps: qd.eps, r, caps: p.caps(), max_mode: p.max_mode() },
        dropped,
    })
}

/// Symbol of `e^{−φ/h} P e^{φ/h}` for a weight `φ(x)` without ξ-dependence.
///
/// The conjugation is an exact similarity, so the spectrum is unchanged, but
/// a weight that cancels the x-dependent imaginary part of `P` makes the
/// matrix nearly normal and the dense eigenvalues accurate. The series
/// `Σ (i MB(φ, ·))^n / n!` terminates because each bracket lowers the
/// ξ-degree; caps are widened so that no mode is lost.
pub fn deform_by_weight(p: &OperatorSymbol, phi: &ClassicalSymbol) -> Result<OperatorSymbol> {
    if phi.terms().any(|(m, _)| m.xi_degree() > 0) {
        return Err(Error::Precondition("deformation weight must not depend on xi".into()));
    }
    if phi.is_zero() {
        return Ok(p.clone());
    }
    let caps = p.caps();
    let deg = p.iter_terms().map(|(_, m, _)| m.xi_degree()).max().unwrap_or(0);
    let k_needed = p.max_mode() + deg as i32 * phi.max_mode();
    let m_needed = p.iter_terms().map(|(_, m, _)| m.m).max().unwrap_or(0)
        + deg * phi.terms().map(|(m, _)| m.m).max().unwrap_or(0);
    let wide = Caps::new(caps.k_max.max(k_needed), caps.n_xi, caps.m_eps.max(m_needed));
    let p = p.with_caps(wide);
    let phi = OperatorSymbol::from_leading(phi.with_caps(wide));
    let h_order = deg as usize + p.h_terms().len();
    let out = lie_series(&p, u32::MAX, deg as usize + 2, |x| {
        Ok(moyal_bracket(&phi, x, h_order)?.scale(Complex64::i()))
    })?;
    if out.is_truncated() {
        return Err(Error::Precondition("deformed symbol does not fit the widened caps".into()));
    }
    Ok(out)
}

/// Weight `φ = −i G(x, 0)` matching a generator `G` through `e^{iG/h} = e^{−φ/h}`
/// at `ξ = 0`.
pub fn weight_from_generator(g: &ClassicalSymbol) -> ClassicalSymbol {
    g.filter(|m| m.xi_degree() == 0).scale(Complex64::new(0.0, -1.0))
}

/// Smallest radius keeping the rectangle `5 K h` inside the basis shell, plus
/// one lattice step: `max {|ξ_l| : p̄(ξ_l) ∈ rect} + (5K + 1) h` where `p̄` is
/// the torus average of the matrix symbol.
pub fn safe_radius(p: &OperatorSymbol, qd: &QuantizationData, rect: &Rectangle, search_radius: f64) -> Result<f64> {
    let avg = p.torus_average();
    let pts = lattice_points(&qd.with_radius(search_radius))?;
    let reach = pts
        .par_iter()
        .filter(|lp| rect.contains(avg.evaluate([0.0, 0.0], lp.xi.map(Complex64::from), qd.eps, qd.h)))
        .map(|lp| lp.xi[0].hypot(lp.xi[1]))
        .reduce(|| 0.0, f64::max);
    Ok(reach + (SHELL_MODES * p.max_mode().max(1) as f64 + 1.0) * qd.h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSpectrum {
    /// Eigenvalues inside the rectangle.
    pub cloud: SpectralCloud,
    /// `min (R − |ξ_l|) − 5 K h` over basis points whose diagonal entry lies in
    /// the rectangle; nonnegative by construction.
    pub margin: f64,
    /// All eigenvalues, unfiltered.
    pub all: Vec<Complex64>,
}

/// Distance of the rectangle from the truncation shell, measured in `ξ`.
pub fn shell_margin(m: &OperatorMatrix, rect: &Rectangle) -> f64 {
    let width = SHELL_MODES * m.meta.max_mode.max(1) as f64 * m.meta.h;
    (0..m.dim())
        .filter(|&i| rect.contains(m.entries[(i, i)]))
        .map(|i| m.meta.r - m.xi[i][0].hypot(m.xi[i][1]))
        .fold(f64::INFINITY, f64::min)
        - width
}

/// All eigenvalues of the matrix.
pub fn spectrum(m: &OperatorMatrix) -> Result<Vec<Complex64>> {
    if !m.row_major().iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::Eigensolver("matrix has non-finite entries".into()));
    }
    if m.triangular() {
        return Ok((0..m.dim()).map(|i| m.entries[(i, i)]).collect());
    }
    m.entries.eigenvalues().map_err(|e| Error::Eigensolver(format!("{e:?}")))
}

/// Full dense eigendecomposition, filtered to `rect`, after checking that the
/// rectangle stays clear of the truncation shell.
pub fn eigenvalues(m: &OperatorMatrix, rect: &Rectangle) -> Result<OracleSpectrum> {
    rect.validate()?;
    let margin = shell_margin(m, rect);
    if margin < 0.0 {
        return Err(Error::Precondition(format!(
            "rectangle reaches within {} mode widths of the basis shell |xi| = {} (margin {margin:.3e})",
            SHELL_MODES, m.meta.r
        )));
    }
    let all = spectrum(m)?;
    let points = all
        .iter()
        .filter(|z| rect.contains(**z))
        .map(|&z| SpectralPoint { z, label: None, source: Source::Oracle, xi: None, err_budget: None })
        .collect();
    Ok(OracleSpectrum { cloud: SpectralCloud { points }, margin, all })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub predicted: SpectralPoint,
    pub computed: Complex64,
    /// `|predicted − computed|`.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub pairs: Vec<MatchPair>,
    pub unmatched_lattice: usize,
    pub unmatched_oracle: usize,
    pub max_error: f64,
    pub mean_error: f64,
    pub exact: bool,
}

/// Pairs the clouds by minimal total distance in the metric
/// `|Δre|² + (|Δim|/ε)²` (plain Euclidean when `eps == 0`).
pub fn match_clouds(predicted: &SpectralCloud, computed: &SpectralCloud, rect: &Rectangle, eps: f64) -> MatchReport {
    let pred: Vec<&SpectralPoint> = predicted.points.iter().filter(|p| rect.contains(p.z)).collect();
    let comp: Vec<Complex64> = computed.points.iter().map(|p| p.z).filter(|z| rect.contains(*z)).collect();
    let im_scale = if eps > 0.0 { 1.0 / eps } else { 1.0 };
    let metric = |a: Complex64, b: Complex64| (a.re - b.re).hypot((a.im - b.im) * im_scale);
    let cost: Vec<Vec<f64>> = pred.iter().map(|p| comp.iter().map(|&w| metric(p.z, w)).collect()).collect();
    let exact = pred.len().max(comp.len()) <= EXACT_MATCH_LIMIT;
    let assignment = if exact { hungarian(&cost) } else { greedy_swap(&cost) };
    let pairs: Vec<MatchPair> = assignment
        .iter()
        .map(|&(i, j)| MatchPair { predicted: *pred[i], computed: comp[j], distance: (pred[i].z - comp[j]).norm() })
        .collect();
    let max_error = pairs.iter().map(|p| p.distance).fold(0.0, f64::max);
    let mean_error =
        if pairs.is_empty() { 0.0 } else { pairs.iter().map(|p| p.distance).sum::<f64>() / pairs.len() as f64 };
    MatchReport {
        unmatched_lattice: pred.len() - pairs.len(),
        unmatched_oracle: comp.len() - pairs.len(),
        pairs,
        max_error,
        mean_error,
        exact,
    }
}

/// Minimum-cost assignment of `min(n, m)` rows/columns (Jonker–Volgenant
/// style potentials), returned as `(row, col)` pairs.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Vec::new();
    }
    if n > m {
        let t: Vec<Vec<f64>> = (0..m).map(|j| (0..n).map(|i| cost[i][j]).collect()).collect();
        return hungarian(&t).into_iter().map(|(j, i)| (i, j)).collect();
    }
    // 1-based potentials over rows u and columns v; p[j] is the row matched to column j.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out: Vec<(usize, usize)> = (1..=m).filter(|&j| p[j] != 0).map(|j| (p[j] - 1, j - 1)).collect();
    out.sort_unstable();
    out
}

/// Greedy nearest pairs followed by pairwise swap improvement.
pub fn greedy_swap(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    let mut cand: Vec<(f64, usize, usize)> =
        (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| (cost[i][j], i, j)).collect();
    cand.par_sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let mut row_used = vec![false; n];
    let mut col_used = vec![false; m];
    let mut pairs = Vec::with_capacity(n.min(m));
    for (_, i, j) in cand {
        if !row_used[i] && !col_used[j] {
            row_used[i] = true;
            col_used[j] = true;
            pairs.push((i, j));
        }
    }
    for _ in 0..20 {
        let mut improved = false;
        for a in 0..pairs.len() {
            for b in a + 1..pairs.len() {
                let (i1, j1) = pairs[a];
                let (i2, j2) = pairs[b];
                if cost[i1][j2] + cost[i2][j1] < cost[i1][j1] + cost[i2][j2] - 1e-15 {
                    pairs[a].1 = j2;
                    pairs[b].1 = j1;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    pairs.sort_unstable();
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbol::{ClassicalSymbol, Monomial};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const PHI: f64 = 1.618_033_988_749_895;

    fn caps() -> Caps {
        Caps::new(4, 4, 4)
    }

    fn sym(terms: &[([i32; 2], [u32; 2], u32, f64, f64)]) -> ClassicalSymbol {
        ClassicalSymbol::from_terms(
            caps(),
            terms.iter().map(|&(k, a, m, re, im)| (Monomial::new(k, a, m), Complex64::new(re, im))),
        )
        .unwrap()
    }

    fn qd(h: f64, eps: f64) -> QuantizationData {
        QuantizationData::new(h, eps, 1.0).unwrap()
    }

    #[test]
    fn multiplier_is_diagonal() {
        let p = OperatorSymbol::from_leading(sym(&[([0, 0], [1, 0], 0, 1.0, 0.0), ([0, 0], [0, 2], 0, 0.5, 0.0)]));
        let m = build_matrix(&p, &qd(0.1, 0.0), 0.55).unwrap();
        for i in 0..m.dim() {
            for j in 0..m.dim() {
                let want = if i == j { m.xi[i][0] + 0.5 * m.xi[i][1] * m.xi[i][1] } else { 0.0 };
                assert_eq!(m.entry(i, j), Complex64::from(want));
            }
        }
        assert_eq!(m.dropped, 0);
    }

    #[test]
    fn cosine_entries() {
        let p = OperatorSymbol::from_leading(sym(&[([1, 0], [0, 0], 0, 0.5, 0.0), ([-1, 0], [0, 0], 0, 0.5, 0.0)]));
        let m = build_matrix(&p, &qd(0.1, 0.0), 0.35).unwrap();
        let idx: HashMap<[i32; 2], usize> = m.basis.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        for (col, l) in m.basis.iter().enumerate() {
            for (row, k) in m.basis.iter().enumerate() {
                let d = [k[0] - l[0], k[1] - l[1]];
                let want = if d == [1, 0] || d == [-1, 0] { 0.5 } else { 0.0 };
                assert_eq!(m.entry(row, col), Complex64::from(want));
            }
        }
        assert!(m.dropped > 0);
        assert!(idx.contains_key(&[0, 0]));
    }

    #[test]
    fn midpoint_rule() {
        let h = 0.1;
        let p = OperatorSymbol::from_leading(sym(&[([1, 0], [1, 0], 0, 1.0, 0.0)]));
        let m = build_matrix(&p, &qd(h, 0.0), 0.5).unwrap();
        let idx: HashMap<[i32; 2], usize> = m.basis.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        for (col, l) in m.basis.iter().enumerate() {
            if let Some(&row) = idx.get(&[l[0] + 1, l[1]]) {
                assert!((m.entry(row, col).re - (m.xi[col][0] + h / 2.0)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn h_and_eps_powers() {
        let p = OperatorSymbol::new(vec![
            ClassicalSymbol::zero(caps()),
            sym(&[([0, 0], [0, 0], 2, 3.0, 0.0)]),
        ])
        .unwrap();
        let m = build_matrix(&p, &qd(0.1, 0.2), 0.25).unwrap();
        assert!((m.entry(0, 0).re - 0.1 * 0.04 * 3.0).abs() < 1e-15);
    }

    #[test]
    fn multiplier_spectrum_is_its_diagonal() {
        let p = OperatorSymbol::from_leading(sym(&[([0, 0], [1, 0], 0, 1.0, 0.0), ([0, 0], [0, 1], 1, 0.0, 1.0)]));
        let m = build_matrix(&p, &qd(0.1, 0.1), 0.8).unwrap();
        let ev = spectrum(&m).unwrap();
        for i in 0..m.dim() {
            assert_eq!(ev[i], m.entry(i, i));
        }
    }

    #[test]
    fn hermitian_case_is_real() {
        let p = OperatorSymbol::from_leading(sym(&[
            ([0, 0], [1, 0], 0, 1.0, 0.0),
            ([0, 0], [0, 1], 0, PHI, 0.0),
            ([1, -1], [0, 0], 0, 0.2, 0.0),
            ([-1, 1], [0, 0], 0, 0.2, 0.0),
        ]));
        let m = build_matrix(&p, &qd(0.1, 0.0), 0.6).unwrap();
        assert!(spectrum(&m).unwrap().iter().all(|z| z.im.abs() < 1e-10));
    }

    #[test]
    fn similarity_and_transpose_invariance() {
        let p = OperatorSymbol::from_leading(sym(&[
            ([0, 0], [1, 0], 0, 1.0, 0.0),
            ([0, 0], [0, 1], 0, PHI, 0.0),
            ([1, 0], [0, 0], 1, 0.0, 0.5),
            ([-1, 0], [0, 0], 1, 0.0, 0.5),
            ([1, -1], [0, 0], 1, 0.0, 0.5),
            ([-1, 1], [0, 0], 1, 0.0, 0.5),
        ]));
        let m = build_matrix(&p, &qd(0.1, 0.2), 0.6).unwrap();
        let base = spectrum(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let phases: Vec<Complex64> = (0..m.dim()).map(|_| Complex64::from_polar(1.0, rng.gen_range(0.0..6.28))).collect();
        let mut conj = m.clone();
        conj.entries = Mat::from_fn(m.dim(), m.dim(), |i, j| phases[i] * m.entry(i, j) * phases[j].conj());
        let mut tr = m.clone();
        tr.entries = m.entries.transpose().to_owned();
        for other in [spectrum(&conj).unwrap(), spectrum(&tr).unwrap()] {
            let report = match_clouds(&cloud(&base), &cloud(&other), &Rectangle::new(0.0, 10.0, 0.0, 10.0).unwrap(), 0.0);
            assert_eq!(report.pairs.len(), base.len());
            assert!(report.max_error < 1e-10, "{}", report.max_error);
        }
    }

    fn cloud(zs: &[Complex64]) -> SpectralCloud {
        SpectralCloud {
            points: zs.iter().map(|&z| SpectralPoint { z, label: None, source: Source::Oracle, xi: None, err_budget: None }).collect(),
        }
    }

    #[test]
    fn shell_margin_is_enforced() {
        let p = OperatorSymbol::from_leading(sym(&[
            ([0, 0], [1, 0], 0, 1.0, 0.0),
            ([0, 0], [0, 1], 0, 0.0, 1.0),
            ([1, 0], [0, 0], 0, 0.1, 0.0),
        ]));
        let m = build_matrix(&p, &qd(0.05, 0.0), 0.5).unwrap();
        let inner = Rectangle::new(0.0, 0.1, 0.0, 0.1).unwrap();
        assert!(eigenvalues(&m, &inner).unwrap().margin >= 0.0);
        let outer = Rectangle::new(0.0, 0.45, 0.0, 0.1).unwrap();
        assert!(matches!(eigenvalues(&m, &outer), Err(Error::Precondition(_))));
    }

    #[test]
    fn deformation_substitutes_complex_momentum() {
        // ξ₁ + ½ξ₁² conjugated by e^{φ/h} with φ = 0.1 cos x₁ becomes
        // (ξ₁ − iφ') + ½(ξ₁ − iφ')²
        let p = OperatorSymbol::from_leading(sym(&[([0, 0], [1, 0], 0, 1.0, 0.0), ([0, 0], [2, 0], 0, 0.5, 0.0)]));
        let phi = sym(&[([1, 0], [0, 0], 0, 0.05, 0.0), ([-1, 0], [0, 0], 0, 0.05, 0.0)]);
        let d = deform_by_weight(&p, &phi).unwrap();
        for &(x, xi) in &[(0.3, 0.2), (2.0, -0.7)] {
            let shifted = Complex64::new(xi, 0.1 * f64::sin(x));
            let want = shifted + 0.5 * shifted * shifted;
            let got = d.evaluate([x, 0.0], [Complex64::from(xi), Complex64::from(0.0)], 0.0, 0.01);
            assert!((got - want).norm() < 1e-14, "{got} vs {want}");
        }
    }

    #[test]
    fn deformation_preserves_spectrum() {
        let eps = 0.2;
        // the diagonal ξ₁ + iξ₂ confines the rectangle to the centre of the basis,
        // and its linear growth keeps eigenvectors localized
        let p = OperatorSymbol::from_leading(sym(&[
            ([0, 0], [1, 0], 0, 1.0, 0.0),
            ([0, 0], [0, 1], 0, 0.0, 1.0),
            ([1, 0], [0, 0], 1, 0.0, 0.5),
            ([-1, 0], [0, 0], 1, 0.0, 0.5),
            ([1, 0], [1, 0], 1, 0.0, 0.25),
            ([-1, 0], [1, 0], 1, 0.0, 0.25),
        ]));
        let phi = sym(&[([1, 0], [0, 0], 1, 0.0, -0.2), ([-1, 0], [0, 0], 1, 0.0, 0.2)]);
        let d = deform_by_weight(&p, &phi).unwrap();
        let q = qd(0.1, eps);
        // without truncation at the shell the similarity is exact: compare in a 1-D slab
        let a = spectrum(&build_matrix(&p, &q, 1.4).unwrap()).unwrap();
        let b = spectrum(&build_matrix(&d, &q, 1.4).unwrap()).unwrap();
        let inner = Rectangle::new(0.0, 0.2, 0.0, 0.2).unwrap();
        let mut n = 0;
        for z in a.iter().filter(|z| inner.contains(**z)) {
            let d = b.iter().map(|w| (z - w).norm()).fold(f64::INFINITY, f64::min);
            assert!(d < 1e-9, "{z}: {d}");
            n += 1;
        }
        assert!(n > 3);
    }

    #[test]
    fn weight_rejects_xi_dependence() {
        let p = OperatorSymbol::from_leading(sym(&[([0, 0], [1, 0], 0, 1.0, 0.0)]));
        let phi = sym(&[([1, 0], [1, 0], 0, 1.0, 0.0)]);
        assert!(deform_by_weight(&p, &phi).is_err());
    }

    #[test]
    fn matching_identity_and_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let zs: Vec<Complex64> = (0..40).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let rect = Rectangle::new(0.0, 2.0, 0.0, 2.0).unwrap();
        let r = match_clouds(&cloud(&zs), &cloud(&zs), &rect, 0.0);
        assert_eq!((r.max_error, r.unmatched_lattice, r.unmatched_oracle), (0.0, 0, 0));
        let delta = 1e-4;
        let shifted: Vec<Complex64> = zs.iter().map(|z| z + delta).collect();
        let r = match_clouds(&cloud(&zs), &cloud(&shifted), &rect, 0.0);
        assert!((r.max_error - delta).abs() < 1e-12);
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (n, m) in [(5, 5), (4, 6), (6, 3)] {
            let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
            let total = |pairs: &[(usize, usize)]| pairs.iter().map(|&(i, j)| cost[i][j]).sum::<f64>();
            let best = brute(&cost);
            let got = hungarian(&cost);
            assert_eq!(got.len(), n.min(m));
            assert!((total(&got) - best).abs() < 1e-12);
            assert!(total(&greedy_swap(&cost)) >= best - 1e-12);
        }
    }

    fn brute(cost: &[Vec<f64>]) -> f64 {
        fn rec(cost: &[Vec<f64>], i: usize, used: &mut Vec<bool>, left: usize) -> f64 {
            if left == 0 || i == cost.len() {
                return if left == 0 { 0.0 } else { f64::INFINITY };
            }
            let mut best = rec(cost, i + 1, used, left);
            for j in 0..used.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[i][j] + rec(cost, i + 1, used, left - 1));
                    used[j] = false;
                }
            }
            best
        }
        let m = cost[0].len();
        rec(cost, 0, &mut vec![false; m], cost.len().min(m))
    }
}
