//! Classical and quantum Birkhoff normal forms near the torus `ξ = 0`.
//!
//! The full reduction runs three stages on `P = p_0 + h p_1 + …`:
//!
//! 1. first-order averaging: a generator `ε g(x, ξ)` removes the
//!    x-dependence of the `ε¹` layer of `p_0` through ξ-order `N − 1`;
//! 2. classical normal form: generators `G_j` of degree `j + 1` make `p_0`
//!    x-independent through degree `N`, applied to `P` as `e^{(i/h) ad G}`;
//! 3. quantum normal form: `Q = Σ h^n q_n` makes every h-term x-independent
//!    through total `(ξ, ε, h)`-degree `N`, applied as `e^{ad Q}`.
//!
//! Generators are normalized to have zero torus average.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbol::{
    exp_hamiltonian_compose, lie_series, moyal_bracket_graded, Caps, ClassicalSymbol, FrequencyVector, Monomial,
    OperatorSymbol,
};

/// Default ceiling on the normal-form order.
pub const MAX_ORDER: u32 = 8;

/// Solves `a·∂_x G = rhs` mode by mode.
pub fn cohomological_solve(rhs: &ClassicalSymbol, freq: &FrequencyVector) -> Result<ClassicalSymbol> {
    if rhs.terms().any(|(m, _)| m.is_x_independent()) {
        return Err(Error::Precondition("cohomological right-hand side has a k = 0 mode".into()));
    }
    let mut terms = Vec::with_capacity(rhs.len());
    for (m, c) in rhs.terms() {
        let ak = freq.dot(m.k);
        let floor = freq.guard(m.k);
        if ak.abs() < floor {
            return Err(Error::SmallDivisor { k: m.k, divisor: ak.abs(), floor });
        }
        terms.push((*m, c / Complex64::new(0.0, ak)));
    }
    Ok(ClassicalSymbol::from_terms(rhs.caps(), terms)?.with_flags(rhs.is_real_on_real(), rhs.is_truncated()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalNormalForm {
    /// `G_1, …, G_{N−1}`, `G_j` homogeneous of degree `j + 1`.
    pub generators: Vec<ClassicalSymbol>,
    /// x-independent part of `p_0 ∘ exp(H_G)` through degree `N`.
    pub normal: ClassicalSymbol,
    /// `p_0 ∘ exp(H_G) − normal`, computed through `residual_degree`.
    pub residual: ClassicalSymbol,
}

/// Tuning of the normal-form computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalFormOptions {
    pub order: u32,
    /// Degree through which the conjugated symbol is kept (at least `order + 1`).
    pub residual_degree: u32,
    pub max_order: u32,
}

impl NormalFormOptions {
    pub fn new(order: u32) -> Self {
        NormalFormOptions { order, residual_degree: order + 1, max_order: MAX_ORDER }
    }

    pub fn with_residual_degree(mut self, d: u32) -> Self {
        self.residual_degree = d;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.order == 0 || self.order > self.max_order {
            return Err(Error::Precondition(format!(
                "normal-form order {} outside 1..={}",
                self.order, self.max_order
            )));
        }
        if self.residual_degree <= self.order {
            return Err(Error::Precondition("residual degree must exceed the order".into()));
        }
        Ok(())
    }

    fn widen(&self, caps: Caps) -> Caps {
        Caps::new(caps.k_max, caps.n_xi.max(self.residual_degree), caps.m_eps.max(self.residual_degree))
    }
}

fn check_frequency(p0: &ClassicalSymbol, freq: &FrequencyVector) -> Result<()> {
    let lin = [
        p0.coeff(&Monomial::new([0, 0], [1, 0], 0)),
        p0.coeff(&Monomial::new([0, 0], [0, 1], 0)),
    ];
    let scale = freq.a[0].abs().max(freq.a[1].abs());
    for j in 0..2 {
        if (lin[j] - Complex64::from(freq.a[j])).norm() > 1e-12 * scale {
            return Err(Error::Precondition(format!(
                "linear part of the leading symbol is {lin:?}, expected a = {:?}",
                freq.a
            )));
        }
    }
    Ok(())
}

fn x_dependent_below(s: &ClassicalSymbol, degree: u32) -> f64 {
    s.x_dependent_part().truncate_degree(degree).max_norm()
}

/// Below this fraction of the symbol size, x-dependent coefficients count as zero.
const X_TOL: f64 = 1e-12;

fn classical_impl(
    p0: &ClassicalSymbol,
    freq: &FrequencyVector,
    opts: &NormalFormOptions,
) -> Result<ClassicalNormalForm> {
    opts.validate()?;
    let n = opts.order;
    if x_dependent_below(p0, 1) > X_TOL * p0.max_norm() {
        return Err(Error::Precondition(
            "degree <= 1 part of the leading symbol must be x-independent".into(),
        ));
    }
    check_frequency(p0, freq)?;
    let caps = p0.caps();
    let mut generators = Vec::new();
    let mut total = ClassicalSymbol::zero(caps);
    for j in 1..n {
        let composed = exp_hamiltonian_compose(p0, &total, j + 1)?;
        let rhs = composed.degree_part(j + 1).x_dependent_part();
        let g = cohomological_solve(&rhs, freq)?;
        total = total.add(&g)?;
        generators.push(g);
    }
    let composed = exp_hamiltonian_compose(p0, &total, opts.residual_degree)?;
    let normal = composed.torus_average().truncate_degree(n);
    let residual = composed.sub(&normal)?;
    Ok(ClassicalNormalForm { generators, normal, residual })
}

/// Generators making `p_0 ∘ exp(H_G)` x-independent through degree `N`.
pub fn classical_normal_form(
    p0: &ClassicalSymbol,
    freq: &FrequencyVector,
    n: u32,
) -> Result<ClassicalNormalForm> {
    let opts = NormalFormOptions::new(n);
    let p0 = p0.with_caps(opts.widen(p0.caps()));
    classical_impl(&p0, freq, &opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalFormResult {
    /// x-independent symbol through total degree `N`.
    pub p_normal: OperatorSymbol,
    /// First-order averaging generator `ε g(x, ξ)`, if one was needed.
    pub averaging_generator: Option<ClassicalSymbol>,
    pub generators_g: Vec<ClassicalSymbol>,
    pub generators_q: Vec<ClassicalSymbol>,
    pub order_n: u32,
    /// ℓ¹ norm of the degree-`(N+1)` layer of the conjugated symbol; the
    /// constant of the per-point error budget.
    pub remainder_norm: f64,
    /// Largest x-dependent coefficient left at total degree `≤ N`.
    pub x_residual_max: f64,
    /// Conjugated symbol through `residual_degree`.
    pub conjugated: OperatorSymbol,
    /// Some operation dropped keys outside the caps.
    pub truncated: bool,
}

fn series_guard(caps: Caps, degree: u32) -> usize {
    ((degree + 2) * (caps.n_xi + 2)) as usize
}

/// `e^{(i/h) ad G} P` through total degree `degree`.
fn conjugate_classical(p: &OperatorSymbol, g: &ClassicalSymbol, degree: u32) -> Result<OperatorSymbol> {
    if g.is_zero() {
        return Ok(p.truncate_total_degree(degree));
    }
    let gop = OperatorSymbol::from_leading(g.clone());
    lie_series(p, degree, series_guard(p.caps(), degree), |x| moyal_bracket_graded(&gop, x, degree))
}

/// `e^{ad Q} P = e^Q P e^{−Q}` through total degree `degree`, using
/// `[Q, X] = −ih · (i/h)[Q, X]`.
fn conjugate_quantum(p: &OperatorSymbol, q: &OperatorSymbol, degree: u32) -> Result<OperatorSymbol> {
    if q.is_zero() {
        return Ok(p.truncate_total_degree(degree));
    }
    let minus_i = Complex64::new(0.0, -1.0);
    lie_series(p, degree, series_guard(p.caps(), degree), |x| {
        Ok(moyal_bracket_graded(q, x, degree.saturating_sub(1))?.shift_h(1).scale(minus_i))
    })
}

/// Solves `∇p_N(ξ)·∂_x g = w_x` through ξ-degree `order − 1`, where `ε w` is
/// the `ε¹` layer and `p_N` the x-independent `ε⁰` layer of `p_0`.
fn averaging_generator(
    p0: &ClassicalSymbol,
    freq: &FrequencyVector,
    order: u32,
) -> Result<Option<ClassicalSymbol>> {
    let w = p0.eps_layer(1).x_dependent_part().filter(|m| m.xi_degree() < order);
    if w.is_zero() {
        return Ok(None);
    }
    let p_n = p0.eps_layer(0).torus_average();
    let higher = [p_n.dxi(0).filter(|m| m.degree() > 0), p_n.dxi(1).filter(|m| m.degree() > 0)];
    let mut g = ClassicalSymbol::zero(p0.caps());
    for d in 0..order {
        let coupling = higher[0].mul(&g.dx(0))?.add(&higher[1].mul(&g.dx(1))?)?;
        let rhs = w.sub(&coupling)?.filter(|m| m.xi_degree() == d).x_dependent_part();
        if !rhs.is_zero() {
            g = g.add(&cohomological_solve(&rhs, freq)?)?;
        }
    }
    Ok(Some(g.shift_eps(1)))
}

fn quantum_stage(
    p: &OperatorSymbol,
    freq: &FrequencyVector,
    opts: &NormalFormOptions,
) -> Result<(Vec<ClassicalSymbol>, OperatorSymbol)> {
    let n = opts.order;
    let caps = p.caps();
    let mut qs = vec![ClassicalSymbol::zero(caps); n as usize];
    let q_op = |qs: &[ClassicalSymbol]| OperatorSymbol::new(qs.to_vec());
    let scale = p.max_norm().max(f64::MIN_POSITIVE);
    for hn in 0..n {
        for d in 0..(n - hn) {
            let current = conjugate_quantum(p, &q_op(&qs)?, n)?;
            let r = current.h_term(hn as usize + 1).degree_part(d).x_dependent_part();
            if r.max_norm() <= X_TOL * scale {
                continue;
            }
            let u = cohomological_solve(&r.scale(Complex64::i()), freq)?;
            qs[hn as usize] = qs[hn as usize].add(&u)?;
        }
    }
    let conj = conjugate_quantum(p, &q_op(&qs)?, opts.residual_degree)?;
    Ok((qs, conj))
}

fn assemble(
    conj: OperatorSymbol,
    averaging: Option<ClassicalSymbol>,
    generators_g: Vec<ClassicalSymbol>,
    generators_q: Vec<ClassicalSymbol>,
    order: u32,
) -> NormalFormResult {
    let p_normal = conj.torus_average().truncate_total_degree(order);
    let remainder_norm = conj.total_degree_part(order + 1).l1_norm();
    let x_residual_max = conj.x_dependent_part().truncate_total_degree(order).max_norm();
    let truncated = conj.is_truncated()
        || averaging.as_ref().is_some_and(ClassicalSymbol::is_truncated)
        || generators_g.iter().chain(&generators_q).any(ClassicalSymbol::is_truncated);
    NormalFormResult {
        p_normal,
        averaging_generator: averaging,
        generators_g,
        generators_q,
        order_n: order,
        remainder_norm,
        x_residual_max,
        conjugated: conj,
        truncated,
    }
}

/// Quantum normal form of an operator whose leading symbol is already normal through degree `N`.
pub fn quantum_normal_form(p: &OperatorSymbol, freq: &FrequencyVector, n: u32) -> Result<NormalFormResult> {
    let opts = NormalFormOptions::new(n);
    opts.validate()?;
    let p = p.with_caps(opts.widen(p.caps()));
    let p0 = p.h_term(0);
    if x_dependent_below(&p0, n) > X_TOL * p0.max_norm() {
        return Err(Error::Precondition(format!(
            "leading symbol is not in normal form through degree {n}; run the classical stage first"
        )));
    }
    check_frequency(&p0, freq)?;
    let (qs, conj) = quantum_stage(&p, freq, &opts)?;
    Ok(assemble(conj, None, Vec::new(), qs, n))
}

/// Averaging, classical and quantum stages in sequence.
pub fn full_normal_form_pipeline(p: &OperatorSymbol, freq: &FrequencyVector, n: u32) -> Result<NormalFormResult> {
    full_normal_form_pipeline_with(p, freq, &NormalFormOptions::new(n))
}

pub fn full_normal_form_pipeline_with(
    p: &OperatorSymbol,
    freq: &FrequencyVector,
    opts: &NormalFormOptions,
) -> Result<NormalFormResult> {
    opts.validate()?;
    let degree = opts.residual_degree;
    let p = p.with_caps(opts.widen(p.caps())).truncate_total_degree(degree);
    let p0 = p.h_term(0);
    check_frequency(&p0, freq)?;
    let lead_eps0 = p0.eps_layer(0);
    if x_dependent_below(&lead_eps0, 1) > X_TOL * p0.max_norm() || x_dependent_below(&p0, 0) > 0.0 {
        return Err(Error::Precondition(
            "the (xi, eps)-degree <= 1 part of the leading symbol may depend on x only through its eps term".into(),
        ));
    }

    let averaging = averaging_generator(&p0, freq, opts.order)?;
    let p_a = match &averaging {
        Some(g) => conjugate_classical(&p, g, degree)?,
        None => p,
    };

    let classical = classical_impl(&p_a.h_term(0), freq, opts)?;
    let mut g_total = ClassicalSymbol::zero(p_a.caps());
    for g in &classical.generators {
        g_total = g_total.add(g)?;
    }
    let p_b = conjugate_classical(&p_a, &g_total, degree)?;

    let (qs, conj) = quantum_stage(&p_b, freq, opts)?;
    Ok(assemble(conj, averaging, classical.generators, qs, opts.order))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbol::poisson_bracket;

    const PHI: f64 = 1.618_033_988_749_895;

    fn caps() -> Caps {
        Caps::new(8, 6, 6)
    }

    fn sym(terms: &[([i32; 2], [u32; 2], u32, f64, f64)]) -> ClassicalSymbol {
        ClassicalSymbol::from_terms(
            caps(),
            terms.iter().map(|&(k, a, m, re, im)| (Monomial::new(k, a, m), Complex64::new(re, im))),
        )
        .unwrap()
    }

    fn freq() -> FrequencyVector {
        FrequencyVector::new([1.0, PHI], 2.0, 2.0).unwrap()
    }

    fn lin() -> ClassicalSymbol {
        ClassicalSymbol::linear_xi(caps(), [1.0, PHI]).unwrap()
    }

    #[test]
    fn cohomological_examples() {
        let cos = sym(&[([1, 0], [0, 0], 0, 0.5, 0.0), ([-1, 0], [0, 0], 0, 0.5, 0.0)]);
        let g = cohomological_solve(&cos, &freq()).unwrap();
        let sin = sym(&[([1, 0], [0, 0], 0, 0.0, -0.5), ([-1, 0], [0, 0], 0, 0.0, 0.5)]);
        assert!(g.sub(&sin).unwrap().max_norm() < 1e-15);

        let e = sym(&[([1, 1], [0, 0], 0, 1.0, 0.0)]);
        let g = cohomological_solve(&e, &freq()).unwrap();
        let want = Complex64::new(1.0, 0.0) / Complex64::new(0.0, 1.0 + PHI);
        assert!((g.coeff(&Monomial::new([1, 1], [0, 0], 0)) - want).norm() < 1e-15);
    }

    #[test]
    fn cohomological_rejects_resonance_and_averages() {
        let f = FrequencyVector::new([1.0, 2.0], 2.0, 2.0).unwrap();
        let r = sym(&[([2, -1], [0, 0], 0, 1.0, 0.0)]);
        assert!(matches!(cohomological_solve(&r, &f), Err(Error::SmallDivisor { k: [2, -1], .. })));
        let c = sym(&[([0, 0], [1, 0], 0, 1.0, 0.0)]);
        assert!(matches!(cohomological_solve(&c, &freq()), Err(Error::Precondition(_))));
    }

    #[test]
    fn classical_already_normal() {
        let nf = classical_normal_form(&lin(), &freq(), 3).unwrap();
        assert!(nf.generators.iter().all(ClassicalSymbol::is_zero));
        assert!(nf.normal.sub(&lin().with_caps(nf.normal.caps())).unwrap().is_zero());
    }

    #[test]
    fn classical_makes_symbol_x_independent() {
        // a·ξ + iε⟨q⟩ + ε² cos x₁ + ξ₁ε e^{i x₂}-type terms
        let p0 = lin()
            .add(&sym(&[
                ([0, 0], [0, 1], 1, 0.0, 1.0),
                ([1, 0], [0, 0], 2, 0.5, 0.0),
                ([-1, 0], [0, 0], 2, 0.5, 0.0),
                ([0, 1], [0, 0], 2, 0.0, 0.3),
                ([0, 1], [1, 0], 1, 0.2, 0.1),
                ([1, -1], [2, 0], 0, 0.3, 0.0),
                ([-1, 1], [2, 0], 0, 0.3, 0.0),
                ([0, 0], [2, 0], 0, 0.5, 0.0),
            ]))
            .unwrap();
        for n in 2..=5 {
            let nf = classical_normal_form(&p0, &freq(), n).unwrap();
            assert_eq!(nf.generators.len() as u32, n - 1);
            for (j, g) in nf.generators.iter().enumerate() {
                assert!(g.terms().all(|(m, _)| m.degree() == j as u32 + 2), "G_{} not homogeneous", j + 1);
            }
            assert!(nf.residual.truncate_degree(n).x_dependent_part().max_norm() < 1e-10);
            assert!(nf.residual.terms().all(|(m, _)| m.degree() > n));
            assert!(nf.normal.is_x_independent());
        }
    }

    #[test]
    fn classical_rejects_x_dependent_linear_part() {
        let p0 = lin().add(&sym(&[([1, 0], [0, 0], 1, 0.0, 1.0)])).unwrap();
        assert!(matches!(classical_normal_form(&p0, &freq(), 2), Err(Error::Precondition(_))));
    }

    #[test]
    fn quantum_first_step() {
        let p1 = sym(&[([0, 1], [0, 0], 0, 0.5, 0.0), ([0, -1], [0, 0], 0, 0.5, 0.0)]);
        let p = OperatorSymbol::new(vec![lin(), p1.clone()]).unwrap();
        let nf = quantum_normal_form(&p, &freq(), 2).unwrap();
        let q0 = &nf.generators_q[0];
        // a·∂_x q₀ = i cos x₂
        let lhs = q0.transport([1.0, PHI]);
        let rhs = p1.scale(Complex64::i()).with_caps(lhs.caps());
        assert!(lhs.sub(&rhs).unwrap().max_norm() < 1e-14);
        // s₁ = p₁ + i H_{p₀} q₀ = 0
        let s1 = p1.with_caps(lhs.caps()).add(&poisson_bracket(&lin().with_caps(lhs.caps()), q0).unwrap().scale(Complex64::i())).unwrap();
        assert!(s1.max_norm() < 1e-14);
        assert!(nf.p_normal.h_term(1).is_zero());
    }

    #[test]
    fn pipeline_identity_on_normal_input() {
        let p = OperatorSymbol::new(vec![lin(), sym(&[([0, 0], [1, 0], 0, 0.3, 0.0)])]).unwrap();
        let nf = full_normal_form_pipeline(&p, &freq(), 3).unwrap();
        assert!(nf.averaging_generator.is_none());
        assert!(nf.generators_g.iter().chain(&nf.generators_q).all(ClassicalSymbol::is_zero));
        assert!(nf.p_normal.sub(&p.with_caps(nf.p_normal.caps())).unwrap().is_zero());
    }

    #[test]
    fn pipeline_averages_the_eps_term() {
        let q = sym(&[
            ([1, 0], [0, 0], 1, 0.0, 0.5),
            ([-1, 0], [0, 0], 1, 0.0, 0.5),
            ([0, 0], [0, 0], 1, 0.0, 0.7),
        ]);
        let p = OperatorSymbol::from_leading(lin().add(&q).unwrap());
        let nf = full_normal_form_pipeline(&p, &freq(), 3).unwrap();
        assert!(nf.x_residual_max < 1e-12);
        let lead = nf.p_normal.h_term(0);
        assert!((lead.coeff(&Monomial::new([0, 0], [0, 0], 1)) - Complex64::new(0.0, 0.7)).norm() < 1e-14);
        assert!((lead.coeff(&Monomial::new([0, 0], [1, 0], 0)) - Complex64::from(1.0)).norm() < 1e-14);
        for (j, g) in nf.generators_g.iter().enumerate() {
            assert!(g.terms().all(|(m, _)| m.m >= 2), "G_{} not O(eps^2)", j + 1);
        }
        assert!(nf.generators_g[0].terms().all(|(m, _)| m.xi_degree() == 0));
    }

    #[test]
    fn orders_are_compatible() {
        let p0 = lin()
            .add(&sym(&[
                ([0, 0], [2, 0], 0, 0.5, 0.0),
                ([0, 0], [0, 2], 0, 0.5, 0.0),
                ([1, 0], [0, 0], 1, 0.0, 0.5),
                ([-1, 0], [0, 0], 1, 0.0, 0.5),
                ([1, -1], [1, 0], 1, 0.0, 0.25),
                ([-1, 1], [1, 0], 1, 0.0, 0.25),
            ]))
            .unwrap();
        let p1 = sym(&[([0, 1], [0, 0], 0, 0.5, 0.0), ([0, -1], [0, 0], 0, 0.5, 0.0)]);
        let p = OperatorSymbol::new(vec![p0, p1]).unwrap();
        let n3 = full_normal_form_pipeline(&p, &freq(), 3).unwrap();
        let n5 = full_normal_form_pipeline(&p, &freq(), 5).unwrap();
        let diff = n5.p_normal.with_caps(n3.p_normal.caps()).truncate_total_degree(3).sub(&n3.p_normal).unwrap();
        assert!(diff.max_norm() < 1e-12, "{}", diff.max_norm());
    }

    #[test]
    fn selfadjoint_base_stays_real() {
        let p0 = lin().add(&sym(&[([0, 0], [2, 0], 0, 0.5, 0.0)])).unwrap();
        let p1 = sym(&[([1, 1], [0, 0], 0, 0.5, 0.0), ([-1, -1], [0, 0], 0, 0.5, 0.0)]);
        let p2 = sym(&[([0, 1], [1, 0], 0, 0.5, 0.0), ([0, -1], [1, 0], 0, 0.5, 0.0)]);
        let p = OperatorSymbol::new(vec![p0, p1, p2]).unwrap();
        let nf = full_normal_form_pipeline(&p, &freq(), 4).unwrap();
        for t in nf.p_normal.h_terms() {
            let eps0 = t.eps_layer(0);
            assert!(eps0.terms().all(|(_, c)| c.im.abs() < 1e-12 * t.max_norm().max(1.0)));
        }
    }

    #[test]
    fn order_guard() {
        let p = OperatorSymbol::from_leading(lin());
        assert!(full_normal_form_pipeline(&p, &freq(), 0).is_err());
        assert!(full_normal_form_pipeline(&p, &freq(), 9).is_err());
    }
}
