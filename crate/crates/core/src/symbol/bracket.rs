use num_complex::Complex64;

use super::{Accum, ClassicalSymbol, Monomial, OperatorSymbol};
use crate::error::{Error, Result};

/// `{f, g} = Σ_j ∂_{ξ_j} f ∂_{x_j} g − ∂_{x_j} f ∂_{ξ_j} g`.
pub fn poisson_bracket(f: &ClassicalSymbol, g: &ClassicalSymbol) -> Result<ClassicalSymbol> {
    poisson_bracket_graded(f, g, None)
}

/// Poisson bracket with output terms above `max_degree` discarded.
pub fn poisson_bracket_graded(
    f: &ClassicalSymbol,
    g: &ClassicalSymbol,
    max_degree: Option<u32>,
) -> Result<ClassicalSymbol> {
    if f.caps() != g.caps() {
        return Err(Error::CapMismatch(f.caps(), g.caps()));
    }
    let mut acc = Accum::new(f.caps(), max_degree);
    for (mf, cf) in f.terms() {
        for (mg, cg) in g.terms() {
            let k = [mf.k[0] + mg.k[0], mf.k[1] + mg.k[1]];
            let m = mf.m + mg.m;
            let prod = cf * cg;
            for j in 0..2 {
                let w = mf.alpha[j] as f64 * mg.k[j] as f64 - mf.k[j] as f64 * mg.alpha[j] as f64;
                if w == 0.0 {
                    continue;
                }
                let mut alpha = [mf.alpha[0] + mg.alpha[0], mf.alpha[1] + mg.alpha[1]];
                alpha[j] -= 1;
                acc.add(Monomial::new(k, alpha, m), prod * Complex64::new(0.0, w));
            }
        }
    }
    Ok(acc.finish(f.is_real_on_real() && g.is_real_on_real(), f.is_truncated() || g.is_truncated()))
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// `(i k)^g`.
fn ik_pow(k: i32, g: u32) -> Complex64 {
    Complex64::new(0.0, k as f64).powu(g)
}

/// Accumulates the odd-order Moyal terms of one pair of monomials.
///
/// Each contribution lands at h-power `shift + n − 1`, where `n` is the
/// number of derivatives. `sink` receives `(h_power, monomial, coefficient)`.
fn moyal_pair<S: FnMut(usize, Monomial, Complex64)>(
    mf: &Monomial,
    cf: Complex64,
    mg: &Monomial,
    cg: Complex64,
    shift: usize,
    sink: &mut S,
) {
    let k = [mf.k[0] + mg.k[0], mf.k[1] + mg.k[1]];
    let m = mf.m + mg.m;
    let prod = cf * cg;
    for b0 in 0..=mf.alpha[0] {
        for b1 in 0..=mf.alpha[1] {
            for g0 in 0..=mg.alpha[0] {
                for g1 in 0..=mg.alpha[1] {
                    let n = b0 + b1 + g0 + g1;
                    if n % 2 == 0 {
                        continue;
                    }
                    // ∂_ξ^β ∂_x^γ f · ∂_x^β ∂_ξ^γ g, weighted by (h/2i)^{n−1} (−1)^{|γ|} / (β! γ!)
                    let weight = (-0.25f64).powi(((n - 1) / 2) as i32)
                        * if (g0 + g1) % 2 == 0 { 1.0 } else { -1.0 }
                        * binom(mf.alpha[0], b0)
                        * binom(mf.alpha[1], b1)
                        * binom(mg.alpha[0], g0)
                        * binom(mg.alpha[1], g1);
                    let c = prod
                        * weight
                        * ik_pow(mf.k[0], g0)
                        * ik_pow(mf.k[1], g1)
                        * ik_pow(mg.k[0], b0)
                        * ik_pow(mg.k[1], b1);
                    if c == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    let alpha = [mf.alpha[0] - b0 + mg.alpha[0] - g0, mf.alpha[1] - b1 + mg.alpha[1] - g1];
                    sink(shift + (n - 1) as usize, Monomial::new(k, alpha, m), c);
                }
            }
        }
    }
}

fn moyal_impl(
    f: &OperatorSymbol,
    g: &OperatorSymbol,
    h_order: usize,
    max_total_degree: Option<u32>,
) -> Result<OperatorSymbol> {
    if f.caps() != g.caps() {
        return Err(Error::CapMismatch(f.caps(), g.caps()));
    }
    let caps = f.caps();
    let mut accs: Vec<Accum> = (0..=h_order)
        .map(|n| {
            let bound = max_total_degree.map(|d| d.saturating_sub(n as u32));
            Accum::new(caps, bound)
        })
        .collect();
    let live: Vec<bool> = (0..=h_order)
        .map(|n| max_total_degree.map_or(true, |d| n as u32 <= d))
        .collect();
    for (a, fa) in f.h_terms().iter().enumerate() {
        for (b, gb) in g.h_terms().iter().enumerate() {
            if a + b > h_order {
                continue;
            }
            for (mf, cf) in fa.terms() {
                for (mg, cg) in gb.terms() {
                    moyal_pair(mf, *cf, mg, *cg, a + b, &mut |n, mono, c| {
                        if n <= h_order && live[n] {
                            accs[n].add(mono, c);
                        }
                    });
                }
            }
        }
    }
    let real = f.h_terms().iter().chain(g.h_terms()).all(ClassicalSymbol::is_real_on_real);
    let trunc = f.h_terms().iter().chain(g.h_terms()).any(ClassicalSymbol::is_truncated);
    let terms = accs.into_iter().map(|a| a.finish(real, trunc)).collect();
    OperatorSymbol::new(terms)
}

/// Weyl symbol of `(i/h)[F, G]`, truncated at `h^{h_order}`.
///
/// `Σ_{n odd} (h/2i)^{n−1}/n! · A^n(f, g)` with
/// `A = ∂_ξ^f·∂_x^g − ∂_x^f·∂_ξ^g`; the `h⁰` part is `{f, g}`.
pub fn moyal_bracket(f: &OperatorSymbol, g: &OperatorSymbol, h_order: usize) -> Result<OperatorSymbol> {
    moyal_impl(f, g, h_order, None)
}

/// Moyal bracket keeping only terms of total `(ξ, ε, h)`-degree `≤ max_total_degree`.
pub fn moyal_bracket_graded(
    f: &OperatorSymbol,
    g: &OperatorSymbol,
    max_total_degree: u32,
) -> Result<OperatorSymbol> {
    moyal_impl(f, g, max_total_degree as usize, Some(max_total_degree))
}

/// `p ∘ exp(H_G) = Σ_k H_G^k p / k!`, truncated at total `(ξ, ε)`-degree.
///
/// `G` must vanish to second order so each bracket raises the degree.
pub fn exp_hamiltonian_compose(
    p: &ClassicalSymbol,
    g: &ClassicalSymbol,
    total_degree: u32,
) -> Result<ClassicalSymbol> {
    if let Some(d) = g.min_degree() {
        if d < 2 {
            return Err(Error::Precondition(format!(
                "generator has a term of (xi, eps)-degree {d}; degree >= 2 required"
            )));
        }
    }
    if p.caps() != g.caps() {
        return Err(Error::CapMismatch(p.caps(), g.caps()));
    }
    let mut result = p.truncate_degree(total_degree);
    let mut term = result.clone();
    for j in 1..=total_degree as usize + 1 {
        term = poisson_bracket_graded(g, &term, Some(total_degree))?.scale_real(1.0 / j as f64);
        if term.is_zero() {
            return Ok(result);
        }
        result = result.add(&term)?;
    }
    if term.is_zero() {
        Ok(result)
    } else {
        Err(Error::SeriesDivergence(total_degree as usize + 1))
    }
}

/// `Σ_j L^j p / j!` for a degree non-decreasing operator `L`, truncated at
/// total `(ξ, ε, h)`-degree `max_degree`.
///
/// Stops as soon as a term vanishes; fails after `max_terms` terms.
pub fn lie_series<F>(
    p: &OperatorSymbol,
    max_degree: u32,
    max_terms: usize,
    mut apply: F,
) -> Result<OperatorSymbol>
where
    F: FnMut(&OperatorSymbol) -> Result<OperatorSymbol>,
{
    let mut result = p.truncate_total_degree(max_degree);
    let mut term = result.clone();
    for j in 1..=max_terms {
        term = apply(&term)?.scale_real(1.0 / j as f64).truncate_total_degree(max_degree);
        if term.is_zero() {
            return Ok(result);
        }
        result = result.add(&term)?;
    }
    Err(Error::SeriesDivergence(max_terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbol::Caps;

    fn sym(terms: &[([i32; 2], [u32; 2], u32, f64, f64)]) -> ClassicalSymbol {
        ClassicalSymbol::from_terms(
            Caps::default(),
            terms.iter().map(|&(k, a, m, re, im)| (Monomial::new(k, a, m), Complex64::new(re, im))),
        )
        .unwrap()
    }

    #[test]
    fn poisson_examples() {
        let xi1 = sym(&[([0, 0], [1, 0], 0, 1.0, 0.0)]);
        let e1 = sym(&[([1, 0], [0, 0], 0, 1.0, 0.0)]);
        let b = poisson_bracket(&xi1, &e1).unwrap();
        assert_eq!(b.terms().collect::<Vec<_>>(), sym(&[([1, 0], [0, 0], 0, 0.0, 1.0)]).terms().collect::<Vec<_>>());

        let f = sym(&[([1, -1], [1, 2], 1, 0.3, 0.2), ([0, 2], [0, 1], 0, -1.0, 0.5)]);
        assert!(poisson_bracket(&f, &f).unwrap().is_zero());

        let xx = sym(&[([0, 0], [1, 1], 0, 1.0, 0.0)]);
        let g = sym(&[([0, 0], [3, 0], 2, 1.0, 0.0)]);
        assert!(poisson_bracket(&xx, &g).unwrap().is_zero());
    }

    #[test]
    fn bracket_with_linear_form_is_transport() {
        let a = [1.0, 1.618];
        let p = ClassicalSymbol::linear_xi(Caps::default(), a).unwrap();
        let g = sym(&[([1, 2], [0, 0], 2, 0.3, -0.1), ([-3, 1], [1, 0], 1, 1.0, 0.0)]);
        let lhs = poisson_bracket(&p, &g).unwrap();
        let rhs = g.transport(a);
        assert!(lhs.sub(&rhs).unwrap().max_norm() < 1e-15);
    }

    #[test]
    fn cap_mismatch_is_an_error() {
        let f = ClassicalSymbol::zero(Caps::new(2, 2, 2));
        let g = ClassicalSymbol::zero(Caps::new(3, 2, 2));
        assert!(matches!(poisson_bracket(&f, &g), Err(Error::CapMismatch(..))));
    }

    #[test]
    fn compose_examples() {
        let p = sym(&[([0, 0], [1, 0], 0, 1.0, 0.0)]);
        let zero = ClassicalSymbol::zero(Caps::default());
        assert_eq!(exp_hamiltonian_compose(&p, &zero, 3).unwrap(), p);

        // G = ε² sin x₁: {G, ξ₁} = −∂_{x₁}G = −ε² cos x₁.
        let g = sym(&[([1, 0], [0, 0], 2, 0.0, -0.5), ([-1, 0], [0, 0], 2, 0.0, 0.5)]);
        let out = exp_hamiltonian_compose(&p, &g, 3).unwrap();
        let expect = sym(&[
            ([0, 0], [1, 0], 0, 1.0, 0.0),
            ([1, 0], [0, 0], 2, -0.5, 0.0),
            ([-1, 0], [0, 0], 2, -0.5, 0.0),
        ]);
        assert!(out.sub(&expect).unwrap().max_norm() < 1e-15);

        let low = sym(&[([1, 0], [0, 0], 1, 1.0, 0.0)]);
        assert!(matches!(exp_hamiltonian_compose(&p, &low, 3), Err(Error::Precondition(_))));
    }

    #[test]
    fn moyal_leading_term_is_poisson() {
        let xi1 = OperatorSymbol::from_leading(sym(&[([0, 0], [1, 0], 0, 1.0, 0.0)]));
        let e1 = OperatorSymbol::from_leading(sym(&[([1, 0], [0, 0], 0, 1.0, 0.0)]));
        let mb = moyal_bracket(&xi1, &e1, 2).unwrap();
        let pb = poisson_bracket(&xi1.h_terms()[0], &e1.h_terms()[0]).unwrap();
        assert_eq!(mb.h_term(0), pb);
        assert!(mb.h_term(1).is_zero() && mb.h_term(2).is_zero());
    }

    #[test]
    fn moyal_cubic_term() {
        // (i/h)[ξ₁³, e^{ix₁}] = 3i ξ₁² e^{ix₁} + (h/2i)² (i)³ e^{ix₁}
        let f = OperatorSymbol::from_leading(sym(&[([0, 0], [3, 0], 0, 1.0, 0.0)]));
        let g = OperatorSymbol::from_leading(sym(&[([1, 0], [0, 0], 0, 1.0, 0.0)]));
        let mb = moyal_bracket(&f, &g, 2).unwrap();
        let h2 = mb.h_term(2);
        let expect = Complex64::new(0.0, -1.0) * (-0.25);
        assert!((h2.coeff(&Monomial::new([1, 0], [0, 0], 0)) - expect).norm() < 1e-15);
        let h0 = mb.h_term(0);
        assert!((h0.coeff(&Monomial::new([1, 0], [2, 0], 0)) - Complex64::new(0.0, 3.0)).norm() < 1e-15);
    }

    #[test]
    fn moyal_vanishes_on_multipliers_and_diagonal() {
        let f = OperatorSymbol::from_leading(sym(&[([0, 0], [2, 1], 1, 1.0, 0.3)]));
        let g = OperatorSymbol::from_leading(sym(&[([0, 0], [0, 3], 0, -2.0, 0.0)]));
        assert!(moyal_bracket(&f, &g, 4).unwrap().is_zero());
        let q = OperatorSymbol::from_leading(sym(&[([1, 1], [2, 1], 0, 1.0, 0.0), ([0, 1], [3, 0], 0, 0.5, 0.5)]));
        assert!(moyal_bracket(&q, &q, 4).unwrap().is_zero());
    }

    #[test]
    fn moyal_bracket_preserves_reality() {
        let f = OperatorSymbol::from_leading(sym(&[
            ([1, 0], [3, 0], 0, 0.5, 0.0),
            ([-1, 0], [3, 0], 0, 0.5, 0.0),
        ]));
        let g = OperatorSymbol::from_leading(sym(&[
            ([0, 1], [1, 2], 0, 0.0, 0.5),
            ([0, -1], [1, 2], 0, 0.0, -0.5),
        ]));
        let mb = moyal_bracket(&f, &g, 4).unwrap();
        assert!(mb.h_terms().iter().all(|t| t.check_real_on_real()));
    }
}
