use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;
use torilab::averaging::{
    critical_values, flow_average_decay, harmonic_quartic_average, q_infinity_range, resonant_average, Frequency,
    SmoothingKernel,
};
use torilab::birkhoff::{full_normal_form_pipeline_with, NormalFormOptions, NormalFormResult};
use torilab::hamilton_jacobi::{action_of, hj_solve};
use torilab::oracle::{
    build_matrix, deform_by_weight, eigenvalues, match_clouds, safe_radius, weight_from_generator, OperatorMatrix,
};
use torilab::quantization::{quasi_eigenvalues, QuantizationData, Rectangle, Source, SpectralCloud, SpectralPoint};
use torilab::surfrev::{good_set, validate_profile, GoodSetOptions, SurfaceProfile};
use torilab::symbol::{ClassicalSymbol, OperatorSymbol};

use crate::config::{need, positive, ExperimentConfig, ProfileTerm};
use crate::output::{int, num, Sink};
use crate::Failure;

fn operator<'a>(cfg: &'a ExperimentConfig, cmd: &str) -> Result<&'a OperatorSymbol, Failure> {
    need(&cfg.operator, "operator", cmd)
}

fn quantization(cfg: &ExperimentConfig, cmd: &str) -> anyhow::Result<QuantizationData> {
    let qd = need(&cfg.quantization, "quantization", cmd)?.data;
    qd.validate()?;
    Ok(qd)
}

fn normal_form(cfg: &ExperimentConfig, cmd: &str) -> anyhow::Result<NormalFormResult> {
    let p = operator(cfg, cmd)?;
    let freq = need(&cfg.frequency, "frequency", cmd)?;
    freq.validate()?;
    let block = need(&cfg.normal_form, "normal_form", cmd)?;
    let mut opts = NormalFormOptions::new(block.n);
    if let Some(d) = block.residual_degree {
        opts = opts.with_residual_degree(d);
    }
    Ok(full_normal_form_pipeline_with(p, freq, &opts)?)
}

/// Spectral window of `quantize`: `quantization.rect`, else `oracle.rect`.
fn lattice_rect(cfg: &ExperimentConfig) -> anyhow::Result<Rectangle> {
    let rect = cfg
        .quantization
        .as_ref()
        .and_then(|q| q.rect)
        .or(cfg.oracle.map(|o| o.rect))
        .ok_or_else(|| Failure::Validation("`quantize` needs `quantization.rect` or `oracle.rect`".into()))?;
    rect.validate()?;
    Ok(rect)
}

fn scaled(rect: &Rectangle, factor: f64) -> anyhow::Result<Rectangle> {
    Ok(Rectangle::new(rect.re_center, factor * rect.re_halfwidth, rect.im_center, factor * rect.im_halfwidth)?)
}

pub fn run_normal_form(cfg: &ExperimentConfig, sink: &Sink) -> anyhow::Result<()> {
    let nf = normal_form(cfg, "normal-form")?;
    sink.json("normal_form", &nf)?;
    println!(
        "normal form N = {}: remainder norm {:.6e}, x-residual {:.3e}, truncated {}",
        nf.order_n, nf.remainder_norm, nf.x_residual_max, nf.truncated
    );
    Ok(())
}

fn lattice_rows(cloud: &SpectralCloud) -> Vec<Vec<String>> {
    cloud
        .points
        .iter()
        .map(|p| {
            let k = p.label.unwrap_or([0, 0]);
            let xi = p.xi.unwrap_or([f64::NAN; 2]);
            vec![
                int(k[0] as i64),
                int(k[1] as i64),
                num(xi[0]),
                num(xi[1]),
                num(p.z.re),
                num(p.z.im),
                p.err_budget.map_or(String::new(), num),
            ]
        })
        .collect()
}

pub fn run_quantize(cfg: &ExperimentConfig, sink: &Sink) -> anyhow::Result<()> {
    let qd = quantization(cfg, "quantize")?;
    let rect = lattice_rect(cfg)?;
    let nf = normal_form(cfg, "quantize")?;
    let cloud = quasi_eigenvalues(&nf, &qd, &rect)?;
    sink.csv("quantize", &["k1", "k2", "xi1", "xi2", "re_z", "im_z", "err_budget"], lattice_rows(&cloud))?;
    sink.json("quantize", &cloud)?;
    println!("quantize: {} quasi-eigenvalues in the rectangle", cloud.len());
    Ok(())
}

struct OracleRun {
    matrix: OperatorMatrix,
    r: f64,
    margin: f64,
    all: Vec<Complex64>,
}

fn oracle_spectrum(cfg: &ExperimentConfig, cmd: &str, rect: &Rectangle) -> anyhow::Result<OracleRun> {
    let p = operator(cfg, cmd)?;
    let qd = quantization(cfg, cmd)?;
    let block = need(&cfg.oracle, "oracle", cmd)?;
    let p = if block.deform {
        let nf = normal_form(cfg, cmd)?;
        match &nf.averaging_generator {
            Some(g) => deform_by_weight(p, &weight_from_generator(g))?,
            None => p.clone(),
        }
    } else {
        p.clone()
    };
    let r = match block.r {
        Some(r) => {
            positive(r, "oracle.R")?;
            r
        }
        None => safe_radius(&p, &qd, rect, 2.0 * qd.window_radius)?,
    };
    let matrix = build_matrix(&p, &qd, r)?;
    let spec = eigenvalues(&matrix, rect)?;
    Ok(OracleRun { matrix, r, margin: spec.margin, all: spec.all })
}

fn sorted_inside(all: &[Complex64], rect: &Rectangle) -> Vec<Complex64> {
    let mut zs: Vec<Complex64> = all.iter().copied().filter(|z| rect.contains(*z)).collect();
    zs.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    zs
}

fn dump_matrix(m: &OperatorMatrix, sink: &Sink) -> anyhow::Result<()> {
    let mut bytes = Vec::with_capacity(16 * m.dim() * m.dim());
    for z in m.row_major() {
        bytes.extend_from_slice(&z.re.to_le_bytes());
        bytes.extend_from_slice(&z.im.to_le_bytes());
    }
    sink.bytes("oracle_matrix.bin", &bytes)?;
    let sidecar = json!({
        "shape": [m.dim(), m.dim()],
        "layout": "row-major complex128 little-endian (re, im)",
        "basis": m.basis,
        "xi": m.xi,
        "meta": m.meta,
        "dropped": m.dropped,
    });
    sink.bytes("oracle_matrix.json", (serde_json::to_string_pretty(&sidecar)? + "\n").as_bytes())
}

pub fn run_oracle(cfg: &ExperimentConfig, sink: &Sink) -> anyhow::Result<()> {
    let block = need(&cfg.oracle, "oracle", "oracle")?;
    block.rect.validate()?;
    let run = oracle_spectrum(cfg, "oracle", &block.rect)?;
    let inside = sorted_inside(&run.all, &block.rect);
    sink.csv("oracle", &["re_z", "im_z"], inside.iter().map(|z| vec![num(z.re), num(z.im)]))?;
    sink.json(
        "oracle",
        &json!({
            "dim": run.matrix.dim(),
            "R": run.r,
            "margin": run.margin,
            "dropped": run.matrix.dropped,
            "eigenvalues": inside,
        }),
    )?;
    if block.dump_matrix {
        dump_matrix(&run.matrix, sink)?;
    }
    println!("oracle: dimension {}, {} eigenvalues in the rectangle", run.matrix.dim(), inside.len());
    Ok(())
}

#[derive(Serialize)]
struct CompareSummary {
    lattice_count: usize,
    oracle_count: usize,
    matched: usize,
    max_error: f64,
    mean_error: f64,
    max_budget_ratio: f64,
    exact_assignment: bool,
    passed: bool,
}

pub fn run_compare(cfg: &ExperimentConfig, sink: &Sink, assert: bool) -> anyhow::Result<()> {
    let qd = quantization(cfg, "compare")?;
    let block = need(&cfg.oracle, "oracle", "compare")?;
    let rect = block.rect;
    rect.validate()?;
    let opts = cfg.compare;
    positive(opts.margin_factor, "compare.margin_factor")?;
    let outer = scaled(&rect, opts.margin_factor.max(1.0))?;
    let nf = normal_form(cfg, "compare")?;
    let lattice = quasi_eigenvalues(&nf, &qd, &outer)?;
    let run = oracle_spectrum(cfg, "compare", &rect)?;
    let oracle = SpectralCloud {
        points: sorted_inside(&run.all, &outer)
            .into_iter()
            .map(|z| SpectralPoint { z, label: None, source: Source::Oracle, xi: None, err_budget: None })
            .collect(),
    };
    let eps = qd.eps;
    let report = match_clouds(&lattice, &oracle, &outer, eps);
    let mut pairs: Vec<_> = report.pairs.iter().filter(|p| rect.contains(p.predicted.z)).cloned().collect();
    pairs.sort_by_key(|p| p.predicted.label);

    let lattice_count = lattice.filter(&rect).len();
    let oracle_count = oracle.filter(&rect).len();
    let bound = |p: &torilab::oracle::MatchPair| opts.budget_factor * p.predicted.err_budget.unwrap_or(0.0) + opts.abs_tol;
    let within = pairs.iter().all(|p| p.distance <= bound(p));
    let passed = lattice_count == oracle_count && pairs.len() == lattice_count && within;
    let max_error = pairs.iter().map(|p| p.distance).fold(0.0, f64::max);
    let summary = CompareSummary {
        lattice_count,
        oracle_count,
        matched: pairs.len(),
        max_error,
        mean_error: if pairs.is_empty() { 0.0 } else { pairs.iter().map(|p| p.distance).sum::<f64>() / pairs.len() as f64 },
        max_budget_ratio: pairs
            .iter()
            .filter_map(|p| p.predicted.err_budget.filter(|b| *b > 0.0).map(|b| p.distance / b))
            .fold(0.0, f64::max),
        exact_assignment: report.exact,
        passed,
    };

    let rows = pairs.iter().map(|p| {
        let k = p.predicted.label.unwrap_or([0, 0]);
        vec![
            int(k[0] as i64),
            int(k[1] as i64),
            num(p.predicted.z.re),
            num(p.predicted.z.im),
            num(p.computed.re),
            num(p.computed.im),
            num(p.distance),
            p.predicted.err_budget.map_or(String::new(), num),
        ]
    });
    sink.csv("compare", &["k1", "k2", "re_pred", "im_pred", "re_oracle", "im_oracle", "distance", "err_budget"], rows)?;
    sink.json("compare", &json!({ "summary": summary, "dim": run.matrix.dim(), "R": run.r, "pairs": pairs }))?;
    println!(
        "compare: lattice {} oracle {} matched {}, max error {:.3e}",
        summary.lattice_count, summary.oracle_count, summary.matched, summary.max_error
    );
    if assert && !passed {
        return Err(Failure::Assertion(format!(
            "counts {}/{} or errors above {}x budget + {:e} (max error {:.3e})",
            lattice_count, oracle_count, opts.budget_factor, opts.abs_tol, max_error
        ))
        .into());
    }
    Ok(())
}

pub fn run_average(cfg: &ExperimentConfig, sink: &Sink) -> anyhow::Result<()> {
    let block = need(&cfg.average, "average", "average")?;
    let q = &block.q;
    let rows: Vec<(f64, Option<(f64, f64)>)> =
        block.ranges.iter().map(|r| (r.mu, q_infinity_range(q, &r.b, block.grid).bounds())).collect();
    sink.csv(
        "average_q_inf",
        &["mu", "q_inf_lo", "q_inf_hi"],
        rows.iter().map(|(mu, b)| {
            let (lo, hi) = b.unwrap_or((f64::NAN, f64::NAN));
            vec![num(*mu), num(lo), num(hi)]
        }),
    )?;
    let resonant: Vec<_> = block
        .ranges
        .iter()
        .filter(|r| matches!(r.b, Frequency::Rational(_)))
        .map(|r| Ok(json!({ "mu": r.mu, "b": r.b, "resonant_average": resonant_average(q, &r.b)? })))
        .collect::<anyhow::Result<_>>()?;

    let decay = match &block.decay {
        Some(d) => {
            let freq = need(&cfg.frequency, "frequency", "average")?;
            freq.validate()?;
            if d.t.len() < 2 || d.t.iter().any(|t| !(*t > 0.0)) {
                return Err(Failure::Validation("average.decay.T needs at least two positive times".into()).into());
            }
            let kernel = match d.kernel {
                Some([t0, t1]) => SmoothingKernel::on(t0, t1)?,
                None => SmoothingKernel::default(),
            };
            let p = ClassicalSymbol::linear_xi(q.caps(), freq.a)?;
            let fit = flow_average_decay(q, &p, &kernel, &d.t, d.grid)?;
            sink.csv(
                "average_decay",
                &["T", "sup_diff"],
                fit.ts.iter().zip(&fit.sup_diff).map(|(t, s)| vec![num(*t), num(*s)]),
            )?;
            println!("average: decay exponent {:.3}", fit.exponent);
            Some(fit)
        }
        None => None,
    };
    sink.json(
        "average",
        &json!({
            "torus_average": q.torus_average(),
            "q_infinity": rows.iter().map(|(mu, b)| json!({ "mu": mu, "range": b })).collect::<Vec<_>>(),
            "resonant": resonant,
            "decay": decay,
        }),
    )?;
    println!("average: {} ranges", rows.len());
    Ok(())
}

fn profile_value(terms: &[ProfileTerm], f: f64, df: f64, theta: f64) -> f64 {
    terms
        .iter()
        .map(|t| {
            let angular = match (t.mode, t.sin) {
                (0, false) => 1.0,
                (n, false) => (n as f64 * theta).cos(),
                (n, true) => (n as f64 * theta).sin(),
            };
            t.coef * f.powi(t.f) * df.powi(t.df) * angular
        })
        .sum()
}

pub fn run_surfrev(cfg: &ExperimentConfig, sink: &Sink) -> anyhow::Result<()> {
    let block = need(&cfg.surfrev, "surfrev", "surfrev")?;
    let sp: SurfaceProfile = validate_profile(&block.profile)?;
    let default_q0 = [ProfileTerm { coef: 1.0, f: 0, df: 2, mode: 0, sin: false }];
    let q0_terms: &[ProfileTerm] = block.q0.as_deref().unwrap_or(&default_q0);
    if q0_terms.iter().any(|t| t.mode != 0 || t.sin) {
        return Err(Failure::Validation("surfrev.q0 must not depend on theta".into()).into());
    }
    let q0 = |s: f64| profile_value(q0_terms, sp.f(s), sp.df(s), 0.0);
    let q1 = |s: f64, th: f64| profile_value(&block.q1, sp.f(s), sp.df(s), th);

    let mut opts = GoodSetOptions::new(block.alpha, block.d, block.eta).with_probes(block.probes.clone());
    if let Some(n) = block.a_grid {
        opts.a_grid = n;
    }
    if let Some(q) = block.q_cap {
        opts.q_cap = q;
    }
    if let Some(r) = block.neighborhood {
        opts.neighborhood = r;
    }
    if let Some(n) = block.resonance_cap {
        opts.resonance_cap = n;
    }
    let report = good_set(&sp, q0, q1, &opts)?;
    sink.csv(
        "surfrev",
        &["a", "omega", "domega", "avg_q0", "is_good"],
        report.samples.iter().map(|s| vec![num(s.a), num(s.omega), num(s.domega), num(s.avg_q0), s.is_good.to_string()]),
    )?;
    sink.json("surfrev", &json!({ "profile": sp, "report": report }))?;
    println!(
        "surfrev: {} tori, good measure {:.6}, excluded {:.6}",
        report.samples.len(),
        report.good_intervals.measure() + 0.0,
        report.excluded_measure
    );
    Ok(())
}

pub fn run_hj_solve(cfg: &ExperimentConfig, sink: &Sink) -> anyhow::Result<()> {
    let p = operator(cfg, "hj-solve")?.h_term(0);
    let block = need(&cfg.hamilton_jacobi, "hamilton_jacobi", "hj-solve")?;
    let p_poly = block.p_poly.clone().unwrap_or_else(|| p.torus_average());
    let sol = hj_solve(&p, &p_poly, block.xi, block.eps, block.eps_tilde, &block.options)?;
    let action = action_of(&sol)?;
    sink.json("hj_solve", &json!({ "solution": sol, "action": action, "contraction_ratios": sol.contraction_ratios() }))?;
    println!(
        "hj-solve: {} iterations, converged {}, residual {:.3e}",
        sol.iterations, sol.converged, sol.residual
    );
    if !sol.converged {
        return Err(torilab::Error::NoConvergence(format!("fixed point after {} iterations", sol.iterations)).into());
    }
    Ok(())
}

pub fn run_barrier_top(cfg: &ExperimentConfig, sink: &Sink) -> anyhow::Result<()> {
    let block = need(&cfg.barrier_top, "barrier_top", "barrier-top")?;
    let [l1, l2] = block.lambda;
    let v = &block.v;
    let avg = harmonic_quartic_average(v);
    let cv = critical_values(block.lambda, v)?;
    let sign = (l1 * v.v22 - 3.0 * l2 * v.v40) * (l2 * v.v22 - 3.0 * l1 * v.v04);
    let evaluations: Vec<_> =
        block.actions.iter().map(|&[i1, i2]| json!({ "I": [i1, i2], "value": avg.eval(i1, i2) })).collect();
    sink.json(
        "barrier_top",
        &json!({
            "lambda": block.lambda,
            "v": v,
            "average": avg,
            "critical_values": cv,
            "sign_condition": sign,
            "evaluations": evaluations,
        }),
    )?;
    println!("barrier-top: critical values {:?}", cv.to_vec());
    Ok(())
}
