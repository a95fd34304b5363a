use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use secquant::chaos::project_polynomial;
use secquant::second_quant::mehler_classical;
use secquant::verify::{self, Check};
use secquant::{CMContraction, Error, OUModel, Polynomial, QuadScheme, SpectralGaussian};

use crate::config::ExperimentConfig;

pub enum Failure {
    Config(String),
    Assertion(String),
    Compute(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Compute(e)
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Config(format!("output: {e}"))
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(format!("output: {e}"))
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn build_model(cfg: &ExperimentConfig) -> Result<OUModel, Failure> {
    let model = cfg.model.build()?;
    Ok(match &cfg.time_scheme {
        Some(ts) => model.with_time_scheme(ts)?,
        None => model,
    })
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    passed: bool,
    checks: &'a [Check],
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn verify(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<(), Failure> {
    let mut checks: Vec<Check> = Vec::new();
    let result = run_suites(cfg, &mut checks);
    let failed = checks.iter().find(|c| !c.passed).cloned();
    let error = result.as_ref().err().map(|e| format!("{}: {e}", e.kind()));
    let report = VerifyReport { passed: failed.is_none() && error.is_none(), checks: &checks, error };
    serde_json::to_writer_pretty(&mut *out, &report).map_err(|e| Failure::Config(e.to_string()))?;
    writeln!(out)?;
    if let Err(e) = result {
        return Err(Failure::Compute(e));
    }
    if let Some(c) = failed {
        return Err(Failure::Assertion(format!("{} / {}: {:e} > {:e}", c.suite, c.name, c.value, c.tol)));
    }
    Ok(())
}

/// Runs the suites in order, stopping at the first failing check.
fn run_suites(cfg: &ExperimentConfig, checks: &mut Vec<Check>) -> secquant::Result<()> {
    let model = cfg.model.build()?;
    let model = match &cfg.time_scheme {
        Some(ts) => model.with_time_scheme(ts)?,
        None => model,
    };
    let f = cfg.test_function(model.dim());
    let first_t = cfg.sweep.cells()[0].1;
    let mut extend = |new: Vec<Check>| -> bool {
        for c in new {
            let ok = c.passed;
            checks.push(c);
            if !ok {
                return false;
            }
        }
        true
    };
    if !extend(verify::chaos_suite(&model.measure_at(first_t)?, &f)?) {
        return Ok(());
    }
    for (i, t) in cfg.contractions.iter().enumerate() {
        let g = Polynomial::random(&mut ChaCha8Rng::seed_from_u64(cfg.seed + i as u64), t.mu().dim(), 3);
        if !extend(verify::contraction_suite(&format!("contraction{i}"), t, &g, cfg.seed)?) {
            return Ok(());
        }
    }
    extend(verify::model_suite(&cfg.model, &model, &cfg.sweep.cells(), &f)?);
    Ok(())
}

pub fn hyper_scan(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<(), Failure> {
    let model = build_model(cfg)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["s", "t", "p", "norm_U", "q0", "witness_diverges_at"])?;
    for (s, t) in cfg.sweep.cells() {
        let l = model.pst_contraction(s, t)?;
        for &p in &cfg.sweep.p {
            let q0 = l.q0_threshold(p)?;
            let wd = l.witness_diverges_at(p)?;
            w.write_record([num(s), num(t), num(p), num(l.op_norm()), num(q0), num(wd)])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn decay(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<(), Failure> {
    let model = build_model(cfg)?;
    let f = cfg.test_function(model.dim());
    let scheme = cfg.scheme;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["s", "t", "norm_U_cm", "q0", "hs_norm", "decay_ratio_p2", "tail_cert"])?;
    for (s, t) in cfg.sweep.cells() {
        let l = model.pst_contraction(s, t)?;
        let norm = l.op_norm();
        let q0 = l.q0_threshold(2.0)?;
        let hs = if norm < 1.0 - secquant::second_quant::CONTRACTION_TOL {
            l.singular_values().iter().map(|v| (1.0 - v * v).powf(-0.5)).product()
        } else {
            f64::INFINITY
        };
        let ratio = model.decay_ratio(|y| f.eval(y), 2.0, s, t, &scheme)?;
        let cert = model.q_t_inf(s)?.tail_cert.max(model.q_t_inf(t)?.tail_cert);
        w.write_record([num(s), num(t), num(norm), num(q0), num(hs), num(ratio), num(cert)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn hs_table(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<(), Failure> {
    let model = build_model(cfg)?;
    let mut rows: Vec<(String, Option<(f64, f64)>, CMContraction)> = cfg
        .contractions
        .iter()
        .enumerate()
        .map(|(i, t)| (format!("contraction{i}"), None, t.clone()))
        .collect();
    for (s, t) in cfg.sweep.cells().into_iter().filter(|(s, t)| s < t) {
        rows.push((model.name.clone(), Some((s, t)), model.pst_contraction(s, t)?));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["source", "s", "t", "n_max", "partial", "closed_form", "product_form", "tail_bound"])?;
    for (label, st, t) in rows {
        let hs = match t.hs_norm_gamma(cfg.hs_degree) {
            Ok(h) => h,
            Err(Error::NotStrictContraction { norm }) => {
                eprintln!("skipping {label}: norm {norm} is not a strict contraction");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let (s, tt) = st.map_or((String::new(), String::new()), |(s, t)| (num(s), num(t)));
        w.write_record([
            label,
            s,
            tt,
            cfg.hs_degree.to_string(),
            num(hs.partial),
            num(hs.closed_form),
            num(hs.product_form),
            num(hs.tail_bound),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn mehler_demo(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<(), Failure> {
    let spec = &cfg.mehler;
    let mu = SpectralGaussian::new(spec.eigenvalues.clone())?;
    let f = match &cfg.test_function {
        Some(f) if f.dim == mu.dim() && f.degree() <= spec.degree => f.clone(),
        _ => Polynomial::random(&mut ChaCha8Rng::seed_from_u64(cfg.seed), mu.dim(), spec.degree),
    };
    let scheme = QuadScheme::gauss_hermite(spec.degree + 2);
    let e = project_polynomial(&mu, |x| f.eval(x), spec.degree, &scheme)?;
    let points = mu.sample(cfg.seed, spec.points);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "c", "points", "max_abs_deviation"])?;
    for &t in &spec.times {
        let c = (-t).exp();
        let img = CMContraction::scalar(mu.clone(), c)?.gamma_series_apply(&e)?;
        let mut dev = 0.0_f64;
        for x in &points {
            let direct = mehler_classical(&mu, |y| f.eval(y), t, x, &scheme)?.value;
            dev = dev.max((img.eval(x) - direct).abs());
        }
        w.write_record([num(t), num(c), spec.points.to_string(), num(dev)])?;
    }
    w.flush()?;
    Ok(())
}
