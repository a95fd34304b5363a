//! Invariant suites run by the `verify` command.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chaos::{self, exp_functional_coeffs, project_polynomial};
use crate::error::Result;
use crate::gaussian::SpectralGaussian;
use crate::linalg;
use crate::numerics::QuadScheme;
use crate::ou::{OUModel, CM_CONTRACTION_TOL};
use crate::poly::Polynomial;
use crate::presets::Preset;
use crate::second_quant::CMContraction;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value <= tol`.
    pub fn at_most(suite: &str, name: impl Into<String>, value: f64, tol: f64) -> Self {
        Check { suite: suite.into(), name: name.into(), value, tol, passed: value <= tol }
    }
}

fn gh_for(degree: usize) -> QuadScheme {
    QuadScheme::gauss_hermite(degree + 2)
}

/// Orthonormality of the Hermite basis and Parseval for `f`.
pub fn chaos_suite(measure: &SpectralGaussian, f: &Polynomial) -> Result<Vec<Check>> {
    let deg = f.degree();
    let scheme = QuadScheme::gauss_hermite(deg + 4);
    let idx = chaos::support_indices(measure, 3);
    let mut worst = 0.0_f64;
    for (i, a) in idx.iter().enumerate() {
        for b in &idx[i..] {
            let g = measure
                .expectation(&scheme, |x| chaos::phi_alpha(measure, a, x).unwrap() * chaos::phi_alpha(measure, b, x).unwrap())?
                .value;
            worst = worst.max((g - if a == b { 1.0 } else { 0.0 }).abs());
        }
    }
    let e = project_polynomial(measure, |x| f.eval(x), deg, &gh_for(deg))?;
    let sq = measure.expectation(&gh_for(2 * deg), |x| f.eval(x).powi(2))?.value;
    Ok(vec![
        Check::at_most("chaos", "gram_matrix_identity", worst, 1e-10),
        Check::at_most("chaos", "parseval", (e.l2_norm().powi(2) - sq).abs(), 1e-9 * sq.max(1.0)),
    ])
}

/// Second-quantization identities for `t` on a polynomial `f` over its source measure.
pub fn contraction_suite(label: &str, t: &CMContraction, f: &Polynomial, seed: u64) -> Result<Vec<Check>> {
    let suite = format!("second_quant[{label}]");
    let mu = t.mu();
    let nu = t.nu();
    let deg = f.degree();
    let scheme = gh_for(deg);
    let e = project_polynomial(mu, |x| f.eval(x), deg, &scheme)?;
    let img = t.gamma_series_apply(&e)?;
    let mut checks = Vec::new();

    let samples = nu.sample(seed, 4);
    let mut dev = 0.0_f64;
    for x in &samples {
        let direct = t.gamma_integral_apply(|y| f.eval(y), x, &scheme)?.value;
        dev = dev.max((img.eval(x) - direct).abs());
    }
    checks.push(Check::at_most(&suite, "series_equals_integral", dev, 1e-8));

    let z: Vec<f64> = (0..mu.dim()).map(|k| if mu.in_support(k) { 0.5 / (1.0 + k as f64) } else { 0.0 }).collect();
    let ez = exp_functional_coeffs(mu, &z, 5)?;
    let mz: Vec<f64> = (t.matrix() * nalgebra::DVector::from_vec(z)).iter().copied().collect();
    let expected = exp_functional_coeffs(nu, &mz, 5)?;
    checks.push(Check::at_most(&suite, "exponential_law", t.gamma_series_apply(&ez)?.max_abs_diff(&expected), 1e-10));

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xad);
    let g = Polynomial::random(&mut rng, nu.dim(), deg);
    let ge = project_polynomial(nu, |x| g.eval(x), deg, &scheme)?;
    let lhs = img.dot(&ge);
    let rhs = e.dot(&t.adjoint().gamma_series_apply(&ge)?);
    checks.push(Check::at_most(&suite, "adjoint_law", (lhs - rhs).abs(), 1e-10 * lhs.abs().max(1.0)));

    let s1 = t.op_norm();
    let mut worst = 0.0_f64;
    for n in 0..=deg.min(4) {
        worst = worst.max((t.block_norm_power(n)? - s1.powi(n as i32)).abs());
    }
    checks.push(Check::at_most(&suite, "degreewise_norm", worst, 1e-6));

    let pushed = nu.expectation(&scheme, |x| img.eval(x))?.value;
    let source = mu.expectation(&scheme, |x| f.eval(x))?.value;
    checks.push(Check::at_most(&suite, "mass_transport", (pushed - source).abs(), 1e-9 * source.abs().max(1.0)));

    for p in [2.0, 4.0] {
        let lq = t.lq_norm_gamma(|x| f.eval(x), p, &QuadScheme::gauss_hermite(2 * deg + 2))?.value;
        let lp = mu.lq_norm(|x| f.eval(x), p, &QuadScheme::gauss_hermite(2 * deg + 2))?.value;
        checks.push(Check::at_most(&suite, format!("lp_contraction_p{p}"), lq - lp * (1.0 + 1e-8), 0.0));
    }
    Ok(checks)
}

/// Evolution-family invariants of `model` over the `(s, t)` pairs.
pub fn model_suite(preset: &Preset, model: &OUModel, cells: &[(f64, f64)], f: &Polynomial) -> Result<Vec<Check>> {
    let suite = format!("ou[{}]", preset.name());
    let scheme = gh_for(f.degree());
    let mut checks = Vec::new();
    let mut cocycle = 0.0_f64;
    let mut ck = 0.0_f64;
    let mut duality = 0.0_f64;
    let mut embed = 0.0_f64;
    let mut cm = 0.0_f64;
    let mut invariance = 0.0_f64;
    let mut repr = 0.0_f64;
    for &(s, t) in cells.iter().filter(|(s, t)| s < t) {
        let r = 0.5 * (s + t);
        cocycle = cocycle.max(linalg::max_abs_diff(&(model.u(t, r) * model.u(r, s)), &model.u(t, s)));
        let u = model.u(t, r);
        let lhs = &u * model.q_ts(s, r)? * u.transpose() + model.q_ts(r, t)?;
        ck = ck.max(linalg::max_abs_diff(&lhs, &model.q_ts(s, t)?));

        let qt = model.q_t_inf(t)?.diag;
        let qs = model.q_t_inf(s)?.diag;
        let qts = linalg::LinearMap::new(model.q_ts(s, t)?.map(|v| v.sqrt()))?;
        let qti = linalg::LinearMap::from_diagonal(&qt.iter().map(|v| v.sqrt()).collect::<Vec<_>>());
        embed = embed.max(linalg::range_ratio_norm(&qts, &qti)?);

        let l = model.pst_contraction(s, t)?;
        cm = cm.max(l.op_norm());
        let ext = l.x_extension()?.matrix;
        let dl = &ext * nalgebra::DMatrix::from_diagonal(&qt.into());
        let dr = nalgebra::DMatrix::from_diagonal(&qs.into()) * model.u(t, s).transpose();
        duality = duality.max(linalg::max_abs_diff(&dl, &dr));

        let lhs = model
            .mean_functional(|x| model.pst_apply(|y| f.eval(y), s, t, x, &scheme).unwrap().value, s, &scheme)?
            .value;
        let rhs = model.mean_functional(|y| f.eval(y), t, &scheme)?.value;
        invariance = invariance.max((lhs - rhs).abs());

        for x in model.measure_at(s)?.sample(0x5eed, 3) {
            let a = model.pst_apply(|y| f.eval(y), s, t, &x, &scheme)?.value;
            let b = model.pst_via_second_quant(|y| f.eval(y), s, t, &x, &scheme)?.value;
            repr = repr.max((a - b).abs());
        }
        if preset.hypothesis_constants().is_some() {
            preset.verify_bound(model, s, t)?;
        }
    }
    checks.push(Check::at_most(&suite, "cocycle", cocycle, 1e-10));
    checks.push(Check::at_most(&suite, "chapman_kolmogorov", ck, 1e-10));
    checks.push(Check::at_most(&suite, "embedding_norm", embed, 1.0 + 1e-10));
    checks.push(Check::at_most(&suite, "cm_contraction", cm, 1.0 + CM_CONTRACTION_TOL));
    checks.push(Check::at_most(&suite, "duality", duality, 1e-10));
    checks.push(Check::at_most(&suite, "invariance", invariance, 1e-8));
    checks.push(Check::at_most(&suite, "second_quant_representation", repr, 1e-8));
    let cov = model.q_t_inf(cells.first().map_or(0.0, |c| c.1))?;
    checks.push(Check::at_most(&suite, "tail_certificate", cov.tail_cert, model.tail_tol));
    Ok(checks)
}
