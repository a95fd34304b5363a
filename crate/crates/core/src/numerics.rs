//! Shared integration and randomness kernels.
//!
//! Gauss-Hermite rules are for the *probabilists'* weight, i.e. the standard
//! normal density, so that `sum_i w_i f(x_i)` approximates `E[f(Z)]` with
//! `Z ~ N(0, 1)` and the weights sum to one.
//!
//! Monte Carlo estimates draw from counter-based ChaCha substreams: sample
//! block `b` always comes from stream `b` of the seeded generator, so the
//! result for a fixed seed does not depend on how many threads run.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples per counter-based substream.
pub const MC_BLOCK: usize = 4096;

/// Largest Gauss-Hermite rule offered.
pub const MAX_GH_NODES: usize = 128;

fn default_quad_tol() -> f64 {
    1e-9
}

fn default_mc_tol() -> f64 {
    f64::INFINITY
}

/// Declarative integration scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QuadScheme {
    /// Tensor product of `nodes`-point Gauss-Hermite rules.
    TensorGaussHermite {
        nodes: usize,
        #[serde(default = "default_quad_tol")]
        tol: f64,
    },
    /// Plain Monte Carlo; `tol` bounds the acceptable standard error.
    MonteCarlo {
        samples: usize,
        seed: u64,
        #[serde(default = "default_mc_tol")]
        tol: f64,
    },
    /// Composite Gauss-Legendre in time with adaptive panel bisection.
    TimePanels {
        order: usize,
        max_refine: usize,
        #[serde(default = "default_quad_tol")]
        tol: f64,
    },
}

impl QuadScheme {
    pub fn gauss_hermite(nodes: usize) -> Self {
        QuadScheme::TensorGaussHermite { nodes, tol: default_quad_tol() }
    }

    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        QuadScheme::MonteCarlo { samples, seed, tol: default_mc_tol() }
    }

    pub fn time_panels(order: usize, max_refine: usize) -> Self {
        QuadScheme::TimePanels { order, max_refine, tol: 1e-13 }
    }

    pub fn tol(&self) -> f64 {
        match *self {
            QuadScheme::TensorGaussHermite { tol, .. }
            | QuadScheme::MonteCarlo { tol, .. }
            | QuadScheme::TimePanels { tol, .. } => tol,
        }
    }

    pub fn is_monte_carlo(&self) -> bool {
        matches!(self, QuadScheme::MonteCarlo { .. })
    }

    /// Default chaos-transform scheme: `degree + 2` Gauss-Hermite nodes per
    /// axis up to four dimensions, Monte Carlo beyond.
    pub fn default_for_chaos(dim: usize, degree: usize) -> Self {
        if dim <= 4 {
            QuadScheme::gauss_hermite(degree + 2)
        } else {
            QuadScheme::monte_carlo(1 << 20, 0x5eed)
        }
    }
}

/// A numerical estimate with its standard error (zero for deterministic rules).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, stderr: 0.0 }
    }
}

/// Probabilists' Gauss-Hermite nodes and weights, `1 <= n <= 128`.
///
/// Golub-Welsch for the starting values, then Newton polishing on the
/// orthonormal Hermite recurrence; the weights come from the Christoffel
/// function, which keeps the tiny outer weights accurate in relative terms.
pub fn gh_nodes(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 || n > MAX_GH_NODES {
        return Err(Error::InvalidArgument(format!(
            "Gauss-Hermite rule needs 1..={MAX_GH_NODES} nodes, got {n}"
        )));
    }
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        jacobi[(k, k - 1)] = b;
        jacobi[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // orthonormal recurrence p_{k+1} = (x p_k - sqrt(k) p_{k-1}) / sqrt(k+1)
    let eval = |x: f64| -> (f64, f64, f64) {
        let mut p_prev = 0.0;
        let mut p = 1.0;
        let mut christoffel = 0.0;
        for k in 0..n {
            christoffel += p * p;
            let next = (x * p - (k as f64).sqrt() * p_prev) / ((k + 1) as f64).sqrt();
            p_prev = p;
            p = next;
        }
        // p = p_n, p_prev = p_{n-1}; p_n' = sqrt(n) p_{n-1}
        (p, (n as f64).sqrt() * p_prev, christoffel)
    };

    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, dp, _) = eval(*x);
            if dp != 0.0 {
                *x -= p / dp;
            }
        }
        let (_, _, c) = eval(*x);
        weights.push(1.0 / c);
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    // enforce exact symmetry
    for i in 0..n / 2 {
        let x = 0.5 * (nodes[n - 1 - i] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[n - 1 - i]);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok((nodes, weights))
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gl_nodes(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 || n > 256 {
        return Err(Error::InvalidArgument(format!("Gauss-Legendre order {n} out of range")));
    }
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        jacobi[(k, k - 1)] = b;
        jacobi[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let legendre = |x: f64| -> (f64, f64) {
        let mut p_prev = 1.0;
        let mut p = x;
        if n == 0 {
            return (1.0, 0.0);
        }
        for k in 1..n {
            let kf = k as f64;
            let next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
            p_prev = p;
            p = next;
        }
        let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
        (p, dp)
    };
    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = legendre(*x);
            *x -= p / dp;
        }
        let (_, dp) = legendre(*x);
        weights.push(2.0 / ((1.0 - *x * *x) * dp * dp));
    }
    Ok((nodes, weights))
}

/// `int_a^b f` for vector-valued `f` by composite Gauss-Legendre of the
/// given order. `[a, b]` is first split at `breakpoints`; a panel is accepted
/// once the sum of the components changes by less than its share of
/// `tol * max(1, |sum|)` under bisection, and `QuadratureFailure` is returned
/// when `max_refine` levels do not suffice.
pub fn adaptive_gauss_legendre<F>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    order: usize,
    max_refine: usize,
    tol: f64,
) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Vec<f64>,
{
    if !(a <= b) {
        return Err(Error::InvalidArgument(format!("integration bounds out of order: [{a}, {b}]")));
    }
    let (x, w) = gl_nodes(order)?;
    let panel = |lo: f64, hi: f64| -> Vec<f64> {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let mut acc: Vec<f64> = Vec::new();
        for (xi, wi) in x.iter().zip(&w) {
            let v = f(mid + half * xi);
            if acc.is_empty() {
                acc = vec![0.0; v.len()];
            }
            for (a, vi) in acc.iter_mut().zip(&v) {
                *a += wi * half * vi;
            }
        }
        acc
    };
    let mut cuts = vec![a];
    cuts.extend(breakpoints.iter().copied().filter(|&p| p > a && p < b));
    cuts.push(b);
    cuts.dedup();
    let total_len = b - a;
    if total_len == 0.0 {
        return Ok(vec![0.0; f(a).len()]);
    }
    let scale: f64 = cuts.windows(2).map(|c| panel(c[0], c[1]).iter().sum::<f64>()).sum::<f64>().abs().max(1.0);
    let budget = tol * scale;

    let mut total: Vec<f64> = Vec::new();
    let mut stack: Vec<(f64, f64, Vec<f64>, usize)> = cuts.windows(2).rev().map(|c| (c[0], c[1], panel(c[0], c[1]), 0)).collect();
    while let Some((lo, hi, whole, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = panel(lo, mid);
        let right = panel(mid, hi);
        let refined: Vec<f64> = left.iter().zip(&right).map(|(l, r)| l + r).collect();
        let diff = (refined.iter().sum::<f64>() - whole.iter().sum::<f64>()).abs();
        let magnitude: f64 = refined.iter().map(|v| v.abs()).sum();
        if diff <= budget * (hi - lo) / total_len || diff <= 64.0 * f64::EPSILON * magnitude {
            if total.is_empty() {
                total = vec![0.0; refined.len()];
            }
            for (t, r) in total.iter_mut().zip(&refined) {
                *t += r;
            }
        } else if depth >= max_refine {
            return Err(Error::QuadratureFailure { s: a, t: b });
        } else {
            stack.push((mid, hi, right, depth + 1));
            stack.push((lo, mid, left, depth + 1));
        }
    }
    Ok(total)
}

/// Runs `visit` over every node of the `dim`-fold tensor rule, in
/// lexicographic order, passing the point and its weight.
pub fn for_each_tensor_node(
    nodes: &[f64],
    weights: &[f64],
    dim: usize,
    mut visit: impl FnMut(&[f64], f64),
) {
    let n = nodes.len();
    if dim == 0 {
        visit(&[], 1.0);
        return;
    }
    let mut idx = vec![0usize; dim];
    let mut point = vec![nodes[0]; dim];
    loop {
        let w: f64 = idx.iter().map(|&i| weights[i]).product();
        visit(&point, w);
        let mut axis = dim;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < n {
                point[axis] = nodes[idx[axis]];
                break;
            }
            idx[axis] = 0;
            point[axis] = nodes[0];
        }
    }
}

/// Expectation of `f(Z)` with `Z ~ N(0, I_dim)` under `scheme`.
///
/// Tensor rules sum the slabs of the first axis in parallel and add them in
/// order, so the result is bitwise reproducible.
pub fn std_normal_expectation<F>(dim: usize, scheme: &QuadScheme, f: F) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    match *scheme {
        QuadScheme::TensorGaussHermite { nodes, .. } => {
            let (x, w) = gh_nodes(nodes)?;
            if dim == 0 {
                return Ok(Estimate::exact(f(&[])));
            }
            let slabs: Vec<f64> = (0..x.len())
                .into_par_iter()
                .map(|i| {
                    let mut acc = 0.0;
                    let mut point = vec![0.0; dim];
                    point[0] = x[i];
                    for_each_tensor_node(&x, &w, dim - 1, |rest, wr| {
                        point[1..].copy_from_slice(rest);
                        acc += wr * f(&point);
                    });
                    w[i] * acc
                })
                .collect();
            Ok(Estimate::exact(slabs.iter().sum()))
        }
        QuadScheme::MonteCarlo { samples, seed, tol } => {
            let est = mc_estimate(
                |z: &Vec<f64>| f(z),
                |rng: &mut ChaCha8Rng| standard_normal_vec(rng, dim),
                samples,
                seed,
            )?;
            if est.stderr > tol {
                return Err(Error::SchemeTooCoarse { residual: est.stderr, tol });
            }
            Ok(est)
        }
        QuadScheme::TimePanels { .. } => Err(Error::InvalidArgument(
            "time-panel schemes integrate over time, not over Gaussian measures".into(),
        )),
    }
}

/// `E[f(Z)]` for a vector-valued `f`, `Z ~ N(0, I_dim)`. `f` writes its
/// value at a point into the output slice. Monte Carlo mode returns the
/// sample mean without error bars.
pub fn std_normal_expectation_vec<F>(dim: usize, scheme: &QuadScheme, len: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let add_into = |acc: &mut Vec<f64>, scratch: &[f64], w: f64| {
        for (a, s) in acc.iter_mut().zip(scratch) {
            *a += w * s;
        }
    };
    match *scheme {
        QuadScheme::TensorGaussHermite { nodes, .. } => {
            let (x, w) = gh_nodes(nodes)?;
            if dim == 0 {
                let mut out = vec![0.0; len];
                f(&[], &mut out);
                return Ok(out);
            }
            let slabs: Vec<Vec<f64>> = (0..x.len())
                .into_par_iter()
                .map(|i| {
                    let mut acc = vec![0.0; len];
                    let mut scratch = vec![0.0; len];
                    let mut point = vec![0.0; dim];
                    point[0] = x[i];
                    for_each_tensor_node(&x, &w, dim - 1, |rest, wr| {
                        point[1..].copy_from_slice(rest);
                        scratch.iter_mut().for_each(|v| *v = 0.0);
                        f(&point, &mut scratch);
                        add_into(&mut acc, &scratch, w[i] * wr);
                    });
                    acc
                })
                .collect();
            let mut out = vec![0.0; len];
            for s in slabs {
                add_into(&mut out, &s, 1.0);
            }
            Ok(out)
        }
        QuadScheme::MonteCarlo { samples, seed, .. } => {
            if samples == 0 {
                return Err(Error::InvalidArgument("Monte Carlo needs samples > 0".into()));
            }
            let blocks = samples.div_ceil(MC_BLOCK);
            let parts: Vec<Vec<f64>> = (0..blocks)
                .into_par_iter()
                .map(|b| {
                    let mut rng = substream(seed, b as u64);
                    let n = MC_BLOCK.min(samples - b * MC_BLOCK);
                    let mut acc = vec![0.0; len];
                    let mut scratch = vec![0.0; len];
                    for _ in 0..n {
                        let z = standard_normal_vec(&mut rng, dim);
                        scratch.iter_mut().for_each(|v| *v = 0.0);
                        f(&z, &mut scratch);
                        add_into(&mut acc, &scratch, 1.0);
                    }
                    acc
                })
                .collect();
            let mut out = vec![0.0; len];
            for s in parts {
                add_into(&mut out, &s, 1.0 / samples as f64);
            }
            Ok(out)
        }
        QuadScheme::TimePanels { .. } => Err(Error::InvalidArgument(
            "time-panel schemes integrate over time, not over Gaussian measures".into(),
        )),
    }
}

pub fn standard_normal_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Generator for substream `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sample mean and standard error of `f` over `n` draws from `sampler`.
pub fn mc_estimate<P, F, S>(f: F, sampler: S, n: usize, seed: u64) -> Result<Estimate>
where
    F: Fn(&P) -> f64 + Sync,
    S: Fn(&mut ChaCha8Rng) -> P + Sync,
{
    if n < 2 {
        return Err(Error::InvalidArgument("Monte Carlo needs at least 2 samples".into()));
    }
    let blocks = n.div_ceil(MC_BLOCK);
    // (count, mean, M2) per block, merged in block order
    let parts: Vec<(f64, f64, f64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, b as u64);
            let len = MC_BLOCK.min(n - b * MC_BLOCK);
            let mut mean = 0.0;
            let mut m2 = 0.0;
            for i in 0..len {
                let v = f(&sampler(&mut rng));
                let delta = v - mean;
                mean += delta / (i + 1) as f64;
                m2 += delta * (v - mean);
            }
            (len as f64, mean, m2)
        })
        .collect();
    let (mut count, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for (nb, mb, m2b) in parts {
        let total = count + nb;
        let delta = mb - mean;
        mean += delta * nb / total;
        m2 += m2b + delta * delta * count * nb / total;
        count = total;
    }
    let var = m2 / (count - 1.0);
    Ok(Estimate { value: mean, stderr: (var.max(0.0) / count).sqrt() })
}
