//! Entropic optimal transport by Sinkhorn scaling.
//!
//! Solves `min_{P in U(u, v)} <P, C> - lambda H(P)`. The optimum has the form
//! `diag(a) K diag(b)` with Gibbs kernel `K = exp(-C / lambda)`; the scalings
//! are found by alternating `a <- u / (K b)` and `b <- v / (K^T a)`, starting
//! from `b = v`.
//!
//! The plain solver works on `K` directly and refuses kernels that underflow.
//! The log-domain solver runs the same recursion on potentials
//! `f = lambda ln a`, `g = lambda ln b` with log-sum-exp reductions, so it
//! tolerates arbitrarily small `lambda`.

use serde::{Deserialize, Serialize};

use super::cost::CostMatrix;
use crate::error::{Error, Result};
use crate::numerics::{Mat, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SinkhornConfig {
    /// Entropic regularization weight.
    pub lambda: f64,
    /// Stop once the marginal residual drops below this.
    pub delta: f64,
    pub max_iters: usize,
    pub log_domain: bool,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            delta: 0.01,
            max_iters: 100,
            log_domain: false,
        }
    }
}

/// Source (`u`, one entry per feature) and target (`v`, one per prompt)
/// probability vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginals<T> {
    pub u: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> Marginals<T> {
    pub fn uniform(rows: usize, cols: usize) -> Self {
        let u = vec![T::one() / T::from_usize(rows).unwrap(); rows];
        let v = vec![T::one() / T::from_usize(cols).unwrap(); cols];
        Self { u, v }
    }

    pub fn new(u: Vec<T>, v: Vec<T>) -> Result<Self> {
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(16.0));
        for (name, p) in [("u", &u), ("v", &v)] {
            if p.is_empty() || p.iter().any(|&x| !(x > T::zero()) || !x.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "marginal {name} must be non-empty with positive entries"
                )));
            }
            let s: T = p.iter().copied().sum();
            if (s - T::one()).abs() > tol {
                return Err(Error::InvalidArgument(format!(
                    "marginal {name} sums to {s}, expected 1"
                )));
            }
        }
        Ok(Self { u, v })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan<T> {
    pub coupling: Mat<T>,
    pub iterations_used: usize,
    pub converged: bool,
    /// Marginal residual `max(|P 1 - u|_inf, |P^T 1 - v|_inf)` at exit.
    pub residual: T,
}

fn marginal_residual<T: Scalar>(plan: &Mat<T>, m: &Marginals<T>) -> T {
    let rows = plan
        .row_sums()
        .into_iter()
        .zip(&m.u)
        .fold(T::zero(), |acc, (s, &u)| acc.max((s - u).abs()));
    plan.col_sums()
        .into_iter()
        .zip(&m.v)
        .fold(rows, |acc, (s, &v)| acc.max((s - v).abs()))
}

pub fn sinkhorn<T: Scalar>(
    cost: &CostMatrix<T>,
    marginals: &Marginals<T>,
    cfg: &SinkhornConfig,
) -> Result<TransportPlan<T>> {
    let (rows, cols) = cost.shape();
    if marginals.u.len() != rows || marginals.v.len() != cols {
        return Err(Error::DimensionMismatch {
            op: "sinkhorn",
            left: (rows, cols),
            right: (marginals.u.len(), marginals.v.len()),
        });
    }
    if !(cfg.lambda > 0.0) || !cfg.lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "sinkhorn lambda must be positive, got {}",
            cfg.lambda
        )));
    }
    if cfg.log_domain {
        sinkhorn_log(cost, marginals, cfg)
    } else {
        sinkhorn_plain(cost, marginals, cfg)
    }
}

fn underflow<T: Scalar>(cost: &CostMatrix<T>, cfg: &SinkhornConfig) -> Error {
    Error::KernelUnderflow {
        lambda: cfg.lambda,
        max_cost: cost.values.max_abs().to_f64_lossy(),
    }
}

fn sinkhorn_plain<T: Scalar>(
    cost: &CostMatrix<T>,
    m: &Marginals<T>,
    cfg: &SinkhornConfig,
) -> Result<TransportPlan<T>> {
    let lambda = T::lit(cfg.lambda);
    let delta = T::lit(cfg.delta);
    let kernel = cost.values.map(|c| (-c / lambda).exp());
    if kernel.row_sums().iter().chain(kernel.col_sums().iter()).any(|&s| !(s > T::zero())) {
        return Err(underflow(cost, cfg));
    }

    let (rows, cols) = kernel.shape();
    let k_times = |b: &[T]| -> Vec<T> {
        (0..rows)
            .map(|i| kernel.row(i).iter().zip(b).map(|(&k, &bj)| k * bj).sum())
            .collect()
    };
    let mut a = vec![T::one(); rows];
    let mut b = m.v.clone();
    let mut kb = k_times(&b);
    let mut residual = T::infinity();
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        for i in 0..rows {
            a[i] = m.u[i] / kb[i];
        }
        let mut kta = vec![T::zero(); cols];
        for i in 0..rows {
            for (acc, &k) in kta.iter_mut().zip(kernel.row(i)) {
                *acc += k * a[i];
            }
        }
        for j in 0..cols {
            b[j] = m.v[j] / kta[j];
        }
        iterations += 1;
        if a.iter().chain(&b).any(|x| !x.is_finite()) {
            return Err(underflow(cost, cfg));
        }
        kb = k_times(&b);
        let row_res = (0..rows).fold(T::zero(), |acc, i| acc.max((a[i] * kb[i] - m.u[i]).abs()));
        residual = (0..cols).fold(row_res, |acc, j| acc.max((b[j] * kta[j] - m.v[j]).abs()));
        if residual < delta {
            break;
        }
    }
    let plan = Mat::from_fn(rows, cols, |i, j| a[i] * kernel[(i, j)] * b[j]);
    if !plan.is_finite() {
        return Err(Error::NonFinite("sinkhorn"));
    }
    Ok(TransportPlan {
        coupling: plan,
        iterations_used: iterations,
        converged: residual < delta,
        residual,
    })
}

fn log_sum_exp<T: Scalar>(xs: impl Iterator<Item = T> + Clone) -> T {
    let max = xs.clone().fold(T::neg_infinity(), |m, x| m.max(x));
    if !max.is_finite() {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<T>().ln()
}

fn sinkhorn_log<T: Scalar>(
    cost: &CostMatrix<T>,
    m: &Marginals<T>,
    cfg: &SinkhornConfig,
) -> Result<TransportPlan<T>> {
    let lambda = T::lit(cfg.lambda);
    let delta = T::lit(cfg.delta);
    let c = &cost.values;
    let (rows, cols) = c.shape();
    let log_u: Vec<T> = m.u.iter().map(|x| x.ln()).collect();
    let log_v: Vec<T> = m.v.iter().map(|x| x.ln()).collect();

    let mut f = vec![T::zero(); rows];
    let mut g: Vec<T> = log_v.iter().map(|&lv| lambda * lv).collect();
    let mut plan = Mat::zeros(rows, cols);
    let mut residual = T::infinity();
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        for i in 0..rows {
            let lse = log_sum_exp((0..cols).map(|j| (g[j] - c[(i, j)]) / lambda));
            f[i] = lambda * (log_u[i] - lse);
        }
        for j in 0..cols {
            let lse = log_sum_exp((0..rows).map(|i| (f[i] - c[(i, j)]) / lambda));
            g[j] = lambda * (log_v[j] - lse);
        }
        iterations += 1;
        plan = Mat::from_fn(rows, cols, |i, j| ((f[i] + g[j] - c[(i, j)]) / lambda).exp());
        residual = marginal_residual(&plan, m);
        if residual < delta {
            break;
        }
    }
    if !plan.is_finite() {
        return Err(Error::NonFinite("sinkhorn (log domain)"));
    }
    Ok(TransportPlan {
        coupling: plan,
        iterations_used: iterations,
        converged: residual < delta,
        residual,
    })
}

/// Transported cost `<P, C>`. With the plan held fixed its gradient with
/// respect to `C` is `P` itself.
pub fn ot_distance<T: Scalar>(plan: &TransportPlan<T>, cost: &CostMatrix<T>) -> Result<T> {
    plan.coupling.dot(&cost.values)
}
