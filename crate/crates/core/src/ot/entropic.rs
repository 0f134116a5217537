//! Log-domain Sinkhorn iterations followed by marginal rounding.

use ndarray::{Array1, Array2, Axis};

use super::{check_marginals, CostMatrix, TransportPlan};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct SinkhornOptions {
    pub max_iters: usize,
    /// Stop once ‖γ1 − μ‖₁ falls below this (columns are exact after each
    /// sweep).
    pub tol: f64,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            max_iters: 50_000,
            tol: 1e-7,
        }
    }
}

fn log_sum_exp(it: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = it.collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn solve_ot_entropic(
    d: &CostMatrix,
    mu: &Array1<f64>,
    nu: &Array1<f64>,
    epsilon: f64,
    opts: SinkhornOptions,
) -> Result<TransportPlan> {
    let c = d.entries();
    check_marginals(c, mu, nu)?;
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid(format!(
            "epsilon must be > 0, got {epsilon}"
        )));
    }
    let (n1, n2) = c.dim();
    let log_mu = mu.mapv(f64::ln);
    let log_nu = nu.mapv(f64::ln);
    let mut f = Array1::<f64>::zeros(n1);
    let mut g = Array1::<f64>::zeros(n2);

    let plan_of = |f: &Array1<f64>, g: &Array1<f64>| {
        Array2::from_shape_fn((n1, n2), |(i, j)| {
            let v = (f[i] + g[j] - c[[i, j]]) / epsilon;
            if v.is_finite() {
                v.exp()
            } else {
                0.0
            }
        })
    };

    let mut converged = false;
    let mut last_err = f64::INFINITY;
    for _ in 0..opts.max_iters {
        for i in 0..n1 {
            f[i] = if mu[i] > 0.0 {
                epsilon * log_mu[i]
                    - epsilon * log_sum_exp((0..n2).map(|j| (g[j] - c[[i, j]]) / epsilon))
            } else {
                f64::NEG_INFINITY
            };
        }
        for j in 0..n2 {
            g[j] = if nu[j] > 0.0 {
                epsilon * log_nu[j]
                    - epsilon * log_sum_exp((0..n1).map(|i| (f[i] - c[[i, j]]) / epsilon))
            } else {
                f64::NEG_INFINITY
            };
        }
        let gamma = plan_of(&f, &g);
        last_err = (&gamma.sum_axis(Axis(1)) - mu).mapv(f64::abs).sum();
        if last_err < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged(format!(
            "sinkhorn: row marginal error {last_err:e} after {} iterations",
            opts.max_iters
        )));
    }
    let gamma = round_to_marginals(plan_of(&f, &g), mu, nu);
    Ok(TransportPlan {
        gamma,
        row_marginal: mu.clone(),
        col_marginal: nu.clone(),
    })
}

/// Projects a nonnegative matrix onto the coupling polytope (rescale rows
/// and columns down, then add the rank-one correction).
pub(crate) fn round_to_marginals(
    mut gamma: Array2<f64>,
    mu: &Array1<f64>,
    nu: &Array1<f64>,
) -> Array2<f64> {
    let rows = gamma.sum_axis(Axis(1));
    for (mut row, (&r, &m)) in gamma.outer_iter_mut().zip(rows.iter().zip(mu.iter())) {
        let x = if r > 0.0 { (m / r).min(1.0) } else { 0.0 };
        row.mapv_inplace(|v| v * x);
    }
    let cols = gamma.sum_axis(Axis(0));
    for (mut col, (&s, &n)) in gamma.axis_iter_mut(Axis(1)).zip(cols.iter().zip(nu.iter())) {
        let y = if s > 0.0 { (n / s).min(1.0) } else { 0.0 };
        col.mapv_inplace(|v| v * y);
    }
    let err_r = (mu - &gamma.sum_axis(Axis(1))).mapv(|v| v.max(0.0));
    let err_c = (nu - &gamma.sum_axis(Axis(0))).mapv(|v| v.max(0.0));
    let mass: f64 = err_r.iter().map(|v| v.abs()).sum();
    if mass > 0.0 {
        for i in 0..gamma.nrows() {
            for j in 0..gamma.ncols() {
                gamma[[i, j]] += err_r[i] * err_c[j] / mass;
            }
        }
    }
    gamma
}
