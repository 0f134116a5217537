//! Joint estimation of a coupling γ and an affine map T = (A, b):
//!
//! ```text
//! min_{γ ∈ Γ, T}  ‖T(X) − diag(μ)⁻¹ γ B_r(Y)‖² + α⟨γ, D⟩ + β‖A − I‖²
//! ```
//!
//! Alternating minimization. The γ-step runs conditional gradient on the
//! quadratic in γ with exact network-simplex subproblems and a closed-form
//! line search; the T-step is a ridge least-squares solve over ℂ with the
//! intercept left unregularized.

use std::io::Write;

use log::info;
use ndarray::{s, Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ball_contract, cost_matrix, ExactOtSolver, LinearMap, SampleSet, TransportPlan};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct P1Config {
    /// Transport-term weight; `None` uses 0.1·n·N_X / max(D).
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Regularization weight; `None` uses 1e-8·N_X / n.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_outer")]
    pub max_outer_iters: usize,
    #[serde(default = "default_fw")]
    pub max_fw_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// A γ-step stops once the duality gap falls below this fraction of the
    /// current objective.
    #[serde(default = "default_fw_tol")]
    pub fw_tol: f64,
}

fn default_radius() -> f64 {
    1.0
}
fn default_outer() -> usize {
    50
}
fn default_fw() -> usize {
    20
}
fn default_tol() -> f64 {
    1e-6
}
fn default_fw_tol() -> f64 {
    1e-3
}

impl Default for P1Config {
    fn default() -> Self {
        Self {
            alpha: None,
            beta: None,
            radius: default_radius(),
            max_outer_iters: default_outer(),
            max_fw_iters: default_fw(),
            tol: default_tol(),
            fw_tol: default_fw_tol(),
        }
    }
}

impl P1Config {
    pub fn with_radius(radius: f64) -> Self {
        Self {
            radius,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.radius) {
            return Err(Error::invalid(format!(
                "radius must lie in [0, 1], got {}",
                self.radius
            )));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::invalid(format!("alpha must be > 0, got {a}")));
            }
        }
        if let Some(b) = self.beta {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(Error::invalid(format!("beta must be >= 0, got {b}")));
            }
        }
        if !(self.tol > 0.0) || !(self.fw_tol > 0.0) {
            return Err(Error::invalid("tolerances must be > 0"));
        }
        if self.max_outer_iters == 0 || self.max_fw_iters == 0 {
            return Err(Error::invalid("iteration limits must be >= 1"));
        }
        Ok(())
    }

    /// Resolved (α, β) for a problem with `n_x` source samples, dimension
    /// `n` and largest cost `max_d`.
    pub fn resolve(&self, n: usize, n_x: usize, max_d: f64) -> (f64, f64) {
        let alpha = self.alpha.unwrap_or_else(|| {
            let denom = if max_d > 0.0 { max_d } else { 1.0 };
            0.1 * n as f64 * n_x as f64 / denom
        });
        let beta = self.beta.unwrap_or(1e-8 * n_x as f64 / n as f64);
        (alpha, beta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct P1TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub fit: f64,
    pub transport: f64,
    pub regularizer: f64,
}

#[derive(Clone, Debug)]
pub struct P1Result {
    pub map: LinearMap,
    pub plan: TransportPlan,
    pub trace: Vec<P1TraceRow>,
    /// Set when some γ-step hit `max_fw_iters` before its gap tolerance.
    pub fw_warning: bool,
    pub alpha: f64,
    pub beta: f64,
}

impl P1Result {
    pub fn write_trace_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "iteration",
            "objective",
            "fit_term",
            "transport_term",
            "regularizer",
        ])?;
        for r in &self.trace {
            wr.write_record(&[
                r.iteration.to_string(),
                format!("{:e}", r.objective),
                format!("{:e}", r.fit),
                format!("{:e}", r.transport),
                format!("{:e}", r.regularizer),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Split real/imaginary parts of a complex matrix.
fn split(z: &Array2<Complex64>) -> (Array2<f64>, Array2<f64>) {
    (z.mapv(|v| v.re), z.mapv(|v| v.im))
}

/// diag(scale) γ Z
fn weighted_target(
    gamma: &Array2<f64>,
    zr: &Array2<f64>,
    zi: &Array2<f64>,
    scale: &Array1<f64>,
) -> Array2<Complex64> {
    let wr = gamma.dot(zr);
    let wi = gamma.dot(zi);
    let mut w = Array2::<Complex64>::zeros(wr.raw_dim());
    for ((k, d), v) in w.indexed_iter_mut() {
        *v = Complex64::new(wr[[k, d]], wi[[k, d]]) * scale[k];
    }
    w
}

/// Value of the full objective and its three terms.
pub fn p1_objective(
    x: &Array2<Complex64>,
    target: &Array2<Complex64>,
    map: &LinearMap,
    gamma: &Array2<f64>,
    d: &Array2<f64>,
    alpha: f64,
    beta: f64,
) -> P1TraceRow {
    let fit = linalg::fro2(&(map.apply_rows(x) - target));
    let transport = alpha * (gamma * d).sum();
    let regularizer = beta * linalg::fro2(&(&map.a - &linalg::identity(map.dim())));
    P1TraceRow {
        iteration: 0,
        objective: fit + transport + regularizer,
        fit,
        transport,
        regularizer,
    }
}

/// Closed-form minimizer of ‖X Aᵀ + 1 bᵀ − W‖² + β‖A − I‖².
pub fn t_step(x: &Array2<Complex64>, w: &Array2<Complex64>, beta: f64) -> Result<LinearMap> {
    let (rows, n) = x.dim();
    if w.dim() != (rows, n) {
        return Err(Error::DimensionMismatch {
            expected: rows * n,
            got: w.len(),
        });
    }
    let mut xt = Array2::<Complex64>::from_elem((rows, n + 1), Complex64::new(1.0, 0.0));
    xt.slice_mut(s![.., ..n]).assign(x);
    let xh = linalg::herm(&xt);
    let mut m = xh.dot(&xt);
    let mut rhs = xh.dot(w);
    for i in 0..n {
        m[[i, i]] += beta;
        rhs[[i, i]] += beta;
    }
    let theta = linalg::solve(&m, &rhs, 1e-12).map_err(|e| match (e, beta == 0.0) {
        (Error::Singular(msg), true) => Error::Singular(format!(
            "underdetermined T-step with beta = 0 ({rows} samples, n = {n}): {msg}"
        )),
        (e, _) => e,
    })?;
    let a = theta.slice(s![..n, ..]).t().to_owned();
    let b = theta.row(n).to_owned();
    LinearMap::new(a, b)
}

/// Complex gradient (∂/∂Re + i ∂/∂Im) of the T-step objective at `map`;
/// returns (∇_A, ∇_b).
pub fn t_step_gradient(
    x: &Array2<Complex64>,
    w: &Array2<Complex64>,
    map: &LinearMap,
    beta: f64,
) -> (Array2<Complex64>, Array1<Complex64>) {
    let e = map.apply_rows(x) - w;
    let ga = e.t().dot(&x.mapv(|z| z.conj())) * Complex64::new(2.0, 0.0)
        + (&map.a - &linalg::identity(map.dim())) * Complex64::new(2.0 * beta, 0.0);
    let gb = e.sum_axis(ndarray::Axis(0)) * Complex64::new(2.0, 0.0);
    (ga, gb)
}

/// Runs the alternating solver for source samples `x` and target samples
/// `y`. The cost matrix D is built from the uncontracted `y`.
pub fn solve_p1(x: &SampleSet, y: &SampleSet, cfg: &P1Config) -> Result<P1Result> {
    cfg.validate()?;
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    let n = x.dim();
    let n_x = x.len();
    let d = cost_matrix(x, y)?.into_inner();
    let max_d = d.iter().cloned().fold(0.0, f64::max);
    let (alpha, beta) = cfg.resolve(n, n_x, max_d);
    if beta == 0.0 && n_x < n + 1 {
        return Err(Error::Singular(format!(
            "underdetermined T-step with beta = 0: {n_x} samples for {} unknowns per row",
            n + 1
        )));
    }

    let mu = x.weights();
    let nu = y.weights();
    if mu.iter().any(|&m| m <= 0.0) {
        return Err(Error::invalid("source weights must be strictly positive"));
    }
    let scale = mu.mapv(|m| 1.0 / m);
    let z = ball_contract(y, cfg.radius)?;
    let (zr, zi) = split(z.points());
    let xp = x.points();

    let mut lp = ExactOtSolver::new(mu, nu)?;
    let (init, _) = lp.solve(&d)?;
    let mut gamma = init.gamma;

    let objective = |map: &LinearMap, gamma: &Array2<f64>| {
        let target = weighted_target(gamma, &zr, &zi, &scale);
        p1_objective(xp, &target, map, gamma, &d, alpha, beta)
    };
    // Fit T to the exact coupling first; starting the γ-step from the
    // identity map drags γ toward diffuse plans.
    let mut map = t_step(xp, &weighted_target(&gamma, &zr, &zi, &scale), beta)?;

    let mut trace = vec![objective(&map, &gamma)];
    let mut fw_warning = false;

    for outer in 1..=cfg.max_outer_iters {
        // γ-step
        let f = map.apply_rows(xp);
        let (fr, fi) = split(&f);
        let mut fw_done = false;
        for _ in 0..cfg.max_fw_iters {
            let target = weighted_target(&gamma, &zr, &zi, &scale);
            let (tr, ti) = split(&target);
            let rr = &fr - &tr;
            let ri = &fi - &ti;
            let mut grad = rr.dot(&zr.t()) + ri.dot(&zi.t());
            for (mut row, &s) in grad.outer_iter_mut().zip(scale.iter()) {
                row.mapv_inplace(|v| -2.0 * s * v);
            }
            grad.scaled_add(alpha, &d);

            let (vertex, _) = lp.solve(&grad)?;
            let dir = &vertex.gamma - &gamma;
            let gap = -(&grad * &dir).sum();
            let current = linalg::fro2(&(&f - &target)) + alpha * (&gamma * &d).sum();
            if gap <= cfg.fw_tol * current.abs().max(f64::MIN_POSITIVE) {
                fw_done = true;
                break;
            }
            let dz = weighted_target(&dir, &zr, &zi, &scale);
            let curvature = 2.0 * linalg::fro2(&dz);
            let step = if curvature > 0.0 {
                (gap / curvature).min(1.0)
            } else {
                1.0
            };
            gamma.scaled_add(step, &dir);
            gamma.mapv_inplace(|v| v.max(0.0));
        }
        fw_warning |= !fw_done;

        // T-step
        let target = weighted_target(&gamma, &zr, &zi, &scale);
        map = t_step(xp, &target, beta)?;

        let mut row = objective(&map, &gamma);
        row.iteration = outer;
        let prev = trace.last().map_or(f64::INFINITY, |r| r.objective);
        trace.push(row);
        let rel = (prev - row.objective) / prev.abs().max(f64::MIN_POSITIVE);
        if rel < cfg.tol {
            break;
        }
    }
    if fw_warning {
        info!(
            "conditional gradient hit {} steps without reaching tolerance {}",
            cfg.max_fw_iters, cfg.fw_tol
        );
    }

    Ok(P1Result {
        map,
        plan: TransportPlan {
            gamma,
            row_marginal: mu.clone(),
            col_marginal: nu.clone(),
        },
        trace,
        fw_warning,
        alpha,
        beta,
    })
}
