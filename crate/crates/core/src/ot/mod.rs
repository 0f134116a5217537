//! Discrete optimal transport between atom sample sets.

mod entropic;
mod exact;
mod p1;

use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::semlang::SemanticSymbol;

pub use entropic::{solve_ot_entropic, SinkhornOptions};
pub use exact::{solve_ot_exact, solve_ot_exact_with, ExactOtSolver, NetworkSimplexStats};
pub use p1::{p1_objective, solve_p1, t_step, t_step_gradient, P1Config, P1Result, P1TraceRow};

/// Weighted point cloud in ℂⁿ.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    points: Array2<Complex64>,
    weights: Array1<f64>,
}

impl SampleSet {
    /// Uniform weights 1/N.
    pub fn uniform(points: Array2<Complex64>) -> Result<Self> {
        let n = points.nrows();
        if n == 0 {
            return Err(Error::EmptySamples("sample set needs N >= 1".into()));
        }
        Ok(Self {
            points,
            weights: Array1::from_elem(n, 1.0 / n as f64),
        })
    }

    pub fn weighted(points: Array2<Complex64>, weights: Array1<f64>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::EmptySamples("sample set needs N >= 1".into()));
        }
        if weights.len() != points.nrows() {
            return Err(Error::DimensionMismatch {
                expected: points.nrows(),
                got: weights.len(),
            });
        }
        check_probability(&weights)?;
        Ok(Self { points, weights })
    }

    pub fn from_symbols(symbols: &[SemanticSymbol]) -> Result<Self> {
        let n = symbols.first().map_or(0, SemanticSymbol::dim);
        for s in symbols {
            if s.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: s.dim(),
                });
            }
        }
        Self::uniform(Array2::from_shape_fn((symbols.len(), n), |(k, d)| {
            symbols[k].values()[d]
        }))
    }

    pub fn points(&self) -> &Array2<Complex64> {
        &self.points
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|&x| x == w)
    }

    /// Weighted mean point.
    pub fn mean(&self) -> Array1<Complex64> {
        let mut c = Array1::<Complex64>::zeros(self.dim());
        for (row, &w) in self.points.outer_iter().zip(self.weights.iter()) {
            c.scaled_add(Complex64::new(w, 0.0), &row);
        }
        c
    }
}

pub(crate) fn check_probability(w: &Array1<f64>) -> Result<()> {
    if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::invalid("weights must be finite and >= 0"));
    }
    let s: f64 = w.sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("weights sum to {s}, expected 1")));
    }
    Ok(())
}

/// Pairwise squared Euclidean costs over the 2n real coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix(Array2<f64>);

impl CostMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        if entries.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid("cost entries must be finite and >= 0"));
        }
        Ok(Self(entries))
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn max(&self) -> f64 {
        self.0.iter().cloned().fold(0.0, f64::max)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

pub fn cost_matrix(x: &SampleSet, y: &SampleSet) -> Result<CostMatrix> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    let xp = x.points();
    let yp = y.points();
    let d = Array2::from_shape_fn((x.len(), y.len()), |(k, l)| {
        xp.row(k)
            .iter()
            .zip(yp.row(l).iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum()
    });
    Ok(CostMatrix(d))
}

/// Coupling on the discrete transport polytope.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub gamma: Array2<f64>,
    pub row_marginal: Array1<f64>,
    pub col_marginal: Array1<f64>,
}

impl TransportPlan {
    /// ⟨γ, D⟩
    pub fn cost(&self, d: &Array2<f64>) -> f64 {
        (&self.gamma * d).sum()
    }

    /// max(‖γ1 − μ‖₁, ‖γᵀ1 − ν‖₁)
    pub fn marginal_residual(&self) -> f64 {
        let rows = self.gamma.sum_axis(Axis(1));
        let cols = self.gamma.sum_axis(Axis(0));
        let r: f64 = (&rows - &self.row_marginal).mapv(f64::abs).sum();
        let c: f64 = (&cols - &self.col_marginal).mapv(f64::abs).sum();
        r.max(c)
    }
}

pub(crate) fn check_marginals(d: &Array2<f64>, mu: &Array1<f64>, nu: &Array1<f64>) -> Result<()> {
    if mu.len() != d.nrows() {
        return Err(Error::DimensionMismatch {
            expected: d.nrows(),
            got: mu.len(),
        });
    }
    if nu.len() != d.ncols() {
        return Err(Error::DimensionMismatch {
            expected: d.ncols(),
            got: nu.len(),
        });
    }
    if mu
        .iter()
        .chain(nu.iter())
        .any(|&x| !(x >= 0.0) || !x.is_finite())
    {
        return Err(Error::invalid("marginals must be finite and >= 0"));
    }
    let gap = (mu.sum() - nu.sum()).abs();
    if gap > 1e-9 {
        return Err(Error::InfeasibleMarginals(gap));
    }
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("cost matrix has non-finite entries"));
    }
    Ok(())
}

/// Affine map T(x) = A x + b on ℂⁿ.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMap {
    pub a: Array2<Complex64>,
    pub b: Array1<Complex64>,
}

impl LinearMap {
    pub fn new(a: Array2<Complex64>, b: Array1<Complex64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::invalid("A must be square"));
        }
        if b.len() != a.nrows() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: b.len(),
            });
        }
        if a.iter()
            .chain(b.iter())
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::invalid("map has non-finite entries"));
        }
        Ok(Self { a, b })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            a: crate::linalg::identity(n),
            b: Array1::zeros(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn apply(&self, x: &[Complex64]) -> SemanticSymbol {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        let out = (0..n)
            .map(|i| self.b[i] + (0..n).map(|j| self.a[[i, j]] * x[j]).sum::<Complex64>())
            .collect();
        SemanticSymbol::from_vec_unchecked(out)
    }

    /// Applies the map to every row of `points`: X Aᵀ + 1 bᵀ.
    pub fn apply_rows(&self, points: &Array2<Complex64>) -> Array2<Complex64> {
        let mut out = points.dot(&self.a.t());
        for mut row in out.outer_iter_mut() {
            row += &self.b;
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.a
            .iter()
            .chain(self.b.iter())
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// B_r(Y): contracts `y` toward its weighted mean by factor `r`.
pub fn ball_contract(y: &SampleSet, r: f64) -> Result<SampleSet> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::invalid(format!(
            "radius must lie in [0, 1], got {r}"
        )));
    }
    if r == 1.0 {
        return Ok(y.clone());
    }
    let c = y.mean();
    let mut pts = y.points().clone();
    for mut row in pts.outer_iter_mut() {
        let shifted = (&row - &c).mapv(|z| z * r) + &c;
        row.assign(&shifted);
    }
    Ok(SampleSet {
        points: pts,
        weights: y.weights().clone(),
    })
}

/// Row k ↦ (Σ_l γ_kl y_l) / (Σ_l γ_kl).
pub fn barycentric_map(plan: &TransportPlan, y: &SampleSet) -> Result<Array2<Complex64>> {
    let g = &plan.gamma;
    if g.ncols() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: g.ncols(),
        });
    }
    let mass = g.sum_axis(Axis(1));
    if let Some(k) = mass.iter().position(|&m| !(m > 0.0)) {
        return Err(Error::invalid(format!(
            "row {k} of the coupling has zero mass"
        )));
    }
    let mut out = crate::linalg::real_dot_complex(g, y.points());
    for (mut row, &m) in out.outer_iter_mut().zip(mass.iter()) {
        row.mapv_inplace(|z| z / m);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_points(rows: usize, n: usize, seed: u64) -> Array2<Complex64> {
        let mut r = rng::stream(seed, &[]);
        Array2::from_shape_fn((rows, n), |_| {
            c(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn cost_matrix_examples() {
        let s = SampleSet::uniform(array![[c(0.3, -0.2)]]).unwrap();
        assert_eq!(cost_matrix(&s, &s).unwrap().entries(), &array![[0.0]]);
        let x = SampleSet::uniform(array![[c(1.0, 0.0)]]).unwrap();
        let y = SampleSet::uniform(array![[c(0.0, 1.0)]]).unwrap();
        assert_eq!(cost_matrix(&x, &y).unwrap().entries()[[0, 0]], 2.0);
    }

    #[test]
    fn cost_matrix_matches_double_loop() {
        let x = SampleSet::uniform(random_points(5, 3, 1)).unwrap();
        let y = SampleSet::uniform(random_points(7, 3, 2)).unwrap();
        let d = cost_matrix(&x, &y).unwrap();
        for k in 0..5 {
            for l in 0..7 {
                let mut acc = 0.0;
                for j in 0..3 {
                    let a = x.points()[[k, j]];
                    let b = y.points()[[l, j]];
                    acc += (a.re - b.re) * (a.re - b.re) + (a.im - b.im) * (a.im - b.im);
                }
                assert_eq!(d.entries()[[k, l]], acc);
            }
        }
    }

    #[test]
    fn cost_matrix_dimension_mismatch() {
        let x = SampleSet::uniform(random_points(2, 2, 1)).unwrap();
        let y = SampleSet::uniform(random_points(2, 3, 1)).unwrap();
        assert!(matches!(
            cost_matrix(&x, &y),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ball_contract_examples() {
        let y = SampleSet::uniform(random_points(6, 2, 3)).unwrap();
        assert_eq!(ball_contract(&y, 1.0).unwrap().points(), y.points());
        let full = ball_contract(&y, 0.0).unwrap();
        let m = y.mean();
        for row in full.points().outer_iter() {
            for (a, b) in row.iter().zip(m.iter()) {
                assert!((a - b).norm() < 1e-15);
            }
        }
        let pair = SampleSet::uniform(array![[c(1.0, 0.0)], [c(-1.0, 0.0)]]).unwrap();
        let half = ball_contract(&pair, 0.5).unwrap();
        assert_eq!(half.points(), &array![[c(0.5, 0.0)], [c(-0.5, 0.0)]]);
        assert!(ball_contract(&pair, 1.5).is_err());
    }

    #[test]
    fn ball_contract_keeps_weighted_mean() {
        let pts = random_points(5, 2, 4);
        let w = array![0.1, 0.3, 0.2, 0.25, 0.15];
        let y = SampleSet::weighted(pts, w).unwrap();
        for r in [0.0, 0.2, 0.7, 1.0] {
            let m = ball_contract(&y, r).unwrap().mean();
            for (a, b) in m.iter().zip(y.mean().iter()) {
                assert!((a - b).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn barycentric_examples() {
        let y = SampleSet::uniform(array![[c(2.0, -1.0)]]).unwrap();
        let plan = TransportPlan {
            gamma: array![[1.0]],
            row_marginal: array![1.0],
            col_marginal: array![1.0],
        };
        assert_eq!(barycentric_map(&plan, &y).unwrap(), array![[c(2.0, -1.0)]]);

        let y = SampleSet::uniform(random_points(4, 2, 5)).unwrap();
        let g = Array2::from_elem((3, 4), 1.0 / 12.0);
        let plan = TransportPlan {
            gamma: g,
            row_marginal: Array1::from_elem(3, 1.0 / 3.0),
            col_marginal: Array1::from_elem(4, 0.25),
        };
        let out = barycentric_map(&plan, &y).unwrap();
        let mean = y.mean();
        for row in out.outer_iter() {
            for (a, b) in row.iter().zip(mean.iter()) {
                assert!((a - b).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn barycentric_two_formulas_agree_for_uniform_source() {
        let x = SampleSet::uniform(random_points(6, 2, 6)).unwrap();
        let y = SampleSet::uniform(random_points(9, 2, 7)).unwrap();
        let d = cost_matrix(&x, &y).unwrap();
        let plan = solve_ot_exact(&d, x.weights(), y.weights()).unwrap();
        let a = barycentric_map(&plan, &y).unwrap();
        let b = crate::linalg::real_dot_complex(&plan.gamma, y.points()).mapv(|z| z * 6.0);
        for (p, q) in a.iter().zip(b.iter()) {
            assert!((p - q).norm() < 1e-12);
        }
    }

    #[test]
    fn barycentric_rejects_empty_row() {
        let y = SampleSet::uniform(random_points(2, 1, 8)).unwrap();
        let plan = TransportPlan {
            gamma: array![[0.5, 0.5], [0.0, 0.0]],
            row_marginal: array![0.5, 0.5],
            col_marginal: array![0.5, 0.5],
        };
        assert!(barycentric_map(&plan, &y).is_err());
    }

    #[test]
    fn linear_map_apply_rows_matches_apply() {
        let a = random_points(3, 3, 9);
        let b = random_points(1, 3, 10).row(0).to_owned();
        let t = LinearMap::new(a, b).unwrap();
        let x = random_points(4, 3, 11);
        let rows = t.apply_rows(&x);
        for k in 0..4 {
            let y = t.apply(x.row(k).as_slice().unwrap());
            for d in 0..3 {
                assert!((rows[[k, d]] - y.values()[d]).norm() < 1e-14);
            }
        }
    }
}
