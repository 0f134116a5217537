//! Small dense complex linear algebra used by the map solvers.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Solves `m · x = rhs` (one column per right-hand side) by Gaussian
/// elimination with partial pivoting.
///
/// Fails with [`Error::Singular`] when a pivot falls below `rel_tol` times the
/// largest diagonal magnitude of `m`.
pub fn solve(
    m: &Array2<Complex64>,
    rhs: &Array2<Complex64>,
    rel_tol: f64,
) -> Result<Array2<Complex64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: m.ncols(),
        });
    }
    if rhs.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: rhs.nrows(),
        });
    }
    let mut a = m.clone();
    let mut b = rhs.clone();
    let scale = (0..n)
        .map(|i| m[[i, i]].norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);

    for col in 0..n {
        let (piv, piv_norm) =
            (col..n)
                .map(|r| (r, a[[r, col]].norm()))
                .fold(
                    (col, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if !(piv_norm > rel_tol * scale) {
            return Err(Error::Singular(format!(
                "pivot {piv_norm:e} at column {col} below {rel_tol:e} x {scale:e}"
            )));
        }
        if piv != col {
            for k in 0..n {
                a.swap([piv, k], [col, k]);
            }
            for k in 0..b.ncols() {
                b.swap([piv, k], [col, k]);
            }
        }
        let p = a[[col, col]];
        for r in (col + 1)..n {
            let f = a[[r, col]] / p;
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for k in col..n {
                let v = a[[col, k]];
                a[[r, k]] -= f * v;
            }
            for k in 0..b.ncols() {
                let v = b[[col, k]];
                b[[r, k]] -= f * v;
            }
        }
    }
    let mut x = Array2::<Complex64>::zeros(b.raw_dim());
    for k in 0..b.ncols() {
        for r in (0..n).rev() {
            let mut acc = b[[r, k]];
            for c in (r + 1)..n {
                acc -= a[[r, c]] * x[[c, k]];
            }
            x[[r, k]] = acc / a[[r, r]];
        }
    }
    Ok(x)
}

/// Squared Frobenius norm.
pub fn fro2(m: &Array2<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn identity(n: usize) -> Array2<Complex64> {
    Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Conjugate transpose.
pub fn herm(m: &Array2<Complex64>) -> Array2<Complex64> {
    m.t().mapv(|z| z.conj())
}

/// Real-matrix times complex-matrix product: `g · z`.
pub fn real_dot_complex(g: &Array2<f64>, z: &Array2<Complex64>) -> Array2<Complex64> {
    let (rows, inner) = g.dim();
    let cols = z.ncols();
    debug_assert_eq!(inner, z.nrows());
    let mut out = Array2::<Complex64>::zeros((rows, cols));
    for i in 0..rows {
        let grow = g.row(i);
        let mut orow = out.row_mut(i);
        for (l, &w) in grow.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let zrow = z.row(l);
            for (o, &zz) in orow.iter_mut().zip(zrow.iter()) {
                *o += zz * w;
            }
        }
    }
    out
}

pub fn vec_norm(v: &Array1<Complex64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn solves_complex_system() {
        let m = array![[c(2.0, 1.0), c(0.0, -1.0)], [c(1.0, 0.0), c(3.0, 0.5)]];
        let x = array![[c(1.0, -2.0)], [c(0.5, 0.25)]];
        let rhs = m.dot(&x);
        let got = solve(&m, &rhs, 1e-12).unwrap();
        for (g, e) in got.iter().zip(x.iter()) {
            assert!((g - e).norm() < 1e-13);
        }
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let m = array![[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]];
        let rhs = array![[c(3.0, 0.0)], [c(4.0, 0.0)]];
        let got = solve(&m, &rhs, 1e-12).unwrap();
        assert!((got[[0, 0]] - c(4.0, 0.0)).norm() < 1e-15);
        assert!((got[[1, 0]] - c(3.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn singular_system_is_reported() {
        let m = array![[c(1.0, 0.0), c(2.0, 0.0)], [c(2.0, 0.0), c(4.0, 0.0)]];
        let rhs = array![[c(1.0, 0.0)], [c(1.0, 0.0)]];
        assert!(matches!(solve(&m, &rhs, 1e-12), Err(Error::Singular(_))));
    }
}
