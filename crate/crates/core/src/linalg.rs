//! Tridiagonal solvers and small dense helpers.

use nalgebra::DMatrix;
use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

type C = Complex64;

/// Solves a general complex tridiagonal system in one pass.
///
/// `lower[i]` multiplies `x[i-1]` in row `i` (so `lower[0]` is ignored) and
/// `upper[i]` multiplies `x[i+1]` (so the last entry is ignored).
pub fn solve_tridiagonal(lower: &[C], diag: &[C], upper: &[C], rhs: &[C]) -> Result<Vec<C>> {
    let n = diag.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n {
        return Err(Error::InvalidInput(format!(
            "tridiagonal bands must all have length {n}"
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut cp = vec![C::new(0.0, 0.0); n];
    let mut x = vec![C::new(0.0, 0.0); n];
    let mut pivot = diag[0];
    if pivot.norm() == 0.0 {
        return Err(Error::ZeroPivot { row: 0 });
    }
    cp[0] = upper[0] / pivot;
    x[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - lower[i] * cp[i - 1];
        if pivot.norm() == 0.0 || !pivot.is_finite() {
            return Err(Error::ZeroPivot { row: i });
        }
        cp[i] = upper[i] / pivot;
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] -= cp[i] * next;
    }
    Ok(x)
}

/// LU factors of a fixed tridiagonal matrix, reused for many right-hand sides.
#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    lower: Vec<C>,
    upper_scaled: Vec<C>,
    inv_pivot: Vec<C>,
}

impl TridiagonalLu {
    pub fn new(lower: &[C], diag: &[C], upper: &[C]) -> Result<Self> {
        let n = diag.len();
        if lower.len() != n || upper.len() != n || n == 0 {
            return Err(Error::InvalidInput("bad tridiagonal band lengths".into()));
        }
        let mut upper_scaled = vec![C::new(0.0, 0.0); n];
        let mut inv_pivot = vec![C::new(0.0, 0.0); n];
        for i in 0..n {
            let pivot = if i == 0 {
                diag[0]
            } else {
                diag[i] - lower[i] * upper_scaled[i - 1]
            };
            if pivot.norm() == 0.0 || !pivot.is_finite() {
                return Err(Error::ZeroPivot { row: i });
            }
            inv_pivot[i] = pivot.inv();
            upper_scaled[i] = upper[i] * inv_pivot[i];
        }
        Ok(Self {
            lower: lower.to_vec(),
            upper_scaled,
            inv_pivot,
        })
    }

    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    /// Overwrites `x` (the right-hand side) with the solution.
    pub fn solve_in_place(&self, x: &mut [C]) {
        let n = self.len();
        debug_assert_eq!(x.len(), n);
        x[0] *= self.inv_pivot[0];
        for i in 1..n {
            let prev = x[i - 1];
            x[i] = (x[i] - self.lower[i] * prev) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            let next = x[i + 1];
            x[i] -= self.upper_scaled[i] * next;
        }
    }
}

pub(crate) fn to_nalgebra(a: &Array2<C>) -> DMatrix<C> {
    let (rows, cols) = a.dim();
    DMatrix::from_fn(rows, cols, |i, j| a[[i, j]])
}

/// Singular values of a complex matrix, descending.
pub fn singular_values(a: &Array2<C>) -> Vec<f64> {
    let mut sv: Vec<f64> = to_nalgebra(a).singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Eigenvalues of a Hermitian matrix (only the lower triangle is trusted), ascending.
pub fn hermitian_eigenvalues(a: &Array2<C>) -> Vec<f64> {
    let m = to_nalgebra(a);
    let sym = (&m + m.adjoint()) * C::new(0.5, 0.0);
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn matvec(lower: &[C], diag: &[C], upper: &[C], x: &[C]) -> Vec<C> {
        let n = x.len();
        (0..n)
            .map(|i| {
                let mut s = diag[i] * x[i];
                if i > 0 {
                    s += lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    s += upper[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    #[test]
    fn thomas_recovers_known_solution() {
        let n = 9;
        let lower: Vec<C> = (0..n).map(|i| c(1.0, 0.1 * i as f64)).collect();
        let upper: Vec<C> = (0..n).map(|i| c(-0.5, 0.3 - 0.05 * i as f64)).collect();
        let diag: Vec<C> = (0..n).map(|i| c(4.0, -1.0 + i as f64 * 0.2)).collect();
        let x: Vec<C> = (0..n).map(|i| c((i as f64).sin(), (i as f64).cos())).collect();
        let rhs = matvec(&lower, &diag, &upper, &x);
        let got = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        for (a, b) in got.iter().zip(&x) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-13);
        }
        let lu = TridiagonalLu::new(&lower, &diag, &upper).unwrap();
        let mut y = rhs.clone();
        lu.solve_in_place(&mut y);
        for (a, b) in y.iter().zip(&x) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        let z = vec![c(0.0, 0.0); 3];
        let one = vec![c(1.0, 0.0); 3];
        let err = solve_tridiagonal(&one, &z, &one, &one).unwrap_err();
        assert!(matches!(err, Error::ZeroPivot { row: 0 }));
        assert!(TridiagonalLu::new(&one, &z, &one).is_err());
    }

    #[test]
    fn singular_values_of_diagonal() {
        let mut a = Array2::<C>::zeros((3, 3));
        a[[0, 0]] = c(0.0, -2.0);
        a[[1, 1]] = c(3.0, 0.0);
        a[[2, 2]] = c(-1.0, 0.0);
        let sv = singular_values(&a);
        assert_abs_diff_eq!(sv[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sv[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sv[2], 1.0, epsilon = 1e-12);
        let ev = hermitian_eigenvalues(&Array2::from_diag(&ndarray::arr1(&[
            c(2.0, 0.0),
            c(-1.0, 0.0),
        ])));
        assert_abs_diff_eq!(ev[0], -1.0, epsilon = 1e-12);
    }
}
