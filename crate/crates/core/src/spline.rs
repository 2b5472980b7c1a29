//! Least-squares cubic B-spline smoothing on uniform knots and a
//! monotone-decreasing isotonic fit.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Cubic B-spline basis on `n_intervals` equal intervals of `[x_min, x_max]`,
/// with knots continued uniformly past both ends (`n_intervals + 3` functions
/// that sum to one everywhere on the domain).
#[derive(Debug, Clone, PartialEq)]
pub struct CubicBSpline {
    x_min: f64,
    x_max: f64,
    n_intervals: usize,
}

impl CubicBSpline {
    pub fn new(x_min: f64, x_max: f64, n_intervals: usize) -> Result<Self> {
        if !(x_max > x_min) || n_intervals == 0 {
            return Err(Error::InvalidArgument(format!(
                "bad spline domain [{x_min}, {x_max}] with {n_intervals} intervals"
            )));
        }
        Ok(CubicBSpline {
            x_min,
            x_max,
            n_intervals,
        })
    }

    /// Basis with exactly `n_basis` functions (at least 4).
    pub fn with_basis_count(x_min: f64, x_max: f64, n_basis: usize) -> Result<Self> {
        if n_basis < 4 {
            return Err(Error::InvalidArgument(format!(
                "a cubic basis needs at least 4 functions, got {n_basis}"
            )));
        }
        Self::new(x_min, x_max, n_basis - 3)
    }

    /// Knots every `spacing` units starting at `x_min`; the last interval may
    /// run past `x_max`.
    pub fn with_knot_spacing(x_min: f64, x_max: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::InvalidArgument("knot spacing must be positive".into()));
        }
        let n = ((x_max - x_min) / spacing).ceil().max(1.0) as usize;
        Self::new(x_min, x_min + n as f64 * spacing, n)
    }

    pub fn n_basis(&self) -> usize {
        self.n_intervals + 3
    }

    /// Index of the first nonzero basis function at `x` and the four values.
    pub fn nonzero(&self, x: f64) -> (usize, [f64; 4]) {
        let h = (self.x_max - self.x_min) / self.n_intervals as f64;
        let s = ((x - self.x_min) / h).clamp(0.0, self.n_intervals as f64);
        let j = (s.floor() as usize).min(self.n_intervals - 1);
        let u = s - j as f64;
        let u2 = u * u;
        let u3 = u2 * u;
        let v = 1.0 - u;
        (
            j,
            [
                v * v * v / 6.0,
                (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
                (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
                u3 / 6.0,
            ],
        )
    }

    pub fn evaluate(&self, coef: &[f64], x: f64) -> f64 {
        let (j, b) = self.nonzero(x);
        b.iter().zip(&coef[j..j + 4]).map(|(a, c)| a * c).sum()
    }
}

/// Least-squares projection onto a B-spline basis for a fixed set of
/// abscissae; the normal matrix is factored once and reused.
pub struct SplineSmoother {
    basis: CubicBSpline,
    xs: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl SplineSmoother {
    pub fn new(basis: CubicBSpline, xs: &[f64]) -> Result<Self> {
        let n = basis.n_basis();
        let mut normal = DMatrix::<f64>::zeros(n, n);
        for &x in xs {
            let (j, b) = basis.nonzero(x);
            for a in 0..4 {
                for c in 0..4 {
                    normal[(j + a, j + c)] += b[a] * b[c];
                }
            }
        }
        let chol = normal.cholesky().ok_or_else(|| {
            Error::SingularDesign("spline basis is not identifiable on these abscissae".into())
        })?;
        Ok(SplineSmoother {
            basis,
            xs: xs.to_vec(),
            chol,
        })
    }

    pub fn coefficients(&self, ys: &[f64]) -> Vec<f64> {
        assert_eq!(ys.len(), self.xs.len());
        let mut rhs = DVector::<f64>::zeros(self.basis.n_basis());
        for (&x, &y) in self.xs.iter().zip(ys) {
            let (j, b) = self.basis.nonzero(x);
            for a in 0..4 {
                rhs[j + a] += b[a] * y;
            }
        }
        self.chol.solve(&rhs).iter().copied().collect()
    }

    /// Fitted values at the smoother's own abscissae.
    pub fn smooth(&self, ys: &[f64]) -> Vec<f64> {
        let coef = self.coefficients(ys);
        self.xs.iter().map(|&x| self.basis.evaluate(&coef, x)).collect()
    }

    pub fn basis(&self) -> &CubicBSpline {
        &self.basis
    }
}

/// L2 isotonic fit constrained to be nonincreasing (pool adjacent violators).
pub fn isotonic_decreasing(ys: &[f64]) -> Vec<f64> {
    // blocks of (mean, weight)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(ys.len());
    for &y in ys {
        blocks.push((y, 1));
        while blocks.len() > 1 {
            let (m2, w2) = blocks[blocks.len() - 1];
            let (m1, w1) = blocks[blocks.len() - 2];
            if m2 <= m1 {
                break;
            }
            blocks.pop();
            let w = w1 + w2;
            *blocks.last_mut().unwrap() = ((m1 * w1 as f64 + m2 * w2 as f64) / w as f64, w);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, w)| std::iter::repeat_n(m, w))
        .collect()
}
