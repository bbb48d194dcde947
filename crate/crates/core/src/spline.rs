//! Natural interpolating cubic spline.

use crate::error::{Error, Result};

/// Piecewise cubic through every knot with zero second derivative at both ends.
#[derive(Clone, Debug)]
pub struct NaturalCubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Second derivatives at the knots.
    curvature: Vec<f64>,
}

impl NaturalCubicSpline {
    /// Fits a spline through `(knots[i], values[i])`. Knots must be strictly
    /// increasing; at least two are required.
    pub fn fit(knots: &[f64], values: &[f64]) -> Result<Self> {
        let n = knots.len();
        if n != values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} knots but {} values",
                n,
                values.len()
            )));
        }
        if n < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: n });
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "spline knots must be strictly increasing".into(),
            ));
        }

        let mut curvature = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for the interior second derivatives, solved
            // with the Thomas algorithm.
            let m = n - 2;
            let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for i in 0..m {
                diag[i] = 2.0 * (h[i] + h[i + 1]);
                upper[i] = h[i + 1];
                rhs[i] = 6.0
                    * ((values[i + 2] - values[i + 1]) / h[i + 1]
                        - (values[i + 1] - values[i]) / h[i]);
            }
            for i in 1..m {
                let w = h[i] / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            let mut sol = vec![0.0; m];
            sol[m - 1] = rhs[m - 1] / diag[m - 1];
            for i in (0..m - 1).rev() {
                sol[i] = (rhs[i] - upper[i] * sol[i + 1]) / diag[i];
            }
            curvature[1..n - 1].copy_from_slice(&sol);
        }

        Ok(NaturalCubicSpline {
            knots: knots.to_vec(),
            values: values.to_vec(),
            curvature,
        })
    }

    /// Evaluates the spline; outside the knot range the end segments are extended.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.knots.len();
        let seg = match self.knots.partition_point(|&k| k <= t) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        };
        let (t0, t1) = (self.knots[seg], self.knots[seg + 1]);
        let (y0, y1) = (self.values[seg], self.values[seg + 1]);
        let (m0, m1) = (self.curvature[seg], self.curvature[seg + 1]);
        let h = t1 - t0;
        let a = (t1 - t) / h;
        let b = (t - t0) / h;
        a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }
}
