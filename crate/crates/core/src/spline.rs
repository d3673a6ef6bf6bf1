//! Natural cubic smoothing splines over a shared knot sequence.
//!
//! Minimizes `sum_i (y_i - g(t_i))^2 + lambda * int g''(t)^2 dt` over natural
//! cubic splines. With `lambda = 0` the fit interpolates the samples exactly
//! at the knots. The solve reduces to a pentadiagonal SPD system in the
//! interior second derivatives (`(R + lambda Q^T Q) gamma = Q^T y`, then
//! `g = y - lambda Q gamma`), factored by banded Cholesky.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Precomputed fitting matrices for one knot sequence, reusable across many
/// sample vectors (per-node fits share the frame times).
#[derive(Debug, Clone)]
pub struct SplineBasis<T: Real> {
    knots: Vec<T>,
    h: Vec<T>,
    /// Cholesky factor of `R + lambda Q^T Q`, banded with bandwidth 2.
    chol: BandedCholesky<T>,
    /// Cholesky factor of `R` alone, used to recover curvatures from the
    /// fitted values when `lambda > 0`.
    chol_r: BandedCholesky<T>,
    lambda: T,
}

/// One fitted spline: knot values and second derivatives at the knots.
#[derive(Debug, Clone)]
pub struct SmoothingSpline<T: Real> {
    knots: Vec<T>,
    values: Vec<T>,
    second_derivs: Vec<T>,
}

impl<T: Real> SplineBasis<T> {
    pub fn new(knots: &[T], lambda: T) -> Result<Self> {
        if knots.len() < 3 {
            return Err(Error::invalid("smoothing spline needs at least 3 knots"));
        }
        if lambda < T::zero() {
            return Err(Error::invalid("lambda must be non-negative"));
        }
        let mut h = Vec::with_capacity(knots.len() - 1);
        for w in knots.windows(2) {
            let dt = w[1] - w[0];
            if !(dt > T::zero()) {
                return Err(Error::invalid(
                    "knot times must be strictly increasing (duplicate time?)",
                ));
            }
            h.push(dt);
        }
        let n_int = knots.len() - 2;
        // A = R + lambda Q^T Q, pentadiagonal symmetric positive definite.
        let mut diag = vec![T::zero(); n_int];
        let mut off1 = vec![T::zero(); n_int.saturating_sub(1)];
        let mut off2 = vec![T::zero(); n_int.saturating_sub(2)];
        let three = T::from_f64_lit(3.0);
        let six = T::from_f64_lit(6.0);
        for i in 0..n_int {
            let hi = h[i];
            let hi1 = h[i + 1];
            diag[i] = (hi + hi1) / three;
            if i + 1 < n_int {
                off1[i] = hi1 / six;
            }
        }
        let chol_r = BandedCholesky::factor(&diag, &off1, &vec![T::zero(); off2.len()])?;
        // Q columns (one per interior knot j): entries at rows j-1, j, j+1
        // equal 1/h_{j-1}, -(1/h_{j-1} + 1/h_j), 1/h_j in sample space.
        let q_col = |j: usize| -> [T; 3] {
            let a = T::one() / h[j];
            let b = T::one() / h[j + 1];
            [a, -(a + b), b]
        };
        for i in 0..n_int {
            let qi = q_col(i);
            let dot_self = qi[0] * qi[0] + qi[1] * qi[1] + qi[2] * qi[2];
            diag[i] = diag[i] + lambda * dot_self;
            if i + 1 < n_int {
                let qj = q_col(i + 1);
                // columns i and i+1 overlap on two sample rows
                let dot = qi[1] * qj[0] + qi[2] * qj[1];
                off1[i] = off1[i] + lambda * dot;
            }
            if i + 2 < n_int {
                let qk = q_col(i + 2);
                let dot = qi[2] * qk[0];
                off2[i] = lambda * dot;
            }
        }
        let chol = BandedCholesky::factor(&diag, &off1, &off2)?;
        Ok(SplineBasis {
            knots: knots.to_vec(),
            h,
            chol,
            chol_r,
            lambda,
        })
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    /// Fits one sample vector (length = number of knots).
    pub fn fit(&self, samples: &[T]) -> Result<SmoothingSpline<T>> {
        let n = self.knots.len();
        if samples.len() != n {
            return Err(Error::invalid("sample count must match knot count"));
        }
        let n_int = n - 2;
        // rhs = Q^T y (second differences of the samples)
        let mut rhs = vec![T::zero(); n_int];
        for j in 0..n_int {
            rhs[j] = (samples[j + 2] - samples[j + 1]) / self.h[j + 1]
                - (samples[j + 1] - samples[j]) / self.h[j];
        }
        let mut gamma = self.chol.solve(&rhs);
        let mut values = samples.to_vec();
        if self.lambda > T::zero() {
            // g = y - lambda Q gamma
            for j in 0..n_int {
                let a = T::one() / self.h[j];
                let b = T::one() / self.h[j + 1];
                values[j] = values[j] - self.lambda * a * gamma[j];
                values[j + 1] = values[j + 1] + self.lambda * (a + b) * gamma[j];
                values[j + 2] = values[j + 2] - self.lambda * b * gamma[j];
            }
            // The smoothing spline is the natural interpolant of its own
            // fitted values; recover the curvatures from R gamma = Q^T g.
            let mut rhs_g = vec![T::zero(); n_int];
            for j in 0..n_int {
                rhs_g[j] = (values[j + 2] - values[j + 1]) / self.h[j + 1]
                    - (values[j + 1] - values[j]) / self.h[j];
            }
            gamma = self.chol_r.solve(&rhs_g);
        }
        // Natural boundary: zero curvature at the first and last knot.
        let mut second = vec![T::zero(); n];
        second[1..=n_int].copy_from_slice(&gamma);
        Ok(SmoothingSpline {
            knots: self.knots.clone(),
            values,
            second_derivs: second,
        })
    }
}

impl<T: Real> SmoothingSpline<T> {
    pub fn domain(&self) -> (T, T) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    pub fn knot_values(&self) -> &[T] {
        &self.values
    }

    /// Evaluates the spline; times outside the knot range are an error
    /// (no extrapolation).
    pub fn eval(&self, t: T) -> Result<T> {
        let (t0, tn) = self.domain();
        // tolerate rounding right at the ends
        let span = tn - t0;
        let eps = span * T::from_f64_lit(1e-12);
        if t < t0 - eps || t > tn + eps {
            return Err(Error::invalid(format!(
                "evaluation time {t} outside spline domain [{t0}, {tn}]"
            )));
        }
        let t = if t < t0 {
            t0
        } else if t > tn {
            tn
        } else {
            t
        };
        let i = self.interval(t);
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - t) / h;
        let b = (t - self.knots[i]) / h;
        let six = T::from_f64_lit(6.0);
        let h2 = h * h;
        Ok(a * self.values[i]
            + b * self.values[i + 1]
            + ((a * a * a - a) * self.second_derivs[i] + (b * b * b - b) * self.second_derivs[i + 1])
                * h2
                / six)
    }

    /// Analytic first derivative, used by convergence tests.
    pub fn eval_derivative(&self, t: T) -> Result<T> {
        let (t0, tn) = self.domain();
        if t < t0 || t > tn {
            return Err(Error::invalid("derivative outside spline domain"));
        }
        let i = self.interval(t);
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - t) / h;
        let b = (t - self.knots[i]) / h;
        let three = T::from_f64_lit(3.0);
        let six = T::from_f64_lit(6.0);
        Ok((self.values[i + 1] - self.values[i]) / h
            + h * (-(three * a * a - T::one()) * self.second_derivs[i]
                + (three * b * b - T::one()) * self.second_derivs[i + 1])
                / six)
    }

    fn interval(&self, t: T) -> usize {
        // binary search for the interval containing t
        let n = self.knots.len();
        let mut lo = 0usize;
        let mut hi = n - 2;
        while lo < hi {
            let mid = (lo + hi + 1) / 2;
            if self.knots[mid] <= t {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    }
}

/// Cholesky factorization of a symmetric positive-definite pentadiagonal
/// matrix, stored by diagonals.
#[derive(Debug, Clone)]
struct BandedCholesky<T: Real> {
    // L has unit bandwidth 2: l0 = diagonal, l1 = first sub, l2 = second sub
    l0: Vec<T>,
    l1: Vec<T>,
    l2: Vec<T>,
}

impl<T: Real> BandedCholesky<T> {
    fn factor(diag: &[T], off1: &[T], off2: &[T]) -> Result<Self> {
        let n = diag.len();
        let mut l0 = vec![T::zero(); n];
        let mut l1 = vec![T::zero(); n.saturating_sub(1)];
        let mut l2 = vec![T::zero(); n.saturating_sub(2)];
        for i in 0..n {
            let mut d = diag[i];
            if i >= 1 {
                d = d - l1[i - 1] * l1[i - 1];
            }
            if i >= 2 {
                d = d - l2[i - 2] * l2[i - 2];
            }
            if !(d > T::zero()) {
                return Err(Error::invalid("spline system not positive definite"));
            }
            l0[i] = d.sqrt();
            if i + 1 < n {
                let mut v = off1[i];
                if i >= 1 {
                    v = v - l1[i - 1] * l2[i - 1];
                }
                l1[i] = v / l0[i];
            }
            if i + 2 < n {
                l2[i] = off2[i] / l0[i];
            }
        }
        Ok(BandedCholesky { l0, l1, l2 })
    }

    fn solve(&self, b: &[T]) -> Vec<T> {
        let n = b.len();
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            let mut v = b[i];
            if i >= 1 {
                v = v - self.l1[i - 1] * y[i - 1];
            }
            if i >= 2 {
                v = v - self.l2[i - 2] * y[i - 2];
            }
            y[i] = v / self.l0[i];
        }
        let mut x = vec![T::zero(); n];
        for i in (0..n).rev() {
            let mut v = y[i];
            if i + 1 < n {
                v = v - self.l1[i] * x[i + 1];
            }
            if i + 2 < n {
                v = v - self.l2[i] * x[i + 2];
            }
            x[i] = v / self.l0[i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn knots(n: usize, t0: f64, t1: f64) -> Vec<f64> {
        (0..n)
            .map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64)
            .collect()
    }

    #[test]
    fn interpolates_at_knots_for_zero_lambda() {
        let t = knots(9, 0.0, 2.0);
        let y: Vec<f64> = t.iter().map(|&ti| (2.1 * ti).sin() + 0.3 * ti).collect();
        let basis = SplineBasis::new(&t, 0.0).unwrap();
        let s = basis.fit(&y).unwrap();
        for (ti, yi) in t.iter().zip(&y) {
            assert_relative_eq!(s.eval(*ti).unwrap(), yi, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_samples_stay_constant_for_any_lambda() {
        let t = knots(7, 0.0, 1.0);
        let y = vec![4.2; 7];
        for lambda in [0.0, 1e-6, 1e-2, 5.0] {
            let s = SplineBasis::new(&t, lambda).unwrap().fit(&y).unwrap();
            for k in 0..50 {
                let tk = k as f64 / 49.0;
                assert_relative_eq!(s.eval(tk).unwrap(), 4.2, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn linear_samples_reproduced_exactly_between_knots() {
        let t = knots(6, -1.0, 3.0);
        let y: Vec<f64> = t.iter().map(|&ti| 2.0 * ti - 0.5).collect();
        let s = SplineBasis::new(&t, 0.0).unwrap().fit(&y).unwrap();
        for k in 0..101 {
            let tk = -1.0 + 4.0 * k as f64 / 100.0;
            assert_relative_eq!(s.eval(tk).unwrap(), 2.0 * tk - 0.5, epsilon = 1e-12);
        }
    }

    /// A cubic cannot satisfy natural end conditions unless it is linear, so
    /// exact reproduction holds away from the ends; the boundary effect
    /// decays geometrically into the interior.
    #[test]
    fn cubic_reproduced_in_the_interior() {
        let t = knots(41, 0.0, 1.0);
        let f = |x: f64| x * x * x;
        let y: Vec<f64> = t.iter().map(|&ti| f(ti)).collect();
        let s = SplineBasis::new(&t, 0.0).unwrap().fit(&y).unwrap();
        for k in 0..21 {
            let tk = 0.4 + 0.2 * k as f64 / 20.0;
            assert_relative_eq!(s.eval(tk).unwrap(), f(tk), epsilon = 1e-8);
        }
    }

    #[test]
    fn knot_residual_monotone_in_lambda() {
        let t = knots(12, 0.0, 1.0);
        let y: Vec<f64> = t
            .iter()
            .map(|&ti| (12.0 * ti).sin() + 0.5 * (31.0 * ti).cos())
            .collect();
        let mut prev = -1.0;
        for lambda in [0.0, 1e-6, 1e-3, 1.0] {
            let s = SplineBasis::new(&t, lambda).unwrap().fit(&y).unwrap();
            let res: f64 = t
                .iter()
                .zip(&y)
                .map(|(&ti, &yi)| (s.eval(ti).unwrap() - yi).powi(2))
                .sum();
            assert!(
                res + 1e-14 >= prev,
                "residual {res} decreased from {prev} at lambda {lambda}"
            );
            prev = res;
        }
    }

    #[test]
    fn endpoint_evaluation_matches_fitted_values() {
        let t = knots(8, 0.0, 0.8);
        let y: Vec<f64> = t.iter().map(|&ti| (7.0 * ti).sin()).collect();
        for lambda in [0.0, 1e-4, 0.1] {
            let s = SplineBasis::new(&t, lambda).unwrap().fit(&y).unwrap();
            let vals = s.knot_values().to_vec();
            assert_relative_eq!(s.eval(0.0).unwrap(), vals[0], epsilon = 1e-13);
            assert_relative_eq!(s.eval(0.8).unwrap(), vals[7], epsilon = 1e-13);
        }
    }

    #[test]
    fn duplicate_times_rejected() {
        let t = vec![0.0, 0.5, 0.5, 1.0];
        assert!(SplineBasis::<f64>::new(&t, 0.0).is_err());
    }

    #[test]
    fn no_extrapolation() {
        let t = knots(4, 0.0, 1.0);
        let s = SplineBasis::new(&t, 0.0)
            .unwrap()
            .fit(&[0.0, 1.0, 0.0, 1.0])
            .unwrap();
        assert!(s.eval(-0.1).is_err());
        assert!(s.eval(1.1).is_err());
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let t = knots(20, 0.0, 1.0);
        let y: Vec<f64> = t.iter().map(|&ti| (3.0 * ti).sin()).collect();
        let s = SplineBasis::new(&t, 0.0).unwrap().fit(&y).unwrap();
        for tk in [0.11, 0.37, 0.73] {
            let eps = 1e-6;
            let fd = (s.eval(tk + eps).unwrap() - s.eval(tk - eps).unwrap()) / (2.0 * eps);
            assert_relative_eq!(s.eval_derivative(tk).unwrap(), fd, epsilon = 1e-5);
        }
    }

    #[test]
    fn f32_fit_runs() {
        let t: Vec<f32> = (0..5).map(|i| i as f32 * 0.25).collect();
        let y: Vec<f32> = t.iter().map(|&ti| ti * ti).collect();
        let s = SplineBasis::new(&t, 0.0f32).unwrap().fit(&y).unwrap();
        assert!((s.eval(0.5f32).unwrap() - 0.25).abs() < 1e-5);
    }
}
