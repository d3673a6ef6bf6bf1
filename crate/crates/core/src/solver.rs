//! Iterative linear solvers: CG for symmetric positive systems and
//! restarted GMRES for the rest, both with optional Jacobi preconditioning.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Cg,
    Gmres,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    None,
    Jacobi,
    /// Symmetric Gauss-Seidel `(D+L) D^{-1} (D+U)`.
    SymmetricGaussSeidel,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub method: Method,
    pub rel_tol: f64,
    pub max_iter: usize,
    /// GMRES restart length; ignored by CG.
    pub restart: usize,
    pub precond: Preconditioner,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            method: Method::Cg,
            rel_tol: 1e-10,
            max_iter: 5000,
            restart: 120,
            precond: Preconditioner::Jacobi,
        }
    }
}

impl SolveOptions {
    pub fn gmres() -> Self {
        SolveOptions {
            method: Method::Gmres,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::invalid("rel_tol must lie in (0, 1)"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        Ok(())
    }
}

/// Solves `A x = b` to `||b - A x|| <= rel_tol * ||b||`.
///
/// `x0` seeds the iteration; pass `None` to start from zero.
pub fn solve_linear<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    options: &SolveOptions,
    x0: Option<&[T]>,
) -> Result<Vec<T>> {
    options.validate()?;
    if a.nrows() != b.len() || a.nrows() != a.ncols() {
        return Err(Error::invalid("solver dimensions mismatch"));
    }
    let bnorm = norm(b);
    if bnorm == T::zero() {
        return Ok(vec![T::zero(); b.len()]);
    }
    let prec = Prec::build(a, options.precond)?;
    match options.method {
        Method::Cg => cg(a, b, options, x0, &prec, bnorm),
        Method::Gmres => gmres(a, b, options, x0, &prec, bnorm),
    }
}

enum Prec<T: Real> {
    Identity,
    Jacobi(Vec<T>),
    Sgs { diag: Vec<T>, inv_diag: Vec<T> },
}

impl<T: Real> Prec<T> {
    fn build(a: &CsrMatrix<T>, kind: Preconditioner) -> Result<Self> {
        match kind {
            Preconditioner::None => Ok(Prec::Identity),
            Preconditioner::Jacobi => Ok(Prec::Jacobi(inverse_diagonal(a)?)),
            Preconditioner::SymmetricGaussSeidel => {
                let inv_diag = inverse_diagonal(a)?;
                Ok(Prec::Sgs {
                    diag: a.diagonal(),
                    inv_diag,
                })
            }
        }
    }

    fn apply(&self, a: &CsrMatrix<T>, r: &[T]) -> Vec<T> {
        match self {
            Prec::Identity => r.to_vec(),
            Prec::Jacobi(d) => r.iter().zip(d).map(|(&ri, &di)| ri * di).collect(),
            Prec::Sgs { diag, inv_diag } => {
                let n = r.len();
                // forward solve (D + L) t = r
                let mut t = vec![T::zero(); n];
                for i in 0..n {
                    let (cols, vals) = a.row(i);
                    let mut acc = r[i];
                    for (c, v) in cols.iter().zip(vals) {
                        if *c < i {
                            acc = acc - *v * t[*c];
                        }
                    }
                    t[i] = acc * inv_diag[i];
                }
                // scale by D, then backward solve (D + U) y = D t
                for i in 0..n {
                    t[i] = t[i] * diag[i];
                }
                let mut y = vec![T::zero(); n];
                for i in (0..n).rev() {
                    let (cols, vals) = a.row(i);
                    let mut acc = t[i];
                    for (c, v) in cols.iter().zip(vals) {
                        if *c > i {
                            acc = acc - *v * y[*c];
                        }
                    }
                    y[i] = acc * inv_diag[i];
                }
                y
            }
        }
    }
}

fn inverse_diagonal<T: Real>(a: &CsrMatrix<T>) -> Result<Vec<T>> {
    let mut d = a.diagonal();
    for (i, v) in d.iter_mut().enumerate() {
        if *v == T::zero() {
            return Err(Error::invalid(format!(
                "zero diagonal at row {i}: preconditioner unavailable"
            )));
        }
        *v = T::one() / *v;
    }
    Ok(d)
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &x| a + x * x).sqrt()
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn cg<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    options: &SolveOptions,
    x0: Option<&[T]>,
    prec: &Prec<T>,
    bnorm: T,
) -> Result<Vec<T>> {
    let n = b.len();
    let tol = T::from_f64_lit(options.rel_tol) * bnorm;
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![T::zero(); n]);
    let mut r = b.to_vec();
    let ax = a.matvec_alloc(&x);
    for i in 0..n {
        r[i] = r[i] - ax[i];
    }
    let mut z = prec.apply(a, &r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rnorm = norm(&r);
    if rnorm <= tol {
        return Ok(x);
    }
    for iter in 0..options.max_iter {
        let ap = a.matvec_alloc(&p);
        let pap = dot(&p, &ap);
        if pap <= T::zero() {
            return Err(Error::NonConvergence {
                iterations: iter,
                residual: rnorm.to_f64_lossy(),
                target: (tol).to_f64_lossy(),
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] = x[i] + alpha * p[i];
            r[i] = r[i] - alpha * ap[i];
        }
        rnorm = norm(&r);
        if rnorm <= tol {
            return Ok(x);
        }
        z = prec.apply(a, &r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NonConvergence {
        iterations: options.max_iter,
        residual: rnorm.to_f64_lossy(),
        target: tol.to_f64_lossy(),
    })
}

/// Right-preconditioned GMRES(m) with Givens rotations.
fn gmres<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    options: &SolveOptions,
    x0: Option<&[T]>,
    prec: &Prec<T>,
    bnorm: T,
) -> Result<Vec<T>> {
    let n = b.len();
    let tol = T::from_f64_lit(options.rel_tol) * bnorm;
    let m = options.restart.max(1).min(n.max(1));
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![T::zero(); n]);

    let apply_m = |v: &[T]| -> Vec<T> { prec.apply(a, v) };

    let mut total_iters = 0usize;
    loop {
        let ax = a.matvec_alloc(&x);
        let mut r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &axi)| bi - axi).collect();
        let beta = norm(&r);
        if beta <= tol {
            return Ok(x);
        }
        if total_iters >= options.max_iter {
            return Err(Error::NonConvergence {
                iterations: total_iters,
                residual: beta.to_f64_lossy(),
                target: tol.to_f64_lossy(),
            });
        }
        for ri in r.iter_mut() {
            *ri = *ri / beta;
        }
        let mut basis: Vec<Vec<T>> = vec![r];
        // Hessenberg stored column-wise; h[j] has j+2 entries.
        let mut h: Vec<Vec<T>> = Vec::new();
        let mut cs: Vec<T> = Vec::new();
        let mut sn: Vec<T> = Vec::new();
        let mut g = vec![T::zero(); m + 1];
        g[0] = beta;
        let mut k_used = 0;

        for j in 0..m {
            total_iters += 1;
            let z = apply_m(&basis[j]);
            let mut w = a.matvec_alloc(&z);
            let mut hj = vec![T::zero(); j + 2];
            for (i, v) in basis.iter().enumerate() {
                hj[i] = dot(&w, v);
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi = *wi - hj[i] * *vi;
                }
            }
            let wnorm = norm(&w);
            hj[j + 1] = wnorm;
            // Apply accumulated Givens rotations to the new column.
            for i in 0..j {
                let t = cs[i] * hj[i] + sn[i] * hj[i + 1];
                hj[i + 1] = -sn[i] * hj[i] + cs[i] * hj[i + 1];
                hj[i] = t;
            }
            let denom = (hj[j] * hj[j] + hj[j + 1] * hj[j + 1]).sqrt();
            let (c, s) = if denom == T::zero() {
                (T::one(), T::zero())
            } else {
                (hj[j] / denom, hj[j + 1] / denom)
            };
            cs.push(c);
            sn.push(s);
            hj[j] = c * hj[j] + s * hj[j + 1];
            hj[j + 1] = T::zero();
            g[j + 1] = -s * g[j];
            g[j] = c * g[j];
            h.push(hj);
            k_used = j + 1;
            let res = g[j + 1].abs();
            // Happy breakdown (wnorm == 0) means the Krylov space is exhausted.
            if res <= tol || total_iters >= options.max_iter || wnorm == T::zero() {
                break;
            }
            if j + 1 < m {
                for wi in w.iter_mut() {
                    *wi = *wi / wnorm;
                }
                basis.push(w);
            }
        }

        // Back substitution for y, then x += M^{-1} (V y).
        let k = k_used;
        let mut y = vec![T::zero(); k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for j in (i + 1)..k {
                acc = acc - h[j][i] * y[j];
            }
            y[i] = acc / h[i][i];
        }
        let mut update = vec![T::zero(); n];
        for (j, yj) in y.iter().enumerate() {
            for (ui, vi) in update.iter_mut().zip(&basis[j]) {
                *ui = *ui + *yj * *vi;
            }
        }
        let update = apply_m(&update);
        for (xi, ui) in x.iter_mut().zip(&update) {
            *xi = *xi + *ui;
        }
        // loop back: either converged (checked at top) or restart
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CooBuilder;
    use approx::assert_relative_eq;

    fn spd_tridiag(n: usize) -> CsrMatrix<f64> {
        let mut coo = CooBuilder::new(n, n);
        for i in 0..n {
            coo.push(i, i, 2.0);
            if i > 0 {
                coo.push(i, i - 1, -1.0);
            }
            if i + 1 < n {
                coo.push(i, i + 1, -1.0);
            }
        }
        coo.build()
    }

    #[test]
    fn identity_returns_rhs() {
        let a = CsrMatrix::<f64>::identity(5);
        let b = vec![1.0, -2.0, 3.0, 0.5, 0.0];
        for method in [Method::Cg, Method::Gmres] {
            let opts = SolveOptions {
                method,
                ..Default::default()
            };
            let x = solve_linear(&a, &b, &opts, None).unwrap();
            for (xi, bi) in x.iter().zip(&b) {
                assert_relative_eq!(xi, bi, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn diagonal_solve() {
        let mut coo = CooBuilder::new(2, 2);
        coo.push(0, 0, 2.0);
        coo.push(1, 1, 4.0);
        let a = coo.build();
        let x = solve_linear(&a, &[2.0, 4.0], &SolveOptions::default(), None).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cg_and_gmres_agree_on_spd() {
        let a = spd_tridiag(40);
        let b: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let xc = solve_linear(&a, &b, &SolveOptions::default(), None).unwrap();
        let xg = solve_linear(&a, &b, &SolveOptions::gmres(), None).unwrap();
        for (c, g) in xc.iter().zip(&xg) {
            assert_relative_eq!(c, g, epsilon = 1e-7);
        }
        let res: Vec<f64> = a
            .matvec_alloc(&xc)
            .iter()
            .zip(&b)
            .map(|(ax, bi)| ax - bi)
            .collect();
        let rel = super::norm(&res) / super::norm(&b);
        assert!(rel <= 1e-10, "relative residual {rel}");
    }

    #[test]
    fn gmres_handles_nonsymmetric() {
        let mut coo = CooBuilder::new(3, 3);
        for (r, c, v) in [
            (0, 0, 3.0),
            (0, 1, 1.0),
            (1, 0, -1.0),
            (1, 1, 2.0),
            (1, 2, 0.5),
            (2, 2, 1.5),
            (2, 0, 0.2),
        ] {
            coo.push(r, c, v);
        }
        let a = coo.build();
        let b = vec![1.0, 2.0, 3.0];
        let x = solve_linear(&a, &b, &SolveOptions::gmres(), None).unwrap();
        let ax = a.matvec_alloc(&x);
        for (axi, bi) in ax.iter().zip(&b) {
            assert_relative_eq!(axi, bi, epsilon = 1e-8);
        }
    }

    #[test]
    fn nonconvergence_reports_iterations() {
        let a = spd_tridiag(50);
        let b = vec![1.0; 50];
        let opts = SolveOptions {
            max_iter: 2,
            rel_tol: 1e-14,
            ..Default::default()
        };
        match solve_linear(&a, &b, &opts, None) {
            Err(Error::NonConvergence {
                iterations,
                residual,
                ..
            }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 0.0);
            }
            other => panic!("expected NonConvergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_tolerance() {
        let a = CsrMatrix::<f64>::identity(2);
        let opts = SolveOptions {
            rel_tol: 0.0,
            ..Default::default()
        };
        assert!(solve_linear(&a, &[1.0, 1.0], &opts, None).is_err());
    }

    #[test]
    fn zero_rhs_short_circuits() {
        let a = spd_tridiag(10);
        let x = solve_linear(&a, &vec![0.0; 10], &SolveOptions::default(), None).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }
}
