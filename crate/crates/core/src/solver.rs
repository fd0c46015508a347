//! Matrix-free conjugate gradients for symmetric positive definite operators.

use crate::error::{Error, Result};
use crate::tensor::dot;

/// Outcome of a converged solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    /// Final `‖b − Ax‖ / ‖b‖`.
    pub relative_residual: f64,
}

/// Solves `Ax = b` starting from `x` (overwritten with the solution).
///
/// Stops once `‖r‖ ≤ tol·‖b‖`. A zero right-hand side returns `x = 0`.
pub fn conjugate_gradient<A>(
    mut apply: A,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgStats>
where
    A: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }

    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(bi, ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    let target = tol * b_norm;

    for it in 0..=max_iter {
        let res = rs.sqrt();
        if res <= target {
            return Ok(CgStats {
                iterations: it,
                relative_residual: res / b_norm,
            });
        }
        if it == max_iter {
            break;
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Numerical(format!(
                "operator not positive definite along search direction (pAp = {pap:e})"
            )));
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
    }
    Err(Error::Solver {
        iterations: max_iter,
        residual: rs.sqrt() / b_norm,
    })
}
