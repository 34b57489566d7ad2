//! Jacobi-preconditioned conjugate gradient for symmetric positive (semi)definite systems.

use crate::scalar::Scalar;

pub trait LinearOperator<T> {
    fn dim(&self) -> usize;
    /// `y ← A x`
    fn apply(&self, x: &[T], y: &mut [T]);
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    /// `‖b − A x‖ / ‖b‖` at exit.
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Solves `A x = b` in place, starting from the contents of `x`.
///
/// `inv_diag` holds the reciprocal of the preconditioner diagonal. Iterates
/// until the relative residual drops to `tolerance` or `max_iterations` is hit.
pub fn conjugate_gradient<T: Scalar, A: LinearOperator<T> + ?Sized>(
    a: &A,
    b: &[T],
    inv_diag: &[T],
    x: &mut [T],
    tolerance: T,
    max_iterations: usize,
) -> CgOutcome {
    let n = a.dim();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);
    assert_eq!(inv_diag.len(), n);

    let b_norm = dot(b, b).sqrt();
    if b_norm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }

    let mut r = vec![T::zero(); n];
    a.apply(x, &mut r);
    for (ri, &bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z: Vec<T> = r.iter().zip(inv_diag).map(|(&ri, &di)| ri * di).collect();
    let mut p = z.clone();
    let mut ap = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    let mut rel = dot(&r, &r).sqrt() / b_norm;

    let mut it = 0;
    while rel > tolerance && it < max_iterations {
        a.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= T::zero() {
            // Search direction in the null space; nothing more to gain.
            break;
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rel = dot(&r, &r).sqrt() / b_norm;
        it += 1;
    }

    let relative_residual = rel.as_f64();
    CgOutcome {
        iterations: it,
        relative_residual,
        converged: rel <= tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Dense(Vec<Vec<f64>>);

    impl LinearOperator<f64> for Dense {
        fn dim(&self) -> usize {
            self.0.len()
        }

        fn apply(&self, x: &[f64], y: &mut [f64]) {
            for (yi, row) in y.iter_mut().zip(&self.0) {
                *yi = dot(row, x);
            }
        }
    }

    #[test]
    fn solves_small_spd_system() {
        let a = Dense(vec![vec![4.0, 1.0, 0.0], vec![1.0, 3.0, 1.0], vec![0.0, 1.0, 2.0]]);
        let want = [1.0, -2.0, 0.5];
        let mut b = vec![0.0; 3];
        a.apply(&want, &mut b);
        let inv_diag = vec![0.25, 1.0 / 3.0, 0.5];
        let mut x = vec![0.0; 3];
        let out = conjugate_gradient(&a, &b, &inv_diag, &mut x, 1e-12, 50);
        assert!(out.converged);
        assert!(out.iterations <= 3);
        for (g, w) in x.iter().zip(want) {
            assert!((g - w).abs() < 1e-10);
        }
    }

    #[test]
    fn reports_non_convergence() {
        let a = Dense(vec![vec![1.0, 0.0], vec![0.0, 1000.0]]);
        let mut x = vec![0.0; 2];
        let out = conjugate_gradient(&a, &[1.0, 1.0], &[1.0, 1.0], &mut x, 1e-12, 1);
        assert!(!out.converged);
        assert!(out.relative_residual > 1e-12);
    }
}
