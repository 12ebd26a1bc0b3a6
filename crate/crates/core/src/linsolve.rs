//! Jacobi-preconditioned conjugate gradients for the two SPD operators of the scheme.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Real;

pub trait SpdOperator<T> {
    fn apply(&self, x: &[T], out: &mut [T]);
    fn diagonal(&self) -> Vec<T>;
}

/// `x ↦ x + dt(−Δx + c∘x)` with `c ≥ 0`: backward Euler for reaction–diffusion.
pub struct ReactionDiffusionOp<'a, T> {
    grid: &'a Grid<T>,
    dt: T,
    reaction: Vec<T>,
    scratch: std::cell::RefCell<Vec<T>>,
}

impl<'a, T: Real> ReactionDiffusionOp<'a, T> {
    pub fn new(grid: &'a Grid<T>, dt: T, reaction: Vec<T>) -> Self {
        let n = grid.cell_count();
        Self {
            grid,
            dt,
            reaction,
            scratch: std::cell::RefCell::new(vec![T::zero(); n]),
        }
    }
}

impl<T: Real> SpdOperator<T> for ReactionDiffusionOp<'_, T> {
    fn apply(&self, x: &[T], out: &mut [T]) {
        let mut lap = self.scratch.borrow_mut();
        self.grid.apply_laplacian(x, &mut lap);
        for i in 0..x.len() {
            out[i] = x[i] + self.dt * (self.reaction[i] * x[i] - lap[i]);
        }
    }

    fn diagonal(&self) -> Vec<T> {
        let (d, _) = self.grid.laplacian_diagonals();
        d.iter()
            .zip(&self.reaction)
            .map(|(&l, &c)| T::one() + self.dt * (c - l))
            .collect()
    }
}

/// `x ↦ x − a Δx + b Δ²x` with `a, b ≥ 0`: the φ-Schur complement of the stabilized step.
pub struct BiharmonicOp<'a, T> {
    grid: &'a Grid<T>,
    a: T,
    b: T,
    scratch: std::cell::RefCell<(Vec<T>, Vec<T>)>,
}

impl<'a, T: Real> BiharmonicOp<'a, T> {
    pub fn new(grid: &'a Grid<T>, a: T, b: T) -> Self {
        let n = grid.cell_count();
        Self {
            grid,
            a,
            b,
            scratch: std::cell::RefCell::new((vec![T::zero(); n], vec![T::zero(); n])),
        }
    }
}

impl<T: Real> SpdOperator<T> for BiharmonicOp<'_, T> {
    fn apply(&self, x: &[T], out: &mut [T]) {
        let mut s = self.scratch.borrow_mut();
        let (lap, lap2) = &mut *s;
        self.grid.apply_laplacian(x, lap);
        self.grid.apply_laplacian(lap, lap2);
        for i in 0..x.len() {
            out[i] = x[i] - self.a * lap[i] + self.b * lap2[i];
        }
    }

    fn diagonal(&self) -> Vec<T> {
        let (d, d2) = self.grid.laplacian_diagonals();
        d.iter()
            .zip(&d2)
            .map(|(&l, &l2)| T::one() - self.a * l + self.b * l2)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A x = b` to `‖b − Ax‖ ≤ tol‖b‖`, starting from the contents of `x`.
pub fn conjugate_gradient<T: Real>(
    op: &impl SpdOperator<T>,
    b: &[T],
    x: &mut [T],
    tol: T,
    max_iter: usize,
) -> Result<CgStats> {
    let n = b.len();
    let dot = |u: &[T], v: &[T]| u.iter().zip(v).map(|(&p, &q)| p * q).sum::<T>();
    let b_norm = dot(b, b).sqrt();
    if b_norm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(CgStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let inv_diag: Vec<T> = op.diagonal().into_iter().map(|d| d.recip()).collect();
    let mut r = vec![T::zero(); n];
    let mut ap = vec![T::zero(); n];
    op.apply(x, &mut ap);
    for i in 0..n {
        r[i] = b[i] - ap[i];
    }
    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(&ri, &di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let target = tol * b_norm;
    let mut res = dot(&r, &r).sqrt();
    let mut it = 0;
    while res > target {
        if it >= max_iter {
            return Err(Error::SolverNotConverged {
                iterations: it,
                residual: (res / b_norm).to_f64_lossy(),
            });
        }
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(Error::Divergence(
                "conjugate gradient lost positive definiteness".into(),
            ));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = dot(&r, &r).sqrt();
        it += 1;
    }
    if !res.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence("non-finite linear solve".into()));
    }
    Ok(CgStats {
        iterations: it,
        relative_residual: (res / b_norm).to_f64_lossy(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual<T: Real>(op: &impl SpdOperator<T>, b: &[T], x: &[T]) -> f64 {
        let mut ax = vec![T::zero(); b.len()];
        op.apply(x, &mut ax);
        let r: f64 = ax
            .iter()
            .zip(b)
            .map(|(&a, &bb)| (a - bb).to_f64_lossy().powi(2))
            .sum();
        let nb: f64 = b.iter().map(|v| v.to_f64_lossy().powi(2)).sum();
        (r / nb).sqrt()
    }

    #[test]
    fn diagonals_match_operator_action() {
        let g = Grid::new_2d(6, 5, 1.0, 0.8).unwrap();
        let n = g.cell_count();
        let ops: (ReactionDiffusionOp<f64>, BiharmonicOp<f64>) = (
            ReactionDiffusionOp::new(&g, 0.01, (0..n).map(|i| i as f64 * 0.1).collect()),
            BiharmonicOp::new(&g, 0.02, 1e-5),
        );
        let d1 = ops.0.diagonal();
        let d2 = ops.1.diagonal();
        let mut e = vec![0.0; n];
        let mut out = vec![0.0; n];
        for i in 0..n {
            e[i] = 1.0;
            ops.0.apply(&e, &mut out);
            assert!((out[i] - d1[i]).abs() < 1e-9 * d1[i].abs());
            ops.1.apply(&e, &mut out);
            assert!((out[i] - d2[i]).abs() < 1e-9 * d2[i].abs());
            e[i] = 0.0;
        }
    }

    #[test]
    fn solves_both_operators() {
        let g = Grid::new_1d(128, 1.0).unwrap();
        let b: Vec<f64> = (0..128).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let op = BiharmonicOp::new(&g, 5e-3 * 2.0, 5e-3 * 1e-3);
        let mut x = vec![0.0; 128];
        let st = conjugate_gradient(&op, &b, &mut x, 1e-12, 1280).unwrap();
        assert!(residual(&op, &b, &x) <= 1e-12, "{st:?}");
        let op = ReactionDiffusionOp::new(&g, 5e-3, vec![1.5; 128]);
        let mut x = vec![0.0; 128];
        conjugate_gradient(&op, &b, &mut x, 1e-12, 1280).unwrap();
        assert!(residual(&op, &b, &x) <= 1e-12);
    }

    #[test]
    fn zero_rhs_gives_zero_and_cap_is_reported() {
        let g = Grid::new_1d(64, 1.0).unwrap();
        let op = BiharmonicOp::new(&g, 0.0, 1.0);
        let mut x = vec![1.0; 64];
        conjugate_gradient(&op, &vec![0.0; 64], &mut x, 1e-12, 10).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
        let b: Vec<f64> = (0..64).map(|i| (i as f64).sin()).collect();
        let err = conjugate_gradient(&op, &b, &mut x, 1e-14, 2).unwrap_err();
        assert!(matches!(err, Error::SolverNotConverged { iterations: 2, .. }));
    }
}
