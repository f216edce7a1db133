//! Preconditioned MINRES for the saddle-point system.
//!
//! The preconditioner is block diagonal: a sparse Cholesky factor of the
//! velocity block, the (cell-local) pressure mass matrix, and the scalar
//! `c^T M_p^{-1} c` for the multiplier. By the inf-sup condition the
//! preconditioned spectrum stays bounded under refinement.

use faer::prelude::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::Side;
use nalgebra::{DMatrix, DVector};

use super::GlobalSystem;
use crate::error::{Result, WgError};

pub(super) struct BlockPreconditioner {
    velocity: Llt<usize, f64>,
    /// Inverse of `h^2 M_p` per cell.
    pressure: Vec<DMatrix<f64>>,
    multiplier: f64,
    n_u: usize,
    dim_pressure: usize,
}

impl BlockPreconditioner {
    pub(super) fn new(system: &GlobalSystem) -> Result<Self> {
        let dofs = &system.dofs;
        let n_u = dofs.n_u;
        let mut t = Vec::new();
        system.for_each_entry(|i, j, v| {
            if i < n_u && j < n_u {
                t.push(Triplet::new(i, j, v));
            }
        });
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(n_u, n_u, &t)
            .map_err(|e| WgError::Internal(format!("velocity block construction failed: {e:?}")))?;
        drop(t);
        let velocity = a
            .sp_cholesky(Side::Lower)
            .map_err(|e| WgError::SingularSystem(format!("velocity block is not positive definite: {e:?}")))?;
        let dp = dofs.dim_pressure;
        let mut multiplier = 0.0;
        let mut pressure = Vec::with_capacity(dofs.n_cells);
        for (op, h) in system.ops.iter().zip(&system.cell_h) {
            let m = &op.mass_pressure * (h * h);
            let inv = m
                .clone()
                .cholesky()
                .ok_or_else(|| WgError::SingularSystem("pressure mass matrix is singular".into()))?
                .inverse();
            let c = m.column(0);
            multiplier += c.dot(&(&inv * c));
            pressure.push(inv);
        }
        Ok(BlockPreconditioner { velocity, pressure, multiplier, n_u, dim_pressure: dp })
    }

    pub(super) fn apply(&self, r: &[f64], out: &mut [f64]) {
        let n_u = self.n_u;
        let z = self.velocity.solve(faer::col::ColRef::from_slice(&r[..n_u]));
        for (o, v) in out[..n_u].iter_mut().zip(z.iter()) {
            *o = *v;
        }
        let dp = self.dim_pressure;
        for (c, inv) in self.pressure.iter().enumerate() {
            let start = n_u + c * dp;
            let z = inv * DVector::from_column_slice(&r[start..start + dp]);
            out[start..start + dp].copy_from_slice(z.as_slice());
        }
        let last = r.len() - 1;
        out[last] = r[last] / self.multiplier;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve `K x = b` from `x = 0` until the preconditioned residual has dropped by
/// `tol`. Returns the iteration count.
pub(super) fn minres(
    apply: impl Fn(&[f64], &mut [f64]),
    prec: &BlockPreconditioner,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<usize> {
    let n = b.len();
    x.iter_mut().for_each(|v| *v = 0.0);
    let mut r1 = b.to_vec();
    let mut y = vec![0.0; n];
    prec.apply(&r1, &mut y);
    let beta1 = dot(&r1, &y);
    if beta1 < 0.0 {
        return Err(WgError::SingularSystem("preconditioner is not positive definite".into()));
    }
    let beta1 = beta1.sqrt();
    if beta1 == 0.0 {
        return Ok(0);
    }
    let mut r2 = r1.clone();
    let (mut oldb, mut beta, mut dbar, mut epsln, mut phibar) = (0.0, beta1, 0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0, 0.0);
    let mut w = vec![0.0; n];
    let mut w1 = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    for itn in 1..=max_iter {
        let s = 1.0 / beta;
        v.iter_mut().zip(&y).for_each(|(v, y)| *v = s * y);
        apply(&v, &mut y);
        if itn >= 2 {
            let f = beta / oldb;
            y.iter_mut().zip(&r1).for_each(|(y, r)| *y -= f * r);
        }
        let alfa = dot(&v, &y);
        let f = alfa / beta;
        y.iter_mut().zip(&r2).for_each(|(y, r)| *y -= f * r);
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        prec.apply(&r2, &mut y);
        oldb = beta;
        let b2 = dot(&r2, &y);
        if b2 < 0.0 {
            return Err(WgError::SingularSystem("preconditioner is not positive definite".into()));
        }
        beta = b2.sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        std::mem::swap(&mut w1, &mut w2);
        std::mem::swap(&mut w2, &mut w);
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma;
            x[i] += phi * w[i];
        }
        if phibar <= tol * beta1 || beta == 0.0 {
            return Ok(itn);
        }
    }
    Err(WgError::SingularSystem(format!("MINRES did not converge in {max_iter} iterations")))
}
