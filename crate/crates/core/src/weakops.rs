//! Element-local weak operators.
//!
//! Everything here is computed on a reference copy of each cell, translated so its
//! centroid is the origin and scaled to unit diameter. In those coordinates the
//! velocity monomials, the edge Legendre bases and an orthonormal basis of the
//! target space `P_r` are all independent of the cell size, so the weak gradient
//! coefficients (taken against the physically orthonormal basis `phi_s / h_T`)
//! and the stiffness block are scale-free. Congruent cells share one
//! [`LocalOperators`] through [`OperatorCache`].
//!
//! Local velocity unknowns are ordered as: interior block (`x` then `y`
//! component, `dim P_k` each), then one block per cell edge in counter-clockwise
//! order (`x` then `y`, `k + 1` Legendre coefficients each). Edge coefficients
//! are local: the Legendre parameter runs along the cell's own traversal.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rayon::prelude::*;

use crate::error::{Result, WgError};
use crate::mesh::{cell_geometry, is_convex, outward_normal, Cell, PolyMesh, Vertex2};
use crate::polybasis::{
    cell_quadrature, dim_pm, edge_quadrature, mass_matrix, EdgeBasis, OrthoBasis, QuadratureRule,
    ScaledMonomials,
};

/// Cell quadrature degree: exact for the `P_r` Gram matrix, and for smooth data of
/// moderate degree against the test and trial spaces.
pub fn default_cell_degree(r: usize, k: usize) -> usize {
    (2 * r + 2).max(r + 12).max(2 * k + 16)
}

/// Degree of the weak gradient and divergence on a cell with `n_edges` edges.
pub fn select_r_for(n_edges: usize, convex: bool, k: usize) -> usize {
    if convex {
        n_edges + k - 1
    } else {
        2 * n_edges + k - 1
    }
}

pub fn select_r(cell: &Cell, k: usize) -> usize {
    select_r_for(cell.n_edges(), cell.convex, k)
}

/// Local degree-of-freedom layout of `V(k, T)` and the pressure space `P_{k-1}(T)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LocalLayout {
    pub k: usize,
    pub n_edges: usize,
    pub dim_pk: usize,
    pub dim_pressure: usize,
}

impl LocalLayout {
    pub fn new(k: usize, n_edges: usize) -> Self {
        LocalLayout { k, n_edges, dim_pk: dim_pm(k), dim_pressure: dim_pm(k - 1) }
    }

    pub fn n_v0(&self) -> usize {
        2 * self.dim_pk
    }

    pub fn n_vb_per_edge(&self) -> usize {
        2 * (self.k + 1)
    }

    pub fn n_velocity(&self) -> usize {
        self.n_v0() + self.n_edges * self.n_vb_per_edge()
    }

    /// Unknowns of one scalar component: interior monomials then edge coefficients.
    pub fn n_scalar(&self) -> usize {
        self.dim_pk + self.n_edges * (self.k + 1)
    }

    pub fn v0(&self, comp: usize, a: usize) -> usize {
        comp * self.dim_pk + a
    }

    pub fn vb(&self, edge: usize, comp: usize, j: usize) -> usize {
        self.n_v0() + edge * self.n_vb_per_edge() + comp * (self.k + 1) + j
    }

    /// Velocity index of scalar unknown `s` of component `comp`.
    pub fn from_scalar(&self, comp: usize, s: usize) -> usize {
        if s < self.dim_pk {
            self.v0(comp, s)
        } else {
            let e = (s - self.dim_pk) / (self.k + 1);
            let j = (s - self.dim_pk) % (self.k + 1);
            self.vb(e, comp, j)
        }
    }
}

/// Placement of a cell relative to its reference copy: `x = centroid + h * xi`.
#[derive(Clone, Copy, Debug)]
pub struct CellFrame {
    pub centroid: Vertex2,
    pub h: f64,
    pub area: f64,
}

impl CellFrame {
    pub fn of(cell: &Cell) -> Self {
        CellFrame { centroid: cell.centroid, h: cell.diameter, area: cell.area }
    }

    pub fn to_physical(&self, xi: &Vertex2) -> Vertex2 {
        Vertex2::from(self.centroid.coords + xi.coords * self.h)
    }

    /// Scaled monomials of degree `m` on the physical cell.
    pub fn monomials(&self, m: usize) -> ScaledMonomials {
        ScaledMonomials::new(m, self.centroid, self.h)
    }
}

/// Scale-free local operators of one reference cell shape.
#[derive(Debug)]
pub struct LocalOperators {
    pub layout: LocalLayout,
    pub r: usize,
    pub convex: bool,
    /// Reference polygon: centroid at the origin, unit diameter, counter-clockwise.
    pub vertices: Vec<Vertex2>,
    /// Orthonormal basis of `P_r` on the reference polygon.
    pub test_basis: OrthoBasis,
    /// Reference cell quadrature, of degree [`default_cell_degree`].
    pub rule: QuadratureRule,
    /// `test_values[(i, s)]` is `phi_s` at rule point `i`.
    pub test_values: DMatrix<f64>,
    /// Scalar weak partial derivatives `W_x`, `W_y`: `dim P_r x n_scalar`.
    pub weak_grad: [DMatrix<f64>; 2],
    /// `W_x^T W_x + W_y^T W_y`.
    pub stiffness: DMatrix<f64>,
    /// `(phi_s, q_i)` on the reference cell times `W_j`: `dim P_{k-1} x n_scalar`.
    pub div_test: [DMatrix<f64>; 2],
    /// Reference mass matrices of the scaled monomials of degree `k` and `k - 1`.
    pub mass_k: DMatrix<f64>,
    pub mass_pressure: DMatrix<f64>,
    /// Scalar matrix of `|grad v0|^2 + h^-1 |v0 - vb|^2_{dT}` (scale-free).
    pub h1: DMatrix<f64>,
}

impl LocalOperators {
    /// Operators for the polygon `points` (physical coordinates, counter-clockwise).
    pub fn from_polygon(points: &[Vertex2], k: usize) -> Result<Self> {
        Self::from_polygon_with(points, is_convex(points), k, 0)
    }

    /// Operators for cell `cell` of `mesh`.
    pub fn for_cell(mesh: &PolyMesh, cell: usize, k: usize) -> Result<Self> {
        let c = &mesh.cells[cell];
        Self::from_polygon_with(&mesh.cell_points(cell), c.convex, k, 0).map_err(|e| retag(e, cell))
    }

    /// `min_quad` raises the cell quadrature degree above [`default_cell_degree`].
    pub fn from_polygon_with(points: &[Vertex2], convex: bool, k: usize, min_quad: usize) -> Result<Self> {
        if k == 0 {
            return Err(WgError::InvalidArgument("velocity degree k must be at least 1".into()));
        }
        let geom = cell_geometry(points)?;
        let vertices: Vec<Vertex2> = points
            .iter()
            .map(|p| Vertex2::from((p - geom.centroid) / geom.diameter))
            .collect();
        let n = vertices.len();
        let layout = LocalLayout::new(k, n);
        let r = select_r_for(n, convex, k);
        let rule = cell_quadrature(&vertices, convex, default_cell_degree(r, k).max(min_quad))?;
        let origin = Vertex2::origin();
        let test_basis = OrthoBasis::new(r, origin, 1.0, &rule)?;
        let dim_r = test_basis.dim();
        let mono = ScaledMonomials::new(k, origin, 1.0);
        let dk = layout.dim_pk;

        let mut wg = [DMatrix::zeros(dim_r, layout.n_scalar()), DMatrix::zeros(dim_r, layout.n_scalar())];

        // (grad m_a, phi_s)_T
        let mut phi = vec![0.0; dim_r];
        let mut grads = vec![Vector2::zeros(); dk];
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            test_basis.eval_point(p, &mut phi);
            mono.grad_point(p, &mut grads);
            for (a, g) in grads.iter().enumerate() {
                for (s, ph) in phi.iter().enumerate() {
                    wg[0][(s, a)] += w * g.x * ph;
                    wg[1][(s, a)] += w * g.y * ph;
                }
            }
        }

        // - <m_a, phi_s n_j>_e + <psi_b, phi_s n_j>_e
        let mut m = vec![0.0; dk];
        let mut psi = vec![0.0; k + 1];
        for e in 0..n {
            let (a, b) = (vertices[e], vertices[(e + 1) % n]);
            let normal = outward_normal(a, b);
            let eb = EdgeBasis::new(k, a, b);
            let er = edge_quadrature(a, b, r + k + 1);
            let col0 = dk + e * (k + 1);
            for (p, w) in er.points.iter().zip(&er.weights) {
                test_basis.eval_point(p, &mut phi);
                mono.eval_point(p, &mut m);
                eb.eval_point(p, &mut psi);
                for (j, nj) in [normal.x, normal.y].into_iter().enumerate() {
                    for (s, ph) in phi.iter().enumerate() {
                        let f = w * ph * nj;
                        for (aa, mv) in m.iter().enumerate() {
                            wg[j][(s, aa)] -= f * mv;
                        }
                        for (bb, pv) in psi.iter().enumerate() {
                            wg[j][(s, col0 + bb)] += f * pv;
                        }
                    }
                }
            }
        }

        let stiffness = symmetrize(wg[0].transpose() * &wg[0] + wg[1].transpose() * &wg[1]);

        // (phi_s, q_i) for q in P_{k-1}
        let pmono = ScaledMonomials::new(k - 1, origin, 1.0);
        let mut q = vec![0.0; layout.dim_pressure];
        let mut pt = DMatrix::zeros(layout.dim_pressure, dim_r);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            test_basis.eval_point(p, &mut phi);
            pmono.eval_point(p, &mut q);
            for (i, qv) in q.iter().enumerate() {
                for (s, ph) in phi.iter().enumerate() {
                    pt[(i, s)] += w * qv * ph;
                }
            }
        }
        let div_test = [&pt * &wg[0], &pt * &wg[1]];

        let mass_k = mass_matrix(&mono, &rule);
        let mass_pressure = mass_matrix(&pmono, &rule);
        let h1 = h1_matrix(&vertices, &mono, &rule, layout);

        Ok(LocalOperators {
            layout,
            r,
            convex,
            vertices,
            test_values: test_basis.eval(&rule.points),
            test_basis,
            rule,
            weak_grad: wg,
            stiffness,
            div_test,
            mass_k,
            mass_pressure,
            h1,
        })
    }

    pub fn dim_r(&self) -> usize {
        self.test_basis.dim()
    }

    /// Velocity stiffness `A_T`, block diagonal in the two components.
    pub fn stiffness_matrix(&self) -> DMatrix<f64> {
        self.expand_scalar(&self.stiffness)
    }

    /// Discrete H1 matrix on velocities.
    pub fn h1_matrix(&self) -> DMatrix<f64> {
        self.expand_scalar(&self.h1)
    }

    fn expand_scalar(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        let l = self.layout;
        let nv = l.n_velocity();
        let mut out = DMatrix::zeros(nv, nv);
        for comp in 0..2 {
            for i in 0..l.n_scalar() {
                let gi = l.from_scalar(comp, i);
                for j in 0..l.n_scalar() {
                    out[(gi, l.from_scalar(comp, j))] = s[(i, j)];
                }
            }
        }
        out
    }

    /// `B_T`: entries `(div_w v, q_i)_T` for `q_i` the scaled monomials of `P_{k-1}(T)`.
    pub fn divergence_block(&self, frame: &CellFrame) -> DMatrix<f64> {
        let l = self.layout;
        let mut b = DMatrix::zeros(l.dim_pressure, l.n_velocity());
        for comp in 0..2 {
            for s in 0..l.n_scalar() {
                let col = l.from_scalar(comp, s);
                for i in 0..l.dim_pressure {
                    b[(i, col)] = frame.h * self.div_test[comp][(i, s)];
                }
            }
        }
        b
    }

    /// Physical cell quadrature.
    pub fn physical_rule(&self, frame: &CellFrame) -> QuadratureRule {
        self.rule.mapped(frame.centroid, frame.h, 2)
    }

    /// Values at a physical point of the physically orthonormal basis `phi_s / h` of `P_r(T)`.
    pub fn eval_test_basis(&self, frame: &CellFrame, x: &Vertex2, out: &mut [f64]) {
        let xi = Vertex2::from((x - frame.centroid) / frame.h);
        self.test_basis.eval_point(&xi, out);
        out.iter_mut().for_each(|v| *v /= frame.h);
    }

    /// Weak gradient of a local velocity vector: coefficients of the four tensor
    /// components `(0,0), (0,1), (1,0), (1,1)` against the orthonormal basis of `P_r(T)`.
    pub fn apply_weak_gradient(&self, v: &DVector<f64>) -> [DVector<f64>; 4] {
        let [vx, vy] = self.split(v);
        [&self.weak_grad[0] * &vx, &self.weak_grad[1] * &vx, &self.weak_grad[0] * &vy, &self.weak_grad[1] * &vy]
    }

    pub fn apply_weak_divergence(&self, v: &DVector<f64>) -> DVector<f64> {
        let [vx, vy] = self.split(v);
        &self.weak_grad[0] * vx + &self.weak_grad[1] * vy
    }

    /// Scalar components of a local velocity vector.
    pub fn split(&self, v: &DVector<f64>) -> [DVector<f64>; 2] {
        let l = self.layout;
        [0, 1].map(|comp| DVector::from_fn(l.n_scalar(), |s, _| v[l.from_scalar(comp, s)]))
    }

    /// `Q_0 f`: coefficients of the componentwise L2 projection onto `[P_k(T)]^2`.
    pub fn project_q0<F: Fn(&Vertex2) -> Vector2<f64>>(&self, frame: &CellFrame, f: F) -> Result<DVector<f64>> {
        let dk = self.layout.dim_pk;
        let mono = ScaledMonomials::new(self.layout.k, Vertex2::origin(), 1.0);
        let mut rhs = DMatrix::zeros(dk, 2);
        let mut m = vec![0.0; dk];
        for (p, w) in self.rule.points.iter().zip(&self.rule.weights) {
            let val = f(&frame.to_physical(p));
            mono.eval_point(p, &mut m);
            for (a, mv) in m.iter().enumerate() {
                rhs[(a, 0)] += w * val.x * mv;
                rhs[(a, 1)] += w * val.y * mv;
            }
        }
        let sol = solve_spd(&self.mass_k, rhs)?;
        Ok(DVector::from_iterator(2 * dk, sol.column(0).iter().chain(sol.column(1).iter()).copied()))
    }

    /// L2 projection of a scalar onto `P_{k-1}(T)` (scaled monomial coefficients).
    pub fn project_pressure<F: Fn(&Vertex2) -> f64>(&self, frame: &CellFrame, f: F) -> Result<DVector<f64>> {
        let mono = ScaledMonomials::new(self.layout.k - 1, Vertex2::origin(), 1.0);
        let mut rhs = DMatrix::zeros(self.layout.dim_pressure, 1);
        let mut m = vec![0.0; self.layout.dim_pressure];
        for (p, w) in self.rule.points.iter().zip(&self.rule.weights) {
            let val = f(&frame.to_physical(p));
            mono.eval_point(p, &mut m);
            for (a, mv) in m.iter().enumerate() {
                rhs[(a, 0)] += w * val * mv;
            }
        }
        Ok(solve_spd(&self.mass_pressure, rhs)?.column(0).into())
    }

    /// `Q_h f` at the elevated degree `r`: coefficients against the orthonormal basis.
    pub fn project_qh_scalar<F: Fn(&Vertex2) -> f64>(&self, frame: &CellFrame, f: F) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim_r());
        for (i, (p, w)) in self.rule.points.iter().zip(&self.rule.weights).enumerate() {
            out.axpy(w * f(&frame.to_physical(p)), &self.test_values.row(i).transpose(), 1.0);
        }
        out * frame.h
    }

    /// Tensor version of [`LocalOperators::project_qh_scalar`], row-major component order.
    pub fn project_qh_tensor<F: Fn(&Vertex2) -> Matrix2<f64>>(&self, frame: &CellFrame, f: F) -> [DVector<f64>; 4] {
        // Weighted samples times the cached basis table.
        let mut samples = DMatrix::zeros(self.rule.points.len(), 4);
        for (i, (p, w)) in self.rule.points.iter().zip(&self.rule.weights).enumerate() {
            let val = f(&frame.to_physical(p));
            for c in 0..4 {
                samples[(i, c)] = w * val[(c / 2, c % 2)] * frame.h;
            }
        }
        let out = self.test_values.tr_mul(&samples);
        [0, 1, 2, 3].map(|c| out.column(c).into_owned())
    }

    /// `Q_h u = {Q_0 u, Q_b u}` as a local velocity vector (local edge orientation).
    pub fn interpolate<F: Fn(&Vertex2) -> Vector2<f64>>(&self, frame: &CellFrame, u: F) -> Result<DVector<f64>> {
        let l = self.layout;
        let mut v = DVector::zeros(l.n_velocity());
        let q0 = self.project_q0(frame, &u)?;
        v.rows_mut(0, l.n_v0()).copy_from(&q0);
        let n = self.vertices.len();
        for e in 0..n {
            let a = frame.to_physical(&self.vertices[e]);
            let b = frame.to_physical(&self.vertices[(e + 1) % n]);
            let qb = project_qb(a, b, l.k, &u);
            v.rows_mut(l.vb(e, 0, 0), l.n_vb_per_edge()).copy_from(&qb);
        }
        Ok(v)
    }

    /// Local load vector `(f, v0)_T`.
    pub fn load<F: Fn(&Vertex2) -> Vector2<f64>>(&self, frame: &CellFrame, f: F) -> DVector<f64> {
        let l = self.layout;
        let mono = ScaledMonomials::new(l.k, Vertex2::origin(), 1.0);
        let mut out = DVector::zeros(l.n_velocity());
        let mut m = vec![0.0; l.dim_pk];
        let h2 = frame.h * frame.h;
        for (p, w) in self.rule.points.iter().zip(&self.rule.weights) {
            let val = f(&frame.to_physical(p));
            mono.eval_point(p, &mut m);
            for (a, mv) in m.iter().enumerate() {
                out[l.v0(0, a)] += h2 * w * val.x * mv;
                out[l.v0(1, a)] += h2 * w * val.y * mv;
            }
        }
        out
    }

    /// Full local blocks for the load `f`.
    pub fn local_blocks<F: Fn(&Vertex2) -> Vector2<f64>>(&self, frame: &CellFrame, f: F) -> LocalBlocks {
        LocalBlocks { a: self.stiffness_matrix(), b: self.divergence_block(frame), load: self.load(frame, f) }
    }

    pub fn weak_gradient_operator(&self) -> WeakGradientOperator {
        let l = self.layout;
        let d = self.dim_r();
        let mut g = DMatrix::zeros(4 * d, l.n_velocity());
        for comp in 0..2 {
            for j in 0..2 {
                let row0 = (2 * comp + j) * d;
                for s in 0..l.n_scalar() {
                    let col = l.from_scalar(comp, s);
                    for t in 0..d {
                        g[(row0 + t, col)] = self.weak_grad[j][(t, s)];
                    }
                }
            }
        }
        WeakGradientOperator { r: self.r, dim_r: d, matrix: g }
    }

    pub fn weak_divergence_operator(&self) -> WeakDivergenceOperator {
        let l = self.layout;
        let d = self.dim_r();
        let mut m = DMatrix::zeros(d, l.n_velocity());
        for comp in 0..2 {
            for s in 0..l.n_scalar() {
                let col = l.from_scalar(comp, s);
                for t in 0..d {
                    m[(t, col)] = self.weak_grad[comp][(t, s)];
                }
            }
        }
        WeakDivergenceOperator { r: self.r, dim_r: d, matrix: m }
    }
}

fn retag(e: WgError, cell: usize) -> WgError {
    match e {
        WgError::DegenerateCell { area, .. } => WgError::DegenerateCell { cell, area },
        WgError::Triangulation { reason, .. } => WgError::Triangulation { cell, reason },
        other => other,
    }
}

fn h1_matrix(vertices: &[Vertex2], mono: &ScaledMonomials, rule: &QuadratureRule, l: LocalLayout) -> DMatrix<f64> {
    let dk = l.dim_pk;
    let mut h1 = DMatrix::zeros(l.n_scalar(), l.n_scalar());
    let mut grads = vec![Vector2::zeros(); dk];
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        mono.grad_point(p, &mut grads);
        for a in 0..dk {
            for b in 0..dk {
                h1[(a, b)] += w * grads[a].dot(&grads[b]);
            }
        }
    }
    // The reference cell has unit diameter, so h^-1 = 1 here.
    let n = vertices.len();
    let mut vals = vec![0.0; dk + l.k + 1];
    for e in 0..n {
        let (a, b) = (vertices[e], vertices[(e + 1) % n]);
        let eb = EdgeBasis::new(l.k, a, b);
        let er = edge_quadrature(a, b, 2 * l.k);
        let idx: Vec<usize> = (0..dk).chain((0..=l.k).map(|j| dk + e * (l.k + 1) + j)).collect();
        for (p, w) in er.points.iter().zip(&er.weights) {
            mono.eval_point(p, &mut vals[..dk]);
            eb.eval_point(p, &mut vals[dk..]);
            vals[dk..].iter_mut().for_each(|v| *v = -*v);
            for (i, &gi) in idx.iter().enumerate() {
                for (j, &gj) in idx.iter().enumerate() {
                    h1[(gi, gj)] += w * vals[i] * vals[j];
                }
            }
        }
    }
    symmetrize(h1)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Solve with a symmetric positive definite matrix, falling back to a pivoted LU.
pub(crate) fn solve_spd(m: &DMatrix<f64>, rhs: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        return Ok(ch.solve(&rhs));
    }
    m.clone()
        .full_piv_lu()
        .solve(&rhs)
        .ok_or_else(|| WgError::ConditioningFailure("singular local mass matrix".into()))
}

/// `Q_b f` on the segment `a -> b`: Legendre coefficients, `x` block then `y` block.
pub fn project_qb<F: Fn(&Vertex2) -> Vector2<f64>>(a: Vertex2, b: Vertex2, k: usize, f: F) -> DVector<f64> {
    let eb = EdgeBasis::new(k, a, b);
    let rule = edge_quadrature(a, b, 2 * k + 12);
    let diag = eb.mass_diagonal();
    let mut out = DVector::zeros(2 * (k + 1));
    let mut psi = vec![0.0; k + 1];
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        let val = f(p);
        eb.eval_point(p, &mut psi);
        for j in 0..=k {
            out[j] += w * val.x * psi[j];
            out[k + 1 + j] += w * val.y * psi[j];
        }
    }
    for j in 0..=k {
        out[j] /= diag[j];
        out[k + 1 + j] /= diag[j];
    }
    out
}

/// Discrete weak gradient of one cell, local orientation.
#[derive(Clone, Debug)]
pub struct WeakGradientOperator {
    pub r: usize,
    pub dim_r: usize,
    /// `4 dim_r` rows: tensor components `(0,0), (0,1), (1,0), (1,1)` stacked.
    pub matrix: DMatrix<f64>,
}

/// Discrete weak divergence of one cell, local orientation.
#[derive(Clone, Debug)]
pub struct WeakDivergenceOperator {
    pub r: usize,
    pub dim_r: usize,
    pub matrix: DMatrix<f64>,
}

/// Weak gradient operator of cell `cell`.
pub fn build_weak_gradient(mesh: &PolyMesh, cell: usize, k: usize) -> Result<WeakGradientOperator> {
    Ok(LocalOperators::for_cell(mesh, cell, k)?.weak_gradient_operator())
}

pub fn build_weak_divergence(mesh: &PolyMesh, cell: usize, k: usize) -> Result<WeakDivergenceOperator> {
    Ok(LocalOperators::for_cell(mesh, cell, k)?.weak_divergence_operator())
}

/// Local blocks of the discrete Stokes system for one cell.
#[derive(Clone, Debug)]
pub struct LocalBlocks {
    /// `(grad_w u, grad_w v)_T`.
    pub a: DMatrix<f64>,
    /// `(div_w v, q)_T`, one row per pressure basis function.
    pub b: DMatrix<f64>,
    /// `(f, v0)_T`.
    pub load: DVector<f64>,
}

pub fn build_local_blocks<F: Fn(&Vertex2) -> Vector2<f64>>(mesh: &PolyMesh, cell: usize, k: usize, f: F) -> Result<LocalBlocks> {
    let ops = LocalOperators::for_cell(mesh, cell, k)?;
    Ok(ops.local_blocks(&CellFrame::of(&mesh.cells[cell]), f))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct ShapeKey {
    convex: bool,
    coords: Vec<i64>,
}

fn shape_key(mesh: &PolyMesh, cell: usize) -> ShapeKey {
    let c = &mesh.cells[cell];
    let coords = c
        .vertices
        .iter()
        .flat_map(|&v| {
            let xi = (mesh.vertices[v] - c.centroid) / c.diameter;
            [(xi.x * 1e9).round() as i64, (xi.y * 1e9).round() as i64]
        })
        .collect();
    ShapeKey { convex: c.convex, coords }
}

/// Shares [`LocalOperators`] between congruent cells (same shape up to translation and scale).
pub struct OperatorCache {
    k: usize,
    min_quad: usize,
    map: Mutex<HashMap<ShapeKey, Arc<LocalOperators>>>,
}

impl OperatorCache {
    pub fn new(k: usize) -> Self {
        Self::with_min_quadrature(k, 0)
    }

    pub fn with_min_quadrature(k: usize, min_quad: usize) -> Self {
        OperatorCache { k, min_quad, map: Mutex::new(HashMap::new()) }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Operators for every cell of `mesh`; new shapes are built in parallel.
    pub fn for_mesh(&self, mesh: &PolyMesh) -> Result<Vec<Arc<LocalOperators>>> {
        let keys: Vec<ShapeKey> = (0..mesh.cells.len()).into_par_iter().map(|c| shape_key(mesh, c)).collect();
        let missing: Vec<(ShapeKey, usize)> = {
            let map = self.map.lock().unwrap();
            let mut first: HashMap<&ShapeKey, usize> = HashMap::new();
            for (c, key) in keys.iter().enumerate() {
                if !map.contains_key(key) {
                    first.entry(key).or_insert(c);
                }
            }
            let mut v: Vec<(ShapeKey, usize)> = first.into_iter().map(|(k, c)| (k.clone(), c)).collect();
            v.sort_by_key(|(_, c)| *c);
            v
        };
        let built: Vec<(ShapeKey, LocalOperators)> = missing
            .into_par_iter()
            .map(|(key, c)| {
                let cell = &mesh.cells[c];
                LocalOperators::from_polygon_with(&mesh.cell_points(c), cell.convex, self.k, self.min_quad)
                    .map(|ops| (key, ops))
                    .map_err(|e| retag(e, c))
            })
            .collect::<Result<_>>()?;
        let mut map = self.map.lock().unwrap();
        for (key, ops) in built {
            map.insert(key, Arc::new(ops));
        }
        Ok(keys.iter().map(|k| Arc::clone(&map[k])).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn poly(pts: &[(f64, f64)]) -> Vec<Vertex2> {
        pts.iter().map(|&(x, y)| Vertex2::new(x, y)).collect()
    }

    fn frame(points: &[Vertex2]) -> CellFrame {
        let g = cell_geometry(points).unwrap();
        CellFrame { centroid: g.centroid, h: g.diameter, area: g.area }
    }

    #[test]
    fn degree_rule() {
        let mesh = PolyMesh::uniform_triangles(1).unwrap();
        assert_eq!(select_r(&mesh.cells[0], 1), 3);
        let l = PolyMesh::nonconvex_l(1).unwrap();
        assert_eq!(l.cells[0].n_edges(), 6);
        assert_eq!(select_r(&l.cells[0], 2), 13);
        assert_eq!(select_r(&l.cells[1], 1), 4);
    }

    #[test]
    fn layout_counts() {
        let l = LocalLayout::new(1, 3);
        assert_eq!(l.n_velocity(), 2 * 3 + 3 * 4);
        let l = LocalLayout::new(2, 8);
        assert_eq!(l.n_velocity(), 2 * 6 + 8 * 6);
        assert_eq!(l.dim_pressure, 3);
        let mut seen = vec![false; l.n_velocity()];
        for comp in 0..2 {
            for s in 0..l.n_scalar() {
                assert!(!std::mem::replace(&mut seen[l.from_scalar(comp, s)], true));
            }
        }
        assert!(seen.into_iter().all(|b| b));
    }

    #[test]
    fn constants_are_annihilated() {
        for pts in [
            poly(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]),
            poly(&[(0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (1.0, 0.5), (0.5, 0.5), (0.5, 1.0), (0.0, 1.0), (0.0, 0.5)]),
        ] {
            let ops = LocalOperators::from_polygon(&pts, 2).unwrap();
            let fr = frame(&pts);
            let v = ops.interpolate(&fr, |_| Vector2::new(0.7, -1.3)).unwrap();
            for g in ops.apply_weak_gradient(&v) {
                assert!(g.amax() < 1e-12);
            }
            assert!(ops.apply_weak_divergence(&v).amax() < 1e-12);
            let a = ops.stiffness_matrix();
            assert!((&a * &v).amax() <= 1e-13 * a.amax(), "{:e} vs {:e}", (&a * &v).amax(), a.amax());
        }
    }

    #[test]
    fn linear_field_has_exact_weak_gradient() {
        let pts = poly(&[(0.1, 0.0), (0.9, 0.2), (0.5, 0.8), (0.0, 0.6)]);
        let ops = LocalOperators::from_polygon(&pts, 1).unwrap();
        let fr = frame(&pts);
        let v = ops.interpolate(&fr, |p| Vector2::new(p.x, 0.0)).unwrap();
        let g = ops.apply_weak_gradient(&v);
        // the constant 1 has coefficient sqrt(area) on the first orthonormal function
        let one = ops.project_qh_scalar(&fr, |_| 1.0);
        assert_relative_eq!(one[0], fr.area.sqrt(), epsilon = 1e-13);
        assert!((&g[0] - &one).amax() < 1e-12);
        for c in &g[1..] {
            assert!(c.amax() < 1e-12);
        }
        let v = ops.interpolate(&fr, |p| Vector2::new(p.x, p.y)).unwrap();
        let d = ops.apply_weak_divergence(&v);
        assert!((d - one * 2.0).amax() < 1e-12);
    }

    #[test]
    fn normal_boundary_data_integrates_to_perimeter() {
        // v0 = 0, vb = n on the unit square: (div_w v, 1) = <n.n, 1> = 4
        let pts = poly(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let ops = LocalOperators::from_polygon(&pts, 1).unwrap();
        let fr = frame(&pts);
        let l = ops.layout;
        let mut v = DVector::zeros(l.n_velocity());
        for e in 0..4 {
            let n = outward_normal(pts[e], pts[(e + 1) % 4]);
            v[l.vb(e, 0, 0)] = n.x;
            v[l.vb(e, 1, 0)] = n.y;
        }
        let b = ops.divergence_block(&fr);
        assert_relative_eq!((b * v)[0], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn divergence_block_for_the_identity_field() {
        let pts = poly(&[(0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (1.0, 0.5), (0.5, 0.5), (0.5, 1.0), (0.0, 1.0), (0.0, 0.5)]);
        let ops = LocalOperators::from_polygon(&pts, 1).unwrap();
        let fr = frame(&pts);
        let v = ops.interpolate(&fr, |p| Vector2::new(p.x, p.y)).unwrap();
        let b = ops.divergence_block(&fr) * v;
        assert_relative_eq!(b[0], 2.0 * 0.75, epsilon = 1e-11);
    }

    #[test]
    fn projection_of_x_squared() {
        // Q0 x^2 on the unit square onto P_1 is x - 1/6.
        let pts = poly(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let ops = LocalOperators::from_polygon(&pts, 1).unwrap();
        let fr = frame(&pts);
        let c = ops.project_q0(&fr, |p| Vector2::new(p.x * p.x, 0.0)).unwrap();
        let mono = fr.monomials(1);
        for p in [Vertex2::new(0.2, 0.7), Vertex2::new(0.9, 0.1)] {
            let got = mono.eval_combination(&c.as_slice()[..3], &p);
            assert_relative_eq!(got, p.x - 1.0 / 6.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn projection_round_trips_polynomials() {
        let pts = poly(&[(0.0, 0.0), (1.0, 0.0), (1.0, 0.5), (0.5, 0.5), (0.5, 1.0), (0.0, 1.0)]);
        let ops = LocalOperators::from_polygon(&pts, 3).unwrap();
        let fr = frame(&pts);
        let mono = fr.monomials(3);
        let coeffs: Vec<f64> = (0..10).map(|i| (i as f64 * 0.37).sin()).collect();
        let c = ops.project_q0(&fr, |p| Vector2::new(mono.eval_combination(&coeffs, p), 0.0)).unwrap();
        for (a, b) in c.iter().zip(&coeffs) {
            assert_relative_eq!(*a, *b, epsilon = 1e-12);
        }
        let qb = project_qb(Vertex2::new(0.0, 0.0), Vertex2::new(1.0, 0.0), 2, |p| Vector2::new(p.x, 0.0));
        // x on [0,1] is (1 + t) / 2
        assert_relative_eq!(qb[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(qb[1], 0.5, epsilon = 1e-15);
        assert!(qb[2].abs() < 1e-15);
    }

    #[test]
    fn stiffness_kernel_is_constants() {
        let pts = poly(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
        let ops = LocalOperators::from_polygon(&pts, 1).unwrap();
        let a = ops.stiffness_matrix();
        assert_eq!(a.nrows(), 18);
        let eig = a.symmetric_eigenvalues();
        let scale = eig.amax();
        let zero = eig.iter().filter(|&&x| x.abs() < 1e-10 * scale).count();
        assert_eq!(zero, 2);
        assert!(eig.min() > -1e-12 * scale);
    }

    #[test]
    fn cache_shares_congruent_cells() {
        let mesh = PolyMesh::nonconvex_l(4).unwrap();
        let cache = OperatorCache::new(1);
        let ops = cache.for_mesh(&mesh).unwrap();
        assert_eq!(ops.len(), mesh.cells.len());
        // one square shape and four L variants (with/without each collinear midpoint)
        assert_eq!(cache.len(), 5);
        let again = cache.for_mesh(&PolyMesh::nonconvex_l(8).unwrap()).unwrap();
        assert_eq!(cache.len(), 5);
        assert!(Arc::ptr_eq(&again[0], &ops[0]));
    }
}
