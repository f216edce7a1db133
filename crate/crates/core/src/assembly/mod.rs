//! Global numbering, assembly and solution of the saddle-point system.
//!
//! Unknowns are ordered: interior velocity coefficients cell by cell, then the
//! velocity coefficients of the interior edges, then the pressure coefficients
//! cell by cell, and finally one Lagrange multiplier enforcing a zero pressure
//! mean. Boundary edge coefficients are eliminated with the values `Q_b g`.
//!
//! The assembled matrix is
//!
//! ```text
//! [ A   B^T  0 ]
//! [ B   0    c ]
//! [ 0   c^T  0 ]
//! ```
//!
//! where `B` holds `-(div_w v, q)` so that the matrix is symmetric, and `c_i` is the
//! integral of pressure basis function `i`.

use std::sync::Arc;
use std::time::Instant;

use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Side;
use nalgebra::{DMatrix, DVector, Vector2};
use rayon::prelude::*;

use crate::error::{Result, WgError};
use crate::mesh::{PolyMesh, Vertex2};
use crate::polybasis::dim_pm;
use crate::weakops::{project_qb, CellFrame, LocalLayout, LocalOperators, OperatorCache};

mod minres;

/// Relative algebraic residual accepted from the linear solve.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Body force and Dirichlet data of a Stokes problem.
pub trait StokesData: Sync {
    fn force(&self, x: &Vertex2) -> Vector2<f64>;
    fn dirichlet(&self, x: &Vertex2) -> Vector2<f64>;
}

/// Homogeneous data: `f = 0`, `g = 0`.
pub struct ZeroData;

impl StokesData for ZeroData {
    fn force(&self, _: &Vertex2) -> Vector2<f64> {
        Vector2::zeros()
    }
    fn dirichlet(&self, _: &Vertex2) -> Vector2<f64> {
        Vector2::zeros()
    }
}

/// Where a local velocity unknown lives globally.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Slot {
    Free(usize),
    /// Eliminated boundary coefficient: index into [`GlobalSystem::edge_values`].
    Boundary(usize),
}

#[derive(Clone, Debug)]
pub struct DofMap {
    pub k: usize,
    pub dim_pk: usize,
    pub dim_pressure: usize,
    pub n_cells: usize,
    pub n_edges: usize,
    /// Position of each edge among the interior edges; `None` on the boundary.
    pub edge_slot: Vec<Option<usize>>,
    pub n_interior_edges: usize,
    /// Velocity unknowns.
    pub n_u: usize,
    /// Pressure unknowns.
    pub n_p: usize,
}

impl DofMap {
    pub fn new(mesh: &PolyMesh, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(WgError::InvalidArgument("velocity degree k must be at least 1".into()));
        }
        let mut next = 0;
        let edge_slot = mesh
            .edges
            .iter()
            .map(|e| {
                (!e.boundary).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        let dim_pk = dim_pm(k);
        let dim_pressure = dim_pm(k - 1);
        let n_cells = mesh.cells.len();
        Ok(DofMap {
            k,
            dim_pk,
            dim_pressure,
            n_cells,
            n_edges: mesh.edges.len(),
            edge_slot,
            n_interior_edges: next,
            n_u: n_cells * 2 * dim_pk + next * 2 * (k + 1),
            n_p: n_cells * dim_pressure,
        })
    }

    pub fn n_total(&self) -> usize {
        self.n_u + self.n_p + 1
    }

    pub fn cell_v0(&self, cell: usize, comp: usize, a: usize) -> usize {
        cell * 2 * self.dim_pk + comp * self.dim_pk + a
    }

    /// Global unknown of an edge coefficient (global orientation), `None` on the boundary.
    pub fn edge_dof(&self, edge: usize, comp: usize, j: usize) -> Option<usize> {
        self.edge_slot[edge].map(|s| self.n_cells * 2 * self.dim_pk + s * 2 * (self.k + 1) + comp * (self.k + 1) + j)
    }

    /// Offset of an edge coefficient in per-edge storage (all edges, global orientation).
    pub fn edge_value(&self, edge: usize, comp: usize, j: usize) -> usize {
        edge * 2 * (self.k + 1) + comp * (self.k + 1) + j
    }

    pub fn pressure(&self, cell: usize, i: usize) -> usize {
        self.n_u + cell * self.dim_pressure + i
    }

    pub fn multiplier(&self) -> usize {
        self.n_u + self.n_p
    }

    /// Global slot and orientation sign of every local velocity unknown of `cell`.
    pub fn cell_slots(&self, mesh: &PolyMesh, cell: usize) -> Vec<(Slot, f64)> {
        let c = &mesh.cells[cell];
        let l = LocalLayout::new(self.k, c.n_edges());
        let mut out = vec![(Slot::Free(0), 1.0); l.n_velocity()];
        for comp in 0..2 {
            for a in 0..self.dim_pk {
                out[l.v0(comp, a)] = (Slot::Free(self.cell_v0(cell, comp, a)), 1.0);
            }
        }
        for (e_local, &edge) in c.edges.iter().enumerate() {
            let reversed = mesh.edge_reversed(cell, e_local);
            for comp in 0..2 {
                for j in 0..=self.k {
                    // P_j(-t) = (-1)^j P_j(t)
                    let sign = if reversed && j % 2 == 1 { -1.0 } else { 1.0 };
                    let slot = match self.edge_dof(edge, comp, j) {
                        Some(g) => Slot::Free(g),
                        None => Slot::Boundary(self.edge_value(edge, comp, j)),
                    };
                    out[l.vb(e_local, comp, j)] = (slot, sign);
                }
            }
        }
        out
    }
}

/// Discrete weak velocity: interior coefficients per cell and edge coefficients per
/// edge (global orientation, boundary edges included).
#[derive(Clone, Debug)]
pub struct WeakField {
    pub k: usize,
    pub interior: Vec<f64>,
    pub edges: Vec<f64>,
}

impl WeakField {
    /// The local velocity vector of `cell` in the cell's own edge orientation.
    pub fn local(&self, mesh: &PolyMesh, dofs: &DofMap, cell: usize) -> DVector<f64> {
        let c = &mesh.cells[cell];
        let l = LocalLayout::new(self.k, c.n_edges());
        let mut v = DVector::zeros(l.n_velocity());
        for comp in 0..2 {
            for a in 0..dofs.dim_pk {
                v[l.v0(comp, a)] = self.interior[dofs.cell_v0(cell, comp, a)];
            }
        }
        for (e_local, &edge) in c.edges.iter().enumerate() {
            let reversed = mesh.edge_reversed(cell, e_local);
            for comp in 0..2 {
                for j in 0..=self.k {
                    let sign = if reversed && j % 2 == 1 { -1.0 } else { 1.0 };
                    v[l.vb(e_local, comp, j)] = sign * self.edges[dofs.edge_value(edge, comp, j)];
                }
            }
        }
        v
    }

    /// Interior velocity `u_0` at a point of `cell`.
    pub fn eval_interior(&self, mesh: &PolyMesh, dofs: &DofMap, cell: usize, x: &Vertex2) -> Vector2<f64> {
        let c = &mesh.cells[cell];
        let mono = CellFrame::of(c).monomials(self.k);
        let base = dofs.cell_v0(cell, 0, 0);
        let dk = dofs.dim_pk;
        Vector2::new(
            mono.eval_combination(&self.interior[base..base + dk], x),
            mono.eval_combination(&self.interior[base + dk..base + 2 * dk], x),
        )
    }
}

/// Assembled global system.
pub struct GlobalSystem {
    pub dofs: DofMap,
    pub matrix: SparseColMat<usize, f64>,
    pub rhs: Vec<f64>,
    /// `Q_b g` on boundary edges (zero elsewhere), per-edge storage.
    pub edge_values: Vec<f64>,
    /// Local operators of each cell.
    pub ops: Vec<Arc<LocalOperators>>,
    /// Scale `h_T` of each cell frame.
    pub cell_h: Vec<f64>,
}

struct CellContribution {
    triplets: Vec<Triplet<usize, usize, f64>>,
    rhs: Vec<(usize, f64)>,
}

/// Assemble the stabilizer-free weak Galerkin Stokes system on `mesh`.
pub fn assemble(mesh: &PolyMesh, k: usize, data: &dyn StokesData, cache: &OperatorCache) -> Result<GlobalSystem> {
    if cache.k() != k {
        return Err(WgError::InvalidArgument(format!("operator cache is for k = {}, not {k}", cache.k())));
    }
    let dofs = DofMap::new(mesh, k)?;
    let ops = cache.for_mesh(mesh)?;

    let mut edge_values = vec![0.0; mesh.edges.len() * 2 * (k + 1)];
    for (ei, e) in mesh.edges.iter().enumerate().filter(|(_, e)| e.boundary) {
        let (a, b) = (mesh.vertices[e.vertices[0]], mesh.vertices[e.vertices[1]]);
        let qb = project_qb(a, b, k, |x| data.dirichlet(x));
        edge_values[dofs.edge_value(ei, 0, 0)..dofs.edge_value(ei, 0, 0) + qb.len()].copy_from_slice(qb.as_slice());
    }

    let contributions: Vec<CellContribution> = (0..mesh.cells.len())
        .into_par_iter()
        .map(|c| cell_contribution(mesh, &dofs, &ops[c], c, data, &edge_values))
        .collect();

    let n = dofs.n_total();
    let mut rhs = vec![0.0; n];
    let mut triplets = Vec::with_capacity(contributions.iter().map(|c| c.triplets.len()).sum());
    for c in contributions {
        triplets.extend(c.triplets);
        for (i, v) in c.rhs {
            rhs[i] += v;
        }
    }
    let matrix = SparseColMat::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| WgError::Internal(format!("sparse matrix construction failed: {e:?}")))?;
    let cell_h = mesh.cells.iter().map(|c| CellFrame::of(c).h).collect();
    Ok(GlobalSystem { dofs, matrix, rhs, edge_values, ops, cell_h })
}

fn cell_contribution(
    mesh: &PolyMesh,
    dofs: &DofMap,
    ops: &LocalOperators,
    cell: usize,
    data: &dyn StokesData,
    edge_values: &[f64],
) -> CellContribution {
    let frame = CellFrame::of(&mesh.cells[cell]);
    let blocks = ops.local_blocks(&frame, |x| data.force(x));
    let slots = dofs.cell_slots(mesh, cell);
    let nv = slots.len();
    let mut triplets = Vec::with_capacity(nv * nv + 2 * nv * dofs.dim_pressure + 2 * dofs.dim_pressure);
    let mut rhs = Vec::with_capacity(nv + dofs.dim_pressure);

    let boundary_value = |i: usize| -> Option<f64> {
        match slots[i] {
            (Slot::Boundary(s), sign) => Some(sign * edge_values[s]),
            _ => None,
        }
    };

    for i in 0..nv {
        let (Slot::Free(gi), si) = slots[i] else { continue };
        rhs.push((gi, si * blocks.load[i]));
        for j in 0..nv {
            let a = blocks.a[(i, j)];
            match slots[j] {
                (Slot::Free(gj), sj) => triplets.push(Triplet::new(gi, gj, si * sj * a)),
                _ => rhs.push((gi, -si * a * boundary_value(j).unwrap())),
            }
        }
    }
    for p in 0..dofs.dim_pressure {
        let gp = dofs.pressure(cell, p);
        for j in 0..nv {
            let b = -blocks.b[(p, j)];
            match slots[j] {
                (Slot::Free(gj), sj) => {
                    triplets.push(Triplet::new(gp, gj, sj * b));
                    triplets.push(Triplet::new(gj, gp, sj * b));
                }
                _ => rhs.push((gp, -b * boundary_value(j).unwrap())),
            }
        }
        // integral of the pressure basis function: first column of the mass matrix
        let mean = frame.h * frame.h * ops.mass_pressure[(p, 0)];
        triplets.push(Triplet::new(gp, dofs.multiplier(), mean));
        triplets.push(Triplet::new(dofs.multiplier(), gp, mean));
    }
    CellContribution { triplets, rhs }
}

impl GlobalSystem {
    pub fn n_total(&self) -> usize {
        self.dofs.n_total()
    }

    /// Visit every stored entry `(row, col, value)`.
    pub fn for_each_entry<F: FnMut(usize, usize, f64)>(&self, mut f: F) {
        let m = self.matrix.as_ref();
        let sym = m.symbolic();
        let (col_ptr, row_idx, val) = (sym.col_ptr(), sym.row_idx(), m.val());
        for j in 0..m.ncols() {
            for idx in col_ptr[j]..col_ptr[j + 1] {
                f(row_idx[idx], j, val[idx]);
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_total()];
        self.apply_into(x, &mut y);
        y
    }

    /// `y <- K x`.
    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        self.for_each_entry(|i, j, v| y[i] += v * x[j]);
    }

    /// Dense copy of the block `rows x cols` (half-open ranges).
    pub fn dense_block(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(rows.len(), cols.len());
        self.for_each_entry(|i, j, v| {
            if rows.contains(&i) && cols.contains(&j) {
                out[(i - rows.start, j - cols.start)] += v;
            }
        });
        out
    }

    /// `max |A - A^T| / max |A|` over the velocity block.
    pub fn velocity_asymmetry(&self) -> f64 {
        let n_u = self.dofs.n_u;
        let mut entries = std::collections::HashMap::new();
        let mut amax: f64 = 0.0;
        self.for_each_entry(|i, j, v| {
            if i < n_u && j < n_u {
                *entries.entry((i, j)).or_insert(0.0) += v;
                amax = amax.max(v.abs());
            }
        });
        let dev = entries
            .iter()
            .map(|(&(i, j), v)| (v - entries.get(&(j, i)).copied().unwrap_or(0.0)).abs())
            .fold(0.0, f64::max);
        dev / amax
    }

    /// Whether the reduced velocity block admits a sparse Cholesky factorization.
    pub fn velocity_block_is_spd(&self) -> bool {
        let n_u = self.dofs.n_u;
        let mut t = Vec::new();
        self.for_each_entry(|i, j, v| {
            if i < n_u && j < n_u {
                t.push(Triplet::new(i, j, v));
            }
        });
        match SparseColMat::<usize, f64>::try_new_from_triplets(n_u, n_u, &t) {
            Ok(a) => a.sp_cholesky(Side::Lower).is_ok(),
            Err(_) => false,
        }
    }
}

/// Linear solver used by [`solve_with`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    /// Direct up to [`AUTO_DIRECT_MAX_UNKNOWNS`] unknowns, MINRES above.
    #[default]
    Auto,
    /// Sparse LU with iterative refinement.
    Direct,
    /// MINRES with a block-diagonal preconditioner.
    Minres,
}

/// Largest system the automatic choice hands to the sparse LU.
pub const AUTO_DIRECT_MAX_UNKNOWNS: usize = 20_000;

impl std::str::FromStr for SolverKind {
    type Err = WgError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(SolverKind::Auto),
            "direct" => Ok(SolverKind::Direct),
            "minres" => Ok(SolverKind::Minres),
            _ => Err(WgError::InvalidArgument(format!("unknown solver {s:?} (expected auto, direct or minres)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, serde::Serialize)]
pub struct SolveStats {
    pub method: SolverKind,
    pub n_unknowns: usize,
    pub nnz: usize,
    /// Factorization time (LU, or the preconditioner's Cholesky factor).
    pub factor_seconds: f64,
    pub refinement_steps: usize,
    /// Total MINRES iterations; zero for the direct solver.
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub velocity: WeakField,
    /// Pressure coefficients per cell (scaled monomials of degree `k - 1`).
    pub pressure: Vec<f64>,
    pub multiplier: f64,
    /// Relative algebraic residual `|K x - b| / |b|` (absolute when `b = 0`).
    pub residual: f64,
    pub stats: SolveStats,
}

impl SolveResult {
    /// Pressure coefficients of one cell.
    pub fn cell_pressure<'a>(&'a self, dofs: &DofMap, cell: usize) -> &'a [f64] {
        &self.pressure[cell * dofs.dim_pressure..(cell + 1) * dofs.dim_pressure]
    }
}

/// Solve with the automatically chosen method.
pub fn solve(system: &GlobalSystem) -> Result<SolveResult> {
    solve_with(system, SolverKind::Auto)
}

/// Solve to a relative residual of at most [`RESIDUAL_TOL`].
pub fn solve_with(system: &GlobalSystem, kind: SolverKind) -> Result<SolveResult> {
    let n = system.n_total();
    let method = match kind {
        SolverKind::Auto if n <= AUTO_DIRECT_MAX_UNKNOWNS => SolverKind::Direct,
        SolverKind::Auto => SolverKind::Minres,
        k => k,
    };
    let b = &system.rhs;
    let bnorm = norm(b);
    let scale = if bnorm > 0.0 { bnorm } else { 1.0 };
    let start = Instant::now();
    let mut correction: Box<dyn FnMut(&[f64], &mut [f64]) -> Result<usize>> = match method {
        SolverKind::Direct => {
            let lu = system
                .matrix
                .sp_lu()
                .map_err(|e| WgError::SingularSystem(format!("sparse LU failed: {e:?}")))?;
            Box::new(move |r, dx| {
                let z = lu.solve(faer::col::ColRef::from_slice(r));
                dx.iter_mut().zip(z.iter()).for_each(|(d, z)| *d = *z);
                Ok(0)
            })
        }
        _ => {
            let prec = minres::BlockPreconditioner::new(system)?;
            Box::new(move |r, dx| minres::minres(|v, out| system.apply_into(v, out), &prec, r, dx, 1e-12, 2000))
        }
    };
    let factor_seconds = start.elapsed().as_secs_f64();

    let mut x = vec![0.0; n];
    let mut dx = vec![0.0; n];
    let mut r = b.clone();
    let mut residual = norm(&r) / scale;
    let (mut steps, mut iterations) = (0, 0);
    while residual > RESIDUAL_TOL * 1e-2 && steps < 4 {
        iterations += correction(&r, &mut dx)?;
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi += d;
        }
        let kx = system.apply(&x);
        r = b.iter().zip(&kx).map(|(b, k)| b - k).collect();
        let next = norm(&r) / scale;
        steps += 1;
        if !next.is_finite() {
            return Err(WgError::SingularSystem("non-finite solution".into()));
        }
        if next >= residual && steps > 1 {
            residual = next;
            break;
        }
        residual = next;
    }
    if residual > RESIDUAL_TOL {
        return Err(WgError::SingularSystem(format!("relative residual {residual:e} after {steps} refinement steps")));
    }

    let dofs = &system.dofs;
    let mut edges = system.edge_values.clone();
    for e in 0..dofs.n_edges {
        for comp in 0..2 {
            for j in 0..=dofs.k {
                if let Some(g) = dofs.edge_dof(e, comp, j) {
                    edges[dofs.edge_value(e, comp, j)] = x[g];
                }
            }
        }
    }
    let interior = x[..dofs.n_cells * 2 * dofs.dim_pk].to_vec();
    Ok(SolveResult {
        velocity: WeakField { k: dofs.k, interior, edges },
        pressure: x[dofs.n_u..dofs.n_u + dofs.n_p].to_vec(),
        multiplier: x[dofs.multiplier()],
        residual,
        stats: SolveStats {
            method,
            n_unknowns: n,
            nnz: system.matrix.compute_nnz(),
            factor_seconds,
            refinement_steps: steps,
            iterations,
        },
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Assemble and solve in one step.
pub fn solve_problem(mesh: &PolyMesh, k: usize, data: &dyn StokesData, cache: &OperatorCache) -> Result<(GlobalSystem, SolveResult)> {
    let system = assemble(mesh, k, data, cache)?;
    let result = solve(&system)?;
    Ok((system, result))
}

/// `int_Omega p_h`.
pub fn pressure_mean(mesh: &PolyMesh, system: &GlobalSystem, result: &SolveResult) -> f64 {
    let d = system.dofs.dim_pressure;
    (0..mesh.cells.len())
        .map(|c| {
            let h = mesh.cells[c].diameter;
            let ops = &system.ops[c];
            (0..d).map(|i| result.pressure[c * d + i] * h * h * ops.mass_pressure[(i, 0)]).sum::<f64>()
        })
        .sum()
}

/// `max_q |(div_w u_h, q)|` over the pressure basis, i.e. the residual of the
/// discrete divergence equation.
pub fn divergence_residual(mesh: &PolyMesh, system: &GlobalSystem, result: &SolveResult) -> f64 {
    (0..mesh.cells.len())
        .map(|c| {
            let v = result.velocity.local(mesh, &system.dofs, c);
            let b = system.ops[c].divergence_block(&CellFrame::of(&mesh.cells[c]));
            (b * v).amax()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dof_counts_on_two_triangles() {
        let mesh = PolyMesh::uniform_triangles(1).unwrap();
        let d = DofMap::new(&mesh, 1).unwrap();
        assert_eq!((d.n_u, d.n_p), (16, 2));
        let d = DofMap::new(&mesh, 2).unwrap();
        assert_eq!((d.n_u, d.n_p), (30, 6));
    }

    #[test]
    fn pressure_count_is_sum_over_cells() {
        let mesh = PolyMesh::nonconvex_l(3).unwrap();
        for k in 1..=3 {
            let d = DofMap::new(&mesh, k).unwrap();
            assert_eq!(d.n_p, mesh.cells.len() * dim_pm(k - 1));
        }
    }

    #[test]
    fn slots_cover_free_unknowns_once_per_owner() {
        let mesh = PolyMesh::nonconvex_l(2).unwrap();
        let d = DofMap::new(&mesh, 2).unwrap();
        let mut hits = vec![0usize; d.n_u];
        for c in 0..mesh.cells.len() {
            for (slot, _) in d.cell_slots(&mesh, c) {
                if let Slot::Free(g) = slot {
                    hits[g] += 1;
                }
            }
        }
        let n_interior = mesh.cells.len() * 2 * d.dim_pk;
        assert!(hits[..n_interior].iter().all(|&h| h == 1));
        assert!(hits[n_interior..].iter().all(|&h| h == 2));
    }

    #[test]
    fn homogeneous_problem_has_zero_solution() {
        let mesh = PolyMesh::uniform_triangles(2).unwrap();
        let cache = OperatorCache::new(1);
        let (_, res) = solve_problem(&mesh, 1, &ZeroData, &cache).unwrap();
        assert!(res.velocity.interior.iter().all(|v| v.abs() < 1e-14));
        assert!(res.pressure.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn velocity_block_is_symmetric() {
        let mesh = PolyMesh::uniform_triangles(4).unwrap();
        let cache = OperatorCache::new(1);
        let sys = assemble(&mesh, 1, &ZeroData, &cache).unwrap();
        assert!(sys.velocity_asymmetry() <= 1e-12);
        assert!(sys.velocity_block_is_spd());
    }

    struct Swirl;

    impl StokesData for Swirl {
        fn force(&self, x: &Vertex2) -> Vector2<f64> {
            Vector2::new((3.0 * x.y).sin(), x.x * x.x)
        }
        fn dirichlet(&self, x: &Vertex2) -> Vector2<f64> {
            Vector2::new(x.y * x.y, x.x)
        }
    }

    #[test]
    fn minres_matches_direct() {
        let mesh = PolyMesh::nonconvex_l(2).unwrap();
        let cache = OperatorCache::new(2);
        let sys = assemble(&mesh, 2, &Swirl, &cache).unwrap();
        let direct = solve_with(&sys, SolverKind::Direct).unwrap();
        let iterative = solve_with(&sys, SolverKind::Minres).unwrap();
        assert_eq!(direct.stats.method, SolverKind::Direct);
        assert_eq!(iterative.stats.method, SolverKind::Minres);
        assert!(iterative.stats.iterations > 0);
        assert!(iterative.residual <= RESIDUAL_TOL);
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff(&direct.velocity.interior, &iterative.velocity.interior) < 1e-9);
        assert!(diff(&direct.velocity.edges, &iterative.velocity.edges) < 1e-9);
        assert!(diff(&direct.pressure, &iterative.pressure) < 1e-9);
    }

    #[test]
    fn auto_uses_direct_on_small_systems() {
        let mesh = PolyMesh::uniform_triangles(2).unwrap();
        let (sys, res) = solve_problem(&mesh, 1, &Swirl, &OperatorCache::new(1)).unwrap();
        assert!(sys.n_total() <= AUTO_DIRECT_MAX_UNKNOWNS);
        assert_eq!(res.stats.method, SolverKind::Direct);
    }

    #[test]
    fn solver_names() {
        assert_eq!("minres".parse::<SolverKind>().unwrap(), SolverKind::Minres);
        assert_eq!("direct".parse::<SolverKind>().unwrap(), SolverKind::Direct);
        assert!("gmres".parse::<SolverKind>().is_err());
    }

    #[test]
    fn mismatched_cache_is_rejected() {
        let mesh = PolyMesh::uniform_triangles(1).unwrap();
        assert!(matches!(assemble(&mesh, 2, &ZeroData, &OperatorCache::new(1)), Err(WgError::InvalidArgument(_))));
    }
}
