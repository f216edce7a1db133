//! Manufactured solutions, discrete error norms, convergence rates and the
//! empirical stability probes.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::assembly::{solve_problem, DofMap, GlobalSystem, SolveResult, StokesData, WeakField};
use crate::error::{Result, WgError};
use crate::mesh::{MeshFamily, PolyMesh, Vertex2};
use crate::polybasis::edge_quadrature;
use crate::weakops::{project_qb, CellFrame, LocalOperators, OperatorCache};

type VectorFn = fn(f64, f64) -> Vector2<f64>;

/// Closed-form Stokes solution with its body force `f = -Laplace u + grad p`.
#[derive(Clone, Copy)]
pub struct ManufacturedSolution {
    pub name: &'static str,
    pub regularity: &'static str,
    u: VectorFn,
    grad_u: fn(f64, f64) -> Matrix2<f64>,
    p: fn(f64, f64) -> f64,
    f: VectorFn,
}

impl std::fmt::Debug for ManufacturedSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ManufacturedSolution").field("name", &self.name).finish()
    }
}

impl ManufacturedSolution {
    pub fn velocity(&self, x: &Vertex2) -> Vector2<f64> {
        (self.u)(x.x, x.y)
    }

    /// `grad_u[(i, j)] = d u_i / d x_j`.
    pub fn grad_velocity(&self, x: &Vertex2) -> Matrix2<f64> {
        (self.grad_u)(x.x, x.y)
    }

    pub fn divergence(&self, x: &Vertex2) -> f64 {
        self.grad_velocity(x).trace()
    }

    pub fn pressure(&self, x: &Vertex2) -> f64 {
        (self.p)(x.x, x.y)
    }

    pub fn body_force(&self, x: &Vertex2) -> Vector2<f64> {
        (self.f)(x.x, x.y)
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "s1" => Some(solution_s1()),
            "patch-k1" => Some(patch_k1()),
            "patch-k2" => Some(patch_k2()),
            _ => None,
        }
    }
}

impl StokesData for ManufacturedSolution {
    fn force(&self, x: &Vertex2) -> Vector2<f64> {
        self.body_force(x)
    }
    fn dirichlet(&self, x: &Vertex2) -> Vector2<f64> {
        self.velocity(x)
    }
}

/// `u = (-d_y g, d_x g)` with `g = 16 (x - x^2)^2 (y - y^2)^2`, `p = (y - 1/2)^3`.
pub fn solution_s1() -> ManufacturedSolution {
    fn parts(x: f64, y: f64) -> (f64, f64, f64, f64) {
        (x - x * x, y - y * y, 1.0 - 2.0 * x, 1.0 - 2.0 * y)
    }
    ManufacturedSolution {
        name: "s1",
        regularity: "polynomial",
        u: |x, y| {
            let (cx, cy, dx, dy) = parts(x, y);
            Vector2::new(-32.0 * cx * cx * cy * dy, 32.0 * cx * dx * cy * cy)
        },
        grad_u: |x, y| {
            let (cx, cy, dx, dy) = parts(x, y);
            Matrix2::new(
                -64.0 * cx * dx * cy * dy,
                -32.0 * cx * cx * (dy * dy - 2.0 * cy),
                32.0 * cy * cy * (dx * dx - 2.0 * cx),
                64.0 * cx * dx * cy * dy,
            )
        },
        p: |_, y| (y - 0.5).powi(3),
        f: |x, y| {
            let (cx, cy, dx, dy) = parts(x, y);
            Vector2::new(
                64.0 * cy * dy * (dx * dx - 2.0 * cx) - 192.0 * cx * cx * dy,
                192.0 * cy * cy * dx - 64.0 * cx * dx * (dy * dy - 2.0 * cy) + 3.0 * (y - 0.5).powi(2),
            )
        },
    }
}

/// Rigid rotation `u = (y, -x)`, `p = 0`.
pub fn patch_k1() -> ManufacturedSolution {
    ManufacturedSolution {
        name: "patch-k1",
        regularity: "polynomial",
        u: |x, y| Vector2::new(y, -x),
        grad_u: |_, _| Matrix2::new(0.0, 1.0, -1.0, 0.0),
        p: |_, _| 0.0,
        f: |_, _| Vector2::zeros(),
    }
}

/// `u = (x^2, -2xy)`, `p = x - 1/2`.
pub fn patch_k2() -> ManufacturedSolution {
    ManufacturedSolution {
        name: "patch-k2",
        regularity: "polynomial",
        u: |x, y| Vector2::new(x * x, -2.0 * x * y),
        grad_u: |x, y| Matrix2::new(2.0 * x, 0.0, -2.0 * y, -2.0 * x),
        p: |x, _| x - 0.5,
        f: |_, _| Vector2::new(-1.0, 0.0),
    }
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct ErrorReport {
    pub h: f64,
    pub n_dofs: usize,
    /// `||u - u_0||`.
    pub l2: f64,
    /// `||Q_h(grad u) - grad_w u_h||`.
    pub energy: f64,
    /// `||Q_0 p - p_h||`, both shifted to zero mean.
    pub pressure: f64,
}

/// `Q_h u` as a global weak field (boundary edges included).
pub fn interpolate_field<F>(mesh: &PolyMesh, dofs: &DofMap, ops: &[std::sync::Arc<LocalOperators>], u: F) -> Result<WeakField>
where
    F: Fn(&Vertex2) -> Vector2<f64> + Sync,
{
    let interior: Vec<DVector<f64>> = (0..mesh.cells.len())
        .into_par_iter()
        .map(|c| ops[c].project_q0(&CellFrame::of(&mesh.cells[c]), &u))
        .collect::<Result<_>>()?;
    let mut edges = vec![0.0; dofs.n_edges * 2 * (dofs.k + 1)];
    for (ei, e) in mesh.edges.iter().enumerate() {
        let qb = project_qb(mesh.vertices[e.vertices[0]], mesh.vertices[e.vertices[1]], dofs.k, &u);
        let start = dofs.edge_value(ei, 0, 0);
        edges[start..start + qb.len()].copy_from_slice(qb.as_slice());
    }
    Ok(WeakField { k: dofs.k, interior: interior.iter().flat_map(|v| v.iter().copied()).collect(), edges })
}

/// Per-cell `Q_0^{k-1} p` coefficients, concatenated.
pub fn project_pressure_field(mesh: &PolyMesh, ops: &[std::sync::Arc<LocalOperators>], exact: &ManufacturedSolution) -> Result<Vec<f64>> {
    let per_cell: Vec<DVector<f64>> = (0..mesh.cells.len())
        .into_par_iter()
        .map(|c| ops[c].project_pressure(&CellFrame::of(&mesh.cells[c]), |x| exact.pressure(x)))
        .collect::<Result<_>>()?;
    Ok(per_cell.iter().flat_map(|v| v.iter().copied()).collect())
}

/// The three error norms for a discrete solution.
pub fn compute_errors(mesh: &PolyMesh, system: &GlobalSystem, result: &SolveResult, exact: &ManufacturedSolution) -> Result<ErrorReport> {
    compute_field_errors(mesh, &system.dofs, &system.ops, &result.velocity, &result.pressure, exact)
}

/// Error norms for arbitrary discrete fields `(u_h, p_h)`.
pub fn compute_field_errors(
    mesh: &PolyMesh,
    dofs: &DofMap,
    ops: &[std::sync::Arc<LocalOperators>],
    velocity: &WeakField,
    pressure: &[f64],
    exact: &ManufacturedSolution,
) -> Result<ErrorReport> {
    let qp = project_pressure_field(mesh, ops, exact)?;
    let dp = dofs.dim_pressure;
    struct CellSums {
        l2: f64,
        energy: f64,
        /// `int (p_h - Q p)` and `int (p_h - Q p)^2`.
        p_mean: f64,
        p_sq: f64,
    }
    let sums: Vec<CellSums> = (0..mesh.cells.len())
        .into_par_iter()
        .map(|c| {
            let frame = CellFrame::of(&mesh.cells[c]);
            let op = &ops[c];
            let rule = op.physical_rule(&frame);
            let l2 = rule.integrate(|x| (exact.velocity(x) - velocity.eval_interior(mesh, dofs, c, x)).norm_squared());

            let v = velocity.local(mesh, dofs, c);
            let wg = op.apply_weak_gradient(&v);
            let qg = op.project_qh_tensor(&frame, |x| exact.grad_velocity(x));
            let energy = wg.iter().zip(&qg).map(|(a, b)| (a - b).norm_squared()).sum();

            let d = DVector::from_fn(dp, |i, _| pressure[c * dp + i] - qp[c * dp + i]);
            let h2 = frame.h * frame.h;
            let p_sq = h2 * d.dot(&(&op.mass_pressure * &d));
            let p_mean = h2 * (0..dp).map(|i| d[i] * op.mass_pressure[(i, 0)]).sum::<f64>();
            CellSums { l2, energy, p_mean, p_sq }
        })
        .collect();

    let area = mesh.total_area();
    let l2 = sums.iter().map(|s| s.l2).sum::<f64>().sqrt();
    let energy = sums.iter().map(|s| s.energy).sum::<f64>().sqrt();
    let mean = sums.iter().map(|s| s.p_mean).sum::<f64>();
    let p_sq = sums.iter().map(|s| s.p_sq).sum::<f64>();
    // ||e - m||^2 = ||e||^2 - 2 m int e + m^2 |Omega| with m = int e / |Omega|
    let pressure = (p_sq - mean * mean / area).max(0.0).sqrt();
    Ok(ErrorReport { h: mesh.h, n_dofs: dofs.n_total(), l2, energy, pressure })
}

/// `||u_0 - Q_0 u||` and the largest edge coefficient deviation `|u_b - Q_b u|`.
pub fn projection_deviation(mesh: &PolyMesh, system: &GlobalSystem, result: &SolveResult, exact: &ManufacturedSolution) -> Result<(f64, f64)> {
    let dofs = &system.dofs;
    let q = interpolate_field(mesh, dofs, &system.ops, |x| exact.velocity(x))?;
    let dk = dofs.dim_pk;
    let mut sq = 0.0;
    for c in 0..mesh.cells.len() {
        let h2 = mesh.cells[c].diameter.powi(2);
        for comp in 0..2 {
            let start = dofs.cell_v0(c, comp, 0);
            let d = DVector::from_fn(dk, |a, _| result.velocity.interior[start + a] - q.interior[start + a]);
            sq += h2 * d.dot(&(&system.ops[c].mass_k * &d));
        }
    }
    let edge = result.velocity.edges.iter().zip(&q.edges).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok((sq.max(0.0).sqrt(), edge))
}

/// Weak gradient of `{u, u|_dT}` from the defining identity
/// `(grad_w u, phi) = -(u, div phi) + <u, phi n>`, evaluated by quadrature.
/// Coefficients use the same basis as [`LocalOperators::apply_weak_gradient`].
pub fn weak_gradient_direct<F: Fn(&Vertex2) -> Vector2<f64>>(op: &LocalOperators, frame: &CellFrame, u: F) -> [DVector<f64>; 4] {
    let d = op.dim_r();
    let mut out = [0; 4].map(|_| DVector::zeros(d));
    let mut vals = vec![0.0; d];
    let mut grads = vec![Vector2::zeros(); d];
    // In reference coordinates with phi = phi_ref / h: dx = h^2 dxi and grad phi = grad_ref / h^2 cancel.
    for (xi, w) in op.rule.points.iter().zip(&op.rule.weights) {
        let uv = u(&frame.to_physical(xi));
        op.test_basis.eval_grad_point(xi, &mut vals, &mut grads);
        for s in 0..d {
            for i in 0..2 {
                out[2 * i][s] -= w * uv[i] * grads[s].x;
                out[2 * i + 1][s] -= w * uv[i] * grads[s].y;
            }
        }
    }
    let n = op.vertices.len();
    for e in 0..n {
        let (a, b) = (op.vertices[e], op.vertices[(e + 1) % n]);
        let normal = crate::mesh::outward_normal(a, b);
        // ds = h dsigma and phi = phi_ref / h cancel.
        let rule = edge_quadrature(a, b, op.r + 2 * op.layout.k + 12);
        for (xi, w) in rule.points.iter().zip(&rule.weights) {
            let uv = u(&frame.to_physical(xi));
            op.test_basis.eval_point(xi, &mut vals);
            for s in 0..d {
                for i in 0..2 {
                    out[2 * i][s] += w * uv[i] * vals[s] * normal.x;
                    out[2 * i + 1][s] += w * uv[i] * vals[s] * normal.y;
                }
            }
        }
    }
    out
}

/// Weak divergence of `{u, u|_dT}` from `(div_w u, w) = -(u, grad w) + <u . n, w>`.
pub fn weak_divergence_direct<F: Fn(&Vertex2) -> Vector2<f64>>(op: &LocalOperators, frame: &CellFrame, u: F) -> DVector<f64> {
    let g = weak_gradient_direct(op, frame, u);
    &g[0] + &g[3]
}

/// One refinement level of a convergence study.
#[derive(Clone, Debug, Serialize)]
pub struct LevelResult {
    pub level: usize,
    pub n: usize,
    pub errors: ErrorReport,
    pub residual: f64,
    pub assemble_seconds: f64,
    pub solve_seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RateTable {
    pub problem: String,
    pub family: String,
    pub k: usize,
    pub levels: Vec<LevelResult>,
}

impl RateTable {
    /// Observed orders between consecutive levels: `(l2, energy, pressure)`.
    pub fn rates(&self) -> Vec<[f64; 3]> {
        self.levels
            .windows(2)
            .map(|w| {
                let (a, b) = (&w[0].errors, &w[1].errors);
                [observed_order(a.l2, b.l2, a.h, b.h), observed_order(a.energy, b.energy, a.h, b.h), observed_order(a.pressure, b.pressure, a.h, b.h)]
            })
            .collect()
    }

    /// Orders on the finest pair of levels.
    pub fn finest_rates(&self) -> Option<[f64; 3]> {
        self.rates().last().copied()
    }
}

/// `log(e_coarse / e_fine) / log(h_coarse / h_fine)`.
pub fn observed_order(e_coarse: f64, e_fine: f64, h_coarse: f64, h_fine: f64) -> f64 {
    (e_coarse / e_fine).ln() / (h_coarse / h_fine).ln()
}

/// Options for [`run_convergence`].
#[derive(Clone, Copy, Debug, Default)]
pub struct StudyOptions {
    /// Minimum cell quadrature degree.
    pub min_quadrature: usize,
    pub solver: crate::assembly::SolverKind,
}

/// Subdivisions per side of refinement level `level`.
pub fn n_for_level(level: usize) -> usize {
    1 << level
}

/// Solve `exact` on the meshes of `family` at the given refinement levels
/// (`2^level` subdivisions per side).
pub fn run_convergence(
    exact: &ManufacturedSolution,
    family: MeshFamily,
    k: usize,
    levels: &[usize],
    options: StudyOptions,
) -> Result<RateTable> {
    if levels.is_empty() {
        return Err(WgError::InvalidArgument("empty level list".into()));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(WgError::InvalidArgument("levels must be strictly refining".into()));
    }
    if levels.iter().any(|&l| l > 12) {
        return Err(WgError::InvalidArgument("levels above 12 are not supported".into()));
    }
    let cache = OperatorCache::with_min_quadrature(k, options.min_quadrature);
    let mut rows = Vec::with_capacity(levels.len());
    for &level in levels {
        let n = n_for_level(level);
        let mesh = family.build(n)?;
        let start = Instant::now();
        let system = crate::assembly::assemble(&mesh, k, exact, &cache)?;
        let assemble_seconds = start.elapsed().as_secs_f64();
        let start = Instant::now();
        let result = crate::assembly::solve_with(&system, options.solver)?;
        let solve_seconds = start.elapsed().as_secs_f64();
        let errors = compute_errors(&mesh, &system, &result, exact)?;
        rows.push(LevelResult { level, n, errors, residual: result.residual, assemble_seconds, solve_seconds });
    }
    Ok(RateTable { problem: exact.name.into(), family: family.tag().into(), k, levels: rows })
}

/// Solve once and return the mesh, system and solution.
pub fn solve_on(exact: &ManufacturedSolution, family: MeshFamily, k: usize, n: usize) -> Result<(PolyMesh, GlobalSystem, SolveResult)> {
    let mesh = family.build(n)?;
    let (system, result) = solve_problem(&mesh, k, exact, &OperatorCache::new(k))?;
    Ok((mesh, system, result))
}

#[derive(Clone, Debug, Serialize)]
pub struct NormRatioStats {
    pub n: usize,
    pub h: f64,
    pub samples: usize,
    pub min: f64,
    pub max: f64,
}

/// Ratios `|||v||| / ||v||_{1,h}` over random discrete fields `v` in `V_h`.
///
/// Coefficients are uniform on `[-sqrt 3, sqrt 3]` (unit variance); the component
/// along the constant fields (the common kernel of both seminorms) is removed.
pub fn probe_norm_equivalence(mesh: &PolyMesh, k: usize, n_samples: usize, seed: u64) -> Result<NormRatioStats> {
    if n_samples < 10 {
        return Err(WgError::InvalidArgument("norm-equivalence probe needs at least 10 samples".into()));
    }
    let dofs = DofMap::new(mesh, k)?;
    let ops = OperatorCache::new(k).for_mesh(mesh)?;
    let stiffness: Vec<DMatrix<f64>> = ops.iter().map(|o| o.stiffness_matrix()).collect();
    let h1: Vec<DMatrix<f64>> = ops.iter().map(|o| o.h1_matrix()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = 3f64.sqrt();
    let n_interior = dofs.n_cells * 2 * dofs.dim_pk;
    let n_edge = dofs.n_edges * 2 * (k + 1);

    // Orthonormal basis (Euclidean, in coefficient space) of the two constant fields.
    let kernel: Vec<(Vec<f64>, Vec<f64>)> = (0..2)
        .map(|comp| {
            let mut a = vec![0.0; n_interior];
            let mut b = vec![0.0; n_edge];
            for c in 0..dofs.n_cells {
                a[dofs.cell_v0(c, comp, 0)] = 1.0;
            }
            for e in 0..dofs.n_edges {
                b[dofs.edge_value(e, comp, 0)] = 1.0;
            }
            let norm = ((dofs.n_cells + dofs.n_edges) as f64).sqrt();
            a.iter_mut().chain(b.iter_mut()).for_each(|x| *x /= norm);
            (a, b)
        })
        .collect();

    let (mut min, mut max) = (f64::INFINITY, 0.0f64);
    let mut accepted = 0;
    let mut attempts = 0;
    while accepted < n_samples {
        attempts += 1;
        if attempts > 10 * n_samples {
            return Err(WgError::Internal("random fields kept landing in the kernel".into()));
        }
        let mut interior: Vec<f64> = (0..n_interior).map(|_| rng.random_range(-bound..bound)).collect();
        let mut edges: Vec<f64> = (0..n_edge).map(|_| rng.random_range(-bound..bound)).collect();
        for (ka, kb) in &kernel {
            let proj: f64 = interior.iter().zip(ka).chain(edges.iter().zip(kb)).map(|(x, y)| x * y).sum();
            interior.iter_mut().zip(ka).for_each(|(x, y)| *x -= proj * y);
            edges.iter_mut().zip(kb).for_each(|(x, y)| *x -= proj * y);
        }
        let norm: f64 = interior.iter().chain(&edges).map(|x| x * x).sum::<f64>().sqrt();
        interior.iter_mut().chain(edges.iter_mut()).for_each(|x| *x /= norm);
        let field = WeakField { k, interior, edges };
        let (energy, h1n) = (0..mesh.cells.len())
            .into_par_iter()
            .map(|c| {
                let v = field.local(mesh, &dofs, c);
                (v.dot(&(&stiffness[c] * &v)), v.dot(&(&h1[c] * &v)))
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        if h1n <= 1e-24 {
            continue;
        }
        let ratio = (energy.max(0.0) / h1n).sqrt();
        min = min.min(ratio);
        max = max.max(ratio);
        accepted += 1;
    }
    Ok(NormRatioStats { n: mesh_subdivisions(mesh), h: mesh.h, samples: accepted, min, max })
}

fn mesh_subdivisions(mesh: &PolyMesh) -> usize {
    (2f64.sqrt() / mesh.h).round() as usize
}

/// Largest velocity space the dense inf-sup probe accepts.
pub const INFSUP_MAX_VELOCITY_DOFS: usize = 6000;

#[derive(Clone, Debug, Serialize)]
pub struct InfSupResult {
    pub n: usize,
    pub h: f64,
    pub beta: f64,
    /// Smallest eigenvalue including the constant pressure mode (should be ~0).
    pub with_constant_mode: f64,
}

/// Discrete inf-sup constant: square root of the smallest eigenvalue of
/// `B A^{-1} B^T` relative to the pressure mass matrix, on zero-mean pressures.
pub fn probe_infsup(mesh: &PolyMesh, k: usize) -> Result<InfSupResult> {
    let dofs = DofMap::new(mesh, k)?;
    if dofs.n_u > INFSUP_MAX_VELOCITY_DOFS {
        return Err(WgError::ProbeTooLarge { dofs: dofs.n_u, limit: INFSUP_MAX_VELOCITY_DOFS });
    }
    let system = crate::assembly::assemble(mesh, k, &crate::assembly::ZeroData, &OperatorCache::new(k))?;
    let (n_u, n_p) = (dofs.n_u, dofs.n_p);
    let a = system.dense_block(0..n_u, 0..n_u);
    let b = system.dense_block(n_u..n_u + n_p, 0..n_u);
    let chol = a
        .cholesky()
        .ok_or_else(|| WgError::SingularSystem("velocity block is not positive definite".into()))?;
    let schur = &b * chol.solve(&b.transpose());

    let dp = dofs.dim_pressure;
    let mut mass = DMatrix::zeros(n_p, n_p);
    for c in 0..mesh.cells.len() {
        let h2 = mesh.cells[c].diameter.powi(2);
        for i in 0..dp {
            for j in 0..dp {
                mass[(c * dp + i, c * dp + j)] = h2 * system.ops[c].mass_pressure[(i, j)];
            }
        }
    }
    let lm = mass
        .cholesky()
        .ok_or_else(|| WgError::ConditioningFailure("pressure mass matrix is not positive definite".into()))?
        .l();
    let linv = lm
        .clone()
        .try_inverse()
        .ok_or_else(|| WgError::ConditioningFailure("pressure mass factor is singular".into()))?;
    let c = &linv * schur * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;

    let with_constant_mode = c.clone().symmetric_eigenvalues().min();

    // Constant pressure in the transformed variables: y = L^T 1.
    let mut ones = DVector::zeros(n_p);
    for cell in 0..mesh.cells.len() {
        ones[cell * dp] = 1.0;
    }
    let mut y = lm.transpose() * ones;
    y /= y.norm();
    let p = DMatrix::identity(n_p, n_p) - &y * y.transpose();
    let deflated = &p * c * &p;
    // The deflated direction contributes one zero eigenvalue; shift it out of the way.
    let shifted = deflated + &y * y.transpose() * 1e6;
    let lambda = shifted.symmetric_eigenvalues().min();
    Ok(InfSupResult { n: mesh_subdivisions(mesh), h: mesh.h, beta: lambda.max(0.0).sqrt(), with_constant_mode })
}
