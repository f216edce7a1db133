//! Residuals of the weak-operator identities, shared by the property and acceptance tests.

#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use nalgebra::{DVector, Matrix2, Vector2};
use wg_stokes::polybasis::exponents;
use wg_stokes::weakops::{project_qb, CellFrame, LocalOperators, OperatorCache};
use wg_stokes::{MeshFamily, PolyMesh, Vertex2};

type Ops = Vec<Arc<LocalOperators>>;

/// Both families with their operators for degree `k`, built once per test binary.
pub fn meshes(k: usize) -> &'static [(PolyMesh, Ops)] {
    static CACHE: [OnceLock<Vec<(PolyMesh, Ops)>>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    CACHE[k - 1].get_or_init(|| {
        let cache = OperatorCache::new(k);
        [MeshFamily::Triangles, MeshFamily::NonconvexL]
            .into_iter()
            .map(|f| {
                let mesh = f.build(2).unwrap();
                let ops = cache.for_mesh(&mesh).unwrap();
                (mesh, ops)
            })
            .collect()
    })
}

pub fn max_dev(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

/// Global polynomial `u = sum c x^a y^b` per component with its derivatives.
struct GlobalPoly {
    exps: Vec<(usize, usize)>,
    coeffs: [Vec<f64>; 2],
}

impl GlobalPoly {
    fn new(degree: usize, raw: &[f64]) -> Self {
        let exps = exponents(degree);
        let d = exps.len();
        GlobalPoly { exps, coeffs: [raw[..d].to_vec(), raw[d..2 * d].to_vec()] }
    }

    fn value(&self, x: &Vertex2) -> Vector2<f64> {
        let f = |c: &[f64]| c.iter().zip(&self.exps).map(|(c, &(a, b))| c * x.x.powi(a as i32) * x.y.powi(b as i32)).sum();
        Vector2::new(f(&self.coeffs[0]), f(&self.coeffs[1]))
    }

    fn grad(&self, x: &Vertex2) -> Matrix2<f64> {
        let d = |c: &[f64], axis: usize| -> f64 {
            c.iter()
                .zip(&self.exps)
                .map(|(c, &(a, b))| {
                    let (p, q) = if axis == 0 { (a, b) } else { (b, a) };
                    let (s, t) = if axis == 0 { (x.x, x.y) } else { (x.y, x.x) };
                    if p == 0 {
                        0.0
                    } else {
                        c * p as f64 * s.powi(p as i32 - 1) * t.powi(q as i32)
                    }
                })
                .sum()
        };
        Matrix2::new(d(&self.coeffs[0], 0), d(&self.coeffs[0], 1), d(&self.coeffs[1], 0), d(&self.coeffs[1], 1))
    }
}

/// `{v0, vb}` with `v0` given exactly by scaled-monomial coefficients and `vb` its trace.
fn insert_local(mesh: &PolyMesh, cell: usize, op: &LocalOperators, raw: &[f64]) -> (DVector<f64>, impl Fn(&Vertex2) -> Vector2<f64>) {
    let l = op.layout;
    let frame = CellFrame::of(&mesh.cells[cell]);
    let mono = frame.monomials(l.k);
    let cx = raw[..l.dim_pk].to_vec();
    let cy = raw[l.dim_pk..2 * l.dim_pk].to_vec();
    let u = move |x: &Vertex2| Vector2::new(mono.eval_combination(&cx, x), mono.eval_combination(&cy, x));
    let mut v = DVector::zeros(l.n_velocity());
    for comp in 0..2 {
        for a in 0..l.dim_pk {
            v[l.v0(comp, a)] = raw[comp * l.dim_pk + a];
        }
    }
    let pts = mesh.cell_points(cell);
    let n = pts.len();
    for e in 0..n {
        let qb = project_qb(pts[e], pts[(e + 1) % n], l.k, &u);
        v.rows_mut(l.vb(e, 0, 0), l.n_vb_per_edge()).copy_from(&qb);
    }
    (v, u)
}

/// Gradient of the local polynomial with scaled-monomial coefficients `raw`.
fn local_grad(frame: &CellFrame, k: usize, raw: &[f64], x: &Vertex2) -> Matrix2<f64> {
    let mono = frame.monomials(k);
    let d = mono.dim();
    let mut g = vec![Vector2::zeros(); d];
    mono.grad_point(x, &mut g);
    let gx: Vector2<f64> = g.iter().zip(&raw[..d]).map(|(g, c)| g * *c).sum();
    let gy: Vector2<f64> = g.iter().zip(&raw[d..2 * d]).map(|(g, c)| g * *c).sum();
    Matrix2::new(gx.x, gx.y, gy.x, gy.y)
}

/// Largest pro1 and pro2 deviations over every cell, for the local polynomial with
/// scaled-monomial coefficients `raw` (length `2 dim P_k`).
pub fn pro1_pro2(k: usize, raw: &[f64]) -> (f64, f64) {
    let (mut g_dev, mut d_dev) = (0.0f64, 0.0f64);
    for (mesh, ops) in meshes(k) {
        for c in 0..mesh.cells.len() {
            let frame = CellFrame::of(&mesh.cells[c]);
            let op = &ops[c];
            let (v, _) = insert_local(mesh, c, op, raw);
            let grad = |x: &Vertex2| local_grad(&frame, k, raw, x);
            let wg = op.apply_weak_gradient(&v);
            let expected = op.project_qh_tensor(&frame, grad);
            for (a, b) in wg.iter().zip(&expected) {
                g_dev = g_dev.max(max_dev(a, b));
            }
            let wd = op.apply_weak_divergence(&v);
            let div = op.project_qh_scalar(&frame, |x| grad(x).trace());
            d_dev = d_dev.max(max_dev(&wd, &div));
        }
    }
    (g_dev, d_dev)
}

/// Largest pro3 deviation over every cell for the global polynomial of `degree` with
/// coefficients `raw`: in all of `P_r` when `degree <= k`, and against the pressure space always.
pub fn pro3(k: usize, degree: usize, raw: &[f64]) -> f64 {
    let u = GlobalPoly::new(degree, raw);
    let mut dev = 0.0f64;
    for (mesh, ops) in meshes(k) {
        for c in 0..mesh.cells.len() {
            let frame = CellFrame::of(&mesh.cells[c]);
            let op = &ops[c];
            let v = op.interpolate(&frame, |x| u.value(x)).unwrap();
            if degree <= k {
                // Q_h u = u here, so the identity holds in all of P_r.
                let wd = op.apply_weak_divergence(&v);
                let div = op.project_qh_scalar(&frame, |x| u.grad(x).trace());
                dev = dev.max(max_dev(&wd, &div));
                let wg = op.apply_weak_gradient(&v);
                let g = op.project_qh_tensor(&frame, |x| u.grad(x));
                for (a, b) in wg.iter().zip(&g) {
                    dev = dev.max(max_dev(a, b));
                }
            }
            // Tested against the pressure space the identity holds for any smooth u.
            let bv = op.divergence_block(&frame) * &v;
            let mono = frame.monomials(k - 1);
            let rule = op.physical_rule(&frame);
            let mut m = vec![0.0; mono.dim()];
            let mut expected = DVector::zeros(mono.dim());
            for (x, w) in rule.points.iter().zip(&rule.weights) {
                mono.eval_point(x, &mut m);
                let d = u.grad(x).trace();
                for (e, mv) in expected.iter_mut().zip(&m) {
                    *e += w * d * mv;
                }
            }
            dev = dev.max(max_dev(&bv, &expected));
        }
    }
    dev
}
