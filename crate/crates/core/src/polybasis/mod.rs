//! Polynomial bases on cells and edges.
//!
//! Cell polynomials use scaled monomials `((x - x_T) / h_T)^a ((y - y_T) / h_T)^b`
//! in graded order (`1, x, y, x^2, xy, y^2, ...`). Edge polynomials are Legendre
//! polynomials of the parameter `t in [-1, 1]` running from the edge's first
//! endpoint to its second.

mod ortho;
mod quadrature;

pub use ortho::OrthoBasis;
pub use quadrature::{
    cell_quadrature, edge_quadrature, gauss_legendre, polygon_quadrature, triangle_quadrature,
    triangulate, QuadratureRule,
};

use nalgebra::{DMatrix, Vector2};

use crate::mesh::Vertex2;

/// Dimension of the polynomials of total degree at most `m` in two variables.
pub const fn dim_pm(m: usize) -> usize {
    (m + 1) * (m + 2) / 2
}

/// Exponent pairs `(a, b)` of the monomials `x^a y^b` of degree at most `m`, graded.
pub fn exponents(m: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(dim_pm(m));
    for d in 0..=m {
        for b in 0..=d {
            out.push((d - b, b));
        }
    }
    out
}

/// Scaled monomial basis of `P_m(T)` centered at `center` with length scale `scale`.
#[derive(Clone, Debug)]
pub struct ScaledMonomials {
    pub degree: usize,
    pub center: Vertex2,
    pub scale: f64,
    exps: Vec<(usize, usize)>,
}

impl ScaledMonomials {
    pub fn new(degree: usize, center: Vertex2, scale: f64) -> Self {
        ScaledMonomials { degree, center, scale, exps: exponents(degree) }
    }

    pub fn dim(&self) -> usize {
        self.exps.len()
    }

    pub fn exponents(&self) -> &[(usize, usize)] {
        &self.exps
    }

    fn powers(&self, p: &Vertex2) -> (Vec<f64>, Vec<f64>) {
        let xi = (p.x - self.center.x) / self.scale;
        let eta = (p.y - self.center.y) / self.scale;
        let mut px = vec![1.0; self.degree + 1];
        let mut py = vec![1.0; self.degree + 1];
        for i in 1..=self.degree {
            px[i] = px[i - 1] * xi;
            py[i] = py[i - 1] * eta;
        }
        (px, py)
    }

    /// Values of every basis function at one point.
    pub fn eval_point(&self, p: &Vertex2, out: &mut [f64]) {
        let (px, py) = self.powers(p);
        for (o, &(a, b)) in out.iter_mut().zip(&self.exps) {
            *o = px[a] * py[b];
        }
    }

    /// `values[(i, j)]` is basis function `j` at point `i`.
    pub fn eval(&self, points: &[Vertex2]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(points.len(), self.dim());
        let mut row = vec![0.0; self.dim()];
        for (i, p) in points.iter().enumerate() {
            self.eval_point(p, &mut row);
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    /// Physical gradient of every basis function at one point, including the `1 / h_T` factor.
    pub fn grad_point(&self, p: &Vertex2, out: &mut [Vector2<f64>]) {
        let (px, py) = self.powers(p);
        let s = 1.0 / self.scale;
        for (o, &(a, b)) in out.iter_mut().zip(&self.exps) {
            let dx = if a > 0 { a as f64 * px[a - 1] * py[b] } else { 0.0 };
            let dy = if b > 0 { b as f64 * px[a] * py[b - 1] } else { 0.0 };
            *o = Vector2::new(dx * s, dy * s);
        }
    }

    /// Gradients at all points: `(d/dx, d/dy)`, each shaped like [`ScaledMonomials::eval`].
    pub fn eval_grad(&self, points: &[Vertex2]) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut gx = DMatrix::zeros(points.len(), self.dim());
        let mut gy = DMatrix::zeros(points.len(), self.dim());
        let mut row = vec![Vector2::zeros(); self.dim()];
        for (i, p) in points.iter().enumerate() {
            self.grad_point(p, &mut row);
            for (j, g) in row.iter().enumerate() {
                gx[(i, j)] = g.x;
                gy[(i, j)] = g.y;
            }
        }
        (gx, gy)
    }

    /// Evaluate `sum_j coeffs[j] * phi_j(p)`.
    pub fn eval_combination(&self, coeffs: &[f64], p: &Vertex2) -> f64 {
        let (px, py) = self.powers(p);
        coeffs.iter().zip(&self.exps).map(|(c, &(a, b))| c * px[a] * py[b]).sum()
    }
}

/// Legendre basis of `P_k(e)` on the segment `a -> b`.
#[derive(Clone, Copy, Debug)]
pub struct EdgeBasis {
    pub degree: usize,
    pub a: Vertex2,
    pub b: Vertex2,
}

impl EdgeBasis {
    pub fn new(degree: usize, a: Vertex2, b: Vertex2) -> Self {
        EdgeBasis { degree, a, b }
    }

    pub fn dim(&self) -> usize {
        self.degree + 1
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }

    /// Parameter `t in [-1, 1]` of the orthogonal projection of `p` onto the segment.
    pub fn param(&self, p: &Vertex2) -> f64 {
        let d = self.b - self.a;
        2.0 * (p - self.a).dot(&d) / d.norm_squared() - 1.0
    }

    pub fn eval_param(&self, t: f64, out: &mut [f64]) {
        legendre(t, out);
    }

    pub fn eval_point(&self, p: &Vertex2, out: &mut [f64]) {
        legendre(self.param(p), out);
    }

    pub fn eval(&self, points: &[Vertex2]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(points.len(), self.dim());
        let mut row = vec![0.0; self.dim()];
        for (i, p) in points.iter().enumerate() {
            self.eval_point(p, &mut row);
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    /// `int_e P_i P_j ds = delta_ij * |e| / (2j + 1)`.
    pub fn mass_diagonal(&self) -> Vec<f64> {
        let len = self.length();
        (0..=self.degree).map(|j| len / (2 * j + 1) as f64).collect()
    }
}

/// Legendre polynomials `P_0..P_{n-1}` at `t`, written into `out`.
pub fn legendre(t: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = t;
    }
    for n in 2..out.len() {
        let nf = n as f64;
        out[n] = ((2.0 * nf - 1.0) * t * out[n - 1] - (nf - 1.0) * out[n - 2]) / nf;
    }
}

/// Mass matrix `int_T phi_i phi_j` of a scaled monomial basis under `rule`.
pub fn mass_matrix(basis: &ScaledMonomials, rule: &QuadratureRule) -> DMatrix<f64> {
    let v = basis.eval(&rule.points);
    let mut wv = v.clone();
    for (i, w) in rule.weights.iter().enumerate() {
        wv.row_mut(i).scale_mut(*w);
    }
    let m = v.transpose() * wv;
    (&m + m.transpose()) * 0.5
}

/// 2-norm condition number of a symmetric positive definite matrix.
pub fn spd_condition(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigenvalues();
    let max = eig.max();
    let min = eig.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
