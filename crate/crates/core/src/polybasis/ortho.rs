use nalgebra::{DMatrix, Vector2};

use super::{dim_pm, exponents, QuadratureRule};
use crate::error::{Result, WgError};
use crate::mesh::Vertex2;

/// Orthonormal basis of `P_m(T)` generated by an Arnoldi-style recurrence.
///
/// Function `n` is the scaled coordinate times an earlier function, made orthogonal
/// to all earlier ones (two Gram-Schmidt passes) under the quadrature inner product,
/// then normalized. The recurrence coefficients are stored, so values and gradients
/// at new points are produced by replaying the recurrence instead of expanding in
/// monomials, which stays accurate at the high degrees the weak operators need.
/// Replaying the recurrence reproduces the Gram-Schmidt values only up to
/// roundoff amplified by the small normalizers, so a final upper triangular
/// correction (from a Cholesky factor of the replayed Gram matrix) restores
/// orthonormality on the quadrature rule to machine precision.
#[derive(Clone, Debug)]
pub struct OrthoBasis {
    degree: usize,
    center: Vertex2,
    scale: f64,
    /// `(parent, axis)` for every function after the constant one.
    parents: Vec<(usize, usize)>,
    coeffs: Vec<Vec<f64>>,
    norms: Vec<f64>,
    constant: f64,
    /// `T = L^{-T}` for the Cholesky factor `L` of the replayed Gram matrix.
    correction: DMatrix<f64>,
}

impl OrthoBasis {
    /// Orthonormalize against the inner product defined by `rule`, which must be exact
    /// to degree `2 * degree` for the result to be orthonormal in `L^2(T)`.
    pub fn new(degree: usize, center: Vertex2, scale: f64, rule: &QuadratureRule) -> Result<Self> {
        let dim = dim_pm(degree);
        let npts = rule.len();
        let w = &rule.weights;
        let xi: [Vec<f64>; 2] = [
            rule.points.iter().map(|p| (p.x - center.x) / scale).collect(),
            rule.points.iter().map(|p| (p.y - center.y) / scale).collect(),
        ];
        let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).zip(w).map(|((a, b), w)| a * b * w).sum() };

        let measure: f64 = w.iter().sum();
        if measure <= 0.0 {
            return Err(WgError::ConditioningFailure("quadrature rule has no mass".into()));
        }
        let constant = 1.0 / measure.sqrt();
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(dim);
        values.push(vec![constant; npts]);

        let mut parents = Vec::with_capacity(dim);
        let mut coeffs = Vec::with_capacity(dim);
        let mut norms = Vec::with_capacity(dim);
        parents.push((0, 0));
        coeffs.push(Vec::new());
        norms.push(1.0);

        for (n, &(a, b)) in exponents(degree).iter().enumerate().skip(1) {
            let (parent, axis) = if a > 0 { (index_of(a - 1, b), 0) } else { (index_of(0, b - 1), 1) };
            let mut v: Vec<f64> = values[parent].iter().zip(&xi[axis]).map(|(q, x)| q * x).collect();
            let before = dot(&v, &v).sqrt();
            let mut c = vec![0.0; n];
            for _ in 0..2 {
                for (j, q) in values.iter().enumerate() {
                    let proj = dot(&v, q);
                    c[j] += proj;
                    for (vi, qi) in v.iter_mut().zip(q) {
                        *vi -= proj * qi;
                    }
                }
            }
            let norm = dot(&v, &v).sqrt();
            if !(norm > 1e-13 * before) {
                return Err(WgError::ConditioningFailure(format!(
                    "orthonormal basis of degree {degree} broke down at function {n}"
                )));
            }
            v.iter_mut().for_each(|x| *x /= norm);
            values.push(v);
            parents.push((parent, axis));
            coeffs.push(c);
            norms.push(norm);
        }
        let mut basis = OrthoBasis { degree, center, scale, parents, coeffs, norms, constant, correction: DMatrix::identity(dim, dim) };
        let phi = basis.eval(&rule.points);
        let mut wphi = phi.clone();
        for (i, w) in rule.weights.iter().enumerate() {
            wphi.row_mut(i).scale_mut(*w);
        }
        let gram = phi.transpose() * wphi;
        let gram = (&gram + gram.transpose()) * 0.5;
        let l = gram
            .cholesky()
            .ok_or_else(|| WgError::ConditioningFailure(format!("Gram matrix of degree {degree} is not positive definite")))?
            .l();
        let linv = l
            .solve_lower_triangular(&DMatrix::identity(dim, dim))
            .ok_or_else(|| WgError::ConditioningFailure("singular Gram factor".into()))?;
        basis.correction = linv.transpose();
        Ok(basis)
    }

    /// `out[j] <- sum_{i <= j} out[i] T[i][j]`, in place (descending `j`).
    fn correct<T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>>(&self, out: &mut [T]) {
        for j in (0..out.len()).rev() {
            let mut acc = out[j] * self.correction[(j, j)];
            for i in 0..j {
                acc = acc + out[i] * self.correction[(i, j)];
            }
            out[j] = acc;
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.norms.len()
    }

    pub fn eval_point(&self, p: &Vertex2, out: &mut [f64]) {
        let xi = [(p.x - self.center.x) / self.scale, (p.y - self.center.y) / self.scale];
        out[0] = self.constant;
        for n in 1..self.dim() {
            let (parent, axis) = self.parents[n];
            let mut v = xi[axis] * out[parent];
            for (c, q) in self.coeffs[n].iter().zip(&out[..n]) {
                v -= c * q;
            }
            out[n] = v / self.norms[n];
        }
        self.correct(out);
    }

    /// Values and gradients at one point.
    pub fn eval_grad_point(&self, p: &Vertex2, vals: &mut [f64], grads: &mut [Vector2<f64>]) {
        let xi = [(p.x - self.center.x) / self.scale, (p.y - self.center.y) / self.scale];
        let ds = 1.0 / self.scale;
        vals[0] = self.constant;
        grads[0] = Vector2::zeros();
        for n in 1..self.dim() {
            let (parent, axis) = self.parents[n];
            let mut v = xi[axis] * vals[parent];
            let mut g = grads[parent] * xi[axis];
            g[axis] += ds * vals[parent];
            for (j, c) in self.coeffs[n].iter().enumerate() {
                v -= c * vals[j];
                g -= grads[j] * *c;
            }
            vals[n] = v / self.norms[n];
            grads[n] = g / self.norms[n];
        }
        self.correct(vals);
        self.correct(grads);
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

    /// Gradients at all points as `(d/dx, d/dy)`.
    pub fn eval_grad(&self, points: &[Vertex2]) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut gx = DMatrix::zeros(points.len(), self.dim());
        let mut gy = DMatrix::zeros(points.len(), self.dim());
        let mut vals = vec![0.0; self.dim()];
        let mut grads = vec![Vector2::zeros(); self.dim()];
        for (i, p) in points.iter().enumerate() {
            self.eval_grad_point(p, &mut vals, &mut grads);
            for (j, g) in grads.iter().enumerate() {
                gx[(i, j)] = g.x;
                gy[(i, j)] = g.y;
            }
        }
        (gx, gy)
    }
}

/// Position of `x^a y^b` in the graded ordering.
fn index_of(a: usize, b: usize) -> usize {
    let d = a + b;
    d * (d + 1) / 2 + b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polybasis::{cell_quadrature, ScaledMonomials};
    use approx::assert_relative_eq;

    fn l_octagon() -> Vec<Vertex2> {
        [(0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (1.0, 0.5), (0.5, 0.5), (0.5, 1.0), (0.0, 1.0), (0.0, 0.5)]
            .map(|(x, y)| Vertex2::new(x, y))
            .to_vec()
    }

    fn gram(basis: &OrthoBasis, rule: &QuadratureRule) -> DMatrix<f64> {
        let v = basis.eval(&rule.points);
        let mut wv = v.clone();
        for (i, w) in rule.weights.iter().enumerate() {
            wv.row_mut(i).scale_mut(*w);
        }
        v.transpose() * wv
    }

    #[test]
    fn orthonormal_at_high_degree_on_nonconvex_cell() {
        let pts = l_octagon();
        let c = Vertex2::new(5.0 / 12.0, 5.0 / 12.0);
        let degree = 17;
        let rule = cell_quadrature(&pts, false, 2 * degree + 2).unwrap();
        let basis = OrthoBasis::new(degree, c, 2f64.sqrt(), &rule).unwrap();
        assert_eq!(basis.dim(), dim_pm(degree));
        let g = gram(&basis, &rule);
        let err = (g - DMatrix::identity(basis.dim(), basis.dim())).amax();
        assert!(err < 1e-11, "orthonormality defect {err:e}");
    }

    #[test]
    fn spans_the_monomials() {
        // Project each scaled monomial onto the orthonormal basis; the residual must vanish.
        let pts = l_octagon();
        let c = Vertex2::new(5.0 / 12.0, 5.0 / 12.0);
        let degree = 6;
        let rule = cell_quadrature(&pts, false, 2 * degree + 2).unwrap();
        let basis = OrthoBasis::new(degree, c, 2f64.sqrt(), &rule).unwrap();
        let mono = ScaledMonomials::new(degree, c, 2f64.sqrt());
        let q = basis.eval(&rule.points);
        let m = mono.eval(&rule.points);
        for j in 0..mono.dim() {
            let col = m.column(j);
            let coef: Vec<f64> = (0..basis.dim())
                .map(|s| (0..rule.len()).map(|i| rule.weights[i] * col[i] * q[(i, s)]).sum())
                .collect();
            let resid: f64 = (0..rule.len())
                .map(|i| {
                    let approx: f64 = (0..basis.dim()).map(|s| coef[s] * q[(i, s)]).sum();
                    rule.weights[i] * (col[i] - approx).powi(2)
                })
                .sum();
            assert!(resid.sqrt() < 1e-12, "monomial {j} residual {resid:e}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let pts = l_octagon();
        let c = Vertex2::new(5.0 / 12.0, 5.0 / 12.0);
        let rule = cell_quadrature(&pts, false, 12).unwrap();
        let basis = OrthoBasis::new(5, c, 2f64.sqrt(), &rule).unwrap();
        let p = Vertex2::new(0.3, 0.2);
        let h = 1e-6;
        let (gx, gy) = basis.eval_grad(&[p]);
        let fx = (basis.eval(&[Vertex2::new(p.x + h, p.y)]) - basis.eval(&[Vertex2::new(p.x - h, p.y)])) / (2.0 * h);
        let fy = (basis.eval(&[Vertex2::new(p.x, p.y + h)]) - basis.eval(&[Vertex2::new(p.x, p.y - h)])) / (2.0 * h);
        for j in 0..basis.dim() {
            assert_relative_eq!(gx[(0, j)], fx[(0, j)], epsilon = 1e-6);
            assert_relative_eq!(gy[(0, j)], fy[(0, j)], epsilon = 1e-6);
        }
    }
}
