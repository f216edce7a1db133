use crate::error::{Result, WgError};
use crate::mesh::{cell_geometry, cross, Vertex2};

/// Points and positive weights integrating polynomials up to `degree` exactly.
#[derive(Clone, Debug, Default)]
pub struct QuadratureRule {
    pub points: Vec<Vertex2>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate<F: Fn(&Vertex2) -> f64>(&self, f: F) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }

    /// Affine image `x -> origin + scale * x`; weights scale by `scale^dim`.
    pub fn mapped(&self, origin: Vertex2, scale: f64, dim: i32) -> QuadratureRule {
        let ws = scale.powi(dim);
        QuadratureRule {
            points: self.points.iter().map(|p| Vertex2::from(origin.coords + p.coords * scale)).collect(),
            weights: self.weights.iter().map(|w| w * ws).collect(),
            degree: self.degree,
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, exact to degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Newton on P_n from the Tricomi-style initial guess.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            dp = nf * (z * p1 - p2) / (z * z - 1.0);
            let step = p1 / dp;
            z -= step;
            if step.abs() <= 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss-Legendre rule on the segment `a -> b` exact to degree `q`.
pub fn edge_quadrature(a: Vertex2, b: Vertex2, q: usize) -> QuadratureRule {
    let n = (q + 2) / 2;
    let (t, w) = gauss_legendre(n);
    let half = 0.5 * (b - a).norm();
    QuadratureRule {
        points: t.iter().map(|t| Vertex2::from(a.coords + (b - a) * (0.5 * (t + 1.0)))).collect(),
        weights: w.iter().map(|w| w * half).collect(),
        degree: q,
    }
}

/// Collapsed (Duffy) Gauss rule on a triangle, exact to degree `q`.
pub fn triangle_quadrature(tri: [Vertex2; 3], q: usize) -> QuadratureRule {
    let mut rule = QuadratureRule { degree: q, ..Default::default() };
    push_triangle(&mut rule, tri, q);
    rule
}

fn push_triangle(rule: &mut QuadratureRule, [a, b, c]: [Vertex2; 3], q: usize) {
    // x = a + s ((1 - t)(b - a) + t (c - a)); the Jacobian 2|T| s adds one degree in s.
    let twice_area = cross(b - a, c - a);
    let (ts, ws) = gauss_legendre((q + 3) / 2);
    let (tt, wt) = gauss_legendre((q + 2) / 2);
    for (si, wsi) in ts.iter().zip(&ws) {
        let s = 0.5 * (si + 1.0);
        for (ti, wti) in tt.iter().zip(&wt) {
            let t = 0.5 * (ti + 1.0);
            let p = a + ((b - a) * (1.0 - t) + (c - a) * t) * s;
            rule.points.push(p);
            rule.weights.push(0.25 * wsi * wti * twice_area * s);
        }
    }
}

/// Split a counter-clockwise polygon into triangles: a fan from the centroid for
/// convex polygons, ear clipping otherwise.
pub fn triangulate(points: &[Vertex2], convex: bool) -> Result<Vec<[Vertex2; 3]>> {
    let geom = cell_geometry(points)?;
    if convex {
        let n = points.len();
        return Ok((0..n).map(|i| [geom.centroid, points[i], points[(i + 1) % n]]).collect());
    }
    ear_clip(points, geom.diameter)
}

fn ear_clip(points: &[Vertex2], diameter: f64) -> Result<Vec<[Vertex2; 3]>> {
    let tol = 1e-12 * diameter * diameter;
    let mut ring: Vec<usize> = (0..points.len()).collect();
    let mut out = Vec::with_capacity(points.len() - 2);
    while ring.len() > 3 {
        let n = ring.len();
        let ear = (0..n).find(|&i| {
            let (ia, ib, ic) = (ring[(i + n - 1) % n], ring[i], ring[(i + 1) % n]);
            let (a, b, c) = (points[ia], points[ib], points[ic]);
            if cross(b - a, c - b) <= tol {
                return false;
            }
            // No other remaining vertex inside the ear or on its closing diagonal.
            ring.iter().all(|&j| {
                if j == ia || j == ib || j == ic {
                    return true;
                }
                let p = points[j];
                let d1 = cross(b - a, p - a);
                let d2 = cross(c - b, p - b);
                let d3 = cross(a - c, p - c);
                !(d1 >= -tol && d2 >= -tol && d3 >= -tol)
            })
        });
        let Some(i) = ear else {
            return Err(WgError::Triangulation { cell: usize::MAX, reason: "no ear found".into() });
        };
        out.push([points[ring[(i + n - 1) % n]], points[ring[i]], points[ring[(i + 1) % n]]]);
        ring.remove(i);
    }
    let last = [points[ring[0]], points[ring[1]], points[ring[2]]];
    if cross(last[1] - last[0], last[2] - last[0]) <= tol {
        return Err(WgError::Triangulation { cell: usize::MAX, reason: "degenerate final triangle".into() });
    }
    out.push(last);
    Ok(out)
}

/// Quadrature over a polygon exact to degree `q`.
pub fn cell_quadrature(points: &[Vertex2], convex: bool, q: usize) -> Result<QuadratureRule> {
    polygon_quadrature(&triangulate(points, convex)?, q)
}

/// Quadrature over a union of triangles.
pub fn polygon_quadrature(triangles: &[[Vertex2; 3]], q: usize) -> Result<QuadratureRule> {
    let mut rule = QuadratureRule { degree: q, ..Default::default() };
    for tri in triangles {
        push_triangle(&mut rule, *tri, q);
    }
    Ok(rule)
}
