//! Polygonal meshes of the unit square.
//!
//! Cells are stored counter-clockwise. Edges are globally unique; each edge
//! keeps the cells that share it together with the outward unit normal seen
//! from each of them. Consecutive collinear edges are allowed and each one
//! counts toward the edge number `N` of a cell.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, WgError};

/// Absolute tolerance for geometric predicates on unit-scale coordinates.
pub const GEOM_TOL: f64 = 1e-12;

pub type Vertex2 = Point2<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeshFamily {
    /// Uniform squares split along the same diagonal.
    #[serde(rename = "tri")]
    Triangles,
    /// Squares split into an L-shaped cell with one reflex corner and a small square.
    NonconvexL,
    Custom,
}

impl MeshFamily {
    pub fn tag(self) -> &'static str {
        match self {
            MeshFamily::Triangles => "tri",
            MeshFamily::NonconvexL => "nonconvex-l",
            MeshFamily::Custom => "custom",
        }
    }

    /// Build the member of this family with `n` subdivisions per side.
    pub fn build(self, n: usize) -> Result<PolyMesh> {
        match self {
            MeshFamily::Triangles => PolyMesh::uniform_triangles(n),
            MeshFamily::NonconvexL => PolyMesh::nonconvex_l(n),
            MeshFamily::Custom => Err(WgError::InvalidArgument(
                "the custom family has no generator".into(),
            )),
        }
    }
}

impl std::str::FromStr for MeshFamily {
    type Err = WgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tri" | "triangles" => Ok(MeshFamily::Triangles),
            "nonconvex-l" | "l" => Ok(MeshFamily::NonconvexL),
            "custom" => Ok(MeshFamily::Custom),
            other => Err(WgError::InvalidArgument(format!("unknown mesh family `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellGeometry {
    pub area: f64,
    pub centroid: Vertex2,
    pub diameter: f64,
}

/// Area (shoelace), centroid and diameter of a polygon given counter-clockwise.
///
/// Fails with [`WgError::DegenerateCell`] when the signed area is not above 1e-14.
/// The reported cell index is `usize::MAX`; callers that know the index re-tag it.
pub fn cell_geometry(points: &[Vertex2]) -> Result<CellGeometry> {
    let n = points.len();
    if n < 3 {
        return Err(WgError::DegenerateCell { cell: usize::MAX, area: 0.0 });
    }
    // Shift to the first vertex so the shoelace sums do not cancel for small cells.
    let o = points[0];
    let mut twice_area = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let p = points[i] - o;
        let q = points[(i + 1) % n] - o;
        let cross = p.x * q.y - q.x * p.y;
        twice_area += cross;
        cx += (p.x + q.x) * cross;
        cy += (p.y + q.y) * cross;
    }
    let area = 0.5 * twice_area;
    if area <= 1e-14 {
        return Err(WgError::DegenerateCell { cell: usize::MAX, area });
    }
    let centroid = Vertex2::new(o.x + cx / (6.0 * area), o.y + cy / (6.0 * area));
    let mut diameter: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            diameter = diameter.max((points[i] - points[j]).norm());
        }
    }
    Ok(CellGeometry { area, centroid, diameter })
}

/// True when no turn of the counter-clockwise boundary is clockwise beyond [`GEOM_TOL`].
pub fn is_convex(points: &[Vertex2]) -> bool {
    let n = points.len();
    (0..n).all(|i| {
        let a = points[(i + n - 1) % n];
        let b = points[i];
        let c = points[(i + 1) % n];
        cross(b - a, c - b) >= -GEOM_TOL
    })
}

#[inline]
pub(crate) fn cross(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Outward normal of the directed boundary segment `a -> b` of a counter-clockwise cell.
#[inline]
pub fn outward_normal(a: Vertex2, b: Vertex2) -> Vector2<f64> {
    let t = (b - a).normalize();
    Vector2::new(t.y, -t.x)
}

#[derive(Clone, Debug)]
pub struct Cell {
    /// Counter-clockwise vertex ids.
    pub vertices: Vec<usize>,
    /// `edges[i]` joins `vertices[i]` and `vertices[i + 1]`.
    pub edges: Vec<usize>,
    pub area: f64,
    pub centroid: Vertex2,
    /// Diameter `h_T`.
    pub diameter: f64,
    pub convex: bool,
}

impl Cell {
    /// Number of edge segments `N`.
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }
}

#[derive(Clone, Debug)]
pub struct Edge {
    /// Global orientation: the edge is parameterized from `vertices[0]` to `vertices[1]`.
    pub vertices: [usize; 2],
    /// One cell for boundary edges, two for interior ones.
    pub cells: Vec<usize>,
    /// Outward unit normal with respect to `cells[i]`.
    pub normals: Vec<Vector2<f64>>,
    pub length: f64,
    pub boundary: bool,
}

#[derive(Clone, Debug)]
pub struct PolyMesh {
    pub vertices: Vec<Vertex2>,
    pub cells: Vec<Cell>,
    pub edges: Vec<Edge>,
    /// Mesh size, the largest cell diameter.
    pub h: f64,
    pub family: MeshFamily,
    /// Subdivisions per side of the generating square grid.
    pub level: usize,
}

impl PolyMesh {
    /// Assemble a mesh from counter-clockwise polygons, deriving the edge topology.
    pub fn from_polygons(
        vertices: Vec<Vertex2>,
        polygons: Vec<Vec<usize>>,
        family: MeshFamily,
        level: usize,
    ) -> Result<Self> {
        let mut edges: Vec<Edge> = Vec::new();
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut cells = Vec::with_capacity(polygons.len());

        for (ci, poly) in polygons.into_iter().enumerate() {
            if poly.iter().any(|&v| v >= vertices.len()) {
                return Err(WgError::InvalidArgument(format!(
                    "cell {ci} references a vertex out of range"
                )));
            }
            let pts: Vec<Vertex2> = poly.iter().map(|&v| vertices[v]).collect();
            let geom = cell_geometry(&pts).map_err(|e| match e {
                WgError::DegenerateCell { area, .. } => WgError::DegenerateCell { cell: ci, area },
                other => other,
            })?;
            let n = poly.len();
            let mut cell_edges = Vec::with_capacity(n);
            for i in 0..n {
                let (a, b) = (poly[i], poly[(i + 1) % n]);
                let key = (a.min(b), a.max(b));
                let normal = outward_normal(vertices[a], vertices[b]);
                let id = *lookup.entry(key).or_insert_with(|| {
                    edges.push(Edge {
                        vertices: [a, b],
                        cells: Vec::with_capacity(2),
                        normals: Vec::with_capacity(2),
                        length: (vertices[b] - vertices[a]).norm(),
                        boundary: false,
                    });
                    edges.len() - 1
                });
                edges[id].cells.push(ci);
                edges[id].normals.push(normal);
                cell_edges.push(id);
            }
            cells.push(Cell {
                convex: is_convex(&pts),
                vertices: poly,
                edges: cell_edges,
                area: geom.area,
                centroid: geom.centroid,
                diameter: geom.diameter,
            });
        }
        for (ei, e) in edges.iter_mut().enumerate() {
            match e.cells.len() {
                1 => e.boundary = true,
                2 => e.boundary = false,
                k => {
                    return Err(WgError::InvalidArgument(format!(
                        "edge {ei} is shared by {k} cells"
                    )))
                }
            }
        }
        let h = cells.iter().map(|c| c.diameter).fold(0.0, f64::max);
        Ok(PolyMesh { vertices, cells, edges, h, family, level })
    }

    /// `n x n` squares, each split along its lower-left to upper-right diagonal.
    pub fn uniform_triangles(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(WgError::InvalidArgument("need at least one subdivision per side".into()));
        }
        let step = 1.0 / n as f64;
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push(Vertex2::new(i as f64 * step, j as f64 * step));
            }
        }
        let mut polys = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                polys.push(vec![a, b, c]);
                polys.push(vec![a, c, d]);
            }
        }
        Self::from_polygons(vertices, polys, MeshFamily::Triangles, n)
    }

    /// `n x n` squares, each split into an L-shaped cell with a reflex corner at the
    /// square's center and the small upper-right square.
    ///
    /// Neighbouring squares meet the cut at side midpoints, so the left and bottom
    /// sides of every L cell receive a collinear midpoint vertex (except on the
    /// domain boundary). Interior L cells therefore have eight edges.
    pub fn nonconvex_l(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(WgError::InvalidArgument("need at least one subdivision per side".into()));
        }
        // Half-step lattice; only some lattice points are used.
        let m = 2 * n;
        let step = 1.0 / m as f64;
        let mut index = vec![usize::MAX; (m + 1) * (m + 1)];
        let mut vertices = Vec::new();
        let mut vid = |i: usize, j: usize, vertices: &mut Vec<Vertex2>| {
            let slot = &mut index[j * (m + 1) + i];
            if *slot == usize::MAX {
                *slot = vertices.len();
                vertices.push(Vertex2::new(i as f64 * step, j as f64 * step));
            }
            *slot
        };
        let mut polys = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (x, y) = (2 * i, 2 * j);
                let mut l = vec![vid(x, y, &mut vertices)];
                if j > 0 {
                    l.push(vid(x + 1, y, &mut vertices));
                }
                l.push(vid(x + 2, y, &mut vertices));
                l.push(vid(x + 2, y + 1, &mut vertices));
                l.push(vid(x + 1, y + 1, &mut vertices));
                l.push(vid(x + 1, y + 2, &mut vertices));
                l.push(vid(x, y + 2, &mut vertices));
                if i > 0 {
                    l.push(vid(x, y + 1, &mut vertices));
                }
                let sq = vec![
                    vid(x + 1, y + 1, &mut vertices),
                    vid(x + 2, y + 1, &mut vertices),
                    vid(x + 2, y + 2, &mut vertices),
                    vid(x + 1, y + 2, &mut vertices),
                ];
                polys.push(l);
                polys.push(sq);
            }
        }
        Self::from_polygons(vertices, polys, MeshFamily::NonconvexL, n)
    }

    pub fn cell_points(&self, cell: usize) -> Vec<Vertex2> {
        self.cells[cell].vertices.iter().map(|&v| self.vertices[v]).collect()
    }

    /// Whether cell `cell` traverses its `local`-th edge against the edge's global orientation.
    pub fn edge_reversed(&self, cell: usize, local: usize) -> bool {
        let c = &self.cells[cell];
        self.edges[c.edges[local]].vertices[0] != c.vertices[local]
    }

    pub fn total_area(&self) -> f64 {
        self.cells.iter().map(|c| c.area).sum()
    }

    pub fn n_interior_edges(&self) -> usize {
        self.edges.iter().filter(|e| !e.boundary).count()
    }

    /// The same mesh with cells listed in the order `order` (a permutation of cell ids).
    pub fn with_cell_order(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.cells.len()];
        if order.len() != self.cells.len() || order.iter().any(|&c| c >= seen.len() || std::mem::replace(&mut seen[c], true)) {
            return Err(WgError::InvalidArgument("cell order is not a permutation".into()));
        }
        let polys = order.iter().map(|&c| self.cells[c].vertices.clone()).collect();
        Self::from_polygons(self.vertices.clone(), polys, self.family, self.level)
    }

    /// Check every structural invariant and list the violations found.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        self.check_vertices(&mut report);
        self.check_cells(&mut report);
        self.check_edges(&mut report);
        self.check_hanging_nodes(&mut report);

        let total = self.total_area();
        if (total - 1.0).abs() > 1e-10 {
            report.push(ViolationKind::AreaSum, format!("cell areas sum to {total:.15}"));
        }
        let euler = self.vertices.len() as i64 - self.edges.len() as i64 + self.cells.len() as i64;
        if euler != 1 {
            report.push(ViolationKind::Euler, format!("V - E + C = {euler}"));
        }
        report
    }

    fn check_vertices(&self, report: &mut ValidationReport) {
        if let Some(i) = self.vertices.iter().position(|v| !v.x.is_finite() || !v.y.is_finite()) {
            report.push(ViolationKind::Vertex, format!("vertex {i} is not finite"));
        }
        let mut order: Vec<usize> = (0..self.vertices.len()).collect();
        order.sort_by(|&a, &b| self.vertices[a].x.total_cmp(&self.vertices[b].x));
        for (pos, &a) in order.iter().enumerate() {
            for &b in &order[pos + 1..] {
                let (pa, pb) = (self.vertices[a], self.vertices[b]);
                if pb.x - pa.x > GEOM_TOL {
                    break;
                }
                if (pb.y - pa.y).abs() <= GEOM_TOL {
                    report.push(ViolationKind::Vertex, format!("vertices {a} and {b} coincide"));
                }
            }
        }
    }

    fn check_cells(&self, report: &mut ValidationReport) {
        for (ci, cell) in self.cells.iter().enumerate() {
            let n = cell.vertices.len();
            if n < 3 || cell.edges.len() != n {
                report.push(ViolationKind::Cell, format!("cell {ci} has {n} vertices and {} edges", cell.edges.len()));
                continue;
            }
            let pts = self.cell_points(ci);
            match cell_geometry(&pts) {
                Ok(g) => {
                    if (g.area - cell.area).abs() > 1e-12 {
                        report.push(ViolationKind::Cell, format!("cell {ci} stores area {} but has {}", cell.area, g.area));
                    }
                }
                Err(_) => report.push(
                    ViolationKind::Orientation,
                    format!("cell {ci} is degenerate or clockwise"),
                ),
            }
            if is_convex(&pts) != cell.convex {
                report.push(ViolationKind::Cell, format!("cell {ci} has a wrong convexity flag"));
            }
            if !is_simple(&pts) {
                report.push(ViolationKind::Cell, format!("cell {ci} self-intersects"));
            }
            for (i, &e) in cell.edges.iter().enumerate() {
                let (a, b) = (cell.vertices[i], cell.vertices[(i + 1) % n]);
                let ev = self.edges.get(e).map(|e| e.vertices);
                if ev != Some([a, b]) && ev != Some([b, a]) {
                    report.push(ViolationKind::Topology, format!("cell {ci} local edge {i} does not join its vertices"));
                }
            }
        }
    }

    fn check_edges(&self, report: &mut ValidationReport) {
        for (ei, edge) in self.edges.iter().enumerate() {
            let expected = if edge.boundary { 1 } else { 2 };
            if edge.cells.len() != expected || edge.normals.len() != edge.cells.len() {
                report.push(
                    ViolationKind::Topology,
                    format!("edge {ei} has {} cells (boundary = {})", edge.cells.len(), edge.boundary),
                );
                continue;
            }
            let (a, b) = (self.vertices[edge.vertices[0]], self.vertices[edge.vertices[1]]);
            if ((b - a).norm() - edge.length).abs() > GEOM_TOL {
                report.push(ViolationKind::Topology, format!("edge {ei} has a wrong length"));
            }
            if edge.boundary && !on_unit_square_boundary(a, b) {
                report.push(ViolationKind::Topology, format!("boundary edge {ei} is inside the domain"));
            }
            for (&c, n) in edge.cells.iter().zip(&edge.normals) {
                let Some(local) = self.cells.get(c).and_then(|cell| cell.edges.iter().position(|&x| x == ei)) else {
                    report.push(ViolationKind::Topology, format!("edge {ei} lists cell {c} which does not own it"));
                    continue;
                };
                let cell = &self.cells[c];
                let (p, q) = (
                    self.vertices[cell.vertices[local]],
                    self.vertices[cell.vertices[(local + 1) % cell.vertices.len()]],
                );
                if (n.norm() - 1.0).abs() > 1e-12 {
                    report.push(ViolationKind::Normal, format!("edge {ei}: normal for cell {c} is not a unit vector"));
                } else if n.dot(&outward_normal(p, q)) < 1.0 - 1e-12 {
                    report.push(ViolationKind::Normal, format!("edge {ei}: normal not outward for cell {c}"));
                } else if cell.convex {
                    let mid = Vertex2::from((p.coords + q.coords) * 0.5);
                    if n.dot(&(mid - cell.centroid)) <= 0.0 {
                        report.push(ViolationKind::Normal, format!("edge {ei}: normal not outward for cell {c}"));
                    }
                }
            }
        }
    }

    fn check_hanging_nodes(&self, report: &mut ValidationReport) {
        // Bucket vertices on a grid of the mesh size, then test each edge against
        // the vertices in the buckets its bounding box touches.
        let cell_size = self.h.max(1e-6);
        let key = |p: Vertex2| ((p.x / cell_size).floor() as i64, (p.y / cell_size).floor() as i64);
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, &p) in self.vertices.iter().enumerate() {
            buckets.entry(key(p)).or_default().push(i);
        }
        for (ei, edge) in self.edges.iter().enumerate() {
            let (a, b) = (self.vertices[edge.vertices[0]], self.vertices[edge.vertices[1]]);
            let (lo, hi) = (key(Vertex2::new(a.x.min(b.x), a.y.min(b.y))), key(Vertex2::new(a.x.max(b.x), a.y.max(b.y))));
            for bx in lo.0..=hi.0 {
                for by in lo.1..=hi.1 {
                    for &v in buckets.get(&(bx, by)).into_iter().flatten() {
                        if v == edge.vertices[0] || v == edge.vertices[1] {
                            continue;
                        }
                        let p = self.vertices[v];
                        let t = (p - a).dot(&(b - a)) / edge.length.powi(2);
                        if t > GEOM_TOL && t < 1.0 - GEOM_TOL && cross(b - a, p - a).abs() <= GEOM_TOL * edge.length {
                            report.push(ViolationKind::Conformity, format!("vertex {v} hangs on edge {ei}"));
                        }
                    }
                }
            }
        }
    }

    /// Write the line-oriented text format (`VERTICES` and `CELLS` sections).
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let mut s = String::new();
        writeln!(s, "# wg-stokes polygonal mesh").ok();
        writeln!(s, "FAMILY {}", self.family.tag()).ok();
        writeln!(s, "LEVEL {}", self.level).ok();
        writeln!(s, "VERTICES {}", self.vertices.len()).ok();
        for v in &self.vertices {
            writeln!(s, "{:.17e} {:.17e}", v.x, v.y).ok();
        }
        writeln!(s, "CELLS {}", self.cells.len()).ok();
        for c in &self.cells {
            write!(s, "{}", c.vertices.len()).ok();
            for v in &c.vertices {
                write!(s, " {v}").ok();
            }
            s.push('\n');
        }
        writeln!(s, "END").ok();
        out.write_all(s.as_bytes())?;
        Ok(())
    }

    /// Read the format produced by [`PolyMesh::write_text`]. Edges are re-derived.
    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input
            .lines()
            .enumerate()
            .map(|(i, l)| l.map(|l| (i + 1, l)))
            .filter(|l| !matches!(l, Ok((_, s)) if s.trim().is_empty() || s.trim_start().starts_with('#')));
        let mut next = || -> Result<(usize, String)> {
            match lines.next() {
                Some(l) => Ok(l?),
                None => Err(WgError::MeshFormat { line: 0, message: "unexpected end of input".into() }),
            }
        };
        let bad = |line: usize, message: &str| WgError::MeshFormat { line, message: message.into() };

        let mut family = MeshFamily::Custom;
        let mut level = 0;
        let (mut ln, mut line) = next()?;
        loop {
            let mut it = line.split_whitespace();
            match it.next() {
                Some("FAMILY") => family = it.next().ok_or_else(|| bad(ln, "missing family"))?.parse()?,
                Some("LEVEL") => level = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(ln, "bad level"))?,
                Some("VERTICES") => break,
                _ => return Err(bad(ln, "expected FAMILY, LEVEL or VERTICES")),
            }
            (ln, line) = next()?;
        }
        let count = |ln: usize, line: &str| -> Result<usize> {
            line.split_whitespace().nth(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad(ln, "bad count"))
        };
        let nv = count(ln, &line)?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, line) = next()?;
            let xy: Vec<f64> = line.split_whitespace().map(str::parse).collect::<Result<_, _>>().map_err(|_| bad(ln, "bad coordinate"))?;
            if xy.len() != 2 {
                return Err(bad(ln, "expected two coordinates"));
            }
            vertices.push(Vertex2::new(xy[0], xy[1]));
        }
        let (ln, line) = next()?;
        if !line.starts_with("CELLS") {
            return Err(bad(ln, "expected CELLS"));
        }
        let nc = count(ln, &line)?;
        let mut polys = Vec::with_capacity(nc);
        for _ in 0..nc {
            let (ln, line) = next()?;
            let ids: Vec<usize> = line.split_whitespace().map(str::parse).collect::<Result<_, _>>().map_err(|_| bad(ln, "bad vertex id"))?;
            if ids.is_empty() || ids[0] != ids.len() - 1 {
                return Err(bad(ln, "vertex count does not match"));
            }
            polys.push(ids[1..].to_vec());
        }
        Self::from_polygons(vertices, polys, family, level)
    }
}

fn on_unit_square_boundary(a: Vertex2, b: Vertex2) -> bool {
    let side = |f: fn(&Vertex2) -> f64, v: f64| (f(&a) - v).abs() <= GEOM_TOL && (f(&b) - v).abs() <= GEOM_TOL;
    side(|p| p.x, 0.0) || side(|p| p.x, 1.0) || side(|p| p.y, 0.0) || side(|p| p.y, 1.0)
}

/// No two non-adjacent edges of the polygon touch.
fn is_simple(points: &[Vertex2]) -> bool {
    let n = points.len();
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_touch(points[i], points[(i + 1) % n], points[j], points[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

fn segments_touch(p1: Vertex2, p2: Vertex2, q1: Vertex2, q2: Vertex2) -> bool {
    let d1 = cross(q2 - q1, p1 - q1);
    let d2 = cross(q2 - q1, p2 - q1);
    let d3 = cross(p2 - p1, q1 - p1);
    let d4 = cross(p2 - p1, q2 - p1);
    if ((d1 > GEOM_TOL && d2 < -GEOM_TOL) || (d1 < -GEOM_TOL && d2 > GEOM_TOL))
        && ((d3 > GEOM_TOL && d4 < -GEOM_TOL) || (d3 < -GEOM_TOL && d4 > GEOM_TOL))
    {
        return true;
    }
    let within = |a: Vertex2, b: Vertex2, p: Vertex2| {
        p.x >= a.x.min(b.x) - GEOM_TOL && p.x <= a.x.max(b.x) + GEOM_TOL && p.y >= a.y.min(b.y) - GEOM_TOL && p.y <= a.y.max(b.y) + GEOM_TOL
    };
    (d1.abs() <= GEOM_TOL && within(q1, q2, p1))
        || (d2.abs() <= GEOM_TOL && within(q1, q2, p2))
        || (d3.abs() <= GEOM_TOL && within(p1, p2, q1))
        || (d4.abs() <= GEOM_TOL && within(p1, p2, q2))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    Vertex,
    Cell,
    Orientation,
    Topology,
    Normal,
    Conformity,
    AreaSum,
    Euler,
}

#[derive(Clone, Debug)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn push(&mut self, kind: ViolationKind, message: String) {
        self.violations.push(Violation { kind, message });
    }

    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.violations.is_empty() {
            return writeln!(f, "ok: no violations");
        }
        for v in &self.violations {
            writeln!(f, "{:?}: {}", v.kind, v.message)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_square_splits_into_two_triangles() {
        let m = PolyMesh::uniform_triangles(1).unwrap();
        assert_eq!((m.cells.len(), m.edges.len(), m.vertices.len()), (2, 5, 4));
        for c in &m.cells {
            assert_relative_eq!(c.area, 0.5, epsilon = 1e-15);
            assert!(c.convex);
            assert_eq!(c.n_edges(), 3);
        }
    }

    #[test]
    fn triangle_meshes_partition_the_square() {
        let m = PolyMesh::uniform_triangles(2).unwrap();
        assert_eq!(m.cells.len(), 8);
        assert_relative_eq!(m.total_area(), 1.0, epsilon = 1e-14);
        let m = PolyMesh::uniform_triangles(4).unwrap();
        assert_eq!(m.cells.len(), 32);
        assert_relative_eq!(m.h, 2f64.sqrt() / 4.0, epsilon = 1e-15);
        assert!(m.validate().is_valid(), "{}", m.validate());
    }

    #[test]
    fn zero_subdivisions_is_rejected() {
        assert!(matches!(PolyMesh::uniform_triangles(0), Err(WgError::InvalidArgument(_))));
        assert!(matches!(PolyMesh::nonconvex_l(0), Err(WgError::InvalidArgument(_))));
    }

    #[test]
    fn single_l_cell_and_square() {
        let m = PolyMesh::nonconvex_l(1).unwrap();
        assert_eq!(m.cells.len(), 2);
        let (l, sq) = (&m.cells[0], &m.cells[1]);
        assert_eq!(l.n_edges(), 6);
        assert_relative_eq!(l.area, 0.75, epsilon = 1e-15);
        assert!(!l.convex);
        assert_relative_eq!(sq.area, 0.25, epsilon = 1e-15);
        assert!(sq.convex);
    }

    #[test]
    fn l_meshes_are_conforming() {
        let m = PolyMesh::nonconvex_l(2).unwrap();
        assert_relative_eq!(m.total_area(), 1.0, epsilon = 1e-10);
        assert!(m.edges.iter().all(|e| e.boundary || e.cells.len() == 2));
        let m = PolyMesh::nonconvex_l(3).unwrap();
        assert!(m.validate().is_valid(), "{}", m.validate());
        // interior L cells pick up two collinear midpoints
        assert_eq!(m.cells.iter().map(Cell::n_edges).max(), Some(8));
    }

    #[test]
    fn geometry_of_reference_shapes() {
        let sq = [Vertex2::new(0.0, 0.0), Vertex2::new(1.0, 0.0), Vertex2::new(1.0, 1.0), Vertex2::new(0.0, 1.0)];
        let g = cell_geometry(&sq).unwrap();
        assert_relative_eq!(g.area, 1.0);
        assert_relative_eq!(g.centroid, Vertex2::new(0.5, 0.5));
        assert_relative_eq!(g.diameter, 2f64.sqrt());

        let tri = [Vertex2::new(0.0, 0.0), Vertex2::new(1.0, 0.0), Vertex2::new(0.0, 1.0)];
        let g = cell_geometry(&tri).unwrap();
        assert_relative_eq!(g.area, 0.5);
        assert_relative_eq!(g.centroid, Vertex2::new(1.0 / 3.0, 1.0 / 3.0), epsilon = 1e-15);
        assert_relative_eq!(g.diameter, 2f64.sqrt());

        // L = [0,1]x[0,1/2] (area 1/2, centroid (1/2,1/4)) + [0,1/2]x[1/2,1] (area 1/4, centroid (1/4,3/4))
        let l = [(0.0, 0.0), (1.0, 0.0), (1.0, 0.5), (0.5, 0.5), (0.5, 1.0), (0.0, 1.0)].map(|(x, y)| Vertex2::new(x, y));
        let g = cell_geometry(&l).unwrap();
        let cx = (0.5 * 0.5 + 0.25 * 0.25) / 0.75;
        let cy = (0.5 * 0.25 + 0.25 * 0.75) / 0.75;
        assert_relative_eq!(g.area, 0.75, epsilon = 1e-15);
        assert_relative_eq!(g.centroid, Vertex2::new(cx, cy), epsilon = 1e-15);
        assert_relative_eq!(cx, 5.0 / 12.0, epsilon = 1e-15);
        assert_relative_eq!(g.diameter, 2f64.sqrt());
    }

    #[test]
    fn degenerate_and_clockwise_cells_are_rejected() {
        let line = [Vertex2::new(0.0, 0.0), Vertex2::new(1.0, 0.0), Vertex2::new(2.0, 0.0)];
        assert!(matches!(cell_geometry(&line), Err(WgError::DegenerateCell { .. })));
        let cw = [Vertex2::new(0.0, 0.0), Vertex2::new(0.0, 1.0), Vertex2::new(1.0, 0.0)];
        assert!(cell_geometry(&cw).is_err());
    }

    #[test]
    fn flipped_normal_is_reported() {
        let mut m = PolyMesh::uniform_triangles(4).unwrap();
        let e = m.edges.iter().position(|e| !e.boundary).unwrap();
        m.edges[e].normals[0] = -m.edges[e].normals[0];
        let report = m.validate();
        assert_eq!(report.violations.len(), 1, "{report}");
        assert!(report.violations[0].message.contains("normal not outward"));
    }

    #[test]
    fn hanging_node_is_reported() {
        // The left half carries a midpoint on x = 1/2 that the right half does not.
        let v = [(0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (1.0, 1.0), (0.5, 1.0), (0.0, 1.0), (0.5, 0.5)]
            .map(|(x, y)| Vertex2::new(x, y))
            .to_vec();
        let polys = vec![vec![0, 1, 6, 4, 5], vec![1, 2, 3, 4]];
        let m = PolyMesh::from_polygons(v, polys, MeshFamily::Custom, 1).unwrap();
        let report = m.validate();
        assert!(report.violations.iter().any(|v| v.kind == ViolationKind::Conformity), "{report}");
    }

    #[test]
    fn euler_relation_and_halving() {
        for fam in [MeshFamily::Triangles, MeshFamily::NonconvexL] {
            let mut prev: Option<f64> = None;
            for n in [1, 2, 4, 8] {
                let m = fam.build(n).unwrap();
                let euler = m.vertices.len() as i64 - m.edges.len() as i64 + m.cells.len() as i64;
                assert_eq!(euler, 1);
                if let Some(h) = prev {
                    assert!((m.h / h - 0.5).abs() <= 1e-12);
                }
                prev = Some(m.h);
            }
        }
    }

    #[test]
    fn text_format_round_trip() {
        let m = PolyMesh::nonconvex_l(2).unwrap();
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let back = PolyMesh::read_text(buf.as_slice()).unwrap();
        assert_eq!(back.family, MeshFamily::NonconvexL);
        assert_eq!(back.level, 2);
        assert_eq!(back.cells.len(), m.cells.len());
        assert_eq!(back.edges.len(), m.edges.len());
        assert_eq!(back.vertices, m.vertices);
        assert!(back.validate().is_valid());
    }

    #[test]
    fn malformed_text_reports_the_line() {
        let text = "FAMILY tri\nVERTICES 1\n0.0 zero\n";
        match PolyMesh::read_text(text.as_bytes()) {
            Err(WgError::MeshFormat { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
