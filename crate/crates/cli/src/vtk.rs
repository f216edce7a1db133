//! Legacy ASCII VTK export of per-cell fields.

use std::fmt::Write;

use wg_stokes::assembly::{GlobalSystem, SolveResult};
use wg_stokes::weakops::CellFrame;
use wg_stokes::PolyMesh;

/// Polygon mesh with cell averages of `u_0` and `p_h`.
pub fn cell_averages(mesh: &PolyMesh, system: &GlobalSystem, result: &SolveResult) -> String {
    let mut s = String::new();
    let dofs = &system.dofs;
    writeln!(s, "# vtk DataFile Version 3.0\nwg-stokes solution\nASCII\nDATASET UNSTRUCTURED_GRID").ok();
    writeln!(s, "POINTS {} double", mesh.vertices.len()).ok();
    for v in &mesh.vertices {
        writeln!(s, "{:.17e} {:.17e} 0", v.x, v.y).ok();
    }
    let size: usize = mesh.cells.iter().map(|c| c.vertices.len() + 1).sum();
    writeln!(s, "CELLS {} {size}", mesh.cells.len()).ok();
    for c in &mesh.cells {
        let ids: Vec<String> = c.vertices.iter().map(usize::to_string).collect();
        writeln!(s, "{} {}", c.vertices.len(), ids.join(" ")).ok();
    }
    writeln!(s, "CELL_TYPES {}", mesh.cells.len()).ok();
    for _ in &mesh.cells {
        writeln!(s, "7").ok();
    }
    writeln!(s, "CELL_DATA {}\nVECTORS velocity double", mesh.cells.len()).ok();
    let mut pressure = Vec::with_capacity(mesh.cells.len());
    for (ci, c) in mesh.cells.iter().enumerate() {
        let frame = CellFrame::of(c);
        let ops = &system.ops[ci];
        let rule = ops.physical_rule(&frame);
        let u = rule.points.iter().zip(&rule.weights).fold([0.0, 0.0], |acc, (x, w)| {
            let v = result.velocity.eval_interior(mesh, dofs, ci, x);
            [acc[0] + w * v.x, acc[1] + w * v.y]
        });
        writeln!(s, "{:.17e} {:.17e} 0", u[0] / c.area, u[1] / c.area).ok();
        let mono = frame.monomials(dofs.k - 1);
        let coeffs = result.cell_pressure(dofs, ci);
        pressure.push(rule.integrate(|x| mono.eval_combination(coeffs, x)) / c.area);
    }
    writeln!(s, "SCALARS pressure double 1\nLOOKUP_TABLE default").ok();
    for p in pressure {
        writeln!(s, "{p:.17e}").ok();
    }
    s
}
