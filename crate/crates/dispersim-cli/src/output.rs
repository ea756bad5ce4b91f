//! Artifact writers. Everything numeric is printed with 17 significant
//! digits so repeated runs of a deterministic pipeline produce bitwise
//! identical files.

use crate::config::CliResult;
use dispersim::mesh::Mesh;
use std::fmt::Write as _;
use std::path::Path;

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text)?;
    Ok(())
}

/// `x,y,u` rows, one per mesh vertex.
pub fn scalar_field_csv(mesh: &Mesh, values: &[f64]) -> String {
    let mut out = String::from("x,y,u\n");
    for (p, v) in mesh.vertices.iter().zip(values) {
        let _ = writeln!(out, "{:.17e},{:.17e},{:.17e}", p[0], p[1], v);
    }
    out
}

/// `x,y,B1,B2` rows, one per mesh vertex.
pub fn vector_field_csv(mesh: &Mesh, vx: &[f64], vy: &[f64]) -> String {
    let mut out = String::from("x,y,B1,B2\n");
    for ((p, x), y) in mesh.vertices.iter().zip(vx).zip(vy) {
        let _ = writeln!(out, "{:.17e},{:.17e},{:.17e},{:.17e}", p[0], p[1], x, y);
    }
    out
}

fn vtk_mesh_preamble(mesh: &Mesh, title: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0");
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "ASCII");
    let _ = writeln!(out, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(out, "POINTS {} double", mesh.n_vertices());
    for p in &mesh.vertices {
        let _ = writeln!(out, "{:.17e} {:.17e} 0.0", p[0], p[1]);
    }
    let nt = mesh.n_triangles();
    let _ = writeln!(out, "CELLS {nt} {}", 4 * nt);
    for tri in &mesh.triangles {
        let _ = writeln!(out, "3 {} {} {}", tri[0], tri[1], tri[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {nt}");
    for _ in 0..nt {
        let _ = writeln!(out, "5");
    }
    out
}

/// Legacy-VTK ASCII dump of the triangulation alone.
pub fn mesh_vtk(mesh: &Mesh, title: &str) -> String {
    vtk_mesh_preamble(mesh, title)
}

/// Legacy-VTK ASCII dump of a vertex scalar field.
pub fn scalar_field_vtk(mesh: &Mesh, name: &str, values: &[f64]) -> String {
    assert_eq!(values.len(), mesh.n_vertices(), "one value per vertex");
    let mut out = vtk_mesh_preamble(mesh, &format!("dispersim field {name}"));
    let _ = writeln!(out, "POINT_DATA {}", mesh.n_vertices());
    let _ = writeln!(out, "SCALARS {name} double 1");
    let _ = writeln!(out, "LOOKUP_TABLE default");
    for v in values {
        let _ = writeln!(out, "{v:.17e}");
    }
    out
}

/// Wall-clock breakdown separating the offline phase (Stokes solve + table
/// build) from the online phase (the macro time loop with its tensor
/// evaluations), so speedup claims are auditable from the artifact.
#[derive(Debug, Clone, Copy, Default)]
pub struct TimingBreakdown {
    pub offline_stokes_seconds: f64,
    pub offline_table_seconds: f64,
    pub online_tensor_seconds: f64,
    pub online_step_seconds: f64,
    pub cell_solves: usize,
}

impl TimingBreakdown {
    pub fn offline_seconds(&self) -> f64 {
        self.offline_stokes_seconds + self.offline_table_seconds
    }

    pub fn online_seconds(&self) -> f64 {
        self.online_tensor_seconds + self.online_step_seconds
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "offline_stokes_seconds,offline_table_seconds,offline_seconds,\
             online_tensor_seconds,online_step_seconds,online_seconds,cell_solves\n",
        );
        let _ = writeln!(
            out,
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            self.offline_stokes_seconds,
            self.offline_table_seconds,
            self.offline_seconds(),
            self.online_tensor_seconds,
            self.online_step_seconds,
            self.online_seconds(),
            self.cell_solves
        );
        out
    }
}
