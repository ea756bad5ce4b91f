//! Element-level evaluation and global assembly of the bilinear and linear
//! forms used by the cell, Stokes and macroscopic solvers, plus constraint
//! application (Dirichlet rows, zero-mean Lagrange border).

use super::dofmap::{DofMap, ElementKind};
use super::quadrature::{tri_degree5, QuadPoint, TRI_DEGREE2};
use crate::mesh::{triangle_area, Mesh};
use crate::sparse::Triplets;
use crate::{Error, Result};

/// Per-triangle affine geometry: area and barycentric gradients.
#[derive(Debug, Clone, Copy)]
pub struct TriGeom {
    pub area: f64,
    pub grad_lambda: [[f64; 2]; 3],
    pub verts: [[f64; 2]; 3],
}

impl TriGeom {
    pub fn new(mesh: &Mesh, t: usize) -> TriGeom {
        let [a, b, c] = mesh.triangles[t];
        let pa = mesh.vertices[a];
        let pb = mesh.vertices[b];
        let pc = mesh.vertices[c];
        let area = triangle_area(pa, pb, pc);
        let two_a = 2.0 * area;
        TriGeom {
            area,
            grad_lambda: [
                [(pb[1] - pc[1]) / two_a, (pc[0] - pb[0]) / two_a],
                [(pc[1] - pa[1]) / two_a, (pa[0] - pc[0]) / two_a],
                [(pa[1] - pb[1]) / two_a, (pb[0] - pa[0]) / two_a],
            ],
            verts: [pa, pb, pc],
        }
    }

    pub fn point(&self, bary: [f64; 3]) -> [f64; 2] {
        [
            bary[0] * self.verts[0][0] + bary[1] * self.verts[1][0] + bary[2] * self.verts[2][0],
            bary[0] * self.verts[0][1] + bary[1] * self.verts[1][1] + bary[2] * self.verts[2][1],
        ]
    }
}

/// Basis values and gradients at one barycentric point; capacity fits P2.
pub struct BasisEval {
    pub n: usize,
    pub value: [f64; 6],
    pub grad: [[f64; 2]; 6],
}

pub fn eval_basis(kind: ElementKind, geom: &TriGeom, bary: [f64; 3]) -> BasisEval {
    let mut out = BasisEval { n: 0, value: [0.0; 6], grad: [[0.0; 2]; 6] };
    let g = &geom.grad_lambda;
    match kind {
        ElementKind::P1 => {
            out.n = 3;
            for i in 0..3 {
                out.value[i] = bary[i];
                out.grad[i] = g[i];
            }
        }
        ElementKind::P2 => {
            out.n = 6;
            for i in 0..3 {
                out.value[i] = bary[i] * (2.0 * bary[i] - 1.0);
                let s = 4.0 * bary[i] - 1.0;
                out.grad[i] = [s * g[i][0], s * g[i][1]];
            }
            // local nodes 3,4,5: midpoints opposite local vertices 0,1,2
            for i in 0..3 {
                let j = (i + 1) % 3;
                let k = (i + 2) % 3;
                out.value[3 + i] = 4.0 * bary[j] * bary[k];
                out.grad[3 + i] = [
                    4.0 * (bary[j] * g[k][0] + bary[k] * g[j][0]),
                    4.0 * (bary[j] * g[k][1] + bary[k] * g[j][1]),
                ];
            }
        }
    }
    out
}

/// 2x2 matrix coefficient evaluated at a quadrature point; implemented by
/// plain closures of the position and by mesh-attached fields.
pub trait MatrixCoefficient {
    fn eval(&self, tri: usize, bary: [f64; 3], xy: [f64; 2]) -> [[f64; 2]; 2];
}

impl<F: Fn([f64; 2]) -> [[f64; 2]; 2]> MatrixCoefficient for F {
    fn eval(&self, _tri: usize, _bary: [f64; 3], xy: [f64; 2]) -> [[f64; 2]; 2] {
        self(xy)
    }
}

pub trait VectorCoefficient {
    fn eval(&self, tri: usize, bary: [f64; 3], xy: [f64; 2]) -> [f64; 2];
}

impl<F: Fn([f64; 2]) -> [f64; 2]> VectorCoefficient for F {
    fn eval(&self, _tri: usize, _bary: [f64; 3], xy: [f64; 2]) -> [f64; 2] {
        self(xy)
    }
}

pub trait ScalarCoefficient {
    fn eval(&self, tri: usize, bary: [f64; 3], xy: [f64; 2]) -> f64;
}

impl<F: Fn([f64; 2]) -> f64> ScalarCoefficient for F {
    fn eval(&self, _tri: usize, _bary: [f64; 3], xy: [f64; 2]) -> f64 {
        self(xy)
    }
}

/// Bilinear forms: diffusion ∫ (D∇w)·∇v, advection −scale·∫ (b w)·∇v, mass ∫ w v.
pub enum Form<'a> {
    Diffusion(&'a dyn MatrixCoefficient),
    Advection { velocity: &'a dyn VectorCoefficient, scale: f64 },
    Mass,
}

fn rule_for(kind: ElementKind, form: &Form) -> &'static [QuadPoint] {
    match (kind, form) {
        // P1 mass is the only always-constant-coefficient degree-2 case
        (ElementKind::P1, Form::Mass) => &TRI_DEGREE2,
        _ => tri_degree5(),
    }
}

pub fn assemble_bilinear(mesh: &Mesh, dm: &DofMap, form: Form) -> Result<Triplets> {
    dm.check_mesh(mesh)?;
    let rule = rule_for(dm.kind(), &form);
    let n_loc = dm.dofs_per_cell();
    let mut trip = Triplets::with_capacity(dm.n_dofs(), dm.n_dofs(), n_loc * n_loc * mesh.n_triangles());
    let mut local = [[0.0f64; 6]; 6];
    for t in 0..mesh.n_triangles() {
        let geom = TriGeom::new(mesh, t);
        for row in local.iter_mut() {
            row.fill(0.0);
        }
        for q in rule {
            let basis = eval_basis(dm.kind(), &geom, q.bary);
            let w = q.weight * geom.area;
            let xy = geom.point(q.bary);
            match form {
                Form::Diffusion(d) => {
                    let m = d.eval(t, q.bary, xy);
                    for c in 0..n_loc {
                        let dg = [
                            m[0][0] * basis.grad[c][0] + m[0][1] * basis.grad[c][1],
                            m[1][0] * basis.grad[c][0] + m[1][1] * basis.grad[c][1],
                        ];
                        for r in 0..n_loc {
                            local[r][c] += w * (dg[0] * basis.grad[r][0] + dg[1] * basis.grad[r][1]);
                        }
                    }
                }
                Form::Advection { velocity, scale } => {
                    let b = velocity.eval(t, q.bary, xy);
                    for r in 0..n_loc {
                        let bg = b[0] * basis.grad[r][0] + b[1] * basis.grad[r][1];
                        for c in 0..n_loc {
                            local[r][c] -= scale * w * bg * basis.value[c];
                        }
                    }
                }
                Form::Mass => {
                    for r in 0..n_loc {
                        for c in 0..n_loc {
                            local[r][c] += w * basis.value[r] * basis.value[c];
                        }
                    }
                }
            }
        }
        let dofs = dm.cell_dofs(t);
        for r in 0..n_loc {
            for c in 0..n_loc {
                trip.push(dofs[r], dofs[c], local[r][c]);
            }
        }
    }
    Ok(trip)
}

/// Load vector ∫ f v.
pub fn assemble_load(mesh: &Mesh, dm: &DofMap, f: &dyn ScalarCoefficient) -> Result<Vec<f64>> {
    dm.check_mesh(mesh)?;
    let mut rhs = vec![0.0; dm.n_dofs()];
    for t in 0..mesh.n_triangles() {
        let geom = TriGeom::new(mesh, t);
        let dofs = dm.cell_dofs(t);
        for q in tri_degree5() {
            let basis = eval_basis(dm.kind(), &geom, q.bary);
            let w = q.weight * geom.area * f.eval(t, q.bary, geom.point(q.bary));
            for r in 0..basis.n {
                rhs[dofs[r]] += w * basis.value[r];
            }
        }
    }
    Ok(rhs)
}

/// Right-hand side of the cell problem for the given axis (1 or 2), in the
/// integrated-by-parts form −∫ (D e_axis)·∇v. On a periodic perforated cell
/// this equals the divergence form plus its obstacle-boundary term exactly.
pub fn assemble_cell_rhs(
    mesh: &Mesh,
    dm: &DofMap,
    d: &dyn MatrixCoefficient,
    axis: usize,
) -> Result<Vec<f64>> {
    dm.check_mesh(mesh)?;
    if axis != 1 && axis != 2 {
        return Err(Error::InvalidInput(format!("cell-problem axis must be 1 or 2, got {axis}")));
    }
    let col = axis - 1;
    let mut rhs = vec![0.0; dm.n_dofs()];
    for t in 0..mesh.n_triangles() {
        let geom = TriGeom::new(mesh, t);
        let dofs = dm.cell_dofs(t);
        for q in tri_degree5() {
            let basis = eval_basis(dm.kind(), &geom, q.bary);
            let m = d.eval(t, q.bary, geom.point(q.bary));
            let de = [m[0][col], m[1][col]];
            let w = q.weight * geom.area;
            for r in 0..basis.n {
                rhs[dofs[r]] -= w * (de[0] * basis.grad[r][0] + de[1] * basis.grad[r][1]);
            }
        }
    }
    Ok(rhs)
}

/// Integrals ∫ v_j of every basis function (the zero-mean constraint column);
/// entries sum to the mesh measure.
pub fn mean_vector(mesh: &Mesh, dm: &DofMap) -> Result<Vec<f64>> {
    dm.check_mesh(mesh)?;
    // degree-2 rule is exact: basis functions are at most quadratic
    let mut c = vec![0.0; dm.n_dofs()];
    for t in 0..mesh.n_triangles() {
        let geom = TriGeom::new(mesh, t);
        let dofs = dm.cell_dofs(t);
        for q in &TRI_DEGREE2 {
            let basis = eval_basis(dm.kind(), &geom, q.bary);
            let w = q.weight * geom.area;
            for r in 0..basis.n {
                c[dofs[r]] += w * basis.value[r];
            }
        }
    }
    Ok(c)
}

/// Replaces each constrained row with the identity and pins the value.
pub fn apply_dirichlet(
    a: &mut Triplets,
    rhs: &mut [f64],
    constraints: &[(usize, f64)],
) -> Result<()> {
    if a.n_rows() != rhs.len() {
        return Err(Error::InvalidInput(format!(
            "system has {} rows but rhs has {} entries",
            a.n_rows(),
            rhs.len()
        )));
    }
    let mut pinned: Vec<Option<f64>> = vec![None; a.n_rows()];
    for &(dof, value) in constraints {
        if dof >= a.n_rows() {
            return Err(Error::InvalidInput(format!("Dirichlet DOF {dof} out of range")));
        }
        match pinned[dof] {
            Some(prev) if prev != value => {
                return Err(Error::InvalidInput(format!(
                    "conflicting Dirichlet values {prev} and {value} on DOF {dof}"
                )));
            }
            _ => pinned[dof] = Some(value),
        }
    }
    a.retain_rows(|r| pinned[r].is_none());
    for (dof, value) in pinned.iter().enumerate() {
        if let Some(v) = value {
            a.push(dof, dof, 1.0);
            rhs[dof] = *v;
        }
    }
    Ok(())
}

/// Borders an N×N system to (N+1)×(N+1) with the mean-value column/row
/// [A c; cᵀ 0]; the appended unknown is the Lagrange multiplier and the
/// appended equation pins ∫ u = 0.
pub fn append_zero_mean(
    a: &mut Triplets,
    rhs: &mut Vec<f64>,
    mesh: &Mesh,
    dm: &DofMap,
) -> Result<()> {
    let n = dm.n_dofs();
    if a.n_rows() != n || a.n_cols() != n || rhs.len() != n {
        return Err(Error::InvalidInput(format!(
            "expected a square {n}-DOF system before bordering, got {}x{} with rhs {}",
            a.n_rows(),
            a.n_cols(),
            rhs.len()
        )));
    }
    let c = mean_vector(mesh, dm)?;
    a.resize(n + 1, n + 1);
    for (j, &cj) in c.iter().enumerate() {
        a.push(j, n, cj);
        a.push(n, j, cj);
    }
    rhs.push(0.0);
    Ok(())
}
