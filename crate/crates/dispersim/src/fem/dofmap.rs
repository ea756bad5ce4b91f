//! Degree-of-freedom maps for P1 and P2 Lagrange elements, with optional
//! periodic master-slave reduction: slave DOFs are eliminated at numbering
//! time, so assembled systems are the reduced periodic systems directly.

use crate::mesh::{Mesh, PeriodicMap};
use crate::{Error, Result};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    P1,
    P2,
}

#[derive(Debug, Clone)]
pub struct DofMap {
    kind: ElementKind,
    n_dofs: usize,
    n_mesh_vertices: usize,
    n_mesh_triangles: usize,
    /// flattened per-triangle global DOFs (stride 3 for P1, 6 for P2)
    cell_dofs: Vec<usize>,
    /// vertex index -> reduced DOF
    vertex_dofs: Vec<usize>,
    /// (min vertex, max vertex) -> reduced edge DOF (P2 only)
    edge_dofs: BTreeMap<(usize, usize), usize>,
    /// representative coordinates per reduced DOF
    dof_points: Vec<[f64; 2]>,
}

impl DofMap {
    pub fn for_p1(mesh: &Mesh, periodic: Option<&PeriodicMap>) -> Result<DofMap> {
        Self::build(mesh, periodic, ElementKind::P1)
    }

    pub fn for_p2(mesh: &Mesh, periodic: Option<&PeriodicMap>) -> Result<DofMap> {
        Self::build(mesh, periodic, ElementKind::P2)
    }

    fn build(mesh: &Mesh, periodic: Option<&PeriodicMap>, kind: ElementKind) -> Result<DofMap> {
        let nv = mesh.n_vertices();
        // unreduced ids: vertices first, then (for P2) one per unique edge
        let mut edge_ids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        if kind == ElementKind::P2 {
            for tri in &mesh.triangles {
                for k in 0..3 {
                    let a = tri[k];
                    let b = tri[(k + 1) % 3];
                    let key = (a.min(b), a.max(b));
                    let next = nv + edge_ids.len();
                    edge_ids.entry(key).or_insert(next);
                }
            }
        }
        let n_unreduced = nv + edge_ids.len();

        // master map over unreduced ids
        let mut master: Vec<usize> = (0..n_unreduced).collect();
        if let Some(pm) = periodic {
            let vmap = pm.vertex_map(nv);
            for (v, &m) in vmap.iter().enumerate() {
                master[v] = m;
            }
            if kind == ElementKind::P2 {
                // pair boundary edges geometrically: an edge whose endpoints
                // both sit on the right (top) line maps onto the left (bottom)
                // edge with the shifted midpoint
                let midpoint = |&(a, b): &(usize, usize)| {
                    let pa = mesh.vertices[a];
                    let pb = mesh.vertices[b];
                    [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0]
                };
                let key_bits = |p: [f64; 2]| (p[0].to_bits(), p[1].to_bits());
                let mut master_mid: BTreeMap<(u64, u64), usize> = BTreeMap::new();
                for (e, &id) in &edge_ids {
                    let m = midpoint(e);
                    if m[0] == 0.0 || m[1] == 0.0 {
                        master_mid.insert(key_bits(m), id);
                    }
                }
                for (e, &id) in &edge_ids {
                    let m = midpoint(e);
                    let target = if m[0] == 1.0 {
                        Some([0.0, m[1]])
                    } else if m[1] == 1.0 {
                        Some([m[0], 0.0])
                    } else {
                        None
                    };
                    if let Some(tm) = target {
                        let mid = master_mid.get(&key_bits(tm)).copied().ok_or_else(|| {
                            Error::InvalidGeometry(format!(
                                "periodic partner edge missing at midpoint ({}, {})",
                                tm[0], tm[1]
                            ))
                        })?;
                        master[id] = mid;
                    }
                }
            }
        }

        // compact numbering over masters, in unreduced order
        let mut reduced = vec![usize::MAX; n_unreduced];
        let mut dof_points = Vec::new();
        let mut n_dofs = 0;
        for id in 0..n_unreduced {
            if master[id] == id {
                reduced[id] = n_dofs;
                n_dofs += 1;
                let p = if id < nv {
                    mesh.vertices[id]
                } else {
                    // recover the edge endpoints for the midpoint coordinate
                    [f64::NAN, f64::NAN]
                };
                dof_points.push(p);
            }
        }
        for (e, &id) in &edge_ids {
            if master[id] == id {
                let pa = mesh.vertices[e.0];
                let pb = mesh.vertices[e.1];
                dof_points[reduced[id]] = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
            }
        }
        let resolve = |id: usize| reduced[master[id]];

        let stride = match kind {
            ElementKind::P1 => 3,
            ElementKind::P2 => 6,
        };
        let mut cell_dofs = Vec::with_capacity(stride * mesh.n_triangles());
        for tri in &mesh.triangles {
            for &v in tri {
                cell_dofs.push(resolve(v));
            }
            if kind == ElementKind::P2 {
                // local nodes 3,4,5 = midpoints opposite local vertices 0,1,2
                for k in 0..3 {
                    let a = tri[(k + 1) % 3];
                    let b = tri[(k + 2) % 3];
                    let id = edge_ids[&(a.min(b), a.max(b))];
                    cell_dofs.push(resolve(id));
                }
            }
        }

        let vertex_dofs: Vec<usize> = (0..nv).map(resolve).collect();
        let edge_dofs: BTreeMap<(usize, usize), usize> =
            edge_ids.iter().map(|(&e, &id)| (e, resolve(id))).collect();

        Ok(DofMap {
            kind,
            n_dofs,
            n_mesh_vertices: nv,
            n_mesh_triangles: mesh.n_triangles(),
            cell_dofs,
            vertex_dofs,
            edge_dofs,
            dof_points,
        })
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn dofs_per_cell(&self) -> usize {
        match self.kind {
            ElementKind::P1 => 3,
            ElementKind::P2 => 6,
        }
    }

    pub fn cell_dofs(&self, t: usize) -> &[usize] {
        let s = self.dofs_per_cell();
        &self.cell_dofs[t * s..(t + 1) * s]
    }

    /// Reduced DOF carrying the value at a mesh vertex.
    pub fn vertex_dof(&self, v: usize) -> usize {
        self.vertex_dofs[v]
    }

    /// Reduced DOF of the edge midpoint between two vertices (P2 only).
    pub fn edge_dof(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_dofs.get(&(a.min(b), a.max(b))).copied()
    }

    /// Representative coordinates of a reduced DOF (master vertex or master
    /// edge midpoint).
    pub fn dof_point(&self, dof: usize) -> [f64; 2] {
        self.dof_points[dof]
    }

    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if mesh.n_vertices() != self.n_mesh_vertices
            || mesh.n_triangles() != self.n_mesh_triangles
        {
            return Err(Error::InvalidInput(
                "DOF map was built for a different mesh".into(),
            ));
        }
        Ok(())
    }
}
