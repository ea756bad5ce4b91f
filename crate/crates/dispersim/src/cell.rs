//! Parameterized auxiliary cell problems on the periodic perforated cell and
//! the effective dispersion tensor assembled from their correctors.
//!
//! For a scalar parameter p the two correctors w₁, w₂ solve the bordered
//! periodic systems (diffusion + p·advection by the drift, zero-mean
//! multiplier) with right-hand sides −∫ D e_i · ∇v; the tensor is the fluid
//! average of D(I + [∇w₁ ∇w₂]).

use crate::fem::{
    assemble_bilinear, assemble_cell_rhs, mean_vector, tri_degree5, DofMap, Form,
    MatrixCoefficient, TriGeom,
};
use crate::mesh::{Mesh, PeriodicMap};
use crate::sparse::{CsrMatrix, Triplets};
use crate::stokes::DriftField;
use crate::{Error, Result};

/// Effective 2×2 dispersion tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionTensor {
    pub d: [[f64; 2]; 2],
}

impl DispersionTensor {
    pub fn identity() -> DispersionTensor {
        DispersionTensor { d: [[1.0, 0.0], [0.0, 1.0]] }
    }

    pub fn is_finite(&self) -> bool {
        self.d.iter().flatten().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &DispersionTensor) -> f64 {
        let mut m = 0.0f64;
        for r in 0..2 {
            for c in 0..2 {
                m = m.max((self.d[r][c] - other.d[r][c]).abs());
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.d.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Smallest eigenvalue of the symmetric part (D + Dᵀ)/2.
    pub fn min_symmetric_eigenvalue(&self) -> f64 {
        let s11 = self.d[0][0];
        let s22 = self.d[1][1];
        let s12 = 0.5 * (self.d[0][1] + self.d[1][0]);
        let mid = 0.5 * (s11 + s22);
        let rad = (0.25 * (s11 - s22) * (s11 - s22) + s12 * s12).sqrt();
        mid - rad
    }
}

/// Correctors for one parameter value.
#[derive(Debug, Clone)]
pub struct CellSolution {
    pub p: f64,
    /// nodal correctors on the reduced periodic P1 space
    pub w: [Vec<f64>; 2],
    /// zero-mean Lagrange multipliers
    pub multipliers: [f64; 2],
    /// |∫ w_i| diagnostics (≈ 0 by the constraint)
    pub mean_abs: [f64; 2],
}

/// Everything p-independent, assembled once per geometry: the cell problem
/// for any parameter is "cached diffusion + p · cached advection" plus the
/// cached right-hand sides and mean-constraint column.
pub struct CellContext {
    mesh: Mesh,
    dm: DofMap,
    /// bordered diffusion system on the unified pattern (advection slots as
    /// structural zeros, mean-constraint row/column included)
    base: CsrMatrix,
    /// advection values on the same pattern; the system for parameter p is
    /// base + p · advection entrywise
    advection: CsrMatrix,
    rhs: [Vec<f64>; 2],
    mean: Vec<f64>,
    /// diffusion coefficient at every quadrature point (triangle-major)
    d_qp: Vec<[[f64; 2]; 2]>,
    cell_measure: f64,
}

impl CellContext {
    pub fn new(
        mesh: &Mesh,
        pm: &PeriodicMap,
        d: &dyn MatrixCoefficient,
        drift: &DriftField,
    ) -> Result<CellContext> {
        drift.velocity_map().check_mesh(mesh)?;
        let dm = DofMap::for_p1(mesh, Some(pm))?;
        let diffusion = assemble_bilinear(mesh, &dm, Form::Diffusion(d))?;
        let advection =
            assemble_bilinear(mesh, &dm, Form::Advection { velocity: drift, scale: 1.0 })?;
        let rhs = [
            assemble_cell_rhs(mesh, &dm, d, 1)?,
            assemble_cell_rhs(mesh, &dm, d, 2)?,
        ];
        let mean = mean_vector(mesh, &dm)?;

        // Compress both terms once, onto the identical bordered pattern, so
        // that per-parameter solves only rewrite values before factorizing.
        let n = dm.n_dofs();
        let bordered = |diff_scale: f64, adv_scale: f64, border: bool| {
            let mut t =
                Triplets::with_capacity(n + 1, n + 1, diffusion.len() + advection.len() + 2 * n);
            t.append_scaled(&diffusion, diff_scale);
            t.append_scaled(&advection, adv_scale);
            for (j, &cj) in mean.iter().enumerate() {
                let v = if border { cj } else { 0.0 };
                t.push(j, n, v);
                t.push(n, j, v);
            }
            t.to_csr()
        };
        let base = bordered(1.0, 0.0, true)?;
        let advection = bordered(0.0, 1.0, false)?;
        debug_assert!(base.same_pattern(&advection));
        let rule = tri_degree5();
        let mut d_qp = Vec::with_capacity(mesh.n_triangles() * rule.len());
        for t in 0..mesh.n_triangles() {
            let geom = TriGeom::new(mesh, t);
            for q in rule {
                d_qp.push(d.eval(t, q.bary, geom.point(q.bary)));
            }
        }
        let cell_measure = mesh.measure();
        Ok(CellContext { mesh: mesh.clone(), dm, base, advection, rhs, mean, d_qp, cell_measure })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn dof_map(&self) -> &DofMap {
        &self.dm
    }

    /// Fluid measure |Y| of the perforated cell.
    pub fn cell_measure(&self) -> f64 {
        self.cell_measure
    }

    /// Solves both corrector problems for one parameter value.
    pub fn solve(&self, p: f64) -> Result<CellSolution> {
        if !p.is_finite() {
            return Err(Error::InvalidInput(format!("cell parameter must be finite, got {p}")));
        }
        let n = self.dm.n_dofs();
        let mut a = self.base.clone();
        for (v, &adv) in a.values_mut().iter_mut().zip(self.advection.values()) {
            *v += p * adv;
        }
        let lu = a
            .factorize()
            .map_err(|e| Error::SingularSystem(format!("cell problem at p = {p}: {e}")))?;

        let mut w: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        let mut multipliers = [0.0f64; 2];
        let mut mean_abs = [0.0f64; 2];
        for i in 0..2 {
            let mut b = self.rhs[i].clone();
            b.push(0.0);
            let x = lu.solve(&b)?;
            multipliers[i] = x[n];
            w[i] = x;
            w[i].truncate(n);
            mean_abs[i] =
                self.mean.iter().zip(&w[i]).map(|(c, v)| c * v).sum::<f64>().abs();
        }
        Ok(CellSolution { p, w, multipliers, mean_abs })
    }

    /// Effective tensor from a corrector pair: the fluid average of
    /// D (I + J) with J's column i holding ∇w_i.
    pub fn dispersion(&self, sol: &CellSolution) -> DispersionTensor {
        let rule = tri_degree5();
        let mut acc = [[0.0f64; 2]; 2];
        for t in 0..self.mesh.n_triangles() {
            let geom = TriGeom::new(&self.mesh, t);
            let dofs = self.dm.cell_dofs(t);
            // per-triangle constant corrector gradients
            let mut gw = [[0.0f64; 2]; 2];
            for (k, &dof) in dofs.iter().enumerate() {
                for i in 0..2 {
                    gw[i][0] += sol.w[i][dof] * geom.grad_lambda[k][0];
                    gw[i][1] += sol.w[i][dof] * geom.grad_lambda[k][1];
                }
            }
            for (qi, q) in rule.iter().enumerate() {
                let dq = self.d_qp[t * rule.len() + qi];
                let w = q.weight * geom.area;
                for a in 0..2 {
                    for i in 0..2 {
                        acc[a][i] +=
                            w * (dq[a][i] + dq[a][0] * gw[i][0] + dq[a][1] * gw[i][1]);
                    }
                }
            }
        }
        for row in &mut acc {
            for v in row.iter_mut() {
                *v /= self.cell_measure;
            }
        }
        DispersionTensor { d: acc }
    }

    /// Fluid average of the diffusion coefficient alone — the tensor the
    /// quadrature produces when both correctors are forced to zero.
    pub fn average_diffusion(&self) -> DispersionTensor {
        let zero = CellSolution {
            p: 0.0,
            w: [vec![0.0; self.dm.n_dofs()], vec![0.0; self.dm.n_dofs()]],
            multipliers: [0.0; 2],
            mean_abs: [0.0; 2],
        };
        self.dispersion(&zero)
    }

    /// Corrector solve and tensor assembly in one call.
    pub fn tensor_at(&self, p: f64) -> Result<DispersionTensor> {
        Ok(self.dispersion(&self.solve(p)?))
    }
}

/// Pointwise validity report for a diffusion coefficient: sampled smallest
/// symmetric eigenvalue (the coercivity constant estimate) and largest entry.
#[derive(Debug, Clone, Copy)]
pub struct AssumptionReport {
    pub theta_min: f64,
    pub max_norm: f64,
}

impl AssumptionReport {
    pub fn pass(&self) -> bool {
        self.theta_min > 0.0
    }
}

/// Samples D at all quadrature points of the mesh.
pub fn check_assumptions(mesh: &Mesh, d: &dyn MatrixCoefficient) -> AssumptionReport {
    let mut theta_min = f64::INFINITY;
    let mut max_norm = 0.0f64;
    for t in 0..mesh.n_triangles() {
        let geom = TriGeom::new(mesh, t);
        for q in tri_degree5() {
            let m = d.eval(t, q.bary, geom.point(q.bary));
            let tensor = DispersionTensor { d: m };
            theta_min = theta_min.min(tensor.min_symmetric_eigenvalue());
            max_norm = max_norm.max(tensor.max_abs());
        }
    }
    AssumptionReport { theta_min, max_norm }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_cell_mesh, HoleSpec};
    use std::f64::consts::PI;

    const IDENTITY: fn([f64; 2]) -> [[f64; 2]; 2] = |_| [[1.0, 0.0], [0.0, 1.0]];

    fn varying_d(p: [f64; 2]) -> [[f64; 2]; 2] {
        [[2.0 + (PI * p[0]).sin() * (PI * p[1]).sin(), 0.0], [0.0, 2.0 + (PI * p[0]).sin()]]
    }

    #[test]
    fn constant_diffusion_has_negligible_correctors() {
        let (mesh, pm) = build_cell_mesh(&[], 8).unwrap();
        let drift = DriftField::constant(&mesh, &pm, [0.4, -0.1]).unwrap();
        let d = |_: [f64; 2]| [[3.0, 0.5], [0.5, 2.0]];
        let ctx = CellContext::new(&mesh, &pm, &d, &drift).unwrap();
        for p in [-5.0, 0.0, 7.0] {
            let sol = ctx.solve(p).unwrap();
            let max_w = sol.w.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(max_w <= 1e-12, "p={p}: max |w| = {max_w}");
            let tensor = ctx.dispersion(&sol);
            let expect = DispersionTensor { d: [[3.0, 0.5], [0.5, 2.0]] };
            assert!(tensor.max_abs_diff(&expect) <= 1e-12);
        }
    }

    #[test]
    fn repeated_solves_are_bitwise_identical() {
        let (mesh, pm) = build_cell_mesh(
            &[HoleSpec::Rectangle { min: [0.3, 0.3], max: [0.7, 0.7] }],
            10,
        )
        .unwrap();
        let drift = DriftField::constant(&mesh, &pm, [1.0, 2.0]).unwrap();
        let ctx = CellContext::new(&mesh, &pm, &varying_d, &drift).unwrap();
        let a = ctx.solve(2.5).unwrap();
        let b = ctx.solve(2.5).unwrap();
        assert_eq!(a.w[0], b.w[0]);
        assert_eq!(a.w[1], b.w[1]);
        assert_eq!(a.multipliers, b.multipliers);
    }

    #[test]
    fn correctors_have_zero_mean() {
        let (mesh, pm) = build_cell_mesh(
            &[HoleSpec::Rectangle { min: [0.3, 0.3], max: [0.7, 0.7] }],
            10,
        )
        .unwrap();
        let drift = DriftField::constant(&mesh, &pm, [0.5, 0.25]).unwrap();
        let ctx = CellContext::new(&mesh, &pm, &varying_d, &drift).unwrap();
        for p in [0.0, 1.0, -6.0] {
            let sol = ctx.solve(p).unwrap();
            assert!(sol.mean_abs[0] <= 1e-10, "p={p}: mean {:.2e}", sol.mean_abs[0]);
            assert!(sol.mean_abs[1] <= 1e-10, "p={p}: mean {:.2e}", sol.mean_abs[1]);
        }
    }

    #[test]
    fn drift_free_tensor_is_symmetric() {
        let (mesh, pm) = build_cell_mesh(
            &[HoleSpec::Rectangle { min: [0.3, 0.3], max: [0.7, 0.7] }],
            16,
        )
        .unwrap();
        let drift = DriftField::constant(&mesh, &pm, [0.0, 0.0]).unwrap();
        let d = |p: [f64; 2]| {
            let s = 2.0 + (PI * p[0]).sin() * (PI * p[1]).sin();
            [[s, 0.4], [0.4, 3.0 - (PI * p[1]).cos()]]
        };
        let ctx = CellContext::new(&mesh, &pm, &d, &drift).unwrap();
        let tensor = ctx.tensor_at(5.0).unwrap();
        assert!(
            (tensor.d[0][1] - tensor.d[1][0]).abs() <= 1e-10,
            "off-diagonal asymmetry {:.2e}",
            (tensor.d[0][1] - tensor.d[1][0]).abs()
        );
        // correctors are nonzero here, and the tensor stays positive
        assert!(tensor.min_symmetric_eigenvalue() > 0.0);
    }

    #[test]
    fn zero_parameter_matches_advection_free_oracle() {
        use crate::fem::append_zero_mean;
        use crate::sparse::lu_solve;

        let (mesh, pm) = build_cell_mesh(
            &[HoleSpec::Rectangle { min: [0.3, 0.3], max: [0.7, 0.7] }],
            10,
        )
        .unwrap();
        // a wild drift: irrelevant at p = 0
        let drift = DriftField::constant(&mesh, &pm, [37.0, -12.0]).unwrap();
        let ctx = CellContext::new(&mesh, &pm, &varying_d, &drift).unwrap();
        let sol = ctx.solve(0.0).unwrap();

        let dm = DofMap::for_p1(&mesh, Some(&pm)).unwrap();
        for i in 0..2 {
            let mut a = assemble_bilinear(&mesh, &dm, Form::Diffusion(&varying_d)).unwrap();
            let mut b = assemble_cell_rhs(&mesh, &dm, &varying_d, i + 1).unwrap();
            append_zero_mean(&mut a, &mut b, &mesh, &dm).unwrap();
            let x = lu_solve(&a.to_csr().unwrap(), &b).unwrap();
            let worst = sol.w[i]
                .iter()
                .zip(&x)
                .map(|(u, v)| (u - v).abs())
                .fold(0.0f64, f64::max);
            assert!(worst <= 1e-12, "corrector {i} deviates by {worst:.2e}");
        }
    }

    #[test]
    fn average_diffusion_matches_analytic_integrals() {
        let (mesh, pm) = build_cell_mesh(&[], 32).unwrap();
        let drift = DriftField::constant(&mesh, &pm, [0.0, 0.0]).unwrap();
        let ctx = CellContext::new(&mesh, &pm, &varying_d, &drift).unwrap();
        let avg = ctx.average_diffusion();
        let expect =
            DispersionTensor { d: [[2.0 + 4.0 / (PI * PI), 0.0], [0.0, 2.0 + 2.0 / PI]] };
        assert!(
            avg.max_abs_diff(&expect) <= 1e-8,
            "plain average off by {:.2e}",
            avg.max_abs_diff(&expect)
        );
    }

    #[test]
    fn assumption_check_flags_indefinite_coefficients() {
        let (mesh, _) = build_cell_mesh(&[], 6).unwrap();
        let identity_report = check_assumptions(&mesh, &IDENTITY);
        assert!(identity_report.pass());
        assert_eq!(identity_report.theta_min, 1.0);
        assert_eq!(identity_report.max_norm, 1.0);

        let indefinite = |_: [f64; 2]| [[1.0, 0.0], [0.0, -1.0]];
        assert!(!check_assumptions(&mesh, &indefinite).pass());

        // entries of the varying coefficient stay ≥ 1
        let report = check_assumptions(&mesh, &varying_d);
        assert!(report.theta_min >= 1.0 - 1e-12, "theta {:.3}", report.theta_min);
        assert!(report.max_norm <= 3.0 + 1e-12);
    }

    #[test]
    fn infinite_parameter_is_rejected() {
        let (mesh, pm) = build_cell_mesh(&[], 4).unwrap();
        let drift = DriftField::constant(&mesh, &pm, [0.0, 0.0]).unwrap();
        let ctx = CellContext::new(&mesh, &pm, &IDENTITY, &drift).unwrap();
        assert!(matches!(ctx.solve(f64::NAN), Err(Error::InvalidInput(_))));
        assert!(matches!(ctx.solve(f64::INFINITY), Err(Error::InvalidInput(_))));
    }
}
