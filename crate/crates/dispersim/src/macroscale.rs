//! Macroscopic parabolic stepper: P1 elements in space, implicit Euler in
//! time, with a per-node dispersion tensor field interpolated linearly inside
//! each triangle. Also houses the L²(Ω) and L²(S; L²(Ω)) norms used to
//! compare trajectories, including across mesh refinement levels.

use crate::cell::DispersionTensor;
use crate::fem::{
    apply_dirichlet, assemble_bilinear, assemble_load, DofMap, Form, MatrixCoefficient,
    ScalarCoefficient,
};
use crate::mesh::Mesh;
use crate::sparse::{lu_solve, CsrMatrix, Triplets};
use crate::{Error, Result};

/// Nodal macroscopic solution at one time level.
#[derive(Debug, Clone)]
pub struct MacroState {
    pub t: f64,
    pub values: Vec<f64>,
}

impl MacroState {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// One dispersion tensor per macro-mesh vertex.
#[derive(Debug, Clone)]
pub struct TensorField {
    tensors: Vec<DispersionTensor>,
}

impl TensorField {
    pub fn new(tensors: Vec<DispersionTensor>) -> Result<TensorField> {
        if let Some(bad) = tensors.iter().position(|t| !t.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "tensor field has non-finite entries at node {bad}"
            )));
        }
        Ok(TensorField { tensors })
    }

    pub fn constant(n_nodes: usize, tensor: DispersionTensor) -> TensorField {
        TensorField { tensors: vec![tensor; n_nodes] }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, node: usize) -> &DispersionTensor {
        &self.tensors[node]
    }

    pub fn as_slice(&self) -> &[DispersionTensor] {
        &self.tensors
    }
}

/// In-element P1 interpolant of the nodal tensors, sampled at quadrature
/// points during stiffness assembly.
struct NodalTensorCoefficient<'a> {
    mesh: &'a Mesh,
    field: &'a TensorField,
}

impl MatrixCoefficient for NodalTensorCoefficient<'_> {
    fn eval(&self, tri: usize, bary: [f64; 3], _xy: [f64; 2]) -> [[f64; 2]; 2] {
        let verts = self.mesh.triangles[tri];
        let mut m = [[0.0; 2]; 2];
        for (k, &v) in verts.iter().enumerate() {
            let t = self.field.get(v);
            for r in 0..2 {
                for c in 0..2 {
                    m[r][c] += bary[k] * t.d[r][c];
                }
            }
        }
        m
    }
}

/// Time-dependent Dirichlet boundary values.
pub trait BoundaryCondition {
    fn value(&self, t: f64, p: [f64; 2]) -> f64;
}

impl<F: Fn(f64, [f64; 2]) -> f64> BoundaryCondition for F {
    fn value(&self, t: f64, p: [f64; 2]) -> f64 {
        self(t, p)
    }
}

/// Nodal interpolant of a spatial field on the mesh vertices.
pub fn nodal_values(mesh: &Mesh, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    mesh.vertices.iter().map(|&p| f(p)).collect()
}

/// Implicit-Euler stepper on a fixed macro mesh with Dirichlet boundary on
/// every outer edge; the mass matrix is assembled once and reused by every
/// step and by the norms.
pub struct Stepper {
    mesh: Mesh,
    dm: DofMap,
    mass: Triplets,
    mass_csr: CsrMatrix,
    boundary: Vec<usize>,
}

impl Stepper {
    pub fn new(mesh: &Mesh) -> Result<Stepper> {
        let dm = DofMap::for_p1(mesh, None)?;
        let mass = assemble_bilinear(mesh, &dm, Form::Mass)?;
        let mass_csr = mass.to_csr()?;
        let mut boundary: Vec<usize> =
            mesh.boundary_edges.iter().flat_map(|e| e.vertices).collect();
        boundary.sort_unstable();
        boundary.dedup();
        Ok(Stepper { mesh: mesh.clone(), dm, mass, mass_csr, boundary })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn n_dofs(&self) -> usize {
        self.dm.n_dofs()
    }

    pub fn boundary_vertices(&self) -> &[usize] {
        &self.boundary
    }

    /// Interpolates the initial condition, with boundary values taken from
    /// the boundary condition at t = 0 so the discrete state is admissible.
    pub fn initial_state(
        &self,
        u0: impl Fn([f64; 2]) -> f64,
        bc: &dyn BoundaryCondition,
    ) -> MacroState {
        let mut values = nodal_values(&self.mesh, u0);
        for &v in &self.boundary {
            values[v] = bc.value(0.0, self.mesh.vertices[v]);
        }
        MacroState { t: 0.0, values }
    }

    /// One implicit Euler step: solves
    ///   (M + Δt·K(tensors)) u_n = M u_prev + Δt·load(f)
    /// with Dirichlet rows pinned to the boundary values at the new time.
    pub fn step(
        &self,
        u_prev: &MacroState,
        tensors: &TensorField,
        f: &dyn ScalarCoefficient,
        dt: f64,
        bc: &dyn BoundaryCondition,
    ) -> Result<MacroState> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
        }
        let n = self.dm.n_dofs();
        if u_prev.values.len() != n || tensors.len() != n {
            return Err(Error::InvalidInput(format!(
                "state ({}) and tensor field ({}) must both have {n} nodes",
                u_prev.values.len(),
                tensors.len()
            )));
        }
        let t_new = u_prev.t + dt;

        let coeff = NodalTensorCoefficient { mesh: &self.mesh, field: tensors };
        let stiff = assemble_bilinear(&self.mesh, &self.dm, Form::Diffusion(&coeff))?;
        let mut sys = self.mass.clone();
        sys.append_scaled(&stiff, dt);

        let load = assemble_load(&self.mesh, &self.dm, f)?;
        let mut rhs = self.mass_csr.matvec(&u_prev.values);
        for (r, l) in rhs.iter_mut().zip(&load) {
            *r += dt * l;
        }

        let constraints: Vec<(usize, f64)> = self
            .boundary
            .iter()
            .map(|&v| (v, bc.value(t_new, self.mesh.vertices[v])))
            .collect();
        apply_dirichlet(&mut sys, &mut rhs, &constraints)?;
        let mut values = lu_solve(&sys.to_csr()?, &rhs)?;
        // essential values are imposed, not solved for
        for (v, val) in constraints {
            values[v] = val;
        }
        Ok(MacroState { t: t_new, values })
    }

    /// √(vᵀ M v) — the L²(Ω) norm of a P1 field.
    pub fn l2_space(&self, values: &[f64]) -> f64 {
        let mv = self.mass_csr.matvec(values);
        values.iter().zip(&mv).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
    }

    /// √(Δt Σ_{n≥1} ‖u_n‖²) — right-endpoint rectangle rule over the
    /// trajectory, excluding the initial state.
    pub fn l2_space_time(&self, trajectory: &[MacroState], dt: f64) -> Result<f64> {
        if trajectory.is_empty() {
            return Err(Error::InvalidInput("empty trajectory".into()));
        }
        let mut acc = 0.0;
        for state in &trajectory[1..] {
            let s = self.l2_space(&state.values);
            acc += s * s;
        }
        Ok((dt * acc).sqrt())
    }

    /// Space-time norm of the nodewise difference of two equal-length
    /// trajectories on this mesh.
    pub fn l2_space_time_diff(
        &self,
        a: &[MacroState],
        b: &[MacroState],
        dt: f64,
    ) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::InvalidInput(format!(
                "cannot difference trajectories of lengths {} and {}",
                a.len(),
                b.len()
            )));
        }
        let diffs: Vec<MacroState> = a
            .iter()
            .zip(b)
            .map(|(ua, ub)| MacroState {
                t: ua.t,
                values: ua.values.iter().zip(&ub.values).map(|(x, y)| x - y).collect(),
            })
            .collect();
        self.l2_space_time(&diffs, dt)
    }
}

/// Space-time difference between a coarse trajectory and a fine one: the
/// coarse field is P1-evaluated at fine vertices and compared at the coarse
/// time stamps, which requires the fine step count to be a multiple of the
/// coarse one. Returns the L²(S; L²) norm measured with the fine mass matrix.
pub fn coarse_to_fine_difference(
    coarse_mesh: &Mesh,
    coarse: &[MacroState],
    fine_stepper: &Stepper,
    fine: &[MacroState],
) -> Result<f64> {
    if coarse.len() < 2 || fine.len() < 2 {
        return Err(Error::InvalidInput("trajectories need at least one step".into()));
    }
    let m_coarse = coarse.len() - 1;
    let m_fine = fine.len() - 1;
    if m_fine % m_coarse != 0 {
        return Err(Error::InvalidInput(format!(
            "fine step count {m_fine} is not a multiple of coarse step count {m_coarse}"
        )));
    }
    let stride = m_fine / m_coarse;
    let dt_coarse = (coarse[m_coarse].t - coarse[0].t) / m_coarse as f64;
    let fine_mesh = fine_stepper.mesh();
    let mut acc = 0.0;
    for n in 1..=m_coarse {
        let uc = &coarse[n];
        let uf = &fine[n * stride];
        if (uc.t - uf.t).abs() > 1e-9 * (1.0 + uf.t.abs()) {
            return Err(Error::InvalidInput(format!(
                "time stamps misaligned: coarse {} vs fine {}",
                uc.t, uf.t
            )));
        }
        let diff: Vec<f64> = fine_mesh
            .vertices
            .iter()
            .zip(&uf.values)
            .map(|(&p, &vf)| coarse_mesh.eval_p1(&uc.values, p) - vf)
            .collect();
        let s = fine_stepper.l2_space(&diff);
        acc += dt_coarse * s * s;
    }
    Ok(acc.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_rect_mesh;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const ZERO_BC: fn(f64, [f64; 2]) -> f64 = |_, _| 0.0;
    const NO_SOURCE: fn([f64; 2]) -> f64 = |_| 0.0;

    fn identity_field(n: usize) -> TensorField {
        TensorField::constant(n, DispersionTensor::identity())
    }

    #[test]
    fn zero_state_stays_zero() {
        let mesh = build_rect_mesh([0.0, 1.0], [0.0, 1.0], 4, 4).unwrap();
        let stepper = Stepper::new(&mesh).unwrap();
        let u0 = MacroState { t: 0.0, values: vec![0.0; stepper.n_dofs()] };
        let u1 = stepper
            .step(&u0, &identity_field(stepper.n_dofs()), &NO_SOURCE, 0.1, &ZERO_BC)
            .unwrap();
        assert_eq!(u1.t, 0.1);
        assert!(u1.max_abs() == 0.0);
    }

    #[test]
    fn heat_equation_matches_separable_solution_and_converges() {
        let exact = |t: f64, p: [f64; 2]| {
            (-2.0 * PI * PI * t).exp() * (PI * p[0]).sin() * (PI * p[1]).sin()
        };
        let run = |n: usize, m: usize| -> f64 {
            let mesh = build_rect_mesh([0.0, 1.0], [0.0, 1.0], n, n).unwrap();
            let stepper = Stepper::new(&mesh).unwrap();
            let field = identity_field(stepper.n_dofs());
            let dt = 0.1 / m as f64;
            let mut u = stepper.initial_state(|p| exact(0.0, p), &ZERO_BC);
            for _ in 0..m {
                u = stepper.step(&u, &field, &NO_SOURCE, dt, &ZERO_BC).unwrap();
            }
            let reference = nodal_values(&mesh, |p| exact(0.1, p));
            let diff: Vec<f64> =
                u.values.iter().zip(&reference).map(|(a, b)| a - b).collect();
            stepper.l2_space(&diff) / stepper.l2_space(&reference)
        };
        let coarse = run(8, 16);
        let fine = run(16, 64);
        assert!(coarse < 0.05, "coarse relative error {coarse:.4}");
        assert!(fine < 0.5 * coarse, "no convergence: {coarse:.5} -> {fine:.5}");
    }

    #[test]
    fn huge_step_approaches_the_stationary_solution() {
        let mesh = build_rect_mesh([0.0, 1.0], [0.0, 1.0], 12, 12).unwrap();
        let stepper = Stepper::new(&mesh).unwrap();
        let field = identity_field(stepper.n_dofs());
        let one = |_: [f64; 2]| 1.0;
        let u0 = MacroState { t: 0.0, values: vec![0.0; stepper.n_dofs()] };
        let u = stepper.step(&u0, &field, &one, 1e6, &ZERO_BC).unwrap();

        // stationary oracle: K u = load with the same Dirichlet rows
        let dm = DofMap::for_p1(&mesh, None).unwrap();
        let identity = |_: [f64; 2]| [[1.0, 0.0], [0.0, 1.0]];
        let mut k = assemble_bilinear(&mesh, &dm, Form::Diffusion(&identity)).unwrap();
        let mut rhs = assemble_load(&mesh, &dm, &one).unwrap();
        let bc: Vec<(usize, f64)> =
            stepper.boundary_vertices().iter().map(|&v| (v, 0.0)).collect();
        apply_dirichlet(&mut k, &mut rhs, &bc).unwrap();
        let stationary = lu_solve(&k.to_csr().unwrap(), &rhs).unwrap();

        let diff: Vec<f64> =
            u.values.iter().zip(&stationary).map(|(a, b)| a - b).collect();
        let rel = stepper.l2_space(&diff) / stepper.l2_space(&stationary);
        assert!(rel <= 1e-2, "relative deviation {rel:.2e}");
    }

    #[test]
    fn space_norm_closed_forms() {
        let mesh = build_rect_mesh([0.0, 1.0], [0.0, 2.0], 6, 12).unwrap();
        let stepper = Stepper::new(&mesh).unwrap();
        let ones = vec![1.0; stepper.n_dofs()];
        assert!((stepper.l2_space(&ones) - 2.0f64.sqrt()).abs() <= 1e-12);
        assert_eq!(stepper.l2_space(&vec![0.0; stepper.n_dofs()]), 0.0);

        let unit = build_rect_mesh([0.0, 1.0], [0.0, 1.0], 9, 9).unwrap();
        let s = Stepper::new(&unit).unwrap();
        let x1 = nodal_values(&unit, |p| p[0]);
        assert!(
            (s.l2_space(&x1) - 1.0 / 3.0f64.sqrt()).abs() <= 1e-12,
            "linear fields integrate exactly"
        );
    }

    #[test]
    fn space_time_norm_closed_forms() {
        let mesh = build_rect_mesh([0.0, 1.0], [0.0, 2.0], 3, 6).unwrap();
        let stepper = Stepper::new(&mesh).unwrap();
        let n = stepper.n_dofs();
        let constant: Vec<MacroState> = (0..=5)
            .map(|k| MacroState { t: 0.4 * k as f64, values: vec![1.0; n] })
            .collect();
        assert!((stepper.l2_space_time(&constant, 0.4).unwrap() - 2.0).abs() <= 1e-12);

        let unit = build_rect_mesh([0.0, 1.0], [0.0, 1.0], 3, 3).unwrap();
        let s = Stepper::new(&unit).unwrap();
        let ramp: Vec<MacroState> = (0..=4)
            .map(|k| MacroState {
                t: 0.25 * k as f64,
                values: vec![0.25 * k as f64; s.n_dofs()],
            })
            .collect();
        let expect = (0.25f64 * (0.0625 + 0.25 + 0.5625 + 1.0)).sqrt();
        assert!((s.l2_space_time(&ramp, 0.25).unwrap() - expect).abs() <= 1e-12);
        assert!(s.l2_space_time(&[], 0.25).is_err());
    }

    #[test]
    fn differencing_commutes_with_norming() {
        let mesh = build_rect_mesh([0.0, 1.0], [0.0, 1.0], 4, 4).unwrap();
        let stepper = Stepper::new(&mesh).unwrap();
        let n = stepper.n_dofs();
        let make = |seed: f64| -> Vec<MacroState> {
            (0..=3)
                .map(|k| MacroState {
                    t: k as f64 * 0.1,
                    values: (0..n).map(|j| ((j as f64) * seed + k as f64).sin()).collect(),
                })
                .collect()
        };
        let (a, b) = (make(0.37), make(1.11));
        let direct = stepper.l2_space_time_diff(&a, &b, 0.1).unwrap();
        let diffs: Vec<MacroState> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| MacroState {
                t: x.t,
                values: x.values.iter().zip(&y.values).map(|(p, q)| p - q).collect(),
            })
            .collect();
        let via_states = stepper.l2_space_time(&diffs, 0.1).unwrap();
        assert_eq!(direct, via_states);
        assert!(stepper.l2_space_time_diff(&a, &b[..3], 0.1).is_err());
    }

    #[test]
    fn step_is_linear_in_state_and_source() {
        let mesh = build_rect_mesh([0.0, 1.0], [0.0, 1.0], 5, 5).unwrap();
        let stepper = Stepper::new(&mesh).unwrap();
        let n = stepper.n_dofs();
        // an asymmetric but positive-definite tensor field
        let field = TensorField::constant(
            n,
            DispersionTensor { d: [[2.0, 0.7], [-0.3, 1.5]] },
        );
        let u = MacroState {
            t: 0.0,
            values: (0..n).map(|j| (j as f64 * 0.61).cos()).collect(),
        };
        let v = MacroState {
            t: 0.0,
            values: (0..n).map(|j| (j as f64 * 0.23).sin()).collect(),
        };
        let f = |p: [f64; 2]| p[0] - p[1];
        let g = |p: [f64; 2]| p[0] * p[1];
        let dt = 0.05;
        let step_uf = stepper.step(&u, &field, &f, dt, &ZERO_BC).unwrap();
        let step_vg = stepper.step(&v, &field, &g, dt, &ZERO_BC).unwrap();
        let combo_state = MacroState {
            t: 0.0,
            values: u.values.iter().zip(&v.values).map(|(a, b)| 2.0 * a - b).collect(),
        };
        let combo_f = |p: [f64; 2]| 2.0 * f(p) - g(p);
        let combined = stepper.step(&combo_state, &field, &combo_f, dt, &ZERO_BC).unwrap();
        let scale = combined.max_abs().max(1.0);
        for ((c, a), b) in combined.values.iter().zip(&step_uf.values).zip(&step_vg.values) {
            assert!((c - (2.0 * a - b)).abs() <= 1e-11 * scale);
        }
    }

    #[test]
    fn coarse_to_fine_comparison_detects_refinement() {
        // the same smooth function sampled on both meshes: the comparison sees
        // only the P1 interpolation gap, which shrinks under refinement
        let f = |t: f64, p: [f64; 2]| (1.0 + t) * (PI * p[0]).sin() * (PI * p[1]).sin();
        let sample = |mesh: &Mesh, m: usize| -> Vec<MacroState> {
            (0..=m)
                .map(|k| {
                    let t = k as f64 / m as f64;
                    MacroState { t, values: nodal_values(mesh, |p| f(t, p)) }
                })
                .collect()
        };
        let coarse_mesh = build_rect_mesh([0.0, 1.0], [0.0, 1.0], 4, 4).unwrap();
        let mid_mesh = build_rect_mesh([0.0, 1.0], [0.0, 1.0], 8, 8).unwrap();
        let fine_mesh = build_rect_mesh([0.0, 1.0], [0.0, 1.0], 16, 16).unwrap();
        let fine_stepper = Stepper::new(&fine_mesh).unwrap();
        let fine = sample(&fine_mesh, 8);

        let gap_coarse =
            coarse_to_fine_difference(&coarse_mesh, &sample(&coarse_mesh, 2), &fine_stepper, &fine)
                .unwrap();
        let gap_mid =
            coarse_to_fine_difference(&mid_mesh, &sample(&mid_mesh, 4), &fine_stepper, &fine)
                .unwrap();
        assert!(gap_mid < 0.35 * gap_coarse, "{gap_coarse:.2e} -> {gap_mid:.2e}");

        // a non-divisible step count is rejected
        let bad = sample(&coarse_mesh, 3);
        assert!(
            coarse_to_fine_difference(&coarse_mesh, &bad, &fine_stepper, &fine).is_err()
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        /// With no source and homogeneous boundary values the L² norm never
        /// grows, whatever the step size.
        #[test]
        fn unforced_steps_never_grow_the_l2_norm(
            dt in 1e-4..1e3f64,
            skew in -0.8..0.8f64,
            seed in 0u64..1000,
        ) {
            let mesh = build_rect_mesh([0.0, 1.0], [0.0, 1.0], 6, 6).unwrap();
            let stepper = Stepper::new(&mesh).unwrap();
            let n = stepper.n_dofs();
            let field = TensorField::constant(
                n,
                DispersionTensor { d: [[1.5, skew], [-skew, 1.2]] },
            );
            let mut u = MacroState {
                t: 0.0,
                values: (0..n)
                    .map(|j| ((j as u64 * 2654435761 + seed) % 1000) as f64 / 500.0 - 1.0)
                    .collect(),
            };
            for &v in stepper.boundary_vertices() {
                u.values[v] = 0.0;
            }
            let mut prev = stepper.l2_space(&u.values);
            for _ in 0..3 {
                u = stepper.step(&u, &field, &NO_SOURCE, dt, &ZERO_BC).unwrap();
                let cur = stepper.l2_space(&u.values);
                prop_assert!(cur <= prev * (1.0 + 1e-12), "{prev} -> {cur}");
                prev = cur;
            }
        }
    }
}
