//! The acceptance gate: eleven end-to-end guarantees, one test each, every
//! test printing a single `ACCEPTANCE <n> PASS|FAIL` line with the measured
//! numbers before asserting. Expensive artifacts (Stokes drifts, dispersion
//! tables, inflow trajectories) are built once and shared.

use dispersim::cell::{CellContext, CellSolution, DispersionTensor};
use dispersim::disptable::{build_table, p_grid, DispersionTable, TableMeta};
use dispersim::macroscale::{coarse_to_fine_difference, MacroState, Stepper};
use dispersim::mesh::{build_cell_mesh, build_rect_mesh, Mesh, PeriodicMap};
use dispersim::schemes::{run_scheme1, run_scheme2, IterationLog, RunConfig, TensorSource, Timings};
use dispersim::stokes::{solve_stokes, verify_drift, DriftField};
use dispersim_cli::config::{Config, SourceConfig};
use dispersim_cli::presets::load_preset;
use dispersim_cli::studies::fit_log_slope;
use std::f64::consts::PI;
use std::sync::OnceLock;
use std::time::Instant;

fn verdict(criterion: usize, ok: bool, detail: String) -> bool {
    let tag = if ok { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {criterion} {tag} [{detail}]");
    ok
}

/// Micro-scale artifacts for one geometry: mesh, periodic pairing, Stokes
/// drift, and the assembled cell context.
struct MicroPack {
    mesh: Mesh,
    pm: PeriodicMap,
    drift: DriftField,
    ctx: CellContext,
    stokes_seconds: f64,
}

fn build_micro(cfg: &Config) -> MicroPack {
    let (mesh, pm) = build_cell_mesh(&cfg.hole_specs(), cfg.micro.resolution).unwrap();
    let force_cfg = cfg.micro.force.clone();
    let force = move |p: [f64; 2]| force_cfg.eval(p);
    let tic = Instant::now();
    let drift = solve_stokes(&mesh, &pm, cfg.micro.viscosity, &force).unwrap();
    let stokes_seconds = tic.elapsed().as_secs_f64();
    let diff_cfg = cfg.micro.diffusion.clone();
    let d = move |p: [f64; 2]| diff_cfg.eval(p);
    let ctx = CellContext::new(&mesh, &pm, &d, &drift).unwrap();
    MicroPack { mesh, pm, drift, ctx, stokes_seconds }
}

fn macro_stepper(cfg: &Config, nx: usize, ny: usize) -> Stepper {
    let dom = cfg.macroscale.domain;
    let mesh = build_rect_mesh(dom[0], dom[1], nx, ny).unwrap();
    Stepper::new(&mesh).unwrap()
}

/// One scheme run wired from a config: closures for the data, the tensor
/// source chosen by the caller. `picard` selects the fixed-point scheme.
fn run(
    cfg: &Config,
    stepper: &Stepper,
    tensors: TensorSource,
    steps: usize,
    picard: bool,
) -> (Vec<MacroState>, Option<IterationLog>, Timings) {
    let init_cfg = cfg.macroscale.initial.clone();
    let u0 = move |p: [f64; 2]| init_cfg.eval(p);
    let src_cfg = cfg.macroscale.source.clone();
    let source = move |p: [f64; 2]| src_cfg.eval(p);
    let bc_cfg = cfg.macroscale.boundary.clone();
    let y_min = cfg.macroscale.domain[1][0];
    let bc = move |t: f64, p: [f64; 2]| bc_cfg.eval(t, p, y_min);
    let rc = RunConfig {
        stepper,
        tensors,
        interaction: cfg.interaction(),
        u0: &u0,
        source: &source,
        bc: &bc,
        t_final: cfg.macroscale.t_final,
        steps,
        picard_tol: cfg.picard.tol,
        max_picard_iters: cfg.picard.max_iters,
    };
    if picard {
        let (traj, log, timings) = run_scheme1(&rc).unwrap();
        (traj, Some(log), timings)
    } else {
        let (traj, timings) = run_scheme2(&rc).unwrap();
        (traj, None, timings)
    }
}

/// Everything criterion 10/11 needs from an inflow experiment.
struct InflowOutcome {
    sup: f64,
    final_state: MacroState,
    mesh: Mesh,
}

fn inflow_outcome(cfg: &Config, table: &DispersionTable) -> InflowOutcome {
    let stepper = macro_stepper(cfg, cfg.macroscale.nx, cfg.macroscale.ny);
    let (mut traj, _, _) =
        run(cfg, &stepper, TensorSource::Precomputed(table), cfg.macroscale.steps, false);
    let sup = traj.iter().map(MacroState::max_abs).fold(0.0, f64::max);
    let final_state = traj.pop().unwrap();
    InflowOutcome { sup, final_state, mesh: stepper.mesh().clone() }
}

struct Artifacts {
    pulse: Config,
    open: MicroPack,
    /// Tables over the ellipse geometry with 101 / 201 / 401 knots on the
    /// inner segment [-10, 10] (201 / 401 / 801 knots in total).
    open_tables: [DispersionTable; 3],
    inflow_open: InflowOutcome,
    inflow_blocked: InflowOutcome,
}

static ARTIFACTS: OnceLock<Artifacts> = OnceLock::new();

fn artifacts() -> &'static Artifacts {
    ARTIFACTS.get_or_init(|| {
        let pulse = load_preset("pulse-ellipses").unwrap();
        let inflow_open_cfg = load_preset("inflow-ellipses").unwrap();
        let inflow_blocked_cfg = load_preset("inflow-slabs").unwrap();

        println!("[artifacts] solving the ellipse-geometry Stokes problem ...");
        let open = build_micro(&pulse);
        println!("[artifacts]   done in {:.1}s", open.stokes_seconds);
        println!("[artifacts] solving the slab-geometry Stokes problem ...");
        let blocked = build_micro(&inflow_blocked_cfg);
        println!("[artifacts]   done in {:.1}s", blocked.stokes_seconds);

        let mut tables = Vec::new();
        for inner in [101usize, 201, 401] {
            let tic = Instant::now();
            let knots = p_grid(inner).unwrap();
            let table = build_table(&open.ctx, &knots, TableMeta::new()).unwrap();
            println!(
                "[artifacts] ellipse table, {} knots, {:.1}s",
                table.len(),
                tic.elapsed().as_secs_f64()
            );
            tables.push(table);
        }
        let open_tables: [DispersionTable; 3] = tables.try_into().unwrap();
        let knots = p_grid(101).unwrap();
        let blocked_table = build_table(&blocked.ctx, &knots, TableMeta::new()).unwrap();
        drop(blocked);

        println!("[artifacts] running the two inflow experiments ...");
        let inflow_open = inflow_outcome(&inflow_open_cfg, &open_tables[0]);
        let inflow_blocked = inflow_outcome(&inflow_blocked_cfg, &blocked_table);

        Artifacts { pulse, open, open_tables, inflow_open, inflow_blocked }
    })
}

fn sine_diagonal(p: [f64; 2]) -> [[f64; 2]; 2] {
    [[2.0 + (PI * p[0]).sin() * (PI * p[1]).sin(), 0.0], [0.0, 2.0 + (PI * p[0]).sin()]]
}

#[test]
fn acceptance_01_uniform_cells_homogenize_trivially_and_the_tensor_average_is_exact() {
    let tic = Instant::now();
    let (mesh, pm) = build_cell_mesh(&[], 64).unwrap();
    let drift = DriftField::constant(&mesh, &pm, [3.0, -2.0]).unwrap();

    // Constant D = I: the corrector right-hand side vanishes, so the
    // homogenized tensor is the identity for every parameter value.
    let identity = |_: [f64; 2]| [[1.0, 0.0], [0.0, 1.0]];
    let ctx = CellContext::new(&mesh, &pm, &identity, &drift).unwrap();
    let mut uniform_dev = 0.0f64;
    for p in [-5.0, 0.0, 7.0] {
        let tensor = ctx.tensor_at(p).unwrap();
        uniform_dev = uniform_dev.max(tensor.max_abs_diff(&DispersionTensor::identity()));
    }

    // Forced-zero corrector: the tensor assembly reduces to the plain average
    // of D, which is analytic for the sine-diagonal coefficient.
    let ctx = CellContext::new(&mesh, &pm, &sine_diagonal, &drift).unwrap();
    let n = ctx.dof_map().n_dofs();
    let frozen = CellSolution {
        p: 0.0,
        w: [vec![0.0; n], vec![0.0; n]],
        multipliers: [0.0; 2],
        mean_abs: [0.0; 2],
    };
    let averaged = ctx.dispersion(&frozen);
    let expected = DispersionTensor {
        d: [[2.0 + 4.0 / (PI * PI), 0.0], [0.0, 2.0 + 2.0 / PI]],
    };
    let average_dev = averaged.max_abs_diff(&expected);

    let elapsed = tic.elapsed().as_secs_f64();
    let ok = uniform_dev <= 1e-10 && average_dev <= 1e-6 && elapsed < 5.0;
    assert!(verdict(
        1,
        ok,
        format!(
            "uniform-D deviation {uniform_dev:.2e} (tol 1e-10), averaged-D deviation \
             {average_dev:.2e} (tol 1e-6), {elapsed:.2}s (budget 5s)"
        )
    ));
}

#[test]
fn acceptance_02_the_stokes_drift_satisfies_the_model_assumptions_on_the_ellipse_cell() {
    let a = artifacts();
    let tic = Instant::now();
    let report = verify_drift(&a.open.mesh, &a.open.pm, &a.open.drift).unwrap();
    let total_seconds = a.open.stokes_seconds + tic.elapsed().as_secs_f64();
    let ok = report.pass() && total_seconds < 30.0;
    assert!(verdict(
        2,
        ok,
        format!(
            "no-slip {:.2e}, divergence {:.2e}, periodicity {:.2e} (tol 1e-8), \
             solve+verify {total_seconds:.1}s (budget 30s)",
            report.max_noslip, report.max_div, report.max_periodic_mismatch
        )
    ));
}

#[test]
fn acceptance_03_the_fixed_point_iteration_contracts_rapidly_at_the_shipped_pulse_size() {
    let a = artifacts();
    let cfg = &a.pulse;
    let tic = Instant::now();
    let stepper = macro_stepper(cfg, cfg.macroscale.nx, cfg.macroscale.ny);
    let (_, log, _) = run(
        cfg,
        &stepper,
        TensorSource::Precomputed(&a.open_tables[0]),
        cfg.macroscale.steps,
        true,
    );
    let log = log.unwrap();
    let elapsed = tic.elapsed().as_secs_f64();

    let decreasing = log.errors.windows(2).all(|w| w[1] < w[0]);
    let ratios = log.ratios();
    let tail = &ratios.get(1..).unwrap_or(&[]);
    let max_tail_ratio = tail.iter().copied().fold(0.0, f64::max);
    let contracts = tail.iter().all(|&r| r <= 0.1);
    let ok = stepper.n_dofs() >= 1024
        && decreasing
        && contracts
        && log.converged
        && log.iterations() <= 10
        && elapsed <= 600.0;
    assert!(verdict(
        3,
        ok,
        format!(
            "{} dofs, {} sweeps (cap 10), converged={}, first error {:.3e}, last {:.3e}, \
             max late ratio {max_tail_ratio:.3} (tol 0.1), {elapsed:.1}s (budget 600s)",
            stepper.n_dofs(),
            log.iterations(),
            log.converged,
            log.errors.first().copied().unwrap_or(f64::NAN),
            log.errors.last().copied().unwrap_or(f64::NAN),
        )
    ));
}

#[test]
fn acceptance_04_both_decoupling_schemes_produce_the_same_trajectory() {
    let a = artifacts();
    let cfg = &a.pulse;
    let stepper = macro_stepper(cfg, 15, 15); // 256 macro dofs
    let steps = cfg.macroscale.steps;
    let source = TensorSource::Precomputed(&a.open_tables[0]);
    let (iterated, log, _) = run(cfg, &stepper, source, steps, true);
    let source = TensorSource::Precomputed(&a.open_tables[0]);
    let (lagged, _, _) = run(cfg, &stepper, source, steps, false);

    let dt = cfg.macroscale.t_final / steps as f64;
    let gap = stepper.l2_space_time_diff(&iterated, &lagged, dt).unwrap();
    let scale = stepper.l2_space_time(&lagged, dt).unwrap();
    let rel = gap / scale;
    let ok = log.map(|l| l.converged).unwrap_or(false) && rel <= 1e-3;
    assert!(verdict(
        4,
        ok,
        format!("relative scheme gap {rel:.3e} (tol 1e-3) at {} dofs, M={steps}", stepper.n_dofs())
    ));
}

#[test]
fn acceptance_05_the_macro_error_decays_with_second_order_in_space() {
    let a = artifacts();
    let cfg = load_preset("space-ladder").unwrap();
    let tic = Instant::now();
    let steps = cfg.macroscale.steps;
    let levels = [(3usize, 3usize), (7, 7), (15, 15), (31, 31)];

    let mut runs = Vec::new();
    for &(nx, ny) in &levels {
        let stepper = macro_stepper(&cfg, nx, ny);
        let source = TensorSource::Precomputed(&a.open_tables[0]);
        let (traj, _, _) = run(&cfg, &stepper, source, steps, false);
        runs.push((stepper, traj));
    }

    let dom = cfg.macroscale.domain;
    let widths = [dom[0][1] - dom[0][0], dom[1][1] - dom[1][0]];
    let mut hs = Vec::new();
    let mut errors = Vec::new();
    for (coarse, fine) in runs.iter().zip(&runs[1..]) {
        let err =
            coarse_to_fine_difference(coarse.0.mesh(), &coarse.1, &fine.0, &fine.1).unwrap();
        let (nx, ny) = levels[hs.len()];
        hs.push((widths[0] / nx as f64).hypot(widths[1] / ny as f64));
        errors.push(err);
    }
    let slope = fit_log_slope(&hs, &errors).unwrap();
    let elapsed = tic.elapsed().as_secs_f64();
    let shown: Vec<String> = errors.iter().map(|e| format!("{e:.3e}")).collect();
    let ok = (1.7..=2.3).contains(&slope) && elapsed <= 900.0;
    assert!(verdict(
        5,
        ok,
        format!(
            "errors {shown:?} over dof ladder 16..1024, fitted space order {slope:.2} \
             (window [1.7, 2.3]), {elapsed:.1}s (budget 900s)"
        )
    ));
}

#[test]
fn acceptance_06_the_macro_error_decays_with_first_order_in_time() {
    let a = artifacts();
    let cfg = load_preset("time-ladder").unwrap();
    let tic = Instant::now();
    let stepper = macro_stepper(&cfg, cfg.macroscale.nx, cfg.macroscale.ny); // 2500 dofs
    let ladder = [320usize, 640, 1280, 2560, 5120];

    let mut runs = Vec::new();
    for &steps in &ladder {
        let source = TensorSource::Precomputed(&a.open_tables[0]);
        let (traj, _, _) = run(&cfg, &stepper, source, steps, false);
        runs.push(traj);
    }

    let mut dts = Vec::new();
    let mut errors = Vec::new();
    for (i, (coarse, fine)) in runs.iter().zip(&runs[1..]).enumerate() {
        let err = coarse_to_fine_difference(stepper.mesh(), coarse, &stepper, fine).unwrap();
        dts.push(cfg.macroscale.t_final / ladder[i] as f64);
        errors.push(err);
    }
    let slope = fit_log_slope(&dts, &errors).unwrap();
    let elapsed = tic.elapsed().as_secs_f64();
    let shown: Vec<String> = errors.iter().map(|e| format!("{e:.3e}")).collect();
    let ok = (0.8..=1.2).contains(&slope) && elapsed <= 1800.0;
    assert!(verdict(
        6,
        ok,
        format!(
            "errors {shown:?} over M=320..5120 at {} dofs, fitted time order {slope:.2} \
             (window [0.8, 1.2]), {elapsed:.1}s (budget 1800s)",
            stepper.n_dofs()
        )
    ));
}

#[test]
fn acceptance_07_interpolated_tensors_track_the_directly_solved_trajectory() {
    let a = artifacts();
    let cfg = &a.pulse;
    let tic = Instant::now();
    let stepper = macro_stepper(cfg, cfg.macroscale.nx, cfg.macroscale.ny);
    let steps = cfg.macroscale.steps;
    let dt = cfg.macroscale.t_final / steps as f64;

    let (direct, _, direct_timings) =
        run(cfg, &stepper, TensorSource::Direct(&a.open.ctx), steps, false);
    let norm = stepper.l2_space_time(&direct, dt).unwrap();

    let mut rels = Vec::new();
    for table in &a.open_tables {
        let (interp, _, _) = run(cfg, &stepper, TensorSource::Precomputed(table), steps, false);
        let gap = stepper.l2_space_time_diff(&direct, &interp, dt).unwrap();
        rels.push(gap / norm);
    }
    let elapsed = tic.elapsed().as_secs_f64();
    let shown: Vec<String> = rels.iter().map(|e| format!("{e:.3e}")).collect();
    let ok = rels[0] <= 1e-2 && rels[0] > rels[1] && rels[1] > rels[2];
    assert!(verdict(
        7,
        ok,
        format!(
            "relative trajectory errors {shown:?} for 201/301/501-knot tables \
             (first tol 1e-2, strictly decreasing), {} direct cell solves, {elapsed:.1}s",
            direct_timings.cell_solves
        )
    ));
}

#[test]
fn acceptance_08_precomputed_tensors_speed_up_the_online_phase() {
    let a = artifacts();
    let cfg = &a.pulse;
    let stepper = macro_stepper(cfg, 15, 15); // 256 macro dofs
    let steps = cfg.macroscale.steps;

    let (_, _, direct) = run(cfg, &stepper, TensorSource::Direct(&a.open.ctx), steps, false);
    let (_, _, interp) =
        run(cfg, &stepper, TensorSource::Precomputed(&a.open_tables[0]), steps, false);

    let speedup = direct.online_seconds() / interp.online_seconds();
    let ok = direct.cell_solves > 0 && interp.cell_solves == 0 && speedup >= 20.0;
    assert!(verdict(
        8,
        ok,
        format!(
            "online {:.2}s direct ({} cell solves) vs {:.4}s precomputed, speedup {speedup:.0}x \
             (needs 20x)",
            direct.online_seconds(),
            direct.cell_solves,
            interp.online_seconds()
        )
    ));
}

#[test]
fn acceptance_09_table_lookup_is_exact_at_knots_averages_midpoints_and_clamps() {
    let a = artifacts();
    let table = &a.open_tables[0];
    let knots = table.knots();
    let tensors = table.tensors();

    let knots_exact =
        knots.iter().enumerate().all(|(i, &k)| table.interp(k).d == tensors[i].d);

    let mut midpoint_dev = 0.0f64;
    for i in 0..knots.len() - 1 {
        let mid = (knots[i] + knots[i + 1]) / 2.0;
        let got = table.interp(mid);
        for r in 0..2 {
            for c in 0..2 {
                let avg = (tensors[i].d[r][c] + tensors[i + 1].d[r][c]) / 2.0;
                midpoint_dev = midpoint_dev.max((got.d[r][c] - avg).abs());
            }
        }
    }
    let midpoints_average = midpoint_dev <= 1e-13;

    let clamps = table.interp(-1e12).d == tensors[0].d
        && table.interp(1e12).d == tensors[knots.len() - 1].d
        && table.interp(knots[0] - 1.0).d == tensors[0].d
        && table.interp(knots[knots.len() - 1] + 1.0).d == tensors[knots.len() - 1].d;

    let ok = knots_exact && midpoints_average && clamps;
    assert!(verdict(
        9,
        ok,
        format!(
            "{} knots bitwise-exact={knots_exact}, max midpoint deviation {midpoint_dev:.1e} \
             (tol 1e-13), clamping exact={clamps}",
            knots.len()
        )
    ));
}

#[test]
fn acceptance_10_solutions_respect_the_bounds_set_by_data_and_boundary_values() {
    let a = artifacts();

    // Homogeneous problem: zero source, zero boundary values, bounded initial
    // state. The trajectory supremum must never exceed the initial one.
    let mut cfg = a.pulse.clone();
    cfg.macroscale.source = SourceConfig::Zero;
    let stepper = macro_stepper(&cfg, cfg.macroscale.nx, cfg.macroscale.ny);
    let source = TensorSource::Precomputed(&a.open_tables[0]);
    let (traj, _, _) = run(&cfg, &stepper, source, cfg.macroscale.steps, false);
    let sup0 = traj[0].max_abs();
    let sup_traj = traj.iter().map(MacroState::max_abs).fold(0.0, f64::max);
    let homogeneous_ok = sup0 > 0.5 && sup_traj <= sup0 + 1e-10;

    // Inflow problems: the ramped boundary value never exceeds 10, so the
    // solutions stay below 10 up to discretization slack.
    let inflow_bound = 10.0 * 1.05;
    let inflow_ok =
        a.inflow_open.sup <= inflow_bound && a.inflow_blocked.sup <= inflow_bound;

    let ok = homogeneous_ok && inflow_ok;
    assert!(verdict(
        10,
        ok,
        format!(
            "homogeneous sup {sup_traj:.6} vs initial {sup0:.6}, inflow sups {:.3} and {:.3} \
             (bound {inflow_bound})",
            a.inflow_open.sup, a.inflow_blocked.sup
        )
    ));
}

/// Mean of a P1 field over the triangles in the upper half of the domain.
fn top_half_mean(mesh: &Mesh, values: &[f64], y_split: f64) -> f64 {
    let mut integral = 0.0;
    let mut area = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let centroid_y = tri.iter().map(|&v| mesh.vertices[v][1]).sum::<f64>() / 3.0;
        if centroid_y > y_split {
            let tri_area = mesh.triangle_area(t);
            let mean = tri.iter().map(|&v| values[v]).sum::<f64>() / 3.0;
            integral += tri_area * mean;
            area += tri_area;
        }
    }
    integral / area
}

#[test]
fn acceptance_11_slab_obstacles_slow_vertical_transport_compared_to_ellipses() {
    let a = artifacts();
    let open_mean =
        top_half_mean(&a.inflow_open.mesh, &a.inflow_open.final_state.values, 0.5);
    let blocked_mean =
        top_half_mean(&a.inflow_blocked.mesh, &a.inflow_blocked.final_state.values, 0.5);
    let ok = open_mean.is_finite()
        && blocked_mean.is_finite()
        && open_mean > 0.0
        && blocked_mean < open_mean;
    assert!(verdict(
        11,
        ok,
        format!(
            "top-half means at T=2: ellipses {open_mean:.4}, slabs {blocked_mean:.4} \
             (slabs must be strictly smaller)"
        )
    ));
}
