//! Command implementations. Each command loads a config (file or preset),
//! runs one stage of the pipeline, and leaves its artifacts in the output
//! directory; all failures map onto the two exit classes in `CliError`.

use crate::config::{
    Axis, CliError, CliResult, Config, Mode, ResolvedLevel, Scheme,
};
use crate::output::{
    ensure_dir, mesh_vtk, scalar_field_csv, scalar_field_vtk, vector_field_csv, write_text,
    TimingBreakdown,
};
use crate::presets;
use crate::studies::fit_log_slope;
use dispersim::cell::CellContext;
use dispersim::disptable::{build_table, p_grid, DispersionTable, TableMeta};
use dispersim::macroscale::{coarse_to_fine_difference, MacroState, Stepper};
use dispersim::mesh::{build_cell_mesh, build_rect_mesh, Mesh, PeriodicMap};
use dispersim::schemes::{run_scheme1, run_scheme2, IterationLog, RunConfig, TensorSource};
use dispersim::stokes::{solve_stokes, verify_drift, DriftField, DriftReport};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone)]
pub struct CommonArgs {
    pub config: Option<PathBuf>,
    pub preset: Option<String>,
    pub out: PathBuf,
    pub jobs: Option<usize>,
    pub force: bool,
}

pub fn load_config(args: &CommonArgs) -> CliResult<Config> {
    match (&args.config, &args.preset) {
        (Some(_), Some(_)) => Err(usage("pass either --config or --preset, not both")),
        (Some(path), None) => Config::from_file(path),
        (None, Some(name)) => presets::load_preset(name),
        (None, None) => Err(usage(format!(
            "a config is required: pass --config <path> or --preset <name> (presets: {})",
            presets::preset_names().join(", ")
        ))),
    }
}

pub fn configure_jobs(jobs: Option<usize>) -> CliResult<()> {
    let Some(n) = jobs else { return Ok(()) };
    if n == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("cannot configure {n} worker threads: {e}")))
}

struct MicroArtifacts {
    mesh: Mesh,
    pm: PeriodicMap,
    drift: DriftField,
    stokes_seconds: f64,
}

fn build_micro(cfg: &Config, resolution: usize) -> CliResult<MicroArtifacts> {
    let (mesh, pm) = build_cell_mesh(&cfg.hole_specs(), resolution)?;
    let force = cfg.micro.force.clone();
    let f = move |p: [f64; 2]| force.eval(p);
    let t0 = Instant::now();
    let drift = solve_stokes(&mesh, &pm, cfg.micro.viscosity, &f)?;
    Ok(MicroArtifacts { mesh, pm, drift, stokes_seconds: t0.elapsed().as_secs_f64() })
}

fn build_context(cfg: &Config, micro: &MicroArtifacts) -> CliResult<CellContext> {
    let diffusion = cfg.micro.diffusion.clone();
    let d = move |p: [f64; 2]| diffusion.eval(p);
    Ok(CellContext::new(&micro.mesh, &micro.pm, &d, &micro.drift)?)
}

fn table_meta(cfg: &Config, resolution: usize, inner: usize) -> TableMeta {
    let mut meta = TableMeta::new();
    meta.set("geometry", &cfg.geometry_hash()).expect("hex digest");
    meta.set("mu", &format!("{}", cfg.micro.viscosity)).expect("number");
    meta.set("resolution", &resolution.to_string()).expect("number");
    meta.set("inner_knots", &inner.to_string()).expect("number");
    meta
}

fn macro_mesh(cfg: &Config, nx: usize, ny: usize) -> CliResult<Mesh> {
    let [x, y] = cfg.macroscale.domain;
    Ok(build_rect_mesh(x, y, nx, ny)?)
}

struct MacroRun {
    trajectory: Vec<MacroState>,
    log: Option<IterationLog>,
    timings: dispersim::schemes::Timings,
}

fn run_macro(
    cfg: &Config,
    stepper: &Stepper,
    tensors: TensorSource,
    steps: usize,
) -> CliResult<MacroRun> {
    let ma = &cfg.macroscale;
    let init = ma.initial.clone();
    let u0 = move |p: [f64; 2]| init.eval(p);
    let src = ma.source.clone();
    let source = move |p: [f64; 2]| src.eval(p);
    let bcc = ma.boundary.clone();
    let y_min = ma.domain[1][0];
    let bc = move |t: f64, p: [f64; 2]| bcc.eval(t, p, y_min);
    let rc = RunConfig {
        stepper,
        tensors,
        interaction: cfg.interaction(),
        u0: &u0,
        source: &source,
        bc: &bc,
        t_final: ma.t_final,
        steps,
        picard_tol: cfg.picard.tol,
        max_picard_iters: cfg.picard.max_iters,
    };
    match cfg.scheme {
        Scheme::Picard => {
            let (trajectory, log, timings) = run_scheme1(&rc)?;
            Ok(MacroRun { trajectory, log: Some(log), timings })
        }
        Scheme::Timestep => {
            let (trajectory, timings) = run_scheme2(&rc)?;
            Ok(MacroRun { trajectory, log: None, timings })
        }
    }
}

/// Loads a compatible table from `<out>/table.csv` or builds (and persists)
/// a fresh one. Returns the table, the build time (0 when loaded), and
/// whether it was loaded.
fn obtain_table(
    cfg: &Config,
    ctx: &CellContext,
    resolution: usize,
    inner: usize,
    out: &Path,
    force: bool,
) -> CliResult<(DispersionTable, f64, bool)> {
    let path = out.join("table.csv");
    if path.exists() {
        let table = DispersionTable::read_file(&path)?;
        if force {
            return Ok((table, 0.0, true));
        }
        match table.check_geometry(&cfg.geometry_hash()) {
            Ok(()) => {
                let knots_match = table.meta().get("inner_knots")
                    == Some(inner.to_string().as_str())
                    && table.meta().get("resolution") == Some(resolution.to_string().as_str());
                if knots_match {
                    return Ok((table, 0.0, true));
                }
                println!(
                    "table: {} has a different knot grid or cell resolution; rebuilding",
                    path.display()
                );
            }
            Err(e) => return Err(usage(format!("{e} (or pass --force)"))),
        }
    }
    let grid = p_grid(inner)?;
    let t0 = Instant::now();
    let table = build_table(ctx, &grid, table_meta(cfg, resolution, inner))?;
    let seconds = t0.elapsed().as_secs_f64();
    table.write_file(&path)?;
    Ok((table, seconds, false))
}

fn drift_report_csv(report: &DriftReport) -> String {
    let mut out = String::from("max_noslip,max_div,max_periodic_mismatch,tolerance,pass\n");
    let _ = writeln!(
        out,
        "{:.17e},{:.17e},{:.17e},{:.1e},{}",
        report.max_noslip,
        report.max_div,
        report.max_periodic_mismatch,
        DriftReport::TOL,
        report.pass()
    );
    out
}

pub fn cmd_stokes(args: &CommonArgs) -> CliResult<()> {
    let cfg = load_config(args)?;
    configure_jobs(args.jobs)?;
    ensure_dir(&args.out)?;

    let micro = build_micro(&cfg, cfg.micro.resolution)?;
    let report = verify_drift(&micro.mesh, &micro.pm, &micro.drift)?;

    let (vx, vy): (Vec<f64>, Vec<f64>) = micro
        .mesh
        .vertices
        .iter()
        .map(|&p| {
            let v = micro.drift.velocity_at_point(&micro.mesh, p);
            (v[0], v[1])
        })
        .unzip();
    write_text(&args.out.join("drift.csv"), &vector_field_csv(&micro.mesh, &vx, &vy))?;
    write_text(&args.out.join("stokes_report.csv"), &drift_report_csv(&report))?;

    println!(
        "stokes: {} vertices, {} triangles, solved in {:.2}s",
        micro.mesh.n_vertices(),
        micro.mesh.n_triangles(),
        micro.stokes_seconds
    );
    println!(
        "stokes: no-slip {:.3e}, divergence {:.3e}, periodicity {:.3e} (tolerance {:.0e})",
        report.max_noslip,
        report.max_div,
        report.max_periodic_mismatch,
        DriftReport::TOL
    );
    if report.pass() {
        println!("stokes: drift verification PASS");
        Ok(())
    } else {
        Err(CliError::Runtime("drift verification failed; see stokes_report.csv".into()))
    }
}

pub fn cmd_table(args: &CommonArgs, knots: Option<usize>) -> CliResult<()> {
    let cfg = load_config(args)?;
    configure_jobs(args.jobs)?;
    ensure_dir(&args.out)?;

    let inner = knots.unwrap_or(cfg.table.inner_knots);
    if inner < 2 {
        return Err(usage(format!("--knots must be at least 2, got {inner}")));
    }
    let micro = build_micro(&cfg, cfg.micro.resolution)?;
    let ctx = build_context(&cfg, &micro)?;
    let grid = p_grid(inner)?;
    let t0 = Instant::now();
    let table = build_table(&ctx, &grid, table_meta(&cfg, cfg.micro.resolution, inner))?;
    let seconds = t0.elapsed().as_secs_f64();
    let path = args.out.join("table.csv");
    table.write_file(&path)?;

    println!(
        "table: {} knots ({} inner) in {:.2}s + {:.2}s offline drift solve -> {}",
        table.len(),
        inner,
        seconds,
        micro.stokes_seconds,
        path.display()
    );
    Ok(())
}

pub fn cmd_solve(
    args: &CommonArgs,
    scheme: Option<Scheme>,
    mode: Option<Mode>,
) -> CliResult<()> {
    let mut cfg = load_config(args)?;
    if let Some(s) = scheme {
        cfg.scheme = s;
    }
    if let Some(m) = mode {
        cfg.mode = m;
    }
    configure_jobs(args.jobs)?;
    ensure_dir(&args.out)?;

    let micro = build_micro(&cfg, cfg.micro.resolution)?;
    let ctx = build_context(&cfg, &micro)?;
    let table;
    let mut timing = TimingBreakdown {
        offline_stokes_seconds: micro.stokes_seconds,
        ..TimingBreakdown::default()
    };
    let tensors = match cfg.mode {
        Mode::Direct => TensorSource::Direct(&ctx),
        Mode::Precomputed => {
            let (t, seconds, loaded) = obtain_table(
                &cfg,
                &ctx,
                cfg.micro.resolution,
                cfg.table.inner_knots,
                &args.out,
                args.force,
            )?;
            timing.offline_table_seconds = seconds;
            if loaded {
                println!("solve: reusing {}", args.out.join("table.csv").display());
            }
            table = t;
            TensorSource::Precomputed(&table)
        }
    };

    let mesh = macro_mesh(&cfg, cfg.macroscale.nx, cfg.macroscale.ny)?;
    let stepper = Stepper::new(&mesh)?;
    let run = run_macro(&cfg, &stepper, tensors, cfg.macroscale.steps)?;
    timing.online_tensor_seconds = run.timings.tensor_eval_seconds;
    timing.online_step_seconds = run.timings.step_seconds;
    timing.cell_solves = run.timings.cell_solves;

    let last = run.trajectory.last().expect("nonempty trajectory");
    write_text(&args.out.join("final.csv"), &scalar_field_csv(&mesh, &last.values))?;
    write_text(&args.out.join("final.vtk"), &scalar_field_vtk(&mesh, "u", &last.values))?;
    for &n in &cfg.macroscale.dump_steps {
        let state = &run.trajectory[n];
        let base = format!("state_{n:04}");
        write_text(&args.out.join(format!("{base}.csv")), &scalar_field_csv(&mesh, &state.values))?;
        write_text(
            &args.out.join(format!("{base}.vtk")),
            &scalar_field_vtk(&mesh, "u", &state.values),
        )?;
    }
    write_text(&args.out.join("timings.csv"), &timing.to_csv())?;

    let (iterations, converged) = match &run.log {
        Some(log) => (log.iterations(), log.converged),
        None => (0, true),
    };
    if let Some(log) = &run.log {
        let mut text = String::from("k,error,ratio\n");
        for (i, err) in log.errors.iter().enumerate() {
            if i == 0 {
                let _ = writeln!(text, "1,{err:.17e},nan");
            } else {
                let _ = writeln!(text, "{},{:.17e},{:.17e}", i + 1, err, err / log.errors[i - 1]);
            }
        }
        write_text(&args.out.join("iterations.csv"), &text)?;
    }

    let dt = cfg.macroscale.t_final / cfg.macroscale.steps as f64;
    let norm = stepper.l2_space_time(&run.trajectory, dt)?;
    let mut summary = String::from(
        "scheme,mode,macro_dofs,steps,t_final,iterations,converged,final_sup,l2_space_time\n",
    );
    let _ = writeln!(
        summary,
        "{},{},{},{},{},{},{},{:.17e},{:.17e}",
        cfg.scheme.as_str(),
        cfg.mode.as_str(),
        stepper.n_dofs(),
        cfg.macroscale.steps,
        cfg.macroscale.t_final,
        iterations,
        converged,
        last.max_abs(),
        norm
    );
    write_text(&args.out.join("summary.csv"), &summary)?;

    println!(
        "solve: scheme={} mode={} dofs={} steps={} -> sup|u(T)| = {:.6}",
        cfg.scheme.as_str(),
        cfg.mode.as_str(),
        stepper.n_dofs(),
        cfg.macroscale.steps,
        last.max_abs()
    );
    if let Some(log) = &run.log {
        let status = if log.converged { "converged" } else { "hit the iteration cap" };
        println!(
            "solve: Picard {status} after {} iterations, last error {:.3e}",
            log.iterations(),
            log.errors.last().copied().unwrap_or(0.0)
        );
    }
    println!(
        "solve: offline {:.2}s (stokes {:.2}s, table {:.2}s), online {:.2}s, {} cell solves",
        timing.offline_seconds(),
        timing.offline_stokes_seconds,
        timing.offline_table_seconds,
        timing.online_seconds(),
        timing.cell_solves
    );
    Ok(())
}

struct MicroBundle {
    ctx: CellContext,
    table: Option<DispersionTable>,
    offline_seconds: f64,
}

pub fn cmd_converge(args: &CommonArgs, axis: Option<Axis>) -> CliResult<()> {
    let cfg = load_config(args)?;
    configure_jobs(args.jobs)?;
    ensure_dir(&args.out)?;

    let mut study = cfg
        .study
        .clone()
        .ok_or_else(|| usage("converge needs a study section in the config"))?;
    if let Some(axis) = axis {
        study.axis = axis;
        study.validate(&cfg)?;
    }
    let levels: Vec<ResolvedLevel> =
        study.levels.iter().map(|l| ResolvedLevel::new(l, &cfg)).collect();
    let domain = cfg.macroscale.domain;

    let mut bundles: HashMap<(usize, usize), MicroBundle> = HashMap::new();
    let mut xs: Vec<f64> = Vec::new();
    let mut errors: Vec<f64> = Vec::new();
    let mut rows = String::from(
        "level,nx,ny,dofs,steps,h,dt,offline_seconds,online_seconds,cell_solves,\
         error,log10_h,log10_dt,log10_error\n",
    );
    let mut prev: Option<(Stepper, Vec<MacroState>, ResolvedLevel, TimingBreakdown)> = None;

    for (i, level) in levels.iter().enumerate() {
        let key = (level.micro_resolution, level.inner_knots);
        if !bundles.contains_key(&key) {
            let micro = build_micro(&cfg, level.micro_resolution)?;
            let ctx = build_context(&cfg, &micro)?;
            let mut offline = micro.stokes_seconds;
            let table = match cfg.mode {
                Mode::Direct => None,
                Mode::Precomputed => {
                    let grid = p_grid(level.inner_knots)?;
                    let t0 = Instant::now();
                    let table = build_table(
                        &ctx,
                        &grid,
                        table_meta(&cfg, level.micro_resolution, level.inner_knots),
                    )?;
                    offline += t0.elapsed().as_secs_f64();
                    Some(table)
                }
            };
            println!(
                "converge: level {i} micro bundle (n = {}, {} inner knots) built in {offline:.2}s",
                level.micro_resolution, level.inner_knots
            );
            bundles.insert(key, MicroBundle { ctx, table, offline_seconds: offline });
        }
        let bundle = &bundles[&key];
        let tensors = match cfg.mode {
            Mode::Direct => TensorSource::Direct(&bundle.ctx),
            Mode::Precomputed => {
                TensorSource::Precomputed(bundle.table.as_ref().expect("built above"))
            }
        };

        let mesh = macro_mesh(&cfg, level.nx, level.ny)?;
        let stepper = Stepper::new(&mesh)?;
        drop(mesh);
        let run = run_macro(&cfg, &stepper, tensors, level.steps)?;
        let timing = TimingBreakdown {
            offline_stokes_seconds: 0.0,
            offline_table_seconds: bundle.offline_seconds,
            online_tensor_seconds: run.timings.tensor_eval_seconds,
            online_step_seconds: run.timings.step_seconds,
            cell_solves: run.timings.cell_solves,
        };
        println!(
            "converge: level {i} ({}x{}, M = {}) online {:.2}s",
            level.nx,
            level.ny,
            level.steps,
            timing.online_seconds()
        );

        if let Some((coarse_stepper, coarse_traj, coarse_level, coarse_timing)) = prev.take() {
            let err = coarse_to_fine_difference(
                coarse_stepper.mesh(),
                &coarse_traj,
                &stepper,
                &run.trajectory,
            )?;
            let h = coarse_level.h(domain);
            let dt = cfg.macroscale.t_final / coarse_level.steps as f64;
            xs.push(match study.axis {
                Axis::Time => dt,
                Axis::Space | Axis::Joint => h,
            });
            errors.push(err);
            let _ = writeln!(
                rows,
                "{},{},{},{},{},{:.10e},{:.10e},{:.6},{:.6},{},{:.10e},{:.10},{:.10},{:.10}",
                i - 1,
                coarse_level.nx,
                coarse_level.ny,
                coarse_level.dofs(),
                coarse_level.steps,
                h,
                dt,
                coarse_timing.offline_seconds(),
                coarse_timing.online_seconds(),
                coarse_timing.cell_solves,
                err,
                h.log10(),
                dt.log10(),
                err.log10()
            );
        }
        prev = Some((stepper, run.trajectory, *level, timing));
    }

    let (_, _, last_level, last_timing) = prev.expect("at least three levels");
    let h = last_level.h(domain);
    let dt = cfg.macroscale.t_final / last_level.steps as f64;
    let _ = writeln!(
        rows,
        "{},{},{},{},{},{:.10e},{:.10e},{:.6},{:.6},{},nan,{:.10},{:.10},nan",
        levels.len() - 1,
        last_level.nx,
        last_level.ny,
        last_level.dofs(),
        last_level.steps,
        h,
        dt,
        last_timing.offline_seconds(),
        last_timing.online_seconds(),
        last_timing.cell_solves,
        h.log10(),
        dt.log10()
    );
    write_text(&args.out.join("study.csv"), &rows)?;

    let slope = fit_log_slope(&xs, &errors)?;
    let mut summary = String::from("axis,levels,error_pairs,slope\n");
    let _ = writeln!(
        summary,
        "{},{},{},{:.10}",
        study.axis.as_str(),
        levels.len(),
        errors.len(),
        slope
    );
    write_text(&args.out.join("summary.csv"), &summary)?;

    let shown: Vec<String> = errors.iter().map(|e| format!("{e:.4e}")).collect();
    println!("converge: axis={} errors {:?}", study.axis.as_str(), shown);
    println!("converge: fitted order {slope:.3} over {} error pairs", errors.len());
    Ok(())
}

pub fn cmd_mesh_export(args: &CommonArgs) -> CliResult<()> {
    let cfg = load_config(args)?;
    ensure_dir(&args.out)?;

    let (cell, _pm) = build_cell_mesh(&cfg.hole_specs(), cfg.micro.resolution)?;
    write_text(&args.out.join("cell_mesh.vtk"), &mesh_vtk(&cell, "dispersim cell mesh"))?;
    let mut edges = String::from("x0,y0,x1,y1,marker\n");
    for edge in &cell.boundary_edges {
        let [a, b] = edge.vertices;
        let (pa, pb) = (cell.vertices[a], cell.vertices[b]);
        let _ = writeln!(
            edges,
            "{:.17e},{:.17e},{:.17e},{:.17e},{}",
            pa[0],
            pa[1],
            pb[0],
            pb[1],
            edge.marker.as_str()
        );
    }
    write_text(&args.out.join("cell_boundary.csv"), &edges)?;

    let mac = macro_mesh(&cfg, cfg.macroscale.nx, cfg.macroscale.ny)?;
    write_text(&args.out.join("macro_mesh.vtk"), &mesh_vtk(&mac, "dispersim macro mesh"))?;

    println!(
        "mesh-export: cell {} vertices / {} triangles, macro {} vertices / {} triangles",
        cell.n_vertices(),
        cell.n_triangles(),
        mac.n_vertices(),
        mac.n_triangles()
    );
    Ok(())
}
