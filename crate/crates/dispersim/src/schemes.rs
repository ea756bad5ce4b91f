//! The two decoupling strategies tying the scales together: a whole-trajectory
//! Picard iteration (scheme 1) and per-time-step lagging (scheme 2), each able
//! to obtain tensors either from direct cell solves or from a precomputed
//! interpolation table.

use crate::cell::{CellContext, DispersionTensor};
use crate::disptable::DispersionTable;
use crate::fem::ScalarCoefficient;
use crate::macroscale::{BoundaryCondition, MacroState, Stepper, TensorField};
use crate::{Error, Result};
use rayon::prelude::*;
use std::collections::HashMap;
use std::time::Instant;

/// Named scale-coupling function p = G(u); the registry keeps runs
/// reproducible from plain-text configuration.
#[derive(Debug, Clone, Copy)]
pub struct DriftInteraction {
    name: &'static str,
    f: fn(f64) -> f64,
}

impl DriftInteraction {
    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn eval(&self, u: f64) -> f64 {
        (self.f)(u)
    }
}

const INTERACTIONS: &[DriftInteraction] = &[
    DriftInteraction { name: "1-2u", f: |u| 1.0 - 2.0 * u },
    DriftInteraction { name: "zero", f: |_| 0.0 },
    DriftInteraction { name: "identity", f: |u| u },
];

/// Default coupling used throughout the shipped experiments.
pub const DEFAULT_INTERACTION: &str = "1-2u";

/// Looks up a registered coupling by name.
pub fn drift_interaction(name: &str) -> Result<DriftInteraction> {
    INTERACTIONS.iter().find(|g| g.name == name).copied().ok_or_else(|| {
        let known: Vec<&str> = INTERACTIONS.iter().map(|g| g.name).collect();
        Error::InvalidInput(format!(
            "unknown interaction {name:?}; registered: {}",
            known.join(", ")
        ))
    })
}

/// Where tensors come from: fresh corrector solves per parameter value, or
/// interpolation in a prebuilt table.
#[derive(Clone, Copy)]
pub enum TensorSource<'a> {
    Direct(&'a CellContext),
    Precomputed(&'a DispersionTable),
}

/// Wall-clock accounting for one run, split so that offline artifacts
/// (drift solve, table build — timed by the caller) stay separate from the
/// online cost reported here.
#[derive(Debug, Clone, Copy, Default)]
pub struct Timings {
    /// time spent turning macro states into tensor fields
    pub tensor_eval_seconds: f64,
    /// time spent assembling and solving macro steps
    pub step_seconds: f64,
    /// number of corrector solves actually performed (after deduplication)
    pub cell_solves: usize,
}

impl Timings {
    pub fn online_seconds(&self) -> f64 {
        self.tensor_eval_seconds + self.step_seconds
    }
}

/// Per-iteration Picard diagnostics: e^k = ‖u^{k+1} − u^k‖ in L²(S; L²).
#[derive(Debug, Clone)]
pub struct IterationLog {
    pub errors: Vec<f64>,
    pub converged: bool,
}

impl IterationLog {
    pub fn iterations(&self) -> usize {
        self.errors.len()
    }

    /// Successive ratios e^{k+1}/e^k.
    pub fn ratios(&self) -> Vec<f64> {
        self.errors.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

/// Everything one run needs. The tensor source and stepper are built by the
/// caller so their (offline) construction cost stays out of the run timings.
pub struct RunConfig<'a> {
    pub stepper: &'a Stepper,
    pub tensors: TensorSource<'a>,
    pub interaction: DriftInteraction,
    pub u0: &'a dyn Fn([f64; 2]) -> f64,
    pub source: &'a dyn ScalarCoefficient,
    pub bc: &'a dyn BoundaryCondition,
    pub t_final: f64,
    pub steps: usize,
    /// Picard stopping tolerance (scheme 1 only)
    pub picard_tol: f64,
    /// Picard iteration cap (scheme 1 only)
    pub max_picard_iters: usize,
}

impl RunConfig<'_> {
    pub const DEFAULT_PICARD_TOL: f64 = 1e-7;
    pub const DEFAULT_MAX_PICARD_ITERS: usize = 10;

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidInput(format!(
                "final time must be positive, got {}",
                self.t_final
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidInput("need at least one time step".into()));
        }
        if !(self.picard_tol > 0.0) {
            return Err(Error::InvalidInput(format!(
                "Picard tolerance must be positive, got {}",
                self.picard_tol
            )));
        }
        if self.max_picard_iters == 0 {
            return Err(Error::InvalidInput("need at least one Picard iteration".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.steps as f64
    }
}

/// Evaluates the tensor field induced by a macro state: p = G(u) per node,
/// then one tensor per distinct parameter value. Distinct nodes sharing the
/// same p (to 15 significant digits) share one corrector solve; the memo is
/// local to this evaluation. Returns the field and the number of corrector
/// solves performed (0 in precomputed mode).
pub fn eval_tensor_field(
    state: &MacroState,
    interaction: &DriftInteraction,
    source: &TensorSource,
) -> Result<(TensorField, usize)> {
    let ps: Vec<f64> = state.values.iter().map(|&u| interaction.eval(u)).collect();
    match source {
        TensorSource::Precomputed(table) => {
            let tensors = ps.iter().map(|&p| table.interp(p)).collect();
            Ok((TensorField::new(tensors)?, 0))
        }
        TensorSource::Direct(ctx) => {
            let mut memo: HashMap<String, f64> = HashMap::new();
            let keys: Vec<String> = ps.iter().map(|&p| format!("{p:.14e}")).collect();
            for (key, &p) in keys.iter().zip(&ps) {
                memo.entry(key.clone()).or_insert(p);
            }
            let mut unique: Vec<(String, f64)> =
                memo.iter().map(|(k, &p)| (k.clone(), p)).collect();
            unique.sort_by(|a, b| a.1.total_cmp(&b.1));
            let solved: Vec<(String, DispersionTensor)> = unique
                .par_iter()
                .map(|(key, p)| Ok((key.clone(), ctx.tensor_at(*p)?)))
                .collect::<Result<Vec<_>>>()?;
            let lookup: HashMap<&str, DispersionTensor> =
                solved.iter().map(|(k, t)| (k.as_str(), *t)).collect();
            let tensors = keys.iter().map(|k| lookup[k.as_str()]).collect();
            Ok((TensorField::new(tensors)?, solved.len()))
        }
    }
}

/// Scheme 2 — per-step decoupling: tensors for step n come from u_{n−1},
/// then one implicit Euler step advances the trajectory.
pub fn run_scheme2(cfg: &RunConfig) -> Result<(Vec<MacroState>, Timings)> {
    cfg.validate()?;
    let dt = cfg.dt();
    let mut timings = Timings::default();
    let mut trajectory = Vec::with_capacity(cfg.steps + 1);
    trajectory.push(cfg.stepper.initial_state(cfg.u0, cfg.bc));
    for n in 1..=cfg.steps {
        let prev = &trajectory[n - 1];
        let tic = Instant::now();
        let (field, solves) = eval_tensor_field(prev, &cfg.interaction, &cfg.tensors)?;
        timings.tensor_eval_seconds += tic.elapsed().as_secs_f64();
        timings.cell_solves += solves;
        let tic = Instant::now();
        let next = cfg.stepper.step(prev, &field, cfg.source, dt, cfg.bc)?;
        timings.step_seconds += tic.elapsed().as_secs_f64();
        trajectory.push(next);
    }
    Ok((trajectory, timings))
}

/// Scheme 1 — whole-trajectory Picard iteration: every iterate freezes the
/// previous trajectory, builds tensor fields for all time levels from it,
/// sweeps the parabolic problem, and measures e^k = ‖u^{k+1} − u^k‖ in
/// L²(S; L²). Stops when e^k < tol; hitting the iteration cap is reported
/// (converged = false), not an error.
pub fn run_scheme1(cfg: &RunConfig) -> Result<(Vec<MacroState>, IterationLog, Timings)> {
    cfg.validate()?;
    let dt = cfg.dt();
    let mut timings = Timings::default();

    // u^0: the initial condition extended constantly in time
    let initial = cfg.stepper.initial_state(cfg.u0, cfg.bc);
    let mut current: Vec<MacroState> = (0..=cfg.steps)
        .map(|n| MacroState { t: n as f64 * dt, values: initial.values.clone() })
        .collect();

    let mut log = IterationLog { errors: Vec::new(), converged: false };
    for _k in 0..cfg.max_picard_iters {
        let mut next = Vec::with_capacity(cfg.steps + 1);
        next.push(initial.clone());
        for n in 1..=cfg.steps {
            // tensors from the frozen previous iterate at the lagged time
            let tic = Instant::now();
            let (field, solves) =
                eval_tensor_field(&current[n - 1], &cfg.interaction, &cfg.tensors)?;
            timings.tensor_eval_seconds += tic.elapsed().as_secs_f64();
            timings.cell_solves += solves;
            let tic = Instant::now();
            let stepped = cfg.stepper.step(&next[n - 1], &field, cfg.source, dt, cfg.bc)?;
            timings.step_seconds += tic.elapsed().as_secs_f64();
            next.push(stepped);
        }
        let err = cfg.stepper.l2_space_time_diff(&next, &current, dt)?;
        log.errors.push(err);
        current = next;
        if err < cfg.picard_tol {
            log.converged = true;
            break;
        }
    }
    Ok((current, log, timings))
}
