//! JSON experiment configuration: the data side of every run. All physical
//! constants live in config files (or the shipped presets), never in solver
//! code, so an experiment is fully described by its JSON document.

use dispersim::mesh::HoleSpec;
use dispersim::schemes::{drift_interaction, DriftInteraction};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::Path;

/// Errors split by who must act: `Usage` means the invocation or config is
/// wrong (exit code 2), `Runtime` means a well-formed run failed (exit 1).
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "config error: {msg}"),
            CliError::Runtime(msg) => write!(f, "error: {msg}"),
        }
    }
}

impl From<dispersim::Error> for CliError {
    fn from(e: dispersim::Error) -> CliError {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub micro: MicroConfig,
    #[serde(default = "default_interaction")]
    pub interaction: String,
    #[serde(default)]
    pub table: TableConfig,
    #[serde(rename = "macro")]
    pub macroscale: MacroConfig,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub picard: PicardConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudyConfig>,
}

fn default_interaction() -> String {
    "1-2u".to_string()
}

/// Everything that determines the periodicity cell and its coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicroConfig {
    pub resolution: usize,
    #[serde(default)]
    pub holes: Vec<HoleConfig>,
    pub viscosity: f64,
    pub force: ForceConfig,
    pub diffusion: DiffusionConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HoleConfig {
    Ellipse { center: [f64; 2], semi_axes: [f64; 2] },
    Rectangle { min: [f64; 2], max: [f64; 2] },
}

impl HoleConfig {
    pub fn to_spec(&self) -> HoleSpec {
        match *self {
            HoleConfig::Ellipse { center, semi_axes } => HoleSpec::Ellipse { center, semi_axes },
            HoleConfig::Rectangle { min, max } => HoleSpec::Rectangle { min, max },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ForceConfig {
    /// A(sin 2πy₁ sin 2πy₂, sin 2πy₁ cos 2πy₂)
    Swirl { amplitude: f64 },
    Zero,
}

impl ForceConfig {
    pub fn eval(&self, p: [f64; 2]) -> [f64; 2] {
        use std::f64::consts::PI;
        match *self {
            ForceConfig::Swirl { amplitude } => {
                let s1 = (2.0 * PI * p[0]).sin();
                [amplitude * s1 * (2.0 * PI * p[1]).sin(), amplitude * s1 * (2.0 * PI * p[1]).cos()]
            }
            ForceConfig::Zero => [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DiffusionConfig {
    /// diag(2 + sin πy₁ sin πy₂, 2 + sin πy₁)
    SineDiagonal,
    Identity,
    Diagonal { values: [f64; 2] },
}

impl DiffusionConfig {
    pub fn eval(&self, p: [f64; 2]) -> [[f64; 2]; 2] {
        use std::f64::consts::PI;
        match *self {
            DiffusionConfig::SineDiagonal => [
                [2.0 + (PI * p[0]).sin() * (PI * p[1]).sin(), 0.0],
                [0.0, 2.0 + (PI * p[0]).sin()],
            ],
            DiffusionConfig::Identity => [[1.0, 0.0], [0.0, 1.0]],
            DiffusionConfig::Diagonal { values } => [[values[0], 0.0], [0.0, values[1]]],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    /// Number of uniform knots on [−10, 10]; the 100 log-spaced outer knots
    /// up to ±10¹¹ are always added.
    pub inner_knots: usize,
}

impl Default for TableConfig {
    fn default() -> TableConfig {
        TableConfig { inner_knots: 101 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacroConfig {
    /// [[x_min, x_max], [y_min, y_max]]
    pub domain: [[f64; 2]; 2],
    pub nx: usize,
    pub ny: usize,
    pub initial: InitialConfig,
    pub source: SourceConfig,
    pub boundary: BoundaryConfig,
    pub t_final: f64,
    pub steps: usize,
    /// Extra time-step indices whose fields are dumped by `solve`.
    #[serde(default)]
    pub dump_steps: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialConfig {
    Zero,
    /// exp(−width·|x−center|²) inside the disk of the given radius, else 0.
    GaussianDisk { center: [f64; 2], radius: f64, width: f64 },
}

impl InitialConfig {
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        match *self {
            InitialConfig::Zero => 0.0,
            InitialConfig::GaussianDisk { center, radius, width } => {
                let r2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
                if r2 <= radius * radius {
                    (-width * r2).exp()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sup(&self) -> f64 {
        match *self {
            InitialConfig::Zero => 0.0,
            InitialConfig::GaussianDisk { .. } => 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceConfig {
    Zero,
    Constant { value: f64 },
    /// Constant value inside a disk, zero outside.
    Disk { center: [f64; 2], radius: f64, value: f64 },
}

impl SourceConfig {
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        match *self {
            SourceConfig::Zero => 0.0,
            SourceConfig::Constant { value } => value,
            SourceConfig::Disk { center, radius, value } => {
                let r2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
                if r2 <= radius * radius {
                    value
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BoundaryConfig {
    Zero,
    /// scale·t/(1+t) on the bottom edge, zero on the rest of the boundary;
    /// the bottom value wins at the two bottom corners.
    BottomRamp { scale: f64 },
}

impl BoundaryConfig {
    pub fn eval(&self, t: f64, p: [f64; 2], y_min: f64) -> f64 {
        match *self {
            BoundaryConfig::Zero => 0.0,
            BoundaryConfig::BottomRamp { scale } => {
                if (p[1] - y_min).abs() <= 1e-12 {
                    scale * t / (1.0 + t)
                } else {
                    0.0
                }
            }
        }
    }

    /// Supremum of the boundary data over all time (t → ∞ limit of the ramp).
    pub fn sup(&self) -> f64 {
        match *self {
            BoundaryConfig::Zero => 0.0,
            BoundaryConfig::BottomRamp { scale } => scale.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
#[clap(rename_all = "lowercase")]
pub enum Scheme {
    /// Whole-trajectory fixed-point iteration.
    Picard,
    /// One sweep with the tensor lagged one time level.
    Timestep,
}

impl Default for Scheme {
    fn default() -> Scheme {
        Scheme::Timestep
    }
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Picard => "picard",
            Scheme::Timestep => "timestep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
#[clap(rename_all = "lowercase")]
pub enum Mode {
    /// Fresh corrector solves inside the time loop.
    Direct,
    /// Interpolate a precomputed tensor table.
    Precomputed,
}

impl Default for Mode {
    fn default() -> Mode {
        Mode::Precomputed
    }
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Direct => "direct",
            Mode::Precomputed => "precomputed",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardConfig {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for PicardConfig {
    fn default() -> PicardConfig {
        PicardConfig { tol: 1e-7, max_iters: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
#[clap(rename_all = "lowercase")]
pub enum Axis {
    Space,
    Time,
    Joint,
}

impl Axis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Axis::Space => "space",
            Axis::Time => "time",
            Axis::Joint => "joint",
        }
    }
}

/// A refinement ladder for `converge`; per-level fields fall back to the
/// base config when omitted.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub axis: Axis,
    pub levels: Vec<LevelConfig>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub micro_resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_knots: Option<usize>,
}

impl Config {
    pub fn from_json(text: &str) -> CliResult<Config> {
        let cfg: Config =
            serde_json::from_str(text).map_err(|e| usage(format!("cannot parse config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> CliResult<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        Config::from_json(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        let m = &self.micro;
        if m.resolution < 2 {
            return Err(usage(format!("micro.resolution must be ≥ 2, got {}", m.resolution)));
        }
        if !(m.viscosity > 0.0) || !m.viscosity.is_finite() {
            return Err(usage(format!("micro.viscosity must be positive, got {}", m.viscosity)));
        }
        for hole in &m.holes {
            hole.to_spec().validate().map_err(|e| usage(e.to_string()))?;
        }
        drift_interaction(&self.interaction).map_err(|e| usage(e.to_string()))?;
        if self.table.inner_knots < 2 {
            return Err(usage(format!(
                "table.inner_knots must be ≥ 2, got {}",
                self.table.inner_knots
            )));
        }

        let ma = &self.macroscale;
        let [[x0, x1], [y0, y1]] = ma.domain;
        if !(x0 < x1 && y0 < y1) || ![x0, x1, y0, y1].iter().all(|v| v.is_finite()) {
            return Err(usage(format!("macro.domain must span a nonempty box, got {:?}", ma.domain)));
        }
        if ma.nx == 0 || ma.ny == 0 {
            return Err(usage("macro.nx and macro.ny must be ≥ 1"));
        }
        if !(ma.t_final > 0.0) || !ma.t_final.is_finite() {
            return Err(usage(format!("macro.t_final must be positive, got {}", ma.t_final)));
        }
        if ma.steps == 0 {
            return Err(usage("macro.steps must be ≥ 1"));
        }
        if let Some(bad) = ma.dump_steps.iter().find(|&&s| s > ma.steps) {
            return Err(usage(format!("dump step {bad} exceeds macro.steps = {}", ma.steps)));
        }
        match ma.initial {
            InitialConfig::GaussianDisk { radius, width, .. } => {
                if !(radius > 0.0) || !(width >= 0.0) {
                    return Err(usage("gaussian-disk initial needs radius > 0 and width ≥ 0"));
                }
            }
            InitialConfig::Zero => {}
        }
        if let SourceConfig::Disk { radius, .. } = ma.source {
            if !(radius > 0.0) {
                return Err(usage("disk source needs radius > 0"));
            }
        }

        if !(self.picard.tol > 0.0) {
            return Err(usage(format!("picard.tol must be positive, got {}", self.picard.tol)));
        }
        if self.picard.max_iters == 0 {
            return Err(usage("picard.max_iters must be ≥ 1"));
        }

        if let Some(study) = &self.study {
            study.validate(self)?;
        }
        Ok(())
    }

    pub fn interaction(&self) -> DriftInteraction {
        drift_interaction(&self.interaction).expect("validated at load time")
    }

    pub fn hole_specs(&self) -> Vec<HoleSpec> {
        self.micro.holes.iter().map(HoleConfig::to_spec).collect()
    }

    /// Hex digest identifying the cell problem family a table belongs to:
    /// geometry, resolution, viscosity, force, and diffusion — everything a
    /// tensor at a given parameter value depends on.
    pub fn geometry_hash(&self) -> String {
        let canonical =
            serde_json::to_string(&self.micro).expect("micro config serializes infallibly");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(12);
        for byte in digest.iter().take(6) {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}

impl StudyConfig {
    pub(crate) fn validate(&self, cfg: &Config) -> CliResult<()> {
        if self.levels.len() < 3 {
            return Err(usage(format!(
                "a refinement study needs at least 3 levels, got {}",
                self.levels.len()
            )));
        }
        let resolved: Vec<ResolvedLevel> =
            self.levels.iter().map(|l| ResolvedLevel::new(l, cfg)).collect();
        for (i, level) in resolved.iter().enumerate() {
            if level.nx == 0 || level.ny == 0 || level.steps == 0 {
                return Err(usage(format!("study level {i} has an empty mesh or zero steps")));
            }
            if level.micro_resolution < 2 {
                return Err(usage(format!("study level {i}: micro resolution must be ≥ 2")));
            }
        }
        for (i, pair) in resolved.windows(2).enumerate() {
            let (coarse, fine) = (&pair[0], &pair[1]);
            if fine.steps % coarse.steps != 0 {
                return Err(usage(format!(
                    "study level {}: steps {} must be a multiple of the previous level's {}",
                    i + 1,
                    fine.steps,
                    coarse.steps
                )));
            }
            let grows = fine.dofs() > coarse.dofs() || fine.steps > coarse.steps;
            if !grows {
                return Err(usage(format!(
                    "study level {} does not refine level {}: {}x{} M={} vs {}x{} M={}",
                    i + 1,
                    i,
                    fine.nx,
                    fine.ny,
                    fine.steps,
                    coarse.nx,
                    coarse.ny,
                    coarse.steps
                )));
            }
            match self.axis {
                Axis::Space | Axis::Joint => {
                    if fine.dofs() <= coarse.dofs() {
                        return Err(usage(format!(
                            "a {} study must grow the macro mesh at level {}",
                            self.axis.as_str(),
                            i + 1
                        )));
                    }
                }
                Axis::Time => {
                    if fine.steps <= coarse.steps {
                        return Err(usage(format!(
                            "a time study must grow the step count at level {}",
                            i + 1
                        )));
                    }
                    if fine.dofs() != coarse.dofs() {
                        return Err(usage(
                            "a time study must keep the macro mesh fixed across levels",
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A study level with base-config fallbacks filled in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResolvedLevel {
    pub nx: usize,
    pub ny: usize,
    pub steps: usize,
    pub micro_resolution: usize,
    pub inner_knots: usize,
}

impl ResolvedLevel {
    pub fn new(level: &LevelConfig, cfg: &Config) -> ResolvedLevel {
        ResolvedLevel {
            nx: level.nx.unwrap_or(cfg.macroscale.nx),
            ny: level.ny.unwrap_or(cfg.macroscale.ny),
            steps: level.steps.unwrap_or(cfg.macroscale.steps),
            micro_resolution: level.micro_resolution.unwrap_or(cfg.micro.resolution),
            inner_knots: level.inner_knots.unwrap_or(cfg.table.inner_knots),
        }
    }

    /// Total vertex count of the macro grid.
    pub fn dofs(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    /// Mesh parameter H: the element diagonal of the structured grid.
    pub fn h(&self, domain: [[f64; 2]; 2]) -> f64 {
        let hx = (domain[0][1] - domain[0][0]) / self.nx as f64;
        let hy = (domain[1][1] - domain[1][0]) / self.ny as f64;
        hx.hypot(hy)
    }
}
