use clap::{Args, Parser, Subcommand};
use dispersim_cli::commands::{self, CommonArgs};
use dispersim_cli::config::{Axis, Mode, Scheme};
use std::path::PathBuf;

/// Two-scale dispersion solver: periodic cell problems feeding an effective
/// tensor into a macroscopic parabolic equation.
#[derive(Parser)]
#[command(name = "dispersim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Path to a JSON experiment config
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Name of a shipped preset (see error message for the list)
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Output directory for artifacts
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Worker threads for the parallel sections
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    /// Skip artifact compatibility checks
    #[arg(long)]
    force: bool,
}

impl From<Common> for CommonArgs {
    fn from(c: Common) -> CommonArgs {
        CommonArgs { config: c.config, preset: c.preset, out: c.out, jobs: c.jobs, force: c.force }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the periodic Stokes problem and verify the drift assumptions
    Stokes {
        #[command(flatten)]
        common: Common,
    },
    /// Precompute the dispersion-tensor table
    Table {
        #[command(flatten)]
        common: Common,
        /// Override the number of uniform knots on [-10, 10]
        #[arg(long, value_name = "N")]
        knots: Option<usize>,
    },
    /// Run the two-scale solve with the configured scheme and tensor mode
    Solve {
        #[command(flatten)]
        common: Common,
        /// Override the decoupling scheme
        #[arg(long)]
        scheme: Option<Scheme>,
        /// Override the tensor mode
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Run a refinement study and fit the convergence order
    Converge {
        #[command(flatten)]
        common: Common,
        /// Override the study axis
        #[arg(long)]
        axis: Option<Axis>,
    },
    /// Export the cell and macro meshes for external visualization
    MeshExport {
        #[command(flatten)]
        common: Common,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Stokes { common } => commands::cmd_stokes(&common.into()),
        Command::Table { common, knots } => commands::cmd_table(&common.into(), knots),
        Command::Solve { common, scheme, mode } => {
            commands::cmd_solve(&common.into(), scheme, mode)
        }
        Command::Converge { common, axis } => commands::cmd_converge(&common.into(), axis),
        Command::MeshExport { common } => commands::cmd_mesh_export(&common.into()),
    };
    if let Err(e) = result {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
