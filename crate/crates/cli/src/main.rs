use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use equiaudit::{cmd_audit, cmd_classify, demo::cmd_demo, AuditOptions};

/// Audits discretized CNNs for feature-map alignment under linear image
/// transforms.
#[derive(Parser)]
#[command(name = "equiaudit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every check for the configured transforms and model.
    Audit {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
        /// Omit the timestamp so identical runs give identical reports.
        #[arg(long)]
        deterministic: bool,
    },
    /// Print the Jordan class of a transform spec such as `rot:36`.
    Classify {
        #[arg(allow_hyphen_values = true)]
        spec: String,
    },
    /// Render one of the illustrations: wm-rotation or scale-fov.
    Demo {
        name: String,
        #[arg(long, default_value = "demo-out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Audit {
            config,
            jobs,
            deterministic,
        } => cmd_audit(&config, AuditOptions { jobs, deterministic }),
        Command::Classify { spec } => cmd_classify(&spec),
        Command::Demo { name, out } => cmd_demo(&name, &out),
    };
    ExitCode::from(code as u8)
}
