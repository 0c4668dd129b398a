mod commands;
mod server;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use demoforge_core::TaskKind;

#[derive(Parser)]
#[command(
    name = "demoforge",
    version,
    about = "Synthetic manipulation demonstrations: generate, validate, aggregate"
)]
struct Cli {
    /// Root seed; every per-episode seed is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Report errors as a JSON object on stderr instead of plain text.
    #[arg(long, global = true)]
    json: bool,
    /// Object registry file, or a directory holding objects.json.
    #[arg(long, global = true, env = "DEMOFORGE_ASSETS", hide_env_values = true)]
    assets: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Render {
    /// Image resolution multiplier over the 160x120 base camera.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..=16))]
    render_scale: u32,
}

#[derive(Subcommand)]
enum Command {
    /// Record oracle episodes for one or more tasks.
    Gen {
        #[arg(long = "task", required = true)]
        tasks: Vec<TaskKind>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        episodes: u64,
        #[arg(long)]
        out: PathBuf,
        /// Replacement task file; requires exactly one --task.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[command(flatten)]
        render: Render,
    },
    /// Run oracle episodes without recording and report success rates.
    Harness {
        #[arg(long = "task", required = true)]
        tasks: Vec<TaskKind>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        episodes: u64,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[command(flatten)]
        render: Render,
    },
    /// Check recorded episodes against the acceptance rules.
    Validate {
        #[arg(long = "in", required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Pack accepted episodes into a single container file.
    Aggregate {
        #[arg(long = "in", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Timestamp stored in the container; defaults to now (RFC 3339).
        #[arg(long)]
        created_at: Option<String>,
        #[arg(long, default_value_t = 20.0)]
        control_freq: f64,
    },
    /// Print a container's index, one JSON object per entry.
    Inspect {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Serve a live teleoperation session over WebSocket at /ws.
    Teleop {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 0.01)]
        pos_sensitivity: f64,
        #[arg(long, default_value_t = 0.05)]
        rot_sensitivity: f64,
        #[arg(long, default_value_t = 20.0)]
        control_freq: f64,
        #[arg(long, default_value_t = 10)]
        debounce_steps: u32,
        /// Saved episodes land in <session>/tmp.
        #[arg(long, default_value = "teleop_session")]
        session: PathBuf,
        #[command(flatten)]
        render: Render,
    },
    /// Convert a joint-space trajectory into unified 7-D actions.
    Normalize {
        #[arg(long)]
        embodiment: PathBuf,
        /// f32 array of shape (T, n_joints).
        #[arg(long)]
        traj: PathBuf,
        /// f32 array of shape (T,).
        #[arg(long)]
        gripper: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Episode count, lengths and completion rate of a container.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// gen followed by aggregate, writing only the container.
    Pipeline {
        #[arg(long)]
        task: TaskKind,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        episodes: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        created_at: Option<String>,
        #[command(flatten)]
        render: Render,
    },
    /// Task file tools.
    #[command(subcommand)]
    Taskspec(TaskspecCmd),
}

#[derive(Subcommand)]
enum TaskspecCmd {
    /// Parse and validate; prints diagnostics.
    Lint { file: PathBuf },
    /// Print the canonical form.
    Fmt { file: PathBuf },
    /// Sample object placements for a scene.
    Sample {
        file: PathBuf,
        #[arg(long, default_value_t = demoforge_core::taskspec::DEFAULT_CLEARANCE)]
        clearance: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            if json {
                let msg = serde_json::json!({ "error": format!("{e:#}") });
                eprintln!("{msg}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::FAILURE
        }
    }
}
