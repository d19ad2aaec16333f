//! `nbrdf`: data generation, training, evaluation, physical audits and
//! rendering of neural and parametric BRDFs.

mod commands;
mod provenance;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\ncheckpoint format 1\nrecord format 1\nmanifest format 1\nreport format 1"
);

#[derive(Debug, Parser)]
#[command(name = "nbrdf", version = VERSION, about = "Neural and parametric BRDF fitting from posed HDR images")]
struct Cli {
    /// Worker threads; 1 forces deterministic single-thread mode.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ModelFlags {
    /// ts | rp | disney | single-mlp | additive-separate | additive-shared
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, value_parser = ["none", "swap", "mapping"])]
    pub reciprocity: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub enhanced: Option<bool>,
    #[arg(long)]
    pub dir_feed_layer: Option<usize>,
    /// Diffuse albedo range as `lo,hi`.
    #[arg(long)]
    pub albedo_clamp: Option<String>,
    /// 1 (scalar) or 3 (RGB) specular channels.
    #[arg(long, value_parser = ["1", "3", "scalar", "rgb"])]
    pub spec_channels: Option<String>,
    #[arg(long)]
    pub width: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a semi-synthetic dataset from a scene description.
    GenData {
        #[command(flatten)]
        common: Common,
        /// OBJ mesh replacing the scene's mesh.
        #[arg(long)]
        mesh: Option<PathBuf>,
    },
    /// Fit a model to a dataset's training split.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory.
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Image and BRDF metrics of a checkpoint on a dataset split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Trained model; the ground-truth material is used when omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_parser = ["train", "test"])]
        split: Option<String>,
    },
    /// Energy-conservation and reciprocity audits.
    ValidatePhysics {
        #[command(flatten)]
        common: Common,
        /// Analytic model with random parameters: rp | ts | disney | lambertian.
        #[arg(long)]
        model: Option<String>,
        /// Trained model (needs --data for its geometry).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long)]
        mc_samples: Option<usize>,
        /// Number of random parameterizations of an analytic model.
        #[arg(long)]
        parameterizations: Option<usize>,
        /// Also write per-pair estimates as CSV.
        #[arg(long)]
        dump_energy: bool,
    },
    /// Render images of a dataset's views with a model or the ground truth.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        view: Option<usize>,
        #[arg(long)]
        light: Option<usize>,
    },
    /// Merge metric reports into one summary table.
    Report {
        #[command(flatten)]
        common: Common,
        /// Report files written by eval or validate-physics.
        inputs: Vec<PathBuf>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(nbrdf::Error),
}

impl From<nbrdf::Error> for CliError {
    fn from(e: nbrdf::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::GenData { common, mesh } => commands::gen_data(&common, mesh),
        Command::Train {
            common,
            data,
            model,
            iterations,
            batch_size,
            lr,
        } => commands::train(&common, data, &model, iterations, batch_size, lr),
        Command::Eval {
            common,
            data,
            checkpoint,
            split,
        } => commands::eval(&common, data, checkpoint, split),
        Command::ValidatePhysics {
            common,
            model,
            checkpoint,
            data,
            mesh,
            pairs,
            mc_samples,
            parameterizations,
            dump_energy,
        } => commands::validate_physics(
            &common,
            commands::PhysicsArgs {
                model,
                checkpoint,
                data,
                mesh,
                pairs,
                mc_samples,
                parameterizations,
                dump_energy,
            },
        ),
        Command::Render {
            common,
            data,
            checkpoint,
            view,
            light,
        } => commands::render(&common, data, checkpoint, view, light),
        Command::Report { common, inputs } => commands::report(&common, &inputs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\nUsage: nbrdf <COMMAND> --out <DIR> [OPTIONS]; see `nbrdf help <COMMAND>`");
            ExitCode::from(1)
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
