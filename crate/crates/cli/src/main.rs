//! `fitngp`: scene synthesis, pose fitting, evaluation and benchmark runs
//! over density grids.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or usage; exit code 2.
    Config(String),
    /// Unreadable or malformed files; exit code 3.
    Io(String),
    /// Ran but produced nothing usable; exit code 1.
    Failed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Failed(m) => write!(f, "{m}"),
        }
    }
}

impl From<fitngp::Error> for CliError {
    fn from(e: fitngp::Error) -> Self {
        use fitngp::Error as E;
        match e {
            E::Io { .. } | E::BinaryFormat { .. } | E::TextFormat { .. } => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "fitngp", version, about = "Object pose estimation against density grids")]
struct Cli {
    /// Worker threads (0 = one per core). Falls back to FITNGP_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Voxelize a scene description into a grid plus ground-truth poses.
    GenScene {
        spec: PathBuf,
        out_grid: PathBuf,
        out_gt: PathBuf,
        /// Reference camera used to render instance masks.
        #[arg(long, requires = "masks_dir")]
        camera: Option<PathBuf>,
        /// Directory for mask images and their manifest.
        #[arg(long, requires = "camera")]
        masks_dir: Option<PathBuf>,
        /// Write the symmetry registry of the scene objects here.
        #[arg(long)]
        symmetries: Option<PathBuf>,
    },
    /// Fit every object of a pipeline config; KEY=VALUE pairs override config keys.
    Fit {
        config: PathBuf,
        overrides: Vec<String>,
    },
    /// Score fitted poses against ground truth.
    Eval {
        results: PathBuf,
        ground_truth: PathBuf,
        symmetries: PathBuf,
        /// CSV report path (default: report.csv next to the results).
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run the synthetic benchmark under one variant.
    Ablate {
        config: PathBuf,
        #[arg(long, value_parser = ["full", "no_normal_band", "no_refine"])]
        variant: String,
        /// CSV output (default: standard output).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
        overrides: Vec<String>,
    },
    /// Render a depth map of a grid.
    RenderDepth {
        grid: PathBuf,
        camera: PathBuf,
        out: PathBuf,
        /// Also write a 16-bit PGM in millimetres.
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
    /// Print grid dimensions, bounds and sigma statistics.
    GridInfo {
        grid: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn configure_threads(flag: Option<usize>) -> Result<(), CliError> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var("FITNGP_THREADS") {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("FITNGP_THREADS must be a count, got '{v}'")))?,
            Err(_) => 0,
        },
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::GenScene {
            spec,
            out_grid,
            out_gt,
            camera,
            masks_dir,
            symmetries,
        } => commands::gen_scene(&spec, &out_grid, &out_gt, camera.as_deref(), masks_dir.as_deref(), symmetries.as_deref()),
        Command::Fit { config, overrides } => commands::fit(&config, &overrides),
        Command::Eval {
            results,
            ground_truth,
            symmetries,
            report,
            json,
        } => commands::eval(&results, &ground_truth, &symmetries, report.as_deref(), json.as_deref()),
        Command::Ablate {
            config,
            variant,
            out,
            json,
            overrides,
        } => commands::ablate(&config, &variant, &overrides, out.as_deref(), json.as_deref()),
        Command::RenderDepth { grid, camera, out, pgm } => commands::render_depth(&grid, &camera, &out, pgm.as_deref()),
        Command::GridInfo { grid, json } => commands::grid_info(&grid, json),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
