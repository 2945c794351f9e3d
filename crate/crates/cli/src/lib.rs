//! `hesn`: simulate the Galerkin model, train and evaluate conventional and
//! hybrid echo state networks, and plot the results.

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::PlotKind;
use crate::config::Config;
use crate::error::{CliError, CliResult, Kind, EXIT_CODES};
use crate::plot::PlotOptions;

#[derive(Debug, Parser)]
#[command(name = "hesn", version, about, after_help = EXIT_CODES)]
pub struct Cli {
    /// Configuration file of `key = value` lines
    #[arg(short, long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override a configuration key; repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output file (default: stdout); same as `paths.output`
    #[arg(short, long, global = true, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Input data CSV; same as `paths.data`
    #[arg(long, global = true, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// Checkpoint file; same as `paths.checkpoint`
    #[arg(long, global = true, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Worker threads, 0 for all cores; same as `experiment.workers`
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Reservoir seed; same as `esn.seed`
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// esn, hesn or rom; same as `experiment.mode`
    #[arg(long, global = true)]
    pub mode: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the Galerkin model and write t, the modal state and u_f
    Simulate,
    /// Train a reservoir and write a checkpoint
    Train,
    /// Closed-loop prediction from a checkpoint (or the ROM alone)
    Predict,
    /// Relative error of the mean acoustic energy for every seed
    Evaluate,
    /// Error against ROM size
    SweepNg,
    /// Hyperparameter grid search on the validation segment
    GridSearch,
    /// Leading Lyapunov exponent of the model
    Lyapunov,
    /// SVG line plot of a time-series CSV
    Plot {
        /// CSV file written by simulate or predict
        input: PathBuf,
        /// Columns to draw against t (default: all)
        #[arg(long, value_delimiter = ',', conflicts_with = "phase")]
        columns: Vec<String>,
        /// Phase portrait `X,Y`
        #[arg(long, value_delimiter = ',', num_args = 1, value_name = "X,Y")]
        phase: Option<Vec<String>>,
        #[arg(long, default_value_t = 800.0)]
        width: f64,
        #[arg(long, default_value_t = 480.0)]
        height: f64,
        #[arg(long)]
        title: Option<String>,
    },
    /// Print the resolved configuration
    Config,
}

impl Cli {
    /// Defaults, then the file, then `--set`, then the dedicated flags.
    pub fn resolve(&self) -> CliResult<Config> {
        let mut overrides = self.set.clone();
        let mut flag = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                overrides.push(format!("{key}={v}"));
            }
        };
        let quoted = |p: &Option<PathBuf>| p.as_ref().map(|p| format!("\"{}\"", p.display()));
        flag("paths.output", quoted(&self.output));
        flag("paths.data", quoted(&self.data));
        flag("paths.checkpoint", quoted(&self.checkpoint));
        flag("experiment.workers", self.workers.map(|w| w.to_string()));
        flag("esn.seed", self.seed.map(|s| s.to_string()));
        flag("experiment.mode", self.mode.clone());
        Config::load(self.config.as_deref(), &overrides)
    }
}

/// Runs a parsed command line. Output is written only when the command
/// succeeds.
pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg = cli.resolve()?;
    let mut buffer = Vec::new();
    let out: &mut dyn Write = &mut buffer;
    match &cli.command {
        Command::Simulate => commands::simulate(&cfg, out)?,
        Command::Train => commands::train(&cfg, out)?,
        Command::Predict => commands::predict(&cfg, out)?,
        Command::Evaluate => commands::evaluate(&cfg, out)?,
        Command::SweepNg => commands::sweep_ng(&cfg, out)?,
        Command::GridSearch => commands::grid(&cfg, out)?,
        Command::Lyapunov => commands::lyapunov(&cfg, out)?,
        Command::Plot {
            input,
            columns,
            phase,
            width,
            height,
            title,
        } => {
            let kind = match phase {
                Some(xy) if xy.len() == 2 => PlotKind::Phase(xy[0].clone(), xy[1].clone()),
                Some(_) => return Err(CliError::new(Kind::Usage, "--phase takes exactly two columns X,Y")),
                None => PlotKind::Time(columns.clone()),
            };
            if !(*width > 0.0 && *height > 0.0) {
                return Err(CliError::new(Kind::Usage, "--width and --height must be positive"));
            }
            let opts = PlotOptions {
                width: *width,
                height: *height,
                title: title.clone(),
            };
            commands::plot(&cfg, input, &kind, &opts, out)?
        }
        Command::Config => {
            writeln!(out, "# manifest: {}", commands::manifest("config", &cfg, "none"))
                .and_then(|_| out.write_all(cfg.render().as_bytes()))
                .map_err(|e| CliError::new(Kind::Runtime, e.to_string()))?;
        }
    }
    let written = match &cfg.output {
        Some(p) => std::fs::write(p, &buffer).map_err(|e| (p.display().to_string(), e)),
        None => std::io::stdout().lock().write_all(&buffer).map_err(|e| ("stdout".to_string(), e)),
    };
    written.map_err(|(what, e)| CliError::new(Kind::Runtime, format!("{what}: {e}")))
}

/// Parses `args` and runs; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as E;
            if matches!(e.kind(), E::DisplayHelp | E::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", CliError::new(Kind::Usage, first).line());
            return Kind::Usage.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.line());
            e.kind.exit_code()
        }
    }
}
