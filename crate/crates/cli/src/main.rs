use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slod_core::config::{preset, ExperimentConfig, PresetScale};
use slod_core::runner::{self, RunStatus};
use slod_core::solvers::Method;
use slod_core::Error;

#[derive(Parser)]
#[command(name = "slod", version, about = "Super-localized multiscale solvers for convection-diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build (or load from cache) the basis of every (H, ℓ).
    Basis(Common),
    /// Run one method at one coarse size and level.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: Method,
        /// Coarse cells per axis; defaults to the first configured size.
        #[arg(long)]
        coarse: Option<usize>,
        /// Defaults to the first configured level.
        #[arg(long)]
        level: Option<usize>,
    },
    /// Sweep H, ℓ and methods; writes results.csv and rates.csv.
    Study(Common),
    /// ℓ-sweep per H with the localization decay fit.
    Decay(Common),
    /// σ, Riesz and spectrum tables of every basis.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// One of fig4, fig5, fig6, fig9.
    #[arg(long)]
    preset: Option<String>,
    /// Use the preset at its original resolution.
    #[arg(long, requires = "preset")]
    full: bool,
    /// Coarsen the preset's fine grid by 2^k (default 2).
    #[arg(long, requires = "preset", conflicts_with = "full")]
    scale_h: Option<i32>,
    /// Enlarge the preset's ε by 2^k (default 2).
    #[arg(long, requires = "preset", conflicts_with = "full")]
    scale_eps: Option<i32>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Fine cells per axis.
    #[arg(long)]
    fine_size: Option<usize>,
    /// Coarse cells per axis, comma separated.
    #[arg(long, value_delimiter = ',')]
    coarse_sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    no_cache: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut c = match (&self.config, &self.preset) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
                ExperimentConfig::from_toml(&text)?
            }
            (None, Some(name)) => {
                let scale = if self.full {
                    PresetScale::FULL
                } else {
                    PresetScale {
                        scale_h: self.scale_h.unwrap_or(PresetScale::DESK.scale_h),
                        scale_eps: self.scale_eps.unwrap_or(PresetScale::DESK.scale_eps),
                    }
                };
                preset(name, scale)?
            }
            (None, None) => return Err(Error::config("config", "pass --config <file> or --preset <name>")),
        };
        if let Some(v) = self.epsilon {
            c.epsilon = v;
        }
        if let Some(v) = self.fine_size {
            c.fine_size = v;
        }
        if let Some(v) = &self.coarse_sizes {
            c.coarse_sizes = v.clone();
        }
        if let Some(v) = &self.levels {
            c.levels = v.clone();
        }
        if let Some(v) = &self.methods {
            c.methods = v.clone();
        }
        if let Some(v) = self.workers {
            c.workers = v;
        }
        if let Some(v) = &self.output_dir {
            c.output_dir = v.clone();
        }
        if self.no_cache {
            c.cache = false;
        }
        c.validate()?;
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<RunStatus, Error> {
    match cli.command {
        Command::Basis(c) => runner::basis(&c.load()?),
        Command::Study(c) => runner::study(&c.load()?),
        Command::Decay(c) => runner::decay(&c.load()?),
        Command::Report(c) => runner::report(&c.load()?),
        Command::Solve {
            common,
            method,
            coarse,
            level,
        } => {
            let c = common.load()?;
            let coarse = coarse.unwrap_or(c.coarse_sizes[0]);
            let level = level.unwrap_or(c.levels[0]);
            runner::solve(&c, method, coarse, level)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(status) => {
            if status == RunStatus::Partial {
                log::warn!("some runs failed; see manifest.json");
            }
            ExitCode::from(status.exit_code() as u8)
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(1)
        }
    }
}
