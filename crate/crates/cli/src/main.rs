use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod presets;

use commands::CliError;
use wqed_core::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "wqed", version, about = "Waveguide scattering spectra for two qubits in an ultrastrongly coupled cavity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON run configuration
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration (fig2a, fig2b, fig2b_mirror, fig3, fig4a, fig4b, fig5)
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Drop counter-rotating terms
    #[arg(long, global = true)]
    rwa: bool,
    /// Output directory, overriding the config
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Grid size along the swept axis, overriding the config
    #[arg(long, global = true)]
    points: Option<usize>,
    /// Worker threads
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Level curves over the cavity frequency and the anticrossing record
    Levels,
    /// Reflection/transmission spectra and peak summary
    Scatter,
    /// Reflection density map over (omega, delta)
    Map,
    /// Localized-state populations along a frequency sweep
    Populations,
    /// Lorentzian and Fano fits of spectrum features
    Fit,
    /// Lattice wavepacket cross-check of the closed-form spectrum
    Oracle,
}

impl Command {
    fn default_preset(self) -> &'static str {
        match self {
            Command::Levels => "fig2a",
            Command::Scatter | Command::Oracle => "fig2b",
            Command::Populations => "fig3",
            Command::Map => "fig4a",
            Command::Fit => "fig5",
        }
    }
}

fn load_config(cmd: Command, common: &Common) -> Result<RunConfig, CliError> {
    let text = match (&common.config, &common.preset) {
        (Some(path), _) => std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?,
        (None, Some(name)) => presets::get(name)
            .ok_or_else(|| CliError::Config(format!("unknown preset `{name}`; available: {}", presets::NAMES.join(", "))))?
            .to_string(),
        (None, None) => presets::get(cmd.default_preset()).expect("default preset exists").to_string(),
    };
    let mut cfg = RunConfig::from_json(&text).map_err(|e| CliError::Config(e.to_string()))?;
    if common.rwa {
        cfg.counter_rotating = false;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.to_string_lossy().into_owned();
    }
    if let Some(n) = common.points {
        match cmd {
            Command::Levels => cfg.levels.iter_mut().for_each(|b| b.n_points = n),
            Command::Scatter | Command::Fit => cfg.scatter.iter_mut().for_each(|b| b.n_points = n),
            Command::Populations => cfg.populations.iter_mut().for_each(|b| b.n_points = n),
            Command::Map => cfg.map.iter_mut().for_each(|b| b.n_omega = n),
            Command::Oracle => {}
        }
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let (block, present) = match cmd {
        Command::Levels => ("levels", cfg.levels.is_some()),
        Command::Scatter => ("scatter", cfg.scatter.is_some()),
        Command::Map => ("map", cfg.map.is_some()),
        Command::Populations => ("populations", cfg.populations.is_some()),
        Command::Fit => ("fit", cfg.fit.is_some()),
        Command::Oracle => ("oracle", cfg.oracle.is_some()),
    };
    if !present {
        return Err(CliError::Config(format!("config has no `{block}` block")));
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.common.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let cfg = load_config(cli.command, &cli.common)?;
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", cfg.output_dir)))?;
    match cli.command {
        Command::Levels => commands::levels(&cfg),
        Command::Scatter => commands::scatter(&cfg),
        Command::Map => commands::map(&cfg),
        Command::Populations => commands::populations(&cfg),
        Command::Fit => commands::fit(&cfg),
        Command::Oracle => commands::oracle(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
