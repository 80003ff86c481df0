use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use leo_isac::harness::{
    preset, run_scenario, ConfigError, HarnessError, OutputFormat, ScenarioConfig, PRESETS,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "leo-isac",
    version,
    about = "Beam-squint-aware ISAC precoding simulations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its result files.
    Run(RunArgs),
    /// List the built-in presets.
    ListPresets,
    /// Check a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
        /// Preset the config is applied on top of.
        #[arg(long)]
        scenario: Option<String>,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML config; with --scenario its keys override the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Use the full-size dimensions (48x48 array, 40 subcarriers, 16 UTs).
    #[arg(long = "paper-scale")]
    full_scale: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn resolve(
    config: Option<&PathBuf>,
    scenario: Option<&str>,
) -> Result<ScenarioConfig, ConfigError> {
    match (scenario, config) {
        (Some(name), Some(path)) => preset(name)?.overlay_file(path),
        (Some(name), None) => preset(name),
        (None, Some(path)) => ScenarioConfig::from_file(path),
        (None, None) => Err(ConfigError::field("config", "pass --config or --scenario")),
    }
}

fn run(args: RunArgs) -> ExitCode {
    let mut config = match resolve(args.config.as_ref(), args.scenario.as_deref()) {
        Ok(c) => c,
        Err(e) => return config_failure(&e),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = args.out {
        config.output_dir = out.to_string_lossy().into_owned();
    }
    if let Some(format) = args.format {
        config.format = match format {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        };
    }
    if args.full_scale {
        config = config.full_scale();
        eprintln!("full scale: 48x48 array, 40 subcarriers, 16 UTs; expect long runtimes");
    }
    if let Err(e) = config.validate() {
        return config_failure(&e);
    }
    match run_scenario(&config) {
        Ok(report) => {
            println!(
                "{} points written to {}",
                report.records.len(),
                config.output_dir
            );
            let stalled = report.non_converged();
            if stalled > 0 {
                eprintln!("warning: {stalled} point(s) hit an iteration cap before converging");
                ExitCode::from(EXIT_NOT_CONVERGED)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(HarnessError::Config(e)) => config_failure(&e),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn config_failure(e: &ConfigError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_CONFIG)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::ListPresets => {
            for (name, description) in PRESETS {
                println!("{name:<16} {description}");
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config, scenario } => match resolve(Some(&config), scenario.as_deref())
        {
            Ok(c) => {
                println!("ok: {} (hash {})", c.name, c.hash());
                ExitCode::SUCCESS
            }
            Err(e) => config_failure(&e),
        },
    }
}
