use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scaffold_inspect::commands::{self, Output};
use scaffold_inspect::{CloudFormat, PipelineConfig, PipelineError, Stage};

/// Scaffold change detection: compare a campaign scan against a certified
/// reference scan.
#[derive(Debug, Parser)]
#[command(name = "scaffold-inspect", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set icp.max_iterations=80`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Seed for every randomised stage (same as `--set run.seed=N`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Where artifacts are written.
    #[arg(long, short = 'o', default_value = ".", global = true)]
    output_dir: PathBuf,
    /// Also write the resolved configuration to `effective-config.toml`.
    #[arg(long, global = true)]
    emit_effective_config: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Downsample, filter outliers, remove ground and wall, crop.
    Preprocess {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = CloudFormat::Auto)]
        format: CloudFormat,
        #[command(flatten)]
        common: Common,
    },
    /// Align CURRENT onto REFERENCE with ICP.
    Register {
        reference: PathBuf,
        current: PathBuf,
        /// Preprocess both clouds first.
        #[arg(long)]
        preprocess: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Per-point deviation and change maps of CURRENT against REFERENCE.
    Deviate {
        reference: PathBuf,
        current: PathBuf,
        /// Register CURRENT first instead of assuming it is aligned.
        #[arg(long)]
        align: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Extract the joint/brace graph of a scaffold cloud.
    Graph {
        input: PathBuf,
        /// Preprocess the cloud first.
        #[arg(long)]
        preprocess: bool,
        #[command(flatten)]
        common: Common,
    },
    /// The whole comparison with report and colored exports.
    Inspect {
        reference: PathBuf,
        current: PathBuf,
        /// The inputs are already preprocessed.
        #[arg(long)]
        preprocessed: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic scaffold scan, optionally with a defected copy.
    Synth {
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn resolve(common: &Common) -> Result<(PipelineConfig, Output), PipelineError> {
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("run.seed={seed}"));
    }
    let config = PipelineConfig::load(common.config.as_deref(), &overrides).map_err(|e| PipelineError::new(Stage::Config, e))?;
    let mut out = Output::new(&common.output_dir, &config)?;
    if common.emit_effective_config {
        out.text("effective-config.toml", &config.to_toml_string())?;
    }
    Ok((config, out))
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match &cli.command {
        Command::Preprocess { input, format, common } => {
            let (config, mut out) = resolve(common)?;
            commands::cmd_preprocess(input, *format, &config, &mut out)
        }
        Command::Register {
            reference,
            current,
            preprocess,
            common,
        } => {
            let (config, mut out) = resolve(common)?;
            commands::cmd_register(reference, current, *preprocess, &config, &mut out)
        }
        Command::Deviate {
            reference,
            current,
            align,
            common,
        } => {
            let (config, mut out) = resolve(common)?;
            commands::cmd_deviate(reference, current, *align, &config, &mut out)
        }
        Command::Graph {
            input,
            preprocess,
            common,
        } => {
            let (config, mut out) = resolve(common)?;
            commands::cmd_graph(input, *preprocess, &config, &mut out)
        }
        Command::Inspect {
            reference,
            current,
            preprocessed,
            common,
        } => {
            let (config, mut out) = resolve(common)?;
            let report = commands::cmd_inspect(reference, current, *preprocessed, &config, &mut out)?;
            println!(
                "alert: {}{}",
                report.alert.raised,
                if report.alert.reasons.is_empty() {
                    String::new()
                } else {
                    format!(" ({})", report.alert.reasons.join("; "))
                }
            );
            Ok(())
        }
        Command::Synth { spec, common } => {
            let file = commands::load_synth_file(Path::new(spec))?;
            let (_, mut out) = resolve(common)?;
            commands::cmd_synth(&file, common.seed, &mut out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.stage.exit_code() as u8)
        }
    }
}
