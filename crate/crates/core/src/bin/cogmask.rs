use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cogmask::config::{self, PRESETS};
use cogmask::runner::{self, RunError};

#[derive(Parser)]
#[command(name = "cogmask", version, about = "Network SEIR simulator with adaptive mask-wearing agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write daily.csv, agents.csv and summary.json.
    Run {
        /// Config file, or the name of a shipped preset.
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config file without running it.
    Validate { config: String },
    /// Build and calibrate the network, then cross-check R0 by simulation.
    Calibrate { config: String },
    /// Shipped scenario presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// List preset names.
    List,
    /// Print a preset's config file.
    Show { name: String },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<(), RunError> {
    match command {
        Command::Run {
            config,
            seed,
            replicates,
            out,
        } => {
            let mut cfg = runner::resolve_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = replicates {
                cfg.schedule.replicates = r;
            }
            if let Some(dir) = out {
                cfg.output.dir = dir;
            }
            let summary = runner::run_scenario(&cfg)?;
            println!(
                "{}: {} replicates on {} nodes written to {}",
                summary.scenario,
                summary.replicates.len(),
                summary.network.n_nodes,
                cfg.output.dir.display()
            );
            Ok(())
        }
        Command::Validate { config } => {
            let path = std::path::Path::new(&config);
            let problems = if path.exists() {
                config::validate_config(path)?
            } else {
                // fall back to presets so `validate fig3_base` works too
                runner::resolve_config(&config)?;
                Vec::new()
            };
            if problems.is_empty() {
                println!("ok");
                Ok(())
            } else {
                Err(config::ConfigError::Invalid(problems).into())
            }
        }
        Command::Calibrate { config } => {
            let cfg = runner::resolve_config(&config)?;
            let report = runner::calibrate_only(&cfg)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            Ok(())
        }
        Command::Presets { action } => {
            match action {
                PresetAction::List => {
                    for (name, _) in PRESETS {
                        println!("{name}");
                    }
                }
                PresetAction::Show { name } => match config::preset_text(&name) {
                    Some(text) => print!("{text}"),
                    None => {
                        return Err(config::ConfigError::Invalid(vec![format!(
                            "no preset named '{name}'"
                        )])
                        .into())
                    }
                },
            }
            Ok(())
        }
    }
}
