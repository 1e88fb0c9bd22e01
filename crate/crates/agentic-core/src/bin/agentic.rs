//! Command-line entry point: validate blueprints, run seeded tasks
//! against simulated environments, drive evolution stages, and inspect
//! memory stores.

use agentic_core::evolution::EvolutionConfig;
use agentic_core::harness::{
    cmd_evolve, cmd_memory, cmd_run, cmd_validate_as, exit_code, ClockKind, EvolveArgs,
    HarnessError, MemoryAction, RunConfig,
};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "agentic",
    about = "Runtime engine for declarative agent blueprints",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a blueprint file (including its local-agent tree).
    Validate {
        /// Path to a .agf.yaml or .agf.json blueprint.
        path: PathBuf,
        /// Force the input format instead of detecting it from the
        /// extension.
        #[arg(long, value_parser = parse_format)]
        format: Option<agentic_core::blueprint::DocFormat>,
    },
    /// Run one seeded task against a fixture environment.
    Run {
        /// JSON run-config file; explicit flags override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        blueprint: Option<PathBuf>,
        /// Built-in fixture name (stock-comparison, slow-tool,
        /// date-format, tool-chain) or a fixture file path.
        #[arg(long)]
        env: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_clock)]
        clock: Option<ClockKind>,
        #[arg(long, value_parser = parse_on_off)]
        speculation: Option<bool>,
        /// Context cache target size for attention-guided pruning.
        #[arg(long)]
        context_budget: Option<usize>,
        /// Where to write the metrics report (atomic).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Where to write the line-delimited trajectory log.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Where to write the scheduler trace file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a self-evolution stage and print its success-rate table.
    Evolve {
        /// 1 = in-context lessons, 2 = filtered fine-tuning, 3 = policy
        /// gradient.
        #[arg(long)]
        level: u8,
        /// Toy environment: date-format or tool-chain.
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Start from a saved policy checkpoint.
        #[arg(long)]
        checkpoint_in: Option<PathBuf>,
        /// Save the resulting policy checkpoint.
        #[arg(long)]
        checkpoint_out: Option<PathBuf>,
    },
    /// Inspect a persisted memory store.
    Memory {
        /// Path to a store record file (one JSON record per line).
        #[arg(long)]
        store: PathBuf,
        #[command(subcommand)]
        action: MemoryCommand,
    },
}

#[derive(Subcommand)]
enum MemoryCommand {
    /// Print every record.
    Dump,
    /// Run an ad hoc similarity query.
    Query {
        #[arg(long)]
        text: String,
        #[arg(short, default_value_t = 5)]
        k: usize,
    },
}

fn parse_format(s: &str) -> Result<agentic_core::blueprint::DocFormat, String> {
    match s {
        "yaml" => Ok(agentic_core::blueprint::DocFormat::Yaml),
        "json" => Ok(agentic_core::blueprint::DocFormat::Json),
        other => Err(format!("expected yaml|json, got `{other}`")),
    }
}

fn parse_clock(s: &str) -> Result<ClockKind, String> {
    match s {
        "virtual" => Ok(ClockKind::Virtual),
        "real" => Ok(ClockKind::Real),
        other => Err(format!("expected virtual|real, got `{other}`")),
    }
}

fn parse_on_off(s: &str) -> Result<bool, String> {
    match s {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(format!("expected on|off, got `{other}`")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

fn run(cli: Cli) -> Result<i32, HarnessError> {
    match cli.command {
        Command::Validate { path, format } => {
            let summary = cmd_validate_as(&path, format)?;
            println!("{summary}");
            Ok(exit_code::SUCCESS)
        }
        Command::Run {
            config,
            blueprint,
            env,
            seed,
            clock,
            speculation,
            context_budget,
            report,
            log,
            trace,
        } => {
            // Config file first, explicit flags win.
            let mut run_config = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| {
                        HarnessError::Validation(format!("cannot read config: {e}"))
                    })?;
                    serde_json::from_str::<RunConfig>(&text)
                        .map_err(|e| HarnessError::Validation(format!("malformed config: {e}")))?
                }
                None => RunConfig {
                    blueprint_path: PathBuf::new(),
                    env_fixture: String::new(),
                    seed: 0,
                    clock: ClockKind::Virtual,
                    speculation: false,
                    context_budget: 64,
                    report_path: None,
                    trajectory_log_path: None,
                    trace_path: None,
                },
            };
            if let Some(v) = blueprint {
                run_config.blueprint_path = v;
            }
            if let Some(v) = env {
                run_config.env_fixture = v;
            }
            if let Some(v) = seed {
                run_config.seed = v;
            }
            if let Some(v) = clock {
                run_config.clock = v;
            }
            if let Some(v) = speculation {
                run_config.speculation = v;
            }
            if let Some(v) = context_budget {
                run_config.context_budget = v;
            }
            if let Some(v) = report {
                run_config.report_path = Some(v);
            }
            if let Some(v) = log {
                run_config.trajectory_log_path = Some(v);
            }
            if let Some(v) = trace {
                run_config.trace_path = Some(v);
            }
            if run_config.blueprint_path.as_os_str().is_empty() {
                return Err(HarnessError::Validation(
                    "--blueprint (or a config file) is required".into(),
                ));
            }
            if run_config.env_fixture.is_empty() {
                return Err(HarnessError::Validation(
                    "--env (or a config file) is required".into(),
                ));
            }
            let metrics = cmd_run(&run_config)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&metrics)
                    .map_err(|e| HarnessError::Internal(e.to_string()))?
            );
            Ok(if metrics.success {
                exit_code::SUCCESS
            } else {
                exit_code::TASK_FAILURE
            })
        }
        Command::Evolve {
            level,
            env,
            seed,
            episodes,
            epochs,
            batch_size,
            report,
            checkpoint_in,
            checkpoint_out,
        } => {
            let mut config = EvolutionConfig {
                seed,
                ..EvolutionConfig::default()
            };
            if let Some(v) = episodes {
                config.episodes = v;
            }
            if let Some(v) = epochs {
                config.epochs = v;
            }
            if let Some(v) = batch_size {
                config.batch_size = v;
            }
            let args = EvolveArgs {
                level,
                env,
                config,
                checkpoint_in,
                checkpoint_out,
                report_path: report,
            };
            let (_, table) = cmd_evolve(&args)?;
            println!("{table}");
            Ok(exit_code::SUCCESS)
        }
        Command::Memory { store, action } => {
            let action = match action {
                MemoryCommand::Dump => MemoryAction::Dump,
                MemoryCommand::Query { text, k } => MemoryAction::Query { text, k },
            };
            let output = cmd_memory(&store, &action)?;
            print!("{output}");
            Ok(exit_code::SUCCESS)
        }
    }
}
