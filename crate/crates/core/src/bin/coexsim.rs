//! Command-line experiment runner.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use coexsim::config::{parse_config, ConfigError, RunConfig};
use coexsim::engine::topology_for_seed;
use coexsim::experiment::{preset, run_experiment, Experiment, ExperimentError, PRESETS};
use coexsim::output::format_sig6;

/// Environment variable that overrides the configured output directory.
const OUT_DIR_ENV: &str = "COEXSIM_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "coexsim", version, about = "LTE/WLAN unlicensed-channel coexistence simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a built-in preset (fig2, fig3..fig6, table3_4, fig7) or a TOML config file.
    Run {
        target: String,
        /// First drop seed; drop i uses seed + i.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        drops: Option<usize>,
        #[arg(long = "duration-ms")]
        duration_ms: Option<u64>,
        /// Output directory (overrides COEXSIM_OUT_DIR and the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a config file or preset without running it.
    Validate { target: String },
    /// Print the node positions of one drop as CSV.
    DumpTopology {
        /// Preset or config file; defaults apply when omitted.
        target: Option<String>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// List the built-in presets.
    Presets,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Unknown(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load(target: &str) -> Result<RunConfig, Failure> {
    if let Some(text) = preset(target) {
        return Ok(RunConfig::from_toml_str(text)?);
    }
    let path = Path::new(target);
    if !path.exists() {
        let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        return Err(Failure::Config(format!(
            "`{target}` is neither a preset ({}) nor an existing config file",
            names.join(", ")
        )));
    }
    Ok(parse_config(path)?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            target,
            seed,
            drops,
            duration_ms,
            out,
        } => {
            let mut cfg = load(&target)?;
            if let Some(s) = seed {
                cfg.engine.seed_base = s;
            }
            if let Some(d) = drops {
                cfg.engine.drops = d;
            }
            if let Some(d) = duration_ms {
                cfg.engine.duration_ms = d;
            }
            cfg.validate()?;
            let exp = Experiment::from_str(cfg.experiment.as_deref().unwrap_or("single"))?;
            let out_dir = out
                .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| cfg.output.directory.clone());
            log::info!(
                "running {} with {} drops of {} ms into {}",
                exp.name(),
                cfg.engine.drops,
                cfg.engine.duration_ms,
                out_dir.display()
            );
            for path in run_experiment(exp, &cfg, &out_dir)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Validate { target } => {
            let cfg = load(&target)?;
            println!("ok {}", cfg.hash_hex());
            Ok(())
        }
        Command::DumpTopology { target, seed } => {
            let cfg = match target {
                Some(t) => load(&t)?,
                None => RunConfig::default(),
            };
            let topo = topology_for_seed(&cfg, seed).map_err(|e| Failure::Runtime(e.to_string()))?;
            println!("node_id,kind,x,y,z");
            for n in &topo.nodes {
                println!(
                    "{},{},{},{},{}",
                    n.node_id,
                    n.kind.label(),
                    format_sig6(n.x),
                    format_sig6(n.y),
                    format_sig6(n.z)
                );
            }
            Ok(())
        }
        Command::Presets => {
            for (name, _) in PRESETS {
                println!("{name}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(2)
        }
    }
}
