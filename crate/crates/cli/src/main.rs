use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use decum_cli::config::{Resolved, RunConfig};
use decum_cli::error::CliError;
use decum_cli::pipeline::{report, Pipeline, Stage};

#[derive(Parser)]
#[command(name = "decum", version, about = "Tontine decumulation: simulate, train, evaluate and price")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir` in the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed; train, eval and price streams use seed, seed+1, seed+2.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the configuration and print the resolved scenario.
    Validate,
    /// Generate training, evaluation and pricing paths.
    Simulate,
    /// Train the policy at the configured gamma.
    Train,
    /// Train one policy per frontier gamma.
    Frontier,
    /// Constant-rule benchmark, held-out metrics, heatmaps and percentiles.
    Eval,
    /// Price the guarantee under the trained policy.
    Price,
    /// Summarise the artifacts in the output directory.
    Report {
        #[arg(long, value_delimiter = ',')]
        stage: Vec<String>,
    },
    /// Run several stages in order.
    Run {
        /// Comma-separated stages; all stages when omitted.
        #[arg(long, value_delimiter = ',')]
        stage: Vec<String>,
    },
}

fn resolve(cli: &Cli) -> Result<Resolved, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::config("--config <file> is required"))?;
    let (cfg, base) = RunConfig::load(path)?;
    cfg.resolve(&base, cli.out.as_deref(), cli.seed_override)
}

fn parse_stages(names: &[String]) -> Result<Vec<Stage>, CliError> {
    names.iter().map(|s| s.trim().parse()).collect()
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let single = |st: Stage| -> Result<(), CliError> { Pipeline::open(resolve(cli)?)?.run(&[st]) };
    match &cli.command {
        Command::Validate => {
            let r = resolve(cli)?;
            let s = &r.scenario;
            println!("configuration ok (preset {})", r.preset.as_deref().unwrap_or("none"));
            println!("varrho = {:.7}", s.varrho);
            println!("annual fee rate c = -ln(1 - varrho) = {:.7}", -(-s.varrho).ln_1p());
            println!(
                "W0 {} T {} M {} q in [{}, {}] alpha {} gamma {} epsilon {}",
                s.w0, s.t, s.m, s.q_min, s.q_max, s.alpha, s.gamma, s.epsilon
            );
            println!("output {}", r.output_dir.display());
            Ok(())
        }
        Command::Simulate => single(Stage::Simulate),
        Command::Train => single(Stage::Train),
        Command::Frontier => single(Stage::Frontier),
        Command::Eval => single(Stage::Eval),
        Command::Price => single(Stage::Price),
        Command::Report { stage } => {
            let out = match (&cli.out, &cli.config) {
                (Some(o), _) => o.clone(),
                (None, Some(_)) => resolve(cli)?.output_dir,
                (None, None) => return Err(CliError::config("report needs --out or --config")),
            };
            println!("{}", report(&out, &parse_stages(stage)?)?);
            Ok(())
        }
        Command::Run { stage } => {
            let stages = if stage.is_empty() { Stage::ALL.to_vec() } else { parse_stages(stage)? };
            let mut p = Pipeline::open(resolve(cli)?)?;
            p.run(&stages)?;
            println!("{}", report(&p.out, &[])?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(2)
        }
    }
}
