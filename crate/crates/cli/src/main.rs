use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use tabguard::pipeline::{EvalToggles, ModelRole, ScenarioSelection};
use tabguard_cli::{
    cmd_defend_compare, cmd_evaluate, cmd_sweep, cmd_synth, cmd_train, init_logging, load_config,
    log_event,
};

/// Adversarial robustness pipeline for tabular binary classifiers.
#[derive(Parser)]
#[command(name = "tabguard", version, about)]
struct Cli {
    /// Path to the run configuration JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config's out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Master seed (overrides the config's master_seed).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the seeded synthetic credit dataset (CSV + schema JSON).
    Synth,
    /// Train a model and write its checkpoint.
    Train {
        /// baseline | pgd_adv | noise
        #[arg(long, default_value = "baseline")]
        mode: String,
    },
    /// Evaluate a checkpoint under clean and adversarial scenarios.
    Evaluate {
        /// clean | fgsm | pgd | all
        #[arg(long, default_value = "all")]
        scenario: String,
        /// Skip the SHAP attribution-stability block.
        #[arg(long)]
        no_shap: bool,
        /// Skip the semantic robustness (SRI) block.
        #[arg(long)]
        no_semantic: bool,
        /// Skip the bootstrap confidence intervals.
        #[arg(long)]
        no_bootstrap: bool,
    },
    /// PGD AUROC degradation across the configured epsilon grid.
    Sweep,
    /// Train baseline + defended models and emit a side-by-side table.
    DefendCompare,
}

fn run(cli: Cli) -> tabguard::error::Result<()> {
    let config_path = cli
        .config
        .ok_or_else(|| tabguard::error::Error::Parameter("--config is required".into()))?;
    let cfg = load_config(&config_path, cli.out, cli.seed)?;

    match cli.command {
        Command::Synth => {
            cmd_synth(&cfg)?;
        }
        Command::Train { mode } => {
            let role = match mode.as_str() {
                "baseline" => ModelRole::Baseline,
                "pgd_adv" => ModelRole::PgdAdv,
                "noise" => ModelRole::Noise,
                other => {
                    return Err(tabguard::error::Error::Parameter(format!(
                        "unknown mode `{other}` (expected baseline|pgd_adv|noise)"
                    )))
                }
            };
            cmd_train(&cfg, role)?;
        }
        Command::Evaluate {
            scenario,
            no_shap,
            no_semantic,
            no_bootstrap,
        } => {
            let selection = ScenarioSelection::from_str(&scenario)?;
            let toggles = EvalToggles {
                shap: !no_shap,
                semantic: !no_semantic,
                bootstrap: !no_bootstrap,
            };
            cmd_evaluate(&cfg, selection, toggles)?;
        }
        Command::Sweep => {
            cmd_sweep(&cfg)?;
        }
        Command::DefendCompare => {
            cmd_defend_compare(&cfg)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            log_event("error", serde_json::json!({"message": err.to_string()}));
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
