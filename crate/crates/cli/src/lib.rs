//! Command implementations behind the `tabguard` binary.
//!
//! Each command is a thin orchestration over the library pipeline: resolve
//! the config, run the stages, write artifacts. Outputs are tracked by a
//! guard that removes partial files when a stage fails, so a nonzero exit
//! never leaves a half-written run directory behind.

use std::path::{Path, PathBuf};

use tabguard::dataio::write_csv;
use tabguard::error::{Error, Result};
use tabguard::pipeline::{
    defend_compare, evaluate, load_checkpoint_from, load_or_synthesize, prepare,
    save_checkpoint_to, sweep, synthesize, train_model, EvalToggles, ModelRole, RunConfig,
    ScenarioSelection,
};
use tabguard::report::{emit_csv, emit_json, fmt_sig, RobustnessReport};

/// Structured JSON-lines logger on standard error; human text stays on
/// standard output.
pub struct JsonlLogger;

impl log::Log for JsonlLogger {
    fn enabled(&self, metadata: &log::Metadata) -> bool {
        metadata.level() <= log::Level::Info
    }

    fn log(&self, record: &log::Record) {
        if self.enabled(record.metadata()) {
            eprintln!(
                "{}",
                serde_json::json!({
                    "level": record.level().to_string().to_lowercase(),
                    "target": record.target(),
                    "message": record.args().to_string(),
                })
            );
        }
    }

    fn flush(&self) {}
}

pub fn init_logging() {
    let _ = log::set_logger(&JsonlLogger);
    log::set_max_level(log::LevelFilter::Info);
}

/// Emit one structured event line on standard error.
pub fn log_event(event: &str, fields: serde_json::Value) {
    let mut obj = serde_json::json!({"level": "info", "event": event});
    if let (Some(dst), Some(src)) = (obj.as_object_mut(), fields.as_object()) {
        for (k, v) in src {
            dst.insert(k.clone(), v.clone());
        }
    }
    eprintln!("{obj}");
}

/// Removes tracked files on drop unless committed, so failed stages never
/// leave partial artifacts.
struct OutputGuard {
    written: Vec<PathBuf>,
    committed: bool,
}

impl OutputGuard {
    fn new() -> Self {
        OutputGuard {
            written: Vec::new(),
            committed: false,
        }
    }

    fn track(&mut self, path: PathBuf) {
        self.written.push(path);
    }

    fn track_all(&mut self, paths: Vec<PathBuf>) {
        self.written.extend(paths);
    }

    fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if !self.committed {
            for path in &self.written {
                let _ = std::fs::remove_file(path);
            }
        }
    }
}

/// Load the config file and apply command-line overrides.
pub fn load_config(path: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_json_file(path)?;
    if let Some(out) = out {
        cfg.out_dir = Some(out);
    }
    if let Some(seed) = seed {
        cfg.master_seed = seed;
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg
        .out_dir
        .clone()
        .ok_or_else(|| Error::Parameter("no output directory (set out_dir or --out)".into()))?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    Ok(dir)
}

fn checkpoint_path(cfg: &RunConfig, dir: &Path) -> PathBuf {
    cfg.checkpoint
        .clone()
        .unwrap_or_else(|| dir.join("model.json"))
}

/// Generate the synthetic dataset and write `synthetic.csv` + `schema.json`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let dir = out_dir(cfg)?;
    let mut guard = OutputGuard::new();
    let (table, schema) = synthesize(cfg)?;
    let csv_path = dir.join("synthetic.csv");
    write_csv(&table, &csv_path)?;
    guard.track(csv_path.clone());
    let schema_path = dir.join("schema.json");
    schema.to_json_file(&schema_path)?;
    guard.track(schema_path.clone());
    log_event(
        "synth",
        serde_json::json!({
            "rows": table.n_rows(),
            "csv": csv_path.display().to_string(),
            "schema": schema_path.display().to_string(),
        }),
    );
    Ok(guard.commit())
}

/// Train one model (baseline or hardened) and write the checkpoint.
pub fn cmd_train(cfg: &RunConfig, role: ModelRole) -> Result<PathBuf> {
    let dir = out_dir(cfg)?;
    let mut guard = OutputGuard::new();
    let (raw, schema) = load_or_synthesize(cfg)?;
    let bundle = prepare(&raw, &schema, cfg)?;
    let ckpt = train_model(&bundle, cfg, role)?;
    let path = checkpoint_path(cfg, &dir);
    save_checkpoint_to(&ckpt, &path)?;
    guard.track(path.clone());
    // Training summary as a JSON line on stdout.
    println!(
        "{}",
        serde_json::json!({
            "checkpoint": path.display().to_string(),
            "mode": role.as_str(),
            "best_val_auroc": ckpt.best_val_auroc,
            "best_epoch": ckpt.best_epoch,
        })
    );
    guard.commit();
    Ok(path)
}

/// Run the configured scenarios and emit `report.json` plus the CSV tables.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    selection: ScenarioSelection,
    toggles: EvalToggles,
) -> Result<Vec<PathBuf>> {
    let dir = out_dir(cfg)?;
    let mut guard = OutputGuard::new();
    let (raw, schema) = load_or_synthesize(cfg)?;
    let bundle = prepare(&raw, &schema, cfg)?;
    let mut cfg = cfg.clone();
    if cfg.checkpoint.is_none() {
        cfg.checkpoint = Some(checkpoint_path(&cfg, &dir));
    }
    let ckpt = load_checkpoint_from(&cfg)?;
    let report = evaluate(&bundle, &ckpt, &cfg, selection, toggles, ModelRole::Baseline)?;
    let report_path = dir.join("report.json");
    emit_json(&report, &report_path)?;
    guard.track(report_path.clone());
    guard.track_all(emit_csv(&report, &dir)?);
    print_summary(&report);
    log_event(
        "evaluate",
        serde_json::json!({"report": report_path.display().to_string()}),
    );
    Ok(guard.commit())
}

fn print_summary(report: &RobustnessReport) {
    for block in report.scenarios.present() {
        println!(
            "{:<6} auroc {}  ks {}  ece {}  brier {}  portfolio_el {}",
            block.scenario.to_string(),
            fmt_sig(block.discrimination.auroc, 6),
            fmt_sig(block.discrimination.ks, 6),
            fmt_sig(block.calibration.ece, 6),
            fmt_sig(block.calibration.brier, 6),
            fmt_sig(block.economic.portfolio_el, 6),
        );
    }
}

/// Sweep the perturbation budget and write `epsilon_sweep.csv`.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = out_dir(cfg)?;
    let mut guard = OutputGuard::new();
    let (raw, schema) = load_or_synthesize(cfg)?;
    let bundle = prepare(&raw, &schema, cfg)?;
    let mut cfg = cfg.clone();
    if cfg.checkpoint.is_none() {
        cfg.checkpoint = Some(checkpoint_path(&cfg, &dir));
    }
    let ckpt = load_checkpoint_from(&cfg)?;
    let (rows, warnings) = sweep(&bundle, &ckpt, &cfg)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    let path = dir.join("epsilon_sweep.csv");
    let mut body = String::from("epsilon,pgd_auroc,portfolio_el\n");
    for r in &rows {
        body.push_str(&format!(
            "{},{},{}\n",
            fmt_sig(r.epsilon, 6),
            fmt_sig(r.pgd_auroc, 6),
            fmt_sig(r.portfolio_el, 6)
        ));
    }
    std::fs::write(&path, body).map_err(|e| Error::io(path.display().to_string(), e))?;
    guard.track(path.clone());
    for r in &rows {
        println!(
            "epsilon {}  pgd_auroc {}  portfolio_el {}",
            fmt_sig(r.epsilon, 6),
            fmt_sig(r.pgd_auroc, 6),
            fmt_sig(r.portfolio_el, 6)
        );
    }
    guard.commit();
    Ok(path)
}

/// Train baseline and both defenses on identical splits and seeds; write the
/// side-by-side comparison table and a JSON copy.
pub fn cmd_defend_compare(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let dir = out_dir(cfg)?;
    let mut guard = OutputGuard::new();
    let (raw, schema) = load_or_synthesize(cfg)?;
    let bundle = prepare(&raw, &schema, cfg)?;
    let rows = defend_compare(&bundle, cfg)?;

    let csv_path = dir.join("defense_comparison.csv");
    let mut body = String::from("model,clean_auroc,pgd_auroc,pgd_ece,pgd_el\n");
    for r in &rows {
        body.push_str(&format!(
            "{},{},{},{},{}\n",
            r.model,
            fmt_sig(r.clean_auroc, 6),
            fmt_sig(r.pgd_auroc, 6),
            fmt_sig(r.pgd_ece, 6),
            fmt_sig(r.pgd_el, 6)
        ));
    }
    std::fs::write(&csv_path, body).map_err(|e| Error::io(csv_path.display().to_string(), e))?;
    guard.track(csv_path.clone());

    let json_path = dir.join("defense_comparison.json");
    let json = serde_json::to_string_pretty(&rows)
        .map_err(|e| Error::Format(format!("comparison serialize: {e}")))?;
    std::fs::write(&json_path, json + "\n")
        .map_err(|e| Error::io(json_path.display().to_string(), e))?;
    guard.track(json_path.clone());

    for r in &rows {
        println!(
            "{:<8} clean_auroc {}  pgd_auroc {}  pgd_ece {}  pgd_el {}",
            r.model,
            fmt_sig(r.clean_auroc, 6),
            fmt_sig(r.pgd_auroc, 6),
            fmt_sig(r.pgd_ece, 6),
            fmt_sig(r.pgd_el, 6)
        );
    }
    Ok(guard.commit())
}

