//! Robustness report assembly and serialization.
//!
//! One JSON document carries everything a model-risk review needs; flat CSV
//! tables mirror the headline views. JSON is pretty-printed with stable key
//! order and shortest-round-trip floats, so identical inputs regenerate
//! byte-identical artifacts. CSV numbers are fixed at six significant digits;
//! full precision lives in the JSON.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::econrisk::{CostPoint, EconomicConfusion};
use crate::error::{Error, Result};
use crate::explain::StabilityStats;
use crate::metrics::{ReliabilityBins, Scenario};
use crate::semantic::SriResult;
use crate::stats::BootstrapCI;

pub const REPORT_VERSION: &str = "tabguard-report-v1";

/// JSON schema document the emitted report validates against.
pub const REPORT_SCHEMA_JSON: &str = include_str!("../report.schema.json");

/// Optional block: either data or an explicit absence reason, never silently
/// missing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Block<T> {
    pub data: Option<T>,
    pub reason: Option<String>,
}

impl<T> Block<T> {
    pub fn present(data: T) -> Self {
        Block {
            data: Some(data),
            reason: None,
        }
    }

    pub fn missing(reason: &str) -> Self {
        Block {
            data: None,
            reason: Some(reason.to_string()),
        }
    }
}

/// Run provenance: seeds, fingerprints, configuration echo and warnings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub master_seed: u64,
    pub stage_seeds: BTreeMap<String, u64>,
    pub schema_fingerprint: String,
    /// baseline | pgd_adv | noise
    pub model_role: String,
    /// Unix seconds; honors SOURCE_DATE_EPOCH for reproducible artifacts.
    pub created_at_unix: Option<u64>,
    pub warnings: Vec<String>,
    pub config_echo: serde_json::Value,
}

impl RunMetadata {
    /// Wall-clock timestamp unless SOURCE_DATE_EPOCH pins it.
    pub fn timestamp_now() -> Option<u64> {
        if let Ok(epoch) = std::env::var("SOURCE_DATE_EPOCH") {
            if let Ok(secs) = epoch.parse::<u64>() {
                return Some(secs);
            }
        }
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscriminationBlock {
    pub auroc: f64,
    pub ks: f64,
    pub gini: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationBlock {
    pub ece: f64,
    pub brier: f64,
    pub bins: ReliabilityBins,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EconomicBlock {
    pub portfolio_el: f64,
    pub var: f64,
    pub es: f64,
    pub alpha: f64,
    pub n_sims: usize,
    pub bayes_tau: f64,
    pub cost_min_tau: f64,
    pub cost_min_cost: f64,
    pub cost_curve: Vec<CostPoint>,
    pub confusion_at_cost_min: EconomicConfusion,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeaturePsi {
    pub feature: String,
    pub psi: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftBlock {
    pub per_feature_psi: Vec<FeaturePsi>,
    pub score_psi: f64,
    pub score_ks: f64,
    pub score_wasserstein: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FairnessBlock {
    pub threshold: f64,
    pub group_a: String,
    pub group_b: String,
    pub demographic_parity_diff: f64,
    pub equal_opportunity_diff: Option<f64>,
    pub groups: Vec<crate::driftfair::GroupStats>,
}

/// All evaluation results for one scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioBlock {
    pub scenario: Scenario,
    pub discrimination: DiscriminationBlock,
    pub calibration: CalibrationBlock,
    pub economic: EconomicBlock,
    /// Attack audit: largest per-coordinate deviation from the clean rows.
    pub max_linf_deviation: Option<f64>,
    pub drift: Block<DriftBlock>,
    pub fairness: Block<FairnessBlock>,
    pub cap_curve: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub clean: Block<ScenarioBlock>,
    pub fgsm: Block<ScenarioBlock>,
    pub pgd: Block<ScenarioBlock>,
}

impl ScenarioSet {
    pub fn present(&self) -> Vec<&ScenarioBlock> {
        [&self.clean, &self.fgsm, &self.pgd]
            .into_iter()
            .filter_map(|b| b.data.as_ref())
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapStabilityBlock {
    pub n_instances: usize,
    pub n_coalitions: usize,
    pub background_size: usize,
    /// Keyed by attack scenario name (`fgsm`, `pgd`).
    pub per_attack: BTreeMap<String, StabilityStats>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SriBlock {
    pub provider: String,
    pub per_attack: BTreeMap<String, SriResult>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapEntry {
    pub scenario: String,
    pub metric: String,
    pub ci: BootstrapCI,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparationEntry {
    pub metric: String,
    pub scenario_a: String,
    pub scenario_b: String,
    pub separated: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapBlock {
    pub level: f64,
    pub replicates: usize,
    pub entries: Vec<BootstrapEntry>,
    pub separations: Vec<SeparationEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub pgd_auroc: f64,
    pub portfolio_el: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefenseRow {
    pub model: String,
    pub clean_auroc: f64,
    pub pgd_auroc: f64,
    pub pgd_ece: f64,
    pub pgd_el: f64,
}

/// The aggregated machine-readable artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub version: String,
    pub metadata: RunMetadata,
    pub scenarios: ScenarioSet,
    pub shap_stability: Block<ShapStabilityBlock>,
    pub sri: Block<SriBlock>,
    pub bootstrap: Block<BootstrapBlock>,
    pub epsilon_sweep: Block<Vec<SweepRow>>,
    pub defense_comparison: Block<Vec<DefenseRow>>,
}

/// Inputs to [`assemble`]; every block except metadata and the clean
/// scenario is optional.
#[derive(Debug, Clone, Default)]
pub struct ReportParts {
    pub clean: Option<ScenarioBlock>,
    pub fgsm: Option<ScenarioBlock>,
    pub pgd: Option<ScenarioBlock>,
    pub shap: Option<ShapStabilityBlock>,
    pub sri: Option<SriBlock>,
    pub bootstrap: Option<BootstrapBlock>,
    pub epsilon_sweep: Option<Vec<SweepRow>>,
    pub defense_comparison: Option<Vec<DefenseRow>>,
}

fn ensure_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Assembly(format!("non-finite value in `{name}`: {v}")))
    }
}

fn check_scenario(slot: Scenario, block: &ScenarioBlock) -> Result<()> {
    if block.scenario != slot {
        return Err(Error::Assembly(format!(
            "scenario block tagged `{}` placed in `{}` slot",
            block.scenario, slot
        )));
    }
    let d = &block.discrimination;
    let c = &block.calibration;
    let e = &block.economic;
    for (name, v) in [
        ("auroc", d.auroc),
        ("ks", d.ks),
        ("gini", d.gini),
        ("accuracy", d.accuracy),
        ("ece", c.ece),
        ("brier", c.brier),
        ("portfolio_el", e.portfolio_el),
        ("var", e.var),
        ("es", e.es),
        ("bayes_tau", e.bayes_tau),
        ("cost_min_tau", e.cost_min_tau),
        ("cost_min_cost", e.cost_min_cost),
    ] {
        ensure_finite(&format!("{slot}.{name}"), v)?;
    }
    if let Some(linf) = block.max_linf_deviation {
        ensure_finite(&format!("{slot}.max_linf_deviation"), linf)?;
    }
    Ok(())
}

/// Assemble a validated report. The clean scenario is mandatory; every
/// absent optional block carries an explicit reason (default `not_run`).
pub fn assemble(metadata: RunMetadata, parts: ReportParts) -> Result<RobustnessReport> {
    let clean = parts
        .clean
        .ok_or_else(|| Error::Assembly("clean scenario block is required".into()))?;
    check_scenario(Scenario::Clean, &clean)?;
    if let Some(b) = &parts.fgsm {
        check_scenario(Scenario::Fgsm, b)?;
    }
    if let Some(b) = &parts.pgd {
        check_scenario(Scenario::Pgd, b)?;
    }
    if let Some(rows) = &parts.epsilon_sweep {
        for r in rows {
            ensure_finite("epsilon_sweep.pgd_auroc", r.pgd_auroc)?;
            ensure_finite("epsilon_sweep.portfolio_el", r.portfolio_el)?;
        }
    }
    if let Some(b) = &parts.bootstrap {
        for e in &b.entries {
            ensure_finite(&format!("bootstrap.{}.{}", e.scenario, e.metric), e.ci.point)?;
        }
    }

    let wrap = |opt: Option<ScenarioBlock>| match opt {
        Some(b) => Block::present(b),
        None => Block::missing("not_run"),
    };
    Ok(RobustnessReport {
        version: REPORT_VERSION.to_string(),
        metadata,
        scenarios: ScenarioSet {
            clean: Block::present(clean),
            fgsm: wrap(parts.fgsm),
            pgd: wrap(parts.pgd),
        },
        shap_stability: parts
            .shap
            .map_or_else(|| Block::missing("not_run"), Block::present),
        sri: parts
            .sri
            .map_or_else(|| Block::missing("not_run"), Block::present),
        bootstrap: parts
            .bootstrap
            .map_or_else(|| Block::missing("not_run"), Block::present),
        epsilon_sweep: parts
            .epsilon_sweep
            .map_or_else(|| Block::missing("not_run"), Block::present),
        defense_comparison: parts
            .defense_comparison
            .map_or_else(|| Block::missing("not_run"), Block::present),
    })
}

/// Render `x` with `sig` significant digits in plain positional notation.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp: i32 = format!("{x:e}")
        .split('e')
        .nth(1)
        .and_then(|e| e.parse().ok())
        .unwrap_or(0);
    let sig = sig as i32;
    if exp >= sig {
        let scale = 10f64.powi(exp - sig + 1);
        format!("{:.0}", (x / scale).round() * scale)
    } else {
        let decimals = (sig - 1 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    }
}

fn sig6(x: f64) -> String {
    fmt_sig(x, 6)
}

/// Serialize the report as pretty JSON with a trailing newline.
pub fn report_to_json(report: &RobustnessReport) -> Result<String> {
    serde_json::to_string_pretty(report)
        .map(|s| s + "\n")
        .map_err(|e| Error::Assembly(format!("report serialize: {e}")))
}

pub fn emit_json(report: &RobustnessReport, path: &Path) -> Result<()> {
    let body = report_to_json(report)?;
    std::fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_report(path: &Path) -> Result<RobustnessReport> {
    let body =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&body).map_err(|e| Error::Format(format!("report {}: {e}", path.display())))
}

struct CsvOut {
    path: PathBuf,
    writer: csv::Writer<std::fs::File>,
}

impl CsvOut {
    fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        let path = dir.join(name);
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(&path)
            .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))?;
        writer
            .write_record(header)
            .map_err(|e| Error::Data(format!("csv write: {e}")))?;
        Ok(CsvOut { path, writer })
    }

    fn row(&mut self, fields: &[String]) -> Result<()> {
        self.writer
            .write_record(fields)
            .map_err(|e| Error::Data(format!("csv write: {e}")))
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.writer
            .flush()
            .map_err(|e| Error::io(self.path.display().to_string(), e))?;
        Ok(self.path)
    }
}

/// Write the flat CSV tables into `dir`; returns the written paths.
pub fn emit_csv(report: &RobustnessReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut written = Vec::new();
    let scenarios = report.scenarios.present();

    let mut disc = CsvOut::create(dir, "discrimination.csv", &["scenario", "auroc", "ks", "gini", "accuracy"])?;
    for b in &scenarios {
        disc.row(&[
            b.scenario.to_string(),
            sig6(b.discrimination.auroc),
            sig6(b.discrimination.ks),
            sig6(b.discrimination.gini),
            sig6(b.discrimination.accuracy),
        ])?;
    }
    written.push(disc.finish()?);

    let mut cal = CsvOut::create(dir, "calibration.csv", &["scenario", "ece", "brier"])?;
    for b in &scenarios {
        cal.row(&[
            b.scenario.to_string(),
            sig6(b.calibration.ece),
            sig6(b.calibration.brier),
        ])?;
    }
    written.push(cal.finish()?);

    let mut econ = CsvOut::create(dir, "economic.csv", &["scenario", "portfolio_el", "var", "es"])?;
    for b in &scenarios {
        econ.row(&[
            b.scenario.to_string(),
            sig6(b.economic.portfolio_el),
            sig6(b.economic.var),
            sig6(b.economic.es),
        ])?;
    }
    written.push(econ.finish()?);

    let mut cost = CsvOut::create(
        dir,
        "cost_curve.csv",
        &["scenario", "tau", "false_positives", "false_negatives", "cost"],
    )?;
    for b in &scenarios {
        for p in &b.economic.cost_curve {
            cost.row(&[
                b.scenario.to_string(),
                sig6(p.tau),
                p.false_positives.to_string(),
                p.false_negatives.to_string(),
                sig6(p.cost),
            ])?;
        }
    }
    written.push(cost.finish()?);

    let mut rel = CsvOut::create(
        dir,
        "reliability_bins.csv",
        &["scenario", "bin_lower", "bin_upper", "count", "mean_confidence", "accuracy"],
    )?;
    for b in &scenarios {
        let bins = &b.calibration.bins;
        for k in 0..bins.counts.len() {
            rel.row(&[
                b.scenario.to_string(),
                sig6(bins.edges[k]),
                sig6(bins.edges[k + 1]),
                bins.counts[k].to_string(),
                sig6(bins.mean_confidence[k]),
                sig6(bins.accuracy[k]),
            ])?;
        }
    }
    written.push(rel.finish()?);

    let mut cap = CsvOut::create(dir, "cap_curve.csv", &["scenario", "population_share", "capture_share"])?;
    for b in &scenarios {
        for (x, y) in &b.cap_curve {
            cap.row(&[b.scenario.to_string(), sig6(*x), sig6(*y)])?;
        }
    }
    written.push(cap.finish()?);

    let mut drift = CsvOut::create(dir, "drift.csv", &["scenario", "kind", "name", "value"])?;
    for b in &scenarios {
        if let Some(d) = &b.drift.data {
            for f in &d.per_feature_psi {
                drift.row(&[
                    b.scenario.to_string(),
                    "feature_psi".into(),
                    f.feature.clone(),
                    sig6(f.psi),
                ])?;
            }
            drift.row(&[b.scenario.to_string(), "score".into(), "psi".into(), sig6(d.score_psi)])?;
            drift.row(&[b.scenario.to_string(), "score".into(), "ks".into(), sig6(d.score_ks)])?;
            drift.row(&[
                b.scenario.to_string(),
                "score".into(),
                "wasserstein".into(),
                sig6(d.score_wasserstein),
            ])?;
        }
    }
    written.push(drift.finish()?);

    let mut fair = CsvOut::create(
        dir,
        "fairness.csv",
        &["scenario", "group_a", "group_b", "dp_diff", "eo_diff", "rate_a", "rate_b", "tpr_a", "tpr_b"],
    )?;
    for b in &scenarios {
        if let Some(f) = &b.fairness.data {
            let find = |g: &str| f.groups.iter().find(|s| s.group == g);
            let (ra, rb) = (find(&f.group_a), find(&f.group_b));
            fair.row(&[
                b.scenario.to_string(),
                f.group_a.clone(),
                f.group_b.clone(),
                sig6(f.demographic_parity_diff),
                f.equal_opportunity_diff.map_or("".into(), sig6),
                ra.map_or("".into(), |s| sig6(s.positive_rate)),
                rb.map_or("".into(), |s| sig6(s.positive_rate)),
                ra.and_then(|s| s.tpr).map_or("".into(), sig6),
                rb.and_then(|s| s.tpr).map_or("".into(), sig6),
            ])?;
        }
    }
    written.push(fair.finish()?);

    let mut shap = CsvOut::create(
        dir,
        "shap_stability.csv",
        &[
            "attack",
            "n_instances",
            "mean_cosine",
            "median_cosine",
            "p5_cosine",
            "mean_spearman",
            "median_spearman",
            "p5_spearman",
            "mean_l2",
            "median_l2",
            "p5_l2",
            "skipped",
        ],
    )?;
    if let Some(block) = &report.shap_stability.data {
        for (attack, s) in &block.per_attack {
            shap.row(&[
                attack.clone(),
                s.per_instance.len().to_string(),
                sig6(s.mean_cosine),
                sig6(s.median_cosine),
                sig6(s.p5_cosine),
                sig6(s.mean_spearman),
                sig6(s.median_spearman),
                sig6(s.p5_spearman),
                sig6(s.mean_l2),
                sig6(s.median_l2),
                sig6(s.p5_l2),
                s.skipped.to_string(),
            ])?;
        }
    }
    written.push(shap.finish()?);

    let mut boot = CsvOut::create(
        dir,
        "bootstrap.csv",
        &["scenario", "metric", "point", "lower", "upper", "level", "replicates", "discarded"],
    )?;
    if let Some(block) = &report.bootstrap.data {
        for e in &block.entries {
            boot.row(&[
                e.scenario.clone(),
                e.metric.clone(),
                sig6(e.ci.point),
                sig6(e.ci.lower),
                sig6(e.ci.upper),
                sig6(e.ci.level),
                e.ci.replicates.to_string(),
                e.ci.discarded.to_string(),
            ])?;
        }
    }
    written.push(boot.finish()?);

    let mut sweep = CsvOut::create(dir, "epsilon_sweep.csv", &["epsilon", "pgd_auroc", "portfolio_el"])?;
    if let Some(rows) = &report.epsilon_sweep.data {
        for r in rows {
            sweep.row(&[sig6(r.epsilon), sig6(r.pgd_auroc), sig6(r.portfolio_el)])?;
        }
    }
    written.push(sweep.finish()?);

    if let Some(rows) = &report.defense_comparison.data {
        let mut cmp = CsvOut::create(
            dir,
            "defense_comparison.csv",
            &["model", "clean_auroc", "pgd_auroc", "pgd_ece", "pgd_el"],
        )?;
        for r in rows {
            cmp.row(&[
                r.model.clone(),
                sig6(r.clean_auroc),
                sig6(r.pgd_auroc),
                sig6(r.pgd_ece),
                sig6(r.pgd_el),
            ])?;
        }
        written.push(cmp.finish()?);
    }

    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ReliabilityBins;

    pub(crate) fn toy_scenario(scenario: Scenario) -> ScenarioBlock {
        ScenarioBlock {
            scenario,
            discrimination: DiscriminationBlock {
                auroc: 0.7350,
                ks: 0.365,
                gini: 0.470,
                accuracy: 0.813,
            },
            calibration: CalibrationBlock {
                ece: 0.0454,
                brier: 0.182,
                bins: ReliabilityBins {
                    edges: vec![0.0, 0.5, 1.0],
                    counts: vec![4, 6],
                    mean_confidence: vec![0.3, 0.7],
                    accuracy: vec![0.25, 0.8],
                },
            },
            economic: EconomicBlock {
                portfolio_el: 15070.90,
                var: 37375.8,
                es: 53813.9,
                alpha: 0.95,
                n_sims: 50_000,
                bayes_tau: 5.0 / 6.0,
                cost_min_tau: 0.42,
                cost_min_cost: 123.0,
                cost_curve: vec![CostPoint {
                    tau: 0.0,
                    false_positives: 10,
                    false_negatives: 0,
                    cost: 10.0,
                }],
                confusion_at_cost_min: EconomicConfusion {
                    tau: 0.42,
                    tp: 5,
                    fp: 2,
                    tn: 9,
                    fn_: 1,
                    misclassification_cost: 7.0,
                    fn_expected_loss: 0.6,
                },
            },
            max_linf_deviation: if scenario == Scenario::Clean {
                None
            } else {
                Some(0.05)
            },
            drift: if scenario == Scenario::Clean {
                Block::missing("baseline")
            } else {
                Block::present(DriftBlock {
                    per_feature_psi: vec![FeaturePsi {
                        feature: "num_0".into(),
                        psi: 0.12,
                    }],
                    score_psi: 0.3,
                    score_ks: 0.2,
                    score_wasserstein: 0.05,
                })
            },
            fairness: Block::present(FairnessBlock {
                threshold: 0.5,
                group_a: "a".into(),
                group_b: "b".into(),
                demographic_parity_diff: 0.04,
                equal_opportunity_diff: Some(0.02),
                groups: vec![],
            }),
            cap_curve: vec![(0.0, 0.0), (1.0, 1.0)],
        }
    }

    fn toy_metadata() -> RunMetadata {
        RunMetadata {
            master_seed: 42,
            stage_seeds: BTreeMap::from([("train".to_string(), 7u64)]),
            schema_fingerprint: "abc123".into(),
            model_role: "baseline".into(),
            created_at_unix: Some(1_700_000_000),
            warnings: vec![],
            config_echo: serde_json::json!({"master_seed": 42}),
        }
    }

    #[test]
    fn clean_only_run_marks_attacks_not_run() {
        let report = assemble(
            toy_metadata(),
            ReportParts {
                clean: Some(toy_scenario(Scenario::Clean)),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(report.scenarios.fgsm.data.is_none());
        assert_eq!(report.scenarios.fgsm.reason.as_deref(), Some("not_run"));
        assert_eq!(report.scenarios.pgd.reason.as_deref(), Some("not_run"));
    }

    #[test]
    fn full_run_populates_all_blocks() {
        let parts = ReportParts {
            clean: Some(toy_scenario(Scenario::Clean)),
            fgsm: Some(toy_scenario(Scenario::Fgsm)),
            pgd: Some(toy_scenario(Scenario::Pgd)),
            epsilon_sweep: Some(vec![SweepRow {
                epsilon: 0.0,
                pgd_auroc: 0.7350,
                portfolio_el: 1.0,
            }]),
            ..Default::default()
        };
        let report = assemble(toy_metadata(), parts).unwrap();
        assert_eq!(report.scenarios.present().len(), 3);
        assert!(report.epsilon_sweep.data.is_some());
    }

    #[test]
    fn missing_clean_is_assembly_error() {
        assert!(matches!(
            assemble(toy_metadata(), ReportParts::default()),
            Err(Error::Assembly(_))
        ));
    }

    #[test]
    fn wrong_slot_is_assembly_error() {
        let parts = ReportParts {
            clean: Some(toy_scenario(Scenario::Clean)),
            fgsm: Some(toy_scenario(Scenario::Pgd)),
            ..Default::default()
        };
        assert!(matches!(
            assemble(toy_metadata(), parts),
            Err(Error::Assembly(_))
        ));
    }

    #[test]
    fn non_finite_value_is_assembly_error() {
        let mut bad = toy_scenario(Scenario::Clean);
        bad.discrimination.auroc = f64::NAN;
        assert!(matches!(
            assemble(
                toy_metadata(),
                ReportParts {
                    clean: Some(bad),
                    ..Default::default()
                }
            ),
            Err(Error::Assembly(_))
        ));
    }

    #[test]
    fn identical_inputs_give_byte_identical_json() {
        let build = || {
            assemble(
                toy_metadata(),
                ReportParts {
                    clean: Some(toy_scenario(Scenario::Clean)),
                    pgd: Some(toy_scenario(Scenario::Pgd)),
                    ..Default::default()
                },
            )
            .unwrap()
        };
        let a = report_to_json(&build()).unwrap();
        let b = report_to_json(&build()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn json_round_trip_preserves_structure() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let report = assemble(
            toy_metadata(),
            ReportParts {
                clean: Some(toy_scenario(Scenario::Clean)),
                ..Default::default()
            },
        )
        .unwrap();
        emit_json(&report, &path).unwrap();
        let back = load_report(&path).unwrap();
        assert_eq!(report_to_json(&report).unwrap(), report_to_json(&back).unwrap());
    }

    #[test]
    fn csv_emission_headers_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let report = assemble(
            toy_metadata(),
            ReportParts {
                clean: Some(toy_scenario(Scenario::Clean)),
                fgsm: Some(toy_scenario(Scenario::Fgsm)),
                pgd: Some(toy_scenario(Scenario::Pgd)),
                ..Default::default()
            },
        )
        .unwrap();
        emit_csv(&report, dir.path()).unwrap();
        let disc = std::fs::read_to_string(dir.path().join("discrimination.csv")).unwrap();
        let mut lines = disc.lines();
        assert_eq!(lines.next().unwrap(), "scenario,auroc,ks,gini,accuracy");
        // one row per scenario run
        assert_eq!(disc.lines().count(), 1 + 3);
        assert!(disc.contains("clean,0.735000,"));
        let econ = std::fs::read_to_string(dir.path().join("economic.csv")).unwrap();
        assert!(econ.contains("clean,15070.9,37375.8,53813.9"));
    }

    #[test]
    fn fmt_sig_cases() {
        assert_eq!(fmt_sig(0.0, 6), "0");
        assert_eq!(fmt_sig(0.735, 6), "0.735000");
        assert_eq!(fmt_sig(15070.90, 6), "15070.9");
        assert_eq!(fmt_sig(0.0454, 6), "0.0454000");
        assert_eq!(fmt_sig(123456789.0, 6), "123457000");
        assert_eq!(fmt_sig(-0.05, 6), "-0.0500000");
        assert_eq!(fmt_sig(1000.0, 6), "1000.00");
    }

    #[test]
    fn schema_document_is_valid_json() {
        let schema: serde_json::Value = serde_json::from_str(REPORT_SCHEMA_JSON).unwrap();
        assert_eq!(schema["title"], "RobustnessReport");
    }
}
