//! End-to-end orchestration: prepare data, train (optionally hardened)
//! models, run clean/FGSM/PGD evaluations with every metric suite, sweep the
//! perturbation budget, and compare defenses.
//!
//! A single master seed fans out to every stage through labeled derivation,
//! so the whole chain is a pure function of (config, data). Config blocks may
//! pin their own seeds; absent seeds fall back to the master derivation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacks::{fgsm, max_linf_deviation, pgd, AttackConfig, DomainProjector};
use crate::dataio::{
    clean, fit_preprocessor, generate_synthetic_credit, stratified_split, DatasetSchema,
    EncodedData, Preprocessor, RawTable, Splits,
};
use crate::defense::{adversarial_train, noise_regularized_train, DefenseConfig, DefenseMode};
use crate::driftfair::{
    demographic_parity_diff, equal_opportunity_diff, ks_distance, per_group_stats, psi_edges,
    psi_with_edges, wasserstein1,
};
use crate::econrisk::{
    bayes_threshold, cost_curve, economic_confusion, expected_loss, simulate_losses, var,
    CostSpec, ExposureBook,
};
use crate::error::{Error, Result};
use crate::explain::{kernel_shap, Attribution, InstanceStability, PredictFn, StabilityStats};
use crate::metrics::{
    accuracy, auroc, auroc_from, brier, cap_curve, ece_with, gini, ks_stat, BinStrategy,
    Scenario, ScoredSet,
};
use crate::nn::{
    load_checkpoint, predict_proba, save_checkpoint, train, MlpCheckpoint, TrainConfig,
};
use crate::report::{
    assemble, BootstrapBlock, BootstrapEntry, CalibrationBlock, DiscriminationBlock, DriftBlock,
    EconomicBlock, FairnessBlock, FeaturePsi, ReportParts, RobustnessReport, RunMetadata,
    ScenarioBlock, SeparationEntry, ShapStabilityBlock, SriBlock, SweepRow,
};
use crate::report::{Block, DefenseRow};
use crate::semantic::{
    sri, EndpointConfig, ExplanationCase, HttpProvider, SemanticProvider, StubProvider,
};
use crate::seed::{derive_seed, derive_stream, rng_from};
use crate::stats::{bootstrap_ci, bootstrap_ci_paired, ci_separated};

fn default_synth_n() -> usize {
    5000
}
fn default_synth_numeric() -> usize {
    15
}
fn default_synth_categorical() -> usize {
    5
}
fn default_synth_rate() -> f64 {
    0.2
}

/// Synthetic dataset parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    #[serde(default = "default_synth_n")]
    pub n: usize,
    #[serde(default = "default_synth_numeric")]
    pub d_numeric: usize,
    #[serde(default = "default_synth_categorical")]
    pub d_categorical: usize,
    #[serde(default = "default_synth_rate")]
    pub default_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: default_synth_n(),
            d_numeric: default_synth_numeric(),
            d_categorical: default_synth_categorical(),
            default_rate: default_synth_rate(),
        }
    }
}

fn default_ratios() -> [f64; 3] {
    [0.6, 0.2, 0.2]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitConfig {
    #[serde(default = "default_ratios")]
    pub ratios: [f64; 3],
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            ratios: default_ratios(),
        }
    }
}

fn default_lgd() -> f64 {
    crate::econrisk::DEFAULT_LGD
}
fn default_ead() -> f64 {
    crate::econrisk::DEFAULT_EAD
}
fn default_n_sims() -> usize {
    50_000
}
fn default_alpha() -> f64 {
    0.95
}
fn default_cost_fp() -> f64 {
    1.0
}
fn default_cost_fn() -> f64 {
    5.0
}

/// Economic-risk configuration block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EconConfig {
    #[serde(default = "default_lgd")]
    pub lgd_default: f64,
    #[serde(default = "default_ead")]
    pub ead_default: f64,
    /// Optional dataset columns carrying per-row exposures.
    #[serde(default)]
    pub lgd_column: Option<String>,
    #[serde(default)]
    pub ead_column: Option<String>,
    #[serde(default = "default_n_sims")]
    pub n_sims: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_cost_fp")]
    pub cost_fp: f64,
    #[serde(default = "default_cost_fn")]
    pub cost_fn: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for EconConfig {
    fn default() -> Self {
        EconConfig {
            lgd_default: default_lgd(),
            ead_default: default_ead(),
            lgd_column: None,
            ead_column: None,
            n_sims: default_n_sims(),
            alpha: default_alpha(),
            cost_fp: default_cost_fp(),
            cost_fn: default_cost_fn(),
            seed: None,
        }
    }
}

fn default_bootstrap_b() -> usize {
    1000
}
fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsConfig {
    #[serde(default = "default_bootstrap_b")]
    pub bootstrap_b: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            bootstrap_b: default_bootstrap_b(),
            level: default_level(),
            seed: None,
        }
    }
}

fn default_background() -> usize {
    100
}
fn default_shap_instances() -> usize {
    200
}
fn default_coalitions() -> usize {
    128
}
fn default_top_k() -> usize {
    5
}

/// Attribution-stability configuration. `n_coalitions` trades estimator
/// variance for runtime; the benchmark default keeps the full pipeline at
/// desk scale, larger values are fine for one-off audits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapConfig {
    #[serde(default = "default_background")]
    pub background_size: usize,
    #[serde(default = "default_shap_instances")]
    pub n_instances: usize,
    #[serde(default = "default_coalitions")]
    pub n_coalitions: usize,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for ShapConfig {
    fn default() -> Self {
        ShapConfig {
            background_size: default_background(),
            n_instances: default_shap_instances(),
            n_coalitions: default_coalitions(),
            top_k: default_top_k(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Stub,
    Live,
}

fn default_in_flight() -> usize {
    4
}
fn default_sem_instances() -> usize {
    50
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemanticConfig {
    #[serde(default = "default_provider")]
    pub provider: ProviderKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_sem_instances")]
    pub n_instances: usize,
}

fn default_provider() -> ProviderKind {
    ProviderKind::Stub
}

impl Default for SemanticConfig {
    fn default() -> Self {
        SemanticConfig {
            provider: default_provider(),
            endpoint: None,
            model: None,
            top_k: default_top_k(),
            max_in_flight: default_in_flight(),
            n_instances: default_sem_instances(),
        }
    }
}

fn default_sweep() -> Vec<f64> {
    vec![0.0, 0.01, 0.05, 0.10]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default = "default_sweep")]
    pub epsilons: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            epsilons: default_sweep(),
        }
    }
}

fn default_ece_bins() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportConfig {
    #[serde(default = "default_ece_bins")]
    pub ece_bins: usize,
    /// Equal-mass reliability bins instead of equal-width.
    #[serde(default)]
    pub equal_mass_bins: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            ece_bins: default_ece_bins(),
            equal_mass_bins: false,
        }
    }
}

fn default_master_seed() -> u64 {
    42
}

/// Unified run configuration: paths plus every module block, all optional
/// with documented defaults. The master seed derives each stage seed unless
/// a block pins its own.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct RunConfig {
    #[serde(default)]
    pub data_csv: Option<PathBuf>,
    #[serde(default)]
    pub schema_json: Option<PathBuf>,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_master_seed")]
    pub master_seed: u64,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub attack: AttackConfig,
    #[serde(default)]
    pub defense: DefenseConfig,
    #[serde(default)]
    pub econ: EconConfig,
    #[serde(default)]
    pub stats: StatsConfig,
    #[serde(default)]
    pub shap: ShapConfig,
    #[serde(default)]
    pub semantic: SemanticConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let body =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_str(&body)
            .map_err(|e| Error::Format(format!("config {}: {e}", path.display())))
    }

    /// Stage seed: the block's own seed when pinned, otherwise derived from
    /// the master seed and the stage label.
    pub fn stage_seed(&self, label: &str, pinned: Option<u64>) -> u64 {
        pinned.unwrap_or_else(|| derive_seed(self.master_seed, label))
    }

    /// Training config with the seed resolved against the master seed.
    pub fn resolved_train(&self) -> TrainConfig {
        let mut t = self.train.clone();
        t.seed = Some(self.stage_seed("train", t.seed));
        t
    }

    /// Attack config with the seed resolved against the master seed.
    pub fn resolved_attack(&self) -> AttackConfig {
        let mut a = self.attack.clone();
        a.seed = Some(self.stage_seed("attack", a.seed));
        a
    }
}

/// Which model a checkpoint represents in comparisons and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    Baseline,
    PgdAdv,
    Noise,
}

impl ModelRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelRole::Baseline => "baseline",
            ModelRole::PgdAdv => "pgd_adv",
            ModelRole::Noise => "noise",
        }
    }
}

/// Cleaned table plus deterministic splits; the unit every command consumes.
#[derive(Debug, Clone)]
pub struct DataBundle {
    pub table: RawTable,
    pub schema: DatasetSchema,
    pub splits: Splits,
}

/// Clean a raw table and split it with the master-derived split seed.
pub fn prepare(raw: &RawTable, schema: &DatasetSchema, cfg: &RunConfig) -> Result<DataBundle> {
    let table = clean(raw, schema)?;
    let labels = table.labels(schema)?;
    let splits = stratified_split(
        &labels,
        cfg.split.ratios,
        derive_seed(cfg.master_seed, "split"),
    )?;
    Ok(DataBundle {
        table,
        schema: schema.clone(),
        splits,
    })
}

/// Generate the seeded synthetic dataset configured in `cfg`.
pub fn synthesize(cfg: &RunConfig) -> Result<(RawTable, DatasetSchema)> {
    generate_synthetic_credit(
        cfg.synth.n,
        cfg.synth.d_numeric,
        cfg.synth.d_categorical,
        cfg.synth.default_rate,
        derive_seed(cfg.master_seed, "synth"),
    )
}

fn encode(
    bundle: &DataBundle,
    pre: &Preprocessor,
    indices: &[usize],
) -> Result<EncodedData> {
    pre.transform(&bundle.table, &bundle.schema, indices)
}

/// Fit the preprocessor on the training split and train one model of the
/// requested role.
pub fn train_model(bundle: &DataBundle, cfg: &RunConfig, role: ModelRole) -> Result<MlpCheckpoint> {
    let pre = fit_preprocessor(&bundle.table, &bundle.schema, &bundle.splits.train)?;
    let train_data = encode(bundle, &pre, &bundle.splits.train)?;
    let val_data = encode(bundle, &pre, &bundle.splits.validation)?;
    let train_cfg = cfg.resolved_train();
    let projector = DomainProjector::from_preprocessor(&pre, &bundle.schema);

    let outcome = match role {
        ModelRole::Baseline => train(
            &train_data.x,
            &train_data.labels,
            &val_data.x,
            &val_data.labels,
            &train_cfg,
        )?,
        ModelRole::PgdAdv => {
            let mut dc = cfg.defense.clone();
            dc.mode = DefenseMode::PgdAdvTraining;
            dc.attack.seed = Some(cfg.stage_seed("defense-attack", dc.attack.seed));
            adversarial_train(
                &train_data.x,
                &train_data.labels,
                &val_data.x,
                &val_data.labels,
                &train_cfg,
                &dc,
                Some(&projector),
            )?
        }
        ModelRole::Noise => {
            let mut dc = cfg.defense.clone();
            dc.mode = DefenseMode::NoiseRegularized;
            noise_regularized_train(
                &train_data.x,
                &train_data.labels,
                &val_data.x,
                &val_data.labels,
                &train_cfg,
                &dc,
            )?
        }
    };
    Ok(MlpCheckpoint::from_outcome(
        &outcome,
        pre,
        train_cfg,
        bundle.schema.fingerprint(),
    ))
}

/// Which scenarios an evaluation run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioSelection {
    Clean,
    Fgsm,
    Pgd,
    All,
}

impl ScenarioSelection {
    fn wants(&self, s: Scenario) -> bool {
        matches!(
            (self, s),
            (ScenarioSelection::All, Scenario::Fgsm | Scenario::Pgd)
                | (ScenarioSelection::Fgsm, Scenario::Fgsm)
                | (ScenarioSelection::Pgd, Scenario::Pgd)
        ) || s == Scenario::Clean
    }
}

impl std::str::FromStr for ScenarioSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(ScenarioSelection::Clean),
            "fgsm" => Ok(ScenarioSelection::Fgsm),
            "pgd" => Ok(ScenarioSelection::Pgd),
            "all" => Ok(ScenarioSelection::All),
            other => Err(Error::Parameter(format!(
                "unknown scenario `{other}` (expected clean|fgsm|pgd|all)"
            ))),
        }
    }
}

/// Optional evaluation blocks; all on by default.
#[derive(Debug, Clone, Copy)]
pub struct EvalToggles {
    pub shap: bool,
    pub semantic: bool,
    pub bootstrap: bool,
}

impl Default for EvalToggles {
    fn default() -> Self {
        EvalToggles {
            shap: true,
            semantic: true,
            bootstrap: true,
        }
    }
}

fn exposure_book(bundle: &DataBundle, cfg: &EconConfig, indices: &[usize]) -> Result<ExposureBook> {
    let column_values = |name: &str| -> Result<Vec<f64>> {
        let col = bundle
            .table
            .column_index(name)
            .ok_or_else(|| Error::Schema(format!("exposure column `{name}` not found")))?;
        indices
            .iter()
            .map(|&i| {
                bundle.table.rows[i][col].as_num().ok_or_else(|| {
                    Error::Data(format!("exposure column `{name}` has non-numeric cells"))
                })
            })
            .collect()
    };
    let lgd = match &cfg.lgd_column {
        Some(name) => column_values(name)?,
        None => vec![cfg.lgd_default; indices.len()],
    };
    let ead = match &cfg.ead_column {
        Some(name) => column_values(name)?,
        None => vec![cfg.ead_default; indices.len()],
    };
    ExposureBook::new(lgd, ead)
}

fn sensitive_groups(bundle: &DataBundle, indices: &[usize]) -> Option<Vec<String>> {
    let feature = bundle.schema.sensitive_feature()?;
    let col = bundle.table.column_index(&feature.name)?;
    let groups: Vec<String> = indices
        .iter()
        .map(|&i| {
            bundle.table.rows[i][col]
                .as_str()
                .map(str::to_string)
                .unwrap_or_else(|| "<missing>".to_string())
        })
        .collect();
    Some(groups)
}

struct ScenarioInputs<'a> {
    bundle: &'a DataBundle,
    ckpt: &'a MlpCheckpoint,
    cfg: &'a RunConfig,
    clean_x: &'a [Vec<f64>],
    labels: &'a [u8],
    book: &'a ExposureBook,
    groups: Option<&'a [String]>,
    econ_seed: u64,
    mutable_columns: Vec<(usize, String)>,
}

fn eval_scenario(
    inputs: &ScenarioInputs<'_>,
    scenario: Scenario,
    xs: &[Vec<f64>],
) -> Result<ScenarioBlock> {
    let cfg = inputs.cfg;
    let scores = predict_proba(&inputs.ckpt.params, xs)?;
    let set = ScoredSet::new(scores.clone(), inputs.labels.to_vec(), scenario)?;

    let discrimination = DiscriminationBlock {
        auroc: auroc(&set)?,
        ks: ks_stat(&set)?,
        gini: gini(&set)?,
        accuracy: accuracy(&set, 0.5)?,
    };
    let strategy = if cfg.report.equal_mass_bins {
        BinStrategy::EqualMass
    } else {
        BinStrategy::EqualWidth
    };
    let (ece_value, bins) = ece_with(&set, cfg.report.ece_bins, strategy)?;
    let calibration = CalibrationBlock {
        ece: ece_value,
        brier: brier(&set)?,
        bins,
    };

    let (_, portfolio_el) = expected_loss(&set.scores, inputs.book)?;
    let dist = simulate_losses(&set.scores, inputs.book, cfg.econ.n_sims, inputs.econ_seed)?;
    let var_value = var(&dist, cfg.econ.alpha)?;
    let es_value = crate::econrisk::es(&dist, cfg.econ.alpha)?;
    let cost = CostSpec {
        cost_fp: cfg.econ.cost_fp,
        cost_fn: cfg.econ.cost_fn,
    };
    let (curve, cost_min_tau) = cost_curve(&set, &cost, 101)?;
    let cost_min_cost = curve
        .iter()
        .find(|p| p.tau == cost_min_tau)
        .map(|p| p.cost)
        .unwrap_or(f64::NAN);
    let confusion = economic_confusion(&set, cost_min_tau, &cost, inputs.book)?;
    let economic = EconomicBlock {
        portfolio_el,
        var: var_value,
        es: es_value,
        alpha: cfg.econ.alpha,
        n_sims: cfg.econ.n_sims,
        bayes_tau: bayes_threshold(&cost)?,
        cost_min_tau,
        cost_min_cost,
        cost_curve: curve,
        confusion_at_cost_min: confusion,
    };

    let drift = if scenario == Scenario::Clean {
        Block::missing("baseline")
    } else {
        let clean_scores = predict_proba(&inputs.ckpt.params, inputs.clean_x)?;
        let mut per_feature = Vec::new();
        for (col, label) in &inputs.mutable_columns {
            let base: Vec<f64> = inputs.clean_x.iter().map(|r| r[*col]).collect();
            let shifted: Vec<f64> = xs.iter().map(|r| r[*col]).collect();
            per_feature.push(FeaturePsi {
                feature: label.clone(),
                psi: crate::driftfair::psi(&base, &shifted, 10)?,
            });
        }
        let edges = psi_edges(&clean_scores, 10)?;
        Block::present(DriftBlock {
            per_feature_psi: per_feature,
            score_psi: psi_with_edges(&clean_scores, &set.scores, &edges)?,
            score_ks: ks_distance(&clean_scores, &set.scores)?,
            score_wasserstein: wasserstein1(&clean_scores, &set.scores)?,
        })
    };

    let fairness = match inputs.groups {
        None => Block::missing("no_sensitive_feature"),
        Some(groups) => {
            let tau = 0.5;
            match demographic_parity_diff(&set.scores, groups, tau) {
                Ok(dp) => {
                    let eo = equal_opportunity_diff(&set.scores, inputs.labels, groups, tau).ok();
                    let stats = per_group_stats(&set.scores, inputs.labels, groups, tau);
                    let mut names: Vec<String> =
                        stats.iter().map(|s| s.group.clone()).collect();
                    names.sort();
                    Block::present(FairnessBlock {
                        threshold: tau,
                        group_a: names.first().cloned().unwrap_or_default(),
                        group_b: names.get(1).cloned().unwrap_or_default(),
                        demographic_parity_diff: dp,
                        equal_opportunity_diff: eo,
                        groups: stats,
                    })
                }
                Err(_) => Block::missing("needs_two_groups"),
            }
        }
    };

    Ok(ScenarioBlock {
        scenario,
        discrimination,
        calibration,
        economic,
        max_linf_deviation: if scenario == Scenario::Clean {
            None
        } else {
            Some(max_linf_deviation(inputs.clean_x, xs))
        },
        drift,
        fairness,
        cap_curve: cap_curve(&set)?,
    })
}

struct CkptPredict<'a> {
    params: &'a crate::nn::MlpParams,
}

impl PredictFn for CkptPredict<'_> {
    fn predict(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        predict_proba(self.params, xs).expect("row width fixed by construction")
    }
}

/// Per-scenario attribution sets with shared per-row seeds, background and
/// coalition budget.
fn attribution_sets(
    ckpt: &MlpCheckpoint,
    matrices: &[(Scenario, &[Vec<f64>])],
    background: &[Vec<f64>],
    n_instances: usize,
    n_coalitions: usize,
    seed: u64,
) -> BTreeMap<Scenario, Vec<Result<Attribution>>> {
    let model = CkptPredict {
        params: &ckpt.params,
    };
    let mut out = BTreeMap::new();
    for (scenario, xs) in matrices {
        let n = n_instances.min(xs.len());
        let attrs: Vec<Result<Attribution>> = crate::parallel::map_indexed(n, |i| {
            kernel_shap(
                &model,
                &xs[i],
                background,
                n_coalitions,
                derive_stream(seed, i as u64),
            )
        });
        out.insert(*scenario, attrs);
    }
    out
}

fn stability_from_pairs(
    clean: &[Result<Attribution>],
    adv: &[Result<Attribution>],
) -> Result<StabilityStats> {
    let mut per_instance = Vec::new();
    let mut skipped = 0usize;
    for (row, (c, a)) in clean.iter().zip(adv).enumerate() {
        match (c, a) {
            (Ok(c), Ok(a)) => per_instance.push(InstanceStability {
                row,
                cosine: crate::explain::cosine_sim(&c.values, &a.values),
                spearman: crate::explain::spearman(&c.values, &a.values).ok(),
                l2: crate::explain::l2_dist(&c.values, &a.values),
            }),
            _ => skipped += 1,
        }
    }
    if per_instance.is_empty() {
        return Err(Error::Solver("every instance failed attribution".into()));
    }
    let agg = |f: &dyn Fn(&InstanceStability) -> Option<f64>| -> (f64, f64, f64) {
        let vals: Vec<f64> = per_instance.iter().filter_map(f).collect();
        if vals.is_empty() {
            return (f64::NAN, f64::NAN, f64::NAN);
        }
        let mut sorted = vals.clone();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        (
            vals.iter().sum::<f64>() / vals.len() as f64,
            crate::dataio::percentile(&sorted, 0.5),
            crate::dataio::percentile(&sorted, 0.05),
        )
    };
    let (mean_cosine, median_cosine, p5_cosine) = agg(&|p| Some(p.cosine));
    let (mean_spearman, median_spearman, p5_spearman) = agg(&|p| p.spearman);
    let (mean_l2, median_l2, p5_l2) = agg(&|p| Some(p.l2));
    Ok(StabilityStats {
        per_instance,
        mean_cosine,
        median_cosine,
        p5_cosine,
        mean_spearman,
        median_spearman,
        p5_spearman,
        mean_l2,
        median_l2,
        p5_l2,
        skipped,
    })
}

fn semantic_cases(
    ckpt: &MlpCheckpoint,
    xs: &[Vec<f64>],
    attrs: &[Result<Attribution>],
    scenario: Scenario,
    n: usize,
    top_k: usize,
) -> Result<Vec<ExplanationCase>> {
    let labels = ckpt.preprocessor.feature_labels();
    let mut cases = Vec::new();
    for i in 0..n.min(attrs.len()) {
        let attr = match &attrs[i] {
            Ok(a) => a,
            Err(_) => continue,
        };
        // Original-unit display values: numerics un-standardize, one-hot
        // indicator columns print raw.
        let values: Vec<String> = xs[i]
            .iter()
            .enumerate()
            .map(|(c, &v)| match ckpt.preprocessor.inverse_numeric(c, v) {
                Some(orig) => format!("{orig:.4}"),
                None => format!("{v:.4}"),
            })
            .collect();
        cases.push(ExplanationCase::from_attribution(
            i,
            scenario,
            attr.prediction,
            &labels,
            &values,
            &attr.values,
            top_k,
        )?);
    }
    Ok(cases)
}

/// Full evaluation of one checkpoint: clean plus the selected attack
/// scenarios, with SHAP stability, semantic robustness and bootstrap blocks
/// unless toggled off.
pub fn evaluate(
    bundle: &DataBundle,
    ckpt: &MlpCheckpoint,
    cfg: &RunConfig,
    selection: ScenarioSelection,
    toggles: EvalToggles,
    role: ModelRole,
) -> Result<RobustnessReport> {
    let mut warnings = ckpt.preprocessor.warnings.clone();
    let current_fp = bundle.schema.fingerprint();
    if ckpt.schema_fingerprint != current_fp {
        warnings.push(format!(
            "schema fingerprint mismatch: checkpoint {} vs data {current_fp}",
            ckpt.schema_fingerprint
        ));
    }

    let test = encode(bundle, &ckpt.preprocessor, &bundle.splits.test)?;
    let book = exposure_book(bundle, &cfg.econ, &bundle.splits.test)?;
    let groups = sensitive_groups(bundle, &bundle.splits.test);
    let projector = DomainProjector::from_preprocessor(&ckpt.preprocessor, &bundle.schema);
    let attack_cfg = cfg.resolved_attack();
    let econ_seed = cfg.stage_seed("econ-sim", cfg.econ.seed);

    let mutable_columns: Vec<(usize, String)> = ckpt
        .preprocessor
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_immutable())
        .map(|(i, c)| (i, c.label()))
        .collect();

    let inputs = ScenarioInputs {
        bundle,
        ckpt,
        cfg,
        clean_x: &test.x,
        labels: &test.labels,
        book: &book,
        groups: groups.as_deref(),
        econ_seed,
        mutable_columns,
    };
    let _ = inputs.bundle; // bundle retained for context in future blocks

    let clean_block = eval_scenario(&inputs, Scenario::Clean, &test.x)?;

    let mut fgsm_x: Option<Vec<Vec<f64>>> = None;
    let mut pgd_x: Option<Vec<Vec<f64>>> = None;
    let mut fgsm_block = None;
    let mut pgd_block = None;
    if selection.wants(Scenario::Fgsm) {
        let adv = fgsm(
            &ckpt.params,
            &test.x,
            &test.labels,
            &attack_cfg,
            Some(&projector),
        )?;
        fgsm_block = Some(eval_scenario(&inputs, Scenario::Fgsm, &adv)?);
        fgsm_x = Some(adv);
    }
    if selection.wants(Scenario::Pgd) {
        let adv = pgd(
            &ckpt.params,
            &test.x,
            &test.labels,
            &attack_cfg,
            Some(&projector),
        )?;
        pgd_block = Some(eval_scenario(&inputs, Scenario::Pgd, &adv)?);
        pgd_x = Some(adv);
    }

    // Shared attribution sets feed both the stability and semantic blocks.
    let shap_seed = cfg.stage_seed("shap", cfg.shap.seed);
    let needs_attrs = (toggles.shap || toggles.semantic)
        && (fgsm_x.is_some() || pgd_x.is_some());
    let mut attr_sets: BTreeMap<Scenario, Vec<Result<Attribution>>> = BTreeMap::new();
    let mut background = Vec::new();
    if needs_attrs {
        let train_enc = encode(bundle, &ckpt.preprocessor, &bundle.splits.train)?;
        let mut rng = rng_from(derive_seed(shap_seed, "background"));
        let mut idx: Vec<usize> = (0..train_enc.x.len()).collect();
        use rand::seq::SliceRandom;
        idx.shuffle(&mut rng);
        background = idx
            .into_iter()
            .take(cfg.shap.background_size)
            .map(|i| train_enc.x[i].clone())
            .collect();
        let mut matrices: Vec<(Scenario, &[Vec<f64>])> = vec![(Scenario::Clean, &test.x)];
        if let Some(xs) = &fgsm_x {
            matrices.push((Scenario::Fgsm, xs));
        }
        if let Some(xs) = &pgd_x {
            matrices.push((Scenario::Pgd, xs));
        }
        attr_sets = attribution_sets(
            ckpt,
            &matrices,
            &background,
            cfg.shap.n_instances,
            cfg.shap.n_coalitions,
            shap_seed,
        );
    }

    let shap_block = if toggles.shap && !attr_sets.is_empty() && attr_sets.len() > 1 {
        let clean_attrs = &attr_sets[&Scenario::Clean];
        let mut per_attack = BTreeMap::new();
        for scenario in [Scenario::Fgsm, Scenario::Pgd] {
            if let Some(adv_attrs) = attr_sets.get(&scenario) {
                per_attack.insert(
                    scenario.to_string(),
                    stability_from_pairs(clean_attrs, adv_attrs)?,
                );
            }
        }
        Some(ShapStabilityBlock {
            n_instances: cfg.shap.n_instances,
            n_coalitions: cfg.shap.n_coalitions,
            background_size: background.len(),
            per_attack,
        })
    } else {
        None
    };

    let sri_block = if toggles.semantic && attr_sets.len() > 1 {
        let provider: Box<dyn SemanticProvider> = match cfg.semantic.provider {
            ProviderKind::Stub => Box::new(StubProvider),
            ProviderKind::Live => Box::new(HttpProvider::new(EndpointConfig {
                endpoint: cfg.semantic.endpoint.clone().unwrap_or_default(),
                model: cfg.semantic.model.clone().unwrap_or_default(),
                max_retries: 3,
                backoff_ms: 250,
            })?),
        };
        let n_sem = cfg.semantic.n_instances;
        let clean_cases = semantic_cases(
            ckpt,
            &test.x,
            &attr_sets[&Scenario::Clean],
            Scenario::Clean,
            n_sem,
            cfg.semantic.top_k,
        )?;
        let mut per_attack = BTreeMap::new();
        for scenario in [Scenario::Fgsm, Scenario::Pgd] {
            let (Some(adv_attrs), Some(xs)) = (
                attr_sets.get(&scenario),
                match scenario {
                    Scenario::Fgsm => fgsm_x.as_ref(),
                    _ => pgd_x.as_ref(),
                },
            ) else {
                continue;
            };
            let adv_cases = semantic_cases(ckpt, xs, adv_attrs, scenario, n_sem, cfg.semantic.top_k)?;
            let n = clean_cases.len().min(adv_cases.len());
            per_attack.insert(
                scenario.to_string(),
                sri(
                    &clean_cases[..n],
                    &adv_cases[..n],
                    provider.as_ref(),
                    cfg.semantic.max_in_flight,
                )?,
            );
        }
        Some(SriBlock {
            provider: provider.tag().to_string(),
            per_attack,
        })
    } else {
        None
    };

    let bootstrap_block = if toggles.bootstrap {
        Some(bootstrap_block(
            cfg,
            &clean_block,
            fgsm_x.as_deref(),
            pgd_x.as_deref(),
            ckpt,
            &test,
            &book,
        )?)
    } else {
        None
    };

    let mut stage_seeds = BTreeMap::new();
    stage_seeds.insert("split".to_string(), derive_seed(cfg.master_seed, "split"));
    stage_seeds.insert(
        "train".to_string(),
        cfg.resolved_train().seed.unwrap_or(0),
    );
    stage_seeds.insert("attack".to_string(), attack_cfg.seed.unwrap_or(0));
    stage_seeds.insert("econ-sim".to_string(), econ_seed);
    stage_seeds.insert("shap".to_string(), shap_seed);
    stage_seeds.insert(
        "bootstrap".to_string(),
        cfg.stage_seed("bootstrap", cfg.stats.seed),
    );

    let metadata = RunMetadata {
        master_seed: cfg.master_seed,
        stage_seeds,
        schema_fingerprint: current_fp,
        model_role: role.as_str().to_string(),
        created_at_unix: RunMetadata::timestamp_now(),
        warnings,
        config_echo: serde_json::to_value(cfg)
            .map_err(|e| Error::Assembly(format!("config echo: {e}")))?,
    };

    assemble(
        metadata,
        ReportParts {
            clean: Some(clean_block),
            fgsm: fgsm_block,
            pgd: pgd_block,
            shap: shap_block,
            sri: sri_block,
            bootstrap: bootstrap_block,
            epsilon_sweep: None,
            defense_comparison: None,
        },
    )
}

#[allow(clippy::too_many_arguments)]
fn bootstrap_block(
    cfg: &RunConfig,
    clean_block: &ScenarioBlock,
    fgsm_x: Option<&[Vec<f64>]>,
    pgd_x: Option<&[Vec<f64>]>,
    ckpt: &MlpCheckpoint,
    test: &EncodedData,
    book: &ExposureBook,
) -> Result<BootstrapBlock> {
    let _ = clean_block;
    let seed = cfg.stage_seed("bootstrap", cfg.stats.seed);
    let b = cfg.stats.bootstrap_b;
    let level = cfg.stats.level;
    let auroc_metric = |s: &[f64], l: &[u8]| auroc_from(s, l);
    let sum_metric = |s: &[f64], _l: &[u8]| -> Result<f64> { Ok(s.iter().sum()) };

    let clean_scores = predict_proba(&ckpt.params, &test.x)?;
    let mut entries = Vec::new();
    let mut separations = Vec::new();

    let el_rows = |scores: &[f64]| -> Result<Vec<f64>> {
        Ok(expected_loss(scores, book)?.0)
    };

    let mut scenario_scores: Vec<(String, Vec<f64>)> =
        vec![("clean".to_string(), clean_scores.clone())];
    if let Some(xs) = fgsm_x {
        scenario_scores.push(("fgsm".to_string(), predict_proba(&ckpt.params, xs)?));
    }
    if let Some(xs) = pgd_x {
        scenario_scores.push(("pgd".to_string(), predict_proba(&ckpt.params, xs)?));
    }

    for (name, scores) in &scenario_scores {
        let ci = bootstrap_ci(&auroc_metric, scores, &test.labels, b, level, seed)?;
        entries.push(BootstrapEntry {
            scenario: name.clone(),
            metric: "auroc".to_string(),
            ci,
        });
        let per_el = el_rows(scores)?;
        let ci = bootstrap_ci(&sum_metric, &per_el, &test.labels, b, level, seed)?;
        entries.push(BootstrapEntry {
            scenario: name.clone(),
            metric: "portfolio_el".to_string(),
            ci,
        });
    }

    // Paired clean-vs-PGD comparison on identical replicate index sets.
    if let Some(xs) = pgd_x {
        let pgd_scores = predict_proba(&ckpt.params, xs)?;
        let (ca, cb) = bootstrap_ci_paired(
            &auroc_metric,
            &clean_scores,
            &pgd_scores,
            &test.labels,
            b,
            level,
            seed,
        )?;
        separations.push(SeparationEntry {
            metric: "auroc".to_string(),
            scenario_a: "clean".to_string(),
            scenario_b: "pgd".to_string(),
            separated: ci_separated(&ca, &cb)?,
        });
        let (ea, eb) = bootstrap_ci_paired(
            &sum_metric,
            &el_rows(&clean_scores)?,
            &el_rows(&pgd_scores)?,
            &test.labels,
            b,
            level,
            seed,
        )?;
        separations.push(SeparationEntry {
            metric: "portfolio_el".to_string(),
            scenario_a: "clean".to_string(),
            scenario_b: "pgd".to_string(),
            separated: ci_separated(&ea, &eb)?,
        });
    }

    Ok(BootstrapBlock {
        level,
        replicates: b,
        entries,
        separations,
    })
}

/// PGD AUROC and portfolio EL per epsilon. Epsilon 0 short-circuits to the
/// clean scores; duplicates are dropped with a warning.
pub fn sweep(
    bundle: &DataBundle,
    ckpt: &MlpCheckpoint,
    cfg: &RunConfig,
) -> Result<(Vec<SweepRow>, Vec<String>)> {
    let test = encode(bundle, &ckpt.preprocessor, &bundle.splits.test)?;
    let book = exposure_book(bundle, &cfg.econ, &bundle.splits.test)?;
    let projector = DomainProjector::from_preprocessor(&ckpt.preprocessor, &bundle.schema);
    let attack_cfg = cfg.resolved_attack();

    let mut warnings = Vec::new();
    let mut seen = Vec::new();
    for &e in &cfg.sweep.epsilons {
        if seen.contains(&e) {
            warnings.push(format!("duplicate epsilon {e} dropped from sweep"));
        } else {
            seen.push(e);
        }
    }

    let mut rows = Vec::new();
    for &epsilon in &seen {
        let scores = if epsilon == 0.0 {
            predict_proba(&ckpt.params, &test.x)?
        } else {
            let mut cfg_e = attack_cfg.clone();
            cfg_e.epsilon = epsilon;
            let adv = pgd(
                &ckpt.params,
                &test.x,
                &test.labels,
                &cfg_e,
                Some(&projector),
            )?;
            predict_proba(&ckpt.params, &adv)?
        };
        let (_, portfolio_el) = expected_loss(&scores, &book)?;
        rows.push(SweepRow {
            epsilon,
            pgd_auroc: auroc_from(&scores, &test.labels)?,
            portfolio_el,
        });
    }
    Ok((rows, warnings))
}

/// Train baseline, PGD-hardened and noise-regularized models on identical
/// splits and seeds; report clean AUROC, PGD AUROC, post-attack ECE and
/// post-attack portfolio EL for each.
pub fn defend_compare(bundle: &DataBundle, cfg: &RunConfig) -> Result<Vec<DefenseRow>> {
    let book = exposure_book(bundle, &cfg.econ, &bundle.splits.test)?;
    let mut rows = Vec::new();
    for role in [ModelRole::Baseline, ModelRole::PgdAdv, ModelRole::Noise] {
        let ckpt = train_model(bundle, cfg, role)?;
        let test = encode(bundle, &ckpt.preprocessor, &bundle.splits.test)?;
        let projector = DomainProjector::from_preprocessor(&ckpt.preprocessor, &bundle.schema);
        let attack_cfg = cfg.resolved_attack();
        let clean_scores = predict_proba(&ckpt.params, &test.x)?;
        let adv = pgd(
            &ckpt.params,
            &test.x,
            &test.labels,
            &attack_cfg,
            Some(&projector),
        )?;
        let adv_scores = predict_proba(&ckpt.params, &adv)?;
        let adv_set = ScoredSet::new(adv_scores.clone(), test.labels.clone(), Scenario::Pgd)?;
        let (ece_value, _) = ece_with(&adv_set, cfg.report.ece_bins, BinStrategy::EqualWidth)?;
        let (_, pgd_el) = expected_loss(&adv_scores, &book)?;
        rows.push(DefenseRow {
            model: role.as_str().to_string(),
            clean_auroc: auroc_from(&clean_scores, &test.labels)?,
            pgd_auroc: auroc_from(&adv_scores, &test.labels)?,
            pgd_ece: ece_value,
            pgd_el,
        });
    }
    Ok(rows)
}

/// Load a data CSV + schema, or synthesize when no paths are configured.
pub fn load_or_synthesize(cfg: &RunConfig) -> Result<(RawTable, DatasetSchema)> {
    match (&cfg.data_csv, &cfg.schema_json) {
        (Some(csv_path), Some(schema_path)) => {
            let schema = DatasetSchema::from_json_file(schema_path)?;
            let raw = crate::dataio::load_csv(csv_path, &schema)?;
            Ok((raw, schema))
        }
        (None, None) => synthesize(cfg),
        _ => Err(Error::Parameter(
            "data_csv and schema_json must be provided together".into(),
        )),
    }
}

/// Convenience wrapper: checkpoint path from config, loaded and validated.
pub fn load_checkpoint_from(cfg: &RunConfig) -> Result<MlpCheckpoint> {
    let path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Parameter("config is missing `checkpoint`".into()))?;
    load_checkpoint(path)
}

/// Convenience wrapper: save with path context.
pub fn save_checkpoint_to(ckpt: &MlpCheckpoint, path: &Path) -> Result<()> {
    save_checkpoint(ckpt, path)
}

#[allow(unused_imports)]
pub use crate::dataio::load_csv;
