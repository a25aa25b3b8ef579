//! Natural-language explanation of clean/adversarial predictions and the
//! Semantic Robustness Index (SRI).
//!
//! Two providers implement the same interface: a deterministic offline stub
//! (the CI path; no network, no credentials) and an HTTP chat-completion
//! client with retries and credential redaction. The stub scores a pair of
//! explanations as plausibility 1.0, stability = token-set Jaccard
//! similarity, consistency = top-1 cited feature match.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Scenario;

/// Name of the environment variable holding the live-provider credential.
pub const LLM_KEY_ENV: &str = "TABGUARD_LLM_KEY";

/// One feature line of an explanation case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseFeature {
    pub name: String,
    /// Original-unit rendering of the feature value.
    pub value: String,
    pub attribution: f64,
}

/// Input to the explanation prompt: the top-k features by attribution
/// magnitude with original-unit values, and the model probability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplanationCase {
    pub row_id: usize,
    pub scenario: Scenario,
    pub probability: f64,
    /// Sorted by |attribution| descending, k entries.
    pub features: Vec<CaseFeature>,
}

impl ExplanationCase {
    /// Assemble a case from attribution values and display labels, keeping
    /// the `top_k` features by attribution magnitude.
    pub fn from_attribution(
        row_id: usize,
        scenario: Scenario,
        probability: f64,
        labels: &[String],
        values: &[String],
        attributions: &[f64],
        top_k: usize,
    ) -> Result<Self> {
        if labels.len() != attributions.len() || values.len() != attributions.len() {
            return Err(Error::Shape(
                "labels, values and attributions must align".into(),
            ));
        }
        if top_k == 0 {
            return Err(Error::Parameter("top_k must be at least 1".into()));
        }
        let mut order: Vec<usize> = (0..attributions.len()).collect();
        order.sort_by(|&a, &b| {
            attributions[b]
                .abs()
                .partial_cmp(&attributions[a].abs())
                .unwrap()
                .then(a.cmp(&b))
        });
        let features = order
            .into_iter()
            .take(top_k)
            .map(|i| CaseFeature {
                name: labels[i].clone(),
                value: values[i].clone(),
                attribution: attributions[i],
            })
            .collect();
        Ok(ExplanationCase {
            row_id,
            scenario,
            probability,
            features,
        })
    }
}

/// Render the explanation prompt. The template below is the verbatim
/// contract; tests pin its shape and the stub provider echoes it back.
///
/// ```text
/// You are a credit risk analyst. Explain the model's assessment of one applicant.
///
/// Scenario: <scenario>
/// Model probability of default: <p.4>
///
/// Top contributing features (by attribution magnitude):
/// <rank>. <name> = <value> (<increases|decreases> risk, attribution <+x.4>)
///
/// Write a short plain-language explanation of why the model scored this
/// applicant as it did, citing the features above.
/// ```
pub fn render_prompt(case: &ExplanationCase) -> Result<String> {
    if case.features.is_empty() {
        return Err(Error::Parameter("case needs at least one feature".into()));
    }
    let mut out = String::new();
    out.push_str(
        "You are a credit risk analyst. Explain the model's assessment of one applicant.\n\n",
    );
    out.push_str(&format!("Scenario: {}\n", case.scenario));
    out.push_str(&format!(
        "Model probability of default: {:.4}\n\n",
        case.probability
    ));
    out.push_str("Top contributing features (by attribution magnitude):\n");
    for (rank, f) in case.features.iter().enumerate() {
        let direction = if f.attribution >= 0.0 {
            "increases"
        } else {
            "decreases"
        };
        out.push_str(&format!(
            "{}. {} = {} ({} risk, attribution {:+.4})\n",
            rank + 1,
            f.name,
            f.value,
            direction,
            f.attribution
        ));
    }
    out.push_str(
        "\nWrite a short plain-language explanation of why the model scored this\napplicant as it did, citing the features above.\n",
    );
    Ok(out)
}

/// Rubric scores for one clean/adversarial explanation pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemanticScore {
    pub plausibility: f64,
    pub stability: f64,
    pub consistency: f64,
    pub composite: f64,
}

impl SemanticScore {
    fn new(plausibility: f64, stability: f64, consistency: f64) -> Self {
        SemanticScore {
            plausibility,
            stability,
            consistency,
            composite: (plausibility + stability + consistency) / 3.0,
        }
    }
}

/// Explanation provider: produces narrative text and scores text pairs.
pub trait SemanticProvider: Sync {
    /// Provider tag recorded in reports: `stub` or `live`.
    fn tag(&self) -> &'static str;
    fn explain(&self, prompt: &str) -> Result<String>;
    fn score_pair(&self, clean_text: &str, adv_text: &str) -> Result<SemanticScore>;
}

/// Deterministic offline provider: explanations echo the rendered template;
/// pair scoring is plausibility 1.0, token-set Jaccard stability, top-1
/// feature match consistency.
#[derive(Debug, Default, Clone)]
pub struct StubProvider;

fn token_set(text: &str) -> BTreeSet<&str> {
    text.split_whitespace().collect()
}

fn jaccard(a: &BTreeSet<&str>, b: &BTreeSet<&str>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.union(b).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// First cited feature name: the text after `1. ` up to ` = ` on that line.
fn top_feature(text: &str) -> Option<&str> {
    text.lines().find_map(|line| {
        let rest = line.strip_prefix("1. ")?;
        rest.split(" = ").next()
    })
}

impl SemanticProvider for StubProvider {
    fn tag(&self) -> &'static str {
        "stub"
    }

    fn explain(&self, prompt: &str) -> Result<String> {
        Ok(prompt.to_string())
    }

    fn score_pair(&self, clean_text: &str, adv_text: &str) -> Result<SemanticScore> {
        if clean_text.is_empty() || adv_text.is_empty() {
            return Err(Error::Provider("explanation text is empty".into()));
        }
        let stability = jaccard(&token_set(clean_text), &token_set(adv_text));
        let consistency = match (top_feature(clean_text), top_feature(adv_text)) {
            (Some(a), Some(b)) if a == b => 1.0,
            _ => 0.0,
        };
        Ok(SemanticScore::new(1.0, stability, consistency))
    }
}

/// Connection settings for the live provider.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    /// Base backoff in milliseconds; doubles per retry.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_retries() -> usize {
    3
}
fn default_backoff() -> u64 {
    250
}

/// HTTP chat-completion provider. The credential comes from
/// [`LLM_KEY_ENV`] and is never logged or echoed.
pub struct HttpProvider {
    cfg: EndpointConfig,
    api_key: String,
}

impl HttpProvider {
    pub fn new(cfg: EndpointConfig) -> Result<Self> {
        let api_key = std::env::var(LLM_KEY_ENV)
            .map_err(|_| Error::Provider(format!("credential env var {LLM_KEY_ENV} not set")))?;
        if cfg.endpoint.is_empty() {
            return Err(Error::Provider("endpoint URL is empty".into()));
        }
        Ok(HttpProvider { cfg, api_key })
    }

    fn post_chat(&self, prompt: &str) -> Result<String> {
        let body = serde_json::json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut last_err = String::new();
        for attempt in 0..self.cfg.max_retries {
            if attempt > 0 {
                std::thread::sleep(std::time::Duration::from_millis(
                    self.cfg.backoff_ms << (attempt - 1),
                ));
            }
            log::info!(
                "semantic provider request attempt {} to {} (authorization: Bearer ***redacted***)",
                attempt + 1,
                self.cfg.endpoint
            );
            let result = ureq::post(&self.cfg.endpoint)
                .header("authorization", &format!("Bearer {}", self.api_key))
                .header("content-type", "application/json")
                .send_json(&body);
            match result {
                Ok(mut resp) => {
                    let parsed: serde_json::Value = resp
                        .body_mut()
                        .read_json()
                        .map_err(|e| Error::Provider(format!("bad provider body: {e}")))?;
                    let text = parsed
                        .pointer("/choices/0/message/content")
                        .and_then(|v| v.as_str())
                        .ok_or_else(|| {
                            Error::Provider("provider response missing message content".into())
                        })?;
                    log::info!("semantic provider response: {} bytes", text.len());
                    return Ok(text.to_string());
                }
                Err(e) => {
                    // The error string never includes request headers.
                    last_err = e.to_string();
                    log::warn!("semantic provider attempt {} failed: {last_err}", attempt + 1);
                }
            }
        }
        Err(Error::Provider(format!(
            "provider unreachable after {} attempts: {last_err}",
            self.cfg.max_retries
        )))
    }
}

impl SemanticProvider for HttpProvider {
    fn tag(&self) -> &'static str {
        "live"
    }

    fn explain(&self, prompt: &str) -> Result<String> {
        let text = self.post_chat(prompt)?;
        if text.is_empty() {
            return Err(Error::Provider("provider returned empty text".into()));
        }
        Ok(text)
    }

    fn score_pair(&self, clean_text: &str, adv_text: &str) -> Result<SemanticScore> {
        let rubric = format!(
            "Score the agreement between these two model explanations.\n\n\
             Explanation A (clean):\n{clean_text}\n\nExplanation B (perturbed):\n{adv_text}\n\n\
             Reply with exactly one JSON object and nothing else:\n\
             {{\"plausibility\": <0..1>, \"stability\": <0..1>, \"consistency\": <0..1>}}"
        );
        let reply = self.post_chat(&rubric)?;
        parse_rubric_scores(&reply)
    }
}

/// Strict rubric parse: the reply must be one JSON object with the three
/// fields in [0, 1]. No silent defaults.
pub fn parse_rubric_scores(reply: &str) -> Result<SemanticScore> {
    let value: serde_json::Value = serde_json::from_str(reply.trim())
        .map_err(|e| Error::Provider(format!("unparseable rubric response: {e}")))?;
    let field = |name: &str| -> Result<f64> {
        let v = value
            .get(name)
            .and_then(|v| v.as_f64())
            .ok_or_else(|| Error::Provider(format!("rubric response missing `{name}`")))?;
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Provider(format!("rubric `{name}` = {v} outside [0, 1]")));
        }
        Ok(v)
    };
    Ok(SemanticScore::new(
        field("plausibility")?,
        field("stability")?,
        field("consistency")?,
    ))
}

/// Per-instance semantic outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceSemantic {
    pub row_id: usize,
    pub score: SemanticScore,
}

/// Aggregate SRI over clean/adversarial explanation pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SriResult {
    pub per_instance: Vec<InstanceSemantic>,
    /// Mean of per-instance composites, in [0, 1] by construction.
    pub sri: f64,
    pub provider: String,
    pub skipped: usize,
}

/// Explain every aligned case pair and aggregate composite scores into the
/// Semantic Robustness Index. Instances run in chunks of `max_in_flight`;
/// assembly is by row id, so the chunking never affects the result.
pub fn sri(
    clean_cases: &[ExplanationCase],
    adv_cases: &[ExplanationCase],
    provider: &dyn SemanticProvider,
    max_in_flight: usize,
) -> Result<SriResult> {
    if clean_cases.len() != adv_cases.len() {
        return Err(Error::Shape("case lists must be row-aligned".into()));
    }
    if clean_cases.is_empty() {
        return Err(Error::Parameter("no instances to score".into()));
    }
    let cap = max_in_flight.max(1);
    let mut outcomes: Vec<(usize, Result<SemanticScore>)> = Vec::with_capacity(clean_cases.len());
    for chunk_start in (0..clean_cases.len()).step_by(cap) {
        let end = (chunk_start + cap).min(clean_cases.len());
        let chunk: Vec<(usize, Result<SemanticScore>)> =
            crate::parallel::map_indexed(end - chunk_start, |k| {
                let i = chunk_start + k;
                let result = (|| {
                    let clean_text = provider.explain(&render_prompt(&clean_cases[i])?)?;
                    let adv_text = provider.explain(&render_prompt(&adv_cases[i])?)?;
                    provider.score_pair(&clean_text, &adv_text)
                })();
                (clean_cases[i].row_id, result)
            });
        outcomes.extend(chunk);
    }
    let mut per_instance = Vec::new();
    let mut skipped = 0usize;
    for (row_id, outcome) in outcomes {
        match outcome {
            Ok(score) => per_instance.push(InstanceSemantic { row_id, score }),
            Err(_) => skipped += 1,
        }
    }
    if per_instance.is_empty() {
        return Err(Error::Provider(
            "every instance failed semantic scoring".into(),
        ));
    }
    per_instance.sort_by_key(|e| e.row_id);
    let sri_value = per_instance
        .iter()
        .map(|e| e.score.composite)
        .sum::<f64>()
        / per_instance.len() as f64;
    Ok(SriResult {
        per_instance,
        sri: sri_value,
        provider: provider.tag().to_string(),
        skipped,
    })
}
