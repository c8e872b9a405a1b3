//! Autoregressive row synthesis over guided candidate distributions.
//!
//! Each record gets its own feature order and its own rng stream derived from
//! `(seed, record index)`, so parallel and serial runs produce the same
//! corpus.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{softmax, BackendError, CandidateDistribution};
use crate::dataset::{Record, Table, Value};
use crate::engine::Engine;
use crate::guidance::{self, GuidanceMode, PrefixEntry};
use crate::pseudofeatures::BinLayout;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("no legal candidate for `{0}`")]
    NoLegalCandidate(String),
    #[error("backend failure: {0}")]
    Backend(#[from] BackendError),
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PrefixMode {
    /// Start from an empty context.
    #[default]
    PromptOnly,
    /// Copy `k` feature values from a random training row first.
    SeedK(usize),
}

impl std::str::FromStr for PrefixMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "prompt" || s == "prompt_only" {
            return Ok(PrefixMode::PromptOnly);
        }
        s.strip_prefix("seed:")
            .and_then(|k| k.parse().ok())
            .map(PrefixMode::SeedK)
            .ok_or_else(|| format!("invalid prefix mode `{s}` (prompt or seed:<k>)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub nucleus_p: f64,
    pub temperature: f64,
    pub seed: u64,
    pub prefix_mode: PrefixMode,
    pub max_attempts: u32,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            nucleus_p: 0.95,
            temperature: 1.0,
            seed: 0,
            prefix_mode: PrefixMode::PromptOnly,
            max_attempts: 8,
        }
    }
}

impl SamplerConfig {
    /// Named parameter presets: `default` (p = 0.95) and `narrow-nucleus`
    /// (p = 0.7), both at temperature 1.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::default()),
            "narrow-nucleus" => Some(Self {
                nucleus_p: 0.7,
                ..Self::default()
            }),
            _ => None,
        }
    }

    pub fn validate(&self, num_features: usize) -> Result<(), SampleError> {
        if !(self.nucleus_p > 0.0 && self.nucleus_p <= 1.0) {
            return Err(SampleError::InvalidConfig(format!(
                "nucleus p must be in (0, 1], got {}",
                self.nucleus_p
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(SampleError::InvalidConfig(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if let PrefixMode::SeedK(k) = self.prefix_mode {
            if k >= num_features {
                return Err(SampleError::InvalidConfig(format!(
                    "seed size {k} must be smaller than the feature count {num_features}"
                )));
            }
        }
        if self.max_attempts == 0 {
            return Err(SampleError::InvalidConfig("max_attempts must be >= 1".into()));
        }
        Ok(())
    }
}

/// How a single value of a synthetic record came about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureProvenance {
    /// `seeded`, or the guidance mode (`fs`, `lc`, `none`).
    pub source: String,
    /// Number of context pairs passed to the backend.
    pub context_size: usize,
    /// Logit-correction delta, when correction was applied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub attempts: u32,
    /// True when retries were exhausted and the most frequent legal value was
    /// used.
    pub forced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRecord {
    pub values: Record,
    /// Indexed like `values` (schema order).
    pub provenance: Vec<FeatureProvenance>,
    /// Generation order as schema indices.
    pub order: Vec<usize>,
}

/// Indices of the nucleus: candidates sorted by probability (ties keep
/// candidate order), truncated to the smallest prefix with mass >= `p`.
pub fn nucleus(probs: &[f64], p: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    if p >= 1.0 {
        return order;
    }
    let mut mass = 0.0;
    let mut keep = order.len();
    for (i, &c) in order.iter().enumerate() {
        mass += probs[c];
        if mass >= p {
            keep = i + 1;
            break;
        }
    }
    order.truncate(keep.max(1));
    order
}

/// Samples a candidate index with temperature and nucleus truncation.
pub fn nucleus_sample<R: Rng + ?Sized>(
    dist: &CandidateDistribution,
    p: f64,
    temperature: f64,
    rng: &mut R,
) -> usize {
    assert!(!dist.is_empty(), "cannot sample from an empty distribution");
    let scaled: Vec<f64> = dist.logits.iter().map(|z| z / temperature).collect();
    let probs = softmax(&scaled);
    let kept = nucleus(&probs, p);
    let total: f64 = kept.iter().map(|&i| probs[i]).sum();
    let mut u = rng.gen::<f64>() * total;
    for &i in &kept {
        u -= probs[i];
        if u < 0.0 {
            return i;
        }
    }
    *kept.last().expect("nucleus is never empty")
}

/// Drops candidates outside the legal value set of the target feature (wrong
/// kind, unseen category, out-of-range number), non-finite logits and
/// duplicates.
pub fn constrain(
    dist: &CandidateDistribution,
    layout: &BinLayout,
) -> Result<CandidateDistribution, SampleError> {
    let feature = layout
        .feature_index(&dist.target)
        .ok_or_else(|| SampleError::Backend(BackendError::UnknownFeature(dist.target.clone())))?;
    let mut candidates: Vec<Value> = Vec::with_capacity(dist.len());
    let mut logits = Vec::with_capacity(dist.len());
    for (c, &z) in dist.candidates.iter().zip(&dist.logits) {
        if z.is_finite() && layout.assign(feature, c).is_ok() && !candidates.contains(c) {
            candidates.push(c.clone());
            logits.push(z);
        }
    }
    if candidates.is_empty() {
        return Err(SampleError::NoLegalCandidate(dist.target.clone()));
    }
    Ok(CandidateDistribution {
        target: dist.target.clone(),
        candidates,
        logits,
    })
}

/// The rng stream of record `index`.
pub fn record_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Backend context for the next target under the engine's guidance mode.
fn context_positions(engine: &Engine, prefix: &[PrefixEntry], target: usize) -> Vec<usize> {
    match engine.config.guidance.mode {
        GuidanceMode::FeatureSelector => {
            guidance::relevant_positions(&engine.graph, prefix, target, engine.tau())
        }
        GuidanceMode::LogitCorrection | GuidanceMode::None => (0..prefix.len()).collect(),
    }
}

/// Generates the value of `target` after `prefix`.
pub fn generate_value<R: Rng + ?Sized>(
    engine: &Engine,
    prefix: &[PrefixEntry],
    target: usize,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<(PrefixEntry, FeatureProvenance), SampleError> {
    let graph = &engine.graph;
    let guidance_cfg = &engine.config.guidance;
    let name = &graph.feature_names[target];
    let positions = context_positions(engine, prefix, target);
    let context: Vec<_> = positions.iter().map(|&i| prefix[i].to_pair(graph)).collect();

    let mut delta = None;
    let mut scale = 1.0;
    if guidance_cfg.mode == GuidanceMode::LogitCorrection {
        if let Ok(mu_s) = guidance::mu_sample(graph, prefix, target) {
            let mu_t = graph.mu_train(target);
            if mu_t > 0.0 {
                delta = Some(mu_s / mu_t - 1.0);
            }
            scale = guidance::correction_scale(mu_s, mu_t, guidance_cfg.lambda);
        }
    }

    let mut chosen = None;
    let mut attempts = 0;
    while attempts < config.max_attempts && chosen.is_none() {
        attempts += 1;
        let dist = match engine.backend.score_candidates(&context, name) {
            Ok(d) => d,
            Err(BackendError::Malformed(msg)) => {
                log::debug!("rejected malformed output for `{name}`: {msg}");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        match constrain(&dist, &engine.layout) {
            Ok(legal) => {
                let corrected = guidance::scale_logits(&legal, scale);
                let i = nucleus_sample(&corrected, config.nucleus_p, config.temperature, rng);
                chosen = Some(corrected.candidates[i].clone());
            }
            Err(SampleError::NoLegalCandidate(_)) => {
                log::debug!("no legal candidate for `{name}` on attempt {attempts}");
            }
            Err(e) => return Err(e),
        }
    }
    let forced = chosen.is_none();
    let candidate = match chosen {
        Some(c) => c,
        None => {
            let counts = engine.marginal_counts(target);
            let best = counts
                .iter()
                .enumerate()
                .fold(0, |b, (i, &c)| if c > counts[b] { i } else { b });
            let id = engine.layout.ids_of(target).nth(best).expect("feature has pseudo-features");
            engine.layout.representative(id)
        }
    };

    let pseudo = engine
        .layout
        .assign(target, &candidate)
        .expect("constrained candidates are assignable");
    let value = match candidate {
        Value::Num(_) => Value::Num(engine.pools.draw(&engine.layout, pseudo, rng)),
        cat => cat,
    };
    Ok((
        PrefixEntry {
            feature: target,
            value,
            pseudo,
        },
        FeatureProvenance {
            source: guidance_cfg.mode.as_str().to_string(),
            context_size: context.len(),
            delta,
            attempts,
            forced,
        },
    ))
}

/// Synthesizes record number `index` of the stream defined by `config.seed`.
pub fn sample_record(engine: &Engine, config: &SamplerConfig, index: u64) -> Result<SynthRecord, SampleError> {
    let f = engine.layout.num_features();
    config.validate(f)?;
    let mut rng = record_rng(config.seed, index);
    let mut order: Vec<usize> = (0..f).collect();
    order.shuffle(&mut rng);

    let mut prefix: Vec<PrefixEntry> = Vec::with_capacity(f);
    let mut provenance: Vec<Option<FeatureProvenance>> = vec![None; f];
    let seeded = match config.prefix_mode {
        PrefixMode::PromptOnly => 0,
        PrefixMode::SeedK(k) => {
            let row = &engine.train.rows()[rng.gen_range(0..engine.train.len())];
            for &feature in &order[..k] {
                let value = row[feature].clone();
                let pseudo = engine
                    .layout
                    .assign(feature, &value)
                    .expect("training values are inside the fitted layout");
                prefix.push(PrefixEntry { feature, value, pseudo });
                provenance[feature] = Some(FeatureProvenance {
                    source: "seeded".into(),
                    context_size: 0,
                    delta: None,
                    attempts: 0,
                    forced: false,
                });
            }
            k
        }
    };
    for &target in &order[seeded..] {
        let (entry, prov) = generate_value(engine, &prefix, target, config, &mut rng)?;
        provenance[target] = Some(prov);
        prefix.push(entry);
    }

    let mut values: Vec<Option<Value>> = vec![None; f];
    for e in prefix {
        values[e.feature] = Some(e.value);
    }
    Ok(SynthRecord {
        values: values.into_iter().map(|v| v.expect("every feature generated")).collect(),
        provenance: provenance.into_iter().map(|p| p.expect("every feature generated")).collect(),
        order,
    })
}

/// Synthesizes `count` records in parallel.
pub fn synthesize(engine: &Engine, count: usize, config: &SamplerConfig) -> Result<Vec<SynthRecord>, SampleError> {
    config.validate(engine.layout.num_features())?;
    (0..count as u64)
        .into_par_iter()
        .map(|i| sample_record(engine, config, i))
        .collect()
}

/// Collects synthetic records into a table with the engine's schema.
pub fn to_table(engine: &Engine, records: &[SynthRecord]) -> Table {
    Table::new(
        Arc::clone(engine.train.schema_arc()),
        records.iter().map(|r| r.values.clone()).collect(),
    )
    .expect("synthetic records satisfy the schema")
}
