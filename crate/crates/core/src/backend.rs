//! Generator backends: anything that can score the candidate values of a
//! target feature given an ordered context of already generated values.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Table, Value, PHRASE_SEPARATOR};
use crate::migraph::Cooccurrence;
use crate::pseudofeatures::{BinError, BinLayout, PseudoId};

/// Laplace pseudo-count added to every count of the built-in backend.
pub const DEFAULT_SMOOTHING: f64 = 0.5;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("target `{0}` already appears in the context")]
    TargetInContext(String),
    #[error("context value cannot be binned: {0}")]
    Bin(#[from] BinError),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("malformed backend response: {0}")]
    Malformed(String),
}

/// One already generated `feature is value` unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextPair {
    pub feature: String,
    pub value: Value,
}

impl ContextPair {
    pub fn new(feature: impl Into<String>, value: Value) -> Self {
        Self {
            feature: feature.into(),
            value,
        }
    }
}

/// Renders context pairs as comma-joined `feature is value` phrases.
pub fn textualize(pairs: &[ContextPair]) -> String {
    pairs
        .iter()
        .map(|p| format!("{} is {}", p.feature, p.value))
        .collect::<Vec<_>>()
        .join(PHRASE_SEPARATOR)
}

/// Textualizes every row of a table. With `shuffle`, phrase order is permuted
/// independently per row (seeded), as expected by permutation training.
pub fn textualize_table(table: &Table, shuffle: bool, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<&str> = table.schema().names().collect();
    table
        .rows()
        .iter()
        .map(|row| {
            let mut pairs: Vec<ContextPair> = names
                .iter()
                .zip(row)
                .map(|(n, v)| ContextPair::new(*n, v.clone()))
                .collect();
            if shuffle {
                pairs.shuffle(&mut rng);
            }
            textualize(&pairs)
        })
        .collect()
}

/// Candidate values of a target feature with their unnormalized logits.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateDistribution {
    pub target: String,
    pub candidates: Vec<Value>,
    pub logits: Vec<f64>,
}

impl CandidateDistribution {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn argmax(&self) -> Option<usize> {
        self.logits
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, f64)>, (i, &z)| match best {
                Some((_, bz)) if bz >= z => best,
                _ => Some((i, z)),
            })
            .map(|(i, _)| i)
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Scores every legal value of a target feature.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    fn score_candidates(
        &self,
        context: &[ContextPair],
        target: &str,
    ) -> Result<CandidateDistribution, BackendError>;
}

/// Legal candidate values for a feature: categories in layout order, or one
/// representative (midpoint) per numerical bin.
pub fn legal_candidates(layout: &BinLayout, feature: usize) -> Vec<Value> {
    layout
        .ids_of(feature)
        .map(|id| layout.representative(id))
        .collect()
}

fn resolve_target(layout: &BinLayout, context: &[ContextPair], target: &str) -> Result<usize, BackendError> {
    let t = layout
        .feature_index(target)
        .ok_or_else(|| BackendError::UnknownFeature(target.to_string()))?;
    if context.iter().any(|c| c.feature == target) {
        return Err(BackendError::TargetInContext(target.to_string()));
    }
    Ok(t)
}

/// Serializable state of the built-in backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuiltinState {
    pub smoothing: f64,
    pub counts: Cooccurrence,
}

impl BuiltinState {
    pub fn fit(train: &Table, layout: &BinLayout, smoothing: f64) -> Result<Self, BinError> {
        let expanded = layout.expand_table(train)?;
        Ok(Self {
            smoothing,
            counts: Cooccurrence::count(&expanded, layout.num_pseudo()),
        })
    }
}

/// Smoothed product-of-conditionals scorer over count tables:
/// `logit(c) = ln P(c) + sum_p [ln P(c | p) - ln P(c)]` for the context
/// pseudo-features `p`.
#[derive(Debug, Clone)]
pub struct BuiltinBackend {
    layout: Arc<BinLayout>,
    state: Arc<BuiltinState>,
    context_free: bool,
}

impl BuiltinBackend {
    pub fn new(layout: Arc<BinLayout>, state: Arc<BuiltinState>) -> Self {
        Self {
            layout,
            state,
            context_free: false,
        }
    }

    /// Same counts, but every context is ignored: scores are the smoothed
    /// marginals.
    pub fn context_free(layout: Arc<BinLayout>, state: Arc<BuiltinState>) -> Self {
        Self {
            layout,
            state,
            context_free: true,
        }
    }

    pub fn state(&self) -> &BuiltinState {
        &self.state
    }

    /// Logits over the bins/categories of `target` given context
    /// pseudo-features.
    pub fn logits_for(&self, target: usize, context: &[PseudoId]) -> Vec<f64> {
        let counts = &self.state.counts;
        let alpha = self.state.smoothing;
        let ids: Vec<PseudoId> = self.layout.ids_of(target).collect();
        let k = ids.len() as f64;
        let n = counts.rows as f64;
        ids.iter()
            .map(|&c| {
                let log_prior = ((counts.marginal(c) as f64 + alpha) / (n + alpha * k)).ln();
                let evidence: f64 = context
                    .iter()
                    .map(|&p| {
                        let cond = (counts.joint(p, c) as f64 + alpha)
                            / (counts.marginal(p) as f64 + alpha * k);
                        cond.ln() - log_prior
                    })
                    .sum();
                log_prior + evidence
            })
            .collect()
    }
}

impl Backend for BuiltinBackend {
    fn name(&self) -> &str {
        if self.context_free {
            "marginal"
        } else {
            "builtin"
        }
    }

    fn score_candidates(
        &self,
        context: &[ContextPair],
        target: &str,
    ) -> Result<CandidateDistribution, BackendError> {
        let t = resolve_target(&self.layout, context, target)?;
        let ids = if self.context_free {
            Vec::new()
        } else {
            context
                .iter()
                .map(|c| self.layout.assign_bin(&c.feature, &c.value))
                .collect::<Result<Vec<_>, _>>()?
        };
        Ok(CandidateDistribution {
            target: target.to_string(),
            candidates: legal_candidates(&self.layout, t),
            logits: self.logits_for(t, &ids),
        })
    }
}

/// Wire format: one context unit, values always transported as strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireContext {
    pub feature: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub context: Vec<WireContext>,
    pub target: String,
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub ok: bool,
    pub max_in_flight: usize,
}

impl ScoreRequest {
    pub fn new(context: &[ContextPair], target: &str, candidates: &[Value]) -> Self {
        Self {
            context: context
                .iter()
                .map(|c| WireContext {
                    feature: c.feature.clone(),
                    value: c.value.to_string(),
                })
                .collect(),
            target: target.to_string(),
            candidates: candidates.iter().map(Value::to_string).collect(),
        }
    }
}

/// Counting semaphore bounding concurrent requests.
struct InFlight {
    slots: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn acquire(&self) -> InFlightGuard<'_> {
        let mut free = self.slots.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.freed.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.0.slots.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}

/// Client for an external scorer speaking the `/v1/score` protocol.
pub struct HttpBackend {
    base: String,
    layout: Arc<BinLayout>,
    client: reqwest::blocking::Client,
    in_flight: InFlight,
    max_in_flight: usize,
}

impl HttpBackend {
    /// Connects and performs the health handshake.
    pub fn connect(base_url: &str, layout: Arc<BinLayout>) -> Result<Self, BackendError> {
        let base = base_url.trim_end_matches('/').to_string();
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let health: HealthResponse = client
            .get(format!("{base}/v1/health"))
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| BackendError::Unavailable(e.to_string()))?
            .json()
            .map_err(|e| BackendError::Malformed(format!("health: {e}")))?;
        if !health.ok {
            return Err(BackendError::Unavailable(format!("{base} reports not ok")));
        }
        let max_in_flight = health.max_in_flight.max(1);
        Ok(Self {
            base,
            layout,
            client,
            in_flight: InFlight {
                slots: Mutex::new(max_in_flight),
                freed: Condvar::new(),
            },
            max_in_flight,
        })
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn score_candidates(
        &self,
        context: &[ContextPair],
        target: &str,
    ) -> Result<CandidateDistribution, BackendError> {
        let t = resolve_target(&self.layout, context, target)?;
        let candidates = legal_candidates(&self.layout, t);
        let request = ScoreRequest::new(context, target, &candidates);
        let response = {
            let _slot = self.in_flight.acquire();
            self.client
                .post(format!("{}/v1/score", self.base))
                .json(&request)
                .send()
                .and_then(|r| r.error_for_status())
                .map_err(|e| BackendError::Unavailable(e.to_string()))?
                .json::<ScoreResponse>()
                .map_err(|e| BackendError::Malformed(e.to_string()))?
        };
        if response.logits.len() != candidates.len() {
            return Err(BackendError::Malformed(format!(
                "{} logits for {} candidates",
                response.logits.len(),
                candidates.len()
            )));
        }
        Ok(CandidateDistribution {
            target: target.to_string(),
            candidates,
            logits: response.logits,
        })
    }
}
