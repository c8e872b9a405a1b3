//! Per-step guidance from the dependency graph.
//!
//! The feature selector prunes the context down to the prefix pseudo-features
//! whose MI with the target is strictly above a threshold. Logit correction
//! keeps the full context and rescales every candidate logit by
//! `c = 1 + lambda * (mu_sample / mu_train - 1)`, which sharpens the
//! distribution when the prefix is more informative than average and flattens
//! it otherwise.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{CandidateDistribution, ContextPair};
use crate::dataset::Value;
use crate::migraph::MiGraph;
use crate::pseudofeatures::PseudoId;

/// Lower clamp on the correction scale; a non-positive scale would invert or
/// erase the candidate ranking.
pub const MIN_SCALE: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum GuidanceError {
    #[error("the prefix is empty")]
    EmptyPrefix,
    #[error("lambda must be finite and non-negative, got {0}")]
    InvalidLambda(f64),
    #[error("tau must be finite and non-negative, got {0}")]
    InvalidTau(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum GuidanceMode {
    #[serde(rename = "fs")]
    #[default]
    FeatureSelector,
    #[serde(rename = "lc")]
    LogitCorrection,
    #[serde(rename = "none")]
    None,
}

impl GuidanceMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            GuidanceMode::FeatureSelector => "fs",
            GuidanceMode::LogitCorrection => "lc",
            GuidanceMode::None => "none",
        }
    }
}

impl std::str::FromStr for GuidanceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fs" | "feature_selector" => Ok(GuidanceMode::FeatureSelector),
            "lc" | "logit_correction" => Ok(GuidanceMode::LogitCorrection),
            "none" => Ok(GuidanceMode::None),
            other => Err(format!("unknown guidance mode `{other}` (fs, lc, none)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub mode: GuidanceMode,
    /// `None` means the graph's threshold.
    pub tau: Option<f64>,
    pub lambda: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            mode: GuidanceMode::FeatureSelector,
            tau: None,
            lambda: 1.0,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<(), GuidanceError> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(GuidanceError::InvalidLambda(self.lambda));
        }
        if let Some(t) = self.tau {
            if !(t.is_finite() && t >= 0.0) {
                return Err(GuidanceError::InvalidTau(t));
            }
        }
        Ok(())
    }

    pub fn tau_for(&self, graph: &MiGraph) -> f64 {
        self.tau.unwrap_or(graph.tau())
    }
}

/// A generated value in the prefix, with its active pseudo-feature.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixEntry {
    pub feature: usize,
    pub value: Value,
    pub pseudo: PseudoId,
}

impl PrefixEntry {
    pub fn to_pair(&self, graph: &MiGraph) -> ContextPair {
        ContextPair::new(graph.feature_names[self.feature].clone(), self.value.clone())
    }
}

/// Positions of prefix entries whose MI with `target` exceeds `tau`.
pub fn relevant_positions(graph: &MiGraph, prefix: &[PrefixEntry], target: usize, tau: f64) -> Vec<usize> {
    prefix
        .iter()
        .enumerate()
        .filter(|(_, e)| graph.feature_level_mi(e.pseudo, target) > tau)
        .map(|(i, _)| i)
        .collect()
}

/// Context pairs kept by the feature selector, in generation order.
pub fn select_context(graph: &MiGraph, prefix: &[PrefixEntry], target: usize, tau: f64) -> Vec<ContextPair> {
    relevant_positions(graph, prefix, target, tau)
        .into_iter()
        .map(|i| prefix[i].to_pair(graph))
        .collect()
}

/// Mean feature-level MI between the prefix pseudo-features and `target`.
pub fn mu_sample(graph: &MiGraph, prefix: &[PrefixEntry], target: usize) -> Result<f64, GuidanceError> {
    if prefix.is_empty() {
        return Err(GuidanceError::EmptyPrefix);
    }
    let sum: f64 = prefix
        .iter()
        .map(|e| graph.feature_level_mi(e.pseudo, target))
        .sum();
    Ok(sum / prefix.len() as f64)
}

/// `1 + lambda * (mu_sample / mu_train - 1)`, clamped at [`MIN_SCALE`].
/// A non-positive `mu_train` disables the correction.
pub fn correction_scale(mu_sample: f64, mu_train: f64, lambda: f64) -> f64 {
    if !(mu_train > 0.0) {
        return 1.0;
    }
    let delta = mu_sample / mu_train - 1.0;
    (1.0 + lambda * delta).max(MIN_SCALE)
}

pub fn correct_logits(
    dist: &CandidateDistribution,
    mu_sample: f64,
    mu_train: f64,
    lambda: f64,
) -> CandidateDistribution {
    scale_logits(dist, correction_scale(mu_sample, mu_train, lambda))
}

pub fn scale_logits(dist: &CandidateDistribution, scale: f64) -> CandidateDistribution {
    CandidateDistribution {
        target: dist.target.clone(),
        candidates: dist.candidates.clone(),
        logits: dist.logits.iter().map(|z| z * scale).collect(),
    }
}

/// Shannon entropy (nats) of a probability vector.
pub fn entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::softmax;

    fn dist(z: &[f64]) -> CandidateDistribution {
        CandidateDistribution {
            target: "t".into(),
            candidates: (0..z.len()).map(|i| Value::Cat(i.to_string())).collect(),
            logits: z.to_vec(),
        }
    }

    #[test]
    fn zero_delta_is_identity() {
        let d = dist(&[1.0, -2.0, 0.5]);
        assert_eq!(correct_logits(&d, 0.3, 0.3, 1.0), d);
    }

    #[test]
    fn doubled_mu_doubles_logits() {
        let d = dist(&[1.0, -2.0]);
        assert_eq!(correct_logits(&d, 0.4, 0.2, 1.0).logits, vec![2.0, -4.0]);
    }

    #[test]
    fn negative_delta_smooths() {
        let d = dist(&[1.0, -0.5]);
        let c = correct_logits(&d, 0.1, 0.2, 1.0);
        assert_eq!(c.logits, vec![0.5, -0.25]);
        assert!(entropy(&softmax(&c.logits)) > entropy(&softmax(&d.logits)));
    }

    #[test]
    fn clamp_and_disabled_correction() {
        assert_eq!(correction_scale(0.0, 0.2, 1.0), MIN_SCALE);
        assert_eq!(correction_scale(0.0, 0.2, 3.0), MIN_SCALE);
        assert_eq!(correction_scale(0.5, 0.0, 1.0), 1.0);
        assert_eq!(correction_scale(0.5, 0.2, 0.0), 1.0);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("fs".parse::<GuidanceMode>().unwrap(), GuidanceMode::FeatureSelector);
        assert_eq!("lc".parse::<GuidanceMode>().unwrap(), GuidanceMode::LogitCorrection);
        assert!("hybrid".parse::<GuidanceMode>().is_err());
        assert_eq!(serde_json::to_string(&GuidanceMode::None).unwrap(), "\"none\"");
    }

    #[test]
    fn config_validation() {
        assert!(GuidanceConfig { lambda: -1.0, ..Default::default() }.validate().is_err());
        assert!(GuidanceConfig { tau: Some(f64::NAN), ..Default::default() }.validate().is_err());
        assert!(GuidanceConfig::default().validate().is_ok());
    }
}
