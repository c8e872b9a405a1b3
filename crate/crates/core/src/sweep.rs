//! Threshold sweep: re-run synthesis and evaluation with the selector
//! threshold set to quantiles of the feature-level MI distribution.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Table;
use crate::engine::Engine;
use crate::evaluation::{self, ModelScores, UtilityReport};
use crate::guidance::{relevant_positions, GuidanceConfig, GuidanceMode, PrefixEntry};
use crate::sampler::{record_rng, synthesize, to_table, SamplerConfig};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSet {
    pub utility: bool,
    pub realism: bool,
    pub privacy: bool,
}

impl Default for MetricSet {
    fn default() -> Self {
        Self {
            utility: true,
            realism: true,
            privacy: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub quantiles: Vec<f64>,
    pub mode: GuidanceMode,
    pub lambda: f64,
    pub sampler: SamplerConfig,
    /// Synthetic rows per point.
    pub count: usize,
    pub metrics: MetricSet,
    /// Training rows used to measure context size on fixed real prefixes.
    pub probe_rows: usize,
}

impl SweepPlan {
    pub fn new(quantiles: Vec<f64>, count: usize) -> Self {
        Self {
            quantiles,
            mode: GuidanceMode::FeatureSelector,
            lambda: 1.0,
            sampler: SamplerConfig::default(),
            count,
            metrics: MetricSet::default(),
            probe_rows: 200,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.quantiles.is_empty() {
            return Err(Error::InvalidPlan("no quantiles".into()));
        }
        if self.quantiles.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(Error::InvalidPlan("quantiles must lie in [0, 1]".into()));
        }
        if self.quantiles.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidPlan("quantiles must be strictly increasing".into()));
        }
        if self.count == 0 {
            return Err(Error::InvalidPlan("count must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub quantile: f64,
    pub tau: f64,
    pub utility: Option<UtilityReport>,
    pub discriminator_accuracy: Option<f64>,
    pub dcr_mean: Option<f64>,
    /// Mean context size observed while synthesizing this point's corpus.
    pub mean_generated_context_size: f64,
    /// Mean selector output size on the fixed set of real-row prefixes.
    pub mean_context_size: f64,
}

/// Fixed probe prefixes: training rows, each under its own random feature
/// order, cut at every position.
fn probes(engine: &Engine, rows: usize, seed: u64) -> Vec<(Vec<PrefixEntry>, usize)> {
    let f = engine.layout.num_features();
    let n = engine.train.len().min(rows);
    let mut out = Vec::new();
    for r in 0..n {
        let mut rng = record_rng(seed, r as u64);
        let mut order: Vec<usize> = (0..f).collect();
        order.shuffle(&mut rng);
        let row = &engine.train.rows()[r];
        let entries: Vec<PrefixEntry> = order
            .iter()
            .map(|&feature| PrefixEntry {
                feature,
                value: row[feature].clone(),
                pseudo: engine
                    .layout
                    .assign(feature, &row[feature])
                    .expect("training rows fit the layout"),
            })
            .collect();
        for j in 1..f {
            out.push((entries[..j].to_vec(), order[j]));
        }
    }
    out
}

/// Mean number of prefix entries the selector keeps at threshold `tau`.
pub fn probe_context_size(engine: &Engine, probes: &[(Vec<PrefixEntry>, usize)], tau: f64) -> f64 {
    if probes.is_empty() {
        return 0.0;
    }
    let total: usize = probes
        .iter()
        .map(|(prefix, target)| relevant_positions(&engine.graph, prefix, *target, tau).len())
        .sum();
    total as f64 / probes.len() as f64
}

pub fn run_sweep(
    engine: &Engine,
    plan: &SweepPlan,
    real_train: &Table,
    real_test: Option<&Table>,
) -> Result<Vec<SweepPoint>, Error> {
    plan.validate()?;
    let probe_set = probes(engine, plan.probe_rows, plan.sampler.seed);
    plan.quantiles
        .par_iter()
        .map(|&q| {
            let tau = engine.graph.tau_quantile(q);
            let point_engine = engine.clone().with_guidance(GuidanceConfig {
                mode: plan.mode,
                tau: Some(tau),
                lambda: plan.lambda,
            })?;
            let records = synthesize(&point_engine, plan.count, &plan.sampler)?;
            let generated: Vec<usize> = records
                .iter()
                .flat_map(|r| r.provenance.iter().filter(|p| p.source != "seeded").map(|p| p.context_size))
                .collect();
            let synthetic = to_table(&point_engine, &records);
            let utility = match (plan.metrics.utility, real_test) {
                (true, Some(test)) if synthetic.schema().target_index().is_some() => {
                    Some(evaluation::eval_utility(&synthetic, test, plan.sampler.seed)?)
                }
                _ => None,
            };
            let discriminator_accuracy = if plan.metrics.realism {
                Some(evaluation::eval_discriminator(&synthetic, real_train, plan.sampler.seed)?.mean_accuracy)
            } else {
                None
            };
            let dcr_mean = if plan.metrics.privacy {
                Some(evaluation::eval_dcr(&synthetic, real_train)?.mean)
            } else {
                None
            };
            Ok(SweepPoint {
                quantile: q,
                tau,
                utility,
                discriminator_accuracy,
                dcr_mean,
                mean_generated_context_size: generated.iter().sum::<usize>() as f64 / generated.len().max(1) as f64,
                mean_context_size: probe_context_size(&point_engine, &probe_set, tau),
            })
        })
        .collect()
}

fn utility_columns(u: &UtilityReport) -> Vec<(String, f64)> {
    let mut cols = Vec::new();
    for (prefix, scores) in [("dt", &u.decision_tree), ("rf", &u.random_forest)] {
        match scores {
            ModelScores::Classification { accuracy, macro_f1 } => {
                cols.push((format!("{prefix}_accuracy"), *accuracy));
                cols.push((format!("{prefix}_macro_f1"), *macro_f1));
            }
            ModelScores::Regression { mape } => cols.push((format!("{prefix}_mape"), *mape)),
        }
    }
    cols
}

/// CSV with columns `quantile, tau, <metrics...>, mean_context_size`.
pub fn write_csv<W: std::io::Write>(points: &[SweepPoint], w: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(w);
    let mut header = vec!["quantile".to_string(), "tau".to_string()];
    if let Some(u) = points.first().and_then(|p| p.utility.as_ref()) {
        header.extend(utility_columns(u).into_iter().map(|(n, _)| n));
    }
    let has_disc = points.first().is_some_and(|p| p.discriminator_accuracy.is_some());
    let has_dcr = points.first().is_some_and(|p| p.dcr_mean.is_some());
    if has_disc {
        header.push("discriminator_accuracy".into());
    }
    if has_dcr {
        header.push("dcr_mean".into());
    }
    header.push("mean_generated_context_size".into());
    header.push("mean_context_size".into());
    w.write_record(&header)?;
    for p in points {
        let mut row = vec![p.quantile.to_string(), p.tau.to_string()];
        if let Some(u) = &p.utility {
            row.extend(utility_columns(u).into_iter().map(|(_, v)| v.to_string()));
        }
        if has_disc {
            row.push(p.discriminator_accuracy.unwrap_or(f64::NAN).to_string());
        }
        if has_dcr {
            row.push(p.dcr_mean.unwrap_or(f64::NAN).to_string());
        }
        row.push(p.mean_generated_context_size.to_string());
        row.push(p.mean_context_size.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
