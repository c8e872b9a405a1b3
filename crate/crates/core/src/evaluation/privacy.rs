//! Distance to closest record (L1).
//!
//! Numerical features are min-max scaled by the real table's range, so each
//! contributes at most 1 for in-range values; a categorical feature
//! contributes 0 on a match and 1 on a mismatch.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::dataset::{Record, Table, Value};
use crate::migraph::median;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcrSummary {
    pub min: f64,
    pub median: f64,
    pub mean: f64,
    #[serde(skip)]
    pub distances: Vec<f64>,
}

/// Per-feature scaling derived from the real table.
#[derive(Debug, Clone, PartialEq)]
pub struct DcrMetric {
    /// `Some(range)` for numerical features.
    ranges: Vec<Option<f64>>,
}

impl DcrMetric {
    pub fn fit(real: &Table) -> Self {
        let ranges = (0..real.schema().len())
            .map(|f| {
                let col = real.numeric_column(f);
                if col.is_empty() {
                    return None;
                }
                let (lo, hi) = col
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                // A constant column keeps raw units.
                Some(if hi > lo { hi - lo } else { 1.0 })
            })
            .collect();
        Self { ranges }
    }

    pub fn distance(&self, a: &Record, b: &Record) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.ranges)
            .map(|((x, y), range)| match (x, y) {
                (Value::Num(x), Value::Num(y)) => (x - y).abs() / range.unwrap_or(1.0),
                (Value::Cat(x), Value::Cat(y)) => f64::from(u8::from(x != y)),
                _ => 1.0,
            })
            .sum()
    }
}

pub fn eval_dcr(synthetic: &Table, real: &Table) -> Result<DcrSummary, EvalError> {
    if synthetic.is_empty() || real.is_empty() {
        return Err(EvalError::EmptyTable);
    }
    if synthetic.schema() != real.schema() {
        return Err(EvalError::SchemaMismatch);
    }
    let metric = DcrMetric::fit(real);
    let distances: Vec<f64> = synthetic
        .rows()
        .par_iter()
        .map(|s| {
            real.rows()
                .iter()
                .map(|r| metric.distance(s, r))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Ok(DcrSummary {
        min: distances.iter().copied().fold(f64::INFINITY, f64::min),
        median: median(&distances).expect("non-empty"),
        mean: distances.iter().sum::<f64>() / distances.len() as f64,
        distances,
    })
}
