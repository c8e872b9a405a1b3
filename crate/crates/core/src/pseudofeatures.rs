//! Value-aware discretization of features into binary pseudo-features.
//!
//! Every numerical feature is cut into `k` equal-width bins over its training
//! range, with `k` picked by the Freedman-Diaconis rule and capped at
//! [`MAX_BINS`]. Bins are half-open `[a_{i-1}, a_i)` except the last, which is
//! closed so that the training maximum falls inside it. Each category of a
//! categorical feature becomes its own indicator. All indicators share one
//! dense id space, laid out feature by feature.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{FeatureKind, FeatureSchema, Record, Table, Value};

pub const MAX_BINS: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum BinError {
    #[error("cannot fit bins on an empty table")]
    EmptyTable,
    #[error("fixed bin count must be in 1..={MAX_BINS}, got {0}")]
    InvalidBinCount(usize),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("value {value} of `{feature}` lies outside the fitted range [{lo}, {hi}]")]
    OutOfRange {
        feature: String,
        value: String,
        lo: f64,
        hi: f64,
    },
    #[error("category `{value}` was never seen for `{feature}`")]
    UnseenCategory { feature: String, value: String },
    #[error("value kind does not match feature `{0}`")]
    KindMismatch(String),
}

/// How the number of bins of a numerical feature is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode", content = "bins")]
pub enum BinningMode {
    #[default]
    FreedmanDiaconis,
    Fixed(usize),
}

/// Dense pseudo-feature identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PseudoId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureBins {
    Numeric { cuts: Vec<f64> },
    Categorical { categories: Vec<String> },
}

impl FeatureBins {
    pub fn len(&self) -> usize {
        match self {
            FeatureBins::Numeric { cuts } => cuts.len() - 1,
            FeatureBins::Categorical { categories } => categories.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Owner of a pseudo-feature: the parent feature and the bin/category slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoSlot {
    pub feature: usize,
    pub local: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub name: String,
    #[serde(flatten)]
    pub bins: FeatureBins,
    /// First global id of this feature's pseudo-features.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinLayout {
    pub features: Vec<FeatureLayout>,
    /// Global id table, indexed by `PseudoId`.
    pub ids: Vec<PseudoSlot>,
}

/// Linear-interpolation quantile of sorted data (the "type 7" estimator).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Freedman-Diaconis bin count `ceil(range / (2 * IQR * n^(-1/3)))`, capped
/// at [`MAX_BINS`]; constant or zero-IQR samples get a single bin.
pub fn freedman_diaconis_bins(values: &[f64]) -> usize {
    if values.is_empty() {
        return 1;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let range = sorted[sorted.len() - 1] - sorted[0];
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    if range <= 0.0 || iqr <= 0.0 {
        return 1;
    }
    let width = 2.0 * iqr * (sorted.len() as f64).powf(-1.0 / 3.0);
    let k = (range / width).ceil();
    (k as usize).clamp(1, MAX_BINS)
}

/// Cut points `a_i = min + i * (max - min) / k`, with the last pinned to `max`.
/// Falls back to a single bin if rounding would make the cuts non-increasing.
pub fn equal_width_cuts(min: f64, max: f64, k: usize) -> Vec<f64> {
    if max <= min {
        return vec![min, max];
    }
    let width = (max - min) / k as f64;
    let mut cuts: Vec<f64> = (0..=k).map(|i| min + i as f64 * width).collect();
    cuts[k] = max;
    if cuts.windows(2).all(|w| w[0] < w[1]) {
        cuts
    } else {
        vec![min, max]
    }
}

impl BinLayout {
    pub fn fit(train: &Table, mode: BinningMode) -> Result<Self, BinError> {
        if train.is_empty() {
            return Err(BinError::EmptyTable);
        }
        if let BinningMode::Fixed(k) = mode {
            if !(1..=MAX_BINS).contains(&k) {
                return Err(BinError::InvalidBinCount(k));
            }
        }
        let schema = train.schema();
        let mut features = Vec::with_capacity(schema.len());
        let mut ids = Vec::new();
        for (f, spec) in schema.features.iter().enumerate() {
            let bins = match spec.kind {
                FeatureKind::Numerical => {
                    let values = train.numeric_column(f);
                    let (min, max) = values
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                            (lo.min(v), hi.max(v))
                        });
                    let k = if max > min {
                        match mode {
                            BinningMode::FreedmanDiaconis => freedman_diaconis_bins(&values),
                            BinningMode::Fixed(k) => k,
                        }
                    } else {
                        1
                    };
                    FeatureBins::Numeric {
                        cuts: equal_width_cuts(min, max, k),
                    }
                }
                FeatureKind::Categorical => {
                    let mut seen = HashSet::new();
                    let categories = train
                        .column(f)
                        .filter_map(Value::as_cat)
                        .filter(|c| seen.insert(*c))
                        .map(str::to_string)
                        .collect();
                    FeatureBins::Categorical { categories }
                }
            };
            let offset = ids.len();
            ids.extend((0..bins.len()).map(|local| PseudoSlot { feature: f, local }));
            features.push(FeatureLayout {
                name: spec.name.clone(),
                bins,
                offset,
            });
        }
        Ok(Self { features, ids })
    }

    pub fn num_pseudo(&self) -> usize {
        self.ids.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn slot(&self, id: PseudoId) -> PseudoSlot {
        self.ids[id.0]
    }

    pub fn parent(&self, id: PseudoId) -> usize {
        self.ids[id.0].feature
    }

    /// Global ids belonging to one feature, in bin/category order.
    pub fn ids_of(&self, feature: usize) -> impl Iterator<Item = PseudoId> + Clone {
        let f = &self.features[feature];
        (f.offset..f.offset + f.bins.len()).map(PseudoId)
    }

    pub fn bins_of(&self, feature: usize) -> usize {
        self.features[feature].bins.len()
    }

    /// `[lo, hi]` training range of a numerical feature.
    pub fn range(&self, feature: usize) -> Option<(f64, f64)> {
        match &self.features[feature].bins {
            FeatureBins::Numeric { cuts } => Some((cuts[0], cuts[cuts.len() - 1])),
            FeatureBins::Categorical { .. } => None,
        }
    }

    /// Interval of bin `local` of a numerical feature and whether it is closed
    /// on the right.
    pub fn bin_interval(&self, feature: usize, local: usize) -> Option<(f64, f64, bool)> {
        match &self.features[feature].bins {
            FeatureBins::Numeric { cuts } => {
                let last = local + 1 == cuts.len() - 1;
                Some((cuts[local], cuts[local + 1], last))
            }
            FeatureBins::Categorical { .. } => None,
        }
    }

    /// Representative value of a pseudo-feature: the bin midpoint for
    /// numerical features, the category itself otherwise.
    pub fn representative(&self, id: PseudoId) -> Value {
        let slot = self.slot(id);
        match &self.features[slot.feature].bins {
            FeatureBins::Numeric { cuts } => {
                Value::Num(0.5 * (cuts[slot.local] + cuts[slot.local + 1]))
            }
            FeatureBins::Categorical { categories } => Value::Cat(categories[slot.local].clone()),
        }
    }

    /// Pseudo-feature activated by `value` of feature index `feature`.
    pub fn assign(&self, feature: usize, value: &Value) -> Result<PseudoId, BinError> {
        let layout = &self.features[feature];
        let local = match (&layout.bins, value) {
            (FeatureBins::Numeric { cuts }, Value::Num(v)) => {
                let (lo, hi) = (cuts[0], cuts[cuts.len() - 1]);
                if !(*v >= lo && *v <= hi) {
                    return Err(BinError::OutOfRange {
                        feature: layout.name.clone(),
                        value: v.to_string(),
                        lo,
                        hi,
                    });
                }
                // Count interior cut points at or below v: that is the bin with
                // a_{i-1} <= v < a_i, and v == max lands in the last bin.
                let interior = &cuts[1..cuts.len() - 1];
                interior.partition_point(|&c| c <= *v)
            }
            (FeatureBins::Categorical { categories }, Value::Cat(c)) => categories
                .iter()
                .position(|x| x == c)
                .ok_or_else(|| BinError::UnseenCategory {
                    feature: layout.name.clone(),
                    value: c.clone(),
                })?,
            _ => return Err(BinError::KindMismatch(layout.name.clone())),
        };
        Ok(PseudoId(layout.offset + local))
    }

    /// Named variant of [`BinLayout::assign`].
    pub fn assign_bin(&self, feature: &str, value: &Value) -> Result<PseudoId, BinError> {
        let f = self
            .feature_index(feature)
            .ok_or_else(|| BinError::UnknownFeature(feature.to_string()))?;
        self.assign(f, value)
    }

    /// Expands a record into its active pseudo-features, one per feature.
    pub fn expand(&self, record: &Record) -> Result<PseudoVector, BinError> {
        let active = record
            .iter()
            .enumerate()
            .map(|(f, v)| self.assign(f, v))
            .collect::<Result<_, _>>()?;
        Ok(PseudoVector { active })
    }

    pub fn expand_table(&self, table: &Table) -> Result<Vec<PseudoVector>, BinError> {
        table.rows().iter().map(|r| self.expand(r)).collect()
    }

    /// Checks that the layout was built for `schema`.
    pub fn matches_schema(&self, schema: &FeatureSchema) -> bool {
        self.features.len() == schema.len()
            && self.features.iter().zip(&schema.features).all(|(l, s)| {
                l.name == s.name
                    && matches!(
                        (&l.bins, s.kind),
                        (FeatureBins::Numeric { .. }, FeatureKind::Numerical)
                            | (FeatureBins::Categorical { .. }, FeatureKind::Categorical)
                    )
            })
    }
}

/// Active pseudo-features of one record, indexed by feature position.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PseudoVector {
    pub active: Vec<PseudoId>,
}

impl PseudoVector {
    /// Dense 0/1 encoding over the whole pseudo-feature space.
    pub fn to_binary(&self, num_pseudo: usize) -> Vec<u8> {
        let mut out = vec![0u8; num_pseudo];
        for id in &self.active {
            out[id.0] = 1;
        }
        out
    }
}
