//! Metric suite for synthetic tables: downstream utility, discriminator
//! realism, DCR privacy and constraint violation rates.

pub mod constraints;
pub mod discriminator;
pub mod encode;
pub mod privacy;
pub mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Table, Task, Value};
use crate::sampler::record_rng;
pub use constraints::{eval_violations, Constraint, ConstraintKind, ConstraintSet, ViolationReport};
pub use discriminator::{eval_discriminator, DiscriminatorReport};
pub use privacy::{eval_dcr, DcrSummary};
use encode::OneHotEncoder;
use tree::{DecisionTree, Labels, RandomForest, TreeParams};

pub const TREE_MAX_DEPTH: usize = 8;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("synthetic data has fewer than two classes of `{0}`")]
    DegenerateTarget(String),
    #[error("schema has no supervised target")]
    NoTarget,
    #[error("tables do not share a schema")]
    SchemaMismatch,
    #[error("table is empty")]
    EmptyTable,
    #[error("need at least {needed} rows per class, found {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("malformed polygon: {0}")]
    MalformedPolygon(String),
    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelScores {
    Classification { accuracy: f64, macro_f1: f64 },
    Regression { mape: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub decision_tree: ModelScores,
    pub random_forest: ModelScores,
}

pub fn accuracy(truth: &[usize], pred: &[usize]) -> f64 {
    let hits = truth.iter().zip(pred).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len().max(1) as f64
}

/// Unweighted mean F1 over every class present in `truth` or `pred`.
pub fn macro_f1(truth: &[usize], pred: &[usize]) -> f64 {
    let mut labels: Vec<usize> = truth.iter().chain(pred).copied().collect();
    labels.sort_unstable();
    labels.dedup();
    if labels.is_empty() {
        return 0.0;
    }
    let f1s: f64 = labels
        .iter()
        .map(|&c| {
            let tp = truth.iter().zip(pred).filter(|(t, p)| **t == c && **p == c).count() as f64;
            let fp = truth.iter().zip(pred).filter(|(t, p)| **t != c && **p == c).count() as f64;
            let fn_ = truth.iter().zip(pred).filter(|(t, p)| **t == c && **p != c).count() as f64;
            if tp == 0.0 {
                0.0
            } else {
                2.0 * tp / (2.0 * tp + fp + fn_)
            }
        })
        .sum();
    f1s / labels.len() as f64
}

/// Mean absolute percentage error as a fraction; denominators are floored at
/// machine epsilon.
pub fn mape(truth: &[f64], pred: &[f64]) -> f64 {
    let sum: f64 = truth
        .iter()
        .zip(pred)
        .map(|(t, p)| (t - p).abs() / t.abs().max(f64::EPSILON))
        .sum();
    sum / truth.len().max(1) as f64
}

/// Trains a decision tree and a random forest on `synthetic` and scores them
/// on `real_test`.
pub fn eval_utility(synthetic: &Table, real_test: &Table, seed: u64) -> Result<UtilityReport, EvalError> {
    let schema = synthetic.schema();
    if schema != real_test.schema() {
        return Err(EvalError::SchemaMismatch);
    }
    let target = schema.target_index().ok_or(EvalError::NoTarget)?;
    if synthetic.is_empty() || real_test.is_empty() {
        return Err(EvalError::EmptyTable);
    }
    let encoder = OneHotEncoder::fit(&[synthetic, real_test], Some(target));
    let x_train = encoder.transform(synthetic);
    let x_test = encoder.transform(real_test);
    let tree_params = TreeParams {
        max_depth: TREE_MAX_DEPTH,
        ..TreeParams::default()
    };
    let mut rng = record_rng(seed, u64::MAX);

    match schema.task {
        Task::Classification => {
            let mut classes: Vec<&str> = Vec::new();
            for v in synthetic.column(target).chain(real_test.column(target)) {
                let c = v.as_cat().unwrap_or_default();
                if !classes.contains(&c) {
                    classes.push(c);
                }
            }
            let encode = |t: &Table| -> Vec<usize> {
                t.column(target)
                    .map(|v| classes.iter().position(|c| Some(*c) == v.as_cat()).expect("class collected"))
                    .collect()
            };
            let y_train = encode(synthetic);
            let y_test = encode(real_test);
            let mut distinct = y_train.clone();
            distinct.sort_unstable();
            distinct.dedup();
            if distinct.len() < 2 {
                return Err(EvalError::DegenerateTarget(schema.features[target].name.clone()));
            }
            let labels = Labels::Classes {
                y: &y_train,
                n_classes: classes.len(),
            };
            let dt = DecisionTree::fit(&x_train, &labels, &tree_params, &mut rng);
            let rf = RandomForest::fit(&x_train, &labels, RandomForest::DEFAULT_TREES, TREE_MAX_DEPTH, seed);
            let score = |pred: Vec<usize>| ModelScores::Classification {
                accuracy: accuracy(&y_test, &pred),
                macro_f1: macro_f1(&y_test, &pred),
            };
            Ok(UtilityReport {
                decision_tree: score(x_test.iter().map(|r| dt.predict_one(r) as usize).collect()),
                random_forest: score(x_test.iter().map(|r| rf.predict_one(r) as usize).collect()),
            })
        }
        Task::Regression => {
            let y_train: Vec<f64> = synthetic.column(target).filter_map(Value::as_num).collect();
            let y_test: Vec<f64> = real_test.column(target).filter_map(Value::as_num).collect();
            let labels = Labels::Values(&y_train);
            let dt = DecisionTree::fit(&x_train, &labels, &tree_params, &mut rng);
            let rf = RandomForest::fit(&x_train, &labels, RandomForest::DEFAULT_TREES, TREE_MAX_DEPTH, seed);
            let score = |pred: Vec<f64>| ModelScores::Regression { mape: mape(&y_test, &pred) };
            Ok(UtilityReport {
                decision_tree: score(x_test.iter().map(|r| dt.predict_one(r)).collect()),
                random_forest: score(x_test.iter().map(|r| rf.predict_one(r)).collect()),
            })
        }
        Task::None => Err(EvalError::NoTarget),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealismReport {
    pub model: String,
    pub mean_accuracy: f64,
    pub sd_accuracy: f64,
    pub fold_accuracy: Vec<f64>,
    pub rows_per_class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Protocol notes needed to interpret the numbers.
    pub notes: Vec<String>,
    pub utility: Option<UtilityReport>,
    pub realism: Option<RealismReport>,
    pub privacy: Option<DcrSummary>,
    pub fidelity: Vec<ViolationReport>,
}

impl MetricReport {
    pub fn protocol_notes() -> Vec<String> {
        vec![
            "realism: L2-regularized logistic regression discriminator, 5-fold CV on class-balanced folds, one-hot categoricals, standardized features".into(),
            "privacy: DCR is L1 over min-max scaled numericals (training range) plus a 0/1 mismatch per categorical feature".into(),
            format!(
                "utility: CART depth {TREE_MAX_DEPTH}, random forest of {} bootstrap trees with sqrt(F) features per split; train on synthetic, test on real",
                RandomForest::DEFAULT_TREES
            ),
        ]
    }
}

/// Runs every applicable metric family.
pub fn evaluate(
    synthetic: &Table,
    real_train: &Table,
    real_test: Option<&Table>,
    constraints: &[Constraint],
    seed: u64,
) -> Result<MetricReport, EvalError> {
    let mut notes = MetricReport::protocol_notes();
    let utility = match real_test {
        Some(test) if synthetic.schema().target_index().is_some() => Some(eval_utility(synthetic, test, seed)?),
        _ => {
            notes.push("utility: skipped (needs a target and a real test table)".into());
            None
        }
    };
    let realism = match eval_discriminator(synthetic, real_train, seed) {
        Ok(d) => Some(RealismReport {
            model: "logistic_regression".into(),
            mean_accuracy: d.mean_accuracy,
            sd_accuracy: d.sd_accuracy,
            fold_accuracy: d.fold_accuracy,
            rows_per_class: d.rows_per_class,
        }),
        Err(EvalError::TooFewRows { .. }) => {
            notes.push("realism: skipped (fewer than 5 rows per class)".into());
            None
        }
        Err(e) => return Err(e),
    };
    let privacy = Some(eval_dcr(synthetic, real_train)?);
    let fidelity = constraints
        .iter()
        .map(|c| eval_violations(synthetic, c))
        .collect::<Result<_, _>>()?;
    Ok(MetricReport {
        notes,
        utility,
        realism,
        privacy,
        fidelity,
    })
}
