//! Fitted synthesis state: bins, dependency graph, backend and the per-bin
//! value pools used to turn a sampled bin back into a concrete number.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BuiltinBackend, BuiltinState, DEFAULT_SMOOTHING};
use crate::dataset::{FeatureSchema, Table, Value};
use crate::guidance::GuidanceConfig;
use crate::migraph::{MiConfig, MiGraph};
use crate::pseudofeatures::{BinLayout, BinningMode, FeatureBins, PseudoId};
use crate::Error;

/// Below this many distinct training values a bin is sampled uniformly over
/// its interval instead of from its empirical values.
pub const MIN_DISTINCT_FOR_EMPIRICAL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub binning: BinningMode,
    pub mi: MiConfig,
    pub smoothing: f64,
    pub guidance: GuidanceConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            binning: BinningMode::FreedmanDiaconis,
            mi: MiConfig::default(),
            smoothing: DEFAULT_SMOOTHING,
            guidance: GuidanceConfig::default(),
        }
    }
}

/// Training values of every numerical bin, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct ValuePools {
    pools: Vec<Vec<f64>>,
    distinct: Vec<usize>,
}

impl ValuePools {
    pub fn build(train: &Table, layout: &BinLayout) -> Result<Self, Error> {
        let mut pools = vec![Vec::new(); layout.num_pseudo()];
        for row in train.rows() {
            for (f, v) in row.iter().enumerate() {
                if let Value::Num(x) = v {
                    pools[layout.assign(f, v)?.0].push(*x);
                }
            }
        }
        for p in &mut pools {
            p.sort_by(f64::total_cmp);
        }
        let distinct = pools
            .iter()
            .map(|p| {
                let mut d = p.clone();
                d.dedup();
                d.len()
            })
            .collect();
        Ok(Self { pools, distinct })
    }

    pub fn values(&self, id: PseudoId) -> &[f64] {
        &self.pools[id.0]
    }

    /// Draws a value inside numerical bin `id`.
    pub fn draw<R: Rng + ?Sized>(&self, layout: &BinLayout, id: PseudoId, rng: &mut R) -> f64 {
        let pool = &self.pools[id.0];
        if self.distinct[id.0] >= MIN_DISTINCT_FOR_EMPIRICAL {
            return pool[rng.gen_range(0..pool.len())];
        }
        let slot = layout.slot(id);
        let (lo, hi, closed) = layout
            .bin_interval(slot.feature, slot.local)
            .expect("value pools only hold numerical bins");
        if hi <= lo {
            lo
        } else if closed {
            rng.gen_range(lo..=hi)
        } else {
            rng.gen_range(lo..hi)
        }
    }
}

/// Everything needed to synthesize records. Cheap to clone.
#[derive(Clone)]
pub struct Engine {
    pub config: EngineConfig,
    pub train: Table,
    pub layout: Arc<BinLayout>,
    pub graph: Arc<MiGraph>,
    pub builtin: Arc<BuiltinState>,
    pub backend: Arc<dyn Backend>,
    pub pools: Arc<ValuePools>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("config", &self.config)
            .field("rows", &self.train.len())
            .field("pseudo_features", &self.layout.num_pseudo())
            .field("backend", &self.backend.name())
            .finish()
    }
}

impl Engine {
    pub fn fit(train: Table, config: EngineConfig) -> Result<Self, Error> {
        config.guidance.validate()?;
        let layout = BinLayout::fit(&train, config.binning)?;
        let graph = MiGraph::estimate(&train, &layout, config.mi)?;
        let builtin = BuiltinState::fit(&train, &layout, config.smoothing)?;
        Self::from_parts(train, config, layout, graph, builtin)
    }

    pub fn from_parts(
        train: Table,
        config: EngineConfig,
        layout: BinLayout,
        graph: MiGraph,
        builtin: BuiltinState,
    ) -> Result<Self, Error> {
        let layout = Arc::new(layout);
        let builtin = Arc::new(builtin);
        let pools = Arc::new(ValuePools::build(&train, &layout)?);
        let backend: Arc<dyn Backend> =
            Arc::new(BuiltinBackend::new(Arc::clone(&layout), Arc::clone(&builtin)));
        Ok(Self {
            config,
            train,
            layout,
            graph: Arc::new(graph),
            builtin,
            backend,
            pools,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        self.train.schema()
    }

    pub fn with_backend(mut self, backend: Arc<dyn Backend>) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_guidance(mut self, guidance: GuidanceConfig) -> Result<Self, Error> {
        guidance.validate()?;
        self.config.guidance = guidance;
        Ok(self)
    }

    /// Built-in counts with context ignored.
    pub fn marginal_backend(&self) -> Arc<dyn Backend> {
        Arc::new(BuiltinBackend::context_free(
            Arc::clone(&self.layout),
            Arc::clone(&self.builtin),
        ))
    }

    pub fn builtin_backend(&self) -> Arc<dyn Backend> {
        Arc::new(BuiltinBackend::new(
            Arc::clone(&self.layout),
            Arc::clone(&self.builtin),
        ))
    }

    /// Effective selector threshold for this engine.
    pub fn tau(&self) -> f64 {
        self.config.guidance.tau_for(&self.graph)
    }

    /// Training frequency of each legal value of `feature`, used when no
    /// legal candidate could be obtained from the backend.
    pub fn marginal_counts(&self, feature: usize) -> Vec<u64> {
        self.layout
            .ids_of(feature)
            .map(|id| self.builtin.counts.marginal(id))
            .collect()
    }

    /// Whether `value` is legal for `feature`: a known category, or a number
    /// within the training range.
    pub fn is_legal(&self, feature: usize, value: &Value) -> bool {
        match (&self.layout.features[feature].bins, value) {
            (FeatureBins::Numeric { cuts }, Value::Num(v)) => {
                v.is_finite() && *v >= cuts[0] && *v <= cuts[cuts.len() - 1]
            }
            (FeatureBins::Categorical { categories }, Value::Cat(c)) => categories.contains(c),
            _ => false,
        }
    }
}
