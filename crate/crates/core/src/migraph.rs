//! Mutual-information dependency graph over pseudo-features.
//!
//! All probabilities are plug-in frequencies over the expanded training split
//! and every quantity is in nats. Pairs of pseudo-features that share a parent
//! feature are mutually exclusive by construction; they are stored as zero and
//! left out of every aggregate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Table;
use crate::pseudofeatures::{quantile_sorted, BinError, BinLayout, PseudoId, PseudoVector};

/// How `MI(pseudo-feature, target feature)` is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMiMode {
    /// MI between the indicator and the target's bin-index variable.
    #[default]
    MultiClass,
    /// Largest pairwise MI between the indicator and any target bin.
    MaxOverBins,
}

/// Which population of MI values the default threshold is the median of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TauSource {
    #[default]
    FeatureLevel,
    PseudoPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct MiConfig {
    pub feature_mi: FeatureMiMode,
    pub tau_source: TauSource,
    /// Fixed threshold; `None` uses the median rule.
    pub tau: Option<f64>,
}

/// Row count, per-pseudo-feature activation counts and pairwise
/// co-activation counts of an expanded table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cooccurrence {
    pub rows: u64,
    pub num_pseudo: usize,
    pub marginal: Vec<u64>,
    /// Row-major `num_pseudo x num_pseudo` matrix.
    pub joint: Vec<u64>,
}

impl Cooccurrence {
    pub fn count(expanded: &[PseudoVector], num_pseudo: usize) -> Self {
        let mut rows_with: Vec<Vec<usize>> = vec![Vec::new(); num_pseudo];
        let mut marginal = vec![0u64; num_pseudo];
        for (r, pv) in expanded.iter().enumerate() {
            for id in &pv.active {
                rows_with[id.0].push(r);
                marginal[id.0] += 1;
            }
        }
        let joint: Vec<u64> = rows_with
            .par_iter()
            .flat_map_iter(|rows| {
                let mut line = vec![0u64; num_pseudo];
                for &r in rows {
                    for id in &expanded[r].active {
                        line[id.0] += 1;
                    }
                }
                line
            })
            .collect();
        Self {
            rows: expanded.len() as u64,
            num_pseudo,
            marginal,
            joint,
        }
    }

    pub fn joint(&self, a: PseudoId, b: PseudoId) -> u64 {
        self.joint[a.0 * self.num_pseudo + b.0]
    }

    pub fn marginal(&self, a: PseudoId) -> u64 {
        self.marginal[a.0]
    }
}

/// Plug-in MI of a contingency table of counts; empty cells contribute 0.
pub fn contingency_mi(table: &[Vec<u64>]) -> f64 {
    let n: u64 = table.iter().flatten().sum();
    if n == 0 {
        return 0.0;
    }
    let cols = table.first().map_or(0, Vec::len);
    let row_sums: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<u64> = (0..cols).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let n = n as f64;
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += (c / n) * ((c * n) / (row_sums[i] as f64 * col_sums[j] as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// MI of two binary indicators from their activation counts.
pub fn binary_mi(rows: u64, count_a: u64, count_b: u64, both: u64) -> f64 {
    let n11 = both;
    let n10 = count_a - both;
    let n01 = count_b - both;
    let n00 = rows + both - count_a - count_b;
    contingency_mi(&[vec![n00, n01], vec![n10, n11]])
}

/// Binary entropy (nats) of an indicator active in `count` of `rows` rows.
pub fn indicator_entropy(rows: u64, count: u64) -> f64 {
    let h = |p: f64| if p > 0.0 { -p * p.ln() } else { 0.0 };
    let p = count as f64 / rows as f64;
    h(p) + h(1.0 - p)
}

/// Median with the even-count convention of averaging the two middle values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiGraph {
    pub feature_names: Vec<String>,
    /// Parent feature of each pseudo-feature.
    pub parent: Vec<usize>,
    /// Row-major symmetric pseudo x pseudo matrix.
    pub mi: Vec<f64>,
    /// Row-major pseudo x feature matrix of feature-level MI.
    pub feature_mi: Vec<f64>,
    pub tau: f64,
    pub mu_train: Vec<f64>,
    pub config: MiConfig,
}

impl MiGraph {
    pub fn estimate(train: &Table, layout: &BinLayout, config: MiConfig) -> Result<Self, BinError> {
        let expanded = layout.expand_table(train)?;
        let counts = Cooccurrence::count(&expanded, layout.num_pseudo());
        Ok(Self::from_counts(&counts, layout, config))
    }

    pub fn from_counts(counts: &Cooccurrence, layout: &BinLayout, config: MiConfig) -> Self {
        let p = layout.num_pseudo();
        let f = layout.num_features();
        let parent: Vec<usize> = layout.ids.iter().map(|s| s.feature).collect();

        let mi: Vec<f64> = (0..p)
            .into_par_iter()
            .flat_map_iter(|a| {
                let parent = &parent;
                (0..p).map(move |b| {
                    if parent[a] == parent[b] {
                        0.0
                    } else {
                        // canonical order keeps the matrix exactly symmetric
                        let (lo, hi) = (PseudoId(a.min(b)), PseudoId(a.max(b)));
                        binary_mi(counts.rows, counts.marginal(lo), counts.marginal(hi), counts.joint(lo, hi))
                    }
                })
            })
            .collect();

        let feature_mi: Vec<f64> = (0..p)
            .into_par_iter()
            .flat_map_iter(|a| {
                let parent = &parent;
                let mi = &mi;
                (0..f).map(move |t| {
                    if parent[a] == t {
                        return 0.0;
                    }
                    match config.feature_mi {
                        FeatureMiMode::MultiClass => {
                            let n_a = counts.marginal(PseudoId(a));
                            let mut active = Vec::new();
                            let mut inactive = Vec::new();
                            for q in layout.ids_of(t) {
                                let both = counts.joint(PseudoId(a), q);
                                active.push(both);
                                inactive.push(counts.marginal(q) - both);
                            }
                            debug_assert_eq!(active.iter().sum::<u64>(), n_a);
                            contingency_mi(&[inactive, active])
                        }
                        FeatureMiMode::MaxOverBins => layout
                            .ids_of(t)
                            .map(|q| mi[a * p + q.0])
                            .fold(0.0, f64::max),
                    }
                })
            })
            .collect();

        let mut graph = Self {
            feature_names: layout.features.iter().map(|l| l.name.clone()).collect(),
            parent,
            mi,
            feature_mi,
            tau: 0.0,
            mu_train: Vec::new(),
            config,
        };
        graph.mu_train = (0..f).map(|t| graph.mean_feature_mi(t)).collect();
        graph.tau = match config.tau {
            Some(tau) => tau,
            None => graph.default_tau(),
        };
        graph
    }

    pub fn num_pseudo(&self) -> usize {
        self.parent.len()
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn mi(&self, a: PseudoId, b: PseudoId) -> f64 {
        self.mi[a.0 * self.num_pseudo() + b.0]
    }

    /// MI between pseudo-feature `pseudo` and target feature index `target`;
    /// zero when the pseudo-feature belongs to the target itself.
    pub fn feature_level_mi(&self, pseudo: PseudoId, target: usize) -> f64 {
        self.feature_mi[pseudo.0 * self.num_features() + target]
    }

    /// All cross-feature `(pseudo-feature, target feature)` values.
    pub fn feature_level_values(&self) -> Vec<f64> {
        let f = self.num_features();
        (0..self.num_pseudo())
            .flat_map(|a| {
                (0..f)
                    .filter(move |&t| self.parent[a] != t)
                    .map(move |t| self.feature_level_mi(PseudoId(a), t))
            })
            .collect()
    }

    /// Pairwise MI over unordered cross-feature pseudo pairs.
    pub fn pairwise_values(&self) -> Vec<f64> {
        let p = self.num_pseudo();
        (0..p)
            .flat_map(|a| {
                ((a + 1)..p)
                    .filter(move |&b| self.parent[a] != self.parent[b])
                    .map(move |b| self.mi[a * p + b])
            })
            .collect()
    }

    /// Median of the configured MI population, or 0 when there is none.
    pub fn default_tau(&self) -> f64 {
        let values = match self.config.tau_source {
            TauSource::FeatureLevel => self.feature_level_values(),
            TauSource::PseudoPairs => self.pairwise_values(),
        };
        median(&values).unwrap_or_else(|| {
            log::warn!("no cross-feature MI values; threshold defaults to 0");
            0.0
        })
    }

    /// `q`-quantile (linear interpolation) of the feature-level MI values.
    pub fn tau_quantile(&self, q: f64) -> f64 {
        let mut v = self.feature_level_values();
        if v.is_empty() {
            return 0.0;
        }
        v.sort_by(f64::total_cmp);
        quantile_sorted(&v, q)
    }

    fn mean_feature_mi(&self, target: usize) -> f64 {
        let vals: Vec<f64> = (0..self.num_pseudo())
            .filter(|&a| self.parent[a] != target)
            .map(|a| self.feature_level_mi(PseudoId(a), target))
            .collect();
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }

    pub fn mu_train(&self, target: usize) -> f64 {
        self.mu_train[target]
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn with_tau(&self, tau: f64) -> Self {
        Self {
            tau,
            ..self.clone()
        }
    }

    /// Writes `pseudo_id_a,pseudo_id_b,mi` for every unordered pair.
    pub fn write_pairs_csv<W: std::io::Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["pseudo_id_a", "pseudo_id_b", "mi"])?;
        let p = self.num_pseudo();
        for a in 0..p {
            for b in (a + 1)..p {
                w.write_record([a.to_string(), b.to_string(), self.mi[a * p + b].to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Feature-level aggregates as a JSON document.
    pub fn aggregates_json(&self, layout: &BinLayout) -> serde_json::Value {
        let entries: Vec<serde_json::Value> = (0..self.num_pseudo())
            .flat_map(|a| {
                let slot = layout.ids[a];
                (0..self.num_features())
                    .filter(move |&t| t != slot.feature)
                    .map(move |t| {
                        serde_json::json!({
                            "pseudo_id": a,
                            "feature": self.feature_names[slot.feature],
                            "slot": slot.local,
                            "target": self.feature_names[t],
                            "mi": self.feature_level_mi(PseudoId(a), t),
                        })
                    })
            })
            .collect();
        let mu: serde_json::Map<String, serde_json::Value> = self
            .feature_names
            .iter()
            .zip(&self.mu_train)
            .map(|(n, m)| (n.clone(), serde_json::json!(m)))
            .collect();
        serde_json::json!({
            "tau": self.tau,
            "tau_source": self.config.tau_source,
            "feature_mi_mode": self.config.feature_mi,
            "mu_train": mu,
            "feature_mi": entries,
        })
    }
}
