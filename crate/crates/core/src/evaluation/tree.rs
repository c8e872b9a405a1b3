//! CART decision trees (Gini / variance reduction) and bagged forests.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::sampler::record_rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Features considered per split; `None` considers all.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 8,
            min_samples_split: 2,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Labels<'a> {
    Classes { y: &'a [usize], n_classes: usize },
    Values(&'a [f64]),
}

impl Labels<'_> {
    fn len(&self) -> usize {
        match self {
            Labels::Classes { y, .. } => y.len(),
            Labels::Values(y) => y.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

/// Running impurity statistics of one side of a split.
#[derive(Clone)]
enum Stats {
    Gini { counts: Vec<f64>, n: f64 },
    Var { sum: f64, sum_sq: f64, n: f64 },
}

impl Stats {
    fn empty(labels: &Labels) -> Self {
        match labels {
            Labels::Classes { n_classes, .. } => Stats::Gini {
                counts: vec![0.0; *n_classes],
                n: 0.0,
            },
            Labels::Values(_) => Stats::Var {
                sum: 0.0,
                sum_sq: 0.0,
                n: 0.0,
            },
        }
    }

    fn add(&mut self, labels: &Labels, i: usize, sign: f64) {
        match (self, labels) {
            (Stats::Gini { counts, n }, Labels::Classes { y, .. }) => {
                counts[y[i]] += sign;
                *n += sign;
            }
            (Stats::Var { sum, sum_sq, n }, Labels::Values(y)) => {
                *sum += sign * y[i];
                *sum_sq += sign * y[i] * y[i];
                *n += sign;
            }
            _ => unreachable!("stats and labels agree"),
        }
    }

    fn n(&self) -> f64 {
        match self {
            Stats::Gini { n, .. } | Stats::Var { n, .. } => *n,
        }
    }

    /// Impurity times sample count.
    fn weighted_impurity(&self) -> f64 {
        match self {
            Stats::Gini { counts, n } => {
                if *n <= 0.0 {
                    return 0.0;
                }
                let sq: f64 = counts.iter().map(|c| c * c).sum();
                n - sq / n
            }
            Stats::Var { sum, sum_sq, n } => {
                if *n <= 0.0 {
                    return 0.0;
                }
                (sum_sq - sum * sum / n).max(0.0)
            }
        }
    }

    fn leaf_value(&self) -> f64 {
        match self {
            Stats::Gini { counts, .. } => counts
                .iter()
                .enumerate()
                .fold(0, |b, (i, &c)| if c > counts[b] { i } else { b }) as f64,
            Stats::Var { sum, n, .. } => sum / n,
        }
    }
}

impl DecisionTree {
    pub fn fit(x: &[Vec<f64>], labels: &Labels, params: &TreeParams, rng: &mut ChaCha8Rng) -> Self {
        assert_eq!(x.len(), labels.len());
        assert!(!x.is_empty(), "cannot fit a tree on no samples");
        let mut tree = DecisionTree { nodes: Vec::new() };
        let idx: Vec<usize> = (0..x.len()).collect();
        tree.grow(x, labels, idx, 0, params, rng);
        tree
    }

    fn grow(
        &mut self,
        x: &[Vec<f64>],
        labels: &Labels,
        idx: Vec<usize>,
        depth: usize,
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let mut stats = Stats::empty(labels);
        for &i in &idx {
            stats.add(labels, i, 1.0);
        }
        let node = self.nodes.len();
        self.nodes.push(Node::Leaf(stats.leaf_value()));
        let parent_impurity = stats.weighted_impurity();
        if depth >= params.max_depth || idx.len() < params.min_samples_split || parent_impurity <= 1e-12 {
            return node;
        }

        let n_features = x[0].len();
        let features: Vec<usize> = match params.max_features {
            Some(m) if m < n_features => sample(rng, n_features, m.max(1)).into_vec(),
            _ => (0..n_features).collect(),
        };

        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted = idx.clone();
        for &f in &features {
            sorted.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
            let mut left = Stats::empty(labels);
            let mut right = stats.clone();
            for w in 0..sorted.len() - 1 {
                let i = sorted[w];
                left.add(labels, i, 1.0);
                right.add(labels, i, -1.0);
                let (a, b) = (x[i][f], x[sorted[w + 1]][f]);
                if a == b {
                    continue;
                }
                let child = left.weighted_impurity() + right.weighted_impurity();
                let gain = parent_impurity - child;
                if gain > 1e-12 && best.map_or(true, |(g, _, _)| gain > g) {
                    best = Some((gain, f, 0.5 * (a + b)));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return node;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| x[i][feature] <= threshold);
        debug_assert!(left_right_nonempty(&l, &r, stats.n()));
        let left = self.grow(x, labels, l, depth + 1, params, rng);
        let right = self.grow(x, labels, r, depth + 1, params, rng);
        self.nodes[node] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        node
    }

    /// Predicted class index (as f64) or regression value.
    pub fn predict_one(&self, row: &[f64]) -> f64 {
        let mut n = 0;
        loop {
            match &self.nodes[n] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => n = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], n: usize) -> usize {
            match &nodes[n] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

fn left_right_nonempty(l: &[usize], r: &[usize], n: f64) -> bool {
    !l.is_empty() && !r.is_empty() && (l.len() + r.len()) as f64 == n
}

/// Bootstrap-aggregated trees with per-split feature subsampling.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    n_classes: Option<usize>,
}

impl RandomForest {
    pub const DEFAULT_TREES: usize = 25;

    pub fn fit(x: &[Vec<f64>], labels: &Labels, n_trees: usize, max_depth: usize, seed: u64) -> Self {
        let n = x.len();
        let n_features = x.first().map_or(0, Vec::len);
        let params = TreeParams {
            max_depth,
            min_samples_split: 2,
            max_features: Some(((n_features as f64).sqrt() as usize).max(1)),
        };
        let trees = (0..n_trees as u64)
            .map(|t| {
                let mut rng = record_rng(seed, t);
                let boot: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                let bx: Vec<Vec<f64>> = boot.iter().map(|&i| x[i].clone()).collect();
                match labels {
                    Labels::Classes { y, n_classes } => {
                        let by: Vec<usize> = boot.iter().map(|&i| y[i]).collect();
                        DecisionTree::fit(&bx, &Labels::Classes { y: &by, n_classes: *n_classes }, &params, &mut rng)
                    }
                    Labels::Values(y) => {
                        let by: Vec<f64> = boot.iter().map(|&i| y[i]).collect();
                        DecisionTree::fit(&bx, &Labels::Values(&by), &params, &mut rng)
                    }
                }
            })
            .collect();
        let n_classes = match labels {
            Labels::Classes { n_classes, .. } => Some(*n_classes),
            Labels::Values(_) => None,
        };
        Self { trees, n_classes }
    }

    /// Majority vote (lowest class wins ties) or mean prediction.
    pub fn predict_one(&self, row: &[f64]) -> f64 {
        match self.n_classes {
            Some(k) => {
                let mut votes = vec![0usize; k];
                for t in &self.trees {
                    votes[t.predict_one(row) as usize] += 1;
                }
                votes
                    .iter()
                    .enumerate()
                    .fold(0, |b, (i, &v)| if v > votes[b] { i } else { b }) as f64
            }
            None => self.trees.iter().map(|t| t.predict_one(row)).sum::<f64>() / self.trees.len() as f64,
        }
    }
}
