#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tabguide::dataset::load_table;
use tabguide::{FeatureKind, FeatureSchema, FeatureSpec, Record, Table, Task, Value};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}

pub fn iris() -> Table {
    let schema = FeatureSchema::from_json_file(data_dir().join("iris.schema.json")).unwrap();
    load_table(data_dir().join("iris.csv"), &schema).unwrap()
}

pub fn table(specs: Vec<FeatureSpec>, target: Option<&str>, task: Task, rows: Vec<Record>) -> Table {
    let schema = FeatureSchema::new(specs, target.map(str::to_string), task).unwrap();
    Table::new(Arc::new(schema), rows).unwrap()
}

pub fn num(x: f64) -> Value {
    Value::Num(x)
}

pub fn cat(s: &str) -> Value {
    Value::Cat(s.to_string())
}

/// Small random mixed table with coarse values so ties and edge bins occur.
pub fn random_table(rng: &mut ChaCha8Rng, max_rows: usize, max_features: usize) -> Table {
    let n = rng.gen_range(2..=max_rows);
    let f = rng.gen_range(1..=max_features);
    let kinds: Vec<FeatureKind> = (0..f)
        .map(|_| {
            if rng.gen_bool(0.5) {
                FeatureKind::Numerical
            } else {
                FeatureKind::Categorical
            }
        })
        .collect();
    let specs = kinds
        .iter()
        .enumerate()
        .map(|(i, k)| FeatureSpec {
            name: format!("f{i}"),
            kind: *k,
        })
        .collect();
    let levels: Vec<u32> = (0..f).map(|_| rng.gen_range(1..=4)).collect();
    let rows = (0..n)
        .map(|_| {
            kinds
                .iter()
                .zip(&levels)
                .map(|(k, &m)| match k {
                    FeatureKind::Numerical => num(rng.gen_range(0..=8) as f64 * 0.5 - 1.0),
                    FeatureKind::Categorical => cat(&format!("c{}", rng.gen_range(0..m))),
                })
                .collect()
        })
        .collect();
    table(specs, None, Task::None, rows)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Straightforward re-derivation of the pseudo-feature indicators from raw
/// rows: one column of 0/1 per pseudo-feature, plus each one's parent.
pub struct OracleIndicators {
    pub parent: Vec<usize>,
    pub columns: Vec<Vec<bool>>,
}

fn type7(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() as f64 - 1.0);
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

pub fn oracle_bin_count(values: &[f64]) -> usize {
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let range = s[s.len() - 1] - s[0];
    let iqr = type7(&s, 0.75) - type7(&s, 0.25);
    if range == 0.0 || iqr == 0.0 {
        return 1;
    }
    let h = 2.0 * iqr / (s.len() as f64).cbrt();
    ((range / h).ceil() as usize).clamp(1, 16)
}

pub fn oracle_indicators(t: &Table) -> OracleIndicators {
    let mut parent = Vec::new();
    let mut columns = Vec::new();
    for (f, spec) in t.schema().features.iter().enumerate() {
        match spec.kind {
            FeatureKind::Numerical => {
                let v: Vec<f64> = t.rows().iter().map(|r| r[f].as_num().unwrap()).collect();
                let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let k = if hi > lo { oracle_bin_count(&v) } else { 1 };
                let w = (hi - lo) / k as f64;
                for b in 0..k {
                    let a0 = lo + b as f64 * w;
                    let a1 = if b + 1 == k { hi } else { lo + (b + 1) as f64 * w };
                    let last = b + 1 == k;
                    parent.push(f);
                    columns.push(
                        v.iter()
                            .map(|&x| x >= a0 && (x < a1 || (last && x <= a1)))
                            .collect(),
                    );
                }
            }
            FeatureKind::Categorical => {
                let mut cats: Vec<String> = Vec::new();
                for r in t.rows() {
                    let c = r[f].as_cat().unwrap().to_string();
                    if !cats.contains(&c) {
                        cats.push(c);
                    }
                }
                for c in cats {
                    parent.push(f);
                    columns.push(t.rows().iter().map(|r| r[f].as_cat() == Some(c.as_str())).collect());
                }
            }
        }
    }
    OracleIndicators { parent, columns }
}

fn entropy_of_labels(labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    let mut counts = std::collections::HashMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// I(X;Y) = H(X) + H(Y) - H(X,Y) over two label sequences.
pub fn oracle_mi(x: &[usize], y: &[usize]) -> f64 {
    let joint: Vec<usize> = x.iter().zip(y).map(|(a, b)| a * 1000 + b).collect();
    (entropy_of_labels(x) + entropy_of_labels(y) - entropy_of_labels(&joint)).max(0.0)
}

pub fn bits(col: &[bool]) -> Vec<usize> {
    col.iter().map(|&b| b as usize).collect()
}

/// Label sequence of a whole feature (index of the active bin per row).
pub fn feature_labels(ind: &OracleIndicators, feature: usize) -> Vec<usize> {
    let members: Vec<usize> = (0..ind.parent.len()).filter(|&p| ind.parent[p] == feature).collect();
    let n = ind.columns[0].len();
    (0..n)
        .map(|r| members.iter().position(|&p| ind.columns[p][r]).unwrap())
        .collect()
}

/// Total variation distance between two empirical categorical distributions.
pub fn tv_distance<T: PartialEq + Clone>(a: &[T], b: &[T]) -> f64 {
    let mut support: Vec<T> = Vec::new();
    for v in a.iter().chain(b) {
        if !support.contains(v) {
            support.push(v.clone());
        }
    }
    0.5 * support
        .iter()
        .map(|s| {
            let pa = a.iter().filter(|v| *v == s).count() as f64 / a.len() as f64;
            let pb = b.iter().filter(|v| *v == s).count() as f64 / b.len() as f64;
            (pa - pb).abs()
        })
        .sum::<f64>()
}

/// Generator with a planted dependency: `b` depends on `a < 0.5`, `noise`
/// is independent of both.
pub fn planted_table(n: usize, seed: u64) -> Table {
    let mut r = rng(seed);
    let specs = vec![
        FeatureSpec::numerical("a"),
        FeatureSpec::categorical("b"),
        FeatureSpec::categorical("noise"),
    ];
    let rows = (0..n)
        .map(|_| {
            let a: f64 = r.gen();
            let probs = if a < 0.5 { [0.7, 0.2, 0.1] } else { [0.1, 0.2, 0.7] };
            let u: f64 = r.gen();
            let b = if u < probs[0] {
                "x"
            } else if u < probs[0] + probs[1] {
                "y"
            } else {
                "z"
            };
            let noise = ["n0", "n1", "n2", "n3"][r.gen_range(0..4)];
            vec![num(a), cat(b), cat(noise)]
        })
        .collect();
    table(specs, None, Task::None, rows)
}

/// Conditional distribution of `b` given `a < 0.5` and `a >= 0.5`, as
/// `[p(x), p(y), p(z)]` pairs.
pub fn conditional_b(t: &Table) -> ([f64; 3], [f64; 3]) {
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for r in t.rows() {
        let a = r[0].as_num().unwrap();
        let i = match r[1].as_cat().unwrap() {
            "x" => 0,
            "y" => 1,
            _ => 2,
        };
        if a < 0.5 {
            lo[i] += 1.0;
        } else {
            hi[i] += 1.0;
        }
    }
    let norm = |v: [f64; 3]| {
        let s: f64 = v.iter().sum::<f64>().max(1.0);
        [v[0] / s, v[1] / s, v[2] / s]
    };
    (norm(lo), norm(hi))
}

/// Total variation between the two conditionals of `b`: how strongly a
/// table carries the planted dependency (0.6 in the generator).
pub fn planted_strength(t: &Table) -> f64 {
    let (lo, hi) = conditional_b(t);
    0.5 * lo.iter().zip(&hi).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
