mod common;

use std::collections::HashSet;
use std::sync::Arc;

use common::*;
use rand::Rng;
use tabguide::backend::{BackendError, CandidateDistribution};
use tabguide::sampler::{constrain, nucleus, nucleus_sample, sample_record, synthesize, SampleError};
use tabguide::{
    Backend, ContextPair, Engine, EngineConfig, FeatureSpec, GuidanceConfig, GuidanceMode, PrefixMode, SamplerConfig,
    Task, Value,
};

fn iris_engine() -> Engine {
    Engine::fit(iris(), EngineConfig::default()).unwrap()
}

#[test]
fn prompt_only_records_fill_every_feature_legally() {
    let engine = iris_engine();
    let records = synthesize(&engine, 120, &SamplerConfig::default()).unwrap();
    assert_eq!(records.len(), 120);
    let labels: HashSet<&str> = engine.train.column(4).filter_map(Value::as_cat).collect();
    for r in &records {
        assert_eq!(r.values.len(), 5);
        assert!(labels.contains(r.values[4].as_cat().unwrap()));
        for (f, v) in r.values.iter().enumerate() {
            assert!(engine.is_legal(f, v), "{v:?} illegal for feature {f}");
            if let Value::Num(x) = v {
                let (lo, hi) = engine.layout.range(f).unwrap();
                assert!(*x >= lo && *x <= hi);
            }
        }
        let mut order = r.order.clone();
        order.sort_unstable();
        assert_eq!(order, vec![0, 1, 2, 3, 4]);
        assert!(r.provenance.iter().all(|p| p.source == "fs"));
    }
    // orders are drawn fresh per record
    let distinct: HashSet<Vec<usize>> = records.iter().map(|r| r.order.clone()).collect();
    assert!(distinct.len() > 10);
}

#[test]
fn seeded_values_are_copied_verbatim_from_one_training_row() {
    let engine = iris_engine();
    let config = SamplerConfig {
        prefix_mode: PrefixMode::SeedK(2),
        seed: 3,
        ..SamplerConfig::default()
    };
    for i in 0..50 {
        let r = sample_record(&engine, &config, i).unwrap();
        let seeded: Vec<usize> = r.order[..2].to_vec();
        for &f in &seeded {
            assert_eq!(r.provenance[f].source, "seeded");
        }
        let from_one_row = engine
            .train
            .rows()
            .iter()
            .any(|row| seeded.iter().all(|&f| row[f] == r.values[f]));
        assert!(from_one_row);
        assert_eq!(r.provenance.iter().filter(|p| p.source == "seeded").count(), 2);
    }
}

#[test]
fn seed_k_must_leave_a_feature_to_generate() {
    let engine = iris_engine();
    let config = SamplerConfig {
        prefix_mode: PrefixMode::SeedK(5),
        ..SamplerConfig::default()
    };
    assert!(matches!(synthesize(&engine, 1, &config), Err(SampleError::InvalidConfig(_))));
}

#[test]
fn fixed_seed_is_deterministic_and_parallel_matches_serial() {
    let engine = iris_engine();
    let config = SamplerConfig {
        seed: 11,
        ..SamplerConfig::default()
    };
    let a = synthesize(&engine, 64, &config).unwrap();
    let b = synthesize(&engine, 64, &config).unwrap();
    assert_eq!(a, b);
    let serial: Vec<_> = (0..64).map(|i| sample_record(&engine, &config, i).unwrap()).collect();
    assert_eq!(a, serial);
    let other = synthesize(&engine, 64, &SamplerConfig { seed: 12, ..config }).unwrap();
    assert_ne!(a, other);
}

#[test]
fn every_guidance_mode_records_its_provenance() {
    for mode in [GuidanceMode::FeatureSelector, GuidanceMode::LogitCorrection, GuidanceMode::None] {
        let engine = iris_engine()
            .with_guidance(GuidanceConfig {
                mode,
                ..GuidanceConfig::default()
            })
            .unwrap();
        let records = synthesize(&engine, 20, &SamplerConfig::default()).unwrap();
        for r in &records {
            for (pos, &f) in r.order.iter().enumerate() {
                let p = &r.provenance[f];
                assert_eq!(p.source, mode.as_str());
                match mode {
                    GuidanceMode::None | GuidanceMode::LogitCorrection => assert_eq!(p.context_size, pos),
                    GuidanceMode::FeatureSelector => assert!(p.context_size <= pos),
                }
                if mode != GuidanceMode::LogitCorrection {
                    assert!(p.delta.is_none());
                }
            }
        }
    }
}

fn dist(candidates: Vec<Value>, logits: Vec<f64>) -> CandidateDistribution {
    CandidateDistribution {
        target: "species".into(),
        candidates,
        logits,
    }
}

#[test]
fn nucleus_examples() {
    assert_eq!(nucleus(&[0.25; 4], 0.5), vec![0, 1]);
    assert_eq!(nucleus(&[0.1, 0.2, 0.3, 0.4], 1.0).len(), 4);
    assert_eq!(nucleus(&[0.005, 0.99, 0.005], 0.9), vec![1]);
    let d = dist(vec![cat("a"), cat("b"), cat("c")], vec![0.0, 10.0, 0.0]);
    let mut r = rng(0);
    for _ in 0..200 {
        assert_eq!(nucleus_sample(&d, 0.9, 1.0, &mut r), 1);
    }
}

#[test]
fn full_nucleus_sampling_matches_softmax_frequencies() {
    let d = dist(vec![cat("a"), cat("b"), cat("c")], vec![0.0, 1.0, 2.0]);
    let p = tabguide::backend::softmax(&d.logits);
    let mut r = rng(1);
    let n = 60_000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        counts[nucleus_sample(&d, 1.0, 1.0, &mut r)] += 1;
    }
    for i in 0..3 {
        assert!((counts[i] as f64 / n as f64 - p[i]).abs() < 0.01);
    }
}

#[test]
fn constrain_filters_illegal_candidates() {
    let engine = iris_engine();
    let layout = &engine.layout;
    let legal = dist(vec![cat("setosa"), cat("virginica")], vec![1.0, 2.0]);
    assert_eq!(constrain(&legal, layout).unwrap(), legal);
    let mixed = dist(
        vec![cat("setosa"), cat("unicorn"), num(1.0), cat("setosa"), cat("virginica")],
        vec![1.0, 9.0, 9.0, 3.0, f64::NAN],
    );
    let kept = constrain(&mixed, layout).unwrap();
    assert_eq!(kept.candidates, vec![cat("setosa")]);
    assert_eq!(kept.logits, vec![1.0]);
    let none = dist(vec![cat("unicorn")], vec![0.0]);
    assert!(matches!(constrain(&none, layout), Err(SampleError::NoLegalCandidate(_))));
    let out_of_range = CandidateDistribution {
        target: "sepal_length".into(),
        candidates: vec![num(100.0), num(5.0)],
        logits: vec![5.0, 0.0],
    };
    assert_eq!(constrain(&out_of_range, layout).unwrap().candidates, vec![num(5.0)]);
}

/// Proposes mostly illegal values, some legal ones, and sometimes nothing
/// usable at all.
struct Unruly {
    inner: Arc<dyn Backend>,
}

impl Backend for Unruly {
    fn name(&self) -> &str {
        "unruly"
    }

    fn score_candidates(&self, context: &[ContextPair], target: &str) -> Result<CandidateDistribution, BackendError> {
        let mut d = self.inner.score_candidates(context, target)?;
        let roll: f64 = rand::thread_rng().gen();
        if roll < 0.3 {
            return Err(BackendError::Malformed("garbled".into()));
        }
        if roll < 0.5 {
            d.candidates = vec![cat("bogus"), num(-1e9)];
            d.logits = vec![100.0, 100.0];
            return Ok(d);
        }
        d.candidates.push(cat("bogus"));
        d.logits.push(1e6);
        d.candidates.push(num(1e9));
        d.logits.push(1e6);
        Ok(d)
    }
}

#[test]
fn rejection_keeps_outputs_legal_with_an_unruly_backend() {
    let engine = iris_engine();
    let unruly = Arc::new(Unruly {
        inner: engine.builtin_backend(),
    });
    let engine = engine.with_backend(unruly);
    let records = synthesize(&engine, 300, &SamplerConfig::default()).unwrap();
    for r in &records {
        for (f, v) in r.values.iter().enumerate() {
            assert!(engine.is_legal(f, v));
        }
    }
}

struct AlwaysIllegal;

impl Backend for AlwaysIllegal {
    fn name(&self) -> &str {
        "illegal"
    }

    fn score_candidates(&self, _: &[ContextPair], target: &str) -> Result<CandidateDistribution, BackendError> {
        Ok(dist_for(target))
    }
}

fn dist_for(target: &str) -> CandidateDistribution {
    CandidateDistribution {
        target: target.into(),
        candidates: vec![cat("bogus")],
        logits: vec![0.0],
    }
}

#[test]
fn exhausted_attempts_force_the_most_frequent_legal_value() {
    // species counts in this table: b twice as common as a
    let t = table(
        vec![FeatureSpec::categorical("species")],
        None,
        Task::None,
        vec![vec![cat("a")], vec![cat("b")], vec![cat("b")]],
    );
    let engine = Engine::fit(t, EngineConfig::default()).unwrap().with_backend(Arc::new(AlwaysIllegal));
    let records = synthesize(&engine, 5, &SamplerConfig::default()).unwrap();
    for r in records {
        assert_eq!(r.values, vec![cat("b")]);
        assert!(r.provenance[0].forced);
        assert_eq!(r.provenance[0].attempts, 8);
    }
}

#[test]
fn independent_marginals_are_reproduced() {
    // exact marginals: a (0.5, 0.3, 0.2), b (0.6, 0.4), c (0.25 x 4)
    let mut rows = Vec::new();
    for i in 0..1000usize {
        let a = match i % 10 {
            0..=4 => "a0",
            5..=7 => "a1",
            _ => "a2",
        };
        let b = if (i / 10) % 5 < 3 { "b0" } else { "b1" };
        let c = ["c0", "c1", "c2", "c3"][(i / 50) % 4];
        rows.push(vec![cat(a), cat(b), cat(c)]);
    }
    let t = table(
        vec![
            FeatureSpec::categorical("a"),
            FeatureSpec::categorical("b"),
            FeatureSpec::categorical("c"),
        ],
        None,
        Task::None,
        rows,
    );
    let engine = Engine::fit(t.clone(), EngineConfig::default()).unwrap();
    let synth = synthesize(&engine, 1000, &SamplerConfig::default()).unwrap();
    for f in 0..3 {
        let real: Vec<Value> = t.column(f).cloned().collect();
        let fake: Vec<Value> = synth.iter().map(|r| r.values[f].clone()).collect();
        let tv = tv_distance(&real, &fake);
        assert!(tv < 0.15, "feature {f}: tv {tv}");
    }
}
