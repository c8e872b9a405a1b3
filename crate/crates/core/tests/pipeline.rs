mod common;

use common::*;
use tabguide::evaluation::ModelScores;
use tabguide::pipeline::{end_to_end, BackendChoice, PipelineConfig};

#[test]
fn end_to_end_on_iris() {
    let out = end_to_end(&iris(), &PipelineConfig::default()).unwrap();
    assert_eq!(out.train.len(), 120);
    assert_eq!(out.test.len(), 30);
    assert_eq!(out.synthetic.len(), 120);
    let report = out.report;
    assert!(!report.notes.is_empty());
    match report.utility.unwrap().decision_tree {
        ModelScores::Classification { accuracy, macro_f1 } => {
            assert!((0.0..=1.0).contains(&accuracy));
            assert!((0.0..=1.0).contains(&macro_f1));
        }
        _ => panic!(),
    }
    let realism = report.realism.unwrap();
    assert!((0.0..=1.0).contains(&realism.mean_accuracy));
    assert!(report.privacy.unwrap().mean >= 0.0);
}

#[test]
fn marginal_backend_choice_is_applied() {
    let cfg = PipelineConfig {
        backend: BackendChoice::Marginal,
        count: Some(50),
        ..PipelineConfig::default()
    };
    let out = end_to_end(&iris(), &cfg).unwrap();
    assert_eq!(out.engine.backend.name(), "marginal");
    assert_eq!(out.synthetic.len(), 50);
}
