mod common;

use common::*;
use tabguide::migraph::{binary_mi, contingency_mi, FeatureMiMode, MiConfig, MiGraph};
use tabguide::{BinLayout, BinningMode, PseudoId};

fn check_table(seed: u64) {
    let t = random_table(&mut rng(seed), 12, 4);
    let layout = BinLayout::fit(&t, BinningMode::FreedmanDiaconis).unwrap();
    let g = MiGraph::estimate(&t, &layout, MiConfig::default()).unwrap();
    let ind = oracle_indicators(&t);
    assert_eq!(layout.num_pseudo(), ind.columns.len(), "seed {seed}");
    let p = ind.columns.len();
    for a in 0..p {
        assert_eq!(layout.parent(PseudoId(a)), ind.parent[a]);
        for b in 0..p {
            let expected = if ind.parent[a] == ind.parent[b] {
                0.0
            } else {
                oracle_mi(&bits(&ind.columns[a]), &bits(&ind.columns[b]))
            };
            let got = g.mi(PseudoId(a), PseudoId(b));
            assert!((got - expected).abs() <= 1e-12, "seed {seed} pair ({a},{b}): {got} vs {expected}");
        }
        for f in 0..t.schema().len() {
            let expected = if ind.parent[a] == f {
                0.0
            } else {
                oracle_mi(&bits(&ind.columns[a]), &feature_labels(&ind, f))
            };
            let got = g.feature_level_mi(PseudoId(a), f);
            assert!((got - expected).abs() <= 1e-12, "seed {seed} feature-level ({a},{f}): {got} vs {expected}");
        }
    }
}

#[test]
fn pairwise_and_feature_level_mi_match_brute_force() {
    for seed in 0..50 {
        check_table(seed);
    }
}

#[test]
fn max_over_bins_mode_matches_pairwise_maximum() {
    for seed in 100..120 {
        let t = random_table(&mut rng(seed), 12, 4);
        let layout = BinLayout::fit(&t, BinningMode::FreedmanDiaconis).unwrap();
        let cfg = MiConfig {
            feature_mi: FeatureMiMode::MaxOverBins,
            ..Default::default()
        };
        let g = MiGraph::estimate(&t, &layout, cfg).unwrap();
        for a in 0..layout.num_pseudo() {
            for f in 0..t.schema().len() {
                let expected = if layout.parent(PseudoId(a)) == f {
                    0.0
                } else {
                    layout
                        .ids_of(f)
                        .map(|b| g.mi(PseudoId(a), b))
                        .fold(0.0, f64::max)
                };
                assert_eq!(g.feature_level_mi(PseudoId(a), f), expected);
            }
        }
    }
}

#[test]
fn hand_computed_two_by_two() {
    // joint counts [[2,1],[1,2]] over 6 rows
    let expected = (2.0 / 3.0) * (4.0f64 / 3.0).ln() + (1.0 / 3.0) * (2.0f64 / 3.0).ln();
    assert!((contingency_mi(&[vec![2, 1], vec![1, 2]]) - expected).abs() < 1e-15);
    assert!((binary_mi(6, 3, 3, 2) - expected).abs() < 1e-15);
}
