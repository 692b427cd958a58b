use std::collections::BTreeSet;

use floodbench_core::metrics::MetricRecord;
use floodbench_core::study::{read_configs_csv, write_results_csv, AblationOutcome};
use floodbench_core::{
    ablation_study, paired_differences, standard_configs, technique_pairs, BootstrapSettings, Error, Metric,
    ModelConfig, Technique,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Every ordered pair whose flag sets differ exactly by `t`, by exhaustive
/// comparison of flag sets.
fn brute_force_pairs(configs: &[ModelConfig], t: Technique) -> BTreeSet<(String, String)> {
    let mut out = BTreeSet::new();
    for a in configs {
        for b in configs {
            let diff: BTreeSet<_> = a.flags.symmetric_difference(&b.flags).copied().collect();
            if a.flags.contains(&t) && diff == BTreeSet::from([t]) {
                out.insert((a.model_id.clone(), b.model_id.clone()));
            }
        }
    }
    out
}

#[test]
fn flag_matrix_pairs_match_brute_force() {
    let configs = standard_configs();
    let pseudo = technique_pairs(&configs, Technique::Pseudo);
    assert_eq!(pseudo.len(), 9);
    for (i, (with, without)) in pseudo.iter().enumerate() {
        assert_eq!(
            (with.as_str(), without.as_str()),
            ((i + 1).to_string().as_str(), (i + 10).to_string().as_str())
        );
    }
    for t in Technique::ALL {
        let got = technique_pairs(&configs, t);
        let set: BTreeSet<_> = got.iter().cloned().collect();
        assert_eq!(set.len(), got.len(), "{t} listed a pair twice");
        assert_eq!(set, brute_force_pairs(&configs, t), "{t}");
    }
    let counts: Vec<usize> = Technique::ALL
        .iter()
        .map(|&t| technique_pairs(&configs, t).len())
        .collect();
    assert_eq!(counts, vec![9, 4, 4, 4, 6, 4]);
}

fn arb_configs() -> impl Strategy<Value = Vec<ModelConfig>> {
    proptest::collection::btree_set(0u8..64, 0..20).prop_map(|masks| {
        masks
            .into_iter()
            .enumerate()
            .map(|(i, m)| {
                ModelConfig::new(
                    format!("m{i}"),
                    Technique::ALL.into_iter().filter(|t| m & (1 << (*t as u8)) != 0),
                )
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn pairs_match_brute_force_on_random_configs(configs in arb_configs()) {
        for t in Technique::ALL {
            let got = technique_pairs(&configs, t);
            let set: BTreeSet<_> = got.iter().cloned().collect();
            prop_assert_eq!(set.len(), got.len());
            prop_assert_eq!(set, brute_force_pairs(&configs, t));
        }
    }
}

fn rec(model: &str, image: &str, error: f64) -> MetricRecord {
    MetricRecord {
        model_id: model.into(),
        image_id: image.into(),
        error,
        f05: None,
        edge_coherence: None,
    }
}

#[test]
fn three_pairs_four_images_fixture() {
    let errors = [
        ("a", [0.10, 0.20, 0.30, 0.40]),
        ("b", [0.15, 0.10, 0.30, 0.35]),
        ("c", [0.50, 0.25, 0.00, 0.10]),
        ("d", [0.05, 0.05, 0.05, 0.05]),
    ];
    let mut records = Vec::new();
    for (m, v) in errors {
        for (i, e) in v.iter().enumerate() {
            records.push(rec(m, &format!("img{i}"), *e));
        }
    }
    let pairs: Vec<(String, String)> = [("a", "b"), ("c", "d"), ("a", "d")]
        .iter()
        .map(|(x, y)| (x.to_string(), y.to_string()))
        .collect();
    let d = paired_differences(&records, &pairs, Metric::Error).unwrap();
    let expected = [
        -0.05, 0.10, 0.00, 0.05, //
        0.45, 0.20, -0.05, 0.05, //
        0.05, 0.15, 0.25, 0.35,
    ];
    assert_eq!(d.diffs.len(), 12);
    for (got, want) in d.diffs.iter().zip(expected) {
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
    assert_eq!(d.n_images, 4);

    let same = paired_differences(&records, &[("a".into(), "a".into())], Metric::Error).unwrap();
    assert!(same.diffs.iter().all(|&x| x == 0.0));
    assert!(matches!(
        paired_differences(&records, &[("a".into(), "zz".into())], Metric::Error),
        Err(Error::EmptyDataset(_))
    ));
}

/// Per-image error of each standard model: shared image difficulty, planted
/// technique effects and independent noise.
fn synthetic_records(effects: &[(Technique, f64)], images: usize, seed: u64) -> Vec<MetricRecord> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let difficulty: Vec<f64> = (0..images).map(|_| rng.random_range(0.05..0.25)).collect();
    let mut records = Vec::new();
    for config in standard_configs() {
        let shift: f64 = effects.iter().filter(|(t, _)| config.has(*t)).map(|(_, e)| e).sum();
        for (i, base) in difficulty.iter().enumerate() {
            let error = (base + shift + noise.sample(&mut rng)).clamp(0.0, 1.0);
            records.push(MetricRecord {
                model_id: config.model_id.clone(),
                image_id: format!("{i:03}"),
                error,
                f05: Some((0.8 - error + noise.sample(&mut rng)).clamp(0.0, 1.0)),
                edge_coherence: if rng.random_bool(0.9) {
                    Some(0.9 + noise.sample(&mut rng))
                } else {
                    None
                },
            });
        }
    }
    records
}

const PLANTED: [(Technique, f64); 6] = [
    (Technique::Pseudo, -0.012),
    (Technique::Depth, -0.006),
    (Technique::Seg, -0.008),
    (Technique::Spade, -0.004),
    (Technique::DadaS, -0.005),
    (Technique::DadaM, 0.004),
];

fn run(records: &[MetricRecord], seed: u64, n_resamples: usize) -> AblationOutcome {
    let settings = BootstrapSettings {
        n_resamples,
        seed,
        ..BootstrapSettings::default()
    };
    ablation_study(records, &standard_configs(), &settings).unwrap()
}

#[test]
fn planted_effects_are_recovered() {
    let records = synthetic_records(&PLANTED, 180, 3);
    let outcome = run(&records, 11, 5000);
    assert_eq!(outcome.results.len(), 18);
    assert!(outcome.omitted.is_empty());
    for (t, effect) in PLANTED {
        let r = outcome
            .results
            .iter()
            .find(|r| r.technique == t && r.metric == Metric::Error)
            .unwrap();
        if effect < 0.0 {
            assert!(r.improves(), "{t}: {r:?}");
        } else {
            assert!(r.worsens(), "{t}: {r:?}");
        }
        assert!((r.estimate - effect).abs() < 0.003, "{t}: {}", r.estimate);
        assert_eq!(r.n_images, 180);
    }
    // f05 was planted as the mirror image of error
    let f = outcome
        .results
        .iter()
        .find(|r| r.technique == Technique::Pseudo && r.metric == Metric::F05)
        .unwrap();
    assert!(f.improves());
}

#[test]
fn null_effects_rarely_exclude_zero() {
    let mut excluded = 0;
    let mut total = 0;
    for seed in 0..12 {
        let records = synthetic_records(&[], 180, 100 + seed);
        for r in run(&records, seed, 2000).results {
            total += 1;
            if r.ci_low > 0.0 || r.ci_high < 0.0 {
                excluded += 1;
            }
        }
    }
    assert!((excluded as f64) <= 0.03 * total as f64, "{excluded}/{total}");
}

#[test]
fn missing_technique_is_omitted() {
    let configs: Vec<ModelConfig> = standard_configs()
        .into_iter()
        .filter(|c| !c.has(Technique::Spade))
        .collect();
    let records = synthetic_records(&PLANTED, 30, 4);
    let settings = BootstrapSettings {
        n_resamples: 500,
        ..BootstrapSettings::default()
    };
    let outcome = ablation_study(&records, &configs, &settings).unwrap();
    assert_eq!(outcome.omitted, vec![Technique::Spade]);
    assert_eq!(outcome.results.len(), 15);
}

#[test]
fn results_csv_is_deterministic() {
    let records = synthetic_records(&PLANTED, 40, 5);
    let write = |o: &AblationOutcome| {
        let mut buf = Vec::new();
        write_results_csv(&mut buf, &o.results).unwrap();
        String::from_utf8(buf).unwrap()
    };
    let a = write(&run(&records, 9, 1000));
    let b = write(&run(&records, 9, 1000));
    assert_eq!(a, b);
    assert!(a.starts_with("technique,metric,estimate,ci_low,ci_high,p\n"));
    assert_eq!(a.lines().count(), 19);
    assert_ne!(a, write(&run(&records, 10, 1000)));
}

#[test]
fn config_table_schema() {
    let text = "model_id,pseudo,depth,seg,spade,dada_s,dada_m\nA,1,1,0,0,0,0\nB,0,1,0,0,0,0\n";
    let configs = read_configs_csv(text.as_bytes()).unwrap();
    assert_eq!(
        technique_pairs(&configs, Technique::Pseudo),
        vec![("A".to_string(), "B".to_string())]
    );
    let no_seg = "model_id,pseudo,depth,spade,dada_s,dada_m\nA,1,1,0,0,0\n";
    match read_configs_csv(no_seg.as_bytes()) {
        Err(Error::Schema(msg)) => assert!(msg.contains("seg")),
        other => panic!("expected schema error, got {other:?}"),
    }
}
