use rand::SeedableRng;
use soqal_core::data::{gen_synthetic, SyntheticKind, SyntheticSpec};
use soqal_core::engine::{run_experiment, LabelledEntry};
use soqal_core::net::{ForwardMode, Network, NetworkConfig, SgdConfig};
use soqal_core::oracle::OracleKind;
use soqal_core::rng::RunRng;
use soqal_core::{ExperimentConfig, LabelSource, StrategyKind};

fn blobs(n: usize, separation: f64, dims: usize) -> SyntheticSpec {
    SyntheticSpec {
        kind: SyntheticKind::GaussianBlobs,
        n,
        classes: 2,
        dims,
        separation,
    }
}

fn quick_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.synthetic.n = 300;
    c.synthetic.dims = 4;
    c.epochs = 20;
    c.hidden = vec![16];
    c.mc_samples = 8;
    c.acquisition_frac = 0.05;
    c.init_labelled_frac = 0.1;
    c
}

#[test]
fn network_fits_separated_blobs() {
    let data = gen_synthetic(&blobs(400, 4.0, 2), 3).unwrap();
    let mut rng = RunRng::seed_from_u64(4);
    let mut net = Network::new(&NetworkConfig::new(2, 2), &mut rng).unwrap();
    let inputs: Vec<&[f64]> = data.features.iter().map(Vec::as_slice).collect();
    for _ in 0..200 {
        net.train_epoch(&inputs, &data.labels, &SgdConfig::default(), &mut rng).unwrap();
    }
    let correct = inputs
        .iter()
        .zip(&data.labels)
        .filter(|(x, &y)| net.forward(x, ForwardMode::Deterministic).unwrap().predicted_class() == y)
        .count();
    let acc = correct as f64 / inputs.len() as f64;
    assert!(acc >= 0.95, "accuracy {acc}");
}

#[test]
fn wide_separation_is_nearly_perfect() {
    let mut c = quick_config();
    c.synthetic = blobs(400, 10.0, 2);
    c.strategy = StrategyKind::FullOracle;
    let log = run_experiment(&c, 5).unwrap();
    assert!(log.test_auc >= 0.99, "{}", log.test_auc);
}

#[test]
fn identical_classes_stay_near_chance() {
    let mut c = quick_config();
    c.synthetic.separation = 0.0;
    c.synthetic.n = 1000;
    let mean: f64 = (0..5).map(|s| run_experiment(&c, s).unwrap().test_auc).sum::<f64>() / 5.0;
    assert!((mean - 0.5).abs() < 0.08, "{mean}");
}

#[test]
fn runs_are_reproducible() {
    let c = quick_config();
    assert_eq!(run_experiment(&c, 9).unwrap(), run_experiment(&c, 9).unwrap());
    assert_ne!(run_experiment(&c, 9).unwrap().rows, run_experiment(&c, 10).unwrap().rows);
}

#[test]
fn held_out_instances_are_never_acquired() {
    for strategy in StrategyKind::ALL {
        let mut c = quick_config();
        c.strategy = strategy;
        let log = run_experiment(&c, 2).unwrap();
        for entry in &log.labelled {
            assert!(log.split.train.binary_search(&entry.id).is_ok());
            assert!(log.split.val.binary_search(&entry.id).is_err());
            assert!(log.split.test.binary_search(&entry.id).is_err());
        }
    }
}

#[test]
fn training_labels_follow_provenance() {
    for strategy in [StrategyKind::NoOracle, StrategyKind::Soqal, StrategyKind::EpsilonGreedy] {
        let mut c = quick_config();
        c.strategy = strategy;
        c.oracle.kind = OracleKind::RandomFlip;
        c.oracle.gamma = 0.3;
        let log = run_experiment(&c, 6).unwrap();
        let initial: Vec<&LabelledEntry> = log.labelled.iter().filter(|e| e.source == LabelSource::Initial).collect();
        assert_eq!(initial.len(), log.split.initial_labelled.len());
        let acquired = &log.labelled[initial.len()..];
        assert_eq!(acquired.len(), log.acquisitions.len());
        for (entry, record) in acquired.iter().zip(&log.acquisitions) {
            assert_eq!(entry.id, record.instance);
            assert_eq!(entry.label, record.assigned_label);
            assert_eq!(entry.source, record.source);
        }
    }
}

#[test]
fn self_labels_ignore_the_oracle() {
    // No-oracle runs never consult the oracle, so its noise cannot matter.
    let mut c = quick_config();
    c.strategy = StrategyKind::NoOracle;
    let clean = run_experiment(&c, 8).unwrap();
    c.oracle.kind = OracleKind::RandomFlip;
    c.oracle.gamma = 1.0;
    let noisy = run_experiment(&c, 8).unwrap();
    assert!(clean.same_outcome(&noisy));
    assert!(clean.acquisitions.iter().all(|a| a.source == LabelSource::SelfLabel));
}

#[test]
fn soqal_at_threshold_one_matches_full_oracle() {
    let mut c = quick_config();
    c.strategy = StrategyKind::FullOracle;
    let full = run_experiment(&c, 7).unwrap();
    c.strategy = StrategyKind::Soqal;
    c.strategy_params.hellinger_threshold = 1.0;
    let soqal = run_experiment(&c, 7).unwrap();
    assert!(full.same_outcome(&soqal));
}

#[test]
fn other_synthetic_kinds_train() {
    for kind in [SyntheticKind::RingVsBlob, SyntheticKind::NoisySineClasses] {
        let mut c = quick_config();
        c.synthetic.kind = kind;
        c.synthetic.dims = 2;
        c.synthetic.separation = 3.0;
        c.epochs = 40;
        let log = run_experiment(&c, 1).unwrap();
        assert!(log.test_auc > 0.6, "{}: {}", kind.name(), log.test_auc);
    }
}
