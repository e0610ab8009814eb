use mkofl::data_pipeline::{synth_generate, SynthSpec};
use mkofl::evaluation::{
    best_hindsight, centralized_pmf, martingale_check, mse_trace, regret, tv_trace, FrozenState,
};
use mkofl::kernel_features::{build_dictionary, dictionary_bandwidth_sq};
use mkofl::objective::ModelParams;
use mkofl::orchestrator::{global_steps, prepare_data, run_prepared, trial_regret};
use mkofl::rng::{substream, Domain};
use mkofl::{Algorithm, DatasetSpec, ExperimentConfig, FeatureVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_features(n: usize, m: usize, seed: u64) -> Vec<FeatureVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| FeatureVector::from_vec((0..m).map(|_| rng.random_range(-1.0..1.0)).collect())).collect()
}

fn small_config(algorithm: Algorithm, nodes: usize, rounds: usize) -> ExperimentConfig {
    ExperimentConfig { algorithm, nodes, rounds, trials: 1, verbose_trace: true, ..ExperimentConfig::default() }
}

#[test]
fn mse_matches_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let preds: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| rng.random()).collect()).collect();
    let labels: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| rng.random()).collect()).collect();
    let fast = mse_trace(&preds, &labels, 0);
    for t in 0..40 {
        let mut s = 0.0;
        for tau in 0..=t {
            for k in 0..3 {
                s += (preds[tau][k] - labels[tau][k]).powi(2);
            }
        }
        assert!((fast[t] - s / (3 * (t + 1)) as f64).abs() <= 1e-12);
    }
}

#[test]
fn hindsight_recovers_noiseless_model() {
    let feats = random_features(60, 8, 2);
    let w0 = ModelParams::from_vec((0..8).map(|i| i as f64 * 0.1 - 0.3).collect());
    let labels: Vec<f64> = feats.iter().map(|z| w0.predict(z)).collect();
    let h = best_hindsight(&feats, &labels, 0.0, None).unwrap();
    for (z, y) in feats.iter().zip(&labels) {
        assert!((h.weights.predict(z) - y).abs() <= 1e-8);
    }
    assert!(h.loss <= 1e-14);
}

#[test]
fn hindsight_optimality_and_shrinkage() {
    let feats = random_features(80, 10, 3);
    let labels: Vec<f64> = (0..80).map(|i| (i as f64 * 0.37).sin()).collect();
    let b_norm = {
        let mut b = vec![0.0; 10];
        for (z, y) in feats.iter().zip(&labels) {
            for (bi, zi) in b.iter_mut().zip(z.as_slice()) {
                *bi += zi * y;
            }
        }
        b.iter().map(|v| v * v).sum::<f64>().sqrt()
    };
    let h = best_hindsight(&feats, &labels, 0.01, None).unwrap();
    assert!(h.stationarity <= 1e-8 * (1.0 + b_norm));
    let huge = best_hindsight(&feats, &labels, 1e9, None).unwrap();
    assert!(huge.weights.norm() < 1e-8);
}

#[test]
fn noiseless_synthetic_data_is_fit_by_its_kernel() {
    let spec = SynthSpec::new(dictionary_bandwidth_sq(3), 2000, 1, 0.0, 4);
    let ds = synth_generate(&spec).unwrap();
    let dict = build_dictionary(11, 49, 1, 9).unwrap();
    let lambda = 0.01;
    let feats: Vec<FeatureVector> = ds.features().iter().map(|x| dict.feature_map(3, x).unwrap()).collect();
    let h = best_hindsight(&feats, ds.labels(), lambda, None).unwrap();
    let floor = ds.len() as f64 * lambda * h.weights.norm().powi(2);
    let residual = (h.loss - floor) / ds.len() as f64;
    let variance = {
        let m = ds.labels().iter().sum::<f64>() / ds.len() as f64;
        ds.labels().iter().map(|y| (y - m).powi(2)).sum::<f64>() / ds.len() as f64
    };
    assert!(residual < 0.1 * variance, "residual {residual} vs label variance {variance}");
}

#[test]
fn regret_against_exact_oracle() {
    let cfg = ExperimentConfig { rounds: 60, nodes: 4, trials: 1, ..ExperimentConfig::default() };
    let data = prepare_data(&cfg).unwrap();
    let res = run_prepared(&cfg, &data, &[]).unwrap();
    let rep = trial_regret(&cfg, &data, &res.trials[0]).unwrap();
    assert_eq!(rep.hindsight_losses.len(), 11);
    let best = rep.hindsight_losses.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!((rep.regret - (rep.algorithm_loss - best)).abs() < 1e-9);

    let sk = ExperimentConfig { algorithm: Algorithm::SkOfl, sk_kernel: Some(9), ..cfg.clone() };
    let res = run_prepared(&sk, &data, &[]).unwrap();
    let rep = trial_regret(&sk, &data, &res.trials[0]).unwrap();
    assert_eq!(rep.comparator, 8);
    assert!(rep.regret >= 0.0 || rep.regret.abs() < 1e-9);

    let zero = regret(5.0, vec![7.0, 5.0], 10, None).unwrap();
    assert_eq!(zero.regret, 0.0);
}

#[test]
fn single_node_pmf_equals_centralized_recursion() {
    let cfg = small_config(Algorithm::MkOfl, 1, 80);
    let data = prepare_data(&cfg).unwrap();
    let res = run_prepared(&cfg, &data, &[]).unwrap();
    let records = &res.trials[0].records;
    let losses: Vec<Vec<Vec<f64>>> = records.iter().map(|r| r.detail.as_ref().unwrap().kernel_losses.clone()).collect();
    let node: Vec<Vec<Vec<f64>>> = records.iter().map(|r| r.detail.as_ref().unwrap().pmfs.clone()).collect();
    let central = centralized_pmf(&losses, &global_steps(&cfg), &cfg.loss_config()).unwrap();
    let tv = tv_trace(&node, &central);
    assert!(tv.iter().all(|&d| d < 1e-12), "{tv:?}");
}

#[test]
fn node_pmfs_track_the_centralized_pmf() {
    let cfg = ExperimentConfig { trials: 4, ..small_config(Algorithm::MkOfl, 20, 500) };
    let data = prepare_data(&cfg).unwrap();
    let res = run_prepared(&cfg, &data, &[]).unwrap();
    let means: Vec<f64> = res
        .trials
        .iter()
        .map(|trial| {
            let details: Vec<_> = trial.records.iter().map(|r| r.detail.as_ref().unwrap()).collect();
            let losses: Vec<Vec<Vec<f64>>> = details.iter().map(|d| d.kernel_losses.clone()).collect();
            let node: Vec<Vec<Vec<f64>>> = details.iter().map(|d| d.pmfs.clone()).collect();
            let central = centralized_pmf(&losses, &global_steps(&cfg), &cfg.loss_config()).unwrap();
            let tv = tv_trace(&node, &central);
            tv.iter().sum::<f64>() / tv.len() as f64
        })
        .collect();
    let mean = means.iter().sum::<f64>() / means.len() as f64;
    assert!(mean <= 0.2, "time-averaged TV per trial {means:?}");
}

#[test]
fn martingale_on_frozen_states() {
    let cfg = small_config(Algorithm::MkOfl, 6, 40);
    let data = prepare_data(&cfg).unwrap();
    let capture: Vec<(usize, usize)> = (0..6).map(|k| (5 + 5 * k, k)).collect();
    let res = run_prepared(&cfg, &data, &capture).unwrap();
    let frozen: &[FrozenState] = &res.trials[0].frozen;
    assert_eq!(frozen.len(), capture.len());
    let mut rng = substream(1, Domain::Oracle, 0);
    for state in frozen {
        let rep = martingale_check(state, &cfg.loss_config(), 100_000, &mut rng).unwrap();
        assert!(rep.within_band(), "{rep:?}");
        let half = martingale_check(state, &cfg.loss_config(), 25_000, &mut rng).unwrap();
        if rep.std_dev > 0.0 {
            let ratio = half.band / rep.band;
            assert!((ratio - 2.0).abs() < 0.1, "band ratio {ratio}");
        }
    }
}

#[test]
fn synthetic_spec_feeds_every_algorithm_the_same_rows() {
    let base = ExperimentConfig { rounds: 20, nodes: 3, trials: 1, sk_kernel: Some(2), ..ExperimentConfig::default() };
    let rows = |cfg: &ExperimentConfig| {
        let data = prepare_data(cfg).unwrap();
        let res = run_prepared(cfg, &data, &[]).unwrap();
        res.trials[0].records.iter().map(|r| r.sample_rows.clone()).collect::<Vec<_>>()
    };
    let reference = rows(&base);
    for algorithm in Algorithm::ALL {
        assert_eq!(rows(&ExperimentConfig { algorithm, seed: 99, ..base.clone() }), reference);
    }
    let other = ExperimentConfig {
        dataset: DatasetSpec::Synthetic {
            bandwidth_sq: None,
            kernel: Some(4),
            samples: None,
            input_dim: 1,
            noise_sd: 0.1,
            centers: 2,
            signal_scale: 0.5,
            offset: 0.0,
            seed: 1234,
        },
        ..base.clone()
    };
    assert_ne!(rows(&other), reference);
}
