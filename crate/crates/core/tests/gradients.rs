//! Analytic gradients against central finite differences on randomly chosen
//! parameters.

use pertax::binary::{BinaryConfig, BinaryModel};
use pertax::cdp::{CdpConfig, CdpModel};
use pertax::cones::{train_label_embeddings, ConeTrainConfig};
use pertax::hypemo::HypemoModel;
use pertax::nn::{Activation, Parameters};
use pertax::taxonomy::bundled;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PROBES: usize = 40;
const H: f64 = 1e-5;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-7 {
        (analytic - numeric).abs()
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Max relative error over `PROBES` random coordinates.
fn probe<M: Parameters + Clone>(model: &M, grad: &[f64], loss: impl Fn(&M) -> f64, seed: u64) -> f64 {
    let base = model.flat_parameters();
    assert_eq!(base.len(), grad.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..PROBES {
        let i = rng.random_range(0..base.len());
        let at = |d: f64| {
            let mut p = base.clone();
            p[i] += d;
            let mut m = model.clone();
            m.set_flat_parameters(&p);
            loss(&m)
        };
        let fd = (at(H) - at(-H)) / (2.0 * H);
        worst = worst.max(rel_err(grad[i], fd));
    }
    worst
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn hypemo_loss_gradient() {
    let t = bundled::subtask1();
    let cfg = ConeTrainConfig {
        dim: 10,
        epochs: 50,
        ..Default::default()
    };
    let emb = train_label_embeddings(&t.dag_to_tree(), &cfg).unwrap();
    let leaves = t.leaf_set();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..5 {
        let m = HypemoModel::new(8, 16, 10, &leaves, trial);
        let x = random_vec(&mut rng, 8);
        let gold = leaves[rng.random_range(0..leaves.len())];
        let (_, grad) = m.loss_and_gradient(&emb, &x, gold, false).unwrap();
        let err = probe(&m, &grad, |mm| mm.loss(&emb, &x, gold).unwrap(), trial);
        assert!(err < 1e-4, "trial {trial}: max rel err {err}");
    }
}

#[test]
fn cdp_loss_gradient() {
    let leaves = ["a", "b", "c", "d", "e"];
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..5 {
        let cfg = CdpConfig {
            hidden: 12,
            match_hidden: 6,
            seed: trial,
            ..Default::default()
        };
        let m = CdpModel::new(7, &leaves, &cfg).unwrap();
        let x = random_vec(&mut rng, 7);
        let d = random_vec(&mut rng, 7);
        let gold = vec!["b".to_string(), "e".to_string()];
        let matched = leaves[rng.random_range(0..leaves.len())];
        let (_, grad) = m.loss_and_gradient(&x, &d, &gold, matched).unwrap();
        let err = probe(&m, &grad, |mm| mm.loss(&x, &d, &gold, matched).unwrap(), trial);
        assert!(err < 1e-4, "trial {trial}: max rel err {err}");
    }
}

#[test]
fn weighted_bce_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for (trial, act) in [Activation::Sigmoid, Activation::Tanh, Activation::Sigmoid].into_iter().enumerate() {
        let cfg = BinaryConfig {
            hidden: 10,
            activation: act,
            seed: trial as u64,
            ..Default::default()
        };
        let w = [0.5, 0.8, 0.25][trial];
        let m = BinaryModel::new(6, w, &cfg).unwrap();
        let xs: Vec<Vec<f64>> = (0..12).map(|_| random_vec(&mut rng, 6)).collect();
        let ys: Vec<bool> = (0..12).map(|i| i % 3 != 0).collect();
        let (_, grad) = m.loss_and_gradient(&xs, &ys).unwrap();
        let err = probe(&m, &grad, |mm| mm.loss(&xs, &ys).unwrap(), trial as u64);
        assert!(err < 1e-4, "trial {trial}: max rel err {err}");
    }
}
