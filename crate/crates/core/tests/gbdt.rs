mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tacit::gbdt::{fit, GbdtParams, Regressor};

#[test]
fn training_loss_never_increases() {
    assert_eq!(common::gbdt_loss_increases(), 0);
}

#[test]
fn subsampled_training_loss_never_increases() {
    for seed in 0..5 {
        let (x, y) = common::random_dataset(120, 4, 50 + seed);
        let params = GbdtParams {
            subsample: 0.6,
            ..Default::default()
        };
        let m = fit(&x, &y, &params, seed).unwrap();
        assert!(m.train_loss.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn smooth_target_held_out_r2() {
    let r2 = common::gbdt_heldout_r2();
    assert!(r2 >= 0.9, "R^2 = {r2}");
}

#[test]
fn recovers_piecewise_constant_oracle() {
    // a depth-2 step function is exactly representable by one tree
    let oracle = |x: &[f64]| match (x[0] <= 0.5, x[1] <= 0.3) {
        (true, true) => 1.0,
        (true, false) => -2.0,
        (false, true) => 4.0,
        (false, false) => 0.5,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<Vec<f64>> = (0..400)
        .map(|_| vec![rng.random(), rng.random(), rng.random()])
        .collect();
    let y: Vec<f64> = x.iter().map(|r| oracle(r)).collect();
    let params = GbdtParams {
        n_trees: 200,
        learning_rate: 0.3,
        max_depth: 2,
        min_leaf: 1,
        subsample: 1.0,
    };
    let m = fit(&x[..300], &y[..300], &params, 0).unwrap();
    let r2 = common::r_squared(&m.predict(&x[300..]), &y[300..]);
    assert!(r2 >= 0.9, "R^2 = {r2}");
    let train_err = m
        .predict(&x[..300])
        .iter()
        .zip(&y[..300])
        .map(|(p, t)| (p - t).abs())
        .fold(0.0, f64::max);
    assert!(train_err < 1e-3, "max train error {train_err}");
}

#[test]
fn deterministic_given_seed() {
    let (x, y) = common::random_dataset(100, 3, 8);
    let params = GbdtParams {
        subsample: 0.7,
        ..Default::default()
    };
    assert_eq!(fit(&x, &y, &params, 4).unwrap(), fit(&x, &y, &params, 4).unwrap());
}
