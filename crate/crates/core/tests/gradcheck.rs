//! Finite-difference verification of every autodiff op.

mod common;

use polyprobe::autodiff::{Mode, RunningStats, Tape, Tensor};
use polyprobe::rng::substream;
use rand::Rng;
use std::cell::RefCell;

#[test]
fn every_op_matches_central_finite_differences() {
    for seed in [1u64, 2, 3] {
        for (name, err) in common::run_all_gradchecks(seed) {
            assert!(err < 1e-4, "{name} (seed {seed}): max rel error {err}");
        }
    }
}

#[test]
fn forward_and_backward_are_bit_deterministic() {
    let run = || {
        let mut rng = substream(77, 0);
        let x = Tensor::param(
            vec![2, 1, 8, 8],
            (0..128).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let w = Tensor::param(
            vec![2, 1, 4, 4],
            (0..32).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let gamma = Tensor::param(vec![2], vec![1.0, 1.0]).unwrap();
        let beta = Tensor::param(vec![2], vec![0.0, 0.0]).unwrap();
        let stats = RefCell::new(RunningStats::new(2));

        let tape = Tape::new();
        let c = tape.conv2d(&x, &w, 2, 1).unwrap();
        let n = tape
            .batchnorm2d(&c, &gamma, &beta, &stats, Mode::Train)
            .unwrap();
        let a = tape.leaky_relu(&n, 0.2);
        let loss = tape.mean(&tape.mul(&a, &a).unwrap());
        tape.backward(&loss).unwrap();
        (
            loss.item().unwrap().to_bits(),
            w.grad()
                .unwrap()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>(),
        )
    };
    let (l1, g1) = run();
    let (l2, g2) = run();
    assert_eq!(l1, l2);
    assert_eq!(g1, g2);
}
