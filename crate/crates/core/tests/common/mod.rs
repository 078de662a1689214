//! Helpers shared by the integration and acceptance suites.

use polyprobe::autodiff::gradcheck::{finite_diff_grad, max_rel_error};
use polyprobe::autodiff::{Mode, RunningStats, Tape, Tensor};
use polyprobe::rng::substream;
use rand::Rng;
use std::cell::RefCell;

/// Scalar projection of an op output against fixed coefficients, so every
/// output element influences the loss differently.
fn project(tape: &Tape, out: &Tensor, coeffs: &[f64]) -> Tensor {
    let c = Tensor::new(out.shape(), coeffs.to_vec()).unwrap();
    tape.sum(&tape.mul(out, &c).unwrap())
}

struct OpCheck {
    name: &'static str,
    /// Shapes of the differentiable inputs.
    shapes: Vec<Vec<usize>>,
    /// Value sampler per input index.
    sample: fn(usize, &mut dyn FnMut() -> f64) -> f64,
    /// Builds the scalar loss from the inputs.
    build: Box<dyn Fn(&Tape, &[Tensor], &[f64]) -> Tensor>,
    coeff_len: usize,
}

fn default_sample(_input: usize, draw: &mut dyn FnMut() -> f64) -> f64 {
    draw()
}

/// Keeps values away from activation kinks so finite differences are valid.
fn kink_safe_sample(_input: usize, draw: &mut dyn FnMut() -> f64) -> f64 {
    let v = draw();
    if v.abs() < 0.05 {
        0.05 + v.abs()
    } else {
        v
    }
}

fn positive_sample(_input: usize, draw: &mut dyn FnMut() -> f64) -> f64 {
    0.1 + (draw().abs() % 2.0)
}

/// Runs the finite-difference comparison (h = 1e-5) for every autodiff op on
/// randomized small tensors. Returns (op name, max relative error) pairs.
pub fn run_all_gradchecks(seed: u64) -> Vec<(String, f64)> {
    let h = 1e-5;
    let mut results = Vec::new();

    let checks = all_op_checks();
    for (case_idx, check) in checks.into_iter().enumerate() {
        let mut rng = substream(seed, case_idx as u64);
        let mut draw = || rng.random_range(-2.0..2.0);
        let inputs: Vec<Vec<f64>> = check
            .shapes
            .iter()
            .enumerate()
            .map(|(i, s)| {
                (0..s.iter().product::<usize>())
                    .map(|_| (check.sample)(i, &mut draw))
                    .collect()
            })
            .collect();
        let coeffs: Vec<f64> = (0..check.coeff_len).map(|_| draw()).collect();

        // Analytic gradients.
        let tape = Tape::new();
        let tensors: Vec<Tensor> = check
            .shapes
            .iter()
            .zip(&inputs)
            .map(|(s, v)| Tensor::param(s.clone(), v.clone()).unwrap())
            .collect();
        let loss = (check.build)(&tape, &tensors, &coeffs);
        tape.backward(&loss).unwrap();

        for (i, tensor) in tensors.iter().enumerate() {
            let analytic = tensor.grad().unwrap_or_else(|| vec![0.0; tensor.numel()]);
            let numeric = finite_diff_grad(
                |probe: &[f64]| {
                    let t2 = Tape::new();
                    let tensors2: Vec<Tensor> = check
                        .shapes
                        .iter()
                        .enumerate()
                        .map(|(j, s)| {
                            let vals = if j == i { probe.to_vec() } else { inputs[j].clone() };
                            Tensor::param(s.clone(), vals).unwrap()
                        })
                        .collect();
                    (check.build)(&t2, &tensors2, &coeffs).item().unwrap()
                },
                &inputs[i],
                h,
            );
            let err = max_rel_error(&analytic, &numeric);
            results.push((format!("{}[input {i}]", check.name), err));
        }
    }
    results
}

fn all_op_checks() -> Vec<OpCheck> {
    vec![
        OpCheck {
            name: "add",
            shapes: vec![vec![3, 4], vec![3, 4]],
            sample: default_sample,
            build: Box::new(|t, xs, c| project(t, &t.add(&xs[0], &xs[1]).unwrap(), c)),
            coeff_len: 12,
        },
        OpCheck {
            name: "add_scalar_rhs",
            shapes: vec![vec![5], vec![1]],
            sample: default_sample,
            build: Box::new(|t, xs, c| project(t, &t.add(&xs[0], &xs[1]).unwrap(), c)),
            coeff_len: 5,
        },
        OpCheck {
            name: "add_row_rhs",
            shapes: vec![vec![4, 3], vec![3]],
            sample: default_sample,
            build: Box::new(|t, xs, c| project(t, &t.add(&xs[0], &xs[1]).unwrap(), c)),
            coeff_len: 12,
        },
        OpCheck {
            name: "sub",
            shapes: vec![vec![6], vec![6]],
            sample: default_sample,
            build: Box::new(|t, xs, c| project(t, &t.sub(&xs[0], &xs[1]).unwrap(), c)),
            coeff_len: 6,
        },
        OpCheck {
            name: "mul",
            shapes: vec![vec![2, 5], vec![2, 5]],
            sample: default_sample,
            build: Box::new(|t, xs, c| project(t, &t.mul(&xs[0], &xs[1]).unwrap(), c)),
            coeff_len: 10,
        },
        OpCheck {
            name: "mul_scalar_rhs",
            shapes: vec![vec![7], vec![1]],
            sample: default_sample,
            build: Box::new(|t, xs, c| project(t, &t.mul(&xs[0], &xs[1]).unwrap(), c)),
            coeff_len: 7,
        },
        OpCheck {
            name: "affine",
            shapes: vec![vec![8]],
            sample: default_sample,
            build: Box::new(|t, xs, c| project(t, &t.affine(&xs[0], -0.7, 1.3), c)),
            coeff_len: 8,
        },
        OpCheck {
            name: "matmul",
            shapes: vec![vec![3, 4], vec![4, 2]],
            sample: default_sample,
            build: Box::new(|t, xs, c| project(t, &t.matmul(&xs[0], &xs[1]).unwrap(), c)),
            coeff_len: 6,
        },
        OpCheck {
            name: "reshape",
            shapes: vec![vec![2, 6]],
            sample: default_sample,
            build: Box::new(|t, xs, c| {
                project(t, &t.reshape(&xs[0], vec![3, 4]).unwrap(), c)
            }),
            coeff_len: 12,
        },
        OpCheck {
            name: "mean",
            shapes: vec![vec![9]],
            sample: default_sample,
            build: Box::new(|t, xs, _| t.mean(&xs[0])),
            coeff_len: 0,
        },
        OpCheck {
            name: "sum",
            shapes: vec![vec![9]],
            sample: default_sample,
            build: Box::new(|t, xs, _| t.sum(&xs[0])),
            coeff_len: 0,
        },
        OpCheck {
            name: "relu",
            shapes: vec![vec![10]],
            sample: kink_safe_sample,
            build: Box::new(|t, xs, c| project(t, &t.relu(&xs[0]), c)),
            coeff_len: 10,
        },
        OpCheck {
            name: "leaky_relu",
            shapes: vec![vec![10]],
            sample: kink_safe_sample,
            build: Box::new(|t, xs, c| project(t, &t.leaky_relu(&xs[0], 0.2), c)),
            coeff_len: 10,
        },
        OpCheck {
            name: "tanh",
            shapes: vec![vec![10]],
            sample: default_sample,
            build: Box::new(|t, xs, c| project(t, &t.tanh(&xs[0]), c)),
            coeff_len: 10,
        },
        OpCheck {
            name: "sigmoid",
            shapes: vec![vec![10]],
            sample: default_sample,
            build: Box::new(|t, xs, c| project(t, &t.sigmoid(&xs[0]), c)),
            coeff_len: 10,
        },
        OpCheck {
            name: "clamp",
            shapes: vec![vec![10]],
            sample: kink_safe_sample,
            build: Box::new(|t, xs, c| project(t, &t.clamp(&xs[0], -1.05, 1.05), c)),
            coeff_len: 10,
        },
        OpCheck {
            name: "log",
            shapes: vec![vec![10]],
            sample: positive_sample,
            build: Box::new(|t, xs, c| project(t, &t.log(&xs[0]).unwrap(), c)),
            coeff_len: 10,
        },
        OpCheck {
            name: "conv2d_s1p0",
            shapes: vec![vec![1, 2, 4, 4], vec![2, 2, 3, 3]],
            sample: default_sample,
            build: Box::new(|t, xs, c| {
                project(t, &t.conv2d(&xs[0], &xs[1], 1, 0).unwrap(), c)
            }),
            coeff_len: 2 * 2 * 2,
        },
        OpCheck {
            name: "conv2d_s2p1",
            shapes: vec![vec![1, 1, 6, 6], vec![2, 1, 4, 4]],
            sample: default_sample,
            build: Box::new(|t, xs, c| {
                project(t, &t.conv2d(&xs[0], &xs[1], 2, 1).unwrap(), c)
            }),
            coeff_len: 2 * 3 * 3,
        },
        OpCheck {
            name: "conv2d_transpose_s1p0",
            shapes: vec![vec![1, 2, 3, 3], vec![2, 2, 3, 3]],
            sample: default_sample,
            build: Box::new(|t, xs, c| {
                project(t, &t.conv2d_transpose(&xs[0], &xs[1], 1, 0).unwrap(), c)
            }),
            coeff_len: 2 * 5 * 5,
        },
        OpCheck {
            name: "conv2d_transpose_s2p1",
            shapes: vec![vec![1, 2, 3, 3], vec![2, 1, 4, 4]],
            sample: default_sample,
            build: Box::new(|t, xs, c| {
                project(t, &t.conv2d_transpose(&xs[0], &xs[1], 2, 1).unwrap(), c)
            }),
            coeff_len: 6 * 6,
        },
        OpCheck {
            name: "batchnorm_train",
            shapes: vec![vec![2, 2, 3, 3], vec![2], vec![2]],
            sample: default_sample,
            build: Box::new(|t, xs, c| {
                let stats = RefCell::new(RunningStats::new(2));
                let y = t
                    .batchnorm2d(&xs[0], &xs[1], &xs[2], &stats, Mode::Train)
                    .unwrap();
                project(t, &y, c)
            }),
            coeff_len: 2 * 2 * 3 * 3,
        },
        OpCheck {
            name: "batchnorm_eval",
            shapes: vec![vec![2, 2, 3, 3], vec![2], vec![2]],
            sample: default_sample,
            build: Box::new(|t, xs, c| {
                let mut stats = RunningStats::new(2);
                stats.mean = vec![0.3, -0.2];
                stats.var = vec![1.5, 0.8];
                let stats = RefCell::new(stats);
                let y = t
                    .batchnorm2d(&xs[0], &xs[1], &xs[2], &stats, Mode::Eval)
                    .unwrap();
                project(t, &y, c)
            }),
            coeff_len: 2 * 2 * 3 * 3,
        },
        OpCheck {
            name: "softmax_cross_entropy",
            shapes: vec![vec![4, 3]],
            sample: default_sample,
            build: Box::new(|t, xs, _| {
                t.softmax_cross_entropy(&xs[0], &[0, 2, 1, 2]).unwrap()
            }),
            coeff_len: 0,
        },
    ]
}
