//! Layer stack shared by the generator, discriminator, and shape classifier.

use crate::autodiff::{AdError, Mode, RunningStats, Tape, Tensor};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::cell::RefCell;

pub enum Layer {
    Conv2d {
        weight: Tensor,
        stride: usize,
        padding: usize,
    },
    ConvTranspose2d {
        weight: Tensor,
        stride: usize,
        padding: usize,
    },
    Linear {
        weight: Tensor,
        bias: Option<Tensor>,
    },
    BatchNorm2d {
        gamma: Tensor,
        beta: Tensor,
        stats: RefCell<RunningStats>,
    },
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
    /// (batch, n) -> (batch, dims...).
    Reshape(Vec<usize>),
    /// (batch, dims...) -> (batch, prod(dims)).
    Flatten,
}

impl Layer {
    fn forward(&self, tape: &Tape, x: &Tensor, mode: Mode) -> Result<Tensor, AdError> {
        match self {
            Layer::Conv2d {
                weight,
                stride,
                padding,
            } => tape.conv2d(x, weight, *stride, *padding),
            Layer::ConvTranspose2d {
                weight,
                stride,
                padding,
            } => tape.conv2d_transpose(x, weight, *stride, *padding),
            Layer::Linear { weight, bias } => {
                let y = tape.matmul(x, weight)?;
                match bias {
                    Some(b) => tape.add(&y, b),
                    None => Ok(y),
                }
            }
            Layer::BatchNorm2d { gamma, beta, stats } => {
                tape.batchnorm2d(x, gamma, beta, stats, mode)
            }
            Layer::Relu => Ok(tape.relu(x)),
            Layer::LeakyRelu(slope) => Ok(tape.leaky_relu(x, *slope)),
            Layer::Tanh => Ok(tape.tanh(x)),
            Layer::Sigmoid => Ok(tape.sigmoid(x)),
            Layer::Reshape(dims) => {
                let batch = x.shape()[0];
                let mut shape = vec![batch];
                shape.extend_from_slice(dims);
                tape.reshape(x, shape)
            }
            Layer::Flatten => {
                let shape = x.shape();
                tape.reshape(x, vec![shape[0], shape[1..].iter().product()])
            }
        }
    }

    fn describe(&self) -> String {
        match self {
            Layer::Conv2d { weight, stride, .. } => {
                let s = weight.shape();
                format!("conv2d({}->{}, k{}, s{stride})", s[1], s[0], s[2])
            }
            Layer::ConvTranspose2d { weight, stride, .. } => {
                let s = weight.shape();
                format!("conv2d_transpose({}->{}, k{}, s{stride})", s[0], s[1], s[2])
            }
            Layer::Linear { weight, .. } => {
                let s = weight.shape();
                format!("linear({}->{})", s[0], s[1])
            }
            Layer::BatchNorm2d { gamma, .. } => format!("batchnorm2d({})", gamma.numel()),
            Layer::Relu => "relu".into(),
            Layer::LeakyRelu(s) => format!("leaky_relu({s})"),
            Layer::Tanh => "tanh".into(),
            Layer::Sigmoid => "sigmoid".into(),
            Layer::Reshape(d) => format!("reshape({d:?})"),
            Layer::Flatten => "flatten".into(),
        }
    }
}

/// An ordered layer stack with named parameters.
pub struct Network {
    pub layers: Vec<Layer>,
}

impl Network {
    pub fn forward(&self, tape: &Tape, input: &Tensor, mode: Mode) -> Result<Tensor, AdError> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward(tape, &x, mode)?;
        }
        Ok(x)
    }

    /// Trainable tensors in layer order.
    pub fn params(&self) -> Vec<Tensor> {
        self.named_params().into_iter().map(|(_, t)| t).collect()
    }

    /// Parameters named `<layer index>.<role>` for checkpointing.
    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv2d { weight, .. } | Layer::ConvTranspose2d { weight, .. } => {
                    out.push((format!("{i}.weight"), weight.clone()));
                }
                Layer::Linear { weight, bias } => {
                    out.push((format!("{i}.weight"), weight.clone()));
                    if let Some(b) = bias {
                        out.push((format!("{i}.bias"), b.clone()));
                    }
                }
                Layer::BatchNorm2d { gamma, beta, .. } => {
                    out.push((format!("{i}.gamma"), gamma.clone()));
                    out.push((format!("{i}.beta"), beta.clone()));
                }
                _ => {}
            }
        }
        out
    }

    pub fn zero_grads(&self) {
        for p in self.params() {
            p.zero_grad();
        }
    }

    /// One line per layer, e.g. for logging or sweep records.
    pub fn describe(&self) -> Vec<String> {
        self.layers.iter().map(Layer::describe).collect()
    }

    /// Checkpoint view: trainable parameters plus batchnorm running stats.
    pub fn state_dict(&self) -> Vec<(String, Tensor)> {
        let mut out = self.named_params();
        for (i, layer) in self.layers.iter().enumerate() {
            if let Layer::BatchNorm2d { stats, .. } = layer {
                let s = stats.borrow();
                out.push((
                    format!("{i}.running_mean"),
                    Tensor::new(vec![s.mean.len()], s.mean.clone()).expect("shape"),
                ));
                out.push((
                    format!("{i}.running_var"),
                    Tensor::new(vec![s.var.len()], s.var.clone()).expect("shape"),
                ));
            }
        }
        out
    }

    /// Copies a saved state dict back into this network, matching by name.
    pub fn load_state(&self, saved: &[(String, Tensor)]) -> Result<(), AdError> {
        let by_name: std::collections::HashMap<&str, &Tensor> =
            saved.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let own = self.state_dict();
        if own.len() != saved.len() {
            return Err(AdError::Checkpoint(format!(
                "checkpoint has {} entries, network expects {}",
                saved.len(),
                own.len()
            )));
        }
        for (name, own_t) in &own {
            let saved_t = by_name.get(name.as_str()).ok_or_else(|| {
                AdError::Checkpoint(format!("checkpoint is missing entry {name}"))
            })?;
            if own_t.shape() != saved_t.shape() {
                return Err(AdError::Checkpoint(format!(
                    "entry {name} has shape {:?}, expected {:?}",
                    saved_t.shape(),
                    own_t.shape()
                )));
            }
            let values = saved_t.to_vec();
            if let Some(rest) = name.strip_suffix(".running_mean") {
                let idx: usize = rest.parse().map_err(|_| {
                    AdError::Checkpoint(format!("bad layer index in {name}"))
                })?;
                if let Layer::BatchNorm2d { stats, .. } = &self.layers[idx] {
                    stats.borrow_mut().mean = values;
                }
            } else if let Some(rest) = name.strip_suffix(".running_var") {
                let idx: usize = rest.parse().map_err(|_| {
                    AdError::Checkpoint(format!("bad layer index in {name}"))
                })?;
                if let Layer::BatchNorm2d { stats, .. } = &self.layers[idx] {
                    stats.borrow_mut().var = values;
                }
            } else {
                own_t.update_values(|v| v.copy_from_slice(&values));
            }
        }
        Ok(())
    }
}

/// Weight init: normals with the DCGAN scale (0.02), gammas around 1.
pub(crate) struct Init<'r, R: Rng> {
    pub rng: &'r mut R,
}

impl<R: Rng> Init<'_, R> {
    fn normal(&mut self, n: usize, mean: f64, std: f64) -> Vec<f64> {
        let dist = Normal::new(mean, std).expect("valid normal");
        (0..n).map(|_| dist.sample(self.rng)).collect()
    }

    pub fn conv2d(&mut self, in_ch: usize, out_ch: usize, k: usize, stride: usize, padding: usize) -> Layer {
        let n = out_ch * in_ch * k * k;
        Layer::Conv2d {
            weight: Tensor::param(vec![out_ch, in_ch, k, k], self.normal(n, 0.0, 0.02))
                .expect("shape"),
            stride,
            padding,
        }
    }

    pub fn conv2d_transpose(&mut self, in_ch: usize, out_ch: usize, k: usize, stride: usize, padding: usize) -> Layer {
        let n = in_ch * out_ch * k * k;
        Layer::ConvTranspose2d {
            weight: Tensor::param(vec![in_ch, out_ch, k, k], self.normal(n, 0.0, 0.02))
                .expect("shape"),
            stride,
            padding,
        }
    }

    pub fn linear(&mut self, in_dim: usize, out_dim: usize, bias: bool) -> Layer {
        Layer::Linear {
            weight: Tensor::param(vec![in_dim, out_dim], self.normal(in_dim * out_dim, 0.0, 0.02))
                .expect("shape"),
            bias: bias.then(|| Tensor::param(vec![out_dim], vec![0.0; out_dim]).expect("shape")),
        }
    }

    pub fn batchnorm(&mut self, channels: usize) -> Layer {
        Layer::BatchNorm2d {
            gamma: Tensor::param(vec![channels], self.normal(channels, 1.0, 0.02)).expect("shape"),
            beta: Tensor::param(vec![channels], vec![0.0; channels]).expect("shape"),
            stats: RefCell::new(RunningStats::new(channels)),
        }
    }
}
