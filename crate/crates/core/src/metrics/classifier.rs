//! A small convolutional shape classifier used as the scoring network.
//!
//! The score needs a classifier whose training data matches the evaluated
//! domain, so one is trained on the generated shape datasets directly.

use super::inception::ProbMatrix;
use super::MetricsError;
use crate::autodiff::{checkpoint, AdamState, Mode, Tape, Tensor};
use crate::gan::{Layer, Network};
use crate::rng::substream;
use crate::shapegen::{ShapeDataset, ShapeImage, ValueRange};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const NUM_CLASSES: usize = 3;

pub struct ShapeClassifier {
    pub network: Network,
    pub input_size: usize,
    pub val_accuracy: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ClassifierOptions {
    pub max_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub target_accuracy: f64,
    pub eval_every: usize,
    pub base_channels: usize,
}

impl Default for ClassifierOptions {
    fn default() -> Self {
        Self {
            max_steps: 4000,
            batch_size: 64,
            learning_rate: 1e-3,
            target_accuracy: 0.97,
            eval_every: 100,
            base_channels: 8,
        }
    }
}

#[derive(Serialize, Deserialize)]
pub struct ClassifierMeta {
    pub input_size: usize,
    pub val_accuracy: f64,
    pub seed: u64,
}

fn build_network<R: Rng>(
    input_size: usize,
    base: usize,
    rng: &mut R,
) -> Result<Network, MetricsError> {
    let downs = match input_size {
        16 => 2,
        32 => 3,
        64 => 4,
        other => {
            return Err(MetricsError::Config(format!(
                "unsupported classifier input size {other}"
            )))
        }
    };
    let mut init = crate::gan::layers_init(rng);
    let mut layers = vec![init.conv2d(1, base, 4, 2, 1), Layer::Relu];
    let mut ch = base;
    for _ in 1..downs {
        layers.push(init.conv2d(ch, ch * 2, 4, 2, 1));
        layers.push(init.batchnorm(ch * 2));
        layers.push(Layer::Relu);
        ch *= 2;
    }
    layers.push(Layer::Flatten);
    layers.push(init.linear(ch * 16, NUM_CLASSES, true));
    Ok(Network { layers })
}

/// Maps stored pixel values into the classifier's [-1, 1] input range.
/// Raw [0, 1] images go through 2x - 1; centered images are already
/// zero-mean and pass through (clamped), so mean-shifting remains visible
/// to the scorer.
pub(crate) fn classifier_input(img: &ShapeImage) -> Vec<f64> {
    match img.range {
        ValueRange::Raw => img.pixels.iter().map(|&v| 2.0 * v - 1.0).collect(),
        ValueRange::Centered => img.pixels.iter().map(|&v| v.clamp(-1.0, 1.0)).collect(),
    }
}

struct PreparedData {
    size: usize,
    train: Vec<(Vec<f64>, usize)>,
    val: Vec<(Vec<f64>, usize)>,
}

/// 90/10 split per class, in dataset order.
fn prepare(datasets: &[&ShapeDataset]) -> Result<PreparedData, MetricsError> {
    if datasets.len() != NUM_CLASSES {
        return Err(MetricsError::InvalidInput(format!(
            "expected one dataset per class ({NUM_CLASSES}), got {}",
            datasets.len()
        )));
    }
    let size = datasets[0].image_size();
    let mut classes_seen = [false; NUM_CLASSES];
    let mut train = Vec::new();
    let mut val = Vec::new();
    for ds in datasets {
        if ds.image_size() != size {
            return Err(MetricsError::InvalidInput(
                "datasets disagree on image size".into(),
            ));
        }
        if ds.len() < 1000 {
            return Err(MetricsError::InvalidInput(format!(
                "each class needs at least 1000 images, got {}",
                ds.len()
            )));
        }
        let class = ds.labels[0] as usize;
        if ds.labels.iter().any(|&l| l as usize != class) {
            return Err(MetricsError::InvalidInput(
                "per-class datasets must be single-class".into(),
            ));
        }
        if class >= NUM_CLASSES || classes_seen[class] {
            return Err(MetricsError::InvalidInput(format!(
                "bad or duplicate class {class}"
            )));
        }
        classes_seen[class] = true;
        let cut = ds.len() * 9 / 10;
        for (i, img) in ds.images.iter().enumerate() {
            let row = (classifier_input(img), class);
            if i < cut {
                train.push(row);
            } else {
                val.push(row);
            }
        }
    }
    if !classes_seen.iter().all(|&c| c) {
        return Err(MetricsError::InvalidInput(
            "all three classes must be present".into(),
        ));
    }
    Ok(PreparedData { size, train, val })
}

fn forward_batch(
    network: &Network,
    rows: &[&(Vec<f64>, usize)],
    size: usize,
    mode: Mode,
    tape: &Tape,
) -> Result<Tensor, MetricsError> {
    let plane = size * size;
    let mut values = Vec::with_capacity(rows.len() * plane);
    for (pixels, _) in rows {
        values.extend_from_slice(pixels);
    }
    let x = Tensor::raw(vec![rows.len(), 1, size, size], values, false);
    Ok(network.forward(tape, &x, mode)?)
}

fn accuracy(network: &Network, rows: &[(Vec<f64>, usize)], size: usize) -> Result<f64, MetricsError> {
    if rows.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for chunk in rows.chunks(256) {
        let refs: Vec<&(Vec<f64>, usize)> = chunk.iter().collect();
        let tape = Tape::inference();
        let logits = forward_batch(network, &refs, size, Mode::Eval, &tape)?;
        let v = logits.values();
        for (i, (_, label)) in chunk.iter().enumerate() {
            let row = &v[i * NUM_CLASSES..(i + 1) * NUM_CLASSES];
            let pred = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            if pred == *label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / rows.len() as f64)
}

/// Trains until the validation target is reached; errors with the achieved
/// accuracy if the step budget runs out first.
pub fn train_classifier(
    datasets: &[&ShapeDataset],
    seed: u64,
    options: &ClassifierOptions,
) -> Result<ShapeClassifier, MetricsError> {
    let (classifier, reached) = train_classifier_unchecked(datasets, seed, options)?;
    if !reached {
        return Err(MetricsError::UnderTrained {
            accuracy: classifier.val_accuracy,
            target: options.target_accuracy,
        });
    }
    Ok(classifier)
}

/// Same training loop without the accuracy gate; returns whether the target
/// was reached. Useful for sanity experiments on deliberately bad labels.
pub fn train_classifier_unchecked(
    datasets: &[&ShapeDataset],
    seed: u64,
    options: &ClassifierOptions,
) -> Result<(ShapeClassifier, bool), MetricsError> {
    let data = prepare(datasets)?;
    let mut init_rng = substream(seed, 0);
    let mut batch_rng = substream(seed, 1);
    let network = build_network(data.size, options.base_channels, &mut init_rng)?;
    let params = network.params();
    let mut adam = AdamState::new(&params, options.learning_rate, 0.9, 0.999);

    let mut best_accuracy = 0.0;
    let mut reached = false;
    for step in 0..options.max_steps {
        let rows: Vec<&(Vec<f64>, usize)> = (0..options.batch_size)
            .map(|_| &data.train[batch_rng.random_range(0..data.train.len())])
            .collect();
        let targets: Vec<usize> = rows.iter().map(|(_, l)| *l).collect();
        let tape = Tape::new();
        let logits = forward_batch(&network, &rows, data.size, Mode::Train, &tape)?;
        let loss = tape.softmax_cross_entropy(&logits, &targets)?;
        network.zero_grads();
        tape.backward(&loss)?;
        adam.step(&params)?;

        if (step + 1) % options.eval_every == 0 {
            best_accuracy = accuracy(&network, &data.val, data.size)?;
            if best_accuracy >= options.target_accuracy {
                reached = true;
                break;
            }
        }
    }
    if !reached {
        best_accuracy = accuracy(&network, &data.val, data.size)?;
        reached = best_accuracy >= options.target_accuracy;
    }
    Ok((
        ShapeClassifier {
            network,
            input_size: data.size,
            val_accuracy: best_accuracy,
            seed,
        },
        reached,
    ))
}

impl ShapeClassifier {
    /// One probability row per image, evaluation mode.
    pub fn predict_probs(&self, images: &[ShapeImage]) -> Result<ProbMatrix, MetricsError> {
        let mut data = Vec::with_capacity(images.len() * NUM_CLASSES);
        for chunk in images.chunks(256) {
            let plane = self.input_size * self.input_size;
            let mut values = Vec::with_capacity(chunk.len() * plane);
            for img in chunk {
                if img.size != self.input_size {
                    return Err(MetricsError::InvalidInput(format!(
                        "image size {} does not match classifier input {}",
                        img.size, self.input_size
                    )));
                }
                values.extend_from_slice(&classifier_input(img));
            }
            let x = Tensor::raw(vec![chunk.len(), 1, self.input_size, self.input_size], values, false);
            let tape = Tape::inference();
            let logits = self.network.forward(&tape, &x, Mode::Eval)?;
            let probs =
                crate::autodiff::row_softmax(&logits.values(), chunk.len(), NUM_CLASSES);
            data.extend_from_slice(&probs);
        }
        ProbMatrix::new(images.len(), NUM_CLASSES, data)
    }

    pub fn save(&self, path: &Path) -> Result<(), MetricsError> {
        checkpoint::save(&self.network.state_dict(), path)?;
        let meta = ClassifierMeta {
            input_size: self.input_size,
            val_accuracy: self.val_accuracy,
            seed: self.seed,
        };
        let meta_path = path.with_extension("meta.json");
        std::fs::write(
            meta_path,
            serde_json::to_string_pretty(&meta).expect("serializable meta"),
        )
        .map_err(crate::autodiff::AdError::Io)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MetricsError> {
        let meta_path = path.with_extension("meta.json");
        let meta: ClassifierMeta = serde_json::from_str(
            &std::fs::read_to_string(&meta_path).map_err(crate::autodiff::AdError::Io)?,
        )
        .map_err(|e| MetricsError::InvalidInput(format!("bad classifier meta: {e}")))?;
        let saved = checkpoint::load(path)?;
        // Rebuild with the recorded seed, then overwrite with saved values.
        let base = infer_base_channels(&saved)?;
        let mut init_rng = substream(meta.seed, 0);
        let network = build_network(meta.input_size, base, &mut init_rng)?;
        network.load_state(&saved)?;
        Ok(Self {
            network,
            input_size: meta.input_size,
            val_accuracy: meta.val_accuracy,
            seed: meta.seed,
        })
    }
}

fn infer_base_channels(saved: &[(String, Tensor)]) -> Result<usize, MetricsError> {
    saved
        .first()
        .map(|(_, t)| t.shape()[0])
        .ok_or_else(|| MetricsError::InvalidInput("empty classifier checkpoint".into()))
}

/// Shuffles labels per image (used by the label-permutation sanity check).
pub fn shuffle_labels(dataset: &mut ShapeDataset, seed: u64) {
    dataset.labels.shuffle(&mut substream(seed, 0));
}
