//! The alternating adversarial training loop.

use super::loss::{clip_weights, disc_loss, gen_loss};
use super::model::{latent_batch, GanArch, GanModel, DEFAULT_BASE_CHANNELS};
use super::{GanError, GanLossKind};
use crate::autodiff::{checkpoint, AdamState, Mode, Tape, Tensor};
use crate::rng::substream;
use crate::shapegen::ShapeDataset;
use rand::Rng;
use std::path::PathBuf;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub batch_size: usize,
    /// Number of generator updates.
    pub steps: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub loss_kind: GanLossKind,
    /// Weight-clip bound; used only under the Wasserstein loss.
    pub clip_c: f64,
    pub disc_steps_per_gen_step: usize,
    pub seed: u64,
    pub base_channels: usize,
    /// When set, a checkpoint is written every N generator steps.
    pub checkpoint_every: Option<usize>,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            latent_dim: 64,
            batch_size: 64,
            steps: 4000,
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            loss_kind: GanLossKind::NonSaturating,
            clip_c: 0.01,
            disc_steps_per_gen_step: 1,
            seed: 0,
            base_channels: DEFAULT_BASE_CHANNELS,
            checkpoint_every: None,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    /// Defaults for the given loss; Wasserstein trains the critic 5x per
    /// generator step.
    pub fn for_loss(loss_kind: GanLossKind) -> Self {
        Self {
            loss_kind,
            disc_steps_per_gen_step: if loss_kind == GanLossKind::Wasserstein { 5 } else { 1 },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GanError> {
        for (name, v) in [
            ("latent_dim", self.latent_dim),
            ("batch_size", self.batch_size),
            ("disc_steps_per_gen_step", self.disc_steps_per_gen_step),
            ("base_channels", self.base_channels),
        ] {
            if v == 0 {
                return Err(GanError::Config(format!("{name} must be positive")));
            }
        }
        if self.loss_kind == GanLossKind::Wasserstein && !(self.clip_c > 0.0) {
            return Err(GanError::Config(
                "clip_c must be positive under the wasserstein loss".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(GanError::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossCurveEntry {
    pub step: usize,
    pub gen_loss: f64,
    pub disc_loss: f64,
    pub d_real_mean: f64,
    pub d_fake_mean: f64,
}

/// Per-generator-step training history.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossCurve {
    pub entries: Vec<LossCurveEntry>,
}

impl LossCurve {
    pub const CSV_HEADER: &'static str = "step,gen_loss,disc_loss,d_real_mean,d_fake_mean";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.step, e.gen_loss, e.disc_loss, e.d_real_mean, e.d_fake_mean
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, GanError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                if line.trim() != Self::CSV_HEADER {
                    return Err(GanError::Config(format!("unexpected loss CSV header: {line}")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(GanError::Config(format!("bad loss CSV line: {line}")));
            }
            let parse = |s: &str| -> Result<f64, GanError> {
                s.parse().map_err(|_| GanError::Config(format!("bad number {s}")))
            };
            entries.push(LossCurveEntry {
                step: fields[0]
                    .parse()
                    .map_err(|_| GanError::Config(format!("bad step {}", fields[0])))?,
                gen_loss: parse(fields[1])?,
                disc_loss: parse(fields[2])?,
                d_real_mean: parse(fields[3])?,
                d_fake_mean: parse(fields[4])?,
            });
        }
        Ok(Self { entries })
    }

    pub fn gen_series(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.gen_loss).collect()
    }

    pub fn disc_series(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.disc_loss).collect()
    }
}

/// Rescales dataset pixels to [-1, 1] to match the generator's tanh output:
/// raw [0, 1] images map through 2x - 1, centered images through a linear
/// rescale by the dataset's min and max.
fn to_tanh_range(dataset: &ShapeDataset) -> Vec<Vec<f64>> {
    if !dataset.centered {
        return dataset
            .images
            .iter()
            .map(|img| img.pixels.iter().map(|&v| 2.0 * v - 1.0).collect())
            .collect();
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for img in &dataset.images {
        for &v in &img.pixels {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let span = hi - lo;
    dataset
        .images
        .iter()
        .map(|img| {
            img.pixels
                .iter()
                .map(|&v| {
                    if span > 0.0 {
                        2.0 * (v - lo) / span - 1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

fn batch_tensor(data: &[Vec<f64>], indices: &[usize], size: usize) -> Tensor {
    let plane = size * size;
    let mut values = Vec::with_capacity(indices.len() * plane);
    for &i in indices {
        values.extend_from_slice(&data[i]);
    }
    Tensor::raw(vec![indices.len(), 1, size, size], values, false)
}

/// Alternating updates: `disc_steps_per_gen_step` discriminator updates
/// (with weight clipping under Wasserstein), then one generator update.
/// Deterministic given the dataset and config.
pub fn train(dataset: &ShapeDataset, config: &TrainConfig) -> Result<(GanModel, LossCurve), GanError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(GanError::Config("dataset is empty".into()));
    }
    let size = dataset.image_size();
    let arch = GanArch {
        latent_dim: config.latent_dim,
        image_size: size,
        base_channels: config.base_channels,
        loss_kind: config.loss_kind,
    };
    let mut gen_rng = substream(config.seed, 0);
    let mut disc_rng = substream(config.seed, 1);
    let mut index_rng = substream(config.seed, 2);
    let mut latent_rng = substream(config.seed, 3);
    let model = GanModel::new(arch, &mut gen_rng, &mut disc_rng)?;

    let data = to_tanh_range(dataset);
    let n = data.len();

    let gen_params = model.generator.params();
    let disc_params = model.discriminator.params();
    let mut adam_gen = AdamState::new(&gen_params, config.learning_rate, config.beta1, config.beta2);
    let mut adam_disc = AdamState::new(&disc_params, config.learning_rate, config.beta1, config.beta2);

    let mut curve = LossCurve::default();
    for step in 0..config.steps {
        let mut disc_loss_value = 0.0;
        let mut d_real_mean = 0.0;
        let mut d_fake_mean = 0.0;

        for _ in 0..config.disc_steps_per_gen_step {
            let indices: Vec<usize> = (0..config.batch_size)
                .map(|_| index_rng.random_range(0..n))
                .collect();
            let real = batch_tensor(&data, &indices, size);
            // Fakes are constants for the discriminator update.
            let z = latent_batch(config.batch_size, config.latent_dim, &mut latent_rng);
            let fake = {
                let no_grad = Tape::inference();
                model.generator.forward(&no_grad, &z, Mode::Train)?
            };

            let tape = Tape::new();
            let d_real = model.discriminator.forward(&tape, &real, Mode::Train)?;
            let d_fake = model.discriminator.forward(&tape, &fake, Mode::Train)?;
            let loss = disc_loss(&tape, config.loss_kind, &d_real, &d_fake)?;

            disc_loss_value = loss.item()?;
            d_real_mean = mean_of(&d_real);
            d_fake_mean = mean_of(&d_fake);
            if !disc_loss_value.is_finite() {
                return Err(GanError::Diverged {
                    last_valid_step: step.checked_sub(1),
                    curve,
                });
            }

            model.discriminator.zero_grads();
            tape.backward(&loss)?;
            adam_disc.step(&disc_params)?;
            if config.loss_kind == GanLossKind::Wasserstein {
                clip_weights(config.loss_kind, &disc_params, config.clip_c)?;
            }
        }

        // Generator update: gradients flow through the (frozen) discriminator.
        let z = latent_batch(config.batch_size, config.latent_dim, &mut latent_rng);
        let tape = Tape::new();
        for p in &disc_params {
            p.set_requires_grad(false);
        }
        let fake = model.generator.forward(&tape, &z, Mode::Train)?;
        let d_fake = model.discriminator.forward(&tape, &fake, Mode::Train)?;
        let loss = gen_loss(&tape, config.loss_kind, &d_fake)?;
        let gen_loss_value = loss.item()?;

        if !gen_loss_value.is_finite() {
            for p in &disc_params {
                p.set_requires_grad(true);
            }
            return Err(GanError::Diverged {
                last_valid_step: step.checked_sub(1),
                curve,
            });
        }

        model.generator.zero_grads();
        tape.backward(&loss)?;
        for p in &disc_params {
            p.set_requires_grad(true);
        }
        adam_gen.step(&gen_params)?;

        curve.entries.push(LossCurveEntry {
            step,
            gen_loss: gen_loss_value,
            disc_loss: disc_loss_value,
            d_real_mean,
            d_fake_mean,
        });

        if let (Some(every), Some(dir)) = (config.checkpoint_every, &config.checkpoint_dir) {
            if every > 0 && (step + 1) % every == 0 {
                std::fs::create_dir_all(dir).map_err(crate::autodiff::AdError::Io)?;
                let path = dir.join(format!("step_{:06}.pprb", step + 1));
                checkpoint::save(&model.state_dict(), &path)?;
            }
        }
    }

    Ok((model, curve))
}

fn mean_of(t: &Tensor) -> f64 {
    let v = t.values();
    v.iter().sum::<f64>() / v.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapegen::{generate_dataset, PolygonSpec};

    fn tiny_dataset(seed: u64) -> ShapeDataset {
        generate_dataset(
            &PolygonSpec::new(3, 20.0, false)
                .with_count(32)
                .with_seed(seed),
        )
        .unwrap()
    }

    fn tiny_config(kind: GanLossKind) -> TrainConfig {
        TrainConfig {
            batch_size: 8,
            steps: 3,
            latent_dim: 8,
            base_channels: 4,
            seed: 11,
            ..TrainConfig::for_loss(kind)
        }
    }

    #[test]
    fn zero_steps_returns_empty_curve() {
        let ds = tiny_dataset(1);
        let mut cfg = tiny_config(GanLossKind::NonSaturating);
        cfg.steps = 0;
        let (_model, curve) = train(&ds, &cfg).unwrap();
        assert!(curve.entries.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let ds = tiny_dataset(2);
        let cfg = tiny_config(GanLossKind::NonSaturating);
        let (m1, c1) = train(&ds, &cfg).unwrap();
        let (m2, c2) = train(&ds, &cfg).unwrap();
        assert_eq!(c1, c2);
        for ((n1, t1), (n2, t2)) in m1.state_dict().iter().zip(m2.state_dict().iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1.to_vec(), t2.to_vec(), "param {n1}");
        }
    }

    #[test]
    fn wasserstein_clipping_holds_after_every_update() {
        let ds = tiny_dataset(3);
        let cfg = tiny_config(GanLossKind::Wasserstein);
        let (model, curve) = train(&ds, &cfg).unwrap();
        assert_eq!(curve.entries.len(), 3);
        for p in model.discriminator.params() {
            for v in p.to_vec() {
                assert!(v.abs() <= cfg.clip_c + 1e-15, "weight {v} above clip");
            }
        }
    }

    #[test]
    fn losses_are_recorded_per_step_and_finite() {
        let ds = tiny_dataset(4);
        for kind in [
            GanLossKind::Minimax,
            GanLossKind::NonSaturating,
            GanLossKind::Wasserstein,
            GanLossKind::LeastSquares,
        ] {
            let cfg = tiny_config(kind);
            let (_m, curve) = train(&ds, &cfg).unwrap();
            assert_eq!(curve.entries.len(), cfg.steps, "{kind:?}");
            let mut prev = None;
            for e in &curve.entries {
                assert!(e.gen_loss.is_finite() && e.disc_loss.is_finite());
                assert!(e.d_real_mean.is_finite() && e.d_fake_mean.is_finite());
                if let Some(p) = prev {
                    assert!(e.step > p);
                }
                prev = Some(e.step);
            }
        }
    }

    #[test]
    fn diverged_training_reports_last_valid_step() {
        let ds = tiny_dataset(5);
        let mut cfg = tiny_config(GanLossKind::LeastSquares);
        cfg.learning_rate = 1e200;
        cfg.steps = 10;
        match train(&ds, &cfg) {
            Err(GanError::Diverged { last_valid_step, .. }) => {
                assert!(last_valid_step.is_none() || last_valid_step.unwrap() < 10);
            }
            Err(other) => panic!("expected divergence, got {other:?}"),
            Ok(_) => panic!("expected divergence, training succeeded"),
        }
    }

    #[test]
    fn loss_curve_csv_roundtrip() {
        let curve = LossCurve {
            entries: vec![
                LossCurveEntry {
                    step: 0,
                    gen_loss: 0.6931471805599453,
                    disc_loss: 1.386294,
                    d_real_mean: 0.5,
                    d_fake_mean: 0.25,
                },
                LossCurveEntry {
                    step: 1,
                    gen_loss: -0.125,
                    disc_loss: 2.0,
                    d_real_mean: 0.75,
                    d_fake_mean: 0.125,
                },
            ],
        };
        let text = curve.to_csv();
        assert!(text.starts_with(LossCurve::CSV_HEADER));
        let parsed = LossCurve::from_csv(&text).unwrap();
        assert_eq!(curve, parsed);
    }
}
