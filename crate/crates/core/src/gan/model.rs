//! Generator and discriminator construction, and sampling from a model.

use super::layers::{Init, Network};
use super::{GanError, GanLossKind};
use crate::autodiff::{Mode, Tape, Tensor};
use crate::shapegen::{ShapeImage, ValueRange};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Channel width of the last hidden block; earlier blocks double it.
pub const DEFAULT_BASE_CHANNELS: usize = 16;

#[derive(Debug, Clone, Copy)]
pub struct GanArch {
    pub latent_dim: usize,
    pub image_size: usize,
    pub base_channels: usize,
    pub loss_kind: GanLossKind,
}

fn upsample_blocks(image_size: usize) -> Result<usize, GanError> {
    match image_size {
        16 => Ok(2),
        32 => Ok(3),
        64 => Ok(4),
        other => Err(GanError::Config(format!(
            "unsupported image_size {other}; expected 16, 32 or 64"
        ))),
    }
}

/// Projection from the latent vector to a 4x4 feature map, then transposed
/// convolutions doubling resolution until `image_size`. Hidden blocks use
/// batchnorm + ReLU; the output layer has no batchnorm and ends in tanh.
pub fn build_generator<R: Rng>(
    latent_dim: usize,
    image_size: usize,
    base_channels: usize,
    rng: &mut R,
) -> Result<Network, GanError> {
    let ups = upsample_blocks(image_size)?;
    let mut init = Init { rng };
    let ch0 = base_channels << (ups - 1);

    let mut layers = vec![
        init.linear(latent_dim, ch0 * 16, false),
        super::layers::Layer::Reshape(vec![ch0, 4, 4]),
        init.batchnorm(ch0),
        super::layers::Layer::Relu,
    ];
    let mut ch = ch0;
    for _ in 0..ups - 1 {
        layers.push(init.conv2d_transpose(ch, ch / 2, 4, 2, 1));
        layers.push(init.batchnorm(ch / 2));
        layers.push(super::layers::Layer::Relu);
        ch /= 2;
    }
    layers.push(init.conv2d_transpose(ch, 1, 4, 2, 1));
    layers.push(super::layers::Layer::Tanh);
    Ok(Network { layers })
}

/// Strided convolutions halving resolution down to 4x4, then a scalar head.
/// LeakyReLU(0.2) activations, batchnorm on every block except the first;
/// the head is sigmoid for probability losses, linear otherwise.
pub fn build_discriminator<R: Rng>(
    image_size: usize,
    loss_kind: GanLossKind,
    base_channels: usize,
    rng: &mut R,
) -> Result<Network, GanError> {
    let downs = upsample_blocks(image_size)?;
    let mut init = Init { rng };

    let mut layers = vec![
        init.conv2d(1, base_channels, 4, 2, 1),
        super::layers::Layer::LeakyRelu(0.2),
    ];
    let mut ch = base_channels;
    for _ in 1..downs {
        layers.push(init.conv2d(ch, ch * 2, 4, 2, 1));
        layers.push(init.batchnorm(ch * 2));
        layers.push(super::layers::Layer::LeakyRelu(0.2));
        ch *= 2;
    }
    layers.push(super::layers::Layer::Flatten);
    layers.push(init.linear(ch * 16, 1, true));
    if loss_kind.sigmoid_head() {
        layers.push(super::layers::Layer::Sigmoid);
    }
    Ok(Network { layers })
}

pub struct GanModel {
    pub generator: Network,
    pub discriminator: Network,
    pub arch: GanArch,
}

impl GanModel {
    pub fn new<R: Rng>(arch: GanArch, gen_rng: &mut R, disc_rng: &mut R) -> Result<Self, GanError> {
        Ok(Self {
            generator: build_generator(arch.latent_dim, arch.image_size, arch.base_channels, gen_rng)?,
            discriminator: build_discriminator(
                arch.image_size,
                arch.loss_kind,
                arch.base_channels,
                disc_rng,
            )?,
            arch,
        })
    }

    /// Checkpoint state with `gen.` / `disc.` prefixes, including batchnorm
    /// running stats.
    pub fn state_dict(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (name, t) in self.generator.state_dict() {
            out.push((format!("gen.{name}"), t));
        }
        for (name, t) in self.discriminator.state_dict() {
            out.push((format!("disc.{name}"), t));
        }
        out
    }

    /// Generator forward over a latent batch; output (n, 1, size, size) in [-1, 1].
    pub fn generate<R: Rng>(&self, n: usize, mode: Mode, rng: &mut R) -> Result<Tensor, GanError> {
        let z = latent_batch(n, self.arch.latent_dim, rng);
        let tape = Tape::inference();
        Ok(self.generator.forward(&tape, &z, mode)?)
    }
}

pub fn latent_batch<R: Rng>(n: usize, latent_dim: usize, rng: &mut R) -> Tensor {
    let values: Vec<f64> = (0..n * latent_dim)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Tensor::raw(vec![n, latent_dim], values, false)
}

/// Draws `n` images from the generator and rescales tanh output from
/// [-1, 1] back to [0, 1].
pub fn sample<R: Rng>(model: &GanModel, n: usize, rng: &mut R) -> Result<Vec<ShapeImage>, GanError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let out = model.generate(n, Mode::Eval, rng)?;
    let size = model.arch.image_size;
    let values = out.values();
    let plane = size * size;
    let images = (0..n)
        .map(|i| ShapeImage {
            size,
            pixels: values[i * plane..(i + 1) * plane]
                .iter()
                .map(|&v| ((v + 1.0) / 2.0).clamp(0.0, 1.0))
                .collect(),
            range: ValueRange::Raw,
        })
        .collect();
    Ok(images)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn arch(kind: GanLossKind) -> GanArch {
        GanArch {
            latent_dim: 8,
            image_size: 32,
            base_channels: 4,
            loss_kind: kind,
        }
    }

    #[test]
    fn generator_output_shape_and_range() {
        let mut g = substream(1, 0);
        let mut d = substream(1, 1);
        let model = GanModel::new(arch(GanLossKind::NonSaturating), &mut g, &mut d).unwrap();
        let out = model.generate(3, Mode::Train, &mut substream(1, 2)).unwrap();
        assert_eq!(out.shape(), vec![3, 1, 32, 32]);
        assert!(out.values().iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }

    #[test]
    fn discriminator_head_types() {
        let tape = Tape::inference();
        let x = Tensor::zeros(vec![2, 1, 32, 32]);
        let mut r = substream(2, 0);
        let sig = build_discriminator(32, GanLossKind::Minimax, 4, &mut r).unwrap();
        let y = sig.forward(&tape, &x, Mode::Train).unwrap();
        assert_eq!(y.shape(), vec![2, 1]);
        assert!(y.values().iter().all(|&v| v > 0.0 && v < 1.0));

        let mut r = substream(2, 1);
        let lin = build_discriminator(32, GanLossKind::Wasserstein, 4, &mut r).unwrap();
        let y = lin.forward(&tape, &x, Mode::Train).unwrap();
        assert_eq!(y.shape(), vec![2, 1]);
    }

    #[test]
    fn identical_seeds_build_identical_parameters() {
        let build = || {
            let mut g = substream(5, 0);
            let mut d = substream(5, 1);
            GanModel::new(arch(GanLossKind::NonSaturating), &mut g, &mut d).unwrap()
        };
        let (a, b) = (build(), build());
        for ((n1, t1), (n2, t2)) in a.state_dict().iter().zip(b.state_dict().iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1.to_vec(), t2.to_vec());
        }
    }

    #[test]
    fn unsupported_image_size_is_config_error() {
        let mut r = substream(3, 0);
        assert!(matches!(
            build_generator(8, 24, 4, &mut r),
            Err(GanError::Config(_))
        ));
    }

    #[test]
    fn sample_empty_and_range() {
        let mut g = substream(4, 0);
        let mut d = substream(4, 1);
        let model = GanModel::new(arch(GanLossKind::LeastSquares), &mut g, &mut d).unwrap();
        assert!(sample(&model, 0, &mut substream(4, 2)).unwrap().is_empty());
        let imgs = sample(&model, 2, &mut substream(4, 3)).unwrap();
        assert_eq!(imgs.len(), 2);
        for img in &imgs {
            assert_eq!(img.pixels.len(), 32 * 32);
            assert!(img.pixels.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn fixed_rng_gives_identical_batches() {
        let mut g = substream(6, 0);
        let mut d = substream(6, 1);
        let model = GanModel::new(arch(GanLossKind::NonSaturating), &mut g, &mut d).unwrap();
        let a = sample(&model, 4, &mut substream(6, 9)).unwrap();
        let b = sample(&model, 4, &mut substream(6, 9)).unwrap();
        assert_eq!(a, b);
    }
}
