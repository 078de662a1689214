//! DCGAN-style models, the four adversarial loss formulations, and the
//! alternating training loop.

mod layers;
mod loss;
mod model;
mod train;

pub use layers::{Layer, Network};

pub(crate) fn layers_init<R: rand::Rng>(rng: &mut R) -> layers::Init<'_, R> {
    layers::Init { rng }
}
pub use loss::{clip_weights, disc_loss, gen_loss};
pub use model::{
    build_discriminator, build_generator, sample, GanArch, GanModel, DEFAULT_BASE_CHANNELS,
};
pub use train::{train, LossCurve, LossCurveEntry, TrainConfig};

use crate::autodiff::AdError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The adversarial loss formulation; Wasserstein implies a linear critic
/// head and weight clipping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanLossKind {
    Minimax,
    NonSaturating,
    Wasserstein,
    LeastSquares,
}

impl GanLossKind {
    /// True when the discriminator ends in a sigmoid (probability head).
    pub fn sigmoid_head(self) -> bool {
        matches!(self, GanLossKind::Minimax | GanLossKind::NonSaturating)
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            GanLossKind::Minimax => "minimax",
            GanLossKind::NonSaturating => "ns",
            GanLossKind::Wasserstein => "wgan",
            GanLossKind::LeastSquares => "lsgan",
        }
    }

    pub fn parse_cli(name: &str) -> Option<Self> {
        match name {
            "minimax" => Some(GanLossKind::Minimax),
            "ns" => Some(GanLossKind::NonSaturating),
            "wgan" => Some(GanLossKind::Wasserstein),
            "lsgan" => Some(GanLossKind::LeastSquares),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum GanError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training diverged after step {last_valid_step:?}")]
    Diverged {
        last_valid_step: Option<usize>,
        curve: LossCurve,
    },
    #[error(transparent)]
    Ad(#[from] AdError),
}
