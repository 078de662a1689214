//! Discriminator and generator losses for the four formulations.
//!
//! Probabilities are clamped to [1e-7, 1 - 1e-7] before any logarithm.

use super::{GanError, GanLossKind};
use crate::autodiff::{Tape, Tensor};

const PROB_EPS: f64 = 1e-7;

fn mean_log_clamped(tape: &Tape, x: &Tensor) -> Result<Tensor, GanError> {
    let clamped = tape.clamp(x, PROB_EPS, 1.0 - PROB_EPS);
    Ok(tape.mean(&tape.log(&clamped)?))
}

/// Discriminator loss over batches of head outputs.
///
/// minimax / non-saturating: -mean(log d_real) - mean(log(1 - d_fake));
/// wasserstein: -mean(d_real) + mean(d_fake);
/// least squares: 0.5 mean((d_real - 1)^2) + 0.5 mean(d_fake^2).
pub fn disc_loss(
    tape: &Tape,
    kind: GanLossKind,
    d_real: &Tensor,
    d_fake: &Tensor,
) -> Result<Tensor, GanError> {
    match kind {
        GanLossKind::Minimax | GanLossKind::NonSaturating => {
            let real_term = mean_log_clamped(tape, d_real)?;
            let one_minus_fake = tape.affine(d_fake, -1.0, 1.0);
            let fake_term = mean_log_clamped(tape, &one_minus_fake)?;
            Ok(tape.affine(&tape.add(&real_term, &fake_term)?, -1.0, 0.0))
        }
        GanLossKind::Wasserstein => {
            Ok(tape.sub(&tape.mean(d_fake), &tape.mean(d_real))?)
        }
        GanLossKind::LeastSquares => {
            let real_shift = tape.affine(d_real, 1.0, -1.0);
            let real_term = tape.mean(&tape.mul(&real_shift, &real_shift)?);
            let fake_term = tape.mean(&tape.mul(d_fake, d_fake)?);
            Ok(tape.affine(&tape.add(&real_term, &fake_term)?, 0.5, 0.0))
        }
    }
}

/// Generator loss over a batch of discriminator outputs on fakes.
///
/// non-saturating: -mean(log d_fake); minimax: mean(log(1 - d_fake));
/// wasserstein: -mean(d_fake); least squares: 0.5 mean((d_fake - 1)^2).
pub fn gen_loss(tape: &Tape, kind: GanLossKind, d_fake: &Tensor) -> Result<Tensor, GanError> {
    match kind {
        GanLossKind::NonSaturating => {
            Ok(tape.affine(&mean_log_clamped(tape, d_fake)?, -1.0, 0.0))
        }
        GanLossKind::Minimax => {
            let one_minus = tape.affine(d_fake, -1.0, 1.0);
            mean_log_clamped(tape, &one_minus)
        }
        GanLossKind::Wasserstein => Ok(tape.affine(&tape.mean(d_fake), -1.0, 0.0)),
        GanLossKind::LeastSquares => {
            let shift = tape.affine(d_fake, 1.0, -1.0);
            Ok(tape.affine(&tape.mean(&tape.mul(&shift, &shift)?), 0.5, 0.0))
        }
    }
}

/// Clamps every parameter to [-c, c]; only valid under the Wasserstein loss.
pub fn clip_weights(kind: GanLossKind, params: &[Tensor], c: f64) -> Result<(), GanError> {
    if kind != GanLossKind::Wasserstein {
        return Err(GanError::Config(format!(
            "weight clipping requires the wasserstein loss, got {kind:?}"
        )));
    }
    for p in params {
        p.update_values(|values| {
            for v in values {
                *v = v.clamp(-c, c);
            }
        });
    }
    Ok(())
}
