//! Adam optimizer with bias correction.

use super::tensor::Tensor;
use super::AdError;

struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Optimizer state over a fixed parameter list; `step` reads each parameter's
/// accumulated gradient and updates it in place.
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    slots: Vec<Moments>,
}

impl AdamState {
    pub fn new(params: &[Tensor], learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        let slots = params
            .iter()
            .map(|p| Moments {
                m: vec![0.0; p.numel()],
                v: vec![0.0; p.numel()],
            })
            .collect();
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon: 1e-8,
            step: 0,
            slots,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over the same parameter list the state was built for.
    /// Parameters without an accumulated gradient are treated as zero-grad.
    pub fn step(&mut self, params: &[Tensor]) -> Result<(), AdError> {
        if params.len() != self.slots.len() {
            return Err(AdError::ShapeMismatch(format!(
                "adam state holds {} slots, got {} params",
                self.slots.len(),
                params.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);

        for (param, slot) in params.iter().zip(&mut self.slots) {
            if param.numel() != slot.m.len() {
                return Err(AdError::ShapeMismatch(format!(
                    "param has {} values, slot expects {}",
                    param.numel(),
                    slot.m.len()
                )));
            }
            let grad = param.grad().unwrap_or_else(|| vec![0.0; param.numel()]);
            param.update_values(|values| {
                for i in 0..values.len() {
                    let g = grad[i];
                    slot.m[i] = self.beta1 * slot.m[i] + (1.0 - self.beta1) * g;
                    slot.v[i] = self.beta2 * slot.v[i] + (1.0 - self.beta2) * g * g;
                    let m_hat = slot.m[i] / bc1;
                    let v_hat = slot.v[i] / bc2;
                    values[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
                }
            });
        }
        Ok(())
    }
}
