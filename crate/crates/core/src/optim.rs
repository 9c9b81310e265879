use crate::error::{Error, Result};

/// Per-coordinate AdaGrad: the accumulator collects squared gradients and
/// each coordinate moves by `lr * g / (sqrt(G) + eps)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaGrad {
    pub learning_rate: f64,
    pub epsilon: f64,
}

impl AdaGrad {
    pub fn new(learning_rate: f64, epsilon: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "adagrad epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self {
            learning_rate,
            epsilon,
        })
    }

    pub fn update(&self, params: &mut [f64], accumulators: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() || accumulators.len() != grads.len() {
            return Err(Error::DimensionMismatch {
                what: "adagrad block",
                expected: params.len(),
                found: grads.len().max(accumulators.len()),
            });
        }
        for ((theta, acc), &g) in params.iter_mut().zip(accumulators.iter_mut()).zip(grads) {
            if g == 0.0 {
                continue;
            }
            *acc += g * g;
            *theta -= self.learning_rate * g / (acc.sqrt() + self.epsilon);
        }
        Ok(())
    }
}
