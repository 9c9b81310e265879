use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::{fit, BatchLearner, SparseFeature};
use crate::data::{Dataset, MatchRecord};
use crate::error::{Error, Result};
use crate::model::sigmoid;
use crate::registry::AvatarRegistry;
use crate::training::EpochStats;

/// Mini-batch gradient descent with an inverse-time learning-rate schedule,
/// `lr / (1 + decay * (epoch - 1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2_lambda: f64,
    pub seed: u64,
}

impl Default for LrConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            decay: 0.1,
            epochs: 10,
            batch_size: 256,
            l2_lambda: 0.0,
            seed: 0,
        }
    }
}

impl LrConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(self.decay >= 0.0 && self.l2_lambda >= 0.0) {
            return Err(Error::InvalidConfig("decay and l2_lambda must be >= 0".into()));
        }
        Ok(())
    }
}

/// Logistic regression over the `2N` red/blue indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    registry: AvatarRegistry,
    weights: Array1<f64>,
    intercept: f64,
}

impl LogisticModel {
    pub fn new(registry: AvatarRegistry, weights: Array1<f64>, intercept: f64) -> Result<Self> {
        if weights.len() != 2 * registry.len() {
            return Err(Error::DimensionMismatch {
                what: "logistic weights",
                expected: 2 * registry.len(),
                found: weights.len(),
            });
        }
        if !weights.iter().all(|w| w.is_finite()) || !intercept.is_finite() {
            return Err(Error::NonFinite("logistic weights".into()));
        }
        Ok(Self {
            registry,
            weights,
            intercept,
        })
    }

    pub fn registry(&self) -> &AvatarRegistry {
        &self.registry
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn logit(&self, feature: &SparseFeature) -> f64 {
        self.intercept + feature.active().iter().map(|&i| self.weights[i]).sum::<f64>()
    }

    pub fn predict(&self, record: &MatchRecord) -> Result<f64> {
        let feature = super::encode_match(record, self.registry.len())?;
        Ok(sigmoid(self.logit(&feature)))
    }
}

#[derive(Clone)]
struct Learner {
    model: LogisticModel,
    config: LrConfig,
    grad: Vec<f64>,
}

impl BatchLearner for Learner {
    fn logit(&self, feature: &SparseFeature) -> f64 {
        self.model.logit(feature)
    }

    fn step(&mut self, batch: &[(SparseFeature, f64)], epoch: usize) -> Result<()> {
        let lr = self.config.learning_rate / (1.0 + self.config.decay * (epoch - 1) as f64);
        let scale = 1.0 / batch.len() as f64;
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_intercept = 0.0;
        for (feature, label) in batch {
            let residual = (sigmoid(self.model.logit(feature)) - label) * scale;
            grad_intercept += residual;
            for &i in feature.active() {
                self.grad[i] += residual;
            }
        }
        let l2 = self.config.l2_lambda;
        for (w, g) in self.model.weights.iter_mut().zip(&self.grad) {
            *w -= lr * (g + l2 * *w);
        }
        self.model.intercept -= lr * grad_intercept;
        Ok(())
    }

    fn penalty(&self) -> f64 {
        0.5 * self.config.l2_lambda * self.model.weights.iter().map(|w| w * w).sum::<f64>()
    }

    fn is_finite(&self) -> bool {
        self.model.intercept.is_finite() && self.model.weights.iter().all(|w| w.is_finite())
    }
}

/// Fits an L2-regularised logistic regression. Weights start at zero, so the
/// result is deterministic given the shuffling seed.
pub fn train_logistic_regression(
    data: &Dataset,
    config: &LrConfig,
    validation: Option<&Dataset>,
) -> Result<(LogisticModel, Vec<EpochStats>)> {
    config.validate()?;
    let n = data.registry().len();
    let learner = Learner {
        model: LogisticModel::new(data.registry().clone(), Array1::zeros(2 * n), 0.0)?,
        config: config.clone(),
        grad: vec![0.0; 2 * n],
    };
    let fitted = fit(learner, data, validation, config.epochs, config.batch_size, config.seed)?;
    Ok((fitted.model.model, fitted.history))
}
