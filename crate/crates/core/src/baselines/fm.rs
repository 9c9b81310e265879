use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{fit, BatchLearner, SparseFeature};
use crate::data::{Dataset, MatchRecord};
use crate::error::{Error, Result};
use crate::model::{dot, sigmoid};
use crate::optim::AdaGrad;
use crate::registry::{AvatarId, AvatarRegistry};
use crate::training::EpochStats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FmConfig {
    pub latent_dim: usize,
    pub learning_rate: f64,
    pub adagrad_epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2_lambda: f64,
    /// Half-width of the uniform factor initialisation; `None` means `0.1 / sqrt(K)`.
    pub init_scale: Option<f64>,
    pub seed: u64,
}

impl Default for FmConfig {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            learning_rate: 0.05,
            adagrad_epsilon: 1e-8,
            batch_size: 512,
            epochs: 20,
            l2_lambda: 0.0,
            init_scale: None,
            seed: 0,
        }
    }
}

/// Second-order factorization machine over the `2N` red/blue indicators.
/// Avatar `i` owns rows `i` (as red) and `N + i` (as blue) of each block.
#[derive(Debug, Clone, PartialEq)]
pub struct FmModel {
    registry: AvatarRegistry,
    first_order: Array1<f64>,
    factors: Array2<f64>,
    intercept: f64,
}

impl FmModel {
    pub fn new(
        registry: AvatarRegistry,
        first_order: Array1<f64>,
        factors: Array2<f64>,
        intercept: f64,
    ) -> Result<Self> {
        let width = 2 * registry.len();
        if first_order.len() != width {
            return Err(Error::DimensionMismatch {
                what: "fm first-order weights",
                expected: width,
                found: first_order.len(),
            });
        }
        if factors.nrows() != width {
            return Err(Error::DimensionMismatch {
                what: "fm factor rows",
                expected: width,
                found: factors.nrows(),
            });
        }
        if factors.ncols() == 0 {
            return Err(Error::InvalidConfig("fm latent_dim must be at least 1".into()));
        }
        let finite = first_order.iter().chain(factors.iter()).all(|v| v.is_finite());
        if !finite || !intercept.is_finite() {
            return Err(Error::NonFinite("fm parameters".into()));
        }
        Ok(Self {
            registry,
            first_order,
            factors: factors.as_standard_layout().into_owned(),
            intercept,
        })
    }

    pub fn registry(&self) -> &AvatarRegistry {
        &self.registry
    }

    pub fn first_order(&self) -> &Array1<f64> {
        &self.first_order
    }

    pub fn factors(&self) -> &Array2<f64> {
        &self.factors
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn latent_dim(&self) -> usize {
        self.factors.ncols()
    }

    fn factor(&self, row: usize) -> &[f64] {
        let k = self.latent_dim();
        &self.factors.as_slice().expect("standard layout")[row * k..(row + 1) * k]
    }

    pub fn predict(&self, record: &MatchRecord) -> Result<f64> {
        let feature = super::encode_match(record, self.registry.len())?;
        Ok(sigmoid(fm_logit(self, &feature)))
    }

    fn check_pair(&self, i: AvatarId, j: AvatarId) -> Result<()> {
        let n = self.registry.len();
        for id in [i, j] {
            if id >= n {
                return Err(Error::AvatarOutOfRange { index: id, n });
            }
        }
        if i == j {
            return Err(Error::SelfPair(i));
        }
        Ok(())
    }

    /// Teammate interaction `<v_i, v_j>` of the red block.
    pub fn synergy(&self, i: AvatarId, j: AvatarId) -> Result<f64> {
        self.check_pair(i, j)?;
        Ok(dot(self.factor(i), self.factor(j)))
    }

    /// Cross-team interaction `<v_i, v_{N+j}>`, red `i` against blue `j`.
    pub fn opposition(&self, i: AvatarId, j: AvatarId) -> Result<f64> {
        self.check_pair(i, j)?;
        Ok(dot(self.factor(i), self.factor(self.registry.len() + j)))
    }

    pub fn factor_row(&self, row: usize) -> ArrayView1<'_, f64> {
        self.factors.row(row)
    }
}

/// Intercept plus active first-order weights plus `<v_i, v_j>` over every
/// unordered active pair, using `((sum v)^2 - sum v^2) / 2` per dimension.
pub fn fm_logit(fm: &FmModel, feature: &SparseFeature) -> f64 {
    let k = fm.latent_dim();
    let mut linear = fm.intercept;
    let mut pairs = 0.0;
    for f in 0..k {
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for &i in feature.active() {
            let v = fm.factor(i)[f];
            sum += v;
            sum_sq += v * v;
        }
        pairs += 0.5 * (sum * sum - sum_sq);
    }
    for &i in feature.active() {
        linear += fm.first_order[i];
    }
    linear + pairs
}

#[derive(Clone)]
struct Learner {
    model: FmModel,
    config: FmConfig,
    optimizer: AdaGrad,
    acc_first: Vec<f64>,
    acc_factors: Vec<f64>,
    acc_intercept: [f64; 1],
    grad_first: Vec<f64>,
    grad_factors: Vec<f64>,
}

impl BatchLearner for Learner {
    fn logit(&self, feature: &SparseFeature) -> f64 {
        fm_logit(&self.model, feature)
    }

    fn step(&mut self, batch: &[(SparseFeature, f64)], _epoch: usize) -> Result<()> {
        let k = self.model.latent_dim();
        let scale = 1.0 / batch.len() as f64;
        self.grad_first.iter_mut().for_each(|g| *g = 0.0);
        self.grad_factors.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_intercept = 0.0;
        let mut sums = vec![0.0; k];
        for (feature, label) in batch {
            let residual = (sigmoid(fm_logit(&self.model, feature)) - label) * scale;
            grad_intercept += residual;
            sums.iter_mut().for_each(|s| *s = 0.0);
            for &i in feature.active() {
                for (s, v) in sums.iter_mut().zip(self.model.factor(i)) {
                    *s += v;
                }
            }
            for &i in feature.active() {
                self.grad_first[i] += residual;
                let v = self.model.factor(i);
                let g = &mut self.grad_factors[i * k..(i + 1) * k];
                for ((g, s), vi) in g.iter_mut().zip(&sums).zip(v) {
                    *g += residual * (s - vi);
                }
            }
        }
        let l2 = self.config.l2_lambda;
        if l2 > 0.0 {
            for (g, w) in self.grad_first.iter_mut().zip(self.model.first_order.iter()) {
                *g += l2 * w;
            }
            let factors = self.model.factors.as_slice().expect("standard layout");
            for (g, v) in self.grad_factors.iter_mut().zip(factors) {
                *g += l2 * v;
            }
        }
        let first = self.model.first_order.as_slice_mut().expect("contiguous");
        self.optimizer.update(first, &mut self.acc_first, &self.grad_first)?;
        let factors = self.model.factors.as_slice_mut().expect("standard layout");
        self.optimizer.update(factors, &mut self.acc_factors, &self.grad_factors)?;
        let mut intercept = [self.model.intercept];
        self.optimizer.update(&mut intercept, &mut self.acc_intercept, &[grad_intercept])?;
        self.model.intercept = intercept[0];
        Ok(())
    }

    fn penalty(&self) -> f64 {
        let sq: f64 = self
            .model
            .first_order
            .iter()
            .chain(self.model.factors.iter())
            .map(|w| w * w)
            .sum();
        0.5 * self.config.l2_lambda * sq
    }

    fn is_finite(&self) -> bool {
        self.model.intercept.is_finite()
            && self.model.first_order.iter().all(|w| w.is_finite())
            && self.model.factors.iter().all(|w| w.is_finite())
    }
}

/// Trains the factorization machine with the same log loss and AdaGrad
/// optimizer as the embedding model.
pub fn train_fm(
    data: &Dataset,
    config: &FmConfig,
    validation: Option<&Dataset>,
) -> Result<(FmModel, Vec<EpochStats>)> {
    if config.latent_dim == 0 {
        return Err(Error::InvalidConfig("fm latent_dim must be at least 1".into()));
    }
    if config.l2_lambda.is_nan() || config.l2_lambda < 0.0 {
        return Err(Error::InvalidConfig("l2_lambda must be >= 0".into()));
    }
    let optimizer = AdaGrad::new(config.learning_rate, config.adagrad_epsilon)?;
    let width = 2 * data.registry().len();
    let k = config.latent_dim;
    let s = config
        .init_scale
        .unwrap_or(0.1 / (k as f64).sqrt());
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::InvalidConfig("init_scale must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let factors = Array2::from_shape_simple_fn((width, k), || {
        if s == 0.0 {
            0.0
        } else {
            rng.random_range(-s..=s)
        }
    });
    let model = FmModel::new(data.registry().clone(), Array1::zeros(width), factors, 0.0)?;
    let learner = Learner {
        model,
        config: config.clone(),
        optimizer,
        acc_first: vec![0.0; width],
        acc_factors: vec![0.0; width * k],
        acc_intercept: [0.0],
        grad_first: vec![0.0; width],
        grad_factors: vec![0.0; width * k],
    };
    let fitted = fit(learner, data, validation, config.epochs, config.batch_size, config.seed)?;
    Ok((fitted.model.model, fitted.history))
}
