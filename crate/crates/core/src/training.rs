//! Maximum-likelihood fitting of the embedding model with mini-batch AdaGrad.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, Dataset, MatchRecord, SyntheticSpec};
use crate::error::{Error, Result};
use crate::evaluation::auc;
use crate::model::{neg_log_sigmoid, sigmoid, ModelParams};
use crate::optim::AdaGrad;
use crate::registry::AvatarRegistry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub learning_rate: f64,
    pub adagrad_epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2_lambda: f64,
    /// Half-width of the uniform initialisation; `None` means `0.1 / sqrt(K)`.
    pub init_scale: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
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

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::InvalidConfig("latent_dim must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(Error::InvalidConfig("l2_lambda must be >= 0".into()));
        }
        if let Some(s) = self.init_scale {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidConfig("init_scale must be >= 0".into()));
            }
        }
        AdaGrad::new(self.learning_rate, self.adagrad_epsilon)?;
        Ok(())
    }

    pub fn effective_init_scale(&self) -> f64 {
        self.init_scale
            .unwrap_or(0.1 / (self.latent_dim as f64).sqrt())
    }
}

/// Gradient of the objective with the same block shapes as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub embeddings: Array2<f64>,
    pub synergy: Array2<f64>,
    pub opposition: Array2<f64>,
    pub bias: Array1<f64>,
}

impl GradientSet {
    pub fn zeros(n_avatars: usize, latent_dim: usize) -> Self {
        Self {
            embeddings: Array2::zeros((n_avatars, latent_dim)),
            synergy: Array2::zeros((latent_dim, latent_dim)),
            opposition: Array2::zeros((latent_dim, latent_dim)),
            bias: Array1::zeros(n_avatars),
        }
    }

    pub fn like(params: &ModelParams) -> Self {
        Self::zeros(params.n_avatars(), params.latent_dim())
    }

    pub fn blocks(&self) -> [(&'static str, &[f64]); 4] {
        [
            ("embeddings", slice(&self.embeddings)),
            ("synergy", slice(&self.synergy)),
            ("opposition", slice(&self.opposition)),
            ("bias", self.bias.as_slice().expect("contiguous")),
        ]
    }

    fn blocks_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.embeddings.as_slice_mut().expect("contiguous"),
            self.synergy.as_slice_mut().expect("contiguous"),
            self.opposition.as_slice_mut().expect("contiguous"),
            self.bias.as_slice_mut().expect("contiguous"),
        ]
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("contiguous")
}

fn param_blocks_mut(params: &mut ModelParams) -> [&mut [f64]; 4] {
    let (a, p, q, b) = params.blocks_mut();
    [
        a.as_slice_mut().expect("contiguous"),
        p.as_slice_mut().expect("contiguous"),
        q.as_slice_mut().expect("contiguous"),
        b.as_slice_mut().expect("contiguous"),
    ]
}

fn check_record(params: &ModelParams, record: &MatchRecord) -> Result<()> {
    params.check_sides(record.red.members(), record.blue.members())
}

fn match_loss(params: &ModelParams, record: &MatchRecord) -> f64 {
    let logit = params
        .logit_terms_unchecked(record.red.members(), record.blue.members())
        .total();
    if record.red_won {
        neg_log_sigmoid(logit)
    } else {
        neg_log_sigmoid(-logit)
    }
}

/// Mean negative log-likelihood of the observed outcomes.
pub fn negative_log_likelihood(params: &ModelParams, matches: &Dataset) -> Result<f64> {
    mean_loss(params, matches.matches())
}

fn mean_loss<'a, I>(params: &ModelParams, records: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a MatchRecord>,
{
    let mut total = 0.0;
    let mut count = 0usize;
    for record in records {
        check_record(params, record)?;
        total += match_loss(params, record);
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(total / count as f64)
}

/// `l2 / 2 * ||theta||^2` over every parameter block.
pub fn l2_penalty(params: &ModelParams, l2_lambda: f64) -> f64 {
    if l2_lambda == 0.0 {
        return 0.0;
    }
    let sq = |v: ndarray::ArrayView2<f64>| v.iter().map(|x| x * x).sum::<f64>();
    let total = sq(params.embeddings())
        + sq(params.synergy())
        + sq(params.opposition())
        + params.bias().iter().map(|x| x * x).sum::<f64>();
    0.5 * l2_lambda * total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub unpenalized: f64,
    pub penalized: f64,
}

pub fn loss_report(params: &ModelParams, matches: &Dataset, l2_lambda: f64) -> Result<LossReport> {
    let unpenalized = negative_log_likelihood(params, matches)?;
    Ok(LossReport {
        unpenalized,
        penalized: unpenalized + l2_penalty(params, l2_lambda),
    })
}

/// Exact gradient of the batch-mean negative log-likelihood plus the L2 term.
pub fn gradients(params: &ModelParams, batch: &[MatchRecord], l2_lambda: f64) -> Result<GradientSet> {
    gradients_of(params, batch.iter(), l2_lambda)
}

fn gradients_of<'a, I>(params: &ModelParams, batch: I, l2_lambda: f64) -> Result<GradientSet>
where
    I: ExactSizeIterator<Item = &'a MatchRecord>,
{
    let size = batch.len();
    if size == 0 {
        return Err(Error::EmptyDataset);
    }
    let k = params.latent_dim();
    let mut grads = GradientSet::like(params);
    let p = params.synergy();
    let q = params.opposition();
    // (P + P') acts on teammates, (Q - Q') on opponents
    let sym_p = &p + &p.t();
    let skew_q = &q - &q.t();
    let sym_p = sym_p.as_standard_layout();
    let skew_q = skew_q.as_standard_layout();
    let sym_p = sym_p.as_slice().expect("contiguous");
    let skew_q = skew_q.as_slice().expect("contiguous");

    let mut buf = vec![0.0; k];
    for record in batch {
        check_record(params, record)?;
        let red = record.red.members();
        let blue = record.blue.members();
        let logit = params.logit_terms_unchecked(red, blue).total();
        let w = (sigmoid(logit) - record.label()) / size as f64;
        if w == 0.0 {
            continue;
        }
        let red_sum = params.team_sum(red);
        let blue_sum = params.team_sum(blue);

        for &i in red {
            grads.bias[i] += w;
        }
        for &j in blue {
            grads.bias[j] -= w;
        }

        {
            let g_p = grads.synergy.as_slice_mut().expect("contiguous");
            add_outer(g_p, w, &red_sum, &red_sum);
            add_outer(g_p, -w, &blue_sum, &blue_sum);
            for &i in red {
                add_outer(g_p, -w, params.row(i), params.row(i));
            }
            for &j in blue {
                add_outer(g_p, w, params.row(j), params.row(j));
            }
            let g_q = grads.opposition.as_slice_mut().expect("contiguous");
            add_outer(g_q, w, &red_sum, &blue_sum);
            add_outer(g_q, -w, &blue_sum, &red_sum);
        }

        // opposition pull is shared by every member of a side
        let mut red_opp = vec![0.0; k];
        mat_vec(skew_q, &blue_sum, &mut red_opp);
        let mut blue_opp = vec![0.0; k];
        mat_vec(skew_q, &red_sum, &mut blue_opp);

        let g_a = grads.embeddings.as_slice_mut().expect("contiguous");
        for (members, team_sum, opp, sign) in [
            (red, &red_sum, &red_opp, 1.0),
            (blue, &blue_sum, &blue_opp, -1.0),
        ] {
            for &i in members {
                let others: Vec<f64> = team_sum.iter().zip(params.row(i)).map(|(s, a)| s - a).collect();
                mat_vec(sym_p, &others, &mut buf);
                let row = &mut g_a[i * k..(i + 1) * k];
                for ((g, syn), o) in row.iter_mut().zip(&buf).zip(opp.iter()) {
                    // red: +(Q - Q') s_blue ; blue: (Q' - Q) s_red = -(Q - Q') s_red
                    *g += sign * w * (syn + o);
                }
            }
        }
    }

    if l2_lambda > 0.0 {
        let (a, p, q, b) = (
            params.embeddings(),
            params.synergy(),
            params.opposition(),
            params.bias(),
        );
        grads.embeddings.scaled_add(l2_lambda, &a);
        grads.synergy.scaled_add(l2_lambda, &p);
        grads.opposition.scaled_add(l2_lambda, &q);
        grads.bias.scaled_add(l2_lambda, &b);
    }
    Ok(grads)
}

fn add_outer(target: &mut [f64], w: f64, u: &[f64], v: &[f64]) {
    let k = v.len();
    for (row, &um) in target.chunks_exact_mut(k).zip(u) {
        let s = w * um;
        for (t, &vn) in row.iter_mut().zip(v) {
            *t += s * vn;
        }
    }
}

fn mat_vec(m: &[f64], v: &[f64], out: &mut [f64]) {
    let k = v.len();
    for (o, row) in out.iter_mut().zip(m.chunks_exact(k)) {
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

/// Squared-gradient accumulators, one per parameter coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaGradState {
    accumulators: GradientSet,
}

impl AdaGradState {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            accumulators: GradientSet::like(params),
        }
    }

    pub fn accumulators(&self) -> &GradientSet {
        &self.accumulators
    }

    /// Applies one AdaGrad update to every block.
    pub fn step(&mut self, params: &mut ModelParams, grads: &GradientSet, optimizer: &AdaGrad) -> Result<()> {
        let acc = self.accumulators.blocks_mut();
        let grad_blocks = grads.blocks();
        for ((theta, acc), (_, g)) in param_blocks_mut(params).into_iter().zip(acc).zip(grad_blocks) {
            optimizer.update(theta, acc, g)?;
        }
        Ok(())
    }
}

/// Draws `A`, `P`, `Q` uniformly from `[-s, s]` and zeroes the biases.
pub fn init_params(registry: AvatarRegistry, config: &TrainConfig) -> Result<ModelParams> {
    init_params_with(registry, config, &mut ChaCha8Rng::seed_from_u64(config.seed))
}

fn init_params_with<R: Rng>(registry: AvatarRegistry, config: &TrainConfig, rng: &mut R) -> Result<ModelParams> {
    config.validate()?;
    if registry.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 avatars, registry has {}",
            registry.len()
        )));
    }
    let n = registry.len();
    let k = config.latent_dim;
    let s = config.effective_init_scale();
    let mut uniform = |rows: usize, cols: usize| -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || {
            if s == 0.0 {
                0.0
            } else {
                rng.random_range(-s..=s)
            }
        })
    };
    let a = uniform(n, k);
    let p = uniform(k, k);
    let q = uniform(k, k);
    ModelParams::new(registry, a, p, q, Array1::zeros(n))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub penalized_loss: f64,
    pub validation_auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelParams,
    pub history: Vec<EpochStats>,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
}

pub fn train(config: &TrainConfig, data: &Dataset, validation: Option<&Dataset>) -> Result<TrainOutcome> {
    train_with_progress(config, data, validation, |_| {})
}

/// Trains for a fixed number of epochs. With a validation set the parameters
/// of the epoch with the best validation AUC are returned, otherwise the
/// final ones.
pub fn train_with_progress<F>(
    config: &TrainConfig,
    data: &Dataset,
    validation: Option<&Dataset>,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&EpochStats),
{
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(v) = validation {
        if v.registry() != data.registry() {
            return Err(Error::InvalidInput(
                "validation set uses a different avatar registry".into(),
            ));
        }
    }
    let optimizer = AdaGrad::new(config.learning_rate, config.adagrad_epsilon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = init_params_with(data.registry().clone(), config, &mut rng)?;
    let mut state = AdaGradState::new(&params);
    let records = data.matches();
    for record in records {
        check_record(&params, record)?;
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let grads = gradients_of(&params, chunk.iter().map(|&i| &records[i]), config.l2_lambda)?;
            state.step(&mut params, &grads, &optimizer)?;
        }
        let loss = loss_report(&params, data, config.l2_lambda)?;
        if !loss.penalized.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
        }
        params.check_finite()?;
        let validation_auc = validation
            .map(|v| auc(&match_logits(&params, v)?, &v.labels()))
            .transpose()?;
        let stats = EpochStats {
            epoch,
            loss: loss.unpenalized,
            penalized_loss: loss.penalized,
            validation_auc,
        };
        on_epoch(&stats);
        history.push(stats);
        if let Some(score) = validation_auc {
            if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
                best = Some((score, epoch, params.clone()));
            }
        }
    }

    let (model, best_epoch) = match best {
        Some((_, epoch, model)) => (model, epoch),
        None => (params, config.epochs),
    };
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}

/// Logit of a red win for every match, in order.
pub fn match_logits(params: &ModelParams, data: &Dataset) -> Result<Vec<f64>> {
    data.matches()
        .iter()
        .map(|m| params.match_logit(&m.red, &m.blue))
        .collect()
}

/// Largest discrepancy between analytic and numeric gradient in one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockError {
    pub block: &'static str,
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheckReport {
    pub blocks: Vec<BlockError>,
    pub tolerance: f64,
}

impl GradientCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.max_relative_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_relative_error() < self.tolerance
    }
}

const RELATIVE_ERROR_FLOOR: f64 = 1e-8;

/// Central-difference gradient of the penalised batch loss.
pub fn numeric_gradients(
    params: &ModelParams,
    batch: &[MatchRecord],
    l2_lambda: f64,
    step: f64,
) -> Result<GradientSet> {
    if step.is_nan() || step <= 0.0 {
        return Err(Error::InvalidConfig(format!("step must be positive, got {step}")));
    }
    let mut probe = params.clone();
    let mut grads = GradientSet::like(params);
    let objective = |p: &ModelParams| -> Result<f64> { Ok(mean_loss(p, batch)? + l2_penalty(p, l2_lambda)) };
    for (block, out) in grads.blocks_mut().into_iter().enumerate() {
        for (coord, slot) in out.iter_mut().enumerate() {
            let original = param_blocks_mut(&mut probe)[block][coord];
            param_blocks_mut(&mut probe)[block][coord] = original + step;
            let plus = objective(&probe)?;
            param_blocks_mut(&mut probe)[block][coord] = original - step;
            let minus = objective(&probe)?;
            param_blocks_mut(&mut probe)[block][coord] = original;
            *slot = (plus - minus) / (2.0 * step);
        }
    }
    Ok(grads)
}

pub fn compare_gradients(analytic: &GradientSet, numeric: &GradientSet, tolerance: f64) -> GradientCheckReport {
    let blocks = analytic
        .blocks()
        .iter()
        .zip(numeric.blocks())
        .map(|((name, a), (_, n))| {
            let mut rel: f64 = 0.0;
            let mut abs: f64 = 0.0;
            for (x, y) in a.iter().zip(n) {
                let diff = (x - y).abs();
                abs = abs.max(diff);
                rel = rel.max(diff / x.abs().max(y.abs()).max(RELATIVE_ERROR_FLOOR));
            }
            BlockError {
                block: name,
                max_relative_error: rel,
                max_absolute_error: abs,
            }
        })
        .collect();
    GradientCheckReport { blocks, tolerance }
}

/// Compares [`gradients`] against central differences, coordinate by coordinate.
pub fn finite_difference_check(
    params: &ModelParams,
    batch: &[MatchRecord],
    l2_lambda: f64,
    step: f64,
    tolerance: f64,
) -> Result<GradientCheckReport> {
    let analytic = gradients(params, batch, l2_lambda)?;
    let numeric = numeric_gradients(params, batch, l2_lambda, step)?;
    Ok(compare_gradients(&analytic, &numeric, tolerance))
}

/// A random model with nonzero biases plus a batch of matches over it, for
/// gradient checks.
pub fn gradcheck_fixture(
    n_avatars: usize,
    latent_dim: usize,
    batch_size: usize,
    seed: u64,
) -> Result<(ModelParams, Vec<MatchRecord>)> {
    let spec = SyntheticSpec {
        n_avatars,
        latent_dim,
        embedding_scale: 0.7,
        matrix_scale: 0.7 * latent_dim as f64,
        bias_scale: 0.3,
        n_matches: batch_size,
        seed,
    };
    let (data, truth) = generate_synthetic(&spec)?;
    Ok((truth, data.matches().to_vec()))
}
