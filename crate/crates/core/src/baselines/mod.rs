//! Comparison models on the sparse red/blue indicator encoding: logistic
//! regression and a 2-way factorization machine, plus the win-ratio
//! similarity matrix.

mod fm;
mod logistic;
mod win_ratio;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use fm::{fm_logit, train_fm, FmConfig, FmModel};
pub use logistic::{train_logistic_regression, LogisticModel, LrConfig};
pub use win_ratio::{build_win_ratio_matrix, WinRatioMatrix, UNSEEN_RATIO};

use crate::data::{Dataset, MatchRecord};
use crate::error::{Error, Result};
use crate::evaluation::auc;
use crate::model::{neg_log_sigmoid, TEAM_SIZE};
use crate::training::EpochStats;

/// Indices of the ten active entries of the `2N`-dimensional indicator
/// vector: `i` for red avatar `i`, `N + j` for blue avatar `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SparseFeature {
    active: [usize; 2 * TEAM_SIZE],
}

impl SparseFeature {
    pub fn active(&self) -> &[usize] {
        &self.active
    }
}

pub fn encode_match(record: &MatchRecord, n_avatars: usize) -> Result<SparseFeature> {
    let mut active = [0usize; 2 * TEAM_SIZE];
    let members = record.red.members().iter().chain(record.blue.members());
    for (slot, (pos, &id)) in active.iter_mut().zip(members.enumerate()) {
        if id >= n_avatars {
            return Err(Error::AvatarOutOfRange {
                index: id,
                n: n_avatars,
            });
        }
        *slot = if pos < TEAM_SIZE { id } else { id + n_avatars };
    }
    Ok(SparseFeature { active })
}

/// Shared mini-batch driver for the baseline learners.
pub(crate) trait BatchLearner: Clone {
    fn logit(&self, feature: &SparseFeature) -> f64;

    fn step(&mut self, batch: &[(SparseFeature, f64)], epoch: usize) -> Result<()>;

    fn penalty(&self) -> f64;

    fn is_finite(&self) -> bool;
}

pub(crate) struct Fit<M> {
    pub model: M,
    pub history: Vec<EpochStats>,
}

pub(crate) fn encode_dataset(data: &Dataset) -> Result<Vec<(SparseFeature, f64)>> {
    let n = data.registry().len();
    data.matches()
        .iter()
        .map(|m| Ok((encode_match(m, n)?, m.label())))
        .collect()
}

pub(crate) fn fit<M: BatchLearner>(
    mut model: M,
    data: &Dataset,
    validation: Option<&Dataset>,
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> Result<Fit<M>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if epochs == 0 || batch_size == 0 {
        return Err(Error::InvalidConfig("epochs and batch_size must be at least 1".into()));
    }
    let train = encode_dataset(data)?;
    let valid = match validation {
        Some(v) => {
            if v.registry() != data.registry() {
                return Err(Error::InvalidInput(
                    "validation set uses a different avatar registry".into(),
                ));
            }
            Some((encode_dataset(v)?, v.labels()))
        }
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ba5e);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut batch = Vec::with_capacity(batch_size);
    let mut history = Vec::with_capacity(epochs);
    let mut best: Option<(f64, M)> = None;

    for epoch in 1..=epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train[i]));
            model.step(&batch, epoch)?;
        }
        let loss = train
            .iter()
            .map(|(f, y)| {
                let z = model.logit(f);
                if *y > 0.5 {
                    neg_log_sigmoid(z)
                } else {
                    neg_log_sigmoid(-z)
                }
            })
            .sum::<f64>()
            / train.len() as f64;
        if !loss.is_finite() || !model.is_finite() {
            return Err(Error::NonFinite(format!("baseline training at epoch {epoch}")));
        }
        let validation_auc = match &valid {
            Some((features, labels)) => {
                let scores: Vec<f64> = features.iter().map(|(f, _)| model.logit(f)).collect();
                Some(auc(&scores, labels)?)
            }
            None => None,
        };
        history.push(EpochStats {
            epoch,
            loss,
            penalized_loss: loss + model.penalty(),
            validation_auc,
        });
        if let Some(score) = validation_auc {
            if best.as_ref().is_none_or(|(b, _)| score > *b) {
                best = Some((score, model.clone()));
            }
        }
    }
    let model = best.map_or(model, |(_, m)| m);
    Ok(Fit { model, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Roster;

    fn record(red: [usize; 5], blue: [usize; 5]) -> MatchRecord {
        MatchRecord::new(Roster::full(red).unwrap(), Roster::full(blue).unwrap(), true).unwrap()
    }

    #[test]
    fn encoding_shifts_blue_by_n() {
        let f = encode_match(&record([0, 1, 2, 3, 4], [5, 6, 7, 8, 9]), 12).unwrap();
        assert_eq!(f.active(), &[0, 1, 2, 3, 4, 17, 18, 19, 20, 21]);
    }

    #[test]
    fn encoding_has_ten_disjoint_halves() {
        let f = encode_match(&record([11, 3, 7, 2, 0], [1, 4, 5, 6, 10]), 12).unwrap();
        assert_eq!(f.active().len(), 10);
        let red: Vec<usize> = f.active().iter().copied().filter(|&i| i < 12).collect();
        let blue: Vec<usize> = f.active().iter().filter(|&&i| i >= 12).map(|i| i - 12).collect();
        assert_eq!(red.len(), 5);
        assert!(red.iter().all(|r| !blue.contains(r)));
        assert!(encode_match(&record([0, 1, 2, 3, 4], [5, 6, 7, 8, 20]), 12).is_err());
    }

    #[test]
    fn encoding_ignores_member_order_only() {
        let a = encode_match(&record([4, 3, 2, 1, 0], [9, 8, 7, 6, 5]), 10).unwrap();
        let b = encode_match(&record([0, 1, 2, 3, 4], [5, 6, 7, 8, 9]), 10).unwrap();
        let swapped = encode_match(&record([5, 6, 7, 8, 9], [0, 1, 2, 3, 4]), 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, swapped);
    }
}
