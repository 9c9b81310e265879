//! Similarity search, pair explanations and draft-pick recommendation.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::{sigmoid, ModelParams, TEAM_SIZE};
use crate::registry::AvatarId;

fn rank_desc(a: &(AvatarId, f64), b: &(AvatarId, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

fn check_top_k(top_k: usize) -> Result<()> {
    if top_k == 0 {
        return Err(Error::InvalidInput("top_k must be at least 1".into()));
    }
    Ok(())
}

/// Cosine ranking of `candidates` against `query`, best first, ties by
/// ascending index.
fn rank_by_similarity(
    model: &ModelParams,
    query: AvatarId,
    candidates: impl IntoIterator<Item = AvatarId>,
    top_k: usize,
) -> Result<Vec<(AvatarId, f64)>> {
    let mut scored = candidates
        .into_iter()
        .map(|c| Ok((c, model.similarity(query, c)?)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(rank_desc);
    scored.truncate(top_k);
    Ok(scored)
}

/// The `top_k` avatars most similar to `avatar`, excluding itself.
pub fn similar_avatars(model: &ModelParams, avatar: AvatarId, top_k: usize) -> Result<Vec<(AvatarId, f64)>> {
    check_top_k(top_k)?;
    model.check_index(avatar)?;
    rank_by_similarity(model, avatar, (0..model.n_avatars()).filter(|&c| c != avatar), top_k)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairExplanation {
    /// `S(i, j) + S(j, i)`
    pub synergy: f64,
    /// `|C(i, j) - C(j, i)|`
    pub opposition: f64,
    pub similarity: f64,
}

pub fn explain_pair(model: &ModelParams, i: AvatarId, j: AvatarId) -> Result<PairExplanation> {
    Ok(PairExplanation {
        synergy: model.pair_synergy_level(i, j)?,
        opposition: model.pair_opposition_level(i, j)?,
        similarity: model.similarity(i, j)?,
    })
}

/// A draft in progress, seen from the side about to pick.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DraftState {
    pub ally: Vec<AvatarId>,
    pub enemy: Vec<AvatarId>,
    /// Candidates to score; `None` means every avatar not yet picked.
    pub pool: Option<Vec<AvatarId>>,
    pub familiar: Option<Vec<AvatarId>>,
}

impl DraftState {
    pub fn new(ally: Vec<AvatarId>, enemy: Vec<AvatarId>) -> Self {
        Self {
            ally,
            enemy,
            pool: None,
            familiar: None,
        }
    }

    pub fn with_pool(mut self, pool: Vec<AvatarId>) -> Self {
        self.pool = Some(pool);
        self
    }

    pub fn with_familiar(mut self, familiar: Vec<AvatarId>) -> Self {
        self.familiar = Some(familiar);
        self
    }

    fn is_picked(&self, id: AvatarId) -> bool {
        self.ally.contains(&id) || self.enemy.contains(&id)
    }

    /// Validates the draft and returns the candidate pool in ascending order.
    pub fn candidates(&self, model: &ModelParams) -> Result<Vec<AvatarId>> {
        if self.ally.len() >= TEAM_SIZE {
            return Err(Error::RosterSize {
                size: self.ally.len(),
                expected: "at most 4 allies",
            });
        }
        if self.enemy.len() > TEAM_SIZE {
            return Err(Error::RosterSize {
                size: self.enemy.len(),
                expected: "at most 5 enemies",
            });
        }
        model.check_sides(&self.ally, &self.enemy)?;
        let pool = match &self.pool {
            Some(pool) => {
                let mut pool = pool.clone();
                pool.sort_unstable();
                if let Some(w) = pool.windows(2).find(|w| w[0] == w[1]) {
                    return Err(Error::DuplicateAvatar(w[0]));
                }
                for &c in &pool {
                    model.check_index(c)?;
                    if self.is_picked(c) {
                        return Err(Error::OverlappingRosters(c));
                    }
                }
                pool
            }
            None => (0..model.n_avatars()).filter(|&c| !self.is_picked(c)).collect(),
        };
        if pool.is_empty() {
            return Err(Error::InvalidInput("candidate pool is empty".into()));
        }
        Ok(pool)
    }
}

/// One scored candidate. `bias_delta + synergy_delta + opposition_delta` is
/// the change in the ally-side logit from adding the candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub avatar: AvatarId,
    pub win_probability: f64,
    pub logit: f64,
    pub bias_delta: f64,
    pub synergy_delta: f64,
    pub opposition_delta: f64,
    /// Most similar familiar avatars with their cosine scores; empty unless
    /// requested.
    pub similar_familiar: Vec<(AvatarId, f64)>,
}

impl Recommendation {
    pub fn logit_delta(&self) -> f64 {
        self.bias_delta + self.synergy_delta + self.opposition_delta
    }
}

fn score_candidate(model: &ModelParams, ally: &[AvatarId], enemy: &[AvatarId], c: AvatarId) -> Recommendation {
    let mut team = Vec::with_capacity(ally.len() + 1);
    team.extend_from_slice(ally);
    team.push(c);
    let logit = model.logit_terms_unchecked(&team, enemy).total();
    let synergy_delta = ally
        .iter()
        .map(|&a| model.synergy_unchecked(c, a) + model.synergy_unchecked(a, c))
        .sum();
    let opposition_delta = enemy
        .iter()
        .map(|&e| model.opposition_unchecked(c, e) - model.opposition_unchecked(e, c))
        .sum();
    Recommendation {
        avatar: c,
        win_probability: sigmoid(logit),
        logit,
        bias_delta: model.bias()[c],
        synergy_delta,
        opposition_delta,
        similar_familiar: Vec::new(),
    }
}

fn score_all(model: &ModelParams, draft: &DraftState) -> Result<Vec<Recommendation>> {
    let pool = draft.candidates(model)?;
    let mut scored: Vec<Recommendation> = pool
        .into_iter()
        .map(|c| score_candidate(model, &draft.ally, &draft.enemy, c))
        .collect();
    scored.sort_by(|a, b| {
        b.win_probability
            .total_cmp(&a.win_probability)
            .then(a.avatar.cmp(&b.avatar))
    });
    Ok(scored)
}

/// Scores every pool candidate by the ally side's win probability with the
/// candidate added. Best first, ties by ascending index.
pub fn recommend_pick(model: &ModelParams, draft: &DraftState, top_k: usize) -> Result<Vec<Recommendation>> {
    check_top_k(top_k)?;
    let mut scored = score_all(model, draft)?;
    scored.truncate(top_k);
    Ok(scored)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamiliarRecommendations {
    pub picks: Vec<Recommendation>,
    /// The best candidate that is itself in the familiar set, if any familiar
    /// avatar is still in the pool.
    pub familiar_best: Option<Recommendation>,
}

/// As [`recommend_pick`], with each pick carrying its `sim_k` most similar
/// familiar avatars. A familiar candidate lists itself first.
pub fn recommend_with_familiarity(
    model: &ModelParams,
    draft: &DraftState,
    top_k: usize,
    sim_k: usize,
) -> Result<FamiliarRecommendations> {
    check_top_k(top_k)?;
    check_top_k(sim_k)?;
    let familiar = match &draft.familiar {
        Some(f) if !f.is_empty() => {
            let mut f = f.clone();
            f.sort_unstable();
            f.dedup();
            for &id in &f {
                model.check_index(id)?;
            }
            f
        }
        _ => return Err(Error::InvalidInput("familiar set is empty".into())),
    };
    let scored = score_all(model, draft)?;
    let familiar_best = scored.iter().find(|r| familiar.binary_search(&r.avatar).is_ok()).cloned();
    let mut picks = scored;
    picks.truncate(top_k);
    for pick in &mut picks {
        pick.similar_familiar = rank_by_similarity(model, pick.avatar, familiar.iter().copied(), sim_k)?;
    }
    Ok(FamiliarRecommendations { picks, familiar_best })
}
