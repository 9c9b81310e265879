//! Score functions of the embedding model and the win probability they induce.
//!
//! An avatar `i` has an embedding row `a_i`. Two `K x K` matrices weigh how
//! embedding dimensions interact: the synergy matrix `P` for teammates and the
//! opposition matrix `Q` for opponents.
//!
//! * `S(i, j) = a_i' P a_j` is the synergy `i` exerts on teammate `j`.
//! * `C(i, j) = a_i' Q a_j` is how strongly `i` counters opponent `j`.
//!
//! A match logit adds per-avatar biases, synergy over ordered teammate pairs
//! and net opposition across teams, red minus blue. Neither matrix has to be
//! symmetric.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::registry::{AvatarId, AvatarRegistry};

pub const TEAM_SIZE: usize = 5;

/// Set of avatars fielded by one team, stored sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Roster {
    members: Vec<AvatarId>,
}

impl Roster {
    /// Builds a roster of 1 to 5 distinct avatars. Partial rosters are meant
    /// for draft queries; recorded matches use [`Roster::full`].
    pub fn new<I: IntoIterator<Item = AvatarId>>(members: I) -> Result<Self> {
        let mut members: Vec<AvatarId> = members.into_iter().collect();
        if members.is_empty() || members.len() > TEAM_SIZE {
            return Err(Error::RosterSize {
                size: members.len(),
                expected: "1 to 5",
            });
        }
        members.sort_unstable();
        if let Some(w) = members.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateAvatar(w[0]));
        }
        Ok(Self { members })
    }

    pub fn full<I: IntoIterator<Item = AvatarId>>(members: I) -> Result<Self> {
        let roster = Self::new(members)?;
        if !roster.is_full() {
            return Err(Error::RosterSize {
                size: roster.len(),
                expected: "exactly 5",
            });
        }
        Ok(roster)
    }

    pub fn members(&self) -> &[AvatarId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.members.len() == TEAM_SIZE
    }

    pub fn contains(&self, id: AvatarId) -> bool {
        self.members.binary_search(&id).is_ok()
    }
}

/// The three additive parts of a match logit.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LogitTerms {
    pub bias: f64,
    pub synergy: f64,
    pub opposition: f64,
}

impl LogitTerms {
    pub fn total(&self) -> f64 {
        self.bias + self.synergy + self.opposition
    }
}

/// Embeddings, interaction matrices and biases for a fixed avatar registry.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    registry: AvatarRegistry,
    embeddings: Array2<f64>,
    synergy: Array2<f64>,
    opposition: Array2<f64>,
    bias: Array1<f64>,
}

impl ModelParams {
    pub fn new(
        registry: AvatarRegistry,
        embeddings: Array2<f64>,
        synergy: Array2<f64>,
        opposition: Array2<f64>,
        bias: Array1<f64>,
    ) -> Result<Self> {
        let n = registry.len();
        let k = embeddings.ncols();
        check_dim("embedding rows", n, embeddings.nrows())?;
        check_dim("bias length", n, bias.len())?;
        check_dim("synergy rows", k, synergy.nrows())?;
        check_dim("synergy cols", k, synergy.ncols())?;
        check_dim("opposition rows", k, opposition.nrows())?;
        check_dim("opposition cols", k, opposition.ncols())?;
        if k == 0 {
            return Err(Error::InvalidConfig("latent dimension must be at least 1".into()));
        }
        let params = Self {
            registry,
            embeddings: embeddings.as_standard_layout().into_owned(),
            synergy: synergy.as_standard_layout().into_owned(),
            opposition: opposition.as_standard_layout().into_owned(),
            bias,
        };
        params.check_finite()?;
        Ok(params)
    }

    pub fn zeros(registry: AvatarRegistry, latent_dim: usize) -> Result<Self> {
        let n = registry.len();
        Self::new(
            registry,
            Array2::zeros((n, latent_dim)),
            Array2::zeros((latent_dim, latent_dim)),
            Array2::zeros((latent_dim, latent_dim)),
            Array1::zeros(n),
        )
    }

    pub fn check_finite(&self) -> Result<()> {
        let blocks = [
            ("embeddings", self.embeddings.as_slice()),
            ("synergy matrix", self.synergy.as_slice()),
            ("opposition matrix", self.opposition.as_slice()),
            ("bias", self.bias.as_slice()),
        ];
        for (name, values) in blocks {
            if !values.expect("standard layout").iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(name.into()));
            }
        }
        Ok(())
    }

    pub fn registry(&self) -> &AvatarRegistry {
        &self.registry
    }

    pub fn embeddings(&self) -> ArrayView2<'_, f64> {
        self.embeddings.view()
    }

    pub fn synergy(&self) -> ArrayView2<'_, f64> {
        self.synergy.view()
    }

    pub fn opposition(&self) -> ArrayView2<'_, f64> {
        self.opposition.view()
    }

    pub fn bias(&self) -> ArrayView1<'_, f64> {
        self.bias.view()
    }

    pub fn n_avatars(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn embedding(&self, id: AvatarId) -> Result<ArrayView1<'_, f64>> {
        self.check_index(id)?;
        Ok(self.embeddings.row(id))
    }

    pub(crate) fn blocks_mut(
        &mut self,
    ) -> (
        &mut Array2<f64>,
        &mut Array2<f64>,
        &mut Array2<f64>,
        &mut Array1<f64>,
    ) {
        (
            &mut self.embeddings,
            &mut self.synergy,
            &mut self.opposition,
            &mut self.bias,
        )
    }

    pub fn check_index(&self, id: AvatarId) -> Result<()> {
        if id < self.n_avatars() {
            Ok(())
        } else {
            Err(Error::AvatarOutOfRange {
                index: id,
                n: self.n_avatars(),
            })
        }
    }

    /// `S(i, j)`, the synergy `i` exerts on teammate `j`.
    pub fn synergy_between(&self, i: AvatarId, j: AvatarId) -> Result<f64> {
        self.check_index(i)?;
        self.check_index(j)?;
        Ok(self.synergy_unchecked(i, j))
    }

    /// `C(i, j)`, how strongly `i` counters opponent `j`.
    pub fn opposition_between(&self, i: AvatarId, j: AvatarId) -> Result<f64> {
        self.check_index(i)?;
        self.check_index(j)?;
        Ok(self.opposition_unchecked(i, j))
    }

    pub(crate) fn synergy_unchecked(&self, i: AvatarId, j: AvatarId) -> f64 {
        bilinear(self.row(i), &self.synergy, self.row(j))
    }

    pub(crate) fn opposition_unchecked(&self, i: AvatarId, j: AvatarId) -> f64 {
        bilinear(self.row(i), &self.opposition, self.row(j))
    }

    pub(crate) fn row(&self, id: AvatarId) -> &[f64] {
        let k = self.latent_dim();
        &self.embeddings.as_slice().expect("standard layout")[id * k..(id + 1) * k]
    }

    /// Logit that red beats blue. Rosters must be disjoint.
    pub fn match_logit(&self, red: &Roster, blue: &Roster) -> Result<f64> {
        Ok(self.logit_terms(red.members(), blue.members())?.total())
    }

    pub fn win_probability(&self, red: &Roster, blue: &Roster) -> Result<f64> {
        self.match_logit(red, blue).map(sigmoid)
    }

    /// Logit decomposition for arbitrary (possibly empty or partial) sides.
    pub fn logit_terms(&self, red: &[AvatarId], blue: &[AvatarId]) -> Result<LogitTerms> {
        self.check_sides(red, blue)?;
        Ok(self.logit_terms_unchecked(red, blue))
    }

    pub(crate) fn check_sides(&self, red: &[AvatarId], blue: &[AvatarId]) -> Result<()> {
        for side in [red, blue] {
            if side.len() > TEAM_SIZE {
                return Err(Error::RosterSize {
                    size: side.len(),
                    expected: "at most 5",
                });
            }
            for (pos, &id) in side.iter().enumerate() {
                self.check_index(id)?;
                if side[..pos].contains(&id) {
                    return Err(Error::DuplicateAvatar(id));
                }
            }
        }
        if let Some(&id) = red.iter().find(|id| blue.contains(id)) {
            return Err(Error::OverlappingRosters(id));
        }
        Ok(())
    }

    pub(crate) fn logit_terms_unchecked(&self, red: &[AvatarId], blue: &[AvatarId]) -> LogitTerms {
        let red_sum = self.team_sum(red);
        let blue_sum = self.team_sum(blue);
        let bias = red.iter().map(|&i| self.bias[i]).sum::<f64>()
            - blue.iter().map(|&j| self.bias[j]).sum::<f64>();
        let synergy = self.team_synergy(red, &red_sum) - self.team_synergy(blue, &blue_sum);
        let opposition = antisymmetric_bilinear(&red_sum, &self.opposition, &blue_sum);
        LogitTerms {
            bias,
            synergy,
            opposition,
        }
    }

    pub(crate) fn team_sum(&self, members: &[AvatarId]) -> Vec<f64> {
        let mut sum = vec![0.0; self.latent_dim()];
        for &i in members {
            for (s, a) in sum.iter_mut().zip(self.row(i)) {
                *s += a;
            }
        }
        sum
    }

    /// Sum of `S(i, j)` over ordered pairs `i != j`: the full quadratic form
    /// of the team sum minus the diagonal terms.
    fn team_synergy(&self, members: &[AvatarId], sum: &[f64]) -> f64 {
        let diagonal: f64 = members
            .iter()
            .map(|&i| bilinear(self.row(i), &self.synergy, self.row(i)))
            .sum();
        bilinear(sum, &self.synergy, sum) - diagonal
    }

    /// `S(i, j) + S(j, i)`.
    pub fn pair_synergy_level(&self, i: AvatarId, j: AvatarId) -> Result<f64> {
        self.check_pair(i, j)?;
        Ok(self.synergy_unchecked(i, j) + self.synergy_unchecked(j, i))
    }

    /// `|C(i, j) - C(j, i)|`.
    pub fn pair_opposition_level(&self, i: AvatarId, j: AvatarId) -> Result<f64> {
        self.check_pair(i, j)?;
        Ok((self.opposition_unchecked(i, j) - self.opposition_unchecked(j, i)).abs())
    }

    /// Cosine similarity of two avatar embeddings.
    pub fn similarity(&self, i: AvatarId, j: AvatarId) -> Result<f64> {
        self.check_index(i)?;
        self.check_index(j)?;
        cosine_slices(self.row(i), self.row(j)).ok_or_else(|| {
            let which = if norm(self.row(i)) == 0.0 { i } else { j };
            Error::ZeroNorm(format!("embedding of avatar {which}"))
        })
    }

    fn check_pair(&self, i: AvatarId, j: AvatarId) -> Result<()> {
        self.check_index(i)?;
        self.check_index(j)?;
        if i == j {
            return Err(Error::SelfPair(i));
        }
        Ok(())
    }
}

fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}

/// `u' M v` for a square row-major matrix.
pub(crate) fn bilinear(u: &[f64], m: &Array2<f64>, v: &[f64]) -> f64 {
    let k = v.len();
    let data = m.as_slice().expect("standard layout");
    u.iter()
        .zip(data.chunks_exact(k))
        .map(|(&um, row)| um * dot(row, v))
        .sum()
}

/// `u' (M - M') v`. Diagonal entries of `M` cancel exactly.
fn antisymmetric_bilinear(u: &[f64], m: &Array2<f64>, v: &[f64]) -> f64 {
    let k = v.len();
    let data = m.as_slice().expect("standard layout");
    let mut total = 0.0;
    for r in 0..k {
        let mut acc = 0.0;
        for c in 0..k {
            acc += (data[r * k + c] - data[c * k + r]) * v[c];
        }
        total += u[r] * acc;
    }
    total
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn cosine_slices(u: &[f64], v: &[f64]) -> Option<f64> {
    let denom = norm(u) * norm(v);
    if denom == 0.0 {
        return None;
    }
    Some((dot(u, v) / denom).clamp(-1.0, 1.0))
}

fn checked_bilinear(u: ArrayView1<f64>, m: ArrayView2<f64>, v: ArrayView1<f64>) -> Result<f64> {
    check_dim("matrix rows", u.len(), m.nrows())?;
    check_dim("matrix cols", v.len(), m.ncols())?;
    if !(u.iter().chain(m.iter()).chain(v.iter())).all(|x| x.is_finite()) {
        return Err(Error::NonFinite("score input".into()));
    }
    Ok(u.dot(&m.dot(&v)))
}

/// Synergy score `a_i' P a_j`.
pub fn synergy_score(a_i: ArrayView1<f64>, p: ArrayView2<f64>, a_j: ArrayView1<f64>) -> Result<f64> {
    checked_bilinear(a_i, p, a_j)
}

/// Opposition score `a_i' Q a_j`.
pub fn opposition_score(
    a_i: ArrayView1<f64>,
    q: ArrayView2<f64>,
    a_j: ArrayView1<f64>,
) -> Result<f64> {
    checked_bilinear(a_i, q, a_j)
}

pub fn cosine_similarity(u: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<f64> {
    check_dim("vector length", u.len(), v.len())?;
    let u = u.to_vec();
    let v = v.to_vec();
    if norm(&u) == 0.0 {
        return Err(Error::ZeroNorm("first vector".into()));
    }
    cosine_slices(&u, &v).ok_or_else(|| Error::ZeroNorm("second vector".into()))
}

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln(sigmoid(x))`, stable for large `|x|`.
pub(crate) fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}
