use ndarray::Array2;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::cosine_slices;
use crate::registry::{AvatarId, AvatarRegistry};

/// Ratio reported for cells with no co-occurring matches.
pub const UNSEEN_RATIO: f64 = 0.5;

/// Empirical win ratios: columns `0..N` hold same-team win rates of each
/// pair, columns `N..2N` the rate at which row `i` beats column avatar `j`.
///
/// The diagonal of the same-team block is avatar `i`'s own win rate; the
/// diagonal of the versus block never co-occurs.
#[derive(Debug, Clone, PartialEq)]
pub struct WinRatioMatrix {
    registry: AvatarRegistry,
    ratios: Array2<f64>,
    counts: Array2<u64>,
}

impl WinRatioMatrix {
    pub fn new(registry: AvatarRegistry, ratios: Array2<f64>, counts: Array2<u64>) -> Result<Self> {
        let n = registry.len();
        for (what, shape) in [("win ratios", ratios.dim()), ("win counts", counts.dim())] {
            if shape != (n, 2 * n) {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n * 2 * n,
                    found: shape.0 * shape.1,
                });
            }
        }
        if !ratios.iter().all(|r| (0.0..=1.0).contains(r)) {
            return Err(Error::InvalidInput("win ratios must lie in [0, 1]".into()));
        }
        Ok(Self {
            registry,
            ratios: ratios.as_standard_layout().into_owned(),
            counts,
        })
    }

    pub fn registry(&self) -> &AvatarRegistry {
        &self.registry
    }

    pub fn ratios(&self) -> &Array2<f64> {
        &self.ratios
    }

    /// Number of matches behind each cell; zero marks an unseen cell.
    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    /// Cosine similarity of rows `i` and `j`.
    pub fn similarity(&self, i: AvatarId, j: AvatarId) -> Result<f64> {
        let n = self.registry.len();
        for id in [i, j] {
            if id >= n {
                return Err(Error::AvatarOutOfRange { index: id, n });
            }
        }
        let width = 2 * n;
        let data = self.ratios.as_slice().expect("standard layout");
        let row = |id: AvatarId| &data[id * width..(id + 1) * width];
        cosine_slices(row(i), row(j)).ok_or_else(|| Error::ZeroNorm(format!("win-ratio row of {i} or {j}")))
    }
}

pub fn build_win_ratio_matrix(data: &Dataset) -> Result<WinRatioMatrix> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = data.registry().len();
    let mut wins = Array2::<u64>::zeros((n, 2 * n));
    let mut counts = Array2::<u64>::zeros((n, 2 * n));
    for record in data.matches() {
        for (team, other, won) in [
            (record.red.members(), record.blue.members(), record.red_won),
            (record.blue.members(), record.red.members(), !record.red_won),
        ] {
            let w = u64::from(won);
            for &i in team {
                for &j in team {
                    counts[[i, j]] += 1;
                    wins[[i, j]] += w;
                }
                for &j in other {
                    counts[[i, n + j]] += 1;
                    wins[[i, n + j]] += w;
                }
            }
        }
    }
    let ratios = Array2::from_shape_fn((n, 2 * n), |(i, j)| match counts[[i, j]] {
        0 => UNSEEN_RATIO,
        c => wins[[i, j]] as f64 / c as f64,
    });
    WinRatioMatrix::new(data.registry().clone(), ratios, counts)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;

    use super::*;
    use crate::data::{generate_synthetic, MatchRecord, SyntheticSpec};
    use crate::model::Roster;

    fn record(red: [usize; 5], blue: [usize; 5], red_won: bool) -> MatchRecord {
        MatchRecord::new(Roster::full(red).unwrap(), Roster::full(blue).unwrap(), red_won).unwrap()
    }

    fn registry(n: usize) -> AvatarRegistry {
        AvatarRegistry::from_names((0..n).map(|i| format!("h{i}"))).unwrap()
    }

    #[test]
    fn counts_and_ratios() {
        let data = Dataset::new(
            registry(12),
            vec![
                record([0, 1, 2, 3, 4], [5, 6, 7, 8, 9], true),
                record([0, 1, 2, 3, 10], [5, 6, 7, 8, 9], false),
            ],
        )
        .unwrap();
        let w = build_win_ratio_matrix(&data).unwrap();
        assert_eq!(w.ratios()[[0, 1]], 0.5);
        assert_eq!(w.counts()[[0, 1]], 2);
        // never together
        assert_eq!(w.ratios()[[4, 10]], UNSEEN_RATIO);
        assert_eq!(w.counts()[[4, 10]], 0);
        assert_eq!(w.counts()[[11, 11]], 0);
        // 4 beat 5 once
        assert_eq!(w.ratios()[[4, 12 + 5]], 1.0);
        assert_eq!(w.ratios()[[5, 12 + 4]], 0.0);
    }

    #[test]
    fn versus_ratios_are_complementary() {
        let (data, _) = generate_synthetic(&SyntheticSpec::calibrated(300, 8)).unwrap();
        let w = build_win_ratio_matrix(&data).unwrap();
        let n = data.registry().len();
        for i in 0..n {
            for j in 0..n {
                if w.counts()[[i, n + j]] > 0 {
                    assert_eq!(w.counts()[[i, n + j]], w.counts()[[j, n + i]]);
                    assert_abs_diff_eq!(w.ratios()[[i, n + j]] + w.ratios()[[j, n + i]], 1.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn counts_match_a_recount() {
        let (data, _) = generate_synthetic(&SyntheticSpec::calibrated(60, 3)).unwrap();
        let w = build_win_ratio_matrix(&data).unwrap();
        let n = data.registry().len();
        for i in 0..n {
            for j in 0..n {
                let together = data
                    .matches()
                    .iter()
                    .filter(|m| {
                        (m.red.contains(i) && m.red.contains(j)) || (m.blue.contains(i) && m.blue.contains(j))
                    })
                    .count() as u64;
                let apart = data
                    .matches()
                    .iter()
                    .filter(|m| {
                        (m.red.contains(i) && m.blue.contains(j)) || (m.blue.contains(i) && m.red.contains(j))
                    })
                    .count() as u64;
                assert_eq!(w.counts()[[i, j]], together);
                assert_eq!(w.counts()[[i, n + j]], apart);
            }
        }
    }

    #[test]
    fn similarity_examples() {
        let reg = AvatarRegistry::from_names(["a", "b", "c"]).unwrap();
        let ratios = arr2(&[
            [0.5, 0.5, 0.5, 0.5, 0.5, 0.5],
            [0.5, 0.5, 0.5, 0.5, 0.5, 0.5],
            [1.0, 0.0, 0.2, 0.4, 0.0, 0.9],
        ]);
        let w = WinRatioMatrix::new(reg, ratios, Array2::zeros((3, 6))).unwrap();
        assert_abs_diff_eq!(w.similarity(0, 0).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w.similarity(0, 1).unwrap(), 1.0, epsilon = 1e-15);
        // 0.5 * 2.5 / (sqrt(1.5) * sqrt(2.01))
        let expected = 1.25 / (1.5f64.sqrt() * 2.01f64.sqrt());
        assert_abs_diff_eq!(w.similarity(0, 2).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn zero_row_is_an_error() {
        let reg = AvatarRegistry::from_names(["a", "b"]).unwrap();
        let ratios = arr2(&[[0.0, 0.0, 0.0, 0.0], [0.5, 0.5, 0.5, 0.5]]);
        let w = WinRatioMatrix::new(reg, ratios, Array2::zeros((2, 4))).unwrap();
        assert!(matches!(w.similarity(0, 1), Err(Error::ZeroNorm(_))));
    }
}
