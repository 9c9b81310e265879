use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use super::metrics::pearson_r;
use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relationship {
    Similarity,
    Synergy,
    Opposition,
}

impl Relationship {
    pub const ALL: [Relationship; 3] = [Relationship::Similarity, Relationship::Synergy, Relationship::Opposition];

    pub fn as_str(&self) -> &'static str {
        match self {
            Relationship::Similarity => "similarity",
            Relationship::Synergy => "synergy",
            Relationship::Opposition => "opposition",
        }
    }
}

impl fmt::Display for Relationship {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relationship {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Relationship::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown relationship {s:?}")))
    }
}

/// One human rating of an ordered avatar pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingRow {
    pub avatar_a: String,
    pub avatar_b: String,
    pub relationship: Relationship,
    pub rating: f64,
}

#[derive(Deserialize)]
struct RawRow {
    avatar_a: String,
    avatar_b: String,
    relationship: String,
    rating: f64,
}

/// Reads a CSV with header `avatar_a,avatar_b,relationship,rating`.
pub fn read_ratings<R: Read>(reader: R) -> Result<Vec<RatingRow>> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for (i, raw) in csv.deserialize::<RawRow>().enumerate() {
        let line = i + 2;
        let raw = raw.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let relationship = raw.relationship.parse().map_err(|e: Error| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if !raw.rating.is_finite() {
            return Err(Error::Parse {
                line,
                message: "rating is not finite".into(),
            });
        }
        rows.push(RatingRow {
            avatar_a: raw.avatar_a,
            avatar_b: raw.avatar_b,
            relationship,
            rating: raw.rating,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingCorrelation {
    pub relationship: Relationship,
    pub pairs: usize,
    pub pearson_r: f64,
}

/// Pearson correlation between ratings and the model's score for each
/// relationship present: cosine similarity, `S(i, j) + S(j, i)` and
/// `|C(i, j) - C(j, i)|`. Names not in the model fail the whole call, with
/// every offender listed.
pub fn correlate_ratings(model: &ModelParams, rows: &[RatingRow]) -> Result<Vec<RatingCorrelation>> {
    let registry = model.registry();
    let mut unknown: Vec<String> = rows
        .iter()
        .flat_map(|r| [&r.avatar_a, &r.avatar_b])
        .filter(|name| registry.get(name).is_none())
        .cloned()
        .collect();
    unknown.sort();
    unknown.dedup();
    if !unknown.is_empty() {
        return Err(Error::UnknownAvatar(unknown));
    }
    let mut out = Vec::new();
    for relationship in Relationship::ALL {
        let group: Vec<&RatingRow> = rows.iter().filter(|r| r.relationship == relationship).collect();
        if group.is_empty() {
            continue;
        }
        let mut scores = Vec::with_capacity(group.len());
        for row in &group {
            let a = registry.get(&row.avatar_a).expect("checked above");
            let b = registry.get(&row.avatar_b).expect("checked above");
            scores.push(match relationship {
                Relationship::Similarity => model.similarity(a, b)?,
                Relationship::Synergy => model.pair_synergy_level(a, b)?,
                Relationship::Opposition => model.pair_opposition_level(a, b)?,
            });
        }
        let ratings: Vec<f64> = group.iter().map(|r| r.rating).collect();
        out.push(RatingCorrelation {
            relationship,
            pairs: group.len(),
            pearson_r: pearson_r(&scores, &ratings)?,
        });
    }
    Ok(out)
}

pub fn correlate_ratings_file(model: &ModelParams, path: &Path) -> Result<Vec<RatingCorrelation>> {
    correlate_ratings(model, &read_ratings(std::fs::File::open(path)?)?)
}

#[cfg(test)]
mod tests {
    use ndarray::{arr1, arr2};

    use super::*;
    use crate::registry::AvatarRegistry;

    fn model() -> ModelParams {
        let reg = AvatarRegistry::from_names(["a", "b", "c"]).unwrap();
        ModelParams::new(
            reg,
            arr2(&[[1.0, 0.0], [0.0, 1.0], [2.0, 1.0]]),
            arr2(&[[1.0, 2.0], [0.0, 3.0]]),
            arr2(&[[0.0, 1.0], [-1.0, 0.0]]),
            arr1(&[0.0, 0.0, 0.0]),
        )
        .unwrap()
    }

    #[test]
    fn parses_and_correlates() {
        let text = "avatar_a,avatar_b,relationship,rating\n\
                    a,b,synergy,1\n\
                    a,c,synergy,2\n\
                    b,c,synergy,3\n\
                    a,b,similarity,0\n\
                    a,c,similarity,5\n";
        let rows = read_ratings(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 5);
        let result = correlate_ratings(&model(), &rows).unwrap();
        assert_eq!(result.len(), 2);
        assert_eq!(result[0].relationship, Relationship::Similarity);
        assert_eq!(result[0].pairs, 2);
        // two points always correlate perfectly
        assert!((result[0].pearson_r - 1.0).abs() < 1e-12);
        assert_eq!(result[1].relationship, Relationship::Synergy);
        assert!(result[1].pearson_r.is_finite());
    }

    #[test]
    fn ratings_equal_to_scores_correlate_perfectly() {
        let m = model();
        let pairs = [(0, 1), (0, 2), (1, 2)];
        let mut rows = Vec::new();
        for relationship in Relationship::ALL {
            for &(a, b) in &pairs {
                let rating = match relationship {
                    Relationship::Similarity => m.similarity(a, b).unwrap(),
                    Relationship::Synergy => m.pair_synergy_level(a, b).unwrap(),
                    Relationship::Opposition => m.pair_opposition_level(a, b).unwrap(),
                };
                rows.push(RatingRow {
                    avatar_a: m.registry().name(a).unwrap().to_owned(),
                    avatar_b: m.registry().name(b).unwrap().to_owned(),
                    relationship,
                    rating,
                });
            }
        }
        let result = correlate_ratings(&m, &rows).unwrap();
        assert_eq!(result.len(), 3);
        for r in result {
            assert!((r.pearson_r - 1.0).abs() < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn unknown_names_listed() {
        let text = "avatar_a,avatar_b,relationship,rating\nzed,a,synergy,1\nb,yan,opposition,2\nzed,b,synergy,1\n";
        let rows = read_ratings(text.as_bytes()).unwrap();
        match correlate_ratings(&model(), &rows) {
            Err(Error::UnknownAvatar(names)) => assert_eq!(names, vec!["yan".to_string(), "zed".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_relationship_reports_line() {
        let text = "avatar_a,avatar_b,relationship,rating\na,b,synergy,1\na,b,friendship,1\n";
        assert!(matches!(read_ratings(text.as_bytes()), Err(Error::Parse { line: 3, .. })));
    }
}
