//! Match records, datasets, match-log ingestion, fold splitting and a
//! synthetic match generator with known ground truth.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::auc;
use crate::model::{ModelParams, Roster, TEAM_SIZE};
use crate::registry::{AvatarId, AvatarRegistry};

/// One recorded 5v5 match. `red_won` is the outcome from the red side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchRecord {
    pub red: Roster,
    pub blue: Roster,
    pub red_won: bool,
}

impl MatchRecord {
    pub fn new(red: Roster, blue: Roster, red_won: bool) -> Result<Self> {
        for roster in [&red, &blue] {
            if !roster.is_full() {
                return Err(Error::RosterSize {
                    size: roster.len(),
                    expected: "exactly 5",
                });
            }
        }
        if let Some(&id) = red.members().iter().find(|&&id| blue.contains(id)) {
            return Err(Error::OverlappingRosters(id));
        }
        Ok(Self { red, blue, red_won })
    }

    pub fn label(&self) -> f64 {
        if self.red_won {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    registry: AvatarRegistry,
    matches: Vec<MatchRecord>,
}

impl Dataset {
    pub fn new(registry: AvatarRegistry, matches: Vec<MatchRecord>) -> Result<Self> {
        let n = registry.len();
        for record in &matches {
            for &id in record.red.members().iter().chain(record.blue.members()) {
                if id >= n {
                    return Err(Error::AvatarOutOfRange { index: id, n });
                }
            }
        }
        Ok(Self { registry, matches })
    }

    pub fn registry(&self) -> &AvatarRegistry {
        &self.registry
    }

    pub fn matches(&self) -> &[MatchRecord] {
        &self.matches
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.matches.iter().map(|m| m.red_won).collect()
    }

    /// New dataset over the same registry holding the given matches in order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            registry: self.registry.clone(),
            matches: indices.iter().map(|&i| self.matches[i].clone()).collect(),
        }
    }

    /// Splits off the first `n` matches; the rest go to the second dataset.
    pub fn split_at(&self, n: usize) -> (Dataset, Dataset) {
        let n = n.min(self.len());
        (
            Dataset {
                registry: self.registry.clone(),
                matches: self.matches[..n].to_vec(),
            },
            Dataset {
                registry: self.registry.clone(),
                matches: self.matches[n..].to_vec(),
            },
        )
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for record in &self.matches {
            let names = |r: &Roster| -> Vec<&str> {
                r.members()
                    .iter()
                    .map(|&id| self.registry.name(id).expect("validated index"))
                    .collect()
            };
            let line = JsonMatch {
                red: names(&record.red).into_iter().map(str::to_owned).collect(),
                blue: names(&record.blue).into_iter().map(str::to_owned).collect(),
                win: if record.red_won { "red" } else { "blue" }.to_owned(),
            };
            serde_json::to_writer(&mut out, &line).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_jsonl(&mut out)?;
        out.flush()?;
        Ok(())
    }

    /// Writes `r1..r5,b1..b5,winner` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::Io(e.into());
        let mut csv = csv::Writer::from_writer(out);
        csv.write_record(CSV_HEADER).map_err(io)?;
        for record in &self.matches {
            let mut row: Vec<&str> = record
                .red
                .members()
                .iter()
                .chain(record.blue.members())
                .map(|&id| self.registry.name(id).expect("validated index"))
                .collect();
            row.push(if record.red_won { "red" } else { "blue" });
            csv.write_record(&row).map_err(io)?;
        }
        csv.flush()?;
        Ok(())
    }

    /// Saves in the format implied by the file extension.
    pub fn save(&self, path: &Path) -> Result<()> {
        let format = MatchFormat::from_path(path)?;
        let mut out = BufWriter::new(File::create(path)?);
        match format {
            MatchFormat::Jsonl => self.write_jsonl(&mut out)?,
            MatchFormat::Csv => self.write_csv(&mut out)?,
        }
        out.flush()?;
        Ok(())
    }
}

const CSV_HEADER: [&str; 11] = ["r1", "r2", "r3", "r4", "r5", "b1", "b2", "b3", "b4", "b5", "winner"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchFormat {
    Jsonl,
    Csv,
}

impl FromStr for MatchFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(MatchFormat::Jsonl),
            "csv" => Ok(MatchFormat::Csv),
            other => Err(Error::InvalidInput(format!(
                "unknown match format {other:?} (expected jsonl or csv)"
            ))),
        }
    }
}

impl MatchFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(MatchFormat::Csv),
            Some("jsonl") | Some("json") => Ok(MatchFormat::Jsonl),
            _ => Err(Error::InvalidInput(format!(
                "cannot infer match format of {}",
                path.display()
            ))),
        }
    }
}

/// A record that parsed but violates roster rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadedMatches {
    pub dataset: Dataset,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonMatch {
    red: Vec<String>,
    blue: Vec<String>,
    win: String,
}

/// Loads a match log, building the registry in order of first appearance.
pub fn load_matches(path: &Path, format: MatchFormat) -> Result<LoadedMatches> {
    load_matches_with(path, format, AvatarRegistry::new())
}

/// Loads a match log on top of an existing registry; names it does not know
/// are appended in order of first appearance.
pub fn load_matches_with(
    path: &Path,
    format: MatchFormat,
    registry: AvatarRegistry,
) -> Result<LoadedMatches> {
    let file = File::open(path)?;
    read_matches_with(BufReader::new(file), format, registry)
}

pub fn read_matches<R: Read>(reader: R, format: MatchFormat) -> Result<LoadedMatches> {
    read_matches_with(reader, format, AvatarRegistry::new())
}

pub fn read_matches_with<R: Read>(
    reader: R,
    format: MatchFormat,
    registry: AvatarRegistry,
) -> Result<LoadedMatches> {
    let mut builder = Builder {
        registry,
        ..Builder::default()
    };
    match format {
        MatchFormat::Jsonl => {
            for (i, line) in BufReader::new(reader).lines().enumerate() {
                let line_no = i + 1;
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let raw: JsonMatch = serde_json::from_str(&line).map_err(|e| Error::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
                let red_won = parse_winner(&raw.win, line_no)?;
                builder.push(line_no, &raw.red, &raw.blue, red_won);
            }
        }
        MatchFormat::Csv => {
            let mut csv = csv::ReaderBuilder::new()
                .trim(csv::Trim::All)
                .from_reader(reader);
            let headers = csv.headers().map_err(|e| csv_error(e, 1))?.clone();
            if headers.iter().ne(CSV_HEADER.iter().copied()) {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header {}", CSV_HEADER.join(",")),
                });
            }
            for row in csv.records() {
                let row = row.map_err(|e| csv_error(e, 0))?;
                let line_no = row.position().map_or(0, |p| p.line() as usize);
                let red: Vec<String> = row.iter().take(5).map(str::to_owned).collect();
                let blue: Vec<String> = row.iter().skip(5).take(5).map(str::to_owned).collect();
                let red_won = parse_winner(&row[10], line_no)?;
                builder.push(line_no, &red, &blue, red_won);
            }
        }
    }
    builder.finish()
}

fn csv_error(e: csv::Error, fallback_line: usize) -> Error {
    let line = e
        .position()
        .map_or(fallback_line, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn parse_winner(win: &str, line: usize) -> Result<bool> {
    match win.trim() {
        "red" => Ok(true),
        "blue" => Ok(false),
        other => Err(Error::Parse {
            line,
            message: format!("winner must be \"red\" or \"blue\", got {other:?}"),
        }),
    }
}

#[derive(Default)]
struct Builder {
    registry: AvatarRegistry,
    matches: Vec<MatchRecord>,
    rejected: Vec<Rejection>,
}

impl Builder {
    fn push(&mut self, line: usize, red: &[String], blue: &[String], red_won: bool) {
        if let Err(reason) = self.try_push(red, blue, red_won) {
            self.rejected.push(Rejection { line, reason });
        }
    }

    // Names are validated before any is interned so a rejected record
    // leaves the registry untouched.
    fn try_push(&mut self, red: &[String], blue: &[String], red_won: bool) -> Result<(), String> {
        let red: Vec<&str> = red.iter().map(|s| s.trim()).collect();
        let blue: Vec<&str> = blue.iter().map(|s| s.trim()).collect();
        for (side, names) in [("red", &red), ("blue", &blue)] {
            if names.len() != TEAM_SIZE {
                return Err(format!("{side} roster has {} avatars, expected 5", names.len()));
            }
        }
        let all: Vec<&str> = red.iter().chain(&blue).copied().collect();
        for (pos, name) in all.iter().enumerate() {
            if name.is_empty() {
                return Err("empty avatar name".into());
            }
            if name.chars().any(char::is_control) {
                return Err(format!("avatar name {name:?} contains control characters"));
            }
            if all[..pos].contains(name) {
                return Err(format!("avatar {name:?} appears twice in the match"));
            }
        }
        let mut intern = |names: &[&str]| -> Vec<AvatarId> {
            names
                .iter()
                .map(|n| self.registry.intern(n).expect("name validated"))
                .collect()
        };
        let red = Roster::full(intern(&red)).map_err(|e| e.to_string())?;
        let blue = Roster::full(intern(&blue)).map_err(|e| e.to_string())?;
        let record = MatchRecord::new(red, blue, red_won).map_err(|e| e.to_string())?;
        self.matches.push(record);
        Ok(())
    }

    fn finish(self) -> Result<LoadedMatches> {
        Ok(LoadedMatches {
            dataset: Dataset::new(self.registry, self.matches)?,
            rejected: self.rejected,
        })
    }
}

/// Index sets for one cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded k-fold partition: fold `f` is the test set, fold `f + 1` (mod k)
/// the validation set, the remaining folds the training set.
pub fn kfold_split(n_matches: usize, folds: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if folds < 3 {
        return Err(Error::InvalidConfig(format!(
            "need at least 3 folds for train/validation/test, got {folds}"
        )));
    }
    if n_matches < folds {
        return Err(Error::InvalidConfig(format!(
            "{n_matches} matches cannot fill {folds} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n_matches).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let chunks: Vec<&[usize]> = (0..folds)
        .map(|f| &order[f * n_matches / folds..(f + 1) * n_matches / folds])
        .collect();
    Ok((0..folds)
        .map(|f| {
            let validation_fold = (f + 1) % folds;
            let train = (0..folds)
                .filter(|&g| g != f && g != validation_fold)
                .flat_map(|g| chunks[g].iter().copied())
                .collect();
            FoldSplit {
                train,
                validation: chunks[validation_fold].to_vec(),
                test: chunks[f].to_vec(),
            }
        })
        .collect())
}

/// Parameters of the ground-truth match generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_avatars: usize,
    pub latent_dim: usize,
    /// Standard deviation of embedding entries.
    pub embedding_scale: f64,
    /// Standard deviation of synergy/opposition entries, before the `1/K` factor.
    pub matrix_scale: f64,
    pub bias_scale: f64,
    pub n_matches: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Generator settings whose ground-truth AUC sits in the 0.70-0.78 band
    /// with interaction terms dominating the per-avatar biases.
    pub fn calibrated(n_matches: usize, seed: u64) -> Self {
        Self {
            n_avatars: 30,
            latent_dim: 8,
            embedding_scale: CALIBRATED_EMBEDDING_SCALE,
            matrix_scale: CALIBRATED_MATRIX_SCALE,
            bias_scale: CALIBRATED_BIAS_SCALE,
            n_matches,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_avatars < 10 {
            return Err(Error::InvalidConfig(format!(
                "synthetic data needs at least 10 avatars, got {}",
                self.n_avatars
            )));
        }
        if self.latent_dim == 0 {
            return Err(Error::InvalidConfig("latent_dim must be at least 1".into()));
        }
        for (name, v) in [
            ("embedding_scale", self.embedding_scale),
            ("matrix_scale", self.matrix_scale),
            ("bias_scale", self.bias_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be a finite value >= 0")));
            }
        }
        Ok(())
    }
}

pub const CALIBRATED_EMBEDDING_SCALE: f64 = 1.0;
/// Over seeds 1-8 this gives ground-truth test AUCs between 0.71 and 0.77.
pub const CALIBRATED_MATRIX_SCALE: f64 = 0.12;
pub const CALIBRATED_BIAS_SCALE: f64 = 0.1;

/// Draws ground-truth parameters and `spec.n_matches` matches sampled from them.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, ModelParams)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let registry =
        AvatarRegistry::from_names((0..spec.n_avatars).map(|i| format!("avatar_{i:03}")))?;
    let k = spec.latent_dim;
    let n = spec.n_avatars;
    let mut gaussian = |rows: usize, cols: usize, sd: f64| -> Array2<f64> {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        Array2::from_shape_simple_fn((rows, cols), || sd * normal.sample(&mut rng))
    };
    let embeddings = gaussian(n, k, spec.embedding_scale);
    let synergy = gaussian(k, k, spec.matrix_scale / k as f64);
    let opposition = gaussian(k, k, spec.matrix_scale / k as f64);
    let bias = gaussian(1, n, spec.bias_scale);
    let truth = ModelParams::new(
        registry,
        embeddings,
        synergy,
        opposition,
        Array1::from_iter(bias.iter().copied()),
    )?;
    let data = sample_matches_with(&truth, spec.n_matches, &mut rng)?;
    Ok((data, truth))
}

/// Samples fresh matches from existing ground-truth parameters.
pub fn sample_matches(truth: &ModelParams, n_matches: usize, seed: u64) -> Result<Dataset> {
    sample_matches_with(truth, n_matches, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn sample_matches_with<R: Rng>(truth: &ModelParams, n_matches: usize, rng: &mut R) -> Result<Dataset> {
    let n = truth.n_avatars();
    if n < 2 * TEAM_SIZE {
        return Err(Error::InvalidConfig(format!("{n} avatars cannot field two teams")));
    }
    let mut matches = Vec::with_capacity(n_matches);
    for _ in 0..n_matches {
        let picks = rand::seq::index::sample(rng, n, 2 * TEAM_SIZE).into_vec();
        let red = Roster::full(picks[..TEAM_SIZE].iter().copied())?;
        let blue = Roster::full(picks[TEAM_SIZE..].iter().copied())?;
        let p = truth.win_probability(&red, &blue)?;
        let red_won = rng.random::<f64>() < p;
        matches.push(MatchRecord::new(red, blue, red_won)?);
    }
    Dataset::new(truth.registry().clone(), matches)
}

/// AUC obtained by scoring matches with the ground-truth win probability.
pub fn bayes_auc(truth: &ModelParams, matches: &Dataset) -> Result<f64> {
    if truth.registry() != matches.registry() {
        return Err(Error::InvalidInput(
            "matches were not generated from this registry".into(),
        ));
    }
    let scores = matches
        .matches()
        .iter()
        .map(|m| truth.win_probability(&m.red, &m.blue))
        .collect::<Result<Vec<_>>>()?;
    auc(&scores, &matches.labels())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"red":["a","b","c","d","e"],"blue":["f","g","h","i","j"],"win":"red"}"#;

    #[test]
    fn jsonl_outcomes() {
        let loaded = read_matches(LINE.as_bytes(), MatchFormat::Jsonl).unwrap();
        assert!(loaded.dataset.matches()[0].red_won);
        let blue = LINE.replace(r#""win":"red""#, r#""win":"blue""#);
        let loaded = read_matches(blue.as_bytes(), MatchFormat::Jsonl).unwrap();
        assert!(!loaded.dataset.matches()[0].red_won);
    }

    #[test]
    fn jsonl_counts_matches_and_avatars() {
        let text = [
            LINE.to_string(),
            r#"{"red":["a","k","c","d","e"],"blue":["f","g","h","i","l"],"win":"blue"}"#.into(),
            r#"{"red":[" l ","k","c","d","e"],"blue":["f","g","h","i","a"],"win":"red"}"#.into(),
        ]
        .join("\n");
        let loaded = read_matches(text.as_bytes(), MatchFormat::Jsonl).unwrap();
        assert_eq!(loaded.dataset.len(), 3);
        assert_eq!(loaded.dataset.registry().len(), 12);
        assert!(loaded.rejected.is_empty());
        assert_eq!(loaded.dataset.registry().get("l"), Some(11));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("{LINE}\n\n{{\"red\": oops}}\n");
        match read_matches(text.as_bytes(), MatchFormat::Jsonl) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let bad_win = LINE.replace("\"red\"}", "\"green\"}");
        assert!(matches!(
            read_matches(bad_win.as_bytes(), MatchFormat::Jsonl),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn invalid_rosters_are_rejected_and_counted() {
        let dup = r#"{"red":["a","b","c","d","e"],"blue":["a","g","h","i","j"],"win":"red"}"#;
        let short = r#"{"red":["a","b","c","d"],"blue":["f","g","h","i","j"],"win":"red"}"#;
        let text = format!("{dup}\n{LINE}\n{short}\n");
        let loaded = read_matches(text.as_bytes(), MatchFormat::Jsonl).unwrap();
        assert_eq!(loaded.dataset.len(), 1);
        let lines: Vec<usize> = loaded.rejected.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![1, 3]);
        // the rejected first record must not leak names into the registry order
        assert_eq!(loaded.dataset.registry().name(0), Some("a"));
        assert_eq!(loaded.dataset.registry().len(), 10);
    }

    #[test]
    fn csv_format() {
        let text = "r1,r2,r3,r4,r5,b1,b2,b3,b4,b5,winner\n\
                    a,b,c,d,e,f,g,h,i,j,blue\n\
                    a, b ,c,d,e,f,g,h,i,k,red\n";
        let loaded = read_matches(text.as_bytes(), MatchFormat::Csv).unwrap();
        assert_eq!(loaded.dataset.len(), 2);
        assert!(!loaded.dataset.matches()[0].red_won);
        assert!(loaded.dataset.matches()[1].red_won);
        assert_eq!(loaded.dataset.registry().len(), 11);

        let bad_header = "a,b\n1,2\n";
        assert!(read_matches(bad_header.as_bytes(), MatchFormat::Csv).is_err());
        let bad_winner = "r1,r2,r3,r4,r5,b1,b2,b3,b4,b5,winner\na,b,c,d,e,f,g,h,i,j,draw\n";
        assert!(matches!(
            read_matches(bad_winner.as_bytes(), MatchFormat::Csv),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn unknown_format() {
        assert!("parquet".parse::<MatchFormat>().is_err());
        assert_eq!("csv".parse::<MatchFormat>().unwrap(), MatchFormat::Csv);
    }

    #[test]
    fn kfold_sizes() {
        let splits = kfold_split(100, 10, 1).unwrap();
        assert_eq!(splits.len(), 10);
        for s in &splits {
            assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (80, 10, 10));
        }
        let splits = kfold_split(105, 10, 1).unwrap();
        let sizes: Vec<usize> = splits.iter().map(|s| s.test.len()).collect();
        assert_eq!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap(), 1);
        assert_eq!(sizes.iter().sum::<usize>(), 105);
        assert!(kfold_split(9, 10, 1).is_err());
    }

    #[test]
    fn kfold_is_a_partition() {
        let splits = kfold_split(57, 10, 3).unwrap();
        let mut all: Vec<usize> = splits.iter().flat_map(|s| s.test.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..57).collect::<Vec<_>>());
        for (f, s) in splits.iter().enumerate() {
            assert_eq!(s.validation, splits[(f + 1) % 10].test);
            let mut every: Vec<usize> = s
                .train
                .iter()
                .chain(&s.validation)
                .chain(&s.test)
                .copied()
                .collect();
            every.sort_unstable();
            assert_eq!(every, (0..57).collect::<Vec<_>>());
        }
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec::calibrated(50, 9);
        let (d1, t1) = generate_synthetic(&spec).unwrap();
        let (d2, t2) = generate_synthetic(&spec).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(t1, t2);
    }

    #[test]
    fn degenerate_generator_is_a_coin() {
        let spec = SyntheticSpec {
            n_avatars: 12,
            latent_dim: 3,
            embedding_scale: 0.0,
            matrix_scale: 0.0,
            bias_scale: 0.0,
            n_matches: 10_000,
            seed: 4,
        };
        let (data, truth) = generate_synthetic(&spec).unwrap();
        for m in data.matches().iter().take(20) {
            assert_eq!(truth.win_probability(&m.red, &m.blue).unwrap(), 0.5);
        }
        let wins = data.matches().iter().filter(|m| m.red_won).count() as f64;
        let sigma = (10_000.0f64 * 0.25).sqrt();
        assert!((wins - 5_000.0).abs() < 3.0 * sigma, "wins = {wins}");
        let auc = bayes_auc(&truth, &data).unwrap();
        assert!((0.45..=0.55).contains(&auc));
    }

    #[test]
    fn saturated_generator_is_separable() {
        let spec = SyntheticSpec {
            n_avatars: 20,
            latent_dim: 2,
            embedding_scale: 0.0,
            matrix_scale: 0.0,
            bias_scale: 500.0,
            n_matches: 2_000,
            seed: 5,
        };
        let (data, truth) = generate_synthetic(&spec).unwrap();
        assert!(bayes_auc(&truth, &data).unwrap() > 0.999);
    }

    #[test]
    fn rejects_small_generator() {
        let mut spec = SyntheticSpec::calibrated(10, 0);
        spec.n_avatars = 9;
        assert!(generate_synthetic(&spec).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let (data, _) = generate_synthetic(&SyntheticSpec::calibrated(40, 2)).unwrap();
        let mut buf = Vec::new();
        data.write_jsonl(&mut buf).unwrap();
        let back = read_matches_with(buf.as_slice(), MatchFormat::Jsonl, data.registry().clone())
            .unwrap()
            .dataset;
        assert_eq!(back, data);

        // a log loaded from scratch round-trips with first-appearance order intact
        let fresh = read_matches(buf.as_slice(), MatchFormat::Jsonl).unwrap().dataset;
        let mut again = Vec::new();
        fresh.write_jsonl(&mut again).unwrap();
        let reloaded = read_matches(again.as_slice(), MatchFormat::Jsonl).unwrap().dataset;
        assert_eq!(reloaded, fresh);
    }

    #[test]
    fn csv_round_trip() {
        let (data, _) = generate_synthetic(&SyntheticSpec::calibrated(40, 3)).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = read_matches_with(buf.as_slice(), MatchFormat::Csv, data.registry().clone()).unwrap();
        assert!(back.rejected.is_empty());
        assert_eq!(back.dataset, data);
    }
}
