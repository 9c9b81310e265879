use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{auc, mean, paired_t_test, std_dev};
use crate::baselines::{
    encode_match, fm_logit, train_fm, train_logistic_regression, FmConfig, FmModel, LogisticModel,
    LrConfig,
};
use crate::data::{kfold_split, Dataset};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::training::{match_logits, train, TrainConfig};

/// Significance level used to mark paired t-test results.
pub const SIGNIFICANCE_LEVEL: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gae,
    Lr,
    Fm,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Gae => "gae",
            ModelKind::Lr => "lr",
            ModelKind::Fm => "fm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gae" => Ok(ModelKind::Gae),
            "lr" => Ok(ModelKind::Lr),
            "fm" => Ok(ModelKind::Fm),
            other => Err(Error::InvalidInput(format!(
                "unknown model kind {other:?} (expected gae, lr or fm)"
            ))),
        }
    }
}

/// One point of a hyperparameter grid.
#[derive(Debug, Clone, PartialEq)]
pub enum HyperParams {
    Gae(TrainConfig),
    Lr(LrConfig),
    Fm(FmConfig),
}

impl HyperParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            HyperParams::Gae(_) => ModelKind::Gae,
            HyperParams::Lr(_) => ModelKind::Lr,
            HyperParams::Fm(_) => ModelKind::Fm,
        }
    }

    /// Compact `key=value;...` rendering with keys in sorted order.
    pub fn describe(&self) -> String {
        let value = match self {
            HyperParams::Gae(c) => serde_json::to_value(c),
            HyperParams::Lr(c) => serde_json::to_value(c),
            HyperParams::Fm(c) => serde_json::to_value(c),
        }
        .expect("configs serialize");
        let map: BTreeMap<String, serde_json::Value> = match value {
            serde_json::Value::Object(m) => m.into_iter().collect(),
            _ => BTreeMap::new(),
        };
        map.iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Hyperparameter grids per model kind, as read from a TOML grid file:
///
/// ```toml
/// [[gae]]
/// latent_dim = 8
/// epochs = 10
///
/// [[lr]]
/// l2_lambda = 0.0
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperGrid {
    #[serde(default)]
    pub gae: Vec<TrainConfig>,
    #[serde(default)]
    pub lr: Vec<LrConfig>,
    #[serde(default)]
    pub fm: Vec<FmConfig>,
}

impl HyperGrid {
    pub fn points(&self, kind: ModelKind) -> Vec<HyperParams> {
        match kind {
            ModelKind::Gae => self.gae.iter().cloned().map(HyperParams::Gae).collect(),
            ModelKind::Lr => self.lr.iter().cloned().map(HyperParams::Lr).collect(),
            ModelKind::Fm => self.fm.iter().cloned().map(HyperParams::Fm).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum TrainedModel {
    Gae(ModelParams),
    Lr(LogisticModel),
    Fm(FmModel),
}

impl TrainedModel {
    /// Red-win logits for every match, in order.
    pub fn scores(&self, data: &Dataset) -> Result<Vec<f64>> {
        let n = data.registry().len();
        match self {
            TrainedModel::Gae(m) => match_logits(m, data),
            TrainedModel::Lr(m) => data
                .matches()
                .iter()
                .map(|r| Ok(m.logit(&encode_match(r, n)?)))
                .collect(),
            TrainedModel::Fm(m) => data
                .matches()
                .iter()
                .map(|r| Ok(fm_logit(m, &encode_match(r, n)?)))
                .collect(),
        }
    }

    pub fn auc(&self, data: &Dataset) -> Result<f64> {
        auc(&self.scores(data)?, &data.labels())
    }
}

pub fn fit_model(params: &HyperParams, train_set: &Dataset, validation: Option<&Dataset>) -> Result<TrainedModel> {
    Ok(match params {
        HyperParams::Gae(c) => TrainedModel::Gae(train(c, train_set, validation)?.model),
        HyperParams::Lr(c) => TrainedModel::Lr(train_logistic_regression(train_set, c, validation)?.0),
        HyperParams::Fm(c) => TrainedModel::Fm(train_fm(train_set, c, validation)?.0),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub kind: ModelKind,
    pub fold: usize,
    pub test_auc: f64,
    pub validation_auc: f64,
    pub hyperparameters: HyperParams,
}

/// For every fold, trains each grid point on the training part, keeps the
/// one with the best validation AUC (first wins ties) and records its test
/// AUC. Folds run in parallel; results come back in fold order.
pub fn cross_validate(data: &Dataset, grid: &[HyperParams], folds: usize, seed: u64) -> Result<Vec<FoldResult>> {
    let kind = match grid.first() {
        Some(p) => p.kind(),
        None => return Err(Error::InvalidConfig("hyperparameter grid is empty".into())),
    };
    if grid.iter().any(|p| p.kind() != kind) {
        return Err(Error::InvalidConfig("grid mixes model kinds".into()));
    }
    let splits = kfold_split(data.len(), folds, seed)?;
    splits
        .par_iter()
        .enumerate()
        .map(|(fold, split)| {
            let train_set = data.subset(&split.train);
            let validation = data.subset(&split.validation);
            let test = data.subset(&split.test);
            let mut best: Option<(f64, &HyperParams, TrainedModel)> = None;
            for point in grid {
                let model = fit_model(point, &train_set, Some(&validation))?;
                let score = model.auc(&validation)?;
                if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
                    best = Some((score, point, model));
                }
            }
            let (validation_auc, point, model) = best.expect("grid is non-empty");
            Ok(FoldResult {
                kind,
                fold,
                test_auc: model.auc(&test)?,
                validation_auc,
                hyperparameters: point.clone(),
            })
        })
        .collect()
}

/// Paired t-test of per-fold test AUCs between two model kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseTest {
    pub a: ModelKind,
    pub b: ModelKind,
    pub t: Option<f64>,
    pub p_value: Option<f64>,
}

impl PairwiseTest {
    pub fn significant(&self) -> bool {
        self.p_value.is_some_and(|p| p < SIGNIFICANCE_LEVEL)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchmarkReport {
    pub results: Vec<FoldResult>,
}

impl BenchmarkReport {
    pub fn new(results: Vec<FoldResult>) -> Self {
        Self { results }
    }

    pub fn kinds(&self) -> Vec<ModelKind> {
        let mut kinds: Vec<ModelKind> = self.results.iter().map(|r| r.kind).collect();
        kinds.sort();
        kinds.dedup();
        kinds
    }

    pub fn test_aucs(&self, kind: ModelKind) -> Vec<f64> {
        let mut rows: Vec<&FoldResult> = self.results.iter().filter(|r| r.kind == kind).collect();
        rows.sort_by_key(|r| r.fold);
        rows.iter().map(|r| r.test_auc).collect()
    }

    pub fn mean_auc(&self, kind: ModelKind) -> Option<f64> {
        let aucs = self.test_aucs(kind);
        (!aucs.is_empty()).then(|| mean(&aucs))
    }

    /// Tests every other kind against GAE (or the first kind present).
    pub fn pairwise_tests(&self) -> Vec<PairwiseTest> {
        let kinds = self.kinds();
        let Some(&reference) = kinds.first() else {
            return Vec::new();
        };
        kinds
            .iter()
            .filter(|&&k| k != reference)
            .map(|&other| {
                let test = paired_t_test(&self.test_aucs(reference), &self.test_aucs(other)).ok();
                PairwiseTest {
                    a: reference,
                    b: other,
                    t: test.map(|t| t.t),
                    p_value: test.map(|t| t.p_value),
                }
            })
            .collect()
    }

    /// Machine-readable rows: `model,fold,auc,hyperparameters`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.into());
        csv.write_record(["model", "fold", "auc", "hyperparameters"]).map_err(io)?;
        let mut rows: Vec<&FoldResult> = self.results.iter().collect();
        rows.sort_by_key(|r| (r.kind, r.fold));
        for r in rows {
            csv.write_record([
                r.kind.as_str().to_owned(),
                r.fold.to_string(),
                format!("{}", r.test_auc),
                r.hyperparameters.describe(),
            ])
            .map_err(io)?;
        }
        csv.flush()?;
        Ok(())
    }

    /// Plain-text summary: mean and spread of test AUC per model, and the
    /// paired t-test against the reference model. `*` marks p < 0.001.
    pub fn summary_table(&self) -> String {
        let tests = self.pairwise_tests();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<6} {:>5} {:>9} {:>9} {:>10} {:>12}",
            "model", "folds", "mean_auc", "sd_auc", "t", "p_value"
        );
        for kind in self.kinds() {
            let aucs = self.test_aucs(kind);
            let (t, p) = match tests.iter().find(|t| t.b == kind) {
                Some(test) => (
                    test.t.map_or("n/a".to_owned(), |t| format!("{t:.4}")),
                    test.p_value.map_or("n/a".to_owned(), |p| {
                        format!("{p:.3e}{}", if test.significant() { "*" } else { "" })
                    }),
                ),
                None => ("-".to_owned(), "-".to_owned()),
            };
            let _ = writeln!(
                out,
                "{:<6} {:>5} {:>9.4} {:>9.4} {:>10} {:>12}",
                kind.as_str(),
                aucs.len(),
                mean(&aucs),
                std_dev(&aucs),
                t,
                p
            );
        }
        if let Some(reference) = self.kinds().first() {
            let _ = writeln!(
                out,
                "t-tests are paired over folds against {reference}; * marks p < {SIGNIFICANCE_LEVEL}"
            );
        }
        out
    }
}
