//! AUC and significance testing, cross-validated benchmarking and rating
//! correlation.

mod benchmark;
mod metrics;
mod ratings;

pub use benchmark::{
    cross_validate, fit_model, BenchmarkReport, FoldResult, HyperGrid, HyperParams, ModelKind,
    PairwiseTest, TrainedModel,
};
pub use metrics::{auc, mean, paired_t_test, pearson_r, std_dev, TTest};
pub use ratings::{
    correlate_ratings, correlate_ratings_file, read_ratings, RatingCorrelation, RatingRow,
    Relationship,
};
