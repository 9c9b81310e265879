use std::net::{IpAddr, Ipv4Addr};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gae_core::evaluation::ModelKind;

use crate::output::Format;

fn at_least_one(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "gae",
    version,
    about = "Train, evaluate and query avatar embedding models of 5v5 match outcomes",
    after_help = "Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model to a match log and write the model file
    Train(TrainArgs),
    /// Probability that the red team wins
    Predict(PredictArgs),
    /// Cross-validated AUC benchmark with paired t-tests between model kinds
    Eval(EvalArgs),
    /// Avatars closest to one avatar by embedding cosine similarity
    Similar(SimilarArgs),
    /// Synergy, opposition and similarity scores of two avatars
    Pair(PairArgs),
    /// Rank the next pick for a partial draft
    Recommend(RecommendArgs),
    /// Write a synthetic match log sampled from a random ground-truth model
    Synth(SynthArgs),
    /// Check analytic gradients against central finite differences
    Gradcheck(GradcheckArgs),
    /// Serve a model over HTTP until interrupted
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training match log (.jsonl or .csv)
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Embedding dimension
    #[arg(long, value_name = "K", default_value_t = 16)]
    pub dim: usize,
    /// AdaGrad learning rate
    #[arg(long, value_name = "R", default_value_t = 0.05)]
    pub lr: f64,
    /// Passes over the training data
    #[arg(long, value_name = "E", default_value_t = 20)]
    pub epochs: usize,
    /// Matches per mini-batch
    #[arg(long, value_name = "B", default_value_t = 512)]
    pub batch: usize,
    /// L2 penalty weight on all parameters
    #[arg(long, value_name = "L", default_value_t = 0.0)]
    pub l2: f64,
    /// Seed for initialisation and batch order
    #[arg(long, value_name = "S", default_value_t = 0)]
    pub seed: u64,
    /// Where to write the model file
    #[arg(long, value_name = "MODEL")]
    pub out: PathBuf,
    /// Validation match log; the epoch with the best validation AUC is kept
    #[arg(long, value_name = "PATH")]
    pub valid: Option<PathBuf>,
    /// Output format of the per-epoch log
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model file written by `train`
    #[arg(long, value_name = "MODEL")]
    pub model: PathBuf,
    /// Red team, comma-separated avatar names (1 to 5)
    #[arg(
        long,
        value_name = "NAMES",
        value_delimiter = ',',
        required_unless_present = "data",
        requires = "blue"
    )]
    pub red: Vec<String>,
    /// Blue team, comma-separated avatar names (1 to 5)
    #[arg(
        long,
        value_name = "NAMES",
        value_delimiter = ',',
        required_unless_present = "data",
        requires = "red"
    )]
    pub blue: Vec<String>,
    /// Score every match of a log instead of a single pairing
    #[arg(long, value_name = "PATH", conflicts_with_all = ["red", "blue"])]
    pub data: Option<PathBuf>,
    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Gae,
    Lr,
    Fm,
}

impl From<Kind> for ModelKind {
    fn from(kind: Kind) -> Self {
        match kind {
            Kind::Gae => ModelKind::Gae,
            Kind::Lr => ModelKind::Lr,
            Kind::Fm => ModelKind::Fm,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Match log (.jsonl or .csv)
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Model kinds to benchmark, comma-separated or repeated
    #[arg(long, value_name = "KIND", value_enum, value_delimiter = ',', required = true)]
    pub model_kind: Vec<Kind>,
    /// TOML hyper-parameter grid with [[gae]], [[lr]] and [[fm]] tables
    #[arg(long, value_name = "FILE")]
    pub grid: PathBuf,
    /// Number of folds; each fold is the test set once and the validation set once
    #[arg(long, value_name = "N", default_value_t = 10)]
    pub folds: usize,
    /// Seed for the fold partition
    #[arg(long, value_name = "S", default_value_t = 0)]
    pub seed: u64,
    /// Where to write the per-fold CSV report
    #[arg(long, value_name = "PATH")]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimilarArgs {
    /// Model file written by `train`
    #[arg(long, value_name = "MODEL")]
    pub model: PathBuf,
    /// Avatar name
    #[arg(long, value_name = "NAME")]
    pub avatar: String,
    /// Number of avatars to list
    #[arg(long, value_name = "K", default_value_t = 5, value_parser = at_least_one)]
    pub top_k: usize,
    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct PairArgs {
    /// Model file written by `train`
    #[arg(long, value_name = "MODEL")]
    pub model: PathBuf,
    /// First avatar name
    #[arg(long, value_name = "NAME")]
    pub a: String,
    /// Second avatar name
    #[arg(long, value_name = "NAME")]
    pub b: String,
    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    /// Model file written by `train`
    #[arg(long, value_name = "MODEL")]
    pub model: PathBuf,
    /// Avatars already on our team, comma-separated (0 to 4)
    #[arg(long, value_name = "NAMES", value_delimiter = ',')]
    pub ally: Vec<String>,
    /// Avatars on the opposing team, comma-separated (0 to 5)
    #[arg(long, value_name = "NAMES", value_delimiter = ',')]
    pub enemy: Vec<String>,
    /// Restrict candidates to these avatars [default: every unpicked avatar]
    #[arg(long, value_name = "NAMES", value_delimiter = ',')]
    pub pool: Option<Vec<String>>,
    /// Avatars the player knows well; adds similar familiar avatars to each pick
    #[arg(long, value_name = "NAMES", value_delimiter = ',')]
    pub familiar: Option<Vec<String>>,
    /// Number of picks to list
    #[arg(long, value_name = "K", default_value_t = gae_service::DEFAULT_TOP_K, value_parser = at_least_one)]
    pub top_k: usize,
    /// Familiar avatars listed per pick
    #[arg(long, value_name = "K", default_value_t = gae_service::DEFAULT_SIM_K, value_parser = at_least_one)]
    pub sim_k: usize,
    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output match log; the extension (.jsonl or .csv) picks the format
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Number of matches
    #[arg(long, value_name = "N", default_value_t = 10_000)]
    pub matches: usize,
    /// Number of avatars (at least 10)
    #[arg(long, value_name = "N", default_value_t = 30)]
    pub avatars: usize,
    /// Embedding dimension of the ground-truth model
    #[arg(long, value_name = "K", default_value_t = 8)]
    pub dim: usize,
    /// Seed for the ground-truth model and the sampled matches
    #[arg(long, value_name = "S", default_value_t = 0)]
    pub seed: u64,
    /// Also write the ground-truth model file
    #[arg(long, value_name = "MODEL")]
    pub truth: Option<PathBuf>,
    /// Output format of the summary
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Avatars in the random model
    #[arg(long, value_name = "N", default_value_t = 10)]
    pub avatars: usize,
    /// Embedding dimension of the random model
    #[arg(long, value_name = "K", default_value_t = 4)]
    pub dim: usize,
    /// Matches in the batch
    #[arg(long, value_name = "B", default_value_t = 8)]
    pub batch: usize,
    /// L2 penalty weight
    #[arg(long, value_name = "L", default_value_t = 0.01)]
    pub l2: f64,
    /// Finite-difference step
    #[arg(long, value_name = "H", default_value_t = 1e-5)]
    pub step: f64,
    /// Largest acceptable relative error
    #[arg(long, value_name = "T", default_value_t = 1e-5)]
    pub tolerance: f64,
    /// Seed for the random model and batch
    #[arg(long, value_name = "S", default_value_t = 0)]
    pub seed: u64,
    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Model file written by `train`
    #[arg(long, value_name = "MODEL")]
    pub model: PathBuf,
    /// Address to bind
    #[arg(long, value_name = "ADDR", default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    pub bind: IpAddr,
    /// TCP port
    #[arg(long, value_name = "PORT", default_value_t = 8080)]
    pub port: u16,
    /// Log every request to standard error
    #[arg(long)]
    pub request_log: bool,
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;
    use gae_core::TrainConfig;

    use super::*;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn train_defaults_match_library() {
        let cli = Cli::try_parse_from(["gae", "train", "--data", "m.jsonl", "--out", "m.model"]).unwrap();
        let Command::Train(t) = cli.command else {
            panic!("parsed {:?}", cli.command)
        };
        let d = TrainConfig::default();
        assert_eq!(
            (t.dim, t.lr, t.epochs, t.batch, t.l2, t.seed),
            (d.latent_dim, d.learning_rate, d.epochs, d.batch_size, d.l2_lambda, d.seed)
        );
    }

    #[test]
    fn name_lists_split_on_commas() {
        let cli = Cli::try_parse_from(["gae", "predict", "--model", "m", "--red", "a,b", "--red", "c", "--blue", "d"])
            .unwrap();
        let Command::Predict(p) = cli.command else {
            panic!("parsed {:?}", cli.command)
        };
        assert_eq!(p.red, ["a", "b", "c"]);
        assert_eq!(p.blue, ["d"]);
    }

    #[test]
    fn predict_needs_both_sides_or_a_log() {
        assert!(Cli::try_parse_from(["gae", "predict", "--model", "m", "--red", "a"]).is_err());
        assert!(Cli::try_parse_from(["gae", "predict", "--model", "m"]).is_err());
        assert!(Cli::try_parse_from(["gae", "predict", "--model", "m", "--data", "x.csv"]).is_ok());
        assert!(Cli::try_parse_from(["gae", "predict", "--model", "m", "--data", "x.csv", "--red", "a", "--blue", "b"])
            .is_err());
    }

    #[test]
    fn every_flag_has_help() {
        let cli = Cli::command();
        for sub in cli.get_subcommands() {
            for arg in sub.get_arguments() {
                if ["help", "version"].contains(&arg.get_id().as_str()) {
                    continue;
                }
                assert!(arg.get_help().is_some(), "{} --{} has no help", sub.get_name(), arg.get_id());
            }
        }
    }
}
