//! Game avatar embeddings: learns per-avatar vectors plus shared synergy and
//! opposition matrices from 5v5 match outcomes, and answers prediction,
//! similarity and draft-pick queries over the result.

pub mod baselines;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod optim;
pub mod persist;
pub mod query;
pub mod registry;
pub mod training;

pub use data::{Dataset, MatchRecord};
pub use error::{Error, Result};
pub use model::{ModelParams, Roster, TEAM_SIZE};
pub use registry::{AvatarId, AvatarRegistry};
pub use training::{train, TrainConfig};
