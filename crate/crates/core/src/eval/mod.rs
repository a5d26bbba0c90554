//! Open-set evaluation protocols.
//!
//! * Re-identification: build a gallery/query split, classify every query
//!   with the weighted k-NN vote, and report class-averaged accuracy over a
//!   sweep of k. The reported k is chosen on a separate selection split.
//! * Verification: score balanced same/different pairs by cosine similarity
//!   and report ROC-AUC, averaged over independently sampled negative sets.

mod auc;
mod pairs;
mod reid;
mod report;
mod split;

use thiserror::Error;

use crate::knn::KnnError;

pub use auc::roc_auc;
pub use pairs::{build_verification_pairs, eval_verification, PairMode, VerificationPairSet};
pub use reid::{eval_reid, run_reid_protocol, select_best_k, KAccuracy, ReidProtocol};
pub use report::{mean_std, KRow, ReidReport, VerificationReport};
pub use split::{build_reid_split, validate_split, ReidSplit, SplitMode};

/// The k sweep used when none is given.
pub const DEFAULT_K_VALUES: [usize; 7] = [1, 3, 5, 7, 10, 20, 50];

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("scores must be finite")]
    NonFiniteScore,
    #[error("ROC-AUC needs both classes (got {positives} positives, {negatives} negatives)")]
    SingleClass { positives: usize, negatives: usize },
    #[error("identity {identity}: {reason}")]
    Identity { identity: String, reason: String },
    #[error("record {0} has no track_id, required in track mode")]
    MissingTrack(String),
    #[error("no labelled records")]
    NoIdentities,
    #[error("k values must be a non-empty list of positive integers")]
    BadKValues,
    #[error("need {needed} negative pairs but only {available} cross-identity pairs exist")]
    NotEnoughNegatives { needed: usize, available: usize },
    #[error("split invariant violated: {0}")]
    SplitInvariant(String),
    #[error(transparent)]
    Knn(#[from] KnnError),
}
