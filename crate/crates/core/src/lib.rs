//! Face-track mining, cosine k-NN galleries and open-set re-identification
//! evaluation.
//!
//! The pipeline is split into independent stages that communicate through
//! files:
//!
//! * [`track`] associates per-frame face detections into tracks (two-stage,
//!   low-score rescue).
//! * [`mining`] turns tracked detections into a training corpus by
//!   confidence filtering and random subsampling.
//! * [`store`] persists embeddings with per-row metadata in a bit-exact
//!   binary + sidecar format.
//! * [`knn`] does exact cosine top-k retrieval and weighted-vote
//!   identification.
//! * [`eval`] implements the re-identification (k-sweep, held-out k) and
//!   verification (balanced pairs, ROC-AUC) protocols.
//! * [`synth`] generates the desk-scale fixtures used by tests and the CLI.

pub mod eval;
pub mod jsonl;
pub mod knn;
pub mod mining;
pub mod rng;
pub mod store;
pub mod synth;
pub mod track;

pub use knn::{GalleryIndex, Neighbor, Vote};
pub use store::{EmbeddingRecord, EmbeddingStore};
