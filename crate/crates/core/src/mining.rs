//! Corpus mining: keep the most confident fraction of tracked face
//! detections, then randomly subsample what is left.
//!
//! Stage one sorts by confidence (descending, ties by `image_id`) and keeps
//! `ceil(keep * n)` records; stage two draws `floor(subsample * m)` of those
//! uniformly without replacement. Fractions are configured per source so
//! corpora of different quality can be treated differently.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::store::EmbeddingRecord;
use crate::track::TrackedDetection;

// Absorbs binary rounding in products like 0.2 * 30000 before ceil/floor.
const ROUNDING_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MiningError {
    #[error("{name} fraction {value} must lie in (0, 1]")]
    InvalidFraction { name: &'static str, value: f64 },
    #[error("record {0} has a non-finite confidence")]
    NonFiniteConfidence(String),
}

/// Anything with an id and a detector confidence.
pub trait Scored {
    fn image_id(&self) -> Cow<'_, str>;
    fn confidence(&self) -> f64;
}

impl Scored for TrackedDetection {
    fn image_id(&self) -> Cow<'_, str> {
        Cow::Owned(TrackedDetection::image_id(self))
    }
    fn confidence(&self) -> f64 {
        self.score
    }
}

impl Scored for EmbeddingRecord {
    fn image_id(&self) -> Cow<'_, str> {
        Cow::Borrowed(&self.image_id)
    }
    fn confidence(&self) -> f64 {
        self.confidence
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fractions {
    pub keep: f64,
    pub subsample: f64,
}

impl Fractions {
    pub fn new(keep: f64, subsample: f64) -> Result<Self, MiningError> {
        let f = Self { keep, subsample };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<(), MiningError> {
        for (name, value) in [("keep", self.keep), ("subsample", self.subsample)] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(MiningError::InvalidFraction { name, value });
            }
        }
        Ok(())
    }

    /// Records kept by the confidence stage out of `n`.
    pub fn stage1_count(&self, n: usize) -> usize {
        ((self.keep * n as f64 - ROUNDING_SLACK).ceil().max(0.0) as usize).min(n)
    }

    /// Records retained by the random stage out of `m`.
    pub fn stage2_count(&self, m: usize) -> usize {
        ((self.subsample * m as f64 + ROUNDING_SLACK).floor() as usize).min(m)
    }

    pub fn retained_count(&self, n: usize) -> usize {
        self.stage2_count(self.stage1_count(n))
    }
}

impl Default for Fractions {
    /// The most-confident 20%, then half of that.
    fn default() -> Self {
        Self {
            keep: 0.2,
            subsample: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filtered<T> {
    /// Retained records, ordered by `image_id`.
    pub records: Vec<T>,
    pub stage1_kept: usize,
    /// Lowest confidence that survived the confidence stage.
    pub stage1_cutoff: Option<f64>,
}

/// Confidence filter followed by a seeded random subsample.
pub fn filter_corpus<T: Scored + Clone>(
    records: &[T],
    fractions: Fractions,
    seed: u64,
) -> Result<Filtered<T>, MiningError> {
    fractions.validate()?;
    if let Some(r) = records.iter().find(|r| !r.confidence().is_finite()) {
        return Err(MiningError::NonFiniteConfidence(r.image_id().into_owned()));
    }
    let ids: Vec<Cow<'_, str>> = records.iter().map(Scored::image_id).collect();
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        records[b]
            .confidence()
            .total_cmp(&records[a].confidence())
            .then_with(|| ids[a].cmp(&ids[b]))
    });

    let m = fractions.stage1_count(records.len());
    let kept = &order[..m];
    let stage1_cutoff = kept.last().map(|&i| records[i].confidence());

    let s = fractions.stage2_count(m);
    let mut rng = rng::stream(seed, "filter_corpus");
    let mut picked: Vec<usize> = index::sample(&mut rng, m, s)
        .into_iter()
        .map(|j| kept[j])
        .collect();
    picked.sort_by(|&a, &b| ids[a].cmp(&ids[b]));

    Ok(Filtered {
        records: picked.into_iter().map(|i| records[i].clone()).collect(),
        stage1_kept: m,
        stage1_cutoff,
    })
}

/// Fractions per corpus source, with a fallback.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterPlan {
    pub default: Fractions,
    pub per_source: BTreeMap<String, Fractions>,
}

impl FilterPlan {
    pub fn fractions_for(&self, source: &str) -> Fractions {
        self.per_source.get(source).copied().unwrap_or(self.default)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub source: String,
    pub videos: usize,
    pub frames: usize,
    pub raw_detections: usize,
    pub filtered_detections: usize,
}

impl CorpusStats {
    pub fn total(stats: &[CorpusStats]) -> CorpusStats {
        stats.iter().fold(
            CorpusStats {
                source: "total".into(),
                ..Default::default()
            },
            |mut acc, s| {
                acc.videos += s.videos;
                acc.frames += s.frames;
                acc.raw_detections += s.raw_detections;
                acc.filtered_detections += s.filtered_detections;
                acc
            },
        )
    }
}

/// Applies `plan` to each source of a track file independently.
///
/// Each source draws from its own random stream, so adding a source does
/// not change what is retained from the others. Output is ordered by
/// `image_id`.
pub fn filter_tracks(
    records: &[TrackedDetection],
    plan: &FilterPlan,
    seed: u64,
) -> Result<Vec<TrackedDetection>, MiningError> {
    let mut by_source: BTreeMap<&str, Vec<TrackedDetection>> = BTreeMap::new();
    for r in records {
        by_source.entry(r.source()).or_default().push(r.clone());
    }
    let mut out = Vec::new();
    for (source, recs) in by_source {
        let source_seed = seed ^ rng::fnv1a(source.as_bytes());
        out.extend(filter_corpus(&recs, plan.fractions_for(source), source_seed)?.records);
    }
    out.sort_by_cached_key(TrackedDetection::image_id);
    Ok(out)
}

/// Per-source counts before (`raw`) and after (`filtered`) mining, ordered
/// by source name.
pub fn corpus_stats(raw: &[TrackedDetection], filtered: &[TrackedDetection]) -> Vec<CorpusStats> {
    #[derive(Default)]
    struct Acc<'a> {
        videos: BTreeSet<&'a str>,
        frames: BTreeSet<(&'a str, u64)>,
        raw: usize,
        filtered: usize,
    }
    let mut acc: BTreeMap<&str, Acc> = BTreeMap::new();
    for r in raw {
        let a = acc.entry(r.source()).or_default();
        a.videos.insert(&r.video_id);
        a.frames.insert((&r.video_id, r.frame));
        a.raw += 1;
    }
    for r in filtered {
        acc.entry(r.source()).or_default().filtered += 1;
    }
    acc.into_iter()
        .map(|(source, a)| CorpusStats {
            source: source.to_string(),
            videos: a.videos.len(),
            frames: a.frames.len(),
            raw_detections: a.raw,
            filtered_detections: a.filtered,
        })
        .collect()
}
