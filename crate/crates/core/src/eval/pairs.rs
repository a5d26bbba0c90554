use std::collections::{BTreeSet, HashSet};

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::auc::roc_auc;
use super::report::{mean_std, VerificationReport};
use super::split::{group_by_identity, group_by_track};
use super::EvalError;
use crate::rng;
use crate::store::{cosine, EmbeddingRecord};

/// Which images take part in verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PairMode {
    /// Subsample every identity to the same number of tracks (`None`: the
    /// smallest track count over identities) and pick one frame per track.
    Tracks { tracks_per_identity: Option<usize> },
    /// Every labelled image takes part.
    Portrait,
}

/// Balanced same/different pairs over a fixed image selection.
///
/// Positives are every within-identity pair of the selected images.
/// Negatives are an equally sized uniform sample, without replacement, of
/// cross-identity pairs; [`VerificationPairSet::negatives_for`] redraws them
/// for other seeds. Pairs are `(a, b)` record indices with `a < b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationPairSet {
    pub images: Vec<usize>,
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
    pub negative_set_seed: u64,
    /// Identity of each entry of `images`, densely numbered.
    classes: Vec<u32>,
}

impl VerificationPairSet {
    /// All pairs with their same-identity flag: positives first.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, bool)> + '_ {
        self.positives
            .iter()
            .map(|&(a, b)| (a, b, true))
            .chain(self.negatives.iter().map(|&(a, b)| (a, b, false)))
    }

    pub fn cross_pair_count(&self) -> usize {
        let n = self.images.len();
        n * n.saturating_sub(1) / 2 - self.positives.len()
    }

    /// A negative set of `positives.len()` cross-identity pairs drawn with
    /// `seed`.
    pub fn negatives_for(&self, seed: u64) -> Result<Vec<(usize, usize)>, EvalError> {
        let needed = self.positives.len();
        let available = self.cross_pair_count();
        if needed > available {
            return Err(EvalError::NotEnoughNegatives { needed, available });
        }
        let mut rng = rng::stream(seed, "verification_negatives");
        let n = self.images.len();
        let mut chosen: BTreeSet<(usize, usize)> = BTreeSet::new();
        if needed * 2 <= available {
            // Sparse: rejection sampling over uniform unordered pairs.
            while chosen.len() < needed {
                let i = rng.random_range(0..n);
                let j = rng.random_range(0..n);
                if i == j || self.classes[i] == self.classes[j] {
                    continue;
                }
                chosen.insert((i.min(j), i.max(j)));
            }
        } else {
            let all: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .filter(|&(i, j)| self.classes[i] != self.classes[j])
                .collect();
            chosen.extend(
                index::sample(&mut rng, all.len(), needed)
                    .into_iter()
                    .map(|k| all[k]),
            );
        }
        Ok(chosen
            .into_iter()
            .map(|(i, j)| ordered(self.images[i], self.images[j]))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect())
    }
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Selects images and builds positives plus the first negative set.
pub fn build_verification_pairs(
    records: &[EmbeddingRecord],
    mode: PairMode,
    seed: u64,
) -> Result<VerificationPairSet, EvalError> {
    let mut rng = rng::stream(seed, "verification_select");
    let mut groups: Vec<Vec<usize>> = Vec::new();
    match mode {
        PairMode::Tracks {
            tracks_per_identity,
        } => {
            let by_track = group_by_track(records)?;
            let smallest = by_track.values().map(|t| t.len()).min().unwrap_or(0);
            let t = tracks_per_identity.unwrap_or(smallest);
            if t == 0 {
                return Err(EvalError::SplitInvariant(
                    "tracks per identity must be positive".into(),
                ));
            }
            for (identity, tracks) in &by_track {
                if tracks.len() < t {
                    return Err(EvalError::Identity {
                        identity: identity.to_string(),
                        reason: format!("has {} tracks, needs {t}", tracks.len()),
                    });
                }
                let rows: Vec<&Vec<usize>> = tracks.values().collect();
                let mut picked: Vec<usize> = index::sample(&mut rng, rows.len(), t)
                    .into_iter()
                    .map(|ti| {
                        let frames = rows[ti];
                        frames[rng.random_range(0..frames.len())]
                    })
                    .collect();
                picked.sort_unstable();
                groups.push(picked);
            }
        }
        PairMode::Portrait => {
            groups = group_by_identity(records).into_values().collect();
            for g in &mut groups {
                g.sort_unstable();
            }
            if groups.is_empty() {
                return Err(EvalError::NoIdentities);
            }
        }
    }

    let mut images = Vec::new();
    let mut classes = Vec::new();
    let mut positives = Vec::new();
    for (class, group) in groups.iter().enumerate() {
        for (i, &a) in group.iter().enumerate() {
            for &b in &group[i + 1..] {
                positives.push(ordered(a, b));
            }
            images.push(a);
            classes.push(class as u32);
        }
    }
    positives.sort_unstable();

    let mut set = VerificationPairSet {
        images,
        positives,
        negatives: Vec::new(),
        negative_set_seed: seed,
        classes,
    };
    set.negatives = set.negatives_for(seed)?;
    debug_assert!(no_repeats(&set));
    Ok(set)
}

fn no_repeats(set: &VerificationPairSet) -> bool {
    let mut seen = HashSet::new();
    set.pairs().all(|(a, b, _)| a != b && seen.insert((a, b)))
}

/// ROC-AUC of cosine similarity over `n_negative_sets` negative sets
/// (seeds `negative_set_seed`, `negative_set_seed + 1`, ...) against the
/// fixed positives.
pub fn eval_verification(
    pairs: &VerificationPairSet,
    records: &[EmbeddingRecord],
    n_negative_sets: usize,
) -> Result<VerificationReport, EvalError> {
    if n_negative_sets == 0 {
        return Err(EvalError::SplitInvariant(
            "at least one negative set is required".into(),
        ));
    }
    let score = |&(a, b): &(usize, usize)| cosine(&records[a].vector, &records[b].vector);
    let positive_scores: Vec<f64> = pairs.positives.iter().map(score).collect();

    let mut aucs = Vec::with_capacity(n_negative_sets);
    for i in 0..n_negative_sets {
        let seed = pairs.negative_set_seed.wrapping_add(i as u64);
        let negatives = if i == 0 {
            pairs.negatives.clone()
        } else {
            pairs.negatives_for(seed)?
        };
        let mut scores = positive_scores.clone();
        scores.extend(negatives.iter().map(score));
        let mut labels = vec![true; positive_scores.len()];
        labels.resize(scores.len(), false);
        aucs.push(roc_auc(&scores, &labels)?);
    }
    let (auc_mean, auc_std) = mean_std(&aucs);
    Ok(VerificationReport {
        images: pairs.images.len(),
        positives: pairs.positives.len(),
        negatives_per_set: pairs.negatives.len(),
        negative_sets: n_negative_sets,
        aucs,
        auc_mean,
        auc_std,
    })
}
