use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{mean_std, KRow, ReidReport};
use super::split::{build_reid_split, ReidSplit, SplitMode};
use super::EvalError;
use crate::knn::{vote, GalleryIndex};
use crate::store::EmbeddingRecord;

/// Class-averaged accuracy for one k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KAccuracy {
    pub k: usize,
    pub accuracy: f64,
}

fn check_k_values(k_values: &[usize]) -> Result<(), EvalError> {
    if k_values.is_empty() || k_values.contains(&0) {
        return Err(EvalError::BadKValues);
    }
    Ok(())
}

/// Classifies every query of `split` for each k and returns class-averaged
/// accuracy in the order of `k_values`.
///
/// A query counts as correct when the vote picks its identity with a
/// positive score; a zero-score vote (no neighbour with positive
/// similarity) is a miss.
pub fn eval_reid(
    split: &ReidSplit,
    records: &[EmbeddingRecord],
    k_values: &[usize],
) -> Result<Vec<KAccuracy>, EvalError> {
    check_k_values(k_values)?;
    let index = GalleryIndex::from_records(split.gallery.iter().map(|&i| &records[i]))?;
    let max_k = *k_values.iter().max().expect("non-empty");

    let hits: Vec<(&str, Vec<bool>)> = split
        .queries
        .par_iter()
        .map(|&q| {
            let rec = &records[q];
            let truth = rec.identity.as_deref().unwrap_or_default();
            let neighbors = index.search_topk(&rec.vector, max_k)?;
            let per_k = k_values
                .iter()
                .map(|&k| {
                    let v = vote(&neighbors[..k.min(neighbors.len())]);
                    v.score > 0.0 && &*v.identity == truth
                })
                .collect();
            Ok((truth, per_k))
        })
        .collect::<Result<_, EvalError>>()?;

    let mut per_class: BTreeMap<&str, (Vec<usize>, usize)> = BTreeMap::new();
    for (identity, per_k) in &hits {
        let e = per_class
            .entry(identity)
            .or_insert_with(|| (vec![0; k_values.len()], 0));
        for (c, &hit) in e.0.iter_mut().zip(per_k) {
            *c += usize::from(hit);
        }
        e.1 += 1;
    }
    let classes = per_class.len().max(1) as f64;
    Ok(k_values
        .iter()
        .enumerate()
        .map(|(ki, &k)| KAccuracy {
            k,
            accuracy: per_class
                .values()
                .map(|(correct, total)| correct[ki] as f64 / *total as f64)
                .sum::<f64>()
                / classes,
        })
        .collect())
}

/// The k with the highest accuracy; ties go to the smaller k.
pub fn select_best_k(results: &[KAccuracy]) -> Option<usize> {
    results
        .iter()
        .fold(None::<KAccuracy>, |best, r| match best {
            Some(b) if b.accuracy > r.accuracy || (b.accuracy == r.accuracy && b.k < r.k) => {
                Some(b)
            }
            _ => Some(*r),
        })
        .map(|b| b.k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReidProtocol {
    pub mode: SplitMode,
    pub k_values: Vec<usize>,
    /// Reported repetitions; one more split is drawn for choosing k.
    pub repetitions: usize,
    pub seed: u64,
}

impl ReidProtocol {
    /// Seed of the split used only for choosing k.
    pub fn selection_seed(&self) -> u64 {
        self.seed
    }

    /// Seed of reported repetition `rep`.
    pub fn repetition_seed(&self, rep: usize) -> u64 {
        self.seed.wrapping_add(1 + rep as u64)
    }
}

/// Chooses k on the selection split, then reports accuracy over the
/// remaining repetitions.
pub fn run_reid_protocol(
    records: &[EmbeddingRecord],
    protocol: &ReidProtocol,
) -> Result<ReidReport, EvalError> {
    check_k_values(&protocol.k_values)?;
    if protocol.repetitions == 0 {
        return Err(EvalError::SplitInvariant(
            "repetitions must be positive".into(),
        ));
    }
    let selection_split = build_reid_split(records, protocol.mode, protocol.selection_seed())?;
    let selection = eval_reid(&selection_split, records, &protocol.k_values)?;
    let chosen_k = select_best_k(&selection).expect("non-empty k values");

    let mut splits = Vec::with_capacity(protocol.repetitions);
    let mut per_rep = Vec::with_capacity(protocol.repetitions);
    for rep in 0..protocol.repetitions {
        let split = build_reid_split(records, protocol.mode, protocol.repetition_seed(rep))?;
        per_rep.push(eval_reid(&split, records, &protocol.k_values)?);
        splits.push(split);
    }

    let per_k: Vec<KRow> = protocol
        .k_values
        .iter()
        .enumerate()
        .map(|(ki, &k)| {
            let accs: Vec<f64> = per_rep.iter().map(|r| r[ki].accuracy).collect();
            let (mean, std) = mean_std(&accs);
            KRow { k, mean, std }
        })
        .collect();
    let chosen = per_k
        .iter()
        .find(|r| r.k == chosen_k)
        .copied()
        .expect("chosen k is in the sweep");
    let identities = splits[0]
        .queries
        .iter()
        .filter_map(|&q| records[q].identity.as_deref())
        .collect::<std::collections::BTreeSet<_>>()
        .len();

    Ok(ReidReport {
        mode: protocol.mode,
        seed: protocol.seed,
        repetitions: protocol.repetitions,
        identities,
        gallery_size: splits[0].gallery.len(),
        query_size: splits[0].queries.len(),
        selection,
        chosen_k,
        per_k,
        accuracy_mean: chosen.mean,
        accuracy_std: chosen.std,
    })
}
