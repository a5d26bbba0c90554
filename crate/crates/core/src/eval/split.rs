use std::collections::{BTreeMap, HashSet};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::rng;
use crate::store::EmbeddingRecord;

/// How a labelled collection is cut into gallery and queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SplitMode {
    /// Per identity, `gallery_tracks` tracks feed the gallery and another
    /// `query_tracks` tracks feed the queries, `frames_per_track` frames each.
    Tracks {
        gallery_tracks: usize,
        query_tracks: usize,
        frames_per_track: usize,
    },
    /// Per identity, one held-out image is the query and the rest form the
    /// gallery.
    Portrait { min_images: usize },
}

impl SplitMode {
    /// 35 gallery tracks and 7 query tracks of 10 frames each.
    pub fn tracks_default() -> Self {
        Self::Tracks {
            gallery_tracks: 35,
            query_tracks: 7,
            frames_per_track: 10,
        }
    }

    pub fn portrait_default() -> Self {
        Self::Portrait { min_images: 4 }
    }
}

/// Gallery and query rows, as indices into the record list the split was
/// built from (ascending).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReidSplit {
    pub gallery: Vec<usize>,
    pub queries: Vec<usize>,
    pub seed: u64,
}

/// identity -> track -> record indices (ordered by image_id)
type TrackGroups<'a> = BTreeMap<&'a str, BTreeMap<&'a str, Vec<usize>>>;

pub(crate) fn group_by_track(records: &[EmbeddingRecord]) -> Result<TrackGroups<'_>, EvalError> {
    let mut groups: TrackGroups = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let Some(identity) = r.identity.as_deref() else {
            continue;
        };
        let track = r
            .track_id
            .as_deref()
            .ok_or_else(|| EvalError::MissingTrack(r.image_id.clone()))?;
        groups
            .entry(identity)
            .or_default()
            .entry(track)
            .or_default()
            .push(i);
    }
    for tracks in groups.values_mut() {
        for rows in tracks.values_mut() {
            rows.sort_by(|&a, &b| records[a].image_id.cmp(&records[b].image_id));
        }
    }
    if groups.is_empty() {
        return Err(EvalError::NoIdentities);
    }
    Ok(groups)
}

pub(crate) fn group_by_identity(records: &[EmbeddingRecord]) -> BTreeMap<&str, Vec<usize>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if let Some(identity) = r.identity.as_deref() {
            groups.entry(identity).or_default().push(i);
        }
    }
    for rows in groups.values_mut() {
        rows.sort_by(|&a, &b| records[a].image_id.cmp(&records[b].image_id));
    }
    groups
}

/// Draws one gallery/query split. Unlabelled records are ignored.
pub fn build_reid_split(
    records: &[EmbeddingRecord],
    mode: SplitMode,
    seed: u64,
) -> Result<ReidSplit, EvalError> {
    let mut rng = rng::stream(seed, "reid_split");
    let mut gallery = Vec::new();
    let mut queries = Vec::new();
    match mode {
        SplitMode::Tracks {
            gallery_tracks,
            query_tracks,
            frames_per_track,
        } => {
            if gallery_tracks == 0 || query_tracks == 0 || frames_per_track == 0 {
                return Err(EvalError::SplitInvariant(
                    "track counts and frames_per_track must be positive".into(),
                ));
            }
            let needed = gallery_tracks + query_tracks;
            for (identity, tracks) in group_by_track(records)? {
                let eligible: Vec<&Vec<usize>> = tracks
                    .values()
                    .filter(|rows| rows.len() >= frames_per_track)
                    .collect();
                if eligible.len() < needed {
                    return Err(EvalError::Identity {
                        identity: identity.to_string(),
                        reason: format!(
                            "has {} tracks with at least {frames_per_track} frames, needs {needed}",
                            eligible.len()
                        ),
                    });
                }
                let chosen = index::sample(&mut rng, eligible.len(), needed).into_vec();
                for (slot, &t) in chosen.iter().enumerate() {
                    let rows = eligible[t];
                    let frames = index::sample(&mut rng, rows.len(), frames_per_track);
                    let side = if slot < gallery_tracks {
                        &mut gallery
                    } else {
                        &mut queries
                    };
                    side.extend(frames.into_iter().map(|f| rows[f]));
                }
            }
        }
        SplitMode::Portrait { min_images } => {
            let groups = group_by_identity(records);
            if groups.is_empty() {
                return Err(EvalError::NoIdentities);
            }
            let min_images = min_images.max(2);
            for (identity, rows) in groups {
                if rows.len() < min_images {
                    return Err(EvalError::Identity {
                        identity: identity.to_string(),
                        reason: format!("has {} images, needs {min_images}", rows.len()),
                    });
                }
                let held_out = index::sample(&mut rng, rows.len(), 1).index(0);
                for (i, &r) in rows.iter().enumerate() {
                    if i == held_out {
                        queries.push(r);
                    } else {
                        gallery.push(r);
                    }
                }
            }
        }
    }
    gallery.sort_unstable();
    queries.sort_unstable();
    let split = ReidSplit {
        gallery,
        queries,
        seed,
    };
    validate_split(records, &split)?;
    Ok(split)
}

/// Checks image- and track-level disjointness and that every query
/// identity is present in the gallery.
pub fn validate_split(records: &[EmbeddingRecord], split: &ReidSplit) -> Result<(), EvalError> {
    let gallery_images: HashSet<&str> = split
        .gallery
        .iter()
        .map(|&i| records[i].image_id.as_str())
        .collect();
    let gallery_tracks: HashSet<(&str, &str)> = split
        .gallery
        .iter()
        .filter_map(|&i| {
            let r = &records[i];
            Some((r.identity.as_deref()?, r.track_id.as_deref()?))
        })
        .collect();
    let gallery_ids: HashSet<&str> = split
        .gallery
        .iter()
        .filter_map(|&i| records[i].identity.as_deref())
        .collect();
    for &q in &split.queries {
        let r = &records[q];
        if gallery_images.contains(r.image_id.as_str()) {
            return Err(EvalError::SplitInvariant(format!(
                "image {} is on both sides",
                r.image_id
            )));
        }
        let identity = r.identity.as_deref().unwrap_or_default();
        if let Some(track) = r.track_id.as_deref() {
            if gallery_tracks.contains(&(identity, track)) {
                return Err(EvalError::SplitInvariant(format!(
                    "track {track} of {identity} is on both sides"
                )));
            }
        }
        if !gallery_ids.contains(identity) {
            return Err(EvalError::SplitInvariant(format!(
                "query identity {identity} missing from gallery"
            )));
        }
    }
    Ok(())
}
