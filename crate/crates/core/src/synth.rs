//! Synthetic fixtures shaped like the real corpora and benchmarks.
//!
//! Embedding generators place each identity at a random unit centre and
//! perturb it per track and per frame with isotropic Gaussian noise, so the
//! difficulty of a fixture is set by the two noise scales. Detection
//! generators produce scripted or randomized face tracks.

use std::collections::BTreeSet;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::store::{normalize, EmbeddingRecord, EmbeddingStore, StoreError};
use crate::track::{Detection, TrackedDetection};

/// (images per identity, identities) for a 376-identity portrait set of
/// 2853 images whose within-identity pairs total 15205.
pub const PETFACE_HISTOGRAM: [(usize, usize); 3] = [(18, 83), (5, 187), (4, 106)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub dimension: usize,
    /// Per-component std of the per-track offset.
    pub track_noise: f64,
    /// Per-component std of the per-image noise.
    pub frame_noise: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            dimension: 64,
            track_noise: 0.1,
            frame_noise: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackStoreParams {
    pub identities: usize,
    pub tracks_per_identity: usize,
    pub frames_per_track: usize,
    pub noise: NoiseParams,
}

impl TrackStoreParams {
    /// 9 identities × 42 tracks × 10 frames.
    pub fn bossou() -> Self {
        Self {
            identities: 9,
            tracks_per_identity: 42,
            frames_per_track: 10,
            noise: NoiseParams::default(),
        }
    }
}

fn unit_gaussian(rng: &mut rng::Rng, d: usize, scale: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    (0..d).map(|_| scale * normal.sample(rng)).collect()
}

fn centre(rng: &mut rng::Rng, d: usize) -> Vec<f64> {
    let v = unit_gaussian(rng, d, 1.0);
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn noisy(base: &[f64], rng: &mut rng::Rng, scale: f64) -> Vec<f64> {
    base.iter()
        .zip(unit_gaussian(rng, base.len(), scale))
        .map(|(b, n)| b + n)
        .collect()
}

fn to_unit_f32(v: &[f64]) -> Result<Vec<f32>, StoreError> {
    normalize(&v.iter().map(|&x| x as f32).collect::<Vec<_>>())
}

pub fn identity_name(i: usize) -> String {
    format!("id{i:03}")
}

/// Labelled, tracked embeddings: every identity has the same number of
/// tracks and frames.
pub fn track_store(params: &TrackStoreParams, seed: u64) -> Result<EmbeddingStore, StoreError> {
    let mut rng = rng::stream(seed, "synth_track_store");
    let d = params.noise.dimension;
    let mut records = Vec::new();
    for i in 0..params.identities {
        let c = centre(&mut rng, d);
        let identity = identity_name(i);
        for t in 0..params.tracks_per_identity {
            let track_centre = noisy(&c, &mut rng, params.noise.track_noise);
            let track_id = format!("{identity}-t{t:03}");
            for f in 0..params.frames_per_track {
                let v = noisy(&track_centre, &mut rng, params.noise.frame_noise);
                records.push(EmbeddingRecord {
                    image_id: format!("{track_id}-f{f:03}"),
                    track_id: Some(track_id.clone()),
                    identity: Some(identity.clone()),
                    source: "synthetic".into(),
                    confidence: rng.random_range(0.5..1.0),
                    vector: to_unit_f32(&v)?,
                });
            }
        }
    }
    EmbeddingStore::build(d, records, true)
}

/// Labelled portraits without tracks; `images_per_identity[i]` images for
/// identity `i`.
pub fn portrait_store(
    images_per_identity: &[usize],
    noise: &NoiseParams,
    seed: u64,
) -> Result<EmbeddingStore, StoreError> {
    let mut rng = rng::stream(seed, "synth_portrait_store");
    let d = noise.dimension;
    let mut records = Vec::new();
    for (i, &n) in images_per_identity.iter().enumerate() {
        let c = centre(&mut rng, d);
        let identity = identity_name(i);
        for p in 0..n {
            let v = noisy(&c, &mut rng, noise.track_noise.hypot(noise.frame_noise));
            records.push(EmbeddingRecord {
                image_id: format!("{identity}-p{p:03}"),
                track_id: None,
                identity: Some(identity.clone()),
                source: "synthetic".into(),
                confidence: 1.0,
                vector: to_unit_f32(&v)?,
            });
        }
    }
    EmbeddingStore::build(d, records, true)
}

/// Images per identity expanded from [`PETFACE_HISTOGRAM`].
pub fn petface_counts() -> Vec<usize> {
    PETFACE_HISTOGRAM
        .iter()
        .flat_map(|&(images, ids)| std::iter::repeat_n(images, ids))
        .collect()
}

fn scripted(video_id: &str, frame: u64, x: f64, score: f64) -> Detection {
    Detection {
        video_id: video_id.into(),
        frame,
        x,
        y: 120.0,
        w: 48.0,
        h: 56.0,
        score,
    }
}

/// One face drifting right at 3 px/frame for `frames` frames. Frames listed
/// in `dips` get score `dip_score`, all others 0.9.
pub fn scripted_face(video_id: &str, frames: u64, dips: &[u64], dip_score: f64) -> Vec<Detection> {
    (0..frames)
        .map(|f| {
            let score = if dips.contains(&f) { dip_score } else { 0.9 };
            scripted(video_id, f, 100.0 + 3.0 * f as f64, score)
        })
        .collect()
}

/// The occlusion fixture: 10 frames, score 0.3 on frames 4 and 5.
pub fn occlusion_fixture() -> Vec<Detection> {
    scripted_face("scripted/occlusion", 10, &[4, 5], 0.3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusParams {
    pub source: String,
    pub videos: usize,
    pub detections: usize,
    /// Longest ground-truth track, in frames.
    pub max_track_len: usize,
    /// Frames per video.
    pub frames_per_video: u64,
}

impl CorpusParams {
    /// A PanAf-shaped corpus scaled down by 100: 205 videos, 30000
    /// detections.
    pub fn panaf_scaled() -> Self {
        Self {
            source: "panaf".into(),
            videos: 205,
            detections: 30_000,
            max_track_len: 24,
            frames_per_video: 360,
        }
    }
}

/// What a corpus generator produced, tallied while generating.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusTally {
    pub videos: usize,
    pub frames: usize,
    pub detections: usize,
}

/// Ground-truth tracked detections with random confidences. Tracks are
/// laid out in horizontal lanes so they never overlap.
pub fn corpus_tracks(params: &CorpusParams, seed: u64) -> (Vec<TrackedDetection>, CorpusTally) {
    let mut rng = rng::stream(seed, "synth_corpus");
    let mut out = Vec::with_capacity(params.detections);
    let mut frames = BTreeSet::new();
    let videos = params.videos.max(1);
    let base = params.detections / videos;
    let extra = params.detections % videos;
    let max_len = params.max_track_len.max(1);
    let mut used_videos = 0;
    for v in 0..videos {
        let video_id = format!("{}/v{v:05}", params.source);
        let mut remaining = base + usize::from(v < extra);
        if remaining > 0 {
            used_videos += 1;
        }
        let mut track_id = 0u64;
        let mut lane_end = Vec::<u64>::new();
        while remaining > 0 {
            let len = rng.random_range(1..=max_len).min(remaining);
            let span = params.frames_per_video.max(len as u64);
            let start = rng.random_range(0..=span - len as u64);
            // First lane that is free from `start` on.
            let lane = match lane_end.iter().position(|&end| end <= start) {
                Some(l) => l,
                None => {
                    lane_end.push(0);
                    lane_end.len() - 1
                }
            };
            lane_end[lane] = start + len as u64;
            track_id += 1;
            for f in 0..len as u64 {
                let frame = start + f;
                frames.insert((v, frame));
                out.push(TrackedDetection {
                    video_id: video_id.clone(),
                    frame,
                    x: 10.0 + 80.0 * lane as f64 + f as f64,
                    y: 40.0,
                    w: 40.0,
                    h: 40.0,
                    score: rng.random_range(0.0..1.0),
                    track_id,
                });
            }
            remaining -= len;
        }
    }
    out.sort_by(|a, b| {
        (a.video_id.as_str(), a.frame, a.track_id).cmp(&(b.video_id.as_str(), b.frame, b.track_id))
    });
    let tally = CorpusTally {
        videos: used_videos,
        frames: frames.len(),
        detections: out.len(),
    };
    (out, tally)
}

/// Strips track ids, giving a raw detection stream.
pub fn untracked(tracks: &[TrackedDetection]) -> Vec<Detection> {
    tracks
        .iter()
        .map(|t| Detection {
            video_id: t.video_id.clone(),
            frame: t.frame,
            x: t.x,
            y: t.y,
            w: t.w,
            h: t.h,
            score: t.score,
        })
        .collect()
}
