use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::assignment::associate;
use super::geometry::BBox;
use super::kalman::{KalmanConfig, KalmanFilter, KalmanState};
use super::{Detection, TrackError, TrackedDetection};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Detections at or above this score enter the first association stage
    /// and may start new tracks.
    pub tau_high: f64,
    /// Detections in `[tau_low, tau_high)` are only used to extend existing
    /// tracks. `tau_low == tau_high` disables the second stage.
    pub tau_low: f64,
    /// Minimum IoU for a first-stage (and tentative) match.
    pub iou_high: f64,
    /// Minimum IoU for a second-stage match.
    pub iou_low: f64,
    /// Matched frames needed before a track is confirmed.
    pub min_hits: u32,
    /// Frames without a match after which a track is removed.
    pub max_lost: u32,
    pub kalman: KalmanConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            tau_high: 0.6,
            tau_low: 0.1,
            iou_high: 0.2,
            iou_low: 0.5,
            min_hits: 3,
            max_lost: 30,
            kalman: KalmanConfig::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackError> {
        let bad = |m: &str| Err(TrackError::InvalidConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.tau_low) || !(0.0..=1.0).contains(&self.tau_high) {
            return bad("score thresholds must lie in [0, 1]");
        }
        if self.tau_low > self.tau_high {
            return bad("tau_low must not exceed tau_high");
        }
        if !(0.0..=1.0).contains(&self.iou_high) || !(0.0..=1.0).contains(&self.iou_low) {
            return bad("IoU thresholds must lie in [0, 1]");
        }
        if self.min_hits == 0 {
            return bad("min_hits must be at least 1");
        }
        if self.max_lost == 0 {
            return bad("max_lost must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackState {
    Tentative,
    Active,
    Lost,
    Removed,
}

#[derive(Debug, Clone)]
pub struct Track {
    /// Assigned on confirmation, in confirmation order.
    pub track_id: Option<u64>,
    pub state: TrackState,
    pub history: Vec<Detection>,
    pub motion: KalmanState,
    pub age: u64,
    pub hits: u32,
    pub frames_since_update: u64,
}

impl Track {
    pub fn predicted_box(&self) -> BBox {
        self.motion.bbox()
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }
}

/// Sequential tracker for a single video.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    kf: KalmanFilter,
    tracks: Vec<Track>,
    finished: Vec<Track>,
    next_id: u64,
    last_frame: Option<u64>,
    video_id: String,
}

impl Tracker {
    pub fn new(video_id: impl Into<String>, config: TrackerConfig) -> Result<Self, TrackError> {
        config.validate()?;
        Ok(Self {
            config,
            kf: KalmanFilter::new(config.kalman),
            tracks: Vec::new(),
            finished: Vec::new(),
            next_id: 1,
            last_frame: None,
            video_id: video_id.into(),
        })
    }

    /// Live (non-removed) tracks, including unconfirmed ones.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Processes all detections of `frame`.
    pub fn step(&mut self, frame: u64, detections: &[Detection]) -> Result<(), TrackError> {
        if let Some(prev) = self.last_frame {
            if frame <= prev {
                return Err(TrackError::OutOfOrder {
                    video_id: self.video_id.clone(),
                    frame,
                    previous: prev,
                });
            }
        }
        for d in detections {
            d.validate()?;
        }
        let elapsed = self.last_frame.map_or(1, |p| frame - p);
        self.last_frame = Some(frame);

        for t in &mut self.tracks {
            for _ in 0..elapsed {
                t.motion = self.kf.predict(&t.motion);
            }
            t.age += elapsed;
        }

        let cfg = self.config;
        let high: Vec<usize> = (0..detections.len())
            .filter(|&i| detections[i].score >= cfg.tau_high)
            .collect();
        let low: Vec<usize> = (0..detections.len())
            .filter(|&i| detections[i].score >= cfg.tau_low && detections[i].score < cfg.tau_high)
            .collect();

        let pool: Vec<usize> = self.indices_in(&[TrackState::Active, TrackState::Lost]);
        let tentative: Vec<usize> = self.indices_in(&[TrackState::Tentative]);

        // Stage 1: confirmed and lost tracks against high-score detections.
        let (rest_pool, rest_high) = self.match_into(&pool, detections, &high, cfg.iou_high);
        // Unconfirmed tracks only get the high-score leftovers.
        let (rest_tentative, new_dets) =
            self.match_into(&tentative, detections, &rest_high, cfg.iou_high);
        // Stage 2: remaining tracks rescued by low-score detections.
        let (unmatched_pool, _dropped_low) =
            self.match_into(&rest_pool, detections, &low, cfg.iou_low);

        for &ti in &unmatched_pool {
            let t = &mut self.tracks[ti];
            t.frames_since_update += elapsed;
            t.state = if t.frames_since_update >= u64::from(cfg.max_lost) {
                TrackState::Removed
            } else {
                TrackState::Lost
            };
        }
        for &ti in &rest_tentative {
            self.tracks[ti].state = TrackState::Removed;
        }

        for &di in &new_dets {
            let d = &detections[di];
            self.tracks.push(Track {
                track_id: None,
                state: TrackState::Tentative,
                history: vec![d.clone()],
                motion: self.kf.initiate(&d.bbox()),
                age: 0,
                hits: 1,
                frames_since_update: 0,
            });
            let idx = self.tracks.len() - 1;
            self.maybe_confirm(idx);
        }

        let (live, removed): (Vec<Track>, Vec<Track>) = std::mem::take(&mut self.tracks)
            .into_iter()
            .partition(|t| t.state != TrackState::Removed);
        self.tracks = live;
        self.finished
            .extend(removed.into_iter().filter(|t| t.track_id.is_some()));
        Ok(())
    }

    fn indices_in(&self, states: &[TrackState]) -> Vec<usize> {
        (0..self.tracks.len())
            .filter(|&i| states.contains(&self.tracks[i].state))
            .collect()
    }

    /// Matches `track_idx` against `det_idx`, applies the updates, and
    /// returns the unmatched track and detection indices.
    fn match_into(
        &mut self,
        track_idx: &[usize],
        detections: &[Detection],
        det_idx: &[usize],
        min_iou: f64,
    ) -> (Vec<usize>, Vec<usize>) {
        if track_idx.is_empty() || det_idx.is_empty() {
            return (track_idx.to_vec(), det_idx.to_vec());
        }
        let boxes: Vec<BBox> = track_idx
            .iter()
            .map(|&i| self.tracks[i].predicted_box())
            .collect();
        let dets: Vec<BBox> = det_idx.iter().map(|&i| detections[i].bbox()).collect();
        let assoc = associate(&boxes, &dets, min_iou);
        for &(t, d) in &assoc.matches {
            let ti = track_idx[t];
            let det = &detections[det_idx[d]];
            let track = &mut self.tracks[ti];
            track.motion = self.kf.update(&track.motion, &det.bbox());
            track.history.push(det.clone());
            track.hits += 1;
            track.frames_since_update = 0;
            if track.state != TrackState::Tentative {
                track.state = TrackState::Active;
            }
            self.maybe_confirm(ti);
        }
        (
            assoc
                .unmatched_tracks
                .iter()
                .map(|&t| track_idx[t])
                .collect(),
            assoc
                .unmatched_detections
                .iter()
                .map(|&d| det_idx[d])
                .collect(),
        )
    }

    fn maybe_confirm(&mut self, idx: usize) {
        let t = &mut self.tracks[idx];
        if t.state == TrackState::Tentative && t.hits >= self.config.min_hits {
            t.state = TrackState::Active;
            t.track_id = Some(self.next_id);
            self.next_id += 1;
        }
    }

    /// All tracks that were ever confirmed, ordered by track id.
    pub fn finish(mut self) -> Vec<Track> {
        self.finished
            .extend(self.tracks.into_iter().filter(|t| t.track_id.is_some()));
        self.finished.sort_by_key(|t| t.track_id);
        self.finished
    }
}

/// Tracks every video in `detections` independently.
///
/// Videos are emitted in order of first appearance; within a video, lines
/// are ordered by frame then track id. Detections that never join a
/// confirmed track are omitted.
pub fn run_tracker(
    detections: &[Detection],
    config: &TrackerConfig,
) -> Result<Vec<TrackedDetection>, TrackError> {
    config.validate()?;
    let mut videos: Vec<(&str, Vec<&Detection>)> = Vec::new();
    let mut slot: std::collections::HashMap<&str, usize> = Default::default();
    for d in detections {
        let i = *slot.entry(d.video_id.as_str()).or_insert_with(|| {
            videos.push((d.video_id.as_str(), Vec::new()));
            videos.len() - 1
        });
        videos[i].1.push(d);
    }

    let per_video: Vec<Result<Vec<TrackedDetection>, TrackError>> = videos
        .par_iter()
        .map(|(video_id, dets)| track_video(video_id, dets, config))
        .collect();
    let mut out = Vec::with_capacity(detections.len());
    for v in per_video {
        out.extend(v?);
    }
    Ok(out)
}

fn track_video(
    video_id: &str,
    dets: &[&Detection],
    config: &TrackerConfig,
) -> Result<Vec<TrackedDetection>, TrackError> {
    let mut tracker = Tracker::new(video_id, *config)?;
    let mut i = 0;
    while i < dets.len() {
        let frame = dets[i].frame;
        let mut j = i;
        while j < dets.len() && dets[j].frame == frame {
            j += 1;
        }
        let batch: Vec<Detection> = dets[i..j].iter().map(|d| (*d).clone()).collect();
        tracker.step(frame, &batch)?;
        i = j;
    }
    let mut lines: Vec<TrackedDetection> = tracker
        .finish()
        .iter()
        .flat_map(|t| {
            let id = t.track_id.expect("finished tracks are confirmed");
            t.history
                .iter()
                .map(move |d| TrackedDetection::from_detection(d, id))
        })
        .collect();
    lines.sort_by_key(|l| (l.frame, l.track_id));
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(frame: u64, x: f64, score: f64) -> Detection {
        Detection {
            video_id: "v".into(),
            frame,
            x,
            y: 50.0,
            w: 40.0,
            h: 40.0,
            score,
        }
    }

    #[test]
    fn constant_object_gives_one_track() {
        let dets: Vec<_> = (0..10)
            .map(|f| det(f, 100.0 + 2.0 * f as f64, 0.9))
            .collect();
        let out = run_tracker(&dets, &TrackerConfig::default()).unwrap();
        assert_eq!(out.len(), 10);
        assert!(out.iter().all(|d| d.track_id == 1));
    }

    #[test]
    fn isolated_detection_is_suppressed() {
        let out = run_tracker(&[det(0, 10.0, 0.95)], &TrackerConfig::default()).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn low_scores_never_start_tracks() {
        let dets: Vec<_> = (0..10).map(|f| det(f, 100.0, 0.3)).collect();
        assert!(run_tracker(&dets, &TrackerConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn out_of_order_frames_rejected() {
        let dets = vec![det(3, 0.0, 0.9), det(2, 0.0, 0.9)];
        assert_eq!(
            run_tracker(&dets, &TrackerConfig::default()).unwrap_err(),
            TrackError::OutOfOrder {
                video_id: "v".into(),
                frame: 2,
                previous: 3
            }
        );
        let mut t = Tracker::new("v", TrackerConfig::default()).unwrap();
        t.step(5, &[]).unwrap();
        assert!(t.step(5, &[]).is_err());
    }

    #[test]
    fn lost_track_removed_after_max_lost() {
        let cfg = TrackerConfig {
            max_lost: 2,
            ..Default::default()
        };
        let mut t = Tracker::new("v", cfg).unwrap();
        for f in 0..3 {
            t.step(f, &[det(f, 100.0, 0.9)]).unwrap();
        }
        assert_eq!(t.tracks()[0].state, TrackState::Active);
        t.step(3, &[]).unwrap();
        assert_eq!(t.tracks()[0].state, TrackState::Lost);
        t.step(4, &[]).unwrap();
        assert!(t.tracks().is_empty());
        assert_eq!(t.finish().len(), 1);
    }

    #[test]
    fn invalid_input_rejected() {
        let mut d = det(0, 0.0, 0.9);
        d.w = 0.0;
        assert!(matches!(
            run_tracker(&[d], &TrackerConfig::default()),
            Err(TrackError::InvalidBox { .. })
        ));
        let d = det(0, 0.0, 1.5);
        assert!(matches!(
            run_tracker(&[d], &TrackerConfig::default()),
            Err(TrackError::InvalidScore { .. })
        ));
        let cfg = TrackerConfig {
            tau_low: 0.7,
            ..Default::default()
        };
        assert!(matches!(
            Tracker::new("v", cfg),
            Err(TrackError::InvalidConfig(_))
        ));
    }

    #[test]
    fn two_objects_keep_separate_ids() {
        let mut dets = Vec::new();
        for f in 0..8 {
            dets.push(det(f, 10.0 + f as f64, 0.9));
            dets.push(det(f, 300.0 - f as f64, 0.8));
        }
        let out = run_tracker(&dets, &TrackerConfig::default()).unwrap();
        assert_eq!(out.len(), 16);
        for l in &out {
            let expected = if l.x < 150.0 { 1 } else { 2 };
            assert_eq!(l.track_id, expected);
        }
    }
}
