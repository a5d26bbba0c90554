//! Two-stage (high/low score) association of face detections into tracks.

pub mod assignment;
pub mod geometry;
pub mod kalman;
mod tracker;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use assignment::{associate, Association};
pub use geometry::{iou, BBox};
pub use kalman::{KalmanConfig, KalmanFilter, KalmanState};
pub use tracker::{run_tracker, Track, TrackState, Tracker, TrackerConfig};

#[derive(Debug, Error, PartialEq)]
pub enum TrackError {
    #[error("video {video_id}: frame {frame} arrives after frame {previous}")]
    OutOfOrder {
        video_id: String,
        frame: u64,
        previous: u64,
    },
    #[error("video {video_id} frame {frame}: invalid box {bbox:?}")]
    InvalidBox {
        video_id: String,
        frame: u64,
        bbox: BBox,
    },
    #[error("video {video_id} frame {frame}: score {score} outside [0, 1]")]
    InvalidScore {
        video_id: String,
        frame: u64,
        score: f64,
    },
    #[error("invalid tracker config: {0}")]
    InvalidConfig(String),
}

/// One line of a detection file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub video_id: String,
    pub frame: u64,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

impl Detection {
    pub fn bbox(&self) -> BBox {
        BBox::new(self.x, self.y, self.w, self.h)
    }

    pub(crate) fn validate(&self) -> Result<(), TrackError> {
        if !self.bbox().is_valid() {
            return Err(TrackError::InvalidBox {
                video_id: self.video_id.clone(),
                frame: self.frame,
                bbox: self.bbox(),
            });
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(TrackError::InvalidScore {
                video_id: self.video_id.clone(),
                frame: self.frame,
                score: self.score,
            });
        }
        Ok(())
    }
}

/// One line of a track file: a detection plus the track it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedDetection {
    pub video_id: String,
    pub frame: u64,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
    pub track_id: u64,
}

impl TrackedDetection {
    pub fn from_detection(d: &Detection, track_id: u64) -> Self {
        Self {
            video_id: d.video_id.clone(),
            frame: d.frame,
            x: d.x,
            y: d.y,
            w: d.w,
            h: d.h,
            score: d.score,
            track_id,
        }
    }

    /// `<video_id>/<frame>/<track_id>`, unique within a track file.
    pub fn image_id(&self) -> String {
        format!("{}/{}/{}", self.video_id, self.frame, self.track_id)
    }

    /// Corpus tag: the `video_id` component before the first `/`, or
    /// `"default"` when there is none.
    pub fn source(&self) -> &str {
        source_of(&self.video_id)
    }
}

pub fn source_of(video_id: &str) -> &str {
    match video_id.split_once('/') {
        Some((src, _)) if !src.is_empty() => src,
        _ => "default",
    }
}
