use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use faceid::eval::{
    build_verification_pairs, eval_verification, run_reid_protocol, PairMode, ReidProtocol,
    SplitMode, DEFAULT_K_VALUES,
};
use faceid::jsonl;
use faceid::mining::{corpus_stats, filter_tracks, CorpusStats, FilterPlan, Fractions};
use faceid::store::EmbeddingStore;
use faceid::synth::{self, CorpusParams, NoiseParams, TrackStoreParams};
use faceid::track::{run_tracker, Detection, KalmanConfig, TrackedDetection, TrackerConfig};
use serde::Serialize;

/// Writes `<out>.config.json` recording the subcommand and its arguments.
fn write_echo<T: Serialize>(out: &Path, command: &str, args: &T) -> Result<()> {
    #[derive(Serialize)]
    struct Echo<'a, T> {
        command: &'a str,
        version: &'a str,
        args: &'a T,
    }
    let echo = Echo {
        command,
        version: env!("CARGO_PKG_VERSION"),
        args,
    };
    write_json(&with_suffix(out, ".config.json"), &echo)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    /// Tracked, labelled embeddings (9 × 42 × 10 by default).
    Tracks,
    /// 376-identity portrait store with 2853 images.
    Petface,
    /// Ground-truth tracked face detections shaped like a camera-trap corpus.
    Corpus,
    /// A single face whose score dips for two frames.
    Occlusion,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthKind,
    /// Output file. Stores also get a `.meta.jsonl` sidecar; corpora also
    /// get `.truth.jsonl` and `.tally.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 9)]
    pub identities: usize,
    #[arg(long, default_value_t = 42)]
    pub tracks_per_identity: usize,
    #[arg(long, default_value_t = 10)]
    pub frames_per_track: usize,
    #[arg(long, default_value_t = 64)]
    pub dimension: usize,
    #[arg(long, default_value_t = 0.1)]
    pub track_noise: f64,
    #[arg(long, default_value_t = 0.2)]
    pub frame_noise: f64,
    #[arg(long, default_value = "panaf")]
    pub source: String,
    #[arg(long, default_value_t = 205)]
    pub videos: usize,
    #[arg(long, default_value_t = 30_000)]
    pub detections: usize,
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let noise = NoiseParams {
        dimension: a.dimension,
        track_noise: a.track_noise,
        frame_noise: a.frame_noise,
    };
    match a.kind {
        SynthKind::Tracks => {
            let params = TrackStoreParams {
                identities: a.identities,
                tracks_per_identity: a.tracks_per_identity,
                frames_per_track: a.frames_per_track,
                noise,
            };
            synth::track_store(&params, a.seed)?.save(&a.out)?;
        }
        SynthKind::Petface => {
            synth::portrait_store(&synth::petface_counts(), &noise, a.seed)?.save(&a.out)?;
        }
        SynthKind::Corpus => {
            let params = CorpusParams {
                source: a.source.clone(),
                videos: a.videos,
                detections: a.detections,
                ..CorpusParams::panaf_scaled()
            };
            let (truth, tally) = synth::corpus_tracks(&params, a.seed);
            jsonl::write(&a.out, &synth::untracked(&truth))?;
            jsonl::write(&with_suffix(&a.out, ".truth.jsonl"), &truth)?;
            write_json(&with_suffix(&a.out, ".tally.json"), &tally)?;
        }
        SynthKind::Occlusion => {
            jsonl::write(&a.out, &synth::occlusion_fixture())?;
        }
    }
    write_echo(&a.out, "synth", a)
}

#[derive(Debug, Args, Serialize)]
pub struct TrackArgs {
    /// Detection file (one JSON record per line).
    #[arg(long)]
    pub detections: PathBuf,
    /// Track file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.6)]
    pub tau_high: f64,
    #[arg(long, default_value_t = 0.1)]
    pub tau_low: f64,
    /// Minimum IoU for first-stage matches.
    #[arg(long, default_value_t = 0.2)]
    pub iou_high: f64,
    /// Minimum IoU for second-stage (low-score) matches.
    #[arg(long, default_value_t = 0.5)]
    pub iou_low: f64,
    #[arg(long, default_value_t = 3)]
    pub min_hits: u32,
    #[arg(long, default_value_t = 30)]
    pub max_lost: u32,
    #[arg(long, default_value_t = 1.0 / 20.0)]
    pub std_weight_position: f64,
    #[arg(long, default_value_t = 1.0 / 160.0)]
    pub std_weight_velocity: f64,
}

pub fn track(a: &TrackArgs) -> Result<()> {
    let config = TrackerConfig {
        tau_high: a.tau_high,
        tau_low: a.tau_low,
        iou_high: a.iou_high,
        iou_low: a.iou_low,
        min_hits: a.min_hits,
        max_lost: a.max_lost,
        kalman: KalmanConfig {
            std_weight_position: a.std_weight_position,
            std_weight_velocity: a.std_weight_velocity,
        },
    };
    let detections: Vec<Detection> = jsonl::read(&a.detections)?;
    let tracks = run_tracker(&detections, &config)?;
    jsonl::write(&a.out, &tracks)?;
    write_echo(&a.out, "track", a)
}

#[derive(Debug, Args, Serialize)]
pub struct FilterArgs {
    /// Track file produced by `track`.
    #[arg(long)]
    pub tracks: PathBuf,
    /// Manifest of retained detections, ordered by image_id.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-source statistics (JSON).
    #[arg(long)]
    pub stats: PathBuf,
    /// Fraction kept by confidence, for sources without an override.
    #[arg(long, default_value_t = 0.2)]
    pub keep_fraction: f64,
    /// Fraction of the confident set randomly retained.
    #[arg(long, default_value_t = 0.5)]
    pub subsample_fraction: f64,
    /// Per-source override, `name=keep,subsample` (repeatable).
    #[arg(long = "source")]
    pub sources: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Serialize)]
struct ManifestLine<'a> {
    image_id: String,
    source: &'a str,
    video_id: &'a str,
    frame: u64,
    track_id: u64,
    score: f64,
}

fn parse_source_override(s: &str) -> Result<(String, Fractions)> {
    let Some((name, rest)) = s.split_once('=') else {
        bail!("source override {s:?} must look like name=keep,subsample");
    };
    let Some((keep, sub)) = rest.split_once(',') else {
        bail!("source override {s:?} must look like name=keep,subsample");
    };
    let keep: f64 = keep.trim().parse().with_context(|| format!("in {s:?}"))?;
    let sub: f64 = sub.trim().parse().with_context(|| format!("in {s:?}"))?;
    Ok((name.to_string(), Fractions::new(keep, sub)?))
}

pub fn filter(a: &FilterArgs) -> Result<()> {
    let plan = FilterPlan {
        default: Fractions::new(a.keep_fraction, a.subsample_fraction)?,
        per_source: a
            .sources
            .iter()
            .map(|s| parse_source_override(s))
            .collect::<Result<_>>()?,
    };
    let raw: Vec<TrackedDetection> = jsonl::read(&a.tracks)?;
    let retained = filter_tracks(&raw, &plan, a.seed)?;

    let lines: Vec<ManifestLine> = retained
        .iter()
        .map(|r| ManifestLine {
            image_id: r.image_id(),
            source: r.source(),
            video_id: &r.video_id,
            frame: r.frame,
            track_id: r.track_id,
            score: r.score,
        })
        .collect();
    jsonl::write(&a.out, &lines)?;

    #[derive(Serialize)]
    struct StatsReport {
        plan: FilterPlan,
        seed: u64,
        sources: Vec<CorpusStats>,
        total: CorpusStats,
    }
    let sources = corpus_stats(&raw, &retained);
    let total = CorpusStats::total(&sources);
    write_json(
        &a.stats,
        &StatsReport {
            plan,
            seed: a.seed,
            sources,
            total,
        },
    )?;
    write_echo(&a.out, "filter", a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolMode {
    /// Track-based split (video benchmarks).
    Tracks,
    /// One held-out portrait per identity.
    Portrait,
}

fn load_normalized(path: &Path) -> Result<EmbeddingStore> {
    Ok(EmbeddingStore::load(path)?.into_normalized()?)
}

#[derive(Debug, Args, Serialize)]
pub struct EvalReidArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, value_enum, default_value_t = ProtocolMode::Tracks)]
    pub mode: ProtocolMode,
    #[arg(long, default_value_t = 35)]
    pub gallery_tracks: usize,
    #[arg(long, default_value_t = 7)]
    pub query_tracks: usize,
    #[arg(long, default_value_t = 10)]
    pub frames_per_track: usize,
    /// Portrait mode: identities with fewer images are rejected.
    #[arg(long, default_value_t = 4)]
    pub min_images: usize,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_K_VALUES)]
    pub k_values: Vec<usize>,
    /// Reported repetitions (one extra split selects k).
    #[arg(long, default_value_t = 10)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON report; a text table is written next to it with `.txt`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn eval_reid(a: &EvalReidArgs) -> Result<()> {
    let store = load_normalized(&a.store)?;
    let mode = match a.mode {
        ProtocolMode::Tracks => SplitMode::Tracks {
            gallery_tracks: a.gallery_tracks,
            query_tracks: a.query_tracks,
            frames_per_track: a.frames_per_track,
        },
        ProtocolMode::Portrait => SplitMode::Portrait {
            min_images: a.min_images,
        },
    };
    let protocol = ReidProtocol {
        mode,
        k_values: a.k_values.clone(),
        repetitions: a.repetitions,
        seed: a.seed,
    };
    let report = run_reid_protocol(store.records(), &protocol)?;
    write_json(&a.out, &report)?;
    let table = report.to_string();
    write_text(&with_suffix(&a.out, ".txt"), &table)?;
    print!("{table}");
    write_echo(&a.out, "eval-reid", a)
}

#[derive(Debug, Args, Serialize)]
pub struct EvalVerifyArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, value_enum, default_value_t = ProtocolMode::Tracks)]
    pub mode: ProtocolMode,
    /// Track mode: tracks kept per identity (default: the smallest count).
    #[arg(long)]
    pub tracks_per_identity: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub negative_sets: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON report; a text summary is written next to it with `.txt`.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional pair list (first negative set), one JSON record per line.
    #[arg(long)]
    pub pairs_out: Option<PathBuf>,
}

pub fn eval_verify(a: &EvalVerifyArgs) -> Result<()> {
    let store = load_normalized(&a.store)?;
    let records = store.records();
    let mode = match a.mode {
        ProtocolMode::Tracks => PairMode::Tracks {
            tracks_per_identity: a.tracks_per_identity,
        },
        ProtocolMode::Portrait => PairMode::Portrait,
    };
    let pairs = build_verification_pairs(records, mode, a.seed)?;
    let report = eval_verification(&pairs, records, a.negative_sets)?;

    if let Some(path) = &a.pairs_out {
        #[derive(Serialize)]
        struct PairLine<'a> {
            image_id_a: &'a str,
            image_id_b: &'a str,
            same: bool,
        }
        let lines: Vec<PairLine> = pairs
            .pairs()
            .map(|(x, y, same)| PairLine {
                image_id_a: &records[x].image_id,
                image_id_b: &records[y].image_id,
                same,
            })
            .collect();
        jsonl::write(path, &lines)?;
    }
    write_json(&a.out, &report)?;
    let text = report.to_string();
    write_text(&with_suffix(&a.out, ".txt"), &text)?;
    print!("{text}");
    write_echo(&a.out, "eval-verify", a)
}
