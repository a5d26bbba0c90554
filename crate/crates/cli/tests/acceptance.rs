//! Acceptance suite: one PASS/FAIL line per headline property.
//!
//! Runs without the libtest harness so the lines always reach stdout:
//! `cargo test -p faceid-cli --test acceptance`.

mod common;

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use faceid::eval::{
    build_reid_split, build_verification_pairs, eval_reid, roc_auc, PairMode, SplitMode,
};
use faceid::knn::GalleryIndex;
use faceid::mining::{filter_corpus, Fractions};
use faceid::rng;
use faceid::store::normalize;
use faceid::synth::{self, CorpusParams, NoiseParams, TrackStoreParams};
use faceid::track::assignment::solve;
use faceid::track::{run_tracker, Detection, TrackedDetection, TrackerConfig};
use rand::seq::SliceRandom;
use rand::Rng;

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(limit: Duration, start: Instant) -> Result<Duration, String> {
    let took = start.elapsed();
    ensure!(took < limit, "took {took:.2?}, limit {limit:?}");
    Ok(took)
}

fn bossou_arithmetic() -> Outcome {
    let start = Instant::now();
    let recs = synth::track_store(&TrackStoreParams::bossou(), 0)
        .map_err(|e| e.to_string())?
        .into_records();
    let split =
        build_reid_split(&recs, SplitMode::tracks_default(), 0).map_err(|e| e.to_string())?;
    let pairs = build_verification_pairs(
        &recs,
        PairMode::Tracks {
            tracks_per_identity: None,
        },
        0,
    )
    .map_err(|e| e.to_string())?;
    let took = within(Duration::from_secs(1), start)?;
    let got = (
        split.gallery.len(),
        split.queries.len(),
        pairs.images.len(),
        pairs.positives.len(),
    );
    ensure!(
        got == (3150, 630, 378, 7749),
        "gallery/query/images/positives = {got:?}"
    );
    Ok(format!(
        "gallery 3150, queries 630, images 378, positives 7749 in {took:.2?}"
    ))
}

fn petface_arithmetic() -> Outcome {
    let recs = synth::portrait_store(&synth::petface_counts(), &NoiseParams::default(), 0)
        .map_err(|e| e.to_string())?
        .into_records();
    let ids: std::collections::BTreeSet<_> = recs.iter().map(|r| r.identity.clone()).collect();
    ensure!(
        recs.len() == 2853 && ids.len() == 376,
        "{} images / {} ids",
        recs.len(),
        ids.len()
    );
    let split =
        build_reid_split(&recs, SplitMode::portrait_default(), 0).map_err(|e| e.to_string())?;
    let pairs =
        build_verification_pairs(&recs, PairMode::Portrait, 0).map_err(|e| e.to_string())?;
    let got = (
        split.gallery.len(),
        split.queries.len(),
        pairs.positives.len(),
    );
    ensure!(
        got == (2477, 376, 15205),
        "gallery/query/positives = {got:?}"
    );
    Ok("gallery 2477, queries 376, positives 15205".into())
}

fn knn_exactness() -> Outcome {
    let (n, d, queries) = (2000, 64, 200);
    let mut r = rng::stream(0, "acceptance/knn");
    let unit = |r: &mut rng::Rng| {
        let v: Vec<f32> = (0..d).map(|_| r.random_range(-1.0f32..1.0)).collect();
        normalize(&v).unwrap()
    };
    let rows: Vec<Vec<f32>> = (0..n).map(|_| unit(&mut r)).collect();
    let qs: Vec<Vec<f32>> = (0..queries).map(|_| unit(&mut r)).collect();

    let start = Instant::now();
    let index = GalleryIndex::new(
        d,
        rows.concat(),
        (0..n).map(|i| format!("c{}", i % 10)).collect(),
        (0..n).map(|i| i.to_string()).collect(),
    )
    .map_err(|e| e.to_string())?;
    for (qi, q) in qs.iter().enumerate() {
        // Oracle: every similarity, fully sorted, ties by row.
        let mut all: Vec<(usize, f64)> = rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut s = 0.0f64;
                for j in 0..d {
                    s += f64::from(row[j]) * f64::from(q[j]);
                }
                (i, s)
            })
            .collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for k in [1, 5, 50] {
            let got: Vec<(usize, f64)> = index
                .search_topk(q, k)
                .map_err(|e| e.to_string())?
                .iter()
                .map(|nb| (nb.row, nb.similarity))
                .collect();
            ensure!(got == all[..k], "query {qi}, k {k}: ranking differs");
        }
    }
    let took = within(Duration::from_secs(5), start)?;
    Ok(format!(
        "{queries} queries x k in {{1,5,50}} on {n}x{d}, {took:.2?}"
    ))
}

fn auc_by_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut won, mut total) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                total += 1.0;
                won += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
    }
    won / total
}

fn auc_oracle() -> Outcome {
    let mut r = rng::stream(0, "acceptance/auc");
    let mut worst = 0.0f64;
    for set in 0..500 {
        let n = r.random_range(2..=300);
        // Coarse scores on half the sets so ties are common.
        let coarse = set % 2 == 0;
        let mut scores: Vec<f64> = (0..n)
            .map(|_| {
                if coarse {
                    f64::from(r.random_range(0..8u8)) / 8.0
                } else {
                    r.random_range(-1.0..1.0)
                }
            })
            .collect();
        let mut labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        scores.swap(0, n - 1);
        let got = roc_auc(&scores, &labels).map_err(|e| e.to_string())?;
        let want = auc_by_pairs(&scores, &labels);
        worst = worst.max((got - want).abs());
    }
    ensure!(worst <= 1e-12, "max deviation {worst:e}");

    let perfect =
        roc_auc(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]).map_err(|e| e.to_string())?;
    ensure!(perfect == 1.0, "perfect separation gave {perfect}");
    let ties =
        roc_auc(&[0.5; 6], &[true, false, true, false, false, true]).map_err(|e| e.to_string())?;
    ensure!(ties == 0.5, "all ties gave {ties}");
    Ok(format!(
        "500 sets, max deviation {worst:e}; perfect 1.0; all-ties 0.5"
    ))
}

fn chance_level() -> Outcome {
    let classes = 10;
    let params = TrackStoreParams {
        identities: classes,
        tracks_per_identity: 6,
        frames_per_track: 5,
        noise: NoiseParams::default(),
    };
    let mode = SplitMode::Tracks {
        gallery_tracks: 4,
        query_tracks: 2,
        frames_per_track: 5,
    };
    let seeds = 10u64;
    let (mut sum, mut queries) = (0.0, 0);
    for seed in 0..seeds {
        let mut recs = synth::track_store(&params, 1000 + seed)
            .map_err(|e| e.to_string())?
            .into_records();
        let split = build_reid_split(&recs, mode, seed).map_err(|e| e.to_string())?;
        let mut labels: Vec<_> = split
            .gallery
            .iter()
            .map(|&g| recs[g].identity.clone())
            .collect();
        labels.shuffle(&mut rng::stream(seed, "acceptance/permute"));
        for (&g, l) in split.gallery.iter().zip(labels) {
            recs[g].identity = l;
        }
        sum += eval_reid(&split, &recs, &[1]).map_err(|e| e.to_string())?[0].accuracy;
        queries += split.queries.len();
    }
    let mean = sum / seeds as f64;
    let p = 1.0 / classes as f64;
    let sigma = (p * (1.0 - p) / queries as f64).sqrt();
    ensure!(
        (mean - p).abs() <= 3.0 * sigma,
        "mean {mean:.4}, 3 sigma {:.4}",
        3.0 * sigma
    );
    Ok(format!(
        "mean {mean:.4} vs 0.1000 (3 sigma {:.4})",
        3.0 * sigma
    ))
}

fn filtering_arithmetic() -> Outcome {
    let (raw, _) = synth::corpus_tracks(&CorpusParams::panaf_scaled(), 0);
    ensure!(raw.len() == 30_000, "corpus has {} detections", raw.len());
    let out = filter_corpus(
        &raw,
        Fractions::new(0.2, 0.5).map_err(|e| e.to_string())?,
        0,
    )
    .map_err(|e| e.to_string())?;
    let mut scores: Vec<f64> = raw.iter().map(|d| d.score).collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    let cutoff = scores[5999];
    ensure!(out.stage1_kept == 6000, "stage 1 kept {}", out.stage1_kept);
    ensure!(out.records.len() == 3000, "retained {}", out.records.len());
    ensure!(
        out.stage1_cutoff == Some(cutoff),
        "cutoff {:?}, expected {cutoff}",
        out.stage1_cutoff
    );
    ensure!(
        out.records.iter().all(|d| d.score >= cutoff),
        "a record is below the cutoff"
    );
    Ok(format!("30000 -> 6000 -> 3000, cutoff {cutoff:.4}"))
}

fn lengths(out: &[TrackedDetection]) -> Vec<usize> {
    let mut m: BTreeMap<u64, usize> = BTreeMap::new();
    for d in out {
        *m.entry(d.track_id).or_default() += 1;
    }
    m.into_values().collect()
}

/// Smallest total over all injective maps from the smaller side.
fn brute_force(cost: &[Vec<f64>]) -> f64 {
    let (rows, cols) = (cost.len(), cost[0].len());
    let at = |r: usize, c: usize| if rows <= cols { cost[r][c] } else { cost[c][r] };
    let (n, m) = (rows.min(cols), rows.max(cols));
    fn go(
        r: usize,
        n: usize,
        m: usize,
        used: &mut [bool],
        at: &dyn Fn(usize, usize) -> f64,
    ) -> f64 {
        if r == n {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for c in 0..m {
            if !used[c] {
                used[c] = true;
                best = best.min(at(r, c) + go(r + 1, n, m, used, at));
                used[c] = false;
            }
        }
        best
    }
    go(0, n, m, &mut vec![false; m], &at)
}

fn tracker_behaviour() -> Outcome {
    let start = Instant::now();
    let run = |s: &[Detection], cfg: &TrackerConfig| run_tracker(s, cfg).map_err(|e| e.to_string());
    let defaults = TrackerConfig::default();

    let a = lengths(&run(
        &synth::scripted_face("scripted/steady", 10, &[], 0.0),
        &defaults,
    )?);
    ensure!(a == [10], "(a) steady face gave tracks {a:?}");

    // Short patience so that a two-frame gap cannot be bridged by stage one.
    let patient = TrackerConfig {
        max_lost: 2,
        ..defaults
    };
    let dip = synth::occlusion_fixture();
    let b1 = lengths(&run(&dip, &defaults)?);
    let b2 = lengths(&run(&dip, &patient)?);
    let b3 = lengths(&run(
        &dip,
        &TrackerConfig {
            tau_low: patient.tau_high,
            ..patient
        },
    )?);
    ensure!(b1 == [10] && b2 == [10], "(b) dip gave {b1:?} / {b2:?}");
    ensure!(b3 == [4, 4], "(b) dip without stage two gave {b3:?}");

    let single = &synth::scripted_face("scripted/single", 1, &[], 0.0);
    let c = lengths(&run(single, &defaults)?);
    ensure!(c.is_empty(), "(c) single detection gave {c:?}");

    let mut r = rng::stream(0, "acceptance/assignment");
    for i in 0..200 {
        let (rows, cols) = (r.random_range(1..=6), r.random_range(1..=6));
        let cost: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..cols).map(|_| r.random_range(0.0..1.0)).collect())
            .collect();
        let got: f64 = solve(&cost)
            .iter()
            .enumerate()
            .filter_map(|(row, c)| c.map(|c| cost[row][c]))
            .sum();
        let want = brute_force(&cost);
        ensure!(
            (got - want).abs() < 1e-9,
            "(d) matrix {i} ({rows}x{cols}): {got} vs {want}"
        );
    }
    let took = within(Duration::from_secs(5), start)?;
    Ok(format!(
        "(a) [10] (b) [10] vs [4, 4] (c) none (d) 200/200 optimal, {took:.2?}"
    ))
}

fn cli_determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    common::pipeline(a.path());
    common::pipeline(b.path());
    let (sa, sb) = (common::snapshot(a.path()), common::snapshot(b.path()));
    let diff = common::differing(&sa, &sb);
    ensure!(diff.is_empty(), "files differ: {diff:?}");
    Ok(format!(
        "{} output files identical across two runs",
        sa.len()
    ))
}

fn main() -> ExitCode {
    let checks: [Check; 8] = [
        ("bossou split arithmetic", bossou_arithmetic),
        ("petface split arithmetic", petface_arithmetic),
        ("knn exactness", knn_exactness),
        ("roc-auc oracle", auc_oracle),
        ("chance level", chance_level),
        ("filtering arithmetic", filtering_arithmetic),
        ("tracker behaviour", tracker_behaviour),
        ("cli determinism", cli_determinism),
    ];
    // Keep failing checks to one line each.
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in checks {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name:<26} {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<26} {why}");
            }
        }
    }
    println!(
        "{} of {} acceptance checks passed",
        checks.len() - failed,
        checks.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
