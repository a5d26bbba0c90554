#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_faceid");

/// Runs the binary inside `dir` so relative paths (and the config echoes
/// that record them) do not depend on where the directory lives.
pub fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn faceid")
}

pub fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "faceid {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Every subcommand once, on small fixtures.
pub fn pipeline(dir: &Path) {
    let steps: &[&[&str]] = &[
        &[
            "synth",
            "--kind",
            "tracks",
            "--out",
            "bossou.cfe",
            "--seed",
            "3",
        ],
        &[
            "eval-reid",
            "--store",
            "bossou.cfe",
            "--repetitions",
            "2",
            "--seed",
            "5",
            "--out",
            "reid.json",
        ],
        &[
            "eval-verify",
            "--store",
            "bossou.cfe",
            "--negative-sets",
            "3",
            "--seed",
            "5",
            "--out",
            "verify.json",
            "--pairs-out",
            "pairs.jsonl",
        ],
        &[
            "synth",
            "--kind",
            "petface",
            "--out",
            "petface.cfe",
            "--seed",
            "4",
        ],
        &[
            "eval-reid",
            "--store",
            "petface.cfe",
            "--mode",
            "portrait",
            "--repetitions",
            "2",
            "--k-values",
            "1,3,5",
            "--out",
            "reid_portrait.json",
        ],
        &[
            "eval-verify",
            "--store",
            "petface.cfe",
            "--mode",
            "portrait",
            "--negative-sets",
            "2",
            "--out",
            "verify_portrait.json",
        ],
        &[
            "synth",
            "--kind",
            "corpus",
            "--videos",
            "12",
            "--detections",
            "2000",
            "--seed",
            "9",
            "--out",
            "corpus.jsonl",
        ],
        &[
            "track",
            "--detections",
            "corpus.jsonl",
            "--out",
            "tracks.jsonl",
        ],
        &[
            "filter",
            "--tracks",
            "tracks.jsonl",
            "--out",
            "manifest.jsonl",
            "--stats",
            "stats.json",
            "--seed",
            "11",
        ],
        &["synth", "--kind", "occlusion", "--out", "occlusion.jsonl"],
        &[
            "track",
            "--detections",
            "occlusion.jsonl",
            "--out",
            "occlusion_tracks.jsonl",
        ],
    ];
    for args in steps {
        run_ok(dir, args);
    }
}

/// File name to contents for every regular file in `dir`.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().unwrap().is_file())
        .map(|e| {
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

/// Names of files that differ between two snapshots (or exist in only one).
pub fn differing(a: &BTreeMap<String, Vec<u8>>, b: &BTreeMap<String, Vec<u8>>) -> Vec<String> {
    let mut names: Vec<&String> = a.keys().chain(b.keys()).collect();
    names.sort();
    names.dedup();
    names
        .into_iter()
        .filter(|n| a.get(*n) != b.get(*n))
        .cloned()
        .collect()
}
