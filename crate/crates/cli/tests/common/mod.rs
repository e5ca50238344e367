#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn cfgrank(args: &[&str]) -> Output {
    cfgrank_in(Path::new("."), args)
}

pub fn cfgrank_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfgrank"))
        .current_dir(dir)
        .env_remove("CFGRANK_JOBS")
        .env("RUST_LOG", "error")
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn ok(out: Output) -> Output {
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Builds the benchmark feature table with the binary: 30 fragmented and
/// 8 enmeshed programs labeled malicious, 30 enmeshed labeled benign.
pub fn build_benchmark(dir: &Path) -> PathBuf {
    let extra: Vec<String> = (30..38)
        .map(|i| format!("sbc/mal-e/enmeshed-{i:05}.sbc"))
        .collect();
    let mut ingest_extra = vec!["ingest", "-f", "sbc", "-o", "graphs/mal-e"];
    ingest_extra.extend(extra.iter().map(String::as_str));
    let steps: [&[&str]; 9] = [
        &[
            "gen",
            "-c",
            "30",
            "-p",
            "fragmented",
            "-s",
            "42",
            "-o",
            "sbc/mal",
        ],
        &[
            "gen",
            "-c",
            "38",
            "-p",
            "enmeshed",
            "-s",
            "1000",
            "-o",
            "sbc/mal-e",
        ],
        &[
            "gen", "-c", "30", "-p", "enmeshed", "-s", "43", "-o", "sbc/ben",
        ],
        &["ingest", "-f", "sbc", "-o", "graphs/mal", "sbc/mal"],
        &ingest_extra,
        &["ingest", "-f", "sbc", "-o", "graphs/ben", "sbc/ben"],
        &["features", "graphs/mal", "-l", "malicious", "-o", "mal.csv"],
        &[
            "features",
            "graphs/mal-e",
            "-l",
            "malicious",
            "-o",
            "mal-e.csv",
        ],
        &["features", "graphs/ben", "-l", "benign", "-o", "ben.csv"],
    ];
    for args in steps {
        ok(cfgrank_in(dir, args));
    }
    let mut table = std::fs::read_to_string(dir.join("mal.csv")).unwrap();
    for extra in ["mal-e.csv", "ben.csv"] {
        let body = std::fs::read_to_string(dir.join(extra)).unwrap();
        table.push_str(body.split_once('\n').unwrap().1);
    }
    let path = dir.join("benchmark.csv");
    std::fs::write(&path, table).unwrap();
    path
}
