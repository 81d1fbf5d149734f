use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SPEC: &str = r#"
seed = 7
anchor = "2020-01-15"
window = { start = "2020-01-01", end = "2020-02-29" }
baseline_rate = 6
doc_length = 12
users = 200

[[bursts]]
start = "2020-01-15"
ramp_slope = 4
plateau = 30

[[bursts]]
start = "2020-02-08"
ramp_slope = 12
plateau = 90

[[topics]]
share = 0.6
signature_size = 30
themes = ["news"]

[[topics]]
share = 0.4
signature_size = 30
themes = ["politics"]

[[mentions]]
country = "China"
alias = "china"
rate = 0.1
"#;

const QUICK_LDA: &str = "\n[lda]\nk_min = 2\nk_max = 3\nepochs = 15\n\n[text]\nmin_count = 1\n";

fn phasetopic(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasetopic"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

/// Synthesizes the corpus into `dir/synth` and appends `extra` to its config.
fn synth(dir: &Path, extra: &str) -> PathBuf {
    fs::write(dir.join("spec.toml"), SPEC).unwrap();
    let out = phasetopic(&["synth", "spec.toml", "--out", "synth"], dir);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let config = dir.join("synth/config.toml");
    let mut text = fs::read_to_string(&config).unwrap();
    text.push_str(extra);
    fs::write(&config, text).unwrap();
    config
}

fn run_ok(args: &[&str], cwd: &Path) -> String {
    let out = phasetopic(args, cwd);
    assert_eq!(
        code(&out),
        0,
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Labels every major topic of every modelled phase with `themes`.
fn label_all(out_dir: &Path, themes: &str) -> PathBuf {
    let mut csv = String::from("phase,topic,themes\n");
    for rec in json(&out_dir.join("topics.json")).as_array().unwrap() {
        for t in rec["major"].as_array().unwrap() {
            csv.push_str(&format!("{},{},{themes}\n", rec["phase_index"], t));
        }
    }
    let path = out_dir.join("labels.csv");
    fs::write(&path, csv).unwrap();
    path
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "json")))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn missing_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&phasetopic(&["phases"], dir.path())), 2);
}

#[test]
fn unknown_subcommand_and_bad_mode_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&phasetopic(&["frobnicate"], dir.path())), 2);
    let config = synth(dir.path(), "");
    let c = config.to_str().unwrap();
    assert_eq!(
        code(&phasetopic(
            &["topics", "--config", c, "--percentile-mode", "median"],
            dir.path()
        )),
        2
    );
}

#[test]
fn missing_anchor_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path(), "");
    let text = fs::read_to_string(&config).unwrap();
    let without: String = text
        .lines()
        .filter(|l| !l.starts_with("anchor_date"))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(&config, without).unwrap();
    let out = phasetopic(
        &["phases", "--config", config.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("anchor"));
}

#[test]
fn unreadable_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path(), "");
    fs::remove_file(dir.path().join("synth/corpus.jsonl")).unwrap();
    assert_eq!(
        code(&phasetopic(
            &["stats", "--config", config.to_str().unwrap()],
            dir.path()
        )),
        1
    );
}

#[test]
fn full_pipeline_with_dual_labels() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path(), QUICK_LDA);
    let c = config.to_str().unwrap();
    let out_dir = dir.path().join("synth/out");

    let stdout = run_ok(&["phases", "--config", c], dir.path());
    assert!(stdout.contains("phase 1: 2020-01-15"));
    run_ok(&["topics", "--config", c], dir.path());
    for name in [
        "phases.json",
        "kinetics.csv",
        "kinetics.svg",
        "phases.svg",
        "topics.json",
    ] {
        assert!(out_dir.join(name).exists(), "{name}");
    }

    // every kept topic carries two themes, so every document weighs 0.5 in each
    let labels = label_all(&out_dir, "news|politics");
    // the synth config already has a [themes] table holding the lexicon
    let text = fs::read_to_string(&config).unwrap().replacen(
        "[themes]\n",
        &format!("[themes]\nlabels = \"{}\"\n", labels.display()),
        1,
    );
    fs::write(&config, text).unwrap();
    run_ok(&["report", "--config", c], dir.path());

    let mut reader = csv_rows(&out_dir.join("theme_trends.csv"));
    assert_eq!(
        reader.remove(0),
        ["date", "theme", "weighted_count", "config_hash"]
    );
    assert!(!reader.is_empty());
    for row in &reader {
        let w: f64 = row[2].parse().unwrap();
        assert_eq!((w * 2.0).fract(), 0.0, "weights come in halves: {row:?}");
    }
    let by_theme = |t: &str| -> f64 {
        reader
            .iter()
            .filter(|r| r[1] == t)
            .map(|r| r[2].parse::<f64>().unwrap())
            .sum()
    };
    assert_eq!(by_theme("news"), by_theme("politics"));
    assert!(out_dir.join("mention_trends.csv").exists());
    assert!(out_dir.join("phase_stats.csv").exists());
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn reruns_are_identical_and_stale_outputs_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path(), QUICK_LDA);
    let c = config.to_str().unwrap();
    let synth_dir = dir.path().join("synth");

    for out in ["run1", "run2"] {
        let o = synth_dir.join(out);
        let o = o.to_str().unwrap();
        run_ok(&["phases", "--config", c, "--out", o], dir.path());
        run_ok(
            &[
                "topics",
                "--config",
                c,
                "--out",
                o,
                "--workers",
                if out == "run1" { "1" } else { "3" },
            ],
            dir.path(),
        );
        run_ok(&["report", "--config", c, "--out", o], dir.path());
    }
    let (a, b) = (
        outputs(&synth_dir.join("run1")),
        outputs(&synth_dir.join("run2")),
    );
    assert!(a.len() >= 6);
    assert_eq!(a, b);

    // a different seed changes the hash; report must not reuse old topics
    let o = synth_dir.join("run1");
    let out = phasetopic(
        &[
            "topics",
            "--config",
            c,
            "--out",
            o.to_str().unwrap(),
            "--seed",
            "99",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash"));
}

#[test]
fn empty_vocabulary_skips_the_phase_with_a_reason() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(
        dir.path(),
        &QUICK_LDA.replace("min_count = 1", "min_count = 1000000"),
    );
    let c = config.to_str().unwrap();
    run_ok(&["phases", "--config", c], dir.path());
    let stdout = run_ok(&["topics", "--config", c], dir.path());
    assert!(stdout.contains("skipped"));
    let topics = json(&dir.path().join("synth/out/topics.json"));
    for rec in topics.as_array().unwrap() {
        assert!(rec["skipped"].as_str().is_some_and(|s| !s.is_empty()));
        assert!(rec["k_star"].is_null());
    }
}

#[test]
fn stats_match_the_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path(), "");
    let stdout = run_ok(&["stats", "--config", config.to_str().unwrap()], dir.path());
    assert!(stdout.contains("config hash"));
    let ledger = json(&dir.path().join("synth/ledger.json"));
    let days = ledger["days"].as_array().unwrap();
    let rows = csv_rows(&dir.path().join("synth/out/daily_counts.csv"));
    assert_eq!(
        rows[0],
        ["date", "tweets", "retweets", "unique_users", "config_hash"]
    );
    assert_eq!(rows.len() - 1, days.len());
    for (row, day) in rows[1..].iter().zip(days) {
        assert_eq!(row[0], day["date"].as_str().unwrap());
        assert_eq!(row[1], day["tweets"].to_string());
        assert_eq!(row[2], day["retweets"].to_string());
        assert_eq!(row[3], day["unique_users"].to_string());
    }
}
