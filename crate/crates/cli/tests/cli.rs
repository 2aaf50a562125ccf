use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gistrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gistrank"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn fixture(dir: &Path) -> PathBuf {
    let out = gistrank(&["gen-fixture", "--seed", "7", "--out", dir.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    dir.join("pipeline.conf")
}

fn read(path: PathBuf) -> Vec<u8> {
    fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn topic_models(dir: PathBuf) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                read(p),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn full_run_writes_reports_for_every_mode() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let out = gistrank(&["all", "--config", config.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("MAP"));
    let root = dir.path().join("out");
    assert!(root.join("comparison.json").is_file());
    for mode in ["T", "TI", "TII"] {
        for file in [
            "report.json",
            "report.txt",
            "manifest.json",
            "model1.json",
            "lexicon.json",
        ] {
            assert!(root.join(mode).join(file).is_file(), "{mode}/{file}");
        }
    }
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let runs: Vec<PathBuf> = ["a", "b"].iter().map(|r| dir.path().join(r)).collect();
    for run in &runs {
        let out = gistrank(&[
            "all",
            "--config",
            config.to_str().unwrap(),
            "--mode",
            "TII",
            "--seed",
            "11",
            "--out",
            run.to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let (a, b) = (runs[0].join("TII"), runs[1].join("TII"));
    for file in ["model1.json", "report.json", "lexicon.json"] {
        assert_eq!(read(a.join(file)), read(b.join(file)), "{file}");
    }
    assert_eq!(
        topic_models(a.join("topic_models")),
        topic_models(b.join("topic_models"))
    );
}

#[test]
fn stage_out_of_order_names_the_missing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let out = gistrank(&["rank1", "--config", config.to_str().unwrap(), "--mode", "T"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("train1"), "{err}");
}

#[test]
fn stages_run_one_by_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path());
    let stages = [
        "link", "graph", "cluster", "features", "train1", "rank1", "lexicon", "train2", "rank2",
        "evaluate",
    ];
    for stage in stages {
        let out = gistrank(&[stage, "--config", config.to_str().unwrap(), "--mode", "TI"]);
        assert!(
            out.status.success(),
            "{stage}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    assert!(dir.path().join("out/TI/report.json").is_file());
}

#[test]
fn bad_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.conf");
    fs::write(&config, "kg.nodes=missing.tsv\nno_such_key=1\n").unwrap();
    let out = gistrank(&["all", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));

    let out = gistrank(&[
        "all",
        "--config",
        dir.path().join("absent.conf").to_str().unwrap(),
    ]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn unknown_mode_is_rejected() {
    let out = gistrank(&["link", "--config", "x.conf", "--mode", "XYZ"]);
    assert_eq!(out.status.code(), Some(1));
}
