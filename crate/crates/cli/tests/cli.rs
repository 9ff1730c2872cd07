use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pmufault_cli::report::{REFERENCE, REFERENCE_CHECKPOINTS};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pmufault"))
}

fn run(ws: &Path, args: &[&str]) -> Output {
    bin().arg("-C").arg(ws).args(args).output().expect("binary runs")
}

fn ok(ws: &Path, args: &[&str]) -> serde_json::Value {
    let out = run(ws, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("one JSON summary line")
}

fn error(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    v["error"].clone()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            v.extend(files(&p));
        } else {
            v.push(p);
        }
    }
    v.sort();
    v
}

fn build_chain(ws: &Path, tag: &str, jobs: &str) {
    let c = format!("{tag}/campaign");
    let d = format!("{tag}/dataset");
    ok(ws, &["campaign", "--bench", "bitcount", "--runs", "300", "--seed", "5", "--jobs", jobs, "--out", &c]);
    ok(ws, &["dataset", "--campaign", &c, "--mode", "cumulative", "--out", &d]);
    ok(ws, &["train", "mlp", "--dataset", &d, "--out", &format!("{tag}/mlp")]);
}

#[test]
fn chain_is_byte_identical_across_runs_and_job_counts() {
    let ws = tempfile::tempdir().unwrap();
    build_chain(ws.path(), "a", "0");
    build_chain(ws.path(), "b", "1");
    let a = files(&ws.path().join("a"));
    let b = files(&ws.path().join("b"));
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.file_name(), y.file_name());
        let name = x.file_name().unwrap().to_string_lossy();
        // Manifests name their input directories, which differ here.
        if name.ends_with(".json") && name != "model.json" {
            continue;
        }
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
    }

    // Same command, same outputs, manifests included.
    let before: Vec<Vec<u8>> = a.iter().map(|p| std::fs::read(p).unwrap()).collect();
    build_chain(ws.path(), "a", "0");
    let after: Vec<Vec<u8>> = a.iter().map(|p| std::fs::read(p).unwrap()).collect();
    assert_eq!(before, after);
}

#[test]
fn bitcount_pipeline_smoke() {
    let ws = tempfile::tempdir().unwrap();
    let v = ok(ws.path(), &["pipeline", "--bench", "bitcount", "--runs", "500", "--out", "p"]);
    assert_eq!(v["benchmarks"][0]["benchmark"], "bitcount");
    let root = ws.path().join("p");
    for f in ["report.md", "report.json", "manifest.json"] {
        assert!(root.join(f).is_file(), "{f}");
    }
    let b = root.join("bitcount");
    let dirs = [
        ("campaign", &["manifest.json", "command.json", "records.csv", "stats.csv", "golden_stats.csv", "golden_checkpoint.bin"][..]),
        ("dataset_cumulative", &["manifest.json", "command.json", "raw.csv", "dataset.csv"][..]),
        ("dataset_temporal", &["manifest.json", "command.json", "raw.csv", "dataset.csv"][..]),
        ("analysis_cumulative", &["manifest.json", "pca.json", "pca.svg", "pca_projection.csv", "pca_components.csv", "hard_region.json", "hard_region.svg", "correlation_ranking.csv", "correlation_classes.csv", "top_features.json"][..]),
        ("analysis_temporal", &["manifest.json", "hard_region.json"][..]),
        ("mlp_cumulative", &["manifest.json", "model.json", "metrics.csv", "history.csv"][..]),
        ("mlp_temporal", &["manifest.json", "model.json"][..]),
        ("lstm_temporal", &["manifest.json", "model.json"][..]),
        ("snn_cumulative", &["manifest.json", "model.json"][..]),
        ("mlp_top", &["manifest.json", "model.json"][..]),
        ("eval_per_checkpoint", &["manifest.json", "metrics.csv", "per_checkpoint.csv"][..]),
        ("sweep", &["manifest.json", "sweep.csv", "sweep_features.json"][..]),
    ];
    for (d, fs) in dirs {
        for f in fs {
            assert!(b.join(d).join(f).is_file(), "{d}/{f}");
        }
    }
    let per_cp = std::fs::read_to_string(b.join("eval_per_checkpoint/per_checkpoint.csv")).unwrap();
    assert_eq!(per_cp.lines().count(), 11);
    let report = std::fs::read_to_string(root.join("report.md")).unwrap();
    for needle in ["## bitcount", "hard-to-detect region", "Temporal minus cumulative", "### Early detection", "### Feature sweep"] {
        assert!(report.contains(needle), "{needle}");
    }
}

#[test]
fn stage_commands_write_manifests() {
    let ws = tempfile::tempdir().unwrap();
    let w = ws.path();
    ok(w, &["campaign", "--bench", "qsort", "--runs", "200", "--every", "4000", "--out", "c"]);
    ok(w, &["dataset", "--campaign", "c", "--mode", "temporal", "--out", "t"]);
    ok(w, &["dataset", "--campaign", "c", "--out", "d"]);
    for kind in ["pca", "corr", "hard"] {
        let out = format!("an_{kind}");
        ok(w, &["analyze", kind, "--dataset", "d", "--out", &out, "--no-svg"]);
        assert!(w.join(&out).join("manifest.json").is_file());
        assert!(!w.join(&out).join("pca.svg").exists());
    }
    let v = ok(w, &["train", "lstm", "--dataset", "t", "--out", "lstm", "--top-k", "3"]);
    assert!(v["architecture"].as_str().unwrap().starts_with("LSTM"));
    ok(w, &["train", "snn", "--dataset", "d", "--out", "snn", "--top-k", "5"]);
    ok(w, &["train", "mlp", "--dataset", "d", "--out", "mlp"]);
    let v = ok(w, &["eval", "--model", "mlp/model.json", "--dataset", "d", "--out", "ev", "--per-checkpoint"]);
    let per_cp = std::fs::read_to_string(w.join("ev/per_checkpoint.csv")).unwrap();
    assert_eq!(per_cp.lines().count() - 1, v["checkpoints"].as_u64().unwrap() as usize);
    let v = ok(w, &["sweep", "--dataset", "d", "--ks", "1,2,all", "--out", "sw"]);
    assert_eq!(v["ks"].as_array().unwrap().len(), 3);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(w.join("sw/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["format"], "pmufault-output");
    assert_eq!(m["config"]["campaign"]["n_runs"], 2000, "the config echo is the validated file config");
}

#[test]
fn feature_mismatch_names_missing_features() {
    let ws = tempfile::tempdir().unwrap();
    let w = ws.path();
    ok(w, &["campaign", "--bench", "bitcount", "--runs", "150", "--out", "c"]);
    ok(w, &["dataset", "--campaign", "c", "--out", "d"]);
    ok(w, &["dataset", "--campaign", "c", "--mode", "temporal", "--out", "t"]);
    ok(w, &["train", "mlp", "--dataset", "d", "--out", "m", "--top-k", "2"]);
    let e = error(&run(w, &["eval", "--model", "m/model.json", "--dataset", "t", "--out", "e"]));
    assert_eq!(e["kind"], "model");
    let missing: Vec<String> = serde_json::from_value(e["missing_features"].clone()).unwrap();
    let model: serde_json::Value = serde_json::from_slice(&std::fs::read(w.join("m/model.json")).unwrap()).unwrap();
    let wanted: Vec<String> = serde_json::from_value(model["features"].clone()).unwrap();
    assert_eq!(missing, wanted);
}

#[test]
fn errors_are_machine_readable() {
    let ws = tempfile::tempdir().unwrap();
    let w = ws.path();

    let out = run(w, &["campaign", "--runs", "ten", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error(&out)["kind"], "usage");

    std::fs::write(w.join("bad.toml"), "[campaign]\nbudget_factor = 0.5\n").unwrap();
    let out = run(w, &["--config", "bad.toml", "campaign", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error(&out)["kind"], "config");

    std::fs::write(w.join("typo.toml"), "[analysis]\nmargn = 0.1\n").unwrap();
    let e = error(&run(w, &["--config", "typo.toml", "config"]));
    assert!(e["message"].as_str().unwrap().contains("margn"));

    let out = run(w, &["dataset", "--campaign", "nowhere", "--out", "d"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error(&out)["kind"], "io");

    std::fs::write(w.join("bad.s"), "start:\n    ADDI r1, r0, 1\n    JAL r0, nowhere\n").unwrap();
    let e = error(&run(w, &["asm", "bad.s"]));
    assert_eq!(e["kind"], "asm");
    assert!(e["message"].as_str().unwrap().contains("nowhere"));
    assert!(w.join("x").read_dir().is_err(), "failed commands leave no output");
}

#[test]
fn config_round_trips_and_asm_is_canonical() {
    let ws = tempfile::tempdir().unwrap();
    let w = ws.path();
    let out = run(w, &["config"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = pmufault_cli::WorkbenchConfig::from_toml(&text).unwrap();
    assert_eq!(cfg, pmufault_cli::WorkbenchConfig::default());

    std::fs::write(w.join("p.s"), pmufault::benchmarks::BITCOUNT_SOURCE).unwrap();
    let a = run(w, &["asm", "p.s"]);
    let b = run(w, &["asm", "p.s"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let listing = run(w, &["asm", "p.s", "--disasm"]);
    assert!(listing.status.success() && !listing.stdout.is_empty());

    let counters = run(w, &["counters"]);
    let list = String::from_utf8(counters.stdout).unwrap();
    assert_eq!(list.lines().count(), 1 + pmufault::sim::NUM_COUNTERS);
}

/// The embedded reference rows appear verbatim in the source document.
#[test]
fn reference_values_match_the_source_document() {
    let doc = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../paper.md")).unwrap();
    let squash = |s: &str| s.split_whitespace().collect::<String>();
    let doc = squash(&doc);
    for r in REFERENCE {
        let [a, p, rc, f] = r.values;
        let row = format!("{}&{}&{a}\\%&{p}\\%&{rc}\\%&{f}\\%", r.benchmark, r.architecture);
        assert!(doc.contains(&row), "{row}");
    }
    for (i, [a, p, r, f]) in REFERENCE_CHECKPOINTS.iter().enumerate() {
        let row = format!("{i}&19-32-2&{a}\\%&{p}\\%&{r}\\%&{f}\\%");
        assert!(doc.contains(&row), "{row}");
    }
    assert!(doc.contains(&squash("About 0.5\\% of the simulations generated a crash")));
    assert!(doc.contains(&squash("about 75\\% of non-faulty")));
}
