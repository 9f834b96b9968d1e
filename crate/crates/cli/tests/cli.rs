use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use orb_core::eval::trapezoid;
use orb_core::features::{StampFeatures, Statistic};

fn orb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orb"))
        .args(args)
        .arg("--quiet")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = orb(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write_config(dir: &Path, body: serde_json::Value) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, body.to_string()).unwrap();
    p
}

fn paths(dir: &Path) -> serde_json::Value {
    serde_json::json!({
        "stamps_dir": dir.join("stamps"),
        "track_csv": dir.join("track.csv"),
        "ships_csv": dir.join("ships.csv"),
        "output_dir": dir.join("run"),
    })
}

fn bare_inputs(dir: &Path) {
    fs::create_dir_all(dir.join("stamps")).unwrap();
    fs::write(dir.join("track.csv"), "storm_id,time,lat,lon,intensity,dist_to_land,basin\n").unwrap();
    fs::write(dir.join("ships.csv"), "storm_id,time\n").unwrap();
}

fn synth(dir: &Path, storms: usize, seed: u64) -> String {
    let out = dir.join("synth");
    ok(&[
        "synth",
        "--scenario",
        "structure_driven",
        "--storms",
        &storms.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        out.to_str().unwrap(),
    ]);
    out.join("config.json").to_string_lossy().into_owned()
}

#[test]
fn empty_stamp_dir_extracts_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    bare_inputs(tmp.path());
    let cfg = write_config(tmp.path(), serde_json::json!({ "seed": 1, "paths": paths(tmp.path()) }));
    let out = ok(&["extract", "--config", cfg.to_str().unwrap()]);
    assert!(out.contains("extracted 0 stamps"), "{out}");
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("run/manifests/extract.json")).unwrap()).unwrap();
    assert_eq!(m["summary"]["stamps"], 0);
}

#[test]
fn validation_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    bare_inputs(tmp.path());
    let cases = [
        serde_json::json!({ "paths": paths(tmp.path()) }),
        serde_json::json!({ "seed": 1, "paths": paths(tmp.path()), "colour": "blue" }),
        serde_json::json!({ "seed": 1, "paths": { "stamps_dir": tmp.path().join("nope"), "track_csv": tmp.path().join("track.csv"),
            "ships_csv": tmp.path().join("ships.csv"), "output_dir": tmp.path().join("run") } }),
        serde_json::json!({ "seed": 1, "paths": paths(tmp.path()), "filter": { "max_missing_frac": 1.5 } }),
        serde_json::json!({ "seed": 1, "paths": paths(tmp.path()), "var_target": 0.0 }),
    ];
    for body in cases {
        let cfg = write_config(tmp.path(), body.clone());
        let out = orb(&["extract", "--config", cfg.to_str().unwrap()]);
        assert_eq!(code(&out), 2, "{body}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(code(&orb(&["extract", "--config", "/does/not/exist.json"])), 2);
    assert_eq!(code(&orb(&["frobnicate"])), 2);
}

#[test]
fn missing_upstream_names_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    bare_inputs(tmp.path());
    let cfg = write_config(tmp.path(), serde_json::json!({ "seed": 1, "paths": paths(tmp.path()) }));
    for (stage, hint) in [
        ("basis", "orb extract"),
        ("assemble", "orb extract"),
        ("fit", "orb assemble"),
        ("eval", "orb fit"),
        ("test", "orb eval"),
    ] {
        let out = orb(&[stage, "--config", cfg.to_str().unwrap()]);
        assert_eq!(code(&out), 3, "{stage}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(hint), "{stage}: {err}");
    }
}

#[test]
fn corrupt_stamp_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    bare_inputs(tmp.path());
    fs::write(tmp.path().join("stamps/AL011999_1999010100.stamp"), b"not a stamp").unwrap();
    let cfg = write_config(tmp.path(), serde_json::json!({ "seed": 1, "paths": paths(tmp.path()) }));
    assert_eq!(code(&orb(&["extract", "--config", cfg.to_str().unwrap()])), 3);
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn full_synthetic_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synth(tmp.path(), 16, 5);
    let run = tmp.path().join("synth/run");

    ok(&["extract", "--config", &cfg, "--jobs", "2"]);
    let first = read_dir_sorted(&run.join("features"));
    let again = ok(&["extract", "--config", &cfg]);
    assert!(again.contains("0 new"), "{again}");
    // a fresh extraction reproduces every byte
    fs::remove_dir_all(&run).unwrap();
    ok(&["extract", "--config", &cfg]);
    assert_eq!(read_dir_sorted(&run.join("features")), first);

    // every SIZE function is non-decreasing in the threshold
    for (name, bytes) in &first {
        if name == "index.json" {
            continue;
        }
        let f: StampFeatures = serde_json::from_slice(bytes).unwrap();
        let size = f.get(Statistic::SIZE);
        assert!(size.values.windows(2).all(|w| w[0] <= w[1]), "{name}");
    }

    for stage in ["basis", "assemble", "fit", "eval"] {
        ok(&[stage, "--config", &cfg]);
    }
    let test_out = ok(&["test", "--config", &cfg]);
    assert!(test_out.contains("test1 p = ") && test_out.contains("test2 p = "), "{test_out}");
    let tests: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("tests.json")).unwrap()).unwrap();
    for t in ["test1", "test2"] {
        assert_eq!(tests[t]["rounds"], 1000);
        let p = tests[t]["p_value"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }

    // the ROC file integrates to the reported AUC
    for set in ["SHIPS_only", "ORB_only", "SHIPS_plus_ORB", "SHIPS_plus_Persistence"] {
        let report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(run.join(format!("eval/{set}_report.json"))).unwrap()).unwrap();
        let mut rdr = csv::Reader::from_path(run.join(format!("eval/{set}_roc.csv"))).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for r in rdr.records() {
            let r = r.unwrap();
            x.push(r[0].parse::<f64>().unwrap());
            y.push(r[1].parse::<f64>().unwrap());
        }
        let auc = report["auc"].as_f64().unwrap();
        assert!((trapezoid(&x, &y) - auc).abs() <= 1e-12, "{set}");
        assert_eq!(report["seed"], 5);
    }

    // manifests carry the config hash, seeds and input hashes
    let cfg_hash = {
        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(run.join("manifests/extract.json")).unwrap()).unwrap();
        m["config_hash"].as_str().unwrap().to_string()
    };
    assert_eq!(cfg_hash.len(), 64);
    for stage in ["extract", "basis", "assemble", "fit", "eval", "test"] {
        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(run.join(format!("manifests/{stage}.json"))).unwrap()).unwrap();
        assert_eq!(m["config_hash"], cfg_hash.as_str(), "{stage}");
        assert!(m["tool_version"].as_str().unwrap().starts_with("orb-cli"));
        assert!(!m["inputs"].as_object().unwrap().is_empty(), "{stage}");
        assert!(!m["outputs"].as_object().unwrap().is_empty(), "{stage}");
    }
    let fit: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("manifests/fit.json")).unwrap()).unwrap();
    assert_eq!(fit["seeds"]["cv_folds"], 5);

    // rerunning a stage on unchanged inputs gives identical artifacts
    let models = read_dir_sorted(&run.join("models"));
    ok(&["fit", "--config", &cfg]);
    assert_eq!(read_dir_sorted(&run.join("models")), models);

    let storm = {
        let idx: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(run.join("features/index.json")).unwrap()).unwrap();
        let (_, e) = idx["entries"].as_object().unwrap().iter().next().unwrap();
        e["storm_id"].as_str().unwrap().to_string()
    };
    let tr = ok(&["trajectory", "--config", &cfg, "--storm", &storm, "--statistic", "SIZE"]);
    assert!(tr.contains("points written"), "{tr}");
    let header = fs::read_to_string(run.join(format!("trajectory/{storm}_SIZE.csv"))).unwrap();
    assert!(header.starts_with("time,alpha_1,alpha_2,smooth_alpha_1,smooth_alpha_2\n"));
    let unknown = orb(&["trajectory", "--config", &cfg, "--storm", "XX999999"]);
    assert_eq!(code(&unknown), 3);
}

#[test]
fn synth_sparse_signal_writes_a_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let msg = ok(&["synth", "--scenario", "sparse_signal", "--seed", "2", "--out", out.to_str().unwrap()]);
    assert!(msg.contains("table written"));
    assert!(out.join("table.csv").is_file() && out.join("truth.json").is_file());
    assert!(!out.join("config.json").exists());
    assert_eq!(code(&orb(&["synth", "--scenario", "bogus", "--seed", "1", "--out", "x"])), 2);
}
