use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pixplate::geometry::{assemble_plate, random_genome, PlateMatrix};
use pixplate::sparams::{write_touchstone, SParamSweep};
use pixplate::surrogate::{load_weights, predict_physical};
use pixplate::workbench::Dataset;
use tempfile::tempdir;

fn pixplate(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pixplate"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn generate_is_reproducible() {
    let dir = tempdir().unwrap();
    for name in ["a.jsonl", "b.jsonl"] {
        let out = pixplate(dir.path(), &["generate", "--n", "12", "--seed", "5", "--evaluator", "oracle", "--out", name]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = fs::read(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.jsonl")).unwrap());
    let ds = Dataset::load(&dir.path().join("a.jsonl")).unwrap();
    assert_eq!(ds.len(), 12);
    assert_eq!(ds.meta.seed, Some(5));
}

#[test]
fn exit_codes() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&pixplate(d, &["generate", "--n", "0", "--out", "x.jsonl"])), 2);
    assert_eq!(code(&pixplate(d, &["generate", "--n", "abc", "--out", "x.jsonl"])), 2);
    assert_eq!(code(&pixplate(d, &["frobnicate"])), 2);
    assert_eq!(code(&pixplate(d, &["stats", "--in", "x.jsonl", "--gap", "3.7:3.4", "--out-prefix", "s/"])), 2);
    assert_eq!(code(&pixplate(d, &["export", "--genome", "xyz", "--format", "csv", "--out", "p.csv"])), 2);

    fs::write(d.join("bad.jsonl"), "{not json}\n").unwrap();
    fs::write(d.join("bad.jsonl.meta.json"), r#"{"seed":null,"evaluator":"oracle","tool_version":"x"}"#).unwrap();
    assert_eq!(code(&pixplate(d, &["stats", "--in", "bad.jsonl", "--out-prefix", "s/"])), 3);
    assert_eq!(code(&pixplate(d, &["stats", "--in", "missing.jsonl", "--out-prefix", "s/"])), 3);

    let unknown = pixplate(d, &["optimize", "--target-f", "2", "--target-s21", "-5", "--evaluator", "cst", "--out-prefix", "o/"]);
    assert_eq!(code(&unknown), 4);
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("oracle, surrogate, lookup"));
    fs::write(d.join("junk.pxsm"), b"not a model").unwrap();
    let genome = random_genome(0).to_hex();
    assert_eq!(code(&pixplate(d, &["predict", "--model", "junk.pxsm", "--genome", &genome])), 4);
    let no_model = pixplate(d, &["optimize", "--target-f", "2", "--target-s21", "-5", "--evaluator", "surrogate", "--out-prefix", "o/"]);
    assert_eq!(code(&no_model), 2);
    let off_band = pixplate(d, &["optimize", "--target-f", "9", "--target-s21", "-5", "--evaluator", "oracle", "--out-prefix", "o/"]);
    assert_eq!(code(&off_band), 2);
}

#[test]
fn export_matches_library_plate() {
    let dir = tempdir().unwrap();
    let g = random_genome(44);
    let out = pixplate(dir.path(), &["export", "--genome", &g.to_hex(), "--format", "csv", "--out", "plate.csv"]);
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(dir.path().join("plate.csv")).unwrap();
    assert_eq!(PlateMatrix::from_csv(&csv).unwrap(), assemble_plate(&g));
    let out = pixplate(dir.path(), &["export", "--genome", &g.to_hex(), "--format", "pbm", "--out", "plate.pbm"]);
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read_to_string(dir.path().join("plate.pbm")).unwrap(), assemble_plate(&g).to_pbm());
}

#[test]
fn ingest_strict_and_permissive() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    fs::create_dir(d.join("sweeps")).unwrap();
    let freqs: Vec<f64> = (0..=20).map(|k| 1.0 + 0.2 * k as f64).collect();
    let s21: Vec<f64> = freqs.iter().map(|f| -10.0 + 5.0 * (-(f - 2.6_f64).powi(2)).exp()).collect();
    let sweep = SParamSweep::new(freqs.clone(), vec![-20.0; freqs.len()], s21).unwrap();
    fs::write(d.join("sweeps/one.s2p"), write_touchstone(&sweep)).unwrap();
    fs::write(d.join("sweeps/broken.s2p"), "# GHz S DB R 50\n1.0 oops\n").unwrap();
    let (g1, g2) = (random_genome(1).to_hex(), random_genome(2).to_hex());
    fs::write(d.join("map.csv"), format!("genome_hex,filename\n{g1},one.s2p\n{g2},broken.s2p\n")).unwrap();

    let strict = pixplate(d, &["ingest", "--dir", "sweeps", "--manifest", "map.csv", "--out", "ds.jsonl"]);
    assert_eq!(code(&strict), 3);
    assert!(String::from_utf8_lossy(&strict.stderr).contains("row 1"));

    let lenient = pixplate(d, &["ingest", "--dir", "sweeps", "--manifest", "map.csv", "--permissive", "--out", "ds.jsonl"]);
    assert_eq!(code(&lenient), 0);
    let ds = Dataset::load(&d.join("ds.jsonl")).unwrap();
    assert_eq!(ds.len(), 1);
    assert_eq!(ds.samples[0].genome_hex, g1);
    assert!((ds.samples[0].f_res_ghz - 2.6).abs() < 1e-12);
    assert!((ds.samples[0].s21_db + 5.0).abs() < 1e-12);
}

#[test]
fn stats_writes_csvs() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&pixplate(d, &["generate", "--n", "200", "--seed", "1", "--evaluator", "oracle", "--out", "ds.jsonl"])), 0);
    let out = pixplate(d, &["stats", "--in", "ds.jsonl", "--bins", "50", "--gap", "3.4:3.7", "--out-prefix", "stats/"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let pdf = fs::read_to_string(d.join("stats/freq_pdf.csv")).unwrap();
    assert_eq!(pdf.lines().count(), 51);
    let summary = fs::read_to_string(d.join("stats/s21_summary.csv")).unwrap();
    assert!(summary.starts_with("statistic,value\nmean,"));
}

#[test]
fn train_predict_optimize_pipeline() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&pixplate(d, &["generate", "--n", "20", "--seed", "3", "--evaluator", "oracle", "--out", "ds.jsonl"])), 0);
    let train = pixplate(
        d,
        &["train", "--in", "ds.jsonl", "--seed", "1", "--epochs", "2", "--batch", "4", "--out", "m.pxsm", "--history", "h.csv"],
    );
    assert_eq!(code(&train), 0, "{}", String::from_utf8_lossy(&train.stderr));
    assert_eq!(fs::read_to_string(d.join("h.csv")).unwrap().lines().count(), 3);

    let g = random_genome(77);
    let predict = pixplate(d, &["predict", "--model", "m.pxsm", "--genome", &g.to_hex()]);
    assert_eq!(code(&predict), 0);
    let (model, norm) = load_weights(&d.join("m.pxsm")).unwrap();
    let p = predict_physical(&model, &norm, &assemble_plate(&g)).unwrap();
    assert_eq!(
        String::from_utf8_lossy(&predict.stdout).trim(),
        format!("f_ghz={} s21_db={}", p.f_res_ghz, p.s21_db)
    );

    let opt = pixplate(
        d,
        &[
            "optimize", "--target-f", "2.0", "--target-s21", "-6", "--evaluator", "surrogate", "--model", "m.pxsm",
            "--seed", "2", "--iters", "5", "--swarm", "6", "--out-prefix", "design/",
        ],
    );
    assert_eq!(code(&opt), 0, "{}", String::from_utf8_lossy(&opt.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("design/report.json")).unwrap()).unwrap();
    assert_eq!(report["evaluator"], "surrogate");
    assert_eq!(report["config"]["swarm_size"], 6);
    let best = pixplate::geometry::PlateGenome::from_hex(report["best_genome_hex"].as_str().unwrap()).unwrap();
    let q = predict_physical(&model, &norm, &assemble_plate(&best)).unwrap();
    assert_eq!(report["predicted_f_ghz"].as_f64().unwrap(), q.f_res_ghz);
}

#[test]
fn lookup_evaluator_from_table() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&pixplate(d, &["generate", "--n", "5", "--seed", "0", "--evaluator", "oracle", "--out", "t.jsonl"])), 0);
    // the swarm will ask for genomes the table lacks
    let out = pixplate(
        d,
        &[
            "optimize", "--target-f", "3", "--target-s21", "-8", "--evaluator", "lookup", "--table", "t.jsonl",
            "--iters", "3", "--swarm", "4", "--out-prefix", "o/",
        ],
    );
    assert_eq!(code(&out), 4);
}
