use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn ippsnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ippsnet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn estimate_sample_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("loads.csv");
    let o = ippsnet(&[
        "estimate",
        "--intensity",
        s(&fixture("sample_intensity.csv")),
        "--activity",
        s(&fixture("sample_activity.csv")),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let got = fs::read_to_string(&out).unwrap();
    let want = fs::read_to_string(fixture("sample_loads_expected.csv")).unwrap();
    assert_eq!(got.lines().count(), want.lines().count());
    for (g, w) in got.lines().skip(1).zip(want.lines().skip(1)) {
        let g: Vec<&str> = g.split(',').collect();
        let w: Vec<&str> = w.split(',').collect();
        assert_eq!((g[0], g[1], g[2]), (w[0], w[1], w[2]));
        let (a, b): (f64, f64) = (g[4].parse().unwrap(), w[3].parse().unwrap());
        assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{g:?} vs {w:?}");
    }
    assert!(dir.path().join("loads.medium.csv").exists());
}

#[test]
fn unknown_sector_exits_2_with_token_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let act = dir.path().join("act.csv");
    fs::write(&act, "sector,year,employment,output_value\nBM,1999,10,0\nXYZ,2000,5,0\n").unwrap();
    let o = ippsnet(&[
        "estimate",
        "--intensity",
        s(&fixture("sample_intensity.csv")),
        "--meta",
        s(&fixture("sample_intensity.csv.meta")),
        "--activity",
        s(&act),
        "--out",
        s(&dir.path().join("l.csv")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("XYZ") && e.contains(":3"), "{e}");
}

fn synthetic(dir: &Path) -> PathBuf {
    let p = dir.join("prep");
    let o = ippsnet(&["prepare", "--synthetic-years", "6", "--out", s(&p)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["data.csv", "split.csv", "normalizer.txt"] {
        assert!(p.join(f).exists(), "{f}");
    }
    p.join("data.csv")
}

const SMALL: &str = "topologies = MLP, RBF, TLRN\nhidden_range = 0,1\nrestarts = 2\nepochs = 15\nnodes_per_hidden = 4\nn_centers = 8\nmemory_depth = 2\n";

fn sweep(data: &Path, cfg: &Path, out: &Path) -> Output {
    ippsnet(&[
        "sweep",
        "--data",
        s(data),
        "--config",
        s(cfg),
        "--out",
        s(out),
        "--redact-timing",
        "--seed",
        "9",
    ])
}

#[test]
fn sweep_smoke_is_fast_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic(dir.path());
    let cfg = dir.path().join("cfg.kv");
    fs::write(&cfg, SMALL).unwrap();
    let t = Instant::now();
    let a = sweep(&data, &cfg, &dir.path().join("a"));
    assert!(t.elapsed().as_secs_f64() < 10.0);
    assert!(a.status.success(), "{}", stderr(&a));
    assert!(String::from_utf8_lossy(&a.stdout).contains("champion"));
    let b = sweep(&data, &cfg, &dir.path().join("b"));
    assert!(b.status.success());
    let read = |d: &str, f: &str| fs::read_to_string(dir.path().join(d).join(f)).unwrap();
    assert_eq!(read("a", "bench.csv"), read("b", "bench.csv"));
    assert_eq!(read("a", "bench.txt"), read("b", "bench.txt"));
    assert_eq!(read("a", "bench.csv").lines().count(), 1 + 3 * 8);
}

#[test]
fn missing_config_keys_fall_back_to_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic(dir.path());
    let cfg = dir.path().join("cfg.kv");
    fs::write(&cfg, "topologies = MLP\nhidden_range = 0\nrestarts = 1\nepochs = 5\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ippsnet"))
        .args(["sweep", "--data", s(&data), "--config", s(&cfg), "--out", s(&dir.path().join("o"))])
        .env("RUST_LOG", "info")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let e = stderr(&o);
    assert!(e.contains("momentum_hidden") && e.contains("0.7"), "{e}");
    assert!(e.contains("patience = 50"), "{e}");
}

#[test]
fn bad_config_value_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic(dir.path());
    let cfg = dir.path().join("cfg.kv");
    fs::write(&cfg, "topologies = MLP,CNN\n").unwrap();
    let o = sweep(&data, &cfg, &dir.path().join("o"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("CNN"));
}

#[test]
fn train_then_predict_on_training_rows() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic(dir.path());
    let cfg = dir.path().join("cfg.kv");
    fs::write(&cfg, "restarts = 1\nepochs = 400\npatience = 0\n").unwrap();
    let tdir = dir.path().join("t");
    let o = ippsnet(&[
        "train", "--data", s(&data), "--topology", "MLP", "--hidden", "0", "--config", s(&cfg), "--out", s(&tdir),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tdir.join("restart0.curve.csv").exists());
    let model = tdir.join("model.model");

    // rows that fed the normalizer: trends should be near 100
    let split = fs::read_to_string(dir.path().join("prep/split.csv")).unwrap();
    let all = fs::read_to_string(&data).unwrap();
    let mut lines = all.lines();
    let mut train_rows = vec![lines.next().unwrap().to_string()];
    for (row, role) in lines.zip(split.lines().skip(1)) {
        if role.ends_with(",TRAIN") {
            train_rows.push(row.to_string());
        }
    }
    assert!(train_rows.len() > 1, "{split}");
    let rows = dir.path().join("train_rows.csv");
    fs::write(&rows, train_rows.join("\n") + "\n").unwrap();
    let hold = dir.path().join("h.csv");
    let o = ippsnet(&["predict", "--model", s(&model), "--rows", s(&rows), "--out", s(&hold)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&hold).unwrap();
    let mean: f64 = text.lines().last().unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!(mean > 90.0, "{text}");
}

#[test]
fn corrupted_model_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic(dir.path());
    let bad = dir.path().join("bad.model");
    fs::write(&bad, "ippsnet-model 1\nnot a model\n").unwrap();
    let o = ippsnet(&["predict", "--model", s(&bad), "--rows", s(&data), "--out", s(&dir.path().join("h.csv"))]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn report_matches_published_trends() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let o = ippsnet(&["report", "--pairs", s(&fixture("trend_pairs.csv")), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next(), Some("pollutant,desired,actual,trend_pct"));
    assert!(text.contains("SO2,101.606,89.511,88.096"), "{text}");
    assert!(text.ends_with("MEAN,,,84.170\n"), "{text}");
}

#[test]
fn bad_seed_exits_2() {
    let o = ippsnet(&["report", "--pairs", "x.csv", "--seed", "abc"]);
    assert_eq!(o.status.code(), Some(2));
}
