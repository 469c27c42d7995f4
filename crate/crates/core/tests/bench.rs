use ippsnet::bench::{
    emit_report, holdout_predict, run_sweep, write_archive, ReportFormat, ReportOptions, SweepSpec,
};
use ippsnet::dataset::{EncodedDataset, Normalizer, Role, SplitFractions, SplitMode, TrainingSet};
use ippsnet::ipps::Sector;
use ippsnet::network::{NetworkSpec, NetworkState, Topology};
use ippsnet::synthetic::{synthetic_panel, xor_task, PanelConfig};
use ippsnet::trainer::{train, TrainConfig};
use ippsnet::Error;

fn panel_data(seed: u64) -> EncodedDataset {
    let rows = synthetic_panel(&PanelConfig {
        seed,
        ..PanelConfig::default()
    })
    .unwrap();
    EncodedDataset::prepare(&rows, SplitFractions::default(), seed, SplitMode::Random, false).unwrap()
}

fn small_sweep(topologies: Vec<Topology>, depths: Vec<usize>, restarts: usize) -> SweepSpec {
    let mut s = SweepSpec::full_grid(TrainConfig {
        epochs: 15,
        patience: 5,
        seed: 11,
        ..TrainConfig::default()
    });
    s.topologies = topologies;
    s.hidden_range = depths;
    s.restarts = restarts;
    s.nodes_per_hidden = 5;
    s.n_centers = 10;
    s.memory_depth = 2;
    s
}

#[test]
fn single_cell_single_run() {
    let enc = panel_data(1);
    let data = enc.training_set().unwrap();
    let report = run_sweep(&small_sweep(vec![Topology::Mlp], vec![1], 1), &data).unwrap();
    assert_eq!(report.runs.len(), 1);
    assert_eq!(report.champion, Some(0));
    let csv = emit_report(&report, ReportFormat::Csv, &ReportOptions::default());
    assert_eq!(csv.lines().count(), 9);
    assert!(csv.starts_with("topology,metric,h1\nMLP,time_s,"));
}

#[test]
fn worker_count_does_not_change_results() {
    let enc = panel_data(2);
    let data = enc.training_set().unwrap();
    let mut s = small_sweep(vec![Topology::Tlrn, Topology::Mlp, Topology::Rbf], vec![0, 2], 2);
    let opts = ReportOptions { redact_timing: true };
    s.jobs = 1;
    let a = run_sweep(&s, &data).unwrap();
    s.jobs = 4;
    let b = run_sweep(&s, &data).unwrap();
    assert_eq!(a.runs.len(), 12);
    assert_eq!(
        emit_report(&a, ReportFormat::Csv, &opts),
        emit_report(&b, ReportFormat::Csv, &opts)
    );
    for (x, y) in a.runs.iter().zip(&b.runs) {
        assert_eq!(x.state.params, y.state.params);
        assert_eq!((x.topology, x.hidden_layers, x.restart), (y.topology, y.hidden_layers, y.restart));
    }
    assert_eq!(a.config_hash, b.config_hash);
}

#[test]
fn champion_beats_every_run_on_test_mse() {
    let enc = panel_data(3);
    let data = enc.training_set().unwrap();
    let report = run_sweep(&small_sweep(vec![Topology::Mlp, Topology::Gffn], vec![0, 1], 3), &data).unwrap();
    let champ = report.champion_run().unwrap().test_mse().unwrap();
    for r in report.runs.iter().filter(|r| !r.diverged()) {
        assert!(champ <= r.test_mse().unwrap() + 1e-6);
    }
    for c in &report.cells {
        let best = report.runs[c.best.unwrap()].test_mse().unwrap();
        for r in report
            .runs
            .iter()
            .filter(|r| r.topology == c.topology && r.hidden_layers == c.hidden_layers)
        {
            assert!(best <= r.test_mse().unwrap());
        }
    }
}

#[test]
fn archive_layout() {
    let enc = panel_data(4);
    let data = enc.training_set().unwrap();
    let report = run_sweep(&small_sweep(vec![Topology::Rn], vec![0, 1], 2), &data).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_archive(&report, dir.path(), Some(&enc.normalizer), &ReportOptions::default()).unwrap();
    for f in ["bench.csv", "bench.txt", "runs.csv", "champion.model", "runs/RN_h1_r1.model", "runs/RN_h0_r0.curve.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let text = std::fs::read_to_string(dir.path().join("bench.txt")).unwrap();
    assert!(text.contains("HIDDEN LAYERS"));
    assert!(text.contains("champion: RN"));
}

#[test]
fn nonlinear_task_needs_a_hidden_layer() {
    let (xs, ds) = xor_task(200, 0.1, 8);
    let roles: Vec<Role> = (0..200)
        .map(|i| match i % 20 {
            0..=11 => Role::Train,
            12..=16 => Role::CrossValidation,
            _ => Role::Test,
        })
        .collect();
    let data = TrainingSet::independent(xs, ds, roles);
    let mut s = small_sweep(vec![Topology::Mlp], vec![0, 1, 2], 3);
    s.train.epochs = 600;
    s.train.patience = 100;
    s.nodes_per_hidden = 4;
    let report = run_sweep(&s, &data).unwrap();
    let flat = report.cell_best(Topology::Mlp, 0).unwrap().test_mse().unwrap();
    let deep = [1, 2]
        .iter()
        .filter_map(|&h| report.cell_best(Topology::Mlp, h).and_then(|r| r.test_mse()))
        .fold(f64::INFINITY, f64::min);
    assert!(flat > deep, "{flat} vs {deep}");
}

fn single_sector_rows() -> Vec<ippsnet::dataset::RawRow> {
    synthetic_panel(&PanelConfig {
        sectors: vec![Sector::Fbt],
        n_years: 30,
        seed: 5,
        ..PanelConfig::default()
    })
    .unwrap()
}

fn linear_champion(rows: &[ippsnet::dataset::RawRow]) -> (NetworkState, Normalizer, EncodedDataset) {
    let enc = EncodedDataset::prepare(rows, SplitFractions::default(), 3, SplitMode::Random, false).unwrap();
    let data = enc.training_set().unwrap();
    let spec = NetworkSpec::new(Topology::Mlp, enc.normalizer.input_width(), vec![], 14);
    let cfg = TrainConfig {
        epochs: 3000,
        patience: 0,
        seed: 2,
        ..TrainConfig::default()
    };
    let out = train(NetworkState::build(&spec, 2).unwrap(), &data, &cfg).unwrap();
    (out.state, enc.normalizer.clone(), enc)
}

#[test]
fn holdout_on_a_perfectly_linear_task() {
    // one sector: intensities are constant, so every load is linear in employment
    let rows = single_sector_rows();
    let (state, norm, enc) = linear_champion(&rows);
    let test: Vec<_> = enc.assignment.indices(Role::Test).into_iter().map(|i| rows[i].clone()).collect();
    let table = holdout_predict(&state, &norm, &test).unwrap();
    assert_eq!(table.rows.len(), 14);
    for r in &table.rows {
        assert!(r.trend_pct.unwrap() > 99.0, "{} {:?}", r.pollutant, r.trend_pct);
    }
    let train_row = enc.assignment.indices(Role::Train)[0];
    let memorized = holdout_predict(&state, &norm, &rows[train_row..=train_row]).unwrap();
    assert!(memorized.mean_trend.unwrap() > 99.0);
}

#[test]
fn holdout_rejects_mismatched_normalizer() {
    let rows = single_sector_rows();
    let (state, _, _) = linear_champion(&rows);
    let other = EncodedDataset::prepare(&rows, SplitFractions::default(), 3, SplitMode::Random, true).unwrap();
    assert!(matches!(
        holdout_predict(&state, &other.normalizer, &rows),
        Err(Error::Compatibility(_))
    ));
}
