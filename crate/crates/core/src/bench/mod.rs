//! Topology × depth × restart sweeps, champion selection, Table-style
//! reports and holdout prediction.

mod holdout;
mod report;

use std::collections::hash_map::DefaultHasher;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

pub use holdout::{holdout_predict, write_holdout_csv, HoldoutRow, HoldoutTable};
pub use report::{emit_report, ReportFormat, ReportOptions, METRIC_ROWS};

use crate::dataset::{Normalizer, Role, TrainingSet};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::network::{ModelFile, NetworkSpec, NetworkState, Recurrence, Topology, MAX_HIDDEN_LAYERS};
use crate::rng::derive_seed;
use crate::trainer::{evaluate_role, train, LearningCurve, StopReason, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub topologies: Vec<Topology>,
    pub hidden_range: Vec<usize>,
    pub restarts: usize,
    pub nodes_per_hidden: usize,
    pub memory_depth: usize,
    pub n_centers: usize,
    pub recurrence: Recurrence,
    pub train: TrainConfig,
    pub master_seed: u64,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
}

impl SweepSpec {
    /// All five topologies, depths 0 to 4, five restarts.
    pub fn full_grid(train: TrainConfig) -> Self {
        SweepSpec {
            topologies: Topology::ALL.to_vec(),
            hidden_range: (0..=MAX_HIDDEN_LAYERS).collect(),
            restarts: 5,
            nodes_per_hidden: 14,
            memory_depth: 10,
            n_centers: 80,
            recurrence: Recurrence::Partial,
            master_seed: train.seed,
            train,
            jobs: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.topologies.is_empty() || self.hidden_range.is_empty() {
            return Err(Error::Parameter("sweep needs at least one topology and one depth".into()));
        }
        if let Some(&h) = self.hidden_range.iter().find(|&&h| h > MAX_HIDDEN_LAYERS) {
            return Err(Error::Parameter(format!("hidden layer count {h} outside 0..={MAX_HIDDEN_LAYERS}")));
        }
        if self.restarts == 0 || self.nodes_per_hidden == 0 {
            return Err(Error::Parameter("restarts and nodes_per_hidden must be >= 1".into()));
        }
        self.train.validate()
    }

    /// Network shape for one grid cell.
    pub fn network_spec(&self, topology: Topology, hidden: usize, n_inputs: usize, n_outputs: usize) -> NetworkSpec {
        let mut s = NetworkSpec::new(topology, n_inputs, vec![self.nodes_per_hidden; hidden], n_outputs);
        s.memory_depth = self.memory_depth;
        s.trajectory_length = self.train.trajectory_length;
        s.n_centers = self.n_centers;
        s.recurrence = self.recurrence;
        s
    }

    /// Seed of restart `restart` in a cell: consecutive seeds from a
    /// per-cell base derived from the master seed.
    pub fn run_seed(&self, topology: Topology, hidden: usize, restart: usize) -> u64 {
        let t = Topology::ALL.iter().position(|&x| x == topology).unwrap_or(0) as u64;
        derive_seed(self.master_seed, &[t, hidden as u64]).wrapping_add(restart as u64)
    }

    /// Stable digest of everything that determines the sweep's results.
    pub fn config_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        let codes: Vec<&str> = self.topologies.iter().map(|t| t.code()).collect();
        codes.hash(&mut h);
        self.hidden_range.hash(&mut h);
        (self.restarts, self.nodes_per_hidden, self.memory_depth, self.n_centers).hash(&mut h);
        self.recurrence.name().hash(&mut h);
        self.master_seed.hash(&mut h);
        self.train.describe().hash(&mut h);
        h.finish()
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub topology: Topology,
    pub hidden_layers: usize,
    pub restart: usize,
    pub seed: u64,
    /// Training-loop time at 1 ms resolution.
    pub wall_time_s: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub stop_reason: StopReason,
    /// Test-split metrics; `None` for diverged runs or an empty test split.
    pub test: Option<EvalReport>,
    pub curve: LearningCurve,
    pub state: NetworkState,
}

impl RunResult {
    pub fn diverged(&self) -> bool {
        self.stop_reason == StopReason::Diverged
    }

    pub fn test_mse(&self) -> Option<f64> {
        self.test.as_ref().map(|t| t.mse)
    }

    /// File stem used in the run archive, e.g. `TLRN_h2_r0`.
    pub fn stem(&self) -> String {
        format!("{}_h{}_r{}", self.topology.code(), self.hidden_layers, self.restart)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub topology: Topology,
    pub hidden_layers: usize,
    /// Index into `BenchReport::runs` of the lowest test MSE restart.
    pub best: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    /// Every run, ordered by (topology, depth, restart) as listed in the sweep.
    pub runs: Vec<RunResult>,
    pub cells: Vec<Cell>,
    pub champion: Option<usize>,
    pub master_seed: u64,
    pub config_hash: u64,
}

impl BenchReport {
    pub fn champion_run(&self) -> Option<&RunResult> {
        self.champion.map(|i| &self.runs[i])
    }

    pub fn cell(&self, topology: Topology, hidden: usize) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.topology == topology && c.hidden_layers == hidden)
    }

    pub fn cell_best(&self, topology: Topology, hidden: usize) -> Option<&RunResult> {
        self.cell(topology, hidden)?.best.map(|i| &self.runs[i])
    }
}

/// Ranking keys for [`select_best`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    TestMse,
    MeanR,
    WallTime,
}

impl FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mse" | "test_mse" => Ok(Criterion::TestMse),
            "r" | "mean_r" => Ok(Criterion::MeanR),
            "time" | "wall_time" => Ok(Criterion::WallTime),
            other => Err(format!("unknown selection criterion `{other}`")),
        }
    }
}

pub const DEFAULT_CRITERIA: [Criterion; 3] = [Criterion::TestMse, Criterion::MeanR, Criterion::WallTime];
/// Values this close count as tied and defer to the next criterion.
pub const TIE_TOLERANCE: f64 = 1e-6;

impl Criterion {
    /// Smaller is better; missing values rank last.
    fn key(self, r: &RunResult) -> f64 {
        match self {
            Criterion::TestMse => r.test_mse().unwrap_or(f64::INFINITY),
            Criterion::MeanR => r.test.as_ref().and_then(|t| t.r_mean).map_or(f64::INFINITY, |v| -v),
            Criterion::WallTime => r.wall_time_s,
        }
    }
}

/// Index of the preferred run among `candidates`. Each criterion in turn
/// keeps the candidates within [`TIE_TOLERANCE`] of the best; the lowest
/// index wins remaining ties. Diverged runs and runs without test metrics
/// are never chosen.
pub fn select_best(runs: &[RunResult], candidates: &[usize], criteria: &[Criterion]) -> Result<usize> {
    let mut pool: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&i| !runs[i].diverged() && runs[i].test.is_some())
        .collect();
    if pool.is_empty() {
        return Err(Error::Selection("every run diverged or lacks test metrics".into()));
    }
    for &c in criteria {
        let best = pool.iter().map(|&i| c.key(&runs[i])).fold(f64::INFINITY, f64::min);
        pool.retain(|&i| c.key(&runs[i]) <= best + TIE_TOLERANCE);
    }
    Ok(*pool.iter().min().expect("nonempty"))
}

struct Job {
    topology: Topology,
    hidden: usize,
    restart: usize,
}

fn run_one(sweep: &SweepSpec, data: &TrainingSet, job: &Job) -> Result<RunResult> {
    let seed = sweep.run_seed(job.topology, job.hidden, job.restart);
    let mut spec = sweep.network_spec(job.topology, job.hidden, data.n_inputs(), data.n_outputs());
    let n_train = data.count(Role::Train);
    if spec.topology == Topology::Rbf && spec.n_centers > n_train {
        log::warn!("{} centers exceed {} training inputs; using {}", spec.n_centers, n_train, n_train);
        spec.n_centers = n_train;
    }
    let state = NetworkState::build(&spec, seed)?;
    let cfg = TrainConfig {
        seed,
        ..sweep.train.clone()
    };
    let started = Instant::now();
    let out = train(state, data, &cfg)?;
    let wall_time_s = started.elapsed().as_millis() as f64 / 1000.0;
    let test = if out.stop_reason == StopReason::Diverged || data.count(Role::Test) == 0 {
        None
    } else {
        Some(evaluate_role(&out.state, data, Role::Test)?)
    };
    log::info!(
        "{} h={} r={} seed={} {} after {} epochs",
        job.topology,
        job.hidden,
        job.restart,
        seed,
        out.stop_reason,
        out.epochs_run
    );
    Ok(RunResult {
        topology: job.topology,
        hidden_layers: job.hidden,
        restart: job.restart,
        seed,
        wall_time_s,
        epochs_run: out.epochs_run,
        best_epoch: out.best_epoch,
        stop_reason: out.stop_reason,
        test,
        curve: out.curve,
        state: out.state,
    })
}

/// Train every (topology, depth, restart) combination. Runs execute on a
/// pool of `sweep.jobs` threads; results are ordered by grid position so
/// the report does not depend on scheduling.
pub fn run_sweep(sweep: &SweepSpec, data: &TrainingSet) -> Result<BenchReport> {
    run_sweep_with(sweep, data, &DEFAULT_CRITERIA)
}

pub fn run_sweep_with(sweep: &SweepSpec, data: &TrainingSet, criteria: &[Criterion]) -> Result<BenchReport> {
    sweep.validate()?;
    data.validate()?;
    let mut jobs = Vec::new();
    for &topology in &sweep.topologies {
        for &hidden in &sweep.hidden_range {
            sweep.network_spec(topology, hidden, data.n_inputs(), data.n_outputs()).validate()?;
            for restart in 0..sweep.restarts {
                jobs.push(Job {
                    topology,
                    hidden,
                    restart,
                });
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(sweep.jobs)
        .build()
        .map_err(|e| Error::Parameter(format!("cannot start worker pool: {e}")))?;
    let runs: Vec<RunResult> = pool.install(|| {
        jobs.par_iter()
            .map(|j| run_one(sweep, data, j))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut cells = Vec::new();
    for &topology in &sweep.topologies {
        for &hidden in &sweep.hidden_range {
            let members: Vec<usize> = (0..runs.len())
                .filter(|&i| runs[i].topology == topology && runs[i].hidden_layers == hidden)
                .collect();
            let best = select_best(&runs, &members, &[Criterion::TestMse]).ok();
            cells.push(Cell {
                topology,
                hidden_layers: hidden,
                best,
            });
        }
    }
    let bests: Vec<usize> = cells.iter().filter_map(|c| c.best).collect();
    let champion = select_best(&runs, &bests, criteria).ok();
    Ok(BenchReport {
        runs,
        cells,
        champion,
        master_seed: sweep.master_seed,
        config_hash: sweep.config_hash(),
    })
}

/// One line per run, including diverged ones.
pub fn write_runs_csv<W: std::io::Write>(mut out: W, report: &BenchReport, opts: &ReportOptions) -> std::io::Result<()> {
    writeln!(
        out,
        "topology,hidden_layers,restart,seed,wall_time_s,epochs,best_epoch,stop_reason,test_mse,test_r_mean,curve,model"
    )?;
    for r in &report.runs {
        let time = if opts.redact_timing {
            "NA".to_string()
        } else {
            format!("{:.3}", r.wall_time_s)
        };
        let mse = r.test_mse().map_or("NA".into(), |v| format!("{v:e}"));
        let rm = r.test.as_ref().and_then(|t| t.r_mean).map_or("NA".into(), |v| format!("{v:e}"));
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},runs/{}.curve.csv,runs/{}.model",
            r.topology.code(),
            r.hidden_layers,
            r.restart,
            r.seed,
            time,
            r.epochs_run,
            r.best_epoch + 1,
            r.stop_reason,
            mse,
            rm,
            r.stem(),
            r.stem()
        )?;
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Write `bench.csv`, `bench.txt`, `runs.csv`, `runs/` (curve and model per
/// run) and, when a champion exists, `champion.model` into `dir`.
pub fn write_archive(report: &BenchReport, dir: &Path, normalizer: Option<&Normalizer>, opts: &ReportOptions) -> Result<()> {
    let runs_dir = dir.join("runs");
    fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;
    write_file(&dir.join("bench.csv"), emit_report(report, ReportFormat::Csv, opts).as_bytes())?;
    write_file(&dir.join("bench.txt"), emit_report(report, ReportFormat::Text, opts).as_bytes())?;
    let mut buf = Vec::new();
    write_runs_csv(&mut buf, report, opts).map_err(|e| Error::io(dir.join("runs.csv"), e))?;
    write_file(&dir.join("runs.csv"), &buf)?;
    for r in &report.runs {
        let mut curve = Vec::new();
        r.curve.write_csv(&mut curve).map_err(|e| Error::io(&runs_dir, e))?;
        write_file(&runs_dir.join(format!("{}.curve.csv", r.stem())), &curve)?;
        let model = ModelFile {
            state: r.state.clone(),
            normalizer: normalizer.cloned(),
        };
        model.save(&runs_dir.join(format!("{}.model", r.stem())))?;
    }
    if let Some(c) = report.champion_run() {
        let model = ModelFile {
            state: c.state.clone(),
            normalizer: normalizer.cloned(),
        };
        model.save(&dir.join("champion.model"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkSpec;

    fn fake(mse: f64, r: f64, time: f64, diverged: bool) -> RunResult {
        let spec = NetworkSpec::new(Topology::Mlp, 1, vec![], 1);
        let test = EvalReport {
            mse,
            nmse: None,
            mae_paper: None,
            mae_abs: 0.0,
            min_abs_err: 0.0,
            max_abs_err: 0.0,
            r_per_output: vec![Some(r)],
            r_mean: Some(r),
            n_exemplars: 1,
            n_outputs: 1,
        };
        RunResult {
            topology: Topology::Mlp,
            hidden_layers: 0,
            restart: 0,
            seed: 0,
            wall_time_s: time,
            epochs_run: 1,
            best_epoch: 0,
            stop_reason: if diverged { StopReason::Diverged } else { StopReason::EpochsExhausted },
            test: (!diverged).then_some(test),
            curve: LearningCurve::default(),
            state: NetworkState::build(&spec, 0).unwrap(),
        }
    }

    #[test]
    fn selection_rules() {
        let one = vec![fake(0.3, 0.5, 1.0, false)];
        assert_eq!(select_best(&one, &[0], &DEFAULT_CRITERIA).unwrap(), 0);

        let tie_r = vec![fake(0.1, 0.8, 1.0, false), fake(0.1, 0.9, 5.0, false)];
        assert_eq!(select_best(&tie_r, &[0, 1], &DEFAULT_CRITERIA).unwrap(), 1);

        let tie_all = vec![fake(0.1, 0.9, 9.0, false), fake(0.1 + 5e-7, 0.9, 2.0, false)];
        assert_eq!(select_best(&tie_all, &[0, 1], &DEFAULT_CRITERIA).unwrap(), 1);

        let lower = vec![fake(0.2, 0.99, 0.1, false), fake(0.1, 0.1, 9.0, false)];
        assert_eq!(select_best(&lower, &[0, 1], &DEFAULT_CRITERIA).unwrap(), 1);

        let r_first = [Criterion::MeanR, Criterion::TestMse];
        assert_eq!(select_best(&lower, &[0, 1], &r_first).unwrap(), 0);

        let div = vec![fake(0.0, 1.0, 0.0, true), fake(0.5, 0.1, 1.0, false)];
        assert_eq!(select_best(&div, &[0, 1], &DEFAULT_CRITERIA).unwrap(), 1);
        assert!(matches!(select_best(&div, &[0], &DEFAULT_CRITERIA), Err(Error::Selection(_))));
    }

    #[test]
    fn sweep_validation() {
        let mut s = SweepSpec::full_grid(TrainConfig::default());
        assert!(s.validate().is_ok());
        s.hidden_range = vec![5];
        assert!(s.validate().is_err());
        s.hidden_range = vec![0];
        s.topologies.clear();
        assert!(s.validate().is_err());
    }

    #[test]
    fn run_seeds_are_consecutive_within_a_cell() {
        let s = SweepSpec::full_grid(TrainConfig::default());
        let a = s.run_seed(Topology::Mlp, 1, 0);
        assert_eq!(s.run_seed(Topology::Mlp, 1, 3), a + 3);
        assert_ne!(s.run_seed(Topology::Gffn, 1, 0), a);
    }
}
