use std::collections::hash_map::RandomState;
use std::fs::{self, File};
use std::hash::BuildHasher;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ippsnet::bench::{
    holdout_predict, run_sweep, write_archive, write_holdout_csv, HoldoutTable, ReportOptions, SweepSpec,
};
use ippsnet::config::KeyValues;
use ippsnet::dataset::{load_rows, write_rows, EncodedDataset, Role, SplitFractions, SplitMode};
use ippsnet::ipps::{
    aggregate_by_medium, estimate_sector_year, read_activity_csv, write_loads_csv, write_medium_summary,
    IntensityTable, Pollutant,
};
use ippsnet::network::{ModelFile, NetworkSpec, Recurrence, Topology, MAX_HIDDEN_LAYERS};
use ippsnet::rng::DEFAULT_SEED;
use ippsnet::synthetic::{synthetic_panel, PanelConfig};
use ippsnet::trainer::{evaluate_role, multi_restart_train, StopReason, TrainConfig};
use ippsnet::Error;

#[derive(Parser)]
#[command(name = "ippsnet", version, about = "Pollution-load estimation and neural-network benchmarking")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Master seed, or `random` to draw one.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED.to_string())]
    seed: String,
    /// Key-value file with training and sweep settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Split mode: `random` (stratified by sector) or `chrono` (latest years held out).
    #[arg(long, global = true, default_value = "random")]
    split: SplitMode,
    /// Feed the year as an extra normalized input.
    #[arg(long, global = true)]
    include_year: bool,
    /// Print NA instead of wall-clock times in reports.
    #[arg(long, global = true)]
    redact_timing: bool,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Compute loads from intensities and activity records.
    Estimate {
        #[arg(long)]
        intensity: PathBuf,
        /// Sidecar with `basis` and `scale`; defaults to `<intensity>.meta`.
        #[arg(long)]
        meta: Option<PathBuf>,
        #[arg(long)]
        activity: PathBuf,
    },
    /// Split and normalize a dataset, or write a synthetic one.
    Prepare {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Generate a synthetic panel with this many years per sector instead of reading `--data`.
        #[arg(long)]
        synthetic_years: Option<usize>,
    },
    /// Train one topology with restarts.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        topology: Topology,
        #[arg(long, default_value_t = 1)]
        hidden: usize,
    },
    /// Run the topology × depth × restart grid.
    Sweep {
        #[arg(long)]
        data: PathBuf,
    },
    /// Predict loads for rows with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        rows: PathBuf,
    },
    /// Trend-accuracy table from `pollutant,desired,actual` pairs.
    Report {
        #[arg(long)]
        pairs: PathBuf,
    },
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Parse { .. }
            | Error::Lookup(_)
            | Error::Domain(_)
            | Error::Shape { .. }
            | Error::Parameter(_)
            | Error::Duplicate(_)
            | Error::Split(_)
            | Error::Usage(_) => 2,
            Error::Selection(_) | Error::Divergence(_) => 3,
            Error::ModelFormat { .. } | Error::Compatibility(_) => 4,
            _ => 1,
        };
        Failure { code, msg: e.to_string() }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 1,
        msg: format!("{}: {e}", path.display()),
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn resolve_seed(s: &str) -> std::result::Result<u64, Failure> {
    if s.eq_ignore_ascii_case("random") {
        return Ok(RandomState::new().hash_one(std::time::SystemTime::now()));
    }
    s.parse().map_err(|_| Failure {
        code: 2,
        msg: format!("--seed must be an unsigned integer or `random`, got `{s}`"),
    })
}

fn config_kv(g: &Global) -> std::result::Result<KeyValues, Failure> {
    match &g.config {
        Some(p) => Ok(KeyValues::from_file(p)?),
        None => Ok(KeyValues::parse("<defaults>", "")?),
    }
}

fn out_dir(g: &Global, default: &str) -> std::result::Result<PathBuf, Failure> {
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from(default));
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    Ok(dir)
}

fn create(path: &Path) -> std::result::Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn train_config(g: &Global, kv: &KeyValues, seed: u64) -> std::result::Result<TrainConfig, Failure> {
    let mut cfg = TrainConfig::from_kv(kv)?;
    if !kv.contains("seed") {
        cfg.seed = seed;
    }
    log::info!("resolved training configuration:\n{}", cfg.describe());
    log::info!("split = {:?}, include_year = {}", g.split, g.include_year);
    Ok(cfg)
}

fn prepare_data(g: &Global, path: &Path, seed: u64) -> std::result::Result<EncodedDataset, Failure> {
    let rows = load_rows(path)?;
    let enc = EncodedDataset::prepare(&rows, SplitFractions::default(), seed, g.split, g.include_year)?;
    log::info!(
        "split: {} train, {} cv, {} test",
        enc.assignment.count(Role::Train),
        enc.assignment.count(Role::CrossValidation),
        enc.assignment.count(Role::Test)
    );
    Ok(enc)
}

fn cmd_estimate(g: &Global, intensity: &Path, meta: Option<&Path>, activity: &Path) -> CmdResult {
    let meta_path = meta.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut p = intensity.as_os_str().to_owned();
        p.push(".meta");
        PathBuf::from(p)
    });
    let meta = KeyValues::from_file(&meta_path)?;
    let table = IntensityTable::from_csv(intensity, &meta)?;
    let records = read_activity_csv(activity)?;
    let mut loads = Vec::new();
    for r in &records {
        loads.extend(estimate_sector_year(&table, r)?);
    }
    let out = g.out.clone().unwrap_or_else(|| PathBuf::from("loads.csv"));
    let mut w = create(&out)?;
    write_loads_csv(&mut w, &loads).map_err(|e| io_err(&out, e))?;
    w.flush().map_err(|e| io_err(&out, e))?;
    let summary = out.with_extension("medium.csv");
    let mut s = create(&summary)?;
    let totals = aggregate_by_medium(&loads);
    write_medium_summary(&mut s, &totals).map_err(|e| io_err(&summary, e))?;
    s.flush().map_err(|e| io_err(&summary, e))?;
    println!("{} load rows written to {}; medium totals in {}", loads.len(), out.display(), summary.display());
    Ok(())
}

fn cmd_prepare(g: &Global, data: Option<&Path>, synthetic_years: Option<usize>, seed: u64) -> CmdResult {
    let dir = out_dir(g, "prepared")?;
    let rows = match (data, synthetic_years) {
        (_, Some(n_years)) => {
            let rows = synthetic_panel(&PanelConfig {
                n_years,
                seed,
                ..PanelConfig::default()
            })?;
            let path = dir.join("data.csv");
            let mut w = create(&path)?;
            write_rows(&mut w, &rows).map_err(|e| io_err(&path, e))?;
            w.flush().map_err(|e| io_err(&path, e))?;
            rows
        }
        (Some(p), None) => load_rows(p)?,
        (None, None) => {
            return Err(Failure {
                code: 2,
                msg: "prepare needs --data or --synthetic-years".into(),
            })
        }
    };
    let enc = EncodedDataset::prepare(&rows, SplitFractions::default(), seed, g.split, g.include_year)?;
    let split_path = dir.join("split.csv");
    let mut w = create(&split_path)?;
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "sector,year,role")?;
        for (r, role) in rows.iter().zip(&enc.assignment.roles) {
            writeln!(w, "{},{},{}", r.sector, r.year, role)?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| io_err(&split_path, e))?;
    let norm_path = dir.join("normalizer.txt");
    fs::write(&norm_path, enc.normalizer.to_text()).map_err(|e| io_err(&norm_path, e))?;
    println!(
        "{} rows: {} train, {} cv, {} test; {} values clamped; input width {}",
        rows.len(),
        enc.assignment.count(Role::Train),
        enc.assignment.count(Role::CrossValidation),
        enc.assignment.count(Role::Test),
        enc.clamped,
        enc.normalizer.input_width()
    );
    Ok(())
}

fn network_spec(kv: &KeyValues, topology: Topology, hidden: usize, n_in: usize, n_out: usize) -> std::result::Result<NetworkSpec, Failure> {
    if hidden > MAX_HIDDEN_LAYERS {
        return Err(Failure {
            code: 2,
            msg: format!("--hidden must be at most {MAX_HIDDEN_LAYERS}"),
        });
    }
    let nodes = kv.get_or("nodes_per_hidden", 14usize)?;
    let mut spec = NetworkSpec::new(topology, n_in, vec![nodes; hidden], n_out);
    spec.memory_depth = kv.get_or("memory_depth", spec.memory_depth)?;
    spec.trajectory_length = kv.get_or("trajectory_length", spec.trajectory_length)?;
    spec.n_centers = kv.get_or("n_centers", spec.n_centers)?;
    spec.recurrence = kv.get_or("recurrence", Recurrence::Partial)?;
    Ok(spec)
}

fn cmd_train(g: &Global, data: &Path, topology: Topology, hidden: usize, seed: u64) -> CmdResult {
    let kv = config_kv(g)?;
    let cfg = train_config(g, &kv, seed)?;
    let enc = prepare_data(g, data, cfg.seed)?;
    let set = enc.training_set()?;
    let mut spec = network_spec(&kv, topology, hidden, set.n_inputs(), set.n_outputs())?;
    spec.trajectory_length = cfg.trajectory_length;
    let n_train = set.count(Role::Train);
    if topology == Topology::Rbf && spec.n_centers > n_train {
        log::warn!("{} centers exceed {n_train} training inputs; using {n_train}", spec.n_centers);
        spec.n_centers = n_train;
    }
    let dir = out_dir(g, "train")?;
    let result = multi_restart_train(&spec, &set, &cfg)?;
    for (i, r) in result.runs.iter().enumerate() {
        let path = dir.join(format!("restart{i}.curve.csv"));
        let mut w = create(&path)?;
        r.curve.write_csv(&mut w).map_err(|e| io_err(&path, e))?;
        w.flush().map_err(|e| io_err(&path, e))?;
        log::info!("restart {i}: {} after {} epochs, best cv mse {:e}", r.stop_reason, r.epochs_run, r.best_cv_mse);
    }
    let Some(best) = result.best_run() else {
        return Err(Failure {
            code: 3,
            msg: "every restart diverged".into(),
        });
    };
    let model = ModelFile {
        state: best.state.clone(),
        normalizer: Some(enc.normalizer.clone()),
    };
    model.save(&dir.join("model.model"))?;
    let test = evaluate_role(&best.state, &set, Role::Test).ok();
    println!(
        "{} h={} restart {}: {} at epoch {}, cv mse {:e}, test mse {}, test r {}",
        topology,
        hidden,
        result.best.unwrap_or(0),
        if best.stop_reason == StopReason::EarlyStop { "early stop" } else { "finished" },
        best.best_epoch + 1,
        best.best_cv_mse,
        test.as_ref().map_or("NA".into(), |t| format!("{:e}", t.mse)),
        test.as_ref().and_then(|t| t.r_mean).map_or("NA".into(), |r| format!("{r:.4}")),
    );
    Ok(())
}

fn parse_list<T: std::str::FromStr>(kv: &KeyValues, key: &str, default: Vec<T>) -> std::result::Result<Vec<T>, Failure>
where
    T::Err: std::fmt::Display,
{
    match kv.get_str(key) {
        None => {
            log::info!("{key} not set; using the default");
            Ok(default)
        }
        Some(v) => v
            .split(',')
            .map(|s| {
                s.trim().parse::<T>().map_err(|e| Failure {
                    code: 2,
                    msg: format!("{}: bad `{key}` entry `{}`: {e}", kv.source(), s.trim()),
                })
            })
            .collect(),
    }
}

fn cmd_sweep(g: &Global, data: &Path, seed: u64) -> CmdResult {
    let kv = config_kv(g)?;
    let cfg = train_config(g, &kv, seed)?;
    let enc = prepare_data(g, data, cfg.seed)?;
    let set = enc.training_set()?;
    let mut sweep = SweepSpec::full_grid(cfg);
    sweep.topologies = parse_list(&kv, "topologies", sweep.topologies)?;
    sweep.hidden_range = parse_list(&kv, "hidden_range", sweep.hidden_range)?;
    sweep.restarts = kv.get_or("restarts", sweep.restarts)?;
    sweep.nodes_per_hidden = kv.get_or("nodes_per_hidden", sweep.nodes_per_hidden)?;
    sweep.memory_depth = kv.get_or("memory_depth", sweep.memory_depth)?;
    sweep.n_centers = kv.get_or("n_centers", sweep.n_centers)?;
    sweep.recurrence = kv.get_or("recurrence", sweep.recurrence)?;
    sweep.jobs = g.jobs;
    log::info!(
        "sweep: topologies {:?}, depths {:?}, {} restarts, {} nodes per hidden layer, master seed {}",
        sweep.topologies.iter().map(|t| t.code()).collect::<Vec<_>>(),
        sweep.hidden_range,
        sweep.restarts,
        sweep.nodes_per_hidden,
        sweep.master_seed
    );
    let report = run_sweep(&sweep, &set)?;
    let dir = out_dir(g, "sweep")?;
    let opts = ReportOptions {
        redact_timing: g.redact_timing,
    };
    write_archive(&report, &dir, Some(&enc.normalizer), &opts)?;
    let diverged = report.runs.iter().filter(|r| r.diverged()).count();
    let Some(c) = report.champion_run() else {
        return Err(Failure {
            code: 3,
            msg: format!("all {} runs diverged; report written to {}", report.runs.len(), dir.display()),
        });
    };
    let t = c.test.as_ref().expect("champion has test metrics");
    println!(
        "champion {} h={} restart {} seed {}: test mse {:e}, r {} ({} runs, {} diverged)",
        c.topology,
        c.hidden_layers,
        c.restart,
        c.seed,
        t.mse,
        t.r_mean.map_or("NA".into(), |r| format!("{r:.4}")),
        report.runs.len(),
        diverged
    );
    Ok(())
}

fn write_table(g: &Global, table: &HoldoutTable, default: &str) -> CmdResult {
    let out = g.out.clone().unwrap_or_else(|| PathBuf::from(default));
    let mut w = create(&out)?;
    write_holdout_csv(&mut w, table).map_err(|e| io_err(&out, e))?;
    w.flush().map_err(|e| io_err(&out, e))?;
    println!(
        "{} pollutants, mean trend {} written to {}",
        table.rows.len(),
        table.mean_trend.map_or("NA".into(), |m| format!("{m:.3}%")),
        out.display()
    );
    Ok(())
}

fn cmd_predict(g: &Global, model: &Path, rows: &Path) -> CmdResult {
    let m = ModelFile::load(model)?;
    let Some(norm) = m.normalizer.as_ref() else {
        return Err(Failure {
            code: 4,
            msg: format!("{}: model has no normalizer section", model.display()),
        });
    };
    let rows = load_rows(rows)?;
    let table = holdout_predict(&m.state, norm, &rows)?;
    write_table(g, &table, "holdout.csv")
}

fn cmd_report(g: &Global, pairs: &Path) -> CmdResult {
    let text = fs::read_to_string(pairs).map_err(|e| io_err(pairs, e))?;
    let name = pairs.display().to_string();
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("pollutant,desired,actual") {
        return Err(Failure {
            code: 2,
            msg: format!("{name}:1: expected header `pollutant,desired,actual`"),
        });
    }
    let mut triples = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let bad = |m: String| Failure {
            code: 2,
            msg: format!("{name}:{n}: {m}"),
        };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", f.len())));
        }
        let p: Pollutant = f[0].parse().map_err(bad)?;
        let d: f64 = f[1].parse().map_err(|_| bad(format!("bad number `{}`", f[1])))?;
        let a: f64 = f[2].parse().map_err(|_| bad(format!("bad number `{}`", f[2])))?;
        triples.push((p, d, a));
    }
    write_table(g, &HoldoutTable::from_pairs(&triples), "trend.csv")
}

fn run(cli: &Cli) -> CmdResult {
    let g = &cli.global;
    let seed = resolve_seed(&g.seed)?;
    log::info!("seed = {seed}");
    match &cli.command {
        Command::Estimate {
            intensity,
            meta,
            activity,
        } => cmd_estimate(g, intensity, meta.as_deref(), activity),
        Command::Prepare { data, synthetic_years } => cmd_prepare(g, data.as_deref(), *synthetic_years, seed),
        Command::Train { data, topology, hidden } => cmd_train(g, data, *topology, *hidden, seed),
        Command::Sweep { data } => cmd_sweep(g, data, seed),
        Command::Predict { model, rows } => cmd_predict(g, model, rows),
        Command::Report { pairs } => cmd_report(g, pairs),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
