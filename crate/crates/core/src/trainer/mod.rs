//! Gradient descent with momentum, truncated BPTT for temporal topologies,
//! two-phase RBF fitting, cross-validation early stopping, learning-curve
//! control and multi-restart training.

mod controller;
mod gradients;
mod momentum;
mod rbf_fit;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;

pub use controller::{curve_controller, ControllerConfig, CurveAction, DECREASE_FACTOR, INCREASE_FACTOR};
pub use gradients::{batch_cost, bptt_cost, bptt_gradients, gradients, Gradients, Step};
pub use momentum::{momentum_update, GroupRates, Momentum};
pub use rbf_fit::{fit_basis, nearest_center_widths, rbf_fit_centers, CompetitiveConfig, CompetitiveFit};

use crate::config::KeyValues;
use crate::dataset::{Role, TrainingSet};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::network::{NetworkSpec, NetworkState, ParamKind, RecurrentContext, Topology};
use crate::rng::{derive_seed, seeded_rng, DEFAULT_SEED};

/// Admissible step-size range.
pub const STEP_SIZE_MIN: f64 = 0.001;
pub const STEP_SIZE_MAX: f64 = 1.0;
/// Gamma parameters are kept in `[GAMMA_MIN, 1]` while training.
pub const GAMMA_MIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Update after every sample (static) or trajectory (temporal).
    Online,
    /// One averaged update per epoch.
    Batch,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "online" => Ok(Mode::Online),
            "batch" => Ok(Mode::Batch),
            other => Err(format!("unknown training mode `{other}`")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Online => "online",
            Mode::Batch => "batch",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: GroupRates,
    pub output: GroupRates,
    pub epochs: usize,
    pub mode: Mode,
    /// Epochs without CV improvement before stopping; 0 disables.
    pub patience: usize,
    pub restarts: usize,
    pub seed: u64,
    pub trajectory_length: usize,
    pub freeze_gamma: bool,
    /// `None` disables learning-curve control.
    pub controller: Option<ControllerConfig>,
    /// Training MSE above this counts as divergence.
    pub divergence_threshold: f64,
    pub competitive: CompetitiveConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: GroupRates {
                step_size: 0.1,
                momentum: 0.7,
            },
            output: GroupRates {
                step_size: 0.01,
                momentum: 0.9,
            },
            epochs: 1000,
            mode: Mode::Online,
            patience: 50,
            restarts: 5,
            seed: DEFAULT_SEED,
            trajectory_length: 10,
            freeze_gamma: false,
            controller: Some(ControllerConfig::default()),
            divergence_threshold: 1e12,
            competitive: CompetitiveConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("hidden", self.hidden), ("output", self.output)] {
            if !(r.step_size > 0.0 && r.step_size <= 1.0) {
                return Err(Error::Parameter(format!("{name} step size must lie in (0, 1], got {}", r.step_size)));
            }
            if !(0.0..1.0).contains(&r.momentum) {
                return Err(Error::Parameter(format!("{name} momentum must lie in [0, 1), got {}", r.momentum)));
            }
        }
        if self.epochs == 0 || self.restarts == 0 || self.trajectory_length == 0 {
            return Err(Error::Parameter("epochs, restarts and trajectory_length must be >= 1".into()));
        }
        Ok(())
    }

    /// Read overrides from a key-value file. Recognized keys: `step_size`,
    /// `step_size_hidden`, `step_size_output`, `momentum`,
    /// `momentum_hidden`, `momentum_output`, `epochs`, `mode`, `patience`,
    /// `restarts`, `seed`, `trajectory_length`, `freeze_gamma`,
    /// `curve_control`, `curve_window`. Absent keys keep their defaults.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let d = TrainConfig::default();
        let step = kv.get::<f64>("step_size")?;
        let mom = kv.get::<f64>("momentum")?;
        let mut c = TrainConfig {
            hidden: GroupRates {
                step_size: kv.get_or("step_size_hidden", step.unwrap_or(d.hidden.step_size))?,
                momentum: kv.get_or("momentum_hidden", mom.unwrap_or(d.hidden.momentum))?,
            },
            output: GroupRates {
                step_size: kv.get_or("step_size_output", step.unwrap_or(d.output.step_size))?,
                momentum: kv.get_or("momentum_output", mom.unwrap_or(d.output.momentum))?,
            },
            epochs: kv.get_or("epochs", d.epochs)?,
            mode: kv.get_or("mode", d.mode)?,
            patience: kv.get_or("patience", d.patience)?,
            restarts: kv.get_or("restarts", d.restarts)?,
            seed: kv.get_or("seed", d.seed)?,
            trajectory_length: kv.get_or("trajectory_length", d.trajectory_length)?,
            freeze_gamma: kv.get_or("freeze_gamma", d.freeze_gamma)?,
            ..d
        };
        if !kv.get_or("curve_control", true)? {
            c.controller = None;
        } else if let Some(w) = kv.get::<usize>("curve_window")? {
            c.controller = Some(ControllerConfig {
                window: w,
                ..ControllerConfig::default()
            });
        }
        c.validate()?;
        Ok(c)
    }

    /// Fully resolved settings, one `key = value` per line.
    pub fn describe(&self) -> String {
        format!(
            "step_size_hidden = {}\nstep_size_output = {}\nmomentum_hidden = {}\nmomentum_output = {}\n\
             epochs = {}\nmode = {}\npatience = {}\nrestarts = {}\nseed = {}\ntrajectory_length = {}\n\
             freeze_gamma = {}\ncurve_control = {}\n",
            self.hidden.step_size,
            self.output.step_size,
            self.hidden.momentum,
            self.output.momentum,
            self.epochs,
            self.mode,
            self.patience,
            self.restarts,
            self.seed,
            self.trajectory_length,
            self.freeze_gamma,
            self.controller.is_some(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EpochsExhausted,
    EarlyStop,
    Diverged,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::EpochsExhausted => "EPOCHS_EXHAUSTED",
            StopReason::EarlyStop => "EARLY_STOP",
            StopReason::Diverged => "DIVERGED",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-epoch training and cross-validation MSE with the controller's
/// decisions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearningCurve {
    pub train_mse: Vec<f64>,
    pub cv_mse: Vec<f64>,
    pub actions: Vec<CurveAction>,
}

impl LearningCurve {
    pub fn len(&self) -> usize {
        self.train_mse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_mse.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch,train_mse,cv_mse,action")?;
        for i in 0..self.len() {
            writeln!(out, "{},{:e},{:e},{}", i + 1, self.train_mse[i], self.cv_mse[i], self.actions[i])?;
        }
        Ok(())
    }
}

/// Tracks the best cross-validation error and decides when to stop.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    since_best: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
            since_best: 0,
        }
    }

    /// Record one epoch; returns true when this epoch is the new best.
    pub fn observe(&mut self, epoch: usize, cv: f64) -> bool {
        if cv < self.best {
            self.best = cv;
            self.best_epoch = Some(epoch);
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.patience > 0 && self.since_best >= self.patience
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best_epoch.map(|e| (e, self.best))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: NetworkState,
    pub curve: LearningCurve,
    pub stop_reason: StopReason,
    /// Zero-based epoch of the returned snapshot.
    pub best_epoch: usize,
    pub best_cv_mse: f64,
    pub epochs_run: usize,
    pub resets: usize,
}

/// MSE of the given roles, evaluating every episode from a fresh context.
/// Returns `None` for a role with no samples.
pub fn role_mse(state: &NetworkState, data: &TrainingSet, roles: &[Role]) -> Result<Vec<Option<f64>>> {
    let mut sse = vec![0.0; roles.len()];
    let mut count = vec![0usize; roles.len()];
    for e in &data.episodes {
        let out = state.run_sequence(&e.inputs)?;
        for (t, y) in out.iter().enumerate() {
            if let Some(k) = roles.iter().position(|&r| r == e.roles[t]) {
                sse[k] += y.iter().zip(&e.targets[t]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                count[k] += y.len();
            }
        }
    }
    Ok(sse
        .into_iter()
        .zip(count)
        .map(|(s, c)| (c > 0).then(|| s / c as f64))
        .collect())
}

/// Network outputs and targets for the samples of one role.
pub fn predict_role(state: &NetworkState, data: &TrainingSet, role: Role) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut outputs = Vec::new();
    let mut targets = Vec::new();
    for e in &data.episodes {
        let out = state.run_sequence(&e.inputs)?;
        for (t, y) in out.into_iter().enumerate() {
            if e.roles[t] == role {
                outputs.push(y);
                targets.push(e.targets[t].clone());
            }
        }
    }
    Ok((outputs, targets))
}

pub fn evaluate_role(state: &NetworkState, data: &TrainingSet, role: Role) -> Result<EvalReport> {
    let (y, d) = predict_role(state, data, role)?;
    EvalReport::evaluate(&d, &y)
}

fn check_dims(state: &NetworkState, data: &TrainingSet) -> Result<()> {
    data.validate()?;
    if data.n_inputs() != state.spec.n_inputs || data.n_outputs() != state.spec.n_outputs {
        return Err(Error::shape(
            format!("{} inputs / {} outputs", state.spec.n_inputs, state.spec.n_outputs),
            format!("{} / {}", data.n_inputs(), data.n_outputs()),
        ));
    }
    if data.count(Role::Train) == 0 {
        return Err(Error::Split("training set has no TRAIN samples".into()));
    }
    Ok(())
}

/// First phase of RBF training: place centers on the TRAIN inputs.
pub fn fit_rbf_phase(state: &mut NetworkState, data: &TrainingSet, cfg: &CompetitiveConfig) -> Result<()> {
    let (xs, _) = data.samples(Role::Train);
    let xs: Vec<Vec<f64>> = xs.into_iter().map(<[f64]>::to_vec).collect();
    let basis = fit_basis(&xs, state.spec.n_centers, cfg)?;
    state.set_basis(basis)
}

fn clamp_gammas(state: &mut NetworkState) {
    if let Some(o) = state.layout.gamma_offset {
        let n = state.spec.n_inputs;
        for g in &mut state.params[o..o + n] {
            *g = g.clamp(GAMMA_MIN, 1.0);
        }
    }
}

fn scale_rates(r: GroupRates, factor: f64) -> GroupRates {
    GroupRates {
        step_size: (r.step_size * factor).clamp(STEP_SIZE_MIN, STEP_SIZE_MAX),
        momentum: r.momentum,
    }
}

struct EpochRunner<'a> {
    data: &'a TrainingSet,
    config: &'a TrainConfig,
    momentum: Momentum,
    hidden: GroupRates,
    output: GroupRates,
    rng: rand_chacha::ChaCha8Rng,
}

impl EpochRunner<'_> {
    fn update(&mut self, state: &mut NetworkState, grad: &[f64]) {
        self.momentum.apply(&mut state.params, grad, self.hidden, self.output);
        clamp_gammas(state);
    }

    fn run(&mut self, state: &mut NetworkState) -> Result<()> {
        let batch = self.config.mode == Mode::Batch;
        let mut acc = Gradients::zeros(state.params.len());
        let mut n_scored = 0usize;
        if state.spec.topology.is_temporal() {
            let mut order: Vec<usize> = (0..self.data.episodes.len()).collect();
            if !batch {
                order.shuffle(&mut self.rng);
            }
            let traj = self.config.trajectory_length;
            for ei in order {
                let e = &self.data.episodes[ei];
                let mut ctx = RecurrentContext::new(state);
                let mut start = 0;
                while start < e.len() {
                    let end = (start + traj).min(e.len());
                    let steps: Vec<Step> = (start..end)
                        .map(|t| Step {
                            input: &e.inputs[t],
                            target: &e.targets[t],
                            scored: e.roles[t] == Role::Train,
                        })
                        .collect();
                    let scored = steps.iter().filter(|s| s.scored).count();
                    if scored == 0 {
                        for s in &steps {
                            state.step(s.input, &mut ctx);
                        }
                    } else {
                        let g = gradients::trajectory_gradients(state, &mut ctx, &steps)?;
                        if batch {
                            acc.accumulate(&g);
                            n_scored += scored;
                        } else {
                            self.update(state, &g.values);
                        }
                    }
                    start = end;
                }
            }
        } else {
            let mut idx: Vec<(usize, usize)> = self
                .data
                .episodes
                .iter()
                .enumerate()
                .flat_map(|(ei, e)| (0..e.len()).filter(move |&t| e.roles[t] == Role::Train).map(move |t| (ei, t)))
                .collect();
            if !batch {
                idx.shuffle(&mut self.rng);
            }
            let fresh = RecurrentContext::new(state);
            for (ei, t) in idx {
                let e = &self.data.episodes[ei];
                let step = Step {
                    input: &e.inputs[t],
                    target: &e.targets[t],
                    scored: true,
                };
                let g = gradients::trajectory_gradients(state, &mut fresh.clone(), &[step])?;
                if batch {
                    acc.accumulate(&g);
                    n_scored += 1;
                } else {
                    self.update(state, &g.values);
                }
            }
        }
        if batch && n_scored > 0 {
            acc.scale(1.0 / n_scored as f64);
            self.update(state, &acc.values);
        }
        Ok(())
    }
}

/// Train with the cross-validation MSE of each epoch computed from the CV
/// split (or the TRAIN split when there is no CV data).
pub fn train(state: NetworkState, data: &TrainingSet, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_monitor(state, data, config, &mut |_, _, cv| cv)
}

/// [`train`] with a hook that may replace each epoch's CV error. The hook
/// receives the zero-based epoch, the parameters after that epoch and the
/// computed CV error, and returns the value early stopping should use.
pub fn train_with_monitor(
    mut state: NetworkState,
    data: &TrainingSet,
    config: &TrainConfig,
    monitor: &mut dyn FnMut(usize, &NetworkState, f64) -> f64,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_dims(&state, data)?;
    if state.spec.topology == Topology::Rbf {
        let comp = CompetitiveConfig {
            seed: derive_seed(config.seed, &[0xB0]),
            ..config.competitive
        };
        fit_rbf_phase(&mut state, data, &comp)?;
    }
    let has_cv = data.count(Role::CrossValidation) > 0;
    if !has_cv {
        log::warn!("no cross-validation samples; early stopping monitors the training error");
    }
    let frozen: Vec<bool> = state
        .layout
        .kinds()
        .into_iter()
        .map(|k| k == ParamKind::Gamma && config.freeze_gamma)
        .collect();
    let mut runner = EpochRunner {
        data,
        config,
        momentum: Momentum::new(state.layout.groups(), frozen),
        hidden: config.hidden,
        output: config.output,
        rng: seeded_rng(derive_seed(config.seed, &[0x5F]),),
    };

    let mut curve = LearningCurve::default();
    let mut stopper = EarlyStopper::new(config.patience);
    let mut best_params = state.params.clone();
    let mut last_finite = state.params.clone();
    let mut stop_reason = StopReason::EpochsExhausted;
    let mut resets = 0usize;

    for epoch in 0..config.epochs {
        let step = runner.run(&mut state);
        let errors = match step {
            Ok(()) if state.is_finite() => {
                let m = role_mse(&state, data, &[Role::Train, Role::CrossValidation])?;
                m[0].map(|t| (t, m[1].unwrap_or(t)))
            }
            Ok(()) | Err(Error::Divergence(_)) => None,
            Err(e) => return Err(e),
        };
        let (train_mse, cv_mse) = match errors {
            Some((t, c)) if t.is_finite() && c.is_finite() && t <= config.divergence_threshold => (t, c),
            _ => {
                log::warn!("training diverged at epoch {}", epoch + 1);
                state.params.clone_from(&last_finite);
                stop_reason = StopReason::Diverged;
                break;
            }
        };
        last_finite.clone_from(&state.params);
        let cv_used = monitor(epoch, &state, cv_mse);
        curve.train_mse.push(train_mse);
        curve.cv_mse.push(cv_used);
        if stopper.observe(epoch, cv_used) {
            best_params.clone_from(&state.params);
        }

        let mut action = CurveAction::None;
        if let Some(cc) = &config.controller {
            if cc.window >= 2 && (epoch + 1) % cc.window == 0 {
                action = curve_controller(&curve.train_mse, cc);
                match action {
                    CurveAction::IncreaseStep => {
                        runner.hidden = scale_rates(runner.hidden, INCREASE_FACTOR);
                        runner.output = scale_rates(runner.output, INCREASE_FACTOR);
                    }
                    CurveAction::DecreaseStep => {
                        runner.hidden = scale_rates(runner.hidden, DECREASE_FACTOR);
                        runner.output = scale_rates(runner.output, DECREASE_FACTOR);
                    }
                    CurveAction::Reset => {
                        resets += 1;
                        let fresh = NetworkState::build(&state.spec, derive_seed(state.seed, &[0x4E5E7, resets as u64]))?;
                        state.params = fresh.params;
                        runner.momentum.clear();
                    }
                    CurveAction::None => {}
                }
            }
        }
        curve.actions.push(action);
        if stopper.should_stop() {
            stop_reason = StopReason::EarlyStop;
            break;
        }
    }

    let epochs_run = curve.len();
    let (best_epoch, best_cv_mse) = stopper.best().unwrap_or((0, f64::INFINITY));
    if stop_reason != StopReason::Diverged {
        state.params = best_params;
    }
    Ok(TrainOutcome {
        state,
        curve,
        stop_reason,
        best_epoch,
        best_cv_mse,
        epochs_run,
        resets,
    })
}

#[derive(Debug, Clone)]
pub struct MultiRestart {
    pub runs: Vec<TrainOutcome>,
    /// Index of the non-diverged run with the lowest CV error.
    pub best: Option<usize>,
}

impl MultiRestart {
    pub fn best_run(&self) -> Option<&TrainOutcome> {
        self.best.map(|i| &self.runs[i])
    }
}

/// Train `config.restarts` initializations seeded `seed, seed + 1, ...`.
pub fn multi_restart_train(spec: &NetworkSpec, data: &TrainingSet, config: &TrainConfig) -> Result<MultiRestart> {
    config.validate()?;
    let states = (0..config.restarts as u64)
        .map(|i| NetworkState::build(spec, config.seed.wrapping_add(i)))
        .collect::<Result<Vec<_>>>()?;
    multi_restart_from(states, data, config)
}

/// Train each of the given initial states; run `i` uses seed `seed + i`.
pub fn multi_restart_from(states: Vec<NetworkState>, data: &TrainingSet, config: &TrainConfig) -> Result<MultiRestart> {
    let runs = states
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let cfg = TrainConfig {
                seed: config.seed.wrapping_add(i as u64),
                ..config.clone()
            };
            train(s, data, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let best = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.stop_reason != StopReason::Diverged)
        .min_by(|a, b| a.1.best_cv_mse.total_cmp(&b.1.best_cv_mse).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i);
    Ok(MultiRestart { runs, best })
}
