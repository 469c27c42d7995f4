//! Learning-curve control: inspect the recent training error and decide
//! whether to speed up, slow down, or restart.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveAction {
    /// Plateau: multiply step sizes by [`INCREASE_FACTOR`].
    IncreaseStep,
    /// Oscillation: multiply step sizes by [`DECREASE_FACTOR`].
    DecreaseStep,
    /// Error rising throughout the window: re-randomize and clear momentum.
    Reset,
    None,
}

impl CurveAction {
    pub fn name(self) -> &'static str {
        match self {
            CurveAction::IncreaseStep => "INCREASE_STEP",
            CurveAction::DecreaseStep => "DECREASE_STEP",
            CurveAction::Reset => "RESET",
            CurveAction::None => "NONE",
        }
    }
}

impl fmt::Display for CurveAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const INCREASE_FACTOR: f64 = 1.05;
pub const DECREASE_FACTOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub window: usize,
    pub flat_eps: f64,
    pub osc_threshold: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            window: 50,
            flat_eps: 1e-5,
            osc_threshold: 0.5,
        }
    }
}

/// Least-squares slope of `ys` against `0, 1, 2, ...`.
fn ls_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Decide on the last `window` training errors.
///
/// Checks, in order: every first difference positive → `Reset`; share of
/// sign alternations between consecutive nonzero differences above
/// `osc_threshold` → `DecreaseStep`; |least-squares slope| below `flat_eps`
/// → `IncreaseStep`; otherwise `None`. Curves shorter than the window
/// yield `None`.
pub fn curve_controller(train_mse: &[f64], cfg: &ControllerConfig) -> CurveAction {
    if cfg.window < 2 || train_mse.len() < cfg.window {
        return CurveAction::None;
    }
    let w = &train_mse[train_mse.len() - cfg.window..];
    let diffs: Vec<f64> = w.windows(2).map(|p| p[1] - p[0]).collect();
    if diffs.iter().all(|&d| d > 0.0) {
        return CurveAction::Reset;
    }
    let signs: Vec<f64> = diffs.iter().filter(|&&d| d != 0.0).map(|d| d.signum()).collect();
    if signs.len() >= 2 {
        let flips = signs.windows(2).filter(|p| p[0] != p[1]).count();
        if flips as f64 / (signs.len() - 1) as f64 > cfg.osc_threshold {
            return CurveAction::DecreaseStep;
        }
    }
    if ls_slope(w).abs() < cfg.flat_eps {
        return CurveAction::IncreaseStep;
    }
    CurveAction::None
}
