//! Unsupervised placement of RBF centers by competitive learning with a
//! conscience, followed by a nearest-neighbour width rule.
//!
//! Each unit keeps a running estimate `p_i` of how often it wins. The
//! winner for a sample is the unit minimizing
//! `‖x − c_i‖ − β·(1/N − p_i)`, so units that win too often are handicapped
//! and idle units get pulled into the data.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::network::RbfBasis;
use crate::rng::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompetitiveConfig {
    /// Passes over the training inputs.
    pub passes: usize,
    /// Learning rate at the first and last pass; decays linearly.
    pub rate_start: f64,
    pub rate_end: f64,
    /// Conscience bias weight β; 0 disables the conscience.
    pub bias: f64,
    /// Smoothing rate of the win-frequency estimates.
    pub freq_rate: f64,
    pub seed: u64,
}

impl Default for CompetitiveConfig {
    fn default() -> Self {
        CompetitiveConfig {
            passes: 40,
            rate_start: 0.1,
            rate_end: 0.001,
            bias: 10.0,
            freq_rate: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompetitiveFit {
    pub centers: Vec<Vec<f64>>,
    /// Wins per unit over the whole run.
    pub wins: Vec<usize>,
    /// Units that never won and were moved onto the worst-represented sample.
    pub reseated: usize,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn rbf_fit_centers(inputs: &[Vec<f64>], n_centers: usize, cfg: &CompetitiveConfig) -> Result<CompetitiveFit> {
    if n_centers == 0 {
        return Err(Error::Parameter("need at least one center".into()));
    }
    if n_centers > inputs.len() {
        return Err(Error::Parameter(format!(
            "{n_centers} centers requested but only {} training inputs",
            inputs.len()
        )));
    }
    let mut rng = seeded_rng(cfg.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.shuffle(&mut rng);
    let mut centers: Vec<Vec<f64>> = order[..n_centers].iter().map(|&i| inputs[i].clone()).collect();
    let target_share = 1.0 / n_centers as f64;
    let mut freq = vec![target_share; n_centers];
    let mut wins = vec![0usize; n_centers];

    let passes = cfg.passes.max(1);
    for pass in 0..passes {
        let frac = if passes == 1 { 0.0 } else { pass as f64 / (passes - 1) as f64 };
        let rate = cfg.rate_start + (cfg.rate_end - cfg.rate_start) * frac;
        order.shuffle(&mut rng);
        for &s in &order {
            let x = &inputs[s];
            let winner = (0..n_centers)
                .map(|i| (i, dist(x, &centers[i]) - cfg.bias * (target_share - freq[i])))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .map(|(i, _)| i)
                .expect("n_centers >= 1");
            for (c, &xv) in centers[winner].iter_mut().zip(x) {
                *c += rate * (xv - *c);
            }
            for (i, f) in freq.iter_mut().enumerate() {
                let y = if i == winner { 1.0 } else { 0.0 };
                *f += cfg.freq_rate * (y - *f);
            }
            wins[winner] += 1;
        }
    }

    // Any unit that never won goes to the sample farthest from every center.
    let mut reseated = 0;
    for i in 0..n_centers {
        if wins[i] > 0 {
            continue;
        }
        let far = inputs
            .iter()
            .enumerate()
            .map(|(s, x)| (s, centers.iter().map(|c| dist(x, c)).fold(f64::INFINITY, f64::min)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(s, _)| s)
            .expect("inputs nonempty");
        centers[i] = inputs[far].clone();
        wins[i] = 1;
        reseated += 1;
    }
    Ok(CompetitiveFit {
        centers,
        wins,
        reseated,
    })
}

/// Width of each unit: mean distance to its two nearest other centers
/// (one when only two exist). Zero widths fall back to the mean positive
/// width, or 1.
pub fn nearest_center_widths(centers: &[Vec<f64>]) -> Vec<f64> {
    let n = centers.len();
    if n < 2 {
        return vec![1.0; n];
    }
    let mut widths: Vec<f64> = (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist(&centers[i], &centers[j])).collect();
            d.sort_by(f64::total_cmp);
            let k = d.len().min(2);
            d[..k].iter().sum::<f64>() / k as f64
        })
        .collect();
    let positive: Vec<f64> = widths.iter().copied().filter(|&w| w > 0.0).collect();
    let fallback = if positive.is_empty() {
        1.0
    } else {
        positive.iter().sum::<f64>() / positive.len() as f64
    };
    for w in widths.iter_mut().filter(|w| !(**w > 0.0)) {
        *w = fallback;
    }
    widths
}

pub fn fit_basis(inputs: &[Vec<f64>], n_centers: usize, cfg: &CompetitiveConfig) -> Result<RbfBasis> {
    let fit = rbf_fit_centers(inputs, n_centers, cfg)?;
    let widths = nearest_center_widths(&fit.centers);
    Ok(RbfBasis {
        centers: fit.centers,
        widths,
    })
}
