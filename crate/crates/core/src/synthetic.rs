//! Seeded synthetic data: a sector × year panel whose loads follow the IPPS
//! arithmetic, plus two small reference tasks.

use rand::Rng;

use crate::dataset::{RawRow, PI_COLUMNS};
use crate::error::Result;
use crate::ipps::{estimate_load, Pollutant, Sector};
use crate::rng::seeded_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct PanelConfig {
    pub sectors: Vec<Sector>,
    pub first_year: i32,
    pub n_years: usize,
    /// Relative noise on employment growth.
    pub growth_noise: f64,
    /// Intensity to ton/yr conversion factor.
    pub scale: f64,
    pub seed: u64,
}

impl Default for PanelConfig {
    fn default() -> Self {
        PanelConfig {
            sectors: Sector::ALL.to_vec(),
            first_year: 1990,
            n_years: 12,
            growth_noise: 0.05,
            scale: 1e-3,
            seed: 7,
        }
    }
}

/// Rows ordered by sector then year. Intensities are fixed per sector;
/// employment follows a noisy growth path; output value tracks employment
/// times a sector productivity; every load equals intensity × employment ×
/// scale. TSS, which has no intensity column, uses 1.5 × the BOD intensity.
pub fn synthetic_panel(cfg: &PanelConfig) -> Result<Vec<RawRow>> {
    let mut rng = seeded_rng(cfg.seed);
    let mut rows = Vec::with_capacity(cfg.sectors.len() * cfg.n_years);
    for &sector in &cfg.sectors {
        let pi: [f64; 13] = std::array::from_fn(|_| rng.gen_range(0.5..50.0));
        let bod = pi[PI_COLUMNS.iter().position(|&p| p == Pollutant::Bod).expect("BOD column")];
        let productivity = rng.gen_range(5.0..40.0);
        let growth = rng.gen_range(-0.03..0.08);
        let mut employment: f64 = rng.gen_range(500.0..20_000.0);
        for k in 0..cfg.n_years {
            if k > 0 {
                let shock = rng.gen_range(-cfg.growth_noise..=cfg.growth_noise);
                employment = (employment * (1.0 + growth + shock)).max(1.0);
            }
            let employment = employment.round();
            let mut targets = [0.0; 14];
            for (j, &p) in crate::dataset::TARGET_COLUMNS.iter().enumerate() {
                let intensity = match PI_COLUMNS.iter().position(|&q| q == p) {
                    Some(i) => pi[i],
                    None => 1.5 * bod,
                };
                targets[j] = estimate_load(intensity, employment, cfg.scale)?;
            }
            rows.push(RawRow {
                sector,
                year: cfg.first_year + k as i32,
                employment,
                output_value: employment * productivity,
                pi,
                targets,
            });
        }
    }
    Ok(rows)
}

/// Noisy XOR corners: inputs near {0,1}², target 1 when exactly one input is
/// near 1.
pub fn xor_task(n: usize, noise: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = seeded_rng(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ds = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = ((i & 1) as f64, ((i >> 1) & 1) as f64);
        xs.push(vec![
            a + rng.gen_range(-noise..=noise),
            b + rng.gen_range(-noise..=noise),
        ]);
        ds.push(vec![if (a > 0.5) != (b > 0.5) { 1.0 } else { 0.0 }]);
    }
    (xs, ds)
}

/// `y(t) = 0.6·x(t−2) − 0.3·x(t−5) + ε` with `x ~ U[0,1]` and
/// `ε ~ U[−noise, noise]`. Returns `n` aligned (x(t), y(t)) points; the
/// five warm-up inputs are drawn but not returned.
pub fn lagged_series(n: usize, noise: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = seeded_rng(seed);
    let raw: Vec<f64> = (0..n + 5).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for t in 5..n + 5 {
        xs.push(raw[t]);
        ys.push(0.6 * raw[t - 2] - 0.3 * raw[t - 5] + rng.gen_range(-noise..=noise));
    }
    (xs, ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panel_loads_follow_ipps_arithmetic() {
        let cfg = PanelConfig::default();
        let rows = synthetic_panel(&cfg).unwrap();
        assert_eq!(rows.len(), 120);
        for r in &rows {
            let so2 = r.pi[0] * r.employment * cfg.scale;
            assert!((r.target(Pollutant::So2) - so2).abs() <= 1e-12 * so2);
            assert!(r.targets.iter().all(|&v| v > 0.0));
        }
        assert_eq!(synthetic_panel(&cfg).unwrap(), rows);
    }

    #[test]
    fn lagged_series_definition() {
        let (x, y) = lagged_series(50, 0.0, 3);
        assert_eq!(x.len(), 50);
        for t in 5..50 {
            assert!((y[t] - (0.6 * x[t - 2] - 0.3 * x[t - 5])).abs() < 1e-15);
        }
    }

    #[test]
    fn xor_targets() {
        let (x, d) = xor_task(8, 0.1, 1);
        for (xi, di) in x.iter().zip(&d) {
            let a = xi[0] > 0.5;
            let b = xi[1] > 0.5;
            assert_eq!(di[0], if a != b { 1.0 } else { 0.0 });
        }
    }
}
