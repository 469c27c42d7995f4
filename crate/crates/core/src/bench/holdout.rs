use std::collections::BTreeMap;
use std::io::Write;

use crate::dataset::{ClampCounter, Normalizer, RawRow, TARGET_COLUMNS};
use crate::error::{Error, Result};
use crate::ipps::Pollutant;
use crate::metrics::trend_item;
use crate::network::NetworkState;

/// One pollutant line. `desired` is the network's load, `actual` the IPPS
/// load, both summed over the holdout rows in ton/yr.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutRow {
    pub pollutant: Pollutant,
    pub desired: f64,
    pub actual: f64,
    /// `None` when either value is not positive.
    pub trend_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutTable {
    pub rows: Vec<HoldoutRow>,
    /// Mean over rows with a defined trend.
    pub mean_trend: Option<f64>,
    /// Denormalized network output for each input row, target-column order.
    pub predictions: Vec<Vec<f64>>,
}

impl HoldoutTable {
    /// Build the table from already aggregated loads.
    pub fn from_pairs(pairs: &[(Pollutant, f64, f64)]) -> Self {
        let rows: Vec<HoldoutRow> = pairs
            .iter()
            .map(|&(pollutant, desired, actual)| HoldoutRow {
                pollutant,
                desired,
                actual,
                trend_pct: trend_item(desired, actual).ok(),
            })
            .collect();
        let defined: Vec<f64> = rows.iter().filter_map(|r| r.trend_pct).collect();
        let mean_trend = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        HoldoutTable {
            rows,
            mean_trend,
            predictions: Vec::new(),
        }
    }
}

/// Run `state` over `rows` and compare its denormalized loads with the IPPS
/// loads recorded in the rows. Rows of the same sector are fed in year
/// order so temporal models see a coherent sequence.
pub fn holdout_predict(state: &NetworkState, normalizer: &Normalizer, rows: &[RawRow]) -> Result<HoldoutTable> {
    if normalizer.input_width() != state.spec.n_inputs || normalizer.targets.len() != state.spec.n_outputs {
        return Err(Error::Compatibility(format!(
            "normalizer produces {} inputs / {} targets but the model expects {} / {}",
            normalizer.input_width(),
            normalizer.targets.len(),
            state.spec.n_inputs,
            state.spec.n_outputs
        )));
    }
    if rows.is_empty() {
        return Err(Error::Parameter("no holdout rows".into()));
    }
    let mut clamped = ClampCounter::default();
    let encoded: Vec<Vec<f64>> = rows.iter().map(|r| normalizer.encode(r, &mut clamped).input).collect();
    if clamped.0 > 0 {
        log::warn!("{} holdout values fell outside the training range and were clamped", clamped.0);
    }
    let mut by_sector: BTreeMap<_, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        by_sector.entry(r.sector.index()).or_default().push(i);
    }
    let mut predictions = vec![Vec::new(); rows.len()];
    for idx in by_sector.values_mut() {
        idx.sort_by_key(|&i| (rows[i].year, i));
        let seq: Vec<&[f64]> = idx.iter().map(|&i| encoded[i].as_slice()).collect();
        let out = state.run_sequence(&seq)?;
        for (&i, y) in idx.iter().zip(out) {
            predictions[i] = normalizer.denormalize_targets(&y);
        }
    }
    let pairs: Vec<(Pollutant, f64, f64)> = Pollutant::ALL
        .iter()
        .map(|&p| {
            let j = TARGET_COLUMNS.iter().position(|&q| q == p).expect("every pollutant is a target");
            let desired = predictions.iter().map(|y| y[j]).sum();
            let actual = rows.iter().map(|r| r.target(p)).sum();
            (p, desired, actual)
        })
        .collect();
    let mut table = HoldoutTable::from_pairs(&pairs);
    table.predictions = predictions;
    Ok(table)
}

/// `pollutant,desired,actual,trend_pct` with a closing `MEAN` line.
pub fn write_holdout_csv<W: Write>(mut out: W, table: &HoldoutTable) -> std::io::Result<()> {
    writeln!(out, "pollutant,desired,actual,trend_pct")?;
    let pct = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.3}"));
    for r in &table.rows {
        writeln!(out, "{},{},{},{}", r.pollutant, r.desired, r.actual, pct(r.trend_pct))?;
    }
    writeln!(out, "MEAN,,,{}", pct(table.mean_trend))
}
