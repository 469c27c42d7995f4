//! Performance measures for multi-output regression.
//!
//! Matrices are row-per-exemplar: `N` rows of `P` outputs each.

use crate::error::{Error, Result};

fn check_shapes<A: AsRef<[f64]>, B: AsRef<[f64]>>(desired: &[A], output: &[B]) -> Result<(usize, usize)> {
    let n = desired.len();
    if n == 0 {
        return Err(Error::shape("at least one exemplar", 0));
    }
    if output.len() != n {
        return Err(Error::shape(format!("{n} output rows"), output.len()));
    }
    let p = desired[0].as_ref().len();
    if p == 0 {
        return Err(Error::shape("at least one output", 0));
    }
    for (d, y) in desired.iter().zip(output) {
        if d.as_ref().len() != p || y.as_ref().len() != p {
            return Err(Error::shape(format!("{p} columns"), format!("{} / {}", d.as_ref().len(), y.as_ref().len())));
        }
    }
    Ok((n, p))
}

/// Mean of squared elementwise differences over all `N × P` entries.
pub fn mse<A: AsRef<[f64]>, B: AsRef<[f64]>>(desired: &[A], output: &[B]) -> Result<f64> {
    let (n, p) = check_shapes(desired, output)?;
    let sse: f64 = desired
        .iter()
        .zip(output)
        .flat_map(|(d, y)| d.as_ref().iter().zip(y.as_ref()).map(|(a, b)| (a - b) * (a - b)))
        .sum();
    Ok(sse / (n * p) as f64)
}

/// `P·N·MSE / Σ_j (Σ_i d_ij² − (Σ_i d_ij)² / N)`.
pub fn nmse<A: AsRef<[f64]>, B: AsRef<[f64]>>(desired: &[A], output: &[B]) -> Result<f64> {
    let (n, p) = check_shapes(desired, output)?;
    let m = mse(desired, output)?;
    let mut denom = 0.0;
    for j in 0..p {
        let (mut s, mut s2) = (0.0, 0.0);
        for d in desired {
            let v = d.as_ref()[j];
            s += v;
            s2 += v * v;
        }
        denom += s2 - s * s / n as f64;
    }
    if !(denom > 0.0) {
        return Err(Error::UndefinedMetric("NMSE: desired signal has zero variance".into()));
    }
    Ok(p as f64 * (n as f64 * m) / denom)
}

/// Signed mean relative error `(1/n) Σ (A_t − F_t) / A_t`. Over- and
/// under-predictions cancel; see [`mae_abs`] for the absolute version.
pub fn mae_paper(actual: &[f64], forecast: &[f64]) -> Result<f64> {
    if actual.len() != forecast.len() || actual.is_empty() {
        return Err(Error::shape(format!("{} forecasts", actual.len()), forecast.len()));
    }
    if actual.contains(&0.0) {
        return Err(Error::Domain("relative error undefined where the actual value is 0".into()));
    }
    let s: f64 = actual.iter().zip(forecast).map(|(a, f)| (a - f) / a).sum();
    Ok(s / actual.len() as f64)
}

/// `(1/n) Σ |A_t − F_t|`.
pub fn mae_abs(actual: &[f64], forecast: &[f64]) -> Result<f64> {
    if actual.len() != forecast.len() || actual.is_empty() {
        return Err(Error::shape(format!("{} forecasts", actual.len()), forecast.len()));
    }
    let s: f64 = actual.iter().zip(forecast).map(|(a, f)| (a - f).abs()).sum();
    Ok(s / actual.len() as f64)
}

/// Linear correlation coefficient.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape(format!("{} values", x.len()), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedMetric("correlation needs at least 2 points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedMetric("correlation with a zero-variance series".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Per-item `100 · min(d, a) / max(d, a)` and its mean.
pub fn trend_accuracy(desired: &[f64], actual: &[f64]) -> Result<(Vec<f64>, f64)> {
    if desired.len() != actual.len() || desired.is_empty() {
        return Err(Error::shape(format!("{} actual values", desired.len()), actual.len()));
    }
    let per_item = desired
        .iter()
        .zip(actual)
        .map(|(&d, &a)| trend_item(d, a))
        .collect::<Result<Vec<_>>>()?;
    let mean = per_item.iter().sum::<f64>() / per_item.len() as f64;
    Ok((per_item, mean))
}

pub fn trend_item(desired: f64, actual: f64) -> Result<f64> {
    if !(desired > 0.0 && actual > 0.0) || !desired.is_finite() || !actual.is_finite() {
        return Err(Error::Domain(format!(
            "trend accuracy needs positive values, got desired={desired} actual={actual}"
        )));
    }
    Ok(100.0 * desired.min(actual) / desired.max(actual))
}

/// All measures for one evaluation. Metrics that are undefined on the input
/// (zero variance, zero actual value) are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mse: f64,
    pub nmse: Option<f64>,
    pub mae_paper: Option<f64>,
    pub mae_abs: f64,
    pub min_abs_err: f64,
    pub max_abs_err: f64,
    pub r_per_output: Vec<Option<f64>>,
    pub r_mean: Option<f64>,
    pub n_exemplars: usize,
    pub n_outputs: usize,
}

impl EvalReport {
    pub fn evaluate<A: AsRef<[f64]>, B: AsRef<[f64]>>(desired: &[A], output: &[B]) -> Result<Self> {
        let (n, p) = check_shapes(desired, output)?;
        let flat_d: Vec<f64> = desired.iter().flat_map(|d| d.as_ref().iter().copied()).collect();
        let flat_y: Vec<f64> = output.iter().flat_map(|y| y.as_ref().iter().copied()).collect();
        let abs: Vec<f64> = flat_d.iter().zip(&flat_y).map(|(d, y)| (d - y).abs()).collect();
        let r_per_output: Vec<Option<f64>> = (0..p)
            .map(|j| {
                let d: Vec<f64> = desired.iter().map(|r| r.as_ref()[j]).collect();
                let y: Vec<f64> = output.iter().map(|r| r.as_ref()[j]).collect();
                pearson_r(&d, &y).ok()
            })
            .collect();
        let defined: Vec<f64> = r_per_output.iter().flatten().copied().collect();
        let r_mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        Ok(EvalReport {
            mse: mse(desired, output)?,
            nmse: nmse(desired, output).ok(),
            mae_paper: mae_paper(&flat_d, &flat_y).ok(),
            mae_abs: mae_abs(&flat_d, &flat_y)?,
            min_abs_err: abs.iter().copied().fold(f64::INFINITY, f64::min),
            max_abs_err: abs.iter().copied().fold(0.0, f64::max),
            r_per_output,
            r_mean,
            n_exemplars: n,
            n_outputs: p,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[vec![1.0, 2.0]], &[vec![1.0, 2.0]]).unwrap(), 0.0);
        assert_eq!(mse(&[vec![1.0, 0.0]], &[vec![0.0, 0.0]]).unwrap(), 0.5);
        assert!(mse(&[vec![1.0]], &[vec![1.0, 2.0]]).is_err());
        let empty: [Vec<f64>; 0] = [];
        assert!(mse(&empty, &empty).is_err());
    }

    #[test]
    fn mse_decreases_toward_target() {
        let d = [vec![1.0, -2.0, 3.0]];
        let y0 = [0.5, 4.0, -1.0];
        let mut last = f64::INFINITY;
        for k in 0..=10 {
            let a = k as f64 / 10.0;
            let y: Vec<f64> = y0.iter().zip(&d[0]).map(|(y, t)| y + a * (t - y)).collect();
            let m = mse(&d, &[y]).unwrap();
            assert!(m < last || m == 0.0);
            last = m;
        }
    }

    #[test]
    fn nmse_examples() {
        let d = [vec![1.0], vec![2.0], vec![3.0]];
        let y = [vec![2.0], vec![2.0], vec![2.0]];
        assert!((nmse(&d, &y).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(nmse(&d, &d).unwrap(), 0.0);
        let c = [vec![5.0], vec![5.0]];
        assert!(matches!(nmse(&c, &[vec![1.0], vec![2.0]]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn mae_examples() {
        assert!((mae_paper(&[100.0], &[90.0]).unwrap() - 0.10).abs() < 1e-15);
        assert_eq!(mae_paper(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert!(mae_paper(&[10.0, 10.0], &[8.0, 12.0]).unwrap().abs() < 1e-15);
        assert_eq!(mae_abs(&[10.0, 10.0], &[8.0, 12.0]).unwrap(), 2.0);
        assert!(matches!(mae_paper(&[0.0, 1.0], &[1.0, 1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0];
        assert!((pearson_r(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson_r(&x, &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-15);
        // 3 / sqrt(2 * 14/3)
        let expected = 3.0 / (2.0_f64 * 14.0 / 3.0).sqrt();
        assert!((pearson_r(&x, &[1.0, 2.0, 4.0]).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.98198).abs() < 1e-5);
        assert!(matches!(pearson_r(&x, &[2.0, 2.0, 2.0]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn trend_examples() {
        let (per, mean) = trend_accuracy(&[5.0, 7.0], &[5.0, 7.0]).unwrap();
        assert_eq!(per, vec![100.0, 100.0]);
        assert_eq!(mean, 100.0);
        let so2 = trend_item(101.606, 89.511).unwrap();
        assert!((so2 - 88.10).abs() < 0.01);
        assert!(trend_item(0.0, 1.0).is_err());
        assert!(trend_item(1.0, -1.0).is_err());
    }

    #[test]
    fn eval_report_fields() {
        let d = [vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 5.0]];
        let y = [vec![1.1, 2.0], vec![1.9, 4.5], vec![3.0, 5.0]];
        let r = EvalReport::evaluate(&d, &y).unwrap();
        assert_eq!((r.n_exemplars, r.n_outputs), (3, 2));
        assert!(r.min_abs_err == 0.0 && (r.max_abs_err - 0.5).abs() < 1e-15);
        assert!(r.r_per_output.iter().all(|v| v.unwrap() <= 1.0));
        assert!(r.nmse.is_some() && r.mae_paper.is_some());
    }
}
