//! Forecast accuracy statistics.
//!
//! MAPE is computed per series and then averaged over series; median APE and
//! its interquartile range are taken over the pooled APEs of every series and
//! month; RMSE pools every squared error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Sign convention of the percentage error: `PE = 100·(y − ŷ)/y`, so a
/// positive PE means the forecast fell below the actual value.
pub const PE_CONVENTION: &str = "PE = 100*(y - y_hat)/y; positive means under-forecast";

/// Absolute percentage error `100·|y − ŷ|/|y|`.
pub fn ape(y: f64, y_hat: f64) -> Result<f64> {
    if y == 0.0 {
        return Err(Error::ZeroActual(format!("y = {y}, y_hat = {y_hat}")));
    }
    Ok(100.0 * (y - y_hat).abs() / y.abs())
}

/// Signed percentage error, see [`PE_CONVENTION`].
pub fn pe(y: f64, y_hat: f64) -> Result<f64> {
    if y == 0.0 {
        return Err(Error::ZeroActual(format!("y = {y}, y_hat = {y_hat}")));
    }
    Ok(100.0 * (y - y_hat) / y)
}

/// Linearly interpolated quantile of sorted data (the default of most
/// statistics packages).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub median_ape: f64,
    pub mape: f64,
    pub iqr_ape: f64,
    pub rmse: f64,
}

/// Moments of the percentage errors. Standard deviation uses the population
/// normalization; kurtosis is the plain (non-excess) fourth standardized
/// moment. Skewness and kurtosis are 0 when all errors coincide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeStats {
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

impl PeStats {
    pub fn from_errors(pes: &[f64]) -> Result<Self> {
        if pes.is_empty() {
            return Err(Error::Empty("no percentage errors".into()));
        }
        let m = mean(pes);
        let central = |p: i32| pes.iter().map(|x| (x - m).powi(p)).sum::<f64>() / pes.len() as f64;
        let m2 = central(2);
        let (skewness, kurtosis) = if m2 > 0.0 {
            (central(3) / m2.powf(1.5), central(4) / (m2 * m2))
        } else {
            (0.0, 0.0)
        };
        Ok(Self {
            mean: m,
            median: quantile_sorted(&sorted(pes), 0.5),
            std: m2.sqrt(),
            skewness,
            kurtosis,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub id: String,
    pub errors: ErrorSummary,
    pub pe: PeStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pooled: ErrorSummary,
    pub pe: PeStats,
    /// MAPE at each forecast step, averaged over series.
    pub per_step_mape: Vec<f64>,
    pub series: Vec<SeriesReport>,
}

struct SeriesErrors {
    apes: Vec<f64>,
    pes: Vec<f64>,
    squared: Vec<f64>,
}

fn series_errors(id: &str, forecast: &[f64], actual: &[f64]) -> Result<SeriesErrors> {
    let mut out = SeriesErrors {
        apes: Vec::with_capacity(actual.len()),
        pes: Vec::with_capacity(actual.len()),
        squared: Vec::with_capacity(actual.len()),
    };
    for (&y_hat, &y) in forecast.iter().zip(actual) {
        if y == 0.0 {
            return Err(Error::ZeroActual(id.to_string()));
        }
        if !y_hat.is_finite() || !y.is_finite() {
            return Err(Error::NonFinite(format!("forecast or actual of {id}")));
        }
        out.apes.push(ape(y, y_hat)?);
        out.pes.push(pe(y, y_hat)?);
        out.squared.push((y - y_hat) * (y - y_hat));
    }
    Ok(out)
}

fn summarize(apes: &[f64], squared: &[f64], mape: f64) -> ErrorSummary {
    let s = sorted(apes);
    ErrorSummary {
        median_ape: quantile_sorted(&s, 0.5),
        mape,
        iqr_ape: quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25),
        rmse: mean(squared).sqrt(),
    }
}

/// Compares forecasts with actuals; both maps must hold the same series with
/// equally long, non-empty vectors.
pub fn evaluate<T: Real>(forecasts: &BTreeMap<String, Vec<T>>, actuals: &BTreeMap<String, Vec<T>>) -> Result<EvalReport> {
    if forecasts.is_empty() {
        return Err(Error::Empty("no forecasts to evaluate".into()));
    }
    for id in forecasts.keys() {
        if !actuals.contains_key(id) {
            return Err(Error::DimensionMismatch(format!("forecast for {id} has no actuals")));
        }
    }
    for id in actuals.keys() {
        if !forecasts.contains_key(id) {
            return Err(Error::DimensionMismatch(format!("actuals for {id} have no forecast")));
        }
    }
    let horizon = forecasts.values().next().map_or(0, Vec::len);
    if horizon == 0 {
        return Err(Error::Empty("zero-length forecasts".into()));
    }

    let mut series = Vec::with_capacity(forecasts.len());
    let mut all_apes = Vec::new();
    let mut all_pes = Vec::new();
    let mut all_squared = Vec::new();
    let mut step_sums = vec![0.0; horizon];
    for (id, f) in forecasts {
        let a = &actuals[id];
        if f.len() != horizon || a.len() != horizon {
            return Err(Error::DimensionMismatch(format!(
                "{id}: forecast length {}, actual length {}, expected {horizon}",
                f.len(),
                a.len()
            )));
        }
        let f: Vec<f64> = f.iter().map(|v| v.as_f64()).collect();
        let a: Vec<f64> = a.iter().map(|v| v.as_f64()).collect();
        let e = series_errors(id, &f, &a)?;
        for (sum, x) in step_sums.iter_mut().zip(&e.apes) {
            *sum += x;
        }
        series.push(SeriesReport {
            id: id.clone(),
            errors: summarize(&e.apes, &e.squared, mean(&e.apes)),
            pe: PeStats::from_errors(&e.pes)?,
        });
        all_apes.extend(e.apes);
        all_pes.extend(e.pes);
        all_squared.extend(e.squared);
    }
    let n = series.len() as f64;
    let mape = series.iter().map(|s| s.errors.mape).sum::<f64>() / n;
    Ok(EvalReport {
        pooled: summarize(&all_apes, &all_squared, mape),
        pe: PeStats::from_errors(&all_pes)?,
        per_step_mape: step_sums.into_iter().map(|s| s / n).collect(),
        series,
    })
}

impl EvalReport {
    /// Aligned text table: one row per series and a pooled row.
    pub fn to_table(&self) -> String {
        let width = self.series.iter().map(|s| s.id.len()).max().unwrap_or(0).max("pooled".len());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>10}  {:>8}  {:>8}  {:>12}  {:>8}",
            "series", "median_ape", "mape", "iqr_ape", "rmse", "pe_mean"
        );
        let mut row = |name: &str, e: &ErrorSummary, pe: &PeStats| {
            let _ = writeln!(
                out,
                "{name:<width$}  {:>10.2}  {:>8.2}  {:>8.2}  {:>12.2}  {:>8.2}",
                e.median_ape, e.mape, e.iqr_ape, e.rmse, pe.mean
            );
        };
        for s in &self.series {
            row(&s.id, &s.errors, &s.pe);
        }
        row("pooled", &self.pooled, &self.pe);
        let p = &self.pe;
        let _ = writeln!(
            out,
            "\nPE ({PE_CONVENTION}): mean {:.3}  median {:.3}  std {:.3}  skewness {:.3}  kurtosis {:.3}",
            p.mean, p.median, p.std, p.skewness, p.kurtosis
        );
        out
    }

    /// `id,mape` rows in series order.
    pub fn write_series_mape<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "mape"])?;
        for s in &self.series {
            w.write_record([s.id.clone(), s.errors.mape.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// `step,mape` rows, one per forecast step.
    pub fn write_step_mape<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["step", "mape"])?;
        for (h, m) in self.per_step_mape.iter().enumerate() {
            w.write_record([(h + 1).to_string(), m.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn map(rows: &[(&str, Vec<f64>)]) -> BTreeMap<String, Vec<f64>> {
        rows.iter().map(|(id, v)| (id.to_string(), v.clone())).collect()
    }

    #[test]
    fn ape_examples() {
        assert_eq!(ape(100.0, 100.0).unwrap(), 0.0);
        assert_relative_eq!(ape(100.0, 110.0).unwrap(), 10.0, max_relative = 1e-12);
        assert_eq!(ape(200.0, 150.0).unwrap(), 25.0);
        assert!(ape(0.0, 1.0).is_err());
    }

    #[test]
    fn perfect_forecasts_give_zero_report() {
        let a = map(&[("A", vec![100.0; 12]), ("B", (1..=12).map(f64::from).collect())]);
        let r = evaluate(&a, &a).unwrap();
        assert_eq!(
            r.pooled,
            ErrorSummary {
                median_ape: 0.0,
                mape: 0.0,
                iqr_ape: 0.0,
                rmse: 0.0
            }
        );
        assert_eq!(r.pe.mean, 0.0);
        assert_eq!(r.pe.kurtosis, 0.0);
        assert_eq!(r.per_step_mape, vec![0.0; 12]);
    }

    #[test]
    fn constant_over_forecast() {
        let r = evaluate(&map(&[("A", vec![110.0; 12])]), &map(&[("A", vec![100.0; 12])])).unwrap();
        assert_relative_eq!(r.pooled.mape, 10.0, max_relative = 1e-12);
        assert_relative_eq!(r.pooled.rmse, 10.0, max_relative = 1e-12);
        assert_relative_eq!(r.pe.mean, -10.0, max_relative = 1e-12);
        assert_eq!(r.pe.std, 0.0);
    }

    #[test]
    fn mape_is_mean_of_series_mapes_but_median_is_pooled() {
        // A: APEs 1..12; B: all 50.
        let f = map(&[("A", (1..=12).map(|k| 100.0 + k as f64).collect()), ("B", vec![150.0; 12])]);
        let a = map(&[("A", vec![100.0; 12]), ("B", vec![100.0; 12])]);
        let r = evaluate(&f, &a).unwrap();
        assert_relative_eq!(r.pooled.mape, (6.5 + 50.0) / 2.0, max_relative = 1e-12);
        // pooled APEs: 1..12 then twelve 50s; sorted, positions 11 and 12 are 12 and 50
        assert_relative_eq!(r.pooled.median_ape, 31.0, max_relative = 1e-12);
        assert_relative_eq!(r.series[0].errors.median_ape, 6.5, max_relative = 1e-12);
        assert_relative_eq!(r.per_step_mape[0], 25.5, max_relative = 1e-12);
    }

    #[test]
    fn moments_match_reference_values() {
        // reference values from scipy.stats (population std, non-excess kurtosis)
        let pes = [-3.0, 1.0, 2.0, 2.5, 10.0];
        let s = PeStats::from_errors(&pes).unwrap();
        assert_relative_eq!(s.mean, 2.5, max_relative = 1e-12);
        assert_relative_eq!(s.median, 2.0, max_relative = 1e-12);
        assert_relative_eq!(s.std, 4.219004621945797, max_relative = 1e-12);
        assert_relative_eq!(s.skewness, 0.6711205433217654, max_relative = 1e-10);
        assert_relative_eq!(s.kurtosis, 2.578115136977654, max_relative = 1e-10);
        let q = sorted(&[7.0, 1.0, 3.0, 5.0]);
        assert_relative_eq!(quantile_sorted(&q, 0.25), 2.5);
        assert_relative_eq!(quantile_sorted(&q, 0.75), 5.5);
    }

    #[test]
    fn mismatches_are_errors() {
        let a = map(&[("A", vec![100.0; 12])]);
        assert!(evaluate(&map(&[("B", vec![100.0; 12])]), &a).is_err());
        assert!(evaluate(&map(&[("A", vec![100.0; 11])]), &a).is_err());
        assert!(evaluate(&a, &map(&[("A", vec![100.0; 12]), ("B", vec![1.0; 12])])).is_err());
        assert!(evaluate(&a, &map(&[("A", vec![0.0; 12])])).is_err());
    }

    #[test]
    fn csv_outputs() {
        let f = map(&[("A", vec![110.0; 12]), ("B", vec![95.0; 12])]);
        let a = map(&[("A", vec![100.0; 12]), ("B", vec![100.0; 12])]);
        let r = evaluate(&f, &a).unwrap();
        let mut buf = Vec::new();
        r.write_step_mape(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 13);
        assert!(text.starts_with("step,mape\n1,7.5"));
        let mut buf = Vec::new();
        r.write_series_mape(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
        assert!(r.to_table().contains("pooled"));
    }

    fn fixture() -> impl Strategy<Value = Vec<(Vec<f64>, Vec<f64>)>> {
        prop::collection::vec(
            (prop::collection::vec(50.0f64..500.0, 12), prop::collection::vec(50.0f64..500.0, 12)),
            1..6,
        )
    }

    fn maps(rows: &[(Vec<f64>, Vec<f64>)], scale: f64, rename: impl Fn(usize) -> String) -> (BTreeMap<String, Vec<f64>>, BTreeMap<String, Vec<f64>>) {
        let f = rows.iter().enumerate().map(|(i, (f, _))| (rename(i), f.iter().map(|v| v * scale).collect())).collect();
        let a = rows.iter().enumerate().map(|(i, (_, a))| (rename(i), a.iter().map(|v| v * scale).collect())).collect();
        (f, a)
    }

    proptest! {
        #[test]
        fn order_and_scale_invariance(rows in fixture(), c in 0.1f64..10.0) {
            let (f, a) = maps(&rows, 1.0, |i| format!("S{i}"));
            let base = evaluate(&f, &a).unwrap();
            let n = rows.len();
            let (f2, a2) = maps(&rows, c, |i| format!("S{}", n - i));
            let other = evaluate(&f2, &a2).unwrap();
            prop_assert!((base.pooled.mape - other.pooled.mape).abs() < 1e-9);
            prop_assert!((base.pooled.median_ape - other.pooled.median_ape).abs() < 1e-9);
            prop_assert!((base.pooled.rmse * c - other.pooled.rmse).abs() < 1e-9 * other.pooled.rmse.max(1.0));
            let apes: Vec<f64> = rows.iter().flat_map(|(f, a)| f.iter().zip(a).map(|(f, a)| ape(*a, *f).unwrap())).collect();
            let lo = apes.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = apes.iter().cloned().fold(0.0, f64::max);
            for v in [base.pooled.mape, base.pooled.median_ape] {
                prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
            prop_assert!(base.pooled.iqr_ape >= 0.0 && base.pooled.rmse >= 0.0);
        }
    }
}
