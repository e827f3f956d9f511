//! Monthly demand series: loading, validation, train/valid/test splitting and
//! a synthetic generator used for tests and demos.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::HORIZON;

/// A calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidMonth(month));
        }
        Ok(Self { year, month })
    }

    /// Months since year 0, January.
    pub fn ordinal(self) -> i64 {
        i64::from(self.year) * 12 + i64::from(self.month) - 1
    }

    pub fn from_ordinal(ordinal: i64) -> Self {
        Self {
            year: ordinal.div_euclid(12) as i32,
            month: (ordinal.rem_euclid(12) + 1) as u32,
        }
    }

    pub fn offset(self, months: i64) -> Self {
        Self::from_ordinal(self.ordinal() + months)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{:02}", self.year, self.month)
    }
}

/// One series of monthly values with its identifier and first month.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlySeries<T> {
    pub id: String,
    pub start: YearMonth,
    pub values: Vec<T>,
}

impl<T: Real> MonthlySeries<T> {
    /// Builds a series, rejecting non-positive or non-finite values.
    pub fn new(id: impl Into<String>, start: YearMonth, values: Vec<T>) -> Result<Self> {
        let id = id.into();
        for (i, v) in values.iter().enumerate() {
            if !(v.is_finite() && *v > T::zero()) {
                let at = start.offset(i as i64);
                return Err(Error::NonPositiveDemand {
                    id,
                    year: at.year,
                    month: at.month,
                    value: v.as_f64(),
                });
            }
        }
        Ok(Self { id, start, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Last observed month. Undefined for an empty series.
    pub fn end(&self) -> YearMonth {
        self.start.offset(self.values.len() as i64 - 1)
    }

    /// First `len` months of the series.
    pub fn head(&self, len: usize) -> Self {
        Self {
            id: self.id.clone(),
            start: self.start,
            values: self.values[..len].to_vec(),
        }
    }

    /// Months `from..from + len` as a series starting at the matching month.
    pub fn slice(&self, from: usize, len: usize) -> Self {
        Self {
            id: self.id.clone(),
            start: self.start.offset(from as i64),
            values: self.values[from..from + len].to_vec(),
        }
    }
}

/// A set of series sharing a common final month.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesCollection<T> {
    pub series: Vec<MonthlySeries<T>>,
    pub common_end: YearMonth,
}

impl<T: Real> SeriesCollection<T> {
    /// Validates id uniqueness and end alignment.
    pub fn new(series: Vec<MonthlySeries<T>>) -> Result<Self> {
        let first = series.first().ok_or(Error::EmptyCollection)?;
        if first.is_empty() {
            return Err(Error::SeriesTooShort {
                id: first.id.clone(),
                len: 0,
                required: 1,
            });
        }
        let common_end = first.end();
        let mut seen = HashSet::new();
        for s in &series {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateSeries(s.id.clone()));
            }
            if s.is_empty() || s.end() != common_end {
                return Err(Error::MisalignedEnd {
                    id: s.id.clone(),
                    common_end: common_end.to_string(),
                });
            }
        }
        Ok(Self { series, common_end })
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.series.iter().map(|s| s.id.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&MonthlySeries<T>> {
        self.series.iter().find(|s| s.id == id)
    }

    /// Subcollection with the given ids, keeping collection order.
    pub fn subset(&self, ids: &HashSet<String>) -> Result<Self> {
        let series = self
            .series
            .iter()
            .filter(|s| ids.contains(&s.id))
            .cloned()
            .collect();
        Self::new(series)
    }

    /// Drops the last `months` observations of every series.
    pub fn truncate_end(&self, months: usize) -> Result<Self> {
        let series = self
            .series
            .iter()
            .map(|s| {
                if s.len() <= months {
                    return Err(Error::SeriesTooShort {
                        id: s.id.clone(),
                        len: s.len(),
                        required: months + 1,
                    });
                }
                Ok(s.head(s.len() - months))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(series)
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct Row {
    id: String,
    year: i32,
    month: u32,
    #[serde(alias = "forecast")]
    value: f64,
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads `id,year,month,value` rows. A `forecast` column is accepted in
/// place of `value`; other extra columns are ignored.
pub fn load_csv<T: Real>(path: impl AsRef<Path>) -> Result<SeriesCollection<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    read_csv(file)
}

pub fn read_csv<T: Real, R: Read>(reader: R) -> Result<SeriesCollection<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut order: Vec<String> = Vec::new();
    let mut groups: Vec<(YearMonth, Vec<T>, YearMonth)> = Vec::new();
    let mut seen: HashSet<(String, i32, u32)> = HashSet::new();
    for row in rdr.deserialize::<Row>() {
        let row = row?;
        let at = YearMonth::new(row.year, row.month)?;
        if !(row.value.is_finite() && row.value > 0.0) {
            return Err(Error::NonPositiveDemand {
                id: row.id,
                year: row.year,
                month: row.month,
                value: row.value,
            });
        }
        if !seen.insert((row.id.clone(), row.year, row.month)) {
            return Err(Error::DuplicateObservation {
                id: row.id,
                year: row.year,
                month: row.month,
            });
        }
        let value = T::from_f64(row.value).ok_or_else(|| Error::NonFinite(row.value.to_string()))?;
        match order.iter().position(|id| *id == row.id) {
            Some(g) => {
                let (_, values, last) = &mut groups[g];
                let expected = last.offset(1);
                if at != expected {
                    return Err(Error::CalendarGap {
                        id: row.id,
                        expected: expected.to_string(),
                        found: at.to_string(),
                    });
                }
                values.push(value);
                *last = at;
            }
            None => {
                order.push(row.id);
                groups.push((at, vec![value], at));
            }
        }
    }
    let series = order
        .into_iter()
        .zip(groups)
        .map(|(id, (start, values, _))| MonthlySeries { id, start, values })
        .collect();
    SeriesCollection::new(series)
}

/// Writes `id,year,month,value` rows in collection order.
pub fn save_csv<T: Real>(collection: &SeriesCollection<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    write_csv(&collection.series, "value", file)
}

/// Writes series as `id,year,month,<value_column>` rows.
pub fn write_csv<T: Real, W: Write>(series: &[MonthlySeries<T>], value_column: &str, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["id", "year", "month", value_column])?;
    for s in series {
        for (i, v) in s.values.iter().enumerate() {
            let at = s.start.offset(i as i64);
            wtr.write_record([
                s.id.clone(),
                at.year.to_string(),
                at.month.to_string(),
                v.as_f64().to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::Io {
        path: "<csv writer>".into(),
        source: e,
    })?;
    Ok(())
}

/// Hold-out sizes for validation and testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_months: usize,
    pub valid_months: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_months: HORIZON,
            valid_months: HORIZON,
        }
    }
}

/// Minimum months left for training after removing the held-out tails.
pub const MIN_TRAIN_MONTHS: usize = 24;

#[derive(Debug, Clone)]
pub struct Split<T> {
    pub train: SeriesCollection<T>,
    pub valid_targets: Vec<MonthlySeries<T>>,
    pub test_targets: Vec<MonthlySeries<T>>,
}

impl<T: Real> Split<T> {
    /// Training data for the final model: train followed by the validation months.
    pub fn train_with_valid(&self) -> Result<SeriesCollection<T>> {
        let series = self
            .train
            .series
            .iter()
            .zip(&self.valid_targets)
            .map(|(s, v)| {
                let mut values = s.values.clone();
                values.extend_from_slice(&v.values);
                MonthlySeries {
                    id: s.id.clone(),
                    start: s.start,
                    values,
                }
            })
            .collect();
        SeriesCollection::new(series)
    }
}

pub fn split<T: Real>(collection: &SeriesCollection<T>, spec: SplitSpec) -> Result<Split<T>> {
    let held_out = spec.test_months + spec.valid_months;
    let required = held_out + MIN_TRAIN_MONTHS;
    let mut train = Vec::with_capacity(collection.len());
    let mut valid_targets = Vec::with_capacity(collection.len());
    let mut test_targets = Vec::with_capacity(collection.len());
    for s in &collection.series {
        if s.len() < required {
            return Err(Error::SeriesTooShort {
                id: s.id.clone(),
                len: s.len(),
                required,
            });
        }
        let train_len = s.len() - held_out;
        train.push(s.head(train_len));
        valid_targets.push(s.slice(train_len, spec.valid_months));
        test_targets.push(s.slice(train_len + spec.valid_months, spec.test_months));
    }
    Ok(Split {
        train: SeriesCollection::new(train)?,
        valid_targets,
        test_targets,
    })
}

/// Which part of the history trains the model and which year it forecasts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Train on the training part, forecast the validation year.
    Validation,
    /// Train on training and validation parts, forecast the test year.
    #[default]
    Test,
    /// Train on everything, forecast the year after the data.
    Production,
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "validation" => Ok(Stage::Validation),
            "test" => Ok(Stage::Test),
            "production" => Ok(Stage::Production),
            other => Err(Error::InvalidConfig(format!(
                "unknown stage {other:?} (expected validation, test or production)"
            ))),
        }
    }
}

/// Training data of a stage and, unless forecasting beyond the data, the
/// actual values of the forecast year.
#[derive(Debug, Clone)]
pub struct StageData<T> {
    pub train: SeriesCollection<T>,
    pub targets: Option<Vec<MonthlySeries<T>>>,
}

impl<T: Real> StageData<T> {
    /// First month after the training data.
    pub fn forecast_start(&self) -> YearMonth {
        self.train.common_end.offset(1)
    }
}

pub fn stage_data<T: Real>(collection: &SeriesCollection<T>, spec: SplitSpec, stage: Stage) -> Result<StageData<T>> {
    let target_months = match stage {
        Stage::Validation => spec.valid_months,
        Stage::Test => spec.test_months,
        Stage::Production => {
            return Ok(StageData {
                train: collection.clone(),
                targets: None,
            })
        }
    };
    if target_months != HORIZON {
        return Err(Error::InvalidConfig(format!(
            "the {stage:?} stage needs a {HORIZON}-month hold-out, got {target_months}"
        )));
    }
    let parts = split(collection, spec)?;
    Ok(match stage {
        Stage::Validation => StageData {
            train: parts.train,
            targets: Some(parts.valid_targets),
        },
        _ => StageData {
            train: parts.train_with_valid()?,
            targets: Some(parts.test_targets),
        },
    })
}

/// Shape of the synthetic series `trend(t) · season(month) · noise(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Standard deviation of the log-normal multiplicative noise.
    pub noise: f64,
    /// Bound on the linear part of the log-trend, per year.
    pub max_annual_growth: f64,
    /// Amplitude of the smooth nonlinear component of the log-trend.
    pub trend_wiggle: f64,
    /// Bounds of the log-amplitude of the seasonal profile.
    pub seasonal_amplitude: (f64, f64),
    pub end: YearMonth,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            noise: 0.02,
            max_annual_growth: 0.005,
            trend_wiggle: 0.01,
            seasonal_amplitude: (0.05, 0.2),
            end: YearMonth { year: 2014, month: 12 },
        }
    }
}

/// Synthetic collection with the default [`SynthConfig`].
pub fn synthesize(n_series: usize, n_years: usize, seed: u64) -> Result<SeriesCollection<f64>> {
    synthesize_with(&SynthConfig::default(), n_series, n_years, seed)
}

pub fn synthesize_with(cfg: &SynthConfig, n_series: usize, n_years: usize, seed: u64) -> Result<SeriesCollection<f64>> {
    if n_years < 3 {
        return Err(Error::InvalidConfig(format!("synthetic series need at least 3 years, got {n_years}")));
    }
    if n_series == 0 {
        return Err(Error::EmptyCollection);
    }
    if !(cfg.noise >= 0.0) {
        return Err(Error::InvalidConfig(format!("noise dispersion must be non-negative, got {}", cfg.noise)));
    }
    let len = n_years * 12;
    let start = cfg.end.offset(1 - len as i64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let two_pi = std::f64::consts::TAU;
    let mut series = Vec::with_capacity(n_series);
    for i in 0..n_series {
        let base = (rng.random_range(7.0_f64..11.0)).exp();
        let growth = rng.random_range(-cfg.max_annual_growth..=cfg.max_annual_growth);
        let wiggle_freq = rng.random_range(0.3..0.8);
        let wiggle_phase = rng.random_range(0.0..two_pi);
        let amplitude = rng.random_range(cfg.seasonal_amplitude.0..=cfg.seasonal_amplitude.1);
        let season_phase = rng.random_range(0.0..two_pi);
        let mut season: Vec<f64> = (0..12)
            .map(|m| {
                let harmonic = (two_pi * m as f64 / 12.0 + season_phase).sin();
                let jitter: f64 = rng.random_range(-0.3..0.3);
                amplitude * (harmonic + jitter)
            })
            .collect();
        let mean = season.iter().sum::<f64>() / 12.0;
        season.iter_mut().for_each(|s| *s = (*s - mean).exp());

        let values = (0..len)
            .map(|t| {
                let years = t as f64 / 12.0;
                let u = t as f64 / len as f64;
                let log_trend = growth * years + cfg.trend_wiggle * (two_pi * wiggle_freq * u + wiggle_phase).sin();
                let z: f64 = StandardNormal.sample(&mut rng);
                let month = (start.month as usize - 1 + t) % 12;
                base * log_trend.exp() * season[month] * (cfg.noise * z).exp()
            })
            .collect();
        series.push(MonthlySeries::new(format!("S{:02}", i + 1), start, values)?);
    }
    SeriesCollection::new(series)
}
