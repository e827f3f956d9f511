//! Reference forecasters that need no training.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::MonthlySeries;
use crate::error::{Error, Result};
use crate::ets::{self, smooth};
use crate::scalar::Real;
use crate::{HORIZON, SEASON};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    SeasonalNaive,
    HoltWinters,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 2] = [BaselineKind::SeasonalNaive, BaselineKind::HoltWinters];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::SeasonalNaive => "seasonal_naive",
            BaselineKind::HoltWinters => "holt_winters",
        }
    }

    pub fn forecast<T: Real>(self, series: &MonthlySeries<T>) -> Result<Vec<T>> {
        match self {
            BaselineKind::SeasonalNaive => seasonal_naive(series),
            BaselineKind::HoltWinters => holt_winters_forecast(series),
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown baseline {s:?}")))
    }
}

/// Repeats the last observed year.
pub fn seasonal_naive<T: Real>(series: &MonthlySeries<T>) -> Result<Vec<T>> {
    if series.len() < SEASON {
        return Err(too_short(series, SEASON));
    }
    Ok(series.values[series.len() - SEASON..].to_vec())
}

/// Grid of smoothing coefficients searched by [`holt_winters_forecast`].
pub fn coefficient_grid() -> impl Iterator<Item = f64> + Clone {
    (1..=19).map(|i| i as f64 * 0.05)
}

/// Fitted coefficients and the resulting forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct HoltWintersFit<T> {
    pub alpha: T,
    pub beta: T,
    pub sse: T,
    pub forecast: Vec<T>,
}

/// Multiplicative seasonal smoothing without trend, with coefficients chosen
/// by grid search on in-sample one-step-ahead squared error.
pub fn holt_winters_fit<T: Real>(series: &MonthlySeries<T>) -> Result<HoltWintersFit<T>> {
    let required = 2 * SEASON;
    if series.len() < required {
        return Err(too_short(series, required));
    }
    let values = &series.values;
    let seed = ets::init_params(values)?;
    let initial = seed.initial_seasonals();
    let l0 = ets::initial_level(values);
    let mut best: Option<(T, T, T)> = None;
    for alpha in coefficient_grid().map(T::lit) {
        for beta in coefficient_grid().map(T::lit) {
            let fit = smooth(values, alpha, beta, &initial, l0);
            let mut prev = l0;
            let mut sse = T::zero();
            for (t, &y) in values.iter().enumerate() {
                let e = y - prev * fit.seasonals[t];
                sse = sse + e * e;
                prev = fit.levels[t];
            }
            if sse.is_finite() && best.is_none_or(|(b, _, _)| sse < b) {
                best = Some((sse, alpha, beta));
            }
        }
    }
    let (sse, alpha, beta) = best.ok_or_else(|| Error::NonFinite(format!("every Holt-Winters fit of {}", series.id)))?;
    let fit = smooth(values, alpha, beta, &initial, l0);
    let level = *fit.levels.last().expect("non-empty series");
    let n = values.len();
    let forecast = fit.seasonals[n..n + HORIZON].iter().map(|&s| level * s).collect();
    Ok(HoltWintersFit {
        alpha,
        beta,
        sse,
        forecast,
    })
}

pub fn holt_winters_forecast<T: Real>(series: &MonthlySeries<T>) -> Result<Vec<T>> {
    Ok(holt_winters_fit(series)?.forecast)
}

fn too_short<T: Real>(series: &MonthlySeries<T>, required: usize) -> Error {
    Error::SeriesTooShort {
        id: series.id.clone(),
        len: series.len(),
        required,
    }
}
