//! Trendless multiplicative-seasonal exponential smoothing.
//!
//! For `t = 1..T`:
//!
//! ```text
//! l_t      = α · y_t / s_t + (1 − α) · l_{t−1}
//! s_{t+12} = β · y_t / l_t + (1 − β) · s_t
//! ```
//!
//! `α = logistic(alpha_raw)`, `β = logistic(beta_raw)` and the twelve
//! initial seasonal indices are `exp(init_season_raw)`, so every raw
//! parameter is unconstrained and the recursion stays differentiable.
//! The initial level `l_0` is the mean of the first twelve observations.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::{logistic, Real};
use crate::SEASON;

/// Learnable smoothing parameters of one series, in unconstrained form.
#[derive(Debug, Clone, PartialEq)]
pub struct EtsParams<T> {
    pub alpha_raw: T,
    pub beta_raw: T,
    pub init_season_raw: [T; SEASON],
}

/// Number of scalars in [`EtsParams`].
pub const ETS_PARAM_COUNT: usize = SEASON + 2;

impl<T: Real> EtsParams<T> {
    pub fn alpha(&self) -> T {
        logistic(self.alpha_raw)
    }

    pub fn beta(&self) -> T {
        logistic(self.beta_raw)
    }

    pub fn initial_seasonals(&self) -> [T; SEASON] {
        self.init_season_raw.map(T::exp)
    }

    /// Flat layout: `[alpha_raw, beta_raw, init_season_raw[0..12]]`.
    pub fn to_vec(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(ETS_PARAM_COUNT);
        v.push(self.alpha_raw);
        v.push(self.beta_raw);
        v.extend_from_slice(&self.init_season_raw);
        v
    }

    pub fn from_slice(raw: &[T]) -> Result<Self> {
        if raw.len() != ETS_PARAM_COUNT {
            return Err(Error::DimensionMismatch(format!(
                "ETS parameter vector has {} entries, expected {ETS_PARAM_COUNT}",
                raw.len()
            )));
        }
        let mut init_season_raw = [T::zero(); SEASON];
        init_season_raw.copy_from_slice(&raw[2..]);
        Ok(Self {
            alpha_raw: raw[0],
            beta_raw: raw[1],
            init_season_raw,
        })
    }

    /// Registers the raw parameters as leaves on `tape`.
    pub fn register(&self, tape: &mut Tape<T>) -> EtsVars<T> {
        let raw = tape.leaves(&self.to_vec());
        EtsVars { raw }
    }
}

/// Data-driven starting point: `α = β = 0.5`, seasonal indices from the
/// ratio of each month's two-year mean to the overall two-year mean.
pub fn init_params<T: Real>(values: &[T]) -> Result<EtsParams<T>> {
    let required = 2 * SEASON;
    if values.len() < required {
        return Err(Error::Empty(format!(
            "ETS initialization needs {required} observations, got {}",
            values.len()
        )));
    }
    let two = T::lit(2.0);
    let overall = values[..required].iter().copied().sum::<T>() / T::from_count(required);
    let mut init_season_raw = [T::zero(); SEASON];
    for (i, raw) in init_season_raw.iter_mut().enumerate() {
        let month_mean = (values[i] + values[i + SEASON]) / two;
        *raw = (month_mean / overall).ln();
    }
    Ok(EtsParams {
        alpha_raw: T::zero(),
        beta_raw: T::zero(),
        init_season_raw,
    })
}

/// Tape leaves of one series' [`EtsParams`], in flat layout order.
#[derive(Debug, Clone)]
pub struct EtsVars<T> {
    pub raw: Vec<Var<T>>,
}

impl<T: Real> EtsVars<T> {
    pub fn alpha_raw(&self) -> Var<T> {
        self.raw[0]
    }

    pub fn beta_raw(&self) -> Var<T> {
        self.raw[1]
    }

    pub fn init_season_raw(&self) -> &[Var<T>] {
        &self.raw[2..]
    }
}

/// Level and seasonal sequences of one series as tape variables.
///
/// `levels[t - 1]` is `l_t` for `t = 1..=T`; `seasonals[t - 1]` is `s_t`
/// for `t = 1..=T + 12`.
#[derive(Debug, Clone)]
pub struct EtsTrace<T> {
    pub initial_level: T,
    pub levels: Vec<Var<T>>,
    pub seasonals: Vec<Var<T>>,
}

impl<T: Real> EtsTrace<T> {
    pub fn level_values(&self) -> Vec<T> {
        self.levels.iter().map(Var::value).collect()
    }

    pub fn seasonal_values(&self) -> Vec<T> {
        self.seasonals.iter().map(Var::value).collect()
    }

    /// The twelve seasonal indices following the last observation.
    pub fn horizon_seasonals(&self) -> &[Var<T>] {
        &self.seasonals[self.seasonals.len() - SEASON..]
    }
}

pub fn initial_level<T: Real>(values: &[T]) -> T {
    values[..SEASON].iter().copied().sum::<T>() / T::from_count(SEASON)
}

/// Records the smoothing recursion for `values` on `tape`.
pub fn run_smoother<T: Real>(values: &[T], params: &EtsVars<T>, tape: &mut Tape<T>) -> Result<EtsTrace<T>> {
    if values.len() < SEASON {
        return Err(Error::Empty(format!(
            "smoothing needs at least {SEASON} observations, got {}",
            values.len()
        )));
    }
    let alpha = tape.logistic(params.alpha_raw());
    let keep_level = tape.one_minus(alpha);
    let beta = tape.logistic(params.beta_raw());
    let keep_season = tape.one_minus(beta);

    let l0 = initial_level(values);
    let mut seasonals = Vec::with_capacity(values.len() + SEASON);
    for &raw in params.init_season_raw() {
        seasonals.push(tape.exp(raw));
    }
    let mut levels = Vec::with_capacity(values.len());
    let mut prev_level = tape.constant(l0);
    for (t, &y) in values.iter().enumerate() {
        let y = tape.constant(y);
        let season = seasonals[t];
        let deseasonalized = tape.div(y, season);
        let level = tape.dot(None, [(alpha, deseasonalized), (keep_level, prev_level)]);
        let ratio = tape.div(y, level);
        let next_season = tape.dot(None, [(beta, ratio), (keep_season, season)]);
        seasonals.push(next_season);
        levels.push(level);
        prev_level = level;
    }
    Ok(EtsTrace {
        initial_level: l0,
        levels,
        seasonals,
    })
}

/// Plain-value level and seasonal sequences, indexed like [`EtsTrace`].
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedComponents<T> {
    pub levels: Vec<T>,
    pub seasonals: Vec<T>,
}

/// The same recursion as [`run_smoother`] without recording gradients.
pub fn smooth<T: Real>(values: &[T], alpha: T, beta: T, initial_seasonals: &[T; SEASON], l0: T) -> SmoothedComponents<T> {
    let mut seasonals = Vec::with_capacity(values.len() + SEASON);
    seasonals.extend_from_slice(initial_seasonals);
    let mut levels = Vec::with_capacity(values.len());
    let mut prev = l0;
    for (t, &y) in values.iter().enumerate() {
        let level = alpha * (y / seasonals[t]) + (T::one() - alpha) * prev;
        seasonals.push(beta * (y / level) + (T::one() - beta) * seasonals[t]);
        levels.push(level);
        prev = level;
    }
    SmoothedComponents { levels, seasonals }
}
