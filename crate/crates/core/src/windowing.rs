//! Rolling-window preprocessing into normalized, deseasonalized patterns.
//!
//! A window anchored at `t` covers inputs `t−11..=t` and outputs
//! `t+1..=t+12`. Every element is mapped to `log(y / (l* · s))`, where `l*`
//! is the level at the anchor and `s` the element's own seasonal index.
//! Because levels and seasonals are tape variables, the patterns are
//! rebuilt (and differentiated through) every time the ETS parameters move.

use crate::autodiff::{Tape, Var};
use crate::ets::EtsTrace;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::{HORIZON, SEASON};

/// Length of the input window.
pub const INPUT_WINDOW: usize = SEASON;

/// Smallest series length that yields one (input, output) pair.
pub const MIN_SAMPLE_LENGTH: usize = INPUT_WINDOW + HORIZON;

/// `log(y / (level_star · seasonal))`.
pub fn preprocess_value<T: Real>(y: T, level_star: T, seasonal: T) -> Result<T> {
    if !(y > T::zero() && level_star > T::zero() && seasonal > T::zero()) {
        return Err(Error::NonPositive(format!(
            "preprocess(y = {y}, level = {level_star}, seasonal = {seasonal})"
        )));
    }
    Ok((y / (level_star * seasonal)).ln())
}

/// `exp(x̂) · level_star · s` componentwise.
pub fn postprocess_forecast<T: Real>(x_hat: &[T], level_star: T, horizon_seasonals: &[T]) -> Result<Vec<T>> {
    if x_hat.len() != horizon_seasonals.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} forecast components but {} seasonal indices",
            x_hat.len(),
            horizon_seasonals.len()
        )));
    }
    if !(level_star > T::zero()) || horizon_seasonals.iter().any(|&s| !(s > T::zero())) {
        return Err(Error::NonPositive("postprocess level or seasonal index".into()));
    }
    x_hat
        .iter()
        .zip(horizon_seasonals)
        .map(|(&x, &s)| {
            if x.is_finite() {
                Ok(x.exp() * level_star * s)
            } else {
                Err(Error::NonFinite(format!("forecast pattern component {x}")))
            }
        })
        .collect()
}

/// One preprocessed (input, output) pair.
#[derive(Debug, Clone)]
pub struct TrainingSample<T> {
    /// Zero-based index of the last input element.
    pub t_anchor: usize,
    pub x_in: Vec<Var<T>>,
    pub x_out: Vec<Var<T>>,
    pub level_star: Var<T>,
    pub horizon_seasonals: Vec<Var<T>>,
}

/// The chronological samples of one series.
#[derive(Debug, Clone)]
pub struct SeriesSamples<T> {
    pub series_id: String,
    pub samples: Vec<TrainingSample<T>>,
}

/// Samples of every series in a batch.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet<T> {
    pub series: Vec<SeriesSamples<T>>,
}

impl<T> TrainingSet<T> {
    pub fn sample_count(&self) -> usize {
        self.series.iter().map(|s| s.samples.len()).sum()
    }
}

/// Number of samples a series of `len` months contributes.
pub fn sample_count(len: usize) -> usize {
    (len + 1).saturating_sub(MIN_SAMPLE_LENGTH)
}

fn pattern<T: Real>(tape: &mut Tape<T>, values: &[T], seasonals: &[Var<T>], level_star: Var<T>, range: std::ops::Range<usize>) -> Vec<Var<T>> {
    range
        .map(|j| {
            let y = tape.constant(values[j]);
            let norm = tape.mul(level_star, seasonals[j]);
            let ratio = tape.div(y, norm);
            tape.log(ratio)
        })
        .collect()
}

/// Preprocessed input window ending at `t_anchor`.
pub fn input_window<T: Real>(tape: &mut Tape<T>, values: &[T], trace: &EtsTrace<T>, t_anchor: usize) -> Vec<Var<T>> {
    let level_star = trace.levels[t_anchor];
    pattern(tape, values, &trace.seasonals, level_star, t_anchor + 1 - INPUT_WINDOW..t_anchor + 1)
}

/// All (input, output) windows of one series, in chronological order.
pub fn series_samples<T: Real>(tape: &mut Tape<T>, id: &str, values: &[T], trace: &EtsTrace<T>) -> Result<SeriesSamples<T>> {
    if values.len() < MIN_SAMPLE_LENGTH {
        return Err(Error::SeriesTooShort {
            id: id.to_string(),
            len: values.len(),
            required: MIN_SAMPLE_LENGTH,
        });
    }
    if trace.levels.len() != values.len() || trace.seasonals.len() != values.len() + SEASON {
        return Err(Error::DimensionMismatch(format!("trace does not match series {id}")));
    }
    let samples = (INPUT_WINDOW - 1..values.len() - HORIZON)
        .map(|t| {
            let level_star = trace.levels[t];
            TrainingSample {
                t_anchor: t,
                x_in: pattern(tape, values, &trace.seasonals, level_star, t + 1 - INPUT_WINDOW..t + 1),
                x_out: pattern(tape, values, &trace.seasonals, level_star, t + 1..t + 1 + HORIZON),
                level_star,
                horizon_seasonals: trace.seasonals[t + 1..t + 1 + HORIZON].to_vec(),
            }
        })
        .collect();
    Ok(SeriesSamples {
        series_id: id.to_string(),
        samples,
    })
}

/// Builds the training set of every `(id, values, trace)` triple.
pub fn build_training_set<'a, T, I>(tape: &mut Tape<T>, series: I) -> Result<TrainingSet<T>>
where
    T: Real,
    I: IntoIterator<Item = (&'a str, &'a [T], &'a EtsTrace<T>)>,
{
    let series = series
        .into_iter()
        .map(|(id, values, trace)| series_samples(tape, id, values, trace))
        .collect::<Result<Vec<_>>>()?;
    if series.is_empty() {
        return Err(Error::Empty("training set has no series".into()));
    }
    Ok(TrainingSet { series })
}
