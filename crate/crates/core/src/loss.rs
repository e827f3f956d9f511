//! Pinball loss on normalized patterns plus the level-wiggliness penalty.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Asymmetry of the pinball loss, in `(0, 1)`.
    pub tau: f64,
    /// Weight of the level-wiggliness penalty.
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { tau: 0.4, lambda: 50.0 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidConfig(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// `(x − x̂)·τ` if `x ≥ x̂`, else `(x̂ − x)·(1 − τ)`.
pub fn pinball<T: Real>(x: T, x_hat: T, tau: T) -> T {
    if x >= x_hat {
        (x - x_hat) * tau
    } else {
        (x_hat - x) * (T::one() - tau)
    }
}

/// Pinball loss recorded on the tape; ties take the `x ≥ x̂` branch.
pub fn pinball_var<T: Real>(tape: &mut Tape<T>, x: Var<T>, x_hat: Var<T>, tau: T) -> Var<T> {
    let under = tape.sub(x, x_hat);
    let under = tape.scale(under, tau);
    let over = tape.sub(x_hat, x);
    let over = tape.scale(over, T::one() - tau);
    tape.select_ge(x, x_hat, under, over)
}

const MIN_PENALTY_LEVELS: usize = 3;

/// Mean squared second difference of log-levels, scaled by 2:
/// `2/(T−2) · Σ log(l_{t+2} l_t / l_{t+1}²)²`.
pub fn level_penalty<T: Real>(levels: &[T]) -> Result<T> {
    if levels.len() < MIN_PENALTY_LEVELS {
        return Err(Error::Empty(format!(
            "level penalty needs at least {MIN_PENALTY_LEVELS} levels, got {}",
            levels.len()
        )));
    }
    if levels.iter().any(|&l| !(l > T::zero())) {
        return Err(Error::NonPositive("level curve".into()));
    }
    let logs: Vec<T> = levels.iter().map(|l| l.ln()).collect();
    let sum: T = logs
        .windows(3)
        .map(|w| {
            let e = (w[2] - w[1]) - (w[1] - w[0]);
            e * e
        })
        .sum();
    Ok(T::lit(2.0) * sum / T::from_count(levels.len() - 2))
}

pub fn level_penalty_var<T: Real>(tape: &mut Tape<T>, levels: &[Var<T>]) -> Result<Var<T>> {
    if levels.len() < MIN_PENALTY_LEVELS {
        return Err(Error::Empty(format!(
            "level penalty needs at least {MIN_PENALTY_LEVELS} levels, got {}",
            levels.len()
        )));
    }
    let logs: Vec<Var<T>> = levels.iter().map(|&l| tape.log(l)).collect();
    let diffs: Vec<Var<T>> = logs.windows(2).map(|w| tape.sub(w[1], w[0])).collect();
    let squares: Vec<Var<T>> = diffs
        .windows(2)
        .map(|w| {
            let e = tape.sub(w[1], w[0]);
            tape.mul(e, e)
        })
        .collect();
    let sum = tape.sum(squares);
    Ok(tape.scale(sum, T::lit(2.0) / T::from_count(levels.len() - 2)))
}

/// The components of a batch loss, all on the same tape.
#[derive(Debug, Clone, Copy)]
pub struct LossBreakdown<T> {
    pub total: Var<T>,
    pub pinball: Var<T>,
    pub penalty: Var<T>,
}

/// Mean pinball term plus `λ` times the mean per-series level penalty.
pub fn total_loss<T: Real>(
    tape: &mut Tape<T>,
    pinball_terms: &[Var<T>],
    level_curves: &[&[Var<T>]],
    cfg: &LossConfig,
) -> Result<LossBreakdown<T>> {
    if pinball_terms.is_empty() {
        return Err(Error::Empty("loss over an empty batch".into()));
    }
    let pinball = tape.mean(pinball_terms);
    let penalty = if level_curves.is_empty() {
        tape.constant(T::zero())
    } else {
        let penalties = level_curves
            .iter()
            .map(|levels| level_penalty_var(tape, levels))
            .collect::<Result<Vec<_>>>()?;
        tape.mean(&penalties)
    };
    let weighted = tape.scale(penalty, T::lit(cfg.lambda));
    let total = tape.add(pinball, weighted);
    Ok(LossBreakdown { total, pinball, penalty })
}
