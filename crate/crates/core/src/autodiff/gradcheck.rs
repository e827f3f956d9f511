use crate::error::{Error, Result};
use crate::scalar::Real;

use super::tape::{Tape, Var};

/// Lower bound on the denominator of the relative error. Central differences
/// at step `h` carry roundoff of roughly `ε·|loss|/h` (about 1e-11 for an O(1)
/// loss at h = 1e-5), which would swamp the relative error of derivatives
/// near zero; below this magnitude the error is measured against the floor.
pub const ABSOLUTE_ERROR_FLOOR: f64 = 1e-6;

/// Comparison of one leaf's analytic and central-difference derivative.
#[derive(Debug, Clone)]
pub struct LeafCheck<T> {
    pub leaf: usize,
    pub analytic: T,
    pub numeric: T,
    pub error: T,
    /// A perturbation flipped a recorded branch, so the derivative is a
    /// subgradient and the leaf is excluded from the worst-case error.
    pub at_kink: bool,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport<T> {
    pub max_relative_error: T,
    pub worst_leaf: Option<usize>,
    pub leaves: Vec<LeafCheck<T>>,
}

impl<T: Real> GradCheckReport<T> {
    pub fn kinks(&self) -> impl Iterator<Item = usize> + '_ {
        self.leaves.iter().filter(|c| c.at_kink).map(|c| c.leaf)
    }
}

fn evaluate<T, F>(builder: &mut F, point: &[T]) -> Result<(Tape<T>, Vec<Var<T>>, Var<T>)>
where
    T: Real,
    F: FnMut(&mut Tape<T>, &[Var<T>]) -> Result<Var<T>>,
{
    let mut tape = Tape::new();
    let leaves = tape.leaves(point);
    let loss = builder(&mut tape, &leaves)?;
    if !loss.value().is_finite() {
        return Err(Error::NonFinite(format!("loss {} at gradient-check point", loss.value())));
    }
    Ok((tape, leaves, loss))
}

/// Compares reverse-mode gradients against central differences.
///
/// `builder` must rebuild the same graph deterministically from the leaf
/// variables it is given. Each leaf is perturbed by `±step` in turn.
pub fn check_gradients<T, F>(mut builder: F, point: &[T], step: T) -> Result<GradCheckReport<T>>
where
    T: Real,
    F: FnMut(&mut Tape<T>, &[Var<T>]) -> Result<Var<T>>,
{
    if !(step > T::zero()) {
        return Err(Error::InvalidConfig(format!("finite-difference step must be positive, got {step}")));
    }
    let (tape, leaves, loss) = evaluate(&mut builder, point)?;
    let grads = tape.backward(loss)?;
    let base_signature = tape.branch_signature().to_vec();
    let floor = T::lit(ABSOLUTE_ERROR_FLOOR);
    let two = T::lit(2.0);

    let mut perturbed = point.to_vec();
    let mut report = GradCheckReport {
        max_relative_error: T::zero(),
        worst_leaf: None,
        leaves: Vec::with_capacity(point.len()),
    };
    for (i, &leaf) in leaves.iter().enumerate() {
        perturbed[i] = point[i] + step;
        let (plus_tape, _, plus) = evaluate(&mut builder, &perturbed)?;
        perturbed[i] = point[i] - step;
        let (minus_tape, _, minus) = evaluate(&mut builder, &perturbed)?;
        perturbed[i] = point[i];

        let at_kink = plus_tape.branch_signature() != base_signature.as_slice()
            || minus_tape.branch_signature() != base_signature.as_slice();
        let analytic = grads.get(leaf);
        let numeric = (plus.value() - minus.value()) / (two * step);
        let diff = (analytic - numeric).abs();
        let error = diff / analytic.abs().max(floor);
        if !at_kink && (report.worst_leaf.is_none() || error > report.max_relative_error) {
            report.max_relative_error = error;
            report.worst_leaf = Some(i);
        }
        report.leaves.push(LeafCheck {
            leaf: i,
            analytic,
            numeric,
            error,
            at_kink,
        });
    }
    Ok(report)
}
