//! Reverse-mode automatic differentiation over scalar computation graphs.
//!
//! Every model quantity (ETS recursion, preprocessing, recurrent network,
//! loss) is recorded on a [`Tape`] as scalar primitives. A single reverse
//! sweep from the loss yields the adjoints of all leaves, which is what the
//! joint optimizer consumes.

mod gradcheck;
mod tape;

pub use gradcheck::{check_gradients, GradCheckReport, LeafCheck, ABSOLUTE_ERROR_FLOOR};
pub use tape::{Gradients, Tape, Var};

#[cfg(test)]
mod tests;
