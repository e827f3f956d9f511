//! Gradient checks of the three differentiable stages on small seeded
//! fixtures: the ETS recursion alone, a short network unroll, and the full
//! penalized loss of a two-series batch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{check_gradients, GradCheckReport, Tape, Var};
use crate::dataset::synthesize;
use crate::error::Result;
use crate::ets::{self, EtsParams, EtsVars, ETS_PARAM_COUNT};
use crate::loss::{self, LossConfig};
use crate::network::{forward_sequence, Network};
use crate::seed::derive_seed;
use crate::windowing::{self, INPUT_WINDOW};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// State size of the network fixtures.
pub const FIXTURE_STATE_SIZE: usize = 4;
const ETS_STEPS: usize = 24;
const NET_STEPS: usize = 3;
const FULL_SERIES: usize = 2;
const FULL_YEARS: usize = 3;

/// Outcome of one gradient check with leaves named.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub max_relative_error: f64,
    pub worst_leaf: Option<String>,
    pub leaves: usize,
    /// Leaves whose perturbation crossed a pinball kink.
    pub kinks: usize,
}

impl CheckOutcome {
    fn new(name: &'static str, report: GradCheckReport<f64>, names: &[String]) -> Self {
        Self {
            name,
            max_relative_error: report.max_relative_error,
            worst_leaf: report.worst_leaf.map(|i| names[i].clone()),
            leaves: report.leaves.len(),
            kinks: report.kinks().count(),
        }
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

fn ets_leaf_names(prefix: &str) -> Vec<String> {
    let mut names = vec![format!("{prefix}alpha_raw"), format!("{prefix}beta_raw")];
    names.extend((1..=12).map(|i| format!("{prefix}init_season_raw[{i}]")));
    names
}

fn network_leaf_names(net: &Network<f64>) -> Vec<String> {
    net.named_arrays()
        .into_iter()
        .flat_map(|(name, [rows, cols], _)| {
            (0..rows * cols).map(move |i| {
                if cols == 1 {
                    format!("{name}[{i}]")
                } else {
                    format!("{name}[{},{}]", i / cols, i % cols)
                }
            })
        })
        .collect()
}

fn perturbed_ets_params(values: &[f64], rng: &mut ChaCha8Rng) -> Result<EtsParams<f64>> {
    let mut p = ets::init_params(values)?;
    p.alpha_raw = rng.random_range(-1.5..1.5);
    p.beta_raw = rng.random_range(-1.5..1.5);
    for s in &mut p.init_season_raw {
        *s += rng.random_range(-0.05..0.05);
    }
    Ok(p)
}

/// Network with weights and biases drawn uniformly from ±0.5, large enough
/// for every gate to be away from saturation and from zero.
fn fixture_network(rng: &mut ChaCha8Rng) -> Network<f64> {
    Network::filled(FIXTURE_STATE_SIZE, 0.0).map(|_| rng.random_range(-0.5..0.5))
}

/// The ETS recursion over 24 months; the loss is a random linear functional
/// of the normalized levels and of the seasonal indices.
pub fn check_ets(seed: u64, step: f64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
    let data = synthesize(1, 3, derive_seed(seed, &[1, 1]))?;
    let values = data.series[0].values[..ETS_STEPS].to_vec();
    let params = perturbed_ets_params(&values, &mut rng)?;
    let scale = ets::initial_level(&values);
    let level_weights: Vec<f64> = (0..ETS_STEPS).map(|_| rng.random_range(-1.0..1.0)).collect();
    let season_weights: Vec<f64> = (0..ETS_STEPS + 12).map(|_| rng.random_range(-1.0..1.0)).collect();
    let builder = |tape: &mut Tape<f64>, leaves: &[Var<f64>]| {
        let vars = EtsVars { raw: leaves.to_vec() };
        let trace = ets::run_smoother(&values, &vars, tape)?;
        let mut terms: Vec<(Var<f64>, Var<f64>)> = Vec::new();
        for (&l, &w) in trace.levels.iter().zip(&level_weights) {
            terms.push((l, tape.constant(w / scale)));
        }
        for (&s, &w) in trace.seasonals.iter().zip(&season_weights) {
            terms.push((s, tape.constant(w)));
        }
        Ok(tape.dot(None, terms))
    };
    let report = check_gradients(builder, &params.to_vec(), step)?;
    Ok(CheckOutcome::new("ets", report, &ets_leaf_names("")))
}

/// A three-step unroll of the network with random inputs; the loss is a
/// random linear functional of the outputs.
pub fn check_network(seed: u64, step: f64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[2]));
    let net = fixture_network(&mut rng);
    let inputs: Vec<Vec<f64>> = (0..NET_STEPS)
        .map(|_| (0..INPUT_WINDOW).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let weights: Vec<f64> = (0..NET_STEPS * crate::HORIZON).map(|_| rng.random_range(-1.0..1.0)).collect();
    let builder = |tape: &mut Tape<f64>, leaves: &[Var<f64>]| {
        let vars = Network::from_flat(FIXTURE_STATE_SIZE, leaves)?;
        let xs: Vec<Vec<Var<f64>>> = inputs.iter().map(|x| x.iter().map(|&v| tape.constant(v)).collect()).collect();
        let outputs = forward_sequence(tape, &xs, &vars)?;
        let terms: Vec<(Var<f64>, Var<f64>)> = outputs
            .iter()
            .flatten()
            .zip(&weights)
            .map(|(&y, &w)| (y, tape.constant(w)))
            .collect();
        Ok(tape.dot(None, terms))
    };
    let report = check_gradients(builder, &net.flatten(), step)?;
    Ok(CheckOutcome::new("net", report, &network_leaf_names(&net)))
}

/// The penalized pinball loss of a two-series batch of three-year series,
/// differentiated with respect to every network weight and both series'
/// ETS parameters.
pub fn check_full(seed: u64, step: f64, cfg: &LossConfig) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[3]));
    let data = synthesize(FULL_SERIES, FULL_YEARS, derive_seed(seed, &[3, 1]))?;
    let net = fixture_network(&mut rng);
    let ets_params = data
        .series
        .iter()
        .map(|s| perturbed_ets_params(&s.values, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let mut point = net.flatten();
    let mut names = network_leaf_names(&net);
    for (s, p) in data.series.iter().zip(&ets_params) {
        point.extend(p.to_vec());
        names.extend(ets_leaf_names(&format!("{}.", s.id)));
    }
    let n_net = net.parameter_count();
    let tau = cfg.tau;
    let builder = |tape: &mut Tape<f64>, leaves: &[Var<f64>]| {
        let vars = Network::from_flat(FIXTURE_STATE_SIZE, &leaves[..n_net])?;
        let mut terms = Vec::new();
        let mut traces = Vec::new();
        for (i, s) in data.series.iter().enumerate() {
            let start = n_net + i * ETS_PARAM_COUNT;
            let ets_vars = EtsVars {
                raw: leaves[start..start + ETS_PARAM_COUNT].to_vec(),
            };
            let trace = ets::run_smoother(&s.values, &ets_vars, tape)?;
            let samples = windowing::series_samples(tape, &s.id, &s.values, &trace)?;
            let inputs: Vec<Vec<Var<f64>>> = samples.samples.iter().map(|x| x.x_in.clone()).collect();
            let predictions = forward_sequence(tape, &inputs, &vars)?;
            for (sample, prediction) in samples.samples.iter().zip(&predictions) {
                for (&x, &x_hat) in sample.x_out.iter().zip(prediction) {
                    terms.push(loss::pinball_var(tape, x, x_hat, tau));
                }
            }
            traces.push(trace);
        }
        let curves: Vec<&[Var<f64>]> = traces.iter().map(|t| t.levels.as_slice()).collect();
        Ok(loss::total_loss(tape, &terms, &curves, cfg)?.total)
    };
    let report = check_gradients(builder, &point, step)?;
    Ok(CheckOutcome::new("full", report, &names))
}

/// All three checks with the default loss settings.
pub fn run_all(seed: u64, step: f64) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        check_ets(seed, step)?,
        check_network(seed, step)?,
        check_full(seed, step, &LossConfig::default())?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_checks_pass() {
        for outcome in run_all(0, DEFAULT_STEP).unwrap() {
            assert!(outcome.passed(TOLERANCE), "{outcome:?}");
            assert!(outcome.leaves > 0);
        }
    }

    #[test]
    fn leaf_counts_and_names() {
        let out = run_all(3, DEFAULT_STEP).unwrap();
        assert_eq!(out[0].leaves, 14);
        let net = Network::filled(FIXTURE_STATE_SIZE, 0.0);
        assert_eq!(out[1].leaves, net.parameter_count());
        assert_eq!(out[2].leaves, net.parameter_count() + 2 * 14);
        assert_eq!(network_leaf_names(&net)[0], "layer1.W_f[0,0]");
        assert_eq!(network_leaf_names(&net).len(), net.parameter_count());
    }

    #[test]
    fn seeds_change_fixtures_deterministically() {
        let a = check_ets(1, DEFAULT_STEP).unwrap();
        let b = check_ets(1, DEFAULT_STEP).unwrap();
        let c = check_ets(2, DEFAULT_STEP).unwrap();
        assert_eq!(a.max_relative_error, b.max_relative_error);
        assert_ne!(a.max_relative_error, c.max_relative_error);
    }

    #[test]
    fn coarse_step_reports_larger_errors() {
        let fine = check_network(0, DEFAULT_STEP).unwrap();
        let coarse = check_network(0, 1e-2).unwrap();
        assert!(coarse.max_relative_error > fine.max_relative_error);
    }
}
