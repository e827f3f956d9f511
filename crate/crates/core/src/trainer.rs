//! Joint optimization of per-series ETS parameters and the shared network.
//!
//! Each mini-batch is a set of series. For every batch a tape, cleared between batches, records
//! the ETS recursions, the dynamic patterns built from them, the stateful
//! network unroll of each series and the penalized pinball loss; one reverse
//! sweep then yields gradients for the network weights and for the ETS
//! parameters of the series in the batch.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Tape, Var};
use crate::dataset::{MonthlySeries, SeriesCollection};
use crate::error::{Error, Result};
use crate::ets::{self, EtsParams, ETS_PARAM_COUNT};
use crate::loss::{self, LossConfig};
use crate::network::{self, forward_sequence, NetworkParams, DEFAULT_STATE_SIZE};
use crate::optim::{clip_global_norm, Optimizer, OptimizerKind};
use crate::scalar::Real;
use crate::seed::derive_seed;
use crate::windowing::{self, MIN_SAMPLE_LENGTH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Series per mini-batch. Each series contributes its whole unroll, so
    /// one series per batch still averages over dozens of windows.
    pub batch_size: usize,
    /// Number of most recent epoch forecasts averaged into the final forecast.
    pub snapshot_window: usize,
    /// Length of the hidden and cell states.
    pub state_size: usize,
    /// Maximum global L2 norm of a gradient step.
    pub gradient_clip: f64,
    pub seed: u64,
    pub loss: LossConfig,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 1e-3,
            batch_size: 1,
            snapshot_window: 5,
            state_size: DEFAULT_STATE_SIZE,
            gradient_clip: 10.0,
            seed: 0,
            loss: LossConfig::default(),
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.snapshot_window == 0 || self.snapshot_window > self.epochs {
            return fail(format!(
                "snapshot window L = {} must lie in 1..={}",
                self.snapshot_window, self.epochs
            ));
        }
        if self.batch_size == 0 {
            return fail("batch size must be at least 1".into());
        }
        if self.state_size == 0 {
            return fail("state size m must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.gradient_clip > 0.0) {
            return fail(format!("gradient clip must be positive, got {}", self.gradient_clip));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel<T> {
    pub network: NetworkParams<T>,
    pub ets: BTreeMap<String, EtsParams<T>>,
    /// Per series, one horizon forecast per completed epoch.
    pub snapshots: BTreeMap<String, Vec<Vec<T>>>,
    pub log: Vec<LogRecord>,
}

impl<T: Real> TrainedModel<T> {
    /// Forecast for `series` with the model's current parameters.
    pub fn forecast(&self, series: &MonthlySeries<T>) -> Result<Vec<T>> {
        let params = self.ets.get(&series.id).ok_or_else(|| Error::UnknownSeries(series.id.clone()))?;
        forecast(&self.network, params, &series.values)
    }

    /// Mean of the last `window` epoch forecasts of every series.
    pub fn averaged_forecasts(&self, window: usize) -> Result<BTreeMap<String, Vec<T>>> {
        self.snapshots
            .iter()
            .map(|(id, snaps)| Ok((id.clone(), snapshot_average(snaps, window)?)))
            .collect()
    }

    /// Mean training loss of every epoch, in order.
    pub fn epoch_losses(&self) -> Vec<f64> {
        let mut out: Vec<(usize, f64, usize)> = Vec::new();
        for r in &self.log {
            match out.last_mut() {
                Some((e, sum, n)) if *e == r.epoch => {
                    *sum += r.loss;
                    *n += 1;
                }
                _ => out.push((r.epoch, r.loss, 1)),
            }
        }
        out.into_iter().map(|(_, sum, n)| sum / n as f64).collect()
    }
}

/// Loss and gradients of one mini-batch.
#[derive(Debug, Clone)]
pub struct BatchGradients<T> {
    pub loss: T,
    pub pinball: T,
    pub penalty: T,
    /// Canonical-order network gradient.
    pub network: Vec<T>,
    /// Flat ETS gradient of each batch series, in batch order.
    pub ets: Vec<Vec<T>>,
}

/// Records the full loss of a batch on a new tape and differentiates it.
pub fn batch_gradients<T: Real>(
    network: &NetworkParams<T>,
    batch: &[(&MonthlySeries<T>, &EtsParams<T>)],
    cfg: &LossConfig,
) -> Result<BatchGradients<T>> {
    batch_gradients_on(&mut Workspace::new(), network, batch, cfg)
}

/// Tape and adjoint storage kept alive across batches.
struct Workspace<T> {
    tape: Tape<T>,
    spare: Option<Gradients<T>>,
}

impl<T: Real> Workspace<T> {
    fn new() -> Self {
        Self {
            tape: Tape::new(),
            spare: None,
        }
    }
}

fn batch_gradients_on<T: Real>(
    ws: &mut Workspace<T>,
    network: &NetworkParams<T>,
    batch: &[(&MonthlySeries<T>, &EtsParams<T>)],
    cfg: &LossConfig,
) -> Result<BatchGradients<T>> {
    let tape = &mut ws.tape;
    tape.reset();
    let net_vars = network.register(tape);
    let tau = T::lit(cfg.tau);
    let mut ets_vars = Vec::with_capacity(batch.len());
    let mut traces = Vec::with_capacity(batch.len());
    let mut terms: Vec<Var<T>> = Vec::new();
    for (series, params) in batch {
        let vars = params.register(tape);
        let trace = ets::run_smoother(&series.values, &vars, tape)?;
        let samples = windowing::series_samples(tape, &series.id, &series.values, &trace)?;
        let inputs: Vec<Vec<Var<T>>> = samples.samples.iter().map(|s| s.x_in.clone()).collect();
        let predictions = forward_sequence(tape, &inputs, &net_vars)?;
        for (sample, prediction) in samples.samples.iter().zip(&predictions) {
            for (&x, &x_hat) in sample.x_out.iter().zip(prediction) {
                terms.push(loss::pinball_var(tape, x, x_hat, tau));
            }
        }
        ets_vars.push(vars);
        traces.push(trace);
    }
    let curves: Vec<&[Var<T>]> = traces.iter().map(|t| t.levels.as_slice()).collect();
    let breakdown = loss::total_loss(tape, &terms, &curves, cfg)?;
    let grads = match ws.spare.take() {
        Some(previous) => tape.backward_recycling(breakdown.total, previous)?,
        None => tape.backward(breakdown.total)?,
    };
    let out = BatchGradients {
        loss: breakdown.total.value(),
        pinball: breakdown.pinball.value(),
        penalty: breakdown.penalty.value(),
        network: grads.collect(&net_vars.flatten()),
        ets: ets_vars.iter().map(|v| grads.collect(&v.raw)).collect(),
    };
    ws.spare = Some(grads);
    Ok(out)
}

/// Runs the ETS recursion, feeds every input window of the series through
/// the network and unwinds the prediction made from the last window.
pub fn forecast<T: Real>(network: &NetworkParams<T>, params: &EtsParams<T>, values: &[T]) -> Result<Vec<T>> {
    if values.len() < windowing::INPUT_WINDOW {
        return Err(Error::Empty(format!(
            "forecasting needs at least {} observations, got {}",
            windowing::INPUT_WINDOW,
            values.len()
        )));
    }
    forecast_on(&mut Tape::new(), network, params, values)
}

fn forecast_on<T: Real>(tape: &mut Tape<T>, network: &NetworkParams<T>, params: &EtsParams<T>, values: &[T]) -> Result<Vec<T>> {
    tape.reset();
    let net_vars = network.map(|w| tape.constant(w));
    let vars = params.register(tape);
    let trace = ets::run_smoother(values, &vars, tape)?;
    let inputs: Vec<Vec<Var<T>>> = (windowing::INPUT_WINDOW - 1..values.len())
        .map(|t| windowing::input_window(tape, values, &trace, t))
        .collect();
    let predictions = forward_sequence(tape, &inputs, &net_vars)?;
    let last = predictions.last().expect("at least one window");
    let x_hat: Vec<T> = last.iter().map(Var::value).collect();
    let seasonals: Vec<T> = trace.horizon_seasonals().iter().map(Var::value).collect();
    let level_star = trace.levels.last().expect("non-empty series").value();
    windowing::postprocess_forecast(&x_hat, level_star, &seasonals)
}

/// Componentwise mean of the last `window` snapshots.
pub fn snapshot_average<T: Real>(snapshots: &[Vec<T>], window: usize) -> Result<Vec<T>> {
    if window == 0 || snapshots.len() < window {
        return Err(Error::InvalidConfig(format!(
            "cannot average the last {window} of {} snapshots",
            snapshots.len()
        )));
    }
    let recent = &snapshots[snapshots.len() - window..];
    let len = recent[0].len();
    if recent.iter().any(|s| s.len() != len) {
        return Err(Error::DimensionMismatch("snapshots of different lengths".into()));
    }
    let n = T::from_count(window);
    Ok((0..len).map(|k| recent.iter().map(|s| s[k]).sum::<T>() / n).collect())
}

/// Seed of the network initialization for a trainer seed.
pub fn init_seed(seed: u64) -> u64 {
    derive_seed(seed, &[1])
}

fn shuffle_seed(seed: u64) -> u64 {
    derive_seed(seed, &[2])
}

/// Trains one model on every series of `collection`.
pub fn train<T: Real>(collection: &SeriesCollection<T>, cfg: &TrainConfig) -> Result<TrainedModel<T>> {
    train_with_observer(collection, cfg, |_| {})
}

/// [`train`] that reports each log record as soon as it is produced.
pub fn train_with_observer<T: Real>(
    collection: &SeriesCollection<T>,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&LogRecord),
) -> Result<TrainedModel<T>> {
    cfg.validate()?;
    if collection.is_empty() {
        return Err(Error::EmptyCollection);
    }
    for s in &collection.series {
        if s.len() < MIN_SAMPLE_LENGTH {
            return Err(Error::SeriesTooShort {
                id: s.id.clone(),
                len: s.len(),
                required: MIN_SAMPLE_LENGTH,
            });
        }
    }

    let mut network: NetworkParams<T> = network::init_weights(cfg.state_size, init_seed(cfg.seed))?;
    let mut ets_params: Vec<EtsParams<T>> = collection
        .series
        .iter()
        .map(|s| ets::init_params(&s.values))
        .collect::<Result<_>>()?;
    let lr = T::lit(cfg.learning_rate);
    let clip = T::lit(cfg.gradient_clip);
    let mut net_opt = Optimizer::new(cfg.optimizer, lr, network.parameter_count());
    let mut ets_opts: Vec<Optimizer<T>> = (0..collection.len())
        .map(|_| Optimizer::new(cfg.optimizer, lr, ETS_PARAM_COUNT))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed(cfg.seed));
    let mut snapshots: BTreeMap<String, Vec<Vec<T>>> = collection.series.iter().map(|s| (s.id.clone(), Vec::new())).collect();
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..collection.len()).collect();
    let mut flat_net = network.flatten();
    let mut workspace = Workspace::new();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<(&MonthlySeries<T>, &EtsParams<T>)> =
                chunk.iter().map(|&i| (&collection.series[i], &ets_params[i])).collect();
            let mut grads = batch_gradients_on(&mut workspace, &network, &batch, &cfg.loss)?;
            if !grads.loss.is_finite() {
                return Err(Error::NonFinite(format!("loss {} at epoch {epoch}, batch {}", grads.loss, b + 1)));
            }
            {
                let mut groups: Vec<&mut [T]> = Vec::with_capacity(chunk.len() + 1);
                groups.push(&mut grads.network);
                groups.extend(grads.ets.iter_mut().map(|g| g.as_mut_slice()));
                let norm = clip_global_norm(&mut groups, clip);
                if !norm.is_finite() {
                    return Err(Error::NonFinite(format!("gradient norm at epoch {epoch}, batch {}", b + 1)));
                }
            }
            net_opt.step(&mut flat_net, &grads.network);
            network = NetworkParams::from_flat(cfg.state_size, &flat_net)?;
            for (&i, g) in chunk.iter().zip(&grads.ets) {
                let mut raw = ets_params[i].to_vec();
                ets_opts[i].step(&mut raw, g);
                ets_params[i] = EtsParams::from_slice(&raw)?;
            }
            let record = LogRecord {
                epoch,
                batch: b + 1,
                loss: grads.loss.as_f64(),
            };
            observer(&record);
            log.push(record);
        }
        for (s, params) in collection.series.iter().zip(&ets_params) {
            let f = forecast_on(&mut workspace.tape, &network, params, &s.values)?;
            snapshots.get_mut(&s.id).expect("every series has a slot").push(f);
        }
    }
    let ets = collection
        .series
        .iter()
        .zip(ets_params)
        .map(|(s, p)| (s.id.clone(), p))
        .collect();
    Ok(TrainedModel {
        network,
        ets,
        snapshots,
        log,
    })
}
