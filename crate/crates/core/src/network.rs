//! Four-layer recurrent network: a standard LSTM layer followed by three
//! residual dilated LSTM layers (dilations 3, 6, 12) and a linear output
//! unit mapping the top hidden state to a 12-component pattern forecast.
//!
//! Weights are generic over their element type so the same structure holds
//! plain scalars ([`NetworkParams`]) and tape variables ([`NetworkVars`]).

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::windowing::INPUT_WINDOW;
use crate::HORIZON;

/// Recurrent delay of each layer, bottom to top.
pub const DILATIONS: [usize; 4] = [1, 3, 6, 12];

/// Default length of the hidden and cell states.
pub const DEFAULT_STATE_SIZE: usize = 40;

/// Gate order used by every per-gate array: forget, input, candidate, output.
pub const GATE_NAMES: [&str; 4] = ["f", "i", "g", "o"];
const FORGET: usize = 0;
const INPUT: usize = 1;
const CANDIDATE: usize = 2;
const OUTPUT: usize = 3;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<E> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<E>,
}

impl<E: Copy> Matrix<E> {
    pub fn filled(rows: usize, cols: usize, value: E) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[E] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn map<U>(&self, f: &mut impl FnMut(E) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&e| f(e)).collect(),
        }
    }
}

/// Input weights `W`, recurrent weights `V` and biases `b` of one layer,
/// indexed by gate in [`GATE_NAMES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<E> {
    pub input: [Matrix<E>; 4],
    pub recurrent: [Matrix<E>; 4],
    pub bias: [Vec<E>; 4],
}

impl<E: Copy> LayerWeights<E> {
    fn filled(m: usize, input_size: usize, value: E) -> Self {
        Self {
            input: std::array::from_fn(|_| Matrix::filled(m, input_size, value)),
            recurrent: std::array::from_fn(|_| Matrix::filled(m, m, value)),
            bias: std::array::from_fn(|_| vec![value; m]),
        }
    }

    pub fn state_size(&self) -> usize {
        self.bias[0].len()
    }

    pub fn input_size(&self) -> usize {
        self.input[0].cols
    }

    fn map<U>(&self, f: &mut impl FnMut(E) -> U) -> LayerWeights<U> {
        let mut input = Vec::with_capacity(4);
        let mut recurrent = Vec::with_capacity(4);
        let mut bias = Vec::with_capacity(4);
        for g in 0..4 {
            input.push(self.input[g].map(f));
            recurrent.push(self.recurrent[g].map(f));
            bias.push(self.bias[g].iter().map(|&e| f(e)).collect::<Vec<_>>());
        }
        LayerWeights {
            input: input.try_into().ok().expect("four gates"),
            recurrent: recurrent.try_into().ok().expect("four gates"),
            bias: bias.try_into().ok().expect("four gates"),
        }
    }
}

/// All recurrent layers plus the linear output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<E> {
    pub state_size: usize,
    pub layers: Vec<LayerWeights<E>>,
    pub out_w: Matrix<E>,
    pub out_b: Vec<E>,
}

pub type NetworkParams<T> = Network<T>;
pub type NetworkVars<T> = Network<Var<T>>;

impl<E: Copy> Network<E> {
    /// Network with every entry set to `value`.
    pub fn filled(state_size: usize, value: E) -> Self {
        let layers = DILATIONS
            .iter()
            .enumerate()
            .map(|(l, _)| {
                let input = if l == 0 { INPUT_WINDOW } else { state_size };
                LayerWeights::filled(state_size, input, value)
            })
            .collect();
        Self {
            state_size,
            layers,
            out_w: Matrix::filled(HORIZON, state_size, value),
            out_b: vec![value; HORIZON],
        }
    }

    /// Applies `f` to every entry in canonical order (see [`Network::named_arrays`]).
    pub fn map<U>(&self, mut f: impl FnMut(E) -> U) -> Network<U> {
        Network {
            state_size: self.state_size,
            layers: self.layers.iter().map(|l| l.map(&mut f)).collect(),
            out_w: self.out_w.map(&mut f),
            out_b: self.out_b.iter().map(|&e| f(e)).collect(),
        }
    }

    /// Named arrays with shapes in canonical order: per layer and gate
    /// `W`, `V`, `b`, then the output unit's `W_x`, `b_x`.
    pub fn named_arrays(&self) -> Vec<(String, [usize; 2], &[E])> {
        let mut out = Vec::with_capacity(self.layers.len() * 12 + 2);
        for (l, layer) in self.layers.iter().enumerate() {
            for (g, gate) in GATE_NAMES.iter().enumerate() {
                let w = &layer.input[g];
                let v = &layer.recurrent[g];
                out.push((format!("layer{}.W_{gate}", l + 1), [w.rows, w.cols], w.data.as_slice()));
                out.push((format!("layer{}.V_{gate}", l + 1), [v.rows, v.cols], v.data.as_slice()));
                out.push((format!("layer{}.b_{gate}", l + 1), [layer.bias[g].len(), 1], layer.bias[g].as_slice()));
            }
        }
        out.push(("out.W_x".into(), [self.out_w.rows, self.out_w.cols], self.out_w.data.as_slice()));
        out.push(("out.b_x".into(), [self.out_b.len(), 1], self.out_b.as_slice()));
        out
    }

    /// Entries in canonical order.
    pub fn flatten(&self) -> Vec<E> {
        self.named_arrays().into_iter().flat_map(|(_, _, a)| a.iter().copied()).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.named_arrays().iter().map(|(_, _, a)| a.len()).sum()
    }
}

impl<E: Copy> Network<E> {
    /// Rebuilds a network of the given state size from canonical-order entries.
    pub fn from_flat(state_size: usize, flat: &[E]) -> Result<Self> {
        let template = Network::filled(state_size, ());
        if flat.len() != template.parameter_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters supplied, network with m = {state_size} has {}",
                flat.len(),
                template.parameter_count()
            )));
        }
        let mut it = flat.iter().copied();
        Ok(template.map(|_| it.next().expect("length checked")))
    }
}

impl<T: Real> Network<T> {
    /// Registers every entry as a tape leaf.
    pub fn register(&self, tape: &mut Tape<T>) -> NetworkVars<T> {
        self.map(|v| tape.leaf(v))
    }
}

/// Uniform `(−1/√m, 1/√m)` weights, forget-gate biases 1, other biases 0.
pub fn init_weights<T: Real>(state_size: usize, seed: u64) -> Result<NetworkParams<T>> {
    if state_size == 0 {
        return Err(Error::InvalidConfig("state size must be at least 1".into()));
    }
    let bound = 1.0 / (state_size as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::filled(state_size, T::zero()).map(|_| T::lit(rng.random_range(-bound..bound)));
    for layer in &mut net.layers {
        layer.bias = std::array::from_fn(|g| vec![if g == FORGET { T::one() } else { T::zero() }; state_size]);
    }
    net.out_b = vec![T::zero(); HORIZON];
    Ok(net)
}

/// Gate pre-activations `W x + V h + b`, one dot node per unit and gate.
fn gate_activations<T: Real>(
    tape: &mut Tape<T>,
    x: &[Var<T>],
    h_rec: Option<&[Var<T>]>,
    w: &LayerWeights<Var<T>>,
) -> Result<[Vec<Var<T>>; 4]> {
    let m = w.state_size();
    if x.len() != w.input_size() {
        return Err(Error::DimensionMismatch(format!(
            "layer input has {} components, weights expect {}",
            x.len(),
            w.input_size()
        )));
    }
    if let Some(h) = h_rec {
        if h.len() != m {
            return Err(Error::DimensionMismatch(format!("recurrent state has {} components, expected {m}", h.len())));
        }
    }
    Ok(std::array::from_fn(|g| {
        (0..m)
            .map(|j| {
                let input = w.input[g].row(j).iter().copied().zip(x.iter().copied());
                let pre = match h_rec {
                    Some(h) => {
                        let rec = w.recurrent[g].row(j).iter().copied().zip(h.iter().copied());
                        tape.dot(Some(w.bias[g][j]), input.chain(rec))
                    }
                    None => tape.dot(Some(w.bias[g][j]), input),
                };
                if g == CANDIDATE {
                    tape.tanh(pre)
                } else {
                    tape.logistic(pre)
                }
            })
            .collect()
    }))
}

fn cell_update<T: Real>(tape: &mut Tape<T>, gates: &[Vec<Var<T>>; 4], c_prev: Option<&[Var<T>]>) -> Result<Vec<Var<T>>> {
    let m = gates[0].len();
    if let Some(c) = c_prev {
        if c.len() != m {
            return Err(Error::DimensionMismatch(format!("cell state has {} components, expected {m}", c.len())));
        }
    }
    Ok((0..m)
        .map(|j| {
            let (f, i, g) = (gates[FORGET][j], gates[INPUT][j], gates[CANDIDATE][j]);
            match c_prev {
                Some(c) => tape.dot(None, [(f, c[j]), (i, g)]),
                None => tape.mul(i, g),
            }
        })
        .collect())
}

/// Standard LSTM step. `None` states stand for zero vectors.
pub fn lstm_cell<T: Real>(
    tape: &mut Tape<T>,
    x: &[Var<T>],
    h_prev: Option<&[Var<T>]>,
    c_prev: Option<&[Var<T>]>,
    w: &LayerWeights<Var<T>>,
) -> Result<(Vec<Var<T>>, Vec<Var<T>>)> {
    let gates = gate_activations(tape, x, h_prev, w)?;
    let c = cell_update(tape, &gates, c_prev)?;
    let h = c
        .iter()
        .zip(&gates[OUTPUT])
        .map(|(&c, &o)| {
            let squashed = tape.tanh(c);
            tape.mul(o, squashed)
        })
        .collect();
    Ok((h, c))
}

/// Residual dilated LSTM step: the recurrent inputs are the states from
/// `d` steps back and the lower layer's output is added to `tanh(c)`
/// inside the output-gate product.
pub fn rdlstm_cell<T: Real>(
    tape: &mut Tape<T>,
    h_lower: &[Var<T>],
    h_delayed: Option<&[Var<T>]>,
    c_delayed: Option<&[Var<T>]>,
    w: &LayerWeights<Var<T>>,
) -> Result<(Vec<Var<T>>, Vec<Var<T>>)> {
    let gates = gate_activations(tape, h_lower, h_delayed, w)?;
    let c = cell_update(tape, &gates, c_delayed)?;
    let h = c
        .iter()
        .zip(&gates[OUTPUT])
        .zip(h_lower)
        .map(|((&c, &o), &shortcut)| {
            let squashed = tape.tanh(c);
            let sum = tape.add(squashed, shortcut);
            tape.mul(o, sum)
        })
        .collect();
    Ok((h, c))
}

/// Hidden and cell state of one layer at one step.
#[derive(Debug, Clone)]
pub struct CellState<E> {
    pub step: usize,
    pub h: Vec<E>,
    pub c: Vec<E>,
}

/// The last `d` states of a layer with dilation `d`.
#[derive(Debug, Clone)]
pub struct DilatedHistory<E> {
    dilation: usize,
    slots: VecDeque<CellState<E>>,
}

impl<E> DilatedHistory<E> {
    pub fn new(dilation: usize) -> Self {
        Self {
            dilation,
            slots: VecDeque::with_capacity(dilation),
        }
    }

    /// State stored `d` steps before the next step, if that step exists.
    pub fn delayed(&self) -> Option<&CellState<E>> {
        if self.slots.len() == self.dilation {
            self.slots.front()
        } else {
            None
        }
    }

    pub fn push(&mut self, state: CellState<E>) {
        if self.slots.len() == self.dilation {
            self.slots.pop_front();
        }
        self.slots.push_back(state);
    }
}

/// Per-layer histories of one series' unroll.
#[derive(Debug, Clone)]
pub struct RecurrentState<E> {
    pub layers: Vec<DilatedHistory<E>>,
    step: usize,
}

impl<E> Default for RecurrentState<E> {
    fn default() -> Self {
        Self {
            layers: DILATIONS.iter().map(|&d| DilatedHistory::new(d)).collect(),
            step: 0,
        }
    }
}

impl<E> RecurrentState<E> {
    pub fn step(&self) -> usize {
        self.step
    }
}

/// Advances `state` by one input pattern and returns the 12-component forecast.
pub fn forward_step<T: Real>(
    tape: &mut Tape<T>,
    x: &[Var<T>],
    net: &NetworkVars<T>,
    state: &mut RecurrentState<Var<T>>,
) -> Result<Vec<Var<T>>> {
    let step = state.step;
    let mut lower: Vec<Var<T>> = x.to_vec();
    for (l, weights) in net.layers.iter().enumerate() {
        let history = &mut state.layers[l];
        let (h_rec, c_rec) = match history.delayed() {
            Some(s) => (Some(s.h.as_slice()), Some(s.c.as_slice())),
            None => (None, None),
        };
        let (h, c) = if l == 0 {
            lstm_cell(tape, &lower, h_rec, c_rec, weights)?
        } else {
            rdlstm_cell(tape, &lower, h_rec, c_rec, weights)?
        };
        history.push(CellState { step, h: h.clone(), c });
        lower = h;
    }
    state.step += 1;
    Ok((0..HORIZON)
        .map(|k| {
            let pairs = net.out_w.row(k).iter().copied().zip(lower.iter().copied());
            tape.dot(Some(net.out_b[k]), pairs)
        })
        .collect())
}

/// Stateful unroll over one series' chronological input patterns.
pub fn forward_sequence<T: Real>(tape: &mut Tape<T>, inputs: &[Vec<Var<T>>], net: &NetworkVars<T>) -> Result<Vec<Vec<Var<T>>>> {
    if inputs.is_empty() {
        return Err(Error::Empty("forward pass over an empty sequence".into()));
    }
    let mut state = RecurrentState::default();
    inputs.iter().map(|x| forward_step(tape, x, net, &mut state)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::check_gradients;

    fn zero_layer(tape: &mut Tape<f64>, m: usize, input: usize) -> LayerWeights<Var<f64>> {
        let zero = tape.constant(0.0);
        LayerWeights::filled(m, input, zero)
    }

    fn consts(tape: &mut Tape<f64>, values: &[f64]) -> Vec<Var<f64>> {
        values.iter().map(|&v| tape.constant(v)).collect()
    }

    #[test]
    fn zero_lstm_from_zero_state() {
        let mut tape = Tape::new();
        let w = zero_layer(&mut tape, 3, 12);
        let x = consts(&mut tape, &[0.7; 12]);
        let zeros = consts(&mut tape, &[0.0; 3]);
        let (h, c) = lstm_cell(&mut tape, &x, Some(&zeros), Some(&zeros), &w).unwrap();
        assert!(h.iter().chain(&c).all(|v| v.value() == 0.0));
        let (h2, c2) = lstm_cell(&mut tape, &x, None, None, &w).unwrap();
        assert!(h2.iter().chain(&c2).all(|v| v.value() == 0.0));
    }

    #[test]
    fn zero_lstm_with_unit_cell() {
        let mut tape = Tape::new();
        let w = zero_layer(&mut tape, 3, 12);
        let x = consts(&mut tape, &[0.0; 12]);
        let ones = consts(&mut tape, &[1.0; 3]);
        let (h, c) = lstm_cell(&mut tape, &x, None, Some(&ones), &w).unwrap();
        for (h, c) in h.iter().zip(&c) {
            assert!((c.value() - 0.5).abs() < 1e-15);
            assert!((h.value() - 0.231_058_578_630_005).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rdlstm_adds_shortcut() {
        let mut tape = Tape::new();
        let w = zero_layer(&mut tape, 3, 3);
        let v = consts(&mut tape, &[0.3, -1.2, 2.0]);
        let hd = consts(&mut tape, &[5.0, 5.0, 5.0]);
        let cd = consts(&mut tape, &[0.4, -2.0, 1.0]);
        let (h, c) = rdlstm_cell(&mut tape, &v, Some(&hd), Some(&cd), &w).unwrap();
        for j in 0..3 {
            let expect_c = 0.5 * cd[j].value();
            assert!((c[j].value() - expect_c).abs() < 1e-15);
            assert!((h[j].value() - 0.5 * (expect_c.tanh() + v[j].value())).abs() < 1e-15);
        }
        // without the shortcut the output equation is the plain LSTM one
        let zeros = consts(&mut tape, &[0.0; 3]);
        let (h_res, _) = rdlstm_cell(&mut tape, &zeros, Some(&hd), Some(&cd), &w).unwrap();
        let (h_std, _) = lstm_cell(&mut tape, &zeros, Some(&hd), Some(&cd), &w).unwrap();
        for (a, b) in h_res.iter().zip(&h_std) {
            assert_eq!(a.value(), b.value());
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut tape = Tape::new();
        let w = zero_layer(&mut tape, 3, 12);
        let x = consts(&mut tape, &[0.0; 11]);
        assert!(matches!(lstm_cell(&mut tape, &x, None, None, &w), Err(Error::DimensionMismatch(_))));
        let x = consts(&mut tape, &[0.0; 12]);
        let h = consts(&mut tape, &[0.0; 2]);
        assert!(lstm_cell(&mut tape, &x, Some(&h), None, &w).is_err());
    }

    #[test]
    fn hidden_state_is_bounded() {
        let net: NetworkParams<f64> = init_weights(5, 3).unwrap().map(|w: f64| w * 8.0);
        let mut tape = Tape::new();
        let vars = net.register(&mut tape);
        let x = consts(&mut tape, &[3.0; 12]);
        let (h, _) = lstm_cell(&mut tape, &x, None, None, &vars.layers[0]).unwrap();
        assert!(h.iter().all(|v| v.value().abs() < 1.0));
    }

    #[test]
    fn history_reads_state_from_d_steps_back() {
        for d in DILATIONS {
            let mut history = DilatedHistory::new(d);
            for t in 0..20usize {
                let read = history.delayed().map(|s| s.step);
                assert_eq!(read, t.checked_sub(d), "d = {d}, t = {t}");
                history.push(CellState { step: t, h: vec![t as f64], c: vec![0.0] });
            }
        }
    }

    #[test]
    fn zero_network_predicts_zero() {
        let net = Network::filled(4, 0.0);
        let mut tape = Tape::new();
        let vars = net.register(&mut tape);
        let inputs: Vec<Vec<_>> = (0..5).map(|t| consts(&mut tape, &[t as f64 * 0.1; 12])).collect();
        let out = forward_sequence(&mut tape, &inputs, &vars).unwrap();
        assert_eq!(out.len(), 5);
        assert!(out.iter().all(|p| p.len() == 12 && p.iter().all(|v| v.value() == 0.0)));
        assert!(forward_sequence(&mut tape, &[], &vars).is_err());
    }

    #[test]
    fn init_weights_layout() {
        let a: NetworkParams<f64> = init_weights(7, 9).unwrap();
        assert_eq!(a, init_weights(7, 9).unwrap());
        assert_ne!(a, init_weights(7, 10).unwrap());
        let bound = 1.0 / 7f64.sqrt();
        for (l, layer) in a.layers.iter().enumerate() {
            assert_eq!(layer.input_size(), if l == 0 { 12 } else { 7 });
            assert!(layer.bias[0].iter().all(|&b| b == 1.0));
            assert!(layer.bias[1..].iter().flatten().all(|&b| b == 0.0));
            assert!(layer.input.iter().chain(&layer.recurrent).flat_map(|m| &m.data).all(|w| w.abs() < bound));
        }
        assert_eq!((a.out_w.rows, a.out_w.cols), (12, 7));
        assert!(init_weights::<f64>(0, 1).is_err());
        let flat = a.flatten();
        assert_eq!(flat.len(), a.parameter_count());
        assert_eq!(Network::from_flat(7, &flat).unwrap(), a);
    }

    /// Replays the unroll with explicit zero states, layer by layer.
    #[test]
    fn unroll_matches_manual_composition() {
        let net: NetworkParams<f64> = init_weights(3, 5).unwrap();
        let mut tape = Tape::new();
        let vars = net.register(&mut tape);
        let inputs: Vec<Vec<_>> = (0..14)
            .map(|t| consts(&mut tape, &(0..12).map(|k| ((t * 12 + k) as f64 * 0.37).sin() * 0.2).collect::<Vec<_>>()))
            .collect();
        let out = forward_sequence(&mut tape, &inputs, &vars).unwrap();

        let zeros = consts(&mut tape, &[0.0; 3]);
        let mut hs: Vec<Vec<Vec<Var<f64>>>> = vec![Vec::new(); 4];
        let mut cs: Vec<Vec<Vec<Var<f64>>>> = vec![Vec::new(); 4];
        for (t, x) in inputs.iter().enumerate() {
            let mut lower = x.clone();
            for l in 0..4 {
                let d = DILATIONS[l];
                let (hp, cp) = if t >= d {
                    (hs[l][t - d].clone(), cs[l][t - d].clone())
                } else {
                    (zeros.clone(), zeros.clone())
                };
                let (h, c) = if l == 0 {
                    lstm_cell(&mut tape, &lower, Some(&hp), Some(&cp), &vars.layers[0]).unwrap()
                } else {
                    rdlstm_cell(&mut tape, &lower, Some(&hp), Some(&cp), &vars.layers[l]).unwrap()
                };
                hs[l].push(h.clone());
                cs[l].push(c);
                lower = h;
            }
            for k in 0..12 {
                let manual = net.out_b[k] + (0..3).map(|j| net.out_w.row(k)[j] * lower[j].value()).sum::<f64>();
                assert!((out[t][k].value() - manual).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn residual_shortcut_with_open_output_gate() {
        // zero layer-4 gate weights, output bias large: o ≈ 1, so h⁴ ≈ tanh(c⁴) + h³
        let mut net: NetworkParams<f64> = init_weights(4, 2).unwrap();
        let top = &mut net.layers[3];
        for g in 0..4 {
            top.input[g].data.iter_mut().for_each(|w| *w = 0.0);
            top.recurrent[g].data.iter_mut().for_each(|w| *w = 0.0);
        }
        top.bias[OUTPUT] = vec![40.0; 4];
        top.bias[INPUT] = vec![0.0; 4];
        top.bias[CANDIDATE] = vec![0.5; 4];
        let mut tape = Tape::new();
        let vars = net.register(&mut tape);
        let x = consts(&mut tape, &[0.3; 12]);
        let mut state = RecurrentState::default();
        forward_step(&mut tape, &x, &vars, &mut state).unwrap();
        let h3 = &state.layers[2].slots.back().unwrap().h;
        let top_state = state.layers[3].slots.back().unwrap();
        for j in 0..4 {
            let expect = top_state.c[j].value().tanh() + h3[j].value();
            assert!((top_state.h[j].value() - expect).abs() < 1e-12);
            // c = i ⊗ g with zero delayed cell: 0.5 · tanh(0.5)
            assert!((top_state.c[j].value() - 0.5 * 0.5f64.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn unroll_gradient_check() {
        let net: NetworkParams<f64> = init_weights(4, 21).unwrap();
        let inputs: Vec<Vec<f64>> = (0..3)
            .map(|t| (0..12).map(|k| ((t * 5 + k) as f64 * 0.61).cos() * 0.3).collect())
            .collect();
        let report = check_gradients(
            |tape, leaves| {
                let vars = Network::from_flat(4, leaves)?;
                let xs: Vec<Vec<_>> = inputs.iter().map(|x| x.iter().map(|&v| tape.constant(v)).collect()).collect();
                let out = forward_sequence(tape, &xs, &vars)?;
                let squares: Vec<_> = out.iter().flatten().map(|&v| tape.mul(v, v)).collect();
                Ok(tape.sum(squares))
            },
            &net.flatten(),
            1e-5,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-4, "{}", report.max_relative_error);
    }
}
