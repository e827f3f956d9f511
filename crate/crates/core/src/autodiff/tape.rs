use std::sync::atomic::{AtomicU32, Ordering};

use crate::error::{Error, Result};
use crate::scalar::{logistic, Real};

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

const NO_NODE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    Const,
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Neg(u32),
    Log(u32),
    Exp(u32),
    Tanh(u32),
    Logistic(u32),
    /// Result of a two-way branch; only the taken operand is kept.
    Select(u32),
    /// `bias + Σ a_k * b_k` over operand pairs stored in the arena.
    Dot { start: u32, pairs: u32, bias: u32 },
    /// `Σ a_k` over operands stored in the arena.
    Sum { start: u32, len: u32 },
}

/// Handle to a node on a [`Tape`], carrying a copy of its primal value.
#[derive(Debug, Clone, Copy)]
pub struct Var<T> {
    index: u32,
    tape: u32,
    value: T,
}

impl<T: Copy> Var<T> {
    pub fn value(&self) -> T {
        self.value
    }

    /// Position of the node on its tape.
    pub fn index(&self) -> usize {
        self.index as usize
    }
}

/// Append-only record of scalar primitives for reverse-mode differentiation.
///
/// Nodes are stored in insertion order, which is also a topological order:
/// every operand is recorded before the node that consumes it.
#[derive(Debug)]
pub struct Tape<T> {
    id: u32,
    values: Vec<T>,
    ops: Vec<Op>,
    arena: Vec<u32>,
    branches: Vec<bool>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self::with_capacity(0)
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            values: Vec::with_capacity(nodes),
            ops: Vec::with_capacity(nodes),
            arena: Vec::new(),
            branches: Vec::new(),
        }
    }

    /// Empties the tape but keeps its allocations. Variables recorded before
    /// the reset are no longer owned by it.
    pub fn reset(&mut self) {
        self.id = NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed);
        self.values.clear();
        self.ops.clear();
        self.arena.clear();
        self.branches.clear();
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Branch decisions taken so far, in recording order.
    pub fn branch_signature(&self) -> &[bool] {
        &self.branches
    }

    pub fn owns(&self, v: Var<T>) -> bool {
        v.tape == self.id && (v.index as usize) < self.ops.len()
    }

    fn push(&mut self, op: Op, value: T) -> Var<T> {
        let index = self.ops.len() as u32;
        self.ops.push(op);
        self.values.push(value);
        Var {
            index,
            tape: self.id,
            value,
        }
    }

    #[inline]
    fn check(&self, v: Var<T>) -> u32 {
        debug_assert!(self.owns(v), "variable from a different tape");
        v.index
    }

    /// Registers a differentiable input.
    pub fn leaf(&mut self, value: T) -> Var<T> {
        self.push(Op::Leaf, value)
    }

    pub fn leaves(&mut self, values: &[T]) -> Vec<Var<T>> {
        values.iter().map(|&v| self.leaf(v)).collect()
    }

    pub fn constant(&mut self, value: T) -> Var<T> {
        self.push(Op::Const, value)
    }

    pub fn add(&mut self, a: Var<T>, b: Var<T>) -> Var<T> {
        let op = Op::Add(self.check(a), self.check(b));
        self.push(op, a.value + b.value)
    }

    pub fn sub(&mut self, a: Var<T>, b: Var<T>) -> Var<T> {
        let op = Op::Sub(self.check(a), self.check(b));
        self.push(op, a.value - b.value)
    }

    pub fn mul(&mut self, a: Var<T>, b: Var<T>) -> Var<T> {
        let op = Op::Mul(self.check(a), self.check(b));
        self.push(op, a.value * b.value)
    }

    pub fn div(&mut self, a: Var<T>, b: Var<T>) -> Var<T> {
        let op = Op::Div(self.check(a), self.check(b));
        self.push(op, a.value / b.value)
    }

    pub fn neg(&mut self, a: Var<T>) -> Var<T> {
        let op = Op::Neg(self.check(a));
        self.push(op, -a.value)
    }

    pub fn log(&mut self, a: Var<T>) -> Var<T> {
        let op = Op::Log(self.check(a));
        self.push(op, a.value.ln())
    }

    pub fn exp(&mut self, a: Var<T>) -> Var<T> {
        let op = Op::Exp(self.check(a));
        self.push(op, a.value.exp())
    }

    pub fn tanh(&mut self, a: Var<T>) -> Var<T> {
        let op = Op::Tanh(self.check(a));
        self.push(op, a.value.tanh())
    }

    pub fn logistic(&mut self, a: Var<T>) -> Var<T> {
        let op = Op::Logistic(self.check(a));
        self.push(op, logistic(a.value))
    }

    /// `a * c` for a constant `c`.
    pub fn scale(&mut self, a: Var<T>, c: T) -> Var<T> {
        let c = self.constant(c);
        self.mul(a, c)
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var<T>) -> Var<T> {
        let one = self.constant(T::one());
        self.sub(one, a)
    }

    /// `if lhs >= rhs { when_ge } else { when_lt }`; gradient flows only
    /// through the branch taken at recording time.
    pub fn select_ge(&mut self, lhs: Var<T>, rhs: Var<T>, when_ge: Var<T>, when_lt: Var<T>) -> Var<T> {
        self.check(lhs);
        self.check(rhs);
        let take_ge = lhs.value >= rhs.value;
        self.branches.push(take_ge);
        let taken = if take_ge { when_ge } else { when_lt };
        let op = Op::Select(self.check(taken));
        self.push(op, taken.value)
    }

    pub fn max(&mut self, a: Var<T>, b: Var<T>) -> Var<T> {
        self.select_ge(a, b, a, b)
    }

    /// `bias + Σ a_k b_k`, recorded as a single node.
    pub fn dot<I>(&mut self, bias: Option<Var<T>>, pairs: I) -> Var<T>
    where
        I: IntoIterator<Item = (Var<T>, Var<T>)>,
    {
        let start = self.arena.len();
        let mut acc = match bias {
            Some(b) => {
                self.check(b);
                b.value
            }
            None => T::zero(),
        };
        for (a, b) in pairs {
            debug_assert!(self.owns(a) && self.owns(b), "variable from a different tape");
            acc = acc + a.value * b.value;
            self.arena.push(a.index);
            self.arena.push(b.index);
        }
        let op = Op::Dot {
            start: start as u32,
            pairs: ((self.arena.len() - start) / 2) as u32,
            bias: bias.map_or(NO_NODE, |b| b.index),
        };
        self.push(op, acc)
    }

    pub fn sum<I>(&mut self, terms: I) -> Var<T>
    where
        I: IntoIterator<Item = Var<T>>,
    {
        let start = self.arena.len();
        let mut acc = T::zero();
        for v in terms {
            debug_assert!(self.owns(v), "variable from a different tape");
            acc = acc + v.value;
            self.arena.push(v.index);
        }
        let op = Op::Sum {
            start: start as u32,
            len: (self.arena.len() - start) as u32,
        };
        self.push(op, acc)
    }

    /// Arithmetic mean of a non-empty list.
    pub fn mean(&mut self, terms: &[Var<T>]) -> Var<T> {
        assert!(!terms.is_empty(), "mean of an empty list");
        let total = self.sum(terms.iter().copied());
        self.scale(total, T::one() / T::from_count(terms.len()))
    }

    /// Single reverse sweep from `loss`, returning the adjoint of every node.
    pub fn backward(&self, loss: Var<T>) -> Result<Gradients<T>> {
        self.sweep(loss, Vec::new())
    }

    /// [`Tape::backward`] writing into the storage of an earlier result.
    pub fn backward_recycling(&self, loss: Var<T>, previous: Gradients<T>) -> Result<Gradients<T>> {
        self.sweep(loss, previous.adjoints)
    }

    fn sweep(&self, loss: Var<T>, mut adj: Vec<T>) -> Result<Gradients<T>> {
        if !self.owns(loss) {
            return Err(Error::ForeignVariable);
        }
        let n = loss.index as usize + 1;
        adj.clear();
        adj.resize(self.ops.len(), T::zero());
        adj[loss.index as usize] = T::one();
        let vals = &self.values;
        for i in (0..n).rev() {
            let g = adj[i];
            if g == T::zero() {
                continue;
            }
            match self.ops[i] {
                Op::Leaf | Op::Const => {}
                Op::Add(a, b) => {
                    adj[a as usize] = adj[a as usize] + g;
                    adj[b as usize] = adj[b as usize] + g;
                }
                Op::Sub(a, b) => {
                    adj[a as usize] = adj[a as usize] + g;
                    adj[b as usize] = adj[b as usize] - g;
                }
                Op::Mul(a, b) => {
                    let (a, b) = (a as usize, b as usize);
                    let (va, vb) = (vals[a], vals[b]);
                    adj[a] = adj[a] + g * vb;
                    adj[b] = adj[b] + g * va;
                }
                Op::Div(a, b) => {
                    let (a, b) = (a as usize, b as usize);
                    let vb = vals[b];
                    adj[a] = adj[a] + g / vb;
                    adj[b] = adj[b] - g * vals[i] / vb;
                }
                Op::Neg(a) => adj[a as usize] = adj[a as usize] - g,
                Op::Log(a) => adj[a as usize] = adj[a as usize] + g / vals[a as usize],
                Op::Exp(a) => adj[a as usize] = adj[a as usize] + g * vals[i],
                Op::Tanh(a) => {
                    let y = vals[i];
                    adj[a as usize] = adj[a as usize] + g * (T::one() - y * y);
                }
                Op::Logistic(a) => {
                    let y = vals[i];
                    adj[a as usize] = adj[a as usize] + g * y * (T::one() - y);
                }
                Op::Select(a) => adj[a as usize] = adj[a as usize] + g,
                Op::Dot { start, pairs, bias } => {
                    if bias != NO_NODE {
                        adj[bias as usize] = adj[bias as usize] + g;
                    }
                    let start = start as usize;
                    let ops = &self.arena[start..start + 2 * pairs as usize];
                    for pair in ops.chunks_exact(2) {
                        let (a, b) = (pair[0] as usize, pair[1] as usize);
                        let (va, vb) = (vals[a], vals[b]);
                        adj[a] = adj[a] + g * vb;
                        adj[b] = adj[b] + g * va;
                    }
                }
                Op::Sum { start, len } => {
                    let start = start as usize;
                    for &a in &self.arena[start..start + len as usize] {
                        adj[a as usize] = adj[a as usize] + g;
                    }
                }
            }
        }
        Ok(Gradients {
            tape: self.id,
            adjoints: adj,
        })
    }
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    tape: u32,
    adjoints: Vec<T>,
}

impl<T: Real> Gradients<T> {
    /// Adjoint of `v`; zero for nodes the loss does not depend on.
    pub fn get(&self, v: Var<T>) -> T {
        assert_eq!(v.tape, self.tape, "variable from a different tape");
        self.adjoints[v.index as usize]
    }

    pub fn collect(&self, vars: &[Var<T>]) -> Vec<T> {
        vars.iter().map(|&v| self.get(v)).collect()
    }
}
