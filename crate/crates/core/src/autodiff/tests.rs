use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

#[test]
fn product_rule() {
    let mut tape = Tape::<f64>::new();
    let a = tape.leaf(3.0);
    let b = tape.leaf(4.0);
    let loss = tape.mul(a, b);
    let g = tape.backward(loss).unwrap();
    assert_eq!(loss.value(), 12.0);
    assert_eq!(g.get(a), 4.0);
    assert_eq!(g.get(b), 3.0);
}

#[test]
fn log_derivative() {
    let mut tape = Tape::<f64>::new();
    let a = tape.leaf(2.0);
    let loss = tape.log(a);
    assert_eq!(tape.backward(loss).unwrap().get(a), 0.5);
}

#[test]
fn unreachable_leaf_has_zero_adjoint() {
    let mut tape = Tape::<f64>::new();
    let a = tape.leaf(2.0);
    let b = tape.leaf(5.0);
    let loss = tape.exp(a);
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(b), 0.0);
    // nodes recorded after the loss are not part of its graph
    let _later = tape.mul(a, b);
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(b), 0.0);
}

#[test]
fn loss_from_another_tape_is_rejected() {
    let mut other = Tape::<f64>::new();
    let stray = other.leaf(1.0);
    let tape = Tape::<f64>::new();
    assert!(matches!(tape.backward(stray), Err(Error::ForeignVariable)));
}

type Unary = fn(&mut Tape<f64>, Var<f64>) -> Var<f64>;

#[test]
fn unary_primitives_match_textbook_derivatives() {
    let cases: [(&str, Unary, fn(f64) -> f64, (f64, f64)); 5] = [
        ("log", |t, a| t.log(a), |x| 1.0 / x, (0.1, 10.0)),
        ("exp", |t, a| t.exp(a), f64::exp, (-5.0, 5.0)),
        ("tanh", |t, a| t.tanh(a), |x| 1.0 - x.tanh().powi(2), (-4.0, 4.0)),
        (
            "logistic",
            |t, a| t.logistic(a),
            |x| {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 - s)
            },
            (-8.0, 8.0),
        ),
        ("neg", |t, a| t.neg(a), |_| -1.0, (-5.0, 5.0)),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (name, op, deriv, (lo, hi)) in cases {
        for _ in 0..10 {
            let x = rng.random_range(lo..hi);
            let mut tape = Tape::new();
            let a = tape.leaf(x);
            let y = op(&mut tape, a);
            let g = tape.backward(y).unwrap().get(a);
            assert!((g - deriv(x)).abs() < 1e-10, "{name} at {x}: {g} vs {}", deriv(x));
        }
    }
}

#[test]
fn binary_primitives_match_textbook_derivatives() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let x: f64 = rng.random_range(0.5..4.0);
        let y: f64 = rng.random_range(0.5..4.0);
        let mut tape = Tape::new();
        let a = tape.leaf(x);
        let b = tape.leaf(y);
        let add = tape.add(a, b);
        let sub = tape.sub(a, b);
        let mul = tape.mul(a, b);
        let div = tape.div(a, b);
        for (node, da, db) in [
            (add, 1.0, 1.0),
            (sub, 1.0, -1.0),
            (mul, y, x),
            (div, 1.0 / y, -x / (y * y)),
        ] {
            let g = tape.backward(node).unwrap();
            assert!((g.get(a) - da).abs() < 1e-10);
            assert!((g.get(b) - db).abs() < 1e-10);
        }
        let dot = tape.dot(Some(a), [(a, b), (b, b)]);
        let g = tape.backward(dot).unwrap();
        assert!((dot.value() - (x + x * y + y * y)).abs() < 1e-12);
        assert!((g.get(a) - (1.0 + y)).abs() < 1e-10);
        assert!((g.get(b) - (x + 2.0 * y)).abs() < 1e-10);
    }
}

#[test]
fn select_propagates_only_taken_branch() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(1.0);
    let y = tape.leaf(1.0);
    let hi = tape.scale(x, 3.0);
    let lo = tape.scale(y, 7.0);
    // equality takes the >= branch
    let s = tape.select_ge(x, y, hi, lo);
    let g = tape.backward(s).unwrap();
    assert_eq!(g.get(x), 3.0);
    assert_eq!(g.get(y), 0.0);
    assert_eq!(tape.branch_signature(), &[true]);

    let m = tape.max(lo, hi);
    let g = tape.backward(m).unwrap();
    assert_eq!(m.value(), 7.0);
    assert_eq!(g.get(y), 7.0);
    assert_eq!(g.get(x), 0.0);
}

#[test]
fn backward_is_deterministic() {
    let mut tape = Tape::<f64>::new();
    let xs = tape.leaves(&[0.3, -1.2, 2.5]);
    let t = tape.tanh(xs[0]);
    let e = tape.exp(xs[1]);
    let p = tape.dot(None, [(t, e), (xs[2], xs[2])]);
    let loss = tape.logistic(p);
    let first = tape.backward(loss).unwrap().collect(&xs);
    let second = tape.backward(loss).unwrap().collect(&xs);
    assert_eq!(first, second);
}

#[test]
fn quadratic_gradient_check_is_exact() {
    let report = check_gradients(
        |tape, w| {
            let one = tape.constant(1.0);
            let terms: Vec<_> = w
                .iter()
                .map(|&wi| {
                    let d = tape.sub(wi, one);
                    tape.mul(d, d)
                })
                .collect();
            Ok(tape.sum(terms))
        },
        &[0.0, 2.0],
        1e-5,
    )
    .unwrap();
    assert!(report.max_relative_error < 1e-9, "{}", report.max_relative_error);
    assert_eq!(report.kinks().count(), 0);
}

#[test]
fn gradient_check_flags_kinks() {
    // pinball-style loss evaluated exactly at its kink
    let report = check_gradients(
        |tape, v| {
            let diff = tape.sub(v[0], v[1]);
            let over = tape.scale(diff, 0.4);
            let under = tape.scale(diff, -0.6);
            Ok(tape.select_ge(v[0], v[1], over, under))
        },
        &[1.0, 1.0],
        1e-5,
    )
    .unwrap();
    assert_eq!(report.kinks().collect::<Vec<_>>(), vec![0, 1]);
    assert_eq!(report.worst_leaf, None);
}

#[test]
fn gradient_check_rejects_non_finite_loss() {
    let err = check_gradients(|tape, v| Ok(tape.log(v[0])), &[0.0], 1e-5).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)));
    let err = check_gradients(|tape, v| Ok(tape.exp(v[0])), &[1.0], 0.0).unwrap_err();
    assert!(matches!(err, Error::InvalidConfig(_)));
}

/// Random expression over a fixed leaf set, replayable on any tape.
#[derive(Debug, Clone)]
enum Expr {
    Leaf(usize),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Tanh(Box<Expr>),
    Logistic(Box<Expr>),
}

fn expr_strategy(leaves: usize) -> impl Strategy<Value = Expr> {
    let leaf = (0..leaves).prop_map(Expr::Leaf);
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
            inner.clone().prop_map(|a| Expr::Tanh(Box::new(a))),
            inner.prop_map(|a| Expr::Logistic(Box::new(a))),
        ]
    })
}

fn record(expr: &Expr, tape: &mut Tape<f64>, leaves: &[Var<f64>]) -> Var<f64> {
    match expr {
        Expr::Leaf(i) => leaves[*i],
        Expr::Add(a, b) => {
            let (a, b) = (record(a, tape, leaves), record(b, tape, leaves));
            tape.add(a, b)
        }
        Expr::Mul(a, b) => {
            let (a, b) = (record(a, tape, leaves), record(b, tape, leaves));
            tape.mul(a, b)
        }
        Expr::Tanh(a) => {
            let a = record(a, tape, leaves);
            tape.tanh(a)
        }
        Expr::Logistic(a) => {
            let a = record(a, tape, leaves);
            tape.logistic(a)
        }
    }
}

proptest! {
    #[test]
    fn gradient_of_sum_is_sum_of_gradients(
        f in expr_strategy(3),
        g in expr_strategy(3),
        point in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let mut tape = Tape::new();
        let leaves = tape.leaves(&point);
        let fv = record(&f, &mut tape, &leaves);
        let gv = record(&g, &mut tape, &leaves);
        let total = tape.add(fv, gv);
        let df = tape.backward(fv).unwrap().collect(&leaves);
        let dg = tape.backward(gv).unwrap().collect(&leaves);
        let dt = tape.backward(total).unwrap().collect(&leaves);
        for i in 0..3 {
            prop_assert!((dt[i] - (df[i] + dg[i])).abs() <= 1e-12 * (1.0 + dt[i].abs()));
        }
    }

    #[test]
    fn random_graphs_pass_gradient_check(
        f in expr_strategy(3),
        point in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let report = check_gradients(|tape, v| Ok(record(&f, tape, v)), &point, 1e-5).unwrap();
        prop_assert!(report.max_relative_error < 1e-4, "{:?}", report);
    }
}

#[test]
fn reset_disowns_old_variables() {
    let mut tape = Tape::<f64>::new();
    let a = tape.leaf(2.0);
    let b = tape.mul(a, a);
    tape.reset();
    assert!(tape.is_empty());
    assert!(matches!(tape.backward(b), Err(Error::ForeignVariable)));
    let c = tape.leaf(3.0);
    let d = tape.mul(c, c);
    assert_eq!(tape.backward(d).unwrap().get(c), 6.0);
}
