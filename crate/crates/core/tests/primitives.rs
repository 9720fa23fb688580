//! Finite-difference checks of every tape primitive on random 3x4 inputs,
//! plus gradient bookkeeping (linearity, accumulation, zeroing).

use cdgin::diffcore::gradcheck::{self, GradcheckReport};
use cdgin::diffcore::{Axis, ParamStore, Tape, Tensor, Var};
use cdgin::matrix::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-6;
const STEP: f64 = 1e-5;

fn random(rows: usize, cols: usize, lo: f64, hi: f64, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

fn tensor(m: &Matrix) -> Tensor {
    Tensor::new(vec![m.rows(), m.cols()], m.as_slice().to_vec())
}

/// Checks `sum(f(params) * W)` for a fixed random `W`, over every coordinate.
fn check(inputs: &[(&str, Matrix)], f: impl Fn(&mut Tape, &[Var]) -> Var) -> GradcheckReport {
    let mut store = ParamStore::new();
    for (name, m) in inputs {
        store.insert(*name, tensor(m));
    }
    let names: Vec<&str> = inputs.iter().map(|(n, _)| *n).collect();
    let coords = gradcheck::sample_coordinates(&store, usize::MAX, 0);
    gradcheck::check(&store, &coords, STEP, |ps, with_grad| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = names.iter().map(|n| tape.param(ps, n)).collect();
        let out = f(&mut tape, &vars);
        let (r, c) = tape.shape(out);
        let w = tape.constant(random(r, c, -1.0, 1.0, 99));
        let weighted = tape.mul(out, w);
        let loss = tape.sum(weighted);
        if with_grad {
            tape.backward(loss, ps, 1.0)?;
        }
        Ok(tape.scalar(loss))
    })
    .unwrap()
}

fn assert_ok(name: &str, r: GradcheckReport) {
    assert!(r.max_rel_error < TOL, "{name}: {r:?}");
}

fn x() -> Matrix {
    random(3, 4, -2.0, 2.0, 1)
}

fn y() -> Matrix {
    random(3, 4, -2.0, 2.0, 2)
}

fn positive() -> Matrix {
    random(3, 4, 0.5, 3.0, 3)
}

#[test]
fn elementwise_binary() {
    assert_ok("add", check(&[("x", x()), ("y", y())], |t, v| t.add(v[0], v[1])));
    assert_ok("sub", check(&[("x", x()), ("y", y())], |t, v| t.sub(v[0], v[1])));
    assert_ok("mul", check(&[("x", x()), ("y", y())], |t, v| t.mul(v[0], v[1])));
    assert_ok("div", check(&[("x", x()), ("y", positive())], |t, v| t.div(v[0], v[1])));
}

#[test]
fn broadcasting_binary() {
    let row = random(1, 4, 0.5, 2.0, 4);
    let col = random(3, 1, 0.5, 2.0, 5);
    let one = random(1, 1, 0.5, 2.0, 6);
    for (name, b) in [("row", row), ("col", col), ("scalar", one)] {
        assert_ok(name, check(&[("x", x()), ("b", b.clone())], |t, v| t.add(v[0], v[1])));
        assert_ok(name, check(&[("x", x()), ("b", b.clone())], |t, v| t.sub(v[1], v[0])));
        assert_ok(name, check(&[("x", x()), ("b", b.clone())], |t, v| t.mul(v[0], v[1])));
        assert_ok(name, check(&[("x", x()), ("b", b.clone())], |t, v| t.div(v[0], v[1])));
        assert_ok(name, check(&[("x", positive()), ("b", b.clone())], |t, v| t.div(v[1], v[0])));
    }
}

#[test]
fn matmul() {
    let b = random(4, 2, -1.0, 1.0, 7);
    assert_ok("matmul", check(&[("x", x()), ("b", b)], |t, v| t.matmul(v[0], v[1])));
}

#[test]
fn elementwise_unary() {
    assert_ok("scale", check(&[("x", x())], |t, v| t.scale(v[0], -1.7)));
    assert_ok("offset", check(&[("x", x())], |t, v| t.offset(v[0], 0.3)));
    assert_ok("sigmoid", check(&[("x", x())], |t, v| t.sigmoid(v[0])));
    assert_ok("tanh", check(&[("x", x())], |t, v| t.tanh(v[0])));
    assert_ok("exp", check(&[("x", x())], |t, v| t.exp(v[0])));
    assert_ok("log", check(&[("x", positive())], |t, v| t.log(v[0])));
    assert_ok("sqrt", check(&[("x", positive())], |t, v| t.sqrt(v[0])));
    // inputs in [0.5, 3) sit above the floor, so floor_at is the identity here
    assert_ok("floor_at", check(&[("x", positive())], |t, v| t.floor_at(v[0], 0.1)));
}

#[test]
fn floor_at_clamps_gradient() {
    let mut store = ParamStore::new();
    store.insert("x", Tensor::new(vec![1, 3], vec![-1.0, 0.05, 2.0]));
    let mut tape = Tape::new();
    let x = tape.param(&store, "x");
    let y = tape.floor_at(x, 0.1);
    let loss = tape.sum(y);
    tape.backward(loss, &mut store, 1.0).unwrap();
    assert_eq!(tape.value(y).as_slice(), &[0.1, 0.1, 2.0]);
    assert_eq!(store.grad("x").unwrap(), &[0.0, 0.0, 1.0]);
}

#[test]
fn reductions() {
    assert_ok("softmax_rows", check(&[("x", x())], |t, v| t.softmax_rows(v[0])));
    assert_ok("sum", check(&[("x", x())], |t, v| t.sum(v[0])));
    for axis in [Axis::Rows, Axis::Cols] {
        assert_ok("sum_axis", check(&[("x", x())], |t, v| t.sum_axis(v[0], axis)));
        assert_ok("mean_axis", check(&[("x", x())], |t, v| t.mean_axis(v[0], axis)));
        assert_ok("max_axis", check(&[("x", x())], |t, v| t.max_axis(v[0], axis)));
    }
}

#[test]
fn structural() {
    assert_ok("transpose", check(&[("x", x())], |t, v| t.transpose(v[0])));
    assert_ok("slice_rows", check(&[("x", x())], |t, v| t.slice_rows(v[0], 1, 2)));
    assert_ok("slice_cols", check(&[("x", x())], |t, v| t.slice_cols(v[0], 1, 3)));
    assert_ok("concat_cols", check(&[("x", x()), ("y", y())], |t, v| t.concat_cols(&[v[0], v[1], v[0]])));
    assert_ok("concat_rows", check(&[("x", x()), ("y", y())], |t, v| t.concat_rows(&[v[1], v[0]])));
}

#[test]
fn conv1d() {
    // 3 channels x 4 positions, 2 output channels, width 3, pad 1
    let k = random(2, 9, -1.0, 1.0, 8);
    assert_ok("conv1d", check(&[("x", x()), ("k", k)], |t, v| t.conv1d(v[0], v[1], 3, 1)));
    let k = random(1, 6, -1.0, 1.0, 9);
    assert_ok("conv1d_nopad", check(&[("x", x()), ("k", k)], |t, v| t.conv1d(v[0], v[1], 2, 0)));
}

#[test]
fn composite_expression() {
    let b = random(4, 4, -1.0, 1.0, 10);
    let r = check(&[("x", x()), ("b", b)], |t, v| {
        let h = t.matmul(v[0], v[1]);
        let h = t.tanh(h);
        let s = t.softmax_rows(h);
        let m = t.max_axis(s, Axis::Rows);
        let e = t.exp(v[0]);
        let l = t.log(e);
        let lm = t.mean_axis(l, Axis::Rows);
        t.add(m, lm)
    });
    assert_ok("composite", r);
}

fn grad_of(seed: f64, calls: usize) -> Vec<f64> {
    let mut store = ParamStore::new();
    store.insert("x", tensor(&x()));
    for _ in 0..calls {
        let mut tape = Tape::new();
        let v = tape.param(&store, "x");
        let s = tape.sigmoid(v);
        let loss = tape.sum(s);
        tape.backward(loss, &mut store, seed).unwrap();
    }
    store.grad("x").unwrap().to_vec()
}

#[test]
fn gradients_scale_with_seed_and_accumulate() {
    let one = grad_of(1.0, 1);
    let scaled = grad_of(2.5, 1);
    let twice = grad_of(1.0, 2);
    for i in 0..one.len() {
        assert!((scaled[i] - 2.5 * one[i]).abs() < 1e-15);
        assert!((twice[i] - 2.0 * one[i]).abs() < 1e-15);
    }
}

#[test]
fn gradient_of_sum_is_sum_of_gradients() {
    let mut store = ParamStore::new();
    store.insert("x", tensor(&x()));
    let run = |store: &mut ParamStore, which: u8| {
        store.zero_grad();
        let mut tape = Tape::new();
        let v = tape.param(store, "x");
        let a = tape.tanh(v);
        let b = tape.exp(v);
        let out = match which {
            0 => a,
            1 => b,
            _ => tape.add(a, b),
        };
        let loss = tape.sum(out);
        tape.backward(loss, store, 1.0).unwrap();
        store.grad("x").unwrap().to_vec()
    };
    let (ga, gb, gab) = (run(&mut store, 0), run(&mut store, 1), run(&mut store, 2));
    for i in 0..ga.len() {
        assert!((gab[i] - ga[i] - gb[i]).abs() < 1e-12);
    }
}

#[test]
fn zero_grad_clears_and_unused_params_stay_clear() {
    let mut store = ParamStore::new();
    store.insert("used", tensor(&x()));
    store.insert("unused", tensor(&y()));
    let mut tape = Tape::new();
    let v = tape.param(&store, "used");
    let loss = tape.sum(v);
    tape.backward(loss, &mut store, 1.0).unwrap();
    assert!(store.grad("used").unwrap().iter().all(|&g| g == 1.0));
    assert!(store.grad("unused").is_none());
    store.zero_grad();
    assert!(!store.has_grad());
}
