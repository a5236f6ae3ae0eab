use super::check::check_gradients;
use super::*;
use crate::error::{Error, Result};
use alloc::sync::Arc;
use alloc::vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn positive(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(0.2..2.0)).collect(),
    )
    .unwrap()
}

/// Reduces any output to a scalar with fixed random weights so every entry
/// of the output gradient is exercised.
fn weighted_sum(tape: &mut Tape<'_>, out: Var, seed: u64) -> Result<Var> {
    let [r, c] = tape.shape(out);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = tape.constant(random(&mut rng, r, c))?;
    let prod = tape.mul(out, w)?;
    tape.sum(prod, None)
}

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    (
        rng.random_range(1..=6),
        rng.random_range(1..=6),
        rng.random_range(1..=6),
    )
}

fn assert_check(name: &str, seed: u64, inputs: &[Tensor], f: impl Fn(&mut Tape<'_>, &[Var]) -> Result<Var>) {
    let report = check_gradients(inputs, H, f).unwrap();
    assert!(
        report.max_relative_error < TOL,
        "{name} seed {seed}: relative error {}",
        report.max_relative_error
    );
}

#[test]
fn every_kernel_passes_finite_differences() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, k, c) = dims(&mut rng);

        let a = random(&mut rng, r, k);
        let b = random(&mut rng, k, c);
        assert_check("matmul", seed, &[a, b], |t, v| {
            let y = t.matmul(v[0], v[1])?;
            weighted_sum(t, y, seed)
        });

        let x = random(&mut rng, r, c);
        for shape in [[r, c], [1, c], [r, 1], [1, 1]] {
            let y = random(&mut rng, shape[0], shape[1]);
            assert_check("add", seed, &[x.clone(), y.clone()], |t, v| {
                let o = t.add(v[0], v[1])?;
                weighted_sum(t, o, seed)
            });
            assert_check("sub", seed, &[x.clone(), y.clone()], |t, v| {
                let o = t.sub(v[0], v[1])?;
                weighted_sum(t, o, seed)
            });
            assert_check("mul", seed, &[x.clone(), y.clone()], |t, v| {
                let o = t.mul(v[0], v[1])?;
                weighted_sum(t, o, seed)
            });
        }

        assert_check("scale", seed, core::slice::from_ref(&x), |t, v| {
            let o = t.scale(v[0], -1.7)?;
            weighted_sum(t, o, seed)
        });
        for axis in [0, 1] {
            assert_check("softmax", seed, core::slice::from_ref(&x), |t, v| {
                let o = t.softmax(v[0], axis)?;
                weighted_sum(t, o, seed)
            });
            assert_check("sum", seed, core::slice::from_ref(&x), |t, v| {
                let o = t.sum(v[0], Some(axis))?;
                weighted_sum(t, o, seed)
            });
            assert_check("mean", seed, core::slice::from_ref(&x), |t, v| {
                let o = t.mean(v[0], Some(axis))?;
                weighted_sum(t, o, seed)
            });
        }
        assert_check("mean_all", seed, core::slice::from_ref(&x), |t, v| {
            let o = t.mean(v[0], None)?;
            t.scale(o, 3.0)
        });
        assert_check("exp", seed, core::slice::from_ref(&x), |t, v| {
            let o = t.exp(v[0])?;
            weighted_sum(t, o, seed)
        });
        assert_check("log", seed, &[positive(&mut rng, r, c)], |t, v| {
            let o = t.log(v[0])?;
            weighted_sum(t, o, seed)
        });
        assert_check("elu", seed, core::slice::from_ref(&x), |t, v| {
            let o = t.elu(v[0], 1.0)?;
            weighted_sum(t, o, seed)
        });
        assert_check("l2_norm", seed, core::slice::from_ref(&x), |t, v| t.l2_norm(v[0]));

        let idx: Arc<[usize]> = (0..r + 2).map(|_| rng.random_range(0..r)).collect();
        let i2 = idx.clone();
        assert_check("gather_rows", seed, core::slice::from_ref(&x), move |t, v| {
            let o = t.gather_rows(v[0], i2.clone())?;
            weighted_sum(t, o, seed)
        });
        let src = random(&mut rng, idx.len(), c);
        assert_check("scatter_add_rows", seed, &[src], move |t, v| {
            let o = t.scatter_add_rows(v[0], idx.clone(), r)?;
            weighted_sum(t, o, seed)
        });

        let m = rng.random_range(1..=4);
        let q = random(&mut rng, r, m);
        let p = random(&mut rng, r, m * c);
        assert_check("block_weighted_sum", seed, &[q, p], |t, v| {
            let o = t.block_weighted_sum(v[0], v[1])?;
            weighted_sum(t, o, seed)
        });
        assert_check("reshape", seed, core::slice::from_ref(&x), |t, v| {
            let o = t.reshape(v[0], c, r)?;
            weighted_sum(t, o, seed)
        });
        let edges = Arc::new(random_edges(&mut rng, r));
        let q = random(&mut rng, edges.len(), m);
        let p = random(&mut rng, r, m * c);
        assert_check("edge_aggregate", seed, &[q, p], |t, v| {
            let o = t.edge_aggregate(v[0], v[1], edges.clone())?;
            weighted_sum(t, o, seed)
        });
    }
}

fn random_edges(rng: &mut ChaCha8Rng, rows: usize) -> EdgeIndex {
    let e = rng.random_range(1..=3 * rows);
    let centers = (0..e).map(|_| rng.random_range(0..rows)).collect();
    let sources = (0..e).map(|_| rng.random_range(0..rows)).collect();
    let weights = (0..e).map(|_| rng.random_range(0.1..1.0)).collect();
    EdgeIndex::new(rows, centers, sources, weights).unwrap()
}

#[test]
fn edge_aggregate_matches_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (rows, m, k) = (5, 3, 2);
    let edges = Arc::new(random_edges(&mut rng, rows));
    let q = random(&mut rng, edges.len(), m);
    let p = random(&mut rng, rows, m * k);
    let mut tape = Tape::new();
    let (qv, pv) = (tape.constant(q.clone()).unwrap(), tape.constant(p.clone()).unwrap());
    let out = tape.edge_aggregate(qv, pv, edges.clone()).unwrap();
    let mut expected = vec![0.0; rows * k];
    for e in 0..edges.len() {
        let (i, j, w) = (edges.centers()[e], edges.sources()[e], edges.weights()[e]);
        for f in 0..m {
            for o in 0..k {
                expected[i * k + o] += w * q.get(e, f) * p.get(j, f * k + o);
            }
        }
    }
    for (a, b) in tape.value(out).data().iter().zip(&expected) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn two_layer_mlp_passes_finite_differences() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = random(&mut rng, 5, 4);
        let w1 = random(&mut rng, 4, 6);
        let b1 = random(&mut rng, 1, 6);
        let w2 = random(&mut rng, 6, 3);
        let target = random(&mut rng, 5, 3);
        assert_check("mlp", seed, &[x, w1, b1, w2], |t, v| {
            let h = t.matmul(v[0], v[1])?;
            let h = t.add(h, v[2])?;
            let h = t.elu(h, 1.0)?;
            let y = t.matmul(h, v[3])?;
            let y = t.softmax(y, 1)?;
            let tgt = t.constant(target.clone())?;
            let r = t.sub(y, tgt)?;
            t.l2_norm(r)
        });
    }
}

#[test]
fn kernel_examples() {
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::zeros(2, 5)).unwrap();
    let s = tape.softmax(z, 1).unwrap();
    assert!(tape.value(s).data().iter().all(|&q| (q - 0.2).abs() < 1e-15));

    // scatter of disjoint rows then gather is the identity
    let x = Tensor::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let xv = tape.constant(x.clone()).unwrap();
    let idx: Arc<[usize]> = Arc::from(vec![4, 0, 2]);
    let scattered = tape.scatter_add_rows(xv, idx.clone(), 5).unwrap();
    let back = tape.gather_rows(scattered, idx).unwrap();
    assert_eq!(tape.value(back), &x);
}

#[test]
fn shape_mismatch_names_kernel() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(2, 3)).unwrap();
    let b = tape.constant(Tensor::zeros(2, 3)).unwrap();
    match tape.matmul(a, b) {
        Err(Error::ShapeMismatch { kernel, lhs, rhs }) => {
            assert_eq!(kernel, "matmul");
            assert_eq!(lhs, [2, 3]);
            assert_eq!(rhs, [2, 3]);
        }
        other => panic!("unexpected {other:?}"),
    }
    let c = tape.constant(Tensor::zeros(3, 2)).unwrap();
    assert!(matches!(
        tape.add(a, c),
        Err(Error::ShapeMismatch { kernel: "add", .. })
    ));
}

#[test]
fn non_finite_values_are_surfaced() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::row(vec![-1.0])).unwrap();
    assert_eq!(tape.log(a), Err(Error::NonFinite { kernel: "log" }));
    let big = tape.constant(Tensor::row(vec![1000.0])).unwrap();
    assert_eq!(tape.exp(big), Err(Error::NonFinite { kernel: "exp" }));
}

#[test]
fn backward_examples() {
    let mut store = ParamStore::new();
    let p = store.add("p", Tensor::from_vec(2, 2, vec![1.0, -2.0, 3.0, 0.5]).unwrap());
    let unused = store.add("unused", Tensor::zeros(1, 3));
    let grads = {
        let mut tape = Tape::with_params(&store);
        let pv = tape.param(p);
        let loss = tape.sum(pv, None).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(tape.backward(loss).unwrap_err(), Error::BackwardTwice);
        grads.param_grads(store.len())
    };
    store.accumulate(&grads);
    assert!(store.get(p).grad().data().iter().all(|&g| g == 1.0));
    assert!(store.get(unused).grad().data().iter().all(|&g| g == 0.0));
}

#[test]
fn squared_norm_of_linear_map_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let w = random(&mut rng, 3, 4);
    let x = random(&mut rng, 4, 1);
    assert_check("||Wx||^2", 0, &[w, x], |t, v| {
        let y = t.matmul(v[0], v[1])?;
        let sq = t.mul(y, y)?;
        t.sum(sq, None)
    });
}

#[test]
fn frozen_tape_skips_parameter_gradients() {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::from_vec(2, 1, vec![2.0, 3.0]).unwrap());
    let mut tape = Tape::frozen(&store);
    let z = tape.input(Tensor::row(vec![1.0, 1.0])).unwrap();
    let wv = tape.param(w);
    let y = tape.matmul(z, wv).unwrap();
    let loss = tape.sum(y, None).unwrap();
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.wrt(z).unwrap().data(), &[2.0, 3.0]);
    assert!(grads.param_grads(1).get(w).is_none());
}

#[test]
fn sgd_single_step() {
    let mut store = ParamStore::new();
    let p = store.add("p", Tensor::scalar(0.0));
    let mut g = ParamGrads::empty(1);
    g.add(p, &Tensor::scalar(1.0));
    store.accumulate(&g);
    let mut opt = OptimizerState::sgd(0.1);
    opt.step(&mut store);
    assert!((store.value(p).item() + 0.1).abs() < 1e-15);
    assert_eq!(store.get(p).grad().item(), 0.0);
}

#[test]
fn adam_first_step_matches_hand_expansion() {
    for g in [0.3, -2.5, 1e-3] {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::scalar(1.0));
        let mut grads = ParamGrads::empty(1);
        grads.add(p, &Tensor::scalar(g));
        store.accumulate(&grads);
        let lr = 1e-2;
        let mut opt = OptimizerState::adam(lr);
        opt.step(&mut store);
        // m1 = 0.1 g, v1 = 0.001 g², m̂ = g, v̂ = g²
        let m_hat = (0.1 * g) / (1.0 - 0.9);
        let v_hat = (0.001 * g * g) / (1.0 - 0.999);
        let expected = 1.0 - lr * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((store.value(p).item() - expected).abs() < 1e-15);
        // direction only depends on sign(g) up to ε
        assert!((store.value(p).item() - (1.0 - lr * g.signum())).abs() < 1e-5);
    }
}

#[test]
fn adam_first_step_is_scale_invariant() {
    let run = |scale: f64| {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::row(vec![0.0; 3]));
        let mut grads = ParamGrads::empty(1);
        grads.add(p, &Tensor::row(vec![0.5 * scale, -1.5 * scale, 3.0 * scale]));
        store.accumulate(&grads);
        let mut opt = OptimizerState::adam(1e-3);
        opt.step(&mut store);
        store.value(p).clone()
    };
    let (a, b) = (run(1.0), run(37.0));
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn adam_converges_on_quadratic_bowl() {
    let mut store = ParamStore::new();
    let p = store.add("x", Tensor::scalar(3.0));
    let mut opt = OptimizerState::adam(0.01);
    let mut converged_at = None;
    for step in 0..5000 {
        let x = store.value(p).item();
        if (x - 1.0).abs() < 1e-6 {
            converged_at = Some(step);
            break;
        }
        let grads = {
            let mut tape = Tape::with_params(&store);
            let xv = tape.param(p);
            let one = tape.constant(Tensor::scalar(1.0)).unwrap();
            let d = tape.sub(xv, one).unwrap();
            let sq = tape.mul(d, d).unwrap();
            tape.backward(sq).unwrap().param_grads(1)
        };
        store.accumulate(&grads);
        opt.step(&mut store);
    }
    assert!(converged_at.is_some(), "final x = {}", store.value(p).item());
}

#[test]
fn shared_parameter_gradients_accumulate() {
    let mut store = ParamStore::new();
    let p = store.add("p", Tensor::row(vec![1.0, 2.0]));
    let mut tape = Tape::with_params(&store);
    let a = tape.param(p);
    let b = tape.param(p);
    let prod = tape.mul(a, b).unwrap();
    let loss = tape.sum(prod, None).unwrap();
    let g = tape.backward(loss).unwrap().param_grads(1);
    assert_eq!(g.get(p).unwrap().data(), &[2.0, 4.0]);
}
