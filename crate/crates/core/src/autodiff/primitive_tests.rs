use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::{Error, Result};

const TOL: f64 = 1e-6;
const H: f64 = 1e-5;

/// Random entries bounded away from zero so kinks (leaky ReLU, norms) stay
/// out of the finite-difference stencil.
fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    let data = (0..r * c)
        .map(|_| {
            let m: f64 = rng.random_range(0.2..1.5);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_vec(r, c, data).unwrap()
}

/// Reduces any output to a scalar through a fixed random projection so every
/// output entry carries a distinct weight.
fn project<'t>(tape: &'t Tape, y: Var<'t>, seed: u64) -> Result<Var<'t>> {
    let [r, c] = y.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = tape.constant(rand_tensor(&mut rng, r, c));
    y.mul(w)?.sum(None)
}

fn check(params: &[Tensor], f: impl for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>) -> f64 {
    let err = finite_difference_check(f, params, H).unwrap();
    assert!(err <= TOL, "relative error {err}");
    err
}

#[test]
fn elementwise_with_broadcasting() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = rand_tensor(&mut rng, 4, 3);
    let row = rand_tensor(&mut rng, 1, 3);
    let col = rand_tensor(&mut rng, 4, 1);
    check(&[a.clone(), row.clone()], |t, p| {
        project(t, p[0].add(p[1])?, 1)
    });
    check(&[a.clone(), col.clone()], |t, p| {
        project(t, p[0].sub(p[1])?, 2)
    });
    check(&[a.clone(), row.clone()], |t, p| {
        project(t, p[0].mul(p[1])?, 3)
    });
    check(&[a.clone(), col.clone()], |t, p| {
        project(t, p[0].div(p[1])?, 4)
    });
    check(&[a.clone(), a.clone()], |t, p| {
        project(t, p[1].div(p[0])?, 5)
    });
    check(std::slice::from_ref(&a), |t, p| {
        project(t, p[0].scale(-2.5).add_scalar(3.0), 6)
    });
}

#[test]
fn matmul_and_reductions() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = rand_tensor(&mut rng, 5, 3);
    let b = rand_tensor(&mut rng, 3, 4);
    check(&[a.clone(), b], |t, p| project(t, p[0].matmul(p[1])?, 7));
    check(std::slice::from_ref(&a), |t, p| {
        project(t, p[0].sum(Some(0))?, 8)
    });
    check(std::slice::from_ref(&a), |t, p| {
        project(t, p[0].sum(Some(1))?, 9)
    });
    check(std::slice::from_ref(&a), |_, p| p[0].mean(None));
    check(std::slice::from_ref(&a), |t, p| {
        project(t, p[0].mean(Some(0))?, 10)
    });
}

#[test]
fn nonlinearities() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = rand_tensor(&mut rng, 6, 2);
    check(std::slice::from_ref(&a), |t, p| {
        project(t, p[0].leaky_relu(0.2), 11)
    });
    check(std::slice::from_ref(&a), |t, p| {
        project(t, p[0].softplus(), 12)
    });
    check(std::slice::from_ref(&a), |t, p| project(t, p[0].exp(), 13));
    check(std::slice::from_ref(&a), |t, p| {
        project(t, p[0].mul(p[0])?.add_scalar(0.1).sqrt(), 14)
    });
    check(std::slice::from_ref(&a), |t, p| {
        project(t, p[0].row_norm(), 15)
    });
}

#[test]
fn indexing_primitives() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = rand_tensor(&mut rng, 5, 3);
    let b = rand_tensor(&mut rng, 5, 2);
    let idx = [4usize, 0, 0, 2, 3, 3, 3];
    check(std::slice::from_ref(&a), |t, p| {
        project(t, p[0].gather_rows(&idx)?, 16)
    });
    check(std::slice::from_ref(&a), |t, p| {
        project(t, p[0].scatter_add_rows(&[1, 1, 0, 3, 1], 4)?, 17)
    });
    check(&[a.clone(), b.clone()], |t, p| {
        project(t, t.concat_cols(&[p[0], p[1], p[0]])?, 18)
    });
    check(std::slice::from_ref(&a), |t, p| {
        project(t, p[0].slice_cols(1, 3)?, 19)
    });
    let logits = rand_tensor(&mut rng, 7, 1);
    let seg = [0usize, 0, 1, 2, 2, 2, 0];
    check(std::slice::from_ref(&logits), |t, p| {
        project(t, p[0].segment_softmax(&seg)?, 20)
    });
    let shift = rand_tensor(&mut rng, 7, 1);
    check(&[shift, logits], |t, p| {
        project(t, p[0].attention_softmax(p[1], &seg, 0.2)?, 22)
    });
    let mats = rand_tensor(&mut rng, 5, 9);
    let vecs = rand_tensor(&mut rng, 5, 3);
    check(&[mats, vecs], |t, p| {
        project(t, p[0].batched_matvec(p[1])?, 21)
    });
}

#[test]
fn named_examples() {
    let tape = Tape::new();
    let x = tape.param(Tensor::scalar(0.7));
    let s = x.segment_softmax(&[0]).unwrap();
    assert_eq!(s.value().item(), 1.0);

    let l = tape.constant(Tensor::scalar(-1.0)).leaky_relu(0.2);
    assert!((l.value().item() + 0.2).abs() < 1e-15);

    let m = tape.constant(Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
    assert_eq!(*m.gather_rows(&[0, 1]).unwrap().value(), *m.value());

    // loss = sum(w ⊙ x) ⇒ ∂loss/∂w = x
    let tape = Tape::new();
    let w = tape.param(Tensor::from_rows(&[[0.3, -1.0, 2.0]]));
    let xs = Tensor::from_rows(&[[4.0, 5.0, -6.0]]);
    let loss = w.mul(tape.constant(xs.clone())).unwrap().sum(None).unwrap();
    assert_eq!(tape.backward(loss).unwrap().wrt(w), xs);

    // softplus'(0) = 1/2
    let tape = Tape::new();
    let z = tape.param(Tensor::scalar(0.0));
    let g = tape.backward(z.softplus()).unwrap();
    assert_eq!(g.wrt(z).item(), 0.5);
}

#[test]
fn attention_softmax_matches_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let seg = [0usize, 0, 1, 2, 2, 2, 0, 1];
    for _ in 0..20 {
        let u = rand_tensor(&mut rng, 8, 1);
        let v = rand_tensor(&mut rng, 8, 1);
        let tape = Tape::new();
        let (a, b) = (tape.constant(u), tape.constant(v));
        let fused = a.attention_softmax(b, &seg, 0.2).unwrap().value();
        let plain = a
            .add(b)
            .unwrap()
            .leaky_relu(0.2)
            .segment_softmax(&seg)
            .unwrap()
            .value();
        for (x, y) in fused.data().iter().zip(plain.data()) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}

#[test]
fn attention_softmax_ignores_constant_shift_exactly() {
    // all pre-activations positive: a per-segment shift of u is a no-op
    let seg = [0usize, 0, 0, 1, 1];
    let v = Tensor::from_rows(&[[0.3], [1.1], [0.7], [2.0], [0.4]]);
    let tape = Tape::new();
    let base = tape.constant(Tensor::from_rows(&[[1.0], [1.0], [1.0], [2.5], [2.5]]));
    let moved = tape.constant(Tensor::from_rows(&[
        [1.0 + 1e-5],
        [1.0 + 1e-5],
        [1.0 + 1e-5],
        [2.5],
        [2.5],
    ]));
    let vv = tape.constant(v);
    let a = base.attention_softmax(vv, &seg, 0.2).unwrap().value();
    let b = moved.attention_softmax(vv, &seg, 0.2).unwrap().value();
    assert_eq!(a, b);
}

#[test]
fn quadratic_and_unused_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = rand_tensor(&mut rng, 3, 3);
    let unused = rand_tensor(&mut rng, 2, 2);
    let err = finite_difference_check(
        |t, p| {
            let q = p[0].mul(p[0])?.scale(0.5).sum(None)?;
            let _ = p[1];
            let _ = t;
            Ok(q)
        },
        &[a, unused.clone()],
        H,
    )
    .unwrap();
    assert!(err <= 1e-9, "{err}");

    let tape = Tape::new();
    let used = tape.param(Tensor::scalar(2.0));
    let idle = tape.param(unused);
    let loss = used.mul(used).unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.wrt(idle), Tensor::zeros(2, 2));
    assert_eq!(g.wrt(used).item(), 4.0);
}

#[test]
fn error_paths() {
    let tape = Tape::new();
    let a = tape.param(Tensor::zeros(2, 3));
    let b = tape.param(Tensor::zeros(2, 2));
    assert!(matches!(
        a.matmul(b),
        Err(Error::ShapeMismatch { op: "matmul", .. })
    ));
    match a.add(b) {
        Err(Error::ShapeMismatch { lhs, rhs, .. }) => assert_eq!((lhs, rhs), ([2, 3], [2, 2])),
        other => panic!("{other:?}"),
    }
    assert!(a.gather_rows(&[2]).is_err());
    assert!(a.segment_softmax(&[0, 0]).is_err());
    assert!(matches!(tape.backward(a), Err(Error::InvalidInput(_))));

    let tape = Tape::new();
    let z = tape.param(Tensor::scalar(0.0));
    let bad = tape.constant(Tensor::scalar(1.0)).div(z).unwrap();
    assert!(tape.fault().is_some());
    assert!(matches!(tape.backward(bad), Err(Error::NonFinite(_))));
}

#[test]
fn replay_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = rand_tensor(&mut rng, 8, 4);
    let b = rand_tensor(&mut rng, 4, 4);
    let run = || {
        let tape = Tape::new();
        let (x, w) = (tape.param(a.clone()), tape.param(b.clone()));
        let y = x
            .matmul(w)
            .unwrap()
            .leaky_relu(0.2)
            .softplus()
            .mean(None)
            .unwrap();
        y.value().item()
    };
    assert_eq!(run().to_bits(), run().to_bits());
}
