use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

use super::{finite_difference_check, Tape, Tensor, Var};

/// Entries of magnitude in `[0.2, 1.5)` with random sign, so kinks stay out
/// of the difference stencil.
fn away_from_zero(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
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
    Tensor::from_vec(r, c, data).expect("sized to fit")
}

fn project<'t>(tape: &'t Tape, y: Var<'t>, seed: u64) -> Result<Var<'t>> {
    let [r, c] = y.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = tape.constant(away_from_zero(&mut rng, r, c));
    y.mul(w)?.sum(None)
}

/// Runs a finite-difference check (`h = 1e-5`) on every differentiable
/// primitive and returns `(name, max relative error)` per primitive.
pub fn primitive_gradient_suite() -> Result<Vec<(&'static str, f64)>> {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = away_from_zero(&mut rng, 4, 3);
    let b = away_from_zero(&mut rng, 3, 4);
    let row = away_from_zero(&mut rng, 1, 3);
    let col = away_from_zero(&mut rng, 4, 1);
    let logits = away_from_zero(&mut rng, 7, 1);
    let shift = away_from_zero(&mut rng, 7, 1);
    let mats = away_from_zero(&mut rng, 4, 9);
    let vecs = away_from_zero(&mut rng, 4, 3);
    let seg = [0usize, 0, 1, 2, 2, 2, 0];
    let idx = [3usize, 0, 0, 2, 1, 1];

    let mut out = Vec::new();
    macro_rules! run {
        ($name:expr, $params:expr, $f:expr) => {
            out.push(($name, finite_difference_check($f, $params, H)?));
        };
    }
    run!("matmul", &[a.clone(), b.clone()], |t, p| project(
        t,
        p[0].matmul(p[1])?,
        1
    ));
    run!("add", &[a.clone(), row.clone()], |t, p| project(
        t,
        p[0].add(p[1])?,
        2
    ));
    run!("sub", &[a.clone(), col.clone()], |t, p| project(
        t,
        p[0].sub(p[1])?,
        3
    ));
    run!("mul", &[a.clone(), row.clone()], |t, p| project(
        t,
        p[0].mul(p[1])?,
        4
    ));
    run!("div", &[a.clone(), col.clone()], |t, p| project(
        t,
        p[0].div(p[1])?,
        5
    ));
    run!("concat", &[a.clone(), col.clone()], |t, p| project(
        t,
        t.concat_cols(&[p[0], p[1]])?,
        6
    ));
    run!("gather_rows", std::slice::from_ref(&a), |t, p| project(
        t,
        p[0].gather_rows(&idx)?,
        7
    ));
    run!(
        "scatter_add_rows",
        std::slice::from_ref(&a),
        |t, p| project(t, p[0].scatter_add_rows(&[1, 1, 0, 2], 3)?, 8)
    );
    run!("slice_cols", std::slice::from_ref(&a), |t, p| project(
        t,
        p[0].slice_cols(1, 3)?,
        9
    ));
    run!("sum", std::slice::from_ref(&a), |t, p| project(
        t,
        p[0].sum(Some(0))?,
        10
    ));
    run!("mean", std::slice::from_ref(&a), |t, p| project(
        t,
        p[0].mean(Some(1))?,
        11
    ));
    run!("leaky_relu", std::slice::from_ref(&a), |t, p| project(
        t,
        p[0].leaky_relu(0.2),
        12
    ));
    run!("softplus", std::slice::from_ref(&a), |t, p| project(
        t,
        p[0].softplus(),
        13
    ));
    run!("exp", std::slice::from_ref(&a), |t, p| project(
        t,
        p[0].exp(),
        14
    ));
    run!("sqrt", std::slice::from_ref(&a), |t, p| project(
        t,
        p[0].mul(p[0])?.add_scalar(0.1).sqrt(),
        15
    ));
    run!("segment_softmax", std::slice::from_ref(&logits), |t, p| {
        project(t, p[0].segment_softmax(&seg)?, 16)
    });
    run!("attention_softmax", &[shift, logits], |t, p| project(
        t,
        p[0].attention_softmax(p[1], &seg, 0.2)?,
        17
    ));
    run!("row_norm", std::slice::from_ref(&a), |t, p| project(
        t,
        p[0].row_norm(),
        18
    ));
    run!("batched_matvec", &[mats, vecs], |t, p| project(
        t,
        p[0].batched_matvec(p[1])?,
        19
    ));
    Ok(out)
}
