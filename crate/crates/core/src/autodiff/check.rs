use crate::error::{Error, Result};

use super::{Tape, Tensor, Var};

/// Worst coordinate found by [`finite_difference_report`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FdReport {
    pub max_rel_error: f64,
    /// Parameter and flat coordinate of the worst entry.
    pub param: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

/// Compares tape gradients of the scalar `f(params)` against central
/// differences `(f(p+h) - f(p-h)) / 2h`, coordinate by coordinate. Returns
/// the largest `|a - g| / (|a| + |g| + 1e-12)`.
pub fn finite_difference_check<F>(f: F, params: &[Tensor], h: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    Ok(finite_difference_report(f, params, h)?.max_rel_error)
}

pub fn finite_difference_report<F>(f: F, params: &[Tensor], h: f64) -> Result<FdReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let loss = f(&tape, &vars)?;
        tape.check()?;
        let v = loss.value();
        if v.shape() != [1, 1] {
            return Err(Error::invalid("checked function must return a scalar"));
        }
        Ok(v.item())
    };

    let tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars.iter().map(|v| grads.wrt(*v)).collect();

    let mut report = FdReport::default();
    let mut work = params.to_vec();
    for (pi, g) in analytic.iter().enumerate() {
        for ci in 0..g.len() {
            let orig = work[pi].data()[ci];
            work[pi].data_mut()[ci] = orig + h;
            let up = eval(&work)?;
            work[pi].data_mut()[ci] = orig - h;
            let down = eval(&work)?;
            work[pi].data_mut()[ci] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = g.data()[ci];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-12);
            report.coordinates += 1;
            if err > report.max_rel_error {
                report = FdReport {
                    max_rel_error: err,
                    param: pi,
                    index: ci,
                    analytic: a,
                    numeric,
                    coordinates: report.coordinates,
                };
            }
        }
    }
    Ok(report)
}
