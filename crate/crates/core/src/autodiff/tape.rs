use std::cell::RefCell;
use std::rc::Rc;

use ndarray::{Array2, Axis, Zip};

use crate::error::{Error, Result};

use super::Tensor;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Concat(Vec<usize>),
    SliceCols(usize, usize),
    GatherRows(usize, Rc<[usize]>),
    ScatterAddRows(usize, Rc<[usize]>),
    SumAll(usize),
    SumAxis(usize, usize),
    LeakyRelu(usize, f64),
    Softplus(usize),
    Exp(usize),
    Sqrt(usize),
    SegmentSoftmax(usize, Rc<[usize]>),
    AttentionSoftmax(usize, usize, f64, Rc<[usize]>),
    RowNorm(usize),
    BatchedMatVec(usize, usize),
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Records operations for one forward pass. Single-owner: build a fresh
/// tape per sample (tapes on different threads are independent).
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    fault: RefCell<Option<String>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Gradients of a scalar with respect to every node that required them.
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<Tensor> {
        self.grads
            .get(v.id)
            .and_then(|g| g.clone())
            .map(Tensor::from_array)
    }

    /// Gradient of `v`, zeros when the loss does not depend on it.
    pub fn wrt(&self, v: Var<'_>) -> Tensor {
        self.get(v).unwrap_or_else(|| {
            let [r, c] = v.shape();
            Tensor::zeros(r, c)
        })
    }
}

fn broadcast_shape(op: &'static str, a: [usize; 2], b: [usize; 2]) -> Result<[usize; 2]> {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else {
            None
        }
    };
    match (dim(a[0], b[0]), dim(a[1], b[1])) {
        (Some(r), Some(c)) => Ok([r, c]),
        _ => Err(Error::ShapeMismatch { op, lhs: a, rhs: b }),
    }
}

/// Sums `g` down to `shape`, undoing broadcasting.
fn reduce_to(g: Array2<f64>, shape: [usize; 2]) -> Array2<f64> {
    let mut g = g;
    if shape[0] == 1 && g.nrows() != 1 {
        g = g.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if shape[1] == 1 && g.ncols() != 1 {
        g = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    g
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trainable leaf.
    pub fn param(&self, t: Tensor) -> Var<'_> {
        self.push(t, Op::Leaf, true, "param")
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, t: Tensor) -> Var<'_> {
        self.push(t, Op::Leaf, false, "constant")
    }

    /// Smallest distance of any recorded LeakyReLU input (fused attention
    /// included) from the kink at zero; infinity when there is none.
    pub fn kink_margin(&self) -> f64 {
        let nodes = self.nodes.borrow();
        let mut m = f64::INFINITY;
        for n in nodes.iter() {
            match &n.op {
                Op::LeakyRelu(a, _) => {
                    m = nodes[*a].value.data().iter().fold(m, |m, x| m.min(x.abs()));
                }
                Op::AttentionSoftmax(u, v, _, _) => {
                    let (u, v) = (nodes[*u].value.data(), nodes[*v].value.data());
                    m = u.iter().zip(v).fold(m, |m, (a, b)| m.min((a + b).abs()));
                }
                _ => {}
            }
        }
        m
    }

    /// First non-finite value produced on this tape, if any.
    pub fn fault(&self) -> Option<String> {
        self.fault.borrow().clone()
    }

    pub fn check(&self) -> Result<()> {
        match self.fault() {
            Some(op) => Err(Error::NonFinite(op)),
            None => Ok(()),
        }
    }

    fn push(&self, t: Tensor, op: Op, requires_grad: bool, name: &str) -> Var<'_> {
        if !t.is_finite() && self.fault.borrow().is_none() {
            *self.fault.borrow_mut() = Some(name.to_string());
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(t),
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        self.nodes.borrow()[id].value.clone()
    }

    fn needs(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    fn record(&self, t: Tensor, op: Op, parents: &[usize], name: &str) -> Var<'_> {
        let rg = self.needs(parents);
        self.push(t, op, rg, name)
    }

    /// Column-wise concatenation.
    pub fn concat_cols<'t>(&'t self, parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat of nothing"))?;
        let rows = first.shape()[0];
        let vals: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        for v in &vals {
            if v.rows() != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: first.shape(),
                    rhs: v.shape(),
                });
            }
        }
        let views: Vec<_> = vals.iter().map(|v| v.array().view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("row counts checked");
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        Ok(self.record(
            Tensor::from_array(out),
            Op::Concat(ids.clone()),
            &ids,
            "concat",
        ))
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        if root.shape() != [1, 1] {
            return Err(Error::invalid(format!(
                "backward needs a scalar root, got shape {:?}",
                root.shape()
            )));
        }
        self.check()?;
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; root.id + 1];
        grads[root.id] = Some(Array2::ones((1, 1)));

        fn acc(grads: &mut [Option<Array2<f64>>], nodes: &[Node], id: usize, g: Array2<f64>) {
            if !nodes[id].requires_grad {
                return;
            }
            match &mut grads[id] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }

        for id in (0..=root.id).rev() {
            if !nodes[id].requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let out = &nodes[id].value;
            let val = |i: usize| nodes[i].value.array();
            match &nodes[id].op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if nodes[*a].requires_grad {
                        acc(&mut grads, &nodes, *a, g.dot(&val(*b).t()));
                    }
                    if nodes[*b].requires_grad {
                        acc(&mut grads, &nodes, *b, val(*a).t().dot(&g));
                    }
                }
                Op::Add(a, b) => {
                    acc(
                        &mut grads,
                        &nodes,
                        *a,
                        reduce_to(g.clone(), nodes[*a].value.shape()),
                    );
                    acc(
                        &mut grads,
                        &nodes,
                        *b,
                        reduce_to(g, nodes[*b].value.shape()),
                    );
                }
                Op::Sub(a, b) => {
                    acc(
                        &mut grads,
                        &nodes,
                        *a,
                        reduce_to(g.clone(), nodes[*a].value.shape()),
                    );
                    acc(
                        &mut grads,
                        &nodes,
                        *b,
                        reduce_to(-g, nodes[*b].value.shape()),
                    );
                }
                Op::Mul(a, b) => {
                    if nodes[*a].requires_grad {
                        acc(
                            &mut grads,
                            &nodes,
                            *a,
                            reduce_to(&g * val(*b), nodes[*a].value.shape()),
                        );
                    }
                    if nodes[*b].requires_grad {
                        acc(
                            &mut grads,
                            &nodes,
                            *b,
                            reduce_to(&g * val(*a), nodes[*b].value.shape()),
                        );
                    }
                }
                Op::Div(a, b) => {
                    let bv = val(*b);
                    if nodes[*a].requires_grad {
                        acc(
                            &mut grads,
                            &nodes,
                            *a,
                            reduce_to(&g / bv, nodes[*a].value.shape()),
                        );
                    }
                    if nodes[*b].requires_grad {
                        // d(a/b)/db = -(a/b)/b
                        let gb = -(&g * out.array()) / bv;
                        acc(
                            &mut grads,
                            &nodes,
                            *b,
                            reduce_to(gb, nodes[*b].value.shape()),
                        );
                    }
                }
                Op::Scale(a, s) => acc(&mut grads, &nodes, *a, g * *s),
                Op::AddScalar(a) => acc(&mut grads, &nodes, *a, g),
                Op::Concat(ids) => {
                    let mut start = 0;
                    for &p in ids {
                        let w = nodes[p].value.cols();
                        acc(
                            &mut grads,
                            &nodes,
                            p,
                            g.slice(ndarray::s![.., start..start + w]).to_owned(),
                        );
                        start += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let [r, c] = nodes[*a].value.shape();
                    let mut full = Array2::zeros((r, c));
                    full.slice_mut(ndarray::s![.., *start..*start + g.ncols()])
                        .assign(&g);
                    acc(&mut grads, &nodes, *a, full);
                }
                Op::GatherRows(a, idx) => {
                    let [r, c] = nodes[*a].value.shape();
                    acc(&mut grads, &nodes, *a, scatter_add(&g, idx, r, c));
                }
                Op::ScatterAddRows(a, idx) => {
                    acc(&mut grads, &nodes, *a, gather(&g, idx));
                }
                Op::SumAll(a) => {
                    let [r, c] = nodes[*a].value.shape();
                    acc(&mut grads, &nodes, *a, Array2::from_elem((r, c), g[(0, 0)]));
                }
                Op::SumAxis(a, axis) => {
                    let [r, c] = nodes[*a].value.shape();
                    let full = g
                        .broadcast((r, c))
                        .expect("reduced axis broadcasts back")
                        .to_owned();
                    let _ = axis;
                    acc(&mut grads, &nodes, *a, full);
                }
                Op::LeakyRelu(a, slope) => {
                    let mut d = g;
                    Zip::from(&mut d).and(val(*a)).for_each(|d, &x| {
                        if x <= 0.0 {
                            *d *= slope;
                        }
                    });
                    acc(&mut grads, &nodes, *a, d);
                }
                Op::Softplus(a) => {
                    let mut d = g;
                    Zip::from(&mut d)
                        .and(val(*a))
                        .for_each(|d, &x| *d *= sigmoid(x));
                    acc(&mut grads, &nodes, *a, d);
                }
                Op::Exp(a) => acc(&mut grads, &nodes, *a, &g * out.array()),
                Op::Sqrt(a) => {
                    let mut d = g;
                    Zip::from(&mut d).and(out.array()).for_each(|d, &y| {
                        *d = if y > 0.0 { *d / (2.0 * y) } else { 0.0 };
                    });
                    acc(&mut grads, &nodes, *a, d);
                }
                Op::SegmentSoftmax(a, seg) => {
                    let y = out.data();
                    let gy = g.as_slice().expect("standard layout");
                    let nseg = seg.iter().copied().max().map_or(0, |m| m + 1);
                    let mut dot = vec![0.0; nseg];
                    for e in 0..y.len() {
                        dot[seg[e]] += y[e] * gy[e];
                    }
                    let dx: Vec<f64> = (0..y.len()).map(|e| y[e] * (gy[e] - dot[seg[e]])).collect();
                    acc(
                        &mut grads,
                        &nodes,
                        *a,
                        Array2::from_shape_vec((y.len(), 1), dx).unwrap(),
                    );
                }
                Op::AttentionSoftmax(u, v, slope, seg) => {
                    let y = out.data();
                    let gy = g.as_slice().expect("standard layout");
                    let (uv, vv) = (nodes[*u].value.data(), nodes[*v].value.data());
                    let nseg = seg.iter().copied().max().map_or(0, |m| m + 1);
                    let mut dot = vec![0.0; nseg];
                    for e in 0..y.len() {
                        dot[seg[e]] += y[e] * gy[e];
                    }
                    let dz: Vec<f64> = (0..y.len())
                        .map(|e| {
                            let d = y[e] * (gy[e] - dot[seg[e]]);
                            if uv[e] + vv[e] > 0.0 {
                                d
                            } else {
                                d * slope
                            }
                        })
                        .collect();
                    let dz = Array2::from_shape_vec((y.len(), 1), dz).unwrap();
                    acc(&mut grads, &nodes, *u, dz.clone());
                    acc(&mut grads, &nodes, *v, dz);
                }
                Op::RowNorm(a) => {
                    let x = val(*a);
                    let mut d = x.to_owned();
                    for (mut row, (&n, &gr)) in d
                        .rows_mut()
                        .into_iter()
                        .zip(out.data().iter().zip(g.iter()))
                    {
                        if n > 0.0 {
                            row *= gr / n;
                        } else {
                            row.fill(0.0);
                        }
                    }
                    acc(&mut grads, &nodes, *a, d);
                }
                Op::BatchedMatVec(m, v) => {
                    let (mv, vv) = (val(*m), val(*v));
                    let rows_out = g.ncols();
                    let cols_in = vv.ncols();
                    if nodes[*m].requires_grad {
                        let mut dm = Array2::zeros(mv.raw_dim());
                        for j in 0..g.nrows() {
                            for i in 0..rows_out {
                                for k in 0..cols_in {
                                    dm[(j, i * cols_in + k)] = g[(j, i)] * vv[(j, k)];
                                }
                            }
                        }
                        acc(&mut grads, &nodes, *m, dm);
                    }
                    if nodes[*v].requires_grad {
                        let mut dv = Array2::zeros(vv.raw_dim());
                        for j in 0..g.nrows() {
                            for i in 0..rows_out {
                                let gi = g[(j, i)];
                                for k in 0..cols_in {
                                    dv[(j, k)] += gi * mv[(j, i * cols_in + k)];
                                }
                            }
                        }
                        acc(&mut grads, &nodes, *v, dv);
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    // log(1 + e^x) without overflow
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn gather(src: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    let c = src.ncols();
    let mut out = Array2::zeros((idx.len(), c));
    for (mut row, &i) in out.rows_mut().into_iter().zip(idx) {
        row.assign(&src.row(i));
    }
    out
}

fn scatter_add(src: &Array2<f64>, idx: &[usize], rows: usize, cols: usize) -> Array2<f64> {
    let mut out = Array2::zeros((rows, cols));
    for (row, &i) in src.rows().into_iter().zip(idx) {
        let mut dst = out.row_mut(i);
        dst += &row;
    }
    out
}

impl<'t> Var<'t> {
    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> [usize; 2] {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn unary(self, t: Tensor, op: Op, name: &str) -> Var<'t> {
        self.tape.record(t, op, &[self.id], name)
    }

    fn map(self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::from_array(self.value().array().mapv(f))
    }

    pub fn matmul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), rhs.value());
        if a.cols() != b.rows() {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: a.shape(),
                rhs: b.shape(),
            });
        }
        let out = a.array().dot(b.array());
        Ok(self.tape.record(
            Tensor::from_array(out),
            Op::MatMul(self.id, rhs.id),
            &[self.id, rhs.id],
            "matmul",
        ))
    }

    fn binary(
        self,
        rhs: Var<'t>,
        name: &'static str,
        op: Op,
        f: impl Fn(&Array2<f64>, &Array2<f64>) -> Array2<f64>,
    ) -> Result<Var<'t>> {
        let (a, b) = (self.value(), rhs.value());
        let shape = broadcast_shape(name, a.shape(), b.shape())?;
        let out = f(a.array(), b.array());
        debug_assert_eq!(out.dim(), (shape[0], shape[1]));
        Ok(self
            .tape
            .record(Tensor::from_array(out), op, &[self.id, rhs.id], name))
    }

    /// Elementwise sum with row/column broadcasting.
    #[allow(clippy::should_implement_trait)]
    pub fn add(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(rhs, "add", Op::Add(self.id, rhs.id), |a, b| a + b)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(rhs, "sub", Op::Sub(self.id, rhs.id), |a, b| a - b)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(rhs, "mul", Op::Mul(self.id, rhs.id), |a, b| a * b)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn div(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(rhs, "div", Op::Div(self.id, rhs.id), |a, b| a / b)
    }

    pub fn scale(self, s: f64) -> Var<'t> {
        let t = self.map(|x| x * s);
        self.unary(t, Op::Scale(self.id, s), "scale")
    }

    pub fn add_scalar(self, s: f64) -> Var<'t> {
        let t = self.map(|x| x + s);
        self.unary(t, Op::AddScalar(self.id), "add_scalar")
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        let t = self.map(|x| if x > 0.0 { x } else { slope * x });
        self.unary(t, Op::LeakyRelu(self.id, slope), "leaky_relu")
    }

    pub fn softplus(self) -> Var<'t> {
        let t = self.map(softplus);
        self.unary(t, Op::Softplus(self.id), "softplus")
    }

    pub fn exp(self) -> Var<'t> {
        let t = self.map(f64::exp);
        self.unary(t, Op::Exp(self.id), "exp")
    }

    pub fn sqrt(self) -> Var<'t> {
        let t = self.map(f64::sqrt);
        self.unary(t, Op::Sqrt(self.id), "sqrt")
    }

    /// Sum over everything (`None`) or along one axis (`Some(0)` gives a
    /// `1×c` row, `Some(1)` an `r×1` column).
    pub fn sum(self, axis: Option<usize>) -> Result<Var<'t>> {
        let v = self.value();
        match axis {
            None => Ok(self.unary(Tensor::scalar(v.array().sum()), Op::SumAll(self.id), "sum")),
            Some(ax @ (0 | 1)) => {
                let out = v.array().sum_axis(Axis(ax)).insert_axis(Axis(ax));
                Ok(self.unary(Tensor::from_array(out), Op::SumAxis(self.id, ax), "sum"))
            }
            Some(ax) => Err(Error::invalid(format!(
                "axis {ax} out of range for a 2-D tensor"
            ))),
        }
    }

    pub fn mean(self, axis: Option<usize>) -> Result<Var<'t>> {
        let [r, c] = self.shape();
        let n = match axis {
            None => r * c,
            Some(0) => r,
            Some(1) => c,
            Some(ax) => {
                return Err(Error::invalid(format!(
                    "axis {ax} out of range for a 2-D tensor"
                )))
            }
        };
        if n == 0 {
            return Err(Error::invalid("mean of an empty tensor"));
        }
        Ok(self.sum(axis)?.scale(1.0 / n as f64))
    }

    /// Row `i` of the output is row `idx[i]` of the input.
    pub fn gather_rows(self, idx: &[usize]) -> Result<Var<'t>> {
        let v = self.value();
        if let Some(&bad) = idx.iter().find(|&&i| i >= v.rows()) {
            return Err(Error::invalid(format!(
                "gather index {bad} out of range for {} rows",
                v.rows()
            )));
        }
        let out = gather(v.array(), idx);
        Ok(self.unary(
            Tensor::from_array(out),
            Op::GatherRows(self.id, idx.into()),
            "gather_rows",
        ))
    }

    /// Row `i` of the input is added into row `idx[i]` of an `n`-row output.
    pub fn scatter_add_rows(self, idx: &[usize], n: usize) -> Result<Var<'t>> {
        let v = self.value();
        if idx.len() != v.rows() {
            return Err(Error::invalid(format!(
                "{} scatter indices for {} rows",
                idx.len(),
                v.rows()
            )));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::invalid(format!(
                "scatter index {bad} out of range for {n} rows"
            )));
        }
        let out = scatter_add(v.array(), idx, n, v.cols());
        Ok(self.unary(
            Tensor::from_array(out),
            Op::ScatterAddRows(self.id, idx.into()),
            "scatter_add_rows",
        ))
    }

    /// Columns `start..end`.
    pub fn slice_cols(self, start: usize, end: usize) -> Result<Var<'t>> {
        let v = self.value();
        if start > end || end > v.cols() {
            return Err(Error::invalid(format!(
                "column slice {start}..{end} of {} columns",
                v.cols()
            )));
        }
        let out = v.array().slice(ndarray::s![.., start..end]).to_owned();
        Ok(self.unary(
            Tensor::from_array(out),
            Op::SliceCols(self.id, start),
            "slice_cols",
        ))
    }

    /// Softmax of a column vector within groups of equal `segment` id.
    pub fn segment_softmax(self, segment: &[usize]) -> Result<Var<'t>> {
        let v = self.value();
        if v.cols() != 1 || v.rows() != segment.len() {
            return Err(Error::invalid(format!(
                "segment_softmax needs a column of {} values, got {:?}",
                segment.len(),
                v.shape()
            )));
        }
        let x = v.data();
        let nseg = segment.iter().copied().max().map_or(0, |m| m + 1);
        let mut max = vec![f64::NEG_INFINITY; nseg];
        for (e, &s) in segment.iter().enumerate() {
            max[s] = max[s].max(x[e]);
        }
        let mut y: Vec<f64> = segment
            .iter()
            .enumerate()
            .map(|(e, &s)| (x[e] - max[s]).exp())
            .collect();
        let mut total = vec![0.0; nseg];
        for (e, &s) in segment.iter().enumerate() {
            total[s] += y[e];
        }
        for (e, &s) in segment.iter().enumerate() {
            y[e] /= total[s];
        }
        let t = Tensor::from_vec(y.len(), 1, y)?;
        Ok(self.unary(
            t,
            Op::SegmentSoftmax(self.id, segment.into()),
            "segment_softmax",
        ))
    }

    /// `segment_softmax(leaky_relu(self + v))` for two columns, fused.
    ///
    /// Within a segment, logit differences between entries whose
    /// pre-activations share a sign are formed as `(u_a - u_b) + (v_a - v_b)`,
    /// so a shift of `u` that is constant over the segment cancels exactly
    /// rather than to within rounding. Attention layers add a per-source term
    /// of exactly that kind.
    pub fn attention_softmax(self, v: Var<'t>, segment: &[usize], slope: f64) -> Result<Var<'t>> {
        let (uv, vv) = (self.value(), v.value());
        if uv.cols() != 1 || uv.shape() != vv.shape() || uv.rows() != segment.len() {
            return Err(Error::invalid(format!(
                "attention_softmax needs two columns of {} values, got {:?} and {:?}",
                segment.len(),
                uv.shape(),
                vv.shape()
            )));
        }
        let (u, w) = (uv.data(), vv.data());
        let z: Vec<f64> = u.iter().zip(w).map(|(a, b)| a + b).collect();
        let leaky = |x: f64| if x > 0.0 { x } else { slope * x };
        let nseg = segment.iter().copied().max().map_or(0, |m| m + 1);
        let mut arg: Vec<Option<usize>> = vec![None; nseg];
        for (e, &s) in segment.iter().enumerate() {
            if arg[s].is_none_or(|m| leaky(z[e]) > leaky(z[m])) {
                arg[s] = Some(e);
            }
        }
        let mut y: Vec<f64> = segment
            .iter()
            .enumerate()
            .map(|(e, &s)| {
                let m = arg[s].expect("segment has an entry");
                let exact = (u[e] - u[m]) + (w[e] - w[m]);
                let d = match (z[e] > 0.0, z[m] > 0.0) {
                    (true, true) => exact,
                    (false, false) => slope * exact,
                    _ => leaky(z[e]) - leaky(z[m]),
                };
                d.exp()
            })
            .collect();
        let mut total = vec![0.0; nseg];
        for (e, &s) in segment.iter().enumerate() {
            total[s] += y[e];
        }
        for (e, &s) in segment.iter().enumerate() {
            y[e] /= total[s];
        }
        let t = Tensor::from_vec(y.len(), 1, y)?;
        Ok(self.tape.record(
            t,
            Op::AttentionSoftmax(self.id, v.id, slope, segment.into()),
            &[self.id, v.id],
            "attention_softmax",
        ))
    }

    /// Euclidean norm of every row, as a column.
    pub fn row_norm(self) -> Var<'t> {
        let v = self.value();
        let norms: Vec<f64> = v
            .array()
            .rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt())
            .collect();
        let t = Tensor::from_vec(norms.len(), 1, norms).expect("one norm per row");
        self.unary(t, Op::RowNorm(self.id), "row_norm")
    }

    /// Per-row matrix-vector product: row `j` of `self` holds an `a×b`
    /// matrix (row-major, `a·b` columns) applied to row `j` of `v` (`b`
    /// columns). Output is `n×a`.
    pub fn batched_matvec(self, v: Var<'t>) -> Result<Var<'t>> {
        let (m, x) = (self.value(), v.value());
        let b = x.cols();
        if m.rows() != x.rows() || b == 0 || m.cols() % b != 0 {
            return Err(Error::ShapeMismatch {
                op: "batched_matvec",
                lhs: m.shape(),
                rhs: x.shape(),
            });
        }
        let a = m.cols() / b;
        let mut out = Array2::zeros((m.rows(), a));
        for j in 0..m.rows() {
            let (mr, xr) = (m.row(j), x.row(j));
            for i in 0..a {
                out[(j, i)] = (0..b).map(|k| mr[i * b + k] * xr[k]).sum();
            }
        }
        Ok(self.tape.record(
            Tensor::from_array(out),
            Op::BatchedMatVec(self.id, v.id),
            &[self.id, v.id],
            "batched_matvec",
        ))
    }
}
