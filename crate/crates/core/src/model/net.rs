//! The generator expressed on an autodiff [`Tape`].
//!
//! Everything that does not depend on trainable parameters (attention
//! pairs, canonical edge features, expansion index, per-point frames) is
//! precomputed once per graph in [`GraphInputs`].

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::frame::FrameSet;
use crate::geom::nn::{nearest, NnMethod};
use crate::geom::Vec3;
use crate::graph::MsgGraph;
use crate::par::Parallelism;

use super::{expansion_index, ModelConfig, ModelWeights};

/// Directed attention pairs `(s, t)` for `t ∈ N(s) ∪ {s}`, grouped by `s`
/// with the self pair first. Indices are vertex positions in id order.
pub fn attention_pairs(g: &MsgGraph) -> (Vec<usize>, Vec<usize>) {
    let adj = g.adjacency();
    let mut src = Vec::with_capacity(g.len() + 2 * g.edges.len());
    let mut dst = Vec::with_capacity(src.capacity());
    for (s, nbrs) in adj.iter().enumerate() {
        src.push(s);
        dst.push(s);
        for &t in nbrs {
            src.push(s);
            dst.push(t);
        }
    }
    (src, dst)
}

/// Parameter-free per-graph inputs of the network.
#[derive(Clone, Debug)]
pub struct GraphInputs {
    pub ids: Vec<u32>,
    pub capacities: Vec<u32>,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    /// `E×5` rows `[R_s(L_t − L_s)/SF_s ∥ RCr_s ∥ RCr_t]`.
    pub rel: Tensor,
    /// Breeding vertex of every point.
    pub expand: Vec<usize>,
    /// `N×9`: `SF · Rᵀ` of the breeding vertex, row-major.
    pub back: Tensor,
    /// `N×3`: location of the breeding vertex.
    pub loc: Tensor,
}

impl GraphInputs {
    pub fn new(g: &MsgGraph, frames: &FrameSet) -> Result<Self> {
        g.check()?;
        if frames.ids.len() != g.len()
            || frames.ids.iter().zip(&g.vertices).any(|(&a, v)| a != v.id)
        {
            return Err(Error::invalid("missing or mismatched vertex frames"));
        }
        let (src, dst) = attention_pairs(g);
        let f = &frames.frames;
        let mut rel = Vec::with_capacity(src.len() * 5);
        for (&s, &t) in src.iter().zip(&dst) {
            let d = if s == t {
                Vec3::zeros()
            } else {
                f[s].rotation * (g.vertices[t].location - g.vertices[s].location)
                    / f[s].scale_factor
            };
            rel.extend_from_slice(&[d.x, d.y, d.z, f[s].rcr, f[t].rcr]);
        }
        let expand = expansion_index(g);
        let mut back = Vec::with_capacity(expand.len() * 9);
        let mut loc = Vec::with_capacity(expand.len() * 3);
        for &j in &expand {
            let m = f[j].rotation.transpose() * f[j].scale_factor;
            for r in 0..3 {
                for c in 0..3 {
                    back.push(m[(r, c)]);
                }
            }
            loc.extend(g.vertices[j].location.iter());
        }
        Ok(GraphInputs {
            ids: g.vertices.iter().map(|v| v.id).collect(),
            capacities: g.capacities(),
            rel: Tensor::from_vec(src.len(), 5, rel)?,
            src,
            dst,
            back: Tensor::from_vec(expand.len(), 9, back)?,
            loc: Tensor::from_vec(expand.len(), 3, loc)?,
            expand,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.ids.len()
    }

    pub fn num_points(&self) -> usize {
        self.expand.len()
    }

    /// Breeding vertex id of every point.
    pub fn labels(&self) -> Vec<u32> {
        self.expand.iter().map(|&j| self.ids[j]).collect()
    }
}

pub struct GatParams<'t> {
    pub weight: Var<'t>,
    pub attn_src: Var<'t>,
    pub attn_dst: Var<'t>,
}

/// Model parameters bound to a tape.
pub struct Bound<'t> {
    /// All parameters in layout order.
    pub vars: Vec<Var<'t>>,
    pub rel_attn: Var<'t>,
    pub rel_weight: Var<'t>,
    pub rel_bias: Var<'t>,
    pub gat: [GatParams<'t>; 2],
    pub head_weight: Var<'t>,
    pub head_bias: Var<'t>,
    pub decoder: Vec<(Var<'t>, Var<'t>)>,
    pub channels: usize,
    pub slope: f64,
    pub noise_floor: f64,
}

impl<'t> Bound<'t> {
    /// Trainable leaves.
    pub fn params(tape: &'t Tape, w: &ModelWeights) -> Self {
        let vars: Vec<Var> = w.tensors().iter().map(|t| tape.param(t.clone())).collect();
        Bound::from_vars(w.config(), &vars).expect("layout matches config")
    }

    /// Frozen leaves, for inference.
    pub fn constants(tape: &'t Tape, w: &ModelWeights) -> Self {
        let vars: Vec<Var> = w
            .tensors()
            .iter()
            .map(|t| tape.constant(t.clone()))
            .collect();
        Bound::from_vars(w.config(), &vars).expect("layout matches config")
    }

    /// Interprets `vars` (in layout order) as the parameters of `cfg`.
    pub fn from_vars(cfg: &ModelConfig, vars: &[Var<'t>]) -> Result<Self> {
        let layout = super::param_layout(cfg);
        if vars.len() != layout.len() {
            return Err(Error::invalid(format!(
                "{} variables for {} parameters",
                vars.len(),
                layout.len()
            )));
        }
        for ((name, shape), v) in layout.iter().zip(vars) {
            if v.shape() != *shape {
                return Err(Error::invalid(format!(
                    "{name} has shape {:?}, expected {shape:?}",
                    v.shape()
                )));
            }
        }
        let gat = |o: usize| GatParams {
            weight: vars[o],
            attn_src: vars[o + 1],
            attn_dst: vars[o + 2],
        };
        let decoder = vars[11..].chunks(2).map(|p| (p[0], p[1])).collect();
        Ok(Bound {
            vars: vars.to_vec(),
            rel_attn: vars[0],
            rel_weight: vars[1],
            rel_bias: vars[2],
            gat: [gat(3), gat(6)],
            head_weight: vars[9],
            head_bias: vars[10],
            decoder,
            channels: cfg.channels,
            slope: cfg.leaky_slope,
            noise_floor: cfg.noise_floor,
        })
    }
}

/// Relative layer: attention over canonical edge features, weighted sum,
/// then a learned projection to `c` channels. Returns the output and the
/// attention coefficients (one per pair).
pub fn relative_layer<'t>(inp: &GraphInputs, p: &Bound<'t>) -> Result<(Var<'t>, Var<'t>)> {
    let tape = p.rel_attn.tape();
    let f = tape.constant(inp.rel.clone());
    // the RCr_s column is constant per source; keep it apart so it cancels
    // exactly inside the softmax
    let (own, rest) = split_own_column(&inp.rel);
    let u = tape.constant(own).matmul(p.rel_attn)?;
    let v = tape.constant(rest).matmul(p.rel_attn)?;
    let alpha = u.attention_softmax(v, &inp.src, p.slope)?;
    let agg = f
        .mul(alpha)?
        .scatter_add_rows(&inp.src, inp.num_vertices())?;
    let h = agg
        .matmul(p.rel_weight)?
        .add(p.rel_bias)?
        .leaky_relu(p.slope);
    Ok((h, alpha))
}

/// Single-head graph attention with self pairs.
pub fn gat<'t>(
    h: Var<'t>,
    src: &[usize],
    dst: &[usize],
    k: usize,
    layer: &GatParams<'t>,
    slope: f64,
) -> Result<(Var<'t>, Var<'t>)> {
    let wh = h.matmul(layer.weight)?;
    let s = wh.matmul(layer.attn_src)?.gather_rows(src)?;
    let t = wh.matmul(layer.attn_dst)?.gather_rows(dst)?;
    let alpha = s.attention_softmax(t, src, slope)?;
    let out = wh
        .gather_rows(dst)?
        .mul(alpha)?
        .scatter_add_rows(src, k)?
        .leaky_relu(slope);
    Ok((out, alpha))
}

/// Splits the `E×5` relative features into the `RCr_s` column alone and
/// the rest, each zero-padded back to five columns.
fn split_own_column(rel: &Tensor) -> (Tensor, Tensor) {
    let mut own = Tensor::zeros(rel.rows(), 5);
    let mut rest = rel.clone();
    for r in 0..rel.rows() {
        own.data_mut()[r * 5 + 3] = rel.get(r, 3);
        rest.data_mut()[r * 5 + 3] = 0.0;
    }
    (own, rest)
}

pub struct Encoded<'t> {
    pub features: Var<'t>,
    pub noise_variance: Var<'t>,
    pub attention: [Var<'t>; 3],
}

pub fn encode<'t>(inp: &GraphInputs, p: &Bound<'t>) -> Result<Encoded<'t>> {
    let k = inp.num_vertices();
    let (h1, a1) = relative_layer(inp, p)?;
    let (h2, a2) = gat(h1, &inp.src, &inp.dst, k, &p.gat[0], p.slope)?;
    let (h3, a3) = gat(h2, &inp.src, &inp.dst, k, &p.gat[1], p.slope)?;
    let z = h3.matmul(p.head_weight)?.add(p.head_bias)?;
    let c = p.channels;
    Ok(Encoded {
        features: z.slice_cols(0, c)?,
        noise_variance: z.slice_cols(c, 2 * c)?.softplus().add_scalar(p.noise_floor),
        attention: [a1, a2, a3],
    })
}

/// Shared MLP with LeakyReLU hidden layers and a linear output.
pub fn decode<'t>(x: Var<'t>, p: &Bound<'t>) -> Result<Var<'t>> {
    let last = p.decoder.len() - 1;
    let mut x = x;
    for (i, &(w, b)) in p.decoder.iter().enumerate() {
        x = x.matmul(w)?.add(b)?;
        if i < last {
            x = x.leaky_relu(p.slope);
        }
    }
    Ok(x)
}

pub struct Forward<'t> {
    /// `N×3` generated points.
    pub points: Var<'t>,
    pub encoded: Encoded<'t>,
}

/// Full generator given unit noise `eps` (`N×c`).
pub fn forward<'t>(inp: &GraphInputs, p: &Bound<'t>, eps: &Tensor) -> Result<Forward<'t>> {
    let tape = p.rel_attn.tape();
    if eps.shape() != [inp.num_points(), p.channels] {
        return Err(Error::ShapeMismatch {
            op: "noise",
            lhs: eps.shape(),
            rhs: [inp.num_points(), p.channels],
        });
    }
    let enc = encode(inp, p)?;
    let f = enc.features.gather_rows(&inp.expand)?;
    let noise = enc
        .noise_variance
        .gather_rows(&inp.expand)?
        .sqrt()
        .mul(tape.constant(eps.clone()))?;
    let offsets = decode(tape.concat_cols(&[noise, f])?, p)?;
    let points = tape
        .constant(inp.back.clone())
        .batched_matvec(offsets)?
        .add(tape.constant(inp.loc.clone()))?;
    Ok(Forward {
        points,
        encoded: enc,
    })
}

fn to_vec3(t: &Tensor) -> Vec<Vec3> {
    (0..t.rows())
        .map(|i| Vec3::from_row_slice(t.row(i)))
        .collect()
}

fn rows_of(points: &[Vec3], idx: impl Iterator<Item = usize>) -> Tensor {
    let data: Vec<f64> = idx
        .flat_map(|i| points[i].iter().copied().collect::<Vec<_>>())
        .collect();
    let n = data.len() / 3;
    Tensor::from_vec(n, 3, data).expect("three columns")
}

/// Weighted Chamfer distance between the generated `points` (bred as
/// described by `inp`) and `gt`, differentiable through the nearest-point
/// matches of the current forward pass.
pub fn weighted_chamfer_loss<'t>(
    points: Var<'t>,
    inp: &GraphInputs,
    gt: &[Vec3],
    mode: Parallelism,
) -> Result<Var<'t>> {
    let (coverage, precision) = weighted_chamfer_terms(points, inp, gt, mode)?;
    coverage.add(precision)
}

/// The two terms of [`weighted_chamfer_loss`]: ground truth to generated,
/// and the capacity-weighted generated to ground truth.
pub fn weighted_chamfer_terms<'t>(
    points: Var<'t>,
    inp: &GraphInputs,
    gt: &[Vec3],
    mode: Parallelism,
) -> Result<(Var<'t>, Var<'t>)> {
    if gt.is_empty() || inp.num_points() == 0 {
        return Err(Error::invalid("weighted Chamfer loss of an empty cloud"));
    }
    let tape = points.tape();
    let ge = to_vec3(&points.value());
    let to_ge: Vec<usize> = nearest(gt, &ge, NnMethod::BruteForce, mode)
        .iter()
        .map(|n| n.index)
        .collect();
    let to_gt = nearest(&ge, gt, NnMethod::BruteForce, mode);

    let gt_t = tape.constant(rows_of(gt, 0..gt.len()));
    let coverage = points
        .gather_rows(&to_ge)?
        .sub(gt_t)?
        .row_norm()
        .mean(None)?;

    let k = inp.num_vertices() as f64;
    let w: Vec<f64> = inp
        .expand
        .iter()
        .map(|&j| 1.0 / (k * inp.capacities[j] as f64))
        .collect();
    let w = tape.constant(Tensor::from_vec(w.len(), 1, w)?);
    let matched = tape.constant(rows_of(gt, to_gt.iter().map(|n| n.index)));
    let precision = points.sub(matched)?.row_norm().mul(w)?.sum(None)?;
    Ok((coverage, precision))
}
