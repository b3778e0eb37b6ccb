//! The generator network.
//!
//! Encoder: one relative graph-attention layer over canonical-frame edge
//! features, two ordinary graph-attention layers and a linear head that
//! yields a per-vertex feature `F_i` and noise variance `NV_i`. Each vertex
//! is then repeated once per unit of capacity, every copy gets its own noise
//! draw `√NV_i ⊙ ε`, a shared MLP maps `[noise ∥ F_i]` to an offset `O` in
//! the vertex frame, and the point is placed at `R_iᵀ · O · SF_i + L_i`.
//!
//! The functions in this module work on plain tensors. [`net`] holds the
//! same computation expressed on an autodiff tape for training.

mod checkpoint;
pub mod net;
mod weights;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Tape, Tensor};
use crate::baselines::Generator;
use crate::error::{Error, Result};
use crate::frame::{compute_frames_with, FrameSet};
use crate::geom::{PointCloud, Vec3};
use crate::graph::MsgGraph;

pub use checkpoint::{
    checkpoint_from_json, checkpoint_to_json, load_checkpoint, save_checkpoint, Checkpoint,
    TrainingMeta, CHECKPOINT_VERSION,
};
pub use net::{attention_pairs, GraphInputs};
pub use weights::{param_layout, ModelConfig, ModelWeights};

/// Encoder output per vertex, rows in id order.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedGraph {
    pub features: Tensor,
    /// Strictly positive (`≥ noise_floor`).
    pub noise_variance: Tensor,
}

/// Attention coefficients of the three encoder layers, aligned with
/// [`attention_pairs`].
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionTrace {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub layers: [Vec<f64>; 3],
}

fn frames_for(g: &MsgGraph, frames: &FrameSet) -> Result<()> {
    if frames.ids.len() != g.len() || frames.ids.iter().zip(&g.vertices).any(|(&a, v)| a != v.id) {
        return Err(Error::invalid("missing or mismatched vertex frames"));
    }
    Ok(())
}

/// Output of the relative attention layer, `K×c`.
pub fn relative_gat_layer(g: &MsgGraph, frames: &FrameSet, w: &ModelWeights) -> Result<Tensor> {
    frames_for(g, frames)?;
    let inp = GraphInputs::new(g, frames)?;
    let tape = Tape::new();
    let p = net::Bound::constants(&tape, w);
    let (h, _) = net::relative_layer(&inp, &p)?;
    Ok((*h.value()).clone())
}

/// One ordinary attention layer (`layer` is 1 or 2) applied to `h`.
pub fn gat_layer(g: &MsgGraph, h: &Tensor, w: &ModelWeights, layer: usize) -> Result<Tensor> {
    g.check()?;
    let c = w.config().channels;
    if h.shape() != [g.len(), c] {
        return Err(Error::ShapeMismatch {
            op: "gat_layer",
            lhs: h.shape(),
            rhs: [g.len(), c],
        });
    }
    if !(1..=2).contains(&layer) {
        return Err(Error::invalid(format!(
            "attention layer {layer} does not exist (1 or 2)"
        )));
    }
    let (src, dst) = attention_pairs(g);
    let tape = Tape::new();
    let p = net::Bound::constants(&tape, w);
    let (out, _) = net::gat(
        tape.constant(h.clone()),
        &src,
        &dst,
        g.len(),
        &p.gat[layer - 1],
        p.slope,
    )?;
    Ok((*out.value()).clone())
}

pub fn encode_graph(g: &MsgGraph, frames: &FrameSet, w: &ModelWeights) -> Result<EncodedGraph> {
    Ok(encode_traced(g, frames, w)?.0)
}

pub fn encode_traced(
    g: &MsgGraph,
    frames: &FrameSet,
    w: &ModelWeights,
) -> Result<(EncodedGraph, AttentionTrace)> {
    frames_for(g, frames)?;
    let inp = GraphInputs::new(g, frames)?;
    let tape = Tape::new();
    let p = net::Bound::constants(&tape, w);
    let enc = net::encode(&inp, &p)?;
    tape.check()?;
    let trace = AttentionTrace {
        src: inp.src.clone(),
        dst: inp.dst.clone(),
        layers: enc.attention.map(|a| a.value().data().to_vec()),
    };
    Ok((
        EncodedGraph {
            features: (*enc.features.value()).clone(),
            noise_variance: (*enc.noise_variance.value()).clone(),
        },
        trace,
    ))
}

/// Vertex index of every point: vertex `j` (in id order) repeated `C_j`
/// times.
pub fn expansion_index(g: &MsgGraph) -> Vec<usize> {
    g.vertices
        .iter()
        .enumerate()
        .flat_map(|(j, v)| std::iter::repeat_n(j, v.capacity as usize))
        .collect()
}

/// The explicit binary `N×K` expanding matrix. Only meant for checking
/// [`expand_per_point`]; it is quadratic in size.
pub fn expanding_matrix(g: &MsgGraph) -> Tensor {
    let idx = expansion_index(g);
    let mut ep = Tensor::zeros(idx.len(), g.len());
    let k = g.len();
    for (i, &j) in idx.iter().enumerate() {
        ep.data_mut()[i * k + j] = 1.0;
    }
    ep
}

/// Repeats row `j` of `values` `C_j` times.
pub fn expand_per_point(g: &MsgGraph, values: &Tensor) -> Result<Tensor> {
    if values.rows() != g.len() {
        return Err(Error::invalid(format!(
            "{} value rows for {} vertices",
            values.rows(),
            g.len()
        )));
    }
    let idx = expansion_index(g);
    let c = values.cols();
    let mut data = Vec::with_capacity(idx.len() * c);
    for &j in &idx {
        data.extend_from_slice(values.row(j));
    }
    Tensor::from_vec(idx.len(), c, data)
}

/// `n×c` standard normal draws, row-major from one seeded stream.
pub fn standard_normal(n: usize, c: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * c)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    Tensor::from_vec(n, c, data).expect("sized to fit")
}

/// Per-point noise `√NV_j ⊙ ε_j` with `ε` from [`standard_normal`].
pub fn sample_point_noise(enc: &EncodedGraph, g: &MsgGraph, seed: u64) -> Result<Tensor> {
    let nv = expand_per_point(g, &enc.noise_variance)?;
    let eps = standard_normal(nv.rows(), nv.cols(), seed);
    let data = nv
        .data()
        .iter()
        .zip(eps.data())
        .map(|(v, e)| v.sqrt() * e)
        .collect();
    Tensor::from_vec(nv.rows(), nv.cols(), data)
}

/// The shared offset MLP, `N×2c → N×3`.
pub fn decode_offsets(point_features: &Tensor, w: &ModelWeights) -> Result<Tensor> {
    let c = w.config().channels;
    if point_features.cols() != 2 * c {
        return Err(Error::ShapeMismatch {
            op: "decode_offsets",
            lhs: point_features.shape(),
            rhs: [point_features.rows(), 2 * c],
        });
    }
    let tape = Tape::new();
    let p = net::Bound::constants(&tape, w);
    let o = net::decode(tape.constant(point_features.clone()), &p)?;
    Ok((*o.value()).clone())
}

/// `g_j = R_jᵀ · O_j · SF_j + L_j` with the breeding vertex's frame.
pub fn assemble_point_cloud(
    offsets: &Tensor,
    g: &MsgGraph,
    frames: &FrameSet,
) -> Result<PointCloud> {
    frames_for(g, frames)?;
    let idx = expansion_index(g);
    if offsets.shape() != [idx.len(), 3] {
        return Err(Error::invalid(format!(
            "offsets {:?} do not match {} points",
            offsets.shape(),
            idx.len()
        )));
    }
    let points = idx
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let f = &frames.frames[j];
            let o = Vec3::from_row_slice(offsets.row(i));
            f.rotation.transpose() * o * f.scale_factor + g.vertices[j].location
        })
        .collect();
    let labels = idx.iter().map(|&j| g.vertices[j].id).collect();
    PointCloud::with_labels(points, labels)
}

/// Full pipeline: frames, encoder, expansion, noise, decoder, assembly.
pub fn generate(g: &MsgGraph, w: &ModelWeights, seed: u64) -> Result<PointCloud> {
    let frames = compute_frames_with(g, w.config().rcr_radius)?;
    let inp = GraphInputs::new(g, &frames)?;
    let eps = standard_normal(inp.num_points(), w.config().channels, seed);
    generate_with_noise(&inp, w, &eps)
}

/// Generation with caller-supplied unit noise (`N×c`, point order).
pub fn generate_with_noise(
    inp: &GraphInputs,
    w: &ModelWeights,
    eps: &Tensor,
) -> Result<PointCloud> {
    let tape = Tape::new();
    let p = net::Bound::constants(&tape, w);
    let out = net::forward(inp, &p, eps)?;
    tape.check()?;
    let v = out.points.value();
    let points = (0..v.rows())
        .map(|i| Vec3::from_row_slice(v.row(i)))
        .collect();
    PointCloud::with_labels(points, inp.labels())
}

/// A fixed small problem for checking gradients of the whole generator
/// plus weighted Chamfer loss: tiny config, `K = 5`, `N ≤ 20`, 16 target
/// points, fixed unit noise.
pub struct GradCheckProblem {
    pub graph: MsgGraph,
    pub inputs: GraphInputs,
    pub eps: Tensor,
    pub target: Vec<Vec3>,
    pub weights: ModelWeights,
}

impl GradCheckProblem {
    pub fn new(seed: u64) -> Result<Self> {
        let cfg = ModelConfig::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = crate::graph::random_knn_graph(&mut rng, 5, 2, 1..=4);
        // centred, so coordinates carry as many significant bits as possible
        let centre = graph.vertices.iter().map(|v| v.location).sum::<Vec3>() / graph.len() as f64;
        let graph = graph.transformed(&crate::geom::SimilarityTransform::new(
            nalgebra::Matrix3::identity(),
            1.0,
            -centre,
        )?);
        let frames = compute_frames_with(&graph, cfg.rcr_radius)?;
        let inputs = GraphInputs::new(&graph, &frames)?;
        let eps = standard_normal(inputs.num_points(), cfg.channels, seed.wrapping_add(1));
        let target = (0..16)
            .map(|i| {
                let v = &graph.vertices[i % graph.len()];
                v.location + Vec3::from_fn(|_, _| rand::Rng::random_range(&mut rng, -0.2..0.2))
            })
            .collect();
        let weights = ModelWeights::init(cfg, seed)?;
        Ok(GradCheckProblem {
            graph,
            inputs,
            eps,
            target,
            weights,
        })
    }

    fn terms<'t>(
        &self,
        vars: &[crate::autodiff::Var<'t>],
    ) -> Result<(crate::autodiff::Var<'t>, crate::autodiff::Var<'t>)> {
        let p = net::Bound::from_vars(self.weights.config(), vars)?;
        let out = net::forward(&self.inputs, &p, &self.eps)?;
        net::weighted_chamfer_terms(
            out.points,
            &self.inputs,
            &self.target,
            crate::par::Parallelism::Sequential,
        )
    }

    /// Loss at the unperturbed weights, as its two terms.
    pub fn base_terms(&self) -> Result<(f64, f64)> {
        let tape = Tape::new();
        let vars: Vec<_> = self
            .weights
            .tensors()
            .iter()
            .map(|t| tape.constant(t.clone()))
            .collect();
        let (a, b) = self.terms(&vars)?;
        Ok((a.value().item(), b.value().item()))
    }

    /// Distance of the unperturbed problem from the nearest non-smooth
    /// point: the smallest LeakyReLU input magnitude and the smallest gap
    /// between a nearest and second-nearest match in either Chamfer
    /// direction.
    pub fn smoothness_margin(&self) -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<_> = self
            .weights
            .tensors()
            .iter()
            .map(|t| tape.param(t.clone()))
            .collect();
        let p = net::Bound::from_vars(self.weights.config(), &vars)?;
        let out = net::forward(&self.inputs, &p, &self.eps)?;
        let v = out.points.value();
        let ge: Vec<Vec3> = (0..v.rows())
            .map(|i| Vec3::from_row_slice(v.row(i)))
            .collect();
        Ok(tape
            .kink_margin()
            .min(match_gap(&ge, &self.target))
            .min(match_gap(&self.target, &ge)))
    }

    /// Checks the weighted Chamfer loss with each term shifted by its
    /// value at the unperturbed weights. The shift is constant, so gradients
    /// are unchanged, but the scalar being differenced is near zero and
    /// keeps the bits that vary.
    pub fn report(&self, h: f64) -> Result<crate::autodiff::FdReport> {
        let (c0, p0) = self.base_terms()?;
        crate::autodiff::finite_difference_report(
            |_tape, vars| {
                let (c, p) = self.terms(vars)?;
                c.add_scalar(-c0).add(p.add_scalar(-p0))
            },
            self.weights.tensors(),
            h,
        )
    }
}

fn match_gap(from: &[Vec3], to: &[Vec3]) -> f64 {
    from.iter()
        .map(|q| {
            let (mut best, mut second) = (f64::INFINITY, f64::INFINITY);
            for t in to {
                let d = (q - t).norm();
                if d < best {
                    second = best;
                    best = d;
                } else if d < second {
                    second = d;
                }
            }
            second - best
        })
        .fold(f64::INFINITY, f64::min)
}

/// Smallest [`GradCheckProblem::smoothness_margin`] at which a central
/// difference with `h = 1e-5` cannot straddle a kink.
pub const GRADCHECK_MIN_MARGIN: f64 = 1e-4;

/// Central-difference check of the whole generator on
/// [`GradCheckProblem::new(seed)`]. Returns the largest relative error.
pub fn model_gradient_check(seed: u64, h: f64) -> Result<f64> {
    Ok(GradCheckProblem::new(seed)?.report(h)?.max_rel_error)
}

impl Generator for ModelWeights {
    fn generate(&self, g: &MsgGraph, seed: u64) -> Result<PointCloud> {
        generate(g, self, seed)
    }
}
