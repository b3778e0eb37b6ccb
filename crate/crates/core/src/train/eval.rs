//! Chamfer evaluation of generators on a held-out set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::Generator;
use crate::error::{Error, Result};
use crate::geom::{
    apply_similarity, chamfer_distance_with, random_rotation, SimilarityTransform, Vec3,
};
use crate::par::{map_range, Parallelism};

use super::dataset::Dataset;
use super::derive_seed;
use super::synth::ShapeFamily;

/// Range of the random scale in the scaled variant.
pub const EVAL_SCALE: (f64, f64) = (0.8, 1.25);

const GENERATE_STREAM: u64 = 20;
const VARIANT_STREAM: u64 = 21;

/// Which perturbation is applied to each test pair before generation.
/// Both may be on at once.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Uniformly random rotation per shape.
    pub rotate: bool,
    /// Random scale in [`EVAL_SCALE`] per shape; the resulting CD is divided
    /// by the scale so it stays comparable with the plain variant.
    pub scale: bool,
    pub seed: u64,
}

impl EvalOptions {
    pub fn plain(seed: u64) -> Self {
        EvalOptions {
            seed,
            ..Default::default()
        }
    }

    pub fn tags(&self) -> Vec<String> {
        let mut tags = Vec::new();
        if self.rotate {
            tags.push("rotate".to_string());
        }
        if self.scale {
            tags.push("scale".to_string());
        }
        if tags.is_empty() {
            tags.push("plain".to_string());
        }
        tags
    }

    fn transform(&self, item: usize) -> SimilarityTransform {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(self.seed, VARIANT_STREAM, item as u64));
        let rotation = random_rotation(&mut rng);
        let scale = rng.random_range(EVAL_SCALE.0..=EVAL_SCALE.1);
        let mut t = SimilarityTransform::identity();
        if self.rotate {
            t.rotation = rotation;
        }
        if self.scale {
            t.scale = scale;
        }
        t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeScore {
    pub name: String,
    pub family: ShapeFamily,
    /// Index of the MSG within the shape.
    pub graph: usize,
    pub vertices: usize,
    pub cd_x1e4: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub variant: Vec<String>,
    pub seed: u64,
    pub per_shape: Vec<ShapeScore>,
    /// Mean over `per_shape` of the symmetric Chamfer distance, ×10⁴.
    pub mean_cd_x1e4: f64,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

pub fn evaluate(
    gen: &dyn Generator,
    model: &str,
    test: &Dataset,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    evaluate_with(gen, model, test, opts, Parallelism::default())
}

/// Generates from every test MSG and scores it against its ground-truth
/// cloud with the standard (unweighted) Chamfer distance. Generation seeds
/// depend only on `opts.seed` and the pair's position, so the plain and
/// perturbed variants see the same noise.
pub fn evaluate_with(
    gen: &dyn Generator,
    model: &str,
    test: &Dataset,
    opts: &EvalOptions,
    mode: Parallelism,
) -> Result<EvalReport> {
    let pairs = test.pairs();
    if pairs.is_empty() {
        return Err(Error::invalid("evaluation needs a non-empty test set"));
    }
    let scores = map_range(pairs.len(), mode, |i| {
        let (s, j) = pairs[i];
        let shape = &test.shapes[s];
        let t = opts.transform(s);
        let graph = shape.graphs[j].transformed(&t);
        let gt = apply_similarity(&shape.cloud, &t)?;
        let out = gen.generate(&graph, derive_seed(opts.seed, GENERATE_STREAM, i as u64))?;
        if out
            .points
            .iter()
            .any(|p: &Vec3| !p.iter().all(|x| x.is_finite()))
        {
            return Err(Error::NonFinite(format!("{model} on {}", shape.name)));
        }
        let cd = chamfer_distance_with(&out, &gt, Parallelism::Sequential)? / t.scale;
        Ok(ShapeScore {
            name: shape.name.clone(),
            family: shape.family,
            graph: j,
            vertices: graph.len(),
            cd_x1e4: cd * 1e4,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mean = scores.iter().map(|s| s.cd_x1e4).sum::<f64>() / scores.len() as f64;
    Ok(EvalReport {
        model: model.to_string(),
        variant: opts.tags(),
        seed: opts.seed,
        per_shape: scores,
        mean_cd_x1e4: mean,
    })
}
