//! The weighted-Chamfer training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, AdamConfig, Tape, Tensor};
use crate::error::{Error, Result};
use crate::extract::KRange;
use crate::frame::compute_frames_with;
use crate::geom::Vec3;
use crate::model::net::{self, Bound};
use crate::model::{
    standard_normal, Checkpoint, GraphInputs, ModelConfig, ModelWeights, TrainingMeta,
};
use crate::par::{map_range, map_slice, Parallelism};

use super::dataset::Dataset;
use super::derive_seed;

const INIT_STREAM: u64 = 10;
const SHUFFLE_STREAM: u64 = 11;
const NOISE_STREAM: u64 = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Samples whose gradients are averaged into one Adam step.
    pub batch: usize,
    pub adam: AdamConfig,
    /// Vertex budget of evaluation MSGs.
    pub eval_k: KRange,
    pub model: ModelConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch: 8,
            adam: AdamConfig::default(),
            eval_k: KRange::new(16, 64),
            model: ModelConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Zero epochs is accepted and returns the initialization unchanged.
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::invalid("batch must be at least 1"));
        }
        let a = &self.adam;
        if !(a.lr.is_finite() && a.lr > 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                a.lr
            )));
        }
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::invalid(
                "Adam betas must lie in [0, 1) and eps must be positive",
            ));
        }
        self.model.validate()
    }

    pub fn init_seed(&self) -> u64 {
        derive_seed(self.seed, INIT_STREAM, 0)
    }

    pub fn initial_weights(&self) -> Result<ModelWeights> {
        ModelWeights::init(self.model.clone(), self.init_seed())
    }
}

/// Training pair with its graph-side inputs precomputed.
struct Sample<'d> {
    inputs: GraphInputs,
    gt: &'d [Vec3],
}

/// Loss and parameter gradients of one sample.
pub fn sample_gradient(
    inputs: &GraphInputs,
    gt: &[Vec3],
    w: &ModelWeights,
    eps: &Tensor,
) -> Result<(f64, Vec<Tensor>)> {
    let tape = Tape::new();
    let p = Bound::params(&tape, w);
    let out = net::forward(inputs, &p, eps)?;
    let loss = net::weighted_chamfer_loss(out.points, inputs, gt, Parallelism::Sequential)?;
    let value = loss.value().item();
    if !value.is_finite() {
        return Ok((value, Vec::new()));
    }
    let grads = tape.backward(loss)?;
    Ok((value, p.vars.iter().map(|v| grads.wrt(*v)).collect()))
}

/// Per-epoch progress passed to the training callback.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    pub steps: usize,
}

pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<Checkpoint> {
    train_with(
        dataset,
        cfg,
        cfg.initial_weights()?,
        Parallelism::default(),
        |_| {},
    )
}

/// Trains `init` on every (cloud, MSG) pair of `dataset`.
///
/// Each epoch visits the pairs in a seeded shuffle. Every sample draws fresh
/// noise, gradients are averaged over groups of `cfg.batch` samples and one
/// Adam step follows each group. Samples of a group run in parallel under
/// `mode`; their gradients are summed in order, so the result does not
/// depend on the thread count.
pub fn train_with(
    dataset: &Dataset,
    cfg: &TrainConfig,
    init: ModelWeights,
    mode: Parallelism,
    mut on_epoch: impl FnMut(EpochStats),
) -> Result<Checkpoint> {
    cfg.validate()?;
    if init.config() != &cfg.model {
        return Err(Error::invalid(
            "initial weights do not match the model config",
        ));
    }
    let pairs = dataset.pairs();
    if pairs.is_empty() {
        return Err(Error::invalid("training needs a non-empty dataset"));
    }
    let radius = cfg.model.rcr_radius;
    let samples = map_range(pairs.len(), mode, |i| {
        let (s, g) = pairs[i];
        let shape = &dataset.shapes[s];
        let graph = &shape.graphs[g];
        let frames = compute_frames_with(graph, radius)?;
        Ok(Sample {
            inputs: GraphInputs::new(graph, &frames)?,
            gt: &shape.cloud.points,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let c = cfg.model.channels;
    let mut weights = init;
    let mut adam = Adam::new(cfg.adam);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;
    let mut drawn = 0u64;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
            cfg.seed,
            SHUFFLE_STREAM,
            epoch as u64,
        )));
        let mut loss_sum = 0.0;
        for group in order.chunks(cfg.batch) {
            let jobs: Vec<(usize, u64)> = group
                .iter()
                .enumerate()
                .map(|(k, &i)| (i, drawn + k as u64))
                .collect();
            drawn += group.len() as u64;
            let w = &weights;
            let results = map_slice(&jobs, mode, |&(i, n)| {
                let s = &samples[i];
                let eps = standard_normal(
                    s.inputs.num_points(),
                    c,
                    derive_seed(cfg.seed, NOISE_STREAM, n),
                );
                sample_gradient(&s.inputs, s.gt, w, &eps)
            });
            let mut total: Option<Vec<Tensor>> = None;
            for (&(i, _), r) in jobs.iter().zip(results) {
                let (loss, grads) = r?;
                if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Diverged {
                        step,
                        sample: i,
                        loss,
                    });
                }
                loss_sum += loss;
                match &mut total {
                    None => total = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            a.data_mut()
                                .iter_mut()
                                .zip(g.data())
                                .for_each(|(x, y)| *x += y);
                        }
                    }
                }
            }
            let mut grads = total.expect("groups are non-empty");
            let inv = 1.0 / group.len() as f64;
            grads
                .iter_mut()
                .for_each(|g| g.data_mut().iter_mut().for_each(|x| *x *= inv));
            adam.step(weights.tensors_mut(), &grads)?;
            if !weights.is_finite() {
                return Err(Error::Diverged {
                    step,
                    sample: group[0],
                    loss: f64::NAN,
                });
            }
            step += 1;
        }
        let mean_loss = loss_sum / samples.len() as f64;
        log::info!(
            "epoch {}/{}: mean wCD {mean_loss:.6}",
            epoch + 1,
            cfg.epochs
        );
        history.push(mean_loss);
        on_epoch(EpochStats {
            epoch: epoch + 1,
            mean_loss,
            steps: step,
        });
    }
    Ok(Checkpoint {
        weights,
        meta: TrainingMeta {
            epochs: cfg.epochs,
            loss_history: history,
            dataset_seed: Some(dataset.spec.seed),
            train_seed: Some(cfg.seed),
            init_seed: Some(cfg.init_seed()),
        },
    })
}

/// `epoch,mean_wCD` with 1-based epochs.
pub fn loss_history_csv(history: &[f64]) -> String {
    let mut out = String::from("epoch,mean_wCD\n");
    for (i, l) in history.iter().enumerate() {
        out.push_str(&format!("{},{l}\n", i + 1));
    }
    out
}
