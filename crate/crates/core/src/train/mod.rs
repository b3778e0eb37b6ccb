//! Desk-scale training: a synthetic shape corpus, MSG sampling, the
//! weighted-Chamfer training loop, evaluation and checkpoints.

mod dataset;
mod eval;
mod fit;
pub mod synth;

pub use dataset::{
    build_dataset, build_dataset_with, read_dataset, write_dataset, Dataset, DatasetSpec,
    FamilyCount, GraphSource, Manifest, ManifestEntry, ShapeRecord, MANIFEST_VERSION,
};
pub use eval::{evaluate, evaluate_with, EvalOptions, EvalReport, ShapeScore, EVAL_SCALE};
pub use fit::{loss_history_csv, sample_gradient, train, train_with, EpochStats, TrainConfig};
pub use synth::{synth_random_shape, synth_shape, ShapeFamily, ShapeParams, SynthShape};

/// Seed of item `index` in sub-stream `stream` of `base` (SplitMix64 mix).
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
