//! Training and test corpora, and their on-disk manifest.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::{extract_msg, kmeans_msg, ExtractParams, KRange};
use crate::geom::{load_cloud, save_cloud, PointCloud};
use crate::graph::{load_graph, save_graph, MsgGraph};
use crate::par::{map_range, Parallelism};

use super::derive_seed;
use super::synth::{synth_random_shape, ShapeFamily};

pub const MANIFEST_VERSION: u64 = 1;

const SHAPE_STREAM: u64 = 1;
const GRAPH_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyCount {
    pub family: ShapeFamily,
    pub count: usize,
}

/// How the MSGs of each shape are produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphSource {
    /// Mixed-precision random k-means; the seed field is replaced per graph.
    Extract { params: ExtractParams },
    /// Plain k-means with `K` drawn uniformly from `k`, for test sets.
    Kmeans { k: KRange, edge_tau: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub counts: Vec<FamilyCount>,
    pub points_per_shape: usize,
    pub msgs_per_shape: usize,
    pub graphs: GraphSource,
    pub seed: u64,
}

impl DatasetSpec {
    /// `per_family` shapes of every family, 512 points, 5 extracted MSGs each.
    pub fn training(per_family: usize, seed: u64) -> Self {
        DatasetSpec {
            counts: ShapeFamily::ALL
                .iter()
                .map(|&family| FamilyCount {
                    family,
                    count: per_family,
                })
                .collect(),
            points_per_shape: 512,
            msgs_per_shape: 5,
            graphs: GraphSource::Extract {
                params: ExtractParams::default(),
            },
            seed,
        }
    }

    /// `per_family` shapes of every family with one plain k-means MSG each.
    pub fn test(per_family: usize, k: KRange, seed: u64) -> Self {
        DatasetSpec {
            msgs_per_shape: 1,
            graphs: GraphSource::Kmeans {
                k,
                edge_tau: ExtractParams::default().edge_tau,
            },
            ..DatasetSpec::training(per_family, seed)
        }
    }

    pub fn num_shapes(&self) -> usize {
        self.counts.iter().map(|c| c.count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.counts.is_empty() || self.counts.iter().any(|c| c.count == 0) {
            return Err(Error::invalid(
                "every listed family needs a count of at least 1",
            ));
        }
        if self.msgs_per_shape == 0 {
            return Err(Error::invalid("msgs_per_shape must be at least 1"));
        }
        let needed = match &self.graphs {
            GraphSource::Extract { params } => {
                params.validate()?;
                params.min_points()
            }
            GraphSource::Kmeans { k, edge_tau } => {
                if k.lo == 0 || k.lo > k.hi {
                    return Err(Error::invalid(format!("bad k range [{}, {}]", k.lo, k.hi)));
                }
                if !(edge_tau.is_finite() && *edge_tau > 0.0) {
                    return Err(Error::invalid("edge_tau must be positive"));
                }
                k.hi
            }
        };
        if self.points_per_shape < needed {
            return Err(Error::invalid(format!(
                "{} points per shape, the graph source needs at least {needed}",
                self.points_per_shape
            )));
        }
        Ok(())
    }

    fn families(&self) -> Vec<ShapeFamily> {
        self.counts
            .iter()
            .flat_map(|c| std::iter::repeat_n(c.family, c.count))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapeRecord {
    pub name: String,
    pub family: ShapeFamily,
    pub cloud: PointCloud,
    pub graphs: Vec<MsgGraph>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub shapes: Vec<ShapeRecord>,
}

impl Dataset {
    pub fn num_pairs(&self) -> usize {
        self.shapes.iter().map(|s| s.graphs.len()).sum()
    }

    /// `(shape index, graph index)` of every training pair, shape-major.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.shapes
            .iter()
            .enumerate()
            .flat_map(|(i, s)| (0..s.graphs.len()).map(move |j| (i, j)))
            .collect()
    }
}

pub fn build_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    build_dataset_with(spec, Parallelism::default())
}

/// Shapes are independent and built in parallel; every shape and graph has
/// its own derived seed, so the result does not depend on `mode`.
pub fn build_dataset_with(spec: &DatasetSpec, mode: Parallelism) -> Result<Dataset> {
    spec.validate()?;
    let families = spec.families();
    let shapes = map_range(families.len(), mode, |i| build_shape(spec, families[i], i));
    Ok(Dataset {
        spec: spec.clone(),
        shapes: shapes.into_iter().collect::<Result<_>>()?,
    })
}

fn build_shape(spec: &DatasetSpec, family: ShapeFamily, i: usize) -> Result<ShapeRecord> {
    let shape = synth_random_shape(
        family,
        spec.points_per_shape,
        derive_seed(spec.seed, SHAPE_STREAM, i as u64),
    )?;
    let graphs = (0..spec.msgs_per_shape)
        .map(|j| {
            let seed = derive_seed(
                spec.seed,
                GRAPH_STREAM,
                (i * spec.msgs_per_shape + j) as u64,
            );
            match &spec.graphs {
                GraphSource::Extract { params } => extract_msg(
                    &shape.cloud,
                    &ExtractParams {
                        seed,
                        ..params.clone()
                    },
                ),
                GraphSource::Kmeans { k, edge_tau } => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    kmeans_msg(&shape.cloud, k.draw(&mut rng), seed, *edge_tau)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ShapeRecord {
        name: format!("{}_{i:04}", family.name()),
        family,
        cloud: shape.cloud,
        graphs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub family: ShapeFamily,
    /// Paths relative to the manifest's directory.
    pub cloud: PathBuf,
    pub graphs: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u64,
    pub spec: DatasetSpec,
    pub shapes: Vec<ManifestEntry>,
}

/// Writes one `.xyz` per cloud, one JSON per graph and `manifest.json` into
/// `dir` (created if missing). Returns the manifest path.
pub fn write_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut shapes = Vec::with_capacity(dataset.shapes.len());
    for s in &dataset.shapes {
        let cloud = PathBuf::from(format!("{}.xyz", s.name));
        save_cloud(&s.cloud, dir.join(&cloud))?;
        let mut graphs = Vec::with_capacity(s.graphs.len());
        for (j, g) in s.graphs.iter().enumerate() {
            let path = PathBuf::from(format!("{}_g{j}.json", s.name));
            save_graph(g, dir.join(&path))?;
            graphs.push(path);
        }
        shapes.push(ManifestEntry {
            name: s.name.clone(),
            family: s.family,
            cloud,
            graphs,
        });
    }
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        spec: dataset.spec.clone(),
        shapes,
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

pub fn read_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    let manifest_path = manifest_path.as_ref();
    let text = std::fs::read_to_string(manifest_path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(MANIFEST_VERSION) => {}
        Some(found) => {
            return Err(Error::Version {
                found,
                expected: MANIFEST_VERSION,
            })
        }
        None => return Err(Error::Parse("manifest has no format_version".into())),
    }
    let manifest: Manifest = serde_json::from_value(value)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let shapes = manifest
        .shapes
        .iter()
        .map(|e| {
            Ok(ShapeRecord {
                name: e.name.clone(),
                family: e.family,
                cloud: load_cloud(dir.join(&e.cloud))?,
                graphs: e
                    .graphs
                    .iter()
                    .map(|g| load_graph(dir.join(g)))
                    .collect::<Result<_>>()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        spec: manifest.spec,
        shapes,
    })
}
