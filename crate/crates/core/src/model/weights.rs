use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::frame::DEFAULT_RCR_RADIUS;

/// Network hyperparameters. The encoder depth is fixed at three attention
/// layers (one relative, two ordinary).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub channels: usize,
    /// Hidden widths of the offset MLP; a 3-wide output layer follows.
    pub decoder_widths: Vec<usize>,
    pub leaky_slope: f64,
    pub noise_floor: f64,
    #[serde(default = "default_rcr_radius")]
    pub rcr_radius: usize,
}

fn default_rcr_radius() -> usize {
    DEFAULT_RCR_RADIUS
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            channels: 64,
            decoder_widths: vec![128, 64],
            leaky_slope: 0.2,
            noise_floor: 1e-6,
            rcr_radius: DEFAULT_RCR_RADIUS,
        }
    }
}

impl ModelConfig {
    /// Small network for gradient checks and fast tests.
    pub fn tiny() -> Self {
        ModelConfig {
            channels: 8,
            decoder_widths: vec![16, 8],
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels < 2 {
            return Err(Error::invalid("channels must be at least 2"));
        }
        if self.decoder_widths.contains(&0) {
            return Err(Error::invalid("decoder widths must be positive"));
        }
        if !self.leaky_slope.is_finite() {
            return Err(Error::invalid("leaky_slope must be finite"));
        }
        if !(self.noise_floor.is_finite() && self.noise_floor > 0.0) {
            return Err(Error::invalid("noise_floor must be positive"));
        }
        Ok(())
    }
}

/// Name and shape of every parameter tensor, in the order used by the
/// optimizer and the tape.
pub fn param_layout(cfg: &ModelConfig) -> Vec<(String, [usize; 2])> {
    let c = cfg.channels;
    let mut out = vec![
        ("rel.attn".to_string(), [5, 1]),
        ("rel.proj.weight".to_string(), [5, c]),
        ("rel.proj.bias".to_string(), [1, c]),
    ];
    for l in 1..=2 {
        out.push((format!("gat{l}.weight"), [c, c]));
        out.push((format!("gat{l}.attn_src"), [c, 1]));
        out.push((format!("gat{l}.attn_dst"), [c, 1]));
    }
    out.push(("head.weight".to_string(), [c, 2 * c]));
    out.push(("head.bias".to_string(), [1, 2 * c]));
    let mut fan_in = 2 * c;
    for (i, &w) in cfg.decoder_widths.iter().chain(&[3]).enumerate() {
        out.push((format!("dec{i}.weight"), [fan_in, w]));
        out.push((format!("dec{i}.bias"), [1, w]));
        fan_in = w;
    }
    out
}

/// Named parameter tensors in [`param_layout`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ModelWeights {
    /// Glorot-uniform matrices and attention vectors, zero biases.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (names, tensors) = param_layout(&config)
            .into_iter()
            .map(|(name, [r, c])| {
                let t = if name.ends_with(".bias") {
                    Tensor::zeros(r, c)
                } else {
                    Tensor::glorot(r, c, &mut rng)
                };
                (name, t)
            })
            .unzip();
        Ok(ModelWeights {
            config,
            names,
            tensors,
        })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (names, tensors) = param_layout(&config)
            .into_iter()
            .map(|(name, [r, c])| (name, Tensor::zeros(r, c)))
            .unzip();
        Ok(ModelWeights {
            config,
            names,
            tensors,
        })
    }

    /// Builds weights from named tensors, checking names and shapes against
    /// the layout for `config`.
    pub fn from_named(config: ModelConfig, mut named: Vec<(String, Tensor)>) -> Result<Self> {
        config.validate()?;
        let layout = param_layout(&config);
        if named.len() != layout.len() {
            return Err(Error::invalid(format!(
                "expected {} tensors, found {}",
                layout.len(),
                named.len()
            )));
        }
        let mut tensors = Vec::with_capacity(layout.len());
        for (name, shape) in &layout {
            let pos = named
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| Error::invalid(format!("missing tensor {name}")))?;
            let (_, t) = named.swap_remove(pos);
            if t.shape() != *shape {
                return Err(Error::invalid(format!(
                    "tensor {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(Error::invalid(format!(
                    "tensor {name} has non-finite entries"
                )));
            }
            tensors.push(t);
        }
        Ok(ModelWeights {
            config,
            names: layout.into_iter().map(|(n, _)| n).collect(),
            tensors,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}
