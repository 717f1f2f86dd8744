use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand_distr::{Distribution, Normal};

use crate::error::{shape_err, Error, Result};
use crate::rng::Rng;

/// Architecture hyperparameters of the regularizer network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TdvConfig {
    /// Image channels `C`.
    pub channels: usize,
    /// Feature channels `m`.
    pub features: usize,
    /// Number of U-Net blocks `b`.
    pub blocks: usize,
}

impl Default for TdvConfig {
    fn default() -> Self {
        Self { channels: 1, features: 8, blocks: 1 }
    }
}

/// Number of residual units per U-Net block (two per encoder/decoder scale and one at the bottom).
pub const RESIDUALS_PER_BLOCK: usize = 5;
/// Scales per U-Net block.
pub const SCALES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParamTensor {
    fn zeros(name: String, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { name, shape, data: vec![0.0; n] }
    }
}

/// Parameters `θ` of the total deep variation regularizer.
///
/// Tensor order: `K`, then per block the residual kernels `k1, k2` of units
/// `0..5`, downsampling kernels `0, 1`, upsampling kernels `0, 1`, and
/// finally the output weights `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct TdvParams {
    pub config: TdvConfig,
    pub tensors: Vec<ParamTensor>,
}

pub(crate) const PER_BLOCK: usize = 2 * RESIDUALS_PER_BLOCK + 4;

impl TdvParams {
    /// All-zero parameters (so `R ≡ 0`).
    pub fn zeros(config: TdvConfig) -> Self {
        let (c, m) = (config.channels, config.features);
        let mut tensors = vec![ParamTensor::zeros("tdv.K".into(), vec![m, c, 3, 3])];
        for b in 0..config.blocks {
            for r in 0..RESIDUALS_PER_BLOCK {
                for k in 1..=2 {
                    tensors.push(ParamTensor::zeros(format!("tdv.b{b}.r{r}.k{k}"), vec![m, m, 3, 3]));
                }
            }
            for l in 0..2 {
                tensors.push(ParamTensor::zeros(format!("tdv.b{b}.down{l}"), vec![m, m, 3, 3]));
            }
            for l in 0..2 {
                tensors.push(ParamTensor::zeros(format!("tdv.b{b}.up{l}"), vec![m, m, 3, 3]));
            }
        }
        tensors.push(ParamTensor::zeros("tdv.w".into(), vec![m]));
        Self { config, tensors }
    }

    /// He-style initialization: kernels `N(0, 2 / fan_in)`, `K` projected to
    /// zero mean, output weights `1e-2`.
    pub fn init(config: TdvConfig, rng: &mut Rng) -> Result<Self> {
        if config.channels == 0 || config.features == 0 || config.blocks == 0 {
            return Err(Error::InvalidParameter(format!("degenerate network {config:?}")));
        }
        let mut p = Self::zeros(config);
        let last = p.tensors.len() - 1;
        for t in &mut p.tensors[..last] {
            let fan_in = (t.shape[1] * 9) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            t.data.iter_mut().for_each(|v| *v = normal.sample(rng));
        }
        p.tensors[last].data.iter_mut().for_each(|v| *v = 1e-2);
        Ok(p.project_zero_mean())
    }

    pub(crate) fn k(&self) -> &[f64] {
        &self.tensors[0].data
    }

    pub(crate) fn w(&self) -> &[f64] {
        &self.tensors.last().expect("output weights").data
    }

    /// Index of a block tensor: residual kernels `0..10`, down `10..12`, up `12..14`.
    pub(crate) fn block_index(block: usize, slot: usize) -> usize {
        1 + block * PER_BLOCK + slot
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(shape_err(self.num_params(), flat.len()));
        }
        let mut off = 0;
        for t in &mut self.tensors {
            let n = t.data.len();
            t.data.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Offset of each tensor inside [`Self::flat`].
    pub fn offsets(&self) -> Vec<(String, usize, usize)> {
        let mut off = 0;
        self.tensors
            .iter()
            .map(|t| {
                let e = (t.name.clone(), off, t.data.len());
                off += t.data.len();
                e
            })
            .collect()
    }

    /// Euclidean projection making every output-channel slice of `K` sum to
    /// zero. Slices already zero-mean up to rounding are left untouched, so
    /// the projection fixes feasible points bit-exactly.
    pub fn project_zero_mean(&self) -> Self {
        let mut p = self.clone();
        let slice = self.config.channels * 9;
        for chunk in p.tensors[0].data.chunks_mut(slice) {
            let mean = chunk.iter().sum::<f64>() / slice as f64;
            let scale = chunk.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if mean.abs() <= 8.0 * f64::EPSILON * scale {
                continue;
            }
            chunk.iter_mut().for_each(|v| *v -= mean);
        }
        p
    }

    /// Largest absolute sum over an output-channel slice of `K`.
    pub fn zero_mean_violation(&self) -> f64 {
        self.k()
            .chunks(self.config.channels * 9)
            .map(|c| c.iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    /// Hash of the exact parameter bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for t in &self.tensors {
            for v in &t.data {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}
