//! Indicator-map pooling and cross-layer pooling.
//!
//! Cross-layer pooling treats each feature map of the guide layer as a soft
//! region indicator and sum-pools the local features under it:
//!
//! ```text
//! P_k = sum_i x_i * g_{i,k}        k = 0..K
//! ```
//!
//! which is the `D_t x K` matrix `X^T G` stored one column (channel) at a time.
//! Sums run over spatial units in row-major order with `f64` accumulators and
//! are rounded to `f32` once at the end, so the result does not depend on
//! whether channels are computed in parallel.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::descriptor::Descriptor;
use crate::error::{Error, Result};
use crate::tensor::{FeatureTensor, LayerPair};

/// `K` real-valued weight maps over the `N` spatial units of a layer.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorMaps {
    count: usize,
    units: usize,
    // map-major: map k occupies [k * units, (k + 1) * units)
    weights: Vec<f32>,
}

impl IndicatorMaps {
    pub fn new(maps: Vec<Vec<f32>>) -> Result<Self> {
        let units = maps.first().map_or(0, Vec::len);
        if maps.is_empty() || units == 0 {
            return Err(Error::Shape("indicator maps must be non-empty".into()));
        }
        if let Some(bad) = maps.iter().position(|m| m.len() != units) {
            return Err(Error::Shape(format!(
                "indicator map {bad} has {} entries, expected {units}",
                maps[bad].len()
            )));
        }
        let weights = maps.concat();
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Value("indicator weights must be finite".into()));
        }
        Ok(Self {
            count: maps.len(),
            units,
            weights,
        })
    }

    /// One map per feature map of `guide`.
    pub fn from_guide(guide: &FeatureTensor) -> Self {
        let count = guide.depth();
        let units = guide.num_units();
        let mut weights = vec![0.0; count * units];
        for (i, unit) in guide.spatial_units().enumerate() {
            for (k, &g) in unit.iter().enumerate() {
                weights[k * units + i] = g;
            }
        }
        Self {
            count,
            units,
            weights,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn map(&self, k: usize) -> &[f32] {
        &self.weights[k * self.units..(k + 1) * self.units]
    }
}

fn for_each_channel(acc: &mut [f64], dim: usize, f: impl Fn(usize, &mut [f64]) + Sync + Send) {
    #[cfg(feature = "parallel")]
    acc.par_chunks_mut(dim)
        .enumerate()
        .for_each(|(k, c)| f(k, c));
    #[cfg(not(feature = "parallel"))]
    acc.chunks_mut(dim).enumerate().for_each(|(k, c)| f(k, c));
}

fn finish(channels: usize, dim: usize, acc: Vec<f64>) -> Result<Descriptor> {
    Descriptor::new(channels, dim, acc.into_iter().map(|v| v as f32).collect())
}

/// Weighted sum-pooling of the local features under each indicator map:
/// `P_k = sum_i x_i * I_{i,k}`.
pub fn pool_with_indicators(local: &FeatureTensor, maps: &IndicatorMaps) -> Result<Descriptor> {
    if maps.units != local.num_units() {
        return Err(Error::Shape(format!(
            "indicator maps cover {} units, tensor has {}x{} = {}",
            maps.units,
            local.height(),
            local.width(),
            local.num_units()
        )));
    }
    let dim = local.depth();
    let mut acc = vec![0.0f64; maps.count * dim];
    for_each_channel(&mut acc, dim, |k, out| {
        for (x, &w) in local.spatial_units().zip(maps.map(k)) {
            if w == 0.0 {
                continue;
            }
            let w = w as f64;
            for (o, &v) in out.iter_mut().zip(x) {
                *o += w * v as f64;
            }
        }
    });
    finish(maps.count, dim, acc)
}

/// Cross-layer pooling: one channel per guide feature map, each the local
/// features summed with that map's activations as weights. Output length is
/// `D_local * D_guide`.
pub fn cross_layer_pool(pair: &LayerPair) -> Result<Descriptor> {
    let local = pair.local();
    let guide = pair.guide();
    let (dim, channels) = (local.depth(), guide.depth());
    let mut acc = vec![0.0f64; channels * dim];
    for_each_channel(&mut acc, dim, |k, out| {
        for (x, g) in local.spatial_units().zip(guide.spatial_units()) {
            let w = g[k];
            if w == 0.0 {
                continue;
            }
            let w = w as f64;
            for (o, &v) in out.iter_mut().zip(x) {
                *o += w * v as f64;
            }
        }
    });
    finish(channels, dim, acc)
}

/// Reference implementation of [`cross_layer_pool`] as a plain loop over
/// `(unit, channel, dimension)`. Used to check the fast path.
pub fn cross_layer_pool_oracle(pair: &LayerPair) -> Result<Descriptor> {
    let local = pair.local();
    let guide = pair.guide();
    let (n, dim, channels) = (local.num_units(), local.depth(), guide.depth());
    let x = local.data();
    let g = guide.data();
    let mut out = vec![0.0f64; channels * dim];
    for i in 0..n {
        for k in 0..channels {
            for j in 0..dim {
                out[k * dim + j] += x[i * dim + j] as f64 * g[i * channels + k] as f64;
            }
        }
    }
    finish(channels, dim, out)
}

/// Cross-layer pooling with the channel sum replaced by a max:
/// `P_k[j] = max_i x_i[j] * g_{i,k}`.
pub fn max_channel_pool(pair: &LayerPair) -> Result<Descriptor> {
    let local = pair.local();
    let guide = pair.guide();
    let (dim, channels) = (local.depth(), guide.depth());
    let mut out = vec![f32::NEG_INFINITY; channels * dim];
    for (x, g) in local.spatial_units().zip(guide.spatial_units()) {
        for (k, &w) in g.iter().enumerate() {
            for (o, &v) in out[k * dim..(k + 1) * dim].iter_mut().zip(x) {
                *o = o.max(v * w);
            }
        }
    }
    Descriptor::new(channels, dim, out)
}
