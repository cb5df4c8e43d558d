//! Convolutional activation tensors viewed as grids of local features.

use std::path::Path;

use crate::error::{Error, Result};
use crate::npy::{self, NpyArray};

/// An `H x W x D` activation grid stored row-major with depth innermost, so
/// the feature vector of each spatial unit is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    height: usize,
    width: usize,
    depth: usize,
    nonneg: bool,
    data: Vec<f32>,
}

impl FeatureTensor {
    /// Builds a tensor, rejecting zero dimensions, length mismatches and
    /// non-finite values.
    pub fn new(height: usize, width: usize, depth: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || depth == 0 {
            return Err(Error::Shape(format!(
                "tensor dimensions must be positive, got {height}x{width}x{depth}"
            )));
        }
        let expected = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(depth))
            .ok_or_else(|| Error::Shape("tensor size overflows".into()))?;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "{height}x{width}x{depth} tensor needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Value(format!(
                "non-finite activation {} at flat index {pos}",
                data[pos]
            )));
        }
        Ok(Self {
            height,
            width,
            depth,
            nonneg: false,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, depth: usize) -> Result<Self> {
        Self::new(height, width, depth, vec![0.0; height * width * depth])
    }

    /// Builds a tensor from one feature vector per spatial unit, in row-major order.
    pub fn from_units(height: usize, width: usize, units: &[Vec<f32>]) -> Result<Self> {
        let depth = units.first().map_or(0, Vec::len);
        if let Some(bad) = units.iter().position(|u| u.len() != depth) {
            return Err(Error::Shape(format!(
                "spatial unit {bad} has length {}, expected {depth}",
                units[bad].len()
            )));
        }
        Self::new(height, width, depth, units.concat())
    }

    /// Marks the tensor as post-ReLU, checking that no activation is negative.
    pub fn with_nonneg(mut self) -> Result<Self> {
        if let Some(pos) = self.data.iter().position(|&v| v < 0.0) {
            return Err(Error::Value(format!(
                "negative activation {} at flat index {pos} in a tensor declared non-negative",
                self.data[pos]
            )));
        }
        self.nonneg = true;
        Ok(self)
    }

    pub fn is_nonneg(&self) -> bool {
        self.nonneg
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// `(H, W, D)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.depth)
    }

    /// Number of local features, `H * W`.
    pub fn num_units(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Feature vector of spatial unit `i` (row-major index).
    pub fn unit(&self, i: usize) -> &[f32] {
        &self.data[i * self.depth..(i + 1) * self.depth]
    }

    /// Feature vector at `(row, col)`.
    pub fn at(&self, row: usize, col: usize) -> &[f32] {
        self.unit(row * self.width + col)
    }

    /// The `H * W` local features in row-major spatial order.
    pub fn spatial_units(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.depth)
    }

    /// Activation of feature map `k` at every spatial unit.
    pub fn feature_map(&self, k: usize) -> Vec<f32> {
        self.spatial_units().map(|u| u[k]).collect()
    }

    pub fn scaled(&self, c: f32) -> Result<Self> {
        Self::new(
            self.height,
            self.width,
            self.depth,
            self.data.iter().map(|v| v * c).collect(),
        )
    }
}

impl TryFrom<NpyArray> for FeatureTensor {
    type Error = Error;

    fn try_from(arr: NpyArray) -> Result<Self> {
        match arr.shape[..] {
            [h, w, d] => FeatureTensor::new(h, w, d, arr.data),
            _ => Err(Error::Schema(format!(
                "tensor 'shape' must have rank 3 [H, W, D], got rank {} {:?}",
                arr.shape.len(),
                arr.shape
            ))),
        }
    }
}

/// Loads an `[H, W, D]` float32 tensor from an npy file.
pub fn load_tensor(path: impl AsRef<Path>) -> Result<FeatureTensor> {
    npy::read_npy_file(path)?.try_into()
}

pub fn save_tensor(path: impl AsRef<Path>, tensor: &FeatureTensor) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    npy::write_npy(&mut w, &[tensor.height, tensor.width, tensor.depth], &tensor.data)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

/// Two layers sharing one spatial layout: `local` (layer t) supplies the
/// pooled features, `guide` (layer t+1) supplies one weighting map per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerPair {
    local: FeatureTensor,
    guide: FeatureTensor,
}

impl LayerPair {
    pub fn new(local: FeatureTensor, guide: FeatureTensor) -> Result<Self> {
        if local.height != guide.height || local.width != guide.width {
            return Err(Error::Pairing {
                local: local.shape(),
                guide: guide.shape(),
            });
        }
        Ok(Self { local, guide })
    }

    pub fn local(&self) -> &FeatureTensor {
        &self.local
    }

    pub fn guide(&self) -> &FeatureTensor {
        &self.guide
    }

    pub fn into_parts(self) -> (FeatureTensor, FeatureTensor) {
        (self.local, self.guide)
    }

    pub fn num_units(&self) -> usize {
        self.local.num_units()
    }
}

/// Pairs two layers if they share the same `H x W` spatial unit layout.
pub fn pair_layers(local: FeatureTensor, guide: FeatureTensor) -> Result<LayerPair> {
    LayerPair::new(local, guide)
}
