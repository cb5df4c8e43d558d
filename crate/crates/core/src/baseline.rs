//! Direct pooling of a single layer over a spatial pyramid, the usual
//! baseline for cross-layer pooling.

use crate::descriptor::Descriptor;
use crate::error::{Error, Result};
use crate::tensor::FeatureTensor;

/// Pyramid depth: level 0 is `1x1`, level 1 adds `2x2`, level 2 adds `4x4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpmConfig {
    level: u8,
}

impl SpmConfig {
    pub fn new(level: u8) -> Result<Self> {
        if level > 2 {
            return Err(Error::Argument(format!("pyramid level must be 0, 1 or 2, got {level}")));
        }
        Ok(Self { level })
    }

    pub fn level(&self) -> u8 {
        self.level
    }

    /// Grid sizes in concatenation order.
    pub fn grids(&self) -> &'static [usize] {
        &[1, 2, 4][..=self.level as usize]
    }

    pub fn cell_count(&self) -> usize {
        self.grids().iter().map(|g| g * g).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpmMethod {
    /// Elementwise max; an empty cell pools to zero.
    Max,
    /// Sum followed by elementwise `sign(v) * sqrt(|v|)`.
    SumSqrt,
}

/// Cell index along one axis of a `grid`-way split of `extent` units.
#[inline]
pub fn cell_of(pos: usize, extent: usize, grid: usize) -> usize {
    pos * grid / extent
}

/// Pools `t` over every pyramid cell and concatenates the cells, coarsest
/// grid first and row-major within a grid. One channel per cell, each of
/// width `D`.
pub fn spm_pool(t: &FeatureTensor, cfg: SpmConfig, method: SpmMethod) -> Result<Descriptor> {
    let (h, w, d) = t.shape();
    let mut out = Vec::with_capacity(cfg.cell_count() * d);
    for &g in cfg.grids() {
        let mut cells = vec![0.0f64; g * g * d];
        let mut filled = vec![false; g * g];
        for row in 0..h {
            for col in 0..w {
                let cell = cell_of(row, h, g) * g + cell_of(col, w, g);
                let acc = &mut cells[cell * d..(cell + 1) * d];
                let x = t.at(row, col);
                match method {
                    SpmMethod::SumSqrt => acc.iter_mut().zip(x).for_each(|(a, &v)| *a += v as f64),
                    SpmMethod::Max if !filled[cell] => {
                        acc.iter_mut().zip(x).for_each(|(a, &v)| *a = v as f64)
                    }
                    SpmMethod::Max => acc.iter_mut().zip(x).for_each(|(a, &v)| *a = a.max(v as f64)),
                }
                filled[cell] = true;
            }
        }
        out.extend(cells.into_iter().map(|v| match method {
            SpmMethod::Max => v as f32,
            SpmMethod::SumSqrt => (v.signum() * v.abs().sqrt()) as f32,
        }));
    }
    Descriptor::new(cfg.cell_count(), d, out)
}
