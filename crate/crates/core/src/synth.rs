//! Seeded synthetic activation tensors for tests, benchmarks and demos.
//!
//! Families are built from a random pre-activation prototype per layer; each
//! member adds Gaussian noise, applies ReLU and optionally rolls the spatial
//! grid by a random offset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tensor::{FeatureTensor, LayerPair};

pub type SynthRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SynthRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(rng: &mut SynthRng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.sample::<f32, _>(StandardNormal)).collect()
}

/// Tensor of independent standard normal values.
pub fn gaussian_tensor(rng: &mut SynthRng, h: usize, w: usize, d: usize) -> FeatureTensor {
    FeatureTensor::new(h, w, d, gaussian(rng, h * w * d)).expect("positive dims")
}

/// Tensor of `max(0, z)` values, `z` standard normal.
pub fn relu_tensor(rng: &mut SynthRng, h: usize, w: usize, d: usize) -> FeatureTensor {
    let data = gaussian(rng, h * w * d).into_iter().map(|v| v.max(0.0)).collect();
    FeatureTensor::new(h, w, d, data).expect("positive dims")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilySpec {
    pub families: usize,
    pub per_family: usize,
    pub height: usize,
    pub width: usize,
    pub local_dim: usize,
    pub guide_dim: usize,
    /// Standard deviation of the per-member noise relative to the unit-variance prototype.
    pub noise: f32,
    /// Roll each member's spatial grid by a random offset.
    pub shift: bool,
}

impl Default for FamilySpec {
    fn default() -> Self {
        Self {
            families: 5,
            per_family: 20,
            height: 8,
            width: 8,
            local_dim: 32,
            guide_dim: 64,
            noise: 0.5,
            shift: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthItem {
    pub image_id: String,
    pub family: usize,
    pub pair: LayerPair,
}

fn roll(data: &[f32], h: usize, w: usize, d: usize, dr: usize, dc: usize) -> Vec<f32> {
    let mut out = vec![0.0; data.len()];
    for r in 0..h {
        for c in 0..w {
            let src = (r * w + c) * d;
            let dst = (((r + dr) % h) * w + (c + dc) % w) * d;
            out[dst..dst + d].copy_from_slice(&data[src..src + d]);
        }
    }
    out
}

/// `families * per_family` layer pairs, ordered family by family, with ids
/// `f{family}_{member}`.
pub fn planted_families(spec: &FamilySpec, seed: u64) -> Vec<SynthItem> {
    let mut rng = rng(seed);
    let (h, w) = (spec.height, spec.width);
    let n = h * w;
    let prototypes: Vec<(Vec<f32>, Vec<f32>)> = (0..spec.families)
        .map(|_| (gaussian(&mut rng, n * spec.local_dim), gaussian(&mut rng, n * spec.guide_dim)))
        .collect();
    let mut items = Vec::with_capacity(spec.families * spec.per_family);
    for (family, (local, guide)) in prototypes.iter().enumerate() {
        for member in 0..spec.per_family {
            let shift = if spec.shift {
                (rng.random_range(0..h), rng.random_range(0..w))
            } else {
                (0, 0)
            };
            let mut member_layer = |proto: &[f32], d: usize| {
                let noisy: Vec<f32> = proto
                    .iter()
                    .map(|&p| (p + spec.noise * rng.sample::<f32, _>(StandardNormal)).max(0.0))
                    .collect();
                roll(&noisy, h, w, d, shift.0, shift.1)
            };
            let l = member_layer(local, spec.local_dim);
            let g = member_layer(guide, spec.guide_dim);
            let pair = LayerPair::new(
                FeatureTensor::new(h, w, spec.local_dim, l).expect("positive dims"),
                FeatureTensor::new(h, w, spec.guide_dim, g).expect("positive dims"),
            )
            .expect("same grid");
            items.push(SynthItem {
                image_id: format!("f{family}_{member:03}"),
                family,
                pair,
            });
        }
    }
    items
}

/// Average precision of a ranked list given which items are relevant.
/// Returns 0 when nothing is relevant.
pub fn average_precision(ranked_relevance: &[bool], total_relevant: usize) -> f64 {
    if total_relevant == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &rel) in ranked_relevance.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    sum / total_relevant as f64
}
