//! Descriptor post-processing: PCA on local features, per-channel l2
//! normalization and signed square-root (power) normalization.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::descriptor::Descriptor;
use crate::error::{Error, Result};
use crate::npy::{self, NpyArray};
use crate::pooling::{cross_layer_pool, max_channel_pool};
use crate::tensor::{FeatureTensor, LayerPair};

/// Channels with an l2 norm at or below this are left untouched.
pub const ZERO_CHANNEL_EPS: f64 = 1e-12;

/// Default cap on the number of local features used to fit PCA.
pub const DEFAULT_MAX_PCA_SAMPLES: usize = 100_000;

/// Mean and top principal directions of a set of local features.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    input_dim: usize,
    output_dim: usize,
    mean: Vec<f32>,
    // output_dim x input_dim, row-major, rows orthonormal
    projection: Vec<f32>,
    eigenvalues: Vec<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PcaMeta {
    input_dim: usize,
    output_dim: usize,
}

const FIT_BLOCK: usize = 1024;

impl PcaModel {
    /// Fits PCA on `samples` (each of the same length `D`), keeping the
    /// `output_dim` leading eigenvectors of the sample covariance.
    ///
    /// Eigenvectors are sign-fixed so that their largest-magnitude entry is
    /// positive (lowest index wins ties), which makes fitting reproducible.
    pub fn fit<'a, I>(samples: I, output_dim: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f32]>,
    {
        let samples: Vec<&[f32]> = samples.into_iter().collect();
        let n = samples.len();
        if n < 2 {
            return Err(Error::Fit(format!("need at least 2 samples, got {n}")));
        }
        let dim = samples[0].len();
        if dim == 0 {
            return Err(Error::Fit("samples are empty vectors".into()));
        }
        if let Some(bad) = samples.iter().position(|s| s.len() != dim) {
            return Err(Error::Shape(format!(
                "sample {bad} has length {}, expected {dim}",
                samples[bad].len()
            )));
        }
        if output_dim == 0 || output_dim > dim.min(n - 1) {
            return Err(Error::Argument(format!(
                "output_dim {output_dim} must be in 1..={} for {n} samples of dimension {dim}",
                dim.min(n - 1)
            )));
        }

        let mut mean = vec![0.0f64; dim];
        for s in &samples {
            for (m, &v) in mean.iter_mut().zip(*s) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);

        let mut cov = DMatrix::<f64>::zeros(dim, dim);
        for block in samples.chunks(FIT_BLOCK) {
            let centered = DMatrix::from_fn(block.len(), dim, |r, c| block[r][c] as f64 - mean[c]);
            cov += centered.tr_mul(&centered);
        }
        cov /= (n - 1) as f64;
        // symmetrize away rounding before the eigensolver
        let cov = (&cov + cov.transpose()) * 0.5;

        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .total_cmp(&eig.eigenvalues[a])
                .then(a.cmp(&b))
        });

        let mut projection = Vec::with_capacity(output_dim * dim);
        let mut eigenvalues = Vec::with_capacity(output_dim);
        for &col in order.iter().take(output_dim) {
            let v = eig.eigenvectors.column(col);
            let mut pivot = 0;
            for j in 1..dim {
                if v[j].abs() > v[pivot].abs() {
                    pivot = j;
                }
            }
            let flip = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
            projection.extend(v.iter().map(|&x| (x * flip) as f32));
            eigenvalues.push(eig.eigenvalues[col].max(0.0) as f32);
        }

        Ok(Self {
            input_dim: dim,
            output_dim,
            mean: mean.into_iter().map(|m| m as f32).collect(),
            projection,
            eigenvalues,
        })
    }

    /// Fits on the local features of `tensors`, taking every `s`-th spatial
    /// unit so that at most `max_samples` are used.
    pub fn fit_on_tensors(tensors: &[FeatureTensor], output_dim: usize, max_samples: usize) -> Result<Self> {
        let total: usize = tensors.iter().map(FeatureTensor::num_units).sum();
        let stride = total.div_ceil(max_samples.max(1)).max(1);
        let samples = tensors
            .iter()
            .flat_map(|t| t.spatial_units())
            .step_by(stride);
        Self::fit(samples, output_dim)
    }

    pub fn from_parts(mean: Vec<f32>, projection: Vec<f32>, eigenvalues: Vec<f32>) -> Result<Self> {
        let input_dim = mean.len();
        let output_dim = eigenvalues.len();
        if input_dim == 0 || output_dim == 0 || output_dim > input_dim {
            return Err(Error::Shape(format!(
                "invalid pca dimensions {input_dim} -> {output_dim}"
            )));
        }
        if projection.len() != input_dim * output_dim {
            return Err(Error::Shape(format!(
                "projection has {} values, expected {output_dim}x{input_dim}",
                projection.len()
            )));
        }
        let all = mean.iter().chain(&projection).chain(&eigenvalues);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::Value("pca model contains non-finite values".into()));
        }
        Ok(Self {
            input_dim,
            output_dim,
            mean,
            projection,
            eigenvalues,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn mean(&self) -> &[f32] {
        &self.mean
    }

    pub fn eigenvalues(&self) -> &[f32] {
        &self.eigenvalues
    }

    /// Row `r` of the projection matrix (the `r`-th principal direction).
    pub fn component(&self, r: usize) -> &[f32] {
        &self.projection[r * self.input_dim..(r + 1) * self.input_dim]
    }

    /// `projection * (x - mean)`.
    pub fn apply(&self, x: &[f32]) -> Result<Vec<f32>> {
        if x.len() != self.input_dim {
            return Err(Error::Shape(format!(
                "pca expects {} inputs, got {}",
                self.input_dim,
                x.len()
            )));
        }
        Ok(self.apply_unchecked(x))
    }

    fn apply_unchecked(&self, x: &[f32]) -> Vec<f32> {
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(&v, &m)| v as f64 - m as f64).collect();
        self.projection
            .chunks_exact(self.input_dim)
            .map(|row| row.iter().zip(&centered).map(|(&p, &c)| p as f64 * c).sum::<f64>() as f32)
            .collect()
    }

    /// Projects every local feature of `t`, giving a tensor of depth `output_dim`.
    pub fn apply_tensor(&self, t: &FeatureTensor) -> Result<FeatureTensor> {
        if t.depth() != self.input_dim {
            return Err(Error::Shape(format!(
                "pca expects depth {}, tensor has depth {}",
                self.input_dim,
                t.depth()
            )));
        }
        let data = t.spatial_units().flat_map(|u| self.apply_unchecked(u)).collect();
        FeatureTensor::new(t.height(), t.width(), self.output_dim, data)
    }

    /// Writes `mean.npy`, `projection.npy`, `eigenvalues.npy` and `meta.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        npy::write_npy_file(dir.join("mean.npy"), &NpyArray::new(vec![self.input_dim], self.mean.clone())?)?;
        npy::write_npy_file(
            dir.join("projection.npy"),
            &NpyArray::new(vec![self.output_dim, self.input_dim], self.projection.clone())?,
        )?;
        npy::write_npy_file(
            dir.join("eigenvalues.npy"),
            &NpyArray::new(vec![self.output_dim], self.eigenvalues.clone())?,
        )?;
        let meta = PcaMeta {
            input_dim: self.input_dim,
            output_dim: self.output_dim,
        };
        let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(dir.join("meta.json"), json)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: PcaMeta = serde_json::from_slice(&std::fs::read(dir.join("meta.json"))?)
            .map_err(|e| Error::Format(format!("pca meta.json: {e}")))?;
        let mean = npy::read_npy_file(dir.join("mean.npy"))?;
        let projection = npy::read_npy_file(dir.join("projection.npy"))?;
        let eigenvalues = npy::read_npy_file(dir.join("eigenvalues.npy"))?;
        if mean.shape != [meta.input_dim]
            || projection.shape != [meta.output_dim, meta.input_dim]
            || eigenvalues.shape != [meta.output_dim]
        {
            return Err(Error::Schema(format!(
                "pca bundle shapes {:?}, {:?}, {:?} disagree with meta {}x{}",
                mean.shape, projection.shape, eigenvalues.shape, meta.output_dim, meta.input_dim
            )));
        }
        Self::from_parts(mean.data, projection.data, eigenvalues.data)
    }
}

/// PCA width for local features such that `channels` pooled channels give at
/// most `target_total` descriptor dimensions.
pub fn pca_dim_for_target(target_total: usize, channels: usize) -> Result<usize> {
    if channels == 0 {
        return Err(Error::Argument("channel count must be positive".into()));
    }
    match target_total / channels {
        0 => Err(Error::Argument(format!(
            "target {target_total} is smaller than the {channels} channels"
        ))),
        d => Ok(d),
    }
}

/// Scales each channel to unit l2 norm; near-zero channels are left as is.
pub fn normalize_channels(desc: &Descriptor) -> Descriptor {
    let mut out = desc.clone();
    for c in out.channels_mut() {
        let norm = c.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
        if norm > ZERO_CHANNEL_EPS {
            c.iter_mut().for_each(|v| *v = (*v as f64 / norm) as f32);
        }
    }
    out
}

/// Scales the whole descriptor to unit l2 norm.
pub fn l2_normalize(desc: &Descriptor) -> Descriptor {
    let norm = desc.values().iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
    if norm > ZERO_CHANNEL_EPS {
        desc.map(|v| (v as f64 / norm) as f32)
    } else {
        desc.clone()
    }
}

/// Elementwise `sign(v) * sqrt(|v|)`.
pub fn power_normalize(desc: &Descriptor) -> Descriptor {
    desc.map(|v| v.signum() * v.abs().sqrt())
}

/// How pooled values are combined over spatial units within a channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelPooling {
    #[default]
    Sum,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub l2: bool,
    pub power: bool,
    pub pooling: ChannelPooling,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            l2: true,
            power: true,
            pooling: ChannelPooling::Sum,
        }
    }
}

impl PipelineOptions {
    pub fn raw() -> Self {
        Self {
            l2: false,
            power: false,
            pooling: ChannelPooling::Sum,
        }
    }
}

/// All eight `(pca, l2, power)` toggle combinations.
pub fn ablation_grid() -> Vec<(bool, bool, bool)> {
    (0..8u8)
        .map(|b| (b & 4 != 0, b & 2 != 0, b & 1 != 0))
        .collect()
}

/// PCA on local features, cross-layer pooling, per-channel l2, then power
/// normalization. Each stage after pooling can be switched off.
pub fn standard_pipeline(pair: &LayerPair, pca: Option<&PcaModel>, opts: &PipelineOptions) -> Result<Descriptor> {
    let projected;
    let pair = match pca {
        Some(model) => {
            let local = model.apply_tensor(pair.local())?;
            projected = LayerPair::new(local, pair.guide().clone())?;
            &projected
        }
        None => pair,
    };
    let mut desc = match opts.pooling {
        ChannelPooling::Sum => cross_layer_pool(pair)?,
        ChannelPooling::Max => max_channel_pool(pair)?,
    };
    if opts.l2 {
        desc = normalize_channels(&desc);
    }
    if opts.power {
        desc = power_normalize(&desc);
    }
    Ok(desc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::pair_layers;
    use crate::trits::sign_quantize;
    use proptest::prelude::*;

    fn descriptor(k: usize, d: usize, vals: Vec<f32>) -> Descriptor {
        Descriptor::new(k, d, vals).unwrap()
    }

    fn channel_norm(c: &[f32]) -> f64 {
        c.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt()
    }

    #[test]
    fn normalize_channels_basic() {
        let d = descriptor(2, 2, vec![3., 4., 0., 0.]);
        let n = normalize_channels(&d);
        assert_eq!(n.channel(0), &[0.6, 0.8]);
        assert_eq!(n.channel(1), &[0., 0.]);
        let z = descriptor(1, 3, vec![0.0; 3]);
        assert_eq!(normalize_channels(&z), z);
    }

    #[test]
    fn power_normalize_values() {
        let d = descriptor(1, 5, vec![4., -9., 1., -1., 0.]);
        assert_eq!(power_normalize(&d).values(), &[2., -3., 1., -1., 0.]);
    }

    #[test]
    fn power_twice_is_fourth_root() {
        let vals = vec![16.0, -0.0625, 3.7, -12.5, 0.0];
        let d = descriptor(1, 5, vals.clone());
        let twice = power_normalize(&power_normalize(&d));
        for (got, v) in twice.values().iter().zip(&vals) {
            let want = (v.signum() as f64) * (v.abs() as f64).powf(0.25);
            let want = if *v == 0.0 { 0.0 } else { want };
            assert!((*got as f64 - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn l2_then_power_differs_from_power_then_l2() {
        let d = descriptor(1, 2, vec![1.0, 8.0]);
        let a = power_normalize(&normalize_channels(&d));
        let b = normalize_channels(&power_normalize(&d));
        assert!(a.values().iter().zip(b.values()).any(|(x, y)| (x - y).abs() > 1e-3));
    }

    #[test]
    fn pca_rank_one_data() {
        // points along direction (1, 2, 2)/3 around mean (1, 1, 1)
        let samples: Vec<Vec<f32>> = (-5..=5)
            .map(|t| {
                let t = t as f32;
                vec![1.0 + t / 3.0, 1.0 + 2.0 * t / 3.0, 1.0 + 2.0 * t / 3.0]
            })
            .collect();
        let model = PcaModel::fit(samples.iter().map(Vec::as_slice), 2).unwrap();
        // variance of t over -5..=5 with n-1 normalization is 11
        assert!((model.eigenvalues()[0] - 11.0).abs() < 1e-4);
        assert!(model.eigenvalues()[1].abs() < 1e-4);
        let c = model.component(0);
        assert!((c[0] - 1.0 / 3.0).abs() < 1e-5 && (c[1] - 2.0 / 3.0).abs() < 1e-5);
        assert!(model.apply(&[1.0, 1.0, 1.0]).unwrap().iter().all(|v| v.abs() < 1e-6));
    }

    fn lcg_samples(n: usize, d: usize, seed: u64) -> Vec<Vec<f32>> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                (0..d)
                    .map(|j| {
                        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        ((s >> 40) as f32 / (1u64 << 24) as f32 - 0.5) * (j as f32 + 1.0)
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn pca_full_rank_diagonalizes_covariance() {
        let d = 5;
        let samples = lcg_samples(200, d, 3);
        let model = PcaModel::fit(samples.iter().map(Vec::as_slice), d).unwrap();
        let projected: Vec<Vec<f32>> = samples.iter().map(|s| model.apply(s).unwrap()).collect();
        // projected data is centered, so its covariance is the plain second moment
        for a in 0..d {
            for b in 0..d {
                let cov: f64 = projected.iter().map(|p| p[a] as f64 * p[b] as f64).sum::<f64>() / 199.0;
                if a == b {
                    assert!((cov - model.eigenvalues()[a] as f64).abs() < 1e-4 * cov.max(1.0));
                } else {
                    assert!(cov.abs() < 1e-4, "cov[{a}][{b}] = {cov}");
                }
            }
        }
        for w in model.eigenvalues().windows(2) {
            assert!(w[0] >= w[1]);
        }
        for a in 0..d {
            for b in 0..d {
                let dot: f32 = model.component(a).iter().zip(model.component(b)).map(|(x, y)| x * y).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn pca_is_deterministic_with_sign_convention() {
        let samples = lcg_samples(50, 4, 9);
        let a = PcaModel::fit(samples.iter().map(Vec::as_slice), 3).unwrap();
        let b = PcaModel::fit(samples.iter().map(Vec::as_slice), 3).unwrap();
        assert_eq!(a, b);
        for r in 0..3 {
            let c = a.component(r);
            let pivot = c.iter().enumerate().fold(0, |p, (j, v)| if v.abs() > c[p].abs() { j } else { p });
            assert!(c[pivot] > 0.0);
        }
    }

    #[test]
    fn pca_axis_aligned_reconstructs_centered_input() {
        // independent axes with distinct variances: components are signed unit vectors
        let samples: Vec<Vec<f32>> = (0..40)
            .map(|i| {
                let a = ((i % 5) as f32 - 2.0) * 3.0;
                let b = ((i / 5) as f32 - 3.5) * 0.5;
                vec![10.0 + b, -2.0 + a]
            })
            .collect();
        let model = PcaModel::fit(samples.iter().map(Vec::as_slice), 2).unwrap();
        let x = [11.0f32, 4.0];
        let y = model.apply(&x).unwrap();
        // reconstruct with projection^T
        let mut back = [0.0f32; 2];
        for (r, &yr) in y.iter().enumerate() {
            for (j, b) in back.iter_mut().enumerate() {
                *b += model.component(r)[j] * yr;
            }
        }
        let centered = [x[0] - model.mean()[0], x[1] - model.mean()[1]];
        assert!((back[0] - centered[0]).abs() < 1e-4 && (back[1] - centered[1]).abs() < 1e-4);
        // first component is the high-variance axis 1
        assert!((model.component(0)[1].abs() - 1.0).abs() < 1e-5);
        assert!((y[0].abs() - centered[1].abs()).abs() < 1e-4);
    }

    #[test]
    fn pca_errors() {
        let one = [vec![1.0f32, 2.0]];
        assert!(matches!(PcaModel::fit(one.iter().map(Vec::as_slice), 1), Err(Error::Fit(_))));
        let three = lcg_samples(3, 4, 1);
        assert!(matches!(PcaModel::fit(three.iter().map(Vec::as_slice), 3), Err(Error::Argument(_))));
        let model = PcaModel::fit(three.iter().map(Vec::as_slice), 2).unwrap();
        assert!(matches!(model.apply(&[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn pca_bundle_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let samples = lcg_samples(30, 6, 4);
        let model = PcaModel::fit(samples.iter().map(Vec::as_slice), 4).unwrap();
        model.save(dir.path()).unwrap();
        for f in ["mean.npy", "projection.npy", "eigenvalues.npy", "meta.json"] {
            assert!(dir.path().join(f).exists());
        }
        assert_eq!(PcaModel::load(dir.path()).unwrap(), model);
    }

    #[test]
    fn pca_dim_interpretation() {
        assert_eq!(pca_dim_for_target(2000, 100).unwrap(), 20);
        assert_eq!(pca_dim_for_target(2000, 64).unwrap(), 31);
        assert!(pca_dim_for_target(10, 64).is_err());
    }

    fn lcg_tensor(h: usize, w: usize, d: usize, seed: u64) -> FeatureTensor {
        let data = lcg_samples(h * w, d, seed).concat();
        FeatureTensor::new(h, w, d, data).unwrap()
    }

    #[test]
    fn pipeline_all_off_is_raw_pooling() {
        let pair = pair_layers(lcg_tensor(3, 3, 4, 1), lcg_tensor(3, 3, 2, 2)).unwrap();
        let raw = standard_pipeline(&pair, None, &PipelineOptions::raw()).unwrap();
        assert_eq!(raw, cross_layer_pool(&pair).unwrap());
    }

    #[test]
    fn pipeline_l2_only_gives_unit_channels() {
        let pair = pair_layers(lcg_tensor(3, 3, 4, 5), lcg_tensor(3, 3, 3, 6)).unwrap();
        let opts = PipelineOptions { l2: true, power: false, pooling: ChannelPooling::Sum };
        let d = standard_pipeline(&pair, None, &opts).unwrap();
        for c in d.channels() {
            assert!((channel_norm(c) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn pipeline_order_is_pca_pool_l2_power() {
        let pair = pair_layers(lcg_tensor(3, 3, 4, 7), lcg_tensor(3, 3, 3, 8)).unwrap();
        let units: Vec<&[f32]> = pair.local().spatial_units().collect();
        let pca = PcaModel::fit(units, 4).unwrap();
        let got = standard_pipeline(&pair, Some(&pca), &PipelineOptions::default()).unwrap();
        let projected = pair_layers(pca.apply_tensor(pair.local()).unwrap(), pair.guide().clone()).unwrap();
        let want = power_normalize(&normalize_channels(&cross_layer_pool(&projected).unwrap()));
        assert_eq!(got, want);
        let swapped = normalize_channels(&power_normalize(&cross_layer_pool(&projected).unwrap()));
        assert_ne!(got, swapped);
    }

    #[test]
    fn pipeline_rejects_pca_dim_mismatch() {
        let pair = pair_layers(lcg_tensor(3, 3, 4, 7), lcg_tensor(3, 3, 3, 8)).unwrap();
        let samples = lcg_samples(10, 5, 1);
        let pca = PcaModel::fit(samples.iter().map(Vec::as_slice), 5).unwrap();
        assert!(matches!(standard_pipeline(&pair, Some(&pca), &PipelineOptions::default()), Err(Error::Shape(_))));
    }

    #[test]
    fn grid_has_eight_distinct_toggles() {
        let mut g = ablation_grid();
        g.dedup();
        assert_eq!(g.len(), 8);
    }

    fn desc_strategy() -> impl Strategy<Value = Descriptor> {
        (1usize..6, 1usize..10).prop_flat_map(|(k, d)| {
            proptest::collection::vec(
                prop_oneof![Just(0.0f32), -1e3f32..1e3, -1e-3f32..1e-3],
                k * d,
            )
            .prop_map(move |v| Descriptor::new(k, d, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(d in desc_strategy()) {
            let once = normalize_channels(&d);
            let twice = normalize_channels(&once);
            for (a, b) in once.values().iter().zip(twice.values()) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
            for c in once.channels() {
                let n = channel_norm(c);
                prop_assert!(n == 0.0 || (n - 1.0).abs() <= 1e-6);
            }
        }

        #[test]
        fn power_preserves_sign_and_zeros(d in desc_strategy()) {
            let p = power_normalize(&d);
            for (a, b) in d.values().iter().zip(p.values()) {
                prop_assert_eq!(*a == 0.0, *b == 0.0);
                prop_assert_eq!(a.is_sign_negative() && *a != 0.0, b.is_sign_negative() && *b != 0.0);
            }
            prop_assert_eq!(sign_quantize(&p).unwrap(), sign_quantize(&d).unwrap());
        }

        #[test]
        fn quantize_zero_count(d in desc_strategy()) {
            let q = sign_quantize(&d).unwrap();
            let zeros = d.values().iter().filter(|&&v| v == 0.0).count() as u64;
            prop_assert_eq!(q.len() as u64 - q.nonzero_count(), zeros);
        }

        #[test]
        fn full_rank_pca_preserves_distances(seed in any::<u64>()) {
            let samples = lcg_samples(12, 4, seed);
            let model = PcaModel::fit(samples.iter().map(Vec::as_slice), 4).unwrap();
            let proj: Vec<Vec<f32>> = samples.iter().map(|s| model.apply(s).unwrap()).collect();
            for a in 0..samples.len() {
                for b in 0..a {
                    let d0: f32 = samples[a].iter().zip(&samples[b]).map(|(x, y)| (x - y).powi(2)).sum::<f32>().sqrt();
                    let d1: f32 = proj[a].iter().zip(&proj[b]).map(|(x, y)| (x - y).powi(2)).sum::<f32>().sqrt();
                    prop_assert!((d0 - d1).abs() <= 1e-4 * d0.max(1.0));
                }
            }
        }
    }
}
