//! Oracle-equivalence checks that can be run from an installed binary.

use std::fmt;

use rand::Rng;

use crate::npy;
use crate::pooling::{cross_layer_pool, cross_layer_pool_oracle, pool_with_indicators, IndicatorMaps};
use crate::postprocess::PcaModel;
use crate::retrieval::{build_index, BuildOptions, GalleryIndex};
use crate::synth::{self, gaussian_tensor, relu_tensor};
use crate::tensor::{FeatureTensor, LayerPair};
use crate::trits::{trit_similarity, SignVector};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "selftest seed={}", self.seed)?;
        for c in &self.checks {
            writeln!(f, "{:<4} {:<28} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        let passed = self.checks.iter().filter(|c| c.passed).count();
        write!(f, "{passed}/{} checks passed", self.checks.len())
    }
}

fn max_rel_err(a: &[f32], b: &[f32]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs() as f64));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((*x as f64 - *y as f64).abs()));
    if scale > 0.0 { diff / scale } else { diff }
}

fn random_pair(rng: &mut synth::SynthRng) -> LayerPair {
    let h = rng.random_range(1..=8);
    let w = rng.random_range(1..=8);
    let (dl, dg) = (rng.random_range(1..=16), rng.random_range(1..=16));
    let local = gaussian_tensor(rng, h, w, dl);
    let guide = relu_tensor(rng, h, w, dg);
    LayerPair::new(local, guide).expect("same grid")
}

fn pooling_check(rng: &mut synth::SynthRng) -> Check {
    let mut worst = 0.0f64;
    let mut ok = true;
    for _ in 0..100 {
        let pair = random_pair(rng);
        let fast = cross_layer_pool(&pair).expect("valid pair");
        let slow = cross_layer_pool_oracle(&pair).expect("valid pair");
        ok &= fast.len() == pair.local().depth() * pair.guide().depth();
        worst = worst.max(max_rel_err(fast.values(), slow.values()));
    }
    Check {
        name: "pooling == triple loop",
        passed: ok && worst <= 1e-6,
        detail: format!("100 pairs, max rel err {worst:.1e}"),
    }
}

fn indicator_check(rng: &mut synth::SynthRng) -> Check {
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let pair = random_pair(rng);
        let fast = cross_layer_pool(&pair).expect("valid pair");
        let maps = IndicatorMaps::from_guide(pair.guide());
        let via = pool_with_indicators(pair.local(), &maps).expect("matching maps");
        worst = worst.max(max_rel_err(via.values(), fast.values()));
    }
    Check {
        name: "pooling == indicator maps",
        passed: worst <= 1e-6,
        detail: format!("50 pairs, max rel err {worst:.1e}"),
    }
}

fn trit_check(rng: &mut synth::SynthRng) -> Check {
    let mut mismatches = 0;
    for _ in 0..2000 {
        let k = rng.random_range(1..=8);
        let d = rng.random_range(1..=200);
        let a: Vec<i8> = (0..k * d).map(|_| rng.random_range(-1..=1)).collect();
        let b: Vec<i8> = (0..k * d).map(|_| rng.random_range(-1..=1)).collect();
        let set: Vec<usize> = (0..k).filter(|_| rng.random_bool(0.5)).collect();
        let naive: i64 = set
            .iter()
            .flat_map(|&c| c * d..(c + 1) * d)
            .map(|i| a[i] as i64 * b[i] as i64)
            .sum();
        let qa = SignVector::from_trits(k, d, &a).expect("valid trits");
        let qb = SignVector::from_trits(k, d, &b).expect("valid trits");
        if trit_similarity(&qa, &qb, &set).ok() != Some(naive) {
            mismatches += 1;
        }
    }
    Check {
        name: "packed == unpacked trits",
        passed: mismatches == 0,
        detail: format!("2000 triples, {mismatches} mismatches"),
    }
}

fn npy_check(rng: &mut synth::SynthRng) -> Check {
    let t: FeatureTensor = gaussian_tensor(rng, 3, 4, 5);
    let mut buf = Vec::new();
    let result = npy::write_npy(&mut buf, &[3, 4, 5], t.data())
        .and_then(|_| npy::read_npy(&mut buf.as_slice()));
    let passed = matches!(&result, Ok(a) if a.shape == [3, 4, 5]
        && a.data.iter().zip(t.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    Check {
        name: "npy round trip",
        passed,
        detail: format!("{} bytes", buf.len()),
    }
}

fn pca_check(rng: &mut synth::SynthRng) -> Check {
    let t = gaussian_tensor(rng, 6, 6, 8);
    let model = PcaModel::fit(t.spatial_units(), 8).expect("enough samples");
    let mut worst = 0.0f64;
    for a in 0..8 {
        for b in 0..8 {
            let dot: f64 = model
                .component(a)
                .iter()
                .zip(model.component(b))
                .map(|(&x, &y)| x as f64 * y as f64)
                .sum();
            worst = worst.max((dot - if a == b { 1.0 } else { 0.0 }).abs());
        }
    }
    Check {
        name: "pca orthonormal rows",
        passed: worst <= 1e-4,
        detail: format!("max deviation {worst:.1e}"),
    }
}

fn index_check(seed: u64, fixture: Option<&[u8]>) -> Check {
    let (bytes, source) = match fixture {
        Some(b) => (b.to_vec(), "fixture"),
        None => {
            let spec = synth::FamilySpec {
                families: 2,
                per_family: 3,
                height: 4,
                width: 4,
                local_dim: 6,
                guide_dim: 5,
                ..Default::default()
            };
            let items = synth::planted_families(&spec, seed)
                .into_iter()
                .map(|it| (it.image_id, it.pair));
            let bytes = build_index(items, &BuildOptions::default())
                .and_then(|idx| idx.to_bytes())
                .unwrap_or_default();
            (bytes, "synthetic")
        }
    };
    let round = GalleryIndex::read_from(&mut bytes.as_slice()).and_then(|idx| idx.to_bytes());
    let (passed, detail) = match round {
        Ok(again) if again == bytes => (true, format!("{source}, {} bytes identical", bytes.len())),
        Ok(_) => (false, format!("{source}, bytes differ after save(load())")),
        Err(e) => (false, format!("{source}, load failed: {e}")),
    };
    Check {
        name: "index round trip",
        passed,
        detail,
    }
}

/// Runs every check. `index_fixture` replaces the synthetic index used for
/// the round-trip check with caller-supplied bytes.
pub fn run(seed: u64, index_fixture: Option<&[u8]>) -> Report {
    let mut rng = synth::rng(seed);
    let checks = vec![
        pooling_check(&mut rng),
        indicator_check(&mut rng),
        trit_check(&mut rng),
        npy_check(&mut rng),
        pca_check(&mut rng),
        index_check(seed, index_fixture),
    ];
    Report { seed, checks }
}
