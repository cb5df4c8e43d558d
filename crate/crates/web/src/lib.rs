//! Browser bindings for the demo page in `www/`.
//!
//! Every function returns a JSON string so the page needs no generated
//! TypeScript types. All of it also runs natively, which is how it is tested.

use serde_json::json;
use wasm_bindgen::prelude::*;
use xlpool_core::postprocess::{standard_pipeline, PcaModel, PipelineOptions};
use xlpool_core::retrieval::{build_index, encode_pair, BuildOptions, ChannelSelection, GalleryIndex};
use xlpool_core::synth::{self, average_precision, planted_families, relu_tensor, FamilySpec, SynthItem};
use xlpool_core::{FeatureTensor, LayerPair, SignVector, SpmConfig};

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Pooled descriptor of a random ReLU pair as a `K x d` grid of values.
#[wasm_bindgen]
pub fn pooled_heatmap(seed: u32, grid: usize, local_dim: usize, guide_dim: usize, l2: bool, power: bool) -> Result<String, JsValue> {
    if grid == 0 || local_dim == 0 || guide_dim == 0 {
        return Err(js_err("grid and depths must be positive"));
    }
    let mut rng = synth::rng(seed as u64);
    let local = relu_tensor(&mut rng, grid, grid, local_dim);
    let guide = relu_tensor(&mut rng, grid, grid, guide_dim);
    let pair = LayerPair::new(local, guide).map_err(js_err)?;
    let opts = PipelineOptions { l2, power, ..PipelineOptions::default() };
    let desc = standard_pipeline(&pair, None, &opts).map_err(js_err)?;
    let (lo, hi) = desc
        .values()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(json!({
        "K": desc.num_channels(),
        "d": local_dim,
        "min": lo,
        "max": hi,
        "values": desc.values(),
    })
    .to_string())
}

/// Descriptor length of cross-layer pooling against an SPM baseline on the
/// same two layers.
#[wasm_bindgen]
pub fn descriptor_sizes(local_dim: usize, guide_dim: usize, spm_level: u8) -> Result<String, JsValue> {
    let cfg = SpmConfig::new(spm_level).map_err(js_err)?;
    Ok(json!({
        "cross_layer": local_dim * guide_dim,
        "spm": cfg.cell_count() * (local_dim + guide_dim),
        "spm_cells": cfg.cell_count(),
    })
    .to_string())
}

/// Planted-family gallery built once, queried many times.
#[wasm_bindgen]
pub struct RetrievalDemo {
    items: Vec<SynthItem>,
    index: GalleryIndex,
    queries: Vec<(SignVector, xlpool_core::retrieval::ChannelStats)>,
    per_family: usize,
}

#[wasm_bindgen]
impl RetrievalDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, families: usize, per_family: usize, noise: f32) -> Result<RetrievalDemo, JsValue> {
        if families == 0 || per_family < 2 {
            return Err(js_err("need at least one family of two images"));
        }
        let spec = FamilySpec {
            families,
            per_family,
            noise,
            shift: true,
            ..FamilySpec::default()
        };
        let items = planted_families(&spec, seed as u64);
        let locals: Vec<FeatureTensor> = items.iter().map(|it| it.pair.local().clone()).collect();
        let pca = PcaModel::fit_on_tensors(&locals, spec.local_dim, 100_000).map_err(js_err)?;
        let opts = BuildOptions { pipeline: PipelineOptions::default(), pca: Some(pca) };
        let index = build_index(items.iter().map(|it| (it.image_id.clone(), it.pair.clone())), &opts).map_err(js_err)?;
        let queries = items
            .iter()
            .map(|it| encode_pair(&it.pair, &opts))
            .collect::<xlpool_core::Result<Vec<_>>>()
            .map_err(js_err)?;
        Ok(Self { items, index, queries, per_family })
    }

    #[wasm_bindgen(getter)]
    pub fn channels(&self) -> usize {
        self.index.num_channels()
    }

    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.items.len()
    }

    /// Ranked gallery for one query image.
    pub fn search(&self, query: usize, k_channels: usize, top: usize, gallery_side: bool) -> Result<String, JsValue> {
        let (signs, stats) = self.queries.get(query).ok_or_else(|| js_err("query out of range"))?;
        let selection = if gallery_side { ChannelSelection::Gallery } else { ChannelSelection::Query };
        let hits = self.index.search(signs, stats, k_channels, top, selection).map_err(js_err)?;
        let family = self.items[query].family;
        let rows: Vec<_> = hits
            .iter()
            .map(|h| {
                let f = self.family_of(&h.image_id);
                json!({"image_id": h.image_id, "score": h.score, "same_family": f == family})
            })
            .collect();
        Ok(json!({"query": self.items[query].image_id, "hits": rows}).to_string())
    }

    /// Mean average precision over every image as a query, self excluded.
    pub fn mean_ap(&self, k_channels: usize, gallery_side: bool) -> Result<f64, JsValue> {
        let selection = if gallery_side { ChannelSelection::Gallery } else { ChannelSelection::Query };
        let mut total = 0.0;
        for (q, (signs, stats)) in self.items.iter().zip(&self.queries) {
            let hits = self
                .index
                .search(signs, stats, k_channels, self.items.len(), selection)
                .map_err(js_err)?;
            let relevance: Vec<bool> = hits
                .iter()
                .filter(|h| h.image_id != q.image_id)
                .map(|h| self.family_of(&h.image_id) == q.family)
                .collect();
            total += average_precision(&relevance, self.per_family - 1);
        }
        Ok(total / self.items.len() as f64)
    }
}

impl RetrievalDemo {
    fn family_of(&self, id: &str) -> usize {
        self.items.iter().find(|it| it.image_id == id).map_or(usize::MAX, |it| it.family)
    }
}
