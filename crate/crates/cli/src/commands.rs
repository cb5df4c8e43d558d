use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use xlpool_core::npy::read_npy_file;
use xlpool_core::postprocess::{
    l2_normalize, normalize_channels, pca_dim_for_target, power_normalize, standard_pipeline, ChannelPooling,
    PcaModel, PipelineOptions,
};
use xlpool_core::retrieval::{build_index, encode_pair, BuildOptions, ChannelSelection, GalleryIndex};
use xlpool_core::{concat_layers, gram as gram_matrix, load_tensor, selftest as checks, sign_quantize, spm_pool};
use xlpool_core::{Descriptor, FeatureTensor, SpmConfig, SpmMethod};

use crate::manifest::{self, load_pair};
use crate::output::{commit, descriptor_files, npy_bytes, read_meta, trits_path, Flags};
use crate::{CliError, Method, NormFlags};

fn pipeline(norm: NormFlags, max: bool) -> PipelineOptions {
    PipelineOptions {
        l2: norm.l2,
        power: norm.power,
        pooling: if max { ChannelPooling::Max } else { ChannelPooling::Sum },
    }
}

fn load_pca(dir: Option<&Path>) -> Result<Option<PcaModel>, CliError> {
    dir.map(|d| PcaModel::load(d).map_err(|e| CliError::from(e).context(d.display())))
        .transpose()
}

fn trits_file(out: &Path, desc: &Descriptor) -> Result<(PathBuf, Vec<u8>), CliError> {
    Ok((trits_path(out), sign_quantize(desc)?.to_payload()))
}

pub fn pool(
    local: &Path,
    guide: &Path,
    pca: Option<&Path>,
    norm: NormFlags,
    max: bool,
    quantize: bool,
    out: &Path,
) -> Result<(), CliError> {
    let pair = load_pair(local, guide)?;
    let model = load_pca(pca)?;
    let opts = pipeline(norm, max);
    let desc = standard_pipeline(&pair, model.as_ref(), &opts)?;
    let flags = Flags {
        pca: model.is_some(),
        l2: opts.l2,
        power: opts.power,
        pooling: Some(opts.pooling),
        quantize,
        ..Flags::default()
    };
    let mut files = descriptor_files(out, &desc, flags)?;
    if quantize {
        files.push(trits_file(out, &desc)?);
    }
    commit(files)?;
    eprintln!(
        "pooled {} units into {} channels x {} -> {}",
        pair.num_units(),
        desc.num_channels(),
        desc.channel_dim().unwrap_or(0),
        out.display()
    );
    Ok(())
}

pub enum PcaDim {
    Full,
    Fixed(usize),
    Target { total: usize, channels: usize },
}

pub fn pca_fit(
    manifest_path: Option<&Path>,
    inputs: &[PathBuf],
    dim: PcaDim,
    max_samples: usize,
    out: &Path,
) -> Result<(), CliError> {
    let paths: Vec<PathBuf> = match manifest_path {
        Some(m) => manifest::load(m)?.into_iter().map(|e| e.local_path).collect(),
        None => inputs.to_vec(),
    };
    if paths.is_empty() {
        return Err(CliError::Schema("pca-fit needs --manifest or at least one --input".into()));
    }
    let tensors = paths
        .par_iter()
        .map(|p| load_tensor(p).map_err(|e| CliError::from(e).context(p.display())))
        .collect::<Result<Vec<FeatureTensor>, _>>()?;
    let input_dim = tensors[0].depth();
    let output_dim = match dim {
        PcaDim::Full => input_dim,
        PcaDim::Fixed(d) => d,
        PcaDim::Target { total, channels } => pca_dim_for_target(total, channels)?,
    };
    let model = PcaModel::fit_on_tensors(&tensors, output_dim, max_samples)?;
    // stage into a sibling directory so a failed save leaves nothing behind
    let staging = out.with_extension("partial");
    let _ = fs::remove_dir_all(&staging);
    if let Err(e) = model.save(&staging) {
        let _ = fs::remove_dir_all(&staging);
        return Err(e.into());
    }
    if out.exists() {
        fs::remove_dir_all(out)?;
    }
    fs::rename(&staging, out)?;
    eprintln!(
        "pca {} -> {} on {} tensors -> {}",
        model.input_dim(),
        model.output_dim(),
        tensors.len(),
        out.display()
    );
    Ok(())
}

fn load_descriptor(path: &Path) -> Result<(Descriptor, Flags), CliError> {
    let meta = read_meta(path)?;
    let arr = read_npy_file(path).map_err(|e| CliError::from(e).context(path.display()))?;
    if arr.shape.len() != 1 {
        return Err(CliError::Schema(format!(
            "{}: descriptor must be 1-D, got shape {:?}",
            path.display(),
            arr.shape
        )));
    }
    let d = meta
        .d
        .ok_or_else(|| CliError::Schema(format!("{}: descriptor has mixed channel widths", path.display())))?;
    let desc = Descriptor::new(meta.channels, d, arr.data).map_err(|e| CliError::from(e).context(path.display()))?;
    Ok((desc, meta.flags))
}

pub fn postprocess(input: &Path, norm: NormFlags, quantize: bool, out: &Path) -> Result<(), CliError> {
    let (mut desc, mut flags) = load_descriptor(input)?;
    if norm.l2 {
        desc = normalize_channels(&desc);
        flags.l2 = true;
    }
    if norm.power {
        desc = power_normalize(&desc);
        flags.power = true;
    }
    flags.quantize |= quantize;
    let mut files = descriptor_files(out, &desc, flags)?;
    if quantize {
        files.push(trits_file(out, &desc)?);
    }
    commit(files)?;
    eprintln!("postprocessed {} -> {}", input.display(), out.display());
    Ok(())
}

pub fn spm(input: &Path, input2: Option<&Path>, level: u8, method: Method, l2: bool, out: &Path) -> Result<(), CliError> {
    let cfg = SpmConfig::new(level)?;
    let m = match method {
        Method::Max => SpmMethod::Max,
        Method::SumSqrt => SpmMethod::SumSqrt,
    };
    let layer = |p: &Path| -> Result<Descriptor, CliError> {
        let t = load_tensor(p).map_err(|e| CliError::from(e).context(p.display()))?;
        Ok(spm_pool(&t, cfg, m)?)
    };
    let mut desc = layer(input)?;
    if let Some(p) = input2 {
        desc = concat_layers(&desc, &layer(p)?);
    }
    if l2 {
        desc = l2_normalize(&desc);
    }
    let flags = Flags {
        l2,
        spm_level: Some(level),
        spm_method: Some(match method {
            Method::Max => "max".into(),
            Method::SumSqrt => "sum-sqrt".into(),
        }),
        ..Flags::default()
    };
    commit(descriptor_files(out, &desc, flags)?)?;
    eprintln!("spm level {level}: {} dims -> {}", desc.len(), out.display());
    Ok(())
}

pub fn index(pairs: &Path, pca: Option<&Path>, norm: NormFlags, out: &Path) -> Result<(), CliError> {
    let entries = manifest::load(pairs)?;
    let loaded = manifest::load_pairs(&entries)?;
    let opts = BuildOptions {
        pipeline: pipeline(norm, false),
        pca: load_pca(pca)?,
    };
    let idx = build_index(loaded, &opts)?;
    commit(vec![(out.to_path_buf(), idx.to_bytes()?)])?;
    eprintln!(
        "indexed {} images ({} channels x {}) -> {}",
        idx.len(),
        idx.num_channels(),
        idx.channel_dim(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct QueryHit {
    rank: usize,
    image_id: String,
    score: i64,
}

#[derive(Serialize)]
struct QueryResult {
    k_channels: usize,
    selection: &'static str,
    hits: Vec<QueryHit>,
}

#[allow(clippy::too_many_arguments)]
pub fn query(
    index_path: &Path,
    local: &Path,
    guide: &Path,
    k_channels: usize,
    top: usize,
    pca: Option<&Path>,
    gallery_side: bool,
    out: &Path,
) -> Result<(), CliError> {
    let idx = GalleryIndex::load(index_path).map_err(|e| CliError::from(e).context(index_path.display()))?;
    let pair = load_pair(local, guide)?;
    let opts = BuildOptions {
        pipeline: PipelineOptions::raw(),
        pca: load_pca(pca)?,
    };
    let (signs, stats) = encode_pair(&pair, &opts)?;
    let selection = if gallery_side { ChannelSelection::Gallery } else { ChannelSelection::Query };
    let hits = idx.search(&signs, &stats, k_channels, top, selection)?;
    let result = QueryResult {
        k_channels,
        selection: if gallery_side { "gallery" } else { "query" },
        hits: hits
            .into_iter()
            .enumerate()
            .map(|(i, h)| QueryHit { rank: i + 1, image_id: h.image_id, score: h.score })
            .collect(),
    };
    let json = serde_json::to_vec_pretty(&result).expect("result serializes");
    commit(vec![(out.to_path_buf(), json)])?;
    for h in &result.hits {
        eprintln!("{:>4}  {:>8}  {}", h.rank, h.score, h.image_id);
    }
    Ok(())
}

fn descriptor_dir(dir: &Path) -> Result<Vec<Vec<f32>>, CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    files.retain(|p| p.extension().is_some_and(|x| x == "npy"));
    files.sort();
    files
        .par_iter()
        .map(|p| {
            let arr = read_npy_file(p).map_err(|e| CliError::from(e).context(p.display()))?;
            if arr.shape.len() != 1 {
                return Err(CliError::Schema(format!("{}: expected a 1-D descriptor, got {:?}", p.display(), arr.shape)));
            }
            Ok(arr.data)
        })
        .collect()
}

pub fn gram(a: &Path, b: &Path, out: &Path) -> Result<(), CliError> {
    let (da, db) = (descriptor_dir(a)?, descriptor_dir(b)?);
    let k = gram_matrix(&da, &db)?;
    let data: Vec<f32> = k.data().iter().map(|&v| v as f32).collect();
    commit(vec![(out.to_path_buf(), npy_bytes(&[k.rows(), k.cols()], &data)?)])?;
    eprintln!("gram {}x{} -> {}", k.rows(), k.cols(), out.display());
    Ok(())
}

pub fn selftest(seed: u64, fixture: Option<&Path>) -> Result<(), CliError> {
    let bytes = fixture
        .map(|p| fs::read(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))))
        .transpose()?;
    let report = checks::run(seed, bytes.as_deref());
    println!("{report}");
    if report.all_passed() {
        Ok(())
    } else {
        Err(CliError::SelftestFailed)
    }
}
