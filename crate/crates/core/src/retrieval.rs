//! Retrieval with binarized cross-layer descriptors.
//!
//! A query is compared only on the pooling channels whose guide feature maps
//! have the largest average activation in the query image:
//!
//! ```text
//! s(q, x) = sum_{k in S} P_{q,k} . P_{x,k}
//! ```
//!
//! Gallery descriptors are stored sign-quantized, so the sum is an integer
//! computed with popcounts.

use std::cmp::Ordering;
use std::io::{Read, Write};
use std::path::Path;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::descriptor::Descriptor;
use crate::error::{Error, Result};
use crate::postprocess::{standard_pipeline, PcaModel, PipelineOptions};
use crate::tensor::{FeatureTensor, LayerPair};
use crate::trits::{sign_quantize, trit_similarity_unchecked, SignVector};

pub const INDEX_MAGIC: &[u8; 8] = b"XLPIDX1\0";
pub const INDEX_VERSION: u32 = 1;

/// Mean activation of every feature map of a guide layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats(Vec<f32>);

impl ChannelStats {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Value("channel statistics must be finite".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `stat[k] = (1/N) sum_i g_{i,k}`.
pub fn channel_stats(guide: &FeatureTensor) -> ChannelStats {
    let mut sums = vec![0.0f64; guide.depth()];
    for unit in guide.spatial_units() {
        for (s, &v) in sums.iter_mut().zip(unit) {
            *s += v as f64;
        }
    }
    let n = guide.num_units() as f64;
    ChannelStats(sums.into_iter().map(|s| (s / n) as f32).collect())
}

/// Indices of the `k` channels with the largest statistic, lower index first
/// on ties, returned in ascending index order.
pub fn select_channels(stats: &ChannelStats, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > stats.len() {
        return Err(Error::Argument(format!(
            "k must be in 1..={}, got {k}",
            stats.len()
        )));
    }
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by(|&a, &b| stats.0[b].total_cmp(&stats.0[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    Ok(order)
}

fn check_channels(channels: &[usize], count: usize) -> Result<()> {
    match channels.iter().find(|&&k| k >= count) {
        Some(bad) => Err(Error::Argument(format!(
            "channel {bad} out of range for {count} channels"
        ))),
        None => Ok(()),
    }
}

/// Sum of per-channel dot products over `channels` for real-valued descriptors.
pub fn dense_similarity(query: &Descriptor, reference: &Descriptor, channels: &[usize]) -> Result<f64> {
    if query.len() != reference.len()
        || query.num_channels() != reference.num_channels()
        || query.channel_dim() != reference.channel_dim()
    {
        return Err(Error::Shape(format!(
            "descriptor shapes differ: {} channels / {} values vs {} channels / {} values",
            query.num_channels(),
            query.len(),
            reference.num_channels(),
            reference.len()
        )));
    }
    check_channels(channels, query.num_channels())?;
    Ok(channels
        .iter()
        .map(|&k| {
            query
                .channel(k)
                .iter()
                .zip(reference.channel(k))
                .map(|(&a, &b)| a as f64 * b as f64)
                .sum::<f64>()
        })
        .sum())
}

pub use crate::trits::trit_similarity;

/// One scored gallery item.
#[derive(Debug, Clone, PartialEq)]
pub struct Hit<S> {
    pub image_id: String,
    pub score: S,
}

/// Sorts by descending score, then ascending id, and keeps `top_n`.
fn rank<S: Copy + PartialOrd>(mut hits: Vec<Hit<S>>, top_n: usize) -> Vec<Hit<S>> {
    hits.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.image_id.cmp(&b.image_id))
    });
    hits.truncate(top_n);
    hits
}

/// Ranks real-valued gallery descriptors against `query` over `channels`.
pub fn rank_dense(
    query: &Descriptor,
    gallery: &[(String, Descriptor)],
    channels: &[usize],
    top_n: usize,
) -> Result<Vec<Hit<f64>>> {
    let hits = gallery
        .iter()
        .map(|(id, d)| {
            Ok(Hit {
                image_id: id.clone(),
                score: dense_similarity(query, d, channels)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rank(hits, top_n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub image_id: String,
    pub signs: SignVector,
    pub stats: ChannelStats,
}

/// Sign-quantized gallery descriptors sharing one `(K, d)` shape.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GalleryIndex {
    channels: usize,
    channel_dim: usize,
    entries: Vec<IndexEntry>,
}

/// Settings used to turn a layer pair into an index entry or a query.
#[derive(Debug, Clone, Default)]
pub struct BuildOptions {
    pub pipeline: PipelineOptions,
    pub pca: Option<PcaModel>,
}

/// Which image's guide statistics pick the compared channels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ChannelSelection {
    /// Channels chosen once from the query (the default).
    #[default]
    Query,
    /// Channels chosen per gallery entry from its stored statistics.
    Gallery,
}

impl GalleryIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_channels(&self) -> usize {
        self.channels
    }

    pub fn channel_dim(&self) -> usize {
        self.channel_dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    /// Appends an entry, enforcing a shared shape and unique ids.
    pub fn push(&mut self, entry: IndexEntry) -> Result<()> {
        let (k, d) = (entry.signs.num_channels(), entry.signs.channel_dim());
        if entry.stats.len() != k {
            return Err(Error::Build(format!(
                "'{}': {} channel statistics for {k} channels",
                entry.image_id,
                entry.stats.len()
            )));
        }
        if self.entries.is_empty() {
            self.channels = k;
            self.channel_dim = d;
        } else if (k, d) != (self.channels, self.channel_dim) {
            return Err(Error::Build(format!(
                "'{}' has shape {k}x{d}, index holds {}x{}",
                entry.image_id, self.channels, self.channel_dim
            )));
        }
        if self.entries.iter().any(|e| e.image_id == entry.image_id) {
            return Err(Error::Build(format!("duplicate image id '{}'", entry.image_id)));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(INDEX_MAGIC)?;
        w.write_all(&INDEX_VERSION.to_le_bytes())?;
        w.write_all(&(self.channels as u32).to_le_bytes())?;
        w.write_all(&(self.channel_dim as u32).to_le_bytes())?;
        w.write_all(&(self.entries.len() as u64).to_le_bytes())?;
        for e in &self.entries {
            let id = e.image_id.as_bytes();
            let len = u16::try_from(id.len())
                .map_err(|_| Error::Build(format!("image id longer than 65535 bytes: '{}'", e.image_id)))?;
            w.write_all(&len.to_le_bytes())?;
            w.write_all(id)?;
            w.write_all(&e.signs.to_payload())?;
            for s in e.stats.values() {
                w.write_all(&s.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(r, &mut magic)?;
        if &magic != INDEX_MAGIC {
            return Err(Error::Format("not an index file (bad magic)".into()));
        }
        let version = read_u32(r)?;
        if version != INDEX_VERSION {
            return Err(Error::Schema(format!("index version {version} not supported")));
        }
        let channels = read_u32(r)? as usize;
        let channel_dim = read_u32(r)? as usize;
        let mut buf8 = [0u8; 8];
        read_exact(r, &mut buf8)?;
        let count = u64::from_le_bytes(buf8);
        if count > 0 && (channels == 0 || channel_dim == 0) {
            return Err(Error::Format("non-empty index with zero-sized header".into()));
        }
        let payload_len = SignVector::payload_len(channels * channel_dim);
        let mut index = GalleryIndex {
            channels,
            channel_dim,
            entries: Vec::new(),
        };
        for _ in 0..count {
            let mut buf2 = [0u8; 2];
            read_exact(r, &mut buf2)?;
            let mut id = vec![0u8; u16::from_le_bytes(buf2) as usize];
            read_exact(r, &mut id)?;
            let image_id = String::from_utf8(id).map_err(|_| Error::Format("image id is not UTF-8".into()))?;
            let mut payload = vec![0u8; payload_len];
            read_exact(r, &mut payload)?;
            let signs = SignVector::from_payload(channels, channel_dim, &payload)?;
            let mut stats = Vec::with_capacity(channels);
            for _ in 0..channels {
                let mut b = [0u8; 4];
                read_exact(r, &mut b)?;
                stats.push(f32::from_le_bytes(b));
            }
            let stats = ChannelStats::new(stats).map_err(|e| Error::Format(e.to_string()))?;
            index
                .push(IndexEntry { image_id, signs, stats })
                .map_err(|e| Error::Format(e.to_string()))?;
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(Error::Format("trailing bytes after last index entry".into()));
        }
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }

    /// Scores every entry against `query` and returns the best `top_n`.
    pub fn search(
        &self,
        query: &SignVector,
        query_stats: &ChannelStats,
        k_channels: usize,
        top_n: usize,
        selection: ChannelSelection,
    ) -> Result<Vec<Hit<i64>>> {
        if (query.num_channels(), query.channel_dim()) != (self.channels, self.channel_dim) {
            return Err(Error::Schema(format!(
                "query shape {}x{} does not match index {}x{}",
                query.num_channels(),
                query.channel_dim(),
                self.channels,
                self.channel_dim
            )));
        }
        if self.entries.is_empty() {
            return Ok(Vec::new());
        }
        let query_set = select_channels(query_stats, k_channels)?;
        let score = |e: &IndexEntry| -> Result<Hit<i64>> {
            let owned;
            let set = match selection {
                ChannelSelection::Query => &query_set,
                ChannelSelection::Gallery => {
                    owned = select_channels(&e.stats, k_channels)?;
                    &owned
                }
            };
            Ok(Hit {
                image_id: e.image_id.clone(),
                score: trit_similarity_unchecked(query, &e.signs, set),
            })
        };
        #[cfg(feature = "parallel")]
        let hits = self.entries.par_iter().map(score).collect::<Result<Vec<_>>>()?;
        #[cfg(not(feature = "parallel"))]
        let hits = self.entries.iter().map(score).collect::<Result<Vec<_>>>()?;
        Ok(rank(hits, top_n))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated index file".into()),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Runs the descriptor pipeline and sign quantization on one layer pair,
/// returning the entry contents for an index or a query.
pub fn encode_pair(pair: &LayerPair, opts: &BuildOptions) -> Result<(SignVector, ChannelStats)> {
    let desc = standard_pipeline(pair, opts.pca.as_ref(), &opts.pipeline)?;
    Ok((sign_quantize(&desc)?, channel_stats(pair.guide())))
}

/// Builds an index from `(image_id, pair)` items, keeping input order.
pub fn build_index<I>(items: I, opts: &BuildOptions) -> Result<GalleryIndex>
where
    I: IntoIterator<Item = (String, LayerPair)>,
{
    let items: Vec<(String, LayerPair)> = items.into_iter().collect();
    let encode = |(id, pair): &(String, LayerPair)| {
        encode_pair(pair, opts).map_err(|e| Error::Build(format!("'{id}': {e}")))
    };
    #[cfg(feature = "parallel")]
    let encoded: Vec<Result<(SignVector, ChannelStats)>> = items.par_iter().map(encode).collect();
    #[cfg(not(feature = "parallel"))]
    let encoded: Vec<Result<(SignVector, ChannelStats)>> = items.iter().map(encode).collect();

    let mut index = GalleryIndex::new();
    for ((image_id, _), enc) in items.into_iter().zip(encoded) {
        let (signs, stats) = enc?;
        index.push(IndexEntry { image_id, signs, stats })?;
    }
    Ok(index)
}

/// Encodes `query_pair` like the gallery and returns the `top_n` best matches.
pub fn query(
    index: &GalleryIndex,
    query_pair: &LayerPair,
    k_channels: usize,
    top_n: usize,
    opts: &BuildOptions,
) -> Result<Vec<Hit<i64>>> {
    let (signs, stats) = encode_pair(query_pair, opts)?;
    index.search(&signs, &stats, k_channels, top_n, ChannelSelection::Query)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::pair_layers;

    fn lcg_tensor(h: usize, w: usize, d: usize, seed: u64, signed: bool) -> FeatureTensor {
        let mut s = seed.wrapping_add(17);
        let data = (0..h * w * d)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let u = (s >> 40) as f32 / (1u64 << 24) as f32;
                if signed { u * 2.0 - 1.0 } else { u }
            })
            .collect();
        FeatureTensor::new(h, w, d, data).unwrap()
    }

    fn pair(seed: u64) -> LayerPair {
        pair_layers(lcg_tensor(3, 3, 6, seed, true), lcg_tensor(3, 3, 4, seed + 1000, false)).unwrap()
    }

    #[test]
    fn stats_examples() {
        let ones = FeatureTensor::new(2, 2, 3, vec![1.0; 12]).unwrap();
        assert_eq!(channel_stats(&ones).values(), &[1.0, 1.0, 1.0]);
        let mut data = vec![0.0; 8];
        data[5] = 1.0; // unit 2, channel 1
        let hot = FeatureTensor::new(2, 2, 2, data).unwrap();
        assert_eq!(channel_stats(&hot).values(), &[0.0, 0.25]);
    }

    #[test]
    fn stats_match_direct_mean() {
        let g = lcg_tensor(4, 5, 7, 3, false);
        let stats = channel_stats(&g);
        for k in 0..7 {
            let mean = g.feature_map(k).iter().map(|&v| v as f64).sum::<f64>() / 20.0;
            assert!((stats.values()[k] as f64 - mean).abs() < 1e-6);
        }
    }

    #[test]
    fn selection_examples() {
        let s = ChannelStats::new(vec![0.1, 0.9, 0.5]).unwrap();
        assert_eq!(select_channels(&s, 2).unwrap(), vec![1, 2]);
        assert_eq!(select_channels(&s, 3).unwrap(), vec![0, 1, 2]);
        let eq = ChannelStats::new(vec![0.3; 5]).unwrap();
        assert_eq!(select_channels(&eq, 3).unwrap(), vec![0, 1, 2]);
        assert!(matches!(select_channels(&s, 0), Err(Error::Argument(_))));
        assert!(matches!(select_channels(&s, 4), Err(Error::Argument(_))));
    }

    #[test]
    fn dense_similarity_full_set_is_dot_product() {
        let a = Descriptor::new(2, 2, vec![1., 2., 3., 4.]).unwrap();
        let b = Descriptor::new(2, 2, vec![0.5, -1., 2., 1.]).unwrap();
        assert_eq!(dense_similarity(&a, &b, &[0, 1]).unwrap(), 0.5 - 2.0 + 6.0 + 4.0);
        assert_eq!(dense_similarity(&a, &b, &[1]).unwrap(), 10.0);
        let c = Descriptor::new(1, 4, vec![0.; 4]).unwrap();
        assert!(matches!(dense_similarity(&a, &c, &[0]), Err(Error::Shape(_))));
    }

    #[test]
    fn empty_index_round_trips() {
        let idx = build_index(Vec::new(), &BuildOptions::default()).unwrap();
        let bytes = idx.to_bytes().unwrap();
        assert_eq!(bytes.len(), 8 + 4 + 4 + 4 + 8);
        let back = GalleryIndex::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, idx);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn ten_entries_round_trip_bytes() {
        let items: Vec<(String, LayerPair)> = (0..10).map(|i| (format!("img{i:02}"), pair(i))).collect();
        let idx = build_index(items, &BuildOptions::default()).unwrap();
        assert_eq!(idx.len(), 10);
        assert_eq!(idx.entries()[3].image_id, "img03");
        let bytes = idx.to_bytes().unwrap();
        let back = GalleryIndex::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, idx);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn header_layout() {
        let idx = build_index(vec![("a".to_string(), pair(1))], &BuildOptions::default()).unwrap();
        let b = idx.to_bytes().unwrap();
        assert_eq!(&b[..8], b"XLPIDX1\0");
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(b[16..20].try_into().unwrap()), 6);
        assert_eq!(u64::from_le_bytes(b[20..28].try_into().unwrap()), 1);
        assert_eq!(u16::from_le_bytes(b[28..30].try_into().unwrap()), 1);
        assert_eq!(b[30], b'a');
        assert_eq!(b.len(), 31 + 6 + 4 * 4);
    }

    #[test]
    fn build_errors() {
        let dup = vec![("x".to_string(), pair(1)), ("x".to_string(), pair(2))];
        assert!(matches!(build_index(dup, &BuildOptions::default()), Err(Error::Build(m)) if m.contains("duplicate")));
        let odd = pair_layers(lcg_tensor(3, 3, 5, 1, true), lcg_tensor(3, 3, 4, 2, false)).unwrap();
        let mixed = vec![("a".to_string(), pair(1)), ("bad".to_string(), odd)];
        assert!(matches!(build_index(mixed, &BuildOptions::default()), Err(Error::Build(m)) if m.contains("'bad'")));
    }

    #[test]
    fn corrupted_index_is_rejected() {
        let idx = build_index(vec![("a".to_string(), pair(1))], &BuildOptions::default()).unwrap();
        let mut b = idx.to_bytes().unwrap();
        b[0] = b'Y';
        assert!(matches!(GalleryIndex::read_from(&mut b.as_slice()), Err(Error::Format(_))));
        let mut b = idx.to_bytes().unwrap();
        b[31] = 0b10;
        assert!(GalleryIndex::read_from(&mut b.as_slice()).is_err());
        let b = idx.to_bytes().unwrap();
        assert!(GalleryIndex::read_from(&mut &b[..b.len() - 1]).is_err());
        let mut b = idx.to_bytes().unwrap();
        b[8] = 2;
        assert!(matches!(GalleryIndex::read_from(&mut b.as_slice()), Err(Error::Schema(_))));
    }

    #[test]
    fn self_query_ranks_first() {
        let items: Vec<(String, LayerPair)> = (0..8).map(|i| (format!("g{i}"), pair(i * 7))).collect();
        let opts = BuildOptions::default();
        let idx = build_index(items.clone(), &opts).unwrap();
        let hits = query(&idx, &items[5].1, 3, 4, &opts).unwrap();
        assert_eq!(hits.len(), 4);
        assert_eq!(hits[0].image_id, "g5");
        let (signs, stats) = encode_pair(&items[5].1, &opts).unwrap();
        let set = select_channels(&stats, 3).unwrap();
        assert_eq!(hits[0].score, trit_similarity(&signs, &signs, &set).unwrap());
        assert!(hits.windows(2).all(|w| w[0].score >= w[1].score));
        assert_eq!(query(&idx, &items[0].1, 3, 100, &opts).unwrap().len(), 8);
    }

    #[test]
    fn query_shape_mismatch_is_schema_error() {
        let opts = BuildOptions::default();
        let idx = build_index(vec![("a".to_string(), pair(1))], &opts).unwrap();
        let other = pair_layers(lcg_tensor(3, 3, 5, 1, true), lcg_tensor(3, 3, 4, 2, false)).unwrap();
        assert!(matches!(query(&idx, &other, 2, 1, &opts), Err(Error::Schema(_))));
    }

    #[test]
    fn ties_break_by_id() {
        let hits = vec![
            Hit { image_id: "b".to_string(), score: 3i64 },
            Hit { image_id: "a".to_string(), score: 3 },
            Hit { image_id: "c".to_string(), score: 5 },
        ];
        let ids: Vec<String> = rank(hits, 10).into_iter().map(|h| h.image_id).collect();
        assert_eq!(ids, vec!["c", "a", "b"]);
    }

    #[test]
    fn selection_depends_on_query_only() {
        let opts = BuildOptions::default();
        let items: Vec<(String, LayerPair)> = (0..4).map(|i| (format!("g{i}"), pair(i))).collect();
        let idx = build_index(items, &opts).unwrap();
        let (sa, _) = encode_pair(&pair(50), &opts).unwrap();
        let hot_first = ChannelStats::new(vec![9.0, 8.0, 0.0, 0.0]).unwrap();
        let hot_last = ChannelStats::new(vec![0.0, 0.0, 8.0, 9.0]).unwrap();
        let a = idx.search(&sa, &hot_first, 2, 4, ChannelSelection::Query).unwrap();
        let b = idx.search(&sa, &hot_last, 2, 4, ChannelSelection::Query).unwrap();
        for h in &a {
            let e = idx.entries().iter().find(|e| e.image_id == h.image_id).unwrap();
            assert_eq!(h.score, trit_similarity(&sa, &e.signs, &[0, 1]).unwrap());
        }
        for h in &b {
            let e = idx.entries().iter().find(|e| e.image_id == h.image_id).unwrap();
            assert_eq!(h.score, trit_similarity(&sa, &e.signs, &[2, 3]).unwrap());
        }
    }

    #[test]
    fn gallery_side_selection_uses_entry_stats() {
        let opts = BuildOptions::default();
        let items: Vec<(String, LayerPair)> = (0..4).map(|i| (format!("g{i}"), pair(i))).collect();
        let idx = build_index(items, &opts).unwrap();
        let (q, qs) = encode_pair(&pair(9), &opts).unwrap();
        let hits = idx.search(&q, &qs, 2, 4, ChannelSelection::Gallery).unwrap();
        for h in hits {
            let e = idx.entries().iter().find(|e| e.image_id == h.image_id).unwrap();
            let set = select_channels(&e.stats, 2).unwrap();
            assert_eq!(h.score, trit_similarity(&q, &e.signs, &set).unwrap());
        }
    }
}
