//! Cross-layer pooled image descriptors.
//!
//! Two convolutional layers with the same spatial layout are combined by
//! using every feature map of the upper ("guide") layer as a weighting map
//! for sum-pooling the local features of the lower layer. The result is a
//! descriptor of `D_local * D_guide` values grouped into one channel per
//! guide feature map.
//!
//! The crate covers:
//! - [`tensor`]: npy-backed activation tensors and layer pairing,
//! - [`pooling`]: indicator-map and cross-layer pooling,
//! - [`postprocess`]: PCA, per-channel l2 and power normalization,
//! - [`trits`] and [`retrieval`]: sign-quantized descriptors, top-k channel
//!   selection and a persistent gallery index,
//! - [`baseline`]: spatial-pyramid max / sum-sqrt pooling of one layer,
//! - [`kernel`]: precomputed linear kernels and a kernel ridge classifier.

pub mod baseline;
pub mod descriptor;
pub mod error;
pub mod kernel;
pub mod npy;
pub mod pooling;
pub mod postprocess;
pub mod retrieval;
pub mod selftest;
pub mod synth;
pub mod tensor;
pub mod trits;

pub use baseline::{spm_pool, SpmConfig, SpmMethod};
pub use descriptor::{concat_layers, Descriptor};
pub use error::{Error, Result};
pub use kernel::{gram, KernelMatrix, KernelRidge};
pub use pooling::{cross_layer_pool, cross_layer_pool_oracle, max_channel_pool, pool_with_indicators, IndicatorMaps};
pub use postprocess::{
    normalize_channels, power_normalize, standard_pipeline, ChannelPooling, PcaModel, PipelineOptions,
};
pub use retrieval::{
    build_index, channel_stats, query, select_channels, BuildOptions, ChannelStats, GalleryIndex, Hit,
};
pub use tensor::{load_tensor, pair_layers, save_tensor, FeatureTensor, LayerPair};
pub use trits::{sign_quantize, trit_similarity, SignVector};
