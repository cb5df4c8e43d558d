//! Sign-quantized descriptors and their popcount similarity.
//!
//! In memory a [`SignVector`] keeps two bitplanes per channel, a nonzero mask
//! and a sign bit, each channel starting on a fresh `u64` word so any subset
//! of channels can be scored independently. On disk the same values use the
//! 2-bit-per-dimension payload of the gallery index:
//!
//! | bits | value |
//! |------|-------|
//! | `00` | 0     |
//! | `01` | +1    |
//! | `11` | -1    |
//! | `10` | reserved |
//!
//! Dimension `j` sits at bit offset `2 * (j % 4)` of byte `j / 4`; the low bit
//! of each pair is the nonzero flag and the high bit the sign.

use crate::descriptor::Descriptor;
use crate::error::{Error, Result};

/// A `{-1, 0, +1}` vector with `K` channels of width `d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignVector {
    channels: usize,
    channel_dim: usize,
    words_per_channel: usize,
    mask: Vec<u64>,
    sign: Vec<u64>,
}

impl SignVector {
    /// Packs trits given as `i8` values in `{-1, 0, 1}`.
    pub fn from_trits(channels: usize, channel_dim: usize, trits: &[i8]) -> Result<Self> {
        if trits.len() != channels * channel_dim {
            return Err(Error::Shape(format!(
                "{channels}x{channel_dim} sign vector needs {} trits, got {}",
                channels * channel_dim,
                trits.len()
            )));
        }
        let mut out = Self::zeros(channels, channel_dim);
        for (idx, &t) in trits.iter().enumerate() {
            let (k, j) = (idx / channel_dim, idx % channel_dim);
            match t {
                0 => {}
                1 | -1 => out.set(k, j, t),
                _ => return Err(Error::Value(format!("trit {t} at {idx} is not in {{-1, 0, 1}}"))),
            }
        }
        Ok(out)
    }

    pub fn zeros(channels: usize, channel_dim: usize) -> Self {
        let words_per_channel = channel_dim.div_ceil(64);
        Self {
            channels,
            channel_dim,
            words_per_channel,
            mask: vec![0; channels * words_per_channel],
            sign: vec![0; channels * words_per_channel],
        }
    }

    fn set(&mut self, k: usize, j: usize, t: i8) {
        let w = k * self.words_per_channel + j / 64;
        let bit = 1u64 << (j % 64);
        self.mask[w] |= bit;
        if t < 0 {
            self.sign[w] |= bit;
        }
    }

    pub fn num_channels(&self) -> usize {
        self.channels
    }

    pub fn channel_dim(&self) -> usize {
        self.channel_dim
    }

    pub fn len(&self) -> usize {
        self.channels * self.channel_dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, idx: usize) -> i8 {
        let (k, j) = (idx / self.channel_dim, idx % self.channel_dim);
        let w = k * self.words_per_channel + j / 64;
        let bit = 1u64 << (j % 64);
        match (self.mask[w] & bit != 0, self.sign[w] & bit != 0) {
            (false, _) => 0,
            (true, false) => 1,
            (true, true) => -1,
        }
    }

    pub fn to_trits(&self) -> Vec<i8> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }

    pub fn nonzero_count(&self) -> u64 {
        self.mask.iter().map(|w| w.count_ones() as u64).sum()
    }

    fn channel_words(&self, k: usize) -> (&[u64], &[u64]) {
        let r = k * self.words_per_channel..(k + 1) * self.words_per_channel;
        (&self.mask[r.clone()], &self.sign[r])
    }

    /// Number of payload bytes for `len` trits.
    pub fn payload_len(len: usize) -> usize {
        len.div_ceil(4)
    }

    /// Encodes to the 2-bit payload, zero-padded to a whole byte.
    pub fn to_payload(&self) -> Vec<u8> {
        let mut out = vec![0u8; Self::payload_len(self.len())];
        for idx in 0..self.len() {
            let code = match self.get(idx) {
                0 => 0b00,
                1 => 0b01,
                _ => 0b11,
            };
            out[idx / 4] |= code << (2 * (idx % 4));
        }
        out
    }

    /// Decodes a 2-bit payload. The reserved pattern and nonzero padding are
    /// rejected so that decoding and re-encoding is byte-exact.
    pub fn from_payload(channels: usize, channel_dim: usize, payload: &[u8]) -> Result<Self> {
        let len = channels * channel_dim;
        if payload.len() != Self::payload_len(len) {
            return Err(Error::Format(format!(
                "trit payload for {len} dimensions must be {} bytes, got {}",
                Self::payload_len(len),
                payload.len()
            )));
        }
        let mut out = Self::zeros(channels, channel_dim);
        for (b, &byte) in payload.iter().enumerate() {
            for slot in 0..4 {
                let idx = b * 4 + slot;
                let code = (byte >> (2 * slot)) & 0b11;
                if idx >= len {
                    if code != 0 {
                        return Err(Error::Format("nonzero padding bits in trit payload".into()));
                    }
                    continue;
                }
                match code {
                    0b00 => {}
                    0b01 => out.set(idx / channel_dim, idx % channel_dim, 1),
                    0b11 => out.set(idx / channel_dim, idx % channel_dim, -1),
                    _ => {
                        return Err(Error::Format(format!(
                            "reserved trit code 0b10 at dimension {idx}"
                        )))
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Elementwise sign of a descriptor, with exact zeros kept as 0.
///
/// The descriptor must have uniform channel width.
pub fn sign_quantize(desc: &Descriptor) -> Result<SignVector> {
    let d = desc
        .channel_dim()
        .ok_or_else(|| Error::Shape("sign quantization needs uniform channel width".into()))?;
    let mut out = SignVector::zeros(desc.num_channels(), d);
    for (idx, &v) in desc.values().iter().enumerate() {
        if v > 0.0 {
            out.set(idx / d, idx % d, 1);
        } else if v < 0.0 {
            out.set(idx / d, idx % d, -1);
        }
    }
    Ok(out)
}

/// Integer dot product of two sign vectors restricted to `channels`:
/// agreements minus disagreements over positions nonzero in both.
pub fn trit_similarity(query: &SignVector, reference: &SignVector, channels: &[usize]) -> Result<i64> {
    if query.channels != reference.channels || query.channel_dim != reference.channel_dim {
        return Err(Error::Shape(format!(
            "sign vectors differ in shape: {}x{} vs {}x{}",
            query.channels, query.channel_dim, reference.channels, reference.channel_dim
        )));
    }
    if let Some(&bad) = channels.iter().find(|&&k| k >= query.channels) {
        return Err(Error::Argument(format!(
            "channel {bad} out of range for {} channels",
            query.channels
        )));
    }
    Ok(trit_similarity_unchecked(query, reference, channels))
}

pub(crate) fn trit_similarity_unchecked(q: &SignVector, r: &SignVector, channels: &[usize]) -> i64 {
    let mut agree = 0u64;
    let mut disagree = 0u64;
    for &k in channels {
        let (qm, qs) = q.channel_words(k);
        let (rm, rs) = r.channel_words(k);
        for w in 0..qm.len() {
            let both = qm[w] & rm[w];
            let differ = qs[w] ^ rs[w];
            agree += (both & !differ).count_ones() as u64;
            disagree += (both & differ).count_ones() as u64;
        }
    }
    agree as i64 - disagree as i64
}
