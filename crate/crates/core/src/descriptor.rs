use crate::error::{Error, Result};

/// A pooled image representation made of channel subvectors laid out
/// contiguously, channel 0 first.
///
/// Descriptors produced by a single pooling step have uniform channel width.
/// Concatenation keeps each part's channel boundaries, so mixed widths are
/// possible after [`Descriptor::concat`].
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    values: Vec<f32>,
    // channel k spans offsets[k]..offsets[k + 1]
    offsets: Vec<usize>,
}

impl Descriptor {
    /// Builds a descriptor of `channels` subvectors of width `channel_dim`.
    pub fn new(channels: usize, channel_dim: usize, values: Vec<f32>) -> Result<Self> {
        if channels == 0 || channel_dim == 0 {
            return Err(Error::Shape(format!(
                "descriptor needs positive channel count and width, got {channels}x{channel_dim}"
            )));
        }
        if values.len() != channels * channel_dim {
            return Err(Error::Shape(format!(
                "{channels} channels of width {channel_dim} need {} values, got {}",
                channels * channel_dim,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Value(format!("non-finite descriptor value at {pos}")));
        }
        Ok(Self {
            values,
            offsets: (0..=channels).map(|k| k * channel_dim).collect(),
        })
    }

    /// The zero-channel descriptor; identity for [`Descriptor::concat`].
    pub fn empty() -> Self {
        Self {
            values: Vec::new(),
            offsets: vec![0],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn num_channels(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Channel width when every channel has the same width.
    pub fn channel_dim(&self) -> Option<usize> {
        let first = self.offsets.get(1)? - self.offsets[0];
        self.offsets
            .windows(2)
            .all(|w| w[1] - w[0] == first)
            .then_some(first)
    }

    pub fn channel(&self, k: usize) -> &[f32] {
        &self.values[self.offsets[k]..self.offsets[k + 1]]
    }

    pub fn channels(&self) -> impl Iterator<Item = &[f32]> + '_ {
        self.offsets.windows(2).map(|w| &self.values[w[0]..w[1]])
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    /// Applies `f` to every element, keeping the channel layout.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
            offsets: self.offsets.clone(),
        }
    }

    pub(crate) fn channels_mut(&mut self) -> impl Iterator<Item = &mut [f32]> + '_ {
        let mut rest: &mut [f32] = &mut self.values;
        self.offsets.windows(2).map(move |w| {
            let (head, tail) = std::mem::take(&mut rest).split_at_mut(w[1] - w[0]);
            rest = tail;
            head
        })
    }

    /// Appends `other` after `self`, keeping both channel layouts.
    pub fn concat(&self, other: &Descriptor) -> Descriptor {
        let base = self.values.len();
        let mut offsets = self.offsets.clone();
        offsets.extend(other.offsets[1..].iter().map(|o| o + base));
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Descriptor { values, offsets }
    }

    /// Reshapes a uniform descriptor to its `channel_dim x channels` matrix,
    /// with entry `(j, k)` = element `j` of channel `k`.
    pub fn as_matrix(&self) -> Option<Vec<Vec<f32>>> {
        let d = self.channel_dim()?;
        Some(
            (0..d)
                .map(|j| self.channels().map(|c| c[j]).collect())
                .collect(),
        )
    }
}

/// Concatenates two descriptors, e.g. the pyramids of two layers.
pub fn concat_layers(a: &Descriptor, b: &Descriptor) -> Descriptor {
    a.concat(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let d = Descriptor::new(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(d.channel(1), &[4., 5., 6.]);
        assert_eq!(d.channel_dim(), Some(3));
        assert_eq!(d.as_matrix().unwrap(), vec![vec![1., 4.], vec![2., 5.], vec![3., 6.]]);
        assert!(Descriptor::new(2, 3, vec![0.0; 5]).is_err());
        assert!(Descriptor::new(1, 1, vec![f32::NAN]).is_err());
    }

    #[test]
    fn concat_keeps_boundaries() {
        let a = Descriptor::new(1, 2, vec![1., 2.]).unwrap();
        let b = Descriptor::new(2, 1, vec![3., 4.]).unwrap();
        let ab = concat_layers(&a, &b);
        assert_eq!(ab.num_channels(), 3);
        assert_eq!(ab.channel(0), &[1., 2.]);
        assert_eq!(ab.channel(2), &[4.]);
        assert_eq!(ab.channel_dim(), None);
        assert_ne!(concat_layers(&a, &b), concat_layers(&b, &a));
    }

    #[test]
    fn empty_is_identity() {
        let a = Descriptor::new(2, 2, vec![1., 2., 3., 4.]).unwrap();
        assert_eq!(concat_layers(&a, &Descriptor::empty()), a);
        assert_eq!(concat_layers(&Descriptor::empty(), &a), a);
        assert!(Descriptor::empty().is_empty());
    }

    #[test]
    fn concat_dimensions_add() {
        let a = Descriptor::new(21, 512, vec![0.0; 21 * 512]).unwrap();
        assert_eq!(concat_layers(&a, &a).len(), 21504);
    }

    #[test]
    fn channels_mut_visits_each_channel() {
        let mut d = Descriptor::new(3, 2, vec![0.0; 6]).unwrap();
        for (k, c) in d.channels_mut().enumerate() {
            c.fill(k as f32);
        }
        assert_eq!(d.values(), &[0., 0., 1., 1., 2., 2.]);
    }
}
