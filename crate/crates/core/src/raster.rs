//! Raster domain types shared by the metrics, loss kernels and I/O layers.
//!
//! All rasters are row-major. Multi-channel fields are stored channel-major
//! (`c * H * W + h * W + w`). Every type validates its values at construction
//! and is immutable afterwards.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `C x H x W` field of finite reals: images, disparity maps, class
/// probabilities, self-information maps and conditioning stacks.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelField {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ChannelField {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidDimensions {
                channels,
                height,
                width,
            });
        }
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(channels, height, width, vec![value; channels * height * width])
    }

    /// Builds a field from a closure over `(c, h, w)`.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for h in 0..height {
                for w in 0..width {
                    data.push(f(c, h, w));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, c: usize, h: usize, w: usize) -> f64 {
        self.data[(c * self.height + h) * self.width + w]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    /// Concatenates fields of equal spatial size along the channel axis.
    pub fn concat(fields: &[&ChannelField]) -> Result<Self> {
        let first = fields
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot concatenate zero fields".into()))?;
        let (h, w) = (first.height, first.width);
        let mut data = Vec::new();
        let mut channels = 0;
        for f in fields {
            if (f.height, f.width) != (h, w) {
                return Err(Error::ShapeMismatch {
                    left: first.shape(),
                    right: f.shape(),
                });
            }
            channels += f.channels;
            data.extend_from_slice(&f.data);
        }
        Self::new(channels, h, w, data)
    }

    pub(crate) fn ensure_same_shape(&self, other: &ChannelField) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    pub(crate) fn ensure_in_unit_interval(&self) -> Result<()> {
        check_unit_interval(&self.data)
    }
}

impl From<&SoftMask> for ChannelField {
    fn from(mask: &SoftMask) -> Self {
        ChannelField {
            channels: 1,
            height: mask.height,
            width: mask.width,
            data: mask.data.clone(),
        }
    }
}

fn check_unit_interval(data: &[f64]) -> Result<()> {
    for (index, &value) in data.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite { index, value });
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::OutOfRange {
                index,
                value,
                min: 0.0,
                max: 1.0,
            });
        }
    }
    Ok(())
}

/// Per-pixel flood probability in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl SoftMask {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidDimensions {
                channels: 1,
                height,
                width,
            });
        }
        if data.len() != height * width {
            return Err(Error::LengthMismatch {
                expected: height * width,
                actual: data.len(),
            });
        }
        check_unit_interval(&data)?;
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, h: usize, w: usize) -> f64 {
        self.data[h * self.width + w]
    }

    /// Binary view: `soft >= threshold`.
    pub fn binarize(&self, threshold: f64) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| v >= threshold).collect(),
        }
    }

    pub(crate) fn ensure_same_shape(&self, other: &SoftMask) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                left: (1, self.height, self.width),
                right: (1, other.height, other.width),
            });
        }
        Ok(())
    }
}

impl From<&BinaryMask> for SoftMask {
    fn from(mask: &BinaryMask) -> Self {
        SoftMask {
            height: mask.height,
            width: mask.width,
            data: mask.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidDimensions {
                channels: 1,
                height,
                width,
            });
        }
        if data.len() != height * width {
            return Err(Error::LengthMismatch {
                expected: height * width,
                actual: data.len(),
            });
        }
        Ok(Self { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for h in 0..height {
            for w in 0..width {
                data.push(f(h, w));
            }
        }
        Self::new(height, width, data)
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, h: usize, w: usize) -> bool {
        self.data[h * self.width + w]
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|b| !b).collect(),
        }
    }
}

/// Test-set annotation class of a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum LabelClass {
    /// Higher than about 1.5 m above ground; flooding it is an error.
    Cannot = 0,
    /// Uncertain band; never counted.
    May = 1,
    /// The minimal region a flood must cover.
    Must = 2,
}

impl LabelClass {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(LabelClass::Cannot),
            1 => Some(LabelClass::May),
            2 => Some(LabelClass::Must),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TernaryLabelMap {
    height: usize,
    width: usize,
    data: Vec<LabelClass>,
}

impl TernaryLabelMap {
    pub fn new(height: usize, width: usize, data: Vec<LabelClass>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidDimensions {
                channels: 1,
                height,
                width,
            });
        }
        if data.len() != height * width {
            return Err(Error::LengthMismatch {
                expected: height * width,
                actual: data.len(),
            });
        }
        Ok(Self { height, width, data })
    }

    /// Builds a map from raw codes, rejecting anything outside `{0, 1, 2}`.
    pub fn from_codes(height: usize, width: usize, codes: &[u8]) -> Result<Self> {
        if codes.len() != height * width {
            return Err(Error::LengthMismatch {
                expected: height * width,
                actual: codes.len(),
            });
        }
        let data = codes
            .iter()
            .enumerate()
            .map(|(i, &code)| {
                LabelClass::from_code(code).ok_or(Error::MalformedLabel {
                    value: code,
                    row: i / width,
                    col: i % width,
                    path: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(height, width, data)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> LabelClass) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for h in 0..height {
            for w in 0..width {
                data.push(f(h, w));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[LabelClass] {
        &self.data
    }

    pub fn get(&self, h: usize, w: usize) -> LabelClass {
        self.data[h * self.width + w]
    }

    pub fn count(&self, class: LabelClass) -> usize {
        self.data.iter().filter(|&&c| c == class).count()
    }

    /// Binary mask of the pixels carrying `class`.
    pub fn class_mask(&self, class: LabelClass) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&c| c == class).collect(),
        }
    }

    pub fn codes(&self) -> Vec<u8> {
        self.data.iter().map(|c| c.code()).collect()
    }
}

/// Non-negative weights `λ1..λ10` of the depth, segmentation and mask losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights([f64; 10]);

impl LossWeights {
    pub fn new(weights: [f64; 10]) -> Result<Self> {
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "loss weight λ{} must be finite and non-negative, got {w}",
                    i + 1
                )));
            }
        }
        Ok(Self(weights))
    }

    pub fn zeros() -> Self {
        Self([0.0; 10])
    }

    /// `λk` with `k` counted from 1.
    pub fn lambda(&self, k: usize) -> f64 {
        self.0[k - 1]
    }

    pub fn as_array(&self) -> &[f64; 10] {
        &self.0
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self([1.0; 10])
    }
}
