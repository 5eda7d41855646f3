//! Dense CHW feature tensors and the ranking-map conditioning operator.

use crate::error::{Error, Result};
use crate::map::GrayscaleMap;

/// channels x height x width grid of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl FeatureTensor {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != channels * height * width {
            return Err(Error::Dimension(format!(
                "expected {} values for a {channels}x{height}x{width} tensor, got {}",
                channels * height * width,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("tensor values must be finite".into()));
        }
        Ok(Self {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            values: vec![0.0; channels * height * width],
        }
    }

    /// Single-channel tensor carrying a map's values unchanged.
    pub fn from_map(map: &GrayscaleMap) -> Self {
        Self {
            channels: 1,
            height: map.height(),
            width: map.width(),
            values: map.values().to_vec(),
        }
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

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Contiguous view of one channel plane.
    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.height * self.width;
        &self.values[c * plane..(c + 1) * plane]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.values[(c * self.height + y) * self.width + x]
    }

    /// Stacks `self` and `other` along the channel axis.
    pub fn concat_channels(&self, other: &FeatureTensor) -> Result<FeatureTensor> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::Dimension(format!(
                "concat spatial mismatch: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        let mut values = Vec::with_capacity(self.values.len() + other.values.len());
        values.extend_from_slice(&self.values);
        values.extend_from_slice(&other.values);
        Ok(FeatureTensor {
            channels: self.channels + other.channels,
            height: self.height,
            width: self.width,
            values,
        })
    }
}

/// Nearest-neighbor resize of a map to a target grid. Preserves the
/// piecewise-constant plateaus of ranking maps.
pub fn resize_nearest(map: &GrayscaleMap, width: usize, height: usize) -> GrayscaleMap {
    if map.width() == width && map.height() == height {
        return map.clone();
    }
    let mut values = Vec::with_capacity(width * height);
    for y in 0..height {
        // Sample source pixel whose center is nearest to the target center.
        let sy = ((y as f64 + 0.5) * map.height() as f64 / height as f64).floor() as usize;
        let sy = sy.min(map.height() - 1);
        for x in 0..width {
            let sx = ((x as f64 + 0.5) * map.width() as f64 / width as f64).floor() as usize;
            let sx = sx.min(map.width() - 1);
            values.push(map.get(sx, sy));
        }
    }
    GrayscaleMap::new(width, height, values).expect("resize of a valid map cannot fail")
}

/// Conditioning operator: position-wise product of every feature channel with
/// the ranking map, plus the ranking map itself appended as one extra channel.
///
/// The ranking map must already match the feature grid (resize with
/// [`resize_nearest`] first).
pub fn pointwise_product_concat(
    rank_map: &GrayscaleMap,
    features: &FeatureTensor,
) -> Result<FeatureTensor> {
    if rank_map.width() != features.width() || rank_map.height() != features.height() {
        return Err(Error::Dimension(format!(
            "rank map {}x{} does not match feature grid {}x{}",
            rank_map.width(),
            rank_map.height(),
            features.width(),
            features.height()
        )));
    }
    let plane = features.width() * features.height();
    let mut values = Vec::with_capacity((features.channels() + 1) * plane);
    for c in 0..features.channels() {
        let ch = features.channel(c);
        for (v, r) in ch.iter().zip(rank_map.values()) {
            values.push(v * r);
        }
    }
    values.extend_from_slice(rank_map.values());
    FeatureTensor::new(features.channels() + 1, features.height(), features.width(), values)
}
