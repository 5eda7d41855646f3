//! Grayscale maps, fixation maps, bounding boxes, frames, and clips.
//!
//! A [`GrayscaleMap`] is the shared carrier for saliency maps, fixation maps
//! and ranking maps: a row-major grid of finite, non-negative reals. Maps are
//! immutable after construction and cheap to clone.

use crate::error::{Error, Result};

/// W x H grid of non-negative reals, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayscaleMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl GrayscaleMap {
    /// Builds a map from row-major values, validating the invariants:
    /// positive dimensions, `width * height` values, all finite and >= 0.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "map dimensions must be positive, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::Dimension(format!(
                "expected {} values for a {width}x{height} map, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain(format!(
                "map values must be finite and non-negative, found {v}"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// All-zero map.
    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0.0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at column `x`, row `y`.
    pub fn get(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.values[y * self.width + x]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    /// Checks that `other` has the same dimensions.
    pub fn same_shape(&self, other: &GrayscaleMap) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Dimension(format!(
                "map shapes differ: {}x{} vs {}x{}",
                self.width, other.width, self.height, other.height
            )));
        }
        Ok(())
    }

    /// Applies `f` to every value, revalidating the result.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<GrayscaleMap> {
        GrayscaleMap::new(
            self.width,
            self.height,
            self.values.iter().map(|v| f(*v)).collect(),
        )
    }
}

/// Binary gaze-presence map; every value is 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FixationMap {
    base: GrayscaleMap,
}

impl FixationMap {
    /// Wraps a map whose values are all exactly 0 or 1.
    pub fn new(base: GrayscaleMap) -> Result<Self> {
        if base.values().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Domain(
                "fixation map values must be exactly 0 or 1".into(),
            ));
        }
        Ok(Self { base })
    }

    /// Builds a binary map from fixation points given as `(x, y)` pairs.
    /// Coinciding points mark the same pixel once.
    pub fn from_points(width: usize, height: usize, points: &[(usize, usize)]) -> Result<Self> {
        let mut values = vec![0.0; width * height];
        for &(x, y) in points {
            if x >= width || y >= height {
                return Err(Error::Dimension(format!(
                    "fixation ({x},{y}) outside {width}x{height} map"
                )));
            }
            values[y * width + x] = 1.0;
        }
        Ok(Self {
            base: GrayscaleMap::new(width, height, values)?,
        })
    }

    /// Treats any strictly positive pixel of `map` as a fixation.
    pub fn from_nonzero(map: &GrayscaleMap) -> Result<Self> {
        Ok(Self {
            base: map.map_values(|v| if v > 0.0 { 1.0 } else { 0.0 })?,
        })
    }

    pub fn base(&self) -> &GrayscaleMap {
        &self.base
    }

    pub fn width(&self) -> usize {
        self.base.width()
    }

    pub fn height(&self) -> usize {
        self.base.height()
    }

    pub fn is_fixated(&self, x: usize, y: usize) -> bool {
        self.base.get(x, y) > 0.0
    }

    /// Number of fixated pixels.
    pub fn count(&self) -> usize {
        self.base.values().iter().filter(|&&v| v > 0.0).count()
    }
}

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(into = "[u32; 4]", try_from = "[u32; 4]")]
pub struct BoundingBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BoundingBox {
    /// Builds a box, requiring positive area.
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Result<Self> {
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::Dimension(format!(
                "degenerate box [{x0},{x1})x[{y0},{y1})"
            )));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    /// Clips a possibly out-of-range rectangle to a `width` x `height` frame.
    /// Returns `None` when nothing with positive area remains.
    pub fn clipped(x0: i64, y0: i64, x1: i64, y1: i64, width: usize, height: usize) -> Option<Self> {
        let cx0 = x0.clamp(0, width as i64) as u32;
        let cy0 = y0.clamp(0, height as i64) as u32;
        let cx1 = x1.clamp(0, width as i64) as u32;
        let cy1 = y1.clamp(0, height as i64) as u32;
        BoundingBox::new(cx0, cy0, cx1, cy1).ok()
    }

    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    /// Pixel area `|b|`.
    pub fn area(&self) -> u64 {
        u64::from(self.width()) * u64::from(self.height())
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    /// Checks the box fits inside a `width` x `height` frame.
    pub fn check_within(&self, width: usize, height: usize) -> Result<()> {
        if self.x1 as usize > width || self.y1 as usize > height {
            return Err(Error::Dimension(format!(
                "box [{},{})x[{},{}) outside {width}x{height} frame",
                self.x0, self.x1, self.y0, self.y1
            )));
        }
        Ok(())
    }

    /// Intersection-over-union with another box.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let ix0 = self.x0.max(other.x0);
        let iy0 = self.y0.max(other.y0);
        let ix1 = self.x1.min(other.x1);
        let iy1 = self.y1.min(other.y1);
        if ix0 >= ix1 || iy0 >= iy1 {
            return 0.0;
        }
        let inter = u64::from(ix1 - ix0) * u64::from(iy1 - iy0);
        let union = self.area() + other.area() - inter;
        inter as f64 / union as f64
    }
}

impl From<BoundingBox> for [u32; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

impl TryFrom<[u32; 4]> for BoundingBox {
    type Error = String;

    fn try_from(v: [u32; 4]) -> std::result::Result<Self, String> {
        BoundingBox::new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())
    }
}

/// One RGB frame of a clip, channel values in `[0, 1]`, layout CHW.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    /// 3 * height * width values: channel-major.
    rgb: Vec<f64>,
    pub index: usize,
}

impl Frame {
    pub fn new(width: usize, height: usize, rgb: Vec<f64>, index: usize) -> Result<Self> {
        if rgb.len() != 3 * width * height {
            return Err(Error::Dimension(format!(
                "expected {} rgb values for {width}x{height}, got {}",
                3 * width * height,
                rgb.len()
            )));
        }
        if rgb.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("frame values must be finite".into()));
        }
        Ok(Self {
            width,
            height,
            rgb,
            index,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Channel-major RGB values.
    pub fn rgb(&self) -> &[f64] {
        &self.rgb
    }
}

/// A clip: frames with per-frame fixations, saliency ground truth, and
/// tagged bounding-box annotations.
#[derive(Debug, Clone)]
pub struct VideoClip {
    pub id: String,
    pub frames: Vec<Frame>,
    pub fixations: Vec<FixationMap>,
    pub saliency: Vec<GrayscaleMap>,
    /// Per-frame `(tag, box)` lists; may be empty when annotations are absent.
    pub annotations: Vec<Vec<(String, BoundingBox)>>,
}

impl VideoClip {
    /// Validates the per-frame list lengths and spatial dimensions.
    pub fn validate(&self) -> Result<()> {
        let n = self.frames.len();
        if n == 0 {
            return Err(Error::EmptyInput(format!("clip {} has no frames", self.id)));
        }
        if self.fixations.len() != n || self.saliency.len() != n || self.annotations.len() != n {
            return Err(Error::IncompleteInput(format!(
                "clip {}: frames={n}, fixations={}, saliency={}, annotations={}",
                self.id,
                self.fixations.len(),
                self.saliency.len(),
                self.annotations.len()
            )));
        }
        let (w, h) = (self.frames[0].width(), self.frames[0].height());
        for f in &self.frames {
            if f.width() != w || f.height() != h {
                return Err(Error::Dimension(format!(
                    "clip {}: frame {} is {}x{}, expected {w}x{h}",
                    self.id,
                    f.index,
                    f.width(),
                    f.height()
                )));
            }
        }
        for m in &self.fixations {
            if m.width() != w || m.height() != h {
                return Err(Error::Dimension(format!(
                    "clip {}: fixation map size mismatch",
                    self.id
                )));
            }
        }
        for m in &self.saliency {
            if m.width() != w || m.height() != h {
                return Err(Error::Dimension(format!(
                    "clip {}: saliency map size mismatch",
                    self.id
                )));
            }
        }
        for per_frame in &self.annotations {
            for (tag, b) in per_frame {
                if tag.is_empty() {
                    return Err(Error::IncompleteInput(format!(
                        "clip {}: empty object tag",
                        self.id
                    )));
                }
                b.check_within(w, h)?;
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Index of the middle frame, used for clip-level ranking and grounding.
    pub fn middle_frame(&self) -> usize {
        self.frames.len() / 2
    }
}

/// Number of fixated pixels inside `bbox`.
pub fn count_fixations_in_box(bbox: &BoundingBox, fix: &FixationMap) -> Result<u64> {
    bbox.check_within(fix.width(), fix.height())?;
    let mut count = 0u64;
    for y in bbox.y0..bbox.y1 {
        for x in bbox.x0..bbox.x1 {
            if fix.is_fixated(x as usize, y as usize) {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Scales a map so its maximum becomes 255; an all-zero map stays all-zero.
pub fn minmax_scale_to_255(map: &GrayscaleMap) -> GrayscaleMap {
    let max = map.max_value();
    if max <= 0.0 {
        return map.clone();
    }
    map.map_values(|v| v * 255.0 / max)
        .expect("scaling a valid map cannot fail")
}
