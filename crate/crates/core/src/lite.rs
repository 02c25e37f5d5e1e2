//! Appearance descriptors pooled straight from a detector feature map.
//!
//! A detection box is mapped onto the feature-map grid (outward rounding,
//! clamped to the map), the covered cells are averaged per channel, and the
//! resulting `C`-vector is L2-normalized. No network runs here: the cost is
//! proportional to the number of cells covered.
//!
//! The reference layer is a stride-2, 48-channel activation, but nothing in
//! this module depends on those numbers.

use thiserror::Error;

use crate::types::{BBox, Descriptor, Detection};

/// Channel count of the reference appearance layer.
pub const REFERENCE_CHANNELS: usize = 48;
/// Pixels per cell of the reference appearance layer.
pub const REFERENCE_STRIDE: u32 = 2;

/// Magic prefix of a serialized feature map.
pub const FEATURE_MAP_MAGIC: &[u8; 8] = b"LITEFM01";
/// Magic plus five little-endian `u32` header fields.
pub const FEATURE_MAP_HEADER_LEN: usize = 8 + 5 * 4;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureMapError {
    #[error("bad magic bytes (expected LITEFM01)")]
    BadMagic,
    #[error("feature map has a zero dimension (C={channels}, H={height}, W={width}, stride={stride})")]
    ZeroDimension {
        channels: usize,
        height: usize,
        width: usize,
        stride: u32,
    },
    #[error("size mismatch: header implies {expected} bytes, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("data length {found} does not match C*H*W = {expected}")]
    DataLength { expected: usize, found: usize },
}

/// Dense `C × H' × W'` activations, channel-outermost row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    frame: u32,
    channels: usize,
    height: usize,
    width: usize,
    stride: u32,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(
        frame: u32,
        channels: usize,
        height: usize,
        width: usize,
        stride: u32,
        data: Vec<f32>,
    ) -> Result<Self, FeatureMapError> {
        if channels == 0 || height == 0 || width == 0 || stride == 0 {
            return Err(FeatureMapError::ZeroDimension {
                channels,
                height,
                width,
                stride,
            });
        }
        let expected = channels
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .unwrap_or(usize::MAX);
        if data.len() != expected {
            return Err(FeatureMapError::DataLength {
                expected,
                found: data.len(),
            });
        }
        Ok(Self {
            frame,
            channels,
            height,
            width,
            stride,
            data,
        })
    }

    /// Map filled by `f(channel, row, col)`.
    pub fn from_fn(
        frame: u32,
        channels: usize,
        height: usize,
        width: usize,
        stride: u32,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self, FeatureMapError> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(frame, channels, height, width, stride, data)
    }

    pub fn frame(&self) -> u32 {
        self.frame
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
    pub fn stride(&self) -> u32 {
        self.stride
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn scaled(&self, k: f32) -> Self {
        Self {
            data: self.data.iter().map(|v| v * k).collect(),
            ..self.clone()
        }
    }

    /// Serializes to the `LITEFM01` layout: magic, then `frame, C, H', W',
    /// stride` as little-endian `u32`, then `C·H'·W'` little-endian `f32`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FEATURE_MAP_HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(FEATURE_MAP_MAGIC);
        for v in [
            self.frame,
            self.channels as u32,
            self.height as u32,
            self.width as u32,
            self.stride,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FeatureMapError> {
        if bytes.len() < 8 || &bytes[..8] != FEATURE_MAP_MAGIC {
            return Err(FeatureMapError::BadMagic);
        }
        if bytes.len() < FEATURE_MAP_HEADER_LEN {
            return Err(FeatureMapError::SizeMismatch {
                expected: FEATURE_MAP_HEADER_LEN,
                found: bytes.len(),
            });
        }
        let field = |i: usize| {
            let o = 8 + 4 * i;
            u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4-byte slice"))
        };
        let (frame, channels, height, width, stride) = (
            field(0),
            field(1) as usize,
            field(2) as usize,
            field(3) as usize,
            field(4),
        );
        if channels == 0 || height == 0 || width == 0 || stride == 0 {
            return Err(FeatureMapError::ZeroDimension {
                channels,
                height,
                width,
                stride,
            });
        }
        let expected = channels
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .and_then(|v| v.checked_mul(4))
            .and_then(|v| v.checked_add(FEATURE_MAP_HEADER_LEN))
            .unwrap_or(usize::MAX);
        if bytes.len() != expected {
            return Err(FeatureMapError::SizeMismatch {
                expected,
                found: bytes.len(),
            });
        }
        let data = bytes[FEATURE_MAP_HEADER_LEN..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4-byte chunk")))
            .collect();
        Self::new(frame, channels, height, width, stride, data)
    }
}

/// Cell-index rectangle on a feature map; `right` and `bottom` are exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropRegion {
    pub left: usize,
    pub top: usize,
    pub right: usize,
    pub bottom: usize,
}

impl CropRegion {
    pub fn width(&self) -> usize {
        self.right - self.left
    }
    pub fn height(&self) -> usize {
        self.bottom - self.top
    }
    pub fn cells(&self) -> usize {
        self.width() * self.height()
    }
    pub fn is_empty(&self) -> bool {
        self.left >= self.right || self.top >= self.bottom
    }
}

/// Clamps an outward-rounded `[lo, hi)` cell span into `[0, limit)`,
/// snapping to the nearest edge cell when the span falls outside.
fn clamp_span(lo: f64, hi: f64, limit: usize) -> (usize, usize) {
    let limit_f = limit as f64;
    let lo = lo.clamp(0.0, limit_f) as usize;
    let hi = hi.clamp(0.0, limit_f) as usize;
    if lo < hi {
        (lo, hi)
    } else if hi == 0 {
        (0, 1)
    } else {
        (limit - 1, limit)
    }
}

/// Maps a pixel box onto the feature-map grid. Left/top round down and
/// right/bottom round up, so the box is never under-covered. The region is
/// always non-empty for a valid box: a box lying entirely off the map snaps
/// to the nearest border cell.
pub fn map_box(bbox: &BBox, fm: &FeatureMap) -> CropRegion {
    let s = f64::from(fm.stride);
    let (left, right) = clamp_span((bbox.x / s).floor(), (bbox.right() / s).ceil(), fm.width);
    let (top, bottom) = clamp_span((bbox.y / s).floor(), (bbox.bottom() / s).ceil(), fm.height);
    CropRegion {
        left,
        top,
        right,
        bottom,
    }
}

/// Per-channel spatial mean over `region`, L2-normalized.
///
/// # Panics
/// If `region` is empty or extends past the map; [`map_box`] never produces such a region.
pub fn extract(fm: &FeatureMap, region: CropRegion) -> Descriptor {
    assert!(
        !region.is_empty() && region.right <= fm.width && region.bottom <= fm.height,
        "crop region {region:?} outside {}x{} map",
        fm.width,
        fm.height
    );
    let plane = fm.height * fm.width;
    let n = region.cells() as f64;
    let pooled = (0..fm.channels)
        .map(|c| {
            let base = c * plane;
            let sum: f64 = (region.top..region.bottom)
                .map(|y| {
                    let row = base + y * fm.width;
                    fm.data[row + region.left..row + region.right]
                        .iter()
                        .map(|&v| f64::from(v))
                        .sum::<f64>()
                })
                .sum();
            sum / n
        })
        .collect();
    Descriptor::normalized(pooled)
}

/// Descriptor for one box; invalid boxes yield the degenerate descriptor.
pub fn extract_box(fm: &FeatureMap, bbox: &BBox) -> Descriptor {
    if !bbox.is_valid() {
        return Descriptor::degenerate(fm.channels);
    }
    extract(fm, map_box(bbox, fm))
}

/// Descriptors for a batch of detections, in input order.
pub fn extract_batch(fm: &FeatureMap, detections: &[Detection]) -> Vec<Descriptor> {
    detections.iter().map(|d| extract_box(fm, &d.bbox)).collect()
}

/// Attaches freshly pooled descriptors to every detection in place.
pub fn attach_descriptors(fm: &FeatureMap, detections: &mut [Detection]) {
    for d in detections.iter_mut() {
        d.descriptor = Some(extract_box(fm, &d.bbox));
    }
}
