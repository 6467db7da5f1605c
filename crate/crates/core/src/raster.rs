//! Frames and the per-pixel primitives: grayscale conversion, the privacy
//! box blur, and frame differencing.
//!
//! Frames are immutable after construction and every operation here is a
//! pure function, so disjoint frames can be processed in parallel freely.

use thiserror::Error;

pub const DEFAULT_WIDTH: u32 = 640;
pub const DEFAULT_HEIGHT: u32 = 400;
pub const DEFAULT_FPS: f64 = 25.0;
pub const DEFAULT_BLUR_RADIUS: u32 = 6;
pub const DEFAULT_BLUR_PASSES: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("frame dimensions must be positive, got {0}x{1}")]
    EmptyDimensions(u32, u32),
    #[error("channels must be 1 or 3, got {0}")]
    InvalidChannels(u8),
    #[error("data length {actual} does not match {width}x{height}x{channels}")]
    DataLength { actual: usize, width: u32, height: u32, channels: u8 },
    #[error("expected a {expected}-channel frame, got {actual} channels")]
    ChannelMismatch { expected: u8, actual: u8 },
    #[error("frame shapes differ: {0}x{1}x{2} vs {3}x{4}x{5}")]
    ShapeMismatch(u32, u32, u8, u32, u32, u8),
    #[error("blur radius {radius} must be smaller than min(width, height) = {limit}")]
    BlurRadius { radius: u32, limit: u32 },
    #[error("blur passes must be at least 1")]
    BlurPasses,
}

/// Stream-level metadata. The camera default is 640x400 at 25 fps.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VideoMeta {
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub frame_count: u64,
}

impl Default for VideoMeta {
    fn default() -> Self {
        Self { fps: DEFAULT_FPS, width: DEFAULT_WIDTH, height: DEFAULT_HEIGHT, frame_count: 0 }
    }
}

/// A single 8-bit raster, one or three interleaved channels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
    index: u64,
}

impl Frame {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>, index: u64) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyDimensions(width, height));
        }
        if channels != 1 && channels != 3 {
            return Err(RasterError::InvalidChannels(channels));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(RasterError::DataLength { actual: data.len(), width, height, channels });
        }
        Ok(Self { width, height, channels, data, index })
    }

    /// Constant-valued frame.
    pub fn filled(width: u32, height: u32, channels: u8, value: u8, index: u64) -> Result<Self, RasterError> {
        let len = width as usize * height as usize * channels as usize;
        Self::new(width, height, channels, vec![value; len], index)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn with_index(mut self, index: u64) -> Self {
        self.index = index;
        self
    }

    /// Timestamp in seconds, derived as `index / fps`.
    pub fn timestamp(&self, fps: f64) -> f64 {
        self.index as f64 / fps
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    fn require_same_shape(&self, other: &Frame) -> Result<(), RasterError> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(RasterError::ShapeMismatch(
                self.width, self.height, self.channels, other.width, other.height, other.channels,
            ))
        }
    }
}

/// Rec.601 luma: `round(0.299 R + 0.587 G + 0.114 B)` per pixel.
pub fn to_grayscale(frame: &Frame) -> Result<Frame, RasterError> {
    if frame.channels != 3 {
        return Err(RasterError::ChannelMismatch { expected: 3, actual: frame.channels });
    }
    let mut out = Vec::with_capacity(frame.pixel_count());
    for px in frame.data.chunks_exact(3) {
        let luma = 0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2]);
        out.push(luma.round().clamp(0.0, 255.0) as u8);
    }
    Frame::new(frame.width, frame.height, 1, out, frame.index)
}

/// Separable mean filter over a `(2 radius + 1)^2` window.
///
/// Each pass runs the 1-D mean horizontally and then vertically, per channel.
/// Borders replicate the edge sample and each 1-D division rounds half up,
/// so results are bit-reproducible.
pub fn box_blur(frame: &Frame, radius: u32, passes: u32) -> Result<Frame, RasterError> {
    // A pass along an extent-1 axis is the identity, so only axes with more
    // than one sample constrain the radius.
    let limit = [frame.width, frame.height].into_iter().filter(|&d| d > 1).min().unwrap_or(u32::MAX);
    if radius >= limit {
        return Err(RasterError::BlurRadius { radius, limit });
    }
    if passes == 0 {
        return Err(RasterError::BlurPasses);
    }
    if radius == 0 {
        return Ok(frame.clone());
    }
    let w = frame.width as usize;
    let h = frame.height as usize;
    let ch = frame.channels as usize;
    let r = radius as usize;

    let mut plane = vec![0u8; w * h];
    let mut tmp = vec![0u8; w * h];
    let mut out = frame.data.clone();
    for c in 0..ch {
        for (i, v) in plane.iter_mut().enumerate() {
            *v = out[i * ch + c];
        }
        for _ in 0..passes {
            blur_rows(&plane, &mut tmp, w, h, r);
            blur_cols(&tmp, &mut plane, w, h, r);
        }
        for (i, v) in plane.iter().enumerate() {
            out[i * ch + c] = *v;
        }
    }
    Frame::new(frame.width, frame.height, frame.channels, out, frame.index)
}

/// 1-D clamped-window mean along rows. Window sums come from a prefix sum
/// plus explicit replication counts for the clamped ends.
fn blur_rows(src: &[u8], dst: &mut [u8], w: usize, h: usize, r: usize) {
    let window = 2 * r as u32 + 1;
    let mut prefix = vec![0u32; w + 1];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for (i, &v) in row.iter().enumerate() {
            prefix[i + 1] = prefix[i] + u32::from(v);
        }
        let first = u32::from(row[0]);
        let last = u32::from(row[w - 1]);
        for i in 0..w {
            let lo = i.saturating_sub(r);
            let hi = (i + r).min(w - 1);
            let mut sum = prefix[hi + 1] - prefix[lo];
            sum += (r - (i - lo)) as u32 * first;
            sum += (r - (hi - i)) as u32 * last;
            dst[y * w + i] = ((sum + r as u32) / window) as u8;
        }
    }
}

fn blur_cols(src: &[u8], dst: &mut [u8], w: usize, h: usize, r: usize) {
    let window = 2 * r as u32 + 1;
    let mut prefix = vec![0u32; h + 1];
    for x in 0..w {
        for y in 0..h {
            prefix[y + 1] = prefix[y] + u32::from(src[y * w + x]);
        }
        let first = u32::from(src[x]);
        let last = u32::from(src[(h - 1) * w + x]);
        for y in 0..h {
            let lo = y.saturating_sub(r);
            let hi = (y + r).min(h - 1);
            let mut sum = prefix[hi + 1] - prefix[lo];
            sum += (r - (y - lo)) as u32 * first;
            sum += (r - (hi - y)) as u32 * last;
            dst[y * w + x] = ((sum + r as u32) / window) as u8;
        }
    }
}

/// Per-sample absolute difference.
pub fn abs_diff(current: &Frame, previous: &Frame) -> Result<Frame, RasterError> {
    current.require_same_shape(previous)?;
    let data = current
        .data
        .iter()
        .zip(previous.data.iter())
        .map(|(&a, &b)| a.abs_diff(b))
        .collect();
    Frame::new(current.width, current.height, current.channels, data, current.index)
}

/// Absolute difference with magnitudes below `threshold` zeroed out.
pub fn motion_map(current: &Frame, previous: &Frame, threshold: u8) -> Result<Frame, RasterError> {
    current.require_same_shape(previous)?;
    let data = current
        .data
        .iter()
        .zip(previous.data.iter())
        .map(|(&a, &b)| {
            let d = a.abs_diff(b);
            if d >= threshold {
                d
            } else {
                0
            }
        })
        .collect();
    Frame::new(current.width, current.height, current.channels, data, current.index)
}

/// Mean absolute difference over all samples; the general-motion metric.
pub fn mean_abs_diff(current: &Frame, previous: &Frame) -> Result<f64, RasterError> {
    current.require_same_shape(previous)?;
    let sum: u64 = current
        .data
        .iter()
        .zip(previous.data.iter())
        .map(|(&a, &b)| u64::from(a.abs_diff(b)))
        .sum();
    Ok(sum as f64 / current.data.len() as f64)
}
