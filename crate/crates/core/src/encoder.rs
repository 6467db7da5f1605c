//! Temporal channel encoding: packs the current frame's grayscale, the
//! pixel-change map against the previous frame, and a bitmap of the previous
//! frame's boxes into the red, green and blue channels of one image.
//!
//! During training the bitmap goes through three stochastic gates so the
//! downstream model cannot over-rely on it: only half of the samples get a
//! bitmap at all, 20% of those are discarded completely (new objects,
//! missed detections), and 60% of surviving boxes are translated by up to
//! `jitter_max` pixels per axis. At inference time the bitmap is rendered
//! verbatim from confidence-filtered predictions with no augmentation.
//!
//! Randomness comes from an explicit per-frame generator (see
//! [`crate::rng::frame_rng`]), so frames of one video can be encoded in
//! parallel and in any order with identical results.

use crate::geometry::{OrientedBox, Point};
use crate::raster::{motion_map, to_grayscale, Frame, RasterError};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

/// Value painted into the blue channel inside box areas. Any nonzero value
/// works; this one is the toolkit-wide constant.
pub const BITMAP_MARK: u8 = 32;

/// Default threshold for the green pixel-change channel, chosen to suppress
/// sensor noise on 8-bit video.
pub const DEFAULT_MOTION_THRESHOLD: u8 = 15;

/// Default confidence floor for prediction-sourced bitmaps.
pub const DEFAULT_CONFIDENCE_FLOOR: f64 = 0.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncoderError {
    #[error("probability {name} = {value} is outside [0, 1]")]
    BadProbability { name: &'static str, value: f64 },
    #[error("jitter_max must be finite and non-negative, got {0}")]
    BadJitterMax(f64),
    #[error("predictions need one confidence per box: {boxes} boxes, {confidences} confidences")]
    ConfidenceCount { boxes: usize, confidences: usize },
    #[error("confidence {0} is outside [0, 1]")]
    BadConfidence(f64),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Gate probabilities and jitter range for training-time bitmap augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationPolicy {
    /// Probability that a training sample carries a bitmap at all.
    pub p_use_bitmap: f64,
    /// Probability that a carried bitmap is discarded completely.
    pub p_discard_all: f64,
    /// Per-box probability of a random translation.
    pub p_jitter_box: f64,
    /// Jitter translation components are uniform on `[-jitter_max, jitter_max]`.
    pub jitter_max: f64,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        Self { p_use_bitmap: 0.5, p_discard_all: 0.2, p_jitter_box: 0.6, jitter_max: 10.0 }
    }
}

impl AugmentationPolicy {
    pub fn validate(&self) -> Result<(), EncoderError> {
        for (name, value) in [
            ("p_use_bitmap", self.p_use_bitmap),
            ("p_discard_all", self.p_discard_all),
            ("p_jitter_box", self.p_jitter_box),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(EncoderError::BadProbability { name, value });
            }
        }
        if !self.jitter_max.is_finite() || self.jitter_max < 0.0 {
            return Err(EncoderError::BadJitterMax(self.jitter_max));
        }
        Ok(())
    }
}

/// Where the previous frame's boxes come from: ground truth while training,
/// detector predictions at inference time.
#[derive(Debug, Clone, PartialEq)]
pub enum BoxSource {
    GroundTruth(Vec<OrientedBox>),
    Predictions {
        boxes: Vec<OrientedBox>,
        confidences: Vec<f64>,
        confidence_floor: f64,
    },
}

impl BoxSource {
    pub fn predictions(
        boxes: Vec<OrientedBox>,
        confidences: Vec<f64>,
        confidence_floor: f64,
    ) -> Result<Self, EncoderError> {
        if boxes.len() != confidences.len() {
            return Err(EncoderError::ConfidenceCount { boxes: boxes.len(), confidences: confidences.len() });
        }
        for &c in &confidences {
            if !(0.0..=1.0).contains(&c) {
                return Err(EncoderError::BadConfidence(c));
            }
        }
        Ok(Self::Predictions { boxes, confidences, confidence_floor })
    }

    /// Boxes that may enter the bitmap; predictions are confidence-filtered.
    pub fn effective_boxes(&self) -> Vec<OrientedBox> {
        match self {
            Self::GroundTruth(boxes) => boxes.clone(),
            Self::Predictions { boxes, confidences, confidence_floor } => boxes
                .iter()
                .zip(confidences.iter())
                .filter(|(_, &c)| c >= *confidence_floor)
                .map(|(b, _)| *b)
                .collect(),
        }
    }
}

/// The three repurposed channels for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedFrame {
    /// Grayscale of the current frame.
    pub red: Frame,
    /// Thresholded pixel changes against the previous frame.
    pub green: Frame,
    /// Previous-frame box bitmap; samples are exactly 0 or [`BITMAP_MARK`].
    pub blue: Frame,
    pub index: u64,
}

impl EncodedFrame {
    /// Interleave the channels into one RGB frame for PPM or stream output.
    pub fn to_interleaved(&self) -> Frame {
        let n = self.red.pixel_count();
        let mut data = Vec::with_capacity(n * 3);
        for i in 0..n {
            data.push(self.red.data()[i]);
            data.push(self.green.data()[i]);
            data.push(self.blue.data()[i]);
        }
        Frame::new(self.red.width(), self.red.height(), 3, data, self.index)
            .expect("channels share one shape")
    }
}

/// Which bitmap path an encoding took.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitmapMode {
    /// No box source: blue stays all zero.
    None,
    /// Stochastic gates applied to the source boxes.
    Train,
    /// Verbatim rendering of the confidence-filtered boxes.
    Infer,
}

impl BitmapMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Train => "train",
            Self::Infer => "infer",
        }
    }
}

/// Record of the stochastic gates drawn for one encoding, for the audit
/// sidecar and for statistical verification.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeAudit {
    pub frame_index: u64,
    pub mode: BitmapMode,
    /// Did the use-bitmap gate pass? Train mode only.
    pub used_bitmap: Option<bool>,
    /// Did the discard gate fire? Only drawn when the use gate passed.
    pub discarded_all: Option<bool>,
    /// Boxes offered to the jitter stage.
    pub boxes_total: usize,
    /// Translations actually applied, one per jittered box.
    pub jitter_deltas: Vec<(f64, f64)>,
}

impl EncodeAudit {
    fn without_randomness(frame_index: u64, mode: BitmapMode, boxes_total: usize) -> Self {
        Self { frame_index, mode, used_bitmap: None, discarded_all: None, boxes_total, jitter_deltas: Vec::new() }
    }

    /// One-line sidecar form: frame index, mode and the gates drawn.
    pub fn to_line(&self) -> String {
        let gate = |g: Option<bool>| match g {
            Some(true) => "1",
            Some(false) => "0",
            None => "-",
        };
        let mut line = format!(
            "frame={} mode={} use_bitmap={} discard={} jittered={}/{}",
            self.frame_index,
            self.mode.as_str(),
            gate(self.used_bitmap),
            gate(self.discarded_all),
            self.jitter_deltas.len(),
            self.boxes_total,
        );
        for (dx, dy) in &self.jitter_deltas {
            let _ = write!(line, " d={dx:.3},{dy:.3}");
        }
        line
    }
}

/// Paint `mark` into every pixel whose center `(x + 0.5, y + 0.5)` lies
/// inside any of the boxes; all other pixels are 0. Overlaps do not
/// accumulate and boxes are clipped to the frame rectangle.
pub fn render_bitmap(boxes: &[OrientedBox], width: u32, height: u32, mark: u8) -> Frame {
    assert!(mark >= 1, "bitmap mark must be in [1, 255]");
    let mut data = vec![0u8; width as usize * height as usize];
    for b in boxes {
        let (min, max) = b.aabb();
        // Pixel centers at x + 0.5: the first candidate column is
        // floor(min.x - 0.5 + 1) = floor(min.x + 0.5).
        let x0 = (min.x - 0.5).ceil().max(0.0) as u32;
        let y0 = (min.y - 0.5).ceil().max(0.0) as u32;
        if x0 >= width || y0 >= height || max.x < 0.0 || max.y < 0.0 {
            continue;
        }
        let x1 = ((max.x - 0.5).floor().min(f64::from(width - 1))).max(0.0) as u32;
        let y1 = ((max.y - 0.5).floor().min(f64::from(height - 1))).max(0.0) as u32;
        for y in y0..=y1 {
            let row = y as usize * width as usize;
            for x in x0..=x1 {
                if b.contains(Point::new(f64::from(x) + 0.5, f64::from(y) + 0.5)) {
                    data[row + x as usize] = mark;
                }
            }
        }
    }
    Frame::new(width, height, 1, data, 0).expect("bitmap dimensions are valid")
}

/// Training-time box augmentation: with probability `p_discard_all` the whole
/// list is dropped; otherwise each box is independently translated with
/// probability `p_jitter_box` by a uniform draw from the jitter square.
///
/// Draw order is fixed (discard gate, then per box: jitter gate, dx, dy), so
/// identical rng state gives identical output.
pub fn augment_boxes<R: Rng>(
    boxes: &[OrientedBox],
    policy: &AugmentationPolicy,
    rng: &mut R,
) -> Vec<OrientedBox> {
    augment_boxes_audited(boxes, policy, rng).0
}

struct AugmentOutcome {
    discarded: bool,
    deltas: Vec<(f64, f64)>,
}

fn augment_boxes_audited<R: Rng>(
    boxes: &[OrientedBox],
    policy: &AugmentationPolicy,
    rng: &mut R,
) -> (Vec<OrientedBox>, AugmentOutcome) {
    if rng.gen::<f64>() < policy.p_discard_all {
        return (Vec::new(), AugmentOutcome { discarded: true, deltas: Vec::new() });
    }
    let mut deltas = Vec::new();
    let out = boxes
        .iter()
        .map(|b| {
            if rng.gen::<f64>() < policy.p_jitter_box {
                let dx = rng.gen_range(-policy.jitter_max..=policy.jitter_max);
                let dy = rng.gen_range(-policy.jitter_max..=policy.jitter_max);
                deltas.push((dx, dy));
                b.translated(dx, dy)
            } else {
                *b
            }
        })
        .collect();
    (out, AugmentOutcome { discarded: false, deltas })
}

/// Build the encoded frame. `policy` present means training mode; absent
/// with a source means inference mode. Without a previous frame the green
/// channel is all zero; without a source so is the blue channel.
pub fn encode<R: Rng>(
    current: &Frame,
    previous: Option<&Frame>,
    source: Option<&BoxSource>,
    policy: Option<&AugmentationPolicy>,
    motion_threshold: u8,
    rng: &mut R,
) -> Result<EncodedFrame, EncoderError> {
    encode_with_audit(current, previous, source, policy, motion_threshold, rng).map(|(f, _)| f)
}

/// [`encode`] plus the audit record of the gates drawn.
pub fn encode_with_audit<R: Rng>(
    current: &Frame,
    previous: Option<&Frame>,
    source: Option<&BoxSource>,
    policy: Option<&AugmentationPolicy>,
    motion_threshold: u8,
    rng: &mut R,
) -> Result<(EncodedFrame, EncodeAudit), EncoderError> {
    let index = current.index();
    let red = to_grayscale(current)?;
    let green = match previous {
        Some(prev) => motion_map(&red, &to_grayscale(prev)?, motion_threshold)?,
        None => Frame::filled(red.width(), red.height(), 1, 0, index)?,
    };

    let zero_blue = || Frame::filled(red.width(), red.height(), 1, 0, index);
    let (blue, audit) = match (source, policy) {
        (None, _) => (zero_blue()?, EncodeAudit::without_randomness(index, BitmapMode::None, 0)),
        (Some(src), Some(policy)) => {
            policy.validate()?;
            let boxes = src.effective_boxes();
            let used_bitmap = rng.gen::<f64>() < policy.p_use_bitmap;
            if used_bitmap {
                let (augmented, outcome) = augment_boxes_audited(&boxes, policy, rng);
                let blue = render_bitmap(&augmented, red.width(), red.height(), BITMAP_MARK);
                (
                    blue,
                    EncodeAudit {
                        frame_index: index,
                        mode: BitmapMode::Train,
                        used_bitmap: Some(true),
                        discarded_all: Some(outcome.discarded),
                        boxes_total: boxes.len(),
                        jitter_deltas: outcome.deltas,
                    },
                )
            } else {
                (
                    zero_blue()?,
                    EncodeAudit {
                        frame_index: index,
                        mode: BitmapMode::Train,
                        used_bitmap: Some(false),
                        discarded_all: None,
                        boxes_total: boxes.len(),
                        jitter_deltas: Vec::new(),
                    },
                )
            }
        }
        (Some(src), None) => {
            let boxes = src.effective_boxes();
            let blue = render_bitmap(&boxes, red.width(), red.height(), BITMAP_MARK);
            (blue, EncodeAudit::without_randomness(index, BitmapMode::Infer, boxes.len()))
        }
    };

    let green = green.with_index(index);
    let blue = blue.with_index(index);
    Ok((EncodedFrame { red, green, blue, index }, audit))
}
