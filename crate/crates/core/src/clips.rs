//! Motion-based clip extraction from long recordings.
//!
//! A per-frame motion metric (mean absolute grayscale difference against the
//! frame `stride` steps back) is thresholded; maximal above-threshold runs
//! become segments, each padded by a fixed number of seconds per side and
//! merged when they touch or overlap.

use crate::raster::{mean_abs_diff, to_grayscale, Frame, RasterError};
use std::collections::VecDeque;
use std::io::Write;
use thiserror::Error;

/// Default metric threshold, calibrated on the synthetic scene generator.
pub const DEFAULT_CLIP_THRESHOLD: f64 = 2.0;
/// Seconds of context kept on each side of a detected snippet.
pub const DEFAULT_PAD_SECONDS: f64 = 10.0;

#[derive(Debug, Error)]
pub enum ClipsError {
    #[error("motion series needs at least two frames")]
    TooFewFrames,
    #[error("stride must be at least 1")]
    BadStride,
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Half-open frame interval attributed to one source video.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipSegment {
    pub start: u64,
    pub end: u64,
    pub peak_motion: f64,
    pub source_video: String,
}

/// Incremental motion metric over a stream of frames.
///
/// Keeps the last `stride` grayscale frames; every pushed frame beyond the
/// first `stride` yields one `(frame index, metric)` entry. Suitable for
/// recordings too long to hold in memory.
pub struct MotionTracker {
    stride: usize,
    history: VecDeque<Frame>,
}

impl MotionTracker {
    pub fn new(stride: usize) -> Result<Self, ClipsError> {
        if stride == 0 {
            return Err(ClipsError::BadStride);
        }
        Ok(Self { stride, history: VecDeque::with_capacity(stride) })
    }

    pub fn push(&mut self, frame: &Frame) -> Result<Option<(u64, f64)>, ClipsError> {
        let gray = if frame.channels() == 3 { to_grayscale(frame)? } else { frame.clone() };
        let entry = if self.history.len() == self.stride {
            let past = self.history.pop_front().expect("history holds stride frames");
            Some((gray.index(), mean_abs_diff(&gray, &past)?))
        } else {
            None
        };
        self.history.push_back(gray);
        Ok(entry)
    }
}

/// Motion metric series over an in-memory frame sequence: one value per
/// compared pair, computed on grayscale. The first `stride` frames yield no
/// entry.
pub fn motion_series<'a, I>(frames: I, stride: usize) -> Result<Vec<(u64, f64)>, ClipsError>
where
    I: IntoIterator<Item = &'a Frame>,
{
    let mut tracker = MotionTracker::new(stride)?;
    let mut series = Vec::new();
    let mut count = 0usize;
    for frame in frames {
        count += 1;
        if let Some(entry) = tracker.push(frame)? {
            series.push(entry);
        }
    }
    if count < 2 {
        return Err(ClipsError::TooFewFrames);
    }
    Ok(series)
}

/// Turn an above-threshold series into padded, merged, disjoint segments.
///
/// Runs of consecutive above-threshold entries become `[first, last + 1)`
/// segments, extended by `round(pad_seconds * fps)` frames per side, clamped
/// to `[0, frame_count]`. Segments that touch or overlap after padding merge;
/// the output is sorted and pairwise disjoint.
pub fn extract_segments(
    series: &[(u64, f64)],
    threshold: f64,
    pad_seconds: f64,
    fps: f64,
    frame_count: u64,
    source_video: &str,
) -> Vec<ClipSegment> {
    debug_assert!(fps > 0.0 && pad_seconds >= 0.0);
    debug_assert!(series.windows(2).all(|w| w[0].0 < w[1].0), "series must be sorted by index");
    let pad = (pad_seconds * fps).round() as u64;

    let mut segments: Vec<ClipSegment> = Vec::new();
    let mut run: Option<(u64, u64, f64)> = None; // (first, last, peak)
    let mut prev_index = None;
    for &(index, value) in series {
        let above = value >= threshold;
        let consecutive = prev_index.map_or(false, |p: u64| index == p + 1);
        match (&mut run, above) {
            (Some((_, last, peak)), true) if consecutive => {
                *last = index;
                *peak = peak.max(value);
            }
            (current, true) => {
                if let Some(r) = current.take() {
                    push_padded(&mut segments, r, pad, frame_count, source_video);
                }
                *current = Some((index, index, value));
            }
            (current @ Some(_), false) => {
                let r = current.take().expect("run present");
                push_padded(&mut segments, r, pad, frame_count, source_video);
            }
            (None, false) => {}
        }
        prev_index = Some(index);
    }
    if let Some(r) = run {
        push_padded(&mut segments, r, pad, frame_count, source_video);
    }
    segments
}

fn push_padded(
    segments: &mut Vec<ClipSegment>,
    (first, last, peak): (u64, u64, f64),
    pad: u64,
    frame_count: u64,
    source_video: &str,
) {
    let start = first.saturating_sub(pad);
    let end = (last + 1).saturating_add(pad).min(frame_count);
    if start >= end {
        return;
    }
    if let Some(prev) = segments.last_mut() {
        // touching segments (end == start) merge as well
        if start <= prev.end {
            prev.end = prev.end.max(end);
            prev.peak_motion = prev.peak_motion.max(peak);
            return;
        }
    }
    segments.push(ClipSegment { start, end, peak_motion: peak, source_video: source_video.to_string() });
}

/// CSV serialization: `video_id,start_frame,end_frame,peak_motion`.
pub fn write_segments_csv<W: Write>(w: &mut W, segments: &[ClipSegment]) -> std::io::Result<()> {
    writeln!(w, "video_id,start_frame,end_frame,peak_motion")?;
    for s in segments {
        writeln!(w, "{},{},{},{}", s.source_video, s.start, s.end, s.peak_motion)?;
    }
    Ok(())
}
