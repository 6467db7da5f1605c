//! Label and detection file formats, the class vocabulary, and the
//! frame-level train/val/test split.
//!
//! On-disk formats (UTF-8, `\n` line endings, `#` comment lines ignored):
//!
//! * labels, one object per line: `class_id cx cy w h theta`
//!   (absolute pixels, theta in radians), file `<video_id>_<frame>.txt`
//! * detections: same columns plus a trailing confidence,
//!   file `<video_id>_<frame>.det.txt`
//! * split manifest CSV: `frame_key,split`

use crate::geometry::{GeometryError, OrientedBox};
use crate::rng::derive_seed;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: unknown class id {id}")]
    UnknownClass { line: usize, id: i64 },
    #[error("line {line}: confidence {value} is outside [0, 1]")]
    BadConfidence { line: usize, value: f64 },
    #[error("line {line}: invalid box: {source}")]
    BadBox { line: usize, source: GeometryError },
    #[error("split fractions must be non-negative and sum to 1, got {0}, {1}, {2}")]
    BadFractions(f64, f64, f64),
}

/// The four object classes, in confusion-matrix axis order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassId {
    Bed = 0,
    Staff = 1,
    Devices = 2,
    Patient = 3,
}

impl ClassId {
    pub const ALL: [ClassId; 4] = [ClassId::Bed, ClassId::Staff, ClassId::Devices, ClassId::Patient];
    pub const COUNT: usize = 4;

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassId::Bed => "bed",
            ClassId::Staff => "staff",
            ClassId::Devices => "devices",
            ClassId::Patient => "patient",
        }
    }

    pub fn from_id(id: u8) -> Option<ClassId> {
        match id {
            0 => Some(ClassId::Bed),
            1 => Some(ClassId::Staff),
            2 => Some(ClassId::Devices),
            3 => Some(ClassId::Patient),
            _ => None,
        }
    }

    pub fn from_name(name: &str) -> Option<ClassId> {
        Self::ALL.iter().copied().find(|c| c.name() == name)
    }
}

/// Hand-labeled ground truth for one object in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub class: ClassId,
    pub bbox: OrientedBox,
    pub frame_index: u64,
    pub video_id: String,
}

/// Detector output for one object in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub class: ClassId,
    pub bbox: OrientedBox,
    pub confidence: f64,
    pub frame_index: u64,
    pub video_id: String,
}

/// Frame key used in file names and the split manifest: `<video_id>_<frame>`.
pub fn frame_key(video_id: &str, frame_index: u64) -> String {
    format!("{video_id}_{frame_index}")
}

/// Invert [`frame_key`]; splits at the last underscore so video ids may
/// themselves contain underscores.
pub fn parse_frame_key(key: &str) -> Option<(String, u64)> {
    let (video, idx) = key.rsplit_once('_')?;
    let frame_index = idx.parse().ok()?;
    Some((video.to_string(), frame_index))
}

pub fn label_file_name(video_id: &str, frame_index: u64) -> String {
    format!("{}.txt", frame_key(video_id, frame_index))
}

pub fn detection_file_name(video_id: &str, frame_index: u64) -> String {
    format!("{}.det.txt", frame_key(video_id, frame_index))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_fields(line: usize, text: &str, expected: usize, what: &str) -> Result<Vec<f64>, DatasetError> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != expected {
        return Err(DatasetError::Malformed {
            line,
            reason: format!("expected {expected} fields ({what}), got {}", fields.len()),
        });
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>().map_err(|_| DatasetError::Malformed {
                line,
                reason: format!("'{f}' is not a number"),
            })
        })
        .collect()
}

fn parse_class(line: usize, value: f64) -> Result<ClassId, DatasetError> {
    if value.fract() != 0.0 || !(0.0..=255.0).contains(&value) {
        return Err(DatasetError::UnknownClass { line, id: value as i64 });
    }
    ClassId::from_id(value as u8).ok_or(DatasetError::UnknownClass { line, id: value as i64 })
}

fn parse_box(line: usize, f: &[f64]) -> Result<OrientedBox, DatasetError> {
    OrientedBox::new(f[0], f[1], f[2], f[3], f[4]).map_err(|source| DatasetError::BadBox { line, source })
}

pub fn parse_labels(text: &str, video_id: &str, frame_index: u64) -> Result<Vec<Annotation>, DatasetError> {
    content_lines(text)
        .map(|(line, l)| {
            let f = parse_fields(line, l, 6, "class cx cy w h theta")?;
            Ok(Annotation {
                class: parse_class(line, f[0])?,
                bbox: parse_box(line, &f[1..])?,
                frame_index,
                video_id: video_id.to_string(),
            })
        })
        .collect()
}

pub fn write_labels(annotations: &[Annotation]) -> String {
    let mut out = String::new();
    for a in annotations {
        let b = &a.bbox;
        out.push_str(&format!(
            "{} {} {} {} {} {}\n",
            a.class.id(),
            b.cx(),
            b.cy(),
            b.width(),
            b.height(),
            b.theta()
        ));
    }
    out
}

pub fn parse_detections(text: &str, video_id: &str, frame_index: u64) -> Result<Vec<Detection>, DatasetError> {
    content_lines(text)
        .map(|(line, l)| {
            let f = parse_fields(line, l, 7, "class cx cy w h theta confidence")?;
            let confidence = f[6];
            if !(0.0..=1.0).contains(&confidence) {
                return Err(DatasetError::BadConfidence { line, value: confidence });
            }
            Ok(Detection {
                class: parse_class(line, f[0])?,
                bbox: parse_box(line, &f[1..6])?,
                confidence,
                frame_index,
                video_id: video_id.to_string(),
            })
        })
        .collect()
}

pub fn write_detections(detections: &[Detection]) -> String {
    let mut out = String::new();
    for d in detections {
        let b = &d.bbox;
        out.push_str(&format!(
            "{} {} {} {} {} {} {}\n",
            d.class.id(),
            b.cx(),
            b.cy(),
            b.width(),
            b.height(),
            b.theta(),
            d.confidence
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn from_name(name: &str) -> Option<Split> {
        Self::ALL.iter().copied().find(|s| s.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.70, val: 0.15, test: 0.15 }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let ok = self.train >= 0.0
            && self.val >= 0.0
            && self.test >= 0.0
            && (self.train + self.val + self.test - 1.0).abs() <= 1e-9;
        if ok {
            Ok(())
        } else {
            Err(DatasetError::BadFractions(self.train, self.val, self.test))
        }
    }
}

/// Deterministic frame-to-split assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub fractions: SplitFractions,
    pub seed: u64,
    pub assignment: BTreeMap<String, Split>,
}

impl SplitAssignment {
    pub fn counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for s in self.assignment.values() {
            match s {
                Split::Train => c.0 += 1,
                Split::Val => c.1 += 1,
                Split::Test => c.2 += 1,
            }
        }
        c
    }

    /// Manifest CSV: `frame_key,split`, keys in sorted order.
    pub fn write_manifest_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "frame_key,split")?;
        for (key, split) in &self.assignment {
            writeln!(w, "{},{}", key, split.name())?;
        }
        Ok(())
    }
}

/// Shuffle the (sorted, deduplicated) keys with a seed-derived generator and
/// cut by the fractions. Bucket sizes are the floors of `fraction * n`, with
/// the remainder distributed one frame each to train, then val, then test —
/// every realized count stays within one frame of its exact proportion.
pub fn split_frames(
    frame_keys: &[String],
    fractions: &SplitFractions,
    seed: u64,
) -> Result<SplitAssignment, DatasetError> {
    fractions.validate()?;
    let mut keys: Vec<String> = frame_keys.to_vec();
    keys.sort();
    keys.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "split"));
    keys.shuffle(&mut rng);

    let n = keys.len();
    let mut counts = [
        (fractions.train * n as f64).floor() as usize,
        (fractions.val * n as f64).floor() as usize,
        (fractions.test * n as f64).floor() as usize,
    ];
    let mut remainder = n - counts.iter().sum::<usize>();
    for c in counts.iter_mut() {
        if remainder == 0 {
            break;
        }
        *c += 1;
        remainder -= 1;
    }

    let mut assignment = BTreeMap::new();
    let mut iter = keys.into_iter();
    for (count, split) in counts.iter().zip(Split::ALL) {
        for key in iter.by_ref().take(*count) {
            assignment.insert(key, split);
        }
    }
    Ok(SplitAssignment { fractions: *fractions, seed, assignment })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_mapping_is_total_and_fixed() {
        assert_eq!(ClassId::Bed.id(), 0);
        assert_eq!(ClassId::Staff.id(), 1);
        assert_eq!(ClassId::Devices.id(), 2);
        assert_eq!(ClassId::Patient.id(), 3);
        for c in ClassId::ALL {
            assert_eq!(ClassId::from_id(c.id()), Some(c));
            assert_eq!(ClassId::from_name(c.name()), Some(c));
        }
        assert_eq!(ClassId::from_id(4), None);
    }

    #[test]
    fn empty_file_parses_to_empty_list() {
        assert!(parse_labels("", "v", 0).unwrap().is_empty());
        assert!(parse_labels("\n# comment only\n\n", "v", 0).unwrap().is_empty());
    }

    #[test]
    fn label_line_maps_fields_directly() {
        let labels = parse_labels("3 320.0 200.0 100.0 50.0 0.0\n", "cam1", 17).unwrap();
        assert_eq!(labels.len(), 1);
        let a = &labels[0];
        assert_eq!(a.class, ClassId::Patient);
        assert_eq!((a.bbox.cx(), a.bbox.cy()), (320.0, 200.0));
        assert_eq!((a.bbox.width(), a.bbox.height()), (100.0, 50.0));
        assert_eq!(a.bbox.theta(), 0.0);
        assert_eq!(a.frame_index, 17);
        assert_eq!(a.video_id, "cam1");
    }

    #[test]
    fn detection_line_carries_confidence() {
        let dets = parse_detections("1 100 80 40 90 1.1 0.83\n", "v", 0).unwrap();
        assert_eq!(dets[0].class, ClassId::Staff);
        assert_eq!(dets[0].confidence, 0.83);
        // theta 1.1 is within [-pi/2, pi/2), stored as-is
        assert!((dets[0].bbox.theta() - 1.1).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_confidence_is_rejected() {
        let err = parse_detections("1 100 80 40 90 0.0 1.5\n", "v", 0).unwrap_err();
        assert!(matches!(err, DatasetError::BadConfidence { line: 1, .. }));
    }

    #[test]
    fn malformed_lines_name_line_and_reason() {
        let err = parse_labels("0 1 2 3 4 0\n0 1 2 3 4\n", "v", 0).unwrap_err();
        match err {
            DatasetError::Malformed { line, reason } => {
                assert_eq!(line, 2);
                assert!(reason.contains("expected 6 fields"), "{reason}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_labels("0 one 2 3 4 0\n", "v", 0).unwrap_err();
        match err {
            DatasetError::Malformed { line, reason } => {
                assert_eq!(line, 1);
                assert!(reason.contains("'one' is not a number"), "{reason}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_labels("7 1 2 3 4 0\n", "v", 0).unwrap_err();
        assert!(matches!(err, DatasetError::UnknownClass { line: 1, id: 7 }));
        let err = parse_labels("0 1 2 0 4 0\n", "v", 0).unwrap_err();
        assert!(matches!(err, DatasetError::BadBox { line: 1, .. }));
    }

    #[test]
    fn write_then_parse_is_lossless() {
        let text = "0 10.25 20.5 30.125 40 0.375\n3 1 2 3 4 -1.5\n";
        let labels = parse_labels(text, "v", 5).unwrap();
        let written = write_labels(&labels);
        let reparsed = parse_labels(&written, "v", 5).unwrap();
        assert_eq!(labels, reparsed);
    }

    #[test]
    fn frame_keys_round_trip_with_underscored_video_ids() {
        let key = frame_key("ward_3_cam1", 42);
        assert_eq!(key, "ward_3_cam1_42");
        assert_eq!(parse_frame_key(&key), Some(("ward_3_cam1".to_string(), 42)));
        assert_eq!(parse_frame_key("nounderscore"), None);
        assert_eq!(detection_file_name("v", 3), "v_3.det.txt");
    }

    fn keys(n: usize) -> Vec<String> {
        (0..n).map(|i| frame_key("v", i as u64)).collect()
    }

    #[test]
    fn split_of_100_is_exact() {
        let split = split_frames(&keys(100), &SplitFractions::default(), 7).unwrap();
        assert_eq!(split.counts(), (70, 15, 15));
    }

    #[test]
    fn split_of_101_gives_extra_frame_to_train() {
        let split = split_frames(&keys(101), &SplitFractions::default(), 7).unwrap();
        assert_eq!(split.counts(), (71, 15, 15));
    }

    #[test]
    fn split_counts_stay_within_one_of_exact_proportion() {
        for n in [1usize, 2, 3, 7, 99, 100, 101, 1000, 1003] {
            let split = split_frames(&keys(n), &SplitFractions::default(), 3).unwrap();
            let (a, b, c) = split.counts();
            assert_eq!(a + b + c, n);
            for (count, frac) in [(a, 0.70), (b, 0.15), (c, 0.15)] {
                assert!((count as f64 - frac * n as f64).abs() <= 1.0, "n={n} count={count} frac={frac}");
            }
        }
    }

    #[test]
    fn split_is_deterministic_and_order_invariant() {
        let a = split_frames(&keys(50), &SplitFractions::default(), 11).unwrap();
        let b = split_frames(&keys(50), &SplitFractions::default(), 11).unwrap();
        assert_eq!(a, b);
        let mut reversed = keys(50);
        reversed.reverse();
        let c = split_frames(&reversed, &SplitFractions::default(), 11).unwrap();
        assert_eq!(a.assignment, c.assignment);
        let d = split_frames(&keys(50), &SplitFractions::default(), 12).unwrap();
        assert_ne!(a.assignment, d.assignment);
    }

    #[test]
    fn empty_key_list_is_fine() {
        let split = split_frames(&[], &SplitFractions::default(), 0).unwrap();
        assert!(split.assignment.is_empty());
    }

    #[test]
    fn bad_fractions_are_rejected() {
        let err = split_frames(&keys(10), &SplitFractions { train: 0.5, val: 0.2, test: 0.2 }, 0).unwrap_err();
        assert!(matches!(err, DatasetError::BadFractions(..)));
    }

    #[test]
    fn manifest_csv_shape() {
        let split = split_frames(&keys(3), &SplitFractions::default(), 1).unwrap();
        let mut buf = Vec::new();
        split.write_manifest_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "frame_key,split");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("v_0,"));
    }
}
