//! Detection quality metrics: greedy IoU matching, per-class average
//! precision with all-points interpolation, mAP, and the confusion matrix
//! with a background row and column.
//!
//! Matching is per frame. Accumulation across frames is an associative,
//! commutative merge, so partial results combine in any order.

use crate::dataset::{Annotation, ClassId, Detection};
use crate::geometry::iou;
use std::collections::BTreeMap;
use std::io::Write;

/// Default IoU threshold for mAP matching.
pub const DEFAULT_MAP_IOU: f64 = 0.5;
/// Confusion-matrix defaults, set to the detector tooling's usual values.
pub const DEFAULT_CONFUSION_CONF: f64 = 0.25;
pub const DEFAULT_CONFUSION_IOU: f64 = 0.45;

/// Index of the background pseudo-class in the confusion matrix.
pub const BACKGROUND: usize = 4;

/// Per-class `(confidence, is_true_positive)` records plus ground-truth
/// counts, accumulated over any number of frames.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchResult {
    pub records: [Vec<(f64, bool)>; 4],
    pub gt_counts: [usize; 4],
}

impl MatchResult {
    pub fn merge(&mut self, other: MatchResult) {
        for (mine, theirs) in self.records.iter_mut().zip(other.records) {
            mine.extend(theirs);
        }
        for (mine, theirs) in self.gt_counts.iter_mut().zip(other.gt_counts) {
            *mine += theirs;
        }
    }
}

/// Match one frame's detections against its ground truth, per class.
///
/// Detections are taken in descending confidence order (ties keep input
/// order); each one matches the unmatched same-class ground truth with the
/// highest IoU if that IoU reaches the threshold (IoU ties break toward the
/// lower ground-truth index). Matched detections are true positives, the
/// rest false positives; each ground truth matches at most once.
pub fn match_frame(detections: &[Detection], truths: &[Annotation], iou_threshold: f64) -> MatchResult {
    let mut result = MatchResult::default();
    for t in truths {
        result.gt_counts[t.class as usize] += 1;
    }
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .confidence
            .partial_cmp(&detections[a].confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut taken = vec![false; truths.len()];
    for det_idx in order {
        let det = &detections[det_idx];
        let mut best: Option<(usize, f64)> = None;
        for (t_idx, t) in truths.iter().enumerate() {
            if taken[t_idx] || t.class != det.class {
                continue;
            }
            let overlap = iou(&det.bbox, &t.bbox);
            let better = match best {
                None => overlap > 0.0,
                Some((_, best_iou)) => overlap > best_iou,
            };
            if better {
                best = Some((t_idx, overlap));
            }
        }
        let is_tp = match best {
            Some((t_idx, overlap)) if overlap >= iou_threshold => {
                taken[t_idx] = true;
                true
            }
            _ => false,
        };
        result.records[det.class as usize].push((det.confidence, is_tp));
    }
    result
}

/// Area under the precision-envelope/recall curve, all-points interpolation.
///
/// With `gt_count == 0` the AP is 0 by definition; whether a class counts as
/// "undefined" is decided by the caller (see [`EvalReport`]).
pub fn average_precision(records: &[(f64, bool)], gt_count: usize) -> f64 {
    if gt_count == 0 || records.is_empty() {
        return 0.0;
    }
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for (_, is_tp) in sorted {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        points.push((tp as f64 / gt_count as f64, tp as f64 / (tp + fp) as f64));
    }
    // Replace each precision with the maximum at any recall at least as high,
    // then integrate over the recall steps. The envelope for the segment
    // (r_i, r_{i+1}] only sees points at recall >= r_{i+1}, so it updates
    // after the segment is added.
    let mut ap = 0.0;
    let mut envelope = 0.0f64;
    let mut prev_recall = points.last().expect("records nonempty").0;
    for &(recall, precision) in points.iter().rev() {
        ap += envelope * (prev_recall - recall);
        envelope = envelope.max(precision);
        prev_recall = recall;
    }
    ap += envelope * prev_recall; // segment down to recall 0
    ap
}

/// Unweighted arithmetic mean of per-class APs.
///
/// Uses Neumaier-compensated summation so the reported mean is the correctly
/// rounded value of the inputs (one-decimal reports depend on this).
pub fn mean_average_precision(per_class: &[f64]) -> f64 {
    assert!(!per_class.is_empty(), "mean over zero classes is undefined");
    let mut sum = 0.0f64;
    let mut compensation = 0.0f64;
    for &v in per_class {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            compensation += (sum - t) + v;
        } else {
            compensation += (v - t) + sum;
        }
        sum = t;
    }
    (sum + compensation) / per_class.len() as f64
}

/// Per-class evaluation summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub class: ClassId,
    /// `None` when the class appears in neither ground truth nor detections.
    pub ap: Option<f64>,
    pub gt_count: usize,
    pub detection_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_class: Vec<ClassReport>,
    /// Mean AP over the defined classes.
    pub map: f64,
    pub iou_threshold: f64,
}

/// Full mAP evaluation: group by frame, match, accumulate, compute APs.
///
/// Classes absent from both ground truth and detections are reported as
/// undefined and excluded from the mean; classes present only in detections
/// score 0.
pub fn evaluate(detections: &[Detection], truths: &[Annotation], iou_threshold: f64) -> EvalReport {
    let mut result = MatchResult::default();
    for (det_group, truth_group) in frame_groups(detections, truths).values() {
        result.merge(match_frame(det_group, truth_group, iou_threshold));
    }
    let per_class: Vec<ClassReport> = ClassId::ALL
        .iter()
        .map(|&class| {
            let idx = class as usize;
            let gt_count = result.gt_counts[idx];
            let detection_count = result.records[idx].len();
            let ap = (gt_count > 0 || detection_count > 0)
                .then(|| average_precision(&result.records[idx], gt_count));
            ClassReport { class, ap, gt_count, detection_count }
        })
        .collect();
    let defined: Vec<f64> = per_class.iter().filter_map(|c| c.ap).collect();
    let map = if defined.is_empty() { 0.0 } else { mean_average_precision(&defined) };
    EvalReport { per_class, map, iou_threshold }
}

type FrameGroups<'a> = BTreeMap<(&'a str, u64), (Vec<Detection>, Vec<Annotation>)>;

fn frame_groups<'a>(detections: &'a [Detection], truths: &'a [Annotation]) -> FrameGroups<'a> {
    let mut groups: FrameGroups<'a> = BTreeMap::new();
    for d in detections {
        groups.entry((d.video_id.as_str(), d.frame_index)).or_default().0.push(d.clone());
    }
    for t in truths {
        groups.entry((t.video_id.as_str(), t.frame_index)).or_default().1.push(t.clone());
    }
    groups
}

/// 5x5 confusion counts; rows are predicted class, columns ground truth,
/// index 4 is background on both axes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: [[u64; 5]; 5],
}

impl ConfusionMatrix {
    pub fn counts(&self) -> &[[u64; 5]; 5] {
        &self.counts
    }

    pub fn count(&self, predicted: usize, truth: usize) -> u64 {
        self.counts[predicted][truth]
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (mine, theirs) in self.counts.iter_mut().zip(other.counts.iter()) {
            for (m, t) in mine.iter_mut().zip(theirs.iter()) {
                *m += t;
            }
        }
    }

    /// Divide each column by its total; all-zero columns stay zero.
    pub fn normalized_per_column(&self) -> [[f64; 5]; 5] {
        let mut out = [[0.0; 5]; 5];
        for col in 0..5 {
            let total: u64 = (0..5).map(|row| self.counts[row][col]).sum();
            if total == 0 {
                continue;
            }
            for row in 0..5 {
                out[row][col] = self.counts[row][col] as f64 / total as f64;
            }
        }
        out
    }

    pub fn axis_label(index: usize) -> &'static str {
        match index {
            BACKGROUND => "background",
            i => ClassId::from_id(i as u8).expect("axis index").name(),
        }
    }
}

/// Build the confusion matrix: detections below `conf_threshold` are
/// dropped, then class-agnostic greedy IoU matching per frame. Matched
/// pairs land at (predicted, truth); unmatched truths in the background
/// row; unmatched detections in the background column.
pub fn confusion_matrix(
    detections: &[Detection],
    truths: &[Annotation],
    conf_threshold: f64,
    iou_threshold: f64,
) -> ConfusionMatrix {
    let mut matrix = ConfusionMatrix::default();
    for (det_group, truth_group) in frame_groups(detections, truths).values() {
        let mut kept: Vec<&Detection> = det_group.iter().filter(|d| d.confidence >= conf_threshold).collect();
        kept.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap_or(std::cmp::Ordering::Equal));
        let mut taken = vec![false; truth_group.len()];
        for det in kept {
            let mut best: Option<(usize, f64)> = None;
            for (t_idx, t) in truth_group.iter().enumerate() {
                if taken[t_idx] {
                    continue;
                }
                let overlap = iou(&det.bbox, &t.bbox);
                let better = match best {
                    None => overlap > 0.0,
                    Some((_, best_iou)) => overlap > best_iou,
                };
                if better {
                    best = Some((t_idx, overlap));
                }
            }
            match best {
                Some((t_idx, overlap)) if overlap >= iou_threshold => {
                    taken[t_idx] = true;
                    matrix.counts[det.class as usize][truth_group[t_idx].class as usize] += 1;
                }
                _ => matrix.counts[det.class as usize][BACKGROUND] += 1,
            }
        }
        for (t_idx, t) in truth_group.iter().enumerate() {
            if !taken[t_idx] {
                matrix.counts[BACKGROUND][t.class as usize] += 1;
            }
        }
    }
    matrix
}

/// Per-class AP CSV: `class,ap,gt_count,detections` with a trailing mAP row.
/// Undefined classes print `n/a`.
pub fn write_ap_report_csv<W: Write>(w: &mut W, report: &EvalReport) -> std::io::Result<()> {
    writeln!(w, "class,ap,gt_count,detections")?;
    for c in &report.per_class {
        match c.ap {
            Some(ap) => writeln!(w, "{},{},{},{}", c.class.name(), ap, c.gt_count, c.detection_count)?,
            None => writeln!(w, "{},n/a,{},{}", c.class.name(), c.gt_count, c.detection_count)?,
        }
    }
    writeln!(w, "mAP@{},{},,", report.iou_threshold, report.map)?;
    Ok(())
}

/// Confusion CSV mirroring the usual layout: columns are ground truth,
/// rows predicted. Raw counts or per-column normalized values.
pub fn write_confusion_csv<W: Write>(w: &mut W, matrix: &ConfusionMatrix, normalized: bool) -> std::io::Result<()> {
    write!(w, "predicted\\truth")?;
    for col in 0..5 {
        write!(w, ",{}", ConfusionMatrix::axis_label(col))?;
    }
    writeln!(w)?;
    let norm = normalized.then(|| matrix.normalized_per_column());
    for row in 0..5 {
        write!(w, "{}", ConfusionMatrix::axis_label(row))?;
        for col in 0..5 {
            match &norm {
                Some(n) => write!(w, ",{}", n[row][col])?,
                None => write!(w, ",{}", matrix.counts[row][col])?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::OrientedBox;

    fn obox(cx: f64, cy: f64, w: f64, h: f64) -> OrientedBox {
        OrientedBox::new(cx, cy, w, h, 0.0).unwrap()
    }

    fn truth(class: ClassId, cx: f64, cy: f64, frame: u64) -> Annotation {
        Annotation { class, bbox: obox(cx, cy, 20.0, 10.0), frame_index: frame, video_id: "v".into() }
    }

    fn det(class: ClassId, cx: f64, cy: f64, conf: f64, frame: u64) -> Detection {
        Detection { class, bbox: obox(cx, cy, 20.0, 10.0), confidence: conf, frame_index: frame, video_id: "v".into() }
    }

    #[test]
    fn exact_detection_is_a_true_positive() {
        let truths = [truth(ClassId::Bed, 50.0, 50.0, 0)];
        let dets = [det(ClassId::Bed, 50.0, 50.0, 0.9, 0)];
        let result = match_frame(&dets, &truths, 0.5);
        assert_eq!(result.records[0], vec![(0.9, true)]);
        assert_eq!(result.gt_counts[0], 1);
    }

    #[test]
    fn second_detection_on_one_truth_is_a_false_positive() {
        let truths = [truth(ClassId::Bed, 50.0, 50.0, 0)];
        let dets = [det(ClassId::Bed, 50.0, 50.0, 0.8, 0), det(ClassId::Bed, 50.0, 50.0, 0.9, 0)];
        let result = match_frame(&dets, &truths, 0.5);
        // processed in confidence order: 0.9 first
        assert_eq!(result.records[0], vec![(0.9, true), (0.8, false)]);
    }

    #[test]
    fn below_threshold_iou_is_a_false_positive() {
        let truths = [truth(ClassId::Bed, 50.0, 50.0, 0)];
        // Offset by 8 px: IoU = 12/28 = 0.4286 < 0.5
        let dets = [det(ClassId::Bed, 58.0, 50.0, 0.9, 0)];
        let result = match_frame(&dets, &truths, 0.5);
        assert_eq!(result.records[0], vec![(0.9, false)]);
        assert_eq!(result.gt_counts[0], 1);
    }

    #[test]
    fn class_mismatch_never_matches() {
        let truths = [truth(ClassId::Bed, 50.0, 50.0, 0)];
        let dets = [det(ClassId::Staff, 50.0, 50.0, 0.9, 0)];
        let result = match_frame(&dets, &truths, 0.5);
        assert_eq!(result.records[1], vec![(0.9, false)]);
    }

    #[test]
    fn ap_perfect_detector_is_one() {
        let records = vec![(0.9, true), (0.8, true), (0.7, true)];
        assert_eq!(average_precision(&records, 3), 1.0);
    }

    #[test]
    fn ap_no_detections_is_zero() {
        assert_eq!(average_precision(&[], 5), 0.0);
    }

    #[test]
    fn ap_hand_computed_envelope_case() {
        // [(0.9 TP), (0.8 FP), (0.7 TP)] with 2 truths:
        // envelope gives 1.0 * 0.5 + (2/3) * 0.5 = 5/6
        let records = vec![(0.9, true), (0.8, false), (0.7, true)];
        let ap = average_precision(&records, 2);
        assert!((ap - 5.0 / 6.0).abs() < 1e-12, "ap = {ap}");
    }

    #[test]
    fn ap_ignores_input_order_with_distinct_confidences() {
        let records = vec![(0.7, true), (0.9, true), (0.8, false)];
        let shuffled = vec![(0.9, true), (0.8, false), (0.7, true)];
        assert_eq!(average_precision(&records, 2), average_precision(&shuffled, 2));
    }

    #[test]
    fn map_reproduces_published_one_decimal_values() {
        let baseline = mean_average_precision(&[98.0, 58.1, 97.6, 95.3]);
        let proposed = mean_average_precision(&[99.5, 58.1, 98.4, 99.4]);
        assert!((baseline - 87.25).abs() < 1e-9);
        assert!((proposed - 88.85).abs() < 1e-9);
        assert_eq!(format!("{baseline:.1}"), "87.2");
        assert_eq!(format!("{proposed:.1}"), "88.9");
    }

    #[test]
    fn map_of_equal_values_is_that_value() {
        assert_eq!(mean_average_precision(&[0.4, 0.4, 0.4, 0.4]), 0.4);
    }

    #[test]
    fn evaluate_marks_absent_classes_undefined() {
        let truths = [truth(ClassId::Bed, 50.0, 50.0, 0)];
        let dets = [det(ClassId::Bed, 50.0, 50.0, 0.9, 0)];
        let report = evaluate(&dets, &truths, 0.5);
        assert_eq!(report.per_class[0].ap, Some(1.0));
        assert_eq!(report.per_class[1].ap, None);
        assert_eq!(report.map, 1.0);
    }

    #[test]
    fn evaluate_scores_prediction_only_classes_zero() {
        let truths = [truth(ClassId::Bed, 50.0, 50.0, 0)];
        let dets = [det(ClassId::Bed, 50.0, 50.0, 0.9, 0), det(ClassId::Staff, 200.0, 200.0, 0.8, 0)];
        let report = evaluate(&dets, &truths, 0.5);
        assert_eq!(report.per_class[1].ap, Some(0.0));
        assert_eq!(report.map, 0.5);
    }

    #[test]
    fn matching_is_per_frame() {
        // A detection in frame 1 cannot match a truth in frame 0.
        let truths = [truth(ClassId::Bed, 50.0, 50.0, 0)];
        let dets = [det(ClassId::Bed, 50.0, 50.0, 0.9, 1)];
        let report = evaluate(&dets, &truths, 0.5);
        assert_eq!(report.per_class[0].ap, Some(0.0));
    }

    #[test]
    fn perfect_detector_confusion_is_diagonal() {
        let truths: Vec<Annotation> = ClassId::ALL
            .iter()
            .enumerate()
            .map(|(i, &c)| truth(c, 50.0 + 100.0 * i as f64, 50.0, 0))
            .collect();
        let dets: Vec<Detection> = ClassId::ALL
            .iter()
            .enumerate()
            .map(|(i, &c)| det(c, 50.0 + 100.0 * i as f64, 50.0, 1.0, 0))
            .collect();
        let m = confusion_matrix(&dets, &truths, 0.25, 0.45);
        for row in 0..5 {
            for col in 0..5 {
                let expected = u64::from(row == col && row < 4);
                assert_eq!(m.count(row, col), expected, "({row},{col})");
            }
        }
        let norm = m.normalized_per_column();
        for (i, col) in (0..4).enumerate() {
            assert_eq!(norm[i][col], 1.0);
        }
    }

    #[test]
    fn empty_detections_fill_background_row() {
        let truths = [truth(ClassId::Bed, 50.0, 50.0, 0), truth(ClassId::Patient, 200.0, 50.0, 0)];
        let m = confusion_matrix(&[], &truths, 0.25, 0.45);
        assert_eq!(m.count(BACKGROUND, 0), 1);
        assert_eq!(m.count(BACKGROUND, 3), 1);
        let total: u64 = m.counts().iter().flatten().sum();
        assert_eq!(total, 2);
    }

    #[test]
    fn confusion_matching_is_class_agnostic() {
        // A staff detection sitting on a bed truth becomes (staff, bed).
        let truths = [truth(ClassId::Bed, 50.0, 50.0, 0)];
        let dets = [det(ClassId::Staff, 50.0, 50.0, 0.9, 0)];
        let m = confusion_matrix(&dets, &truths, 0.25, 0.45);
        assert_eq!(m.count(ClassId::Staff as usize, ClassId::Bed as usize), 1);
        assert_eq!(m.count(BACKGROUND, ClassId::Bed as usize), 0);
    }

    #[test]
    fn confusion_drops_low_confidence_detections() {
        let truths = [truth(ClassId::Bed, 50.0, 50.0, 0)];
        let dets = [det(ClassId::Bed, 50.0, 50.0, 0.1, 0)];
        let m = confusion_matrix(&dets, &truths, 0.25, 0.45);
        assert_eq!(m.count(0, 0), 0);
        assert_eq!(m.count(BACKGROUND, 0), 1);
    }

    #[test]
    fn confusion_event_accounting_identities() {
        // block + background column = kept detections;
        // block + background row = truths.
        let truths = [
            truth(ClassId::Bed, 50.0, 50.0, 0),
            truth(ClassId::Staff, 150.0, 50.0, 0),
            truth(ClassId::Patient, 250.0, 50.0, 1),
        ];
        let dets = [
            det(ClassId::Bed, 50.0, 50.0, 0.9, 0),
            det(ClassId::Devices, 400.0, 50.0, 0.8, 0),
            det(ClassId::Patient, 250.0, 50.0, 0.7, 1),
            det(ClassId::Patient, 250.0, 50.0, 0.6, 1),
        ];
        let m = confusion_matrix(&dets, &truths, 0.25, 0.45);
        let block: u64 = (0..4).map(|r| (0..4).map(|c| m.count(r, c)).sum::<u64>()).sum();
        let bg_col: u64 = (0..4).map(|r| m.count(r, BACKGROUND)).sum();
        let bg_row: u64 = (0..4).map(|c| m.count(BACKGROUND, c)).sum();
        assert_eq!(block + bg_col, 4);
        assert_eq!(block + bg_row, 3);
        assert_eq!(m.count(BACKGROUND, BACKGROUND), 0);
    }

    #[test]
    fn normalized_columns_sum_to_one_when_populated() {
        let truths = [truth(ClassId::Bed, 50.0, 50.0, 0), truth(ClassId::Bed, 150.0, 50.0, 0)];
        let dets = [det(ClassId::Bed, 50.0, 50.0, 0.9, 0), det(ClassId::Staff, 150.0, 50.0, 0.8, 0)];
        let m = confusion_matrix(&dets, &truths, 0.25, 0.45);
        let norm = m.normalized_per_column();
        let col_sum: f64 = (0..5).map(|r| norm[r][0]).sum();
        assert!((col_sum - 1.0).abs() < 1e-12);
        // untouched columns stay zero
        assert!((0..5).all(|r| norm[r][2] == 0.0));
    }

    #[test]
    fn csv_reports_have_expected_shape() {
        let truths = [truth(ClassId::Bed, 50.0, 50.0, 0)];
        let dets = [det(ClassId::Bed, 50.0, 50.0, 0.9, 0)];
        let report = evaluate(&dets, &truths, 0.5);
        let mut buf = Vec::new();
        write_ap_report_csv(&mut buf, &report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("class,ap,gt_count,detections\nbed,1,1,1\nstaff,n/a,0,0\n"), "{text}");
        assert!(text.contains("mAP@0.5,1,,"));

        let m = confusion_matrix(&dets, &truths, 0.25, 0.45);
        let mut buf = Vec::new();
        write_confusion_csv(&mut buf, &m, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], "predicted\\truth,bed,staff,devices,patient,background");
        assert_eq!(lines[1], "bed,1,0,0,0,0");
    }
}
