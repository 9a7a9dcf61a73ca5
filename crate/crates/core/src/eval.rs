//! Prediction-to-ground-truth matching and detection metrics: per-class AP,
//! precision, recall, mAP, and mean +/- std summaries.
//!
//! Matching is class-aware and greedy: per frame and per class, predictions
//! sorted by descending ranking score claim the unclaimed ground-truth box
//! with the highest IoU at or above the threshold. Claimed predictions are
//! true positives, the rest false positives, and ground truths nobody
//! claims are false negatives — a missing detection costs recall.
//!
//! AP uses all-point interpolation (the area under the precision envelope),
//! see [`AP_INTERPOLATION`]. Point-estimate precision/recall are taken at an
//! operating confidence and summarized across classes both macro (mean +/-
//! population std, the headline numbers) and micro (pooled counts).

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

use crate::association::{build_tracklets, TrackletParams};
use crate::model::{Annotation, ClassRegistry, ModelError, Sequence};
use crate::voting::{relabel, LabeledDetection, VoteError, VoteScheme};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("sequence has no ground-truth annotations")]
    NoAnnotations,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Vote(#[from] VoteError),
}

/// Which interpolation the AP integral uses. All-point is the modern VOC
/// convention; the constant exists so an 11-point variant can be swapped in
/// for comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApInterpolation {
    AllPoint,
}

pub const AP_INTERPOLATION: ApInterpolation = ApInterpolation::AllPoint;

/// Scored match outcomes for one class: `(ranking_score, is_true_positive)`
/// entries in descending score order, plus the ground-truth count.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassEntries {
    pub entries: Vec<(f64, bool)>,
    pub gt_count: usize,
}

impl ClassEntries {
    pub fn tp_count(&self) -> usize {
        self.entries.iter().filter(|e| e.1).count()
    }

    pub fn fp_count(&self) -> usize {
        self.entries.len() - self.tp_count()
    }

    /// Ground truths no prediction claimed.
    pub fn fn_count(&self) -> usize {
        self.gt_count - self.tp_count()
    }
}

/// Per-class match outcomes for a whole sequence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub per_class: Vec<ClassEntries>,
}

/// Match labeled predictions against ground truth.
///
/// Predictions are visited in descending `rank_score` order (ties broken by
/// frame, then detection index, so input order never matters). Each one may
/// claim the unclaimed same-class, same-frame ground truth with the highest
/// IoU `>= iou_thresh`; IoU ties go to the lowest annotation index.
pub fn match_predictions(
    preds: &[LabeledDetection],
    gts: &[Annotation],
    num_classes: usize,
    iou_thresh: f64,
) -> MatchResult {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&preds[a], &preds[b]);
        pb.rank_score
            .partial_cmp(&pa.rank_score)
            .expect("rank scores are never NaN")
            .then(pa.frame.cmp(&pb.frame))
            .then(pa.det_index.cmp(&pb.det_index))
    });

    let mut claimed = vec![false; gts.len()];
    let mut result = MatchResult {
        per_class: vec![ClassEntries::default(); num_classes],
    };
    let mut buckets: std::collections::HashMap<(u64, usize), Vec<usize>> =
        std::collections::HashMap::new();
    for (gi, gt) in gts.iter().enumerate() {
        if gt.class_index < num_classes {
            result.per_class[gt.class_index].gt_count += 1;
            buckets
                .entry((gt.frame, gt.class_index))
                .or_default()
                .push(gi);
        }
    }

    static NO_CANDIDATES: &[usize] = &[];
    for &pi in &order {
        let pred = &preds[pi];
        if pred.voted_class >= num_classes {
            continue;
        }
        let candidates = buckets
            .get(&(pred.frame, pred.voted_class))
            .map(Vec::as_slice)
            .unwrap_or(NO_CANDIDATES);
        let mut best: Option<(f64, usize)> = None;
        for &gi in candidates {
            if claimed[gi] {
                continue;
            }
            let iou = pred.bbox.iou(&gts[gi].bbox);
            if iou < iou_thresh {
                continue;
            }
            if best.is_none_or(|(bi, _)| iou > bi) {
                best = Some((iou, gi));
            }
        }
        let is_tp = match best {
            Some((_, gi)) => {
                claimed[gi] = true;
                true
            }
            None => false,
        };
        result.per_class[pred.voted_class]
            .entries
            .push((pred.rank_score, is_tp));
    }
    result
}

/// Average precision by all-point interpolation.
///
/// Entries are stably sorted by descending score (equal scores keep their
/// input order), turned into a cumulative precision/recall curve, and the
/// area under the precision envelope is summed over recall increments.
/// Defined as 0 when there is no ground truth.
pub fn average_precision(entries: &[(f64, bool)], gt_count: usize) -> f64 {
    if gt_count == 0 || entries.is_empty() {
        return 0.0;
    }
    let mut sorted: Vec<(f64, bool)> = entries.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("scores are never NaN"));

    let mut points: Vec<(f64, f64)> = Vec::with_capacity(sorted.len()); // (recall, precision)
    let (mut tp, mut fp) = (0usize, 0usize);
    for (_, is_tp) in sorted {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        points.push((
            tp as f64 / gt_count as f64,
            tp as f64 / (tp + fp) as f64,
        ));
    }

    // precision envelope: max precision at or beyond each recall
    let mut envelope = vec![0.0f64; points.len()];
    let mut running = 0.0f64;
    for i in (0..points.len()).rev() {
        running = running.max(points[i].1);
        envelope[i] = running;
    }

    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (i, &(recall, _)) in points.iter().enumerate() {
        if recall > prev_recall {
            ap += (recall - prev_recall) * envelope[i];
            prev_recall = recall;
        }
    }
    ap
}

/// Metrics for one class of a [`MetricsReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub ap: f64,
    /// Precision over predictions with `rank_score >= operating_conf`;
    /// 0 when no prediction is retained.
    pub precision: f64,
    /// Recall over retained predictions; 0 when the class has no ground truth.
    pub recall: f64,
    pub gt_count: usize,
    pub predictions: usize,
}

/// Per-class AP/precision/recall plus mAP and across-class summaries.
/// The `_std` fields are population standard deviations across classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub map: f64,
    pub map_std: f64,
    pub precision_macro: f64,
    pub precision_std: f64,
    pub recall_macro: f64,
    pub recall_std: f64,
    /// Pooled-count variants of precision/recall.
    pub precision_micro: f64,
    pub recall_micro: f64,
    pub iou_thresh: f64,
    pub operating_conf: f64,
}

fn mean_and_pop_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Reduce match outcomes to a metrics report at the given operating point.
pub fn summarize(m: &MatchResult, iou_thresh: f64, operating_conf: f64) -> MetricsReport {
    let mut per_class = Vec::with_capacity(m.per_class.len());
    let (mut pooled_tp, mut pooled_fp, mut pooled_gt) = (0usize, 0usize, 0usize);
    for c in &m.per_class {
        let ap = average_precision(&c.entries, c.gt_count);
        let mut tp = 0usize;
        let mut fp = 0usize;
        for &(score, is_tp) in &c.entries {
            if score >= operating_conf {
                if is_tp {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let precision = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if c.gt_count == 0 {
            0.0
        } else {
            tp as f64 / c.gt_count as f64
        };
        pooled_tp += tp;
        pooled_fp += fp;
        pooled_gt += c.gt_count;
        per_class.push(ClassMetrics {
            ap,
            precision,
            recall,
            gt_count: c.gt_count,
            predictions: c.entries.len(),
        });
    }
    let aps: Vec<f64> = per_class.iter().map(|c| c.ap).collect();
    let precisions: Vec<f64> = per_class.iter().map(|c| c.precision).collect();
    let recalls: Vec<f64> = per_class.iter().map(|c| c.recall).collect();
    let (map, map_std) = mean_and_pop_std(&aps);
    let (precision_macro, precision_std) = mean_and_pop_std(&precisions);
    let (recall_macro, recall_std) = mean_and_pop_std(&recalls);
    MetricsReport {
        per_class,
        map,
        map_std,
        precision_macro,
        precision_std,
        recall_macro,
        recall_std,
        precision_micro: if pooled_tp + pooled_fp == 0 {
            0.0
        } else {
            pooled_tp as f64 / (pooled_tp + pooled_fp) as f64
        },
        recall_micro: if pooled_gt == 0 {
            0.0
        } else {
            pooled_tp as f64 / pooled_gt as f64
        },
        iou_thresh,
        operating_conf,
    }
}

/// Label every detection by its own argmax class (no temporal context) and
/// evaluate against the sequence's annotations.
pub fn evaluate_single_frame(
    s: &Sequence,
    num_classes: usize,
    iou_thresh: f64,
    operating_conf: f64,
) -> Result<MetricsReport, EvalError> {
    let gts = s.all_annotations();
    if gts.is_empty() {
        return Err(EvalError::NoAnnotations);
    }
    let mut labels = Vec::with_capacity(s.total_detections());
    for fr in &s.frames {
        for (di, det) in fr.detections.iter().enumerate() {
            let (class, score) = det.top_class()?;
            labels.push(LabeledDetection {
                frame: fr.frame,
                det_index: di,
                bbox: det.bbox,
                objectness: det.objectness,
                voted_class: class,
                vote_score: score,
                rank_score: det.objectness * score,
            });
        }
    }
    let matched = match_predictions(&labels, &gts, num_classes, iou_thresh);
    Ok(summarize(&matched, iou_thresh, operating_conf))
}

/// Build tracklets, vote identities, relabel, and evaluate. With
/// `max_len = 1` this degenerates to [`evaluate_single_frame`] exactly.
pub fn evaluate_multi_frame(
    s: &Sequence,
    num_classes: usize,
    params: &TrackletParams,
    scheme: VoteScheme,
    iou_thresh: f64,
    operating_conf: f64,
) -> Result<MetricsReport, EvalError> {
    let gts = s.all_annotations();
    if gts.is_empty() {
        return Err(EvalError::NoAnnotations);
    }
    let tracklets = build_tracklets(s, params);
    let labels = relabel(s, &tracklets, scheme)?;
    let matched = match_predictions(&labels, &gts, num_classes, iou_thresh);
    Ok(summarize(&matched, iou_thresh, operating_conf))
}

/// Mean of every metric across fold reports (cross-validation aggregate).
/// Returns `None` when the slice is empty or class counts differ.
pub fn aggregate_folds(reports: &[MetricsReport]) -> Option<MetricsReport> {
    let first = reports.first()?;
    let c = first.per_class.len();
    if reports.iter().any(|r| r.per_class.len() != c) {
        return None;
    }
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let per_class = (0..c)
        .map(|i| ClassMetrics {
            ap: reports.iter().map(|r| r.per_class[i].ap).sum::<f64>() / n,
            precision: reports.iter().map(|r| r.per_class[i].precision).sum::<f64>() / n,
            recall: reports.iter().map(|r| r.per_class[i].recall).sum::<f64>() / n,
            gt_count: reports.iter().map(|r| r.per_class[i].gt_count).sum(),
            predictions: reports.iter().map(|r| r.per_class[i].predictions).sum(),
        })
        .collect();
    Some(MetricsReport {
        per_class,
        map: mean(&|r| r.map),
        map_std: mean(&|r| r.map_std),
        precision_macro: mean(&|r| r.precision_macro),
        precision_std: mean(&|r| r.precision_std),
        recall_macro: mean(&|r| r.recall_macro),
        recall_std: mean(&|r| r.recall_std),
        precision_micro: mean(&|r| r.precision_micro),
        recall_micro: mean(&|r| r.recall_micro),
        iou_thresh: first.iou_thresh,
        operating_conf: first.operating_conf,
    })
}

impl MetricsReport {
    /// Flat `key=value` serialization, one metric per line.
    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "map={}", self.map);
        let _ = writeln!(out, "map_std={}", self.map_std);
        let _ = writeln!(out, "precision_macro={}", self.precision_macro);
        let _ = writeln!(out, "precision_std={}", self.precision_std);
        let _ = writeln!(out, "recall_macro={}", self.recall_macro);
        let _ = writeln!(out, "recall_std={}", self.recall_std);
        let _ = writeln!(out, "precision_micro={}", self.precision_micro);
        let _ = writeln!(out, "recall_micro={}", self.recall_micro);
        let _ = writeln!(out, "iou_thresh={}", self.iou_thresh);
        let _ = writeln!(out, "operating_conf={}", self.operating_conf);
        for (i, c) in self.per_class.iter().enumerate() {
            let _ = writeln!(out, "class.{i}.ap={}", c.ap);
            let _ = writeln!(out, "class.{i}.precision={}", c.precision);
            let _ = writeln!(out, "class.{i}.recall={}", c.recall);
            let _ = writeln!(out, "class.{i}.gt_count={}", c.gt_count);
            let _ = writeln!(out, "class.{i}.predictions={}", c.predictions);
        }
        out
    }
}

/// Render a report as the standard results table: one summary row under
/// `Detection / mAP / Precision / Recall` headers, then per-class lines.
/// Registry names label the classes when available.
pub fn render_table(label: &str, report: &MetricsReport, registry: Option<&ClassRegistry>) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:<17} {:<17} {:<17}",
        "Detection", "mAP", "Precision", "Recall"
    );
    let _ = writeln!(
        out,
        "{:<10} {:<17} {:<17} {:<17}",
        label,
        format!("{:.4} (± {:.4})", report.map, report.map_std),
        format!("{:.4} (± {:.4})", report.precision_macro, report.precision_std),
        format!("{:.4} (± {:.4})", report.recall_macro, report.recall_std),
    );
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<12} {:>8} {:>10} {:>8} {:>6} {:>7}",
        "Class", "AP", "Precision", "Recall", "GT", "Preds"
    );
    for (i, c) in report.per_class.iter().enumerate() {
        let name = registry
            .and_then(|r| r.name(i))
            .map(str::to_owned)
            .unwrap_or_else(|| i.to_string());
        let _ = writeln!(
            out,
            "{:<12} {:>8.4} {:>10.4} {:>8.4} {:>6} {:>7}",
            name, c.ap, c.precision, c.recall, c.gt_count, c.predictions
        );
    }
    let _ = writeln!(
        out,
        "\nmicro precision {:.4}  micro recall {:.4}  (iou {:.2}, conf {:.2})",
        report.precision_micro, report.recall_micro, report.iou_thresh, report.operating_conf
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use crate::model::{Detection, FrameRecord};
    use proptest::prelude::*;

    fn label(frame: u64, det_index: usize, bbox: BBox, class: usize, rank: f64) -> LabeledDetection {
        LabeledDetection {
            frame,
            det_index,
            bbox,
            objectness: 1.0,
            voted_class: class,
            vote_score: rank,
            rank_score: rank,
        }
    }

    fn ann(frame: u64, bbox: BBox, class: usize) -> Annotation {
        Annotation {
            frame,
            bbox,
            class_index: class,
        }
    }

    #[test]
    fn exact_match_is_tp() {
        let b = BBox::new(0.0, 0.0, 10.0, 10.0);
        let m = match_predictions(&[label(0, 0, b, 1, 0.9)], &[ann(0, b, 1)], 2, 0.5);
        assert_eq!(m.per_class[1].tp_count(), 1);
        assert_eq!(m.per_class[1].fp_count(), 0);
        assert_eq!(m.per_class[1].fn_count(), 0);
    }

    #[test]
    fn prediction_without_gt_is_fp() {
        let b = BBox::new(0.0, 0.0, 10.0, 10.0);
        let m = match_predictions(&[label(0, 0, b, 0, 0.9)], &[], 1, 0.5);
        assert_eq!(m.per_class[0].fp_count(), 1);
    }

    #[test]
    fn second_claim_on_same_gt_is_fp() {
        let gt = BBox::new(0.0, 0.0, 10.0, 10.0);
        let near = BBox::new(0.5, 0.0, 10.0, 10.0);
        let preds = vec![label(0, 0, near, 0, 0.9), label(0, 1, near, 0, 0.8)];
        let m = match_predictions(&preds, &[ann(0, gt, 0)], 1, 0.5);
        assert_eq!(m.per_class[0].tp_count(), 1);
        assert_eq!(m.per_class[0].fp_count(), 1);
        // the higher-scored prediction claimed it
        assert_eq!(m.per_class[0].entries[0], (0.9, true));
        assert_eq!(m.per_class[0].entries[1], (0.8, false));
    }

    #[test]
    fn missing_detection_is_fn() {
        let m = match_predictions(&[], &[ann(0, BBox::new(0.0, 0.0, 5.0, 5.0), 0)], 1, 0.5);
        assert_eq!(m.per_class[0].fn_count(), 1);
        assert_eq!(m.per_class[0].gt_count, 1);
    }

    #[test]
    fn class_mismatch_never_matches() {
        let b = BBox::new(0.0, 0.0, 10.0, 10.0);
        let m = match_predictions(&[label(0, 0, b, 0, 0.9)], &[ann(0, b, 1)], 2, 0.5);
        assert_eq!(m.per_class[0].fp_count(), 1);
        assert_eq!(m.per_class[1].fn_count(), 1);
    }

    #[test]
    fn ap_worked_example() {
        let entries = vec![(0.9, true), (0.8, false), (0.7, true)];
        let ap = average_precision(&entries, 2);
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn ap_perfect_detector() {
        let entries = vec![(0.9, true), (0.8, true), (0.7, true)];
        assert_eq!(average_precision(&entries, 3), 1.0);
    }

    #[test]
    fn ap_degenerate_cases() {
        assert_eq!(average_precision(&[], 3), 0.0);
        assert_eq!(average_precision(&[], 0), 0.0);
        assert_eq!(average_precision(&[(0.9, false)], 0), 0.0);
    }

    #[test]
    fn summarize_two_classes() {
        let m = MatchResult {
            per_class: vec![
                ClassEntries {
                    entries: vec![(0.9, true)],
                    gt_count: 1,
                },
                ClassEntries {
                    entries: vec![(0.9, true), (0.8, false)],
                    gt_count: 2,
                },
            ],
        };
        let r = summarize(&m, 0.5, 0.25);
        assert!((r.map - 0.75).abs() < 1e-12);
        assert!((r.map_std - 0.25).abs() < 1e-12);
    }

    #[test]
    fn summarize_single_class_std_zero() {
        let m = MatchResult {
            per_class: vec![ClassEntries {
                entries: vec![(0.9, true)],
                gt_count: 1,
            }],
        };
        let r = summarize(&m, 0.5, 0.25);
        assert_eq!(r.map_std, 0.0);
        assert_eq!(r.precision_std, 0.0);
    }

    #[test]
    fn precision_zero_when_nothing_retained() {
        let m = MatchResult {
            per_class: vec![ClassEntries {
                entries: vec![(0.1, true)],
                gt_count: 2,
            }],
        };
        let r = summarize(&m, 0.5, 0.25);
        assert_eq!(r.per_class[0].precision, 0.0);
        assert_eq!(r.per_class[0].recall, 0.0);
    }

    fn perfect_sequence(num_classes: usize, frames: u64) -> Sequence {
        Sequence::new(
            (0..frames)
                .map(|f| {
                    let mut detections = Vec::new();
                    let mut annotations = Vec::new();
                    for c in 0..num_classes {
                        let bbox = BBox::new(c as f64 * 50.0, 10.0, 20.0, 20.0);
                        let mut scores = vec![0.0; num_classes];
                        scores[c] = 1.0;
                        detections.push(Detection {
                            frame: f,
                            bbox,
                            objectness: 1.0,
                            scores,
                        });
                        annotations.push(ann(f, bbox, c));
                    }
                    FrameRecord {
                        frame: f,
                        image_size: None,
                        detections,
                        annotations,
                    }
                })
                .collect(),
        )
    }

    #[test]
    fn perfect_detections_reach_map_one() {
        let s = perfect_sequence(3, 4);
        let r = evaluate_single_frame(&s, 3, 0.5, 0.25).unwrap();
        assert_eq!(r.map, 1.0);
        assert_eq!(r.precision_macro, 1.0);
        assert_eq!(r.recall_macro, 1.0);
    }

    #[test]
    fn wrong_argmax_everywhere_gives_map_zero() {
        let mut s = perfect_sequence(3, 2);
        for fr in &mut s.frames {
            for d in &mut fr.detections {
                d.scores.rotate_left(1);
            }
        }
        let r = evaluate_single_frame(&s, 3, 0.5, 0.25).unwrap();
        assert_eq!(r.map, 0.0);
    }

    #[test]
    fn no_annotations_is_an_error() {
        let mut s = perfect_sequence(2, 2);
        for fr in &mut s.frames {
            fr.annotations.clear();
        }
        assert_eq!(
            evaluate_single_frame(&s, 2, 0.5, 0.25).unwrap_err(),
            EvalError::NoAnnotations
        );
    }

    #[test]
    fn multi_frame_with_max_len_one_equals_single_frame() {
        let s = perfect_sequence(3, 6);
        let single = evaluate_single_frame(&s, 3, 0.5, 0.25).unwrap();
        let p = TrackletParams::new(1, 1, 0.5).unwrap();
        let multi =
            evaluate_multi_frame(&s, 3, &p, VoteScheme::Average, 0.5, 0.25).unwrap();
        assert_eq!(single, multi);
    }

    #[test]
    fn average_vote_flips_an_outlier_frame() {
        // one static box over 5 frames; 4 frames argmax class 0 strongly,
        // 1 frame argmax class 1 weakly -> average vote labels all 5 class 0
        let bbox = BBox::new(0.0, 0.0, 20.0, 20.0);
        let frames: Vec<FrameRecord> = (0..5u64)
            .map(|f| {
                let scores = if f == 2 {
                    vec![0.45, 0.55]
                } else {
                    vec![0.9, 0.1]
                };
                FrameRecord {
                    frame: f,
                    image_size: None,
                    detections: vec![Detection {
                        frame: f,
                        bbox,
                        objectness: 1.0,
                        scores,
                    }],
                    annotations: vec![ann(f, bbox, 0)],
                }
            })
            .collect();
        let s = Sequence::new(frames);
        let r_single = evaluate_single_frame(&s, 2, 0.5, 0.25).unwrap();
        assert!(r_single.per_class[0].recall < 1.0);
        let p = TrackletParams::default();
        let r_multi =
            evaluate_multi_frame(&s, 2, &p, VoteScheme::Average, 0.5, 0.25).unwrap();
        assert_eq!(r_multi.per_class[0].recall, 1.0);
        assert_eq!(r_multi.map, 0.5); // class 1 has no GT: AP 0 by convention
    }

    #[test]
    fn aggregate_folds_means_metrics() {
        let m = MatchResult {
            per_class: vec![ClassEntries {
                entries: vec![(0.9, true)],
                gt_count: 1,
            }],
        };
        let r1 = summarize(&m, 0.5, 0.25);
        let agg = aggregate_folds(&[r1.clone(), r1.clone()]).unwrap();
        // identical folds aggregate to the same metrics (counts pool)
        assert_eq!(agg.map, r1.map);
        assert_eq!(agg.map_std, r1.map_std);
        assert_eq!(agg.precision_macro, r1.precision_macro);
        assert_eq!(agg.recall_macro, r1.recall_macro);
        assert_eq!(agg.per_class[0].ap, r1.per_class[0].ap);
        assert_eq!(agg.per_class[0].gt_count, 2 * r1.per_class[0].gt_count);

        let mut r2 = r1.clone();
        r2.map = 0.9;
        let agg = aggregate_folds(&[r1.clone(), r2]).unwrap();
        assert!((agg.map - (r1.map + 0.9) / 2.0).abs() < 1e-12);

        assert!(aggregate_folds(&[]).is_none());
    }

    #[test]
    fn five_fold_mean_matches_hand_computation() {
        // one fold report per (TP at rank 1 out of gt entries) pattern:
        // APs 1, 1, 1/2, 1/3, 1/4 -> mean 0.61666...
        let fold_aps = [1.0, 1.0, 0.5, 1.0 / 3.0, 0.25];
        let reports: Vec<MetricsReport> = [1usize, 1, 2, 3, 4]
            .iter()
            .map(|&gt| {
                summarize(
                    &MatchResult {
                        per_class: vec![ClassEntries {
                            entries: vec![(0.9, true)],
                            gt_count: gt,
                        }],
                    },
                    0.5,
                    0.25,
                )
            })
            .collect();
        for (r, ap) in reports.iter().zip(fold_aps) {
            assert!((r.map - ap).abs() < 1e-12);
        }
        let agg = aggregate_folds(&reports).unwrap();
        let want = fold_aps.iter().sum::<f64>() / 5.0;
        assert!((agg.map - want).abs() < 1e-12);
        assert!((agg.recall_macro - (1.0 + 1.0 + 0.5 + 1.0 / 3.0 + 0.25) / 5.0).abs() < 1e-12);
    }

    #[test]
    fn kv_text_round_trips_shortest_floats() {
        let m = MatchResult {
            per_class: vec![ClassEntries {
                entries: vec![(0.9, true), (0.7, false)],
                gt_count: 2,
            }],
        };
        let r = summarize(&m, 0.5, 0.25);
        let kv = r.to_kv_text();
        assert!(kv.contains("map=0.5\n"));
        assert!(kv.contains("class.0.gt_count=2\n"));
    }

    #[test]
    fn teleporting_boxes_reduce_to_single_frame() {
        // boxes jump every frame, so every tracklet is a singleton and the
        // multi-frame report collapses to the single-frame one
        let frames: Vec<FrameRecord> = (0..6u64)
            .map(|f| {
                let bbox = BBox::new((f as f64 * 97.0) % 300.0, (f as f64 * 53.0) % 200.0, 8.0, 8.0);
                let scores = vec![0.2 + 0.1 * (f % 3) as f64, 0.5, 0.3];
                FrameRecord {
                    frame: f,
                    image_size: None,
                    detections: vec![Detection {
                        frame: f,
                        bbox,
                        objectness: 0.9,
                        scores,
                    }],
                    annotations: vec![ann(f, bbox, (f % 3) as usize)],
                }
            })
            .collect();
        let s = Sequence::new(frames);
        let single = evaluate_single_frame(&s, 3, 0.5, 0.25).unwrap();
        let multi = evaluate_multi_frame(&s, 3, &TrackletParams::default(), VoteScheme::Maximum, 0.5, 0.25)
            .unwrap();
        assert_eq!(single, multi);
    }

    /// Straight-line reference evaluator: per frame and class, rank that
    /// bucket's predictions and claim ground truths by best IoU, then
    /// compute AP with the prefix-scanning reference and plain means.
    fn single_frame_reference(
        s: &Sequence,
        num_classes: usize,
        iou_thresh: f64,
        conf: f64,
    ) -> MetricsReport {
        let mut per_class = vec![ClassEntries::default(); num_classes];
        for fr in &s.frames {
            for (class, bucket) in per_class.iter_mut().enumerate() {
                let mut preds: Vec<(f64, usize)> = fr
                    .detections
                    .iter()
                    .enumerate()
                    .filter(|(_, d)| d.top_class().unwrap().0 == class)
                    .map(|(di, d)| (d.objectness * d.top_class().unwrap().1, di))
                    .collect();
                preds.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
                let gts: Vec<usize> = fr
                    .annotations
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| a.class_index == class)
                    .map(|(ai, _)| ai)
                    .collect();
                bucket.gt_count += gts.len();
                let mut claimed: Vec<bool> = vec![false; gts.len()];
                for (rank, di) in preds {
                    let mut best: Option<(f64, usize)> = None;
                    for (slot, &ai) in gts.iter().enumerate() {
                        if claimed[slot] {
                            continue;
                        }
                        let iou = fr.detections[di].bbox.iou(&fr.annotations[ai].bbox);
                        if iou >= iou_thresh && best.is_none_or(|(b, _)| iou > b) {
                            best = Some((iou, slot));
                        }
                    }
                    if let Some((_, slot)) = best {
                        claimed[slot] = true;
                        bucket.entries.push((rank, true));
                    } else {
                        bucket.entries.push((rank, false));
                    }
                }
            }
        }
        // collect scores across frames sorted globally per class
        for c in &mut per_class {
            c.entries
                .sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        }
        summarize(&MatchResult { per_class }, iou_thresh, conf)
    }

    proptest! {
        #[test]
        fn single_frame_evaluator_matches_reference(
            raw in proptest::collection::vec(
                (0.0..80.0f64, 0.0..80.0f64, 6.0..24.0f64, 6.0..24.0f64,
                 0usize..3, 0.3..1.0f64, any::<bool>()),
                1..14),
        ) {
            // lay detections and annotations over 3 frames; every other raw
            // row also plants a ground truth near the detection
            let mut frames: Vec<FrameRecord> = (0..3u64)
                .map(|f| FrameRecord { frame: f, ..Default::default() })
                .collect();
            for (i, &(x, y, w, h, class, conf, make_gt)) in raw.iter().enumerate() {
                let f = (i % 3) as u64;
                let mut scores = vec![0.1; 3];
                scores[class] = conf;
                frames[i % 3].detections.push(Detection {
                    frame: f,
                    bbox: BBox::new(x, y, w, h),
                    objectness: 0.9,
                    scores,
                });
                if make_gt {
                    frames[i % 3].annotations.push(ann(
                        f,
                        BBox::new(x + 1.0, y, w, h),
                        (class + i / 3) % 3,
                    ));
                }
            }
            let s = Sequence::new(frames);
            prop_assume!(s.total_annotations() > 0);
            let got = evaluate_single_frame(&s, 3, 0.5, 0.25).unwrap();
            let want = single_frame_reference(&s, 3, 0.5, 0.25);
            prop_assert!((got.map - want.map).abs() < 1e-12,
                         "map {} vs reference {}", got.map, want.map);
            prop_assert!((got.precision_macro - want.precision_macro).abs() < 1e-12);
            prop_assert!((got.recall_macro - want.recall_macro).abs() < 1e-12);
            for (g, w) in got.per_class.iter().zip(&want.per_class) {
                prop_assert!((g.ap - w.ap).abs() < 1e-12);
                prop_assert_eq!(g.gt_count, w.gt_count);
            }
        }
    }

    /// Independent AP reference: for each achievable TP level k, scan every
    /// prefix of the entry list for the best precision reaching at least k
    /// true positives, and sum those maxima over recall steps of 1/gt.
    fn ap_brute_force(entries: &[(f64, bool)], gt_count: usize) -> f64 {
        if gt_count == 0 || entries.is_empty() {
            return 0.0;
        }
        let mut sorted: Vec<(f64, bool)> = entries.to_vec();
        sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let mut ap = 0.0;
        for k in 1..=gt_count {
            let mut best = 0.0f64;
            let mut tp = 0usize;
            for (i, &(_, is_tp)) in sorted.iter().enumerate() {
                if is_tp {
                    tp += 1;
                }
                if tp >= k {
                    best = best.max(tp as f64 / (i + 1) as f64);
                }
            }
            ap += best / gt_count as f64;
        }
        ap
    }

    proptest! {
        #[test]
        fn ap_matches_brute_force(
            flags in proptest::collection::vec(any::<bool>(), 0..20),
            scores in proptest::collection::vec(0.0..1.0f64, 20),
            gt_extra in 0usize..5,
        ) {
            let entries: Vec<(f64, bool)> = flags
                .iter()
                .zip(&scores)
                .map(|(&tp, &s)| ((s * 50.0).round() / 50.0, tp))
                .collect();
            let tp_total = entries.iter().filter(|e| e.1).count();
            let gt = tp_total + gt_extra;
            prop_assert!((average_precision(&entries, gt) - ap_brute_force(&entries, gt)).abs() < 1e-9);
        }

        #[test]
        fn adding_fp_never_raises_ap(
            flags in proptest::collection::vec(any::<bool>(), 1..15),
            scores in proptest::collection::vec(0.01..1.0f64, 15),
            fp_score in 0.0..1.0f64,
        ) {
            let entries: Vec<(f64, bool)> = flags.iter().zip(&scores).map(|(&t, &s)| (s, t)).collect();
            let gt = entries.iter().filter(|e| e.1).count().max(1);
            let base = average_precision(&entries, gt);
            let mut more = entries.clone();
            more.push((fp_score, false));
            prop_assert!(average_precision(&more, gt) <= base + 1e-12);
        }

        #[test]
        fn top_rank_tp_never_lowers_ap(
            flags in proptest::collection::vec(any::<bool>(), 1..15),
            scores in proptest::collection::vec(0.0..0.9f64, 15),
        ) {
            let entries: Vec<(f64, bool)> = flags.iter().zip(&scores).map(|(&t, &s)| (s, t)).collect();
            let gt = entries.iter().filter(|e| e.1).count() + 1;
            let base = average_precision(&entries, gt);
            let mut more = entries.clone();
            more.push((0.95, true));
            prop_assert!(average_precision(&more, gt) >= base - 1e-12);
        }

        #[test]
        fn match_is_input_order_independent(
            raw in proptest::collection::vec(
                (0u64..3, 0.0..40.0f64, 0.0..40.0f64, 5.0..20.0f64, 5.0..20.0f64,
                 0usize..3, 0.0..1.0f64),
                0..12),
            swap_seed in any::<u64>(),
        ) {
            let preds: Vec<LabeledDetection> = raw
                .iter()
                .enumerate()
                .map(|(i, &(f, x, y, w, h, c, r))| label(f, i, BBox::new(x, y, w, h), c, r))
                .collect();
            let gts: Vec<Annotation> = raw
                .iter()
                .step_by(2)
                .map(|&(f, x, y, w, h, c, _)| ann(f, BBox::new(x + 1.0, y, w, h), c))
                .collect();
            let forward = match_predictions(&preds, &gts, 3, 0.5);
            let mut shuffled = preds.clone();
            if shuffled.len() > 1 {
                let k = (swap_seed as usize) % shuffled.len();
                shuffled.rotate_left(k);
            }
            let rotated = match_predictions(&shuffled, &gts, 3, 0.5);
            for c in 0..3 {
                prop_assert_eq!(forward.per_class[c].tp_count(), rotated.per_class[c].tp_count());
                prop_assert_eq!(forward.per_class[c].fp_count(), rotated.per_class[c].fp_count());
            }
        }

        #[test]
        fn metrics_stay_in_unit_interval(
            raw in proptest::collection::vec(
                (0u64..4, 0.0..60.0f64, 0.0..60.0f64, 4.0..20.0f64, 4.0..20.0f64,
                 0usize..4, 0.0..1.0f64),
                0..16),
        ) {
            let preds: Vec<LabeledDetection> = raw
                .iter()
                .enumerate()
                .map(|(i, &(f, x, y, w, h, c, r))| label(f, i, BBox::new(x, y, w, h), c, r))
                .collect();
            let gts: Vec<Annotation> = raw
                .iter()
                .skip(1)
                .step_by(2)
                .map(|&(f, x, y, w, h, c, _)| ann(f, BBox::new(x, y, w, h), c))
                .collect();
            let r = summarize(&match_predictions(&preds, &gts, 4, 0.5), 0.5, 0.25);
            for v in [r.map, r.map_std, r.precision_macro, r.recall_macro,
                      r.precision_micro, r.recall_micro] {
                prop_assert!((0.0..=1.0).contains(&v), "metric {} out of range", v);
            }
            for c in &r.per_class {
                prop_assert!((0.0..=1.0).contains(&c.ap));
                prop_assert!((0.0..=1.0).contains(&c.precision));
                prop_assert!((0.0..=1.0).contains(&c.recall));
            }
        }
    }
}
