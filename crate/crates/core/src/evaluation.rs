//! AP at IoU 0.5 per video for the drone class, plus the unweighted
//! cross-video average. Matching is greedy by score with single-use ground
//! truth; AP uses the all-points precision envelope by default.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::geometry::{BoundingBox, Detection, Label};
use crate::temporal::VideoDetections;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("detections reference video {0:?} with no ground truth")]
    UnknownVideo(String),
}

/// Annotated true drone boxes for one video.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub video_id: String,
    pub entries: BTreeMap<u64, Vec<BoundingBox>>,
}

impl GroundTruth {
    pub fn new(video_id: impl Into<String>) -> Self {
        Self {
            video_id: video_id.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn n_boxes(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn boxes_at(&self, frame: u64) -> &[BoundingBox] {
        self.entries.get(&frame).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApInterpolation {
    /// Area under the full precision envelope (default).
    AllPoints,
    /// Mean of the envelope sampled at recalls 0.0, 0.1, ..., 1.0.
    ElevenPoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VideoScore {
    pub ap50: f64,
    pub tp: usize,
    pub fp: usize,
    pub missed: usize,
    pub n_gt: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_video: BTreeMap<String, VideoScore>,
    pub average_ap50: f64,
}

impl EvalReport {
    /// CSV with one row per video and a final average row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("video,ap50,tp,fp,fn,n_gt\n");
        let mut totals = (0usize, 0usize, 0usize, 0usize);
        for (video, s) in &self.per_video {
            out.push_str(&format!(
                "{video},{:.4},{},{},{},{}\n",
                s.ap50, s.tp, s.fp, s.missed, s.n_gt
            ));
            totals = (
                totals.0 + s.tp,
                totals.1 + s.fp,
                totals.2 + s.missed,
                totals.3 + s.n_gt,
            );
        }
        out.push_str(&format!(
            "average,{:.4},{},{},{},{}\n",
            self.average_ap50, totals.0, totals.1, totals.2, totals.3
        ));
        out
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<40} {:>8} {:>6} {:>6} {:>6} {:>6}", "video", "ap50", "tp", "fp", "fn", "n_gt")?;
        for (video, s) in &self.per_video {
            writeln!(
                f,
                "{:<40} {:>8.4} {:>6} {:>6} {:>6} {:>6}",
                video, s.ap50, s.tp, s.fp, s.missed, s.n_gt
            )?;
        }
        write!(f, "{:<40} {:>8.4}", "average", self.average_ap50)
    }
}

/// Greedy matching for a single frame: detections visited in descending score
/// order claim the unmatched ground-truth box with the highest IoU >= iou_min.
/// Returns one TP/FP flag per input detection, in input order.
pub fn match_detections(dets: &[Detection], gts: &[BoundingBox], iou_min: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[a].cmp_canonical(&dets[b]));
    let mut gt_taken = vec![false; gts.len()];
    let mut flags = vec![false; dets.len()];
    for i in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt_taken[g] {
                continue;
            }
            let v = dets[i].bbox.iou(gt);
            if v >= iou_min && best.map_or(true, |(_, bv)| v > bv) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            gt_taken[g] = true;
            flags[i] = true;
        }
    }
    flags
}

/// Average precision from scored TP/FP outcomes.
///
/// Outcomes are ranked by descending score with FP ordered before TP on score
/// ties, so reported AP is a lower bound under ambiguity. With no ground
/// truth, AP is 1 for an empty detection set and 0 otherwise.
pub fn average_precision(
    outcomes: &[(f64, bool)],
    n_gt: usize,
    interp: ApInterpolation,
) -> f64 {
    if n_gt == 0 {
        return if outcomes.is_empty() { 1.0 } else { 0.0 };
    }
    let mut ranked = outcomes.to_vec();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(ranked.len()); // (recall, precision)
    for (_, is_tp) in ranked {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        points.push((tp as f64 / n_gt as f64, tp as f64 / (tp + fp) as f64));
    }

    // precision envelope: max precision at recall >= r
    let mut envelope = vec![0.0f64; points.len()];
    let mut running = 0.0f64;
    for i in (0..points.len()).rev() {
        running = running.max(points[i].1);
        envelope[i] = running;
    }

    match interp {
        ApInterpolation::AllPoints => {
            let mut ap = 0.0;
            let mut prev_recall = 0.0;
            for (i, (recall, _)) in points.iter().enumerate() {
                if *recall > prev_recall {
                    ap += (recall - prev_recall) * envelope[i];
                    prev_recall = *recall;
                }
            }
            ap
        }
        ApInterpolation::ElevenPoint => {
            let mut sum = 0.0;
            for k in 0..=10 {
                let r = f64::from(k) / 10.0;
                let p = points
                    .iter()
                    .zip(&envelope)
                    .find(|((recall, _), _)| *recall >= r - 1e-12)
                    .map(|(_, e)| *e)
                    .unwrap_or(0.0);
                sum += p;
            }
            sum / 11.0
        }
    }
}

/// Scores one video's detections (drone class only) against its ground truth.
pub fn score_video(
    dets: Option<&VideoDetections>,
    gt: &GroundTruth,
    iou_min: f64,
    interp: ApInterpolation,
) -> VideoScore {
    let n_gt = gt.n_boxes();
    let mut outcomes: Vec<(f64, bool)> = Vec::new();
    if let Some(v) = dets {
        for (frame, frame_dets) in &v.frames {
            let drones: Vec<Detection> = frame_dets
                .iter()
                .filter(|d| d.label == Label::Drone)
                .copied()
                .collect();
            if drones.is_empty() {
                continue;
            }
            let flags = match_detections(&drones, gt.boxes_at(*frame), iou_min);
            outcomes.extend(drones.iter().zip(flags).map(|(d, f)| (d.score, f)));
        }
    }
    let tp = outcomes.iter().filter(|(_, f)| *f).count();
    let fp = outcomes.len() - tp;
    VideoScore {
        ap50: average_precision(&outcomes, n_gt, interp),
        tp,
        fp,
        missed: n_gt - tp,
        n_gt,
    }
}

/// Per-video AP plus the unweighted average across ground-truth videos.
/// Every detection video must have a ground-truth entry; GT videos without
/// detections score all-FN.
pub fn evaluate(
    detections: &BTreeMap<String, VideoDetections>,
    ground_truth: &BTreeMap<String, GroundTruth>,
    iou_min: f64,
    interp: ApInterpolation,
) -> Result<EvalReport, EvalError> {
    for video in detections.keys() {
        if !ground_truth.contains_key(video) {
            return Err(EvalError::UnknownVideo(video.clone()));
        }
    }
    let mut per_video = BTreeMap::new();
    for (video, gt) in ground_truth {
        per_video.insert(
            video.clone(),
            score_video(detections.get(video), gt, iou_min, interp),
        );
    }
    let average_ap50 = if per_video.is_empty() {
        0.0
    } else {
        per_video.values().map(|s| s.ap50).sum::<f64>() / per_video.len() as f64
    };
    Ok(EvalReport {
        per_video,
        average_ap50,
    })
}

#[cfg(test)]
pub mod oracle {
    //! Brute-force AP reference used by tests: enumerates every ranked cutoff,
    //! then integrates the exact max-precision envelope over the recall
    //! breakpoints. Independent of the streaming implementation above.

    pub fn ap_by_threshold_enumeration(outcomes: &[(f64, bool)], n_gt: usize) -> f64 {
        if n_gt == 0 {
            return if outcomes.is_empty() { 1.0 } else { 0.0 };
        }
        let mut ranked = outcomes.to_vec();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut prs: Vec<(f64, f64)> = Vec::new();
        for k in 1..=ranked.len() {
            let tp = ranked[..k].iter().filter(|(_, f)| *f).count();
            prs.push((tp as f64 / n_gt as f64, tp as f64 / k as f64));
        }
        let mut recalls: Vec<f64> = prs.iter().map(|(r, _)| *r).filter(|r| *r > 0.0).collect();
        recalls.sort_by(f64::total_cmp);
        recalls.dedup();
        let mut ap = 0.0;
        let mut prev = 0.0;
        for r in recalls {
            let best = prs
                .iter()
                .filter(|(rr, _)| *rr >= r)
                .map(|(_, p)| *p)
                .fold(0.0f64, f64::max);
            ap += (r - prev) * best;
            prev = r;
        }
        ap
    }
}
