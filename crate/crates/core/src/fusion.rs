//! Per-frame aggregation of detections from the full frame and the corner
//! tiles: remap to frame space, clip, confidence-filter, deduplicate with NMS
//! and finally drop classes that are not reported.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::geometry::{nms_mode, remap, Detection, Label, NmsMode, Source};
use crate::tiling::TilePlan;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("detections from window {0:?} not present in the tile plan")]
    UnknownWindow(String),
    #[error("invalid fusion config: {0}")]
    InvalidConfig(String),
}

/// Thresholds and reporting policy for the fusion stage.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    /// IoU at or above which a lower-scoring same-class detection is dropped.
    pub nms_iou: f64,
    /// Minimum confidence for a backend detection to survive fusion.
    pub score_threshold: f64,
    /// Classes kept in the fused output; birds participate in NMS either way.
    pub report_labels: Vec<Label>,
    pub nms_mode: NmsMode,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            nms_iou: 0.1,
            score_threshold: 0.375,
            report_labels: vec![Label::Drone],
            nms_mode: NmsMode::ClassAware,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        for (name, v) in [("nms_iou", self.nms_iou), ("score_threshold", self.score_threshold)] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(FusionError::InvalidConfig(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Fuses one frame's per-window detections into a single frame-space set.
///
/// Pipeline order is fixed: remap + clip, score filter, NMS over the pooled
/// set, report-class filter. The result is sorted by descending score with a
/// deterministic tie-break, so it does not depend on the order in which
/// sources were collected.
pub fn fuse_frame(
    per_source: &BTreeMap<Source, Vec<Detection>>,
    plan: &TilePlan,
    cfg: &FusionConfig,
) -> Result<Vec<Detection>, FusionError> {
    cfg.validate()?;
    let mut pooled = Vec::new();
    for (src, dets) in per_source {
        let window = plan
            .window_for(*src)
            .ok_or_else(|| FusionError::UnknownWindow(src.to_string()))?;
        for d in dets {
            let mut m = remap(d, window.origin_x, window.origin_y);
            m.source = *src;
            // clip before NMS so cross-boundary duplicates overlap in frame space
            m.bbox = m.bbox.clip(plan.frame_width, plan.frame_height);
            if m.score >= cfg.score_threshold {
                pooled.push(m);
            }
        }
    }
    let kept = nms_mode(&pooled, cfg.nms_iou, cfg.nms_mode);
    let mut out: Vec<Detection> = kept
        .into_iter()
        .filter(|d| cfg.report_labels.contains(&d.label))
        .collect();
    out.sort_by(|a, b| a.cmp_canonical(b));
    Ok(out)
}
