//! Temporal gap filling over a fused per-video timeline.
//!
//! A detection missed at frame `t` is reconstructed by linearly interpolating
//! between a matching pair of detections that bracket `t` within a window of
//! timeline positions on each side. Interpolated boxes carry a discounted
//! confidence and never seed further interpolation.

use std::collections::BTreeMap;

use crate::geometry::{BoundingBox, Detection, Label, Source};

/// Ordered per-frame detection sets for one video. Frames the pipeline
/// processed are all present, possibly with empty lists; interpolation only
/// ever fills frames that exist in the map.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoDetections {
    pub video_id: String,
    pub frame_width: f64,
    pub frame_height: f64,
    /// 1 when every frame was processed, 5 under the usual subsampling.
    pub frame_stride: u64,
    pub frames: BTreeMap<u64, Vec<Detection>>,
}

impl VideoDetections {
    pub fn new(video_id: impl Into<String>, frame_width: f64, frame_height: f64) -> Self {
        Self {
            video_id: video_id.into(),
            frame_width,
            frame_height,
            frame_stride: 1,
            frames: BTreeMap::new(),
        }
    }

    pub fn total_detections(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    pub fn iter_all(&self) -> impl Iterator<Item = &Detection> {
        self.frames.values().flatten()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalConfig {
    /// Bracketing search range, counted in timeline positions per side.
    pub window: usize,
    /// Minimum IoU between the two endpoints of a candidate pair, and between
    /// an endpoint and an existing same-label detection at the target frame.
    pub match_iou: f64,
    /// Fraction of max(frame_w, frame_h); boxes closer than this to any edge
    /// are discarded instead of interpolated.
    pub border_margin: f64,
    /// An interpolated box is rejected when it overlaps anything already
    /// present at the target frame at or above this IoU.
    pub veto_iou: f64,
    /// The mean endpoint confidence is divided by this factor.
    pub confidence_divisor: f64,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        Self {
            window: 6,
            match_iou: 0.1,
            border_margin: 0.02,
            veto_iou: 0.3,
            confidence_divisor: 2.0,
        }
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

fn lerp_box(a: &BoundingBox, b: &BoundingBox, t: f64) -> BoundingBox {
    BoundingBox {
        x1: lerp(a.x1, b.x1, t),
        y1: lerp(a.y1, b.y1, t),
        x2: lerp(a.x2, b.x2, t),
        y2: lerp(a.y2, b.y2, t),
    }
}

/// Fills detection gaps in a complete timeline. Original detections are never
/// modified or removed; running the operation twice adds nothing new.
pub fn interpolate_gaps(v: &VideoDetections, cfg: &TemporalConfig) -> VideoDetections {
    let frames: Vec<(u64, &Vec<Detection>)> = v.frames.iter().map(|(k, d)| (*k, d)).collect();
    let n = frames.len();
    let margin = cfg.border_margin * v.frame_width.max(v.frame_height);
    let mut additions: Vec<Vec<Detection>> = vec![Vec::new(); n];

    for p in 0..n {
        let (t, existing) = frames[p];
        let mut proposals: Vec<Detection> = Vec::new();

        for label in [Label::Drone, Label::Bird] {
            let matched_at_t = |b: &BoundingBox| {
                existing
                    .iter()
                    .any(|e| e.label == label && e.bbox.iou(b) >= cfg.match_iou)
            };

            // Candidate endpoints per side: original detections only, and only
            // objects that are actually missing at the target frame.
            let collect = |positions: &mut dyn Iterator<Item = usize>| {
                let mut side: Vec<(usize, u64, Detection)> = Vec::new();
                for (dist, q) in positions.enumerate() {
                    let (tq, dets) = frames[q];
                    for d in dets {
                        if d.label == label
                            && d.source != Source::Interpolated
                            && !matched_at_t(&d.bbox)
                        {
                            side.push((dist + 1, tq, *d));
                        }
                    }
                }
                // nearest frame first, then highest score
                side.sort_by(|a, b| a.0.cmp(&b.0).then(a.2.cmp_canonical(&b.2)));
                side
            };

            let back = collect(&mut (1..=cfg.window).filter(|a| *a <= p).map(|a| p - a));
            let fwd = collect(&mut (1..=cfg.window).filter(|b| p + *b < n).map(|b| p + b));

            // One pair per object: when a pair forms, every remaining
            // candidate matching either endpoint is the same track seen at
            // another frame, so it is consumed along with the endpoints.
            let mut back_used = vec![false; back.len()];
            let mut fwd_used = vec![false; fwd.len()];
            for bi in 0..back.len() {
                if back_used[bi] {
                    continue;
                }
                let (_, t_minus, d_minus) = back[bi];
                let chosen = fwd.iter().enumerate().find(|(j, (_, _, d_plus))| {
                    !fwd_used[*j] && d_minus.bbox.iou(&d_plus.bbox) >= cfg.match_iou
                });
                let Some((_, &(_, t_plus, d_plus))) = chosen else {
                    continue;
                };
                let same_object = |cand: &Detection| {
                    cand.bbox.iou(&d_minus.bbox) >= cfg.match_iou
                        || cand.bbox.iou(&d_plus.bbox) >= cfg.match_iou
                };
                for (k, (_, _, cand)) in back.iter().enumerate() {
                    if !back_used[k] && same_object(cand) {
                        back_used[k] = true;
                    }
                }
                for (k, (_, _, cand)) in fwd.iter().enumerate() {
                    if !fwd_used[k] && same_object(cand) {
                        fwd_used[k] = true;
                    }
                }
                let ratio = (t - t_minus) as f64 / (t_plus - t_minus) as f64;
                proposals.push(Detection {
                    bbox: lerp_box(&d_minus.bbox, &d_plus.bbox, ratio),
                    label,
                    score: (d_minus.score + d_plus.score) / 2.0 / cfg.confidence_divisor,
                    frame: t,
                    source: Source::Interpolated,
                });
            }
        }

        proposals.sort_by(|a, b| a.cmp_canonical(b));
        let accepted = &mut additions[p];
        for prop in proposals {
            // zero-area boxes cannot be veto-checked (IoU is 0 against anything)
            if prop.bbox.area() <= 0.0 {
                continue;
            }
            let b = &prop.bbox;
            let clear_of_borders = b.x1 >= margin
                && b.y1 >= margin
                && v.frame_width - b.x2 >= margin
                && v.frame_height - b.y2 >= margin;
            if !clear_of_borders {
                continue;
            }
            let vetoed = existing
                .iter()
                .chain(accepted.iter())
                .any(|e| e.bbox.iou(b) >= cfg.veto_iou);
            if !vetoed {
                accepted.push(prop);
            }
        }
    }

    let mut out = v.clone();
    for (p, extra) in additions.into_iter().enumerate() {
        if !extra.is_empty() {
            out.frames
                .get_mut(&frames[p].0)
                .expect("frame key exists")
                .extend(extra);
        }
    }
    out
}
