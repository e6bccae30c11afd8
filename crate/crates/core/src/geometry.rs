//! Core box arithmetic: IoU, clipping, coordinate remapping and non-maximum
//! suppression. Everything downstream (tiling, fusion, temporal filling,
//! evaluation) is built on these primitives.
//!
//! Boxes use the exclusive-edge convention: `(x1, y1)` is the top-left corner,
//! `(x2, y2)` is one past the bottom-right, so `width = x2 - x1` with no ±1
//! pixel ambiguity. Coordinates are continuous; zero-area boxes are legal.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("invalid box ({x1}, {y1}, {x2}, {y2}): {reason}")]
    InvalidBox {
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        reason: &'static str,
    },
    #[error("score {0} outside [0, 1]")]
    InvalidScore(f64),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("unknown source {0:?}")]
    UnknownSource(String),
}

/// Axis-aligned rectangle in pixel space, origin at the top-left of the frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoundingBox {
    /// Builds a box, rejecting negative extents and non-finite coordinates.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidBox {
                x1,
                y1,
                x2,
                y2,
                reason: "non-finite coordinate",
            });
        }
        if x2 < x1 || y2 < y1 {
            return Err(GeometryError::InvalidBox {
                x1,
                y1,
                x2,
                y2,
                reason: "negative extent",
            });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Top-left corner plus size, the layout used by every on-disk format.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        if w < 0.0 || h < 0.0 {
            return Err(GeometryError::InvalidBox {
                x1: x,
                y1: y,
                x2: x + w,
                y2: y + h,
                reason: "negative size",
            });
        }
        Self::new(x, y, x + w, y + h)
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn intersection_area(&self, other: &Self) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    /// Intersection over union. Returns 0 when the union has no area.
    pub fn iou(&self, other: &Self) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }

    /// Intersects the box with `[0, width] x [0, height]`. A box entirely
    /// outside degenerates to a zero-area box on the nearest edge.
    pub fn clip(&self, width: f64, height: f64) -> Self {
        let x1 = self.x1.clamp(0.0, width);
        let y1 = self.y1.clamp(0.0, height);
        Self {
            x1,
            y1,
            x2: self.x2.clamp(x1, width),
            y2: self.y2.clamp(y1, height),
        }
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }
}

/// Convenience wrapper over [`BoundingBox::iou`].
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.iou(b)
}

/// The two classes the detector is trained on. Only drones are reported by
/// default; birds survive until the fusion stage filters them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Drone,
    Bird,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Drone => "drone",
            Label::Bird => "bird",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "drone" => Ok(Label::Drone),
            "bird" => Ok(Label::Bird),
            other => Err(GeometryError::UnknownLabel(other.to_string())),
        }
    }
}

/// Which crop window produced a detection. `Interpolated` is reserved for the
/// temporal module; backends never emit it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    Full,
    Tile(u8),
    Interpolated,
}

impl Source {
    /// Stable small integer used for ordering and seed derivation.
    pub fn ordinal(&self) -> u64 {
        match self {
            Source::Full => 0,
            Source::Tile(i) => 1 + u64::from(*i),
            Source::Interpolated => 5,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Full => f.write_str("full"),
            Source::Tile(i) => write!(f, "tile{i}"),
            Source::Interpolated => f.write_str("interpolated"),
        }
    }
}

impl FromStr for Source {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Source::Full),
            "interpolated" => Ok(Source::Interpolated),
            other => {
                if let Some(idx) = other.strip_prefix("tile") {
                    if let Ok(i) = idx.parse::<u8>() {
                        if i < 4 {
                            return Ok(Source::Tile(i));
                        }
                    }
                }
                Err(GeometryError::UnknownSource(other.to_string()))
            }
        }
    }
}

/// A labeled, scored box attached to a frame and the window that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub label: Label,
    pub score: f64,
    pub frame: u64,
    pub source: Source,
}

impl Detection {
    pub fn new(
        bbox: BoundingBox,
        label: Label,
        score: f64,
        frame: u64,
        source: Source,
    ) -> Result<Self, GeometryError> {
        if !score.is_finite() || !(0.0..=1.0).contains(&score) {
            return Err(GeometryError::InvalidScore(score));
        }
        Ok(Self {
            bbox,
            label,
            score,
            frame,
            source,
        })
    }

    /// Total order used wherever deterministic tie-breaking is required:
    /// score descending, then box coordinates, label and source.
    pub fn cmp_canonical(&self, other: &Self) -> std::cmp::Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.bbox.x1.total_cmp(&other.bbox.x1))
            .then(self.bbox.y1.total_cmp(&other.bbox.y1))
            .then(self.bbox.x2.total_cmp(&other.bbox.x2))
            .then(self.bbox.y2.total_cmp(&other.bbox.y2))
            .then(self.label.cmp(&other.label))
            .then(self.source.ordinal().cmp(&other.source.ordinal()))
    }
}

/// Translates a window-local detection into frame coordinates.
pub fn remap(d: &Detection, tile_origin_x: f64, tile_origin_y: f64) -> Detection {
    Detection {
        bbox: d.bbox.translate(tile_origin_x, tile_origin_y),
        ..*d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NmsMode {
    /// Only detections of the same label suppress each other (default).
    ClassAware,
    ClassAgnostic,
}

/// Greedy non-maximum suppression, class-aware.
///
/// Detections are visited by descending score (ties keep input order); one is
/// kept iff its IoU with every already-kept detection of the same label is
/// strictly below `iou_threshold`. Output preserves acceptance order.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    nms_mode(dets, iou_threshold, NmsMode::ClassAware)
}

/// NMS with an explicit suppression mode. `iou_threshold` must be in [0, 1].
pub fn nms_mode(dets: &[Detection], iou_threshold: f64, mode: NmsMode) -> Vec<Detection> {
    debug_assert!((0.0..=1.0).contains(&iou_threshold));
    let mut order: Vec<usize> = (0..dets.len()).collect();
    // Stable sort: equal scores keep insertion order.
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));

    let mut kept: Vec<Detection> = Vec::new();
    for &i in &order {
        let d = &dets[i];
        let suppressed = kept.iter().any(|k| {
            (mode == NmsMode::ClassAgnostic || k.label == d.label)
                && k.bbox.iou(&d.bbox) >= iou_threshold
        });
        if !suppressed {
            kept.push(*d);
        }
    }
    kept
}
