//! Multi-scale crop planning: four overlapping corner tiles covering a
//! configurable fraction (default 55%) of each frame dimension, plus the full
//! frame. Corner anchoring is the unique symmetric placement that leaves a
//! small overlap band in the middle.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::geometry::{BoundingBox, Source};

pub const DEFAULT_FRACTION: f64 = 0.55;

/// Guard against binary rounding when the fractional tile size is an exact
/// integer (0.55 * 1920 must come out as 1056, not 1057).
const CEIL_EPS: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum TilingError {
    #[error("frame {0}x{1} too small, need at least 2x2")]
    FrameTooSmall(u32, u32),
    #[error("fraction {0} outside [0.5, 1.0)")]
    InvalidFraction(f64),
    #[error("plan line {line}: {msg}")]
    BadPlanLine { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TileKind {
    Full,
    Corner(u8),
}

impl TileKind {
    /// Detection source produced by running a detector on this window.
    pub fn source(&self) -> Source {
        match self {
            TileKind::Full => Source::Full,
            TileKind::Corner(i) => Source::Tile(*i),
        }
    }
}

impl fmt::Display for TileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TileKind::Full => f.write_str("full"),
            TileKind::Corner(i) => write!(f, "corner{i}"),
        }
    }
}

impl FromStr for TileKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(TileKind::Full),
            other => {
                if let Some(idx) = other.strip_prefix("corner") {
                    if let Ok(i) = idx.parse::<u8>() {
                        if i < 4 {
                            return Ok(TileKind::Corner(i));
                        }
                    }
                }
                Err(format!("unknown window kind {other:?}"))
            }
        }
    }
}

/// One crop window of a [`TilePlan`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub kind: TileKind,
    pub origin_x: f64,
    pub origin_y: f64,
    pub width: f64,
    pub height: f64,
}

impl Window {
    pub fn bounds(&self) -> BoundingBox {
        BoundingBox {
            x1: self.origin_x,
            y1: self.origin_y,
            x2: self.origin_x + self.width,
            y2: self.origin_y + self.height,
        }
    }
}

/// The five crop windows for one frame size: the full frame first, then the
/// four corner tiles in row-major corner order.
#[derive(Debug, Clone, PartialEq)]
pub struct TilePlan {
    pub frame_width: f64,
    pub frame_height: f64,
    pub fraction: f64,
    pub windows: Vec<Window>,
}

impl TilePlan {
    pub fn window_for(&self, source: Source) -> Option<&Window> {
        let kind = match source {
            Source::Full => TileKind::Full,
            Source::Tile(i) => TileKind::Corner(i),
            Source::Interpolated => return None,
        };
        self.windows.iter().find(|w| w.kind == kind)
    }

    /// Serializes the plan in the `kind origin_x origin_y width height`
    /// line format used by the CLI.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for w in &self.windows {
            out.push_str(&format!(
                "{} {} {} {} {}\n",
                w.kind, w.origin_x, w.origin_y, w.width, w.height
            ));
        }
        out
    }

    /// Parses the output of [`TilePlan::to_text`]. Requires exactly one full
    /// window; the frame size is taken from it.
    pub fn from_text(text: &str) -> Result<Self, TilingError> {
        let mut windows = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(TilingError::BadPlanLine {
                    line,
                    msg: format!("expected 5 fields, got {}", fields.len()),
                });
            }
            let kind: TileKind = fields[0]
                .parse()
                .map_err(|msg| TilingError::BadPlanLine { line, msg })?;
            let mut nums = [0.0f64; 4];
            for (slot, field) in nums.iter_mut().zip(&fields[1..]) {
                *slot = field.parse().map_err(|_| TilingError::BadPlanLine {
                    line,
                    msg: format!("bad number {field:?}"),
                })?;
                if !slot.is_finite() {
                    return Err(TilingError::BadPlanLine {
                        line,
                        msg: format!("non-finite value {field:?}"),
                    });
                }
            }
            windows.push(Window {
                kind,
                origin_x: nums[0],
                origin_y: nums[1],
                width: nums[2],
                height: nums[3],
            });
        }
        let full = windows
            .iter()
            .filter(|w| w.kind == TileKind::Full)
            .collect::<Vec<_>>();
        if full.len() != 1 {
            return Err(TilingError::BadPlanLine {
                line: 0,
                msg: format!("plan needs exactly one full window, found {}", full.len()),
            });
        }
        let (fw, fh) = (full[0].width, full[0].height);
        let fraction = windows
            .iter()
            .find(|w| matches!(w.kind, TileKind::Corner(_)))
            .map(|w| w.width / fw)
            .unwrap_or(1.0);
        Ok(TilePlan {
            frame_width: fw,
            frame_height: fh,
            fraction,
            windows,
        })
    }
}

/// Computes the five-window crop plan for a frame.
///
/// Tile size is `ceil(fraction * dimension)`; the four tiles are anchored at
/// the frame corners, which guarantees full coverage for any fraction >= 0.5.
pub fn plan_tiles(width: u32, height: u32, fraction: f64) -> Result<TilePlan, TilingError> {
    if width < 2 || height < 2 {
        return Err(TilingError::FrameTooSmall(width, height));
    }
    if !fraction.is_finite() || !(0.5..1.0).contains(&fraction) {
        return Err(TilingError::InvalidFraction(fraction));
    }
    let w = f64::from(width);
    let h = f64::from(height);
    let tile_w = (fraction * w - CEIL_EPS).ceil().max(1.0);
    let tile_h = (fraction * h - CEIL_EPS).ceil().max(1.0);

    let mut windows = vec![Window {
        kind: TileKind::Full,
        origin_x: 0.0,
        origin_y: 0.0,
        width: w,
        height: h,
    }];
    let origins = [
        (0.0, 0.0),
        (w - tile_w, 0.0),
        (0.0, h - tile_h),
        (w - tile_w, h - tile_h),
    ];
    for (i, (ox, oy)) in origins.into_iter().enumerate() {
        windows.push(Window {
            kind: TileKind::Corner(i as u8),
            origin_x: ox,
            origin_y: oy,
            width: tile_w,
            height: tile_h,
        });
    }
    Ok(TilePlan {
        frame_width: w,
        frame_height: h,
        fraction,
        windows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corner_origins(plan: &TilePlan) -> Vec<(f64, f64)> {
        plan.windows
            .iter()
            .filter(|w| matches!(w.kind, TileKind::Corner(_)))
            .map(|w| (w.origin_x, w.origin_y))
            .collect()
    }

    #[test]
    fn full_hd_at_default_fraction() {
        let plan = plan_tiles(1920, 1080, 0.55).unwrap();
        assert_eq!(plan.windows.len(), 5);
        assert_eq!(plan.windows[0].kind, TileKind::Full);
        for w in &plan.windows[1..] {
            assert_eq!((w.width, w.height), (1056.0, 594.0));
        }
        assert_eq!(
            corner_origins(&plan),
            vec![(0.0, 0.0), (864.0, 0.0), (0.0, 486.0), (864.0, 486.0)]
        );
    }

    #[test]
    fn vga_like_frame() {
        let plan = plan_tiles(640, 512, 0.55).unwrap();
        for w in &plan.windows[1..] {
            assert_eq!((w.width, w.height), (352.0, 282.0));
        }
        assert_eq!(
            corner_origins(&plan),
            vec![(0.0, 0.0), (288.0, 0.0), (0.0, 230.0), (288.0, 230.0)]
        );
    }

    #[test]
    fn minimum_fraction_has_zero_overlap() {
        let plan = plan_tiles(100, 100, 0.5).unwrap();
        for w in &plan.windows[1..] {
            assert_eq!((w.width, w.height), (50.0, 50.0));
        }
        assert_eq!(
            corner_origins(&plan),
            vec![(0.0, 0.0), (50.0, 0.0), (0.0, 50.0), (50.0, 50.0)]
        );
    }

    #[test]
    fn rejects_out_of_range_fraction() {
        assert_eq!(
            plan_tiles(100, 100, 0.49),
            Err(TilingError::InvalidFraction(0.49))
        );
        assert_eq!(
            plan_tiles(100, 100, 1.0),
            Err(TilingError::InvalidFraction(1.0))
        );
        assert!(plan_tiles(100, 100, f64::NAN).is_err());
        assert_eq!(plan_tiles(1, 100, 0.55), Err(TilingError::FrameTooSmall(1, 100)));
    }

    #[test]
    fn plan_text_round_trip() {
        let plan = plan_tiles(1920, 1080, 0.55).unwrap();
        let parsed = TilePlan::from_text(&plan.to_text()).unwrap();
        assert_eq!(parsed.windows, plan.windows);
        assert_eq!(parsed.frame_width, plan.frame_width);
        assert_eq!(parsed.frame_height, plan.frame_height);
    }

    #[test]
    fn plan_text_rejects_garbage() {
        assert!(TilePlan::from_text("full 0 0 100").is_err());
        assert!(TilePlan::from_text("blob 0 0 100 100").is_err());
        // no full window
        assert!(TilePlan::from_text("corner0 0 0 10 10").is_err());
    }

    fn covers(plan: &TilePlan) -> bool {
        // Corner anchoring makes coverage separable per axis; scan a coarse
        // grid anyway to exercise the actual windows.
        let (w, h) = (plan.frame_width, plan.frame_height);
        let corners: Vec<BoundingBox> = plan.windows[1..].iter().map(|t| t.bounds()).collect();
        let steps = 16;
        for i in 0..=steps {
            for j in 0..=steps {
                let x = w * f64::from(i) / f64::from(steps);
                let y = h * f64::from(j) / f64::from(steps);
                let inside = corners
                    .iter()
                    .any(|b| x >= b.x1 && x <= b.x2 && y >= b.y1 && y <= b.y2);
                if !inside {
                    return false;
                }
            }
        }
        true
    }

    proptest! {
        #[test]
        fn corner_tiles_cover_frame(w in 2u32..4000, h in 2u32..4000, f in 0.5..0.95f64) {
            let plan = plan_tiles(w, h, f).unwrap();
            prop_assert!(covers(&plan));
            for t in &plan.windows {
                prop_assert!(t.origin_x >= 0.0 && t.origin_y >= 0.0);
                prop_assert!(t.origin_x + t.width <= plan.frame_width + 1e-9);
                prop_assert!(t.origin_y + t.height <= plan.frame_height + 1e-9);
            }
        }

        #[test]
        fn mirror_symmetry(w in 2u32..3000, h in 2u32..3000, f in 0.5..0.95f64) {
            let plan = plan_tiles(w, h, f).unwrap();
            let (fw, fh) = (plan.frame_width, plan.frame_height);
            let tiles: Vec<BoundingBox> = plan.windows[1..].iter().map(|t| t.bounds()).collect();
            // horizontal and vertical mirroring permute the tile set
            for t in &tiles {
                let hm = BoundingBox::new(fw - t.x2, t.y1, fw - t.x1, t.y2).unwrap();
                let vm = BoundingBox::new(t.x1, fh - t.y2, t.x2, fh - t.y1).unwrap();
                prop_assert!(tiles.iter().any(|o| (o.x1 - hm.x1).abs() < 1e-9 && (o.y1 - hm.y1).abs() < 1e-9));
                prop_assert!(tiles.iter().any(|o| (o.x1 - vm.x1).abs() < 1e-9 && (o.y1 - vm.y1).abs() < 1e-9));
            }
        }

        #[test]
        fn tile_area_monotone_in_fraction(w in 2u32..3000, h in 2u32..3000,
                                          f1 in 0.5..0.95f64, f2 in 0.5..0.95f64) {
            let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
            let a = plan_tiles(w, h, lo).unwrap().windows[1];
            let b = plan_tiles(w, h, hi).unwrap().windows[1];
            prop_assert!(b.width * b.height >= a.width * a.height);
        }

        #[test]
        fn overlap_band_matches_fraction(w in 16u32..4000, h in 16u32..4000) {
            let plan = plan_tiles(w, h, 0.55).unwrap();
            let tile = &plan.windows[1];
            let overlap_x = 2.0 * tile.width - plan.frame_width;
            let overlap_y = 2.0 * tile.height - plan.frame_height;
            prop_assert!((overlap_x - 0.1 * plan.frame_width).abs() <= 2.0 + 1e-9);
            prop_assert!((overlap_y - 0.1 * plan.frame_height).abs() <= 2.0 + 1e-9);
        }
    }
}
