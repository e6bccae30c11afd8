//! Annotated frame rendering: detection boxes colored by label (interpolated
//! boxes dashed), ground truth in a contrasting color, and a tiny bitmap
//! score readout. Output is deterministic for fixed inputs.

use std::collections::BTreeMap;
use std::path::Path;

use image::{Rgb, RgbImage};

use crate::evaluation::GroundTruth;
use crate::geometry::{BoundingBox, Detection, Label, Source};
use crate::ingest::{DetectionRecord, ManifestEntry};

use super::PipelineError;

pub const GT_COLOR: Rgb<u8> = Rgb([60, 110, 255]);
pub const DRONE_COLOR: Rgb<u8> = Rgb([50, 220, 60]);
pub const BIRD_COLOR: Rgb<u8> = Rgb([230, 70, 70]);
pub const INTERP_COLOR: Rgb<u8> = Rgb([0, 210, 230]);

#[derive(Debug, Clone, Copy)]
pub struct RenderOptions {
    pub draw_scores: bool,
    pub draw_ground_truth: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            draw_scores: true,
            draw_ground_truth: true,
        }
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

/// One-pixel rectangle outline; `dashed` drops every other 3-pixel run.
pub fn draw_rect_outline(img: &mut RgbImage, b: &BoundingBox, color: Rgb<u8>, dashed: bool) {
    let x0 = b.x1.round() as i64;
    let x1 = (b.x2.round() as i64).max(x0 + 1);
    let y0 = b.y1.round() as i64;
    let y1 = (b.y2.round() as i64).max(y0 + 1);
    let on = |i: i64| !dashed || (i / 3) % 2 == 0;
    for x in x0..x1 {
        if on(x - x0) {
            put(img, x, y0, color);
            put(img, x, y1 - 1, color);
        }
    }
    for y in y0..y1 {
        if on(y - y0) {
            put(img, x0, y, color);
            put(img, x1 - 1, y, color);
        }
    }
}

// 3x5 glyphs for digits and the decimal point, row-major bit masks.
const GLYPHS: [(char, [u8; 5]); 11] = [
    ('0', [0b111, 0b101, 0b101, 0b101, 0b111]),
    ('1', [0b010, 0b110, 0b010, 0b010, 0b111]),
    ('2', [0b111, 0b001, 0b111, 0b100, 0b111]),
    ('3', [0b111, 0b001, 0b111, 0b001, 0b111]),
    ('4', [0b101, 0b101, 0b111, 0b001, 0b001]),
    ('5', [0b111, 0b100, 0b111, 0b001, 0b111]),
    ('6', [0b111, 0b100, 0b111, 0b101, 0b111]),
    ('7', [0b111, 0b001, 0b010, 0b010, 0b010]),
    ('8', [0b111, 0b101, 0b111, 0b101, 0b111]),
    ('9', [0b111, 0b101, 0b111, 0b001, 0b111]),
    ('.', [0b000, 0b000, 0b000, 0b000, 0b010]),
];

fn draw_text(img: &mut RgbImage, x: i64, y: i64, text: &str, color: Rgb<u8>) {
    let mut cx = x;
    for ch in text.chars() {
        if let Some((_, rows)) = GLYPHS.iter().find(|(g, _)| *g == ch) {
            for (ry, row) in rows.iter().enumerate() {
                for rx in 0..3 {
                    if row & (0b100 >> rx) != 0 {
                        put(img, cx + rx as i64, y + ry as i64, color);
                    }
                }
            }
        }
        cx += 4;
    }
}

/// Draws ground truth and detections onto one frame in place.
pub fn render_frame(
    img: &mut RgbImage,
    dets: &[Detection],
    gt: &[BoundingBox],
    opts: &RenderOptions,
) {
    if opts.draw_ground_truth {
        for b in gt {
            draw_rect_outline(img, b, GT_COLOR, false);
        }
    }
    for d in dets {
        let (color, dashed) = match (d.source, d.label) {
            (Source::Interpolated, _) => (INTERP_COLOR, true),
            (_, Label::Drone) => (DRONE_COLOR, false),
            (_, Label::Bird) => (BIRD_COLOR, false),
        };
        draw_rect_outline(img, &d.bbox, color, dashed);
        if opts.draw_scores {
            let text = format!("{:.2}", d.score);
            let y = d.bbox.y1.round() as i64 - 7;
            let y = if y < 0 { d.bbox.y2.round() as i64 + 2 } else { y };
            draw_text(img, d.bbox.x1.round() as i64, y, &text, color);
        }
    }
}

#[derive(Debug, Default)]
pub struct RenderSummary {
    pub rendered: usize,
    pub failures: Vec<(String, u64, String)>,
}

/// Renders every manifest frame with its detections (and ground truth when
/// given) to `<out>/<video>/<frame file>.png`. Per-frame problems are
/// recorded and the batch continues.
pub fn render_annotations(
    manifest: &[ManifestEntry],
    records: &[DetectionRecord],
    ground_truth: Option<&BTreeMap<String, GroundTruth>>,
    out_dir: &Path,
    opts: &RenderOptions,
) -> Result<RenderSummary, PipelineError> {
    let mut by_frame: BTreeMap<(&str, u64), Vec<Detection>> = BTreeMap::new();
    for rec in records {
        by_frame
            .entry((rec.video.as_str(), rec.frame))
            .or_default()
            .push(rec.to_detection()?);
    }

    let mut summary = RenderSummary::default();
    for entry in manifest {
        let result = (|| -> Result<(), String> {
            let mut img = image::open(&entry.path)
                .map_err(|e| format!("{}: {e}", entry.path.display()))?
                .to_rgb8();
            let dets = by_frame
                .get(&(entry.video.as_str(), entry.frame))
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            let (w, h) = (f64::from(img.width()), f64::from(img.height()));
            for d in dets {
                if d.bbox.x2 > w + 1e-6 || d.bbox.y2 > h + 1e-6 {
                    return Err(format!(
                        "detection ({}, {}, {}, {}) exceeds the {}x{} frame",
                        d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2, w, h
                    ));
                }
            }
            let gt_boxes = ground_truth
                .and_then(|m| m.get(entry.video.as_str()))
                .map(|g| g.boxes_at(entry.frame))
                .unwrap_or(&[]);
            render_frame(&mut img, dets, gt_boxes, opts);

            let video_dir = out_dir.join(&entry.video);
            std::fs::create_dir_all(&video_dir).map_err(|e| e.to_string())?;
            let stem = entry
                .path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("frame");
            img.save(video_dir.join(format!("{stem}.png")))
                .map_err(|e| e.to_string())?;
            Ok(())
        })();
        match result {
            Ok(()) => summary.rendered += 1,
            Err(msg) => summary
                .failures
                .push((entry.video.clone(), entry.frame, msg)),
        }
    }
    Ok(summary)
}
