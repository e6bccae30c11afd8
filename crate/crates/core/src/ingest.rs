//! On-disk formats shared between pipeline stages: plain-text ground truth,
//! center-normalized label files, the JSONL detections interchange, and frame
//! manifests. Parsers reject rather than coerce; no NaN or infinity survives
//! ingestion.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::GroundTruth;
use crate::geometry::{BoundingBox, Detection, Label, Source};
use crate::temporal::VideoDetections;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<IngestError>,
    },
    #[error("stride must be positive")]
    ZeroStride,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl IngestError {
    fn at(line: usize, msg: impl Into<String>) -> Self {
        IngestError::Line {
            line,
            msg: msg.into(),
        }
    }

    pub fn in_file(self, path: &Path) -> Self {
        IngestError::InFile {
            path: path.to_path_buf(),
            source: Box::new(self),
        }
    }
}

fn parse_field<T: FromStr>(field: &str, line: usize, what: &str) -> Result<T, IngestError> {
    field
        .parse::<T>()
        .map_err(|_| IngestError::at(line, format!("bad {what} {field:?}")))
}

fn parse_finite(field: &str, line: usize, what: &str) -> Result<f64, IngestError> {
    let v: f64 = parse_field(field, line, what)?;
    if !v.is_finite() {
        return Err(IngestError::at(line, format!("non-finite {what} {field:?}")));
    }
    Ok(v)
}

/// Rounds a confidence to the 1e-6 grid used by the wire format, so values
/// survive a write/read cycle unchanged.
pub fn quantize_score(score: f64) -> f64 {
    (score * 1e6).round() / 1e6
}

/// Shortest decimal form that parses back to the same f64; `Display` for f64
/// never uses scientific notation, which keeps the output JSON-safe.
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

// ---------------------------------------------------------------------------
// ground truth: one object per line, `frame x y w h`

/// Parses a ground-truth annotation file. `#` comments and blank lines are
/// ignored; boxes are converted to exclusive-edge form.
pub fn parse_gt_file(text: &str, video_id: &str) -> Result<GroundTruth, IngestError> {
    let mut gt = GroundTruth::new(video_id);
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(IngestError::at(
                line,
                format!("expected `frame x y w h`, got {} fields", fields.len()),
            ));
        }
        let frame: u64 = parse_field(fields[0], line, "frame index")?;
        let x = parse_finite(fields[1], line, "x")?;
        let y = parse_finite(fields[2], line, "y")?;
        let w = parse_finite(fields[3], line, "width")?;
        let h = parse_finite(fields[4], line, "height")?;
        let bbox = BoundingBox::from_xywh(x, y, w, h)
            .map_err(|e| IngestError::at(line, e.to_string()))?;
        gt.entries.entry(frame).or_default().push(bbox);
    }
    Ok(gt)
}

pub fn serialize_gt(gt: &GroundTruth) -> String {
    let mut out = String::new();
    for (frame, boxes) in &gt.entries {
        for b in boxes {
            out.push_str(&format!(
                "{frame} {} {} {} {}\n",
                fmt_f64(b.x1),
                fmt_f64(b.y1),
                fmt_f64(b.width()),
                fmt_f64(b.height())
            ));
        }
    }
    out
}

/// Loads every `<video_id>.txt` in a directory as ground truth.
pub fn read_gt_dir(dir: &Path) -> Result<BTreeMap<String, GroundTruth>, IngestError> {
    let mut out = BTreeMap::new();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    paths.sort();
    for path in paths {
        let video = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| IngestError::Invalid(format!("bad file name {path:?}")))?
            .to_string();
        let text = fs::read_to_string(&path)?;
        let gt = parse_gt_file(&text, &video).map_err(|e| e.in_file(&path))?;
        out.insert(video, gt);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// normalized labels: `class_id cx cy w h`, all in [0, 1]

/// Parses center-normalized label lines into pixel-space boxes.
/// Class 0 is drone, class 1 is bird; anything else is an error.
pub fn parse_normalized_labels(
    text: &str,
    image_w: f64,
    image_h: f64,
) -> Result<Vec<(Label, BoundingBox)>, IngestError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(IngestError::at(
                line,
                format!("expected `class cx cy w h`, got {} fields", fields.len()),
            ));
        }
        let class: u32 = parse_field(fields[0], line, "class id")?;
        let label = match class {
            0 => Label::Drone,
            1 => Label::Bird,
            other => return Err(IngestError::at(line, format!("unknown class id {other}"))),
        };
        let mut vals = [0.0f64; 4];
        for (slot, (field, what)) in vals
            .iter_mut()
            .zip(fields[1..].iter().zip(["cx", "cy", "w", "h"]))
        {
            *slot = parse_finite(field, line, what)?;
            if !(0.0..=1.0).contains(slot) {
                return Err(IngestError::at(line, format!("{what} {field} outside [0, 1]")));
            }
        }
        let [cx, cy, w, h] = vals;
        let bbox = BoundingBox::new(
            (cx - w / 2.0) * image_w,
            (cy - h / 2.0) * image_h,
            (cx + w / 2.0) * image_w,
            (cy + h / 2.0) * image_h,
        )
        .map_err(|e| IngestError::at(line, e.to_string()))?;
        out.push((label, bbox));
    }
    Ok(out)
}

/// Writes center-normalized labels with the conventional six decimal places.
/// Values parsed from a label file land on the 1e-6 grid, so a parse /
/// serialize cycle reproduces the file byte for byte.
pub fn serialize_normalized_labels(
    items: &[(Label, BoundingBox)],
    image_w: f64,
    image_h: f64,
) -> String {
    let mut out = String::new();
    for (label, b) in items {
        let class = match label {
            Label::Drone => 0,
            Label::Bird => 1,
        };
        out.push_str(&format!(
            "{class} {:.6} {:.6} {:.6} {:.6}\n",
            (b.x1 + b.x2) / 2.0 / image_w,
            (b.y1 + b.y2) / 2.0 / image_h,
            b.width() / image_w,
            b.height() / image_h
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// detections interchange: one JSON object per line

/// Wire form of a detection. Coordinates are top-left plus size in pixels;
/// `source` names the window that produced the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub video: String,
    pub frame: u64,
    pub label: String,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
    pub source: String,
    /// Fields not in the schema; rejected in strict mode, carried through
    /// verbatim under `--lenient`.
    #[serde(flatten, default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl DetectionRecord {
    pub fn from_detection(video: &str, d: &Detection) -> Self {
        Self {
            video: video.to_string(),
            frame: d.frame,
            label: d.label.as_str().to_string(),
            x: d.bbox.x1,
            y: d.bbox.y1,
            w: d.bbox.width(),
            h: d.bbox.height(),
            score: quantize_score(d.score),
            source: d.source.to_string(),
            extra: serde_json::Map::new(),
        }
    }

    pub fn to_detection(&self) -> Result<Detection, IngestError> {
        let label: Label = self
            .label
            .parse()
            .map_err(|e: crate::geometry::GeometryError| IngestError::Invalid(e.to_string()))?;
        let source: Source = self
            .source
            .parse()
            .map_err(|e: crate::geometry::GeometryError| IngestError::Invalid(e.to_string()))?;
        let bbox = BoundingBox::from_xywh(self.x, self.y, self.w, self.h)
            .map_err(|e| IngestError::Invalid(e.to_string()))?;
        Detection::new(bbox, label, self.score, self.frame, source)
            .map_err(|e| IngestError::Invalid(e.to_string()))
    }

    fn validate(&self, line: usize, strict: bool) -> Result<(), IngestError> {
        for (name, v) in [("x", self.x), ("y", self.y), ("w", self.w), ("h", self.h)] {
            if !v.is_finite() {
                return Err(IngestError::at(line, format!("non-finite {name}")));
            }
        }
        if self.w < 0.0 || self.h < 0.0 {
            return Err(IngestError::at(line, "negative size"));
        }
        if !self.score.is_finite() || !(0.0..=1.0).contains(&self.score) {
            return Err(IngestError::at(line, format!("score {} outside [0, 1]", self.score)));
        }
        Label::from_str(&self.label).map_err(|e| IngestError::at(line, e.to_string()))?;
        Source::from_str(&self.source).map_err(|e| IngestError::at(line, e.to_string()))?;
        if strict && !self.extra.is_empty() {
            let keys: Vec<&String> = self.extra.keys().collect();
            return Err(IngestError::at(line, format!("unknown fields {keys:?}")));
        }
        Ok(())
    }

    /// One JSON line with a fixed field order and the score printed with six
    /// decimal places.
    pub fn to_json_line(&self) -> String {
        let mut line = format!(
            "{{\"video\":{},\"frame\":{},\"label\":{},\"x\":{},\"y\":{},\"w\":{},\"h\":{},\"score\":{:.6},\"source\":{}",
            serde_json::to_string(&self.video).expect("string serializes"),
            self.frame,
            serde_json::to_string(&self.label).expect("string serializes"),
            fmt_f64(self.x),
            fmt_f64(self.y),
            fmt_f64(self.w),
            fmt_f64(self.h),
            self.score,
            serde_json::to_string(&self.source).expect("string serializes"),
        );
        for (k, v) in &self.extra {
            line.push(',');
            line.push_str(&serde_json::to_string(k).expect("string serializes"));
            line.push(':');
            line.push_str(&serde_json::to_string(v).expect("value serializes"));
        }
        line.push('}');
        line
    }
}

/// Parses JSONL detections. Scores are normalized to the wire's 1e-6 grid.
pub fn parse_detections(text: &str, strict: bool) -> Result<Vec<DetectionRecord>, IngestError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut rec: DetectionRecord = serde_json::from_str(raw)
            .map_err(|e| IngestError::at(line, e.to_string()))?;
        rec.validate(line, strict)?;
        rec.score = quantize_score(rec.score);
        out.push(rec);
    }
    Ok(out)
}

pub fn serialize_detections(records: &[DetectionRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 96);
    for r in records {
        out.push_str(&r.to_json_line());
        out.push('\n');
    }
    out
}

pub fn read_detections_file(path: &Path, strict: bool) -> Result<Vec<DetectionRecord>, IngestError> {
    let text = fs::read_to_string(path)?;
    parse_detections(&text, strict).map_err(|e| e.in_file(path))
}

pub fn write_detections_file(path: &Path, records: &[DetectionRecord]) -> Result<(), IngestError> {
    fs::write(path, serialize_detections(records))?;
    Ok(())
}

/// Sorts records into the canonical interchange order: video, frame, score
/// descending, then box coordinates, label and source. Parallel runs become
/// diffable after this.
pub fn canonical_sort(records: &mut [DetectionRecord]) {
    records.sort_by(|a, b| {
        a.video
            .cmp(&b.video)
            .then(a.frame.cmp(&b.frame))
            .then(b.score.total_cmp(&a.score))
            .then(a.x.total_cmp(&b.x))
            .then(a.y.total_cmp(&b.y))
            .then(a.w.total_cmp(&b.w))
            .then(a.h.total_cmp(&b.h))
            .then(a.label.cmp(&b.label))
            .then(a.source.cmp(&b.source))
    });
}

/// Groups records into per-video timelines. The timeline of each video is
/// reconstructed as an arithmetic progression from its lowest to highest
/// frame index with the given stride; frames without records become empty.
pub fn records_to_videos(
    records: &[DetectionRecord],
    frame_width: f64,
    frame_height: f64,
    stride: u64,
) -> Result<BTreeMap<String, VideoDetections>, IngestError> {
    if stride == 0 {
        return Err(IngestError::ZeroStride);
    }
    let mut out: BTreeMap<String, VideoDetections> = BTreeMap::new();
    for rec in records {
        let det = rec.to_detection()?;
        let b = det.bbox;
        if b.x1 < -1e-6 || b.y1 < -1e-6 || b.x2 > frame_width + 1e-6 || b.y2 > frame_height + 1e-6 {
            return Err(IngestError::Invalid(format!(
                "box ({}, {}, {}, {}) outside {}x{} frame",
                b.x1, b.y1, b.x2, b.y2, frame_width, frame_height
            )));
        }
        let v = out.entry(rec.video.clone()).or_insert_with(|| {
            let mut v = VideoDetections::new(rec.video.clone(), frame_width, frame_height);
            v.frame_stride = stride;
            v
        });
        v.frames.entry(rec.frame).or_default().push(det);
    }
    for v in out.values_mut() {
        let first = *v.frames.keys().next().expect("video has frames");
        let last = *v.frames.keys().next_back().expect("video has frames");
        for f in v.frames.keys() {
            if (f - first) % stride != 0 {
                return Err(IngestError::Invalid(format!(
                    "frame {f} of {} does not match stride {stride} starting at {first}",
                    v.video_id
                )));
            }
        }
        let mut f = first;
        while f <= last {
            v.frames.entry(f).or_default();
            f += stride;
        }
    }
    Ok(out)
}

/// Groups records by video for scoring only: no frame-gap reconstruction and
/// no bounds check (evaluation does not consult the frame size).
pub fn group_records_for_eval(
    records: &[DetectionRecord],
) -> Result<BTreeMap<String, VideoDetections>, IngestError> {
    let mut out: BTreeMap<String, VideoDetections> = BTreeMap::new();
    for rec in records {
        let det = rec.to_detection()?;
        let v = out
            .entry(rec.video.clone())
            .or_insert_with(|| VideoDetections::new(rec.video.clone(), 0.0, 0.0));
        v.frame_width = v.frame_width.max(det.bbox.x2);
        v.frame_height = v.frame_height.max(det.bbox.y2);
        v.frames.entry(rec.frame).or_default().push(det);
    }
    Ok(out)
}

/// Flattens per-video timelines back to canonical-ordered records.
pub fn videos_to_records(videos: &BTreeMap<String, VideoDetections>) -> Vec<DetectionRecord> {
    let mut records = Vec::new();
    for (video, v) in videos {
        for dets in v.frames.values() {
            for d in dets {
                records.push(DetectionRecord::from_detection(video, d));
            }
        }
    }
    canonical_sort(&mut records);
    records
}

// ---------------------------------------------------------------------------
// frame manifests: `video frame path`, path may contain spaces

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub video: String,
    pub frame: u64,
    pub path: PathBuf,
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>, IngestError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.splitn(3, char::is_whitespace);
        let video = parts
            .next()
            .ok_or_else(|| IngestError::at(line, "missing video id"))?;
        let frame_field = parts
            .next()
            .ok_or_else(|| IngestError::at(line, "missing frame index"))?;
        let path = parts
            .next()
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .ok_or_else(|| IngestError::at(line, "missing image path"))?;
        let frame: u64 = parse_field(frame_field, line, "frame index")?;
        out.push(ManifestEntry {
            video: video.to_string(),
            frame,
            path: PathBuf::from(path),
        });
    }
    Ok(out)
}

pub fn serialize_manifest(entries: &[ManifestEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&format!("{} {} {}\n", e.video, e.frame, e.path.display()));
    }
    out
}

/// Keeps the elements at positions 0, stride, 2*stride, ... of the list.
pub fn subsample_frames(frame_indices: &[u64], stride: usize) -> Result<Vec<u64>, IngestError> {
    if stride == 0 {
        return Err(IngestError::ZeroStride);
    }
    Ok(frame_indices.iter().copied().step_by(stride).collect())
}

/// Positional subsampling applied per video, preserving line order.
pub fn subsample_manifest(
    entries: &[ManifestEntry],
    stride: usize,
) -> Result<Vec<ManifestEntry>, IngestError> {
    if stride == 0 {
        return Err(IngestError::ZeroStride);
    }
    let mut counters: BTreeMap<&str, usize> = BTreeMap::new();
    Ok(entries
        .iter()
        .filter(|e| {
            let c = counters.entry(e.video.as_str()).or_insert(0);
            let keep = *c % stride == 0;
            *c += 1;
            keep
        })
        .cloned()
        .collect())
}
