//! Synthetic videos with exact ground truth: linear-motion rectangular
//! targets over flat, gradient or noise backgrounds. The same box arithmetic
//! feeds both the renderer and the ground-truth file, so the labels are exact
//! by construction. Bird tracks are rendered but left out of the ground
//! truth, mirroring datasets where birds appear unlabeled.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::evaluation::GroundTruth;
use crate::geometry::{BoundingBox, Label};
use crate::ingest::{serialize_gt, serialize_manifest, ManifestEntry};
use crate::seed;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("scene spec line {line}: {msg}")]
    Spec { line: usize, msg: String },
    #[error("track {index} leaves the {width}x{height} frame at frame {frame}")]
    TrackOutOfBounds {
        index: usize,
        frame: u64,
        width: u32,
        height: u32,
    },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("image encode: {0}")]
    Image(#[from] image::ImageError),
}

/// A single target moving on a straight line at constant velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSpec {
    pub label: Label,
    pub start_center: (f64, f64),
    pub velocity: (f64, f64),
    pub size: (f64, f64),
    pub first_frame: u64,
    pub last_frame: u64,
}

impl TrackSpec {
    /// Box at an absolute frame index: center = start + velocity * frame.
    pub fn box_at(&self, frame: u64) -> Option<BoundingBox> {
        if frame < self.first_frame || frame > self.last_frame {
            return None;
        }
        let t = frame as f64;
        let cx = self.start_center.0 + self.velocity.0 * t;
        let cy = self.start_center.1 + self.velocity.1 * t;
        let (w, h) = self.size;
        Some(BoundingBox {
            x1: cx - w / 2.0,
            y1: cy - h / 2.0,
            x2: cx + w / 2.0,
            y2: cy + h / 2.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Background {
    Flat(u8),
    Gradient,
    Noise(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub n_frames: u64,
    pub background: Background,
    pub tracks: Vec<TrackSpec>,
}

impl Scene {
    /// Checks sizes and that every live track box stays inside the frame.
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.width < 2 || self.height < 2 || self.n_frames == 0 {
            return Err(SynthError::Invalid(format!(
                "scene needs width/height >= 2 and at least one frame, got {}x{} x{}",
                self.width, self.height, self.n_frames
            )));
        }
        for (index, track) in self.tracks.iter().enumerate() {
            if track.size.0 <= 0.0 || track.size.1 <= 0.0 {
                return Err(SynthError::Invalid(format!(
                    "track {index} has non-positive size"
                )));
            }
            if track.last_frame < track.first_frame {
                return Err(SynthError::Invalid(format!(
                    "track {index} has last_frame < first_frame"
                )));
            }
            let last = track.last_frame.min(self.n_frames.saturating_sub(1));
            for frame in track.first_frame..=last {
                let b = track.box_at(frame).expect("frame within track life");
                if b.x1 < 0.0
                    || b.y1 < 0.0
                    || b.x2 > f64::from(self.width)
                    || b.y2 > f64::from(self.height)
                {
                    return Err(SynthError::TrackOutOfBounds {
                        index,
                        frame,
                        width: self.width,
                        height: self.height,
                    });
                }
            }
        }
        Ok(())
    }

    /// All live boxes at a frame, regardless of label.
    pub fn frame_boxes(&self, frame: u64) -> Vec<(Label, BoundingBox)> {
        self.tracks
            .iter()
            .filter_map(|t| t.box_at(frame).map(|b| (t.label, b)))
            .collect()
    }

    /// Exact ground truth for drone tracks; bird tracks stay unlabeled.
    pub fn ground_truth(&self) -> GroundTruth {
        let mut gt = GroundTruth::new(self.id.clone());
        for frame in 0..self.n_frames {
            let drones: Vec<BoundingBox> = self
                .frame_boxes(frame)
                .into_iter()
                .filter(|(l, _)| *l == Label::Drone)
                .map(|(_, b)| b)
                .collect();
            if !drones.is_empty() {
                gt.entries.insert(frame, drones);
            }
        }
        gt
    }

    pub fn render_frame(&self, frame: u64) -> RgbImage {
        let mut img = RgbImage::new(self.width, self.height);
        match self.background {
            Background::Flat(v) => {
                for px in img.pixels_mut() {
                    *px = Rgb([v, v, v]);
                }
            }
            Background::Gradient => {
                let denom = (self.width + self.height).saturating_sub(2).max(1);
                for (x, y, px) in img.enumerate_pixels_mut() {
                    let v = ((x + y) * 255 / denom) as u8;
                    *px = Rgb([v, v, v]);
                }
            }
            Background::Noise(noise_seed) => {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed::derive(noise_seed, &[frame]));
                for px in img.pixels_mut() {
                    let v: u8 = rng.gen_range(0..=180);
                    *px = Rgb([v, v, v]);
                }
            }
        }
        for (label, b) in self.frame_boxes(frame) {
            let color = match label {
                Label::Drone => Rgb([255, 255, 255]),
                Label::Bird => Rgb([235, 235, 235]),
            };
            fill_rect(&mut img, &b, color);
        }
        img
    }
}

fn fill_rect(img: &mut RgbImage, b: &BoundingBox, color: Rgb<u8>) {
    let (w, h) = (i64::from(img.width()), i64::from(img.height()));
    let x0 = (b.x1.round() as i64).clamp(0, w);
    let x1 = (b.x2.round() as i64).clamp(0, w);
    let y0 = (b.y1.round() as i64).clamp(0, h);
    let y1 = (b.y2.round() as i64).clamp(0, h);
    for y in y0..y1 {
        for x in x0..x1 {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

/// Files produced by [`write_scene`].
#[derive(Debug, Clone)]
pub struct SceneFiles {
    pub frames: Vec<PathBuf>,
    pub gt_file: PathBuf,
    pub manifest_file: PathBuf,
}

/// Renders every frame to `<out>/frames/frame_NNNNNN.png`, writes the ground
/// truth in annotation format plus a `video frame path` manifest.
pub fn write_scene(scene: &Scene, out_dir: &Path) -> Result<SceneFiles, SynthError> {
    scene.validate()?;
    let frames_dir = out_dir.join("frames");
    let gt_dir = out_dir.join("gt");
    std::fs::create_dir_all(&frames_dir)?;
    std::fs::create_dir_all(&gt_dir)?;

    let mut frames = Vec::new();
    let mut entries = Vec::new();
    for frame in 0..scene.n_frames {
        let path = frames_dir.join(format!("frame_{frame:06}.png"));
        scene.render_frame(frame).save(&path)?;
        entries.push(ManifestEntry {
            video: scene.id.clone(),
            frame,
            path: path.clone(),
        });
        frames.push(path);
    }

    let gt_file = gt_dir.join(format!("{}.txt", scene.id));
    std::fs::write(&gt_file, serialize_gt(&scene.ground_truth()))?;
    let manifest_file = out_dir.join("manifest.txt");
    std::fs::write(&manifest_file, serialize_manifest(&entries))?;
    Ok(SceneFiles {
        frames,
        gt_file,
        manifest_file,
    })
}

// ---------------------------------------------------------------------------
// scene spec text format: flat `key = value` lines plus [track] sections

fn parse_pair(value: &str, line: usize, what: &str) -> Result<(f64, f64), SynthError> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(SynthError::Spec {
            line,
            msg: format!("{what} must be `x,y`, got {value:?}"),
        });
    }
    let parse = |s: &str| -> Result<f64, SynthError> {
        let v: f64 = s.parse().map_err(|_| SynthError::Spec {
            line,
            msg: format!("bad number {s:?} in {what}"),
        })?;
        if !v.is_finite() {
            return Err(SynthError::Spec {
                line,
                msg: format!("non-finite {what}"),
            });
        }
        Ok(v)
    };
    Ok((parse(parts[0])?, parse(parts[1])?))
}

fn parse_background(value: &str, line: usize) -> Result<Background, SynthError> {
    if value == "gradient" {
        return Ok(Background::Gradient);
    }
    if value == "flat" {
        return Ok(Background::Flat(128));
    }
    if let Some(v) = value.strip_prefix("flat:") {
        let shade: u8 = v.parse().map_err(|_| SynthError::Spec {
            line,
            msg: format!("bad flat shade {v:?}"),
        })?;
        return Ok(Background::Flat(shade));
    }
    if let Some(v) = value.strip_prefix("noise:") {
        let noise_seed: u64 = v.parse().map_err(|_| SynthError::Spec {
            line,
            msg: format!("bad noise seed {v:?}"),
        })?;
        return Ok(Background::Noise(noise_seed));
    }
    Err(SynthError::Spec {
        line,
        msg: format!("unknown background {value:?}"),
    })
}

#[derive(Default)]
struct TrackBuilder {
    line: usize,
    fields: BTreeMap<String, (usize, String)>,
}

impl TrackBuilder {
    fn build(&self, n_frames: u64) -> Result<TrackSpec, SynthError> {
        let get = |key: &str| self.fields.get(key);
        let required = |key: &str| {
            get(key).ok_or_else(|| SynthError::Spec {
                line: self.line,
                msg: format!("track is missing `{key}`"),
            })
        };
        let label = match get("label") {
            None => Label::Drone,
            Some((line, v)) => v.parse().map_err(|_| SynthError::Spec {
                line: *line,
                msg: format!("unknown label {v:?}"),
            })?,
        };
        let (cline, center) = required("center")?;
        let start_center = parse_pair(center, *cline, "center")?;
        let (sline, size) = required("size")?;
        let size = parse_pair(size, *sline, "size")?;
        let velocity = match get("velocity") {
            None => (0.0, 0.0),
            Some((line, v)) => parse_pair(v, *line, "velocity")?,
        };
        let parse_frame = |key: &str, default: u64| -> Result<u64, SynthError> {
            match get(key) {
                None => Ok(default),
                Some((line, v)) => v.parse().map_err(|_| SynthError::Spec {
                    line: *line,
                    msg: format!("bad {key} {v:?}"),
                }),
            }
        };
        Ok(TrackSpec {
            label,
            start_center,
            velocity,
            size,
            first_frame: parse_frame("first", 0)?,
            last_frame: parse_frame("last", n_frames.saturating_sub(1))?,
        })
    }
}

/// Parses the flat key=value scene description with `[track]` sections.
pub fn parse_scene_spec(text: &str) -> Result<Scene, SynthError> {
    let mut header: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut tracks: Vec<TrackBuilder> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if trimmed == "[track]" {
            tracks.push(TrackBuilder {
                line,
                ..TrackBuilder::default()
            });
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(SynthError::Spec {
                line,
                msg: format!("expected `key = value`, got {trimmed:?}"),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        match tracks.last_mut() {
            Some(t) => {
                t.fields.insert(key, (line, value));
            }
            None => {
                header.insert(key, (line, value));
            }
        }
    }

    let get_u64 = |key: &str| -> Result<u64, SynthError> {
        let (line, v) = header.get(key).ok_or_else(|| SynthError::Spec {
            line: 0,
            msg: format!("missing `{key}`"),
        })?;
        v.parse().map_err(|_| SynthError::Spec {
            line: *line,
            msg: format!("bad {key} {v:?}"),
        })
    };
    let width = u32::try_from(get_u64("width")?).map_err(|_| SynthError::Invalid("width too large".into()))?;
    let height = u32::try_from(get_u64("height")?).map_err(|_| SynthError::Invalid("height too large".into()))?;
    let n_frames = get_u64("frames")?;
    let background = match header.get("background") {
        None => Background::Flat(128),
        Some((line, v)) => parse_background(v, *line)?,
    };
    let id = header
        .get("id")
        .map(|(_, v)| v.clone())
        .unwrap_or_else(|| "scene".to_string());

    let scene = Scene {
        id,
        width,
        height,
        n_frames,
        background,
        tracks: tracks
            .iter()
            .map(|t| t.build(n_frames))
            .collect::<Result<Vec<_>, _>>()?,
    };
    scene.validate()?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drone_track() -> TrackSpec {
        TrackSpec {
            label: Label::Drone,
            start_center: (100.0, 100.0),
            velocity: (5.0, 0.0),
            size: (20.0, 20.0),
            first_frame: 0,
            last_frame: 9,
        }
    }

    #[test]
    fn static_track_repeats_the_same_box() {
        let track = TrackSpec {
            velocity: (0.0, 0.0),
            ..drone_track()
        };
        let scene = Scene {
            id: "s".into(),
            width: 640,
            height: 480,
            n_frames: 10,
            background: Background::Flat(128),
            tracks: vec![track],
        };
        let gt = scene.ground_truth();
        assert_eq!(gt.entries.len(), 10);
        let first = gt.entries[&0].clone();
        for boxes in gt.entries.values() {
            assert_eq!(*boxes, first);
        }
    }

    #[test]
    fn linear_motion_matches_hand_arithmetic() {
        let track = drone_track();
        let b = track.box_at(4).unwrap();
        // center (120, 100), size 20x20
        assert_eq!(b, BoundingBox::new(110.0, 90.0, 130.0, 110.0).unwrap());
        assert_eq!(track.box_at(10), None);
    }

    #[test]
    fn bird_tracks_are_rendered_but_unlabeled() {
        let bird = TrackSpec {
            label: Label::Bird,
            start_center: (300.0, 200.0),
            velocity: (0.0, 0.0),
            size: (16.0, 16.0),
            first_frame: 0,
            last_frame: 9,
        };
        let scene = Scene {
            id: "s".into(),
            width: 640,
            height: 480,
            n_frames: 10,
            background: Background::Flat(10),
            tracks: vec![bird],
        };
        assert!(scene.ground_truth().entries.is_empty());
        let img = scene.render_frame(0);
        assert_ne!(img.get_pixel(300, 200), &Rgb([10, 10, 10]));
    }

    #[test]
    fn escaping_track_is_rejected_with_frame() {
        let runaway = TrackSpec {
            velocity: (200.0, 0.0),
            ..drone_track()
        };
        let scene = Scene {
            id: "s".into(),
            width: 640,
            height: 480,
            n_frames: 10,
            background: Background::Flat(0),
            tracks: vec![runaway],
        };
        match scene.validate() {
            Err(SynthError::TrackOutOfBounds { index: 0, frame, .. }) => assert!(frame > 0),
            other => panic!("expected out-of-bounds, got {other:?}"),
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let scene = Scene {
            id: "s".into(),
            width: 64,
            height: 48,
            n_frames: 3,
            background: Background::Noise(7),
            tracks: vec![TrackSpec {
                size: (6.0, 6.0),
                start_center: (20.0, 20.0),
                velocity: (1.0, 0.5),
                ..drone_track()
            }],
        };
        assert_eq!(scene.render_frame(1), scene.render_frame(1));
        // different frames get different noise
        assert_ne!(scene.render_frame(0).as_raw(), scene.render_frame(1).as_raw());
    }

    #[test]
    fn ground_truth_matches_rendered_rectangle() {
        let scene = Scene {
            id: "s".into(),
            width: 200,
            height: 200,
            n_frames: 1,
            background: Background::Flat(0),
            tracks: vec![TrackSpec {
                start_center: (50.0, 60.0),
                velocity: (0.0, 0.0),
                size: (10.0, 8.0),
                ..drone_track()
            }],
        };
        let img = scene.render_frame(0);
        let b = scene.ground_truth().entries[&0][0];
        for y in 0..200u32 {
            for x in 0..200u32 {
                let lit = img.get_pixel(x, y) != &Rgb([0, 0, 0]);
                let inside = (f64::from(x) + 0.5) > b.x1
                    && (f64::from(x) + 0.5) < b.x2
                    && (f64::from(y) + 0.5) > b.y1
                    && (f64::from(y) + 0.5) < b.y2;
                assert_eq!(lit, inside, "pixel ({x}, {y})");
            }
        }
    }

    #[test]
    fn spec_text_parses_and_validates() {
        let text = "\
# demo scene
id = demo
width = 640
height = 480
frames = 12
background = noise:3

[track]
label = drone
center = 100,100
velocity = 2,1
size = 14,14

[track]
label = bird
center = 400,240
size = 10,10
first = 2
last = 8
";
        let scene = parse_scene_spec(text).unwrap();
        assert_eq!(scene.id, "demo");
        assert_eq!(scene.tracks.len(), 2);
        assert_eq!(scene.tracks[0].last_frame, 11);
        assert_eq!(scene.tracks[1].first_frame, 2);
        assert_eq!(scene.background, Background::Noise(3));
    }

    #[test]
    fn spec_errors_carry_line_numbers() {
        let missing = parse_scene_spec("width = 10\nheight = 10\n");
        assert!(matches!(missing, Err(SynthError::Spec { .. })));
        let bad = parse_scene_spec("width = 640\nheight = 480\nframes = 5\n[track]\ncenter = nope\nsize = 4,4\n");
        match bad {
            Err(SynthError::Spec { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn write_scene_emits_frames_gt_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let scene = parse_scene_spec(
            "id = tiny\nwidth = 32\nheight = 24\nframes = 2\n[track]\ncenter = 10,10\nsize = 4,4\n",
        )
        .unwrap();
        let files = write_scene(&scene, dir.path()).unwrap();
        assert_eq!(files.frames.len(), 2);
        assert!(files.gt_file.ends_with("gt/tiny.txt"));
        for f in &files.frames {
            assert!(f.exists());
        }
        let manifest = std::fs::read_to_string(&files.manifest_file).unwrap();
        assert_eq!(manifest.lines().count(), 2);
    }
}
