//! The pluggable detector boundary.
//!
//! Real detectors are external executables speaking a line-oriented stdout
//! protocol: the toolkit crops a window to an image file, runs
//! `<executable> <image_path>`, and reads one `label score x y w h` line per
//! detection (window-local pixels, top-left plus size). A ground-truth-aware
//! mock detector implements the same trait in-process for tests and for
//! running the pipeline without a model.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::evaluation::GroundTruth;
use crate::geometry::{BoundingBox, Detection, Label, Source};
use crate::ingest::quantize_score;
use crate::seed;
use crate::tiling::Window;

pub const DEFAULT_CHILD_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("failed to launch detector {exe:?}: {source}")]
    Spawn {
        exe: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("detector {exe:?} exited with {status}; stderr:\n{stderr}")]
    ChildFailed {
        exe: PathBuf,
        status: String,
        stderr: String,
    },
    #[error("detector {exe:?} timed out after {timeout:?}")]
    Timeout { exe: PathBuf, timeout: Duration },
    #[error("bad detector output at line {line}: {msg}; raw output:\n{raw}")]
    BadOutput {
        line: usize,
        msg: String,
        raw: String,
    },
    #[error("this backend needs frame pixels but none were supplied")]
    MissingImage,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything a backend may need about the frame being processed. `image` is
/// only populated for backends that report `needs_pixels()`.
pub struct FrameContext<'a> {
    pub video: &'a str,
    pub frame: u64,
    pub image: Option<&'a image::RgbImage>,
}

/// A detector that can be run on one crop window of a frame.
pub trait Detector: Send + Sync {
    /// Whether `detect` requires decoded frame pixels.
    fn needs_pixels(&self) -> bool {
        false
    }

    /// Returns window-local detections for one window of one frame.
    fn detect(
        &self,
        frame: &FrameContext<'_>,
        window: &Window,
    ) -> Result<Vec<Detection>, BackendError>;
}

// ---------------------------------------------------------------------------
// subprocess backend

/// Parses the child protocol: one `label score x y w h` line per detection.
pub fn parse_detector_output(
    text: &str,
    frame: u64,
    source: Source,
) -> Result<Vec<Detection>, BackendError> {
    let bad = |line: usize, msg: String| BackendError::BadOutput {
        line,
        msg,
        raw: text.to_string(),
    };
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(bad(line, format!("expected 6 fields, got {}", fields.len())));
        }
        let label: Label = fields[0]
            .parse()
            .map_err(|e| bad(line, format!("{e}")))?;
        let mut nums = [0.0f64; 5];
        for (slot, field) in nums.iter_mut().zip(&fields[1..]) {
            *slot = field
                .parse()
                .map_err(|_| bad(line, format!("bad number {field:?}")))?;
            if !slot.is_finite() {
                return Err(bad(line, format!("non-finite value {field:?}")));
            }
        }
        let [score, x, y, w, h] = nums;
        if !(0.0..=1.0).contains(&score) {
            return Err(bad(line, format!("score {score} outside [0, 1]")));
        }
        let bbox = BoundingBox::from_xywh(x, y, w, h).map_err(|e| bad(line, e.to_string()))?;
        let det = Detection::new(bbox, label, quantize_score(score), frame, source)
            .map_err(|e| bad(line, e.to_string()))?;
        out.push(det);
    }
    Ok(out)
}

/// Runs `<executable> <image_path>` and parses its stdout. The child must
/// exit 0; stderr is captured for diagnostics; exceeding `timeout` kills the
/// child and reports a backend error.
pub fn run_detector_child(
    executable: &Path,
    image_path: &Path,
    frame: u64,
    source: Source,
    timeout: Duration,
) -> Result<Vec<Detection>, BackendError> {
    let mut child = Command::new(executable)
        .arg(image_path)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|source| BackendError::Spawn {
            exe: executable.to_path_buf(),
            source,
        })?;

    // Drain both pipes on helper threads so a chatty child cannot deadlock
    // against a full pipe buffer while we poll for exit.
    let mut stdout = child.stdout.take().expect("stdout piped");
    let mut stderr = child.stderr.take().expect("stderr piped");
    let out_thread = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout.read_to_end(&mut buf);
        buf
    });
    let err_thread = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr.read_to_end(&mut buf);
        buf
    });

    let deadline = Instant::now() + timeout;
    let status = loop {
        match child.try_wait()? {
            Some(status) => break status,
            None if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                // do not join the readers: a grandchild may still hold the
                // pipe open; the threads exit on their own at pipe EOF
                return Err(BackendError::Timeout {
                    exe: executable.to_path_buf(),
                    timeout,
                });
            }
            None => std::thread::sleep(Duration::from_millis(2)),
        }
    };

    let raw_out = String::from_utf8_lossy(&out_thread.join().unwrap_or_default()).into_owned();
    let raw_err = String::from_utf8_lossy(&err_thread.join().unwrap_or_default()).into_owned();
    if !status.success() {
        return Err(BackendError::ChildFailed {
            exe: executable.to_path_buf(),
            status: status.to_string(),
            stderr: raw_err,
        });
    }
    parse_detector_output(&raw_out, frame, source)
}

/// Detector backed by an external executable. Windows are cropped here and
/// handed to the child as pre-cropped image files, so the child never needs
/// window geometry.
pub struct SubprocessDetector {
    pub executable: PathBuf,
    pub timeout: Duration,
}

impl SubprocessDetector {
    pub fn new(executable: impl Into<PathBuf>) -> Self {
        Self {
            executable: executable.into(),
            timeout: DEFAULT_CHILD_TIMEOUT,
        }
    }
}

impl Detector for SubprocessDetector {
    fn needs_pixels(&self) -> bool {
        true
    }

    fn detect(
        &self,
        frame: &FrameContext<'_>,
        window: &Window,
    ) -> Result<Vec<Detection>, BackendError> {
        let img = frame.image.ok_or(BackendError::MissingImage)?;
        let (x, y) = (window.origin_x.round() as u32, window.origin_y.round() as u32);
        let (w, h) = (window.width.round() as u32, window.height.round() as u32);
        let crop = image::imageops::crop_imm(img, x, y, w, h).to_image();
        let tmp = tempfile::Builder::new()
            .prefix("dronedet-window-")
            .suffix(".png")
            .tempfile()?;
        crop.save(tmp.path())
            .map_err(|e| BackendError::Io(std::io::Error::other(e)))?;
        run_detector_child(
            &self.executable,
            tmp.path(),
            frame.frame,
            window.kind.source(),
            self.timeout,
        )
    }
}

// ---------------------------------------------------------------------------
// mock backend

/// Scale-sensitivity model: a detection is dropped when its window-local box,
/// rescaled as if the window were resized to `input_px` on its longest side,
/// covers less than `min_area_px` square pixels. Mimics a fixed-input
/// detector losing small targets on large windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleCutoff {
    pub input_px: f64,
    pub min_area_px: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockDetectorConfig {
    /// Probability of dropping each ground-truth box.
    pub miss_prob: f64,
    /// Expected false positives per window (Poisson).
    pub fp_rate: f64,
    /// Uniform per-edge coordinate noise half-width, in pixels.
    pub jitter_px: f64,
    pub score_range: (f64, f64),
    pub rng_seed: u64,
    /// Uniform edge length range for false-positive boxes.
    pub fp_size_range: (f64, f64),
    pub scale_cutoff: Option<ScaleCutoff>,
}

impl Default for MockDetectorConfig {
    fn default() -> Self {
        Self {
            miss_prob: 0.0,
            fp_rate: 0.0,
            jitter_px: 0.0,
            score_range: (0.5, 1.0),
            rng_seed: 0,
            fp_size_range: (4.0, 24.0),
            scale_cutoff: None,
        }
    }
}

/// Knuth's product-of-uniforms sampler; exact for the small rates used here.
fn sample_poisson(rng: &mut impl Rng, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let limit = (-lambda).exp();
    let mut k: u64 = 0;
    let mut p = 1.0;
    loop {
        p *= rng.gen::<f64>();
        if p <= limit {
            return k;
        }
        k += 1;
    }
}

fn passes_cutoff(b: &BoundingBox, window: &Window, cutoff: &Option<ScaleCutoff>) -> bool {
    match cutoff {
        None => true,
        Some(c) => {
            let s = c.input_px / window.width.max(window.height);
            (b.width() * s) * (b.height() * s) >= c.min_area_px
        }
    }
}

/// Simulates a detector on one window given the frame's true boxes.
///
/// Each ground-truth box intersecting the window is emitted with probability
/// `1 - miss_prob`, jittered per edge, clipped to the window and scored
/// uniformly in `score_range`; Poisson(`fp_rate`) drone-labeled false
/// positives are added at uniform positions and sizes. Draws come only from
/// `rng`, so a derived per-(frame, window) seed makes the output independent
/// of scheduling.
pub fn mock_detect(
    gt_boxes: &[BoundingBox],
    window: &Window,
    frame: u64,
    cfg: &MockDetectorConfig,
    rng: &mut impl Rng,
) -> Vec<Detection> {
    let mut out = Vec::new();
    let wb = window.bounds();
    let (lo, hi) = cfg.score_range;
    for gt in gt_boxes {
        // draws happen for every candidate so the stream layout is stable
        let missed = rng.gen::<f64>() < cfg.miss_prob;
        let j = cfg.jitter_px.max(0.0);
        let d: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-j..=j));
        let score = quantize_score(rng.gen_range(lo..=hi));
        if missed || gt.intersection_area(&wb) <= 0.0 {
            continue;
        }
        let x1 = gt.x1 - window.origin_x + d[0];
        let y1 = gt.y1 - window.origin_y + d[1];
        let x2 = gt.x2 - window.origin_x + d[2];
        let y2 = gt.y2 - window.origin_y + d[3];
        let b = BoundingBox {
            x1,
            y1,
            x2: x2.max(x1),
            y2: y2.max(y1),
        }
        .clip(window.width, window.height);
        if b.area() <= 0.0 || !passes_cutoff(&b, window, &cfg.scale_cutoff) {
            continue;
        }
        out.push(
            Detection::new(b, Label::Drone, score, frame, window.kind.source())
                .expect("mock scores are in range"),
        );
    }

    let (smin, smax) = cfg.fp_size_range;
    for _ in 0..sample_poisson(rng, cfg.fp_rate) {
        let w = rng.gen_range(smin..=smax).min(window.width);
        let h = rng.gen_range(smin..=smax).min(window.height);
        let x = rng.gen_range(0.0..=(window.width - w).max(0.0));
        let y = rng.gen_range(0.0..=(window.height - h).max(0.0));
        let score = quantize_score(rng.gen_range(lo..=hi));
        let b = BoundingBox::from_xywh(x, y, w, h).expect("fp box is valid");
        if !passes_cutoff(&b, window, &cfg.scale_cutoff) {
            continue;
        }
        out.push(
            Detection::new(b, Label::Drone, score, frame, window.kind.source())
                .expect("mock scores are in range"),
        );
    }
    out
}

/// Ground-truth-aware in-process detector.
pub struct MockDetector {
    cfg: MockDetectorConfig,
    truth: BTreeMap<String, BTreeMap<u64, Vec<BoundingBox>>>,
}

impl MockDetector {
    pub fn new(cfg: MockDetectorConfig, ground_truth: &BTreeMap<String, GroundTruth>) -> Self {
        let truth = ground_truth
            .iter()
            .map(|(video, gt)| (video.clone(), gt.entries.clone()))
            .collect();
        Self { cfg, truth }
    }

    fn window_seed(&self, video: &str, frame: u64, window: &Window) -> u64 {
        seed::derive(
            self.cfg.rng_seed,
            &[seed::fnv1a(video), frame, window.kind.source().ordinal()],
        )
    }
}

impl Detector for MockDetector {
    fn detect(
        &self,
        frame: &FrameContext<'_>,
        window: &Window,
    ) -> Result<Vec<Detection>, BackendError> {
        let boxes = self
            .truth
            .get(frame.video)
            .and_then(|m| m.get(&frame.frame))
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        let mut rng = ChaCha8Rng::seed_from_u64(self.window_seed(frame.video, frame.frame, window));
        Ok(mock_detect(boxes, window, frame.frame, &self.cfg, &mut rng))
    }
}
