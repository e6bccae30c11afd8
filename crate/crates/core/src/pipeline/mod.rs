//! End-to-end orchestration: crop plan, per-window detection, per-frame
//! fusion, per-video temporal filling, canonical output and optional
//! evaluation. Frames of a video are processed in parallel up to the job
//! cap; the temporal stage is a per-video barrier.

mod config;
pub mod render;

pub use config::{BackendChoice, PipelineConfig};

use std::collections::BTreeMap;
use std::path::PathBuf;

use thiserror::Error;

use crate::backend::{BackendError, Detector, FrameContext, MockDetector, SubprocessDetector};
use crate::evaluation::{evaluate, ApInterpolation, EvalError, EvalReport, GroundTruth};
use crate::exec;
use crate::fusion::{fuse_frame, FusionError};
use crate::geometry::{Detection, Source};
use crate::ingest::{
    canonical_sort, DetectionRecord, IngestError, ManifestEntry,
};
use crate::temporal::{interpolate_gaps, VideoDetections};
use crate::tiling::{plan_tiles, TilePlan, TilingError, Window};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Tiling(#[from] TilingError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
    #[error("{0}")]
    Data(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    pub fn is_backend(&self) -> bool {
        matches!(self, PipelineError::Backend(_))
    }
}

/// One frame of work within a video. `path` may be absent for backends that
/// do not need pixels (the mock).
#[derive(Debug, Clone)]
pub struct FrameJob {
    pub frame: u64,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Default, Clone)]
pub struct RunSummary {
    pub frames: usize,
    pub detections: usize,
    pub interpolated: usize,
    /// (video, frame, error) for frames skipped in skip-frame mode.
    pub frame_failures: Vec<(String, u64, String)>,
    /// (video, error) for videos aborted by backend errors.
    pub video_failures: Vec<(String, String)>,
}

pub struct RunOutput {
    pub records: Vec<DetectionRecord>,
    pub report: Option<EvalReport>,
    pub summary: RunSummary,
}

fn build_backend(
    cfg: &PipelineConfig,
    ground_truth: Option<&BTreeMap<String, GroundTruth>>,
) -> Result<Box<dyn Detector>, PipelineError> {
    match &cfg.backend {
        BackendChoice::Mock(mock_cfg) => {
            let gt = ground_truth.ok_or_else(|| {
                PipelineError::Config("the mock backend requires ground truth".to_string())
            })?;
            Ok(Box::new(MockDetector::new(mock_cfg.clone(), gt)))
        }
        BackendChoice::Subprocess {
            executable,
            timeout,
        } => Ok(Box::new(SubprocessDetector {
            executable: executable.clone(),
            timeout: *timeout,
        })),
    }
}

fn active_windows<'a>(plan: &'a TilePlan, whole_only: bool) -> Vec<&'a Window> {
    if whole_only {
        plan.windows.iter().take(1).collect()
    } else {
        plan.windows.iter().collect()
    }
}

/// Runs the backend over every active window of one frame, returning
/// window-local detections keyed by source.
fn detect_frame(
    video: &str,
    job: &FrameJob,
    windows: &[&Window],
    backend: &dyn Detector,
) -> Result<BTreeMap<Source, Vec<Detection>>, PipelineError> {
    let image = if backend.needs_pixels() {
        let path = job.path.as_ref().ok_or_else(|| {
            PipelineError::Data(format!(
                "video {video} frame {}: backend needs pixels but the manifest entry has no path",
                job.frame
            ))
        })?;
        Some(
            image::open(path)
                .map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?
                .to_rgb8(),
        )
    } else {
        None
    };
    let ctx = FrameContext {
        video,
        frame: job.frame,
        image: image.as_ref(),
    };
    let mut per_source = BTreeMap::new();
    for window in windows {
        let dets = backend.detect(&ctx, window)?;
        per_source.insert(window.kind.source(), dets);
    }
    Ok(per_source)
}

/// Detects and fuses every frame of one video, then fills temporal gaps.
/// Returns the finished timeline plus per-frame failures when
/// `skip_frame_errors` is on.
pub fn process_video(
    video: &str,
    width: u32,
    height: u32,
    frames: &[FrameJob],
    backend: &dyn Detector,
    cfg: &PipelineConfig,
) -> Result<(VideoDetections, Vec<(u64, String)>), PipelineError> {
    let plan = plan_tiles(width, height, cfg.fraction)?;
    let windows = active_windows(&plan, cfg.whole_only);

    let fused: Vec<Result<Vec<Detection>, PipelineError>> =
        exec::map_ordered(frames, cfg.jobs, |job| {
            let per_source = detect_frame(video, job, &windows, backend)?;
            Ok(fuse_frame(&per_source, &plan, &cfg.fusion)?)
        });

    let mut v = VideoDetections::new(video, plan.frame_width, plan.frame_height);
    v.frame_stride = infer_stride(frames);
    let mut failures = Vec::new();
    for (job, result) in frames.iter().zip(fused) {
        if v.frames.contains_key(&job.frame) {
            return Err(PipelineError::Data(format!(
                "video {video}: duplicate frame index {}",
                job.frame
            )));
        }
        match result {
            Ok(dets) => {
                v.frames.insert(job.frame, dets);
            }
            Err(e) if cfg.skip_frame_errors => {
                failures.push((job.frame, e.to_string()));
                v.frames.insert(job.frame, Vec::new());
            }
            Err(e) => return Err(e),
        }
    }

    if cfg.interpolate {
        v = interpolate_gaps(&v, &cfg.temporal);
    }
    Ok((v, failures))
}

fn infer_stride(frames: &[FrameJob]) -> u64 {
    if frames.len() < 2 {
        return 1;
    }
    let step = frames[1].frame.saturating_sub(frames[0].frame);
    if step == 0 {
        return 1;
    }
    for pair in frames.windows(2) {
        if pair[1].frame.saturating_sub(pair[0].frame) != step {
            return 1;
        }
    }
    step
}

/// Raw per-window detection pass (the `detect` stage): records keep
/// window-local coordinates and their source tag, ready for `fuse`.
pub fn detect_to_records(
    video: &str,
    frames: &[FrameJob],
    width: u32,
    height: u32,
    backend: &dyn Detector,
    cfg: &PipelineConfig,
) -> Result<Vec<DetectionRecord>, PipelineError> {
    let plan = plan_tiles(width, height, cfg.fraction)?;
    let windows = active_windows(&plan, cfg.whole_only);
    let per_frame: Vec<Result<BTreeMap<Source, Vec<Detection>>, PipelineError>> =
        exec::map_ordered(frames, cfg.jobs, |job| {
            detect_frame(video, job, &windows, backend)
        });
    let mut records = Vec::new();
    for result in per_frame {
        for dets in result?.into_values() {
            records.extend(dets.iter().map(|d| DetectionRecord::from_detection(video, d)));
        }
    }
    canonical_sort(&mut records);
    Ok(records)
}

/// Re-groups raw per-window records by frame and fuses them against one plan.
/// This is the `fuse` CLI stage; `run` produces identical output in-process.
pub fn fuse_records(
    records: &[DetectionRecord],
    plan: &TilePlan,
    cfg: &PipelineConfig,
) -> Result<Vec<DetectionRecord>, PipelineError> {
    let mut grouped: BTreeMap<(String, u64), BTreeMap<Source, Vec<Detection>>> = BTreeMap::new();
    for rec in records {
        let det = rec.to_detection()?;
        grouped
            .entry((rec.video.clone(), rec.frame))
            .or_default()
            .entry(det.source)
            .or_default()
            .push(det);
    }
    let mut out = Vec::new();
    for ((video, _frame), per_source) in &grouped {
        let fused = fuse_frame(per_source, plan, &cfg.fusion)?;
        out.extend(fused.iter().map(|d| DetectionRecord::from_detection(video, d)));
    }
    canonical_sort(&mut out);
    Ok(out)
}

/// Manifest-level raw detection pass over every video (the `detect`
/// subcommand): groups entries, reads frame sizes, runs the backend per
/// window and returns canonical window-local records.
pub fn run_detect(
    manifest: &[ManifestEntry],
    ground_truth: Option<&BTreeMap<String, GroundTruth>>,
    cfg: &PipelineConfig,
) -> Result<Vec<DetectionRecord>, PipelineError> {
    let backend = build_backend(cfg, ground_truth)?;
    let videos = group_manifest(manifest)?;
    let mut records = Vec::new();
    for (video, entries) in &videos {
        let (w, h) = video_frame_size(entries)?;
        let jobs: Vec<FrameJob> = entries
            .iter()
            .map(|e| FrameJob {
                frame: e.frame,
                path: Some(e.path.clone()),
            })
            .collect();
        records.extend(detect_to_records(video, &jobs, w, h, backend.as_ref(), cfg)?);
    }
    canonical_sort(&mut records);
    Ok(records)
}

fn group_manifest(
    manifest: &[ManifestEntry],
) -> Result<BTreeMap<String, Vec<ManifestEntry>>, PipelineError> {
    let mut videos: BTreeMap<String, Vec<ManifestEntry>> = BTreeMap::new();
    for entry in manifest {
        videos.entry(entry.video.clone()).or_default().push(entry.clone());
    }
    for entries in videos.values_mut() {
        entries.sort_by_key(|e| e.frame);
        for pair in entries.windows(2) {
            if pair[0].frame == pair[1].frame {
                return Err(PipelineError::Data(format!(
                    "video {}: duplicate frame index {}",
                    pair[0].video, pair[0].frame
                )));
            }
        }
    }
    Ok(videos)
}

fn video_frame_size(entries: &[ManifestEntry]) -> Result<(u32, u32), PipelineError> {
    let first = &entries[0];
    let (w, h) = image::image_dimensions(&first.path)
        .map_err(|e| PipelineError::Data(format!("{}: {e}", first.path.display())))?;
    for entry in &entries[1..] {
        let (ew, eh) = image::image_dimensions(&entry.path)
            .map_err(|e| PipelineError::Data(format!("{}: {e}", entry.path.display())))?;
        if (ew, eh) != (w, h) {
            return Err(PipelineError::Data(format!(
                "video {}: frame {} is {}x{} but the video started at {}x{}",
                entry.video, entry.frame, ew, eh, w, h
            )));
        }
    }
    Ok((w, h))
}

/// The full `run` flow over a frame manifest. Backend errors abort the
/// affected video (recorded in the summary) while other videos continue;
/// any other error aborts the run.
pub fn run_pipeline(
    manifest: &[ManifestEntry],
    ground_truth: Option<&BTreeMap<String, GroundTruth>>,
    cfg: &PipelineConfig,
) -> Result<RunOutput, PipelineError> {
    let backend = build_backend(cfg, ground_truth)?;
    let videos = group_manifest(manifest)?;
    let mut summary = RunSummary::default();
    let mut finished: BTreeMap<String, VideoDetections> = BTreeMap::new();

    for (video, entries) in &videos {
        let (w, h) = video_frame_size(entries)?;
        let jobs: Vec<FrameJob> = entries
            .iter()
            .map(|e| FrameJob {
                frame: e.frame,
                path: Some(e.path.clone()),
            })
            .collect();
        summary.frames += jobs.len();
        match process_video(video, w, h, &jobs, backend.as_ref(), cfg) {
            Ok((v, failures)) => {
                summary
                    .frame_failures
                    .extend(failures.into_iter().map(|(f, e)| (video.clone(), f, e)));
                summary.interpolated += v
                    .iter_all()
                    .filter(|d| d.source == Source::Interpolated)
                    .count();
                summary.detections += v.total_detections();
                finished.insert(video.clone(), v);
            }
            Err(e) if e.is_backend() => {
                summary.video_failures.push((video.clone(), e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }

    let records = crate::ingest::videos_to_records(&finished);
    let report = match ground_truth {
        Some(gt) => Some(evaluate(&finished, gt, 0.5, ApInterpolation::AllPoints)?),
        None => None,
    };
    Ok(RunOutput {
        records,
        report,
        summary,
    })
}
