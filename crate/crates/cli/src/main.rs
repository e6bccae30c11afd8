//! `dronedet` — small-drone detection pipeline tools around a pluggable
//! detector: tile planning, per-window detection, fusion, temporal gap
//! filling, evaluation, copy-paste augmentation, synthetic scenes and
//! annotated rendering.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/parse error, 3 backend error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dronedet_core::augment::{augment_dataset, AugmentConfig, AugmentError};
use dronedet_core::evaluation::{evaluate, ApInterpolation};
use dronedet_core::fusion::FusionError;
use dronedet_core::geometry::Label;
use dronedet_core::ingest::{
    self, group_records_for_eval, parse_manifest, read_detections_file, read_gt_dir,
    records_to_videos, serialize_manifest, subsample_manifest, write_detections_file,
    IngestError,
};
use dronedet_core::pipeline::render::{render_annotations, RenderOptions};
use dronedet_core::pipeline::{fuse_records, run_pipeline, PipelineConfig, PipelineError};
use dronedet_core::synth::{parse_scene_spec, write_scene, SynthError};
use dronedet_core::temporal::interpolate_gaps;
use dronedet_core::tiling::{plan_tiles, TilePlan, TilingError};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_BACKEND: u8 = 3;

struct CmdError {
    code: u8,
    msg: String,
}

type CmdResult = Result<(), CmdError>;

fn usage(msg: impl Into<String>) -> CmdError {
    CmdError { code: EXIT_USAGE, msg: msg.into() }
}

fn data(msg: impl Into<String>) -> CmdError {
    CmdError { code: EXIT_DATA, msg: msg.into() }
}

impl From<IngestError> for CmdError {
    fn from(e: IngestError) -> Self {
        data(e.to_string())
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        data(e.to_string())
    }
}

impl From<TilingError> for CmdError {
    fn from(e: TilingError) -> Self {
        match e {
            TilingError::BadPlanLine { .. } => data(e.to_string()),
            _ => usage(e.to_string()),
        }
    }
}

impl From<FusionError> for CmdError {
    fn from(e: FusionError) -> Self {
        match e {
            FusionError::InvalidConfig(_) => usage(e.to_string()),
            FusionError::UnknownWindow(_) => data(e.to_string()),
        }
    }
}

impl From<SynthError> for CmdError {
    fn from(e: SynthError) -> Self {
        data(e.to_string())
    }
}

impl From<AugmentError> for CmdError {
    fn from(e: AugmentError) -> Self {
        match e {
            AugmentError::NoAssets | AugmentError::InvalidConfig(_) => usage(e.to_string()),
            other => data(other.to_string()),
        }
    }
}

impl From<PipelineError> for CmdError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Backend(_) => CmdError { code: EXIT_BACKEND, msg: e.to_string() },
            PipelineError::Config(_) => usage(e.to_string()),
            PipelineError::Tiling(t) => CmdError::from(t),
            PipelineError::Fusion(f) => CmdError::from(f),
            other => data(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "dronedet",
    version,
    about = "Small-drone detection pipeline tools: tiled multi-scale inference, fusion, temporal gap filling, augmentation and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct PipelineArgs {
    /// Flat key=value config file applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `mock` or a path to a detector executable.
    #[arg(long, default_value = "mock")]
    backend: String,
    /// Mock backend RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker cap; 0 = automatic, 1 = sequential.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Tile side as a fraction of the frame side.
    #[arg(long)]
    fraction: Option<f64>,
    /// Process only whole frames (no corner tiles).
    #[arg(long)]
    whole_only: bool,
    /// Ground-truth directory of `<video>.txt` files (required by the mock
    /// backend; enables evaluation in `run`).
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Record failing frames and continue instead of aborting the video.
    #[arg(long)]
    skip_frame_errors: bool,
}

impl PipelineArgs {
    fn build_config(&self) -> Result<PipelineConfig, CmdError> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)?;
            cfg.apply_kv_text(&text).map_err(CmdError::from)?;
        }
        if self.backend != "mock" {
            cfg.apply_kv("backend", &self.backend).map_err(usage)?;
        }
        if let Some(seed) = self.seed {
            cfg.apply_kv("seed", &seed.to_string()).map_err(usage)?;
        }
        cfg.jobs = self.jobs;
        if let Some(fraction) = self.fraction {
            cfg.fraction = fraction;
        }
        if self.whole_only {
            cfg.whole_only = true;
        }
        if self.skip_frame_errors {
            cfg.skip_frame_errors = true;
        }
        Ok(cfg)
    }

    fn load_gt(
        &self,
    ) -> Result<Option<BTreeMap<String, dronedet_core::evaluation::GroundTruth>>, CmdError> {
        match &self.gt {
            Some(dir) => Ok(Some(read_gt_dir(dir)?)),
            None => Ok(None),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the five-window crop plan for a frame size.
    PlanTiles {
        #[arg(long)]
        width: u32,
        #[arg(long)]
        height: u32,
        #[arg(long, default_value_t = 0.55)]
        fraction: f64,
    },
    /// Run the backend over every window of every manifest frame; emit raw
    /// window-local detections.
    Detect {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Fuse raw per-window detections into per-frame sets using a tile plan.
    Fuse {
        /// Plan file in `plan-tiles` output format.
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        nms_iou: Option<f64>,
        #[arg(long)]
        score: Option<f64>,
        /// Report bird detections too instead of dropping them.
        #[arg(long)]
        keep_birds: bool,
        /// Tolerate unknown fields in the input.
        #[arg(long)]
        lenient: bool,
    },
    /// Fill temporal detection gaps by linear interpolation.
    Interpolate {
        #[arg(long)]
        detections: PathBuf,
        /// Frame size as WxH, e.g. 1920x1080.
        #[arg(long)]
        frame_size: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        match_iou: Option<f64>,
        /// Border margin as a fraction of the larger frame side.
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long)]
        veto_iou: Option<f64>,
        #[arg(long)]
        divisor: Option<f64>,
        /// Timeline stride used to reconstruct gap frames between the lowest
        /// and highest frame index per video.
        #[arg(long, default_value_t = 1)]
        stride: u64,
    },
    /// Score detections against ground truth (AP at a fixed IoU).
    Evaluate {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        #[arg(long, default_value = "allpoints")]
        interp: String,
        /// Also write the per-video table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Copy-paste augmentation over an image/label directory pair.
    Augment {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        patches: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_instances: Option<usize>,
        /// Scale range as MIN:MAX fractions of image width, e.g. 0.02:0.15.
        #[arg(long)]
        scale: Option<String>,
        #[arg(long)]
        delta_e_max: Option<f64>,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Render a synthetic scene from a spec file.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw detections (and ground truth) onto frames.
    Render {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Skip the score text next to each box.
        #[arg(long)]
        no_scores: bool,
    },
    /// Full pipeline: detect, fuse, interpolate, optionally evaluate.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write the evaluation table as CSV (needs --gt).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Disable temporal interpolation.
        #[arg(long)]
        no_interpolate: bool,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Keep every N-th manifest entry per video.
    Subsample {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        stride: usize,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_frame_size(s: &str) -> Result<(f64, f64), CmdError> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| usage(format!("--frame-size must be WxH, got {s:?}")))?;
    let parse = |v: &str| -> Result<f64, CmdError> {
        let n: f64 = v
            .parse()
            .map_err(|_| usage(format!("bad frame dimension {v:?}")))?;
        if !n.is_finite() || n <= 0.0 {
            return Err(usage(format!("frame dimension {v} must be positive")));
        }
        Ok(n)
    };
    Ok((parse(w)?, parse(h)?))
}

fn cmd_plan_tiles(width: u32, height: u32, fraction: f64) -> CmdResult {
    let plan = plan_tiles(width, height, fraction)?;
    print!("{}", plan.to_text());
    Ok(())
}

fn cmd_detect(manifest: &Path, out: &Path, args: &PipelineArgs) -> CmdResult {
    let cfg = args.build_config()?;
    let gt = args.load_gt()?;
    let entries = parse_manifest(&std::fs::read_to_string(manifest)?)?;
    let records = dronedet_core::pipeline::run_detect(&entries, gt.as_ref(), &cfg)?;
    write_detections_file(out, &records)?;
    eprintln!("wrote {} raw detections to {}", records.len(), out.display());
    Ok(())
}

fn cmd_fuse(
    plan: &Path,
    detections: &Path,
    out: &Path,
    nms_iou: Option<f64>,
    score: Option<f64>,
    keep_birds: bool,
    lenient: bool,
) -> CmdResult {
    let plan = TilePlan::from_text(&std::fs::read_to_string(plan)?)?;
    let records = read_detections_file(detections, !lenient)?;
    let mut cfg = PipelineConfig::default();
    if let Some(v) = nms_iou {
        cfg.fusion.nms_iou = v;
    }
    if let Some(v) = score {
        cfg.fusion.score_threshold = v;
    }
    if keep_birds {
        cfg.fusion.report_labels = vec![Label::Drone, Label::Bird];
    }
    let fused = fuse_records(&records, &plan, &cfg)?;
    write_detections_file(out, &fused)?;
    eprintln!("fused {} -> {} detections", records.len(), fused.len());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_interpolate(
    detections: &Path,
    frame_size: &str,
    out: &Path,
    window: Option<usize>,
    match_iou: Option<f64>,
    margin: Option<f64>,
    veto_iou: Option<f64>,
    divisor: Option<f64>,
    stride: u64,
) -> CmdResult {
    let (w, h) = parse_frame_size(frame_size)?;
    let records = read_detections_file(detections, true)?;
    let mut cfg = dronedet_core::temporal::TemporalConfig::default();
    if let Some(v) = window {
        cfg.window = v;
    }
    if let Some(v) = match_iou {
        cfg.match_iou = v;
    }
    if let Some(v) = margin {
        cfg.border_margin = v;
    }
    if let Some(v) = veto_iou {
        cfg.veto_iou = v;
    }
    if let Some(v) = divisor {
        if v <= 0.0 {
            return Err(usage("--divisor must be positive"));
        }
        cfg.confidence_divisor = v;
    }
    let videos = records_to_videos(&records, w, h, stride)?;
    let mut filled = BTreeMap::new();
    let mut added = 0usize;
    for (video, v) in videos {
        let out_v = interpolate_gaps(&v, &cfg);
        added += out_v.total_detections() - v.total_detections();
        filled.insert(video, out_v);
    }
    let out_records = ingest::videos_to_records(&filled);
    write_detections_file(out, &out_records)?;
    eprintln!("interpolation added {added} detections");
    Ok(())
}

fn cmd_evaluate(
    detections: &Path,
    gt_dir: &Path,
    iou: f64,
    interp: &str,
    csv: Option<&Path>,
) -> CmdResult {
    let interp = match interp {
        "allpoints" => ApInterpolation::AllPoints,
        "11point" => ApInterpolation::ElevenPoint,
        other => return Err(usage(format!("--interp must be allpoints or 11point, got {other:?}"))),
    };
    if !(0.0..=1.0).contains(&iou) {
        return Err(usage(format!("--iou {iou} outside [0, 1]")));
    }
    let records = read_detections_file(detections, true)?;
    let videos = group_records_for_eval(&records)?;
    let gts = read_gt_dir(gt_dir)?;
    let report = evaluate(&videos, &gts, iou, interp).map_err(|e| data(e.to_string()))?;
    println!("{report}");
    if let Some(path) = csv {
        std::fs::write(path, report.to_csv())?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_augment(
    images: &Path,
    labels: &Path,
    patches: &Path,
    out: &Path,
    seed: u64,
    max_instances: Option<usize>,
    scale: Option<&str>,
    delta_e_max: Option<f64>,
    jobs: usize,
) -> CmdResult {
    let mut cfg = AugmentConfig {
        rng_seed: seed,
        ..AugmentConfig::default()
    };
    if let Some(v) = max_instances {
        cfg.max_instances = v;
    }
    if let Some(s) = scale {
        let (lo, hi) = s
            .split_once(':')
            .ok_or_else(|| usage(format!("--scale must be MIN:MAX, got {s:?}")))?;
        let parse = |v: &str| -> Result<f64, CmdError> {
            v.parse().map_err(|_| usage(format!("bad scale {v:?}")))
        };
        cfg.scale_range = (parse(lo)?, parse(hi)?);
    }
    if let Some(v) = delta_e_max {
        cfg.delta_e_max = v;
    }
    let summary = augment_dataset(images, labels, patches, out, &cfg, jobs)?;
    print!("{}", summary.render());
    Ok(())
}

fn cmd_synth(spec: &Path, out: &Path) -> CmdResult {
    let scene = parse_scene_spec(&std::fs::read_to_string(spec)?)?;
    let files = write_scene(&scene, out)?;
    eprintln!(
        "wrote {} frames, ground truth {} and manifest {}",
        files.frames.len(),
        files.gt_file.display(),
        files.manifest_file.display()
    );
    Ok(())
}

fn cmd_render(
    manifest: &Path,
    detections: &Path,
    out: &Path,
    gt: Option<&Path>,
    no_scores: bool,
) -> CmdResult {
    let entries = parse_manifest(&std::fs::read_to_string(manifest)?)?;
    let records = read_detections_file(detections, true)?;
    let gts = match gt {
        Some(dir) => Some(read_gt_dir(dir)?),
        None => None,
    };
    let opts = RenderOptions {
        draw_scores: !no_scores,
        draw_ground_truth: gts.is_some(),
    };
    let summary = render_annotations(&entries, &records, gts.as_ref(), out, &opts)?;
    eprintln!("rendered {} frames", summary.rendered);
    for (video, frame, msg) in &summary.failures {
        eprintln!("render failure {video} frame {frame}: {msg}");
    }
    if summary.failures.is_empty() {
        Ok(())
    } else {
        Err(data(format!("{} frames failed to render", summary.failures.len())))
    }
}

fn cmd_run(
    manifest: &Path,
    out: &Path,
    csv: Option<&Path>,
    no_interpolate: bool,
    args: &PipelineArgs,
) -> CmdResult {
    let mut cfg = args.build_config()?;
    if no_interpolate {
        cfg.interpolate = false;
    }
    let gt = args.load_gt()?;
    let entries = parse_manifest(&std::fs::read_to_string(manifest)?)?;
    let output = run_pipeline(&entries, gt.as_ref(), &cfg)?;
    write_detections_file(out, &output.records)?;

    let s = &output.summary;
    eprintln!(
        "frames: {}  detections: {}  interpolated: {}",
        s.frames, s.detections, s.interpolated
    );
    for (video, frame, msg) in &s.frame_failures {
        eprintln!("frame failure {video} frame {frame}: {msg}");
    }
    if let Some(report) = &output.report {
        println!("{report}");
        if let Some(path) = csv {
            std::fs::write(path, report.to_csv())?;
        }
    }
    if !s.video_failures.is_empty() {
        for (video, msg) in &s.video_failures {
            eprintln!("video aborted {video}: {msg}");
        }
        return Err(CmdError {
            code: EXIT_BACKEND,
            msg: format!("{} video(s) aborted by backend errors", s.video_failures.len()),
        });
    }
    Ok(())
}

fn cmd_subsample(manifest: &Path, stride: usize, out: Option<&Path>) -> CmdResult {
    let entries = parse_manifest(&std::fs::read_to_string(manifest)?)?;
    let kept = subsample_manifest(&entries, stride)?;
    let text = serialize_manifest(&kept);
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn dispatch(cli: Cli) -> CmdResult {
    match cli.command {
        Command::PlanTiles { width, height, fraction } => cmd_plan_tiles(width, height, fraction),
        Command::Detect { manifest, out, pipeline } => cmd_detect(&manifest, &out, &pipeline),
        Command::Fuse { plan, detections, out, nms_iou, score, keep_birds, lenient } => {
            cmd_fuse(&plan, &detections, &out, nms_iou, score, keep_birds, lenient)
        }
        Command::Interpolate {
            detections,
            frame_size,
            out,
            window,
            match_iou,
            margin,
            veto_iou,
            divisor,
            stride,
        } => cmd_interpolate(
            &detections,
            &frame_size,
            &out,
            window,
            match_iou,
            margin,
            veto_iou,
            divisor,
            stride,
        ),
        Command::Evaluate { detections, gt, iou, interp, csv } => {
            cmd_evaluate(&detections, &gt, iou, &interp, csv.as_deref())
        }
        Command::Augment {
            images,
            labels,
            patches,
            out,
            seed,
            max_instances,
            scale,
            delta_e_max,
            jobs,
        } => cmd_augment(
            &images,
            &labels,
            &patches,
            &out,
            seed,
            max_instances,
            scale.as_deref(),
            delta_e_max,
            jobs,
        ),
        Command::Synth { spec, out } => cmd_synth(&spec, &out),
        Command::Render { manifest, detections, out, gt, no_scores } => {
            cmd_render(&manifest, &detections, &out, gt.as_deref(), no_scores)
        }
        Command::Run { manifest, out, csv, no_interpolate, pipeline } => {
            cmd_run(&manifest, &out, csv.as_deref(), no_interpolate, &pipeline)
        }
        Command::Subsample { manifest, stride, out } => {
            cmd_subsample(&manifest, stride, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // keep clap's rendered help/version on stdout semantics
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(EXIT_USAGE);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CmdError { code, msg }) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
