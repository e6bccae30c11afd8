//! Aggregate pipeline configuration plus the flat `key = value` config file
//! format accepted by the CLI's `--config` flag.

use std::path::PathBuf;
use std::time::Duration;

use crate::backend::{MockDetectorConfig, ScaleCutoff, DEFAULT_CHILD_TIMEOUT};
use crate::fusion::FusionConfig;
use crate::geometry::{Label, NmsMode};
use crate::temporal::TemporalConfig;
use crate::tiling::DEFAULT_FRACTION;

use super::PipelineError;

#[derive(Debug, Clone)]
pub enum BackendChoice {
    Mock(MockDetectorConfig),
    Subprocess {
        executable: PathBuf,
        timeout: Duration,
    },
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub fraction: f64,
    /// Ablation arm: process only the whole frame, skipping the corner tiles.
    pub whole_only: bool,
    pub fusion: FusionConfig,
    pub temporal: TemporalConfig,
    /// Temporal gap filling on/off.
    pub interpolate: bool,
    pub backend: BackendChoice,
    /// Worker cap for frame-level parallelism; 0 picks a default, 1 is
    /// strictly sequential.
    pub jobs: usize,
    /// Record failing frames and continue instead of aborting the video.
    pub skip_frame_errors: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            fraction: DEFAULT_FRACTION,
            whole_only: false,
            fusion: FusionConfig::default(),
            temporal: TemporalConfig::default(),
            interpolate: true,
            backend: BackendChoice::Mock(MockDetectorConfig::default()),
            jobs: 0,
            skip_frame_errors: false,
        }
    }
}

impl PipelineConfig {
    /// Applies a flat key=value config text. Unknown keys are errors; `#`
    /// starts a comment. CLI flags are expected to override these values.
    pub fn apply_kv_text(&mut self, text: &str) -> Result<(), PipelineError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(PipelineError::Config(format!(
                    "line {line}: expected `key = value`, got {trimmed:?}"
                )));
            };
            self.apply_kv(key.trim(), value.trim())
                .map_err(|e| PipelineError::Config(format!("line {line}: {e}")))?;
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num(value: &str) -> Result<f64, String> {
            let v: f64 = value.parse().map_err(|_| format!("bad number {value:?}"))?;
            if !v.is_finite() {
                return Err(format!("non-finite number {value:?}"));
            }
            Ok(v)
        }
        fn flag(value: &str) -> Result<bool, String> {
            match value {
                "true" | "1" | "yes" | "on" => Ok(true),
                "false" | "0" | "no" | "off" => Ok(false),
                other => Err(format!("bad boolean {other:?}")),
            }
        }
        fn int(value: &str) -> Result<u64, String> {
            value.parse().map_err(|_| format!("bad integer {value:?}"))
        }

        fn mock(backend: &mut BackendChoice) -> Result<&mut MockDetectorConfig, String> {
            match backend {
                BackendChoice::Mock(m) => Ok(m),
                BackendChoice::Subprocess { .. } => {
                    Err("mock option set while the backend is a subprocess".to_string())
                }
            }
        }

        match key {
            "fraction" => self.fraction = num(value)?,
            "whole_only" => self.whole_only = flag(value)?,
            "interpolate" => self.interpolate = flag(value)?,
            "jobs" => self.jobs = int(value)? as usize,
            "skip_frame_errors" => self.skip_frame_errors = flag(value)?,

            "nms_iou" => self.fusion.nms_iou = num(value)?,
            "score_threshold" => self.fusion.score_threshold = num(value)?,
            "keep_birds" => {
                self.fusion.report_labels = if flag(value)? {
                    vec![Label::Drone, Label::Bird]
                } else {
                    vec![Label::Drone]
                }
            }
            "class_agnostic_nms" => {
                self.fusion.nms_mode = if flag(value)? {
                    NmsMode::ClassAgnostic
                } else {
                    NmsMode::ClassAware
                }
            }

            "window" => self.temporal.window = int(value)? as usize,
            "match_iou" => self.temporal.match_iou = num(value)?,
            "border_margin" => self.temporal.border_margin = num(value)?,
            "veto_iou" => self.temporal.veto_iou = num(value)?,
            "confidence_divisor" => self.temporal.confidence_divisor = num(value)?,

            "backend" => {
                self.backend = if value == "mock" {
                    BackendChoice::Mock(MockDetectorConfig::default())
                } else {
                    BackendChoice::Subprocess {
                        executable: PathBuf::from(value),
                        timeout: DEFAULT_CHILD_TIMEOUT,
                    }
                }
            }
            "timeout_secs" => {
                let secs = num(value)?;
                if let BackendChoice::Subprocess { timeout, .. } = &mut self.backend {
                    *timeout = Duration::from_secs_f64(secs);
                } else {
                    return Err("timeout_secs set while the backend is the mock".to_string());
                }
            }

            "seed" | "rng_seed" => mock(&mut self.backend)?.rng_seed = int(value)?,
            "miss_prob" => mock(&mut self.backend)?.miss_prob = num(value)?,
            "fp_rate" => mock(&mut self.backend)?.fp_rate = num(value)?,
            "jitter_px" => mock(&mut self.backend)?.jitter_px = num(value)?,
            "score_lo" => mock(&mut self.backend)?.score_range.0 = num(value)?,
            "score_hi" => mock(&mut self.backend)?.score_range.1 = num(value)?,
            "fp_size_min" => mock(&mut self.backend)?.fp_size_range.0 = num(value)?,
            "fp_size_max" => mock(&mut self.backend)?.fp_size_range.1 = num(value)?,
            "cutoff_input_px" => {
                let m = mock(&mut self.backend)?;
                let cur = m.scale_cutoff.unwrap_or(ScaleCutoff {
                    input_px: 640.0,
                    min_area_px: 8.0,
                });
                m.scale_cutoff = Some(ScaleCutoff {
                    input_px: num(value)?,
                    ..cur
                });
            }
            "cutoff_min_area" => {
                let m = mock(&mut self.backend)?;
                let cur = m.scale_cutoff.unwrap_or(ScaleCutoff {
                    input_px: 640.0,
                    min_area_px: 8.0,
                });
                m.scale_cutoff = Some(ScaleCutoff {
                    min_area_px: num(value)?,
                    ..cur
                });
            }
            other => return Err(format!("unknown config key {other:?}")),
        }
        Ok(())
    }
}
