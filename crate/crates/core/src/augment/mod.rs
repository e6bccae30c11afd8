//! Copy-paste training-set augmentation: transformed drone/bird cutouts are
//! composited into images at sampled scales and positions, gated by a strict
//! zero-overlap rule and a ΔE color-consistency check, and the label files
//! are extended with the pasted boxes.

pub mod color;
mod dataset;
mod patch;
mod place;

pub use color::{delta_e, srgb_to_lab, Lab};
pub use dataset::{augment_dataset, load_patch_library, read_label_dir, AugmentSummary};
pub use patch::{transform_patch, PatchAsset};
pub use place::{place_instances, PlacementOutcome, PlacementStats};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("patch library is empty")]
    NoAssets,
    #[error("patch {0:?} has no opaque pixels")]
    FullyTransparent(String),
    #[error("bad patch file name {0:?}: expected <label>_<id>.<ext>")]
    BadPatchName(String),
    #[error("invalid augment config: {0}")]
    InvalidConfig(String),
    #[error("image {0}: {1}")]
    Image(String, String),
    #[error(transparent)]
    Ingest(#[from] crate::ingest::IngestError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-transform parameter ranges; `None` disables a transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformRanges {
    /// Gaussian blur sigma, pixels.
    pub blur_sigma: Option<(f64, f64)>,
    /// Per-pixel probability of dropping to full transparency.
    pub dropout_prob: Option<(f64, f64)>,
    /// Additive Gaussian noise sigma on 8-bit channels.
    pub noise_sigma: Option<(f64, f64)>,
    /// Multiplicative brightness factor.
    pub brightness: Option<(f64, f64)>,
    /// Contrast factor around mid-gray.
    pub contrast: Option<(f64, f64)>,
    /// Gamma exponent.
    pub gamma: Option<(f64, f64)>,
}

impl TransformRanges {
    pub fn none() -> Self {
        Self {
            blur_sigma: None,
            dropout_prob: None,
            noise_sigma: None,
            brightness: None,
            contrast: None,
            gamma: None,
        }
    }
}

impl Default for TransformRanges {
    fn default() -> Self {
        Self {
            blur_sigma: Some((0.0, 1.2)),
            dropout_prob: Some((0.0, 0.05)),
            noise_sigma: Some((0.0, 6.0)),
            brightness: Some((0.9, 1.1)),
            contrast: Some((0.9, 1.1)),
            gamma: Some((0.85, 1.2)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    /// Pasted patch width as a fraction of image width, sampled uniformly.
    pub scale_range: (f64, f64),
    pub max_instances: usize,
    /// Accept a placement only when ΔE(patch mean, region mean) stays at or
    /// below this value.
    pub delta_e_max: f64,
    pub max_placement_attempts: usize,
    pub rng_seed: u64,
    pub transforms: TransformRanges,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            scale_range: (0.02, 0.15),
            max_instances: 3,
            delta_e_max: 60.0,
            max_placement_attempts: 50,
            rng_seed: 0,
            transforms: TransformRanges::default(),
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(AugmentError::InvalidConfig(format!(
                "scale_range ({lo}, {hi}) must satisfy 0 < min <= max <= 1"
            )));
        }
        if !self.delta_e_max.is_finite() || self.delta_e_max < 0.0 {
            return Err(AugmentError::InvalidConfig(format!(
                "delta_e_max {} must be non-negative",
                self.delta_e_max
            )));
        }
        if self.max_placement_attempts == 0 {
            return Err(AugmentError::InvalidConfig(
                "max_placement_attempts must be positive".to_string(),
            ));
        }
        for (name, range) in [
            ("blur_sigma", self.transforms.blur_sigma),
            ("dropout_prob", self.transforms.dropout_prob),
            ("noise_sigma", self.transforms.noise_sigma),
            ("brightness", self.transforms.brightness),
            ("contrast", self.transforms.contrast),
            ("gamma", self.transforms.gamma),
        ] {
            if let Some((lo, hi)) = range {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(AugmentError::InvalidConfig(format!(
                        "{name} range ({lo}, {hi}) is not ordered"
                    )));
                }
            }
        }
        Ok(())
    }
}
