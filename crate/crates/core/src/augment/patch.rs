//! Transparent-background object cutouts and the photometric transforms
//! applied before pasting: blur, pixel dropout, additive noise and
//! brightness/contrast/gamma, each drawn from configured ranges.

use image::RgbaImage;
use rand::Rng;

use crate::geometry::Label;

use super::{AugmentConfig, AugmentError};

/// RGBA cutout with a class label. The opaque support touches all four raster
/// edges (construction tightens it).
#[derive(Debug, Clone, PartialEq)]
pub struct PatchAsset {
    pub pixels: RgbaImage,
    pub label: Label,
    pub id: String,
}

impl PatchAsset {
    pub fn from_image(pixels: RgbaImage, label: Label, id: impl Into<String>) -> Result<Self, AugmentError> {
        let id = id.into();
        let pixels = tighten(&pixels).ok_or_else(|| AugmentError::FullyTransparent(id.clone()))?;
        Ok(Self { pixels, label, id })
    }
}

/// Bounding rectangle of pixels with alpha > 0, as (x0, y0, x1, y1) with
/// exclusive far edges. None when everything is transparent.
pub(crate) fn opaque_support(img: &RgbaImage) -> Option<(u32, u32, u32, u32)> {
    let (mut x0, mut y0) = (u32::MAX, u32::MAX);
    let (mut x1, mut y1) = (0u32, 0u32);
    let mut any = false;
    for (x, y, px) in img.enumerate_pixels() {
        if px.0[3] > 0 {
            any = true;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x + 1);
            y1 = y1.max(y + 1);
        }
    }
    any.then_some((x0, y0, x1, y1))
}

pub(crate) fn tighten(img: &RgbaImage) -> Option<RgbaImage> {
    let (x0, y0, x1, y1) = opaque_support(img)?;
    Some(image::imageops::crop_imm(img, x0, y0, x1 - x0, y1 - y0).to_image())
}

/// Standard normal draw via Box-Muller; two uniforms per sample keeps the
/// stream layout independent of earlier draws.
fn gauss(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn draw_range(rng: &mut impl Rng, range: (f64, f64)) -> f64 {
    if range.0 >= range.1 {
        range.0
    } else {
        rng.gen_range(range.0..=range.1)
    }
}

/// Applies the enabled transforms with parameters drawn from the config
/// ranges. The alpha channel is blurred along with the color channels but
/// never gains opacity where it was fully transparent; the result is
/// re-tightened to its opaque support.
pub fn transform_patch(
    patch: &PatchAsset,
    cfg: &AugmentConfig,
    rng: &mut impl Rng,
) -> Result<PatchAsset, AugmentError> {
    let t = &cfg.transforms;
    let mut img = patch.pixels.clone();

    if let Some(range) = t.blur_sigma {
        let sigma = draw_range(rng, range);
        if sigma > 1e-3 {
            let blurred = image::imageops::blur(&img, sigma as f32);
            let mut out = blurred;
            for (src, dst) in patch.pixels.pixels().zip(out.pixels_mut()) {
                if src.0[3] == 0 {
                    dst.0[3] = 0;
                }
            }
            img = out;
        }
    }

    if let Some(range) = t.dropout_prob {
        let p = draw_range(rng, range);
        for px in img.pixels_mut() {
            if rng.gen::<f64>() < p {
                px.0[3] = 0;
            }
        }
    }

    if let Some(range) = t.noise_sigma {
        let sigma = draw_range(rng, range);
        for px in img.pixels_mut() {
            for c in 0..3 {
                let v = f64::from(px.0[c]) + gauss(rng) * sigma;
                px.0[c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }

    let brightness = t.brightness.map(|r| draw_range(rng, r));
    let contrast = t.contrast.map(|r| draw_range(rng, r));
    let gamma = t.gamma.map(|r| draw_range(rng, r));
    if brightness.is_some() || contrast.is_some() || gamma.is_some() {
        for px in img.pixels_mut() {
            for c in 0..3 {
                let mut v = f64::from(px.0[c]);
                if let Some(m) = brightness {
                    v *= m;
                }
                if let Some(k) = contrast {
                    v = (v - 128.0) * k + 128.0;
                }
                if let Some(g) = gamma {
                    v = 255.0 * (v.clamp(0.0, 255.0) / 255.0).powf(g);
                }
                px.0[c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }

    let pixels = tighten(&img).ok_or_else(|| AugmentError::FullyTransparent(patch.id.clone()))?;
    Ok(PatchAsset {
        pixels,
        label: patch.label,
        id: patch.id.clone(),
    })
}
