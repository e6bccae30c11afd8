//! Batch copy-paste augmentation over an image + label directory pair.
//! Per-image seeds are derived from the base seed and the file name, so the
//! result does not depend on processing order and images can run in parallel.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::exec;
use crate::geometry::{BoundingBox, Label};
use crate::ingest::{parse_normalized_labels, serialize_normalized_labels};
use crate::seed;

use super::place::{place_instances, PlacementStats};
use super::patch::PatchAsset;
use super::{AugmentConfig, AugmentError};

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

/// Loads every `<label>_<id>.<ext>` RGBA file in a directory, sorted by name.
pub fn load_patch_library(dir: &Path) -> Result<Vec<PatchAsset>, AugmentError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    paths.sort();
    let mut assets = Vec::new();
    for path in paths {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| AugmentError::BadPatchName(path.display().to_string()))?;
        let (label_str, id) = stem
            .split_once('_')
            .ok_or_else(|| AugmentError::BadPatchName(stem.to_string()))?;
        let label: Label = label_str
            .parse()
            .map_err(|_| AugmentError::BadPatchName(stem.to_string()))?;
        let img = image::open(&path)
            .map_err(|e| AugmentError::Image(path.display().to_string(), e.to_string()))?
            .to_rgba8();
        assets.push(PatchAsset::from_image(img, label, id)?);
    }
    Ok(assets)
}

/// Per-run accounting; failures do not abort the batch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AugmentSummary {
    pub images: usize,
    pub stats: PlacementStats,
    pub failures: Vec<(String, String)>,
}

impl AugmentSummary {
    pub fn render(&self) -> String {
        let s = &self.stats;
        let mut out = format!(
            "images: {}\nplaced: {}\nrejected_overlap: {}\nrejected_delta_e: {}\nskipped_no_fit: {}\nskipped_transparent: {}\n",
            self.images, s.placed, s.rejected_overlap, s.rejected_delta_e, s.skipped_no_fit, s.skipped_transparent
        );
        for (file, err) in &self.failures {
            out.push_str(&format!("error {file}: {err}\n"));
        }
        out
    }
}

enum FileOutcome {
    Done(PlacementStats),
    Failed(String),
}

fn augment_one(
    image_path: &Path,
    file_name: &str,
    labels_dir: &Path,
    assets: &[PatchAsset],
    cfg: &AugmentConfig,
    out_images: &Path,
    out_labels: &Path,
) -> Result<PlacementStats, String> {
    let stem = Path::new(file_name)
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| format!("bad file name {file_name:?}"))?
        .to_string();

    let image = image::open(image_path)
        .map_err(|e| format!("unreadable image: {e}"))?
        .to_rgb8();
    let (img_w, img_h) = (f64::from(image.width()), f64::from(image.height()));

    let label_path = labels_dir.join(format!("{stem}.txt"));
    let existing: Vec<(Label, BoundingBox)> = if label_path.exists() {
        let text = fs::read_to_string(&label_path).map_err(|e| e.to_string())?;
        parse_normalized_labels(&text, img_w, img_h).map_err(|e| format!("labels: {e}"))?
    } else {
        Vec::new()
    };

    let image_seed = cfg.rng_seed ^ seed::fnv1a(file_name);
    let mut rng = ChaCha8Rng::seed_from_u64(image_seed);
    let outcome =
        place_instances(&image, &existing, assets, cfg, &mut rng).map_err(|e| e.to_string())?;

    if outcome.added.is_empty() {
        // nothing changed: pass the original file through byte-identically
        fs::copy(image_path, out_images.join(file_name)).map_err(|e| e.to_string())?;
    } else {
        outcome
            .image
            .save(out_images.join(format!("{stem}.png")))
            .map_err(|e| e.to_string())?;
    }

    let mut merged = existing;
    merged.extend(outcome.added.iter().cloned());
    let text = serialize_normalized_labels(&merged, img_w, img_h);
    fs::write(out_labels.join(format!("{stem}.txt")), text).map_err(|e| e.to_string())?;
    Ok(outcome.stats)
}

/// Runs copy-paste augmentation over a directory of images, writing augmented
/// images to `<out>/images` and merged label files to `<out>/labels`.
/// Unreadable inputs are recorded per file and the batch continues.
pub fn augment_dataset(
    images_dir: &Path,
    labels_dir: &Path,
    patches_dir: &Path,
    out_dir: &Path,
    cfg: &AugmentConfig,
    jobs: usize,
) -> Result<AugmentSummary, AugmentError> {
    cfg.validate()?;
    let assets = load_patch_library(patches_dir)?;
    if assets.is_empty() {
        return Err(AugmentError::NoAssets);
    }

    let mut files: Vec<(PathBuf, String)> = fs::read_dir(images_dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .filter_map(|p| {
            let name = p.file_name()?.to_str()?.to_string();
            Some((p, name))
        })
        .collect();
    files.sort();

    let out_images = out_dir.join("images");
    let out_labels = out_dir.join("labels");
    fs::create_dir_all(&out_images)?;
    fs::create_dir_all(&out_labels)?;

    let outcomes = exec::map_ordered(&files, jobs, |(path, name)| {
        match augment_one(path, name, labels_dir, &assets, cfg, &out_images, &out_labels) {
            Ok(stats) => FileOutcome::Done(stats),
            Err(msg) => FileOutcome::Failed(msg),
        }
    });

    let mut summary = AugmentSummary {
        images: files.len(),
        ..AugmentSummary::default()
    };
    for ((_, name), outcome) in files.iter().zip(outcomes) {
        match outcome {
            FileOutcome::Done(stats) => {
                summary.stats.placed += stats.placed;
                summary.stats.rejected_overlap += stats.rejected_overlap;
                summary.stats.rejected_delta_e += stats.rejected_delta_e;
                summary.stats.skipped_no_fit += stats.skipped_no_fit;
                summary.stats.skipped_transparent += stats.skipped_transparent;
            }
            FileOutcome::Failed(msg) => summary.failures.push((name.clone(), msg)),
        }
    }
    Ok(summary)
}

/// Reads back merged labels, used by tests and the CLI report.
pub fn read_label_dir(
    dir: &Path,
    image_w: f64,
    image_h: f64,
) -> Result<BTreeMap<String, Vec<(Label, BoundingBox)>>, AugmentError> {
    let mut out = BTreeMap::new();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    paths.sort();
    for path in paths {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let text = fs::read_to_string(&path)?;
        let items = parse_normalized_labels(&text, image_w, image_h)?;
        out.insert(stem, items);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::TransformRanges;
    use super::*;
    use image::{Rgb, RgbImage, Rgba, RgbaImage};

    fn write_fixture(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
        let images = dir.join("images");
        let labels = dir.join("labels");
        let patches = dir.join("patches");
        fs::create_dir_all(&images).unwrap();
        fs::create_dir_all(&labels).unwrap();
        fs::create_dir_all(&patches).unwrap();

        for (name, shade) in [("a.png", 100u8), ("b.png", 140u8)] {
            RgbImage::from_pixel(160, 120, Rgb([shade, shade, shade]))
                .save(images.join(name))
                .unwrap();
        }
        fs::write(labels.join("a.txt"), "0 0.5 0.5 0.1 0.1\n").unwrap();

        RgbaImage::from_pixel(20, 20, Rgba([120, 120, 120, 255]))
            .save(patches.join("drone_one.png"))
            .unwrap();
        RgbaImage::from_pixel(16, 12, Rgba([135, 135, 135, 255]))
            .save(patches.join("bird_two.png"))
            .unwrap();
        (images, labels, patches)
    }

    fn quiet_cfg() -> AugmentConfig {
        AugmentConfig {
            rng_seed: 77,
            transforms: TransformRanges::none(),
            ..AugmentConfig::default()
        }
    }

    #[test]
    fn patch_library_parses_names() {
        let dir = tempfile::tempdir().unwrap();
        let (_, _, patches) = write_fixture(dir.path());
        let assets = load_patch_library(&patches).unwrap();
        assert_eq!(assets.len(), 2);
        assert_eq!(assets[0].label, Label::Bird); // bird_two sorts first
        assert_eq!(assets[1].label, Label::Drone);
        assert_eq!(assets[1].id, "one");
    }

    #[test]
    fn bad_patch_name_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        RgbaImage::from_pixel(4, 4, Rgba([1, 1, 1, 255]))
            .save(dir.path().join("nounderscore.png"))
            .unwrap();
        assert!(matches!(
            load_patch_library(dir.path()),
            Err(AugmentError::BadPatchName(_))
        ));
    }

    #[test]
    fn empty_input_directory_is_an_empty_report() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels, patches) = write_fixture(dir.path());
        // wipe images
        for e in fs::read_dir(&images).unwrap() {
            fs::remove_file(e.unwrap().path()).unwrap();
        }
        let out = dir.path().join("out");
        let summary =
            augment_dataset(&images, &labels, &patches, &out, &quiet_cfg(), 1).unwrap();
        assert_eq!(summary.images, 0);
        assert_eq!(summary.stats.placed, 0);
        assert!(summary.failures.is_empty());
    }

    #[test]
    fn same_seed_is_byte_identical_and_order_independent() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels, patches) = write_fixture(dir.path());
        let out1 = dir.path().join("out1");
        let out2 = dir.path().join("out2");
        let cfg = quiet_cfg();
        augment_dataset(&images, &labels, &patches, &out1, &cfg, 1).unwrap();
        augment_dataset(&images, &labels, &patches, &out2, &cfg, 4).unwrap();
        for sub in ["images", "labels"] {
            let mut names: Vec<String> = fs::read_dir(out1.join(sub))
                .unwrap()
                .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
                .collect();
            names.sort();
            assert!(!names.is_empty());
            for name in names {
                let a = fs::read(out1.join(sub).join(&name)).unwrap();
                let b = fs::read(out2.join(sub).join(&name)).unwrap();
                assert_eq!(a, b, "{sub}/{name} differs");
            }
        }
    }

    #[test]
    fn zero_instances_copies_inputs_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels, patches) = write_fixture(dir.path());
        let out = dir.path().join("out");
        let cfg = AugmentConfig {
            max_instances: 0,
            ..quiet_cfg()
        };
        let summary = augment_dataset(&images, &labels, &patches, &out, &cfg, 1).unwrap();
        assert_eq!(summary.stats.placed, 0);
        for name in ["a.png", "b.png"] {
            let original = fs::read(images.join(name)).unwrap();
            let copied = fs::read(out.join("images").join(name)).unwrap();
            assert_eq!(original, copied);
        }
        // labels re-serialized: a.txt still holds exactly the original box
        let labels_out = read_label_dir(&out.join("labels"), 160.0, 120.0).unwrap();
        assert_eq!(labels_out["a"].len(), 1);
    }

    #[test]
    fn unreadable_image_is_recorded_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels, patches) = write_fixture(dir.path());
        fs::write(images.join("broken.png"), b"not a png").unwrap();
        let out = dir.path().join("out");
        let summary =
            augment_dataset(&images, &labels, &patches, &out, &quiet_cfg(), 1).unwrap();
        assert_eq!(summary.failures.len(), 1);
        assert_eq!(summary.failures[0].0, "broken.png");
        assert_eq!(summary.images, 3);
    }

    #[test]
    fn merged_labels_contain_existing_and_added_boxes() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels, patches) = write_fixture(dir.path());
        let out = dir.path().join("out");
        let cfg = AugmentConfig {
            max_instances: 2,
            delta_e_max: 1000.0,
            ..quiet_cfg()
        };
        let summary = augment_dataset(&images, &labels, &patches, &out, &cfg, 1).unwrap();
        assert!(summary.stats.placed > 0);
        let labels_out = read_label_dir(&out.join("labels"), 160.0, 120.0).unwrap();
        let a = &labels_out["a"];
        assert!(a.len() >= 1);
        // the original centered box survives re-serialization
        let keep = a.iter().any(|(l, b)| {
            *l == Label::Drone && (b.x1 - 72.0).abs() < 1e-6 && (b.y1 - 54.0).abs() < 1e-6
        });
        assert!(keep, "original box missing from {a:?}");
    }
}
