//! Dataset manifest reading and writing.
//!
//! A dataset root contains `images/` plus four index files:
//! `annotations.json` (id → dot list), `splits.json` (train/val/test id
//! lists), `classes.txt` (one `id<TAB>category` per line), and an optional
//! `descriptions.json` (id → stored prompt records). Loading validates the
//! whole dataset up front — dangling ids, out-of-bounds dots, or a category
//! straddling splits fail the load rather than surfacing later as silent
//! bad data.

use crate::data::descriptions::DescriptionRecord;
use crate::domain::{check_split_disjointness, validate_sample, ImageSample, PromptSet, Split};
use crate::error::{Error, Result};
use ndarray::Array3;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Parsed dataset index: everything except the pixel data.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub root: PathBuf,
    /// Dot annotations per image id, `(x, y)` pixel coordinates.
    pub annotations: BTreeMap<String, Vec<(f64, f64)>>,
    pub split_of: BTreeMap<String, Split>,
    pub category_of: BTreeMap<String, String>,
    /// Stored description records; empty when `descriptions.json` is absent.
    pub descriptions: BTreeMap<String, DescriptionRecord>,
}

#[derive(Serialize, Deserialize)]
struct AnnotationEntry {
    points: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize, Default)]
struct SplitsFile {
    #[serde(default)]
    train: Vec<String>,
    #[serde(default)]
    val: Vec<String>,
    #[serde(default)]
    test: Vec<String>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn write_json_file<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Image files are either named exactly by their id or by id + extension.
fn image_path_for(root: &Path, id: &str) -> Option<PathBuf> {
    let dir = root.join("images");
    for candidate in [
        dir.join(id),
        dir.join(format!("{id}.png")),
        dir.join(format!("{id}.jpg")),
        dir.join(format!("{id}.jpeg")),
    ] {
        if candidate.is_file() {
            return Some(candidate);
        }
    }
    None
}

/// Reads and cross-validates the four index files under `root`.
pub fn read_manifest(root: impl AsRef<Path>) -> Result<DatasetManifest> {
    let root = root.as_ref().to_path_buf();

    let annotations_path = root.join("annotations.json");
    let raw_annotations: BTreeMap<String, AnnotationEntry> = read_json(&annotations_path)?;
    let annotations: BTreeMap<String, Vec<(f64, f64)>> = raw_annotations
        .into_iter()
        .map(|(id, e)| (id, e.points))
        .collect();

    let splits_path = root.join("splits.json");
    let splits: SplitsFile = read_json(&splits_path)?;
    let mut split_of: BTreeMap<String, Split> = BTreeMap::new();
    for (split, ids) in [
        (Split::Train, &splits.train),
        (Split::Val, &splits.val),
        (Split::Test, &splits.test),
    ] {
        for id in ids {
            if let Some(prev) = split_of.insert(id.clone(), split) {
                return Err(Error::format(
                    "splits",
                    &splits_path,
                    format!("id '{id}' listed in both '{}' and '{}'", prev.name(), split.name()),
                ));
            }
        }
    }

    let classes_path = root.join("classes.txt");
    let classes_text =
        std::fs::read_to_string(&classes_path).map_err(|e| Error::io(&classes_path, e))?;
    let mut category_of: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, line) in classes_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let Some((id, category)) = line.split_once('\t') else {
            return Err(Error::format(
                "classes",
                &classes_path,
                format!("line {}: expected 'id<TAB>category', got '{line}'", lineno + 1),
            ));
        };
        if category_of.insert(id.to_string(), category.to_string()).is_some() {
            return Err(Error::format(
                "classes",
                &classes_path,
                format!("line {}: duplicate id '{id}'", lineno + 1),
            ));
        }
    }

    let descriptions_path = root.join("descriptions.json");
    let descriptions: BTreeMap<String, DescriptionRecord> = if descriptions_path.is_file() {
        read_json(&descriptions_path)?
    } else {
        BTreeMap::new()
    };

    // every id placed in a split must be fully backed
    let mut missing_annotation = Vec::new();
    let mut missing_class = Vec::new();
    let mut missing_image = Vec::new();
    for id in split_of.keys() {
        if !annotations.contains_key(id) {
            missing_annotation.push(id.clone());
        }
        if !category_of.contains_key(id) {
            missing_class.push(id.clone());
        }
        if image_path_for(&root, id).is_none() {
            missing_image.push(id.clone());
        }
    }
    for (what, ids) in [
        ("annotations", missing_annotation),
        ("class entries", missing_class),
        ("image files", missing_image),
    ] {
        if !ids.is_empty() {
            return Err(Error::Data(format!(
                "{} id(s) without {what}: {}",
                ids.len(),
                ids.join(", ")
            )));
        }
    }

    check_split_disjointness(
        split_of
            .iter()
            .map(|(id, &split)| (category_of[id].as_str(), split)),
    )?;

    Ok(DatasetManifest {
        root,
        annotations,
        split_of,
        category_of,
        descriptions,
    })
}

/// Decodes one image file into `(H, W, 3)` floats in `[0, 1]`.
pub fn load_image(path: &Path) -> Result<Array3<f32>> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?.to_rgb8();
    let (w, h) = img.dimensions();
    let mut pixels = Array3::zeros((h as usize, w as usize, 3));
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..3 {
            pixels[[y as usize, x as usize, c]] = f32::from(p.0[c]) / 255.0;
        }
    }
    Ok(pixels)
}

/// Loads a dataset root into validated samples with their prompt sets.
///
/// Images without a description record get a category-only prompt set —
/// `is_complete()` returns false on those, which is how downstream stages
/// recognize and report them.
pub fn load_manifest(root: impl AsRef<Path>) -> Result<Vec<(ImageSample, PromptSet)>> {
    let manifest = read_manifest(&root)?;
    let mut out = Vec::with_capacity(manifest.split_of.len());
    for (id, &split) in &manifest.split_of {
        let path = image_path_for(&manifest.root, id).expect("checked by read_manifest");
        let pixels = load_image(&path)?;
        let category = manifest.category_of[id].clone();
        let sample = ImageSample {
            id: id.clone(),
            pixels,
            category: category.clone(),
            dots: manifest.annotations[id].clone(),
            split,
        };
        let violations = validate_sample(&sample);
        if !violations.is_empty() {
            return Err(Error::Data(format!(
                "image '{id}': {}",
                violations.join("; ")
            )));
        }
        let prompts = match manifest.descriptions.get(id) {
            Some(record) => record.to_prompt_set(&category),
            None => PromptSet::category_only(&category),
        };
        let prompt_violations = prompts.validate();
        if !prompt_violations.is_empty() {
            return Err(Error::Data(format!(
                "image '{id}' prompts: {}",
                prompt_violations.join("; ")
            )));
        }
        out.push((sample, prompts));
    }
    Ok(out)
}

/// Writes samples out in the manifest layout (PNG images + index files).
///
/// The inverse of [`load_manifest`] up to image re-encoding; all JSON keys
/// are sorted, so identical inputs produce identical bytes.
pub fn write_manifest(root: impl AsRef<Path>, data: &[(ImageSample, PromptSet)]) -> Result<()> {
    let root = root.as_ref();
    let images_dir = root.join("images");
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;

    let mut annotations: BTreeMap<String, AnnotationEntry> = BTreeMap::new();
    let mut splits = SplitsFile::default();
    let mut class_lines = Vec::new();
    let mut descriptions: BTreeMap<String, DescriptionRecord> = BTreeMap::new();
    for (sample, prompts) in data {
        let (h, w) = (sample.height(), sample.width());
        let mut img = image::RgbImage::new(w as u32, h as u32);
        for (x, y, p) in img.enumerate_pixels_mut() {
            for c in 0..3 {
                // single-channel samples broadcast their gray value
                let ch = if sample.channels() == 1 { 0 } else { c };
                let v = sample.pixels[[y as usize, x as usize, ch]];
                p.0[c] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
        let path = images_dir.join(format!("{}.png", sample.id));
        img.save(&path).map_err(|e| Error::image(&path, e))?;

        annotations.insert(sample.id.clone(), AnnotationEntry { points: sample.dots.clone() });
        match sample.split {
            Split::Train => splits.train.push(sample.id.clone()),
            Split::Val => splits.val.push(sample.id.clone()),
            Split::Test => splits.test.push(sample.id.clone()),
        }
        class_lines.push(format!("{}\t{}", sample.id, sample.category));
        descriptions.insert(
            sample.id.clone(),
            DescriptionRecord {
                t_p: prompts.t_p.clone(),
                t_d: prompts.t_d.clone(),
                t_d_prime: prompts.t_d_prime.clone(),
                model_name: None,
            },
        );
    }
    splits.train.sort();
    splits.val.sort();
    splits.test.sort();
    class_lines.sort();

    write_json_file(&root.join("annotations.json"), &annotations)?;
    write_json_file(&root.join("splits.json"), &splits)?;
    write_json_file(&root.join("descriptions.json"), &descriptions)?;
    let classes_path = root.join("classes.txt");
    std::fs::write(&classes_path, class_lines.join("\n") + "\n")
        .map_err(|e| Error::io(&classes_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn fixture_samples() -> Vec<(ImageSample, PromptSet)> {
        let mk = |id: &str, category: &str, split: Split, dots: Vec<(f64, f64)>| {
            let mut pixels = Array3::zeros((32, 32, 3));
            pixels[[4, 4, 0]] = 1.0;
            (
                ImageSample {
                    id: id.to_string(),
                    pixels,
                    category: category.to_string(),
                    dots,
                    split,
                },
                PromptSet::new(
                    category,
                    format!("several {category}s on a dark background"),
                    "several objects on a dark background",
                ),
            )
        };
        vec![
            mk("img_a", "apple", Split::Train, vec![(4.0, 4.0), (10.5, 20.0)]),
            mk("img_b", "grape", Split::Val, vec![(16.0, 16.0)]),
            mk("img_c", "melon", Split::Test, vec![]),
        ]
    }

    #[test]
    fn three_image_fixture_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let data = fixture_samples();
        write_manifest(dir.path(), &data).unwrap();
        let loaded = load_manifest(dir.path()).unwrap();
        assert_eq!(loaded.len(), 3);
        for ((s, p), (ls, lp)) in data.iter().zip(&loaded) {
            assert_eq!(s.id, ls.id);
            assert_eq!(s.category, ls.category);
            assert_eq!(s.split, ls.split);
            assert_eq!(s.dots, ls.dots);
            assert_eq!(p, lp);
            // 0.0 and 1.0 survive the u8 round trip exactly
            assert_eq!(s.pixels, ls.pixels);
        }
    }

    #[test]
    fn split_disjointness_violation_fails_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut data = fixture_samples();
        data[1].0.category = "apple".to_string(); // now in train and val
        write_manifest(dir.path(), &data).unwrap();
        let err = load_manifest(dir.path()).unwrap_err();
        assert!(err.to_string().contains("apple"), "{err}");
    }

    #[test]
    fn out_of_bounds_dot_names_the_image() {
        let dir = tempfile::tempdir().unwrap();
        let mut data = fixture_samples();
        data[0].0.dots.push((99.0, 2.0));
        write_manifest(dir.path(), &data).unwrap();
        let err = load_manifest(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("img_a"), "{msg}");
        assert!(msg.contains("out of bounds"), "{msg}");
    }

    #[test]
    fn dangling_split_id_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        write_manifest(dir.path(), &fixture_samples()).unwrap();
        // add an id to splits.json with no annotation/class/image behind it
        let path = dir.path().join("splits.json");
        let text = std::fs::read_to_string(&path).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["train"].as_array_mut().unwrap().push("ghost".into());
        std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
        let err = load_manifest(dir.path()).unwrap_err();
        assert!(err.to_string().contains("ghost"), "{err}");
    }

    #[test]
    fn missing_manifest_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_manifest(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }), "{err}");
    }

    #[test]
    fn missing_descriptions_fall_back_to_category_only() {
        let dir = tempfile::tempdir().unwrap();
        write_manifest(dir.path(), &fixture_samples()).unwrap();
        std::fs::remove_file(dir.path().join("descriptions.json")).unwrap();
        let loaded = load_manifest(dir.path()).unwrap();
        for (sample, prompts) in &loaded {
            assert!(!prompts.is_complete());
            assert_eq!(prompts.t_p, sample.category);
        }
    }
}
