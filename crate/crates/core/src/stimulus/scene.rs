//! Object-in-scene composites for the scene incongruence test.
//!
//! Procedural objects cannot be recognized by real classifiers, so this
//! protocol needs user assets. `assets.tsv` in the assets directory lists
//! them, tab separated with a header row:
//!
//! ```text
//! kind	file	label	context
//! object	cup.png	cup	kitchen
//! scene	kitchen1.jpg	kitchen	-
//! ```
//!
//! Objects are cutouts (alpha channel honoured) labelled with their class
//! and the scene category they belong in. Every object is pasted on every
//! scene; the composite is congruent when the scene label equals the
//! object's context.

use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::{Rgba, RgbaImage};

use super::ImageSource;
use super::{ManifestRecord, Raster, Role, StimulusError, StimulusImage, StimulusSpec};

#[derive(Clone, Debug, PartialEq)]
pub enum SceneAsset {
    Object {
        file: PathBuf,
        label: String,
        context: String,
    },
    Scene {
        file: PathBuf,
        label: String,
    },
}

pub fn read_assets(dir: &Path) -> Result<Vec<SceneAsset>, StimulusError> {
    let index = dir.join("assets.tsv");
    let text = fs::read_to_string(&index).map_err(|e| {
        StimulusError::MissingAssets(format!("scene incongruence needs {}: {e}", index.display()))
    })?;
    let schema = |row: usize, field: &str, msg: &str| StimulusError::Schema {
        path: index.display().to_string(),
        row,
        field: field.into(),
        msg: msg.into(),
    };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(schema(i + 1, "row", "expected kind, file, label, context"));
        }
        let file = dir.join(f[1]);
        if !file.is_file() {
            return Err(StimulusError::MissingImageFile(file));
        }
        out.push(match f[0] {
            "object" => SceneAsset::Object {
                file,
                label: f[2].to_string(),
                context: f[3].to_string(),
            },
            "scene" => SceneAsset::Scene {
                file,
                label: f[2].to_string(),
            },
            _ => return Err(schema(i + 1, "kind", "must be `object` or `scene`")),
        });
    }
    Ok(out)
}

fn open_rgba(path: &Path) -> Result<RgbaImage, StimulusError> {
    image::open(path)
        .map(|i| i.to_rgba8())
        .map_err(|source| StimulusError::Image {
            path: path.to_path_buf(),
            source,
        })
}

pub(super) fn composites(
    spec: &StimulusSpec,
) -> Result<(Vec<StimulusImage>, Vec<ManifestRecord>), StimulusError> {
    let dir = spec.params.assets_dir.as_ref().ok_or_else(|| {
        StimulusError::MissingAssets(
            "scene incongruence needs an assets directory with object cutouts and scenes".into(),
        )
    })?;
    let assets = read_assets(dir)?;
    let objects: Vec<_> = assets
        .iter()
        .filter_map(|a| match a {
            SceneAsset::Object {
                file,
                label,
                context,
            } => Some((file, label, context)),
            _ => None,
        })
        .collect();
    let scenes: Vec<_> = assets
        .iter()
        .filter_map(|a| match a {
            SceneAsset::Scene { file, label } => Some((file, label)),
            _ => None,
        })
        .collect();
    if objects.is_empty() || scenes.is_empty() {
        return Err(StimulusError::MissingAssets(
            "assets.tsv must list at least one object and one scene".into(),
        ));
    }

    let size = spec.canvas_px;
    let backgrounds = scenes
        .iter()
        .map(|(file, _)| {
            Ok(imageops::resize(
                &open_rgba(file)?,
                size,
                size,
                FilterType::Triangle,
            ))
        })
        .collect::<Result<Vec<_>, StimulusError>>()?;

    let mut images = Vec::new();
    let mut records = Vec::new();
    for (oi, (file, label, context)) in objects.iter().enumerate() {
        let cutout = open_rgba(file)?;
        let (w, h) = cutout.dimensions();
        let target = size as f64 * 0.5;
        let k = target / w.max(h) as f64;
        let (nw, nh) = (
            ((w as f64 * k).round() as u32).max(1),
            ((h as f64 * k).round() as u32).max(1),
        );
        let cutout = imageops::resize(&cutout, nw, nh, FilterType::Triangle);
        for (si, (_, scene_label)) in scenes.iter().enumerate() {
            let mut canvas = backgrounds[si].clone();
            imageops::overlay(
                &mut canvas,
                &cutout,
                ((size - nw) / 2) as i64,
                ((size - nh) / 2) as i64,
            );
            let rgb = image::DynamicImage::ImageRgba8(flatten(canvas)).to_rgb8();
            let role = if scene_label == context {
                Role::Congruent
            } else {
                Role::Incongruent
            };
            let id = format!("o{oi:02}_s{si:02}");
            records.push(
                ManifestRecord::new(&id, role, format!("o{oi:02}")).with_label(label.as_str()),
            );
            images.push(StimulusImage {
                id,
                source: ImageSource::Raster(Raster::Rgb(rgb)),
            });
        }
    }
    for role in [Role::Congruent, Role::Incongruent] {
        if !records.iter().any(|r| r.role == role) {
            return Err(StimulusError::DegenerateSpec {
                property: spec.property,
                msg: format!("assets produce no {role} composites"),
            });
        }
    }
    Ok((images, records))
}

fn flatten(mut img: RgbaImage) -> RgbaImage {
    for p in img.pixels_mut() {
        *p = Rgba([p.0[0], p.0[1], p.0[2], 255]);
    }
    img
}
