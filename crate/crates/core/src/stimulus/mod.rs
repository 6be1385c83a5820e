//! Procedural stimulus sets for every property test, their manifests, and
//! loading of externally prepared sets.
//!
//! On disk a set is a directory holding one image per stimulus and a
//! `manifest.tsv`:
//!
//! ```text
//! # property: mirror_confusion
//! # seed: 7
//! stimulus_id	file	role	group_id	members	value	label
//! g00_original	g00_original.png	original	g00	-	-	-
//! ```
//!
//! `members` lists constituent stimulus ids separated by `;` (multi-object
//! displays only), `value` is the numeric parameter of the stimulus (bar
//! length, morph step, scale factor) and `label` the ground-truth class for
//! scene composites. `-` marks an empty field.

// the manifest example above is tab separated on purpose
#![allow(clippy::tabs_in_doc_comments)]

mod generate;
mod raster;
mod scene;
mod shapes;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::{DynamicImage, GrayImage, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::PropertyId;
use crate::exec::Execution;

pub use generate::generate_stimulus_set;
pub use raster::Canvas;
pub use scene::SceneAsset;

#[derive(Debug, Error)]
pub enum StimulusError {
    #[error("{0}")]
    MissingAssets(String),
    #[error("degenerate spec for {property}: {msg}")]
    DegenerateSpec { property: PropertyId, msg: String },
    #[error("manifest {path}, row {row}, field `{field}`: {msg}")]
    Schema {
        path: String,
        row: usize,
        field: String,
        msg: String,
    },
    #[error("image file missing: {0}")]
    MissingImageFile(PathBuf),
    #[error("incomplete structure for {property}: {msg}")]
    Structure { property: PropertyId, msg: String },
    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Role a stimulus plays inside its group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Single,
    Multi,
    Congruent,
    Incongruent,
    Original,
    /// Reflection about the vertical axis (left-right mirror image).
    Vflip,
    /// Reflection about the horizontal axis (upside-down mirror image).
    Hflip,
    Reference,
    Morph,
    Shape,
    Texture,
    Bar,
    Unoccluded,
    Occluded,
    Control,
    Base,
    Proportional,
    Disproportional,
    SolidA,
    SolidB,
    FlatA,
    FlatB,
    GlobalChange,
    LocalChange,
    Upright,
    UprightThatcher,
    Inverted,
    InvertedThatcher,
}

impl Role {
    const ALL: [Role; 28] = [
        Role::Single,
        Role::Multi,
        Role::Congruent,
        Role::Incongruent,
        Role::Original,
        Role::Vflip,
        Role::Hflip,
        Role::Reference,
        Role::Morph,
        Role::Shape,
        Role::Texture,
        Role::Bar,
        Role::Unoccluded,
        Role::Occluded,
        Role::Control,
        Role::Base,
        Role::Proportional,
        Role::Disproportional,
        Role::SolidA,
        Role::SolidB,
        Role::FlatA,
        Role::FlatB,
        Role::GlobalChange,
        Role::LocalChange,
        Role::Upright,
        Role::UprightThatcher,
        Role::Inverted,
        Role::InvertedThatcher,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Single => "single",
            Role::Multi => "multi",
            Role::Congruent => "congruent",
            Role::Incongruent => "incongruent",
            Role::Original => "original",
            Role::Vflip => "vflip",
            Role::Hflip => "hflip",
            Role::Reference => "reference",
            Role::Morph => "morph",
            Role::Shape => "shape",
            Role::Texture => "texture",
            Role::Bar => "bar",
            Role::Unoccluded => "unoccluded",
            Role::Occluded => "occluded",
            Role::Control => "control",
            Role::Base => "base",
            Role::Proportional => "proportional",
            Role::Disproportional => "disproportional",
            Role::SolidA => "solid_a",
            Role::SolidB => "solid_b",
            Role::FlatA => "flat_a",
            Role::FlatB => "flat_b",
            Role::GlobalChange => "global_change",
            Role::LocalChange => "local_change",
            Role::Upright => "upright",
            Role::UprightThatcher => "upright_thatcher",
            Role::Inverted => "inverted",
            Role::InvertedThatcher => "inverted_thatcher",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .iter()
            .copied()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown role `{s}`"))
    }
}

/// How a property's stimuli are organized, as consumed by its metric.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// Single-object displays plus multi-object displays that list exactly
    /// `arity` singles as members.
    Normalization { arity: usize },
    /// Labelled composites split by congruency.
    Labelled,
    /// Groups holding exactly one stimulus per listed role.
    Groups(&'static [Role]),
    /// Two stimulus sets compared unit by unit.
    TwoSets(Role, Role),
    /// A series of stimuli carrying a numeric magnitude.
    Series(Role),
}

pub fn layout(property: PropertyId) -> Layout {
    use PropertyId as P;
    match property {
        P::NormPairs => Layout::Normalization { arity: 2 },
        P::NormTriplets => Layout::Normalization { arity: 3 },
        P::SceneIncongruence => Layout::Labelled,
        P::MirrorConfusion => Layout::Groups(&[Role::Original, Role::Vflip, Role::Hflip]),
        P::SparsenessMorph => Layout::TwoSets(Role::Reference, Role::Morph),
        P::SparsenessShapeTexture => Layout::TwoSets(Role::Shape, Role::Texture),
        P::WebersLaw => Layout::Series(Role::Bar),
        P::OcclusionBasic | P::OcclusionDepth => {
            Layout::Groups(&[Role::Unoccluded, Role::Occluded, Role::Control])
        }
        P::RelativeSize => Layout::Groups(&[Role::Base, Role::Proportional, Role::Disproportional]),
        P::SurfaceInvariance => Layout::Groups(&[Role::Base, Role::Congruent, Role::Incongruent]),
        P::ThreeD1 | P::ThreeD2 => {
            Layout::Groups(&[Role::SolidA, Role::SolidB, Role::FlatA, Role::FlatB])
        }
        P::GlobalAdvantage => Layout::Groups(&[Role::Base, Role::GlobalChange, Role::LocalChange]),
        P::Thatcher => Layout::Groups(&[
            Role::Upright,
            Role::UprightThatcher,
            Role::Inverted,
            Role::InvertedThatcher,
        ]),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub stimulus_id: String,
    pub file: String,
    pub role: Role,
    pub group_id: String,
    pub members: Vec<String>,
    pub value: Option<f64>,
    pub label: Option<String>,
}

impl ManifestRecord {
    pub fn new(stimulus_id: impl Into<String>, role: Role, group_id: impl Into<String>) -> Self {
        let stimulus_id = stimulus_id.into();
        Self {
            file: format!("{stimulus_id}.png"),
            stimulus_id,
            role,
            group_id: group_id.into(),
            members: Vec::new(),
            value: None,
            label: None,
        }
    }

    pub fn with_value(mut self, v: f64) -> Self {
        self.value = Some(v);
        self
    }

    pub fn with_members(mut self, members: Vec<String>) -> Self {
        self.members = members;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Raster {
    Gray(GrayImage),
    Rgb(RgbImage),
}

impl Raster {
    pub fn to_luma(&self) -> GrayImage {
        match self {
            Raster::Gray(g) => g.clone(),
            Raster::Rgb(c) => DynamicImage::ImageRgb8(c.clone()).to_luma8(),
        }
    }

    pub fn dimensions(&self) -> (u32, u32) {
        match self {
            Raster::Gray(g) => g.dimensions(),
            Raster::Rgb(c) => c.dimensions(),
        }
    }

    fn save(&self, path: &Path) -> Result<(), StimulusError> {
        let res = match self {
            Raster::Gray(g) => g.save(path),
            Raster::Rgb(c) => c.save(path),
        };
        res.map_err(|source| StimulusError::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ImageSource {
    Raster(Raster),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StimulusImage {
    pub id: String,
    pub source: ImageSource,
}

impl StimulusImage {
    /// Decoded grayscale pixels, reading from disk for external sets.
    pub fn luma(&self) -> Result<GrayImage, StimulusError> {
        match &self.source {
            ImageSource::Raster(r) => Ok(r.to_luma()),
            ImageSource::File(p) => {
                image::open(p)
                    .map(|img| img.to_luma8())
                    .map_err(|source| StimulusError::Image {
                        path: p.clone(),
                        source,
                    })
            }
        }
    }
}

/// Per-property protocol parameters. Defaults come from
/// [`StimulusSpec::new`]; only the fields a protocol uses are read.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolParams {
    /// Groups for grouped protocols.
    pub n_groups: usize,
    /// Distinct objects for normalization displays.
    pub n_objects: usize,
    /// Fixed object slots for normalization displays.
    pub n_positions: usize,
    /// Multi-object displays for normalization.
    pub n_displays: usize,
    /// Reference shapes (and textures) for sparseness sets.
    pub n_references: usize,
    pub n_morphlines: usize,
    pub morph_steps: usize,
    pub n_lengths: usize,
    pub length_start: f64,
    pub length_ratio: f64,
    pub bar_thickness: f64,
    /// Directory with `assets.tsv`, object cutouts and scene backgrounds.
    pub assets_dir: Option<PathBuf>,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            n_groups: 20,
            n_objects: 8,
            n_positions: 4,
            n_displays: 24,
            n_references: 24,
            n_morphlines: 4,
            morph_steps: 7,
            n_lengths: 10,
            length_start: 16.0,
            length_ratio: 1.25,
            bar_thickness: 8.0,
            assets_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StimulusSpec {
    pub property: PropertyId,
    pub canvas_px: u32,
    pub background_gray: u8,
    pub seed: u64,
    pub params: ProtocolParams,
}

impl StimulusSpec {
    pub fn new(property: PropertyId, seed: u64) -> Self {
        Self {
            property,
            canvas_px: 224,
            background_gray: 128,
            seed,
            params: ProtocolParams::default(),
        }
    }

    /// Seed for one property derived from a run-wide root seed, so each
    /// property gets an independent but reproducible stream.
    pub fn derive_seed(root: u64, property: PropertyId) -> u64 {
        // splitmix64 finalizer over (root, property index)
        let mut z = root ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(property.index() as u64 + 1));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    fn degenerate(&self, msg: impl Into<String>) -> StimulusError {
        StimulusError::DegenerateSpec {
            property: self.property,
            msg: msg.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StimulusSet {
    pub property: PropertyId,
    pub seed: Option<u64>,
    pub images: Vec<StimulusImage>,
    pub records: Vec<ManifestRecord>,
}

impl StimulusSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, id: &str) -> Option<&ManifestRecord> {
        self.records.iter().find(|r| r.stimulus_id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.stimulus_id.as_str())
    }

    /// Groups in order of first appearance, each as a role → stimulus id map.
    pub fn groups(&self) -> Vec<(String, BTreeMap<Role, String>)> {
        let mut order: Vec<String> = Vec::new();
        let mut map: HashMap<&str, BTreeMap<Role, String>> = HashMap::new();
        for r in &self.records {
            let entry = map.entry(r.group_id.as_str()).or_insert_with(|| {
                order.push(r.group_id.clone());
                BTreeMap::new()
            });
            entry.insert(r.role, r.stimulus_id.clone());
        }
        order
            .into_iter()
            .map(|g| {
                let roles = map.remove(g.as_str()).unwrap_or_default();
                (g, roles)
            })
            .collect()
    }

    /// Checks the structure the property's metric consumes.
    pub fn validate(&self) -> Result<(), StimulusError> {
        let fail = |msg: String| StimulusError::Structure {
            property: self.property,
            msg,
        };
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.stimulus_id.as_str()) {
                return Err(fail(format!("duplicate stimulus id `{}`", r.stimulus_id)));
            }
        }
        if self.images.len() != self.records.len()
            || self
                .images
                .iter()
                .zip(&self.records)
                .any(|(img, rec)| img.id != rec.stimulus_id)
        {
            return Err(fail("image list does not match manifest".into()));
        }
        let check_roles = |allowed: &[Role]| -> Result<(), StimulusError> {
            for r in &self.records {
                if !allowed.contains(&r.role) {
                    return Err(fail(format!(
                        "role `{}` of `{}` not used by this property",
                        r.role, r.stimulus_id
                    )));
                }
            }
            Ok(())
        };
        match layout(self.property) {
            Layout::Normalization { arity } => {
                check_roles(&[Role::Single, Role::Multi])?;
                let singles: HashSet<&str> = self
                    .records
                    .iter()
                    .filter(|r| r.role == Role::Single)
                    .map(|r| r.stimulus_id.as_str())
                    .collect();
                let mut n_multi = 0;
                for r in self.records.iter().filter(|r| r.role == Role::Multi) {
                    n_multi += 1;
                    if r.members.len() != arity {
                        return Err(fail(format!(
                            "display `{}` has {} members, expected {arity}",
                            r.stimulus_id,
                            r.members.len()
                        )));
                    }
                    for m in &r.members {
                        if !singles.contains(m.as_str()) {
                            return Err(fail(format!(
                                "display `{}` references unknown single `{m}`",
                                r.stimulus_id
                            )));
                        }
                    }
                }
                if n_multi == 0 {
                    return Err(fail("no multi-object displays".into()));
                }
            }
            Layout::Labelled => {
                check_roles(&[Role::Congruent, Role::Incongruent])?;
                if let Some(r) = self.records.iter().find(|r| r.label.is_none()) {
                    return Err(fail(format!("`{}` has no label", r.stimulus_id)));
                }
                for role in [Role::Congruent, Role::Incongruent] {
                    if !self.records.iter().any(|r| r.role == role) {
                        return Err(fail(format!("no `{role}` stimuli")));
                    }
                }
            }
            Layout::Groups(roles) => {
                check_roles(roles)?;
                let mut counts: HashMap<(&str, Role), usize> = HashMap::new();
                for r in &self.records {
                    *counts.entry((r.group_id.as_str(), r.role)).or_default() += 1;
                }
                for ((g, role), n) in &counts {
                    if *n > 1 {
                        return Err(fail(format!("group `{g}` has {n} `{role}` stimuli")));
                    }
                }
                for (g, present) in self.groups() {
                    for role in roles {
                        if !present.contains_key(role) {
                            return Err(fail(format!("group `{g}` lacks a `{role}` stimulus")));
                        }
                    }
                }
                if self.records.is_empty() {
                    return Err(fail("no groups".into()));
                }
            }
            Layout::TwoSets(a, b) => {
                check_roles(&[a, b])?;
                for role in [a, b] {
                    let n = self.records.iter().filter(|r| r.role == role).count();
                    if n < 2 {
                        return Err(fail(format!("set `{role}` has {n} stimuli, need >= 2")));
                    }
                }
            }
            Layout::Series(role) => {
                check_roles(&[role])?;
                let mut values = Vec::new();
                for r in &self.records {
                    match r.value {
                        Some(v) if v.is_finite() && v > 0.0 => values.push(v),
                        _ => {
                            return Err(fail(format!(
                                "`{}` needs a positive numeric value",
                                r.stimulus_id
                            )))
                        }
                    }
                }
                values.sort_by(f64::total_cmp);
                values.dedup();
                if values.len() < 3 {
                    return Err(fail(format!("{} distinct values, need >= 3", values.len())));
                }
            }
        }
        Ok(())
    }

    /// Writes `<out>/<property>/<file>` for every image plus `manifest.tsv`,
    /// returning the set directory.
    pub fn write(&self, out: &Path) -> Result<PathBuf, StimulusError> {
        let dir = out.join(self.property.as_str());
        fs::create_dir_all(&dir)?;
        for (img, rec) in self.images.iter().zip(&self.records) {
            let target = dir.join(&rec.file);
            match &img.source {
                ImageSource::Raster(r) => r.save(&target)?,
                ImageSource::File(p) => {
                    if p != &target {
                        fs::copy(p, &target)?;
                    }
                }
            }
        }
        fs::write(dir.join("manifest.tsv"), self.manifest_text())?;
        Ok(dir)
    }

    pub fn manifest_text(&self) -> String {
        let mut out = format!("# property: {}\n", self.property);
        if let Some(seed) = self.seed {
            out.push_str(&format!("# seed: {seed}\n"));
        }
        out.push_str(MANIFEST_HEADER.join("\t").as_str());
        out.push('\n');
        for r in &self.records {
            let members = if r.members.is_empty() {
                "-".to_string()
            } else {
                r.members.join(";")
            };
            let value = r.value.map_or("-".to_string(), |v| v.to_string());
            let label = r.label.clone().unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.stimulus_id, r.file, r.role, r.group_id, members, value, label
            ));
        }
        out
    }
}

const MANIFEST_HEADER: [&str; 7] = [
    "stimulus_id",
    "file",
    "role",
    "group_id",
    "members",
    "value",
    "label",
];

/// Reads a manifest and references its images on disk. Images are checked
/// for existence but not decoded.
pub fn load_external_set(manifest_path: &Path) -> Result<StimulusSet, StimulusError> {
    let text = fs::read_to_string(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let path_str = manifest_path.display().to_string();
    let schema = |row: usize, field: &str, msg: String| StimulusError::Schema {
        path: path_str.clone(),
        row,
        field: field.to_string(),
        msg,
    };

    let mut property = None;
    let mut seed = None;
    let mut header_seen = false;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        let line = line.trim_end_matches('\r');
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((k, v)) = meta.split_once(':') {
                match k.trim() {
                    "property" => {
                        property = Some(
                            v.trim()
                                .parse::<PropertyId>()
                                .map_err(|e| schema(row, "property", e.to_string()))?,
                        )
                    }
                    "seed" => seed = v.trim().parse().ok(),
                    _ => {}
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !header_seen {
            if fields != MANIFEST_HEADER {
                return Err(schema(
                    row,
                    "header",
                    format!("expected `{}`", MANIFEST_HEADER.join("\\t")),
                ));
            }
            header_seen = true;
            continue;
        }
        if fields.len() != MANIFEST_HEADER.len() {
            return Err(schema(
                row,
                "row",
                format!(
                    "{} fields, expected {}",
                    fields.len(),
                    MANIFEST_HEADER.len()
                ),
            ));
        }
        let opt = |s: &str| (s != "-" && !s.is_empty()).then(|| s.to_string());
        let role: Role = fields[2].parse().map_err(|e| schema(row, "role", e))?;
        let value = match opt(fields[5]) {
            Some(v) => Some(
                v.parse::<f64>()
                    .map_err(|_| schema(row, "value", format!("bad number `{v}`")))?,
            ),
            None => None,
        };
        if fields[0].is_empty() {
            return Err(schema(row, "stimulus_id", "empty".into()));
        }
        records.push(ManifestRecord {
            stimulus_id: fields[0].to_string(),
            file: fields[1].to_string(),
            role,
            group_id: fields[3].to_string(),
            members: opt(fields[4])
                .map(|m| m.split(';').map(str::to_string).collect())
                .unwrap_or_default(),
            value,
            label: opt(fields[6]),
        });
    }
    let property =
        property.ok_or_else(|| schema(1, "property", "missing `# property: <id>` line".into()))?;

    let mut images = Vec::with_capacity(records.len());
    for r in &records {
        let p = dir.join(&r.file);
        if !p.is_file() {
            return Err(StimulusError::MissingImageFile(p));
        }
        images.push(StimulusImage {
            id: r.stimulus_id.clone(),
            source: ImageSource::File(p),
        });
    }
    let set = StimulusSet {
        property,
        seed,
        images,
        records,
    };
    set.validate().map_err(|e| match e {
        StimulusError::Structure { msg, .. } => schema(0, "structure", msg),
        other => other,
    })?;
    Ok(set)
}

/// Generates the sets for several specs, in parallel when enabled.
pub fn generate_all(
    specs: &[StimulusSpec],
    exec: Execution,
) -> Vec<Result<StimulusSet, StimulusError>> {
    exec.map(specs, generate_stimulus_set)
}
