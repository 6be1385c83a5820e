//! Container format for model responses.
//!
//! A container is a directory with two files:
//!
//! * `data.f32`: `n_stimuli * n_units` little-endian IEEE-754 binary32
//!   values, row-major (one row per stimulus).
//! * `meta`: UTF-8 text of `key: value` lines in this order: `format_version`,
//!   `model_id`, `layer_tag`, `kind`, `n_stimuli`, `n_units`, `blob_sha256`
//!   (lowercase hex SHA-256 of `data.f32`), an optional `label_map:` block of
//!   `n_units` lines of `index<TAB>label` (class probabilities only), and
//!   finally `stimulus_ids:` followed by one id per line in
//!   row order.
//!
//! ```text
//! format_version: 1
//! model_id: resnet50
//! layer_tag: penultimate
//! kind: activations
//! n_stimuli: 3
//! n_units: 2048
//! blob_sha256: 9f86d0...
//! stimulus_ids:
//! g00_original
//! g00_vflip
//! g00_hflip
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::stimulus::StimulusSet;

pub const FORMAT_VERSION: u32 = 1;
pub const META_FILE: &str = "meta";
pub const DATA_FILE: &str = "data.f32";
const PROB_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("checksum mismatch: meta says {expected}, blob hashes to {actual}")]
    ChecksumMismatch { expected: String, actual: String },
    #[error("blob holds {actual} bytes, shape {rows}x{cols} needs {expected}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        expected: usize,
        actual: usize,
    },
    #[error("unknown container format version `{0}`")]
    UnknownVersion(String),
    #[error("malformed meta, line {line}: {msg}")]
    MalformedMeta { line: usize, msg: String },
    #[error("stimuli missing from container: {}", .0.join(", "))]
    MissingStimulus(Vec<String>),
    #[error("stimulus `{0}` appears more than once in container")]
    DuplicateStimulus(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContainerKind {
    Activations,
    ClassProbabilities,
}

impl ContainerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ContainerKind::Activations => "activations",
            ContainerKind::ClassProbabilities => "class_probabilities",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActivationContainer {
    pub model_id: String,
    pub layer_tag: String,
    pub kind: ContainerKind,
    pub n_stimuli: usize,
    pub n_units: usize,
    /// Row-major responses, one row per stimulus.
    pub data: Vec<f32>,
    pub stimulus_ids: Vec<String>,
    /// Class index to label, for probability containers.
    pub label_map: Option<Vec<String>>,
}

impl ActivationContainer {
    pub fn activations(
        model_id: impl Into<String>,
        layer_tag: impl Into<String>,
        stimulus_ids: Vec<String>,
        n_units: usize,
        data: Vec<f32>,
    ) -> Result<Self, StoreError> {
        let c = Self {
            model_id: model_id.into(),
            layer_tag: layer_tag.into(),
            kind: ContainerKind::Activations,
            n_stimuli: stimulus_ids.len(),
            n_units,
            data,
            stimulus_ids,
            label_map: None,
        };
        c.check()?;
        Ok(c)
    }

    pub fn probabilities(
        model_id: impl Into<String>,
        stimulus_ids: Vec<String>,
        labels: Vec<String>,
        data: Vec<f32>,
    ) -> Result<Self, StoreError> {
        let c = Self {
            model_id: model_id.into(),
            layer_tag: "probabilities".into(),
            kind: ContainerKind::ClassProbabilities,
            n_stimuli: stimulus_ids.len(),
            n_units: labels.len(),
            data,
            stimulus_ids,
            label_map: Some(labels),
        };
        c.check()?;
        Ok(c)
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.n_units..(i + 1) * self.n_units]
    }

    /// Responses upcast to `f64`.
    pub fn to_matrix(&self) -> Matrix {
        Matrix::new(
            self.n_stimuli,
            self.n_units,
            self.data.iter().map(|&x| x as f64).collect(),
        )
    }

    pub fn check(&self) -> Result<(), StoreError> {
        let bad = |m: String| Err(StoreError::InvariantViolation(m));
        if self.stimulus_ids.len() != self.n_stimuli {
            return bad(format!(
                "{} stimulus ids for {} rows",
                self.stimulus_ids.len(),
                self.n_stimuli
            ));
        }
        if self.data.len() != self.n_stimuli * self.n_units {
            return bad(format!(
                "{} values for a {}x{} matrix",
                self.data.len(),
                self.n_stimuli,
                self.n_units
            ));
        }
        if let Some(i) = self.data.iter().position(|x| !x.is_finite()) {
            return bad(format!("non-finite value at flat index {i}"));
        }
        for field in [&self.model_id, &self.layer_tag] {
            if field.contains('\n') || field.trim() != field.as_str() || field.is_empty() {
                return bad(format!("`{field}` is not a valid single-line identifier"));
            }
        }
        if let Some(id) = self
            .stimulus_ids
            .iter()
            .find(|id| id.is_empty() || id.contains('\n'))
        {
            return bad(format!("invalid stimulus id `{id}`"));
        }
        if self.kind == ContainerKind::ClassProbabilities {
            if let Some(labels) = &self.label_map {
                if labels.len() != self.n_units {
                    return bad(format!(
                        "{} labels for {} classes",
                        labels.len(),
                        self.n_units
                    ));
                }
            }
            for i in 0..self.n_stimuli {
                let row = self.row(i);
                if row.iter().any(|&p| p < 0.0) {
                    return bad(format!("negative probability in row {i}"));
                }
                let sum: f64 = row.iter().map(|&p| p as f64).sum();
                if (sum - 1.0).abs() > PROB_TOLERANCE {
                    return bad(format!("probability row {i} sums to {sum}"));
                }
            }
        } else if self.label_map.is_some() {
            return bad("label map on an activation container".into());
        }
        Ok(())
    }

    fn blob(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() * 4);
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_container(c: &ActivationContainer, dir: &Path) -> Result<(), StoreError> {
    c.check()?;
    fs::create_dir_all(dir)?;
    let blob = c.blob();
    let mut meta = format!(
        "format_version: {FORMAT_VERSION}\nmodel_id: {}\nlayer_tag: {}\nkind: {}\nn_stimuli: {}\nn_units: {}\nblob_sha256: {}\n",
        c.model_id,
        c.layer_tag,
        c.kind.as_str(),
        c.n_stimuli,
        c.n_units,
        sha256_hex(&blob)
    );
    if let Some(labels) = &c.label_map {
        meta.push_str("label_map:\n");
        for (i, l) in labels.iter().enumerate() {
            meta.push_str(&format!("{i}\t{l}\n"));
        }
    }
    meta.push_str("stimulus_ids:\n");
    for id in &c.stimulus_ids {
        meta.push_str(id);
        meta.push('\n');
    }
    fs::write(dir.join(DATA_FILE), blob)?;
    fs::write(dir.join(META_FILE), meta)?;
    Ok(())
}

pub fn read_container(dir: &Path) -> Result<ActivationContainer, StoreError> {
    let meta = fs::read_to_string(dir.join(META_FILE))?;
    let mut lines = meta.lines().enumerate().peekable();
    let mut field = |name: &str| -> Result<String, StoreError> {
        match lines.next() {
            Some((i, l)) => match l.split_once(": ") {
                Some((k, v)) if k == name => Ok(v.to_string()),
                _ => Err(StoreError::MalformedMeta {
                    line: i + 1,
                    msg: format!("expected `{name}: ...`"),
                }),
            },
            None => Err(StoreError::MalformedMeta {
                line: 0,
                msg: format!("missing `{name}`"),
            }),
        }
    };
    let version = field("format_version")?;
    if version != FORMAT_VERSION.to_string() {
        return Err(StoreError::UnknownVersion(version));
    }
    let model_id = field("model_id")?;
    let layer_tag = field("layer_tag")?;
    let kind = match field("kind")?.as_str() {
        "activations" => ContainerKind::Activations,
        "class_probabilities" => ContainerKind::ClassProbabilities,
        other => {
            return Err(StoreError::MalformedMeta {
                line: 4,
                msg: format!("unknown kind `{other}`"),
            })
        }
    };
    let parse_count = |v: String, line: usize| {
        v.parse::<usize>().map_err(|_| StoreError::MalformedMeta {
            line,
            msg: format!("bad count `{v}`"),
        })
    };
    let n_stimuli = parse_count(field("n_stimuli")?, 5)?;
    let n_units = parse_count(field("n_units")?, 6)?;
    let checksum = field("blob_sha256")?;

    let mut label_map = None;
    let header = lines.next();
    let header = match header {
        Some((_, "label_map:")) => {
            let mut labels = Vec::with_capacity(n_units);
            for k in 0..n_units {
                let (i, l) = lines.next().ok_or(StoreError::MalformedMeta {
                    line: 0,
                    msg: "truncated label_map".into(),
                })?;
                match l.split_once('\t') {
                    Some((idx, label)) if idx == k.to_string() => labels.push(label.to_string()),
                    _ => {
                        return Err(StoreError::MalformedMeta {
                            line: i + 1,
                            msg: format!("expected label entry {k}"),
                        })
                    }
                }
            }
            label_map = Some(labels);
            lines.next()
        }
        other => other,
    };
    match header {
        Some((_, "stimulus_ids:")) => {}
        Some((i, _)) => {
            return Err(StoreError::MalformedMeta {
                line: i + 1,
                msg: "expected `stimulus_ids:`".into(),
            })
        }
        None => {
            return Err(StoreError::MalformedMeta {
                line: 0,
                msg: "missing `stimulus_ids:`".into(),
            })
        }
    }
    let stimulus_ids: Vec<String> = lines.map(|(_, l)| l.to_string()).collect();

    let blob = fs::read(dir.join(DATA_FILE))?;
    let expected = n_stimuli * n_units * 4;
    if blob.len() != expected {
        return Err(StoreError::ShapeMismatch {
            rows: n_stimuli,
            cols: n_units,
            expected,
            actual: blob.len(),
        });
    }
    let actual = sha256_hex(&blob);
    if actual != checksum {
        return Err(StoreError::ChecksumMismatch {
            expected: checksum,
            actual,
        });
    }
    let data = blob
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let c = ActivationContainer {
        model_id,
        layer_tag,
        kind,
        n_stimuli,
        n_units,
        data,
        stimulus_ids,
        label_map,
    };
    c.check()?;
    Ok(c)
}

/// Row index of every manifest stimulus within a container.
#[derive(Clone, Debug)]
pub struct Alignment {
    rows: HashMap<String, usize>,
}

impl Alignment {
    pub fn row(&self, stimulus_id: &str) -> Option<usize> {
        self.rows.get(stimulus_id).copied()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Maps every stimulus in the set to its container row. Extra container
/// rows are ignored.
pub fn align(c: &ActivationContainer, set: &StimulusSet) -> Result<Alignment, StoreError> {
    align_ids(&c.stimulus_ids, set)
}

/// [`align`] for a bare list of row ids.
pub fn align_ids(stimulus_ids: &[String], set: &StimulusSet) -> Result<Alignment, StoreError> {
    let mut index: HashMap<&str, usize> = HashMap::with_capacity(stimulus_ids.len());
    for (i, id) in stimulus_ids.iter().enumerate() {
        if index.insert(id.as_str(), i).is_some() {
            return Err(StoreError::DuplicateStimulus(id.clone()));
        }
    }
    let mut rows = HashMap::with_capacity(set.len());
    let mut missing = Vec::new();
    for id in set.ids() {
        match index.get(id) {
            Some(&i) => {
                rows.insert(id.to_string(), i);
            }
            None => missing.push(id.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(StoreError::MissingStimulus(missing));
    }
    Ok(Alignment { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::PropertyId;
    use crate::stimulus::{ImageSource, ManifestRecord, Raster, Role, StimulusImage};
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    #[test]
    fn three_by_two_blob_is_24_bytes_and_round_trips() {
        let tmp = tempfile::tempdir().unwrap();
        let c = ActivationContainer::activations(
            "m",
            "penultimate",
            ids(3),
            2,
            vec![1.0, -2.5, 0.0, 3.25, 1e-30, 7.0],
        )
        .unwrap();
        write_container(&c, tmp.path()).unwrap();
        assert_eq!(fs::metadata(tmp.path().join(DATA_FILE)).unwrap().len(), 24);
        assert_eq!(read_container(tmp.path()).unwrap(), c);
    }

    #[test]
    fn probability_row_not_summing_to_one_is_rejected() {
        let err = ActivationContainer::probabilities(
            "m",
            ids(1),
            vec!["a".into(), "b".into()],
            vec![0.5, 0.3],
        );
        assert!(matches!(err, Err(StoreError::InvariantViolation(_))));
        let ok = ActivationContainer::probabilities(
            "m",
            ids(1),
            vec!["a".into(), "b".into()],
            vec![0.5, 0.5],
        )
        .unwrap();
        let tmp = tempfile::tempdir().unwrap();
        write_container(&ok, tmp.path()).unwrap();
        assert_eq!(read_container(tmp.path()).unwrap(), ok);
    }

    #[test]
    fn truncated_blob_is_a_shape_mismatch() {
        let tmp = tempfile::tempdir().unwrap();
        let c = ActivationContainer::activations("m", "l", ids(2), 2, vec![1.0; 4]).unwrap();
        write_container(&c, tmp.path()).unwrap();
        let blob = fs::read(tmp.path().join(DATA_FILE)).unwrap();
        fs::write(tmp.path().join(DATA_FILE), &blob[..blob.len() - 3]).unwrap();
        assert!(matches!(
            read_container(tmp.path()),
            Err(StoreError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn corrupted_byte_is_a_checksum_mismatch() {
        let tmp = tempfile::tempdir().unwrap();
        let c = ActivationContainer::activations("m", "l", ids(2), 2, vec![1.0; 4]).unwrap();
        write_container(&c, tmp.path()).unwrap();
        let mut blob = fs::read(tmp.path().join(DATA_FILE)).unwrap();
        blob[5] ^= 0x10;
        fs::write(tmp.path().join(DATA_FILE), blob).unwrap();
        assert!(matches!(
            read_container(tmp.path()),
            Err(StoreError::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn unknown_version_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let c = ActivationContainer::activations("m", "l", ids(1), 1, vec![1.0]).unwrap();
        write_container(&c, tmp.path()).unwrap();
        let meta = fs::read_to_string(tmp.path().join(META_FILE)).unwrap();
        fs::write(
            tmp.path().join(META_FILE),
            meta.replace("format_version: 1", "format_version: 9"),
        )
        .unwrap();
        assert!(matches!(
            read_container(tmp.path()),
            Err(StoreError::UnknownVersion(v)) if v == "9"
        ));
    }

    #[test]
    fn blob_is_little_endian() {
        let tmp = tempfile::tempdir().unwrap();
        let c = ActivationContainer::activations("m", "l", ids(1), 1, vec![1.0]).unwrap();
        write_container(&c, tmp.path()).unwrap();
        assert_eq!(
            fs::read(tmp.path().join(DATA_FILE)).unwrap(),
            vec![0, 0, 0x80, 0x3f]
        );
    }

    fn set_with(ids: &[&str]) -> StimulusSet {
        StimulusSet {
            property: PropertyId::MirrorConfusion,
            seed: None,
            images: ids
                .iter()
                .map(|id| StimulusImage {
                    id: id.to_string(),
                    source: ImageSource::Raster(Raster::Gray(image::GrayImage::new(1, 1))),
                })
                .collect(),
            records: ids
                .iter()
                .map(|id| ManifestRecord::new(*id, Role::Original, "g"))
                .collect(),
        }
    }

    #[test]
    fn alignment_covers_missing_and_duplicates() {
        let c = ActivationContainer::activations(
            "m",
            "l",
            vec!["b".into(), "a".into(), "c".into()],
            1,
            vec![0.0, 1.0, 2.0],
        )
        .unwrap();
        let al = align(&c, &set_with(&["a", "b"])).unwrap();
        assert_eq!(al.row("a"), Some(1));
        assert_eq!(al.row("b"), Some(0));
        assert!(matches!(
            align(&c, &set_with(&["a", "z"])),
            Err(StoreError::MissingStimulus(v)) if v == vec!["z".to_string()]
        ));
        let dup = ActivationContainer::activations(
            "m",
            "l",
            vec!["a".into(), "a".into()],
            1,
            vec![0.0, 1.0],
        )
        .unwrap();
        assert!(matches!(
            align(&dup, &set_with(&["a"])),
            Err(StoreError::DuplicateStimulus(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn round_trip_is_bit_exact(
            rows in 1usize..40,
            cols in 1usize..40,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f32> = (0..rows * cols)
                .map(|_| f32::from_bits(rng.random::<u32>() & 0xBFFF_FFFF))
                .collect();
            let c = ActivationContainer::activations("m", "l", ids(rows), cols, data).unwrap();
            let tmp = tempfile::tempdir().unwrap();
            write_container(&c, tmp.path()).unwrap();
            let back = read_container(tmp.path()).unwrap();
            prop_assert_eq!(
                back.data.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                c.data.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
