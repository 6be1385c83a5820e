//! Shared fixtures: containers with planted effects and a small on-disk
//! benchmark workspace.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use brainprop::domain::{BrainReference, PropertyId};
use brainprop::exec::Execution;
use brainprop::pipeline::{ModelSource, RunConfig};
use brainprop::stimulus::{
    generate_all, layout, ImageSource, Layout, ManifestRecord, Role, StimulusImage, StimulusSet,
    StimulusSpec,
};
use brainprop::store::{write_container, ActivationContainer};
use brainprop::synthetic::SyntheticModel;
use image::{Rgba, RgbaImage};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A stimulus set whose images are never read.
pub fn placeholder_set(property: PropertyId, records: Vec<ManifestRecord>) -> StimulusSet {
    let images = records
        .iter()
        .map(|r| StimulusImage {
            id: r.stimulus_id.clone(),
            source: ImageSource::File(PathBuf::from(&r.file)),
        })
        .collect();
    StimulusSet {
        property,
        seed: None,
        images,
        records,
    }
}

/// Responses in manifest order, plus the matching stimulus ids.
pub struct Responses {
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Option<Vec<String>>,
}

impl Responses {
    fn new() -> Self {
        Self {
            ids: Vec::new(),
            rows: Vec::new(),
            labels: None,
        }
    }

    fn push(&mut self, id: String, row: Vec<f64>) {
        self.ids.push(id);
        self.rows.push(row);
    }

    pub fn matrix(&self) -> brainprop::Matrix {
        brainprop::Matrix::from_rows(&self.rows)
    }

    pub fn container(&self, model: &str) -> ActivationContainer {
        let n_units = self.rows[0].len();
        let data = self.rows.iter().flatten().map(|&v| v as f32).collect();
        match &self.labels {
            Some(l) => ActivationContainer::probabilities(model, self.ids.clone(), l.clone(), data)
                .unwrap(),
            None => {
                ActivationContainer::activations(model, "planted", self.ids.clone(), n_units, data)
                    .unwrap()
            }
        }
    }
}

pub struct Planted {
    pub set: StimulusSet,
    pub responses: Responses,
    pub expected: f64,
}

const UNITS: usize = 8;

fn int_row(rng: &mut ChaCha8Rng, lo: i32, hi: i32) -> Vec<f64> {
    (0..UNITS)
        .map(|_| rng.random_range(lo..=hi) as f64)
        .collect()
}

fn shifted(x: &[f64], axis: usize, by: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[axis] += by;
    y
}

/// Pairs of role positions whose distances form the index as
/// `(pos - neg) / (pos + neg)`.
fn index_pairs(p: PropertyId) -> ((usize, usize), (usize, usize)) {
    use PropertyId as P;
    match p {
        P::MirrorConfusion => ((0, 2), (0, 1)),
        P::OcclusionBasic | P::OcclusionDepth => ((0, 2), (0, 1)),
        P::RelativeSize | P::SurfaceInvariance | P::GlobalAdvantage => ((0, 1), (0, 2)),
        P::ThreeD1 | P::ThreeD2 | P::Thatcher => ((0, 1), (2, 3)),
        other => panic!("{other} is not an index metric"),
    }
}

/// Builds a set and integer-valued responses whose effect is known in
/// closed form. Integer responses survive the f32 container exactly.
pub fn planted(p: PropertyId, rng: &mut ChaCha8Rng) -> Planted {
    let mut resp = Responses::new();
    let mut records = Vec::new();
    let expected;
    match layout(p) {
        Layout::Groups(roles) => {
            let ((_, pj), (nk, nj)) = index_pairs(p);
            let mut per_group = Vec::new();
            for g in 0..6 {
                let gid = format!("g{g}");
                let a = rng.random_range(1..=40) as f64;
                // every third group has no "negative" change: index 1
                let b = if g % 3 == 0 {
                    0.0
                } else {
                    rng.random_range(1..=40) as f64
                };
                per_group.push((a - b) / (a + b));
                let x = int_row(rng, 0, 50);
                let mut rows = vec![x.clone(); roles.len()];
                rows[pj] = shifted(&x, 0, a);
                if nk == 0 {
                    rows[nj] = shifted(&x, 1, b);
                } else {
                    let y = int_row(rng, 0, 50);
                    rows[nk] = y.clone();
                    rows[nj] = shifted(&y, 1, b);
                }
                for (role, row) in roles.iter().zip(rows) {
                    let id = format!("{gid}_{role}");
                    records.push(ManifestRecord::new(&id, *role, &gid));
                    resp.push(id, row);
                }
            }
            expected = per_group.iter().sum::<f64>() / per_group.len() as f64;
        }
        Layout::Normalization { arity } => {
            // multiples of `arity` keep sum / arity an exact integer
            let n_obj = 6;
            let singles: Vec<Vec<f64>> = (0..n_obj)
                .map(|_| {
                    (0..UNITS)
                        .map(|_| (arity as i32 * rng.random_range(0..=10)) as f64)
                        .collect()
                })
                .collect();
            for (i, s) in singles.iter().enumerate() {
                let id = format!("single_{i}");
                records.push(ManifestRecord::new(&id, Role::Single, "singles"));
                resp.push(id, s.clone());
            }
            for d in 0..8 {
                let members: Vec<usize> = rand::seq::index::sample(rng, n_obj, arity)
                    .into_iter()
                    .collect();
                let row = (0..UNITS)
                    .map(|u| members.iter().map(|&m| singles[m][u]).sum::<f64>() / arity as f64)
                    .collect();
                let id = format!("multi_{d}");
                records.push(
                    ManifestRecord::new(&id, Role::Multi, "multi")
                        .with_members(members.iter().map(|m| format!("single_{m}")).collect()),
                );
                resp.push(id, row);
            }
            expected = 1.0 / arity as f64;
        }
        Layout::TwoSets(ra, rb) => {
            let rows: Vec<Vec<f64>> = (0..6).map(|_| int_row(rng, 0, 9)).collect();
            for (role, prefix) in [(ra, "a"), (rb, "b")] {
                for (i, r) in rows.iter().enumerate() {
                    let id = format!("{prefix}_{i}");
                    records.push(ManifestRecord::new(&id, role, prefix));
                    resp.push(id, r.clone());
                }
            }
            expected = 1.0;
        }
        Layout::Series(role) => {
            let lengths = geometric(16.0, 1.25, 10);
            let base = int_row(rng, 0, 5);
            for (k, l) in lengths.iter().enumerate() {
                let id = format!("bar_{k}");
                records.push(ManifestRecord::new(&id, role, "bars").with_value(*l));
                resp.push(id, shifted(&base, 0, *l));
            }
            // distances equal |l_i - l_j| exactly, so the effect is
            // pearson(a, g) - 1
            let (a, g) = weber_pairs(&lengths);
            expected = naive_pearson(&a, &g) - 1.0;
        }
        Layout::Labelled => {
            let labels: Vec<String> = ["cup", "car", "dog"].map(String::from).to_vec();
            let mut hits = [0usize; 2];
            let n = 5;
            for (ci, role) in [Role::Congruent, Role::Incongruent].into_iter().enumerate() {
                let correct = rng.random_range(if ci == 0 { 1 } else { 0 }..=n);
                hits[ci] = correct;
                for i in 0..n {
                    let truth = rng.random_range(0..labels.len());
                    let guess = if i < correct {
                        truth
                    } else {
                        (truth + 1) % labels.len()
                    };
                    let mut row = vec![0.25; labels.len()];
                    row[guess] = 0.5;
                    let id = format!("{role}_{i}");
                    records.push(
                        ManifestRecord::new(&id, role, format!("o{i}"))
                            .with_label(labels[truth].clone()),
                    );
                    resp.push(id, row);
                }
            }
            resp.labels = Some(labels);
            let (ac, ai) = (hits[0] as f64 / n as f64, hits[1] as f64 / n as f64);
            expected = (ac - ai) / (ac + ai);
        }
    }
    Planted {
        set: placeholder_set(p, records),
        responses: resp,
        expected,
    }
}

pub fn geometric(start: f64, ratio: f64, n: usize) -> Vec<f64> {
    let mut out = vec![start];
    while out.len() < n {
        out.push(out.last().unwrap() * ratio);
    }
    out
}

/// `(a, g)` over unordered pairs in `(0,1), (0,2), ..` order.
pub fn weber_pairs(l: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut a = Vec::new();
    let mut g = Vec::new();
    for i in 0..l.len() {
        for j in i + 1..l.len() {
            a.push((l[i] - l[j]).abs());
            g.push((l[i] - l[j]).abs() / (l[i] + l[j]));
        }
    }
    (a, g)
}

/// Textbook two-pass Pearson correlation.
pub fn naive_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// A reference with a value for every property.
pub fn test_reference(rng: &mut ChaCha8Rng) -> BrainReference {
    BrainReference::new(
        PropertyId::ALL.map(|p| (p, rng.random_range(0.05..=1.0))),
        "test fixture",
    )
    .unwrap()
}

/// Writes object cutouts and scene backgrounds for the scene protocol.
pub fn write_scene_assets(dir: &Path) {
    fs::create_dir_all(dir).unwrap();
    let mut index = String::from("kind\tfile\tlabel\tcontext\n");
    let objects = [
        ("cup", "kitchen", [200, 40, 40]),
        ("car", "street", [40, 40, 200]),
    ];
    for (label, context, rgb) in objects {
        let img = RgbaImage::from_fn(32, 32, |x, y| {
            let inside = (x as i32 - 16).pow(2) + (y as i32 - 16).pow(2) < 144;
            if inside {
                Rgba([rgb[0], rgb[1], rgb[2], 255])
            } else {
                Rgba([0, 0, 0, 0])
            }
        });
        let file = format!("{label}.png");
        img.save(dir.join(&file)).unwrap();
        index.push_str(&format!("object\t{file}\t{label}\t{context}\n"));
    }
    for (label, shade) in [("kitchen", 220u8), ("street", 60u8)] {
        let img = RgbaImage::from_fn(48, 48, |x, y| {
            Rgba([
                shade,
                shade.wrapping_add((x * 2) as u8),
                shade.wrapping_sub(y as u8),
                255,
            ])
        });
        let file = format!("{label}.png");
        img.save(dir.join(&file)).unwrap();
        index.push_str(&format!("scene\t{file}\t{label}\t-\n"));
    }
    fs::write(dir.join("assets.tsv"), index).unwrap();
}

/// Generates every stimulus set from `root_seed` and writes them under
/// `out`.
pub fn write_stimuli(
    out: &Path,
    assets: &Path,
    root_seed: u64,
) -> BTreeMap<PropertyId, StimulusSet> {
    let specs: Vec<StimulusSpec> = PropertyId::ALL
        .into_iter()
        .map(|p| {
            let mut s = StimulusSpec::new(p, StimulusSpec::derive_seed(root_seed, p));
            if p == PropertyId::SceneIncongruence {
                s.params.assets_dir = Some(assets.to_path_buf());
            }
            s
        })
        .collect();
    let mut sets = BTreeMap::new();
    for r in generate_all(&specs, Execution::Parallel) {
        let set = r.unwrap();
        set.write(out).unwrap();
        sets.insert(set.property, set);
    }
    sets
}

/// A complete on-disk workspace: stimuli, synthetic model containers, a
/// brain reference and a run config.
pub fn synthetic_workspace(root: &Path, root_seed: u64, models: &[(&str, u64)]) -> RunConfig {
    let stimuli = root.join("stimuli");
    write_scene_assets(&root.join("assets"));
    let sets = write_stimuli(&stimuli, &root.join("assets"), root_seed);
    let mut sources = Vec::new();
    for (id, seed) in models {
        let model = SyntheticModel::new(*id, *seed);
        let dir = root.join("models").join(id);
        for (p, set) in &sets {
            let c = model.extract(set, Execution::Parallel).unwrap();
            write_container(&c, &dir.join(p.as_str())).unwrap();
        }
        sources.push(ModelSource {
            id: id.to_string(),
            dir,
        });
    }
    let reference = root.join("brain_reference.txt");
    let mut text = String::from("# provenance: test fixture\n");
    for (i, p) in PropertyId::ALL.iter().enumerate() {
        text.push_str(&format!("{p} = {}\n", 0.1 + 0.05 * i as f64));
    }
    fs::write(&reference, text).unwrap();
    RunConfig {
        stimulus_dir: stimuli,
        models: sources,
        brain_reference: reference,
        output_dir: root.join("report"),
        root_seed: Some(root_seed),
        ..RunConfig::default()
    }
}

/// Every file under `dir` with its bytes, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

/// The structure of [`planted`] with every response replaced by uniform
/// noise (probability rows stay normalized). `expected` is not meaningful.
pub fn random_instance(p: PropertyId, rng: &mut ChaCha8Rng) -> Planted {
    let mut inst = planted(p, rng);
    let probs = inst.responses.labels.is_some();
    for row in inst.responses.rows.iter_mut() {
        for v in row.iter_mut() {
            *v = rng.random_range(0.0..10.0);
        }
        if probs {
            let z: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= z);
        }
    }
    inst.expected = f64::NAN;
    inst
}
