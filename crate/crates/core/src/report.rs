//! Writes a [`BenchmarkReport`] as a directory of deterministic text files.
//!
//! | file | content |
//! |---|---|
//! | `effects.csv` | effect vectors, models then layers |
//! | `metrics.csv` | one row per model and property, with diagnostics counts |
//! | `ranking.csv`, `ranking.txt` | BPM ranking |
//! | `presence.csv`, `presence.txt` | binarized effects |
//! | `embedding.csv` | 2D coordinates of models and the brain row |
//! | `clustering.csv` | clustering strength per grouping |
//! | `trajectories.csv` | per-layer coordinates (layerwise runs) |
//! | `summary.json` | run metadata, scores and warnings |
//! | `warnings.txt` | soft failures, one per line |

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::domain::{write_effects_csv, DistanceMetric, NegativeBranch, PropertyId};
use crate::pipeline::{BenchmarkReport, ClusterRow, ModelOutcome, RunStatus, BRAIN_LABEL};
use crate::scoring::{presence_csv, presence_table, ranking_csv, ranking_table};

pub fn effects_text(models: &[ModelOutcome]) -> String {
    let mut vectors: Vec<_> = models.iter().map(|m| m.effects.clone()).collect();
    vectors.extend(models.iter().flat_map(|m| m.layers.iter().cloned()));
    write_effects_csv(&vectors)
}

pub fn metrics_text(models: &[ModelOutcome], properties: &BTreeSet<PropertyId>) -> String {
    let mut s = String::from("model,property,effect,n_groups,n_units_used,n_skipped,status\n");
    for m in models {
        for p in properties {
            match (m.results.get(p), m.failures.get(p)) {
                (Some(res), _) => {
                    let _ = writeln!(
                        s,
                        "{},{p},{},{},{},{},ok",
                        m.model_id, res.effect, res.n_groups, res.n_units_used, res.n_skipped
                    );
                }
                (None, Some(e)) => {
                    let _ = writeln!(s, "{},{p},NA,,,,\"{}\"", m.model_id, e.replace('"', "'"));
                }
                (None, None) => {}
            }
        }
    }
    s
}

pub fn embedding_text(r: &BenchmarkReport) -> String {
    let mut s = String::from("label,pc1,pc2,group,depth_percentile\n");
    let grouping = r.primary_grouping();
    if let Some(e) = &r.embedding {
        for (label, c) in e.labels.iter().zip(&e.coordinates) {
            let group = if label == BRAIN_LABEL {
                BRAIN_LABEL.to_string()
            } else {
                grouping
                    .and_then(|g| g.get(label.as_str()))
                    .cloned()
                    .unwrap_or_default()
            };
            let _ = writeln!(s, "{label},{},{},{group},", c[0], c[1]);
        }
    }
    s
}

pub fn trajectories_text(r: &BenchmarkReport) -> String {
    let mut s = String::from("label,pc1,pc2,group,depth_percentile,first,last\n");
    for t in &r.trajectories {
        let _ = writeln!(
            s,
            "{}@{},{},{},{},{},{},{}",
            t.model_id,
            t.layer_tag,
            t.coordinates[0],
            t.coordinates[1],
            t.model_id,
            t.depth,
            t.first,
            t.last
        );
    }
    s
}

pub fn clustering_text(rows: &[ClusterRow]) -> String {
    let mut s = String::from("grouping,n_clusters,n_models,davies_bouldin,clustering_strength\n");
    for c in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            c.grouping, c.n_clusters, c.n_models, c.davies_bouldin, c.clustering_strength
        );
    }
    s
}

#[derive(Serialize)]
struct Summary<'a> {
    status: RunStatus,
    root_seed: Option<u64>,
    distance_metric: DistanceMetric,
    lambda: f64,
    negative_branch: NegativeBranch,
    active_unit_threshold: f64,
    properties: Vec<PropertyId>,
    reference_provenance: &'a str,
    ranking: Vec<RankEntry<'a>>,
    explained_variance_ratio: Option<[f64; 2]>,
    clustering: &'a [ClusterRow],
    warnings: &'a [String],
}

#[derive(Serialize)]
struct RankEntry<'a> {
    rank: usize,
    model_id: &'a str,
    bpm: f64,
    agreement: usize,
    n_properties: usize,
    l1_similarity: f64,
}

pub fn summary_json(r: &BenchmarkReport) -> String {
    let summary = Summary {
        status: r.status(),
        root_seed: r.root_seed,
        distance_metric: r.scoring.distance_metric,
        lambda: r.scoring.lambda,
        negative_branch: r.scoring.negative_branch,
        active_unit_threshold: r.scoring.active_unit_threshold,
        properties: r.scoring.property_subset.iter().copied().collect(),
        reference_provenance: &r.reference.provenance,
        ranking: r
            .ranking
            .iter()
            .enumerate()
            .map(|(i, c)| RankEntry {
                rank: i + 1,
                model_id: &c.model_id,
                bpm: c.bpm,
                agreement: c.agreement,
                n_properties: c.n_properties,
                l1_similarity: c.l1_similarity,
            })
            .collect(),
        explained_variance_ratio: r.embedding.as_ref().map(|e| e.explained_variance_ratio),
        clustering: &r.clustering,
        warnings: &r.warnings,
    };
    let mut s = serde_json::to_string_pretty(&summary).expect("summary serializes");
    s.push('\n');
    s
}

fn header(r: &BenchmarkReport) -> String {
    let seed = r
        .root_seed
        .map(|s| s.to_string())
        .unwrap_or_else(|| "unrecorded".into());
    format!(
        "# root seed: {seed}; distance: {}; lambda: {}; properties: {}\n",
        r.scoring.distance_metric,
        r.scoring.lambda,
        r.scoring.property_subset.len()
    )
}

fn warnings_text(warnings: &[String]) -> String {
    let mut s = warnings.join("\n");
    if !s.is_empty() {
        s.push('\n');
    }
    s
}

/// All report files as `(name, content)` pairs, in a fixed order.
pub fn render(r: &BenchmarkReport) -> Vec<(&'static str, String)> {
    let warnings = warnings_text(&r.warnings);
    vec![
        ("effects.csv", effects_text(&r.models)),
        (
            "metrics.csv",
            metrics_text(&r.models, &r.scoring.property_subset),
        ),
        ("ranking.csv", ranking_csv(&r.ranking)),
        ("ranking.txt", header(r) + &ranking_table(&r.ranking)),
        (
            "presence.csv",
            presence_csv(
                &r.models
                    .iter()
                    .filter_map(|m| m.card.clone())
                    .collect::<Vec<_>>(),
            ),
        ),
        (
            "presence.txt",
            presence_table(
                &r.models
                    .iter()
                    .filter_map(|m| m.card.clone())
                    .collect::<Vec<_>>(),
            ),
        ),
        ("embedding.csv", embedding_text(r)),
        ("clustering.csv", clustering_text(&r.clustering)),
        ("trajectories.csv", trajectories_text(r)),
        ("summary.json", summary_json(r)),
        ("warnings.txt", warnings),
    ]
}

/// Writes every report file into `dir`, creating it if needed.
pub fn emit_report(r: &BenchmarkReport, dir: &Path) -> io::Result<Vec<PathBuf>> {
    write_files(dir, render(r))
}

/// Writes the outputs of an effects-only run: `effects.csv`, `metrics.csv`
/// and `warnings.txt`.
pub fn emit_effects(
    models: &[ModelOutcome],
    properties: &BTreeSet<PropertyId>,
    warnings: &[String],
    dir: &Path,
) -> io::Result<Vec<PathBuf>> {
    write_files(
        dir,
        vec![
            ("effects.csv", effects_text(models)),
            ("metrics.csv", metrics_text(models, properties)),
            ("warnings.txt", warnings_text(warnings)),
        ],
    )
}

fn write_files(dir: &Path, files: Vec<(&'static str, String)>) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    files
        .into_iter()
        .map(|(name, text)| {
            let p = dir.join(name);
            fs::write(&p, text)?;
            Ok(p)
        })
        .collect()
}
