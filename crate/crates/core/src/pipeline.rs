//! End-to-end benchmark run: effects per model, scores, ranking, embedding,
//! clustering strength and layer trajectories.
//!
//! A property that cannot be measured for a model is left missing and
//! reported as a warning; only configuration errors abort a run.
//!
//! On disk a run reads
//!
//! ```text
//! <stimulus_dir>/<property>/manifest.tsv
//! <model dir>/<property>/{meta,data.f32}
//! <model dir>/layers/<tag>/<property>/{meta,data.f32}   (layerwise runs)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    clustering_strength, davies_bouldin, layer_trajectory, pca_embed, EffectMatrix, Embedding,
    TrajectoryPoint,
};
use crate::domain::{
    validate_config, BrainReference, DomainError, EffectVector, PropertyId, ScoringConfig,
};
use crate::exec::Execution;
use crate::metrics::{compute_effects, MetricResult, PropertyInput};
use crate::scoring::{rank_models, score, ScoreCard};
use crate::stimulus::{load_external_set, StimulusSet};
use crate::store::{read_container, ActivationContainer};

/// Row label of the brain reference in embeddings.
pub const BRAIN_LABEL: &str = "brain";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] DomainError),
    #[error("{0} does not exist")]
    MissingPath(PathBuf),
    #[error("no models configured")]
    NoModels,
    #[error("model id `{0}` appears twice")]
    DuplicateModel(String),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisOptions {
    /// Named groupings, each mapping model ids to cluster labels.
    pub groupings: BTreeMap<String, BTreeMap<String, String>>,
    /// Score per-layer containers and project them as trajectories.
    pub layerwise: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSource {
    pub id: String,
    pub dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub stimulus_dir: PathBuf,
    pub models: Vec<ModelSource>,
    pub brain_reference: PathBuf,
    pub scoring: ScoringConfig,
    pub output_dir: PathBuf,
    pub analysis: AnalysisOptions,
    /// Root seed the stimuli were generated from, recorded in the report.
    pub root_seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            stimulus_dir: PathBuf::from("stimuli"),
            models: Vec::new(),
            brain_reference: PathBuf::from("brain_reference.txt"),
            scoring: ScoringConfig::default(),
            output_dir: PathBuf::from("report"),
            analysis: AnalysisOptions::default(),
            root_seed: None,
        }
    }
}

/// Responses of one model, keyed by property.
#[derive(Clone, Debug, Default)]
pub struct ModelInput {
    pub model_id: String,
    pub containers: BTreeMap<PropertyId, ActivationContainer>,
    /// Per-layer containers keyed by layer tag.
    pub layers: BTreeMap<String, BTreeMap<PropertyId, ActivationContainer>>,
}

#[derive(Debug)]
pub struct ModelOutcome {
    pub model_id: String,
    pub effects: EffectVector,
    pub results: BTreeMap<PropertyId, MetricResult>,
    pub failures: BTreeMap<PropertyId, String>,
    pub card: Option<ScoreCard>,
    pub layers: Vec<EffectVector>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterRow {
    pub grouping: String,
    pub n_clusters: usize,
    pub n_models: usize,
    pub davies_bouldin: f64,
    pub clustering_strength: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Partial,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::Partial => 2,
        }
    }
}

#[derive(Debug)]
pub struct BenchmarkReport {
    pub root_seed: Option<u64>,
    pub scoring: ScoringConfig,
    pub reference: BrainReference,
    pub analysis: AnalysisOptions,
    pub models: Vec<ModelOutcome>,
    pub ranking: Vec<ScoreCard>,
    pub embedding: Option<Embedding>,
    pub clustering: Vec<ClusterRow>,
    pub trajectories: Vec<TrajectoryPoint>,
    pub warnings: Vec<String>,
}

impl BenchmarkReport {
    pub fn status(&self) -> RunStatus {
        if self.warnings.is_empty() {
            RunStatus::Ok
        } else {
            RunStatus::Partial
        }
    }

    /// The first configured grouping, used to label embedding rows.
    pub fn primary_grouping(&self) -> Option<&BTreeMap<String, String>> {
        self.analysis.groupings.values().next()
    }

    pub fn model(&self, id: &str) -> Option<&ModelOutcome> {
        self.models.iter().find(|m| m.model_id == id)
    }
}

fn effects_for(
    model_id: &str,
    layer_tag: Option<&str>,
    containers: &BTreeMap<PropertyId, ActivationContainer>,
    sets: &BTreeMap<PropertyId, StimulusSet>,
    cfg: &ScoringConfig,
    exec: Execution,
) -> crate::metrics::EffectComputation {
    let inputs: BTreeMap<PropertyId, PropertyInput<'_>> = containers
        .iter()
        .filter_map(|(p, c)| {
            sets.get(p)
                .map(|set| (*p, PropertyInput { container: c, set }))
        })
        .collect();
    compute_effects(model_id, layer_tag, &inputs, cfg, exec)
}

fn measure_model(
    m: &ModelInput,
    sets: &BTreeMap<PropertyId, StimulusSet>,
    cfg: &ScoringConfig,
    layerwise: bool,
    exec: Execution,
) -> (ModelOutcome, Vec<String>) {
    let mut warnings = Vec::new();
    let c = effects_for(&m.model_id, None, &m.containers, sets, cfg, exec);
    let failures: BTreeMap<PropertyId, String> = c
        .failures
        .iter()
        .map(|(p, e)| (*p, e.to_string()))
        .collect();
    for (p, e) in &failures {
        warnings.push(format!("{}: {p}: {e}", m.model_id));
    }
    let mut layers = Vec::new();
    if layerwise {
        for (tag, containers) in &m.layers {
            let lc = effects_for(&m.model_id, Some(tag), containers, sets, cfg, exec);
            for (p, e) in &lc.failures {
                warnings.push(format!("{}@{tag}: {p}: {e}", m.model_id));
            }
            layers.push(lc.vector);
        }
    }
    let outcome = ModelOutcome {
        model_id: m.model_id.clone(),
        effects: c.vector,
        results: c.results,
        failures,
        card: None,
        layers,
    };
    (outcome, warnings)
}

/// Properties measured for every given vector, selected by `cfg` and known
/// to the reference.
fn common_properties(
    vectors: &[&EffectVector],
    reference: &BrainReference,
    cfg: &ScoringConfig,
) -> Vec<PropertyId> {
    PropertyId::ALL
        .into_iter()
        .filter(|p| cfg.includes(*p) && reference.get(*p).is_some())
        .filter(|p| vectors.iter().all(|v| v.get(*p).is_some()))
        .collect()
}

fn check_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Result<(), PipelineError> {
    let mut ids: Vec<&str> = ids.collect();
    if ids.is_empty() {
        return Err(PipelineError::NoModels);
    }
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(PipelineError::DuplicateModel(w[0].to_string()));
    }
    Ok(())
}

/// Computes effect vectors for every model without scoring them. Returns
/// the outcomes (with `card` unset) and soft-failure warnings.
pub fn measure(
    sets: &BTreeMap<PropertyId, StimulusSet>,
    models: &[ModelInput],
    cfg: &ScoringConfig,
    layerwise: bool,
    exec: Execution,
) -> Result<(Vec<ModelOutcome>, Vec<String>), PipelineError> {
    check_ids(models.iter().map(|m| m.model_id.as_str()))?;
    let mut warnings = Vec::new();
    for p in &cfg.property_subset {
        if !sets.contains_key(p) {
            warnings.push(format!("{p}: no stimulus set"));
        }
    }
    // models run concurrently; properties within a model stay sequential
    let evaluated = exec.map(models, |m| {
        measure_model(m, sets, cfg, layerwise, Execution::Sequential)
    });
    let mut outcomes = Vec::with_capacity(evaluated.len());
    for (o, w) in evaluated {
        outcomes.push(o);
        warnings.extend(w);
    }
    Ok((outcomes, warnings))
}

/// Runs the benchmark on in-memory stimulus sets and containers.
pub fn run(
    sets: &BTreeMap<PropertyId, StimulusSet>,
    models: &[ModelInput],
    reference: &BrainReference,
    cfg: &ScoringConfig,
    analysis: &AnalysisOptions,
    root_seed: Option<u64>,
    exec: Execution,
) -> Result<BenchmarkReport, PipelineError> {
    validate_config(cfg, reference)?;
    let (outcomes, warnings) = measure(sets, models, cfg, analysis.layerwise, exec)?;
    analyze(outcomes, reference, cfg, analysis, root_seed, warnings)
}

/// Scores and analyzes previously computed effect vectors, e.g. read back
/// from `effects.csv`. Vectors with a layer tag attach to the model of the
/// same id.
pub fn from_effects(
    vectors: Vec<EffectVector>,
    reference: &BrainReference,
    cfg: &ScoringConfig,
    analysis: &AnalysisOptions,
    root_seed: Option<u64>,
) -> Result<BenchmarkReport, PipelineError> {
    validate_config(cfg, reference)?;
    let (models, layers): (Vec<_>, Vec<_>) =
        vectors.into_iter().partition(|v| v.layer_tag().is_none());
    check_ids(models.iter().map(|v| v.model_id()))?;
    let mut warnings = Vec::new();
    let mut outcomes: Vec<ModelOutcome> = models
        .into_iter()
        .map(|effects| ModelOutcome {
            model_id: effects.model_id().to_string(),
            effects,
            results: BTreeMap::new(),
            failures: BTreeMap::new(),
            card: None,
            layers: Vec::new(),
        })
        .collect();
    for l in layers {
        match outcomes.iter_mut().find(|o| o.model_id == l.model_id()) {
            Some(o) => o.layers.push(l),
            None => warnings.push(format!(
                "{}@{}: layer without a model row",
                l.model_id(),
                l.layer_tag().unwrap_or_default()
            )),
        }
    }
    for o in &mut outcomes {
        for p in &cfg.property_subset {
            if o.effects.get(*p).is_none() {
                warnings.push(format!("{}: {p}: no effect", o.model_id));
            }
        }
    }
    analyze(outcomes, reference, cfg, analysis, root_seed, warnings)
}

fn analyze(
    mut outcomes: Vec<ModelOutcome>,
    reference: &BrainReference,
    cfg: &ScoringConfig,
    analysis: &AnalysisOptions,
    root_seed: Option<u64>,
    mut warnings: Vec<String>,
) -> Result<BenchmarkReport, PipelineError> {
    for o in &mut outcomes {
        match score(&o.effects, reference, cfg) {
            Ok(card) => o.card = Some(card),
            Err(e) => warnings.push(format!("{}: not scored: {e}", o.model_id)),
        }
    }

    let ranking = rank_models(outcomes.iter().filter_map(|o| o.card.clone()).collect());

    let scored: Vec<&EffectVector> = outcomes
        .iter()
        .filter(|o| o.card.is_some())
        .map(|o| &o.effects)
        .collect();
    let mut embedding = None;
    if scored.len() >= 2 {
        let props = common_properties(&scored, reference, cfg);
        let owned: Vec<EffectVector> = scored.iter().map(|v| (*v).clone()).collect();
        let e = EffectMatrix::from_vectors(&owned, Some(&props))
            .and_then(|m| m.with_brain(reference, BRAIN_LABEL))
            .and_then(|m| pca_embed(&m));
        match e {
            Ok(e) => embedding = Some(e),
            Err(err) => warnings.push(format!("embedding: {err}")),
        }
    }

    let mut clustering = Vec::new();
    for (name, groups) in &analysis.groupings {
        let members: Vec<(&EffectVector, &String)> = outcomes
            .iter()
            .filter(|o| o.card.is_some())
            .filter_map(|o| groups.get(&o.model_id).map(|g| (&o.effects, g)))
            .collect();
        let vectors: Vec<EffectVector> = members.iter().map(|(v, _)| (*v).clone()).collect();
        let refs: Vec<&EffectVector> = members.iter().map(|(v, _)| *v).collect();
        let labels: Vec<String> = members.iter().map(|(_, g)| (*g).clone()).collect();
        let props = common_properties(&refs, reference, cfg);
        let db = EffectMatrix::from_vectors(&vectors, Some(&props))
            .and_then(|m| davies_bouldin(&m.values, &labels));
        match db {
            Ok(db) => {
                let mut distinct = labels.clone();
                distinct.sort();
                distinct.dedup();
                clustering.push(ClusterRow {
                    grouping: name.clone(),
                    n_clusters: distinct.len(),
                    n_models: labels.len(),
                    davies_bouldin: db,
                    clustering_strength: clustering_strength(db),
                });
            }
            Err(err) => warnings.push(format!("clustering `{name}`: {err}")),
        }
    }

    let mut trajectories = Vec::new();
    if analysis.layerwise {
        match &embedding {
            Some(e) => {
                for o in outcomes.iter().filter(|o| !o.layers.is_empty()) {
                    match layer_trajectory(&o.layers, e) {
                        Ok(t) => trajectories.extend(t),
                        Err(err) => warnings.push(format!("{}: trajectory: {err}", o.model_id)),
                    }
                }
            }
            None => warnings.push("trajectories: no embedding to project into".into()),
        }
    }

    Ok(BenchmarkReport {
        root_seed,
        scoring: cfg.clone(),
        reference: reference.clone(),
        analysis: analysis.clone(),
        models: outcomes,
        ranking,
        embedding,
        clustering,
        trajectories,
        warnings,
    })
}

fn read_property_containers(
    dir: &Path,
    cfg: &ScoringConfig,
    label: &str,
    warnings: &mut Vec<String>,
) -> BTreeMap<PropertyId, ActivationContainer> {
    let mut out = BTreeMap::new();
    for p in &cfg.property_subset {
        let d = dir.join(p.as_str());
        if !d.is_dir() {
            // reported as a missing input when effects are computed
            continue;
        }
        match read_container(&d) {
            Ok(c) => {
                out.insert(*p, c);
            }
            Err(e) => warnings.push(format!("{label}: {p}: {e}")),
        }
    }
    out
}

/// Loads every stimulus set under `dir` for the configured properties.
/// Missing or malformed sets become warnings.
pub fn load_stimulus_sets(
    dir: &Path,
    cfg: &ScoringConfig,
    warnings: &mut Vec<String>,
) -> BTreeMap<PropertyId, StimulusSet> {
    let mut sets = BTreeMap::new();
    for p in &cfg.property_subset {
        let manifest = dir.join(p.as_str()).join("manifest.tsv");
        if !manifest.is_file() {
            continue;
        }
        match load_external_set(&manifest) {
            Ok(s) if s.property == *p => {
                sets.insert(*p, s);
            }
            Ok(s) => warnings.push(format!(
                "{p}: manifest at {} declares {}",
                manifest.display(),
                s.property
            )),
            Err(e) => warnings.push(format!("{p}: {e}")),
        }
    }
    sets
}

fn check_paths(config: &RunConfig, need_reference: bool) -> Result<(), PipelineError> {
    if !config.stimulus_dir.is_dir() {
        return Err(PipelineError::MissingPath(config.stimulus_dir.clone()));
    }
    if need_reference && !config.brain_reference.is_file() {
        return Err(PipelineError::MissingPath(config.brain_reference.clone()));
    }
    for m in &config.models {
        if !m.dir.is_dir() {
            return Err(PipelineError::MissingPath(m.dir.clone()));
        }
    }
    Ok(())
}

/// Reads every configured model's containers, plus per-layer containers
/// for layerwise runs. Unreadable containers become warnings.
pub fn load_models(config: &RunConfig, warnings: &mut Vec<String>) -> Vec<ModelInput> {
    let mut models = Vec::with_capacity(config.models.len());
    for src in &config.models {
        let containers = read_property_containers(&src.dir, &config.scoring, &src.id, warnings);
        let mut layers = BTreeMap::new();
        let layer_root = src.dir.join("layers");
        if config.analysis.layerwise && layer_root.is_dir() {
            let mut tags: Vec<String> = fs::read_dir(&layer_root)
                .map(|rd| {
                    rd.filter_map(Result::ok)
                        .filter(|e| e.path().is_dir())
                        .map(|e| e.file_name().to_string_lossy().into_owned())
                        .collect()
                })
                .unwrap_or_default();
            tags.sort();
            for tag in tags {
                let label = format!("{}@{tag}", src.id);
                let c = read_property_containers(
                    &layer_root.join(&tag),
                    &config.scoring,
                    &label,
                    warnings,
                );
                layers.insert(tag, c);
            }
        }
        models.push(ModelInput {
            model_id: src.id.clone(),
            containers,
            layers,
        });
    }
    models
}

/// Loads stimuli and containers from disk and computes effect vectors only.
/// No brain reference is needed.
pub fn measure_benchmark(
    config: &RunConfig,
    exec: Execution,
) -> Result<(Vec<ModelOutcome>, Vec<String>), PipelineError> {
    check_paths(config, false)?;
    let mut warnings = Vec::new();
    let sets = load_stimulus_sets(&config.stimulus_dir, &config.scoring, &mut warnings);
    let models = load_models(config, &mut warnings);
    let (outcomes, mut more) = measure(
        &sets,
        &models,
        &config.scoring,
        config.analysis.layerwise,
        exec,
    )?;
    warnings.append(&mut more);
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok((outcomes, warnings))
}

/// Loads a run from disk and executes it.
pub fn run_benchmark(
    config: &RunConfig,
    exec: Execution,
) -> Result<BenchmarkReport, PipelineError> {
    check_paths(config, true)?;
    let reference = BrainReference::load(&config.brain_reference)?;
    validate_config(&config.scoring, &reference)?;

    let mut warnings = Vec::new();
    let sets = load_stimulus_sets(&config.stimulus_dir, &config.scoring, &mut warnings);
    let models = load_models(config, &mut warnings);
    let mut report = run(
        &sets,
        &models,
        &reference,
        &config.scoring,
        &config.analysis,
        config.root_seed,
        exec,
    )?;
    warnings.append(&mut report.warnings);
    report.warnings = warnings;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok(report)
}
