//! Ties stimulus manifests and activation containers to the metric
//! functions.

use std::collections::BTreeMap;
use std::fmt;

use super::indices::{
    global_advantage, mirror_confusion, occlusion_index, relative_size_index,
    surface_invariance_index, thatcher_index, three_d_index, OcclusionVariant, ThreeDVariant,
};
use super::population::{
    correlated_sparseness, normalization_slope, scene_incongruence, weber_effect, Display,
};
use super::{detect_active_units, MetricError, MetricResult};
use crate::domain::{EffectVector, PropertyId, ScoringConfig, N_PROPERTIES};
use crate::exec::Execution;
use crate::matrix::Matrix;
use crate::stimulus::{layout, Layout, Role, StimulusSet};
use crate::store::{align_ids, ActivationContainer, Alignment, ContainerKind};

/// One property's stimulus set and the container of responses to it.
#[derive(Clone, Copy, Debug)]
pub struct PropertyInput<'a> {
    pub container: &'a ActivationContainer,
    pub set: &'a StimulusSet,
}

fn row_of(al: &Alignment, id: &str) -> usize {
    // align() guarantees every manifest id has a row
    al.row(id).expect("aligned stimulus")
}

fn group_rows<'m, const N: usize>(
    acts: &'m Matrix,
    al: &Alignment,
    set: &StimulusSet,
    roles: &[Role],
) -> Vec<[&'m [f64]; N]> {
    set.groups()
        .into_iter()
        .map(|(_, members)| std::array::from_fn(|k| acts.row(row_of(al, &members[&roles[k]]))))
        .collect()
}

fn rows_with_role(set: &StimulusSet, al: &Alignment, role: Role) -> Vec<usize> {
    set.records
        .iter()
        .filter(|r| r.role == role)
        .map(|r| row_of(al, &r.stimulus_id))
        .collect()
}

/// Measures one property from its stimulus set and container.
pub fn evaluate_property(
    property: PropertyId,
    input: PropertyInput<'_>,
    cfg: &ScoringConfig,
) -> Result<MetricResult, MetricError> {
    let PropertyInput { container, set } = input;
    let want = if property.uses_probabilities() {
        ContainerKind::ClassProbabilities
    } else {
        ContainerKind::Activations
    };
    if container.kind != want {
        return Err(MetricError::WrongKind(format!(
            "{property} needs {}, container holds {}",
            want.as_str(),
            container.kind.as_str()
        )));
    }
    evaluate_responses(
        property,
        &container.to_matrix(),
        &container.stimulus_ids,
        container.label_map.as_deref(),
        set,
        cfg,
    )
}

/// Measures one property from a response matrix whose rows are named by
/// `stimulus_ids`. `label_map` names the columns of probability outputs.
pub fn evaluate_responses(
    property: PropertyId,
    acts: &Matrix,
    stimulus_ids: &[String],
    label_map: Option<&[String]>,
    set: &StimulusSet,
    cfg: &ScoringConfig,
) -> Result<MetricResult, MetricError> {
    if set.property != property {
        return Err(MetricError::SetMismatch {
            expected: property,
            found: set.property,
        });
    }
    if stimulus_ids.len() != acts.rows() {
        return Err(MetricError::LengthMismatch(stimulus_ids.len(), acts.rows()));
    }
    set.validate()?;
    let al = align_ids(stimulus_ids, set)?;
    let metric = cfg.distance_metric;

    match layout(property) {
        Layout::Normalization { arity } => {
            let all: Vec<usize> = set.ids().map(|id| row_of(&al, id)).collect();
            let mask = detect_active_units(&acts.select_rows(&all), cfg.active_unit_threshold)?;
            let displays: Vec<Display> = set
                .records
                .iter()
                .filter(|r| r.role == Role::Multi)
                .map(|r| Display {
                    multi: row_of(&al, &r.stimulus_id),
                    singles: r.members.iter().map(|m| row_of(&al, m)).collect(),
                })
                .collect();
            normalization_slope(acts, &displays, arity, &mask)
        }
        Layout::Labelled => {
            let labels = label_map.ok_or_else(|| {
                MetricError::LabelMismatch("probability container has no label map".into())
            })?;
            let mut congruent = Vec::new();
            let mut incongruent = Vec::new();
            for r in &set.records {
                let label = r.label.as_deref().unwrap_or_default();
                let idx = labels.iter().position(|l| l == label).ok_or_else(|| {
                    MetricError::LabelMismatch(format!(
                        "label `{label}` of `{}` is not among the model's classes",
                        r.stimulus_id
                    ))
                })?;
                let item = (row_of(&al, &r.stimulus_id), idx);
                match r.role {
                    Role::Congruent => congruent.push(item),
                    _ => incongruent.push(item),
                }
            }
            scene_incongruence(acts, &congruent, &incongruent)
        }
        Layout::Groups(roles) => match property {
            PropertyId::MirrorConfusion => {
                mirror_confusion(&group_rows(acts, &al, set, roles), metric)
            }
            PropertyId::OcclusionBasic => occlusion_index(
                &group_rows(acts, &al, set, roles),
                OcclusionVariant::Basic,
                metric,
            ),
            PropertyId::OcclusionDepth => occlusion_index(
                &group_rows(acts, &al, set, roles),
                OcclusionVariant::Depth,
                metric,
            ),
            PropertyId::RelativeSize => {
                relative_size_index(&group_rows(acts, &al, set, roles), metric)
            }
            PropertyId::SurfaceInvariance => {
                surface_invariance_index(&group_rows(acts, &al, set, roles), metric)
            }
            PropertyId::ThreeD1 => three_d_index(
                &group_rows(acts, &al, set, roles),
                ThreeDVariant::LineCount,
                metric,
            ),
            PropertyId::ThreeD2 => three_d_index(
                &group_rows(acts, &al, set, roles),
                ThreeDVariant::JunctionClutter,
                metric,
            ),
            PropertyId::GlobalAdvantage => {
                global_advantage(&group_rows(acts, &al, set, roles), metric)
            }
            PropertyId::Thatcher => thatcher_index(&group_rows(acts, &al, set, roles), metric),
            other => unreachable!("{other} is not a grouped property"),
        },
        Layout::TwoSets(a, b) => {
            let rows_a = rows_with_role(set, &al, a);
            let rows_b = rows_with_role(set, &al, b);
            let union: Vec<usize> = rows_a.iter().chain(&rows_b).copied().collect();
            let mask = detect_active_units(&acts.select_rows(&union), cfg.active_unit_threshold)?;
            correlated_sparseness(
                property,
                &acts.select_rows(&rows_a),
                &acts.select_rows(&rows_b),
                &mask,
            )
        }
        Layout::Series(role) => {
            let recs: Vec<_> = set.records.iter().filter(|r| r.role == role).collect();
            let rows: Vec<usize> = recs.iter().map(|r| row_of(&al, &r.stimulus_id)).collect();
            let lengths: Vec<f64> = recs.iter().map(|r| r.value.unwrap_or(f64::NAN)).collect();
            weber_effect(&acts.select_rows(&rows), &lengths, metric)
        }
    }
}

/// Effects for one model, with per-property results and failures.
#[derive(Debug)]
pub struct EffectComputation {
    pub vector: EffectVector,
    pub results: BTreeMap<PropertyId, MetricResult>,
    pub failures: BTreeMap<PropertyId, MetricError>,
}

/// Per-property failures of a strict effect computation.
#[derive(Debug)]
pub struct EffectErrors(pub BTreeMap<PropertyId, MetricError>);

impl fmt::Display for EffectErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(p, e)| format!("{p}: {e}")).collect();
        write!(f, "effect computation failed for {}", parts.join("; "))
    }
}

impl std::error::Error for EffectErrors {}

fn checked(property: PropertyId, r: MetricResult) -> Result<MetricResult, MetricError> {
    if !r.effect.is_finite() {
        return Err(MetricError::OutOfRange(r.effect));
    }
    if let Some((lo, hi)) = property.effect_bounds() {
        if r.effect < lo || r.effect > hi {
            return Err(MetricError::OutOfRange(r.effect));
        }
    }
    Ok(r)
}

/// Measures every property in the configured subset. A failing property is
/// left missing in the vector and recorded in `failures`; properties outside
/// the subset are missing without a failure.
pub fn compute_effects(
    model_id: &str,
    layer_tag: Option<&str>,
    inputs: &BTreeMap<PropertyId, PropertyInput<'_>>,
    cfg: &ScoringConfig,
    exec: Execution,
) -> EffectComputation {
    let subset: Vec<PropertyId> = cfg.property_subset.iter().copied().collect();
    let outcomes = exec.map(&subset, |&p| {
        let r = match inputs.get(&p) {
            Some(input) => evaluate_property(p, *input, cfg).and_then(|r| checked(p, r)),
            None => Err(MetricError::MissingInput),
        };
        (p, r)
    });
    let mut effects = [None; N_PROPERTIES];
    let mut results = BTreeMap::new();
    let mut failures = BTreeMap::new();
    for (p, r) in outcomes {
        match r {
            Ok(r) => {
                effects[p.index()] = Some(r.effect);
                results.insert(p, r);
            }
            Err(e) => {
                failures.insert(p, e);
            }
        }
    }
    let vector = EffectVector::new(model_id, layer_tag.map(str::to_string), effects)
        .expect("effects were range-checked");
    EffectComputation {
        vector,
        results,
        failures,
    }
}

/// Like [`compute_effects`] but fails if any property in the subset fails.
pub fn compute_effect_vector(
    model_id: &str,
    layer_tag: Option<&str>,
    inputs: &BTreeMap<PropertyId, PropertyInput<'_>>,
    cfg: &ScoringConfig,
    exec: Execution,
) -> Result<EffectVector, EffectErrors> {
    let c = compute_effects(model_id, layer_tag, inputs, cfg, exec);
    if c.failures.is_empty() {
        Ok(c.vector)
    } else {
        Err(EffectErrors(c.failures))
    }
}
