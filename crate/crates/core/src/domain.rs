//! Shared vocabulary: property identifiers, effect vectors, brain reference
//! values and scoring configuration.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The fifteen brain-like properties, in canonical order.
///
/// The discriminant is the column index used by every vector and table in
/// the crate, so the order must never change.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyId {
    NormPairs = 0,
    NormTriplets,
    SceneIncongruence,
    MirrorConfusion,
    SparsenessMorph,
    SparsenessShapeTexture,
    WebersLaw,
    OcclusionBasic,
    OcclusionDepth,
    RelativeSize,
    SurfaceInvariance,
    #[serde(rename = "three_d_1")]
    ThreeD1,
    #[serde(rename = "three_d_2")]
    ThreeD2,
    GlobalAdvantage,
    Thatcher,
}

pub const N_PROPERTIES: usize = 15;

impl PropertyId {
    pub const ALL: [PropertyId; N_PROPERTIES] = [
        PropertyId::NormPairs,
        PropertyId::NormTriplets,
        PropertyId::SceneIncongruence,
        PropertyId::MirrorConfusion,
        PropertyId::SparsenessMorph,
        PropertyId::SparsenessShapeTexture,
        PropertyId::WebersLaw,
        PropertyId::OcclusionBasic,
        PropertyId::OcclusionDepth,
        PropertyId::RelativeSize,
        PropertyId::SurfaceInvariance,
        PropertyId::ThreeD1,
        PropertyId::ThreeD2,
        PropertyId::GlobalAdvantage,
        PropertyId::Thatcher,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PropertyId::NormPairs => "norm_pairs",
            PropertyId::NormTriplets => "norm_triplets",
            PropertyId::SceneIncongruence => "scene_incongruence",
            PropertyId::MirrorConfusion => "mirror_confusion",
            PropertyId::SparsenessMorph => "sparseness_morph",
            PropertyId::SparsenessShapeTexture => "sparseness_shape_texture",
            PropertyId::WebersLaw => "webers_law",
            PropertyId::OcclusionBasic => "occlusion_basic",
            PropertyId::OcclusionDepth => "occlusion_depth",
            PropertyId::RelativeSize => "relative_size",
            PropertyId::SurfaceInvariance => "surface_invariance",
            PropertyId::ThreeD1 => "three_d_1",
            PropertyId::ThreeD2 => "three_d_2",
            PropertyId::GlobalAdvantage => "global_advantage",
            PropertyId::Thatcher => "thatcher",
        }
    }

    /// Range an effect of this property may take.
    ///
    /// Normalization slopes are unbounded regression slopes, the Weber effect
    /// is a difference of two correlations, everything else is a modulation
    /// index, an accuracy index or a correlation.
    pub fn effect_bounds(self) -> Option<(f64, f64)> {
        match self {
            PropertyId::NormPairs | PropertyId::NormTriplets => None,
            PropertyId::WebersLaw => Some((-2.0, 2.0)),
            _ => Some((-1.0, 1.0)),
        }
    }

    /// Whether the property is read from class probabilities rather than
    /// feature activations.
    pub fn uses_probabilities(self) -> bool {
        matches!(self, PropertyId::SceneIncongruence)
    }
}

impl fmt::Display for PropertyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown property id `{0}`")]
pub struct UnknownProperty(pub String);

impl FromStr for PropertyId {
    type Err = UnknownProperty;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PropertyId::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| UnknownProperty(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("brain reference missing for: {}", join_ids(.0))]
    MissingBrainReference(Vec<PropertyId>),
    #[error("lambda must be a finite value >= 0, got {0}")]
    InvalidLambda(f64),
    #[error("property subset is empty")]
    EmptySubset,
    #[error("effect for {property} is {value}, outside [{lo}, {hi}]")]
    EffectOutOfRange {
        property: PropertyId,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("effect for {0} is not finite")]
    NonFiniteEffect(PropertyId),
    #[error("brain reference for {property} is {value}, must lie in (0, 1]")]
    BrainReferenceOutOfRange { property: PropertyId, value: f64 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn join_ids(ids: &[PropertyId]) -> String {
    ids.iter()
        .map(|p| p.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Per-model effect strengths indexed by [`PropertyId`]. `None` marks a
/// property that was not measured.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectVector {
    model_id: String,
    layer_tag: Option<String>,
    effects: [Option<f64>; N_PROPERTIES],
}

impl EffectVector {
    pub fn new(
        model_id: impl Into<String>,
        layer_tag: Option<String>,
        effects: [Option<f64>; N_PROPERTIES],
    ) -> Result<Self, DomainError> {
        for p in PropertyId::ALL {
            if let Some(v) = effects[p.index()] {
                check_effect(p, v)?;
            }
        }
        Ok(Self {
            model_id: model_id.into(),
            layer_tag,
            effects,
        })
    }

    pub fn from_pairs(
        model_id: impl Into<String>,
        layer_tag: Option<String>,
        pairs: impl IntoIterator<Item = (PropertyId, f64)>,
    ) -> Result<Self, DomainError> {
        let mut effects = [None; N_PROPERTIES];
        for (p, v) in pairs {
            effects[p.index()] = Some(v);
        }
        Self::new(model_id, layer_tag, effects)
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn layer_tag(&self) -> Option<&str> {
        self.layer_tag.as_deref()
    }

    pub fn get(&self, p: PropertyId) -> Option<f64> {
        self.effects[p.index()]
    }

    pub fn effects(&self) -> &[Option<f64>; N_PROPERTIES] {
        &self.effects
    }

    /// Present entries in canonical order.
    pub fn present(&self) -> impl Iterator<Item = (PropertyId, f64)> + '_ {
        PropertyId::ALL
            .iter()
            .filter_map(move |&p| self.effects[p.index()].map(|v| (p, v)))
    }

    /// Copy with every effect multiplied by `c`, bypassing range checks.
    /// Only used for invariance checks on presence tables.
    pub fn scaled(&self, c: f64) -> EffectVector {
        let mut effects = self.effects;
        for e in effects.iter_mut().flatten() {
            *e *= c;
        }
        EffectVector {
            model_id: self.model_id.clone(),
            layer_tag: self.layer_tag.clone(),
            effects,
        }
    }
}

fn check_effect(p: PropertyId, v: f64) -> Result<(), DomainError> {
    if !v.is_finite() {
        return Err(DomainError::NonFiniteEffect(p));
    }
    if let Some((lo, hi)) = p.effect_bounds() {
        if v < lo || v > hi {
            return Err(DomainError::EffectOutOfRange {
                property: p,
                value: v,
                lo,
                hi,
            });
        }
    }
    Ok(())
}

/// Header row for effect-vector CSV tables.
pub fn effects_csv_header() -> String {
    let mut cols = vec!["model_id".to_string(), "layer_tag".to_string()];
    cols.extend(PropertyId::ALL.iter().map(|p| p.as_str().to_string()));
    cols.join(",")
}

const MISSING: &str = "NA";

pub fn write_effects_csv(vectors: &[EffectVector]) -> String {
    let mut out = effects_csv_header();
    out.push('\n');
    for v in vectors {
        out.push_str(&v.model_id);
        out.push(',');
        out.push_str(v.layer_tag.as_deref().unwrap_or(""));
        for e in &v.effects {
            out.push(',');
            match e {
                // `Display` for f64 emits the shortest string that parses back
                // to the same bits.
                Some(x) => out.push_str(&x.to_string()),
                None => out.push_str(MISSING),
            }
        }
        out.push('\n');
    }
    out
}

pub fn parse_effects_csv(text: &str) -> Result<Vec<EffectVector>, DomainError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(DomainError::Parse {
        line: 1,
        msg: "empty effects table".into(),
    })?;
    let cols: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
    if cols.len() < 2 || cols[0] != "model_id" || cols[1] != "layer_tag" {
        return Err(DomainError::Parse {
            line: 1,
            msg: "header must start with model_id,layer_tag".into(),
        });
    }
    let props = cols[2..]
        .iter()
        .map(|c| {
            c.parse::<PropertyId>().map_err(|e| DomainError::Parse {
                line: 1,
                msg: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = Vec::new();
    for (i, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(DomainError::Parse {
                line: i + 1,
                msg: format!("expected {} fields, found {}", cols.len(), fields.len()),
            });
        }
        let mut effects = [None; N_PROPERTIES];
        for (p, f) in props.iter().zip(&fields[2..]) {
            if *f != MISSING && !f.is_empty() {
                let v: f64 = f.parse().map_err(|_| DomainError::Parse {
                    line: i + 1,
                    msg: format!("bad number `{f}` for {p}"),
                })?;
                effects[p.index()] = Some(v);
            }
        }
        let tag = (!fields[1].is_empty()).then(|| fields[1].to_string());
        out.push(EffectVector::new(fields[0], tag, effects)?);
    }
    Ok(out)
}

/// Empirically observed effect strengths. Entries left as `null` in the
/// reference file are kept as `None` so scoring can refuse to run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrainReference {
    values: [Option<f64>; N_PROPERTIES],
    pub provenance: String,
}

impl BrainReference {
    pub fn new(
        pairs: impl IntoIterator<Item = (PropertyId, f64)>,
        provenance: impl Into<String>,
    ) -> Result<Self, DomainError> {
        let mut values = [None; N_PROPERTIES];
        for (p, b) in pairs {
            check_reference(p, b)?;
            values[p.index()] = Some(b);
        }
        Ok(Self {
            values,
            provenance: provenance.into(),
        })
    }

    pub fn get(&self, p: PropertyId) -> Option<f64> {
        self.values[p.index()]
    }

    /// Reference as an effect vector, for embedding the brain alongside models.
    pub fn as_effect_vector(&self, label: &str) -> EffectVector {
        EffectVector {
            model_id: label.to_string(),
            layer_tag: None,
            effects: self.values,
        }
    }

    pub fn parse(text: &str) -> Result<Self, DomainError> {
        let mut values = [None; N_PROPERTIES];
        let mut provenance = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let (content, comment) = match raw.find('#') {
                Some(pos) => (&raw[..pos], Some(raw[pos + 1..].trim())),
                None => (raw, None),
            };
            if let Some(c) = comment {
                if let Some(rest) = c.strip_prefix("provenance:") {
                    provenance = rest.trim().to_string();
                }
            }
            let content = content.trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(DomainError::Parse {
                line: line_no,
                msg: "expected `property_id = value`".into(),
            })?;
            let p: PropertyId =
                key.trim()
                    .parse()
                    .map_err(|e: UnknownProperty| DomainError::Parse {
                        line: line_no,
                        msg: e.to_string(),
                    })?;
            let value = value.trim();
            if value == "null" || value.is_empty() {
                values[p.index()] = None;
                continue;
            }
            let b: f64 = value.parse().map_err(|_| DomainError::Parse {
                line: line_no,
                msg: format!("bad number `{value}`"),
            })?;
            check_reference(p, b)?;
            values[p.index()] = Some(b);
        }
        Ok(Self { values, provenance })
    }

    pub fn load(path: &Path) -> Result<Self, DomainError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Reference file with every value left as `null`.
    pub fn template() -> String {
        let mut out = String::from(
            "# Brain reference effect strengths, one `property_id = value` per line.\n\
             # Values must lie in (0, 1]. Scoring refuses to run while any scored\n\
             # property is still null.\n\
             # provenance: \n",
        );
        for p in PropertyId::ALL {
            out.push_str(&format!("{} = null\n", p.as_str()));
        }
        out
    }
}

fn check_reference(p: PropertyId, b: f64) -> Result<(), DomainError> {
    if !(b.is_finite() && b > 0.0 && b <= 1.0) {
        return Err(DomainError::BrainReferenceOutOfRange {
            property: p,
            value: b,
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    Cityblock,
    OneMinusPearson,
}

impl FromStr for DistanceMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euclidean" => Ok(Self::Euclidean),
            "cityblock" => Ok(Self::Cityblock),
            "one_minus_pearson" => Ok(Self::OneMinusPearson),
            other => Err(format!("unknown distance metric `{other}`")),
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Euclidean => "euclidean",
            Self::Cityblock => "cityblock",
            Self::OneMinusPearson => "one_minus_pearson",
        })
    }
}

/// How the distance of a non-positive model effect from the brain value is
/// computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeBranch {
    /// `b - lambda * m`: anti-brain effects cost `lambda` times their size.
    #[default]
    Penalized,
    /// `b + lambda * m`, the literal sign convention. Kept for
    /// comparison only; it rewards negative effects.
    AsPrinted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    pub lambda: f64,
    pub distance_metric: DistanceMetric,
    pub active_unit_threshold: f64,
    pub property_subset: BTreeSet<PropertyId>,
    pub negative_branch: NegativeBranch,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            distance_metric: DistanceMetric::Euclidean,
            active_unit_threshold: 1e-6,
            property_subset: PropertyId::ALL.into_iter().collect(),
            negative_branch: NegativeBranch::Penalized,
        }
    }
}

impl ScoringConfig {
    /// Default configuration over the fourteen properties that apply to
    /// models without an object-classification head.
    pub fn without_scene() -> Self {
        let mut cfg = Self::default();
        cfg.property_subset.remove(&PropertyId::SceneIncongruence);
        cfg
    }

    pub fn includes(&self, p: PropertyId) -> bool {
        self.property_subset.contains(&p)
    }
}

/// A configuration checked against the brain reference it will be scored
/// with.
#[derive(Clone, Debug)]
pub struct CheckedConfig {
    pub scoring: ScoringConfig,
    pub reference: BrainReference,
}

pub fn validate_config(
    cfg: &ScoringConfig,
    reference: &BrainReference,
) -> Result<CheckedConfig, DomainError> {
    if !(cfg.lambda.is_finite() && cfg.lambda >= 0.0) {
        return Err(DomainError::InvalidLambda(cfg.lambda));
    }
    if cfg.property_subset.is_empty() {
        return Err(DomainError::EmptySubset);
    }
    let missing: Vec<PropertyId> = cfg
        .property_subset
        .iter()
        .copied()
        .filter(|p| reference.get(*p).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(DomainError::MissingBrainReference(missing));
    }
    Ok(CheckedConfig {
        scoring: cfg.clone(),
        reference: reference.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serde_names_match_ids() {
        for p in PropertyId::ALL {
            let json = serde_json::to_string(&p).unwrap();
            assert_eq!(json, format!("\"{}\"", p.as_str()));
            assert_eq!(serde_json::from_str::<PropertyId>(&json).unwrap(), p);
        }
    }
    use proptest::prelude::*;

    fn full_reference() -> BrainReference {
        BrainReference::new(PropertyId::ALL.map(|p| (p, 0.3)), "test").unwrap()
    }

    #[test]
    fn fifteen_distinct_ids_round_trip_through_strings() {
        let names: BTreeSet<&str> = PropertyId::ALL.iter().map(|p| p.as_str()).collect();
        assert_eq!(names.len(), 15);
        for (i, p) in PropertyId::ALL.iter().enumerate() {
            assert_eq!(p.index(), i);
            assert_eq!(p.as_str().parse::<PropertyId>().unwrap(), *p);
        }
        assert!("webers".parse::<PropertyId>().is_err());
    }

    #[test]
    fn full_subset_with_full_reference_validates() {
        assert!(validate_config(&ScoringConfig::default(), &full_reference()).is_ok());
    }

    #[test]
    fn subset_without_reference_entry_is_rejected() {
        let reference = BrainReference::new([(PropertyId::Thatcher, 0.2)], "").unwrap();
        let cfg = ScoringConfig {
            property_subset: [PropertyId::MirrorConfusion].into_iter().collect(),
            ..Default::default()
        };
        match validate_config(&cfg, &reference) {
            Err(DomainError::MissingBrainReference(ids)) => {
                assert_eq!(ids, vec![PropertyId::MirrorConfusion])
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_lambda_is_rejected() {
        let cfg = ScoringConfig {
            lambda: -1.0,
            ..Default::default()
        };
        assert!(matches!(
            validate_config(&cfg, &full_reference()),
            Err(DomainError::InvalidLambda(_))
        ));
    }

    #[test]
    fn out_of_range_index_effect_is_rejected() {
        let err = EffectVector::from_pairs("m", None, [(PropertyId::MirrorConfusion, 1.2)]);
        assert!(matches!(err, Err(DomainError::EffectOutOfRange { .. })));
        // slopes are unbounded
        assert!(EffectVector::from_pairs("m", None, [(PropertyId::NormPairs, 1.7)]).is_ok());
        assert!(EffectVector::from_pairs("m", None, [(PropertyId::WebersLaw, -1.5)]).is_ok());
    }

    #[test]
    fn template_refuses_until_filled() {
        let reference = BrainReference::parse(&BrainReference::template()).unwrap();
        let err = validate_config(&ScoringConfig::default(), &reference).unwrap_err();
        match err {
            DomainError::MissingBrainReference(ids) => assert_eq!(ids.len(), 15),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn reference_file_parses_comments_and_values() {
        let text = "# provenance: transcribed by hand\nmirror_confusion = 0.25 # trailing\n\nthatcher=0.4\n";
        let r = BrainReference::parse(text).unwrap();
        assert_eq!(r.get(PropertyId::MirrorConfusion), Some(0.25));
        assert_eq!(r.get(PropertyId::Thatcher), Some(0.4));
        assert_eq!(r.get(PropertyId::NormPairs), None);
        assert_eq!(r.provenance, "transcribed by hand");
        assert!(BrainReference::parse("thatcher = 0").is_err());
        assert!(BrainReference::parse("thatcher 0.3").is_err());
    }

    fn effect_strategy() -> impl Strategy<Value = [Option<f64>; N_PROPERTIES]> {
        proptest::collection::vec(proptest::option::of(-1.0f64..=1.0), N_PROPERTIES)
            .prop_map(|v| v.try_into().unwrap())
    }

    proptest! {
        #[test]
        fn effects_csv_round_trips_bit_exactly(
            effects in effect_strategy(),
            tag in proptest::option::of("[a-z0-9]{1,6}"),
        ) {
            let v = EffectVector::new("model-x", tag, effects).unwrap();
            let text = write_effects_csv(std::slice::from_ref(&v));
            let back = parse_effects_csv(&text).unwrap();
            prop_assert_eq!(back.len(), 1);
            for (a, b) in v.effects().iter().zip(back[0].effects()) {
                prop_assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
            }
            prop_assert_eq!(&back[0], &v);
        }
    }
}
