//! Composite brain-alignment scores: the brain property match (BPM), the
//! agreement count, L1 similarity, binarized presence and rankings.
//!
//! For a brain value `b > 0` and a model effect `m`, the per-property
//! distance is `|b - m|` when `m > 0` and `b - lambda * m` otherwise, so a
//! model showing the opposite effect pays `lambda` times its size. With
//! `lambda = 1` the two branches coincide with `|b - m|`.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::domain::{
    join_ids, BrainReference, EffectVector, NegativeBranch, PropertyId, ScoringConfig, N_PROPERTIES,
};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("brain reference for {property} is {value}, must be > 0")]
    NonpositiveBrainReference { property: PropertyId, value: f64 },
    #[error("brain value {0} must be > 0")]
    NonpositiveReference(f64),
    #[error("brain reference missing for: {}", join_ids(.0))]
    MissingBrainReference(Vec<PropertyId>),
    #[error("lambda must be a finite value >= 0, got {0}")]
    InvalidLambda(f64),
    #[error("no property is both measured and selected for {0}")]
    NothingToScore(String),
}

/// Distance of model effect `m` from brain value `b`.
pub fn property_distance(
    b: f64,
    m: f64,
    lambda: f64,
    branch: NegativeBranch,
) -> Result<f64, ScoreError> {
    if b.is_nan() || b <= 0.0 {
        return Err(ScoreError::NonpositiveReference(b));
    }
    Ok(if m > 0.0 {
        (b - m).abs()
    } else {
        match branch {
            NegativeBranch::Penalized => b - lambda * m,
            NegativeBranch::AsPrinted => b + lambda * m,
        }
    })
}

/// Scores of one effect vector against a brain reference.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoreCard {
    pub model_id: String,
    pub layer_tag: Option<String>,
    pub bpm: f64,
    pub agreement: usize,
    pub l1_similarity: f64,
    /// Properties entering the sums.
    pub n_properties: usize,
    pub distances: [Option<f64>; N_PROPERTIES],
    pub present: [Option<bool>; N_PROPERTIES],
}

/// Properties selected by `cfg` and measured in `effects`, in canonical
/// order.
fn included(effects: &EffectVector, cfg: &ScoringConfig) -> Vec<(PropertyId, f64)> {
    effects
        .present()
        .filter(|(p, _)| cfg.includes(*p))
        .collect()
}

fn reference_values(
    items: &[(PropertyId, f64)],
    reference: &BrainReference,
) -> Result<Vec<f64>, ScoreError> {
    let missing: Vec<PropertyId> = items
        .iter()
        .filter(|(p, _)| reference.get(*p).is_none())
        .map(|(p, _)| *p)
        .collect();
    if !missing.is_empty() {
        return Err(ScoreError::MissingBrainReference(missing));
    }
    Ok(items
        .iter()
        .map(|(p, _)| reference.get(*p).unwrap_or(f64::NAN))
        .collect())
}

/// Sum of per-property distances over the included properties, with the
/// distances themselves.
fn distances(
    effects: &EffectVector,
    reference: &BrainReference,
    cfg: &ScoringConfig,
) -> Result<(f64, [Option<f64>; N_PROPERTIES], usize), ScoreError> {
    if !(cfg.lambda.is_finite() && cfg.lambda >= 0.0) {
        return Err(ScoreError::InvalidLambda(cfg.lambda));
    }
    let items = included(effects, cfg);
    if items.is_empty() {
        return Err(ScoreError::NothingToScore(effects.model_id().to_string()));
    }
    let bs = reference_values(&items, reference)?;
    let mut out = [None; N_PROPERTIES];
    let mut total = 0.0;
    for ((p, m), b) in items.iter().zip(bs) {
        let d = property_distance(b, *m, cfg.lambda, cfg.negative_branch).map_err(|_| {
            ScoreError::NonpositiveBrainReference {
                property: *p,
                value: b,
            }
        })?;
        out[p.index()] = Some(d);
        total += d;
    }
    Ok((total, out, items.len()))
}

/// `1 / (1 + sum of D_i)` over the included properties.
pub fn bpm(
    effects: &EffectVector,
    reference: &BrainReference,
    cfg: &ScoringConfig,
) -> Result<f64, ScoreError> {
    Ok(1.0 / (1.0 + distances(effects, reference, cfg)?.0))
}

/// Number of measured effects that are positive, i.e. brain-like.
pub fn agreement(effects: &EffectVector) -> usize {
    effects.present().filter(|(_, v)| *v > 0.0).count()
}

/// `1 / (1 + sum |b_i - m_i|)` over the included properties.
pub fn l1_similarity(
    effects: &EffectVector,
    reference: &BrainReference,
    cfg: &ScoringConfig,
) -> Result<f64, ScoreError> {
    let items = included(effects, cfg);
    if items.is_empty() {
        return Err(ScoreError::NothingToScore(effects.model_id().to_string()));
    }
    let bs = reference_values(&items, reference)?;
    let total: f64 = items.iter().zip(bs).map(|((_, m), b)| (b - m).abs()).sum();
    Ok(1.0 / (1.0 + total))
}

/// Presence of each measured effect (`effect > 0`).
pub fn binarize(effects: &EffectVector) -> [Option<bool>; N_PROPERTIES] {
    effects.effects().map(|e| e.map(|v| v > 0.0))
}

pub fn score(
    effects: &EffectVector,
    reference: &BrainReference,
    cfg: &ScoringConfig,
) -> Result<ScoreCard, ScoreError> {
    let (total, distances, n) = distances(effects, reference, cfg)?;
    let mut present = [None; N_PROPERTIES];
    for (p, v) in included(effects, cfg) {
        present[p.index()] = Some(v > 0.0);
    }
    Ok(ScoreCard {
        model_id: effects.model_id().to_string(),
        layer_tag: effects.layer_tag().map(str::to_string),
        bpm: 1.0 / (1.0 + total),
        agreement: present.iter().filter(|p| **p == Some(true)).count(),
        l1_similarity: l1_similarity(effects, reference, cfg)?,
        n_properties: n,
        distances,
        present,
    })
}

fn rank_order(a: &ScoreCard, b: &ScoreCard) -> Ordering {
    b.bpm
        .total_cmp(&a.bpm)
        .then(b.agreement.cmp(&a.agreement))
        .then_with(|| a.model_id.cmp(&b.model_id))
        .then_with(|| a.layer_tag.cmp(&b.layer_tag))
}

/// Sorts by BPM descending, then agreement descending, then model id.
pub fn rank_models(mut cards: Vec<ScoreCard>) -> Vec<ScoreCard> {
    cards.sort_by(rank_order);
    cards
}

fn display_name(c: &ScoreCard) -> String {
    match &c.layer_tag {
        Some(t) => format!("{}@{t}", c.model_id),
        None => c.model_id.clone(),
    }
}

/// Comma-separated ranking; expects cards in rank order.
pub fn ranking_csv(ranked: &[ScoreCard]) -> String {
    let mut s = String::from("rank,model,bpm,agreement,n_properties,l1_similarity\n");
    for (i, c) in ranked.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            i + 1,
            display_name(c),
            c.bpm,
            c.agreement,
            c.n_properties,
            c.l1_similarity
        );
    }
    s
}

/// Aligned plain-text ranking; expects cards in rank order.
pub fn ranking_table(ranked: &[ScoreCard]) -> String {
    let names: Vec<String> = ranked.iter().map(display_name).collect();
    let w = names.iter().map(String::len).max().unwrap_or(0).max(5);
    let mut s = format!(
        "{:>4}  {:<w$}  {:>6}  {:>9}  {:>13}\n",
        "Rank", "Model", "BPM", "Agreement", "L1 Similarity"
    );
    for (i, (c, name)) in ranked.iter().zip(&names).enumerate() {
        let _ = writeln!(
            s,
            "{:>4}  {:<w$}  {:>6.4}  {:>9}  {:>13.4}",
            i + 1,
            name,
            c.bpm,
            format!("{}/{}", c.agreement, c.n_properties),
            c.l1_similarity
        );
    }
    s
}

/// Presence grid as comma-separated text: `1`, `0`, or `NA` per property.
pub fn presence_csv(cards: &[ScoreCard]) -> String {
    let mut s = String::from("model");
    for p in PropertyId::ALL {
        s.push(',');
        s.push_str(p.as_str());
    }
    s.push('\n');
    for c in cards {
        s.push_str(&display_name(c));
        for v in c.present {
            s.push_str(match v {
                Some(true) => ",1",
                Some(false) => ",0",
                None => ",NA",
            });
        }
        s.push('\n');
    }
    s
}

/// Presence grid as an aligned table with one row per property and one
/// column per model: `+` present, `-` absent, `.` not measured.
pub fn presence_table(cards: &[ScoreCard]) -> String {
    let names: Vec<String> = cards.iter().map(display_name).collect();
    let pw = PropertyId::ALL
        .iter()
        .map(|p| p.as_str().len())
        .max()
        .unwrap_or(0);
    let mut s = format!("{:<pw$}", "property");
    for n in &names {
        let _ = write!(s, "  {n}");
    }
    s.push('\n');
    for p in PropertyId::ALL {
        let _ = write!(s, "{:<pw$}", p.as_str());
        for (c, n) in cards.iter().zip(&names) {
            let mark = match c.present[p.index()] {
                Some(true) => "+",
                Some(false) => "-",
                None => ".",
            };
            let _ = write!(s, "  {mark:^w$}", w = n.len());
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use PropertyId as P;

    fn two_property_case() -> (EffectVector, BrainReference, ScoringConfig) {
        let reference =
            BrainReference::new([(P::MirrorConfusion, 0.5), (P::Thatcher, 0.2)], "test").unwrap();
        let m =
            EffectVector::from_pairs("m", None, [(P::MirrorConfusion, 0.3), (P::Thatcher, -0.1)])
                .unwrap();
        (m, reference, ScoringConfig::default())
    }

    #[test]
    fn distance_examples() {
        let pen = NegativeBranch::Penalized;
        assert_eq!(property_distance(0.5, 0.5, 2.0, pen).unwrap(), 0.0);
        assert!((property_distance(0.2, -0.1, 2.0, pen).unwrap() - 0.4).abs() < 1e-15);
        assert!((property_distance(0.2, -0.1, 1.0, pen).unwrap() - 0.3).abs() < 1e-15);
        let printed = property_distance(0.2, -0.1, 2.0, NegativeBranch::AsPrinted).unwrap();
        assert!(printed.abs() < 1e-15);
        assert!(matches!(
            property_distance(0.0, 0.1, 2.0, pen),
            Err(ScoreError::NonpositiveReference(_))
        ));
    }

    #[test]
    fn bpm_hand_example() {
        let (m, reference, cfg) = two_property_case();
        assert_eq!(bpm(&m, &reference, &cfg).unwrap(), 0.625);
        assert_eq!(agreement(&m), 1);
        let l1 = l1_similarity(&m, &reference, &cfg).unwrap();
        assert!((l1 - 1.0 / 1.5).abs() < 1e-15);
        let card = score(&m, &reference, &cfg).unwrap();
        assert_eq!(card.n_properties, 2);
        assert_eq!(card.present[P::Thatcher.index()], Some(false));
        assert_eq!(card.present[P::NormPairs.index()], None);
    }

    #[test]
    fn identical_vector_scores_one() {
        let (_, reference, cfg) = two_property_case();
        let clone = reference.as_effect_vector("brain");
        assert_eq!(bpm(&clone, &reference, &cfg).unwrap(), 1.0);
        assert_eq!(l1_similarity(&clone, &reference, &cfg).unwrap(), 1.0);
    }

    #[test]
    fn missing_reference_is_refused() {
        let reference = BrainReference::new([(P::MirrorConfusion, 0.5)], "test").unwrap();
        let m =
            EffectVector::from_pairs("m", None, [(P::MirrorConfusion, 0.3), (P::Thatcher, 0.1)])
                .unwrap();
        assert!(matches!(
            bpm(&m, &reference, &ScoringConfig::default()),
            Err(ScoreError::MissingBrainReference(v)) if v == vec![P::Thatcher]
        ));
    }

    #[test]
    fn ranking_ties_and_tables() {
        let (m, reference, cfg) = two_property_case();
        let clone = reference.as_effect_vector("brain_clone");
        let mut twin = score(&m, &reference, &cfg).unwrap();
        twin.model_id = "a_twin".into();
        let cards = vec![
            score(&m, &reference, &cfg).unwrap(),
            twin,
            score(&clone, &reference, &cfg).unwrap(),
        ];
        let ranked = rank_models(cards);
        let order: Vec<&str> = ranked.iter().map(|c| c.model_id.as_str()).collect();
        assert_eq!(order, ["brain_clone", "a_twin", "m"]);
        let csv = ranking_csv(&ranked);
        assert_eq!(csv.lines().count(), 4);
        assert!(csv
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("1,brain_clone,1,2,2,1"));
        let table = ranking_table(&ranked);
        assert!(table.lines().next().unwrap().contains("L1 Similarity"));
        assert!(table.contains("0.6250"));
        let presence = presence_csv(&ranked);
        assert_eq!(presence.lines().nth(1).unwrap().split(',').count(), 16);
        assert_eq!(presence_table(&ranked).lines().count(), 16);
    }

    #[test]
    fn binarize_examples() {
        let (m, _, _) = two_property_case();
        let b = binarize(&m);
        assert_eq!(b[P::MirrorConfusion.index()], Some(true));
        assert_eq!(b[P::Thatcher.index()], Some(false));
        assert_eq!(b[P::NormPairs.index()], None);
    }
}
