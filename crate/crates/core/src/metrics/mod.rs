//! Effect strengths of the fifteen property tests.
//!
//! Every metric is a pure function of activation rows. Distances are taken
//! on all units of the raw responses; only the normalization and sparseness
//! tests restrict themselves to visually active units.

mod evaluate;
mod indices;
mod population;

use thiserror::Error;

use crate::domain::{DistanceMetric, PropertyId, ScoringConfig};
use crate::matrix::Matrix;
use crate::stats;
use crate::stimulus::StimulusError;
use crate::store::StoreError;

pub use evaluate::{
    compute_effect_vector, compute_effects, evaluate_property, evaluate_responses,
    EffectComputation, EffectErrors, PropertyInput,
};
pub use indices::{
    global_advantage, mirror_confusion, occlusion_index, relative_size_index,
    surface_invariance_index, thatcher_index, three_d_index, OcclusionVariant, ThreeDVariant,
};
pub use population::{
    correlated_sparseness, normalization_slope, scene_incongruence, scene_index, sparseness,
    weber_effect, weber_effect_from_distances, Display,
};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("no visually active units")]
    NoActiveUnits,
    #[error("vector lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),
    #[error("no unit has a nonzero summed single-object response")]
    NoUsableUnits,
    #[error("both accuracies are zero")]
    DegenerateAccuracy,
    #[error("label mismatch: {0}")]
    LabelMismatch(String),
    #[error("all {0} groups have zero total distance")]
    AllGroupsDegenerate(usize),
    #[error("{found} active units, need at least {need}")]
    TooFewUnits { found: usize, need: usize },
    #[error("{0} distinct lengths, need at least 3")]
    TooFewLengths(usize),
    #[error("no input for this property")]
    MissingInput,
    #[error("wrong container kind: {0}")]
    WrongKind(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("effect {0} outside the documented range")]
    OutOfRange(f64),
    #[error("stimulus set is for {found}, expected {expected}")]
    SetMismatch {
        expected: PropertyId,
        found: PropertyId,
    },
    #[error(transparent)]
    Stimulus(#[from] StimulusError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricResult {
    pub property: PropertyId,
    pub effect: f64,
    /// Groups (or displays, or stimulus pairs) the effect was averaged over.
    pub n_groups: usize,
    /// Units entering the computation.
    pub n_units_used: usize,
    /// Groups skipped because both of their distances were zero.
    pub n_skipped: usize,
    /// Per-group indices, per-unit slopes or per-pair distances, depending
    /// on the metric.
    pub diagnostics: Vec<f64>,
}

/// Which units count as visually active on a stimulus set.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitMask {
    pub active: Vec<bool>,
    pub threshold: f64,
}

impl UnitMask {
    pub fn count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.active
            .iter()
            .enumerate()
            .filter(|(_, a)| **a)
            .map(|(i, _)| i)
    }
}

/// A unit is active when its maximum response and its standard deviation
/// across the given rows both exceed the threshold.
pub fn detect_active_units(acts: &Matrix, threshold: f64) -> Result<UnitMask, MetricError> {
    if acts.rows() == 0 || acts.cols() == 0 {
        return Err(MetricError::Empty("activation matrix"));
    }
    let active: Vec<bool> = (0..acts.cols())
        .map(|j| {
            let max = acts.column(j).fold(f64::NEG_INFINITY, f64::max);
            max > threshold && stats::std_dev(acts.column(j)) > threshold
        })
        .collect();
    let mask = UnitMask { active, threshold };
    if mask.count() == 0 {
        return Err(MetricError::NoActiveUnits);
    }
    Ok(mask)
}

pub fn detect_active_units_cfg(
    acts: &Matrix,
    cfg: &ScoringConfig,
) -> Result<UnitMask, MetricError> {
    detect_active_units(acts, cfg.active_unit_threshold)
}

pub fn neural_distance(x: &[f64], y: &[f64], metric: DistanceMetric) -> Result<f64, MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(MetricError::Empty("response vector"));
    }
    Ok(match metric {
        DistanceMetric::Euclidean => x
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt(),
        DistanceMetric::Cityblock => x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum(),
        DistanceMetric::OneMinusPearson => {
            1.0 - stats::pearson(x, y).ok_or(MetricError::ZeroVariance("response vector"))?
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_zero_matrix_has_no_active_units() {
        assert!(matches!(
            detect_active_units(&Matrix::zeros(4, 3), 1e-6),
            Err(MetricError::NoActiveUnits)
        ));
    }

    #[test]
    fn constant_unit_is_inactive() {
        let m = Matrix::from_rows(&[[5.0, 0.0], [5.0, 1.0], [5.0, 2.0]]);
        let mask = detect_active_units(&m, 1e-6).unwrap();
        assert_eq!(mask.active, vec![false, true]);
    }

    #[test]
    fn tiny_responses_are_inactive() {
        let m = Matrix::from_rows(&[[1e-9, 1.0], [0.0, 0.0]]);
        let mask = detect_active_units(&m, 1e-6).unwrap();
        assert_eq!(mask.active, vec![false, true]);
    }

    #[test]
    fn distance_examples() {
        let x = [0.3, -1.0, 2.0];
        for m in [DistanceMetric::Euclidean, DistanceMetric::Cityblock] {
            assert_eq!(neural_distance(&x, &x, m).unwrap(), 0.0);
        }
        assert_eq!(
            neural_distance(&[1.0, 0.0], &[0.0, 1.0], DistanceMetric::Euclidean).unwrap(),
            2f64.sqrt()
        );
        assert_eq!(
            neural_distance(&[1.0, 0.0], &[0.0, 1.0], DistanceMetric::Cityblock).unwrap(),
            2.0
        );
        let d = neural_distance(
            &[1.0, 2.0, 3.0],
            &[2.0, 4.0, 6.0],
            DistanceMetric::OneMinusPearson,
        )
        .unwrap();
        assert!(d.abs() < 1e-15);
        assert!(matches!(
            neural_distance(&[1.0], &[1.0, 2.0], DistanceMetric::Euclidean),
            Err(MetricError::LengthMismatch(1, 2))
        ));
        assert!(matches!(
            neural_distance(&[1.0, 1.0], &[1.0, 2.0], DistanceMetric::OneMinusPearson),
            Err(MetricError::ZeroVariance(_))
        ));
    }
}
