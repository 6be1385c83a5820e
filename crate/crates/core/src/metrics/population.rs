//! Population metrics: normalization slopes, sparseness correlations, the
//! Weber effect and scene incongruence.

use super::{neural_distance, MetricError, MetricResult, UnitMask};
use crate::domain::{DistanceMetric, PropertyId};
use crate::matrix::Matrix;
use crate::stats::{self, modulation_index};

/// A multi-object display and the single-object displays it is built from,
/// as row indices into one activation matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Display {
    pub multi: usize,
    pub singles: Vec<usize>,
}

/// Mean over active units of the zero-intercept slope of the multi-object
/// response on the summed single-object responses.
pub fn normalization_slope(
    acts: &Matrix,
    displays: &[Display],
    arity: usize,
    mask: &UnitMask,
) -> Result<MetricResult, MetricError> {
    let property = match arity {
        2 => PropertyId::NormPairs,
        3 => PropertyId::NormTriplets,
        _ => return Err(MetricError::Empty("normalization arity must be 2 or 3")),
    };
    if displays.is_empty() {
        return Err(MetricError::Empty("multi-object displays"));
    }
    if mask.active.len() != acts.cols() {
        return Err(MetricError::LengthMismatch(mask.active.len(), acts.cols()));
    }
    if let Some(d) = displays.iter().find(|d| d.singles.len() != arity) {
        return Err(MetricError::LengthMismatch(d.singles.len(), arity));
    }
    let mut slopes = Vec::new();
    for u in mask.indices() {
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for d in displays {
            let x: f64 = d.singles.iter().map(|&s| acts.get(s, u)).sum();
            let y = acts.get(d.multi, u);
            sxy += x * y;
            sxx += x * x;
        }
        if sxx > 0.0 {
            slopes.push(sxy / sxx);
        }
    }
    if slopes.is_empty() {
        return Err(MetricError::NoUsableUnits);
    }
    Ok(MetricResult {
        property,
        effect: stats::mean(&slopes),
        n_groups: displays.len(),
        n_units_used: slopes.len(),
        n_skipped: mask.count() - slopes.len(),
        diagnostics: slopes,
    })
}

/// Selectivity of one unit over a stimulus set, after clamping negative
/// responses to zero. 1 for a one-hot response, 0 for a uniform or all-zero
/// response and for fewer than two stimuli.
pub fn sparseness(responses: &[f64]) -> f64 {
    let n = responses.len();
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let (mut s1, mut s2) = (0.0, 0.0);
    for &r in responses {
        let r = r.max(0.0);
        s1 += r;
        s2 += r * r;
    }
    if s2 == 0.0 {
        return 0.0;
    }
    let a = (s1 / nf).powi(2) / (s2 / nf);
    ((1.0 - a) / (1.0 - 1.0 / nf)).clamp(0.0, 1.0)
}

fn unit_sparseness(acts: &Matrix, units: &[usize]) -> Vec<f64> {
    units
        .iter()
        .map(|&u| sparseness(&acts.column(u).collect::<Vec<_>>()))
        .collect()
}

/// Pearson correlation across active units between each unit's sparseness
/// on `set_a` and on `set_b`. Both matrices share the unit axis.
pub fn correlated_sparseness(
    property: PropertyId,
    set_a: &Matrix,
    set_b: &Matrix,
    mask: &UnitMask,
) -> Result<MetricResult, MetricError> {
    if set_a.cols() != set_b.cols() {
        return Err(MetricError::LengthMismatch(set_a.cols(), set_b.cols()));
    }
    if mask.active.len() != set_a.cols() {
        return Err(MetricError::LengthMismatch(mask.active.len(), set_a.cols()));
    }
    let units: Vec<usize> = mask.indices().collect();
    if units.len() < 3 {
        return Err(MetricError::TooFewUnits {
            found: units.len(),
            need: 3,
        });
    }
    let sa = unit_sparseness(set_a, &units);
    let sb = unit_sparseness(set_b, &units);
    for (s, name) in [
        (&sa, "sparseness on the first set"),
        (&sb, "sparseness on the second set"),
    ] {
        if s.iter().all(|v| *v == s[0]) {
            return Err(MetricError::ZeroVariance(name));
        }
    }
    let effect = stats::pearson(&sa, &sb).ok_or(MetricError::ZeroVariance("sparseness"))?;
    let mut diagnostics = sa;
    diagnostics.extend(sb);
    Ok(MetricResult {
        property,
        effect,
        n_groups: set_a.rows() + set_b.rows(),
        n_units_used: units.len(),
        n_skipped: 0,
        diagnostics,
    })
}

/// `pearson(d, g) - pearson(d, a)` over all unordered stimulus pairs, where
/// `d` is the neural distance, `a = |l_i - l_j|` and
/// `g = |l_i - l_j| / (l_i + l_j)`.
pub fn weber_effect(
    acts: &Matrix,
    lengths: &[f64],
    metric: DistanceMetric,
) -> Result<MetricResult, MetricError> {
    if acts.rows() != lengths.len() {
        return Err(MetricError::LengthMismatch(acts.rows(), lengths.len()));
    }
    let n = lengths.len();
    let mut d = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(neural_distance(acts.row(i), acts.row(j), metric)?);
        }
    }
    weber_effect_from_distances(&d, lengths)
}

/// The Weber effect from precomputed pair distances, ordered as
/// `(0,1), (0,2), .., (1,2), ..`.
pub fn weber_effect_from_distances(
    d: &[f64],
    lengths: &[f64],
) -> Result<MetricResult, MetricError> {
    let mut distinct = lengths.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(MetricError::TooFewLengths(distinct.len()));
    }
    let n = lengths.len();
    if d.len() != n * (n - 1) / 2 {
        return Err(MetricError::LengthMismatch(d.len(), n * (n - 1) / 2));
    }
    let mut abs = Vec::with_capacity(d.len());
    let mut rel = Vec::with_capacity(d.len());
    for i in 0..n {
        for j in i + 1..n {
            let diff = (lengths[i] - lengths[j]).abs();
            abs.push(diff);
            rel.push(diff / (lengths[i] + lengths[j]));
        }
    }
    let r_rel = stats::pearson(d, &rel).ok_or(MetricError::ZeroVariance("pair distances"))?;
    let r_abs = stats::pearson(d, &abs).ok_or(MetricError::ZeroVariance("length differences"))?;
    Ok(MetricResult {
        property: PropertyId::WebersLaw,
        effect: r_rel - r_abs,
        n_groups: d.len(),
        n_units_used: 0,
        n_skipped: 0,
        diagnostics: vec![r_rel, r_abs],
    })
}

/// `(acc_c - acc_i) / (acc_c + acc_i)`.
pub fn scene_index(acc_congruent: f64, acc_incongruent: f64) -> Result<f64, MetricError> {
    modulation_index(acc_congruent, acc_incongruent).ok_or(MetricError::DegenerateAccuracy)
}

fn top1_accuracy(probs: &Matrix, items: &[(usize, usize)]) -> Result<f64, MetricError> {
    if items.is_empty() {
        return Err(MetricError::Empty("scene composites"));
    }
    let mut hits = 0usize;
    for &(row, label) in items {
        if label >= probs.cols() {
            return Err(MetricError::LabelMismatch(format!(
                "label index {label} outside {} classes",
                probs.cols()
            )));
        }
        let r = probs.row(row);
        // first maximum wins ties
        let best = r
            .iter()
            .enumerate()
            .fold(0, |b, (i, v)| if *v > r[b] { i } else { b });
        hits += usize::from(best == label);
    }
    Ok(hits as f64 / items.len() as f64)
}

/// Top-1 accuracy on congruent versus incongruent composites. Each item is a
/// `(row, true label index)` pair into `probs`.
pub fn scene_incongruence(
    probs: &Matrix,
    congruent: &[(usize, usize)],
    incongruent: &[(usize, usize)],
) -> Result<MetricResult, MetricError> {
    let acc_c = top1_accuracy(probs, congruent)?;
    let acc_i = top1_accuracy(probs, incongruent)?;
    Ok(MetricResult {
        property: PropertyId::SceneIncongruence,
        effect: scene_index(acc_c, acc_i)?,
        n_groups: congruent.len() + incongruent.len(),
        n_units_used: probs.cols(),
        n_skipped: 0,
        diagnostics: vec![acc_c, acc_i],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_active(n: usize) -> UnitMask {
        UnitMask {
            active: vec![true; n],
            threshold: 1e-6,
        }
    }

    #[test]
    fn planted_pair_averaging() {
        // rows 0..4 singles, 4.. multis
        let singles = [[1.0, 2.0], [3.0, 0.5], [0.2, 4.0], [2.0, 2.0]];
        let pairs = [(0, 1), (2, 3), (0, 3)];
        for (gain, want) in [(0.5, 0.5), (1.0, 1.0)] {
            let mut rows: Vec<Vec<f64>> = singles.iter().map(|r| r.to_vec()).collect();
            let mut displays = Vec::new();
            for (k, &(a, b)) in pairs.iter().enumerate() {
                rows.push(
                    (0..2)
                        .map(|u| gain * (singles[a][u] + singles[b][u]))
                        .collect(),
                );
                displays.push(Display {
                    multi: 4 + k,
                    singles: vec![a, b],
                });
            }
            let r = normalization_slope(&Matrix::from_rows(&rows), &displays, 2, &all_active(2))
                .unwrap();
            assert!((r.effect - want).abs() < 1e-15);
            assert_eq!(r.property, PropertyId::NormPairs);
        }
    }

    #[test]
    fn unusable_units() {
        let m = Matrix::zeros(3, 2);
        let d = [Display {
            multi: 2,
            singles: vec![0, 1],
        }];
        assert!(matches!(
            normalization_slope(&m, &d, 2, &all_active(2)),
            Err(MetricError::NoUsableUnits)
        ));
    }

    #[test]
    fn sparseness_examples() {
        assert_eq!(sparseness(&[0.0, 0.0, 3.0, 0.0, 0.0]), 1.0);
        assert_eq!(sparseness(&[2.0; 6]), 0.0);
        assert_eq!(sparseness(&[0.0; 4]), 0.0);
        let s = sparseness(&[2.0, 1.0, 0.0, 0.0]);
        assert!((s - 0.55 / 0.75).abs() < 1e-12);
        assert_eq!(sparseness(&[-1.0, -2.0, 1.0]), 1.0);
        assert_eq!(sparseness(&[4.0]), 0.0);
    }

    #[test]
    fn correlated_sparseness_duplicate_and_anti() {
        let a = Matrix::from_rows(&[[1.0, 1.0, 1.0], [0.0, 1.0, 2.0], [0.0, 0.0, 3.0]]);
        let r = correlated_sparseness(PropertyId::SparsenessMorph, &a, &a, &all_active(3)).unwrap();
        assert_eq!(r.effect, 1.0);
        let degenerate = Matrix::from_rows(&[[1.0, 1.0, 1.0], [1.0, 1.0, 1.0]]);
        assert!(matches!(
            correlated_sparseness(PropertyId::SparsenessMorph, &a, &degenerate, &all_active(3)),
            Err(MetricError::ZeroVariance(_))
        ));
        let two = UnitMask {
            active: vec![true, true, false],
            threshold: 1e-6,
        };
        assert!(matches!(
            correlated_sparseness(PropertyId::SparsenessMorph, &a, &a, &two),
            Err(MetricError::TooFewUnits { found: 2, need: 3 })
        ));
    }

    fn geometric(n: usize) -> Vec<f64> {
        let mut l = vec![16.0];
        for _ in 1..n {
            let last = *l.last().unwrap();
            l.push(last * 1.25);
        }
        l
    }

    #[test]
    fn weber_proportional_to_relative_change() {
        let l = geometric(10);
        let mut d = Vec::new();
        let mut abs = Vec::new();
        for i in 0..l.len() {
            for j in i + 1..l.len() {
                d.push(3.0 * (l[i] - l[j]).abs() / (l[i] + l[j]));
                abs.push((l[i] - l[j]).abs());
            }
        }
        let r = weber_effect_from_distances(&d, &l).unwrap();
        let r_ga = stats::pearson(&d, &abs).unwrap();
        assert!((r.effect - (1.0 - r_ga)).abs() < 1e-12);
        assert!(r.effect > 0.0);
    }

    #[test]
    fn weber_proportional_to_absolute_change() {
        let l = geometric(10);
        // rows placed on a line at their length: euclidean distance = |dl|
        let rows: Vec<[f64; 2]> = l.iter().map(|x| [*x, 0.0]).collect();
        let r = weber_effect(&Matrix::from_rows(&rows), &l, DistanceMetric::Euclidean).unwrap();
        assert!(r.effect <= 0.0);
        assert!((r.diagnostics[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weber_degenerate_inputs() {
        let l = [10.0, 20.0, 30.0];
        assert!(matches!(
            weber_effect_from_distances(&[1.0, 1.0, 1.0], &l),
            Err(MetricError::ZeroVariance(_))
        ));
        assert!(matches!(
            weber_effect_from_distances(&[1.0, 2.0, 3.0], &[1.0, 1.0, 2.0]),
            Err(MetricError::TooFewLengths(2))
        ));
    }

    #[test]
    fn scene_examples() {
        assert!((scene_index(0.8, 0.4).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(scene_index(0.6, 0.6).unwrap(), 0.0);
        assert!(matches!(
            scene_index(0.0, 0.0),
            Err(MetricError::DegenerateAccuracy)
        ));

        let probs = Matrix::from_rows(&[[0.9, 0.1], [0.2, 0.8], [0.7, 0.3], [0.6, 0.4]]);
        let r = scene_incongruence(&probs, &[(0, 0), (1, 1)], &[(2, 1), (3, 0)]).unwrap();
        assert_eq!(r.diagnostics, vec![1.0, 0.5]);
        assert!((r.effect - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            scene_incongruence(&probs, &[(0, 5)], &[(1, 1)]),
            Err(MetricError::LabelMismatch(_))
        ));
    }
}
