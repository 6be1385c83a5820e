//! Modulation-index metrics: each group yields two distances and the effect
//! is the mean over groups of `(d_brain_larger - d_brain_smaller) / sum`.
//! Groups whose two distances are both zero are skipped and counted.

use super::{neural_distance, MetricError, MetricResult};
use crate::domain::{DistanceMetric, PropertyId};
use crate::stats::modulation_index;

fn over_groups<const N: usize>(
    property: PropertyId,
    groups: &[[&[f64]; N]],
    metric: DistanceMetric,
    distances: impl Fn(&[&[f64]; N], DistanceMetric) -> Result<(f64, f64), MetricError>,
) -> Result<MetricResult, MetricError> {
    if groups.is_empty() {
        return Err(MetricError::Empty("groups"));
    }
    let mut per_group = Vec::with_capacity(groups.len());
    let mut skipped = 0;
    for g in groups {
        let (pos, neg) = distances(g, metric)?;
        match modulation_index(pos, neg) {
            Some(v) => per_group.push(v),
            None => skipped += 1,
        }
    }
    if per_group.is_empty() {
        return Err(MetricError::AllGroupsDegenerate(groups.len()));
    }
    let effect = per_group.iter().sum::<f64>() / per_group.len() as f64;
    Ok(MetricResult {
        property,
        effect,
        n_groups: per_group.len(),
        n_units_used: groups[0][0].len(),
        n_skipped: skipped,
        diagnostics: per_group,
    })
}

fn d(a: &[f64], b: &[f64], m: DistanceMetric) -> Result<f64, MetricError> {
    neural_distance(a, b, m)
}

/// Groups are `[original, vflip, hflip]`, where `vflip` is the reflection
/// about the vertical axis. `MC = (D_h - D_v) / (D_h + D_v)`.
pub fn mirror_confusion(
    groups: &[[&[f64]; 3]],
    metric: DistanceMetric,
) -> Result<MetricResult, MetricError> {
    over_groups(
        PropertyId::MirrorConfusion,
        groups,
        metric,
        |[o, v, h], m| Ok((d(o, h, m)?, d(o, v, m)?)),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OcclusionVariant {
    Basic,
    Depth,
}

/// Groups are `[unoccluded, occluded, control]`; `d1` is the
/// unoccluded-occluded distance, `d2` the unoccluded-control distance and
/// `OI = (d2 - d1) / (d2 + d1)`.
pub fn occlusion_index(
    groups: &[[&[f64]; 3]],
    variant: OcclusionVariant,
    metric: DistanceMetric,
) -> Result<MetricResult, MetricError> {
    let property = match variant {
        OcclusionVariant::Basic => PropertyId::OcclusionBasic,
        OcclusionVariant::Depth => PropertyId::OcclusionDepth,
    };
    over_groups(property, groups, metric, |[u, o, c], m| {
        Ok((d(u, c, m)?, d(u, o, m)?))
    })
}

/// Groups are `[base, proportional, disproportional]`;
/// `RS = (d2 - d1) / (d2 + d1)` with `d1` the disproportional and `d2` the
/// proportional distance from the base figure.
pub fn relative_size_index(
    groups: &[[&[f64]; 3]],
    metric: DistanceMetric,
) -> Result<MetricResult, MetricError> {
    over_groups(PropertyId::RelativeSize, groups, metric, |[b, p, dp], m| {
        Ok((d(b, p, m)?, d(b, dp, m)?))
    })
}

/// Groups are `[base, congruent, incongruent]`;
/// `SI = (d2 - d1) / (d2 + d1)` with `d2` the congruent-change and `d1` the
/// incongruent-change distance.
pub fn surface_invariance_index(
    groups: &[[&[f64]; 3]],
    metric: DistanceMetric,
) -> Result<MetricResult, MetricError> {
    over_groups(
        PropertyId::SurfaceInvariance,
        groups,
        metric,
        |[b, c, i], m| Ok((d(b, c, m)?, d(b, i, m)?)),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThreeDVariant {
    /// Flat controls with matched line count.
    LineCount,
    /// Flat controls with matched junction clutter.
    JunctionClutter,
}

/// Groups are `[solid_a, solid_b, flat_a, flat_b]`;
/// `TD = (d1 - d2) / (d1 + d2)` with `d1` the 3D-pair and `d2` the flat-pair
/// distance.
pub fn three_d_index(
    groups: &[[&[f64]; 4]],
    variant: ThreeDVariant,
    metric: DistanceMetric,
) -> Result<MetricResult, MetricError> {
    let property = match variant {
        ThreeDVariant::LineCount => PropertyId::ThreeD1,
        ThreeDVariant::JunctionClutter => PropertyId::ThreeD2,
    };
    over_groups(property, groups, metric, |[sa, sb, fa, fb], m| {
        Ok((d(sa, sb, m)?, d(fa, fb, m)?))
    })
}

/// Groups are `[base, global_change, local_change]`;
/// `GA = (d_g - d_l) / (d_g + d_l)`.
pub fn global_advantage(
    groups: &[[&[f64]; 3]],
    metric: DistanceMetric,
) -> Result<MetricResult, MetricError> {
    over_groups(
        PropertyId::GlobalAdvantage,
        groups,
        metric,
        |[b, g, l], m| Ok((d(b, g, m)?, d(b, l, m)?)),
    )
}

/// Groups are `[upright, upright_thatcher, inverted, inverted_thatcher]`;
/// `TE = (d_u - d_i) / (d_u + d_i)`.
pub fn thatcher_index(
    groups: &[[&[f64]; 4]],
    metric: DistanceMetric,
) -> Result<MetricResult, MetricError> {
    over_groups(PropertyId::Thatcher, groups, metric, |[u, ut, i, it], m| {
        Ok((d(u, ut, m)?, d(i, it, m)?))
    })
}
