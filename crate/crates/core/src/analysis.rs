//! Effect-space analysis: two-dimensional PCA embeddings, Davies-Bouldin
//! clustering strength and layerwise trajectories.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::domain::{BrainReference, EffectVector, PropertyId};
use crate::matrix::Matrix;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("need at least {need} {what}, got {found}")]
    TooFew {
        what: &'static str,
        found: usize,
        need: usize,
    },
    #[error("matrix is identically zero after centering")]
    RankDeficient,
    #[error("expected {expected} columns, got {found}")]
    ColumnMismatch { expected: usize, found: usize },
    #[error("{label} has no value for {property}")]
    MissingValue { label: String, property: PropertyId },
    #[error("{0} labels for {1} rows")]
    LabelCount(usize, usize),
    #[error("clusters `{0}` and `{1}` share a centroid")]
    CoincidentCentroids(String, String),
    #[error("layer tag `{0}` has no readable depth")]
    UnsortableDepths(String),
    #[error("two layers at depth {0}")]
    DuplicateDepth(f64),
}

/// Effect vectors as a dense matrix over a common property subset.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectMatrix {
    pub labels: Vec<String>,
    pub properties: Vec<PropertyId>,
    pub values: Matrix,
}

pub fn row_label(v: &EffectVector) -> String {
    match v.layer_tag() {
        Some(t) => format!("{}@{t}", v.model_id()),
        None => v.model_id().to_string(),
    }
}

fn values_for(
    v: &EffectVector,
    label: &str,
    properties: &[PropertyId],
) -> Result<Vec<f64>, AnalysisError> {
    properties
        .iter()
        .map(|&p| {
            v.get(p).ok_or_else(|| AnalysisError::MissingValue {
                label: label.to_string(),
                property: p,
            })
        })
        .collect()
}

impl EffectMatrix {
    /// Rows for `vectors` over `properties`, or over the properties every
    /// vector has when `properties` is `None`.
    pub fn from_vectors(
        vectors: &[EffectVector],
        properties: Option<&[PropertyId]>,
    ) -> Result<Self, AnalysisError> {
        let properties: Vec<PropertyId> = match properties {
            Some(ps) => ps.to_vec(),
            None => PropertyId::ALL
                .into_iter()
                .filter(|p| vectors.iter().all(|v| v.get(*p).is_some()))
                .collect(),
        };
        let mut labels = Vec::with_capacity(vectors.len());
        let mut rows = Vec::with_capacity(vectors.len());
        for v in vectors {
            let label = row_label(v);
            rows.push(values_for(v, &label, &properties)?);
            labels.push(label);
        }
        let values = Matrix::new(rows.len(), properties.len(), rows.concat());
        Ok(Self {
            labels,
            properties,
            values,
        })
    }

    /// Appends the brain reference as an ordinary row.
    pub fn with_brain(
        mut self,
        reference: &BrainReference,
        label: &str,
    ) -> Result<Self, AnalysisError> {
        let row = values_for(&reference.as_effect_vector(label), label, &self.properties)?;
        let mut data = self.values.data().to_vec();
        data.extend(row);
        self.values = Matrix::new(self.values.rows() + 1, self.properties.len(), data);
        self.labels.push(label.to_string());
        Ok(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Embedding {
    pub labels: Vec<String>,
    pub properties: Vec<PropertyId>,
    pub coordinates: Vec<[f64; 2]>,
    /// Unit loading vectors of the two principal axes.
    pub basis: [Vec<f64>; 2],
    pub explained_variance_ratio: [f64; 2],
    pub means: Vec<f64>,
}

/// Two-dimensional PCA of the rows of `m`. Each axis is oriented so that
/// its largest-magnitude loading is positive.
pub fn pca_embed(m: &EffectMatrix) -> Result<Embedding, AnalysisError> {
    let (n, p) = (m.values.rows(), m.values.cols());
    if n < 2 {
        return Err(AnalysisError::TooFew {
            what: "rows",
            found: n,
            need: 2,
        });
    }
    if p < 2 {
        return Err(AnalysisError::TooFew {
            what: "columns",
            found: p,
            need: 2,
        });
    }
    let means: Vec<f64> = (0..p)
        .map(|j| m.values.column(j).sum::<f64>() / n as f64)
        .collect();
    let centered = DMatrix::from_fn(n, p, |i, j| m.values.get(i, j) - means[j]);
    if centered.iter().all(|x| *x == 0.0) {
        return Err(AnalysisError::RankDeficient);
    }
    let svd = centered.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    let k = svd.singular_values.len().min(2);
    let mut basis: [Vec<f64>; 2] = [vec![0.0; p], vec![0.0; p]];
    let mut ratio = [0.0; 2];
    for a in 0..k {
        let mut axis: Vec<f64> = v_t.row(a).iter().copied().collect();
        let lead = axis.iter().copied().fold(
            0.0f64,
            |best, x| if x.abs() > best.abs() { x } else { best },
        );
        if lead < 0.0 {
            axis.iter_mut().for_each(|x| *x = -*x);
        }
        ratio[a] = svd.singular_values[a].powi(2) / total;
        basis[a] = axis;
    }
    let mut e = Embedding {
        labels: m.labels.clone(),
        properties: m.properties.clone(),
        coordinates: Vec::new(),
        basis,
        explained_variance_ratio: ratio,
        means,
    };
    e.coordinates = project_into(&m.values, &e)?;
    Ok(e)
}

/// Centers rows with the embedding's means and projects them onto its axes.
pub fn project_into(rows: &Matrix, e: &Embedding) -> Result<Vec<[f64; 2]>, AnalysisError> {
    if rows.cols() != e.means.len() {
        return Err(AnalysisError::ColumnMismatch {
            expected: e.means.len(),
            found: rows.cols(),
        });
    }
    Ok((0..rows.rows())
        .map(|i| {
            let r = rows.row(i);
            let mut c = [0.0; 2];
            for (a, axis) in e.basis.iter().enumerate() {
                c[a] = r
                    .iter()
                    .zip(&e.means)
                    .zip(axis)
                    .map(|((x, mu), w)| (x - mu) * w)
                    .sum();
            }
            c
        })
        .collect())
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Davies-Bouldin index of the labelled rows, in the full column space.
pub fn davies_bouldin(points: &Matrix, labels: &[String]) -> Result<f64, AnalysisError> {
    if labels.len() != points.rows() {
        return Err(AnalysisError::LabelCount(labels.len(), points.rows()));
    }
    let mut clusters: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        clusters.entry(l.as_str()).or_default().push(i);
    }
    if clusters.len() < 2 {
        return Err(AnalysisError::TooFew {
            what: "clusters",
            found: clusters.len(),
            need: 2,
        });
    }
    let p = points.cols();
    let stats: Vec<(&str, Vec<f64>, f64)> = clusters
        .iter()
        .map(|(name, members)| {
            let mut c = vec![0.0; p];
            for &i in members {
                for (cj, x) in c.iter_mut().zip(points.row(i)) {
                    *cj += x;
                }
            }
            c.iter_mut().for_each(|x| *x /= members.len() as f64);
            let s = members
                .iter()
                .map(|&i| euclid(points.row(i), &c))
                .sum::<f64>()
                / members.len() as f64;
            (*name, c, s)
        })
        .collect();
    let mut total = 0.0;
    for (i, (ni, ci, si)) in stats.iter().enumerate() {
        let mut worst = 0.0f64;
        for (j, (nj, cj, sj)) in stats.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = euclid(ci, cj);
            if d == 0.0 {
                return Err(AnalysisError::CoincidentCentroids(
                    ni.to_string(),
                    nj.to_string(),
                ));
            }
            worst = worst.max((si + sj) / d);
        }
        total += worst;
    }
    Ok(total / stats.len() as f64)
}

/// `1 / (1 + db)`.
pub fn clustering_strength(db: f64) -> f64 {
    1.0 / (1.0 + db)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub model_id: String,
    pub layer_tag: String,
    pub depth: f64,
    pub coordinates: [f64; 2],
    pub first: bool,
    pub last: bool,
}

/// Reads a depth from tags such as `10`, `p10`, `10%` or `depth_62.5`.
pub fn parse_depth(tag: &str) -> Option<f64> {
    let t = tag.trim().trim_end_matches('%');
    let start = t.find(|c: char| c.is_ascii_digit() || c == '.')?;
    t[start..].parse::<f64>().ok().filter(|d| d.is_finite())
}

/// Projects per-layer effect vectors of one model into a fixed embedding,
/// ordered by depth.
pub fn layer_trajectory(
    layers: &[EffectVector],
    e: &Embedding,
) -> Result<Vec<TrajectoryPoint>, AnalysisError> {
    let mut keyed = Vec::with_capacity(layers.len());
    for v in layers {
        let tag = v.layer_tag().unwrap_or("").to_string();
        let depth =
            parse_depth(&tag).ok_or_else(|| AnalysisError::UnsortableDepths(tag.clone()))?;
        keyed.push((depth, tag, v));
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(w) = keyed.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(AnalysisError::DuplicateDepth(w[0].0));
    }
    let n = keyed.len();
    let mut out = Vec::with_capacity(n);
    for (i, (depth, tag, v)) in keyed.into_iter().enumerate() {
        let row = values_for(v, &row_label(v), &e.properties)?;
        let c = project_into(&Matrix::new(1, row.len(), row), e)?[0];
        out.push(TrajectoryPoint {
            model_id: v.model_id().to_string(),
            layer_tag: tag,
            depth,
            coordinates: c,
            first: i == 0,
            last: i + 1 == n,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]]) -> EffectMatrix {
        let values = Matrix::from_rows(rows);
        EffectMatrix {
            labels: (0..rows.len()).map(|i| format!("r{i}")).collect(),
            properties: PropertyId::ALL[..values.cols()].to_vec(),
            values,
        }
    }

    #[test]
    fn planar_rows_are_fully_explained() {
        let m = matrix(&[
            &[1.0, 2.0, 3.0],
            &[2.0, 0.0, 2.0],
            &[0.0, 1.0, 1.0],
            &[3.0, 3.0, 6.0],
        ]);
        let e = pca_embed(&m).unwrap();
        let [r1, r2] = e.explained_variance_ratio;
        assert!((r1 + r2 - 1.0).abs() < 1e-9);
        assert!(r1 >= r2);
        let dot: f64 = e.basis[0].iter().zip(&e.basis[1]).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-10);
        for axis in &e.basis {
            let norm: f64 = axis.iter().map(|x| x * x).sum();
            assert!((norm - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn duplicates_share_coordinates_and_zero_row_projects_to_minus_means() {
        let m = matrix(&[&[1.0, 0.5], &[1.0, 0.5], &[-0.2, 0.3], &[0.4, -0.9]]);
        let e = pca_embed(&m).unwrap();
        assert_eq!(e.coordinates[0], e.coordinates[1]);
        assert_eq!(project_into(&m.values, &e).unwrap(), e.coordinates);
        let z = project_into(&Matrix::zeros(1, 2), &e).unwrap()[0];
        for (a, za) in z.iter().enumerate() {
            let want: f64 = -e
                .means
                .iter()
                .zip(&e.basis[a])
                .map(|(m, w)| m * w)
                .sum::<f64>();
            assert!((za - want).abs() < 1e-15);
        }
        assert_eq!(
            project_into(&Matrix::zeros(1, 3), &e),
            Err(AnalysisError::ColumnMismatch {
                expected: 2,
                found: 3
            })
        );
    }

    #[test]
    fn constant_rows_are_rank_deficient() {
        let m = matrix(&[&[1.0, 2.0], &[1.0, 2.0]]);
        assert_eq!(pca_embed(&m), Err(AnalysisError::RankDeficient));
    }

    #[test]
    fn davies_bouldin_examples() {
        let labels: Vec<String> = ["a", "a", "b", "b"].map(String::from).to_vec();
        let points = Matrix::from_rows(&[[0.0, 0.0], [0.0, 0.0], [10.0, 0.0], [10.0, 0.0]]);
        assert_eq!(davies_bouldin(&points, &labels).unwrap(), 0.0);
        let points = Matrix::from_rows(&[[0.0, 0.1], [0.0, -0.1], [10.0, 0.1], [10.0, -0.1]]);
        let db = davies_bouldin(&points, &labels).unwrap();
        assert!((db - 0.02).abs() < 1e-12);
        assert!((clustering_strength(db) - 1.0 / 1.02).abs() < 1e-12);
        assert_eq!(clustering_strength(0.0), 1.0);
        let points = Matrix::from_rows(&[[0.0, 1.0], [0.0, -1.0], [1.0, 0.0], [-1.0, 0.0]]);
        assert!(matches!(
            davies_bouldin(&points, &labels),
            Err(AnalysisError::CoincidentCentroids(..))
        ));
    }

    #[test]
    fn depth_tags() {
        assert_eq!(parse_depth("10"), Some(10.0));
        assert_eq!(parse_depth("p10"), Some(10.0));
        assert_eq!(parse_depth("62.5%"), Some(62.5));
        assert_eq!(parse_depth("penultimate"), None);
    }

    #[test]
    fn trajectory_is_sorted_and_flagged() {
        let layers: Vec<EffectVector> = [30, 10, 100, 20]
            .iter()
            .map(|d| {
                EffectVector::from_pairs(
                    "net",
                    Some(format!("p{d}")),
                    [
                        (PropertyId::NormPairs, 0.5),
                        (PropertyId::NormTriplets, *d as f64 / 100.0),
                    ],
                )
                .unwrap()
            })
            .collect();
        let m = EffectMatrix::from_vectors(&layers, None).unwrap();
        assert_eq!(
            m.properties,
            [PropertyId::NormPairs, PropertyId::NormTriplets]
        );
        let e = pca_embed(&m).unwrap();
        let t = layer_trajectory(&layers, &e).unwrap();
        let depths: Vec<f64> = t.iter().map(|p| p.depth).collect();
        assert_eq!(depths, [10.0, 20.0, 30.0, 100.0]);
        assert!(t[0].first && !t[0].last && t[3].last);
        let single = layer_trajectory(&layers[..1], &e).unwrap();
        assert!(single[0].first && single[0].last);
        let untagged = EffectVector::from_pairs("net", Some("fc".into()), []).unwrap();
        assert!(matches!(
            layer_trajectory(&[untagged], &e),
            Err(AnalysisError::UnsortableDepths(_))
        ));
    }
}
