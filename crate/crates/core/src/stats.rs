//! Small numerical helpers shared by the metric and analysis modules.

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn std_dev(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count() as f64;
    let m = xs.clone().sum::<f64>() / n;
    (xs.map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt()
}

/// Pearson correlation, clamped to `[-1, 1]`. `None` when either input has
/// zero variance or the lengths differ.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// `(a - b) / (a + b)` for nonnegative `a`, `b`; `None` when both are zero.
///
/// For nonnegative inputs the result lies in `[-1, 1]` and swapping the
/// arguments negates it exactly, since IEEE subtraction is antisymmetric and
/// addition commutative.
pub fn modulation_index(a: f64, b: f64) -> Option<f64> {
    let s = a + b;
    (s > 0.0).then(|| (a - b) / s)
}
