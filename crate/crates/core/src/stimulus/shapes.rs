use std::f64::consts::PI;

use rand::Rng;

use super::raster::{Canvas, Point};

/// Contour points sampled per silhouette. Morphs interpolate point-wise, so
/// every silhouette uses the same count.
pub const CONTOUR_POINTS: usize = 64;

/// Closed star-shaped contour: one radius per fixed polar angle, with the
/// largest radius normalized to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Silhouette {
    radii: Vec<f64>,
}

impl Silhouette {
    /// Smooth random blob from a handful of low harmonics. Odd harmonics
    /// make it asymmetric under both reflections almost surely.
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let harmonics: Vec<(f64, f64, f64)> = (1..=5)
            .map(|h| {
                let amp = rng.random_range(0.05..0.28) / (h as f64).sqrt();
                (h as f64, amp, rng.random_range(0.0..2.0 * PI))
            })
            .collect();
        let radii: Vec<f64> = (0..CONTOUR_POINTS)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / CONTOUR_POINTS as f64;
                let r: f64 = 1.0
                    + harmonics
                        .iter()
                        .map(|(h, a, ph)| a * (h * t + ph).cos())
                        .sum::<f64>();
                r.max(0.3)
            })
            .collect();
        Self::from_radii(radii)
    }

    fn from_radii(radii: Vec<f64>) -> Self {
        let max = radii.iter().cloned().fold(0.0, f64::max);
        Self {
            radii: radii.into_iter().map(|r| r / max).collect(),
        }
    }

    /// Point-wise linear blend of two contours, `t` in `[0, 1]`.
    pub fn morph(&self, other: &Silhouette, t: f64) -> Silhouette {
        let radii = self
            .radii
            .iter()
            .zip(&other.radii)
            .map(|(a, b)| (1.0 - t) * a + t * b)
            .collect();
        Self::from_radii(radii)
    }

    pub fn polygon(&self, center: Point, scale: f64, rotation: f64) -> Vec<Point> {
        self.radii
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let t = 2.0 * PI * k as f64 / CONTOUR_POINTS as f64 + rotation;
                (
                    center.0 + scale * r * t.cos(),
                    center.1 + scale * r * t.sin(),
                )
            })
            .collect()
    }
}

/// Fills the whole canvas with band-pass noise: the difference of two box
/// blurs of white noise, stretched to `contrast` around `mean`.
pub fn bandpass_noise<R: Rng>(canvas: &mut Canvas, rng: &mut R, mean: f64, contrast: f64) {
    let n = canvas.size() as usize;
    let noise: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let fine_r = rng.random_range(1..3usize);
    let coarse_r = fine_r * rng.random_range(3..6usize);
    let fine = box_blur(&noise, n, fine_r);
    let coarse = box_blur(&noise, n, coarse_r);
    let band: Vec<f64> = fine.iter().zip(&coarse).map(|(a, b)| a - b).collect();
    let peak = band.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    for y in 0..n {
        for x in 0..n {
            let v = mean + contrast * band[y * n + x] / peak;
            canvas.set(x as u32, y as u32, v.round().clamp(0.0, 255.0) as u8);
        }
    }
}

fn box_blur(src: &[f64], n: usize, r: usize) -> Vec<f64> {
    let pass = |input: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                let lo = b.saturating_sub(r);
                let hi = (b + r).min(n - 1);
                let mut s = 0.0;
                for c in lo..=hi {
                    s += if horizontal {
                        input[a * n + c]
                    } else {
                        input[c * n + a]
                    };
                }
                let v = s / (hi - lo + 1) as f64;
                if horizontal {
                    out[a * n + b] = v;
                } else {
                    out[b * n + a] = v;
                }
            }
        }
        out
    };
    pass(&pass(src, true), false)
}

/// Full-canvas sinusoidal grating.
pub fn grating(
    canvas: &mut Canvas,
    period: f64,
    orientation: f64,
    phase: f64,
    mean: f64,
    contrast: f64,
) {
    let (c, s) = (orientation.cos(), orientation.sin());
    canvas.shade_where(|x, y| {
        let v = mean + contrast * (2.0 * PI * (x * c + y * s) / period + phase).sin();
        Some(v.round().clamp(0.0, 255.0) as u8)
    });
}

/// Projective map taking the unit square's corners (0,0), (1,0), (1,1), (0,1)
/// to the given quad.
#[derive(Clone, Copy, Debug)]
pub struct Homography([f64; 9]);

impl Homography {
    pub fn square_to_quad(q: [Point; 4]) -> Self {
        let [(x0, y0), (x1, y1), (x2, y2), (x3, y3)] = q;
        let sx = x0 - x1 + x2 - x3;
        let sy = y0 - y1 + y2 - y3;
        let (g, h) = if sx.abs() < 1e-12 && sy.abs() < 1e-12 {
            (0.0, 0.0)
        } else {
            let dx1 = x1 - x2;
            let dx2 = x3 - x2;
            let dy1 = y1 - y2;
            let dy2 = y3 - y2;
            let det = dx1 * dy2 - dx2 * dy1;
            ((sx * dy2 - dx2 * sy) / det, (dx1 * sy - sx * dy1) / det)
        };
        Homography([
            x1 - x0 + g * x1,
            x3 - x0 + h * x3,
            x0,
            y1 - y0 + g * y1,
            y3 - y0 + h * y3,
            y0,
            g,
            h,
            1.0,
        ])
    }

    pub fn apply(&self, p: Point) -> Point {
        let m = &self.0;
        let w = m[6] * p.0 + m[7] * p.1 + m[8];
        (
            (m[0] * p.0 + m[1] * p.1 + m[2]) / w,
            (m[3] * p.0 + m[4] * p.1 + m[5]) / w,
        )
    }

    pub fn inverse(&self) -> Homography {
        let m = &self.0;
        let a = m[4] * m[8] - m[5] * m[7];
        let b = m[5] * m[6] - m[3] * m[8];
        let c = m[3] * m[7] - m[4] * m[6];
        let det = m[0] * a + m[1] * b + m[2] * c;
        let inv = [
            a,
            m[2] * m[7] - m[1] * m[8],
            m[1] * m[5] - m[2] * m[4],
            b,
            m[0] * m[8] - m[2] * m[6],
            m[2] * m[3] - m[0] * m[5],
            c,
            m[1] * m[6] - m[0] * m[7],
            m[0] * m[4] - m[1] * m[3],
        ];
        Homography(inv.map(|v| v / det))
    }
}
