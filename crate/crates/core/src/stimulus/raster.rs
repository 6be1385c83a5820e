//! Minimal grayscale rasterizer. Coverage is decided by sampling each pixel
//! at its center, which keeps output exactly reproducible across platforms.

use image::GrayImage;

pub type Point = (f64, f64);

#[derive(Clone, Debug)]
pub struct Canvas {
    width: u32,
    height: u32,
    px: Vec<u8>,
}

impl Canvas {
    pub fn new(size: u32, background: u8) -> Self {
        Self {
            width: size,
            height: size,
            px: vec![background; (size * size) as usize],
        }
    }

    pub fn size(&self) -> u32 {
        self.width
    }

    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        if x < self.width && y < self.height {
            self.px[(y * self.width + x) as usize] = v;
        }
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.px[(y * self.width + x) as usize]
    }

    /// Fills a closed polygon using the even-odd rule.
    pub fn fill_polygon(&mut self, pts: &[Point], v: u8) {
        self.fill_polygon_with(pts, |_, _| v);
    }

    pub fn fill_polygon_with(&mut self, pts: &[Point], mut shade: impl FnMut(f64, f64) -> u8) {
        if pts.len() < 3 {
            return;
        }
        let (ymin, ymax) = pts
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.1), hi.max(p.1))
            });
        let y0 = ymin.floor().max(0.0) as u32;
        let y1 = (ymax.ceil().max(0.0) as u32).min(self.height);
        let mut xs = Vec::with_capacity(8);
        for y in y0..y1 {
            let sy = y as f64 + 0.5;
            xs.clear();
            for i in 0..pts.len() {
                let (ax, ay) = pts[i];
                let (bx, by) = pts[(i + 1) % pts.len()];
                if (ay <= sy && by > sy) || (by <= sy && ay > sy) {
                    xs.push(ax + (sy - ay) / (by - ay) * (bx - ax));
                }
            }
            xs.sort_by(|a, b| a.total_cmp(b));
            for span in xs.chunks_exact(2) {
                // pixel x is covered when x + 0.5 lies in [span0, span1)
                let start = (span[0] - 0.5).ceil().max(0.0) as u32;
                let end = ((span[1] - 0.5).ceil().max(0.0) as u32).min(self.width);
                for x in start..end {
                    let v = shade(x as f64 + 0.5, sy);
                    self.set(x, y, v);
                }
            }
        }
    }

    /// Axis-aligned rectangle `[x0, x1) x [y0, y1)` in continuous coordinates.
    pub fn fill_rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, v: u8) {
        self.fill_polygon(&[(x0, y0), (x1, y0), (x1, y1), (x0, y1)], v);
    }

    pub fn fill_ellipse(&mut self, cx: f64, cy: f64, rx: f64, ry: f64, v: u8) {
        let (x0, x1) = self.clip_x(cx - rx, cx + rx);
        let (y0, y1) = self.clip_y(cy - ry, cy + ry);
        for y in y0..y1 {
            let dy = (y as f64 + 0.5 - cy) / ry;
            for x in x0..x1 {
                let dx = (x as f64 + 0.5 - cx) / rx;
                if dx * dx + dy * dy <= 1.0 {
                    self.set(x, y, v);
                }
            }
        }
    }

    /// Line segment of the given thickness with round caps.
    pub fn draw_line(&mut self, a: Point, b: Point, thickness: f64, v: u8) {
        let r = thickness / 2.0;
        let (x0, x1) = self.clip_x(a.0.min(b.0) - r, a.0.max(b.0) + r);
        let (y0, y1) = self.clip_y(a.1.min(b.1) - r, a.1.max(b.1) + r);
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len2 = dx * dx + dy * dy;
        for y in y0..y1 {
            let py = y as f64 + 0.5;
            for x in x0..x1 {
                let px = x as f64 + 0.5;
                let t = if len2 > 0.0 {
                    (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (qx, qy) = (a.0 + t * dx - px, a.1 + t * dy - py);
                if qx * qx + qy * qy <= r * r {
                    self.set(x, y, v);
                }
            }
        }
    }

    /// Fills every pixel whose center satisfies `inside`, with the shade it
    /// returns.
    pub fn shade_where(&mut self, mut f: impl FnMut(f64, f64) -> Option<u8>) {
        for y in 0..self.height {
            for x in 0..self.width {
                if let Some(v) = f(x as f64 + 0.5, y as f64 + 0.5) {
                    self.set(x, y, v);
                }
            }
        }
    }

    /// Mirrors the rectangle `[x0, x1) x [y0, y1)` top-to-bottom in place.
    pub fn flip_region_vertically(&mut self, x0: u32, y0: u32, x1: u32, y1: u32) {
        let x1 = x1.min(self.width);
        let y1 = y1.min(self.height);
        if y1 <= y0 {
            return;
        }
        let (mut top, mut bottom) = (y0, y1 - 1);
        while top < bottom {
            for x in x0..x1 {
                let a = self.get(x, top);
                let b = self.get(x, bottom);
                self.set(x, top, b);
                self.set(x, bottom, a);
            }
            top += 1;
            bottom -= 1;
        }
    }

    fn clip_x(&self, lo: f64, hi: f64) -> (u32, u32) {
        (
            lo.floor().max(0.0) as u32,
            (hi.ceil().max(0.0) as u32).min(self.width),
        )
    }

    fn clip_y(&self, lo: f64, hi: f64) -> (u32, u32) {
        (
            lo.floor().max(0.0) as u32,
            (hi.ceil().max(0.0) as u32).min(self.height),
        )
    }

    pub fn into_image(self) -> GrayImage {
        GrayImage::from_raw(self.width, self.height, self.px).expect("canvas buffer size")
    }
}
