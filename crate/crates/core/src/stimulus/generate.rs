//! Procedural protocols, one per property. All randomness comes from a
//! ChaCha stream seeded by the spec, so a spec fully determines the bytes of
//! every image.
//!
//! Protocol summary (group roles in brackets):
//!
//! * normalization: `K` silhouettes at `P` grid slots, singles for every
//!   (object, slot) plus multi-object displays on distinct slots.
//! * mirror: random asymmetric silhouettes [original, vflip, hflip]; the
//!   reflections are exact pixel flips of the original.
//! * morph sparseness: reference silhouettes plus morphlines blending
//!   contour points between pairs of references.
//! * shape/texture sparseness: silhouettes vs. band-pass noise and gratings.
//! * Weber: centered horizontal bars with lengths in a geometric series.
//! * basic occlusion: [unoccluded: A and B side by side; occluded: B in
//!   front of A; control: B at the same place but shifted clear of A, with
//!   the region it would hide deleted from A].
//! * depth occlusion: [unoccluded: A in front of B; occluded: depth order
//!   swapped; control: A in front with the overlap deleted].
//! * relative size: body + part figures [base; proportional: both scaled;
//!   disproportional: only the part scaled, same total area change].
//! * surface invariance: striped object on a checkerboard plane [base;
//!   congruent: object and plane share a new projective tilt; incongruent:
//!   plane tilts one way, object the other].
//! * 3D processing: cuboid line drawings seen from above vs. below
//!   [solid_a, solid_b] and flattened versions of both [flat_a, flat_b]. In
//!   variant 1 the inner edges are detached from the outline (same line
//!   count); in variant 2 they end at outline midpoints (same junction
//!   count).
//! * global advantage: Navon figures [base; global_change; local_change].
//! * Thatcher: schematic faces [upright, upright_thatcher, inverted,
//!   inverted_thatcher]; thatcherization flips the eye and mouth regions,
//!   inversion rotates by 180 degrees.

use std::collections::HashSet;
use std::f64::consts::PI;

use image::imageops;
use image::GrayImage;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::raster::{Canvas, Point};
use super::shapes::{bandpass_noise, grating, Homography, Silhouette};
use super::{
    scene, ImageSource, ManifestRecord, Raster, Role, StimulusError, StimulusImage, StimulusSet,
    StimulusSpec,
};
use crate::domain::PropertyId;

struct Builder {
    images: Vec<StimulusImage>,
    records: Vec<ManifestRecord>,
}

impl Builder {
    fn new() -> Self {
        Self {
            images: Vec::new(),
            records: Vec::new(),
        }
    }

    fn push(&mut self, record: ManifestRecord, img: GrayImage) {
        self.images.push(StimulusImage {
            id: record.stimulus_id.clone(),
            source: ImageSource::Raster(Raster::Gray(img)),
        });
        self.records.push(record);
    }
}

pub fn generate_stimulus_set(spec: &StimulusSpec) -> Result<StimulusSet, StimulusError> {
    if spec.canvas_px < 64 {
        return Err(spec.degenerate(format!("canvas {} px, need >= 64", spec.canvas_px)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (images, records) = if spec.property == PropertyId::SceneIncongruence {
        scene::composites(spec)?
    } else {
        let mut b = Builder::new();
        use PropertyId as P;
        match spec.property {
            P::NormPairs => normalization(spec, &mut rng, &mut b, 2)?,
            P::NormTriplets => normalization(spec, &mut rng, &mut b, 3)?,
            P::MirrorConfusion => mirror(spec, &mut rng, &mut b)?,
            P::SparsenessMorph => morphlines(spec, &mut rng, &mut b)?,
            P::SparsenessShapeTexture => shape_texture(spec, &mut rng, &mut b)?,
            P::WebersLaw => weber(spec, &mut b)?,
            P::OcclusionBasic => occlusion_basic(spec, &mut rng, &mut b)?,
            P::OcclusionDepth => occlusion_depth(spec, &mut rng, &mut b)?,
            P::RelativeSize => relative_size(spec, &mut rng, &mut b)?,
            P::SurfaceInvariance => surface(spec, &mut rng, &mut b)?,
            P::ThreeD1 => three_d(spec, &mut rng, &mut b, 1)?,
            P::ThreeD2 => three_d(spec, &mut rng, &mut b, 2)?,
            P::GlobalAdvantage => navon(spec, &mut rng, &mut b)?,
            P::Thatcher => thatcher(spec, &mut rng, &mut b)?,
            P::SceneIncongruence => unreachable!(),
        }
        (b.images, b.records)
    };
    let set = StimulusSet {
        property: spec.property,
        seed: Some(spec.seed),
        images,
        records,
    };
    set.validate()?;
    Ok(set)
}

fn require_groups(spec: &StimulusSpec) -> Result<usize, StimulusError> {
    match spec.params.n_groups {
        0 => Err(spec.degenerate("n_groups must be >= 1")),
        n => Ok(n),
    }
}

fn normalization(
    spec: &StimulusSpec,
    rng: &mut ChaCha8Rng,
    b: &mut Builder,
    arity: usize,
) -> Result<(), StimulusError> {
    let p = &spec.params;
    if p.n_positions < arity || p.n_objects < arity || p.n_displays == 0 {
        return Err(spec.degenerate(format!(
            "need >= {arity} positions and objects and >= 1 display"
        )));
    }
    let s = spec.canvas_px as f64;
    let cols = (p.n_positions as f64).sqrt().ceil() as usize;
    let rows = p.n_positions.div_ceil(cols);
    let (cw, ch) = (s / cols as f64, s / rows as f64);
    let slot = |k: usize| {
        (
            (k % cols) as f64 * cw + cw / 2.0,
            (k / cols) as f64 * ch + ch / 2.0,
        )
    };
    let radius = 0.38 * cw.min(ch);

    let objects: Vec<(Silhouette, f64, u8)> = (0..p.n_objects)
        .map(|_| {
            (
                Silhouette::random(rng),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0..=80u8),
            )
        })
        .collect();
    let draw = |canvas: &mut Canvas, obj: usize, pos: usize| {
        let (sil, rot, shade) = &objects[obj];
        canvas.fill_polygon(&sil.polygon(slot(pos), radius, *rot), *shade);
    };
    let single_id = |obj: usize, pos: usize| format!("single_o{obj:02}_p{pos:02}");

    for obj in 0..p.n_objects {
        for pos in 0..p.n_positions {
            let mut c = Canvas::new(spec.canvas_px, spec.background_gray);
            draw(&mut c, obj, pos);
            b.push(
                ManifestRecord::new(single_id(obj, pos), Role::Single, "singles"),
                c.into_image(),
            );
        }
    }

    let mut seen = HashSet::new();
    let mut attempts = 0;
    let mut d = 0;
    while d < p.n_displays {
        attempts += 1;
        if attempts > 1000 * p.n_displays {
            return Err(spec.degenerate(format!(
                "only {d} distinct displays possible, {} requested",
                p.n_displays
            )));
        }
        let slots = sample(rng, p.n_positions, arity).into_vec();
        let objs = sample(rng, p.n_objects, arity).into_vec();
        let mut key: Vec<(usize, usize)> =
            slots.iter().copied().zip(objs.iter().copied()).collect();
        key.sort_unstable();
        if !seen.insert(key.clone()) {
            continue;
        }
        let mut c = Canvas::new(spec.canvas_px, spec.background_gray);
        let mut members = Vec::with_capacity(arity);
        for &(pos, obj) in &key {
            draw(&mut c, obj, pos);
            members.push(single_id(obj, pos));
        }
        let id = format!("multi_{d:03}");
        b.push(
            ManifestRecord::new(&id, Role::Multi, &id).with_members(members),
            c.into_image(),
        );
        d += 1;
    }
    Ok(())
}

fn mirror(spec: &StimulusSpec, rng: &mut ChaCha8Rng, b: &mut Builder) -> Result<(), StimulusError> {
    let s = spec.canvas_px as f64;
    for g in 0..require_groups(spec)? {
        let sil = Silhouette::random(rng);
        let rot = rng.random_range(0.0..2.0 * PI);
        let center = (
            s / 2.0 + rng.random_range(-0.08..0.08) * s,
            s / 2.0 + rng.random_range(-0.08..0.08) * s,
        );
        let mut c = Canvas::new(spec.canvas_px, spec.background_gray);
        c.fill_polygon(
            &sil.polygon(center, 0.3 * s, rot),
            rng.random_range(0..=60u8),
        );
        let original = c.into_image();
        let vflip = imageops::flip_horizontal(&original);
        let hflip = imageops::flip_vertical(&original);
        let gid = format!("g{g:02}");
        b.push(
            ManifestRecord::new(format!("{gid}_original"), Role::Original, &gid),
            original,
        );
        b.push(
            ManifestRecord::new(format!("{gid}_vflip"), Role::Vflip, &gid),
            vflip,
        );
        b.push(
            ManifestRecord::new(format!("{gid}_hflip"), Role::Hflip, &gid),
            hflip,
        );
    }
    Ok(())
}

fn silhouette_image(spec: &StimulusSpec, sil: &Silhouette, rot: f64, shade: u8) -> GrayImage {
    let s = spec.canvas_px as f64;
    let mut c = Canvas::new(spec.canvas_px, spec.background_gray);
    c.fill_polygon(&sil.polygon((s / 2.0, s / 2.0), 0.35 * s, rot), shade);
    c.into_image()
}

fn morphlines(
    spec: &StimulusSpec,
    rng: &mut ChaCha8Rng,
    b: &mut Builder,
) -> Result<(), StimulusError> {
    let p = &spec.params;
    if p.morph_steps < 2 {
        return Err(spec.degenerate(format!("{} morph steps, need >= 2", p.morph_steps)));
    }
    if p.n_morphlines == 0 || p.n_references < (2 * p.n_morphlines).max(2) {
        return Err(spec.degenerate("need >= 1 morphline and two reference shapes per morphline"));
    }
    let refs: Vec<Silhouette> = (0..p.n_references)
        .map(|_| Silhouette::random(rng))
        .collect();
    for (i, sil) in refs.iter().enumerate() {
        let id = format!("ref_{i:02}");
        b.push(
            ManifestRecord::new(&id, Role::Reference, &id),
            silhouette_image(spec, sil, 0.0, 0),
        );
    }
    for line in 0..p.n_morphlines {
        let (a, z) = (&refs[2 * line], &refs[2 * line + 1]);
        let gid = format!("line_{line:02}");
        for step in 0..p.morph_steps {
            let t = step as f64 / (p.morph_steps - 1) as f64;
            b.push(
                ManifestRecord::new(format!("morph_{line:02}_{step:02}"), Role::Morph, &gid)
                    .with_value(step as f64),
                silhouette_image(spec, &a.morph(z, t), 0.0, 0),
            );
        }
    }
    Ok(())
}

fn shape_texture(
    spec: &StimulusSpec,
    rng: &mut ChaCha8Rng,
    b: &mut Builder,
) -> Result<(), StimulusError> {
    let n = spec.params.n_references;
    if n < 2 {
        return Err(spec.degenerate(format!("{n} shapes, need >= 2")));
    }
    for i in 0..n {
        let sil = Silhouette::random(rng);
        let rot = rng.random_range(0.0..2.0 * PI);
        let id = format!("shape_{i:02}");
        b.push(
            ManifestRecord::new(&id, Role::Shape, "shapes"),
            silhouette_image(spec, &sil, rot, 0),
        );
    }
    let mean = spec.background_gray as f64;
    for i in 0..n {
        let mut c = Canvas::new(spec.canvas_px, spec.background_gray);
        if i % 2 == 0 {
            bandpass_noise(&mut c, rng, mean, 80.0);
        } else {
            let period = rng.random_range(6.0..40.0);
            let orientation = rng.random_range(0.0..PI);
            let phase = rng.random_range(0.0..2.0 * PI);
            grating(&mut c, period, orientation, phase, mean, 80.0);
        }
        b.push(
            ManifestRecord::new(format!("texture_{i:02}"), Role::Texture, "textures"),
            c.into_image(),
        );
    }
    Ok(())
}

/// Bar lengths of the Weber protocol: `start * ratio^k` for `k < n`.
pub fn weber_lengths(start: f64, ratio: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut l = start;
    for _ in 0..n {
        out.push(l);
        l *= ratio;
    }
    out
}

fn weber(spec: &StimulusSpec, b: &mut Builder) -> Result<(), StimulusError> {
    let p = &spec.params;
    if p.n_lengths < 3 {
        return Err(spec.degenerate(format!("{} lengths, need >= 3", p.n_lengths)));
    }
    if !(p.length_start > 0.0 && p.length_ratio > 1.0 && p.bar_thickness > 0.0) {
        return Err(spec.degenerate("lengths must start > 0 and grow by a ratio > 1"));
    }
    let s = spec.canvas_px as f64;
    let lengths = weber_lengths(p.length_start, p.length_ratio, p.n_lengths);
    let longest = lengths[lengths.len() - 1];
    if longest > s - 4.0 {
        return Err(spec.degenerate(format!(
            "longest bar {longest:.1} px does not fit the canvas"
        )));
    }
    for (k, &l) in lengths.iter().enumerate() {
        let mut c = Canvas::new(spec.canvas_px, spec.background_gray);
        let (cx, cy) = (s / 2.0, s / 2.0);
        c.fill_rect(
            cx - l / 2.0,
            cy - p.bar_thickness / 2.0,
            cx + l / 2.0,
            cy + p.bar_thickness / 2.0,
            0,
        );
        let id = format!("bar_{k:02}");
        b.push(
            ManifestRecord::new(&id, Role::Bar, &id).with_value(l),
            c.into_image(),
        );
    }
    Ok(())
}

#[derive(Clone, Copy)]
struct Rect {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl Rect {
    fn fill(&self, c: &mut Canvas, v: u8) {
        c.fill_rect(self.x, self.y, self.x + self.w, self.y + self.h, v);
    }

    fn intersect(&self, o: &Rect) -> Option<Rect> {
        let x0 = self.x.max(o.x);
        let y0 = self.y.max(o.y);
        let x1 = (self.x + self.w).min(o.x + o.w);
        let y1 = (self.y + self.h).min(o.y + o.h);
        (x1 > x0 && y1 > y0).then_some(Rect {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        })
    }

    fn shifted(&self, dx: f64, dy: f64) -> Rect {
        Rect {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }
}

fn occlusion_basic(
    spec: &StimulusSpec,
    rng: &mut ChaCha8Rng,
    b: &mut Builder,
) -> Result<(), StimulusError> {
    let s = spec.canvas_px as f64;
    let bg = spec.background_gray;
    for g in 0..require_groups(spec)? {
        let (wa, ha) = (
            rng.random_range(0.18..0.28) * s,
            rng.random_range(0.18..0.28) * s,
        );
        let (wb, hb) = (
            rng.random_range(0.14..0.22) * s,
            rng.random_range(0.14..0.22) * s,
        );
        let (shade_a, shade_b) = (rng.random_range(20..=70u8), rng.random_range(190..=240u8));
        let gap = 0.1 * s;
        let overlap = 0.4 * wb;
        let total = wa + gap + wb;
        let a = Rect {
            x: (s - total) / 2.0,
            y: (s - ha) / 2.0,
            w: wa,
            h: ha,
        };
        let by = a.y + rng.random_range(-0.3..0.6) * hb;
        let b_side = Rect {
            x: a.x + wa + gap,
            y: by,
            w: wb,
            h: hb,
        };
        let b_front = Rect {
            x: a.x + wa - overlap,
            ..b_side
        };
        let b_clear = b_front.shifted(overlap + 0.03 * s, 0.0);

        let mut unocc = Canvas::new(spec.canvas_px, bg);
        a.fill(&mut unocc, shade_a);
        b_side.fill(&mut unocc, shade_b);

        let mut occ = Canvas::new(spec.canvas_px, bg);
        a.fill(&mut occ, shade_a);
        b_front.fill(&mut occ, shade_b);

        let mut control = Canvas::new(spec.canvas_px, bg);
        a.fill(&mut control, shade_a);
        if let Some(hidden) = a.intersect(&b_front) {
            hidden.fill(&mut control, bg);
        }
        b_clear.fill(&mut control, shade_b);

        push_triplet(
            b,
            g,
            [
                (Role::Unoccluded, unocc),
                (Role::Occluded, occ),
                (Role::Control, control),
            ],
        );
    }
    Ok(())
}

fn occlusion_depth(
    spec: &StimulusSpec,
    rng: &mut ChaCha8Rng,
    b: &mut Builder,
) -> Result<(), StimulusError> {
    let s = spec.canvas_px as f64;
    let bg = spec.background_gray;
    for g in 0..require_groups(spec)? {
        let (wa, ha) = (
            rng.random_range(0.2..0.3) * s,
            rng.random_range(0.2..0.3) * s,
        );
        let (wb, hb) = (
            rng.random_range(0.2..0.3) * s,
            rng.random_range(0.2..0.3) * s,
        );
        let (shade_a, shade_b) = (rng.random_range(20..=80u8), rng.random_range(180..=240u8));
        let a = Rect {
            x: s / 2.0 - wa + rng.random_range(0.05..0.1) * s,
            y: s / 2.0 - ha + rng.random_range(0.05..0.1) * s,
            w: wa,
            h: ha,
        };
        let bb = Rect {
            x: s / 2.0 - rng.random_range(0.0..0.05) * s,
            y: s / 2.0 - rng.random_range(0.0..0.05) * s,
            w: wb,
            h: hb,
        };
        let mut a_front = Canvas::new(spec.canvas_px, bg);
        bb.fill(&mut a_front, shade_b);
        a.fill(&mut a_front, shade_a);

        let mut b_front = Canvas::new(spec.canvas_px, bg);
        a.fill(&mut b_front, shade_a);
        bb.fill(&mut b_front, shade_b);

        let mut control = a_front.clone();
        if let Some(overlap) = a.intersect(&bb) {
            overlap.fill(&mut control, bg);
        }
        push_triplet(
            b,
            g,
            [
                (Role::Unoccluded, a_front),
                (Role::Occluded, b_front),
                (Role::Control, control),
            ],
        );
    }
    Ok(())
}

fn push_triplet<const N: usize>(b: &mut Builder, g: usize, items: [(Role, Canvas); N]) {
    let gid = format!("g{g:02}");
    for (role, canvas) in items {
        b.push(
            ManifestRecord::new(format!("{gid}_{role}"), role, &gid),
            canvas.into_image(),
        );
    }
}

fn relative_size(
    spec: &StimulusSpec,
    rng: &mut ChaCha8Rng,
    b: &mut Builder,
) -> Result<(), StimulusError> {
    let s = spec.canvas_px as f64;
    let bg = spec.background_gray;
    for g in 0..require_groups(spec)? {
        let bw = rng.random_range(0.25..0.4) * s;
        let bh = rng.random_range(0.12..0.2) * s;
        let pw = rng.random_range(0.3..0.6) * bw;
        let ph = rng.random_range(0.4..0.8) * bh;
        let (shade_body, shade_part) = (rng.random_range(20..=60u8), rng.random_range(160..=220u8));
        let scale = rng.random_range(1.15..1.35);
        let anchor = (s / 2.0, 0.72 * s);
        // part scale giving the same total area change as scaling both
        let part_area = pw * ph;
        let total = bw * bh + part_area;
        let part_scale = (1.0 + (scale * scale - 1.0) * total / part_area).sqrt();

        let draw = |body: f64, part: f64| {
            let mut c = Canvas::new(spec.canvas_px, bg);
            let (w, h) = (bw * body, bh * body);
            let (x0, y0) = (anchor.0 - w / 2.0, anchor.1 - h);
            c.fill_rect(x0, y0, x0 + w, anchor.1, shade_body);
            let (qw, qh) = (pw * part, ph * part);
            c.fill_rect(
                anchor.0 - qw / 2.0,
                y0 - qh,
                anchor.0 + qw / 2.0,
                y0,
                shade_part,
            );
            c
        };
        let gid = format!("g{g:02}");
        b.push(
            ManifestRecord::new(format!("{gid}_base"), Role::Base, &gid).with_value(1.0),
            draw(1.0, 1.0).into_image(),
        );
        b.push(
            ManifestRecord::new(format!("{gid}_proportional"), Role::Proportional, &gid)
                .with_value(scale),
            draw(scale, scale).into_image(),
        );
        b.push(
            ManifestRecord::new(
                format!("{gid}_disproportional"),
                Role::Disproportional,
                &gid,
            )
            .with_value(part_scale),
            draw(1.0, part_scale).into_image(),
        );
    }
    Ok(())
}

fn surface(
    spec: &StimulusSpec,
    rng: &mut ChaCha8Rng,
    b: &mut Builder,
) -> Result<(), StimulusError> {
    let s = spec.canvas_px as f64;
    let bg = spec.background_gray;
    let plane = |tilt: f64| {
        Homography::square_to_quad([
            (0.08 * s, 0.92 * s),
            (0.92 * s, 0.92 * s),
            (0.5 * s + tilt * 0.42 * s, 0.35 * s),
            (0.5 * s - tilt * 0.42 * s, 0.35 * s),
        ])
        .inverse()
    };
    for g in 0..require_groups(spec)? {
        let checks = rng.random_range(6..=10) as f64;
        let stripe_angle = rng.random_range(0.0..PI);
        let stripe_freq = rng.random_range(4.0..8.0);
        let base_tilt = rng.random_range(0.45..0.6);
        let delta = rng.random_range(0.12..0.2);
        let (ox, oy) = (rng.random_range(0.3..0.4), rng.random_range(0.2..0.3));
        let (ow, oh) = (0.3, 0.3);
        let (ca, sa) = (stripe_angle.cos(), stripe_angle.sin());

        let render = |plane_tilt: f64, object_tilt: f64| {
            let hp = plane(plane_tilt);
            let ho = plane(object_tilt);
            let mut c = Canvas::new(spec.canvas_px, bg);
            c.shade_where(|x, y| {
                let (u, v) = ho.apply((x, y));
                if u >= ox && u < ox + ow && v >= oy && v < oy + oh {
                    let k = (((u - ox) * ca + (v - oy) * sa) * stripe_freq / ow).floor() as i64;
                    return Some(if k.rem_euclid(2) == 0 { 25 } else { 230 });
                }
                let (u, v) = hp.apply((x, y));
                if (0.0..1.0).contains(&u) && (0.0..1.0).contains(&v) {
                    let k = (u * checks).floor() as i64 + (v * checks).floor() as i64;
                    return Some(if k.rem_euclid(2) == 0 { 90 } else { 170 });
                }
                None
            });
            c
        };
        push_triplet(
            b,
            g,
            [
                (Role::Base, render(base_tilt, base_tilt)),
                (
                    Role::Congruent,
                    render(base_tilt - delta, base_tilt - delta),
                ),
                (
                    Role::Incongruent,
                    render(base_tilt - delta, base_tilt + delta),
                ),
            ],
        );
    }
    Ok(())
}

struct CuboidDrawing {
    /// Edges shared by two visible faces (they meet at the front vertex).
    inner: Vec<(Point, Point)>,
    outline: Vec<(Point, Point)>,
}

fn cuboid(dims: [f64; 3], yaw: f64, pitch: f64, center: Point, scale: f64) -> CuboidDrawing {
    let vert = |i: usize| -> [f64; 3] {
        [
            if i & 1 == 0 { -0.5 } else { 0.5 } * dims[0],
            if i & 2 == 0 { -0.5 } else { 0.5 } * dims[1],
            if i & 4 == 0 { -0.5 } else { 0.5 } * dims[2],
        ]
    };
    let rotate = |p: [f64; 3]| -> [f64; 3] {
        let (cy, sy) = (yaw.cos(), yaw.sin());
        let (cp, sp) = (pitch.cos(), pitch.sin());
        let x = cy * p[0] + sy * p[2];
        let z = -sy * p[0] + cy * p[2];
        let y = cp * p[1] - sp * z;
        let z = sp * p[1] + cp * z;
        [x, y, z]
    };
    // faces as (axis, side); visible when the rotated outward normal faces +z
    let mut edge_faces: std::collections::BTreeMap<(usize, usize), usize> = Default::default();
    for axis in 0..3 {
        for side in 0..2 {
            let mut n = [0.0; 3];
            n[axis] = if side == 0 { -1.0 } else { 1.0 };
            if rotate(n)[2] <= 1e-9 {
                continue;
            }
            let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
            let base = side << axis;
            let corners = [0, 1 << a1, (1 << a1) | (1 << a2), 1 << a2].map(|m| base | m);
            for k in 0..4 {
                let (i, j) = (corners[k], corners[(k + 1) % 4]);
                *edge_faces.entry((i.min(j), i.max(j))).or_default() += 1;
            }
        }
    }
    let project = |i: usize| -> Point {
        let p = rotate(vert(i));
        (center.0 + scale * p[0], center.1 - scale * p[1])
    };
    let mut inner = Vec::new();
    let mut outline = Vec::new();
    for ((i, j), n) in edge_faces {
        let seg = (project(i), project(j));
        if n == 2 {
            inner.push(seg);
        } else {
            outline.push(seg);
        }
    }
    CuboidDrawing { inner, outline }
}

fn three_d(
    spec: &StimulusSpec,
    rng: &mut ChaCha8Rng,
    b: &mut Builder,
    variant: u8,
) -> Result<(), StimulusError> {
    let s = spec.canvas_px as f64;
    let bg = spec.background_gray;
    let thickness = (s / 90.0).max(1.5);
    let render = |segs: &[(Point, Point)]| {
        let mut c = Canvas::new(spec.canvas_px, bg);
        for &(p, q) in segs {
            c.draw_line(p, q, thickness, 0);
        }
        c
    };
    let flatten = |d: &CuboidDrawing| -> Vec<(Point, Point)> {
        let mut segs = d.outline.clone();
        for &(p, q) in &d.inner {
            // the front vertex is the endpoint shared by all inner edges
            let front_first = d.inner.iter().filter(|e| e.0 == p || e.1 == p).count() > 1;
            let (f, o) = if front_first { (p, q) } else { (q, p) };
            let seg = match variant {
                1 => {
                    let lerp = |t: f64| (f.0 + t * (o.0 - f.0), f.1 + t * (o.1 - f.1));
                    (lerp(0.2), lerp(0.8))
                }
                _ => {
                    // end on the midpoint of an outline edge leaving the outer vertex
                    let nb = d
                        .outline
                        .iter()
                        .find_map(|e| {
                            if e.0 == o {
                                Some(e.1)
                            } else if e.1 == o {
                                Some(e.0)
                            } else {
                                None
                            }
                        })
                        .unwrap_or(o);
                    (f, ((o.0 + nb.0) / 2.0, (o.1 + nb.1) / 2.0))
                }
            };
            segs.push(seg);
        }
        segs
    };
    for g in 0..require_groups(spec)? {
        let dims = [
            rng.random_range(0.8..1.2),
            rng.random_range(0.8..1.2),
            rng.random_range(0.8..1.2),
        ];
        let yaw = rng.random_range(PI / 8.0..3.0 * PI / 8.0);
        let pitch = rng.random_range(0.35..0.6);
        let center = (
            s / 2.0 + rng.random_range(-0.05..0.05) * s,
            s / 2.0 + rng.random_range(-0.05..0.05) * s,
        );
        let scale = 0.3 * s;
        let above = cuboid(dims, yaw, pitch, center, scale);
        let below = cuboid(dims, yaw, -pitch, center, scale);
        let all = |d: &CuboidDrawing| [d.outline.clone(), d.inner.clone()].concat();
        push_triplet(
            b,
            g,
            [
                (Role::SolidA, render(&all(&above))),
                (Role::SolidB, render(&all(&below))),
                (Role::FlatA, render(&flatten(&above))),
                (Role::FlatB, render(&flatten(&below))),
            ],
        );
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Form {
    Circle,
    Diamond,
}

impl Form {
    fn other(self) -> Form {
        match self {
            Form::Circle => Form::Diamond,
            Form::Diamond => Form::Circle,
        }
    }

    /// Point at fraction `t` of the outline perimeter.
    fn outline_point(self, center: Point, r: f64, t: f64) -> Point {
        match self {
            Form::Circle => {
                let a = 2.0 * PI * t - PI / 2.0;
                (center.0 + r * a.cos(), center.1 + r * a.sin())
            }
            Form::Diamond => {
                let corners = [(0.0, -r), (r, 0.0), (0.0, r), (-r, 0.0)];
                let u = (t * 4.0).rem_euclid(4.0);
                let k = u.floor() as usize % 4;
                let f = u - u.floor();
                let (a, b) = (corners[k], corners[(k + 1) % 4]);
                (
                    center.0 + a.0 + f * (b.0 - a.0),
                    center.1 + a.1 + f * (b.1 - a.1),
                )
            }
        }
    }

    fn fill(self, c: &mut Canvas, center: Point, r: f64, v: u8) {
        match self {
            Form::Circle => c.fill_ellipse(center.0, center.1, r, r, v),
            Form::Diamond => c.fill_polygon(
                &[
                    (center.0, center.1 - r),
                    (center.0 + r, center.1),
                    (center.0, center.1 + r),
                    (center.0 - r, center.1),
                ],
                v,
            ),
        }
    }
}

fn navon(spec: &StimulusSpec, rng: &mut ChaCha8Rng, b: &mut Builder) -> Result<(), StimulusError> {
    let s = spec.canvas_px as f64;
    let bg = spec.background_gray;
    for g in 0..require_groups(spec)? {
        let global = if g % 2 == 0 {
            Form::Circle
        } else {
            Form::Diamond
        };
        let local = if (g / 2) % 2 == 0 {
            Form::Circle
        } else {
            Form::Diamond
        };
        let big_r = rng.random_range(0.3..0.38) * s;
        let small_r = rng.random_range(0.035..0.05) * s;
        let n = rng.random_range(12..=16usize);
        let center = (s / 2.0, s / 2.0);
        let draw = |gf: Form, lf: Form| {
            let mut c = Canvas::new(spec.canvas_px, bg);
            for k in 0..n {
                let p = gf.outline_point(center, big_r, k as f64 / n as f64);
                lf.fill(&mut c, p, small_r, 0);
            }
            c
        };
        push_triplet(
            b,
            g,
            [
                (Role::Base, draw(global, local)),
                (Role::GlobalChange, draw(global.other(), local)),
                (Role::LocalChange, draw(global, local.other())),
            ],
        );
    }
    Ok(())
}

fn thatcher(
    spec: &StimulusSpec,
    rng: &mut ChaCha8Rng,
    b: &mut Builder,
) -> Result<(), StimulusError> {
    let s = spec.canvas_px as f64;
    let bg = spec.background_gray;
    for g in 0..require_groups(spec)? {
        let (cx, cy) = (s / 2.0, s / 2.0);
        let face_rx = rng.random_range(0.26..0.32) * s;
        let face_ry = rng.random_range(0.34..0.4) * s;
        let eye_dx = rng.random_range(0.1..0.13) * s;
        let eye_y = cy - rng.random_range(0.09..0.14) * s;
        let eye_rx = rng.random_range(0.04..0.05) * s;
        let eye_ry = rng.random_range(0.02..0.028) * s;
        let mouth_w = rng.random_range(0.08..0.12) * s;
        let mouth_h = rng.random_range(0.03..0.05) * s;
        let mouth_y = cy + rng.random_range(0.14..0.18) * s;
        let line = (s / 80.0).max(1.5);

        let mut c = Canvas::new(spec.canvas_px, bg);
        c.fill_ellipse(cx, cy, face_rx, face_ry, 200);
        let mut regions = Vec::new();
        for side in [-1.0, 1.0] {
            let ex = cx + side * eye_dx;
            c.fill_ellipse(ex, eye_y, eye_rx, eye_ry, 245);
            c.fill_ellipse(ex, eye_y + 0.3 * eye_ry, 0.45 * eye_ry, 0.45 * eye_ry, 10);
            // brow slopes down toward the nose
            let brow_y = eye_y - 2.2 * eye_ry;
            c.draw_line(
                (ex - side * eye_rx, brow_y - 0.25 * eye_ry),
                (ex + side * eye_rx, brow_y + 0.35 * eye_ry),
                line * 1.5,
                40,
            );
            regions.push((
                ex - 1.3 * eye_rx,
                brow_y - 1.2 * eye_ry,
                ex + 1.3 * eye_rx,
                eye_y + 1.4 * eye_ry,
            ));
        }
        c.draw_line(
            (cx, eye_y + eye_ry),
            (cx - 0.02 * s, mouth_y - 0.06 * s),
            line,
            120,
        );
        let arc: Vec<Point> = (0..=16)
            .map(|k| {
                let a = PI * k as f64 / 16.0;
                (cx + mouth_w * a.cos(), mouth_y + mouth_h * a.sin())
            })
            .collect();
        for w in arc.windows(2) {
            c.draw_line(w[0], w[1], line * 1.6, 60);
        }
        regions.push((
            cx - mouth_w - 0.02 * s,
            mouth_y - 0.03 * s,
            cx + mouth_w + 0.02 * s,
            mouth_y + mouth_h + 0.03 * s,
        ));

        let mut thatcherized = c.clone();
        for (x0, y0, x1, y1) in regions {
            thatcherized.flip_region_vertically(
                x0.floor().max(0.0) as u32,
                y0.floor().max(0.0) as u32,
                x1.ceil() as u32,
                y1.ceil() as u32,
            );
        }
        let upright = c.into_image();
        let upright_t = thatcherized.into_image();
        let inverted = imageops::rotate180(&upright);
        let inverted_t = imageops::rotate180(&upright_t);
        let gid = format!("g{g:02}");
        for (role, img) in [
            (Role::Upright, upright),
            (Role::UprightThatcher, upright_t),
            (Role::Inverted, inverted),
            (Role::InvertedThatcher, inverted_t),
        ] {
            b.push(
                ManifestRecord::new(format!("{gid}_{role}"), role, &gid),
                img,
            );
        }
    }
    Ok(())
}
