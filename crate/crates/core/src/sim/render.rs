//! Orthographic top-down rasterizer and stratified point sampler.
//!
//! Pixel centers sit symmetrically about the camera's lateral axis, so
//! mirrored scenes rasterize to exactly flipped images.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{RigidTransform, Vec3};
use crate::symmetry::{ImageGrid, PointCloud};

use super::LINK_HALF_WIDTH;

pub const ARM_INTENSITY: f64 = 0.6;
pub const OBJECT_INTENSITY: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Vec3,
    pub b: Vec3,
    /// Sampling stratum; mirrored links share a stratum so they draw the
    /// same jitter.
    pub stratum: usize,
}

/// Robot-frame primitives to draw.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scene {
    pub segments: Vec<Segment>,
    /// `(center, radius)`.
    pub discs: Vec<(Vec3, f64)>,
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let (px, py) = (p.0 - a.0, p.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        ((px * dx + py * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (ex, ey) = (px - t * dx, py - t * dy);
    (ex * ex + ey * ey).sqrt()
}

struct Raster {
    width: usize,
    height: usize,
    pixel: f64,
    data: Vec<f64>,
}

impl Raster {
    /// Camera-plane coordinates `(u, v)` of a pixel center.
    fn center(&self, row: usize, col: usize) -> (f64, f64) {
        let u = (row as f64 + 0.5 - self.height as f64 / 2.0) * self.pixel;
        let v = (self.width as f64 / 2.0 - col as f64 - 0.5) * self.pixel;
        (u, v)
    }

    fn row_range(&self, lo: f64, hi: f64) -> (usize, usize) {
        let h = self.height as f64;
        let a = (lo / self.pixel + h / 2.0 - 1.5).floor().max(0.0) as usize;
        let b = ((hi / self.pixel + h / 2.0 + 1.5).ceil().max(0.0) as usize).min(self.height);
        (a, b)
    }

    fn col_range(&self, lo: f64, hi: f64) -> (usize, usize) {
        let w = self.width as f64;
        let a = (w / 2.0 - hi / self.pixel - 1.5).floor().max(0.0) as usize;
        let b = ((w / 2.0 - lo / self.pixel + 1.5).ceil().max(0.0) as usize).min(self.width);
        (a, b)
    }

    /// Max-composites an anti-aliased shape given its distance field.
    fn draw(&mut self, bbox: [f64; 4], radius: f64, level: f64, dist: impl Fn((f64, f64)) -> f64) {
        let margin = radius + self.pixel;
        let (r0, r1) = self.row_range(bbox[0] - margin, bbox[1] + margin);
        let (c0, c1) = self.col_range(bbox[2] - margin, bbox[3] + margin);
        for row in r0..r1 {
            for col in c0..c1 {
                let d = dist(self.center(row, col));
                let cover = ((radius - d) / self.pixel + 0.5).clamp(0.0, 1.0);
                let px = &mut self.data[row * self.width + col];
                *px = px.max(cover * level);
            }
        }
    }
}

fn to_camera_plane(t_cam: &RigidTransform, p: Vec3) -> (f64, f64) {
    let c = t_cam.apply(p);
    (c.x, c.y)
}

/// Grayscale rendering, `width × height × 1`. Rows run along camera `x`,
/// columns along camera `y`; `field_of_view` is the lateral extent in m.
pub fn render_image(
    scene: &Scene,
    t_cam: &RigidTransform,
    width: usize,
    height: usize,
    field_of_view: f64,
) -> ImageGrid {
    let mut r = Raster {
        width,
        height,
        pixel: field_of_view / width as f64,
        data: vec![0.0; width * height],
    };
    for s in &scene.segments {
        let (a, b) = (to_camera_plane(t_cam, s.a), to_camera_plane(t_cam, s.b));
        let bbox = [a.0.min(b.0), a.0.max(b.0), a.1.min(b.1), a.1.max(b.1)];
        r.draw(bbox, LINK_HALF_WIDTH, ARM_INTENSITY, |p| segment_distance(p, a, b));
    }
    for &(center, radius) in &scene.discs {
        let c = to_camera_plane(t_cam, center);
        let bbox = [c.0, c.0, c.1, c.1];
        r.draw(bbox, radius, OBJECT_INTENSITY, |p| {
            ((p.0 - c.0).powi(2) + (p.1 - c.1).powi(2)).sqrt()
        });
    }
    ImageGrid {
        width,
        height,
        channels: 1,
        data: r.data,
    }
}

/// Stratified samples along every segment plus evenly spaced points on each
/// disc boundary, canonically sorted. Discs get a quarter of the budget
/// (all of it when there are no segments) plus any remainder.
pub fn render_pointcloud(scene: &Scene, n_points: usize, seed: u64) -> PointCloud {
    let n_seg = scene.segments.len();
    let disc_share = match (n_seg, scene.discs.is_empty()) {
        (_, true) => 0,
        (0, false) => n_points,
        (_, false) => n_points / 4,
    };
    let per_segment = if n_seg == 0 { 0 } else { (n_points - disc_share) / n_seg };
    let mut extra = n_points - disc_share - per_segment * n_seg;
    let disc_share = if scene.discs.is_empty() {
        0
    } else {
        disc_share + std::mem::take(&mut extra)
    };

    let strata = scene.segments.iter().map(|s| s.stratum + 1).max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter: Vec<f64> = (0..strata * (per_segment + 1)).map(|_| rng.gen::<f64>()).collect();

    let mut points = Vec::with_capacity(n_points);
    for (i, s) in scene.segments.iter().enumerate() {
        let count = per_segment + usize::from(i < extra);
        let row = &jitter[s.stratum * (per_segment + 1)..];
        for k in 0..count {
            let t = (k as f64 + row[k]) / count as f64;
            points.push(s.a + (s.b - s.a).scale(t));
        }
    }
    let n_discs = scene.discs.len();
    for (i, &(c, radius)) in scene.discs.iter().enumerate() {
        let m = disc_share / n_discs + usize::from(i < disc_share % n_discs);
        for k in 0..m {
            // Angles symmetric about zero, so mirrored discs give mirrored sets.
            let theta = std::f64::consts::PI * (2.0 * k as f64 + 1.0 - m as f64) / m as f64;
            points.push(c + Vec3::new(radius * theta.cos(), radius * theta.sin(), 0.0));
        }
    }
    let mut cloud = PointCloud::new(points);
    cloud.sort_canonical();
    cloud
}
