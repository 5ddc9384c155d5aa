//! Landmark-driven face morphing.
//!
//! Both source images are warped piecewise-affinely onto the alpha-averaged
//! landmark geometry (triangulated together with the frame boundary), then
//! cross-dissolved. Warps accumulate in floating point and the blend is
//! quantized once.

use thiserror::Error;

use crate::geometry::{
    average_landmarks, delaunay_triangulate, signed_area2, GeometryError, LandmarkSet, Point2,
};
use crate::image::{quantize, ImageBuffer};

/// Triangles with less than this area (pixels squared) are rejected.
pub const EPS_AREA: f64 = 1e-9;
const EPS_BARY: f64 = 1e-9;

/// Default blend factor.
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MorphError {
    #[error("image sizes differ: {0}x{1}x{2} vs {3}x{4}x{5}")]
    SizeMismatch(usize, usize, usize, usize, usize, usize),
    #[error("landmark counts differ: {0} vs {1}")]
    CountMismatch(usize, usize),
    #[error("degenerate triangle (area {0})")]
    DegenerateTriangle(f64),
    #[error("source has {0} channels, accumulator {1}")]
    ChannelMismatch(usize, usize),
    #[error("alpha {0} outside [0, 1]")]
    Alpha(f64),
    #[error("{0} output samples were not covered by any triangle")]
    Uncovered(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorphSpec {
    pub alpha: f64,
    pub source_a: String,
    pub source_b: String,
    /// Output frame; `None` keeps the input size.
    pub output_size: Option<(usize, usize)>,
}

impl MorphSpec {
    pub fn new(alpha: f64) -> Self {
        Self { alpha, source_a: String::new(), source_b: String::new(), output_size: None }
    }
}

/// Floating-point destination raster; unwritten samples hold NaN.
#[derive(Debug, Clone)]
pub struct WarpAccumulator {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl WarpAccumulator {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self { width, height, channels, data: vec![f64::NAN; width * height * channels] }
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> Option<f64> {
        let v = self.data[(y * self.width + x) * self.channels + c];
        (!v.is_nan()).then_some(v)
    }

    pub fn uncovered(&self) -> usize {
        self.data.iter().filter(|v| v.is_nan()).count()
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Quantize; fails if any sample is still unwritten.
    pub fn to_image(&self) -> Result<ImageBuffer, MorphError> {
        match self.uncovered() {
            0 => Ok(ImageBuffer::new(
                self.width,
                self.height,
                self.channels,
                self.data.iter().map(|&v| quantize(v)).collect(),
            )
            .expect("accumulator shape is valid")),
            n => Err(MorphError::Uncovered(n)),
        }
    }
}

/// Warp the `tri_src` region of `src` onto `tri_dst` in `dst`.
///
/// Every destination pixel whose center lies in `tri_dst` (edges inclusive)
/// is overwritten with the bilinear sample of `src` at the inverse-mapped
/// location; other pixels are untouched.
pub fn warp_triangle(
    src: &ImageBuffer,
    tri_src: [Point2; 3],
    tri_dst: [Point2; 3],
    dst: &mut WarpAccumulator,
) -> Result<(), MorphError> {
    if src.channels() != dst.channels {
        return Err(MorphError::ChannelMismatch(src.channels(), dst.channels));
    }
    for tri in [&tri_src, &tri_dst] {
        let area = signed_area2(tri[0], tri[1], tri[2]).abs() / 2.0;
        if area.is_nan() || area <= EPS_AREA {
            return Err(MorphError::DegenerateTriangle(area));
        }
    }
    let [d0, d1, d2] = tri_dst;
    let denom = signed_area2(d0, d1, d2);
    let min_x = d0.x.min(d1.x).min(d2.x);
    let max_x = d0.x.max(d1.x).max(d2.x);
    let min_y = d0.y.min(d1.y).min(d2.y);
    let max_y = d0.y.max(d1.y).max(d2.y);
    let to_px = |v: f64, limit: usize| (v - 0.5).clamp(0.0, limit as f64 - 1.0);
    let x_lo = to_px(min_x, dst.width).floor() as usize;
    let x_hi = to_px(max_x, dst.width).ceil() as usize;
    let y_lo = to_px(min_y, dst.height).floor() as usize;
    let y_hi = to_px(max_y, dst.height).ceil() as usize;
    let channels = dst.channels;

    for py in y_lo..=y_hi {
        let qy = py as f64 + 0.5;
        for px in x_lo..=x_hi {
            let q = Point2::new(px as f64 + 0.5, qy);
            let l0 = signed_area2(q, d1, d2) / denom;
            let l1 = signed_area2(d0, q, d2) / denom;
            let l2 = 1.0 - l0 - l1;
            if l0 < -EPS_BARY || l1 < -EPS_BARY || l2 < -EPS_BARY {
                continue;
            }
            let sx = l0 * tri_src[0].x + l1 * tri_src[1].x + l2 * tri_src[2].x;
            let sy = l0 * tri_src[0].y + l1 * tri_src[1].y + l2 * tri_src[2].y;
            let base = (py * dst.width + px) * channels;
            for c in 0..channels {
                dst.data[base + c] = src.sample_bilinear(sx, sy, c);
            }
        }
    }
    Ok(())
}

fn tri(points: &[Point2], idx: &[usize; 3]) -> [Point2; 3] {
    [points[idx[0]], points[idx[1]], points[idx[2]]]
}

/// Morph two same-sized face images with their landmark sets.
pub fn morph_pair(
    img_a: &ImageBuffer,
    img_b: &ImageBuffer,
    lm_a: &LandmarkSet,
    lm_b: &LandmarkSet,
    spec: &MorphSpec,
) -> Result<ImageBuffer, MorphError> {
    let (wa, ha, ca) = (img_a.width(), img_a.height(), img_a.channels());
    let (wb, hb, cb) = (img_b.width(), img_b.height(), img_b.channels());
    if (wa, ha, ca) != (wb, hb, cb) {
        return Err(MorphError::SizeMismatch(wa, ha, ca, wb, hb, cb));
    }
    if lm_a.len() != lm_b.len() {
        return Err(MorphError::CountMismatch(lm_a.len(), lm_b.len()));
    }
    let alpha = spec.alpha;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(MorphError::Alpha(alpha));
    }
    let (w, h) = (wa as f64, ha as f64);
    let (out_w, out_h) = spec.output_size.unwrap_or((wa, ha));
    let (scale_x, scale_y) = (out_w as f64 / w, out_h as f64 / h);

    let avg = average_landmarks(lm_a, lm_b, alpha)?.with_frame_boundary(w, h);
    let mesh = delaunay_triangulate(&avg)?;
    let dst_points: Vec<Point2> =
        avg.points().iter().map(|p| Point2::new(p.x * scale_x, p.y * scale_y)).collect();
    let src_a = lm_a.with_frame_boundary(w, h);
    let src_b = lm_b.with_frame_boundary(w, h);

    let mut acc_a = WarpAccumulator::new(out_w, out_h, ca);
    let mut acc_b = WarpAccumulator::new(out_w, out_h, ca);
    for t in mesh.triangles() {
        let dst = tri(&dst_points, t);
        warp_triangle(img_a, tri(src_a.points(), t), dst, &mut acc_a)?;
        warp_triangle(img_b, tri(src_b.points(), t), dst, &mut acc_b)?;
    }
    let uncovered = acc_a.uncovered().max(acc_b.uncovered());
    if uncovered > 0 {
        return Err(MorphError::Uncovered(uncovered));
    }
    let data = acc_a
        .data
        .iter()
        .zip(&acc_b.data)
        .map(|(&a, &b)| quantize((1.0 - alpha) * a + alpha * b))
        .collect();
    Ok(ImageBuffer::new(out_w, out_h, ca, data).expect("output shape is valid"))
}
