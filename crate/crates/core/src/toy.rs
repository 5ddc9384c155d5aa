//! Procedural stand-in faces for desk-scale experiments.
//!
//! Each subject is a smooth colour texture with a skin-toned ellipse, dark
//! blobs at the eyes, brows and mouth, and per-pixel sensor noise. Landmarks
//! follow the 68-point layout (jaw 17, brows 5 + 5, nose 9, eyes 6 + 6,
//! mouth 20) with per-subject pose and per-point jitter.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use thiserror::Error;

use crate::dataset::{DatasetError, DatasetManifest, SampleRecord, Split};
use crate::geometry::{GeometryError, LandmarkSet, Point2};
use crate::image::{quantize, ImageBuffer, ImageError};
use crate::rng::SplitMix64;

pub const TOY_LANDMARKS: usize = 68;
/// Standard deviation of the per-pixel noise, in 8-bit levels.
pub const NOISE_SIGMA: f64 = 6.0;

#[derive(Debug, Error)]
pub enum ToyError {
    #[error("need at least 2 subjects, got {0}")]
    TooFewSubjects(usize),
    #[error("need at least one image per subject")]
    NoCaptures,
    #[error("image size {0}x{1} is too small")]
    TooSmall(usize, usize),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn ring(out: &mut Vec<Point2>, cx: f64, cy: f64, rx: f64, ry: f64, n: usize, start: f64) {
    for k in 0..n {
        let t = start + TAU * k as f64 / n as f64;
        out.push(Point2::new(cx + rx * t.cos(), cy + ry * t.sin()));
    }
}

/// Canonical landmark layout in unit face coordinates.
pub fn template_landmarks() -> Vec<Point2> {
    let mut p = Vec::with_capacity(TOY_LANDMARKS);
    for i in 0..17 {
        let t = PI - PI * i as f64 / 16.0;
        p.push(Point2::new(0.5 + 0.36 * t.cos(), 0.42 + 0.42 * t.sin()));
    }
    for side in [0.22, 0.58] {
        for k in 0..5 {
            let u = k as f64 / 4.0;
            p.push(Point2::new(side + 0.2 * u, 0.30 - 0.04 * (PI * u).sin()));
        }
    }
    for k in 0..4 {
        p.push(Point2::new(0.5, 0.38 + 0.06 * k as f64));
    }
    for k in 0..5 {
        let u = k as f64 / 4.0;
        p.push(Point2::new(0.42 + 0.16 * u, 0.60 + 0.02 * (PI * u).sin()));
    }
    ring(&mut p, 0.34, 0.40, 0.07, 0.03, 6, PI);
    ring(&mut p, 0.66, 0.40, 0.07, 0.03, 6, PI);
    ring(&mut p, 0.5, 0.72, 0.14, 0.05, 12, PI);
    ring(&mut p, 0.5, 0.72, 0.09, 0.025, 8, PI);
    p
}

struct Wave {
    fx: f64,
    fy: f64,
    phase: f64,
    amp: [f64; 3],
}

/// Appearance shared by every capture of one subject.
pub struct ToySubject {
    cx: f64,
    cy: f64,
    scale: f64,
    shape: Vec<Point2>,
    skin: [f64; 3],
    bg: [f64; 3],
    waves: Vec<Wave>,
}

impl ToySubject {
    pub fn new(rng: &mut SplitMix64) -> Self {
        let cx = 0.5 + rng.uniform(-0.03, 0.03);
        let cy = 0.5 + rng.uniform(-0.03, 0.03);
        let scale = rng.uniform(0.9, 1.05);
        let shape = template_landmarks()
            .into_iter()
            .map(|q| Point2::new(q.x + 0.005 * rng.gaussian(), q.y + 0.005 * rng.gaussian()))
            .collect();
        let skin = [rng.uniform(170.0, 230.0), rng.uniform(120.0, 175.0), rng.uniform(95.0, 150.0)];
        let bg = [rng.uniform(30.0, 220.0), rng.uniform(30.0, 220.0), rng.uniform(30.0, 220.0)];
        let waves = (0..3)
            .map(|_| Wave {
                fx: rng.uniform(-6.0, 6.0),
                fy: rng.uniform(-6.0, 6.0),
                phase: rng.uniform(0.0, TAU),
                amp: [rng.uniform(3.0, 10.0), rng.uniform(3.0, 10.0), rng.uniform(3.0, 10.0)],
            })
            .collect();
        Self { cx, cy, scale, shape, skin, bg, waves }
    }

    /// One capture: small pose and scale changes, landmark jitter and fresh noise.
    pub fn capture(&self, width: usize, height: usize, rng: &mut SplitMix64) -> Result<(ImageBuffer, LandmarkSet), ToyError> {
        render(self, width, height, rng)
    }
}

/// A single capture of a freshly drawn subject.
pub fn toy_face(width: usize, height: usize, rng: &mut SplitMix64) -> Result<(ImageBuffer, LandmarkSet), ToyError> {
    let subject = ToySubject::new(rng);
    subject.capture(width, height, rng)
}

fn render(subject: &ToySubject, width: usize, height: usize, rng: &mut SplitMix64) -> Result<(ImageBuffer, LandmarkSet), ToyError> {
    if width < 16 || height < 16 {
        return Err(ToyError::TooSmall(width, height));
    }
    let (w, h) = (width as f64, height as f64);
    let cx = subject.cx + rng.uniform(-0.015, 0.015);
    let cy = subject.cy + rng.uniform(-0.015, 0.015);
    let scale = subject.scale * rng.uniform(0.97, 1.03);
    let points: Vec<Point2> = subject
        .shape
        .iter()
        .map(|q| {
            Point2::new(
                (cx + (q.x - 0.5) * scale + 0.002 * rng.gaussian()) * w,
                (cy + (q.y - 0.5) * scale + 0.002 * rng.gaussian()) * h,
            )
        })
        .collect();
    let (skin, bg, waves) = (subject.skin, subject.bg, &subject.waves);

    // Dark blobs: (center, sigma in pixels, depth per channel).
    let mean = |r: std::ops::Range<usize>| {
        let n = r.len() as f64;
        let (sx, sy) = points[r].iter().fold((0.0, 0.0), |(a, b), p| (a + p.x, b + p.y));
        Point2::new(sx / n, sy / n)
    };
    let unit = w.min(h);
    let mut blobs = vec![
        (mean(36..42), 0.035 * unit, [90.0, 90.0, 80.0]),
        (mean(42..48), 0.035 * unit, [90.0, 90.0, 80.0]),
        (mean(48..60), 0.05 * unit, [20.0, 70.0, 60.0]),
        (mean(31..36), 0.025 * unit, [40.0, 40.0, 40.0]),
    ];
    for p in &points[17..27] {
        blobs.push((*p, 0.018 * unit, [60.0, 60.0, 60.0]));
    }

    let (fcx, fcy) = (cx * w, (cy + 0.02) * h);
    let (rx, ry) = (0.38 * scale * w, 0.46 * scale * h);
    let mut data = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        let py = y as f64 + 0.5;
        for x in 0..width {
            let px = x as f64 + 0.5;
            let d = (((px - fcx) / rx).powi(2) + ((py - fcy) / ry).powi(2)).sqrt();
            let face = ((1.08 - d) / 0.16).clamp(0.0, 1.0);
            let (u, v) = (px / w, py / h);
            let mut shade = [0.0; 3];
            for &(c, s, depth) in &blobs {
                let g = (-((px - c.x).powi(2) + (py - c.y).powi(2)) / (2.0 * s * s)).exp();
                for k in 0..3 {
                    shade[k] += depth[k] * g;
                }
            }
            for k in 0..3 {
                let tex: f64 = waves.iter().map(|wv| wv.amp[k] * (TAU * (wv.fx * u + wv.fy * v) + wv.phase).sin()).sum();
                let base = face * (skin[k] - shade[k]) + (1.0 - face) * bg[k];
                data.push(quantize(base + tex + NOISE_SIGMA * rng.gaussian()));
            }
        }
    }
    Ok((ImageBuffer::new(width, height, 3, data)?, LandmarkSet::new(points)?))
}

/// Write `images_per_subject` captures of each of `n_subjects` faces as
/// `<prefix>NNN_K.png` plus `<prefix>NNN_K.lm.txt` into `dir` and return their
/// bona fide manifest (paths relative to `dir`, all records in `Train`).
pub fn make_toy_corpus(
    dir: &Path,
    n_subjects: usize,
    images_per_subject: usize,
    size: (usize, usize),
    seed: u64,
    prefix: &str,
    provenance: &[(&str, &str)],
) -> Result<DatasetManifest, ToyError> {
    if n_subjects < 2 {
        return Err(ToyError::TooFewSubjects(n_subjects));
    }
    if images_per_subject == 0 {
        return Err(ToyError::NoCaptures);
    }
    std::fs::create_dir_all(dir).map_err(|source| ToyError::Io { path: dir.display().to_string(), source })?;
    let header: String = provenance.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    let mut records = Vec::with_capacity(n_subjects * images_per_subject);
    for i in 0..n_subjects {
        let subject = format!("{prefix}{i:03}");
        let mut rng = SplitMix64::derive(seed, i as u64);
        let face = ToySubject::new(&mut rng);
        for k in 0..images_per_subject {
            let id = format!("{subject}_{k}");
            let (img, lm) = face.capture(size.0, size.1, &mut rng)?;
            let png = format!("{id}.png");
            let lm_name = format!("{id}.lm.txt");
            img.write_png(&dir.join(&png), provenance)?;
            let lm_path = dir.join(&lm_name);
            let text = lm.to_text((!header.is_empty()).then_some(header.trim_end()));
            std::fs::write(&lm_path, text).map_err(|source| ToyError::Io { path: lm_path.display().to_string(), source })?;
            let mut rec = SampleRecord::bona_fide(&id, png, &subject);
            rec.landmarks_path = Some(lm_name.into());
            records.push(rec);
        }
    }
    let mut m = DatasetManifest::new(prefix, records, Split::Train)?;
    m.set_root(dir);
    Ok(m)
}
