use std::fmt::Write as _;
use std::path::Path;

use super::{GeometryError, Point2};

/// How many points a landmark file must contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointCount {
    Exactly(usize),
    AtLeast(usize),
}

impl Default for PointCount {
    /// The common 68-point facial landmark convention.
    fn default() -> Self {
        PointCount::Exactly(68)
    }
}

impl PointCount {
    fn accepts(self, n: usize) -> bool {
        match self {
            PointCount::Exactly(k) => n == k,
            PointCount::AtLeast(k) => n >= k,
        }
    }

    fn describe(self) -> String {
        match self {
            PointCount::Exactly(k) => k.to_string(),
            PointCount::AtLeast(k) => format!("at least {k}"),
        }
    }
}

/// Ordered 2-D landmark points in pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    points: Vec<Point2>,
}

impl LandmarkSet {
    pub fn new(points: Vec<Point2>) -> Result<Self, GeometryError> {
        if points.len() < 3 {
            return Err(GeometryError::CountMismatch { expected: "at least 3".into(), got: points.len() });
        }
        if let Some(i) = points.iter().position(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(GeometryError::DegenerateInput(format!("point {i} is not finite")));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Append the four frame corners and four edge midpoints of a `width x height`
    /// image so a triangulation covers the whole frame.
    pub fn with_frame_boundary(&self, width: f64, height: f64) -> LandmarkSet {
        let (w, h) = (width, height);
        let mut points = self.points.clone();
        points.extend_from_slice(&[
            Point2::new(0.0, 0.0),
            Point2::new(w / 2.0, 0.0),
            Point2::new(w, 0.0),
            Point2::new(w, h / 2.0),
            Point2::new(w, h),
            Point2::new(w / 2.0, h),
            Point2::new(0.0, h),
            Point2::new(0.0, h / 2.0),
        ]);
        LandmarkSet { points }
    }

    /// Text form: one `x y` pair per line.
    pub fn to_text(&self, header: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(h) = header {
            for line in h.lines() {
                let _ = writeln!(out, "# {line}");
            }
        }
        for p in &self.points {
            // `{}` on f64 prints the shortest string that round-trips exactly.
            let _ = writeln!(out, "{} {}", p.x, p.y);
        }
        out
    }

    pub fn parse(text: &str, count: PointCount) -> Result<Self, GeometryError> {
        let mut points = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| GeometryError::Parse { line: idx + 1, msg };
            let mut fields = line.split_whitespace();
            let (Some(xs), Some(ys), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(err(format!("expected `x y`, got `{line}`")));
            };
            let x: f64 = xs.parse().map_err(|_| err(format!("bad number `{xs}`")))?;
            let y: f64 = ys.parse().map_err(|_| err(format!("bad number `{ys}`")))?;
            if !x.is_finite() || !y.is_finite() {
                return Err(err("non-finite coordinate".into()));
            }
            points.push(Point2::new(x, y));
        }
        if !count.accepts(points.len()) || points.len() < 3 {
            return Err(GeometryError::CountMismatch { expected: count.describe(), got: points.len() });
        }
        Ok(Self { points })
    }
}

pub fn parse_landmarks(path: &Path, count: PointCount) -> Result<LandmarkSet, GeometryError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| GeometryError::Io { path: path.display().to_string(), msg: e.to_string() })?;
    LandmarkSet::parse(&text, count)
}

/// Pointwise `(1 - alpha) * a + alpha * b`.
pub fn average_landmarks(a: &LandmarkSet, b: &LandmarkSet, alpha: f64) -> Result<LandmarkSet, GeometryError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(GeometryError::Alpha(alpha));
    }
    if a.len() != b.len() {
        return Err(GeometryError::CountMismatch { expected: a.len().to_string(), got: b.len() });
    }
    let points = a
        .points
        .iter()
        .zip(&b.points)
        .map(|(p, q)| Point2::new((1.0 - alpha) * p.x + alpha * q.x, (1.0 - alpha) * p.y + alpha * q.y))
        .collect();
    Ok(LandmarkSet { points })
}
