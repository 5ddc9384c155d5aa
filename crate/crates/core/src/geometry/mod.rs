//! Landmark geometry: point sets, triangulation and face-box preprocessing.

mod delaunay;
mod landmarks;
mod resize;

pub use delaunay::{delaunay_triangulate, incircle, orient, TriangleMesh, EPS_CIRCLE, EPS_DUPLICATE};
pub use landmarks::{average_landmarks, parse_landmarks, LandmarkSet, PointCount};
pub use resize::{crop_and_resize, BoundingBox, PreprocessProfile};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Signed double area of the triangle `(a, b, c)`; positive when counter-clockwise
/// in a y-up frame.
pub fn signed_area2(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("landmark line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("expected {expected} landmark points, got {got}")]
    CountMismatch { expected: String, got: usize },
    #[error("alpha {0} outside [0, 1]")]
    Alpha(f64),
    #[error("points are degenerate: {0}")]
    DegenerateInput(String),
    #[error("points {0} and {1} coincide")]
    DuplicatePoints(usize, usize),
    #[error("bounding box does not intersect the image")]
    EmptyIntersection,
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
    #[error("output size must be positive, got {0}x{1}")]
    OutputSize(usize, usize),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}
