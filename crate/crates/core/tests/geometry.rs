mod common;

use common::{general_position_points, hull_area, strictly_inside_circumcircle, triangle_area};
use morphkit_core::geometry::{
    average_landmarks, crop_and_resize, delaunay_triangulate, BoundingBox, GeometryError, LandmarkSet, Point2, PointCount,
};
use morphkit_core::image::ImageBuffer;
use morphkit_core::rng::SplitMix64;
use proptest::prelude::*;

fn check_delaunay(points: &[Point2]) {
    let set = LandmarkSet::new(points.to_vec()).unwrap();
    let mesh = delaunay_triangulate(&set).unwrap();
    let mut area = 0.0;
    for t in mesh.triangles() {
        let (a, b, c) = (points[t[0]], points[t[1]], points[t[2]]);
        area += triangle_area(a, b, c);
        for (k, &d) in points.iter().enumerate() {
            if !t.contains(&k) {
                assert!(!strictly_inside_circumcircle(a, b, c, d, 1e-9), "point {k} inside circumcircle of {t:?}");
            }
        }
    }
    let hull = hull_area(points);
    assert!((area - hull).abs() <= 1e-6 * hull, "area {area} vs hull {hull}");
}

#[test]
fn random_sets_are_delaunay_and_cover_hull() {
    let mut rng = SplitMix64::new(11);
    for _ in 0..300 {
        let n = 3 + rng.below(6) as usize;
        check_delaunay(&general_position_points(&mut rng, n));
    }
}

#[test]
fn triangle_count_matches_euler() {
    // Points on a circle except one center: hull has n - 1 vertices.
    let mut pts: Vec<Point2> = (0..7)
        .map(|k| {
            let t = 0.3 + std::f64::consts::TAU * k as f64 / 7.0;
            Point2::new(50.0 + 40.0 * t.cos(), 50.0 + 30.0 * t.sin())
        })
        .collect();
    pts.push(Point2::new(52.0, 49.0));
    let mesh = delaunay_triangulate(&LandmarkSet::new(pts.clone()).unwrap()).unwrap();
    assert_eq!(mesh.len(), 2 * pts.len() - 2 - 7);
    check_delaunay(&pts);
}

#[test]
fn square_tie_is_canonical_under_relabeling() {
    let sq = [Point2::new(0.0, 0.0), Point2::new(10.0, 0.0), Point2::new(10.0, 10.0), Point2::new(0.0, 10.0)];
    let mesh = delaunay_triangulate(&LandmarkSet::new(sq.to_vec()).unwrap()).unwrap();
    assert_eq!(mesh.triangles(), &[[0, 1, 2], [0, 2, 3]]);
    // Rotated labels: the lexicographically smallest split is again 0-2.
    let rot = vec![sq[1], sq[2], sq[3], sq[0]];
    let a = delaunay_triangulate(&LandmarkSet::new(rot).unwrap()).unwrap();
    assert_eq!(a.triangles(), &[[0, 1, 2], [0, 2, 3]]);
}

#[test]
fn degenerate_inputs_are_rejected() {
    let line = (0..5).map(|k| Point2::new(k as f64, 2.0 * k as f64)).collect();
    assert!(matches!(delaunay_triangulate(&LandmarkSet::new(line).unwrap()), Err(GeometryError::DegenerateInput(_))));
    let dup = vec![Point2::new(1.0, 1.0), Point2::new(5.0, 1.0), Point2::new(1.0, 1.0), Point2::new(3.0, 4.0)];
    assert!(matches!(delaunay_triangulate(&LandmarkSet::new(dup).unwrap()), Err(GeometryError::DuplicatePoints(0, 2))));
    assert!(matches!(
        LandmarkSet::new(vec![Point2::new(1.0, 1.0), Point2::new(5.0, 1.0)]),
        Err(GeometryError::CountMismatch { got: 2, .. })
    ));
}

#[test]
fn frame_boundary_mesh_covers_the_frame() {
    let mut rng = SplitMix64::new(3);
    let pts: Vec<Point2> = (0..20).map(|_| Point2::new(rng.uniform(5.0, 59.0), rng.uniform(5.0, 43.0))).collect();
    let set = LandmarkSet::new(pts).unwrap().with_frame_boundary(64.0, 48.0);
    assert_eq!(set.len(), 28);
    let mesh = delaunay_triangulate(&set).unwrap();
    let p = set.points();
    let area: f64 = mesh.triangles().iter().map(|t| triangle_area(p[t[0]], p[t[1]], p[t[2]])).sum();
    assert!((area - 64.0 * 48.0).abs() < 1e-6 * 64.0 * 48.0);
}

#[test]
fn landmark_text_round_trip_and_errors() {
    let set = LandmarkSet::new(vec![Point2::new(0.1, 2.5), Point2::new(1.0 / 3.0, 7.0), Point2::new(1e-7, 3.0e5)]).unwrap();
    let back = LandmarkSet::parse(&set.to_text(Some("seed=4")), PointCount::Exactly(3)).unwrap();
    assert_eq!(back, set);
    assert!(matches!(LandmarkSet::parse("1 2\n3\n", PointCount::AtLeast(1)), Err(GeometryError::Parse { line: 2, .. })));
    assert!(matches!(LandmarkSet::parse("1 2\n3 4\n5 6\n", PointCount::default()), Err(GeometryError::CountMismatch { got: 3, .. })));
}

#[test]
fn averaging_is_linear_in_alpha() {
    let a = LandmarkSet::new(vec![Point2::new(0.0, 0.0), Point2::new(10.0, 4.0), Point2::new(1.0, 1.0)]).unwrap();
    let b = LandmarkSet::new(vec![Point2::new(4.0, 8.0), Point2::new(0.0, 0.0), Point2::new(1.0, 1.0)]).unwrap();
    assert_eq!(average_landmarks(&a, &b, 0.0).unwrap(), a);
    assert_eq!(average_landmarks(&a, &b, 1.0).unwrap(), b);
    let mid = average_landmarks(&a, &b, 0.25).unwrap();
    assert_eq!(mid.points()[0], Point2::new(1.0, 2.0));
    assert_eq!(mid.points()[1], Point2::new(7.5, 3.0));
    assert!(matches!(average_landmarks(&a, &b, 1.5), Err(GeometryError::Alpha(_))));
}

#[test]
fn crop_and_resize_identity_and_errors() {
    let img = ImageBuffer::from_fn(12, 9, 3, |x, y, c| (x * 20 + y * 3 + c) as u8).unwrap();
    let same = crop_and_resize(&img, &BoundingBox::full(&img), 12, 9).unwrap();
    assert_eq!(same, img);
    let outside = BoundingBox::new(100.0, 100.0, 5.0, 5.0).unwrap();
    assert!(matches!(crop_and_resize(&img, &outside, 4, 4), Err(GeometryError::EmptyIntersection)));
    assert!(matches!(crop_and_resize(&img, &BoundingBox::full(&img), 0, 4), Err(GeometryError::OutputSize(0, 4))));
    assert!(BoundingBox::new(0.0, 0.0, -1.0, 3.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mesh_covers_hull_of_arbitrary_points(seed in any::<u64>(), n in 3usize..30) {
        let mut rng = SplitMix64::new(seed);
        let pts: Vec<Point2> = (0..n).map(|_| Point2::new(rng.uniform(0.0, 200.0), rng.uniform(0.0, 100.0))).collect();
        let set = LandmarkSet::new(pts.clone()).unwrap();
        if let Ok(mesh) = delaunay_triangulate(&set) {
            let area: f64 = mesh.triangles().iter().map(|t| triangle_area(pts[t[0]], pts[t[1]], pts[t[2]])).sum();
            let hull = hull_area(&pts);
            prop_assert!((area - hull).abs() <= 1e-6 * hull.max(1.0));
            for t in mesh.triangles() {
                prop_assert!(t[0] < t[1] && t[1] < t[2]);
            }
        }
    }
}
