//! Delaunay triangulation of small landmark sets.
//!
//! Construction is a lexicographic sweep (every new point is outside the
//! current hull, so it is joined to the strictly visible hull edges) followed
//! by Lawson edge flips until every interior edge is locally Delaunay. The
//! predicates run on coordinates scaled uniformly into the unit square.
//!
//! Co-circular configurations admit several Delaunay triangulations. Groups of
//! triangles joined by edges whose in-circle determinant is within
//! [`EPS_CIRCLE`] of zero form a convex co-circular polygon; each such polygon
//! is re-triangulated to the lexicographically smallest sorted list of sorted
//! index triples, which makes the whole mesh canonical.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use super::{signed_area2, GeometryError, LandmarkSet, Point2};

/// In-circle tolerance on unit-square-normalized coordinates.
pub const EPS_CIRCLE: f64 = 1e-9;
/// Two input points closer than this (pixels) are rejected.
pub const EPS_DUPLICATE: f64 = 1e-6;
const EPS_ORIENT: f64 = 1e-12;
const MAX_FLIPS: usize = 1_000_000;

/// Triangles as ascending index triples, stored in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriangleMesh {
    triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// One `i j k` triple per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.triangles {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        out
    }
}

/// Orientation predicate; positive for counter-clockwise (y-up) order.
pub fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    signed_area2(a, b, c)
}

/// In-circle determinant: for counter-clockwise `(a, b, c)`, positive iff `d`
/// lies inside their circumcircle.
pub fn incircle(a: Point2, b: Point2, c: Point2, d: Point2) -> f64 {
    let (adx, ady) = (a.x - d.x, a.y - d.y);
    let (bdx, bdy) = (b.x - d.x, b.y - d.y);
    let (cdx, cdy) = (c.x - d.x, c.y - d.y);
    let alift = adx * adx + ady * ady;
    let blift = bdx * bdx + bdy * bdy;
    let clift = cdx * cdx + cdy * cdy;
    alift * (bdx * cdy - bdy * cdx) + blift * (cdx * ady - cdy * adx) + clift * (adx * bdy - ady * bdx)
}

/// Scale points uniformly into `[0, 1]^2`.
fn normalize(points: &[Point2]) -> Vec<Point2> {
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        min_x = min_x.min(p.x);
        min_y = min_y.min(p.y);
        max_x = max_x.max(p.x);
        max_y = max_y.max(p.y);
    }
    let scale = (max_x - min_x).max(max_y - min_y);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    points
        .iter()
        .map(|p| Point2::new((p.x - min_x) / scale, (p.y - min_y) / scale))
        .collect()
}

pub fn delaunay_triangulate(set: &LandmarkSet) -> Result<TriangleMesh, GeometryError> {
    let raw = set.points();
    if raw.len() < 3 {
        return Err(GeometryError::DegenerateInput(format!("{} points", raw.len())));
    }
    for i in 0..raw.len() {
        for j in i + 1..raw.len() {
            if raw[i].dist(raw[j]) < EPS_DUPLICATE {
                return Err(GeometryError::DuplicatePoints(i, j));
            }
        }
    }
    let pts = normalize(raw);
    let mut tris = sweep(&pts)?;
    lawson_flip(&pts, &mut tris)?;
    let mut tris = canonicalize(&pts, tris);
    for t in &mut tris {
        t.sort_unstable();
    }
    tris.sort_unstable();
    Ok(TriangleMesh { triangles: tris })
}

fn ccw(pts: &[Point2], a: usize, b: usize, c: usize) -> [usize; 3] {
    if orient(pts[a], pts[b], pts[c]) > 0.0 {
        [a, b, c]
    } else {
        [b, a, c]
    }
}

fn sweep(pts: &[Point2]) -> Result<Vec<[usize; 3]>, GeometryError> {
    let n = pts.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        pts[i]
            .x
            .total_cmp(&pts[j].x)
            .then(pts[i].y.total_cmp(&pts[j].y))
            .then(i.cmp(&j))
    });

    // Leading run of collinear points, closed off by the first point off their line.
    let (a0, a1) = (pts[order[0]], pts[order[1]]);
    let base = a0.dist(a1);
    let first_off = (2..n)
        .find(|&k| (orient(a0, a1, pts[order[k]]) / base).abs() > EPS_ORIENT)
        .ok_or_else(|| GeometryError::DegenerateInput("all points are collinear".into()))?;
    // Points between order[1] and order[first_off] are on the line; the true
    // chain is everything before first_off in sweep order.
    let apex = order[first_off];
    let chain: Vec<usize> = order[..first_off].to_vec();
    let mut tris = Vec::with_capacity(2 * n);
    for w in chain.windows(2) {
        let t = ccw(pts, w[0], w[1], apex);
        if orient(pts[t[0]], pts[t[1]], pts[t[2]]) <= 0.0 {
            return Err(GeometryError::DegenerateInput("nearly collinear leading points".into()));
        }
        tris.push(t);
    }
    let mut hull: Vec<usize> = if orient(a0, pts[*chain.last().unwrap()], pts[apex]) > 0.0 {
        chain.iter().copied().chain(std::iter::once(apex)).collect()
    } else {
        chain.iter().rev().copied().chain(std::iter::once(apex)).collect()
    };

    for &p in &order[first_off + 1..] {
        let l = hull.len();
        let edge_orient = |i: usize| orient(pts[hull[i]], pts[hull[(i + 1) % l]], pts[p]);
        let mut visible: Vec<bool> = (0..l).map(|i| edge_orient(i) < -EPS_ORIENT).collect();
        if !visible.iter().any(|&v| v) {
            visible = (0..l).map(|i| edge_orient(i) < 0.0).collect();
        }
        let start = (0..l)
            .find(|&i| visible[i] && !visible[(i + l - 1) % l])
            .ok_or_else(|| GeometryError::DegenerateInput(format!("point {p} sees no hull edge")))?;
        let mut count = 0;
        while count < l && visible[(start + count) % l] {
            let i = (start + count) % l;
            tris.push([hull[(i + 1) % l], hull[i], p]);
            count += 1;
        }
        let mut next = Vec::with_capacity(l + 1);
        next.push(hull[start]);
        next.push(p);
        next.extend((count..l).map(|k| hull[(start + k) % l]));
        hull = next;
    }
    Ok(tris)
}

type EdgeMap = HashMap<(usize, usize), (usize, usize)>;

/// Directed edge `(a, b)` -> (triangle index, opposite vertex).
fn edge_map(tris: &[[usize; 3]]) -> EdgeMap {
    let mut map = HashMap::with_capacity(tris.len() * 3);
    for (t, tri) in tris.iter().enumerate() {
        for k in 0..3 {
            map.insert((tri[k], tri[(k + 1) % 3]), (t, tri[(k + 2) % 3]));
        }
    }
    map
}

fn lawson_flip(pts: &[Point2], tris: &mut [[usize; 3]]) -> Result<(), GeometryError> {
    for _ in 0..MAX_FLIPS {
        let map = edge_map(tris);
        let mut flip = None;
        'scan: for (t, tri) in tris.iter().enumerate() {
            for k in 0..3 {
                let (a, b, c) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
                if a > b {
                    continue;
                }
                let Some(&(u, d)) = map.get(&(b, a)) else { continue };
                let (pa, pb, pc, pd) = (pts[a], pts[b], pts[c], pts[d]);
                if incircle(pa, pb, pc, pd) > EPS_CIRCLE
                    && orient(pa, pd, pc) > EPS_ORIENT
                    && orient(pd, pb, pc) > EPS_ORIENT
                {
                    flip = Some((t, u, a, b, c, d));
                    break 'scan;
                }
            }
        }
        match flip {
            None => return Ok(()),
            Some((t, u, a, b, c, d)) => {
                tris[t] = [a, d, c];
                tris[u] = [d, b, c];
            }
        }
    }
    Err(GeometryError::DegenerateInput("edge flipping did not converge".into()))
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn canonicalize(pts: &[Point2], tris: Vec<[usize; 3]>) -> Vec<[usize; 3]> {
    let map = edge_map(&tris);
    let mut parent: Vec<usize> = (0..tris.len()).collect();
    for (t, tri) in tris.iter().enumerate() {
        for k in 0..3 {
            let (a, b, c) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
            if a > b {
                continue;
            }
            if let Some(&(u, d)) = map.get(&(b, a)) {
                if incircle(pts[a], pts[b], pts[c], pts[d]).abs() <= EPS_CIRCLE {
                    let (ra, rb) = (find(&mut parent, t), find(&mut parent, u));
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for t in 0..tris.len() {
        let r = find(&mut parent, t);
        groups.entry(r).or_default().push(t);
    }

    let mut out = Vec::with_capacity(tris.len());
    for members in groups.values() {
        let group: Vec<[usize; 3]> = members.iter().map(|&t| tris[t]).collect();
        if group.len() > 1 {
            if let Some(poly) = group_polygon(pts, &group) {
                out.extend(lexmin_polygon_triangulation(&poly));
                continue;
            }
        }
        out.extend(group);
    }
    out
}

/// Boundary of a group of counter-clockwise triangles, if it is a strictly
/// convex polygon with no interior vertices.
fn group_polygon(pts: &[Point2], group: &[[usize; 3]]) -> Option<Vec<usize>> {
    let directed: Vec<(usize, usize)> = group
        .iter()
        .flat_map(|t| (0..3).map(move |k| (t[k], t[(k + 1) % 3])))
        .collect();
    let mut next: HashMap<usize, usize> = HashMap::new();
    for &(a, b) in &directed {
        if !directed.contains(&(b, a)) && next.insert(a, b).is_some() {
            return None;
        }
    }
    let start = *next.keys().min()?;
    let mut poly = vec![start];
    let mut cur = next[&start];
    while cur != start {
        if poly.len() > next.len() {
            return None;
        }
        poly.push(cur);
        cur = *next.get(&cur)?;
    }
    let k = poly.len();
    if k != next.len() || k != group.len() + 2 {
        return None;
    }
    let convex = (0..k).all(|i| orient(pts[poly[i]], pts[poly[(i + 1) % k]], pts[poly[(i + 2) % k]]) > EPS_ORIENT);
    convex.then_some(poly)
}

/// Lexicographically smallest triangulation of a convex polygon whose vertices
/// are given in cyclic order.
///
/// `best[i][j]` is the optimum for the sub-polygon `poly[i..=j]`. Sub-polygons
/// on either side of a chosen triangle are independent, and merging sorted
/// lists preserves lexicographic order, so optimal parts compose.
fn lexmin_polygon_triangulation(poly: &[usize]) -> Vec<[usize; 3]> {
    let k = poly.len();
    let mut best: Vec<Vec<Vec<[usize; 3]>>> = vec![vec![Vec::new(); k]; k];
    for gap in 2..k {
        for i in 0..k - gap {
            let j = i + gap;
            let mut winner: Option<Vec<[usize; 3]>> = None;
            for m in i + 1..j {
                let mut tri = [poly[i], poly[m], poly[j]];
                tri.sort_unstable();
                let mut cand = Vec::with_capacity(gap - 1);
                cand.extend_from_slice(&best[i][m]);
                cand.extend_from_slice(&best[m][j]);
                cand.push(tri);
                cand.sort_unstable();
                if winner.as_ref().is_none_or(|w| cand < *w) {
                    winner = Some(cand);
                }
            }
            best[i][j] = winner.unwrap_or_default();
        }
    }
    std::mem::take(&mut best[0][k - 1])
}
