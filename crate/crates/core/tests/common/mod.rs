//! Independent reference implementations shared by the integration tests and
//! the acceptance runner. Only plain data types come from the library, except
//! in the gradient checker, which differentiates the library's loss
//! numerically.
#![allow(dead_code)]

use morphkit_core::dataset::{Label, MorphMethod};
use morphkit_core::geometry::Point2;
use morphkit_core::image::ImageBuffer;
use morphkit_core::rng::SplitMix64;
use morphkit_core::scorer::{ScoreFile, ScoreRecord};

/// Size-`n` score file drawn from a few score levels so that ties are common.
pub fn random_score_file(rng: &mut SplitMix64, n: usize) -> ScoreFile {
    let levels = 1 + rng.below(n as u64) as usize;
    let shift = rng.uniform(-0.3, 0.3);
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        // The first two records pin both classes.
        let attack = match i {
            0 => true,
            1 => false,
            _ => rng.next_f64() < 0.5,
        };
        let raw = if rng.next_f64() < 0.3 {
            (rng.below(levels as u64) as f64 + 0.5) / levels as f64
        } else {
            rng.next_f64()
        };
        let score = if attack { (raw + shift).clamp(0.0, 1.0) } else { raw };
        records.push(ScoreRecord {
            sample_id: format!("r{i}"),
            label: if attack { Label::Attack } else { Label::BonaFide },
            morph_method: if attack { MorphMethod::OpenCV } else { MorphMethod::None },
            score,
        });
    }
    ScoreFile::new(records)
}

/// `(apcer, bpcer)` at threshold `t` by direct counting.
pub fn brute_rates(bona: &[f64], attack: &[f64], t: f64) -> (f64, f64) {
    let accepted = attack.iter().filter(|&&s| s < t).count();
    let rejected = bona.iter().filter(|&&s| s >= t).count();
    (accepted as f64 / attack.len() as f64, rejected as f64 / bona.len() as f64)
}

pub fn brute_thresholds(bona: &[f64], attack: &[f64]) -> Vec<f64> {
    let mut t: Vec<f64> = bona.iter().chain(attack).copied().collect();
    t.push(f64::NEG_INFINITY);
    t.push(f64::INFINITY);
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

/// Pair statistic: P(attack > bona) + P(attack == bona) / 2.
pub fn mann_whitney(bona: &[f64], attack: &[f64]) -> f64 {
    let mut twice = 0u64;
    for &a in attack {
        for &b in bona {
            twice += if a > b {
                2
            } else if a == b {
                1
            } else {
                0
            };
        }
    }
    twice as f64 / (2 * attack.len() * bona.len()) as f64
}

/// Crossing of the piecewise-linear APCER and BPCER curves over the sorted
/// threshold list.
pub fn brute_eer(bona: &[f64], attack: &[f64]) -> f64 {
    let (na, nb) = (attack.len() as i64, bona.len() as i64);
    let ts = brute_thresholds(bona, attack);
    let counts: Vec<(i64, i64)> = ts
        .iter()
        .map(|&t| {
            (attack.iter().filter(|&&s| s < t).count() as i64, bona.iter().filter(|&&s| s >= t).count() as i64)
        })
        .collect();
    let mut prev: Option<(f64, f64)> = None;
    for &(acc, rej) in &counts {
        let (fa, fb) = (acc as f64 / na as f64, rej as f64 / nb as f64);
        let sign = acc * nb - rej * na;
        if sign == 0 {
            return fa;
        }
        if sign > 0 {
            let (pa, pb) = prev.expect("-inf point has apcer 0 and bpcer 1");
            // Solve pa + s (fa - pa) = pb + s (fb - pb).
            let s = (pb - pa) / ((fa - pa) - (fb - pb));
            return pa + s * (fa - pa);
        }
        prev = Some((fa, fb));
    }
    unreachable!()
}

pub fn brute_bpcer_at(bona: &[f64], attack: &[f64], target: f64) -> f64 {
    let mut best = 1.0f64;
    for t in brute_thresholds(bona, attack) {
        let (a, b) = brute_rates(bona, attack, t);
        if a <= target {
            best = best.min(b);
        }
    }
    best
}

/// Positive iff `d` is strictly inside the circle through `a, b, c`, in
/// either orientation. Uses the explicit circumcenter.
pub fn strictly_inside_circumcircle(a: Point2, b: Point2, c: Point2, d: Point2, rel_eps: f64) -> bool {
    let den = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
    let a2 = a.x * a.x + a.y * a.y;
    let b2 = b.x * b.x + b.y * b.y;
    let c2 = c.x * c.x + c.y * c.y;
    let ux = (a2 * (b.y - c.y) + b2 * (c.y - a.y) + c2 * (a.y - b.y)) / den;
    let uy = (a2 * (c.x - b.x) + b2 * (a.x - c.x) + c2 * (b.x - a.x)) / den;
    let r = (a.x - ux).hypot(a.y - uy);
    (d.x - ux).hypot(d.y - uy) < r * (1.0 - rel_eps)
}

pub fn triangle_area(a: Point2, b: Point2, c: Point2) -> f64 {
    ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)).abs() / 2.0
}

/// Monotone-chain convex hull area.
pub fn hull_area(points: &[Point2]) -> f64 {
    let mut p: Vec<Point2> = points.to_vec();
    p.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    let cross = |o: Point2, a: Point2, b: Point2| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut hull: Vec<Point2> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2>> = if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    let n = hull.len();
    (0..n).map(|i| hull[i].x * hull[(i + 1) % n].y - hull[(i + 1) % n].x * hull[i].y).sum::<f64>().abs() / 2.0
}

/// Points with pairwise distance and collinearity margins, so the
/// triangulation is unique.
pub fn general_position_points(rng: &mut SplitMix64, n: usize) -> Vec<Point2> {
    'retry: loop {
        let pts: Vec<Point2> = (0..n).map(|_| Point2::new(rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0))).collect();
        for i in 0..n {
            for j in i + 1..n {
                if pts[i].dist(pts[j]) < 1.0 {
                    continue 'retry;
                }
                for k in j + 1..n {
                    if triangle_area(pts[i], pts[j], pts[k]) < 1.0 {
                        continue 'retry;
                    }
                }
            }
        }
        return pts;
    }
}

fn bilinear(img: &ImageBuffer, x: f64, y: f64, c: usize) -> f64 {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (u, v) = (x - 0.5, y - 0.5);
    let (i0, j0) = (u.floor() as i64, v.floor() as i64);
    let (fu, fv) = (u - u.floor(), v - v.floor());
    let px = |i: i64, j: i64| img.get(i.clamp(0, w - 1) as usize, j.clamp(0, h - 1) as usize, c) as f64;
    let top = px(i0, j0) + fu * (px(i0 + 1, j0) - px(i0, j0));
    let bot = px(i0, j0 + 1) + fu * (px(i0 + 1, j0 + 1) - px(i0, j0 + 1));
    top + fv * (bot - top)
}

/// Naive per-pixel morph: for every destination pixel center, search the
/// triangles for one containing it, map back through barycentric
/// coordinates into both sources, blend and round.
pub fn reference_morph(
    a: &ImageBuffer,
    b: &ImageBuffer,
    src_a: &[Point2],
    src_b: &[Point2],
    dst: &[Point2],
    triangles: &[[usize; 3]],
    alpha: f64,
) -> ImageBuffer {
    let (w, h, ch) = (a.width(), a.height(), a.channels());
    let mut out = vec![0u8; w * h * ch];
    for py in 0..h {
        for px in 0..w {
            let q = Point2::new(px as f64 + 0.5, py as f64 + 0.5);
            let found = triangles.iter().find_map(|t| {
                let (d0, d1, d2) = (dst[t[0]], dst[t[1]], dst[t[2]]);
                let det = (d1.x - d0.x) * (d2.y - d0.y) - (d2.x - d0.x) * (d1.y - d0.y);
                let l1 = ((q.x - d0.x) * (d2.y - d0.y) - (d2.x - d0.x) * (q.y - d0.y)) / det;
                let l2 = ((d1.x - d0.x) * (q.y - d0.y) - (q.x - d0.x) * (d1.y - d0.y)) / det;
                let l0 = 1.0 - l1 - l2;
                (l0 >= -1e-9 && l1 >= -1e-9 && l2 >= -1e-9).then_some((t, [l0, l1, l2]))
            });
            let (t, l) = found.expect("frame-augmented mesh covers every pixel");
            let map = |s: &[Point2]| {
                Point2::new(
                    l[0] * s[t[0]].x + l[1] * s[t[1]].x + l[2] * s[t[2]].x,
                    l[0] * s[t[0]].y + l[1] * s[t[1]].y + l[2] * s[t[2]].y,
                )
            };
            let (qa, qb) = (map(src_a), map(src_b));
            for c in 0..ch {
                let v = (1.0 - alpha) * bilinear(a, qa.x, qa.y, c) + alpha * bilinear(b, qb.x, qb.y, c);
                out[(py * w + px) * ch + c] = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
            }
        }
    }
    ImageBuffer::new(w, h, ch, out).unwrap()
}

pub fn max_abs_diff(a: &ImageBuffer, b: &ImageBuffer) -> u8 {
    a.data().iter().zip(b.data()).map(|(x, y)| x.abs_diff(*y)).max().unwrap_or(0)
}

/// Direct uniform-LBP histogram: transitions are counted per code, and
/// nothing is shared with the library's lookup table.
pub fn naive_lbp(gray: &ImageBuffer, gx: usize, gy: usize) -> Vec<f64> {
    let (w, h) = (gray.width(), gray.height());
    let uniform_index = |code: u8| -> usize {
        let transitions = (0..8).filter(|&k| ((code >> k) & 1) != ((code >> ((k + 1) % 8)) & 1)).count();
        if transitions > 2 {
            return 58;
        }
        (0..code as usize)
            .filter(|&c| (0..8).filter(|&k| ((c >> k) & 1) != ((c >> ((k + 1) % 8)) & 1)).count() <= 2)
            .count()
    };
    let offsets = [(-1i64, -1i64), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0)];
    let (cw, chh) = ((w - 2) / gx, (h - 2) / gy);
    let mut counts = vec![0usize; gx * gy * 59];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let center = gray.get(x, y, 0);
            let mut code = 0u8;
            for (k, (dx, dy)) in offsets.iter().enumerate() {
                let n = gray.get((x as i64 + dx) as usize, (y as i64 + dy) as usize, 0);
                if n >= center {
                    code |= 1 << k;
                }
            }
            let cx = ((x - 1) / cw).min(gx - 1);
            let cy = ((y - 1) / chh).min(gy - 1);
            counts[(cy * gx + cx) * 59 + uniform_index(code)] += 1;
        }
    }
    let mut out = vec![0.0; counts.len()];
    for (cell, o) in counts.chunks(59).zip(out.chunks_mut(59)) {
        let total: usize = cell.iter().sum();
        for (c, v) in cell.iter().zip(o) {
            *v = *c as f64 / total as f64;
        }
    }
    out
}

pub fn random_image(rng: &mut SplitMix64, w: usize, h: usize, channels: usize) -> ImageBuffer {
    ImageBuffer::from_fn(w, h, channels, |_, _, _| rng.below(256) as u8).unwrap()
}

/// Largest relative error between backprop and central differences
/// (`h = 1e-5`) for one random small model and batch. Inputs whose hidden
/// pre-activations sit within 1e-3 of the ReLU kink are redrawn.
pub fn gradient_check(rng: &mut SplitMix64) -> f64 {
    use morphkit_core::trainer::{batch_loss_and_grad, param_count, DetectorModel};
    let d = 2 + rng.below(6) as usize;
    let h = 1 + rng.below(6) as usize;
    let params: Vec<f64> = (0..param_count(d, h)).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let mut model = DetectorModel::from_params(d, h, params, "check").unwrap();
    let n = 1 + rng.below(5) as usize;
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(n);
    while xs.len() < n {
        let x: Vec<f64> = (0..d).map(|_| rng.uniform(-1.5, 1.5)).collect();
        if model.hidden_preactivations(&x).iter().all(|z| z.abs() >= 1e-3) {
            xs.push(x);
        }
    }
    let ys: Vec<f64> = (0..n).map(|_| rng.below(2) as f64).collect();
    let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let (_, grad) = batch_loss_and_grad(&model, &refs, &ys).unwrap();
    let step = 1e-5;
    let mut worst = 0.0f64;
    for (i, &g) in grad.iter().enumerate() {
        let orig = model.params()[i];
        model.params_mut()[i] = orig + step;
        let up = batch_loss_and_grad(&model, &refs, &ys).unwrap().0;
        model.params_mut()[i] = orig - step;
        let down = batch_loss_and_grad(&model, &refs, &ys).unwrap().0;
        model.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let rel = (g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    worst
}
