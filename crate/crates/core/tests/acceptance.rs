//! Acceptance runner: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test --test acceptance`.

mod common;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{
    brute_bpcer_at, brute_eer, general_position_points, gradient_check, hull_area, mann_whitney, max_abs_diff,
    random_score_file, strictly_inside_circumcircle, triangle_area,
};
use morphkit_core::geometry::{delaunay_triangulate, LandmarkSet};
use morphkit_core::metrics::{auc, bpcer_at_apcer, eer, APCER_TARGETS};
use morphkit_core::morph::{morph_pair, MorphSpec};
use morphkit_core::pipeline::{run_pipeline, PipelineConfig};
use morphkit_core::report::{parse_table, render_table, TableRow, TABLE_COLUMNS};
use morphkit_core::rng::SplitMix64;
use morphkit_core::toy::toy_face;

type Check = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn metric_oracle() -> Check {
    let mut rng = SplitMix64::new(1001);
    let mut worst = 0.0f64;
    for k in 0..100 {
        let n = 10 + rng.below(991) as usize;
        let f = random_score_file(&mut rng, n);
        let (b, a) = (f.bona_scores(), f.attack_scores());
        let mut diffs = vec![
            (eer(&f).map_err(|e| e.to_string())? - brute_eer(&b, &a)).abs(),
            (auc(&f).map_err(|e| e.to_string())? - mann_whitney(&b, &a)).abs(),
        ];
        for t in APCER_TARGETS {
            diffs.push((bpcer_at_apcer(&f, t).map_err(|e| e.to_string())? - brute_bpcer_at(&b, &a, t)).abs());
        }
        let d = diffs.into_iter().fold(0.0, f64::max);
        ensure(d < 1e-9, || format!("file {k} (n={n}): |delta| = {d:e}"))?;
        worst = worst.max(d);
    }
    Ok(format!("100 files, max |delta| = {worst:e}"))
}

fn auc_is_mann_whitney() -> Check {
    let mut rng = SplitMix64::new(1002);
    let mut worst = 0.0f64;
    let sizes = [10, 50, 100, 250, 500, 1000, 1500, 2000];
    for &n in &sizes {
        for _ in 0..3 {
            let f = random_score_file(&mut rng, n);
            let d = (auc(&f).map_err(|e| e.to_string())? - mann_whitney(&f.bona_scores(), &f.attack_scores())).abs();
            ensure(d < 1e-12, || format!("n={n}: |delta| = {d:e}"))?;
            worst = worst.max(d);
        }
    }
    Ok(format!("{} files up to n=2000, max |delta| = {worst:e}", 3 * sizes.len()))
}

fn published_rows() -> Vec<TableRow> {
    vec![
        TableRow::new("MFN", "FRLL-M", 95.43, 12.18, [100.0, 100.0, 15.20, 5.88]),
        TableRow::new("MFN", "FERET-M", 94.27, 10.65, [100.0, 100.0, 11.75, 6.51]),
        TableRow::new("MFN", "FRGC-M", 91.42, 16.36, [100.0, 64.86, 25.89, 14.02]),
        TableRow::new("XN", "FRLL-M", 99.17, 3.26, [85.29, 28.92, 0.49, 0.0]),
        TableRow::new("XN", "FERET-M", 96.84, 8.25, [79.62, 43.31, 7.29, 4.03]),
        TableRow::new("XN", "FRGC-M", 96.63, 9.75, [58.19, 35.11, 9.44, 4.23]),
        TableRow::new("HRN", "FRLL-M", 92.79, 13.73, [100.00, 42.84, 18.65, 11.12]),
        TableRow::new("HRN", "FERET-M", 97.05, 8.49, [91.43, 54.00, 7.44, 2.27]),
        TableRow::new("HRN", "FRGC-M", 95.77, 10.89, [82.26, 55.50, 12.14, 4.46]),
    ]
}

fn table_fidelity() -> Check {
    let rows = published_rows();
    let text = render_table(&rows);
    let lines: Vec<&str> = text.lines().collect();
    ensure(lines.len() == 2 + rows.len(), || format!("{} lines rendered", lines.len()))?;
    let header: Vec<&str> = lines[0].split('|').map(str::trim).collect();
    ensure(header == TABLE_COLUMNS, || format!("header {header:?}"))?;
    ensure(lines[1].chars().all(|c| c == '-' || c == '+'), || format!("rule line `{}`", lines[1]))?;
    // Data rows start on line 2.
    let cells = |i: usize| -> Vec<String> { lines[i + 1].split('|').map(|c| c.trim().to_string()).collect() };
    for (i, row) in rows.iter().enumerate() {
        let c = cells(i + 1);
        ensure(c.len() == 8, || format!("row {i} has {} cells", c.len()))?;
        ensure(c[0] == row.detector && c[1] == row.dataset, || format!("row {i} names {:?}", &c[..2]))?;
    }
    let expect = [
        (1, 2, "95.43"),
        (1, 3, "12.18"),
        (1, 4, "100.00"),
        (4, 2, "99.17"),
        (4, 3, "3.26"),
        (4, 7, "0.00"),
        (7, 2, "92.79"),
        (7, 3, "13.73"),
        (8, 5, "54.00"),
    ];
    for (r, k, want) in expect {
        let got = cells(r)[k].clone();
        ensure(got == want, || format!("line {r} column {k}: `{got}` != `{want}`"))?;
    }
    let back = parse_table(&text)?;
    ensure(back == rows, || "parsed rows differ from the fixture".into())?;
    ensure(render_table(&back) == text, || "second render differs".into())?;
    Ok("9 rows, 8 columns, exact round trip".into())
}

fn delaunay_correctness() -> Check {
    let mut rng = SplitMix64::new(1004);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let n = 3 + rng.below(6) as usize;
        let pts = general_position_points(&mut rng, n);
        let set = LandmarkSet::new(pts.clone()).map_err(|e| e.to_string())?;
        let mesh = delaunay_triangulate(&set).map_err(|e| format!("set {k}: {e}"))?;
        let mut area = 0.0;
        for t in mesh.triangles() {
            let (a, b, c) = (pts[t[0]], pts[t[1]], pts[t[2]]);
            area += triangle_area(a, b, c);
            for (j, &d) in pts.iter().enumerate() {
                ensure(t.contains(&j) || !strictly_inside_circumcircle(a, b, c, d, 1e-9), || {
                    format!("set {k}: point {j} inside circumcircle of {t:?}")
                })?;
            }
        }
        let hull = hull_area(&pts);
        let rel = (area - hull).abs() / hull;
        ensure(rel <= 1e-6, || format!("set {k}: area {area} vs hull {hull}"))?;
        worst = worst.max(rel);
    }
    Ok(format!("1000 sets, worst area error {worst:e}"))
}

fn morph_endpoints() -> Check {
    let mut rng = SplitMix64::new(1005);
    let mut worst = 0u8;
    for k in 0..20 {
        let (w, h) = (96 + 8 * rng.below(9) as usize, 96 + 8 * rng.below(9) as usize);
        let (a, la) = toy_face(w, h, &mut rng).map_err(|e| e.to_string())?;
        let (b, lb) = toy_face(w, h, &mut rng).map_err(|e| e.to_string())?;
        let alpha = rng.uniform(0.0, 1.0);
        let m = |x, y, lx, ly, t| morph_pair(x, y, lx, ly, &MorphSpec::new(t)).map_err(|e| e.to_string());
        let d0 = max_abs_diff(&m(&a, &b, &la, &lb, 0.0)?, &a);
        let d1 = max_abs_diff(&m(&a, &b, &la, &lb, 1.0)?, &b);
        let ds = max_abs_diff(&m(&a, &b, &la, &lb, alpha)?, &m(&b, &a, &lb, &la, 1.0 - alpha)?);
        ensure(d0 <= 1 && d1 <= 1, || format!("pair {k}: endpoint errors {d0}, {d1}"))?;
        ensure(ds <= 1, || format!("pair {k}: symmetry error {ds} at alpha {alpha}"))?;
        worst = worst.max(d0).max(d1).max(ds);
    }
    Ok(format!("20 pairs, max abs level error {worst}"))
}

fn gradients() -> Check {
    let mut rng = SplitMix64::new(1006);
    let mut worst = 0.0f64;
    for k in 0..50 {
        let e = gradient_check(&mut rng);
        ensure(e < 1e-4, || format!("model {k}: relative error {e:e}"))?;
        worst = worst.max(e);
    }
    Ok(format!("50 models, max relative error {worst:e}"))
}

fn default_run(dir: &Path) -> PipelineConfig {
    PipelineConfig { output_dir: dir.to_path_buf(), parallel: false, ..PipelineConfig::default() }
}

fn end_to_end() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = run_pipeline(default_run(dir.path()), None).map_err(|e| e.to_string())?.ok_or("no report")?;
    let (auc, eer) = (report.overall.auc_percent / 100.0, report.overall.eer_percent / 100.0);
    ensure(auc >= 0.85 && eer <= 0.25, || format!("AUC {auc:.4}, EER {eer:.4}"))?;
    Ok(format!("AUC {auc:.4}, EER {eer:.4}"))
}

fn files_under(root: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).expect("under root").to_path_buf());
            }
        }
    }
    out.sort();
    Ok(out)
}

fn determinism() -> Check {
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    for d in [&a, &b] {
        run_pipeline(default_run(d.path()), None).map_err(|e| e.to_string())?;
    }
    let fa = files_under(a.path()).map_err(|e| e.to_string())?;
    let fb = files_under(b.path()).map_err(|e| e.to_string())?;
    ensure(fa == fb, || format!("file lists differ ({} vs {})", fa.len(), fb.len()))?;
    for f in &fa {
        let same = std::fs::read(a.path().join(f)).ok() == std::fs::read(b.path().join(f)).ok();
        ensure(same, || format!("{} differs", f.display()))?;
    }
    Ok(format!("{} files byte-identical", fa.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("metric oracle equivalence", Duration::from_secs(10), metric_oracle),
        ("auc equals mann-whitney", Duration::from_secs(30), auc_is_mann_whitney),
        ("table fidelity", Duration::from_secs(1), table_fidelity),
        ("delaunay correctness", Duration::from_secs(10), delaunay_correctness),
        ("morph endpoint fidelity", Duration::from_secs(30), morph_endpoints),
        ("gradient check", Duration::from_secs(10), gradients),
        ("end-to-end toy experiment", Duration::from_secs(180), end_to_end),
        ("determinism", Duration::from_secs(360), determinism),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let verdict = match result {
            Ok(detail) if took <= budget => Ok(detail),
            Ok(detail) => Err(format!("{detail}; over time budget {budget:?}")),
            Err(e) => Err(e),
        };
        match verdict {
            Ok(detail) => println!("PASS {name} ({:.2}s): {detail}", took.as_secs_f64()),
            Err(e) => {
                failed += 1;
                println!("FAIL {name} ({:.2}s): {e}", took.as_secs_f64());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
