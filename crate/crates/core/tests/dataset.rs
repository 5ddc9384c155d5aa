use std::path::PathBuf;

use morphkit_core::dataset::{
    load_manifest, save_manifest, split_holdout, summarize, DatasetError, DatasetManifest, Label, MorphMethod, SampleRecord,
    Split,
};
use morphkit_core::geometry::BoundingBox;
use proptest::prelude::*;

/// Manifest with `counts[k]` records of `MorphMethod::ALL[k]`.
fn fixture(counts: [usize; 6]) -> DatasetManifest {
    let mut records = Vec::new();
    for (method, &n) in MorphMethod::ALL.iter().zip(&counts) {
        for i in 0..n {
            let id = format!("{}-{i}", method.abbrev());
            let path = format!("{}/{i:05}.png", method.as_str());
            records.push(match method {
                MorphMethod::None => SampleRecord::bona_fide(&id, path, &format!("s{i}")),
                m => SampleRecord::attack(&id, path, *m, [&format!("s{i}"), &format!("s{}", i + 1)]),
            });
        }
    }
    DatasetManifest::new("fixture", records, Split::Test).unwrap()
}

#[test]
fn frll_morphs_counts() {
    let m = fixture([204, 1221, 1222, 1222, 2175, 1221]);
    let back = DatasetManifest::from_csv("FRLL-M", &m.to_csv(None)).unwrap();
    let s = summarize(&back);
    let got: Vec<usize> = MorphMethod::ALL.iter().map(|&k| s.count(k)).collect();
    assert_eq!(got, [204, 1221, 1222, 1222, 2175, 1221]);
    assert_eq!(s.total(), back.len());
}

#[test]
fn feret_morphs_counts() {
    let s = summarize(&fixture([1413, 529, 529, 529, 0, 0]));
    assert_eq!(s.count(MorphMethod::None), 1413);
    assert_eq!(s.count(MorphMethod::OpenCV), 529);
    assert_eq!(s.count(MorphMethod::FaceMorpher), 529);
    assert_eq!(s.count(MorphMethod::StyleGAN), 529);
    assert_eq!(s.count(MorphMethod::Amsl), 0);
    assert_eq!(s.count_in(Split::Test), 1413 + 3 * 529);
}

#[test]
fn summary_rows_follow_method_order() {
    let s = summarize(&fixture([0; 6]));
    assert_eq!(s.total(), 0);
    let methods: Vec<MorphMethod> = s.rows.iter().map(|r| r.method).collect();
    assert_eq!(methods, MorphMethod::ALL);
    assert!(s.to_string().lines().next().unwrap().starts_with("class"));
}

#[test]
fn per_split_counts() {
    let m = fixture([10, 0, 0, 0, 0, 0]);
    let mut splits = vec![Split::Train; 8];
    splits.extend([Split::Holdout, Split::Test]);
    let m = DatasetManifest::with_splits("ten", m.records().to_vec(), splits).unwrap();
    let s = summarize(&m);
    assert_eq!((s.count_in(Split::Train), s.count_in(Split::Holdout), s.count_in(Split::Test)), (8, 1, 1));
}

#[test]
fn holdout_is_stratified_and_reproducible() {
    let m = fixture([63, 37, 0, 0, 0, 0]);
    let a = split_holdout(&m, 0.1, 7).unwrap();
    let b = split_holdout(&m, 0.1, 7).unwrap();
    assert_eq!(a.splits(), b.splits());
    assert_eq!(a.to_csv(None), b.to_csv(None));
    let s = summarize(&a);
    assert_eq!((s.count_in(Split::Train), s.count_in(Split::Holdout)), (90, 10));
    let held = |label| a.records().iter().zip(a.splits()).filter(|(r, s)| r.label == label && **s == Split::Holdout).count();
    assert_eq!((held(Label::BonaFide), held(Label::Attack)), (6, 4));
    let c = split_holdout(&m, 0.1, 8).unwrap();
    assert_ne!(a.splits(), c.splits());
}

#[test]
fn small_holdout_edge_cases() {
    let two = fixture([1, 1, 0, 0, 0, 0]);
    let s = split_holdout(&two, 0.5, 1).unwrap();
    assert_eq!(s.splits(), &[Split::Holdout, Split::Holdout]);
    let one = fixture([1, 0, 0, 0, 0, 0]);
    assert!(matches!(split_holdout(&one, 0.1, 1), Err(DatasetError::TooFewSamples(Label::BonaFide))));
    assert!(matches!(split_holdout(&two, 1.0, 1), Err(DatasetError::InvalidFraction(_))));
}

#[test]
fn parse_errors_carry_line_numbers() {
    let header = "sample_id,image_path,label,morph_method,subject_a,subject_b,bbox_x,bbox_y,bbox_w,bbox_h,landmarks_path";
    let text = format!("# seed=1\n{header}\na,a.png,bonafide,none,s1,,,,,,\nb,b.png,maybe,none,s2,,,,,,\n");
    match DatasetManifest::from_csv("x", &text) {
        Err(DatasetError::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("unexpected {other:?}"),
    }
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_manifest(&dir.path().join("nope.csv")), Err(DatasetError::MissingFile(_))));
}

#[test]
fn save_and_load_resolves_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sub").join("m.csv");
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    let m = fixture([2, 1, 0, 0, 0, 0]);
    save_manifest(&m, &path, Some("seed=3")).unwrap();
    let back = load_manifest(&path).unwrap();
    assert_eq!(back.records(), m.records());
    assert_eq!(back.resolve(&back.records()[0].image_path), dir.path().join("sub").join("none/00000.png"));
    assert!(std::fs::read_to_string(&path).unwrap().starts_with("# seed=3\n"));
}

#[test]
fn relocating_keeps_paths_pointing_at_the_same_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = fixture([2, 0, 0, 0, 0, 0]);
    m.set_root(dir.path().join("a").join("b"));
    let before: Vec<PathBuf> = m.records().iter().map(|r| m.resolve(&r.image_path)).collect();
    m.relocate(&dir.path().join("c"));
    assert_eq!(m.records()[0].image_path, PathBuf::from("../a/b/none/00000.png"));
    let after: Vec<PathBuf> = m.records().iter().map(|r| morphkit_core::dataset::normalize(&m.resolve(&r.image_path))).collect();
    assert_eq!(after, before);
}

fn arb_record() -> impl Strategy<Value = (SampleRecord, Split)> {
    (
        "[a-z][a-z0-9_.-]{0,12}",
        prop_oneof![Just(None), (0u8..6).prop_map(Some)],
        proptest::option::of((0.0f64..500.0, 0.0f64..500.0, 1.0f64..300.0, 1.0f64..300.0)),
        proptest::option::of("[a-z]{1,6}/[a-z0-9]{1,8}\\.txt"),
        prop_oneof![Just(Split::Train), Just(Split::Holdout), Just(Split::Test)],
    )
        .prop_map(|(id, method, bbox, lm, split)| {
            let mut r = match method.map(|k| MorphMethod::ATTACKS[k as usize % 5]) {
                None => SampleRecord::bona_fide(&id, format!("img/{id}.png"), "subj"),
                Some(m) => SampleRecord::attack(&id, format!("img/{id}.png"), m, ["a", "b"]),
            };
            r.bbox = bbox.map(|(x, y, w, h)| BoundingBox::new(x, y, w, h).unwrap());
            r.landmarks_path = lm.map(PathBuf::from);
            (r, split)
        })
}

proptest! {
    #[test]
    fn csv_round_trip(rows in proptest::collection::vec(arb_record(), 0..25)) {
        let mut seen = std::collections::HashSet::new();
        let rows: Vec<_> = rows.into_iter().filter(|(r, _)| seen.insert(r.sample_id.clone())).collect();
        let (records, splits): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        let m = DatasetManifest::with_splits("p", records, splits).unwrap();
        let back = DatasetManifest::from_csv("p", &m.to_csv(Some("seed=9"))).unwrap();
        prop_assert_eq!(back.records(), m.records());
        prop_assert_eq!(back.splits(), m.splits());
    }
}
