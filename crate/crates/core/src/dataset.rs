//! Labeled sample collections and their train/holdout/test assignment.
//!
//! Manifests are CSV files with the fixed header
//!
//! ```text
//! sample_id,image_path,label,morph_method,subject_a,subject_b,bbox_x,bbox_y,bbox_w,bbox_h,landmarks_path
//! ```
//!
//! optionally followed by a `split` column (`train`, `holdout`, `test`). Rows
//! without a split column are assigned to `test`. Lines starting with `#` are
//! comments; the toolkit uses a leading comment for provenance.

use std::fmt;
use std::path::{Component, Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BoundingBox;
use crate::rng::SplitMix64;

pub const MANIFEST_HEADER: [&str; 11] = [
    "sample_id",
    "image_path",
    "label",
    "morph_method",
    "subject_a",
    "subject_b",
    "bbox_x",
    "bbox_y",
    "bbox_w",
    "bbox_h",
    "landmarks_path",
];

pub const DEFAULT_HOLDOUT_FRACTION: f64 = 0.1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("manifest not found: {0}")]
    MissingFile(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("sample `{sample_id}` violates: {rule}")]
    InvariantViolation { sample_id: String, rule: String },
    #[error("too few {0} samples for a holdout split")]
    TooFewSamples(Label),
    #[error("holdout fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    BonaFide,
    Attack,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::BonaFide, Label::Attack];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::BonaFide => "bonafide",
            Label::Attack => "attack",
        }
    }

    /// 1.0 for attacks, 0.0 for bona fide.
    pub fn target(self) -> f64 {
        match self {
            Label::BonaFide => 0.0,
            Label::Attack => 1.0,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bonafide" => Ok(Label::BonaFide),
            "attack" => Ok(Label::Attack),
            _ => Err(format!("unknown label `{s}`")),
        }
    }
}

/// Morph generation method; declaration order is the reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MorphMethod {
    None,
    OpenCV,
    FaceMorpher,
    StyleGAN,
    Amsl,
    WebMorph,
}

impl MorphMethod {
    pub const ALL: [MorphMethod; 6] = [
        MorphMethod::None,
        MorphMethod::OpenCV,
        MorphMethod::FaceMorpher,
        MorphMethod::StyleGAN,
        MorphMethod::Amsl,
        MorphMethod::WebMorph,
    ];

    pub const ATTACKS: [MorphMethod; 5] = [
        MorphMethod::OpenCV,
        MorphMethod::FaceMorpher,
        MorphMethod::StyleGAN,
        MorphMethod::Amsl,
        MorphMethod::WebMorph,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MorphMethod::None => "none",
            MorphMethod::OpenCV => "opencv",
            MorphMethod::FaceMorpher => "facemorpher",
            MorphMethod::StyleGAN => "stylegan",
            MorphMethod::Amsl => "amsl",
            MorphMethod::WebMorph => "webmorph",
        }
    }

    /// Column abbreviation used in dataset tables.
    pub fn abbrev(self) -> &'static str {
        match self {
            MorphMethod::None => "BF",
            MorphMethod::OpenCV => "OCV",
            MorphMethod::FaceMorpher => "FM",
            MorphMethod::StyleGAN => "SG",
            MorphMethod::Amsl => "AMSL",
            MorphMethod::WebMorph => "WM",
        }
    }
}

impl fmt::Display for MorphMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MorphMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        MorphMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown morph method `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Holdout,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Holdout, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Holdout => "holdout",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Split::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown split `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub sample_id: String,
    pub image_path: PathBuf,
    pub label: Label,
    pub morph_method: MorphMethod,
    pub source_subjects: Vec<String>,
    pub bbox: Option<BoundingBox>,
    pub landmarks_path: Option<PathBuf>,
}

impl SampleRecord {
    pub fn bona_fide(sample_id: &str, image_path: impl Into<PathBuf>, subject: &str) -> Self {
        Self {
            sample_id: sample_id.to_string(),
            image_path: image_path.into(),
            label: Label::BonaFide,
            morph_method: MorphMethod::None,
            source_subjects: vec![subject.to_string()],
            bbox: None,
            landmarks_path: None,
        }
    }

    pub fn attack(
        sample_id: &str,
        image_path: impl Into<PathBuf>,
        method: MorphMethod,
        subjects: [&str; 2],
    ) -> Self {
        Self {
            sample_id: sample_id.to_string(),
            image_path: image_path.into(),
            label: Label::Attack,
            morph_method: method,
            source_subjects: subjects.iter().map(|s| s.to_string()).collect(),
            bbox: None,
            landmarks_path: None,
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let violation = |rule: &str| {
            Err(DatasetError::InvariantViolation { sample_id: self.sample_id.clone(), rule: rule.to_string() })
        };
        if self.sample_id.is_empty() || self.sample_id.starts_with('#') {
            return violation("sample_id must be non-empty and not start with '#'");
        }
        match self.label {
            Label::BonaFide if self.morph_method != MorphMethod::None => {
                violation("bona fide samples must have morph_method none")
            }
            Label::BonaFide if self.source_subjects.len() > 1 => {
                violation("bona fide samples have at most one source subject")
            }
            Label::Attack if self.morph_method == MorphMethod::None => {
                violation("attack samples need a morph method")
            }
            Label::Attack if self.source_subjects.len() != 2 => {
                violation("attack samples have exactly two source subjects")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    records: Vec<SampleRecord>,
    splits: Vec<Split>,
    root: PathBuf,
}

impl DatasetManifest {
    /// Build a validated manifest; every record starts in `default_split`.
    pub fn new(name: &str, records: Vec<SampleRecord>, default_split: Split) -> Result<Self, DatasetError> {
        let splits = vec![default_split; records.len()];
        Self::with_splits(name, records, splits)
    }

    pub fn with_splits(name: &str, records: Vec<SampleRecord>, splits: Vec<Split>) -> Result<Self, DatasetError> {
        assert_eq!(records.len(), splits.len(), "one split per record");
        let mut seen = std::collections::HashSet::with_capacity(records.len());
        for r in &records {
            r.validate()?;
            if !seen.insert(r.sample_id.as_str()) {
                return Err(DatasetError::InvariantViolation {
                    sample_id: r.sample_id.clone(),
                    rule: "sample_id must be unique".into(),
                });
            }
        }
        Ok(Self { name: name.to_string(), records, splits, root: PathBuf::new() })
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split_of(&self, sample_id: &str) -> Option<Split> {
        self.records.iter().position(|r| r.sample_id == sample_id).map(|i| self.splits[i])
    }

    /// Records in `split`, in manifest order.
    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().zip(&self.splits).filter(move |(_, s)| **s == split).map(|(r, _)| r)
    }

    pub fn set_all_splits(&mut self, split: Split) {
        self.splits.iter_mut().for_each(|s| *s = split);
    }

    /// Directory relative paths are resolved against (the manifest's directory).
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn set_root(&mut self, root: impl Into<PathBuf>) {
        self.root = root.into();
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.root.join(path)
        }
    }

    /// Move the manifest to `new_root`, rewriting relative paths so they
    /// still point at the same files.
    pub fn relocate(&mut self, new_root: &Path) {
        let abs = |p: &Path| normalize(&std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf()));
        let (from, to) = (abs(&self.root), abs(new_root));
        self.map_paths(|p| if p.is_absolute() { p.to_path_buf() } else { relative_to(&normalize(&from.join(p)), &to) });
        self.root = new_root.to_path_buf();
    }

    /// Rewrite every image and landmark path.
    pub fn map_paths(&mut self, f: impl Fn(&Path) -> PathBuf) {
        for r in &mut self.records {
            r.image_path = f(&r.image_path);
            if let Some(lm) = &r.landmarks_path {
                r.landmarks_path = Some(f(lm));
            }
        }
    }

    /// Serialize to CSV, including the split column.
    pub fn to_csv(&self, provenance: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(p) = provenance {
            for line in p.lines() {
                out.push_str("# ");
                out.push_str(line);
                out.push('\n');
            }
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = MANIFEST_HEADER.to_vec();
        header.push("split");
        w.write_record(&header).expect("in-memory write");
        for (r, split) in self.records.iter().zip(&self.splits) {
            let subject = |i: usize| r.source_subjects.get(i).cloned().unwrap_or_default();
            let bbox = |f: fn(&BoundingBox) -> f64| r.bbox.as_ref().map(|b| f(b).to_string()).unwrap_or_default();
            let row = [
                r.sample_id.clone(),
                r.image_path.to_string_lossy().into_owned(),
                r.label.as_str().to_string(),
                r.morph_method.as_str().to_string(),
                subject(0),
                subject(1),
                bbox(|b| b.x),
                bbox(|b| b.y),
                bbox(|b| b.w),
                bbox(|b| b.h),
                r.landmarks_path.as_ref().map(|p| p.to_string_lossy().into_owned()).unwrap_or_default(),
                split.as_str().to_string(),
            ];
            w.write_record(&row).expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("flush")).expect("utf-8"));
        out
    }

    pub fn from_csv(name: &str, text: &str) -> Result<Self, DatasetError> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .has_headers(true)
            .flexible(true)
            .from_reader(text.as_bytes());
        let header_line = reader.position().line();
        let headers = reader
            .headers()
            .map_err(|e| DatasetError::Parse { line: header_line.max(1), msg: e.to_string() })?
            .clone();
        let fields: Vec<&str> = headers.iter().collect();
        let has_split = if fields == MANIFEST_HEADER {
            false
        } else if fields.len() == 12 && fields[..11] == MANIFEST_HEADER && fields[11] == "split" {
            true
        } else {
            return Err(DatasetError::Parse {
                line: headers.position().map_or(1, |p| p.line()),
                msg: format!("unexpected header `{}`", fields.join(",")),
            });
        };
        let width = if has_split { 12 } else { 11 };

        let mut records = Vec::new();
        let mut splits = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| DatasetError::Parse {
                line: e.position().map_or(0, |p| p.line()),
                msg: e.to_string(),
            })?;
            let line = row.position().map_or(0, |p| p.line());
            let perr = |msg: String| DatasetError::Parse { line, msg };
            if row.len() != width {
                return Err(perr(format!("expected {width} fields, got {}", row.len())));
            }
            let label: Label = row[2].parse().map_err(perr)?;
            let morph_method: MorphMethod = row[3].parse().map_err(perr)?;
            let source_subjects: Vec<String> =
                [&row[4], &row[5]].iter().filter(|s| !s.is_empty()).map(|s| s.to_string()).collect();
            let bbox_fields = [&row[6], &row[7], &row[8], &row[9]];
            let bbox = if bbox_fields.iter().all(|f| f.is_empty()) {
                None
            } else {
                let mut v = [0.0f64; 4];
                for (slot, f) in v.iter_mut().zip(bbox_fields) {
                    *slot = f.parse().map_err(|_| perr(format!("bad bounding box value `{f}`")))?;
                }
                Some(BoundingBox::new(v[0], v[1], v[2], v[3]).map_err(|e| {
                    DatasetError::InvariantViolation { sample_id: row[0].to_string(), rule: e.to_string() }
                })?)
            };
            let landmarks_path = (!row[10].is_empty()).then(|| PathBuf::from(&row[10]));
            let split = if has_split { row[11].parse().map_err(perr)? } else { Split::Test };
            if row[1].is_empty() {
                return Err(perr("empty image_path".into()));
            }
            records.push(SampleRecord {
                sample_id: row[0].to_string(),
                image_path: PathBuf::from(&row[1]),
                label,
                morph_method,
                source_subjects,
                bbox,
                landmarks_path,
            });
            splits.push(split);
        }
        Self::with_splits(name, records, splits)
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DatasetError> {
    if !path.is_file() {
        return Err(DatasetError::MissingFile(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut manifest = DatasetManifest::from_csv(&name, &text)?;
    manifest.set_root(path.parent().unwrap_or(Path::new("")));
    Ok(manifest)
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path, provenance: Option<&str>) -> Result<(), DatasetError> {
    std::fs::write(path, manifest.to_csv(provenance))
        .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })
}

/// Counts for one (label, method) row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SummaryRow {
    pub label: Label,
    pub method: MorphMethod,
    pub train: usize,
    pub holdout: usize,
    pub test: usize,
}

impl SummaryRow {
    pub fn total(&self) -> usize {
        self.train + self.holdout + self.test
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    pub fn count(&self, method: MorphMethod) -> usize {
        self.rows.iter().filter(|r| r.method == method).map(SummaryRow::total).sum()
    }

    pub fn count_in(&self, split: Split) -> usize {
        self.rows
            .iter()
            .map(|r| match split {
                Split::Train => r.train,
                Split::Holdout => r.holdout,
                Split::Test => r.test,
            })
            .sum()
    }

    pub fn total(&self) -> usize {
        self.rows.iter().map(SummaryRow::total).sum()
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<6} {:>8} {:>8} {:>8} {:>8}", "class", "train", "holdout", "test", "total")?;
        for r in &self.rows {
            writeln!(f, "{:<6} {:>8} {:>8} {:>8} {:>8}", r.method.abbrev(), r.train, r.holdout, r.test, r.total())?;
        }
        write!(f, "{:<6} {:>8} {:>8} {:>8} {:>8}", "all", self.count_in(Split::Train), self.count_in(Split::Holdout), self.count_in(Split::Test), self.total())
    }
}

/// One row per valid (label, method) pair, in method order.
pub fn summarize(manifest: &DatasetManifest) -> Summary {
    let mut rows: Vec<SummaryRow> = MorphMethod::ALL
        .iter()
        .map(|&method| SummaryRow {
            label: if method == MorphMethod::None { Label::BonaFide } else { Label::Attack },
            method,
            train: 0,
            holdout: 0,
            test: 0,
        })
        .collect();
    for (r, split) in manifest.records.iter().zip(&manifest.splits) {
        let row = &mut rows[MorphMethod::ALL.iter().position(|m| *m == r.morph_method).unwrap()];
        match split {
            Split::Train => row.train += 1,
            Split::Holdout => row.holdout += 1,
            Split::Test => row.test += 1,
        }
    }
    Summary { rows }
}

/// Stratified holdout selection.
///
/// Each label class contributes `round(n_class * fraction)` samples (half
/// rounds up), chosen uniformly by a Fisher-Yates shuffle of the class's
/// records in manifest order. Bona fide is drawn before attacks from a single
/// seeded stream. All other records become `Train`.
pub fn split_holdout(manifest: &DatasetManifest, holdout_fraction: f64, seed: u64) -> Result<DatasetManifest, DatasetError> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(DatasetError::InvalidFraction(holdout_fraction));
    }
    if manifest.is_empty() {
        return Err(DatasetError::TooFewSamples(Label::BonaFide));
    }
    let mut rng = SplitMix64::new(seed);
    let mut splits = vec![Split::Train; manifest.len()];
    for label in Label::ALL {
        let mut members: Vec<usize> =
            manifest.records.iter().enumerate().filter(|(_, r)| r.label == label).map(|(i, _)| i).collect();
        if members.is_empty() {
            continue;
        }
        let k = (members.len() as f64 * holdout_fraction + 0.5).floor() as usize;
        if k == 0 {
            return Err(DatasetError::TooFewSamples(label));
        }
        rng.shuffle(&mut members);
        for &i in &members[..k] {
            splits[i] = Split::Holdout;
        }
    }
    let mut out = manifest.clone();
    out.splits = splits;
    Ok(out)
}

/// Lexically resolve `.` and `..`.
pub fn normalize(p: &Path) -> PathBuf {
    let mut out: Vec<Component> = Vec::new();
    for c in p.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir if matches!(out.last(), Some(Component::Normal(_))) => {
                out.pop();
            }
            other => out.push(other),
        }
    }
    out.iter().collect()
}

/// `target` as seen from directory `base`; both absolute and normalized.
fn relative_to(target: &Path, base: &Path) -> PathBuf {
    let t: Vec<Component> = target.components().collect();
    let b: Vec<Component> = base.components().collect();
    if t.first() != b.first() {
        return target.to_path_buf();
    }
    let common = t.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let mut out = PathBuf::new();
    for _ in common..b.len() {
        out.push("..");
    }
    out.extend(&t[common..]);
    out
}
