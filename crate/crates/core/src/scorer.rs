//! Detector scoring and the score-file format.
//!
//! Score files are CSV with header `sample_id,label,morph_method,score`.
//! Scores are attack probabilities: higher means more attack-like. Lines
//! starting with `#` are comments.

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{DatasetManifest, Label, MorphMethod, Split};
use crate::features::{Descriptor, FeatureError};
use crate::geometry::{BoundingBox, PreprocessProfile};
use crate::image::ImageBuffer;
use crate::trainer::{DetectorModel, TrainError};

pub const SCORE_HEADER: [&str; 4] = ["sample_id", "label", "morph_method", "score"];
/// Fewer significant digits than this in a score draws a warning.
pub const MIN_SIGNIFICANT_DIGITS: usize = 9;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("model expects preprocessing `{model}`, got `{given}`")]
    ProfileMismatch { model: String, given: String },
    #[error("sample `{sample_id}`: cannot read image: {msg}")]
    MissingImage { sample_id: String, msg: String },
    #[error("score file line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] TrainError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub sample_id: String,
    pub label: Label,
    pub morph_method: MorphMethod,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreFile {
    pub records: Vec<ScoreRecord>,
}

/// 17 significant digits, fixed-point for ordinary magnitudes.
pub fn format_score(v: f64) -> String {
    if v == 0.0 {
        return format!("{:.16}", 0.0);
    }
    let mag = v.abs();
    if (1e-5..1e15).contains(&mag) {
        let decimals = (16 - mag.log10().floor() as i32).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.16e}")
    }
}

/// Significant digits written in a decimal literal.
pub fn significant_digits(text: &str) -> usize {
    let t = text.trim().trim_start_matches(['+', '-']);
    let mantissa = t.split(['e', 'E']).next().unwrap_or("");
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let trimmed = digits.trim_start_matches('0');
    if trimmed.is_empty() {
        digits.len()
    } else {
        trimmed.len()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Validation {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

impl ScoreFile {
    pub fn new(records: Vec<ScoreRecord>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn bona_scores(&self) -> Vec<f64> {
        self.records.iter().filter(|r| r.label == Label::BonaFide).map(|r| r.score).collect()
    }

    pub fn attack_scores(&self) -> Vec<f64> {
        self.records.iter().filter(|r| r.label == Label::Attack).map(|r| r.score).collect()
    }

    /// `s -> 1 - s`, for detectors that score bona fide high.
    pub fn inverted(&self) -> Self {
        let records = self.records.iter().map(|r| ScoreRecord { score: 1.0 - r.score, ..r.clone() }).collect();
        Self { records }
    }

    pub fn to_csv(&self, provenance: &[String]) -> String {
        let mut out = String::new();
        for line in provenance {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(&SCORE_HEADER.join(","));
        out.push('\n');
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        for r in &self.records {
            w.write_record([r.sample_id.as_str(), r.label.as_str(), r.morph_method.as_str(), &format_score(r.score)])
                .expect("in-memory write");
        }
        out.push_str(std::str::from_utf8(&w.into_inner().expect("in-memory flush")).expect("utf-8"));
        out
    }

    /// Parse and validate in one step; any validation error becomes `Parse`.
    pub fn from_csv(text: &str) -> Result<Self, ScoreError> {
        let (file, check) = Self::parse_lenient(text)?;
        if let Some(e) = check.errors.first() {
            return Err(ScoreError::Parse { line: 0, msg: e.clone() });
        }
        Ok(file)
    }

    /// Structural parse plus the semantic checks as a report.
    pub fn parse_lenient(text: &str) -> Result<(Self, Validation), ScoreError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| ScoreError::Parse { line: 1, msg: e.to_string() })?.clone();
        if headers.iter().collect::<Vec<_>>() != SCORE_HEADER {
            return Err(ScoreError::Parse { line: 1, msg: format!("expected header `{}`", SCORE_HEADER.join(",")) });
        }
        let mut records = Vec::new();
        let mut check = Validation::default();
        let mut seen = HashSet::new();
        for row in rdr.records() {
            let row = row.map_err(|e| ScoreError::Parse { line: e.position().map_or(0, |p| p.line()), msg: e.to_string() })?;
            let line = row.position().map_or(0, |p| p.line());
            let perr = |msg: String| ScoreError::Parse { line, msg };
            let sample_id = row[0].to_string();
            let label: Label = row[1].parse().map_err(perr)?;
            let morph_method: MorphMethod = row[2].parse().map_err(perr)?;
            let score: f64 = row[3].parse().map_err(|_| perr(format!("bad score `{}`", &row[3])))?;
            if !seen.insert(sample_id.clone()) {
                check.errors.push(format!("line {line}: duplicate sample_id `{sample_id}`"));
            }
            if !score.is_finite() || !(0.0..=1.0).contains(&score) {
                check.errors.push(format!("line {line}: score {score} outside [0, 1]"));
            }
            if (label == Label::BonaFide) != (morph_method == MorphMethod::None) {
                check.errors.push(format!("line {line}: label {label} inconsistent with method {morph_method}"));
            }
            let digits = significant_digits(&row[3]);
            if digits < MIN_SIGNIFICANT_DIGITS {
                check.warnings.push(format!("line {line}: score `{}` has only {digits} significant digits", &row[3]));
            }
            records.push(ScoreRecord { sample_id, label, morph_method, score });
        }
        Ok((Self { records }, check))
    }

    pub fn write(&self, path: &Path, provenance: &[String]) -> Result<(), ScoreError> {
        std::fs::write(path, self.to_csv(provenance)).map_err(|source| ScoreError::Io { path: path.display().to_string(), source })
    }

    pub fn read(path: &Path) -> Result<Self, ScoreError> {
        Self::from_csv(&read_text(path)?)
    }
}

fn read_text(path: &Path) -> Result<String, ScoreError> {
    std::fs::read_to_string(path).map_err(|source| ScoreError::Io { path: path.display().to_string(), source })
}

/// Check a score file on disk without failing on semantic problems.
pub fn validate_score_file(path: &Path) -> Result<Validation, ScoreError> {
    match ScoreFile::parse_lenient(&read_text(path)?) {
        Ok((_, v)) => Ok(v),
        Err(ScoreError::Parse { line, msg }) => Ok(Validation { errors: vec![format!("line {line}: {msg}")], warnings: vec![] }),
        Err(e) => Err(e),
    }
}

fn model_descriptor(model: &DetectorModel, profile: &PreprocessProfile) -> Result<Descriptor, ScoreError> {
    let d = Descriptor::parse(&model.descriptor_id)?;
    if d.preprocess != *profile {
        return Err(ScoreError::ProfileMismatch { model: d.preprocess.to_string(), given: profile.to_string() });
    }
    if d.dim() != model.input_dim() {
        return Err(TrainError::DimensionMismatch { expected: model.input_dim(), got: d.dim() }.into());
    }
    Ok(d)
}

/// Attack probability of one image under the model's feature pipeline.
pub fn score_sample(
    model: &DetectorModel,
    img: &ImageBuffer,
    bbox: Option<&BoundingBox>,
    profile: &PreprocessProfile,
) -> Result<f64, ScoreError> {
    let d = model_descriptor(model, profile)?;
    let fv = d.extract(img, bbox, false)?;
    Ok(model.forward(&fv.values)?)
}

/// Score every `Test` record, in manifest order.
pub fn score_manifest(
    model: &DetectorModel,
    manifest: &DatasetManifest,
    profile: &PreprocessProfile,
    parallel: bool,
) -> Result<ScoreFile, ScoreError> {
    let d = model_descriptor(model, profile)?;
    let test: Vec<_> = manifest.records().iter().zip(manifest.splits()).filter(|(_, s)| **s == Split::Test).map(|(r, _)| r).collect();
    let job = |r: &&crate::dataset::SampleRecord| -> Result<ScoreRecord, ScoreError> {
        let img = ImageBuffer::read_png(&manifest.resolve(&r.image_path))
            .map_err(|e| ScoreError::MissingImage { sample_id: r.sample_id.clone(), msg: e.to_string() })?;
        let fv = d.extract(&img, r.bbox.as_ref(), false)?;
        Ok(ScoreRecord {
            sample_id: r.sample_id.clone(),
            label: r.label,
            morph_method: r.morph_method,
            score: model.forward(&fv.values)?,
        })
    };
    let records: Result<Vec<_>, _> = if parallel { test.par_iter().map(job).collect() } else { test.iter().map(job).collect() };
    Ok(ScoreFile { records: records? })
}
