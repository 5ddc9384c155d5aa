//! Staged end-to-end runs: corpus, morph, split, extract, train, score, eval.
//!
//! Every stage reads the previous stages' files under the output directory and
//! writes its own; nothing is carried in memory between stages.
//!
//! ```text
//! <out>/corpus_train/  bona fide training faces + manifest.csv
//! <out>/corpus_test/   held-out faces and morphs + manifest.csv
//! <out>/morphs/        training morphs + manifest.csv (bona fide + attacks)
//! <out>/split/         manifest.csv with Train/Holdout assignment
//! <out>/features/      train.bin
//! <out>/model/         model.mkm, train_log.csv
//! <out>/scores/        scores.csv
//! <out>/eval/          report.json, curves.csv, report.txt
//! <out>/run.txt        seed, config hash, SHA-256 of every artifact
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{load_manifest, normalize, save_manifest, split_holdout, DatasetManifest, Label, MorphMethod, SampleRecord, Split};
use crate::features::{extract_manifest, Descriptor, FeatureSet, LbpConfig};
use crate::geometry::{parse_landmarks, PointCount, PreprocessProfile};
use crate::image::ImageBuffer;
use crate::kvconfig::KeyValues;
use crate::metrics::{evaluate, roc, EvalReport};
use crate::morph::{morph_pair, MorphSpec};
use crate::report::{render_table, TableRow};
use crate::rng::SplitMix64;
use crate::scorer::{score_manifest, ScoreFile};
use crate::toy::make_toy_corpus;
use crate::trainer::{train, DetectorModel, TrainConfig};

const STREAM_TRAIN_CORPUS: u64 = 100;
const STREAM_TEST_CORPUS: u64 = 200;
const STREAM_TEST_PAIRS: u64 = 201;
const STREAM_TRAIN_PAIRS: u64 = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Corpus,
    Morph,
    Split,
    Extract,
    Train,
    Score,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 7] = [Stage::Corpus, Stage::Morph, Stage::Split, Stage::Extract, Stage::Train, Stage::Score, Stage::Eval];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Corpus => "corpus",
            Stage::Morph => "morph",
            Stage::Split => "split",
            Stage::Extract => "extract",
            Stage::Train => "train",
            Stage::Score => "score",
            Stage::Eval => "eval",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL.into_iter().find(|st| st.as_str() == s).ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("stage `{stage}`: {msg}")]
    Stage { stage: Stage, msg: String },
}

fn stage_err(stage: Stage) -> impl Fn(String) -> PipelineError {
    move |msg| PipelineError::Stage { stage, msg }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub seed: u64,
    pub n_subjects: usize,
    pub n_test_subjects: usize,
    /// Captures generated per toy subject.
    pub images_per_subject: usize,
    pub image_width: usize,
    pub image_height: usize,
    /// Attacks per bona fide sample when planning morph pairs.
    pub attack_ratio: f64,
    pub alpha: f64,
    pub profile: PreprocessProfile,
    pub lbp: LbpConfig,
    pub train: TrainConfig,
    /// External bona fide training manifest; replaces the generated corpus.
    pub train_manifest: Option<PathBuf>,
    /// External test manifest; replaces the generated test set.
    pub test_manifest: Option<PathBuf>,
    pub dataset_name: String,
    pub detector_name: String,
    pub parallel: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("run"),
            seed: 1,
            n_subjects: 40,
            n_test_subjects: 30,
            images_per_subject: 3,
            image_width: 256,
            image_height: 256,
            attack_ratio: 15.0 / 25.0,
            alpha: 0.5,
            profile: PreprocessProfile::hrnet(),
            lbp: LbpConfig::default(),
            train: TrainConfig { seed: 1, ..TrainConfig::default() },
            train_manifest: None,
            test_manifest: None,
            dataset_name: "toy-M".into(),
            detector_name: "LBP-MLP".into(),
            parallel: false,
        }
    }
}

const PIPELINE_KEYS: [&str; 16] = [
    "output_dir",
    "seed",
    "n_subjects",
    "n_test_subjects",
    "images_per_subject",
    "image_width",
    "image_height",
    "attack_ratio",
    "alpha",
    "profile",
    "lbp",
    "train_manifest",
    "test_manifest",
    "dataset_name",
    "detector_name",
    "parallel",
];

impl PipelineConfig {
    /// Relative paths are taken relative to `base_dir`.
    pub fn from_kv(kv: &KeyValues, base_dir: &Path) -> Result<Self, PipelineError> {
        let cfg_err = |e: String| PipelineError::Config(e);
        let allowed: Vec<&str> = PIPELINE_KEYS.iter().chain(TrainConfig::KEYS.iter()).copied().collect();
        kv.check_keys(&allowed).map_err(|e| cfg_err(e.to_string()))?;
        let d = Self::default();
        let path = |key: &str| kv.get(key).map(|p| base_dir.join(p));
        let seed: u64 = kv.parse_or("seed", d.seed).map_err(|e| cfg_err(e.to_string()))?;
        let train = TrainConfig::from_kv(kv).map_err(|e| cfg_err(e.to_string()))?;
        let profile = match kv.get("profile") {
            Some(p) => p.parse().map_err(cfg_err)?,
            None => d.profile,
        };
        let lbp = match kv.get("lbp") {
            Some(s) => s.parse().map_err(|e: crate::features::FeatureError| cfg_err(e.to_string()))?,
            None => d.lbp,
        };
        let parse = |e: crate::kvconfig::ConfigError| cfg_err(e.to_string());
        let cfg = Self {
            output_dir: path("output_dir").unwrap_or_else(|| base_dir.join(&d.output_dir)),
            seed,
            n_subjects: kv.parse_or("n_subjects", d.n_subjects).map_err(parse)?,
            n_test_subjects: kv.parse_or("n_test_subjects", d.n_test_subjects).map_err(parse)?,
            images_per_subject: kv.parse_or("images_per_subject", d.images_per_subject).map_err(parse)?,
            image_width: kv.parse_or("image_width", d.image_width).map_err(parse)?,
            image_height: kv.parse_or("image_height", d.image_height).map_err(parse)?,
            attack_ratio: kv.parse_or("attack_ratio", d.attack_ratio).map_err(parse)?,
            alpha: kv.parse_or("alpha", d.alpha).map_err(parse)?,
            profile,
            lbp,
            train: TrainConfig { seed, ..train },
            train_manifest: path("train_manifest"),
            test_manifest: path("test_manifest"),
            dataset_name: kv.get("dataset_name").unwrap_or(&d.dataset_name).to_string(),
            detector_name: kv.get("detector_name").unwrap_or(&d.detector_name).to_string(),
            parallel: kv.bool_or("parallel", d.parallel).map_err(parse)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let kv = KeyValues::load(path).map_err(|e| PipelineError::Config(e.to_string()))?;
        Self::from_kv(&kv, path.parent().unwrap_or(Path::new("")))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.train_manifest.is_none() && self.n_subjects < 2 {
            return bad("n_subjects must be at least 2");
        }
        if self.test_manifest.is_none() && self.n_test_subjects < 2 {
            return bad("n_test_subjects must be at least 2");
        }
        if self.images_per_subject == 0 {
            return bad("images_per_subject must be at least 1");
        }
        if self.image_width < 16 || self.image_height < 16 {
            return bad("image size must be at least 16x16");
        }
        if !(self.attack_ratio > 0.0 && self.attack_ratio.is_finite()) {
            return bad("attack_ratio must be positive");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        self.train.validate().map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Every setting that affects artifact bytes, in a fixed order.
    pub fn canonical_entries(&self) -> Vec<(String, String)> {
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut e: Vec<(String, String)> = vec![
            ("seed".into(), self.seed.to_string()),
            ("n_subjects".into(), self.n_subjects.to_string()),
            ("n_test_subjects".into(), self.n_test_subjects.to_string()),
            ("images_per_subject".into(), self.images_per_subject.to_string()),
            ("image_width".into(), self.image_width.to_string()),
            ("image_height".into(), self.image_height.to_string()),
            ("attack_ratio".into(), self.attack_ratio.to_string()),
            ("alpha".into(), self.alpha.to_string()),
            ("profile".into(), self.profile.to_string()),
            ("lbp".into(), self.lbp.to_string()),
            ("train_manifest".into(), opt(&self.train_manifest)),
            ("test_manifest".into(), opt(&self.test_manifest)),
            ("dataset_name".into(), self.dataset_name.clone()),
            ("detector_name".into(), self.detector_name.clone()),
        ];
        e.extend(self.train.entries().into_iter().filter(|(k, _)| *k != "seed").map(|(k, v)| (k.to_string(), v)));
        e.sort();
        e
    }

    /// SHA-256 over the canonical settings; output location and threading
    /// are excluded because they do not change artifact bytes.
    pub fn config_hash(&self) -> String {
        let text: String = self.canonical_entries().iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        hex(&Sha256::digest(text.as_bytes()))
    }

    pub fn descriptor(&self) -> Descriptor {
        Descriptor::new(self.profile.clone(), self.lbp)
    }

    fn dir(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Rewrite relative paths of a manifest stored in sibling directory `from`
/// so they resolve from sibling directory `to`.
fn rebase(m: &mut DatasetManifest, from: &str, to: &str) {
    let own = Path::new("..").join(to);
    m.map_paths(|p| {
        if p.is_absolute() {
            return p.to_path_buf();
        }
        let joined = normalize(&Path::new("..").join(from).join(p));
        joined.strip_prefix(&own).map(Path::to_path_buf).unwrap_or(joined)
    });
}

fn absolutize(m: &mut DatasetManifest) {
    let root = std::path::absolute(m.root()).unwrap_or_else(|_| m.root().to_path_buf());
    m.map_paths(|p| if p.is_absolute() { p.to_path_buf() } else { normalize(&root.join(p)) });
}

/// `n_attacks` distinct unordered index pairs whose subjects differ, in a
/// seeded random order.
pub fn plan_pairs(subjects: &[String], n_attacks: usize, rng: &mut SplitMix64) -> Result<Vec<(usize, usize)>, String> {
    let n = subjects.len();
    let mut all: Vec<(usize, usize)> =
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| subjects[i] != subjects[j]).collect();
    if n_attacks > all.len() {
        return Err(format!("{n_attacks} morphs requested but only {} cross-subject pairs exist", all.len()));
    }
    rng.shuffle(&mut all);
    all.truncate(n_attacks);
    Ok(all)
}

fn subject_of(r: &SampleRecord) -> String {
    r.source_subjects.first().cloned().unwrap_or_else(|| r.sample_id.clone())
}

/// Morph each `(a, b)` pair of sample ids from `manifest`, writing
/// `<id_prefix>NNN.png` into `out_dir`. Returned records use paths relative
/// to `out_dir`. Error messages name the offending sample.
#[allow(clippy::too_many_arguments)]
pub fn morph_batch(
    manifest: &DatasetManifest,
    pairs: &[(String, String)],
    alpha: f64,
    method: MorphMethod,
    out_dir: &Path,
    id_prefix: &str,
    png_text: &[(&str, &str)],
    parallel: bool,
) -> Result<Vec<SampleRecord>, String> {
    let find = |id: &str| {
        manifest.records().iter().find(|r| r.sample_id == id).ok_or_else(|| format!("sample `{id}` is not in the manifest"))
    };
    let load = |r: &SampleRecord| -> Result<_, String> {
        let lm_path = r.landmarks_path.as_ref().ok_or_else(|| format!("sample `{}` has no landmarks_path", r.sample_id))?;
        let lm = parse_landmarks(&manifest.resolve(lm_path), PointCount::AtLeast(3))
            .map_err(|e| format!("sample `{}`: landmarks: {e}", r.sample_id))?;
        let img = ImageBuffer::read_png(&manifest.resolve(&r.image_path))
            .map_err(|e| format!("sample `{}`: image: {e}", r.sample_id))?;
        Ok((img, lm))
    };
    let job = |k: usize| -> Result<SampleRecord, String> {
        let (ida, idb) = &pairs[k];
        let (ra, rb) = (find(ida)?, find(idb)?);
        let (img_a, lm_a) = load(ra)?;
        let (img_b, lm_b) = load(rb)?;
        let id = format!("{id_prefix}{k:03}");
        let spec = MorphSpec { alpha, source_a: ida.clone(), source_b: idb.clone(), output_size: None };
        let img = morph_pair(&img_a, &img_b, &lm_a, &lm_b, &spec).map_err(|e| format!("morph `{id}` of `{ida}` and `{idb}`: {e}"))?;
        let file = format!("{id}.png");
        img.write_png(&out_dir.join(&file), png_text).map_err(|e| format!("morph `{id}`: {e}"))?;
        let (sa, sb) = (subject_of(ra), subject_of(rb));
        Ok(SampleRecord::attack(&id, file, method, [&sa, &sb]))
    };
    if parallel {
        (0..pairs.len()).into_par_iter().map(job).collect()
    } else {
        (0..pairs.len()).map(job).collect()
    }
}

/// Provenance carried by every artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
}

impl Provenance {
    pub fn lines(&self) -> Vec<String> {
        vec![format!("seed={}", self.seed), format!("config_hash={}", self.config_hash)]
    }

    pub fn text(&self) -> String {
        self.lines().join("\n")
    }
}

fn create_dir(dir: &Path, stage: Stage) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| stage_err(stage)(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>, stage: Stage) -> Result<(), PipelineError> {
    std::fs::write(path, contents).map_err(|e| stage_err(stage)(format!("{}: {e}", path.display())))
}

fn morph_plan(bona: &[&SampleRecord], ratio: f64, rng: &mut SplitMix64) -> Result<Vec<(String, String)>, String> {
    let n_attacks = (bona.len() as f64 * ratio + 0.5).floor() as usize;
    let subjects: Vec<String> = bona.iter().map(|r| subject_of(r)).collect();
    Ok(plan_pairs(&subjects, n_attacks, rng)?
        .into_iter()
        .map(|(i, j)| (bona[i].sample_id.clone(), bona[j].sample_id.clone()))
        .collect())
}

pub struct Pipeline {
    pub config: PipelineConfig,
    provenance: Provenance,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let provenance = Provenance { seed: config.seed, config_hash: config.config_hash() };
        Ok(Self { config, provenance })
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    fn png_text(&self) -> Vec<(String, String)> {
        vec![
            ("alpha".into(), self.config.alpha.to_string()),
            ("seed".into(), self.provenance.seed.to_string()),
            ("config_hash".into(), self.provenance.config_hash.clone()),
        ]
    }

    /// Run all stages in order, or only `stage`.
    pub fn run(&self, stage: Option<Stage>) -> Result<Option<EvalReport>, PipelineError> {
        let stages: Vec<Stage> = match stage {
            Some(s) => vec![s],
            None => Stage::ALL.to_vec(),
        };
        let mut report = None;
        for s in stages {
            match s {
                Stage::Corpus => self.corpus()?,
                Stage::Morph => self.morph()?,
                Stage::Split => self.split()?,
                Stage::Extract => self.extract()?,
                Stage::Train => self.train()?,
                Stage::Score => self.score()?,
                Stage::Eval => report = Some(self.eval()?),
            }
            self.write_run_record(s)?;
        }
        Ok(report)
    }

    fn load(&self, dir: &str, stage: Stage) -> Result<DatasetManifest, PipelineError> {
        load_manifest(&self.config.dir(dir).join("manifest.csv")).map_err(|e| stage_err(stage)(e.to_string()))
    }

    fn save(&self, m: &DatasetManifest, dir: &str, stage: Stage) -> Result<(), PipelineError> {
        save_manifest(m, &self.config.dir(dir).join("manifest.csv"), Some(&self.provenance.text()))
            .map_err(|e| stage_err(stage)(e.to_string()))
    }

    fn corpus(&self) -> Result<(), PipelineError> {
        let st = Stage::Corpus;
        let err = stage_err(st);
        let c = &self.config;
        let size = (c.image_width, c.image_height);
        let text = self.png_text();
        let text: Vec<(&str, &str)> = text.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        let prov: Vec<(&str, &str)> = text.iter().copied().filter(|(k, _)| *k != "alpha").collect();

        let train_dir = c.dir("corpus_train");
        create_dir(&train_dir, st)?;
        let mut train = match &c.train_manifest {
            Some(p) => {
                let mut m = load_manifest(p).map_err(|e| err(e.to_string()))?;
                absolutize(&mut m);
                m
            }
            None => {
                let seed = SplitMix64::derive(c.seed, STREAM_TRAIN_CORPUS).next_u64();
                make_toy_corpus(&train_dir, c.n_subjects, c.images_per_subject, size, seed, "s", &prov).map_err(|e| err(e.to_string()))?
            }
        };
        train.set_all_splits(Split::Train);
        self.save(&train, "corpus_train", st)?;

        let test_dir = c.dir("corpus_test");
        create_dir(&test_dir, st)?;
        let mut test = match &c.test_manifest {
            Some(p) => {
                let mut m = load_manifest(p).map_err(|e| err(e.to_string()))?;
                absolutize(&mut m);
                m
            }
            None => {
                let seed = SplitMix64::derive(c.seed, STREAM_TEST_CORPUS).next_u64();
                let bona = make_toy_corpus(&test_dir, c.n_test_subjects, c.images_per_subject, size, seed, "t", &prov).map_err(|e| err(e.to_string()))?;
                let refs: Vec<&SampleRecord> = bona.records().iter().collect();
                let mut rng = SplitMix64::derive(c.seed, STREAM_TEST_PAIRS);
                let pairs = morph_plan(&refs, c.attack_ratio, &mut rng).map_err(&err)?;
                let attacks = morph_batch(&bona, &pairs, c.alpha, MorphMethod::OpenCV, &test_dir, "tm", &text, c.parallel)
                    .map_err(&err)?;
                let mut records = bona.records().to_vec();
                records.extend(attacks);
                DatasetManifest::new("test", records, Split::Test).map_err(|e| err(e.to_string()))?
            }
        };
        test.set_all_splits(Split::Test);
        self.save(&test, "corpus_test", st)
    }

    fn morph(&self) -> Result<(), PipelineError> {
        let st = Stage::Morph;
        let err = stage_err(st);
        let c = &self.config;
        let src = self.load("corpus_train", st)?;
        let out_dir = c.dir("morphs");
        create_dir(&out_dir, st)?;
        let bona: Vec<&SampleRecord> = src.records().iter().filter(|r| r.label == Label::BonaFide).collect();
        let mut rng = SplitMix64::derive(c.seed, STREAM_TRAIN_PAIRS);
        let pairs = morph_plan(&bona, c.attack_ratio, &mut rng).map_err(&err)?;
        let text = self.png_text();
        let text: Vec<(&str, &str)> = text.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        let attacks = morph_batch(&src, &pairs, c.alpha, MorphMethod::OpenCV, &out_dir, "m", &text, c.parallel).map_err(&err)?;
        let mut bona_m = DatasetManifest::new("morphs", bona.into_iter().cloned().collect(), Split::Train).map_err(|e| err(e.to_string()))?;
        rebase(&mut bona_m, "corpus_train", "morphs");
        let mut records = bona_m.records().to_vec();
        records.extend(attacks);
        let m = DatasetManifest::new("morphs", records, Split::Train).map_err(|e| err(e.to_string()))?;
        self.save(&m, "morphs", st)
    }

    fn split(&self) -> Result<(), PipelineError> {
        let st = Stage::Split;
        let src = self.load("morphs", st)?;
        let mut m = split_holdout(&src, self.config.train.holdout_fraction, self.config.seed).map_err(|e| stage_err(st)(e.to_string()))?;
        create_dir(&self.config.dir("split"), st)?;
        rebase(&mut m, "morphs", "split");
        self.save(&m, "split", st)
    }

    fn extract(&self) -> Result<(), PipelineError> {
        let st = Stage::Extract;
        let m = self.load("split", st)?;
        let set = extract_manifest(&m, &self.config.descriptor(), self.config.train.augment_flip, self.config.parallel)
            .map_err(|e| stage_err(st)(e.to_string()))?;
        let dir = self.config.dir("features");
        create_dir(&dir, st)?;
        set.write(&dir.join("train.bin")).map_err(|e| stage_err(st)(e.to_string()))
    }

    fn train(&self) -> Result<(), PipelineError> {
        let st = Stage::Train;
        let err = stage_err(st);
        let features = FeatureSet::read(&self.config.dir("features").join("train.bin")).map_err(|e| err(e.to_string()))?;
        let m = self.load("split", st)?;
        let (model, mut log) = train(&features, &m, &self.config.descriptor().id(), &self.config.train).map_err(|e| err(e.to_string()))?;
        log.header.push(("config_hash".into(), self.provenance.config_hash.clone()));
        let dir = self.config.dir("model");
        create_dir(&dir, st)?;
        model.save(&dir.join("model.mkm")).map_err(|e| err(e.to_string()))?;
        write_file(&dir.join("train_log.csv"), log.to_csv(), st)
    }

    fn score(&self) -> Result<(), PipelineError> {
        let st = Stage::Score;
        let err = stage_err(st);
        let model = DetectorModel::load(&self.config.dir("model").join("model.mkm")).map_err(|e| err(e.to_string()))?;
        let m = self.load("corpus_test", st)?;
        let scores = score_manifest(&model, &m, &self.config.profile, self.config.parallel).map_err(|e| err(e.to_string()))?;
        let dir = self.config.dir("scores");
        create_dir(&dir, st)?;
        scores.write(&dir.join("scores.csv"), &self.provenance.lines()).map_err(|e| err(e.to_string()))
    }

    fn eval(&self) -> Result<EvalReport, PipelineError> {
        let st = Stage::Eval;
        let err = stage_err(st);
        let c = &self.config;
        let scores = ScoreFile::read(&c.dir("scores").join("scores.csv")).map_err(|e| err(e.to_string()))?;
        let mut report = evaluate(&scores, &c.dataset_name, &c.detector_name, true).map_err(|e| err(e.to_string()))?;
        report.seed = Some(self.provenance.seed);
        report.config_hash = Some(self.provenance.config_hash.clone());
        let curve = roc(&scores).map_err(|e| err(e.to_string()))?;
        let dir = c.dir("eval");
        create_dir(&dir, st)?;
        write_file(&dir.join("report.json"), report.to_json(), st)?;
        let header: String = self.provenance.lines().iter().map(|l| format!("# {l}\n")).collect();
        write_file(&dir.join("curves.csv"), header + &curve.to_csv(), st)?;
        let mut rows = vec![TableRow::from_report(&report)];
        for (method, bundle) in &report.per_method {
            rows.push(TableRow {
                detector: report.detector.clone(),
                dataset: format!("{}:{}", report.dataset, method.abbrev()),
                metrics: *bundle,
            });
        }
        write_file(&dir.join("report.txt"), render_table(&rows), st)?;
        Ok(report)
    }

    /// `run.txt`: provenance plus a digest of every artifact present.
    fn write_run_record(&self, stage: Stage) -> Result<(), PipelineError> {
        let root = &self.config.output_dir;
        let mut files = Vec::new();
        collect_files(root, root, &mut files).map_err(|e| stage_err(stage)(format!("{}: {e}", root.display())))?;
        files.retain(|f| f != Path::new("run.txt"));
        files.sort();
        let mut out: String = self.provenance.lines().iter().map(|l| format!("{l}\n")).collect();
        for f in files {
            let bytes = std::fs::read(root.join(&f)).map_err(|e| stage_err(stage)(format!("{}: {e}", f.display())))?;
            out.push_str(&format!("{}  {}\n", hex(&Sha256::digest(&bytes)), f.display()));
        }
        write_file(&root.join("run.txt"), out, stage)
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

/// Load, then run the whole pipeline or one stage.
pub fn run_pipeline(config: PipelineConfig, stage: Option<Stage>) -> Result<Option<EvalReport>, PipelineError> {
    Pipeline::new(config)?.run(stage)
}
