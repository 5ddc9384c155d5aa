use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use morphkit_core::dataset::{load_manifest, save_manifest, split_holdout, summarize, DatasetManifest, SampleRecord};
use morphkit_core::features::{extract_manifest, Descriptor, FeatureSet, LbpConfig};
use morphkit_core::geometry::{delaunay_triangulate, parse_landmarks, PointCount, PreprocessProfile};
use morphkit_core::image::ImageBuffer;
use morphkit_core::kvconfig::KeyValues;
use morphkit_core::metrics::{evaluate, roc, EvalReport};
use morphkit_core::morph::{morph_pair, MorphSpec};
use morphkit_core::pipeline::{run_pipeline, PipelineConfig, PipelineError, Stage};
use morphkit_core::report::{render_table, TableRow};
use morphkit_core::scorer::{score_manifest, validate_score_file, ScoreFile};
use morphkit_core::trainer::{train, DetectorModel, TrainConfig};

/// Exit status for configuration problems.
const EXIT_CONFIG: u8 = 2;
/// Exit status for failures while running an operation.
const EXIT_FAILURE: u8 = 3;

#[derive(Parser)]
#[command(name = "morphkit", version, about = "Face morph generation, detection and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect or split dataset manifests.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Landmark utilities.
    #[command(subcommand)]
    Landmarks(LandmarksCmd),
    /// Morph one image pair, or a batch listed in a pairs CSV.
    Morph(MorphArgs),
    /// Feature extraction.
    #[command(subcommand)]
    Features(FeaturesCmd),
    /// Train a detector head on extracted features.
    Train(TrainArgs),
    /// Score the Test records of a manifest.
    Score(ScoreArgs),
    /// Compute error rates from a score file.
    Eval(EvalArgs),
    /// Render evaluation reports.
    Report(ReportArgs),
    /// Check a score file for format problems.
    Validate { scores: PathBuf },
    /// Run the staged pipeline from a key=value config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this stage.
        #[arg(long)]
        stage: Option<String>,
    },
}

#[derive(Subcommand)]
enum DatasetCmd {
    Summarize {
        manifest: PathBuf,
    },
    Split {
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        holdout: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Subcommand)]
enum LandmarksCmd {
    /// Delaunay triangle indices, one `i j k` per line.
    Triangulate {
        points: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Append frame corners and edge midpoints of a WxH image first.
        #[arg(long)]
        frame: Option<String>,
    },
}

#[derive(Args)]
struct MorphArgs {
    #[arg(long)]
    a: Option<PathBuf>,
    #[arg(long)]
    b: Option<PathBuf>,
    #[arg(long = "lm-a")]
    lm_a: Option<PathBuf>,
    #[arg(long = "lm-b")]
    lm_b: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Pairs CSV `sample_a,sample_b,alpha,out_path`; needs --manifest.
    #[arg(long, conflicts_with_all = ["a", "b"])]
    pairs: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Subcommand)]
enum FeaturesCmd {
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        /// Histogram grid, e.g. `lbp-4x4`.
        #[arg(long, default_value = "lbp-4x4")]
        profile: String,
        /// Crop/resize profile applied first.
        #[arg(long, default_value = "hrnet")]
        preprocess: String,
        /// Also write mirrored-image rows for Train records.
        #[arg(long)]
        flip: bool,
        #[arg(long)]
        parallel: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// key=value training config; defaults apply to absent keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "lbp-4x4")]
    profile: String,
    #[arg(long, default_value = "hrnet")]
    preprocess: String,
    /// Training log CSV; defaults to `<output>.log.csv`.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "hrnet")]
    profile: String,
    #[arg(long)]
    parallel: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    scores: PathBuf,
    #[arg(long = "by-method")]
    by_method: bool,
    /// Scores are bona-fide-high; map s to 1 - s first.
    #[arg(long)]
    invert: bool,
    #[arg(long, default_value = "data")]
    dataset: String,
    #[arg(long, default_value = "detector")]
    detector: String,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    curves: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Table,
    Json,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON files, one table row each.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    format: ReportFormat,
    /// Add one row per morph method.
    #[arg(long = "by-method")]
    by_method: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

/// Errors that map to the configuration exit status.
#[derive(Debug)]
struct ConfigProblem(String);

impl std::fmt::Display for ConfigProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigProblem {}

fn config_problem(msg: impl Into<String>) -> anyhow::Error {
    ConfigProblem(msg.into()).into()
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn descriptor(preprocess: &str, profile: &str) -> Result<Descriptor> {
    let pre: PreprocessProfile = preprocess.parse().map_err(config_problem)?;
    let lbp: LbpConfig = profile.parse().map_err(|e: morphkit_core::features::FeatureError| config_problem(e.to_string()))?;
    Ok(Descriptor::new(pre, lbp))
}

fn parse_frame(s: &str) -> Result<(f64, f64)> {
    let (w, h) = s.split_once('x').ok_or_else(|| config_problem(format!("frame `{s}` is not WxH")))?;
    let w: f64 = w.parse().map_err(|_| config_problem(format!("bad frame width in `{s}`")))?;
    let h: f64 = h.parse().map_err(|_| config_problem(format!("bad frame height in `{s}`")))?;
    Ok((w, h))
}

fn cmd_dataset(cmd: DatasetCmd) -> Result<()> {
    match cmd {
        DatasetCmd::Summarize { manifest } => {
            let m = load_manifest(&manifest)?;
            println!("{}", summarize(&m));
        }
        DatasetCmd::Split { manifest, holdout, seed, output } => {
            let m = load_manifest(&manifest)?;
            let mut split = split_holdout(&m, holdout, seed)?;
            split.relocate(output.parent().unwrap_or(Path::new("")));
            save_manifest(&split, &output, Some(&format!("seed={seed}\nholdout_fraction={holdout}")))?;
            println!("{}", summarize(&split));
        }
    }
    Ok(())
}

fn cmd_landmarks(cmd: LandmarksCmd) -> Result<()> {
    let LandmarksCmd::Triangulate { points, output, frame } = cmd;
    let mut lm = parse_landmarks(&points, PointCount::AtLeast(3))?;
    if let Some(f) = frame {
        let (w, h) = parse_frame(&f)?;
        lm = lm.with_frame_boundary(w, h);
    }
    let mesh = delaunay_triangulate(&lm)?;
    emit(output.as_deref(), &mesh.to_text())
}

fn cmd_morph(args: MorphArgs) -> Result<()> {
    if let Some(pairs) = &args.pairs {
        let manifest = args.manifest.as_ref().ok_or_else(|| config_problem("--pairs needs --manifest"))?;
        return morph_pairs_file(&load_manifest(manifest)?, pairs);
    }
    let need = |p: &Option<PathBuf>, flag: &str| p.clone().ok_or_else(|| config_problem(format!("missing {flag}")));
    let (a, b) = (need(&args.a, "--a")?, need(&args.b, "--b")?);
    let (la, lb) = (need(&args.lm_a, "--lm-a")?, need(&args.lm_b, "--lm-b")?);
    let out = need(&args.output, "--output")?;
    let img = morph_files(&a, &b, &la, &lb, args.alpha)?;
    img.write_png(&out, &[("alpha", &args.alpha.to_string())])?;
    Ok(())
}

fn morph_files(a: &Path, b: &Path, la: &Path, lb: &Path, alpha: f64) -> Result<ImageBuffer> {
    let img_a = ImageBuffer::read_png(a)?;
    let img_b = ImageBuffer::read_png(b)?;
    let lm_a = parse_landmarks(la, PointCount::AtLeast(3))?;
    let lm_b = parse_landmarks(lb, PointCount::AtLeast(3))?;
    let spec = MorphSpec { alpha, source_a: a.display().to_string(), source_b: b.display().to_string(), output_size: None };
    Ok(morph_pair(&img_a, &img_b, &lm_a, &lm_b, &spec)?)
}

/// Output paths in the pairs file are relative to the pairs file.
fn morph_pairs_file(manifest: &DatasetManifest, pairs: &Path) -> Result<()> {
    let base = pairs.parent().unwrap_or(Path::new(""));
    let mut rdr = csv::Reader::from_path(pairs).with_context(|| format!("reading {}", pairs.display()))?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != ["sample_a", "sample_b", "alpha", "out_path"] {
        return Err(config_problem(format!("{}: expected header sample_a,sample_b,alpha,out_path", pairs.display())));
    }
    let find = |id: &str| -> Result<&SampleRecord> {
        manifest.records().iter().find(|r| r.sample_id == id).ok_or_else(|| anyhow!("sample `{id}` is not in the manifest"))
    };
    let lm_of = |r: &SampleRecord| -> Result<PathBuf> {
        let p = r.landmarks_path.as_ref().ok_or_else(|| anyhow!("sample `{}` has no landmarks_path", r.sample_id))?;
        Ok(manifest.resolve(p))
    };
    let mut n = 0;
    for row in rdr.records() {
        let row = row?;
        let (ra, rb) = (find(&row[0])?, find(&row[1])?);
        let alpha: f64 = row[2].parse().map_err(|_| anyhow!("bad alpha `{}`", &row[2]))?;
        let out = base.join(&row[3]);
        let img = morph_files(&manifest.resolve(&ra.image_path), &manifest.resolve(&rb.image_path), &lm_of(ra)?, &lm_of(rb)?, alpha)
            .with_context(|| format!("morphing `{}` with `{}`", ra.sample_id, rb.sample_id))?;
        img.write_png(&out, &[("alpha", &alpha.to_string())])?;
        n += 1;
    }
    eprintln!("wrote {n} morphs");
    Ok(())
}

fn cmd_features(cmd: FeaturesCmd) -> Result<()> {
    let FeaturesCmd::Extract { manifest, profile, preprocess, flip, parallel, output } = cmd;
    let d = descriptor(&preprocess, &profile)?;
    let m = load_manifest(&manifest)?;
    let set = extract_manifest(&m, &d, flip, parallel)?;
    set.write(&output)?;
    eprintln!("{} rows of {} values ({})", set.len(), set.dim(), d.id());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let config = match &args.config {
        Some(p) => {
            let kv = KeyValues::load(p).map_err(|e| config_problem(e.to_string()))?;
            kv.check_keys(&TrainConfig::KEYS).map_err(|e| config_problem(e.to_string()))?;
            TrainConfig::from_kv(&kv).map_err(|e| config_problem(e.to_string()))?
        }
        None => TrainConfig::default(),
    };
    let d = descriptor(&args.preprocess, &args.profile)?;
    let features = FeatureSet::read(&args.features)?;
    let manifest = load_manifest(&args.manifest)?;
    let (model, log) = train(&features, &manifest, &d.id(), &config)?;
    model.save(&args.output)?;
    let log_path = args.log.unwrap_or_else(|| {
        let mut p = args.output.clone().into_os_string();
        p.push(".log.csv");
        p.into()
    });
    std::fs::write(&log_path, log.to_csv()).with_context(|| format!("writing {}", log_path.display()))?;
    eprintln!("best epoch {} with holdout accuracy {:.4}", model.best_epoch, model.holdout_accuracy);
    Ok(())
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let profile: PreprocessProfile = args.profile.parse().map_err(config_problem)?;
    let model = DetectorModel::load(&args.model)?;
    let manifest = load_manifest(&args.manifest)?;
    let scores = score_manifest(&model, &manifest, &profile, args.parallel)?;
    scores.write(&args.output, &[format!("model={}", model.descriptor_id), format!("seed={}", model.seed)])?;
    eprintln!("scored {} samples", scores.len());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let mut scores = ScoreFile::read(&args.scores)?;
    if args.invert {
        scores = scores.inverted();
    }
    let report = evaluate(&scores, &args.dataset, &args.detector, args.by_method)?;
    if let Some(c) = &args.curves {
        std::fs::write(c, roc(&scores)?.to_csv()).with_context(|| format!("writing {}", c.display()))?;
    }
    match &args.output {
        Some(p) => std::fs::write(p, report.to_json()).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{}", report.to_json()),
    }
    if args.output.is_some() {
        print!("{}", render_table(&[TableRow::from_report(&report)]));
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let mut reports = Vec::new();
    for p in &args.reports {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        reports.push(EvalReport::from_json(&text).with_context(|| format!("parsing {}", p.display()))?);
    }
    let text = match args.format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&reports)?;
            s.push('\n');
            s
        }
        ReportFormat::Table => {
            let mut rows = Vec::new();
            for r in &reports {
                rows.push(TableRow::from_report(r));
                if args.by_method {
                    for (m, b) in &r.per_method {
                        rows.push(TableRow { detector: r.detector.clone(), dataset: format!("{}:{}", r.dataset, m.abbrev()), metrics: *b });
                    }
                }
            }
            render_table(&rows)
        }
    };
    emit(args.output.as_deref(), &text)
}

fn cmd_validate(path: &Path) -> Result<bool> {
    let v = validate_score_file(path)?;
    for e in &v.errors {
        println!("error: {e}");
    }
    for w in &v.warnings {
        println!("warning: {w}");
    }
    println!("{}: {} errors, {} warnings", path.display(), v.errors.len(), v.warnings.len());
    Ok(v.is_ok())
}

fn cmd_run(config: &Path, stage: Option<String>) -> Result<()> {
    let stage: Option<Stage> = stage.map(|s| s.parse()).transpose().map_err(config_problem)?;
    let cfg = PipelineConfig::load(config).map_err(|e| config_problem(e.to_string()))?;
    let out = cfg.output_dir.clone();
    match run_pipeline(cfg, stage) {
        Ok(Some(report)) => {
            print!("{}", render_table(&[TableRow::from_report(&report)]));
            eprintln!("artifacts in {}", out.display());
            Ok(())
        }
        Ok(None) => Ok(()),
        Err(PipelineError::Config(m)) => Err(config_problem(m)),
        Err(e) => Err(e.into()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Dataset(c) => cmd_dataset(c),
        Command::Landmarks(c) => cmd_landmarks(c),
        Command::Morph(a) => cmd_morph(a),
        Command::Features(c) => cmd_features(c),
        Command::Train(a) => cmd_train(a),
        Command::Score(a) => cmd_score(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Report(a) => cmd_report(a),
        Command::Validate { scores } => {
            if cmd_validate(&scores)? {
                Ok(())
            } else {
                bail!("score file failed validation")
            }
        }
        Command::Run { config, stage } => cmd_run(&config, stage),
    }
}

/// `a: b: c`, skipping causes already spelled out by the message above them.
fn error_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !last.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
        last = text;
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", error_chain(&e));
            if e.downcast_ref::<ConfigProblem>().is_some() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::from(EXIT_FAILURE)
            }
        }
    }
}
