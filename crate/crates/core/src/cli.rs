//! The `grouprank` command line: channel training, scoring, ranking and
//! evaluation, with every stage communicating through files.
//!
//! Score files hold one record per image:
//!
//! ```text
//! score <set> <index> <e> <a> <q> <k1> <k2> <k3> <k4> <k5> <k6>
//! ```
//!
//! where `e a q` are the channel scores and `k1..k6` the fusion vector.
//! Lines starting with `#` are comments.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::aesthetics::{self, AestheticPair, AestheticsConfig, AestheticsModel};
use crate::cnn::{BackboneSpec, ConvSpec};
use crate::dataset::{
    augment_dataset, generate_synthetic, Dataset, SyntheticConfig, AUGMENT_SIGMA,
    DEFAULT_MIN_ANNOTATIONS,
};
use crate::emotion::{self, ScnnConfig, ScnnModel, TrainingSample};
use crate::error::{Error, Result};
use crate::fusion::{
    fuse, ChannelBounds, ChannelScores, FittedRanker, PoolMode, RankNetConfig, RankSvmConfig,
    Ranker, RankerConfig, ScoredSet,
};
use crate::metrics::{cross_validate, EvalReport};
use crate::quality::{
    distortion_corpus, extract_features, train_quality_model, QualityModel, SvrConfig,
};
use crate::raster::{read_image, to_grayscale, RasterImage, RealGrid};

#[derive(Debug, Parser)]
#[command(name = "grouprank", version, about = "Rank co-captured group photos")]
pub struct Cli {
    /// Print progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every image of a manifest with the three channel models.
    Score(ScoreArgs),
    /// Train a channel model or a ranker.
    Train(TrainArgs),
    /// Rank the images of every set.
    Rank(RankArgs),
    /// Cross-validate rankers against the manifest's ground truth.
    Evaluate(EvaluateArgs),
    /// Render a synthetic dataset with images, saliency maps and a manifest.
    Generate(GenerateArgs),
    /// Generate, train, score and evaluate end to end in one directory.
    Demo(DemoArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub model_emotion: Option<PathBuf>,
    #[arg(long)]
    pub model_aesthetics: Option<PathBuf>,
    #[arg(long)]
    pub model_quality: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub models: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainTarget {
    Emotion,
    Aesthetics,
    Quality,
    Ranker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RankerChoice {
    Mean,
    Max,
    Ranksvm,
    Ranknet,
}

impl RankerChoice {
    fn pool(self) -> Option<PoolMode> {
        match self {
            RankerChoice::Mean => Some(PoolMode::Mean),
            RankerChoice::Max => Some(PoolMode::Max),
            _ => None,
        }
    }

    fn config(self, run: &RunConfig) -> RankerConfig {
        match self {
            RankerChoice::Mean => RankerConfig::Pool(PoolMode::Mean),
            RankerChoice::Max => RankerConfig::Pool(PoolMode::Max),
            RankerChoice::Ranksvm => RankerConfig::RankSvm(run.ranksvm.clone()),
            RankerChoice::Ranknet => RankerConfig::RankNet(run.ranknet.clone()),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub target: TrainTarget,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Score file (ranker training).
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Ranker to train (ranker training).
    #[arg(long, value_enum)]
    pub ranker: Option<RankerChoice>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model file; the training log is written to `<out>.log`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[command(flatten)]
    pub models: ModelArgs,
    #[arg(long, value_enum)]
    pub ranker: RankerChoice,
    #[arg(long)]
    pub model_ranker: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[command(flatten)]
    pub models: ModelArgs,
    /// Rankers to evaluate; all four when omitted.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub ranker: Vec<RankerChoice>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for report.txt, report.kv and report.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 70)]
    pub sets: usize,
    #[arg(long, default_value_t = 3)]
    pub images: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, default_value_t = 40)]
    pub sets: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Hyper-parameters read from the `--config` TOML file. Every section and
/// key is optional.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub emotion: ScnnConfig,
    pub aesthetics: AestheticsConfig,
    pub quality: SvrConfig,
    pub ranksvm: RankSvmConfig,
    pub ranknet: RankNetConfig,
    /// Minimum valid annotations per set when aggregating ground truth.
    pub min_annotations: usize,
    /// Score-space augmentation factor applied to training folds.
    pub augment: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            emotion: ScnnConfig::default(),
            aesthetics: AestheticsConfig::default(),
            quality: SvrConfig::default(),
            ranksvm: RankSvmConfig::default(),
            ranknet: RankNetConfig::default(),
            min_annotations: DEFAULT_MIN_ANNOTATIONS,
            augment: 1,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::parse(&text)
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.emotion.seed = s;
            self.aesthetics.seed = s;
            self.quality.seed = s;
            self.ranksvm.seed = s;
            self.ranknet.seed = s;
        }
        self
    }

    /// Settings used by `demo`: small 32-pixel networks and a rank-network
    /// step size large enough to converge in a few hundred epochs.
    pub fn demo(seed: u64) -> Self {
        let conv = ConvSpec {
            filters: 6,
            kernel: 3,
            stride: 1,
            pool: true,
        };
        let backbone = BackboneSpec {
            input_size: 32,
            conv: vec![conv, conv],
            dense: vec![16, 1],
        };
        Self {
            emotion: ScnnConfig {
                backbone: backbone.clone(),
                eta: 1e-2,
                epochs_phase1: 60,
                epochs_phase2: 5,
                ..ScnnConfig::default()
            },
            aesthetics: AestheticsConfig {
                backbone,
                eta: 3e-2,
                epochs: 20,
                ..AestheticsConfig::default()
            },
            ranknet: RankNetConfig {
                learning_rate: 0.05,
                epochs: 200,
                ..RankNetConfig::default()
            },
            ..Self::default()
        }
        .with_seed(Some(seed))
    }
}

/// Parses arguments and runs the command.
pub fn run(cli: Cli) -> Result<()> {
    let verbose = cli.verbose;
    match cli.command {
        Command::Score(a) => cmd_score(&a),
        Command::Train(a) => cmd_train(&a, verbose),
        Command::Rank(a) => cmd_rank(&a),
        Command::Evaluate(a) => cmd_evaluate(&a, verbose),
        Command::Generate(a) => cmd_generate(&a),
        Command::Demo(a) => cmd_demo(&a, verbose),
    }
}

fn note(verbose: u8, msg: impl AsRef<str>) {
    if verbose > 0 {
        eprintln!("{}", msg.as_ref());
    }
}

/// Writes through a temporary sibling and renames, so a failed run never
/// leaves a partial artifact behind.
pub fn write_output(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn load_gray(path: &Path) -> Result<RasterImage> {
    Ok(to_grayscale(&read_image(path)?))
}

fn load_saliency(path: &Path) -> Result<RealGrid> {
    let img = load_gray(path)?;
    RealGrid::new(
        img.width(),
        img.height(),
        img.data().iter().map(|v| v / 255.0).collect(),
    )
}

// ---------------------------------------------------------------------------
// score files

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub set_id: String,
    pub index: usize,
    pub scores: ChannelScores,
}

pub fn format_scores(records: &[ScoreRecord]) -> Result<String> {
    let mut out = String::from("# set index emotion aesthetics quality k1 k2 k3 k4 k5 k6\n");
    for r in records {
        let s = &r.scores;
        let _ = write!(
            out,
            "score {} {} {} {} {}",
            r.set_id, r.index, s.emotion, s.aesthetics, s.quality
        );
        for k in fuse(s)?.values() {
            let _ = write!(out, " {k}");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_scores(text: &str) -> Result<Vec<ScoreRecord>> {
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::ManifestParse {
            line: i + 1,
            message,
        };
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 12 || tok[0] != "score" {
            return Err(err(format!(
                "expected `score` with 11 fields, got `{line}`"
            )));
        }
        let index: usize = tok[2]
            .parse()
            .map_err(|_| err(format!("bad index `{}`", tok[2])))?;
        let v: Vec<f64> = tok[3..6]
            .iter()
            .map(|t| t.parse().map_err(|_| err(format!("bad score `{t}`"))))
            .collect::<Result<_>>()?;
        let scores = ChannelScores::new(v[0], v[1], v[2]).map_err(|e| err(e.to_string()))?;
        records.push(ScoreRecord {
            set_id: tok[1].to_string(),
            index,
            scores,
        });
    }
    Ok(records)
}

fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scores(&text)
}

/// Channel scores of each manifest set, in manifest order.
fn scores_by_set(dataset: &Dataset, records: &[ScoreRecord]) -> Result<Vec<Vec<ChannelScores>>> {
    let mut map: HashMap<(&str, usize), ChannelScores> = HashMap::new();
    for r in records {
        map.insert((r.set_id.as_str(), r.index), r.scores);
    }
    dataset
        .sets
        .iter()
        .map(|set| {
            (0..set.images.len())
                .map(|i| {
                    map.get(&(set.set_id.as_str(), i)).copied().ok_or_else(|| {
                        Error::MissingLabel(format!("no scores for set `{}` image {i}", set.set_id))
                    })
                })
                .collect()
        })
        .collect()
}

pub struct ChannelModels {
    pub emotion: ScnnModel,
    pub aesthetics: AestheticsModel,
    pub quality: QualityModel,
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::InvalidArgument(format!("--{flag} is required")))
}

impl ChannelModels {
    pub fn load(args: &ModelArgs) -> Result<Self> {
        Ok(Self {
            emotion: ScnnModel::load(required(&args.model_emotion, "model-emotion")?)?,
            aesthetics: AestheticsModel::load(required(
                &args.model_aesthetics,
                "model-aesthetics",
            )?)?,
            quality: QualityModel::load(required(&args.model_quality, "model-quality")?)?,
        })
    }

    pub fn score(&self, image: &RasterImage) -> Result<ChannelScores> {
        let e = emotion::predict_emotion(&self.emotion, image)?;
        let a = aesthetics::predict_aesthetics(&self.aesthetics, image)?;
        let q = self.quality.predict_normalized(&extract_features(image)?);
        ChannelScores::new(e, a, q)
    }
}

pub fn score_dataset(dataset: &Dataset, models: &ChannelModels) -> Result<Vec<ScoreRecord>> {
    let mut records = Vec::new();
    for set in &dataset.sets {
        for (index, img) in set.images.iter().enumerate() {
            let image = load_gray(&dataset.resolve(&img.path))?;
            records.push(ScoreRecord {
                set_id: set.set_id.clone(),
                index,
                scores: models.score(&image)?,
            });
        }
    }
    Ok(records)
}

fn obtain_scores(
    dataset: &Dataset,
    scores: &Option<PathBuf>,
    models: &ModelArgs,
) -> Result<Vec<Vec<ChannelScores>>> {
    let records = match scores {
        Some(p) => read_scores(p)?,
        None => score_dataset(dataset, &ChannelModels::load(models)?)?,
    };
    scores_by_set(dataset, &records)
}

fn scored_sets(
    dataset: &Dataset,
    scores: Vec<Vec<ChannelScores>>,
    min_annotations: usize,
) -> Result<Vec<ScoredSet>> {
    let truths = dataset.ground_truths(min_annotations)?;
    Ok(dataset
        .sets
        .iter()
        .zip(scores)
        .zip(truths)
        .map(|((set, scores), gt)| ScoredSet {
            set_id: set.set_id.clone(),
            scores,
            true_ranks: gt.ranks,
        })
        .collect())
}

// ---------------------------------------------------------------------------
// commands

pub fn cmd_score(args: &ScoreArgs) -> Result<()> {
    let dataset = Dataset::load(&args.manifest)?;
    let models = ChannelModels::load(&args.models)?;
    let records = score_dataset(&dataset, &models)?;
    write_output(&args.out, format_scores(&records)?.as_bytes())
}

fn log_path(out: &Path) -> PathBuf {
    let mut p = out.as_os_str().to_owned();
    p.push(".log");
    PathBuf::from(p)
}

fn label<T>(value: Option<T>, set: &str, index: usize, what: &str) -> Result<T> {
    value.ok_or_else(|| {
        Error::MissingLabel(format!("set `{set}` image {index} has no {what} label"))
    })
}

pub fn emotion_samples(dataset: &Dataset, with_saliency: bool) -> Result<Vec<TrainingSample>> {
    let mut samples = Vec::new();
    for set in &dataset.sets {
        for (i, img) in set.images.iter().enumerate() {
            let y = label(img.labels.happiness, &set.set_id, i, "happiness")?;
            let saliency = match (&img.saliency, with_saliency) {
                (Some(p), true) => Some(load_saliency(&dataset.resolve(p))?),
                _ => None,
            };
            samples.push(TrainingSample::new(
                load_gray(&dataset.resolve(&img.path))?,
                y,
                saliency,
            )?);
        }
    }
    Ok(samples)
}

/// All within-set pairs of images carrying aesthetics labels.
pub fn aesthetic_pairs(dataset: &Dataset) -> Result<Vec<AestheticPair>> {
    let mut pairs = Vec::new();
    for set in &dataset.sets {
        let labelled: Vec<(RasterImage, f64)> = set
            .images
            .iter()
            .enumerate()
            .map(|(i, img)| {
                let y = label(img.labels.aesthetics, &set.set_id, i, "aesthetics")?;
                Ok((load_gray(&dataset.resolve(&img.path))?, y))
            })
            .collect::<Result<_>>()?;
        for i in 0..labelled.len() {
            for j in i + 1..labelled.len() {
                pairs.push(AestheticPair {
                    image_a: labelled[i].0.clone(),
                    image_b: labelled[j].0.clone(),
                    score_a: labelled[i].1,
                    score_b: labelled[j].1,
                });
            }
        }
    }
    Ok(pairs)
}

fn train_emotion_model(dataset: &Dataset, config: &ScnnConfig) -> Result<(ScnnModel, String)> {
    let samples = emotion_samples(dataset, config.epochs_phase2 > 0)?;
    let mut model = ScnnModel::new(config)?;
    let history = emotion::train(&mut model, &samples, config)?;
    let mut log = String::from("# phase epoch reg_loss sal_loss\n");
    for h in &history {
        let phase = match h.phase {
            emotion::Phase::Regression => "regression",
            emotion::Phase::Saliency => "saliency",
        };
        let sal = h.sal_loss.map_or("-".to_string(), |v| v.to_string());
        let _ = writeln!(log, "{phase} {} {} {sal}", h.epoch, h.reg_loss);
    }
    Ok((model, log))
}

fn train_aesthetics_model(
    dataset: &Dataset,
    config: &AestheticsConfig,
) -> Result<(AestheticsModel, String)> {
    let pairs = aesthetic_pairs(dataset)?;
    let mut model = AestheticsModel::new(config)?;
    let history = aesthetics::train_aesthetics(&mut model, &pairs, config)?;
    let mut log = String::from("# epoch loss\n");
    for (e, l) in history.iter().enumerate() {
        let _ = writeln!(log, "{e} {l}");
    }
    Ok((model, log))
}

/// Trains on the manifest's quality labels; without any labels the images
/// are treated as pristine and a synthetic distortion corpus is built.
fn train_quality(dataset: &Dataset, config: &SvrConfig) -> Result<(QualityModel, String)> {
    let images: Vec<(&str, Option<f64>)> = dataset
        .sets
        .iter()
        .flat_map(|s| s.images.iter().map(|i| (i.path.as_str(), i.labels.quality)))
        .collect();
    let any_labelled = images.iter().any(|(_, q)| q.is_some());
    let (features, targets) = if any_labelled {
        let mut features = Vec::new();
        let mut targets = Vec::new();
        for set in &dataset.sets {
            for (i, img) in set.images.iter().enumerate() {
                let q = label(img.labels.quality, &set.set_id, i, "quality")?;
                features.push(extract_features(&load_gray(&dataset.resolve(&img.path))?)?);
                targets.push(q);
            }
        }
        (features, targets)
    } else {
        let grids = images
            .iter()
            .map(|(p, _)| Ok(load_gray(&dataset.resolve(p))?.luminance()))
            .collect::<Result<Vec<_>>>()?;
        distortion_corpus(&grids, config.seed)?
    };
    let model = train_quality_model(&features, &targets, config)?;
    let log = format!(
        "# samples score_min score_max\n{} {} {}\n",
        features.len(),
        model.score_min,
        model.score_max
    );
    Ok((model, log))
}

pub fn cmd_train(args: &TrainArgs, verbose: u8) -> Result<()> {
    let config = RunConfig::load(args.config.as_deref())?.with_seed(args.seed);
    let dataset = Dataset::load(&args.manifest)?;
    note(verbose, format!("training {:?}", args.target));
    let (model_text, log) = match args.target {
        TrainTarget::Emotion => {
            let (m, log) = train_emotion_model(&dataset, &config.emotion)?;
            (m.to_text(), log)
        }
        TrainTarget::Aesthetics => {
            let (m, log) = train_aesthetics_model(&dataset, &config.aesthetics)?;
            (m.to_text(), log)
        }
        TrainTarget::Quality => {
            let (m, log) = train_quality(&dataset, &config.quality)?;
            (m.to_text(), log)
        }
        TrainTarget::Ranker => {
            let choice = args
                .ranker
                .ok_or_else(|| Error::InvalidArgument("--ranker is required".into()))?;
            let scores_path = required(&args.scores, "scores")?;
            let scores = scores_by_set(&dataset, &read_scores(scores_path)?)?;
            let sets = scored_sets(&dataset, scores, config.min_annotations)?;
            let sets = augment_dataset(
                &sets,
                config.augment.max(1),
                AUGMENT_SIGMA,
                config.ranksvm.seed,
            )?;
            let fitted = choice.config(&config).fit(&sets, 0)?;
            let log = format!("# ranker sets\n{} {}\n", fitted.ranker.name(), sets.len());
            (fitted.to_text(), log)
        }
    };
    write_output(&args.out, model_text.as_bytes())?;
    write_output(&log_path(&args.out), log.as_bytes())
}

pub fn cmd_rank(args: &RankArgs) -> Result<()> {
    let dataset = Dataset::load(&args.manifest)?;
    let ranker = match (&args.model_ranker, args.ranker.pool()) {
        (Some(path), _) => {
            let fitted = FittedRanker::load(path)?;
            let expected = args.ranker.config(&RunConfig::default()).name();
            if fitted.ranker.name() != expected {
                return Err(Error::InvalidArgument(format!(
                    "{} holds a {} ranker, not {expected}",
                    path.display(),
                    fitted.ranker.name()
                )));
            }
            fitted
        }
        (None, Some(mode)) => FittedRanker {
            bounds: ChannelBounds::identity(),
            ranker: Ranker::Pool(mode),
        },
        (None, None) => {
            return Err(Error::UntrainedRanker(format!(
                "{:?} needs --model-ranker",
                args.ranker
            )))
        }
    };
    let scores = obtain_scores(&dataset, &args.scores, &args.models)?;
    let mut out = String::from("# per set: rank image score\n");
    for (set, set_scores) in dataset.sets.iter().zip(&scores) {
        let values = ranker.score_set(set_scores)?;
        let ranks = ranker.rank(set_scores)?;
        let mut order: Vec<usize> = (0..ranks.len()).collect();
        order.sort_by_key(|&i| ranks[i]);
        let _ = writeln!(out, "set {}", set.set_id);
        for i in order {
            let _ = writeln!(
                out,
                "rank {} image {i} {} score {}",
                ranks[i], set.images[i].path, values[i]
            );
        }
    }
    write_output(&args.out, out.as_bytes())
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodReport {
    pub method: String,
    pub label: String,
    #[serde(flatten)]
    pub report: EvalReport,
    pub folds: Vec<EvalReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationSummary {
    pub folds: usize,
    pub seed: u64,
    pub augment: usize,
    pub methods: Vec<MethodReport>,
}

impl EvaluationSummary {
    /// Method x BIM / PSP / rho table.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{}-fold cross-validation, seed {}, {} sets\n\n",
            self.folds,
            self.seed,
            self.methods.first().map_or(0, |m| m.report.n_sets)
        );
        let _ = writeln!(
            out,
            "{:<14} {:>8} {:>8} {:>10}",
            "Method", "BIM", "PSP", "Corr (rho)"
        );
        for m in &self.methods {
            let _ = writeln!(
                out,
                "{:<14} {:>8.2} {:>8.2} {:>10.2}",
                m.label, m.report.bim, m.report.psp, m.report.rho
            );
        }
        out
    }

    pub fn key_values(&self) -> String {
        let mut out = format!(
            "folds {}\nseed {}\naugment {}\n",
            self.folds, self.seed, self.augment
        );
        for m in &self.methods {
            let r = &m.report;
            let _ = writeln!(out, "{}.bim {}", m.method, r.bim);
            let _ = writeln!(out, "{}.psp {}", m.method, r.psp);
            let _ = writeln!(out, "{}.rho {}", m.method, r.rho);
            let _ = writeln!(out, "{}.n_sets {}", m.method, r.n_sets);
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        write_output(&dir.join("report.txt"), self.table().as_bytes())?;
        write_output(&dir.join("report.kv"), self.key_values().as_bytes())?;
        write_output(&dir.join("report.json"), (json + "\n").as_bytes())
    }
}

pub const ALL_RANKERS: [RankerChoice; 4] = [
    RankerChoice::Mean,
    RankerChoice::Max,
    RankerChoice::Ranksvm,
    RankerChoice::Ranknet,
];

/// Cross-validates each requested ranker on the same folds.
pub fn evaluate_sets(
    sets: &[ScoredSet],
    rankers: &[RankerChoice],
    config: &RunConfig,
    folds: usize,
    seed: u64,
) -> Result<EvaluationSummary> {
    let rankers = if rankers.is_empty() {
        &ALL_RANKERS[..]
    } else {
        rankers
    };
    let augment = config.augment.max(1);
    let mut methods = Vec::new();
    for &choice in rankers {
        let rc = choice.config(config);
        let method = Augmented {
            inner: rc.clone(),
            factor: augment,
            seed,
        };
        let cv = cross_validate(sets, &method, folds, seed)?;
        methods.push(MethodReport {
            method: rc.name().to_string(),
            label: rc.label().to_string(),
            report: cv.report,
            folds: cv.folds,
        });
    }
    Ok(EvaluationSummary {
        folds,
        seed,
        augment,
        methods,
    })
}

/// Augments each training fold before fitting.
struct Augmented {
    inner: RankerConfig,
    factor: usize,
    seed: u64,
}

impl crate::metrics::RankingMethod for Augmented {
    fn fit(&self, train: &[ScoredSet], fold: usize) -> Result<Box<dyn crate::metrics::SetRanker>> {
        let train = augment_dataset(
            train,
            self.factor,
            AUGMENT_SIGMA,
            self.seed.wrapping_add(fold as u64),
        )?;
        crate::metrics::RankingMethod::fit(&self.inner, &train, fold)
    }
}

pub fn cmd_evaluate(args: &EvaluateArgs, verbose: u8) -> Result<()> {
    let config = RunConfig::load(args.config.as_deref())?;
    let dataset = Dataset::load(&args.manifest)?;
    let scores = obtain_scores(&dataset, &args.scores, &args.models)?;
    let sets = scored_sets(&dataset, scores, config.min_annotations)?;
    let summary = evaluate_sets(&sets, &args.ranker, &config, args.folds, args.seed)?;
    note(verbose, summary.table());
    summary.write(&args.out)
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let config = SyntheticConfig {
        n_sets: args.sets,
        images_per_set: args.images,
        noise: args.noise,
        image_size: args.size,
        seed: args.seed,
        ..SyntheticConfig::default()
    };
    generate_synthetic(&config, &args.out)?;
    Ok(())
}

pub fn cmd_demo(args: &DemoArgs, verbose: u8) -> Result<()> {
    let config = RunConfig::demo(args.seed);
    let data_dir = args.out.join("data");
    note(verbose, format!("generating {} sets", args.sets));
    let dataset = generate_synthetic(
        &SyntheticConfig {
            n_sets: args.sets,
            image_size: 48,
            seed: args.seed,
            ..SyntheticConfig::default()
        },
        &data_dir,
    )?;
    let models_dir = args.out.join("models");

    note(verbose, "training quality channel");
    let (quality, log) = train_quality(&dataset, &config.quality)?;
    write_output(
        &models_dir.join("quality.model"),
        quality.to_text().as_bytes(),
    )?;
    write_output(&models_dir.join("quality.model.log"), log.as_bytes())?;

    note(verbose, "training emotion channel");
    let (emotion_model, log) = train_emotion_model(&dataset, &config.emotion)?;
    write_output(
        &models_dir.join("emotion.model"),
        emotion_model.to_text().as_bytes(),
    )?;
    write_output(&models_dir.join("emotion.model.log"), log.as_bytes())?;

    note(verbose, "training aesthetics channel");
    let (aesthetics_model, log) = train_aesthetics_model(&dataset, &config.aesthetics)?;
    write_output(
        &models_dir.join("aesthetics.model"),
        aesthetics_model.to_text().as_bytes(),
    )?;
    write_output(&models_dir.join("aesthetics.model.log"), log.as_bytes())?;

    note(verbose, "scoring");
    let models = ChannelModels {
        emotion: emotion_model,
        aesthetics: aesthetics_model,
        quality,
    };
    let records = score_dataset(&dataset, &models)?;
    write_output(
        &args.out.join("scores.txt"),
        format_scores(&records)?.as_bytes(),
    )?;

    note(verbose, "evaluating");
    let sets = scored_sets(
        &dataset,
        scores_by_set(&dataset, &records)?,
        config.min_annotations,
    )?;
    let summary = evaluate_sets(&sets, &ALL_RANKERS, &config, args.folds, args.seed)?;
    summary.write(&args.out)?;
    print!("{}", summary.table());
    Ok(())
}
