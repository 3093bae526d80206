//! Photo-set datasets: manifest parsing and writing, ground-truth aggregation
//! from annotator rankings, score-space augmentation and synthetic data.
//!
//! # Manifest grammar
//!
//! UTF-8, one record per line, tokens separated by whitespace, `#` starts a
//! comment line. Paths are relative to the manifest's directory and may not
//! contain whitespace.
//!
//! ```text
//! set <id>
//! image <index> <path> [saliency <path>] [happiness <v>] [aesthetics <v>] [quality <v>]
//! annotation <annotator> <rank-list> [feature <name>]
//! groundtruth <rank-list>
//! ```
//!
//! `image`, `annotation` and `groundtruth` lines belong to the preceding
//! `set`. Image indices start at 0 and must appear in order. A rank list is
//! comma-separated, 1-based, listing the rank of each image in index order.
//! Feature names: `group_happiness`, `occlusion`, `motion_blur`, `group_pose`,
//! `image_quality`, `face_size`, `face_pose`, `eyes`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::fusion::{ranks_from_scores, ChannelScores, ScoredSet};
use crate::metrics::{check_permutation, is_permutation};
use crate::raster::{write_netpbm, RasterImage, RealGrid};
use crate::synth::{group_scene, GroupLatent};

pub const DEFAULT_MIN_ANNOTATIONS: usize = 5;
pub const AUGMENT_SIGMA: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VisualFeature {
    GroupHappiness,
    Occlusion,
    MotionBlur,
    GroupPose,
    ImageQuality,
    FaceSize,
    FacePose,
    Eyes,
}

impl VisualFeature {
    pub const ALL: [VisualFeature; 8] = [
        VisualFeature::GroupHappiness,
        VisualFeature::Occlusion,
        VisualFeature::MotionBlur,
        VisualFeature::GroupPose,
        VisualFeature::ImageQuality,
        VisualFeature::FaceSize,
        VisualFeature::FacePose,
        VisualFeature::Eyes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VisualFeature::GroupHappiness => "group_happiness",
            VisualFeature::Occlusion => "occlusion",
            VisualFeature::MotionBlur => "motion_blur",
            VisualFeature::GroupPose => "group_pose",
            VisualFeature::ImageQuality => "image_quality",
            VisualFeature::FaceSize => "face_size",
            VisualFeature::FacePose => "face_pose",
            VisualFeature::Eyes => "eyes",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ImageLabels {
    pub happiness: Option<f64>,
    pub aesthetics: Option<f64>,
    pub quality: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageEntry {
    pub path: String,
    pub saliency: Option<String>,
    pub labels: ImageLabels,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub annotator: String,
    pub ranks: Vec<usize>,
    pub feature: Option<VisualFeature>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhotoSet {
    pub set_id: String,
    pub images: Vec<ImageEntry>,
    pub annotations: Vec<AnnotationRecord>,
    pub ground_truth: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub set_id: String,
    pub ranks: Vec<usize>,
    /// Rank-1 votes per image.
    pub vote_counts: Vec<usize>,
    pub tie_broken: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Directory that relative paths resolve against.
    pub root: PathBuf,
    pub sets: Vec<PhotoSet>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::ManifestParse {
        line,
        message: message.into(),
    }
}

fn parse_ranks(token: &str, line: usize) -> Result<Vec<usize>> {
    token
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| parse_err(line, format!("bad rank `{t}` in `{token}`")))
        })
        .collect()
}

fn parse_value(token: Option<&str>, key: &str, line: usize) -> Result<f64> {
    let t = token.ok_or_else(|| parse_err(line, format!("`{key}` needs a value")))?;
    let v: f64 = t
        .parse()
        .map_err(|_| parse_err(line, format!("bad {key} value `{t}`")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite {key} value")));
    }
    Ok(v)
}

fn format_ranks(ranks: &[usize]) -> String {
    ranks
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl Dataset {
    /// Parses manifest text without touching the file system.
    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let mut sets: Vec<PhotoSet> = Vec::new();
        let mut ids = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut tok = trimmed.split_whitespace();
            let keyword = tok.next().unwrap_or_default();
            if keyword == "set" {
                let id = tok
                    .next()
                    .ok_or_else(|| parse_err(line, "`set` needs an id"))?;
                if tok.next().is_some() {
                    return Err(parse_err(line, "trailing tokens after set id"));
                }
                if !ids.insert(id.to_string()) {
                    return Err(Error::DuplicateSet(id.to_string()));
                }
                sets.push(PhotoSet {
                    set_id: id.to_string(),
                    images: Vec::new(),
                    annotations: Vec::new(),
                    ground_truth: None,
                });
                continue;
            }
            let set = sets
                .last_mut()
                .ok_or_else(|| parse_err(line, format!("`{keyword}` before any `set`")))?;
            match keyword {
                "image" => {
                    let index: usize = tok
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| parse_err(line, "`image` needs an integer index"))?;
                    if index != set.images.len() {
                        return Err(parse_err(
                            line,
                            format!("image index {index}, expected {}", set.images.len()),
                        ));
                    }
                    let path = tok
                        .next()
                        .ok_or_else(|| parse_err(line, "`image` needs a path"))?
                        .to_string();
                    let mut entry = ImageEntry {
                        path,
                        saliency: None,
                        labels: ImageLabels::default(),
                    };
                    while let Some(key) = tok.next() {
                        let slot = match key {
                            "saliency" => {
                                let p = tok
                                    .next()
                                    .ok_or_else(|| parse_err(line, "`saliency` needs a path"))?;
                                if entry.saliency.replace(p.to_string()).is_some() {
                                    return Err(parse_err(line, "repeated `saliency`"));
                                }
                                continue;
                            }
                            "happiness" => &mut entry.labels.happiness,
                            "aesthetics" => &mut entry.labels.aesthetics,
                            "quality" => &mut entry.labels.quality,
                            other => {
                                return Err(parse_err(
                                    line,
                                    format!("unknown image field `{other}`"),
                                ))
                            }
                        };
                        if slot.replace(parse_value(tok.next(), key, line)?).is_some() {
                            return Err(parse_err(line, format!("repeated `{key}`")));
                        }
                    }
                    set.images.push(entry);
                }
                "annotation" => {
                    let annotator = tok
                        .next()
                        .ok_or_else(|| parse_err(line, "`annotation` needs an annotator"))?
                        .to_string();
                    let ranks = parse_ranks(
                        tok.next()
                            .ok_or_else(|| parse_err(line, "`annotation` needs ranks"))?,
                        line,
                    )?;
                    let feature = match tok.next() {
                        None => None,
                        Some("feature") => {
                            let name = tok
                                .next()
                                .ok_or_else(|| parse_err(line, "`feature` needs a name"))?;
                            Some(VisualFeature::parse(name).ok_or_else(|| {
                                parse_err(line, format!("unknown feature `{name}`"))
                            })?)
                        }
                        Some(other) => {
                            return Err(parse_err(line, format!("unexpected `{other}`")))
                        }
                    };
                    if tok.next().is_some() {
                        return Err(parse_err(line, "trailing tokens after annotation"));
                    }
                    set.annotations.push(AnnotationRecord {
                        annotator,
                        ranks,
                        feature,
                    });
                }
                "groundtruth" => {
                    if set.ground_truth.is_some() {
                        return Err(parse_err(line, "repeated `groundtruth`"));
                    }
                    let ranks = parse_ranks(
                        tok.next()
                            .ok_or_else(|| parse_err(line, "`groundtruth` needs ranks"))?,
                        line,
                    )?;
                    if tok.next().is_some() {
                        return Err(parse_err(line, "trailing tokens after ground truth"));
                    }
                    set.ground_truth = Some(ranks);
                }
                other => return Err(parse_err(line, format!("unknown record `{other}`"))),
            }
        }
        let dataset = Self {
            root: root.into(),
            sets,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    /// Checks the structural invariants of every set.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for set in &self.sets {
            if !ids.insert(set.set_id.as_str()) {
                return Err(Error::DuplicateSet(set.set_id.clone()));
            }
            let n = set.images.len();
            if n < 2 {
                return Err(Error::InvalidArgument(format!(
                    "set `{}` has {n} images, need at least 2",
                    set.set_id
                )));
            }
            let mut paths = HashSet::new();
            for img in &set.images {
                if !paths.insert(img.path.as_str()) {
                    return Err(Error::InvalidArgument(format!(
                        "set `{}` lists `{}` twice",
                        set.set_id, img.path
                    )));
                }
                let tokens = std::iter::once(&img.path).chain(&img.saliency);
                for p in tokens {
                    if p.is_empty() || p.contains(char::is_whitespace) {
                        return Err(Error::InvalidArgument(format!(
                            "path `{p}` is empty or contains whitespace"
                        )));
                    }
                }
            }
            let rank_lists = set
                .annotations
                .iter()
                .map(|a| &a.ranks)
                .chain(&set.ground_truth);
            for ranks in rank_lists {
                if ranks.len() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "set `{}`: rank list of length {} for {n} images",
                        set.set_id,
                        ranks.len()
                    )));
                }
                check_permutation(ranks)?;
            }
        }
        Ok(())
    }

    /// Loads a manifest and checks that every referenced file exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let dataset = Self::parse(&text, root)?;
        for set in &dataset.sets {
            for (index, img) in set.images.iter().enumerate() {
                for p in std::iter::once(&img.path).chain(&img.saliency) {
                    let full = dataset.resolve(p);
                    if !full.is_file() {
                        return Err(Error::MissingImage {
                            set_id: set.set_id.clone(),
                            index,
                            path: full,
                        });
                    }
                }
            }
        }
        Ok(dataset)
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    /// Canonical manifest text.
    pub fn to_manifest(&self) -> String {
        let mut out = String::new();
        for set in &self.sets {
            let _ = writeln!(out, "set {}", set.set_id);
            for (i, img) in set.images.iter().enumerate() {
                let _ = write!(out, "image {i} {}", img.path);
                if let Some(s) = &img.saliency {
                    let _ = write!(out, " saliency {s}");
                }
                let labels = [
                    ("happiness", img.labels.happiness),
                    ("aesthetics", img.labels.aesthetics),
                    ("quality", img.labels.quality),
                ];
                for (key, value) in labels {
                    if let Some(v) = value {
                        let _ = write!(out, " {key} {v}");
                    }
                }
                out.push('\n');
            }
            for a in &set.annotations {
                let _ = write!(out, "annotation {} {}", a.annotator, format_ranks(&a.ranks));
                if let Some(f) = a.feature {
                    let _ = write!(out, " feature {}", f.name());
                }
                out.push('\n');
            }
            if let Some(gt) = &set.ground_truth {
                let _ = writeln!(out, "groundtruth {}", format_ranks(gt));
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        std::fs::write(path, self.to_manifest()).map_err(|e| Error::io(path, e))
    }

    /// Ground truth of each set: an explicit `groundtruth` line wins,
    /// otherwise annotations are aggregated.
    pub fn ground_truths(&self, min_annotations: usize) -> Result<Vec<GroundTruth>> {
        self.sets
            .iter()
            .map(|set| match &set.ground_truth {
                Some(ranks) => Ok(GroundTruth {
                    set_id: set.set_id.clone(),
                    ranks: ranks.clone(),
                    vote_counts: set
                        .annotations
                        .iter()
                        .fold(vec![0; ranks.len()], |mut v, a| {
                            if let Some(top) = a.ranks.iter().position(|&r| r == 1) {
                                v[top] += 1;
                            }
                            v
                        }),
                    tie_broken: false,
                }),
                None => aggregate_ground_truth(
                    &set.set_id,
                    set.images.len(),
                    &set.annotations,
                    min_annotations,
                ),
            })
            .collect()
    }
}

pub fn load_manifest(path: &Path) -> Result<Dataset> {
    Dataset::load(path)
}

/// Iterative majority vote: the remaining image with the most votes for rank
/// `r` receives rank `r`. Ties go to the lower mean annotated rank, then the
/// lower index, and set `tie_broken`.
pub fn aggregate_ground_truth(
    set_id: &str,
    n_images: usize,
    annotations: &[AnnotationRecord],
    min_annotations: usize,
) -> Result<GroundTruth> {
    let needed = min_annotations.max(1);
    if annotations.len() < needed {
        return Err(Error::TooFewAnnotations {
            set_id: set_id.to_string(),
            needed,
            got: annotations.len(),
        });
    }
    for a in annotations {
        if a.ranks.len() != n_images {
            return Err(Error::DimensionMismatch(format!(
                "set `{set_id}`: annotation by {} ranks {} images, set has {n_images}",
                a.annotator,
                a.ranks.len()
            )));
        }
        check_permutation(&a.ranks)?;
    }
    let votes_for = |image: usize, rank: usize| {
        annotations
            .iter()
            .filter(|a| a.ranks[image] == rank)
            .count()
    };
    let mean_rank: Vec<f64> = (0..n_images)
        .map(|i| {
            annotations.iter().map(|a| a.ranks[i] as f64).sum::<f64>() / annotations.len() as f64
        })
        .collect();
    let vote_counts: Vec<usize> = (0..n_images).map(|i| votes_for(i, 1)).collect();
    let mut remaining: Vec<usize> = (0..n_images).collect();
    let mut ranks = vec![0; n_images];
    let mut tie_broken = false;
    for rank in 1..=n_images {
        let votes: Vec<usize> = remaining.iter().map(|&i| votes_for(i, rank)).collect();
        let best = votes.iter().copied().max().unwrap_or(0);
        let candidates: Vec<usize> = remaining
            .iter()
            .zip(&votes)
            .filter(|&(_, &v)| v == best)
            .map(|(&i, _)| i)
            .collect();
        if candidates.len() > 1 {
            tie_broken = true;
        }
        let winner = candidates
            .into_iter()
            .min_by(|&a, &b| mean_rank[a].total_cmp(&mean_rank[b]).then(a.cmp(&b)))
            .unwrap_or(remaining[0]);
        ranks[winner] = rank;
        remaining.retain(|&i| i != winner);
    }
    debug_assert!(is_permutation(&ranks));
    Ok(GroundTruth {
        set_id: set_id.to_string(),
        ranks,
        vote_counts,
        tie_broken,
    })
}

/// Keeps every set and adds `factor - 1` replicas whose channel scores carry
/// independent Gaussian jitter of standard deviation `sigma`, clamped to
/// `[0, 1]`. Ground-truth ranks are copied unchanged.
pub fn augment_dataset(
    sets: &[ScoredSet],
    factor: usize,
    sigma: f64,
    seed: u64,
) -> Result<Vec<ScoredSet>> {
    if factor == 0 {
        return Err(Error::InvalidArgument(
            "augmentation factor must be at least 1".into(),
        ));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("jitter sigma {sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = sets.to_vec();
    for replica in 1..factor {
        for set in sets {
            let scores = set
                .scores
                .iter()
                .map(|s| {
                    let mut v = s.as_array();
                    for c in &mut v {
                        let n: f64 = StandardNormal.sample(&mut rng);
                        *c = (*c + sigma * n).clamp(0.0, 1.0);
                    }
                    ChannelScores::new(v[0], v[1], v[2])
                })
                .collect::<Result<_>>()?;
            out.push(ScoredSet {
                set_id: format!("{}~{replica}", set.set_id),
                scores,
                true_ranks: set.true_ranks.clone(),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_sets: usize,
    pub images_per_set: usize,
    /// Standard deviation of the Gaussian perturbation applied to latent
    /// appeal before ranking.
    pub noise: f64,
    /// Appeal weights of (smile, brightness, sharpness).
    pub weights: [f64; 3],
    pub image_size: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_sets: 100,
            images_per_set: 3,
            noise: 0.0,
            weights: [0.25, 0.15, 0.6],
            image_size: 64,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        if self.n_sets == 0 {
            return Err(Error::InvalidArgument("n_sets must be at least 1".into()));
        }
        if self.images_per_set < 2 {
            return Err(Error::InvalidArgument(
                "images_per_set must be at least 2".into(),
            ));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise {}", self.noise)));
        }
        if self.image_size < 16 {
            return Err(Error::InvalidArgument(
                "image_size must be at least 16".into(),
            ));
        }
        Ok(())
    }

    pub fn appeal(&self, latent: &GroupLatent) -> f64 {
        self.weights[0] * latent.smile
            + self.weights[1] * latent.brightness
            + self.weights[2] * latent.sharpness
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub set_id: String,
    pub latents: Vec<GroupLatent>,
    pub true_ranks: Vec<usize>,
}

/// Latent attributes and ground truth of each synthetic set.
pub fn synthetic_sets(config: &SyntheticConfig) -> Result<Vec<SyntheticSet>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let perturb = Normal::new(0.0, config.noise.max(0.0))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let width = (config.n_sets - 1).to_string().len().max(3);
    Ok((0..config.n_sets)
        .map(|s| {
            let latents: Vec<GroupLatent> = (0..config.images_per_set)
                .map(|_| GroupLatent {
                    smile: rng.random::<f64>(),
                    brightness: rng.random::<f64>(),
                    sharpness: rng.random::<f64>(),
                })
                .collect();
            let observed: Vec<f64> = latents
                .iter()
                .map(|l| config.appeal(l) + perturb.sample(&mut rng))
                .collect();
            SyntheticSet {
                set_id: format!("set{s:0width$}"),
                latents,
                true_ranks: ranks_from_scores(&observed),
            }
        })
        .collect())
}

/// Score-level synthetic data: each image's channel scores are its latent
/// (smile, brightness, sharpness).
pub fn synthetic_scored_sets(config: &SyntheticConfig) -> Result<Vec<ScoredSet>> {
    synthetic_sets(config)?
        .into_iter()
        .map(|s| {
            Ok(ScoredSet {
                scores: s
                    .latents
                    .iter()
                    .map(|l| ChannelScores::new(l.smile, l.brightness, l.sharpness))
                    .collect::<Result<_>>()?,
                set_id: s.set_id,
                true_ranks: s.true_ranks,
            })
        })
        .collect()
}

/// Renders a synthetic dataset into `out_dir` (images, saliency maps and
/// `manifest.txt`). Labels: happiness `5 * smile`, aesthetics `brightness`,
/// quality `4 * sharpness`.
pub fn generate_synthetic(config: &SyntheticConfig, out_dir: &Path) -> Result<Dataset> {
    let sets = synthetic_sets(config)?;
    for sub in ["images", "saliency"] {
        let dir = out_dir.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(2);
    let mut photo_sets = Vec::with_capacity(sets.len());
    for set in &sets {
        let mut images = Vec::with_capacity(set.latents.len());
        for (i, latent) in set.latents.iter().enumerate() {
            let (image, saliency) = group_scene(&mut rng, config.image_size, latent);
            let image_rel = format!("images/{}_{i}.pgm", set.set_id);
            let saliency_rel = format!("saliency/{}_{i}.pgm", set.set_id);
            write_netpbm(
                &out_dir.join(&image_rel),
                &RasterImage::from_grid_clamped(&image),
            )?;
            let sal_bytes = RealGrid::from_fn(saliency.width(), saliency.height(), |x, y| {
                255.0 * saliency.get(x, y)
            });
            write_netpbm(
                &out_dir.join(&saliency_rel),
                &RasterImage::from_grid_clamped(&sal_bytes),
            )?;
            images.push(ImageEntry {
                path: image_rel,
                saliency: Some(saliency_rel),
                labels: ImageLabels {
                    happiness: Some(5.0 * latent.smile),
                    aesthetics: Some(latent.brightness),
                    quality: Some(4.0 * latent.sharpness),
                },
            });
        }
        photo_sets.push(PhotoSet {
            set_id: set.set_id.clone(),
            images,
            annotations: Vec::new(),
            ground_truth: Some(set.true_ranks.clone()),
        });
    }
    let dataset = Dataset {
        root: out_dir.to_path_buf(),
        sets: photo_sets,
    };
    dataset.save(&out_dir.join("manifest.txt"))?;
    Ok(dataset)
}

/// A uniformly random permutation of `1..=n`.
pub fn random_ranks<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut ranks: Vec<usize> = (1..=n).collect();
    ranks.shuffle(rng);
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# two sets
set a
image 0 img/a0.pgm saliency sal/a0.pgm happiness 2.5
image 1 img/a1.pgm
image 2 img/a2.pgm quality 1
annotation u1 1,2,3 feature group_happiness
annotation u2 2,1,3
groundtruth 1,2,3

set b
image 0 img/b0.pgm
image 1 img/b1.pgm
";

    fn ann(ranks: &[usize]) -> AnnotationRecord {
        AnnotationRecord {
            annotator: "x".into(),
            ranks: ranks.to_vec(),
            feature: None,
        }
    }

    #[test]
    fn parses_and_round_trips() {
        let d = Dataset::parse(SAMPLE, "/data").unwrap();
        assert_eq!(d.sets.len(), 2);
        let a = &d.sets[0];
        assert_eq!(a.images[0].saliency.as_deref(), Some("sal/a0.pgm"));
        assert_eq!(a.images[0].labels.happiness, Some(2.5));
        assert_eq!(a.images[2].labels.quality, Some(1.0));
        assert_eq!(
            a.annotations[0].feature,
            Some(VisualFeature::GroupHappiness)
        );
        assert_eq!(d.resolve("img/a0.pgm"), PathBuf::from("/data/img/a0.pgm"));
        let text = d.to_manifest();
        let again = Dataset::parse(&text, "/data").unwrap();
        assert_eq!(again, d);
        assert_eq!(again.to_manifest(), text);
    }

    #[test]
    fn rejects_bad_manifests() {
        let dup = "set a\nimage 0 x\nimage 1 y\nset a\nimage 0 x\nimage 1 y\n";
        assert!(matches!(Dataset::parse(dup, ""), Err(Error::DuplicateSet(id)) if id == "a"));
        let bad_perm = "set a\nimage 0 x\nimage 1 y\nimage 2 z\nannotation u 1,1,2\n";
        assert!(matches!(
            Dataset::parse(bad_perm, ""),
            Err(Error::InvalidPermutation(_))
        ));
        let orphan = "image 0 x\n";
        assert!(matches!(
            Dataset::parse(orphan, ""),
            Err(Error::ManifestParse { line: 1, .. })
        ));
        assert!(Dataset::parse("set a\nimage 0 x\n", "").is_err());
        assert!(Dataset::parse("set a\nimage 0 x\nimage 0 y\n", "").is_err());
        assert!(Dataset::parse("set a\nimage 0 x\nimage 1 x\n", "").is_err());
        assert!(Dataset::parse("set a\nimage 0 x blur 3\nimage 1 y\n", "").is_err());
    }

    #[test]
    fn majority_vote_examples() {
        let unanimous: Vec<_> = (0..5).map(|_| ann(&[1, 2, 3])).collect();
        let gt = aggregate_ground_truth("s", 3, &unanimous, 5).unwrap();
        assert_eq!(gt.ranks, vec![1, 2, 3]);
        assert!(!gt.tie_broken);
        assert_eq!(gt.vote_counts, vec![5, 0, 0]);

        let majority = [
            ann(&[1, 2, 3]),
            ann(&[1, 3, 2]),
            ann(&[1, 2, 3]),
            ann(&[2, 1, 3]),
            ann(&[2, 1, 3]),
        ];
        assert_eq!(
            aggregate_ground_truth("s", 3, &majority, 5).unwrap().ranks[0],
            1
        );

        // rank-1 votes A 2, B 2; mean ranks A 1.5, B 1.75
        let tie = [
            ann(&[1, 2, 3]),
            ann(&[1, 3, 2]),
            ann(&[2, 1, 3]),
            ann(&[2, 1, 3]),
        ];
        let gt = aggregate_ground_truth("s", 3, &tie, 1).unwrap();
        assert_eq!(gt.ranks[0], 1);
        assert!(gt.tie_broken);

        assert!(matches!(
            aggregate_ground_truth("s", 3, &tie, 5),
            Err(Error::TooFewAnnotations { got: 4, .. })
        ));
    }

    #[test]
    fn augmentation_contract() {
        let sets = synthetic_scored_sets(&SyntheticConfig {
            n_sets: 7,
            ..SyntheticConfig::default()
        })
        .unwrap();
        assert_eq!(augment_dataset(&sets, 1, AUGMENT_SIGMA, 0).unwrap(), sets);
        let tripled = augment_dataset(&sets, 3, AUGMENT_SIGMA, 0).unwrap();
        assert_eq!(tripled.len(), 21);
        for (i, s) in tripled.iter().enumerate() {
            assert_eq!(s.true_ranks, sets[i % 7].true_ranks);
            assert!(s
                .scores
                .iter()
                .all(|c| c.as_array().iter().all(|v| (0.0..=1.0).contains(v))));
        }
        let still = augment_dataset(&sets, 2, 0.0, 0).unwrap();
        assert_eq!(still[7].scores, sets[0].scores);
        assert!(augment_dataset(&sets, 0, 0.02, 0).is_err());
    }

    #[test]
    fn noise_free_truth_follows_appeal() {
        let config = SyntheticConfig {
            n_sets: 20,
            ..SyntheticConfig::default()
        };
        for set in synthetic_sets(&config).unwrap() {
            let appeal: Vec<f64> = set.latents.iter().map(|l| config.appeal(l)).collect();
            assert_eq!(set.true_ranks, ranks_from_scores(&appeal));
        }
        assert_eq!(
            synthetic_sets(&config).unwrap(),
            synthetic_sets(&config).unwrap()
        );
    }
}
