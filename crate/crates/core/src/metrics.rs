//! Set-ranking metrics and the k-fold evaluation harness.
//!
//! Ranks are 1-based with rank 1 the best image of a set.
//!
//! * BIM: percentage of sets whose predicted rank-1 image is the true rank-1 image.
//! * PSP: percentage of within-set pairs whose predicted order contradicts the truth.
//! * rho: Spearman correlation per set, averaged over sets.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fusion::{FittedRanker, RankerConfig, ScoredSet};

/// Checks that `ranks` is a permutation of `1..=n`.
pub fn is_permutation(ranks: &[usize]) -> bool {
    let mut seen = vec![false; ranks.len()];
    ranks
        .iter()
        .all(|&r| (1..=ranks.len()).contains(&r) && !std::mem::replace(&mut seen[r - 1], true))
}

pub(crate) fn check_permutation(ranks: &[usize]) -> Result<()> {
    if is_permutation(ranks) {
        Ok(())
    } else {
        Err(Error::InvalidPermutation(ranks.to_vec()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedSet {
    pub set_id: String,
    pub true_ranks: Vec<usize>,
    pub predicted_ranks: Vec<usize>,
}

impl RankedSet {
    pub fn new(
        set_id: impl Into<String>,
        true_ranks: Vec<usize>,
        predicted_ranks: Vec<usize>,
    ) -> Result<Self> {
        let set_id = set_id.into();
        if true_ranks.len() != predicted_ranks.len() {
            return Err(Error::DimensionMismatch(format!(
                "set {set_id}: {} true ranks vs {} predicted",
                true_ranks.len(),
                predicted_ranks.len()
            )));
        }
        if true_ranks.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "set {set_id} has fewer than 2 images"
            )));
        }
        check_permutation(&true_ranks)?;
        check_permutation(&predicted_ranks)?;
        Ok(Self {
            set_id,
            true_ranks,
            predicted_ranks,
        })
    }

    pub fn len(&self) -> usize {
        self.true_ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_ranks.is_empty()
    }

    fn top(ranks: &[usize]) -> usize {
        ranks.iter().position(|&r| r == 1).unwrap_or(0)
    }

    pub fn top_matches(&self) -> bool {
        Self::top(&self.true_ranks) == Self::top(&self.predicted_ranks)
    }

    pub fn swapped_pairs(&self) -> usize {
        let (t, p) = (&self.true_ranks, &self.predicted_ranks);
        let n = t.len();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| (t[i] < t[j]) != (p[i] < p[j]))
            .count()
    }

    pub fn pair_count(&self) -> usize {
        self.len() * (self.len() - 1) / 2
    }

    pub fn spearman(&self) -> f64 {
        let n = self.len() as f64;
        let d2: f64 = self
            .true_ranks
            .iter()
            .zip(&self.predicted_ranks)
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum();
        1.0 - 6.0 * d2 / (n * (n * n - 1.0))
    }
}

fn nonempty(sets: &[RankedSet]) -> Result<()> {
    if sets.is_empty() {
        Err(Error::Empty("ranked sets"))
    } else {
        Ok(())
    }
}

pub fn bim(sets: &[RankedSet]) -> Result<f64> {
    nonempty(sets)?;
    let hits = sets.iter().filter(|s| s.top_matches()).count();
    Ok(100.0 * hits as f64 / sets.len() as f64)
}

pub fn psp(sets: &[RankedSet]) -> Result<f64> {
    nonempty(sets)?;
    let swapped: usize = sets.iter().map(RankedSet::swapped_pairs).sum();
    let total: usize = sets.iter().map(RankedSet::pair_count).sum();
    Ok(100.0 * swapped as f64 / total as f64)
}

pub fn spearman_rho(sets: &[RankedSet]) -> Result<f64> {
    nonempty(sets)?;
    Ok(sets.iter().map(RankedSet::spearman).sum::<f64>() / sets.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalReport {
    pub bim: f64,
    pub psp: f64,
    pub rho: f64,
    pub n_sets: usize,
}

impl EvalReport {
    pub fn from_sets(sets: &[RankedSet]) -> Result<Self> {
        Ok(Self {
            bim: bim(sets)?,
            psp: psp(sets)?,
            rho: spearman_rho(sets)?,
            n_sets: sets.len(),
        })
    }
}

/// Seeded shuffle followed by a contiguous split into `k` folds whose sizes
/// differ by at most one, larger folds first.
pub fn kfold_split<T: Clone>(ids: &[T], k: usize, seed: u64) -> Result<Vec<Vec<T>>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "k = {k}, need at least 2 folds"
        )));
    }
    if k > ids.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {} available sets",
            ids.len()
        )));
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = ids.len() / k;
    let extra = ids.len() % k;
    let mut folds = Vec::with_capacity(k);
    let mut it = shuffled.into_iter();
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(it.by_ref().take(size).collect());
    }
    Ok(folds)
}

/// A ranking procedure that can be fitted on training sets.
pub trait RankingMethod {
    fn fit(&self, train: &[ScoredSet], fold: usize) -> Result<Box<dyn SetRanker>>;
}

/// A fitted ranker producing a strict permutation for one set.
pub trait SetRanker {
    fn rank(&self, set: &ScoredSet) -> Result<Vec<usize>>;
}

impl RankingMethod for RankerConfig {
    fn fit(&self, train: &[ScoredSet], fold: usize) -> Result<Box<dyn SetRanker>> {
        Ok(Box::new(RankerConfig::fit(self, train, fold as u64)?))
    }
}

impl SetRanker for FittedRanker {
    fn rank(&self, set: &ScoredSet) -> Result<Vec<usize>> {
        FittedRanker::rank(self, &set.scores)
    }
}

/// Held-out predictions of one cross-validation run, in fold order.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub report: EvalReport,
    pub folds: Vec<EvalReport>,
    pub predictions: Vec<RankedSet>,
}

/// k-fold cross-validation split by set: each fold is ranked by a method
/// fitted on the remaining folds, and metrics pool all held-out sets.
pub fn cross_validate(
    sets: &[ScoredSet],
    method: &dyn RankingMethod,
    k: usize,
    seed: u64,
) -> Result<CrossValidation> {
    for s in sets {
        check_permutation(&s.true_ranks)?;
        if s.true_ranks.len() != s.scores.len() {
            return Err(Error::DimensionMismatch(format!(
                "set {}: {} scores vs {} ranks",
                s.set_id,
                s.scores.len(),
                s.true_ranks.len()
            )));
        }
    }
    let indices: Vec<usize> = (0..sets.len()).collect();
    let folds = kfold_split(&indices, k, seed)?;
    let mut predictions = Vec::with_capacity(sets.len());
    let mut fold_reports = Vec::with_capacity(k);
    for (f, held_out) in folds.iter().enumerate() {
        let train: Vec<ScoredSet> = folds
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, fold)| fold.iter().map(|&i| sets[i].clone()))
            .collect();
        let ranker = method.fit(&train, f)?;
        let mut fold_sets = Vec::with_capacity(held_out.len());
        for &i in held_out {
            let set = &sets[i];
            let predicted = ranker.rank(set)?;
            fold_sets.push(RankedSet::new(
                set.set_id.clone(),
                set.true_ranks.clone(),
                predicted,
            )?);
        }
        fold_reports.push(EvalReport::from_sets(&fold_sets)?);
        predictions.extend(fold_sets);
    }
    Ok(CrossValidation {
        report: EvalReport::from_sets(&predictions)?,
        folds: fold_reports,
        predictions,
    })
}
