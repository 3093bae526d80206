#![allow(dead_code)]

use grouprank::cnn::{BackboneSpec, ConvSpec};
use grouprank::emotion::TrainingSample;
use grouprank::raster::{RasterImage, RealGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Input 8, conv 2@3x3 + pool, conv 2@2x2, dense [3, 1]: final maps 2x2x2.
pub fn micro_spec() -> BackboneSpec {
    BackboneSpec {
        input_size: 8,
        conv: vec![
            ConvSpec {
                filters: 2,
                kernel: 3,
                stride: 1,
                pool: true,
            },
            ConvSpec {
                filters: 2,
                kernel: 2,
                stride: 1,
                pool: false,
            },
        ],
        dense: vec![3, 1],
    }
}

/// Input 10, conv 3@3x3 + pool, conv 3@2x2, dense [4, 1]: final maps 3x3x3.
pub fn small_spec() -> BackboneSpec {
    BackboneSpec {
        input_size: 10,
        conv: vec![
            ConvSpec {
                filters: 3,
                kernel: 3,
                stride: 1,
                pool: true,
            },
            ConvSpec {
                filters: 3,
                kernel: 2,
                stride: 1,
                pool: false,
            },
        ],
        dense: vec![4, 1],
    }
}

pub fn random_image<R: Rng>(rng: &mut R, size: usize) -> RasterImage {
    let data = (0..size * size)
        .map(|_| rng.random_range(0.0..255.0))
        .collect();
    RasterImage::new(size, size, 1, data).unwrap()
}

pub fn random_saliency<R: Rng>(rng: &mut R, size: usize) -> RealGrid {
    RealGrid::from_fn(size, size, |_, _| rng.random_range(0.0..1.0))
}

pub fn emotion_batch(seed: u64, n: usize, size: usize) -> Vec<TrainingSample> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let img = random_image(&mut r, size);
            let sal = random_saliency(&mut r, 5);
            TrainingSample::new(img, r.random_range(0.0..5.0), Some(sal)).unwrap()
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct FdReport {
    pub max_rel: f64,
    pub checked: usize,
    pub kinks: usize,
}

impl FdReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel <= tol && self.checked > 0 && self.kinks * 10 <= self.checked
    }
}

/// Central finite differences against `analytic`. A coordinate whose forward
/// and backward one-sided slopes disagree sits on a kink and is excluded.
/// Differences below the floating-point resolution of the quotient count as zero.
pub fn fd_check(
    params: &[f64],
    analytic: &[f64],
    h: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> FdReport {
    assert_eq!(params.len(), analytic.len());
    let f0 = f(params);
    let mut p = params.to_vec();
    let mut report = FdReport {
        max_rel: 0.0,
        checked: 0,
        kinks: 0,
    };
    for i in 0..params.len() {
        p[i] = params[i] + h;
        let fp = f(&p);
        p[i] = params[i] - h;
        let fm = f(&p);
        p[i] = params[i];
        let (slope_p, slope_m) = ((fp - f0) / h, (f0 - fm) / h);
        if (slope_p - slope_m).abs() > 1e-2 * slope_p.abs().max(slope_m.abs()).max(1e-2) {
            report.kinks += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * h);
        // rounding in f itself limits the resolution of the difference quotient
        let resolution = 4.0 * f64::EPSILON * f0.abs().max(fp.abs()).max(fm.abs()).max(1.0) / h;
        let excess = ((numeric - analytic[i]).abs() - resolution).max(0.0);
        let rel = excess / numeric.abs().max(analytic[i].abs()).max(1e-6);
        report.max_rel = report.max_rel.max(rel);
        report.checked += 1;
    }
    report
}

pub mod checks {
    use super::*;
    use grouprank::aesthetics::{self, AestheticPair, AestheticsConfig, AestheticsModel};
    use grouprank::cnn::Backbone;
    use grouprank::emotion::{self, Phase, ScnnConfig, ScnnModel};
    use grouprank::fusion::{
        ranknet_gradient, ranknet_loss, FusionVector, RankNetInput, RankNetModel,
    };
    use grouprank::raster::resize_bilinear;

    pub const H: f64 = 1e-5;

    pub fn scnn_model(seed: u64) -> ScnnModel {
        ScnnModel {
            net: Backbone::init(micro_spec(), &mut rng(seed), 2.5).unwrap(),
        }
    }

    fn with_params(model: &ScnnModel, conv: Option<&[f64]>, dense: Option<&[f64]>) -> ScnnModel {
        let mut m = model.clone();
        if let Some(c) = conv {
            m.net.conv_params.copy_from_slice(c);
        }
        if let Some(d) = dense {
            m.net.dense_params.copy_from_slice(d);
        }
        m
    }

    /// L_reg with respect to every parameter.
    pub fn scnn_regression(seed: u64) -> FdReport {
        let model = scnn_model(seed);
        let batch = emotion_batch(seed + 100, 3, 8);
        let g = emotion::gradients(&model, &batch, 0.0, false).unwrap();
        let conv = fd_check(&model.net.conv_params, &g.conv, H, |p| {
            emotion::regression_loss(&with_params(&model, Some(p), None), &batch).unwrap()
        });
        let dense = fd_check(&model.net.dense_params, &g.dense, H, |p| {
            emotion::regression_loss(&with_params(&model, None, Some(p)), &batch).unwrap()
        });
        merge(conv, dense)
    }

    /// L_sal with respect to the conv parameters, attention weights held at
    /// their current values.
    pub fn scnn_saliency(seed: u64) -> FdReport {
        let model = scnn_model(seed);
        let batch = emotion_batch(seed + 200, 3, 8);
        let with = emotion::gradients(&model, &batch, 1.0, true).unwrap();
        let without = emotion::gradients(&model, &batch, 0.0, true).unwrap();
        assert_eq!(with.dense, without.dense);
        let g_sal: Vec<f64> = with
            .conv
            .iter()
            .zip(&without.conv)
            .map(|(a, b)| a - b)
            .collect();

        let (h, w) = model.net.final_map_size();
        let fixed: Vec<(Vec<f64>, RealGrid, &RasterImage)> = batch
            .iter()
            .map(|s| {
                let trace = emotion::forward(&model, &s.image).unwrap();
                let weights = emotion::attention_map(&model, &trace).weights;
                let target = resize_bilinear(s.saliency.as_ref().unwrap(), w, h).unwrap();
                (weights, target, &s.image)
            })
            .collect();
        fd_check(&model.net.conv_params, &g_sal, H, |p| {
            let m = with_params(&model, Some(p), None);
            fixed
                .iter()
                .map(|(weights, target, image)| {
                    let trace = emotion::forward(&m, image).unwrap();
                    let att = emotion::attention_with_weights(trace.final_maps(), weights);
                    att.map
                        .data()
                        .iter()
                        .zip(target.data())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        / target.data().len() as f64
                })
                .sum::<f64>()
                / fixed.len() as f64
        })
    }

    pub fn aesthetics_pairs(seed: u64, n: usize) -> Vec<AestheticPair> {
        let mut r = rng(seed);
        (0..n)
            .map(|_| AestheticPair {
                image_a: random_image(&mut r, 8),
                image_b: random_image(&mut r, 8),
                score_a: r.random_range(0.0..1.0),
                score_b: r.random_range(0.0..1.0),
            })
            .collect()
    }

    pub fn aesthetics(seed: u64) -> FdReport {
        let config = AestheticsConfig {
            backbone: micro_spec(),
            alpha: 2.0,
            seed,
            ..AestheticsConfig::default()
        };
        let model = AestheticsModel::new(&config).unwrap();
        let pairs = aesthetics_pairs(seed + 300, 4);
        let g = aesthetics::batch_gradients(&model, &pairs, &config).unwrap();
        let loss = |m: &AestheticsModel| aesthetics::batch_loss(m, &pairs, &config).unwrap();
        let conv = fd_check(&model.net.conv_params, &g.conv, H, |p| {
            let mut m = model.clone();
            m.net.conv_params.copy_from_slice(p);
            loss(&m)
        });
        let dense = fd_check(&model.net.dense_params, &g.dense, H, |p| {
            let mut m = model.clone();
            m.net.dense_params.copy_from_slice(p);
            loss(&m)
        });
        merge(conv, dense)
    }

    pub fn ranknet(seed: u64, input: RankNetInput) -> FdReport {
        let mut r = rng(seed);
        let model = RankNetModel::init(input, 2.0, &mut r);
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..12)
            .map(|_| {
                let mut v = || {
                    let k = FusionVector(std::array::from_fn(|_| r.random_range(0.0..1.0)));
                    input.features(&k)
                };
                (v(), v())
            })
            .collect();
        let g = ranknet_gradient(&model, &pairs);
        fd_check(&model.params, &g, H, |p| {
            let m = RankNetModel {
                params: p.to_vec(),
                ..model.clone()
            };
            ranknet_loss(&m, &pairs)
        })
    }

    /// A batch whose regression error is exactly zero and whose saliency target
    /// disagrees with the attention map. Seeds are skipped until every sample has
    /// at least two positive attention cells, since a single active cell
    /// normalizes to a constant map.
    pub fn zero_regression_batch(mut seed: u64) -> (ScnnModel, Vec<TrainingSample>) {
        let (model, mut batch) = loop {
            let model = scnn_model(seed);
            let batch = emotion_batch(seed + 50, 2, 8);
            let spread = batch.iter().all(|s| {
                let trace = emotion::forward(&model, &s.image).unwrap();
                let att = emotion::attention_map(&model, &trace);
                att.raw.data().iter().filter(|v| **v > 0.0).count() >= 2
            });
            if spread {
                break (model, batch);
            }
            seed += 1;
        };
        for s in &mut batch {
            s.label = emotion::predict_raw(&model, &s.image).unwrap();
            s.saliency = Some(RealGrid::from_fn(
                5,
                5,
                |x, _| if x < 2 { 1.0 } else { 0.0 },
            ));
        }
        (model, batch)
    }

    /// One phase-2 step on the zero-regression batch: (dense unchanged, conv
    /// entries changed).
    pub fn phase_two_asymmetry(seed: u64) -> (bool, usize) {
        let (model, batch) = zero_regression_batch(seed);
        let mut stepped = model.clone();
        let config = ScnnConfig {
            eta: 0.5,
            lambda1: 1e-3,
            backbone: micro_spec(),
            ..ScnnConfig::default()
        };
        emotion::train_step(&mut stepped, &batch, &config, Phase::Saliency).unwrap();
        let changed = stepped
            .net
            .conv_params
            .iter()
            .zip(&model.net.conv_params)
            .filter(|(a, b)| a != b)
            .count();
        (stepped.net.dense_params == model.net.dense_params, changed)
    }

    pub fn merge(a: FdReport, b: FdReport) -> FdReport {
        FdReport {
            max_rel: a.max_rel.max(b.max_rel),
            checked: a.checked + b.checked,
            kinks: a.kinks + b.kinks,
        }
    }
}

pub mod oracles {
    use super::rng;
    use grouprank::quality::{
        compute_mscn_grid, distortion_corpus, extract_features_grid, train_quality_model,
        QualityModel, SvrConfig,
    };
    use grouprank::raster::RealGrid;
    use grouprank::synth::{distort, scene, Distortion};
    use rand::Rng;
    use rand_distr::{Distribution, Gamma};

    /// MSCN by direct 2-D summation over a replicate-padded 7x7 window.
    pub fn naive_mscn(grid: &RealGrid) -> Vec<f64> {
        let sigma = 7.0 / 6.0;
        let mut w = [[0.0; 7]; 7];
        let mut total = 0.0;
        for (dy, row) in w.iter_mut().enumerate() {
            for (dx, v) in row.iter_mut().enumerate() {
                let (x, y) = (dx as f64 - 3.0, dy as f64 - 3.0);
                *v = (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
                total += *v;
            }
        }
        let mut out = Vec::with_capacity(grid.width() * grid.height());
        for y in 0..grid.height() as isize {
            for x in 0..grid.width() as isize {
                let (mut mu, mut m2) = (0.0, 0.0);
                for dy in -3..=3isize {
                    for dx in -3..=3isize {
                        let k = w[(dy + 3) as usize][(dx + 3) as usize] / total;
                        let v = grid.get_clamped(x + dx, y + dy);
                        mu += k * v;
                        m2 += k * v * v;
                    }
                }
                let sd = (m2 - mu * mu).abs().sqrt();
                out.push((grid.get(x as usize, y as usize) - mu) / (sd + 1.0));
            }
        }
        out
    }

    pub fn mscn_max_error(grid: &RealGrid) -> f64 {
        let fast = compute_mscn_grid(grid).unwrap();
        fast.coefficients
            .data()
            .iter()
            .zip(naive_mscn(grid))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Zero-mean generalized Gaussian variates: `|x|^shape` is Gamma(1/shape).
    pub fn ggd_samples<R: Rng>(rng: &mut R, shape: f64, scale: f64, n: usize) -> Vec<f64> {
        let g = Gamma::new(1.0 / shape, 1.0).unwrap();
        (0..n)
            .map(|_| {
                let m = scale * g.sample(rng).powf(1.0 / shape);
                if rng.random_bool(0.5) {
                    m
                } else {
                    -m
                }
            })
            .collect()
    }

    /// Asymmetric variant with separate left and right scales.
    pub fn aggd_samples<R: Rng>(
        rng: &mut R,
        shape: f64,
        left: f64,
        right: f64,
        n: usize,
    ) -> Vec<f64> {
        let g = Gamma::new(1.0 / shape, 1.0).unwrap();
        (0..n)
            .map(|_| {
                let m = g.sample(rng).powf(1.0 / shape);
                if rng.random_bool(left / (left + right)) {
                    -left * m
                } else {
                    right * m
                }
            })
            .collect()
    }

    pub struct Monotonicity {
        pub monotone: usize,
        pub images: usize,
        pub mean_by_level: [[f64; 5]; 2],
    }

    impl Monotonicity {
        pub fn fraction(&self) -> f64 {
            self.monotone as f64 / self.images as f64
        }
    }

    pub fn quality_model(n_train: usize, size: usize, seed: u64) -> QualityModel {
        let mut r = rng(seed);
        let grids: Vec<RealGrid> = (0..n_train).map(|_| scene(&mut r, size, size)).collect();
        let (features, ratings) = distortion_corpus(&grids, seed + 1).unwrap();
        let config = SvrConfig {
            seed,
            ..SvrConfig::default()
        };
        train_quality_model(&features, &ratings, &config).unwrap()
    }

    /// An image counts as monotone when its predicted quality never rises
    /// along either the blur or the noise severity ladder.
    pub fn brisque_monotonicity(
        model: &QualityModel,
        n_test: usize,
        size: usize,
        seed: u64,
    ) -> Monotonicity {
        let mut r = rng(seed);
        let mut monotone = 0;
        let mut mean_by_level = [[0.0; 5]; 2];
        for _ in 0..n_test {
            let grid = scene(&mut r, size, size);
            let mut ok = true;
            for (k, kind) in [Distortion::Blur, Distortion::Noise]
                .into_iter()
                .enumerate()
            {
                let scores: Vec<f64> = (0..5)
                    .map(|level| {
                        let g = distort(&grid, kind, level, &mut r);
                        model.predict_raw(&extract_features_grid(&g).unwrap())
                    })
                    .collect();
                for (m, s) in mean_by_level[k].iter_mut().zip(&scores) {
                    *m += s / n_test as f64;
                }
                ok &= scores.windows(2).all(|w| w[1] <= w[0]);
            }
            monotone += usize::from(ok);
        }
        Monotonicity {
            monotone,
            images: n_test,
            mean_by_level,
        }
    }
}

pub mod metric_oracles {
    use super::rng;
    use grouprank::dataset::random_ranks;
    use grouprank::metrics::{bim, psp, spearman_rho, RankedSet};

    pub fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n);
                out.push(q);
            }
        }
        out
    }

    /// Top-1 agreement found by scanning for the minimum rank.
    pub fn brute_top(t: &[usize], p: &[usize]) -> f64 {
        let argmin = |r: &[usize]| (0..r.len()).min_by_key(|&i| r[i]).unwrap();
        if argmin(t) == argmin(p) {
            100.0
        } else {
            0.0
        }
    }

    /// Swapped-pair percentage over all ordered pairs `i != j`.
    pub fn brute_psp(t: &[usize], p: &[usize]) -> f64 {
        let n = t.len();
        let (mut bad, mut total) = (0, 0);
        for i in 0..n {
            for j in 0..n {
                if i != j && t[i] < t[j] {
                    total += 1;
                    if p[i] > p[j] {
                        bad += 1;
                    }
                }
            }
        }
        100.0 * bad as f64 / total as f64
    }

    /// Pearson correlation of the two rank vectors.
    pub fn brute_rho(t: &[usize], p: &[usize]) -> f64 {
        let n = t.len() as f64;
        let mt = t.iter().sum::<usize>() as f64 / n;
        let mp = p.iter().sum::<usize>() as f64 / n;
        let (mut c, mut vt, mut vp) = (0.0, 0.0, 0.0);
        for (&a, &b) in t.iter().zip(p) {
            let (da, db) = (a as f64 - mt, b as f64 - mp);
            c += da * db;
            vt += da * da;
            vp += db * db;
        }
        c / (vt * vp).sqrt()
    }

    /// Largest absolute disagreement between the library metrics and the
    /// brute-force oracles, over every ordered pair of 3-permutations and
    /// `random` random pairs with `2 <= n <= 6`. Returns (error, pairs checked).
    pub fn max_error(random: usize, seed: u64) -> (f64, usize) {
        let mut pairs = Vec::new();
        for t in permutations(3) {
            for p in permutations(3) {
                pairs.push((t.clone(), p));
            }
        }
        let mut r = rng(seed);
        for _ in 0..random {
            let n = rand::Rng::random_range(&mut r, 2..=6);
            pairs.push((random_ranks(n, &mut r), random_ranks(n, &mut r)));
        }
        let mut worst: f64 = 0.0;
        for (t, p) in &pairs {
            let set = [RankedSet::new("x", t.clone(), p.clone()).unwrap()];
            worst = worst
                .max((bim(&set).unwrap() - brute_top(t, p)).abs())
                .max((psp(&set).unwrap() - brute_psp(t, p)).abs())
                .max((spearman_rho(&set).unwrap() - brute_rho(t, p)).abs());
        }
        (worst, pairs.len())
    }

    pub struct Baseline {
        pub bim: f64,
        pub psp: f64,
        pub expected_bim: f64,
        pub expected_psp: f64,
    }

    /// Uniform-random rankings of `sets` 3-image sets, with the expectations
    /// obtained by averaging over all six permutations.
    pub fn random_baseline(sets: usize, seed: u64) -> Baseline {
        let truth = vec![1, 2, 3];
        let perms = permutations(3);
        let expected_bim = perms.iter().map(|p| brute_top(&truth, p)).sum::<f64>() / 6.0;
        let expected_psp = perms.iter().map(|p| brute_psp(&truth, p)).sum::<f64>() / 6.0;
        let mut r = rng(seed);
        let ranked: Vec<RankedSet> = (0..sets)
            .map(|i| {
                RankedSet::new(
                    format!("s{i}"),
                    random_ranks(3, &mut r),
                    random_ranks(3, &mut r),
                )
                .unwrap()
            })
            .collect();
        Baseline {
            bim: bim(&ranked).unwrap(),
            psp: psp(&ranked).unwrap(),
            expected_bim,
            expected_psp,
        }
    }
}

pub mod ranking {
    use grouprank::dataset::{synthetic_scored_sets, SyntheticConfig};
    use grouprank::fusion::{PoolMode, RankNetConfig, RankSvmConfig, RankerConfig};
    use grouprank::metrics::{cross_validate, EvalReport};

    /// Mean, max, rankSVM, rankNet; rankNet uses the demo learning rate.
    pub fn methods() -> [RankerConfig; 4] {
        [
            RankerConfig::Pool(PoolMode::Mean),
            RankerConfig::Pool(PoolMode::Max),
            RankerConfig::RankSvm(RankSvmConfig::default()),
            RankerConfig::RankNet(RankNetConfig {
                learning_rate: 0.05,
                epochs: 200,
                ..RankNetConfig::default()
            }),
        ]
    }

    /// Noise-free score-level synthetic sets, quality weighted highest,
    /// evaluated by 5-fold cross-validation.
    pub fn synthetic_benchmark(n_sets: usize, seed: u64) -> Vec<(&'static str, EvalReport)> {
        let config = SyntheticConfig {
            n_sets,
            noise: 0.0,
            weights: [0.25, 0.15, 0.6],
            seed,
            ..SyntheticConfig::default()
        };
        let sets = synthetic_scored_sets(&config).unwrap();
        methods()
            .iter()
            .map(|m| (m.label(), cross_validate(&sets, m, 5, seed).unwrap().report))
            .collect()
    }
}

pub mod saliency {
    use super::rng;
    use grouprank::cnn::{BackboneSpec, ConvSpec};
    use grouprank::emotion::{self, ScnnConfig, ScnnModel, TrainingSample};
    use grouprank::raster::{RasterImage, RealGrid};
    use rand::Rng;

    pub const SIZE: usize = 16;
    const PATCH: usize = 6;

    /// Low-contrast noise with one framed square patch; the label is the
    /// patch intensity on the 0-5 scale and the saliency map marks the patch.
    pub fn marked_patches(n: usize, seed: u64) -> Vec<TrainingSample> {
        let mut r = rng(seed);
        (0..n)
            .map(|_| {
                let level: f64 = r.random();
                let (px, py) = (
                    r.random_range(0..=SIZE - PATCH),
                    r.random_range(0..=SIZE - PATCH),
                );
                let inside = |x: usize, y: usize| {
                    (px..px + PATCH).contains(&x) && (py..py + PATCH).contains(&y)
                };
                let noise: Vec<f64> = (0..SIZE * SIZE)
                    .map(|_| r.random_range(100.0..140.0))
                    .collect();
                let image = RealGrid::from_fn(SIZE, SIZE, |x, y| {
                    if !inside(x, y) {
                        noise[y * SIZE + x]
                    } else if x == px || y == py || x == px + PATCH - 1 || y == py + PATCH - 1 {
                        255.0
                    } else {
                        40.0 + 200.0 * level
                    }
                });
                let sal = RealGrid::from_fn(SIZE, SIZE, |x, y| f64::from(u8::from(inside(x, y))));
                TrainingSample::new(
                    RasterImage::from_grid_clamped(&image),
                    5.0 * level,
                    Some(sal),
                )
                .unwrap()
            })
            .collect()
    }

    pub fn spec() -> BackboneSpec {
        BackboneSpec {
            input_size: SIZE,
            conv: vec![
                ConvSpec {
                    filters: 4,
                    kernel: 3,
                    stride: 1,
                    pool: true,
                },
                ConvSpec {
                    filters: 4,
                    kernel: 3,
                    stride: 1,
                    pool: false,
                },
            ],
            dense: vec![8, 1],
        }
    }

    pub struct Effect {
        pub after_phase1: f64,
        pub reg_after_phase1: f64,
        pub with_lambda: f64,
        pub without_lambda: f64,
    }

    /// Full-batch phase 1, then phase 2 twice from the same weights: once at
    /// `lambda1` and once at 0. Reports the final saliency loss.
    pub fn enforcement(
        lambda1: f64,
        eta: f64,
        n: usize,
        phase1: usize,
        phase2: usize,
        seed: u64,
    ) -> Effect {
        let data = marked_patches(n, seed);
        let base = ScnnConfig {
            backbone: spec(),
            eta,
            lambda1,
            batch_size: n,
            epochs_phase1: phase1,
            epochs_phase2: 0,
            seed,
        };
        let mut model = ScnnModel::new(&base).unwrap();
        emotion::train(&mut model, &data, &base).unwrap();
        let start = emotion::losses(&model, &data).unwrap();
        let run = |l: f64| {
            let config = ScnnConfig {
                lambda1: l,
                epochs_phase1: 0,
                epochs_phase2: phase2,
                ..base.clone()
            };
            let mut m = model.clone();
            emotion::train(&mut m, &data, &config).unwrap();
            emotion::losses(&m, &data).unwrap().sal
        };
        Effect {
            after_phase1: start.sal,
            reg_after_phase1: start.reg,
            with_lambda: run(lambda1),
            without_lambda: run(0.0),
        }
    }
}

pub mod saliency_protocol {
    use super::saliency::{enforcement, Effect};

    /// Eight images, full-batch phase 1 for 5000 epochs at eta 1e-2, then
    /// five phase-2 epochs at lambda1 = 1e-3 against the lambda1 = 0 control.
    pub fn standard(seed: u64) -> Effect {
        enforcement(1e-3, 1e-2, 8, 5000, 5, seed)
    }
}

pub mod cli {
    use std::path::{Path, PathBuf};
    use std::process::{Command, Output};

    pub const FAST_CONFIG: &str = r#"
[emotion]
eta = 0.01
batch_size = 4
epochs_phase1 = 3
epochs_phase2 = 2
backbone = { input_size = 16, conv = [{ filters = 2, kernel = 3, stride = 1, pool = true }], dense = [4, 1] }

[aesthetics]
eta = 0.01
epochs = 3
backbone = { input_size = 16, conv = [{ filters = 2, kernel = 3, stride = 1, pool = true }], dense = [4, 1] }

[quality]
epochs = 50

[ranknet]
learning_rate = 0.05
epochs = 50
"#;

    pub fn grouprank(args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_grouprank"))
            .args(args)
            .output()
            .expect("binary runs")
    }

    /// Runs and asserts success.
    pub fn ok(args: &[&str]) -> Output {
        let out = grouprank(args);
        assert!(
            out.status.success(),
            "grouprank {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out
    }

    pub fn p(path: &Path) -> &str {
        path.to_str().unwrap()
    }

    /// A generated dataset of 10 sets at 24 px plus the fast config.
    pub fn fixture(dir: &Path) -> (PathBuf, PathBuf) {
        let data = dir.join("data");
        ok(&[
            "generate",
            "--sets",
            "10",
            "--size",
            "24",
            "--seed",
            "3",
            "--out",
            p(&data),
        ]);
        let config = dir.join("fast.toml");
        std::fs::write(&config, FAST_CONFIG).unwrap();
        (data.join("manifest.txt"), config)
    }

    /// Every pipeline stage once; returns the artifacts relative to `dir`.
    pub fn pipeline(dir: &Path) -> Vec<PathBuf> {
        let (manifest, config) = fixture(dir);
        let m = |name: &str| dir.join("models").join(name);
        for target in ["quality", "emotion", "aesthetics"] {
            let out = m(&format!("{target}.model"));
            ok(&[
                "train",
                target,
                "--manifest",
                p(&manifest),
                "--config",
                p(&config),
                "--seed",
                "7",
                "--out",
                p(&out),
            ]);
        }
        let scores = dir.join("scores.txt");
        ok(&[
            "score",
            "--manifest",
            p(&manifest),
            "--model-emotion",
            p(&m("emotion.model")),
            "--model-aesthetics",
            p(&m("aesthetics.model")),
            "--model-quality",
            p(&m("quality.model")),
            "--out",
            p(&scores),
        ]);
        for ranker in ["ranksvm", "ranknet"] {
            ok(&[
                "train",
                "ranker",
                "--ranker",
                ranker,
                "--manifest",
                p(&manifest),
                "--scores",
                p(&scores),
                "--config",
                p(&config),
                "--seed",
                "7",
                "--out",
                p(&m(&format!("{ranker}.model"))),
            ]);
            ok(&[
                "rank",
                "--manifest",
                p(&manifest),
                "--scores",
                p(&scores),
                "--ranker",
                ranker,
                "--model-ranker",
                p(&m(&format!("{ranker}.model"))),
                "--out",
                p(&dir.join(format!("ranked-{ranker}.txt"))),
            ]);
        }
        ok(&[
            "rank",
            "--manifest",
            p(&manifest),
            "--ranker",
            "mean",
            "--model-emotion",
            p(&m("emotion.model")),
            "--model-aesthetics",
            p(&m("aesthetics.model")),
            "--model-quality",
            p(&m("quality.model")),
            "--out",
            p(&dir.join("ranked-mean.txt")),
        ]);
        ok(&[
            "evaluate",
            "--manifest",
            p(&manifest),
            "--scores",
            p(&scores),
            "--config",
            p(&config),
            "--folds",
            "5",
            "--seed",
            "2",
            "--out",
            p(&dir.join("report")),
        ]);
        let mut files = vec![
            PathBuf::from("data/manifest.txt"),
            PathBuf::from("data/images/set004_2.pgm"),
            PathBuf::from("data/saliency/set009_0.pgm"),
            PathBuf::from("scores.txt"),
            PathBuf::from("ranked-mean.txt"),
            PathBuf::from("ranked-ranksvm.txt"),
            PathBuf::from("ranked-ranknet.txt"),
            PathBuf::from("report/report.txt"),
            PathBuf::from("report/report.kv"),
            PathBuf::from("report/report.json"),
        ];
        for name in ["quality", "emotion", "aesthetics", "ranksvm", "ranknet"] {
            files.push(PathBuf::from(format!("models/{name}.model")));
            files.push(PathBuf::from(format!("models/{name}.model.log")));
        }
        files
    }

    /// Artifacts that differ between two pipeline runs.
    pub fn differing(a: &Path, b: &Path, files: &[PathBuf]) -> Vec<PathBuf> {
        files
            .iter()
            .filter(|f| std::fs::read(a.join(f)).unwrap() != std::fs::read(b.join(f)).unwrap())
            .cloned()
            .collect()
    }
}
