//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! with the measured quantity next to its tolerance.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use candle_core::{DType, Device, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use soilmap::data::{generate_synthetic_world, CovariateStack, SynthConfig, Task, UNASSIGNED};
use soilmap::evaluation::metrics::ConfusionMatrix;
use soilmap::evaluation::{
    binary_metrics, per_region_class_accuracy, probability_histogram, weighted_multiclass_metrics, zone_presence_percentage, EvalContext,
    PointPrediction,
};
use soilmap::model::gradcheck::check_gradients;
use soilmap::model::layers::{init_rng, ParamStore};
use soilmap::model::liif::{implicit_query_reference, query_corners, MlpDecoder, QueryBatch};
use soilmap::model::{positional_encode, GeoEncoder, MisoModel, ModelConfig, ModelContext};
use soilmap::mosaic::{gaussian_weight, merge, predict_region, MosaicConfig, MosaicPlan, PixelRegion, TilePrediction};
use soilmap::objectives::{geo_alignment_loss, multimodal_alignment_loss, nsp_loss, taxonomy_loss};
use soilmap::rf::{extract_features, rf_fold, RFConfig};
use soilmap::splits::{make_split, spatial_cluster, spatial_split, FoldAssignment, SplitScheme, N_FOLDS};
use soilmap::training::{finetune, finetune_on, predict_points, pretrain, TrainConfig};

fn verdict(n: u32, pass: bool, detail: String) {
    println!("criterion {n}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// ---------------------------------------------------------------- 1

/// Bilinear interpolation of an `r × r × c` map at tile-normalized `(u, v)`,
/// sampling cell centers with edge replication.
fn bilinear(feats: &[f64], r: usize, c: usize, u: f64, v: f64) -> Vec<f64> {
    let px = (u + 1.0) * r as f64 / 2.0 - 0.5;
    let py = (v + 1.0) * r as f64 / 2.0 - 0.5;
    let (x0, y0) = (px.floor(), py.floor());
    let (fx, fy) = (px - x0, py - y0);
    let at = |x: f64, y: f64, k: usize| {
        let xi = (x as i64).clamp(0, r as i64 - 1) as usize;
        let yi = (y as i64).clamp(0, r as i64 - 1) as usize;
        feats[(yi * r + xi) * c + k]
    };
    (0..c)
        .map(|k| {
            (1.0 - fx) * (1.0 - fy) * at(x0, y0, k)
                + fx * (1.0 - fy) * at(x0 + 1.0, y0, k)
                + (1.0 - fx) * fy * at(x0, y0 + 1.0, k)
                + fx * fy * at(x0 + 1.0, y0 + 1.0, k)
        })
        .collect()
}

#[test]
fn criterion_1_implicit_query_matches_bilinear() {
    let start = Instant::now();
    let mut rng = init_rng(11, 0);
    let mut worst = 0.0f64;
    // desk pyramid: tile 64, patch 4, base width 32
    for (r, c) in [(16usize, 32usize), (8, 64), (4, 128), (2, 256)] {
        let mut ps = ParamStore::new(DType::F64);
        let dec = MlpDecoder::new(&mut ps, "dec", c, c, &mut rng).unwrap();
        let eye = Tensor::eye(c, DType::F64, &Device::Cpu).unwrap();
        for name in ["dec.fc1_z.weight", "dec.fc2.weight", "dec.fc3.weight"] {
            ps.assign(name, &eye).unwrap();
        }
        for name in ["dec.fc1_z.bias", "dec.fc2.bias", "dec.fc3.bias", "dec.fc1_offset.weight"] {
            let dims = ps.get(name).unwrap().dims().to_vec();
            ps.assign(name, &Tensor::zeros(dims, DType::F64, &Device::Cpu).unwrap()).unwrap();
        }
        // positive features keep the ReLUs in their identity regime
        let feats: Vec<f64> = (0..r * r * c).map(|_| rng.random_range(0.1..1.0)).collect();
        let z = Tensor::from_vec(feats.clone(), (r, r, c), &Device::Cpu).unwrap();
        let queries: Vec<(f64, f64)> = (0..1000)
            .map(|_| (rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)))
            .collect();
        let batch = QueryBatch::new(&queries, r, &ps).unwrap();
        let got: Vec<Vec<f64>> = dec.query(&z, &batch).unwrap().to_vec2().unwrap();
        let identity = |z: &[f64], _: (f64, f64)| z.to_vec();
        for (q, row) in queries.iter().zip(&got) {
            let want = bilinear(&feats, r, c, q.0, q.1);
            let reference = implicit_query_reference(&feats, r, c, *q, &identity).unwrap();
            for k in 0..c {
                worst = worst.max((row[k] - want[k]).abs()).max((reference[k] - want[k]).abs());
            }
        }
    }
    let mut worst_norm = 0.0f64;
    for _ in 0..10_000 {
        let r = rng.random_range(1..64usize);
        let cs = query_corners(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0), r).unwrap();
        worst_norm = worst_norm.max((cs.iter().map(|c| c.weight).sum::<f64>() - 1.0).abs());
    }
    let t = secs(start.elapsed());
    verdict(
        1,
        worst < 1e-6 && worst_norm < 1e-9 && t < 10.0,
        format!("max |f - bilinear| = {worst:.2e} < 1e-6; max |sum w - 1| = {worst_norm:.2e} < 1e-9; {t:.2} s < 10 s"),
    );
}

// ---------------------------------------------------------------- 2

fn rand_tensor(ps: &mut ParamStore, name: &str, shape: &[usize], rng: &mut rand_chacha::ChaCha8Rng) -> Tensor {
    ps.trunc_normal(name, shape, 0.5, rng).unwrap()
}

#[test]
fn criterion_2_gradients_match_finite_differences() {
    let start = Instant::now();
    let mut rng = init_rng(12, 0);
    let (h, samples) = (1e-5, 12);
    let mut results: Vec<(&str, f64)> = Vec::new();

    // implicit decoder f_θ, including gradients into the feature map
    {
        let mut ps = ParamStore::new(DType::F64);
        let (r, c, d) = (4, 5, 6);
        let dec = MlpDecoder::new(&mut ps, "dec", c, d, &mut rng).unwrap();
        let z = rand_tensor(&mut ps, "z", &[r, r, c], &mut rng);
        let queries: Vec<(f64, f64)> = (0..9).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let batch = QueryBatch::new(&queries, r, &ps).unwrap();
        let w = Tensor::randn(0.0f64, 1.0, (queries.len(), d), &Device::Cpu).unwrap();
        let loss = || Ok((dec.query(&z, &batch)? * &w)?.sum_all()?);
        results.push(("f_theta", check_gradients(&ps, loss, h, samples, &mut rng).unwrap().max_rel_error));
    }
    // geo encoder
    {
        let mut ps = ParamStore::new(DType::F64);
        let geo = GeoEncoder::new(&mut ps, "geo", 3, 8, &mut rng).unwrap();
        let coords: Vec<(f64, f64)> = (0..7).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let w = Tensor::randn(0.0f64, 1.0, (coords.len(), 8), &Device::Cpu).unwrap();
        let loss = || Ok((geo.embed(&coords, &ps)? * &w)?.sum_all()?);
        results.push((
            "geo_encoder",
            check_gradients(&ps, loss, h, samples, &mut rng).unwrap().max_rel_error,
        ));
    }
    // both InfoNCE losses
    {
        let mut ps = ParamStore::new(DType::F64);
        let a = rand_tensor(&mut ps, "a", &[6, 5], &mut rng);
        let b = rand_tensor(&mut ps, "b", &[6, 5], &mut rng);
        let loss = || Ok(multimodal_alignment_loss(&a, &b, 0.5)?);
        results.push((
            "multimodal_infonce",
            check_gradients(&ps, loss, h, 30, &mut rng).unwrap().max_rel_error,
        ));
        let loss = || Ok(geo_alignment_loss(&a, &b, 0.07)?);
        results.push(("geo_infonce", check_gradients(&ps, loss, h, 30, &mut rng).unwrap().max_rel_error));
    }
    // BCE and CE
    {
        let mut ps = ParamStore::new(DType::F64);
        let x = rand_tensor(&mut ps, "x", &[10, 1], &mut rng);
        let y: Vec<usize> = (0..10).map(|i| i % 2).collect();
        let loss = || Ok(nsp_loss(&x, &y)?);
        results.push(("bce", check_gradients(&ps, loss, h, 10, &mut rng).unwrap().max_rel_error));
        let mut ps = ParamStore::new(DType::F64);
        let x = rand_tensor(&mut ps, "x", &[8, 7], &mut rng);
        let y: Vec<usize> = (0..8).map(|i| i % 7).collect();
        let loss = || Ok(taxonomy_loss(&x, &y)?);
        results.push(("ce", check_gradients(&ps, loss, h, 56, &mut rng).unwrap().max_rel_error));
    }
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let t = secs(start.elapsed());
    let detail: Vec<String> = results.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    verdict(
        2,
        worst < 1e-4 && t < 120.0,
        format!("max rel error {worst:.2e} < 1e-4 [{}]; {t:.2} s < 120 s", detail.join(", ")),
    );
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_3_positional_encoding() {
    let mut ok = true;
    for l in [1usize, 4, 10] {
        let pe = positional_encode(0.0, 0.0, l);
        ok &= pe.len() == 2 + 4 * l;
        let mut want = vec![0.0, 0.0];
        for _ in 0..2 * l {
            want.extend([0.0, 1.0]);
        }
        ok &= pe == want;
        ok &= positional_encode(0.3, -0.7, l).len() == 2 + 4 * l;
    }
    let pe = positional_encode(1.0, 0.0, 1);
    let want = [1.0, 0.0, 0.0, -1.0, 0.0, 1.0];
    let err = pe.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    verdict(
        3,
        ok && err < 1e-12,
        format!("PE(0,0) exact and lengths 2+4L for L in {{1,4,10}}: {ok}; |PE(1,0) - [1,0,0,-1,0,1]| = {err:.1e} < 1e-12"),
    );
}

// ---------------------------------------------------------------- 4

fn gaussian(n: usize, d: usize, rng: &mut impl Rng) -> Tensor {
    let v: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::from_vec(v, (n, d), &Device::Cpu).unwrap()
}

fn scalar(t: &Tensor) -> f64 {
    t.to_scalar::<f64>().unwrap()
}

#[test]
fn criterion_4_contrastive_sanity() {
    let mut rng = init_rng(14, 0);
    let mut wins = 0;
    for _ in 0..100 {
        let (n, d) = (32, 64);
        let a = gaussian(n, d, &mut rng);
        let mut perm: Vec<u32> = (0..n as u32).collect();
        perm.shuffle(&mut rng);
        let shuffled = a.index_select(&Tensor::new(perm.as_slice(), &Device::Cpu).unwrap(), 0).unwrap();
        let aligned = scalar(&multimodal_alignment_loss(&a, &a, 0.07).unwrap());
        let mixed = scalar(&multimodal_alignment_loss(&a, &shuffled, 0.07).unwrap());
        wins += usize::from(aligned < mixed);
    }
    // N = 128 random unit embeddings of the full embedding width
    let n = 128;
    let loss = scalar(&multimodal_alignment_loss(&gaussian(n, 1024, &mut rng), &gaussian(n, 1024, &mut rng), 0.07).unwrap());
    let rel = (loss - (n as f64).ln()).abs() / (n as f64).ln();
    verdict(
        4,
        wins >= 95 && rel <= 0.10,
        format!(
            "aligned < shuffled in {wins}/100 >= 95; random loss {loss:.3} vs ln 128 = {:.3}, rel {rel:.3} <= 0.10",
            (n as f64).ln()
        ),
    );
}

// ---------------------------------------------------------------- 5

/// Connected components by O(n²) union-find, numbered by first appearance.
fn union_find_clusters(pts: &[(f64, f64)], eps: f64) -> Vec<usize> {
    let n = pts.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if (pts[i].0 - pts[j].0).hypot(pts[i].1 - pts[j].1) <= eps {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut ids = BTreeMap::new();
    (0..n)
        .map(|i| {
            let r = root(&mut parent, i);
            let next = ids.len();
            *ids.entry(r).or_insert(next)
        })
        .collect()
}

#[test]
fn criterion_5_spatial_holdout_guarantee() {
    let world = generate_synthetic_world(&SynthConfig {
        n_points: 2000,
        ..SynthConfig::default()
    })
    .unwrap();
    let pts: Vec<(f64, f64)> = world.observations.iter().map(|o| (o.x, o.y)).collect();
    let mut lines = Vec::new();
    let mut ok = true;
    for eps in [1000.0, 10_000.0] {
        let folds = spatial_split(&pts, eps, 0).unwrap();
        let clusters = spatial_cluster(&pts, eps).unwrap();
        let oracle = union_find_clusters(&pts, eps);
        let same = clusters == oracle && folds.cluster_of.as_ref() == Some(&oracle);
        let mut min_cross = f64::INFINITY;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                if folds.fold_of[i] != folds.fold_of[j] {
                    min_cross = min_cross.min((pts[i].0 - pts[j].0).hypot(pts[i].1 - pts[j].1));
                }
            }
        }
        ok &= same && min_cross > eps;
        let n_clusters = oracle.iter().max().unwrap() + 1;
        lines.push(format!(
            "eps {eps} m: {n_clusters} clusters match union-find {same}, min cross-fold distance {min_cross:.1} m > eps"
        ));
    }
    verdict(5, ok, lines.join("; "));
}

// ---------------------------------------------------------------- 6

struct Wavy;

impl soilmap::mosaic::RegionPredictor for Wavy {
    fn predict(
        &self,
        _s: &CovariateStack,
        origin: (i64, i64),
        _t: usize,
        points: &[(f64, f64)],
        _task: Task,
    ) -> soilmap::Result<Vec<Vec<f64>>> {
        Ok(points
            .iter()
            .map(|&(x, y)| {
                let p = 0.5 + 0.45 * (x * 0.0021 - y * 0.0013 + origin.0 as f64 * 0.37 + origin.1 as f64 * 0.11).sin();
                vec![1.0 - p, p]
            })
            .collect())
    }
}

struct Flat;

impl soilmap::mosaic::RegionPredictor for Flat {
    fn predict(
        &self,
        _s: &CovariateStack,
        _o: (i64, i64),
        _t: usize,
        points: &[(f64, f64)],
        _task: Task,
    ) -> soilmap::Result<Vec<Vec<f64>>> {
        Ok(vec![vec![0.62, 0.38]; points.len()])
    }
}

#[test]
fn criterion_6_mosaic_correctness() {
    let world = generate_synthetic_world(&SynthConfig {
        width: 160,
        height: 120,
        n_points: 60,
        ..SynthConfig::default()
    })
    .unwrap();
    let stack = &world.stack;
    let t = *stack.transform();

    // single tile
    let one = MosaicConfig {
        tile: Some(64),
        ..MosaicConfig::default()
    };
    let region = PixelRegion {
        col: 10,
        row: 20,
        width: 64,
        height: 64,
    };
    let plan = MosaicPlan::new(stack, region, 64, &one).unwrap();
    let r = predict_region(&Wavy, stack, &plan, Task::Nsp).unwrap();
    let mut single = 0.0f64;
    for row in 0..64 {
        for col in 0..64 {
            let p = t.pixel_to_planar(10.0 + col as f64 + 0.5, 20.0 + row as f64 + 0.5);
            let want = soilmap::mosaic::RegionPredictor::predict(&Wavy, stack, (10, 20), 64, &[p], Task::Nsp).unwrap();
            single = single.max((r.get(1, col, row) - want[0][1]).abs());
        }
    }

    // constant predictions under heavy overlap
    let heavy = MosaicConfig {
        tile: Some(48),
        overlap: Some(0.75),
        sigma: Some(9.0),
        resolution: None,
    };
    let plan = MosaicPlan::new(stack, PixelRegion::whole(stack), 48, &heavy).unwrap();
    let r = predict_region(&Flat, stack, &plan, Task::Nsp).unwrap();
    let constant = r.bands[1].iter().map(|v| (v - 0.38).abs()).fold(0.0, f64::max);

    // random overlapping tiles against a per-pixel brute force
    let mut rng = init_rng(16, 0);
    let (w, h, k) = (57usize, 43usize, 3usize);
    let tiles: Vec<TilePrediction> = (0..25)
        .map(|_| {
            let (tw, th) = (rng.random_range(5..30usize), rng.random_range(5..30usize));
            let (col, row) = (rng.random_range(0..=w - tw), rng.random_range(0..=h - th));
            let sigma = rng.random_range(2.0..10.0);
            let (probs, weights) = (0..tw * th)
                .map(|i| {
                    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
                    let s: f64 = raw.iter().sum();
                    let (dx, dy) = ((i % tw) as f64 + 0.5 - tw as f64 / 2.0, (i / tw) as f64 + 0.5 - th as f64 / 2.0);
                    (
                        Some(raw.iter().map(|v| v / s).collect::<Vec<f64>>()),
                        gaussian_weight(dx, dy, sigma),
                    )
                })
                .unzip();
            TilePrediction {
                col,
                row,
                width: tw,
                height: th,
                probs,
                weights,
            }
        })
        .collect();
    let base = TilePrediction {
        col: 0,
        row: 0,
        width: w,
        height: h,
        probs: vec![Some(vec![1.0 / 3.0; 3]); w * h],
        weights: vec![1e-3; w * h],
    };
    let mut all = tiles.clone();
    all.push(base);
    let (bands, _) = merge(w, h, k, &all).unwrap();
    let mut brute = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            let (mut num, mut den) = (vec![0.0; k], 0.0);
            for t in &all {
                if x >= t.col && x < t.col + t.width && y >= t.row && y < t.row + t.height {
                    let i = (y - t.row) * t.width + (x - t.col);
                    for c in 0..k {
                        num[c] += t.weights[i] * t.probs[i].as_ref().unwrap()[c];
                    }
                    den += t.weights[i];
                }
            }
            for c in 0..k {
                brute = brute.max((bands[c][y * w + x] - num[c] / den).abs());
            }
        }
    }

    // tile order
    let mut shuffled = all.clone();
    shuffled.shuffle(&mut rng);
    let (again, _) = merge(w, h, k, &shuffled).unwrap();
    let order = bands
        .iter()
        .flatten()
        .zip(again.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let plan = MosaicPlan::new(stack, PixelRegion::whole(stack), 48, &heavy).unwrap();
    let a = predict_region(&Wavy, stack, &plan, Task::Nsp).unwrap();
    let mut reversed = plan.clone();
    reversed.origins.reverse();
    let b = predict_region(&Wavy, stack, &reversed, Task::Nsp).unwrap();
    let region_order = a.bands[1].iter().zip(&b.bands[1]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);

    verdict(
        6,
        single == 0.0 && constant < 1e-12 && brute < 1e-6 && order < 1e-12 && region_order < 1e-12,
        format!(
            "single tile diff {single:.1e} (exact); constant diff {constant:.1e}; brute-force diff {brute:.2e} < 1e-6; order diff {order:.1e} / {region_order:.1e}"
        ),
    );
}

// ---------------------------------------------------------------- 7

#[test]
fn criterion_7_metrics_oracle() {
    struct Fixture {
        labels: Vec<usize>,
        preds: Vec<usize>,
        // P0, R0, P1, R1, Acc (None = undefined)
        want: [Option<f64>; 5],
    }
    let fixtures = [
        Fixture {
            labels: vec![1, 1, 0, 0],
            preds: vec![1, 0, 0, 0],
            want: [Some(200.0 / 3.0), Some(100.0), Some(100.0), Some(50.0), Some(75.0)],
        },
        Fixture {
            labels: vec![0, 1, 0, 1, 1],
            preds: vec![0, 1, 0, 1, 1],
            want: [Some(100.0), Some(100.0), Some(100.0), Some(100.0), Some(100.0)],
        },
        // TP=2 FP=1 FN=1 TN=2
        Fixture {
            labels: vec![1, 1, 1, 0, 0, 0],
            preds: vec![1, 1, 0, 1, 0, 0],
            want: [
                Some(200.0 / 3.0),
                Some(200.0 / 3.0),
                Some(200.0 / 3.0),
                Some(200.0 / 3.0),
                Some(200.0 / 3.0),
            ],
        },
        // never predicts presence
        Fixture {
            labels: vec![0, 0, 1],
            preds: vec![0, 0, 0],
            want: [Some(200.0 / 3.0), Some(100.0), None, Some(0.0), Some(200.0 / 3.0)],
        },
        // no presence in the truth
        Fixture {
            labels: vec![0, 0, 0, 0],
            preds: vec![1, 0, 1, 0],
            want: [Some(100.0), Some(50.0), Some(0.0), None, Some(50.0)],
        },
    ];
    let mut ok = true;
    for f in &fixtures {
        let m = binary_metrics(&f.preds, &f.labels).unwrap();
        let got = [m.precision_0, m.recall_0, m.precision_1, m.recall_1, Some(m.accuracy)];
        for (g, w) in got.iter().zip(&f.want) {
            ok &= match (g, w) {
                (Some(a), Some(b)) => (a - b).abs() < 1e-9,
                (None, None) => true,
                _ => false,
            };
        }
    }
    // 3-class fixture: TP (2, 1, 0), support (3, 2, 1), predicted (3, 2, 1)
    let w = weighted_multiclass_metrics(&[0, 0, 1, 1, 2, 0], &[0, 0, 0, 1, 1, 2], 3).unwrap();
    ok &= (w.accuracy - 50.0).abs() < 1e-9 && (w.recall - 50.0).abs() < 1e-9;
    // per-class P = R = F1 = (2/3, 1/2, 0)
    ok &= (w.precision - 50.0).abs() < 1e-9 && (w.f1 - 50.0).abs() < 1e-9;
    let fixture_line = format!("5 binary fixtures + 1 multiclass fixture exact: {ok}");

    let mut rng = init_rng(17, 0);
    let mut identity = true;
    for _ in 0..100 {
        let k = rng.random_range(2..9usize);
        let n = rng.random_range(1..200usize);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let w = weighted_multiclass_metrics(&preds, &labels, k).unwrap();
        let cm = ConfusionMatrix::from_predictions(&preds, &labels, k).unwrap();
        identity &= w.recall == w.accuracy && (w.accuracy - 100.0 * cm.trace() as f64 / n as f64).abs() < 1e-9;
    }
    verdict(
        7,
        ok && identity,
        format!("{fixture_line}; weighted recall == accuracy on 100 random fixtures: {identity}"),
    );
}

// ---------------------------------------------------------------- 8

fn mean_accuracy(task: Task, world: &soilmap::data::SynthWorld, folds: &FoldAssignment, preds: &[PointPrediction]) -> f64 {
    let labels: Vec<Option<usize>> = world.observations.iter().map(|o| o.label(task)).collect();
    let ctx = EvalContext {
        task,
        labels: &labels,
        folds,
        regions: None,
        excluded_zones: &[],
        threshold: 0.5,
        n_bins: 10,
    };
    ctx.evaluate_model("m", preds).unwrap().mean["accuracy"].unwrap()
}

fn simplex_error(rows: &[Vec<f64>], k: usize) -> f64 {
    rows.iter()
        .map(|p| {
            let range = p.iter().map(|v| if (0.0..=1.0).contains(v) { 0.0 } else { 1.0 }).sum::<f64>();
            if p.len() != k {
                return f64::INFINITY;
            }
            (p.iter().sum::<f64>() - 1.0).abs() + range
        })
        .fold(0.0, f64::max)
}

#[test]
fn criterion_8_end_to_end_synthetic_run() {
    let start = Instant::now();
    let world = generate_synthetic_world(&SynthConfig::default()).unwrap();
    let stack = &world.stack;
    let obs = world.observations.as_slice();
    let pts: Vec<(f64, f64)> = obs.iter().map(|o| (o.x, o.y)).collect();
    let labels: Vec<usize> = obs.iter().filter_map(|o| o.label(Task::Nsp)).collect();
    let presence = labels.iter().sum::<usize>() as f64 / labels.len() as f64;
    let baseline = 100.0 * presence.max(1.0 - presence);

    let cfg = TrainConfig::desk();
    let ctx = ModelContext::from_stack(stack);
    let mc = ModelConfig::desk(ctx.satellite_bands.len(), ctx.covariate_bands.len());
    assert_eq!((mc.tile_size(), mc.satellite.base_dim, mc.embed_dim), (64, 32, 256));
    assert_eq!((cfg.pretrain_epochs, cfg.finetune_epochs), (5, 5));
    let base = MisoModel::new(&mc, &ctx, DType::F32).unwrap();
    let log = pretrain(&base, stack, &cfg, None, &BTreeMap::new()).unwrap();
    println!(
        "pretrain: epoch losses {:?}",
        (0..cfg.pretrain_epochs).map(|e| log.epoch_mean(e).unwrap()).collect::<Vec<_>>()
    );

    let rf_cfg = RFConfig::default();
    let mut acc = BTreeMap::new();
    let mut random_fold0 = None;
    for scheme in [SplitScheme::Random, SplitScheme::SH_1KM] {
        let folds = make_split(&pts, scheme, 0).unwrap();
        let outcomes = finetune(&base, stack, obs, &folds, Task::Nsp, &cfg).unwrap();
        let miso: Vec<PointPrediction> = outcomes.iter().flat_map(|o| o.predictions.clone()).collect();
        let rf: Vec<PointPrediction> = (0..N_FOLDS)
            .flat_map(|f| rf_fold(stack, obs, &folds, f, Task::Nsp, &rf_cfg, None).unwrap().predictions)
            .collect();
        let (m, r) = (
            mean_accuracy(Task::Nsp, &world, &folds, &miso),
            mean_accuracy(Task::Nsp, &world, &folds, &rf),
        );
        println!(
            "{scheme}: MiSo {m:.2}%  RF {r:.2}%  (majority baseline {baseline:.2}%, {:.0} s elapsed)",
            secs(start.elapsed())
        );
        acc.insert(scheme.to_string(), (m, r));
        if scheme == SplitScheme::Random {
            random_fold0 = outcomes.into_iter().next().map(|o| o.model);
        }
    }
    // diagnostic only: point queries against the blended raster
    let nsp_model = random_fold0.unwrap();
    let plan = MosaicPlan::new(
        stack,
        PixelRegion {
            col: 192,
            row: 192,
            width: 256,
            height: 256,
        },
        64,
        &MosaicConfig::default(),
    )
    .unwrap();
    let nsp_map = predict_region(&nsp_model, stack, &plan, Task::Nsp).unwrap();
    let mut rng = init_rng(18, 0);
    let cells: Vec<(usize, usize)> = (0..50).map(|_| (rng.random_range(32..224), rng.random_range(32..224))).collect();
    let t = *stack.transform();
    let probe_pts: Vec<(f64, f64)> = cells
        .iter()
        .map(|&(c, r)| t.pixel_to_planar(192.0 + c as f64 + 0.5, 192.0 + r as f64 + 0.5))
        .collect();
    let point_probs = predict_points(&nsp_model, stack, &probe_pts, Task::Nsp).unwrap();
    let cross = cells
        .iter()
        .zip(&point_probs)
        .map(|(&(c, r), p)| (nsp_map.get(1, c, r) - p[1]).abs())
        .fold(0.0, f64::max);
    println!("diagnostic: cross-path max |point - raster| over 50 interior cells = {cross:.4} (target 0.02)");

    let (mr, rr) = acc["random"];
    let (ms, rs) = acc["sh-1km"];

    // taxonomy: finetune one fold briefly and check every output is a 7-simplex
    let tax_cfg = TrainConfig {
        finetune_epochs: 1,
        ..cfg.clone()
    };
    let folds = make_split(&pts, SplitScheme::Random, 0).unwrap();
    let (tax_model, _) = finetune_on(&base, stack, obs, &folds.training(0), Task::Taxonomy, &tax_cfg, 0).unwrap();
    let point_probs = predict_points(&tax_model, stack, &pts, Task::Taxonomy).unwrap();
    let plan = MosaicPlan::new(
        stack,
        PixelRegion {
            col: 200,
            row: 200,
            width: 128,
            height: 128,
        },
        64,
        &MosaicConfig::default(),
    )
    .unwrap();
    let raster = predict_region(&tax_model, stack, &plan, Task::Taxonomy).unwrap();
    let raster_rows: Vec<Vec<f64>> = (0..raster.width * raster.height)
        .map(|i| raster.bands.iter().map(|b| b[i]).collect())
        .collect();
    let tax_err = simplex_error(&point_probs, 7).max(simplex_error(&raster_rows, 7));

    let elapsed = start.elapsed();
    let pass =
        mr - baseline >= 15.0 && rr - baseline >= 15.0 && ms < mr && rs < rr && tax_err < 1e-5 && elapsed < Duration::from_secs(30 * 60);
    verdict(
        8,
        pass,
        format!(
            "Random: MiSo {mr:.2}%, RF {rr:.2}% vs baseline {baseline:.2}% + 15; SH-1km: MiSo {ms:.2}% < {mr:.2}%, RF {rs:.2}% < {rr:.2}%; \
             taxonomy simplex error {tax_err:.1e} < 1e-5 over {} points and {} raster cells; {:.0} s < 1800 s on {} thread(s)",
            point_probs.len(),
            raster_rows.len(),
            secs(elapsed),
            rayon::current_num_threads()
        ),
    );
}

// ---------------------------------------------------------------- 9

#[test]
fn criterion_9_rf_configuration_fidelity() {
    let cfg = RFConfig::default();
    let profile_ok = cfg.n_trees == 253 && cfg.min_samples_split == 5 && cfg.max_depth == 16 && cfg.buffer_d == 50.0 && cfg.include_xy;
    let world = generate_synthetic_world(&SynthConfig {
        width: 96,
        height: 80,
        pixel_size: 20.0,
        n_points: 60,
        climate_resolution: 800.0,
        ..SynthConfig::default()
    })
    .unwrap();
    let stack = &world.stack;
    let t = *stack.transform();
    let mut rng = init_rng(19, 0);
    let b = stack.bounds();
    let mut lookup_exact = true;
    let mut disk_err = 0.0f64;
    for _ in 0..300 {
        let p = (rng.random_range(b.min_x..b.max_x), rng.random_range(b.min_y..b.max_y));
        let (c, r) = stack.pixel_of(p.0, p.1).unwrap();
        let f0 = extract_features(stack, p, 0.0, true).unwrap();
        for band in 0..stack.band_count() {
            lookup_exact &= f0[band] == stack.get(band, c, r) as f64;
        }
        lookup_exact &= f0[stack.band_count()] == p.0 && f0[stack.band_count() + 1] == p.1;
        let d = rng.random_range(10.0..120.0);
        let f = extract_features(stack, p, d, false).unwrap();
        let mut members = Vec::new();
        for row in 0..stack.height() {
            for col in 0..stack.width() {
                let (x, y) = t.pixel_to_planar(col as f64 + 0.5, row as f64 + 0.5);
                if (x - p.0).hypot(y - p.1) <= d {
                    members.push((col, row));
                }
            }
        }
        if members.is_empty() {
            members.push((c, r));
        }
        for band in 0..stack.band_count() {
            let mean = members.iter().map(|&(c, r)| stack.get(band, c, r) as f64).sum::<f64>() / members.len() as f64;
            disk_err = disk_err.max((f[band] - mean).abs());
        }
    }
    verdict(
        9,
        profile_ok && lookup_exact && disk_err < 1e-6,
        format!(
            "reference config trees={} min_split={} depth={} buffer={} m xy={}; buffer-0 equals pixel lookup: {lookup_exact}; disk mean vs brute force {disk_err:.1e} < 1e-6",
            cfg.n_trees, cfg.min_samples_split, cfg.max_depth, cfg.buffer_d, cfg.include_xy
        ),
    );
}

// ---------------------------------------------------------------- 10

#[test]
fn criterion_10_probability_analysis_tooling() {
    let mut rng = init_rng(20, 0);
    let mut mass = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..2000usize);
        let probs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
        let h = probability_histogram(&probs, 10).unwrap();
        mass = mass.max((h.iter().sum::<f64>() - 1.0).abs());
    }

    let names: BTreeMap<i32, String> = (0..6).map(|i| (i, format!("zone{i}"))).collect();
    let mut zones_ok = true;
    let mut regional_ok = true;
    let mut flags_ok = true;
    for _ in 0..50 {
        let n = rng.random_range(1..400usize);
        let regions: Vec<i32> = (0..n)
            .map(|_| {
                if rng.random_bool(0.05) {
                    UNASSIGNED
                } else {
                    rng.random_range(0..5)
                }
            })
            .collect();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let table = zone_presence_percentage(&regions, &values, &names, 0.5, &[]);
        for row in &table.rows {
            let members: Vec<f64> = regions
                .iter()
                .zip(&values)
                .filter(|(r, _)| **r == row.region_id)
                .map(|(_, v)| *v)
                .collect();
            let want = (!members.is_empty()).then(|| 100.0 * members.iter().filter(|v| **v >= 0.5).count() as f64 / members.len() as f64);
            zones_ok &= row.presence_pct == want && row.n_points == members.len();
        }
        zones_ok &= table.unassigned_points == regions.iter().filter(|r| **r == UNASSIGNED).count();

        let k = 7;
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let preds: Vec<usize> = labels
            .iter()
            .map(|&l| if rng.random_bool(0.6) { l } else { rng.random_range(0..k) })
            .collect();
        let rows = per_region_class_accuracy(&regions, &preds, &labels, &names, k);
        regional_ok &= rows.len() == names.len() * k;
        for row in &rows {
            let idx: Vec<usize> = (0..n).filter(|&i| regions[i] == row.region_id && labels[i] == row.class).collect();
            let want = (!idx.is_empty()).then(|| 100.0 * idx.iter().filter(|&&i| preds[i] == labels[i]).count() as f64 / idx.len() as f64);
            regional_ok &= row.accuracy == want && row.n_points == idx.len();
            flags_ok &= row.flagged == (idx.len() < 5);
        }
    }
    verdict(
        10,
        mass < 1e-12 && zones_ok && regional_ok && flags_ok,
        format!("histogram mass error {mass:.1e} < 1e-12; zone presence matches group-by: {zones_ok}; per-region class accuracy matches group-by: {regional_ok}; <5-point rows flagged: {flags_ok}"),
    );
}
