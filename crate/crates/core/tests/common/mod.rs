#![allow(dead_code)]

use koopdrift::coupling::{distance_correlation, normalized_transfer_entropy, transfer_entropy};
use koopdrift::datasets::{sample_timestep, DriftKind, DriftSpec, LabeledBatch};
use koopdrift::koopman::{detrend, edmd_fit, retrend};
use koopdrift::model::{loss_and_grad, NetConfig, ParamVector};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn central_difference(cfg: &NetConfig, th: &ParamVector, b: &LabeledBatch, anchor: &ParamVector, ls: f64, lwd: f64) -> Vec<f64> {
    let h = 1e-5;
    (0..th.len())
        .map(|i| {
            let mut up = th.clone();
            let mut dn = th.clone();
            up.as_mut_slice()[i] += h;
            dn.as_mut_slice()[i] -= h;
            let fu = loss_and_grad(cfg, &up, b, Some(anchor), ls, lwd).unwrap().total;
            let fd = loss_and_grad(cfg, &dn, b, Some(anchor), ls, lwd).unwrap().total;
            (fu - fd) / (2.0 * h)
        })
        .collect()
}

/// Relative error `|g - fd| / |fd|` for each random draw, cycling through all kinds.
pub fn gradient_errors(draws: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..draws)
        .map(|draw| {
            let kind = DriftKind::ALL[draw % 6];
            let spec = DriftSpec::new(kind);
            let cfg = NetConfig::for_classes(kind.n_classes());
            let n = cfg.n_params();
            let th = ParamVector::new((0..n).map(|_| rng.random_range(-2.0..2.0)).collect());
            let anchor = ParamVector::new((0..n).map(|_| rng.random_range(-2.0..2.0)).collect());
            let ls = rng.random_range(0.0..0.1);
            let lwd = rng.random_range(0.0..0.1);
            let batch = sample_timestep(&spec, rng.random_range(0..400), 64, rng.random()).unwrap();
            let g = loss_and_grad(&cfg, &th, &batch, Some(&anchor), ls, lwd).unwrap().grad;
            let fd = central_difference(&cfg, &th, &batch, &anchor, ls, lwd);
            let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
            diff / norm.max(1e-12)
        })
        .collect()
}

/// Largest entry error of EDMD on noiseless snapshots of a known operator.
pub fn edmd_recovery_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 7;
    let (c, s) = (0.3f64.cos(), 0.3f64.sin());
    let mut truth = DMatrix::<f64>::zeros(n, n);
    truth[(0, 0)] = 0.95 * c;
    truth[(0, 1)] = -0.95 * s;
    truth[(1, 0)] = 0.95 * s;
    truth[(1, 1)] = 0.95 * c;
    for i in 2..n {
        truth[(i, i)] = 0.5 + 0.07 * i as f64;
        truth[(i, i - 1)] = 0.1;
    }
    let cols = 60;
    let mut x = DMatrix::<f64>::zeros(n, cols + 1);
    for i in 0..n {
        x[(i, 0)] = rng.random_range(-1.0..1.0);
    }
    for j in 0..cols {
        let next = &truth * x.column(j);
        x.set_column(j + 1, &next);
    }
    let a = edmd_fit(&x.columns(0, cols).into_owned(), &x.columns(1, cols).into_owned()).unwrap();
    (&a - &truth).amax()
}

/// (worst slope/intercept error on noiseless lines, worst retrend round-trip error).
pub fn detrend_errors() -> (f64, f64) {
    let start = 37;
    let truth = [(3.0, 0.5), (-1.25, -0.04), (0.0, 0.0), (1e3, 2.5e-3)];
    let rows: Vec<Vec<f64>> = truth
        .iter()
        .map(|&(a, b)| (0..300).map(|j| a + b * (start + j) as f64).collect())
        .collect();
    let (res, trend) = detrend(&rows, start).unwrap();
    let mut fit_err: f64 = 0.0;
    for (i, &(a, b)) in truth.iter().enumerate() {
        fit_err = fit_err
            .max((trend.slopes[i] - b).abs())
            .max((trend.intercepts[i] - a).abs() / a.abs().max(1.0));
        fit_err = res[i].iter().fold(fit_err, |m, r| m.max(r.abs()));
    }
    let wavy: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().enumerate().map(|(j, v)| v + (j as f64 * 0.2).sin()).collect())
        .collect();
    let (res, trend) = detrend(&wavy, start).unwrap();
    let back = retrend(&res, &trend, start);
    let mut trip: f64 = 0.0;
    for (r, w) in back.iter().zip(&wavy) {
        for (x, y) in r.iter().zip(w) {
            trip = trip.max((x - y).abs() / y.abs().max(1.0));
        }
    }
    (fit_err, trip)
}

pub fn series(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn percentile_95(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[(0.95 * (v.len() - 1) as f64).round() as usize]
}

/// 95th percentile of `stat(x, shuffled y)`.
pub fn null_quantile(x: &[f64], y: &[f64], shuffles: usize, seed: u64, stat: impl Fn(&[f64], &[f64]) -> f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm = y.to_vec();
    let null: Vec<f64> = (0..shuffles)
        .map(|_| {
            perm.shuffle(&mut rng);
            stat(x, &perm)
        })
        .collect();
    percentile_95(null)
}

/// (statistic, null 95th percentile) for two independent series of length 300.
pub fn dcor_independence() -> (f64, f64) {
    let x = series(100, 300);
    let y = series(200, 300);
    let d = distance_correlation(&x, &y).unwrap();
    (d, null_quantile(&x, &y, 1000, 5, |a, b| distance_correlation(a, b).unwrap()))
}

/// Fraction of independent trials whose dCor is below its permutation-null 95th percentile.
pub fn dcor_independence_rate(trials: u64) -> f64 {
    let passed = (0..trials)
        .filter(|&k| {
            let x = series(1000 + k, 120);
            let y = series(5000 + k, 120);
            let d = distance_correlation(&x, &y).unwrap();
            d < null_quantile(&x, &y, 200, k, |a, b| distance_correlation(a, b).unwrap())
        })
        .count();
    passed as f64 / trials as f64
}

/// Worst symmetry gap, range violation flag, self/affine deviation from 1 over random draws.
pub fn dcor_properties(draws: u64) -> (f64, bool, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (mut sym, mut in_range, mut unit): (f64, bool, f64) = (0.0, true, 0.0);
    for k in 0..draws {
        let n = rng.random_range(4..80);
        let x = series(k, n);
        let y: Vec<f64> = series(k + 10_000, n).iter().map(|v| v.powi(3) + 0.3 * v).collect();
        let a = distance_correlation(&x, &y).unwrap();
        let b = distance_correlation(&y, &x).unwrap();
        sym = sym.max((a - b).abs());
        in_range &= (0.0..=1.0).contains(&a);
        let (m, c) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let ax: Vec<f64> = x.iter().map(|v| m * v + c).collect();
        unit = unit
            .max((distance_correlation(&x, &x).unwrap() - 1.0).abs())
            .max((distance_correlation(&x, &ax).unwrap() - 1.0).abs());
    }
    (sym, in_range, unit)
}

/// (TE of independent series, null 95th percentile).
pub fn te_independence() -> (f64, f64) {
    let x = series(7, 400);
    let y = series(8, 400);
    let te = transfer_entropy(&x, &y, 8).unwrap();
    // shuffling the source destroys any lagged dependence
    (te, null_quantile(&y, &x, 1000, 9, |target, src| transfer_entropy(src, target, 8).unwrap()))
}

pub fn copy_process(n: usize, levels: u32, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64).collect();
    let mut y = vec![rng.random_range(0..levels) as f64];
    y.extend_from_slice(&x[..n - 1]);
    (x, y)
}

pub struct CopyCheck {
    pub forward: f64,
    pub backward: f64,
    pub normalized: f64,
    /// (source, target) of the largest TE in a three-node network with one copy link.
    pub strongest: (usize, usize),
}

pub fn te_copy_process() -> CopyCheck {
    let (x, y) = copy_process(40_000, 8, 21);
    let z = series(99, x.len());
    let nodes = [&x, &y, &z];
    let mut best = (0.0, 0, 0);
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                let te = transfer_entropy(nodes[i], nodes[j], 8).unwrap();
                if te > best.0 {
                    best = (te, i, j);
                }
            }
        }
    }
    CopyCheck {
        forward: transfer_entropy(&x, &y, 8).unwrap(),
        backward: transfer_entropy(&y, &x, 8).unwrap(),
        normalized: normalized_transfer_entropy(&x, &y, 8).unwrap(),
        strongest: (best.1, best.2),
    }
}
