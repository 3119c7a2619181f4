//! Pairwise dependence diagnostics over a weight trajectory.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NetConfig;
use crate::trainer::WeightTrajectory;

pub const DEFAULT_TE_BINS: usize = 8;
pub const MIN_WINDOW: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub names: Vec<String>,
    pub dcor_matrix: Vec<Vec<f64>>,
    /// Normalized transfer entropy, source in rows, target in columns.
    pub te_matrix: Vec<Vec<f64>>,
    /// Transfer entropy in nats before normalization.
    pub te_raw: Vec<Vec<f64>>,
    pub dcor_mean_offdiag: f64,
    pub dcor_frac_above_half: f64,
    /// `None` when the L2 -> L1 block carries no information at all.
    pub te_ratio_l1_l2: Option<f64>,
    pub te_bins: usize,
    pub layer1_len: usize,
    pub window: (usize, usize),
}

/// Doubly-centered pairwise distance matrix of a scalar series, row-major.
fn centered_distances(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] = (x[i] - x[j]).abs();
        }
    }
    let row_mean: Vec<f64> = (0..n).map(|i| d[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64).collect();
    let grand = row_mean.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            // distance matrix is symmetric, so column means equal row means
            d[i * n + j] += grand - row_mean[i] - row_mean[j];
        }
    }
    d
}

fn dcor_from_centered(a: &[f64], b: &[f64], var_a: f64, var_b: f64) -> f64 {
    if var_a <= 0.0 || var_b <= 0.0 {
        return 0.0;
    }
    let n2 = a.len() as f64;
    let cov = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / n2;
    let r2 = (cov / (var_a * var_b).sqrt()).clamp(0.0, 1.0);
    r2.sqrt()
}

fn dvar(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>() / a.len() as f64
}

/// Sample distance correlation (V-statistic) of two scalar series.
pub fn distance_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    if x.len() < 4 {
        return Err(Error::InvalidInput("distance correlation needs at least 4 samples".into()));
    }
    crate::error::ensure_finite(x, "dcor input")?;
    crate::error::ensure_finite(y, "dcor input")?;
    let a = centered_distances(x);
    let b = centered_distances(y);
    Ok(dcor_from_centered(&a, &b, dvar(&a), dvar(&b)))
}

/// Equal-frequency bin index for each sample. Tied values share a bin, placed
/// by their mid-rank.
pub fn quantile_bins(x: &[f64], bins: usize) -> Vec<usize> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut out = vec![0; n];
    let mut lo = 0;
    while lo < n {
        let mut hi = lo + 1;
        while hi < n && x[order[hi]] == x[order[lo]] {
            hi += 1;
        }
        // mid-rank of the tie group is (lo + hi - 1) / 2
        let bin = (((lo + hi - 1) * bins) / (2 * n)).min(bins - 1);
        for &i in &order[lo..hi] {
            out[i] = bin;
        }
        lo = hi;
    }
    out
}

fn entropy(counts: &[u32], total: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}

/// Transfer entropy and conditional entropy H(Y_t | Y_{t-1}) from binned series.
fn te_binned(xb: &[usize], yb: &[usize], bins: usize) -> (f64, f64) {
    let n = xb.len() - 1;
    let mut yy = vec![0u32; bins * bins];
    let mut yp = vec![0u32; bins];
    let mut yyx = vec![0u32; bins * bins * bins];
    let mut yx = vec![0u32; bins * bins];
    for t in 1..=n {
        let (cur, prev, src) = (yb[t], yb[t - 1], xb[t - 1]);
        yy[cur * bins + prev] += 1;
        yp[prev] += 1;
        yyx[(cur * bins + prev) * bins + src] += 1;
        yx[prev * bins + src] += 1;
    }
    let total = n as f64;
    let h_cond = entropy(&yy, total) - entropy(&yp, total);
    let h_cond_x = entropy(&yyx, total) - entropy(&yx, total);
    ((h_cond - h_cond_x).max(0.0), h_cond.max(0.0))
}

fn check_te_args(x: &[f64], y: &[f64], bins: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    if x.len() < 20 {
        return Err(Error::InvalidInput("transfer entropy needs at least 20 samples".into()));
    }
    if bins < 2 {
        return Err(Error::InvalidInput("transfer entropy needs at least 2 bins".into()));
    }
    Ok(())
}

/// TE(x -> y) in nats with history length one.
pub fn transfer_entropy(x: &[f64], y: &[f64], bins: usize) -> Result<f64> {
    check_te_args(x, y, bins)?;
    Ok(te_binned(&quantile_bins(x, bins), &quantile_bins(y, bins), bins).0)
}

/// TE(x -> y) / H(Y_t | Y_{t-1}); zero when the target is fully predictable from its own past.
pub fn normalized_transfer_entropy(x: &[f64], y: &[f64], bins: usize) -> Result<f64> {
    check_te_args(x, y, bins)?;
    let (te, h) = te_binned(&quantile_bins(x, bins), &quantile_bins(y, bins), bins);
    Ok(if h > 0.0 { te / h } else { 0.0 })
}

fn block_mean(m: &[Vec<f64>], rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0;
    for i in rows {
        for j in cols.clone() {
            if i != j {
                sum += m[i][j];
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

pub fn coupling_report(w: &WeightTrajectory, cfg: &NetConfig, names: &[String], bins: usize) -> Result<CouplingReport> {
    let n = w.n_params();
    if n != cfg.n_params() {
        return Err(Error::DimensionMismatch { expected: cfg.n_params(), got: n });
    }
    if names.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: names.len() });
    }
    if w.len() < MIN_WINDOW {
        return Err(Error::InvalidInput(format!(
            "coupling window has {} steps, need at least {MIN_WINDOW}",
            w.len()
        )));
    }
    if bins < 2 {
        return Err(Error::InvalidInput("te bins must be at least 2".into()));
    }
    let rows = w.rows();
    for r in &rows {
        crate::error::ensure_finite(r, "trajectory")?;
    }
    let centered: Vec<Vec<f64>> = rows.par_iter().map(|r| centered_distances(r)).collect();
    let vars: Vec<f64> = centered.iter().map(|c| dvar(c)).collect();
    let binned: Vec<Vec<usize>> = rows.iter().map(|r| quantile_bins(r, bins)).collect();

    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let cells: Vec<(f64, f64, f64)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            if i == j {
                let d = if vars[i] > 0.0 { 1.0 } else { 0.0 };
                return (d, 0.0, 0.0);
            }
            let d = if i < j { dcor_from_centered(&centered[i], &centered[j], vars[i], vars[j]) } else { f64::NAN };
            let (te, h) = te_binned(&binned[i], &binned[j], bins);
            (d, te, if h > 0.0 { te / h } else { 0.0 })
        })
        .collect();

    let mut dcor = vec![vec![0.0; n]; n];
    let mut te_raw = vec![vec![0.0; n]; n];
    let mut te = vec![vec![0.0; n]; n];
    for (&(i, j), &(d, raw, norm)) in pairs.iter().zip(&cells) {
        if i <= j {
            dcor[i][j] = d;
            dcor[j][i] = d;
        }
        te_raw[i][j] = raw;
        te[i][j] = norm;
    }

    let mut off = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            off.push(dcor[i][j]);
        }
    }
    let dcor_mean_offdiag = off.iter().sum::<f64>() / off.len() as f64;
    let dcor_frac_above_half = off.iter().filter(|&&d| d > 0.5).count() as f64 / off.len() as f64;

    let l1 = cfg.layer1_len();
    let forward = block_mean(&te, 0..l1, l1..n);
    let backward = block_mean(&te, l1..n, 0..l1);
    let te_ratio_l1_l2 = if backward > 0.0 { Some(forward / backward) } else { None };

    Ok(CouplingReport {
        names: names.to_vec(),
        dcor_matrix: dcor,
        te_matrix: te,
        te_raw,
        dcor_mean_offdiag,
        dcor_frac_above_half,
        te_ratio_l1_l2,
        te_bins: bins,
        layer1_len: l1,
        window: (w.start, w.end()),
    })
}

/// Square matrix as CSV with a leading name column.
pub fn matrix_csv(names: &[String], m: &[Vec<f64>]) -> String {
    let mut out = String::from("param");
    for n in names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for (name, row) in names.iter().zip(m) {
        out.push_str(name);
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_bins_are_balanced() {
        let x: Vec<f64> = (0..80).map(|i| ((i * 37) % 80) as f64).collect();
        let b = quantile_bins(&x, 8);
        for k in 0..8 {
            assert_eq!(b.iter().filter(|&&v| v == k).count(), 10);
        }
    }

    #[test]
    fn ties_share_a_bin() {
        let x = [1.0, 1.0, 1.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let b = quantile_bins(&x, 4);
        assert!(b[..4].iter().all(|&v| v == 0));
        assert_eq!(b[7], 3);
    }

    #[test]
    fn constant_series_gives_zero() {
        let c = vec![3.0; 40];
        let x: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        assert_eq!(distance_correlation(&c, &x).unwrap(), 0.0);
        assert_eq!(transfer_entropy(&x, &c, 8).unwrap(), 0.0);
        assert_eq!(normalized_transfer_entropy(&x, &c, 8).unwrap(), 0.0);
    }

    #[test]
    fn rejects_short_or_mismatched() {
        assert!(distance_correlation(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(distance_correlation(&[1.0; 5], &[1.0; 6]).is_err());
        assert!(transfer_entropy(&[1.0; 10], &[1.0; 10], 8).is_err());
        assert!(transfer_entropy(&[1.0; 30], &[1.0; 30], 1).is_err());
    }
}
