//! Koopman model of a weight trajectory.
//!
//! Pipeline: optional per-parameter linear detrend, per-parameter z-scoring,
//! PCA whitening, a constant + latent + Fourier-harmonic dictionary, a
//! least-squares EDMD fit and a spectral-radius projection. The fitted
//! operator is then iterated autonomously and mapped back to weights.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::linalg::{self, ProjectionMethod, PINV_RCOND};
use crate::model::ParamVector;
use crate::trainer::WeightTrajectory;

/// Rows with a standard deviation below this are treated as constant.
pub const STD_FLOOR: f64 = 1e-8;
pub const DEFAULT_PCA_THRESHOLD: f64 = 0.995;
pub const DEFAULT_HARMONICS: usize = 4;
pub const DEFAULT_MARGIN: f64 = 1e-6;

/// Per-parameter z-scoring statistics (population variance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Rows whose spread fell below [`STD_FLOOR`]; they map to zero.
    pub degenerate: Vec<bool>,
}

impl Scaler {
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| if self.degenerate[i] { 0.0 } else { (v - self.mean[i]) / self.std[i] })
            .collect()
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, &v)| self.mean[i] + self.std[i] * v)
            .collect()
    }
}

/// Z-scores each row over its columns.
pub fn standardize(rows: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Scaler)> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols < 2 {
        return Err(Error::InvalidInput("standardize needs at least one row and two columns".into()));
    }
    let mut mean = Vec::with_capacity(rows.len());
    let mut std = Vec::with_capacity(rows.len());
    let mut degenerate = Vec::with_capacity(rows.len());
    for row in rows {
        if row.len() != cols {
            return Err(Error::DimensionMismatch { expected: cols, got: row.len() });
        }
        ensure_finite(row, "trajectory")?;
        let m = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|v| (v - m).powi(2)).sum::<f64>() / cols as f64;
        let s = var.sqrt();
        mean.push(m);
        degenerate.push(s < STD_FLOOR);
        std.push(s.max(STD_FLOOR));
    }
    let scaler = Scaler { mean, std, degenerate };
    let z = rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            if scaler.degenerate[i] {
                vec![0.0; cols]
            } else {
                row.iter().map(|v| (v - scaler.mean[i]) / scaler.std[i]).collect()
            }
        })
        .collect();
    Ok((z, scaler))
}

/// Per-parameter OLS line `a_i + b_i t` in absolute timestep units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendModel {
    pub intercepts: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl TrendModel {
    pub fn at(&self, t: f64) -> Vec<f64> {
        self.intercepts.iter().zip(&self.slopes).map(|(a, b)| a + b * t).collect()
    }
}

/// Removes a per-row OLS line fitted against the timesteps `start, start+1, ...`.
pub fn detrend(rows: &[Vec<f64>], start: usize) -> Result<(Vec<Vec<f64>>, TrendModel)> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols < 3 {
        return Err(Error::InvalidInput("detrend needs at least three columns".into()));
    }
    let mut intercepts = Vec::with_capacity(rows.len());
    let mut slopes = Vec::with_capacity(rows.len());
    let mut residuals = Vec::with_capacity(rows.len());
    for row in rows {
        if row.len() != cols {
            return Err(Error::DimensionMismatch { expected: cols, got: row.len() });
        }
        let (a0, b) = crate::trainer::ols_line(row);
        // ols_line is relative to the first column
        let a = a0 - b * start as f64;
        residuals.push(
            row.iter()
                .enumerate()
                .map(|(j, v)| v - (a0 + b * j as f64))
                .collect(),
        );
        intercepts.push(a);
        slopes.push(b);
    }
    Ok((residuals, TrendModel { intercepts, slopes }))
}

/// Like [`detrend`], but the line is fitted jointly with `harmonics` sine and
/// cosine terms of `period`, so periodic content does not leak into the slope.
/// Only the linear part is removed.
pub fn detrend_periodic(
    rows: &[Vec<f64>],
    start: usize,
    period: usize,
    harmonics: usize,
) -> Result<(Vec<Vec<f64>>, TrendModel)> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols < 3 + 2 * harmonics {
        return Err(Error::InvalidInput(format!(
            "periodic detrend with {harmonics} harmonics needs at least {} columns",
            3 + 2 * harmonics
        )));
    }
    let omega = TAU / period as f64;
    let t0 = start as f64 + (cols - 1) as f64 / 2.0;
    let design = DMatrix::from_fn(cols, 2 + 2 * harmonics, |j, c| {
        let t = (start + j) as f64;
        match c {
            0 => 1.0,
            1 => t - t0,
            _ => {
                let k = ((c - 2) / 2 + 1) as f64;
                if c % 2 == 0 {
                    (k * omega * t).sin()
                } else {
                    (k * omega * t).cos()
                }
            }
        }
    });
    let solve = linalg::pinv(&design, PINV_RCOND)?;
    let mut intercepts = Vec::with_capacity(rows.len());
    let mut slopes = Vec::with_capacity(rows.len());
    let mut residuals = Vec::with_capacity(rows.len());
    for row in rows {
        if row.len() != cols {
            return Err(Error::DimensionMismatch { expected: cols, got: row.len() });
        }
        let beta = &solve * nalgebra::DVector::from_column_slice(row);
        let (b, a) = (beta[1], beta[0] - beta[1] * t0);
        residuals.push(
            row.iter()
                .enumerate()
                .map(|(j, v)| v - (a + b * (start + j) as f64))
                .collect(),
        );
        intercepts.push(a);
        slopes.push(b);
    }
    Ok((residuals, TrendModel { intercepts, slopes }))
}

/// Adds the trend back onto residual rows that start at `start`.
pub fn retrend(residuals: &[Vec<f64>], trend: &TrendModel, start: usize) -> Vec<Vec<f64>> {
    residuals
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, v)| v + trend.intercepts[i] + trend.slopes[i] * (start + j) as f64)
                .collect()
        })
        .collect()
}

/// Leading principal directions of standardised rows, with whitening scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    /// `p` orthonormal rows of length `n_params`.
    pub components: Vec<Vec<f64>>,
    /// Variance of the data along each component.
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
    pub threshold: f64,
}

impl PcaBasis {
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn explained_ratio(&self) -> f64 {
        if self.total_variance > 0.0 {
            self.explained_variance.iter().sum::<f64>() / self.total_variance
        } else {
            1.0
        }
    }

    /// Whitened coordinates of a standardised column.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .zip(&self.explained_variance)
            .map(|(c, ev)| c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / ev.sqrt())
            .collect()
    }

    /// Standardised column from whitened coordinates.
    pub fn back_project(&self, z: &[f64]) -> Vec<f64> {
        let n = self.components.first().map_or(0, Vec::len);
        let mut out = vec![0.0; n];
        for ((c, ev), &zk) in self.components.iter().zip(&self.explained_variance).zip(z) {
            let s = zk * ev.sqrt();
            for (o, a) in out.iter_mut().zip(c) {
                *o += a * s;
            }
        }
        out
    }
}

/// Smallest number of components whose cumulative variance ratio reaches
/// `threshold`, capped at the numerical rank.
pub fn fit_pca(rows: &[Vec<f64>], threshold: f64) -> Result<PcaBasis> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidInput(format!("PCA threshold {threshold} outside (0, 1]")));
    }
    let n = rows.len();
    let cols = rows.first().map_or(0, Vec::len);
    if n == 0 || cols < 2 {
        return Err(Error::InvalidInput("PCA needs at least two columns".into()));
    }
    let m = DMatrix::from_fn(n, cols, |i, j| rows[i][j]);
    let (vecs, svals) = linalg::left_singular(&m)?;
    let smax = svals.first().copied().unwrap_or(0.0);
    let rank = svals.iter().filter(|&&s| s > 1e-10 * smax && s > 0.0).count();
    if rank == 0 {
        return Err(Error::Numerical("trajectory has no variance".into()));
    }
    let variances: Vec<f64> = svals.iter().map(|s| s * s / cols as f64).collect();
    let total: f64 = variances.iter().sum();
    let mut p = rank;
    let mut cum = 0.0;
    for (k, v) in variances.iter().enumerate().take(rank) {
        cum += v;
        if cum / total >= threshold - 1e-12 {
            p = k + 1;
            break;
        }
    }
    let components = vecs
        .into_iter()
        .take(p)
        .map(|mut c| {
            // sign convention: largest-magnitude entry positive
            let big = c.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
            if big < 0.0 {
                c.iter_mut().for_each(|v| *v = -*v);
            }
            c
        })
        .collect();
    Ok(PcaBasis {
        components,
        explained_variance: variances[..p].to_vec(),
        total_variance: total,
        threshold,
    })
}

/// `[1, z, sin(w t), cos(w t), ..., sin(K w t), cos(K w t)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DictionarySpec {
    pub latent_dim: usize,
    pub harmonics: usize,
    pub omega: f64,
}

impl DictionarySpec {
    pub fn new(latent_dim: usize, harmonics: usize, period: usize) -> Self {
        DictionarySpec {
            latent_dim,
            harmonics,
            omega: TAU / period as f64,
        }
    }

    pub fn lifted_dim(&self) -> usize {
        1 + self.latent_dim + 2 * self.harmonics
    }

    pub fn lift(&self, z: &[f64], t: f64) -> Vec<f64> {
        let mut psi = Vec::with_capacity(self.lifted_dim());
        psi.push(1.0);
        psi.extend_from_slice(z);
        for k in 1..=self.harmonics {
            let (s, c) = (k as f64 * self.omega * t).sin_cos();
            psi.push(s);
            psi.push(c);
        }
        psi
    }

    /// Latent slots of a lifted vector.
    pub fn latent<'a>(&self, psi: &'a [f64]) -> &'a [f64] {
        &psi[1..1 + self.latent_dim]
    }
}

/// Lifts `z` at timestep `t`; see [`DictionarySpec::lift`].
pub fn lift(z: &[f64], t: usize, dict: &DictionarySpec) -> Vec<f64> {
    dict.lift(z, t as f64)
}

/// Least-squares operator `A = Psi_plus * pinv(Psi_minus)`.
pub fn edmd_fit(psi_minus: &DMatrix<f64>, psi_plus: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if psi_minus.shape() != psi_plus.shape() {
        return Err(Error::InvalidInput(format!(
            "snapshot shapes differ: {:?} vs {:?}",
            psi_minus.shape(),
            psi_plus.shape()
        )));
    }
    let a = psi_plus * linalg::pinv(psi_minus, PINV_RCOND)?;
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("EDMD produced a non-finite operator".into()));
    }
    Ok(a)
}

/// `|Psi_plus - A Psi_minus|_F / |Psi_plus|_F`.
pub fn one_step_residual(a: &DMatrix<f64>, psi_minus: &DMatrix<f64>, psi_plus: &DMatrix<f64>) -> f64 {
    (psi_plus - a * psi_minus).norm() / psi_plus.norm()
}

pub use linalg::enforce_spectral_radius;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Fourier,
    DetrendFourier,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Fourier => "fourier",
            Strategy::DetrendFourier => "detrend_fourier",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fourier" => Ok(Strategy::Fourier),
            "detrend_fourier" | "detrend+fourier" => Ok(Strategy::DetrendFourier),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutMode {
    /// Iterate the lifted state; the Fourier slots evolve under `A`.
    Autonomous,
    /// Rebuild the lifted state from the predicted latent and the clock each step.
    ReprojectTime,
}

impl FromStr for RolloutMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "autonomous" => Ok(RolloutMode::Autonomous),
            "reproject_time" | "reproject-time" => Ok(RolloutMode::ReprojectTime),
            other => Err(Error::Config(format!("unknown rollout mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KoopmanOptions {
    pub period: usize,
    pub strategy: Strategy,
    pub harmonics: usize,
    pub pca_threshold: f64,
    pub margin: f64,
}

impl KoopmanOptions {
    pub fn new(period: usize, strategy: Strategy) -> Self {
        KoopmanOptions {
            period,
            strategy,
            harmonics: DEFAULT_HARMONICS,
            pca_threshold: DEFAULT_PCA_THRESHOLD,
            margin: DEFAULT_MARGIN,
        }
    }
}

/// A fitted, immutable Koopman model of one training window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KoopmanModel {
    pub options: KoopmanOptions,
    pub scaler: Scaler,
    pub trend: Option<TrendModel>,
    pub basis: PcaBasis,
    pub dict: DictionarySpec,
    /// Operator after spectral projection, row-major.
    pub operator: Vec<Vec<f64>>,
    /// Eigenvalues of the projected operator as (re, im).
    pub eigenvalues: Vec<(f64, f64)>,
    /// Eigenvalues of the unconstrained least-squares operator.
    pub raw_eigenvalues: Vec<(f64, f64)>,
    pub spectral_radius_pre: f64,
    pub spectral_radius: f64,
    /// Spectral radius of the latent-to-latent block of the unconstrained fit.
    pub latent_spectral_radius: f64,
    pub projection: ProjectionMethod,
    pub eigenbasis_condition: Option<f64>,
    pub fit_residual: f64,
    pub train_start: usize,
    pub train_end: usize,
    /// Whitened latent state of the last training column.
    pub last_latent: Vec<f64>,
    pub warnings: Vec<String>,
}

impl KoopmanModel {
    pub fn operator_matrix(&self) -> DMatrix<f64> {
        let n = self.operator.len();
        DMatrix::from_fn(n, n, |i, j| self.operator[i][j])
    }

    pub fn latent_dim(&self) -> usize {
        self.basis.dim()
    }

    /// Whitened latent of a raw parameter column observed at timestep `t`.
    pub fn encode(&self, theta: &[f64], t: usize) -> Vec<f64> {
        let centered: Vec<f64> = match &self.trend {
            Some(tr) => theta.iter().zip(tr.at(t as f64)).map(|(w, l)| w - l).collect(),
            None => theta.to_vec(),
        };
        self.basis.project(&self.scaler.transform(&centered))
    }

    /// Parameters at timestep `t` from a whitened latent.
    pub fn decode(&self, z: &[f64], t: usize) -> ParamVector {
        let mut w = self.scaler.inverse(&self.basis.back_project(z));
        if let Some(tr) = &self.trend {
            for (wi, li) in w.iter_mut().zip(tr.at(t as f64)) {
                *wi += li;
            }
        }
        ParamVector::new(w)
    }

    /// `re,im,modulus,phase` table of the projected operator's eigenvalues.
    pub fn eigenvalue_csv(&self) -> String {
        let mut out = String::from("re,im,modulus,phase\n");
        for &(re, im) in &self.eigenvalues {
            let z = num_complex::Complex64::new(re, im);
            out.push_str(&format!("{re},{im},{},{}\n", z.norm(), z.arg()));
        }
        out
    }
}

fn to_pairs(vals: &[num_complex::Complex64]) -> Vec<(f64, f64)> {
    vals.iter().map(|z| (z.re, z.im)).collect()
}

/// Fits the full pipeline on every column of `w` (timesteps `w.start..=w.end()`).
pub fn fit_koopman(w: &WeightTrajectory, opts: &KoopmanOptions) -> Result<KoopmanModel> {
    if w.len() < 3 {
        return Err(Error::InvalidInput("Koopman fit needs at least three snapshots".into()));
    }
    if opts.period == 0 {
        return Err(Error::InvalidInput("period must be positive".into()));
    }
    let raw_rows = w.rows();
    let (rows, trend) = match opts.strategy {
        Strategy::Fourier => (raw_rows, None),
        Strategy::DetrendFourier => {
            let (res, tr) = detrend_periodic(&raw_rows, w.start, opts.period, opts.harmonics)?;
            (res, Some(tr))
        }
    };
    let (z_rows, scaler) = standardize(&rows)?;
    let basis = fit_pca(&z_rows, opts.pca_threshold)?;
    let dict = DictionarySpec::new(basis.dim(), opts.harmonics, opts.period);

    let cols = w.len();
    let n = dict.lifted_dim();
    let mut lifted = DMatrix::<f64>::zeros(n, cols);
    let mut last_latent = Vec::new();
    for j in 0..cols {
        let col: Vec<f64> = z_rows.iter().map(|r| r[j]).collect();
        let z = basis.project(&col);
        let psi = dict.lift(&z, (w.start + j) as f64);
        lifted.set_column(j, &nalgebra::DVector::from_vec(psi));
        if j + 1 == cols {
            last_latent = z;
        }
    }
    let psi_minus = lifted.columns(0, cols - 1).into_owned();
    let psi_plus = lifted.columns(1, cols - 1).into_owned();

    let mut warnings = Vec::new();
    if cols - 1 < n {
        warnings.push(format!("only {} snapshot pairs for a {n}-dimensional dictionary", cols - 1));
    }
    let raw = edmd_fit(&psi_minus, &psi_plus)?;
    let fit_residual = one_step_residual(&raw, &psi_minus, &psi_plus);
    let raw_eigs = linalg::eigenvalues(&raw)?;
    let p = basis.dim();
    let latent_block = raw.view((1, 1), (p, p)).into_owned();
    let latent_spectral_radius = linalg::spectral_radius(&latent_block)?;

    let proj = enforce_spectral_radius(&raw, opts.margin)?;
    if proj.radius_before >= 1.0 + 1e-6 {
        warnings.push(format!(
            "unconstrained operator has spectral radius {:.4}; rescaled via {:?}",
            proj.radius_before, proj.method
        ));
    }
    let eigs = linalg::eigenvalues(&proj.matrix)?;
    let operator = (0..n).map(|i| proj.matrix.row(i).iter().copied().collect()).collect();

    Ok(KoopmanModel {
        options: *opts,
        scaler,
        trend,
        basis,
        dict,
        operator,
        eigenvalues: to_pairs(&eigs),
        raw_eigenvalues: to_pairs(&raw_eigs),
        spectral_radius_pre: proj.radius_before,
        spectral_radius: proj.radius_after,
        latent_spectral_radius,
        projection: proj.method,
        eigenbasis_condition: proj.condition,
        fit_residual,
        train_start: w.start,
        train_end: w.end(),
        last_latent,
        warnings,
    })
}

/// Propagates `z_last` (observed at `t_start`) forward `horizon` steps and
/// returns the predicted latents for `t_start + 1 ..= t_start + horizon`.
pub fn rollout(
    model: &KoopmanModel,
    z_last: &[f64],
    t_start: usize,
    horizon: usize,
    mode: RolloutMode,
) -> Result<Vec<Vec<f64>>> {
    if horizon == 0 {
        return Err(Error::InvalidInput("rollout horizon must be at least 1".into()));
    }
    if z_last.len() != model.latent_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.latent_dim(),
            got: z_last.len(),
        });
    }
    let a = model.operator_matrix();
    let dict = &model.dict;
    let mut psi = nalgebra::DVector::from_vec(dict.lift(z_last, t_start as f64));
    let mut out = Vec::with_capacity(horizon);
    for k in 1..=horizon {
        if mode == RolloutMode::ReprojectTime && k > 1 {
            let z: Vec<f64> = dict.latent(psi.as_slice()).to_vec();
            psi = nalgebra::DVector::from_vec(dict.lift(&z, (t_start + k - 1) as f64));
        }
        psi = &a * psi;
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("rollout state became non-finite at step {k}")));
        }
        out.push(dict.latent(psi.as_slice()).to_vec());
    }
    Ok(out)
}

/// Maps latents back to parameters; `zs[k]` is taken to be at `first_timestep + k`.
pub fn reconstruct_weights(model: &KoopmanModel, zs: &[Vec<f64>], first_timestep: usize) -> Result<Vec<ParamVector>> {
    zs.iter()
        .enumerate()
        .map(|(k, z)| {
            if z.len() != model.latent_dim() {
                return Err(Error::DimensionMismatch {
                    expected: model.latent_dim(),
                    got: z.len(),
                });
            }
            Ok(model.decode(z, first_timestep + k))
        })
        .collect()
}

/// Rolls out from the end of the training window and reconstructs weights
/// for the next `horizon` timesteps.
pub fn predict_weights(model: &KoopmanModel, horizon: usize, mode: RolloutMode) -> Result<Vec<ParamVector>> {
    let zs = rollout(model, &model.last_latent, model.train_end, horizon, mode)?;
    reconstruct_weights(model, &zs, model.train_end + 1)
}
