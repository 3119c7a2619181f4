//! End-to-end stages: train, fit, rollout, couple and report, each usable in
//! memory or persisted to a run directory and reloaded by the next stage.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::coupling::{coupling_report, matrix_csv, CouplingReport};
use crate::datasets::{sample_timestep, stream_seed, DriftKind};
use crate::error::{Error, Result};
use crate::eval::{evaluate_weights, frozen_baseline, retrained_baseline, traces_csv, AccuracySeries, EvalMode};
use crate::io::{read_json, read_listed, write_file, write_json, FileEntry};
use crate::koopman::{fit_koopman, predict_weights, KoopmanModel, RolloutMode, Strategy};
use crate::linalg::ProjectionMethod;
use crate::model::ParamVector;
use crate::svg::heatmap;
use crate::trainer::{layer2_trend_fraction, run_sequence, TrainConfig, TrainerState, WeightTrajectory};

pub const TRAIN_JSON: &str = "train.json";
pub const KOOPMAN_JSON: &str = "koopman.json";
pub const ROLLOUT_JSON: &str = "rollout.json";
pub const COUPLING_JSON: &str = "coupling.json";
pub const REPORT_JSON: &str = "report.json";

/// Warm-start training over the training window, plus the optional cold-moment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutput {
    pub names: Vec<String>,
    pub trajectory: WeightTrajectory,
    pub final_state: TrainerState,
    pub cold_epochs: Option<Vec<usize>>,
}

impl TrainOutput {
    pub fn cold_mean_epochs(&self) -> Option<f64> {
        self.cold_epochs
            .as_ref()
            .map(|e| e.iter().sum::<usize>() as f64 / e.len().max(1) as f64)
    }
}

pub fn train(cfg: &RunConfig) -> Result<TrainOutput> {
    let net = cfg.net();
    let warm = run_sequence(&cfg.spec, &net, &cfg.train, cfg.train_end, cfg.seed)?;
    let cold_epochs = if cfg.cold_ablation {
        let tcfg = TrainConfig {
            carry_moments: false,
            ..cfg.train
        };
        Some(run_sequence(&cfg.spec, &net, &tcfg, cfg.train_end, cfg.seed)?.trajectory.epochs)
    } else {
        None
    };
    Ok(TrainOutput {
        names: net.param_names(),
        trajectory: warm.trajectory,
        final_state: warm.final_state,
        cold_epochs,
    })
}

/// Fits the Koopman model; warns on stderr when plain Fourier is used on a
/// non-periodic stream.
pub fn fit(cfg: &RunConfig, train: &TrainOutput) -> Result<KoopmanModel> {
    let model = fit_koopman(&train.trajectory, &cfg.koopman_options())?;
    if model.options.strategy == Strategy::Fourier && !cfg.kind().is_periodic() {
        eprintln!(
            "warning: fourier strategy on non-periodic dataset {}: pre-enforcement spectral radius {:.4} (latent block {:.4}); detrend_fourier is recommended",
            cfg.kind(),
            model.spectral_radius_pre,
            model.latent_spectral_radius
        );
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutOutput {
    pub predicted: Vec<ParamVector>,
    pub koopman_auto: AccuracySeries,
    pub frozen: AccuracySeries,
    pub retrained: AccuracySeries,
    /// Labeled retraining trajectory over the held-out window.
    pub retrained_trajectory: WeightTrajectory,
}

pub fn rollout(cfg: &RunConfig, train: &TrainOutput, model: &KoopmanModel) -> Result<RolloutOutput> {
    let net = cfg.net();
    let horizon = cfg.horizon();
    let first = cfg.train_end;
    let predicted = predict_weights(model, horizon, cfg.rollout_mode)?;
    let koopman_auto = evaluate_weights(&cfg.spec, &net, EvalMode::KoopmanAuto, &predicted, first, cfg.test_size, cfg.seed)?;
    let last = train.trajectory.columns.last().ok_or_else(|| Error::InvalidInput("empty trajectory".into()))?;
    let frozen = evaluate_weights(
        &cfg.spec,
        &net,
        EvalMode::Frozen,
        &frozen_baseline(last, horizon),
        first,
        cfg.test_size,
        cfg.seed,
    )?;
    let run = retrained_baseline(&cfg.spec, &net, &cfg.train, train.final_state.clone(), first..first + horizon, cfg.seed)?;
    let retrained = evaluate_weights(
        &cfg.spec,
        &net,
        EvalMode::Retrained,
        &run.trajectory.columns,
        first,
        cfg.test_size,
        cfg.seed,
    )?;
    Ok(RolloutOutput {
        predicted,
        koopman_auto,
        frozen,
        retrained,
        retrained_trajectory: run.trajectory,
    })
}

pub fn coupling_refusal(kind: DriftKind) -> Error {
    Error::Unsupported(format!(
        "coupling is not computed for dataset {kind}: its training window is non-periodic (expanding geometry), \
         which invalidates the stationarity the estimators assume; pass --force to compute it anyway"
    ))
}

/// Coupling diagnostics; refused on the non-periodic stream unless forced.
pub fn couple(cfg: &RunConfig, train: &TrainOutput) -> Result<CouplingReport> {
    if !cfg.kind().is_periodic() && !cfg.force {
        return Err(coupling_refusal(cfg.kind()));
    }
    coupling_report(&train.trajectory, &cfg.net(), &train.names, cfg.te_bins)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    /// Warm training window plus the labeled retraining steps.
    pub timesteps: (usize, usize),
    pub mean_train_acc: f64,
    pub min_train_acc: f64,
    pub mean_epochs_warm: f64,
    pub mean_epochs_cold: Option<f64>,
    pub epoch_ratio_cold_warm: Option<f64>,
    pub layer2_trend_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KoopmanSummary {
    pub strategy: Strategy,
    pub rollout_mode: RolloutMode,
    pub harmonics: usize,
    pub pca_components: usize,
    pub explained_ratio: f64,
    pub lifted_dim: usize,
    pub spectral_radius_pre: f64,
    pub spectral_radius_post: f64,
    pub latent_spectral_radius: f64,
    pub projection: ProjectionMethod,
    pub fit_residual: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CouplingSummary {
    Reported {
        dcor_mean_offdiag: f64,
        dcor_frac_above_half: f64,
        te_ratio_l1_l2: Option<f64>,
        te_bins: usize,
        window: (usize, usize),
    },
    NotReported {
        reason: String,
    },
}

impl CouplingSummary {
    pub fn from_result(r: &Result<CouplingReport>) -> Self {
        match r {
            Ok(c) => CouplingSummary::Reported {
                dcor_mean_offdiag: c.dcor_mean_offdiag,
                dcor_frac_above_half: c.dcor_frac_above_half,
                te_ratio_l1_l2: c.te_ratio_l1_l2,
                te_bins: c.te_bins,
                window: c.window,
            },
            Err(e) => CouplingSummary::NotReported { reason: e.to_string() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: DriftKind,
    pub description: String,
    pub seed: u64,
    pub config_hash: String,
    pub n_params: usize,
    pub training: TrainingSummary,
    pub koopman: KoopmanSummary,
    pub koopman_auto: AccuracySeries,
    pub frozen: AccuracySeries,
    pub retrained: AccuracySeries,
    /// Retrained mean minus Koopman autonomous mean.
    pub gap_to_retrained: f64,
    pub coupling: CouplingSummary,
}

pub fn build_report(
    cfg: &RunConfig,
    train: &TrainOutput,
    model: &KoopmanModel,
    roll: &RolloutOutput,
    coupling: CouplingSummary,
) -> Result<RunReport> {
    let mut full = train.trajectory.clone();
    full.append(roll.retrained_trajectory.clone())?;
    let warm = train.trajectory.mean_epochs();
    let cold = train.cold_mean_epochs();
    Ok(RunReport {
        dataset: cfg.kind(),
        description: cfg.kind().description().to_string(),
        seed: cfg.seed,
        config_hash: cfg.hashes().report,
        n_params: cfg.net().n_params(),
        training: TrainingSummary {
            timesteps: (full.start, full.end()),
            mean_train_acc: full.mean_accuracy(),
            min_train_acc: full.min_accuracy(),
            mean_epochs_warm: warm,
            mean_epochs_cold: cold,
            epoch_ratio_cold_warm: cold.map(|c| c / warm),
            layer2_trend_fraction: layer2_trend_fraction(&full, &cfg.net()),
        },
        koopman: KoopmanSummary {
            strategy: model.options.strategy,
            rollout_mode: cfg.rollout_mode,
            harmonics: model.options.harmonics,
            pca_components: model.basis.dim(),
            explained_ratio: model.basis.explained_ratio(),
            lifted_dim: model.dict.lifted_dim(),
            spectral_radius_pre: model.spectral_radius_pre,
            spectral_radius_post: model.spectral_radius,
            latent_spectral_radius: model.latent_spectral_radius,
            projection: model.projection,
            fit_residual: model.fit_residual,
            warnings: model.warnings.clone(),
        },
        koopman_auto: roll.koopman_auto.clone(),
        frozen: roll.frozen.clone(),
        retrained: roll.retrained.clone(),
        gap_to_retrained: roll.retrained.mean - roll.koopman_auto.mean,
        coupling,
    })
}

pub const TABLE_HEADER: &str = "dataset,strategy,p,rho_pre,rho_post,auto_mean,auto_min,auto_below_90,frozen_mean,frozen_below_90,retrained_mean,dcor_mean,dcor_frac_above_half,te_ratio_l1_l2,epochs_warm,epochs_cold";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "NA".into())
}

impl RunReport {
    /// One Table-1-style row; unreported fields are `NA`.
    pub fn table_row(&self) -> String {
        let (dm, df, te) = match &self.coupling {
            CouplingSummary::Reported {
                dcor_mean_offdiag,
                dcor_frac_above_half,
                te_ratio_l1_l2,
                ..
            } => (Some(*dcor_mean_offdiag), Some(*dcor_frac_above_half), *te_ratio_l1_l2),
            CouplingSummary::NotReported { .. } => (None, None, None),
        };
        format!(
            "{},{},{},{:.4},{:.4},{:.4},{:.4},{},{:.4},{},{:.4},{},{},{},{:.1},{}",
            self.dataset,
            self.koopman.strategy,
            self.koopman.pca_components,
            self.koopman.spectral_radius_pre,
            self.koopman.spectral_radius_post,
            self.koopman_auto.mean,
            self.koopman_auto.min,
            self.koopman_auto.steps_below_90,
            self.frozen.mean,
            self.frozen.steps_below_90,
            self.retrained.mean,
            opt(dm),
            opt(df),
            opt(te),
            self.training.mean_epochs_warm,
            self.training.mean_epochs_cold.map(|c| format!("{c:.1}")).unwrap_or_else(|| "NA".into()),
        )
    }

    pub fn table_csv(&self) -> String {
        format!("{TABLE_HEADER}\n{}\n", self.table_row())
    }
}

/// Runs every stage in memory.
pub fn run_all(cfg: &RunConfig) -> Result<RunReport> {
    let t = train(cfg)?;
    let m = fit(cfg, &t)?;
    let r = rollout(cfg, &t, &m)?;
    let c = CouplingSummary::from_result(&couple(cfg, &t));
    build_report(cfg, &t, &m, &r, c)
}

// Persistence. Each stage writes its files plus a JSON manifest carrying the
// stage hash and a digest of every file, and verifies both when reloading.

#[derive(Debug, Serialize, Deserialize)]
struct TrainManifest {
    files: Vec<FileEntry>,
    names: Vec<String>,
    start: usize,
    epochs: Vec<usize>,
    accuracies: Vec<f64>,
    final_state: TrainerState,
    cold_epochs: Option<Vec<usize>>,
}

pub fn save_train(dir: &Path, cfg: &RunConfig, t: &TrainOutput) -> Result<()> {
    let csv = write_file(dir, "trajectory.csv", &t.trajectory.to_csv(&t.names))?;
    let manifest = TrainManifest {
        files: vec![csv],
        names: t.names.clone(),
        start: t.trajectory.start,
        epochs: t.trajectory.epochs.clone(),
        accuracies: t.trajectory.accuracies.clone(),
        final_state: t.final_state.clone(),
        cold_epochs: t.cold_epochs.clone(),
    };
    write_json(&dir.join(TRAIN_JSON), "train", &cfg.hashes().train, &manifest)
}

pub fn load_train(dir: &Path, cfg: &RunConfig) -> Result<TrainOutput> {
    let m: TrainManifest = read_json(&dir.join(TRAIN_JSON), "train", &cfg.hashes().train)?;
    let entry = m
        .files
        .first()
        .ok_or_else(|| Error::MissingArtifact(dir.join("trajectory.csv")))?;
    let (names, mut trajectory) = WeightTrajectory::from_csv(&read_listed(dir, entry)?)?;
    if names != m.names || trajectory.start != m.start || trajectory.len() != m.epochs.len() {
        return Err(Error::InvalidInput("trajectory CSV disagrees with its manifest".into()));
    }
    trajectory.epochs = m.epochs;
    trajectory.accuracies = m.accuracies;
    Ok(TrainOutput {
        names,
        trajectory,
        final_state: m.final_state,
        cold_epochs: m.cold_epochs,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct FitManifest {
    files: Vec<FileEntry>,
    model: KoopmanModel,
}

pub fn save_fit(dir: &Path, cfg: &RunConfig, model: &KoopmanModel) -> Result<()> {
    let eig = write_file(dir, "eigenvalues.csv", &model.eigenvalue_csv())?;
    let manifest = FitManifest {
        files: vec![eig],
        model: model.clone(),
    };
    write_json(&dir.join(KOOPMAN_JSON), "koopman", &cfg.hashes().fit, &manifest)
}

pub fn load_fit(dir: &Path, cfg: &RunConfig) -> Result<KoopmanModel> {
    let m: FitManifest = read_json(&dir.join(KOOPMAN_JSON), "koopman", &cfg.hashes().fit)?;
    Ok(m.model)
}

#[derive(Debug, Serialize, Deserialize)]
struct RolloutManifest {
    files: Vec<FileEntry>,
    rollout: RolloutOutput,
}

pub fn save_rollout(dir: &Path, cfg: &RunConfig, names: &[String], r: &RolloutOutput) -> Result<()> {
    let pred = WeightTrajectory {
        start: cfg.train_end,
        columns: r.predicted.clone(),
        epochs: Vec::new(),
        accuracies: Vec::new(),
    };
    let files = vec![
        write_file(dir, "predicted_weights.csv", &pred.to_csv(names))?,
        write_file(dir, "traces.csv", &traces_csv(&r.koopman_auto, &r.frozen, &r.retrained)?)?,
    ];
    let manifest = RolloutManifest { files, rollout: r.clone() };
    write_json(&dir.join(ROLLOUT_JSON), "rollout", &cfg.hashes().rollout, &manifest)
}

pub fn load_rollout(dir: &Path, cfg: &RunConfig) -> Result<RolloutOutput> {
    let m: RolloutManifest = read_json(&dir.join(ROLLOUT_JSON), "rollout", &cfg.hashes().rollout)?;
    Ok(m.rollout)
}

#[derive(Debug, Serialize, Deserialize)]
struct CouplingManifest {
    files: Vec<FileEntry>,
    summary: CouplingSummary,
}

pub fn save_coupling(dir: &Path, cfg: &RunConfig, c: &CouplingReport) -> Result<()> {
    let hash = cfg.hashes().couple;
    let mut files = Vec::new();
    {
        let note = format!("config_hash={hash}");
        let te_max = c.te_matrix.iter().flatten().copied().fold(0.0, f64::max);
        files.push(write_file(dir, "dcor.csv", &matrix_csv(&c.names, &c.dcor_matrix))?);
        files.push(write_file(dir, "te.csv", &matrix_csv(&c.names, &c.te_matrix))?);
        files.push(write_file(dir, "te_raw.csv", &matrix_csv(&c.names, &c.te_raw))?);
        files.push(write_file(
            dir,
            "dcor.svg",
            &heatmap(
                &format!("Distance correlation, dataset {}, t={}..{}", cfg.kind(), c.window.0, c.window.1),
                &c.names,
                &c.dcor_matrix,
                c.layer1_len,
                1.0,
                &note,
            ),
        )?);
        files.push(write_file(
            dir,
            "te.svg",
            &heatmap(
                &format!("Normalized transfer entropy (row -> column), dataset {}", cfg.kind()),
                &c.names,
                &c.te_matrix,
                c.layer1_len,
                te_max,
                &note,
            ),
        )?);
    }
    let manifest = CouplingManifest {
        files,
        summary: CouplingSummary::from_result(&Ok(c.clone())),
    };
    write_json(&dir.join(COUPLING_JSON), "coupling", &hash, &manifest)
}

/// Loads the coupling summary; on a non-periodic stream that was never
/// forced, a missing file means the stage was skipped, not lost.
pub fn load_coupling(dir: &Path, cfg: &RunConfig) -> Result<CouplingSummary> {
    let path = dir.join(COUPLING_JSON);
    if !path.exists() && !cfg.kind().is_periodic() && !cfg.force {
        return Ok(CouplingSummary::from_result(&Err(coupling_refusal(cfg.kind()))));
    }
    let m: CouplingManifest = read_json(&path, "coupling", &cfg.hashes().couple)?;
    Ok(m.summary)
}

pub fn save_report(dir: &Path, cfg: &RunConfig, r: &RunReport) -> Result<()> {
    write_file(dir, "table1.csv", &r.table_csv())?;
    write_json(&dir.join(REPORT_JSON), "report", &cfg.hashes().report, r)
}

/// Packed dataset CSV (`x1,x2,label,t`) over every timestep of the stream.
pub fn dataset_csv(cfg: &RunConfig) -> Result<String> {
    let mut out = Vec::new();
    let namespace = format!("train/{}", cfg.kind().letter());
    let seed = stream_seed(cfg.seed, &namespace, 0);
    for t in 0..cfg.spec.total_steps {
        let batch = sample_timestep(&cfg.spec, t, cfg.train.batch_size, seed)?;
        batch.write_csv(&mut out, t == 0)?;
    }
    String::from_utf8(out).map_err(|e| Error::InvalidInput(e.to_string()))
}

#[derive(Debug, Serialize, Deserialize)]
struct DataManifest {
    files: Vec<FileEntry>,
    dataset: DriftKind,
    seed: u64,
    stream: String,
    rows: usize,
    samples_per_step: usize,
    timesteps: usize,
}

pub fn save_dataset(dir: &Path, cfg: &RunConfig) -> Result<()> {
    let csv = dataset_csv(cfg)?;
    let rows = csv.lines().count() - 1;
    let entry = write_file(dir, "dataset.csv", &csv)?;
    let manifest = DataManifest {
        files: vec![entry],
        dataset: cfg.kind(),
        seed: cfg.seed,
        stream: format!("train/{}", cfg.kind().letter()),
        rows,
        samples_per_step: cfg.train.batch_size,
        timesteps: cfg.spec.total_steps,
    };
    write_json(&dir.join("dataset.json"), "dataset", &cfg.hashes().data, &manifest)
}
