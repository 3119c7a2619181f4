//! Held-out evaluation against the frozen and retrained baselines.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{sample_timestep, stream_seed, DriftSpec, LabeledBatch};
use crate::error::{Error, Result};
use crate::model::{accuracy, NetConfig, ParamVector};
use crate::trainer::{continue_sequence, SequenceRun, TrainConfig, TrainerState};

/// Samples drawn per held-out timestep.
pub const DEFAULT_TEST_SIZE: usize = 400;
pub const ACCURACY_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    KoopmanAuto,
    Frozen,
    Retrained,
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::KoopmanAuto => "koopman_auto",
            EvalMode::Frozen => "frozen",
            EvalMode::Retrained => "retrained",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySeries {
    pub mode: EvalMode,
    pub first_timestep: usize,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    /// Steps with accuracy strictly below 0.9.
    pub steps_below_90: usize,
}

impl AccuracySeries {
    pub fn from_accuracies(mode: EvalMode, first_timestep: usize, accuracies: Vec<f64>) -> Result<Self> {
        if accuracies.is_empty() {
            return Err(Error::InvalidInput("accuracy series is empty".into()));
        }
        if let Some(a) = accuracies.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::InvalidInput(format!("accuracy {a} outside [0, 1]")));
        }
        let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
        let min = accuracies.iter().copied().fold(f64::INFINITY, f64::min);
        let steps_below_90 = accuracies.iter().filter(|&&a| a < ACCURACY_THRESHOLD).count();
        Ok(AccuracySeries {
            mode,
            first_timestep,
            accuracies,
            mean,
            min,
            steps_below_90,
        })
    }

    pub fn len(&self) -> usize {
        self.accuracies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accuracies.is_empty()
    }

    /// True when the stored summaries match the raw series exactly.
    pub fn is_consistent(&self) -> bool {
        match AccuracySeries::from_accuracies(self.mode, self.first_timestep, self.accuracies.clone()) {
            Ok(s) => s == *self,
            Err(_) => false,
        }
    }
}

/// Held-out batch for timestep `t`; the stream is disjoint from training data.
pub fn test_batch(spec: &DriftSpec, t: usize, n: usize, seed: u64) -> Result<LabeledBatch> {
    let namespace = format!("test/{}", spec.kind.letter());
    sample_timestep(spec, t, n, stream_seed(seed, &namespace, 0))
}

/// Accuracy of `thetas[k]` on a fresh test batch at `first_timestep + k`.
pub fn evaluate_weights(
    spec: &DriftSpec,
    cfg: &NetConfig,
    mode: EvalMode,
    thetas: &[ParamVector],
    first_timestep: usize,
    test_size: usize,
    seed: u64,
) -> Result<AccuracySeries> {
    if test_size == 0 {
        return Err(Error::InvalidInput("test size must be positive".into()));
    }
    let accs = thetas
        .par_iter()
        .enumerate()
        .map(|(k, theta)| {
            let batch = test_batch(spec, first_timestep + k, test_size, seed)?;
            accuracy(cfg, theta, &batch)
        })
        .collect::<Result<Vec<f64>>>()?;
    AccuracySeries::from_accuracies(mode, first_timestep, accs)
}

/// The last trained column repeated over the horizon.
pub fn frozen_baseline(last: &ParamVector, horizon: usize) -> Vec<ParamVector> {
    vec![last.clone(); horizon]
}

/// Keeps training with labels through `timesteps`, starting from the warm state.
pub fn retrained_baseline(
    spec: &DriftSpec,
    cfg: &NetConfig,
    tcfg: &TrainConfig,
    state: TrainerState,
    timesteps: std::ops::Range<usize>,
    seed: u64,
) -> Result<SequenceRun> {
    if timesteps.end > spec.total_steps {
        return Err(Error::InvalidInput(format!(
            "retraining range ends at {} beyond the {}-step stream",
            timesteps.end, spec.total_steps
        )));
    }
    let anchor = Some(state.theta.clone());
    continue_sequence(spec, cfg, tcfg, state, anchor, timesteps, seed)
}

/// `t,koopman,frozen,retrained` table over the held-out window.
pub fn traces_csv(auto: &AccuracySeries, frozen: &AccuracySeries, retrained: &AccuracySeries) -> Result<String> {
    if auto.len() != frozen.len() || auto.len() != retrained.len() {
        return Err(Error::DimensionMismatch {
            expected: auto.len(),
            got: frozen.len().min(retrained.len()),
        });
    }
    let mut out = String::from("t,koopman,frozen,retrained\n");
    for k in 0..auto.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            auto.first_timestep + k,
            auto.accuracies[k],
            frozen.accuracies[k],
            retrained.accuracies[k]
        ));
    }
    Ok(out)
}
