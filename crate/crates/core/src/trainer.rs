//! Sequential warm-start training across timesteps.
//!
//! Each timestep starts from the previous converged parameters. When
//! `carry_moments` is set the Adam first/second moments and the
//! bias-correction counter are carried too; otherwise they are reset, which
//! is the cold-moment ablation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::{sample_timestep, stream_seed, DriftSpec, LabeledBatch};
use crate::error::{ensure_finite, Error, Result};
use crate::model::{accuracy, loss_and_grad, Head, NetConfig, ParamVector};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Slope magnitude (units per step) above which a parameter counts as trending.
pub const TREND_SLOPE_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub theta: ParamVector,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
    pub timestep: usize,
}

impl TrainerState {
    pub fn new(theta: ParamVector) -> Self {
        let n = theta.len();
        TrainerState {
            theta,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step_count: 0,
            timestep: 0,
        }
    }

    /// Parameters uniform in [-0.5, 0.5] drawn from the run seed.
    pub fn initial(cfg: &NetConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "init", 0));
        let theta = (0..cfg.n_params()).map(|_| rng.random_range(-0.5..=0.5)).collect();
        TrainerState::new(ParamVector::new(theta))
    }

    pub fn reset_moments(&mut self) {
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
        self.step_count = 0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub lambda_s: f64,
    pub lambda_wd: f64,
    pub patience: usize,
    pub tolerance: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub carry_moments: bool,
}

impl TrainConfig {
    /// Defaults for the given head: weight decay only for softmax.
    pub fn for_head(head: Head) -> Self {
        TrainConfig {
            learning_rate: 0.1,
            lambda_s: 1e-4,
            lambda_wd: match head {
                Head::SigmoidBce => 0.0,
                Head::SoftmaxCe => 1e-3,
            },
            patience: 50,
            tolerance: 1e-6,
            max_epochs: 2000,
            batch_size: 1600,
            carry_moments: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patience < 1 {
            return Err(Error::InvalidInput("patience must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidInput("tolerance must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidInput("learning rate must be positive".into()));
        }
        if self.lambda_s < 0.0 || self.lambda_wd < 0.0 {
            return Err(Error::InvalidInput("regularisation weights must be non-negative".into()));
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidInput("max_epochs and batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// One Adam update with bias correction.
pub fn adam_step(state: &mut TrainerState, grad: &[f64], lr: f64) -> Result<()> {
    if grad.len() != state.theta.len() {
        return Err(Error::DimensionMismatch {
            expected: state.theta.len(),
            got: grad.len(),
        });
    }
    ensure_finite(grad, "gradient")?;
    state.step_count += 1;
    let t = state.step_count as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let theta = state.theta.as_mut_slice();
    for i in 0..grad.len() {
        let g = grad[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimestepOutcome {
    pub epochs: usize,
    pub train_acc: f64,
    pub final_task_loss: f64,
}

/// Full-batch Adam on one timestep's data until the task loss stalls.
///
/// The best task loss must improve by more than `tolerance` within
/// `patience` epochs or training stops. Regularisers never enter the
/// stopping signal.
pub fn train_timestep(
    state: &mut TrainerState,
    cfg: &NetConfig,
    tcfg: &TrainConfig,
    batch: &LabeledBatch,
    anchor: Option<&ParamVector>,
) -> Result<TimestepOutcome> {
    if state.timestep != batch.timestep {
        return Err(Error::InvalidInput(format!(
            "state is at timestep {} but batch is from {}",
            state.timestep, batch.timestep
        )));
    }
    if !tcfg.carry_moments {
        state.reset_moments();
    }
    let mut best = f64::INFINITY;
    let mut stale = 0usize;
    let mut epochs = 0usize;
    let mut last_task = f64::NAN;
    while epochs < tcfg.max_epochs {
        let lg = loss_and_grad(cfg, &state.theta, batch, anchor, tcfg.lambda_s, tcfg.lambda_wd)?;
        last_task = lg.task;
        if lg.task < best - tcfg.tolerance {
            best = lg.task;
            stale = 0;
        } else {
            stale += 1;
            if stale >= tcfg.patience {
                break;
            }
        }
        adam_step(state, &lg.grad, tcfg.learning_rate)?;
        epochs += 1;
    }
    ensure_finite(state.theta.as_slice(), "parameters")?;
    let train_acc = accuracy(cfg, &state.theta, batch)?;
    Ok(TimestepOutcome {
        epochs,
        train_acc,
        final_task_loss: last_task,
    })
}

/// Converged parameters per timestep, plus per-step epochs and train accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTrajectory {
    /// First recorded timestep (column 0).
    pub start: usize,
    pub columns: Vec<ParamVector>,
    pub epochs: Vec<usize>,
    pub accuracies: Vec<f64>,
}

impl WeightTrajectory {
    pub fn n_params(&self) -> usize {
        self.columns.first().map_or(0, ParamVector::len)
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Timestep of the last recorded column.
    pub fn end(&self) -> usize {
        self.start + self.columns.len() - 1
    }

    /// Row `i` (one parameter over time).
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c.as_slice()[i]).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_params()).map(|i| self.row(i)).collect()
    }

    /// Columns for timesteps `from..=to`.
    pub fn window(&self, from: usize, to: usize) -> Result<WeightTrajectory> {
        if from < self.start || to > self.end() || from > to {
            return Err(Error::InvalidInput(format!(
                "window {from}..={to} outside trajectory {}..={}",
                self.start,
                self.end()
            )));
        }
        let a = from - self.start;
        let b = to - self.start + 1;
        Ok(WeightTrajectory {
            start: from,
            columns: self.columns[a..b].to_vec(),
            epochs: self.epochs[a..b].to_vec(),
            accuracies: self.accuracies[a..b].to_vec(),
        })
    }

    pub fn append(&mut self, other: WeightTrajectory) -> Result<()> {
        if !self.is_empty() && other.start != self.end() + 1 {
            return Err(Error::InvalidInput("trajectories are not contiguous".into()));
        }
        if self.is_empty() {
            self.start = other.start;
        }
        self.columns.extend(other.columns);
        self.epochs.extend(other.epochs);
        self.accuracies.extend(other.accuracies);
        Ok(())
    }

    pub fn mean_epochs(&self) -> f64 {
        self.epochs.iter().sum::<usize>() as f64 / self.epochs.len().max(1) as f64
    }

    pub fn mean_accuracy(&self) -> f64 {
        self.accuracies.iter().sum::<f64>() / self.accuracies.len().max(1) as f64
    }

    pub fn min_accuracy(&self) -> f64 {
        self.accuracies.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// CSV with one row per parameter (`param,t0,t1,...`).
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = String::from("param");
        for t in self.start..=self.end() {
            out.push_str(&format!(",t{t}"));
        }
        out.push('\n');
        for (i, name) in names.iter().enumerate() {
            out.push_str(name);
            for c in &self.columns {
                out.push(',');
                out.push_str(&c.as_slice()[i].to_string());
            }
            out.push('\n');
        }
        out
    }

    /// Parses the CSV written by [`WeightTrajectory::to_csv`]; epochs and
    /// accuracies are left empty for the caller to restore from the sidecar.
    pub fn from_csv(text: &str) -> Result<(Vec<String>, WeightTrajectory)> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::InvalidInput("empty trajectory CSV".into()))?;
        let cols: Vec<&str> = header.split(',').skip(1).collect();
        let start = cols
            .first()
            .and_then(|c| c.strip_prefix('t'))
            .and_then(|c| c.parse::<usize>().ok())
            .ok_or_else(|| Error::InvalidInput("bad trajectory header".into()))?;
        let mut names = Vec::new();
        let mut rows = Vec::new();
        for line in lines {
            let mut fields = line.split(',');
            names.push(fields.next().unwrap_or_default().to_string());
            let row = fields
                .map(|f| f.parse::<f64>().map_err(|e| Error::InvalidInput(format!("bad value {f:?}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != cols.len() {
                return Err(Error::InvalidInput("ragged trajectory CSV".into()));
            }
            rows.push(row);
        }
        let columns = (0..cols.len())
            .map(|j| ParamVector::new(rows.iter().map(|r| r[j]).collect()))
            .collect();
        Ok((
            names,
            WeightTrajectory {
                start,
                columns,
                epochs: Vec::new(),
                accuracies: Vec::new(),
            },
        ))
    }
}

/// Result of a sequential run: the trajectory and the state after its last step.
#[derive(Debug, Clone)]
pub struct SequenceRun {
    pub trajectory: WeightTrajectory,
    pub final_state: TrainerState,
}

/// Training batch for timestep `t` of a run.
pub fn training_batch(spec: &DriftSpec, tcfg: &TrainConfig, t: usize, seed: u64) -> Result<LabeledBatch> {
    let namespace = format!("train/{}", spec.kind.letter());
    sample_timestep(spec, t, tcfg.batch_size, stream_seed(seed, &namespace, 0))
}

/// Continues warm-start training from `state` over `timesteps`.
pub fn continue_sequence(
    spec: &DriftSpec,
    cfg: &NetConfig,
    tcfg: &TrainConfig,
    mut state: TrainerState,
    anchor: Option<ParamVector>,
    timesteps: std::ops::Range<usize>,
    seed: u64,
) -> Result<SequenceRun> {
    tcfg.validate()?;
    let mut trajectory = WeightTrajectory {
        start: timesteps.start,
        columns: Vec::with_capacity(timesteps.len()),
        epochs: Vec::with_capacity(timesteps.len()),
        accuracies: Vec::with_capacity(timesteps.len()),
    };
    let mut anchor = anchor;
    for t in timesteps {
        state.timestep = t;
        let batch = training_batch(spec, tcfg, t, seed).map_err(|e| e.at_timestep(t))?;
        let outcome =
            train_timestep(&mut state, cfg, tcfg, &batch, anchor.as_ref()).map_err(|e| e.at_timestep(t))?;
        trajectory.columns.push(state.theta.clone());
        trajectory.epochs.push(outcome.epochs);
        trajectory.accuracies.push(outcome.train_acc);
        anchor = Some(state.theta.clone());
    }
    Ok(SequenceRun {
        trajectory,
        final_state: state,
    })
}

/// Trains timesteps `0..end` from a fresh initialisation.
pub fn run_sequence(
    spec: &DriftSpec,
    cfg: &NetConfig,
    tcfg: &TrainConfig,
    end: usize,
    seed: u64,
) -> Result<SequenceRun> {
    spec.validate()?;
    if end == 0 || end > spec.total_steps {
        return Err(Error::InvalidInput(format!(
            "training range 0..{end} must be non-empty and within {} steps",
            spec.total_steps
        )));
    }
    let state = TrainerState::initial(cfg, seed);
    continue_sequence(spec, cfg, tcfg, state, None, 0..end, seed)
}

/// Ordinary least-squares intercept and slope of `y` against `0..n`.
pub fn ols_line(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let y_mean = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, &v) in y.iter().enumerate() {
        let dt = i as f64 - t_mean;
        sxy += dt * (v - y_mean);
        sxx += dt * dt;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (y_mean - slope * t_mean, slope)
}

/// Fraction of layer-2 parameters whose OLS slope over the trajectory is at
/// least [`TREND_SLOPE_THRESHOLD`] in magnitude.
pub fn layer2_trend_fraction(w: &WeightTrajectory, cfg: &NetConfig) -> f64 {
    let l1 = cfg.layer1_len();
    let n = w.n_params();
    if n <= l1 {
        return 0.0;
    }
    let trending = (l1..n)
        .filter(|&i| ols_line(&w.row(i)).1.abs() >= TREND_SLOPE_THRESHOLD)
        .count();
    trending as f64 / (n - l1) as f64
}
