//! Two-layer sigmoid network with either a sigmoid (binary cross-entropy)
//! or a linear-softmax (cross-entropy) head, plus the analytic gradient of
//! the regularised per-timestep objective.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::datasets::LabeledBatch;
use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    SigmoidBce,
    SoftmaxCe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub n_classes: usize,
    pub head: Head,
}

impl NetConfig {
    /// The 2-4-1 sigmoid network for two classes, or 2-4-3 softmax for three.
    pub fn for_classes(n_classes: usize) -> Self {
        NetConfig {
            input_dim: 2,
            hidden: 4,
            n_classes,
            head: if n_classes == 2 { Head::SigmoidBce } else { Head::SoftmaxCe },
        }
    }

    /// Number of output units: one logit for the sigmoid head, one per class otherwise.
    pub fn outputs(&self) -> usize {
        match self.head {
            Head::SigmoidBce => 1,
            Head::SoftmaxCe => self.n_classes,
        }
    }

    pub fn n_params(&self) -> usize {
        let (d, h, c) = (self.input_dim, self.hidden, self.outputs());
        h * d + h + c * h + c
    }

    fn offsets(&self) -> Offsets {
        let (d, h, c) = (self.input_dim, self.hidden, self.outputs());
        let b1 = h * d;
        let w2 = b1 + h;
        let b2 = w2 + c * h;
        Offsets { b1, w2, b2 }
    }

    /// Canonical parameter names in flattening order (`l1w0`, ..., `l2b0`, ...).
    pub fn param_names(&self) -> Vec<String> {
        let (d, h, c) = (self.input_dim, self.hidden, self.outputs());
        let mut names = Vec::with_capacity(self.n_params());
        names.extend((0..h * d).map(|i| format!("l1w{i}")));
        names.extend((0..h).map(|i| format!("l1b{i}")));
        names.extend((0..c * h).map(|i| format!("l2w{i}")));
        names.extend((0..c).map(|i| format!("l2b{i}")));
        names
    }

    /// Number of leading parameters that belong to the first layer.
    pub fn layer1_len(&self) -> usize {
        self.hidden * self.input_dim + self.hidden
    }

    fn check(&self, theta: &ParamVector) -> Result<()> {
        if self.input_dim != 2 {
            return Err(Error::Unsupported("only two-dimensional inputs are supported".into()));
        }
        if theta.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.n_params(),
                got: theta.len(),
            });
        }
        Ok(())
    }
}

struct Offsets {
    b1: usize,
    w2: usize,
    b2: usize,
}

/// Flattened parameters: rows of W1, then b1, then rows of W2, then b2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn zeros(n: usize) -> Self {
        ParamVector(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn distance(&self, other: &ParamVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Splits into (W1 rows, b1, W2 rows, b2).
    pub fn unflatten(&self, cfg: &NetConfig) -> Result<Layers> {
        cfg.check(self)?;
        let o = cfg.offsets();
        let d = cfg.input_dim;
        let h = cfg.hidden;
        Ok(Layers {
            w1: self.0[..o.b1].chunks(d).map(<[f64]>::to_vec).collect(),
            b1: self.0[o.b1..o.w2].to_vec(),
            w2: self.0[o.w2..o.b2].chunks(h).map(<[f64]>::to_vec).collect(),
            b2: self.0[o.b2..].to_vec(),
        })
    }

    pub fn flatten(layers: &Layers) -> Self {
        let mut v: Vec<f64> = layers.w1.iter().flatten().copied().collect();
        v.extend_from_slice(&layers.b1);
        v.extend(layers.w2.iter().flatten().copied());
        v.extend_from_slice(&layers.b2);
        ParamVector(v)
    }

    /// One CSV row, comma-separated with shortest round-trip formatting.
    pub fn to_csv_row(&self) -> String {
        self.0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    }

    pub fn from_csv_row(row: &str) -> Result<Self> {
        row.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("bad parameter value {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(ParamVector)
    }
}

impl fmt::Display for ParamVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.to_csv_row())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layers {
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<Vec<f64>>,
    pub b2: Vec<f64>,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    for l in logits.iter_mut() {
        *l /= sum;
    }
}

/// Hidden activations and output logits for one input.
fn logits_into(cfg: &NetConfig, theta: &[f64], x: &[f64; 2], hidden: &mut [f64], out: &mut [f64]) {
    let o = cfg.offsets();
    let h = cfg.hidden;
    for j in 0..h {
        let w = &theta[j * 2..j * 2 + 2];
        hidden[j] = sigmoid(w[0] * x[0] + w[1] * x[1] + theta[o.b1 + j]);
    }
    for (k, slot) in out.iter_mut().enumerate() {
        let w = &theta[o.w2 + k * h..o.w2 + (k + 1) * h];
        *slot = theta[o.b2 + k] + w.iter().zip(hidden.iter()).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Class probabilities. The sigmoid head returns a single value P(class 1);
/// the softmax head returns a full probability vector.
pub fn forward(cfg: &NetConfig, theta: &ParamVector, x: [f64; 2]) -> Result<Vec<f64>> {
    cfg.check(theta)?;
    let mut hidden = vec![0.0; cfg.hidden];
    let mut out = vec![0.0; cfg.outputs()];
    logits_into(cfg, theta.as_slice(), &x, &mut hidden, &mut out);
    match cfg.head {
        Head::SigmoidBce => Ok(vec![sigmoid(out[0])]),
        Head::SoftmaxCe => {
            softmax_in_place(&mut out);
            Ok(out)
        }
    }
}

/// Predicted class with deterministic tie-breaking: the sigmoid head says
/// class 1 only when P > 0.5, and argmax ties go to the lowest index.
pub fn predict(cfg: &NetConfig, theta: &ParamVector, x: [f64; 2]) -> Result<usize> {
    let probs = forward(cfg, theta, x)?;
    Ok(decide(cfg.head, &probs))
}

fn decide(head: Head, probs: &[f64]) -> usize {
    match head {
        Head::SigmoidBce => usize::from(probs[0] > 0.5),
        Head::SoftmaxCe => {
            let mut best = 0;
            for (k, &p) in probs.iter().enumerate().skip(1) {
                if p > probs[best] {
                    best = k;
                }
            }
            best
        }
    }
}

/// Value and gradient of the per-timestep objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    /// Task loss plus both penalties.
    pub total: f64,
    /// Mean BCE or CE over the batch; the early-stopping signal.
    pub task: f64,
    pub grad: Vec<f64>,
}

/// Mean task loss + `lambda_s * |theta - anchor|^2 + lambda_wd / 2 * |theta|^2`.
///
/// `anchor` is the converged parameter vector of the previous timestep and
/// is a constant; pass `None` at the first timestep to drop the smoothness term.
pub fn loss_and_grad(
    cfg: &NetConfig,
    theta: &ParamVector,
    batch: &LabeledBatch,
    anchor: Option<&ParamVector>,
    lambda_s: f64,
    lambda_wd: f64,
) -> Result<LossGrad> {
    cfg.check(theta)?;
    if let Some(a) = anchor {
        cfg.check(a)?;
    }
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let th = theta.as_slice();
    let o = cfg.offsets();
    let h = cfg.hidden;
    let c = cfg.outputs();
    let inv_n = 1.0 / batch.len() as f64;

    let mut grad = vec![0.0; th.len()];
    let mut hidden = vec![0.0; h];
    let mut out = vec![0.0; c];
    let mut d_hidden = vec![0.0; h];
    let mut task = 0.0;

    for (x, &y) in batch.inputs.iter().zip(&batch.labels) {
        logits_into(cfg, th, x, &mut hidden, &mut out);
        // out becomes dL/dlogit (unscaled)
        match cfg.head {
            Head::SigmoidBce => {
                let a = out[0];
                let yf = if y == 1 { 1.0 } else { 0.0 };
                task += softplus(a) - yf * a;
                out[0] = sigmoid(a) - yf;
            }
            Head::SoftmaxCe => {
                let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + out.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
                task += lse - out[y];
                for (k, l) in out.iter_mut().enumerate() {
                    *l = (*l - lse).exp() - if k == y { 1.0 } else { 0.0 };
                }
            }
        }
        d_hidden.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..c {
            let dk = out[k];
            grad[o.b2 + k] += dk;
            let row = o.w2 + k * h;
            for j in 0..h {
                grad[row + j] += dk * hidden[j];
                d_hidden[j] += dk * th[row + j];
            }
        }
        for j in 0..h {
            let du = d_hidden[j] * hidden[j] * (1.0 - hidden[j]);
            grad[j * 2] += du * x[0];
            grad[j * 2 + 1] += du * x[1];
            grad[o.b1 + j] += du;
        }
    }

    task *= inv_n;
    grad.iter_mut().for_each(|g| *g *= inv_n);

    let mut total = task;
    if let Some(a) = anchor {
        for ((g, &t), &p) in grad.iter_mut().zip(th).zip(a.as_slice()) {
            let d = t - p;
            total += lambda_s * d * d;
            *g += 2.0 * lambda_s * d;
        }
    }
    if lambda_wd != 0.0 {
        for (g, &t) in grad.iter_mut().zip(th) {
            total += 0.5 * lambda_wd * t * t;
            *g += lambda_wd * t;
        }
    }

    if !total.is_finite() {
        return Err(Error::Numerical("loss is not finite".into()));
    }
    ensure_finite(&grad, "gradient")?;
    Ok(LossGrad { total, task, grad })
}

/// Fraction of rows classified correctly.
pub fn accuracy(cfg: &NetConfig, theta: &ParamVector, batch: &LabeledBatch) -> Result<f64> {
    cfg.check(theta)?;
    if batch.is_empty() {
        return Err(Error::InvalidInput("accuracy of an empty batch".into()));
    }
    let th = theta.as_slice();
    let mut hidden = vec![0.0; cfg.hidden];
    let mut out = vec![0.0; cfg.outputs()];
    let mut correct = 0usize;
    for (x, &y) in batch.inputs.iter().zip(&batch.labels) {
        logits_into(cfg, th, x, &mut hidden, &mut out);
        let pred = match cfg.head {
            // sigmoid(a) > 0.5 iff a > 0
            Head::SigmoidBce => usize::from(out[0] > 0.0),
            Head::SoftmaxCe => decide(Head::SoftmaxCe, &out),
        };
        if pred == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_theta(cfg: &NetConfig, rng: &mut ChaCha8Rng, scale: f64) -> ParamVector {
        ParamVector::new((0..cfg.n_params()).map(|_| rng.random_range(-scale..scale)).collect())
    }

    fn random_batch(n_classes: usize, n: usize, rng: &mut ChaCha8Rng) -> LabeledBatch {
        LabeledBatch {
            inputs: (0..n)
                .map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
                .collect(),
            labels: (0..n).map(|i| i % n_classes).collect(),
            timestep: 0,
        }
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(NetConfig::for_classes(2).n_params(), 17);
        assert_eq!(NetConfig::for_classes(3).n_params(), 27);
        let names = NetConfig::for_classes(3).param_names();
        assert_eq!(names.len(), 27);
        assert_eq!(names[0], "l1w0");
        assert_eq!(names[10], "l1b2");
        assert_eq!(names[12], "l2w0");
        assert_eq!(names[26], "l2b2");
        assert_eq!(NetConfig::for_classes(2).param_names()[16], "l2b0");
    }

    #[test]
    fn zero_params_are_uninformative() {
        let bin = NetConfig::for_classes(2);
        let p = forward(&bin, &ParamVector::zeros(17), [0.3, -1.2]).unwrap();
        assert_eq!(p, vec![0.5]);
        let tri = NetConfig::for_classes(3);
        let p = forward(&tri, &ParamVector::zeros(27), [2.0, 5.0]).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_sums_to_one_and_is_shift_invariant() {
        let cfg = NetConfig::for_classes(3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let theta = random_theta(&cfg, &mut rng, 3.0);
            let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let p = forward(&cfg, &theta, x).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let mut shifted = theta.clone();
            let shift = rng.random_range(-5.0..5.0);
            for b in &mut shifted.as_mut_slice()[24..27] {
                *b += shift;
            }
            let q = forward(&cfg, &shifted, x).unwrap();
            for (a, b) in p.iter().zip(&q) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let cfg = NetConfig::for_classes(2);
        let err = forward(&cfg, &ParamVector::zeros(16), [0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 17, got: 16 }));
    }

    #[test]
    fn flatten_round_trip() {
        let cfg = NetConfig::for_classes(3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let theta = random_theta(&cfg, &mut rng, 1.0);
        let layers = theta.unflatten(&cfg).unwrap();
        assert_eq!(layers.w1.len(), 4);
        assert_eq!(layers.w2.len(), 3);
        assert_eq!(ParamVector::flatten(&layers), theta);
        let row = theta.to_csv_row();
        assert_eq!(ParamVector::from_csv_row(&row).unwrap(), theta);
    }

    #[test]
    fn saturated_fit_has_near_zero_loss() {
        let cfg = NetConfig::for_classes(2);
        let mut theta = ParamVector::zeros(17);
        // hidden unit 0 fires strongly for x1 > 0; output maps it to class 1.
        theta.as_mut_slice()[0] = 40.0;
        theta.as_mut_slice()[12] = 40.0;
        theta.as_mut_slice()[16] = -20.0;
        let batch = LabeledBatch { inputs: vec![[1.0, 0.0]], labels: vec![1], timestep: 0 };
        let lg = loss_and_grad(&cfg, &theta, &batch, None, 0.0, 0.0).unwrap();
        assert!(lg.task < 1e-8);
        assert!(lg.grad.iter().map(|g| g * g).sum::<f64>().sqrt() < 1e-7);
    }

    #[test]
    fn smoothness_term_vanishes_at_anchor() {
        let cfg = NetConfig::for_classes(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let theta = random_theta(&cfg, &mut rng, 1.0);
        let batch = random_batch(3, 20, &mut rng);
        let with = loss_and_grad(&cfg, &theta, &batch, Some(&theta), 5.0, 0.0).unwrap();
        let without = loss_and_grad(&cfg, &theta, &batch, None, 5.0, 0.0).unwrap();
        assert_eq!(with.total, without.total);
        assert_eq!(with.grad, without.grad);
    }

    #[test]
    fn accuracy_rules() {
        let cfg = NetConfig::for_classes(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batch = random_batch(2, 100, &mut rng);
        let acc = accuracy(&cfg, &ParamVector::zeros(17), &batch).unwrap();
        assert_eq!(acc, 0.5);
        let zeros = LabeledBatch { labels: vec![0; 100], ..batch.clone() };
        let mut theta = ParamVector::zeros(17);
        theta.as_mut_slice()[16] = -3.0;
        assert_eq!(accuracy(&cfg, &theta, &zeros).unwrap(), 1.0);
        let empty = LabeledBatch { inputs: vec![], labels: vec![], timestep: 0 };
        assert!(accuracy(&cfg, &theta, &empty).is_err());
    }

    #[test]
    fn losses_are_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for classes in [2, 3] {
            let cfg = NetConfig::for_classes(classes);
            for _ in 0..20 {
                let theta = random_theta(&cfg, &mut rng, 4.0);
                let anchor = random_theta(&cfg, &mut rng, 4.0);
                let batch = random_batch(classes, 30, &mut rng);
                let lg = loss_and_grad(&cfg, &theta, &batch, Some(&anchor), 0.1, 0.01).unwrap();
                assert!(lg.task >= 0.0);
                assert!(lg.total >= lg.task);
            }
        }
    }
}
