//! Seeded generators for the six drifting two-dimensional classification
//! streams.
//!
//! Every stream is a Gaussian class mixture whose centroids move with the
//! timestep. Kinds A-E are periodic in the drift period; kind F expands
//! monotonically.

use std::f64::consts::TAU;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The six drift geometries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DriftKind {
    /// Two classes orbiting a circle with labels swapped every half period.
    #[serde(rename = "A")]
    SignFlip,
    /// Two classes on a rotating axis with oscillating separation.
    #[serde(rename = "B")]
    OscillatingSeparation,
    /// Two classes with fixed separation riding a Lissajous offset.
    #[serde(rename = "C")]
    Lissajous,
    /// Three classes on a rotating equilateral triangle.
    #[serde(rename = "D")]
    OrbitingMixture,
    /// Three two-component classes on a rotating, breathing triangle.
    #[serde(rename = "E")]
    SubclusterMixture,
    /// Three classes on a rotating triangle whose circumradius grows linearly.
    #[serde(rename = "F")]
    Expanding,
}

impl DriftKind {
    pub const ALL: [DriftKind; 6] = [
        DriftKind::SignFlip,
        DriftKind::OscillatingSeparation,
        DriftKind::Lissajous,
        DriftKind::OrbitingMixture,
        DriftKind::SubclusterMixture,
        DriftKind::Expanding,
    ];

    pub fn letter(self) -> char {
        match self {
            DriftKind::SignFlip => 'A',
            DriftKind::OscillatingSeparation => 'B',
            DriftKind::Lissajous => 'C',
            DriftKind::OrbitingMixture => 'D',
            DriftKind::SubclusterMixture => 'E',
            DriftKind::Expanding => 'F',
        }
    }

    pub fn n_classes(self) -> usize {
        match self {
            DriftKind::SignFlip | DriftKind::OscillatingSeparation | DriftKind::Lissajous => 2,
            _ => 3,
        }
    }

    pub fn is_periodic(self) -> bool {
        self != DriftKind::Expanding
    }

    pub fn description(self) -> &'static str {
        match self {
            DriftKind::SignFlip => "sign-flip",
            DriftKind::OscillatingSeparation => "osc. sep.",
            DriftKind::Lissajous => "Lissajous",
            DriftKind::OrbitingMixture => "orb. MoG",
            DriftKind::SubclusterMixture => "sub-cl. MoG",
            DriftKind::Expanding => "expanding",
        }
    }
}

impl fmt::Display for DriftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for DriftKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(DriftKind::SignFlip),
            "B" => Ok(DriftKind::OscillatingSeparation),
            "C" => Ok(DriftKind::Lissajous),
            "D" => Ok(DriftKind::OrbitingMixture),
            "E" => Ok(DriftKind::SubclusterMixture),
            "F" => Ok(DriftKind::Expanding),
            other => Err(Error::Config(format!("unknown dataset kind {other:?} (expected A-F)"))),
        }
    }
}

/// Geometry scalars. Which fields matter depends on the kind; unused ones
/// are carried but ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftParams {
    /// Per-class isotropic Gaussian standard deviation.
    pub noise_std: f64,
    /// Orbit radius (A), circumradius (D, F at t = 0), mean circumradius (E).
    pub radius: f64,
    /// Oscillation amplitude of the circumradius (E).
    pub radius_amp: f64,
    /// Circumradius growth per timestep (F).
    pub growth: f64,
    /// Mean centroid separation (B) or fixed separation (C).
    pub separation: f64,
    /// Oscillation amplitude of the separation (B).
    pub separation_amp: f64,
    /// Lissajous amplitudes (C).
    pub amp_x: f64,
    pub amp_y: f64,
    /// Tangential offset of each sub-cluster from its vertex (E).
    pub subcluster_offset: f64,
    /// Whether the class axis of kind B rotates with the drift phase.
    pub rotate: bool,
}

impl DriftParams {
    pub fn defaults_for(kind: DriftKind) -> Self {
        let base = DriftParams {
            noise_std: 0.25,
            radius: 1.0,
            radius_amp: 0.0,
            growth: 0.0,
            separation: 0.0,
            separation_amp: 0.0,
            amp_x: 0.0,
            amp_y: 0.0,
            subcluster_offset: 0.0,
            rotate: true,
        };
        match kind {
            DriftKind::SignFlip => DriftParams { noise_std: 0.35, ..base },
            DriftKind::OscillatingSeparation => DriftParams {
                noise_std: 0.12,
                separation: 1.0,
                separation_amp: 0.6,
                ..base
            },
            DriftKind::Lissajous => DriftParams {
                noise_std: 0.25,
                separation: 1.2,
                amp_x: 1.8,
                amp_y: 1.0,
                ..base
            },
            DriftKind::OrbitingMixture => DriftParams { radius: 1.8, ..base },
            DriftKind::SubclusterMixture => DriftParams {
                noise_std: 0.22,
                radius: 1.5,
                radius_amp: 0.3,
                subcluster_offset: 0.3,
                ..base
            },
            DriftKind::Expanding => DriftParams {
                radius: 1.2,
                growth: 0.004,
                ..base
            },
        }
    }

    fn values(&self) -> [f64; 9] {
        [
            self.noise_std,
            self.radius,
            self.radius_amp,
            self.growth,
            self.separation,
            self.separation_amp,
            self.amp_x,
            self.amp_y,
            self.subcluster_offset,
        ]
    }
}

/// Declarative description of one drifting stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub kind: DriftKind,
    pub period: usize,
    pub total_steps: usize,
    pub params: DriftParams,
}

impl DriftSpec {
    pub const DEFAULT_PERIOD: usize = 100;

    /// Default stream: period 100, four cycles.
    pub fn new(kind: DriftKind) -> Self {
        DriftSpec {
            kind,
            period: Self::DEFAULT_PERIOD,
            total_steps: 4 * Self::DEFAULT_PERIOD,
            params: DriftParams::defaults_for(kind),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.kind.n_classes()
    }

    pub fn input_dim(&self) -> usize {
        2
    }

    pub fn validate(&self) -> Result<()> {
        if self.period == 0 {
            return Err(Error::InvalidInput("period must be positive".into()));
        }
        if self.total_steps != 4 * self.period {
            return Err(Error::InvalidInput(format!(
                "total_steps ({}) must be four drift periods ({})",
                self.total_steps,
                4 * self.period
            )));
        }
        if self.params.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("drift parameters must be finite".into()));
        }
        if self.params.noise_std <= 0.0 {
            return Err(Error::InvalidInput("noise_std must be positive".into()));
        }
        Ok(())
    }

    fn phase(&self, t: usize) -> f64 {
        TAU * t as f64 / self.period as f64
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t >= self.total_steps {
            return Err(Error::InvalidInput(format!(
                "timestep {t} outside [0, {})",
                self.total_steps
            )));
        }
        Ok(())
    }

    /// Circumradius of the class triangle for kinds D-F.
    pub fn circumradius(&self, t: usize) -> Option<f64> {
        let p = &self.params;
        match self.kind {
            DriftKind::OrbitingMixture => Some(p.radius),
            DriftKind::SubclusterMixture => Some(p.radius + p.radius_amp * self.phase(t).cos()),
            DriftKind::Expanding => Some(p.radius + p.growth * t as f64),
            _ => None,
        }
    }

    /// Separation between the two class means for kind B.
    pub fn separation(&self, t: usize) -> Option<f64> {
        match self.kind {
            DriftKind::OscillatingSeparation => {
                Some(self.params.separation + self.params.separation_amp * self.phase(t).cos())
            }
            DriftKind::Lissajous => Some(self.params.separation),
            _ => None,
        }
    }
}

/// One Gaussian component of the class mixture at a given time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Centroid {
    pub class: usize,
    pub position: [f64; 2],
}

/// Class-centroid positions at timestep `t`. Kind E yields two sub-cluster
/// centroids per class; every other kind yields one per class.
pub fn centroids(spec: &DriftSpec, t: usize) -> Result<Vec<Centroid>> {
    spec.check_t(t)?;
    let phase = spec.phase(t);
    let p = &spec.params;
    let out = match spec.kind {
        DriftKind::SignFlip => {
            let u = [p.radius * phase.cos(), p.radius * phase.sin()];
            let neg = [-u[0], -u[1]];
            let flipped = t % spec.period >= spec.period / 2;
            let (c0, c1) = if flipped { (neg, u) } else { (u, neg) };
            vec![
                Centroid { class: 0, position: c0 },
                Centroid { class: 1, position: c1 },
            ]
        }
        DriftKind::OscillatingSeparation => {
            let half = 0.5 * spec.separation(t).unwrap_or_default();
            let axis = if p.rotate { phase } else { 0.0 };
            let u = [axis.cos(), axis.sin()];
            vec![
                Centroid { class: 0, position: [half * u[0], half * u[1]] },
                Centroid { class: 1, position: [-half * u[0], -half * u[1]] },
            ]
        }
        DriftKind::Lissajous => {
            let offset = [p.amp_x * phase.sin(), p.amp_y * phase.cos()];
            let half = 0.5 * p.separation;
            vec![
                Centroid { class: 0, position: [offset[0] - half, offset[1]] },
                Centroid { class: 1, position: [offset[0] + half, offset[1]] },
            ]
        }
        DriftKind::OrbitingMixture | DriftKind::Expanding | DriftKind::SubclusterMixture => {
            let r = spec.circumradius(t).unwrap_or_default();
            let mut out = Vec::with_capacity(6);
            for class in 0..3 {
                let angle = phase + TAU * class as f64 / 3.0;
                let (s, c) = angle.sin_cos();
                let vertex = [r * c, r * s];
                if spec.kind == DriftKind::SubclusterMixture {
                    let d = p.subcluster_offset;
                    let tangent = [-s, c];
                    for sign in [1.0, -1.0] {
                        out.push(Centroid {
                            class,
                            position: [vertex[0] + sign * d * tangent[0], vertex[1] + sign * d * tangent[1]],
                        });
                    }
                } else {
                    out.push(Centroid { class, position: vertex });
                }
            }
            out
        }
    };
    Ok(out)
}

/// Inter-class gap (side length of the class triangle) for kinds D-F.
pub fn gap(spec: &DriftSpec, t: usize) -> Result<f64> {
    spec.check_t(t)?;
    spec.circumradius(t)
        .map(|r| 3f64.sqrt() * r)
        .ok_or_else(|| Error::Unsupported(format!("gap is defined for kinds D-F, not {}", spec.kind)))
}

/// A labeled sample drawn at one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    pub inputs: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
    pub timestep: usize,
}

impl LabeledBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Writes `x1,x2,label,t` rows, optionally preceded by the header.
    pub fn write_csv<W: Write>(&self, mut out: W, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(out, "x1,x2,label,t")?;
        }
        for (x, y) in self.inputs.iter().zip(&self.labels) {
            writeln!(out, "{},{},{},{}", x[0], x[1], y, self.timestep)?;
        }
        Ok(())
    }
}

/// Derives an independent 64-bit seed for a named stream at timestep `t`.
pub fn stream_seed(seed: u64, namespace: &str, t: u64) -> u64 {
    // FNV-1a over the namespace, then splitmix64 finalisation.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in namespace.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(splitmix64(seed ^ h).wrapping_add(t))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Draws `n` labeled points at timestep `t`. Labels are assigned
/// round-robin so every class count is within one of `n / n_classes`.
pub fn sample_timestep(spec: &DriftSpec, t: usize, n: usize, seed: u64) -> Result<LabeledBatch> {
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be at least 1".into()));
    }
    let cents = centroids(spec, t)?;
    let n_classes = spec.n_classes();
    let sigma = spec.params.noise_std;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "sample", t as u64));

    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % n_classes;
        let comps: Vec<&Centroid> = cents.iter().filter(|c| c.class == class).collect();
        let comp = if comps.len() == 1 {
            comps[0]
        } else {
            comps[rng.random_range(0..comps.len())]
        };
        let e0: f64 = rng.sample(StandardNormal);
        let e1: f64 = rng.sample(StandardNormal);
        inputs.push([comp.position[0] + sigma * e0, comp.position[1] + sigma * e1]);
        labels.push(class);
    }
    Ok(LabeledBatch { inputs, labels, timestep: t })
}

/// Log-likelihood-ratio-optimal label under the true generative mixture.
pub fn bayes_label(spec: &DriftSpec, t: usize, x: [f64; 2]) -> Result<usize> {
    let cents = centroids(spec, t)?;
    let two_var = 2.0 * spec.params.noise_std.powi(2);
    let mut density = vec![0.0; spec.n_classes()];
    let mut counts = vec![0usize; spec.n_classes()];
    for c in &cents {
        let d2 = (x[0] - c.position[0]).powi(2) + (x[1] - c.position[1]).powi(2);
        density[c.class] += (-d2 / two_var).exp();
        counts[c.class] += 1;
    }
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (k, (&d, &m)) in density.iter().zip(&counts).enumerate() {
        let v = d / m as f64;
        if v > best_val {
            best_val = v;
            best = k;
        }
    }
    Ok(best)
}

/// Phase (radians) of the drift cycle at `t`.
pub fn drift_phase(spec: &DriftSpec, t: usize) -> f64 {
    spec.phase(t) % TAU
}
