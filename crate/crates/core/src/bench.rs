//! Synthetic optimization problems, a seeded training loop, and run metrics.
//!
//! Every problem exposes its exact gradient and an unbiased noisy sampler:
//! additive i.i.d. Gaussian noise for the analytic objectives, uniform
//! mini-batches drawn with replacement for the data-driven ones.
//!
//! Randomness comes from ChaCha8 ([`BenchRng`]), and normal variates from
//! the Box–Muller transform, so a `(config, seed)` pair reproduces a run
//! bit for bit on any platform.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baselines::{Adam, AdamConfig, NormalizedSgd, Sgd, SgdmConfig};
use crate::constant::{ConstantVsgd, ConstantVsgdConfig};
use crate::error::{check_len, Error, Result};
use crate::optim::{Optimizer, StateSummary};
use crate::second_order::{SecondOrderConfig, SecondOrderVsgd};
use crate::vsgd::{HyperParams, Vsgd};

pub type BenchRng = ChaCha8Rng;

/// Loss magnitude beyond which a run is declared diverged.
pub const DIVERGENCE_LOSS: f64 = 1e12;

/// One standard normal pair from two uniforms.
fn box_muller(rng: &mut BenchRng) -> (f64, f64) {
    // 1 - U lies in (0, 1], keeping the logarithm finite.
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (TAU * u2).sin_cos();
    (r * c, r * s)
}

/// Fills `out` with independent `N(0, 1)` draws.
pub fn fill_standard_normal(rng: &mut BenchRng, out: &mut [f64]) {
    let mut chunks = out.chunks_exact_mut(2);
    for pair in &mut chunks {
        let (z0, z1) = box_muller(rng);
        pair[0] = z0;
        pair[1] = z1;
    }
    if let [last] = chunks.into_remainder() {
        *last = box_muller(rng).0;
    }
}

pub fn standard_normal(rng: &mut BenchRng) -> f64 {
    box_muller(rng).0
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// An objective with an exact gradient and an unbiased stochastic one.
pub trait Problem: Send + Sync {
    fn name(&self) -> String;

    fn dim(&self) -> usize;

    /// Deterministic starting point.
    fn initial_theta(&self) -> Vec<f64>;

    fn loss(&self, theta: &[f64]) -> f64;

    fn true_grad(&self, theta: &[f64], out: &mut [f64]);

    /// Draws `ĝ` with `E[ĝ] = true_grad(θ)`.
    fn sample_grad(&self, theta: &[f64], rng: &mut BenchRng, out: &mut [f64]);
}

/// `f(θ) = ½ Σ aᵢ θᵢ²`, observed through `ĝ = Aθ + σ_n ε`. Starts at all ones.
#[derive(Debug, Clone)]
pub struct NoisyQuadratic {
    pub diag: Vec<f64>,
    pub noise: f64,
}

impl NoisyQuadratic {
    /// Curvatures spaced geometrically from 1 to `cond`.
    pub fn new(dim: usize, cond: f64, noise: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("quadratic dim must be at least 1".into()));
        }
        if !(cond >= 1.0 && cond.is_finite()) || !(noise >= 0.0 && noise.is_finite()) {
            return Err(Error::Config(format!("need cond >= 1 and noise >= 0, got cond={cond}, noise={noise}")));
        }
        let diag = (0..dim)
            .map(|i| if dim == 1 { 1.0 } else { cond.powf(i as f64 / (dim - 1) as f64) })
            .collect();
        Ok(Self { diag, noise })
    }
}

impl Problem for NoisyQuadratic {
    fn name(&self) -> String {
        "quad".into()
    }

    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn initial_theta(&self) -> Vec<f64> {
        vec![1.0; self.diag.len()]
    }

    fn loss(&self, theta: &[f64]) -> f64 {
        0.5 * theta.iter().zip(&self.diag).map(|(x, a)| a * x * x).sum::<f64>()
    }

    fn true_grad(&self, theta: &[f64], out: &mut [f64]) {
        for ((o, x), a) in out.iter_mut().zip(theta).zip(&self.diag) {
            *o = a * x;
        }
    }

    fn sample_grad(&self, theta: &[f64], rng: &mut BenchRng, out: &mut [f64]) {
        if self.noise == 0.0 {
            self.true_grad(theta, out);
            return;
        }
        fill_standard_normal(rng, out);
        for ((o, x), a) in out.iter_mut().zip(theta).zip(&self.diag) {
            *o = a * x + self.noise * *o;
        }
    }
}

/// Chained Rosenbrock function with optional additive gradient noise.
/// Starts at `(-1.2, 1, -1.2, 1, ...)`.
#[derive(Debug, Clone)]
pub struct Rosenbrock {
    pub dim: usize,
    pub noise: f64,
}

impl Problem for Rosenbrock {
    fn name(&self) -> String {
        "rosenbrock".into()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn initial_theta(&self) -> Vec<f64> {
        (0..self.dim).map(|i| if i % 2 == 0 { -1.2 } else { 1.0 }).collect()
    }

    fn loss(&self, x: &[f64]) -> f64 {
        x.windows(2)
            .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
            .sum()
    }

    fn true_grad(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for i in 0..self.dim - 1 {
            let r = x[i + 1] - x[i] * x[i];
            out[i] += -400.0 * x[i] * r - 2.0 * (1.0 - x[i]);
            out[i + 1] += 200.0 * r;
        }
    }

    fn sample_grad(&self, theta: &[f64], rng: &mut BenchRng, out: &mut [f64]) {
        self.true_grad(theta, out);
        if self.noise > 0.0 {
            for o in out.iter_mut() {
                *o += self.noise * standard_normal(rng);
            }
        }
    }
}

/// Binary logistic regression on Gaussian features with labels drawn from a
/// planted model, `y ~ Bernoulli(σ(x·w*))`. Loss is the mean log-loss over
/// the full dataset; the sampler averages a mini-batch drawn with
/// replacement. Starts at zero.
#[derive(Debug, Clone)]
pub struct LogRegSynth {
    pub d: usize,
    /// Row-major `n × d` features.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub batch: usize,
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogRegSynth {
    pub fn new(n: usize, d: usize, seed: u64, batch: usize) -> Result<Self> {
        if n == 0 || d == 0 || batch == 0 {
            return Err(Error::Config(format!("logreg needs n, d, batch >= 1, got n={n}, d={d}, batch={batch}")));
        }
        let mut rng = BenchRng::seed_from_u64(seed);
        let mut w_star = vec![0.0; d];
        fill_standard_normal(&mut rng, &mut w_star);
        let scale = 2.0 / (d as f64).sqrt();
        w_star.iter_mut().for_each(|w| *w *= scale);
        let mut x = vec![0.0; n * d];
        fill_standard_normal(&mut rng, &mut x);
        let y = x
            .chunks_exact(d)
            .map(|row| {
                let p = sigmoid(dot(row, &w_star));
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self { d, x, y, batch })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    /// Adds `scale · ∇ℓᵢ(θ)` to `out`.
    fn accumulate(&self, i: usize, theta: &[f64], scale: f64, out: &mut [f64]) {
        let row = self.row(i);
        let r = scale * (sigmoid(dot(row, theta)) - self.y[i]);
        for (o, xj) in out.iter_mut().zip(row) {
            *o += r * xj;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Problem for LogRegSynth {
    fn name(&self) -> String {
        "logreg".into()
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn initial_theta(&self) -> Vec<f64> {
        vec![0.0; self.d]
    }

    fn loss(&self, theta: &[f64]) -> f64 {
        let total: f64 = (0..self.n())
            .map(|i| {
                let z = dot(self.row(i), theta);
                log1p_exp(z) - self.y[i] * z
            })
            .sum();
        total / self.n() as f64
    }

    fn true_grad(&self, theta: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let scale = 1.0 / self.n() as f64;
        for i in 0..self.n() {
            self.accumulate(i, theta, scale, out);
        }
    }

    fn sample_grad(&self, theta: &[f64], rng: &mut BenchRng, out: &mut [f64]) {
        out.fill(0.0);
        let scale = 1.0 / self.batch as f64;
        for _ in 0..self.batch {
            let i = rng.random_range(0..self.n());
            self.accumulate(i, theta, scale, out);
        }
    }
}

/// Two-layer tanh network `ŷ = w₂·tanh(W₁x + b₁) + b₂` fitted by mean
/// squared error, `½ mean (ŷ - y)²`, to a random teacher of the same shape.
///
/// Parameter layout: `W₁` row-major (`hidden × inputs`), `b₁`, `w₂`, `b₂`.
#[derive(Debug, Clone)]
pub struct MlpSynth {
    pub inputs: usize,
    pub hidden: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub batch: usize,
    init: Vec<f64>,
}

impl MlpSynth {
    pub fn new(inputs: usize, hidden: usize, n: usize, seed: u64, batch: usize) -> Result<Self> {
        if inputs == 0 || hidden == 0 || n == 0 || batch == 0 {
            return Err(Error::Config("mlp needs inputs, hidden, n, batch >= 1".into()));
        }
        let dim = hidden * inputs + 2 * hidden + 1;
        let mut rng = BenchRng::seed_from_u64(seed);
        let mut teacher = vec![0.0; dim];
        fill_standard_normal(&mut rng, &mut teacher);
        let mut x = vec![0.0; n * inputs];
        fill_standard_normal(&mut rng, &mut x);
        let mut init = vec![0.0; dim];
        fill_standard_normal(&mut rng, &mut init);
        // Fan-in scaling for the student's first layer and readout.
        let (w1, rest) = init.split_at_mut(hidden * inputs);
        w1.iter_mut().for_each(|w| *w /= (inputs as f64).sqrt());
        rest[hidden..2 * hidden].iter_mut().for_each(|w| *w /= (hidden as f64).sqrt());
        let mut mlp = Self { inputs, hidden, x, y: Vec::new(), batch, init };
        let mut scratch = vec![0.0; hidden];
        mlp.y = (0..n).map(|i| mlp.forward(&teacher, i, &mut scratch)).collect();
        Ok(mlp)
    }

    pub fn n(&self) -> usize {
        self.x.len() / self.inputs
    }

    /// Network output on sample `i`; leaves the hidden activations in `h`.
    fn forward(&self, theta: &[f64], i: usize, h: &mut [f64]) -> f64 {
        let (ni, nh) = (self.inputs, self.hidden);
        let xi = &self.x[i * ni..(i + 1) * ni];
        let (w1, rest) = theta.split_at(nh * ni);
        let (b1, rest) = rest.split_at(nh);
        let (w2, b2) = rest.split_at(nh);
        for (j, hj) in h.iter_mut().enumerate() {
            *hj = (dot(&w1[j * ni..(j + 1) * ni], xi) + b1[j]).tanh();
        }
        dot(w2, h) + b2[0]
    }

    fn accumulate(&self, i: usize, theta: &[f64], scale: f64, h: &mut [f64], out: &mut [f64]) {
        let (ni, nh) = (self.inputs, self.hidden);
        let r = scale * (self.forward(theta, i, h) - self.y[i]);
        let xi = &self.x[i * ni..(i + 1) * ni];
        let w2 = &theta[nh * ni + nh..nh * ni + 2 * nh];
        let (gw1, rest) = out.split_at_mut(nh * ni);
        let (gb1, rest) = rest.split_at_mut(nh);
        let (gw2, gb2) = rest.split_at_mut(nh);
        for j in 0..nh {
            gw2[j] += r * h[j];
            let delta = r * w2[j] * (1.0 - h[j] * h[j]);
            gb1[j] += delta;
            for (g, xk) in gw1[j * ni..(j + 1) * ni].iter_mut().zip(xi) {
                *g += delta * xk;
            }
        }
        gb2[0] += r;
    }
}

impl Problem for MlpSynth {
    fn name(&self) -> String {
        "mlp".into()
    }

    fn dim(&self) -> usize {
        self.init.len()
    }

    fn initial_theta(&self) -> Vec<f64> {
        self.init.clone()
    }

    fn loss(&self, theta: &[f64]) -> f64 {
        let mut h = vec![0.0; self.hidden];
        let total: f64 = (0..self.n())
            .map(|i| (self.forward(theta, i, &mut h) - self.y[i]).powi(2))
            .sum();
        0.5 * total / self.n() as f64
    }

    fn true_grad(&self, theta: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let mut h = vec![0.0; self.hidden];
        let scale = 1.0 / self.n() as f64;
        for i in 0..self.n() {
            self.accumulate(i, theta, scale, &mut h, out);
        }
    }

    fn sample_grad(&self, theta: &[f64], rng: &mut BenchRng, out: &mut [f64]) {
        out.fill(0.0);
        let mut h = vec![0.0; self.hidden];
        let scale = 1.0 / self.batch as f64;
        for _ in 0..self.batch {
            let i = rng.random_range(0..self.n());
            self.accumulate(i, theta, scale, &mut h, out);
        }
    }
}

/// Textual problem selector, `name[:key=value,...]`.
///
/// | name | keys (defaults) |
/// |------|-----------------|
/// | `quad`, `noisy_quadratic` | `dim=10`, `noise=0`, `cond=1` |
/// | `rosenbrock` | `dim=2`, `noise=0` |
/// | `logreg`, `logreg_synth` | `n=2000`, `d=50`, `seed=0`, `batch=32` |
/// | `mlp`, `mlp_synth` | `inputs=4`, `hidden=16`, `n=256`, `seed=0`, `batch=16` |
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Quadratic { dim: usize, noise: f64, cond: f64 },
    Rosenbrock { dim: usize, noise: f64 },
    LogReg { n: usize, d: usize, seed: u64, batch: usize },
    Mlp { inputs: usize, hidden: usize, n: usize, seed: u64, batch: usize },
}

struct Params<'a> {
    kv: Vec<(&'a str, &'a str)>,
    used: Vec<bool>,
}

impl<'a> Params<'a> {
    fn parse(s: &'a str) -> Result<Self> {
        let kv = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| {
                p.split_once('=')
                    .map(|(k, v)| (k.trim(), v.trim()))
                    .ok_or_else(|| Error::Config(format!("expected key=value, got '{p}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        let used = vec![false; kv.len()];
        Ok(Self { kv, used })
    }

    fn get<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.kv.iter().position(|(k, _)| *k == key) {
            None => Ok(default),
            Some(i) => {
                self.used[i] = true;
                self.kv[i]
                    .1
                    .parse()
                    .map_err(|_| Error::Config(format!("bad value for {key}: '{}'", self.kv[i].1)))
            }
        }
    }

    fn finish(self) -> Result<()> {
        match self.used.iter().position(|u| !u) {
            Some(i) => Err(Error::Config(format!("unknown problem parameter '{}'", self.kv[i].0))),
            None => Ok(()),
        }
    }
}

impl FromStr for ProblemSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut p = Params::parse(rest)?;
        let spec = match name.trim() {
            "quad" | "quadratic" | "noisy_quadratic" => ProblemSpec::Quadratic {
                dim: p.get("dim", 10)?,
                noise: p.get("noise", 0.0)?,
                cond: p.get("cond", 1.0)?,
            },
            "rosenbrock" => ProblemSpec::Rosenbrock {
                dim: p.get("dim", 2)?,
                noise: p.get("noise", 0.0)?,
            },
            "logreg" | "logreg_synth" => ProblemSpec::LogReg {
                n: p.get("n", 2000)?,
                d: p.get("d", 50)?,
                seed: p.get("seed", 0)?,
                batch: p.get("batch", 32)?,
            },
            "mlp" | "mlp_synth" => ProblemSpec::Mlp {
                inputs: p.get("inputs", 4)?,
                hidden: p.get("hidden", 16)?,
                n: p.get("n", 256)?,
                seed: p.get("seed", 0)?,
                batch: p.get("batch", 16)?,
            },
            other => return Err(Error::Config(format!("unknown problem '{other}'"))),
        };
        p.finish()?;
        Ok(spec)
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemSpec::Quadratic { dim, noise, cond } => write!(f, "quad:dim={dim},noise={noise},cond={cond}"),
            ProblemSpec::Rosenbrock { dim, noise } => write!(f, "rosenbrock:dim={dim},noise={noise}"),
            ProblemSpec::LogReg { n, d, seed, batch } => write!(f, "logreg:n={n},d={d},seed={seed},batch={batch}"),
            ProblemSpec::Mlp { inputs, hidden, n, seed, batch } => {
                write!(f, "mlp:inputs={inputs},hidden={hidden},n={n},seed={seed},batch={batch}")
            }
        }
    }
}

impl ProblemSpec {
    /// Short family name, e.g. `quad` or `logreg`.
    pub fn kind(&self) -> &'static str {
        match self {
            ProblemSpec::Quadratic { .. } => "quad",
            ProblemSpec::Rosenbrock { .. } => "rosenbrock",
            ProblemSpec::LogReg { .. } => "logreg",
            ProblemSpec::Mlp { .. } => "mlp",
        }
    }
}

pub fn make_problem(spec: &ProblemSpec) -> Result<Box<dyn Problem>> {
    Ok(match *spec {
        ProblemSpec::Quadratic { dim, noise, cond } => Box::new(NoisyQuadratic::new(dim, cond, noise)?),
        ProblemSpec::Rosenbrock { dim, noise } => {
            if dim < 2 || !(noise >= 0.0) {
                return Err(Error::Config(format!("rosenbrock needs dim >= 2 and noise >= 0, got dim={dim}")));
            }
            Box::new(Rosenbrock { dim, noise })
        }
        ProblemSpec::LogReg { n, d, seed, batch } => Box::new(LogRegSynth::new(n, d, seed, batch)?),
        ProblemSpec::Mlp { inputs, hidden, n, seed, batch } => Box::new(MlpSynth::new(inputs, hidden, n, seed, batch)?),
    })
}

/// An optimizer together with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerSpec {
    Vsgd(HyperParams),
    ConstantVsgd(ConstantVsgdConfig),
    SecondOrderVsgd(SecondOrderConfig),
    /// SGD with momentum; `lambda = 0` is plain SGD.
    Sgd(SgdmConfig),
    Adam(AdamConfig),
    AmsGrad(AdamConfig),
    NormalizedSgd { eta: f64 },
}

impl OptimizerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerSpec::Vsgd(_) => "vsgd",
            OptimizerSpec::ConstantVsgd(_) => "constant-vsgd",
            OptimizerSpec::SecondOrderVsgd(_) => "so-vsgd",
            OptimizerSpec::Sgd(c) if c.lambda == 0.0 => "sgd",
            OptimizerSpec::Sgd(_) => "sgdm",
            OptimizerSpec::Adam(_) => "adam",
            OptimizerSpec::AmsGrad(_) => "amsgrad",
            OptimizerSpec::NormalizedSgd { .. } => "nsgd",
        }
    }

    pub fn learning_rate(&self) -> f64 {
        match self {
            OptimizerSpec::Vsgd(h) => h.eta,
            OptimizerSpec::ConstantVsgd(c) => c.eta,
            OptimizerSpec::SecondOrderVsgd(c) => c.eta,
            OptimizerSpec::Sgd(c) => c.eta,
            OptimizerSpec::Adam(c) | OptimizerSpec::AmsGrad(c) => c.eta,
            OptimizerSpec::NormalizedSgd { eta } => *eta,
        }
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        match &mut self {
            OptimizerSpec::Vsgd(h) => h.eta = lr,
            OptimizerSpec::ConstantVsgd(c) => c.eta = lr,
            OptimizerSpec::SecondOrderVsgd(c) => c.eta = lr,
            OptimizerSpec::Sgd(c) => c.eta = lr,
            OptimizerSpec::Adam(c) | OptimizerSpec::AmsGrad(c) => c.eta = lr,
            OptimizerSpec::NormalizedSgd { eta } => *eta = lr,
        }
        self
    }

    pub fn weight_decay(&self) -> f64 {
        match self {
            OptimizerSpec::Vsgd(h) => h.weight_decay,
            OptimizerSpec::ConstantVsgd(c) => c.weight_decay,
            OptimizerSpec::SecondOrderVsgd(c) => c.weight_decay,
            OptimizerSpec::Sgd(c) => c.weight_decay,
            OptimizerSpec::Adam(c) | OptimizerSpec::AmsGrad(c) => c.weight_decay,
            OptimizerSpec::NormalizedSgd { .. } => 0.0,
        }
    }

    /// Sets decoupled weight decay; Normalized SGD has none and ignores it.
    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        match &mut self {
            OptimizerSpec::Vsgd(h) => h.weight_decay = wd,
            OptimizerSpec::ConstantVsgd(c) => c.weight_decay = wd,
            OptimizerSpec::SecondOrderVsgd(c) => c.weight_decay = wd,
            OptimizerSpec::Sgd(c) => c.weight_decay = wd,
            OptimizerSpec::Adam(c) | OptimizerSpec::AmsGrad(c) => c.weight_decay = wd,
            OptimizerSpec::NormalizedSgd { .. } => {}
        }
        self
    }

    pub fn build(&self, dim: usize) -> Result<Box<dyn Optimizer>> {
        Ok(match *self {
            OptimizerSpec::Vsgd(hp) => Box::new(Vsgd::new(dim, hp)?),
            OptimizerSpec::ConstantVsgd(c) => Box::new(ConstantVsgd::new(dim, c)?),
            OptimizerSpec::SecondOrderVsgd(c) => Box::new(SecondOrderVsgd::new(dim, c)?),
            OptimizerSpec::Sgd(c) => Box::new(Sgd::new(dim, c)?),
            OptimizerSpec::Adam(c) => Box::new(Adam::new(dim, c)?),
            OptimizerSpec::AmsGrad(c) => Box::new(Adam::amsgrad(dim, c)?),
            OptimizerSpec::NormalizedSgd { eta } => {
                crate::vsgd::positive("eta", eta)?;
                Box::new(NormalizedSgd { eta, dim })
            }
        })
    }
}

/// Learning-rate schedule applied by [`run`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheduler {
    #[default]
    Constant,
    /// Halve the learning rate after every `every` steps.
    StepDecay { every: u64 },
}

impl Scheduler {
    /// Learning rate used for step `t ≥ 1`.
    pub fn lr_at(&self, base: f64, t: u64) -> f64 {
        match *self {
            Scheduler::Constant => base,
            Scheduler::StepDecay { every } => {
                let halvings = ((t - 1) / every).min(i32::MAX as u64) as i32;
                base * 0.5f64.powi(halvings)
            }
        }
    }
}

impl FromStr for Scheduler {
    type Err = Error;

    /// `none`, `constant`, or `step:K` (also `step-decay:K`).
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if matches!(s, "none" | "constant") => Ok(Scheduler::Constant),
            Some(("step" | "step-decay", k)) => match k.parse::<u64>() {
                Ok(every) if every > 0 => Ok(Scheduler::StepDecay { every }),
                _ => Err(Error::Config(format!("step-decay period must be a positive integer, got '{k}'"))),
            },
            _ => Err(Error::Config(format!("unknown scheduler '{s}'"))),
        }
    }
}

impl fmt::Display for Scheduler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheduler::Constant => f.write_str("none"),
            Scheduler::StepDecay { every } => write!(f, "step:{every}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub optimizer: OptimizerSpec,
    pub problem: ProblemSpec,
    pub steps: u64,
    /// Seeds the gradient sampler.
    pub seed: u64,
    pub scheduler: Scheduler,
    /// Record every `record_stride`-th step (plus `t = 0` and the last step).
    pub record_stride: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::Config("record stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// One recorded row of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepTrace {
    pub t: u64,
    pub loss: f64,
    /// Norm of the exact gradient.
    pub grad_norm: f64,
    pub theta_norm: f64,
    pub summary: StateSummary,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub optimizer: &'static str,
    pub traces: Vec<StepTrace>,
    pub diverged: bool,
    pub steps_completed: u64,
    /// Time spent in the optimization loop, excluding problem construction.
    pub wallclock: Duration,
    pub final_theta: Vec<f64>,
}

fn record(problem: &dyn Problem, opt: &dyn Optimizer, theta: &[f64], t: u64, grad: &mut [f64]) -> StepTrace {
    problem.true_grad(theta, grad);
    StepTrace {
        t,
        loss: problem.loss(theta),
        grad_norm: norm(grad),
        theta_norm: norm(theta),
        summary: opt.summary(),
    }
}

fn is_diverged(loss: f64) -> bool {
    !loss.is_finite() || loss.abs() > DIVERGENCE_LOSS
}

pub fn run(cfg: &RunConfig) -> Result<RunResult> {
    cfg.validate()?;
    let problem = make_problem(&cfg.problem)?;
    let mut opt = cfg.optimizer.build(problem.dim())?;
    run_with(problem.as_ref(), opt.as_mut(), cfg)
}

/// Runs a prebuilt optimizer on a prebuilt problem. `cfg.optimizer` and
/// `cfg.problem` are ignored apart from the base learning rate.
///
/// The loss is evaluated at recorded steps only; divergence is checked
/// there and whenever the optimizer rejects a non-finite gradient.
pub fn run_with(problem: &dyn Problem, opt: &mut dyn Optimizer, cfg: &RunConfig) -> Result<RunResult> {
    cfg.validate()?;
    check_len(problem.dim(), opt.dim())?;
    let start = Instant::now();
    let mut rng = BenchRng::seed_from_u64(cfg.seed);
    let mut theta = problem.initial_theta();
    let mut grad = vec![0.0; theta.len()];
    let base_lr = opt.learning_rate();
    let mut traces = vec![record(problem, opt, &theta, 0, &mut grad)];
    let mut diverged = is_diverged(traces[0].loss);
    let mut t = 0;
    while !diverged && t < cfg.steps {
        t += 1;
        opt.set_learning_rate(cfg.scheduler.lr_at(base_lr, t));
        problem.sample_grad(&theta, &mut rng, &mut grad);
        match opt.step(&mut theta, &grad) {
            Ok(()) => {}
            Err(Error::Numeric(_)) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        }
        if t % cfg.record_stride == 0 || t == cfg.steps {
            let row = record(problem, opt, &theta, t, &mut grad);
            diverged = is_diverged(row.loss);
            traces.push(row);
        }
    }
    opt.set_learning_rate(base_lr);
    Ok(RunResult {
        optimizer: opt.name(),
        traces,
        diverged,
        steps_completed: t,
        wallclock: start.elapsed(),
        final_theta: theta,
    })
}

/// Runs independent configurations in parallel, preserving order.
pub fn run_many(configs: &[RunConfig]) -> Vec<Result<RunResult>> {
    configs.par_iter().map(run).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub final_loss: f64,
    pub best_loss: f64,
    /// First recorded step whose loss is below the threshold.
    pub steps_to_threshold: Option<u64>,
    pub wallclock_per_step: f64,
}

pub fn summarize(result: &RunResult, threshold: f64) -> Metrics {
    let traces = &result.traces;
    Metrics {
        final_loss: traces.last().map_or(f64::NAN, |r| r.loss),
        best_loss: traces.iter().map(|r| r.loss).fold(f64::INFINITY, f64::min),
        steps_to_threshold: traces.iter().find(|r| r.loss < threshold).map(|r| r.t),
        wallclock_per_step: result.wallclock.as_secs_f64() / result.steps_completed.max(1) as f64,
    }
}

/// Mean loss over the recorded rows with `t > last_t - window`.
pub fn tail_mean_loss(traces: &[StepTrace], window: u64) -> f64 {
    let last = traces.last().map_or(0, |r| r.t);
    let tail: Vec<f64> = traces
        .iter()
        .filter(|r| r.t + window > last)
        .map(|r| r.loss)
        .collect();
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// Mean final loss of one (optimizer, learning rate) cell over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub optimizer: &'static str,
    pub lr: f64,
    pub final_losses: Vec<f64>,
    pub mean_final_loss: f64,
    pub any_diverged: bool,
}

/// Learning-rate grid over several optimizers and seeds, run in parallel.
/// `problem(seed)` gives the problem instance for each seed; the same seed
/// drives the gradient sampler.
pub fn lr_grid(
    optimizers: &[OptimizerSpec],
    lrs: &[f64],
    seeds: &[u64],
    steps: u64,
    problem: impl Fn(u64) -> ProblemSpec,
) -> Result<Vec<GridCell>> {
    let mut configs = Vec::new();
    for opt in optimizers {
        for &lr in lrs {
            for &seed in seeds {
                configs.push(RunConfig {
                    optimizer: opt.with_learning_rate(lr),
                    problem: problem(seed),
                    steps,
                    seed,
                    scheduler: Scheduler::Constant,
                    record_stride: steps,
                });
            }
        }
    }
    let results = run_many(&configs).into_iter().collect::<Result<Vec<_>>>()?;
    Ok(results
        .chunks(seeds.len())
        .zip(configs.chunks(seeds.len()))
        .map(|(runs, cfgs)| {
            let final_losses: Vec<f64> = runs.iter().map(|r| r.traces.last().map_or(f64::NAN, |t| t.loss)).collect();
            let any_diverged = runs.iter().any(|r| r.diverged);
            GridCell {
                optimizer: cfgs[0].optimizer.name(),
                lr: cfgs[0].optimizer.learning_rate(),
                mean_final_loss: if any_diverged {
                    f64::INFINITY
                } else {
                    final_losses.iter().sum::<f64>() / final_losses.len() as f64
                },
                final_losses,
                any_diverged,
            }
        })
        .collect())
}

/// Lowest mean final loss per optimizer, in first-appearance order.
pub fn best_per_optimizer(cells: &[GridCell]) -> Vec<&GridCell> {
    let mut best: Vec<&GridCell> = Vec::new();
    for cell in cells {
        match best.iter_mut().find(|b| b.optimizer == cell.optimizer) {
            Some(b) if cell.mean_final_loss < b.mean_final_loss => *b = cell,
            Some(_) => {}
            None => best.push(cell),
        }
    }
    best
}

/// Wallclock per training step (sampled gradient plus optimizer update) on
/// the noiseless `dim`-dimensional quadratic. Each optimizer is timed
/// `repeats` times, interleaved, and the fastest repeat is kept.
pub fn time_per_step(optimizers: &[OptimizerSpec], dim: usize, steps: u64, repeats: usize) -> Result<Vec<f64>> {
    let problem = NoisyQuadratic::new(dim, 1.0, 0.0)?;
    let cfg = RunConfig {
        optimizer: optimizers[0],
        problem: ProblemSpec::Quadratic { dim, noise: 0.0, cond: 1.0 },
        steps,
        seed: 0,
        scheduler: Scheduler::Constant,
        record_stride: steps,
    };
    let mut best = vec![f64::INFINITY; optimizers.len()];
    for _ in 0..repeats.max(1) {
        for (spec, slot) in optimizers.iter().zip(best.iter_mut()) {
            let mut opt = spec.build(dim)?;
            let r = run_with(&problem, opt.as_mut(), &cfg)?;
            *slot = slot.min(summarize(&r, 0.0).wallclock_per_step);
        }
    }
    Ok(best)
}
