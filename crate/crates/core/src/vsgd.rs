//! Variational SGD.
//!
//! Every coordinate of the gradient is treated as a latent Gaussian `g` with
//! two Gamma-distributed precisions: `w_g` for the systematic drift of the
//! true gradient around the previous posterior mean, and `w_ĝ` for the
//! observation noise of the sampled gradient. One optimizer step is one
//! stochastic variational inference iteration:
//!
//! 1. local update of `q(g) = N(μ, σ²)` from the previous rates,
//! 2. intermediate global rates `b'` from the new local posterior,
//! 3. Robbins–Monro interpolation of the rates with `ρ = t^(-κ)`,
//! 4. a parameter step `θ ← θ - η μ / sqrt(μ² + σ²)`.
//!
//! The shared Gamma shape is `γ` before the first step and `γ + 0.5` after.
//! All arrays are flat and elementwise independent.

use crate::error::{check_finite, check_len, Error, Result};
use crate::optim::{self, Optimizer, StateSummary};

/// Fixed scalars of a VSGD run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub eta: f64,
    /// Prior strength: pseudo-observation count of both Gamma priors.
    pub gamma: f64,
    /// Prior ratio of observation variance to systematic variance.
    pub k_g: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    /// Decoupled L2 coefficient, applied to the pre-step parameters.
    pub weight_decay: f64,
    /// Denominator guard used by the second-order variant.
    pub mu_guard_eps: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            eta: 0.01,
            gamma: 1e-8,
            k_g: 30.0,
            kappa1: 0.9,
            kappa2: 0.81,
            weight_decay: 0.0,
            mu_guard_eps: 1e-8,
        }
    }
}

impl HyperParams {
    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn validate(&self) -> Result<()> {
        positive("eta", self.eta)?;
        positive("gamma", self.gamma)?;
        positive("k_g", self.k_g)?;
        kappa_range("kappa1", self.kappa1)?;
        kappa_range("kappa2", self.kappa2)?;
        non_negative("weight_decay", self.weight_decay)?;
        non_negative("mu_guard_eps", self.mu_guard_eps)
    }
}

pub(crate) fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be finite and > 0, got {v}")))
    }
}

pub(crate) fn non_negative(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")))
    }
}

/// Robbins–Monro admissible SVI exponent range `(0.5, 1]`.
pub(crate) fn kappa_range(name: &str, v: f64) -> Result<()> {
    if v > 0.5 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in (0.5, 1], got {v}")))
    }
}

/// Variational state of one parameter tensor.
///
/// `σ²` is derived from the rates and is not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct VsgdState {
    pub t: u64,
    pub mu_g: Vec<f64>,
    pub b_g: Vec<f64>,
    pub b_ghat: Vec<f64>,
    /// Shared shape of both Gamma posteriors.
    pub a: f64,
}

impl VsgdState {
    pub fn len(&self) -> usize {
        self.mu_g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu_g.is_empty()
    }

    /// Posterior variance of the gradient implied by the current rates.
    pub fn sigma2(&self) -> Vec<f64> {
        self.b_g
            .iter()
            .zip(&self.b_ghat)
            .map(|(&bg, &bh)| posterior_variance(self.a, bg, bh))
            .collect()
    }
}

/// One step's inputs: the parameters before the step and the sampled gradient.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub theta: &'a [f64],
    pub g_hat: &'a [f64],
}

/// Local posterior `q(g_t) = N(mu, sigma2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPosterior {
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
}

/// Intermediate global parameters before interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalIntermediate {
    pub a_prime: f64,
    pub b_g_prime: Vec<f64>,
    pub b_ghat_prime: Vec<f64>,
}

pub fn init(param_count: usize, hp: &HyperParams) -> Result<VsgdState> {
    if param_count == 0 {
        return Err(Error::Precondition("param_count must be >= 1".into()));
    }
    hp.validate()?;
    Ok(VsgdState {
        t: 0,
        mu_g: vec![0.0; param_count],
        b_g: vec![hp.gamma; param_count],
        b_ghat: vec![hp.k_g * hp.gamma; param_count],
        a: hp.gamma,
    })
}

/// SVI interpolation rates `(t^-κ₁, t^-κ₂)` for iteration `t >= 1`.
pub fn svi_rates(t: u64, hp: &HyperParams) -> Result<(f64, f64)> {
    if t == 0 {
        return Err(Error::Precondition("SVI iteration index starts at 1".into()));
    }
    let t = t as f64;
    Ok((t.powf(-hp.kappa1), t.powf(-hp.kappa2)))
}

// Scalar kernels shared by the staged operations, the fused step and the
// mini-batch step.

/// Per-element result of the local and intermediate global updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementUpdate {
    pub mu: f64,
    pub sigma2: f64,
    pub b_g_prime: f64,
    pub b_ghat_prime: f64,
}

/// Local posterior and intermediate rates for one element.
///
/// The mean is the precision-weighted average `(1 - w) μ_prev + w ĝ` with
/// `w = b_g / (b_g + b_ĝ)`, clamped into the interval spanned by `μ_prev`
/// and `ĝ`. The residuals entering the rates, `μ - μ_prev = w d` and
/// `μ - ĝ = -(1 - w) d`, are formed from `d = ĝ - μ_prev` directly rather
/// than by subtracting nearly equal numbers.
#[inline(always)]
pub(crate) fn element_update(mu_prev: f64, g_hat: f64, b_g: f64, b_ghat: f64, inv_a: f64, gamma: f64, prior_ghat: f64) -> ElementUpdate {
    let inv_sum = 1.0 / (b_g + b_ghat);
    let w = b_g * inv_sum;
    let w_c = b_ghat * inv_sum;
    let d = g_hat - mu_prev;
    let shift = w * d;
    let mu = clamp_between(w_c * mu_prev + w * g_hat, mu_prev, g_hat);
    let sigma2 = b_g * w_c * inv_a;
    let obs = w_c * d;
    ElementUpdate {
        mu,
        sigma2,
        b_g_prime: gamma + 0.5 * (sigma2 + shift * shift),
        b_ghat_prime: prior_ghat + 0.5 * (sigma2 + obs * obs),
    }
}

#[inline(always)]
fn clamp_between(x: f64, p: f64, q: f64) -> f64 {
    x.max(p.min(q)).min(p.max(q))
}

/// `(a/b_g + a/b_ĝ)^-1`.
#[inline(always)]
pub(crate) fn posterior_variance(a: f64, b_g: f64, b_ghat: f64) -> f64 {
    let inv_sum = 1.0 / (b_g + b_ghat);
    b_g * (b_ghat * inv_sum) * (1.0 / a)
}

#[inline(always)]
pub(crate) fn rate_prime(prior_rate: f64, sigma2: f64, residual: f64) -> f64 {
    prior_rate + 0.5 * (sigma2 + residual * residual)
}

#[inline(always)]
pub(crate) fn interpolate(old: f64, new: f64, rho: f64) -> f64 {
    (1.0 - rho) * old + rho * new
}

/// Gradient-term displacement `-η μ / sqrt(μ² + σ²)`.
#[inline(always)]
pub(crate) fn displacement(eta: f64, mu: f64, sigma2: f64) -> f64 {
    -eta * mu / (mu * mu + sigma2).sqrt()
}

fn check_rho(name: &str, rho: f64) -> Result<()> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        Err(Error::Precondition(format!("{name} must lie in (0, 1], got {rho}")))
    }
}

/// Local update of `q(g_t)` given the previous global state. Pure.
pub fn local_update(state: &VsgdState, g_hat: &[f64]) -> Result<LocalPosterior> {
    check_len(state.len(), g_hat.len())?;
    check_finite("g_hat", g_hat)?;
    if !(state.a > 0.0) {
        return Err(Error::Precondition(format!("shape a must be > 0, got {}", state.a)));
    }
    let mut mu = Vec::with_capacity(g_hat.len());
    let mut sigma2 = Vec::with_capacity(g_hat.len());
    for i in 0..g_hat.len() {
        let (bg, bh) = (state.b_g[i], state.b_ghat[i]);
        if !(bg > 0.0 && bh > 0.0) {
            return Err(Error::Precondition(format!(
                "rates must be > 0 (b_g[{i}]={bg}, b_ghat[{i}]={bh})"
            )));
        }
        let e = element_update(state.mu_g[i], g_hat[i], bg, bh, 1.0 / state.a, 0.0, 0.0);
        mu.push(e.mu);
        sigma2.push(e.sigma2);
    }
    Ok(LocalPosterior { mu, sigma2 })
}

/// Intermediate global parameters from the fresh local posterior.
pub fn global_intermediate(
    mu_new: &[f64],
    sigma2: &[f64],
    mu_prev: &[f64],
    g_hat: &[f64],
    hp: &HyperParams,
) -> Result<GlobalIntermediate> {
    let n = mu_new.len();
    check_len(n, sigma2.len())?;
    check_len(n, mu_prev.len())?;
    check_len(n, g_hat.len())?;
    if let Some(i) = sigma2.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::Precondition(format!("sigma2[{i}] must be > 0")));
    }
    let prior_ghat = hp.k_g * hp.gamma;
    let b_g_prime = (0..n)
        .map(|i| rate_prime(hp.gamma, sigma2[i], mu_new[i] - mu_prev[i]))
        .collect();
    let b_ghat_prime = (0..n)
        .map(|i| rate_prime(prior_ghat, sigma2[i], mu_new[i] - g_hat[i]))
        .collect();
    Ok(GlobalIntermediate {
        a_prime: hp.gamma + 0.5,
        b_g_prime,
        b_ghat_prime,
    })
}

/// Interpolates the rates towards their intermediate values. Only the rates
/// change; `t`, `a` and `mu_g` are left to the caller.
pub fn global_interpolate(
    state: &VsgdState,
    b_g_prime: &[f64],
    b_ghat_prime: &[f64],
    rho1: f64,
    rho2: f64,
) -> Result<VsgdState> {
    check_rho("rho1", rho1)?;
    check_rho("rho2", rho2)?;
    check_len(state.len(), b_g_prime.len())?;
    check_len(state.len(), b_ghat_prime.len())?;
    let mut next = state.clone();
    for i in 0..state.len() {
        next.b_g[i] = interpolate(state.b_g[i], b_g_prime[i], rho1);
        next.b_ghat[i] = interpolate(state.b_ghat[i], b_ghat_prime[i], rho2);
    }
    Ok(next)
}

/// Parameter step scaled by the local Lipschitz estimate `sqrt(μ² + σ²)`,
/// followed by decoupled weight decay on the pre-step parameters.
pub fn apply_step(theta: &[f64], mu: &[f64], sigma2: &[f64], hp: &HyperParams) -> Vec<f64> {
    theta
        .iter()
        .zip(mu.iter().zip(sigma2))
        .map(|(&th, (&m, &s2))| th + displacement(hp.eta, m, s2) - hp.eta * hp.weight_decay * th)
        .collect()
}

/// One full VSGD iteration. Pure: returns the new state and parameters.
pub fn vsgd_step(state: &VsgdState, input: StepInput<'_>, hp: &HyperParams) -> Result<(VsgdState, Vec<f64>)> {
    let mut next = state.clone();
    let mut theta = input.theta.to_vec();
    step_in_place(&mut next, &mut theta, input.g_hat, hp)?;
    Ok((next, theta))
}

/// Fused in-place form of [`vsgd_step`].
///
/// Each element runs the same kernels as the staged operations
/// ([`local_update`], [`global_intermediate`], [`global_interpolate`],
/// [`apply_step`]) in one pass over memory.
pub fn step_in_place(state: &mut VsgdState, theta: &mut [f64], g_hat: &[f64], hp: &HyperParams) -> Result<()> {
    let n = state.len();
    check_len(n, theta.len())?;
    check_len(n, g_hat.len())?;
    check_finite("g_hat", g_hat)?;
    let t = state.t + 1;
    let (rho1, rho2) = svi_rates(t, hp)?;
    let inv_a = 1.0 / state.a;
    let prior_ghat = hp.k_g * hp.gamma;
    let decay = hp.eta * hp.weight_decay;

    let VsgdState { mu_g, b_g, b_ghat, .. } = state;
    let elements = mu_g.iter_mut().zip(b_g.iter_mut()).zip(b_ghat.iter_mut()).zip(theta.iter_mut()).zip(g_hat);
    for ((((mu, bg), bh), th), &g) in elements {
        let e = element_update(*mu, g, *bg, *bh, inv_a, hp.gamma, prior_ghat);
        *bg = interpolate(*bg, e.b_g_prime, rho1);
        *bh = interpolate(*bh, e.b_ghat_prime, rho2);
        *mu = e.mu;
        *th = *th + displacement(hp.eta, e.mu, e.sigma2) - decay * *th;
    }
    state.t = t;
    state.a = hp.gamma + 0.5;
    Ok(())
}

/// Local posterior and intermediate global parameters of the next step,
/// computed with the same kernel as [`vsgd_step`] but without interpolating.
pub fn one_pass(state: &VsgdState, g_hat: &[f64], hp: &HyperParams) -> Result<(LocalPosterior, GlobalIntermediate)> {
    check_len(state.len(), g_hat.len())?;
    check_finite("g_hat", g_hat)?;
    let inv_a = 1.0 / state.a;
    let prior_ghat = hp.k_g * hp.gamma;
    let n = state.len();
    let mut local = LocalPosterior { mu: Vec::with_capacity(n), sigma2: Vec::with_capacity(n) };
    let mut global = GlobalIntermediate {
        a_prime: hp.gamma + 0.5,
        b_g_prime: Vec::with_capacity(n),
        b_ghat_prime: Vec::with_capacity(n),
    };
    for i in 0..n {
        let e = element_update(state.mu_g[i], g_hat[i], state.b_g[i], state.b_ghat[i], inv_a, hp.gamma, prior_ghat);
        local.mu.push(e.mu);
        local.sigma2.push(e.sigma2);
        global.b_g_prime.push(e.b_g_prime);
        global.b_ghat_prime.push(e.b_ghat_prime);
    }
    Ok((local, global))
}

/// VSGD step that treats the `M` samples of a mini-batch separately: one
/// local mean per sample, rate contributions averaged over samples, and the
/// parameter step taken with the averaged mean.
pub fn minibatch_step<S: AsRef<[f64]>>(
    state: &VsgdState,
    theta: &[f64],
    samples: &[S],
    hp: &HyperParams,
) -> Result<(VsgdState, Vec<f64>)> {
    let Some((first, rest)) = samples.split_first() else {
        return Err(Error::Precondition("mini-batch must contain at least one sample".into()));
    };
    let n = state.len();
    check_len(n, theta.len())?;
    for s in samples {
        check_len(n, s.as_ref().len())?;
        check_finite("g_hat sample", s.as_ref())?;
    }
    let t = state.t + 1;
    let (rho1, rho2) = svi_rates(t, hp)?;
    let m = samples.len() as f64;
    let prior_ghat = hp.k_g * hp.gamma;

    let inv_a = 1.0 / state.a;
    let mut next = state.clone();
    let mut theta_next = theta.to_vec();
    for i in 0..n {
        let (bg, bh, mu_prev) = (state.b_g[i], state.b_ghat[i], state.mu_g[i]);
        let update = |g: f64| element_update(mu_prev, g, bg, bh, inv_a, hp.gamma, prior_ghat);
        let mut acc = update(first.as_ref()[i]);
        for s in rest {
            let e = update(s.as_ref()[i]);
            acc.mu += e.mu;
            acc.b_g_prime += e.b_g_prime;
            acc.b_ghat_prime += e.b_ghat_prime;
        }
        if !rest.is_empty() {
            acc.mu /= m;
            acc.b_g_prime /= m;
            acc.b_ghat_prime /= m;
        }
        next.b_g[i] = interpolate(bg, acc.b_g_prime, rho1);
        next.b_ghat[i] = interpolate(bh, acc.b_ghat_prime, rho2);
        next.mu_g[i] = acc.mu;
        let th = theta[i];
        theta_next[i] = th + displacement(hp.eta, acc.mu, acc.sigma2) - hp.eta * hp.weight_decay * th;
    }
    next.t = t;
    next.a = hp.gamma + 0.5;
    Ok((next, theta_next))
}

/// Stateful VSGD optimizer for the harness.
#[derive(Debug, Clone)]
pub struct Vsgd {
    pub hp: HyperParams,
    pub state: VsgdState,
}

impl Vsgd {
    pub fn new(param_count: usize, hp: HyperParams) -> Result<Self> {
        Ok(Self {
            state: init(param_count, &hp)?,
            hp,
        })
    }
}

impl Optimizer for Vsgd {
    fn name(&self) -> &'static str {
        "vsgd"
    }

    fn dim(&self) -> usize {
        self.state.len()
    }

    fn learning_rate(&self) -> f64 {
        self.hp.eta
    }

    fn set_learning_rate(&mut self, lr: f64) {
        self.hp.eta = lr;
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<()> {
        step_in_place(&mut self.state, theta, grad, &self.hp)
    }

    fn summary(&self) -> StateSummary {
        let s = &self.state;
        let sigma2 = s.sigma2();
        StateSummary {
            mean_b_g: Some(optim::mean(&s.b_g)),
            mean_b_ghat: Some(optim::mean(&s.b_ghat)),
            mean_sigma2: (s.t > 0).then(|| optim::mean(&sigma2)),
            min_positive: Some(optim::min(&s.b_g).min(optim::min(&s.b_ghat)).min(optim::min(&sigma2))),
            shape: Some(s.a),
        }
    }
}
