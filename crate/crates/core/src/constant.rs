//! Constant VSGD: a single Gamma precision `ω` for the observation noise and
//! the systematic variance pinned to `1/K_g` of it.
//!
//! With the variance ratio fixed, the first-moment weights are the constants
//! `{K_g/(K_g+1), 1/(K_g+1)}`, which makes the method directly comparable to
//! Adam (`K_g = β₁/(1-β₁)`) and to SGD with momentum (`K_g = λ/η`).

use crate::error::{check_finite, check_len, Error, Result};
use crate::optim::{self, Optimizer, StateSummary};
use crate::vsgd::{displacement, interpolate, kappa_range, non_negative, positive};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantVsgdConfig {
    pub eta: f64,
    pub gamma: f64,
    pub k_g: f64,
    /// Single SVI exponent, `ρ_t = t^-κ`.
    pub kappa: f64,
    pub weight_decay: f64,
}

impl Default for ConstantVsgdConfig {
    fn default() -> Self {
        Self {
            eta: 0.01,
            gamma: 1e-8,
            k_g: 30.0,
            kappa: 0.81,
            weight_decay: 0.0,
        }
    }
}

impl ConstantVsgdConfig {
    pub fn validate(&self) -> Result<()> {
        positive("eta", self.eta)?;
        positive("gamma", self.gamma)?;
        positive("k_g", self.k_g)?;
        kappa_range("kappa", self.kappa)?;
        non_negative("weight_decay", self.weight_decay)
    }

    /// `(K_g/(K_g+1), 1/(K_g+1))`. The second weight is formed as the
    /// complement of the first so the pair sums to exactly one.
    pub fn weights(&self) -> (f64, f64) {
        let keep = self.k_g / (self.k_g + 1.0);
        (keep, 1.0 - keep)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantVsgdState {
    pub t: u64,
    pub mu_g: Vec<f64>,
    pub b_ghat: Vec<f64>,
    pub a_ghat: f64,
}

impl ConstantVsgdState {
    pub fn len(&self) -> usize {
        self.mu_g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu_g.is_empty()
    }
}

pub fn init(param_count: usize, cfg: &ConstantVsgdConfig) -> Result<ConstantVsgdState> {
    if param_count == 0 {
        return Err(Error::Precondition("param_count must be >= 1".into()));
    }
    cfg.validate()?;
    Ok(ConstantVsgdState {
        t: 0,
        mu_g: vec![0.0; param_count],
        b_ghat: vec![cfg.gamma; param_count],
        a_ghat: cfg.gamma,
    })
}

/// Local posterior of one element: `(μ_t, σ²_t)`.
#[inline(always)]
fn local(mu_prev: f64, g_hat: f64, b_ghat: f64, a_ghat: f64, cfg: &ConstantVsgdConfig) -> (f64, f64) {
    let (keep, take) = cfg.weights();
    let mu = keep * mu_prev + take * g_hat;
    let sigma2 = b_ghat / (a_ghat * (cfg.k_g + 1.0));
    (mu, sigma2)
}

/// Combined squared disturbance feeding the rate update.
#[inline(always)]
fn disturbance(mu: f64, mu_prev: f64, g_hat: f64, sigma2: f64, cfg: &ConstantVsgdConfig) -> f64 {
    let obs = mu - g_hat;
    let sys = mu - mu_prev;
    cfg.gamma + 0.5 * (sigma2 + obs * obs) + 0.5 * cfg.k_g * (sigma2 + sys * sys)
}

/// One Constant VSGD iteration. Pure.
pub fn cvsgd_step(
    state: &ConstantVsgdState,
    theta: &[f64],
    g_hat: &[f64],
    cfg: &ConstantVsgdConfig,
) -> Result<(ConstantVsgdState, Vec<f64>)> {
    let mut next = state.clone();
    let mut theta = theta.to_vec();
    step_in_place(&mut next, &mut theta, g_hat, cfg)?;
    Ok((next, theta))
}

pub fn step_in_place(
    state: &mut ConstantVsgdState,
    theta: &mut [f64],
    g_hat: &[f64],
    cfg: &ConstantVsgdConfig,
) -> Result<()> {
    let n = state.len();
    check_len(n, theta.len())?;
    check_len(n, g_hat.len())?;
    check_finite("g_hat", g_hat)?;
    let t = state.t + 1;
    let rho = (t as f64).powf(-cfg.kappa);
    let a = state.a_ghat;
    let decay = cfg.eta * cfg.weight_decay;
    for i in 0..n {
        let (mu_prev, g, b) = (state.mu_g[i], g_hat[i], state.b_ghat[i]);
        let (mu, sigma2) = local(mu_prev, g, b, a, cfg);
        state.b_ghat[i] = interpolate(b, disturbance(mu, mu_prev, g, sigma2, cfg), rho);
        state.mu_g[i] = mu;
        let th = theta[i];
        let mut moved = th + displacement(cfg.eta, mu, sigma2);
        if decay > 0.0 {
            moved -= decay * th;
        }
        theta[i] = moved;
    }
    state.t = t;
    state.a_ghat = cfg.gamma + 1.0;
    Ok(())
}

/// `K_g` under which the first-moment recursion coincides with Adam's
/// `m_t = β₁ m_{t-1} + (1-β₁) ĝ_t`.
pub fn adam_first_moment_equivalence(beta1: f64) -> Result<f64> {
    if !(beta1 > 0.0 && beta1 < 1.0) {
        return Err(Error::Config(format!("beta1 must lie in (0, 1), got {beta1}")));
    }
    Ok(beta1 / (1.0 - beta1))
}

/// `K_g` under which the first-moment recursion is proportional to the SGD
/// momentum velocity `v_t = λ v_{t-1} + η ĝ_t` (scale factor `λ + η`).
pub fn sgdm_equivalence(lambda: f64, eta: f64) -> Result<f64> {
    positive("lambda", lambda)?;
    positive("eta", eta)?;
    Ok(lambda / eta)
}

/// The two parts of `E[g_t²] = μ_t² + σ²_t` before the step is taken.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondMomentParts {
    /// Weighted sum of the previous squared mean and `ĝ²`, Adam's `v_t` shape.
    pub adam_like: Vec<f64>,
    /// Cross term `2K_g/(K_g+1)² μ_{t-1} ĝ_t`; negative when the signs disagree.
    pub cross: Vec<f64>,
    /// `1/(K_g+1) · b_{t-1,ĝ}/a_{t-1}`: the learned share of observation noise.
    pub noise: Vec<f64>,
}

impl SecondMomentParts {
    /// `cross + noise`.
    pub fn extra(&self) -> Vec<f64> {
        self.cross.iter().zip(&self.noise).map(|(c, n)| c + n).collect()
    }
}

pub fn second_moment_decomposition(
    state: &ConstantVsgdState,
    g_hat: &[f64],
    cfg: &ConstantVsgdConfig,
) -> Result<SecondMomentParts> {
    check_len(state.len(), g_hat.len())?;
    check_finite("g_hat", g_hat)?;
    let k = cfg.k_g;
    let denom = (k + 1.0) * (k + 1.0);
    let mut parts = SecondMomentParts {
        adam_like: Vec::with_capacity(g_hat.len()),
        cross: Vec::with_capacity(g_hat.len()),
        noise: Vec::with_capacity(g_hat.len()),
    };
    for (i, &g) in g_hat.iter().enumerate() {
        let m = state.mu_g[i];
        parts.adam_like.push(m * m * k * k / denom + g * g / denom);
        parts.cross.push(2.0 * k / denom * m * g);
        parts.noise.push(state.b_ghat[i] / (state.a_ghat * (k + 1.0)));
    }
    Ok(parts)
}

#[derive(Debug, Clone)]
pub struct ConstantVsgd {
    pub cfg: ConstantVsgdConfig,
    pub state: ConstantVsgdState,
}

impl ConstantVsgd {
    pub fn new(param_count: usize, cfg: ConstantVsgdConfig) -> Result<Self> {
        Ok(Self {
            state: init(param_count, &cfg)?,
            cfg,
        })
    }
}

impl Optimizer for ConstantVsgd {
    fn name(&self) -> &'static str {
        "constant-vsgd"
    }

    fn dim(&self) -> usize {
        self.state.len()
    }

    fn learning_rate(&self) -> f64 {
        self.cfg.eta
    }

    fn set_learning_rate(&mut self, lr: f64) {
        self.cfg.eta = lr;
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<()> {
        step_in_place(&mut self.state, theta, grad, &self.cfg)
    }

    fn summary(&self) -> StateSummary {
        let s = &self.state;
        let scale = 1.0 / (s.a_ghat * (self.cfg.k_g + 1.0));
        let mean_b = optim::mean(&s.b_ghat);
        let min_b = optim::min(&s.b_ghat);
        StateSummary {
            mean_b_g: None,
            mean_b_ghat: Some(mean_b),
            mean_sigma2: (s.t > 0).then_some(mean_b * scale),
            min_positive: Some(min_b.min(min_b * scale)),
            shape: Some(s.a_ghat),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(mu: f64, b: f64, a: f64) -> ConstantVsgdState {
        ConstantVsgdState { t: 0, mu_g: vec![mu], b_ghat: vec![b], a_ghat: a }
    }

    #[test]
    fn fixed_weights() {
        let cfg = ConstantVsgdConfig::default();
        let (s, _) = cvsgd_step(&one(31.0, 1.0, 1.0), &[0.0], &[0.0], &cfg).unwrap();
        assert!((s.mu_g[0] - 30.0).abs() < 1e-12);
        let (s, _) = cvsgd_step(&one(-2.5, 1.0, 1.0), &[0.0], &[-2.5], &cfg).unwrap();
        assert_eq!(s.mu_g[0], -2.5);
        let (keep, take) = cfg.weights();
        assert_eq!(keep + take, 1.0);
    }

    #[test]
    fn variance_uses_previous_rate_and_shape() {
        let cfg = ConstantVsgdConfig { gamma: 1e-300, k_g: 30.0, ..Default::default() };
        let (mu, sigma2) = local(0.0, 0.0, 3.1, 1.0, &cfg);
        assert_eq!(mu, 0.0);
        assert!((sigma2 - 0.1).abs() < 1e-15);
    }

    #[test]
    fn shape_becomes_gamma_plus_one() {
        let cfg = ConstantVsgdConfig::default();
        let s = init(2, &cfg).unwrap();
        assert_eq!((s.a_ghat, s.b_ghat[0]), (cfg.gamma, cfg.gamma));
        let (s, _) = cvsgd_step(&s, &[0.0, 0.0], &[1.0, -1.0], &cfg).unwrap();
        assert_eq!(s.a_ghat, cfg.gamma + 1.0);
        assert!(s.b_ghat.iter().all(|&b| b > 0.0));
    }

    #[test]
    fn adam_k_g() {
        assert!((adam_first_moment_equivalence(0.9).unwrap() - 9.0).abs() < 1e-14);
        assert_eq!(adam_first_moment_equivalence(0.5).unwrap(), 1.0);
        for bad in [0.0, 1.0, -0.2, f64::NAN] {
            assert!(matches!(adam_first_moment_equivalence(bad), Err(Error::Config(_))));
        }
    }

    #[test]
    fn decomposition_examples() {
        let cfg = ConstantVsgdConfig { k_g: 3.0, ..Default::default() };
        let p = second_moment_decomposition(&one(0.0, 2.0, 1.0), &[2.0], &cfg).unwrap();
        assert_eq!(p.adam_like[0], 4.0 / 16.0);
        assert_eq!(p.cross[0], 0.0);

        let cfg = ConstantVsgdConfig { k_g: 1.0, ..Default::default() };
        let p = second_moment_decomposition(&one(1.0, 2.0, 1.0), &[-1.0], &cfg).unwrap();
        assert_eq!(p.cross[0], -0.5);
    }

    #[test]
    fn amsgrad_style_memory_unrolls() {
        // b_t = Π(1-ρ) b_0 + Σ_s ρ_s Π_{r>s}(1-ρ_r) s_s
        let cfg = ConstantVsgdConfig { kappa: 0.7, ..Default::default() };
        let grads = [0.3, -1.2, 0.8, 2.0, -0.1, 0.0, 0.5, -0.7, 1.1, 0.4];
        let mut state = init(1, &cfg).unwrap();
        let mut theta = [0.0];
        let mut s_values = Vec::new();
        let mut rhos = Vec::new();
        for (k, &g) in grads.iter().enumerate() {
            let t = (k + 1) as f64;
            let (mu, sigma2) = local(state.mu_g[0], g, state.b_ghat[0], state.a_ghat, &cfg);
            s_values.push(disturbance(mu, state.mu_g[0], g, sigma2, &cfg));
            rhos.push(t.powf(-cfg.kappa));
            step_in_place(&mut state, &mut theta, &[g], &cfg).unwrap();
        }
        let mut unrolled = cfg.gamma * rhos.iter().map(|r| 1.0 - r).product::<f64>();
        for s in 0..grads.len() {
            let tail: f64 = rhos[s + 1..].iter().map(|r| 1.0 - r).product();
            unrolled += rhos[s] * tail * s_values[s];
        }
        assert!((unrolled - state.b_ghat[0]).abs() <= 1e-12 * unrolled.abs());
    }
}
