//! Reference optimizers: SGD, SGD with momentum, Adam, AMSGrad and
//! Normalized SGD.

use crate::error::{check_finite, check_len, Error, Result};
use crate::optim::{Optimizer, StateSummary};
use crate::vsgd::{non_negative, positive};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Added to `sqrt(ṽ)`. Zero gives the textbook update exactly.
    pub eps: f64,
    /// Decoupled weight decay (AdamW).
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            eta: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        positive("eta", self.eta)?;
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        non_negative("eps", self.eps)?;
        non_negative("weight_decay", self.weight_decay)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Running maximum of `v`; only advanced by AMSGrad.
    pub v_hat_max: Vec<f64>,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        Self {
            t: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            v_hat_max: vec![0.0; param_count],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

fn adam_like_step(
    state: &mut AdamState,
    theta: &mut [f64],
    g_hat: &[f64],
    cfg: &AdamConfig,
    amsgrad: bool,
) -> Result<()> {
    let n = state.len();
    check_len(n, theta.len())?;
    check_len(n, g_hat.len())?;
    check_finite("g_hat", g_hat)?;
    let t = state.t + 1;
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    let decay = cfg.eta * cfg.weight_decay;
    for i in 0..n {
        let g = g_hat[i];
        let m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        let second = if amsgrad {
            let vmax = state.v_hat_max[i].max(v);
            state.v_hat_max[i] = vmax;
            vmax
        } else {
            v
        };
        let m_tilde = m / bc1;
        let v_tilde = second / bc2;
        let denom = v_tilde.sqrt() + cfg.eps;
        let th = theta[i];
        let mut moved = if m_tilde == 0.0 { th } else { th - cfg.eta * m_tilde / denom };
        if decay > 0.0 {
            moved -= decay * th;
        }
        theta[i] = moved;
    }
    state.t = t;
    Ok(())
}

/// Bias-corrected Adam step. Pure.
pub fn adam_step(state: &AdamState, theta: &[f64], g_hat: &[f64], cfg: &AdamConfig) -> Result<(AdamState, Vec<f64>)> {
    let mut next = state.clone();
    let mut theta = theta.to_vec();
    adam_like_step(&mut next, &mut theta, g_hat, cfg, false)?;
    Ok((next, theta))
}

/// AMSGrad: Adam with the running maximum of `v` in the denominator, bias
/// corrected by the same `1 - β₂ᵗ` factor as Adam.
pub fn amsgrad_step(state: &AdamState, theta: &[f64], g_hat: &[f64], cfg: &AdamConfig) -> Result<(AdamState, Vec<f64>)> {
    let mut next = state.clone();
    let mut theta = theta.to_vec();
    adam_like_step(&mut next, &mut theta, g_hat, cfg, true)?;
    Ok((next, theta))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdmConfig {
    pub eta: f64,
    /// Momentum coefficient `λ`.
    pub lambda: f64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub v: Vec<f64>,
}

/// `v_t = λ v_{t-1} + η ĝ_t`, `θ_t = θ_{t-1} - v_t`.
pub fn sgdm_step(state: &MomentumState, theta: &[f64], g_hat: &[f64], cfg: &SgdmConfig) -> Result<(MomentumState, Vec<f64>)> {
    let mut next = state.clone();
    let mut theta = theta.to_vec();
    sgdm_in_place(&mut next, &mut theta, g_hat, cfg)?;
    Ok((next, theta))
}

fn sgdm_in_place(state: &mut MomentumState, theta: &mut [f64], g_hat: &[f64], cfg: &SgdmConfig) -> Result<()> {
    check_len(state.v.len(), theta.len())?;
    check_len(state.v.len(), g_hat.len())?;
    check_finite("g_hat", g_hat)?;
    let decay = cfg.eta * cfg.weight_decay;
    for i in 0..theta.len() {
        let v = cfg.lambda * state.v[i] + cfg.eta * g_hat[i];
        state.v[i] = v;
        let th = theta[i];
        theta[i] = th - v - decay * th;
    }
    Ok(())
}

/// `θ - η sign(ĝ)`, leaving coordinates with `ĝ = 0` in place.
pub fn normalized_sgd_step(theta: &[f64], g_hat: &[f64], eta: f64) -> Result<Vec<f64>> {
    check_len(theta.len(), g_hat.len())?;
    check_finite("g_hat", g_hat)?;
    Ok(theta
        .iter()
        .zip(g_hat)
        .map(|(&th, &g)| if g == 0.0 { th } else { th - eta * g.signum() })
        .collect())
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub state: AdamState,
    amsgrad: bool,
}

impl Adam {
    pub fn new(param_count: usize, cfg: AdamConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, state: AdamState::new(param_count), amsgrad: false })
    }

    pub fn amsgrad(param_count: usize, cfg: AdamConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, state: AdamState::new(param_count), amsgrad: true })
    }
}

impl Optimizer for Adam {
    fn name(&self) -> &'static str {
        if self.amsgrad {
            "amsgrad"
        } else {
            "adam"
        }
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
        adam_like_step(&mut self.state, theta, grad, &self.cfg, self.amsgrad)
    }
}

/// Plain SGD (`λ = 0`) or SGD with momentum.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub cfg: SgdmConfig,
    pub state: MomentumState,
}

impl Sgd {
    pub fn new(param_count: usize, cfg: SgdmConfig) -> Result<Self> {
        positive("eta", cfg.eta)?;
        if !(0.0..1.0).contains(&cfg.lambda) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {}", cfg.lambda)));
        }
        non_negative("weight_decay", cfg.weight_decay)?;
        Ok(Self { cfg, state: MomentumState { v: vec![0.0; param_count] } })
    }
}

impl Optimizer for Sgd {
    fn name(&self) -> &'static str {
        if self.cfg.lambda == 0.0 {
            "sgd"
        } else {
            "sgdm"
        }
    }

    fn dim(&self) -> usize {
        self.state.v.len()
    }

    fn learning_rate(&self) -> f64 {
        self.cfg.eta
    }

    fn set_learning_rate(&mut self, lr: f64) {
        self.cfg.eta = lr;
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<()> {
        sgdm_in_place(&mut self.state, theta, grad, &self.cfg)
    }
}

#[derive(Debug, Clone)]
pub struct NormalizedSgd {
    pub eta: f64,
    pub dim: usize,
}

impl Optimizer for NormalizedSgd {
    fn name(&self) -> &'static str {
        "nsgd"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn learning_rate(&self) -> f64 {
        self.eta
    }

    fn set_learning_rate(&mut self, lr: f64) {
        self.eta = lr;
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<()> {
        check_len(self.dim, theta.len())?;
        let next = normalized_sgd_step(theta, grad, self.eta)?;
        theta.copy_from_slice(&next);
        Ok(())
    }

    fn summary(&self) -> StateSummary {
        StateSummary::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step() {
        let cfg = AdamConfig { eps: 0.0, ..Default::default() };
        let (s, th) = adam_step(&AdamState::new(1), &[0.0], &[1.0], &cfg).unwrap();
        assert!((s.m[0] - 0.1).abs() < 1e-15);
        assert!((s.m[0] / (1.0 - 0.9) - 1.0).abs() < 1e-12);
        // m̃ = ṽ^½ = 1 at t = 1
        assert!((th[0] + cfg.eta).abs() < 1e-15);
    }

    #[test]
    fn adam_zero_stream_is_still() {
        let cfg = AdamConfig::default();
        let mut s = AdamState::new(2);
        let mut th = vec![0.3, -0.4];
        for _ in 0..10 {
            let (s1, th1) = adam_step(&s, &th, &[0.0, 0.0], &cfg).unwrap();
            s = s1;
            th = th1;
        }
        assert_eq!(th, vec![0.3, -0.4]);
    }

    #[test]
    fn adam_bias_correction_recovers_constant() {
        let cfg = AdamConfig::default();
        let mut s = AdamState::new(1);
        let mut th = vec![0.0];
        for t in 1..=50 {
            let (s1, th1) = adam_step(&s, &th, &[2.5], &cfg).unwrap();
            s = s1;
            th = th1;
            let m_tilde = s.m[0] / (1.0 - 0.9f64.powi(t));
            assert!((m_tilde - 2.5).abs() < 1e-12, "t={t}: {m_tilde}");
        }
    }

    #[test]
    fn amsgrad_keeps_maximum() {
        let cfg = AdamConfig::default();
        let mut s = AdamState::new(1);
        let mut th = vec![0.0];
        let mut peak = 0.0f64;
        for g in [5.0, 1.0, 0.5, 0.1, 0.0] {
            let (s1, th1) = amsgrad_step(&s, &th, &[g], &cfg).unwrap();
            peak = peak.max(s1.v[0]);
            assert_eq!(s1.v_hat_max[0], peak);
            assert!(s1.v_hat_max[0] >= s.v_hat_max[0]);
            s = s1;
            th = th1;
        }
    }

    #[test]
    fn amsgrad_matches_adam_on_growing_v() {
        let cfg = AdamConfig::default();
        let (mut sa, mut sb) = (AdamState::new(1), AdamState::new(1));
        let (mut ta, mut tb) = (vec![0.0], vec![0.0]);
        for k in 1..=20 {
            let g = [k as f64];
            let (s1, t1) = adam_step(&sa, &ta, &g, &cfg).unwrap();
            let (s2, t2) = amsgrad_step(&sb, &tb, &g, &cfg).unwrap();
            assert!(s2.v[0] >= sb.v[0]);
            assert_eq!(t1, t2);
            (sa, ta, sb, tb) = (s1, t1, s2, t2);
        }
    }

    #[test]
    fn sgdm_examples() {
        let cfg = SgdmConfig { eta: 0.1, lambda: 0.0, weight_decay: 0.0 };
        let (_, th) = sgdm_step(&MomentumState { v: vec![0.0] }, &[1.0], &[3.0], &cfg).unwrap();
        assert!((th[0] - 0.7).abs() < 1e-15);

        let cfg = SgdmConfig { lambda: 0.9, ..cfg };
        let (s, th) = sgdm_step(&MomentumState { v: vec![0.0] }, &[0.0], &[1.0], &cfg).unwrap();
        let (s, _) = sgdm_step(&s, &th, &[1.0], &cfg).unwrap();
        assert!((s.v[0] - 0.19).abs() < 1e-15);
    }

    #[test]
    fn normalized_sgd_sign_step() {
        let th = normalized_sgd_step(&[0.0, 1.0, 2.0], &[-4.0, 0.0, 1e-9], 0.1).unwrap();
        assert_eq!(th, vec![0.1, 1.0, 1.9]);
    }

    #[test]
    fn config_validation() {
        assert!(Adam::new(1, AdamConfig { beta1: 1.0, ..Default::default() }).is_err());
        assert!(Sgd::new(1, SgdmConfig { eta: 0.1, lambda: 1.0, weight_decay: 0.0 }).is_err());
    }
}
