//! Second-order VSGD.
//!
//! Adds a latent curvature term `h` per element. The gradient prior is
//! centred on `μ_{t-1,g} + h`, and `h` itself is estimated from the relative
//! change of the gradient mean, `(ĝ_t - μ_{t-1,g}) / μ_{t-1,g}`. The
//! parameter step is scaled by `sqrt(E[h²])` rather than `sqrt(E[g²])`.
//!
//! The relative-change estimate is singular at `μ_{t-1,g} = 0` (always the
//! case at `t = 1`); its denominator is replaced by
//! `sign(μ) · max(|μ|, mu_guard_eps)`, with `sign(0) = +1`.

use crate::error::{check_finite, check_len, Error, Result};
use crate::optim::{self, Optimizer, StateSummary};
use crate::vsgd::{interpolate, kappa_range, non_negative, positive};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrderConfig {
    pub eta: f64,
    /// Prior strength `a⁽⁰⁾`, shared by all three Gamma priors.
    pub gamma: f64,
    pub k_g: f64,
    /// Prior variance ratio between the curvature and the gradient.
    pub k_h: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub mu_guard_eps: f64,
    pub weight_decay: f64,
}

impl Default for SecondOrderConfig {
    fn default() -> Self {
        Self {
            eta: 0.01,
            gamma: 1e-8,
            k_g: 30.0,
            k_h: 3.0,
            kappa1: 0.9,
            kappa2: 0.81,
            mu_guard_eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl SecondOrderConfig {
    pub fn validate(&self) -> Result<()> {
        positive("eta", self.eta)?;
        positive("gamma", self.gamma)?;
        positive("k_g", self.k_g)?;
        positive("k_h", self.k_h)?;
        kappa_range("kappa1", self.kappa1)?;
        kappa_range("kappa2", self.kappa2)?;
        non_negative("mu_guard_eps", self.mu_guard_eps)?;
        non_negative("weight_decay", self.weight_decay)
    }

    /// Interpolation rates of this variant: full replacement at `t = 1`,
    /// `(t+1)^-κ` afterwards.
    pub fn rates(&self, t: u64) -> Result<(f64, f64)> {
        match t {
            0 => Err(Error::Precondition("SVI iteration index starts at 1".into())),
            1 => Ok((1.0, 1.0)),
            _ => {
                let t1 = (t + 1) as f64;
                Ok((t1.powf(-self.kappa1), t1.powf(-self.kappa2)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderState {
    pub t: u64,
    pub mu_g: Vec<f64>,
    pub mu_h: Vec<f64>,
    pub b_h: Vec<f64>,
    pub b_g: Vec<f64>,
    pub b_ghat: Vec<f64>,
    pub a: f64,
}

impl SecondOrderState {
    pub fn len(&self) -> usize {
        self.mu_g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu_g.is_empty()
    }
}

pub fn init(param_count: usize, cfg: &SecondOrderConfig) -> Result<SecondOrderState> {
    if param_count == 0 {
        return Err(Error::Precondition("param_count must be >= 1".into()));
    }
    cfg.validate()?;
    Ok(SecondOrderState {
        t: 0,
        mu_g: vec![0.0; param_count],
        mu_h: vec![0.0; param_count],
        b_h: vec![cfg.k_h * cfg.gamma; param_count],
        b_g: vec![cfg.gamma; param_count],
        b_ghat: vec![cfg.k_g * cfg.gamma; param_count],
        a: cfg.gamma,
    })
}

/// Local posterior of one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementPosterior {
    pub mu_h: f64,
    pub sigma2_h: f64,
    pub mu_g: f64,
    pub sigma2_g: f64,
}

/// Previous per-element state needed for one local update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementPrior {
    pub mu_g: f64,
    pub mu_h: f64,
    pub b_h: f64,
    pub b_g: f64,
    pub b_ghat: f64,
    pub a: f64,
}

pub fn guarded_denominator(mu: f64, eps: f64) -> Result<f64> {
    let mag = mu.abs().max(eps);
    if mag == 0.0 {
        return Err(Error::Numeric(
            "relative gradient change divides by zero (mu_g = 0 and mu_guard_eps = 0)".into(),
        ));
    }
    Ok(if mu < 0.0 { -mag } else { mag })
}

pub fn local_update(prior: &ElementPrior, g_hat: f64, mu_guard_eps: f64) -> Result<ElementPosterior> {
    let ElementPrior { mu_g, mu_h, b_h, b_g, b_ghat, a } = *prior;
    let total = b_g + b_h + b_ghat;
    let ratio = (g_hat - mu_g) / guarded_denominator(mu_g, mu_guard_eps)?;
    Ok(ElementPosterior {
        mu_h: ratio * (b_h / total) + mu_h * ((b_g + b_ghat) / total),
        sigma2_h: b_h * b_g / (a * (b_h + b_g)),
        mu_g: g_hat * ((b_g + b_h) / total) + (mu_h + mu_g) * (b_ghat / total),
        sigma2_g: b_ghat * b_g / (a * (b_ghat + b_g)),
    })
}

/// Intermediate rates `(b'_h, b'_g, b'_ĝ)`.
pub fn rate_primes(prior: &ElementPrior, post: &ElementPosterior, g_hat: f64, cfg: &SecondOrderConfig) -> (f64, f64, f64) {
    let (ph, pg) = (prior.mu_h, prior.mu_g);
    let dh = post.mu_h - ph;
    let b_h = cfg.k_h * cfg.gamma + 0.5 * (post.sigma2_h + dh * dh);
    // E_q[(g - p_g - h)²] under the factorized posterior. Mixing p_h into
    // the cross terms with μ_h² in the square is not a square and can drive
    // the rate negative.
    let dg = post.mu_g - pg - post.mu_h;
    let b_g = cfg.gamma + 0.5 * (post.sigma2_g + post.sigma2_h + dg * dg);
    let dobs = post.mu_g - g_hat;
    let b_ghat = cfg.k_g * cfg.gamma + 0.5 * (post.sigma2_g + dobs * dobs);
    (b_h, b_g, b_ghat)
}

/// `-η μ_g / sqrt(μ_h² + σ²_h)`.
pub fn displacement(eta: f64, mu_g: f64, mu_h: f64, sigma2_h: f64) -> f64 {
    -eta * mu_g / (mu_h * mu_h + sigma2_h).sqrt()
}

pub fn so_vsgd_step(
    state: &SecondOrderState,
    theta: &[f64],
    g_hat: &[f64],
    cfg: &SecondOrderConfig,
) -> Result<(SecondOrderState, Vec<f64>)> {
    let mut next = state.clone();
    let mut theta = theta.to_vec();
    step_in_place(&mut next, &mut theta, g_hat, cfg)?;
    Ok((next, theta))
}

/// In-place step. On error neither `state` nor `theta` is modified.
pub fn step_in_place(
    state: &mut SecondOrderState,
    theta: &mut [f64],
    g_hat: &[f64],
    cfg: &SecondOrderConfig,
) -> Result<()> {
    let n = state.len();
    check_len(n, theta.len())?;
    check_len(n, g_hat.len())?;
    check_finite("g_hat", g_hat)?;
    if cfg.mu_guard_eps == 0.0 && state.mu_g.contains(&0.0) {
        guarded_denominator(0.0, 0.0)?;
    }
    let t = state.t + 1;
    let (rho1, rho2) = cfg.rates(t)?;
    let decay = cfg.eta * cfg.weight_decay;
    for i in 0..n {
        let prior = ElementPrior {
            mu_g: state.mu_g[i],
            mu_h: state.mu_h[i],
            b_h: state.b_h[i],
            b_g: state.b_g[i],
            b_ghat: state.b_ghat[i],
            a: state.a,
        };
        let post = local_update(&prior, g_hat[i], cfg.mu_guard_eps)?;
        let (bh, bg, bgh) = rate_primes(&prior, &post, g_hat[i], cfg);
        state.b_h[i] = interpolate(prior.b_h, bh, rho1);
        state.b_g[i] = interpolate(prior.b_g, bg, rho1);
        state.b_ghat[i] = interpolate(prior.b_ghat, bgh, rho2);
        state.mu_g[i] = post.mu_g;
        state.mu_h[i] = post.mu_h;
        let th = theta[i];
        let mut moved = th + displacement(cfg.eta, post.mu_g, post.mu_h, post.sigma2_h);
        if decay > 0.0 {
            moved -= decay * th;
        }
        theta[i] = moved;
    }
    state.t = t;
    state.a = cfg.gamma + 0.5;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SecondOrderVsgd {
    pub cfg: SecondOrderConfig,
    pub state: SecondOrderState,
}

impl SecondOrderVsgd {
    pub fn new(param_count: usize, cfg: SecondOrderConfig) -> Result<Self> {
        Ok(Self {
            state: init(param_count, &cfg)?,
            cfg,
        })
    }
}

impl Optimizer for SecondOrderVsgd {
    fn name(&self) -> &'static str {
        "so-vsgd"
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
        let sigma2_g: Vec<f64> = s
            .b_g
            .iter()
            .zip(&s.b_ghat)
            .map(|(&bg, &bh)| bh * bg / (s.a * (bh + bg)))
            .collect();
        let min_rate = optim::min(&s.b_g).min(optim::min(&s.b_ghat)).min(optim::min(&s.b_h));
        StateSummary {
            mean_b_g: Some(optim::mean(&s.b_g)),
            mean_b_ghat: Some(optim::mean(&s.b_ghat)),
            mean_sigma2: (s.t > 0).then(|| optim::mean(&sigma2_g)),
            min_positive: Some(min_rate.min(optim::min(&sigma2_g))),
            shape: Some(s.a),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_prior(mu_g: f64, mu_h: f64) -> ElementPrior {
        ElementPrior { mu_g, mu_h, b_h: 1.0, b_g: 1.0, b_ghat: 1.0, a: 1.0 }
    }

    #[test]
    fn curvature_mean_example() {
        let post = local_update(&unit_prior(1.0, 0.0), 2.0, 1e-8).unwrap();
        assert!((post.mu_h - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn consistent_observation_is_fixed_point() {
        let post = local_update(&unit_prior(0.8, 0.0), 0.8, 1e-8).unwrap();
        assert_eq!(post.mu_h, 0.0);
        assert!((post.mu_g - 0.8).abs() < 1e-15);
    }

    #[test]
    fn step_scales_by_curvature() {
        assert!((displacement(0.1, 1.0, 3.0, 16.0) + 0.02).abs() < 1e-15);
    }

    #[test]
    fn rate_schedule() {
        let cfg = SecondOrderConfig::default();
        assert_eq!(cfg.rates(1).unwrap(), (1.0, 1.0));
        let (r1, r2) = cfg.rates(2).unwrap();
        assert!((r1 - 3f64.powf(-0.9)).abs() < 1e-15 && (r2 - 3f64.powf(-0.81)).abs() < 1e-15);
        assert!(cfg.rates(0).is_err());
    }

    #[test]
    fn init_matches_prior() {
        let cfg = SecondOrderConfig { gamma: 2.0, ..Default::default() };
        let s = init(1, &cfg).unwrap();
        assert_eq!((s.b_h[0], s.b_g[0], s.b_ghat[0], s.a), (6.0, 2.0, 60.0, 2.0));
        assert_eq!((s.mu_g[0], s.mu_h[0]), (0.0, 0.0));
    }

    #[test]
    fn unguarded_zero_mean_is_an_error() {
        let cfg = SecondOrderConfig { mu_guard_eps: 0.0, ..Default::default() };
        let s = init(2, &cfg).unwrap();
        let r = so_vsgd_step(&s, &[0.0, 0.0], &[1.0, 1.0], &cfg);
        assert!(matches!(r, Err(Error::Numeric(_))));
        assert!(guarded_denominator(-0.0, 1e-8).unwrap() > 0.0);
        assert_eq!(guarded_denominator(-3.0, 1e-8).unwrap(), -3.0);
        assert_eq!(guarded_denominator(-1e-12, 1e-8).unwrap(), -1e-8);
    }

    #[test]
    fn systematic_rate_is_expected_squared_residual() {
        let cfg = SecondOrderConfig::default();
        let prior = ElementPrior { mu_g: 1.0, mu_h: 10.0, b_h: 1.0, b_g: 1.0, b_ghat: 1.0, a: cfg.gamma + 0.5 };
        let post = local_update(&prior, 1.0, cfg.mu_guard_eps).unwrap();
        let (_, b_g, _) = rate_primes(&prior, &post, 1.0, &cfg);
        let dg = post.mu_g - prior.mu_g - post.mu_h;
        assert_eq!(b_g, cfg.gamma + 0.5 * (post.sigma2_g + post.sigma2_h + dg * dg));
        assert!(b_g > 0.0);
    }

    #[test]
    fn large_curvature_state_stays_positive() {
        let cfg = SecondOrderConfig::default();
        let mut s = init(1, &cfg).unwrap();
        (s.t, s.mu_g[0], s.mu_h[0], s.b_h[0], s.b_g[0], s.b_ghat[0], s.a) = (5, 1.0, 10.0, 1.0, 1.0, 1.0, cfg.gamma + 0.5);
        let mut theta = vec![0.0];
        for _ in 0..100 {
            step_in_place(&mut s, &mut theta, &[1.0], &cfg).unwrap();
            assert!(s.b_h[0] > 0.0 && s.b_g[0] > 0.0 && s.b_ghat[0] > 0.0);
            assert!(theta[0].is_finite());
        }
    }

    #[test]
    fn vanishing_curvature_prior_freezes_mean() {
        let cfg = SecondOrderConfig { k_h: 1e-12, ..Default::default() };
        let mut s = init(1, &cfg).unwrap();
        s.mu_g[0] = 1.0;
        let mut theta = vec![1.0];
        for t in 0..100 {
            let g = 1.0 + 0.5 * ((t as f64) * 0.7).sin();
            step_in_place(&mut s, &mut theta, &[g], &cfg).unwrap();
            assert!(s.mu_h[0].abs() < 1e-6, "mu_h = {}", s.mu_h[0]);
        }
    }

    #[test]
    fn huge_curvature_rate_follows_ratio() {
        let prior = ElementPrior { mu_g: 1.0, mu_h: 0.0, b_h: 1e12, b_g: 1.0, b_ghat: 1.0, a: 1.0 };
        let post = local_update(&prior, 2.0, 1e-8).unwrap();
        assert!((post.mu_h - 1.0).abs() < 1e-11);
    }

    #[test]
    fn state_after_first_step() {
        let cfg = SecondOrderConfig::default();
        let s = init(1, &cfg).unwrap();
        let (s1, th) = so_vsgd_step(&s, &[1.0], &[0.5], &cfg).unwrap();
        assert_eq!(s1.t, 1);
        assert_eq!(s1.a, cfg.gamma + 0.5);
        assert!(th[0] < 1.0);
        assert!(s1.b_h[0] > 0.0 && s1.b_g[0] > 0.0 && s1.b_ghat[0] > 0.0);
    }
}
