//! Brute-force reference for the closed-form VSGD updates.
//!
//! For a single observation `ĝ` with control variate `u = μ_{t-1}` the
//! mean-field model is
//!
//! ```text
//! w_g ~ Γ(γ, γ)      w_ĝ ~ Γ(γ, K_g γ)
//! g | w_g ~ N(u, 1/w_g)      ĝ | g, w_ĝ ~ N(g, 1/w_ĝ)
//! q(g) q(w_g) q(w_ĝ) = N(μ, σ²) Γ(a_g, b_g) Γ(a_ĝ, b_ĝ)
//! ```
//!
//! Each coordinate update is written in natural-parameter form: the Gaussian
//! factor accumulates expected precisions, the Gamma factors accumulate
//! `(½, ½ E[residual²])` on top of the prior's `(shape - 1, rate)`. The
//! replicate count of the observation is fixed to one.
//!
//! [`coordinate_ascent_fixed_point`] alternates the two updates to a fixed
//! point and records every iterate; [`elbo`] evaluates the objective
//! analytically so the ascent can be checked for monotonicity.

use crate::error::{Error, Result};
use crate::special::{digamma, ln_gamma};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// One single-observation problem: previous mean, observation, previous
/// global parameters and the prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleInput {
    pub mu_prev: f64,
    pub g_hat: f64,
    /// Shared shape of `q(w_g)` and `q(w_ĝ)` before the update.
    pub a: f64,
    pub b_g: f64,
    pub b_ghat: f64,
    pub gamma: f64,
    pub k_g: f64,
}

/// Full mean-field state: `q(g)` plus both Gamma factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Factors {
    pub mu: f64,
    pub sigma2: f64,
    pub a_g: f64,
    pub b_g: f64,
    pub a_ghat: f64,
    pub b_ghat: f64,
}

/// Values after one local pass followed by one global pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnePass {
    pub mu: f64,
    pub sigma2: f64,
    pub a_prime: f64,
    pub b_g_prime: f64,
    pub b_ghat_prime: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub mu: f64,
    pub sigma2: f64,
    pub a_prime: f64,
    pub b_g_prime: f64,
    pub b_ghat_prime: f64,
    pub iterations: usize,
    /// Largest scaled change `|Δx| / max(1, |x|)` over all parameters in
    /// the final sweep.
    pub residual: f64,
    pub first_pass: OnePass,
    /// State after every coordinate update, starting with the first local
    /// update against the input's global parameters.
    pub iterates: Vec<Factors>,
}

/// Gaussian factor from the current Gamma factors.
///
/// Natural parameters: precision `P = E[w_g] + E[w_ĝ]` and
/// `P μ = E[w_g] u + E[w_ĝ] ĝ`.
fn update_gaussian(input: &OracleInput, f: &Factors) -> Factors {
    let lam_g = f.a_g / f.b_g;
    let lam_ghat = f.a_ghat / f.b_ghat;
    let precision = lam_g + lam_ghat;
    Factors {
        mu: (lam_g * input.mu_prev + lam_ghat * input.g_hat) / precision,
        sigma2: 1.0 / precision,
        ..*f
    }
}

/// Residuals `(μ - u, μ - ĝ)` of the current Gaussian factor, formed without
/// cancellation from the current expected precisions.
fn residuals(input: &OracleInput, lam_g: f64, lam_ghat: f64) -> (f64, f64) {
    let d = input.g_hat - input.mu_prev;
    let precision = lam_g + lam_ghat;
    (lam_ghat * d / precision, -lam_g * d / precision)
}

/// Gamma factors from the current Gaussian factor.
///
/// Natural parameters `(shape - 1, -rate)`: prior `(γ - 1, -γ)` (resp.
/// `-K_g γ`) plus one Gaussian likelihood term contributing
/// `(½, -½ E[(x - m)²])`.
fn update_gammas(input: &OracleInput, f: &Factors, prev: &Factors) -> Factors {
    // the Gaussian factor was built from `prev`'s precisions
    let (sys, obs) = residuals(input, prev.a_g / prev.b_g, prev.a_ghat / prev.b_ghat);
    let nat_shape = (input.gamma - 1.0) + 0.5;
    let e_sys = f.sigma2 + sys * sys;
    let e_obs = f.sigma2 + obs * obs;
    Factors {
        a_g: nat_shape + 1.0,
        b_g: input.gamma + 0.5 * e_sys,
        a_ghat: nat_shape + 1.0,
        b_ghat: input.k_g * input.gamma + 0.5 * e_obs,
        ..*f
    }
}

fn initial(input: &OracleInput) -> Factors {
    Factors {
        mu: input.mu_prev,
        sigma2: f64::NAN,
        a_g: input.a,
        b_g: input.b_g,
        a_ghat: input.a,
        b_ghat: input.b_ghat,
    }
}

fn validate(input: &OracleInput) -> Result<()> {
    let named = [
        ("mu_prev", input.mu_prev),
        ("g_hat", input.g_hat),
        ("a", input.a),
        ("b_g", input.b_g),
        ("b_ghat", input.b_ghat),
        ("gamma", input.gamma),
        ("k_g", input.k_g),
    ];
    if let Some((name, v)) = named.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Numeric(format!("{name} is not finite ({v})")));
    }
    if let Some((name, v)) = named[2..].iter().find(|(_, v)| *v <= 0.0) {
        return Err(Error::Precondition(format!("{name} must be > 0, got {v}")));
    }
    Ok(())
}

/// One local update followed by one global update.
pub fn first_pass(input: &OracleInput) -> Result<OnePass> {
    validate(input)?;
    let start = initial(input);
    let local = update_gaussian(input, &start);
    let global = update_gammas(input, &local, &start);
    Ok(OnePass {
        mu: local.mu,
        sigma2: local.sigma2,
        a_prime: global.a_g,
        b_g_prime: global.b_g,
        b_ghat_prime: global.b_ghat,
    })
}

fn scaled_change(old: f64, new: f64) -> f64 {
    (new - old).abs() / new.abs().max(1.0)
}

fn max_change(a: &Factors, b: &Factors) -> f64 {
    [
        scaled_change(a.mu, b.mu),
        scaled_change(a.sigma2, b.sigma2),
        scaled_change(a.a_g, b.a_g),
        scaled_change(a.b_g, b.b_g),
        scaled_change(a.a_ghat, b.a_ghat),
        scaled_change(a.b_ghat, b.b_ghat),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// The first local update and then `sweeps` alternating global/local pairs,
/// without a stopping rule.
pub fn ascent_iterates(input: &OracleInput, sweeps: usize) -> Result<Vec<Factors>> {
    validate(input)?;
    let start = initial(input);
    let mut local = update_gaussian(input, &start);
    let mut global = update_gammas(input, &local, &start);
    let mut iterates = vec![local, global];
    for _ in 1..sweeps {
        local = update_gaussian(input, &global);
        global = update_gammas(input, &local, &global);
        iterates.push(local);
        iterates.push(global);
    }
    Ok(iterates)
}

/// Alternates local and global updates until a full sweep changes no
/// parameter by more than `tol` (scaled by `max(1, |x|)`).
pub fn coordinate_ascent_fixed_point(input: &OracleInput, tol: f64, max_iter: usize) -> Result<OracleResult> {
    validate(input)?;
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!("tol must be > 0, got {tol}")));
    }
    let first = first_pass(input)?;
    let start = initial(input);
    let mut local = update_gaussian(input, &start);
    let mut global = update_gammas(input, &local, &start);
    let mut iterates = vec![local, global];
    let mut residual = f64::INFINITY;
    let mut iterations = 1;
    while iterations < max_iter {
        let next_local = update_gaussian(input, &global);
        let next_global = update_gammas(input, &next_local, &global);
        residual = max_change(&global, &next_global);
        iterates.push(next_local);
        iterates.push(next_global);
        local = next_local;
        global = next_global;
        iterations += 1;
        if residual < tol {
            return Ok(OracleResult {
                mu: local.mu,
                sigma2: local.sigma2,
                a_prime: global.a_g,
                b_g_prime: global.b_g,
                b_ghat_prime: global.b_ghat,
                iterations,
                residual,
                first_pass: first,
                iterates,
            });
        }
    }
    Err(Error::NonConvergence { iterations, residual })
}

/// Expected log density of `Γ(shape, rate)` under `q(w) = Γ(a, b)`.
fn expected_log_gamma_pdf(shape: f64, rate: f64, a: f64, b: f64) -> f64 {
    let e_ln_w = digamma(a) - b.ln();
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * e_ln_w - rate * (a / b)
}

fn gamma_entropy(a: f64, b: f64) -> f64 {
    a - b.ln() + ln_gamma(a) + (1.0 - a) * digamma(a)
}

/// Expected log Gaussian likelihood with precision `w ~ Γ(a, b)` and
/// expected squared residual `e_sq`.
fn expected_log_normal_pdf(a: f64, b: f64, e_sq: f64) -> f64 {
    0.5 * (digamma(a) - b.ln()) - 0.5 * LN_2PI - 0.5 * (a / b) * e_sq
}

/// Evidence lower bound of the single-observation model at `f`, evaluated
/// in closed form.
pub fn elbo(input: &OracleInput, f: &Factors) -> f64 {
    let sys = f.mu - input.mu_prev;
    let obs = f.mu - input.g_hat;
    let prior = expected_log_gamma_pdf(input.gamma, input.gamma, f.a_g, f.b_g)
        + expected_log_gamma_pdf(input.gamma, input.k_g * input.gamma, f.a_ghat, f.b_ghat);
    let likelihood = expected_log_normal_pdf(f.a_g, f.b_g, f.sigma2 + sys * sys)
        + expected_log_normal_pdf(f.a_ghat, f.b_ghat, f.sigma2 + obs * obs);
    let entropy = 0.5 * (LN_2PI + 1.0 + f.sigma2.ln()) + gamma_entropy(f.a_g, f.b_g) + gamma_entropy(f.a_ghat, f.b_ghat);
    prior + likelihood + entropy
}

/// `true` when the ELBO never decreases by more than `slack` along the
/// iterates.
pub fn elbo_increase_check(input: &OracleInput, iterates: &[Factors], slack: f64) -> bool {
    let values: Vec<f64> = iterates.iter().map(|f| elbo(input, f)).collect();
    values.iter().all(|v| v.is_finite()) && values.windows(2).all(|w| w[1] >= w[0] - slack)
}
