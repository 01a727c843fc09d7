//! Property suites behind `vsgd verify`: oracle agreement, the optimizer
//! correspondences, the second-moment identity and state positivity.
//!
//! Each check draws its own seeded inputs and returns a [`CheckResult`]
//! carrying the worst observed deviation.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};

use crate::baselines::{self, AdamConfig, AdamState, MomentumState, SgdmConfig};
use crate::bench::{self, fill_standard_normal, BenchRng, OptimizerSpec, RunConfig, Scheduler};
use crate::constant::{self, ConstantVsgdConfig};
use crate::error::{Error, Result};
use crate::oracle::{self, OracleInput};
use crate::second_order::SecondOrderConfig;
use crate::vsgd::{self, HyperParams, VsgdState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Oracle,
    Adam,
    Nsgd,
    Sgdm,
    Decomposition,
    Positivity,
}

impl Suite {
    pub const ALL: [Suite; 6] = [Suite::Oracle, Suite::Adam, Suite::Nsgd, Suite::Sgdm, Suite::Decomposition, Suite::Positivity];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Oracle => "oracle",
            Suite::Adam => "adam",
            Suite::Nsgd => "nsgd",
            Suite::Sgdm => "sgdm",
            Suite::Decomposition => "decomposition",
            Suite::Positivity => "positivity",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite '{s}' (expected one of oracle, adam, nsgd, sgdm, decomposition, positivity, all)")))
    }
}

/// Deliberate defects for exercising the failure path of `verify`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Run the Adam identity with `K_g = 10` instead of `β₁/(1-β₁) = 9`.
    KgMismatch,
}

impl FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kg-mismatch" => Ok(Fault::KgMismatch),
            _ => Err(Error::Config(format!("unknown fault '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub suite: Suite,
    pub property: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn log_uniform(rng: &mut BenchRng, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.random_range(lo.log10()..hi.log10()))
}

/// Single-step oracle input with every parameter log-uniform in `[1e-8, 1e2]`.
pub fn random_oracle_input(rng: &mut BenchRng) -> OracleInput {
    let mut draw = || log_uniform(rng, 1e-8, 1e2);
    OracleInput {
        mu_prev: draw(),
        g_hat: draw(),
        a: draw(),
        b_g: draw(),
        b_ghat: draw(),
        gamma: draw(),
        k_g: draw(),
    }
}

/// Closed-form one-pass values against the oracle's first local + global pass.
pub fn oracle_agreement(cases: usize, seed: u64, tol: f64) -> Result<CheckResult> {
    let mut rng = BenchRng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let inp = random_oracle_input(&mut rng);
        let hp = HyperParams { gamma: inp.gamma, k_g: inp.k_g, ..HyperParams::default() };
        let state = VsgdState { t: 0, mu_g: vec![inp.mu_prev], b_g: vec![inp.b_g], b_ghat: vec![inp.b_ghat], a: inp.a };
        let (local, global) = vsgd::one_pass(&state, &[inp.g_hat], &hp)?;
        let o = oracle::first_pass(&inp)?;
        for (x, y) in [
            (local.mu[0], o.mu),
            (local.sigma2[0], o.sigma2),
            (global.a_prime, o.a_prime),
            (global.b_g_prime[0], o.b_g_prime),
            (global.b_ghat_prime[0], o.b_ghat_prime),
        ] {
            worst = worst.max(rel(x, y));
        }
    }
    Ok(CheckResult {
        suite: Suite::Oracle,
        property: "one-pass update equals oracle first pass",
        passed: worst <= tol,
        detail: format!("{cases} inputs, worst relative error {worst:e} (tol {tol:e})"),
    })
}

/// Analytic ELBO along `sweeps` coordinate-ascent sweeps never drops by
/// more than `slack`.
pub fn elbo_monotonicity(cases: usize, sweeps: usize, seed: u64, slack: f64) -> Result<CheckResult> {
    let mut rng = BenchRng::seed_from_u64(seed);
    let mut failures = 0;
    for _ in 0..cases {
        let inp = random_oracle_input(&mut rng);
        let iterates = oracle::ascent_iterates(&inp, sweeps)?;
        if !oracle::elbo_increase_check(&inp, &iterates, slack) {
            failures += 1;
        }
    }
    Ok(CheckResult {
        suite: Suite::Oracle,
        property: "ELBO nondecreasing along coordinate ascent",
        passed: failures == 0,
        detail: format!("{cases} inputs x {sweeps} sweeps, {failures} violations (slack {slack:e})"),
    })
}

fn gaussian_stream(rng: &mut BenchRng, len: usize) -> Vec<f64> {
    let mut g = vec![0.0; len];
    fill_standard_normal(rng, &mut g);
    g
}

/// Constant VSGD's mean with `K_g = β₁/(1-β₁)` against Adam's uncorrected
/// first moment, at every step of every stream.
pub fn adam_identity(streams: usize, len: usize, seed: u64, tol: f64, fault: Option<Fault>) -> Result<CheckResult> {
    let beta1 = 0.9;
    let mut k_g = constant::adam_first_moment_equivalence(beta1)?;
    if fault == Some(Fault::KgMismatch) {
        k_g += 1.0;
    }
    let ccfg = ConstantVsgdConfig { k_g, ..ConstantVsgdConfig::default() };
    let acfg = AdamConfig { beta1, ..AdamConfig::default() };
    let dim = 4;
    let mut rng = BenchRng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..streams {
        let mut cstate = constant::init(dim, &ccfg)?;
        let mut astate = AdamState::new(dim);
        let (mut th_c, mut th_a) = (vec![0.0; dim], vec![0.0; dim]);
        for _ in 0..len {
            let g = gaussian_stream(&mut rng, dim);
            constant::step_in_place(&mut cstate, &mut th_c, &g, &ccfg)?;
            let (next, th) = baselines::adam_step(&astate, &th_a, &g, &acfg)?;
            astate = next;
            th_a = th;
            for (m, mu) in astate.m.iter().zip(&cstate.mu_g) {
                worst = worst.max(rel(*m, *mu));
            }
        }
    }
    Ok(CheckResult {
        suite: Suite::Adam,
        property: "constant VSGD mean equals Adam first moment",
        passed: worst <= tol,
        detail: format!("K_g={k_g}, {streams} streams x {len} steps, worst relative error {worst:e} (tol {tol:e})"),
    })
}

/// VSGD with `γ = 1e12`, `K_g = 1e-12` moves every element by `-η sign(ĝ)`.
pub fn nsgd_limit(streams: usize, len: usize, seed: u64, tol_over_eta: f64) -> Result<CheckResult> {
    let hp = HyperParams { gamma: 1e12, k_g: 1e-12, eta: 0.01, ..HyperParams::default() };
    let dim = 4;
    let mut rng = BenchRng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..streams {
        let mut state = vsgd::init(dim, &hp)?;
        let mut theta = vec![0.0; dim];
        for _ in 0..len {
            let g: Vec<f64> = (0..dim)
                .map(|_| {
                    let mag = log_uniform(&mut rng, 1e-3, 1e3);
                    if rng.random::<bool>() {
                        mag
                    } else {
                        -mag
                    }
                })
                .collect();
            let before = theta.clone();
            vsgd::step_in_place(&mut state, &mut theta, &g, &hp)?;
            for ((after, prev), gi) in theta.iter().zip(&before).zip(&g) {
                let expected = baselines::normalized_sgd_step(&[0.0], &[*gi], hp.eta)?[0];
                worst = worst.max(((after - prev) - expected).abs() / hp.eta);
            }
        }
    }
    Ok(CheckResult {
        suite: Suite::Nsgd,
        property: "VSGD reduces to Normalized SGD for gamma->inf, K_g->0",
        passed: worst <= tol_over_eta,
        detail: format!("{streams} streams x {len} steps, worst |dtheta + eta sign(g)|/eta {worst:e} (tol {tol_over_eta:e})"),
    })
}

/// Constant VSGD with `K_g = λ/η` against SGD momentum.
///
/// Two parts: the one-step bracket identity `v_t = (λ+η)·[K/(K+1) v_{t-1} +
/// 1/(K+1) ĝ_t]` for arbitrary `(λ, η)`, and constancy of `v_t/μ_t` along
/// whole streams when `λ + η = 1`, the case in which both recursions share
/// a fixed point scale.
pub fn sgdm_proportionality(streams: usize, len: usize, seed: u64, tol: f64) -> Result<CheckResult> {
    let mut rng = BenchRng::seed_from_u64(seed);
    let dim = 4;
    let mut worst_bracket = 0.0f64;
    for _ in 0..streams {
        let lambda = rng.random_range(0.05..0.99);
        let eta = log_uniform(&mut rng, 1e-3, 1.0);
        let k_g = constant::sgdm_equivalence(lambda, eta)?;
        let ccfg = ConstantVsgdConfig { k_g, ..ConstantVsgdConfig::default() };
        let (keep, take) = ccfg.weights();
        let scfg = SgdmConfig { eta, lambda, weight_decay: 0.0 };
        let mut mstate = MomentumState { v: vec![0.0; dim] };
        let mut theta = vec![0.0; dim];
        for _ in 0..len {
            let g = gaussian_stream(&mut rng, dim);
            let prev = mstate.v.clone();
            let (next, th) = baselines::sgdm_step(&mstate, &theta, &g, &scfg)?;
            mstate = next;
            theta = th;
            for ((v, vp), gi) in mstate.v.iter().zip(&prev).zip(&g) {
                worst_bracket = worst_bracket.max(rel(*v, (lambda + eta) * (keep * vp + take * gi)));
            }
        }
    }

    let mut worst_spread = 0.0f64;
    for &(lambda, eta) in &[(0.9, 0.1), (0.75, 0.25)] {
        let k_g = constant::sgdm_equivalence(lambda, eta)?;
        let ccfg = ConstantVsgdConfig { k_g, ..ConstantVsgdConfig::default() };
        let scfg = SgdmConfig { eta, lambda, weight_decay: 0.0 };
        for _ in 0..streams {
            let mut cstate = constant::init(dim, &ccfg)?;
            let mut mstate = MomentumState { v: vec![0.0; dim] };
            let (mut th_c, mut th_s) = (vec![0.0; dim], vec![0.0; dim]);
            let mut ratios = Vec::with_capacity(len * dim);
            for _ in 0..len {
                // Same-sign magnitudes keep every update nonzero.
                let g: Vec<f64> = (0..dim).map(|_| log_uniform(&mut rng, 1e-3, 1e3)).collect();
                constant::step_in_place(&mut cstate, &mut th_c, &g, &ccfg)?;
                let (next, th) = baselines::sgdm_step(&mstate, &th_s, &g, &scfg)?;
                mstate = next;
                th_s = th;
                ratios.extend(mstate.v.iter().zip(&cstate.mu_g).map(|(v, mu)| v / mu));
            }
            let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            worst_spread = worst_spread.max((hi - lo) / lo.abs());
        }
    }
    Ok(CheckResult {
        suite: Suite::Sgdm,
        property: "SGD momentum is a rescaled constant VSGD mean",
        passed: worst_bracket <= tol && worst_spread <= tol,
        detail: format!(
            "bracket identity worst {worst_bracket:e}, v/mu spread (lambda+eta=1) worst {worst_spread:e} (tol {tol:e})"
        ),
    })
}

/// `adam_like + cross + noise = μ_t² + σ²_t` for Constant VSGD.
///
/// Same-sign `(μ_{t-1}, ĝ_t)` pairs are compared relative to `μ_t² + σ²_t`.
/// Opposite signs make the cross term negative, and the sum then cancels;
/// those pairs are compared relative to the summands' magnitude
/// `|adam_like| + |cross| + noise`.
pub fn decomposition_identity(cases: usize, seed: u64, tol: f64) -> Result<CheckResult> {
    let mut rng = BenchRng::seed_from_u64(seed);
    let (mut worst_same, mut worst_mixed) = (0.0f64, 0.0f64);
    for _ in 0..cases {
        let cfg = ConstantVsgdConfig {
            k_g: log_uniform(&mut rng, 1e-2, 1e2),
            gamma: log_uniform(&mut rng, 1e-8, 1e2),
            ..ConstantVsgdConfig::default()
        };
        let mut state = constant::init(1, &cfg)?;
        state.t = rng.random_range(1..1000);
        state.mu_g[0] = log_uniform(&mut rng, 1e-4, 1e2);
        state.b_ghat[0] = log_uniform(&mut rng, 1e-8, 1e2);
        state.a_ghat = cfg.gamma + 1.0;
        let same_sign = rng.random::<bool>();
        let g = log_uniform(&mut rng, 1e-4, 1e2) * if same_sign { 1.0 } else { -1.0 };
        let parts = constant::second_moment_decomposition(&state, &[g], &cfg)?;
        let sigma2 = state.b_ghat[0] / (state.a_ghat * (cfg.k_g + 1.0));
        let mut next = state.clone();
        constant::step_in_place(&mut next, &mut [0.0], &[g], &cfg)?;
        let mu = next.mu_g[0];
        let lhs = parts.adam_like[0] + parts.extra()[0];
        let rhs = mu * mu + sigma2;
        if same_sign {
            worst_same = worst_same.max(rel(lhs, rhs));
        } else {
            let scale = parts.adam_like[0].abs() + parts.cross[0].abs() + parts.noise[0];
            worst_mixed = worst_mixed.max((lhs - rhs).abs() / scale);
        }
    }
    Ok(CheckResult {
        suite: Suite::Decomposition,
        property: "second moment splits into Adam-like and extra parts",
        passed: worst_same <= tol && worst_mixed <= tol,
        detail: format!("{cases} inputs, worst relative error same-sign {worst_same:e}, mixed-sign (vs summand scale) {worst_mixed:e} (tol {tol:e})"),
    })
}

/// VSGD run on each harness problem with every step recorded; the shared
/// shape must be exactly `γ + 0.5` after the first step and every rate and
/// variance must stay positive.
pub fn positivity(steps: u64, seed: u64) -> Result<CheckResult> {
    let hp = HyperParams::default();
    let problems = ["quad:noise=1", "quad:cond=100,noise=0.1", "rosenbrock:noise=1", "logreg:n=500,d=20", "mlp"];
    let mut violations = Vec::new();
    let mut min_seen = f64::INFINITY;
    let mut specs: Vec<OptimizerSpec> = vec![OptimizerSpec::Vsgd(hp)];
    specs.push(OptimizerSpec::Vsgd(hp.with_eta(0.001)));
    for problem in problems {
        for spec in &specs {
            let cfg = RunConfig {
                optimizer: *spec,
                problem: problem.parse()?,
                steps,
                seed,
                scheduler: Scheduler::Constant,
                record_stride: 1,
            };
            let result = bench::run(&cfg)?;
            for row in result.traces.iter().filter(|r| r.t >= 1) {
                let s = row.summary;
                let shape_ok = s.shape == Some(hp.gamma + 0.5);
                let min = s.min_positive.unwrap_or(f64::NAN);
                min_seen = min_seen.min(min);
                if !shape_ok || !(min > 0.0) {
                    violations.push(format!("{problem} t={} shape={:?} min={min:e}", row.t, s.shape));
                    break;
                }
            }
        }
    }
    Ok(CheckResult {
        suite: Suite::Positivity,
        property: "constant shape and positive rates on benchmark runs",
        passed: violations.is_empty(),
        detail: if violations.is_empty() {
            format!("{} runs x {steps} steps, smallest rate/variance {min_seen:e}", problems.len() * specs.len())
        } else {
            violations.join("; ")
        },
    })
}

/// Second-order VSGD on the noisy quadratic: state stays finite and rates
/// positive for `steps` steps.
pub fn second_order_stability(steps: u64, seed: u64) -> Result<CheckResult> {
    let cfg = RunConfig {
        optimizer: OptimizerSpec::SecondOrderVsgd(SecondOrderConfig::default()),
        problem: "quad:noise=1".parse()?,
        steps,
        seed,
        scheduler: Scheduler::Constant,
        record_stride: 1,
    };
    let result = bench::run(&cfg)?;
    let min = result.traces.iter().filter_map(|r| r.summary.min_positive).fold(f64::INFINITY, f64::min);
    let finite = result.traces.iter().all(|r| r.loss.is_finite() && r.theta_norm.is_finite());
    Ok(CheckResult {
        suite: Suite::Positivity,
        property: "second-order VSGD stays finite on the noisy quadratic",
        passed: !result.diverged && finite && min > 0.0 && result.steps_completed == steps,
        detail: format!("{} steps, smallest rate/variance {min:e}", result.steps_completed),
    })
}

/// Runs the selected suites at their full sizes.
pub fn run_suites(suites: &[Suite], seed: u64, fault: Option<Fault>) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for &suite in suites {
        match suite {
            Suite::Oracle => {
                out.push(oracle_agreement(10_000, seed, 1e-10)?);
                out.push(elbo_monotonicity(1_000, 200, seed, 1e-9)?);
            }
            Suite::Adam => out.push(adam_identity(100, 200, seed, 1e-12, fault)?),
            Suite::Nsgd => out.push(nsgd_limit(100, 200, seed, 1e-4)?),
            Suite::Sgdm => out.push(sgdm_proportionality(100, 200, seed, 1e-9)?),
            Suite::Decomposition => out.push(decomposition_identity(10_000, seed, 1e-12)?),
            Suite::Positivity => {
                out.push(positivity(2_000, seed)?);
                out.push(second_order_stability(10_000, seed)?);
            }
        }
    }
    Ok(out)
}

/// Fixed-width pass/fail table.
pub fn format_table(results: &[CheckResult]) -> String {
    let width = results.iter().map(|r| r.property.len()).max().unwrap_or(8).max(8);
    let mut s = format!("{:<14} {:<width$} {:<6} detail\n", "suite", "property", "result");
    for r in results {
        let verdict = if r.passed { "PASS" } else { "FAIL" };
        s.push_str(&format!("{:<14} {:<width$} {:<6} {}\n", r.suite.name(), r.property, verdict, r.detail));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        assert!(oracle_agreement(500, 1, 1e-10).unwrap().passed);
        assert!(elbo_monotonicity(50, 50, 1, 1e-9).unwrap().passed);
        assert!(adam_identity(5, 50, 1, 1e-12, None).unwrap().passed);
        assert!(nsgd_limit(5, 50, 1, 1e-4).unwrap().passed);
        assert!(sgdm_proportionality(5, 50, 1, 1e-9).unwrap().passed);
        assert!(decomposition_identity(500, 1, 1e-12).unwrap().passed);
    }

    #[test]
    fn injected_fault_fails_adam_identity() {
        let r = adam_identity(2, 20, 1, 1e-12, Some(Fault::KgMismatch)).unwrap();
        assert!(!r.passed);
        assert!(r.detail.contains("K_g=10"));
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("bogus".parse::<Suite>().is_err());
        assert_eq!("kg-mismatch".parse::<Fault>().unwrap(), Fault::KgMismatch);
    }

    #[test]
    fn table_marks_failures() {
        let rows = [
            CheckResult { suite: Suite::Adam, property: "a", passed: true, detail: "ok".into() },
            CheckResult { suite: Suite::Nsgd, property: "b", passed: false, detail: "bad".into() },
        ];
        let t = format_table(&rows);
        assert_eq!(t.lines().count(), 3);
        assert!(t.lines().nth(2).unwrap().contains("FAIL"));
    }
}
