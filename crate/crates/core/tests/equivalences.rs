use rand::SeedableRng;
use vsgd::baselines::{adam_step, sgdm_step, AdamConfig, AdamState, MomentumState, SgdmConfig};
use vsgd::bench::{fill_standard_normal, BenchRng};
use vsgd::constant::{self, adam_first_moment_equivalence, sgdm_equivalence, ConstantVsgdConfig};
use vsgd::oracle::{first_pass, OracleInput};
use vsgd::second_order::{self, SecondOrderConfig};
use vsgd::vsgd::{self as core, HyperParams, StepInput};

fn gradient_stream(len: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = BenchRng::seed_from_u64(seed);
    (0..len)
        .map(|t| {
            let mut g = vec![0.0; dim];
            fill_standard_normal(&mut rng, &mut g);
            g.iter_mut().for_each(|x| *x += (t as f64 * 0.05).cos());
            g
        })
        .collect()
}

#[test]
fn constant_vsgd_mean_equals_adam_first_moment_over_a_run() {
    let k_g = adam_first_moment_equivalence(0.9).unwrap();
    assert!((k_g - 9.0).abs() < 1e-14);
    let cfg = ConstantVsgdConfig { k_g, ..Default::default() };
    let adam = AdamConfig { beta1: 0.9, ..Default::default() };
    let mut cs = constant::init(8, &cfg).unwrap();
    let mut am = AdamState::new(8);
    let mut theta_c = vec![0.0; 8];
    let mut theta_a = vec![0.0; 8];
    for g in gradient_stream(500, 8, 1) {
        constant::step_in_place(&mut cs, &mut theta_c, &g, &cfg).unwrap();
        let (s, t) = adam_step(&am, &theta_a, &g, &adam).unwrap();
        am = s;
        theta_a = t;
        for (c, m) in cs.mu_g.iter().zip(&am.m) {
            assert!((c - m).abs() <= 1e-12 * c.abs().max(1e-300), "{c} vs {m}");
        }
    }
}

#[test]
fn sgdm_velocity_is_a_bracketed_constant_vsgd_mean() {
    for (lambda, eta) in [(0.9, 0.1), (0.9, 0.01), (0.5, 0.3)] {
        let k_g = sgdm_equivalence(lambda, eta).unwrap();
        let cfg = ConstantVsgdConfig { k_g, ..Default::default() };
        let (keep, take) = cfg.weights();
        let sgdm = SgdmConfig { eta, lambda, weight_decay: 0.0 };
        let mut ms = MomentumState { v: vec![0.0; 4] };
        let theta = vec![0.0; 4];
        for g in gradient_stream(200, 4, 2) {
            let prev = ms.v.clone();
            ms = sgdm_step(&ms, &theta, &g, &sgdm).unwrap().0;
            for i in 0..4 {
                let bracket = (lambda + eta) * (keep * prev[i] + take * g[i]);
                assert!((ms.v[i] - bracket).abs() <= 1e-12 * ms.v[i].abs().max(1e-12));
            }
        }
    }
}

#[test]
fn sgdm_velocity_equals_mean_when_weights_sum_to_one() {
    let (lambda, eta) = (0.9, 0.1);
    let cfg = ConstantVsgdConfig { k_g: sgdm_equivalence(lambda, eta).unwrap(), ..Default::default() };
    let mut cs = constant::init(4, &cfg).unwrap();
    let mut ms = MomentumState { v: vec![0.0; 4] };
    let mut theta = vec![0.0; 4];
    for g in gradient_stream(300, 4, 3) {
        constant::step_in_place(&mut cs, &mut theta, &g, &cfg).unwrap();
        ms = sgdm_step(&ms, &[0.0; 4], &g, &SgdmConfig { eta, lambda, weight_decay: 0.0 }).unwrap().0;
        for (v, m) in ms.v.iter().zip(&cs.mu_g) {
            assert!((v - m).abs() <= 1e-12 * v.abs().max(1e-12));
        }
    }
}

#[test]
fn kernel_first_step_matches_oracle_first_pass() {
    let hp = HyperParams::default();
    let mut state = core::init(1, &hp).unwrap();
    let mut theta = vec![0.0];
    for g in gradient_stream(50, 1, 4) {
        let input = OracleInput {
            mu_prev: state.mu_g[0],
            g_hat: g[0],
            a: state.a,
            b_g: state.b_g[0],
            b_ghat: state.b_ghat[0],
            gamma: hp.gamma,
            k_g: hp.k_g,
        };
        let oracle = first_pass(&input).unwrap();
        let (local, inter) = core::one_pass(&state, &g, &hp).unwrap();
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
        assert!(rel(local.mu[0], oracle.mu) <= 1e-10);
        assert!(rel(local.sigma2[0], oracle.sigma2) <= 1e-10);
        assert!(rel(inter.b_g_prime[0], oracle.b_g_prime) <= 1e-10);
        assert!(rel(inter.b_ghat_prime[0], oracle.b_ghat_prime) <= 1e-10);
        core::step_in_place(&mut state, &mut theta, &g, &hp).unwrap();
    }
}

#[test]
fn single_sample_minibatch_is_a_plain_step() {
    let hp = HyperParams::default().with_weight_decay(0.01);
    let mut state = core::init(3, &hp).unwrap();
    let mut theta = vec![1.0, -1.0, 0.5];
    for g in gradient_stream(40, 3, 5) {
        let (s1, t1) = core::minibatch_step(&state, &theta, std::slice::from_ref(&g), &hp).unwrap();
        let (s2, t2) = core::vsgd_step(&state, StepInput { theta: &theta, g_hat: &g }, &hp).unwrap();
        for i in 0..3 {
            assert!((s1.mu_g[i] - s2.mu_g[i]).abs() <= 1e-15 * s2.mu_g[i].abs().max(1.0));
            assert!((s1.b_g[i] - s2.b_g[i]).abs() <= 1e-14 * s2.b_g[i]);
            assert!((t1[i] - t2[i]).abs() <= 1e-15);
        }
        state = s2;
        theta = t2;
    }
}

#[test]
fn vanishing_curvature_prior_keeps_curvature_mean_at_zero() {
    // From μ_g = 0 the guarded first ratio is about ĝ / 1e-8, so the prior
    // weight has to absorb a factor of ~1e8 as well.
    let cfg = SecondOrderConfig { k_h: 1e-16, ..Default::default() };
    let mut s = second_order::init(3, &cfg).unwrap();
    let mut theta = vec![0.0; 3];
    for g in gradient_stream(100, 3, 6) {
        second_order::step_in_place(&mut s, &mut theta, &g, &cfg).unwrap();
    }
    assert!(s.mu_h.iter().all(|m| m.abs() < 1e-6), "{:?}", s.mu_h);
    assert!(theta.iter().all(|x| x.is_finite()));
}
