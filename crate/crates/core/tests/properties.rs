use proptest::prelude::*;
use vsgd::baselines::{adam_step, amsgrad_step, normalized_sgd_step, AdamConfig, AdamState};
use vsgd::constant::{self, ConstantVsgdConfig};
use vsgd::second_order::{self, SecondOrderConfig};
use vsgd::vsgd::{self as core, HyperParams, StepInput};

fn stream(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3f64..1e3, len)
}

fn streams(dim: usize, len: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(stream(dim), 1..len)
}

fn hyper() -> impl Strategy<Value = HyperParams> {
    (1e-4f64..0.5, -8f64..2.0, 0.1f64..100.0, 0.5f64..1.0, 0.5f64..1.0).prop_map(|(eta, lg, k_g, k1, k2)| HyperParams {
        eta,
        gamma: 10f64.powf(lg),
        k_g,
        kappa1: k1,
        kappa2: k2,
        ..HyperParams::default()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn vsgd_rates_positive_and_shape_fixed(hp in hyper(), gs in streams(3, 60)) {
        let mut s = core::init(3, &hp).unwrap();
        let mut theta = vec![0.5; 3];
        for g in &gs {
            core::step_in_place(&mut s, &mut theta, g, &hp).unwrap();
            prop_assert_eq!(s.a, hp.gamma + 0.5);
            prop_assert!(s.b_g.iter().chain(&s.b_ghat).all(|&b| b > 0.0 && b.is_finite()));
            prop_assert!(s.sigma2().iter().all(|&v| v > 0.0));
            prop_assert!(theta.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn vsgd_mean_between_previous_and_observation(hp in hyper(), gs in streams(4, 40)) {
        let mut s = core::init(4, &hp).unwrap();
        for g in &gs {
            let (next, _) = core::vsgd_step(&s, StepInput { theta: &[0.0; 4], g_hat: g }, &hp).unwrap();
            for i in 0..4 {
                let (lo, hi) = (s.mu_g[i].min(g[i]), s.mu_g[i].max(g[i]));
                prop_assert!(next.mu_g[i] >= lo && next.mu_g[i] <= hi);
            }
            s = next;
        }
    }

    #[test]
    fn vsgd_step_bounded_by_learning_rate(hp in hyper(), gs in streams(4, 40)) {
        let mut s = core::init(4, &hp).unwrap();
        let mut theta = vec![1.0, -2.0, 3.0, 0.0];
        for g in &gs {
            let before = theta.clone();
            core::step_in_place(&mut s, &mut theta, g, &hp).unwrap();
            for (a, b) in before.iter().zip(&theta) {
                prop_assert!((a - b).abs() <= hp.eta * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn vsgd_is_deterministic(hp in hyper(), gs in streams(5, 30)) {
        let run = || {
            let mut s = core::init(5, &hp).unwrap();
            let mut theta = vec![0.1; 5];
            for g in &gs {
                core::step_in_place(&mut s, &mut theta, g, &hp).unwrap();
            }
            (s, theta)
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn pure_and_in_place_steps_agree(hp in hyper(), gs in streams(3, 20)) {
        let mut a = core::init(3, &hp).unwrap();
        let mut b = a.clone();
        let mut ta = vec![0.3, -0.2, 1.0];
        let mut tb = ta.clone();
        for g in &gs {
            let (s, t) = core::vsgd_step(&a, StepInput { theta: &ta, g_hat: g }, &hp).unwrap();
            a = s;
            ta = t;
            core::step_in_place(&mut b, &mut tb, g, &hp).unwrap();
        }
        prop_assert_eq!(a, b);
        prop_assert_eq!(ta, tb);
    }

    #[test]
    fn constant_vsgd_tracks_adam_first_moment(gs in streams(4, 200)) {
        let cfg = ConstantVsgdConfig { k_g: 9.0, ..Default::default() };
        let adam = AdamConfig { beta1: 0.9, ..Default::default() };
        let mut cs = constant::init(4, &cfg).unwrap();
        let mut theta = vec![0.0; 4];
        let mut am = AdamState::new(4);
        let zero = vec![0.0; 4];
        for g in &gs {
            constant::step_in_place(&mut cs, &mut theta, g, &cfg).unwrap();
            am = adam_step(&am, &zero, g, &adam).unwrap().0;
            for i in 0..4 {
                let scale = cs.mu_g[i].abs().max(1e-300);
                prop_assert!((cs.mu_g[i] - am.m[i]).abs() / scale <= 1e-12);
            }
        }
    }

    #[test]
    fn amsgrad_second_moment_never_decreases(gs in streams(3, 80)) {
        let cfg = AdamConfig::default();
        let mut s = AdamState::new(3);
        let theta = vec![0.0; 3];
        for g in &gs {
            let next = amsgrad_step(&s, &theta, g, &cfg).unwrap().0;
            for i in 0..3 {
                prop_assert!(next.v_hat_max[i] >= s.v_hat_max[i]);
                prop_assert!(next.v_hat_max[i] >= next.v[i]);
            }
            s = next;
        }
    }

    #[test]
    fn normalized_sgd_moves_exactly_eta(eta in 1e-4f64..1.0, theta in stream(6), g in stream(6)) {
        let next = normalized_sgd_step(&theta, &g, eta).unwrap();
        for i in 0..6 {
            let expected = if g[i] == 0.0 { theta[i] } else { theta[i] - eta * g[i].signum() };
            prop_assert_eq!(next[i], expected);
        }
    }

    #[test]
    fn second_order_rates_stay_positive(
        k_h in 0.1f64..100.0,
        guard in -8f64..-2.0,
        gs in streams(2, 60),
    ) {
        let cfg = SecondOrderConfig { k_h, mu_guard_eps: 10f64.powf(guard), ..Default::default() };
        let mut s = second_order::init(2, &cfg).unwrap();
        let mut theta = vec![0.0; 2];
        for g in &gs {
            second_order::step_in_place(&mut s, &mut theta, g, &cfg).unwrap();
            prop_assert!(s.b_h.iter().chain(&s.b_g).chain(&s.b_ghat).all(|&b| b > 0.0));
            prop_assert!(theta.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn decomposition_sums_to_second_moment(
        k_g in 0.1f64..100.0,
        warm in streams(3, 10),
        g in stream(3),
    ) {
        let cfg = ConstantVsgdConfig { k_g, ..Default::default() };
        let mut s = constant::init(3, &cfg).unwrap();
        let mut theta = vec![0.0; 3];
        for w in &warm {
            constant::step_in_place(&mut s, &mut theta, w, &cfg).unwrap();
        }
        let parts = constant::second_moment_decomposition(&s, &g, &cfg).unwrap();
        let (next, _) = constant::cvsgd_step(&s, &theta, &g, &cfg).unwrap();
        for i in 0..3 {
            let mu = next.mu_g[i];
            let sigma2 = s.b_ghat[i] / (s.a_ghat * (k_g + 1.0));
            let sum = parts.adam_like[i] + parts.cross[i] + parts.noise[i];
            let scale = parts.adam_like[i].abs() + parts.cross[i].abs() + parts.noise[i];
            prop_assert!((sum - (mu * mu + sigma2)).abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE));
        }
    }
}
