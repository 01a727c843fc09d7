use rand::SeedableRng;
use vsgd::bench::{standard_normal, BenchRng, LogRegSynth, MlpSynth, NoisyQuadratic, Problem, Rosenbrock};

const H: f64 = 1e-5;

/// Largest `|fd - g|` over all coordinates at `points` random
/// parameter vectors.
fn worst_fd_error(p: &dyn Problem, points: usize, scale: f64, seed: u64) -> f64 {
    let mut rng = BenchRng::seed_from_u64(seed);
    let d = p.dim();
    let mut worst = 0.0f64;
    let mut g = vec![0.0; d];
    for _ in 0..points {
        let theta: Vec<f64> = (0..d).map(|_| scale * standard_normal(&mut rng)).collect();
        p.true_grad(&theta, &mut g);
        for i in 0..d {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[i] += H;
            minus[i] -= H;
            let fd = (p.loss(&plus) - p.loss(&minus)) / (2.0 * H);
            worst = worst.max((fd - g[i]).abs());
        }
    }
    worst
}

#[test]
fn logreg_gradient_matches_finite_differences() {
    let p = LogRegSynth::new(200, 10, 3, 16).unwrap();
    let err = worst_fd_error(&p, 20, 1.0, 1);
    assert!(err <= 1e-6, "worst {err:e}");
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    let p = MlpSynth::new(4, 8, 64, 5, 8).unwrap();
    let err = worst_fd_error(&p, 20, 0.5, 2);
    assert!(err <= 1e-6, "worst {err:e}");
}

#[test]
fn rosenbrock_and_quadratic_gradients_match_finite_differences() {
    assert!(worst_fd_error(&Rosenbrock { dim: 6, noise: 0.0 }, 20, 1.0, 3) <= 1e-6);
    assert!(worst_fd_error(&NoisyQuadratic::new(6, 100.0, 0.0).unwrap(), 20, 1.0, 4) <= 1e-6);
}

/// Per-coordinate z-score of the sample mean of `ĝ` against the exact
/// gradient, using the sample variance.
fn max_z(p: &dyn Problem, samples: usize, seed: u64) -> f64 {
    let d = p.dim();
    let theta: Vec<f64> = (0..d).map(|i| 0.3 * ((i as f64) - 1.5)).collect();
    let mut exact = vec![0.0; d];
    p.true_grad(&theta, &mut exact);
    let mut rng = BenchRng::seed_from_u64(seed);
    let mut g = vec![0.0; d];
    let mut sum = vec![0.0; d];
    let mut sq = vec![0.0; d];
    for _ in 0..samples {
        p.sample_grad(&theta, &mut rng, &mut g);
        for i in 0..d {
            let dev = g[i] - exact[i];
            sum[i] += dev;
            sq[i] += dev * dev;
        }
    }
    let n = samples as f64;
    (0..d)
        .map(|i| {
            let mean = sum[i] / n;
            let var = (sq[i] / n - mean * mean).max(0.0);
            if var == 0.0 {
                assert_eq!(mean, 0.0);
                0.0
            } else {
                mean.abs() / (var / n).sqrt()
            }
        })
        .fold(0.0, f64::max)
}

#[test]
fn samplers_are_unbiased() {
    let n = 100_000;
    assert!(max_z(&NoisyQuadratic::new(4, 10.0, 1.0).unwrap(), n, 1) < 3.0);
    assert!(max_z(&Rosenbrock { dim: 4, noise: 0.5 }, n, 2) < 3.0);
    assert!(max_z(&LogRegSynth::new(300, 4, 7, 8).unwrap(), n, 3) < 3.0);
    assert!(max_z(&MlpSynth::new(2, 2, 50, 9, 4).unwrap(), n, 4) < 3.0);
}
