//! Second-order VSGD: one element worked by hand, then a run on Rosenbrock.
//!
//! The curvature estimate divides by the previous gradient mean. That mean is
//! zero at the first step, so the guard `mu_guard_eps` sets how large the
//! first curvature estimate gets, and through it the early step size: too
//! small stalls the run, too large lets it diverge.

use rand::SeedableRng;
use vsgd::bench::{BenchRng, Problem, Rosenbrock};
use vsgd::optim::Optimizer;
use vsgd::second_order::{displacement, local_update, ElementPrior, SecondOrderConfig, SecondOrderVsgd};

fn main() -> vsgd::error::Result<()> {
    let prior = ElementPrior { mu_g: 1.0, mu_h: 0.0, b_h: 1.0, b_g: 1.0, b_ghat: 1.0, a: 1.0 };
    let post = local_update(&prior, 2.0, 1e-8)?;
    println!("μ_g 1 -> ĝ 2: μ_h = {} (one third of the relative change)", post.mu_h);
    println!("step with μ_g=1, μ_h=3, σ²_h=16, η=0.1: {}", displacement(0.1, 1.0, 3.0, 16.0));

    let problem = Rosenbrock { dim: 4, noise: 0.1 };
    for guard in [1e-8, 1e-2, 1.0] {
        let cfg = SecondOrderConfig { eta: 0.01, mu_guard_eps: guard, ..Default::default() };
        let mut opt = SecondOrderVsgd::new(problem.dim(), cfg)?;
        let mut theta = problem.initial_theta();
        let mut grad = vec![0.0; theta.len()];
        let mut rng = BenchRng::seed_from_u64(1);
        for _ in 0..5000 {
            problem.sample_grad(&theta, &mut rng, &mut grad);
            opt.step(&mut theta, &grad)?;
        }
        let (end, start) = (problem.loss(&theta), problem.loss(&problem.initial_theta()));
        let note = if end > start { " (diverging)" } else { "" };
        println!("mu_guard_eps {guard:e}: loss {end:.4e} after 5000 steps (start {start:.4e}){note}");
    }
    Ok(())
}
