//! VSGD on a noisy ill-conditioned quadratic, using the stateful optimizer
//! directly and printing the learned noise variance as it adapts.

use rand::SeedableRng;
use vsgd::bench::{BenchRng, NoisyQuadratic, Problem};
use vsgd::optim::Optimizer;
use vsgd::vsgd::{HyperParams, Vsgd};

fn main() -> vsgd::error::Result<()> {
    let problem = NoisyQuadratic::new(20, 100.0, 0.5)?;
    let mut opt = Vsgd::new(problem.dim(), HyperParams::default().with_eta(0.01))?;
    let mut theta = problem.initial_theta();
    let mut grad = vec![0.0; theta.len()];
    let mut rng = BenchRng::seed_from_u64(7);

    println!("{:>6} {:>12} {:>12}", "step", "loss", "mean σ²");
    for t in 1..=3000 {
        problem.sample_grad(&theta, &mut rng, &mut grad);
        opt.step(&mut theta, &grad)?;
        if t % 300 == 0 {
            let s = opt.summary();
            println!("{t:>6} {:>12.4e} {:>12.4e}", problem.loss(&theta), s.mean_sigma2.unwrap());
        }
    }
    Ok(())
}
