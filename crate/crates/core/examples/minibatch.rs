//! Per-sample mini-batch VSGD against the usual averaged-gradient step.
//! Treating samples separately lets the noise rate see the spread inside
//! the batch instead of only its mean.

use rand::SeedableRng;
use vsgd::bench::{BenchRng, NoisyQuadratic, Problem};
use vsgd::vsgd::{self as core, HyperParams};

fn main() -> vsgd::error::Result<()> {
    let problem = NoisyQuadratic::new(10, 10.0, 2.0)?;
    let hp = HyperParams::default();
    let batch = 8;
    let mut rng = BenchRng::seed_from_u64(5);

    let mut s_per = core::init(problem.dim(), &hp)?;
    let mut th_per = problem.initial_theta();
    let mut s_avg = s_per.clone();
    let mut th_avg = th_per.clone();
    let mut g = vec![0.0; problem.dim()];
    for t in 1..=2000 {
        let samples: Vec<Vec<f64>> = (0..batch)
            .map(|_| {
                problem.sample_grad(&th_per, &mut rng, &mut g);
                g.clone()
            })
            .collect();
        (s_per, th_per) = core::minibatch_step(&s_per, &th_per, &samples, &hp)?;

        let mut mean = vec![0.0; problem.dim()];
        for _ in 0..batch {
            problem.sample_grad(&th_avg, &mut rng, &mut g);
            mean.iter_mut().zip(&g).for_each(|(m, x)| *m += x / batch as f64);
        }
        core::step_in_place(&mut s_avg, &mut th_avg, &mean, &hp)?;

        if t % 400 == 0 {
            let mean_b = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            println!(
                "t={t:>5} per-sample loss {:.4e} (mean b_ĝ {:.3e})  averaged loss {:.4e} (mean b_ĝ {:.3e})",
                problem.loss(&th_per),
                mean_b(&s_per.b_ghat),
                problem.loss(&th_avg),
                mean_b(&s_avg.b_ghat)
            );
        }
    }
    Ok(())
}
