//! Constant VSGD with K_g = β₁/(1-β₁) keeps the same first moment as Adam.
//! The steps still differ: VSGD divides by its own second moment.

use vsgd::baselines::{adam_step, AdamConfig, AdamState};
use vsgd::constant::{self, adam_first_moment_equivalence, second_moment_decomposition, ConstantVsgdConfig};

fn main() -> vsgd::error::Result<()> {
    let beta1 = 0.9;
    let cfg = ConstantVsgdConfig { k_g: adam_first_moment_equivalence(beta1)?, ..Default::default() };
    let adam = AdamConfig { beta1, ..Default::default() };

    let mut cs = constant::init(1, &cfg)?;
    let mut theta = vec![0.0];
    let mut am = AdamState::new(1);
    for t in 1..=12 {
        let g = [(t as f64 * 0.9).sin() + 0.3];
        let parts = second_moment_decomposition(&cs, &g, &cfg)?;
        constant::step_in_place(&mut cs, &mut theta, &g, &cfg)?;
        am = adam_step(&am, &[0.0], &g, &adam)?.0;
        println!(
            "t={t:>2} ĝ={:+.4} μ={:+.12} adam m={:+.12}  E[g²] parts: adam-like {:.4e} cross {:+.4e} noise {:.4e}",
            g[0], cs.mu_g[0], am.m[0], parts.adam_like[0], parts.cross[0], parts.noise[0]
        );
    }
    Ok(())
}
