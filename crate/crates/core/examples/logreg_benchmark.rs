//! Learning-rate grid for VSGD and Adam on synthetic logistic regression.

use vsgd::baselines::AdamConfig;
use vsgd::bench::{best_per_optimizer, lr_grid, OptimizerSpec, ProblemSpec};
use vsgd::vsgd::HyperParams;

fn main() -> vsgd::error::Result<()> {
    let optimizers = [OptimizerSpec::Vsgd(HyperParams::default()), OptimizerSpec::Adam(AdamConfig::default())];
    let cells = lr_grid(&optimizers, &[0.001, 0.005, 0.01, 0.02], &[0, 1, 2], 5000, |seed| ProblemSpec::LogReg {
        n: 2000,
        d: 50,
        seed,
        batch: 32,
    })?;
    for c in &cells {
        println!("{:<6} lr {:<6} mean final loss {:.5} per seed {:?}", c.optimizer, c.lr, c.mean_final_loss, c.final_losses);
    }
    for b in best_per_optimizer(&cells) {
        println!("best {:<6} lr {:<6} {:.5}", b.optimizer, b.lr, b.mean_final_loss);
    }
    Ok(())
}
