//! Every optimizer on the same noisy Rosenbrock problem through the harness.

use vsgd::baselines::{AdamConfig, SgdmConfig};
use vsgd::bench::{run_many, summarize, OptimizerSpec, ProblemSpec, RunConfig, Scheduler};
use vsgd::constant::ConstantVsgdConfig;
use vsgd::second_order::SecondOrderConfig;
use vsgd::vsgd::HyperParams;

fn main() -> vsgd::error::Result<()> {
    let optimizers = [
        OptimizerSpec::Vsgd(HyperParams::default()),
        OptimizerSpec::ConstantVsgd(ConstantVsgdConfig::default()),
        OptimizerSpec::SecondOrderVsgd(SecondOrderConfig::default()),
        OptimizerSpec::Sgd(SgdmConfig { eta: 1e-4, lambda: 0.0, weight_decay: 0.0 }),
        OptimizerSpec::Sgd(SgdmConfig { eta: 1e-4, lambda: 0.9, weight_decay: 0.0 }),
        OptimizerSpec::Adam(AdamConfig { eta: 0.01, ..Default::default() }),
        OptimizerSpec::AmsGrad(AdamConfig { eta: 0.01, ..Default::default() }),
        OptimizerSpec::NormalizedSgd { eta: 1e-3 },
    ];
    let problem: ProblemSpec = "rosenbrock:dim=6,noise=1".parse()?;
    let configs: Vec<RunConfig> = optimizers
        .iter()
        .map(|&optimizer| RunConfig {
            optimizer,
            problem: problem.clone(),
            steps: 10_000,
            seed: 3,
            scheduler: Scheduler::Constant,
            record_stride: 100,
        })
        .collect();
    println!("{problem}, 10000 steps");
    for (cfg, res) in configs.iter().zip(run_many(&configs)) {
        let r = res?;
        let m = summarize(&r, 1e-2);
        println!(
            "{:<14} lr {:<7} final {:>11.4e} best {:>11.4e} reached 1e-2 at {:>6} {}",
            cfg.optimizer.name(),
            cfg.optimizer.learning_rate(),
            m.final_loss,
            m.best_loss,
            m.steps_to_threshold.map_or("-".into(), |t| t.to_string()),
            if r.diverged { "(diverged)" } else { "" }
        );
    }
    Ok(())
}
