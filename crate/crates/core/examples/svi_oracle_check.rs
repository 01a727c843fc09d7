//! The reference coordinate-ascent solver for one VSGD update, compared with
//! the closed-form single pass the optimizer uses.

use vsgd::oracle::{ascent_iterates, coordinate_ascent_fixed_point, elbo, first_pass, OracleInput};
use vsgd::vsgd::{self as core, HyperParams};

fn main() -> vsgd::error::Result<()> {
    let input = OracleInput { mu_prev: 0.4, g_hat: 1.3, a: 2.0, b_g: 0.5, b_ghat: 3.0, gamma: 1.0, k_g: 5.0 };

    let pass = first_pass(&input)?;
    let hp = HyperParams { gamma: input.gamma, k_g: input.k_g, ..HyperParams::default() };
    let state = core::VsgdState { t: 3, mu_g: vec![input.mu_prev], b_g: vec![input.b_g], b_ghat: vec![input.b_ghat], a: input.a };
    let (local, inter) = core::one_pass(&state, &[input.g_hat], &hp)?;
    println!("first pass  μ {:.15} σ² {:.15} b'_g {:.15} b'_ĝ {:.15}", pass.mu, pass.sigma2, pass.b_g_prime, pass.b_ghat_prime);
    println!("optimizer   μ {:.15} σ² {:.15} b'_g {:.15} b'_ĝ {:.15}", local.mu[0], local.sigma2[0], inter.b_g_prime[0], inter.b_ghat_prime[0]);

    for (k, f) in ascent_iterates(&input, 6)?.iter().enumerate() {
        println!("iterate {k}: ELBO {:.12}", elbo(&input, f));
    }
    let fixed = coordinate_ascent_fixed_point(&input, 1e-12, 200)?;
    println!("fixed point after {} sweeps: μ {:.12} σ² {:.12}", fixed.iterations, fixed.mu, fixed.sigma2);
    Ok(())
}
