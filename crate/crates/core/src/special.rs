//! Digamma and log-gamma for positive arguments, as needed by the analytic
//! Gamma expectations in the oracle ELBO.
//!
//! Both shift the argument up to `x >= 10` with the recurrence and then
//! evaluate the asymptotic (Stirling / Bernoulli) series.

const SHIFT_TO: f64 = 10.0;

/// `ψ(x)` for `x > 0`.
pub fn digamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut x = x;
    let mut acc = 0.0;
    while x < SHIFT_TO {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    // -1/12 + 1/120 x⁻² - 1/252 x⁻⁴ + 1/240 x⁻⁶ - 1/132 x⁻⁸ + 691/32760 x⁻¹⁰
    let series = inv2
        * (-1.0 / 12.0
            + inv2 * (1.0 / 120.0 + inv2 * (-1.0 / 252.0 + inv2 * (1.0 / 240.0 + inv2 * (-1.0 / 132.0 + inv2 * (691.0 / 32760.0))))));
    acc + x.ln() - 0.5 / x + series
}

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut x = x;
    let mut prod = 1.0;
    while x < SHIFT_TO {
        prod *= x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // 1/12 x⁻¹ - 1/360 x⁻³ + 1/1260 x⁻⁵ - 1/1680 x⁻⁷ + 1/1188 x⁻⁹
    let series = inv * (1.0 / 12.0 + inv2 * (-1.0 / 360.0 + inv2 * (1.0 / 1260.0 + inv2 * (-1.0 / 1680.0 + inv2 / 1188.0))));
    let half_ln_2pi = 0.918_938_533_204_672_8;
    (x - 0.5) * x.ln() - x + half_ln_2pi + series - prod.ln()
}
