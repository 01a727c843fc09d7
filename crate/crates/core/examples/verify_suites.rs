//! Runs the property suites at reduced sizes and prints the table, then
//! shows that a deliberately wrong K_g is caught.

use vsgd::verify::{self, format_table, Fault};

fn main() -> vsgd::error::Result<()> {
    let results = vec![
        verify::oracle_agreement(2000, 1, 1e-10)?,
        verify::elbo_monotonicity(200, 100, 1, 1e-9)?,
        verify::adam_identity(20, 200, 1, 1e-12, None)?,
        verify::nsgd_limit(20, 200, 1, 1e-4)?,
        verify::sgdm_proportionality(20, 200, 1, 1e-9)?,
        verify::decomposition_identity(2000, 1, 1e-12)?,
        verify::positivity(500, 1)?,
        verify::second_order_stability(2000, 1)?,
    ];
    print!("{}", format_table(&results));
    let broken = verify::adam_identity(5, 50, 1, 1e-12, Some(Fault::KgMismatch))?;
    print!("\nwith injected fault:\n{}", format_table(&[broken]));
    Ok(())
}
