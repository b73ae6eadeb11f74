//! Tune ρ for a target sample size and compare the time-uniform radius
//! against the fixed-sample z quantile.

use seqdesign::cs::{optimize_rho, radius, Boundary};
use seqdesign::numerics::norm_quantile;

fn main() -> seqdesign::Result<()> {
    let alpha = 0.05;
    let target = 1000;
    let z = norm_quantile(1.0 - alpha / 2.0)?;
    for boundary in [Boundary::Phi, Boundary::Psi] {
        let rho = optimize_rho(target, alpha, boundary)?;
        println!("{boundary:?}: rho tuned for n={target} is {rho:.5}");
        for n in [100u64, 1000, 10_000, 100_000] {
            let r = radius(boundary, n, rho, alpha)?;
            println!("  n={n:<7} sqrt(n)*radius={:.4}  (fixed-sample z {z:.4})", r * (n as f64).sqrt());
        }
    }
    Ok(())
}
