//! Stopping thresholds and fixed-sample reference sizes for a few designs.

use seqdesign::rules::{
    reference_sample_size, threshold, two_sided_beta_correction, ReferenceDesign, StoppingRuleSpec,
};

fn main() -> seqdesign::Result<()> {
    println!("half-width d   alpha   threshold      N (unit variance, p=.5)");
    for d in [0.01, 0.05, 0.1, 0.2] {
        let thr = threshold(&StoppingRuleSpec::fwcid_naive(d, 0.1))?;
        let n = reference_sample_size(ReferenceDesign::Fwcid { d }, 0.1, 0.5)?;
        println!("{d:<14} 0.10    {thr:<14.6e} {n}");
    }

    println!("\neffect tau_d   beta    threshold      N");
    for tau_d in [0.1, 0.2, 0.4] {
        let spec = StoppingRuleSpec::fpd_naive(0.0, tau_d, 0.05, 0.2);
        let thr = threshold(&spec)?;
        let n = reference_sample_size(ReferenceDesign::Fpd { tau_d, beta: 0.2 }, 0.05, 0.5)?;
        println!("{tau_d:<14} 0.20    {thr:<14.6e} {n}");
    }

    let zb = two_sided_beta_correction(0.05, 0.2)?;
    println!("\ntwo-sided test at alpha .05, beta .2: corrected z_beta = {zb:.6}");
    Ok(())
}
