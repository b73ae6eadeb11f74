//! The eight built-in processes: normalization scale, effect and pooled
//! variance after scaling.

use seqdesign::dgp::{self, analytic_moments};

fn main() -> seqdesign::Result<()> {
    println!("id  control                                   treated                                   tau     pooled var");
    for id in 1..=8 {
        let d = dgp::standard(id)?;
        let (m0, _) = analytic_moments(&d.control)?;
        let (m1, _) = analytic_moments(&d.treated)?;
        println!(
            "{id}   {:<40}  {:<40}  {:+.4} {:.6}",
            format!("{:?}", d.control.family),
            format!("{:?}", d.treated.family),
            m1 - m0,
            d.pooled_variance()
        );
    }
    Ok(())
}
