//! Quadratic-spending efficacy boundaries for five and fifty looks.

use seqdesign::gst::{plan, GridSettings, LookSchedule};

fn main() -> seqdesign::Result<()> {
    let five = plan(LookSchedule::Equally(5), 1000, 0.05, GridSettings::default())?;
    print!("{}", five.to_csv());

    let fifty = plan(LookSchedule::default(), 1000, 0.05, GridSettings::default())?;
    let last = fifty.boundaries.len() - 1;
    println!(
        "\n50 looks: first boundary {:.3} at n={}, final {:.3}, spent {:.5}",
        fifty.boundaries[0], fifty.looks[0], fifty.boundaries[last], fifty.cumulative_alpha[last]
    );
    Ok(())
}
