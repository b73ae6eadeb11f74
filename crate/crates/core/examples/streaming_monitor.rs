//! Feed a simulated A/B stream through a fixed-width interval monitor and
//! print the report when it stops.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqdesign::rules::{Decision, Rule, StoppingRuleSpec};
use seqdesign::{dgp, Monitor};

fn main() -> seqdesign::Result<()> {
    let process = dgp::standard(5)?;
    let mut units = process.sampler()?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    let spec = StoppingRuleSpec::fwcid_naive(0.15, 0.05).with_n_max(100_000);
    let mut monitor = Monitor::new(Rule::new(spec)?);
    loop {
        let (arm, y) = units.sample_unit(&mut rng);
        if let Decision::Stop(_) = monitor.observe(arm, y)? {
            break;
        }
        let n = monitor.state().n();
        if n.is_multiple_of(200) {
            let forecast = monitor.rule().forecast_n(monitor.state())?;
            println!("n={n:5}  forecast stop near {forecast:.0}");
        }
    }
    let report = monitor.report()?;
    println!(
        "stopped at n={} ({}), tau_hat={:.4}, interval [{:.4}, {:.4}], true tau {:.2}",
        report.n_stop, report.reason, report.tau_hat, report.ci_lo, report.ci_hi, process.tau
    );
    Ok(())
}
