//! Coverage and sample-size inflation of the three fixed-width rules on a
//! skewed process.

use seqdesign::sim::{metrics_csv, run_grid, SimulationConfig};

fn main() -> seqdesign::Result<()> {
    let mut config = SimulationConfig::from_json(
        r#"{
          "dgp_ids": [2],
          "rule_specs": [
            {"kind": "fwcid_naive", "alpha": 0.1},
            {"kind": "fwcid_conservative", "alpha": 0.1, "alpha_c": 0.1},
            {"kind": "fwcid_always_valid", "alpha": 0.1}
          ],
          "grid": [0.1, 0.2],
          "replications": 2000
        }"#,
    )?;
    config.base_seed = Some(7);
    print!("{}", metrics_csv(&run_grid(&config)?));
    Ok(())
}
