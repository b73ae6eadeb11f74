//! Power of the naive and conservative FPD tests and the GST at the design
//! alternative, against the same capped horizon.

use seqdesign::sim::{metrics_csv, run_grid, SimulationConfig};

fn main() -> seqdesign::Result<()> {
    let mut config = SimulationConfig::from_json(
        r#"{
          "dgp_ids": [3],
          "rule_specs": [
            {"kind": "fpd_naive", "alpha": 0.05, "beta": 0.2},
            {"kind": "fpd_conservative", "alpha": 0.05, "beta": 0.2, "alpha_c": 0.1},
            {"kind": "gst", "alpha": 0.05}
          ],
          "grid": [0.2],
          "replications": 2000,
          "n_max_multipliers": [1.5]
        }"#,
    )?;
    config.base_seed = Some(3);
    print!("{}", metrics_csv(&run_grid(&config)?));
    Ok(())
}
