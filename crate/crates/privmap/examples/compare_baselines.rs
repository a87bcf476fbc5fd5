//! Calibrate alternative privacy mechanisms to the same private-hypothesis
//! error and compare the public detection error they leave on the table.

use privmap::baselines::calibrate_and_compare;
use privmap::model::{generate_model, ModelGenConfig};
use privmap::pbpo::PbpoConfig;
use privmap::uncertainty::Budget;

fn main() -> privmap::Result<()> {
    let model = generate_model(&ModelGenConfig {
        target_corr: 0.4,
        seed: 25,
        ..ModelGenConfig::new(2, 3, 2)
    })?;
    let cfg = PbpoConfig {
        max_iters: 60,
        ..PbpoConfig::new(Budget::Ratio(0.7), 0.0)
    };

    let table = calibrate_and_compare(&model, &cfg)?;
    println!(
        "anchor = {} error, target = {:.6}",
        table.anchor, table.target_error
    );
    println!("{:<14} {:>10} {:>10} {:>12} {:>10}", "metric", "param", "err_h", "err_nominal", "err_mf");
    for row in &table.rows {
        println!(
            "{:<14} {:>10.4} {:>10.6} {:>12.6} {:>10.6}",
            row.metric, row.parameter, row.error_h, row.error_nominal, row.error_mf
        );
    }
    Ok(())
}
