//! Drive a ratio sweep through the experiment harness and print the
//! resulting plot-ready CSV.

use privmap::experiment::{
    run_experiment, ExperimentConfig, ExperimentKind, ModelSource, SweepGrid,
};
use privmap::model::ModelGenConfig;

fn main() -> privmap::Result<()> {
    let out = std::env::temp_dir().join("privmap-ratio-sweep.csv");
    let cfg = ExperimentConfig {
        kind: ExperimentKind::RatioSweep,
        model: ModelSource {
            file: None,
            generated: Some(ModelGenConfig {
                target_corr: 0.4,
                seed: 11,
                ..ModelGenConfig::new(2, 3, 2)
            }),
        },
        grid: SweepGrid {
            r: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            delta: vec![0.0, 0.3],
            ..SweepGrid::default()
        },
        seed: 0,
        n_samples: 50,
        xi: 1e-4,
        max_iters: 80,
        output: out.clone(),
        max_wall_ms: None,
    };
    let result = run_experiment(&cfg)?;
    println!(
        "{} rows -> {} (manifest {})",
        result.rows,
        result.csv_path.display(),
        result.manifest_path.display()
    );
    print!("{}", std::fs::read_to_string(&result.csv_path).map_err(|e| {
        privmap::Error::Io { path: out.display().to_string(), source: e }
    })?);
    Ok(())
}
