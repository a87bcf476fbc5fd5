//! Sweep harness: reads a TOML experiment config, evaluates a parameter
//! grid in a parallel pool, and emits a plot-ready CSV plus a JSON
//! manifest recording every entropy source for deterministic replay.

use crate::asymptotic::solve_asymptotic;
use crate::baselines::{calibrate_and_compare, evaluate_mapping};
use crate::bounds::bound_report;
use crate::error::{Error, Result};
use crate::model::{generate_model, read_model, JointModel, ModelGenConfig};
use crate::pbpo::{pbpo_optimize, PbpoConfig};
use crate::uncertainty::Budget;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    BoundsSweep,
    RatioSweep,
    CorrSweep,
    ExponentSweep,
    CardinalitySweep,
    Compare,
}

impl ExperimentKind {
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Self::BoundsSweep => &[
                "epsilon",
                "lower",
                "upper",
                "i_xh_given_g",
                "tv_xh",
                "n_samples",
            ],
            Self::RatioSweep => &["r", "delta", "error_h", "error_nominal", "error_mf"],
            Self::CorrSweep => &["corr", "error_h", "error_nominal", "error_mf"],
            Self::ExponentSweep => &["corr", "beta", "c_h", "c_g", "support_size"],
            Self::CardinalitySweep => &["quant_alphabet", "beta", "c_h", "c_g", "support_size"],
            Self::Compare => &[
                "metric",
                "parameter",
                "error_h",
                "error_nominal",
                "error_mf",
                "i_xh_given_g",
            ],
        }
    }
}

/// Model source: a file path, or generation parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSource {
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub generated: Option<ModelGenConfig>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default)]
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub r: Vec<f64>,
    #[serde(default)]
    pub delta: Vec<f64>,
    #[serde(default)]
    pub corr: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub quant_alphabet: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub model: ModelSource,
    #[serde(default)]
    pub grid: SweepGrid,
    /// Base seed for all stochastic steps in the sweep itself.
    #[serde(default)]
    pub seed: u64,
    /// Hypotheses sampled when a minimum over the uncertainty set is
    /// approximated.
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default = "default_xi")]
    pub xi: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// CSV path; the manifest is written next to it with a .json suffix.
    pub output: PathBuf,
    /// Soft runtime cap; when exceeded the CSV holds the completed prefix
    /// of the grid and the manifest is flagged partial.
    #[serde(default)]
    pub max_wall_ms: Option<u64>,
}

fn default_n_samples() -> usize {
    200
}
fn default_xi() -> f64 {
    1e-4
}
fn default_max_iters() -> usize {
    200
}

pub fn read_experiment_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::Schema {
        field: path.display().to_string(),
        message: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.model.file.is_none() && self.model.generated.is_none() {
            return Err(Error::Schema {
                field: "model".into(),
                message: "either model.file or model.generated is required".into(),
            });
        }
        if self.model.file.is_some() && self.model.generated.is_some() {
            return Err(Error::Schema {
                field: "model".into(),
                message: "model.file and model.generated are mutually exclusive".into(),
            });
        }
        if let Some(path) = &self.model.file {
            if !path.exists() {
                return Err(Error::Schema {
                    field: "model.file".into(),
                    message: format!("{} does not exist", path.display()),
                });
            }
            if matches!(
                self.kind,
                ExperimentKind::CorrSweep | ExperimentKind::ExponentSweep
            ) {
                return Err(Error::Schema {
                    field: "model.file".into(),
                    message: "this sweep regenerates models per grid point; use model.generated"
                        .into(),
                });
            }
        }
        let nonempty = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::Schema {
                    field: format!("grid.{name}"),
                    message: "grid axis must be non-empty".into(),
                })
            } else {
                Ok(())
            }
        };
        match self.kind {
            ExperimentKind::BoundsSweep => nonempty("epsilon", self.grid.epsilon.len())?,
            ExperimentKind::RatioSweep => {
                nonempty("r", self.grid.r.len())?;
                nonempty("delta", self.grid.delta.len())?;
            }
            ExperimentKind::CorrSweep => nonempty("corr", self.grid.corr.len())?,
            ExperimentKind::ExponentSweep => {
                nonempty("corr", self.grid.corr.len())?;
                nonempty("beta", self.grid.beta.len())?;
            }
            ExperimentKind::CardinalitySweep => {
                nonempty("quant_alphabet", self.grid.quant_alphabet.len())?;
                nonempty("beta", self.grid.beta.len())?;
            }
            ExperimentKind::Compare => {}
        }
        Ok(())
    }

    fn base_model(&self) -> Result<JointModel> {
        match (&self.model.file, &self.model.generated) {
            (Some(path), None) => read_model(path),
            (None, Some(gen)) => generate_model(gen),
            _ => unreachable!("validated"),
        }
    }

    fn pbpo_config(&self, budget: Budget, delta: f64) -> PbpoConfig {
        PbpoConfig {
            xi: self.xi,
            max_iters: self.max_iters,
            seed: self.seed,
            ..PbpoConfig::new(budget, delta)
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ExperimentManifest {
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    pub version: String,
    pub rows: usize,
    pub grid_size: usize,
    pub partial: bool,
    pub wall_ms: u128,
}

#[derive(Debug)]
pub struct ExperimentOutput {
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
    pub rows: usize,
    pub partial: bool,
}

fn thread_pool() -> Result<Option<rayon::ThreadPool>> {
    match std::env::var("PRIVMAP_THREADS") {
        Ok(v) => {
            let n: usize = v.parse().map_err(|_| {
                Error::InvalidParameter(format!("PRIVMAP_THREADS must be a positive integer, got {v:?}"))
            })?;
            if n == 0 {
                return Err(Error::InvalidParameter(
                    "PRIVMAP_THREADS must be a positive integer".into(),
                ));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map(Some)
                .map_err(|e| Error::InvalidParameter(e.to_string()))
        }
        Err(_) => Ok(None),
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

/// Runs the configured sweep, writing the CSV and manifest.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let pool = thread_pool()?;
    let run = |f: &(dyn Fn() -> Result<Vec<Vec<String>>> + Sync)| match &pool {
        Some(p) => p.install(f),
        None => f(),
    };

    let (rows, grid_size) = match cfg.kind {
        ExperimentKind::Compare => {
            let model = cfg.base_model()?;
            let r = cfg.grid.r.first().copied().unwrap_or(0.6);
            let delta = cfg.grid.delta.first().copied().unwrap_or(0.0);
            let pcfg = cfg.pbpo_config(Budget::Ratio(r), delta);
            let table = run(&|| {
                let t = calibrate_and_compare(&model, &pcfg)?;
                Ok(t.rows
                    .iter()
                    .map(|row| {
                        vec![
                            row.metric.clone(),
                            fmt(row.parameter),
                            fmt(row.error_h),
                            fmt(row.error_nominal),
                            fmt(row.error_mf),
                            fmt(row.i_xh_given_g),
                        ]
                    })
                    .collect())
            })?;
            let n = table.len();
            (table, n)
        }
        _ => {
            let points = grid_points(cfg)?;
            let grid_size = points.len();
            let model = if matches!(
                cfg.kind,
                ExperimentKind::CorrSweep | ExperimentKind::ExponentSweep
            ) {
                None
            } else {
                Some(cfg.base_model()?)
            };
            let deadline = cfg
                .max_wall_ms
                .map(|ms| std::time::Duration::from_millis(ms));
            let mut rows: Vec<Vec<String>> = Vec::with_capacity(grid_size);
            let chunk = rayon::current_num_threads().max(4);
            let mut truncated = false;
            for batch in points.chunks(chunk) {
                if let Some(d) = deadline {
                    if start.elapsed() > d {
                        truncated = true;
                        break;
                    }
                }
                let batch_rows: Result<Vec<Vec<String>>> = run(&|| {
                    batch
                        .par_iter()
                        .map(|p| eval_point(cfg, model.as_ref(), p))
                        .collect()
                });
                rows.extend(batch_rows?);
            }
            let n = rows.len();
            if truncated {
                (rows, grid_size)
            } else {
                debug_assert_eq!(n, grid_size);
                (rows, grid_size)
            }
        }
    };

    let columns = cfg.kind.columns();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != columns.len() {
            return Err(Error::Schema {
                field: format!("row[{i}]"),
                message: format!("expected {} columns, got {}", columns.len(), row.len()),
            });
        }
    }

    let csv_path = cfg.output.clone();
    if let Some(dir) = csv_path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|source| Error::Io {
                path: dir.display().to_string(),
                source,
            })?;
        }
    }
    let mut writer = csv::Writer::from_path(&csv_path).map_err(|e| Error::Io {
        path: csv_path.display().to_string(),
        source: std::io::Error::other(e),
    })?;
    writer
        .write_record(columns)
        .and_then(|()| rows.iter().try_for_each(|r| writer.write_record(r)))
        .and_then(|()| writer.flush().map_err(Into::into))
        .map_err(|e| Error::Io {
            path: csv_path.display().to_string(),
            source: std::io::Error::other(e),
        })?;

    let manifest = ExperimentManifest {
        kind: cfg.kind,
        config: cfg.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        rows: rows.len(),
        grid_size,
        partial: rows.len() < grid_size,
        wall_ms: start.elapsed().as_millis(),
    };
    let manifest_path = csv_path.with_extension("json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(|source| Error::Io {
        path: manifest_path.display().to_string(),
        source,
    })?;

    Ok(ExperimentOutput {
        csv_path,
        manifest_path,
        rows: manifest.rows,
        partial: manifest.partial,
    })
}

#[derive(Debug, Clone, Copy)]
enum GridPoint {
    Epsilon(f64),
    RatioDelta(f64, f64),
    Corr(f64),
    CorrBeta(f64, f64),
    QuantBeta(usize, f64),
}

fn grid_points(cfg: &ExperimentConfig) -> Result<Vec<GridPoint>> {
    let g = &cfg.grid;
    Ok(match cfg.kind {
        ExperimentKind::BoundsSweep => g.epsilon.iter().map(|&e| GridPoint::Epsilon(e)).collect(),
        ExperimentKind::RatioSweep => g
            .r
            .iter()
            .flat_map(|&r| g.delta.iter().map(move |&d| GridPoint::RatioDelta(r, d)))
            .collect(),
        ExperimentKind::CorrSweep => g.corr.iter().map(|&c| GridPoint::Corr(c)).collect(),
        ExperimentKind::ExponentSweep => g
            .corr
            .iter()
            .flat_map(|&c| g.beta.iter().map(move |&b| GridPoint::CorrBeta(c, b)))
            .collect(),
        ExperimentKind::CardinalitySweep => g
            .quant_alphabet
            .iter()
            .flat_map(|&z| g.beta.iter().map(move |&b| GridPoint::QuantBeta(z, b)))
            .collect(),
        ExperimentKind::Compare => Vec::new(),
    })
}

fn regenerate(cfg: &ExperimentConfig, corr: f64) -> Result<JointModel> {
    let mut gen = cfg
        .model
        .generated
        .clone()
        .expect("validated: corr-dependent sweeps require model.generated");
    gen.target_corr = corr;
    generate_model(&gen)
}

fn eval_point(
    cfg: &ExperimentConfig,
    model: Option<&JointModel>,
    point: &GridPoint,
) -> Result<Vec<String>> {
    match *point {
        GridPoint::Epsilon(eps) => {
            let m = model.expect("shared model");
            let delta = cfg.grid.delta.first().copied().unwrap_or(0.0);
            let rep = bound_report(m, eps, delta, cfg.n_samples, cfg.seed)?;
            Ok(vec![
                fmt(rep.epsilon),
                fmt(rep.lower),
                fmt(rep.upper),
                fmt(rep.i_xh_given_g),
                fmt(rep.tv_xh),
                rep.n_samples.to_string(),
            ])
        }
        GridPoint::RatioDelta(r, delta) => {
            let m = model.expect("shared model");
            let out = pbpo_optimize(m, &cfg.pbpo_config(Budget::Ratio(r), delta))?;
            let (eh, en, emf) = evaluate_mapping(m, &out.mapping, delta)?;
            Ok(vec![fmt(r), fmt(delta), fmt(eh), fmt(en), fmt(emf)])
        }
        GridPoint::Corr(corr) => {
            let m = regenerate(cfg, corr)?;
            let r = cfg.grid.r.first().copied().unwrap_or(0.6);
            let delta = cfg.grid.delta.first().copied().unwrap_or(0.0);
            let out = pbpo_optimize(&m, &cfg.pbpo_config(Budget::Ratio(r), delta))?;
            let (eh, en, emf) = evaluate_mapping(&m, &out.mapping, delta)?;
            Ok(vec![fmt(corr), fmt(eh), fmt(en), fmt(emf)])
        }
        GridPoint::CorrBeta(corr, beta) => {
            let m = regenerate(cfg, corr)?;
            let z = cfg
                .grid
                .quant_alphabet
                .first()
                .copied()
                .unwrap_or(m.obs_alphabet() + 1);
            let sol = solve_asymptotic(&m, z, beta, 1e-6)?;
            Ok(vec![
                fmt(corr),
                fmt(beta),
                fmt(sol.c_h),
                fmt(sol.c_g),
                sol.weights.len().to_string(),
            ])
        }
        GridPoint::QuantBeta(z, beta) => {
            let m = model.expect("shared model");
            let sol = solve_asymptotic(m, z, beta, 1e-6)?;
            Ok(vec![
                z.to_string(),
                fmt(beta),
                fmt(sol.c_h),
                fmt(sol.c_g),
                sol.weights.len().to_string(),
            ])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen_source(s: usize, x: usize, z: usize, seed: u64) -> ModelSource {
        ModelSource {
            file: None,
            generated: Some(ModelGenConfig {
                seed,
                target_corr: 0.4,
                ..ModelGenConfig::new(s, x, z)
            }),
        }
    }

    fn base(kind: ExperimentKind, out: &Path) -> ExperimentConfig {
        ExperimentConfig {
            kind,
            model: gen_source(2, 3, 2, 11),
            grid: SweepGrid::default(),
            seed: 7,
            n_samples: 20,
            xi: 1e-4,
            max_iters: 40,
            output: out.to_path_buf(),
            max_wall_ms: None,
        }
    }

    #[test]
    fn ratio_sweep_shape_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = base(ExperimentKind::RatioSweep, &dir.path().join("ratio.csv"));
        cfg.grid.r = vec![0.2, 0.6];
        cfg.grid.delta = vec![0.0, 0.3];
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.rows, 4);
        assert!(!out.partial);
        let first = std::fs::read(&out.csv_path).unwrap();
        let text = String::from_utf8(first.clone()).unwrap();
        assert!(text.starts_with("r,delta,error_h,error_nominal,error_mf"));
        run_experiment(&cfg).unwrap();
        let second = std::fs::read(&out.csv_path).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn bounds_sweep_columns() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = base(ExperimentKind::BoundsSweep, &dir.path().join("b.csv"));
        cfg.grid.epsilon = vec![0.01, 0.1, 1.0];
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.rows, 3);
        let mut rdr = csv::Reader::from_path(&out.csv_path).unwrap();
        let headers = rdr.headers().unwrap().clone();
        assert_eq!(
            headers.iter().collect::<Vec<_>>(),
            ExperimentKind::BoundsSweep.columns()
        );
        for rec in rdr.records() {
            let rec = rec.unwrap();
            let lower: f64 = rec[1].parse().unwrap();
            let upper: f64 = rec[2].parse().unwrap();
            assert!(lower <= upper + 1e-12);
        }
    }

    #[test]
    fn corr_sweep_runs() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = base(ExperimentKind::CorrSweep, &dir.path().join("c.csv"));
        cfg.grid.corr = vec![0.1, 0.8];
        cfg.grid.r = vec![0.5];
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.rows, 2);
    }

    #[test]
    fn cardinality_sweep_runs() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = base(
            ExperimentKind::CardinalitySweep,
            &dir.path().join("card.csv"),
        );
        cfg.model = gen_source(1, 3, 2, 5);
        cfg.grid.quant_alphabet = vec![2, 4];
        cfg.grid.beta = vec![0.01];
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.rows, 2);
    }

    #[test]
    fn invalid_config_rejected_with_field_path() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = base(ExperimentKind::RatioSweep, &dir.path().join("x.csv"));
        let err = run_experiment(&cfg).unwrap_err();
        match err {
            Error::Schema { field, .. } => assert_eq!(field, "grid.r"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn config_roundtrip_from_toml() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(
            &path,
            r#"
kind = "ratio-sweep"
output = "out.csv"
seed = 3

[model.generated]
num_sensors = 2
obs_alphabet = 3
quant_alphabet = 2
target_corr = 0.3
seed = 9

[grid]
r = [0.2, 0.5]
delta = [0.0]
"#,
        )
        .unwrap();
        let cfg = read_experiment_config(&path).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::RatioSweep);
        assert_eq!(cfg.grid.r.len(), 2);
        assert_eq!(cfg.max_iters, 200);
    }

    #[test]
    fn manifest_echoes_config() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = base(ExperimentKind::RatioSweep, &dir.path().join("m.csv"));
        cfg.grid.r = vec![0.3];
        cfg.grid.delta = vec![0.0];
        let out = run_experiment(&cfg).unwrap();
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&out.manifest_path).unwrap()).unwrap();
        assert_eq!(manifest["kind"], "ratio-sweep");
        assert_eq!(manifest["config"]["seed"], 7);
        assert_eq!(manifest["rows"], 1);
        assert_eq!(manifest["partial"], false);
        assert!(manifest["version"].is_string());
    }
}
