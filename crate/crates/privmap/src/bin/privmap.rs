//! Thin command-line front end over the privmap library.

use clap::{Args, Parser, Subcommand};
use privmap::asymptotic::solve_asymptotic;
use privmap::baselines::calibrate_and_compare;
use privmap::bounds::bound_report;
use privmap::experiment::{read_experiment_config, run_experiment};
use privmap::model::{
    generate_model, push_forward, read_mapping, read_model, write_mapping, write_model,
    JointModel, ModelGenConfig, StochasticMapping,
};
use privmap::pbpo::{pbpo_optimize, validate_privacy, write_trace_jsonl, PbpoConfig};
use privmap::uncertainty::{build_mfd, Budget};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "privmap", version, about = "Privacy-constrained quantizer design for decentralized detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArg {
    /// Model file (TOML).
    #[arg(long)]
    model: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random joint model and write it to a file.
    GenModel {
        #[arg(long, default_value_t = 3)]
        sensors: usize,
        #[arg(long, default_value_t = 8)]
        obs_alphabet: usize,
        #[arg(long, default_value_t = 2)]
        quant_alphabet: usize,
        /// Target correlation between the public and private hypotheses.
        #[arg(long, default_value_t = 0.4)]
        corr: f64,
        /// Optional target for I(X_t; H | G) per sensor.
        #[arg(long)]
        mi_target: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run the privacy-constrained detection-error optimization.
    Optimize {
        #[command(flatten)]
        model: ModelArg,
        /// Privacy threshold ratio r in (0, 1]; mutually exclusive with --epsilon.
        #[arg(long, conflicts_with = "epsilon")]
        r: Option<f64>,
        /// Privacy budget epsilon; mutually exclusive with --r.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long, default_value_t = 1e-4)]
        xi: f64,
        #[arg(long, default_value_t = 200)]
        max_iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to write the optimized mapping (TOML).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Where to write the per-iteration trace (JSON lines).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Report the most-favorable contaminated distribution of a mapping.
    Mfd {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        mapping: PathBuf,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate the detection-error bounds at a privacy budget.
    Bounds {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Optimize the public error exponent under a private-exponent cap.
    Exponents {
        #[command(flatten)]
        model: ModelArg,
        /// Cap on the private error exponent.
        #[arg(long)]
        beta: f64,
        /// Report alphabet size (clipped to |X|+1 internally).
        #[arg(long)]
        quant_alphabet: Option<usize>,
    },
    /// Calibrate the comparison mechanisms to equal error and tabulate.
    Compare {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 0.6)]
        r: f64,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional CSV output path (defaults to stdout).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check a model + mapping pair against the privacy constraint.
    Validate {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        mapping: PathBuf,
        #[arg(long, conflicts_with = "epsilon")]
        r: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a sweep described by an experiment config file.
    Experiment {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
    },
}

fn budget_from(r: Option<f64>, epsilon: Option<f64>) -> Result<Budget, privmap::Error> {
    match (r, epsilon) {
        (Some(r), None) => Ok(Budget::Ratio(r)),
        (None, Some(e)) => Ok(Budget::Epsilon(e)),
        (None, None) => Err(privmap::Error::InvalidParameter(
            "one of --r or --epsilon is required".into(),
        )),
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    }
}

fn load_pair(
    model: &ModelArg,
    mapping: &PathBuf,
) -> Result<(JointModel, StochasticMapping), privmap::Error> {
    let m = read_model(&model.model)?;
    let q = read_mapping(mapping)?;
    if q.num_sensors() != m.num_sensors()
        || q.obs_alphabet() != m.obs_alphabet()
        || q.quant_alphabet() != m.quant_alphabet()
    {
        return Err(privmap::Error::AlphabetMismatch(
            m.obs_alphabet(),
            q.obs_alphabet(),
        ));
    }
    Ok((m, q))
}

fn run(cmd: Command) -> Result<(), privmap::Error> {
    match cmd {
        Command::GenModel {
            sensors,
            obs_alphabet,
            quant_alphabet,
            corr,
            mi_target,
            seed,
            output,
        } => {
            let model = generate_model(&ModelGenConfig {
                target_corr: corr,
                mi_target,
                seed,
                ..ModelGenConfig::new(sensors, obs_alphabet, quant_alphabet)
            })?;
            write_model(&model, &output)?;
            println!(
                "wrote model: s={sensors} |X|={obs_alphabet} |Z|={quant_alphabet} corr={corr} seed={seed} -> {}",
                output.display()
            );
        }
        Command::Optimize {
            model,
            r,
            epsilon,
            delta,
            xi,
            max_iters,
            seed,
            output,
            trace,
        } => {
            let m = read_model(&model.model)?;
            let cfg = PbpoConfig {
                xi,
                max_iters,
                seed,
                ..PbpoConfig::new(budget_from(r, epsilon)?, delta)
            };
            let out = pbpo_optimize(&m, &cfg)?;
            let report = validate_privacy(&m, &out.mapping, &cfg)?;
            println!("objective (public Bayes error): {:.6}", out.objective);
            println!("nominal private error:          {:.6}", report.min_avg_err_nominal);
            println!("most-favorable private error:   {:.6}", report.r_mf);
            println!("threshold theta:                {:.6}", report.theta);
            println!("effective threshold:            {:.6}", report.theta_eff);
            println!("epsilon_achieved:               {:.6}", report.epsilon_achieved);
            println!("constraint met:                 {}", report.constraint_met);
            println!("iterations:                     {}", out.trace.iterations.len());
            if let Some(path) = output {
                write_mapping(&out.mapping, &path)?;
                println!("wrote mapping -> {}", path.display());
            }
            if let Some(path) = trace {
                let f = std::fs::File::create(&path).map_err(|source| privmap::Error::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                write_trace_jsonl(&out.trace, f).map_err(|source| privmap::Error::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                println!("wrote trace -> {}", path.display());
            }
        }
        Command::Mfd {
            model,
            mapping,
            delta,
            seed,
        } => {
            let (m, q) = load_pair(&model, &mapping)?;
            let fb = push_forward(&m, &q)?;
            let mfd = build_mfd(&fb.p_z_given_g(), delta, seed)?;
            println!("r_nominal = {:.10}", mfd.r_nominal);
            println!("r_mf      = {:.10}", mfd.r_mf);
            println!("z_under   = {}", mfd.z_under);
            println!("z_over    = {}", mfd.z_over);
            println!("A1        = {:.10}", mfd.a1);
            println!("A2        = {:.10}", mfd.a2);
        }
        Command::Bounds {
            model,
            epsilon,
            delta,
            samples,
            seed,
        } => {
            let m = read_model(&model.model)?;
            let rep = bound_report(&m, epsilon, delta, samples, seed)?;
            println!("epsilon       = {:.6}", rep.epsilon);
            println!("lower         = {:.10}", rep.lower);
            println!("upper         = {:.10}", rep.upper);
            println!("i_xh_given_g  = {:.10}", rep.i_xh_given_g);
            println!("tv_xh         = {:.10}", rep.tv_xh);
            println!("n_samples     = {}", rep.n_samples);
        }
        Command::Exponents {
            model,
            beta,
            quant_alphabet,
        } => {
            let m = read_model(&model.model)?;
            let z = quant_alphabet.unwrap_or(m.obs_alphabet() + 1);
            let sol = solve_asymptotic(&m, z, beta, 1e-6)?;
            println!("c_h (public exponent)  = {:.10}", sol.c_h);
            println!("c_g (private exponent) = {:.10}", sol.c_g);
            println!("lambda_h               = {:.6}", sol.lambda_h);
            println!("lambda_g               = {:.6}", sol.lambda_g);
            println!("quant_alphabet         = {}", sol.quant_alphabet);
            println!("support size           = {}", sol.weights.len());
            for (idx, w) in &sol.weights {
                println!("  mapping #{idx}: weight {w:.6}");
            }
        }
        Command::Compare {
            model,
            r,
            delta,
            seed,
            output,
        } => {
            let m = read_model(&model.model)?;
            let cfg = PbpoConfig {
                seed,
                ..PbpoConfig::new(Budget::Ratio(r), delta)
            };
            let table = calibrate_and_compare(&m, &cfg)?;
            let mut lines = vec![
                "metric,parameter,error_h,error_nominal,error_mf,i_xh_given_g".to_string(),
            ];
            for row in &table.rows {
                lines.push(format!(
                    "{},{:.10},{:.10},{:.10},{:.10},{:.10}",
                    row.metric,
                    row.parameter,
                    row.error_h,
                    row.error_nominal,
                    row.error_mf,
                    row.i_xh_given_g
                ));
            }
            let text = lines.join("\n") + "\n";
            match output {
                Some(path) => {
                    std::fs::write(&path, text).map_err(|source| privmap::Error::Io {
                        path: path.display().to_string(),
                        source,
                    })?;
                    println!(
                        "anchor={} target_error={:.6} -> {}",
                        table.anchor,
                        table.target_error,
                        path.display()
                    );
                }
                None => print!("{text}"),
            }
        }
        Command::Validate {
            model,
            mapping,
            r,
            epsilon,
            delta,
            seed,
        } => {
            let (m, q) = load_pair(&model, &mapping)?;
            let cfg = PbpoConfig {
                seed,
                ..PbpoConfig::new(budget_from(r, epsilon)?, delta)
            };
            let report = validate_privacy(&m, &q, &cfg)?;
            println!("nominal private error:        {:.10}", report.min_avg_err_nominal);
            println!("most-favorable private error: {:.10}", report.r_mf);
            println!("threshold theta:              {:.10}", report.theta);
            println!("effective threshold:          {:.10}", report.theta_eff);
            println!("epsilon_achieved:             {:.6}", report.epsilon_achieved);
            println!("constraint met:               {}", report.constraint_met);
            if !report.constraint_met {
                return Err(privmap::Error::Infeasible(
                    "mapping violates the privacy constraint".into(),
                ));
            }
        }
        Command::Experiment { config } => {
            let cfg = read_experiment_config(&config)?;
            let out = run_experiment(&cfg)?;
            println!(
                "wrote {} rows -> {} (manifest {}){}",
                out.rows,
                out.csv_path.display(),
                out.manifest_path.display(),
                if out.partial { " [partial]" } else { "" }
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
