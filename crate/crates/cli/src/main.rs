use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gp_moment::experiments::{
    preset, read_data_csv, reproduce, run_estimate, scan, scan_grid, simulate_data, write_data_csv, write_scan_csv,
    ExperimentConfig, Overrides, Problem, Report,
};
use gp_moment::model::builtin_model;
use gp_moment::posterior::PathKind;
use gp_moment::{Error, Result};

#[derive(Parser)]
#[command(name = "gpmoment", version, about = "Bayesian estimation of moment-condition models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config: a TOML file, or a preset name such as `exp3`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides posterior.path.
    #[arg(long, value_parser = parse_path)]
    path: Option<PathKind>,
    /// Overrides grid.m.
    #[arg(long = "m-grid")]
    m_grid: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            m_grid: self.m_grid,
            path: self.path,
        }
    }

    /// A path that does not exist is looked up among the presets.
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(p) if !p.exists() && preset(&p.to_string_lossy()).is_ok() => preset(&p.to_string_lossy()),
            Some(p) => ExperimentConfig::load(p),
            None => Err(Error::Config("--config is required".into())),
        }
        .map_err(|e| e.at_stage("config"))?;
        let before = config.clone();
        self.overrides().apply(&mut config);
        if config != before {
            config.validate().map_err(|e| e.at_stage("config"))?;
        }
        Ok(config)
    }
}

fn parse_path(s: &str) -> std::result::Result<PathKind, String> {
    PathKind::from_name(s).map_err(|e| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Draw a sample from a built-in model and write it as a one-column CSV.
    Simulate {
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long = "theta-star")]
        theta_star: Option<f64>,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "data.csv")]
        out: PathBuf,
    },
    /// Run the full pipeline and write result.json, density.csv and chain.csv.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Sample to use instead of simulating one from the config.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Record wall-clock time in result.json (breaks byte-reproducibility).
        #[arg(long)]
        timing: bool,
    },
    /// Run a named experiment with its preset constants.
    Reproduce {
        /// exp1, exp2_cdf, exp2_mgf, exp3 or exp3_mc100
        id: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_path)]
        path: Option<PathKind>,
        #[arg(long = "m-grid")]
        m_grid: Option<usize>,
        /// Replications for exp3_mc100.
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        timing: bool,
    },
    /// Dump the log-posterior over a θ grid as CSV (theta, logpost, path).
    Scan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Grid size over the θ prior support.
        #[arg(long, default_value_t = 101)]
        points: usize,
        #[arg(long, default_value = "scan.csv")]
        out: PathBuf,
    },
}

fn load_data(path: &Option<PathBuf>) -> Result<Option<Vec<f64>>> {
    path.as_deref().map(read_data_csv).transpose().map_err(|e| e.at_stage("data"))
}

fn output<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| e.at_stage("output"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            model,
            n,
            theta_star,
            common,
            out,
        } => {
            let (name, n, theta, seed) = match &common.config {
                Some(_) => {
                    let c = common.load()?;
                    (model.unwrap_or(c.model), n.unwrap_or(c.n), theta_star.map_or(c.theta_star, |t| vec![t]), c.seed)
                }
                None => {
                    let missing = |what: &str| Error::Config(format!("--{what} is required without --config")).at_stage("config");
                    (
                        model.ok_or_else(|| missing("model"))?,
                        n.ok_or_else(|| missing("n"))?,
                        vec![theta_star.ok_or_else(|| missing("theta-star"))?],
                        common.seed.unwrap_or(0),
                    )
                }
            };
            let m = builtin_model(&name).map_err(|e| e.at_stage("config"))?;
            let data = simulate_data(&m, n, &theta, seed).map_err(|e| e.at_stage("simulate"))?;
            output(write_data_csv(&out, &data))?;
            log::info!("wrote {} draws to {}", data.len(), out.display());
        }
        Command::Estimate {
            common,
            data,
            out,
            timing,
        } => {
            let config = common.load()?;
            let est = run_estimate(&config, load_data(&data)?)?;
            output(est.write(&out, timing))?;
            let r = &est.result;
            println!(
                "{}: posterior mean {:.6}, MAP {:.6}, sd {:.6}, 95% interval [{:.6}, {:.6}]",
                config.name, r.posterior_mean, r.map, r.posterior_sd, r.ci_low, r.ci_high
            );
        }
        Command::Reproduce {
            id,
            seed,
            path,
            m_grid,
            reps,
            out,
            timing,
        } => {
            let overrides = Overrides { seed, m_grid, path };
            match reproduce(&id, &overrides, reps, &out, timing)? {
                Report::Single(r) => println!(
                    "{id}: posterior mean {:.6}, MAP {:.6}, sd {:.6}",
                    r.posterior_mean, r.map, r.posterior_sd
                ),
                Report::MonteCarlo { summary, .. } => println!(
                    "{id}: {} replications, average posterior mean {:.6}, average MAP {:.6}",
                    summary.reps, summary.mean_posterior_mean, summary.mean_map
                ),
            }
        }
        Command::Scan {
            common,
            data,
            points,
            out,
        } => {
            let config = common.load()?;
            let problem = Problem::new(&config, load_data(&data)?)?;
            let thetas = scan_grid(&problem, points).map_err(|e| e.at_stage("scan"))?;
            let rows = scan(&problem, config.posterior.path, &thetas)?;
            output(write_scan_csv(&out, &rows))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
