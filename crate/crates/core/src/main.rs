use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tsre::estimators::{Bootstrap, Method};
use tsre::genotype::{compute_grm, load_genotypes, standardize};
use tsre::harness::{reproduce_table, ReplicationSpec, Selection, Target};
use tsre::pipeline::{estimate_real, simulate_to_dir, write_estimates, EstimateRequest};
use tsre::simgen::ScenarioConfig;
use tsre::theory::TheoryReport;
use tsre::tsre::Centering;
use tsre::{Error, Result};

#[derive(Parser)]
#[command(name = "tsre", version, about = "Second-moment Mendelian randomization on the GRM")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one dataset from a scenario config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Scenario override, `key=value`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Compute the GRM of a genotype CSV.
    Grm {
        #[arg(long)]
        genotypes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Estimate the causal effect from individual-level files.
    Estimate {
        /// Method tag, or several separated by commas.
        #[arg(long, value_delimiter = ',', required = true)]
        method: Vec<Method>,
        #[arg(long)]
        genotypes: PathBuf,
        #[arg(long)]
        exposure: PathBuf,
        #[arg(long)]
        outcome: PathBuf,
        /// all, top:K or pval:A (default: all for tsre, top:20 otherwise).
        #[arg(long)]
        select: Option<Selection>,
        /// Precomputed GRM in the genotype sample order.
        #[arg(long)]
        grm: Option<PathBuf>,
        /// Relatedness cutoff on |A_ij|.
        #[arg(long)]
        grm_cutoff: Option<f64>,
        #[arg(long, default_value = "covariance")]
        centering: Centering,
        /// Bootstrap resamples for the median estimators.
        #[arg(long, default_value_t = 1000)]
        bootstrap: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Monte-Carlo replication of a bundled target.
    Replicate {
        #[arg(long)]
        target: Target,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        /// Restrict to these methods (comma separated).
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        /// Force one selection on every method.
        #[arg(long)]
        select: Option<Selection>,
        /// Scenario config for the custom target.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value_t = 1000)]
        bootstrap: usize,
    },
    /// Closed-form bias and variance for a scenario.
    Theory {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>> {
    raw.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
                .ok_or_else(|| Error::Usage(format!("override {s:?} is not KEY=VALUE")))
        })
        .collect()
}

fn load_config(path: &PathBuf, overrides: &[String]) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(path)?;
    for (k, v) in parse_overrides(overrides)? {
        cfg.set(&k, &v)?;
    }
    Ok(cfg)
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(0) => Err(Error::Usage("--threads must be at least 1".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Usage(e.to_string()))?
            .install(f),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            let (_, paths) = simulate_to_dir(&cfg, &out)?;
            for p in paths {
                println!("{}", p.display());
            }
        }
        Command::Grm { genotypes, out, threads } => {
            let g = load_genotypes(&genotypes)?;
            let a = with_threads(threads, || compute_grm(&standardize(&g)?))?;
            a.write_file(&out)?;
        }
        Command::Estimate {
            method,
            genotypes,
            exposure,
            outcome,
            select,
            grm,
            grm_cutoff,
            centering,
            bootstrap,
            seed,
            threads,
        } => {
            let req = EstimateRequest {
                methods: method,
                selection: select,
                grm_cutoff,
                centering,
                bootstrap: Bootstrap {
                    resamples: bootstrap,
                    seed,
                },
            };
            let rows = with_threads(threads, || {
                estimate_real(&genotypes, &exposure, &outcome, grm.as_deref(), &req)
            })?;
            write_estimates(&rows, io::stdout().lock())?;
        }
        Command::Replicate {
            target,
            reps,
            seed,
            out,
            threads,
            methods,
            select,
            config,
            overrides,
            bootstrap,
        } => {
            let spec = ReplicationSpec {
                target,
                reps,
                seed,
                methods,
                selection: select,
                overrides: parse_overrides(&overrides)?,
                bootstrap_resamples: bootstrap,
                config: config.map(|p| ScenarioConfig::load(&p)).transpose()?,
            };
            let paths = with_threads(threads, || reproduce_table(&spec, &out))?;
            for p in paths {
                println!("{}", p.display());
            }
        }
        Command::Theory { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            print!("{}", TheoryReport::from_config(&cfg)?.to_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
