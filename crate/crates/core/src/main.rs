//! `dppal`: determinantal point process batch selection and batch active
//! learning experiments from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ndarray::Array2;

use dppal::data::{generate_sine_dataset, load_csv, load_csv_features, Dataset, SyntheticSineSpec};
use dppal::error::{Error, Result};
use dppal::harness::{
    build_report, default_gamma_grid, mode_compare, read_records, run_experiment, tune_gamma,
    write_records, ExperimentConfig,
};
use dppal::kernel::{build_kernel, default_sigma, gaussian_similarity, KernelMatrix, ScoreVector};
use dppal::mode::{greedy_mode, mcr_mode, McrConfig, SmdConfig};
use dppal::sampler::{sample_exact, sample_mcmc, DppDistribution, McmcConfig};

#[derive(Parser)]
#[command(
    name = "dppal",
    version,
    about = "Diverse batch selection with determinantal point processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeAlgorithmArg {
    Greedy,
    Mcr,
}

#[derive(Clone, Copy, ValueEnum)]
enum SampleMethod {
    Mcmc,
    Exact,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic sine-band dataset as a labeled CSV.
    Generate {
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Number of points.
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Draw one k-DPP batch from a CSV pool.
    Sample {
        /// Pool CSV; all columns are features unless --label-column is set.
        #[arg(long)]
        input: PathBuf,
        /// Column to treat as a label and exclude from the features.
        #[arg(long)]
        label_column: Option<String>,
        #[arg(long)]
        k: usize,
        /// Determinant exponent.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Score exponent (scores are unit here, so this only rescales).
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
        /// Gaussian bandwidth; defaults to the nearest-neighbor heuristic.
        #[arg(long)]
        sigma: Option<f64>,
        /// Exchange-chain steps; defaults to 50 N k.
        #[arg(long)]
        mcmc_steps: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sampler: the exchange chain (any alpha) or the exact
        /// eigendecomposition sampler (alpha = 1 only).
        #[arg(long, value_enum, default_value_t = SampleMethod::Mcmc)]
        method: SampleMethod,
        /// Skip min-max normalization of the features.
        #[arg(long)]
        no_normalize: bool,
    },
    /// Approximate the k-DPP mode of a CSV pool.
    Mode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        label_column: Option<String>,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value_t = ModeAlgorithmArg::Greedy)]
        algorithm: ModeAlgorithmArg,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_normalize: bool,
    },
    /// Benchmark MCR against greedy mode approximation on random planar
    /// Gaussian kernels.
    ModeCompare {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Exit with status 3 unless MCR is better-or-equal on at least 85%
        /// of instances.
        #[arg(long)]
        check: bool,
    },
    /// Run a full batch active-learning experiment from a config file.
    AlRun {
        #[arg(long)]
        config: PathBuf,
        /// Records output path (overrides the config's `output`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's replicate count.
        #[arg(long)]
        replicates: Option<usize>,
        /// Override the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Grid-search gamma on fake labels.
    Tune {
        #[arg(long)]
        config: PathBuf,
        /// Grid values; defaults to 0..=7.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarize one or more records files.
    Report {
        /// JSONL records files produced by `al-run`.
        #[arg(long, required = true, num_args = 1..)]
        records: Vec<PathBuf>,
        /// Also write learning curves as CSV to this path.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

/// Threshold for `mode-compare --check`.
const CHECK_THRESHOLD: f64 = 0.85;

fn load_pool(
    input: &PathBuf,
    label_column: Option<&str>,
    normalize: bool,
) -> Result<Array2<f64>> {
    match label_column {
        Some(col) => Ok(load_csv::<f64>(input, col, normalize)?.features),
        None => load_csv_features(input, normalize),
    }
}

fn pool_kernel(
    features: &Array2<f64>,
    k: usize,
    sigma: Option<f64>,
    alpha: f64,
    gamma: f64,
) -> Result<KernelMatrix<f64>> {
    let sigma = match sigma {
        Some(s) => s,
        None => default_sigma(k.max(2), features.ncols().max(1))?,
    };
    let similarity = gaussian_similarity(&features.view(), sigma)?;
    build_kernel(
        &similarity,
        &ScoreVector::uniform(features.nrows()),
        alpha,
        gamma,
    )
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Generate { out, n, seed } => {
            let ds: Dataset<f64> = generate_sine_dataset(&SyntheticSineSpec {
                n,
                seed,
                ..SyntheticSineSpec::default()
            })?;
            let mut writer = csv::Writer::from_path(&out).map_err(|e| Error::Parse {
                row: 0,
                msg: e.to_string(),
            })?;
            let write_err = |e: csv::Error| Error::Parse {
                row: 0,
                msg: e.to_string(),
            };
            writer.write_record(["x", "y", "label"]).map_err(write_err)?;
            let labels = ds.labels.as_ref().expect("synthetic data is labeled");
            for r in 0..ds.n() {
                writer
                    .write_record([
                        ds.features[[r, 0]].to_string(),
                        ds.features[[r, 1]].to_string(),
                        labels[r].to_string(),
                    ])
                    .map_err(write_err)?;
            }
            writer.flush()?;
            println!("wrote {} rows to {}", ds.n(), out.display());
            Ok(0)
        }
        Command::Sample {
            input,
            label_column,
            k,
            alpha,
            gamma,
            sigma,
            mcmc_steps,
            seed,
            method,
            no_normalize,
        } => {
            let features = load_pool(&input, label_column.as_deref(), !no_normalize)?;
            let kernel = pool_kernel(&features, k, sigma, alpha, gamma)?;
            let dist = DppDistribution::with_alpha(kernel, k, alpha)?;
            let subset = match method {
                SampleMethod::Exact => sample_exact(&dist, seed)?,
                SampleMethod::Mcmc => {
                    let steps =
                        mcmc_steps.unwrap_or_else(|| McmcConfig::default_steps(dist.n(), k));
                    sample_mcmc(&dist, &McmcConfig::new(steps, seed)?)?
                }
            };
            for i in subset.indices() {
                println!("{i}");
            }
            Ok(0)
        }
        Command::Mode {
            input,
            label_column,
            k,
            algorithm,
            sigma,
            seed,
            no_normalize,
        } => {
            let features = load_pool(&input, label_column.as_deref(), !no_normalize)?;
            let kernel = pool_kernel(&features, k, sigma, 1.0, 0.0)?;
            let result = match algorithm {
                ModeAlgorithmArg::Greedy => greedy_mode(&kernel, k)?,
                ModeAlgorithmArg::Mcr => mcr_mode(
                    &kernel,
                    k,
                    &McrConfig {
                        smd: SmdConfig {
                            seed,
                            ..SmdConfig::default()
                        },
                        ..McrConfig::default()
                    },
                )?,
            };
            for i in result.subset.indices() {
                println!("{i}");
            }
            eprintln!("log det = {:.6}", result.log_det);
            Ok(0)
        }
        Command::ModeCompare {
            instances,
            points,
            sigma,
            k,
            seed,
            check,
        } => {
            let summary = mode_compare(instances, points, sigma, k, seed)?;
            println!(
                "instances: {}  points: {}  sigma: {}  k: {}",
                summary.instances, summary.points, summary.sigma, summary.k
            );
            println!(
                "mcr strictly better: {:.1}%",
                100.0 * summary.mcr_strictly_better
            );
            println!(
                "mcr better or equal: {:.1}%",
                100.0 * summary.mcr_better_or_equal
            );
            println!("ties: {:.1}%", 100.0 * summary.tie_rate);
            println!(
                "mean log det: greedy {:.6}, mcr {:.6}",
                summary.mean_greedy_log_det, summary.mean_mcr_log_det
            );
            if check && summary.mcr_better_or_equal < CHECK_THRESHOLD {
                eprintln!(
                    "check failed: better-or-equal {:.1}% < {:.0}%",
                    100.0 * summary.mcr_better_or_equal,
                    100.0 * CHECK_THRESHOLD
                );
                return Ok(3);
            }
            Ok(0)
        }
        Command::AlRun {
            config,
            out,
            replicates,
            seed,
        } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(r) = replicates {
                cfg.replicates = r;
            }
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            let records = run_experiment(&cfg)?;
            let out = out
                .or(cfg.output.clone())
                .unwrap_or_else(|| PathBuf::from("records.jsonl"));
            write_records(&out, &records)?;
            println!("wrote {} records to {}", records.len(), out.display());
            print!("{}", build_report(&records)?.to_table());
            Ok(0)
        }
        Command::Tune {
            config,
            grid,
            replicates,
            seed,
        } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(r) = replicates {
                cfg.replicates = r;
            }
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            let grid = grid.unwrap_or_else(default_gamma_grid);
            let (best, table) = tune_gamma(&cfg, &grid)?;
            println!("{:>8} {:>12} {:>12}", "gamma", "mean acc", "std acc");
            for row in &table {
                println!(
                    "{:>8} {:>12.4} {:>12.4}",
                    row.gamma, row.mean_accuracy, row.std_accuracy
                );
            }
            println!("best gamma: {best}");
            Ok(0)
        }
        Command::Report { records, csv } => {
            let mut all = Vec::new();
            for path in &records {
                all.extend(read_records(path)?);
            }
            let report = build_report(&all)?;
            print!("{}", report.to_table());
            if let Some(path) = csv {
                std::fs::write(&path, report.to_csv())?;
                println!("wrote learning curves to {}", path.display());
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
