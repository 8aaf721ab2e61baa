use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use su11tomo::diagnostics::{diagnose, DegreePolicy};
use su11tomo::experiment::{self, ExperimentConfig};
use su11tomo::inversion::reconstruct;
use su11tomo::simulation::{MeasurementRecord, NoiseMode};
use su11tomo::transforms::moments;
use su11tomo::{Error, Result};

#[derive(Parser)]
#[command(name = "su11tomo", version, about = "Simulate and invert SU(1,1) coherent-state Q-function data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: CommonOpts,
}

#[derive(Args)]
struct CommonOpts {
    /// JSON experiment config; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    assume_symmetry: bool,
    #[arg(long, global = true, value_enum)]
    noise_mode: Option<NoiseArg>,
    /// SVD truncation threshold.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// auto, paper, full, or fixed:<d> / fixed:<d0,d1,...>
    #[arg(long, global = true, value_parser = parse_policy)]
    degree_policy: Option<DegreePolicy>,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Exact,
    Paper,
    Shot,
}

#[derive(Subcommand)]
enum Command {
    /// Write the measurement record for the configured state.
    Simulate,
    /// Invert an existing record.
    Reconstruct {
        #[arg(long)]
        record: PathBuf,
    },
    /// Print the per-band degree diagnostics of a record.
    Diagnose {
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Simulate and reconstruct, writing every artifact.
    Run,
    /// Repeat the run over consecutive seeds and summarize the spread.
    Ensemble {
        #[arg(long, default_value_t = 50)]
        n_seeds: usize,
    },
}

fn parse_policy(s: &str) -> std::result::Result<DegreePolicy, String> {
    match s {
        "auto" => Ok(DegreePolicy::Auto),
        "paper" => Ok(DegreePolicy::PaperFixed),
        "full" => Ok(DegreePolicy::Full),
        _ => {
            let list = s
                .strip_prefix("fixed:")
                .ok_or_else(|| format!("unknown degree policy '{s}'"))?;
            let degrees = list
                .split(',')
                .map(|d| d.trim().parse::<usize>().map_err(|e| format!("bad degree '{d}': {e}")))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Ok(DegreePolicy::UserFixed(degrees))
        }
    }
}

fn load_config(opts: &CommonOpts) -> Result<ExperimentConfig> {
    let mut config = match &opts.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = opts.seed {
        config.noise.seed = seed;
    }
    if let Some(dir) = &opts.output {
        config.output_dir = dir.clone();
    }
    if opts.assume_symmetry {
        config.assume_symmetry = true;
    }
    if let Some(mode) = opts.noise_mode {
        config.noise.mode = match mode {
            NoiseArg::Exact => NoiseMode::Exact,
            NoiseArg::Paper => NoiseMode::PaperLiteral,
            NoiseArg::Shot => NoiseMode::PhysicalShot,
        };
    }
    if let Some(t) = opts.threshold {
        config.threshold = t;
    }
    if let Some(p) = &opts.degree_policy {
        config.degree_policy = p.clone();
    }
    config.validate()?;
    Ok(config)
}

fn mkdir(dir: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_owned(),
        source,
    })
}

fn execute(cli: Cli) -> Result<()> {
    let config = load_config(&cli.opts)?;
    let out = &config.output_dir;
    match cli.command {
        Command::Simulate => {
            let (rho, record) = experiment::simulate(&config)?;
            mkdir(out)?;
            record.write_json(&out.join("record.json"))?;
            record.write_csv(&out.join("record.csv"))?;
            experiment::write_matrix_csv(&out.join("rho_exact.csv"), &rho, None)?;
            println!("wrote {}", out.join("record.json").display());
        }
        Command::Reconstruct { record } => {
            let record = MeasurementRecord::read_json(&record)?;
            let report = reconstruct(&record, &config.reconstruction_config())?;
            experiment::write_reconstruction(out, &record, &report)?;
            print_degrees(&report);
        }
        Command::Diagnose { record } => {
            let record = match record {
                Some(path) => MeasurementRecord::read_json(&path)?,
                None => experiment::simulate(&config)?.1,
            };
            println!("k  degree  fallback  S(1..)  sign_changes(0..)");
            for k in 0..=config.n_max {
                let table = moments(&record, k)?;
                let d = diagnose(&table, &config.degree_policy, config.n_max, &config.auto)
                    .map_err(|e| Error::Band { k, source: Box::new(e) })?;
                let seq: Vec<String> = d.seq_sum_squares.iter().map(|s| format!("{s:.3e}")).collect();
                let sc: Vec<String> = d.sign_changes.iter().map(|s| s.to_string()).collect();
                println!(
                    "{k}  {}  {}  [{}]  [{}]",
                    d.selected_degree,
                    d.fallback,
                    seq.join(" "),
                    sc.join(" ")
                );
            }
        }
        Command::Run => {
            let report = experiment::run_experiment(&config)?;
            print_degrees(&report);
            let exact = config.state.build(config.n_max)?;
            println!("max_abs_error {:.6e}", report.rho_hat.max_abs_diff(&exact));
            println!("wrote {}", out.display());
        }
        Command::Ensemble { n_seeds } => {
            let summary = experiment::run_ensemble(&config, n_seeds)?;
            println!("seeds {}", summary.seeds.len());
            println!("median_max_error {:.6e}", summary.median_max_error);
            for s in &summary.coefficient_spread {
                let r: Vec<String> = s.ratios().iter().map(|x| format!("{x:.3}")).collect();
                println!("k={} variance_ratio [{}]", s.k, r.join(" "));
            }
        }
    }
    Ok(())
}

fn print_degrees(report: &su11tomo::inversion::ReconstructionReport) {
    for b in &report.bands {
        let degree = b.degree_used.map_or("-".to_string(), |d| d.to_string());
        println!("k={} status={:?} degree={}", b.k, b.status, degree);
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={} message={:?}", e.kind(), e.to_string());
            ExitCode::FAILURE
        }
    }
}
