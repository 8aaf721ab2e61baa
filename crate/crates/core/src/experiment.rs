//! Config-driven simulate → reconstruct → report pipeline.
//!
//! One JSON document describes the whole experiment; every field has a
//! default, and the defaults reproduce the pair coherent `|Phi(3,0)>` run
//! (`n_max = 10`, 101 points on `y in [0.1, 0.9]`, 20 phases, `tau = 20000`,
//! threshold 0.1).

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{AutoSettings, DegreePolicy};
use crate::error::{Error, Result};
use crate::inversion::{reconstruct, BandStatus, ReconstructionConfig, ReconstructionReport, Symmetry, ThresholdMode};
use crate::simulation::{add_noise, sample_exact, write_json, GridSpec, MeasurementRecord, NoiseMode, NoiseSpec};
use crate::states::{DensityMatrix, StateFamily, StateParams};
use crate::transforms::moments;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub state: StateParams,
    pub n_max: usize,
    pub grid: GridSpec,
    pub noise: NoiseSpec,
    pub threshold: f64,
    pub threshold_mode: ThresholdMode,
    pub degree_policy: DegreePolicy,
    pub degree_overrides: std::collections::BTreeMap<usize, usize>,
    /// Use the known symmetry of the chosen state family to skip bands.
    pub assume_symmetry: bool,
    pub auto: AutoSettings,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            state: StateParams::pair_coherent(Complex64::new(3.0, 0.0), 0),
            n_max: 10,
            grid: GridSpec::default(),
            noise: NoiseSpec::default(),
            threshold: 0.1,
            threshold_mode: ThresholdMode::Absolute,
            degree_policy: DegreePolicy::PaperFixed,
            degree_overrides: Default::default(),
            assume_symmetry: false,
            auto: AutoSettings::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_owned(),
            source,
        })
    }

    /// Hard errors for invalid settings; returns soft warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        self.grid.validate()?;
        if self.noise.tau == 0 {
            return Err(Error::invalid("tau must be at least 1"));
        }
        if !(self.threshold >= 0.0) {
            return Err(Error::invalid(format!("threshold must be >= 0, got {}", self.threshold)));
        }
        // aliasing (n_phi < 2 n_max + 1) is reported by `reconstruct` itself
        let mut warnings = Vec::new();
        if self.assume_symmetry && self.symmetry() == Symmetry::None {
            warnings.push(format!(
                "--assume-symmetry has no effect for {:?} states with these parameters",
                self.state.family
            ));
        }
        Ok(warnings)
    }

    /// Band symmetry implied by the state family, when requested.
    pub fn symmetry(&self) -> Symmetry {
        if !self.assume_symmetry {
            return Symmetry::None;
        }
        match self.state.family {
            StateFamily::Perelomov if self.state.charge == 0 && self.state.eta.im == 0.0 => {
                Symmetry::PerelomovReal
            }
            StateFamily::SuperpositionPair => Symmetry::EvenParity,
            _ => Symmetry::None,
        }
    }

    pub fn reconstruction_config(&self) -> ReconstructionConfig {
        ReconstructionConfig {
            n_max: self.n_max,
            threshold: self.threshold,
            threshold_mode: self.threshold_mode,
            degree_policy: self.degree_policy.clone(),
            degree_overrides: self.degree_overrides.clone(),
            symmetry: self.symmetry(),
            auto: self.auto,
        }
    }
}

/// In-memory result of one pipeline pass.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub exact: DensityMatrix,
    pub record: MeasurementRecord,
    pub report: ReconstructionReport,
}

/// Exact state and (possibly noisy) record for a config.
pub fn simulate(config: &ExperimentConfig) -> Result<(DensityMatrix, MeasurementRecord)> {
    let rho = config.state.build(config.n_max)?;
    let exact = sample_exact(&rho, rho.q(), &config.grid)?;
    let record = match config.noise.mode {
        NoiseMode::Exact => exact,
        _ => add_noise(&exact, config.noise)?,
    };
    Ok((rho, record))
}

/// Simulation and reconstruction, without touching the filesystem.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<RunOutcome> {
    for w in config.validate()? {
        log::warn!("{w}");
    }
    let (exact, record) = simulate(config)?;
    let report = reconstruct(&record, &config.reconstruction_config())?;
    Ok(RunOutcome { exact, record, report })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_owned(),
        source,
    })
}

/// Matrix as `m,n,value,imag[,estimated]` rows.
pub fn write_matrix_csv(path: &Path, rho: &DensityMatrix, estimated: Option<&[Vec<bool>]>) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_owned(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    match estimated {
        Some(_) => w.write_record(["m", "n", "value", "imag", "estimated"]),
        None => w.write_record(["m", "n", "value", "imag"]),
    }
    .map_err(csv_err)?;
    for m in 0..rho.dim() {
        for n in 0..rho.dim() {
            let z = rho.get(m, n);
            match estimated {
                Some(est) => w.serialize((m, n, z.re, z.im, est[m][n])),
                None => w.serialize((m, n, z.re, z.im)),
            }
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

/// Writes the reconstruction artifacts for a record into `dir`: moment
/// tables, the report, and the reconstructed matrix table.
pub fn write_reconstruction(dir: &Path, record: &MeasurementRecord, report: &ReconstructionReport) -> Result<()> {
    create_dir(dir)?;
    for band in &report.bands {
        if band.status == BandStatus::Fitted {
            moments(record, band.k)?.write_csv(&dir.join(format!("moments_k{}.csv", band.k)))?;
        }
    }
    write_json(&dir.join("report.json"), report)?;
    write_matrix_csv(&dir.join("rho_reconstructed.csv"), &report.rho_hat, Some(&report.estimated))
}

/// Full run. Writes `config.json`, `record.json`, `record.csv`,
/// `moments_k*.csv`, `report.json`, and the exact / reconstructed /
/// difference matrix tables to `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ReconstructionReport> {
    let outcome = run_pipeline(config)?;
    let dir = &config.output_dir;
    create_dir(dir)?;
    write_json(&dir.join("config.json"), config)?;
    outcome.record.write_json(&dir.join("record.json"))?;
    outcome.record.write_csv(&dir.join("record.csv"))?;
    write_reconstruction(dir, &outcome.record, &outcome.report)?;
    write_matrix_csv(&dir.join("rho_exact.csv"), &outcome.exact, None)?;
    let diff = difference(&outcome.exact, &outcome.report.rho_hat);
    write_matrix_csv(&dir.join("rho_difference.csv"), &diff, Some(&outcome.report.estimated))?;
    Ok(outcome.report)
}

/// `exact - reconstructed`.
pub fn difference(exact: &DensityMatrix, reconstructed: &DensityMatrix) -> DensityMatrix {
    DensityMatrix::from_elements(exact.q(), exact.elements() - reconstructed.elements())
        .expect("square input")
}

/// Per-band comparison of the scatter of fitted coefficients across seeds
/// with the SVD variance formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpread {
    pub k: usize,
    pub degree: usize,
    /// Sample variance of each coefficient, `E|a_j - mean|^2`.
    pub empirical_variance: Vec<f64>,
    /// `sum v_ji^2 / s_i^2` times the seed-averaged residual noise level.
    pub predicted_variance: Vec<f64>,
    pub mean_residual_variance: f64,
}

impl CoefficientSpread {
    pub fn ratios(&self) -> Vec<f64> {
        self.empirical_variance
            .iter()
            .zip(&self.predicted_variance)
            .map(|(e, p)| e / p)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub seeds: Vec<u64>,
    /// `max_{n,m} |rho_hat - rho|` per seed.
    pub max_errors: Vec<f64>,
    pub median_max_error: f64,
    /// Mean of `rho_hat - rho` per element, real and imaginary parts.
    pub mean_error_re: Vec<Vec<f64>>,
    pub mean_error_im: Vec<Vec<f64>>,
    /// `sqrt(mean |rho_hat - rho|^2)` per element.
    pub rms_error: Vec<Vec<f64>>,
    pub coefficient_spread: Vec<CoefficientSpread>,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Pipeline outcomes for seeds `seed, seed+1, ..., seed+n_seeds-1`, in seed
/// order.
pub fn ensemble_outcomes(config: &ExperimentConfig, n_seeds: usize) -> Result<Vec<RunOutcome>> {
    if n_seeds == 0 {
        return Err(Error::invalid("n_seeds must be at least 1"));
    }
    (0..n_seeds as u64)
        .into_par_iter()
        .map(|i| {
            let mut cfg = config.clone();
            cfg.noise.seed = config.noise.seed.wrapping_add(i);
            run_pipeline(&cfg)
        })
        .collect()
}

pub fn summarize(outcomes: &[RunOutcome]) -> EnsembleSummary {
    let n = outcomes.len() as f64;
    let dim = outcomes[0].exact.dim();
    let seeds = outcomes.iter().map(|o| o.record.noise.seed).collect();
    let max_errors: Vec<f64> = outcomes
        .iter()
        .map(|o| o.report.rho_hat.max_abs_diff(&o.exact))
        .collect();
    let mut mean_re = vec![vec![0.0; dim]; dim];
    let mut mean_im = vec![vec![0.0; dim]; dim];
    let mut rms = vec![vec![0.0; dim]; dim];
    for o in outcomes {
        for r in 0..dim {
            for c in 0..dim {
                let d = o.report.rho_hat.get(r, c) - o.exact.get(r, c);
                mean_re[r][c] += d.re / n;
                mean_im[r][c] += d.im / n;
                rms[r][c] += d.norm_sqr() / n;
            }
        }
    }
    rms.iter_mut().flatten().for_each(|v| *v = v.sqrt());

    let coefficient_spread = (0..outcomes[0].report.bands.len())
        .filter_map(|k| coefficient_spread(outcomes, k))
        .collect();

    EnsembleSummary {
        seeds,
        median_max_error: median(&max_errors),
        max_errors,
        mean_error_re: mean_re,
        mean_error_im: mean_im,
        rms_error: rms,
        coefficient_spread,
    }
}

/// `None` when the band was not fitted with one common degree in every run,
/// or when there are fewer than two runs.
pub fn coefficient_spread(outcomes: &[RunOutcome], k: usize) -> Option<CoefficientSpread> {
    let sols: Vec<_> = outcomes
        .iter()
        .map(|o| o.report.bands.get(k)?.solution.as_ref())
        .collect::<Option<_>>()?;
    let degree = outcomes[0].report.bands[k].degree_used?;
    if sols.len() < 2 || outcomes.iter().any(|o| o.report.bands[k].degree_used != Some(degree)) {
        return None;
    }
    let n = sols.len() as f64;
    let n_coef = degree + 1;
    let mut empirical = vec![0.0; n_coef];
    for j in 0..n_coef {
        let mean: Complex64 = sols.iter().map(|s| s.coefficients[j]).sum::<Complex64>() / n;
        empirical[j] = sols.iter().map(|s| (s.coefficients[j] - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
    }
    let mean_residual_variance = sols.iter().map(|s| s.residual_variance).sum::<f64>() / n;
    let predicted = sols[0]
        .variances
        .iter()
        .map(|v| v * mean_residual_variance)
        .collect();
    Some(CoefficientSpread {
        k,
        degree,
        empirical_variance: empirical,
        predicted_variance: predicted,
        mean_residual_variance,
    })
}

/// Runs the ensemble and writes `ensemble_summary.json` to the output
/// directory.
pub fn run_ensemble(config: &ExperimentConfig, n_seeds: usize) -> Result<EnsembleSummary> {
    let outcomes = ensemble_outcomes(config, n_seeds)?;
    let summary = summarize(&outcomes);
    create_dir(&config.output_dir)?;
    write_json(&config.output_dir.join("ensemble_summary.json"), &summary)?;
    Ok(summary)
}
