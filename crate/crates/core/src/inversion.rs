//! Band-by-band recovery of the density matrix.
//!
//! Each moment table `f_k(y_i)` is fitted by a polynomial in the monomial
//! basis `1, y, ..., y^d`. The Vandermonde design matrix `G` is
//! decomposed as `U S V^T` and the solution is formed from the singular
//! triplets above a threshold only:
//!
//! ```text
//! a = sum_{s_i > t} (u_i . b / s_i) v_i,     var(a_j) = sum_{s_i > t} v_ji^2 / s_i^2
//! ```
//!
//! The coefficients are `a_{m+1} = B_mk(q) rho[m+k][m]`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{diagnose, AutoSettings, DegreePolicy, DiagnosticsReport};
use crate::error::{Error, Result};
use crate::simulation::MeasurementRecord;
use crate::states::{DensityMatrix, Physicality};
use crate::transforms::{moments, series_coefficient, CoefficientTable, MomentTable};

const SVD_EPS: f64 = 1e-15;
const SVD_MAX_ITER: usize = 10_000;

/// Polynomial least-squares problem for one band.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    pub k: usize,
    pub q: usize,
    pub degree: usize,
    /// `N x (degree+1)`, `G[i][j] = y_i^j`.
    pub design: DMatrix<f64>,
    pub target: Vec<Complex64>,
}

pub fn build_design(moments: &MomentTable, degree: usize) -> Result<DesignProblem> {
    let n = moments.len();
    if degree + 1 > n {
        return Err(Error::DegreeTooHigh { degree, points: n });
    }
    let design = DMatrix::from_fn(n, degree + 1, |i, j| moments.y_values[i].powi(j as i32));
    Ok(DesignProblem {
        k: moments.k,
        q: moments.q,
        degree,
        design,
        target: moments.f_values.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Drop singular values `<= threshold`.
    #[default]
    Absolute,
    /// Drop singular values `<= threshold * s_1`.
    Relative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdSolution {
    pub coefficients: Vec<Complex64>,
    /// `sum_{retained} v_ji^2 / s_i^2`, i.e. for unit data noise.
    pub variances: Vec<f64>,
    /// Descending.
    pub singular_values: Vec<f64>,
    pub retained_count: usize,
    pub chi_squared: f64,
    /// `chi^2 / (N - retained)`, the data noise level implied by the residuals.
    pub residual_variance: f64,
    #[serde(skip)]
    pub residuals: Vec<Complex64>,
}

impl SvdSolution {
    /// Standard deviations of the coefficients at the residual noise level.
    pub fn coefficient_std(&self) -> Vec<f64> {
        self.variances
            .iter()
            .map(|v| (v * self.residual_variance).sqrt())
            .collect()
    }
}

/// Thin SVD of the design matrix, singular values sorted descending.
fn sorted_svd(design: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let (rows, cols) = design.shape();
    let svd = design
        .clone()
        .try_svd(true, true, SVD_EPS, SVD_MAX_ITER)
        .ok_or(Error::SvdFailed { rows, cols })?;
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::SvdFailed { rows, cols }),
    };
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let u_sorted = DMatrix::from_fn(u.nrows(), order.len(), |i, c| u[(i, order[c])]);
    // columns of V, i.e. rows of V^T
    let v_sorted = DMatrix::from_fn(v_t.ncols(), order.len(), |j, c| v_t[(order[c], j)]);
    let s_sorted = order.iter().map(|&i| s[i]).collect();
    Ok((u_sorted, s_sorted, v_sorted))
}

/// Singular values of the design matrix alone, descending.
pub fn design_singular_values(problem: &DesignProblem) -> Result<Vec<f64>> {
    Ok(sorted_svd(&problem.design)?.1)
}

/// Truncated-SVD least squares; real and imaginary parts of the target are
/// solved against the same real decomposition.
pub fn solve_svd(problem: &DesignProblem, threshold: f64, mode: ThresholdMode) -> Result<SvdSolution> {
    if !(threshold >= 0.0) {
        return Err(Error::invalid(format!("threshold must be >= 0, got {threshold}")));
    }
    let (u, s, v) = sorted_svd(&problem.design)?;
    let cutoff = match mode {
        ThresholdMode::Absolute => threshold,
        ThresholdMode::Relative => threshold * s.first().copied().unwrap_or(0.0),
    };
    let retained = s.iter().take_while(|&&si| si > cutoff).count();
    let n_coef = problem.design.ncols();
    let n = problem.design.nrows();

    let mut coefficients = vec![Complex64::default(); n_coef];
    let mut variances = vec![0.0; n_coef];
    for i in 0..retained {
        let proj: Complex64 = (0..n).map(|r| problem.target[r] * u[(r, i)]).sum();
        let scaled = proj / s[i];
        for j in 0..n_coef {
            coefficients[j] += scaled * v[(j, i)];
            variances[j] += (v[(j, i)] / s[i]).powi(2);
        }
    }

    let residuals: Vec<Complex64> = (0..n)
        .map(|r| {
            let fit: Complex64 = (0..n_coef).map(|j| coefficients[j] * problem.design[(r, j)]).sum();
            fit - problem.target[r]
        })
        .collect();
    let chi_squared = residuals.iter().map(|r| r.norm_sqr()).sum::<f64>();
    let dof = n.saturating_sub(retained);
    let residual_variance = if dof > 0 { chi_squared / dof as f64 } else { 0.0 };

    Ok(SvdSolution {
        coefficients,
        variances,
        singular_values: s,
        retained_count: retained,
        chi_squared,
        residual_variance,
        residuals,
    })
}

/// `rho[m+k][m] = a_{m+1} / B_mk(q)` for every fitted coefficient.
pub fn extract_rho_band(solution: &SvdSolution, k: usize, q: usize) -> Vec<Complex64> {
    solution
        .coefficients
        .iter()
        .enumerate()
        .map(|(m, a)| a / series_coefficient(m, k, q))
        .collect()
}

/// Unit-noise variances of the band elements, `var(a_{m+1}) / B_mk^2`.
pub fn band_variances(solution: &SvdSolution, k: usize, q: usize) -> Vec<f64> {
    solution
        .variances
        .iter()
        .enumerate()
        .map(|(m, v)| v / series_coefficient(m, k, q).powi(2))
        .collect()
}

/// Known structure of the input state that lets some bands be skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    #[default]
    None,
    /// `q = 0`, real parameter Perelomov state: every band follows from
    /// `k = 0` and `k = 1` via `rho[n+2j][n] = rho[n+j][n+j]` and
    /// `rho[n+2j+1][n] = rho[n+j+1][n+j]`.
    PerelomovReal,
    /// Only even pair numbers occur; odd bands vanish.
    EvenParity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionConfig {
    pub n_max: usize,
    pub threshold: f64,
    #[serde(default)]
    pub threshold_mode: ThresholdMode,
    #[serde(default)]
    pub degree_policy: DegreePolicy,
    /// Per-band degree overrides, applied after the policy.
    #[serde(default)]
    pub degree_overrides: std::collections::BTreeMap<usize, usize>,
    #[serde(default)]
    pub symmetry: Symmetry,
    #[serde(default)]
    pub auto: AutoSettings,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            n_max: 10,
            threshold: 0.1,
            threshold_mode: ThresholdMode::Absolute,
            degree_policy: DegreePolicy::PaperFixed,
            degree_overrides: Default::default(),
            symmetry: Symmetry::None,
            auto: AutoSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandStatus {
    Fitted,
    /// Filled from other bands through the declared symmetry.
    FromSymmetry,
    /// Zero by the declared symmetry, not fitted.
    AssumedZero,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandResult {
    pub k: usize,
    pub status: BandStatus,
    pub degree_used: Option<usize>,
    pub solution: Option<SvdSolution>,
    /// `rho[m+k][m]` for the estimated `m`.
    pub rho: Vec<Complex64>,
    /// Standard deviations of `rho`, at the residual noise level.
    pub rho_std: Vec<f64>,
    /// Every estimated element lies within three standard deviations of 0.
    pub below_noise_floor: bool,
    pub diagnostics: Option<DiagnosticsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub rho_hat: DensityMatrix,
    /// `estimated[n][m]` is false for elements the fit could not reach
    /// (above the selected degree); those are left at zero in `rho_hat`.
    pub estimated: Vec<Vec<bool>>,
    pub bands: Vec<BandResult>,
    pub truncation_threshold: f64,
    pub threshold_mode: ThresholdMode,
    pub symmetry: Symmetry,
    pub physicality: Physicality,
    /// `n_phi < 2 n_max + 1`: higher harmonics may alias onto the fitted ones.
    pub aliasing_possible: bool,
}

impl ReconstructionReport {
    pub fn degrees_used(&self) -> Vec<Option<usize>> {
        self.bands.iter().map(|b| b.degree_used).collect()
    }

    pub fn band(&self, k: usize) -> &BandResult {
        &self.bands[k]
    }

    /// First band failure, if any.
    pub fn ensure_complete(&self) -> Result<()> {
        match self.bands.iter().find(|b| b.status == BandStatus::Failed) {
            Some(b) => Err(Error::Band {
                k: b.k,
                source: Box::new(Error::ContractViolation(
                    b.error.clone().unwrap_or_else(|| "unknown failure".into()),
                )),
            }),
            None => Ok(()),
        }
    }
}

fn fit_band(
    record: &MeasurementRecord,
    k: usize,
    config: &ReconstructionConfig,
    table: &CoefficientTable,
) -> Result<BandResult> {
    let moments = moments(record, k)?;
    let diag = diagnose(&moments, &config.degree_policy, config.n_max, &config.auto)?;
    let degree = match config.degree_overrides.get(&k) {
        Some(&d) => d.min(config.n_max - k),
        None => diag.selected_degree,
    };
    let problem = build_design(&moments, degree)?;
    let solution = solve_svd(&problem, config.threshold, config.threshold_mode)?;
    let rho: Vec<Complex64> = solution
        .coefficients
        .iter()
        .zip(table.band(k))
        .map(|(a, b)| a / b)
        .collect();
    let rho_std: Vec<f64> = solution
        .coefficient_std()
        .iter()
        .zip(table.band(k))
        .map(|(s, b)| s / b)
        .collect();
    let below_noise_floor = rho.iter().zip(&rho_std).all(|(r, s)| r.norm() <= 3.0 * s);
    Ok(BandResult {
        k,
        status: BandStatus::Fitted,
        degree_used: Some(degree),
        solution: Some(solution),
        rho,
        rho_std,
        below_noise_floor,
        diagnostics: Some(diag),
        error: None,
    })
}

fn placeholder_band(k: usize, status: BandStatus, error: Option<String>) -> BandResult {
    BandResult {
        k,
        status,
        degree_used: None,
        solution: None,
        rho: Vec::new(),
        rho_std: Vec::new(),
        below_noise_floor: false,
        diagnostics: None,
        error,
    }
}

/// Runs DFT, rescaling, degree selection, truncated SVD and band extraction
/// for every `k = 0..=n_max`, then assembles a Hermitian estimate. Band
/// failures are recorded in the report rather than aborting the run.
pub fn reconstruct(record: &MeasurementRecord, config: &ReconstructionConfig) -> Result<ReconstructionReport> {
    record.validate()?;
    let n_max = config.n_max;
    if config.symmetry == Symmetry::PerelomovReal && record.q != 0 {
        return Err(Error::invalid("the Perelomov band symmetry needs q = 0"));
    }
    if !(config.threshold >= 0.0) {
        return Err(Error::invalid(format!("threshold must be >= 0, got {}", config.threshold)));
    }
    let aliasing_possible = record.grid.n_phi < 2 * n_max + 1;
    if aliasing_possible {
        log::warn!(
            "n_phi = {} < 2 n_max + 1 = {}: phase harmonics may alias",
            record.grid.n_phi,
            2 * n_max + 1
        );
    }
    let table = CoefficientTable::new(record.q, n_max);

    let bands: Vec<BandResult> = (0..=n_max)
        .into_par_iter()
        .map(|k| {
            let skip = match config.symmetry {
                Symmetry::PerelomovReal if k >= 2 => Some(BandStatus::FromSymmetry),
                Symmetry::EvenParity if k % 2 == 1 => Some(BandStatus::AssumedZero),
                _ => None,
            };
            if let Some(status) = skip {
                return placeholder_band(k, status, None);
            }
            fit_band(record, k, config, &table).unwrap_or_else(|e| {
                placeholder_band(
                    k,
                    BandStatus::Failed,
                    Some(Error::Band { k, source: Box::new(e) }.to_string()),
                )
            })
        })
        .collect();

    let dim = n_max + 1;
    let mut rho_hat = DensityMatrix::zeros(record.q, n_max);
    let mut estimated = vec![vec![false; dim]; dim];
    let mut put = |n: usize, m: usize, z: Complex64, rho_hat: &mut DensityMatrix| {
        if n == m {
            rho_hat.set(n, n, Complex64::new(z.re, 0.0));
        } else {
            rho_hat.set(n, m, z);
            rho_hat.set(m, n, z.conj());
        }
        estimated[n][m] = true;
        estimated[m][n] = true;
    };
    for band in &bands {
        match band.status {
            BandStatus::Fitted => {
                for (m, z) in band.rho.iter().enumerate() {
                    put(m + band.k, m, *z, &mut rho_hat);
                }
            }
            BandStatus::AssumedZero => {
                for m in 0..dim - band.k {
                    put(m + band.k, m, Complex64::default(), &mut rho_hat);
                }
            }
            BandStatus::FromSymmetry | BandStatus::Failed => {}
        }
    }
    if config.symmetry == Symmetry::PerelomovReal {
        let lookup = |k: usize, m: usize| -> Option<Complex64> {
            bands.get(k).filter(|b| b.status == BandStatus::Fitted)?.rho.get(m).copied()
        };
        for k in 2..dim {
            for n in 0..dim - k {
                let source = if k % 2 == 0 {
                    lookup(0, n + k / 2)
                } else {
                    lookup(1, n + k / 2)
                };
                if let Some(z) = source {
                    put(n + k, n, z, &mut rho_hat);
                }
            }
        }
    }

    let physicality = rho_hat.physicality();
    Ok(ReconstructionReport {
        rho_hat,
        estimated,
        bands,
        truncation_threshold: config.threshold,
        threshold_mode: config.threshold_mode,
        symmetry: config.symmetry,
        physicality,
        aliasing_possible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::linspace;
    use crate::simulation::{sample_exact, GridSpec};

    fn problem_from(ys: &[f64], degree: usize, target: Vec<Complex64>) -> DesignProblem {
        let table = MomentTable {
            q: 0,
            k: 0,
            y_values: ys.to_vec(),
            f_values: target,
        };
        build_design(&table, degree).unwrap()
    }

    #[test]
    fn design_matrix_layout() {
        let p = problem_from(&[0.1, 0.5, 0.9], 2, vec![Complex64::default(); 3]);
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.1, 0.01, 1.0, 0.5, 0.25, 1.0, 0.9, 0.81]);
        assert!((p.design - expected).abs().max() < 1e-16);
        let p0 = problem_from(&[0.1, 0.5, 0.9], 0, vec![Complex64::default(); 3]);
        assert_eq!(p0.design.shape(), (3, 1));
        assert!(p0.design.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn degree_too_high_rejected() {
        let table = MomentTable {
            q: 0,
            k: 0,
            y_values: vec![0.2, 0.5],
            f_values: vec![Complex64::default(); 2],
        };
        assert!(matches!(build_design(&table, 2), Err(Error::DegreeTooHigh { .. })));
    }

    #[test]
    fn consistent_system_recovered() {
        let ys = linspace(0.1, 0.9, 15);
        let truth = [Complex64::new(0.5, -0.1), Complex64::new(-1.0, 0.3), Complex64::new(2.0, 0.0)];
        let target = ys
            .iter()
            .map(|&y| truth[0] + truth[1] * y + truth[2] * y * y)
            .collect();
        let sol = solve_svd(&problem_from(&ys, 2, target), 0.0, ThresholdMode::Absolute).unwrap();
        assert_eq!(sol.retained_count, 3);
        for (a, b) in sol.coefficients.iter().zip(&truth) {
            assert!((a - b).norm() < 1e-10);
        }
        assert!(sol.chi_squared < 1e-24);
    }

    #[test]
    fn singular_values_sorted_and_data_independent() {
        let ys = linspace(0.1, 0.9, 101);
        let a = solve_svd(
            &problem_from(&ys, 6, ys.iter().map(|y| Complex64::new(y.sin(), 0.0)).collect()),
            0.1,
            ThresholdMode::Absolute,
        )
        .unwrap();
        let b = solve_svd(
            &problem_from(&ys, 6, ys.iter().map(|y| Complex64::new(0.0, y.exp())).collect()),
            0.0,
            ThresholdMode::Absolute,
        )
        .unwrap();
        assert_eq!(a.singular_values, b.singular_values);
        assert!(a.singular_values.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(a.retained_count, 4);
        assert_eq!(b.retained_count, 7);
    }

    #[test]
    fn relative_threshold() {
        let ys = linspace(0.1, 0.9, 101);
        let p = problem_from(&ys, 6, vec![Complex64::new(1.0, 0.0); 101]);
        // s_1 ~ 12.27; 0.01 * s_1 ~ 0.123 keeps the same four as absolute 0.1
        let sol = solve_svd(&p, 0.01, ThresholdMode::Relative).unwrap();
        assert_eq!(sol.retained_count, 4);
        assert!(solve_svd(&p, -1.0, ThresholdMode::Absolute).is_err());
    }

    #[test]
    fn band_extraction_divides_by_coefficients() {
        let sol = SvdSolution {
            coefficients: vec![Complex64::new(2.0, 0.0), Complex64::new(3.0, 1.0)],
            variances: vec![1.0, 4.0],
            singular_values: vec![1.0, 1.0],
            retained_count: 2,
            chi_squared: 0.0,
            residual_variance: 0.0,
            residuals: vec![],
        };
        let band = extract_rho_band(&sol, 0, 0);
        assert_eq!(band, sol.coefficients);
        let band = extract_rho_band(&sol, 3, 1);
        for (m, z) in band.iter().enumerate() {
            let b = series_coefficient(m, 3, 1);
            assert!((z * b - sol.coefficients[m]).norm() < 1e-14);
        }
        let vars = band_variances(&sol, 3, 1);
        assert!((vars[1] - 4.0 / series_coefficient(1, 3, 1).powi(2)).abs() < 1e-14);
    }

    #[test]
    fn vacuum_reconstruction() {
        let mut rho = DensityMatrix::zeros(0, 6);
        rho.set(0, 0, Complex64::new(1.0, 0.0));
        let rec = sample_exact(&rho, 0, &GridSpec { n_phi: 13, ..GridSpec::default() }).unwrap();
        let config = ReconstructionConfig {
            n_max: 6,
            threshold: 0.0,
            degree_policy: DegreePolicy::Full,
            ..ReconstructionConfig::default()
        };
        let report = reconstruct(&rec, &config).unwrap();
        report.ensure_complete().unwrap();
        assert!(report.rho_hat.max_abs_diff(&rho) < 1e-10);
        assert!(!report.aliasing_possible);
    }

    #[test]
    fn unestimated_elements_flagged() {
        let mut rho = DensityMatrix::zeros(0, 10);
        rho.set(0, 0, Complex64::new(1.0, 0.0));
        let rec = sample_exact(&rho, 0, &GridSpec::default()).unwrap();
        let report = reconstruct(&rec, &ReconstructionConfig::default()).unwrap();
        assert!(report.aliasing_possible);
        // k = 0 uses degree 6: rho[7][7] and beyond are out of reach
        assert!(report.estimated[6][6]);
        assert!(!report.estimated[7][7]);
        assert!(report.estimated[10][0] && report.estimated[0][10]);
        assert_eq!(report.degrees_used()[0], Some(6));
    }

    #[test]
    fn reconstructed_matrix_is_hermitian() {
        let rho = crate::states::state_pair_coherent(Complex64::new(1.0, 0.7), 1, 6);
        let rec = sample_exact(&rho, 1, &GridSpec { n_phi: 13, ..GridSpec::default() }).unwrap();
        let config = ReconstructionConfig { n_max: 6, ..ReconstructionConfig::default() };
        let report = reconstruct(&rec, &config).unwrap();
        let e = report.rho_hat.elements();
        for n in 0..7 {
            for m in 0..7 {
                assert_eq!(e[(n, m)], e[(m, n)].conj());
            }
        }
    }

    #[test]
    fn degree_override_applies() {
        let mut rho = DensityMatrix::zeros(0, 4);
        rho.set(0, 0, Complex64::new(1.0, 0.0));
        let rec = sample_exact(&rho, 0, &GridSpec { n_phi: 9, ..GridSpec::default() }).unwrap();
        let mut config = ReconstructionConfig { n_max: 4, ..ReconstructionConfig::default() };
        config.degree_overrides.insert(1, 1);
        let report = reconstruct(&rec, &config).unwrap();
        assert_eq!(report.degrees_used()[1], Some(1));
    }
}
