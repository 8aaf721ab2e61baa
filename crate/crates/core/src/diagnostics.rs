//! Polynomial order selection for the moment fits.
//!
//! Two indicators drive the choice: the sequential sum of squares `S(m)`
//! (explained sum of squares gained by adding `y^m`), and the number of sign
//! changes in the residual sequence, which approaches `(N-1)/2` once the
//! residuals carry no more structure.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inversion::{build_design, solve_svd, ThresholdMode};
use crate::transforms::MomentTable;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DegreePolicy {
    /// Sign-change and sum-of-squares stopping rule.
    Auto,
    /// Degrees used for the pair coherent example: 6 for `k = 0`, 5 for
    /// `k = 1, 2`, 4 for `k = 3..=5`, `n_max - k` above.
    #[default]
    PaperFixed,
    /// One degree for every band, or one per band (missing entries fall back
    /// to `n_max - k`).
    UserFixed(Vec<usize>),
    /// `n_max - k` everywhere.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Auto,
    PaperFixed,
    UserFixed,
    Full,
}

impl DegreePolicy {
    pub fn kind(&self) -> PolicyKind {
        match self {
            DegreePolicy::Auto => PolicyKind::Auto,
            DegreePolicy::PaperFixed => PolicyKind::PaperFixed,
            DegreePolicy::UserFixed(_) => PolicyKind::UserFixed,
            DegreePolicy::Full => PolicyKind::Full,
        }
    }
}

/// Thresholds of the automatic rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutoSettings {
    /// Sign changes must reach `N/2 - slack * sqrt(N/2)`.
    pub sign_change_slack: f64,
    /// Sum of `S(m)` above the chosen degree must not exceed this fraction
    /// of the total.
    pub tail_fraction: f64,
}

impl Default for AutoSettings {
    fn default() -> Self {
        Self {
            sign_change_slack: 1.0,
            tail_fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub k: usize,
    /// `S(m)` for `m = 1..=m_cap`.
    pub seq_sum_squares: Vec<f64>,
    /// Residual sign changes of the untruncated fit, per degree `0..=m_cap`.
    pub sign_changes: Vec<usize>,
    pub selected_degree: usize,
    pub policy: PolicyKind,
    /// Set when the automatic rule never fired.
    pub fallback: bool,
}

/// Number of adjacent sign flips, skipping exact zeros.
pub fn sign_change_count(residuals: &[f64]) -> usize {
    let mut count = 0;
    let mut last = 0.0f64;
    for &r in residuals.iter().filter(|r| **r != 0.0) {
        if last != 0.0 && (r > 0.0) != (last > 0.0) {
            count += 1;
        }
        last = r;
    }
    count
}

/// Sign changes of a complex residual sequence, counted on whichever of the
/// real and imaginary parts carries more weight.
fn complex_sign_changes(residuals: &[num_complex::Complex64]) -> usize {
    let re: Vec<f64> = residuals.iter().map(|r| r.re).collect();
    let im: Vec<f64> = residuals.iter().map(|r| r.im).collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    if norm(&re) >= norm(&im) {
        sign_change_count(&re)
    } else {
        sign_change_count(&im)
    }
}

fn check_cap(moments: &MomentTable, m_cap: usize) -> Result<()> {
    if m_cap + 1 > moments.len() {
        return Err(Error::DegreeTooHigh {
            degree: m_cap,
            points: moments.len(),
        });
    }
    Ok(())
}

/// `S(m)`, `m = 1..=m_cap`, as squared projections of the target onto the
/// orthonormalized monomial columns (Householder QR).
pub fn sequential_sum_of_squares(moments: &MomentTable, m_cap: usize) -> Result<Vec<f64>> {
    check_cap(moments, m_cap)?;
    let design = build_design(moments, m_cap)?;
    let q = design.design.clone().qr().q();
    let n = moments.len();
    let re = DMatrix::from_iterator(n, 1, moments.f_values.iter().map(|f| f.re));
    let im = DMatrix::from_iterator(n, 1, moments.f_values.iter().map(|f| f.im));
    let proj_re = q.transpose() * re;
    let proj_im = q.transpose() * im;
    Ok((1..=m_cap)
        .map(|m| proj_re[m].powi(2) + proj_im[m].powi(2))
        .collect())
}

/// `chi^2` of the untruncated least-squares fit at each degree `0..=m_cap`.
pub fn chi_squared_by_degree(moments: &MomentTable, m_cap: usize) -> Result<Vec<f64>> {
    check_cap(moments, m_cap)?;
    (0..=m_cap)
        .map(|d| {
            let problem = build_design(moments, d)?;
            Ok(solve_svd(&problem, 0.0, ThresholdMode::Absolute)?.chi_squared)
        })
        .collect()
}

/// `S(m) = chi^2(m-1) - chi^2(m)`: the same quantity as
/// [`sequential_sum_of_squares`], reached through successive fits.
pub fn sequential_sum_of_squares_by_fits(moments: &MomentTable, m_cap: usize) -> Result<Vec<f64>> {
    let chi = chi_squared_by_degree(moments, m_cap)?;
    Ok(chi.windows(2).map(|w| w[0] - w[1]).collect())
}

/// Residual sign changes of the untruncated fit at each degree `0..=m_cap`.
pub fn sign_changes_by_degree(moments: &MomentTable, m_cap: usize) -> Result<Vec<usize>> {
    check_cap(moments, m_cap)?;
    (0..=m_cap)
        .map(|d| {
            let problem = build_design(moments, d)?;
            let sol = solve_svd(&problem, 0.0, ThresholdMode::Absolute)?;
            Ok(complex_sign_changes(&sol.residuals))
        })
        .collect()
}

fn paper_fixed_degree(k: usize, n_max: usize) -> usize {
    let d = match k {
        0 => 6,
        1 | 2 => 5,
        3..=5 => 4,
        _ => n_max - k,
    };
    d.min(n_max - k)
}

/// Builds the full diagnostics for one band and applies the policy.
pub fn diagnose(
    moments: &MomentTable,
    policy: &DegreePolicy,
    n_max: usize,
    settings: &AutoSettings,
) -> Result<DiagnosticsReport> {
    let k = moments.k;
    if k > n_max {
        return Err(Error::invalid(format!("band k={k} exceeds n_max={n_max}")));
    }
    let n = moments.len();
    if n < 2 {
        return Err(Error::invalid("need at least two grid points"));
    }
    let band_cap = n_max - k;
    let m_cap = band_cap.min(n - 2);
    let seq = sequential_sum_of_squares(moments, m_cap)?;
    let sign_changes = sign_changes_by_degree(moments, m_cap)?;

    let (selected, fallback) = match policy {
        DegreePolicy::PaperFixed => (paper_fixed_degree(k, n_max), false),
        DegreePolicy::Full => (band_cap, false),
        DegreePolicy::UserFixed(list) => {
            let d = match list.as_slice() {
                [single] => *single,
                many => many.get(k).copied().unwrap_or(band_cap),
            };
            (d.min(band_cap), false)
        }
        DegreePolicy::Auto => match auto_degree(&seq, &sign_changes, n, settings) {
            Some(d) => (d, false),
            None => {
                warn!("k={k}: automatic degree rule never satisfied, using n_max - k = {band_cap}");
                (band_cap, true)
            }
        },
    };
    Ok(DiagnosticsReport {
        k,
        seq_sum_squares: seq,
        sign_changes,
        selected_degree: selected.min(n - 1),
        policy: policy.kind(),
        fallback,
    })
}

fn auto_degree(seq: &[f64], sign_changes: &[usize], n: usize, settings: &AutoSettings) -> Option<usize> {
    let half = n as f64 / 2.0;
    let limit = half - settings.sign_change_slack * half.sqrt();
    let total: f64 = seq.iter().sum();
    (0..sign_changes.len()).find(|&d| {
        // seq[m-1] holds S(m); the tail above degree d is S(d+1..)
        let tail: f64 = seq[d.min(seq.len())..].iter().sum();
        sign_changes[d] as f64 >= limit && tail <= settings.tail_fraction * total
    })
}

/// Degree chosen for band `k` under `policy`, with the fallback flag.
pub fn select_degree(
    moments: &MomentTable,
    policy: &DegreePolicy,
    n_max: usize,
    settings: &AutoSettings,
) -> Result<(usize, bool)> {
    let report = diagnose(moments, policy, n_max, settings)?;
    Ok((report.selected_degree, report.fallback))
}
