//! Phase Fourier analysis of a record and the rescaling to polynomial
//! moments.
//!
//! For each Fourier index `k >= 0`,
//!
//! ```text
//! g_k(y) = 1/N_phi sum_s e^{2 pi i k s / N_phi} Q(y, phi_s)
//! f_k(y) = g_k(y) y^{-k/2} / (1-y)^{q+1} = sum_m B_mk(q) rho[m+k][m] y^m
//! ```
//!
//! Negative `k` carry no extra information for real records
//! (`g_{-k} = conj(g_k)`), so they are never built.

use std::f64::consts::TAU;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::ln_fact;
use crate::simulation::MeasurementRecord;

/// `1/N sum_s e^{2 pi i k s / N} row[s]`.
pub fn dft_coefficient(row: &[f64], k: usize) -> Complex64 {
    let n = row.len();
    let sum: Complex64 = row
        .iter()
        .enumerate()
        .map(|(s, &v)| {
            // reduce k*s first so the twiddle angle stays in [0, 2pi)
            let angle = TAU * ((k * s) % n) as f64 / n as f64;
            Complex64::from_polar(v, angle)
        })
        .sum();
    sum / n as f64
}

/// `g_k` at every grid row of the record.
pub fn dft_phase(record: &MeasurementRecord, k: usize) -> Vec<Complex64> {
    record
        .values
        .iter()
        .map(|row| dft_coefficient(row, k))
        .collect()
}

/// `y^{k/2} (1-y)^{q+1}`, the factor between `f_k` and `g_k`.
#[inline]
pub fn moment_scale(y: f64, q: usize, k: usize) -> f64 {
    (0.5 * k as f64 * y.ln() + (q as f64 + 1.0) * (-y).ln_1p()).exp()
}

/// `f_k(q, y_i)` on the measured `y` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub q: usize,
    pub k: usize,
    pub y_values: Vec<f64>,
    pub f_values: Vec<Complex64>,
}

impl MomentTable {
    pub fn len(&self) -> usize {
        self.y_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_values.is_empty()
    }

    /// Undoes [`scale_to_moments`].
    pub fn to_phase_moments(&self) -> Vec<Complex64> {
        self.y_values
            .iter()
            .zip(&self.f_values)
            .map(|(&y, f)| f * moment_scale(y, self.q, self.k))
            .collect()
    }

    /// CSV with a `# q=..,k=..` comment line, then `y,re_f,im_f`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io_err = |source| Error::Io {
            path: path.to_owned(),
            source,
        };
        let csv_err = |source| Error::Csv {
            path: path.to_owned(),
            source,
        };
        let mut file = std::fs::File::create(path).map_err(io_err)?;
        use std::io::Write;
        writeln!(file, "# q={},k={}", self.q, self.k).map_err(io_err)?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["y", "re_f", "im_f"]).map_err(csv_err)?;
        for (y, f) in self.y_values.iter().zip(&self.f_values) {
            w.serialize((y, f.re, f.im)).map_err(csv_err)?;
        }
        w.flush().map_err(io_err)
    }
}

/// `f_i = g_i y_i^{-k/2} / (1-y_i)^{q+1}`.
pub fn scale_to_moments(g: &[Complex64], y_values: &[f64], q: usize, k: usize) -> Result<MomentTable> {
    if g.len() != y_values.len() {
        return Err(Error::invalid(format!(
            "{} phase moments for {} grid points",
            g.len(),
            y_values.len()
        )));
    }
    if let Some(y) = y_values.iter().find(|y| !(**y > 0.0 && **y < 1.0)) {
        return Err(Error::invalid(format!("moment grid point y={y} outside (0, 1)")));
    }
    if y_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("moment grid must be strictly increasing"));
    }
    let f_values = g
        .iter()
        .zip(y_values)
        .map(|(gi, &y)| gi / moment_scale(y, q, k))
        .collect();
    Ok(MomentTable {
        q,
        k,
        y_values: y_values.to_vec(),
        f_values,
    })
}

/// DFT and rescale in one step.
pub fn moments(record: &MeasurementRecord, k: usize) -> Result<MomentTable> {
    scale_to_moments(&dft_phase(record, k), &record.y_values(), record.q, k)
}

/// `B_mk(q) = (1/q!) sqrt((m+k+q)! (m+q)! / (m! (m+k)!))`.
pub fn series_coefficient(m: usize, k: usize, q: usize) -> f64 {
    (0.5 * (ln_fact(m + k + q) + ln_fact(m + q) - ln_fact(m) - ln_fact(m + k)) - ln_fact(q)).exp()
}

/// `B_mk(q)` for all `m + k <= n_max`, indexed `[k][m]`.
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    q: usize,
    bands: Vec<Vec<f64>>,
}

impl CoefficientTable {
    pub fn new(q: usize, n_max: usize) -> Self {
        let bands = (0..=n_max)
            .map(|k| (0..=n_max - k).map(|m| series_coefficient(m, k, q)).collect())
            .collect();
        Self { q, bands }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn band(&self, k: usize) -> &[f64] {
        &self.bands[k]
    }

    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.bands[k][m]
    }
}
