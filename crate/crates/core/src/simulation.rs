//! Measurement records on the discretized `(y, phi)` grid.
//!
//! Noise is drawn from ChaCha8 (`rand_chacha`) seeded with the record seed.
//! Each grid row `i` uses its own stream (`set_stream(i)`), so the draws for a
//! row do not depend on how many rows exist or in which order they are filled.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{ProbeSetting, QEvaluator};
use crate::math::linspace;
use crate::states::DensityMatrix;
use crate::transforms::{dft_coefficient, moment_scale};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub y_min: f64,
    pub y_max: f64,
    pub n_y: usize,
    pub n_phi: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            y_min: 0.1,
            y_max: 0.9,
            n_y: 101,
            n_phi: 20,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.y_min > 0.0 && self.y_min < self.y_max && self.y_max < 1.0) {
            return Err(Error::invalid(format!(
                "grid needs 0 < y_min < y_max < 1, got [{}, {}]",
                self.y_min, self.y_max
            )));
        }
        if self.n_y < 2 || self.n_phi < 1 {
            return Err(Error::invalid(format!(
                "grid needs n_y >= 2 and n_phi >= 1, got n_y={}, n_phi={}",
                self.n_y, self.n_phi
            )));
        }
        Ok(())
    }

    pub fn y_values(&self) -> Vec<f64> {
        linspace(self.y_min, self.y_max, self.n_y)
    }

    /// `phi_s = 2 pi s / n_phi`.
    pub fn phi_values(&self) -> Vec<f64> {
        (0..self.n_phi)
            .map(|s| TAU * s as f64 / self.n_phi as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    Exact,
    /// `delta f = R g sqrt(|f| / tau)` on the phase moments `f_k`.
    #[serde(alias = "paper")]
    PaperLiteral,
    /// Gaussian limit of `tau` Bernoulli trials on each probability.
    #[serde(alias = "shot")]
    PhysicalShot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    pub tau: u64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            mode: NoiseMode::PaperLiteral,
            tau: 20_000,
            seed: 45,
        }
    }
}

impl NoiseSpec {
    pub fn exact() -> Self {
        Self {
            mode: NoiseMode::Exact,
            ..Self::default()
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// Sampled `Q` values, one row per `y` and one column per `phi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub q: usize,
    pub grid: GridSpec,
    pub noise: NoiseSpec,
    pub values: Vec<Vec<f64>>,
}

impl MeasurementRecord {
    pub fn y_values(&self) -> Vec<f64> {
        self.grid.y_values()
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.values.len() != self.grid.n_y
            || self.values.iter().any(|r| r.len() != self.grid.n_phi)
        {
            return Err(Error::invalid(format!(
                "record values must be {}x{}",
                self.grid.n_y, self.grid.n_phi
            )));
        }
        if self.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("record contains non-finite values"));
        }
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        let record: Self =
            serde_json::from_reader(BufReader::new(file)).map_err(|source| Error::Json {
                path: path.to_owned(),
                source,
            })?;
        record.validate()?;
        Ok(record)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Long format: `y, phi, value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |source| Error::Csv {
            path: path.to_owned(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["y", "phi", "value"]).map_err(csv_err)?;
        let phis = self.grid.phi_values();
        for (y, row) in self.y_values().iter().zip(&self.values) {
            for (phi, v) in phis.iter().zip(row) {
                w.serialize((y, phi, v)).map_err(csv_err)?;
            }
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_owned(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })?;
    w.write_all(b"\n").map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Noise-free record: `values[i][s] = Q(q, y_i, phi_s)`.
pub fn sample_exact(rho: &DensityMatrix, q: usize, grid: &GridSpec) -> Result<MeasurementRecord> {
    if q != rho.q() {
        return Err(Error::ChargeMismatch {
            record: q,
            state: rho.q(),
        });
    }
    grid.validate()?;
    let eval = QEvaluator::new(rho);
    let phis = grid.phi_values();
    let values = grid
        .y_values()
        .into_iter()
        .map(|y| {
            phis.iter()
                .map(|&phi| eval.evaluate(&ProbeSetting::new(y, phi)?))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasurementRecord {
        q,
        grid: *grid,
        noise: NoiseSpec::exact(),
        values,
    })
}

fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

/// Adds seeded noise to an exact record.
pub fn add_noise(record: &MeasurementRecord, noise: NoiseSpec) -> Result<MeasurementRecord> {
    if record.noise.mode != NoiseMode::Exact {
        return Err(Error::invalid("noise can only be added to an exact record"));
    }
    if noise.tau == 0 {
        return Err(Error::invalid("tau must be at least 1"));
    }
    let tau = noise.tau as f64;
    let ys = record.y_values();
    let values = match noise.mode {
        NoiseMode::Exact => record.values.clone(),
        NoiseMode::PhysicalShot => record
            .values
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut rng = row_rng(noise.seed, i);
                row.iter()
                    .map(|&v| {
                        let g: f64 = rng.sample(StandardNormal);
                        let var = (v * (1.0 - v)).max(0.0) / tau;
                        (v + g * var.sqrt()).clamp(0.0, 1.0)
                    })
                    .collect()
            })
            .collect(),
        NoiseMode::PaperLiteral => record
            .values
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut rng = row_rng(noise.seed, i);
                paper_literal_row(row, ys[i], record.q, tau, &mut rng)
            })
            .collect(),
    };
    Ok(MeasurementRecord {
        values,
        noise,
        ..record.clone()
    })
}

/// Perturbs every phase moment `f_k` of one grid row by `R g sqrt(|f_k|/tau)`
/// (real and imaginary parts independently) and maps the perturbation back
/// onto the phase samples with the inverse DFT, so the noisy row's DFT is
/// exactly the noisy moments.
fn paper_literal_row(row: &[f64], y: f64, q: usize, tau: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n_phi = row.len();
    let k_top = n_phi / 2;
    let mut noisy = row.to_vec();
    for k in 0..=k_top {
        let mut draw = |f: f64| -> f64 {
            let r: f64 = rng.random_range(-1.0..=1.0);
            let g: f64 = rng.sample(StandardNormal);
            r * g * (f.abs() / tau).sqrt()
        };
        let scale = moment_scale(y, q, k);
        let f = dft_coefficient(row, k) / scale;
        let d_re = draw(f.re);
        let d_im = draw(f.im);
        // k = 0 and the Nyquist index are real for real data
        let self_conjugate = k == 0 || 2 * k == n_phi;
        let delta_g = if self_conjugate {
            Complex64::new(d_re * scale, 0.0)
        } else {
            Complex64::new(d_re, d_im) * scale
        };
        let multiplicity = if self_conjugate { 1.0 } else { 2.0 };
        for (s, v) in noisy.iter_mut().enumerate() {
            let angle = -TAU * ((k * s) % n_phi) as f64 / n_phi as f64;
            *v += multiplicity * (delta_g * Complex64::from_polar(1.0, angle)).re;
        }
    }
    noisy
}
