//! Vacuum-probe probability after the parametric amplifier.
//!
//! The amplifier applies the two-mode squeeze operator `S(z)`; the recorded
//! quantity is the probability of `q` photons in mode `a` and none in mode
//! `b`, written as a function of `y = tanh^2 |z|` and the phase `phi` with
//! `e^{-i phi} = z / |z|`:
//!
//! ```text
//! Q(q, y, phi) = (1-y)^{q+1} / q! * sum_{m,n} sqrt((m+q)!(n+q)!/(m! n!))
//!                e^{i(m-n)phi} y^{(m+n)/2} rho[n][m]
//! ```

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::ln_fact;
use crate::states::DensityMatrix;

/// Tolerance on the imaginary part of the probability.
pub const IMAG_TOL: f64 = 1e-12;
/// Tolerance on the probability leaving `[0, 1]`.
pub const RANGE_TOL: f64 = 1e-10;

/// One amplifier setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSetting {
    y: f64,
    phi: f64,
}

impl ProbeSetting {
    /// `y` must lie strictly inside `(0, 1)`; `phi` is reduced to `[0, 2pi)`.
    pub fn new(y: f64, phi: f64) -> Result<Self> {
        if !(y > 0.0 && y < 1.0) {
            return Err(Error::invalid(format!("probe y must lie in (0, 1), got {y}")));
        }
        if !phi.is_finite() {
            return Err(Error::invalid(format!("probe phase must be finite, got {phi}")));
        }
        let mut phi = phi.rem_euclid(TAU);
        if phi >= TAU {
            phi = 0.0;
        }
        Ok(Self { y, phi })
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
}

/// Squeeze parameter to probe setting.
pub fn z_to_probe(z: Complex64) -> Result<ProbeSetting> {
    let r = z.norm();
    if r == 0.0 {
        return Err(Error::invalid("z = 0 corresponds to the inaccessible point y = 0"));
    }
    let t = r.tanh();
    ProbeSetting::new(t * t, -z.arg())
}

/// Inverse of [`z_to_probe`]: `z = atanh(sqrt y) e^{-i phi}`.
pub fn probe_to_z(setting: ProbeSetting) -> Complex64 {
    Complex64::from_polar(setting.y.sqrt().atanh(), -setting.phi)
}

/// Evaluates `Q` for one density matrix, caching `sqrt((m+q)!/m!)`.
#[derive(Debug, Clone)]
pub struct QEvaluator<'a> {
    rho: &'a DensityMatrix,
    ln_weights: Vec<f64>,
    ln_q_fact: f64,
}

impl<'a> QEvaluator<'a> {
    pub fn new(rho: &'a DensityMatrix) -> Self {
        let q = rho.q();
        let ln_weights = (0..rho.dim())
            .map(|m| 0.5 * (ln_fact(m + q) - ln_fact(m)))
            .collect();
        Self {
            rho,
            ln_weights,
            ln_q_fact: ln_fact(q),
        }
    }

    /// `v_m = sqrt((m+q)!/m!) y^{m/2} e^{i m phi}`
    fn probe_vector(&self, setting: &ProbeSetting) -> Vec<Complex64> {
        let half_ln_y = 0.5 * setting.y.ln();
        self.ln_weights
            .iter()
            .enumerate()
            .map(|(m, lw)| Complex64::from_polar((lw + m as f64 * half_ln_y).exp(), m as f64 * setting.phi))
            .collect()
    }

    fn prefactor(&self, setting: &ProbeSetting) -> f64 {
        ((self.rho.q() as f64 + 1.0) * (-setting.y).ln_1p() - self.ln_q_fact).exp()
    }

    /// Full double sum `v^† rho v`; returns the complex value before the
    /// imaginary part is checked.
    pub fn evaluate_full(&self, setting: &ProbeSetting) -> Complex64 {
        let v = self.probe_vector(setting);
        let elements = self.rho.elements();
        let mut acc = Complex64::default();
        for (n, vn) in v.iter().enumerate() {
            let mut row = Complex64::default();
            for (m, vm) in v.iter().enumerate() {
                row += elements[(n, m)] * vm;
            }
            acc += vn.conj() * row;
        }
        acc * self.prefactor(setting)
    }

    /// Rank-one path `|sum_n c_n conj(v_n)|^2`, available when the matrix
    /// carries its ket.
    pub fn evaluate_rank_one(&self, setting: &ProbeSetting) -> Option<f64> {
        let ket = self.rho.ket()?;
        let v = self.probe_vector(setting);
        let amp: Complex64 = ket.iter().zip(&v).map(|(c, vn)| c * vn.conj()).sum();
        Some(amp.norm_sqr() * self.prefactor(setting))
    }

    /// `Q(q, y, phi)`, through the rank-one path when possible.
    pub fn evaluate(&self, setting: &ProbeSetting) -> Result<f64> {
        let value = match self.evaluate_rank_one(setting) {
            Some(v) => v,
            None => {
                let z = self.evaluate_full(setting);
                if z.im.abs() >= IMAG_TOL {
                    return Err(Error::ContractViolation(format!(
                        "Q has imaginary part {:e} at y={}, phi={}",
                        z.im, setting.y, setting.phi
                    )));
                }
                z.re
            }
        };
        if !(-RANGE_TOL..=1.0 + RANGE_TOL).contains(&value) {
            return Err(Error::ContractViolation(format!(
                "Q = {value} outside [0, 1] at y={}, phi={}",
                setting.y, setting.phi
            )));
        }
        Ok(value)
    }
}

/// `Q(q, y, phi)` for `q = rho.q()`.
pub fn q_function(rho: &DensityMatrix, setting: ProbeSetting) -> Result<f64> {
    QEvaluator::new(rho).evaluate(&setting)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::states::{state_pair_coherent, state_perelomov};

    #[test]
    fn real_z_gives_zero_phase() {
        let z = Complex64::new(0.5f64.sqrt().atanh(), 0.0);
        let p = z_to_probe(z).unwrap();
        assert!((p.y() - 0.5).abs() < 1e-15);
        assert_eq!(p.phi(), 0.0);
    }

    #[test]
    fn imaginary_z() {
        let z = Complex64::new(0.0, 0.3f64.atanh());
        let p = z_to_probe(z).unwrap();
        assert!((p.y() - 0.09).abs() < 1e-15);
        assert!((p.phi() - 1.5 * PI).abs() < 1e-15);
    }

    #[test]
    fn z_limits() {
        assert!(z_to_probe(Complex64::default()).is_err());
        let y = z_to_probe(Complex64::new(5.0, 0.0)).unwrap().y();
        assert!(y > 0.999 && y < 1.0);
        let small = probe_to_z(ProbeSetting::new(1e-12, 0.3).unwrap());
        assert!(small.norm() < 1e-5);
    }

    #[test]
    fn setting_validation() {
        assert!(ProbeSetting::new(0.0, 0.0).is_err());
        assert!(ProbeSetting::new(1.0, 0.0).is_err());
        assert!(ProbeSetting::new(0.5, f64::NAN).is_err());
        let p = ProbeSetting::new(0.5, -0.5 * PI).unwrap();
        assert!((p.phi() - 1.5 * PI).abs() < 1e-15);
    }

    #[test]
    fn vacuum_probability() {
        for q in 0..4 {
            let rho = DensityMatrix::zeros(q, 5);
            let mut rho = rho;
            rho.set(0, 0, Complex64::new(1.0, 0.0));
            for &y in &[0.1, 0.5, 0.9] {
                let v = q_function(&rho, ProbeSetting::new(y, 1.0).unwrap()).unwrap();
                let expected = (1.0f64 - y).powi(q as i32 + 1);
                assert!((v - expected).abs() < 1e-15, "q={q} y={y}");
            }
        }
    }

    #[test]
    fn rank_one_matches_double_sum() {
        let rho = state_pair_coherent(Complex64::new(1.3, 0.8), 2, 20);
        let eval = QEvaluator::new(&rho);
        for &(y, phi) in &[(0.1, 0.0), (0.4, 1.1), (0.85, 4.0)] {
            let s = ProbeSetting::new(y, phi).unwrap();
            let a = eval.evaluate_rank_one(&s).unwrap();
            let b = eval.evaluate_full(&s);
            assert!((a - b.re).abs() < 1e-14);
            assert!(b.im.abs() < 1e-14);
        }
    }

    #[test]
    fn flags_out_of_range_values() {
        let mut rho = DensityMatrix::zeros(0, 2);
        rho.set(0, 0, Complex64::new(3.0, 0.0));
        assert!(matches!(
            q_function(&rho, ProbeSetting::new(0.2, 0.0).unwrap()),
            Err(Error::ContractViolation(_))
        ));
        let mut rho = DensityMatrix::zeros(0, 2);
        rho.set(1, 0, Complex64::new(0.0, 0.3));
        assert!(matches!(
            q_function(&rho, ProbeSetting::new(0.5, 0.7).unwrap()),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn perelomov_series_vs_geometric_closed_form() {
        let eta = Complex64::new(0.45, -0.3);
        let rho = state_perelomov(eta, 0, 80).unwrap();
        for &y in &[0.2, 0.6, 0.9] {
            for &phi in &[0.0, 0.9, 3.0, 5.5] {
                let s = ProbeSetting::new(y, phi).unwrap();
                let series = q_function(&rho, s).unwrap();
                let w = eta * y.sqrt() * Complex64::from_polar(1.0, -phi);
                let closed = (1.0 - y) * (1.0 - eta.norm_sqr()) / (Complex64::new(1.0, 0.0) - w).norm_sqr();
                assert!((series - closed).abs() < 1e-12);
            }
        }
    }
}
