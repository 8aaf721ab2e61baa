//! Exact reduced density matrices in the two-mode Fock basis.
//!
//! Every state here has a fixed photon-number difference `q`, so only the
//! block `rho[n][m] = <n+q, n| rho |m+q, m>` is stored, truncated at `n_max`.
//! The three named families (pair coherent, Perelomov, even superposition of
//! pair coherent states) are pure, so they are built from their kets and the
//! ket is kept alongside the matrix for the rank-1 fast path in
//! [`crate::forward`].

use std::f64::consts::FRAC_PI_4;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::ln_fact;

/// Relative size of the last kept term in the pair-coherent normalization.
const SERIES_REL_TOL: f64 = 1e-16;
/// Hard cap on terms in the pair-coherent normalization.
const SERIES_MAX_TERMS: usize = 500;

pub const TRACE_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;
pub const UNIT_NORM_TOL: f64 = 1e-12;

/// Density matrix restricted to the charge-`q` sector, `(n_max+1)²` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "DensityMatrixJson", try_from = "DensityMatrixJson")]
pub struct DensityMatrix {
    q: usize,
    elements: DMatrix<Complex64>,
    ket: Option<DVector<Complex64>>,
}

/// Quick physicality summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Physicality {
    pub trace: f64,
    pub min_eigenvalue: f64,
    /// `max |rho[n][m] - conj(rho[m][n])|`
    pub hermitian_defect: f64,
}

impl DensityMatrix {
    /// Wraps an explicit matrix. No physicality checks are made; use
    /// [`DensityMatrix::validate`] for that.
    pub fn from_elements(q: usize, elements: DMatrix<Complex64>) -> Result<Self> {
        if elements.nrows() != elements.ncols() || elements.nrows() == 0 {
            return Err(Error::invalid(format!(
                "density matrix must be square and nonempty, got {}x{}",
                elements.nrows(),
                elements.ncols()
            )));
        }
        Ok(Self {
            q,
            elements,
            ket: None,
        })
    }

    /// `rho = |c><c|`, entry `(n, m) = c_n conj(c_m)`.
    pub fn from_ket(q: usize, ket: DVector<Complex64>) -> Result<Self> {
        if ket.is_empty() {
            return Err(Error::invalid("ket must be nonempty"));
        }
        let dim = ket.len();
        let elements = DMatrix::from_fn(dim, dim, |n, m| ket[n] * ket[m].conj());
        Ok(Self {
            q,
            elements,
            ket: Some(ket),
        })
    }

    pub fn zeros(q: usize, n_max: usize) -> Self {
        Self {
            q,
            elements: DMatrix::zeros(n_max + 1, n_max + 1),
            ket: None,
        }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n_max(&self) -> usize {
        self.elements.nrows() - 1
    }

    pub fn dim(&self) -> usize {
        self.elements.nrows()
    }

    pub fn elements(&self) -> &DMatrix<Complex64> {
        &self.elements
    }

    /// The generating ket, when the matrix was built from one.
    pub fn ket(&self) -> Option<&DVector<Complex64>> {
        self.ket.as_ref()
    }

    #[inline]
    pub fn get(&self, n: usize, m: usize) -> Complex64 {
        self.elements[(n, m)]
    }

    pub(crate) fn set(&mut self, n: usize, m: usize, value: Complex64) {
        self.ket = None;
        self.elements[(n, m)] = value;
    }

    pub fn trace(&self) -> f64 {
        self.elements.diagonal().iter().map(|z| z.re).sum()
    }

    /// Elements of the `k`-th lower band, `rho[m+k][m]` for `m = 0..=n_max-k`.
    pub fn band(&self, k: usize) -> Vec<Complex64> {
        let dim = self.dim();
        if k >= dim {
            return Vec::new();
        }
        (0..dim - k).map(|m| self.elements[(m + k, m)]).collect()
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        self.elements
            .iter()
            .zip(other.elements.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn physicality(&self) -> Physicality {
        let dim = self.dim();
        let mut defect = 0.0f64;
        for n in 0..dim {
            for m in 0..dim {
                defect = defect.max((self.get(n, m) - self.get(m, n).conj()).norm());
            }
        }
        // Hermitian part only; the defect is reported separately.
        let herm = (&self.elements + self.elements.adjoint()).scale(0.5);
        let min_eigenvalue = herm
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        Physicality {
            trace: self.trace(),
            min_eigenvalue,
            hermitian_defect: defect,
        }
    }

    /// Checks Hermiticity, `trace <= 1`, and positive semidefiniteness.
    pub fn validate(&self) -> Result<()> {
        let p = self.physicality();
        if p.hermitian_defect > 1e-14 {
            return Err(Error::ContractViolation(format!(
                "density matrix not Hermitian (defect {:e})",
                p.hermitian_defect
            )));
        }
        if p.trace > 1.0 + TRACE_TOL {
            return Err(Error::ContractViolation(format!(
                "trace {} exceeds 1",
                p.trace
            )));
        }
        if p.min_eigenvalue < -PSD_TOL {
            return Err(Error::ContractViolation(format!(
                "negative eigenvalue {:e}",
                p.min_eigenvalue
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct DensityMatrixJson {
    q: usize,
    n_max: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl From<DensityMatrix> for DensityMatrixJson {
    fn from(rho: DensityMatrix) -> Self {
        let dim = rho.dim();
        let rows = |f: fn(&Complex64) -> f64| -> Vec<Vec<f64>> {
            (0..dim)
                .map(|n| (0..dim).map(|m| f(&rho.elements[(n, m)])).collect())
                .collect()
        };
        DensityMatrixJson {
            q: rho.q,
            n_max: rho.n_max(),
            re: rows(|z| z.re),
            im: rows(|z| z.im),
        }
    }
}

impl TryFrom<DensityMatrixJson> for DensityMatrix {
    type Error = String;

    fn try_from(json: DensityMatrixJson) -> std::result::Result<Self, String> {
        let dim = json.n_max + 1;
        let square = |rows: &Vec<Vec<f64>>| rows.len() == dim && rows.iter().all(|r| r.len() == dim);
        if !square(&json.re) || !square(&json.im) {
            return Err(format!("re/im must both be {dim}x{dim}"));
        }
        let elements = DMatrix::from_fn(dim, dim, |n, m| {
            Complex64::new(json.re[n][m], json.im[n][m])
        });
        Ok(DensityMatrix {
            q: json.q,
            elements,
            ket: None,
        })
    }
}

/// `u^n` for a unit phase, by repeated multiplication so that real inputs stay
/// exactly real.
fn phase_power(unit: Complex64, n: usize) -> Complex64 {
    unit.powu(n as u32)
}

fn unit_phase(z: Complex64) -> Complex64 {
    let r = z.norm();
    if r == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        z / r
    }
}

/// `ln` of the pair-coherent series term `|xi|^{2n} / (n! (n+p)!)`.
fn pair_log_term(ln_abs_xi: f64, n: usize, p: usize) -> f64 {
    2.0 * n as f64 * ln_abs_xi - ln_fact(n) - ln_fact(n + p)
}

/// Log-sums of the pair-coherent normalization series, over all `n` and over
/// even `n` only.
fn pair_log_sums(abs_xi: f64, p: usize) -> (f64, f64) {
    if abs_xi == 0.0 {
        let l = -ln_fact(p);
        return (l, l);
    }
    let ln_abs = abs_xi.ln();
    let mut all = f64::NEG_INFINITY;
    let mut even = f64::NEG_INFINITY;
    let mut prev = f64::NEG_INFINITY;
    for n in 0..SERIES_MAX_TERMS {
        let t = pair_log_term(ln_abs, n, p);
        all = log_add(all, t);
        if n % 2 == 0 {
            even = log_add(even, t);
        }
        // terms rise until n ~ |xi|, then fall monotonically
        if n > 0 && t < prev && (t - all).exp() < SERIES_REL_TOL {
            break;
        }
        prev = t;
    }
    (all, even)
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `N(xi, p)^{-2} = sum_n |xi|^{2n} / (n! (n+p)!)`.
pub fn pair_coherent_norm_series(xi: Complex64, p: usize) -> f64 {
    pair_log_sums(xi.norm(), p).0.exp()
}

/// Probability that the pair-coherent state `|Phi(xi, p)>` has an even pair
/// number `n`.
pub fn pair_coherent_even_weight(xi: Complex64, p: usize) -> f64 {
    let (all, even) = pair_log_sums(xi.norm(), p);
    (even - all).exp()
}

/// Pair coherent state `|Phi(xi, p)>`: `c_n ∝ xi^n / sqrt(n! (n+p)!)`.
pub fn state_pair_coherent(xi: Complex64, p: usize, n_max: usize) -> DensityMatrix {
    let abs_xi = xi.norm();
    let mut ket = DVector::zeros(n_max + 1);
    if abs_xi == 0.0 {
        ket[0] = Complex64::new(1.0, 0.0);
    } else {
        let (ln_sum, _) = pair_log_sums(abs_xi, p);
        let ln_abs = abs_xi.ln();
        let unit = unit_phase(xi);
        for n in 0..=n_max {
            let magnitude = (0.5 * (pair_log_term(ln_abs, n, p) - ln_sum)).exp();
            ket[n] = phase_power(unit, n) * magnitude;
        }
    }
    DensityMatrix::from_ket(p, ket).expect("nonempty ket")
}

/// Perelomov SU(1,1) coherent state with `|eta| < 1`.
pub fn state_perelomov(eta: Complex64, q: usize, n_max: usize) -> Result<DensityMatrix> {
    let abs_eta = eta.norm();
    if !(abs_eta < 1.0) {
        return Err(Error::invalid(format!(
            "Perelomov parameter must satisfy |eta| < 1, got {abs_eta}"
        )));
    }
    let mut ket = DVector::zeros(n_max + 1);
    if abs_eta == 0.0 {
        ket[0] = Complex64::new(1.0, 0.0);
    } else {
        let prefactor = 0.5 * (q as f64 + 1.0) * (-abs_eta * abs_eta).ln_1p() - 0.5 * ln_fact(q);
        let ln_abs = abs_eta.ln();
        let unit = unit_phase(eta);
        for p in 0..=n_max {
            let ln_mag = prefactor + p as f64 * ln_abs + 0.5 * (ln_fact(p + q) - ln_fact(p));
            ket[p] = phase_power(unit, p) * ln_mag.exp();
        }
    }
    DensityMatrix::from_ket(q, ket)
}

/// Normalized `e^{-i pi/4} (|Phi(xi,p)> + |Phi(-xi,p)>)`.
///
/// Odd-`n` amplitudes cancel; the even ones are renormalized by the
/// even-parity weight of `|Phi(xi, p)>`. The global phase has no effect on
/// the density matrix.
pub fn state_superposition_pair(xi: Complex64, p: usize, n_max: usize) -> DensityMatrix {
    let abs_xi = xi.norm();
    let global = Complex64::from_polar(1.0, -FRAC_PI_4);
    let mut ket = DVector::zeros(n_max + 1);
    if abs_xi == 0.0 {
        ket[0] = global;
    } else {
        let (_, ln_even) = pair_log_sums(abs_xi, p);
        let ln_abs = abs_xi.ln();
        let unit = unit_phase(xi);
        for n in (0..=n_max).step_by(2) {
            let magnitude = (0.5 * (pair_log_term(ln_abs, n, p) - ln_even)).exp();
            ket[n] = global * phase_power(unit, n) * magnitude;
        }
    }
    DensityMatrix::from_ket(p, ket).expect("nonempty ket")
}

/// Pure state `sum_n c_n |n+q, n>`. With `normalize` unset the coefficients
/// must already have unit norm.
pub fn state_custom(coeffs: &[Complex64], q: usize, normalize: bool) -> Result<DensityMatrix> {
    if coeffs.is_empty() {
        return Err(Error::invalid("custom coefficients must be nonempty"));
    }
    let norm = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::invalid("custom coefficient vector is zero"));
    }
    let ket = if normalize {
        DVector::from_iterator(coeffs.len(), coeffs.iter().map(|c| c / norm))
    } else {
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::invalid(format!(
                "custom coefficients have norm {norm}, expected 1"
            )));
        }
        DVector::from_column_slice(coeffs)
    };
    DensityMatrix::from_ket(q, ket)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateFamily {
    PairCoherent,
    Perelomov,
    SuperpositionPair,
    Custom,
}

/// Serializable description of an input state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateParams {
    pub family: StateFamily,
    #[serde(default)]
    pub xi: Complex64,
    #[serde(default)]
    pub eta: Complex64,
    /// `p` for the pair families, `q` otherwise.
    #[serde(default)]
    pub charge: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom_coeffs: Option<Vec<Complex64>>,
    #[serde(default)]
    pub normalize: bool,
}

impl StateParams {
    pub fn pair_coherent(xi: Complex64, p: usize) -> Self {
        Self {
            family: StateFamily::PairCoherent,
            xi,
            eta: Complex64::default(),
            charge: p,
            custom_coeffs: None,
            normalize: false,
        }
    }

    pub fn perelomov(eta: Complex64, q: usize) -> Self {
        Self {
            family: StateFamily::Perelomov,
            eta,
            ..Self::pair_coherent(Complex64::default(), q)
        }
    }

    pub fn superposition_pair(xi: Complex64, p: usize) -> Self {
        Self {
            family: StateFamily::SuperpositionPair,
            ..Self::pair_coherent(xi, p)
        }
    }

    pub fn custom(coeffs: Vec<Complex64>, q: usize, normalize: bool) -> Self {
        Self {
            family: StateFamily::Custom,
            custom_coeffs: Some(coeffs),
            normalize,
            ..Self::pair_coherent(Complex64::default(), q)
        }
    }

    /// Builds the density matrix truncated at `n_max`. Custom coefficients are
    /// zero-padded up to `n_max + 1`; longer vectors are rejected.
    pub fn build(&self, n_max: usize) -> Result<DensityMatrix> {
        match self.family {
            StateFamily::PairCoherent => Ok(state_pair_coherent(self.xi, self.charge, n_max)),
            StateFamily::Perelomov => state_perelomov(self.eta, self.charge, n_max),
            StateFamily::SuperpositionPair => {
                Ok(state_superposition_pair(self.xi, self.charge, n_max))
            }
            StateFamily::Custom => {
                let coeffs = self
                    .custom_coeffs
                    .as_ref()
                    .ok_or_else(|| Error::invalid("custom state needs custom_coeffs"))?;
                if coeffs.len() > n_max + 1 {
                    return Err(Error::invalid(format!(
                        "{} custom coefficients exceed n_max + 1 = {}",
                        coeffs.len(),
                        n_max + 1
                    )));
                }
                let mut padded = coeffs.clone();
                if padded.len() < n_max + 1 {
                    padded.resize(n_max + 1, Complex64::default());
                }
                state_custom(&padded, self.charge, self.normalize)
            }
        }
    }
}
