//! Small numeric helpers shared by the state constructors and the
//! coefficient tables.

use statrs::function::factorial::ln_factorial;

/// `ln(n!)`.
#[inline]
pub fn ln_fact(n: usize) -> f64 {
    ln_factorial(n as u64)
}

/// `sqrt((m+q)! / m!)`, the weight attached to `|m+q, m>` in the
/// vacuum-probability sum.
#[inline]
pub fn sqrt_rising_ratio(m: usize, q: usize) -> f64 {
    (0.5 * (ln_fact(m + q) - ln_fact(m))).exp()
}

/// Equally spaced points `lo + (hi - lo) * i / (n - 1)`, `i = 0..n`, evaluated
/// in that order so the endpoints are exact.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let span = hi - lo;
            let denom = (n - 1) as f64;
            (0..n).map(|i| lo + span * i as f64 / denom).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_fact_small_values() {
        assert_eq!(ln_fact(0), 0.0);
        assert_eq!(ln_fact(1), 0.0);
        assert!((ln_fact(5) - 120f64.ln()).abs() < 1e-14);
        // beyond the f64 factorial range
        assert!(ln_fact(400).is_finite());
    }

    #[test]
    fn sqrt_ratio() {
        assert!((sqrt_rising_ratio(2, 2) - (24.0f64 / 2.0).sqrt()).abs() < 1e-13);
        assert_eq!(sqrt_rising_ratio(7, 0), 1.0);
    }

    #[test]
    fn linspace_endpoints() {
        let v = linspace(0.1, 0.9, 101);
        assert_eq!(v.len(), 101);
        assert_eq!(v[0], 0.1);
        assert_eq!(v[100], 0.9);
        assert!((v[50] - 0.5).abs() < 1e-15);
    }
}
