//! Small linear least-squares fits used by extrapolations and asymptotic probes.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Least-squares coefficients `c` minimising `Σ (Σ_k c_k basis_k(x_i) − y_i)²`.
pub fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let m = rows.len();
    let k = rows.first().map_or(0, |r| r.len());
    if m < k || k == 0 || y.len() != m {
        return Err(Error::FitFailed(format!("{m} samples for {k} unknowns")));
    }
    let a = DMatrix::from_fn(m, k, |i, j| rows[i][j]);
    let b = DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let sol = svd
        .solve(&b, smax * 1e-14)
        .map_err(|e| Error::FitFailed(e.to_string()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitFailed("non-finite coefficients".into()));
    }
    Ok(sol.iter().copied().collect())
}

/// Fit `y ≈ a + b·x`; returns `(a, b)`.
pub fn line(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![1.0, v]).collect();
    let c = least_squares(&rows, y)?;
    Ok((c[0], c[1]))
}

/// Richardson-style polynomial extrapolation of `y(x)` to `x = 0` using a
/// fit of the given degree.
pub fn extrapolate_to_zero(x: &[f64], y: &[f64], degree: usize) -> Result<f64> {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let rows: Vec<Vec<f64>> = x
        .iter()
        .map(|&v| (0..=degree).map(|p| (v / scale).powi(p as i32)).collect())
        .collect();
    Ok(least_squares(&rows, y)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_line_and_quadratic_intercept() {
        let x = [0.1, 0.2, 0.4, 0.8];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let (a, b) = line(&x, &y).unwrap();
        assert!((a - 2.0).abs() < 1e-13 && (b + 0.5).abs() < 1e-13);
        let y2: Vec<f64> = x.iter().map(|v| 1.5 + v - 3.0 * v * v).collect();
        assert!((extrapolate_to_zero(&x, &y2, 2).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn underdetermined_fit_fails() {
        assert!(least_squares(&[vec![1.0, 2.0]], &[1.0]).is_err());
    }
}
