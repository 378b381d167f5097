//! The spatial manifold seen through its Laplace–Beltrami spectrum.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumKind {
    FlatTorus { periods: Vec<f64> },
    RoundSphere { dimension: usize, radius: f64 },
    Explicit { eigenvalues: Vec<(f64, usize)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSpec {
    kind: SpectrumKind,
    scalar_curvature: f64,
    dimension: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub index: usize,
    pub eigenvalue: f64,
    pub multiplicity: usize,
}

impl SpectrumSpec {
    pub fn flat_torus(periods: Vec<f64>) -> Result<Self> {
        if periods.is_empty() || periods.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::Validation("torus periods must be positive".into()));
        }
        let dimension = periods.len();
        Ok(SpectrumSpec {
            kind: SpectrumKind::FlatTorus { periods },
            scalar_curvature: 0.0,
            dimension,
        })
    }

    pub fn round_sphere(dimension: usize, radius: f64) -> Result<Self> {
        if dimension == 0 || !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Validation("sphere needs n >= 1 and r > 0".into()));
        }
        let n = dimension as f64;
        Ok(SpectrumSpec {
            kind: SpectrumKind::RoundSphere { dimension, radius },
            scalar_curvature: n * (n - 1.0) / (radius * radius),
            dimension,
        })
    }

    /// A spectrum given as sorted `(λ, multiplicity)` pairs.
    pub fn explicit(dimension: usize, eigenvalues: Vec<(f64, usize)>, scalar_curvature: f64) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Validation("spatial dimension must be positive".into()));
        }
        if eigenvalues.iter().any(|(l, m)| !(*l >= 0.0 && l.is_finite()) || *m == 0) {
            return Err(Error::Validation(
                "explicit eigenvalues must be finite, nonnegative, with multiplicity >= 1".into(),
            ));
        }
        if eigenvalues.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::Validation("explicit eigenvalues must be sorted ascending".into()));
        }
        if !scalar_curvature.is_finite() {
            return Err(Error::Validation("scalar curvature must be finite".into()));
        }
        Ok(SpectrumSpec {
            kind: SpectrumKind::Explicit { eigenvalues },
            scalar_curvature,
            dimension,
        })
    }

    pub fn kind(&self) -> &SpectrumKind {
        &self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn scalar_curvature(&self) -> f64 {
        self.scalar_curvature
    }

    /// `ρ = (n−1)/(4n)·R_γ`, the conformal-coupling curvature potential.
    pub fn curvature_potential(&self) -> f64 {
        let n = self.dimension as f64;
        (n - 1.0) / (4.0 * n) * self.scalar_curvature
    }

    /// Distinct eigenvalues `≤ cutoff` with multiplicities, ascending.
    pub fn enumerate_modes(&self, cutoff: f64) -> Result<Vec<Mode>> {
        if !(cutoff >= 0.0) {
            return Err(Error::Validation("mode cutoff must be nonnegative".into()));
        }
        let raw: Vec<(f64, usize)> = match &self.kind {
            SpectrumKind::FlatTorus { periods } => torus_eigenvalues(periods, cutoff),
            SpectrumKind::RoundSphere { dimension, radius } => {
                sphere_eigenvalues(*dimension, *radius, cutoff)
            }
            SpectrumKind::Explicit { eigenvalues } => eigenvalues
                .iter()
                .copied()
                .filter(|(l, _)| *l <= cutoff)
                .collect(),
        };
        Ok(merge(raw)
            .into_iter()
            .enumerate()
            .map(|(index, (eigenvalue, multiplicity))| Mode {
                index,
                eigenvalue,
                multiplicity,
            })
            .collect())
    }

    /// Eigenvalues repeated according to multiplicity.
    pub fn eigenvalue_list(&self, cutoff: f64) -> Result<Vec<f64>> {
        Ok(self
            .enumerate_modes(cutoff)?
            .iter()
            .flat_map(|m| std::iter::repeat_n(m.eigenvalue, m.multiplicity))
            .collect())
    }
}

fn merge(mut raw: Vec<(f64, usize)>) -> Vec<(f64, usize)> {
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, usize)> = Vec::new();
    for (l, m) in raw {
        match out.last_mut() {
            Some(last) if (l - last.0).abs() <= 1e-12 * l.abs().max(last.0.abs()).max(1e-300) || l == last.0 => {
                last.1 += m
            }
            _ => out.push((l, m)),
        }
    }
    out
}

fn torus_eigenvalues(periods: &[f64], cutoff: f64) -> Vec<(f64, usize)> {
    let freqs: Vec<f64> = periods.iter().map(|l| 2.0 * std::f64::consts::PI / l).collect();
    let mut out = Vec::new();
    fn walk(freqs: &[f64], partial: f64, cutoff: f64, out: &mut Vec<(f64, usize)>) {
        let Some((&w, rest)) = freqs.split_first() else {
            out.push((partial, 1));
            return;
        };
        let kmax = ((cutoff - partial).max(0.0).sqrt() / w).floor() as i64;
        for k in -kmax..=kmax {
            let v = partial + (w * k as f64).powi(2);
            if v <= cutoff * (1.0 + 1e-14) {
                walk(rest, v, cutoff, out);
            }
        }
    }
    walk(&freqs, 0.0, cutoff, &mut out);
    out
}

fn binomial(n: i64, k: i64) -> usize {
    if k < 0 || n < k {
        return 0;
    }
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

fn sphere_eigenvalues(n: usize, r: f64, cutoff: f64) -> Vec<(f64, usize)> {
    let mut out = Vec::new();
    let ni = n as i64;
    for l in 0.. {
        let lf = l as f64;
        let lambda = lf * (lf + n as f64 - 1.0) / (r * r);
        if lambda > cutoff * (1.0 + 1e-14) {
            break;
        }
        let mult = if n == 1 {
            if l == 0 { 1 } else { 2 }
        } else {
            binomial(l + ni, ni) - binomial(l + ni - 2, ni)
        };
        out.push((lambda, mult));
    }
    out
}

/// `sqrt(Σ mult·(λ+1)^s·|a|²)`.
pub fn sobolev_norm(coefficients: &[(Mode, Complex64)], s: f64) -> f64 {
    coefficients
        .iter()
        .map(|(m, a)| m.multiplicity as f64 * (m.eigenvalue + 1.0).powf(s) * a.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mode(l: f64, m: usize) -> Mode {
        Mode { index: 0, eigenvalue: l, multiplicity: m }
    }

    #[test]
    fn circle_eigenvalues() {
        let t = SpectrumSpec::flat_torus(vec![2.0 * std::f64::consts::PI]).unwrap();
        let list = t.eigenvalue_list(4.5).unwrap();
        let expected = [0.0, 1.0, 1.0, 4.0, 4.0];
        assert_eq!(list.len(), 5);
        for (a, b) in list.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(t.curvature_potential(), 0.0);
    }

    #[test]
    fn two_sphere_and_three_sphere() {
        let s2 = SpectrumSpec::round_sphere(2, 1.0).unwrap();
        let modes = s2.enumerate_modes(2.5).unwrap();
        assert_eq!(modes.len(), 2);
        assert_eq!((modes[0].eigenvalue, modes[0].multiplicity), (0.0, 1));
        assert_eq!((modes[1].eigenvalue, modes[1].multiplicity), (2.0, 3));
        assert!((s2.curvature_potential() - 0.25).abs() < 1e-15);
        let s3 = SpectrumSpec::round_sphere(3, 1.0).unwrap();
        assert!((s3.curvature_potential() - 1.0).abs() < 1e-15);
        // ℓ = 2 on S³: λ = 8, multiplicity (ℓ+1)² = 9
        let m3 = s3.enumerate_modes(8.0).unwrap();
        assert_eq!(m3.last().unwrap().multiplicity, 9);
    }

    #[test]
    fn explicit_spectrum_round_trips_and_validates() {
        let e = SpectrumSpec::explicit(3, vec![(0.0, 1), (5.0, 2)], 0.0).unwrap();
        let m = e.enumerate_modes(10.0).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!((m[1].eigenvalue, m[1].multiplicity), (5.0, 2));
        assert!(SpectrumSpec::explicit(3, vec![(5.0, 1), (0.0, 1)], 0.0).is_err());
        assert!(SpectrumSpec::explicit(3, vec![(-1.0, 1)], 0.0).is_err());
    }

    #[test]
    fn torus_degeneracies_merge() {
        let t3 = SpectrumSpec::flat_torus(vec![2.0 * std::f64::consts::PI; 3]).unwrap();
        let m = t3.enumerate_modes(1.0).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[1].multiplicity, 6);
    }

    #[test]
    fn sobolev_weights() {
        let one = Complex64::new(1.0, 0.0);
        assert!((sobolev_norm(&[(mode(3.0, 1), one)], 1.0) - 2.0).abs() < 1e-15);
        let c = [(mode(0.0, 1), 2.0 * one), (mode(3.0, 1), one)];
        assert!((sobolev_norm(&c, -1.0) - (4.25f64).sqrt()).abs() < 1e-15);
        assert!((sobolev_norm(&c, 0.0) - 5.0f64.sqrt()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn mode_count_monotone_in_cutoff(a in 0.0f64..40.0, b in 0.0f64..40.0) {
            let t = SpectrumSpec::flat_torus(vec![2.0, 3.5]).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(t.eigenvalue_list(lo).unwrap().len() <= t.eigenvalue_list(hi).unwrap().len());
        }

        #[test]
        fn sobolev_norm_monotone_homogeneous_subadditive(
            amps in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..6),
            other in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 6),
            s in -2.0f64..2.0, ds in 0.0f64..2.0, k in -4.0f64..4.0,
        ) {
            let x: Vec<(Mode, Complex64)> = amps.iter().enumerate()
                .map(|(i, (re, im))| (mode(i as f64 * 1.7, i + 1), Complex64::new(*re, *im))).collect();
            let y: Vec<(Mode, Complex64)> = x.iter().zip(&other)
                .map(|((m, _), (re, im))| (*m, Complex64::new(*re, *im))).collect();
            let n = sobolev_norm(&x, s);
            prop_assert!(sobolev_norm(&x, s + ds) >= n * (1.0 - 1e-12));
            let scaled: Vec<_> = x.iter().map(|(m, a)| (*m, a * k)).collect();
            prop_assert!((sobolev_norm(&scaled, s) - k.abs() * n).abs() <= 1e-12 * (1.0 + n));
            let sum: Vec<_> = x.iter().zip(&y).map(|((m, a), (_, b))| (*m, a + b)).collect();
            prop_assert!(sobolev_norm(&sum, s) <= n + sobolev_norm(&y, s) + 1e-12);
        }
    }
}
