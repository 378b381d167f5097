//! Dormand–Prince 5(4) with PI step control, usable forward or backward in time.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Dopri {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub initial_step: Option<f64>,
}

impl Default for Dopri {
    fn default() -> Self {
        Dopri {
            rtol: 1e-12,
            atol: 1e-12,
            max_steps: 2_000_000,
            initial_step: None,
        }
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Difference between the 5th and embedded 4th order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

impl Dopri {
    pub fn with_tol(rtol: f64, atol: f64) -> Self {
        Dopri {
            rtol,
            atol,
            ..Default::default()
        }
    }

    /// Integrate `y' = f(t, y)` from `t0` to `t1`, calling `observe` after every
    /// accepted step (including the initial point).
    pub fn integrate<F, O>(&self, mut f: F, t0: f64, y0: &[f64], t1: f64, mut observe: O) -> Result<Vec<f64>>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
        O: FnMut(f64, &[f64]),
    {
        let n = y0.len();
        let mut y = y0.to_vec();
        observe(t0, &y);
        if t1 == t0 {
            return Ok(y);
        }
        let dir = (t1 - t0).signum();
        let span = (t1 - t0).abs();
        let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
        let mut tmp = vec![0.0; n];
        let mut y_new = vec![0.0; n];
        f(t0, &y, &mut k[0]);

        let mut h = match self.initial_step {
            Some(h) => h.abs().min(span),
            None => self.guess_step(&y, &k[0], span),
        };
        let mut t = t0;
        let mut err_prev: f64 = 1e-4;
        let mut steps = 0;
        let min_step = 1e-14 * t0.abs().max(t1.abs()).max(span);

        while (t1 - t) * dir > 0.0 {
            steps += 1;
            if steps > self.max_steps {
                return Err(Error::StepUnderflow { t });
            }
            let last = h >= (t1 - t).abs();
            if last {
                h = (t1 - t).abs();
            }
            let hs = h * dir;
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = y[i];
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += hs * A[s][j] * kj[i];
                    }
                    tmp[i] = acc;
                }
                f(t + C[s] * hs, &tmp, &mut k[s]);
                if s == 6 {
                    y_new.copy_from_slice(&tmp);
                }
            }
            let mut err = 0.0;
            for i in 0..n {
                let mut e = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    e += E[j] * kj[i];
                }
                e *= hs;
                let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                err += (e / sc) * (e / sc);
            }
            let err = (err / n.max(1) as f64).sqrt();
            if err <= 1.0 || h <= min_step {
                if h <= min_step && err > 1.0 {
                    return Err(Error::StepUnderflow { t });
                }
                t = if last { t1 } else { t + hs };
                y.copy_from_slice(&y_new);
                // FSAL: last stage is the derivative at the new point.
                let k6 = k[6].clone();
                k[0].copy_from_slice(&k6);
                observe(t, &y);
                let fac = 0.9 * err.max(1e-10).powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
                h *= fac.clamp(0.2, 5.0);
                err_prev = err.max(1e-4);
            } else {
                let fac = 0.9 * err.powf(-0.2);
                h *= fac.clamp(0.1, 0.9);
                if h < min_step {
                    return Err(Error::StepUnderflow { t });
                }
            }
        }
        Ok(y)
    }

    fn guess_step(&self, y: &[f64], dy: &[f64], span: f64) -> f64 {
        let mut d0: f64 = 0.0;
        let mut d1: f64 = 0.0;
        for (yi, di) in y.iter().zip(dy) {
            let sc = self.atol + self.rtol * yi.abs();
            d0 = d0.max(yi.abs() / sc);
            d1 = d1.max(di.abs() / sc);
        }
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h.min(span).min(0.01 * span.max(1e-3))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_forward_and_backward() {
        let solver = Dopri::default();
        let f = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -4.0 * y[0];
        };
        let y = solver.integrate(f, 0.0, &[1.0, 0.0], 3.0, |_, _| {}).unwrap();
        assert!((y[0] - (6.0f64).cos()).abs() < 1e-10);
        let back = solver.integrate(f, 3.0, &y, 0.0, |_, _| {}).unwrap();
        assert!((back[0] - 1.0).abs() < 1e-10 && back[1].abs() < 1e-9);
    }

    #[test]
    fn observer_sees_endpoints() {
        let mut ts = Vec::new();
        Dopri::default()
            .integrate(|_, y, dy| dy[0] = -y[0], 1.0, &[1.0], 0.5, |t, _| ts.push(t))
            .unwrap();
        assert_eq!(ts[0], 1.0);
        assert_eq!(*ts.last().unwrap(), 0.5);
        assert!(ts.windows(2).all(|w| w[1] < w[0]));
    }
}
