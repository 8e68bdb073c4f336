//! Embedded Dormand-Prince 5(4) integrator with adaptive step size.
//!
//! Only autonomous right-hand sides are needed, so the stage times are not tracked.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs: 1e-10, rel: 1e-10 }
    }
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const MAX_STEPS: usize = 1_000_000;

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], tol: Tolerance) -> f64 {
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = tol.abs + tol.rel * a.abs().max(b.abs());
            (e / sc) * (e / sc)
        })
        .sum();
    (s / err.len() as f64).sqrt()
}

fn initial_step<F>(rhs: &F, y: &[f64], f0: &[f64], span: f64, tol: Tolerance) -> f64
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = y.len();
    let scale = |i: usize| tol.abs + tol.rel * y[i].abs();
    let d0 = (0..n).map(|i| (y[i] / scale(i)).powi(2)).sum::<f64>().sqrt() / (n as f64).sqrt();
    let d1 = (0..n).map(|i| (f0[i] / scale(i)).powi(2)).sum::<f64>().sqrt() / (n as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1: Vec<f64> = (0..n).map(|i| y[i] + h0 * f0[i]).collect();
    let mut f1 = vec![0.0; n];
    rhs(&y1, &mut f1);
    let d2 = (0..n)
        .map(|i| ((f1[i] - f0[i]) / scale(i)).powi(2))
        .sum::<f64>()
        .sqrt()
        / (n as f64).sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Integrates the autonomous system `y' = rhs(y)` over a time span of length
/// `span`, returning the state at the end of the span. The final step is
/// clamped so the end time is hit exactly.
pub fn flow<F>(rhs: &F, y0: &[f64], span: f64, tol: Tolerance) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = y0.len();
    if span == 0.0 {
        return Ok(y0.to_vec());
    }
    if !(span > 0.0) {
        return Err(Error::InvalidArgument(format!("flow span must be positive, got {span}")));
    }
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; n]; 7];
    rhs(&y, &mut k[0]);
    let mut h = initial_step(rhs, &y, &k[0], span, tol);
    let mut t = 0.0;
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];

    for _ in 0..MAX_STEPS {
        let remaining = span - t;
        if remaining <= 0.0 {
            return Ok(y);
        }
        let last = h >= remaining;
        let step = if last { remaining } else { h };

        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[i];
                }
                stage[i] = y[i] + step * acc;
            }
            rhs(&stage, &mut k[s]);
        }
        // The seventh stage is evaluated at the fifth-order solution (FSAL).
        y_new.copy_from_slice(&stage);
        for i in 0..n {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += E[j] * kj[i];
            }
            err[i] = step * e;
        }
        if y_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ODE integration diverged".into()));
        }
        let en = error_norm(&err, &y, &y_new, tol);
        if en <= 1.0 {
            t = if last { span } else { t + step };
            y.copy_from_slice(&y_new);
            let k7 = k[6].clone();
            k[0].copy_from_slice(&k7);
            let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
            h = step * fac;
        } else {
            h = step * (0.9 * en.powf(-0.2)).clamp(0.2, 1.0);
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::NonFinite("ODE step size collapsed".into()));
        }
    }
    Err(Error::NonFinite("ODE integration exceeded the step budget".into()))
}
