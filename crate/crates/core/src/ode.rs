// SPDX-License-Identifier: Apache-2.0

//! Dormand–Prince 5(4) integrator with PI step-size control and the
//! fourth-order continuous extension of Hairer, Nørsett & Wanner.
//!
//! The state is a flat `f64` slice; callers pack complex matrices into it.
//! Output is produced only at caller-requested sample times, by dense
//! interpolation, so the accepted step sequence never depends on the sample
//! grid.

use crate::{Error, Result};

/// Error tolerances of the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerance {
    /// Relative tolerance per component.
    pub rtol: f64,
    /// Absolute tolerance per component.
    pub atol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
        }
    }
}

impl Tolerance {
    /// Check that both tolerances are positive and finite.
    pub fn validate(&self) -> Result<()> {
        if self.rtol > 0.0 && self.atol > 0.0 && self.rtol.is_finite() && self.atol.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter("integrator tolerances must be > 0".into()))
        }
    }
}

/// Statistics of one integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Difference between the fifth- and fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Continuous extension.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const MAX_GROWTH: f64 = 10.0;
const MAX_SHRINK: f64 = 0.2;
const MAX_STEPS: usize = 50_000_000;

/// Integrate `y' = f(t, y)` from `t0` with initial value `y0`, returning the
/// solution at every time in `samples` (which must be sorted and `≥ t0`).
///
/// `f(t, y, dy)` writes the derivative into `dy`.
pub fn integrate<F>(f: F, t0: f64, y0: &[f64], samples: &[f64], tol: &Tolerance) -> Result<(Vec<Vec<f64>>, Stats)>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    tol.validate()?;
    if samples.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("sample times must be sorted".into()));
    }
    if samples.first().is_some_and(|&s| s < t0) {
        return Err(Error::InvalidParameter("sample times must not precede t0".into()));
    }
    let n = y0.len();
    let mut out = Vec::with_capacity(samples.len());
    let mut stats = Stats::default();
    let mut next = 0;
    while next < samples.len() && samples[next] == t0 {
        out.push(y0.to_vec());
        next += 1;
    }
    let Some(&t_end) = samples.last() else {
        return Ok((out, stats));
    };
    if next == samples.len() {
        return Ok((out, stats));
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    );
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut cont = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];

    f(t, &y, &mut k1);
    stats.evaluations += 1;
    let mut h = initial_step(&f, t, &y, &k1, t_end - t0, tol, &mut stats);
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;

    for _ in 0..MAX_STEPS {
        if t + h > t_end {
            h = t_end - t;
        }
        let tiny = 10.0 * f64::EPSILON * t.abs().max(1.0);
        if h.abs() < tiny {
            return Err(Error::StepUnderflow { t, h });
        }

        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, &ytmp, &mut k2);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, &ytmp, &mut k3);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, &ytmp, &mut k4);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, &ytmp, &mut k5);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = t + h;
        f(t_new, &ytmp, &mut k6);
        for i in 0..n {
            ynew[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(t_new, &ynew, &mut k7);
        stats.evaluations += 6;

        let mut err = 0.0;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = tol.atol + tol.rtol * y[i].abs().max(ynew[i].abs());
            err += (e / sk) * (e / sk);
        }
        let err = (err / n.max(1) as f64).sqrt();
        if !err.is_finite() {
            stats.rejected += 1;
            h *= MAX_SHRINK;
            last_rejected = true;
            continue;
        }

        let fac11 = err.powf(0.2 - BETA * 0.75);
        if err <= 1.0 {
            // Accepted: build the continuous extension before overwriting y.
            for i in 0..n {
                let ydiff = ynew[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                cont[0][i] = y[i];
                cont[1][i] = ydiff;
                cont[2][i] = bspl;
                cont[3][i] = ydiff - h * k7[i] - bspl;
                cont[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            while next < samples.len() && samples[next] <= t_new {
                let theta = (samples[next] - t) / h;
                out.push(dense(&cont, theta));
                next += 1;
            }
            stats.accepted += 1;
            t = t_new;
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            if next == samples.len() {
                return Ok((out, stats));
            }
            // PI controller: the previous accepted error damps the update.
            let mut fac = fac11 / facold.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / MAX_GROWTH, 1.0 / MAX_SHRINK);
            facold = err.max(1e-4);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
            h = h_new;
        } else {
            stats.rejected += 1;
            h /= (fac11 / SAFETY).min(1.0 / MAX_SHRINK);
            last_rejected = true;
        }
    }
    Err(Error::StepUnderflow { t, h })
}

/// Evaluate the continuous extension at `θ ∈ [0, 1]`.
fn dense(cont: &[Vec<f64>; 5], theta: f64) -> Vec<f64> {
    let theta1 = 1.0 - theta;
    (0..cont[0].len())
        .map(|i| cont[0][i] + theta * (cont[1][i] + theta1 * (cont[2][i] + theta * (cont[3][i] + theta1 * cont[4][i]))))
        .collect()
}

/// Starting step from the Hairer–Wanner heuristic.
fn initial_step<F>(f: &F, t: f64, y: &[f64], f0: &[f64], span: f64, tol: &Tolerance, stats: &mut Stats) -> f64
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let n = y.len().max(1) as f64;
    let scale = |i: usize| tol.atol + tol.rtol * y[i].abs();
    let d0 = (y.iter().enumerate().map(|(i, v)| (v / scale(i)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (f0.iter().enumerate().map(|(i, v)| (v / scale(i)).powi(2)).sum::<f64>() / n).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(v, d)| v + h0 * d).collect();
    let mut f1 = vec![0.0; y.len()];
    f(t + h0, &y1, &mut f1);
    stats.evaluations += 1;
    let d2 = (f1
        .iter()
        .zip(f0)
        .enumerate()
        .map(|(i, (a, b))| ((a - b) / scale(i)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0)
        .min(h1)
        .min(span)
        .max(f64::EPSILON * t.abs().max(1.0) * 100.0)
}
