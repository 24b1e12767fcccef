// SPDX-License-Identifier: Apache-2.0

//! Globally adaptive Gauss–Kronrod (7/15) quadrature for vector-valued
//! integrands, plus a Cauchy principal-value wrapper.
//!
//! The integrators take a list of breakpoints that seed the initial panel
//! set. For the sinc-weighted integrals of the coarse-grained generator the
//! breakpoints are the zeros of the sinc factors, so each initial panel
//! contains less than half an oscillation and the Kronrod rule is accurate
//! from the start. Refinement then bisects the panel with the largest error
//! estimate until the summed estimate meets the tolerance.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::{Error, Result};

/// Tolerances and budget for every quadrature in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Relative tolerance on the max-norm of the integral.
    pub rel_tol: f64,
    /// Absolute tolerance on the max-norm of the integral.
    pub abs_tol: f64,
    /// Maximum number of panels, including the initial subdivision.
    pub max_panels: usize,
    /// Half-width of the window folded around a principal-value pole.
    pub pv_excision: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-13,
            max_panels: 400_000,
            pv_excision: 0.1,
        }
    }
}

impl QuadratureSpec {
    /// Smallest admissible panel budget.
    pub const MIN_PANELS: usize = 64;

    /// Check the documented constraints.
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidParameter("quadrature tolerances must be > 0".into()));
        }
        if self.max_panels < Self::MIN_PANELS {
            return Err(Error::InvalidParameter(format!(
                "max_panels = {} must be >= {}",
                self.max_panels,
                Self::MIN_PANELS
            )));
        }
        if !(self.pv_excision > 0.0 && self.pv_excision.is_finite()) {
            return Err(Error::InvalidParameter("pv_excision must be > 0".into()));
        }
        Ok(())
    }
}

/// Result of a vector quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadResult {
    /// Integral of each component.
    pub value: Vec<f64>,
    /// Summed Kronrod error estimate (max-norm over components).
    pub error: f64,
    /// Number of panels in the final subdivision.
    pub panels: usize,
}

// Kronrod abscissae on [0, 1]; odd indices are the 7-point Gauss nodes.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One panel of the subdivision with its Kronrod sum and error estimate.
struct Panel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

/// Apply the 15-point Kronrod rule (and its embedded 7-point Gauss rule) to
/// `[a, b]`. `buf` is scratch space of length `dim`.
fn kronrod_panel<F>(f: &F, a: f64, b: f64, dim: usize, buf: &mut [f64]) -> Panel
where
    F: Fn(f64, &mut [f64]),
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut k = vec![0.0; dim];
    let mut g = vec![0.0; dim];

    f(center, buf);
    for i in 0..dim {
        k[i] = WGK[7] * buf[i];
        g[i] = WG[3] * buf[i];
    }
    for j in 0..7 {
        let dx = half * XGK[j];
        for x in [center - dx, center + dx] {
            f(x, buf);
            for i in 0..dim {
                k[i] += WGK[j] * buf[i];
                if j % 2 == 1 {
                    g[i] += WG[j / 2] * buf[i];
                }
            }
        }
    }
    let mut error = 0.0f64;
    for i in 0..dim {
        k[i] *= half;
        g[i] *= half;
        error = error.max((k[i] - g[i]).abs());
    }
    Panel { a, b, value: k, error }
}

/// Heap entry ordering panels by error estimate.
struct ByError {
    error: f64,
    index: usize,
}

impl PartialEq for ByError {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for ByError {}
impl PartialOrd for ByError {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for ByError {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.index.cmp(&self.index))
    }
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Integrate the `dim`-component function `f` over `[a, b]`.
///
/// `f(x, out)` writes the integrand at `x` into `out`. Breakpoints inside
/// `(a, b)` seed the initial subdivision; points outside are ignored. The
/// error criterion is `error ≤ max(abs_tol, rel_tol·‖I‖∞)`.
pub fn integrate_vec<F>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    dim: usize,
    spec: &QuadratureSpec,
) -> Result<QuadResult>
where
    F: Fn(f64, &mut [f64]),
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain("integration limits must be finite".into()));
    }
    if a == b {
        return Ok(QuadResult {
            value: vec![0.0; dim],
            error: 0.0,
            panels: 0,
        });
    }
    let (lo, hi, flip) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };

    let mut nodes: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&x| x > lo && x < hi && x.is_finite())
        .collect();
    nodes.push(lo);
    nodes.push(hi);
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    let initial = nodes.len() - 1;
    if initial > spec.max_panels {
        return Err(Error::PanelBudget {
            required: initial,
            budget: spec.max_panels,
        });
    }

    let mut buf = vec![0.0; dim];
    let mut panels: Vec<Panel> = Vec::with_capacity(initial * 2);
    let mut heap = BinaryHeap::with_capacity(initial * 2);
    let mut total = vec![0.0; dim];
    let mut total_error = 0.0;
    for w in nodes.windows(2) {
        let p = kronrod_panel(&f, w[0], w[1], dim, &mut buf);
        for (t, v) in total.iter_mut().zip(&p.value) {
            *t += v;
        }
        total_error += p.error;
        heap.push(ByError {
            error: p.error,
            index: panels.len(),
        });
        panels.push(p);
    }

    loop {
        let target = spec.abs_tol.max(spec.rel_tol * max_norm(&total));
        if total_error <= target {
            break;
        }
        let Some(worst) = heap.pop() else {
            return Err(Error::QuadratureNotConverged {
                achieved: total_error,
                target,
                panels: panels.len(),
            });
        };
        if panels.len() + 1 > spec.max_panels {
            return Err(Error::QuadratureNotConverged {
                achieved: total_error,
                target,
                panels: panels.len(),
            });
        }
        let (pa, pb) = (panels[worst.index].a, panels[worst.index].b);
        let mid = 0.5 * (pa + pb);
        if !(mid > pa && mid < pb) {
            // The panel cannot be bisected in floating point; keep its
            // estimate and move on to the next candidate.
            continue;
        }
        let left = kronrod_panel(&f, pa, mid, dim, &mut buf);
        let right = kronrod_panel(&f, mid, pb, dim, &mut buf);
        let old = &panels[worst.index];
        for (i, t) in total.iter_mut().enumerate() {
            *t += left.value[i] + right.value[i] - old.value[i];
        }
        total_error += left.error + right.error - old.error;
        heap.push(ByError {
            error: left.error,
            index: worst.index,
        });
        heap.push(ByError {
            error: right.error,
            index: panels.len(),
        });
        panels[worst.index] = left;
        panels.push(right);
    }

    // Re-sum in left-to-right order so the result does not depend on the
    // refinement history beyond the final subdivision.
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    let mut value = vec![0.0; dim];
    let mut error = 0.0;
    for p in &panels {
        for (v, pv) in value.iter_mut().zip(&p.value) {
            *v += pv;
        }
        error += p.error;
    }
    for v in &mut value {
        *v *= flip;
    }
    Ok(QuadResult {
        value,
        error,
        panels: panels.len(),
    })
}

/// Scalar convenience wrapper around [`integrate_vec`]; returns
/// `(value, error estimate)`.
pub fn integrate<F>(f: F, a: f64, b: f64, breakpoints: &[f64], spec: &QuadratureSpec) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    let r = integrate_vec(|x, out: &mut [f64]| out[0] = f(x), a, b, breakpoints, 1, spec)?;
    Ok((r.value[0], r.error))
}

/// Cauchy principal value of `∫_a^b num(ω)/(pole − ω) dω`.
///
/// If the pole lies strictly inside `(a, b)` a window of half-width
/// `h = min(pv_excision, pole − a, b − pole)` is folded onto itself:
/// `∫_0^h (num(pole − t) − num(pole + t))/t dt`, which has a finite
/// integrand, and the remainder is ordinary quadrature. No extrapolation in
/// `h` is involved, so the result is exact up to the quadrature tolerance.
pub fn principal_value<F>(num: F, a: f64, b: f64, pole: f64, spec: &QuadratureSpec) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    if !(a < b) {
        return Err(Error::Domain("principal value needs a < b".into()));
    }
    if pole == a || pole == b {
        return Err(Error::Domain(
            "principal value with the pole on an endpoint diverges".into(),
        ));
    }
    let quotient = |w: f64| num(w) / (pole - w);
    if pole < a || pole > b {
        return integrate(quotient, a, b, &[], spec);
    }
    let h = spec.pv_excision.min(pole - a).min(b - pole);
    let (left, e1) = integrate(quotient, a, pole - h, &[], spec)?;
    let (right, e2) = integrate(quotient, pole + h, b, &[], spec)?;
    let (folded, e3) = integrate(|t| (num(pole - t) - num(pole + t)) / t, 0.0, h, &[], spec)?;
    Ok((left + right + folded, e1 + e2 + e3))
}
