// SPDX-License-Identifier: Apache-2.0

//! Transport observables and continuity checks.
//!
//! Two continuity equations are verified for every dynamics:
//!
//! * the excitation balance of the middle site,
//!   `d⟨a₂†a₂⟩/dt = A⟨J₁₂ − J₂₃⟩ + ⟨Q_L⟩ + ⟨Q_R⟩`, where the sink/source terms
//!   `⟨Q_α⟩` vanish for the exact and local dynamics;
//! * the spatial continuity of the position density
//!   `ρ(x) = ⅓Σ_ℓ ⟨δ(x − x̂_ℓ)⟩`, `∂_tρ + ∂_x(jᵁ + jᴰ + 𝒬) + ∂_x²𝒫 = 0`.
//!
//! Site indices are 0-based throughout (`0, 1, 2` for sites 1, 2, 3).

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{Matrix3, Matrix6, Vector6};
use rayon::prelude::*;

use crate::dynamics::{build_drift_diffusion, CovarianceState};
use crate::generators::{lamb_shift_pv, resolve_tcg, GeneratorCoefficients, ResolvedGenerator, TcgOptions};
use crate::linalg::CMat3;
use crate::model::{mean_photon, normal_modes, site_hamiltonian, spectral_density, Bath, ChainParams};
use crate::quadrature::QuadratureSpec;
use crate::{Error, Result, C64};

/// The reduced dynamics a report refers to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Approach {
    Exact,
    Local,
    Global,
    Tcg { delta_t: f64 },
}

impl Approach {
    /// Lower-case name used in CSV files.
    pub fn name(&self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Local => "local",
            Self::Global => "global",
            Self::Tcg { .. } => "tcg",
        }
    }

    /// Coarse-graining time for the TCG approach.
    pub fn delta_t(&self) -> Option<f64> {
        match self {
            Self::Tcg { delta_t } => Some(*delta_t),
            _ => None,
        }
    }
}

/// Energy-transport observables at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyTransportReport {
    pub approach: Approach,
    pub t: f64,
    pub j12: f64,
    pub j23: f64,
    pub q_left: f64,
    pub q_right: f64,
    /// `d⟨a₂†a₂⟩/dt`.
    pub n2_rate: f64,
    /// `|n2_rate − RHS|` of the approach's continuity equation.
    pub residual: f64,
}

/// `⟨J_jk⟩ = i⟨a_j a_k† − a_j† a_k⟩ = −2 Im⟨a_k† a_j⟩`.
///
/// With hopping `g(a_j†a_k + h.c.)`, `d⟨a_j†a_j⟩/dt = g⟨J_jk⟩`, so a positive
/// value means excitations flow from site `k` into site `j`.
pub fn excitation_current(s: &CovarianceState, j: usize, k: usize) -> f64 {
    -2.0 * s.number_moments()[(j, k)].im
}

/// `⟨Q_jk⟩ = ⟨a_j†a_k + a_j a_k†⟩`, equal to `2 Re⟨a_k†a_j⟩` for `j ≠ k`.
pub fn bond_coherence(s: &CovarianceState, j: usize, k: usize) -> f64 {
    let x = s.number_moments();
    x[(j, k)].re + x[(k, j)].re + if j == k { 1.0 } else { 0.0 }
}

/// `⟨a_i†a_i⟩ = (C_ii − 1)/2 + |d_i|²`.
pub fn occupation(s: &CovarianceState, i: usize) -> f64 {
    (s.c[(i, i)].re - 1.0) / 2.0 + s.d[i].norm_sqr()
}

/// Right-hand side of the middle-site balance, split into divergence and
/// sink/source parts: `rhs = a_coeff·⟨J₁₂ − J₂₃⟩ + q_left + q_right`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBalance {
    pub rhs: f64,
    pub a_coeff: f64,
    pub q_left: f64,
    pub q_right: f64,
}

/// Affine dependence of `d⟨a₂†a₂⟩/dt` on the bond observables for one
/// additive source of the generator:
/// `c_j12·J₁₂ + c_j23·J₂₃ + c_q12·Q₁₂ + c_q23·Q₂₃ + c_n2·n₂ + c_1`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct MiddleSiteCoefficients {
    j12: f64,
    j23: f64,
    q12: f64,
    q23: f64,
    n2: f64,
    constant: f64,
}

impl MiddleSiteCoefficients {
    /// From the source's reduced drift `m` and absorption rates (site basis):
    /// `dX₂₂ = 2 Re Σ_k m₂ₖ X_k₂ + Γ⁻₂₂` with `X₁₂ = (Q₁₂ − iJ₁₂)/2`,
    /// `X₃₂ = (Q₂₃ + iJ₂₃)/2`.
    fn from_drift(m: &CMat3, gamma_minus: &CMat3) -> Self {
        Self {
            j12: m[(1, 0)].im,
            j23: -m[(1, 2)].im,
            q12: m[(1, 0)].re,
            q23: m[(1, 2)].re,
            n2: 2.0 * m[(1, 1)].re,
            constant: gamma_minus[(1, 1)].re,
        }
    }

    /// Antisymmetric (divergence) part of the current coefficients.
    fn divergence(&self) -> f64 {
        0.5 * (self.j12 - self.j23)
    }

    /// Everything that is not a bond-current difference.
    fn sink_source(&self, obs: &BondObservables) -> f64 {
        0.5 * (self.j12 + self.j23) * (obs.j12 + obs.j23)
            + self.q12 * obs.q12
            + self.q23 * obs.q23
            + self.n2 * obs.n2
            + self.constant
    }
}

struct BondObservables {
    j12: f64,
    j23: f64,
    q12: f64,
    q23: f64,
    n2: f64,
}

impl BondObservables {
    fn of(s: &CovarianceState) -> Self {
        Self {
            j12: excitation_current(s, 0, 1),
            j23: excitation_current(s, 1, 2),
            q12: bond_coherence(s, 0, 1),
            q23: bond_coherence(s, 1, 2),
            n2: occupation(s, 1),
        }
    }
}

/// Middle-site balance for any generator resolved per bath; the state must
/// be in the site basis.
///
/// Each additive source (chain Hamiltonian, bath L, bath R) contributes a
/// term affine in the bond observables. Its part antisymmetric in
/// `J₁₂ ↔ J₂₃` is a discrete divergence and enters `a_coeff`; the rest of a
/// bath's contribution is that bath's sink/source term.
pub fn energy_balance(s: &CovarianceState, gen: &ResolvedGenerator) -> EnergyBalance {
    let site = gen.to_site_basis();
    let minus_i = C64::new(0.0, -1.0);
    let system = MiddleSiteCoefficients::from_drift(&(site.system * minus_i), &CMat3::zeros());
    let obs = BondObservables::of(s);
    let mut a_coeff = system.divergence();
    let mut q = [0.0; 2];
    for (qa, terms) in q.iter_mut().zip(&site.baths) {
        let m = terms.lamb * minus_i - (terms.gamma_plus.conjugate() - terms.gamma_minus).scale(0.5);
        let c = MiddleSiteCoefficients::from_drift(&m, &terms.gamma_minus);
        a_coeff += c.divergence();
        *qa = c.sink_source(&obs);
    }
    // The chain Hamiltonian has no symmetric part; included for completeness.
    let system_rest = system.sink_source(&obs);
    EnergyBalance {
        rhs: a_coeff * (obs.j12 - obs.j23) + q[0] + q[1] + system_rest,
        a_coeff,
        q_left: q[0],
        q_right: q[1],
    }
}

/// Exact and local dynamics: `−g⟨J₁₂ − J₂₃⟩`, with no sink or source.
pub fn energy_rhs_exact_or_local(s: &CovarianceState, params: &ChainParams) -> f64 {
    -params.g * (excitation_current(s, 0, 1) - excitation_current(s, 1, 2))
}

/// Global dynamics, closed form:
/// `rhs = −g′⟨J₁₂ − J₂₃⟩ + Σ_α⟨Q_α⟩` with
/// `g′ = g − (√2λ²/4)(S(ε₁) − S(ε₃))` and
/// `⟨Q_α⟩ = (√2πλ²/16)(J(ε₁) − J(ε₃))⟨Q₁₂ + Q₂₃⟩ − (πλ²/4)Σ_{i=1,3} J(εᵢ)(⟨a₂†a₂⟩ − n̄_α(εᵢ))`.
/// Mode 1 is dropped when `ε₁ ≤ 0`, as in the generator.
pub fn energy_rhs_global(s: &CovarianceState, params: &ChainParams, quad: &QuadratureSpec) -> Result<EnergyBalance> {
    let lam2 = params.lambda * params.lambda;
    let eps = normal_modes(params).epsilon;
    let keep1 = params.resonant_gap_positive();
    let total_shift = |e: f64| -> Result<f64> { Ok(2.0 * lamb_shift_pv(e, params, quad)?) };
    let s1 = if keep1 { total_shift(eps[0])? } else { 0.0 };
    let s3 = total_shift(eps[2])?;
    let g_prime = params.g - SQRT_2 * lam2 / 4.0 * (s1 - s3);
    let j = |i: usize| {
        if i == 0 && !keep1 {
            0.0
        } else {
            spectral_density(eps[i], params.omega_c)
        }
    };
    let obs = BondObservables::of(s);
    let mut q = [0.0; 2];
    for bath in Bath::BOTH {
        let temp = params.temperature(bath);
        let mut acc = SQRT_2 * PI * lam2 / 16.0 * (j(0) - j(2)) * (obs.q12 + obs.q23);
        for i in [0usize, 2] {
            if i == 0 && !keep1 {
                continue;
            }
            acc -= PI * lam2 / 4.0 * j(i) * (obs.n2 - mean_photon(eps[i], temp)?);
        }
        q[bath.index()] = acc;
    }
    Ok(EnergyBalance {
        rhs: -g_prime * (obs.j12 - obs.j23) + q[0] + q[1],
        a_coeff: -g_prime,
        q_left: q[0],
        q_right: q[1],
    })
}

/// TCG dynamics with the default conventions; see [`energy_balance`].
pub fn energy_rhs_tcg(
    s: &CovarianceState,
    params: &ChainParams,
    delta_t: f64,
    quad: &QuadratureSpec,
) -> Result<EnergyBalance> {
    let gen = resolve_tcg(params, delta_t, quad, TcgOptions::default())?;
    Ok(energy_balance(s, &gen))
}

/// `d⟨a₂†a₂⟩/dt` generated by `coeffs` at state `s` (both in the site
/// basis).
pub fn n2_rate(s: &CovarianceState, coeffs: &GeneratorCoefficients) -> Result<f64> {
    let dd = build_drift_diffusion(&coeffs.to_site_basis())?;
    let ds = dd.derivative(s);
    // d|d₂|²/dt = 2 Re(d̄₂ ḋ₂).
    Ok((ds.c[(1, 1)].re) / 2.0 + 2.0 * (s.d[1].conj() * ds.d[1]).re)
}

/// Largest residual of a finite-difference continuity check, with the same
/// check repeated at twice the step for a Richardson order estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    /// Max residual at the native sampling.
    pub max_residual: f64,
    /// Max residual with every step doubled.
    pub coarse_residual: f64,
    /// `log₂(coarse/fine)`; close to 2 when the residual is pure
    /// discretization error of the second-order stencils.
    pub observed_order: f64,
    /// Time step of the native sampling.
    pub step: f64,
}

impl ResidualReport {
    fn new(fine: f64, coarse: f64, step: f64) -> Self {
        Self {
            max_residual: fine,
            coarse_residual: coarse,
            observed_order: (coarse / fine).log2(),
            step,
        }
    }
}

fn uniform_step(traj: &[CovarianceState], min_len: usize) -> Result<f64> {
    if traj.len() < min_len {
        return Err(Error::Sampling(format!(
            "need at least {min_len} samples, got {}",
            traj.len()
        )));
    }
    let h = traj[1].t - traj[0].t;
    if !(h > 0.0) {
        return Err(Error::Sampling("sample times must increase".into()));
    }
    for w in traj.windows(2) {
        if ((w[1].t - w[0].t) - h).abs() > 1e-9 * h.max(w[1].t.abs()) {
            return Err(Error::Sampling("sample times must be uniformly spaced".into()));
        }
    }
    Ok(h)
}

/// Compare the central-difference `d⟨a₂†a₂⟩/dt` with `rhs` at interior
/// samples of a uniformly sampled trajectory (site basis).
///
/// `rate_scale`, if given, is `|max Re eig(M)|`; the sampling must then
/// resolve it with at least five points.
pub fn energy_continuity_residual<F>(
    traj: &[CovarianceState],
    rhs: F,
    rate_scale: Option<f64>,
) -> Result<ResidualReport>
where
    F: Fn(&CovarianceState) -> Result<f64>,
{
    let h = uniform_step(traj, 5)?;
    if let Some(rate) = rate_scale {
        if h * rate > 0.2 {
            return Err(Error::Sampling(format!(
                "step {h} is too coarse for relaxation rate {rate}"
            )));
        }
    }
    let n2: Vec<f64> = traj.iter().map(|s| occupation(s, 1)).collect();
    let rhs_vals: Vec<f64> = traj.iter().map(&rhs).collect::<Result<_>>()?;
    let mut fine = 0.0f64;
    let mut coarse = 0.0f64;
    for i in 1..traj.len() - 1 {
        let d = (n2[i + 1] - n2[i - 1]) / (2.0 * h);
        fine = fine.max((d - rhs_vals[i]).abs());
        if i >= 2 && i + 2 < traj.len() {
            let d2 = (n2[i + 2] - n2[i - 2]) / (4.0 * h);
            coarse = coarse.max((d2 - rhs_vals[i]).abs());
        }
    }
    Ok(ResidualReport::new(fine, coarse, h))
}

/// Symmetrized covariance and mean of `(x₁, x₂, x₃, p₁, p₂, p₃)`, where
/// `a = √(ω₀/2) x + i p/√(2ω₀)`.
pub fn quadrature_covariance(s: &CovarianceState, omega0: f64) -> (Matrix6<f64>, Vector6<f64>) {
    let c1 = s.c1();
    let c2 = s.c2();
    let mut v = Matrix6::zeros();
    for i in 0..3 {
        for j in 0..3 {
            v[(i, j)] = (c1[(i, j)].re + c2[(i, j)].re) / (2.0 * omega0);
            v[(3 + i, 3 + j)] = omega0 / 2.0 * (c1[(i, j)].re - c2[(i, j)].re);
            let xp = (c2[(i, j)].im - c1[(i, j)].im) / 2.0;
            v[(i, 3 + j)] = xp;
            v[(3 + j, i)] = xp;
        }
    }
    let mut mean = Vector6::zeros();
    for i in 0..3 {
        mean[i] = s.d[i].re * (2.0 / omega0).sqrt();
        mean[3 + i] = s.d[i].im * (2.0 * omega0).sqrt();
    }
    (v, mean)
}

/// Sampled position density and probability-current fields.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialField {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub j_unitary: Vec<f64>,
    pub j_dissipative: Vec<f64>,
    pub q_term: Vec<f64>,
    pub p_term: Vec<f64>,
    /// Set if the grid does not cover ±8 standard deviations of every site
    /// marginal.
    pub warning: Option<String>,
}

/// Minimum half-width of a grid in units of the marginal standard deviation.
pub const GRID_COVERAGE_SIGMAS: f64 = 8.0;

fn gaussian(x: f64, mu: f64, var: f64) -> f64 {
    (-(x - mu) * (x - mu) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

fn coverage_warning(grid: &[f64], v: &Matrix6<f64>, mean: &Vector6<f64>) -> Option<String> {
    let (lo, hi) = (grid.first()?, grid.last()?);
    (0..3)
        .find(|&l| {
            let sd = v[(l, l)].sqrt();
            mean[l] - GRID_COVERAGE_SIGMAS * sd < *lo || mean[l] + GRID_COVERAGE_SIGMAS * sd > *hi
        })
        .map(|l| format!("grid does not cover ±{GRID_COVERAGE_SIGMAS}σ of site {}", l + 1))
}

/// Uniform grid of `points` samples spanning `±width_sigmas` of the widest
/// site marginal over all `states`, around the extreme means.
pub fn default_grid(states: &[CovarianceState], omega0: f64, points: usize, width_sigmas: f64) -> Result<Vec<f64>> {
    if points < 3 {
        return Err(Error::InvalidParameter("a grid needs at least 3 points".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in states {
        let (v, mean) = quadrature_covariance(s, omega0);
        for l in 0..3 {
            let sd = v[(l, l)].sqrt();
            lo = lo.min(mean[l] - width_sigmas * sd);
            hi = hi.max(mean[l] + width_sigmas * sd);
        }
    }
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::InvalidParameter("cannot build a grid from these states".into()));
    }
    let h = (hi - lo) / (points - 1) as f64;
    Ok((0..points).map(|i| lo + i as f64 * h).collect())
}

/// `ρ(x) = ⅓Σ_ℓ 𝒩(x; ⟨x_ℓ⟩, Var x_ℓ)`; the current fields are left at zero.
pub fn probability_density(s: &CovarianceState, grid: &[f64], omega0: f64) -> SpatialField {
    let (v, mean) = quadrature_covariance(s, omega0);
    let density = grid
        .iter()
        .map(|&x| (0..3).map(|l| gaussian(x, mean[l], v[(l, l)])).sum::<f64>() / 3.0)
        .collect();
    let zeros = vec![0.0; grid.len()];
    SpatialField {
        grid: grid.to_vec(),
        density,
        j_unitary: zeros.clone(),
        j_dissipative: zeros.clone(),
        q_term: zeros.clone(),
        p_term: zeros,
        warning: coverage_warning(grid, &v, &mean),
    }
}

/// Real drift and position diffusion of the quadratures, `ż = A z` and
/// `D_xx`, induced by canonical site-basis coefficients.
struct QuadratureGenerator {
    /// `∂ẋ/∂x = Re M̂`.
    a_xx: Matrix3<f64>,
    /// `∂ẋ/∂p = −Im M̂/ω₀`.
    a_xp: Matrix3<f64>,
    /// Unitary part of `a_xp`: `H_site/ω₀`.
    a_xp_unitary: Matrix3<f64>,
    /// Diagonal of `D_xx = Re N̂/(2ω₀)`.
    d_xx: [f64; 3],
}

impl QuadratureGenerator {
    fn new(coeffs: &GeneratorCoefficients, params: &ChainParams) -> Result<Self> {
        let dd = build_drift_diffusion(coeffs)?;
        let w0 = params.omega0;
        Ok(Self {
            a_xx: dd.m_hat.map(|z| z.re),
            a_xp: dd.m_hat.map(|z| -z.im / w0),
            a_xp_unitary: site_hamiltonian(params) / w0,
            d_xx: std::array::from_fn(|l| dd.n_hat[(l, l)].re / (2.0 * w0)),
        })
    }
}

/// Position density and the probability-current fields of the continuity
/// equation, from Gaussian conditional moments:
/// `⟨½{z_k, δ(x − x̂_ℓ)}⟩ = ρ_ℓ(x)·E[z_k | x_ℓ = x]`.
///
/// * `jᵁ = ⅓Σ_ℓ ρ_ℓ Σ_k (H_site/ω₀)_ℓk E[p_k|x_ℓ]`
/// * `jᴰ = ⅓Σ_ℓ ρ_ℓ Σ_k (A_xp − H_site/ω₀)_ℓk E[p_k|x_ℓ]`
/// * `𝒬 = ⅓Σ_ℓ ρ_ℓ Σ_k (A_xx)_ℓk E[x_k|x_ℓ]`
/// * `𝒫 = −⅓Σ_ℓ ½(D_xx)_ℓℓ ρ_ℓ`
pub fn probability_currents(
    s: &CovarianceState,
    coeffs: &GeneratorCoefficients,
    grid: &[f64],
    params: &ChainParams,
) -> Result<SpatialField> {
    if coeffs.basis != crate::generators::Basis::Site {
        return Err(Error::Malformed(
            "probability currents need site-basis coefficients".into(),
        ));
    }
    let qg = QuadratureGenerator::new(coeffs, params)?;
    let (v, mean) = quadrature_covariance(s, params.omega0);
    let a_xp_diss = qg.a_xp - qg.a_xp_unitary;
    let rows: Vec<[f64; 5]> = grid
        .par_iter()
        .map(|&x| {
            let mut out = [0.0; 5];
            for l in 0..3 {
                let var = v[(l, l)];
                let rho = gaussian(x, mean[l], var);
                let dx = x - mean[l];
                let cond = |k: usize| mean[k] + v[(k, l)] / var * dx;
                let (mut ju, mut jd, mut q) = (0.0, 0.0, 0.0);
                for k in 0..3 {
                    let ep = cond(3 + k);
                    ju += qg.a_xp_unitary[(l, k)] * ep;
                    jd += a_xp_diss[(l, k)] * ep;
                    q += qg.a_xx[(l, k)] * cond(k);
                }
                out[0] += rho / 3.0;
                out[1] += rho * ju / 3.0;
                out[2] += rho * jd / 3.0;
                out[3] += rho * q / 3.0;
                out[4] -= 0.5 * qg.d_xx[l] * rho / 3.0;
            }
            out
        })
        .collect();
    let col = |c: usize| rows.iter().map(|r| r[c]).collect::<Vec<_>>();
    Ok(SpatialField {
        grid: grid.to_vec(),
        density: col(0),
        j_unitary: col(1),
        j_dissipative: col(2),
        q_term: col(3),
        p_term: col(4),
        warning: coverage_warning(grid, &v, &mean),
    })
}

/// Max over interior grid × time points of
/// `|∂_tρ + ∂_x(jᵁ + jᴰ + 𝒬) + ∂_x²𝒫|`, all derivatives by second-order
/// central differences on a uniform grid and uniformly sampled trajectory.
/// For a closed chain only `jᵁ` is nonzero.
pub fn probability_continuity_residual(
    traj: &[CovarianceState],
    coeffs: &GeneratorCoefficients,
    grid: &[f64],
    params: &ChainParams,
) -> Result<ResidualReport> {
    let ht = uniform_step(traj, 5)?;
    if grid.len() < 5 {
        return Err(Error::Sampling("grid needs at least 5 points".into()));
    }
    let hx = grid[1] - grid[0];
    if grid
        .windows(2)
        .any(|w| ((w[1] - w[0]) - hx).abs() > 1e-9 * hx.max(w[1].abs()))
    {
        return Err(Error::Sampling("grid must be uniform".into()));
    }
    let fields: Vec<SpatialField> = traj
        .iter()
        .map(|s| probability_currents(s, coeffs, grid, params))
        .collect::<Result<_>>()?;
    let nx = grid.len();
    let mut fine = 0.0f64;
    let mut coarse = 0.0f64;
    for n in 1..traj.len() - 1 {
        let f = &fields[n];
        let flux: Vec<f64> = (0..nx)
            .map(|i| f.j_unitary[i] + f.j_dissipative[i] + f.q_term[i])
            .collect();
        let has_coarse_t = n >= 2 && n + 2 < traj.len();
        for i in 1..nx - 1 {
            let dt_rho = (fields[n + 1].density[i] - fields[n - 1].density[i]) / (2.0 * ht);
            let dx_flux = (flux[i + 1] - flux[i - 1]) / (2.0 * hx);
            let dxx_p = (f.p_term[i + 1] - 2.0 * f.p_term[i] + f.p_term[i - 1]) / (hx * hx);
            fine = fine.max((dt_rho + dx_flux + dxx_p).abs());
            if has_coarse_t && i >= 2 && i + 2 < nx {
                let dt_rho = (fields[n + 2].density[i] - fields[n - 2].density[i]) / (4.0 * ht);
                let dx_flux = (flux[i + 2] - flux[i - 2]) / (4.0 * hx);
                let dxx_p = (f.p_term[i + 2] - 2.0 * f.p_term[i] + f.p_term[i - 2]) / (4.0 * hx * hx);
                coarse = coarse.max((dt_rho + dx_flux + dxx_p).abs());
            }
        }
    }
    Ok(ResidualReport::new(fine, coarse, ht))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{evolve, steady_state};
    use crate::generators::{build_global, build_local, resolve_global, resolve_local};
    use crate::ode::Tolerance;
    use nalgebra::Vector3;

    fn fig2() -> ChainParams {
        ChainParams::default()
    }

    fn quad() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn correlated_state() -> CovarianceState {
        let b = CMat3::new(
            c(0.5, 0.1),
            c(0.2, -0.3),
            c(0.0, 0.1),
            c(0.1, 0.2),
            c(0.6, 0.0),
            c(-0.2, 0.1),
            c(0.1, 0.0),
            c(0.1, 0.2),
            c(0.4, -0.1),
        );
        let c1 = (b * b.adjoint()).scale(2.0) + CMat3::identity();
        let c2 = CMat3::new(
            c(0.1, 0.05),
            c(0.02, 0.0),
            c(0.0, 0.0),
            c(0.02, 0.0),
            c(-0.05, 0.02),
            c(0.0, 0.03),
            c(0.0, 0.0),
            c(0.0, 0.03),
            c(0.04, 0.0),
        );
        let s = CovarianceState::from_blocks(&c1, &c2, Vector3::new(c(0.2, 0.1), c(-0.1, 0.3), c(0.0, -0.2)), 0.0);
        s.validate().unwrap();
        s
    }

    #[test]
    fn current_sign_and_symmetries() {
        let s = correlated_state();
        for (j, k) in [(0, 1), (1, 2), (0, 2)] {
            assert_eq!(excitation_current(&s, j, k), -excitation_current(&s, k, j));
            assert!((bond_coherence(&s, j, k) - bond_coherence(&s, k, j)).abs() < 1e-15);
        }
        // Diagonal (thermal) covariance carries no current.
        let th = CovarianceState::from_blocks(
            &CMat3::from_diagonal(&Vector3::new(c(3.0, 0.0), c(2.0, 0.0), c(1.5, 0.0))),
            &CMat3::zeros(),
            Vector3::zeros(),
            0.0,
        );
        assert_eq!(excitation_current(&th, 0, 1), 0.0);
        assert!((occupation(&th, 0) - 1.0).abs() < 1e-15);
        assert_eq!(occupation(&CovarianceState::vacuum(0.0), 2), 0.0);
    }

    #[test]
    fn hopping_drives_middle_site_by_current_difference() {
        // The closed chain's d⟨n₂⟩/dt equals −g⟨J₁₂ − J₂₃⟩ for any state.
        let p = ChainParams { lambda: 0.0, ..fig2() };
        let local = build_local(&p, &quad()).unwrap();
        let s = correlated_state();
        let want = n2_rate(&s, &local).unwrap();
        assert!((energy_rhs_exact_or_local(&s, &p) - want).abs() < 1e-14);
        let gen = resolve_local(&p, &quad()).unwrap();
        let b = energy_balance(&s, &gen);
        assert!((b.a_coeff + p.g).abs() < 1e-15);
        assert_eq!((b.q_left, b.q_right), (0.0, 0.0));
    }

    #[test]
    fn local_balance_has_no_sink_source() {
        let gen = resolve_local(&fig2(), &quad()).unwrap();
        let s = correlated_state();
        let b = energy_balance(&s, &gen);
        assert_eq!(b.q_left, 0.0);
        assert_eq!(b.q_right, 0.0);
        assert!((b.rhs - energy_rhs_exact_or_local(&s, &fig2())).abs() < 1e-15);
        assert!((b.rhs - n2_rate(&s, &gen.combine()).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn global_closed_form_matches_generic_balance() {
        for g in [0.3, 0.5, 0.9] {
            let p = ChainParams { g, ..fig2() };
            let s = correlated_state();
            let closed = energy_rhs_global(&s, &p, &quad()).unwrap();
            let generic = energy_balance(&s, &resolve_global(&p, &quad()).unwrap());
            let direct = n2_rate(&s, &build_global(&p, &quad()).unwrap()).unwrap();
            assert!((closed.rhs - direct).abs() < 1e-12, "g = {g}");
            assert!((generic.rhs - direct).abs() < 1e-12, "g = {g}");
            assert!((closed.a_coeff - generic.a_coeff).abs() < 1e-12);
            assert!((closed.q_left - generic.q_left).abs() < 1e-12);
            assert!((closed.q_right - generic.q_right).abs() < 1e-12);
        }
    }

    #[test]
    fn global_steady_sink_source_closed_form() {
        let p = fig2();
        let dd = build_drift_diffusion(&build_global(&p, &quad()).unwrap().to_site_basis()).unwrap();
        let ss = steady_state(&dd).unwrap();
        let b = energy_rhs_global(&ss, &p, &quad()).unwrap();
        assert!(b.rhs.abs() < 1e-12);
        assert!((b.q_left + b.q_right).abs() < 1e-12);
        assert!(excitation_current(&ss, 0, 1).abs() < 1e-12);
    }

    #[test]
    fn quadrature_covariance_of_simple_states() {
        let (v, mean) = quadrature_covariance(&CovarianceState::vacuum(0.0), 2.0);
        for i in 0..3 {
            assert!((v[(i, i)] - 0.25).abs() < 1e-15);
            assert!((v[(3 + i, 3 + i)] - 1.0).abs() < 1e-15);
        }
        assert_eq!(mean, Vector6::zeros());
        let nbar = 0.7;
        let th = CovarianceState::from_blocks(
            &CMat3::identity().scale(2.0 * nbar + 1.0),
            &CMat3::zeros(),
            Vector3::zeros(),
            0.0,
        );
        let (v, _) = quadrature_covariance(&th, 1.0);
        assert!((v[(0, 0)] - (2.0 * nbar + 1.0) / 2.0).abs() < 1e-15);
        let (v, _) = quadrature_covariance(&correlated_state(), 1.3);
        assert!((v - v.transpose()).abs().max() < 1e-15);
        assert!(v.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn density_is_normalized() {
        let s = correlated_state();
        let grid = default_grid(&[s], 1.0, 1024, 8.0).unwrap();
        let f = probability_density(&s, &grid, 1.0);
        let h = grid[1] - grid[0];
        let integral: f64 = f.density.iter().sum::<f64>() * h - 0.5 * h * (f.density[0] + f.density[1023]);
        assert!((integral - 1.0).abs() < 1e-6);
        assert!(f.warning.is_none());
        let narrow = probability_density(&s, &[-0.1, 0.0, 0.1], 1.0);
        assert!(narrow.warning.is_some());
    }

    #[test]
    fn closed_chain_has_only_unitary_current() {
        let p = ChainParams { lambda: 0.0, ..fig2() };
        let coeffs = build_local(&p, &quad()).unwrap();
        let s = correlated_state();
        let grid = default_grid(&[s], 1.0, 101, 8.0).unwrap();
        let f = probability_currents(&s, &coeffs, &grid, &p).unwrap();
        for i in 0..grid.len() {
            assert!(f.j_dissipative[i].abs() < 1e-15);
            assert_eq!(f.q_term[i], 0.0);
            assert_eq!(f.p_term[i], 0.0);
        }
        assert!(f.j_unitary.iter().any(|j| j.abs() > 1e-3));
        let normal = coeffs.to_normal_basis();
        assert!(probability_currents(&s, &normal, &grid, &p).is_err());
    }

    #[test]
    fn symmetric_stationary_current_is_odd() {
        // Equal baths, local generator: reflection-symmetric, zero-mean
        // stationary state, so the total current field is odd in x.
        let p = ChainParams {
            temp_right: 10.0,
            ..fig2()
        };
        let coeffs = build_local(&p, &quad()).unwrap();
        let ss = steady_state(&build_drift_diffusion(&coeffs).unwrap()).unwrap();
        let grid: Vec<f64> = (0..201).map(|i| -10.0 + 0.1 * i as f64).collect();
        let f = probability_currents(&ss, &coeffs, &grid, &p).unwrap();
        for i in 0..201 {
            let tot = |k: usize| f.j_unitary[k] + f.j_dissipative[k] + f.q_term[k];
            assert!((tot(i) + tot(200 - i)).abs() < 1e-14);
        }
    }

    #[test]
    fn continuity_residuals_for_local_dynamics() {
        let p = fig2();
        let coeffs = build_local(&p, &quad()).unwrap();
        let dd = build_drift_diffusion(&coeffs).unwrap();
        let samples: Vec<f64> = (0..=40).map(|i| 1.0 + 2e-3 * i as f64).collect();
        let tol = Tolerance {
            rtol: 1e-12,
            atol: 1e-14,
        };
        let traj = evolve(&correlated_state(), &dd, &samples, &tol).unwrap();
        let energy = energy_continuity_residual(&traj, |s| Ok(energy_rhs_exact_or_local(s, &p)), None).unwrap();
        assert!(energy.max_residual < 1e-6, "{energy:?}");
        assert!((energy.observed_order - 2.0).abs() < 0.3, "{energy:?}");
        let grid = default_grid(&traj, p.omega0, 257, 8.0).unwrap();
        let spatial = probability_continuity_residual(&traj, &coeffs, &grid, &p).unwrap();
        assert!(spatial.max_residual < 1e-3, "{spatial:?}");
        assert!((spatial.observed_order - 2.0).abs() < 0.3, "{spatial:?}");
    }

    #[test]
    fn sparse_or_irregular_sampling_rejected() {
        let s = CovarianceState::vacuum(0.0);
        let few = [s, CovarianceState { t: 1.0, ..s }];
        assert!(matches!(
            energy_continuity_residual(&few, |_| Ok(0.0), None),
            Err(Error::Sampling(_))
        ));
        let irregular: Vec<_> = [0.0, 1.0, 2.5, 3.0, 4.0]
            .iter()
            .map(|&t| CovarianceState { t, ..s })
            .collect();
        assert!(energy_continuity_residual(&irregular, |_| Ok(0.0), None).is_err());
        let uniform: Vec<_> = (0..6).map(|i| CovarianceState { t: i as f64, ..s }).collect();
        assert!(energy_continuity_residual(&uniform, |_| Ok(0.0), Some(1.0)).is_err());
    }
}
