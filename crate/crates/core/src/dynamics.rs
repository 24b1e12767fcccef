// SPDX-License-Identifier: Apache-2.0

//! Gaussian covariance dynamics: drift/diffusion assembly, time evolution,
//! stationary states and an exact reference built from a discretized bath.
//!
//! The state is the symmetrized covariance of `ξ = (a₁, a₂, a₃, a₁†, a₂†, a₃†)`,
//!
//! ```text
//! C_ij = ⟨ξ_i ξ_j† + ξ_j† ξ_i⟩ − 2⟨ξ_i⟩⟨ξ_j†⟩ = [[C₁, C₂], [C̄₂, C̄₁]],
//! ```
//!
//! which obeys `Ċ = MC + CM† + N` with `M = M̂ ⊕ M̂*`, `N = N̂ ⊕ N̂*` for every
//! generator in canonical form, while the first moments obey `ḋ = M̂ d`.

use nalgebra::{Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::generators::{from_rows, to_rows, Basis, GeneratorCoefficients};
use crate::linalg::{
    complexify, direct_sum, eigen_decomposition3, eigenvalues, hermiticity_defect, lyapunov3, max_abs,
    min_hermitian_eigenvalue, spectral_abscissa, CMat3, CMat6,
};
use crate::model::{bogolubov, mean_photon, site_hamiltonian, spectral_density, ChainParams};
use crate::ode::{self, Tolerance};
use crate::{Error, Result, C64};

/// Hermiticity tolerance of a valid state.
pub const STATE_HERMITICITY_TOL: f64 = 1e-10;
/// Eigenvalue tolerance for positivity of a valid state.
pub const STATE_PSD_TOL: f64 = 1e-8;

/// Second moments and first moments of a Gaussian three-mode state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceState {
    /// 6×6 Hermitian covariance in the `(a, a†)` ordering.
    pub c: CMat6,
    /// First moments `⟨a_i⟩`; the `a†` half of the 6-vector is their
    /// conjugate and is not stored.
    pub d: Vector3<C64>,
    pub t: f64,
}

impl CovarianceState {
    /// Chain vacuum: `C = I₆`, `d = 0`.
    pub fn vacuum(t: f64) -> Self {
        Self {
            c: CMat6::identity(),
            d: Vector3::zeros(),
            t,
        }
    }

    /// Assemble from the blocks `C₁ = 2X + I − 2dd†` and `C₂ = 2⟨aa⟩ − 2ddᵀ`.
    pub fn from_blocks(c1: &CMat3, c2: &CMat3, d: Vector3<C64>, t: f64) -> Self {
        let mut c = CMat6::zeros();
        c.fixed_view_mut::<3, 3>(0, 0).copy_from(c1);
        c.fixed_view_mut::<3, 3>(0, 3).copy_from(c2);
        c.fixed_view_mut::<3, 3>(3, 0).copy_from(&c2.conjugate());
        c.fixed_view_mut::<3, 3>(3, 3).copy_from(&c1.conjugate());
        Self { c, d, t }
    }

    /// Upper-left block `C₁`.
    pub fn c1(&self) -> CMat3 {
        self.c.fixed_view::<3, 3>(0, 0).into_owned()
    }

    /// Upper-right block `C₂`.
    pub fn c2(&self) -> CMat3 {
        self.c.fixed_view::<3, 3>(0, 3).into_owned()
    }

    /// Full first-moment 6-vector `(⟨a⟩, ⟨a†⟩)`.
    pub fn displacement6(&self) -> SMatrix<C64, 6, 1> {
        SMatrix::<C64, 6, 1>::from_fn(|i, _| if i < 3 { self.d[i] } else { self.d[i - 3].conj() })
    }

    /// Raw moments `X_ij = ⟨a_j† a_i⟩ = (C₁ − I)_ij/2 + d_i d̄_j`.
    pub fn number_moments(&self) -> CMat3 {
        (self.c1() - CMat3::identity()).scale(0.5) + self.d * self.d.adjoint()
    }

    /// The same state expressed in the site basis, assuming it is currently
    /// in the normal-mode basis (`a = Tᵀ c`).
    pub fn normal_to_site(&self) -> Self {
        self.rotate(&bogolubov().transpose())
    }

    /// Inverse of [`Self::normal_to_site`].
    pub fn site_to_normal(&self) -> Self {
        self.rotate(&bogolubov())
    }

    /// Apply a real orthogonal mode transformation `a' = R a`.
    fn rotate(&self, r: &Matrix3<f64>) -> Self {
        let r = complexify(r);
        Self::from_blocks(
            &(r * self.c1() * r.transpose()),
            &(r * self.c2() * r.transpose()),
            r * self.d,
            self.t,
        )
    }

    /// Check Hermiticity, positivity and the vacuum bound on the number
    /// block's diagonal.
    pub fn validate(&self) -> Result<()> {
        if self.c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Malformed("covariance has non-finite entries".into()));
        }
        let herm = hermiticity_defect(&self.c);
        if herm > STATE_HERMITICITY_TOL {
            return Err(Error::Malformed(format!("covariance Hermiticity defect {herm:e}")));
        }
        let min = min_hermitian_eigenvalue(&self.c);
        if min < -STATE_PSD_TOL {
            return Err(Error::Malformed(format!("covariance eigenvalue {min:e} < 0")));
        }
        for i in 0..3 {
            if self.c[(i, i)].re < 1.0 - STATE_PSD_TOL {
                return Err(Error::Malformed(format!("C[{i}][{i}] = {} < 1", self.c[(i, i)].re)));
            }
        }
        Ok(())
    }

    /// Serialize as JSON: time, the blocks `C₁` and `C₂` as rows of
    /// `[re, im]` pairs, and the first moments.
    pub fn to_json_string(&self) -> String {
        let dump = StateDump {
            t: self.t,
            c1: to_rows(&self.c1()),
            c2: to_rows(&self.c2()),
            d: std::array::from_fn(|i| [self.d[i].re, self.d[i].im]),
        };
        serde_json::to_string_pretty(&dump).expect("state dump is always serializable")
    }

    /// Parse a JSON state. `C₁` must be Hermitian and `C₂` symmetric to
    /// `1e−9` relative to their largest entries, and the assembled state must
    /// pass [`validate`](Self::validate).
    pub fn from_json_str(s: &str) -> Result<Self> {
        let dump: StateDump = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        if !dump.t.is_finite() || dump.d.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Parse("time and first moments must be finite".into()));
        }
        let c1 = from_rows(&dump.c1)?;
        let c2 = from_rows(&dump.c2)?;
        let scale = |m: &CMat3| m.iter().fold(1.0f64, |acc, z| acc.max(z.norm()));
        if hermiticity_defect(&c1) > 1e-9 * scale(&c1) {
            return Err(Error::Malformed("c1 is not Hermitian".into()));
        }
        if max_abs(&(c2 - c2.transpose())) > 1e-9 * scale(&c2) {
            return Err(Error::Malformed("c2 is not symmetric".into()));
        }
        let d = Vector3::from_fn(|i, _| C64::new(dump.d[i][0], dump.d[i][1]));
        let state = Self::from_blocks(&c1, &c2, d, dump.t);
        state.validate()?;
        Ok(state)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateDump {
    t: f64,
    c1: [[[f64; 2]; 3]; 3],
    c2: [[[f64; 2]; 3]; 3],
    d: [[f64; 2]; 3],
}

/// Drift and diffusion of the covariance equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftDiffusion {
    /// Basis of the coefficients the matrices were built from.
    pub basis: Basis,
    pub m: CMat6,
    pub n: CMat6,
    /// Reduced drift `M̂ = −ih − ½(Γ̄⁺ − Γ⁻)`.
    pub m_hat: CMat3,
    /// Reduced diffusion `N̂ = Γ⁻ + Γ̄⁺`.
    pub n_hat: CMat3,
}

/// Assemble `M = M̂ ⊕ M̂*` and `N = N̂ ⊕ N̂*` from canonical coefficients.
///
/// Rejects coefficient sets whose Hamiltonian or rate matrices are not
/// Hermitian (relative defect above `1e−10`).
pub fn build_drift_diffusion(coeffs: &GeneratorCoefficients) -> Result<DriftDiffusion> {
    for (name, m) in [
        ("h_eff", &coeffs.h_eff),
        ("gamma_plus", &coeffs.gamma_plus),
        ("gamma_minus", &coeffs.gamma_minus),
    ] {
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Malformed(format!("{name} has non-finite entries")));
        }
        let scale = m.iter().fold(1.0f64, |acc, z| acc.max(z.norm()));
        if hermiticity_defect(m) > 1e-10 * scale {
            return Err(Error::Malformed(format!("{name} is not Hermitian")));
        }
    }
    let gp_bar = coeffs.gamma_plus.conjugate();
    let m_hat = coeffs.h_eff * C64::new(0.0, -1.0) - (gp_bar - coeffs.gamma_minus).scale(0.5);
    let n_hat = coeffs.gamma_minus + gp_bar;
    Ok(DriftDiffusion {
        basis: coeffs.basis,
        m: direct_sum(&m_hat, &m_hat.conjugate()),
        n: direct_sum(&n_hat, &n_hat.conjugate()),
        m_hat,
        n_hat,
    })
}

impl DriftDiffusion {
    /// Largest real part of the drift spectrum.
    pub fn spectral_abscissa(&self) -> f64 {
        spectral_abscissa(&self.m_hat)
    }

    /// Right-hand side `(Ċ₁, Ċ₂, ḋ)` of the moment equations.
    pub fn rhs(&self, c1: &CMat3, c2: &CMat3, d: &Vector3<C64>) -> (CMat3, CMat3, Vector3<C64>) {
        let m = &self.m_hat;
        (
            m * c1 + c1 * m.adjoint() + self.n_hat,
            m * c2 + c2 * m.transpose(),
            m * d,
        )
    }

    /// Time derivative of a full state.
    pub fn derivative(&self, s: &CovarianceState) -> CovarianceState {
        let (c1, c2, d) = self.rhs(&s.c1(), &s.c2(), &s.d);
        CovarianceState::from_blocks(&c1, &c2, d, s.t)
    }
}

const PACKED_LEN: usize = 42;

fn pack(c1: &CMat3, c2: &CMat3, d: &Vector3<C64>, out: &mut [f64]) {
    for (k, z) in c1.iter().chain(c2.iter()).chain(d.iter()).enumerate() {
        out[2 * k] = z.re;
        out[2 * k + 1] = z.im;
    }
}

fn unpack(y: &[f64]) -> (CMat3, CMat3, Vector3<C64>) {
    let z = |k: usize| C64::new(y[2 * k], y[2 * k + 1]);
    (
        CMat3::from_iterator((0..9).map(z)),
        CMat3::from_iterator((9..18).map(z)),
        Vector3::from_iterator((18..21).map(z)),
    )
}

/// Integrate the moment equations from `state0` and return the state at
/// each requested sample time (sorted, `≥ state0.t`).
///
/// The accepted step sequence does not depend on the sample grid; samples
/// are produced by dense output. The returned covariances are exactly
/// Hermitian (the stored blocks are symmetrized on output).
pub fn evolve(
    state0: &CovarianceState,
    dd: &DriftDiffusion,
    samples: &[f64],
    tol: &Tolerance,
) -> Result<Vec<CovarianceState>> {
    let mut y0 = vec![0.0; PACKED_LEN];
    pack(&state0.c1(), &state0.c2(), &state0.d, &mut y0);
    let f = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let (c1, c2, d) = unpack(y);
        let (a, b, e) = dd.rhs(&c1, &c2, &d);
        pack(&a, &b, &e, dy);
    };
    let (ys, _) = ode::integrate(f, state0.t, &y0, samples, tol)?;
    Ok(ys
        .iter()
        .zip(samples)
        .map(|(y, &t)| {
            let (c1, c2, d) = unpack(y);
            let c1 = (c1 + c1.adjoint()).scale(0.5);
            let c2 = (c2 + c2.transpose()).scale(0.5);
            CovarianceState::from_blocks(&c1, &c2, d, t)
        })
        .collect())
}

/// Closed-form propagation over `dt` by matrix exponentials.
///
/// With `F = e^{M̂t}`: for a stable drift `C₁(t) = C₁∞ + F(C₁ − C₁∞)F†`;
/// otherwise `C₁(t) = F C₁ F† + ∫₀^t e^{M̂s} N̂ e^{M̂†s} ds`, the integral taken
/// from the exponential of the block matrix `[[−M̂, N̂], [0, M̂†]]`. That
/// block exponential grows like `e^{|Re λ|t}`, so the second form is applied
/// in chunks with `|Re λ|·h ≤ 2` to avoid cancellation.
pub fn propagate(state: &CovarianceState, dd: &DriftDiffusion, dt: f64) -> CovarianceState {
    let f = (dd.m_hat * C64::from(dt)).exp();
    let stationary = if dd.spectral_abscissa() < 0.0 {
        lyapunov3(&dd.m_hat, &dd.n_hat).ok()
    } else {
        None
    };
    let c1 = match stationary {
        Some(c_inf) => c_inf + f * (state.c1() - c_inf) * f.adjoint(),
        None => {
            let rate = eigenvalues(&dd.m_hat).iter().fold(0.0f64, |acc, z| acc.max(z.re.abs()));
            let chunks = ((rate * dt.abs() / 2.0).ceil() as usize).max(1);
            let h = dt / chunks as f64;
            let mut block = CMat6::zeros();
            block.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-dd.m_hat));
            block.fixed_view_mut::<3, 3>(0, 3).copy_from(&dd.n_hat);
            block.fixed_view_mut::<3, 3>(3, 3).copy_from(&dd.m_hat.adjoint());
            let e = (block * C64::from(h)).exp();
            let g12 = e.fixed_view::<3, 3>(0, 3).into_owned();
            let f22 = e.fixed_view::<3, 3>(3, 3).into_owned();
            let fh = f22.adjoint();
            let q = fh * g12;
            let mut c1 = state.c1();
            for _ in 0..chunks {
                c1 = fh * c1 * fh.adjoint() + q;
            }
            c1
        }
    };
    let c1 = (c1 + c1.adjoint()).scale(0.5);
    let c2 = f * state.c2() * f.transpose();
    CovarianceState::from_blocks(&c1, &c2, f * state.d, state.t + dt)
}

/// Unique stationary state: `M̂C₁ + C₁M̂† = −N̂`, `C₂ = 0`, `d = 0`.
///
/// Requires a strictly stable drift; otherwise the stationary state is not
/// unique and [`Error::Singular`] is returned.
pub fn steady_state(dd: &DriftDiffusion) -> Result<CovarianceState> {
    let abscissa = dd.spectral_abscissa();
    if !(abscissa < 0.0) {
        return Err(Error::Singular(format!(
            "drift is not dissipative (max Re eig = {abscissa:e}); no unique steady state"
        )));
    }
    let c1 = lyapunov3(&dd.m_hat, &dd.n_hat)?;
    let c1 = (c1 + c1.adjoint()).scale(0.5);
    Ok(CovarianceState::from_blocks(
        &c1,
        &CMat3::zeros(),
        Vector3::zeros(),
        f64::INFINITY,
    ))
}

/// Relative size below which a real part of the drift spectrum counts as
/// zero in [`stationary_limit`].
pub const MARGINAL_RATE_TOL: f64 = 1e-12;

/// Long-time limit of the evolution from `initial`.
///
/// For a strictly stable drift this is [`steady_state`]. When some modes are
/// undamped (spectral abscissa zero to [`MARGINAL_RATE_TOL`] relative to
/// `max|M̂|`), the damped parts relax as usual while the undamped modes keep
/// their initial second moments; in the eigenbasis `M̂ = V Λ V⁻¹` each entry
/// of `C₁′ = V⁻¹C₁V⁻†` obeys `Ċ′ᵢⱼ = (λᵢ + λ̄ⱼ)C′ᵢⱼ + N′ᵢⱼ`. An
/// [`Error::Singular`] is returned if the drift has growing modes or if the
/// initial state keeps oscillating (no limit exists).
pub fn stationary_limit(dd: &DriftDiffusion, initial: &CovarianceState) -> Result<CovarianceState> {
    let scale = max_abs(&dd.m_hat).max(f64::MIN_POSITIVE);
    let tol = MARGINAL_RATE_TOL * scale;
    let abscissa = dd.spectral_abscissa();
    if abscissa < -tol {
        return steady_state(dd);
    }
    if abscissa > tol {
        return Err(Error::Singular(format!(
            "drift has growing modes (max Re eig = {abscissa:e}); no stationary limit"
        )));
    }
    let (lam, v, vinv) = eigen_decomposition3(&dd.m_hat)?;
    let marginal: [bool; 3] = std::array::from_fn(|i| lam[i].re.abs() <= tol);
    let n = vinv * dd.n_hat * vinv.adjoint();
    let c0 = vinv * initial.c1() * vinv.adjoint();
    let p0 = vinv * initial.c2() * vinv.transpose();
    let d0 = vinv * initial.d;
    let moment_scale = 1.0 + max_abs(&c0) + max_abs(&p0) + max_abs(&n) / scale;
    let small = |z: C64| z.norm() <= 1e-9 * moment_scale;
    let oscillating = || Error::Singular("initial state keeps oscillating in an undamped mode".into());
    let mut c = CMat3::zeros();
    let mut p = CMat3::zeros();
    let mut d = Vector3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let s = lam[i] + lam[j].conj();
            c[(i, j)] = if !(marginal[i] && marginal[j]) {
                -n[(i, j)] / s
            } else if s.norm() > tol {
                // C′(t) = e^{st}(C′(0) + N′/s) − N′/s.
                if !small(c0[(i, j)] + n[(i, j)] / s) {
                    return Err(oscillating());
                }
                -n[(i, j)] / s
            } else {
                if !small(n[(i, j)] / scale) {
                    return Err(Error::Singular(
                        "diffusion drives an undamped mode without bound".into(),
                    ));
                }
                c0[(i, j)]
            };
            if marginal[i] && marginal[j] {
                let s2 = lam[i] + lam[j];
                if s2.norm() > tol {
                    if !small(p0[(i, j)]) {
                        return Err(oscillating());
                    }
                } else {
                    p[(i, j)] = p0[(i, j)];
                }
            }
        }
        if marginal[i] {
            if lam[i].norm() > tol {
                if !small(d0[i]) {
                    return Err(oscillating());
                }
            } else {
                d[i] = d0[i];
            }
        }
    }
    let c1 = v * c * v.adjoint();
    let c2 = v * p * v.transpose();
    let c1 = (c1 + c1.adjoint()).scale(0.5);
    let c2 = (c2 + c2.transpose()).scale(0.5);
    Ok(CovarianceState::from_blocks(&c1, &c2, v * d, f64::INFINITY))
}

/// Uniform midpoint discretization of one Ohmic bath.
#[derive(Debug, Clone, PartialEq)]
pub struct BathDiscretization {
    pub modes_per_bath: usize,
    /// `ω_k = (k − ½)Δω`, `k = 1..K`.
    pub frequencies: Vec<f64>,
    /// `γ_k = √(J(ω_k)Δω)`.
    pub couplings: Vec<f64>,
    pub omega_max: f64,
}

impl BathDiscretization {
    /// `K` modes on `(0, ω_max]`.
    pub fn new(modes_per_bath: usize, omega_max: f64, omega_c: f64) -> Result<Self> {
        if modes_per_bath == 0 {
            return Err(Error::InvalidParameter("modes_per_bath must be >= 1".into()));
        }
        if !(omega_max > 0.0 && omega_max.is_finite()) {
            return Err(Error::InvalidParameter("omega_max must be > 0".into()));
        }
        let dw = omega_max / modes_per_bath as f64;
        let frequencies: Vec<f64> = (0..modes_per_bath).map(|k| (k as f64 + 0.5) * dw).collect();
        let couplings = frequencies
            .iter()
            .map(|&w| (spectral_density(w, omega_c) * dw).sqrt())
            .collect();
        Ok(Self {
            modes_per_bath,
            frequencies,
            couplings,
            omega_max,
        })
    }

    /// Frequency spacing `Δω`.
    pub fn spacing(&self) -> f64 {
        self.omega_max / self.modes_per_bath as f64
    }

    /// Time `2π/Δω` after which the discrete bath returns energy.
    pub fn recurrence_time(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.spacing()
    }
}

/// System-block trajectory of the discretized-bath model.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactTrajectory {
    /// States in the site basis at the requested sample times.
    pub states: Vec<CovarianceState>,
    pub recurrence_time: f64,
    /// Set when the horizon reaches the recurrence time.
    pub warning: Option<String>,
}

/// Star-shaped single-particle Hamiltonian: chain, two sets of bath modes,
/// site 1 coupled to the left modes and site 3 to the right modes with
/// strength `λγ_k`.
struct StarHamiltonian {
    chain: Matrix3<f64>,
    omega: Vec<f64>,
    coupling: Vec<f64>,
    k: usize,
}

impl StarHamiltonian {
    fn dim(&self) -> usize {
        3 + 2 * self.k
    }

    /// `out = −i H v` for one complex column stored as interleaved re/im.
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let k = self.k;
        let re = |i: usize| v[2 * i];
        let im = |i: usize| v[2 * i + 1];
        let mut hv = vec![(0.0, 0.0); self.dim()];
        for (i, h) in hv.iter_mut().take(3).enumerate() {
            for j in 0..3 {
                h.0 += self.chain[(i, j)] * re(j);
                h.1 += self.chain[(i, j)] * im(j);
            }
        }
        for m in 0..2 * k {
            let site = if m < k { 0 } else { 2 };
            let b = 3 + m;
            let (w, c) = (self.omega[m], self.coupling[m]);
            hv[b] = (w * re(b) + c * re(site), w * im(b) + c * im(site));
            hv[site].0 += c * re(b);
            hv[site].1 += c * im(b);
        }
        for (i, (hr, hi)) in hv.into_iter().enumerate() {
            // −i(hr + i hi) = hi − i hr
            out[2 * i] = hi;
            out[2 * i + 1] = -hr;
        }
    }
}

/// Exact evolution of the chain coupled to two discretized baths, starting
/// from `state0` (site basis) times thermal bath states.
///
/// The linear Heisenberg flow `a(t) = U(t) a(0)`, `U = e^{−iHt}`, is
/// integrated for the three system columns of `U` (which equal the system
/// rows, `H` being real symmetric); the system moments follow as
/// `X = U_ss X₀ U_ss† + Σ_m U_sm n̄_m Ū_sm`, `⟨aa⟩ = U_ss ⟨aa⟩₀ U_ssᵀ`.
pub fn exact_reference(
    params: &ChainParams,
    disc: &BathDiscretization,
    state0: &CovarianceState,
    samples: &[f64],
    tol: &Tolerance,
) -> Result<ExactTrajectory> {
    params.validate()?;
    let k = disc.modes_per_bath;
    let mut omega = disc.frequencies.clone();
    omega.extend_from_slice(&disc.frequencies);
    let coupling: Vec<f64> = disc
        .couplings
        .iter()
        .chain(disc.couplings.iter())
        .map(|g| params.lambda * g)
        .collect();
    let mut occupation = Vec::with_capacity(2 * k);
    for temp in [params.temp_left, params.temp_right] {
        for &w in &disc.frequencies {
            occupation.push(mean_photon(w, temp)?);
        }
    }
    let star = StarHamiltonian {
        chain: site_hamiltonian(params),
        omega,
        coupling,
        k,
    };
    let n = star.dim();
    // Three interleaved complex columns of length n.
    let mut y0 = vec![0.0; 6 * n];
    for s in 0..3 {
        y0[2 * (s * n + s)] = 1.0;
    }
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        for s in 0..3 {
            let r = 2 * s * n..2 * (s + 1) * n;
            star.apply(&y[r.clone()], &mut dy[r]);
        }
    };
    let t0 = state0.t;
    let rel: Vec<f64> = samples.iter().map(|&t| t - t0).collect();
    let (ys, _) = ode::integrate(rhs, 0.0, &y0, &rel, tol)?;

    let x0 = state0.number_moments();
    let y0_pairs = (state0.c2() + (state0.d * state0.d.transpose()).scale(2.0)).scale(0.5);
    let mut states = Vec::with_capacity(samples.len());
    for (y, &t) in ys.iter().zip(samples) {
        // u(i, m) = U_{i m} for system row i: column i of U (U symmetric).
        let u = |i: usize, m: usize| C64::new(y[2 * (i * n + m)], y[2 * (i * n + m) + 1]);
        let uss = CMat3::from_fn(u);
        let mut x = uss * x0 * uss.adjoint();
        for (m, &nb) in occupation.iter().enumerate() {
            if nb == 0.0 {
                continue;
            }
            for i in 0..3 {
                for j in 0..3 {
                    x[(i, j)] += u(i, 3 + m) * u(j, 3 + m).conj() * nb;
                }
            }
        }
        let pairs = uss * y0_pairs * uss.transpose();
        let d = uss * state0.d;
        let c1 = (x - d * d.adjoint()).scale(2.0) + CMat3::identity();
        let c1 = (c1 + c1.adjoint()).scale(0.5);
        let c2 = (pairs - d * d.transpose()).scale(2.0);
        let c2 = (c2 + c2.transpose()).scale(0.5);
        states.push(CovarianceState::from_blocks(&c1, &c2, d, t));
    }
    let recurrence_time = disc.recurrence_time();
    let horizon = samples.last().map_or(0.0, |&t| t - t0);
    let warning = (horizon >= recurrence_time).then(|| {
        format!("horizon {horizon} reaches the bath recurrence time {recurrence_time:.4}; increase modes_per_bath")
    });
    Ok(ExactTrajectory {
        states,
        recurrence_time,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{build_global, build_local, build_tcg};
    use crate::linalg::max_abs;
    use crate::model::normal_modes;
    use crate::quadrature::QuadratureSpec;
    use proptest::prelude::*;

    fn fig2() -> ChainParams {
        ChainParams::default()
    }

    fn tight() -> Tolerance {
        Tolerance {
            rtol: 1e-11,
            atol: 1e-13,
        }
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// A valid non-trivial Gaussian state: squeezed, displaced, correlated.
    #[rustfmt::skip]
    fn sample_state() -> CovarianceState {
        let b = CMat3::new(
            c(0.3, 0.1), c(0.1, -0.2), c(0.0, 0.05),
            c(0.2, 0.0), c(0.4, 0.1), c(-0.1, 0.0),
            c(0.05, 0.0), c(0.0, 0.1), c(0.2, -0.1),
        );
        let x = b * b.adjoint();
        let pairs = CMat3::new(
            c(0.05, 0.02), c(0.01, 0.0), c(0.0, 0.0),
            c(0.01, 0.0), c(-0.03, 0.01), c(0.0, 0.01),
            c(0.0, 0.0), c(0.0, 0.01), c(0.02, 0.0),
        );
        let c1 = x.scale(2.0) + CMat3::identity();
        let c2 = pairs.scale(2.0);
        let s = CovarianceState::from_blocks(&c1, &c2, Vector3::new(c(0.3, -0.1), c(0.0, 0.2), c(-0.1, 0.0)), 0.0);
        s.validate().unwrap();
        s
    }

    #[test]
    fn block_structure_and_moments() {
        let s = sample_state();
        assert!(hermiticity_defect(&s.c) < 1e-15);
        let x = s.number_moments();
        assert!(hermiticity_defect(&x) < 1e-15);
        let d6 = s.displacement6();
        assert_eq!(d6[4], s.d[1].conj());
        let back = s.normal_to_site().site_to_normal();
        assert!(max_abs(&(back.c - s.c)) < 1e-14);
    }

    #[test]
    fn closed_chain_is_unitary() {
        let p = ChainParams { lambda: 0.0, ..fig2() };
        let dd = build_drift_diffusion(&build_local(&p, &QuadratureSpec::default()).unwrap()).unwrap();
        assert_eq!(max_abs(&dd.n), 0.0);
        let s0 = sample_state();
        let traj = evolve(&s0, &dd, &[0.0, 3.7, 11.0], &tight()).unwrap();
        for s in &traj {
            // Total excitation number and the spectrum of C₁ are conserved.
            let n: f64 = (0..3).map(|i| s.number_moments()[(i, i)].re).sum();
            let n0: f64 = (0..3).map(|i| s0.number_moments()[(i, i)].re).sum();
            assert!((n - n0).abs() < 1e-9);
            let e = crate::linalg::hermitian_eigenvalues(&s.c1());
            let e0 = crate::linalg::hermitian_eigenvalues(&s0.c1());
            for (a, b) in e.iter().zip(e0) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn global_drift_is_diagonal() {
        let g = build_global(&fig2(), &QuadratureSpec::default()).unwrap();
        let dd = build_drift_diffusion(&g).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(dd.m_hat[(i, j)], c(0.0, 0.0));
                }
            }
            let want = c(0.0, -g.h_eff[(i, i)].re) - (g.gamma_plus[(i, i)] - g.gamma_minus[(i, i)]).scale(0.5);
            assert!((dd.m_hat[(i, i)] - want).norm() < 1e-15);
        }
    }

    #[test]
    fn drift_is_stable_for_all_generators() {
        let q = QuadratureSpec::default();
        for coeffs in [
            build_local(&fig2(), &q).unwrap(),
            build_global(&fig2(), &q).unwrap(),
            build_tcg(&fig2(), 10.0, &q).unwrap(),
        ] {
            let dd = build_drift_diffusion(&coeffs).unwrap();
            assert!(dd.spectral_abscissa() < 0.0);
            assert!(min_hermitian_eigenvalue(&dd.n) > -1e-12);
        }
    }

    #[test]
    fn malformed_coefficients_rejected() {
        let mut g = build_global(&fig2(), &QuadratureSpec::default()).unwrap();
        g.gamma_plus[(0, 1)] = c(0.1, 0.0);
        assert!(matches!(build_drift_diffusion(&g), Err(Error::Malformed(_))));
    }

    #[test]
    fn global_steady_state_closed_form() {
        let p = fig2();
        let dd = build_drift_diffusion(&build_global(&p, &QuadratureSpec::default()).unwrap()).unwrap();
        let s = steady_state(&dd).unwrap();
        let eps = normal_modes(&p).epsilon;
        for (i, &e) in eps.iter().enumerate() {
            let want = 1.0 + mean_photon(e, p.temp_left).unwrap() + mean_photon(e, p.temp_right).unwrap();
            assert!((s.c[(i, i)].re - want).abs() < 1e-10);
        }
        assert!(max_abs(&s.c2()) == 0.0);
    }

    #[test]
    fn vacuum_baths_give_vacuum_steady_state() {
        let p = ChainParams {
            temp_left: 0.0,
            temp_right: 0.0,
            ..fig2()
        };
        let dd = build_drift_diffusion(&build_global(&p, &QuadratureSpec::default()).unwrap()).unwrap();
        let s = steady_state(&dd).unwrap();
        assert!(max_abs(&(s.c1() - CMat3::identity())) < 1e-12);
    }

    #[test]
    fn singular_steady_state_reported() {
        let p = ChainParams { lambda: 0.0, ..fig2() };
        let dd = build_drift_diffusion(&build_local(&p, &QuadratureSpec::default()).unwrap()).unwrap();
        assert!(matches!(steady_state(&dd), Err(Error::Singular(_))));
    }

    #[test]
    fn local_steady_state_is_fixed_point_and_attractor() {
        let dd = build_drift_diffusion(&build_local(&fig2(), &QuadratureSpec::default()).unwrap()).unwrap();
        let ss = steady_state(&dd).unwrap();
        let d = dd.derivative(&ss);
        assert!(max_abs(&d.c) < 1e-12);
        let rate = -dd.spectral_abscissa();
        let t = 50.0 / rate;
        for s0 in [CovarianceState::vacuum(0.0), sample_state()] {
            let s = propagate(&s0, &dd, t);
            assert!((s.c - ss.c).norm() < 1e-8);
        }
    }

    #[test]
    fn evolve_matches_exact_propagator() {
        let dd = build_drift_diffusion(
            &build_tcg(&fig2(), 1.0, &QuadratureSpec::default())
                .unwrap()
                .to_site_basis(),
        )
        .unwrap();
        let s0 = sample_state();
        let traj = evolve(&s0, &dd, &[0.5, 2.0, 9.0], &tight()).unwrap();
        for s in traj {
            let exact = propagate(&s0, &dd, s.t);
            assert!(max_abs(&(s.c - exact.c)) < 1e-9, "t = {}", s.t);
            assert!((s.d - exact.d).norm() < 1e-9);
            s.validate().unwrap();
        }
    }

    #[test]
    fn evolution_is_linear_in_initial_covariance() {
        let dd = build_drift_diffusion(&build_local(&fig2(), &QuadratureSpec::default()).unwrap()).unwrap();
        let a = sample_state();
        let b = CovarianceState::from_blocks(&a.c1().scale(1.5), &CMat3::zeros(), a.d, 0.0);
        let mix = CovarianceState {
            c: a.c.scale(0.3) + b.c.scale(0.7),
            ..a
        };
        let t = [4.0];
        let ea = evolve(&a, &dd, &t, &tight()).unwrap()[0];
        let eb = evolve(&b, &dd, &t, &tight()).unwrap()[0];
        let em = evolve(&mix, &dd, &t, &tight()).unwrap()[0];
        assert!(max_abs(&(em.c - ea.c.scale(0.3) - eb.c.scale(0.7))) < 1e-9);
    }

    #[test]
    fn bath_discretization_covers_spectral_weight() {
        let disc = BathDiscretization::new(256, 36.0, 3.0).unwrap();
        let total: f64 = disc.couplings.iter().map(|g| g * g).sum();
        // ∫₀^{12ω_c} ω e^{−ω/ω_c} dω = ω_c²(1 − 13 e^{−12}).
        let exact = 9.0 * (1.0 - 13.0 * (-12.0f64).exp());
        assert!((total - exact).abs() < 1e-2 * exact);
        assert!(disc.frequencies.windows(2).all(|w| w[1] > w[0]));
        assert!((disc.recurrence_time() - 2.0 * std::f64::consts::PI * 256.0 / 36.0).abs() < 1e-12);
        assert!(BathDiscretization::new(0, 36.0, 3.0).is_err());
    }

    #[test]
    fn exact_reference_without_coupling_is_closed_chain() {
        let p = ChainParams { lambda: 0.0, ..fig2() };
        let disc = BathDiscretization::new(64, 36.0, 3.0).unwrap();
        let s0 = sample_state();
        let traj = exact_reference(&p, &disc, &s0, &[0.0, 1.5, 4.0], &tight()).unwrap();
        let dd = build_drift_diffusion(&build_local(&p, &QuadratureSpec::default()).unwrap()).unwrap();
        for s in &traj.states {
            let want = propagate(&s0, &dd, s.t);
            assert!(max_abs(&(s.c - want.c)) < 1e-9);
            assert!((s.d - want.d).norm() < 1e-9);
        }
        assert!(traj.warning.is_none());
    }

    #[test]
    fn state_json_round_trips_and_rejects_malformed_input() {
        let s = sample_state();
        let back = CovarianceState::from_json_str(&s.to_json_string()).unwrap();
        assert_eq!(back, s);
        let json = s.to_json_string();
        assert!(matches!(CovarianceState::from_json_str("{}"), Err(Error::Parse(_))));
        assert!(CovarianceState::from_json_str(&json.replacen("\"t\"", "\"time\"", 1)).is_err());
        // A first row that breaks Hermiticity of C₁.
        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v["c1"][0][1][0] = 0.7.into();
        assert!(matches!(
            CovarianceState::from_json_str(&v.to_string()),
            Err(Error::Malformed(_))
        ));
        // Sub-vacuum occupation.
        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v["c1"][0][0][0] = 0.5.into();
        assert!(CovarianceState::from_json_str(&v.to_string()).is_err());
    }

    #[test]
    fn exact_reference_is_cauchy_in_bath_size() {
        let p = fig2();
        let obs = |k: usize| {
            let disc = BathDiscretization::new(k, 36.0, 3.0).unwrap();
            assert!(disc.recurrence_time() > 8.0);
            let traj = exact_reference(&p, &disc, &CovarianceState::vacuum(0.0), &[8.0], &tight()).unwrap();
            traj.states[0].c1()
        };
        let (c64, c128, c256) = (obs(64), obs(128), obs(256));
        let coarse = max_abs(&(c128 - c64));
        let fine = max_abs(&(c256 - c128));
        assert!(fine <= 0.5 * coarse, "{fine:e} vs {coarse:e}");
    }

    #[test]
    fn exact_reference_stays_physical_and_warns_at_recurrence() {
        let disc = BathDiscretization::new(8, 36.0, 3.0).unwrap();
        let t_rec = disc.recurrence_time();
        let traj = exact_reference(
            &fig2(),
            &disc,
            &CovarianceState::vacuum(0.0),
            &[0.5, t_rec + 0.1],
            &tight(),
        )
        .unwrap();
        assert!(traj.warning.is_some());
        for s in &traj.states {
            s.validate().unwrap();
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn trajectories_stay_physical(dt in 0.05f64..30.0, g in 0.05f64..0.6, tl in 0.0f64..12.0) {
            let p = ChainParams { g, temp_left: tl, ..fig2() };
            let coeffs = build_tcg(&p, dt, &QuadratureSpec::default()).unwrap().to_site_basis();
            let dd = build_drift_diffusion(&coeffs).unwrap();
            let s0 = sample_state();
            for t in [0.3, 2.0, 20.0] {
                let s = propagate(&s0, &dd, t);
                prop_assert!(s.validate().is_ok(), "t = {}", t);
            }
        }

        #[test]
        fn state_json_round_trip_is_exact(t in 0.0f64..40.0, g in 0.05f64..0.6) {
            let p = ChainParams { g, ..fig2() };
            let dd = build_drift_diffusion(&build_local(&p, &QuadratureSpec::default()).unwrap()).unwrap();
            let s = propagate(&sample_state(), &dd, t);
            let back = CovarianceState::from_json_str(&s.to_json_string()).unwrap();
            prop_assert_eq!(back, s);
        }

        #[test]
        fn steady_state_independent_of_initial_condition(scale in 1.0f64..3.0, shift in -0.5f64..0.5) {
            let dd = build_drift_diffusion(&build_global(&fig2(), &QuadratureSpec::default()).unwrap()).unwrap();
            let ss = steady_state(&dd).unwrap();
            let s0 = CovarianceState::from_blocks(
                &CMat3::identity().scale(scale),
                &CMat3::zeros(),
                Vector3::new(c(shift, 0.0), c(0.0, shift), c(0.1, 0.0)),
                0.0,
            );
            let t = 50.0 / -dd.spectral_abscissa();
            let s = propagate(&s0, &dd, t);
            prop_assert!((s.c - ss.c).norm() < 1e-8);
        }
    }

    #[test]
    fn stationary_limit_of_stable_drift_is_steady_state() {
        let dd =
            build_drift_diffusion(&build_local(&ChainParams::default(), &QuadratureSpec::default()).unwrap()).unwrap();
        let a = stationary_limit(&dd, &CovarianceState::vacuum(0.0)).unwrap();
        let b = steady_state(&dd).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stationary_limit_keeps_undamped_mode() {
        // g > ω₀/√2: the lowest normal mode has no channel and keeps its
        // vacuum occupation; everything else relaxes.
        let p = ChainParams::benchmark(0.9);
        let coeffs = build_global(&p, &QuadratureSpec::default()).unwrap().to_site_basis();
        let dd = build_drift_diffusion(&coeffs).unwrap();
        assert!(steady_state(&dd).is_err());
        let vac = CovarianceState::vacuum(0.0);
        let lim = stationary_limit(&dd, &vac).unwrap();
        let late = propagate(&vac, &dd, 3200.0);
        assert!(max_abs(&(lim.c - late.c)) < 1e-9, "{}", max_abs(&(lim.c - late.c)));
        let normal = lim.site_to_normal();
        assert!((normal.c[(0, 0)].re - 1.0).abs() < 1e-12);
        // A displaced undamped mode oscillates forever.
        let mut displaced = vac;
        displaced.d = Vector3::new(C64::new(0.5, 0.0), C64::new(-0.5, 0.0), C64::new(0.5, 0.0));
        let displaced = CovarianceState::from_blocks(&vac.c1(), &vac.c2(), displaced.d, 0.0);
        assert!(stationary_limit(&dd, &displaced).is_err());
    }

    #[test]
    fn stationary_limit_rejects_growing_modes() {
        let coeffs = build_tcg(&ChainParams::default(), 0.1, &QuadratureSpec::default()).unwrap();
        let dd = build_drift_diffusion(&coeffs.to_site_basis()).unwrap();
        assert!(dd.spectral_abscissa() > 0.0);
        assert!(matches!(
            stationary_limit(&dd, &CovarianceState::vacuum(0.0)),
            Err(Error::Singular(_))
        ));
    }
}
