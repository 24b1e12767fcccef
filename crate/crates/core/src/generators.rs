// SPDX-License-Identifier: Apache-2.0

//! GKSL coefficient data for the local, global and time-coarse-grained (TCG)
//! master equations.
//!
//! Every generator is reduced to one canonical normal form
//!
//! ```text
//! L ρ = −i[Σ h_ij c_i† c_j, ρ]
//!       + Σ Γ⁺_ij (c_i ρ c_j† − ½{c_j† c_i, ρ})
//!       + Σ Γ⁻_ij (c_i† ρ c_j − ½{c_j c_i†, ρ})
//! ```
//!
//! with all `2πλ²`-type prefactors folded into `Γ±`, so downstream code never
//! branches on which approach produced the coefficients. Each generator is
//! also available resolved per bath ([`ResolvedGenerator`]) because the
//! transport module attributes sink/source terms to individual baths.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::linalg::{complexify, hermiticity_defect, CMat3};
use crate::model::{
    bath_rate_density, bogolubov, normal_modes, site_hamiltonian, spectral_density, Bath, ChainParams, Sign,
};
use crate::quadrature::{integrate_vec, principal_value, QuadratureSpec};
use crate::{Error, Result, C64};

/// Factor `c` in `Γ± = c·λ²·γ±` relating the reduced TCG rates
/// returned by [`tcg_rates`] to the canonical form. Fixed by requiring the
/// `Δt → ∞` limit of the TCG rates to reproduce the global generator.
pub const TCG_CALIBRATION: f64 = 2.0 * PI;

/// Upper limit of the Lamb-shift integral in units of `ω_c`; the Ohmic
/// integrand is below `e^{−40}` of its peak beyond it.
pub const LAMB_SHIFT_TAIL: f64 = 40.0;

/// Half-width, in units of `1/Δt`, of the window around `ω = ε_j` in which
/// the TCG Lamb-shift kernel is evaluated by its Taylor series.
const KAPPA_SERIES_WINDOW: f64 = 1e-2;
/// Number of Taylor terms used inside that window.
const KAPPA_SERIES_TERMS: usize = 8;

/// Mode basis of a coefficient set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    /// Site operators `a₁, a₂, a₃`.
    Site,
    /// Normal-mode operators `c = T a`.
    Normal,
}

/// Which master equation produced a coefficient set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeneratorLabel {
    Local,
    Global,
    /// Time-coarse-grained generator with averaging window `delta_t`.
    Tcg {
        delta_t: f64,
    },
}

impl GeneratorLabel {
    /// Short name used in file names and CSV columns.
    pub fn name(&self) -> &'static str {
        match self {
            Self::Local => "local",
            Self::Global => "global",
            Self::Tcg { .. } => "tcg",
        }
    }

    /// Coarse-graining time, if any.
    pub fn delta_t(&self) -> Option<f64> {
        match self {
            Self::Tcg { delta_t } => Some(*delta_t),
            _ => None,
        }
    }
}

/// How the nearest-neighbour normal-mode cross rates of the TCG generator
/// are attributed to the two baths.
///
/// The two choices are mirror images of each other (site 1 ↔ site 3);
/// sink/source magnitudes agree, while the sign of the bond currents and the
/// site each bath attaches to are exchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrossConvention {
    /// Cross rates `√2(J n̄_R − J n̄_L)`: the Bogolubov sign with the baths
    /// exchanged (hot bath effectively on site 3).
    #[default]
    Mirrored,
    /// Cross rates derived from the Bogolubov transform with the left bath on
    /// site 1.
    Bogoliubov,
}

/// How the bath functions are continued to the negative frequencies that
/// the TCG integrals over `[−ω_c, ω_c]` sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegativeFrequency {
    /// Evaluate `J(ω) = ω e^{−ω/ω_c}` and `n̄(ω)` by their formulas.
    #[default]
    Literal,
    /// Odd continuation `J(−ω) = −J(ω)`, i.e. `ω e^{−|ω|/ω_c}`.
    Odd,
}

/// Conventions of the TCG generator that the defining formulas leave open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TcgOptions {
    pub cross: CrossConvention,
    pub negative_frequency: NegativeFrequency,
}

/// Canonical GKSL coefficients of one generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorCoefficients {
    pub label: GeneratorLabel,
    pub basis: Basis,
    /// Hermitian single-particle Hamiltonian including the Lamb shift.
    pub h_eff: CMat3,
    /// Emission rates, multiplying `c_i ρ c_j† − ½{c_j† c_i, ρ}`.
    pub gamma_plus: CMat3,
    /// Absorption rates, multiplying `c_i† ρ c_j − ½{c_j c_i†, ρ}`.
    pub gamma_minus: CMat3,
    /// Factor relating the reduced rates to `Γ±/λ²`.
    pub calibration: f64,
}

/// Contribution of one bath to a generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathTerms {
    /// Lamb-shift Hamiltonian (already multiplied by `λ²`).
    pub lamb: CMat3,
    pub gamma_plus: CMat3,
    pub gamma_minus: CMat3,
}

impl BathTerms {
    fn zero() -> Self {
        Self {
            lamb: CMat3::zeros(),
            gamma_plus: CMat3::zeros(),
            gamma_minus: CMat3::zeros(),
        }
    }

    fn map(&self, f: impl Fn(&CMat3) -> CMat3) -> Self {
        Self {
            lamb: f(&self.lamb),
            gamma_plus: f(&self.gamma_plus),
            gamma_minus: f(&self.gamma_minus),
        }
    }
}

/// A generator split into its system Hamiltonian and per-bath terms, indexed
/// by [`Bath::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedGenerator {
    pub label: GeneratorLabel,
    pub basis: Basis,
    /// Bare chain Hamiltonian.
    pub system: CMat3,
    pub baths: [BathTerms; 2],
    pub calibration: f64,
}

impl ResolvedGenerator {
    /// Sum the per-bath terms into the canonical coefficients.
    pub fn combine(&self) -> GeneratorCoefficients {
        let [l, r] = &self.baths;
        GeneratorCoefficients {
            label: self.label,
            basis: self.basis,
            h_eff: self.system + l.lamb + r.lamb,
            gamma_plus: l.gamma_plus + r.gamma_plus,
            gamma_minus: l.gamma_minus + r.gamma_minus,
            calibration: self.calibration,
        }
    }

    /// The same generator expressed in the site basis.
    pub fn to_site_basis(&self) -> Self {
        self.change_basis(Basis::Site)
    }

    /// The same generator expressed in the normal-mode basis.
    pub fn to_normal_basis(&self) -> Self {
        self.change_basis(Basis::Normal)
    }

    fn change_basis(&self, target: Basis) -> Self {
        let f = |m: &CMat3| transform(m, self.basis, target);
        Self {
            label: self.label,
            basis: target,
            system: f(&self.system),
            baths: [self.baths[0].map(f), self.baths[1].map(f)],
            calibration: self.calibration,
        }
    }
}

fn transform(m: &CMat3, from: Basis, to: Basis) -> CMat3 {
    let t = complexify(&bogolubov());
    match (from, to) {
        (Basis::Normal, Basis::Site) => t.transpose() * m * t,
        (Basis::Site, Basis::Normal) => t * m * t.transpose(),
        _ => *m,
    }
}

impl GeneratorCoefficients {
    /// Conjugate all matrices by `T` into the site basis: `A ↦ Tᵀ A T`.
    /// Coefficients already in the site basis are returned unchanged.
    pub fn to_site_basis(&self) -> Self {
        self.change_basis(Basis::Site)
    }

    /// Inverse of [`Self::to_site_basis`]: `A ↦ T A Tᵀ`.
    pub fn to_normal_basis(&self) -> Self {
        self.change_basis(Basis::Normal)
    }

    fn change_basis(&self, target: Basis) -> Self {
        let f = |m: &CMat3| transform(m, self.basis, target);
        Self {
            label: self.label,
            basis: target,
            h_eff: f(&self.h_eff),
            gamma_plus: f(&self.gamma_plus),
            gamma_minus: f(&self.gamma_minus),
            calibration: self.calibration,
        }
    }

    /// Largest Hermiticity defect over `h_eff` and both rate matrices.
    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.h_eff)
            .max(hermiticity_defect(&self.gamma_plus))
            .max(hermiticity_defect(&self.gamma_minus))
    }

    /// Serialize to the JSON dump format: complex entries as `[re, im]`,
    /// matrices as arrays of rows.
    pub fn to_json_string(&self) -> String {
        let dump = CoefficientDump {
            label: self.label.name().to_string(),
            delta_t: self.label.delta_t(),
            basis: self.basis,
            calibration: self.calibration,
            h_eff: to_rows(&self.h_eff),
            gamma_plus: to_rows(&self.gamma_plus),
            gamma_minus: to_rows(&self.gamma_minus),
        };
        serde_json::to_string_pretty(&dump).expect("coefficient dump is always serializable")
    }

    /// Parse a JSON coefficient dump. Entries must be finite and every matrix
    /// Hermitian to `1e−9` relative to its largest entry.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let dump: CoefficientDump = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        let label = match (dump.label.as_str(), dump.delta_t) {
            ("local", None) => GeneratorLabel::Local,
            ("global", None) => GeneratorLabel::Global,
            ("tcg", Some(dt)) if dt > 0.0 && dt.is_finite() => GeneratorLabel::Tcg { delta_t: dt },
            (l, dt) => {
                return Err(Error::Parse(format!("inconsistent label {l:?} with delta_t {dt:?}")));
            }
        };
        if !(dump.calibration.is_finite() && dump.calibration > 0.0) {
            return Err(Error::Parse("calibration must be finite and positive".into()));
        }
        let coeffs = Self {
            label,
            basis: dump.basis,
            h_eff: from_rows(&dump.h_eff)?,
            gamma_plus: from_rows(&dump.gamma_plus)?,
            gamma_minus: from_rows(&dump.gamma_minus)?,
            calibration: dump.calibration,
        };
        for (name, m) in [
            ("h_eff", &coeffs.h_eff),
            ("gamma_plus", &coeffs.gamma_plus),
            ("gamma_minus", &coeffs.gamma_minus),
        ] {
            let scale = m.iter().fold(1.0f64, |acc, z| acc.max(z.norm()));
            if hermiticity_defect(m) > 1e-9 * scale {
                return Err(Error::Malformed(format!("{name} is not Hermitian")));
            }
        }
        Ok(coeffs)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoefficientDump {
    label: String,
    delta_t: Option<f64>,
    basis: Basis,
    calibration: f64,
    h_eff: [[[f64; 2]; 3]; 3],
    gamma_plus: [[[f64; 2]; 3]; 3],
    gamma_minus: [[[f64; 2]; 3]; 3],
}

/// Matrix as rows of `[re, im]` pairs.
pub(crate) fn to_rows(m: &CMat3) -> [[[f64; 2]; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| [m[(i, j)].re, m[(i, j)].im]))
}

/// Inverse of [`to_rows`]; rejects non-finite entries.
pub(crate) fn from_rows(rows: &[[[f64; 2]; 3]; 3]) -> Result<CMat3> {
    if rows.iter().flatten().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Parse("matrix entries must be finite".into()));
    }
    Ok(CMat3::from_fn(|i, j| C64::new(rows[i][j][0], rows[i][j][1])))
}

/// Principal value `P∫₀^{40ω_c} J(ω)/(ε − ω) dω` for one bath.
pub fn lamb_shift_pv(epsilon: f64, params: &ChainParams, quad: &QuadratureSpec) -> Result<f64> {
    quad.validate()?;
    let wc = params.omega_c;
    let upper = LAMB_SHIFT_TAIL * wc;
    let j = |w: f64| spectral_density(w, wc);
    if epsilon == 0.0 {
        // J(ω)/(0 − ω) = −e^{−ω/ω_c} is regular.
        let (v, _) = crate::quadrature::integrate(|w| -(-w / wc).exp(), 0.0, upper, &[], quad)?;
        return Ok(v);
    }
    let (v, _) = principal_value(j, 0.0, upper, epsilon, quad)?;
    Ok(v)
}

/// Local generator in the site basis: each bath acts on its boundary site
/// with rates evaluated at the bare frequency `ω₀`.
pub fn resolve_local(params: &ChainParams, quad: &QuadratureSpec) -> Result<ResolvedGenerator> {
    params.validate()?;
    let lam2 = params.lambda * params.lambda;
    let w0 = params.omega0;
    let shift = lam2 * lamb_shift_pv(w0, params, quad)?;
    let mut baths = [BathTerms::zero(); 2];
    for bath in Bath::BOTH {
        let temp = params.temperature(bath);
        let s = bath.site();
        let terms = &mut baths[bath.index()];
        terms.lamb[(s, s)] = C64::from(shift);
        terms.gamma_plus[(s, s)] = C64::from(2.0 * PI * lam2 * bath_rate_density(w0, temp, params.omega_c, Sign::Plus));
        terms.gamma_minus[(s, s)] =
            C64::from(2.0 * PI * lam2 * bath_rate_density(w0, temp, params.omega_c, Sign::Minus));
    }
    Ok(ResolvedGenerator {
        label: GeneratorLabel::Local,
        basis: Basis::Site,
        system: complexify(&site_hamiltonian(params)),
        baths,
        calibration: 2.0 * PI,
    })
}

/// Global generator in the normal-mode basis. Mode weights are `(¼, ½, ¼)`;
/// if `ε₁ ≤ 0` the first mode carries neither rates nor a Lamb shift.
pub fn resolve_global(params: &ChainParams, quad: &QuadratureSpec) -> Result<ResolvedGenerator> {
    params.validate()?;
    let lam2 = params.lambda * params.lambda;
    let modes = normal_modes(params);
    let weights = [0.25, 0.5, 0.25];
    let active = |i: usize| i != 0 || params.resonant_gap_positive();
    let mut shifts = [0.0; 3];
    for (i, s) in shifts.iter_mut().enumerate() {
        if active(i) {
            *s = lam2 * lamb_shift_pv(modes.epsilon[i], params, quad)?;
        }
    }
    let mut baths = [BathTerms::zero(); 2];
    for bath in Bath::BOTH {
        let temp = params.temperature(bath);
        let terms = &mut baths[bath.index()];
        for i in (0..3).filter(|&i| active(i)) {
            let e = modes.epsilon[i];
            let k = 2.0 * PI * lam2 * weights[i];
            terms.lamb[(i, i)] = C64::from(shifts[i]);
            terms.gamma_plus[(i, i)] = C64::from(k * bath_rate_density(e, temp, params.omega_c, Sign::Plus));
            terms.gamma_minus[(i, i)] = C64::from(k * bath_rate_density(e, temp, params.omega_c, Sign::Minus));
        }
    }
    Ok(ResolvedGenerator {
        label: GeneratorLabel::Global,
        basis: Basis::Normal,
        system: complexify(&Matrix3::from_diagonal(&modes.epsilon_vector())),
        baths,
        calibration: 2.0 * PI,
    })
}

/// Canonical local coefficients (site basis).
pub fn build_local(params: &ChainParams, quad: &QuadratureSpec) -> Result<GeneratorCoefficients> {
    Ok(resolve_local(params, quad)?.combine())
}

/// Canonical global coefficients (normal-mode basis).
pub fn build_global(params: &ChainParams, quad: &QuadratureSpec) -> Result<GeneratorCoefficients> {
    Ok(resolve_global(params, quad)?.combine())
}

/// Canonical TCG coefficients (normal-mode basis) with the default
/// [`CrossConvention::Mirrored`].
pub fn build_tcg(params: &ChainParams, delta_t: f64, quad: &QuadratureSpec) -> Result<GeneratorCoefficients> {
    Ok(resolve_tcg(params, delta_t, quad, TcgOptions::default())?.combine())
}

/// `sin(x)/x`, with its Taylor polynomial near zero.
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// `E(x) = ∫₀^Δt e^{ixs} ds = Δt·e^{ixΔt/2}·sinc(xΔt/2)`.
fn window_transform(x: f64, dt: f64) -> C64 {
    let half = 0.5 * x * dt;
    C64::from_polar(dt * sinc(half), half)
}

/// Moments `m_n(y) = ∫₀¹ tⁿ e^{iyt} dt` for `n = 0..=N`.
fn unit_moments<const N: usize>(y: f64) -> [C64; N] {
    let mut m = [C64::new(0.0, 0.0); N];
    let iy = C64::new(0.0, y);
    if y.abs() <= 4.0 {
        // Σ_k (iy)^k / (k!(n + k + 1)); 40 terms reach 4⁴⁰/40! ≈ 1e−24.
        for (n, mn) in m.iter_mut().enumerate() {
            let mut term = C64::new(1.0, 0.0);
            let mut sum = C64::new(0.0, 0.0);
            for k in 0..40 {
                sum += term / (n + k + 1) as f64;
                term *= iy / (k + 1) as f64;
            }
            *mn = sum;
        }
    } else {
        let e = C64::from_polar(1.0, y);
        m[0] = (e - 1.0) / iy;
        for n in 1..N {
            m[n] = (e - n as f64 * m[n - 1]) / iy;
        }
    }
    m
}

/// Which bath functions the TCG quadrature integrates: the bare density `J`
/// and the absorption weights `J n̄_L`, `J n̄_R`.
const WEIGHTS: usize = 3;
const PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
const RATE_DIM: usize = WEIGHTS * PAIRS.len();
const LAMB_DIM: usize = WEIGHTS * 9 * 2;

/// Integrand of all TCG quadratures at one `Δt`.
struct TcgKernel {
    eps: [f64; 3],
    dt: f64,
    omega_c: f64,
    temps: [f64; 2],
    odd: bool,
    /// `E(ε_i − ε_j)` for every ordered pair.
    e_pair: [[C64; 3]; 3],
    /// Taylor coefficients of `κ_ij` in powers of `δ = ε_j − ω`.
    series: [[[C64; KAPPA_SERIES_TERMS]; 3]; 3],
}

impl TcgKernel {
    fn new(params: &ChainParams, dt: f64, negative_frequency: NegativeFrequency) -> Self {
        let eps = normal_modes(params).epsilon;
        let e_pair = std::array::from_fn(|i| std::array::from_fn(|j| window_transform(eps[i] - eps[j], dt)));
        let series = std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                // κ_ij = Σ_{n≥1} (iδ)^{n−1} M_n / n!, M_n = Δt^{n+1} m_n((ε_i − ε_j)Δt).
                let m = unit_moments::<{ KAPPA_SERIES_TERMS + 1 }>((eps[i] - eps[j]) * dt);
                let mut c = [C64::new(0.0, 0.0); KAPPA_SERIES_TERMS];
                let mut scale = C64::new(dt * dt, 0.0); // i^{n−1}·Δt^{n+1}/n! at n = 1
                for n in 1..=KAPPA_SERIES_TERMS {
                    c[n - 1] = m[n] * scale;
                    scale *= C64::new(0.0, dt) / (n + 1) as f64;
                }
                c
            })
        });
        Self {
            eps,
            dt,
            omega_c: params.omega_c,
            temps: [params.temp_left, params.temp_right],
            odd: negative_frequency == NegativeFrequency::Odd,
            e_pair,
            series,
        }
    }

    /// `κ_ij(ω) = [E(ε_i − ω) − E(ε_i − ε_j)] / (i(ε_j − ω))`, an entire
    /// function of `ω`.
    fn kappa(&self, i: usize, j: usize, w: f64) -> C64 {
        let delta = self.eps[j] - w;
        if (delta * self.dt).abs() < KAPPA_SERIES_WINDOW {
            self.series[i][j]
                .iter()
                .rev()
                .fold(C64::new(0.0, 0.0), |acc, &c| acc * delta + c)
        } else {
            (window_transform(self.eps[i] - w, self.dt) - self.e_pair[i][j]) / C64::new(0.0, delta)
        }
    }

    fn weights(&self, w: f64) -> [f64; WEIGHTS] {
        let raw = [
            spectral_density(w, self.omega_c),
            bath_rate_density(w, self.temps[0], self.omega_c, Sign::Minus),
            bath_rate_density(w, self.temps[1], self.omega_c, Sign::Minus),
        ];
        if self.odd && w < 0.0 {
            // ω e^{−|ω|/ω_c} = ω e^{−ω/ω_c} · e^{−2|ω|/ω_c} for ω < 0.
            let k = (2.0 * w / self.omega_c).exp();
            raw.map(|x| x * k)
        } else {
            raw
        }
    }

    /// Rate components scaled by `Δt`, Lamb components scaled by `1/Δt`, so
    /// both stay `O(1)` for all `Δt`.
    fn eval(&self, w: f64, out: &mut [f64]) {
        let f = self.weights(w);
        let s: [f64; 3] = std::array::from_fn(|i| sinc(0.5 * (w - self.eps[i]) * self.dt));
        for (a, fa) in f.iter().enumerate() {
            for (p, &(i, j)) in PAIRS.iter().enumerate() {
                out[a * PAIRS.len() + p] = self.dt * fa * s[i] * s[j];
            }
        }
        let inv = 1.0 / self.dt;
        for i in 0..3 {
            for j in 0..3 {
                let k = self.kappa(i, j, w) * inv;
                for (a, fa) in f.iter().enumerate() {
                    let base = RATE_DIM + 2 * (a * 9 + 3 * i + j);
                    out[base] = fa * k.re;
                    out[base + 1] = fa * k.im;
                }
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        let wc = self.omega_c;
        let spacing = 2.0 * PI / self.dt;
        let mut pts = vec![0.0];
        for &e in &self.eps {
            pts.push(e);
            let k_lo = ((-wc - e) / spacing).ceil() as i64;
            let k_hi = ((wc - e) / spacing).floor() as i64;
            pts.extend((k_lo..=k_hi).map(|k| e + k as f64 * spacing));
        }
        pts.retain(|&x| x > -wc && x < wc);
        pts
    }
}

/// Raw TCG integrals at one `Δt`, before bath attribution.
struct TcgIntegrals {
    /// `Δt·∫ f_a s_i s_j`, symmetric in `(i, j)`.
    rates: [Matrix3<f64>; WEIGHTS],
    /// `(1/Δt)·∫ f_a κ_ij`.
    lamb: [CMat3; WEIGHTS],
}

fn tcg_integrals(
    params: &ChainParams,
    delta_t: f64,
    quad: &QuadratureSpec,
    negative_frequency: NegativeFrequency,
) -> Result<TcgIntegrals> {
    params.validate()?;
    quad.validate()?;
    if !(delta_t > 0.0 && delta_t.is_finite()) {
        return Err(Error::InvalidParameter(format!("delta_t = {delta_t} must be > 0")));
    }
    let kernel = TcgKernel::new(params, delta_t, negative_frequency);
    let wc = params.omega_c;
    let res = integrate_vec(
        |w, out| kernel.eval(w, out),
        -wc,
        wc,
        &kernel.breakpoints(),
        RATE_DIM + LAMB_DIM,
        quad,
    )?;
    let v = &res.value;
    let rates = std::array::from_fn(|a| {
        let mut m = Matrix3::zeros();
        for (p, &(i, j)) in PAIRS.iter().enumerate() {
            m[(i, j)] = v[a * PAIRS.len() + p];
            m[(j, i)] = v[a * PAIRS.len() + p];
        }
        m
    });
    let lamb = std::array::from_fn(|a| {
        CMat3::from_fn(|i, j| {
            let base = RATE_DIM + 2 * (a * 9 + 3 * i + j);
            C64::new(v[base], v[base + 1])
        })
    });
    Ok(TcgIntegrals { rates, lamb })
}

/// Normal-mode amplitudes through which bath `bath` couples.
fn coupling_vector(bath: Bath, convention: CrossConvention) -> [f64; 3] {
    let s = match convention {
        CrossConvention::Mirrored => -1.0,
        CrossConvention::Bogoliubov => 1.0,
    };
    let s = match bath {
        Bath::Left => s,
        Bath::Right => -s,
    };
    [0.5, 0.5 * s * SQRT_2, 0.5]
}

fn outer(v: &[f64; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| v[i] * v[j])
}

/// Per-bath TCG terms with `λ²` and the calibration applied.
fn tcg_bath_terms(
    params: &ChainParams,
    delta_t: f64,
    ints: &TcgIntegrals,
    convention: CrossConvention,
) -> [BathTerms; 2] {
    let lam2 = params.lambda * params.lambda;
    let eps = normal_modes(params).epsilon;
    // Phase e^{i(ε_j − ε_i)Δt/2} for emission; its conjugate for absorption.
    let phase = CMat3::from_fn(|i, j| C64::from_polar(1.0, 0.5 * (eps[j] - eps[i]) * delta_t));
    let minus_i_half = C64::new(0.0, -0.5);
    std::array::from_fn(|b| {
        let bath = Bath::BOTH[b];
        let vv = complexify(&outer(&coupling_vector(bath, convention)));
        let absorb = complexify(&ints.rates[1 + b]);
        let emit = complexify(&(ints.rates[1 + b] + ints.rates[0]));
        let pj = ints.lamb[0];
        BathTerms {
            lamb: (vv.component_mul(&(pj - pj.adjoint())) * minus_i_half).scale(lam2),
            gamma_plus: vv.component_mul(&phase).component_mul(&emit).scale(lam2),
            gamma_minus: vv.component_mul(&phase.conjugate()).component_mul(&absorb).scale(lam2),
        }
    })
}

/// Time-coarse-grained generator in the normal-mode basis.
pub fn resolve_tcg(
    params: &ChainParams,
    delta_t: f64,
    quad: &QuadratureSpec,
    options: TcgOptions,
) -> Result<ResolvedGenerator> {
    let ints = tcg_integrals(params, delta_t, quad, options.negative_frequency)?;
    let modes = normal_modes(params);
    Ok(ResolvedGenerator {
        label: GeneratorLabel::Tcg { delta_t },
        basis: Basis::Normal,
        system: complexify(&Matrix3::from_diagonal(&modes.epsilon_vector())),
        baths: tcg_bath_terms(params, delta_t, &ints, options.cross),
        calibration: TCG_CALIBRATION,
    })
}

/// Reduced TCG rates `(γ⁺, γ⁻)`, summed over both baths, with the
/// default cross convention. The canonical rates are
/// `Γ± = TCG_CALIBRATION·λ²·γ±`.
///
/// `γ±_ij = (Δt/8π)·e^{±i(ε_j−ε_i)Δt/2}·∫_{−ω_c}^{ω_c} f±_ij(ω)
/// sinc((ω−ε_i)Δt/2) sinc((ω−ε_j)Δt/2) dω`.
pub fn tcg_rates(params: &ChainParams, delta_t: f64, quad: &QuadratureSpec) -> Result<(CMat3, CMat3)> {
    let ints = tcg_integrals(params, delta_t, quad, NegativeFrequency::Literal)?;
    let unit = ChainParams { lambda: 1.0, ..*params };
    let terms = tcg_bath_terms(&unit, delta_t, &ints, CrossConvention::Mirrored);
    let k = 1.0 / TCG_CALIBRATION;
    Ok((
        (terms[0].gamma_plus + terms[1].gamma_plus).scale(k),
        (terms[0].gamma_minus + terms[1].gamma_minus).scale(k),
    ))
}

/// TCG Lamb-shift matrices `(S⁺, S⁻)`, summed over both baths, each a
/// Hermitian contribution to the normal-ordered single-particle Hamiltonian:
/// `h_eff = diag(ε) + λ²(S⁺ + S⁻)`.
///
/// `S⁺` comes from the emission terms `c_i† c_j`; `S⁻` from the absorption
/// terms `c_i c_j†` after normal ordering (the scalar reordering constant is
/// dropped). The temperature-dependent parts cancel in the sum.
pub fn tcg_lamb_shift(params: &ChainParams, delta_t: f64, quad: &QuadratureSpec) -> Result<(CMat3, CMat3)> {
    let ints = tcg_integrals(params, delta_t, quad, NegativeFrequency::Literal)?;
    let minus_i_half = C64::new(0.0, -0.5);
    let mut s_plus = CMat3::zeros();
    let mut s_minus = CMat3::zeros();
    for bath in Bath::BOTH {
        let vv = complexify(&outer(&coupling_vector(bath, CrossConvention::Mirrored)));
        let pn = ints.lamb[1 + bath.index()];
        let p_plus = vv.component_mul(&(pn + ints.lamb[0]));
        let p_minus = vv.component_mul(&pn.conjugate());
        s_plus += (p_plus - p_plus.adjoint()) * minus_i_half;
        s_minus += (p_minus.transpose() - p_minus.conjugate()) * minus_i_half;
    }
    Ok((s_plus, s_minus))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, min_hermitian_eigenvalue};
    use proptest::prelude::*;

    fn fig2() -> ChainParams {
        ChainParams::default()
    }

    fn quad() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    fn rel_frobenius(a: &CMat3, b: &CMat3) -> f64 {
        (a - b).norm() / b.norm()
    }

    // Closed form −ω_c + ε e^{−ε/ω_c} Ei(ε/ω_c) for ω_c = 3, evaluated with
    // 30-digit arithmetic.
    #[test]
    #[allow(clippy::excessive_precision)]
    fn lamb_shift_matches_exponential_integral() {
        let p = fig2();
        let cases = [
            (1.0, -3.113_277_946_032_476_5),
            (-0.5, -2.188_100_959_714_335_8),
            (0.575_735_931_288_071_5, -3.414_363_567_320_624),
            (1.424_264_068_711_928_5, -2.672_307_880_452_181_6),
            (2.0, -2.005_728_275_107_420_6),
        ];
        for (e, want) in cases {
            let got = lamb_shift_pv(e, &p, &quad()).unwrap();
            assert!((got - want).abs() < 1e-9, "S({e}) = {got}, want {want}");
        }
        // Pole-free at ε = 0: −ω_c.
        assert!((lamb_shift_pv(0.0, &p, &quad()).unwrap() + 3.0).abs() < 1e-9);
    }

    #[test]
    fn lamb_shift_cutoff_scaling() {
        let p = ChainParams { omega_c: 2.5, ..fig2() };
        let unit = ChainParams { omega_c: 1.0, ..fig2() };
        let a = lamb_shift_pv(1.3, &p, &quad()).unwrap();
        let b = 2.5 * lamb_shift_pv(1.3 / 2.5, &unit, &quad()).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn local_rates() {
        let c = build_local(&fig2(), &quad()).unwrap();
        assert_eq!(c.basis, Basis::Site);
        // 2π·0.01·e^{−1/3}/(e^{0.1} − 1).
        assert!((c.gamma_minus[(0, 0)].re - 0.428_074_517_662_105_35).abs() < 1e-13);
        assert_eq!(c.gamma_plus[(1, 1)], C64::new(0.0, 0.0));
        assert_eq!(c.gamma_minus[(1, 1)], C64::new(0.0, 0.0));
        let vac = build_local(
            &ChainParams {
                temp_left: 0.0,
                temp_right: 0.0,
                ..fig2()
            },
            &quad(),
        )
        .unwrap();
        assert_eq!(max_abs(&vac.gamma_minus), 0.0);
    }

    #[test]
    fn global_rates() {
        let c = build_global(&fig2(), &quad()).unwrap();
        assert_eq!(c.basis, Basis::Normal);
        assert!((c.gamma_minus[(2, 2)].re - 0.095_327_541_968_606_45).abs() < 1e-13);
        assert!((c.gamma_plus[(2, 2)].re - 0.123_160_351_577_970_12).abs() < 1e-13);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(c.gamma_plus[(i, j)], C64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn global_drops_negative_mode() {
        let p = ChainParams { g: 0.8, ..fig2() };
        let c = build_global(&p, &quad()).unwrap();
        assert_eq!(c.gamma_plus[(0, 0)], C64::new(0.0, 0.0));
        assert_eq!(c.gamma_minus[(0, 0)], C64::new(0.0, 0.0));
        assert_eq!(c.h_eff[(0, 0)].re, normal_modes(&p).epsilon[0]);
    }

    #[test]
    fn global_degenerate_modes_at_zero_hopping() {
        let p = ChainParams {
            g: 0.0,
            temp_right: 10.0,
            ..fig2()
        };
        let c = build_global(&p, &quad()).unwrap();
        let r = c.gamma_plus[(1, 1)].re;
        assert!((c.gamma_plus[(0, 0)].re - r / 2.0).abs() < 1e-15);
        // Mode weights (¼, ½, ¼) map to site weights (3/8, 1/4, 3/8) of the
        // mode-2 rate's 2× value: the ends are mirror images, the middle site
        // receives two thirds of an end site's rate.
        let site = c.to_site_basis();
        assert!((site.gamma_plus[(0, 0)] - site.gamma_plus[(2, 2)]).norm() < 1e-14);
        assert!((site.gamma_plus[(0, 0)].re - 0.75 * r).abs() < 1e-14);
        assert!((site.gamma_plus[(1, 1)].re - 0.5 * r).abs() < 1e-14);
    }

    #[test]
    fn basis_round_trip_and_trace() {
        let c = build_local(&fig2(), &quad()).unwrap();
        let back = c.to_normal_basis().to_site_basis();
        assert!(max_abs(&(back.gamma_plus - c.gamma_plus)) < 1e-15);
        assert!(max_abs(&(back.h_eff - c.h_eff)) < 1e-15);
        let g = build_global(&fig2(), &quad()).unwrap();
        let s = g.to_site_basis();
        assert!((s.gamma_minus.trace() - g.gamma_minus.trace()).norm() < 1e-14);
        assert_eq!(s.to_site_basis(), s);
    }

    #[test]
    fn resolved_generators_combine_consistently() {
        let r = resolve_global(&fig2(), &quad()).unwrap();
        let site = r.to_site_basis().combine();
        let direct = r.combine().to_site_basis();
        assert!(max_abs(&(site.h_eff - direct.h_eff)) < 1e-14);
        assert!(max_abs(&(site.gamma_plus - direct.gamma_plus)) < 1e-14);
    }

    #[test]
    fn unit_moments_agree_between_branches() {
        for y in [3.9, 4.1] {
            let m = unit_moments::<9>(y);
            // Direct trapezoid-free check via the recurrence identity
            // iy·m_n + n·m_{n−1} = e^{iy}.
            let e = C64::from_polar(1.0, y);
            for n in 1..9 {
                let lhs = C64::new(0.0, y) * m[n] + n as f64 * m[n - 1];
                assert!((lhs - e).norm() < 1e-13, "y = {y}, n = {n}");
            }
        }
        let m = unit_moments::<3>(0.0);
        assert!((m[2] - C64::new(1.0 / 3.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn kappa_series_is_continuous_at_window_edge() {
        let k = TcgKernel::new(&fig2(), 7.0, NegativeFrequency::Literal);
        for i in 0..3 {
            for j in 0..3 {
                let edge = KAPPA_SERIES_WINDOW / 7.0;
                let inside = k.kappa(i, j, k.eps[j] - edge * (1.0 - 1e-9));
                let outside = k.kappa(i, j, k.eps[j] - edge * (1.0 + 1e-9));
                assert!((inside - outside).norm() < 1e-10 * inside.norm().max(1.0));
            }
        }
    }

    #[test]
    fn tcg_rates_hermitian_and_psd() {
        for dt in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let c = build_tcg(&fig2(), dt, &quad()).unwrap();
            assert!(c.hermiticity_defect() < 1e-12, "dt = {dt}");
            assert!(min_hermitian_eigenvalue(&c.gamma_plus) > -1e-10, "dt = {dt}");
            assert!(min_hermitian_eigenvalue(&c.gamma_minus) > -1e-10, "dt = {dt}");
        }
    }

    #[test]
    fn tcg_rates_vanish_linearly_for_short_windows() {
        let (a, _) = tcg_rates(&fig2(), 1e-4, &quad()).unwrap();
        let (b, _) = tcg_rates(&fig2(), 2e-4, &quad()).unwrap();
        assert!(rel_frobenius(&b, &a.scale(2.0)) < 1e-3);
        // (Δt/8π)·∫ f: the 33 entry at Δt → 0 is (Δt/8π)·∫τ⁺.
        let p = fig2();
        let (tau, _) = crate::quadrature::integrate(
            |w| crate::model::thermal_weight(w, &p, Sign::Plus),
            -3.0,
            3.0,
            &[0.0],
            &quad(),
        )
        .unwrap();
        assert!((a[(2, 2)].re - 1e-4 / (8.0 * PI) * tau).abs() < 1e-6 * a[(2, 2)].re);
    }

    #[test]
    fn tcg_converges_to_global() {
        let p = fig2();
        let glb = build_global(&p, &quad()).unwrap();
        let tcg = build_tcg(&p, 1e4, &quad()).unwrap();
        assert!(rel_frobenius(&tcg.gamma_plus, &glb.gamma_plus) < 1e-2);
        assert!(rel_frobenius(&tcg.gamma_minus, &glb.gamma_minus) < 1e-2);
    }

    #[test]
    fn tcg_lamb_shift_is_hermitian_and_sums_to_generator() {
        let p = fig2();
        for dt in [0.1, 1.0, 10.0, 100.0] {
            let (sp, sm) = tcg_lamb_shift(&p, dt, &quad()).unwrap();
            assert!(hermiticity_defect(&sp) < 1e-10);
            assert!(hermiticity_defect(&sm) < 1e-10);
            let c = build_tcg(&p, dt, &quad()).unwrap();
            let eps = complexify(&Matrix3::from_diagonal(&normal_modes(&p).epsilon_vector()));
            let lam2 = p.lambda * p.lambda;
            assert!(max_abs(&(c.h_eff - eps - (sp + sm).scale(lam2))) < 1e-12);
        }
    }

    #[test]
    fn tcg_lamb_shift_vanishes_for_short_windows() {
        let (sp, sm) = tcg_lamb_shift(&fig2(), 1e-5, &quad()).unwrap();
        assert!(max_abs(&(sp + sm)) < 1e-3);
    }

    #[test]
    fn tcg_diagonal_lamb_shift_approaches_principal_value() {
        // Large-Δt limit of the diagonal shift: Σ_α v_i² P∫_{−ω_c}^{ω_c} J/(ε_i − ω).
        let p = fig2();
        let dt = 2000.0;
        let (sp, sm) = tcg_lamb_shift(&p, dt, &quad()).unwrap();
        let eps = normal_modes(&p).epsilon;
        let weights = [0.5, 1.0, 0.5];
        for i in 0..3 {
            let (pv, _) = principal_value(|w| spectral_density(w, 3.0), -3.0, 3.0, eps[i], &quad()).unwrap();
            let got = (sp + sm)[(i, i)].re;
            assert!(
                (got - weights[i] * pv).abs() < 5e-3,
                "mode {i}: {got} vs {}",
                weights[i] * pv
            );
        }
    }

    #[test]
    fn cross_conventions_are_mirror_images() {
        let p = fig2();
        let swapped = ChainParams {
            temp_left: p.temp_right,
            temp_right: p.temp_left,
            ..p
        };
        let mirrored = TcgOptions::default();
        let bogo = TcgOptions {
            cross: CrossConvention::Bogoliubov,
            ..mirrored
        };
        let a = resolve_tcg(&p, 3.0, &quad(), mirrored).unwrap().combine();
        let b = resolve_tcg(&swapped, 3.0, &quad(), bogo).unwrap().combine();
        assert!(max_abs(&(a.gamma_plus - b.gamma_plus)) < 1e-13);
        assert!(max_abs(&(a.gamma_minus - b.gamma_minus)) < 1e-13);
        assert!(max_abs(&(a.h_eff - b.h_eff)) < 1e-13);
    }

    #[test]
    fn net_damping_depends_on_negative_frequency_continuation() {
        // Γ⁺_ii − Γ⁻_ii = λ²Δt v_i²·2∫J s_i²: the literal continuation makes the
        // integral negative for short windows, the odd one never does.
        let p = fig2();
        let odd = TcgOptions {
            negative_frequency: NegativeFrequency::Odd,
            ..TcgOptions::default()
        };
        for (dt, literal_sign) in [(0.1, -1.0), (1.0, -1.0), (3.0, 1.0), (30.0, 1.0)] {
            let lit = build_tcg(&p, dt, &quad()).unwrap();
            let o = resolve_tcg(&p, dt, &quad(), odd).unwrap().combine();
            for i in 0..3 {
                let net_lit = (lit.gamma_plus - lit.gamma_minus)[(i, i)].re;
                let net_odd = (o.gamma_plus - o.gamma_minus)[(i, i)].re;
                assert!(net_lit * literal_sign > 0.0, "dt = {dt}, mode {i}: {net_lit}");
                assert!(net_odd > 0.0, "dt = {dt}, mode {i}: {net_odd}");
            }
            assert!(min_hermitian_eigenvalue(&o.gamma_plus) > -1e-10);
            assert!(min_hermitian_eigenvalue(&o.gamma_minus) > -1e-10);
        }
    }

    #[test]
    fn closed_system_has_no_dissipation() {
        let p = ChainParams { lambda: 0.0, ..fig2() };
        for c in [
            build_local(&p, &quad()).unwrap(),
            build_global(&p, &quad()).unwrap(),
            build_tcg(&p, 2.0, &quad()).unwrap(),
        ] {
            assert_eq!(max_abs(&c.gamma_plus), 0.0);
            assert_eq!(max_abs(&c.gamma_minus), 0.0);
        }
        let t = build_tcg(&p, 2.0, &quad()).unwrap();
        assert_eq!(
            t.h_eff,
            complexify(&Matrix3::from_diagonal(&normal_modes(&p).epsilon_vector()))
        );
    }

    #[test]
    fn json_round_trip() {
        let c = build_tcg(&fig2(), 0.5, &quad()).unwrap();
        let s = c.to_json_string();
        let back = GeneratorCoefficients::from_json_str(&s).unwrap();
        assert_eq!(back, c);
        assert!(GeneratorCoefficients::from_json_str("{}").is_err());
        let bad = s.replace("\"tcg\"", "\"local\"");
        assert!(GeneratorCoefficients::from_json_str(&bad).is_err());
    }

    #[test]
    fn invalid_window_rejected() {
        assert!(tcg_rates(&fig2(), 0.0, &quad()).is_err());
        assert!(tcg_rates(&fig2(), f64::NAN, &quad()).is_err());
        let tight = QuadratureSpec {
            max_panels: 100,
            ..quad()
        };
        assert!(matches!(
            tcg_rates(&fig2(), 1e4, &tight),
            Err(Error::PanelBudget { .. })
        ));
    }

    #[test]
    fn rates_continuous_in_window() {
        let p = fig2();
        for dt in [0.3, 3.0, 30.0] {
            let (a, _) = tcg_rates(&p, dt, &quad()).unwrap();
            let (b, _) = tcg_rates(&p, dt * (1.0 + 1e-3), &quad()).unwrap();
            assert!((a - b).norm() < 1e-2 * a.norm(), "dt = {dt}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn global_detailed_balance(g in 0.0f64..0.7, t in 0.2f64..20.0) {
            let p = ChainParams { g, temp_left: t, temp_right: t, ..fig2() };
            let c = build_global(&p, &quad()).unwrap();
            let eps = normal_modes(&p).epsilon;
            for (i, &e) in eps.iter().enumerate() {
                let ratio = c.gamma_minus[(i, i)].re / c.gamma_plus[(i, i)].re;
                prop_assert!((ratio - (-e / t).exp()).abs() < 1e-10);
            }
        }

        #[test]
        fn tcg_lamb_shift_independent_of_temperature(
            dt in 0.05f64..20.0, tl in 0.0f64..15.0, tr in 0.0f64..15.0,
        ) {
            let p = fig2();
            let q = ChainParams { temp_left: tl, temp_right: tr, ..p };
            let a = build_tcg(&p, dt, &quad()).unwrap();
            let b = build_tcg(&q, dt, &quad()).unwrap();
            prop_assert!(max_abs(&(a.h_eff - b.h_eff)) < 1e-10);
        }

        #[test]
        fn tcg_rates_psd_for_random_parameters(
            dt in 0.01f64..50.0, g in 0.0f64..0.9, tl in 0.0f64..15.0, tr in 0.0f64..15.0,
        ) {
            let p = ChainParams { g, temp_left: tl, temp_right: tr, ..fig2() };
            let c = build_tcg(&p, dt, &quad()).unwrap();
            prop_assert!(c.hermiticity_defect() < 1e-12);
            prop_assert!(min_hermitian_eigenvalue(&c.gamma_plus) > -1e-10);
            prop_assert!(min_hermitian_eigenvalue(&c.gamma_minus) > -1e-10);
        }
    }
}
