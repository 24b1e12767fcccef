// SPDX-License-Identifier: Apache-2.0

//! Physical parameters, bath functions and the normal-mode structure of the
//! chain.
//!
//! The chain Hamiltonian is
//! `H_S = ω₀ Σᵢ aᵢ†aᵢ + g (a₁†a₂ + a₂†a₃ + h.c.)`, and each bath couples
//! linearly to one boundary site: the left bath to site 1, the right bath to
//! site 3. Both baths share the Ohmic spectral density
//! `J(ω) = ω·exp(−ω/ω_c)`.
//!
//! The normal modes are `cᵢ = Σₖ Tᵢₖ aₖ` with the fixed orthogonal matrix
//! returned by [`bogolubov`]; they diagonalize `H_S` with energies
//! `ε = (ω₀ − √2 g, ω₀, ω₀ + √2 g)`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

use crate::{Error, Result};

/// Below this value of `|ω/T|` the product `J(ω)·n̄(ω)` is evaluated by its
/// Taylor series instead of the quotient, which loses digits near `ω = 0`.
pub const THERMAL_SERIES_THRESHOLD: f64 = 1e-4;

/// Parameters of the chain and of its two baths.
///
/// Temperatures are in units where Boltzmann's constant is one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainParams {
    /// On-site angular frequency `ω₀ > 0`.
    pub omega0: f64,
    /// Nearest-neighbour hopping `g ≥ 0`.
    pub g: f64,
    /// Dimensionless system–bath coupling `λ ≥ 0`.
    pub lambda: f64,
    /// Spectral cutoff `ω_c > 0`.
    pub omega_c: f64,
    /// Left bath temperature `T_L ≥ 0`.
    pub temp_left: f64,
    /// Right bath temperature `T_R ≥ 0`.
    pub temp_right: f64,
}

impl Default for ChainParams {
    /// The heat-transport benchmark: `λ = 0.1, ω₀ = 1, ω_c = 3, T_L = 10,
    /// T_R = 1`, with hopping `g = 0.3`.
    fn default() -> Self {
        Self {
            omega0: 1.0,
            g: 0.3,
            lambda: 0.1,
            omega_c: 3.0,
            temp_left: 10.0,
            temp_right: 1.0,
        }
    }
}

impl ChainParams {
    /// Benchmark parameters with a custom hopping strength.
    pub fn benchmark(g: f64) -> Self {
        Self { g, ..Self::default() }
    }

    /// Check every documented range constraint.
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.omega0,
            self.g,
            self.lambda,
            self.omega_c,
            self.temp_left,
            self.temp_right,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("parameters must be finite".into()));
        }
        if self.omega0 <= 0.0 {
            return Err(Error::InvalidParameter(format!("omega0 = {} must be > 0", self.omega0)));
        }
        if self.omega_c <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "omega_c = {} must be > 0",
                self.omega_c
            )));
        }
        if self.g < 0.0 {
            return Err(Error::InvalidParameter(format!("g = {} must be >= 0", self.g)));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "lambda = {} must be >= 0",
                self.lambda
            )));
        }
        if self.temp_left < 0.0 || self.temp_right < 0.0 {
            return Err(Error::InvalidParameter("temperatures must be >= 0".into()));
        }
        Ok(())
    }

    /// `true` when all three normal-mode energies are positive
    /// (`g < ω₀/√2`). When it is `false` the lowest mode carries no global
    /// Lindblad channel.
    pub fn resonant_gap_positive(&self) -> bool {
        self.g < self.omega0 / SQRT_2
    }

    /// Temperature of the given bath.
    pub fn temperature(&self, bath: Bath) -> f64 {
        match bath {
            Bath::Left => self.temp_left,
            Bath::Right => self.temp_right,
        }
    }
}

/// The two reservoirs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bath {
    Left,
    Right,
}

impl Bath {
    /// Both baths, left first. Every per-bath array in the crate uses this
    /// order.
    pub const BOTH: [Bath; 2] = [Bath::Left, Bath::Right];

    /// Zero-based index of the chain site the bath is attached to.
    pub fn site(self) -> usize {
        match self {
            Bath::Left => 0,
            Bath::Right => 2,
        }
    }

    /// Position in [`Bath::BOTH`].
    pub fn index(self) -> usize {
        match self {
            Bath::Left => 0,
            Bath::Right => 1,
        }
    }
}

/// Emission (`+`, weight `n̄ + 1`) or absorption (`−`, weight `n̄`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

/// Normal-mode energies and the Bogolubov matrix of the chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalModes {
    /// `(ε₁, ε₂, ε₃)`, ascending.
    pub epsilon: [f64; 3],
    /// Real orthogonal `T` with `c = T a`.
    pub bogolubov: Matrix3<f64>,
}

impl NormalModes {
    /// Energies as a vector.
    pub fn epsilon_vector(&self) -> Vector3<f64> {
        Vector3::from(self.epsilon)
    }
}

/// The fixed Bogolubov matrix `T` (rows are the normal-mode amplitudes on the
/// three sites).
pub fn bogolubov() -> Matrix3<f64> {
    let h = 0.5;
    let s = SQRT_2 / 2.0;
    Matrix3::new(h, -s, h, s, 0.0, -s, h, s, h)
}

/// Normal modes of the chain described by `params`.
pub fn normal_modes(params: &ChainParams) -> NormalModes {
    let shift = SQRT_2 * params.g;
    NormalModes {
        epsilon: [params.omega0 - shift, params.omega0, params.omega0 + shift],
        bogolubov: bogolubov(),
    }
}

/// Single-particle chain Hamiltonian in the site basis: `ω₀` on the diagonal,
/// `g` on the first off-diagonals.
pub fn site_hamiltonian(params: &ChainParams) -> Matrix3<f64> {
    let (w, g) = (params.omega0, params.g);
    Matrix3::new(w, g, 0.0, g, w, g, 0.0, g, w)
}

/// Ohmic spectral density `J(ω) = ω·exp(−ω/ω_c)`, evaluated by the same
/// formula for negative frequencies.
pub fn spectral_density(omega: f64, omega_c: f64) -> f64 {
    omega * (-omega / omega_c).exp()
}

/// Bose–Einstein occupation `n̄(ω) = 1/(exp(ω/T) − 1)`.
///
/// At `T = 0` the pointwise limit is used: `0` for `ω > 0` and `−1` for
/// `ω < 0`. The point `ω = 0` is a pole and is rejected; use
/// [`bath_weight`] for the finite product `J·n̄` there.
pub fn mean_photon(omega: f64, temperature: f64) -> Result<f64> {
    if temperature < 0.0 || !temperature.is_finite() {
        return Err(Error::Domain(format!("temperature {temperature} must be >= 0")));
    }
    if omega == 0.0 {
        return Err(Error::Domain("mean photon number has a pole at omega = 0".into()));
    }
    if temperature == 0.0 {
        return Ok(if omega > 0.0 { 0.0 } else { -1.0 });
    }
    Ok(1.0 / (omega / temperature).exp_m1())
}

/// Product `J(ω)·n̄(ω)` for one bath, finite everywhere.
///
/// Near `ω = 0` it uses `J·n̄ = T·exp(−ω/ω_c)·(1 − x/2 + x²/12)` with
/// `x = ω/T`; the quotient form is used elsewhere. At zero temperature it
/// returns `0` for `ω ≥ 0` and `−J(ω)` for `ω < 0`.
pub fn bath_weight(omega: f64, temperature: f64, omega_c: f64) -> f64 {
    if temperature == 0.0 {
        return if omega < 0.0 {
            -spectral_density(omega, omega_c)
        } else {
            0.0
        };
    }
    let x = omega / temperature;
    if x.abs() < THERMAL_SERIES_THRESHOLD {
        temperature * (-omega / omega_c).exp() * (1.0 - x / 2.0 + x * x / 12.0)
    } else {
        spectral_density(omega, omega_c) / x.exp_m1()
    }
}

/// Per-bath emission or absorption weight: `J(n̄ + 1)` for [`Sign::Plus`],
/// `J·n̄` for [`Sign::Minus`].
pub fn bath_rate_density(omega: f64, temperature: f64, omega_c: f64, sign: Sign) -> f64 {
    let absorption = bath_weight(omega, temperature, omega_c);
    match sign {
        Sign::Minus => absorption,
        Sign::Plus => absorption + spectral_density(omega, omega_c),
    }
}

/// `τ±(ω) = Σ_α J(ω)(n̄_α(ω) + 1)` for `+`, `Σ_α J(ω) n̄_α(ω)` for `−`.
///
/// At `ω = 0` both equal `T_L + T_R`.
pub fn thermal_weight(omega: f64, params: &ChainParams, sign: Sign) -> f64 {
    Bath::BOTH
        .iter()
        .map(|&b| bath_rate_density(omega, params.temperature(b), params.omega_c, sign))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bogolubov_entry_and_orthogonality() {
        let t = bogolubov();
        assert_eq!(t[(0, 1)], -SQRT_2 / 2.0);
        let id = t * t.transpose();
        assert!((id - Matrix3::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn mode_energies() {
        let m = normal_modes(&ChainParams::benchmark(0.0));
        assert_eq!(m.epsilon, [1.0, 1.0, 1.0]);
        let m = normal_modes(&ChainParams::benchmark(0.5));
        let expect = [0.292_893_218_813_452_5, 1.0, 1.707_106_781_186_547_5];
        for (a, b) in m.epsilon.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn bogolubov_diagonalizes_site_hamiltonian() {
        let p = ChainParams::benchmark(0.37);
        let m = normal_modes(&p);
        let d = m.bogolubov * site_hamiltonian(&p) * m.bogolubov.transpose();
        let expect = Matrix3::from_diagonal(&m.epsilon_vector());
        assert!((d - expect).abs().max() < 1e-12);
    }

    #[test]
    fn spectral_density_values() {
        assert_eq!(spectral_density(0.0, 3.0), 0.0);
        assert!((spectral_density(1.0, 3.0) - 0.716_531_310_573_789_3).abs() < 1e-15);
        assert!((spectral_density(-1.0, 3.0) + 1.395_612_425_086_089_5).abs() < 1e-15);
    }

    #[test]
    fn mean_photon_values() {
        assert_eq!(mean_photon(1.0, 0.0).unwrap(), 0.0);
        assert!((mean_photon(1.0, 1.0 / 2f64.ln()).unwrap() - 1.0).abs() < 1e-14);
        assert!((mean_photon(-1.0, 1.0).unwrap() + 1.581_976_706_869_326_4).abs() < 1e-14);
        assert!(mean_photon(0.0, 1.0).is_err());
        assert!(mean_photon(1.0, -1.0).is_err());
    }

    #[test]
    fn thermal_weight_values() {
        let p = ChainParams::default();
        // Direct evaluation: e^{-1/3} (1/(e^{0.1} - 1) + 1/(e - 1)).
        let expect = 7.230_022_082_256_789;
        assert!((thermal_weight(1.0, &p, Sign::Minus) - expect).abs() < 1e-12);
        assert!((thermal_weight(0.0, &p, Sign::Minus) - 11.0).abs() < 1e-15);
        assert!((thermal_weight(0.0, &p, Sign::Plus) - 11.0).abs() < 1e-15);

        let vac = ChainParams {
            temp_left: 0.0,
            temp_right: 0.0,
            ..p
        };
        assert_eq!(thermal_weight(0.7, &vac, Sign::Minus), 0.0);
        let j = spectral_density(0.7, vac.omega_c);
        assert!((thermal_weight(0.7, &vac, Sign::Plus) - 2.0 * j).abs() < 1e-15);
        // Below zero frequency at T = 0, n̄ → −1.
        let jn = spectral_density(-0.7, vac.omega_c);
        assert!((thermal_weight(-0.7, &vac, Sign::Minus) + 2.0 * jn).abs() < 1e-15);
    }

    #[test]
    fn thermal_weight_continuous_at_zero() {
        let p = ChainParams::default();
        for &w in &[1e-6, -1e-6] {
            let series = thermal_weight(w, &p, Sign::Minus);
            let direct: f64 = [p.temp_left, p.temp_right]
                .iter()
                .map(|&t| spectral_density(w, p.omega_c) / (w / t).exp_m1())
                .sum();
            assert!(((series - direct) / direct).abs() < 1e-8);
        }
    }

    #[test]
    fn validation() {
        assert!(ChainParams::default().validate().is_ok());
        let bad = ChainParams {
            omega0: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ChainParams {
            g: -0.1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(ChainParams::benchmark(0.7).resonant_gap_positive());
        assert!(!ChainParams::benchmark(0.71).resonant_gap_positive());
    }

    proptest! {
        #[test]
        fn emission_minus_absorption_is_total_density(
            w in -5.0f64..5.0, tl in 0.0f64..20.0, tr in 0.0f64..20.0, wc in 0.5f64..6.0,
        ) {
            let p = ChainParams { temp_left: tl, temp_right: tr, omega_c: wc, ..Default::default() };
            let diff = thermal_weight(w, &p, Sign::Plus) - thermal_weight(w, &p, Sign::Minus);
            let j = 2.0 * spectral_density(w, wc);
            prop_assert!((diff - j).abs() <= 1e-12 * (1.0 + j.abs()));
        }

        #[test]
        fn weights_nonnegative(w in -5.0f64..5.0, t in 0.0f64..20.0) {
            prop_assert!(bath_weight(w, t, 3.0) >= 0.0);
            prop_assert!(bath_rate_density(w, t, 3.0, Sign::Plus) >= 0.0 || w < 0.0);
        }

        #[test]
        fn normal_modes_diagonalize(g in 0.0f64..3.0, w0 in 0.1f64..5.0) {
            let p = ChainParams { g, omega0: w0, ..Default::default() };
            let m = normal_modes(&p);
            let d = m.bogolubov * site_hamiltonian(&p) * m.bogolubov.transpose();
            let e = Matrix3::from_diagonal(&m.epsilon_vector());
            prop_assert!((d - e).abs().max() < 1e-12 * (1.0 + g + w0));
        }
    }
}
