// SPDX-License-Identifier: Apache-2.0

//! The `check` subcommand: the invariant suite with a machine-readable
//! pass/fail report.

use nalgebra::{Matrix6, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{build_drift_diffusion, evolve, stationary_limit, CovarianceState};
use crate::generators::{build_global, GeneratorCoefficients};
use crate::linalg::{max_abs, min_hermitian_eigenvalue, CMat3};
use crate::model::{mean_photon, normal_modes, site_hamiltonian, ChainParams};
use crate::ode::Tolerance;
use crate::transport::{
    default_grid, energy_continuity_residual, probability_continuity_residual, probability_currents,
    quadrature_covariance, SpatialField,
};
use crate::{Error, Result, C64};

use super::commands::{balance, jobs, resolve_job, stationary_point, Job};
use super::config::{ApproachKind, ScenarioConfig};
use super::output::format_float;

/// One named check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Measured quantity (`null` in JSON when not finite).
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

/// The suite's outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub passed: bool,
    pub failed: usize,
    pub checks: Vec<CheckResult>,
}

fn check_le(name: &str, value: f64, threshold: f64, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed: value <= threshold,
        value,
        threshold,
        detail,
    }
}

fn failed(name: &str, threshold: f64, err: &Error) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed: false,
        value: f64::NAN,
        threshold,
        detail: err.to_string(),
    }
}

/// Tolerances of the suite.
pub const HERMITICITY_TOL: f64 = 1e-12;
pub const RATE_PSD_TOL: f64 = 1e-10;
pub const CLOSED_FORM_TOL: f64 = 1e-10;
pub const STATIONARY_TOL: f64 = 1e-8;
pub const SYMMETRY_TOL: f64 = 1e-10;
pub const ENERGY_RESIDUAL_TOL: f64 = 1e-6;
pub const SPATIAL_RESIDUAL_TOL: f64 = 1e-4;
/// Accepted deviation of a Richardson order estimate from 2.
pub const ORDER_TOL: f64 = 0.5;
pub const MC_DENSITY_TOL: f64 = 3e-3;
pub const MC_CURRENT_TOL: f64 = 5e-3;
/// Coarse-graining times of the limit checks.
pub const LARGE_DELTA_T: f64 = 1e4;
pub const SMALL_DELTA_T: f64 = 1e-2;
/// Relative accuracy of the limit checks.
pub const LIMIT_TOL: f64 = 1e-2;

/// Middle-site balance coefficients: one `Job` per Markovian generator.
fn markov_jobs(cfg: &ScenarioConfig) -> Vec<Job> {
    let mut all = cfg.clone();
    all.approaches = vec![ApproachKind::Local, ApproachKind::Global, ApproachKind::Tcg];
    jobs(&all)
}

fn tcg_job(dt: f64) -> Job {
    Job {
        kind: ApproachKind::Tcg,
        delta_t: Some(dt),
    }
}

const LOCAL: Job = Job {
    kind: ApproachKind::Local,
    delta_t: None,
};
const GLOBAL: Job = Job {
    kind: ApproachKind::Global,
    delta_t: None,
};

fn coefficient_checks(cfg: &ScenarioConfig) -> Vec<CheckResult> {
    let jobs = markov_jobs(cfg);
    let built: Vec<(Job, Result<GeneratorCoefficients>)> = jobs
        .par_iter()
        .map(|j| (*j, resolve_job(cfg, j).map(|g| g.expect("markovian").combine())))
        .collect();
    let mut out = Vec::new();
    for kind in [ApproachKind::Local, ApproachKind::Global, ApproachKind::Tcg] {
        let mut herm = (0.0f64, String::new());
        let mut psd = (f64::INFINITY, String::new());
        let mut error = None;
        for (job, c) in built.iter().filter(|(j, _)| j.kind == kind) {
            match c {
                Ok(c) => {
                    let h = c.hermiticity_defect();
                    if h >= herm.0 {
                        herm = (h, job.tag());
                    }
                    for m in [&c.gamma_plus, &c.gamma_minus] {
                        let scale = max_abs(m).max(1.0);
                        let e = min_hermitian_eigenvalue(m) / scale;
                        if e < psd.0 {
                            psd = (e, job.tag());
                        }
                    }
                }
                Err(e) => error = Some((job.tag(), e.to_string())),
            }
        }
        let name = kind.name();
        if let Some((tag, e)) = error {
            out.push(CheckResult {
                name: format!("coefficients_build/{name}"),
                passed: false,
                value: f64::NAN,
                threshold: 0.0,
                detail: format!("{tag}: {e}"),
            });
            continue;
        }
        out.push(check_le(
            &format!("coefficients_hermitian/{name}"),
            herm.0,
            HERMITICITY_TOL,
            format!("worst at {}", herm.1),
        ));
        out.push(check_le(
            &format!("rates_psd/{name}"),
            -psd.0,
            RATE_PSD_TOL,
            format!(
                "min eigenvalue of gamma± relative to max(|gamma|,1) is {} at {}",
                format_float(psd.0),
                psd.1
            ),
        ));
    }
    out
}

/// Stationary covariance of the global generator in closed form: thermal
/// normal modes with the mean of the two baths' occupations; a dropped mode
/// keeps the vacuum.
pub fn global_closed_form(params: &ChainParams) -> Result<CovarianceState> {
    let eps = normal_modes(params).epsilon;
    let mut diag = Vector3::zeros();
    for i in 0..3 {
        diag[i] = if i == 0 && !params.resonant_gap_positive() {
            C64::from(1.0)
        } else {
            C64::from(mean_photon(eps[i], params.temp_left)? + mean_photon(eps[i], params.temp_right)? + 1.0)
        };
    }
    let normal = CovarianceState::from_blocks(
        &CMat3::from_diagonal(&diag),
        &CMat3::zeros(),
        Vector3::zeros(),
        f64::INFINITY,
    );
    Ok(normal.normal_to_site())
}

fn stationary_checks(cfg: &ScenarioConfig) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let p = &cfg.params;
    // Closed form of the global stationary covariance.
    let closed = (|| -> Result<f64> {
        let coeffs = build_global(p, &cfg.quadrature)?.to_site_basis();
        let dd = build_drift_diffusion(&coeffs)?;
        let ss = stationary_limit(&dd, &CovarianceState::vacuum(0.0))?;
        Ok(max_abs(&(ss.c - global_closed_form(p)?.c)))
    })();
    out.push(match closed {
        Ok(v) => check_le(
            "global_steady_closed_form",
            v,
            CLOSED_FORM_TOL,
            "max |C - T^T C~ T|".into(),
        ),
        Err(e) => failed("global_steady_closed_form", CLOSED_FORM_TOL, &e),
    });

    match stationary_point(cfg, &LOCAL) {
        Ok(sp) => out.push(check_le(
            "stationary_balance/local",
            sp.balance.rhs.abs(),
            STATIONARY_TOL,
            "|d<n2>/dt| at the stationary state".into(),
        )),
        Err(e) => out.push(failed("stationary_balance/local", STATIONARY_TOL, &e)),
    }
    match stationary_point(cfg, &GLOBAL) {
        Ok(sp) => {
            let v = sp
                .balance
                .rhs
                .abs()
                .max((sp.balance.q_left + sp.balance.q_right).abs())
                .max(sp.j12.abs())
                .max(sp.j23.abs());
            out.push(check_le(
                "stationary_identities/global",
                v,
                STATIONARY_TOL,
                format!(
                    "max of |rhs|, |q_left + q_right|, |J12|, |J23|; q_left = {}",
                    format_float(sp.balance.q_left)
                ),
            ));
        }
        Err(e) => out.push(failed("stationary_identities/global", STATIONARY_TOL, &e)),
    }

    // TCG along the grid.
    let dts = cfg.tcg.delta_ts();
    let points: Vec<(f64, Result<super::commands::StationaryPoint>)> = dts
        .par_iter()
        .map(|&dt| (dt, stationary_point(cfg, &tcg_job(dt))))
        .collect();
    let missing: Vec<String> = points
        .iter()
        .filter(|(_, r)| r.is_err())
        .map(|(dt, _)| format_float(*dt))
        .collect();
    out.push(CheckResult {
        name: "tcg_stationary_state_exists".into(),
        passed: missing.is_empty(),
        value: missing.len() as f64,
        threshold: 0.0,
        detail: if missing.is_empty() {
            "every delta_t has a stationary limit".into()
        } else {
            format!(
                "no stationary limit (growing modes) at delta_t = {}",
                missing.join(", ")
            )
        },
    });
    let mut worst = (0.0f64, String::from("none"));
    for (dt, r) in &points {
        if let Ok(sp) = r {
            let v = sp
                .balance
                .rhs
                .abs()
                .max((sp.balance.q_left + sp.balance.q_right).abs())
                .max(sp.j12.abs())
                .max(sp.j23.abs());
            if v >= worst.0 {
                worst = (v, format_float(*dt));
            }
        }
    }
    out.push(check_le(
        "stationary_identities/tcg",
        worst.0,
        STATIONARY_TOL,
        format!(
            "max over delta_t with a stationary limit; worst at delta_t = {}",
            worst.1
        ),
    ));
    out
}

fn limit_checks(cfg: &ScenarioConfig) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let rates = (|| -> Result<f64> {
        let glb = resolve_job(cfg, &GLOBAL)?
            .expect("markovian")
            .combine()
            .to_normal_basis();
        let tcg = resolve_job(cfg, &tcg_job(LARGE_DELTA_T))?
            .expect("markovian")
            .combine()
            .to_normal_basis();
        let rel = |a: &CMat3, b: &CMat3| (a - b).norm() / b.norm();
        Ok(rel(&tcg.gamma_plus, &glb.gamma_plus).max(rel(&tcg.gamma_minus, &glb.gamma_minus)))
    })();
    out.push(match rates {
        Ok(v) => check_le(
            "tcg_rate_limit",
            v,
            LIMIT_TOL,
            format!("relative Frobenius distance to global at delta_t = {LARGE_DELTA_T:e}"),
        ),
        Err(e) => failed("tcg_rate_limit", LIMIT_TOL, &e),
    });
    let q = (|| -> Result<(f64, f64)> {
        let glb = stationary_point(cfg, &GLOBAL)?.balance;
        let mag = glb.q_left.abs().max(glb.q_right.abs());
        let large = stationary_point(cfg, &tcg_job(LARGE_DELTA_T))?.balance;
        let large_err = (large.q_left - glb.q_left)
            .abs()
            .max((large.q_right - glb.q_right).abs())
            / mag;
        let small = stationary_point(cfg, &tcg_job(SMALL_DELTA_T))
            .map(|s| s.balance.q_left.abs().max(s.balance.q_right.abs()) / mag);
        Ok((large_err, small.unwrap_or(f64::NAN)))
    })();
    match q {
        Ok((large, small)) => {
            out.push(check_le(
                "tcg_sink_source_limit/large_delta_t",
                large,
                LIMIT_TOL,
                format!("relative distance of q to the global values at delta_t = {LARGE_DELTA_T:e}"),
            ));
            out.push(CheckResult {
                name: "tcg_sink_source_limit/small_delta_t".into(),
                passed: small <= LIMIT_TOL,
                value: small,
                threshold: LIMIT_TOL,
                detail: if small.is_nan() {
                    format!("no stationary limit at delta_t = {SMALL_DELTA_T:e}")
                } else {
                    format!("|q| relative to the global magnitude at delta_t = {SMALL_DELTA_T:e}")
                },
            });
        }
        Err(e) => out.push(failed("tcg_sink_source_limit", LIMIT_TOL, &e)),
    }
    out
}

fn symmetry_checks(cfg: &ScenarioConfig) -> Vec<CheckResult> {
    let mut sym = cfg.clone();
    sym.params.temp_right = sym.params.temp_left;
    let mut jobs = vec![GLOBAL];
    jobs.extend(sym.tcg.delta_ts().into_iter().map(tcg_job));
    let res: Vec<(Job, Result<f64>)> = jobs
        .par_iter()
        .map(|j| {
            (
                *j,
                stationary_point(&sym, j).map(|s| s.balance.q_left.abs().max(s.balance.q_right.abs())),
            )
        })
        .collect();
    let mut worst = (0.0f64, String::from("none"));
    let mut skipped = Vec::new();
    for (j, r) in &res {
        match r {
            Ok(v) if *v >= worst.0 => worst = (*v, j.tag()),
            Ok(_) => {}
            Err(_) => skipped.push(j.tag()),
        }
    }
    let mut detail = format!("max |q| with T_R = T_L; worst at {}", worst.1);
    if !skipped.is_empty() {
        detail += &format!("; no stationary limit at {}", skipped.join(", "));
    }
    vec![check_le(
        "symmetric_baths_zero_sink_source",
        worst.0,
        SYMMETRY_TOL,
        detail,
    )]
}

/// A displaced, squeezed, correlated initial state for the transport checks.
#[rustfmt::skip]
pub fn probe_state() -> CovarianceState {
    let c = C64::new;
    let b = CMat3::new(
        c(0.3, 0.0), c(0.1, -0.1), c(0.0, 0.05),
        c(0.0, 0.1), c(0.4, 0.0), c(0.1, 0.0),
        c(0.05, 0.0), c(0.0, -0.1), c(0.2, 0.0),
    );
    let c1 = (b * b.adjoint()).scale(2.0) + CMat3::identity();
    let c2 = CMat3::new(
        c(0.2, 0.1), c(0.05, 0.0), c(0.0, 0.0),
        c(0.05, 0.0), c(-0.1, 0.05), c(0.02, 0.0),
        c(0.0, 0.0), c(0.02, 0.0), c(0.1, -0.05),
    );
    CovarianceState::from_blocks(&c1, &c2, Vector3::new(c(0.6, 0.0), c(0.0, -0.3), c(0.2, 0.1)), 0.0)
}

fn trajectory(
    cfg: &ScenarioConfig,
    coeffs: &GeneratorCoefficients,
    state0: &CovarianceState,
    steps: usize,
) -> Result<Vec<CovarianceState>> {
    let dd = build_drift_diffusion(&coeffs.to_site_basis())?;
    let samples: Vec<f64> = (0..=steps).map(|i| state0.t + i as f64 * cfg.check.step).collect();
    evolve(
        state0,
        &dd,
        &samples,
        &Tolerance {
            rtol: 1e-12,
            atol: 1e-14,
        },
    )
}

fn continuity_checks(cfg: &ScenarioConfig) -> Vec<CheckResult> {
    let mut closed_cfg = cfg.clone();
    closed_cfg.params.lambda = 0.0;
    let cases: Vec<(&str, &ScenarioConfig, Job)> = vec![
        ("closed", &closed_cfg, LOCAL),
        ("local", cfg, LOCAL),
        ("global", cfg, GLOBAL),
        ("tcg", cfg, tcg_job(cfg.check.tcg_delta_t)),
    ];
    let results: Vec<Vec<CheckResult>> = cases
        .par_iter()
        .map(|(name, c, job)| {
            let run = || -> Result<Vec<CheckResult>> {
                let gen = resolve_job(c, job)?.expect("markovian");
                let coeffs = gen.combine().to_site_basis();
                let mut out = Vec::new();
                if *name != "closed" {
                    let traj = trajectory(c, &coeffs, &CovarianceState::vacuum(0.0), c.check.energy_steps)?;
                    let rhs = |s: &CovarianceState| balance(c, job, Some(&gen), s).map(|b| b.rhs);
                    let r = energy_continuity_residual(&traj, rhs, None)?;
                    out.push(check_le(
                        &format!("energy_continuity/{name}"),
                        r.max_residual,
                        ENERGY_RESIDUAL_TOL,
                        format!("step {}", format_float(r.step)),
                    ));
                    out.push(check_le(
                        &format!("energy_continuity_order/{name}"),
                        (r.observed_order - 2.0).abs(),
                        ORDER_TOL,
                        format!("observed order {:.3}", r.observed_order),
                    ));
                    let worst_psd = traj.iter().map(|s| s.validate().err()).find(Option::is_some).flatten();
                    out.push(CheckResult {
                        name: format!("state_psd/{name}"),
                        passed: worst_psd.is_none(),
                        value: traj
                            .iter()
                            .map(|s| min_hermitian_eigenvalue(&s.c))
                            .fold(f64::INFINITY, f64::min),
                        threshold: -crate::dynamics::STATE_PSD_TOL,
                        detail: worst_psd.map_or("min eigenvalue of C along the trajectory".into(), |e| e.to_string()),
                    });
                }
                let traj = trajectory(c, &coeffs, &probe_state(), 8)?;
                let grid = default_grid(&traj, c.params.omega0, c.spatial.points, c.spatial.width_sigmas)?;
                let r = probability_continuity_residual(&traj, &coeffs, &grid, &c.params)?;
                out.push(check_le(
                    &format!("probability_continuity/{name}"),
                    r.max_residual,
                    SPATIAL_RESIDUAL_TOL,
                    format!("{} grid points, time step {}", grid.len(), format_float(r.step)),
                ));
                out.push(check_le(
                    &format!("probability_continuity_order/{name}"),
                    (r.observed_order - 2.0).abs(),
                    ORDER_TOL,
                    format!("observed order {:.3}", r.observed_order),
                ));
                Ok(out)
            };
            run().unwrap_or_else(|e| vec![failed(&format!("continuity/{name}"), 0.0, &e)])
        })
        .collect();
    results.into_iter().flatten().collect()
}

/// Sup-norm distances between Monte Carlo estimates (bin averages over the
/// sampled Wigner function) and bin averages of the closed-form fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloComparison {
    pub density: f64,
    pub j_unitary: f64,
    /// Dissipative drift flux `jᴰ + 𝒬`.
    pub drift_flux: f64,
}

/// Random physical Gaussian state with moderate widths.
pub fn random_gaussian_state(rng: &mut ChaCha20Rng) -> CovarianceState {
    let u = Uniform::new(-0.4f64, 0.4).expect("valid range");
    let mut z = || C64::new(u.sample(rng), u.sample(rng));
    let b = CMat3::from_fn(|_, _| z());
    let s = CMat3::from_fn(|_, _| z());
    let d = Vector3::from_fn(|_, _| z());
    let c1 = (b * b.adjoint()).scale(2.0) + CMat3::identity();
    let mut c2 = (s + s.transpose()).scale(0.25);
    loop {
        let st = CovarianceState::from_blocks(&c1, &c2, d, 0.0);
        if st.validate().is_ok() {
            return st;
        }
        c2 = c2.scale(0.5);
    }
}

/// Compare [`probability_currents`] with `samples` draws from the Wigner
/// function of `state`, on `bins` equal bins spanning ±4σ of every marginal.
pub fn monte_carlo_comparison(
    state: &CovarianceState,
    coeffs: &GeneratorCoefficients,
    params: &ChainParams,
    samples: usize,
    bins: usize,
    rng: &mut ChaCha20Rng,
) -> Result<MonteCarloComparison> {
    let w0 = params.omega0;
    let (v, mean): (Matrix6<f64>, Vector6<f64>) = quadrature_covariance(state, w0);
    let chol = v
        .cholesky()
        .ok_or_else(|| Error::Singular("quadrature covariance is not positive definite".into()))?;
    let l = chol.l();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..3 {
        lo = lo.min(mean[k] - 4.0 * v[(k, k)].sqrt());
        hi = hi.max(mean[k] + 4.0 * v[(k, k)].sqrt());
    }
    let width = (hi - lo) / bins as f64;
    // Closed form, averaged over each bin by composite Simpson.
    const SUB: usize = 16;
    let fine: Vec<f64> = (0..=bins * SUB).map(|i| lo + i as f64 * width / SUB as f64).collect();
    let field = probability_currents(state, coeffs, &fine, params)?;
    let avg = |f: &dyn Fn(&SpatialField, usize) -> f64, b: usize| {
        let mut acc = 0.0;
        for k in 0..=SUB {
            let wgt = if k == 0 || k == SUB {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += wgt * f(&field, b * SUB + k);
        }
        acc / (3.0 * SUB as f64)
    };
    // Sampling estimates of ⅓Σ_ℓ ⟨w(z) δ(x − x_ℓ)⟩ per bin.
    let h = site_hamiltonian(params) / w0;
    let dd = build_drift_diffusion(coeffs)?;
    let a_xx = dd.m_hat.map(|z| z.re);
    let a_diss = dd.m_hat.map(|z| -z.im / w0) - h;
    let mut dens = vec![0.0; bins];
    let mut ju = vec![0.0; bins];
    let mut jd = vec![0.0; bins];
    for _ in 0..samples {
        let xi = Vector6::from_fn(|_, _| StandardNormal.sample(rng));
        let z = mean + l * xi;
        for site in 0..3 {
            let x = z[site];
            if x < lo || x >= hi {
                continue;
            }
            let b = ((x - lo) / width) as usize;
            let b = b.min(bins - 1);
            let mut u = 0.0;
            let mut d = 0.0;
            for k in 0..3 {
                u += h[(site, k)] * z[3 + k];
                d += a_diss[(site, k)] * z[3 + k] + a_xx[(site, k)] * z[k];
            }
            dens[b] += 1.0;
            ju[b] += u;
            jd[b] += d;
        }
    }
    let norm = 1.0 / (3.0 * samples as f64 * width);
    let mut out = MonteCarloComparison {
        density: 0.0,
        j_unitary: 0.0,
        drift_flux: 0.0,
    };
    for b in 0..bins {
        out.density = out.density.max((dens[b] * norm - avg(&|f, i| f.density[i], b)).abs());
        out.j_unitary = out.j_unitary.max((ju[b] * norm - avg(&|f, i| f.j_unitary[i], b)).abs());
        out.drift_flux = out
            .drift_flux
            .max((jd[b] * norm - avg(&|f, i| f.j_dissipative[i] + f.q_term[i], b)).abs());
    }
    Ok(out)
}

fn monte_carlo_checks(cfg: &ScenarioConfig) -> Vec<CheckResult> {
    let run = || -> Result<MonteCarloComparison> {
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        let state = random_gaussian_state(&mut rng);
        let coeffs = resolve_job(cfg, &LOCAL)?.expect("markovian").combine().to_site_basis();
        monte_carlo_comparison(&state, &coeffs, &cfg.params, cfg.check.mc_samples, 60, &mut rng)
    };
    match run() {
        Ok(mc) => {
            let detail = format!("{} samples, seed {}, 60 bins", cfg.check.mc_samples, cfg.seed);
            vec![
                check_le("monte_carlo/density", mc.density, MC_DENSITY_TOL, detail.clone()),
                check_le("monte_carlo/j_unitary", mc.j_unitary, MC_CURRENT_TOL, detail.clone()),
                check_le("monte_carlo/drift_flux", mc.drift_flux, MC_CURRENT_TOL, detail),
            ]
        }
        Err(e) => vec![failed("monte_carlo", MC_CURRENT_TOL, &e)],
    }
}

/// Run the whole suite.
pub fn run_checks(cfg: &ScenarioConfig) -> CheckReport {
    let mut checks = coefficient_checks(cfg);
    checks.extend(stationary_checks(cfg));
    checks.extend(limit_checks(cfg));
    checks.extend(symmetry_checks(cfg));
    checks.extend(continuity_checks(cfg));
    checks.extend(monte_carlo_checks(cfg));
    let failed = checks.iter().filter(|c| !c.passed).count();
    CheckReport {
        passed: failed == 0,
        failed,
        checks,
    }
}
