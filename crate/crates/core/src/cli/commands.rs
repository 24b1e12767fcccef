// SPDX-License-Identifier: Apache-2.0

//! The `coeffs`, `evolve` and `sweep-dt` subcommands.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{
    build_drift_diffusion, evolve, exact_reference, stationary_limit, BathDiscretization, CovarianceState,
};
use crate::generators::{resolve_global, resolve_local, resolve_tcg, GeneratorCoefficients, ResolvedGenerator};
use crate::transport::{
    default_grid, energy_balance, energy_continuity_residual, energy_rhs_exact_or_local, energy_rhs_global,
    excitation_current, occupation, probability_continuity_residual, probability_currents, Approach, EnergyBalance,
    EnergyTransportReport, ResidualReport,
};
use crate::Result;

use super::config::{ApproachKind, ScenarioConfig};
use super::output::{
    delta_t_tag, format_float, format_opt, out_path, trajectory_header, trajectory_row, write_csv, write_text,
};
use super::CliError;

/// One approach at one coarse-graining time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Job {
    pub kind: ApproachKind,
    pub delta_t: Option<f64>,
}

impl Job {
    /// File-name tag, e.g. `local` or `tcg_dt0.01`.
    pub fn tag(&self) -> String {
        match self.delta_t {
            Some(dt) => format!("{}_{}", self.kind.name(), delta_t_tag(dt)),
            None => self.kind.name().to_string(),
        }
    }

    pub fn approach(&self) -> Approach {
        match self.kind {
            ApproachKind::Exact => Approach::Exact,
            ApproachKind::Local => Approach::Local,
            ApproachKind::Global => Approach::Global,
            ApproachKind::Tcg => Approach::Tcg {
                delta_t: self.delta_t.expect("tcg jobs carry delta_t"),
            },
        }
    }
}

/// Jobs of a scenario in output order: approaches as listed, TCG expanded
/// over its grid.
pub fn jobs(cfg: &ScenarioConfig) -> Vec<Job> {
    let mut out = Vec::new();
    for &kind in &cfg.approaches {
        if kind == ApproachKind::Tcg {
            out.extend(cfg.tcg.delta_ts().into_iter().map(|dt| Job {
                kind,
                delta_t: Some(dt),
            }));
        } else {
            out.push(Job { kind, delta_t: None });
        }
    }
    out
}

/// Resolved generator of a Markovian job, with the debug corruption
/// applied. `None` for the exact reference.
pub fn resolve_job(cfg: &ScenarioConfig, job: &Job) -> Result<Option<ResolvedGenerator>> {
    let p = &cfg.params;
    let q = &cfg.quadrature;
    let mut gen = match job.kind {
        ApproachKind::Exact => return Ok(None),
        ApproachKind::Local => resolve_local(p, q)?,
        ApproachKind::Global => resolve_global(p, q)?,
        ApproachKind::Tcg => resolve_tcg(p, job.delta_t.expect("tcg jobs carry delta_t"), q, cfg.tcg.options())?,
    };
    if cfg.debug.corrupt_gamma_sign {
        for terms in gen.baths.iter_mut() {
            terms.gamma_minus = -terms.gamma_minus;
        }
    }
    Ok(Some(gen))
}

/// Middle-site balance of a job's continuity equation at `s` (site basis).
/// The global balance uses its closed form, the exact one the hopping term.
pub fn balance(
    cfg: &ScenarioConfig,
    job: &Job,
    gen: Option<&ResolvedGenerator>,
    s: &CovarianceState,
) -> Result<EnergyBalance> {
    match (job.kind, gen) {
        (ApproachKind::Global, _) if !cfg.debug.corrupt_gamma_sign => {
            energy_rhs_global(s, &cfg.params, &cfg.quadrature)
        }
        (_, Some(g)) => Ok(energy_balance(s, g)),
        (_, None) => Ok(EnergyBalance {
            rhs: energy_rhs_exact_or_local(s, &cfg.params),
            a_coeff: -cfg.params.g,
            q_left: 0.0,
            q_right: 0.0,
        }),
    }
}

/// `coeffs`: one JSON dump per Markovian job, in its native basis.
pub fn cmd_coeffs(cfg: &ScenarioConfig, out: &Path) -> std::result::Result<Vec<String>, CliError> {
    let jobs: Vec<Job> = jobs(cfg)
        .into_iter()
        .filter(|j| j.kind != ApproachKind::Exact)
        .collect();
    let dumps: Vec<(String, String)> = jobs
        .par_iter()
        .map(|job| -> Result<(String, String)> {
            let gen = resolve_job(cfg, job)?.expect("markovian job");
            Ok((format!("coeffs_{}.json", job.tag()), gen.combine().to_json_string()))
        })
        .collect::<Result<_>>()?;
    for (name, text) in &dumps {
        write_text(&out_path(out, name), text)?;
    }
    if cfg.has(ApproachKind::Exact) {
        eprintln!("note: the exact reference has no generator coefficients; skipped");
    }
    Ok(dumps.into_iter().map(|(n, _)| n).collect())
}

/// Transport CSV header.
pub fn transport_header() -> Vec<String> {
    [
        "approach", "delta_t", "t", "j12", "j23", "q_left", "q_right", "n2_rate", "residual",
    ]
    .map(String::from)
    .to_vec()
}

fn transport_row(r: &EnergyTransportReport) -> Vec<String> {
    let opt = |v: f64| if v.is_nan() { String::new() } else { format_float(v) };
    vec![
        r.approach.name().to_string(),
        format_opt(r.approach.delta_t()),
        format_float(r.t),
        format_float(r.j12),
        format_float(r.j23),
        format_float(r.q_left),
        format_float(r.q_right),
        opt(r.n2_rate),
        opt(r.residual),
    ]
}

/// Second-order finite-difference derivative of uniformly sampled values:
/// central inside, one-sided at the ends. `None` below three samples.
fn fd_derivative(values: &[f64], h: f64) -> Option<Vec<f64>> {
    let n = values.len();
    if n < 3 {
        return None;
    }
    Some(
        (0..n)
            .map(|i| match i {
                0 => (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h),
                i if i == n - 1 => (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * h),
                i => (values[i + 1] - values[i - 1]) / (2.0 * h),
            })
            .collect(),
    )
}

#[derive(Debug, Serialize)]
struct ResidualJson {
    max_residual: f64,
    coarse_residual: f64,
    observed_order: f64,
    step: f64,
}

impl From<ResidualReport> for ResidualJson {
    fn from(r: ResidualReport) -> Self {
        Self {
            max_residual: r.max_residual,
            coarse_residual: r.coarse_residual,
            observed_order: r.observed_order,
            step: r.step,
        }
    }
}

#[derive(Debug, Serialize)]
struct EvolveSummary {
    approach: &'static str,
    delta_t: Option<f64>,
    samples: usize,
    energy_residual: Option<ResidualJson>,
    spatial_residual: Option<ResidualJson>,
    recurrence_time: Option<f64>,
    warnings: Vec<String>,
}

struct EvolveOutput {
    job: Job,
    states: Vec<CovarianceState>,
    reports: Vec<EnergyTransportReport>,
    spatial_rows: Vec<Vec<String>>,
    summary: EvolveSummary,
}

fn run_job(cfg: &ScenarioConfig, job: &Job) -> Result<EvolveOutput> {
    let samples = cfg.evolve.sample_times();
    let tol = cfg.evolve.tolerance();
    let state0 = CovarianceState::from_blocks(
        &crate::linalg::CMat3::identity(),
        &crate::linalg::CMat3::zeros(),
        cfg.evolve.displacement(),
        0.0,
    );
    let gen = resolve_job(cfg, job)?;
    let coeffs: Option<GeneratorCoefficients> = gen.as_ref().map(|g| g.combine().to_site_basis());
    let mut warnings = Vec::new();
    let mut recurrence_time = None;
    let states = match &coeffs {
        Some(c) => evolve(&state0, &build_drift_diffusion(c)?, &samples, &tol)?,
        None => {
            let disc = BathDiscretization::new(
                cfg.bath.modes_per_bath,
                cfg.bath.omega_max_factor * cfg.params.omega_c,
                cfg.params.omega_c,
            )?;
            let traj = exact_reference(&cfg.params, &disc, &state0, &samples, &tol)?;
            recurrence_time = Some(traj.recurrence_time);
            warnings.extend(traj.warning);
            traj.states
        }
    };

    let balances: Vec<EnergyBalance> = states
        .iter()
        .map(|s| balance(cfg, job, gen.as_ref(), s))
        .collect::<Result<_>>()?;
    let n2: Vec<f64> = states.iter().map(|s| occupation(s, 1)).collect();
    let rates = fd_derivative(&n2, cfg.evolve.step);
    let reports = states
        .iter()
        .zip(&balances)
        .enumerate()
        .map(|(i, (s, b))| {
            let n2_rate = rates.as_ref().map_or(f64::NAN, |r| r[i]);
            EnergyTransportReport {
                approach: job.approach(),
                t: s.t,
                j12: excitation_current(s, 0, 1),
                j23: excitation_current(s, 1, 2),
                q_left: b.q_left,
                q_right: b.q_right,
                n2_rate,
                residual: (n2_rate - b.rhs).abs(),
            }
        })
        .collect();

    let energy_residual = if states.len() >= 5 {
        let rhs = |s: &CovarianceState| balance(cfg, job, gen.as_ref(), s).map(|b| b.rhs);
        Some(energy_continuity_residual(&states, rhs, None)?.into())
    } else {
        if !states.is_empty() {
            warnings.push("fewer than 5 samples; no continuity residual".into());
        }
        None
    };

    let mut spatial_rows = Vec::new();
    let mut spatial_residual = None;
    if cfg.spatial.enabled && !states.is_empty() {
        match &coeffs {
            None => warnings.push("spatial fields need a generator; skipped for the exact reference".into()),
            Some(c) => {
                let grid = default_grid(&states, cfg.params.omega0, cfg.spatial.points, cfg.spatial.width_sigmas)?;
                for s in states.iter().step_by(cfg.spatial.stride) {
                    let f = probability_currents(s, c, &grid, &cfg.params)?;
                    if let Some(w) = &f.warning {
                        warnings.push(format!("t = {}: {w}", format_float(s.t)));
                    }
                    for i in 0..grid.len() {
                        spatial_rows.push(
                            [
                                s.t,
                                f.grid[i],
                                f.density[i],
                                f.j_unitary[i],
                                f.j_dissipative[i],
                                f.q_term[i],
                                f.p_term[i],
                            ]
                            .map(format_float)
                            .to_vec(),
                        );
                    }
                }
                if states.len() >= 5 {
                    spatial_residual = Some(probability_continuity_residual(&states, c, &grid, &cfg.params)?.into());
                }
            }
        }
    }

    Ok(EvolveOutput {
        job: *job,
        summary: EvolveSummary {
            approach: job.kind.name(),
            delta_t: job.delta_t,
            samples: states.len(),
            energy_residual,
            spatial_residual,
            recurrence_time,
            warnings,
        },
        states,
        reports,
        spatial_rows,
    })
}

/// `evolve`: per-job trajectory CSVs and final-state JSON, one transport CSV,
/// optional spatial CSVs and a JSON summary.
pub fn cmd_evolve(cfg: &ScenarioConfig, out: &Path) -> std::result::Result<(), CliError> {
    let jobs = jobs(cfg);
    let outputs: Vec<EvolveOutput> = jobs.par_iter().map(|j| run_job(cfg, j)).collect::<Result<_>>()?;
    let mut transport_rows = Vec::new();
    for o in &outputs {
        let rows: Vec<Vec<String>> = o.states.iter().map(trajectory_row).collect();
        write_csv(
            &out_path(out, &format!("trajectory_{}.csv", o.job.tag())),
            &trajectory_header(),
            &rows,
        )?;
        transport_rows.extend(o.reports.iter().map(transport_row));
        if let Some(last) = o.states.last() {
            let path = out_path(out, &format!("state_{}.json", o.job.tag()));
            write_text(&path, &(last.to_json_string() + "\n"))?;
        }
        if cfg.spatial.enabled && o.job.kind != ApproachKind::Exact {
            let header = ["t", "x", "density", "j_unitary", "j_dissipative", "q_term", "p_term"].map(String::from);
            write_csv(
                &out_path(out, &format!("spatial_{}.csv", o.job.tag())),
                &header,
                &o.spatial_rows,
            )?;
        }
        for w in &o.summary.warnings {
            eprintln!("warning [{}]: {w}", o.job.tag());
        }
    }
    write_csv(&out_path(out, "transport.csv"), &transport_header(), &transport_rows)?;
    let summaries: Vec<&EvolveSummary> = outputs.iter().map(|o| &o.summary).collect();
    let json = serde_json::to_string_pretty(&summaries).expect("summaries serialize");
    write_text(&out_path(out, "evolve_summary.json"), &(json + "\n"))
}

/// Stationary observables of one generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryPoint {
    pub balance: EnergyBalance,
    pub j12: f64,
    pub j23: f64,
}

/// Stationary limit from the vacuum and its middle-site balance.
pub fn stationary_point(cfg: &ScenarioConfig, job: &Job) -> Result<StationaryPoint> {
    let gen = resolve_job(cfg, job)?.expect("markovian job");
    let dd = build_drift_diffusion(&gen.combine().to_site_basis())?;
    let ss = stationary_limit(&dd, &CovarianceState::vacuum(0.0))?;
    Ok(StationaryPoint {
        balance: balance(cfg, job, Some(&gen), &ss)?,
        j12: excitation_current(&ss, 0, 1),
        j23: excitation_current(&ss, 1, 2),
    })
}

/// Outcome of a Δt sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub rows: Vec<(f64, StationaryPoint)>,
    pub global: StationaryPoint,
    pub failures: Vec<(f64, String)>,
}

/// Stationary sink/source terms of the TCG generator along the Δt grid,
/// plus the global reference.
pub fn sweep_dt(cfg: &ScenarioConfig) -> Result<Sweep> {
    let dts = cfg.tcg.delta_ts();
    let results: Vec<(f64, Result<StationaryPoint>)> = dts
        .par_iter()
        .map(|&dt| {
            let job = Job {
                kind: ApproachKind::Tcg,
                delta_t: Some(dt),
            };
            (dt, stationary_point(cfg, &job))
        })
        .collect();
    let global = stationary_point(
        cfg,
        &Job {
            kind: ApproachKind::Global,
            delta_t: None,
        },
    )?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (dt, r) in results {
        match r {
            Ok(p) => rows.push((dt, p)),
            Err(e) => failures.push((dt, e.to_string())),
        }
    }
    Ok(Sweep { rows, global, failures })
}

/// `sweep-dt`: writes `sweep_dt.csv` and `sweep_dt_failures.csv`.
pub fn cmd_sweep_dt(cfg: &ScenarioConfig, out: &Path) -> std::result::Result<Sweep, CliError> {
    if !cfg.has(ApproachKind::Tcg) {
        return Err(CliError::Config("sweep-dt needs tcg in the approach list".into()));
    }
    let sweep = sweep_dt(cfg)?;
    let header = [
        "approach", "delta_t", "q_left", "q_right", "j12", "j23", "rhs", "a_coeff",
    ]
    .map(String::from);
    let row = |name: &str, dt: f64, p: &StationaryPoint| {
        let mut r = vec![name.to_string()];
        r.extend(
            [
                dt,
                p.balance.q_left,
                p.balance.q_right,
                p.j12,
                p.j23,
                p.balance.rhs,
                p.balance.a_coeff,
            ]
            .map(format_float),
        );
        r
    };
    let mut rows: Vec<Vec<String>> = sweep.rows.iter().map(|(dt, p)| row("tcg", *dt, p)).collect();
    let dts = cfg.tcg.delta_ts();
    for dt in [dts[0], dts[dts.len() - 1]] {
        rows.push(row("global", dt, &sweep.global));
    }
    write_csv(&out_path(out, "sweep_dt.csv"), &header, &rows)?;
    let failures: Vec<Vec<String>> = sweep
        .failures
        .iter()
        .map(|(dt, e)| vec![format_float(*dt), e.clone()])
        .collect();
    write_csv(
        &out_path(out, "sweep_dt_failures.csv"),
        &["delta_t".to_string(), "error".to_string()],
        &failures,
    )?;
    if !sweep.failures.is_empty() {
        eprintln!(
            "sweep-dt: {} of {} delta_t values failed (see sweep_dt_failures.csv); first: delta_t = {}: {}",
            sweep.failures.len(),
            dts.len(),
            format_float(sweep.failures[0].0),
            sweep.failures[0].1
        );
    }
    if sweep.rows.is_empty() {
        return Err(CliError::Numeric(crate::Error::Singular(
            "no delta_t value produced a stationary state".into(),
        )));
    }
    Ok(sweep)
}
