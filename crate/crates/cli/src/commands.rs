use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;

use decoherence::analysis::{
    nogo_check, pointer_basis_check, position_basis, purity_sieve, timescales, NogoConfig, TimescaleParams,
};
use decoherence::coefficients::Degeneracy;
use decoherence::evolution::{
    evolve_master, finite_difference_pure, finite_difference_stable_dt, heat_kernel_evolve, pure_decoherence_closed, semiclassical_evolve,
    EvolutionSpec, HamiltonField, Mode, TrajectoryRow,
};
use decoherence::hilbert::{DensityOperator, SpaceTag};
use decoherence::scattering::{kernel_csv, localization_kernel, total_rate};
use decoherence::weyl::{gaussian_state, inverse_wigner, wigner_transform, Poly};
use decoherence::{DensityOperator64, Error, PhaseSpaceGrid64, WignerFunction64};

use crate::config::{sha256_hex, HamiltonianConfig, Scenario};
use crate::output::{header, Artifacts};
use crate::scenario::{gas_wavenumber, Coefficients};

/// Command-line overrides shared by every scenario command.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub snapshot_every: Option<usize>,
}

pub fn load(path: &Path, o: &Overrides) -> Result<Scenario> {
    let mut s = Scenario::load(path)?;
    if let Some(seed) = o.seed {
        s.config.seed = seed;
    }
    if let Some(n) = o.snapshot_every {
        s.config.output.snapshot_every = n;
    }
    if let Some(dir) = &o.out_dir {
        s.config.output.directory = dir.clone();
    }
    Ok(s)
}

/// One recorded time of a run.
struct Record {
    step: usize,
    t: f64,
    rho: DensityOperator64,
    wigner: Option<WignerFunction64>,
}

/// Adds a remediation hint to numerical aborts.
fn with_hint(e: Error) -> anyhow::Error {
    let hint = match &e {
        Error::BoundaryMass { .. } => Some("widen [grid] x_min/x_max or shorten evolution.t_final"),
        Error::Unstable { .. } => Some("lower evolution.dt to the suggested bound"),
        Error::CellTooSmall { .. } => Some("enlarge the phase-space cell"),
        _ => None,
    };
    match hint {
        Some(h) => anyhow::Error::new(e).context(format!("evolution aborted (hint: {h})")),
        None => anyhow::Error::new(e),
    }
}

pub fn run(path: &Path, o: &Overrides) -> Result<Vec<PathBuf>> {
    let s = load(path, o)?;
    let evo = s.config.evolution.as_ref().context("run needs an [evolution] section")?;
    let mode: Mode = evo.mode.parse()?;
    let coeffs = s.coefficients()?;
    let mut spec = EvolutionSpec::new(mode, evo.t_final, evo.dt)?.with_hbar_order(evo.hbar_order)?.with_flow(evo.flow);
    spec.stationary_kernel = evo.stationary_kernel;
    spec.epsilon = evo.epsilon;
    let steps = spec.steps();
    // master runs act on a finite collective space and have no snapshots
    let snap = if mode.is_master() { 0 } else { s.config.output.snapshot_every };
    let record = evo.record_every.max(1);
    let kept = |k: usize| k == 0 || k == steps || k % record == 0 || (snap > 0 && k % snap == 0);
    let wants_snapshot = |k: usize| snap > 0 && (k % snap == 0 || k == steps);
    let mut art = Artifacts::new(&s.hash);

    let (records, h_c, pair, expected) = if mode.is_master() {
        let (problem, rho0, levels) = s.master_problem()?;
        info!("master run: d_c = {}, d_e = {}, {steps} steps", problem.h_c.dim(), problem.env.dim());
        let traj = evolve_master(&rho0, &problem, &spec).map_err(with_hint)?;
        let dt = spec.step();
        let records = traj
            .into_iter()
            .map(|(t, rho)| Record { step: (t / dt).round() as usize, t, rho, wigner: None })
            .filter(|r| kept(r.step))
            .collect();
        (records, Some(problem.h_c), Some(levels), None)
    } else {
        let grid = s.grid()?;
        let (rho0, pair) = s.grid_state(&grid)?;
        let h_c = s.grid_hamiltonian(&grid)?;
        let records = phase_space_run(&s, &grid, &rho0, &coeffs, &spec, &kept, &wants_snapshot)?;
        let g = &coeffs.g;
        let pure_pp = g.gxx() == 0.0 && g.gxp() == 0.0 && !(mode == Mode::Semiclassical && evo.flow);
        let expected = match pair {
            Some((a, b)) if pure_pp => {
                let d = grid.x(b) - grid.x(a);
                Some(g.gpp() * d * d / (grid.hbar * grid.hbar))
            }
            _ => None,
        };
        (records, h_c, pair, expected)
    };

    let mut traj = format!("{}\n", TrajectoryRow::<f64>::HEADER);
    let mut analysis = String::from("t,purity,coherence,decay_rate,expected_rate\n");
    let c0 = pair.map(|(a, b)| records[0].rho.mat()[(a, b)].norm());
    for r in &records {
        let row = TrajectoryRow::from_state(r.t, &r.rho, h_c.as_ref());
        traj += &row.to_csv();
        traj.push('\n');
        let coherence = match (pair, c0) {
            (Some((a, b)), Some(c0)) if c0 > 0.0 => r.rho.mat()[(a, b)].norm() / c0,
            _ => f64::NAN,
        };
        let rate = if r.t > 0.0 { -coherence.ln() / r.t } else { f64::NAN };
        let _ = writeln!(analysis, "{:e},{:e},{:e},{:e},{:e}", r.t, row.purity, coherence, rate, expected.unwrap_or(f64::NAN));
        if let Some(w) = &r.wigner {
            art.add(format!("wigner_t{:05}.csv", r.step), &w.to_csv());
        }
    }
    art.add("trajectory.csv", &traj);
    art.add("coeffs.csv", &format!("{}\n{}\n", Coefficients::HEADER, coeffs.row()));
    art.add("analysis.csv", &analysis);
    if !mode.is_master() {
        diagnostics(&s, &coeffs, evo.t_final, &mut art, &records[0].rho)?;
    }
    let written = art.write(&s.config.output.directory)?;
    info!("wrote {} files to {}", written.len(), s.config.output.directory.display());
    Ok(written)
}

fn phase_space_run(
    s: &Scenario,
    grid: &PhaseSpaceGrid64,
    rho0: &DensityOperator64,
    coeffs: &Coefficients,
    spec: &EvolutionSpec<f64>,
    kept: &dyn Fn(usize) -> bool,
    wants_snapshot: &dyn Fn(usize) -> bool,
) -> Result<Vec<Record>> {
    let g = &coeffs.g;
    let steps = spec.steps();
    let dt = spec.step();
    let keep: Vec<usize> = (0..=steps).filter(|&k| kept(k)).collect();
    let time = |k: usize| dt * k as f64;
    let from_wigner = |k: usize, w: WignerFunction64| Record {
        step: k,
        t: time(k),
        rho: inverse_wigner(&w),
        wigner: wants_snapshot(k).then_some(w),
    };
    let w0 = wigner_transform(rho0, grid)?;
    let mut out = Vec::with_capacity(keep.len());
    match spec.mode {
        Mode::PureDecoherenceClosed => {
            for &k in &keep {
                let rho = pure_decoherence_closed(rho0, g, time(k), grid).map_err(with_hint)?;
                let wigner = if wants_snapshot(k) { Some(wigner_transform(&rho, grid)?) } else { None };
                out.push(Record { step: k, t: time(k), rho, wigner });
            }
        }
        Mode::HeatKernel => {
            for &k in &keep {
                let w = if k == 0 { w0.clone() } else { heat_kernel_evolve(&w0, g, time(k)).map_err(with_hint)? };
                out.push(from_wigner(k, w));
            }
        }
        Mode::FiniteDifference => {
            let mut w = w0.clone();
            let mut prev = 0;
            for &k in &keep {
                if k > prev {
                    w = finite_difference_pure(&w, g, time(k) - time(prev), dt).map_err(with_hint)?;
                }
                prev = k;
                out.push(from_wigner(k, w.clone()));
            }
        }
        Mode::Semiclassical => {
            let field = match (&s.config.system.hamiltonian, spec.include_hamiltonian_flow) {
                (Some(HamiltonianConfig::Harmonic { mass, omega }), _) => HamiltonField::harmonic(grid, *mass, *omega)?,
                (_, false) => HamiltonField::from_poly(grid, Poly::zero())?,
                _ => bail!("semiclassical flow needs a harmonic system.hamiltonian"),
            };
            // the integrator records every `record_every` steps; ask for all
            // and keep the requested ones
            let all = spec.clone().with_record_every(1);
            let traj = semiclassical_evolve(&w0, &field, Some(g), &all).map_err(with_hint)?;
            for (k, (_, w)) in traj.into_iter().enumerate() {
                if kept(k) {
                    out.push(from_wigner(k, w));
                }
            }
        }
        other => bail!("mode {other} does not run on a phase-space grid"),
    }
    Ok(out)
}

/// Optional einselection diagnostics of a phase-space run.
fn diagnostics(s: &Scenario, coeffs: &Coefficients, t_final: f64, art: &mut Artifacts, rho0: &DensityOperator64) -> Result<()> {
    let a = &s.config.analysis;
    if !(a.pointer || a.nogo || a.sieve) {
        return Ok(());
    }
    let grid = s.grid()?;
    let g = &coeffs.g;
    if a.pointer {
        let r = pointer_basis_check(g, &grid, &position_basis(grid.n()), a.samples, s.config.seed)?;
        art.add("pointer.csv", &r.to_table());
    }
    if a.nogo {
        art.add("nogo.csv", &nogo_table(s, coeffs, &grid)?);
    }
    if a.sieve {
        let width = coherent_width(s);
        let centre = (0.5 * (grid.x_min + grid.x_max), 0.5 * (grid.p_min + grid.p_max));
        let packet = |sigma: f64| DensityOperator::pure(SpaceTag::Collective, &gaussian_state(&grid, centre.0, centre.1, sigma));
        let candidates = vec![
            ("initial".to_string(), rho0.clone()),
            ("coherent".to_string(), packet(width / 2f64.sqrt())),
            ("x_squeezed".to_string(), packet(width / 4.0)),
            ("p_squeezed".to_string(), packet(width * 2.0)),
        ];
        let window = a.sieve_window.unwrap_or(t_final);
        let r = purity_sieve(&candidates, g, &grid, window, a.samples.max(2)).map_err(with_hint)?;
        art.add("sieve.csv", &r.to_table());
    }
    Ok(())
}

fn coherent_width(s: &Scenario) -> f64 {
    s.config.analysis.coherent_width.unwrap_or_else(|| s.units().0)
}

fn nogo_table(s: &Scenario, coeffs: &Coefficients, grid: &PhaseSpaceGrid64) -> Result<String> {
    if coeffs.g.classification == Degeneracy::Degenerate {
        return Ok("status\ninapplicable\n".into());
    }
    let report = nogo_check(&coeffs.g, grid, &NogoConfig::standard(coherent_width(s), s.config.seed))?;
    Ok(format!("{}status\n{}\n", report.to_table(), if report.passes { "pass" } else { "fail" }))
}

pub fn coeffs(path: &Path, o: &Overrides) -> Result<String> {
    let s = load(path, o)?;
    let c = s.coefficients()?;
    Ok(format!("{}{}\n{}\n", header(&s.hash), Coefficients::HEADER, c.row()))
}

pub fn nogo(path: &Path, o: &Overrides) -> Result<String> {
    let s = load(path, o)?;
    let c = s.coefficients()?;
    let body = if c.g.classification == Degeneracy::Degenerate {
        "status\ninapplicable\n".to_string()
    } else {
        nogo_table(&s, &c, &s.grid()?)?
    };
    Ok(format!("{}{body}", header(&s.hash)))
}

pub fn kernel(path: &Path, o: &Overrides) -> Result<(PathBuf, String)> {
    let s = load(path, o)?;
    let gas_cfg = s.config.gas.as_ref().context("kernel needs a [gas] section")?;
    let gas = s.gas()?;
    let k = gas_wavenumber(gas_cfg, s.hbar());
    let xi_max = gas_cfg.xi_max.unwrap_or(20.0 / k);
    let n = gas_cfg.points;
    let xi: Vec<f64> = (0..n).map(|i| xi_max * i as f64 / (n - 1) as f64).collect();
    let f = localization_kernel(&gas, &xi)?;
    let mut art = Artifacts::new(&s.hash);
    art.add("kernel.csv", &kernel_csv(&xi, &f));
    let written = art.write(&s.config.output.directory)?;
    Ok((written[0].clone(), format!("total_rate,{:e}\n", total_rate(&gas)?)))
}

#[derive(Clone, Copy, Debug)]
pub struct TimescaleArgs {
    pub m: f64,
    pub t: f64,
    pub gamma: f64,
    pub omega: f64,
    pub dx: f64,
    pub hbar: f64,
    pub min_ratio: f64,
}

pub fn timescales_report(a: &TimescaleArgs) -> Result<String> {
    let p = TimescaleParams { mass: a.m, temperature: a.t, gamma_pp: a.gamma, omega: a.omega, delta_x: a.dx, hbar: a.hbar };
    let ts = timescales(&p)?;
    let key = format!("m={:e} T={:e} gamma={:e} omega={:e} dx={:e} hbar={:e} min_ratio={:e}", a.m, a.t, a.gamma, a.omega, a.dx, a.hbar, a.min_ratio);
    Ok(format!(
        "{}t_dec,t_mix,t_wp,ordered\n{:e},{:e},{:e},{}\n",
        header(&sha256_hex(key.as_bytes())),
        ts.t_dec,
        ts.t_mix,
        ts.t_wp,
        ts.ordered(a.min_ratio)
    ))
}

/// Quick internal consistency checks; returns the report and whether all
/// of them passed.
pub fn selftest() -> Result<(String, bool)> {
    use decoherence::coefficients::{decoherence_coeffs, dissipation_coeffs, ohmic_modes, oscillator_bath, BathCoupling};
    use decoherence::DecoherenceTensor64;

    let mut lines = String::new();
    let mut all = true;
    let mut check = |name: &str, value: f64, limit: f64| {
        let pass = value <= limit;
        all &= pass;
        let _ = writeln!(lines, "{} {name} {value:e} {limit:e}", if pass { "PASS" } else { "FAIL" });
    };

    // square grid, dx = dp, so x - x' never wraps for a compact cat
    let n = 64;
    let grid = PhaseSpaceGrid64::centered(n, (2.0 * std::f64::consts::PI * n as f64).sqrt(), 1.0)?;
    let psi = decoherence::weyl::cat_state(&grid, 0.0, 4.0, 0.0, 0.8);
    let rho = DensityOperator::pure(SpaceTag::Collective, &psi);
    let g = DecoherenceTensor64::from_components(0.0, 0.0, 0.02);
    let t = 2.0;
    let back = inverse_wigner(&wigner_transform(&rho, &grid)?);
    check("wigner_round_trip", (back.mat() - rho.mat()).camax(), 1e-10);
    let closed = pure_decoherence_closed(&rho, &g, t, &grid)?;
    let dt = 0.25 * finite_difference_stable_dt(&grid, &g)?;
    let fd = inverse_wigner(&finite_difference_pure(&wigner_transform(&rho, &grid)?, &g, t, dt)?);
    check("closed_vs_finite_difference", (fd.mat() - closed.mat()).norm() / closed.mat().norm(), 1e-3);

    let modes = ohmic_modes(0.1, 0.125, 64, 8.0);
    let temperature = 100.0;
    let spec = oscillator_bath::<f64>(&modes, temperature, 24, BathCoupling::PositionOnly, 1.0, 0.0)?;
    let ratio: f64 = decoherence_coeffs(&spec).gpp() / (temperature * dissipation_coeffs(&spec).friction_rate(1.0));
    check("fluctuation_dissipation_high_t", (ratio - 1.0).abs(), 1e-2);

    let w = wigner_transform(&rho, &grid)?;
    check("wigner_normalization", (w.norm() - 1.0).abs(), 1e-10);
    Ok((lines, all))
}
