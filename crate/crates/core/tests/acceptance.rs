//! Acceptance suite: one PASS/FAIL line per criterion with its measured
//! value, tolerance and wall time.
//!
//! Criteria listed in `EXPECTED_FAILURES` are unattainable as stated;
//! they are still computed in full and reported as FAIL. The process
//! exits non-zero if any other criterion fails, or if an expected
//! failure starts passing.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use decoherence::analysis::{
    cell_state, nogo_check, pointer_basis_check, position_basis, purity_sieve, timescales, NogoConfig, TimescaleParams,
};
use decoherence::coefficients::{
    band_modes, decoherence_coeffs, dissipation_coeffs, ohmic_modes, oscillator_bath, BathCoupling, CouplingSpectrum,
    DecoherenceTensor,
};
use decoherence::evolution::{
    evolve_master, finite_difference_pure, finite_difference_stable_dt, heat_kernel_evolve, pure_decoherence_closed,
    semiclassical_evolve, EvolutionSpec, HamiltonField, MasterProblem, Mode,
};
use decoherence::hilbert::{thermal_state, DensityOperator, Operator, SpaceTag};
use decoherence::projection::{
    mean_coupling, project_p, relevant_averages, renormalize_coupling, ProjectionContext,
};
use decoherence::rng::{random_density, random_hermitian, substream};
use decoherence::scattering::{effective_gpp, localization_kernel, quadratic_probe, total_rate, GasSpec};
use decoherence::weyl::{
    cat_state, gaussian_state, moyal_product, wigner_transform, inverse_wigner, OperatorSymbol, PhaseCell,
    PhaseSpaceGrid, SymbolBlock, WignerFunction,
};
use decoherence::C;

/// Criteria whose stated thresholds cannot be met; see the per-criterion notes.
const EXPECTED_FAILURES: &[u32] = &[9, 10];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn run(id: u32, name: &str, budget_s: u64, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let in_time = elapsed < Duration::from_secs(budget_s);
    let pass = out.pass && in_time;
    let expected = EXPECTED_FAILURES.contains(&id);
    let tag = match (pass, expected) {
        (true, false) => "PASS",
        (false, false) => "FAIL",
        (false, true) => "FAIL (expected)",
        (true, true) => "PASS (unexpected)",
    };
    println!(
        "{tag} {id:>2} {name}: {} [{:.2}s / {budget_s}s]",
        out.detail,
        elapsed.as_secs_f64()
    );
    pass != expected
}

fn c(re: f64) -> C<f64> {
    C::new(re, 0.0)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

// ---------------------------------------------------------------- 1

fn sz() -> DMatrix<C<f64>> {
    DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0), c(-1.0)]))
}

fn sx() -> DMatrix<C<f64>> {
    DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
}

fn embed(op: &DMatrix<C<f64>>, site: usize, sites: usize) -> DMatrix<C<f64>> {
    (0..sites).fold(DMatrix::from_element(1, 1, c(1.0)), |acc, j| {
        acc.kronecker(&if j == site { op.clone() } else { DMatrix::identity(2, 2) })
    })
}

struct SpinBathRun {
    tau_c: f64,
    t_half: Option<f64>,
    max_error: f64,
}

/// Qubit `(ω_c/2)σ_z` coupled by `σ_z ⊗ Σ λ_i σ_x^i` to spins `(ω_i/2)σ_z^i`.
/// `τ_c` is the 1/e time of the symmetrized bath correlation
/// `Re Tr(ρ_e B(τ) B)`; `t_half` is when the exact coherence halves; the
/// Markov error is the largest relative coherence error up to `t_half`
/// (or the horizon).
fn spin_bath_run(lams: &[f64], freqs: &[f64], beta: f64, horizon: f64) -> SpinBathRun {
    let m = freqs.len();
    let de = 1 << m;
    let mut he = DMatrix::zeros(de, de);
    let mut b = DMatrix::zeros(de, de);
    for (i, &w) in freqs.iter().enumerate() {
        he += embed(&sz(), i, m) * c(w / 2.0);
        b += embed(&sx(), i, m) * c(lams[i]);
    }
    let env = thermal_state(&Operator::new(SpaceTag::Environment, he.clone()).unwrap(), beta).unwrap();
    let eig = he.symmetric_eigen();
    let corr = |tau: f64| {
        let u = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues.map(|e| C::new(0.0, -e * tau).exp()))
            * eig.eigenvectors.adjoint();
        (env.rho.mat() * (u.adjoint() * &b * &u) * &b).trace().re
    };
    let c0 = corr(0.0);
    let tau_c = (1..200_000).map(|k| k as f64 * 1e-4).find(|&t| corr(t).abs() <= c0 / std::f64::consts::E).unwrap_or(f64::INFINITY);

    let hc = Operator::new(SpaceTag::Collective, sz() * c(0.5)).unwrap();
    let h1 = Operator::new(SpaceTag::Composite, sz().kronecker(&b)).unwrap();
    let problem = MasterProblem::new(hc, h1, env, 1.0).unwrap();
    let plus = DVector::from_element(2, c(0.5f64.sqrt()));
    let rho = DensityOperator::pure(SpaceTag::Collective, &plus);
    let spec = EvolutionSpec::new(Mode::MarkovMaster, horizon, 5e-4).unwrap().with_record_every(10);
    let markov = evolve_master(&rho, &problem, &spec).unwrap();
    let exact = evolve_master(&rho, &problem, &EvolutionSpec { mode: Mode::ExactOracle, ..spec }).unwrap();
    let mut t_half = None;
    let mut max_error: f64 = 0.0;
    for ((t, a), (_, e)) in markov.iter().zip(&exact) {
        let (ca, ce) = (a.mat()[(0, 1)].norm(), e.mat()[(0, 1)].norm());
        max_error = max_error.max(rel(ca, ce));
        if ce <= 0.25 {
            t_half = Some(*t);
            break;
        }
    }
    SpinBathRun { tau_c, t_half, max_error }
}

/// Three spins dephase the qubit by a bounded amount ~ Σ 2(2λ_i/ω_i)², so
/// halving the coherence needs the slow spin fairly strongly coupled;
/// the faster, more strongly coupled spins keep `τ_c` short.
fn oracle_equivalence() -> Outcome {
    let r = spin_bath_run(&[0.7, 1.4, 2.1], &[3.0, 8.0, 20.0], 0.5, 6.0);
    let ratio = r.t_half.map_or(0.0, |th| th / r.tau_c);
    outcome(
        ratio >= 10.0 && r.max_error <= 0.10,
        format!(
            "tau_c={:.3}, t_half={:.3} ({ratio:.1} tau_c, need >= 10), markov rel err {:.3} (tol 0.10)",
            r.tau_c,
            r.t_half.unwrap_or(f64::NAN),
            r.max_error
        ),
    )
}

// ---------------------------------------------------------------- 2, 3

/// Grid with `dx = dp = sqrt(2πħ/n)`.
fn square_grid(n: usize, hbar: f64) -> PhaseSpaceGrid<f64> {
    PhaseSpaceGrid::centered(n, (2.0 * PI * hbar * n as f64).sqrt(), hbar).unwrap()
}

fn degenerate_closed_form() -> Outcome {
    let g = square_grid(256, 1.0);
    let gpp = 0.05;
    let tensor = DecoherenceTensor::from_components(0.0, 0.0, gpp);
    let (sep, sigma) = (6.0, 0.7);
    let rho = DensityOperator::pure(SpaceTag::Collective, &cat_state(&g, 0.0, sep, 0.0, sigma));
    // interference between the packets decays by e^-1
    let t = 1.0 / (gpp * sep * sep);
    let w0 = wigner_transform(&rho, &g).unwrap();
    let dt = 0.25 * finite_difference_stable_dt(&g, &tensor).unwrap();
    let fd = inverse_wigner(&finite_difference_pure(&w0, &tensor, t, dt).unwrap());
    // closed form written out element by element
    let expected = DMatrix::from_fn(256, 256, |a, b| {
        let xi = g.x(a) - g.x(b);
        rho.mat()[(a, b)] * (-gpp * xi * xi * t).exp()
    });
    let err = (fd.mat() - &expected).norm() / expected.norm();
    let lib = pure_decoherence_closed(&rho, &tensor, t, &g).unwrap();
    let lib_err = (lib.mat() - &expected).norm() / expected.norm();
    outcome(err < 1e-3 && lib_err < 1e-12, format!("relative HS error {err:.2e} (tol 1e-3); closed form {lib_err:.1e}"))
}

fn gaussian_w(g: &PhaseSpaceGrid<f64>, sx: f64, sp: f64, cxp: f64) -> WignerFunction<f64> {
    let det = sx * sx * sp * sp - cxp * cxp;
    let values = DMatrix::from_fn(g.n(), g.n(), |j, k| {
        let (x, p) = (g.x(j), g.p(k));
        (-0.5 * (sp * sp * x * x - 2.0 * cxp * x * p + sx * sx * p * p) / det).exp()
    });
    let mut w = WignerFunction { grid: *g, values };
    let s = w.norm();
    w.values /= s;
    w
}

fn heat_kernel_vs_pde() -> Outcome {
    let g = square_grid(256, 1.0);
    let (gxx, gxp, gpp) = (0.04, 0.01, 0.06);
    let tensor = DecoherenceTensor::from_components(gxx, gxp, gpp);
    let w0 = gaussian_w(&g, 1.1, 0.9, 0.25);
    // smearing time: the kernel spreads over one ħ-cell, 2 g t = ħ/2 along the slowest direction
    let t = g.hbar / (4.0 * tensor.eigenvalues()[0]);
    let hk = heat_kernel_evolve(&w0, &tensor, t).unwrap();
    let dt = 0.5 * finite_difference_stable_dt(&g, &tensor).unwrap();
    let fd = finite_difference_pure(&w0, &tensor, t, dt).unwrap();
    let l2 = (&fd.values - &hk.values).norm() / hk.values.norm();
    let cov = |w: &WignerFunction<f64>| {
        [w.expectation(|x, _| x * x), w.expectation(|x, p| x * p), w.expectation(|_, p| p * p)]
    };
    let (s0, s1) = (cov(&w0), cov(&hk));
    let growth = [2.0 * gxx * t, 2.0 * gxp * t, 2.0 * gpp * t];
    let cov_err = (0..3).map(|i| (s1[i] - s0[i] - growth[i]).abs()).fold(0.0, f64::max);
    outcome(
        l2 < 1e-3 && cov_err < 1e-8,
        format!("t={t:.3}: L2 {l2:.2e} (tol 1e-3), covariance growth error {cov_err:.1e} (tol 1e-8)"),
    )
}

// ---------------------------------------------------------------- 4

/// `g^{pp} / (m T γ)` with `γ` the momentum damping rate `γ^{pp}/m`.
fn fdt_ratio(modes: &[(C<f64>, f64)], temperature: f64) -> (f64, f64) {
    let m = 1.0;
    let s = oscillator_bath(modes, temperature, 24, BathCoupling::PositionOnly, 1.0, 0.0).unwrap();
    let g = decoherence_coeffs(&s);
    let gamma = dissipation_coeffs(&s);
    (s.omega_cutoff, g.gpp() / (m * temperature * gamma.friction_rate(m)))
}

/// The high-temperature check runs on an ohmic and a narrow-band bath; the
/// low-temperature deviation needs the narrow band, as an ohmic bath's
/// discrete modes are dominated by ω → 0 where `ħω/T` stays small.
fn fluctuation_dissipation() -> Outcome {
    let ohmic = ohmic_modes(0.1, 0.125, 64, 8.0);
    let narrow = band_modes(0.05, 0.75, 1.0, 32);
    let (cut_o, hot_o) = fdt_ratio(&ohmic, 100.0);
    let (cut_n, hot_n) = fdt_ratio(&narrow, 100.0);
    let (_, cold_n) = fdt_ratio(&narrow, cut_n);
    let pass = (cut_o - 1.0).abs() < 1e-2 && rel(hot_o, 1.0) < 0.01 && rel(hot_n, 1.0) < 0.01 && rel(cold_n, 1.0) > 0.05;
    outcome(
        pass,
        format!(
            "T=100 hbar Omega: ohmic {hot_o:.4}, band {hot_n:.4} (1 +- 0.01); T=hbar Omega: band {cold_n:.4} (deviation > 0.05)"
        ),
    )
}

// ---------------------------------------------------------------- 5

fn positivity_and_symmetry() -> Outcome {
    use rand::Rng;
    let mut rng = substream(5, "acceptance-spectra");
    let (mut worst_eig, mut worst_g, mut worst_gamma) = (f64::INFINITY, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let d = rng.random_range(2..=6);
        let he = random_hermitian::<f64>(&mut rng, d, SpaceTag::Environment);
        let env = thermal_state(&he, rng.random_range(0.1..3.0)).unwrap();
        let hx = random_hermitian::<f64>(&mut rng, d, SpaceTag::Environment);
        let hp = random_hermitian::<f64>(&mut rng, d, SpaceTag::Environment);
        let s = CouplingSpectrum::from_operators(&[hx], &[hp], &env, 1.0, rng.random_range(0.01..0.5)).unwrap();
        let g = decoherence_coeffs(&s);
        let gamma = dissipation_coeffs(&s);
        let scale = g.g.norm();
        if scale > 0.0 {
            worst_eig = worst_eig.min(g.eigenvalues()[0] / scale);
        }
        worst_g = worst_g.max((g.gxp() - g.gpx()).abs());
        worst_gamma = worst_gamma.max((gamma.gamma_xp() - gamma.gamma_px()).abs());
    }
    outcome(
        worst_eig >= -1e-12 && worst_g <= 1e-10 && worst_gamma <= 1e-10,
        format!(
            "min eig/|g| {worst_eig:.2e} (>= -1e-12), |gxp-gpx| {worst_g:.1e}, |γxp-γpx| {worst_gamma:.1e} (tol 1e-10)"
        ),
    )
}

// ---------------------------------------------------------------- 6

/// Order-2 Moyal error against the exact operator-product symbol for
/// symbols fixed in physical units on `x ∈ [-π, π)`, `p ∈ [-π, π)`; halving
/// `ħ` doubles the grid.
fn moyal_error(n: usize) -> f64 {
    let hbar = 2.0 * PI / n as f64;
    let g = PhaseSpaceGrid::from_position(n, -PI, PI, hbar, 0.0).unwrap();
    let field = |f: &dyn Fn(f64, f64) -> f64| DMatrix::from_fn(n, n, |j, k| c(f(g.x(j), g.p(k))));
    let a = OperatorSymbol::scalar(&g, SymbolBlock::from_field(field(&|x, p| x.cos() + (p).sin())));
    let b = OperatorSymbol::scalar(&g, SymbolBlock::from_field(field(&|x, p| (2.0 * x).sin() * p.cos() + x.sin())));
    let exact = OperatorSymbol::from_operator(&(&a.to_operator() * &b.to_operator()), &g).unwrap().sample(0, 0);
    let approx = moyal_product(&a, &b, 2).unwrap().sample(0, 0);
    (approx - exact).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn moyal_truncation() -> Outcome {
    let errs: Vec<f64> = [32, 64, 128, 256].iter().map(|&n| moyal_error(n)).collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let pass = orders.iter().all(|o| (o - 3.0).abs() <= 0.3);
    let errs: Vec<String> = errs.iter().map(|e| format!("{e:.2e}")).collect();
    outcome(pass, format!("errors [{}], observed orders {orders:.2?} (3.0 +- 0.3)", errs.join(", ")))
}

// ---------------------------------------------------------------- 7

fn no_go() -> Outcome {
    let g = square_grid(32, 1.0);
    let iso = DecoherenceTensor::from_components(0.05, 0.0, 0.05);
    let report = nogo_check(&iso, &g, &NogoConfig::standard(1.0, 7)).unwrap();
    let degenerate = DecoherenceTensor::from_components(0.0, 0.0, 0.05);
    let pointer = pointer_basis_check(&degenerate, &g, &position_basis(32), 16, 7).unwrap();
    outcome(
        report.passes && report.samples.len() == 64 && pointer.diagonal_residual < 1e-10,
        format!(
            "min_psi max_rho |<psi|D(rho)|psi>| = {:.3e} (> 1e-6, {} psi); degenerate position-basis residual {:.1e} (< 1e-10)",
            report.floor,
            report.samples.len(),
            pointer.diagonal_residual
        ),
    )
}

// ---------------------------------------------------------------- 8

fn einselection_sieve() -> Outcome {
    let g = square_grid(256, 1.0);
    let gg = 0.05;
    let tensor = DecoherenceTensor::from_components(gg, 0.0, gg);
    let half = (100.0 * 2.0 * PI * g.hbar).sqrt() / 2.0;
    let cell = ("cell".to_string(), cell_state(&PhaseCell::new((0.0, 0.0), (half, half)), &g).unwrap());
    let psi = gaussian_state(&g, 0.0, 0.0, (g.hbar / 2.0).sqrt());
    let gauss = ("gaussian".to_string(), DensityOperator::pure(SpaceTag::Collective, &psi));
    // the minimal Gaussian's purity halves at ħ/(4g); run a little past it
    let window = 1.2 * g.hbar / (4.0 * gg);
    let r = purity_sieve(&[cell, gauss], &tensor, &g, window, 7).unwrap();
    let (c, w) = (r.entry("cell").unwrap(), r.entry("gaussian").unwrap());
    let cell_keep = c.purities.iter().fold(f64::INFINITY, |m, &p| m.min(p)) / c.purities[0];
    let gauss_keep = w.final_purity / w.purities[0];
    outcome(
        cell_keep >= 0.9 && gauss_keep <= 0.5,
        format!("cell keeps {cell_keep:.3} of its purity (>= 0.9) while the Gaussian keeps {gauss_keep:.3} (<= 0.5)"),
    )
}

// ---------------------------------------------------------------- 9

/// For these parameters the mixing time `mω²Δx²/(γT)` and the spreading
/// time `mΔx²/ħ` are both 1e4, so the required factor of 10 between them
/// cannot hold.
fn timescale_ordering() -> Outcome {
    let p = TimescaleParams { mass: 1.0, temperature: 1.0, gamma_pp: 1e-2, omega: 1.0, delta_x: 10.0, hbar: 1e-2 };
    let t = timescales(&p).unwrap();
    let pass = t.ordered(10.0);
    outcome(
        pass,
        format!(
            "t_dec={:.3e}, t_mix={:.3e}, t_wp={:.3e}; ratios {:.1e}, {:.1e} (each > 10)",
            t.t_dec,
            t.t_mix,
            t.t_wp,
            t.t_mix / t.t_dec,
            t.t_wp / t.t_mix
        ),
    )
}

// ---------------------------------------------------------------- 10

/// Small-separation curvature `Φ ∫dΩ dσ/dΩ |k-k'|²/6` by composite
/// Simpson in θ, independent of the library's Legendre quadrature.
fn simpson_curvature(radius: f64, k0: f64, flux: f64) -> f64 {
    let n = 4000;
    let h = PI / n as f64;
    let f = |t: f64| {
        let q = 2.0 * k0 * (t / 2.0).sin();
        2.0 * PI * t.sin() * radius * radius / 4.0 * q * q / 6.0
    };
    let s: f64 = (0..=n).map(|i| f(i as f64 * h) * if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    flux * s * h / 3.0
}

/// The isotropic average of `|k - k'|²` is `2k²`, so the small-separation
/// curvature is `Φσk²/3`; the required `Φσk²/6` is off by a factor 2.
fn scattering_sum_rule() -> Outcome {
    let (radius, k0, flux) = (0.5, 2.0, 3.0);
    let gas = GasSpec::hard_sphere(radius, k0, flux);
    let sigma = PI * radius * radius;
    let f0 = localization_kernel(&gas, &[0.0]).unwrap()[0];
    let plateau = localization_kernel(&gas, &[200.0 / k0]).unwrap()[0];
    let plateau_err = rel(plateau, flux * sigma);
    let rate_err = rel(total_rate(&gas).unwrap(), flux * sigma);
    let hbar = 1.0;
    let lambda = effective_gpp(&gas, hbar).unwrap() / (hbar * hbar);
    let oracle = simpson_curvature(radius, k0, flux);
    let target = flux * sigma * k0 * k0 / 6.0;

    // feed g^{pp} = ħ²Λ into the closed form on a grid resolving the quadratic regime
    let xi = quadratic_probe(&gas).unwrap();
    let xi_max = *xi.last().unwrap();
    let n = 64;
    let length = 2.0 * xi_max;
    let g = PhaseSpaceGrid::from_position(n, -xi_max, xi_max, length * length / (2.0 * PI * n as f64), 0.0).unwrap();
    let tensor = DecoherenceTensor::from_components(0.0, 0.0, lambda * g.hbar * g.hbar);
    let t = 1.0 / (lambda * xi_max * xi_max);
    let ones = DMatrix::from_element(n, n, c(1.0 / n as f64));
    let rho = DensityOperator::new(Operator::new(SpaceTag::Collective, ones).unwrap()).unwrap();
    let evolved = pure_decoherence_closed(&rho, &tensor, t, &g).unwrap();
    let seps: Vec<f64> = (1..n / 2).map(|d| d as f64 * g.dx()).filter(|&s| s <= xi_max).collect();
    let f = localization_kernel(&gas, &seps).unwrap();
    let feed_err = seps
        .iter()
        .enumerate()
        .map(|(d, _)| rel(evolved.mat()[(0, d + 1)].re * n as f64, (-f[d] * t).exp()))
        .fold(0.0, f64::max);

    let pass = f0 == 0.0 && plateau_err <= 0.02 && rel(lambda, target) <= 0.01 && rel(lambda, oracle) <= 0.01 && feed_err <= 0.05;
    outcome(
        pass,
        format!(
            "F(0)={f0}, plateau err {plateau_err:.1e} (rate {rate_err:.0e}, tol 0.02), Lambda={lambda:.4} vs oracle {oracle:.4} \
             (err {:.1e}) vs Phi sigma k0^2/6={target:.4} (err {:.2}, tol 0.01), closed-form feed-back err {feed_err:.1e} (tol 0.05)",
            rel(lambda, oracle),
            rel(lambda, target)
        ),
    )
}

// ---------------------------------------------------------------- 11

fn projection_algebra() -> Outcome {
    let mut rng = substream(11, "acceptance-projection");
    let (d_c, d_e) = (4, 5);
    let he = random_hermitian::<f64>(&mut rng, d_e, SpaceTag::Environment);
    let env = thermal_state(&he, 0.8).unwrap();
    let rho_c = random_density::<f64>(&mut rng, d_c, SpaceTag::Collective);
    let ctx = ProjectionContext::new(rho_c, env.clone()).unwrap();
    let (mut idem, mut avg) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let rho = random_density::<f64>(&mut rng, d_c * d_e, SpaceTag::Composite);
        let p1 = project_p(&rho.op, &ctx).unwrap();
        let p2 = project_p(&p1, &ctx).unwrap();
        idem = idem.max((p2.mat - &p1.mat).camax());
        let before = relevant_averages(&rho.op, &ctx).unwrap();
        let after = relevant_averages(&p1, &ctx).unwrap();
        avg = avg.max(before.iter().zip(&after).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
    }
    let h_c = random_hermitian::<f64>(&mut rng, d_c, SpaceTag::Collective);
    let h_1 = random_hermitian::<f64>(&mut rng, d_c * d_e, SpaceTag::Composite);
    let (_, h1r) = renormalize_coupling(&h_c, &h_1, &env).unwrap();
    let residual = mean_coupling(&h1r, &env, d_c).unwrap().mat.camax();
    outcome(
        idem <= 1e-10 && avg <= 1e-10 && residual <= 1e-12,
        format!("|P²-P| {idem:.1e}, average drift {avg:.1e} (tol 1e-10); tr(H1' rho_e) {residual:.1e} (tol 1e-12)"),
    )
}

// ---------------------------------------------------------------- 12

fn semiclassical_limit() -> Outcome {
    let n = 128;
    let length = 20.0;
    let g = PhaseSpaceGrid::centered(n, length, length * length / (2.0 * PI * n as f64)).unwrap();
    let (x0, sx, sp) = (2.0, 1.0, 0.7);
    let bump = |f: &dyn Fn(f64, f64) -> (f64, f64)| {
        DMatrix::from_fn(n, n, |j, k| {
            let (u, v) = f(g.x(j), g.p(k));
            (-0.5 * (u * u + v * v)).exp()
        })
    };
    let w0 = WignerFunction { grid: g, values: bump(&|x, p| ((x - x0) / sx, p / sp)) };
    let h = HamiltonField::harmonic(&g, 1.0, 1.0).unwrap();
    let quarter = PI / 2.0;
    let spec = EvolutionSpec::new(Mode::Semiclassical, quarter, 0.005).unwrap();
    let first = semiclassical_evolve(&w0, &h, None, &spec).unwrap().pop().unwrap().1;
    let second = semiclassical_evolve(&w0, &h, None, &spec.with_hbar_order(2).unwrap()).unwrap().pop().unwrap().1;
    // unit-frequency rotation: W(x, p, T/4) = W0(-p, x)
    let exact = bump(&|x, p| ((-p - x0) / sx, x / sp));
    let err = (&second.values - &exact).amax();
    let third: f64 = [(0, 3), (1, 2), (2, 1), (3, 0)]
        .iter()
        .map(|&(a, b)| h.derivative(a, b).iter().map(|v| v.abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    let gap = (&second.values - &first.values).amax();
    outcome(
        err < 1e-4 && third <= f64::EPSILON && gap <= f64::EPSILON,
        format!("quarter-period deviation {err:.1e} (tol 1e-4); third derivatives {third:.1e}, order-2 minus order-1 {gap:.1e}"),
    )
}

fn main() {
    let checks: [(u32, &str, u64, fn() -> Outcome); 12] = [
        (1, "markov master vs exact dynamics", 60, oracle_equivalence),
        (2, "degenerate closed form", 10, degenerate_closed_form),
        (3, "heat kernel vs PDE", 60, heat_kernel_vs_pde),
        (4, "fluctuation-dissipation", 5, fluctuation_dissipation),
        (5, "positivity and symmetry", 30, positivity_and_symmetry),
        (6, "Moyal truncation order", 30, moyal_truncation),
        (7, "no-go theorem", 120, no_go),
        (8, "einselection sieve", 60, einselection_sieve),
        (9, "timescale ordering", 1, timescale_ordering),
        (10, "scattering sum rule", 30, scattering_sum_rule),
        (11, "projection algebra", 10, projection_algebra),
        (12, "semiclassical limit", 30, semiclassical_limit),
    ];
    let mut ok = true;
    for (id, name, budget, f) in checks {
        ok &= run(id, name, budget, f);
    }
    if !ok {
        println!("acceptance: unexpected outcome");
        std::process::exit(1);
    }
    println!("acceptance: all outcomes as expected");
}
