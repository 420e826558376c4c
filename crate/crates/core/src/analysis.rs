//! Einselection diagnostics: characteristic times, pointer-basis and
//! no-go checks on the pure-decoherence generator, purity rankings and the
//! two-packet superposition experiment.
//!
//! Generator values are reported in units of the generator norm
//! `max_k kᵀ g k` on the grid (its fastest decay rate).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::coefficients::DecoherenceTensor;
use crate::error::{Error, Result};
use crate::evolution::{decoherence_generator, generator_norm, smear_operator, smear_wigner};
use crate::hilbert::{hermitian_eigen, DensityOperator, Operator, SpaceTag};
use crate::rng::{random_density, random_state, substream, substream_indexed};
use crate::scalar::{count, lit, to_f64, Real, C};
use crate::weyl::{gaussian_state, quasi_projector, wigner_transform, PhaseCell, PhaseSpaceGrid};

/// Parameters of the rough order-of-magnitude estimates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimescaleParams<T> {
    pub mass: T,
    pub temperature: T,
    pub gamma_pp: T,
    pub omega: T,
    pub delta_x: T,
    pub hbar: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Timescales<T> {
    pub t_dec: T,
    pub t_mix: T,
    pub t_wp: T,
}

impl<T: Real> Timescales<T> {
    /// `t_dec < t_mix < t_wp` with each successive ratio above `min_ratio`.
    pub fn ordered(&self, min_ratio: T) -> bool {
        self.t_mix > min_ratio * self.t_dec && self.t_wp > min_ratio * self.t_mix
    }
}

/// Decoherence time `ħ²/(m T γ Δx²)`, mixing time `m ω² Δx²/(γ T)` and
/// wave-packet spreading time `m Δx²/ħ`.
pub fn timescales<T: Real>(p: &TimescaleParams<T>) -> Result<Timescales<T>> {
    let all = [p.mass, p.temperature, p.gamma_pp, p.omega, p.delta_x, p.hbar];
    if all.iter().any(|v| !(*v > T::zero())) {
        return Err(Error::InvalidParameter("timescale parameters must be positive".into()));
    }
    let dx2 = p.delta_x * p.delta_x;
    Ok(Timescales {
        t_dec: p.hbar * p.hbar / (p.mass * p.temperature * p.gamma_pp * dx2),
        t_mix: p.mass * p.omega * p.omega * dx2 / (p.gamma_pp * p.temperature),
        t_wp: p.mass * dx2 / p.hbar,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointerReport<T> {
    /// `max |<j|D(ρ)|j>|` over samples, in generator units.
    pub diagonal_residual: T,
    /// Largest `Re(<j|D(ρ)|k> / ρ_jk)` over `j ≠ k` and samples with
    /// `|ρ_jk|` above noise, in generator units; must not be positive.
    /// Pairs half a period apart sit on the Nyquist row of the spectral
    /// Laplacian and have rate exactly zero.
    pub max_offdiagonal_rate: T,
    pub samples: usize,
    pub passes: bool,
}

/// Tolerance on the diagonal residual of a pointer basis.
pub const POINTER_TOLERANCE: f64 = 1e-8;

fn basis_matrix<T: Real>(basis: &[DVector<C<T>>], n: usize) -> Result<DMatrix<C<T>>> {
    if basis.len() != n || basis.iter().any(|v| v.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, found: basis.len() });
    }
    let b = DMatrix::from_columns(basis);
    let dev = (b.adjoint() * &b - DMatrix::identity(n, n)).camax();
    if dev > lit(1e-10) {
        return Err(Error::NotOrthonormal { deviation: to_f64(dev) });
    }
    Ok(b)
}

/// Tests whether `basis` diagonalizes every sampled `D(ρ)`: zero
/// diagonal and no growing coherence. Samples are
/// Hilbert–Schmidt random densities.
pub fn pointer_basis_check<T: Real>(
    g: &DecoherenceTensor<T>,
    grid: &PhaseSpaceGrid<T>,
    basis: &[DVector<C<T>>],
    samples: usize,
    seed: u64,
) -> Result<PointerReport<T>> {
    let n = grid.n();
    let b = basis_matrix(basis, n)?;
    let unit = generator_norm(g, grid)?;
    let unit = if unit > T::zero() { unit } else { T::one() };
    let mut rng = substream(seed, "pointer-rho");
    let mut diag = T::zero();
    let mut worst = -T::max_value().unwrap();
    for _ in 0..samples {
        let rho = random_density::<T>(&mut rng, n, SpaceTag::Collective);
        let d = decoherence_generator(&rho.op, g, grid)?;
        let d_b = b.adjoint() * &d.mat * &b;
        let r_b = b.adjoint() * &rho.op.mat * &b;
        let floor = r_b.camax() * lit(1e-6);
        for j in 0..n {
            diag = diag.max(d_b[(j, j)].norm_sqr().sqrt() / unit);
            for k in 0..n {
                if j != k && r_b[(j, k)].norm_sqr().sqrt() > floor {
                    worst = worst.max((d_b[(j, k)] / r_b[(j, k)]).re / unit);
                }
            }
        }
    }
    let passes = diag <= lit(POINTER_TOLERANCE) && worst <= lit(POINTER_TOLERANCE);
    Ok(PointerReport { diagonal_residual: diag, max_offdiagonal_rate: worst, samples, passes })
}

/// Position eigenbasis of the grid.
pub fn position_basis<T: Real>(n: usize) -> Vec<DVector<C<T>>> {
    (0..n)
        .map(|j| {
            let mut v = DVector::zeros(n);
            v[j] = C::new(T::one(), T::zero());
            v
        })
        .collect()
}

/// Sampling sizes for the no-go check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NogoConfig<T> {
    pub psi_samples: usize,
    /// How many of the `psi_samples` are coherent states.
    pub coherent: usize,
    /// Position width `sqrt(ħ/mω)` of the coherent states.
    pub coherent_width: T,
    pub rho_samples: usize,
    pub seed: u64,
}

impl<T: Real> NogoConfig<T> {
    /// 64 states (16 coherent) against 256 densities.
    pub fn standard(coherent_width: T, seed: u64) -> Self {
        Self { psi_samples: 64, coherent: 16, coherent_width, rho_samples: 256, seed }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NogoSample<T> {
    pub label: String,
    /// `max_ρ |<ψ|D(ρ)|ψ>|` in generator units.
    pub max_response: T,
    /// `<ψ|D(|ψ><ψ|)|ψ>` in generator units.
    pub self_response: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NogoReport<T> {
    pub samples: Vec<NogoSample<T>>,
    /// `min_ψ max_ρ |<ψ|D(ρ)|ψ>|` in generator units.
    pub floor: T,
    pub unit: T,
    pub passes: bool,
}

/// Floor below which a state would count as a candidate pointer state.
pub const NOGO_FLOOR: f64 = 1e-6;

fn coherent_state<T: Real>(grid: &PhaseSpaceGrid<T>, rng: &mut crate::rng::Stream, width: T) -> DVector<C<T>> {
    use rand::Rng;
    // centres within the middle half of the grid
    let (xl, xr) = (grid.x_min, grid.x_max);
    let (pl, pr) = (grid.p_min, grid.p_max);
    let quarter: T = lit(0.25);
    let x0 = xl + (xr - xl) * (quarter + lit::<T>(rng.random::<f64>() * 0.5));
    let p0 = pl + (pr - pl) * (quarter + lit::<T>(rng.random::<f64>() * 0.5));
    // |ψ|² has standard deviation width/√2 for the ground state of mω
    gaussian_state(grid, x0, p0, width / lit::<T>(2.0).sqrt())
}

/// Falsification check of the no-go statement: for every sampled `ψ`
/// some sampled density gives `<ψ|D(ρ)|ψ> ≠ 0`. Uses the
/// Hilbert–Schmidt self-adjointness of `D`:
/// `<ψ|D(ρ)|ψ> = Tr(D(|ψ><ψ|) ρ)`.
pub fn nogo_check<T: Real>(
    g: &DecoherenceTensor<T>,
    grid: &PhaseSpaceGrid<T>,
    config: &NogoConfig<T>,
) -> Result<NogoReport<T>> {
    if g.is_degenerate() {
        return Err(Error::WrongDegeneracy { found: "degenerate".into(), required: "non-degenerate".into() });
    }
    let n = grid.n();
    let unit = generator_norm(g, grid)?;
    let mut rng = substream(config.seed, "nogo-rho");
    let rhos: Vec<DMatrix<C<T>>> =
        (0..config.rho_samples).map(|_| random_density::<T>(&mut rng, n, SpaceTag::Collective).op.mat).collect();
    let samples: Vec<Result<NogoSample<T>>> = (0..config.psi_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream_indexed(config.seed, "nogo-psi", i as u64);
            let (label, psi) = if i < config.coherent {
                (format!("coherent_{i}"), coherent_state(grid, &mut rng, config.coherent_width))
            } else {
                (format!("random_{i}"), random_state::<T>(&mut rng, n))
            };
            let proj = Operator::outer(SpaceTag::Collective, &psi, &psi);
            let d = decoherence_generator(&proj, g, grid)?;
            // Tr(A ρ) = Σ_ij A_ij ρ_ji
            let response = |rho: &DMatrix<C<T>>| d.mat.component_mul(&rho.transpose()).sum().norm_sqr().sqrt() / unit;
            let max_response = rhos.iter().map(response).fold(T::zero(), |m, v| m.max(v));
            let self_value = (psi.adjoint() * &d.mat * &psi)[(0, 0)].re / unit;
            Ok(NogoSample { label, max_response: max_response.max(self_value.abs()), self_response: self_value })
        })
        .collect();
    let samples = samples.into_iter().collect::<Result<Vec<_>>>()?;
    let floor = samples.iter().map(|s| s.max_response).fold(T::max_value().unwrap(), |m, v| m.min(v));
    Ok(NogoReport { passes: floor > lit(NOGO_FLOOR), samples, floor, unit })
}

fn footer(pass: bool, criterion: &str, value: f64, threshold: f64) -> String {
    format!("{} {criterion} {value:e} {threshold:e}", if pass { "PASS" } else { "FAIL" })
}

impl<T: Real> NogoReport<T> {
    pub fn to_table(&self) -> String {
        let mut s = String::from("label,max_response,self_response\n");
        for r in &self.samples {
            s += &format!("{},{:e},{:e}\n", r.label, to_f64(r.max_response), to_f64(r.self_response));
        }
        s += &footer(self.passes, "nogo_floor", to_f64(self.floor), NOGO_FLOOR);
        s.push('\n');
        s
    }
}

impl<T: Real> PointerReport<T> {
    pub fn to_table(&self) -> String {
        format!(
            "samples,diagonal_residual,max_offdiagonal_rate\n{},{:e},{:e}\n{}\n",
            self.samples,
            to_f64(self.diagonal_residual),
            to_f64(self.max_offdiagonal_rate),
            footer(self.passes, "pointer_basis", to_f64(self.diagonal_residual), POINTER_TOLERANCE)
        )
    }
}

/// One ranked candidate of the purity sieve.
#[derive(Clone, Debug, PartialEq)]
pub struct SieveEntry<T> {
    pub label: String,
    pub purities: Vec<T>,
    pub final_purity: T,
    /// Time average of the purity relative to its initial value.
    pub mean_retention: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SieveReport<T> {
    pub times: Vec<T>,
    /// Sorted by descending `mean_retention`.
    pub entries: Vec<SieveEntry<T>>,
}

impl<T: Real> SieveReport<T> {
    pub fn entry(&self, label: &str) -> Option<&SieveEntry<T>> {
        self.entries.iter().find(|e| e.label == label)
    }

    pub fn rank(&self, label: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.label == label)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::from("rank,label,initial_purity,final_purity,mean_retention\n");
        for (i, e) in self.entries.iter().enumerate() {
            s += &format!(
                "{},{},{:e},{:e},{:e}\n",
                i + 1,
                e.label,
                to_f64(e.purities[0]),
                to_f64(e.final_purity),
                to_f64(e.mean_retention)
            );
        }
        s
    }
}

/// Ranks candidates by retained purity under pure decoherence over
/// `[0, window]`, sampled at `samples` uniform times. Evolution is the
/// exact phase-space heat kernel (any positive semidefinite `g`).
pub fn purity_sieve<T: Real>(
    candidates: &[(String, DensityOperator<T>)],
    g: &DecoherenceTensor<T>,
    grid: &PhaseSpaceGrid<T>,
    window: T,
    samples: usize,
) -> Result<SieveReport<T>> {
    if samples < 2 || !(window > T::zero()) {
        return Err(Error::InvalidParameter("sieve needs a positive window and at least 2 samples".into()));
    }
    let times: Vec<T> = (0..samples).map(|i| window * count::<T>(i) / count::<T>(samples - 1)).collect();
    let mut entries = Vec::with_capacity(candidates.len());
    for (label, rho) in candidates {
        if !rho.is_physical() {
            return Err(Error::InvalidParameter(format!("candidate '{label}' is not a physical density")));
        }
        let w0 = wigner_transform(&rho.normalized(), grid)?;
        let mut purities = Vec::with_capacity(times.len());
        for &t in &times {
            purities.push(if t == T::zero() { w0.purity() } else { smear_wigner(&w0, g, t)?.purity() });
        }
        let p0 = purities[0];
        let mean = purities.iter().fold(T::zero(), |s, &p| s + p) / count::<T>(purities.len());
        entries.push(SieveEntry {
            label: label.clone(),
            final_purity: *purities.last().unwrap(),
            mean_retention: mean / p0,
            purities,
        });
    }
    entries.sort_by(|a, b| b.mean_retention.partial_cmp(&a.mean_retention).unwrap());
    Ok(SieveReport { times, entries })
}

/// Mixed state spread evenly over a phase-space cell: the normalized
/// projector onto the eigenvectors of the cell's quasi-projector with
/// eigenvalue above one half.
pub fn cell_state<T: Real>(cell: &PhaseCell<T>, grid: &PhaseSpaceGrid<T>) -> Result<DensityOperator<T>> {
    let (_, p) = quasi_projector(cell, grid)?;
    let eig = hermitian_eigen(&p.mat);
    let n = grid.n();
    let mut proj = DMatrix::<C<T>>::zeros(n, n);
    let mut rank = 0usize;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > lit(0.5) {
            let v = eig.eigenvectors.column(k);
            proj += &v * v.adjoint();
            rank += 1;
        }
    }
    if rank == 0 {
        return Err(Error::InvalidParameter("cell holds no state".into()));
    }
    proj /= C::new(count::<T>(rank), T::zero());
    DensityOperator::new(Operator::new(SpaceTag::Collective, proj)?.hermitian_part())
}

/// Outcome of evolving `|ψ₁> + |ψ₂>` under pure decoherence.
#[derive(Clone, Debug, PartialEq)]
pub struct CatReport<T> {
    pub times: Vec<T>,
    /// `‖I(t)‖ / ‖I(0)‖`, `I` the image of `|ψ₁><ψ₂| + |ψ₂><ψ₁|`.
    pub interference: Vec<T>,
    /// Bhattacharyya overlap `Σ_x sqrt(p₁(x) p₂(x))` of the evolved
    /// position distributions of the two packets.
    pub overlap: Vec<T>,
    /// Largest change of the total position distribution from its initial value.
    pub diagonal_drift: Vec<T>,
    /// Least-squares slope of `-ln(interference)` against `t`.
    pub decay_rate: T,
    /// First time the overlap reaches 0.1 (linear interpolation).
    pub mixing_time: Option<T>,
}

/// Overlap level that defines the simulated mixing time.
pub const MIXING_OVERLAP: f64 = 0.1;

fn require_normalized<T: Real>(psi: &DVector<C<T>>) -> Result<()> {
    let norm = psi.norm();
    if (norm - T::one()).abs() > lit(1e-8) {
        return Err(Error::Unnormalized { norm: to_f64(norm) });
    }
    Ok(())
}

fn position_distribution<T: Real>(m: &DMatrix<C<T>>) -> Vec<T> {
    (0..m.nrows()).map(|j| m[(j, j)].re).collect()
}

/// Splits `ρ(t)` for `ψ ∝ ψ₁ + ψ₂` into interference and probabilistic
/// parts, each evolved exactly by linearity.
pub fn cat_state_experiment<T: Real>(
    psi1: &DVector<C<T>>,
    psi2: &DVector<C<T>>,
    g: &DecoherenceTensor<T>,
    grid: &PhaseSpaceGrid<T>,
    times: &[T],
) -> Result<CatReport<T>> {
    require_normalized(psi1)?;
    require_normalized(psi2)?;
    if psi1.len() != grid.n() || psi2.len() != grid.n() {
        return Err(Error::DimensionMismatch { expected: grid.n(), found: psi1.len() });
    }
    let cross = psi1 * psi2.adjoint();
    let inter0 = &cross + cross.adjoint();
    let p1_0 = psi1 * psi1.adjoint();
    let p2_0 = psi2 * psi2.adjoint();
    let diag0: Vec<T> = position_distribution(&(&p1_0 + &p2_0));
    let norm0 = inter0.norm();
    let mut report = CatReport {
        times: times.to_vec(),
        interference: Vec::new(),
        overlap: Vec::new(),
        diagonal_drift: Vec::new(),
        decay_rate: T::zero(),
        mixing_time: None,
    };
    for &t in times {
        let inter = smear_operator(&inter0, g, t, grid)?;
        let p1 = position_distribution(&smear_operator(&p1_0, g, t, grid)?);
        let p2 = position_distribution(&smear_operator(&p2_0, g, t, grid)?);
        report.interference.push(inter.norm() / norm0);
        let bc = p1.iter().zip(&p2).fold(T::zero(), |s, (&a, &b)| s + (a.max(T::zero()) * b.max(T::zero())).sqrt());
        report.overlap.push(bc);
        let drift = p1
            .iter()
            .zip(&p2)
            .zip(&diag0)
            .fold(T::zero(), |m, ((&a, &b), &c)| m.max((a + b - c).abs()));
        report.diagonal_drift.push(drift);
    }
    // -ln I(t) = rate·t, fitted through the origin
    let (mut num, mut den) = (T::zero(), T::zero());
    for (&t, &i) in times.iter().zip(&report.interference) {
        if i > lit(1e-300) {
            num += t * -i.ln();
            den += t * t;
        }
    }
    if den > T::zero() {
        report.decay_rate = num / den;
    }
    let level: T = lit(MIXING_OVERLAP);
    for k in 1..times.len() {
        let (a, b) = (report.overlap[k - 1], report.overlap[k]);
        if a < level && b >= level {
            let f = (level - a) / (b - a);
            report.mixing_time = Some(times[k - 1] + f * (times[k] - times[k - 1]));
            break;
        }
    }
    if report.mixing_time.is_none() && report.overlap.first().is_some_and(|&o| o >= level) {
        report.mixing_time = Some(times[0]);
    }
    Ok(report)
}

impl<T: Real> CatReport<T> {
    pub fn to_table(&self) -> String {
        let mut s = String::from("t,interference,overlap,diagonal_drift\n");
        for k in 0..self.times.len() {
            s += &format!(
                "{:e},{:e},{:e},{:e}\n",
                to_f64(self.times[k]),
                to_f64(self.interference[k]),
                to_f64(self.overlap[k]),
                to_f64(self.diagonal_drift[k])
            );
        }
        s
    }
}

/// Position-separated and momentum-separated pairs of Gaussians of
/// position spread `sigma` at the same distance in units of the packet
/// widths (`Δx/σ_x = Δp/σ_p`). Returns both reports and whether the
/// momentum-separated interference decays strictly more slowly.
pub fn compare_separations<T: Real>(
    g: &DecoherenceTensor<T>,
    grid: &PhaseSpaceGrid<T>,
    sigma: T,
    delta_x: T,
    times: &[T],
) -> Result<(CatReport<T>, CatReport<T>, bool)> {
    let half: T = lit(0.5);
    let sigma_p = grid.hbar / (sigma + sigma);
    let delta_p = delta_x * sigma_p / sigma;
    let (xc, pc) = ((grid.x_min + grid.x_max) * half, (grid.p_min + grid.p_max) * half);
    let a1 = gaussian_state(grid, xc - delta_x * half, pc, sigma);
    let a2 = gaussian_state(grid, xc + delta_x * half, pc, sigma);
    let b1 = gaussian_state(grid, xc, pc - delta_p * half, sigma);
    let b2 = gaussian_state(grid, xc, pc + delta_p * half, sigma);
    let pos = cat_state_experiment(&a1, &a2, g, grid, times)?;
    let mom = cat_state_experiment(&b1, &b2, g, grid, times)?;
    let slower = mom.decay_rate < pos.decay_rate;
    Ok((pos, mom, slower))
}
