//! Second-order master equation for the reduced density, with and without
//! retardation, and the exact full-Hilbert oracle.
//!
//! Both master modes work in the eigenbasis of `H₀ = H_c ⊗ I + I ⊗ H_e`
//! (a product basis) and in the interaction picture of `H_c`, so the
//! collective motion is exact and only the coupling term is stepped.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hilbert::{
    partial_trace_env, tensor_product, DensityOperator, HilbertDims, Operator, Propagator, SpaceTag,
    ThermalEnvironment,
};
use crate::projection::{mean_coupling, renormalize_coupling};
use crate::scalar::{cis, count, lit, re, to_f64, Real, C};

use super::{EvolutionSpec, Mode};

/// Collective Hamiltonian, composite coupling and thermal environment.
#[derive(Clone, Debug)]
pub struct MasterProblem<T: Real> {
    pub h_c: Operator<T>,
    pub h_1: Operator<T>,
    pub env: ThermalEnvironment<T>,
    pub hbar: T,
}

impl<T: Real> MasterProblem<T> {
    /// Requires `tr_e(H₁ ρ_e) = 0`.
    pub fn new(h_c: Operator<T>, h_1: Operator<T>, env: ThermalEnvironment<T>, hbar: T) -> Result<Self> {
        h_c.require_tag(SpaceTag::Collective)?;
        h_c.require_hermitian()?;
        h_1.require_tag(SpaceTag::Composite)?;
        h_1.require_dim(h_c.dim() * env.dim())?;
        h_1.require_hermitian()?;
        if !(hbar > T::zero()) {
            return Err(Error::InvalidParameter("hbar must be positive".into()));
        }
        let residual = mean_coupling(&h_1, &env, h_c.dim())?.max_abs();
        if residual > lit::<T>(1e-8) * (T::one() + h_1.max_abs()) {
            return Err(Error::NotRenormalized { residual: to_f64(residual) });
        }
        Ok(Self { h_c, h_1, env, hbar })
    }

    /// Moves the mean coupling into `H_c` first.
    pub fn renormalized(h_c: &Operator<T>, h_1: &Operator<T>, env: ThermalEnvironment<T>, hbar: T) -> Result<Self> {
        let (h_c, h_1) = renormalize_coupling(h_c, h_1, &env)?;
        Self::new(h_c, h_1, env, hbar)
    }

    pub fn dims(&self) -> HilbertDims<T> {
        HilbertDims { d_c: self.h_c.dim(), d_e: self.env.dim(), hbar: self.hbar }
    }

    /// `H_c ⊗ I + I ⊗ H_e + H₁`.
    pub fn total_hamiltonian(&self) -> Result<Operator<T>> {
        let ic = Operator::identity(SpaceTag::Collective, self.h_c.dim());
        let ie = Operator::identity(SpaceTag::Environment, self.env.dim());
        let h0 = &tensor_product(&self.h_c, &ie)? + &tensor_product(&ic, &self.env.hamiltonian)?;
        Ok(&h0 + &self.h_1)
    }
}

/// Problem data in the product eigenbasis of `H₀`.
struct Eigenframe<T: Real> {
    d_c: usize,
    d_e: usize,
    hbar: T,
    collective: Propagator<T>,
    /// `E_c(i) + E_e(n)` for composite index `i·d_e + n`.
    energies: Vec<T>,
    h1: DMatrix<C<T>>,
    pops: Vec<T>,
}

impl<T: Real> Eigenframe<T> {
    fn new(p: &MasterProblem<T>) -> Result<Self> {
        let collective = Propagator::new(&p.h_c, p.hbar)?;
        let (d_c, d_e) = (p.h_c.dim(), p.env.dim());
        let v = collective.vectors.kronecker(&p.env.basis);
        let h1 = v.adjoint() * &p.h_1.mat * &v;
        let mut energies = Vec::with_capacity(d_c * d_e);
        for i in 0..d_c {
            for n in 0..d_e {
                energies.push(collective.levels[i] + p.env.levels[n]);
            }
        }
        Ok(Self { d_c, d_e, hbar: p.hbar, collective, energies, h1, pops: p.env.populations() })
    }

    fn to_frame(&self, rho: &DMatrix<C<T>>) -> DMatrix<C<T>> {
        self.collective.vectors.adjoint() * rho * &self.collective.vectors
    }

    fn from_frame(&self, rho: &DMatrix<C<T>>) -> DMatrix<C<T>> {
        &self.collective.vectors * rho * self.collective.vectors.adjoint()
    }

    fn omega(&self, a: usize, b: usize) -> T {
        (self.energies[a] - self.energies[b]) / self.hbar
    }

    /// `X ⊗ ρ_e` with `ρ_e` diagonal in this frame.
    fn with_env(&self, x: &DMatrix<C<T>>) -> DMatrix<C<T>> {
        let de = self.d_e;
        let mut out = DMatrix::zeros(self.d_c * de, self.d_c * de);
        for i in 0..self.d_c {
            for j in 0..self.d_c {
                for n in 0..de {
                    out[(i * de + n, j * de + n)] = x[(i, j)] * self.pops[n];
                }
            }
        }
        out
    }

    fn trace_env(&self, y: &DMatrix<C<T>>) -> DMatrix<C<T>> {
        let de = self.d_e;
        DMatrix::from_fn(self.d_c, self.d_c, |i, j| {
            (0..de).fold(C::new(T::zero(), T::zero()), |s, n| s + y[(i * de + n, j * de + n)])
        })
    }

    /// `-(1/ħ²) tr_e [H₁, Y]`.
    fn close(&self, y: &DMatrix<C<T>>) -> DMatrix<C<T>> {
        let comm = &self.h1 * y - y * &self.h1;
        self.trace_env(&comm) * re(-T::one() / (self.hbar * self.hbar))
    }

    /// `X ↦ X ∘ e^{-i ω^c_ij t}`, the free collective motion.
    fn free(&self, x: &DMatrix<C<T>>, t: T) -> DMatrix<C<T>> {
        let l = &self.collective.levels;
        DMatrix::from_fn(self.d_c, self.d_c, |i, j| x[(i, j)] * cis(-(l[i] - l[j]) * t / self.hbar))
    }
}

/// `∫₀^s e^{-iωτ} dτ`, or `1/(ε + iω)` for the stationary kernel.
fn lag_integral<T: Real>(omega: T, s: Option<T>, eps: T) -> C<T> {
    match s {
        Some(s) => {
            let theta = omega * s;
            if theta.abs() < lit(1e-4) {
                C::new(s * (T::one() - theta * theta / lit(6.0)), -(s * theta) * lit(0.5))
            } else {
                C::new(theta.sin() / omega, -(T::one() - theta.cos()) / omega)
            }
        }
        None => C::new(T::one(), T::zero()) / C::new(eps, omega),
    }
}

fn markov_generator<T: Real>(f: &Eigenframe<T>, rho: &DMatrix<C<T>>, s: Option<T>, eps: T) -> DMatrix<C<T>> {
    let n = f.h1.nrows();
    let lambda = DMatrix::from_fn(n, n, |a, b| f.h1[(a, b)] * lag_integral(f.omega(a, b), s, eps));
    let sigma = f.with_env(rho);
    f.close(&(&lambda * &sigma - &sigma * &lambda))
}

fn vectorize<T: Real>(x: &DMatrix<C<T>>) -> DVector<C<T>> {
    DVector::from_column_slice(x.as_slice())
}

fn unvectorize<T: Real>(v: &DVector<C<T>>, d: usize) -> DMatrix<C<T>> {
    DMatrix::from_column_slice(d, d, v.as_slice())
}

/// Superoperators `K(τ_m)` of the memory integral, as `d_c² × d_c²`
/// matrices on column-major vectorized operators.
struct MemoryKernel<T: Real> {
    lags: Vec<DMatrix<C<T>>>,
}

impl<T: Real> MemoryKernel<T> {
    fn build(f: &Eigenframe<T>, dt: T, max_lag: usize, truncation: T) -> Self {
        let dc = f.d_c;
        let n = f.h1.nrows();
        // [H₁, E_ij ⊗ ρ_e] for each basis dyad
        let seeds: Vec<DMatrix<C<T>>> = (0..dc * dc)
            .map(|col| {
                let mut e = DMatrix::zeros(dc, dc);
                e[(col % dc, col / dc)] = C::new(T::one(), T::zero());
                let s = f.with_env(&e);
                &f.h1 * &s - &s * &f.h1
            })
            .collect();
        let mut lags = Vec::new();
        let mut k0 = T::zero();
        for m in 0..=max_lag {
            let tau = dt * count::<T>(m);
            let phase = DMatrix::from_fn(n, n, |a, b| cis(-f.omega(a, b) * tau));
            let mut k = DMatrix::zeros(dc * dc, dc * dc);
            for (col, seed) in seeds.iter().enumerate() {
                let moved = seed.component_mul(&phase);
                k.set_column(col, &vectorize(&f.close(&moved)));
            }
            let norm = k.norm();
            if m == 0 {
                k0 = norm;
                if k0 == T::zero() {
                    break;
                }
            } else if norm < truncation * k0 {
                break;
            }
            lags.push(k);
        }
        Self { lags }
    }

    /// Trapezoid rule for `∫_{0}^{t_n} K(t_n - t') ρ(t') dt'` over the
    /// stored history `ρ_0..ρ_n`.
    fn integral(&self, history: &[DVector<C<T>>], dt: T) -> DVector<C<T>> {
        let n = history.len() - 1;
        let dim = history[0].len();
        let mut acc = DVector::zeros(dim);
        if n == 0 || self.lags.is_empty() {
            return acc;
        }
        let reach = n.min(self.lags.len() - 1);
        let half: T = lit(0.5);
        for m in 0..=reach {
            let w = if m == 0 || m == n { half } else { T::one() };
            acc += (&self.lags[m] * &history[n - m]) * re(w);
        }
        acc * re(dt)
    }
}

fn record<T: Real>(f: &Eigenframe<T>, rho_frame: &DMatrix<C<T>>, tag: SpaceTag) -> DensityOperator<T> {
    let op = Operator { tag, mat: f.from_frame(rho_frame) };
    DensityOperator::new_unchecked(op.hermitian_part())
}

/// Evolves `ρ_r` under `ρ̇ = -(i/ħ)[H_c, ρ] + D`, with `D` the
/// second-order coupling term integrated from the start of the run
/// (`ρ₂ = 0` there).
///
/// * `RetardedMaster` keeps the full memory `∫ K(t - t') ρ(t') dt'`.
/// * `MarkovMaster` replaces the retarded state by the freely
///   back-propagated current one, a time-local generator.
/// * `ExactOracle` evolves `ρ_r ⊗ ρ_e` under the full Hamiltonian and
///   traces the environment out.
pub fn evolve_master<T: Real>(
    rho_r0: &DensityOperator<T>,
    problem: &MasterProblem<T>,
    spec: &EvolutionSpec<T>,
) -> Result<Vec<(T, DensityOperator<T>)>> {
    rho_r0.op.require_dim(problem.h_c.dim())?;
    let steps = spec.steps();
    let dt = spec.step();
    let tag = rho_r0.tag();
    match spec.mode {
        Mode::ExactOracle => exact(rho_r0, problem, spec),
        Mode::MarkovMaster => {
            if spec.stationary_kernel && !(spec.epsilon > T::zero()) {
                return Err(Error::InvalidParameter("stationary kernel needs epsilon > 0".into()));
            }
            let f = Eigenframe::new(problem)?;
            let eps = spec.epsilon;
            let lag = |t: T| if spec.stationary_kernel { None } else { Some(t) };
            // interaction-picture derivative at time t
            let deriv = |t: T, x: &DMatrix<C<T>>| {
                let s = f.free(x, t);
                f.free(&markov_generator(&f, &s, lag(t), eps), -t)
            };
            let mut x = f.to_frame(&rho_r0.op.mat);
            let mut out = vec![(T::zero(), rho_r0.clone())];
            let half = dt * lit(0.5);
            for k in 0..steps {
                let t = dt * count::<T>(k);
                let k1 = deriv(t, &x);
                let k2 = deriv(t + half, &(&x + &k1 * re(half)));
                x += k2 * re(dt);
                if spec.keep(k + 1) {
                    let tn = t + dt;
                    out.push((tn, record(&f, &f.free(&x, tn), tag)));
                }
            }
            Ok(out)
        }
        Mode::RetardedMaster => {
            let f = Eigenframe::new(problem)?;
            let d = f.d_c;
            let kernel = MemoryKernel::build(&f, dt, steps, spec.kernel_truncation);
            if kernel.lags.len() <= steps && !kernel.lags.is_empty() {
                log::debug!("memory kernel truncated after {} lags", kernel.lags.len());
            }
            let mut x = f.to_frame(&rho_r0.op.mat);
            let mut history = vec![vectorize(&x)];
            let mut out = vec![(T::zero(), rho_r0.clone())];
            let half: C<T> = re(dt * lit(0.5));
            for k in 0..steps {
                let (t, tn) = (dt * count::<T>(k), dt * count::<T>(k + 1));
                let f0 = f.free(&unvectorize(&kernel.integral(&history, dt), d), -t);
                let pred = &x + &f0 * re(dt);
                history.push(vectorize(&f.free(&pred, tn)));
                let f1 = f.free(&unvectorize(&kernel.integral(&history, dt), d), -tn);
                x += (f0 + f1) * half;
                let s = f.free(&x, tn);
                *history.last_mut().unwrap() = vectorize(&s);
                if spec.keep(k + 1) {
                    out.push((tn, record(&f, &s, tag)));
                }
            }
            Ok(out)
        }
        other => Err(Error::InvalidParameter(format!("mode {other} does not act on density matrices"))),
    }
}

fn exact<T: Real>(
    rho_r0: &DensityOperator<T>,
    problem: &MasterProblem<T>,
    spec: &EvolutionSpec<T>,
) -> Result<Vec<(T, DensityOperator<T>)>> {
    let dims = problem.dims();
    let h = problem.total_hamiltonian()?;
    let prop = Propagator::new(&h, problem.hbar)?;
    let dt = spec.step();
    let u = prop.unitary(dt);
    let u_adj = u.adjoint();
    let mut full = tensor_product(&rho_r0.op, &problem.env.rho.op)?.mat;
    let mut out = vec![(T::zero(), rho_r0.clone())];
    for k in 1..=spec.steps() {
        full = &u * full * &u_adj;
        if spec.keep(k) {
            let op = Operator { tag: SpaceTag::Composite, mat: full.clone() };
            let reduced = partial_trace_env(&DensityOperator::new_unchecked(op), &dims)?;
            let op = Operator { tag: rho_r0.tag(), mat: reduced.op.mat };
            out.push((dt * count::<T>(k), DensityOperator::new_unchecked(op.hermitian_part())));
        }
    }
    Ok(out)
}
