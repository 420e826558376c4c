//! Projection onto the relevant description: collective dyads
//! `|k><k'| ⊗ I_e`, the identity and the environment energy `I_c ⊗ H_e`.
//! The test density is `ρ_r ⊗ ρ_e` with a thermal `ρ_e` of fixed `β`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hilbert::{
    partial_trace_collective, partial_trace_env_op, tensor_product, DensityOperator, HilbertDims, Operator, SpaceTag,
    ThermalEnvironment,
};
use crate::scalar::{lit, re, to_f64, Real, C};

/// Which relevant observables are tracked.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelevantSet {
    pub collective_dyads: Vec<(usize, usize)>,
    pub include_identity: bool,
    pub include_env_energy: bool,
}

impl RelevantSet {
    /// All `d_c²` dyads plus identity and environment energy.
    pub fn full(d_c: usize) -> Self {
        let collective_dyads = (0..d_c).flat_map(|k| (0..d_c).map(move |kp| (k, kp))).collect();
        Self { collective_dyads, include_identity: true, include_env_energy: true }
    }

    /// Whether the dyads cover the full collective operator basis.
    pub fn is_complete(&self, d_c: usize) -> bool {
        let mut seen = vec![false; d_c * d_c];
        for &(k, kp) in &self.collective_dyads {
            if k < d_c && kp < d_c {
                seen[k * d_c + kp] = true;
            }
        }
        seen.iter().all(|&s| s)
    }

    /// The observables as composite operators, in the order dyads,
    /// identity, environment energy.
    pub fn observables<T: Real>(&self, dims: &HilbertDims<T>, env: &ThermalEnvironment<T>) -> Result<Vec<Operator<T>>> {
        env.hamiltonian.require_dim(dims.d_e)?;
        let ie = Operator::identity(SpaceTag::Environment, dims.d_e);
        let mut out = Vec::new();
        for &(k, kp) in &self.collective_dyads {
            out.push(tensor_product(&dyad(dims.d_c, k, kp), &ie)?);
        }
        if self.include_identity {
            out.push(Operator::identity(SpaceTag::Composite, dims.composite()));
        }
        if self.include_env_energy {
            let ic = Operator::identity(SpaceTag::Collective, dims.d_c);
            out.push(tensor_product(&ic, &env.hamiltonian)?);
        }
        Ok(out)
    }
}

/// `|k><k'|` on the collective space.
pub fn dyad<T: Real>(d_c: usize, k: usize, kp: usize) -> Operator<T> {
    let mut m = DMatrix::zeros(d_c, d_c);
    m[(k, kp)] = re(T::one());
    Operator { tag: SpaceTag::Collective, mat: m }
}

/// Hermitian recombination of the dyads: `|k><k|`, `(|k><k'| + h.c.)/√2`
/// and `i(|k><k'| − h.c.)/√2` for `k < k'`. Orthonormal under
/// `tr_c(A B)`.
pub fn hermitian_collective_basis<T: Real>(d_c: usize) -> Vec<Operator<T>> {
    let s = T::one() / lit::<T>(2.0).sqrt();
    let mut out = Vec::with_capacity(d_c * d_c);
    for k in 0..d_c {
        out.push(dyad(d_c, k, k));
    }
    for k in 0..d_c {
        for kp in k + 1..d_c {
            let a = dyad::<T>(d_c, k, kp);
            let b = dyad::<T>(d_c, kp, k);
            out.push((&a + &b).scale(re(s)));
            out.push((&a - &b).scale(C::new(T::zero(), s)));
        }
    }
    out
}

/// Data entering the projector: the collective state of the test density
/// and the fixed thermal environment.
#[derive(Clone, Debug)]
pub struct ProjectionContext<T: Real> {
    pub rho_c: DensityOperator<T>,
    pub env: ThermalEnvironment<T>,
}

impl<T: Real> ProjectionContext<T> {
    /// Rejects environments with `Δ² < 1e-14·‖H_e‖²`, where the projector
    /// diverges.
    pub fn new(rho_c: DensityOperator<T>, env: ThermalEnvironment<T>) -> Result<Self> {
        rho_c.op.require_tag(SpaceTag::Collective)?;
        let scale = env.hamiltonian.max_abs();
        if env.variance <= lit::<T>(1e-14) * scale * scale || env.variance <= T::zero() {
            return Err(Error::DegenerateEnvironment { variance: to_f64(env.variance) });
        }
        Ok(Self { rho_c, env })
    }

    pub fn dims(&self) -> HilbertDims<T> {
        HilbertDims { d_c: self.rho_c.dim(), d_e: self.env.dim(), hbar: T::one() }
    }

    /// `ρ_e (H_e − E) / Δ²`.
    pub fn energy_direction(&self) -> Operator<T> {
        let d_e = self.env.dim();
        let shifted = &self.env.hamiltonian - &Operator::identity(SpaceTag::Environment, d_e).scale(re(self.env.energy));
        (&self.env.rho.op * &shifted).scale(re(T::one() / self.env.variance))
    }
}

/// `ρ₀ = ρ_r ⊗ ρ_e`.
pub fn build_test_density<T: Real>(rho_r: &DensityOperator<T>, env: &ThermalEnvironment<T>) -> Result<DensityOperator<T>> {
    Ok(DensityOperator::new_unchecked(tensor_product(&rho_r.op, &env.rho.op)?))
}

/// Densities dual to the relevant observables.
#[derive(Clone, Debug)]
pub struct AuxiliaryDensities<T: Real> {
    /// `s_{kk'} = |k'><k| ⊗ ρ_e`, indexed by `(k, k')`.
    pub dyads: Vec<((usize, usize), Operator<T>)>,
    /// `s_e = ρ_c ⊗ ρ_e (H_e − E) Δ⁻²`.
    pub energy: Operator<T>,
    /// `s_1 = −E s_e`.
    pub identity: Operator<T>,
}

/// Builds `s_{kk'}`, `s_e` and `s_1`.
///
/// The identity is the sum of the diagonal dyads, so its dual is not
/// unique; `s_1 = −E s_e` is the choice for which the dyad duals need no
/// correction. With it, `Tr(s_i A^j) = δ_i^j` holds on the dyads and on
/// the shifted energy `A^e − E·I`, while `Tr(s_{kk} A^e) = E`.
pub fn auxiliary_densities<T: Real>(ctx: &ProjectionContext<T>) -> Result<AuxiliaryDensities<T>> {
    let d_c = ctx.rho_c.dim();
    let mut dyads = Vec::with_capacity(d_c * d_c);
    for k in 0..d_c {
        for kp in 0..d_c {
            dyads.push(((k, kp), tensor_product(&dyad(d_c, kp, k), &ctx.env.rho.op)?));
        }
    }
    let energy = tensor_product(&ctx.rho_c.op, &ctx.energy_direction())?;
    let identity = energy.scale(re(-ctx.env.energy));
    Ok(AuxiliaryDensities { dyads, energy, identity })
}

/// `Pμ = tr_e μ ⊗ ρ_e + (ρ_c ⊗ ρ_e(H_e − E)Δ⁻²)·(Tr H_e μ − E Tr μ)`.
pub fn project_p<T: Real>(mu: &Operator<T>, ctx: &ProjectionContext<T>) -> Result<Operator<T>> {
    let dims = ctx.dims();
    mu.require_dim(dims.composite())?;
    let reduced = partial_trace_env_op(mu, &dims)?;
    let mut out = tensor_product(&reduced, &ctx.env.rho.op)?;
    let env_part = partial_trace_collective(mu, &dims)?;
    let he_mu = (&ctx.env.hamiltonian.mat * &env_part.mat).trace();
    let weight = he_mu - mu.trace() * ctx.env.energy;
    let dir = tensor_product(&ctx.rho_c.op, &ctx.energy_direction())?;
    out.mat += dir.mat * weight;
    Ok(out)
}

/// `Qμ = μ − Pμ`.
pub fn project_q<T: Real>(mu: &Operator<T>, ctx: &ProjectionContext<T>) -> Result<Operator<T>> {
    Ok(mu - &project_p(mu, ctx)?)
}

/// [`project_p`] on a density.
pub fn project_density<T: Real>(mu: &DensityOperator<T>, ctx: &ProjectionContext<T>) -> Result<DensityOperator<T>> {
    Ok(DensityOperator::new_unchecked(project_p(&mu.op, ctx)?.hermitian_part()))
}

/// `H'_c = H_c + tr_e(H₁ρ_e)`, `H'₁ = H₁ − tr_e(H₁ρ_e) ⊗ I_e`.
pub fn renormalize_coupling<T: Real>(
    h_c: &Operator<T>,
    h_1: &Operator<T>,
    env: &ThermalEnvironment<T>,
) -> Result<(Operator<T>, Operator<T>)> {
    h_c.require_tag(SpaceTag::Collective)?;
    h_1.require_tag(SpaceTag::Composite)?;
    let (d_c, d_e) = (h_c.dim(), env.dim());
    h_1.require_dim(d_c * d_e)?;
    let dims = HilbertDims { d_c, d_e, hbar: T::one() };
    let ic = Operator::identity(SpaceTag::Collective, d_c);
    let weighted = h_1 * &tensor_product(&ic, &env.rho.op)?;
    let mean = partial_trace_env_op(&weighted, &dims)?;
    let h_c2 = h_c + &mean;
    let ie = Operator::identity(SpaceTag::Environment, d_e);
    let h_12 = h_1 - &tensor_product(&mean, &ie)?;
    Ok((h_c2, h_12))
}

/// `tr_e(H₁ ρ_e)`, the mean coupling seen by the collective system.
pub fn mean_coupling<T: Real>(h_1: &Operator<T>, env: &ThermalEnvironment<T>, d_c: usize) -> Result<Operator<T>> {
    let dims = HilbertDims { d_c, d_e: env.dim(), hbar: T::one() };
    let ic = Operator::identity(SpaceTag::Collective, d_c);
    partial_trace_env_op(&(h_1 * &tensor_product(&ic, &env.rho.op)?), &dims)
}

/// Matrix `Tr(s_i A^j)` with rows the duals (dyads, `s_1`, `s_e`) and
/// columns the observables (dyads, `I`, `A^e`).
pub fn duality_matrix<T: Real>(ctx: &ProjectionContext<T>) -> Result<DMatrix<C<T>>> {
    let dims = ctx.dims();
    let aux = auxiliary_densities(ctx)?;
    let obs = RelevantSet::full(dims.d_c).observables(&dims, &ctx.env)?;
    let mut duals: Vec<&Operator<T>> = aux.dyads.iter().map(|(_, s)| s).collect();
    duals.push(&aux.identity);
    duals.push(&aux.energy);
    let mut m = DMatrix::zeros(duals.len(), obs.len());
    for (i, s) in duals.iter().enumerate() {
        for (j, a) in obs.iter().enumerate() {
            m[(i, j)] = (&s.mat * &a.mat).trace();
        }
    }
    Ok(m)
}

/// `Tr(A ρ)` for every relevant observable.
pub fn relevant_averages<T: Real>(rho: &Operator<T>, ctx: &ProjectionContext<T>) -> Result<Vec<C<T>>> {
    let dims = ctx.dims();
    let obs = RelevantSet::full(dims.d_c).observables(&dims, &ctx.env)?;
    Ok(obs.iter().map(|a| (&a.mat * &rho.mat).trace()).collect())
}
