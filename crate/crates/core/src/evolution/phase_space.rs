//! Pure decoherence `Ẇ = g^{ij} ∂_i ∂_j W` on a single phase-space pair.

use nalgebra::DMatrix;

use crate::coefficients::DecoherenceTensor;
use crate::error::{Error, Result};
use crate::hilbert::{DensityOperator, Operator};
use crate::scalar::{count, lit, re, to_f64, Real, C};
use crate::spectral::{self, Axis};
use crate::weyl::{self, momentum_basis, PhaseSpaceGrid, WignerFunction};

use super::BOUNDARY_LIMIT;

/// RK4 is stable on the negative real axis up to about 2.785.
const RK4_REAL_LIMIT: f64 = 2.5;

fn single_pair<T: Real>(g: &DecoherenceTensor<T>) -> Result<(T, T, T)> {
    if g.pairs() != 1 {
        return Err(Error::InvalidParameter(format!(
            "phase-space propagators handle one pair, tensor has {}",
            g.pairs()
        )));
    }
    Ok((g.gxx(), g.gxp(), g.gpp()))
}

/// Wavenumbers with the Nyquist bin set to zero, matching the spectral
/// derivative convention.
fn resolved_wavenumbers<T: Real>(n: usize, spacing: T) -> Vec<T> {
    let mut k = spectral::wavenumbers(n, spacing);
    k[n / 2] = T::zero();
    k
}

/// Fourier symbol `-(g^{xx} k_x² + 2 g^{xp} k_x k_p + g^{pp} k_p²)`.
fn laplacian_symbol<T: Real>(grid: &PhaseSpaceGrid<T>, g: (T, T, T)) -> DMatrix<T> {
    let n = grid.n();
    let kx = resolved_wavenumbers(n, grid.dx());
    let kp = resolved_wavenumbers(n, grid.dp());
    let two: T = lit(2.0);
    DMatrix::from_fn(n, n, |a, b| -(g.0 * kx[a] * kx[a] + two * g.1 * kx[a] * kp[b] + g.2 * kp[b] * kp[b]))
}

fn apply_multiplier<T: Real>(field: &DMatrix<C<T>>, m: &DMatrix<T>) -> DMatrix<C<T>> {
    let mut f = field.clone();
    spectral::fft_axis(&mut f, Axis::Rows, false);
    spectral::fft_axis(&mut f, Axis::Cols, false);
    let norm = T::one() / count::<T>(f.nrows() * f.ncols());
    f.zip_apply(m, |z, s| *z *= s * norm);
    spectral::fft_axis(&mut f, Axis::Rows, true);
    spectral::fft_axis(&mut f, Axis::Cols, true);
    f
}

/// Weight of `|W|` in the outer sixteenth of each axis relative to its
/// total absolute mass.
pub fn wigner_boundary_mass<T: Real>(w: &WignerFunction<T>) -> T {
    let n = w.grid.n();
    let band = (n / 16).max(1);
    let edge = |i: usize| i < band || i >= n - band;
    let mut total = T::zero();
    let mut outer = T::zero();
    for k in 0..n {
        for j in 0..n {
            let a = w.values[(j, k)].abs();
            total += a;
            if edge(j) || edge(k) {
                outer += a;
            }
        }
    }
    if total == T::zero() {
        T::zero()
    } else {
        outer / total
    }
}

/// Aborts when mass reaches the boundary during a run that started clean.
pub(crate) struct BoundaryGuard {
    armed: bool,
}

impl BoundaryGuard {
    pub(crate) fn new<T: Real>(w0: &WignerFunction<T>) -> Self {
        Self { armed: to_f64(wigner_boundary_mass(w0)) <= BOUNDARY_LIMIT }
    }

    pub(crate) fn check<T: Real>(&self, w: &WignerFunction<T>) -> Result<()> {
        if !self.armed {
            return Ok(());
        }
        let mass = to_f64(wigner_boundary_mass(w));
        if mass > BOUNDARY_LIMIT {
            return Err(Error::BoundaryMass { mass, limit: BOUNDARY_LIMIT });
        }
        Ok(())
    }
}

/// Pure-decoherence generator `D(A)`: the operator whose Weyl symbol is
/// `g^{ij} ∂_i ∂_j` of the symbol of `A`. Self-adjoint for the
/// Hilbert–Schmidt product.
pub fn decoherence_generator<T: Real>(
    a: &Operator<T>,
    g: &DecoherenceTensor<T>,
    grid: &PhaseSpaceGrid<T>,
) -> Result<Operator<T>> {
    let comps = single_pair(g)?;
    a.require_dim(grid.n())?;
    let sym = weyl::weyl_symbol(&a.mat, grid);
    let out = apply_multiplier(&sym, &laplacian_symbol(grid, comps));
    Ok(Operator { tag: a.tag, mat: weyl::weyl_operator(&out, grid) })
}

/// Closed-form degenerate decay: `ρ(x,x') e^{-g^{pp}(x-x')² t/ħ²}` when
/// only `g^{pp}` is non-zero, the momentum-basis dual when only `g^{xx}`
/// is.
pub fn pure_decoherence_closed<T: Real>(
    rho_r0: &DensityOperator<T>,
    g: &DecoherenceTensor<T>,
    t: T,
    grid: &PhaseSpaceGrid<T>,
) -> Result<DensityOperator<T>> {
    let (gxx, gxp, gpp) = single_pair(g)?;
    rho_r0.op.require_dim(grid.n())?;
    if !g.is_degenerate() {
        return Err(Error::WrongDegeneracy { found: "non-degenerate".into(), required: "degenerate".into() });
    }
    if t < T::zero() {
        return Err(Error::InvalidParameter("time must be >= 0".into()));
    }
    let scale = gxx.abs().max(gxp.abs()).max(gpp.abs());
    if scale == T::zero() || t == T::zero() {
        return Ok(rho_r0.clone());
    }
    let small = |v: T| v.abs() <= lit::<T>(1e-12) * scale;
    let hbar2 = grid.hbar * grid.hbar;
    let n = grid.n();
    let decay = |coef: T, u: &[T]| {
        DMatrix::from_fn(n, n, |a, b| {
            let d = u[a] - u[b];
            (-(coef * d * d * t) / hbar2).exp()
        })
    };
    let mat = if small(gxx) && small(gxp) {
        let f = decay(gpp, &grid.xs());
        rho_r0.op.mat.zip_map(&f, |z, s| z * s)
    } else if small(gpp) && small(gxp) {
        let u = momentum_basis(grid);
        let in_p = u.adjoint() * &rho_r0.op.mat * &u;
        let f = decay(gxx, &grid.ps());
        let out = in_p.zip_map(&f, |z, s| z * s);
        &u * out * u.adjoint()
    } else {
        return Err(Error::InvalidParameter(
            "degenerate tensor is not aligned with x or p; rotate it first or use finite_difference_pure".into(),
        ));
    };
    let op = Operator { tag: rho_r0.tag(), mat };
    Ok(DensityOperator::new_unchecked(op.hermitian_part()))
}

/// Exact Gaussian smearing `W ↦ W * N(0, 2 g t)`, applied as the Fourier
/// multiplier `exp(-kᵀ g k t)` on the periodic grid.
pub fn heat_kernel_evolve<T: Real>(w0: &WignerFunction<T>, g: &DecoherenceTensor<T>, t: T) -> Result<WignerFunction<T>> {
    let comps = single_pair(g)?;
    if g.is_degenerate() {
        return Err(Error::WrongDegeneracy { found: "degenerate".into(), required: "non-degenerate".into() });
    }
    if !(t > T::zero()) {
        return Err(Error::InvalidParameter("heat kernel needs t > 0".into()));
    }
    let out = smear(w0, comps, t);
    BoundaryGuard::new(w0).check(&out)?;
    Ok(out)
}

/// Heat-kernel step for any positive semidefinite tensor.
pub(crate) fn smear<T: Real>(w0: &WignerFunction<T>, g: (T, T, T), t: T) -> WignerFunction<T> {
    let m = laplacian_symbol(&w0.grid, g).map(|s| (s * t).exp());
    let out = apply_multiplier(&w0.to_complex(), &m);
    WignerFunction { grid: w0.grid, values: out.map(|z| z.re) }
}

/// Evolves an arbitrary operator (not necessarily Hermitian) under pure
/// decoherence for time `t` through the exact Fourier multiplier.
pub(crate) fn smear_operator<T: Real>(a: &DMatrix<C<T>>, g: &DecoherenceTensor<T>, t: T, grid: &PhaseSpaceGrid<T>) -> Result<DMatrix<C<T>>> {
    let comps = single_pair(g)?;
    let m = laplacian_symbol(grid, comps).map(|s| (s * t).exp());
    let sym = weyl::weyl_symbol(a, grid);
    Ok(weyl::weyl_operator(&apply_multiplier(&sym, &m), grid))
}

/// Fastest decay rate `max_k kᵀ g k` of the discrete decoherence
/// Laplacian, i.e. its operator norm on the grid.
pub fn generator_norm<T: Real>(g: &DecoherenceTensor<T>, grid: &PhaseSpaceGrid<T>) -> Result<T> {
    let comps = single_pair(g)?;
    Ok(laplacian_symbol(grid, comps).iter().fold(T::zero(), |m, &s| m.max(-s)))
}

/// Heat-kernel evolution without the degeneracy restriction.
pub(crate) fn smear_wigner<T: Real>(w0: &WignerFunction<T>, g: &DecoherenceTensor<T>, t: T) -> Result<WignerFunction<T>> {
    Ok(smear(w0, single_pair(g)?, t))
}

/// Largest RK4 step for the spectral Laplacian of `g` on `grid`.
pub fn finite_difference_stable_dt<T: Real>(grid: &PhaseSpaceGrid<T>, g: &DecoherenceTensor<T>) -> Result<T> {
    let lambda = generator_norm(g, grid)?;
    Ok(if lambda > T::zero() { lit::<T>(RK4_REAL_LIMIT) / lambda } else { T::max_value().unwrap() })
}

fn laplacian_rhs<T: Real>(w: &DMatrix<C<T>>, grid: &PhaseSpaceGrid<T>, g: (T, T, T)) -> DMatrix<C<T>> {
    let h = (grid.dx(), grid.dp());
    let mut out = DMatrix::zeros(w.nrows(), w.ncols());
    if g.0 != T::zero() {
        out += spectral::derivative(w, h, (2, 0)) * re(g.0);
    }
    if g.1 != T::zero() {
        out += spectral::derivative(w, h, (1, 1)) * re(g.1 + g.1);
    }
    if g.2 != T::zero() {
        out += spectral::derivative(w, h, (0, 2)) * re(g.2);
    }
    out
}

/// Explicit RK4 integration of `Ẇ = g^{ij} ∂_i ∂_j W` with spectral
/// derivatives. The number of steps is `ceil(t/dt)`.
pub fn finite_difference_pure<T: Real>(
    w0: &WignerFunction<T>,
    g: &DecoherenceTensor<T>,
    t: T,
    dt: T,
) -> Result<WignerFunction<T>> {
    let comps = single_pair(g)?;
    if !(dt > T::zero()) || t < T::zero() {
        return Err(Error::InvalidParameter("need dt > 0 and t >= 0".into()));
    }
    let bound = finite_difference_stable_dt(&w0.grid, g)?;
    if dt > bound {
        return Err(Error::Unstable { dt: to_f64(dt), suggested: to_f64(bound) });
    }
    let steps = (to_f64(t / dt) - 1e-9).ceil().max(0.0) as usize;
    if steps == 0 {
        return Ok(w0.clone());
    }
    let h = t / count::<T>(steps);
    let grid = &w0.grid;
    let guard = BoundaryGuard::new(w0);
    let (half, sixth): (C<T>, C<T>) = (re(h * lit(0.5)), re(h / lit(6.0)));
    let two: C<T> = re(lit(2.0));
    let mut w = w0.to_complex();
    for step in 1..=steps {
        let k1 = laplacian_rhs(&w, grid, comps);
        let k2 = laplacian_rhs(&(&w + &k1 * half), grid, comps);
        let k3 = laplacian_rhs(&(&w + &k2 * half), grid, comps);
        let k4 = laplacian_rhs(&(&w + &k3 * re(h)), grid, comps);
        w += (k1 + k2 * two + k3 * two + k4) * sixth;
        if step % 16 == 0 || step == steps {
            guard.check(&WignerFunction { grid: *grid, values: w.map(|z| z.re) })?;
        }
    }
    Ok(WignerFunction { grid: *grid, values: w.map(|z| z.re) })
}
