//! Phase-space calculus on a periodic grid: Wigner transforms,
//! operator-valued Weyl symbols, the Moyal star product to second order
//! in ħ, trace formulas and smooth phase-space cell projectors.
//!
//! Positions are `x_j = x_min + j·Δx`, momenta `p_k = p_min + k·Δp`, with
//! `Δx·Δp·N = 2πħ` and `p_min` an integer multiple of `Δp`. Under these
//! two conditions the discrete transform below is an exact bijection
//! between `N×N` matrices and `N×N` phase-space fields.
//!
//! Density matrices are taken in the discrete position basis, so
//! `tr ρ = Σ_j ρ_jj` and `(2πħ)⁻¹ Σ W Δx Δp = tr ρ`.

use std::collections::BTreeMap;

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hilbert::{DensityOperator, Operator, SpaceTag};
use crate::scalar::{cis, count, lit, re, to_f64, Real, C};
use crate::spectral::{self, Axis};

/// Uniform periodic grid over one phase-space pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseSpaceGrid<T> {
    pub x_min: T,
    pub x_max: T,
    pub p_min: T,
    pub p_max: T,
    pub n_x: usize,
    pub n_p: usize,
    pub hbar: T,
}

impl<T: Real> PhaseSpaceGrid<T> {
    /// Validates an explicit grid. `x_max` and `p_max` are exclusive ends.
    pub fn new(x_min: T, x_max: T, p_min: T, p_max: T, n_x: usize, n_p: usize, hbar: T) -> Result<Self> {
        if n_x != n_p {
            return Err(Error::InvalidParameter(format!(
                "position and momentum counts must agree (n_x={n_x}, n_p={n_p})"
            )));
        }
        if n_x < 4 || !n_x.is_power_of_two() {
            return Err(Error::InvalidParameter(format!("grid count {n_x} must be a power of two >= 4")));
        }
        if !(hbar > T::zero()) || !(x_max > x_min) || !(p_max > p_min) {
            return Err(Error::InvalidParameter("grid ranges and hbar must be positive".into()));
        }
        let g = Self { x_min, x_max, p_min, p_max, n_x, n_p, hbar };
        let cell = g.dx() * g.dp() * count::<T>(n_x) / (T::two_pi() * hbar);
        if (cell - T::one()).abs() > crate::scalar::tol(1e-9) {
            return Err(Error::InvalidParameter(format!(
                "grid violates dx*dp*n = 2*pi*hbar (ratio {})",
                to_f64(cell)
            )));
        }
        let offset = p_min / g.dp();
        if (offset - offset.round()).abs() > crate::scalar::tol(1e-9) {
            return Err(Error::InvalidParameter("p_min must be an integer multiple of dp".into()));
        }
        Ok(g)
    }

    /// Grid with `n` nodes on `[x_min, x_max)` and momenta centred on
    /// `p_center` (rounded to the nearest multiple of `Δp`).
    pub fn from_position(n: usize, x_min: T, x_max: T, hbar: T, p_center: T) -> Result<Self> {
        let nn = count::<T>(n);
        let dx = (x_max - x_min) / nn;
        let dp = T::two_pi() * hbar / (nn * dx);
        let shift = (p_center / dp).round();
        let p_min = (shift - nn * lit(0.5)) * dp;
        Self::new(x_min, x_max, p_min, p_min + nn * dp, n, n, hbar)
    }

    /// Symmetric grid `[-L/2, L/2)` in position with momenta centred on 0.
    pub fn centered(n: usize, length: T, hbar: T) -> Result<Self> {
        let half = length * lit(0.5);
        Self::from_position(n, -half, half, hbar, T::zero())
    }

    pub fn n(&self) -> usize {
        self.n_x
    }

    pub fn dx(&self) -> T {
        (self.x_max - self.x_min) / count::<T>(self.n_x)
    }

    pub fn dp(&self) -> T {
        (self.p_max - self.p_min) / count::<T>(self.n_p)
    }

    pub fn x(&self, j: usize) -> T {
        self.x_min + count::<T>(j) * self.dx()
    }

    pub fn p(&self, k: usize) -> T {
        self.p_min + count::<T>(k) * self.dp()
    }

    pub fn xs(&self) -> Vec<T> {
        (0..self.n_x).map(|j| self.x(j)).collect()
    }

    pub fn ps(&self) -> Vec<T> {
        (0..self.n_p).map(|k| self.p(k)).collect()
    }

    /// Phase-space measure per node in units of `2πħ`, equal to `1/N`.
    pub fn node_weight(&self) -> T {
        self.dx() * self.dp() / (T::two_pi() * self.hbar)
    }

    fn p_offset(&self) -> i64 {
        to_f64(self.p_min / self.dp()).round() as i64
    }

    pub(crate) fn require_same(&self, other: &Self) -> Result<()> {
        let close = |a: T, b: T| (a - b).abs() <= crate::scalar::tol::<T>(1e-12) * (T::one() + a.abs().max(b.abs()));
        if self.n_x == other.n_x
            && close(self.x_min, other.x_min)
            && close(self.x_max, other.x_max)
            && close(self.p_min, other.p_min)
            && close(self.p_max, other.p_max)
            && close(self.hbar, other.hbar)
        {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Real Wigner function `W[j,k] = W(x_j, p_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WignerFunction<T: Real> {
    pub grid: PhaseSpaceGrid<T>,
    pub values: DMatrix<T>,
}

impl<T: Real> WignerFunction<T> {
    /// `(2πħ)⁻¹ ∫ W dx dp`.
    pub fn norm(&self) -> T {
        self.values.sum() * self.grid.node_weight()
    }

    /// `(2πħ)⁻¹ ∫ W² dx dp`, equal to `tr ρ²`.
    pub fn purity(&self) -> T {
        self.values.iter().fold(T::zero(), |s, &w| s + w * w) * self.grid.node_weight()
    }

    /// Position marginal `Σ_k W[j,k]/N`, the diagonal of the density matrix.
    pub fn x_marginal(&self) -> Vec<T> {
        let w = T::one() / count::<T>(self.grid.n());
        self.values.row_iter().map(|r| r.sum() * w).collect()
    }

    /// Momentum marginal `Σ_j W[j,k]/N` (probabilities on the momentum grid).
    pub fn p_marginal(&self) -> Vec<T> {
        let w = T::one() / count::<T>(self.grid.n());
        self.values.column_iter().map(|c| c.sum() * w).collect()
    }

    /// Mean of `f(x, p)` under `W`.
    pub fn expectation(&self, f: impl Fn(T, T) -> T) -> T {
        let mut s = T::zero();
        for k in 0..self.grid.n() {
            let p = self.grid.p(k);
            for j in 0..self.grid.n() {
                s += self.values[(j, k)] * f(self.grid.x(j), p);
            }
        }
        s * self.grid.node_weight()
    }

    /// Delimited text: `# x p W` header, one node per line, `x` outer.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("# x p W\n");
        for j in 0..self.grid.n() {
            for k in 0..self.grid.n() {
                s += &format!("{:e},{:e},{:e}\n", self.grid.x(j), self.grid.p(k), self.values[(j, k)]);
            }
        }
        s
    }

    /// Parses [`WignerFunction::to_csv`] output on `grid`; node coordinates
    /// must match the grid.
    pub fn from_csv(text: &str, grid: &PhaseSpaceGrid<T>) -> Result<Self> {
        let n = grid.n();
        let mut values = DMatrix::zeros(n, n);
        let mut idx = 0usize;
        let tol = grid.dx().min(grid.dp()) * lit(1e-6);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: i + 1, msg };
            if idx == n * n {
                return Err(perr("more rows than grid nodes".into()));
            }
            let f: Vec<T> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>().map(lit::<T>).map_err(|e| perr(format!("{e}"))))
                .collect::<Result<_>>()?;
            if f.len() != 3 {
                return Err(perr(format!("expected 3 fields, found {}", f.len())));
            }
            let (j, k) = (idx / n, idx % n);
            if (f[0] - grid.x(j)).abs() > tol || (f[1] - grid.p(k)).abs() > tol {
                return Err(perr(format!("node ({j}, {k}) does not match the grid")));
            }
            values[(j, k)] = f[2];
            idx += 1;
        }
        if idx != n * n {
            return Err(Error::Parse { line: 0, msg: format!("expected {} rows, found {idx}", n * n) });
        }
        Ok(Self { grid: grid.clone(), values })
    }

    pub fn to_complex(&self) -> DMatrix<C<T>> {
        self.values.map(re)
    }
}

fn floor_half(d: i64) -> i64 {
    d.div_euclid(2)
}

fn ceil_half(d: i64) -> i64 {
    -((-d).div_euclid(2))
}

/// Matrix index pair feeding centre `j` and displacement column `c`.
fn pair(j: usize, c: usize, n: usize) -> (usize, usize) {
    let d = spectral::signed_bin(c, n);
    let nn = n as i64;
    let a = (j as i64 + ceil_half(d)).rem_euclid(nn) as usize;
    let b = (j as i64 - floor_half(d)).rem_euclid(nn) as usize;
    (a, b)
}

/// Half-node shift phases applied to odd displacement columns.
fn half_shift<T: Real>(n: usize, forward: bool) -> Vec<C<T>> {
    (0..n)
        .map(|m| {
            if m == n / 2 {
                return C::new(T::one(), T::zero());
            }
            let s = T::from_i64(spectral::signed_bin(m, n)).unwrap();
            let theta = -T::pi() * s / count::<T>(n);
            cis(if forward { theta } else { -theta })
        })
        .collect()
}

fn momentum_phase<T: Real>(grid: &PhaseSpaceGrid<T>, forward: bool) -> Vec<C<T>> {
    let n = grid.n();
    let m = grid.p_offset();
    (0..n)
        .map(|c| {
            let k = ((m * c as i64).rem_euclid(n as i64)) as f64;
            let theta = -T::two_pi() * lit::<T>(k) / count::<T>(n);
            cis(if forward { theta } else { -theta })
        })
        .collect()
}

/// Weyl symbol of an arbitrary `N×N` matrix, built from its Hermitian and
/// anti-Hermitian parts so that the symbol of `A†` is `conj(Ā)` exactly.
pub(crate) fn weyl_symbol<T: Real>(a: &DMatrix<C<T>>, grid: &PhaseSpaceGrid<T>) -> DMatrix<C<T>> {
    let half: C<T> = re(lit(0.5));
    let h1 = (a + a.adjoint()) * half;
    let h2 = (a - a.adjoint()) * C::new(T::zero(), -lit::<T>(0.5));
    let w1 = weyl_forward(&h1, grid, true);
    let w2 = weyl_forward(&h2, grid, true);
    w1.zip_map(&w2, |u, v| C::new(u.re, v.re))
}

/// Inverse of [`weyl_symbol`].
pub(crate) fn weyl_operator<T: Real>(w: &DMatrix<C<T>>, grid: &PhaseSpaceGrid<T>) -> DMatrix<C<T>> {
    let h1 = weyl_inverse(&w.map(|z| re(z.re)), grid, true);
    let h2 = weyl_inverse(&w.map(|z| re(z.im)), grid, true);
    h1 + h2 * C::new(T::zero(), T::one())
}

/// Forward discrete Weyl transform of an `N×N` matrix. With `hermitian`
/// the Nyquist column is packed so a Hermitian input yields a real field.
pub(crate) fn weyl_forward<T: Real>(a: &DMatrix<C<T>>, grid: &PhaseSpaceGrid<T>, hermitian: bool) -> DMatrix<C<T>> {
    let n = grid.n();
    let mut f = DMatrix::from_fn(n, n, |j, c| {
        let (ia, ib) = pair(j, c, n);
        a[(ia, ib)]
    });
    shift_odd_columns(&mut f, true);
    if hermitian {
        let c = n / 2;
        for j in 0..n / 2 {
            let z = f[(j, c)];
            f[(j, c)] = re(z.re + z.im);
            f[(j + n / 2, c)] = re(z.re - z.im);
        }
    }
    let phase = momentum_phase(grid, true);
    for c in 0..n {
        for j in 0..n {
            f[(j, c)] *= phase[c];
        }
    }
    spectral::fft_axis(&mut f, Axis::Cols, false);
    f
}

/// Inverse of [`weyl_forward`].
pub(crate) fn weyl_inverse<T: Real>(w: &DMatrix<C<T>>, grid: &PhaseSpaceGrid<T>, hermitian: bool) -> DMatrix<C<T>> {
    let n = grid.n();
    let mut f = w.clone();
    spectral::fft_axis(&mut f, Axis::Cols, true);
    let phase = momentum_phase(grid, false);
    let inv_n = T::one() / count::<T>(n);
    for c in 0..n {
        for j in 0..n {
            f[(j, c)] *= phase[c] * inv_n;
        }
    }
    if hermitian {
        let c = n / 2;
        let half: T = lit(0.5);
        for j in 0..n / 2 {
            let (h0, h1) = (f[(j, c)].re, f[(j + n / 2, c)].re);
            let z = C::new((h0 + h1) * half, (h0 - h1) * half);
            f[(j, c)] = z;
            f[(j + n / 2, c)] = z.conj();
        }
    }
    shift_odd_columns(&mut f, false);
    let mut a = DMatrix::zeros(n, n);
    for c in 0..n {
        for j in 0..n {
            let (ia, ib) = pair(j, c, n);
            a[(ia, ib)] = f[(j, c)];
        }
    }
    a
}

fn shift_odd_columns<T: Real>(f: &mut DMatrix<C<T>>, forward: bool) {
    let n = f.nrows();
    let phase = half_shift::<T>(n, forward);
    let inv_n = T::one() / count::<T>(n);
    for c in 0..n {
        if spectral::signed_bin(c, n) % 2 == 0 {
            continue;
        }
        let col = f.column_mut(c);
        let mut line: Vec<C<T>> = col.iter().copied().collect();
        spectral::fft_1d(&mut line, false);
        for (m, z) in line.iter_mut().enumerate() {
            *z *= phase[m] * inv_n;
        }
        spectral::fft_1d(&mut line, true);
        f.column_mut(c).copy_from_slice(&line);
    }
}

/// Wigner function of a density in the position-grid basis.
pub fn wigner_transform<T: Real>(rho_r: &DensityOperator<T>, grid: &PhaseSpaceGrid<T>) -> Result<WignerFunction<T>> {
    rho_r.op.require_dim(grid.n())?;
    let boundary = boundary_mass(rho_r, grid);
    if boundary > lit(1e-8) {
        warn!("state carries {:.3e} of its weight near the grid boundary", to_f64(boundary));
    }
    let w = weyl_forward(&rho_r.op.mat, grid, true);
    Ok(WignerFunction { grid: *grid, values: w.map(|z| z.re) })
}

/// Density operator with Wigner function `w`.
pub fn inverse_wigner<T: Real>(w: &WignerFunction<T>) -> DensityOperator<T> {
    let a = weyl_inverse(&w.to_complex(), &w.grid, true);
    let op = Operator { tag: SpaceTag::Collective, mat: a };
    DensityOperator::new_unchecked(op.hermitian_part())
}

/// Weight of `ρ` in the outer eighth of the position grid and of the
/// momentum grid (the larger of the two), relative to `|tr ρ|`.
pub fn boundary_mass<T: Real>(rho: &DensityOperator<T>, grid: &PhaseSpaceGrid<T>) -> T {
    let n = grid.n();
    if rho.dim() != n {
        return T::zero();
    }
    let band = (n / 16).max(1);
    let edge = |i: usize| i < band || i >= n - band;
    let total = rho.trace.re.abs();
    if total == T::zero() {
        return T::zero();
    }
    let xw = (0..n).filter(|&j| edge(j)).fold(T::zero(), |s, j| s + rho.op.mat[(j, j)].re.abs());
    let pd = momentum_distribution(rho, grid);
    let pw = (0..n).filter(|&k| edge(k)).fold(T::zero(), |s, k| s + pd[k].abs());
    xw.max(pw) / total
}

/// Diagonal of `ρ` in the momentum basis `|p_k>`.
pub fn momentum_distribution<T: Real>(rho: &DensityOperator<T>, grid: &PhaseSpaceGrid<T>) -> Vec<T> {
    let u = momentum_basis(grid);
    let m = u.adjoint() * &rho.op.mat * &u;
    (0..grid.n()).map(|k| m[(k, k)].re).collect()
}

/// Unitary whose columns are the momentum eigenvectors
/// `<x_j|p_k> = e^{i p_k x_j/ħ}/√N`.
pub fn momentum_basis<T: Real>(grid: &PhaseSpaceGrid<T>) -> DMatrix<C<T>> {
    let n = grid.n();
    let s = T::one() / count::<T>(n).sqrt();
    // reduce the phase modulo 2π exactly through integer arithmetic on the
    // node indices: p_k x_j / ħ = 2π (M + k)(x_min/Δx + j)/N
    let x0 = grid.x_min / grid.dx();
    let m = grid.p_offset();
    DMatrix::from_fn(n, n, |j, k| {
        let kk = (m + k as i64) as f64;
        let frac = (kk * j as f64).rem_euclid(n as f64);
        let theta = T::two_pi() * (lit::<T>(frac) + lit::<T>(kk) * x0) / count::<T>(n);
        cis(theta) * s
    })
}

/// Position operator `diag(x_j)`.
pub fn position_operator<T: Real>(grid: &PhaseSpaceGrid<T>) -> Operator<T> {
    Operator::diagonal(SpaceTag::Collective, &grid.xs())
}

/// Momentum operator, diagonal in the discrete momentum basis.
pub fn momentum_operator<T: Real>(grid: &PhaseSpaceGrid<T>) -> Operator<T> {
    function_of_momentum(grid, |p| p)
}

/// `f(P)` through the discrete momentum basis.
pub fn function_of_momentum<T: Real>(grid: &PhaseSpaceGrid<T>, f: impl Fn(T) -> T) -> Operator<T> {
    let u = momentum_basis(grid);
    let d = DMatrix::from_diagonal(&DVector::from_iterator(grid.n(), grid.ps().into_iter().map(|p| re(f(p)))));
    Operator { tag: SpaceTag::Collective, mat: &u * d * u.adjoint() }.hermitian_part()
}

/// `P²/2m + V(X)` on the grid.
pub fn grid_hamiltonian<T: Real>(grid: &PhaseSpaceGrid<T>, mass: T, potential: impl Fn(T) -> T) -> Operator<T> {
    let two_m = mass + mass;
    let kin = function_of_momentum(grid, |p| p * p / two_m);
    let pot = Operator::diagonal(SpaceTag::Collective, &grid.xs().into_iter().map(potential).collect::<Vec<_>>());
    &kin + &pot
}

/// Normalized Gaussian wave packet with position spread `sigma`
/// (`|ψ|² ∝ e^{-(x-x0)²/2σ²}`).
pub fn gaussian_state<T: Real>(grid: &PhaseSpaceGrid<T>, x0: T, p0: T, sigma: T) -> DVector<C<T>> {
    let quarter: T = lit(0.25);
    let v = DVector::from_iterator(
        grid.n(),
        grid.xs().into_iter().map(|x| {
            let u = (x - x0) / sigma;
            cis(p0 * x / grid.hbar) * (-(u * u) * quarter).exp()
        }),
    );
    let norm = v.norm();
    v.map(|z| z / norm)
}

/// Normalized superposition `ψ1 + ψ2` of Gaussians centred at `x0 ± sep/2`.
pub fn cat_state<T: Real>(grid: &PhaseSpaceGrid<T>, x0: T, separation: T, p0: T, sigma: T) -> DVector<C<T>> {
    let h = separation * lit(0.5);
    let v = gaussian_state(grid, x0 - h, p0, sigma) + gaussian_state(grid, x0 + h, p0, sigma);
    let norm = v.norm();
    v.map(|z| z / norm)
}

const POLY: usize = 5;

/// Polynomial `Σ c[i][j] x^i p^j` of total degree at most 4. Carries the
/// non-periodic part of a symbol (e.g. `x`, `p`, `p²/2m`) with exact
/// derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Poly<T: Real> {
    pub c: [[C<T>; POLY]; POLY],
}

impl<T: Real> Poly<T> {
    pub fn zero() -> Self {
        Self { c: [[C::new(T::zero(), T::zero()); POLY]; POLY] }
    }

    pub fn constant(v: C<T>) -> Self {
        Self::monomial(v, 0, 0)
    }

    /// `v x^i p^j`.
    pub fn monomial(v: C<T>, i: usize, j: usize) -> Self {
        assert!(i + j < POLY, "degree above 4");
        let mut p = Self::zero();
        p.c[i][j] = v;
        p
    }

    pub fn x() -> Self {
        Self::monomial(re(T::one()), 1, 0)
    }

    pub fn p() -> Self {
        Self::monomial(re(T::one()), 0, 1)
    }

    /// Real quadratic `c0 + cx x + cp p + cxx x² + cxp xp + cpp p²`.
    pub fn quadratic(c0: T, cx: T, cp: T, cxx: T, cxp: T, cpp: T) -> Self {
        let mut p = Self::zero();
        p.c[0][0] = re(c0);
        p.c[1][0] = re(cx);
        p.c[0][1] = re(cp);
        p.c[2][0] = re(cxx);
        p.c[1][1] = re(cxp);
        p.c[0][2] = re(cpp);
        p
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().flatten().all(|z| z.re == T::zero() && z.im == T::zero())
    }

    /// Total degree, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        let mut d = None;
        for i in 0..POLY {
            for j in 0..POLY {
                let z = self.c[i][j];
                if z.re != T::zero() || z.im != T::zero() {
                    d = Some(d.map_or(i + j, |v: usize| v.max(i + j)));
                }
            }
        }
        d
    }

    pub fn eval(&self, x: T, p: T) -> C<T> {
        let mut s = C::new(T::zero(), T::zero());
        let mut xi = T::one();
        for i in 0..POLY {
            let mut pj = T::one();
            for j in 0..POLY {
                s += self.c[i][j] * (xi * pj);
                pj *= p;
            }
            xi *= x;
        }
        s
    }

    /// `∂_x^a ∂_p^b`.
    pub fn derivative(&self, a: usize, b: usize) -> Self {
        let mut out = Self::zero();
        for i in a..POLY {
            for j in b..POLY {
                let mut f = 1usize;
                for k in 0..a {
                    f *= i - k;
                }
                for k in 0..b {
                    f *= j - k;
                }
                out.c[i - a][j - b] = self.c[i][j] * count::<T>(f);
            }
        }
        out
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut out = *self;
        for i in 0..POLY {
            for j in 0..POLY {
                out.c[i][j] += o.c[i][j];
            }
        }
        out
    }

    pub fn scale(&self, s: C<T>) -> Self {
        let mut out = *self;
        out.c.iter_mut().flatten().for_each(|z| *z *= s);
        out
    }

    /// Product, or `None` when the degree would exceed 4.
    pub fn mul(&self, o: &Self) -> Option<Self> {
        let (da, db) = match (self.degree(), o.degree()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Some(Self::zero()),
        };
        if da + db >= POLY {
            return None;
        }
        let mut out = Self::zero();
        for i in 0..POLY {
            for j in 0..POLY {
                if self.c[i][j] == C::new(T::zero(), T::zero()) {
                    continue;
                }
                for k in 0..POLY - i {
                    for l in 0..POLY - j {
                        out.c[i + k][j + l] += self.c[i][j] * o.c[k][l];
                    }
                }
            }
        }
        Some(out)
    }

    pub fn sample(&self, grid: &PhaseSpaceGrid<T>) -> DMatrix<C<T>> {
        DMatrix::from_fn(grid.n(), grid.n(), |j, k| self.eval(grid.x(j), grid.p(k)))
    }
}

/// One scalar symbol: a periodic grid field plus a polynomial part.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolBlock<T: Real> {
    pub field: DMatrix<C<T>>,
    pub poly: Poly<T>,
}

impl<T: Real> SymbolBlock<T> {
    pub fn zeros(n: usize) -> Self {
        Self { field: DMatrix::zeros(n, n), poly: Poly::zero() }
    }

    pub fn from_field(field: DMatrix<C<T>>) -> Self {
        Self { field, poly: Poly::zero() }
    }

    pub fn from_poly(n: usize, poly: Poly<T>) -> Self {
        Self { field: DMatrix::zeros(n, n), poly }
    }

    /// Values at the grid nodes.
    pub fn sample(&self, grid: &PhaseSpaceGrid<T>) -> DMatrix<C<T>> {
        if self.poly.is_zero() {
            self.field.clone()
        } else {
            &self.field + self.poly.sample(grid)
        }
    }

    /// `∂_x^a ∂_p^b`, spectral on the field and exact on the polynomial.
    pub fn derivative(&self, grid: &PhaseSpaceGrid<T>, a: u32, b: u32) -> Self {
        Self {
            field: spectral::derivative(&self.field, (grid.dx(), grid.dp()), (a, b)),
            poly: self.poly.derivative(a as usize, b as usize),
        }
    }

    pub fn add_assign(&mut self, o: &Self) {
        self.field += &o.field;
        self.poly = self.poly.add(&o.poly);
    }

    pub fn scale(&self, s: C<T>) -> Self {
        Self { field: &self.field * s, poly: self.poly.scale(s) }
    }

    /// Pointwise product. Mixed field/polynomial terms and polynomial
    /// products above degree 4 are sampled into the field.
    pub fn mul(&self, o: &Self, grid: &PhaseSpaceGrid<T>) -> Self {
        let mut field = self.field.component_mul(&o.field);
        if !o.poly.is_zero() {
            field += self.field.component_mul(&o.poly.sample(grid));
        }
        if !self.poly.is_zero() {
            field += self.poly.sample(grid).component_mul(&o.field);
        }
        let poly = match self.poly.mul(&o.poly) {
            Some(p) => p,
            None => {
                field += self.poly.sample(grid).component_mul(&o.poly.sample(grid));
                Poly::zero()
            }
        };
        Self { field, poly }
    }

    pub fn max_abs(&self, grid: &PhaseSpaceGrid<T>) -> T {
        self.sample(grid).iter().fold(T::zero(), |m, z| m.max(z.norm_sqr().sqrt()))
    }
}

/// Operator-valued Weyl symbol, block-sparse in the environment indices.
/// A scalar symbol has the single block `(0, 0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorSymbol<T: Real> {
    pub grid: PhaseSpaceGrid<T>,
    pub blocks: BTreeMap<(usize, usize), SymbolBlock<T>>,
}

impl<T: Real> OperatorSymbol<T> {
    pub fn zero(grid: &PhaseSpaceGrid<T>) -> Self {
        Self { grid: *grid, blocks: BTreeMap::new() }
    }

    pub fn scalar(grid: &PhaseSpaceGrid<T>, block: SymbolBlock<T>) -> Self {
        let mut blocks = BTreeMap::new();
        blocks.insert((0, 0), block);
        Self { grid: *grid, blocks }
    }

    pub fn from_poly(grid: &PhaseSpaceGrid<T>, poly: Poly<T>) -> Self {
        Self::scalar(grid, SymbolBlock::from_poly(grid.n(), poly))
    }

    /// `x̄`.
    pub fn position(grid: &PhaseSpaceGrid<T>) -> Self {
        Self::from_poly(grid, Poly::x())
    }

    /// `p̄`.
    pub fn momentum(grid: &PhaseSpaceGrid<T>) -> Self {
        Self::from_poly(grid, Poly::p())
    }

    pub fn from_wigner(w: &WignerFunction<T>) -> Self {
        Self::scalar(&w.grid, SymbolBlock::from_field(w.to_complex()))
    }

    /// Weyl symbol of a collective operator on the position grid.
    pub fn from_operator(op: &Operator<T>, grid: &PhaseSpaceGrid<T>) -> Result<Self> {
        op.require_dim(grid.n())?;
        Ok(Self::scalar(grid, SymbolBlock::from_field(weyl_symbol(&op.mat, grid))))
    }

    /// Partial Weyl symbol of a composite operator whose collective factor
    /// is the position grid. Blocks that vanish identically are dropped.
    pub fn from_composite(op: &Operator<T>, grid: &PhaseSpaceGrid<T>, d_e: usize) -> Result<Self> {
        let n = grid.n();
        op.require_dim(n * d_e)?;
        let mut blocks = BTreeMap::new();
        for e in 0..d_e {
            for ep in 0..d_e {
                let sub = DMatrix::from_fn(n, n, |a, b| op.mat[(a * d_e + e, b * d_e + ep)]);
                if sub.iter().all(|z| z.re == T::zero() && z.im == T::zero()) {
                    continue;
                }
                blocks.insert((e, ep), SymbolBlock::from_field(weyl_symbol(&sub, grid)));
            }
        }
        Ok(Self { grid: *grid, blocks })
    }

    /// Operator with this symbol (scalar symbols only use block `(0,0)`).
    pub fn to_operator(&self) -> Operator<T> {
        let n = self.grid.n();
        let mat = match self.blocks.get(&(0, 0)) {
            Some(b) => weyl_operator(&b.sample(&self.grid), &self.grid),
            None => DMatrix::zeros(n, n),
        };
        Operator { tag: SpaceTag::Collective, mat }
    }

    /// Composite operator with environment dimension `d_e`.
    pub fn to_composite(&self, d_e: usize) -> Result<Operator<T>> {
        let n = self.grid.n();
        let mut mat = DMatrix::zeros(n * d_e, n * d_e);
        for (&(e, ep), b) in &self.blocks {
            if e >= d_e || ep >= d_e {
                return Err(Error::DimensionMismatch { expected: d_e, found: e.max(ep) + 1 });
            }
            let sub = weyl_operator(&b.sample(&self.grid), &self.grid);
            for a in 0..n {
                for bb in 0..n {
                    mat[(a * d_e + e, bb * d_e + ep)] = sub[(a, bb)];
                }
            }
        }
        Ok(Operator { tag: SpaceTag::Composite, mat })
    }

    pub fn block(&self, e: usize, ep: usize) -> Option<&SymbolBlock<T>> {
        self.blocks.get(&(e, ep))
    }

    /// Grid values of block `(e, e')`, zero when absent.
    pub fn sample(&self, e: usize, ep: usize) -> DMatrix<C<T>> {
        match self.blocks.get(&(e, ep)) {
            Some(b) => b.sample(&self.grid),
            None => DMatrix::zeros(self.grid.n(), self.grid.n()),
        }
    }

    pub fn derivative(&self, a: u32, b: u32) -> Self {
        let blocks = self.blocks.iter().map(|(&k, v)| (k, v.derivative(&self.grid, a, b))).collect();
        Self { grid: self.grid, blocks }
    }

    pub fn scale(&self, s: C<T>) -> Self {
        let blocks = self.blocks.iter().map(|(&k, v)| (k, v.scale(s))).collect();
        Self { grid: self.grid, blocks }
    }

    pub fn add(&self, o: &Self) -> Result<Self> {
        self.grid.require_same(&o.grid)?;
        let mut out = self.clone();
        for (&k, v) in &o.blocks {
            out.blocks.entry(k).or_insert_with(|| SymbolBlock::zeros(self.grid.n())).add_assign(v);
        }
        Ok(out)
    }

    /// Block-matrix pointwise product `(AB)_{nn'} = Σ_m A_{nm} B_{mn'}`,
    /// keeping operator order.
    pub fn pointwise(&self, o: &Self) -> Result<Self> {
        self.grid.require_same(&o.grid)?;
        let mut blocks: BTreeMap<(usize, usize), SymbolBlock<T>> = BTreeMap::new();
        for (&(n, m), a) in &self.blocks {
            for (&(m2, np), b) in o.blocks.range((m, 0)..(m + 1, 0)) {
                debug_assert_eq!(m, m2);
                let prod = a.mul(b, &self.grid);
                blocks.entry((n, np)).or_insert_with(|| SymbolBlock::zeros(self.grid.n())).add_assign(&prod);
            }
        }
        Ok(Self { grid: self.grid, blocks })
    }
}

/// Moyal star product truncated at `order` ∈ {0, 1, 2} in ħ:
/// `a⋆b = ab + (iħ/2)(a_x b_p − a_p b_x) − (ħ²/8)(a_xx b_pp − 2a_xp b_xp + a_pp b_xx)`.
pub fn moyal_product<T: Real>(a: &OperatorSymbol<T>, b: &OperatorSymbol<T>, order: u32) -> Result<OperatorSymbol<T>> {
    if order > 2 {
        return Err(Error::InvalidParameter(format!("Moyal order {order} not in 0..=2")));
    }
    a.grid.require_same(&b.grid)?;
    let hbar = a.grid.hbar;
    let mut out = a.pointwise(b)?;
    if order >= 1 {
        let (ax, ap) = (a.derivative(1, 0), a.derivative(0, 1));
        let (bx, bp) = (b.derivative(1, 0), b.derivative(0, 1));
        let bracket = ax.pointwise(&bp)?.add(&ap.pointwise(&bx)?.scale(re(-T::one())))?;
        out = out.add(&bracket.scale(C::new(T::zero(), hbar * lit(0.5))))?;
    }
    if order >= 2 {
        let (axx, axp, app) = (a.derivative(2, 0), a.derivative(1, 1), a.derivative(0, 2));
        let (bxx, bxp, bpp) = (b.derivative(2, 0), b.derivative(1, 1), b.derivative(0, 2));
        let second = axx
            .pointwise(&bpp)?
            .add(&app.pointwise(&bxx)?)?
            .add(&axp.pointwise(&bxp)?.scale(re(lit(-2.0))))?;
        out = out.add(&second.scale(re(-(hbar * hbar) / lit(8.0))))?;
    }
    Ok(out)
}

/// `(2πħ)⁻¹ ∫ dx dp tr Ā(x, p)` by grid quadrature.
pub fn symbol_trace<T: Real>(a: &OperatorSymbol<T>) -> C<T> {
    let mut s = C::new(T::zero(), T::zero());
    for (&(e, ep), b) in &a.blocks {
        if e == ep {
            s += b.sample(&a.grid).sum();
        }
    }
    s * a.grid.node_weight()
}

/// Phase-space cell `|x − x_c| ≤ Lx`, `|p − p_c| ≤ Lp` with a smoothing band
/// of width `margin·L` inside each edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseCell<T> {
    pub center: (T, T),
    pub half_widths: (T, T),
    pub margin: T,
}

impl<T: Real> PhaseCell<T> {
    pub fn new(center: (T, T), half_widths: (T, T)) -> Self {
        Self { center, half_widths, margin: lit(0.1) }
    }

    pub fn with_margin(mut self, margin: T) -> Self {
        self.margin = margin;
        self
    }

    /// Full cell area `4·Lx·Lp`.
    pub fn area(&self) -> T {
        lit::<T>(4.0) * self.half_widths.0 * self.half_widths.1
    }

    /// Value of the profile at `(x, p)`.
    pub fn profile(&self, x: T, p: T) -> T {
        edge_profile(x - self.center.0, self.half_widths.0, self.margin)
            * edge_profile(p - self.center.1, self.half_widths.1, self.margin)
    }
}

fn edge_profile<T: Real>(u: T, half: T, margin: T) -> T {
    let a = u.abs();
    let inner = half * (T::one() - margin);
    if a <= inner {
        T::one()
    } else if a >= half {
        T::zero()
    } else {
        let s = (a - inner) / (half * margin);
        (T::one() + (T::pi() * s).cos()) * lit(0.5)
    }
}

/// Smooth cell projector: its symbol and the operator it quantizes to.
pub fn quasi_projector<T: Real>(cell: &PhaseCell<T>, grid: &PhaseSpaceGrid<T>) -> Result<(OperatorSymbol<T>, Operator<T>)> {
    if !(cell.margin > T::zero() && cell.margin < lit(0.5)) {
        return Err(Error::InvalidParameter("cell margin must lie in (0, 0.5)".into()));
    }
    let quantum = T::two_pi() * grid.hbar;
    let area = cell.area();
    if area < quantum {
        return Err(Error::CellTooSmall { area: to_f64(area), quantum: to_f64(quantum) });
    }
    if area < quantum * lit(10.0) {
        warn!("cell area {:.3e} is below 10 Planck cells", to_f64(area));
    }
    let field = DMatrix::from_fn(grid.n(), grid.n(), |j, k| re(cell.profile(grid.x(j), grid.p(k))));
    let a = weyl_inverse(&field, grid, true);
    let op = Operator { tag: SpaceTag::Collective, mat: a }.hermitian_part();
    Ok((OperatorSymbol::scalar(grid, SymbolBlock::from_field(field)), op))
}
