//! Liouville flow of a Wigner function under a Hamilton function, with the
//! leading `ħ²` Moyal correction and optional decoherence smearing.

use nalgebra::DMatrix;

use crate::coefficients::DecoherenceTensor;
use crate::error::{Error, Result};
use crate::scalar::{count, lit, re, to_f64, Real, C};
use crate::spectral;
use crate::weyl::{PhaseSpaceGrid, Poly, WignerFunction};

use super::phase_space::{smear, BoundaryGuard};
use super::EvolutionSpec;

/// RK4 is stable on the imaginary axis up to about 2.83.
const RK4_IMAG_LIMIT: f64 = 2.5;

/// Real Hamilton function `h(x, p)` on a grid: an exact polynomial part
/// plus an optional periodic part, with every derivative of total order
/// at most three cached.
#[derive(Clone, Debug)]
pub struct HamiltonField<T: Real> {
    pub grid: PhaseSpaceGrid<T>,
    pub poly: Poly<T>,
    pub periodic: Option<DMatrix<T>>,
    derivs: Vec<Vec<DMatrix<T>>>,
}

impl<T: Real> HamiltonField<T> {
    pub fn new(grid: &PhaseSpaceGrid<T>, poly: Poly<T>, periodic: Option<DMatrix<T>>) -> Result<Self> {
        let n = grid.n();
        if let Some(f) = &periodic {
            if f.shape() != (n, n) {
                return Err(Error::DimensionMismatch { expected: n, found: f.nrows() });
            }
        }
        let imag = poly.c.iter().flatten().fold(T::zero(), |m, z| m.max(z.im.abs()));
        if imag > T::zero() {
            return Err(Error::InvalidParameter("Hamilton function must be real".into()));
        }
        let periodic_c = periodic.as_ref().map(|f| f.map(re));
        let mut derivs = Vec::with_capacity(4);
        for a in 0..4u32 {
            let mut row = Vec::with_capacity(4);
            for b in 0..4u32 {
                if a + b > 3 {
                    row.push(DMatrix::zeros(0, 0));
                    continue;
                }
                let mut d = poly.derivative(a as usize, b as usize).sample(grid).map(|z| z.re);
                if let Some(f) = &periodic_c {
                    d += spectral::derivative(f, (grid.dx(), grid.dp()), (a, b)).map(|z| z.re);
                }
                row.push(d);
            }
            derivs.push(row);
        }
        Ok(Self { grid: *grid, poly, periodic, derivs })
    }

    pub fn from_poly(grid: &PhaseSpaceGrid<T>, poly: Poly<T>) -> Result<Self> {
        Self::new(grid, poly, None)
    }

    /// `p²/2m + m ω² x²/2`.
    pub fn harmonic(grid: &PhaseSpaceGrid<T>, mass: T, omega: T) -> Result<Self> {
        let half: T = lit(0.5);
        Self::from_poly(grid, Poly::quadratic(T::zero(), T::zero(), T::zero(), half * mass * omega * omega, T::zero(), half / mass))
    }

    /// `∂_x^a ∂_p^b h` on the grid, `a + b <= 3`.
    pub fn derivative(&self, a: usize, b: usize) -> &DMatrix<T> {
        assert!(a + b <= 3, "derivatives are cached through third order");
        &self.derivs[a][b]
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.derivs[0][0]
    }
}

/// Terms `(coefficient field, (a, b) derivative of W)` of the right-hand side.
fn flow_terms<T: Real>(h: &HamiltonField<T>, hbar_order: u32) -> Vec<(DMatrix<T>, (u32, u32))> {
    let mut terms = vec![(h.derivative(1, 0).clone(), (0, 1)), (-h.derivative(0, 1), (1, 0))];
    if hbar_order >= 2 {
        let c = h.grid.hbar * h.grid.hbar / lit(24.0);
        let three: T = lit(3.0);
        terms.push((h.derivative(0, 3) * c, (3, 0)));
        terms.push((h.derivative(1, 2) * (-three * c), (2, 1)));
        terms.push((h.derivative(2, 1) * (three * c), (1, 2)));
        terms.push((h.derivative(3, 0) * (-c), (0, 3)));
    }
    terms.retain(|(f, _)| f.amax() > T::zero());
    terms
}

fn flow_rhs<T: Real>(w: &DMatrix<C<T>>, grid: &PhaseSpaceGrid<T>, terms: &[(DMatrix<T>, (u32, u32))]) -> DMatrix<C<T>> {
    let mut out = DMatrix::zeros(w.nrows(), w.ncols());
    for (coef, orders) in terms {
        let d = spectral::derivative(w, (grid.dx(), grid.dp()), *orders);
        out += d.zip_map(coef, |z, c| z * c);
    }
    out
}

fn flow_stable_dt<T: Real>(grid: &PhaseSpaceGrid<T>, terms: &[(DMatrix<T>, (u32, u32))]) -> T {
    let n = count::<T>(grid.n());
    let kx = T::pi() / grid.dx() * (n - lit(2.0)) / n;
    let kp = T::pi() / grid.dp() * (n - lit(2.0)) / n;
    let rate = terms.iter().fold(T::zero(), |s, (f, (a, b))| s + f.amax() * kx.powi(*a as i32) * kp.powi(*b as i32));
    if rate > T::zero() {
        lit::<T>(RK4_IMAG_LIMIT) / rate
    } else {
        T::max_value().unwrap()
    }
}

/// Integrates `∂W/∂t = {h, W}` (plus the `ħ²` term at `hbar_order = 2`)
/// with RK4 on spectral derivatives. With `g`, decoherence smearing is
/// Strang-split around each flow step; `include_hamiltonian_flow = false`
/// leaves only the smearing.
pub fn semiclassical_evolve<T: Real>(
    w0: &WignerFunction<T>,
    h: &HamiltonField<T>,
    g: Option<&DecoherenceTensor<T>>,
    spec: &EvolutionSpec<T>,
) -> Result<Vec<(T, WignerFunction<T>)>> {
    w0.grid.require_same(&h.grid)?;
    let grid = w0.grid;
    let smearing = match g {
        Some(g) => {
            if g.pairs() != 1 {
                return Err(Error::InvalidParameter("semiclassical flow handles one phase-space pair".into()));
            }
            if g.eigenvalues()[0] < -crate::scalar::tol::<T>(1e-12) * g.g.amax() {
                return Err(Error::InvalidParameter("decoherence tensor must be positive semidefinite".into()));
            }
            Some((g.gxx(), g.gxp(), g.gpp()))
        }
        None => None,
    };
    let terms = if spec.include_hamiltonian_flow { flow_terms(h, spec.hbar_order) } else { Vec::new() };
    let steps = spec.steps();
    let dt = spec.step();
    let bound = flow_stable_dt(&grid, &terms);
    if steps > 0 && dt > bound {
        return Err(Error::Unstable { dt: to_f64(dt), suggested: to_f64(bound) });
    }

    let guard = BoundaryGuard::new(w0);
    let (half, sixth): (C<T>, C<T>) = (re(dt * lit(0.5)), re(dt / lit(6.0)));
    let two: C<T> = re(lit(2.0));
    let mut out = vec![(T::zero(), w0.clone())];
    let mut w = w0.clone();
    for step in 1..=steps {
        if let Some(gc) = smearing {
            w = smear(&w, gc, dt * lit(0.5));
        }
        if !terms.is_empty() {
            let f = w.to_complex();
            let k1 = flow_rhs(&f, &grid, &terms);
            let k2 = flow_rhs(&(&f + &k1 * half), &grid, &terms);
            let k3 = flow_rhs(&(&f + &k2 * half), &grid, &terms);
            let k4 = flow_rhs(&(&f + &k3 * re(dt)), &grid, &terms);
            let next = f + (k1 + k2 * two + k3 * two + k4) * sixth;
            w = WignerFunction { grid, values: next.map(|z| z.re) };
        }
        if let Some(gc) = smearing {
            w = smear(&w, gc, dt * lit(0.5));
        }
        guard.check(&w)?;
        if spec.keep(step) {
            out.push((dt * count::<T>(step), w.clone()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::Mode;
    use approx::assert_abs_diff_eq;

    fn square_grid(n: usize, length: f64) -> PhaseSpaceGrid<f64> {
        let hbar = length * length / (2.0 * std::f64::consts::PI * n as f64);
        PhaseSpaceGrid::centered(n, length, hbar).unwrap()
    }

    fn bump(g: &PhaseSpaceGrid<f64>, x0: f64, p0: f64, sx: f64, sp: f64) -> WignerFunction<f64> {
        let values = DMatrix::from_fn(g.n(), g.n(), |j, k| {
            let (u, v) = ((g.x(j) - x0) / sx, (g.p(k) - p0) / sp);
            (-0.5 * (u * u + v * v)).exp()
        });
        WignerFunction { grid: *g, values }
    }

    #[test]
    fn harmonic_flow_rotates_rigidly() {
        let g = square_grid(128, 20.0);
        let w0 = bump(&g, 2.0, 0.0, 1.0, 0.7);
        let h = HamiltonField::harmonic(&g, 1.0, 1.0).unwrap();
        let quarter = std::f64::consts::FRAC_PI_2;
        let spec = EvolutionSpec::new(Mode::Semiclassical, quarter, 0.005).unwrap().with_hbar_order(2).unwrap();
        let traj = semiclassical_evolve(&w0, &h, None, &spec).unwrap();
        let (t, w) = traj.last().unwrap();
        assert_abs_diff_eq!(*t, quarter, epsilon = 1e-12);
        // W(x, p, T/4) = W0(-p, x)
        let exact = DMatrix::from_fn(128, 128, |j, k| {
            let (u, v) = ((-g.p(k) - 2.0) / 1.0, g.x(j) / 0.7);
            (-0.5 * (u * u + v * v)).exp()
        });
        let err = (&w.values - &exact).amax();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn quadratic_hamiltonian_has_no_hbar_correction() {
        let g = square_grid(64, 16.0);
        let h = HamiltonField::harmonic(&g, 2.0, 0.5).unwrap();
        assert_eq!(flow_terms(&h, 2).len(), 2);
    }

    #[test]
    fn constant_hamiltonian_is_static() {
        let g = square_grid(32, 12.0);
        let w0 = bump(&g, 0.5, -0.5, 1.0, 1.0);
        let h = HamiltonField::from_poly(&g, Poly::constant(C::new(3.0, 0.0))).unwrap();
        let spec = EvolutionSpec::new(Mode::Semiclassical, 1.0, 0.1).unwrap();
        let traj = semiclassical_evolve(&w0, &h, None, &spec).unwrap();
        assert_eq!(traj.len(), 11);
        assert_eq!(traj.last().unwrap().1.values, w0.values);
    }

    fn hbar_gap(n: usize) -> f64 {
        // fixed box [-8, 8)², hbar = 256/(2π n)
        let g = square_grid(n, 16.0);
        let w0 = bump(&g, 0.0, 0.0, 1.0, 1.0);
        let poly = Poly::quadratic(0.0, 0.0, 0.0, 0.5, 0.0, 0.5).add(&Poly::monomial(C::new(0.1, 0.0), 3, 0));
        let h = HamiltonField::from_poly(&g, poly).unwrap();
        let base = EvolutionSpec::new(Mode::Semiclassical, 0.5, 0.002).unwrap();
        let w1 = semiclassical_evolve(&w0, &h, None, &base).unwrap().pop().unwrap().1;
        let w2 = semiclassical_evolve(&w0, &h, None, &base.clone().with_hbar_order(2).unwrap())
            .unwrap()
            .pop()
            .unwrap()
            .1;
        ((&w2.values - &w1.values).norm_squared() * g.dx() * g.dp()).sqrt()
    }

    #[test]
    fn hbar_correction_scales_quadratically() {
        let ratio = hbar_gap(64) / hbar_gap(128);
        assert!((ratio - 4.0).abs() < 0.8, "{ratio}");
    }

    #[test]
    fn strang_split_smearing_conserves_norm() {
        let g = square_grid(64, 16.0);
        let w0 = bump(&g, 1.0, 0.0, 1.0, 1.0);
        let h = HamiltonField::harmonic(&g, 1.0, 1.0).unwrap();
        let tensor = DecoherenceTensor::from_components(0.02, 0.0, 0.02);
        let spec = EvolutionSpec::new(Mode::Semiclassical, 1.0, 0.01).unwrap();
        let traj = semiclassical_evolve(&w0, &h, Some(&tensor), &spec).unwrap();
        let n0 = w0.norm();
        for (_, w) in &traj {
            assert_abs_diff_eq!(w.norm(), n0, epsilon = 1e-8 * n0);
        }
        assert!(traj.last().unwrap().1.purity() < w0.purity());
    }

    #[test]
    fn oversized_step_is_rejected() {
        let g = square_grid(64, 16.0);
        let w0 = bump(&g, 0.0, 0.0, 1.0, 1.0);
        let h = HamiltonField::harmonic(&g, 1.0, 1.0).unwrap();
        let spec = EvolutionSpec::new(Mode::Semiclassical, 1.0, 0.5).unwrap();
        assert!(matches!(semiclassical_evolve(&w0, &h, None, &spec), Err(Error::Unstable { .. })));
    }
}
