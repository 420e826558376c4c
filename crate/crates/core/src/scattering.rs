//! Collisional localization by a gas of elastically scattered particles.
//!
//! For an isotropic incident flux and elastic kinematics `|k| = |k'|`,
//! the coherence `ρ(x, x')` decays as `exp(-F(|x - x'|) t)` with
//!
//! ```text
//! F(ξ) = ∫ dΦ(k) ∫ dΩ dσ/dΩ(k, θ) [1 - sinc(q ξ)],   q = 2k sin(θ/2)
//! ```
//!
//! (the `1 - cos((k - k')·ξ)` form averaged over incident directions).
//! `F(0) = 0` and `F → Φ_tot σ_tot` for `ξ ≫ 1/k`.

use std::fmt;
use std::num::NonZeroUsize;
use std::sync::Arc;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{count, lit, to_f64, Real};

/// Differential cross-section `dσ/dΩ(|k|, θ)`.
#[derive(Clone)]
pub enum CrossSection<T> {
    /// Classical hard sphere, `dσ/dΩ = R²/4`.
    HardSphere { radius: T },
    /// Energy-independent table in `θ` (radians, ascending), linearly interpolated.
    Tabulated { theta: Vec<T>, dsigma: Vec<T> },
    Custom(Arc<dyn Fn(T, T) -> T + Send + Sync>),
}

impl<T: Real> fmt::Debug for CrossSection<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CrossSection::HardSphere { radius } => write!(f, "HardSphere {{ radius: {} }}", to_f64(*radius)),
            CrossSection::Tabulated { theta, .. } => write!(f, "Tabulated {{ {} points }}", theta.len()),
            CrossSection::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl<T: Real> CrossSection<T> {
    pub fn differential(&self, k: T, theta: T) -> T {
        match self {
            CrossSection::HardSphere { radius } => *radius * *radius * lit(0.25),
            CrossSection::Tabulated { theta: th, dsigma } => interpolate(th, dsigma, theta),
            CrossSection::Custom(f) => f(k, theta),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            CrossSection::HardSphere { radius } if !(*radius >= T::zero()) => {
                Err(Error::InvalidParameter("hard-sphere radius must be >= 0".into()))
            }
            CrossSection::Tabulated { theta, dsigma } => {
                if theta.len() < 2 || theta.len() != dsigma.len() {
                    return Err(Error::InvalidParameter("cross-section table needs >= 2 matching points".into()));
                }
                if theta.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidParameter("cross-section angles must be ascending".into()));
                }
                if dsigma.iter().any(|&s| !(s >= T::zero())) {
                    return Err(Error::InvalidParameter("dσ/dΩ must be >= 0".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn interpolate<T: Real>(xs: &[T], ys: &[T], x: T) -> T {
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let j = xs.partition_point(|&v| v <= x) - 1;
    let f = (x - xs[j]) / (xs[j + 1] - xs[j]);
    ys[j] + f * (ys[j + 1] - ys[j])
}

/// Distribution of incident wavenumber magnitudes; directions are isotropic.
#[derive(Clone, Debug, PartialEq)]
pub enum Flux<T> {
    Monochromatic { k0: T, total: T },
    /// `(|k|, flux)` pairs; the total flux is their sum.
    Discrete(Vec<(T, T)>),
    /// Maxwell–Boltzmann gas (`k_B = 1`): flux through a surface weights
    /// the magnitude density by speed, `dΦ ∝ k³ exp(-ħ²k²/2mT) dk`.
    Thermal { particle_mass: T, temperature: T, hbar: T, total: T },
}

/// Nodes of the thermal magnitude quadrature.
const THERMAL_NODES: usize = 48;

impl<T: Real> Flux<T> {
    /// `(|k|, flux)` quadrature points summing to the total flux.
    pub fn points(&self) -> Result<Vec<(T, T)>> {
        let pts = match self {
            Flux::Monochromatic { k0, total } => vec![(*k0, *total)],
            Flux::Discrete(p) => p.clone(),
            Flux::Thermal { particle_mass, temperature, hbar, total } => {
                if !(*particle_mass > T::zero() && *temperature > T::zero() && *hbar > T::zero()) {
                    return Err(Error::InvalidParameter("thermal flux needs positive mass, temperature, hbar".into()));
                }
                let two: T = lit(2.0);
                let k_t = (two * *particle_mass * *temperature).sqrt() / *hbar;
                // s = k/k_T with density 2 s³ exp(-s²); the tail beyond s = 6 is below e^-36
                let rule = gauss_legendre::<T>(THERMAL_NODES);
                let s_max: T = lit(6.0);
                let mut pts: Vec<(T, T)> = rule
                    .iter()
                    .map(|&(x, w)| {
                        let s = (x + T::one()) * s_max * lit(0.5);
                        let dens = two * s * s * s * (-(s * s)).exp();
                        (s * k_t, w * s_max * lit(0.5) * dens)
                    })
                    .collect();
                let norm = pts.iter().fold(T::zero(), |a, p| a + p.1);
                for p in &mut pts {
                    p.1 = p.1 / norm * *total;
                }
                pts
            }
        };
        if pts.iter().any(|&(k, w)| !(k >= T::zero()) || !(w >= T::zero())) {
            return Err(Error::InvalidParameter("flux wavenumbers and weights must be >= 0".into()));
        }
        Ok(pts)
    }

    pub fn total(&self) -> Result<T> {
        Ok(self.points()?.iter().fold(T::zero(), |a, p| a + p.1))
    }
}

/// Scattering gas surrounding the object.
#[derive(Clone)]
pub struct GasSpec<T> {
    pub cross_section: CrossSection<T>,
    pub flux: Flux<T>,
    /// Smallest scattering angle kept; needed when `dσ/dΩ` is not
    /// integrable in the forward direction.
    pub theta_min: T,
}

impl<T: Real> fmt::Debug for GasSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GasSpec")
            .field("cross_section", &self.cross_section)
            .field("theta_min", &to_f64(self.theta_min))
            .finish_non_exhaustive()
    }
}

impl<T: Real> GasSpec<T> {
    pub fn new(cross_section: CrossSection<T>, flux: Flux<T>) -> Self {
        Self { cross_section, flux, theta_min: T::zero() }
    }

    pub fn hard_sphere(radius: T, k0: T, total_flux: T) -> Self {
        Self::new(CrossSection::HardSphere { radius }, Flux::Monochromatic { k0, total: total_flux })
    }

    pub fn with_theta_min(mut self, theta_min: T) -> Self {
        self.theta_min = theta_min;
        self
    }

    fn validate(&self) -> Result<()> {
        self.cross_section.validate()?;
        let pi: T = lit(std::f64::consts::PI);
        if !(self.theta_min >= T::zero() && self.theta_min < pi) {
            return Err(Error::InvalidParameter("theta_min must lie in [0, π)".into()));
        }
        if self.theta_min == T::zero() {
            for (k, _) in self.flux.points()? {
                if !self.cross_section.differential(k, T::zero()).is_finite() {
                    return Err(Error::InvalidParameter(
                        "cross-section diverges in the forward direction; set theta_min".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre<T: Real>(order: usize) -> Vec<(T, T)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(order.max(1)).unwrap());
    rule.as_node_weight_pairs().iter().map(|&(x, w)| (lit(x), lit(w))).collect()
}

/// Relative change between successive orders at which the angular
/// quadrature is accepted.
pub const ANGULAR_TOLERANCE: f64 = 1e-3;
const MIN_ORDER: usize = 16;
const MAX_ORDER: usize = 1 << 14;

fn sinc<T: Real>(x: T) -> T {
    if x.abs() < lit(1e-4) {
        let x2 = x * x;
        T::one() - x2 / lit(6.0) + x2 * x2 / lit(120.0)
    } else {
        x.sin() / x
    }
}

/// `∫_{θ_min}^{π} dΩ dσ/dΩ(k, θ) w(θ)` in `μ = cos θ` with doubling order
/// until the relative change drops below [`ANGULAR_TOLERANCE`].
fn angular<T: Real>(gas: &GasSpec<T>, k: T, weight: impl Fn(T) -> T) -> Result<T> {
    let two_pi: T = lit(2.0 * std::f64::consts::PI);
    let top = gas.theta_min.cos();
    let half = (top + T::one()) * lit(0.5);
    let eval = |order: usize| {
        gauss_legendre::<T>(order).iter().fold(T::zero(), |acc, &(x, w)| {
            let mu = half * x + (top - half);
            let theta = mu.max(-T::one()).min(T::one()).acos();
            acc + w * half * gas.cross_section.differential(k, theta) * weight(theta)
        }) * two_pi
    };
    let mut order = MIN_ORDER;
    let mut prev = eval(order);
    while order < MAX_ORDER {
        order *= 2;
        let next = eval(order);
        let scale = next.abs().max(prev.abs());
        if scale == T::zero() || (next - prev).abs() <= scale * lit(ANGULAR_TOLERANCE) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::InvalidParameter(format!(
        "angular quadrature did not converge at k = {}; set theta_min or coarsen the kernel",
        to_f64(k)
    )))
}

/// Flux-weighted total cross-section `Φ_tot σ_tot`, the large-separation
/// plateau of the kernel.
pub fn total_rate<T: Real>(gas: &GasSpec<T>) -> Result<T> {
    gas.validate()?;
    let mut sum = T::zero();
    for (k, phi) in gas.flux.points()? {
        sum += phi * angular(gas, k, |_| T::one())?;
    }
    Ok(sum)
}

/// `F(ξ)` at each separation (absolute values are used). Parallel over `ξ`.
pub fn localization_kernel<T: Real>(gas: &GasSpec<T>, xi: &[T]) -> Result<Vec<T>> {
    gas.validate()?;
    let points = gas.flux.points()?;
    let half: T = lit(0.5);
    xi.par_iter()
        .map(|&x| {
            let x = x.abs();
            if x == T::zero() {
                return Ok(T::zero());
            }
            let mut f = T::zero();
            for &(k, phi) in &points {
                if phi == T::zero() || k == T::zero() {
                    continue;
                }
                let two_k_x = (k + k) * x;
                f += phi * angular(gas, k, |theta| T::one() - sinc(two_k_x * (theta * half).sin()))?;
            }
            Ok(f)
        })
        .collect()
}

/// Kernel table as `xi,F` CSV.
pub fn kernel_csv<T: Real>(xi: &[T], f: &[T]) -> String {
    let mut s = String::from("xi,F\n");
    for (x, v) in xi.iter().zip(f) {
        s += &format!("{:e},{:e}\n", to_f64(*x), to_f64(*v));
    }
    s
}

/// Largest relative deviation of a fit from the data accepted as the
/// quadratic regime.
pub const QUADRATIC_FIT_TOLERANCE: f64 = 1e-3;
/// Largest relative quartic correction at the edge of the fitted range.
pub const QUARTIC_LIMIT: f64 = 0.1;

/// Curvature `Λ` of `F(ξ) ≈ Λξ² + cξ⁴`, fitted on the longest prefix of
/// the (ascending, positive) separations where the fit is consistent.
pub fn fit_curvature<T: Real>(xi: &[T], f: &[T]) -> Result<T> {
    let pts: Vec<(T, T)> = xi.iter().copied().zip(f.iter().copied()).filter(|p| p.0 > T::zero()).collect();
    let fail = || Error::NoQuadraticRegime {
        xi: xi.iter().map(|&v| to_f64(v)).collect(),
        f: f.iter().map(|&v| to_f64(v)).collect(),
    };
    if pts.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::InvalidParameter("separations must be ascending".into()));
    }
    if !pts.is_empty() && pts.iter().all(|p| p.1 == T::zero()) {
        return Ok(T::zero());
    }
    for m in (3..=pts.len()).rev() {
        let sub = &pts[..m];
        // F/ξ² = Λ + c ξ² by least squares
        let a = DMatrix::from_fn(m, 2, |i, j| if j == 0 { T::one() } else { sub[i].0 * sub[i].0 });
        let b = DVector::from_fn(m, |i, _| sub[i].1 / (sub[i].0 * sub[i].0));
        let ata = a.transpose() * &a;
        let Some(sol) = ata.lu().solve(&(a.transpose() * &b)) else {
            continue;
        };
        let (lambda, c) = (sol[0], sol[1]);
        if !(lambda > T::zero()) {
            continue;
        }
        let edge = sub[m - 1].0 * sub[m - 1].0;
        let consistent = sub.iter().all(|&(x, y)| {
            let fit = lambda * x * x + c * x * x * x * x;
            (fit - y).abs() <= y.abs() * lit(QUADRATIC_FIT_TOLERANCE)
        });
        if consistent && (c * edge / lambda).abs() <= lit(QUARTIC_LIMIT) {
            return Ok(lambda);
        }
    }
    Err(fail())
}

/// Default separations for the curvature fit: `ξ k_max` from 0.005 to 0.2.
pub fn quadratic_probe<T: Real>(gas: &GasSpec<T>) -> Result<Vec<T>> {
    let k_max = gas.flux.points()?.iter().fold(T::zero(), |m, p| if p.1 > T::zero() { m.max(p.0) } else { m });
    if !(k_max > T::zero()) {
        return Err(Error::InvalidParameter("flux carries no momentum".into()));
    }
    Ok((1..=40).map(|j| count::<T>(j) * lit(0.005) / k_max).collect())
}

/// Degenerate coefficient `g^{pp} = ħ²Λ` matching `exp(-F(ξ)t)` by
/// `exp(-g^{pp} ξ² t/ħ²)` in the quadratic regime.
pub fn effective_gpp<T: Real>(gas: &GasSpec<T>, hbar: T) -> Result<T> {
    let xi = quadratic_probe(gas)?;
    effective_gpp_on(gas, hbar, &xi)
}

/// As [`effective_gpp`] with caller-chosen separations.
pub fn effective_gpp_on<T: Real>(gas: &GasSpec<T>, hbar: T, xi: &[T]) -> Result<T> {
    if !(hbar > T::zero()) {
        return Err(Error::InvalidParameter("hbar must be positive".into()));
    }
    let f = localization_kernel(gas, xi)?;
    Ok(hbar * hbar * fit_curvature(xi, &f)?)
}
