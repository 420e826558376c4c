//! Decoherence and dissipation coefficients from environment transition
//! data, with degeneracy classification and standard bath builders.
//!
//! Coordinates are ordered `x_1..x_n, p_1..p_n`. The τ-integrals
//! `∫₀^∞ e^{iωτ}` are regulated by `e^{-ετ}` and only their real
//! (Lorentzian) part `ε/(ω² + ε²)` is kept.

use std::collections::HashMap;
use std::fmt::Write as _;

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::hilbert::{Operator, SpaceTag, ThermalEnvironment};
use crate::scalar::{cis, count, lit, re, to_f64, Real, C};

/// One environment transition `n → n'`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<T: Real> {
    pub n: usize,
    pub np: usize,
    /// `<n|∂H̄₁/∂x_i|n'>` for each pair `i`.
    pub h1x: Vec<C<T>>,
    /// `<n|∂H̄₁/∂p_i|n'>` for each pair `i`.
    pub h1p: Vec<C<T>>,
    /// `(E_n − E_n')/ħ`.
    pub omega: T,
    /// `exp[−β(E_n + E_n')/2 − α]`.
    pub weight: T,
}

/// Transition data of a thermal environment seen through the coupling.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingSpectrum<T: Real> {
    pub transitions: Vec<Transition<T>>,
    pub beta: T,
    /// Largest `|ω_nn'|`.
    pub omega_cutoff: T,
    pub regularization_epsilon: T,
    pub hbar: T,
    /// Number of phase-space pairs.
    pub pairs: usize,
}

impl<T: Real> CouplingSpectrum<T> {
    /// Validates weights, component counts and Hermitian pairing. A zero
    /// `epsilon` selects the default `Ω/1000` (or `1e-3` for a static
    /// spectrum).
    pub fn new(transitions: Vec<Transition<T>>, beta: T, hbar: T, epsilon: T, pairs: usize) -> Result<Self> {
        if !(hbar > T::zero()) || beta < T::zero() || epsilon < T::zero() {
            return Err(Error::InvalidParameter("need hbar > 0, beta >= 0, epsilon >= 0".into()));
        }
        let mut index = HashMap::new();
        for (i, t) in transitions.iter().enumerate() {
            if t.h1x.len() != pairs || t.h1p.len() != pairs {
                return Err(Error::DimensionMismatch { expected: pairs, found: t.h1x.len().max(t.h1p.len()) });
            }
            if !(t.weight > T::zero()) {
                return Err(Error::InvalidParameter(format!("transition ({},{}) has non-positive weight", t.n, t.np)));
            }
            index.insert((t.n, t.np), i);
        }
        let tol = crate::scalar::tol::<T>(1e-10);
        for t in &transitions {
            let partner = index
                .get(&(t.np, t.n))
                .map(|&i| &transitions[i])
                .ok_or_else(|| Error::NotHermitian { deviation: f64::INFINITY })?;
            let scale = T::one() + t.omega.abs() + t.weight;
            let mut dev = (t.omega + partner.omega).abs() / scale + (t.weight - partner.weight).abs() / scale;
            for i in 0..pairs {
                dev += (t.h1x[i] - partner.h1x[i].conj()).norm_sqr().sqrt();
                dev += (t.h1p[i] - partner.h1p[i].conj()).norm_sqr().sqrt();
            }
            if dev > tol * (T::one() + max_component(t)) {
                return Err(Error::NotHermitian { deviation: to_f64(dev) });
            }
        }
        let omega_cutoff = transitions.iter().fold(T::zero(), |m, t| m.max(t.omega.abs()));
        let regularization_epsilon = if epsilon > T::zero() {
            epsilon
        } else if omega_cutoff > T::zero() {
            omega_cutoff / lit(1000.0)
        } else {
            lit(1e-3)
        };
        Ok(Self { transitions, beta, omega_cutoff, regularization_epsilon, hbar, pairs })
    }

    /// Spectrum of the couplings `∂H̄₁/∂x_i = h1x[i]`, `∂H̄₁/∂p_i = h1p[i]`
    /// (environment operators) in the thermal environment `env`.
    /// Vanishing matrix elements are skipped.
    pub fn from_operators(
        h1x: &[Operator<T>],
        h1p: &[Operator<T>],
        env: &ThermalEnvironment<T>,
        hbar: T,
        epsilon: T,
    ) -> Result<Self> {
        if h1x.len() != h1p.len() {
            return Err(Error::DimensionMismatch { expected: h1x.len(), found: h1p.len() });
        }
        let d = env.dim();
        let v = &env.basis;
        let rot = |o: &Operator<T>| -> Result<DMatrix<C<T>>> {
            o.require_dim(d)?;
            o.require_tag(SpaceTag::Environment)?;
            o.require_hermitian()?;
            Ok(v.adjoint() * &o.mat * v)
        };
        let xs: Vec<_> = h1x.iter().map(rot).collect::<Result<_>>()?;
        let ps: Vec<_> = h1p.iter().map(rot).collect::<Result<_>>()?;
        let half: T = lit(0.5);
        let mut transitions = Vec::new();
        for n in 0..d {
            for np in 0..d {
                let hx: Vec<C<T>> = xs.iter().map(|m| m[(n, np)]).collect();
                let hp: Vec<C<T>> = ps.iter().map(|m| m[(n, np)]).collect();
                if hx.iter().chain(&hp).all(|z| z.norm_sqr() == T::zero()) {
                    continue;
                }
                let (en, enp) = (env.levels[n], env.levels[np]);
                transitions.push(Transition {
                    n,
                    np,
                    h1x: hx,
                    h1p: hp,
                    omega: (en - enp) / hbar,
                    weight: (-(env.beta * (en + enp) * half) - env.alpha).exp(),
                });
            }
        }
        // Hermitian inputs pair exactly in the eigenbasis up to roundoff;
        // symmetrize so the pairing check is exact
        symmetrize(&mut transitions);
        Self::new(transitions, env.beta, hbar, epsilon, h1x.len())
    }

    /// Same data with a different regulator.
    pub fn with_epsilon(&self, epsilon: T) -> Self {
        Self { regularization_epsilon: epsilon, ..self.clone() }
    }

    /// Text form: `beta=…`, `epsilon=…`, `hbar=…` header lines, then
    /// `n,nprime,re(H1x),im(H1x),re(H1p),im(H1p),omega,weight` per
    /// transition. Single phase-space pair only.
    pub fn to_text(&self) -> Result<String> {
        if self.pairs != 1 {
            return Err(Error::InvalidParameter("text spectra carry one phase-space pair".into()));
        }
        let mut s = String::new();
        let _ = writeln!(s, "beta={:e}", self.beta);
        let _ = writeln!(s, "epsilon={:e}", self.regularization_epsilon);
        let _ = writeln!(s, "hbar={:e}", self.hbar);
        for t in &self.transitions {
            let _ = writeln!(
                s,
                "{},{},{:e},{:e},{:e},{:e},{:e},{:e}",
                t.n, t.np, t.h1x[0].re, t.h1x[0].im, t.h1p[0].re, t.h1p[0].im, t.omega, t.weight
            );
        }
        Ok(s)
    }

    /// Parses [`CouplingSpectrum::to_text`] output. `hbar` defaults to 1
    /// when the header omits it.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut beta = None;
        let mut eps = T::zero();
        let mut hbar = T::one();
        let mut transitions = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: i + 1, msg };
            if let Some((k, v)) = line.split_once('=') {
                let v: f64 = v.trim().parse().map_err(|e| perr(format!("{e}")))?;
                match k.trim() {
                    "beta" => beta = Some(lit(v)),
                    "epsilon" => eps = lit(v),
                    "hbar" => hbar = lit(v),
                    other => return Err(perr(format!("unknown header `{other}`"))),
                }
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 8 {
                return Err(perr(format!("expected 8 fields, found {}", f.len())));
            }
            let idx = |s: &str| s.parse::<usize>().map_err(|e| perr(format!("{e}")));
            let num = |s: &str| s.parse::<f64>().map(lit::<T>).map_err(|e| perr(format!("{e}")));
            transitions.push(Transition {
                n: idx(f[0])?,
                np: idx(f[1])?,
                h1x: vec![C::new(num(f[2])?, num(f[3])?)],
                h1p: vec![C::new(num(f[4])?, num(f[5])?)],
                omega: num(f[6])?,
                weight: num(f[7])?,
            });
        }
        let beta = beta.ok_or(Error::Parse { line: 0, msg: "missing beta header".into() })?;
        Self::new(transitions, beta, hbar, eps, 1)
    }
}

fn max_component<T: Real>(t: &Transition<T>) -> T {
    t.h1x.iter().chain(&t.h1p).fold(T::zero(), |m, z| m.max(z.norm_sqr().sqrt()))
}

fn symmetrize<T: Real>(ts: &mut [Transition<T>]) {
    let index: HashMap<(usize, usize), usize> = ts.iter().enumerate().map(|(i, t)| ((t.n, t.np), i)).collect();
    for i in 0..ts.len() {
        let (n, np) = (ts[i].n, ts[i].np);
        if n > np {
            continue;
        }
        if let Some(&j) = index.get(&(np, n)) {
            if i == j {
                for z in ts[i].h1x.iter_mut().chain(ts[i].h1p.iter_mut()) {
                    z.im = T::zero();
                }
                ts[i].omega = T::zero();
                continue;
            }
            let (a, b) = (ts[i].clone(), ts[j].clone());
            let half: T = lit(0.5);
            for k in 0..a.h1x.len() {
                ts[i].h1x[k] = (a.h1x[k] + b.h1x[k].conj()) * half;
                ts[j].h1x[k] = ts[i].h1x[k].conj();
                ts[i].h1p[k] = (a.h1p[k] + b.h1p[k].conj()) * half;
                ts[j].h1p[k] = ts[i].h1p[k].conj();
            }
            ts[i].omega = (a.omega - b.omega) * half;
            ts[j].omega = -ts[i].omega;
            ts[i].weight = (a.weight + b.weight) * half;
            ts[j].weight = ts[i].weight;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Degeneracy {
    Degenerate,
    NonDegenerate,
}

/// Symmetric positive semidefinite `g^{ij}` with its classification.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoherenceTensor<T: Real> {
    pub g: DMatrix<T>,
    pub det_g: T,
    pub classification: Degeneracy,
    /// Covariant `g_ij`, present iff non-degenerate.
    pub g_inv: Option<DMatrix<T>>,
}

impl<T: Real> DecoherenceTensor<T> {
    /// Classifies by `det g` against `1e-10·(tr g / 2n)^{2n}`.
    pub fn from_matrix(g: DMatrix<T>) -> Result<Self> {
        let dim = g.nrows();
        if dim != g.ncols() || dim % 2 != 0 || dim == 0 {
            return Err(Error::InvalidParameter("g must be a 2n x 2n matrix".into()));
        }
        let half: T = lit(0.5);
        let g = (&g + g.transpose()) * half;
        let det_g = g.determinant();
        let mean = g.trace() / count::<T>(dim);
        let threshold = lit::<T>(1e-10) * mean.powi(dim as i32);
        let (classification, g_inv) = if mean > T::zero() && det_g > threshold {
            (Degeneracy::NonDegenerate, g.clone().try_inverse())
        } else {
            (Degeneracy::Degenerate, None)
        };
        let classification = if g_inv.is_some() { classification } else { Degeneracy::Degenerate };
        Ok(Self { g, det_g, classification, g_inv })
    }

    /// Single pair from `(g^{xx}, g^{xp}, g^{pp})`.
    pub fn from_components(gxx: T, gxp: T, gpp: T) -> Self {
        let g = DMatrix::from_row_slice(2, 2, &[gxx, gxp, gxp, gpp]);
        Self::from_matrix(g).expect("2x2 is well formed")
    }

    pub fn zero(pairs: usize) -> Self {
        Self::from_matrix(DMatrix::zeros(2 * pairs, 2 * pairs)).expect("square")
    }

    pub fn pairs(&self) -> usize {
        self.g.nrows() / 2
    }

    pub fn gxx(&self) -> T {
        self.g[(0, 0)]
    }

    pub fn gxp(&self) -> T {
        self.g[(0, self.pairs())]
    }

    pub fn gpx(&self) -> T {
        self.g[(self.pairs(), 0)]
    }

    pub fn gpp(&self) -> T {
        let n = self.pairs();
        self.g[(n, n)]
    }

    pub fn is_degenerate(&self) -> bool {
        self.classification == Degeneracy::Degenerate
    }

    /// Eigenvalues of `g`, ascending.
    pub fn eigenvalues(&self) -> Vec<T> {
        let mut e: Vec<T> = SymmetricEigen::new(self.g.clone()).eigenvalues.iter().copied().collect();
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        e
    }

    /// `Σ g^{ij} a_i a_j`.
    pub fn quadratic_form(&self, a: &[T]) -> T {
        let n = self.g.nrows();
        let mut s = T::zero();
        for i in 0..n {
            for j in 0..n {
                s += self.g[(i, j)] * a[i] * a[j];
            }
        }
        s
    }
}

/// Friction coefficients `γ^{ij}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DissipationTensor<T: Real> {
    pub gamma: DMatrix<T>,
}

impl<T: Real> DissipationTensor<T> {
    pub fn pairs(&self) -> usize {
        self.gamma.nrows() / 2
    }

    pub fn gamma_xx(&self) -> T {
        self.gamma[(0, 0)]
    }

    pub fn gamma_xp(&self) -> T {
        self.gamma[(0, self.pairs())]
    }

    pub fn gamma_px(&self) -> T {
        self.gamma[(self.pairs(), 0)]
    }

    pub fn gamma_pp(&self) -> T {
        let n = self.pairs();
        self.gamma[(n, n)]
    }

    /// Momentum damping rate of `H_c = P²/2m + V`: with
    /// `dp/dt = −γ^{pp} ∂h/∂p = −(γ^{pp}/m) p`, the rate is `γ^{pp}/m`.
    pub fn friction_rate(&self, mass: T) -> T {
        self.gamma_pp() / mass
    }
}

/// Real part of the regulated `∫₀^∞ e^{iωτ − ετ} dτ`.
pub fn lorentzian<T: Real>(omega: T, eps: T) -> T {
    eps / (omega * omega + eps * eps)
}

fn thermal_factor<T: Real>(s: &CouplingSpectrum<T>, omega: T) -> T {
    (s.beta * s.hbar * omega * lit(0.5)).cosh()
}

/// `2 sinh(βħω/2)/(ħω)`, tending to `β` at `ω = 0`.
fn friction_factor<T: Real>(s: &CouplingSpectrum<T>, omega: T) -> T {
    let y = s.beta * s.hbar * omega * lit(0.5);
    if y.abs() < lit(1e-6) {
        // series: sinh(y)/y = 1 + y²/6
        s.beta * (T::one() + y * y / lit(6.0))
    } else {
        lit::<T>(2.0) * y.sinh() / (s.hbar * omega)
    }
}

/// Builds the 2n×2n tensor `Σ_t w_t · M_t` with
/// `M^{x_i x_j} = Re(H_p,i H_p,j*)`, `M^{p_i p_j} = Re(H_x,i H_x,j*)`,
/// `M^{x_i p_j} = −Re(H_p,i H_x,j*)`, which is a sum of rank-one PSD terms.
fn assemble<T: Real>(s: &CouplingSpectrum<T>, weight: impl Fn(&Transition<T>) -> T) -> DMatrix<T> {
    let n = s.pairs;
    let mut g = DMatrix::zeros(2 * n, 2 * n);
    for t in &s.transitions {
        let w = weight(t);
        // vector v = (H_p, −H_x); the term is w·Re(v v†)
        let v: Vec<C<T>> = t.h1p.iter().copied().chain(t.h1x.iter().map(|z| -*z)).collect();
        for i in 0..2 * n {
            for j in 0..2 * n {
                g[(i, j)] += w * (v[i] * v[j].conj()).re;
            }
        }
    }
    g
}

/// Correlation kernel `C^{ij}(τ)` (2n×2n) of the coupling fluctuations.
pub fn kernel_c<T: Real>(s: &CouplingSpectrum<T>, tau: T) -> DMatrix<T> {
    let n = s.pairs;
    let mut c = DMatrix::zeros(2 * n, 2 * n);
    for t in &s.transitions {
        let w = t.weight * thermal_factor(s, t.omega);
        let phase = cis(t.omega * tau);
        // C^{ij} = Σ v_i,nn' v_j,n'n e^{iωτ} p cosh with v = (H_p, −H_x);
        // v_j,n'n = conj(v_j,nn')
        let v: Vec<C<T>> = t.h1p.iter().copied().chain(t.h1x.iter().map(|z| -*z)).collect();
        for i in 0..2 * n {
            for j in 0..2 * n {
                c[(i, j)] += (v[i] * v[j].conj() * phase).re * w;
            }
        }
    }
    c
}

/// `g^{ij}` from the Lorentzian-regulated kernel integral.
pub fn decoherence_coeffs<T: Real>(s: &CouplingSpectrum<T>) -> DecoherenceTensor<T> {
    if s.transitions.is_empty() {
        return DecoherenceTensor::zero(s.pairs.max(1));
    }
    let eps = s.regularization_epsilon;
    let g = assemble(s, |t| t.weight * thermal_factor(s, t.omega) * lorentzian(t.omega, eps));
    DecoherenceTensor::from_matrix(g).expect("square by construction")
}

/// `γ^{ij}`: as [`decoherence_coeffs`] with `cosh(βħω/2)` replaced by
/// `2 sinh(βħω/2)/(ħω)`, so that `γ ≈ g/T` at high temperature.
pub fn dissipation_coeffs<T: Real>(s: &CouplingSpectrum<T>) -> DissipationTensor<T> {
    let eps = s.regularization_epsilon;
    let gamma = assemble(s, |t| t.weight * friction_factor(s, t.omega) * lorentzian(t.omega, eps));
    DissipationTensor { gamma }
}

/// Coupling form of a bath of oscillators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BathCoupling<T> {
    /// `H₁ = X · Σ (λ_i a_i† + λ_i* a_i)`.
    PositionOnly,
    /// `H₁ = (X − iP/mω)·Σ λ_i a_i + (X + iP/mω)·Σ λ_i* a_i†`.
    Ladder { mass: T, omega: T },
}

/// Spectrum of independent oscillator modes `(λ_i, ω_i)` truncated to
/// `truncation` levels each at temperature `temperature` (energy units).
///
/// Each coupling term changes a single mode by one quantum, so the other
/// modes' thermal weights sum to one and every mode contributes its own
/// transitions. Environment labels are `mode·truncation + level`.
pub fn oscillator_bath<T: Real>(
    couplings: &[(C<T>, T)],
    temperature: T,
    truncation: usize,
    form: BathCoupling<T>,
    hbar: T,
    epsilon: T,
) -> Result<CouplingSpectrum<T>> {
    if truncation < 2 {
        return Err(Error::InvalidParameter("need at least 2 levels per mode".into()));
    }
    if temperature < T::zero() {
        return Err(Error::InvalidParameter("temperature must be >= 0".into()));
    }
    let max_quantum = couplings.iter().fold(T::zero(), |m, &(_, w)| m.max(hbar * w.abs()));
    let cap = lit::<T>(700.0) / (max_quantum * count::<T>(truncation)).max(lit(1e-300));
    let mut beta = if temperature > T::zero() { T::one() / temperature } else { cap };
    if beta > cap {
        warn!("inverse temperature {} clamped to {} to keep Boltzmann factors finite", to_f64(beta), to_f64(cap));
        beta = cap;
    }
    let mut transitions = Vec::new();
    for (mode, &(lambda, w)) in couplings.iter().enumerate() {
        if lambda.norm_sqr() == T::zero() {
            continue;
        }
        let levels: Vec<T> = (0..truncation).map(|l| hbar * w * count::<T>(l)).collect();
        let z = levels.iter().fold(T::zero(), |s, &e| s + (-(beta * e)).exp());
        let alpha = z.ln();
        for l in 0..truncation - 1 {
            let amp = count::<T>(l + 1).sqrt();
            // a†: |l+1><l| with λ, a: |l><l+1| with λ*
            let up = lambda * amp;
            let down = lambda.conj() * amp;
            let (hx_up, hx_down, hp_up, hp_down) = match form {
                BathCoupling::PositionOnly => (up, down, C::new(T::zero(), T::zero()), C::new(T::zero(), T::zero())),
                BathCoupling::Ladder { mass, omega } => {
                    // ladder form: the a-part carries λ, the a†-part λ*
                    let mw = mass * omega;
                    let a_part = lambda * amp; // <l|Σλa|l+1>
                    let adag_part = lambda.conj() * amp; // <l+1|Σλ*a†|l>
                    (
                        adag_part,
                        a_part,
                        adag_part * C::new(T::zero(), T::one() / mw),
                        a_part * C::new(T::zero(), -T::one() / mw),
                    )
                }
            };
            let (e_lo, e_hi) = (levels[l], levels[l + 1]);
            let weight = (-(beta * (e_lo + e_hi) * lit(0.5)) - alpha).exp();
            let om = w;
            let lo = mode * truncation + l;
            let hi = lo + 1;
            transitions.push(Transition { n: hi, np: lo, h1x: vec![hx_up], h1p: vec![hp_up], omega: om, weight });
            transitions.push(Transition { n: lo, np: hi, h1x: vec![hx_down], h1p: vec![hp_down], omega: -om, weight });
        }
    }
    CouplingSpectrum::new(transitions, beta, hbar, epsilon, 1)
}

/// Modes `(λ_i, ω_i)` sampling the ohmic density `J(ω) = η ω e^{−ω/Ω}`
/// on `(0, span·Ω]` with midpoint nodes and `λ_i² = J(ω_i) Δω / π`.
pub fn ohmic_modes<T: Real>(eta: T, cutoff: T, modes: usize, span: T) -> Vec<(C<T>, T)> {
    let dw = span * cutoff / count::<T>(modes);
    (0..modes)
        .map(|i| {
            let w = (count::<T>(i) + lit(0.5)) * dw;
            let j = eta * w * (-w / cutoff).exp();
            (re((j * dw / T::pi()).sqrt()), w)
        })
        .collect()
}

/// `count` equally coupled modes evenly spaced on `(lo, hi]`.
pub fn band_modes<T: Real>(lambda: T, lo: T, hi: T, count_: usize) -> Vec<(C<T>, T)> {
    (0..count_)
        .map(|i| (re(lambda), lo + (hi - lo) * count::<T>(i + 1) / count::<T>(count_)))
        .collect()
}

/// Rotation of a single-pair tensor to principal axes in the scaled
/// coordinates `u = Π x`, `v = L p`. Returns the angle and the tensor in
/// the rotated canonical pair `(x', p') = (u'/Π, v'/L)`.
pub fn canonical_rotation<T: Real>(
    g: &DecoherenceTensor<T>,
    length_unit: T,
    momentum_unit: T,
) -> Result<(T, DecoherenceTensor<T>)> {
    if g.pairs() != 1 {
        return Err(Error::InvalidParameter("canonical rotation needs a single phase-space pair".into()));
    }
    let (pi, l) = (momentum_unit, length_unit);
    let guu = pi * pi * g.gxx();
    let guv = pi * l * g.gxp();
    let gvv = l * l * g.gpp();
    let theta = (lit::<T>(2.0) * guv).atan2(guu - gvv) * lit(0.5);
    let (c, s) = (theta.cos(), theta.sin());
    // components along e_u' = (c, s), e_v' = (−s, c)
    let r_uu = c * c * guu + lit::<T>(2.0) * c * s * guv + s * s * gvv;
    let r_vv = s * s * guu - lit::<T>(2.0) * c * s * guv + c * c * gvv;
    let r_uv = (c * c - s * s) * guv + c * s * (gvv - guu);
    let rotated = DecoherenceTensor::from_components(r_uu / (pi * pi), r_uv / (pi * l), r_vv / (l * l));
    Ok((theta, rotated))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::thermal_state;
    use crate::rng::{random_hermitian, substream, Stream};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn pair(hx: C<f64>, hp: C<f64>, omega: f64, weight: f64) -> Vec<Transition<f64>> {
        vec![
            Transition { n: 1, np: 0, h1x: vec![hx], h1p: vec![hp], omega, weight },
            Transition { n: 0, np: 1, h1x: vec![hx.conj()], h1p: vec![hp.conj()], omega: -omega, weight },
        ]
    }

    fn random_spectrum(rng: &mut Stream, d: usize) -> CouplingSpectrum<f64> {
        let he = random_hermitian::<f64>(rng, d, SpaceTag::Environment);
        let env = thermal_state(&he, rng.random_range(0.1..3.0)).unwrap();
        let hx = random_hermitian::<f64>(rng, d, SpaceTag::Environment);
        let hp = random_hermitian::<f64>(rng, d, SpaceTag::Environment);
        CouplingSpectrum::from_operators(&[hx], &[hp], &env, 1.0, rng.random_range(0.01..0.5)).unwrap()
    }

    #[test]
    fn kernel_at_zero_for_single_pair() {
        let (hx, w, om, beta) = (C::new(0.3, -0.4), 0.2, 1.5, 0.7);
        let s = CouplingSpectrum::new(pair(hx, C::new(0.0, 0.0), om, w), beta, 1.0, 0.01, 1).unwrap();
        let c = kernel_c(&s, 0.0);
        assert_abs_diff_eq!(c[(1, 1)], 2.0 * hx.norm_sqr() * w * (beta * om / 2.0).cosh(), epsilon = 1e-14);
        assert_eq!(c[(0, 1)], 0.0);
        assert_eq!(c[(0, 0)], 0.0);
    }

    #[test]
    fn kernel_is_real_and_symmetric_under_time_reversal() {
        let s = random_spectrum(&mut substream(1, "kern"), 5);
        for tau in [0.0, 0.3, 1.7] {
            let c = kernel_c(&s, tau);
            let cm = kernel_c(&s, -tau);
            // C^{px}(τ) = C^{xp}(−τ)
            assert_abs_diff_eq!(c[(1, 0)], cm[(0, 1)], epsilon = 1e-12);
            // direct complex summation has vanishing imaginary part
            let mut imag = 0.0f64;
            for t in &s.transitions {
                let z = t.h1x[0] * t.h1x[0].conj() * cis(t.omega * tau);
                imag += z.im * t.weight * (s.beta * t.omega / 2.0).cosh();
            }
            assert!(imag.abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_matches_numerical_tau_integral() {
        let s = random_spectrum(&mut substream(2, "quad"), 4).with_epsilon(0.4);
        let g = decoherence_coeffs(&s);
        // Simpson quadrature of C(τ)e^{−ετ} on [0, 80]
        let (steps, tmax) = (40_000usize, 80.0);
        let h = tmax / steps as f64;
        let mut acc = DMatrix::<f64>::zeros(2, 2);
        for k in 0..=steps {
            let tau = k as f64 * h;
            let wgt = if k == 0 || k == steps { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += kernel_c(&s, tau) * (wgt * h / 3.0 * (-0.4 * tau).exp());
        }
        let sym = (&acc + acc.transpose()) * 0.5;
        assert!((sym - &g.g).amax() < 1e-8 * g.g.amax().max(1.0));
    }

    #[test]
    fn position_only_coupling_is_degenerate() {
        let s = oscillator_bath(&[(C::new(0.2, 0.1), 1.0), (C::new(0.1, 0.0), 2.3)], 1.5, 6, BathCoupling::PositionOnly, 1.0, 0.0)
            .unwrap();
        assert!(s.transitions.iter().all(|t| t.h1p[0] == C::new(0.0, 0.0)));
        let g = decoherence_coeffs(&s);
        assert_eq!(g.gxx(), 0.0);
        assert_eq!(g.gxp(), 0.0);
        assert!(g.gpp() > 0.0);
        assert!(g.is_degenerate());
        let gamma = dissipation_coeffs(&s);
        assert_eq!(gamma.gamma_xx(), 0.0);
        assert_eq!(gamma.gamma_px(), 0.0);
    }

    #[test]
    fn ladder_coupling_ratio() {
        let (m, w) = (2.0, 0.7);
        let modes = ohmic_modes::<f64>(0.05, 1.0, 24, 8.0);
        let s = oscillator_bath::<f64>(&modes, 3.0, 8, BathCoupling::Ladder { mass: m, omega: w }, 1.0, 0.0).unwrap();
        let g = decoherence_coeffs(&s);
        assert_abs_diff_eq!(g.gxx() * m * m * w * w / g.gpp(), 1.0, epsilon = 0.1);
        assert!(g.gxp().abs() < 1e-12 * g.gpp());
        assert_eq!(g.classification, Degeneracy::NonDegenerate);
    }

    #[test]
    fn decoupled_mode_gives_empty_spectrum() {
        let s = oscillator_bath(&[(C::new(0.0, 0.0), 1.0)], 1.0, 4, BathCoupling::PositionOnly, 1.0, 0.0).unwrap();
        assert!(s.transitions.is_empty());
        let g = decoherence_coeffs(&s);
        assert_eq!(g.g, DMatrix::zeros(2, 2));
        assert!(g.is_degenerate());
    }

    #[test]
    fn zero_temperature_is_clamped() {
        let s = oscillator_bath::<f64>(&[(C::new(0.1, 0.0), 1.0)], 0.0, 4, BathCoupling::PositionOnly, 1.0, 0.0).unwrap();
        assert!(s.beta.is_finite());
        let g = decoherence_coeffs(&s);
        assert!(g.gpp().is_finite() && g.gpp() > 0.0);
    }

    #[test]
    fn fluctuation_dissipation_regimes() {
        let m = 1.0;
        let ratio = |modes: &[(C<f64>, f64)], temp: f64| {
            let s = oscillator_bath(modes, temp, 24, BathCoupling::PositionOnly, 1.0, 0.0).unwrap();
            let g = decoherence_coeffs(&s);
            let gamma = dissipation_coeffs(&s);
            (s.omega_cutoff, g.gpp() / (m * temp * gamma.friction_rate(m)))
        };
        let ohmic = ohmic_modes(0.1, 0.125, 64, 8.0);
        let (cutoff, high) = ratio(&ohmic, 100.0);
        assert!((cutoff - 1.0).abs() < 0.01);
        assert_abs_diff_eq!(high, 1.0, epsilon = 0.01);
        // only a bath weighted towards its band edge feels ħω ~ T
        let narrow = band_modes(0.05, 0.75, 1.0, 32);
        assert_abs_diff_eq!(ratio(&narrow, 100.0).1, 1.0, epsilon = 0.01);
        assert!((ratio(&narrow, 1.0).1 - 1.0).abs() > 0.05);
    }

    #[test]
    fn onsager_symmetry_and_positivity() {
        let mut rng = substream(3, "psd");
        for _ in 0..50 {
            let s = random_spectrum(&mut rng, 4);
            let g = decoherence_coeffs(&s);
            let gamma = dissipation_coeffs(&s);
            assert_abs_diff_eq!(g.gxp(), g.gpx(), epsilon = 1e-10);
            assert_abs_diff_eq!(gamma.gamma_xp(), gamma.gamma_px(), epsilon = 1e-10);
            let scale = g.g.norm();
            assert!(g.eigenvalues()[0] >= -1e-12 * scale);
            let gscale = gamma.gamma.norm();
            let ge = SymmetricEigen::new(gamma.gamma.clone()).eigenvalues;
            assert!(ge.iter().all(|&e| e >= -1e-12 * gscale));
            for _ in 0..5 {
                let (a, b) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                assert!(g.quadratic_form(&[a, b]) >= -1e-12 * scale * (a * a + b * b));
            }
        }
    }

    #[test]
    fn invariant_under_relabeling_and_symmetry_conjugation() {
        let mut rng = substream(4, "inv");
        let d = 5;
        let levels = [0.0, 0.3, 0.3, 1.1, 2.0];
        let he = Operator::diagonal(SpaceTag::Environment, &levels);
        let env = thermal_state(&he, 0.9).unwrap();
        let hx = random_hermitian::<f64>(&mut rng, d, SpaceTag::Environment);
        let hp = random_hermitian::<f64>(&mut rng, d, SpaceTag::Environment);
        let base = decoherence_coeffs(&CouplingSpectrum::from_operators(&[hx.clone()], &[hp.clone()], &env, 1.0, 0.05).unwrap());

        // reversing the transition list
        let mut s = CouplingSpectrum::from_operators(&[hx.clone()], &[hp.clone()], &env, 1.0, 0.05).unwrap();
        s.transitions.reverse();
        assert!((decoherence_coeffs(&s).g - &base.g).amax() < 1e-13);

        // U commuting with H_e (phases plus a rotation in the degenerate pair)
        let mut u = DMatrix::<C<f64>>::zeros(d, d);
        let (c, sn) = (0.6f64, 0.8f64);
        u[(0, 0)] = cis(0.4);
        u[(1, 1)] = C::new(c, 0.0);
        u[(1, 2)] = C::new(-sn, 0.0);
        u[(2, 1)] = C::new(sn, 0.0);
        u[(2, 2)] = C::new(c, 0.0);
        u[(3, 3)] = cis(-1.2);
        u[(4, 4)] = cis(2.0);
        let conj = |o: &Operator<f64>| Operator { tag: o.tag, mat: u.adjoint() * &o.mat * &u };
        let rotated =
            decoherence_coeffs(&CouplingSpectrum::from_operators(&[conj(&hx)], &[conj(&hp)], &env, 1.0, 0.05).unwrap());
        assert!((rotated.g - &base.g).amax() < 1e-10 * base.g.amax());
    }

    #[test]
    fn epsilon_stability_for_dense_band() {
        let (cutoff, count_) = (1.0, 40_000usize);
        let mut ts = Vec::new();
        for i in 0..count_ {
            let w = cutoff * (i as f64 + 0.5) / count_ as f64;
            let amp = (1.0 / count_ as f64).sqrt();
            let (lo, hi) = (2 * i, 2 * i + 1);
            ts.push(Transition { n: hi, np: lo, h1x: vec![C::new(amp, 0.0)], h1p: vec![C::new(0.0, 0.0)], omega: w, weight: 0.5 });
            ts.push(Transition { n: lo, np: hi, h1x: vec![C::new(amp, 0.0)], h1p: vec![C::new(0.0, 0.0)], omega: -w, weight: 0.5 });
        }
        let s = CouplingSpectrum::new(ts, 0.5, 1.0, 0.01, 1).unwrap();
        let g1 = decoherence_coeffs(&s).gpp();
        let g2 = decoherence_coeffs(&s.with_epsilon(0.005)).gpp();
        assert!((g1 - g2).abs() / g1 < 0.01, "{g1} {g2}");
    }

    #[test]
    fn classification_threshold() {
        assert!(DecoherenceTensor::from_components(0.0, 0.0, 1.0).is_degenerate());
        assert!(DecoherenceTensor::from_components(1.0, 1.0, 1.0).is_degenerate());
        let nd = DecoherenceTensor::from_components(1.0, 0.2, 2.0);
        assert_eq!(nd.classification, Degeneracy::NonDegenerate);
        let inv = nd.g_inv.clone().unwrap();
        assert!((inv * &nd.g - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn rotation_examples() {
        let diag = DecoherenceTensor::from_components(2.0, 0.0, 0.5);
        let (theta, r) = canonical_rotation(&diag, 1.0, 1.0).unwrap();
        assert_eq!(theta, 0.0);
        assert_eq!(r.g, diag.g);

        // equal scaled diagonals: g^{xx}Π² = g^{pp}L²
        let (l, pi) = (2.0, 0.5);
        let g = DecoherenceTensor::from_components(4.0 / (pi * pi), 0.3 / (pi * l), 4.0 / (l * l));
        let (theta, r) = canonical_rotation(&g, l, pi).unwrap();
        assert_abs_diff_eq!(theta, std::f64::consts::FRAC_PI_4, epsilon = 1e-14);
        assert!(r.gxp().abs() < 1e-14);

        let mut rng = substream(5, "rot");
        for _ in 0..20 {
            let a: f64 = rng.random_range(0.1..3.0);
            let c: f64 = rng.random_range(0.1..3.0);
            let b: f64 = rng.random_range(-1.0..1.0) * (a * c).sqrt();
            let g = DecoherenceTensor::from_components(a, b, c);
            let (l, pi) = (rng.random_range(0.5..2.0), rng.random_range(0.5..2.0));
            let (_, r) = canonical_rotation(&g, l, pi).unwrap();
            assert!(r.gxp().abs() < 1e-12 * g.g.amax());
            // scaled eigenvalues agree with a dense eigendecomposition
            let scaled = DMatrix::from_row_slice(2, 2, &[pi * pi * a, pi * l * b, pi * l * b, l * l * c]);
            let mut e: Vec<f64> = SymmetricEigen::new(scaled).eigenvalues.iter().copied().collect();
            let mut got = vec![r.gxx() * pi * pi, r.gpp() * l * l];
            e.sort_by(|x, y| x.partial_cmp(y).unwrap());
            got.sort_by(|x, y| x.partial_cmp(y).unwrap());
            assert!((e[0] - got[0]).abs() < 1e-12 && (e[1] - got[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn text_roundtrip_and_validation() {
        let s = random_spectrum(&mut substream(6, "txt"), 3);
        let back = CouplingSpectrum::<f64>::from_text(&s.to_text().unwrap()).unwrap();
        assert_eq!(back.transitions.len(), s.transitions.len());
        assert!((decoherence_coeffs(&back).g - decoherence_coeffs(&s).g).amax() < 1e-12);
        // a transition without its Hermitian partner is rejected
        let mut ts = pair(C::new(1.0, 0.0), C::new(0.0, 0.0), 1.0, 0.3);
        ts.pop();
        assert!(CouplingSpectrum::new(ts, 1.0, 1.0, 0.1, 1).is_err());
        assert!(CouplingSpectrum::<f64>::from_text("epsilon=0.1\n").is_err());
        assert!(matches!(CouplingSpectrum::<f64>::from_text("beta=1\n0,1,2\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn multi_pair_coefficients() {
        let mut rng = substream(7, "multi");
        let d = 4;
        let env = thermal_state(&random_hermitian::<f64>(&mut rng, d, SpaceTag::Environment), 0.8).unwrap();
        let ops: Vec<_> = (0..4).map(|_| random_hermitian::<f64>(&mut rng, d, SpaceTag::Environment)).collect();
        let s = CouplingSpectrum::from_operators(&ops[..2], &ops[2..], &env, 1.0, 0.1).unwrap();
        let g = decoherence_coeffs(&s);
        assert_eq!(g.g.shape(), (4, 4));
        assert!((&g.g - g.g.transpose()).amax() < 1e-14);
        assert!(g.eigenvalues()[0] >= -1e-12 * g.g.norm());
    }

    #[test]
    fn single_precision_coefficients() {
        let s = oscillator_bath::<f32>(&[(C::new(0.2, 0.0), 1.0)], 2.0, 4, BathCoupling::PositionOnly, 1.0, 0.0).unwrap();
        let g = decoherence_coeffs(&s);
        assert!(g.gpp() > 0.0 && g.gxx() == 0.0);
    }
}
