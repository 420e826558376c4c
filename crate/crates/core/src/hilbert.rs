//! Finite-dimensional operator algebra on the composite space
//! `H_c ⊗ H_e`.
//!
//! The basis ordering is collective-major everywhere: `|k,n> = |k> ⊗ |n>`
//! has flat index `k·d_e + n`. Serialized operators rely on this.

use std::fmt;

use nalgebra::{ComplexField, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{cis, lit, re, Real, C};

/// Which factor of the composite space an operator acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpaceTag {
    Collective,
    Environment,
    Composite,
}

impl fmt::Display for SpaceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpaceTag::Collective => "collective",
            SpaceTag::Environment => "environment",
            SpaceTag::Composite => "composite",
        })
    }
}

impl std::str::FromStr for SpaceTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "collective" => Ok(SpaceTag::Collective),
            "environment" => Ok(SpaceTag::Environment),
            "composite" => Ok(SpaceTag::Composite),
            other => Err(Error::InvalidParameter(format!("unknown space tag `{other}`"))),
        }
    }
}

/// Dimensions of the collective and environment factors plus the action
/// scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HilbertDims<T> {
    pub d_c: usize,
    pub d_e: usize,
    pub hbar: T,
}

impl<T: Real> HilbertDims<T> {
    pub fn new(d_c: usize, d_e: usize, hbar: T) -> Result<Self> {
        if d_c == 0 || d_e == 0 {
            return Err(Error::InvalidParameter("Hilbert dimensions must be >= 1".into()));
        }
        if !(hbar > T::zero()) {
            return Err(Error::InvalidParameter("hbar must be positive".into()));
        }
        Ok(Self { d_c, d_e, hbar })
    }

    pub fn composite(&self) -> usize {
        self.d_c * self.d_e
    }
}

/// Dense square operator with a space tag.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator<T: Real> {
    pub tag: SpaceTag,
    pub mat: DMatrix<C<T>>,
}

impl<T: Real> Operator<T> {

    /// Text form: `dim=<d> tag=<tag>`, then one line per row of
    /// comma-separated `re:im` entries.
    pub fn to_text(&self) -> String {
        let n = self.dim();
        let mut s = format!("dim={n} tag={}\n", self.tag);
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format!("{:e}:{:e}", self.mat[(i, j)].re, self.mat[(i, j)].im)).collect();
            s += &row.join(",");
            s.push('\n');
        }
        s
    }

    /// Parses [`Operator::to_text`] output; blank and `#` lines are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hl, header) = lines.next().ok_or(Error::Parse { line: 0, msg: "empty operator text".into() })?;
        let perr = |line: usize, msg: String| Error::Parse { line, msg };
        let mut dim = None;
        let mut tag = None;
        for field in header.split_whitespace() {
            match field.split_once('=') {
                Some(("dim", v)) => dim = Some(v.parse::<usize>().map_err(|e| perr(hl, format!("dim: {e}")))?),
                Some(("tag", v)) => tag = Some(v.parse::<SpaceTag>().map_err(|e| perr(hl, e.to_string()))?),
                _ => return Err(perr(hl, format!("unexpected header field `{field}`"))),
            }
        }
        let (dim, tag) = match (dim, tag) {
            (Some(d), Some(t)) => (d, t),
            _ => return Err(perr(hl, "header needs dim= and tag=".into())),
        };
        let mut mat = DMatrix::zeros(dim, dim);
        let mut rows = 0;
        for (ln, line) in lines {
            if rows == dim {
                return Err(perr(ln, format!("more than {dim} rows")));
            }
            let entries: Vec<&str> = line.split(',').collect();
            if entries.len() != dim {
                return Err(perr(ln, format!("expected {dim} entries, found {}", entries.len())));
            }
            for (j, e) in entries.iter().enumerate() {
                let (r, i) = e.trim().split_once(':').ok_or_else(|| perr(ln, format!("entry `{e}` is not re:im")))?;
                let num = |v: &str| v.trim().parse::<f64>().map(lit::<T>).map_err(|err| perr(ln, format!("{err}")));
                mat[(rows, j)] = C::new(num(r)?, num(i)?);
            }
            rows += 1;
        }
        if rows != dim {
            return Err(perr(0, format!("expected {dim} rows, found {rows}")));
        }
        Ok(Self { tag, mat })
    }
    pub fn new(tag: SpaceTag, mat: DMatrix<C<T>>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch { expected: mat.nrows(), found: mat.ncols() });
        }
        Ok(Self { tag, mat })
    }

    pub fn zeros(tag: SpaceTag, dim: usize) -> Self {
        Self { tag, mat: DMatrix::zeros(dim, dim) }
    }

    pub fn identity(tag: SpaceTag, dim: usize) -> Self {
        Self { tag, mat: DMatrix::identity(dim, dim) }
    }

    /// Real diagonal operator.
    pub fn diagonal(tag: SpaceTag, diag: &[T]) -> Self {
        let n = diag.len();
        let mut mat = DMatrix::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            mat[(i, i)] = re(d);
        }
        Self { tag, mat }
    }

    /// `|ket><bra|`.
    pub fn outer(tag: SpaceTag, ket: &DVector<C<T>>, bra: &DVector<C<T>>) -> Self {
        Self { tag, mat: ket * bra.adjoint() }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> C<T> {
        self.mat.trace()
    }

    pub fn adjoint(&self) -> Self {
        Self { tag: self.tag, mat: self.mat.adjoint() }
    }

    pub fn scale(&self, s: C<T>) -> Self {
        Self { tag: self.tag, mat: &self.mat * s }
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> T {
        self.mat.iter().fold(T::zero(), |m, z| m.max(z.modulus()))
    }

    /// Frobenius (Hilbert–Schmidt) norm.
    pub fn hs_norm(&self) -> T {
        self.mat.iter().fold(T::zero(), |s, z| s + z.norm_sqr()).sqrt()
    }

    /// Maximal deviation from Hermiticity, relative to the largest entry.
    pub fn hermiticity_defect(&self) -> T {
        let scale = self.max_abs();
        if scale == T::zero() {
            return T::zero();
        }
        let n = self.dim();
        let mut worst = T::zero();
        for i in 0..n {
            for j in i..n {
                let d = (self.mat[(i, j)] - self.mat[(j, i)].conj()).modulus();
                worst = worst.max(d);
            }
        }
        worst / scale
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_defect() <= crate::scalar::tol(1e-12)
    }

    pub(crate) fn require_hermitian(&self) -> Result<()> {
        let d = self.hermiticity_defect();
        if d <= crate::scalar::tol(1e-12) {
            Ok(())
        } else {
            Err(Error::NotHermitian { deviation: crate::scalar::to_f64(d) })
        }
    }

    pub(crate) fn require_tag(&self, tag: SpaceTag) -> Result<()> {
        if self.tag == tag {
            Ok(())
        } else {
            Err(Error::TagMismatch { expected: tag.to_string(), found: self.tag.to_string() })
        }
    }

    pub(crate) fn require_dim(&self, dim: usize) -> Result<()> {
        if self.dim() == dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: dim, found: self.dim() })
        }
    }

    /// `[self, other]`.
    pub fn commutator(&self, other: &Self) -> Self {
        Self { tag: self.tag, mat: &self.mat * &other.mat - &other.mat * &self.mat }
    }

    /// Hermitian part `(A + A†)/2`.
    pub fn hermitian_part(&self) -> Self {
        let half = re(lit::<T>(0.5));
        Self { tag: self.tag, mat: (&self.mat + self.mat.adjoint()) * half }
    }
}

/// Eigendecomposition of the Hermitian part of `m`. Entries below
/// `ε²·max|m|` are flushed first: subnormal tails (far Gaussian samples)
/// otherwise turn the QR sweeps into NaN.
pub(crate) fn hermitian_eigen<T: Real>(m: &DMatrix<C<T>>) -> SymmetricEigen<C<T>, nalgebra::Dyn> {
    let eps = T::default_epsilon();
    let floor = m.camax() * eps * eps;
    let h = (m + m.adjoint()).map(|z| {
        let z = z * re(lit::<T>(0.5));
        if z.norm_sqr().sqrt() < floor { C::new(T::zero(), T::zero()) } else { z }
    });
    SymmetricEigen::new(h)
}

impl<T: Real> std::ops::Add for &Operator<T> {
    type Output = Operator<T>;
    fn add(self, rhs: Self) -> Operator<T> {
        Operator { tag: self.tag, mat: &self.mat + &rhs.mat }
    }
}

impl<T: Real> std::ops::Sub for &Operator<T> {
    type Output = Operator<T>;
    fn sub(self, rhs: Self) -> Operator<T> {
        Operator { tag: self.tag, mat: &self.mat - &rhs.mat }
    }
}

impl<T: Real> std::ops::Mul for &Operator<T> {
    type Output = Operator<T>;
    fn mul(self, rhs: Self) -> Operator<T> {
        Operator { tag: self.tag, mat: &self.mat * &rhs.mat }
    }
}

/// Hermitian, trace-class operator. Physical states additionally have unit
/// trace and nonnegative spectrum, but general densities need not.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator<T: Real> {
    pub op: Operator<T>,
    pub trace: C<T>,
}

impl<T: Real> DensityOperator<T> {
    pub fn new(op: Operator<T>) -> Result<Self> {
        op.require_hermitian()?;
        let trace = op.trace();
        if !trace.re.is_finite() || !trace.im.is_finite() {
            return Err(Error::InvalidParameter("density trace is not finite".into()));
        }
        Ok(Self { op, trace })
    }

    /// Builds without the Hermiticity check; the caller guarantees it.
    pub(crate) fn new_unchecked(op: Operator<T>) -> Self {
        let trace = op.trace();
        Self { op, trace }
    }

    /// `|ψ><ψ|` for a (not necessarily normalized) vector.
    pub fn pure(tag: SpaceTag, psi: &DVector<C<T>>) -> Self {
        Self::new_unchecked(Operator::outer(tag, psi, psi))
    }

    pub fn maximally_mixed(tag: SpaceTag, dim: usize) -> Self {
        let v = T::one() / crate::scalar::count::<T>(dim);
        Self::new_unchecked(Operator::identity(tag, dim).scale(re(v)))
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn tag(&self) -> SpaceTag {
        self.op.tag
    }

    pub fn mat(&self) -> &DMatrix<C<T>> {
        &self.op.mat
    }

    pub fn eigenvalues(&self) -> DVector<T> {
        hermitian_eigen(&self.op.mat).eigenvalues
    }

    /// Unit trace and eigenvalues >= -1e-10.
    pub fn is_physical(&self) -> bool {
        let unit = (self.trace - C::new(T::one(), T::zero())).modulus() <= crate::scalar::tol(1e-10);
        let floor: T = -crate::scalar::tol::<T>(1e-10);
        unit && self.eigenvalues().iter().all(|&e| e >= floor)
    }

    /// Returns `self / tr(self)`.
    pub fn normalized(&self) -> Self {
        let t = self.trace.re;
        Self::new_unchecked(self.op.scale(re(T::one() / t)))
    }
}

/// Thermal test density of the environment, `ρe = exp(-β He - α)`.
#[derive(Clone, Debug)]
pub struct ThermalEnvironment<T: Real> {
    pub hamiltonian: Operator<T>,
    pub beta: T,
    pub alpha: T,
    pub energy: T,
    pub variance: T,
    pub rho: DensityOperator<T>,
    /// Eigenvalues of `He`, ascending.
    pub levels: DVector<T>,
    /// Eigenvectors of `He` as columns, matching `levels`.
    pub basis: DMatrix<C<T>>,
}

impl<T: Real> ThermalEnvironment<T> {
    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    /// Boltzmann populations in the energy eigenbasis.
    pub fn populations(&self) -> Vec<T> {
        self.levels.iter().map(|&e| (-(self.beta * e) - self.alpha).exp()).collect()
    }
}

/// `a ⊗ b`, collective-major.
pub fn tensor_product<T: Real>(a: &Operator<T>, b: &Operator<T>) -> Result<Operator<T>> {
    a.require_tag(SpaceTag::Collective)?;
    b.require_tag(SpaceTag::Environment)?;
    Ok(Operator { tag: SpaceTag::Composite, mat: a.mat.kronecker(&b.mat) })
}

/// Environment partial trace of a composite operator (no Hermiticity
/// requirement).
pub fn partial_trace_env_op<T: Real>(op: &Operator<T>, dims: &HilbertDims<T>) -> Result<Operator<T>> {
    op.require_dim(dims.composite())?;
    let (dc, de) = (dims.d_c, dims.d_e);
    let mut out = DMatrix::zeros(dc, dc);
    for k in 0..dc {
        for kp in 0..dc {
            let mut s = C::new(T::zero(), T::zero());
            for n in 0..de {
                s += op.mat[(k * de + n, kp * de + n)];
            }
            out[(k, kp)] = s;
        }
    }
    Ok(Operator { tag: SpaceTag::Collective, mat: out })
}

/// `<k|ρr|k'> = Σ_n <k,n|ρ|k',n>`.
pub fn partial_trace_env<T: Real>(
    rho: &DensityOperator<T>,
    dims: &HilbertDims<T>,
) -> Result<DensityOperator<T>> {
    Ok(DensityOperator::new_unchecked(partial_trace_env_op(&rho.op, dims)?))
}

/// Collective partial trace, giving an environment operator.
pub fn partial_trace_collective<T: Real>(op: &Operator<T>, dims: &HilbertDims<T>) -> Result<Operator<T>> {
    op.require_dim(dims.composite())?;
    let (dc, de) = (dims.d_c, dims.d_e);
    let mut out = DMatrix::zeros(de, de);
    for n in 0..de {
        for np in 0..de {
            let mut s = C::new(T::zero(), T::zero());
            for k in 0..dc {
                s += op.mat[(k * de + n, k * de + np)];
            }
            out[(n, np)] = s;
        }
    }
    Ok(Operator { tag: SpaceTag::Environment, mat: out })
}

/// `Tr ρ²`.
pub fn purity<T: Real>(rho: &DensityOperator<T>) -> T {
    // Tr ρ² = Σ |ρ_ij|² for Hermitian ρ.
    rho.op.mat.iter().fold(T::zero(), |s, z| s + z.norm_sqr())
}

/// Spectral propagator for a time-independent Hermitian generator.
#[derive(Clone, Debug)]
pub struct Propagator<T: Real> {
    pub levels: DVector<T>,
    pub vectors: DMatrix<C<T>>,
    pub hbar: T,
}

impl<T: Real> Propagator<T> {
    pub fn new(h: &Operator<T>, hbar: T) -> Result<Self> {
        h.require_hermitian()?;
        let eig = hermitian_eigen(&h.mat);
        Ok(Self { levels: eig.eigenvalues, vectors: eig.eigenvectors, hbar })
    }

    /// `U(t) = exp(-i h t / ħ)`.
    pub fn unitary(&self, t: T) -> DMatrix<C<T>> {
        let n = self.levels.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let phase = cis(-(self.levels[j] * t) / self.hbar);
            for i in 0..n {
                scaled[(i, j)] *= phase;
            }
        }
        scaled * self.vectors.adjoint()
    }

    /// `U(t) X U(t)†`.
    pub fn conjugate(&self, x: &DMatrix<C<T>>, t: T) -> DMatrix<C<T>> {
        let u = self.unitary(t);
        &u * x * u.adjoint()
    }
}

/// Exact unitary evolution `ρ(t) = U ρ0 U†`, sampled at `steps + 1`
/// uniform times `t_k = k·t/steps`, `k = 0..=steps`.
pub fn evolve_exact<T: Real>(
    rho0: &DensityOperator<T>,
    h: &Operator<T>,
    t: T,
    steps: usize,
    hbar: T,
) -> Result<Vec<(T, DensityOperator<T>)>> {
    h.require_dim(rho0.dim())?;
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be >= 1".into()));
    }
    let prop = Propagator::new(h, hbar)?;
    let step = t / crate::scalar::count::<T>(steps);
    let u_step = prop.unitary(step);
    let u_adj = u_step.adjoint();
    let mut out = Vec::with_capacity(steps + 1);
    let mut rho = rho0.op.mat.clone();
    out.push((T::zero(), rho0.clone()));
    for k in 1..=steps {
        rho = &u_step * rho * &u_adj;
        let tk = step * crate::scalar::count::<T>(k);
        let op = Operator { tag: rho0.tag(), mat: rho.clone() };
        out.push((tk, DensityOperator::new_unchecked(op.hermitian_part())));
    }
    Ok(out)
}

/// Thermal environment `ρe = exp(-β He - α)` with `α = ln Σ e^{-β E_n}`.
pub fn thermal_state<T: Real>(h_e: &Operator<T>, beta: T) -> Result<ThermalEnvironment<T>> {
    h_e.require_hermitian()?;
    if beta < T::zero() {
        return Err(Error::InvalidParameter("inverse temperature must be >= 0".into()));
    }
    let eig = hermitian_eigen(&h_e.mat);
    // sort ascending
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let levels = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut basis = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        basis.set_column(col, &eig.eigenvectors.column(i));
    }

    let e_min = levels[0];
    let weights: Vec<T> = levels.iter().map(|&e| (-(beta * (e - e_min))).exp()).collect();
    let z: T = weights.iter().copied().fold(T::zero(), |a, b| a + b);
    let alpha = z.ln() - beta * e_min;
    let probs: Vec<T> = weights.iter().map(|&w| w / z).collect();

    let mut energy = T::zero();
    let mut second = T::zero();
    for (p, &e) in probs.iter().zip(levels.iter()) {
        energy += *p * e;
        second += *p * e * e;
    }
    let mut variance = second - energy * energy;
    if variance < T::zero() {
        // roundoff only: second moment >= square of the mean
        variance = T::zero();
    }

    let mut diag = DMatrix::zeros(n, n);
    for (i, &p) in probs.iter().enumerate() {
        diag[(i, i)] = re(p);
    }
    let rho_mat = &basis * diag * basis.adjoint();
    let rho = DensityOperator::new_unchecked(Operator { tag: SpaceTag::Environment, mat: rho_mat }.hermitian_part());

    Ok(ThermalEnvironment { hamiltonian: h_e.clone(), beta, alpha, energy, variance, rho, levels, basis })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::count;
    use approx::assert_abs_diff_eq;

    fn basis(n: usize, k: usize) -> DVector<C<f64>> {
        let mut v = DVector::zeros(n);
        v[k] = C::new(1.0, 0.0);
        v
    }

    fn random_density(n: usize, seed: u64, tag: SpaceTag) -> DensityOperator<f64> {
        crate::rng::random_density(&mut crate::rng::substream(seed, "test"), n, tag)
    }

    #[test]
    fn tensor_identity_and_dims() {
        let a = Operator::<f64>::identity(SpaceTag::Collective, 2);
        let b = Operator::<f64>::identity(SpaceTag::Environment, 3);
        let ab = tensor_product(&a, &b).unwrap();
        assert_eq!(ab.dim(), 6);
        assert_eq!(ab.mat, DMatrix::identity(6, 6));
        assert_eq!(ab.tag, SpaceTag::Composite);
    }

    #[test]
    fn tensor_basis_action() {
        let flip = Operator::outer(SpaceTag::Collective, &basis(2, 0), &basis(2, 1));
        let ie = Operator::<f64>::identity(SpaceTag::Environment, 3);
        let op = tensor_product(&flip, &ie).unwrap();
        for n in 0..3 {
            let out = &op.mat * basis(6, 3 + n);
            assert_eq!(out, basis(6, n));
        }
    }

    #[test]
    fn tensor_rejects_wrong_tags() {
        let a = Operator::<f64>::identity(SpaceTag::Environment, 2);
        let b = Operator::<f64>::identity(SpaceTag::Environment, 2);
        assert!(matches!(tensor_product(&a, &b), Err(Error::TagMismatch { .. })));
    }

    #[test]
    fn partial_trace_of_product() {
        let rc = random_density(3, 1, SpaceTag::Collective);
        let re_ = random_density(4, 2, SpaceTag::Environment);
        let dims = HilbertDims::new(3, 4, 1.0).unwrap();
        let prod = DensityOperator::new_unchecked(tensor_product(&rc.op, &re_.op).unwrap());
        let red = partial_trace_env(&prod, &dims).unwrap();
        assert!((red.op.mat.clone() - rc.op.mat.clone()).camax() < 1e-12);
    }

    #[test]
    fn bell_state_reduces_to_half_identity() {
        let s = 1.0 / 2f64.sqrt();
        let mut psi = DVector::zeros(4);
        psi[0] = C::new(s, 0.0);
        psi[3] = C::new(s, 0.0);
        let rho = DensityOperator::pure(SpaceTag::Composite, &psi);
        let dims = HilbertDims::new(2, 2, 1.0).unwrap();
        let red = partial_trace_env(&rho, &dims).unwrap();
        let half = DMatrix::<C<f64>>::identity(2, 2) * C::new(0.5, 0.0);
        assert!((red.op.mat - half).camax() < 1e-15);
    }

    #[test]
    fn partial_trace_matches_double_index_sum() {
        let rho = random_density(12, 7, SpaceTag::Composite);
        let dims = HilbertDims::new(4, 3, 1.0).unwrap();
        let red = partial_trace_env(&rho, &dims).unwrap();
        // direct summation oracle over the composite diagonal blocks
        let mut tr = C::new(0.0, 0.0);
        for k in 0..4 {
            for n in 0..3 {
                tr += rho.op.mat[(k * 3 + n, k * 3 + n)];
            }
        }
        assert_abs_diff_eq!(red.trace.re, tr.re, epsilon = 1e-14);
        assert_abs_diff_eq!(red.trace.re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn partial_trace_dimension_mismatch() {
        let rho = random_density(5, 3, SpaceTag::Composite);
        let dims = HilbertDims::new(2, 3, 1.0).unwrap();
        assert!(matches!(partial_trace_env(&rho, &dims), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn purity_examples() {
        let pure = DensityOperator::pure(SpaceTag::Collective, &basis(3, 1));
        assert_abs_diff_eq!(purity(&pure), 1.0, epsilon = 1e-15);
        let mixed = DensityOperator::<f64>::maximally_mixed(SpaceTag::Collective, 4);
        assert_abs_diff_eq!(purity(&mixed), 0.25, epsilon = 1e-15);
        let d = DensityOperator::new(Operator::diagonal(SpaceTag::Collective, &[0.75, 0.25])).unwrap();
        assert_abs_diff_eq!(purity(&d), 0.625, epsilon = 1e-15);
    }

    #[test]
    fn exact_evolution_null_and_stationary() {
        let rho0 = random_density(3, 11, SpaceTag::Collective);
        let zero = Operator::zeros(SpaceTag::Collective, 3);
        for (_, r) in evolve_exact(&rho0, &zero, 2.0, 4, 1.0).unwrap() {
            assert!((r.op.mat - rho0.op.mat.clone()).camax() < 1e-14);
        }
        // h commuting with ρ0: use ρ0 itself as the generator
        for (_, r) in evolve_exact(&rho0, &rho0.op, 3.0, 5, 1.0).unwrap() {
            assert!((r.op.mat - rho0.op.mat.clone()).camax() < 1e-12);
        }
    }

    #[test]
    fn exact_evolution_rabi_flip() {
        let omega = 1.7;
        let hbar = 0.8;
        let mut h = DMatrix::zeros(2, 2);
        h[(0, 1)] = C::new(omega / 2.0, 0.0);
        h[(1, 0)] = C::new(omega / 2.0, 0.0);
        let h = Operator::new(SpaceTag::Collective, h).unwrap();
        let rho0 = DensityOperator::pure(SpaceTag::Collective, &basis(2, 0));
        let t = std::f64::consts::PI * hbar / omega;
        let traj = evolve_exact(&rho0, &h, t, 10, hbar).unwrap();
        let last = &traj.last().unwrap().1;
        let target = DensityOperator::pure(SpaceTag::Collective, &basis(2, 1));
        assert!((last.op.mat.clone() - target.op.mat).camax() < 1e-10);
    }

    #[test]
    fn exact_evolution_rejects_non_hermitian() {
        let rho0 = random_density(2, 1, SpaceTag::Collective);
        let mut h = DMatrix::zeros(2, 2);
        h[(0, 1)] = C::new(1.0, 0.0);
        let h = Operator::new(SpaceTag::Collective, h).unwrap();
        assert!(matches!(evolve_exact(&rho0, &h, 1.0, 2, 1.0), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn thermal_infinite_temperature() {
        let h = Operator::diagonal(SpaceTag::Environment, &[0.0, 1.0, 3.0, 4.0]);
        let env = thermal_state(&h, 0.0).unwrap();
        assert_abs_diff_eq!(env.energy, 2.0, epsilon = 1e-14);
        let quarter = DMatrix::<C<f64>>::identity(4, 4) * C::new(0.25, 0.0);
        assert!((env.rho.op.mat.clone() - quarter).camax() < 1e-14);
    }

    #[test]
    fn thermal_zero_temperature_limit() {
        let h = Operator::diagonal(SpaceTag::Environment, &[0.5, 1.0, 2.0]);
        let env = thermal_state(&h, 1e3 / 0.5).unwrap();
        let ground = DensityOperator::pure(SpaceTag::Environment, &basis(3, 0));
        assert!((env.rho.op.mat.clone() - ground.op.mat).camax() < 1e-8);
        assert!(env.variance < 1e-8);
    }

    #[test]
    fn thermal_ladder_matches_truncated_geometric_series() {
        let (hw, beta, d) = (0.7, 1.3, 9usize);
        let levels: Vec<f64> = (0..d).map(|n| hw * n as f64).collect();
        let env = thermal_state(&Operator::diagonal(SpaceTag::Environment, &levels), beta).unwrap();
        // closed form of Σ n x^n / Σ x^n for n < d
        let x = (-beta * hw).exp();
        let z = (1.0 - x.powi(d as i32)) / (1.0 - x);
        let num = x * (1.0 - d as f64 * x.powi(d as i32 - 1) + (d as f64 - 1.0) * x.powi(d as i32)) / (1.0 - x).powi(2);
        assert_abs_diff_eq!(env.energy, hw * num / z, epsilon = 1e-10);
        assert_abs_diff_eq!(env.alpha, z.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(env.rho.trace.re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn thermal_rejects_negative_beta() {
        let h = Operator::<f64>::diagonal(SpaceTag::Environment, &[0.0, 1.0]);
        assert!(thermal_state(&h, -1.0).is_err());
    }

    #[test]
    fn variance_zero_iff_single_level_support() {
        let degenerate = Operator::<f64>::diagonal(SpaceTag::Environment, &[2.0, 2.0, 2.0]);
        assert!(thermal_state(&degenerate, 0.4).unwrap().variance.abs() < 1e-14);
        let spread = Operator::<f64>::diagonal(SpaceTag::Environment, &[0.0, 2.0]);
        assert!(thermal_state(&spread, 0.4).unwrap().variance > 1e-3);
    }

    #[test]
    fn works_in_single_precision() {
        let rho0 = crate::rng::random_density::<f32>(&mut crate::rng::substream(3, "f32"), 3, SpaceTag::Collective);
        let h = crate::rng::random_hermitian::<f32>(&mut crate::rng::substream(4, "f32"), 3, SpaceTag::Collective);
        let traj = evolve_exact(&rho0, &h, 1.0, 3, 1.0).unwrap();
        let p0 = purity(&rho0);
        let p1 = purity(&traj[3].1);
        assert!((p0 - p1).abs() < 1e-4 * count::<f32>(1));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn partial_trace_factorizes(seed in 0u64..10_000, dc in 1usize..4, de in 1usize..4) {
                let mut rng = crate::rng::substream(seed, "pt");
                let a = crate::rng::random_operator::<f64>(&mut rng, dc, SpaceTag::Collective);
                let b = crate::rng::random_operator::<f64>(&mut rng, de, SpaceTag::Environment);
                let dims = HilbertDims::new(dc, de, 1.0).unwrap();
                let red = partial_trace_env_op(&tensor_product(&a, &b).unwrap(), &dims).unwrap();
                let expect = &a.mat * b.trace();
                prop_assert!((red.mat - expect).camax() < 1e-12);
            }

            #[test]
            fn exact_evolution_preserves_spectrum(seed in 0u64..10_000, t in 0.0f64..5.0) {
                let mut rng = crate::rng::substream(seed, "ev");
                let rho = crate::rng::random_density::<f64>(&mut rng, 4, SpaceTag::Collective);
                let h = crate::rng::random_hermitian::<f64>(&mut rng, 4, SpaceTag::Collective);
                let traj = evolve_exact(&rho, &h, t, 3, 1.0).unwrap();
                let mut e0: Vec<f64> = rho.eigenvalues().iter().copied().collect();
                e0.sort_by(|a, b| a.partial_cmp(b).unwrap());
                for (_, r) in &traj {
                    prop_assert!((r.trace.re - 1.0).abs() < 1e-10);
                    prop_assert!(r.op.hermiticity_defect() < 1e-12);
                    prop_assert!((purity(r) - purity(&rho)).abs() < 1e-10);
                    let mut e: Vec<f64> = r.eigenvalues().iter().copied().collect();
                    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    for (x, y) in e.iter().zip(&e0) {
                        prop_assert!((x - y).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn operator_text_round_trip() {
        let rho = random_density(5, 11, SpaceTag::Environment);
        let text = rho.op.to_text();
        assert!(text.starts_with("dim=5 tag=environment\n"));
        let back = Operator::<f64>::from_text(&format!("# comment\n{text}")).unwrap();
        assert_eq!(back, rho.op);
    }

    #[test]
    fn operator_text_errors_carry_line_numbers() {
        let bad = "dim=2 tag=collective\n1:0,0:0\n0:0,x:1\n";
        match Operator::<f64>::from_text(bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(Operator::<f64>::from_text("dim=2 tag=collective\n1:0,0:0\n").is_err());
        assert!(Operator::<f64>::from_text("dim=1 tag=nowhere\n1:0\n").is_err());
    }
}
