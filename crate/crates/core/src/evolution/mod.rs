//! Propagators for the reduced dynamics: memory-kernel and Markovian
//! master equations on finite Hilbert spaces, closed forms and heat
//! kernels for pure decoherence, and semiclassical phase-space flow.

mod master;
mod phase_space;
mod semiclassical;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hilbert::{purity, DensityOperator, Operator};
use crate::scalar::{to_f64, Real};

pub(crate) use phase_space::{smear_operator, smear_wigner};
pub use master::{evolve_master, MasterProblem};
pub use phase_space::{
    decoherence_generator, finite_difference_pure, finite_difference_stable_dt, generator_norm, heat_kernel_evolve,
    pure_decoherence_closed, wigner_boundary_mass,
};
pub use semiclassical::{semiclassical_evolve, HamiltonField};

/// Boundary mass above which phase-space runs abort.
pub const BOUNDARY_LIMIT: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    ExactOracle,
    RetardedMaster,
    MarkovMaster,
    PureDecoherenceClosed,
    HeatKernel,
    FiniteDifference,
    Semiclassical,
}

impl Mode {
    pub const ALL: [Mode; 7] = [
        Mode::ExactOracle,
        Mode::RetardedMaster,
        Mode::MarkovMaster,
        Mode::PureDecoherenceClosed,
        Mode::HeatKernel,
        Mode::FiniteDifference,
        Mode::Semiclassical,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::ExactOracle => "exact_oracle",
            Mode::RetardedMaster => "retarded_master",
            Mode::MarkovMaster => "markov_master",
            Mode::PureDecoherenceClosed => "pure_decoherence_closed",
            Mode::HeatKernel => "heat_kernel",
            Mode::FiniteDifference => "finite_difference",
            Mode::Semiclassical => "semiclassical",
        }
    }

    /// Modes acting on density matrices of a finite collective space.
    pub fn is_master(self) -> bool {
        matches!(self, Mode::ExactOracle | Mode::RetardedMaster | Mode::MarkovMaster)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown evolution mode '{s}'")))
    }
}

/// Time window and integrator options for one run.
#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionSpec<T> {
    pub mode: Mode,
    pub t_final: T,
    pub dt: T,
    pub include_hamiltonian_flow: bool,
    /// 1 keeps the Poisson bracket only, 2 adds the `ħ²` correction.
    pub hbar_order: u32,
    /// Keep every `record_every`-th step (the first and last are always kept).
    pub record_every: usize,
    /// Markov mode: integrate the kernel to infinity (with the spectrum's
    /// regularization) instead of from the start of the run.
    pub stationary_kernel: bool,
    /// Markov mode regularization `ε` of `∫₀^∞ e^{-iωτ - ετ} dτ`.
    pub epsilon: T,
    /// Retarded mode drops lags whose kernel norm falls below this
    /// fraction of the zero-lag norm.
    pub kernel_truncation: T,
}

impl<T: Real> EvolutionSpec<T> {
    pub fn new(mode: Mode, t_final: T, dt: T) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::InvalidParameter("dt must be positive".into()));
        }
        if t_final < T::zero() {
            return Err(Error::InvalidParameter("t_final must be >= 0".into()));
        }
        Ok(Self {
            mode,
            t_final,
            dt,
            include_hamiltonian_flow: true,
            hbar_order: 1,
            record_every: 1,
            stationary_kernel: false,
            epsilon: T::zero(),
            kernel_truncation: crate::scalar::lit(1e-6),
        })
    }

    pub fn with_hbar_order(mut self, order: u32) -> Result<Self> {
        if order != 1 && order != 2 {
            return Err(Error::InvalidParameter(format!("hbar_order must be 1 or 2, got {order}")));
        }
        self.hbar_order = order;
        Ok(self)
    }

    pub fn with_flow(mut self, flow: bool) -> Self {
        self.include_hamiltonian_flow = flow;
        self
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every.max(1);
        self
    }

    /// Number of uniform steps covering `[0, t_final]` with step `<= dt`.
    pub fn steps(&self) -> usize {
        let n = (to_f64(self.t_final) / to_f64(self.dt) - 1e-9).ceil();
        n.max(0.0) as usize
    }

    /// Actual step used, `t_final / steps`.
    pub fn step(&self) -> T {
        match self.steps() {
            0 => T::zero(),
            n => self.t_final / crate::scalar::count::<T>(n),
        }
    }

    pub(crate) fn keep(&self, k: usize) -> bool {
        k == 0 || k == self.steps() || k % self.record_every == 0
    }
}

/// One line of `trajectory.csv`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRow<T> {
    pub t: T,
    pub trace_re: T,
    pub purity: T,
    pub offdiag_l2: T,
    pub energy_c: T,
}

impl<T: Real> TrajectoryRow<T> {
    pub const HEADER: &'static str = "t,trace_re,purity,offdiag_l2,energy_c";

    /// Summary of `ρ` at time `t`; `energy_c = Re tr(ρ H_c)`.
    pub fn from_state(t: T, rho: &DensityOperator<T>, h_c: Option<&Operator<T>>) -> Self {
        let m = &rho.op.mat;
        let n = m.nrows();
        let mut off = T::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += m[(i, j)].norm_sqr();
                }
            }
        }
        let energy_c = h_c.map_or(T::zero(), |h| (m * &h.mat).trace().re);
        Self { t, trace_re: rho.trace.re, purity: purity(rho), offdiag_l2: off.sqrt(), energy_c }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{:e},{:e},{:e},{:e},{:e}",
            to_f64(self.t),
            to_f64(self.trace_re),
            to_f64(self.purity),
            to_f64(self.offdiag_l2),
            to_f64(self.energy_c)
        )
    }
}
