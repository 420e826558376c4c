//! Open-system dynamics of a collective subsystem coupled to an
//! environment: reduced density operators, Wigner functions and the
//! Weyl–Moyal calculus, decoherence and dissipation coefficients, master
//! equation integrators, and einselection diagnostics.
//!
//! Every numerical type is generic over the real scalar ([`Real`]: `f32`
//! or `f64`). The `*64` aliases at the crate root fix `f64`.

pub mod analysis;
pub mod coefficients;
pub mod error;
pub mod evolution;
pub mod hilbert;
pub mod projection;
pub mod rng;
pub mod scattering;
pub mod scalar;
pub mod spectral;
pub mod weyl;

pub use error::{Error, Result};
pub use scalar::{Real, C};

pub type Operator64 = hilbert::Operator<f64>;
pub type DensityOperator64 = hilbert::DensityOperator<f64>;
pub type HilbertDims64 = hilbert::HilbertDims<f64>;
pub type ThermalEnvironment64 = hilbert::ThermalEnvironment<f64>;
pub type Propagator64 = hilbert::Propagator<f64>;
pub type PhaseSpaceGrid64 = weyl::PhaseSpaceGrid<f64>;
pub type WignerFunction64 = weyl::WignerFunction<f64>;
pub type OperatorSymbol64 = weyl::OperatorSymbol<f64>;
pub type PhaseCell64 = weyl::PhaseCell<f64>;
pub type ProjectionContext64 = projection::ProjectionContext<f64>;
pub type CouplingSpectrum64 = coefficients::CouplingSpectrum<f64>;
pub type DecoherenceTensor64 = coefficients::DecoherenceTensor<f64>;
pub type DissipationTensor64 = coefficients::DissipationTensor<f64>;
pub type EvolutionSpec64 = evolution::EvolutionSpec<f64>;
pub type MasterProblem64 = evolution::MasterProblem<f64>;
pub type HamiltonField64 = evolution::HamiltonField<f64>;
pub type GasSpec64 = scattering::GasSpec<f64>;
