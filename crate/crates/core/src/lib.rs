//! Memory and forecasting capacities of state-space systems driven by
//! stationary inputs.
//!
//! Everything numerical is generic over [`Real`]; `f64` and `f32` aliases are
//! provided below. The default tolerances are tuned for `f64`.
//!
//! * [`inputs`]: ARMA(1,1) inputs, autocovariances, spectral density and
//!   Toeplitz diagnostics.
//! * [`systems`]: linear systems and echo state networks, filtering,
//!   morphisms and standardization.
//! * [`capacity`]: empirical capacities and the input-dependent bounds.
//! * [`lincap`]: exact linear analytics and the controllable-subspace
//!   reduction.

pub mod capacity;
pub mod error;
pub mod inputs;
pub mod lincap;
pub mod linalg;
pub mod scalar;
pub mod systems;

pub use capacity::{
    BoundsOptions, BoundsReport, CapacityMode, CapacityReport, EmpiricalOptions, Estimator, Violation,
};
pub use error::{Error, Result};
pub use inputs::{ArmaAutocovariance, ArmaProcessSpec, AutocovarianceFunction, EmpiricalAutocovariance};
pub use lincap::{ControllabilityReport, KernelCheck, RankCapacity, ReducedSystem};
pub use scalar::Real;
pub use systems::{Activation, AffineMap, EchoStateNetwork, LinearStateSystem, StateMap, StateSystem};

pub type Arma = ArmaProcessSpec<f64>;
pub type Arma32 = ArmaProcessSpec<f32>;
pub type LinearSystem = LinearStateSystem<f64>;
pub type LinearSystem32 = LinearStateSystem<f32>;
pub type Esn = EchoStateNetwork<f64>;
pub type Esn32 = EchoStateNetwork<f32>;
pub type System = StateSystem<f64>;
pub type System32 = StateSystem<f32>;
pub type Report = CapacityReport<f64>;
pub type Bounds = BoundsReport<f64>;
