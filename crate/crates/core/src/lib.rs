//! AirComp feature aggregation for integrated sensing and edge inference.
//!
//! Devices observe a common target, extract features, and superpose them
//! over a multiple-access channel so the access point receives their sum.
//! This crate provides the statistical model, the two proxy metrics
//! (aggregation MSE and inter-class Mahalanobis distance), optimal
//! transceiver power allocation for TDM and FDM under either proxy, two
//! baselines, a MAP classifier and a Monte-Carlo sweep harness, plus
//! independent brute-force oracles for auditing the solvers.

pub mod aircomp;
pub mod audit;
pub mod baselines;
pub mod classify;
pub mod error;
pub mod fdm_opt;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod rng;
pub mod roots;
pub mod sensing;
pub mod tdm_opt;

pub use aircomp::{Allocation, ProxyReport};
pub use error::{Error, Result};
pub use fdm_opt::{FdmOptions, FdmSolution, OuterMethod};
pub use harness::{SweepConfig, SweepResult};
pub use model::{
    ChannelRealization, ClassModel, Multiplexing, Scenario, SecondMoments, SolverInstance,
};
pub use policy::SchemeKind;
pub use sensing::{FeatureSample, PcaBasis};
pub use tdm_opt::{TdmAllocation, TdmSolution};
