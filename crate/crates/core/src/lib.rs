//! Terminal-descent guidance with controllability-boundary retargeting.
//!
//! A cubic-polynomial base guidance law with a learned time-to-go
//! policy, an offline construction of the constrained controllable set,
//! a bi-level convex fit of the controllability boundary in a reduced
//! 2-D state space, and a one-shot retargeting layer that projects
//! infeasible states onto that boundary. Validated against a 3-DOF
//! closed-loop lander simulator.

pub mod artifacts;
pub mod boundary;
pub mod config;
pub mod dataset;
pub mod error;
pub mod frames;
pub mod guidance;
pub mod mc;
pub mod ops;
pub mod pipeline;
pub mod retarget;
pub mod sim;
pub mod tgo;

pub use boundary::{ConicBoundary, ReducedState2};
pub use config::RunConfig;
pub use dataset::{FeasibilitySet, ReducedGuidanceState, SampleMode};
pub use error::{Error, Result};
pub use frames::{GuidanceFrame, Vec3};
pub use guidance::{GuidanceProblem, RolloutConfig};
pub use retarget::{guided_descent, FlightOptions, RetargetDecision};
pub use sim::{ConstraintSet, LanderState, RolloutResult};
pub use tgo::TgoPolicy;
