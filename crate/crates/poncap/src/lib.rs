//! Capacity analysis and discrete-event simulation of WDM passive optical
//! networks modeled as multiserver polling systems.
//!
//! Wavelengths are servers circulating among ONUs under a polling policy;
//! ONUs host user queues served with limited-gated grants and charge a
//! switch overhead per visit, and tunable-transmitter quotas cap how many
//! wavelengths an ONU can use at once. The crate provides
//!
//! - [`model`]: configuration, traffic and policy types with validation;
//! - [`analysis`]: exact stability conditions where they exist and the
//!   mean-field vacation fixed point for large systems;
//! - [`sim`]: a deterministic, seedable event-driven simulator of the
//!   polling system, the frame-based allocation mode, and a homogeneous
//!   toy system used to sanity-check the mean-field behaviour;
//! - [`experiments`]: capacity-region probing (simulation vs. analysis),
//!   convergence sweeps, and toy-model verification;
//! - [`config`] and [`cli`]: the structured-text config format and the
//!   command-line front end.
//!
//! Start with the `examples/` directory: each file is a runnable tour of
//! one capability.

pub mod analysis;
pub mod model;
pub mod sim;

pub use analysis::{
    classical_stability, gpon_frame_stability, mean_cycle_time, mean_field_stability,
    server_limit_stability, solve_mean_field, uniform_overhead_stability, AnalysisError,
    MeanFieldOptions, MeanFieldSolution, QueueVerdict, StabilityReport, SystemVerdict,
};
pub use model::{
    validate, validate_policy, Arrival, OnuConfig, PacketLaw, PollingPolicy, PonConfig,
    QueueConfig, QueueTraffic, TrafficSpec, Violation,
};
