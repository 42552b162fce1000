//! Spectral and energy efficiency optimization for multi-cell MISO broadcast
//! channels assisted by regular or STAR reconfigurable intelligent surfaces,
//! operating with short packets (finite blocklength).
//!
//! The crate is organized bottom-up:
//!
//! * [`topology`] and [`channel`] build network geometry, fading draws and
//!   effective channels as affine functions of the surface coefficients.
//! * [`ris`] holds the surface state, its feasibility sets and projections.
//! * [`metrics`] evaluates SINR, channel dispersion, finite-blocklength rates
//!   and energy efficiency.
//! * [`surrogate`] builds concave quadratic minorizers of the rates.
//! * [`convex`] solves the resulting convex subproblems and hosts the
//!   (generalized) Dinkelbach drivers.
//! * [`beam_opt`], [`ris_opt`] and [`framework`] implement the alternating
//!   block updates and the outer loop.
//! * [`harness`] runs Monte-Carlo sweeps and emits result tables.

pub mod beam_opt;
pub mod channel;
pub mod convex;
pub mod error;
pub mod framework;
pub mod harness;
pub mod metrics;
pub mod ris;
pub mod ris_opt;
pub mod scenario;
pub mod surrogate;
pub mod topology;

pub use num_complex::Complex64 as C64;

pub use beam_opt::{update_beams, BeamformingSet, UtilityKind, UtilitySpec};
pub use channel::{effective_channel, generate_channels, ChannelSet};
pub use error::{Error, Result};
pub use framework::{init_maxmin_sinr, optimize, AoOptions, AoState, Instance};
pub use metrics::{EnergyParams, FblParams, RateReport};
pub use ris::{FeasibilitySet, PhaseAmplitudeModel, RisMode, RisState, Side};
pub use topology::{default_topology, NetworkTopology, PropagationParams};
