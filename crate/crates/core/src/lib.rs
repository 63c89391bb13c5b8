//! Lattice approximations of the stochastic heat equation
//! `∂ₜu = ½∂²ₓu + b(u) + σ(u)Ẇ` and numerical studies of its blowup.
//!
//! * [`model`]: drift and diffusion, Osgood criteria, growth assumptions.
//! * [`lattice`]: domains, random-walk heat kernels, kernel matrices.
//! * [`noise`]: counter-based Gaussian increments keyed by replica, site, step.
//! * [`integrator`]: Euler–Maruyama and alternating schemes.
//! * [`blowup`]: level crossings, passage times, blowup estimates.
//! * [`experiments`]: replica-parallel studies and [`mc_drive`].
//! * [`config`] and [`output`]: run configuration and emitted files.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod blowup;
pub mod config;
pub mod error;
pub mod experiments;
pub mod integrator;
pub mod lattice;
pub mod model;
pub mod noise;
pub mod output;

pub use blowup::{CrossingLog, CrossingRecord, CrossingSpec, Direction, ProbabilityEstimate, Statistic};
pub use config::{parse_config, ConfigError, ConfigErrors, ErrorCode, ExperimentSpec, RunConfig};
pub use error::{Error, Result};
pub use experiments::{mc_drive, Experiment, ExperimentReport};
pub use integrator::{InitialProfile, NegativityPolicy, Scheme, SolverConfig, Status, Trajectory, DEFAULT_FIELD_CAP};
pub use lattice::{Boundary, KernelMatrix, LatticeDomain};
pub use model::{ModelSpec, OsgoodTime, ScalarFn, Verdict};
pub use noise::{NoiseSource, NoiseView};
