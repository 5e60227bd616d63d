//! Lattice of recurrent cells that trade energy and chemicals, copy their
//! weights with mutation onto empty neighbours, and die when they run dry.
//!
//! Everything is generic over the scalar type; [`World64`] is the reference
//! path and [`World32`] the fast one. A run is deterministic in its config
//! and seed regardless of the worker count.

pub mod config;
pub mod engine;
pub mod error;
pub mod fields;
pub mod io;
pub mod ledger;
pub mod neural;
pub mod rng;
pub mod scalar;
pub mod signals;
pub mod variants;
pub mod world;

pub use config::{Precision, Variant, WorldConfig, PHASE_ORDER, PRESETS};
pub use engine::{
    grid_step, particles_step, MetricsRecord, Observer, RunOptions, RunSummary, Simulation, Stage,
    State,
};
pub use error::{ConfigError, Result, SimError};
pub use ledger::StepLedger;
pub use scalar::Scalar;
pub use variants::ParticleWorld;
pub use world::{Direction, Layout, World};

pub type World64 = World<f64>;
pub type World32 = World<f32>;
pub type ParticleWorld64 = ParticleWorld<f64>;
pub type ParticleWorld32 = ParticleWorld<f32>;
pub type Simulation64 = Simulation<f64>;
pub type Simulation32 = Simulation<f32>;
