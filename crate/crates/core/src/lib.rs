//! Coined discrete-time quantum walks of many bosons or fermions on square
//! grid subgraphs.
//!
//! The sparse engine lives in [`evolve`]; [`oracle`] is a dense reference
//! implementation for small instances.

pub mod checkpoint;
pub mod coin;
pub mod evolve;
pub mod lattice;
pub mod observables;
pub mod oracle;
pub mod state;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointError, CheckpointHeader};
pub use coin::{coin_apply, coin_entry, CoinMatrix};
pub use evolve::{
    run, step, EvolveError, FermionRule, Reduction, RunError, RunPlan, Sink, StepOptions,
    StepReport,
};
pub use lattice::{Direction, Lattice, LatticeError};
pub use observables::{observe, ModeSet, ObservableSpec, TimeSeriesRecord};
pub use oracle::{DenseBasis, OracleError};
pub use state::{
    config_space_dimension, Amplitudes, Configuration, GmpState, StateError, Statistics,
};

pub use num_complex::Complex64;
