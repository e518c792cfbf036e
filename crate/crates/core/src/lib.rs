pub mod config;
pub mod energy;
pub mod error;
pub mod filters;
pub mod grid;
pub mod io;
pub mod processes;
pub mod sampler;
pub mod stats;

pub use config::{Family, ModelConfig, SpecConfig};
pub use energy::{EnergySpec, EnergyVector, Label, PairSet};
pub use error::{Error, Result};
pub use filters::{BandFilter, BankKind, FilterBank};
pub use grid::{ComplexField, Fourier, FreqFilter, PeriodicSignal, Shape};
pub use sampler::{DescentConfig, DescentTrace, StepSchedule, Synthesis, Tolerance};
