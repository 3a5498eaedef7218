//! Equilibrium zeitgeist engine.
//!
//! Finite symmetric stage games with several situations, two coexisting
//! subjective models, KL-based belief selection, equilibrium enumeration,
//! evolutionary stability checks and an agent-based learning simulator.

pub mod catalog;
pub mod config;
pub mod error;
pub mod ez;
pub mod game;
pub mod inference;
pub mod learning;
pub mod lp;
pub mod model;
pub mod report;
pub mod stability;
pub mod tol;

pub use error::{Error, Result};
pub use ez::{EzCertificate, Quad, SituationPlay, Zeitgeist};
pub use game::{FitnessWeights, Kernel, MonitoringStructure, Row, StageEnv};
pub use inference::{DataContext, ExtendedReal, Group};
pub use model::{Model, Parameter};
pub use stability::{Classification, SeparationResult, StabilityVerdict};
