//! Esscher coupling of explosive continuous-state branching processes.
//!
//! Modules follow the pipeline: mechanisms and their flows give the analytic
//! laws; `pathsim` and `lamperti` build coupled sample paths; `speed`
//! classifies passage-level sequences; `harness` runs the experiments.

pub mod error;
pub mod flow;
pub mod harness;
pub mod lamperti;
pub mod mechanism;
pub mod pathsim;
pub mod policy;
pub mod quad;
pub mod rng;
pub mod roots;
pub mod sequence;
pub mod serde_ext;
pub mod speed;

pub use error::{Error, Result};
pub use mechanism::{BranchingMechanism, EsscherLadder, LadderSpec, LevyMeasure, MechanismSpec};
pub use policy::NumericPolicy;
