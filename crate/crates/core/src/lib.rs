//! Chance-constrained parallel machine scheduling with sequence-dependent
//! setups, solved by a master/subproblem decomposition whose subproblems
//! are exact decision diagrams.

pub mod dd;
pub mod decomposition;
pub mod error;
pub mod generate;
pub mod master;
pub mod model;
pub mod netflow;
pub mod oracle;

pub use error::{Error, Result};
pub use model::{Candidate, Cut, CutKind, Instance, JobMask, Scenario};
