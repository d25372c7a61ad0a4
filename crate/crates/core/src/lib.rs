//! Tangents and adjoints of implicit functions, with first-order estimates
//! of how primal solver errors propagate into them.

pub mod cli;
pub mod implicit;
pub mod nestdiff;
pub mod numkernel;
pub mod problems;
pub mod seeding;
pub mod solvers;
pub mod stability;
