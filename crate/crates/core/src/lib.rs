//! Learning symbolic operators from demonstrations and planning with them.
//!
//! The pipeline: scripted demonstrations from a simulated environment are
//! abstracted into ground-atom transitions; a hill-climbing learner searches
//! for a small operator set that lets backward chaining explain as much of
//! every demonstration as possible; per-operator samplers are fit to the
//! demonstrated continuous parameters; and a search-then-sample planner uses
//! both to solve new, larger tasks.

pub mod consistency;
pub mod envs;
pub mod harness;
pub mod learner;
pub mod planner;
pub mod samplers;
pub mod symbolic;
