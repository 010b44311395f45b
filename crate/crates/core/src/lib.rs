//! Outage scheduling and production planning for fleets of refuelable
//! plants under demand scenarios.

pub mod evaluator;
pub mod io;
pub mod model;
pub mod modulation;
pub mod par;
pub mod pipeline;
pub mod planner;
pub mod satgen;
pub mod scheduler;
pub mod search;

pub use model::TOLERANCE;
pub use par::Exec;
