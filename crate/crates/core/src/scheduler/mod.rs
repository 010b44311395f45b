//! Outage scheduling by constraint search.

pub mod engine;
pub mod estimate;

pub use engine::{
    solve_schedule, solve_schedule_with, Budget, ScheduleResult, SchedulerConfig, SchedulerError,
};
pub use estimate::{estimate_fuel, surrogate_objective, FuelEstimate};
