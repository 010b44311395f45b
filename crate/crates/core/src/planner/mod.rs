//! Scenario aggregation, type-1 cost curves and the greedy per-plant
//! production planner.

pub mod cost;
pub mod production;

pub use cost::{
    build_type1_cost, dispatch_type1, merit_order, min_demand_scenario, min_scenario_cap,
    type2_room, EquidistantPwl, ExactPwl, PwlCost,
};
pub use production::{
    increase_refuels, plan_plant, plan_production, simulate_plan, step_level, Failure, PlantPlan,
};
