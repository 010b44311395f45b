//! Local search over outage start weeks.

pub mod anneal;
pub mod moves;
pub mod state;

pub use anneal::{
    anneal, anneal_chains, calibrate_temperature, sa_accept, AnnealOutcome, SaParams, SearchBudget,
};
pub use moves::{enumerate_moves, Move, MoveSampler};
pub use state::{Candidate, CostParts, SearchError, SearchState, Searcher};
