//! Instance and solution files, and the random instance generator.

pub mod format;
pub mod generate;

pub use format::{
    parse_instance, parse_solution, write_instance, write_report, write_solution, IoError, Report,
    SolutionFile,
};
pub use generate::{generate_instance, DemandProfile, GenerateError, Generated, GeneratorParams};
