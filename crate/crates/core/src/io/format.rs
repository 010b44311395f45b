//! JSON instance and solution files.
//!
//! Keys follow the model's field order and floats use the shortest
//! representation that parses back to the same value, so writing is
//! deterministic and `parse(write(x)) == x`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::Violation;
use crate::model::{Instance, ModelError, Production, Schedule};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("parse error at `{path}` (line {line}, column {column}): {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("non-finite or negative value at {0}")]
    BadNumber(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn from_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, IoError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        IoError::Parse {
            path,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })?;
    de.end().map_err(|e| IoError::Parse {
        path: ".".into(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Ok(value)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("model types serialize");
    out.push('\n');
    out
}

/// Parses and validates an instance file.
pub fn parse_instance(text: &str) -> Result<Instance, IoError> {
    let instance: Instance = from_json(text)?;
    instance.validate()?;
    Ok(instance)
}

pub fn write_instance(instance: &Instance) -> String {
    to_json(instance)
}

/// On-disk solution: start weeks with `-1` for unscheduled outages,
/// refuels, and per scenario the flexible plants' rows followed by the
/// type-2 rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub ha: Vec<Vec<i64>>,
    pub r: Vec<Vec<f64>>,
    /// `[s][plant][t]`, flexible plants first.
    pub production: Vec<Vec<Vec<f64>>>,
    pub objective: f64,
}

fn check_numbers<'a>(what: &str, values: impl IntoIterator<Item = &'a f64>) -> Result<(), IoError> {
    match values
        .into_iter()
        .position(|v| !(v.is_finite() && *v >= 0.0))
    {
        Some(n) => Err(IoError::BadNumber(format!("{what}[{n}]"))),
        None => Ok(()),
    }
}

pub fn write_solution(
    instance: &Instance,
    schedule: &Schedule,
    productions: &[Production],
    objective: f64,
) -> Result<String, IoError> {
    let structural = |m: &str| IoError::Model(ModelError::Structural(m.to_string()));
    let t = instance.steps();
    if schedule.starts.len() != instance.type2.len()
        || schedule
            .starts
            .iter()
            .zip(&instance.type2)
            .any(|(row, p)| row.len() != p.cycles.len())
        || schedule
            .refuels
            .iter()
            .map(Vec::len)
            .ne(instance.type2.iter().map(|p| p.cycles.len()))
    {
        return Err(structural("schedule dimensions do not match the instance"));
    }
    if productions.len() != instance.scenario_count() {
        return Err(structural("one production per scenario is required"));
    }
    for (s, p) in productions.iter().enumerate() {
        if p.type1.len() != instance.type1.len()
            || p.type2.len() != instance.type2.len()
            || p.type1.iter().chain(&p.type2).any(|row| row.len() != t)
        {
            return Err(structural(
                "production dimensions do not match the instance",
            ));
        }
        check_numbers(
            &format!("production[{s}]"),
            p.type1.iter().chain(&p.type2).flatten(),
        )?;
    }
    check_numbers("r", schedule.refuels.iter().flatten())?;
    if !objective.is_finite() {
        return Err(IoError::BadNumber("objective".into()));
    }
    let file = SolutionFile {
        ha: schedule
            .starts
            .iter()
            .map(|row| row.iter().map(|s| s.map_or(-1, |w| w as i64)).collect())
            .collect(),
        r: schedule.refuels.clone(),
        production: productions
            .iter()
            .map(|p| p.type1.iter().chain(&p.type2).cloned().collect())
            .collect(),
        objective,
    };
    Ok(to_json(&file))
}

/// Reads a solution written for `instance`; returns the schedule, the
/// per-scenario productions and the recorded objective.
pub fn parse_solution(
    instance: &Instance,
    text: &str,
) -> Result<(Schedule, Vec<Production>, f64), IoError> {
    let file: SolutionFile = from_json(text)?;
    let structural = |m: String| IoError::Model(ModelError::Structural(m));
    let (i_count, j_count, t) = (instance.type2.len(), instance.type1.len(), instance.steps());
    if file.ha.len() != i_count || file.r.len() != i_count {
        return Err(structural(format!(
            "expected {i_count} plant rows in `ha` and `r`"
        )));
    }
    let mut starts = Vec::with_capacity(i_count);
    for (i, (row, p)) in file.ha.iter().zip(&instance.type2).enumerate() {
        if row.len() != p.cycles.len() || file.r[i].len() != p.cycles.len() {
            return Err(structural(format!(
                "plant {i}: expected {} cycles",
                p.cycles.len()
            )));
        }
        let parsed = row
            .iter()
            .enumerate()
            .map(|(k, &w)| match w {
                -1 => Ok(None),
                w if w >= 0 => Ok(Some(w as usize)),
                _ => Err(structural(format!("ha[{i}][{k}] must be -1 or a week"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        starts.push(parsed);
    }
    check_numbers("r", file.r.iter().flatten())?;
    if file.production.len() != instance.scenario_count() {
        return Err(structural("one production per scenario is required".into()));
    }
    let mut productions = Vec::with_capacity(file.production.len());
    for (s, rows) in file.production.into_iter().enumerate() {
        if rows.len() != j_count + i_count || rows.iter().any(|r| r.len() != t) {
            return Err(structural(format!(
                "production[{s}] must be {} rows of {t} steps",
                j_count + i_count
            )));
        }
        check_numbers(&format!("production[{s}]"), rows.iter().flatten())?;
        let mut rows = rows;
        let type2 = rows.split_off(j_count);
        productions.push(Production { type1: rows, type2 });
    }
    Ok((
        Schedule {
            starts,
            refuels: file.r,
        },
        productions,
        file.objective,
    ))
}

/// Violation report for the `validate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub feasible: bool,
    pub objective: f64,
    pub violations: Vec<Violation>,
}

pub fn write_report(report: &Report) -> String {
    to_json(report)
}
