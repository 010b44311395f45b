//! 1-in-3-SAT formulas encoded as outage scheduling instances.
//!
//! Week `2(v-1)` stands for `x_v` and week `2(v-1)+1` for its negation. Each
//! clause gets a plant with one outage that must sit on the week of one of
//! its literals. Each variable gets a plant whose single outage picks the
//! variable's value. Separations tie a clause outage on literal `l` to the
//! variable outage on `l`, and forbid two literals of one clause from being
//! true together. Offline-capacity limits of zero block the non-literal
//! weeks of a clause and literals that appear twice in a clause.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{
    CampaignLimits, CouplingConstraints, Cycle, Instance, OfflineCapacity, OutageId, PowerProfile,
    ScenarioSet, Schedule, Separation, TimeGrid, Type1Plant, Type2Plant,
};

/// A literal: `+v` for `x_v`, `-v` for its negation, `v >= 1`.
pub type Literal = i32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Formula {
    pub vars: usize,
    pub clauses: Vec<[Literal; 3]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("literal {0} references no variable in 1..={1}")]
    Literal(Literal, usize),
    #[error("outage of plant {0} is not scheduled on one of its weeks")]
    Decode(usize),
}

impl Formula {
    pub fn new(vars: usize, clauses: Vec<[Literal; 3]>) -> Result<Self, SatError> {
        for c in &clauses {
            for &l in c {
                if l == 0 || l.unsigned_abs() as usize > vars {
                    return Err(SatError::Literal(l, vars));
                }
            }
        }
        Ok(Formula { vars, clauses })
    }

    /// True when exactly one literal of every clause holds.
    pub fn satisfied_by(&self, assignment: &[bool]) -> bool {
        self.clauses
            .iter()
            .all(|c| c.iter().filter(|&&l| literal_value(l, assignment)).count() == 1)
    }

    /// Exhaustive search over all `2^n` assignments.
    pub fn brute_force(&self) -> Option<Vec<bool>> {
        assert!(self.vars < 32, "brute force limited to small formulas");
        (0u64..1 << self.vars)
            .map(|bits| {
                (0..self.vars)
                    .map(|v| bits >> v & 1 == 1)
                    .collect::<Vec<_>>()
            })
            .find(|a| self.satisfied_by(a))
    }
}

fn literal_value(l: Literal, assignment: &[bool]) -> bool {
    assignment[l.unsigned_abs() as usize - 1] == (l > 0)
}

/// Week standing for literal `l`.
pub fn literal_week(l: Literal) -> usize {
    2 * (l.unsigned_abs() as usize - 1) + usize::from(l < 0)
}

/// DIMACS-like text: `c` comment lines, an optional `p cnf n m` header,
/// clauses of exactly three literals, each terminated by `0`.
impl FromStr for Formula {
    type Err = SatError;

    fn from_str(text: &str) -> Result<Self, SatError> {
        let mut vars = 0usize;
        let mut clauses = Vec::new();
        let mut current: Vec<Literal> = Vec::new();
        let mut current_line = 0;
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('c') || trimmed.starts_with('%') {
                continue;
            }
            let err = |message: String| SatError::Parse {
                line: line_no,
                message,
            };
            if let Some(header) = trimmed.strip_prefix('p') {
                let fields: Vec<&str> = header.split_whitespace().collect();
                match fields.as_slice() {
                    ["cnf", n, _] => {
                        vars = vars.max(
                            n.parse()
                                .map_err(|_| err(format!("bad variable count {n}")))?,
                        )
                    }
                    _ => return Err(err("expected `p cnf <vars> <clauses>`".into())),
                }
                continue;
            }
            for tok in trimmed.split_whitespace() {
                let l: Literal = tok.parse().map_err(|_| err(format!("bad literal {tok}")))?;
                if current.is_empty() {
                    current_line = line_no;
                }
                if l == 0 {
                    let clause: [Literal; 3] =
                        current.as_slice().try_into().map_err(|_| SatError::Parse {
                            line: current_line,
                            message: format!("clause has {} literals, expected 3", current.len()),
                        })?;
                    clauses.push(clause);
                    current.clear();
                } else {
                    vars = vars.max(l.unsigned_abs() as usize);
                    current.push(l);
                }
            }
        }
        if !current.is_empty() {
            return Err(SatError::Parse {
                line: current_line,
                message: "unterminated clause".into(),
            });
        }
        Formula::new(vars, clauses)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "p cnf {} {}", self.vars, self.clauses.len())?;
        for c in &self.clauses {
            writeln!(f, "{} {} {} 0", c[0], c[1], c[2])?;
        }
        Ok(())
    }
}

fn limits() -> CampaignLimits {
    CampaignLimits {
        threshold: 0.0,
        max_modulation: 1e12,
        profile: PowerProfile::linear(0.0, 0.0),
    }
}

fn plant(weeks: usize, earliest: usize, latest: usize) -> Type2Plant {
    let fuel = weeks as f64;
    Type2Plant {
        pmax: vec![1.0; weeks],
        initial_fuel: fuel,
        final_fuel_price: 0.0,
        initial_campaign: limits(),
        cycles: vec![Cycle {
            duration: 1,
            earliest: Some(earliest),
            latest: Some(latest),
            min_refuel: 0.0,
            max_refuel: 0.0,
            keep_ratio: 0.9,
            reload_offset: 0.0,
            max_fuel_before: fuel,
            max_fuel_after: fuel,
            refuel_cost: 0.0,
            resource_windows: vec![],
            campaign: limits(),
        }],
    }
}

/// Plant index of the variable `v` (1-based) in an encoded instance.
pub fn variable_plant(formula: &Formula, v: usize) -> usize {
    formula.clauses.len() + v - 1
}

/// Upper bound on the number of coupling constraints of an encoding.
pub fn constraint_bound(clauses: usize) -> usize {
    (3 * clauses * clauses).max(8 * clauses)
}

pub fn encode_1in3sat(formula: &Formula) -> Instance {
    let weeks = 2 * formula.vars.max(1);
    let c = formula.clauses.len();
    let plants = c + formula.vars;
    let mut type2 = Vec::with_capacity(plants);
    let mut coupling = CouplingConstraints::default();
    for clause in &formula.clauses {
        let lit_weeks: Vec<usize> = clause.iter().map(|&l| literal_week(l)).collect();
        let lo = *lit_weeks.iter().min().expect("three literals");
        let hi = *lit_weeks.iter().max().expect("three literals");
        let j = type2.len();
        type2.push(plant(weeks, lo, hi));
        let blocked: Vec<usize> = (lo..=hi).filter(|w| !lit_weeks.contains(w)).collect();
        if !blocked.is_empty() {
            coupling.offline_capacity.push(OfflineCapacity {
                plants: vec![j],
                limit: 0.0,
                weeks: blocked,
            });
        }
    }
    for v in 1..=formula.vars {
        type2.push(plant(weeks, 2 * (v - 1), 2 * (v - 1) + 1));
    }
    let var_outage =
        |l: Literal| OutageId::new(variable_plant(formula, l.unsigned_abs() as usize), 0);
    for (j, clause) in formula.clauses.iter().enumerate() {
        // clause outage on l => the variable outage is on l as well
        for &l in clause {
            let first_week = 2 * (l.unsigned_abs() as usize - 1);
            let (min_after, min_before) = if l > 0 { (0, 2) } else { (2, 0) };
            coupling.separations.push(Separation {
                first: OutageId::new(j, 0),
                second: var_outage(l),
                min_after,
                min_before,
                window: (first_week, first_week + 1),
            });
        }
        let mut forced_false: Vec<Literal> = Vec::new();
        for a in 0..3 {
            for b in a + 1..3 {
                let (la, lb) = (clause[a], clause[b]);
                if la == lb {
                    if !forced_false.contains(&la) {
                        forced_false.push(la);
                    }
                    continue;
                }
                if la.abs() == lb.abs() {
                    continue;
                }
                let (la, lb) = if literal_week(la) < literal_week(lb) {
                    (la, lb)
                } else {
                    (lb, la)
                };
                let (wa, wb) = (literal_week(la), literal_week(lb));
                let delta = (wb - wa) as i64;
                coupling.separations.push(Separation {
                    first: var_outage(la),
                    second: var_outage(lb),
                    min_after: 1 - delta,
                    min_before: delta + 1,
                    window: (wa, wb),
                });
            }
        }
        for l in forced_false {
            coupling.offline_capacity.push(OfflineCapacity {
                plants: vec![var_outage(l).plant],
                limit: 0.0,
                weeks: vec![literal_week(l)],
            });
        }
    }
    assert!(
        coupling.len() <= constraint_bound(c),
        "encoding exceeds its size bound"
    );
    Instance {
        grid: TimeGrid::uniform(weeks, 1, 1.0).expect("at least one week"),
        type1: vec![Type1Plant {
            pmin: vec![vec![0.0]; weeks],
            pmax: vec![vec![plants as f64]; weeks],
            cost: vec![vec![1.0]; weeks],
        }],
        type2,
        scenarios: ScenarioSet {
            count: 1,
            demand: vec![vec![plants as f64]; weeks],
            epsilon: 0.0,
        },
        coupling,
    }
}

/// `x_v` is true iff its variable outage sits on week `2(v-1)`.
pub fn decode_assignment(formula: &Formula, schedule: &Schedule) -> Result<Vec<bool>, SatError> {
    (1..=formula.vars)
        .map(|v| {
            let p = variable_plant(formula, v);
            match schedule
                .starts
                .get(p)
                .and_then(|row| row.first().copied().flatten())
            {
                Some(w) if w == 2 * (v - 1) => Ok(true),
                Some(w) if w == 2 * (v - 1) + 1 => Ok(false),
                _ => Err(SatError::Decode(p)),
            }
        })
        .collect()
}
