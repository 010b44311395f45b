//! Simulated annealing with plateau cooling and reheating restarts.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::moves::enumerate_moves;
use super::state::{SearchState, Searcher};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaParams {
    /// Geometric factor applied to the temperature after each plateau.
    pub cooling_ratio: f64,
    /// Target acceptance ratio used to calibrate the start temperature.
    pub start_accept_ratio: f64,
    /// Consecutive rejections that end the run.
    pub stop_idle: usize,
    /// Moves per temperature level.
    pub n_plateau: usize,
    /// Reheat multiplier applied to the previous start temperature.
    pub k_restart: f64,
    /// Consecutive rejections that trigger a reheat.
    pub m_idle: usize,
    /// Outages move by less than this many weeks.
    pub move_radius: usize,
    /// Neighbors probed to calibrate the start temperature.
    pub calibration_probes: usize,
    pub seed: u64,
}

impl Default for SaParams {
    fn default() -> Self {
        SaParams {
            cooling_ratio: 0.995,
            start_accept_ratio: 0.5,
            stop_idle: 125,
            n_plateau: 100,
            k_restart: 2.0,
            m_idle: 50,
            move_radius: 20,
            calibration_probes: 1000,
            seed: 0,
        }
    }
}

impl SaParams {
    pub fn validate(&self) -> Result<(), String> {
        let checks = [
            (
                self.cooling_ratio > 0.0 && self.cooling_ratio < 1.0,
                "cooling ratio must lie in (0, 1)",
            ),
            (
                self.start_accept_ratio > 0.0 && self.start_accept_ratio < 1.0,
                "start acceptance ratio must lie in (0, 1)",
            ),
            (
                self.stop_idle >= 1 && self.n_plateau >= 1 && self.m_idle >= 1,
                "counts must be at least 1",
            ),
            (
                self.move_radius >= 1 && self.calibration_probes >= 1,
                "counts must be at least 1",
            ),
            (self.k_restart > 0.0, "restart multiplier must be positive"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(msg.to_string()),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SearchBudget {
    /// Attempted moves; deterministic.
    Moves(u64),
    Time(Duration),
}

/// Metropolis rule: always accept `delta <= 0`, else with `exp(-delta / tau)`.
pub fn sa_accept<R: Rng + ?Sized>(delta: f64, tau: f64, rng: &mut R) -> bool {
    debug_assert!(tau > 0.0);
    delta <= 0.0 || rng.gen::<f64>() < (-delta / tau).exp()
}

/// Temperature at which the mean acceptance probability over `deltas`
/// equals `ratio`. Non-positive deltas always count as accepted.
pub fn calibrate_temperature(deltas: &[f64], ratio: f64) -> Option<f64> {
    let positive: Vec<f64> = deltas.iter().copied().filter(|&d| d > 0.0).collect();
    let largest = positive.iter().copied().fold(0.0, f64::max);
    if positive.is_empty() {
        return None;
    }
    let free = (deltas.len() - positive.len()) as f64;
    let mean = |tau: f64| {
        (free + positive.iter().map(|d| (-d / tau).exp()).sum::<f64>()) / deltas.len() as f64
    };
    let smallest = positive.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = ((smallest * 1e-6).ln(), (largest * 1e6).ln());
    if mean(lo.exp()) >= ratio {
        return Some(lo.exp());
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid.exp()) < ratio {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi.exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealOutcome {
    pub best: SearchState,
    pub initial_cost: f64,
    /// Best cost after each improvement, starting with the initial cost.
    pub best_trace: Vec<f64>,
    pub moves: u64,
    pub accepted: u64,
    pub restarts: u64,
    pub start_temperature: f64,
    pub delta_time: Duration,
}

impl AnnealOutcome {
    pub fn best_cost(&self) -> f64 {
        self.best.cost()
    }
}

struct Clock {
    budget: SearchBudget,
    started: Instant,
    moves: u64,
}

impl Clock {
    fn done(&self) -> bool {
        match self.budget {
            SearchBudget::Moves(n) => self.moves >= n,
            SearchBudget::Time(d) => self.started.elapsed() >= d,
        }
    }
}

/// One annealing chain from `initial`. Returns the best state visited.
pub fn anneal(
    searcher: &Searcher,
    initial: SearchState,
    params: &SaParams,
    budget: SearchBudget,
) -> AnnealOutcome {
    let instance = searcher.instance;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let initial_cost = initial.cost();
    let mut out = AnnealOutcome {
        best: initial.clone(),
        initial_cost,
        best_trace: vec![initial_cost],
        moves: 0,
        accepted: 0,
        restarts: 0,
        start_temperature: 0.0,
        delta_time: Duration::ZERO,
    };
    let mut clock = Clock {
        budget,
        started: Instant::now(),
        moves: 0,
    };
    let mut current = initial;
    let mut sampler = enumerate_moves(instance, &current.schedule, params.move_radius);
    if clock.done() || sampler.is_empty() {
        return out;
    }

    let mut deltas = Vec::new();
    for _ in 0..params.calibration_probes {
        let mv = sampler.sample(&mut rng).expect("non-empty");
        if searcher.check_move_feasible(&current.schedule, mv) {
            let t0 = Instant::now();
            if let Some(c) = searcher.delta_evaluate(&current, mv) {
                deltas.push(c.delta());
            }
            out.delta_time += t0.elapsed();
        }
    }
    let floor = 1e-9 * initial_cost.abs().max(1.0);
    let mut start_tau = calibrate_temperature(&deltas, params.start_accept_ratio)
        .unwrap_or(floor)
        .max(floor);
    let mut tau = start_tau;
    out.start_temperature = start_tau;

    let (mut idle_stop, mut idle_restart, mut in_plateau) = (0usize, 0usize, 0usize);
    while !clock.done() {
        clock.moves += 1;
        let mv = sampler.sample(&mut rng).expect("non-empty");
        let mut accepted = false;
        if searcher.check_move_feasible(&current.schedule, mv) {
            let t0 = Instant::now();
            let cand = searcher.delta_evaluate(&current, mv);
            out.delta_time += t0.elapsed();
            if let Some(cand) = cand {
                if sa_accept(cand.delta(), tau, &mut rng) {
                    searcher.apply(&mut current, cand);
                    sampler = enumerate_moves(instance, &current.schedule, params.move_radius);
                    accepted = true;
                    out.accepted += 1;
                    if current.cost() < out.best.cost() {
                        out.best = current.clone();
                        out.best_trace.push(current.cost());
                    }
                }
            }
        }
        if accepted {
            idle_stop = 0;
            idle_restart = 0;
        } else {
            idle_stop += 1;
            idle_restart += 1;
        }
        if idle_stop >= params.stop_idle || sampler.is_empty() {
            break;
        }
        if idle_restart >= params.m_idle {
            start_tau *= params.k_restart;
            tau = start_tau;
            idle_restart = 0;
            in_plateau = 0;
            out.restarts += 1;
            continue;
        }
        in_plateau += 1;
        if in_plateau >= params.n_plateau {
            log::debug!(
                "moves {} tau {:.6e} current {:.6} best {:.6}",
                clock.moves,
                tau,
                current.cost(),
                out.best.cost()
            );
            tau *= params.cooling_ratio;
            in_plateau = 0;
        }
    }
    out.moves = clock.moves;
    out
}

/// Independent chains seeded `seed + chain`; the cheapest result wins, the
/// lower chain index on ties.
pub fn anneal_chains(
    searcher: &Searcher,
    initial: &SearchState,
    params: &SaParams,
    budget: SearchBudget,
    chains: usize,
) -> AnnealOutcome {
    let runs = searcher.exec.map_range(chains.max(1), |c| {
        let p = SaParams {
            seed: params.seed.wrapping_add(c as u64),
            ..params.clone()
        };
        anneal(searcher, initial.clone(), &p, budget)
    });
    runs.into_iter()
        .reduce(|best, run| {
            if run.best_cost() < best.best_cost() {
                run
            } else {
                best
            }
        })
        .expect("at least one chain")
}
