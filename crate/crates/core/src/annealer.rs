//! Adaptive simulated annealing with dynamic task clustering.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Scenario, Schedule};
use crate::neighborhoods::{
    insert_task, insertion_removal, migration, select_structure, update_probabilities,
    NeighborhoodStats, RepairError, SearchContext, Structure, TieBreak,
};
use crate::tabu::TabuList;

/// When the bad-move counter is incremented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CounterMode {
    /// Every worsening proposal increments the counter, accepted or not.
    #[default]
    EveryWorse,
    /// Only accepted worsening moves increment the counter.
    AcceptedWorse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealParams {
    pub lambda_min: f64,
    pub rho: f64,
    pub delta: f64,
    pub eta: f64,
    /// Probability-update period.
    pub itr: u64,
    pub initial_probs: [f64; 2],
    /// Tabu capacity; `None` means `max(1, N / 50)`.
    pub tabu_len: Option<usize>,
    /// Iteration budget; `None` means `200 * N`.
    pub max_itr: Option<u64>,
    pub rng_seed: u64,
    pub counter_mode: CounterMode,
    pub tie_break: TieBreak,
}

impl Default for AnnealParams {
    fn default() -> Self {
        Self {
            lambda_min: 0.5,
            rho: 1.0,
            delta: 10.0,
            eta: 0.8,
            itr: 10,
            initial_probs: [0.5, 0.5],
            tabu_len: None,
            max_itr: None,
            rng_seed: 0,
            counter_mode: CounterMode::EveryWorse,
            tie_break: TieBreak::LowestId,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AnnealError {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error(transparent)]
    Repair(#[from] RepairError),
}

fn invalid(name: &'static str, reason: impl Into<String>) -> AnnealError {
    AnnealError::InvalidParam {
        name,
        reason: reason.into(),
    }
}

impl AnnealParams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_max_itr(mut self, max_itr: u64) -> Self {
        self.max_itr = Some(max_itr);
        self
    }

    pub fn validate(&self) -> Result<(), AnnealError> {
        if !(self.lambda_min > 0.0 && self.lambda_min.is_finite()) {
            return Err(invalid("lambda_min", "must be positive"));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(invalid("rho", "must be positive"));
        }
        if !(self.delta >= 1.0 && self.delta.is_finite()) {
            return Err(invalid("delta", "must be at least 1"));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(invalid("eta", "must lie in (0, 1)"));
        }
        if self.itr == 0 {
            return Err(invalid("itr", "must be at least 1"));
        }
        if self.tabu_len == Some(0) {
            return Err(invalid("tabu_len", "must be at least 1"));
        }
        let [p1, p2] = self.initial_probs;
        if !(p1 >= 0.0 && p2 >= 0.0 && ((p1 + p2) - 1.0).abs() < 1e-9) {
            return Err(invalid("initial_probs", "must be non-negative and sum to 1"));
        }
        Ok(())
    }

    pub fn resolved_tabu_len(&self, n_tasks: usize) -> usize {
        self.tabu_len.unwrap_or((n_tasks / 50).max(1))
    }

    pub fn resolved_max_itr(&self, n_tasks: usize) -> u64 {
        self.max_itr.unwrap_or(200 * n_tasks as u64)
    }
}

/// `λ = λ_min + ρ·ln(1 + r/δ)`.
pub fn temperature(r: u64, params: &AnnealParams) -> f64 {
    params.lambda_min + params.rho * (r as f64 / params.delta).ln_1p()
}

/// Bad-move counter after a proposal with profit change `delta_f`.
pub fn update_counter(r: u64, delta_f: i64, accepted: bool, mode: CounterMode) -> u64 {
    match delta_f {
        d if d > 0 => 0,
        0 => r,
        _ => match mode {
            CounterMode::EveryWorse => r + 1,
            CounterMode::AcceptedWorse if accepted => r + 1,
            CounterMode::AcceptedWorse => r,
        },
    }
}

/// Metropolis rule for maximization. Improvements are accepted without
/// consuming a random draw.
pub fn accept<R: Rng>(delta_f: f64, lambda: f64, rng: &mut R) -> bool {
    if delta_f > 0.0 {
        return true;
    }
    let xi: f64 = rng.random();
    (delta_f / lambda).exp() > xi
}

/// Greedy start: tasks by descending weight, each inserted with the
/// insertion procedure and kept only if the profit rises.
pub fn initial_solution<R: Rng>(ctx: &SearchContext, rng: &mut R) -> Result<Schedule, RepairError> {
    let scenario = ctx.scenario();
    let mut current = Schedule::for_scenario(scenario);
    for &task in ctx.priority() {
        if !ctx.insertable(task) {
            continue;
        }
        let mut candidate = current.clone();
        let opps = scenario.opportunities_of_task(task);
        if insert_task(&mut candidate, ctx, opps, rng)?.is_some() && candidate.profit() > current.profit() {
            current = candidate;
        }
    }
    Ok(current)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub g: u64,
    pub lambda: f64,
    pub profit_current: u64,
    pub profit_best: u64,
    pub structure: Structure,
    /// False when the chosen structure had no move to offer.
    pub produced_move: bool,
    pub accepted: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub initial_profit: u64,
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "g,lambda,profit_current,profit_best,structure,accepted")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{:.6},{},{},{},{}",
                r.g,
                r.lambda,
                r.profit_current,
                r.profit_best,
                r.structure.label(),
                u8::from(r.accepted)
            )?;
        }
        Ok(())
    }

    pub fn best_profit(&self) -> u64 {
        self.records.last().map_or(self.initial_profit, |r| r.profit_best)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub best: Schedule,
    pub trace: RunTrace,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cooling {
    /// Temperature driven by the bad-move counter.
    Adaptive,
    /// `λ_g = λ_0·γ^g`.
    Geometric { lambda0: f64, gamma: f64 },
}

/// Knobs shared by the adaptive annealer and its ablations.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub params: AnnealParams,
    pub cooling: Cooling,
    pub adaptive_probs: bool,
    pub use_tabu: bool,
    pub clustering: bool,
}

impl EngineConfig {
    pub fn asa(params: AnnealParams, clustering: bool) -> Self {
        Self {
            params,
            cooling: Cooling::Adaptive,
            adaptive_probs: true,
            use_tabu: true,
            clustering,
        }
    }
}

/// Runs the annealer with dynamic clustering.
pub fn run(scenario: &Scenario, params: &AnnealParams) -> Result<RunResult, AnnealError> {
    run_engine(scenario, &EngineConfig::asa(params.clone(), true), |_| {})
}

/// Like [`run`], calling `observer` on the initial and every accepted schedule.
pub fn run_observed<F: FnMut(&Schedule)>(
    scenario: &Scenario,
    params: &AnnealParams,
    observer: F,
) -> Result<RunResult, AnnealError> {
    run_engine(scenario, &EngineConfig::asa(params.clone(), true), observer)
}

pub fn run_engine<F: FnMut(&Schedule)>(
    scenario: &Scenario,
    cfg: &EngineConfig,
    mut observer: F,
) -> Result<RunResult, AnnealError> {
    let params = &cfg.params;
    params.validate()?;
    if let Cooling::Geometric { lambda0, gamma } = cfg.cooling {
        if !(lambda0 > 0.0 && lambda0.is_finite()) {
            return Err(invalid("lambda0", "must be positive"));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(invalid("gamma", "must lie in (0, 1]"));
        }
    }
    let n = scenario.n_tasks();
    let max_itr = params.resolved_max_itr(n);
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let ctx = SearchContext::new(scenario, cfg.clustering).with_tie_break(params.tie_break);
    let mut tabu = if cfg.use_tabu {
        TabuList::new(params.resolved_tabu_len(n), n)
    } else {
        TabuList::disabled(n)
    };
    let mut stats = NeighborhoodStats::new(params.initial_probs);

    let mut current = initial_solution(&ctx, &mut rng)?;
    observer(&current);
    let mut best = current.clone();
    let mut trace = RunTrace {
        initial_profit: current.profit(),
        records: Vec::with_capacity(max_itr.min(1 << 22) as usize),
    };
    let mut r = 0u64;
    let mut lambda_geo = match cfg.cooling {
        Cooling::Geometric { lambda0, .. } => lambda0,
        Cooling::Adaptive => 0.0,
    };

    for g in 1..=max_itr {
        let lambda = match cfg.cooling {
            Cooling::Adaptive => temperature(r, params),
            Cooling::Geometric { gamma, .. } => {
                let l = lambda_geo;
                lambda_geo *= gamma;
                l
            }
        };
        let structure = select_structure(&stats, &mut rng);
        let i = structure.index();
        stats.sel[i] += 1;
        let proposal = match structure {
            Structure::InsertRemove => insertion_removal(&current, &ctx, &tabu, &mut rng)?,
            Structure::Migrate => migration(&current, &ctx, &tabu, &mut rng)?,
        };
        let produced_move = proposal.is_some();
        let mut accepted = false;
        if let Some(mv) = proposal {
            let delta = mv.candidate.profit() as i64 - current.profit() as i64;
            accepted = accept(delta as f64, lambda, &mut rng);
            r = update_counter(r, delta, accepted, params.counter_mode);
            if accepted {
                if delta > 0 {
                    stats.suc[i] += 1;
                }
                current = mv.candidate;
                tabu.release_oldest_if_full();
                for t in mv.removed_task_ids {
                    tabu.push(t);
                }
                observer(&current);
                if current.profit() > best.profit() {
                    best = current.clone();
                }
            }
        }
        if cfg.adaptive_probs && g % params.itr == 0 {
            update_probabilities(&mut stats, params.eta);
        }
        trace.records.push(TraceRecord {
            g,
            lambda,
            profit_current: current.profit(),
            profit_best: best.profit(),
            structure,
            produced_move,
            accepted,
        });
    }
    Ok(RunResult { best, trace })
}
