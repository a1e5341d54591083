//! Comparator schedulers: greedy HPFS, classic simulated annealing, and the
//! static-clustering and no-clustering variants of the adaptive annealer.

use serde::{Deserialize, Serialize};

use crate::annealer::{run_engine, AnnealError, AnnealParams, Cooling, EngineConfig, RunResult};
use crate::clustering::{try_cluster, ResourceWeights};
use crate::model::{
    orbit_usage, Opportunity, OppId, OrbitId, Scenario, Schedule, ScheduledItem, TaskId, TaskSpec,
};
use crate::neighborhoods::{orbit_feasible, richness, SearchContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VariantMode {
    /// Clusters formed and dissolved during the search.
    #[serde(rename = "DTC")]
    Dtc,
    /// Clusters frozen by a pre-pass, none formed during the search.
    #[serde(rename = "STC")]
    Stc,
    /// No clustering at all.
    #[serde(rename = "NONTC")]
    Nontc,
}

/// Highest priority first: tasks by descending weight, each placed as a
/// singleton on its richest opportunity that fits without evicting anything.
pub fn hpfs(scenario: &Scenario) -> Schedule {
    let ctx = SearchContext::new(scenario, false);
    let mut schedule = Schedule::for_scenario(scenario);
    for &task in ctx.priority() {
        let mut best: Option<(f64, Vec<ScheduledItem>, OrbitId)> = None;
        for &opp in scenario.opportunities_of_task(task) {
            let orbit_id = scenario.opportunity(opp).orbit;
            let orbit = scenario.orbit(orbit_id);
            let items = schedule.items(orbit_id);
            let rich = richness(&orbit_usage(items, orbit), orbit);
            if best.as_ref().is_some_and(|b| b.0 >= rich) {
                continue;
            }
            let single = ScheduledItem::single(scenario, opp);
            let mut trial = items.to_vec();
            let at = trial.partition_point(|x| x.window.start <= single.window.start);
            trial.insert(at, single);
            if orbit_feasible(&trial, orbit) {
                best = Some((rich, trial, orbit_id));
            }
        }
        if let Some((_, trial, orbit)) = best {
            *schedule.items_mut(orbit) = trial;
        }
    }
    schedule
}

/// A scenario whose tasks are frozen clusters and un-merged originals,
/// with the mapping back to the original opportunities.
#[derive(Debug, Clone)]
pub struct StaticClusters {
    pub scenario: Scenario,
    /// For every opportunity of the transformed scenario, the original
    /// opportunities it stands for.
    pub origin: Vec<Vec<OppId>>,
}

impl StaticClusters {
    pub fn n_clusters(&self) -> usize {
        self.origin.iter().filter(|o| o.len() > 1).count()
    }

    /// Rewrites a schedule of the transformed scenario in terms of the
    /// original opportunities.
    pub fn map_back(&self, schedule: &Schedule, original: &Scenario) -> Schedule {
        let mut out = Schedule::for_scenario(original);
        for (_, item) in schedule.iter() {
            let members: Vec<OppId> = item
                .members
                .iter()
                .flat_map(|m| self.origin[m.index()].iter().copied())
                .collect();
            let mapped = ScheduledItem::from_members(original, members)
                .expect("frozen clusters are valid in the original scenario");
            out.insert_sorted(mapped);
        }
        out
    }
}

/// Greedy static clustering: on each orbit, opportunities are scanned in
/// start order and chained into the open cluster while angle, duration and
/// worthiness tests (with floored resource weights) succeed.
///
/// A task that joins a cluster loses its other opportunities.
pub fn static_cluster_prepass(scenario: &Scenario) -> StaticClusters {
    let weights = ResourceWeights::floor();
    let mut clustered = vec![false; scenario.n_tasks()];
    let mut clusters: Vec<ScheduledItem> = Vec::new();
    for orbit in scenario.orbits() {
        let mut open: Option<ScheduledItem> = None;
        let mut close = |open: Option<ScheduledItem>, clustered: &mut Vec<bool>| {
            if let Some(item) = open.filter(ScheduledItem::is_cluster) {
                for t in item.member_task_ids(scenario) {
                    clustered[t.index()] = true;
                }
                clusters.push(item);
            }
        };
        for &opp in scenario.opportunities_on_orbit(orbit.id) {
            if clustered[scenario.opportunity(opp).task.index()] {
                continue;
            }
            let merged = open
                .as_ref()
                .and_then(|item| try_cluster(item, opp, scenario, &weights).ok());
            match merged {
                Some(m) => open = Some(m),
                None => {
                    close(open.take(), &mut clustered);
                    open = Some(ScheduledItem::single(scenario, opp));
                }
            }
        }
        close(open, &mut clustered);
    }

    let mut tasks = Vec::new();
    let mut opportunities = Vec::new();
    let mut origin = Vec::new();
    let mut task_map = vec![None; scenario.n_tasks()];
    for t in scenario.tasks() {
        if clustered[t.id.index()] {
            continue;
        }
        let id = TaskId::from_index(tasks.len());
        task_map[t.id.index()] = Some(id);
        tasks.push(TaskSpec { id, weight: t.weight });
    }
    for (k, o) in scenario.opportunities().iter().enumerate() {
        if let Some(task) = task_map[o.task.index()] {
            opportunities.push(Opportunity { task, ..*o });
            origin.push(vec![OppId::from_index(k)]);
        }
    }
    for c in clusters {
        let id = TaskId::from_index(tasks.len());
        tasks.push(TaskSpec {
            id,
            weight: c.weight as u32,
        });
        opportunities.push(Opportunity {
            task: id,
            orbit: c.orbit,
            window: c.window,
            angle_range: c.angle_range,
        });
        origin.push(c.members);
    }
    let transformed = Scenario::new(
        tasks,
        scenario.orbits().to_vec(),
        opportunities,
        scenario.horizon_seconds(),
        scenario.max_cluster_duration(),
    )
    .expect("pre-pass output satisfies the scenario invariants");
    StaticClusters {
        scenario: transformed,
        origin,
    }
}

/// Runs one of the three clustering variants of the adaptive annealer.
pub fn run_variant(
    scenario: &Scenario,
    mode: VariantMode,
    params: &AnnealParams,
) -> Result<RunResult, AnnealError> {
    match mode {
        VariantMode::Dtc => run_engine(scenario, &EngineConfig::asa(params.clone(), true), |_| {}),
        VariantMode::Nontc => run_engine(scenario, &EngineConfig::asa(params.clone(), false), |_| {}),
        VariantMode::Stc => {
            let pre = static_cluster_prepass(scenario);
            // The iteration budget follows the original task count.
            let mut p = params.clone();
            p.max_itr = Some(params.resolved_max_itr(scenario.n_tasks()));
            p.tabu_len = Some(params.resolved_tabu_len(scenario.n_tasks()));
            let res = run_engine(&pre.scenario, &EngineConfig::asa(p, false), |_| {})?;
            Ok(RunResult {
                best: pre.map_back(&res.best, scenario),
                trace: res.trace,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassicParams {
    pub lambda0: f64,
    pub gamma: f64,
    /// Iteration budget; `None` means `200 * N`.
    pub max_itr: Option<u64>,
    pub rng_seed: u64,
}

impl Default for ClassicParams {
    fn default() -> Self {
        Self {
            lambda0: 5.0,
            gamma: 0.999,
            max_itr: None,
            rng_seed: 0,
        }
    }
}

/// Plain simulated annealing: geometric cooling, fixed even structure
/// probabilities, no tabu list and no clustering.
pub fn classic_sa(scenario: &Scenario, params: &ClassicParams) -> Result<RunResult, AnnealError> {
    let cfg = EngineConfig {
        params: AnnealParams {
            max_itr: params.max_itr,
            rng_seed: params.rng_seed,
            initial_probs: [0.5, 0.5],
            ..AnnealParams::default()
        },
        cooling: Cooling::Geometric {
            lambda0: params.lambda0,
            gamma: params.gamma,
        },
        adaptive_probs: false,
        use_tabu: false,
        clustering: false,
    };
    run_engine(scenario, &cfg, |_| {})
}
