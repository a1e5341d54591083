//! The two neighborhood structures, schedule repair, and the adaptive
//! selection between structures.
//!
//! Both structures are constructive: they insert (or relocate) one task
//! through either a clustering insertion or an isolated insertion, then
//! repair the touched orbits by evicting conflicting tasks until every
//! constraint holds again. Candidates therefore always pass
//! [`validate`](crate::model::validate).

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{try_cluster, ResourceWeights};
use crate::model::{
    gap_ok, orbit_usage, setup_gap_ok, OppId, Orbit, OrbitId, Scenario, Schedule, ScheduledItem,
    TaskId, Usage,
};
use crate::tabu::TabuList;

/// Added to the resource share in eviction scores so zero-cost items do not
/// divide by zero.
const SCORE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Structure {
    /// Insertion and removal.
    InsertRemove,
    /// Task migration.
    Migrate,
}

impl Structure {
    pub const ALL: [Structure; 2] = [Structure::InsertRemove, Structure::Migrate];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Self::InsertRemove => 0,
            Self::Migrate => 1,
        }
    }

    /// 1-based label used in traces.
    pub fn label(self) -> u8 {
        self.index() as u8 + 1
    }
}

/// How ties between equally ranked candidate tasks and opportunities are broken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Lowest task id / opportunity id wins.
    #[default]
    LowestId,
    /// Uniform choice among the tied candidates, drawn from the run's RNG.
    Random,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RepairError {
    #[error("protected opening on orbit {0} is infeasible on its own")]
    ProtectedInfeasible(OrbitId),
    #[error("protected opportunity {0} is not scheduled on orbit {1}")]
    MissingProtected(OppId, OrbitId),
}

/// A neighboring schedule together with the tasks it evicted.
#[derive(Debug, Clone, PartialEq)]
pub struct Move {
    pub kind: Structure,
    pub candidate: Schedule,
    pub removed_task_ids: Vec<TaskId>,
}

/// Read-only search configuration shared by every move of a run.
#[derive(Debug, Clone)]
pub struct SearchContext<'a> {
    scenario: &'a Scenario,
    clustering: bool,
    tie_break: TieBreak,
    priority: Vec<TaskId>,
    alone_ok: Vec<bool>,
    max_opp_len: i64,
    /// Per orbit, an upper bound on any setup gap between two opportunities.
    reach: Vec<i64>,
}

impl<'a> SearchContext<'a> {
    pub fn new(scenario: &'a Scenario, clustering: bool) -> Self {
        let mut priority: Vec<TaskId> = scenario.tasks().iter().map(|t| t.id).collect();
        priority.sort_by_key(|&t| (std::cmp::Reverse(scenario.weight_of(t)), t));
        let alone_ok = (0..scenario.opportunities().len())
            .map(|k| {
                let item = ScheduledItem::single(scenario, OppId::from_index(k));
                let orbit = scenario.orbit(item.orbit);
                orbit_usage(std::slice::from_ref(&item), orbit).within(orbit)
            })
            .collect();
        let opps = scenario.opportunities();
        let max_opp_len = opps.iter().map(|o| o.window.len()).max().unwrap_or(0);
        let max_abs = opps
            .iter()
            .map(|o| o.angle_range.lo.abs().max(o.angle_range.hi.abs()))
            .fold(0.0, f64::max);
        let reach = scenario
            .orbits()
            .iter()
            .map(|o| (o.setup_time + 2.0 * max_abs / o.slew_velocity).ceil() as i64 + 1)
            .collect();
        Self {
            scenario,
            clustering,
            tie_break: TieBreak::LowestId,
            priority,
            alone_ok,
            max_opp_len,
            reach,
        }
    }

    pub fn with_tie_break(mut self, tie_break: TieBreak) -> Self {
        self.tie_break = tie_break;
        self
    }

    pub fn scenario(&self) -> &'a Scenario {
        self.scenario
    }

    pub fn clustering(&self) -> bool {
        self.clustering
    }

    pub fn tie_break(&self) -> TieBreak {
        self.tie_break
    }

    /// Tasks by descending weight, ties by ascending id.
    pub fn priority(&self) -> &[TaskId] {
        &self.priority
    }

    /// Whether the task has an opportunity that can be observed on an
    /// otherwise empty orbit.
    pub fn insertable(&self, task: TaskId) -> bool {
        self.scenario
            .opportunities_of_task(task)
            .iter()
            .any(|o| self.alone_ok[o.index()])
    }

    fn pick_unscheduled<R: Rng>(
        &self,
        placement: &Placement,
        tabu: &TabuList,
        rng: &mut R,
    ) -> Option<TaskId> {
        let mut eligible = self
            .priority
            .iter()
            .copied()
            .filter(|&t| !placement.is_scheduled(t) && !tabu.contains(t) && self.insertable(t));
        let first = eligible.next()?;
        if self.tie_break == TieBreak::LowestId {
            return Some(first);
        }
        let w = self.scenario.weight_of(first);
        let mut tied = vec![first];
        tied.extend(eligible.take_while(|&t| self.scenario.weight_of(t) == w));
        Some(tied[rng.random_range(0..tied.len())])
    }
}

/// Where each task currently sits: `(orbit, item position)`.
#[derive(Debug, Clone)]
pub struct Placement {
    slots: Vec<Option<(OrbitId, usize)>>,
}

impl Placement {
    pub fn of(schedule: &Schedule, scenario: &Scenario) -> Self {
        let mut slots = vec![None; scenario.n_tasks()];
        for (j, items) in schedule.orbit_lists().iter().enumerate() {
            for (pos, item) in items.iter().enumerate() {
                for t in item.member_task_ids(scenario) {
                    slots[t.index()] = Some((OrbitId::from_index(j), pos));
                }
            }
        }
        Self { slots }
    }

    #[inline]
    pub fn is_scheduled(&self, task: TaskId) -> bool {
        self.slots[task.index()].is_some()
    }

    #[inline]
    pub fn slot(&self, task: TaskId) -> Option<(OrbitId, usize)> {
        self.slots[task.index()]
    }
}

/// Free-resource measure `(E - ConE)/E + (W - ConW)/W` of an orbit.
pub(crate) fn richness(usage: &Usage, orbit: &Orbit) -> f64 {
    let free = |used: f64, cap: f64| if cap > 0.0 { (cap - used) / cap } else { 0.0 };
    free(usage.energy, orbit.energy_capacity) + free(usage.memory, orbit.memory_capacity)
}

/// Index of the best candidate under `better` (Less = preferred). Ties keep
/// the earliest candidate, or are drawn uniformly under [`TieBreak::Random`].
fn pick_index<T, R: Rng>(
    cands: &[T],
    cmp: impl Fn(&T, &T) -> Ordering,
    tie_break: TieBreak,
    rng: &mut R,
) -> Option<usize> {
    let mut best = 0;
    for i in 1..cands.len() {
        if cmp(&cands[i], &cands[best]) == Ordering::Less {
            best = i;
        }
    }
    if cands.is_empty() {
        return None;
    }
    if tie_break == TieBreak::Random {
        let tied: Vec<usize> = (0..cands.len())
            .filter(|&i| cmp(&cands[i], &cands[best]) == Ordering::Equal)
            .collect();
        if tied.len() > 1 {
            return Some(tied[rng.random_range(0..tied.len())]);
        }
    }
    Some(best)
}

fn orbit_weights(schedule: &Schedule, scenario: &Scenario, orbit: OrbitId) -> ResourceWeights {
    let o = scenario.orbit(orbit);
    ResourceWeights::from_usage(&orbit_usage(schedule.items(orbit), o), o)
}

enum InsertKind {
    Cluster { pos: usize, merged: ScheduledItem },
    Isolated,
}

struct Insertion {
    opp: OppId,
    kind: InsertKind,
}

/// Chooses how to insert a task among the allowed opportunities: clustering
/// insertion when possible, otherwise isolated insertion, each on the orbit
/// with the most free resources.
fn plan_insertion<R: Rng>(
    schedule: &Schedule,
    ctx: &SearchContext,
    opps: &[OppId],
    rng: &mut R,
) -> Option<Insertion> {
    let scenario = ctx.scenario;
    let usable: Vec<OppId> = opps
        .iter()
        .copied()
        .filter(|o| ctx.alone_ok[o.index()])
        .collect();
    if usable.is_empty() {
        return None;
    }
    let rich = |opp: OppId| {
        let orbit = scenario.orbit(scenario.opportunity(opp).orbit);
        richness(&orbit_usage(schedule.items(orbit.id), orbit), orbit)
    };

    if ctx.clustering {
        // (opp, richness, partner position, merged item)
        let mut clustering: Vec<(OppId, f64, usize, ScheduledItem)> = Vec::new();
        for &opp in &usable {
            let orbit_id = scenario.opportunity(opp).orbit;
            let orbit = scenario.orbit(orbit_id);
            let items = schedule.items(orbit_id);
            if items.is_empty() {
                continue;
            }
            let usage = orbit_usage(items, orbit);
            let weights = ResourceWeights::from_usage(&usage, orbit);
            let partners: Vec<(usize, ScheduledItem)> = items
                .iter()
                .enumerate()
                .filter_map(|(pos, item)| {
                    let merged = try_cluster(item, opp, scenario, &weights).ok()?;
                    orbit_usage(std::slice::from_ref(&merged), orbit)
                        .within(orbit)
                        .then_some((pos, merged))
                })
                .collect();
            let best = pick_index(
                &partners,
                |a, b| {
                    (a.1.window.len(), items[a.0].weight, a.0)
                        .cmp(&(b.1.window.len(), items[b.0].weight, b.0))
                },
                TieBreak::LowestId,
                rng,
            );
            if let Some(b) = best {
                let (pos, merged) = partners.into_iter().nth(b).expect("index in range");
                clustering.push((opp, richness(&usage, orbit), pos, merged));
            }
        }
        let chosen = pick_index(
            &clustering,
            |a, b| b.1.total_cmp(&a.1),
            ctx.tie_break,
            rng,
        );
        if let Some(c) = chosen {
            let (opp, _, pos, merged) = clustering.swap_remove(c);
            return Some(Insertion {
                opp,
                kind: InsertKind::Cluster { pos, merged },
            });
        }
    }

    let scored: Vec<(OppId, f64)> = usable.iter().map(|&o| (o, rich(o))).collect();
    let chosen = pick_index(&scored, |a, b| b.1.total_cmp(&a.1), ctx.tie_break, rng)?;
    Some(Insertion {
        opp: scored[chosen].0,
        kind: InsertKind::Isolated,
    })
}

fn apply_insertion(
    schedule: &mut Schedule,
    ctx: &SearchContext,
    insertion: Insertion,
) -> Result<Vec<TaskId>, RepairError> {
    let scenario = ctx.scenario;
    let orbit = scenario.opportunity(insertion.opp).orbit;
    let weights = orbit_weights(schedule, scenario, orbit);
    match insertion.kind {
        InsertKind::Cluster { pos, merged } => {
            schedule.items_mut(orbit).remove(pos);
            schedule.insert_sorted(merged);
        }
        InsertKind::Isolated => {
            schedule.insert_sorted(ScheduledItem::single(scenario, insertion.opp));
        }
    }
    repair(schedule, orbit, Some(insertion.opp), scenario, &weights)
}

/// Inserts `task` through one of `opps` by clustering or isolated insertion,
/// then repairs the destination orbit.
///
/// Returns the evicted tasks, or `None` when no allowed opportunity is usable.
pub fn insert_task<R: Rng>(
    schedule: &mut Schedule,
    ctx: &SearchContext,
    opps: &[OppId],
    rng: &mut R,
) -> Result<Option<Vec<TaskId>>, RepairError> {
    match plan_insertion(schedule, ctx, opps, rng) {
        Some(ins) => apply_insertion(schedule, ctx, ins).map(Some),
        None => Ok(None),
    }
}

/// Insertion and removal: inserts the heaviest unscheduled, non-tabu task and
/// evicts whatever conflicts with it.
pub fn insertion_removal<R: Rng>(
    schedule: &Schedule,
    ctx: &SearchContext,
    tabu: &TabuList,
    rng: &mut R,
) -> Result<Option<Move>, RepairError> {
    let placement = Placement::of(schedule, ctx.scenario);
    let Some(task) = ctx.pick_unscheduled(&placement, tabu, rng) else {
        return Ok(None);
    };
    let mut candidate = schedule.clone();
    let opps = ctx.scenario.opportunities_of_task(task);
    Ok(insert_task(&mut candidate, ctx, opps, rng)?.map(|removed| Move {
        kind: Structure::InsertRemove,
        candidate,
        removed_task_ids: removed,
    }))
}

#[inline]
fn conflicts(a: &ScheduledItem, b_window: crate::model::TimeWindow, b_angle: f64, orbit: &Orbit) -> bool {
    if a.window.start <= b_window.start {
        !gap_ok(a.window, a.exec_angle, b_window, b_angle, orbit)
    } else {
        !gap_ok(b_window, b_angle, a.window, a.exec_angle, orbit)
    }
}

/// Unscheduled tasks with an opportunity on `item`'s orbit that cannot sit
/// next to `item` because of the setup gap, as `(task, opportunity)` pairs.
fn setup_conflictors(
    item: &ScheduledItem,
    ctx: &SearchContext,
    placement: &Placement,
) -> Vec<(TaskId, OppId)> {
    let scenario = ctx.scenario;
    let orbit = scenario.orbit(item.orbit);
    let reach = ctx.reach[item.orbit.index()];
    let on_orbit = scenario.opportunities_on_orbit(item.orbit);
    let lo = item.window.start - reach - ctx.max_opp_len;
    let hi = item.window.end + reach;
    let first = on_orbit.partition_point(|&o| scenario.opportunity(o).window.start < lo);
    let mut out: Vec<(TaskId, OppId)> = Vec::new();
    for &opp in &on_orbit[first..] {
        let o = scenario.opportunity(opp);
        if o.window.start > hi {
            break;
        }
        if placement.is_scheduled(o.task) || out.iter().any(|&(t, _)| t == o.task) {
            continue;
        }
        if conflicts(item, o.window, o.angle_range.midpoint(), orbit) {
            out.push((o.task, opp));
        }
    }
    out
}

/// Whether the whole orbit satisfies the setup-gap and capacity constraints.
pub(crate) fn orbit_feasible(items: &[ScheduledItem], orbit: &Orbit) -> bool {
    items.windows(2).all(|p| setup_gap_ok(&p[0], &p[1], orbit))
        && orbit_usage(items, orbit).within(orbit)
}

/// Inserts `opp` without evicting anything, clustering when worthwhile.
/// Leaves the schedule untouched and returns `false` if no feasible placement exists.
fn insert_without_eviction(schedule: &mut Schedule, ctx: &SearchContext, opp: OppId) -> bool {
    let scenario = ctx.scenario;
    let orbit_id = scenario.opportunity(opp).orbit;
    let orbit = scenario.orbit(orbit_id);
    let items = schedule.items(orbit_id);
    if ctx.clustering && !items.is_empty() {
        let weights = ResourceWeights::from_usage(&orbit_usage(items, orbit), orbit);
        let mut best: Option<(i64, u64, usize, Vec<ScheduledItem>)> = None;
        for (pos, item) in items.iter().enumerate() {
            let Ok(merged) = try_cluster(item, opp, scenario, &weights) else {
                continue;
            };
            let key = (merged.window.len(), item.weight, pos);
            if best.as_ref().is_some_and(|b| (b.0, b.1, b.2) <= key) {
                continue;
            }
            let mut trial = items.to_vec();
            trial.remove(pos);
            let at = trial.partition_point(|x| x.window.start <= merged.window.start);
            trial.insert(at, merged);
            if orbit_feasible(&trial, orbit) {
                best = Some((key.0, key.1, key.2, trial));
            }
        }
        if let Some((_, _, _, trial)) = best {
            *schedule.items_mut(orbit_id) = trial;
            return true;
        }
    }
    let single = ScheduledItem::single(scenario, opp);
    let mut trial = items.to_vec();
    let at = trial.partition_point(|x| x.window.start <= single.window.start);
    trial.insert(at, single);
    if orbit_feasible(&trial, orbit) {
        *schedule.items_mut(orbit_id) = trial;
        true
    } else {
        false
    }
}

/// Removes one member task from the item at `pos`, rebuilding the remaining
/// cluster (or dropping the item if it becomes empty).
fn remove_member(schedule: &mut Schedule, scenario: &Scenario, orbit: OrbitId, pos: usize, opp: OppId) {
    let item = schedule.items_mut(orbit).remove(pos);
    let rest: Vec<OppId> = item.members.into_iter().filter(|&m| m != opp).collect();
    if !rest.is_empty() {
        let rebuilt = ScheduledItem::from_members(scenario, rest)
            .expect("a subset of a valid cluster is a valid cluster");
        schedule.insert_sorted(rebuilt);
    }
}

/// Task migration: relocates the scheduled task with the most setup-time
/// conflicting unscheduled tasks to another of its opportunities, then
/// back-fills its old orbit with those conflictors by descending weight.
pub fn migration<R: Rng>(
    schedule: &Schedule,
    ctx: &SearchContext,
    tabu: &TabuList,
    rng: &mut R,
) -> Result<Option<Move>, RepairError> {
    let scenario = ctx.scenario;
    let placement = Placement::of(schedule, scenario);

    // (conflict count, task, orbit, position, current opportunity)
    let mut candidates: Vec<(usize, TaskId, OrbitId, usize, OppId)> = Vec::new();
    for (orbit, items) in schedule.orbit_lists().iter().enumerate() {
        let orbit = OrbitId::from_index(orbit);
        for (pos, item) in items.iter().enumerate() {
            let movable: Vec<(TaskId, OppId)> = item
                .members
                .iter()
                .map(|&m| (scenario.opportunity(m).task, m))
                .filter(|&(t, m)| {
                    scenario
                        .opportunities_of_task(t)
                        .iter()
                        .any(|&o| o != m && ctx.alone_ok[o.index()])
                })
                .collect();
            if movable.is_empty() {
                continue;
            }
            let count = setup_conflictors(item, ctx, &placement).len();
            candidates.extend(movable.into_iter().map(|(t, m)| (count, t, orbit, pos, m)));
        }
    }
    let cmp = |a: &(usize, TaskId, OrbitId, usize, OppId), b: &(usize, TaskId, OrbitId, usize, OppId)| {
        b.0.cmp(&a.0).then(a.1.cmp(&b.1))
    };
    let chosen = match ctx.tie_break {
        TieBreak::LowestId => candidates.iter().min_by(|a, b| cmp(a, b)).copied(),
        TieBreak::Random => pick_index(&candidates, cmp, TieBreak::Random, rng).map(|i| candidates[i]),
    };
    let Some((_, task, source, pos, current)) = chosen else {
        return Ok(None);
    };

    let conflictors = setup_conflictors(&schedule.items(source)[pos], ctx, &placement);
    let source_weights = orbit_weights(schedule, scenario, source);
    let mut candidate = schedule.clone();
    remove_member(&mut candidate, scenario, source, pos, current);
    let mut removed = repair(&mut candidate, source, None, scenario, &source_weights)?;

    let alternatives: Vec<OppId> = scenario
        .opportunities_of_task(task)
        .iter()
        .copied()
        .filter(|&o| o != current)
        .collect();
    match insert_task(&mut candidate, ctx, &alternatives, rng)? {
        Some(evicted) => removed.extend(evicted),
        None => return Ok(None),
    }

    let mut backfill: Vec<(TaskId, OppId)> = conflictors
        .into_iter()
        .filter(|&(t, _)| !tabu.contains(t))
        .collect();
    backfill.sort_by_key(|&(t, _)| (std::cmp::Reverse(scenario.weight_of(t)), t));
    for (_, opp) in backfill {
        if !insert_without_eviction(&mut candidate, ctx, opp) {
            break;
        }
    }
    Ok(Some(Move {
        kind: Structure::Migrate,
        candidate,
        removed_task_ids: removed,
    }))
}

fn position_of(items: &[ScheduledItem], opp: OppId) -> Option<usize> {
    items.iter().position(|it| it.members.contains(&opp))
}

/// Usage of `items` with the item at `idx` replaced (or removed when `None`).
fn usage_with(items: &[ScheduledItem], idx: usize, replacement: Option<&ScheduledItem>, orbit: &Orbit) -> Usage {
    let mut observed = 0i64;
    let mut slew = 0.0;
    let mut prev: Option<f64> = None;
    let mut openings = 0;
    for (i, it) in items.iter().enumerate() {
        let it = if i == idx {
            match replacement {
                Some(r) => r,
                None => continue,
            }
        } else {
            it
        };
        observed += it.window.len();
        if let Some(p) = prev {
            slew += orbit.slew_seconds(p, it.exec_angle);
        }
        prev = Some(it.exec_angle);
        openings += 1;
    }
    Usage {
        energy: orbit.obs_energy_rate * observed as f64 + orbit.slew_energy_rate * slew,
        memory: orbit.memory_rate * observed as f64,
        openings,
    }
}

fn eviction_score(weight: u64, before: &Usage, after: &Usage, orbit: &Orbit, w: &ResourceWeights) -> f64 {
    let share = |saved: f64, cap: f64| if cap > 0.0 { saved.max(0.0) / cap } else { 0.0 };
    let energy = share(before.energy - after.energy, orbit.energy_capacity);
    let memory = share(before.memory - after.memory, orbit.memory_capacity);
    weight as f64 / (w.alpha * energy + w.beta * memory + SCORE_EPSILON)
}

/// Member of a cluster on the side facing a later (`toward_later`) or earlier neighbor.
fn facing_member(item: &ScheduledItem, scenario: &Scenario, toward_later: bool) -> OppId {
    if toward_later {
        *item
            .members
            .iter()
            .rev()
            .max_by_key(|&&m| scenario.opportunity(m).window.end)
            .expect("non-empty item")
    } else {
        item.members[0]
    }
}

/// Evicts the item at `idx`, or only its end-point component facing the
/// conflict when it is a cluster.
fn evict_facing(
    schedule: &mut Schedule,
    scenario: &Scenario,
    orbit: OrbitId,
    idx: usize,
    toward_later: bool,
    removed: &mut Vec<TaskId>,
) {
    let item = &schedule.items(orbit)[idx];
    if item.is_cluster() {
        let m = facing_member(item, scenario, toward_later);
        removed.push(scenario.opportunity(m).task);
        remove_member(schedule, scenario, orbit, idx, m);
    } else {
        let item = schedule.items_mut(orbit).remove(idx);
        removed.extend(item.member_task_ids(scenario));
    }
}

/// Restores feasibility of one orbit after an insertion.
///
/// Setup-gap conflictors of the protected opening go first (whole singletons,
/// or the facing end-point component of clusters). Remaining setup-gap
/// violations are resolved against the lower-scoring item of the pair. Then,
/// while energy, memory or opening limits are exceeded, the item or cluster
/// end-point with the lowest `weight / (α·energy_share + β·memory_share)` is
/// evicted. Returns the evicted tasks.
pub fn repair(
    schedule: &mut Schedule,
    orbit_id: OrbitId,
    protected: Option<OppId>,
    scenario: &Scenario,
    weights: &ResourceWeights,
) -> Result<Vec<TaskId>, RepairError> {
    let orbit = scenario.orbit(orbit_id);
    let mut removed = Vec::new();
    if let Some(p) = protected {
        let items = schedule.items(orbit_id);
        let idx = position_of(items, p).ok_or(RepairError::MissingProtected(p, orbit_id))?;
        if !orbit_usage(std::slice::from_ref(&items[idx]), orbit).within(orbit) {
            return Err(RepairError::ProtectedInfeasible(orbit_id));
        }
    }
    loop {
        let items = schedule.items(orbit_id);
        let pidx = protected.and_then(|p| position_of(items, p));

        if let Some(pi) = pidx {
            let p = &items[pi];
            let hit = (0..items.len()).find(|&x| {
                x != pi
                    && if x < pi {
                        !setup_gap_ok(&items[x], p, orbit)
                    } else {
                        !setup_gap_ok(p, &items[x], orbit)
                    }
            });
            if let Some(x) = hit {
                evict_facing(schedule, scenario, orbit_id, x, x < pi, &mut removed);
                continue;
            }
        }

        if let Some(k) = (1..items.len()).find(|&k| !setup_gap_ok(&items[k - 1], &items[k], orbit)) {
            let (a, b) = (k - 1, k);
            let victim = if pidx == Some(a) {
                b
            } else if pidx == Some(b) {
                a
            } else {
                let before = orbit_usage(items, orbit);
                let score = |i: usize| {
                    eviction_score(items[i].weight, &before, &usage_with(items, i, None, orbit), orbit, weights)
                };
                let (sa, sb) = (score(a), score(b));
                match sa.total_cmp(&sb).then(items[a].weight.cmp(&items[b].weight)) {
                    Ordering::Greater => b,
                    _ => a,
                }
            };
            evict_facing(schedule, scenario, orbit_id, victim, victim == a, &mut removed);
            continue;
        }

        let before = orbit_usage(items, orbit);
        if before.within(orbit) {
            break;
        }
        let over_energy = before.energy > orbit.energy_capacity + crate::model::RESOURCE_TOLERANCE;
        let over_memory = before.memory > orbit.memory_capacity + crate::model::RESOURCE_TOLERANCE;
        let over_count = before.openings > orbit.max_openings as usize;

        // (idx, member to drop or None for the whole item, score, weight, helps)
        let mut cands: Vec<(usize, Option<OppId>, f64, u64, bool)> = Vec::new();
        for (i, it) in items.iter().enumerate() {
            if Some(i) == pidx {
                continue;
            }
            let mut consider = |member: Option<OppId>, weight: u64, after: Usage| {
                let helps = (over_energy && after.energy < before.energy)
                    || (over_memory && after.memory < before.memory)
                    || (over_count && after.openings < before.openings);
                let score = eviction_score(weight, &before, &after, orbit, weights);
                cands.push((i, member, score, weight, helps));
            };
            if it.is_cluster() {
                let mut ends = vec![it.members[0], facing_member(it, scenario, true)];
                ends.dedup();
                for m in ends {
                    let rest: Vec<OppId> = it.members.iter().copied().filter(|&x| x != m).collect();
                    let rebuilt = ScheduledItem::from_members(scenario, rest)
                        .expect("subset of a valid cluster");
                    let after = usage_with(items, i, Some(&rebuilt), orbit);
                    let w = scenario.weight_of(scenario.opportunity(m).task) as u64;
                    consider(Some(m), w, after);
                }
            } else {
                consider(None, it.weight, usage_with(items, i, None, orbit));
            }
        }
        let any_helps = cands.iter().any(|c| c.4);
        let victim = cands
            .iter()
            .filter(|c| c.4 || !any_helps)
            .min_by(|a, b| a.2.total_cmp(&b.2).then(a.3.cmp(&b.3)).then(a.0.cmp(&b.0)))
            .copied();
        let Some((idx, member, ..)) = victim else {
            return Err(RepairError::ProtectedInfeasible(orbit_id));
        };
        match member {
            Some(m) => {
                removed.push(scenario.opportunity(m).task);
                remove_member(schedule, scenario, orbit_id, idx, m);
            }
            None => {
                let item = schedule.items_mut(orbit_id).remove(idx);
                removed.extend(item.member_task_ids(scenario));
            }
        }
    }
    Ok(removed)
}

/// Selection and success counters plus execution probabilities of the two
/// structures.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodStats {
    pub sel: [u64; 2],
    pub suc: [u64; 2],
    pub probs: [f64; 2],
}

impl Default for NeighborhoodStats {
    fn default() -> Self {
        Self::new([0.5, 0.5])
    }
}

impl NeighborhoodStats {
    pub fn new(probs: [f64; 2]) -> Self {
        Self {
            sel: [0; 2],
            suc: [0; 2],
            probs,
        }
    }
}

/// Roulette-wheel choice of a structure according to the current probabilities.
pub fn select_structure<R: Rng>(stats: &NeighborhoodStats, rng: &mut R) -> Structure {
    let xi: f64 = rng.random();
    if xi < stats.probs[0] {
        Structure::InsertRemove
    } else {
        Structure::Migrate
    }
}

/// Blends each probability with its structure's recent success ratio using
/// inertia `eta`, normalizes, and resets the counters.
///
/// A structure that was never selected contributes a success ratio of zero.
pub fn update_probabilities(stats: &mut NeighborhoodStats, eta: f64) -> [f64; 2] {
    let mut next = [0.0; 2];
    for i in 0..2 {
        let ratio = if stats.sel[i] > 0 {
            stats.suc[i] as f64 / stats.sel[i] as f64
        } else {
            0.0
        };
        next[i] = eta * stats.probs[i] + (1.0 - eta) * ratio;
    }
    let total: f64 = next.iter().sum();
    if total > 0.0 {
        for p in &mut next {
            *p /= total;
        }
        stats.probs = next;
    }
    stats.sel = [0; 2];
    stats.suc = [0; 2];
    stats.probs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::scenario_with;
    use crate::model::{validate, AngleRange, TimeWindow};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn schedule_of(s: &Scenario, opps: &[u32]) -> Schedule {
        let mut sched = Schedule::for_scenario(s);
        for &o in opps {
            sched.insert_sorted(ScheduledItem::single(s, OppId(o)));
        }
        sched
    }

    #[test]
    fn insertion_no_move_when_everything_scheduled() {
        let s = scenario_with(&[3], 1, &[(0, 0, (0, 10), (0.0, 2.0))]);
        let ctx = SearchContext::new(&s, true);
        let sched = schedule_of(&s, &[0]);
        let tabu = TabuList::new(1, 1);
        assert_eq!(insertion_removal(&sched, &ctx, &tabu, &mut rng()).unwrap(), None);
    }

    #[test]
    fn insertion_into_empty_schedule() {
        let s = scenario_with(&[3], 1, &[(0, 0, (0, 10), (0.0, 2.0))]);
        let ctx = SearchContext::new(&s, true);
        let tabu = TabuList::new(1, 1);
        let mv = insertion_removal(&Schedule::for_scenario(&s), &ctx, &tabu, &mut rng())
            .unwrap()
            .unwrap();
        assert_eq!(mv.kind, Structure::InsertRemove);
        assert!(mv.removed_task_ids.is_empty());
        assert_eq!(mv.candidate, schedule_of(&s, &[0]));
    }

    #[test]
    fn insertion_skips_tabu_tasks() {
        let s = scenario_with(
            &[9, 3],
            1,
            &[(0, 0, (0, 10), (0.0, 2.0)), (1, 0, (500, 510), (0.0, 2.0))],
        );
        let ctx = SearchContext::new(&s, true);
        let mut tabu = TabuList::new(1, 2);
        tabu.push(TaskId(0));
        let mv = insertion_removal(&Schedule::for_scenario(&s), &ctx, &tabu, &mut rng())
            .unwrap()
            .unwrap();
        assert_eq!(mv.candidate, schedule_of(&s, &[1]));
    }

    /// Two scheduled singletons that both conflict with the entrant, which
    /// clusters with the first of them; exhaustive check of every alternative.
    #[test]
    fn clustering_insertion_matches_enumeration() {
        let s = scenario_with(
            &[5, 4, 7],
            1,
            &[
                (0, 0, (100, 120), (5.0, 15.0)),
                (1, 0, (145, 155), (-2.0, 2.0)),
                (2, 0, (105, 125), (8.0, 18.0)),
            ],
        );
        let ctx = SearchContext::new(&s, true);
        let start = schedule_of(&s, &[0, 1]);
        assert!(validate(&start, &s).is_empty());
        let tabu = TabuList::new(1, 3);
        let mv = insertion_removal(&start, &ctx, &tabu, &mut rng()).unwrap().unwrap();
        assert!(validate(&mv.candidate, &s).is_empty());

        // Enumerate every feasible schedule containing task 2.
        let mut best = 0;
        let subsets: [&[u32]; 4] = [&[2], &[0, 2], &[1, 2], &[0, 1, 2]];
        for members in subsets {
            // singletons
            let sched = schedule_of(&s, members);
            if validate(&sched, &s).is_empty() {
                best = best.max(sched.profit());
            }
            // cluster 2 with each partner, others as singletons
            for &partner in members.iter().filter(|&&m| m != 2) {
                let Some(c) = ScheduledItem::from_members(&s, vec![OppId(2), OppId(partner)]) else {
                    continue;
                };
                let mut sched = Schedule::for_scenario(&s);
                sched.insert_sorted(c);
                for &m in members.iter().filter(|&&m| m != 2 && m != partner) {
                    sched.insert_sorted(ScheduledItem::single(&s, OppId(m)));
                }
                if validate(&sched, &s).is_empty() {
                    best = best.max(sched.profit());
                }
            }
        }
        assert_eq!(best, 12);
        assert_eq!(mv.candidate.profit(), best);
        assert_eq!(mv.removed_task_ids, vec![TaskId(1)]);
        let items = mv.candidate.items(OrbitId(0));
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].members, vec![OppId(0), OppId(2)]);
    }

    #[test]
    fn migration_no_move_with_single_opportunities() {
        let s = scenario_with(
            &[3, 4],
            2,
            &[(0, 0, (0, 10), (0.0, 2.0)), (1, 1, (0, 10), (0.0, 2.0))],
        );
        let ctx = SearchContext::new(&s, true);
        let tabu = TabuList::new(1, 2);
        let sched = schedule_of(&s, &[0, 1]);
        assert_eq!(migration(&sched, &ctx, &tabu, &mut rng()).unwrap(), None);
    }

    /// Task 0 sits on orbit A blocking the weight-9 task 1; it can move to B.
    #[test]
    fn migration_frees_blocked_task() {
        let s = scenario_with(
            &[3, 9, 2, 2],
            2,
            &[
                (0, 0, (100, 120), (0.0, 4.0)),
                (0, 1, (300, 320), (0.0, 4.0)),
                (1, 0, (110, 130), (20.0, 30.0)),
                (2, 1, (1000, 1010), (0.0, 4.0)),
                (3, 0, (2000, 2010), (0.0, 4.0)),
            ],
        );
        let ctx = SearchContext::new(&s, false);
        let tabu = TabuList::new(1, 4);
        let start = schedule_of(&s, &[0, 3, 4]);
        assert!(validate(&start, &s).is_empty());
        let mv = migration(&start, &ctx, &tabu, &mut rng()).unwrap().unwrap();
        assert!(validate(&mv.candidate, &s).is_empty());
        let placement = Placement::of(&mv.candidate, &s);
        assert_eq!(placement.slot(TaskId(0)).map(|x| x.0), Some(OrbitId(1)));
        assert!(placement.is_scheduled(TaskId(1)));
        assert!(mv.removed_task_ids.is_empty());
        assert_eq!(mv.candidate.profit(), 16);

        // exhaustive: best profit over all feasible singleton subsets
        let mut best = 0;
        for mask in 0u32..32 {
            let opps: Vec<u32> = (0..5).filter(|b| mask & (1 << b) != 0).collect();
            if opps.contains(&0) && opps.contains(&1) {
                continue;
            }
            let sched = schedule_of(&s, &opps);
            if validate(&sched, &s).is_empty() {
                best = best.max(sched.profit());
            }
        }
        assert_eq!(best, 16);
    }

    #[test]
    fn migration_repairs_destination_energy() {
        let mut s = scenario_with(
            &[3, 9, 2],
            2,
            &[
                (0, 0, (100, 120), (0.0, 4.0)),
                (0, 1, (300, 320), (0.0, 4.0)),
                (1, 0, (110, 130), (20.0, 30.0)),
                (2, 1, (1000, 1060), (0.0, 4.0)),
            ],
        );
        let mut orbits = s.orbits().to_vec();
        orbits[1].energy_capacity = 70.0;
        s = Scenario::new(s.tasks().to_vec(), orbits, s.opportunities().to_vec(), 86_400, 120).unwrap();
        let ctx = SearchContext::new(&s, false);
        let tabu = TabuList::new(1, 3);
        let start = schedule_of(&s, &[0, 3]);
        assert!(validate(&start, &s).is_empty());
        let mv = migration(&start, &ctx, &tabu, &mut rng()).unwrap().unwrap();
        assert!(validate(&mv.candidate, &s).is_empty());
        assert_eq!(mv.removed_task_ids, vec![TaskId(2)]);
        assert_eq!(mv.candidate.profit(), 12);
    }

    #[test]
    fn repair_identity_when_feasible() {
        let s = scenario_with(
            &[3, 4],
            1,
            &[(0, 0, (0, 10), (0.0, 2.0)), (1, 0, (500, 510), (0.0, 2.0))],
        );
        let mut sched = schedule_of(&s, &[0, 1]);
        let before = sched.clone();
        let removed = repair(&mut sched, OrbitId(0), Some(OppId(1)), &s, &ResourceWeights::floor()).unwrap();
        assert!(removed.is_empty());
        assert_eq!(sched, before);
    }

    #[test]
    fn repair_removes_overlapping_singleton() {
        let s = scenario_with(
            &[3, 4],
            1,
            &[(0, 0, (0, 10), (0.0, 2.0)), (1, 0, (5, 15), (0.0, 2.0))],
        );
        let mut sched = schedule_of(&s, &[0, 1]);
        let removed = repair(&mut sched, OrbitId(0), Some(OppId(1)), &s, &ResourceWeights::floor()).unwrap();
        assert_eq!(removed, vec![TaskId(0)]);
        assert_eq!(sched, schedule_of(&s, &[1]));
    }

    #[test]
    fn repair_trims_cluster_end_point() {
        // Cluster {0,1} ends at 60; protected task 2 starts at 65 and needs a gap
        // of 10 + slew, so only the late member 1 should be dropped.
        let s = scenario_with(
            &[3, 4, 5],
            1,
            &[
                (0, 0, (0, 20), (0.0, 2.0)),
                (1, 0, (40, 60), (0.0, 2.0)),
                (2, 0, (65, 75), (0.0, 2.0)),
            ],
        );
        let mut sched = Schedule::for_scenario(&s);
        sched.insert_sorted(ScheduledItem::from_members(&s, vec![OppId(0), OppId(1)]).unwrap());
        sched.insert_sorted(ScheduledItem::single(&s, OppId(2)));
        let removed = repair(&mut sched, OrbitId(0), Some(OppId(2)), &s, &ResourceWeights::floor()).unwrap();
        assert_eq!(removed, vec![TaskId(1)]);
        assert!(validate(&sched, &s).is_empty());
        assert_eq!(sched.profit(), 8);
    }

    /// Memory over by 5: evicting either A (weight 2, 10 s) or B (weight 6, 10 s)
    /// fixes it; A has the lower score and must go.
    #[test]
    fn repair_capacity_prefers_low_score() {
        let mut s = scenario_with(
            &[2, 6, 5],
            1,
            &[
                (0, 0, (0, 10), (0.0, 0.0)),
                (1, 0, (100, 110), (0.0, 0.0)),
                (2, 0, (200, 210), (0.0, 0.0)),
            ],
        );
        let mut orbits = s.orbits().to_vec();
        orbits[0].memory_capacity = 25.0;
        s = Scenario::new(s.tasks().to_vec(), orbits, s.opportunities().to_vec(), 86_400, 120).unwrap();
        let mut sched = schedule_of(&s, &[0, 1, 2]);
        let w = ResourceWeights::new(0.02, 1.0);
        let removed = repair(&mut sched, OrbitId(0), Some(OppId(2)), &s, &w).unwrap();
        assert_eq!(removed, vec![TaskId(0)]);
        assert!(validate(&sched, &s).is_empty());

        // Hand check of both alternatives.
        let keep_a = schedule_of(&s, &[0, 2]);
        let keep_b = schedule_of(&s, &[1, 2]);
        assert!(validate(&keep_a, &s).is_empty() && validate(&keep_b, &s).is_empty());
        assert!(keep_b.profit() > keep_a.profit());
    }

    #[test]
    fn repair_rejects_infeasible_protected() {
        let mut s = scenario_with(&[2], 1, &[(0, 0, (0, 50), (0.0, 0.0))]);
        let mut orbits = s.orbits().to_vec();
        orbits[0].memory_capacity = 10.0;
        s = Scenario::new(s.tasks().to_vec(), orbits, s.opportunities().to_vec(), 86_400, 120).unwrap();
        let mut sched = schedule_of(&s, &[0]);
        assert_eq!(
            repair(&mut sched, OrbitId(0), Some(OppId(0)), &s, &ResourceWeights::floor()),
            Err(RepairError::ProtectedInfeasible(OrbitId(0)))
        );
    }

    #[test]
    fn select_structure_frequencies() {
        let mut r = rng();
        let always = NeighborhoodStats::new([1.0, 0.0]);
        assert!((0..1000).all(|_| select_structure(&always, &mut r) == Structure::InsertRemove));
        for p in [0.5, 0.75] {
            let stats = NeighborhoodStats::new([p, 1.0 - p]);
            let n = 10_000;
            let hits = (0..n)
                .filter(|_| select_structure(&stats, &mut r) == Structure::InsertRemove)
                .count();
            let freq = hits as f64 / n as f64;
            assert!((freq - p).abs() <= 0.02, "p={p} freq={freq}");
        }
    }

    #[test]
    fn probability_update_examples() {
        let mut st = NeighborhoodStats { sel: [4, 3], suc: [4, 0], probs: [0.5, 0.5] };
        let p = update_probabilities(&mut st, 0.8);
        assert!((p[0] - 0.6).abs() < 1e-12 && (p[1] - 0.4).abs() < 1e-12);
        assert_eq!(st.sel, [0, 0]);
        assert_eq!(st.suc, [0, 0]);

        let mut st = NeighborhoodStats { sel: [5, 2], suc: [0, 2], probs: [0.9, 0.1] };
        let p = update_probabilities(&mut st, 0.8);
        assert!((p[0] - 0.72).abs() < 1e-12 && (p[1] - 0.28).abs() < 1e-12);

        let mut st = NeighborhoodStats { sel: [4, 2], suc: [2, 1], probs: [0.3, 0.7] };
        let p = update_probabilities(&mut st, 0.8);
        assert!((p[0] - 0.34).abs() < 1e-12 && (p[1] - 0.66).abs() < 1e-12);

        let mut st = NeighborhoodStats { sel: [6, 0], suc: [1, 0], probs: [0.5, 0.5] };
        let p = update_probabilities(&mut st, 0.8);
        assert!(p[0] > 0.0 && p[1] > 0.0);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tie_break_random_is_seeded() {
        let s = scenario_with(
            &[5, 5, 5],
            1,
            &[
                (0, 0, (0, 10), (0.0, 1.0)),
                (1, 0, (500, 510), (0.0, 1.0)),
                (2, 0, (1000, 1010), (0.0, 1.0)),
            ],
        );
        let ctx = SearchContext::new(&s, true).with_tie_break(TieBreak::Random);
        let tabu = TabuList::new(1, 3);
        let empty = Schedule::for_scenario(&s);
        let picks = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| insertion_removal(&empty, &ctx, &tabu, &mut r).unwrap().unwrap().candidate)
                .collect::<Vec<_>>()
        };
        assert_eq!(picks(3), picks(3));
        let distinct: std::collections::HashSet<_> = picks(3)
            .iter()
            .map(|c| c.items(OrbitId(0))[0].members[0])
            .collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn angle_range_helpers() {
        assert_eq!(AngleRange::new(-3.0, 5.0).min_abs(), 0.0);
        assert_eq!(AngleRange::new(-9.0, -4.0).min_abs(), 4.0);
        assert!(TimeWindow::new(0, 10).overlaps(&TimeWindow::new(9, 12)));
    }
}
