//! Exact depth-first branch and bound for tiny instances.
//!
//! Tasks are decided in descending weight. Each task is either left out,
//! opened as a singleton on one of its opportunities, or merged into an item
//! already on that orbit (angle and duration tests only; the resource
//! worthiness test is a search heuristic and is not applied here). Partial
//! states are pruned only by bounds that further decisions cannot repair:
//! merges only widen windows and narrow angle ranges, so the smallest
//! attainable |angle| of an item never decreases.

use thiserror::Error;

use crate::clustering::merge_feasible;
use crate::model::{
    orbit_usage, setup_gap_ok, Orbit, Scenario, Schedule, ScheduledItem, TaskId, RESOURCE_TOLERANCE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_tasks: usize,
    pub max_opportunities: usize,
    pub node_budget: u64,
    /// Whether merge branches are explored.
    pub clustering: bool,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            max_tasks: 12,
            max_opportunities: 30,
            node_budget: 100_000_000,
            clustering: true,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("instance has {actual} {what}, limit is {limit}")]
    TooLarge {
        what: &'static str,
        actual: usize,
        limit: usize,
    },
    #[error("node budget of {0} exhausted")]
    BudgetExceeded(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub profit: u64,
    pub schedule: Schedule,
    pub nodes: u64,
}

struct Search<'a> {
    scenario: &'a Scenario,
    order: Vec<TaskId>,
    suffix_weight: Vec<u64>,
    orbits: Vec<Vec<ScheduledItem>>,
    profit: u64,
    best_profit: u64,
    best: Vec<Vec<ScheduledItem>>,
    nodes: u64,
    budget: u64,
    clustering: bool,
}

/// Bounds every completion of the orbit must satisfy.
fn orbit_may_complete(items: &[ScheduledItem], orbit: &Orbit) -> bool {
    if items.len() > orbit.max_openings as usize {
        return false;
    }
    let observed: i64 = items.iter().map(|it| it.window.len()).sum();
    if orbit.memory_rate * observed as f64 > orbit.memory_capacity + RESOURCE_TOLERANCE {
        return false;
    }
    let lbs: Vec<f64> = items.iter().map(|it| it.angle_range.min_abs()).collect();
    let (mut top1, mut top2) = (0.0f64, 0.0f64);
    for &x in &lbs {
        if x > top1 {
            top2 = top1;
            top1 = x;
        } else if x > top2 {
            top2 = x;
        }
    }
    let slew_lb = if items.len() >= 2 {
        (2.0 * lbs.iter().sum::<f64>() - top1 - top2) / orbit.slew_velocity
    } else {
        0.0
    };
    let energy_lb = orbit.obs_energy_rate * observed as f64 + orbit.slew_energy_rate * slew_lb;
    if energy_lb > orbit.energy_capacity + RESOURCE_TOLERANCE {
        return false;
    }
    for i in 0..items.len() {
        for h in i + 1..items.len() {
            let (a, b) = if items[i].window.start <= items[h].window.start {
                (i, h)
            } else {
                (h, i)
            };
            let need = orbit.setup_time + (lbs[a] + lbs[b]) / orbit.slew_velocity;
            if ((items[b].window.start - items[a].window.end) as f64) < need {
                return false;
            }
        }
    }
    true
}

fn orbit_feasible_now(items: &[ScheduledItem], orbit: &Orbit) -> bool {
    let mut sorted: Vec<&ScheduledItem> = items.iter().collect();
    sorted.sort_by_key(|it| it.window.start);
    sorted.windows(2).all(|p| setup_gap_ok(p[0], p[1], orbit))
        && orbit_usage(items, orbit).within(orbit)
}

impl Search<'_> {
    fn record_if_better(&mut self) {
        if self.profit <= self.best_profit {
            return;
        }
        let feasible = self
            .orbits
            .iter()
            .zip(self.scenario.orbits())
            .all(|(items, orbit)| orbit_feasible_now(items, orbit));
        if feasible {
            self.best_profit = self.profit;
            self.best = self.orbits.clone();
        }
    }

    fn descend(&mut self, depth: usize) -> Result<(), OracleError> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(OracleError::BudgetExceeded(self.budget));
        }
        self.record_if_better();
        if depth == self.order.len() || self.profit + self.suffix_weight[depth] <= self.best_profit {
            return Ok(());
        }
        let scenario = self.scenario;
        let task = self.order[depth];
        let weight = scenario.weight_of(task) as u64;
        for &opp in scenario.opportunities_of_task(task) {
            let j = scenario.opportunity(opp).orbit.index();
            let orbit = &scenario.orbits()[j];

            self.orbits[j].push(ScheduledItem::single(scenario, opp));
            if orbit_may_complete(&self.orbits[j], orbit) {
                self.profit += weight;
                self.descend(depth + 1)?;
                self.profit -= weight;
            }
            self.orbits[j].pop();

            if !self.clustering {
                continue;
            }
            for pos in 0..self.orbits[j].len() {
                let Ok(merged) = merge_feasible(&self.orbits[j][pos], opp, scenario) else {
                    continue;
                };
                let old = std::mem::replace(&mut self.orbits[j][pos], merged);
                if orbit_may_complete(&self.orbits[j], orbit) {
                    self.profit += weight;
                    self.descend(depth + 1)?;
                    self.profit -= weight;
                }
                self.orbits[j][pos] = old;
            }
        }
        self.descend(depth + 1)
    }
}

/// Finds a maximum-profit feasible schedule.
pub fn exact_solve(scenario: &Scenario, limits: &OracleLimits) -> Result<OracleSolution, OracleError> {
    if scenario.n_tasks() > limits.max_tasks {
        return Err(OracleError::TooLarge {
            what: "tasks",
            actual: scenario.n_tasks(),
            limit: limits.max_tasks,
        });
    }
    if scenario.opportunities().len() > limits.max_opportunities {
        return Err(OracleError::TooLarge {
            what: "opportunities",
            actual: scenario.opportunities().len(),
            limit: limits.max_opportunities,
        });
    }
    let mut order: Vec<TaskId> = scenario.tasks().iter().map(|t| t.id).collect();
    order.sort_by_key(|&t| (std::cmp::Reverse(scenario.weight_of(t)), t));
    let mut suffix_weight = vec![0u64; order.len() + 1];
    for i in (0..order.len()).rev() {
        let reachable = !scenario.opportunities_of_task(order[i]).is_empty();
        suffix_weight[i] = suffix_weight[i + 1] + if reachable { scenario.weight_of(order[i]) as u64 } else { 0 };
    }
    let mut search = Search {
        scenario,
        order,
        suffix_weight,
        orbits: vec![Vec::new(); scenario.n_orbits()],
        profit: 0,
        best_profit: 0,
        best: Vec::new(),
        nodes: 0,
        budget: limits.node_budget,
        clustering: limits.clustering,
    };
    search.descend(0)?;
    let mut schedule = Schedule::for_scenario(scenario);
    for item in search.best.into_iter().flatten() {
        schedule.insert_sorted(item);
    }
    Ok(OracleSolution {
        profit: search.best_profit,
        schedule,
        nodes: search.nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::scenario_with;
    use crate::model::validate;

    #[test]
    fn single_task() {
        let s = scenario_with(&[6], 1, &[(0, 0, (0, 10), (0.0, 1.0))]);
        let sol = exact_solve(&s, &OracleLimits::default()).unwrap();
        assert_eq!(sol.profit, 6);
        assert!(validate(&sol.schedule, &s).is_empty());
    }

    #[test]
    fn exclusive_pair_without_cluster() {
        let s = scenario_with(
            &[9, 4],
            1,
            &[(0, 0, (0, 10), (0.0, 1.0)), (1, 0, (5, 15), (20.0, 21.0))],
        );
        let sol = exact_solve(&s, &OracleLimits::default()).unwrap();
        assert_eq!(sol.profit, 9);
    }

    #[test]
    fn exclusive_pair_that_clusters() {
        let s = scenario_with(
            &[9, 4],
            1,
            &[(0, 0, (0, 10), (0.0, 10.0)), (1, 0, (5, 15), (5.0, 12.0))],
        );
        let sol = exact_solve(&s, &OracleLimits::default()).unwrap();
        assert_eq!(sol.profit, 13);
        assert!(validate(&sol.schedule, &s).is_empty());
        assert!(sol.schedule.items(crate::model::OrbitId(0))[0].is_cluster());
        let flat = exact_solve(&s, &OracleLimits { clustering: false, ..Default::default() }).unwrap();
        assert_eq!(flat.profit, 9);
    }

    /// A merge shifts the execution angle toward nadir and so repairs a gap
    /// that the partial state violates.
    #[test]
    fn later_merge_can_fix_gap() {
        // Task 0 range [0,20] (midpoint 10) right before task 2 at angle 0,
        // gap 15 < 10 + 10. Merging task 1 (range [0,2]) moves the angle to 1.
        let s = scenario_with(
            &[9, 3, 5],
            1,
            &[
                (0, 0, (0, 20), (0.0, 20.0)),
                (1, 0, (0, 20), (0.0, 2.0)),
                (2, 0, (35, 45), (0.0, 0.0)),
            ],
        );
        let sol = exact_solve(&s, &OracleLimits::default()).unwrap();
        assert_eq!(sol.profit, 17);
        assert!(validate(&sol.schedule, &s).is_empty());
    }

    #[test]
    fn limits_enforced() {
        let s = scenario_with(&[1; 13], 1, &[]);
        assert!(matches!(
            exact_solve(&s, &OracleLimits::default()),
            Err(OracleError::TooLarge { what: "tasks", .. })
        ));
        let s = scenario_with(
            &[1, 1, 1],
            1,
            &[
                (0, 0, (0, 10), (0.0, 1.0)),
                (1, 0, (500, 510), (0.0, 1.0)),
                (2, 0, (1000, 1010), (0.0, 1.0)),
            ],
        );
        let tight = OracleLimits { node_budget: 2, ..Default::default() };
        assert_eq!(exact_solve(&s, &tight), Err(OracleError::BudgetExceeded(2)));
    }
}
