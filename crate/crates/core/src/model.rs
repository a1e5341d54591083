//! Problem instance, schedule representation, objective and feasibility checks.
//!
//! A [`Scenario`] is immutable once built: tasks with integer weights, orbits
//! with their energy/memory/opening budgets, and observation opportunities
//! (one visibility of a task from an orbit). A [`Schedule`] holds, per orbit,
//! the ordered list of sensor openings. Each opening is a [`ScheduledItem`]
//! that covers one or more opportunities of distinct tasks on that orbit.
//!
//! Slewing is charged by the sum of absolute execution angles of the two
//! consecutive openings, both in the setup-gap requirement and in the energy
//! budget.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Comparison tolerance for angles, in degrees.
pub const ANGLE_TOLERANCE: f64 = 1e-9;

/// Slack used when comparing consumed resources and gaps against limits.
pub const RESOURCE_TOLERANCE: f64 = 1e-9;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }

            #[inline]
            pub fn from_index(index: usize) -> Self {
                Self(index as u32)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(
    /// Dense task identifier, equal to the task's position in [`Scenario::tasks`].
    TaskId
);
id_type!(
    /// Dense orbit identifier, equal to the orbit's position in [`Scenario::orbits`].
    OrbitId
);
id_type!(
    /// Position of an opportunity in [`Scenario::opportunities`].
    OppId
);

/// Closed time interval in whole seconds from the horizon start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[i64; 2]", into = "[i64; 2]")]
pub struct TimeWindow {
    pub start: i64,
    pub end: i64,
}

impl TimeWindow {
    pub const fn new(start: i64, end: i64) -> Self {
        Self { start, end }
    }

    #[inline]
    pub fn len(&self) -> i64 {
        self.end - self.start
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, other: &TimeWindow) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn overlaps(&self, other: &TimeWindow) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl From<[i64; 2]> for TimeWindow {
    fn from([start, end]: [i64; 2]) -> Self {
        Self { start, end }
    }
}

impl From<TimeWindow> for [i64; 2] {
    fn from(w: TimeWindow) -> Self {
        [w.start, w.end]
    }
}

/// Closed range of lateral slewing angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct AngleRange {
    pub lo: f64,
    pub hi: f64,
}

impl AngleRange {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    #[inline]
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Smallest absolute angle reachable inside the range.
    pub fn min_abs(&self) -> f64 {
        if self.lo <= 0.0 && self.hi >= 0.0 {
            0.0
        } else {
            self.lo.abs().min(self.hi.abs())
        }
    }

    pub fn contains(&self, other: &AngleRange) -> bool {
        self.lo <= other.lo + ANGLE_TOLERANCE && other.hi <= self.hi + ANGLE_TOLERANCE
    }

    pub fn contains_angle(&self, angle: f64) -> bool {
        self.lo - ANGLE_TOLERANCE <= angle && angle <= self.hi + ANGLE_TOLERANCE
    }
}

impl From<[f64; 2]> for AngleRange {
    fn from([lo, hi]: [f64; 2]) -> Self {
        Self { lo, hi }
    }
}

impl From<AngleRange> for [f64; 2] {
    fn from(r: AngleRange) -> Self {
        [r.lo, r.hi]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    pub weight: u32,
}

/// One orbit of one satellite, treated as an independent resource.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    pub id: OrbitId,
    /// Memory capacity `W_j`.
    pub memory_capacity: f64,
    /// Memory consumed per observed second `w_j`.
    pub memory_rate: f64,
    /// Energy capacity `E_j`.
    pub energy_capacity: f64,
    /// Energy consumed per observed second `eo_j`.
    pub obs_energy_rate: f64,
    /// Energy consumed per second of slewing `es_j`.
    pub slew_energy_rate: f64,
    /// Slewing velocity `v_j` in degrees per second.
    pub slew_velocity: f64,
    /// Sensor opening and calibration time `a_j` in seconds.
    pub setup_time: f64,
    /// Maximum number of sensor openings `c_j`.
    pub max_openings: u32,
}

impl Orbit {
    /// Orbit with the reference experimental parameters: W=1000, w=1, E=1500,
    /// eo=1, es=1, v=1, a=10, c=10.
    pub fn reference(id: OrbitId) -> Self {
        Self {
            id,
            memory_capacity: 1000.0,
            memory_rate: 1.0,
            energy_capacity: 1500.0,
            obs_energy_rate: 1.0,
            slew_energy_rate: 1.0,
            slew_velocity: 1.0,
            setup_time: 10.0,
            max_openings: 10,
        }
    }

    /// Seconds needed to slew between two openings with the given execution angles.
    #[inline]
    pub fn slew_seconds(&self, a: f64, b: f64) -> f64 {
        (a.abs() + b.abs()) / self.slew_velocity
    }
}

/// A visibility of one task from one orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Opportunity {
    pub task: TaskId,
    pub orbit: OrbitId,
    pub window: TimeWindow,
    pub angle_range: AngleRange,
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid scenario: {field}: {reason}")]
    InvalidScenario { field: String, reason: String },
    #[error("schedule does not match the scenario: {0}")]
    InstanceMismatch(String),
}

impl ModelError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::InvalidScenario {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// An immutable problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    tasks: Vec<TaskSpec>,
    orbits: Vec<Orbit>,
    opportunities: Vec<Opportunity>,
    horizon_seconds: i64,
    max_cluster_duration: i64,
    by_task: Vec<Vec<OppId>>,
    by_orbit: Vec<Vec<OppId>>,
}

impl Scenario {
    /// Builds a scenario, checking every instance invariant.
    pub fn new(
        tasks: Vec<TaskSpec>,
        orbits: Vec<Orbit>,
        opportunities: Vec<Opportunity>,
        horizon_seconds: i64,
        max_cluster_duration: i64,
    ) -> Result<Self, ModelError> {
        if horizon_seconds <= 0 {
            return Err(ModelError::invalid("horizon_seconds", "must be positive"));
        }
        if max_cluster_duration <= 0 {
            return Err(ModelError::invalid("max_cluster_duration", "must be positive"));
        }
        for (i, t) in tasks.iter().enumerate() {
            if t.id.index() != i {
                return Err(ModelError::invalid(
                    format!("tasks[{i}].id"),
                    format!("expected dense id {i}, found {}", t.id),
                ));
            }
            if t.weight < 1 {
                return Err(ModelError::invalid(format!("tasks[{i}].weight"), "must be >= 1"));
            }
        }
        for (j, o) in orbits.iter().enumerate() {
            let field = |name: &str| format!("orbits[{j}].{name}");
            if o.id.index() != j {
                return Err(ModelError::invalid(
                    field("id"),
                    format!("expected dense id {j}, found {}", o.id),
                ));
            }
            let rates = [
                ("memory_capacity", o.memory_capacity),
                ("memory_rate", o.memory_rate),
                ("energy_capacity", o.energy_capacity),
                ("obs_energy_rate", o.obs_energy_rate),
                ("slew_energy_rate", o.slew_energy_rate),
                ("setup_time", o.setup_time),
            ];
            for (name, value) in rates {
                if !(value.is_finite() && value >= 0.0) {
                    return Err(ModelError::invalid(field(name), "must be finite and >= 0"));
                }
            }
            if !(o.slew_velocity.is_finite() && o.slew_velocity > 0.0) {
                return Err(ModelError::invalid(field("slew_velocity"), "must be > 0"));
            }
            if o.max_openings < 1 {
                return Err(ModelError::invalid(field("max_openings"), "must be >= 1"));
            }
        }
        let mut by_task = vec![Vec::new(); tasks.len()];
        let mut by_orbit = vec![Vec::new(); orbits.len()];
        for (k, opp) in opportunities.iter().enumerate() {
            let field = |name: &str| format!("opportunities[{k}].{name}");
            if opp.task.index() >= tasks.len() {
                return Err(ModelError::invalid(field("task"), format!("unknown task {}", opp.task)));
            }
            if opp.orbit.index() >= orbits.len() {
                return Err(ModelError::invalid(
                    field("orbit"),
                    format!("unknown orbit {}", opp.orbit),
                ));
            }
            if opp.window.start >= opp.window.end {
                return Err(ModelError::invalid(
                    field("window"),
                    format!(
                        "start {} must be before end {}",
                        opp.window.start, opp.window.end
                    ),
                ));
            }
            let r = opp.angle_range;
            if !(r.lo.is_finite() && r.hi.is_finite()) || r.lo > r.hi {
                return Err(ModelError::invalid(
                    field("angle_range"),
                    format!("lo {} must not exceed hi {}", r.lo, r.hi),
                ));
            }
            by_task[opp.task.index()].push(OppId::from_index(k));
            by_orbit[opp.orbit.index()].push(OppId::from_index(k));
        }
        for list in &mut by_orbit {
            list.sort_by_key(|&o| (opportunities[o.index()].window.start, o));
        }
        Ok(Self {
            tasks,
            orbits,
            opportunities,
            horizon_seconds,
            max_cluster_duration,
            by_task,
            by_orbit,
        })
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn orbits(&self) -> &[Orbit] {
        &self.orbits
    }

    pub fn opportunities(&self) -> &[Opportunity] {
        &self.opportunities
    }

    pub fn horizon_seconds(&self) -> i64 {
        self.horizon_seconds
    }

    /// Longest continuous observation `ΔT` allowed for a cluster-task.
    pub fn max_cluster_duration(&self) -> i64 {
        self.max_cluster_duration
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn n_orbits(&self) -> usize {
        self.orbits.len()
    }

    #[inline]
    pub fn task(&self, id: TaskId) -> &TaskSpec {
        &self.tasks[id.index()]
    }

    #[inline]
    pub fn orbit(&self, id: OrbitId) -> &Orbit {
        &self.orbits[id.index()]
    }

    #[inline]
    pub fn opportunity(&self, id: OppId) -> &Opportunity {
        &self.opportunities[id.index()]
    }

    #[inline]
    pub fn weight_of(&self, id: TaskId) -> u32 {
        self.tasks[id.index()].weight
    }

    /// Opportunities of a task, in scenario order.
    #[inline]
    pub fn opportunities_of_task(&self, id: TaskId) -> &[OppId] {
        &self.by_task[id.index()]
    }

    /// Opportunities on an orbit, sorted by window start.
    #[inline]
    pub fn opportunities_on_orbit(&self, id: OrbitId) -> &[OppId] {
        &self.by_orbit[id.index()]
    }

    pub fn total_weight(&self) -> u64 {
        self.tasks.iter().map(|t| t.weight as u64).sum()
    }

    /// Number of tasks with at least one opportunity.
    pub fn visible_tasks(&self) -> usize {
        self.by_task.iter().filter(|o| !o.is_empty()).count()
    }
}

/// One sensor opening: a single task or a cluster-task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledItem {
    pub orbit: OrbitId,
    /// Member opportunities, ordered by window start then task id.
    pub members: Vec<OppId>,
    pub window: TimeWindow,
    pub angle_range: AngleRange,
    pub exec_angle: f64,
    pub weight: u64,
}

impl ScheduledItem {
    /// Opening that observes a single opportunity; the execution angle is the
    /// midpoint of its angle range.
    pub fn single(scenario: &Scenario, opp: OppId) -> Self {
        let o = scenario.opportunity(opp);
        Self {
            orbit: o.orbit,
            members: vec![opp],
            window: o.window,
            angle_range: o.angle_range,
            exec_angle: o.angle_range.midpoint(),
            weight: scenario.weight_of(o.task) as u64,
        }
    }

    /// Builds an opening from member opportunities, deriving the merged window,
    /// intersected angle range, midpoint execution angle and summed weight.
    ///
    /// Returns `None` when the members are empty, span several orbits, or have
    /// no common angle.
    pub fn from_members(scenario: &Scenario, mut members: Vec<OppId>) -> Option<Self> {
        let first = *members.first()?;
        let orbit = scenario.opportunity(first).orbit;
        if members.iter().any(|&m| scenario.opportunity(m).orbit != orbit) {
            return None;
        }
        sort_members(scenario, &mut members);
        let ranges = members.iter().map(|&m| scenario.opportunity(m).angle_range);
        let angle_range = crate::clustering::intersect_ranges(ranges).ok()??;
        let window =
            crate::clustering::merge_windows(members.iter().map(|&m| scenario.opportunity(m).window))?;
        let weight = members
            .iter()
            .map(|&m| scenario.weight_of(scenario.opportunity(m).task) as u64)
            .sum();
        Some(Self {
            orbit,
            members,
            window,
            angle_range,
            exec_angle: angle_range.midpoint(),
            weight,
        })
    }

    pub fn is_cluster(&self) -> bool {
        self.members.len() > 1
    }

    pub fn member_task_ids<'a>(&'a self, scenario: &'a Scenario) -> impl Iterator<Item = TaskId> + 'a {
        self.members.iter().map(|&m| scenario.opportunity(m).task)
    }

    pub fn contains_task(&self, scenario: &Scenario, task: TaskId) -> bool {
        self.members.iter().any(|&m| scenario.opportunity(m).task == task)
    }
}

pub(crate) fn sort_members(scenario: &Scenario, members: &mut [OppId]) {
    members.sort_by_key(|&m| {
        let o = scenario.opportunity(m);
        (o.window.start, o.task, m)
    });
}

/// Per-orbit ordered lists of sensor openings.
///
/// The lists are plain data: nothing prevents an infeasible schedule from
/// being represented, which is what [`validate`] is for.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schedule {
    orbits: Vec<Vec<ScheduledItem>>,
}

impl Schedule {
    pub fn empty(n_orbits: usize) -> Self {
        Self {
            orbits: vec![Vec::new(); n_orbits],
        }
    }

    pub fn for_scenario(scenario: &Scenario) -> Self {
        Self::empty(scenario.n_orbits())
    }

    /// Wraps raw per-orbit item lists without checking anything.
    pub fn from_orbit_items(orbits: Vec<Vec<ScheduledItem>>) -> Self {
        Self { orbits }
    }

    pub fn n_orbit_lists(&self) -> usize {
        self.orbits.len()
    }

    pub fn items(&self, orbit: OrbitId) -> &[ScheduledItem] {
        self.orbits.get(orbit.index()).map_or(&[], Vec::as_slice)
    }

    pub(crate) fn items_mut(&mut self, orbit: OrbitId) -> &mut Vec<ScheduledItem> {
        &mut self.orbits[orbit.index()]
    }

    pub fn orbit_lists(&self) -> &[Vec<ScheduledItem>] {
        &self.orbits
    }

    pub fn iter(&self) -> impl Iterator<Item = (OrbitId, &ScheduledItem)> {
        self.orbits
            .iter()
            .enumerate()
            .flat_map(|(j, items)| items.iter().map(move |it| (OrbitId::from_index(j), it)))
    }

    pub fn n_items(&self) -> usize {
        self.orbits.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.orbits.iter().all(Vec::is_empty)
    }

    /// Sum of stored item weights. Equals [`objective`] for schedules built
    /// through [`ScheduledItem`] constructors.
    pub fn profit(&self) -> u64 {
        self.orbits.iter().flatten().map(|it| it.weight).sum()
    }

    /// Number of distinct initial tasks observed.
    pub fn finished_tasks(&self, scenario: &Scenario) -> usize {
        let mut seen = vec![false; scenario.n_tasks()];
        let mut count = 0;
        for (_, item) in self.iter() {
            for t in item.member_task_ids(scenario) {
                if let Some(s) = seen.get_mut(t.index()) {
                    if !*s {
                        *s = true;
                        count += 1;
                    }
                }
            }
        }
        count
    }

    /// Inserts an item into its orbit list keeping the list sorted by window
    /// start. Returns the insertion position.
    pub fn insert_sorted(&mut self, item: ScheduledItem) -> usize {
        let list = &mut self.orbits[item.orbit.index()];
        let pos = list.partition_point(|x| x.window.start <= item.window.start);
        list.insert(pos, item);
        pos
    }

    /// Resource usage of every orbit, indexed by orbit id.
    pub fn usage(&self, scenario: &Scenario) -> Vec<Usage> {
        scenario
            .orbits()
            .iter()
            .map(|o| orbit_usage(self.items(o.id), o))
            .collect()
    }
}

/// Resources consumed on one orbit.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Usage {
    pub energy: f64,
    pub memory: f64,
    pub openings: usize,
}

impl Usage {
    pub fn within(&self, orbit: &Orbit) -> bool {
        self.energy <= orbit.energy_capacity + RESOURCE_TOLERANCE
            && self.memory <= orbit.memory_capacity + RESOURCE_TOLERANCE
            && self.openings <= orbit.max_openings as usize
    }
}

/// Total profit of a schedule: the summed weight of every member task.
pub fn objective(schedule: &Schedule, scenario: &Scenario) -> Result<u64, ModelError> {
    let mut total = 0u64;
    for (orbit, item) in schedule.iter() {
        for &m in &item.members {
            let opp = scenario.opportunities().get(m.index()).ok_or_else(|| {
                ModelError::InstanceMismatch(format!("orbit {orbit}: unknown opportunity {m}"))
            })?;
            let task = scenario.tasks().get(opp.task.index()).ok_or_else(|| {
                ModelError::InstanceMismatch(format!("orbit {orbit}: unknown task {}", opp.task))
            })?;
            total += task.weight as u64;
        }
    }
    Ok(total)
}

/// Whether `next` can follow `prev` on `orbit`: the gap between them must
/// cover the setup time plus slewing by `(|θ_prev| + |θ_next|) / v`.
#[inline]
pub fn setup_gap_ok(prev: &ScheduledItem, next: &ScheduledItem, orbit: &Orbit) -> bool {
    gap_ok(prev.window, prev.exec_angle, next.window, next.exec_angle, orbit)
}

#[inline]
pub(crate) fn gap_ok(
    prev: TimeWindow,
    prev_angle: f64,
    next: TimeWindow,
    next_angle: f64,
    orbit: &Orbit,
) -> bool {
    let gap = (next.start - prev.end) as f64;
    gap + RESOURCE_TOLERANCE >= orbit.setup_time + orbit.slew_seconds(prev_angle, next_angle)
}

/// Energy and memory consumed by an ordered sequence of openings on one orbit.
pub fn orbit_usage(items: &[ScheduledItem], orbit: &Orbit) -> Usage {
    let observed: i64 = items.iter().map(|it| it.window.len()).sum();
    let slew: f64 = items
        .windows(2)
        .map(|p| orbit.slew_seconds(p[0].exec_angle, p[1].exec_angle))
        .sum();
    Usage {
        energy: orbit.obs_energy_rate * observed as f64 + orbit.slew_energy_rate * slew,
        memory: orbit.memory_rate * observed as f64,
        openings: items.len(),
    }
}

/// Constraint families reported by [`validate`], in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConstraintId {
    /// A task observed more than once.
    #[serde(rename = "DUPLICATE")]
    Duplicate,
    /// Insufficient setup/slew gap between consecutive openings.
    #[serde(rename = "SETUP_GAP")]
    SetupGap,
    /// Energy capacity exceeded.
    #[serde(rename = "ENERGY")]
    Energy,
    /// Memory capacity exceeded.
    #[serde(rename = "MEMORY")]
    Memory,
    /// Too many sensor openings.
    #[serde(rename = "OPENINGS")]
    Openings,
    /// Malformed opening: bad members, window, angle or duration.
    #[serde(rename = "CLUSTER")]
    Cluster,
}

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Duplicate => "DUPLICATE",
            Self::SetupGap => "SETUP_GAP",
            Self::Energy => "ENERGY",
            Self::Memory => "MEMORY",
            Self::Openings => "OPENINGS",
            Self::Cluster => "CLUSTER",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: ConstraintId,
    pub orbit: Option<OrbitId>,
    pub position: Option<usize>,
    pub task: Option<TaskId>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.constraint)?;
        if let Some(o) = self.orbit {
            write!(f, " orbit={o}")?;
        }
        if let Some(p) = self.position {
            write!(f, " item={p}")?;
        }
        if let Some(t) = self.task {
            write!(f, " task={t}")?;
        }
        write!(f, ": {}", self.detail)
    }
}

/// Checks every schedule and opening invariant.
///
/// Returns an empty list iff the schedule is feasible. Violations are sorted
/// by constraint id, then orbit, then item position.
pub fn validate(schedule: &Schedule, scenario: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen: Vec<Option<(OrbitId, usize)>> = vec![None; scenario.n_tasks()];
    let delta_t = scenario.max_cluster_duration();

    for (j, items) in schedule.orbit_lists().iter().enumerate() {
        let orbit_id = OrbitId::from_index(j);
        let Some(orbit) = scenario.orbits().get(j) else {
            for pos in 0..items.len() {
                out.push(Violation {
                    constraint: ConstraintId::Cluster,
                    orbit: Some(orbit_id),
                    position: Some(pos),
                    task: None,
                    detail: "item on unknown orbit".into(),
                });
            }
            continue;
        };
        let mut structurally_ok = true;
        for (pos, item) in items.iter().enumerate() {
            let mut push = |constraint, task, detail: String| {
                out.push(Violation {
                    constraint,
                    orbit: Some(orbit_id),
                    position: Some(pos),
                    task,
                    detail,
                })
            };
            if item.orbit != orbit_id {
                push(
                    ConstraintId::Cluster,
                    None,
                    format!("item claims orbit {} but is listed on orbit {orbit_id}", item.orbit),
                );
            }
            if item.members.is_empty() {
                push(ConstraintId::Cluster, None, "item has no members".into());
                structurally_ok = false;
                continue;
            }
            let mut opps = Vec::with_capacity(item.members.len());
            for &m in &item.members {
                match scenario.opportunities().get(m.index()) {
                    Some(o) => opps.push(o),
                    None => {
                        push(ConstraintId::Cluster, None, format!("unknown opportunity {m}"));
                    }
                }
            }
            if opps.len() != item.members.len() {
                structurally_ok = false;
                continue;
            }
            for o in &opps {
                if o.orbit != orbit_id {
                    push(
                        ConstraintId::Cluster,
                        Some(o.task),
                        format!("member opportunity belongs to orbit {}", o.orbit),
                    );
                }
                match seen[o.task.index()] {
                    Some((po, pp)) => push(
                        ConstraintId::Duplicate,
                        Some(o.task),
                        format!("task already observed by orbit {po} item {pp}"),
                    ),
                    None => seen[o.task.index()] = Some((orbit_id, pos)),
                }
            }
            if opps.windows(2).any(|p| p[0].window.start > p[1].window.start) {
                push(ConstraintId::Cluster, None, "members not ordered by window start".into());
            }
            let merged = TimeWindow::new(
                opps.iter().map(|o| o.window.start).min().unwrap_or(0),
                opps.iter().map(|o| o.window.end).max().unwrap_or(0),
            );
            if merged != item.window {
                push(
                    ConstraintId::Cluster,
                    None,
                    format!(
                        "window [{}, {}] differs from merged member window [{}, {}]",
                        item.window.start, item.window.end, merged.start, merged.end
                    ),
                );
            }
            let lo = opps.iter().map(|o| o.angle_range.lo).fold(f64::NEG_INFINITY, f64::max);
            let hi = opps.iter().map(|o| o.angle_range.hi).fold(f64::INFINITY, f64::min);
            if lo > hi + ANGLE_TOLERANCE {
                push(ConstraintId::Cluster, None, "members share no common slewing angle".into());
            }
            if (item.angle_range.lo - lo).abs() > ANGLE_TOLERANCE
                || (item.angle_range.hi - hi).abs() > ANGLE_TOLERANCE
            {
                push(
                    ConstraintId::Cluster,
                    None,
                    format!(
                        "angle range [{}, {}] differs from member intersection [{lo}, {hi}]",
                        item.angle_range.lo, item.angle_range.hi
                    ),
                );
            }
            if (item.exec_angle - item.angle_range.midpoint()).abs() > ANGLE_TOLERANCE {
                push(
                    ConstraintId::Cluster,
                    None,
                    format!("execution angle {} is not the range midpoint", item.exec_angle),
                );
            }
            let weight: u64 = opps
                .iter()
                .map(|o| scenario.weight_of(o.task) as u64)
                .sum();
            if weight != item.weight {
                push(
                    ConstraintId::Cluster,
                    None,
                    format!("weight {} differs from member sum {weight}", item.weight),
                );
            }
            if item.members.len() > 1 && item.window.len() > delta_t {
                push(
                    ConstraintId::Cluster,
                    None,
                    format!("cluster spans {} s, more than {delta_t} s", item.window.len()),
                );
            }
        }

        for (pos, pair) in items.windows(2).enumerate() {
            if !setup_gap_ok(&pair[0], &pair[1], orbit) {
                let required = orbit.setup_time + orbit.slew_seconds(pair[0].exec_angle, pair[1].exec_angle);
                out.push(Violation {
                    constraint: ConstraintId::SetupGap,
                    orbit: Some(orbit_id),
                    position: Some(pos + 1),
                    task: None,
                    detail: format!(
                        "gap {} s shorter than required {required} s",
                        pair[1].window.start - pair[0].window.end
                    ),
                });
            }
        }
        if structurally_ok {
            let usage = orbit_usage(items, orbit);
            let mut push = |constraint, detail| {
                out.push(Violation {
                    constraint,
                    orbit: Some(orbit_id),
                    position: None,
                    task: None,
                    detail,
                })
            };
            if usage.energy > orbit.energy_capacity + RESOURCE_TOLERANCE {
                push(
                    ConstraintId::Energy,
                    format!("energy {} exceeds {}", usage.energy, orbit.energy_capacity),
                );
            }
            if usage.memory > orbit.memory_capacity + RESOURCE_TOLERANCE {
                push(
                    ConstraintId::Memory,
                    format!("memory {} exceeds {}", usage.memory, orbit.memory_capacity),
                );
            }
            if usage.openings > orbit.max_openings as usize {
                push(
                    ConstraintId::Openings,
                    format!("{} openings exceed {}", usage.openings, orbit.max_openings),
                );
            }
        }
    }
    out.sort();
    out
}
