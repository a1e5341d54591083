//! JSON scenario and schedule documents.
//!
//! A scenario document has the top-level keys `meta`, `orbits`, `tasks` and
//! `opportunities`. A schedule document adds a `schedule` key listing the
//! sensor openings of each orbit. Unknown keys are rejected everywhere.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    AngleRange, ModelError, Opportunity, OppId, Orbit, OrbitId, Scenario, Schedule, ScheduledItem,
    TaskId, TaskSpec, TimeWindow,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported format version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error(transparent)]
    Invalid(#[from] ModelError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for FormatError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            return FormatError::Io(e.into());
        }
        FormatError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaDoc {
    format: u32,
    horizon_seconds: i64,
    max_cluster_duration: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskDoc {
    id: TaskId,
    weight: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OrbitDoc {
    id: OrbitId,
    memory_capacity: f64,
    memory_rate: f64,
    energy_capacity: f64,
    obs_energy_rate: f64,
    slew_energy_rate: f64,
    slew_velocity: f64,
    setup_time: f64,
    max_openings: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OppDoc {
    task: TaskId,
    orbit: OrbitId,
    window: [i64; 2],
    angle_range: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ItemDoc {
    orbit: OrbitId,
    opportunities: Vec<OppId>,
    tasks: Vec<TaskId>,
    window: [i64; 2],
    angle_range: [f64; 2],
    exec_angle: f64,
    weight: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    meta: MetaDoc,
    orbits: Vec<OrbitDoc>,
    tasks: Vec<TaskDoc>,
    opportunities: Vec<OppDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schedule: Option<Vec<ItemDoc>>,
}

impl ScenarioDoc {
    fn from_scenario(s: &Scenario) -> Self {
        Self {
            meta: MetaDoc {
                format: FORMAT_VERSION,
                horizon_seconds: s.horizon_seconds(),
                max_cluster_duration: s.max_cluster_duration(),
            },
            orbits: s
                .orbits()
                .iter()
                .map(|o| OrbitDoc {
                    id: o.id,
                    memory_capacity: o.memory_capacity,
                    memory_rate: o.memory_rate,
                    energy_capacity: o.energy_capacity,
                    obs_energy_rate: o.obs_energy_rate,
                    slew_energy_rate: o.slew_energy_rate,
                    slew_velocity: o.slew_velocity,
                    setup_time: o.setup_time,
                    max_openings: o.max_openings,
                })
                .collect(),
            tasks: s
                .tasks()
                .iter()
                .map(|t| TaskDoc {
                    id: t.id,
                    weight: t.weight,
                })
                .collect(),
            opportunities: s
                .opportunities()
                .iter()
                .map(|o| OppDoc {
                    task: o.task,
                    orbit: o.orbit,
                    window: [o.window.start, o.window.end],
                    angle_range: [o.angle_range.lo, o.angle_range.hi],
                })
                .collect(),
            schedule: None,
        }
    }

    fn to_scenario(&self) -> Result<Scenario, FormatError> {
        if self.meta.format != FORMAT_VERSION {
            return Err(FormatError::Version(self.meta.format));
        }
        let tasks = self
            .tasks
            .iter()
            .map(|t| TaskSpec {
                id: t.id,
                weight: t.weight,
            })
            .collect();
        let orbits = self
            .orbits
            .iter()
            .map(|o| Orbit {
                id: o.id,
                memory_capacity: o.memory_capacity,
                memory_rate: o.memory_rate,
                energy_capacity: o.energy_capacity,
                obs_energy_rate: o.obs_energy_rate,
                slew_energy_rate: o.slew_energy_rate,
                slew_velocity: o.slew_velocity,
                setup_time: o.setup_time,
                max_openings: o.max_openings,
            })
            .collect();
        let opportunities = self
            .opportunities
            .iter()
            .map(|o| Opportunity {
                task: o.task,
                orbit: o.orbit,
                window: TimeWindow::new(o.window[0], o.window[1]),
                angle_range: AngleRange::new(o.angle_range[0], o.angle_range[1]),
            })
            .collect();
        Ok(Scenario::new(
            tasks,
            orbits,
            opportunities,
            self.meta.horizon_seconds,
            self.meta.max_cluster_duration,
        )?)
    }
}

fn write_doc<W: Write>(doc: &ScenarioDoc, mut sink: W) -> Result<(), FormatError> {
    serde_json::to_writer_pretty(&mut sink, doc)?;
    sink.write_all(b"\n")?;
    Ok(())
}

fn read_doc<R: Read>(mut source: R) -> Result<ScenarioDoc, FormatError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_scenario<W: Write>(scenario: &Scenario, sink: W) -> Result<(), FormatError> {
    write_doc(&ScenarioDoc::from_scenario(scenario), sink)
}

pub fn load_scenario<R: Read>(source: R) -> Result<Scenario, FormatError> {
    read_doc(source)?.to_scenario()
}

pub fn scenario_to_string(scenario: &Scenario) -> String {
    let mut buf = Vec::new();
    save_scenario(scenario, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

pub fn save_schedule<W: Write>(
    scenario: &Scenario,
    schedule: &Schedule,
    sink: W,
) -> Result<(), FormatError> {
    let mut doc = ScenarioDoc::from_scenario(scenario);
    doc.schedule = Some(
        schedule
            .iter()
            .map(|(orbit, item)| ItemDoc {
                orbit,
                opportunities: item.members.clone(),
                tasks: item.member_task_ids(scenario).collect(),
                window: [item.window.start, item.window.end],
                angle_range: [item.angle_range.lo, item.angle_range.hi],
                exec_angle: item.exec_angle,
                weight: item.weight,
            })
            .collect(),
    );
    write_doc(&doc, sink)
}

/// Loads a schedule document. The scenario part is fully validated; the
/// openings are taken as written so that [`crate::model::validate`] can
/// report any inconsistency.
pub fn load_schedule<R: Read>(source: R) -> Result<(Scenario, Schedule), FormatError> {
    let doc = read_doc(source)?;
    let scenario = doc.to_scenario()?;
    let items = doc.schedule.ok_or_else(|| {
        FormatError::Invalid(ModelError::InvalidScenario {
            field: "schedule".into(),
            reason: "missing".into(),
        })
    })?;
    let n = scenario.n_orbits();
    let mut orbits = vec![Vec::new(); n];
    for (k, it) in items.into_iter().enumerate() {
        if it.orbit.index() >= n {
            return Err(FormatError::Invalid(ModelError::InvalidScenario {
                field: format!("schedule[{k}].orbit"),
                reason: format!("unknown orbit {}", it.orbit),
            }));
        }
        for (m, &opp) in it.opportunities.iter().enumerate() {
            let valid = scenario.opportunities().get(opp.index());
            let expected = valid.map(|o| o.task);
            if expected != it.tasks.get(m).copied() {
                return Err(FormatError::Invalid(ModelError::InvalidScenario {
                    field: format!("schedule[{k}].tasks"),
                    reason: format!("entry {m} does not match opportunity {opp}"),
                }));
            }
        }
        if it.tasks.len() != it.opportunities.len() {
            return Err(FormatError::Invalid(ModelError::InvalidScenario {
                field: format!("schedule[{k}].tasks"),
                reason: "length differs from opportunities".into(),
            }));
        }
        orbits[it.orbit.index()].push(ScheduledItem {
            orbit: it.orbit,
            members: it.opportunities,
            window: TimeWindow::new(it.window[0], it.window[1]),
            angle_range: AngleRange::new(it.angle_range[0], it.angle_range[1]),
            exec_angle: it.exec_angle,
            weight: it.weight,
        });
    }
    Ok((scenario, Schedule::from_orbit_items(orbits)))
}
