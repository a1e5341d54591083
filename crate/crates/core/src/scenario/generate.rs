//! Synthetic scenario generation.
//!
//! Orbits are index slots with identical resource parameters; their passes
//! are spread evenly over the horizon. A target's window on a pass is placed
//! by latitude, and its slewing angle by longitude relative to the pass's
//! ground track, so targets packed in a small box get windows that crowd in
//! time and angle.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::model::{
    AngleRange, ModelError, Opportunity, Orbit, OrbitId, Scenario, TaskId, TaskSpec, TimeWindow,
};

/// Lateral slewing limit in degrees.
pub const MAX_SLEW_ANGLE: f64 = 33.0;

/// Seconds a pass spends crossing the full latitude range.
const PASS_SECONDS: f64 = 3000.0;
const PASS_MARGIN: i64 = 300;
const TIME_JITTER: f64 = 30.0;
/// Degrees of slewing per degree of longitude offset from the ground track.
const ANGLE_PER_LON: f64 = 0.44;
const ANGLE_JITTER: f64 = 3.0;
/// Ground-track shift between consecutive orbit slots, in degrees of longitude.
const TRACK_SHIFT: f64 = 25.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_targets: usize,
    pub lat_bounds: [f64; 2],
    pub lon_bounds: [f64; 2],
    pub n_orbits: usize,
    pub horizon_seconds: i64,
    pub windows_per_visible_target: f64,
    pub visibility_prob: f64,
    pub window_len_bounds: [i64; 2],
    pub angle_range_halfwidth_bounds: [f64; 2],
    pub weight_bounds: [u32; 2],
    pub max_cluster_duration: i64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_targets: 100,
            lat_bounds: [-30.0, 60.0],
            lon_bounds: [0.0, 150.0],
            n_orbits: 56,
            horizon_seconds: 86_400,
            windows_per_visible_target: 2.8,
            visibility_prob: 0.92,
            window_len_bounds: [10, 30],
            angle_range_halfwidth_bounds: [2.0, 6.0],
            weight_bounds: [2, 10],
            max_cluster_duration: 120,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    /// Targets spread over a wide region.
    pub fn wide(n_targets: usize, seed: u64) -> Self {
        Self {
            n_targets,
            seed,
            ..Self::default()
        }
    }

    /// Targets packed into a small region.
    pub fn dense(n_targets: usize, seed: u64) -> Self {
        Self {
            n_targets,
            seed,
            lat_bounds: [30.0, 60.0],
            lon_bounds: [90.0, 120.0],
            ..Self::default()
        }
    }

    /// Small dense instance for the exact solver.
    pub fn tiny(n_targets: usize, seed: u64) -> Self {
        Self {
            n_orbits: 2,
            ..Self::dense(n_targets, seed)
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |field: &str, reason: &str| {
            Err(ModelError::InvalidScenario {
                field: format!("generator.{field}"),
                reason: reason.to_string(),
            })
        };
        let [la, lb] = self.lat_bounds;
        if !(-90.0..=90.0).contains(&la) || !(-90.0..=90.0).contains(&lb) || la > lb {
            return bad("lat_bounds", "must be ordered within [-90, 90]");
        }
        let [oa, ob] = self.lon_bounds;
        if !(oa.is_finite() && ob.is_finite()) || oa > ob {
            return bad("lon_bounds", "must be ordered and finite");
        }
        if self.n_orbits == 0 {
            return bad("n_orbits", "must be at least 1");
        }
        if self.horizon_seconds < 2 * PASS_MARGIN + PASS_SECONDS as i64 + 600 {
            return bad("horizon_seconds", "too short to hold one pass");
        }
        if !(self.windows_per_visible_target >= 1.0 && self.windows_per_visible_target.is_finite()) {
            return bad("windows_per_visible_target", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.visibility_prob) {
            return bad("visibility_prob", "must lie in [0, 1]");
        }
        let [wa, wb] = self.window_len_bounds;
        if wa < 1 || wa > wb {
            return bad("window_len_bounds", "must be ordered and positive");
        }
        if wb > self.horizon_seconds {
            return bad("window_len_bounds", "window longer than the horizon");
        }
        let [ha, hb] = self.angle_range_halfwidth_bounds;
        if !(ha >= 0.0 && ha <= hb && hb <= MAX_SLEW_ANGLE) {
            return bad("angle_range_halfwidth_bounds", "must be ordered within [0, 33]");
        }
        let [ga, gb] = self.weight_bounds;
        if ga < 1 || ga > gb {
            return bad("weight_bounds", "must be ordered and at least 1");
        }
        if self.max_cluster_duration < 0 {
            return bad("max_cluster_duration", "must be non-negative");
        }
        Ok(())
    }
}

fn round_millideg(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn wrap_angle(x: f64) -> f64 {
    let span = 2.0 * MAX_SLEW_ANGLE;
    (x + MAX_SLEW_ANGLE).rem_euclid(span) - MAX_SLEW_ANGLE
}

/// Generates a scenario; a pure function of the configuration.
pub fn generate(config: &GeneratorConfig) -> Result<Scenario, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let extra = Poisson::new(config.windows_per_visible_target - 1.0).ok();
    let pass_stride = (config.horizon_seconds - PASS_SECONDS as i64 - 2 * PASS_MARGIN) as f64
        / config.n_orbits as f64;
    let orbits: Vec<Orbit> = (0..config.n_orbits)
        .map(|j| Orbit::reference(OrbitId::from_index(j)))
        .collect();

    let mut tasks = Vec::with_capacity(config.n_targets);
    let mut opportunities = Vec::new();
    for i in 0..config.n_targets {
        let id = TaskId::from_index(i);
        let lat = rng.random_range(config.lat_bounds[0]..=config.lat_bounds[1]);
        let lon = rng.random_range(config.lon_bounds[0]..=config.lon_bounds[1]);
        let weight = rng.random_range(config.weight_bounds[0]..=config.weight_bounds[1]);
        tasks.push(TaskSpec { id, weight });
        if !rng.random_bool(config.visibility_prob) {
            continue;
        }
        let drawn = extra.map_or(0, |p| p.sample(&mut rng) as usize);
        let count = (1 + drawn).min(config.n_orbits);
        let mut slots = sample(&mut rng, config.n_orbits, count).into_vec();
        slots.sort_unstable();
        for j in slots {
            let pass_start = PASS_MARGIN as f64 + j as f64 * pass_stride;
            let centre = pass_start
                + (lat + 90.0) * (PASS_SECONDS / 180.0)
                + rng.random_range(-TIME_JITTER..=TIME_JITTER);
            let len = rng.random_range(config.window_len_bounds[0]..=config.window_len_bounds[1]);
            let start = (centre - len as f64 / 2.0).round() as i64;
            let start = start.clamp(0, config.horizon_seconds - len);

            let track = (j as f64 * TRACK_SHIFT).rem_euclid(360.0) - 180.0;
            let angle = wrap_angle(
                (lon - track) * ANGLE_PER_LON + rng.random_range(-ANGLE_JITTER..=ANGLE_JITTER),
            );
            let [ha, hb] = config.angle_range_halfwidth_bounds;
            let half = rng.random_range(ha..=hb);
            let lo = round_millideg((angle - half).max(-MAX_SLEW_ANGLE));
            let hi = round_millideg((angle + half).min(MAX_SLEW_ANGLE));
            opportunities.push(Opportunity {
                task: id,
                orbit: OrbitId::from_index(j),
                window: TimeWindow::new(start, start + len),
                angle_range: AngleRange::new(lo, hi),
            });
        }
    }
    Scenario::new(
        tasks,
        orbits,
        opportunities,
        config.horizon_seconds,
        config.max_cluster_duration,
    )
}
