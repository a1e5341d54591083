//! Cluster-task construction.
//!
//! Tasks observed by one opening must share a slewing angle (their angle
//! ranges intersect) and the merged window must not exceed the scenario's
//! maximum continuous observation. The resource test compares the weighted
//! energy and memory of executing two openings separately against executing
//! them as one merged opening.

use thiserror::Error;

use crate::model::{
    gap_ok, sort_members, AngleRange, OppId, Orbit, Scenario, ScheduledItem, TimeWindow, Usage,
    ANGLE_TOLERANCE,
};

/// Lower bound applied to both resource weights.
pub const WEIGHT_FLOOR: f64 = 0.01;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClusterError {
    #[error("cannot intersect an empty list of angle ranges")]
    EmptyInput,
}

/// Intersects angle ranges componentwise.
///
/// Returns `Ok(None)` when the ranges share no angle. Ranges that only touch
/// (within [`ANGLE_TOLERANCE`]) intersect in a single point.
pub fn intersect_ranges<I>(ranges: I) -> Result<Option<AngleRange>, ClusterError>
where
    I: IntoIterator<Item = AngleRange>,
{
    let mut iter = ranges.into_iter();
    let first = iter.next().ok_or(ClusterError::EmptyInput)?;
    let (lo, hi) = iter.fold((first.lo, first.hi), |(lo, hi), r| (lo.max(r.lo), hi.min(r.hi)));
    Ok(close_range(lo, hi))
}

fn close_range(lo: f64, hi: f64) -> Option<AngleRange> {
    if lo > hi + ANGLE_TOLERANCE {
        None
    } else if lo > hi {
        let mid = 0.5 * (lo + hi);
        Some(AngleRange::new(mid, mid))
    } else {
        Some(AngleRange::new(lo, hi))
    }
}

/// Smallest window covering every input window. `None` for empty input.
pub fn merge_windows<I>(windows: I) -> Option<TimeWindow>
where
    I: IntoIterator<Item = TimeWindow>,
{
    windows.into_iter().reduce(|a, b| {
        TimeWindow::new(a.start.min(b.start), a.end.max(b.end))
    })
}

/// Relative importance of energy and memory on one orbit, taken from the
/// fraction of each already consumed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResourceWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl ResourceWeights {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    /// `alpha = max(ε, ConE/E)`, `beta = max(ε, ConW/W)`, both capped at 1.
    pub fn from_usage(usage: &Usage, orbit: &Orbit) -> Self {
        Self {
            alpha: floored_ratio(usage.energy, orbit.energy_capacity),
            beta: floored_ratio(usage.memory, orbit.memory_capacity),
        }
    }

    /// Weights of an orbit with nothing consumed yet.
    pub fn floor() -> Self {
        Self::new(WEIGHT_FLOOR, WEIGHT_FLOOR)
    }
}

fn floored_ratio(used: f64, capacity: f64) -> f64 {
    if capacity <= 0.0 {
        return 1.0;
    }
    (used / capacity).clamp(WEIGHT_FLOOR, 1.0)
}

/// Energy and memory of two openings executed separately (`en`, `wn`) and
/// merged (`ec`, `wc`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterCost {
    pub en: f64,
    pub wn: f64,
    pub ec: f64,
    pub wc: f64,
}

pub fn resource_delta(
    window_i: TimeWindow,
    angle_i: f64,
    window_h: TimeWindow,
    angle_h: f64,
    merged: TimeWindow,
    merged_angle: f64,
    orbit: &Orbit,
) -> ClusterCost {
    let separate = (window_i.len() + window_h.len()) as f64;
    let joined = merged.len() as f64;
    ClusterCost {
        en: orbit.obs_energy_rate * separate
            + orbit.slew_energy_rate * orbit.slew_seconds(angle_i, angle_h),
        wn: orbit.memory_rate * separate,
        ec: orbit.obs_energy_rate * joined
            + orbit.slew_energy_rate * merged_angle.abs() / orbit.slew_velocity,
        wc: orbit.memory_rate * joined,
    }
}

/// Strict weighted comparison: merging must save resources.
#[inline]
pub fn worthwhile(cost: &ClusterCost, weights: &ResourceWeights) -> bool {
    weights.alpha * cost.ec + weights.beta * cost.wc < weights.alpha * cost.en + weights.beta * cost.wn
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClusterRejection {
    /// No common slewing angle.
    Angle,
    /// Merged window longer than the maximum continuous observation.
    Duration,
    /// Merging does not save weighted resources.
    Worth,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TryClusterError {
    #[error("cluster rejected: {0:?}")]
    Rejected(ClusterRejection),
    #[error("opportunity {opp} is on orbit {opp_orbit}, item is on orbit {item_orbit}")]
    OrbitMismatch {
        opp: OppId,
        opp_orbit: u32,
        item_orbit: u32,
    },
    #[error("task of opportunity {0} is already a member of the item")]
    AlreadyMember(OppId),
}

/// Merges `opp` into `item` if the angle ranges intersect and the merged
/// window fits the maximum duration. The resource test is not applied.
pub fn merge_feasible(
    item: &ScheduledItem,
    opp: OppId,
    scenario: &Scenario,
) -> Result<ScheduledItem, TryClusterError> {
    let o = scenario.opportunity(opp);
    if o.orbit != item.orbit {
        return Err(TryClusterError::OrbitMismatch {
            opp,
            opp_orbit: o.orbit.0,
            item_orbit: item.orbit.0,
        });
    }
    if item.contains_task(scenario, o.task) {
        return Err(TryClusterError::AlreadyMember(opp));
    }
    let lo = item.angle_range.lo.max(o.angle_range.lo);
    let hi = item.angle_range.hi.min(o.angle_range.hi);
    let angle_range =
        close_range(lo, hi).ok_or(TryClusterError::Rejected(ClusterRejection::Angle))?;
    let window = TimeWindow::new(
        item.window.start.min(o.window.start),
        item.window.end.max(o.window.end),
    );
    if window.len() > scenario.max_cluster_duration() {
        return Err(TryClusterError::Rejected(ClusterRejection::Duration));
    }
    let mut members = Vec::with_capacity(item.members.len() + 1);
    members.extend_from_slice(&item.members);
    members.push(opp);
    sort_members(scenario, &mut members);
    Ok(ScheduledItem {
        orbit: item.orbit,
        members,
        window,
        angle_range,
        exec_angle: angle_range.midpoint(),
        weight: item.weight + scenario.weight_of(o.task) as u64,
    })
}

/// Clusters an opportunity into an existing opening.
///
/// The existing opening is treated as a single pseudo-task (its current
/// window and execution angle) for the resource test against the incoming
/// opportunity (its window and range midpoint). The test only applies when
/// the two could also be observed one after the other; a merge that makes
/// setup-conflicting tasks jointly observable is always accepted.
pub fn try_cluster(
    item: &ScheduledItem,
    opp: OppId,
    scenario: &Scenario,
    weights: &ResourceWeights,
) -> Result<ScheduledItem, TryClusterError> {
    let merged = merge_feasible(item, opp, scenario)?;
    let o = scenario.opportunity(opp);
    let orbit = scenario.orbit(item.orbit);
    let theta = o.angle_range.midpoint();
    let separable = if item.window.start <= o.window.start {
        gap_ok(item.window, item.exec_angle, o.window, theta, orbit)
    } else {
        gap_ok(o.window, theta, item.window, item.exec_angle, orbit)
    };
    if !separable {
        return Ok(merged);
    }
    let cost = resource_delta(
        item.window,
        item.exec_angle,
        o.window,
        o.angle_range.midpoint(),
        merged.window,
        merged.exec_angle,
        scenario.orbit(item.orbit),
    );
    if worthwhile(&cost, weights) {
        Ok(merged)
    } else {
        Err(TryClusterError::Rejected(ClusterRejection::Worth))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::scenario_with;
    use crate::model::{validate, OrbitId, Schedule};
    use proptest::prelude::*;

    fn r(lo: f64, hi: f64) -> AngleRange {
        AngleRange::new(lo, hi)
    }

    /// Degree-grid membership oracle for a finite intersection.
    fn grid_intersection(ranges: &[AngleRange]) -> Option<(f64, f64)> {
        let pts: Vec<f64> = (-400..=400)
            .map(|k| k as f64 * 0.1)
            .filter(|x| ranges.iter().all(|rg| rg.lo <= *x && *x <= rg.hi))
            .collect();
        Some((*pts.first()?, *pts.last()?))
    }

    #[test]
    fn intersect_examples() {
        assert_eq!(intersect_ranges([r(-5.0, 10.0)]).unwrap(), Some(r(-5.0, 10.0)));
        assert_eq!(
            intersect_ranges([r(-5.0, 10.0), r(0.0, 20.0)]).unwrap(),
            Some(r(0.0, 10.0))
        );
        let three = [r(-5.0, 10.0), r(0.0, 20.0), r(8.0, 9.0)];
        assert_eq!(grid_intersection(&three), Some((8.0, 9.0)));
        assert_eq!(intersect_ranges(three).unwrap(), Some(r(8.0, 9.0)));
        let disjoint = [r(0.0, 5.0), r(6.0, 9.0)];
        assert_eq!(grid_intersection(&disjoint), None);
        assert_eq!(intersect_ranges(disjoint).unwrap(), None);
        assert_eq!(
            intersect_ranges(std::iter::empty()),
            Err(ClusterError::EmptyInput)
        );
    }

    #[test]
    fn merge_examples() {
        let w = |a, b| TimeWindow::new(a, b);
        assert_eq!(merge_windows([w(0, 10)]), Some(w(0, 10)));
        assert_eq!(merge_windows([w(0, 10), w(20, 30)]), Some(w(0, 30)));
        assert_eq!(merge_windows([w(5, 8), w(0, 3), w(7, 12)]), Some(w(0, 12)));
        assert_eq!(merge_windows(std::iter::empty()), None);
    }

    #[test]
    fn resource_delta_examples() {
        let orbit = Orbit::reference(OrbitId(0));
        let c = resource_delta(
            TimeWindow::new(0, 10),
            10.0,
            TimeWindow::new(20, 30),
            20.0,
            TimeWindow::new(0, 30),
            15.0,
            &orbit,
        );
        assert_eq!(c, ClusterCost { en: 50.0, wn: 20.0, ec: 45.0, wc: 30.0 });

        let z = TimeWindow::new(5, 5);
        let c = resource_delta(z, 0.0, z, 0.0, z, 0.0, &orbit);
        assert_eq!(c, ClusterCost { en: 0.0, wn: 0.0, ec: 0.0, wc: 0.0 });

        let c = resource_delta(
            TimeWindow::new(0, 10),
            0.0,
            TimeWindow::new(10, 20),
            0.0,
            TimeWindow::new(0, 20),
            0.0,
            &orbit,
        );
        assert_eq!(c, ClusterCost { en: 20.0, wn: 20.0, ec: 20.0, wc: 20.0 });
    }

    #[test]
    fn worthwhile_examples() {
        let c = ClusterCost { en: 50.0, wn: 20.0, ec: 45.0, wc: 30.0 };
        assert!(!worthwhile(&c, &ResourceWeights::new(0.5, 0.5)));
        assert!(worthwhile(&c, &ResourceWeights::new(0.9, 0.01)));
        let eq = ClusterCost { en: 10.0, wn: 7.0, ec: 10.0, wc: 7.0 };
        assert!(!worthwhile(&eq, &ResourceWeights::new(0.3, 0.6)));
    }

    #[test]
    fn weights_are_floored() {
        let orbit = Orbit::reference(OrbitId(0));
        let w = ResourceWeights::from_usage(&Usage::default(), &orbit);
        assert_eq!(w, ResourceWeights::floor());
        let w = ResourceWeights::from_usage(
            &Usage { energy: 750.0, memory: 100.0, openings: 3 },
            &orbit,
        );
        assert_eq!(w, ResourceWeights::new(0.5, 0.1));
    }

    fn pair_scenario(b: (i64, i64), b_range: (f64, f64)) -> Scenario {
        scenario_with(
            &[4, 6],
            1,
            &[(0, 0, (0, 10), (5.0, 15.0)), (1, 0, b, b_range)],
        )
    }

    #[test]
    fn try_cluster_rejects_disjoint_angles() {
        let s = pair_scenario((20, 30), (16.0, 25.0));
        let item = ScheduledItem::single(&s, OppId(0));
        let got = try_cluster(&item, OppId(1), &s, &ResourceWeights::floor());
        assert_eq!(got, Err(TryClusterError::Rejected(ClusterRejection::Angle)));
    }

    #[test]
    fn try_cluster_rejects_long_span() {
        let s = pair_scenario((120, 130), (5.0, 15.0));
        let item = ScheduledItem::single(&s, OppId(0));
        let got = try_cluster(&item, OppId(1), &s, &ResourceWeights::new(0.9, 0.01));
        assert_eq!(got, Err(TryClusterError::Rejected(ClusterRejection::Duration)));
    }

    #[test]
    fn try_cluster_worked_pair() {
        // θ_i = 10 (range [0,20]), θ_h = 20 (range [10,30]); intersection [10,20].
        let s = scenario_with(
            &[4, 6],
            1,
            &[(0, 0, (0, 10), (0.0, 20.0)), (1, 0, (20, 30), (10.0, 30.0))],
        );
        let item = ScheduledItem::single(&s, OppId(0));
        let merged = try_cluster(&item, OppId(1), &s, &ResourceWeights::new(0.9, 0.01)).unwrap();
        assert_eq!(merged.window, TimeWindow::new(0, 30));
        assert_eq!(merged.angle_range, AngleRange::new(10.0, 20.0));
        assert_eq!(merged.exec_angle, 15.0);
        assert_eq!(merged.weight, 10);
        assert_eq!(merged.members, vec![OppId(0), OppId(1)]);
        let sched = Schedule::from_orbit_items(vec![vec![merged]]);
        assert!(validate(&sched, &s).is_empty());
    }

    /// The worked pair cannot be observed one after the other (gap 10 < 10 + 30),
    /// so merging is accepted even where the weighted cost comparison fails.
    #[test]
    fn try_cluster_exclusive_pair_skips_worth() {
        let s = scenario_with(
            &[4, 6],
            1,
            &[(0, 0, (0, 10), (0.0, 20.0)), (1, 0, (20, 30), (10.0, 30.0))],
        );
        let item = ScheduledItem::single(&s, OppId(0));
        let cost = resource_delta(
            item.window,
            item.exec_angle,
            TimeWindow::new(20, 30),
            20.0,
            TimeWindow::new(0, 30),
            15.0,
            s.orbit(OrbitId(0)),
        );
        assert!(!worthwhile(&cost, &ResourceWeights::new(0.5, 0.5)));
        assert!(try_cluster(&item, OppId(1), &s, &ResourceWeights::new(0.5, 0.5)).is_ok());
    }

    /// Separable pair (gap 50 >= 10 + 30) whose merge costs more than it saves.
    #[test]
    fn try_cluster_separable_pair_rejects_on_worth() {
        let s = scenario_with(
            &[4, 6],
            1,
            &[(0, 0, (0, 10), (0.0, 20.0)), (1, 0, (60, 70), (10.0, 30.0))],
        );
        let item = ScheduledItem::single(&s, OppId(0));
        for w in [ResourceWeights::new(0.5, 0.5), ResourceWeights::new(0.9, 0.01), ResourceWeights::floor()] {
            assert_eq!(
                try_cluster(&item, OppId(1), &s, &w),
                Err(TryClusterError::Rejected(ClusterRejection::Worth))
            );
        }
        assert!(merge_feasible(&item, OppId(1), &s).is_ok());
    }

    #[test]
    fn try_cluster_argument_errors() {
        let s = scenario_with(
            &[4, 6],
            2,
            &[(0, 0, (0, 10), (0.0, 20.0)), (1, 1, (20, 30), (10.0, 30.0))],
        );
        let item = ScheduledItem::single(&s, OppId(0));
        assert!(matches!(
            try_cluster(&item, OppId(1), &s, &ResourceWeights::floor()),
            Err(TryClusterError::OrbitMismatch { .. })
        ));
        assert_eq!(
            try_cluster(&item, OppId(0), &s, &ResourceWeights::floor()),
            Err(TryClusterError::AlreadyMember(OppId(0)))
        );
    }

    fn arb_range() -> impl Strategy<Value = AngleRange> {
        (-33.0f64..33.0, 0.0f64..20.0).prop_map(|(lo, w)| AngleRange::new(lo, (lo + w).min(33.0)))
    }

    proptest! {
        #[test]
        fn intersection_laws(a in arb_range(), b in arb_range(), c in arb_range()) {
            let ab = intersect_ranges([a, b]).unwrap();
            let ba = intersect_ranges([b, a]).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert_eq!(intersect_ranges([a, a]).unwrap(), Some(a));
            let left = ab.and_then(|x| intersect_ranges([x, c]).unwrap());
            let right = intersect_ranges([b, c]).unwrap().and_then(|x| intersect_ranges([a, x]).unwrap());
            prop_assert_eq!(left, right);
            if let Some(x) = intersect_ranges([a, b, c]).unwrap() {
                prop_assert!(a.contains(&x) && b.contains(&x) && c.contains(&x));
            }
        }

        #[test]
        fn merged_window_covers_inputs(ws in prop::collection::vec((0i64..1000, 1i64..100), 1..6)) {
            let wins: Vec<_> = ws.iter().map(|&(s, l)| TimeWindow::new(s, s + l)).collect();
            let m = merge_windows(wins.iter().copied()).unwrap();
            for w in &wins {
                prop_assert!(m.contains(w));
            }
            prop_assert!(m.len() >= wins.iter().map(|w| w.len()).max().unwrap());
        }

        #[test]
        fn memory_cost_tracks_span(si in 0i64..200, li in 0i64..60, sh in 0i64..200, lh in 0i64..60, rate in 0.1f64..3.0) {
            let mut orbit = Orbit::reference(OrbitId(0));
            orbit.memory_rate = rate;
            let wi = TimeWindow::new(si, si + li);
            let wh = TimeWindow::new(sh, sh + lh);
            let u = merge_windows([wi, wh]).unwrap();
            let c = resource_delta(wi, 3.0, wh, -4.0, u, 1.0, &orbit);
            prop_assert_eq!(c.wc >= c.wn, u.len() >= li + lh);
        }

        #[test]
        fn widening_duration_flips_only_duration(start in 100i64..400, len in 5i64..40) {
            let s = scenario_with(&[4, 6], 1, &[(0, 0, (0, 10), (0.0, 20.0)), (1, 0, (start, start + len), (5.0, 25.0))]);
            let item = ScheduledItem::single(&s, OppId(0));
            let w = ResourceWeights::new(0.9, 0.01);
            prop_assume!(try_cluster(&item, OppId(1), &s, &w) == Err(TryClusterError::Rejected(ClusterRejection::Duration)));
            let wide = Scenario::new(s.tasks().to_vec(), s.orbits().to_vec(), s.opportunities().to_vec(), s.horizon_seconds(), start + len).unwrap();
            let got = try_cluster(&item, OppId(1), &wide, &w);
            prop_assert!(matches!(got, Ok(_) | Err(TryClusterError::Rejected(ClusterRejection::Worth))));
        }

        #[test]
        fn successful_cluster_validates(a in arb_range(), b in arb_range(), sa in 0i64..100, sb in 0i64..100, la in 1i64..40, lb in 1i64..40) {
            let s = scenario_with(&[3, 5], 1, &[(0, 0, (sa, sa + la), (a.lo, a.hi)), (1, 0, (sb, sb + lb), (b.lo, b.hi))]);
            let item = ScheduledItem::single(&s, OppId(0));
            if let Ok(m) = try_cluster(&item, OppId(1), &s, &ResourceWeights::new(0.5, 0.5)) {
                let sched = Schedule::from_orbit_items(vec![vec![m]]);
                prop_assert!(validate(&sched, &s).is_empty());
            }
        }
    }
}
