use satsched_core::annealer::AnnealParams;
use satsched_core::baselines::{classic_sa, hpfs, run_variant, ClassicParams, VariantMode};
use satsched_core::model::{setup_gap_ok, validate, OppId, Scenario, ScheduledItem};
use satsched_core::oracle::{exact_solve, OracleLimits};
use satsched_core::scenario::{generate, scenario_to_string, GeneratorConfig, MAX_SLEW_ANGLE};

const GOLDEN: &str = include_str!("data/golden_tiny.json");

#[test]
fn golden_tiny_scenario() {
    let s = generate(&GeneratorConfig::tiny(5, 7)).unwrap();
    assert_eq!(scenario_to_string(&s), GOLDEN);
}

#[test]
fn same_seed_same_scenario() {
    let cfg = GeneratorConfig::wide(200, 99);
    assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
    let other = GeneratorConfig { seed: 100, ..cfg };
    assert_ne!(generate(&other).unwrap(), generate(&GeneratorConfig::wide(200, 99)).unwrap());
}

#[test]
fn visibility_and_window_ratios() {
    let (mut en, mut tn, mut n) = (0usize, 0usize, 0usize);
    for seed in 0..50 {
        let s = generate(&GeneratorConfig::wide(100, seed)).unwrap();
        n += s.n_tasks();
        en += s.visible_tasks();
        tn += s.opportunities().len();
    }
    let en_n = en as f64 / n as f64;
    let tn_en = tn as f64 / en as f64;
    assert!((0.85..=0.97).contains(&en_n), "EN/N = {en_n}");
    assert!((2.2..=3.2).contains(&tn_en), "TN/EN = {tn_en}");
}

#[test]
fn angles_within_slew_limit() {
    for seed in 0..20 {
        for cfg in [GeneratorConfig::wide(150, seed), GeneratorConfig::dense(150, seed)] {
            let s = generate(&cfg).unwrap();
            for o in s.opportunities() {
                assert!(o.angle_range.lo >= -MAX_SLEW_ANGLE && o.angle_range.hi <= MAX_SLEW_ANGLE);
                assert!(o.angle_range.lo <= o.angle_range.hi);
                assert!(o.window.start >= 0 && o.window.end <= s.horizon_seconds());
                let w = s.weight_of(o.task);
                assert!((2..=10).contains(&w));
            }
        }
    }
}

/// Pairs of opportunities on one orbit whose windows overlap, and pairs that
/// break the setup gap when both are taken alone.
fn pair_counts(s: &Scenario) -> (usize, usize) {
    let (mut overlap, mut conflict) = (0, 0);
    for orbit in s.orbits() {
        let opps = s.opportunities_on_orbit(orbit.id);
        for (i, &a) in opps.iter().enumerate() {
            for &b in &opps[i + 1..] {
                let (oa, ob) = (s.opportunity(a), s.opportunity(b));
                if oa.window.overlaps(&ob.window) {
                    overlap += 1;
                }
                let (x, y) = single_pair(s, a, b);
                if !setup_gap_ok(&x, &y, orbit) {
                    conflict += 1;
                }
            }
        }
    }
    (overlap, conflict)
}

fn single_pair(s: &Scenario, a: OppId, b: OppId) -> (ScheduledItem, ScheduledItem) {
    let (x, y) = (ScheduledItem::single(s, a), ScheduledItem::single(s, b));
    if x.window.start <= y.window.start {
        (x, y)
    } else {
        (y, x)
    }
}

#[test]
fn dense_box_is_denser() {
    let (mut od, mut ow, mut cd, mut cw) = (0, 0, 0, 0);
    for seed in 0..50 {
        let (o, c) = pair_counts(&generate(&GeneratorConfig::dense(100, seed)).unwrap());
        od += o;
        cd += c;
        let (o, c) = pair_counts(&generate(&GeneratorConfig::wide(100, seed)).unwrap());
        ow += o;
        cw += c;
    }
    assert!(od > ow, "overlaps dense {od} wide {ow}");
    assert!(cd > cw, "conflicts dense {cd} wide {cw}");
}

#[test]
fn invalid_config_rejected() {
    let cfg = GeneratorConfig {
        window_len_bounds: [10, 100_000],
        ..GeneratorConfig::default()
    };
    assert!(generate(&cfg).is_err());
    let cfg = GeneratorConfig {
        angle_range_halfwidth_bounds: [2.0, 40.0],
        ..GeneratorConfig::default()
    };
    assert!(generate(&cfg).is_err());
}

/// The exact optimum bounds every heuristic on 200 tiny instances.
#[test]
fn oracle_bounds_heuristics_on_200_instances() {
    for seed in 0..200u64 {
        let n = 4 + (seed % 9) as usize;
        let s = generate(&GeneratorConfig::tiny(n, seed)).unwrap();
        let opt = exact_solve(&s, &OracleLimits::default()).unwrap();
        assert!(validate(&opt.schedule, &s).is_empty());
        let flat = exact_solve(&s, &OracleLimits { clustering: false, ..Default::default() }).unwrap();
        assert!(flat.profit <= opt.profit, "seed {seed}");
        let params = AnnealParams::default().with_seed(seed).with_max_itr(500);
        let mut profits = vec![hpfs(&s).profit()];
        for mode in [VariantMode::Dtc, VariantMode::Stc, VariantMode::Nontc] {
            profits.push(run_variant(&s, mode, &params).unwrap().best.profit());
        }
        let classic = ClassicParams {
            max_itr: Some(500),
            rng_seed: seed,
            ..Default::default()
        };
        profits.push(classic_sa(&s, &classic).unwrap().best.profit());
        for p in profits {
            assert!(p <= opt.profit, "seed {seed}: {p} > {}", opt.profit);
        }
    }
}
