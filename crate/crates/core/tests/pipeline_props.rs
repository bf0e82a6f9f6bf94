use std::collections::{BTreeMap, BTreeSet};

use orbcount_core::detector::CounterProfile;
use orbcount_core::energy::Activity;
use orbcount_core::pipeline::{
    run_method, run_method_detailed, summarize, sweep, Axis, Method, Named, RunOutcome,
    ScenarioConfig, TileOutcome,
};
use orbcount_core::scene::{Scene, SceneSpec, TileId};

fn small_cfg() -> ScenarioConfig {
    ScenarioConfig {
        scene: SceneSpec {
            frames_per_track: 10,
            ..SceneSpec::default()
        },
        seeds: (1..=6).collect(),
        ..ScenarioConfig::default()
    }
}

fn scene(cfg: &ScenarioConfig, seed: u64) -> Scene {
    cfg.scene_for_seed(&cfg.base_scene().unwrap(), seed)
        .unwrap()
}

fn detailed(cfg: &ScenarioConfig, seed: u64, m: Method) -> RunOutcome {
    run_method_detailed(&scene(cfg, seed), cfg, seed, m).unwrap()
}

fn mean_cmae(cfg: &ScenarioConfig, m: Method) -> f64 {
    let v: Vec<f64> = cfg
        .seeds
        .iter()
        .map(|&s| run_method(&scene(cfg, s), cfg, s, m).unwrap().cmae)
        .collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn perfect(name: &str, base: &str) -> CounterProfile {
    CounterProfile {
        name: name.into(),
        map_peak: 1.0,
        curve_width: 1e-9,
        false_positive_rate: 0.0,
        ..CounterProfile::preset(base).unwrap()
    }
}

fn transmitted(o: &RunOutcome) -> BTreeSet<TileId> {
    o.outcomes
        .iter()
        .filter(|(_, &v)| v == TileOutcome::Transmitted)
        .map(|(&k, _)| k)
        .collect()
}

#[test]
fn every_tile_has_one_outcome_and_totals_conserve() {
    let cfg = small_cfg();
    for m in Method::ALL {
        for seed in [1, 2] {
            let o = detailed(&cfg, seed, m);
            let r = &o.report;
            assert_eq!(o.outcomes.len(), o.scene.tiles.len());
            assert_eq!(o.estimates.len(), o.scene.tiles.len());
            assert_eq!(r.partition_total(), r.tiles_total);
            let mut tally: BTreeMap<TileOutcome, u64> = BTreeMap::new();
            for v in o.outcomes.values() {
                *tally.entry(*v).or_default() += 1;
            }
            let get = |k| tally.get(&k).copied().unwrap_or(0);
            assert_eq!(get(TileOutcome::Transmitted), r.transmitted, "{m}");
            assert_eq!(get(TileOutcome::SpaceCounted), r.space_counted, "{m}");
            assert_eq!(get(TileOutcome::Discarded), r.discarded, "{m}");
            assert_eq!(get(TileOutcome::RoiDropped), r.roi_dropped, "{m}");
            assert_eq!(get(TileOutcome::Deduplicated), r.deduplicated, "{m}");
            assert_eq!(get(TileOutcome::Unprocessed), r.unprocessed, "{m}");

            let sent: u64 = o
                .scene
                .tiles
                .iter()
                .filter(|t| o.outcomes[&t.id] == TileOutcome::Transmitted)
                .map(|t| t.bytes)
                .sum();
            assert_eq!(sent, r.bytes_downlinked, "{m}");
            if m != Method::Kodan {
                assert!(r.bytes_downlinked <= r.capacity_bytes, "{m}");
            }
            let ledger = &o.ledger;
            assert!((r.energy_compute_j - ledger.spent(Activity::Compute)).abs() < 1e-9);
            assert!((r.energy_downlink_j - ledger.spent(Activity::Downlink)).abs() < 1e-9);
            assert!((r.energy_capture_j - ledger.spent(Activity::Capture)).abs() < 1e-9);
            assert!((r.energy_aggregate_j - ledger.spent(Activity::Aggregate)).abs() < 1e-9);
            assert!((r.energy_total_j - ledger.spent_total()).abs() < 1e-6);
            assert!(r.energy_total_j <= ledger.budget() + 1e-6);
        }
    }
}

#[test]
fn perfect_counters_with_ample_resources_are_exact() {
    let mut cfg = small_cfg();
    cfg.counters.space = Named::Inline(perfect("perfect-space", "yolov3-tiny"));
    cfg.counters.ground = Named::Inline(perfect("perfect-ground", "yolov3"));
    cfg.energy.budget_j = Some(1e9);
    cfg.link.rate_mbps = 1e6;
    cfg.dedup.enabled = false;
    for m in Method::ALL {
        let r = detailed(&cfg, 3, m).report;
        assert_eq!(r.cmae, 0.0, "{m}");
    }
}

#[test]
fn ground_only_without_link_counts_nothing() {
    let mut cfg = small_cfg();
    cfg.link.rate_mbps = 1e-12;
    let o = detailed(&cfg, 1, Method::GroundOnly);
    assert_eq!(o.report.capacity_bytes, 0);
    assert_eq!(o.report.transmitted, 0);
    assert_eq!(o.report.cmae, 1.0);
}

#[test]
fn tiansuan_at_full_threshold_sends_like_ground_only() {
    let mut cfg = small_cfg();
    cfg.baselines.tiansuan_threshold = Some(1.0);
    for seed in 1..=3 {
        let t = detailed(&cfg, seed, Method::Tiansuan);
        let g = detailed(&cfg, seed, Method::GroundOnly);
        assert_eq!(transmitted(&t), transmitted(&g), "seed {seed}");
        assert_eq!(t.report.bytes_downlinked, g.report.bytes_downlinked);
    }
}

#[test]
fn kodan_bounds_the_rest_with_a_perfect_ground_counter() {
    let mut cfg = small_cfg();
    cfg.counters.ground = Named::Inline(perfect("perfect-ground", "yolov3"));
    cfg.downlink.conf_p = 0.0;
    cfg.downlink.conf_q = 1.0;
    cfg.roi_floor = 0.0;
    cfg.link.rate_mbps = 20.0;
    let kodan = mean_cmae(&cfg, Method::Kodan);
    for m in Method::ALL {
        let other = mean_cmae(&cfg, m);
        assert!(kodan <= other + 0.01, "kodan {kodan} vs {m} {other}");
    }
}

#[test]
fn targetfuse_sits_between_single_tier_methods() {
    let cfg = small_cfg();
    let tf = mean_cmae(&cfg, Method::TargetFuse);
    let space = mean_cmae(&cfg, Method::SpaceOnly);
    let ground = mean_cmae(&cfg, Method::GroundOnly);
    assert!(tf <= space + 0.01, "tf {tf} space {space}");
    assert!(ground <= tf + 0.01, "ground {ground} tf {tf}");
}

#[test]
fn more_energy_never_hurts_on_average() {
    let mut cfg = small_cfg();
    cfg.methods = vec![Method::TargetFuse];
    let values: Vec<String> = ["20", "60", "150", "400", "5000"]
        .map(String::from)
        .to_vec();
    let rows = sweep(&cfg, Axis::Energy, &values, 2).unwrap();
    let summary = summarize(&rows);
    assert_eq!(summary.len(), values.len());
    for w in summary.windows(2) {
        assert!(
            w[1].cmae_mean <= w[0].cmae_mean + 0.01,
            "{} -> {}",
            w[0].value,
            w[1].value
        );
    }
}

#[test]
fn lower_power_hardware_processes_more() {
    let mut cfg = small_cfg();
    cfg.methods = vec![Method::TargetFuse];
    cfg.energy.budget_j = Some(60.0);
    let values = vec!["rpi4".to_string(), "atlas".to_string()];
    let summary = summarize(&sweep(&cfg, Axis::Hardware, &values, 2).unwrap());
    assert!(summary[0].processed_mean > summary[1].processed_mean);
}

#[test]
fn compute_and_downlink_dominate_the_default_spend() {
    let cfg = small_cfg();
    for seed in 1..=3 {
        let r = detailed(&cfg, seed, Method::TargetFuse).report;
        assert!(
            r.energy_compute_j + r.energy_downlink_j > 0.6 * r.energy_total_j,
            "{r:?}"
        );
    }
}

#[test]
fn bandwidth_efficiency_is_bytes_over_cmae_gain() {
    let mut cfg = small_cfg();
    cfg.seeds = vec![1, 2, 3];
    cfg.methods = vec![Method::SpaceOnly, Method::TargetFuse, Method::GroundOnly];
    let rows = sweep(&cfg, Axis::Bandwidth, &["50".to_string()], 2).unwrap();
    let summary = summarize(&rows);
    let mean = |m: Method, f: &dyn Fn(&orbcount_core::pipeline::RunReport) -> f64| {
        let v: Vec<f64> = rows
            .iter()
            .filter(|r| r.report.method == m)
            .map(|r| f(&r.report))
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let space = mean(Method::SpaceOnly, &|r| r.cmae);
    for s in &summary {
        if s.method == Method::SpaceOnly {
            assert_eq!(s.bytes_per_cmae_reduction, None);
            continue;
        }
        let gain = space - mean(s.method, &|r| r.cmae);
        let bytes = mean(s.method, &|r| r.bytes_downlinked as f64);
        assert!(gain > 0.0);
        let got = s.bytes_per_cmae_reduction.unwrap();
        assert!(
            (got - bytes / gain).abs() <= 1e-9 * got,
            "{got} vs {}",
            bytes / gain
        );
    }
}
