//! Acceptance criteria. Each test prints one PASS/FAIL line and then asserts.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{Duration, Instant};

use orbcount_core::detector::{map_at, CounterProfile};
use orbcount_core::downlink::{
    link_capacity, throttle, Admission, ContactWindow, DownlinkPolicy, PolicyKind, ScoredTile,
};
use orbcount_core::energy::{to_micro, Activity, EnergyLedger, HardwareProfile};
use orbcount_core::pipeline::{
    cmae, run_method, run_method_detailed, sweep, write_report_csv, write_sweep_csv, Axis, Method,
    Named, ScenarioConfig,
};
use orbcount_core::scene::{generate_scene, Scene, SceneSpec, TileId};
use orbcount_core::tiling::{brute_force_tile_size, optimal_tile_size};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Written to the process stdout directly so the line survives test capture.
fn verdict(id: u32, pass: bool, detail: impl AsRef<str>) {
    let line = format!(
        "[{}] criterion {id}: {}\n",
        if pass { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).expect("stdout");
    out.flush().expect("stdout");
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn seeds() -> Vec<u64> {
    (1..=30).collect()
}

fn scenes(cfg: &ScenarioConfig) -> BTreeMap<u64, Scene> {
    let base = cfg.base_scene().unwrap();
    cfg.seeds
        .iter()
        .map(|&s| (s, cfg.scene_for_seed(&base, s).unwrap()))
        .collect()
}

#[test]
fn c01_tile_search_matches_brute_force() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let base = CounterProfile::preset("yolov3-tiny").unwrap();
    let mut ok = 0;
    let mut worst = 0u32;
    for _ in 0..100 {
        let profile = CounterProfile {
            map_peak: rng.random_range(0.05..=1.0),
            optimal_tile: rng.random_range(100..=2000),
            curve_width: rng.random_range(0.05..5.0),
            ..base.clone()
        };
        let eval = |s: u32| map_at(&profile, s as f64);
        let fast = optimal_tile_size(eval, 100, 2000, 10).unwrap();
        let oracle = brute_force_tile_size(eval, 100, 2000, 1).unwrap();
        let gap = fast.abs_diff(oracle);
        worst = worst.max(gap);
        if gap <= 10 {
            ok += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = ok == 100 && elapsed < Duration::from_secs(1);
    verdict(
        1,
        pass,
        format!("{ok}/100 within eps=10 (worst gap {worst}), {elapsed:?} < 1 s"),
    );
    assert!(pass);
}

type PlanParts = (Vec<TileId>, Vec<(TileId, u64)>, Vec<TileId>, u64);

/// Independent reading of the throttle contract: band the tiles, sort the
/// middle band, and take the longest sorted prefix that fits.
fn throttle_oracle(tiles: &[ScoredTile], p: &DownlinkPolicy, capacity: u64) -> PlanParts {
    let mut mid: Vec<&ScoredTile> = tiles
        .iter()
        .filter(|t| t.confidence >= p.conf_p && t.confidence <= p.conf_q)
        .collect();
    mid.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap()
            .then(a.bytes.cmp(&b.bytes))
            .then(a.id.cmp(&b.id))
    });
    let mut best = 0;
    for len in 0..=mid.len() {
        let total: u64 = mid[..len].iter().map(|t| t.bytes).sum();
        if total <= capacity {
            best = len;
        }
    }
    let sent: Vec<TileId> = mid[..best].iter().map(|t| t.id).collect();
    let used = mid[..best].iter().map(|t| t.bytes).sum();
    let mut space = Vec::new();
    let mut dropped = Vec::new();
    for t in tiles {
        if sent.contains(&t.id) {
            continue;
        }
        let leftover = t.confidence >= p.conf_p && t.confidence <= p.conf_q;
        if t.confidence < p.conf_p || (leftover && p.kind == PolicyKind::FixedConf) {
            dropped.push(t.id);
        } else {
            space.push((t.id, t.onboard_count));
        }
    }
    (sent, space, dropped, used)
}

fn random_tiles(rng: &mut ChaCha8Rng, n: usize) -> Vec<ScoredTile> {
    (0..n)
        .map(|i| {
            // Coarse values force confidence and size ties.
            let confidence = if rng.random_bool(0.5) {
                rng.random_range(0..=20) as f64 / 20.0
            } else {
                rng.random::<f64>()
            };
            ScoredTile {
                id: TileId(rng.random_range(0..1000) * 100 + i as u64),
                confidence,
                bytes: rng.random_range(1..=10) * 100,
                onboard_count: rng.random_range(0..20),
            }
        })
        .collect()
}

fn random_policy(rng: &mut ChaCha8Rng) -> DownlinkPolicy {
    let a: f64 = rng.random();
    let b: f64 = rng.random();
    DownlinkPolicy {
        kind: PolicyKind::ALL[rng.random_range(0..3)],
        conf_p: a.min(b),
        conf_q: a.max(b),
        ..DownlinkPolicy::default()
    }
}

#[test]
fn c02_throttle_matches_oracle_and_respects_capacity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(0..=15);
        let tiles = random_tiles(&mut rng, n);
        let policy = random_policy(&mut rng);
        let total: u64 = tiles.iter().map(|t| t.bytes).sum();
        let capacity = rng.random_range(0..=total + 100);
        let plan = throttle(&tiles, &policy, capacity as i64).unwrap();
        let (sent, space, dropped, used) = throttle_oracle(&tiles, &policy, capacity);
        if plan.transmitted != sent
            || plan.counted_in_space != space
            || plan.discarded != dropped
            || plan.bytes_used != used
        {
            mismatches += 1;
        }
    }
    let mut violations = 0;
    for i in 0..100_000 {
        let n = rng.random_range(16..=64);
        let tiles = random_tiles(&mut rng, n);
        let mut policy = random_policy(&mut rng);
        if i % 2 == 1 {
            policy.admission = Admission::Skip;
        }
        let total: u64 = tiles.iter().map(|t| t.bytes).sum();
        let capacity = rng.random_range(0..=total);
        let plan = throttle(&tiles, &policy, capacity as i64).unwrap();
        let sent_bytes: u64 = plan
            .entries
            .iter()
            .filter(|e| plan.transmitted.contains(&e.tile_id))
            .map(|e| e.bytes)
            .sum();
        if plan.bytes_used > capacity || sent_bytes != plan.bytes_used {
            violations += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = mismatches == 0 && violations == 0 && elapsed < Duration::from_secs(30);
    verdict(
        2,
        pass,
        format!("{mismatches} oracle mismatches / 1000, {violations} capacity violations / 100000, {elapsed:?} < 30 s"),
    );
    assert!(pass);
}

#[test]
fn c03_link_capacity_formula() {
    let bytes = link_capacity(&ContactWindow::from_mbps(360.0, 100.0).unwrap());
    let pass = bytes == 4_500_000_000;
    verdict(
        3,
        pass,
        format!("100 Mbps x 360 s = {bytes} bytes (expected 4500000000)"),
    );
    assert!(pass);
}

#[test]
fn c04_cmae_matches_naive_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(1..200);
        let g: BTreeMap<TileId, u64> = (0..n)
            .map(|i| (TileId(i), rng.random_range(0..50)))
            .collect();
        let y: BTreeMap<TileId, u64> = (0..n)
            .map(|i| (TileId(i), rng.random_range(0..50)))
            .collect();
        if g.values().sum::<u64>() == 0 {
            continue;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            let (a, b) = (y[&TileId(i)] as f64, g[&TileId(i)] as f64);
            num += (a - b).abs();
            den += b;
        }
        let oracle = num / den;
        let got = cmae(&y, &g).unwrap();
        worst = worst.max(((got - oracle) / oracle.max(f64::MIN_POSITIVE)).abs());
    }
    let g: BTreeMap<TileId, u64> = (0..10).map(|i| (TileId(i), i + 1)).collect();
    let zeros: BTreeMap<TileId, u64> = g.keys().map(|&k| (k, 0)).collect();
    let exact = cmae(&g, &g).unwrap();
    let none = cmae(&zeros, &g).unwrap();
    let pass = worst <= 1e-12 && exact == 0.0 && none == 1.0;
    verdict(
        4,
        pass,
        format!("max rel err {worst:e} <= 1e-12, cmae(y=g)={exact}, cmae(0)={none}"),
    );
    assert!(pass);
}

#[test]
fn c05_baseline_ordering() {
    let start = Instant::now();
    let cfg = ScenarioConfig {
        seeds: seeds(),
        ..ScenarioConfig::default()
    };
    let scenes = scenes(&cfg);
    let mut by_method: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
    for m in Method::ALL {
        let scores = cfg
            .seeds
            .iter()
            .map(|&s| run_method(&scenes[&s], &cfg, s, m).unwrap().cmae)
            .collect();
        by_method.insert(m, scores);
    }
    let gap = |a: Method, b: Method| -> f64 {
        let d: Vec<f64> = by_method[&a]
            .iter()
            .zip(&by_method[&b])
            .map(|(x, y)| x - y)
            .collect();
        mean(&d)
    };
    let checks = [
        (Method::Kodan, Method::TargetFuse),
        (Method::TargetFuse, Method::Tiansuan),
        (Method::Tiansuan, Method::SpaceOnly),
        (Method::GroundOnly, Method::TargetFuse),
    ];
    let elapsed = start.elapsed();
    let mut pass = elapsed < Duration::from_secs(120);
    let mut parts = Vec::new();
    for (a, b) in checks {
        let g = gap(a, b);
        pass &= g <= 0.01;
        parts.push(format!("{a}-{b}={g:+.4}"));
    }
    let means: Vec<String> = Method::ALL
        .iter()
        .map(|m| format!("{m}={:.4}", mean(&by_method[m])))
        .collect();
    verdict(
        5,
        pass,
        format!(
            "mean paired gaps <= 0.01: {} (means {}), {elapsed:?} < 120 s",
            parts.join(", "),
            means.join(" ")
        ),
    );
    assert!(pass);
}

#[test]
fn c06_policy_ordering_over_contact_times() {
    let base = ScenarioConfig {
        scene: SceneSpec {
            frames_per_track: 100,
            frame_width: 4000,
            frame_height: 4000,
            ..SceneSpec::default()
        },
        seeds: seeds(),
        ..ScenarioConfig::default()
    };
    let mut base = base;
    base.dedup.enabled = false;
    base.link.rate_mbps = 50.0;
    let scenes = scenes(&base);
    let mut pass = true;
    let mut lines = Vec::new();
    for contact in [360.0, 420.0, 480.0, 900.0] {
        let mut means = BTreeMap::new();
        let mut ample = true;
        for kind in PolicyKind::ALL {
            let mut cfg = base.clone();
            cfg.link.contact_s = contact;
            cfg.downlink.kind = kind;
            let mut scores = Vec::new();
            for &s in &cfg.seeds {
                let out = run_method_detailed(&scenes[&s], &cfg, s, Method::TargetFuse).unwrap();
                let plan = out.plan.as_ref().unwrap();
                let mid: u64 = plan
                    .entries
                    .iter()
                    .filter(|e| {
                        e.confidence >= cfg.downlink.conf_p && e.confidence <= cfg.downlink.conf_q
                    })
                    .map(|e| e.bytes)
                    .sum();
                ample &= mid <= out.report.capacity_bytes;
                scores.push(out.report.cmae);
            }
            means.insert(kind.name(), mean(&scores));
        }
        let (lcf, fixed, dynamic) = (
            means["low_conf_first"],
            means["fixed_conf"],
            means["dynamic_conf"],
        );
        let ordered = dynamic <= lcf.min(fixed) + 0.01;
        let spread = lcf.max(fixed).max(dynamic) - lcf.min(fixed).min(dynamic);
        let coincide = !ample || spread <= 0.01;
        pass &= ordered && coincide;
        lines.push(format!(
            "{contact}s: lcf={lcf:.4} fixed={fixed:.4} dyn={dynamic:.4}{}",
            if ample {
                format!(" (ample, spread {spread:.4})")
            } else {
                String::new()
            }
        ));
    }
    verdict(
        6,
        pass,
        format!(
            "dynamic <= min + 0.01 at every contact time; {}",
            lines.join("; ")
        ),
    );
    assert!(pass);
}

#[test]
fn c07_dedup_reduces_downlink() {
    let cfg = ScenarioConfig {
        seeds: seeds(),
        ..ScenarioConfig::default()
    };
    assert_eq!(cfg.scene.duplicate_fraction, 0.5);
    let mut without = cfg.clone();
    without.dedup.enabled = false;
    let scenes = scenes(&cfg);
    let mut fewer = 0;
    let mut diffs = Vec::new();
    let mut ratios = Vec::new();
    for &s in &cfg.seeds {
        let a = run_method(&scenes[&s], &cfg, s, Method::TargetFuse).unwrap();
        let b = run_method(&scenes[&s], &without, s, Method::TargetFuse).unwrap();
        if a.bytes_downlinked < b.bytes_downlinked {
            fewer += 1;
        }
        diffs.push(a.cmae - b.cmae);
        ratios.push(a.bytes_downlinked as f64 / b.bytes_downlinked as f64);
    }
    let d = mean(&diffs);
    let pass = fewer == 30 && d.abs() <= 0.05;
    verdict(
        7,
        pass,
        format!(
            "fewer bytes with clustering in {fewer}/30 seeds (mean ratio {:.3}); mean CMAE difference {d:+.4} within 0.05",
            mean(&ratios)
        ),
    );
    assert!(pass);
}

#[test]
fn c08_energy_ledger_safety() {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut failures = 0;
    for _ in 0..10_000 {
        let budget = rng.random_range(0.0..1000.0);
        let mut ledger = EnergyLedger::new(budget);
        let budget_micro = to_micro(budget);
        let mut oracle = [0u64; 4];
        for _ in 0..rng.random_range(1..60) {
            let a = Activity::ALL[rng.random_range(0..4)];
            let j = rng.random_range(0.0..80.0);
            let micro = to_micro(j);
            let fits = oracle.iter().sum::<u64>() + micro <= budget_micro;
            if ledger.charge(a, j).is_ok() != fits {
                failures += 1;
            }
            if ledger.spent_total_micro() > budget_micro {
                failures += 1;
            }
            if !fits {
                // The replay truncates at the first violation.
                break;
            }
            oracle[a as usize] += micro;
        }
        for a in Activity::ALL {
            if ledger.spent_micro(a) != oracle[a as usize] {
                failures += 1;
            }
        }
    }

    let hw = HardwareProfile {
        name: "rpi4".into(),
        capture_energy_per_frame: 0.0,
        aggregate_energy_per_track: 0.0,
        ..HardwareProfile::preset("rpi4").unwrap()
    };
    let mut ledger = EnergyLedger::new(150_000.0);
    let mut direct = 0u64;
    while ledger
        .charge(Activity::Compute, hw.compute_power * 0.1)
        .is_ok()
    {
        direct += 1;
    }

    let mut cfg = ScenarioConfig {
        scene: SceneSpec {
            frames_per_track: 100,
            frame_width: 5100,
            frame_height: 5100,
            tile_size: 100,
            num_contexts: 8,
            ..SceneSpec::default()
        },
        hardware: Named::Inline(hw),
        seeds: vec![1],
        ..ScenarioConfig::default()
    };
    cfg.energy.budget_j = Some(150_000.0);
    cfg.tiling.adaptive = false;
    let scene = generate_scene(&cfg.scene).unwrap();
    let report = run_method(&scene, &cfg, 1, Method::SpaceOnly).unwrap();

    let pass = failures == 0
        && direct == 250_000
        && report.processed == 250_000
        && report.budget_exhausted;
    verdict(
        8,
        pass,
        format!(
            "{failures} replay mismatches / 10000 sequences; 150 kJ at 0.6 J/tile: ledger {direct}, pipeline {} of {} tiles (expected 250000)",
            report.processed, report.tiles_total
        ),
    );
    assert!(pass);
}

#[test]
fn c09_lower_power_hardware_processes_more() {
    let mut cfg = ScenarioConfig {
        seeds: seeds(),
        ..ScenarioConfig::default()
    };
    cfg.energy.split = true;
    cfg.energy.compute_cap_j = Some(400.0);
    let mut atlas = cfg.clone();
    atlas.hardware = Named::Preset("atlas".into());
    let scenes = scenes(&cfg);
    let mut strictly_more = 0;
    let (mut c6, mut c13) = (Vec::new(), Vec::new());
    let (mut p6, mut p13) = (0u64, 0u64);
    for &s in &cfg.seeds {
        let a = run_method(&scenes[&s], &cfg, s, Method::TargetFuse).unwrap();
        let b = run_method(&scenes[&s], &atlas, s, Method::TargetFuse).unwrap();
        if a.processed > b.processed {
            strictly_more += 1;
        }
        p6 += a.processed;
        p13 += b.processed;
        c6.push(a.cmae);
        c13.push(b.cmae);
    }
    let pass = strictly_more == 30 && mean(&c6) <= mean(&c13);
    verdict(
        9,
        pass,
        format!(
            "6 W processed more in {strictly_more}/30 seeds ({p6} vs {p13} tiles); mean CMAE 6 W {:.4} <= 13 W {:.4}",
            mean(&c6),
            mean(&c13)
        ),
    );
    assert!(pass);
}

#[test]
fn c10_determinism_across_runs_and_jobs() {
    let cfg = ScenarioConfig {
        scene: SceneSpec {
            frames_per_track: 10,
            ..SceneSpec::default()
        },
        seeds: vec![3, 11, 42],
        ..ScenarioConfig::default()
    };
    let scene = cfg.base_scene().unwrap();
    let mut identical_runs = true;
    for m in Method::ALL {
        for &s in &cfg.seeds {
            let sc = cfg.scene_for_seed(&scene, s).unwrap();
            let csv = |r| {
                let mut buf = Vec::new();
                write_report_csv(&[r], &mut buf).unwrap();
                buf
            };
            let a = csv(run_method(&sc, &cfg, s, m).unwrap());
            let b = csv(run_method(&sc, &cfg, s, m).unwrap());
            identical_runs &= a == b;
        }
    }
    let values: Vec<String> = ["30", "100"].map(String::from).to_vec();
    let bytes = |jobs| {
        let rows = sweep(&cfg, Axis::Bandwidth, &values, jobs).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        buf
    };
    let serial = bytes(1);
    let parallel = bytes(4);
    let pass = identical_runs && serial == parallel;
    verdict(
        10,
        pass,
        format!(
            "repeat runs identical: {identical_runs}; sweep --jobs 1 vs 4 identical: {} ({} bytes)",
            serial == parallel,
            serial.len()
        ),
    );
    assert!(pass);
}
