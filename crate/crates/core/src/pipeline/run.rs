use std::collections::{BTreeMap, HashMap};

use rand::seq::index::sample;
use rand::Rng;

use crate::dedup::{deduplicate, DedupParams, DedupResult};
use crate::detector::{detect, map_at, roi_keeps, CounterProfile, Detection};
use crate::downlink::{
    admit_in_order, link_capacity, throttle, DownlinkPlan, PolicyKind, ScoredTile,
};
use crate::energy::{compute_energy, downlink_energy, to_micro, Activity, EnergyLedger};
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};
use crate::scene::{Scene, Tile, TileId};
use crate::tiling::search_tile_size;

use super::config::{Attribution, Resolved, ScenarioConfig, TilingConfig, MANIFEST_DEFAULT_K};
use super::report::{RunReport, TileOutcome};
use super::{cmae, Method};

/// A run's report plus the per-tile detail behind it.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub scene: Scene,
    pub estimates: BTreeMap<TileId, u64>,
    pub outcomes: BTreeMap<TileId, TileOutcome>,
    pub onboard: BTreeMap<TileId, Detection>,
    pub plan: Option<DownlinkPlan>,
    pub dedup: Option<DedupResult>,
    pub ledger: EnergyLedger,
}

pub fn run_track(scene: &Scene, cfg: &ScenarioConfig, seed: u64) -> Result<RunReport> {
    run_method(scene, cfg, seed, Method::TargetFuse)
}

pub fn run_baseline(
    scene: &Scene,
    cfg: &ScenarioConfig,
    seed: u64,
    baseline: &str,
) -> Result<RunReport> {
    let method: Method = baseline.parse()?;
    if method == Method::TargetFuse {
        return Err(Error::invalid("baseline", "targetfuse is not a baseline"));
    }
    run_method(scene, cfg, seed, method)
}

pub fn run_method(
    scene: &Scene,
    cfg: &ScenarioConfig,
    seed: u64,
    method: Method,
) -> Result<RunReport> {
    run_method_detailed(scene, cfg, seed, method).map(|o| o.report)
}

/// Tile size maximizing the onboard counter's mean hit rate over a sample of
/// tiles with objects. Every size is scored on the same tiles and the same
/// uniform draws, so the score is a step function of accuracy alone.
///
/// Returns `None` when the scene cannot be re-tiled or has no objects.
pub fn calibrate_tile_size(
    scene: &Scene,
    profile: &CounterProfile,
    tiling: &TilingConfig,
    seed: u64,
) -> Result<Option<u32>> {
    if !tiling.adaptive || !scene.is_synthetic() {
        return Ok(None);
    }
    let min_dim = scene
        .frames
        .iter()
        .map(|f| f.width.min(f.height))
        .min()
        .unwrap_or(0);
    let s_max = tiling.s_max.min(min_dim);
    if tiling.s_min >= s_max {
        return Ok(None);
    }
    let candidates: Vec<&Tile> = scene
        .tiles
        .iter()
        .filter(|t| t.ground_truth_count > 0)
        .collect();
    if candidates.is_empty() {
        return Ok(None);
    }
    let n = tiling.calibration_sample.min(candidates.len());
    let mut pick = stream(seed, Stream::Calibration, u64::MAX);
    let mut chosen: Vec<usize> = sample(&mut pick, candidates.len(), n).into_vec();
    chosen.sort_unstable();
    let draws: Vec<Vec<f64>> = chosen
        .iter()
        .map(|&i| {
            let t = candidates[i];
            let mut rng = stream(seed, Stream::Calibration, t.id.0);
            (0..t.ground_truth_count).map(|_| rng.random()).collect()
        })
        .collect();
    let eval = |s: u32| {
        let q = map_at(profile, s as f64);
        draws
            .iter()
            .map(|u| u.iter().filter(|&&x| x < q).count() as f64 / u.len() as f64)
            .sum::<f64>()
            / draws.len() as f64
    };
    let outcome = search_tile_size(eval, tiling.s_min, s_max, tiling.epsilon, tiling.rule)?;
    Ok(Some(outcome.size))
}

struct Budget<'a> {
    ledger: EnergyLedger,
    exhausted: bool,
    r: &'a Resolved,
}

impl Budget<'_> {
    fn charge(&mut self, activity: Activity, joules: f64) -> bool {
        match self.ledger.charge(activity, joules) {
            Ok(()) => true,
            Err(_) => {
                self.exhausted = true;
                false
            }
        }
    }

    fn downlink_cost(&self, bytes: u64) -> f64 {
        downlink_energy(&self.r.hardware, bytes, self.r.window.rate_bps)
    }
}

pub fn run_method_detailed(
    scene: &Scene,
    cfg: &ScenarioConfig,
    seed: u64,
    method: Method,
) -> Result<RunOutcome> {
    let r = cfg.resolve()?;
    let mut ledger = EnergyLedger::new(r.budget_j);
    if cfg.energy.split {
        if let Some(c) = cfg.energy.compute_cap_j {
            ledger = ledger.with_cap(Activity::Compute, c);
        }
        if let Some(c) = cfg.energy.downlink_cap_j {
            ledger = ledger.with_cap(Activity::Downlink, c);
        }
    }
    let mut budget = Budget {
        ledger,
        exhausted: false,
        r: &r,
    };

    let scene = match calibrate_tile_size(scene, &r.space, &cfg.tiling, seed)? {
        Some(size) => scene.retile(size)?,
        None => scene.clone(),
    };

    // Capture, frame by frame along the track.
    let mut frames: Vec<_> = scene.frames.iter().collect();
    frames.sort_by_key(|f| (f.capture_index, f.id));
    let mut captured_rank = HashMap::new();
    for (rank, f) in frames.iter().enumerate() {
        if !budget.charge(Activity::Capture, r.hardware.capture_energy_per_frame) {
            break;
        }
        captured_rank.insert(f.id, rank);
    }
    // Tiles of captured frames, in capture order.
    let mut order: Vec<usize> = (0..scene.tiles.len())
        .filter(|&i| captured_rank.contains_key(&scene.tiles[i].frame_id))
        .collect();
    order.sort_by_key(|&i| captured_rank[&scene.tiles[i].frame_id]);

    let mut outcome = vec![TileOutcome::Unprocessed; scene.tiles.len()];
    let mut estimate = vec![0u64; scene.tiles.len()];
    let mut onboard: BTreeMap<TileId, Detection> = BTreeMap::new();
    let mut processed: Vec<usize> = Vec::new();

    if method != Method::GroundOnly {
        let per_tile = to_micro(compute_energy(&r.hardware, r.space_latency_s));
        for &i in &order {
            if budget
                .ledger
                .charge_micro(Activity::Compute, per_tile)
                .is_err()
            {
                budget.exhausted = true;
                break;
            }
            let t = &scene.tiles[i];
            let det = detect(&r.space, t, &mut stream(seed, Stream::Onboard, t.id.0));
            onboard.insert(t.id, det);
            processed.push(i);
        }
    }

    let capacity = link_capacity(&r.window);
    let mut plan = None;
    let mut dedup = None;
    let mut representatives = 0u64;
    let mut effective_conf_q = cfg.downlink.conf_q;
    let mut transmitted: Vec<usize> = Vec::new();

    match method {
        Method::SpaceOnly => {
            for &i in &processed {
                outcome[i] = TileOutcome::SpaceCounted;
                estimate[i] = onboard[&scene.tiles[i].id].count_estimate;
            }
            budget.charge(Activity::Aggregate, r.hardware.aggregate_energy_per_track);
        }
        Method::GroundOnly | Method::Tiansuan => {
            let mut queue: Vec<usize> = Vec::new();
            if method == Method::GroundOnly {
                queue = order.clone();
            } else {
                effective_conf_q = r.tiansuan_threshold;
                let done: std::collections::HashSet<usize> = processed.iter().copied().collect();
                for &i in &order {
                    match onboard.get(&scene.tiles[i].id) {
                        Some(d) if d.confidence > r.tiansuan_threshold => {
                            outcome[i] = TileOutcome::SpaceCounted;
                            estimate[i] = d.count_estimate;
                        }
                        _ => queue.push(i),
                    }
                }
                for &i in &queue {
                    if done.contains(&i) {
                        outcome[i] = TileOutcome::Discarded;
                    }
                }
            }
            let sizes: Vec<u64> = queue.iter().map(|&i| scene.tiles[i].bytes).collect();
            let (admitted, _, _) = admit_in_order(&sizes, capacity, cfg.downlink.admission);
            budget.charge(Activity::Aggregate, r.hardware.aggregate_energy_per_track);
            for k in admitted {
                let i = queue[k];
                if !budget.charge(
                    Activity::Downlink,
                    budget.downlink_cost(scene.tiles[i].bytes),
                ) {
                    break;
                }
                transmitted.push(i);
            }
        }
        Method::TargetFuse | Method::Kodan => {
            let kept: Vec<usize> = processed
                .iter()
                .copied()
                .filter(|&i| {
                    let keep = roi_keeps(&onboard[&scene.tiles[i].id], cfg.roi_floor);
                    if !keep {
                        outcome[i] = TileOutcome::RoiDropped;
                    }
                    keep
                })
                .collect();
            let index_of: HashMap<TileId, usize> =
                kept.iter().map(|&i| (scene.tiles[i].id, i)).collect();

            let reps: Vec<usize> = if cfg.dedup.enabled && !kept.is_empty() {
                let k = cfg
                    .dedup
                    .k
                    .or_else(|| scene.spec().map(|s| s.num_contexts as usize))
                    .unwrap_or(MANIFEST_DEFAULT_K)
                    .clamp(1, kept.len());
                let params = DedupParams {
                    k,
                    max_iter: cfg.dedup.max_iter,
                    tol: cfg.dedup.tol,
                    seeding: cfg.dedup.seeding,
                    group: cfg.dedup.group.clone(),
                };
                let features: Vec<(TileId, _)> = kept
                    .iter()
                    .map(|&i| (scene.tiles[i].id, scene.tiles[i].feature))
                    .collect();
                let res = deduplicate(&features, &params, &mut stream(seed, Stream::Dedup, 0))?;
                let reps = res.representatives.iter().map(|id| index_of[id]).collect();
                dedup = Some(res);
                reps
            } else {
                kept.clone()
            };
            representatives = reps.len() as u64;

            let scored: Vec<ScoredTile> = reps
                .iter()
                .map(|&i| {
                    let t = &scene.tiles[i];
                    let d = &onboard[&t.id];
                    ScoredTile {
                        id: t.id,
                        confidence: d.confidence,
                        bytes: t.bytes,
                        onboard_count: d.count_estimate,
                    }
                })
                .collect();
            let cap = if method == Method::Kodan {
                i64::MAX
            } else {
                i64::try_from(capacity).unwrap_or(i64::MAX)
            };
            let mut p = throttle(&scored, &cfg.downlink, cap)?;
            budget.charge(Activity::Aggregate, r.hardware.aggregate_energy_per_track);

            // Transmit until the radio's energy runs out; the remainder is
            // handled like tiles that missed the window.
            let mut sent = 0;
            for id in &p.transmitted {
                let i = index_of[id];
                if !budget.charge(
                    Activity::Downlink,
                    budget.downlink_cost(scene.tiles[i].bytes),
                ) {
                    break;
                }
                sent += 1;
            }
            if sent < p.transmitted.len() {
                let unsent = p.transmitted.split_off(sent);
                for id in unsent {
                    let i = index_of[&id];
                    let entry = p
                        .entries
                        .iter_mut()
                        .find(|e| e.tile_id == id)
                        .expect("planned tile");
                    p.bytes_used -= scene.tiles[i].bytes;
                    if cfg.downlink.kind == PolicyKind::FixedConf {
                        entry.disposition = crate::downlink::Disposition::Discarded;
                        p.discarded.push(id);
                    } else {
                        entry.disposition = crate::downlink::Disposition::CountedInSpace;
                        p.counted_in_space.push((id, onboard[&id].count_estimate));
                    }
                }
            }

            for &(id, count) in &p.counted_in_space {
                let i = index_of[&id];
                outcome[i] = TileOutcome::SpaceCounted;
                estimate[i] = count;
            }
            for id in &p.discarded {
                outcome[index_of[id]] = TileOutcome::Discarded;
            }
            transmitted = p.transmitted.iter().map(|id| index_of[id]).collect();
            effective_conf_q = p.effective_conf_q;
            plan = Some(p);
        }
    }

    let mut bytes_downlinked = 0u64;
    for &i in &transmitted {
        let t = &scene.tiles[i];
        let det = detect(&r.ground, t, &mut stream(seed, Stream::Ground, t.id.0));
        outcome[i] = TileOutcome::Transmitted;
        estimate[i] = det.count_estimate;
        bytes_downlinked += t.bytes;
    }

    if let Some(res) = &dedup {
        let index_of: HashMap<TileId, usize> = scene
            .tiles
            .iter()
            .enumerate()
            .map(|(i, t)| (t.id, i))
            .collect();
        for &id in res.assignment.keys() {
            let rep = res
                .representative_of(id)
                .expect("assigned tile has a representative");
            if rep == id {
                continue;
            }
            let i = index_of[&id];
            match cfg.dedup.attribution {
                Attribution::Multiplicity => {
                    estimate[i] = estimate[index_of[&rep]];
                    outcome[i] = TileOutcome::Deduplicated;
                }
                Attribution::RepresentativesOnly => {
                    estimate[i] = onboard[&id].count_estimate;
                    outcome[i] = TileOutcome::SpaceCounted;
                }
            }
        }
    }

    let estimates: BTreeMap<TileId, u64> = scene
        .tiles
        .iter()
        .zip(&estimate)
        .map(|(t, &y)| (t.id, y))
        .collect();
    let truths = scene.ground_truth();
    let score = cmae(&estimates, &truths.0)?;

    let count = |o: TileOutcome| outcome.iter().filter(|&&x| x == o).count() as u64;
    let ledger = budget.ledger.clone();
    let report = RunReport {
        method,
        seed,
        tile_size: scene.uniform_tile_size().unwrap_or(0),
        tiles_total: scene.tiles.len() as u64,
        processed: processed.len() as u64,
        unprocessed: count(TileOutcome::Unprocessed),
        roi_dropped: count(TileOutcome::RoiDropped),
        deduplicated: count(TileOutcome::Deduplicated),
        transmitted: count(TileOutcome::Transmitted),
        space_counted: count(TileOutcome::SpaceCounted),
        discarded: count(TileOutcome::Discarded),
        representatives,
        bytes_downlinked,
        capacity_bytes: capacity,
        effective_conf_q,
        energy_capture_j: ledger.spent(Activity::Capture),
        energy_compute_j: ledger.spent(Activity::Compute),
        energy_aggregate_j: ledger.spent(Activity::Aggregate),
        energy_downlink_j: ledger.spent(Activity::Downlink),
        energy_total_j: ledger.spent_total(),
        budget_exhausted: budget.exhausted,
        sim_seconds: processed.len() as f64 * r.space_latency_s
            + bytes_downlinked as f64 * 8.0 / r.window.rate_bps,
        cmae: score,
        truth_total: truths.total(),
        estimate_total: estimate.iter().sum(),
    };
    let outcomes = scene
        .tiles
        .iter()
        .zip(&outcome)
        .map(|(t, &o)| (t.id, o))
        .collect();
    Ok(RunOutcome {
        report,
        scene,
        estimates,
        outcomes,
        onboard,
        plan,
        dedup,
        ledger,
    })
}
