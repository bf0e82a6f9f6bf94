//! Contact-window capacity and confidence-banded downlink throttling.
//!
//! Tiles below `conf_p` are dropped, tiles above `conf_q` keep their onboard
//! count, and the band in between competes for the link in confidence order.
//! Mid-band tiles that do not fit are handled according to the policy kind.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::TileId;

pub use crate::pipeline::{select_policy_curve, PolicyCurveRow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactWindow {
    pub duration_s: f64,
    pub rate_bps: f64,
}

impl ContactWindow {
    pub fn new(duration_s: f64, rate_bps: f64) -> Result<ContactWindow> {
        if !(duration_s > 0.0 && duration_s.is_finite()) {
            return Err(Error::invalid("contact_s", "duration must be positive"));
        }
        if !(rate_bps > 0.0 && rate_bps.is_finite()) {
            return Err(Error::invalid("rate_mbps", "rate must be positive"));
        }
        Ok(ContactWindow {
            duration_s,
            rate_bps,
        })
    }

    /// Rate in decimal megabits per second.
    pub fn from_mbps(duration_s: f64, rate_mbps: f64) -> Result<ContactWindow> {
        ContactWindow::new(duration_s, rate_mbps * 1e6)
    }
}

/// Whole bytes deliverable in the window.
pub fn link_capacity(window: &ContactWindow) -> u64 {
    (window.rate_bps * window.duration_s / 8.0).floor() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Mid-band tiles that miss the window keep their onboard counts.
    #[default]
    LowConfFirst,
    /// Mid-band tiles that miss the window are dropped.
    FixedConf,
    /// As low_conf_first, reporting the conf_q that the outcome implies.
    DynamicConf,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [
        PolicyKind::LowConfFirst,
        PolicyKind::FixedConf,
        PolicyKind::DynamicConf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::LowConfFirst => "low_conf_first",
            PolicyKind::FixedConf => "fixed_conf",
            PolicyKind::DynamicConf => "dynamic_conf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransmitOrder {
    /// Confidence descending; ties by smaller size, then lower id.
    #[default]
    Confidence,
    /// Size descending; ties by higher confidence, then lower id.
    Size,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Admission {
    /// Stop at the first tile that does not fit.
    #[default]
    Stop,
    /// Skip tiles that do not fit and keep trying smaller ones.
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DownlinkPolicy {
    pub kind: PolicyKind,
    pub conf_p: f64,
    pub conf_q: f64,
    pub order: TransmitOrder,
    pub admission: Admission,
}

pub const DEFAULT_CONF_P: f64 = 0.05;
pub const DEFAULT_CONF_Q: f64 = 0.45;

impl Default for DownlinkPolicy {
    fn default() -> Self {
        DownlinkPolicy {
            kind: PolicyKind::LowConfFirst,
            conf_p: DEFAULT_CONF_P,
            conf_q: DEFAULT_CONF_Q,
            order: TransmitOrder::Confidence,
            admission: Admission::Stop,
        }
    }
}

impl DownlinkPolicy {
    pub fn with_kind(kind: PolicyKind) -> DownlinkPolicy {
        DownlinkPolicy {
            kind,
            ..DownlinkPolicy::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.conf_p) {
            return Err(Error::invalid("conf_p", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.conf_q) {
            return Err(Error::invalid("conf_q", "must lie in [0, 1]"));
        }
        if self.conf_p > self.conf_q {
            return Err(Error::invalid("conf_p", "must not exceed conf_q"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredTile {
    pub id: TileId,
    pub confidence: f64,
    pub bytes: u64,
    pub onboard_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Transmitted,
    CountedInSpace,
    Discarded,
}

impl Disposition {
    pub fn name(self) -> &'static str {
        match self {
            Disposition::Transmitted => "transmitted",
            Disposition::CountedInSpace => "counted_in_space",
            Disposition::Discarded => "discarded",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub tile_id: TileId,
    pub disposition: Disposition,
    pub confidence: f64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DownlinkPlan {
    /// Transmission order.
    pub transmitted: Vec<TileId>,
    /// Tiles whose onboard count stands, with that count; input order.
    pub counted_in_space: Vec<(TileId, u64)>,
    /// Input order.
    pub discarded: Vec<TileId>,
    pub bytes_used: u64,
    pub effective_conf_q: f64,
    /// One entry per input tile, input order.
    pub entries: Vec<PlanEntry>,
}

impl DownlinkPlan {
    pub fn disposition(&self, id: TileId) -> Option<Disposition> {
        self.entries
            .iter()
            .find(|e| e.tile_id == id)
            .map(|e| e.disposition)
    }

    /// CSV with columns `tile_id,disposition,confidence,bytes`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tile_id", "disposition", "confidence", "bytes"])?;
        for e in &self.entries {
            w.write_record([
                e.tile_id.0.to_string(),
                e.disposition.name().to_string(),
                e.confidence.to_string(),
                e.bytes.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<plan>", e))?;
        Ok(())
    }
}

/// Greedy admission of `items` (already ordered) against `capacity` bytes.
/// Returns (admitted indices, leftover indices, bytes used).
pub fn admit_in_order(
    sizes: &[u64],
    capacity: u64,
    admission: Admission,
) -> (Vec<usize>, Vec<usize>, u64) {
    let mut used = 0u64;
    let mut admitted = Vec::new();
    let mut leftovers = Vec::new();
    let mut stopped = false;
    for (i, &b) in sizes.iter().enumerate() {
        if !stopped && used.checked_add(b).is_some_and(|t| t <= capacity) {
            used += b;
            admitted.push(i);
        } else {
            if admission == Admission::Stop {
                stopped = true;
            }
            leftovers.push(i);
        }
    }
    (admitted, leftovers, used)
}

pub fn throttle(
    tiles: &[ScoredTile],
    policy: &DownlinkPolicy,
    capacity_bytes: i64,
) -> Result<DownlinkPlan> {
    policy.validate()?;
    if capacity_bytes < 0 {
        return Err(Error::invalid("capacity", "must be >= 0"));
    }
    for t in tiles {
        if !(0.0..=1.0).contains(&t.confidence) {
            return Err(Error::invalid(
                "confidence",
                format!(
                    "tile {} has confidence {} outside [0, 1]",
                    t.id.0, t.confidence
                ),
            ));
        }
    }
    let capacity = capacity_bytes as u64;

    let mut disposition = vec![Disposition::Discarded; tiles.len()];
    let mut mid: Vec<usize> = Vec::new();
    for (i, t) in tiles.iter().enumerate() {
        if t.confidence < policy.conf_p {
            disposition[i] = Disposition::Discarded;
        } else if t.confidence > policy.conf_q {
            disposition[i] = Disposition::CountedInSpace;
        } else {
            mid.push(i);
        }
    }
    match policy.order {
        TransmitOrder::Confidence => mid.sort_by(|&a, &b| {
            let (x, y) = (&tiles[a], &tiles[b]);
            y.confidence
                .total_cmp(&x.confidence)
                .then(x.bytes.cmp(&y.bytes))
                .then(x.id.cmp(&y.id))
        }),
        TransmitOrder::Size => mid.sort_by(|&a, &b| {
            let (x, y) = (&tiles[a], &tiles[b]);
            y.bytes
                .cmp(&x.bytes)
                .then(y.confidence.total_cmp(&x.confidence))
                .then(x.id.cmp(&y.id))
        }),
    }

    let sizes: Vec<u64> = mid.iter().map(|&i| tiles[i].bytes).collect();
    let (admitted, leftovers, bytes_used) = admit_in_order(&sizes, capacity, policy.admission);
    let transmitted: Vec<TileId> = admitted.iter().map(|&k| tiles[mid[k]].id).collect();
    for &k in &admitted {
        disposition[mid[k]] = Disposition::Transmitted;
    }
    let leftover_disposition = match policy.kind {
        PolicyKind::LowConfFirst | PolicyKind::DynamicConf => Disposition::CountedInSpace,
        PolicyKind::FixedConf => Disposition::Discarded,
    };
    for &k in &leftovers {
        disposition[mid[k]] = leftover_disposition;
    }

    let effective_conf_q = if policy.kind == PolicyKind::DynamicConf && !leftovers.is_empty() {
        admitted
            .iter()
            .map(|&k| tiles[mid[k]].confidence)
            .fold(None, |m: Option<f64>, c| Some(m.map_or(c, |m| m.max(c))))
            .unwrap_or(policy.conf_p)
    } else {
        policy.conf_q
    };

    let mut plan = DownlinkPlan {
        transmitted,
        bytes_used,
        effective_conf_q,
        ..DownlinkPlan::default()
    };
    for (t, &d) in tiles.iter().zip(&disposition) {
        match d {
            Disposition::CountedInSpace => plan.counted_in_space.push((t.id, t.onboard_count)),
            Disposition::Discarded => plan.discarded.push(t.id),
            Disposition::Transmitted => {}
        }
        plan.entries.push(PlanEntry {
            tile_id: t.id,
            disposition: d,
            confidence: t.confidence,
            bytes: t.bytes,
        });
    }
    debug_assert!(plan.bytes_used <= capacity);
    Ok(plan)
}
