//! Parametric counter models standing in for onboard and ground detectors.
//!
//! Accuracy is a log-Gaussian bump in tile size. A detection draws true
//! positives as independent hits with probability `q`, false positives from
//! a Poisson law that shrinks as `q` grows, and a Beta-distributed confidence
//! with mean `q`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Beta, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{Tile, TileId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Space,
    Ground,
}

fn default_false_positive_rate() -> f64 {
    0.5
}

fn default_sharpness() -> f64 {
    12.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterProfile {
    pub name: String,
    pub tier: Tier,
    /// Network input resolution; informational.
    pub input_size: u32,
    pub map_peak: f64,
    /// Tile size at which accuracy peaks (s*).
    pub optimal_tile: u32,
    /// Log-space width parameter (α).
    pub curve_width: f64,
    /// Seconds per tile, keyed by hardware profile name.
    #[serde(default)]
    pub per_tile_latency: BTreeMap<String, f64>,
    #[serde(default = "default_sharpness")]
    pub confidence_sharpness: f64,
    /// Expected false positives per tile at zero accuracy (λ).
    #[serde(default = "default_false_positive_rate")]
    pub false_positive_rate: f64,
}

pub const PRESETS: [&str; 3] = ["yolov3", "yolov3-tiny", "ssd-mobilenetv2"];

impl CounterProfile {
    pub fn preset(name: &str) -> Result<CounterProfile> {
        let latency = |rpi4: f64, atlas: f64| {
            BTreeMap::from([("rpi4".to_string(), rpi4), ("atlas".to_string(), atlas)])
        };
        let profile = match name {
            "yolov3" => CounterProfile {
                name: name.into(),
                tier: Tier::Ground,
                input_size: 416,
                map_peak: 0.553,
                optimal_tile: 800,
                curve_width: 0.5,
                per_tile_latency: BTreeMap::new(),
                confidence_sharpness: default_sharpness(),
                false_positive_rate: default_false_positive_rate(),
            },
            "yolov3-tiny" => CounterProfile {
                name: name.into(),
                tier: Tier::Space,
                input_size: 416,
                map_peak: 0.331,
                optimal_tile: 600,
                curve_width: 0.5,
                per_tile_latency: latency(0.10, 0.05),
                confidence_sharpness: default_sharpness(),
                false_positive_rate: default_false_positive_rate(),
            },
            "ssd-mobilenetv2" => CounterProfile {
                name: name.into(),
                tier: Tier::Space,
                input_size: 300,
                map_peak: 0.22,
                optimal_tile: 400,
                curve_width: 0.5,
                per_tile_latency: latency(0.08, 0.04),
                confidence_sharpness: default_sharpness(),
                false_positive_rate: default_false_positive_rate(),
            },
            other => {
                return Err(Error::invalid(
                    "counter",
                    format!("unknown preset {other:?}; expected one of {PRESETS:?}"),
                ))
            }
        };
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        let field = |f: &str| format!("counter.{}.{f}", self.name);
        if !(self.map_peak > 0.0 && self.map_peak <= 1.0) {
            return Err(Error::invalid(field("map_peak"), "must lie in (0, 1]"));
        }
        if self.optimal_tile == 0 {
            return Err(Error::invalid(field("optimal_tile"), "must be positive"));
        }
        if !(self.curve_width > 0.0 && self.curve_width.is_finite()) {
            return Err(Error::invalid(field("curve_width"), "must be positive"));
        }
        if !(self.confidence_sharpness > 0.0 && self.confidence_sharpness.is_finite()) {
            return Err(Error::invalid(
                field("confidence_sharpness"),
                "must be positive",
            ));
        }
        if !(self.false_positive_rate >= 0.0 && self.false_positive_rate.is_finite()) {
            return Err(Error::invalid(
                field("false_positive_rate"),
                "must be finite and >= 0",
            ));
        }
        if let Some((hw, _)) = self
            .per_tile_latency
            .iter()
            .find(|(_, &s)| !(s >= 0.0 && s.is_finite()))
        {
            return Err(Error::invalid(
                field("per_tile_latency"),
                format!("bad value for {hw}"),
            ));
        }
        Ok(())
    }

    pub fn latency(&self, hardware: &str) -> Result<f64> {
        self.per_tile_latency.get(hardware).copied().ok_or_else(|| {
            Error::invalid(
                "hardware",
                format!(
                    "counter {} has no latency for hardware {hardware:?}",
                    self.name
                ),
            )
        })
    }

    pub fn map_at(&self, tile_size: f64) -> f64 {
        map_at(self, tile_size)
    }
}

/// Accuracy at `tile_size`: `map_peak · exp(−α · ln²(size / s*))`, in [0, 1].
pub fn map_at(profile: &CounterProfile, tile_size: f64) -> f64 {
    let l = (tile_size / profile.optimal_tile as f64).ln();
    (profile.map_peak * (-profile.curve_width * l * l).exp()).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub id: u64,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

impl BoundingBox {
    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if ix <= 0.0 || iy <= 0.0 {
            return 0.0;
        }
        let inter = ix * iy;
        inter / (self.area() + other.area() - inter)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub tile_id: TileId,
    pub count_estimate: u64,
    /// Mean detection score in [0, 1].
    pub confidence: f64,
    pub boxes: Option<Vec<BoundingBox>>,
}

/// Inverse-CDF Poisson for small means; the library sampler above that.
fn poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    if lambda > 30.0 {
        return Poisson::new(lambda).expect("positive mean").sample(rng) as u64;
    }
    let u: f64 = rng.random();
    let mut p = (-lambda).exp();
    let mut cdf = p;
    let mut k = 0u64;
    while u > cdf && k < 1000 {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
    }
    k
}

fn confidence<R: Rng + ?Sized>(q: f64, sharpness: f64, rng: &mut R) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    if q >= 1.0 {
        return 1.0;
    }
    Beta::new(q * sharpness, (1.0 - q) * sharpness)
        .expect("shape parameters are positive")
        .sample(rng)
        .clamp(0.0, 1.0)
}

/// Simulated detection on one tile. Deterministic given the rng state.
pub fn detect<R: Rng + ?Sized>(profile: &CounterProfile, tile: &Tile, rng: &mut R) -> Detection {
    let q = map_at(profile, tile.size as f64);
    let true_pos = (0..tile.ground_truth_count)
        .filter(|_| rng.random::<f64>() < q)
        .count() as u64;
    let false_pos = poisson(profile.false_positive_rate * (1.0 - q), rng);
    let confidence = confidence(q, profile.confidence_sharpness, rng);
    Detection {
        tile_id: tile.id,
        count_estimate: true_pos + false_pos,
        confidence,
        boxes: None,
    }
}

/// IoU threshold used when boxes are synthesized.
pub const BOX_NMS_IOU: f64 = 0.5;

/// Like [`detect`], but also produces boxes: one per counted object on a grid
/// over the tile, plus jittered lower-score duplicates that NMS removes.
pub fn detect_with_boxes<R: Rng + ?Sized>(
    profile: &CounterProfile,
    tile: &Tile,
    rng: &mut R,
) -> Result<Detection> {
    let mut det = detect(profile, tile, rng);
    let n = det.count_estimate as usize;
    let mut raw = Vec::with_capacity(2 * n);
    if n > 0 {
        let cols = (n as f64).sqrt().ceil() as usize;
        let rows = n.div_ceil(cols);
        let cw = tile.region.width as f64 / cols as f64;
        let ch = tile.region.height as f64 / rows as f64;
        for i in 0..n {
            let (r, c) = (i / cols, i % cols);
            let b = BoundingBox {
                id: 2 * i as u64,
                x: tile.region.x as f64 + (c as f64 + 0.2) * cw,
                y: tile.region.y as f64 + (r as f64 + 0.2) * ch,
                w: 0.6 * cw,
                h: 0.6 * ch,
                score: det.confidence,
            };
            raw.push(b);
            if rng.random::<f64>() < 0.5 {
                let jitter = 0.05 * cw * (rng.random::<f64>() - 0.5);
                raw.push(BoundingBox {
                    id: 2 * i as u64 + 1,
                    x: b.x + jitter,
                    score: det.confidence * 0.9,
                    ..b
                });
            }
        }
    }
    let kept = nms(&raw, BOX_NMS_IOU)?;
    debug_assert_eq!(kept.len(), n);
    det.boxes = Some(kept);
    Ok(det)
}

/// Greedy non-maximum suppression: boxes are visited by score descending
/// (ties by id) and kept unless they overlap a kept box by more than
/// `iou_threshold`.
pub fn nms(boxes: &[BoundingBox], iou_threshold: f64) -> Result<Vec<BoundingBox>> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(Error::invalid("iou_threshold", "must lie in (0, 1)"));
    }
    for b in boxes {
        if !(b.w > 0.0 && b.h > 0.0 && b.area().is_finite() && b.x.is_finite() && b.y.is_finite()) {
            return Err(Error::invalid(
                "boxes",
                format!("box {} has zero or invalid area", b.id),
            ));
        }
        if !(0.0..=1.0).contains(&b.score) {
            return Err(Error::invalid(
                "boxes",
                format!("box {} score outside [0, 1]", b.id),
            ));
        }
    }
    let mut order: Vec<&BoundingBox> = boxes.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
    let mut kept: Vec<BoundingBox> = Vec::new();
    for b in order {
        if kept.iter().all(|k| k.iou(b) <= iou_threshold) {
            kept.push(*b);
        }
    }
    Ok(kept)
}

/// Region-of-interest predicate: a tile is dropped only when the onboard
/// counter saw nothing and was unsure about it.
pub fn roi_keeps(detection: &Detection, roi_floor: f64) -> bool {
    detection.count_estimate > 0 || detection.confidence >= roi_floor
}

/// Tiles kept by the ROI predicate; `detections` must align with `tiles`.
pub fn roi_filter<'a>(
    tiles: &'a [Tile],
    detections: &[Detection],
    roi_floor: f64,
) -> Result<Vec<&'a Tile>> {
    if tiles.len() != detections.len() {
        return Err(Error::invalid(
            "detections",
            format!("{} detections for {} tiles", detections.len(), tiles.len()),
        ));
    }
    let mut out = Vec::new();
    for (t, d) in tiles.iter().zip(detections) {
        if t.id != d.tile_id {
            return Err(Error::invalid(
                "detections",
                format!(
                    "detection for tile {} paired with tile {}",
                    d.tile_id.0, t.id.0
                ),
            ));
        }
        if roi_keeps(d, roi_floor) {
            out.push(t);
        }
    }
    Ok(out)
}
