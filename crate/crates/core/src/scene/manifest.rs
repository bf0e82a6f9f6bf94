//! Line-delimited JSON scene manifests: one tile per line.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dedup::{color_moments, Feature, RasterStats, FEATURE_DIM};
use crate::error::{Error, Result};

use super::{Dihedral, Frame, FrameId, Scene, Tile, TileId, TileRegion};

const DEFAULT_BYTES_PER_PIXEL: u64 = 3;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    tile_id: u64,
    frame_id: u64,
    x: u32,
    y: u32,
    size: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    height: Option<u32>,
    #[serde(default)]
    g: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    raster_stats: Option<RasterStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    context: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frame_width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frame_height: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    capture_index: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    revisit_of: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transform: Option<Dihedral>,
}

#[derive(Default)]
struct FrameInfo {
    width: Option<u32>,
    height: Option<u32>,
    extent_x: u32,
    extent_y: u32,
    capture_index: Option<u32>,
    revisit_of: Option<u64>,
    transform: Option<Dihedral>,
}

fn line_error(line: usize, field: &str, reason: impl std::fmt::Display) -> Error {
    Error::invalid(field, format!("line {line}: {reason}"))
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_manifest(BufReader::new(file), path)
}

/// Parses a manifest; `origin` labels parse errors.
pub fn read_manifest<R: BufRead>(reader: R, origin: impl AsRef<Path>) -> Result<Scene> {
    let origin = origin.as_ref();
    let mut tiles = Vec::new();
    let mut frames: BTreeMap<u64, FrameInfo> = BTreeMap::new();
    let mut seen = BTreeSet::new();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: lineno,
            reason: e.to_string(),
        })?;
        let g = rec
            .g
            .ok_or_else(|| line_error(lineno, "g", "missing ground-truth count"))?;
        if !seen.insert(rec.tile_id) {
            return Err(line_error(
                lineno,
                "tile_id",
                format!("duplicate id {}", rec.tile_id),
            ));
        }
        if rec.size == 0 {
            return Err(line_error(lineno, "size", "must be positive"));
        }
        let feature: Feature = match (&rec.feature, &rec.raster_stats) {
            (Some(v), _) => {
                if v.len() != FEATURE_DIM {
                    return Err(line_error(
                        lineno,
                        "feature",
                        format!("expected {FEATURE_DIM} values, got {}", v.len()),
                    ));
                }
                std::array::from_fn(|i| v[i])
            }
            (None, Some(stats)) => {
                color_moments(stats).map_err(|e| line_error(lineno, "raster_stats", e))?
            }
            (None, None) => {
                return Err(line_error(
                    lineno,
                    "feature",
                    "neither feature nor raster_stats given",
                ))
            }
        };
        if feature.iter().any(|v| !v.is_finite()) {
            return Err(line_error(lineno, "feature", "non-finite value"));
        }
        let region = TileRegion {
            x: rec.x,
            y: rec.y,
            width: rec.width.unwrap_or(rec.size),
            height: rec.height.unwrap_or(rec.size),
        };
        if region.width == 0 || region.height == 0 {
            return Err(line_error(
                lineno,
                "width",
                "region must have positive extent",
            ));
        }

        let info = frames.entry(rec.frame_id).or_default();
        info.extent_x = info.extent_x.max(region.x + region.width);
        info.extent_y = info.extent_y.max(region.y + region.height);
        merge_frame_field(&mut info.width, rec.frame_width, lineno, "frame_width")?;
        merge_frame_field(&mut info.height, rec.frame_height, lineno, "frame_height")?;
        merge_frame_field(
            &mut info.capture_index,
            rec.capture_index,
            lineno,
            "capture_index",
        )?;
        merge_frame_field(&mut info.revisit_of, rec.revisit_of, lineno, "revisit_of")?;
        merge_frame_field(&mut info.transform, rec.transform, lineno, "transform")?;
        if rec.revisit_of == Some(rec.frame_id) {
            return Err(line_error(
                lineno,
                "revisit_of",
                "frame cannot revisit itself",
            ));
        }

        tiles.push(Tile {
            id: TileId(rec.tile_id),
            frame_id: FrameId(rec.frame_id),
            region,
            size: rec.size,
            ground_truth_count: g,
            feature,
            context_id: rec.context,
            bytes: rec.bytes.unwrap_or(region.area() * DEFAULT_BYTES_PER_PIXEL),
            raster: rec.raster_stats,
        });
    }

    let mut out_frames = Vec::with_capacity(frames.len());
    for (position, (&id, info)) in frames.iter().enumerate() {
        let width = info.width.unwrap_or(info.extent_x);
        let height = info.height.unwrap_or(info.extent_y);
        if info.extent_x > width || info.extent_y > height {
            return Err(Error::invalid(
                "x",
                format!("a tile of frame {id} extends past the {width}x{height} frame bounds"),
            ));
        }
        out_frames.push(Frame {
            id: FrameId(id),
            width,
            height,
            capture_index: info.capture_index.unwrap_or(position as u32),
            revisit_of: info.revisit_of.map(FrameId),
            transform: info.transform,
        });
    }
    Ok(Scene::from_parts(out_frames, tiles))
}

fn merge_frame_field<T: PartialEq + Copy + std::fmt::Debug>(
    slot: &mut Option<T>,
    value: Option<T>,
    line: usize,
    field: &str,
) -> Result<()> {
    match (*slot, value) {
        (Some(a), Some(b)) if a != b => Err(line_error(
            line,
            field,
            format!("conflicts with an earlier tile of the same frame ({a:?} vs {b:?})"),
        )),
        (None, Some(b)) => {
            *slot = Some(b);
            Ok(())
        }
        _ => Ok(()),
    }
}

/// Writes every tile with all fields populated, so reading the output back
/// and writing it again yields identical bytes.
pub fn write_manifest<W: Write>(scene: &Scene, mut out: W) -> Result<()> {
    let frames: BTreeMap<FrameId, &Frame> = scene.frames.iter().map(|f| (f.id, f)).collect();
    for t in &scene.tiles {
        let frame = frames.get(&t.frame_id).ok_or_else(|| {
            Error::invalid(
                "frame_id",
                format!("tile {} names unknown frame {}", t.id.0, t.frame_id.0),
            )
        })?;
        let rec = Record {
            tile_id: t.id.0,
            frame_id: t.frame_id.0,
            x: t.region.x,
            y: t.region.y,
            size: t.size,
            width: Some(t.region.width),
            height: Some(t.region.height),
            g: Some(t.ground_truth_count),
            feature: Some(t.feature.to_vec()),
            raster_stats: t.raster.clone(),
            bytes: Some(t.bytes),
            context: t.context_id,
            frame_width: Some(frame.width),
            frame_height: Some(frame.height),
            capture_index: Some(frame.capture_index),
            revisit_of: frame.revisit_of.map(|f| f.0),
            transform: frame.transform,
        };
        let line =
            serde_json::to_string(&rec).map_err(|e| Error::invalid("tile", e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::io("<manifest>", e))?;
    }
    Ok(())
}
