//! Synthetic ground-track scenes.
//!
//! A scene is a sequence of frames along a track. Each tile region maps to a
//! hidden geographic context: an isotropic blob in color-moment space with a
//! fixed object count. Revisit frames are rotated/flipped copies of earlier
//! frames, so a revisit tile inherits the context and count of the source
//! region it images, with a small feature perturbation.
//!
//! Tiles are derived procedurally from (scene seed, source frame, region), so
//! a synthetic scene can be re-tiled at any size without changing the
//! underlying ground.

mod geometry;
mod manifest;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::dedup::{Feature, RasterStats};
use crate::error::{Error, Result};
use crate::rng::{mix, stream, Stream};

pub use geometry::{enumerate_tiles, Dihedral, TileRegion};
pub use manifest::{load_manifest, read_manifest, write_manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TileId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrameId(pub u64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub frames_per_track: u32,
    pub frame_width: u32,
    pub frame_height: u32,
    pub num_contexts: u32,
    pub duplicate_fraction: f64,
    pub objects_per_tile_mean: f64,
    pub bytes_per_pixel: f64,
    pub compression_ratio: f64,
    pub seed: u64,
    /// Tile size used when the scene is generated or exported.
    pub tile_size: u32,
    /// Bound on a tile's distance from its context centroid.
    pub context_radius: f64,
    /// Ground sample distance in metres; carried as metadata.
    pub gsd_m: Option<f64>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            frames_per_track: 40,
            frame_width: 3000,
            frame_height: 3000,
            num_contexts: 64,
            duplicate_fraction: 0.5,
            objects_per_tile_mean: 6.0,
            bytes_per_pixel: 3.0,
            compression_ratio: 1.0,
            seed: 7,
            tile_size: 600,
            context_radius: 0.02,
            gsd_m: Some(0.3),
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frames_per_track == 0 {
            return Err(Error::invalid("frames_per_track", "must be positive"));
        }
        if self.frame_width == 0 {
            return Err(Error::invalid("frame_width", "must be positive"));
        }
        if self.frame_height == 0 {
            return Err(Error::invalid("frame_height", "must be positive"));
        }
        if self.num_contexts == 0 {
            return Err(Error::invalid("num_contexts", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.duplicate_fraction) {
            return Err(Error::invalid("duplicate_fraction", "must lie in [0, 1]"));
        }
        if !(self.objects_per_tile_mean >= 0.0 && self.objects_per_tile_mean.is_finite()) {
            return Err(Error::invalid(
                "objects_per_tile_mean",
                "must be finite and >= 0",
            ));
        }
        if !(self.bytes_per_pixel > 0.0 && self.bytes_per_pixel.is_finite()) {
            return Err(Error::invalid("bytes_per_pixel", "must be positive"));
        }
        if !(self.compression_ratio > 0.0 && self.compression_ratio.is_finite()) {
            return Err(Error::invalid("compression_ratio", "must be positive"));
        }
        if self.tile_size == 0 || self.tile_size > self.frame_width.min(self.frame_height) {
            return Err(Error::invalid(
                "tile_size",
                "must lie in (0, min(frame_width, frame_height)]",
            ));
        }
        if !(self.context_radius > 0.0 && self.context_radius.is_finite()) {
            return Err(Error::invalid("context_radius", "must be positive"));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> SceneSpec {
        SceneSpec {
            seed,
            ..self.clone()
        }
    }

    pub fn revisit_count(&self) -> u32 {
        let n = (self.duplicate_fraction * self.frames_per_track as f64).round() as u32;
        // At least one original must precede every revisit.
        n.min(self.frames_per_track - 1)
    }

    pub fn tile_bytes(&self, region: &TileRegion) -> u64 {
        (region.area() as f64 * self.bytes_per_pixel / self.compression_ratio).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub id: FrameId,
    pub width: u32,
    pub height: u32,
    pub capture_index: u32,
    pub revisit_of: Option<FrameId>,
    /// Transform mapping the source frame onto this revisit.
    pub transform: Option<Dihedral>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub id: TileId,
    pub frame_id: FrameId,
    pub region: TileRegion,
    /// Nominal (square) tile size; edge tiles are clipped to the frame.
    pub size: u32,
    pub ground_truth_count: u64,
    pub feature: Feature,
    /// Hidden generating context; evaluation only.
    pub context_id: Option<u32>,
    pub raster: Option<RasterStats>,
    pub bytes: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth(pub BTreeMap<TileId, u64>);

impl GroundTruth {
    pub fn total(&self) -> u64 {
        self.0.values().sum()
    }
}

#[derive(Debug)]
struct SceneModel {
    spec: SceneSpec,
    centroids: Vec<Feature>,
    counts: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub frames: Vec<Frame>,
    pub tiles: Vec<Tile>,
    model: Option<Arc<SceneModel>>,
}

impl PartialEq for Scene {
    fn eq(&self, other: &Self) -> bool {
        self.frames == other.frames && self.tiles == other.tiles
    }
}

impl Scene {
    /// Scene built from explicit tiles (e.g. a manifest); cannot be re-tiled.
    pub fn from_parts(frames: Vec<Frame>, tiles: Vec<Tile>) -> Scene {
        Scene {
            frames,
            tiles,
            model: None,
        }
    }

    pub fn is_synthetic(&self) -> bool {
        self.model.is_some()
    }

    pub fn spec(&self) -> Option<&SceneSpec> {
        self.model.as_ref().map(|m| &m.spec)
    }

    /// Hidden context centroids of a synthetic scene.
    pub fn context_centroids(&self) -> Option<&[Feature]> {
        self.model.as_ref().map(|m| m.centroids.as_slice())
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth(
            self.tiles
                .iter()
                .map(|t| (t.id, t.ground_truth_count))
                .collect(),
        )
    }

    pub fn total_bytes(&self) -> u64 {
        self.tiles.iter().map(|t| t.bytes).sum()
    }

    pub fn frame(&self, id: FrameId) -> Option<&Frame> {
        self.frames.iter().find(|f| f.id == id)
    }

    /// Re-cuts every frame at `tile_size`. Only synthetic scenes carry the
    /// generating model needed for this.
    pub fn retile(&self, tile_size: u32) -> Result<Scene> {
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| Error::invalid("scene", "only generated scenes can be re-tiled"))?;
        let tiles = model.cut(&self.frames, tile_size)?;
        Ok(Scene {
            frames: self.frames.clone(),
            tiles,
            model: Some(Arc::clone(model)),
        })
    }

    /// Tile size shared by every tile, if uniform.
    pub fn uniform_tile_size(&self) -> Option<u32> {
        let first = self.tiles.first()?.size;
        self.tiles.iter().all(|t| t.size == first).then_some(first)
    }
}

const CENTROID_LOW: Feature = [0.1, 0.02, -0.35, 0.1, 0.02, -0.35, 0.1, 0.02, -0.35];
const CENTROID_HIGH: Feature = [0.9, 0.35, 0.35, 0.9, 0.35, 0.35, 0.9, 0.35, 0.35];

/// Minimum centroid spacing in units of the context radius.
const SEPARATION_RADII: f64 = 8.0;

fn place_centroids<R: Rng>(spec: &SceneSpec, rng: &mut R) -> Result<Vec<Feature>> {
    let min_d2 = (SEPARATION_RADII * spec.context_radius).powi(2);
    let k = spec.num_contexts as usize;
    let mut centroids: Vec<Feature> = Vec::with_capacity(k);
    let mut attempts = 0usize;
    while centroids.len() < k {
        attempts += 1;
        if attempts > 10_000 * k {
            return Err(Error::invalid(
                "num_contexts",
                format!(
                    "could not place {k} contexts {SEPARATION_RADII} radii apart; lower context_radius"
                ),
            ));
        }
        let c: Feature =
            std::array::from_fn(|d| rng.random_range(CENTROID_LOW[d]..CENTROID_HIGH[d]));
        let clear = centroids.iter().all(|o| {
            o.iter()
                .zip(&c)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                >= min_d2
        });
        if clear {
            centroids.push(c);
        }
    }
    Ok(centroids)
}

/// Gaussian vector with norm clipped to `bound`.
fn bounded_noise<R: Rng>(rng: &mut R, sigma: f64, bound: f64) -> Feature {
    let normal = Normal::new(0.0, sigma).expect("sigma is positive");
    let mut v: Feature = std::array::from_fn(|_| normal.sample(rng));
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > bound {
        v.iter_mut().for_each(|x| *x *= bound / norm);
    }
    v
}

fn region_key(frame: FrameId, r: &TileRegion) -> u64 {
    mix(&[
        frame.0,
        r.x as u64,
        r.y as u64,
        r.width as u64,
        r.height as u64,
    ])
}

impl SceneModel {
    fn cut(&self, frames: &[Frame], tile_size: u32) -> Result<Vec<Tile>> {
        let spec = &self.spec;
        let half = spec.context_radius / 2.0;
        let mut tiles = Vec::new();
        let mut next_id = 0u64;
        for frame in frames {
            for region in enumerate_tiles(frame, tile_size)? {
                let (source_frame, source_region) = match (frame.revisit_of, frame.transform) {
                    (Some(src), Some(t)) => {
                        (src, t.inverse().apply(&region, frame.width, frame.height))
                    }
                    _ => (frame.id, region),
                };
                let mut rng = stream(
                    spec.seed,
                    Stream::TileFeature,
                    region_key(source_frame, &source_region),
                );
                let context = rng.random_range(0..spec.num_contexts);
                let base = bounded_noise(&mut rng, half / 3.0, half);
                let mut feature = self.centroids[context as usize];
                for (f, n) in feature.iter_mut().zip(&base) {
                    *f += n;
                }
                if frame.revisit_of.is_some() {
                    let mut prng =
                        stream(spec.seed, Stream::Revisit, region_key(frame.id, &region));
                    let perturb = bounded_noise(&mut prng, half / 3.0, half);
                    for (f, p) in feature.iter_mut().zip(&perturb) {
                        *f += p;
                    }
                }
                tiles.push(Tile {
                    id: TileId(next_id),
                    frame_id: frame.id,
                    region,
                    size: tile_size,
                    ground_truth_count: self.counts[context as usize],
                    feature,
                    context_id: Some(context),
                    raster: None,
                    bytes: spec.tile_bytes(&region),
                });
                next_id += 1;
            }
        }
        Ok(tiles)
    }
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = stream(spec.seed, Stream::Scene, 0);
    let centroids = place_centroids(spec, &mut rng)?;
    let counts: Vec<u64> = if spec.objects_per_tile_mean > 0.0 {
        let poisson = Poisson::new(spec.objects_per_tile_mean)
            .map_err(|e| Error::invalid("objects_per_tile_mean", e.to_string()))?;
        (0..spec.num_contexts)
            .map(|_| poisson.sample(&mut rng) as u64)
            .collect()
    } else {
        vec![0; spec.num_contexts as usize]
    };

    let n = spec.frames_per_track as usize;
    let revisits = spec.revisit_count() as usize;
    let mut is_revisit = vec![false; n];
    if revisits > 0 {
        for i in sample(&mut rng, n - 1, revisits) {
            is_revisit[i + 1] = true;
        }
    }
    let allowed = Dihedral::revisit_transforms(spec.frame_width == spec.frame_height);
    let mut frames = Vec::with_capacity(n);
    let mut originals: Vec<FrameId> = Vec::new();
    for (i, &revisit) in is_revisit.iter().enumerate() {
        let id = FrameId(i as u64);
        let (revisit_of, transform) = if revisit {
            let src = originals[rng.random_range(0..originals.len())];
            let t = allowed[rng.random_range(0..allowed.len())];
            (Some(src), Some(t))
        } else {
            originals.push(id);
            (None, None)
        };
        frames.push(Frame {
            id,
            width: spec.frame_width,
            height: spec.frame_height,
            capture_index: i as u32,
            revisit_of,
            transform,
        });
    }

    let model = SceneModel {
        spec: spec.clone(),
        centroids,
        counts,
    };
    let tiles = model.cut(&frames, spec.tile_size)?;
    Ok(Scene {
        frames,
        tiles,
        model: Some(Arc::new(model)),
    })
}

#[cfg(test)]
pub(crate) fn feature_distance(a: &Feature, b: &Feature) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}
