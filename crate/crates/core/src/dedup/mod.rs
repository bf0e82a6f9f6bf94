//! Clustering-based deduplication of tiles.
//!
//! Tiles are grouped by k-means over canonicalized color moments; each cluster
//! is represented by its member closest to the centroid, which stands in for
//! the whole cluster downstream.

mod kmeans;
mod moments;

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scene::TileId;

pub use kmeans::{kmeans, KMeansParams, KMeansResult, Seeding};
pub use moments::{
    canonicalize, color_moments, ChannelStats, Feature, FeatureTransform, RasterStats,
    TransformGroup, FEATURE_DIM,
};

#[derive(Debug, Clone, PartialEq)]
pub struct DedupParams {
    pub k: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seeding: Seeding,
    pub group: TransformGroup,
}

impl DedupParams {
    pub fn new(k: usize) -> Self {
        let km = KMeansParams::new(k);
        DedupParams {
            k,
            max_iter: km.max_iter,
            tol: km.tol,
            seeding: km.seeding,
            group: TransformGroup::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DedupResult {
    /// One tile per non-empty cluster, in cluster-index order.
    pub representatives: Vec<TileId>,
    pub multiplicity: BTreeMap<TileId, usize>,
    pub assignment: BTreeMap<TileId, usize>,
    pub centroids: Vec<Feature>,
    /// Cluster index -> representative tile.
    pub cluster_representative: BTreeMap<usize, TileId>,
}

impl DedupResult {
    pub fn representative_of(&self, tile: TileId) -> Option<TileId> {
        self.assignment
            .get(&tile)
            .and_then(|c| self.cluster_representative.get(c))
            .copied()
    }

    /// Audit export: one JSON object per tile, ordered by tile id.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Line {
            tile_id: TileId,
            cluster: usize,
            representative: TileId,
            is_representative: bool,
            multiplicity: usize,
        }
        for (&tile_id, &cluster) in &self.assignment {
            let representative = self.cluster_representative[&cluster];
            let line = Line {
                tile_id,
                cluster,
                representative,
                is_representative: representative == tile_id,
                multiplicity: self.multiplicity[&representative],
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn deduplicate<R: Rng + ?Sized>(
    tiles: &[(TileId, Feature)],
    params: &DedupParams,
    rng: &mut R,
) -> Result<DedupResult> {
    if let Some(dup) = first_duplicate_id(tiles) {
        return Err(Error::invalid(
            "tiles",
            format!("tile {} listed twice", dup.0),
        ));
    }
    let canonical: Vec<Feature> = tiles
        .iter()
        .map(|(_, f)| canonicalize(f, &params.group))
        .collect();
    let km = kmeans(
        &canonical,
        &KMeansParams {
            k: params.k,
            max_iter: params.max_iter,
            tol: params.tol,
            seeding: params.seeding,
        },
        rng,
    )?;

    // Nearest member to each centroid, ties to the lower tile id.
    let mut best: BTreeMap<usize, (f64, TileId)> = BTreeMap::new();
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for ((id, _), (feature, &cluster)) in tiles.iter().zip(canonical.iter().zip(&km.assignment)) {
        *sizes.entry(cluster).or_default() += 1;
        let d = kmeans::sq_dist(feature, &km.centroids[cluster]);
        let entry = best.entry(cluster).or_insert((d, *id));
        if d < entry.0 || (d == entry.0 && *id < entry.1) {
            *entry = (d, *id);
        }
    }

    let cluster_representative: BTreeMap<usize, TileId> =
        best.iter().map(|(&c, &(_, id))| (c, id)).collect();
    let multiplicity = cluster_representative
        .iter()
        .map(|(c, &id)| (id, sizes[c]))
        .collect();
    let assignment = tiles
        .iter()
        .zip(&km.assignment)
        .map(|((id, _), &c)| (*id, c))
        .collect();

    Ok(DedupResult {
        representatives: cluster_representative.values().copied().collect(),
        multiplicity,
        assignment,
        centroids: km.centroids,
        cluster_representative,
    })
}

fn first_duplicate_id(tiles: &[(TileId, Feature)]) -> Option<TileId> {
    let mut ids: Vec<TileId> = tiles.iter().map(|(id, _)| *id).collect();
    ids.sort_unstable();
    ids.windows(2).find(|w| w[0] == w[1]).map(|w| w[0])
}
