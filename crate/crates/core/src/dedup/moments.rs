//! Color-moment descriptors and the transform orbits used to canonicalize them.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEATURE_DIM: usize = 9;

/// Three channels of (mean, standard deviation, cube root of the third central moment).
pub type Feature = [f64; FEATURE_DIM];

/// Streaming central-moment accumulator for one channel.
///
/// `m2` and `m3` are the sums of squared and cubed deviations from `mean`, so
/// two accumulators over disjoint pixel sets merge exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
    pub m3: f64,
}

impl ChannelStats {
    pub fn from_pixels<I: IntoIterator<Item = f64>>(pixels: I) -> Self {
        let mut stats = ChannelStats::default();
        for value in pixels {
            stats.push(value);
        }
        stats
    }

    pub fn push(&mut self, value: f64) {
        let n1 = self.count as f64;
        self.count += 1;
        let n = self.count as f64;
        let delta = value - self.mean;
        let delta_n = delta / n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    pub fn merge(&self, other: &ChannelStats) -> ChannelStats {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * nb / n;
        let m2 = self.m2 + other.m2 + delta * delta * na * nb / n;
        let m3 = self.m3
            + other.m3
            + delta.powi(3) * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        ChannelStats {
            count: self.count + other.count,
            mean,
            m2,
            m3,
        }
    }

    pub fn std_dev(&self) -> f64 {
        (self.m2 / self.count as f64).max(0.0).sqrt()
    }

    pub fn skew_term(&self) -> f64 {
        (self.m3 / self.count as f64).cbrt()
    }
}

/// Per-channel pixel statistics for a raster tile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RasterStats {
    pub channels: Vec<ChannelStats>,
}

impl RasterStats {
    /// Builds stats from interleaved RGB-style pixels.
    pub fn from_interleaved(pixels: &[[f64; 3]]) -> Self {
        let mut channels = vec![ChannelStats::default(); 3];
        for px in pixels {
            for (stats, &value) in channels.iter_mut().zip(px) {
                stats.push(value);
            }
        }
        RasterStats { channels }
    }
}

pub fn color_moments(raster: &RasterStats) -> Result<Feature> {
    if raster.channels.len() != 3 {
        return Err(Error::invalid(
            "raster_stats",
            format!("expected 3 channels, got {}", raster.channels.len()),
        ));
    }
    let mut feature = [0.0; FEATURE_DIM];
    for (c, stats) in raster.channels.iter().enumerate() {
        if stats.count == 0 {
            return Err(Error::invalid(
                "raster_stats",
                format!("channel {c} has no pixels"),
            ));
        }
        feature[3 * c] = stats.mean;
        feature[3 * c + 1] = stats.std_dev();
        feature[3 * c + 2] = stats.skew_term();
    }
    Ok(feature)
}

/// A transform acting on the moment vector: a channel permutation, optionally
/// followed by intensity inversion (v -> 1 - v on normalized rasters).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureTransform {
    pub channel_order: [usize; 3],
    #[serde(default)]
    pub invert: bool,
}

impl FeatureTransform {
    pub const IDENTITY: FeatureTransform = FeatureTransform {
        channel_order: [0, 1, 2],
        invert: false,
    };

    pub fn apply(&self, feature: &Feature) -> Feature {
        let mut out = [0.0; FEATURE_DIM];
        for (dst, &src) in self.channel_order.iter().enumerate() {
            let (mean, std, skew) = (feature[3 * src], feature[3 * src + 1], feature[3 * src + 2]);
            let (mean, skew) = if self.invert {
                (1.0 - mean, -skew)
            } else {
                (mean, skew)
            };
            out[3 * dst] = mean;
            out[3 * dst + 1] = std;
            out[3 * dst + 2] = skew;
        }
        out
    }
}

/// Transform group a tile may have undergone between visits.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformGroup {
    /// Pixel rotations by multiples of 90 degrees and flips. Moments are
    /// invariant under these, so the orbit of any feature is a single point.
    #[default]
    Dihedral,
    ChannelPermutations,
    ChannelPermutationsWithInversion,
    Custom(Vec<FeatureTransform>),
}

const PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

impl TransformGroup {
    /// Transforms whose images form the orbit; always includes the identity.
    pub fn transforms(&self) -> Vec<FeatureTransform> {
        let mut out = vec![FeatureTransform::IDENTITY];
        let extra: Vec<FeatureTransform> = match self {
            TransformGroup::Dihedral => Vec::new(),
            TransformGroup::ChannelPermutations => PERMUTATIONS
                .iter()
                .map(|&channel_order| FeatureTransform {
                    channel_order,
                    invert: false,
                })
                .collect(),
            TransformGroup::ChannelPermutationsWithInversion => PERMUTATIONS
                .iter()
                .flat_map(|&channel_order| {
                    [false, true].map(|invert| FeatureTransform {
                        channel_order,
                        invert,
                    })
                })
                .collect(),
            TransformGroup::Custom(list) => list.clone(),
        };
        for t in extra {
            if !out.contains(&t) {
                out.push(t);
            }
        }
        out
    }
}

pub(crate) fn lexicographic(a: &Feature, b: &Feature) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Lexicographically smallest image of `feature` under `group`.
pub fn canonicalize(feature: &Feature, group: &TransformGroup) -> Feature {
    group
        .transforms()
        .iter()
        .map(|t| t.apply(feature))
        .min_by(lexicographic)
        .unwrap_or(*feature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_moments(pixels: &[f64]) -> (f64, f64, f64) {
        let n = pixels.len() as f64;
        let mean = pixels.iter().sum::<f64>() / n;
        let var = pixels.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
        let third = pixels.iter().map(|p| (p - mean).powi(3)).sum::<f64>() / n;
        (mean, var.sqrt(), third.cbrt())
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn constant_channel_has_zero_spread() {
        let stats = RasterStats {
            channels: vec![ChannelStats::from_pixels([0.4; 16]); 3],
        };
        let f = color_moments(&stats).unwrap();
        for c in 0..3 {
            assert!((f[3 * c] - 0.4).abs() < 1e-15);
            assert_eq!(f[3 * c + 1], 0.0);
            assert_eq!(f[3 * c + 2], 0.0);
        }
    }

    #[test]
    fn two_pixel_channel() {
        let ch = ChannelStats::from_pixels([0.0, 2.0]);
        assert_eq!(ch.mean, 1.0);
        assert_eq!(ch.std_dev(), 1.0);
        assert_eq!(ch.skew_term(), 0.0);
    }

    #[test]
    fn streaming_matches_three_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let pixels: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..255.0)).collect();
            let (mean, std, skew) = naive_moments(&pixels);
            let ch = ChannelStats::from_pixels(pixels.iter().copied());
            assert!(rel_close(ch.mean, mean, 1e-9));
            assert!(rel_close(ch.std_dev(), std, 1e-9));
            assert!(
                rel_close(ch.skew_term(), skew, 1e-9),
                "{} vs {}",
                ch.skew_term(),
                skew
            );
        }
    }

    #[test]
    fn merge_equals_single_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pixels: Vec<f64> = (0..97).map(|_| rng.random::<f64>().powi(2)).collect();
        let whole = ChannelStats::from_pixels(pixels.iter().copied());
        let left = ChannelStats::from_pixels(pixels[..40].iter().copied());
        let right = ChannelStats::from_pixels(pixels[40..].iter().copied());
        let merged = left.merge(&right);
        assert_eq!(merged.count, whole.count);
        assert!(rel_close(merged.mean, whole.mean, 1e-12));
        assert!(rel_close(merged.m2, whole.m2, 1e-12));
        assert!(rel_close(merged.m3, whole.m3, 1e-9));
    }

    #[test]
    fn wrong_channel_count_is_rejected() {
        let stats = RasterStats {
            channels: vec![ChannelStats::from_pixels([1.0]); 2],
        };
        assert!(matches!(
            color_moments(&stats),
            Err(Error::Validation { ref field, .. }) if field == "raster_stats"
        ));
    }

    #[test]
    fn flipped_tile_has_same_canonical_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let side = 8;
        let grid: Vec<[f64; 3]> = (0..side * side)
            .map(|_| [rng.random(), rng.random(), rng.random()])
            .collect();
        let mut flipped = grid.clone();
        for row in flipped.chunks_mut(side) {
            row.reverse();
        }
        let a = canonicalize(
            &color_moments(&RasterStats::from_interleaved(&grid)).unwrap(),
            &TransformGroup::Dihedral,
        );
        let b = canonicalize(
            &color_moments(&RasterStats::from_interleaved(&flipped)).unwrap(),
            &TransformGroup::Dihedral,
        );
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_group_leaves_feature_unchanged() {
        let f = [0.3, 0.1, -0.2, 0.9, 0.05, 0.0, 0.5, 0.2, 0.1];
        assert_eq!(canonicalize(&f, &TransformGroup::Dihedral), f);
    }

    #[test]
    fn canonical_form_is_min_over_enumerated_orbit() {
        let transforms: Vec<FeatureTransform> = [
            ([0, 1, 2], false),
            ([1, 0, 2], false),
            ([2, 1, 0], false),
            ([1, 2, 0], false),
            ([0, 1, 2], true),
            ([1, 0, 2], true),
            ([2, 1, 0], true),
            ([1, 2, 0], true),
        ]
        .into_iter()
        .map(|(channel_order, invert)| FeatureTransform {
            channel_order,
            invert,
        })
        .collect();
        let group = TransformGroup::Custom(transforms.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let f: Feature = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            // Orbit written out by hand rather than through FeatureTransform::apply.
            let mut orbit = Vec::new();
            for t in &transforms {
                let mut img = [0.0; 9];
                for dst in 0..3 {
                    let src = t.channel_order[dst];
                    let sign = if t.invert { -1.0 } else { 1.0 };
                    img[3 * dst] = if t.invert {
                        1.0 - f[3 * src]
                    } else {
                        f[3 * src]
                    };
                    img[3 * dst + 1] = f[3 * src + 1];
                    img[3 * dst + 2] = sign * f[3 * src + 2];
                }
                orbit.push(img);
            }
            let expected = orbit
                .into_iter()
                .reduce(|a, b| if lexicographic(&b, &a).is_lt() { b } else { a })
                .unwrap();
            assert_eq!(canonicalize(&f, &group), expected);
        }
    }
}
