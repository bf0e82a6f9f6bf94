use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Frame;

/// Pixel rectangle `[x, x + width) × [y, y + height)` inside a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TileRegion {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl TileRegion {
    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn fits_in(&self, frame_width: u32, frame_height: u32) -> bool {
        self.width > 0
            && self.height > 0
            && self.x as u64 + self.width as u64 <= frame_width as u64
            && self.y as u64 + self.height as u64 <= frame_height as u64
    }

    pub fn intersects(&self, other: &TileRegion) -> bool {
        self.x < other.x + other.width
            && other.x < self.x + self.width
            && self.y < other.y + other.height
            && other.y < self.y + self.height
    }
}

/// Row-major grid of `tile_size` squares covering the frame; the last row and
/// column are clipped to the frame edge.
pub fn enumerate_tiles(frame: &Frame, tile_size: u32) -> Result<Vec<TileRegion>> {
    if tile_size == 0 {
        return Err(Error::invalid("tile_size", "must be positive"));
    }
    if tile_size > frame.width.min(frame.height) {
        return Err(Error::invalid(
            "tile_size",
            format!(
                "{tile_size} exceeds the smaller frame dimension ({})",
                frame.width.min(frame.height)
            ),
        ));
    }
    let cols = frame.width.div_ceil(tile_size);
    let rows = frame.height.div_ceil(tile_size);
    let mut out = Vec::with_capacity(cols as usize * rows as usize);
    for r in 0..rows {
        let y = r * tile_size;
        for c in 0..cols {
            let x = c * tile_size;
            out.push(TileRegion {
                x,
                y,
                width: tile_size.min(frame.width - x),
                height: tile_size.min(frame.height - y),
            });
        }
    }
    Ok(out)
}

/// The eight symmetries of a rectangle grid (rotations are clockwise).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dihedral {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    FlipHorizontal,
    FlipVertical,
    Transpose,
    AntiTranspose,
}

impl Dihedral {
    pub const ALL: [Dihedral; 8] = [
        Dihedral::Identity,
        Dihedral::Rot90,
        Dihedral::Rot180,
        Dihedral::Rot270,
        Dihedral::FlipHorizontal,
        Dihedral::FlipVertical,
        Dihedral::Transpose,
        Dihedral::AntiTranspose,
    ];

    /// Non-identity transforms that map a frame onto itself.
    pub fn revisit_transforms(square: bool) -> Vec<Dihedral> {
        Dihedral::ALL
            .into_iter()
            .filter(|t| *t != Dihedral::Identity && (square || !t.swaps_axes()))
            .collect()
    }

    pub fn swaps_axes(self) -> bool {
        matches!(
            self,
            Dihedral::Rot90 | Dihedral::Rot270 | Dihedral::Transpose | Dihedral::AntiTranspose
        )
    }

    pub fn inverse(self) -> Dihedral {
        match self {
            Dihedral::Rot90 => Dihedral::Rot270,
            Dihedral::Rot270 => Dihedral::Rot90,
            other => other,
        }
    }

    /// Image of `r` when a `width × height` frame is transformed.
    pub fn apply(self, r: &TileRegion, width: u32, height: u32) -> TileRegion {
        let (x, y, w, h) = (r.x, r.y, r.width, r.height);
        let (nx, ny, nw, nh) = match self {
            Dihedral::Identity => (x, y, w, h),
            Dihedral::Rot90 => (height - y - h, x, h, w),
            Dihedral::Rot180 => (width - x - w, height - y - h, w, h),
            Dihedral::Rot270 => (y, width - x - w, h, w),
            Dihedral::FlipHorizontal => (width - x - w, y, w, h),
            Dihedral::FlipVertical => (x, height - y - h, w, h),
            Dihedral::Transpose => (y, x, h, w),
            Dihedral::AntiTranspose => (height - y - h, width - x - w, h, w),
        };
        TileRegion {
            x: nx,
            y: ny,
            width: nw,
            height: nh,
        }
    }
}
