//! Tile-size search over a unimodal accuracy curve, and the tiling cost model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which pair of points drives each narrowing step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchRule {
    /// Compare the two inner points (standard ternary search).
    #[default]
    InnerPoints,
    /// Compare the interval endpoints but narrow at the inner points.
    Endpoints,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOutcome {
    pub size: u32,
    pub iterations: u32,
    pub evaluations: u32,
}

fn checked<F: FnMut(u32) -> f64>(eval: &mut F, size: u32, evaluations: &mut u32) -> Result<f64> {
    *evaluations += 1;
    let v = eval(size);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteEval { size, value: v })
    }
}

/// Ternary search for the size maximizing `eval` on `[s_min, s_max]`,
/// stopping once the bracket is at most `epsilon` wide.
pub fn optimal_tile_size<F: FnMut(u32) -> f64>(
    eval: F,
    s_min: u32,
    s_max: u32,
    epsilon: u32,
) -> Result<u32> {
    search_tile_size(eval, s_min, s_max, epsilon, SearchRule::InnerPoints).map(|o| o.size)
}

pub fn search_tile_size<F: FnMut(u32) -> f64>(
    mut eval: F,
    s_min: u32,
    s_max: u32,
    epsilon: u32,
    rule: SearchRule,
) -> Result<SearchOutcome> {
    if s_min >= s_max {
        return Err(Error::invalid(
            "s_min",
            format!("{s_min} must be below s_max {s_max}"),
        ));
    }
    if epsilon == 0 {
        return Err(Error::invalid("epsilon", "must be positive"));
    }
    let (mut l, mut r) = (s_min, s_max);
    let mut iterations = 0;
    let mut evaluations = 0;
    while r - l > epsilon {
        iterations += 1;
        let third = ((r - l) / 3).max(1);
        let midl = l + third;
        let midr = r - third;
        let go_right = match rule {
            SearchRule::InnerPoints => {
                checked(&mut eval, midl, &mut evaluations)?
                    < checked(&mut eval, midr, &mut evaluations)?
            }
            SearchRule::Endpoints => {
                checked(&mut eval, l, &mut evaluations)? < checked(&mut eval, r, &mut evaluations)?
            }
        };
        if go_right {
            l = midl;
        } else {
            r = midr;
        }
    }
    Ok(SearchOutcome {
        size: l + (r - l) / 2,
        iterations,
        evaluations,
    })
}

/// Exhaustive argmax over `s_min, s_min + step, ... ≤ s_max`; ties go to the
/// smaller size.
pub fn brute_force_tile_size<F: FnMut(u32) -> f64>(
    mut eval: F,
    s_min: u32,
    s_max: u32,
    step: u32,
) -> Result<u32> {
    if step == 0 {
        return Err(Error::invalid("step", "must be at least 1"));
    }
    if s_min > s_max {
        return Err(Error::invalid("s_min", "empty grid"));
    }
    let mut evaluations = 0;
    let mut best = (s_min, checked(&mut eval, s_min, &mut evaluations)?);
    let mut s = s_min;
    while let Some(next) = s.checked_add(step).filter(|&n| n <= s_max) {
        s = next;
        let v = checked(&mut eval, s, &mut evaluations)?;
        if v > best.1 {
            best = (s, v);
        }
    }
    Ok(best.0)
}

pub fn tiles_per_frame(width: u32, height: u32, tile_size: u32) -> u64 {
    width.div_ceil(tile_size) as u64 * height.div_ceil(tile_size) as u64
}

/// Seconds to run a counter over every tile of one frame.
pub fn execution_cost(width: u32, height: u32, tile_size: u32, per_tile_latency: f64) -> f64 {
    tiles_per_frame(width, height, tile_size) as f64 * per_tile_latency
}
