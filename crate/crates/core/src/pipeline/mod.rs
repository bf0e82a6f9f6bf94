//! End-to-end runs of the collaborative pipeline and its baselines.

mod config;
mod report;
mod run;
mod sweep;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::TileId;

pub use config::{
    Attribution, BaselineConfig, CountersConfig, DedupConfig, EnergyConfig, LinkConfig, Named,
    Resolved, ScenarioConfig, TilingConfig, MANIFEST_DEFAULT_K,
};
pub use report::{read_report_csv, write_report_csv, RunReport, TileOutcome};
pub use run::{
    calibrate_tile_size, run_baseline, run_method, run_method_detailed, run_track, RunOutcome,
};
pub use sweep::{
    parse_seeds, read_rows_csv, select_policy_curve, summarize, sweep, write_summary_csv,
    write_sweep_csv, Axis, PolicyCurveRow, SummaryRow, SweepRow,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Tiling, ROI filter, dedup, onboard counting and throttled downlink.
    #[serde(rename = "targetfuse")]
    TargetFuse,
    SpaceOnly,
    GroundOnly,
    Tiansuan,
    Kodan,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::TargetFuse,
        Method::SpaceOnly,
        Method::GroundOnly,
        Method::Tiansuan,
        Method::Kodan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::TargetFuse => "targetfuse",
            Method::SpaceOnly => "space_only",
            Method::GroundOnly => "ground_only",
            Method::Tiansuan => "tiansuan",
            Method::Kodan => "kodan",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::invalid(
                    "method",
                    format!(
                        "unknown method {s:?}; expected one of {}",
                        Method::ALL.map(Method::name).join(", ")
                    ),
                )
            })
    }
}

/// Count mean absolute error: `Σ|y − g| / Σg` over the shared key set.
pub fn cmae(estimates: &BTreeMap<TileId, u64>, truths: &BTreeMap<TileId, u64>) -> Result<f64> {
    if estimates.len() != truths.len() || estimates.keys().ne(truths.keys()) {
        return Err(Error::invalid(
            "estimates",
            "key set differs from ground truth",
        ));
    }
    let total: u64 = truths.values().sum();
    if total == 0 {
        return Err(Error::UndefinedMetric("ground truth sums to zero".into()));
    }
    let abs_err: u64 = estimates
        .values()
        .zip(truths.values())
        .map(|(&y, &g)| y.abs_diff(g))
        .sum();
    Ok(abs_err as f64 / total as f64)
}
