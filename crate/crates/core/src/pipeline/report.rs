use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Method;

/// Where a tile's final estimate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TileOutcome {
    /// Counted on the ground.
    Transmitted,
    /// Its own onboard count stands.
    SpaceCounted,
    /// Takes its cluster representative's estimate.
    Deduplicated,
    /// Dropped by the downlink plan; estimate 0.
    Discarded,
    /// Dropped by the ROI filter; estimate 0.
    RoiDropped,
    /// Neither counted onboard nor transmitted; estimate 0.
    Unprocessed,
}

/// One run's summary. The tile outcome counts partition `tiles_total`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub seed: u64,
    /// Common tile size, or 0 when tiles differ in size.
    pub tile_size: u32,
    pub tiles_total: u64,
    /// Tiles run through the onboard counter (not part of the partition).
    pub processed: u64,
    pub unprocessed: u64,
    pub roi_dropped: u64,
    pub deduplicated: u64,
    pub transmitted: u64,
    pub space_counted: u64,
    pub discarded: u64,
    pub representatives: u64,
    pub bytes_downlinked: u64,
    /// Link capacity of the contact window in bytes.
    pub capacity_bytes: u64,
    pub effective_conf_q: f64,
    pub energy_capture_j: f64,
    pub energy_compute_j: f64,
    pub energy_aggregate_j: f64,
    pub energy_downlink_j: f64,
    pub energy_total_j: f64,
    pub budget_exhausted: bool,
    /// Simulated busy time: onboard inference plus transmission.
    pub sim_seconds: f64,
    pub cmae: f64,
    pub truth_total: u64,
    pub estimate_total: u64,
}

pub const REPORT_HEADER: [&str; 25] = [
    "method",
    "seed",
    "tile_size",
    "tiles_total",
    "processed",
    "unprocessed",
    "roi_dropped",
    "deduplicated",
    "transmitted",
    "space_counted",
    "discarded",
    "representatives",
    "bytes_downlinked",
    "capacity_bytes",
    "effective_conf_q",
    "energy_capture_j",
    "energy_compute_j",
    "energy_aggregate_j",
    "energy_downlink_j",
    "energy_total_j",
    "budget_exhausted",
    "sim_seconds",
    "cmae",
    "truth_total",
    "estimate_total",
];

impl RunReport {
    pub fn partition_total(&self) -> u64 {
        self.unprocessed
            + self.roi_dropped
            + self.deduplicated
            + self.transmitted
            + self.space_counted
            + self.discarded
    }

    pub fn to_record(&self) -> Vec<String> {
        vec![
            self.method.name().to_string(),
            self.seed.to_string(),
            self.tile_size.to_string(),
            self.tiles_total.to_string(),
            self.processed.to_string(),
            self.unprocessed.to_string(),
            self.roi_dropped.to_string(),
            self.deduplicated.to_string(),
            self.transmitted.to_string(),
            self.space_counted.to_string(),
            self.discarded.to_string(),
            self.representatives.to_string(),
            self.bytes_downlinked.to_string(),
            self.capacity_bytes.to_string(),
            self.effective_conf_q.to_string(),
            self.energy_capture_j.to_string(),
            self.energy_compute_j.to_string(),
            self.energy_aggregate_j.to_string(),
            self.energy_downlink_j.to_string(),
            self.energy_total_j.to_string(),
            self.budget_exhausted.to_string(),
            self.sim_seconds.to_string(),
            self.cmae.to_string(),
            self.truth_total.to_string(),
            self.estimate_total.to_string(),
        ]
    }

    /// Parses the `REPORT_HEADER` columns starting at `offset`.
    pub fn from_record(rec: &csv::StringRecord, offset: usize, line: usize) -> Result<RunReport> {
        let field = |i: usize| -> Result<&str> {
            rec.get(offset + i).ok_or_else(|| Error::Parse {
                path: "<report>".into(),
                line,
                reason: format!("missing column {}", REPORT_HEADER[i]),
            })
        };
        fn num<T: std::str::FromStr>(s: &str, name: &str, line: usize) -> Result<T> {
            s.parse().map_err(|_| Error::Parse {
                path: "<report>".into(),
                line,
                reason: format!("bad {name} value {s:?}"),
            })
        }
        macro_rules! get {
            ($i:expr) => {
                num(field($i)?, REPORT_HEADER[$i], line)?
            };
        }
        Ok(RunReport {
            method: field(0)?.parse()?,
            seed: get!(1),
            tile_size: get!(2),
            tiles_total: get!(3),
            processed: get!(4),
            unprocessed: get!(5),
            roi_dropped: get!(6),
            deduplicated: get!(7),
            transmitted: get!(8),
            space_counted: get!(9),
            discarded: get!(10),
            representatives: get!(11),
            bytes_downlinked: get!(12),
            capacity_bytes: get!(13),
            effective_conf_q: get!(14),
            energy_capture_j: get!(15),
            energy_compute_j: get!(16),
            energy_aggregate_j: get!(17),
            energy_downlink_j: get!(18),
            energy_total_j: get!(19),
            budget_exhausted: get!(20),
            sim_seconds: get!(21),
            cmae: get!(22),
            truth_total: get!(23),
            estimate_total: get!(24),
        })
    }
}

pub fn write_report_csv<W: Write>(reports: &[RunReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in reports {
        w.write_record(r.to_record())?;
    }
    w.flush().map_err(|e| Error::io("<report>", e))?;
    Ok(())
}

pub fn read_report_csv<R: Read>(input: R) -> Result<Vec<RunReport>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(REPORT_HEADER) {
        return Err(Error::Parse {
            path: "<report>".into(),
            line: 1,
            reason: "unexpected header".into(),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        out.push(RunReport::from_record(&rec?, 0, i + 2)?);
    }
    Ok(out)
}
