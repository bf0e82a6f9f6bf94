//! Parameter sweeps: axis values × seeds × methods, run in parallel and
//! returned in a fixed order.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::CounterProfile;
use crate::downlink::PolicyKind;
use crate::error::{Error, Result};
use crate::scene::Scene;

use super::config::{Named, ScenarioConfig};
use super::report::{RunReport, REPORT_HEADER};
use super::run::run_method;
use super::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Link rate in Mbps.
    Bandwidth,
    /// Contact window in seconds.
    ContactTime,
    /// Energy budget in joules (the compute cap when budgets are split).
    Energy,
    /// Hardware preset name.
    Hardware,
    /// Onboard counter preset name.
    Counter,
    /// Dedup cluster count.
    K,
}

impl Axis {
    pub const ALL: [Axis; 6] = [
        Axis::Bandwidth,
        Axis::ContactTime,
        Axis::Energy,
        Axis::Hardware,
        Axis::Counter,
        Axis::K,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Bandwidth => "bandwidth",
            Axis::ContactTime => "contact_time",
            Axis::Energy => "energy",
            Axis::Hardware => "hardware",
            Axis::Counter => "counter",
            Axis::K => "k",
        }
    }

    /// `cfg` with this axis set to `value`.
    pub fn apply(self, cfg: &ScenarioConfig, value: &str) -> Result<ScenarioConfig> {
        let mut out = cfg.clone();
        let number = || -> Result<f64> {
            value
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(self.name(), format!("{value:?} is not a number")))
        };
        match self {
            Axis::Bandwidth => out.link.rate_mbps = number()?,
            Axis::ContactTime => out.link.contact_s = number()?,
            Axis::Energy => {
                if out.energy.split {
                    out.energy.compute_cap_j = Some(number()?);
                } else {
                    out.energy.budget_j = Some(number()?);
                }
            }
            Axis::Hardware => out.hardware = Named::Preset(value.trim().to_string()),
            Axis::Counter => {
                CounterProfile::preset(value.trim())?;
                out.counters.space = Named::Preset(value.trim().to_string());
            }
            Axis::K => {
                let k = value
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| Error::invalid("k", format!("{value:?} is not a count")))?;
                out.dedup.k = Some(k);
            }
        }
        out.validate()?;
        Ok(out)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Axis> {
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::invalid(
                    "axis",
                    format!(
                        "unknown axis {s:?}; expected one of {}",
                        Axis::ALL.map(Axis::name).join(", ")
                    ),
                )
            })
    }
}

/// Seeds from `"1..30"` (inclusive), `"1..=30"`, or a comma list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::invalid("seeds", format!("cannot parse {text:?}"));
    let text = text.trim();
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (a, b): (u64, u64) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        );
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        text.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(Error::invalid("seeds", "no seeds given"));
    }
    Ok(seeds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub report: RunReport,
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Per-seed scenes, generated once and shared across cells.
fn scenes_for_seeds(cfg: &ScenarioConfig, base: &Scene) -> Result<BTreeMap<u64, Scene>> {
    cfg.seeds
        .par_iter()
        .map(|&s| Ok((s, cfg.scene_for_seed(base, s)?)))
        .collect()
}

/// Runs every (value, seed, method) cell; rows come back in that nesting
/// order regardless of `jobs`.
pub fn sweep(
    cfg: &ScenarioConfig,
    axis: Axis,
    values: &[String],
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::invalid(
            "values",
            "at least one axis value is required",
        ));
    }
    let configs: Vec<ScenarioConfig> = values
        .iter()
        .map(|v| axis.apply(cfg, v))
        .collect::<Result<_>>()?;
    let base = cfg.base_scene()?;
    pool(jobs)?.install(|| {
        let scenes = scenes_for_seeds(cfg, &base)?;
        let cells: Vec<(usize, u64, Method)> = (0..values.len())
            .flat_map(|v| {
                cfg.seeds
                    .iter()
                    .flat_map(move |&s| cfg.methods.iter().map(move |&m| (v, s, m)))
            })
            .collect();
        cells
            .par_iter()
            .map(|&(v, seed, method)| {
                let report = run_method(&scenes[&seed], &configs[v], seed, method)?;
                Ok(SweepRow {
                    axis: axis.name().to_string(),
                    value: values[v].trim().to_string(),
                    report,
                })
            })
            .collect()
    })
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["axis", "value"];
    header.extend(REPORT_HEADER);
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.axis.clone(), row.value.clone()];
        rec.extend(row.report.to_record());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<sweep>", e))?;
    Ok(())
}

/// Reads sweep rows, or plain report rows (axis and value left empty).
pub fn read_rows_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    let offset = if header.get(0) == Some("axis") && header.get(1) == Some("value") {
        2
    } else {
        0
    };
    if header.iter().skip(offset).ne(REPORT_HEADER) {
        return Err(Error::Parse {
            path: "<rows>".into(),
            line: 1,
            reason: "unrecognized header".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let (axis, value) = if offset == 2 {
            (rec[0].to_string(), rec[1].to_string())
        } else {
            (String::new(), String::new())
        };
        rows.push(SweepRow {
            axis,
            value,
            report: RunReport::from_record(&rec, offset, i + 2)?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub axis: String,
    pub value: String,
    pub method: Method,
    pub runs: u64,
    pub cmae_mean: f64,
    pub cmae_std: f64,
    pub bytes_mean: f64,
    pub processed_mean: f64,
    pub transmitted_mean: f64,
    pub energy_total_mean: f64,
    /// Mean downlinked bytes per unit of CMAE reduction against space_only at
    /// the same axis value; `None` without a space_only group or a reduction.
    pub bytes_per_cmae_reduction: Option<f64>,
}

/// Per-(axis value, method) means, in first-appearance order.
pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String, Method)> = Vec::new();
    let mut groups: BTreeMap<(String, String, Method), Vec<&RunReport>> = BTreeMap::new();
    for row in rows {
        let key = (row.axis.clone(), row.value.clone(), row.report.method);
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                keys.push(key);
                Vec::new()
            })
            .push(&row.report);
    }
    let mut out: Vec<SummaryRow> = keys
        .into_iter()
        .map(|key| {
            let group = &groups[&key];
            let n = group.len() as f64;
            let mean = |f: &dyn Fn(&RunReport) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
            let cmae_mean = mean(&|r| r.cmae);
            let cmae_std = if group.len() > 1 {
                (group
                    .iter()
                    .map(|r| (r.cmae - cmae_mean).powi(2))
                    .sum::<f64>()
                    / (n - 1.0))
                    .sqrt()
            } else {
                0.0
            };
            SummaryRow {
                axis: key.0,
                value: key.1,
                method: key.2,
                runs: group.len() as u64,
                cmae_mean,
                cmae_std,
                bytes_mean: mean(&|r| r.bytes_downlinked as f64),
                processed_mean: mean(&|r| r.processed as f64),
                transmitted_mean: mean(&|r| r.transmitted as f64),
                energy_total_mean: mean(&|r| r.energy_total_j),
                bytes_per_cmae_reduction: None,
            }
        })
        .collect();

    let baseline: BTreeMap<(String, String), f64> = out
        .iter()
        .filter(|r| r.method == Method::SpaceOnly)
        .map(|r| ((r.axis.clone(), r.value.clone()), r.cmae_mean))
        .collect();
    for r in &mut out {
        let reduction = baseline
            .get(&(r.axis.clone(), r.value.clone()))
            .map(|base| base - r.cmae_mean);
        if let Some(d) = reduction.filter(|&d| d > 0.0) {
            r.bytes_per_cmae_reduction = Some(r.bytes_mean / d);
        }
    }
    out
}

pub const SUMMARY_HEADER: [&str; 11] = [
    "axis",
    "value",
    "method",
    "runs",
    "cmae_mean",
    "cmae_std",
    "bytes_mean",
    "processed_mean",
    "transmitted_mean",
    "energy_total_mean",
    "bytes_per_cmae_reduction",
];

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.axis.clone(),
            r.value.clone(),
            r.method.name().to_string(),
            r.runs.to_string(),
            r.cmae_mean.to_string(),
            r.cmae_std.to_string(),
            r.bytes_mean.to_string(),
            r.processed_mean.to_string(),
            r.transmitted_mean.to_string(),
            r.energy_total_mean.to_string(),
            r.bytes_per_cmae_reduction
                .map_or_else(String::new, |v| v.to_string()),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<summary>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyCurveRow {
    pub contact_s: f64,
    pub policy: PolicyKind,
    pub cmae_mean: f64,
    pub runs: usize,
}

/// Mean CMAE of the collaborative pipeline under `policy` at each contact
/// time, over the configured seeds.
pub fn select_policy_curve(
    scene: &Scene,
    cfg: &ScenarioConfig,
    policy: PolicyKind,
    contact_times: &[f64],
) -> Result<Vec<PolicyCurveRow>> {
    if contact_times.is_empty() {
        return Err(Error::invalid(
            "contact_times",
            "at least one contact time is required",
        ));
    }
    let scenes = scenes_for_seeds(cfg, scene)?;
    contact_times
        .iter()
        .map(|&t| {
            let mut c = cfg.clone();
            c.link.contact_s = t;
            c.downlink.kind = policy;
            c.validate()?;
            let scores: Vec<f64> = cfg
                .seeds
                .par_iter()
                .map(|&s| run_method(&scenes[&s], &c, s, Method::TargetFuse).map(|r| r.cmae))
                .collect::<Result<_>>()?;
            Ok(PolicyCurveRow {
                contact_s: t,
                policy,
                cmae_mean: scores.iter().sum::<f64>() / scores.len() as f64,
                runs: scores.len(),
            })
        })
        .collect()
}
