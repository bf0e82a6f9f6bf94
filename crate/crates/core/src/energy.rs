//! Energy accounting for capture, compute, aggregation and downlink.
//!
//! The ledger stores integer microjoules so that accepted charges sum
//! exactly, whatever order they arrive in.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MICROJOULES_PER_JOULE: f64 = 1e6;

/// Daily harvest quoted for a small satellite, in joules.
pub const DAILY_HARVEST_J: f64 = 260_000.0;
/// Share of the harvest allotted to computing.
pub const COMPUTE_SHARE: f64 = 0.577;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Capture,
    Compute,
    Aggregate,
    Downlink,
}

impl Activity {
    pub const ALL: [Activity; 4] = [
        Activity::Capture,
        Activity::Compute,
        Activity::Aggregate,
        Activity::Downlink,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Activity::Capture => "capture",
            Activity::Compute => "compute",
            Activity::Aggregate => "aggregate",
            Activity::Downlink => "downlink",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareProfile {
    pub name: String,
    /// Watts drawn while running the onboard counter.
    pub compute_power: f64,
    /// Watts drawn while transmitting.
    pub radio_power: f64,
    pub capture_energy_per_frame: f64,
    pub aggregate_energy_per_track: f64,
}

pub const HARDWARE_PRESETS: [&str; 2] = ["rpi4", "atlas"];

impl HardwareProfile {
    pub fn preset(name: &str) -> Result<HardwareProfile> {
        let compute_power = match name {
            "rpi4" => 6.0,
            "atlas" => 13.0,
            other => {
                return Err(Error::invalid(
                    "hardware",
                    format!("unknown preset {other:?}; expected one of {HARDWARE_PRESETS:?}"),
                ))
            }
        };
        Ok(HardwareProfile {
            name: name.into(),
            compute_power,
            radio_power: 10.0,
            capture_energy_per_frame: 0.05,
            aggregate_energy_per_track: 1.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !(self.compute_power > 0.0 && self.compute_power.is_finite()) {
            return Err(Error::invalid("hardware.compute_power", "must be positive"));
        }
        for (field, v) in [
            ("hardware.radio_power", self.radio_power),
            (
                "hardware.capture_energy_per_frame",
                self.capture_energy_per_frame,
            ),
            (
                "hardware.aggregate_energy_per_track",
                self.aggregate_energy_per_track,
            ),
        ] {
            if !ok(v) {
                return Err(Error::invalid(field, "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

pub fn daily_budget(harvest_joules: f64, compute_fraction: f64) -> Result<f64> {
    if !(compute_fraction > 0.0 && compute_fraction <= 1.0) {
        return Err(Error::invalid("compute_fraction", "must lie in (0, 1]"));
    }
    if !(harvest_joules >= 0.0) {
        return Err(Error::invalid("harvest_joules", "must be >= 0"));
    }
    Ok(harvest_joules * compute_fraction)
}

pub fn compute_energy(profile: &HardwareProfile, seconds: f64) -> f64 {
    profile.compute_power * seconds
}

pub fn downlink_energy(profile: &HardwareProfile, bytes: u64, rate_bps: f64) -> f64 {
    profile.radio_power * (bytes as f64 * 8.0 / rate_bps)
}

/// Joules to microjoules, rounded; infinity saturates.
///
/// # Panics
/// On negative or NaN input.
pub fn to_micro(joules: f64) -> u64 {
    assert!(joules >= 0.0, "energy must be non-negative, got {joules}");
    let v = (joules * MICROJOULES_PER_JOULE).round();
    if v >= u64::MAX as f64 {
        u64::MAX
    } else {
        v as u64
    }
}

pub fn from_micro(micro: u64) -> f64 {
    if micro == u64::MAX {
        f64::INFINITY
    } else {
        micro as f64 / MICROJOULES_PER_JOULE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BudgetExhausted {
    pub activity: Activity,
    /// Microjoules beyond what the binding limit allows.
    pub shortfall_micro: u64,
}

impl BudgetExhausted {
    pub fn shortfall(&self) -> f64 {
        from_micro(self.shortfall_micro)
    }
}

impl fmt::Display for BudgetExhausted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} budget exhausted (short {} J)",
            self.activity,
            self.shortfall()
        )
    }
}

impl std::error::Error for BudgetExhausted {}

/// Shared budget with optional per-activity caps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnergyLedger {
    budget: u64,
    caps: [Option<u64>; 4],
    spent: [u64; 4],
}

impl EnergyLedger {
    pub fn new(budget_joules: f64) -> EnergyLedger {
        EnergyLedger {
            budget: to_micro(budget_joules),
            caps: [None; 4],
            spent: [0; 4],
        }
    }

    pub fn unlimited() -> EnergyLedger {
        EnergyLedger::new(f64::INFINITY)
    }

    /// Adds a sub-budget that `activity` may not exceed.
    pub fn with_cap(mut self, activity: Activity, joules: f64) -> EnergyLedger {
        self.caps[activity.index()] = Some(to_micro(joules));
        self
    }

    pub fn charge(&mut self, activity: Activity, joules: f64) -> Result<(), BudgetExhausted> {
        self.charge_micro(activity, to_micro(joules))
    }

    pub fn charge_micro(&mut self, activity: Activity, micro: u64) -> Result<(), BudgetExhausted> {
        let i = activity.index();
        let total_after = self.spent_total_micro() as u128 + micro as u128;
        let mut shortfall = total_after.saturating_sub(self.budget as u128);
        if let Some(cap) = self.caps[i] {
            let own_after = self.spent[i] as u128 + micro as u128;
            shortfall = shortfall.max(own_after.saturating_sub(cap as u128));
        }
        if shortfall > 0 {
            return Err(BudgetExhausted {
                activity,
                shortfall_micro: shortfall.min(u64::MAX as u128) as u64,
            });
        }
        self.spent[i] += micro;
        Ok(())
    }

    pub fn budget(&self) -> f64 {
        from_micro(self.budget)
    }

    pub fn budget_micro(&self) -> u64 {
        self.budget
    }

    pub fn cap(&self, activity: Activity) -> Option<f64> {
        self.caps[activity.index()].map(from_micro)
    }

    pub fn spent(&self, activity: Activity) -> f64 {
        from_micro(self.spent[activity.index()])
    }

    pub fn spent_micro(&self, activity: Activity) -> u64 {
        self.spent[activity.index()]
    }

    pub fn spent_total_micro(&self) -> u64 {
        self.spent.iter().sum()
    }

    pub fn spent_total(&self) -> f64 {
        from_micro(self.spent_total_micro())
    }

    /// Microjoules `activity` may still draw.
    pub fn headroom_micro(&self, activity: Activity) -> u64 {
        let shared = self.budget - self.spent_total_micro();
        match self.caps[activity.index()] {
            Some(cap) => shared.min(cap - self.spent[activity.index()]),
            None => shared,
        }
    }
}
