//! Scenario configuration, loaded from TOML.
//!
//! Every field has a default, so an empty document is a valid scenario.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dedup::{Seeding, TransformGroup};
use crate::detector::CounterProfile;
use crate::downlink::{ContactWindow, DownlinkPolicy};
use crate::energy::{daily_budget, HardwareProfile, COMPUTE_SHARE, DAILY_HARVEST_J};
use crate::error::{Error, Result};
use crate::scene::{generate_scene, load_manifest, Scene, SceneSpec};
use crate::tiling::SearchRule;

use super::Method;

/// A built-in preset name or a full inline definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Named<T> {
    Preset(String),
    Inline(T),
}

impl Named<CounterProfile> {
    pub fn resolve(&self) -> Result<CounterProfile> {
        let p = match self {
            Named::Preset(name) => CounterProfile::preset(name)?,
            Named::Inline(p) => p.clone(),
        };
        p.validate()?;
        Ok(p)
    }
}

impl Named<HardwareProfile> {
    pub fn resolve(&self) -> Result<HardwareProfile> {
        let p = match self {
            Named::Preset(name) => HardwareProfile::preset(name)?,
            Named::Inline(p) => p.clone(),
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountersConfig {
    pub space: Named<CounterProfile>,
    pub ground: Named<CounterProfile>,
}

impl Default for CountersConfig {
    fn default() -> Self {
        CountersConfig {
            space: Named::Preset("yolov3-tiny".into()),
            ground: Named::Preset("yolov3".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConfig {
    /// Explicit per-track budget in joules; derived from the harvest when absent.
    pub budget_j: Option<f64>,
    pub harvest_j: f64,
    pub compute_fraction: f64,
    pub tracks_per_day: f64,
    /// Enforce separate compute and downlink sub-budgets.
    pub split: bool,
    pub compute_cap_j: Option<f64>,
    pub downlink_cap_j: Option<f64>,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig {
            budget_j: None,
            harvest_j: DAILY_HARVEST_J,
            compute_fraction: COMPUTE_SHARE,
            tracks_per_day: 1.0,
            split: false,
            compute_cap_j: None,
            downlink_cap_j: None,
        }
    }
}

impl EnergyConfig {
    pub fn budget(&self) -> Result<f64> {
        match self.budget_j {
            Some(b) if b >= 0.0 => Ok(b),
            Some(_) => Err(Error::invalid("energy.budget_j", "must be >= 0")),
            None => {
                if !(self.tracks_per_day > 0.0) {
                    return Err(Error::invalid("energy.tracks_per_day", "must be positive"));
                }
                Ok(daily_budget(self.harvest_j, self.compute_fraction)? / self.tracks_per_day)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub rate_mbps: f64,
    pub contact_s: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            rate_mbps: 50.0,
            contact_s: 360.0,
        }
    }
}

impl LinkConfig {
    pub fn window(&self) -> Result<ContactWindow> {
        ContactWindow::from_mbps(self.contact_s, self.rate_mbps)
    }
}

/// How cluster members contribute to the aggregate count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribution {
    /// Every member takes its representative's final estimate.
    #[default]
    Multiplicity,
    /// Only representatives take the final estimate; members keep their
    /// onboard counts.
    RepresentativesOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DedupConfig {
    pub enabled: bool,
    /// Cluster count; the scene's context count when absent.
    pub k: Option<usize>,
    pub attribution: Attribution,
    pub seeding: Seeding,
    pub max_iter: usize,
    pub tol: f64,
    pub group: TransformGroup,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig {
            enabled: true,
            k: None,
            attribution: Attribution::Multiplicity,
            seeding: Seeding::KMeansPlusPlus,
            max_iter: 100,
            tol: 1e-9,
            group: TransformGroup::Dihedral,
        }
    }
}

/// Cluster count used for manifest scenes when none is configured.
pub const MANIFEST_DEFAULT_K: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TilingConfig {
    /// Search for the tile size; otherwise keep the scene's tiling.
    pub adaptive: bool,
    pub s_min: u32,
    pub s_max: u32,
    pub epsilon: u32,
    pub calibration_sample: usize,
    pub rule: SearchRule,
}

impl Default for TilingConfig {
    fn default() -> Self {
        TilingConfig {
            adaptive: true,
            s_min: 200,
            s_max: 1500,
            epsilon: 10,
            calibration_sample: 64,
            rule: SearchRule::InnerPoints,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Onboard acceptance threshold; the policy's conf_q when absent.
    pub tiansuan_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scene: SceneSpec,
    /// Load tiles from this manifest instead of generating a scene.
    pub manifest: Option<PathBuf>,
    /// Derive a fresh synthetic scene from each run seed.
    pub reseed_scene: bool,
    pub seeds: Vec<u64>,
    pub counters: CountersConfig,
    pub hardware: Named<HardwareProfile>,
    pub energy: EnergyConfig,
    pub link: LinkConfig,
    pub downlink: DownlinkPolicy,
    pub dedup: DedupConfig,
    pub tiling: TilingConfig,
    pub roi_floor: f64,
    pub baselines: BaselineConfig,
    pub methods: Vec<Method>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scene: SceneSpec::default(),
            manifest: None,
            reseed_scene: true,
            seeds: (1..=30).collect(),
            counters: CountersConfig::default(),
            hardware: Named::Preset("rpi4".into()),
            energy: EnergyConfig::default(),
            link: LinkConfig::default(),
            downlink: DownlinkPolicy::default(),
            dedup: DedupConfig::default(),
            tiling: TilingConfig::default(),
            roi_floor: 0.1,
            baselines: BaselineConfig::default(),
            methods: Method::ALL.to_vec(),
        }
    }
}

/// Profiles and limits resolved from a config, ready for a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub space: CounterProfile,
    pub ground: CounterProfile,
    pub hardware: HardwareProfile,
    pub window: ContactWindow,
    pub budget_j: f64,
    pub space_latency_s: f64,
    pub tiansuan_threshold: f64,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<ScenarioConfig> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ScenarioConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(m) = &cfg.manifest {
            if m.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.manifest = Some(dir.join(m));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.resolve()?;
        if self.manifest.is_none() {
            self.scene.validate()?;
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds", "at least one seed is required"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("methods", "at least one method is required"));
        }
        if !(0.0..=1.0).contains(&self.roi_floor) {
            return Err(Error::invalid("roi_floor", "must lie in [0, 1]"));
        }
        if self.dedup.k == Some(0) {
            return Err(Error::invalid("dedup.k", "must be at least 1"));
        }
        if self.dedup.max_iter == 0 {
            return Err(Error::invalid("dedup.max_iter", "must be at least 1"));
        }
        let t = &self.tiling;
        if t.adaptive {
            if t.s_min == 0 || t.s_min >= t.s_max {
                return Err(Error::invalid("tiling.s_min", "need 0 < s_min < s_max"));
            }
            if t.epsilon == 0 {
                return Err(Error::invalid("tiling.epsilon", "must be positive"));
            }
            if t.calibration_sample == 0 {
                return Err(Error::invalid(
                    "tiling.calibration_sample",
                    "must be positive",
                ));
            }
        }
        if let Some(c) = self.energy.compute_cap_j.filter(|c| !(*c >= 0.0)) {
            return Err(Error::invalid(
                "energy.compute_cap_j",
                format!("{c} must be >= 0"),
            ));
        }
        if let Some(c) = self.energy.downlink_cap_j.filter(|c| !(*c >= 0.0)) {
            return Err(Error::invalid(
                "energy.downlink_cap_j",
                format!("{c} must be >= 0"),
            ));
        }
        Ok(())
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let space = self.counters.space.resolve()?;
        let ground = self.counters.ground.resolve()?;
        let hardware = self.hardware.resolve()?;
        let space_latency_s = space.latency(&hardware.name)?;
        self.downlink.validate()?;
        let tiansuan_threshold = self
            .baselines
            .tiansuan_threshold
            .unwrap_or(self.downlink.conf_q);
        if !(0.0..=1.0).contains(&tiansuan_threshold) {
            return Err(Error::invalid(
                "baselines.tiansuan_threshold",
                "must lie in [0, 1]",
            ));
        }
        Ok(Resolved {
            space,
            ground,
            hardware,
            window: self.link.window()?,
            budget_j: self.energy.budget()?,
            space_latency_s,
            tiansuan_threshold,
        })
    }

    /// The base scene: the manifest if one is set, else the generated scene.
    pub fn base_scene(&self) -> Result<Scene> {
        match &self.manifest {
            Some(path) => load_manifest(path),
            None => generate_scene(&self.scene),
        }
    }

    /// Scene used for `seed`: reseeded from the base spec when enabled.
    pub fn scene_for_seed(&self, base: &Scene, seed: u64) -> Result<Scene> {
        match (self.reseed_scene, base.spec()) {
            (true, Some(spec)) => {
                generate_scene(&spec.with_seed(crate::rng::mix(&[spec.seed, seed])))
            }
            _ => Ok(base.clone()),
        }
    }
}
