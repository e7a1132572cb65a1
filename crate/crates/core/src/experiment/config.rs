//! Experiment configuration files (TOML).
//!
//! ```toml
//! engine = "pair-gge"        # ed | dtwa | pair-gge | pair-canonical
//! seed = 7
//! n_realizations = 20
//!
//! [cloud]
//! preset = "strong"          # weak | strong | vdw
//! n = 100                    # fewer spins at the preset density
//!
//! [fields]
//! values_mhz = [-1.0, 0.0, 1.0]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::presets::PresetName;
use crate::couplings::{InteractionKind, InteractionLaw};
use crate::dtwa::DtwaSettings;
use crate::ed::ED_LIMIT;
use crate::error::{Error, Result};
use crate::geometry::{default_max_attempts, CloudGeometry, CloudShape};
use crate::pairs::{EnsembleKind, MatchingMethod, MeanFieldSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    Ed,
    Dtwa,
    PairGge,
    PairCanonical,
}

impl Engine {
    pub fn name(&self) -> &'static str {
        match self {
            Engine::Ed => "ed",
            Engine::Dtwa => "dtwa",
            Engine::PairGge => "pair-gge",
            Engine::PairCanonical => "pair-canonical",
        }
    }

    /// Whether the engine produces time traces.
    pub fn has_traces(&self) -> bool {
        matches!(self, Engine::Ed | Engine::Dtwa)
    }

    pub fn ensemble(&self) -> Option<EnsembleKind> {
        match self {
            Engine::PairGge => Some(EnsembleKind::GgeMeanField),
            Engine::PairCanonical => Some(EnsembleKind::CanonicalGlobal),
            _ => None,
        }
    }
}

/// How the late-time value is read off a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LateMode {
    /// Mean over the final 10% of `[0, t_late]`.
    #[default]
    Window,
    /// The sample at `t_late`.
    Last,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudConfig {
    pub preset: Option<PresetName>,
    pub n: Option<usize>,
    pub shape: Option<CloudShape>,
    pub radii_um: Option<[f64; 3]>,
    pub r_bl_um: Option<f64>,
    pub max_attempts: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionConfig {
    /// `dipolar-48S48P` or `vdw-61S62S`.
    pub preset: Option<String>,
    pub kind: Option<InteractionKind>,
    pub c_a: Option<f64>,
    pub exponent: Option<u32>,
    pub delta: Option<f64>,
    pub angular: Option<bool>,
    /// Drop couplings beyond this distance (um).
    pub cutoff_um: Option<f64>,
}

/// Transverse-field grid. Explicit `values_mhz` win; otherwise a symmetric
/// grid with `inner_points` steps per side up to `inner_mhz` and
/// `outer_points` further steps per side up to `max_mhz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldsConfig {
    pub values_mhz: Option<Vec<f64>>,
    pub inner_mhz: Option<f64>,
    pub max_mhz: Option<f64>,
    pub inner_points: usize,
    pub outer_points: usize,
}

impl Default for FieldsConfig {
    fn default() -> Self {
        Self {
            values_mhz: None,
            inner_mhz: None,
            max_mhz: None,
            inner_points: 10,
            outer_points: 8,
        }
    }
}

/// Time grid. Explicit `values_us` win; otherwise `points` uniform samples on
/// `[0, stop_us]` with `stop_us` defaulting to `t_late_us`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimesConfig {
    pub values_us: Option<Vec<f64>>,
    pub stop_us: Option<f64>,
    pub points: usize,
}

impl Default for TimesConfig {
    fn default() -> Self {
        Self {
            values_us: None,
            stop_us: None,
            points: 101,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("output"),
        }
    }
}

fn default_seed() -> u64 {
    1
}
fn default_one() -> usize {
    1
}
fn default_n_traj() -> usize {
    1000
}
fn default_t_late() -> f64 {
    10.0
}
fn default_rescale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub engine: Engine,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_one")]
    pub n_realizations: usize,
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    #[serde(default = "default_t_late")]
    pub t_late_us: f64,
    #[serde(default)]
    pub late_mode: LateMode,
    /// Multiplies every pair coupling in the pair engines.
    #[serde(default = "default_rescale")]
    pub rescale: f64,
    #[serde(default)]
    pub matching: MatchingMethod,
    #[serde(default)]
    pub cloud: CloudConfig,
    #[serde(default)]
    pub interaction: InteractionConfig,
    #[serde(default)]
    pub fields: FieldsConfig,
    #[serde(default)]
    pub times: TimesConfig,
    #[serde(default)]
    pub dtwa: DtwaSettings,
    #[serde(default)]
    pub mean_field: MeanFieldSettings,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Cloud parameters after applying preset defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedCloud {
    pub geometry: CloudGeometry,
    pub n: usize,
    pub r_bl: f64,
    pub max_attempts: usize,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a TOML config, or the `config` member of a run manifest (`.json`).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            let value: serde_json::Value = serde_json::from_str(&text)?;
            let inner = value
                .get("config")
                .ok_or_else(|| Error::config("config", "manifest has no `config` member"))?;
            let cfg: Self = serde_json::from_value(inner.clone())
                .map_err(|e| Error::ConfigParse(e.to_string()))?;
            cfg.validate()?;
            Ok(cfg)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_realizations == 0 {
            return Err(Error::config("n_realizations", "must be at least 1"));
        }
        if !(self.t_late_us > 0.0 && self.t_late_us.is_finite()) {
            return Err(Error::config("t_late_us", "must be positive"));
        }
        if !(self.rescale > 0.0 && self.rescale.is_finite()) {
            return Err(Error::config("rescale", "must be positive"));
        }
        if self.engine == Engine::Dtwa && self.n_traj < 2 {
            return Err(Error::config(
                "n_traj",
                "DTWA needs at least 2 trajectories",
            ));
        }
        self.dtwa
            .validate()
            .map_err(|e| Error::config("dtwa", e.to_string()))?;
        self.mean_field
            .validate()
            .map_err(|e| Error::config("mean_field", e.to_string()))?;
        let cloud = self.resolve_cloud()?;
        if cloud.n < 2 {
            return Err(Error::config("cloud.n", "need at least 2 spins"));
        }
        if self.engine == Engine::Ed && cloud.n > ED_LIMIT {
            return Err(Error::config(
                "cloud.n",
                format!(
                    "engine `ed` supports at most {ED_LIMIT} spins, got {}",
                    cloud.n
                ),
            ));
        }
        self.resolve_law()?;
        if let Some(c) = self.interaction.cutoff_um {
            if !(c > 0.0) {
                return Err(Error::config("interaction.cutoff_um", "must be positive"));
            }
        }
        if let Some(v) = &self.fields.values_mhz {
            if v.is_empty() {
                return Err(Error::config("fields.values_mhz", "field list is empty"));
            }
            if v.iter().any(|w| !w.is_finite()) {
                return Err(Error::config(
                    "fields.values_mhz",
                    "field values must be finite",
                ));
            }
        } else if self.fields.inner_points == 0 {
            return Err(Error::config("fields.inner_points", "must be at least 1"));
        }
        if self.engine.has_traces() {
            let times = self.time_grid()?;
            if !times
                .iter()
                .any(|&t| (t - self.t_late_us).abs() <= 1e-9 * self.t_late_us)
            {
                return Err(Error::config(
                    "t_late_us",
                    "t_late must be one of the trace times",
                ));
            }
        }
        Ok(())
    }

    pub fn resolve_cloud(&self) -> Result<ResolvedCloud> {
        let c = &self.cloud;
        let preset = c.preset.map(PresetName::preset);
        let n = match (c.n, preset) {
            (Some(n), _) => n,
            (None, Some(p)) => p.n,
            (None, None) => {
                return Err(Error::config("cloud.n", "required without a cloud preset"))
            }
        };
        let geometry = match (c.radii_um, preset) {
            (Some(radii), _) => CloudGeometry::new(c.shape.unwrap_or(CloudShape::Box), radii)
                .map_err(|e| Error::config("cloud.radii_um", e.to_string()))?,
            (None, Some(p)) => {
                if c.shape.is_some_and(|s| s != CloudShape::Box) {
                    return Err(Error::config(
                        "cloud.shape",
                        "preset clouds are boxes; give radii_um as well",
                    ));
                }
                p.geometry_for(n)
            }
            (None, None) => {
                return Err(Error::config(
                    "cloud.radii_um",
                    "required without a cloud preset",
                ))
            }
        };
        let r_bl = c.r_bl_um.or(preset.map(|p| p.r_bl_um)).unwrap_or(0.0);
        if !(r_bl >= 0.0 && r_bl.is_finite()) {
            return Err(Error::config("cloud.r_bl_um", "must be nonnegative"));
        }
        let max_attempts = c.max_attempts.unwrap_or_else(|| default_max_attempts(n));
        Ok(ResolvedCloud {
            geometry,
            n,
            r_bl,
            max_attempts,
        })
    }

    pub fn resolve_law(&self) -> Result<InteractionLaw> {
        let ic = &self.interaction;
        let base = if let Some(name) = &ic.preset {
            InteractionLaw::preset(name).ok_or_else(|| {
                Error::config(
                    "interaction.preset",
                    format!(
                        "unknown law `{name}` (expected one of {})",
                        InteractionLaw::PRESET_NAMES.join(", ")
                    ),
                )
            })?
        } else if let Some(kind) = ic.kind {
            match kind {
                InteractionKind::Dipolar => InteractionLaw::dipolar_48s48p(),
                InteractionKind::Vdw => InteractionLaw::vdw_61s62s(),
            }
        } else if let Some(p) = self.cloud.preset {
            p.preset().interaction()
        } else {
            return Err(Error::config(
                "interaction.preset",
                "give an interaction preset or kind (or a cloud preset)",
            ));
        };
        let law = InteractionLaw {
            kind: ic.kind.unwrap_or(base.kind),
            c_a: ic.c_a.unwrap_or(base.c_a),
            exponent: ic.exponent.unwrap_or(base.exponent),
            delta: ic.delta.unwrap_or(base.delta),
            angular: ic.angular.unwrap_or(base.angular),
        };
        law.validate()
            .map_err(|e| Error::config("interaction", e.to_string()))?;
        Ok(law)
    }

    pub fn time_grid(&self) -> Result<Vec<f64>> {
        if let Some(v) = &self.times.values_us {
            if v.is_empty() || v.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                return Err(Error::config(
                    "times.values_us",
                    "times must be finite and nonnegative",
                ));
            }
            if v.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::config(
                    "times.values_us",
                    "times must be strictly increasing",
                ));
            }
            return Ok(v.clone());
        }
        let stop = self.times.stop_us.unwrap_or(self.t_late_us);
        if !(stop > 0.0 && stop.is_finite()) {
            return Err(Error::config("times.stop_us", "must be positive"));
        }
        let p = self.times.points;
        if p < 2 {
            return Err(Error::config("times.points", "need at least 2 points"));
        }
        Ok((0..p).map(|k| stop * k as f64 / (p - 1) as f64).collect())
    }

    /// Field grid; `scale` (MHz) sets the default inner region.
    pub fn omega_grid(&self, scale: f64) -> Vec<f64> {
        if let Some(v) = &self.fields.values_mhz {
            let mut v = v.clone();
            v.sort_by(f64::total_cmp);
            v.dedup();
            return v;
        }
        let inner = self.fields.inner_mhz.unwrap_or(scale);
        let max = self.fields.max_mhz.unwrap_or(5.0 * inner);
        default_omega_grid(
            inner,
            max,
            self.fields.inner_points,
            self.fields.outer_points,
        )
    }

    /// J scale used for the default field grid: the preset's tabulated
    /// J_median when a cloud preset is set.
    pub fn preset_j_scale(&self) -> Option<f64> {
        self.cloud.preset.map(|p| p.preset().j_median_mhz)
    }
}

/// Symmetric grid, dense for `|Omega| <= inner` and coarser out to `max`.
pub fn default_omega_grid(
    inner: f64,
    max: f64,
    inner_points: usize,
    outer_points: usize,
) -> Vec<f64> {
    let mut pos: Vec<f64> = (1..=inner_points)
        .map(|k| inner * k as f64 / inner_points as f64)
        .collect();
    if max > inner && outer_points > 0 {
        pos.extend(
            (1..=outer_points).map(|k| inner + (max - inner) * k as f64 / outer_points as f64),
        );
    }
    let mut grid: Vec<f64> = pos.iter().rev().map(|w| -w).collect();
    grid.push(0.0);
    grid.extend(pos);
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_preset_config() {
        let c = ExperimentConfig::from_toml_str(
            "engine = \"pair-gge\"\n[cloud]\npreset = \"strong\"\nn = 100\n",
        )
        .unwrap();
        let cloud = c.resolve_cloud().unwrap();
        assert_eq!(cloud.n, 100);
        assert_eq!(cloud.r_bl, 5.0);
        assert_eq!(c.resolve_law().unwrap(), InteractionLaw::dipolar_48s48p());
        assert_eq!(c.t_late_us, 10.0);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::from_toml_str("engine = \"ed\"\nbogus_key = 3\n").unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
    }

    #[test]
    fn ed_size_limit() {
        let err = ExperimentConfig::from_toml_str(
            "engine = \"ed\"\n[cloud]\npreset = \"strong\"\nn = 20\n",
        )
        .unwrap_err();
        assert!(
            matches!(err, Error::Config { ref key, .. } if key == "cloud.n"),
            "{err}"
        );
    }

    #[test]
    fn t_late_must_be_on_grid() {
        let text = "engine = \"dtwa\"\nt_late_us = 3.3\n[cloud]\npreset = \"strong\"\nn = 10\n[times]\nstop_us = 5.0\npoints = 6\n";
        let err = ExperimentConfig::from_toml_str(text).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "t_late_us"));
    }

    #[test]
    fn default_grid_is_symmetric() {
        let g = default_omega_grid(1.0, 5.0, 4, 2);
        assert_eq!(g.len(), 13);
        for (a, b) in g.iter().zip(g.iter().rev()) {
            assert_eq!(*a, -*b);
        }
        assert_eq!(g[6], 0.0);
    }
}
