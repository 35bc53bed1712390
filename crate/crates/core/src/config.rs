//! TOML configuration file.
//!
//! ```toml
//! [harvester]
//! v_h = 3.3
//! p_h_dbm = 0.0
//!
//! [capacitor]
//! capacitance = 0.01
//! r_load_off = 600000.0
//! r_load_on = 117.0
//! v_op = 1.8
//! mode = "thevenin"
//!
//! [radio]
//! p_t_dbm = 13.0
//! eta = 2.75
//! wavelength_cm = 34.5
//!
//! [deployment]
//! radius_km = 6.0
//! lambda_per_km2 = 4.0
//!
//! [scheme]
//! kind = "ud"
//! a = 0.0
//! b = 100.0
//! k = 1.0
//! w = 50.0
//! ```
//!
//! Every key is optional; missing keys take the defaults of
//! [`PhyConfig::default`]. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::capacitor::{build_model, CapacitorModel, ModelMode};
use crate::error::{Error, Result};
use crate::phy::{
    db_to_linear, dbm_to_watts, equal_width_rings, thermal_noise_watts, watts_to_dbm,
    ChargingScheme, PhyConfig, SchemeKind, DEFAULT_NOISE_FIGURE_DB,
};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "LORA_EH_CONFIG";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub harvester: HarvesterSection,
    #[serde(default)]
    pub capacitor: CapacitorSection,
    #[serde(default)]
    pub radio: RadioSection,
    #[serde(default)]
    pub deployment: DeploymentSection,
    #[serde(default)]
    pub scheme: SchemeSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarvesterSection {
    pub v_h: Option<f64>,
    pub p_h_dbm: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitorSection {
    pub capacitance: Option<f64>,
    pub r_load_off: Option<f64>,
    pub r_load_on: Option<f64>,
    pub v_op: Option<f64>,
    pub v_initial: Option<f64>,
    pub mode: Option<ModelMode>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioSection {
    pub p_t_dbm: Option<f64>,
    pub p_op_dbm: Option<f64>,
    pub bandwidth_hz: Option<f64>,
    pub eta: Option<f64>,
    pub wavelength_cm: Option<f64>,
    /// Overrides the thermal floor computed from bandwidth and noise figure.
    pub noise_dbm: Option<f64>,
    pub noise_figure_db: Option<f64>,
    pub sir_threshold_db: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentSection {
    pub radius_km: Option<f64>,
    pub lambda_per_km2: Option<f64>,
    pub ring_radii_km: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub kind: Option<SchemeKind>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub k: Option<f64>,
    pub w: Option<f64>,
}

/// Validated configuration in SI units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub phy: PhyConfig,
    pub mode: ModelMode,
    pub scheme_kind: SchemeKind,
    pub uniform: ChargingScheme,
    pub weibull: ChargingScheme,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            phy: PhyConfig::default(),
            mode: ModelMode::default(),
            scheme_kind: SchemeKind::Uniform,
            uniform: ChargingScheme::Uniform {
                low: 0.0,
                high: 100.0,
            },
            weibull: ChargingScheme::Weibull {
                shape: 1.0,
                scale: 50.0,
            },
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_file(&file)
    }

    pub fn from_file(f: &ConfigFile) -> Result<Self> {
        let d = Config::default();
        let p = &d.phy;
        let radius_km = f.deployment.radius_km.unwrap_or(p.radius_km);
        let ring_radii_km = match &f.deployment.ring_radii_km {
            None => equal_width_rings(radius_km),
            Some(v) => <[f64; 7]>::try_from(v.as_slice()).map_err(|_| {
                Error::Config(format!(
                    "deployment.ring_radii_km needs 7 values (l0..l6), got {}",
                    v.len()
                ))
            })?,
        };
        let bandwidth_hz = f.radio.bandwidth_hz.unwrap_or(p.bandwidth_hz);
        let noise_w = match f.radio.noise_dbm {
            Some(dbm) => dbm_to_watts(dbm),
            None => thermal_noise_watts(
                bandwidth_hz,
                f.radio.noise_figure_db.unwrap_or(DEFAULT_NOISE_FIGURE_DB),
            ),
        };
        let phy = PhyConfig {
            v_h: f.harvester.v_h.unwrap_or(p.v_h),
            p_h: f.harvester.p_h_dbm.map_or(p.p_h, dbm_to_watts),
            capacitance: f.capacitor.capacitance.unwrap_or(p.capacitance),
            r_load_off: f.capacitor.r_load_off.unwrap_or(p.r_load_off),
            r_load_on: f.capacitor.r_load_on.unwrap_or(p.r_load_on),
            v_op: f.capacitor.v_op.unwrap_or(p.v_op),
            v_initial: f.capacitor.v_initial.unwrap_or(p.v_initial),
            p_t: f.radio.p_t_dbm.map_or(p.p_t, dbm_to_watts),
            p_op: f.radio.p_op_dbm.map_or(p.p_op, dbm_to_watts),
            bandwidth_hz,
            eta: f.radio.eta.unwrap_or(p.eta),
            wavelength_m: f.radio.wavelength_cm.map_or(p.wavelength_m, |cm| cm * 1e-2),
            noise_w,
            sir_threshold: f
                .radio
                .sir_threshold_db
                .map_or(p.sir_threshold, db_to_linear),
            radius_km,
            lambda_per_km2: f.deployment.lambda_per_km2.unwrap_or(p.lambda_per_km2),
            ring_radii_km,
        };
        phy.validate()?;
        let (ud_a, ud_b) = d.uniform.params();
        let (wd_k, wd_w) = d.weibull.params();
        let uniform =
            ChargingScheme::uniform(f.scheme.a.unwrap_or(ud_a), f.scheme.b.unwrap_or(ud_b))?;
        let weibull =
            ChargingScheme::weibull(f.scheme.k.unwrap_or(wd_k), f.scheme.w.unwrap_or(wd_w))?;
        let cfg = Config {
            phy,
            mode: f.capacitor.mode.unwrap_or(d.mode),
            scheme_kind: f.scheme.kind.unwrap_or(d.scheme_kind),
            uniform,
            weibull,
        };
        cfg.model()?;
        Ok(cfg)
    }

    /// Fully populated file form, suitable for round-tripping and manifests.
    pub fn to_file(&self) -> ConfigFile {
        let p = &self.phy;
        let (a, b) = self.uniform.params();
        let (k, w) = self.weibull.params();
        ConfigFile {
            harvester: HarvesterSection {
                v_h: Some(p.v_h),
                p_h_dbm: Some(watts_to_dbm(p.p_h)),
            },
            capacitor: CapacitorSection {
                capacitance: Some(p.capacitance),
                r_load_off: Some(p.r_load_off),
                r_load_on: Some(p.r_load_on),
                v_op: Some(p.v_op),
                v_initial: Some(p.v_initial),
                mode: Some(self.mode),
            },
            radio: RadioSection {
                p_t_dbm: Some(watts_to_dbm(p.p_t)),
                p_op_dbm: Some(watts_to_dbm(p.p_op)),
                bandwidth_hz: Some(p.bandwidth_hz),
                eta: Some(p.eta),
                wavelength_cm: Some(p.wavelength_m * 1e2),
                noise_dbm: Some(watts_to_dbm(p.noise_w)),
                noise_figure_db: None,
                sir_threshold_db: Some(10.0 * p.sir_threshold.log10()),
            },
            deployment: DeploymentSection {
                radius_km: Some(p.radius_km),
                lambda_per_km2: Some(p.lambda_per_km2),
                ring_radii_km: Some(p.ring_radii_km.to_vec()),
            },
            scheme: SchemeSection {
                kind: Some(self.scheme_kind),
                a: Some(a),
                b: Some(b),
                k: Some(k),
                w: Some(w),
            },
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(&self.to_file()).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn model(&self) -> Result<CapacitorModel> {
        build_model(&self.phy, self.mode)
    }

    pub fn scheme(&self, kind: SchemeKind) -> ChargingScheme {
        match kind {
            SchemeKind::Uniform => self.uniform,
            SchemeKind::Weibull => self.weibull,
        }
    }

    pub fn active_scheme(&self) -> ChargingScheme {
        self.scheme(self.scheme_kind)
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ud" | "uniform" => Ok(SchemeKind::Uniform),
            "wd" | "weibull" => Ok(SchemeKind::Weibull),
            other => Err(Error::Config(format!(
                "unknown charging scheme '{other}' (ud|wd)"
            ))),
        }
    }
}
