use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::{AdaptationScheme, ThetaInit};
use crate::error::{Error, Result};
use crate::matcore::Mat;
use crate::plant::{sample_count, DisturbanceKind, DisturbanceSignal, NonlinearBasis};

/// True matched-nonlinearity gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThetaLrPreset {
    #[default]
    Zero,
    Identity,
    #[serde(rename = "scalar_1_5")]
    Scalar1_5,
}

impl ThetaLrPreset {
    pub fn matrix(self, m: usize, n: usize) -> Option<Mat> {
        let s = match self {
            ThetaLrPreset::Zero => return None,
            ThetaLrPreset::Identity => 1.0,
            ThetaLrPreset::Scalar1_5 => 1.5,
        };
        let mut t = Mat::zeros(m, n);
        for i in 0..m.min(n) {
            t[(i, i)] = s;
        }
        Some(t)
    }
}

/// How the uncertain plant is derived from the nominal one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// The multiplier recipe on `A[1,0]`, `B[1,0]`, `B[1,1]` and `D[1]`;
    /// `Lambda` is whatever `B_r^{-1} B` comes out as.
    #[default]
    Recipe,
    /// `Lambda = 0.8 I` exactly, `A[1,0]` divided by the multiplier, `D` unchanged.
    Theory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LqrWeights {
    pub q_scale: f64,
    pub r_scale: f64,
}

impl Default for LqrWeights {
    fn default() -> Self {
        Self {
            q_scale: 10.0,
            r_scale: 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptiveSettings {
    /// Runs c and d are skipped when false.
    pub enabled: bool,
    pub gamma_scale: f64,
    pub q_lyap_scale: f64,
    /// Overrides `q_lyap_scale` with a diagonal weight.
    pub q_lyap_diag: Option<Vec<f64>>,
    pub init: ThetaInit,
    pub scheme: AdaptationScheme,
}

impl Default for AdaptiveSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            gamma_scale: 0.5,
            q_lyap_scale: 1e-6,
            q_lyap_diag: None,
            init: ThetaInit::Table2,
            scheme: AdaptationScheme::Euler,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    #[default]
    Synthetic,
    Csv,
    /// Hold a constant state.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceSettings {
    pub kind: ReferenceKind,
    pub path: Option<String>,
    /// Savitzky–Golay window for CSV input; 0 disables filtering.
    pub savgol_window: usize,
    pub poly_order: usize,
    /// State held by the constant reference (defaults to the origin).
    pub hold: Option<Vec<f64>>,
}

impl Default for ReferenceSettings {
    fn default() -> Self {
        Self {
            kind: ReferenceKind::Synthetic,
            path: None,
            savgol_window: 501,
            poly_order: 2,
            hold: None,
        }
    }
}

/// One experiment. Field names are the config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub name: String,
    pub multiplier: f64,
    /// Basis of the true plant's matched nonlinearity (`none` or `sine`).
    pub basis: NonlinearBasis,
    pub theta_lr_preset: ThetaLrPreset,
    pub disturbance: DisturbanceSignal,
    pub sigma: f64,
    /// Marks the explicit-offset run as the headline run.
    pub explicit_d: bool,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub lambda_mode: LambdaMode,
    pub lqr: LqrWeights,
    pub adaptive: AdaptiveSettings,
    pub reference: ReferenceSettings,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "perturbed_ac".into(),
            multiplier: 1.5,
            basis: NonlinearBasis::None,
            theta_lr_preset: ThetaLrPreset::Zero,
            disturbance: DisturbanceSignal::none(),
            sigma: 0.0,
            explicit_d: false,
            horizon: 5250.0,
            dt: 1.0,
            seed: 0,
            lambda_mode: LambdaMode::Recipe,
            lqr: LqrWeights::default(),
            adaptive: AdaptiveSettings::default(),
            reference: ReferenceSettings::default(),
        }
    }
}

pub const PRESET_NAMES: &[&str] = &[
    "nominal",
    "perturbed_no_ac",
    "perturbed_ac",
    "perturbed_ac_explicit_d",
    "disturbed_no_ac",
    "disturbed_ac",
    "disturbed_ac_explicit_d",
    "disturbed_ac_scalar",
    "chirp_sigma",
    "theory",
];

impl ScenarioConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let base = ScenarioConfig {
            name: name.to_string(),
            ..Default::default()
        };
        let disturbed = |explicit_d: bool, enabled: bool| ScenarioConfig {
            basis: NonlinearBasis::Sine,
            theta_lr_preset: ThetaLrPreset::Identity,
            explicit_d,
            adaptive: AdaptiveSettings {
                enabled,
                ..Default::default()
            },
            ..base.clone()
        };
        let cfg = match name {
            "nominal" => ScenarioConfig {
                multiplier: 1.0,
                adaptive: AdaptiveSettings {
                    init: ThetaInit::Nominal,
                    ..Default::default()
                },
                ..base
            },
            "perturbed_no_ac" => ScenarioConfig {
                adaptive: AdaptiveSettings {
                    enabled: false,
                    ..Default::default()
                },
                ..base
            },
            "perturbed_ac" => base,
            "perturbed_ac_explicit_d" => ScenarioConfig {
                explicit_d: true,
                ..base
            },
            "disturbed_no_ac" => disturbed(false, false),
            "disturbed_ac" => disturbed(false, true),
            "disturbed_ac_explicit_d" => disturbed(true, true),
            "disturbed_ac_scalar" => ScenarioConfig {
                theta_lr_preset: ThetaLrPreset::Scalar1_5,
                ..disturbed(false, true)
            },
            "chirp_sigma" => ScenarioConfig {
                disturbance: DisturbanceSignal::chirp(0.05, base.horizon),
                sigma: 1e-3,
                ..base
            },
            "theory" => ScenarioConfig {
                basis: NonlinearBasis::Sine,
                theta_lr_preset: ThetaLrPreset::Identity,
                lambda_mode: LambdaMode::Theory,
                adaptive: AdaptiveSettings {
                    gamma_scale: 1.0,
                    q_lyap_diag: Some(vec![1e-4, 1e-2]),
                    init: ThetaInit::Nominal,
                    scheme: AdaptationScheme::CoupledRk4,
                    ..Default::default()
                },
                reference: ReferenceSettings {
                    kind: ReferenceKind::Constant,
                    ..Default::default()
                },
                ..base
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown scenario '{other}' (known: {})",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Disturbance with an unset chirp horizon replaced by the run horizon.
    pub fn resolved_disturbance(&self) -> DisturbanceSignal {
        let mut d = self.disturbance;
        if d.kind == DisturbanceKind::Chirp && d.horizon == 0.0 {
            d.horizon = self.horizon;
        }
        d
    }

    pub fn q_lyap(&self, n: usize) -> Result<Mat> {
        match &self.adaptive.q_lyap_diag {
            Some(d) if d.len() == n => Ok(Mat::diag(d)?),
            Some(d) => Err(Error::Config(format!(
                "adaptive.q_lyap_diag has {} entries, the state has {n}",
                d.len()
            ))),
            None => Ok(Mat::scaled_identity(n, self.adaptive.q_lyap_scale)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        sample_count(self.horizon, self.dt).map_err(|e| Error::Config(e.to_string()))?;
        if !(self.multiplier >= 1.0 && self.multiplier.is_finite()) {
            return bad(format!("multiplier must be >= 1, got {}", self.multiplier));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be >= 0, got {}", self.sigma));
        }
        match (self.basis, self.theta_lr_preset) {
            (NonlinearBasis::SinePlusConstant, _) => {
                return bad("the plant basis must be none or sine; the constant regressor is added by the explicit-offset run".into())
            }
            (NonlinearBasis::None, p) if p != ThetaLrPreset::Zero => {
                return bad(format!("theta_lr_preset {p:?} needs basis = \"sine\""))
            }
            _ => {}
        }
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.lqr.q_scale) || !pos(self.lqr.r_scale) {
            return bad("lqr weights must be positive".into());
        }
        if !pos(self.adaptive.gamma_scale) {
            return bad("adaptive.gamma_scale must be positive".into());
        }
        match &self.adaptive.q_lyap_diag {
            Some(d) if d.iter().any(|v| !pos(*v)) => {
                return bad("adaptive.q_lyap_diag entries must be positive".into())
            }
            None if !pos(self.adaptive.q_lyap_scale) => {
                return bad("adaptive.q_lyap_scale must be positive".into())
            }
            _ => {}
        }
        self.resolved_disturbance()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        match self.reference.kind {
            ReferenceKind::Csv if self.reference.path.is_none() => {
                return bad("reference.kind = \"csv\" needs reference.path".into())
            }
            ReferenceKind::Synthetic if self.horizon < 1000.0 => {
                return bad(format!(
                    "the synthetic reference needs a horizon of at least 1000 s, got {}",
                    self.horizon
                ))
            }
            _ => {}
        }
        let r = &self.reference;
        if r.kind == ReferenceKind::Csv
            && r.savgol_window > 0
            && (r.savgol_window.is_multiple_of(2) || r.savgol_window <= r.poly_order)
        {
            return bad(format!(
                "reference.savgol_window must be odd and exceed poly_order ({} / {})",
                r.savgol_window, r.poly_order
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve_and_validate() {
        for name in PRESET_NAMES {
            let cfg = ScenarioConfig::preset(name).unwrap();
            assert_eq!(cfg.name, *name);
            cfg.validate().unwrap();
        }
        assert!(matches!(
            ScenarioConfig::preset("nope"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ScenarioConfig::preset("chirp_sigma").unwrap();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = ScenarioConfig::from_toml_str(
            "name = \"x\"\nmultiplier = 1.2\n[adaptive]\ngamma_scale = 1e-4\n[disturbance]\nkind = \"chirp\"\namplitude = 0.05\nf0 = 0.001\nf1 = 0.01\n",
        )
        .unwrap();
        assert_eq!(cfg.multiplier, 1.2);
        assert_eq!(cfg.adaptive.gamma_scale, 1e-4);
        assert_eq!(cfg.adaptive.q_lyap_scale, 1e-6);
        assert_eq!(cfg.resolved_disturbance().horizon, 5250.0);
        cfg.validate().unwrap();
    }

    #[test]
    fn invalid_configs() {
        assert!(ScenarioConfig::from_toml_str("bogus = 1").is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.multiplier = 0.5;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.theta_lr_preset = ThetaLrPreset::Identity;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.horizon = 0.5;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.reference.kind = ReferenceKind::Csv;
        assert!(cfg.validate().is_err());
    }
}
