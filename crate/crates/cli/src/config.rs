//! TOML run configuration: every knob a flag can set has a config-file
//! counterpart; explicit flags win over the file, the file wins over
//! built-in defaults.

use std::path::Path;

use serde::Deserialize;

use pztrigger_core::camera::GeneratorParams;
use pztrigger_core::error::{Error, Result};
use pztrigger_core::fixedpoint::{ExportProfile, QFormat};
use pztrigger_core::modelsel::GridSpec;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub rings: Option<u32>,
    pub pixel_pitch: Option<f64>,
    pub n_max: Option<u32>,
    pub core_thr: Option<f64>,
    pub boundary_thr: Option<f64>,
    pub seed: Option<u64>,
    /// Full generator parameter block; when present it replaces the
    /// built-in defaults wholesale.
    pub generator: Option<GeneratorParams>,
    pub grid: Option<GridConfig>,
    pub export: Option<ExportConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub log2c_min: Option<f64>,
    pub log2c_max: Option<f64>,
    pub log2c_step: Option<f64>,
    pub log2gamma_min: Option<f64>,
    pub log2gamma_max: Option<f64>,
    pub log2gamma_step: Option<f64>,
    pub fine_radius: Option<f64>,
    pub fine_step: Option<f64>,
    pub folds: Option<usize>,
    pub fraction: Option<f64>,
    pub seed: Option<u64>,
}

impl GridConfig {
    pub fn apply(&self, spec: &mut GridSpec) {
        if let Some(v) = self.log2c_min {
            spec.log2c_range.0 = v;
        }
        if let Some(v) = self.log2c_max {
            spec.log2c_range.1 = v;
        }
        if let Some(v) = self.log2c_step {
            spec.log2c_step = v;
        }
        if let Some(v) = self.log2gamma_min {
            spec.log2gamma_range.0 = v;
        }
        if let Some(v) = self.log2gamma_max {
            spec.log2gamma_range.1 = v;
        }
        if let Some(v) = self.log2gamma_step {
            spec.log2gamma_step = v;
        }
        if let Some(v) = self.fine_radius {
            spec.fine_radius = v;
        }
        if let Some(v) = self.fine_step {
            spec.fine_step = v;
        }
        if let Some(v) = self.folds {
            spec.folds = v;
        }
        if let Some(v) = self.fraction {
            spec.fraction = v;
        }
        if let Some(v) = self.seed {
            spec.seed = v;
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportConfig {
    /// "standard" or "wide" base profile.
    pub profile: Option<String>,
    pub basis: Option<String>,
    pub norm_mean: Option<String>,
    pub norm_invstd: Option<String>,
    pub support_vectors: Option<String>,
    pub dual_coeffs: Option<String>,
    pub bias: Option<String>,
    pub gamma: Option<String>,
    pub exp_lut: Option<String>,
    pub exp_segments: Option<u32>,
}

pub fn base_profile(name: &str) -> Result<ExportProfile> {
    match name {
        "standard" => Ok(ExportProfile::standard()),
        "wide" => Ok(ExportProfile::wide()),
        other => Err(Error::invalid(format!(
            "unknown export profile `{other}` (expected `standard` or `wide`)"
        ))),
    }
}

impl ExportConfig {
    pub fn apply(&self, profile: &mut ExportProfile) -> Result<()> {
        let parse = |text: &Option<String>, slot: &mut QFormat| -> Result<()> {
            if let Some(t) = text {
                *slot = QFormat::parse(t)?;
            }
            Ok(())
        };
        parse(&self.basis, &mut profile.basis)?;
        parse(&self.norm_mean, &mut profile.norm_mean)?;
        parse(&self.norm_invstd, &mut profile.norm_invstd)?;
        parse(&self.support_vectors, &mut profile.support_vectors)?;
        parse(&self.dual_coeffs, &mut profile.dual_coeffs)?;
        parse(&self.bias, &mut profile.bias)?;
        parse(&self.gamma, &mut profile.gamma)?;
        parse(&self.exp_lut, &mut profile.exp_lut)?;
        if let Some(v) = self.exp_segments {
            profile.exp_segments = v;
        }
        Ok(())
    }
}

pub fn load(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::format("config file", e.to_string()))
}
