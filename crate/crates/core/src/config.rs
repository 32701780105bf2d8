//! Experiment files.
//!
//! TOML with three sections. Every key is optional and falls back to the
//! reference configuration; unknown keys are rejected. Lengths are either
//! bare numbers in meters or strings with a unit suffix (`nm`, `um`, `mm`,
//! `m`).
//!
//! ```toml
//! [source]
//! wavelength = "632.8nm"
//! source_separation_d = "1.1mm"
//! spot_size_s = "0.11mm"
//! distance_z = 2.955
//! polarization = "parallel"
//!
//! [scan]
//! mode = "opposite"
//! half_width = "3mm"
//! step = "0.25mm"
//! fixed_x2 = 0.0
//!
//! [monte_carlo]
//! emitters_per_spot = 64
//! seed = 42
//! realizations = 200000
//! amplitude_model = "circular_gaussian"
//! ```

use crate::geometry::{ConfigError, ExperimentConfig, Polarization, ScanMode, ScanPlan};
use crate::scan::Engine;
use crate::speckle::AmplitudeModel;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

const MM: f64 = 1e-3;
pub const ANALYTIC_STEP: f64 = 0.05 * MM;
pub const MC_STEP_FIXED_D2: f64 = 0.25 * MM;
pub const MC_STEP_OPPOSITE: f64 = 0.125 * MM;
pub const HALF_WIDTH_OPPOSITE: f64 = 3.0 * MM;
pub const HALF_WIDTH_FIXED_D2: f64 = 4.0 * MM;

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

/// A length as written in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Length {
    Meters(f64),
    Text(String),
}

impl Length {
    pub fn to_meters(&self, field: &'static str) -> Result<f64, ConfigError> {
        match self {
            Length::Meters(v) => Ok(*v),
            Length::Text(text) => parse_length(text).ok_or_else(|| ConfigError::Invalid {
                field,
                reason: format!("cannot parse length {text:?} (expected e.g. \"632.8nm\", \"1.1mm\", \"2.955m\")"),
            }),
        }
    }
}

/// Parse `"<number><unit>"` with unit one of nm, um, µm, mm, m (or none).
/// The unit is applied as a decimal exponent so `"632.8nm"` parses to the
/// same double as `632.8e-9`.
pub fn parse_length(text: &str) -> Option<f64> {
    let t = text.trim();
    let (number, exponent) = [("nm", -9), ("um", -6), ("µm", -6), ("mm", -3), ("m", 0)]
        .iter()
        .find_map(|&(suffix, exp)| t.strip_suffix(suffix).map(|n| (n.trim(), exp)))
        .unwrap_or((t, 0));
    let plain: f64 = number.parse().ok()?;
    let value: f64 = if plain == 0.0 || !plain.is_finite() {
        plain
    } else {
        let (mantissa, own_exp) = match number.split_once(['e', 'E']) {
            Some((m, e)) => (m, e.parse::<i32>().ok()?),
            None => (number, 0),
        };
        format!("{mantissa}e{}", own_exp + exponent).parse().ok()?
    };
    value.is_finite().then_some(value)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wavelength: Option<Length>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_separation_d: Option<Length>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spot_size_s: Option<Length>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance_z: Option<Length>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub polarization: Option<Polarization>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<ScanMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_width: Option<Length>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<Length>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_x2: Option<Length>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emitters_per_spot: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realizations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude_model: Option<AmplitudeModel>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub source: SourceSection,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub monte_carlo: MonteCarloSection,
}

/// Scan grid settings; unset values take mode- and engine-dependent defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScanSettings {
    pub mode: Option<ScanMode>,
    pub half_width: Option<f64>,
    pub step: Option<f64>,
    pub fixed_x2: f64,
}

impl ScanSettings {
    pub fn default_half_width(mode: ScanMode) -> f64 {
        match mode {
            ScanMode::Opposite => HALF_WIDTH_OPPOSITE,
            ScanMode::FixedD2 => HALF_WIDTH_FIXED_D2,
        }
    }

    pub fn default_step(mode: ScanMode, engine: Engine) -> f64 {
        match (engine, mode) {
            (Engine::Analytic, _) => ANALYTIC_STEP,
            (Engine::MonteCarlo, ScanMode::FixedD2) => MC_STEP_FIXED_D2,
            (Engine::MonteCarlo, ScanMode::Opposite) => MC_STEP_OPPOSITE,
        }
    }

    pub fn plan(&self, mode: ScanMode, engine: Engine) -> Result<ScanPlan, ConfigError> {
        ScanPlan::symmetric(
            mode,
            self.half_width.unwrap_or_else(|| Self::default_half_width(mode)),
            self.step.unwrap_or_else(|| Self::default_step(mode, engine)),
            self.fixed_x2,
        )
    }
}

/// A fully resolved experiment file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub scan: ScanSettings,
    pub amplitude_model: AmplitudeModel,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: ExperimentConfig::reference(),
            scan: ScanSettings::default(),
            amplitude_model: AmplitudeModel::default(),
        }
    }
}

fn length(value: &Option<Length>, field: &'static str, default: f64) -> Result<f64, ConfigError> {
    value.as_ref().map_or(Ok(default), |v| v.to_meters(field))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigFileError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| ConfigFileError::Parse(e.to_string()))?;
        Ok(Self::resolve(&file)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigFileError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn resolve(file: &ConfigFile) -> Result<Self, ConfigError> {
        let r = ExperimentConfig::reference();
        let src = &file.source;
        let mc = &file.monte_carlo;
        let experiment = ExperimentConfig {
            wavelength: length(&src.wavelength, "wavelength", r.wavelength)?,
            source_separation_d: length(&src.source_separation_d, "source_separation_d", r.source_separation_d)?,
            spot_size_s: length(&src.spot_size_s, "spot_size_s", r.spot_size_s)?,
            distance_z: length(&src.distance_z, "distance_z", r.distance_z)?,
            polarization: src.polarization.unwrap_or(r.polarization),
            emitters_per_spot: mc.emitters_per_spot.unwrap_or(r.emitters_per_spot),
            seed: mc.seed.unwrap_or(r.seed),
            realizations: mc.realizations.unwrap_or(r.realizations),
        };
        experiment.validate()?;
        let scan = ScanSettings {
            mode: file.scan.mode,
            half_width: file
                .scan
                .half_width
                .as_ref()
                .map(|l| l.to_meters("half_width"))
                .transpose()?,
            step: file.scan.step.as_ref().map(|l| l.to_meters("step")).transpose()?,
            fixed_x2: length(&file.scan.fixed_x2, "fixed_x2", 0.0)?,
        };
        Ok(RunConfig {
            experiment,
            scan,
            amplitude_model: mc.amplitude_model.unwrap_or_default(),
        })
    }

    /// Fully explicit file form with every length in meters.
    pub fn to_file(&self) -> ConfigFile {
        let e = &self.experiment;
        ConfigFile {
            source: SourceSection {
                wavelength: Some(Length::Meters(e.wavelength)),
                source_separation_d: Some(Length::Meters(e.source_separation_d)),
                spot_size_s: Some(Length::Meters(e.spot_size_s)),
                distance_z: Some(Length::Meters(e.distance_z)),
                polarization: Some(e.polarization),
            },
            scan: ScanSection {
                mode: self.scan.mode,
                half_width: self.scan.half_width.map(Length::Meters),
                step: self.scan.step.map(Length::Meters),
                fixed_x2: Some(Length::Meters(self.scan.fixed_x2)),
            },
            monte_carlo: MonteCarloSection {
                emitters_per_spot: Some(e.emitters_per_spot),
                seed: Some(e.seed),
                realizations: Some(e.realizations),
                amplitude_model: Some(self.amplitude_model),
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_file()).expect("config file form always serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_units() {
        assert_eq!(parse_length("632.8nm"), Some(632.8 * 1e-9));
        assert_eq!(parse_length("1.1mm"), Some(1.1e-3));
        assert_eq!(parse_length("0.11 mm"), Some(0.11e-3));
        assert_eq!(parse_length("5um"), Some(5e-6));
        assert_eq!(parse_length("2.955m"), Some(2.955));
        assert_eq!(parse_length("2.955"), Some(2.955));
        assert_eq!(parse_length("1.1 furlong"), None);
        assert_eq!(parse_length("mm"), None);
        assert_eq!(parse_length("1.5e-3mm"), Some(1.5e-6));
        assert_eq!(parse_length("inf"), None);
    }

    #[test]
    fn empty_file_is_reference() {
        let rc = RunConfig::from_toml("").unwrap();
        assert_eq!(rc.experiment, ExperimentConfig::reference());
        assert_eq!(rc.amplitude_model, AmplitudeModel::CircularGaussian);
    }

    #[test]
    fn full_file() {
        let text = r#"
            [source]
            wavelength = "632.8nm"
            source_separation_d = "1.1mm"
            spot_size_s = 0.00011
            distance_z = 3
            polarization = "orthogonal"

            [scan]
            mode = "fixed_d2"
            half_width = "2mm"
            step = "0.1mm"
            fixed_x2 = "0.5mm"

            [monte_carlo]
            emitters_per_spot = 16
            seed = 7
            realizations = 1000
            amplitude_model = "unit_phasor"
        "#;
        let rc = RunConfig::from_toml(text).unwrap();
        assert_eq!(rc.experiment.distance_z, 3.0);
        assert_eq!(rc.experiment.polarization, Polarization::Orthogonal);
        assert_eq!(rc.experiment.emitters_per_spot, 16);
        assert_eq!(rc.scan.mode, Some(ScanMode::FixedD2));
        assert_eq!(rc.scan.fixed_x2, 0.5e-3);
        assert_eq!(rc.amplitude_model, AmplitudeModel::UnitPhasor);
        let plan = rc.scan.plan(ScanMode::FixedD2, Engine::MonteCarlo).unwrap();
        assert_eq!(plan.len(), 41);
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(matches!(
            RunConfig::from_toml("[source]\nwavelenght = 1e-6\n"),
            Err(ConfigFileError::Parse(_))
        ));
        assert!(matches!(
            RunConfig::from_toml("[detector]\nx = 1\n"),
            Err(ConfigFileError::Parse(_))
        ));
    }

    #[test]
    fn validation_names_field() {
        let err = RunConfig::from_toml("[source]\nsource_separation_d = \"0.05mm\"\n").unwrap_err();
        assert!(err.to_string().contains("source_separation_d"), "{err}");
        let err = RunConfig::from_toml("[source]\nwavelength = \"blue\"\n").unwrap_err();
        assert!(err.to_string().contains("wavelength"), "{err}");
    }

    #[test]
    fn echo_round_trips_exactly() {
        let text = "[source]\nwavelength = \"632.8nm\"\n[scan]\nstep = \"0.3mm\"\n[monte_carlo]\nseed = 99\n";
        let rc = RunConfig::from_toml(text).unwrap();
        let again = RunConfig::from_toml(&rc.to_toml()).unwrap();
        assert_eq!(rc, again);
    }

    #[test]
    fn default_grids() {
        let s = ScanSettings::default();
        assert_eq!(s.plan(ScanMode::Opposite, Engine::MonteCarlo).unwrap().len(), 49);
        assert_eq!(s.plan(ScanMode::FixedD2, Engine::MonteCarlo).unwrap().len(), 33);
        assert_eq!(s.plan(ScanMode::Opposite, Engine::Analytic).unwrap().len(), 121);
    }
}
