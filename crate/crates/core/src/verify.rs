//! Built-in verification checks run by `twophoton verify`.

use crate::analytic::{g2, g2_anti_scan_closed_form, g2_orthogonal};
use crate::config::ScanSettings;
use crate::fringes::extract_fringes;
use crate::geometry::{discretize_sources, ExperimentConfig, Polarization, ScanMode, Spot};
use crate::scan::{run_scan, Engine, ScanError};
use crate::speckle::{moment_residual, AmplitudeModel, McError, SpeckleSimulator};
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use std::fmt;

pub const MOMENT_PAIRS: usize = 20;
pub const MOMENT_REALIZATIONS: usize = 100_000;
pub const CLOSED_FORM_SAMPLES: usize = 1000;
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-12;
pub const HALVING_RATIO_TOLERANCE: f64 = 0.005;
pub const FIXED_D2_SPACING_TOLERANCE: f64 = 0.02e-3;
pub const OPPOSITE_SPACING_TOLERANCE: f64 = 0.01e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag:<5}{:<28}{}", self.name, self.detail)
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub amplitude_model: AmplitudeModel,
    /// Emitters per spot; `Some(1)` puts a single emitter at the center of
    /// spot A and switches spot B off.
    pub emitters: Option<usize>,
    /// Seeds the random test positions.
    pub seed: u64,
    pub moment_pairs: usize,
    pub moment_realizations: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            amplitude_model: AmplitudeModel::CircularGaussian,
            emitters: None,
            seed: crate::geometry::DEFAULT_SEED,
            moment_pairs: MOMENT_PAIRS,
            moment_realizations: MOMENT_REALIZATIONS,
        }
    }
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Detector pair and its moment-theorem residual.
pub type PairResidual = ((f64, f64), f64);

/// Moment-theorem residuals at random detector pairs within ±3 mm, all pairs
/// sharing one ensemble.
pub fn moment_residuals(config: &ExperimentConfig, options: &VerifyOptions) -> Result<Vec<PairResidual>, McError> {
    let sim = match options.emitters {
        Some(1) => {
            let geometry = discretize_sources(config)?.single_emitter(Spot::A);
            SpeckleSimulator::with_geometry(config, geometry)
        }
        Some(m) => SpeckleSimulator::new(&ExperimentConfig {
            emitters_per_spot: m,
            ..config.clone()
        })?,
        None => SpeckleSimulator::new(config)?,
    }
    .amplitude_model(options.amplitude_model);

    let mut rng = Pcg64::seed_from_u64(options.seed);
    let pairs: Vec<(f64, f64)> = (0..options.moment_pairs)
        .map(|_| (rng.gen_range(-3e-3..3e-3), rng.gen_range(-3e-3..3e-3)))
        .collect();
    let n = options.moment_realizations;
    if n < crate::speckle::MIN_MOMENT_CHECK_REALIZATIONS {
        return Err(McError::TooFewRealizations {
            requested: n,
            minimum: crate::speckle::MIN_MOMENT_CHECK_REALIZATIONS,
        });
    }
    let estimates = sim.estimate_pairs(&pairs, n)?;
    Ok(pairs.into_iter().zip(estimates.iter().map(moment_residual)).collect())
}

fn check_moment_theorem(config: &ExperimentConfig, options: &VerifyOptions) -> Result<CheckResult, McError> {
    let residuals = moment_residuals(config, options)?;
    let bound = 5.0 / (options.moment_realizations as f64).sqrt();
    let worst = residuals.iter().map(|r| r.1).fold(0.0, f64::max);
    let failures = residuals.iter().filter(|r| r.1 >= bound).count();
    Ok(CheckResult {
        name: "gaussian moment theorem",
        passed: failures == 0,
        detail: format!(
            "{} pairs, n = {}: worst residual {worst:.2e} (bound {bound:.2e}), {failures} over bound",
            residuals.len(),
            options.moment_realizations
        ),
    })
}

/// Largest relative disagreement between the general construction from
/// spot correlations and the specialized `(x, -x)` closed forms.
pub fn closed_form_disagreement(config: &ExperimentConfig, samples: usize, seed: u64) -> f64 {
    let mut rng = Pcg64::seed_from_u64(seed ^ 0x5eed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x: f64 = rng.gen_range(-10e-3..10e-3);
        for pol in [Polarization::Parallel, Polarization::Orthogonal] {
            let cfg = config.clone().with_polarization(pol);
            let general = g2(&cfg, x, -x);
            let closed = g2_anti_scan_closed_form(&cfg, x);
            worst = worst
                .max(relative(general.normalized, closed.normalized))
                .max(relative(general.raw, closed.raw));
        }
    }
    worst
}

fn check_closed_form(config: &ExperimentConfig, seed: u64) -> CheckResult {
    let worst = closed_form_disagreement(config, CLOSED_FORM_SAMPLES, seed);
    CheckResult {
        name: "closed form vs general",
        passed: worst < CLOSED_FORM_TOLERANCE,
        detail: format!("{CLOSED_FORM_SAMPLES} positions: worst relative error {worst:.2e}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalvingResult {
    pub fixed_d2_spacing: f64,
    pub opposite_spacing: f64,
    pub ratio: f64,
}

/// Fringe spacings extracted from analytic scans on the default grids.
pub fn fringe_halving(config: &ExperimentConfig) -> Result<HalvingResult, ScanError> {
    let cfg = config.clone().with_polarization(Polarization::Parallel);
    let settings = ScanSettings::default();
    let spacing = |mode: ScanMode| -> Result<f64, ScanError> {
        let plan = settings.plan(mode, Engine::Analytic).map_err(McError::from)?;
        let report = extract_fringes(&run_scan(&cfg, &plan, Engine::Analytic)?)?;
        Ok(report.fringe_spacing.unwrap_or(f64::NAN))
    };
    let fixed = spacing(ScanMode::FixedD2)?;
    let opposite = spacing(ScanMode::Opposite)?;
    Ok(HalvingResult {
        fixed_d2_spacing: fixed,
        opposite_spacing: opposite,
        ratio: opposite / fixed,
    })
}

fn check_fringe_halving(config: &ExperimentConfig) -> CheckResult {
    match fringe_halving(config) {
        Ok(h) => CheckResult {
            name: "fringe halving",
            passed: (h.ratio - 0.5).abs() <= HALVING_RATIO_TOLERANCE,
            detail: format!(
                "fixed D2 {:.4} mm, opposite {:.4} mm, ratio {:.4}",
                h.fixed_d2_spacing * 1e3,
                h.opposite_spacing * 1e3,
                h.ratio
            ),
        },
        Err(e) => CheckResult {
            name: "fringe halving",
            passed: false,
            detail: e.to_string(),
        },
    }
}

/// Largest relative change of the orthogonal `(x, -x)` curve when the
/// source separation is varied.
pub fn orthogonal_separation_sensitivity(config: &ExperimentConfig, seed: u64) -> f64 {
    let base = config.clone().with_polarization(Polarization::Orthogonal);
    let mut rng = Pcg64::seed_from_u64(seed ^ 0xd15c);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let x: f64 = rng.gen_range(-10e-3..10e-3);
        let d = base.spot_size_s * rng.gen_range(1.5..50.0);
        let moved = ExperimentConfig {
            source_separation_d: d,
            ..base.clone()
        };
        let a = g2_orthogonal(&base, x, -x);
        let b = g2_orthogonal(&moved, x, -x);
        worst = worst
            .max(relative(b.normalized, a.normalized))
            .max(relative(b.raw, a.raw));
    }
    worst
}

fn check_orthogonal_d(config: &ExperimentConfig, seed: u64) -> CheckResult {
    let worst = orthogonal_separation_sensitivity(config, seed);
    CheckResult {
        name: "orthogonal d-independence",
        passed: worst < CLOSED_FORM_TOLERANCE,
        detail: format!("200 (x, d) samples: worst relative change {worst:.2e}"),
    }
}

pub fn run_verification(config: &ExperimentConfig, options: &VerifyOptions) -> Result<Vec<CheckResult>, McError> {
    config.validate()?;
    Ok(vec![
        check_moment_theorem(config, options)?,
        check_closed_form(config, options.seed),
        check_fringe_halving(config),
        check_orthogonal_d(config, options.seed),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_checks_pass_on_reference() {
        let cfg = ExperimentConfig::reference();
        assert!(check_closed_form(&cfg, 1).passed);
        assert!(check_orthogonal_d(&cfg, 1).passed);
        let h = check_fringe_halving(&cfg);
        assert!(h.passed, "{h}");
    }

    #[test]
    fn single_phasor_breaks_moment_theorem() {
        let cfg = ExperimentConfig::reference();
        let options = VerifyOptions {
            amplitude_model: AmplitudeModel::UnitPhasor,
            emitters: Some(1),
            moment_pairs: 3,
            moment_realizations: 10_000,
            ..VerifyOptions::default()
        };
        let r = check_moment_theorem(&cfg, &options).unwrap();
        assert!(!r.passed, "{r}");
        // |1 - 2| / 1 for a constant-intensity emitter
        for (_, res) in moment_residuals(&cfg, &options).unwrap() {
            assert!((res - 1.0).abs() < 1e-12);
        }
        let gaussian = VerifyOptions {
            amplitude_model: AmplitudeModel::CircularGaussian,
            ..options
        };
        assert!(check_moment_theorem(&cfg, &gaussian).unwrap().passed);
    }
}
