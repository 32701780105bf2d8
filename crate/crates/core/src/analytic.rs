//! Closed-form first- and second-order correlation functions for two
//! independent rectangular thermal sources in the Fraunhofer regime.
//!
//! Conventions:
//! - `sinc(u) = sin(u)/u` (unnormalized).
//! - `G1` for spot A is
//!   `(1/(πΔx))·sin(kΔx s/2z)·[cos(kΔx d/2z) − i·sin(kΔx d/2z)]`, spot B
//!   has `+i`. Both reduce to `ks/(2πz)` at `Δx = 0`.
//! - Normalized `g2` divides by the incoherent baseline `(ks/πz)²`, so it
//!   tends to 1 far from the scan center.

use crate::geometry::{ExperimentConfig, Polarization, ScanMode, Spot};
use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

pub type ComplexG1 = Complex64;

/// Below this argument `sinc` switches to its Taylor series.
const SINC_SERIES_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("orthogonal polarization produces no second-order fringes")]
    NoFringes,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct G2Value {
    /// In the nominal units of the closed forms.
    pub raw: f64,
    /// Divided by the incoherent baseline `(ks/πz)²`.
    pub normalized: f64,
}

pub fn sinc(u: f64) -> f64 {
    if u.abs() < SINC_SERIES_THRESHOLD {
        1.0 - u * u / 6.0
    } else {
        u.sin() / u
    }
}

/// `(ks/πz)²`, the sum of the four intensity-product terms.
pub fn baseline(config: &ExperimentConfig) -> f64 {
    let v = config.wavenumber() * config.spot_size_s / (PI * config.distance_z);
    v * v
}

/// First-order correlation of one spot between detector positions `x1`, `x2`.
pub fn g1_spot(config: &ExperimentConfig, spot: Spot, x1: f64, x2: f64) -> ComplexG1 {
    let k = config.wavenumber();
    let z = config.distance_z;
    let dx = x1 - x2;
    // (1/(πΔx))·sin(kΔx s/2z), written through sinc to stay finite at Δx = 0
    let envelope_arg = k * dx * config.spot_size_s / (2.0 * z);
    let magnitude = k * config.spot_size_s / (2.0 * PI * z) * sinc(envelope_arg);
    let phase = k * dx * config.source_separation_d / (2.0 * z);
    let sign = match spot {
        Spot::A => -1.0,
        Spot::B => 1.0,
    };
    Complex64::new(magnitude * phase.cos(), sign * magnitude * phase.sin())
}

fn g2_value(config: &ExperimentConfig, raw: f64) -> G2Value {
    G2Value {
        raw,
        normalized: raw / baseline(config),
    }
}

/// Mean intensity products `G1_m(x1,x1)·G1_n(x2,x2)` summed over all four
/// spot combinations.
fn intensity_products(config: &ExperimentConfig, x1: f64, x2: f64) -> f64 {
    let i1 = g1_spot(config, Spot::A, x1, x1).re + g1_spot(config, Spot::B, x1, x1).re;
    let i2 = g1_spot(config, Spot::A, x2, x2).re + g1_spot(config, Spot::B, x2, x2).re;
    i1 * i2
}

/// Same polarization: the two spots' first-order terms add coherently.
pub fn g2_parallel(config: &ExperimentConfig, x1: f64, x2: f64) -> G2Value {
    let cross = g1_spot(config, Spot::A, x1, x2) + g1_spot(config, Spot::B, x1, x2);
    g2_value(config, cross.norm_sqr() + intensity_products(config, x1, x2))
}

/// Orthogonal polarization: each spot contributes its own HBT term and no
/// A–B interference survives.
pub fn g2_orthogonal(config: &ExperimentConfig, x1: f64, x2: f64) -> G2Value {
    let hbt_a = g1_spot(config, Spot::A, x1, x2).norm_sqr();
    let hbt_b = g1_spot(config, Spot::B, x1, x2).norm_sqr();
    g2_value(config, hbt_a + hbt_b + intensity_products(config, x1, x2))
}

/// Dispatch on the configured polarization.
pub fn g2(config: &ExperimentConfig, x1: f64, x2: f64) -> G2Value {
    match config.polarization {
        Polarization::Parallel => g2_parallel(config, x1, x2),
        Polarization::Orthogonal => g2_orthogonal(config, x1, x2),
    }
}

/// The specialized `(x, -x)` forms:
/// parallel `1 + sinc²(πsx/((λ/2)z))·cos²(πdx/((λ/2)z))`,
/// orthogonal `1 + ½·sinc²(πsx/((λ/2)z))`, both times `(ks/πz)²`.
pub fn g2_anti_scan_closed_form(config: &ExperimentConfig, x: f64) -> G2Value {
    let half_lambda_z = config.wavelength / 2.0 * config.distance_z;
    let envelope = sinc(PI * config.spot_size_s * x / half_lambda_z).powi(2);
    let normalized = match config.polarization {
        Polarization::Parallel => {
            let fringe = (PI * config.source_separation_d * x / half_lambda_z).cos();
            1.0 + envelope * fringe * fringe
        }
        Polarization::Orthogonal => 1.0 + 0.5 * envelope,
    };
    G2Value {
        raw: baseline(config) * normalized,
        normalized,
    }
}

/// Distance between adjacent second-order maxima: `λz/d` with one detector
/// parked, `λz/(2d)` when the detectors move in opposite directions.
pub fn predict_fringe_spacing(config: &ExperimentConfig, mode: ScanMode) -> Result<f64, AnalyticError> {
    if config.polarization == Polarization::Orthogonal {
        return Err(AnalyticError::NoFringes);
    }
    let classical = config.wavelength * config.distance_z / config.source_separation_d;
    Ok(match mode {
        ScanMode::FixedD2 => classical,
        ScanMode::Opposite => classical / 2.0,
    })
}
