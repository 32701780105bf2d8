//! Physical configuration of the two-source experiment.
//!
//! Two independent pseudo-thermal spots A and B sit on the source plane at
//! `+d/2` and `-d/2`, each a one-dimensional rectangular aperture of full
//! width `s`. The detectors sit a distance `z` downstream and are scanned
//! along the same transverse axis.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use thiserror::Error;

/// Default number of point emitters used to discretize each spot.
pub const DEFAULT_EMITTERS_PER_SPOT: usize = 64;
/// Default Monte Carlo ensemble size.
pub const DEFAULT_REALIZATIONS: usize = 200_000;
/// Default master seed.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

impl ConfigError {
    pub fn field(&self) -> &'static str {
        match self {
            ConfigError::Invalid { field, .. } => field,
        }
    }

    fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    /// Both spots emit the same polarization and share one field channel.
    Parallel,
    /// The spots are orthogonally polarized; each has its own channel.
    Orthogonal,
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarization::Parallel => f.write_str("parallel"),
            Polarization::Orthogonal => f.write_str("orthogonal"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Spot {
    A,
    B,
}

impl Spot {
    pub fn index(self) -> usize {
        match self {
            Spot::A => 0,
            Spot::B => 1,
        }
    }
}

/// Full physical and numerical description of one experiment.
///
/// Lengths are in meters. The wavenumber `k = 2π/λ` is derived on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub wavelength: f64,
    /// Center-to-center distance of the two spots.
    pub source_separation_d: f64,
    /// Full width of each spot.
    pub spot_size_s: f64,
    /// Source plane to detector plane.
    pub distance_z: f64,
    pub polarization: Polarization,
    pub emitters_per_spot: usize,
    pub seed: u64,
    pub realizations: usize,
}

impl ExperimentConfig {
    /// The laboratory geometry: He-Ne light, 1.1 mm spot separation,
    /// 0.11 mm spots. The propagation distance is chosen so that the
    /// classical fringe period `λz/d` is 1.70 mm.
    pub fn reference() -> Self {
        ExperimentConfig {
            wavelength: 632.8e-9,
            source_separation_d: 1.1e-3,
            spot_size_s: 0.11e-3,
            distance_z: 2.955,
            polarization: Polarization::Parallel,
            emitters_per_spot: DEFAULT_EMITTERS_PER_SPOT,
            seed: DEFAULT_SEED,
            realizations: DEFAULT_REALIZATIONS,
        }
    }

    pub fn with_polarization(mut self, polarization: Polarization) -> Self {
        self.polarization = polarization;
        self
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("wavelength", self.wavelength)?;
        positive("distance_z", self.distance_z)?;
        positive("spot_size_s", self.spot_size_s)?;
        positive("source_separation_d", self.source_separation_d)?;
        if self.source_separation_d <= self.spot_size_s {
            return Err(ConfigError::invalid(
                "source_separation_d",
                format!(
                    "must exceed spot_size_s ({} m) so the spots do not overlap, got {} m",
                    self.spot_size_s, self.source_separation_d
                ),
            ));
        }
        if self.emitters_per_spot < 2 {
            return Err(ConfigError::invalid(
                "emitters_per_spot",
                format!("must be at least 2, got {}", self.emitters_per_spot),
            ));
        }
        if self.realizations == 0 {
            return Err(ConfigError::invalid("realizations", "must be positive"));
        }
        Ok(())
    }
}

fn positive(field: &'static str, value: f64) -> Result<(), ConfigError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::invalid(
            field,
            format!("must be a positive finite length, got {value}"),
        ))
    }
}

/// Closed interval `[lo, hi]` in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Emitter {
    pub x0: f64,
    pub spot: Spot,
}

/// The two rectangular apertures and their point-emitter discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceGeometry {
    emitters: Vec<Emitter>,
    spot_a: Interval,
    spot_b: Interval,
}

impl SourceGeometry {
    /// Aperture intervals without any emitters.
    fn apertures(d: f64, s: f64) -> (Interval, Interval) {
        (
            Interval {
                lo: (d - s) / 2.0,
                hi: (d + s) / 2.0,
            },
            Interval {
                lo: -(d + s) / 2.0,
                hi: -(d - s) / 2.0,
            },
        )
    }

    pub fn emitters(&self) -> &[Emitter] {
        &self.emitters
    }

    pub fn spot_interval(&self, spot: Spot) -> Interval {
        match spot {
            Spot::A => self.spot_a,
            Spot::B => self.spot_b,
        }
    }

    /// Transmission function of one aperture: 1 inside the closed interval,
    /// 0 elsewhere.
    pub fn transmission(&self, spot: Spot, x0: f64) -> u8 {
        u8::from(self.spot_interval(spot).contains(x0))
    }

    /// Emitters belonging to `spot`, in order.
    pub fn spot_emitters(&self, spot: Spot) -> impl Iterator<Item = &Emitter> + '_ {
        self.emitters.iter().filter(move |e| e.spot == spot)
    }

    /// Keep only the emitters of one spot (the other spot goes dark).
    pub fn only(&self, spot: Spot) -> Self {
        SourceGeometry {
            emitters: self.spot_emitters(spot).copied().collect(),
            ..self.clone()
        }
    }

    /// A single point emitter at the center of `spot`.
    pub fn single_emitter(&self, spot: Spot) -> Self {
        SourceGeometry {
            emitters: vec![Emitter {
                x0: self.spot_interval(spot).center(),
                spot,
            }],
            ..self.clone()
        }
    }

    /// Build a geometry from explicit emitters. Emitters outside their
    /// spot's aperture are rejected.
    pub fn from_emitters(config: &ExperimentConfig, emitters: Vec<Emitter>) -> Result<Self, ConfigError> {
        config.validate()?;
        let (spot_a, spot_b) = Self::apertures(config.source_separation_d, config.spot_size_s);
        let geometry = SourceGeometry {
            emitters,
            spot_a,
            spot_b,
        };
        if let Some(e) = geometry
            .emitters
            .iter()
            .find(|e| geometry.transmission(e.spot, e.x0) == 0)
        {
            return Err(ConfigError::invalid(
                "emitters",
                format!("emitter at {} m lies outside spot {:?}", e.x0, e.spot),
            ));
        }
        Ok(geometry)
    }
}

/// Place `emitters_per_spot` points in each aperture with the midpoint rule:
/// spacing `s/M`, half a spacing of margin at each edge. Spot B is the mirror
/// image of spot A.
pub fn discretize_sources(config: &ExperimentConfig) -> Result<SourceGeometry, ConfigError> {
    config.validate()?;
    let (spot_a, spot_b) = SourceGeometry::apertures(config.source_separation_d, config.spot_size_s);
    let m = config.emitters_per_spot;
    let spacing = config.spot_size_s / m as f64;
    let center = config.source_separation_d / 2.0;
    let half = m as f64 / 2.0;
    let a_positions: Vec<f64> = (0..m).map(|j| center + (j as f64 + 0.5 - half) * spacing).collect();

    let mut emitters = Vec::with_capacity(2 * m);
    emitters.extend(a_positions.iter().map(|&x0| Emitter { x0, spot: Spot::A }));
    emitters.extend(a_positions.iter().map(|&x0| Emitter { x0: -x0, spot: Spot::B }));
    Ok(SourceGeometry {
        emitters,
        spot_a,
        spot_b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMode {
    /// D2 parked at `fixed_x2`, D1 scanned.
    FixedD2,
    /// Both detectors move in opposite directions: `(x, -x)`.
    Opposite,
}

impl fmt::Display for ScanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScanMode::FixedD2 => f.write_str("fixed_d2"),
            ScanMode::Opposite => f.write_str("opposite"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanPlan {
    mode: ScanMode,
    positions: Vec<f64>,
    fixed_x2: f64,
}

impl ScanPlan {
    pub fn new(mode: ScanMode, positions: Vec<f64>, fixed_x2: f64) -> Result<Self, ConfigError> {
        if positions.is_empty() {
            return Err(ConfigError::invalid("positions", "scan has no positions"));
        }
        if positions.iter().any(|x| !x.is_finite()) || !fixed_x2.is_finite() {
            return Err(ConfigError::invalid("positions", "non-finite scan coordinate"));
        }
        if positions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConfigError::invalid(
                "positions",
                "scan positions must be strictly increasing",
            ));
        }
        Ok(ScanPlan {
            mode,
            positions,
            fixed_x2,
        })
    }

    pub fn opposite(positions: Vec<f64>) -> Result<Self, ConfigError> {
        Self::new(ScanMode::Opposite, positions, 0.0)
    }

    pub fn fixed_d2(positions: Vec<f64>, fixed_x2: f64) -> Result<Self, ConfigError> {
        Self::new(ScanMode::FixedD2, positions, fixed_x2)
    }

    /// Symmetric grid `i·step` for `|i·step| <= half_width`. Positions are
    /// computed from integer indices so `x(-i) == -x(i)` exactly.
    pub fn symmetric(mode: ScanMode, half_width: f64, step: f64, fixed_x2: f64) -> Result<Self, ConfigError> {
        positive("step", step)?;
        if !(half_width.is_finite() && half_width >= 0.0) {
            return Err(ConfigError::invalid(
                "half_width",
                format!("must be a non-negative length, got {half_width}"),
            ));
        }
        let n = (half_width / step * (1.0 + 1e-12)).floor() as i64;
        let positions = (-n..=n).map(|i| i as f64 * step).collect();
        Self::new(mode, positions, fixed_x2)
    }

    pub fn mode(&self) -> ScanMode {
        self.mode
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn fixed_x2(&self) -> f64 {
        self.fixed_x2
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Detector coordinates `(x1, x2)` for scan coordinate `x`.
    pub fn detector_pair(&self, x: f64) -> (f64, f64) {
        match self.mode {
            ScanMode::FixedD2 => (x, self.fixed_x2),
            ScanMode::Opposite => (x, -x),
        }
    }

    pub fn detector_pairs(&self) -> Vec<(f64, f64)> {
        self.positions.iter().map(|&x| self.detector_pair(x)).collect()
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn spot_supports_are_disjoint(x0 in -5e-3f64..5e-3, d in 0.2e-3f64..3e-3, frac in 0.01f64..0.99) {
            let cfg = ExperimentConfig {
                source_separation_d: d,
                spot_size_s: d * frac,
                ..ExperimentConfig::reference()
            };
            let g = discretize_sources(&cfg).unwrap();
            prop_assert_eq!(g.transmission(Spot::A, x0) * g.transmission(Spot::B, x0), 0);
        }

        #[test]
        fn discretization_is_deterministic(m in 2usize..200, d in 0.2e-3f64..3e-3) {
            let cfg = ExperimentConfig {
                source_separation_d: d,
                spot_size_s: d / 10.0,
                emitters_per_spot: m,
                ..ExperimentConfig::reference()
            };
            let g1 = discretize_sources(&cfg).unwrap();
            let g2 = discretize_sources(&cfg).unwrap();
            prop_assert_eq!(g1.emitters().len(), 2 * m);
            for (a, b) in g1.emitters().iter().zip(g2.emitters()) {
                prop_assert_eq!(a.x0.to_bits(), b.x0.to_bits());
                prop_assert_eq!(a.spot, b.spot);
            }
        }
    }
}
