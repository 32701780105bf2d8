//! Scan driver: evaluates g² along a [`ScanPlan`] with either engine and
//! compares curves.

use crate::analytic::{self, predict_fringe_spacing};
use crate::geometry::{ExperimentConfig, Polarization, ScanMode, ScanPlan};
use crate::speckle::{McError, SpeckleSimulator};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScanError {
    #[error(transparent)]
    MonteCarlo(#[from] McError),
    #[error("curves are on different scan grids or modes")]
    GridMismatch,
    #[error("grid step {step} m is too coarse for predicted fringe spacing {spacing} m (needs < spacing/4)")]
    GridTooCoarse { step: f64, spacing: f64 },
    #[error("curve has {0} points, at least 7 are needed")]
    TooFewPoints(usize),
    #[error("curve scan coordinates must be strictly increasing")]
    NotIncreasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Analytic,
    MonteCarlo,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Engine::Analytic => f.write_str("analytic"),
            Engine::MonteCarlo => f.write_str("montecarlo"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub x: f64,
    /// Normalized g².
    pub g2: f64,
    /// Zero for analytic points.
    pub stderr: f64,
    /// Unnormalized closed-form value, analytic points only.
    pub g2_raw: Option<f64>,
    pub source: Engine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationCurve {
    pub points: Vec<CurvePoint>,
    pub mode: ScanMode,
    pub polarization: Polarization,
    /// Expected second-order fringe period, `None` when no fringes are
    /// expected or the curve is synthetic.
    pub predicted_spacing: Option<f64>,
    /// Closed-form g² on the same grid, carried by Monte Carlo curves.
    pub model: Option<Vec<f64>>,
    /// Realizations per point (0 for analytic curves).
    pub n_realizations: usize,
}

impl CorrelationCurve {
    /// Curve from bare samples with no model or predicted spacing attached.
    pub fn from_samples(
        mode: ScanMode,
        polarization: Polarization,
        xs: &[f64],
        g2: &[f64],
        stderr: &[f64],
        source: Engine,
    ) -> Result<Self, ScanError> {
        assert!(xs.len() == g2.len() && xs.len() == stderr.len());
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ScanError::NotIncreasing);
        }
        let points = xs
            .iter()
            .zip(g2)
            .zip(stderr)
            .map(|((&x, &g2), &stderr)| CurvePoint {
                x,
                g2,
                stderr: if source == Engine::Analytic { 0.0 } else { stderr },
                g2_raw: None,
                source,
            })
            .collect();
        Ok(CorrelationCurve {
            points,
            mode,
            polarization,
            predicted_spacing: None,
            model: None,
            n_realizations: 0,
        })
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.g2).collect()
    }

    pub fn engine(&self) -> Engine {
        self.points.first().map_or(Engine::Analytic, |p| p.source)
    }

    /// Largest gap between neighbouring scan coordinates.
    pub fn max_step(&self) -> f64 {
        self.points.windows(2).map(|w| w[1].x - w[0].x).fold(0.0, f64::max)
    }

    pub fn mean_stderr(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        self.points.iter().map(|p| p.stderr).sum::<f64>() / self.points.len() as f64
    }
}

fn analytic_values(config: &ExperimentConfig, plan: &ScanPlan) -> Vec<analytic::G2Value> {
    plan.detector_pairs()
        .into_iter()
        .map(|(x1, x2)| analytic::g2(config, x1, x2))
        .collect()
}

/// Evaluate g² at every plan position with the chosen engine.
pub fn run_scan(config: &ExperimentConfig, plan: &ScanPlan, engine: Engine) -> Result<CorrelationCurve, ScanError> {
    match engine {
        Engine::Analytic => {
            config.validate().map_err(McError::from)?;
            Ok(analytic_curve(config, plan))
        }
        Engine::MonteCarlo => run_monte_carlo(&SpeckleSimulator::new(config)?, plan),
    }
}

fn analytic_curve(config: &ExperimentConfig, plan: &ScanPlan) -> CorrelationCurve {
    let points = plan
        .positions()
        .iter()
        .zip(analytic_values(config, plan))
        .map(|(&x, v)| CurvePoint {
            x,
            g2: v.normalized,
            stderr: 0.0,
            g2_raw: Some(v.raw),
            source: Engine::Analytic,
        })
        .collect();
    CorrelationCurve {
        points,
        mode: plan.mode(),
        polarization: config.polarization,
        predicted_spacing: predict_fringe_spacing(config, plan.mode()).ok(),
        model: None,
        n_realizations: 0,
    }
}

/// Monte Carlo scan with a caller-configured simulator (custom geometry or
/// amplitude model). The closed-form curve is attached as the model.
pub fn run_monte_carlo(sim: &SpeckleSimulator, plan: &ScanPlan) -> Result<CorrelationCurve, ScanError> {
    let config = sim.config();
    let estimates = sim.estimate_g2(plan)?;
    let points = plan
        .positions()
        .iter()
        .zip(&estimates)
        .map(|(&x, e)| CurvePoint {
            x,
            g2: e.g2_normalized,
            stderr: e.stderr_g2,
            g2_raw: None,
            source: Engine::MonteCarlo,
        })
        .collect();
    Ok(CorrelationCurve {
        points,
        mode: plan.mode(),
        polarization: config.polarization,
        predicted_spacing: predict_fringe_spacing(config, plan.mode()).ok(),
        model: Some(analytic_values(config, plan).iter().map(|v| v.normalized).collect()),
        n_realizations: config.realizations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveComparison {
    pub rms: f64,
    pub max_abs: f64,
    /// Mean of `(Δg²/σ)²`, with σ² the summed variances of both curves.
    /// `None` when neither curve carries errors.
    pub chi2_per_point: Option<f64>,
}

pub fn compare_curves(a: &CorrelationCurve, b: &CorrelationCurve) -> Result<CurveComparison, ScanError> {
    if a.mode != b.mode || a.points.len() != b.points.len() || a.points.is_empty() {
        return Err(ScanError::GridMismatch);
    }
    let tolerance = 1e-9 * a.max_step().max(f64::MIN_POSITIVE);
    if a.points
        .iter()
        .zip(&b.points)
        .any(|(p, q)| (p.x - q.x).abs() > tolerance)
    {
        return Err(ScanError::GridMismatch);
    }
    let n = a.points.len() as f64;
    let mut sum_sq = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut chi2 = 0.0;
    let mut chi2_points = 0usize;
    for (p, q) in a.points.iter().zip(&b.points) {
        let diff = p.g2 - q.g2;
        sum_sq += diff * diff;
        max_abs = max_abs.max(diff.abs());
        let var = p.stderr * p.stderr + q.stderr * q.stderr;
        if var > 0.0 {
            chi2 += diff * diff / var;
            chi2_points += 1;
        }
    }
    Ok(CurveComparison {
        rms: (sum_sq / n).sqrt(),
        max_abs,
        chi2_per_point: (chi2_points > 0).then(|| chi2 / chi2_points as f64),
    })
}
