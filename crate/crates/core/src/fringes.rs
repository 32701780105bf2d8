//! Fringe extraction from correlation curves.
//!
//! Peaks are grid-local maxima refined with a three-point parabola. Only
//! peaks whose topographic prominence clears a noise threshold count toward
//! the fringe spacing: `3 × median stderr` for Monte Carlo curves, `1e-6` for
//! analytic ones.

use crate::geometry::Polarization;
use crate::scan::{CorrelationCurve, Engine, ScanError};

pub const MIN_POINTS: usize = 7;
pub const ANALYTIC_PROMINENCE: f64 = 1e-6;
pub const STDERR_PROMINENCE_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FringeStatus {
    Detected,
    NoFringesDetected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FringeReport {
    pub status: FringeStatus,
    /// Refined positions of the qualifying peaks, ascending.
    pub peak_positions: Vec<f64>,
    /// Mean gap between adjacent qualifying peaks; absent without fringes.
    pub fringe_spacing: Option<f64>,
    pub spacing_stderr: Option<f64>,
    pub visibility: f64,
    pub center_peak_value: f64,
    /// RMS of the curve against its attached closed-form model (0 when the
    /// curve carries no model).
    pub model_residual_rms: f64,
}

impl FringeReport {
    pub fn has_fringes(&self) -> bool {
        self.status == FringeStatus::Detected
    }
}

#[derive(Debug, Clone, Copy)]
struct Peak {
    x: f64,
    value: f64,
    prominence: f64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Height of `y[i]` above the higher of the two lowest points reached on
/// either side before the curve climbs above `y[i]` (or ends).
fn prominence(y: &[f64], i: usize) -> f64 {
    let peak = y[i];
    let mut left_min = peak;
    for &v in y[..i].iter().rev() {
        if v > peak {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = peak;
    for &v in &y[i + 1..] {
        if v > peak {
            break;
        }
        right_min = right_min.min(v);
    }
    peak - left_min.max(right_min)
}

/// Vertex of the parabola through three neighbouring samples.
fn refine(x: &[f64], y: &[f64], i: usize) -> (f64, f64) {
    let (x0, x1, x2) = (x[i - 1], x[i], x[i + 1]);
    let (y0, y1, y2) = (y[i - 1], y[i], y[i + 1]);
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curvature = (d12 - d01) / (x2 - x0);
    if curvature >= 0.0 || !curvature.is_finite() {
        return (x1, y1);
    }
    // Newton form: y = y0 + d01·(t − x0) + c·(t − x0)(t − x1)
    let vertex = 0.5 * (x0 + x1) - d01 / (2.0 * curvature);
    let vertex = vertex.clamp(x0, x2);
    let value = y0 + d01 * (vertex - x0) + curvature * (vertex - x0) * (vertex - x1);
    (vertex, value)
}

fn local_peaks(x: &[f64], y: &[f64]) -> Vec<Peak> {
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < y.len() {
        if y[i] > y[i - 1] {
            // walk across a flat top
            let mut j = i;
            while j + 1 < y.len() && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < y.len() && y[j + 1] < y[i] {
                let center = (i + j) / 2;
                let (px, pv) = if i == j {
                    refine(x, y, i)
                } else {
                    (0.5 * (x[i] + x[j]), y[i])
                };
                peaks.push(Peak {
                    x: px,
                    value: pv,
                    prominence: prominence(y, center),
                });
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

pub fn extract_fringes(curve: &CorrelationCurve) -> Result<FringeReport, ScanError> {
    let n = curve.points.len();
    if n < MIN_POINTS {
        return Err(ScanError::TooFewPoints(n));
    }
    let x = curve.xs();
    let y = curve.values();
    if x.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ScanError::NotIncreasing);
    }
    if curve.polarization == Polarization::Parallel {
        if let Some(spacing) = curve.predicted_spacing {
            let step = curve.max_step();
            if step >= spacing / 4.0 {
                return Err(ScanError::GridTooCoarse { step, spacing });
            }
        }
    }

    let threshold = match curve.engine() {
        Engine::Analytic => ANALYTIC_PROMINENCE,
        Engine::MonteCarlo => {
            let mut errs: Vec<f64> = curve.points.iter().map(|p| p.stderr).collect();
            STDERR_PROMINENCE_FACTOR * median(&mut errs)
        }
    };
    let peaks: Vec<Peak> = local_peaks(&x, &y)
        .into_iter()
        .filter(|p| p.prominence > threshold)
        .collect();

    let center = peaks.iter().min_by(|a, b| a.x.abs().total_cmp(&b.x.abs())).copied();
    let center_peak_value = center.map_or_else(|| y.iter().copied().fold(f64::MIN, f64::max), |p| p.value);

    let (status, fringe_spacing, spacing_stderr) = if peaks.len() >= 2 {
        let gaps: Vec<f64> = peaks.windows(2).map(|w| w[1].x - w[0].x).collect();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let stderr = if gaps.len() > 1 {
            let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (gaps.len() - 1) as f64;
            (var / gaps.len() as f64).sqrt()
        } else {
            0.0
        };
        (FringeStatus::Detected, Some(mean), Some(stderr))
    } else {
        (FringeStatus::NoFringesDetected, None, None)
    };

    // central fringe region: one fringe either side of the central peak
    let region: Vec<f64> = match (center, fringe_spacing) {
        (Some(c), Some(spacing)) => curve
            .points
            .iter()
            .filter(|p| (p.x - c.x).abs() <= spacing * (1.0 + 1e-9))
            .map(|p| p.g2)
            .collect(),
        _ => y.clone(),
    };
    let p = region.iter().copied().fold(f64::MIN, f64::max) - 1.0;
    let q = region.iter().copied().fold(f64::MAX, f64::min) - 1.0;
    let visibility = if p + q > 0.0 {
        ((p - q) / (p + q)).clamp(0.0, 1.0)
    } else {
        0.0
    };

    let model_residual_rms = curve.model.as_ref().map_or(0.0, |model| {
        let sum: f64 = model.iter().zip(&y).map(|(m, v)| (v - m).powi(2)).sum();
        (sum / n as f64).sqrt()
    });

    Ok(FringeReport {
        status,
        peak_positions: peaks.iter().map(|p| p.x).collect(),
        fringe_spacing,
        spacing_stderr,
        visibility,
        center_peak_value,
        model_residual_rms,
    })
}
