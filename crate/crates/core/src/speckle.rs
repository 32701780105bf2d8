//! Monte Carlo pseudo-thermal fields.
//!
//! Every realization gives each point emitter a fresh random complex
//! amplitude (a fully decorrelated ground-glass frame), propagates the sum to
//! the detector plane with the Fraunhofer kernel `exp(i·k·x·x0/z)` and records
//! intensities. Ensemble averages of the intensity product estimate the
//! coincidence rate.
//!
//! Reproducibility: every emitter amplitude is drawn from its own RNG stream
//! seeded by hashing `(master_seed, realization, emitter, spot)`. Realizations
//! are accumulated in fixed chunks of [`CHUNK_SIZE`] indices and the chunk
//! partial sums are reduced in index order, so results are bit-identical for
//! any number of rayon workers.

use crate::geometry::{discretize_sources, ConfigError, ExperimentConfig, Polarization, ScanPlan, SourceGeometry};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_pcg::Pcg32;
use rayon::prelude::*;
use std::f64::consts::{FRAC_1_SQRT_2, TAU};
use thiserror::Error;

/// Realizations per deterministic reduction chunk.
pub const CHUNK_SIZE: usize = 512;
pub const MIN_REALIZATIONS: usize = 100;
pub const MIN_MOMENT_CHECK_REALIZATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("{requested} realizations requested, at least {minimum} are needed (`realizations`)")]
    TooFewRealizations { requested: usize, minimum: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeModel {
    /// Independent zero-mean normal real and imaginary parts, `<|a|²> = 1`.
    #[default]
    CircularGaussian,
    /// `exp(iφ)` with uniform `φ`. Not Gaussian for few emitters.
    UnitPhasor,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the RNG stream owning one emitter amplitude in one realization.
pub fn stream_seed(master_seed: u64, realization: u64, emitter: u64, channel: u64) -> u64 {
    let h = splitmix(master_seed);
    let h = splitmix(h ^ realization);
    let h = splitmix(h ^ emitter);
    splitmix(h ^ channel)
}

/// Field amplitudes at a set of detector positions for one realization,
/// stored position-major: `amplitudes[position * channels + channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRealization {
    pub realization_index: u64,
    channels: usize,
    amplitudes: Vec<Complex64>,
}

impl FieldRealization {
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn positions(&self) -> usize {
        self.amplitudes.len() / self.channels
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn field(&self, position: usize, channel: usize) -> Complex64 {
        self.amplitudes[position * self.channels + channel]
    }

    /// Total intensity summed over polarization channels.
    pub fn intensity(&self, position: usize) -> f64 {
        let start = position * self.channels;
        self.amplitudes[start..start + self.channels]
            .iter()
            .map(|e| e.norm_sqr())
            .sum()
    }
}

/// Sums of one complex quantity and of its componentwise squares.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct ComplexSums {
    sum: Complex64,
    re2: f64,
    im2: f64,
}

impl ComplexSums {
    fn push(&mut self, v: Complex64) {
        self.sum += v;
        self.re2 += v.re * v.re;
        self.im2 += v.im * v.im;
    }

    fn merge(&mut self, other: &Self) {
        self.sum += other.sum;
        self.re2 += other.re2;
        self.im2 += other.im2;
    }

    fn mean_and_stderr(&self, n: f64) -> ComplexEstimate {
        let mean = self.sum / n;
        let var = |s2: f64, m: f64| ((s2 - n * m * m) / (n - 1.0)).max(0.0);
        ComplexEstimate {
            value: mean,
            stderr: Complex64::new((var(self.re2, mean.re) / n).sqrt(), (var(self.im2, mean.im) / n).sqrt()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexEstimate {
    pub value: Complex64,
    /// Componentwise standard error of `value`.
    pub stderr: Complex64,
}

/// Running sums for one detector pair.
#[derive(Debug, Clone, Default, PartialEq)]
struct PairSums {
    n: u64,
    i1: f64,
    i2: f64,
    p: f64,
    i1i1: f64,
    i2i2: f64,
    pp: f64,
    pi1: f64,
    pi2: f64,
    g1_total: ComplexSums,
    g1_channel: [ComplexSums; 2],
    cross_channel: ComplexSums,
}

impl PairSums {
    fn merge(&mut self, o: &Self) {
        self.n += o.n;
        self.i1 += o.i1;
        self.i2 += o.i2;
        self.p += o.p;
        self.i1i1 += o.i1i1;
        self.i2i2 += o.i2i2;
        self.pp += o.pp;
        self.pi1 += o.pi1;
        self.pi2 += o.pi2;
        self.g1_total.merge(&o.g1_total);
        for (a, b) in self.g1_channel.iter_mut().zip(&o.g1_channel) {
            a.merge(b);
        }
        self.cross_channel.merge(&o.cross_channel);
    }
}

/// Ensemble statistics at one detector pair `(x1, x2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleEstimate {
    pub x1: f64,
    pub x2: f64,
    pub mean_i1: f64,
    pub mean_i2: f64,
    pub stderr_i1: f64,
    pub stderr_i2: f64,
    pub mean_i1i2: f64,
    /// `<E*(x1) E(x2)>` summed over channels.
    pub g1_estimate: ComplexEstimate,
    /// Per-channel `<E*_c(x1) E_c(x2)>`.
    pub g1_channels: Vec<ComplexEstimate>,
    /// `<E*_0(x1) E_1(x2)>` between the two polarization channels, when
    /// there are two.
    pub cross_channel: Option<ComplexEstimate>,
    pub g2_normalized: f64,
    pub stderr_g2: f64,
    pub n_realizations: usize,
}

impl EnsembleEstimate {
    fn from_sums(x1: f64, x2: f64, s: &PairSums, channels: usize) -> Self {
        let n = s.n as f64;
        let m1 = s.i1 / n;
        let m2 = s.i2 / n;
        let mp = s.p / n;
        let cov = |sab: f64, ma: f64, mb: f64| (sab - n * ma * mb) / (n - 1.0);
        let v1 = cov(s.i1i1, m1, m1);
        let v2 = cov(s.i2i2, m2, m2);
        let vp = cov(s.pp, mp, mp);
        let c_p1 = cov(s.pi1, mp, m1);
        let c_p2 = cov(s.pi2, mp, m2);
        let c_12 = cov(s.p, m1, m2);

        // ratio R = <P>/(<I1><I2>), first-order delta method
        let ratio = mp / (m1 * m2);
        let gp = 1.0 / (m1 * m2);
        let g1 = -ratio / m1;
        let g2 = -ratio / m2;
        let var_ratio =
            gp * gp * vp + g1 * g1 * v1 + g2 * g2 * v2 + 2.0 * (gp * g1 * c_p1 + gp * g2 * c_p2 + g1 * g2 * c_12);

        EnsembleEstimate {
            x1,
            x2,
            mean_i1: m1,
            mean_i2: m2,
            stderr_i1: (v1.max(0.0) / n).sqrt(),
            stderr_i2: (v2.max(0.0) / n).sqrt(),
            mean_i1i2: mp,
            g1_estimate: s.g1_total.mean_and_stderr(n),
            g1_channels: s.g1_channel[..channels].iter().map(|c| c.mean_and_stderr(n)).collect(),
            cross_channel: (channels == 2).then(|| s.cross_channel.mean_and_stderr(n)),
            g2_normalized: ratio,
            stderr_g2: (var_ratio.max(0.0) / n).sqrt(),
            n_realizations: s.n as usize,
        }
    }
}

/// Precomputed Fraunhofer kernel between emitters and detector positions.
struct Propagator {
    n_emitters: usize,
    channels: usize,
    emitter_channel: Vec<usize>,
    kernel: Vec<Complex64>,
}

impl Propagator {
    fn new(sim: &SpeckleSimulator, positions: &[f64]) -> Self {
        let k_over_z = sim.config.wavenumber() / sim.config.distance_z;
        let emitters = sim.geometry.emitters();
        let kernel = positions
            .iter()
            .flat_map(|&x| {
                emitters
                    .iter()
                    .map(move |e| Complex64::from_polar(1.0, k_over_z * x * e.x0))
            })
            .collect();
        Propagator {
            n_emitters: emitters.len(),
            channels: sim.channels(),
            emitter_channel: emitters.iter().map(|e| sim.channel_of(e.spot)).collect(),
            kernel,
        }
    }

    fn propagate(&self, amplitudes: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (p, row) in self.kernel.chunks_exact(self.n_emitters.max(1)).enumerate() {
            let fields = &mut out[p * self.channels..(p + 1) * self.channels];
            if self.channels == 1 {
                fields[0] = row.iter().zip(amplitudes).map(|(k, a)| k * a).sum();
            } else {
                for ((k, a), &c) in row.iter().zip(amplitudes).zip(&self.emitter_channel) {
                    fields[c] += k * a;
                }
            }
        }
    }
}

/// Monte Carlo engine bound to one configuration and source geometry.
#[derive(Debug, Clone)]
pub struct SpeckleSimulator {
    config: ExperimentConfig,
    geometry: SourceGeometry,
    amplitude_model: AmplitudeModel,
}

impl SpeckleSimulator {
    pub fn new(config: &ExperimentConfig) -> Result<Self, McError> {
        let geometry = discretize_sources(config)?;
        Ok(Self::with_geometry(config, geometry))
    }

    /// Use an explicit geometry, e.g. one spot switched off or a single emitter.
    pub fn with_geometry(config: &ExperimentConfig, geometry: SourceGeometry) -> Self {
        SpeckleSimulator {
            config: config.clone(),
            geometry,
            amplitude_model: AmplitudeModel::default(),
        }
    }

    pub fn amplitude_model(mut self, model: AmplitudeModel) -> Self {
        self.amplitude_model = model;
        self
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn geometry(&self) -> &SourceGeometry {
        &self.geometry
    }

    /// 1 for parallel polarization, 2 for orthogonal.
    pub fn channels(&self) -> usize {
        match self.config.polarization {
            Polarization::Parallel => 1,
            Polarization::Orthogonal => 2,
        }
    }

    fn channel_of(&self, spot: crate::geometry::Spot) -> usize {
        match self.config.polarization {
            Polarization::Parallel => 0,
            Polarization::Orthogonal => spot.index(),
        }
    }

    fn fill_amplitudes(&self, realization: u64, out: &mut [Complex64]) {
        for (j, (a, e)) in out.iter_mut().zip(self.geometry.emitters()).enumerate() {
            let seed = stream_seed(self.config.seed, realization, j as u64, e.spot.index() as u64);
            let mut rng = Pcg32::seed_from_u64(seed);
            *a = match self.amplitude_model {
                AmplitudeModel::CircularGaussian => {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(re, im) * FRAC_1_SQRT_2
                }
                AmplitudeModel::UnitPhasor => Complex64::from_polar(1.0, rng.gen::<f64>() * TAU),
            };
        }
    }

    /// Emitter amplitudes of one realization, in geometry order.
    pub fn emitter_amplitudes(&self, realization: u64) -> Vec<Complex64> {
        let mut a = vec![Complex64::new(0.0, 0.0); self.geometry.emitters().len()];
        self.fill_amplitudes(realization, &mut a);
        a
    }

    /// Propagate caller-supplied emitter amplitudes.
    pub fn propagate(&self, positions: &[f64], amplitudes: &[Complex64], realization_index: u64) -> FieldRealization {
        assert_eq!(amplitudes.len(), self.geometry.emitters().len());
        let prop = Propagator::new(self, positions);
        let mut out = vec![Complex64::new(0.0, 0.0); positions.len() * prop.channels];
        prop.propagate(amplitudes, &mut out);
        FieldRealization {
            realization_index,
            channels: prop.channels,
            amplitudes: out,
        }
    }

    pub fn draw_realization(&self, positions: &[f64], index: u64) -> FieldRealization {
        self.propagate(positions, &self.emitter_amplitudes(index), index)
    }

    /// Accumulate `n` realizations at every detector pair.
    fn accumulate(&self, pairs: &[(f64, f64)], n: usize) -> Vec<PairSums> {
        // `+ 0.0` folds -0.0 into 0.0 so dedup and lookup agree
        let mut positions: Vec<f64> = pairs.iter().flat_map(|&(a, b)| [a + 0.0, b + 0.0]).collect();
        positions.sort_by(f64::total_cmp);
        positions.dedup();
        let lookup = |x: f64| positions.binary_search_by(|p| p.total_cmp(&(x + 0.0))).unwrap();
        let pair_index: Vec<(usize, usize)> = pairs.iter().map(|&(a, b)| (lookup(a), lookup(b))).collect();

        let prop = Propagator::new(self, &positions);
        let channels = prop.channels;
        let n_chunks = n.div_ceil(CHUNK_SIZE);

        let partials: Vec<Vec<PairSums>> = (0..n_chunks)
            .into_par_iter()
            .map(|chunk| {
                let mut sums = vec![PairSums::default(); pairs.len()];
                let mut amplitudes = vec![Complex64::new(0.0, 0.0); prop.n_emitters];
                let mut fields = vec![Complex64::new(0.0, 0.0); positions.len() * channels];
                let mut intensity = vec![0.0; positions.len()];
                let end = ((chunk + 1) * CHUNK_SIZE).min(n);
                for r in chunk * CHUNK_SIZE..end {
                    self.fill_amplitudes(r as u64, &mut amplitudes);
                    prop.propagate(&amplitudes, &mut fields);
                    for (p, i) in intensity.iter_mut().enumerate() {
                        *i = fields[p * channels..(p + 1) * channels]
                            .iter()
                            .map(|e| e.norm_sqr())
                            .sum();
                    }
                    for (s, &(p1, p2)) in sums.iter_mut().zip(&pair_index) {
                        let (i1, i2) = (intensity[p1], intensity[p2]);
                        let prod = i1 * i2;
                        s.n += 1;
                        s.i1 += i1;
                        s.i2 += i2;
                        s.p += prod;
                        s.i1i1 += i1 * i1;
                        s.i2i2 += i2 * i2;
                        s.pp += prod * prod;
                        s.pi1 += prod * i1;
                        s.pi2 += prod * i2;
                        let e1 = &fields[p1 * channels..(p1 + 1) * channels];
                        let e2 = &fields[p2 * channels..(p2 + 1) * channels];
                        let mut total = Complex64::new(0.0, 0.0);
                        for c in 0..channels {
                            let g = e1[c].conj() * e2[c];
                            s.g1_channel[c].push(g);
                            total += g;
                        }
                        s.g1_total.push(total);
                        if channels == 2 {
                            s.cross_channel.push(e1[0].conj() * e2[1]);
                        }
                    }
                }
                sums
            })
            .collect();

        let mut total = vec![PairSums::default(); pairs.len()];
        for chunk in &partials {
            for (t, c) in total.iter_mut().zip(chunk) {
                t.merge(c);
            }
        }
        total
    }

    /// Ensemble statistics at arbitrary detector pairs.
    pub fn estimate_pairs(&self, pairs: &[(f64, f64)], n: usize) -> Result<Vec<EnsembleEstimate>, McError> {
        require(n, MIN_REALIZATIONS)?;
        let channels = self.channels();
        Ok(self
            .accumulate(pairs, n)
            .iter()
            .zip(pairs)
            .map(|(s, &(x1, x2))| EnsembleEstimate::from_sums(x1, x2, s, channels))
            .collect())
    }

    /// Normalized `g2 = <I1 I2>/(<I1><I2>)` at every scan position, using
    /// `config.realizations` realizations.
    pub fn estimate_g2(&self, plan: &ScanPlan) -> Result<Vec<EnsembleEstimate>, McError> {
        self.estimate_pairs(&plan.detector_pairs(), self.config.realizations)
    }

    /// `<E*(x1) E(x2)>` summed over channels.
    pub fn estimate_g1(&self, x1: f64, x2: f64, n: usize) -> Result<ComplexEstimate, McError> {
        Ok(self.estimate_pairs(&[(x1, x2)], n)?[0].g1_estimate)
    }

    /// Relative violation of the Gaussian moment factorization
    /// `<I1 I2> = Σ_c |<E*_c1 E_c2>|² + <I1><I2>`.
    pub fn moment_theorem_check(&self, x1: f64, x2: f64, n: usize) -> Result<f64, McError> {
        require(n, MIN_MOMENT_CHECK_REALIZATIONS)?;
        let est = self.estimate_pairs(&[(x1, x2)], n)?.remove(0);
        Ok(moment_residual(&est))
    }
}

/// Moment-theorem residual of an existing estimate.
pub fn moment_residual(est: &EnsembleEstimate) -> f64 {
    let dc = est.mean_i1 * est.mean_i2;
    let coherent: f64 = est.g1_channels.iter().map(|g| g.value.norm_sqr()).sum();
    (est.mean_i1i2 - (coherent + dc)).abs() / dc
}

fn require(n: usize, minimum: usize) -> Result<(), McError> {
    if n < minimum {
        Err(McError::TooFewRealizations { requested: n, minimum })
    } else {
        Ok(())
    }
}

pub fn draw_realization(
    geometry: &SourceGeometry,
    config: &ExperimentConfig,
    detector_positions: &[f64],
    index: u64,
) -> FieldRealization {
    SpeckleSimulator::with_geometry(config, geometry.clone()).draw_realization(detector_positions, index)
}

pub fn estimate_g2(config: &ExperimentConfig, plan: &ScanPlan) -> Result<Vec<EnsembleEstimate>, McError> {
    SpeckleSimulator::new(config)?.estimate_g2(plan)
}

pub fn estimate_g1(config: &ExperimentConfig, x1: f64, x2: f64, n: usize) -> Result<ComplexEstimate, McError> {
    SpeckleSimulator::new(config)?.estimate_g1(x1, x2, n)
}

pub fn moment_theorem_check(config: &ExperimentConfig, x1: f64, x2: f64, n: usize) -> Result<f64, McError> {
    SpeckleSimulator::new(config)?.moment_theorem_check(x1, x2, n)
}
