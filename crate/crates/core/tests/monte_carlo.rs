//! Statistical properties of the speckle ensemble.

use num_complex::Complex64;
use std::f64::consts::PI;
use twophoton::analytic::{g1_spot, g2};
use twophoton::geometry::{discretize_sources, Emitter};
use twophoton::speckle::{draw_realization, McError, SpeckleSimulator};
use twophoton::{ExperimentConfig, Polarization, ScanMode, ScanPlan, Spot};

const MM: f64 = 1e-3;

fn reference() -> ExperimentConfig {
    ExperimentConfig::reference()
}

fn within(value: f64, expected: f64, stderr: f64, k: f64) -> bool {
    (value - expected).abs() <= k * stderr
}

#[test]
fn single_emitter_field_has_constant_modulus() {
    let cfg = reference();
    let geometry = discretize_sources(&cfg).unwrap().single_emitter(Spot::A);
    let positions: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.37 * MM).collect();
    for index in [0, 7, 1234] {
        let f = draw_realization(&geometry, &cfg, &positions, index);
        assert_eq!(f.channels(), 1);
        let m0 = f.field(0, 0).norm();
        for p in 0..positions.len() {
            assert!((f.field(p, 0).norm() - m0).abs() <= 1e-12 * m0);
        }
    }
}

#[test]
fn equal_phase_pair_cancels_at_quarter_fringe() {
    let cfg = ExperimentConfig {
        spot_size_s: 0.01 * MM,
        ..reference()
    };
    let d = cfg.source_separation_d;
    let geometry = twophoton::SourceGeometry::from_emitters(
        &cfg,
        vec![
            Emitter {
                x0: d / 2.0,
                spot: Spot::A,
            },
            Emitter {
                x0: -d / 2.0,
                spot: Spot::B,
            },
        ],
    )
    .unwrap();
    let sim = SpeckleSimulator::with_geometry(&cfg, geometry);
    let a = Complex64::new(0.6, -0.3);
    let x = cfg.wavelength * cfg.distance_z / (2.0 * d);
    let f = sim.propagate(&[x, 0.0], &[a, a], 0);
    assert!(f.field(0, 0).norm() < 1e-12 * a.norm());
    assert!((f.field(1, 0) - a * 2.0).norm() < 1e-12);
}

#[test]
fn orthogonal_realization_has_two_channels() {
    let cfg = reference().with_polarization(Polarization::Orthogonal);
    let sim = SpeckleSimulator::new(&cfg).unwrap();
    let f = sim.draw_realization(&[0.0, 1.0 * MM, -2.0 * MM], 3);
    assert_eq!(f.channels(), 2);
    assert_eq!(f.amplitudes().len(), 6);
    let again = sim.draw_realization(&[0.0, 1.0 * MM, -2.0 * MM], 3);
    assert_eq!(f.amplitudes(), again.amplitudes());
}

#[test]
fn g2_at_center_matches_closed_form() {
    for (pol, expected) in [(Polarization::Parallel, 2.0), (Polarization::Orthogonal, 1.5)] {
        let cfg = reference().with_polarization(pol);
        let sim = SpeckleSimulator::new(&cfg).unwrap();
        let est = &sim.estimate_pairs(&[(0.0, 0.0)], 50_000).unwrap()[0];
        assert!(
            within(est.g2_normalized, expected, est.stderr_g2, 3.0),
            "{pol}: {} ± {}",
            est.g2_normalized,
            est.stderr_g2
        );
    }
}

#[test]
fn single_thermal_spot_bunches_to_two() {
    let cfg = reference();
    let geometry = discretize_sources(&cfg).unwrap().only(Spot::A);
    let sim = SpeckleSimulator::with_geometry(&cfg, geometry);
    for x in [0.0, 0.6 * MM, -2.5 * MM] {
        let est = &sim.estimate_pairs(&[(x, x)], 40_000).unwrap()[0];
        assert!(
            within(est.g2_normalized, 2.0, est.stderr_g2, 3.0),
            "{x}: {}",
            est.g2_normalized
        );
    }
}

#[test]
fn stderr_scales_as_inverse_root_n() {
    let cfg = ExperimentConfig {
        realizations: 4_000,
        ..reference()
    };
    let plan = ScanPlan::opposite((0..10).map(|i| i as f64 * 0.3 * MM).collect()).unwrap();
    let small = SpeckleSimulator::new(&cfg).unwrap().estimate_g2(&plan).unwrap();
    let big_cfg = ExperimentConfig {
        realizations: 16_000,
        ..cfg
    };
    let big = SpeckleSimulator::new(&big_cfg).unwrap().estimate_g2(&plan).unwrap();
    let ratio: f64 = small
        .iter()
        .zip(&big)
        .map(|(a, b)| a.stderr_g2 / b.stderr_g2)
        .sum::<f64>()
        / small.len() as f64;
    assert!((ratio - 2.0).abs() <= 0.4, "ratio {ratio}");
}

#[test]
fn orthogonal_channels_are_uncorrelated() {
    let cfg = reference().with_polarization(Polarization::Orthogonal);
    let sim = SpeckleSimulator::new(&cfg).unwrap();
    let pairs = [(0.0, 0.0), (0.4 * MM, -0.4 * MM), (1.3 * MM, 0.2 * MM)];
    for est in sim.estimate_pairs(&pairs, 20_000).unwrap() {
        let c = est.cross_channel.expect("two channels");
        assert!(within(c.value.re, 0.0, c.stderr.re, 3.0), "{c:?}");
        assert!(within(c.value.im, 0.0, c.stderr.im, 3.0), "{c:?}");
    }
    let parallel = SpeckleSimulator::new(&reference()).unwrap();
    assert!(parallel.estimate_pairs(&[(0.0, 0.0)], 100).unwrap()[0]
        .cross_channel
        .is_none());
}

#[test]
fn mean_intensity_counts_emitters() {
    for pol in [Polarization::Parallel, Polarization::Orthogonal] {
        let cfg = reference().with_polarization(pol);
        let sim = SpeckleSimulator::new(&cfg).unwrap();
        let emitters = sim.geometry().emitters().len() as f64;
        for est in sim
            .estimate_pairs(&[(0.0, 2.1 * MM), (-0.9 * MM, 0.5 * MM)], 20_000)
            .unwrap()
        {
            assert!(within(est.mean_i1, emitters, est.stderr_i1, 3.0), "{}", est.mean_i1);
            assert!(within(est.mean_i2, emitters, est.stderr_i2, 3.0), "{}", est.mean_i2);
        }
    }
}

#[test]
fn g1_at_coincident_detectors_is_real() {
    let sim = SpeckleSimulator::new(&reference()).unwrap();
    let g = sim.estimate_g1(0.7 * MM, 0.7 * MM, 5_000).unwrap();
    assert!(g.value.re > 0.0);
    assert_eq!(g.value.im, 0.0);
}

#[test]
fn g1_of_one_spot_tracks_closed_form() {
    let cfg = reference();
    let geometry = discretize_sources(&cfg).unwrap().only(Spot::A);
    let sim = SpeckleSimulator::with_geometry(&cfg, geometry);
    let m = cfg.emitters_per_spot as f64;
    // the emitter sum at zero separation is M, the closed form ks/(2πz)
    let scale = m * 2.0 * PI * cfg.distance_z / (cfg.wavenumber() * cfg.spot_size_s);
    let dx = cfg.wavelength * cfg.distance_z / (2.0 * cfg.spot_size_s);
    for x2 in [0.0, -1.1 * MM] {
        let x1 = x2 + dx;
        let mc = sim.estimate_g1(x1, x2, 20_000).unwrap();
        let model = g1_spot(&cfg, Spot::A, x1, x2) * scale;
        assert!(within(mc.value.re, model.re, mc.stderr.re, 3.0), "{mc:?} vs {model}");
        assert!(within(mc.value.im, model.im, mc.stderr.im, 3.0), "{mc:?} vs {model}");
    }
}

#[test]
fn g1_vanishes_at_cosine_zero() {
    let cfg = reference();
    let sim = SpeckleSimulator::new(&cfg).unwrap();
    let quarter = cfg.wavelength * cfg.distance_z / (2.0 * cfg.source_separation_d);
    for odd in [1.0, 3.0] {
        let g = sim.estimate_g1(odd * quarter, 0.0, 20_000).unwrap();
        assert!(within(g.value.re, 0.0, g.stderr.re, 3.0), "{g:?}");
        assert!(within(g.value.im, 0.0, g.stderr.im, 3.0), "{g:?}");
    }
}

#[test]
fn fixed_detector_scan_agrees_with_closed_form() {
    let cfg = ExperimentConfig {
        realizations: 30_000,
        ..reference()
    };
    let plan = ScanPlan::symmetric(ScanMode::FixedD2, 2.0 * MM, 0.25 * MM, 0.0).unwrap();
    let est = SpeckleSimulator::new(&cfg).unwrap().estimate_g2(&plan).unwrap();
    let outliers = est
        .iter()
        .filter(|e| !within(e.g2_normalized, g2(&cfg, e.x1, e.x2).normalized, e.stderr_g2, 3.5))
        .count();
    assert_eq!(outliers, 0);
}

#[test]
fn too_few_realizations_is_rejected() {
    let sim = SpeckleSimulator::new(&reference()).unwrap();
    assert_eq!(
        sim.estimate_g1(0.0, 0.0, 50).unwrap_err(),
        McError::TooFewRealizations {
            requested: 50,
            minimum: 100
        }
    );
    assert!(matches!(
        sim.moment_theorem_check(0.0, 0.0, 5_000),
        Err(McError::TooFewRealizations { minimum: 10_000, .. })
    ));
}
