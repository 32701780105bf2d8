//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::process::Command;
use std::time::Instant;
use tempfile::TempDir;
use twophoton::analytic::{g2_anti_scan_closed_form, g2_orthogonal, g2_parallel};
use twophoton::config::ScanSettings;
use twophoton::fringes::{extract_fringes, FringeStatus};
use twophoton::scan::{compare_curves, run_scan, CorrelationCurve, Engine};
use twophoton::speckle::{AmplitudeModel, SpeckleSimulator};
use twophoton::verify::{
    closed_form_disagreement, fringe_halving, moment_residuals, orthogonal_separation_sensitivity, VerifyOptions,
    CLOSED_FORM_SAMPLES,
};
use twophoton::{ExperimentConfig, Polarization, ScanMode, ScanPlan};

const MM: f64 = 1e-3;
const N: usize = 200_000;

struct Outcome {
    passed: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn reference() -> ExperimentConfig {
    ExperimentConfig {
        realizations: N,
        emitters_per_spot: 64,
        ..ExperimentConfig::reference()
    }
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn fringe_halving_criterion() -> Outcome {
    let start = Instant::now();
    let h = fringe_halving(&reference()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let passed = (h.fixed_d2_spacing - 1.70 * MM).abs() <= 0.02 * MM
        && (h.opposite_spacing - 0.85 * MM).abs() <= 0.01 * MM
        && (h.ratio - 0.5).abs() <= 0.005
        && elapsed < 1.0;
    outcome(
        passed,
        format!(
            "fixed D2 {:.4} mm, opposite {:.4} mm, ratio {:.4}, {elapsed:.3} s",
            h.fixed_d2_spacing / MM,
            h.opposite_spacing / MM,
            h.ratio
        ),
    )
}

fn monte_carlo_criterion() -> Outcome {
    let cfg = reference();
    let plan = ScanPlan::symmetric(ScanMode::Opposite, 3.0 * MM, 0.25 * MM, 0.0).unwrap();
    let start = Instant::now();
    let serial = in_pool(1, || run_scan(&cfg, &plan, Engine::MonteCarlo).unwrap());
    let serial_time = start.elapsed().as_secs_f64();
    let parallel = in_pool(4, || run_scan(&cfg, &plan, Engine::MonteCarlo).unwrap());
    let analytic = run_scan(&cfg, &plan, Engine::Analytic).unwrap();
    let cmp = compare_curves(&serial, &analytic).unwrap();
    let outside = serial
        .points
        .iter()
        .zip(&analytic.points)
        .filter(|(m, a)| (m.g2 - a.g2).abs() > 3.0 * m.stderr)
        .count();
    let identical = serial == parallel;
    outcome(
        cmp.rms < 0.02 && outside == 0 && identical && serial_time < 120.0,
        format!(
            "{} points: rms {:.4}, {outside} beyond 3 stderr, 1 vs 4 workers identical: {identical}, {serial_time:.1} s on one worker",
            serial.points.len(),
            cmp.rms
        ),
    )
}

fn peak_value_criterion() -> Outcome {
    let cfg = reference();
    let par = g2_parallel(&cfg, 0.0, 0.0).normalized;
    let orth = g2_orthogonal(&cfg, 0.0, 0.0).normalized;
    let analytic_ok = (par - 2.0).abs() <= 1e-12 && (orth - 1.5).abs() <= 1e-12;
    let mut detail = format!("closed form {par:.15} / {orth:.15}");
    let mut mc_ok = true;
    for (pol, expected) in [(Polarization::Parallel, 2.0), (Polarization::Orthogonal, 1.5)] {
        let sim = SpeckleSimulator::new(&cfg.clone().with_polarization(pol)).unwrap();
        let est = &sim.estimate_pairs(&[(0.0, 0.0)], N).unwrap()[0];
        let z = (est.g2_normalized - expected) / est.stderr_g2;
        mc_ok &= z.abs() <= 3.0;
        detail.push_str(&format!(
            ", MC {pol} {:.4} ± {:.4} ({z:+.2} stderr)",
            est.g2_normalized, est.stderr_g2
        ));
    }
    outcome(analytic_ok && mc_ok, detail)
}

fn figure_curve(mode: ScanMode) -> CorrelationCurve {
    let cfg = reference().with_polarization(Polarization::Orthogonal);
    let plan = ScanSettings::default().plan(mode, Engine::MonteCarlo).unwrap();
    run_scan(&cfg, &plan, Engine::MonteCarlo).unwrap()
}

fn orthogonal_null_criterion() -> Outcome {
    let mut passed = true;
    let mut detail = String::new();
    for (name, mode) in [("fig4a", ScanMode::FixedD2), ("fig4b", ScanMode::Opposite)] {
        let report = extract_fringes(&figure_curve(mode)).unwrap();
        passed &= report.status == FringeStatus::NoFringesDetected;
        detail.push_str(&format!("{name} {:?}, ", report.status));
    }
    let sensitivity = orthogonal_separation_sensitivity(&reference(), 42);
    passed &= sensitivity <= 1e-12;
    detail.push_str(&format!("d sensitivity {sensitivity:.2e}"));
    outcome(passed, detail)
}

fn moment_theorem_criterion() -> Outcome {
    let cfg = reference();
    let options = VerifyOptions::default();
    let bound = 5.0 / (options.moment_realizations as f64).sqrt();
    let gaussian = moment_residuals(&cfg, &options).unwrap();
    let worst = gaussian.iter().map(|r| r.1).fold(0.0, f64::max);
    let negative = moment_residuals(
        &cfg,
        &VerifyOptions {
            amplitude_model: AmplitudeModel::UnitPhasor,
            emitters: Some(1),
            ..options.clone()
        },
    )
    .unwrap();
    let negative_fails = negative.iter().any(|r| r.1 >= bound);
    outcome(
        gaussian.len() == 20 && worst < bound && negative_fails,
        format!(
            "{} pairs at n = {}: worst {worst:.2e} < {bound:.2e}; single phasor worst {:.2e}",
            gaussian.len(),
            options.moment_realizations,
            negative.iter().map(|r| r.1).fold(0.0, f64::max)
        ),
    )
}

fn closed_form_criterion() -> Outcome {
    let cfg = reference();
    let worst = closed_form_disagreement(&cfg, CLOSED_FORM_SAMPLES, 42);
    let center = g2_anti_scan_closed_form(&cfg, 0.0).normalized;
    outcome(
        worst <= 1e-12 && center == 2.0,
        format!("{CLOSED_FORM_SAMPLES} positions: worst relative error {worst:.2e}"),
    )
}

fn determinism_criterion() -> Outcome {
    let dir = TempDir::new().unwrap();
    let run = |workers: &str, csv: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_twophoton"))
            .args([
                "--out-dir",
                dir.path().to_str().unwrap(),
                "--seed",
                "42",
                "--workers",
                workers,
            ])
            .args(["montecarlo", "--mode", "opposite", "--csv", csv])
            .status()
            .unwrap();
        assert!(status.success());
        fs::read(dir.path().join(csv)).unwrap()
    };
    let one = run("1", "w1.csv");
    let many = run("3", "w3.csv");
    outcome(
        one == many,
        format!("--workers 1 vs 3: {} bytes, identical: {}", one.len(), one == many),
    )
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("1 fringe halving", fringe_halving_criterion),
        ("2 monte carlo vs closed form", monte_carlo_criterion),
        ("3 peak values", peak_value_criterion),
        ("4 orthogonal null result", orthogonal_null_criterion),
        ("5 gaussian moment theorem", moment_theorem_criterion),
        ("6 closed-form consistency", closed_form_criterion),
        ("7 determinism across workers", determinism_criterion),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        let o = check();
        println!("{} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failures += usize::from(!o.passed);
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
