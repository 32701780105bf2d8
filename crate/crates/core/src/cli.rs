//! Command-line front end.
//!
//! Exit codes: 0 success, 1 verification failure, 2 invalid input,
//! 3 I/O failure.

use crate::config::{ConfigFileError, RunConfig, ScanSettings};
use crate::fringes::{extract_fringes, FringeReport};
use crate::geometry::{ExperimentConfig, Polarization, ScanMode};
use crate::output::{analytic_csv, figure_csv, manifest_path_for, montecarlo_csv, render_svg, PlotSeries, RunManifest};
use crate::scan::{run_monte_carlo, run_scan, CorrelationCurve, Engine, ScanError};
use crate::speckle::{AmplitudeModel, McError, SpeckleSimulator};
use crate::verify::{run_verification, VerifyOptions};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

const ANALYTIC_COLOR: &str = "#1f77b4";
const MC_COLOR: &str = "#d62728";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("verification failed")]
    VerificationFailed,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::VerificationFailed => 1,
            CliError::Invalid(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<ConfigFileError> for CliError {
    fn from(e: ConfigFileError) -> Self {
        match e {
            ConfigFileError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<McError> for CliError {
    fn from(e: McError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<ScanError> for CliError {
    fn from(e: ScanError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "twophoton",
    version,
    about = "Second-order interference of two independent pseudo-thermal sources"
)]
pub struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the Monte Carlo engine. Does not change results.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Directory for outputs; relative output paths are resolved against it.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    FixedD2,
    Opposite,
}

impl From<ModeArg> for ScanMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::FixedD2 => ScanMode::FixedD2,
            ModeArg::Opposite => ScanMode::Opposite,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolarizationArg {
    Parallel,
    Orthogonal,
}

impl From<PolarizationArg> for Polarization {
    fn from(p: PolarizationArg) -> Self {
        match p {
            PolarizationArg::Parallel => Polarization::Parallel,
            PolarizationArg::Orthogonal => Polarization::Orthogonal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AmplitudeArg {
    Gaussian,
    Phasor,
}

impl From<AmplitudeArg> for AmplitudeModel {
    fn from(a: AmplitudeArg) -> Self {
        match a {
            AmplitudeArg::Gaussian => AmplitudeModel::CircularGaussian,
            AmplitudeArg::Phasor => AmplitudeModel::UnitPhasor,
        }
    }
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Experiment file (TOML); the reference geometry when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scan mode; falls back to the config file, then `opposite`.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Polarization; falls back to the config file.
    #[arg(long, value_enum)]
    pub polarization: Option<PolarizationArg>,
    /// Output CSV.
    #[arg(long)]
    pub csv: PathBuf,
    /// Optional SVG plot.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form g² along a scan.
    Analytic(ScanArgs),
    /// Monte Carlo g² along a scan, plotted over the closed form.
    Montecarlo {
        #[command(flatten)]
        scan: ScanArgs,
        /// Ensemble size; overrides the config file.
        #[arg(long)]
        realizations: Option<usize>,
    },
    /// Run the built-in verification checks.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        amplitude_model: Option<AmplitudeArg>,
        /// Emitters per spot; 1 means a single emitter in spot A only.
        #[arg(long)]
        emitters: Option<usize>,
    },
    /// Regenerate the four coincidence-scan figures and a fringe summary.
    ReproduceFigures {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        realizations: Option<usize>,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn resolve(out_dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        out_dir.join(path)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

struct Session<'a> {
    cli: &'a Cli,
    started: Instant,
    command_line: String,
}

impl Session<'_> {
    fn finish(&self, manifest: &Path, run: &RunConfig, artifacts: Vec<PathBuf>) -> Result<(), CliError> {
        let m = RunManifest {
            command: self.command_line.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: run.experiment.seed,
            wall_time: self.started.elapsed().as_secs_f64(),
            artifact_paths: artifacts,
            config: run.to_file(),
        };
        m.write(manifest).map_err(|e| CliError::io(manifest, e))
    }

    fn config(&self, path: Option<&Path>) -> Result<RunConfig, CliError> {
        let mut run = load_config(path)?;
        if let Some(seed) = self.cli.seed {
            run.experiment.seed = seed;
        }
        Ok(run)
    }
}

fn scan_setup(session: &Session, args: &ScanArgs) -> Result<(RunConfig, ScanMode), CliError> {
    let mut run = session.config(args.config.as_deref())?;
    if let Some(p) = args.polarization {
        run.experiment.polarization = p.into();
    }
    let mode = args
        .mode
        .map(ScanMode::from)
        .or(run.scan.mode)
        .unwrap_or(ScanMode::Opposite);
    run.scan.mode = Some(mode);
    Ok((run, mode))
}

fn plot_title(engine: &str, mode: ScanMode, pol: Polarization) -> String {
    format!("{engine} g2, {mode} scan, {pol} polarization")
}

fn cmd_analytic(session: &Session, args: &ScanArgs) -> Result<(), CliError> {
    let (run, mode) = scan_setup(session, args)?;
    let plan = run
        .scan
        .plan(mode, Engine::Analytic)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let curve = run_scan(&run.experiment, &plan, Engine::Analytic)?;
    let out_dir = &session.cli.out_dir;
    let csv_path = resolve(out_dir, &args.csv);
    write_file(&csv_path, &analytic_csv(&curve))?;
    let mut artifacts = vec![csv_path.clone()];
    if let Some(svg) = &args.svg {
        let peaks = extract_fringes(&curve).map(|r| r.peak_positions).unwrap_or_default();
        let svg_path = resolve(out_dir, svg);
        let doc = render_svg(
            &plot_title("Closed-form", mode, run.experiment.polarization),
            &[PlotSeries::line("closed form", ANALYTIC_COLOR, &curve)],
            &peaks,
        );
        write_file(&svg_path, &doc)?;
        artifacts.push(svg_path);
    }
    session.finish(&manifest_path_for(&csv_path), &run, artifacts)
}

/// Closed-form curve on the fine analytic grid spanning the same range.
fn overlay_curve(
    experiment: &ExperimentConfig,
    settings: &ScanSettings,
    mode: ScanMode,
) -> Result<CorrelationCurve, CliError> {
    let overlay = ScanSettings {
        step: None,
        ..settings.clone()
    };
    let plan = overlay
        .plan(mode, Engine::Analytic)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    Ok(run_scan(experiment, &plan, Engine::Analytic)?)
}

fn monte_carlo_curve(run: &RunConfig, mode: ScanMode) -> Result<CorrelationCurve, CliError> {
    let plan = run
        .scan
        .plan(mode, Engine::MonteCarlo)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let sim = SpeckleSimulator::new(&run.experiment)?.amplitude_model(run.amplitude_model);
    Ok(run_monte_carlo(&sim, &plan)?)
}

fn mc_svg(title: &str, mc: &CorrelationCurve, overlay: &CorrelationCurve, report: Option<&FringeReport>) -> String {
    let peaks = report.map(|r| r.peak_positions.clone()).unwrap_or_default();
    render_svg(
        title,
        &[
            PlotSeries::line("closed form", ANALYTIC_COLOR, overlay),
            PlotSeries::markers("Monte Carlo ± stderr", MC_COLOR, mc),
        ],
        &peaks,
    )
}

fn cmd_montecarlo(session: &Session, args: &ScanArgs, realizations: Option<usize>) -> Result<(), CliError> {
    let (mut run, mode) = scan_setup(session, args)?;
    if let Some(n) = realizations {
        run.experiment.realizations = n;
    }
    let curve = monte_carlo_curve(&run, mode)?;
    let out_dir = &session.cli.out_dir;
    let csv_path = resolve(out_dir, &args.csv);
    write_file(&csv_path, &montecarlo_csv(&curve))?;
    let mut artifacts = vec![csv_path.clone()];
    if let Some(svg) = &args.svg {
        let overlay = overlay_curve(&run.experiment, &run.scan, mode)?;
        let report = extract_fringes(&curve).ok();
        let svg_path = resolve(out_dir, svg);
        let title = plot_title("Monte Carlo", mode, run.experiment.polarization);
        write_file(&svg_path, &mc_svg(&title, &curve, &overlay, report.as_ref()))?;
        artifacts.push(svg_path);
    }
    session.finish(&manifest_path_for(&csv_path), &run, artifacts)
}

fn cmd_verify(
    session: &Session,
    config: Option<&Path>,
    amplitude: Option<AmplitudeArg>,
    emitters: Option<usize>,
) -> Result<(), CliError> {
    let mut run = session.config(config)?;
    let options = VerifyOptions {
        amplitude_model: amplitude.map_or(run.amplitude_model, AmplitudeModel::from),
        emitters,
        seed: run.experiment.seed,
        ..VerifyOptions::default()
    };
    if let Some(m) = emitters {
        if m == 0 {
            return Err(CliError::Invalid("`emitters` must be at least 1".into()));
        }
        if m >= 2 {
            run.experiment.emitters_per_spot = m;
        }
    }
    run.amplitude_model = options.amplitude_model;
    let results = run_verification(&run.experiment, &options)?;
    let mut table = String::new();
    for r in &results {
        writeln!(table, "{r}").unwrap();
    }
    let all_pass = results.iter().all(|r| r.passed);
    writeln!(
        table,
        "{}",
        if all_pass {
            "ALL CHECKS PASSED"
        } else {
            "VERIFICATION FAILED"
        }
    )
    .unwrap();
    print!("{table}");

    let out_dir = &session.cli.out_dir;
    let report = out_dir.join("verify.txt");
    write_file(&report, &table)?;
    session.finish(&out_dir.join("verify.manifest"), &run, vec![report])?;
    if all_pass {
        Ok(())
    } else {
        Err(CliError::VerificationFailed)
    }
}

struct Figure {
    name: &'static str,
    mode: ScanMode,
    polarization: Polarization,
}

const FIGURES: [Figure; 4] = [
    Figure {
        name: "fig3a",
        mode: ScanMode::FixedD2,
        polarization: Polarization::Parallel,
    },
    Figure {
        name: "fig3b",
        mode: ScanMode::Opposite,
        polarization: Polarization::Parallel,
    },
    Figure {
        name: "fig4a",
        mode: ScanMode::FixedD2,
        polarization: Polarization::Orthogonal,
    },
    Figure {
        name: "fig4b",
        mode: ScanMode::Opposite,
        polarization: Polarization::Orthogonal,
    },
];

fn summary_line(name: &str, fig: &Figure, predicted: Option<f64>, report: &Result<FringeReport, ScanError>) -> String {
    let head = format!("{name} {} {}:", fig.mode, fig.polarization);
    match report {
        Ok(r) => match (r.fringe_spacing, r.spacing_stderr) {
            (Some(s), Some(e)) => format!(
                "{head} fringe spacing {:.3} mm ± {:.3} mm (predicted {}), {} peaks, visibility {:.3}, rms vs closed form {:.4}",
                s * 1e3,
                e * 1e3,
                predicted.map_or("none".to_string(), |p| format!("{:.3} mm", p * 1e3)),
                r.peak_positions.len(),
                r.visibility,
                r.model_residual_rms
            ),
            _ => format!(
                "{head} NoFringesDetected, central g2 {:.3}, rms vs closed form {:.4}",
                r.center_peak_value, r.model_residual_rms
            ),
        },
        Err(e) => format!("{head} extraction failed: {e}"),
    }
}

fn cmd_reproduce_figures(
    session: &Session,
    config: Option<&Path>,
    realizations: Option<usize>,
) -> Result<(), CliError> {
    let mut run = session.config(config)?;
    if let Some(n) = realizations {
        run.experiment.realizations = n;
    }
    let out_dir = &session.cli.out_dir;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut summary = String::new();
    let mut artifacts = Vec::new();
    for fig in &FIGURES {
        let mut fig_run = run.clone();
        fig_run.experiment.polarization = fig.polarization;
        fig_run.scan.mode = Some(fig.mode);
        let curve = monte_carlo_curve(&fig_run, fig.mode)?;
        let overlay = overlay_curve(&fig_run.experiment, &fig_run.scan, fig.mode)?;
        let report = extract_fringes(&curve);

        let csv_path = out_dir.join(format!("{}.csv", fig.name));
        let svg_path = out_dir.join(format!("{}.svg", fig.name));
        write_file(&csv_path, &figure_csv(&curve))?;
        let title = format!(
            "{}: {}",
            fig.name,
            plot_title("Monte Carlo", fig.mode, fig.polarization)
        );
        write_file(&svg_path, &mc_svg(&title, &curve, &overlay, report.as_ref().ok()))?;
        artifacts.push(csv_path);
        artifacts.push(svg_path);
        writeln!(
            summary,
            "{}",
            summary_line(fig.name, fig, curve.predicted_spacing, &report)
        )
        .unwrap();
    }
    let summary_path = out_dir.join("summary.txt");
    write_file(&summary_path, &summary)?;
    print!("{summary}");
    artifacts.push(summary_path);
    session.finish(&out_dir.join("reproduce-figures.manifest"), &run, artifacts)
}

/// Execute a parsed command line.
pub fn execute(cli: &Cli, command_line: String) -> Result<(), CliError> {
    let session = Session {
        cli,
        started: Instant::now(),
        command_line,
    };
    let body = || match &cli.command {
        Command::Analytic(args) => cmd_analytic(&session, args),
        Command::Montecarlo { scan, realizations } => cmd_montecarlo(&session, scan, *realizations),
        Command::Verify {
            config,
            amplitude_model,
            emitters,
        } => cmd_verify(&session, config.as_deref(), *amplitude_model, *emitters),
        Command::ReproduceFigures { config, realizations } => {
            cmd_reproduce_figures(&session, config.as_deref(), *realizations)
        }
    };
    match cli.workers {
        Some(0) => Err(CliError::Invalid("`workers` must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Invalid(e.to_string()))?
            .install(body),
        None => body(),
    }
}

/// Parse `args`, run, and return the process exit code. Errors are reported
/// on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let command_line = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join(" ");
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli, command_line) {
        Ok(()) => 0,
        Err(e) => {
            if !matches!(e, CliError::VerificationFailed) {
                eprintln!("error: {e}");
            }
            e.exit_code()
        }
    }
}
