//! Command-line front end.
//!
//! Every subcommand builds a report, which is written as JSON (default) or
//! CSV to stdout or `--output`. Exit codes: 0 success, 1 usage or I/O error,
//! 2 numerical failure. Reports carry no timestamps unless `--timing` is
//! given, so identical invocations produce identical bytes.

use std::f64::consts::FRAC_PI_3;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::adiabatic::{
    band_gap, evolve_loop_unchecked, extract_geometric_phase, DEFAULT_SLOWNESS, DEFAULT_STEPS, MIN_STEPS,
};
use crate::analytic_oracle::{
    compare_table, expected_phases, quartet_energy_report, two_spin_transcription_report, ComparedPhase,
    QuartetEnergyReport, ReferenceSystem, TranscriptionReport,
};
use crate::berry_engine::{
    berry_phase_band, block_projection_labels, m_label, predicted_phase, track_bands, unwrap_toward, wz_holonomy,
    LoopSpectrum, DEFAULT_SAMPLES,
};
use crate::error::Error;
use crate::operators::eig_hermitian;
use crate::spin_algebra::HalfInt;
use crate::systems::{loop_samples, Preset, SystemModel, SystemSpec, MIN_LOOP_SAMPLES};

pub const CSV_HEADER: [&str; 10] = [
    "system",
    "theta",
    "n_samples",
    "band",
    "m_label",
    "energy",
    "berry_phase",
    "predicted_phase",
    "adiabatic_phase",
    "flags",
];

/// Field magnitude used by `tables` when `--b0` is absent.
pub const DEFAULT_TABLE_FIELD: f64 = 0.3;

#[derive(Parser, Debug)]
#[command(name = "spinberry", version, about = "Berry phases and holonomies of coupled angular momenta in a rotating field")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Wilson-loop phase of every nondegenerate band, compared with -m'Ω
    Berry(LoopArgs),
    /// Holonomy matrices and eigenphases of every block
    Holonomy(LoopArgs),
    /// Time-dependent Schrödinger cross-check for one band
    Evolve(EvolveArgs),
    /// Berry phases over a grid of cone angles
    Sweep(SweepArgs),
    /// Closed-form phase tables and transcription residuals next to computed values
    Tables(TablesArgs),
    /// Eigenvalues at one field direction
    Spectrum(SpectrumArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SystemKind {
    TwoSpin,
    Quadrupole,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SystemArgs {
    #[arg(long, value_enum)]
    pub system: Option<SystemKind>,
    /// hydrogen, positronium, muonium or spin-orbit: fills spins and signed g-factors
    #[arg(long)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub j1: Option<HalfInt>,
    #[arg(long)]
    pub j2: Option<HalfInt>,
    /// Spin-spin coupling (default 1)
    #[arg(long = "G", value_name = "G", allow_negative_numbers = true)]
    pub coupling: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub g1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub g2: Option<f64>,
    /// Field magnitude
    #[arg(long, allow_negative_numbers = true)]
    pub b0: Option<f64>,
    /// Quadrupole spin
    #[arg(long)]
    pub j: Option<HalfInt>,
    /// Quadrupole coupling (default 1)
    #[arg(long = "K", value_name = "K", allow_negative_numbers = true)]
    pub k: Option<f64>,
    /// JSON file with the system fields plus optional run parameters
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct OutputArgs {
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write the report here instead of stdout
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Add wall-clock timing to the report
    #[arg(long)]
    pub timing: bool,
}

#[derive(Args, Debug, Clone)]
pub struct LoopArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Cone half-angle (radians unless --degrees)
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    /// Read angles in degrees
    #[arg(long)]
    pub degrees: bool,
    /// Loop samples (default 2048)
    #[arg(long)]
    pub points: Option<usize>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct EvolveArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub degrees: bool,
    #[arg(long)]
    pub points: Option<usize>,
    /// Band index in ascending energy order (default 0)
    #[arg(long)]
    pub band: Option<usize>,
    /// Drive frequency (default gap/500)
    #[arg(long, allow_negative_numbers = true)]
    pub omega: Option<f64>,
    /// Time steps per period (default 40960)
    #[arg(long)]
    pub steps: Option<usize>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Comma-separated cone angles
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub thetas: Option<Vec<f64>>,
    /// First angle of an evenly spaced grid
    #[arg(long, allow_negative_numbers = true)]
    pub from: Option<f64>,
    /// Last angle of an evenly spaced grid
    #[arg(long, allow_negative_numbers = true)]
    pub to: Option<f64>,
    /// Number of grid angles (default 5)
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub degrees: bool,
    #[arg(long)]
    pub points: Option<usize>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct TablesArgs {
    /// Cone half-angle (default π/3)
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub degrees: bool,
    #[arg(long)]
    pub points: Option<usize>,
    /// Only this preset's table (default: all presets and the quadrupole)
    #[arg(long)]
    pub preset: Option<Preset>,
    /// Spin-spin coupling (default 1)
    #[arg(long = "G", value_name = "G", allow_negative_numbers = true)]
    pub coupling: Option<f64>,
    /// Field magnitude (default 0.3)
    #[arg(long, allow_negative_numbers = true)]
    pub b0: Option<f64>,
    /// Quadrupole coupling (default 1)
    #[arg(long = "K", value_name = "K", allow_negative_numbers = true)]
    pub k: Option<f64>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    /// Field azimuth (default 0)
    #[arg(long, allow_negative_numbers = true)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub degrees: bool,
    #[command(flatten)]
    pub out: OutputArgs,
}

/// `--config` document: a system spec plus optional run parameters, angles
/// in radians.
#[derive(Clone, Debug, Deserialize)]
pub struct ConfigFile {
    #[serde(flatten)]
    pub system: SystemSpec,
    pub theta: Option<f64>,
    pub phi: Option<f64>,
    pub points: Option<usize>,
    pub thetas: Option<Vec<f64>>,
    pub band: Option<usize>,
    pub omega: Option<f64>,
    pub steps: Option<usize>,
}

pub fn load_config(path: &Path) -> Result<ConfigFile, Error> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    DisputedPaperValue,
    Nonadiabatic,
    TrackingFailure,
}

impl Flag {
    fn as_str(self) -> &'static str {
        match self {
            Flag::DisputedPaperValue => "disputed_paper_value",
            Flag::Nonadiabatic => "nonadiabatic",
            Flag::TrackingFailure => "tracking_failure",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandRecord {
    pub band: usize,
    pub m_label: String,
    pub energy: f64,
    pub berry_phase_numeric: f64,
    pub predicted_phase: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adiabatic_phase: Option<f64>,
    pub flags: Vec<Flag>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub block: usize,
    pub dim: usize,
    pub energy: f64,
    pub m_labels: Vec<String>,
    pub eigenphases: Vec<f64>,
    /// Row-major `[re, im]` entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holonomy: Option<Vec<Vec<[f64; 2]>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PresetEcho {
    pub name: String,
    pub description: String,
    pub g1: f64,
    pub g2: f64,
}

impl From<Preset> for PresetEcho {
    fn from(p: Preset) -> Self {
        let (g1, g2) = p.g_factors();
        PresetEcho { name: p.name().to_string(), description: p.description().to_string(), g1, g2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRecord {
    pub phi: f64,
    pub energies: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionRecord {
    pub band: usize,
    pub omega: f64,
    pub gap: f64,
    pub n_steps: usize,
    pub period: f64,
    pub energy: f64,
    pub overlap_abs: f64,
    pub max_norm_drift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub system: String,
    pub spec: SystemSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<PresetEcho>,
    pub theta: f64,
    pub n_samples: usize,
    pub bands: Vec<BandRecord>,
    pub blocks: Vec<BlockRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evolution: Option<EvolutionRecord>,
    /// Set when the numerics failed at this point (sweeps only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl RunReport {
    fn empty(command: &str, spec: &SystemSpec, preset: Option<Preset>, theta: f64, n_samples: usize) -> Self {
        RunReport {
            command: command.to_string(),
            system: spec.label(),
            spec: spec.clone(),
            preset: preset.map(PresetEcho::from),
            theta,
            n_samples,
            bands: Vec::new(),
            blocks: Vec::new(),
            spectrum: None,
            evolution: None,
            error: None,
            timing: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<RunReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PhaseTableReport {
    pub system: ReferenceSystem,
    pub source: String,
    pub rows: Vec<ComparedPhase>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Sourced<T> {
    pub source: String,
    pub report: T,
}

#[derive(Clone, Debug, Serialize)]
pub struct TablesReport {
    pub theta: f64,
    pub n_samples: usize,
    pub tables: Vec<PhaseTableReport>,
    pub two_spin_transcriptions: Vec<Sourced<TranscriptionReport>>,
    pub quartet_energies: Vec<Sourced<QuartetEnergyReport>>,
    pub runs: Vec<RunReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

#[derive(Clone, Debug)]
pub enum Output {
    Run(RunReport),
    Sweep(SweepReport),
    Tables(TablesReport),
}

impl Output {
    pub fn runs(&self) -> Vec<&RunReport> {
        match self {
            Output::Run(r) => vec![r],
            Output::Sweep(s) => s.points.iter().collect(),
            Output::Tables(t) => t.runs.iter().collect(),
        }
    }

    fn to_value(&self) -> Value {
        let v = match self {
            Output::Run(r) => serde_json::to_value(r),
            Output::Sweep(s) => serde_json::to_value(s),
            Output::Tables(t) => serde_json::to_value(t),
        };
        v.expect("reports contain only string-keyed maps")
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Run(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

pub struct Outcome {
    pub output: Output,
    pub format: Format,
    pub path: Option<PathBuf>,
    /// Some point or band failed numerically; the report is still written.
    pub numerical_issue: bool,
}

/// Rounds to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x.is_finite() {
        format!("{x:.11e}").parse().unwrap_or(x)
    } else {
        x
    }
}

fn round_numbers(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round_sig).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_numbers),
        Value::Object(m) => m.values_mut().for_each(round_numbers),
        _ => {}
    }
}

fn fmt_num(x: f64) -> String {
    format!("{:?}", round_sig(x))
}

pub fn render(output: &Output, format: Format) -> String {
    match format {
        Format::Json => {
            let mut v = output.to_value();
            round_numbers(&mut v);
            let mut s = serde_json::to_string_pretty(&v).expect("JSON values always serialize");
            s.push('\n');
            s
        }
        Format::Csv => csv_text(&output.runs()),
    }
}

fn csv_text(runs: &[&RunReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let record = |w: &mut csv::Writer<Vec<u8>>, fields: [String; 10]| w.write_record(&fields).expect("in-memory write");
    record(&mut w, CSV_HEADER.map(String::from));
    for r in runs {
        if r.error.is_some() {
            record(
                &mut w,
                [
                    r.system.clone(),
                    fmt_num(r.theta),
                    r.n_samples.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    Flag::TrackingFailure.as_str().to_string(),
                ],
            );
        }
        for b in &r.bands {
            record(
                &mut w,
                [
                    r.system.clone(),
                    fmt_num(r.theta),
                    r.n_samples.to_string(),
                    b.band.to_string(),
                    b.m_label.clone(),
                    fmt_num(b.energy),
                    fmt_num(b.berry_phase_numeric),
                    fmt_num(b.predicted_phase),
                    b.adiabatic_phase.map(fmt_num).unwrap_or_default(),
                    b.flags.iter().map(|f| f.as_str()).collect::<Vec<_>>().join(";"),
                ],
            );
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV of UTF-8 fields")
}

/// Writes the rendered report to `path`, or stdout when `None`.
pub fn emit_report(output: &Output, format: Format, path: Option<&Path>) -> Result<(), Error> {
    let text = render(output, format);
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| Error::Io { path: p.to_path_buf(), source }),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|source| Error::Io { path: PathBuf::from("<stdout>"), source }),
    }
}

fn to_radians(x: f64, degrees: bool) -> f64 {
    if degrees {
        x.to_radians()
    } else {
        x
    }
}

fn check_theta(theta: f64, flag: &str) -> CliResult<f64> {
    if theta.is_finite() && (0.0..=std::f64::consts::PI).contains(&theta) {
        Ok(theta)
    } else {
        usage(format!("{flag} must lie in [0, π] radians, got {theta}"))
    }
}

fn cone_angle(flag: Option<f64>, degrees: bool, config: Option<f64>) -> CliResult<f64> {
    match flag.map(|t| to_radians(t, degrees)).or(config) {
        Some(t) => check_theta(t, "--theta"),
        None => usage("--theta is required"),
    }
}

fn sample_count(flag: Option<usize>, config: Option<usize>) -> CliResult<usize> {
    let n = flag.or(config).unwrap_or(DEFAULT_SAMPLES);
    if n < MIN_LOOP_SAMPLES {
        return usage(format!("--points must be at least {MIN_LOOP_SAMPLES}, got {n}"));
    }
    Ok(n)
}

fn reject_flags(flags: &[(&str, bool)], reason: &str) -> CliResult<()> {
    match flags.iter().find(|(_, set)| *set) {
        Some((name, _)) => usage(format!("{name} {reason}")),
        None => Ok(()),
    }
}

/// Builds the spec from flags layered over an optional config spec.
pub fn resolve_spec(a: &SystemArgs, base: Option<&SystemSpec>) -> CliResult<(SystemSpec, Option<Preset>)> {
    let kind = match (a.system, a.preset, base) {
        (Some(k), _, _) => k,
        (None, Some(_), _) => SystemKind::TwoSpin,
        (None, None, Some(s)) if s.is_quadrupole() => SystemKind::Quadrupole,
        (None, None, Some(_)) => SystemKind::TwoSpin,
        (None, None, None) => return usage("--system is required (two-spin or quadrupole) unless --preset or --config is given"),
    };
    let spec = match kind {
        SystemKind::TwoSpin => {
            reject_flags(&[("--j", a.j.is_some()), ("--K", a.k.is_some())], "applies only to --system quadrupole")?;
            if a.preset.is_some() {
                reject_flags(
                    &[("--j1", a.j1.is_some()), ("--j2", a.j2.is_some()), ("--g1", a.g1.is_some()), ("--g2", a.g2.is_some())],
                    "cannot be combined with --preset",
                )?;
            }
            let b = match base {
                Some(&SystemSpec::TwoMomenta { j1, j2, coupling, g1, g2, b0 }) => {
                    (Some(j1), Some(j2), Some(coupling), Some(g1), Some(g2), Some(b0))
                }
                _ => (None, None, None, None, None, None),
            };
            let spins = a.preset.map(Preset::spins);
            let gs = a.preset.map(Preset::g_factors);
            SystemSpec::TwoMomenta {
                j1: a.j1.or(spins.map(|s| s.0)).or(b.0).unwrap_or(HalfInt::HALF),
                j2: a.j2.or(spins.map(|s| s.1)).or(b.1).unwrap_or(HalfInt::HALF),
                coupling: a.coupling.or(b.2).unwrap_or(1.0),
                g1: match a.g1.or(gs.map(|g| g.0)).or(b.3) {
                    Some(g) => g,
                    None => return usage("--g1 is required for --system two-spin"),
                },
                g2: match a.g2.or(gs.map(|g| g.1)).or(b.4) {
                    Some(g) => g,
                    None => return usage("--g2 is required for --system two-spin"),
                },
                b0: match a.b0.or(b.5) {
                    Some(x) => x,
                    None => return usage("--b0 is required for --system two-spin"),
                },
            }
        }
        SystemKind::Quadrupole => {
            reject_flags(
                &[
                    ("--preset", a.preset.is_some()),
                    ("--j1", a.j1.is_some()),
                    ("--j2", a.j2.is_some()),
                    ("--G", a.coupling.is_some()),
                    ("--g1", a.g1.is_some()),
                    ("--g2", a.g2.is_some()),
                    ("--b0", a.b0.is_some()),
                ],
                "applies only to --system two-spin",
            )?;
            let (bj, bk) = match base {
                Some(&SystemSpec::Quadrupole { j, k }) => (Some(j), Some(k)),
                _ => (None, None),
            };
            SystemSpec::Quadrupole {
                j: match a.j.or(bj) {
                    Some(j) => j,
                    None => return usage("--j is required for --system quadrupole"),
                },
                k: a.k.or(bk).unwrap_or(1.0),
            }
        }
    };
    if let Err(e) = spec.validate() {
        return usage(e.to_string());
    }
    Ok((spec, a.preset))
}

fn system_and_config(a: &SystemArgs) -> CliResult<(SystemSpec, Option<Preset>, Option<ConfigFile>)> {
    let config = a.config.as_deref().map(load_config).transpose()?;
    let (spec, preset) = resolve_spec(a, config.as_ref().map(|c| &c.system))?;
    Ok((spec, preset, config))
}

fn is_spin_one_quadrupole(spec: &SystemSpec) -> bool {
    matches!(spec, SystemSpec::Quadrupole { j, .. } if *j == HalfInt::ONE)
}

fn band_record(ls: &LoopSpectrum, band: usize) -> crate::Result<BandRecord> {
    let m = m_label(ls, band)?;
    let mut flags = Vec::new();
    // the printed table gives π(1-cosθ) for the m' = 0 quadrupole state
    if is_spin_one_quadrupole(&ls.spec) && m == HalfInt::ZERO {
        flags.push(Flag::DisputedPaperValue);
    }
    Ok(BandRecord {
        band,
        m_label: m.to_string(),
        energy: ls.block_energy(band),
        berry_phase_numeric: berry_phase_band(ls, band)?,
        predicted_phase: predicted_phase(m, ls.theta()) + 0.0,
        adiabatic_phase: None,
        flags,
    })
}

/// Tracks the loop and fills band records and, for degenerate blocks (or all
/// blocks with `matrices`), holonomy eigenphases.
pub fn analyze(
    command: &str,
    spec: &SystemSpec,
    preset: Option<Preset>,
    theta: f64,
    n_samples: usize,
    matrices: bool,
) -> crate::Result<RunReport> {
    let ls = track_bands(spec, &loop_samples(theta, n_samples)?)?;
    let mut report = RunReport::empty(command, spec, preset, theta, n_samples);
    for b in ls.bands() {
        report.bands.push(band_record(&ls, b)?);
    }
    for (b, block) in ls.blocks.iter().enumerate() {
        if block.dim == 1 && !matrices {
            continue;
        }
        let hol = wz_holonomy(&ls, b)?;
        let m = hol.matrix.matrix();
        report.blocks.push(BlockRecord {
            block: b,
            dim: block.dim,
            energy: ls.block_energy(b),
            m_labels: block_projection_labels(&ls, b)?.iter().map(ToString::to_string).collect(),
            eigenphases: hol.eigenphases,
            holonomy: matrices.then(|| (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect()).collect()),
        });
    }
    Ok(report)
}

/// Runs the TDSE for `band` and stores its phase on the Wilson-loop branch.
/// Returns false when the state left the band.
fn attach_evolution(
    report: &mut RunReport,
    band: usize,
    omega: Option<f64>,
    steps: Option<usize>,
) -> CliResult<bool> {
    let record_index = match report.bands.iter().position(|r| r.band == band) {
        Some(i) => i,
        None if band < report.bands.len() + report.blocks.iter().map(|b| b.dim).sum::<usize>() => {
            return usage(format!("--band {band} belongs to a degenerate block"))
        }
        None => return usage(format!("--band {band} does not exist")),
    };
    let gap = band_gap(&report.spec, report.theta, band)?;
    let omega = omega.unwrap_or(gap / DEFAULT_SLOWNESS);
    if !(omega.is_finite() && omega > 0.0) {
        return usage(format!("--omega must be positive, got {omega}"));
    }
    let steps = steps.unwrap_or(DEFAULT_STEPS);
    if steps < MIN_STEPS {
        return usage(format!("--steps must be at least {MIN_STEPS}, got {steps}"));
    }
    let run = evolve_loop_unchecked(&report.spec, report.theta, omega, steps, band)?;
    let record = &mut report.bands[record_index];
    record.adiabatic_phase = Some(unwrap_toward(extract_geometric_phase(&run), record.berry_phase_numeric));
    let adiabatic = run.is_adiabatic();
    if !adiabatic {
        record.flags.push(Flag::Nonadiabatic);
    }
    report.evolution = Some(EvolutionRecord {
        band,
        omega,
        gap,
        n_steps: steps,
        period: run.period(),
        energy: run.energy,
        overlap_abs: run.overlap.norm(),
        max_norm_drift: run.max_norm_drift,
    });
    Ok(adiabatic)
}

fn elapsed(start: Instant, enabled: bool) -> Option<Timing> {
    enabled.then(|| Timing { elapsed_seconds: start.elapsed().as_secs_f64() })
}

fn outcome(output: Output, out: &OutputArgs, default: Format, numerical_issue: bool) -> Outcome {
    Outcome { output, format: out.format.unwrap_or(default), path: out.output.clone(), numerical_issue }
}

pub fn execute(command: &Command) -> CliResult<Outcome> {
    let start = Instant::now();
    match command {
        Command::Berry(a) | Command::Holonomy(a) => {
            let holonomy = matches!(command, Command::Holonomy(_));
            let (spec, preset, cfg) = system_and_config(&a.system)?;
            let theta = cone_angle(a.theta, a.degrees, cfg.as_ref().and_then(|c| c.theta))?;
            let n = sample_count(a.points, cfg.as_ref().and_then(|c| c.points))?;
            let name = if holonomy { "holonomy" } else { "berry" };
            let mut report = analyze(name, &spec, preset, theta, n, holonomy)?;
            report.timing = elapsed(start, a.out.timing);
            Ok(outcome(Output::Run(report), &a.out, Format::Json, false))
        }
        Command::Evolve(a) => {
            let (spec, preset, cfg) = system_and_config(&a.system)?;
            let cfg = cfg.as_ref();
            let theta = cone_angle(a.theta, a.degrees, cfg.and_then(|c| c.theta))?;
            let n = sample_count(a.points, cfg.and_then(|c| c.points))?;
            let band = a.band.or(cfg.and_then(|c| c.band)).unwrap_or(0);
            let mut report = analyze("evolve", &spec, preset, theta, n, false)?;
            let adiabatic = attach_evolution(
                &mut report,
                band,
                a.omega.or(cfg.and_then(|c| c.omega)),
                a.steps.or(cfg.and_then(|c| c.steps)),
            )?;
            report.timing = elapsed(start, a.out.timing);
            Ok(outcome(Output::Run(report), &a.out, Format::Json, !adiabatic))
        }
        Command::Sweep(a) => {
            let (spec, preset, cfg) = system_and_config(&a.system)?;
            let n = sample_count(a.points, cfg.as_ref().and_then(|c| c.points))?;
            let thetas: Vec<f64> = match (&a.thetas, a.from, a.to) {
                (Some(t), _, _) => t.iter().map(|&x| to_radians(x, a.degrees)).collect(),
                (None, Some(from), Some(to)) => {
                    let (from, to) = (to_radians(from, a.degrees), to_radians(to, a.degrees));
                    match a.count.unwrap_or(5) {
                        0 => return usage("--count must be positive"),
                        1 => vec![from],
                        c => (0..c).map(|i| from + (to - from) * i as f64 / (c - 1) as f64).collect(),
                    }
                }
                (None, Some(_), None) => return usage("--from needs --to"),
                (None, None, Some(_)) => return usage("--to needs --from"),
                (None, None, None) => match cfg.as_ref().and_then(|c| c.thetas.clone()) {
                    Some(t) => t,
                    None => return usage("--thetas or --from/--to is required"),
                },
            };
            for &t in &thetas {
                check_theta(t, "--thetas")?;
            }
            let results: Vec<crate::Result<RunReport>> =
                thetas.par_iter().map(|&t| analyze("sweep", &spec, preset, t, n, false)).collect();
            let mut points = Vec::with_capacity(results.len());
            let mut failed = false;
            for (r, &t) in results.into_iter().zip(&thetas) {
                match r {
                    Ok(report) => points.push(report),
                    Err(e) if e.is_numerical() => {
                        failed = true;
                        let mut report = RunReport::empty("sweep", &spec, preset, t, n);
                        report.error = Some(e.to_string());
                        points.push(report);
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            let sweep = SweepReport { points, timing: elapsed(start, a.out.timing) };
            Ok(outcome(Output::Sweep(sweep), &a.out, Format::Csv, failed))
        }
        Command::Tables(a) => {
            let theta = match a.theta {
                Some(t) => check_theta(to_radians(t, a.degrees), "--theta")?,
                None => FRAC_PI_3,
            };
            let n = sample_count(a.points, None)?;
            let (report, issue) = tables(theta, n, a)?;
            let report = TablesReport { timing: elapsed(start, a.out.timing), ..report };
            Ok(outcome(Output::Tables(report), &a.out, Format::Json, issue))
        }
        Command::Spectrum(a) => {
            let (spec, preset, cfg) = system_and_config(&a.system)?;
            let cfg = cfg.as_ref();
            let theta = cone_angle(a.theta, a.degrees, cfg.and_then(|c| c.theta))?;
            let phi = a.phi.map(|p| to_radians(p, a.degrees)).or(cfg.and_then(|c| c.phi)).unwrap_or(0.0);
            if !phi.is_finite() {
                return usage(format!("--phi must be finite, got {phi}"));
            }
            let h = SystemModel::new(&spec)?.hamiltonian(theta, phi);
            let mut report = RunReport::empty("spectrum", &spec, preset, theta, 1);
            report.spectrum = Some(SpectrumRecord { phi, energies: eig_hermitian(&h)?.values });
            report.timing = elapsed(start, a.out.timing);
            Ok(outcome(Output::Run(report), &a.out, Format::Json, false))
        }
    }
}

fn tables(theta: f64, n: usize, a: &TablesArgs) -> CliResult<(TablesReport, bool)> {
    let coupling = a.coupling.unwrap_or(1.0);
    let b0 = a.b0.unwrap_or(DEFAULT_TABLE_FIELD);
    let k = a.k.unwrap_or(1.0);
    let presets = a.preset.map_or(Preset::ALL.to_vec(), |p| vec![p]);
    let mut report = TablesReport {
        theta,
        n_samples: n,
        tables: Vec::new(),
        two_spin_transcriptions: Vec::new(),
        quartet_energies: Vec::new(),
        runs: Vec::new(),
        timing: None,
    };
    let mut issue = false;

    let mut sources: Vec<(String, SystemSpec, Option<Preset>)> =
        presets.iter().map(|&p| (p.name().to_string(), p.spec(coupling, b0), Some(p))).collect();
    if a.preset.is_none() {
        sources.push(("quadrupole".to_string(), SystemSpec::Quadrupole { j: HalfInt::ONE, k }, None));
    }
    for (source, spec, preset) in sources {
        if let Err(e) = spec.validate() {
            return usage(e.to_string());
        }
        let system = ReferenceSystem::from_spec(&spec)?;
        let mut run = analyze("tables", &spec, preset, theta, n, false)?;
        if system == ReferenceSystem::QuadrupoleSpinOne {
            if let Some(band) = run.bands.iter().find(|b| b.m_label == "0").map(|b| b.band) {
                issue |= !attach_evolution(&mut run, band, None, None)?;
            }
        }
        let band_phases: Vec<f64> = run.bands.iter().map(|b| b.berry_phase_numeric).collect();
        let eigenphases: Vec<f64> = run.blocks.iter().flat_map(|b| b.eigenphases.iter().copied()).collect();
        let rows = compare_table(&expected_phases(system, theta), &band_phases, &eigenphases);
        report.tables.push(PhaseTableReport { system, source: source.clone(), rows });
        match system {
            ReferenceSystem::TwoSpinHalf => report.two_spin_transcriptions.push(Sourced {
                source: source.clone(),
                report: two_spin_transcription_report(&spec, theta, 0.0)?,
            }),
            ReferenceSystem::SpinOneSpinHalf => report
                .quartet_energies
                .push(Sourced { source: source.clone(), report: quartet_energy_report(&spec, theta)? }),
            ReferenceSystem::QuadrupoleSpinOne => {}
        }
        report.runs.push(run);
    }
    Ok((report, issue))
}

/// Parses `argv` (including the program name), runs the command and writes
/// the report. Returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let outcome = match execute(&cli.command) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    if let Err(e) = emit_report(&outcome.output, outcome.format, outcome.path.as_deref()) {
        eprintln!("error: {e}");
        return 1;
    }
    if outcome.numerical_issue {
        eprintln!("error: numerical failure at one or more points (see flags in the report)");
        return 2;
    }
    0
}
