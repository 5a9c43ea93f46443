//! `sg-sim` command line: reports, figure data, sweeps, Table 1, Monte Carlo
//! and the PDE check.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{check_decoupling, ConfigValues, DecouplingReport, ParamName, Preset, SGConfig, SpinAmplitudes};
use crate::error::Error;
use crate::idealness::{
    classify, default_times, error_curve, error_integral, idealness_report, inner_product, log_times, saturated_error,
    IdealnessReport, Regime, Thresholds,
};
use crate::montecarlo::{empirical_es, sample_screen, write_samples_csv, McRecord};
use crate::pde_oracle::{
    compare, convergence_study, split_step_evolve, write_density_csv, ComparisonReport, ConvergenceStudy, GridSpec,
    DEFAULT_STEPS,
};
use crate::probabilities::{analyzer_placement, probability_table, ProbabilityTable};
use crate::wavepacket::{SpinLabel, ZProfiles};

pub const THREADS_ENV: &str = "SG_SIM_THREADS";
/// E_s printed under Table 1.
pub const TABLE1_E_S: f64 = 0.2478;
pub const PROFILE_TIMES: [f64; 2] = [1e-5, 0.1];
pub const PROFILE_POINTS: usize = 4001;
pub const PROFILE_HALF_WIDTHS: f64 = 10.0;
/// Acceptance limits for `validate`.
pub const MIN_FIDELITY: f64 = 0.9999;
pub const MAX_NORM_DRIFT: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(name = "sg-sim", version, about = "Stern-Gerlach wave-packet idealness calculator")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Flat key=value parameter file; flags override its entries.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub preset: Option<Preset>,
    /// Field gradient, gauss/cm.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub b: Option<f64>,
    /// Interaction time, s.
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    /// Initial packet width, cm.
    #[arg(long, global = true)]
    pub sigma0: Option<f64>,
    /// Longitudinal speed, cm/s.
    #[arg(long, global = true)]
    pub vy: Option<f64>,
    /// Uniform field, gauss.
    #[arg(long = "B0", global = true)]
    pub b0: Option<f64>,
    /// Real spin-up amplitude.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Real spin-down amplitude.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, global = true, default_value_t = 1_000_000)]
    pub samples: u64,
    /// Directory for output files; stdout when absent.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inner product, error integral, saturation and probabilities for one configuration.
    Report(ThresholdArgs),
    /// Data behind figures 2 to 7.
    Figures {
        #[arg(value_parser = clap::value_parser!(u8).range(2..=7))]
        id: u8,
    },
    /// Grid of configurations over one or two parameters.
    Sweep {
        /// `name:start:end:steps[:lin|log]`, outer loop.
        #[arg(long)]
        axis1: String,
        /// Inner loop, same syntax.
        #[arg(long)]
        axis2: Option<String>,
        #[command(flatten)]
        thresholds: ThresholdArgs,
    },
    /// The four rows of Table 1.
    Table1 {
        /// Use this E_s instead of the printed one.
        #[arg(long = "es", conflicts_with = "computed")]
        e_s: Option<f64>,
        /// Compute E_s from the configuration (Set 3 when none is given).
        #[arg(long)]
        computed: bool,
    },
    /// Sample screen hits and compare the misclassified fraction with E(t).
    Mc {
        /// Free-flight time to the screen, s.
        #[arg(long, default_value_t = 0.1)]
        t_screen: f64,
        /// Also write up to 1e5 samples as `label,z_cm`.
        #[arg(long, value_name = "PATH")]
        samples_csv: Option<PathBuf>,
    },
    /// Split-step integration of the z equation against the closed form.
    Validate {
        /// Grid half-width in units of sigma0; sized automatically when absent.
        #[arg(long)]
        half_width: Option<f64>,
        /// Grid points (power of two).
        #[arg(long, requires = "half_width")]
        points: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        steps: usize,
        /// Also rerun at dt/2 and report the error ratio.
        #[arg(long)]
        convergence: bool,
    },
}

#[derive(Debug, Args, Clone, Copy)]
pub struct ThresholdArgs {
    #[arg(long)]
    pub eps_i: Option<f64>,
    #[arg(long)]
    pub eps_e: Option<f64>,
    #[arg(long)]
    pub saturation_tol: Option<f64>,
}

impl ThresholdArgs {
    fn resolve(&self) -> Result<Thresholds, CliError> {
        let mut t = Thresholds::default();
        if let Some(v) = self.eps_i {
            t.eps_i = v;
        }
        if let Some(v) = self.eps_e {
            t.eps_e = v;
        }
        if let Some(v) = self.saturation_tol {
            t.saturation_tol = v;
        }
        t.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(t)
    }
}

/// Exit code 2 for usage and configuration problems, 1 for everything else.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Full-precision CSV number (17 significant digits).
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    text
}

struct Output<'a> {
    dir: Option<&'a Path>,
}

impl Output<'_> {
    /// Writes `content` to `dir/name`, or to stdout without a directory.
    fn emit(&self, name: &str, content: &str) -> Result<(), CliError> {
        match self.dir {
            Some(dir) => write_file(&dir.join(name), content),
            None => {
                print!("{content}");
                Ok(())
            }
        }
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    fs::write(path, content).map_err(|e| io_error(path, e))
}

impl CommonArgs {
    fn values(&self) -> Result<ConfigValues, CliError> {
        let file = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
                ConfigValues::parse(&text)?
            }
            None => ConfigValues::default(),
        };
        let flags = ConfigValues {
            b: self.b,
            b0: self.b0,
            tau: self.tau,
            sigma0: self.sigma0,
            v_y: self.vy,
            alpha_re: self.alpha,
            beta_re: self.beta,
            ..ConfigValues::default()
        };
        Ok(file.overlay(&flags))
    }

    /// With nothing configured, falls back to `fallback` if given.
    fn resolve(&self, fallback: Option<Preset>) -> Result<(SGConfig, SpinAmplitudes), CliError> {
        let values = self.values()?;
        let preset = self.preset.or(if values == ConfigValues::default() { fallback } else { None });
        Ok(values.resolve(preset)?)
    }

    fn output(&self) -> Output<'_> {
        Output { dir: self.out.as_deref() }
    }
}

/// Parses the arguments, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let pool = thread_pool()?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let common = &cli.common;
    match &cli.command {
        Command::Report(thresholds) => cmd_report(common, thresholds),
        Command::Figures { id } => cmd_figures(common, *id),
        Command::Sweep {
            axis1,
            axis2,
            thresholds,
        } => cmd_sweep(common, axis1, axis2.as_deref(), thresholds),
        Command::Table1 { e_s, computed } => cmd_table1(common, *e_s, *computed),
        Command::Mc { t_screen, samples_csv } => cmd_mc(common, *t_screen, samples_csv.as_deref()),
        Command::Validate {
            half_width,
            points,
            steps,
            convergence,
        } => cmd_validate(common, *half_width, *points, *steps, *convergence),
    }
}

#[derive(Debug, Serialize)]
pub struct FullReport {
    pub config: SGConfig,
    pub spin: SpinAmplitudes,
    pub decoupling: DecouplingReport,
    #[serde(flatten)]
    pub idealness: IdealnessReport,
    /// `v_y t_s`, cm.
    #[serde(rename = "Y_s")]
    pub y_s: f64,
    pub probabilities: ProbabilityTable,
    pub warnings: Vec<String>,
}

fn decoupling_warnings(cfg: &SGConfig) -> (DecouplingReport, Vec<String>) {
    let report = check_decoupling(cfg);
    let mut warnings = Vec::new();
    if !report.valid {
        warnings.push(format!(
            "decoupling condition fails: B0/(b sigma0) = {:.3e} is not above {}",
            report.ratio, report.threshold
        ));
    }
    (report, warnings)
}

fn cmd_report(common: &CommonArgs, thresholds: &ThresholdArgs) -> Result<(), CliError> {
    let thresholds = thresholds.resolve()?;
    let (cfg, spin) = common.resolve(None)?;
    let (decoupling, warnings) = decoupling_warnings(&cfg);
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let idealness = idealness_report(&cfg, &thresholds, &default_times())?;
    let out = common.output();
    match common.format.unwrap_or(Format::Json) {
        Format::Json => {
            let report = FullReport {
                config: cfg,
                spin,
                decoupling,
                y_s: analyzer_placement(&cfg, idealness.t_s)?,
                probabilities: probability_table(&spin, idealness.e_s)?,
                idealness,
                warnings,
            };
            out.emit("report.json", &to_json(&report))
        }
        Format::Csv => {
            let mut csv = String::from("t_sec,E\n");
            for p in &idealness.curve {
                let _ = writeln!(csv, "{},{}", num(p.t), num(p.e));
            }
            out.emit("report.csv", &csv)
        }
    }
}

/// Parameters of one figure: `(b values, tau, sigma0)`.
pub fn figure_parameters(id: u8) -> Option<(Vec<f64>, f64, f64)> {
    match id {
        2 => Some((vec![5e4, 5.5e4, 6e4], 5e-4, 1e-5)),
        3 => Some((vec![1e3, 2e3, 3e3], 1e-4, 1e-4)),
        4 => Some((vec![2e4, 3e4, 4e4], 1e-4, 1e-5)),
        5..=7 => {
            let preset = [Preset::Set1, Preset::Set2, Preset::Set3][(id - 5) as usize];
            let (b, tau, sigma0) = preset.parameters();
            Some((vec![b], tau, sigma0))
        }
        _ => None,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveSummary {
    pub b: f64,
    #[serde(rename = "E_s")]
    pub e_s: f64,
    #[serde(rename = "log_abs_I")]
    pub log_abs_i: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileSummary {
    pub file: String,
    pub t: f64,
    pub overlap: f64,
    pub norm_plus: f64,
    pub norm_minus: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FigureSummary {
    pub figure: u8,
    pub tau: f64,
    pub sigma0: f64,
    pub files: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub curves: Vec<CurveSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub profiles: Vec<ProfileSummary>,
}

/// Writes the figure's CSV files into `dir` and returns the summary.
pub fn write_figure(id: u8, dir: &Path) -> Result<FigureSummary, CliError> {
    let (bs, tau, sigma0) =
        figure_parameters(id).ok_or_else(|| CliError::Usage(format!("unknown figure {id}; expected 2 to 7")))?;
    let thresholds = Thresholds::default();
    let mut summary = FigureSummary {
        figure: id,
        tau,
        sigma0,
        files: Vec::new(),
        curves: Vec::new(),
        profiles: Vec::new(),
    };
    if id <= 4 {
        let times = default_times();
        let mut csv = String::from("b,t_sec,E\n");
        for &b in &bs {
            let cfg = SGConfig::new(b, tau, sigma0)?;
            for p in error_curve(&cfg, &times)? {
                let _ = writeln!(csv, "{},{},{}", num(b), num(p.t), num(p.e));
            }
            summary.curves.push(CurveSummary {
                b,
                e_s: saturated_error(&cfg),
                log_abs_i: inner_product(&cfg).log_abs_i,
                regime: classify(&cfg, &thresholds),
            });
        }
        let name = format!("fig{id}.csv");
        write_file(&dir.join(&name), &csv)?;
        summary.files.push(name);
    } else {
        let cfg = SGConfig::new(bs[0], tau, sigma0)?;
        for (t, suffix) in PROFILE_TIMES.iter().zip(["a", "b"]) {
            let profiles = ZProfiles::uniform(&cfg, *t, PROFILE_POINTS, PROFILE_HALF_WIDTHS)?;
            let mut csv = String::from("z_cm,rho_plus,rho_minus\n");
            for i in 0..profiles.z.len() {
                let _ = writeln!(
                    csv,
                    "{},{},{}",
                    num(profiles.z[i]),
                    num(profiles.plus[i]),
                    num(profiles.minus[i])
                );
            }
            let name = format!("fig{id}{suffix}.csv");
            write_file(&dir.join(&name), &csv)?;
            let (norm_plus, norm_minus) = profiles.norms();
            summary.profiles.push(ProfileSummary {
                file: name.clone(),
                t: *t,
                overlap: profiles.overlap(),
                norm_plus,
                norm_minus,
            });
            summary.files.push(name);
        }
    }
    Ok(summary)
}

fn cmd_figures(common: &CommonArgs, id: u8) -> Result<(), CliError> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let summary = write_figure(id, &dir)?;
    print!("{}", to_json(&summary));
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub param: ParamName,
    pub start: f64,
    pub end: f64,
    pub steps: usize,
    pub spacing: Spacing,
}

impl FromStr for SweepAxis {
    type Err = String;

    /// `name:start:end:steps[:lin|log]`, linear by default.
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if !(4..=5).contains(&parts.len()) {
            return Err(format!("axis `{s}`: expected name:start:end:steps[:lin|log]"));
        }
        let param: ParamName = parts[0].parse().map_err(|e: Error| format!("axis `{s}`: {e}"))?;
        let number = |i: usize| {
            parts[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("axis `{s}`: `{}` is not a finite number", parts[i]))
        };
        let (start, end) = (number(1)?, number(2)?);
        let steps: usize = parts[3]
            .parse()
            .map_err(|_| format!("axis `{s}`: `{}` is not a step count", parts[3]))?;
        if steps < 2 {
            return Err(format!("axis `{s}`: need at least 2 steps"));
        }
        let spacing = match parts.get(4).copied().unwrap_or("lin") {
            "lin" | "linear" => Spacing::Linear,
            "log" => Spacing::Log,
            other => return Err(format!("axis `{s}`: unknown spacing `{other}`")),
        };
        if spacing == Spacing::Log && !(start > 0.0 && end > 0.0) {
            return Err(format!("axis `{s}`: log spacing needs a positive range"));
        }
        Ok(Self {
            param,
            start,
            end,
            steps,
            spacing,
        })
    }
}

impl SweepAxis {
    pub fn values(&self) -> Vec<f64> {
        match self.spacing {
            Spacing::Log => log_times(self.start, self.end, self.steps),
            Spacing::Linear => {
                let step = (self.end - self.start) / (self.steps - 1) as f64;
                (0..self.steps).map(|i| self.start + step * i as f64).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub params: Vec<(String, f64)>,
    #[serde(rename = "log_abs_I")]
    pub log_abs_i: f64,
    #[serde(rename = "E_s")]
    pub e_s: f64,
    pub regime: Regime,
}

/// Evaluates the grid, `axis1` outer and `axis2` inner.
pub fn sweep(base: &SGConfig, axes: &[SweepAxis], thresholds: &Thresholds) -> Result<Vec<SweepRow>, CliError> {
    let mut points: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|prefix| {
                axis.values().into_iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    points
        .par_iter()
        .map(|values| {
            let mut cfg = *base;
            for (axis, &v) in axes.iter().zip(values) {
                cfg.set_param(axis.param, v);
            }
            cfg.validate()
                .map_err(|e| CliError::Usage(format!("sweep point {values:?}: {e}")))?;
            Ok(SweepRow {
                params: axes.iter().zip(values).map(|(a, &v)| (a.param.to_string(), v)).collect(),
                log_abs_i: inner_product(&cfg).log_abs_i,
                e_s: saturated_error(&cfg),
                regime: classify(&cfg, thresholds),
            })
        })
        .collect()
}

fn cmd_sweep(
    common: &CommonArgs,
    axis1: &str,
    axis2: Option<&str>,
    thresholds: &ThresholdArgs,
) -> Result<(), CliError> {
    let thresholds = thresholds.resolve()?;
    let mut axes = vec![axis1.parse::<SweepAxis>().map_err(CliError::Usage)?];
    if let Some(a) = axis2 {
        let axis: SweepAxis = a.parse().map_err(CliError::Usage)?;
        if axis.param == axes[0].param {
            return Err(CliError::Usage(format!("both axes sweep {}", axis.param)));
        }
        axes.push(axis);
    }
    // Swept parameters need no fixed value.
    let mut values = common.values()?;
    for axis in &axes {
        let slot = match axis.param {
            ParamName::B => &mut values.b,
            ParamName::B0 => &mut values.b0,
            ParamName::Tau => &mut values.tau,
            ParamName::Sigma0 => &mut values.sigma0,
            ParamName::Vy => &mut values.v_y,
        };
        slot.get_or_insert(axis.start);
    }
    let (base, _) = values.resolve(common.preset)?;
    let rows = sweep(&base, &axes, &thresholds)?;
    let out = common.output();
    match common.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut csv = String::new();
            for axis in &axes {
                let _ = write!(csv, "{},", axis.param);
            }
            csv.push_str("log_abs_I,E_s,regime\n");
            for row in &rows {
                for (_, v) in &row.params {
                    let _ = write!(csv, "{},", num(*v));
                }
                let _ = writeln!(csv, "{},{},{}", num(row.log_abs_i), num(row.e_s), row.regime.as_str());
            }
            out.emit("sweep.csv", &csv)
        }
        Format::Json => {
            let json: Vec<serde_json::Value> = rows
                .iter()
                .map(|row| {
                    let mut obj = serde_json::Map::new();
                    for (k, v) in &row.params {
                        obj.insert(k.clone(), serde_json::json!(v));
                    }
                    obj.insert("log_abs_I".into(), serde_json::json!(row.log_abs_i));
                    obj.insert("E_s".into(), serde_json::json!(row.e_s));
                    obj.insert("regime".into(), serde_json::json!(row.regime));
                    serde_json::Value::Object(obj)
                })
                .collect();
            out.emit("sweep.json", &to_json(&json))
        }
    }
}

/// `(alpha, beta)` of the four rows.
pub fn table1_amplitudes() -> [(f64, f64); 4] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    [
        (h, h),
        (0.8, 0.6),
        (3f64.sqrt() / 2.0, 0.5),
        (0.9f64.sqrt(), 0.1f64.sqrt()),
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct Table1Row {
    pub alpha: f64,
    pub beta: f64,
    #[serde(flatten)]
    pub probabilities: ProbabilityTable,
}

pub fn table1(e_s: f64) -> Result<Vec<Table1Row>, CliError> {
    table1_amplitudes()
        .into_iter()
        .map(|(alpha, beta)| {
            let spin = SpinAmplitudes::real(alpha, beta)?;
            Ok(Table1Row {
                alpha,
                beta,
                probabilities: probability_table(&spin, e_s)?,
            })
        })
        .collect()
}

fn cmd_table1(common: &CommonArgs, e_s: Option<f64>, computed: bool) -> Result<(), CliError> {
    let e_s = if computed {
        let (cfg, _) = common.resolve(Some(Preset::Set3))?;
        saturated_error(&cfg)
    } else {
        e_s.unwrap_or(TABLE1_E_S)
    };
    if !(0.0..=0.5).contains(&e_s) {
        return Err(CliError::Usage(format!("E_s must lie in [0, 0.5], got {e_s}")));
    }
    let rows = table1(e_s)?;
    let out = common.output();
    match common.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut csv = String::from("alpha,beta,P_up_ideal,P_down_ideal,P_up_ni,P_down_ni,P_plus_ni,P_minus_ni,E_s\n");
            for r in &rows {
                let p = &r.probabilities;
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{}",
                    num(r.alpha),
                    num(r.beta),
                    num(p.p_up_ideal),
                    num(p.p_down_ideal),
                    num(p.p_up_ni),
                    num(p.p_down_ni),
                    num(p.p_plus_ni),
                    num(p.p_minus_ni),
                    num(p.e_s)
                );
            }
            out.emit("table1.csv", &csv)
        }
        Format::Json => out.emit("table1.json", &to_json(&rows)),
    }
}

fn cmd_mc(common: &CommonArgs, t_screen: f64, samples_csv: Option<&Path>) -> Result<(), CliError> {
    let (cfg, spin) = common.resolve(Some(Preset::Set3))?;
    if common.samples == 0 {
        return Err(CliError::Usage("--samples must be >= 1".into()));
    }
    if !(t_screen.is_finite() && t_screen >= 0.0) {
        return Err(CliError::Usage(format!("--t-screen must be >= 0, got {t_screen}")));
    }
    let run = sample_screen(&cfg, &spin, t_screen, common.samples, common.seed)?;
    let record = McRecord {
        run,
        misclassified_fraction: run.misclassified_fraction(),
        empirical_e: empirical_es(&run, &spin)?,
        closed_form_e: error_integral(&cfg, t_screen)?,
    };
    if let Some(path) = samples_csv {
        let mut buf = Vec::new();
        write_samples_csv(&cfg, &spin, t_screen, common.samples, common.seed, &mut buf)?;
        let text = String::from_utf8(buf).expect("ascii output");
        write_file(path, &text)?;
    }
    let out = common.output();
    match common.format.unwrap_or(Format::Json) {
        Format::Json => out.emit("mc.json", &to_json(&record)),
        Format::Csv => {
            let c = &run.counts;
            let csv = format!(
                "seed,n_samples,t_screen,up_in_upper,up_in_lower,down_in_upper,down_in_lower,misclassified_fraction,empirical_E,empirical_E_se,closed_form_E\n{},{},{},{},{},{},{},{},{},{},{}\n",
                run.seed,
                run.n_samples,
                num(run.t_screen),
                c.up_in_upper,
                c.up_in_lower,
                c.down_in_upper,
                c.down_in_lower,
                num(record.misclassified_fraction),
                num(record.empirical_e.value),
                num(record.empirical_e.standard_error),
                num(record.closed_form_e)
            );
            out.emit("mc.csv", &csv)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LabelValidation {
    pub label: SpinLabel,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ComparisonReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceStudy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub config: SGConfig,
    pub grid: GridSpec,
    pub labels: Vec<LabelValidation>,
    pub pass: bool,
}

fn passes(report: &ComparisonReport) -> bool {
    report.fidelity > MIN_FIDELITY && report.norm_drift < MAX_NORM_DRIFT
}

/// Runs both labels on `grid`; grid errors are recorded as failures.
pub fn validate(cfg: &SGConfig, grid: &GridSpec, convergence: bool, dump: Option<&Path>) -> Result<ValidationReport, CliError> {
    let labels = SpinLabel::BOTH
        .par_iter()
        .map(|&label| -> Result<LabelValidation, CliError> {
            let failed = |e: Error| LabelValidation {
                label,
                report: None,
                convergence: None,
                error: Some(e.to_string()),
                pass: false,
            };
            let evolution = match split_step_evolve(cfg, label, grid) {
                Ok(evo) => evo,
                Err(e @ Error::Grid(_)) => return Ok(failed(e)),
                Err(e) => return Err(e.into()),
            };
            let report = compare(cfg, label, &evolution)?;
            if let Some(dir) = dump {
                let mut buf = Vec::new();
                write_density_csv(cfg, label, &evolution, &mut buf)?;
                write_file(&dir.join(format!("pde_{}.csv", label.as_str())), &String::from_utf8(buf).expect("ascii"))?;
            }
            let study = if convergence {
                match convergence_study(cfg, label, grid) {
                    Ok(s) => Some(s),
                    Err(e @ Error::Grid(_)) => return Ok(failed(e)),
                    Err(e) => return Err(e.into()),
                }
            } else {
                None
            };
            Ok(LabelValidation {
                label,
                pass: passes(&report),
                report: Some(report),
                convergence: study,
                error: None,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ValidationReport {
        config: *cfg,
        grid: *grid,
        pass: labels.iter().all(|l| l.pass),
        labels,
    })
}

fn cmd_validate(
    common: &CommonArgs,
    half_width: Option<f64>,
    points: Option<usize>,
    steps: usize,
    convergence: bool,
) -> Result<(), CliError> {
    let (cfg, _) = common.resolve(Some(Preset::Set3))?;
    let grid = match half_width {
        Some(h) => GridSpec::centered(&cfg, h * cfg.sigma0, points.unwrap_or(crate::pde_oracle::DEFAULT_POINTS), steps),
        None => GridSpec::auto(&cfg, steps),
    }
    .map_err(|e| CliError::Usage(e.to_string()))?;
    let report = validate(&cfg, &grid, convergence, common.out.as_deref())?;
    for l in &report.labels {
        if let Some(e) = &l.error {
            eprintln!("{}: {e}", l.label.as_str());
        }
    }
    let out = common.output();
    match common.format.unwrap_or(Format::Json) {
        Format::Json => out.emit("validate.json", &to_json(&report))?,
        Format::Csv => {
            let mut csv = String::from("label,l2_density_error,l2_field_error,fidelity,norm_drift,pass\n");
            for l in &report.labels {
                match &l.report {
                    Some(r) => {
                        let _ = writeln!(
                            csv,
                            "{},{},{},{},{},{}",
                            l.label.as_str(),
                            num(r.l2_density_error),
                            num(r.l2_field_error),
                            num(r.fidelity),
                            num(r.norm_drift),
                            l.pass
                        );
                    }
                    None => {
                        let _ = writeln!(csv, "{},,,,,false", l.label.as_str());
                    }
                }
            }
            out.emit("validate.csv", &csv)?
        }
    }
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Runtime("validation failed".into()))
    }
}
