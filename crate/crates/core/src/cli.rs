//! Command-line front end: `monitor`, `simulate`, `design` and `boundaries`.
//!
//! Exit codes: 0 on success or a stop, 2 on usage, configuration or input
//! errors, 3 when a monitored stream ends before the rule stops.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::cs;
use crate::error::Error;
use crate::gst::{self, GridSettings, LookSchedule, DEFAULT_MAX_LOOKS};
use crate::numerics::norm_quantile;
use crate::rules::{self, Decision, Monitor, Rule, RuleKind, StoppingRuleSpec};
use crate::sim::{self, RunManifest, SimulationConfig};
use crate::stats::{Arm, ZEstimator};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_UNSTOPPED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "seqdesign", version, about = "Precision-based stopping rules for sequential experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Apply a stopping rule to a `w,y` stream and trace it.
    Monitor(MonitorArgs),
    /// Run a Monte Carlo study described by a JSON config.
    Simulate(SimulateArgs),
    /// Thresholds, reference sample sizes and tuned ρ for a design.
    Design(DesignArgs),
    /// Group-sequential boundary table.
    Boundaries(BoundaryArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ZCenter {
    Pooled,
    SampleMean,
    Weighted,
}

impl From<ZCenter> for ZEstimator {
    fn from(z: ZCenter) -> Self {
        match z {
            ZCenter::Pooled => ZEstimator::Pooled,
            ZCenter::SampleMean => ZEstimator::SampleMean,
            ZCenter::Weighted => ZEstimator::Weighted,
        }
    }
}

#[derive(Debug, Args)]
struct MonitorArgs {
    #[arg(long, value_parser = parse_kind)]
    rule: RuleKind,
    #[arg(long)]
    d: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    tau_h0: f64,
    #[arg(long, allow_negative_numbers = true)]
    tau_h1: Option<f64>,
    #[arg(long)]
    alpha_c: Option<f64>,
    /// Confidence-sequence tuning parameter.
    #[arg(long, conflicts_with = "rho_target")]
    rho: Option<f64>,
    /// Sample size at which to tune ρ.
    #[arg(long)]
    rho_target: Option<u64>,
    #[arg(long)]
    n_max: Option<u64>,
    #[arg(long, default_value_t = rules::DEFAULT_MIN_PER_ARM)]
    min_per_arm: u64,
    #[arg(long)]
    two_sided: bool,
    /// Number of equally spaced GST looks.
    #[arg(long, conflicts_with = "every_n")]
    looks: Option<u64>,
    /// GST look after every observation.
    #[arg(long)]
    every_n: bool,
    #[arg(long, value_enum, default_value_t = ZCenter::Pooled)]
    z_center: ZCenter,
    /// Input file; standard input when absent.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Metrics CSV; the manifest goes next to it as `<stem>.manifest.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DesignKind {
    Fwcid,
    Fpd,
}

#[derive(Debug, Args)]
struct DesignArgs {
    #[arg(long, value_enum)]
    kind: DesignKind,
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    tau_d: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0.2)]
    beta: f64,
    #[arg(long)]
    alpha_c: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long)]
    two_sided: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct BoundaryArgs {
    #[arg(long)]
    n_max: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, conflicts_with = "every_n")]
    looks: Option<u64>,
    #[arg(long)]
    every_n: bool,
    #[arg(long, default_value_t = gst::DEFAULT_GRID_POINTS)]
    grid_points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<RuleKind, String> {
    s.parse::<RuleKind>().map_err(|e| e.to_string())
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

/// Entry point of the binary.
pub fn main() -> i32 {
    let stdin = io::stdin();
    let stdout = io::stdout();
    let stderr = io::stderr();
    run(std::env::args_os(), &mut stdin.lock(), &mut stdout.lock(), &mut stderr.lock())
}

/// Parses `args` (program name first) and runs the subcommand against the
/// given streams, returning the exit code.
pub fn run<I, T>(args: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    let command_line = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join(" ");
    let result = match cli.command {
        Command::Monitor(a) => cmd_monitor(&a, stdin, stdout),
        Command::Simulate(a) => cmd_simulate(&a, &command_line),
        Command::Design(a) => cmd_design(&a, stdout),
        Command::Boundaries(a) => cmd_boundaries(&a, stdout),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn look_schedule(looks: Option<u64>, every_n: bool) -> LookSchedule {
    if every_n {
        LookSchedule::EveryN
    } else {
        LookSchedule::Equally(looks.unwrap_or(DEFAULT_MAX_LOOKS))
    }
}

fn monitor_spec(a: &MonitorArgs) -> Result<StoppingRuleSpec, Failure> {
    let mut spec = match a.rule {
        RuleKind::FwcidNaive => StoppingRuleSpec::fwcid_naive(need(a.d, "--d")?, a.alpha),
        RuleKind::FwcidConservative => StoppingRuleSpec::fwcid_conservative(
            need(a.d, "--d")?,
            a.alpha,
            need(a.alpha_c, "--alpha-c")?,
            1.0,
        ),
        RuleKind::FwcidAlwaysValid => StoppingRuleSpec::fwcid_always_valid(need(a.d, "--d")?, a.alpha, 1.0),
        RuleKind::FpdNaive => StoppingRuleSpec::fpd_naive(
            a.tau_h0,
            need(a.tau_h1, "--tau-h1")?,
            a.alpha,
            need(a.beta, "--beta")?,
        ),
        RuleKind::FpdConservative => StoppingRuleSpec::fpd_conservative(
            a.tau_h0,
            need(a.tau_h1, "--tau-h1")?,
            a.alpha,
            need(a.beta, "--beta")?,
            need(a.alpha_c, "--alpha-c")?,
            1.0,
        ),
        RuleKind::AvTest => StoppingRuleSpec::av_test(a.tau_h0, a.alpha, 1.0),
        RuleKind::Gst => StoppingRuleSpec::gst(a.tau_h0, a.alpha, need(a.n_max, "--n-max")?),
    };
    spec.n_max = a.n_max;
    spec.min_per_arm = a.min_per_arm;
    spec.two_sided = a.two_sided;
    spec.looks = look_schedule(a.looks, a.every_n);
    spec.z_estimator = a.z_center.into();
    spec.rho = None;
    if let Some((boundary, level)) = spec.rho_target() {
        spec.rho = Some(match (a.rho, a.rho_target) {
            (Some(rho), _) => rho,
            (None, Some(n)) => cs::optimize_rho(n, level, boundary)?,
            (None, None) => return Err(usage(format!("rule {} needs --rho or --rho-target", a.rule))),
        });
    }
    spec.validate()?;
    Ok(spec)
}

fn need<T>(v: Option<T>, flag: &str) -> Result<T, Failure> {
    v.ok_or_else(|| usage(format!("{flag} is required for this rule")))
}

/// Plain decimal with `inf`/`nan` literals.
fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}

fn parse_line(line: &str, lineno: usize) -> Result<(Arm, f64), Failure> {
    let bad = |what: &str| usage(format!("line {lineno}: {what}: {line:?}"));
    let (w, y) = line.split_once(',').ok_or_else(|| bad("expected `w,y`"))?;
    let w: u8 = w.trim().parse().map_err(|_| bad("arm indicator is not 0 or 1"))?;
    let arm = Arm::try_from(w).map_err(|_| bad("arm indicator is not 0 or 1"))?;
    let y: f64 = y.trim().parse().map_err(|_| bad("outcome is not a number"))?;
    if !y.is_finite() {
        return Err(bad("outcome is not finite"));
    }
    Ok((arm, y))
}

fn cmd_monitor(a: &MonitorArgs, stdin: &mut dyn BufRead, out: &mut dyn Write) -> Result<i32, Failure> {
    let spec = monitor_spec(a)?;
    let rule = Rule::new(spec.clone())?;
    writeln!(out, "# rule={}", spec.kind)?;
    writeln!(out, "# alpha={}", num(spec.alpha))?;
    if let Some(t) = rule.threshold() {
        writeln!(out, "# threshold={}", num(t))?;
    }
    if let Some(cfg) = rule.cs_config() {
        writeln!(out, "# rho={}", num(cfg.rho))?;
    }
    if let Some(n_max) = spec.n_max {
        writeln!(out, "# n_max={n_max}")?;
    }
    writeln!(out, "n,p_hat,tau_hat,var_tau,sigma2_p,n_forecast,stopped")?;

    let file_reader;
    let input: &mut dyn BufRead = match &a.input {
        Some(path) => {
            file_reader = io::BufReader::new(
                fs::File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?,
            );
            &mut { file_reader }
        }
        None => stdin,
    };
    let mut monitor = Monitor::new(rule);
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') || (i == 0 && text == "w,y") {
            continue;
        }
        let (arm, y) = parse_line(text, i + 1)?;
        let decision = monitor.observe(arm, y)?;
        let state = monitor.state();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            state.n(),
            num(state.p_hat().unwrap_or(f64::NAN)),
            num(state.diff_in_means().unwrap_or(f64::NAN)),
            num(state.estimator_variance()),
            num(state.pooled_variance().unwrap_or(f64::NAN)),
            num(monitor.rule().forecast_n(state).unwrap_or(f64::NAN)),
            matches!(decision, Decision::Stop(_)) as u8
        )?;
        if let Decision::Stop(_) = decision {
            write_report(out, &monitor.report()?)?;
            return Ok(EXIT_OK);
        }
    }
    let state = monitor.state();
    writeln!(out, "# stopped=false")?;
    writeln!(out, "# n={}", state.n())?;
    writeln!(out, "# tau_hat={}", num(state.diff_in_means().unwrap_or(f64::NAN)))?;
    Ok(EXIT_UNSTOPPED)
}

fn write_report(out: &mut dyn Write, r: &rules::StopReport) -> io::Result<()> {
    writeln!(out, "# stopped=true")?;
    writeln!(out, "# n_stop={}", r.n_stop)?;
    writeln!(out, "# reason={}", r.reason)?;
    writeln!(out, "# tau_hat={}", num(r.tau_hat))?;
    writeln!(out, "# ci_lo={}", num(r.ci_lo))?;
    writeln!(out, "# ci_hi={}", num(r.ci_hi))?;
    let rejected = match r.rejected {
        Some(true) => "true",
        Some(false) => "false",
        None => "na",
    };
    writeln!(out, "# rejected={rejected}")?;
    writeln!(out, "# n_forecast={}", num(r.n_forecast))
}

fn manifest_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.manifest.json"))
}

fn cmd_simulate(a: &SimulateArgs, command_line: &str) -> Result<i32, Failure> {
    let text = fs::read_to_string(&a.config).map_err(|e| usage(format!("{}: {e}", a.config.display())))?;
    let mut config = SimulationConfig::from_json(&text)?;
    config.base_seed = Some(a.seed);
    if let Some(t) = a.threads {
        config.parallelism = t;
    }
    config.validate()?;
    let mut manifest = RunManifest::start(command_line, &config);
    let rows = sim::run_grid(&config)?;
    fs::write(&a.out, sim::metrics_csv(&rows))?;
    manifest.finish();
    fs::write(manifest_path(&a.out), manifest.to_json())?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct DesignReport {
    kind: &'static str,
    alpha: f64,
    p: f64,
    threshold: f64,
    reference_sample_size: u64,
    reference_sample_size_exact: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    z_beta_prime: Option<f64>,
    /// ρ for the always-valid rule of the design (ψ for FWCID, φ for the test).
    rho_always_valid: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    rho_conservative: Option<f64>,
}

fn cmd_design(a: &DesignArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    crate::error::check_probability("p", a.p)?;
    let spec = match a.kind {
        DesignKind::Fwcid => StoppingRuleSpec::fwcid_naive(need(a.d, "--d")?, a.alpha),
        DesignKind::Fpd => {
            let mut s = StoppingRuleSpec::fpd_naive(0.0, need(a.tau_d, "--tau-d")?, a.alpha, a.beta);
            s.two_sided = a.two_sided;
            s
        }
    };
    if a.two_sided && a.kind == DesignKind::Fwcid {
        return Err(usage("--two-sided applies to --kind fpd"));
    }
    spec.validate()?;
    let threshold = rules::threshold(&spec)?;
    // at unit pooled variance σ̂²_τ̂ ≈ 1/(n p(1−p))
    let exact = 1.0 / (a.p * (1.0 - a.p) * threshold);
    let reference = exact.round() as u64;
    let (boundary, level) = match a.kind {
        DesignKind::Fwcid => (cs::Boundary::Psi, a.alpha),
        DesignKind::Fpd => (cs::Boundary::Phi, a.alpha),
    };
    let rho_av = cs::optimize_rho(reference.max(1), level, boundary)?;
    let rho_conservative = match a.alpha_c {
        Some(ac) => Some(cs::optimize_rho(reference.max(1), ac, cs::Boundary::Phi)?),
        None => None,
    };
    let z_beta_prime = if a.two_sided {
        Some(rules::two_sided_beta_correction(a.alpha, a.beta)?)
    } else {
        None
    };
    let report = DesignReport {
        kind: match a.kind {
            DesignKind::Fwcid => "fwcid",
            DesignKind::Fpd => "fpd",
        },
        alpha: a.alpha,
        p: a.p,
        threshold,
        reference_sample_size: reference,
        reference_sample_size_exact: exact,
        z_beta_prime,
        rho_always_valid: rho_av,
        rho_conservative,
    };
    if a.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("report serializes"))?;
        return Ok(EXIT_OK);
    }
    writeln!(out, "kind: {}", report.kind)?;
    writeln!(out, "alpha: {}", num(report.alpha))?;
    writeln!(out, "p: {}", num(report.p))?;
    if a.kind == DesignKind::Fwcid {
        writeln!(out, "z_alpha_2: {}", num(norm_quantile(1.0 - a.alpha / 2.0)?))?;
    }
    writeln!(out, "threshold: {}", num(report.threshold))?;
    writeln!(out, "reference_sample_size: {}", report.reference_sample_size)?;
    writeln!(out, "reference_sample_size_exact: {}", num(report.reference_sample_size_exact))?;
    if let Some(z) = report.z_beta_prime {
        writeln!(out, "z_beta_prime: {}", num(z))?;
    }
    writeln!(out, "rho_always_valid: {}", num(report.rho_always_valid))?;
    if let Some(r) = report.rho_conservative {
        writeln!(out, "rho_conservative: {}", num(r))?;
    }
    Ok(EXIT_OK)
}

fn cmd_boundaries(a: &BoundaryArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let grid = GridSettings {
        grid_points: a.grid_points,
        ..GridSettings::default()
    };
    let plan = gst::plan(look_schedule(a.looks, a.every_n), a.n_max, a.alpha, grid)?;
    match &a.out {
        Some(path) => fs::write(path, plan.to_csv())?,
        None => out.write_all(plan.to_csv().as_bytes())?,
    }
    Ok(EXIT_OK)
}
