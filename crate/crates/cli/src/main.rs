mod config;
mod output;

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use weylcap::capacity::{capacity_run, lti_limit_sweep, ReportConfig, SweepRow};
use weylcap::channel::{make_spreading, TwistFault};
use weylcap::gabor::{gram_max_deviation, tight_window_on, tight_window_sized, write_signal_csv};
use weylcap::tfcore::{decay_envelope_fit, fourier, DecayEnvelope};
use weylcap::validation::{run_checks, CheckOutcome, ValidationOptions, CHECK_NAMES};
use weylcap::{CapacityReport, IndexRange, SpreadingFunction, SpreadingKind, SweepMode, TimeGrid};

use config::{CapacityConfig, ChannelKind, ConfigError, SignalingConfig, SweepConfig, ValidateConfig};
use output::{units, OutputDir, Summary, SCHEMA_VERSION};

#[derive(Debug, Parser)]
#[command(
    name = "weylcap",
    version,
    about = "Signaling sets, Weyl-operator channels and regional capacity estimates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (JSON, or TOML by extension).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed; overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
    /// Window grid size; overrides `grid_n`.
    #[arg(long)]
    grid_n: Option<usize>,
    /// Window grid spacing in seconds; overrides `grid_dt`.
    #[arg(long)]
    grid_dt: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the tight window and report its orthonormality and decay.
    Signaling(Common),
    /// Assemble the channel matrix and compute every capacity figure.
    Capacity(Common),
    /// Track the symbol-sample capacity of the time-invariant limit family.
    LtiSweep(Common),
    /// Run the desk-scale property checks.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of checks to run.
        #[arg(long)]
        checks: Option<String>,
        /// Test hook: negate one term of the twisting phase.
        #[arg(long)]
        inject_fault: bool,
    },
}

enum Status {
    Ok,
    ChecksFailed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Signaling(c) => cmd_signaling(c),
        Command::Capacity(c) => cmd_capacity(c),
        Command::LtiSweep(c) => cmd_lti_sweep(c),
        Command::Validate {
            common,
            checks,
            inject_fault,
        } => cmd_validate(common, checks.as_deref(), *inject_fault),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::ChecksFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<weylcap::Error>() {
        Some(weylcap::Error::InvalidParameter { .. } | weylcap::Error::BalianLow { .. }) => 2,
        _ => 3,
    }
}

fn output_root(flag: &Option<PathBuf>, from_config: &Option<PathBuf>) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| from_config.clone())
        .ok_or_else(|| config::config_error("no output directory: pass --out or set `output_dir`"))
}

#[derive(Serialize)]
struct Decay {
    time: DecayEnvelope,
    frequency: DecayEnvelope,
}

#[derive(Serialize)]
struct SignalingBody {
    gram_max_dev: f64,
    gram_extent: i64,
    condition_number: f64,
    commensurate: bool,
    grid: TimeGrid,
    decay: Decay,
    /// Larger of the two envelope amplitudes.
    envelope_constant: f64,
    d_est: f64,
}

fn cmd_signaling(c: &Common) -> Result<Status> {
    let mut cfg: SignalingConfig = config::load_or_default(c.config.as_deref())?;
    cfg.grid_n = c.grid_n.unwrap_or(cfg.grid_n);
    cfg.grid_dt = c.grid_dt.or(cfg.grid_dt);
    cfg.validate()?;
    let out = OutputDir::prepare(
        &output_root(&c.out, &cfg.output_dir)?,
        &["summary.json", "window.csv"],
        c.force,
    )?;

    let b = 1.0 / cfg.a;
    let tw = match cfg.grid_dt {
        Some(dt) => tight_window_on(cfg.s, cfg.a, b, cfg.rho, TimeGrid::centered(dt, cfg.grid_n)?)?,
        None => tight_window_sized(cfg.s, cfg.a, b, cfg.rho, cfg.grid_n)?,
    };
    let range = IndexRange::symmetric(cfg.gram_extent);
    let gram = gram_max_deviation(&tw.transmit(range, range)?);
    let time = decay_envelope_fit(&tw.window)?;
    let frequency = decay_envelope_fit(&fourier(&tw.window))?;
    let body = SignalingBody {
        gram_max_dev: gram,
        gram_extent: cfg.gram_extent,
        condition_number: tw.condition_number,
        commensurate: tw.commensurate,
        grid: tw.window.grid,
        envelope_constant: time.envelope_amplitude.max(frequency.envelope_amplitude),
        d_est: (time.rate * cfg.s / PI).clamp(1e-6, 1.0 - 1e-9),
        decay: Decay { time, frequency },
    };
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        command: "signaling",
        units: units(&[
            ("config.s", "dimensionless"),
            ("config.rho", "dimensionless"),
            ("config.a", "seconds"),
            ("config.grid_dt", "seconds"),
            ("gram_max_dev", "dimensionless"),
            ("condition_number", "dimensionless"),
            ("grid.t0", "seconds"),
            ("grid.dt", "seconds"),
            ("decay.time.rate", "1/seconds"),
            ("decay.time.center", "seconds"),
            ("decay.frequency.rate", "1/hertz"),
            ("decay.frequency.center", "hertz"),
            ("decay.*.amplitude", "dimensionless"),
            ("decay.*.envelope_amplitude", "dimensionless"),
            ("envelope_constant", "dimensionless"),
            ("d_est", "dimensionless"),
        ]),
        config: &cfg,
        body: &body,
    };
    out.write_json("summary.json", &summary)?;
    let mut csv = Vec::new();
    write_signal_csv(&tw.window, &mut csv)?;
    out.write("window.csv", &csv)?;
    println!(
        "gram_max_dev={:.3e} time_rate={:.4} frequency_rate={:.4} C={:.4} D_est={:.4}",
        body.gram_max_dev, body.decay.time.rate, body.decay.frequency.rate, body.envelope_constant, body.d_est
    );
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct CapacityBody<'a> {
    report: &'a CapacityReport,
}

fn spreading(cfg: &CapacityConfig) -> Result<SpreadingFunction> {
    Ok(match cfg.channel_kind {
        ChannelKind::SeparableExponential => make_spreading(
            SpreadingKind::SeparableExponential,
            cfg.amplitude,
            cfg.alpha,
            cfg.beta,
            cfg.phase_seed,
        )?,
        ChannelKind::LtiLimitFamily => make_spreading(SpreadingKind::LtiLimitFamily, 1.0, cfg.alpha, cfg.beta, 0)?,
        ChannelKind::Identity => SpreadingFunction::identity(),
    })
}

fn cmd_capacity(c: &Common) -> Result<Status> {
    let mut cfg: CapacityConfig = config::load_or_default(c.config.as_deref())?;
    cfg.phase_seed = c.seed.unwrap_or(cfg.phase_seed);
    cfg.grid_n = c.grid_n.unwrap_or(cfg.grid_n);
    cfg.grid_dt = c.grid_dt.or(cfg.grid_dt);
    cfg.validate()?;
    let out = OutputDir::prepare(
        &output_root(&c.out, &cfg.output_dir)?,
        &["summary.json", "atoms.csv"],
        c.force,
    )?;

    let sf = spreading(&cfg)?;
    let report_cfg = ReportConfig {
        alpha: cfg.alpha,
        beta: cfg.beta,
        rho: cfg.rho,
        s: cfg.s,
        duration: cfg.duration,
        bandwidth: cfg.bandwidth,
        eta2: cfg.eta2,
        p_total: cfg.p_total,
        kappa_csir: cfg.kappa_csir,
        kappa_csit: cfg.kappa_csit,
        max_atoms: cfg.max_atoms,
        grid_n: cfg.grid_n,
        grid_dt: cfg.grid_dt,
    };
    let report = capacity_run(&sf, &report_cfg)?.report;
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        command: "capacity",
        units: units(&[
            ("config.alpha", "dimensionless"),
            ("config.beta", "dimensionless"),
            ("config.rho", "dimensionless"),
            ("config.s", "dimensionless"),
            ("config.T", "seconds"),
            ("config.W", "hertz"),
            ("config.eta2", "dimensionless"),
            ("config.P_total", "dimensionless"),
            ("config.grid_dt", "seconds"),
            ("report.eigenvalues", "dimensionless"),
            ("report.symbol_samples", "dimensionless"),
            ("report.diagonal", "dimensionless"),
            ("report.eta2", "dimensionless"),
            ("report.p_total", "dimensionless"),
            ("report.csir_exact", "bits"),
            ("report.csir_symbol", "bits"),
            ("report.csit_exact", "bits"),
            ("report.csit_symbol", "bits"),
            ("report.error_bound_csir", "bits"),
            ("report.error_bound_csit", "bits"),
            ("report.power_exact", "dimensionless"),
            ("report.power_symbol", "dimensionless"),
            ("report.region.duration", "seconds"),
            ("report.region.bandwidth", "hertz"),
            ("report.params.*", "dimensionless"),
            ("report.log_gap.gap", "bits"),
            ("report.log_gap.bound", "bits"),
            ("report.log_gap.offdiag", "dimensionless"),
            ("report.grid.t0", "seconds"),
            ("report.grid.dt", "seconds"),
            ("report.window_condition", "dimensionless"),
        ]),
        config: &cfg,
        body: CapacityBody { report: &report },
    };
    out.write_json("summary.json", &summary)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    out.write("atoms.csv", &csv)?;
    println!(
        "csir_exact={:.6} csir_symbol={:.6} csit_exact={:.6} csit_symbol={:.6} error_bound_csir={:.6} error_bound_csit={:.6}",
        report.csir_exact,
        report.csir_symbol,
        report.csit_exact,
        report.csit_symbol,
        report.error_bound_csir,
        report.error_bound_csit
    );
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct SweepBody<'a> {
    mode: SweepMode,
    lti_target: f64,
    rows: &'a [SweepRow],
    warnings: &'a [String],
}

fn cmd_lti_sweep(c: &Common) -> Result<Status> {
    let cfg: SweepConfig = config::load_or_default(c.config.as_deref())?;
    cfg.validate()?;
    if c.grid_n.is_some() || c.grid_dt.is_some() {
        eprintln!("warning: lti-sweep uses closed-form symbol samples; grid overrides are ignored");
    }
    let out = OutputDir::prepare(
        &output_root(&c.out, &cfg.output_dir)?,
        &["summary.json", "sweep.csv"],
        c.force,
    )?;

    let sweep = lti_limit_sweep(
        &cfg.beta_seq,
        cfg.alpha,
        cfg.bandwidth,
        cfg.rho,
        cfg.eta2,
        cfg.mode,
        cfg.p_total,
        cfg.max_atoms,
    )?;
    if !sweep.warnings.is_empty() {
        if !cfg.allow_truncation {
            return Err(anyhow!(
                "{}; set `allow_truncation` to keep the rows that fit",
                sweep.warnings.join("; ")
            ));
        }
        for w in &sweep.warnings {
            eprintln!("warning: {w}");
        }
    }
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        command: "lti-sweep",
        units: units(&[
            ("config.alpha", "dimensionless"),
            ("config.beta_seq", "dimensionless"),
            ("config.W", "hertz"),
            ("config.rho", "dimensionless"),
            ("config.eta2", "dimensionless"),
            ("config.P_total", "dimensionless"),
            ("lti_target", "bits/(second*hertz)"),
            ("rows.beta_n", "dimensionless"),
            ("rows.atoms", "count"),
            ("rows.normalized_capacity", "bits/(second*hertz)"),
            ("rows.lti_target", "bits/(second*hertz)"),
            ("rows.gap", "bits/(second*hertz)"),
            ("rows.power_used", "dimensionless"),
        ]),
        config: &cfg,
        body: SweepBody {
            mode: sweep.mode,
            lti_target: sweep.rows.first().map_or(f64::NAN, |r| r.lti_target),
            rows: &sweep.rows,
            warnings: &sweep.warnings,
        },
    };
    out.write_json("summary.json", &summary)?;
    let mut csv = Vec::new();
    sweep.write_csv(&mut csv)?;
    out.write("sweep.csv", &csv)?;
    for r in &sweep.rows {
        println!(
            "beta_n={} normalized_capacity={:.6} lti_target={:.6} gap={:.3e}",
            r.beta_n, r.normalized_capacity, r.lti_target, r.gap
        );
    }
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct ValidateBody<'a> {
    fault_injected: bool,
    passed: bool,
    checks: &'a [CheckOutcome],
}

fn selected_checks(flag: Option<&str>, from_config: &Option<Vec<String>>) -> Vec<String> {
    match (flag, from_config) {
        (Some(list), _) => list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect(),
        (None, Some(list)) => list.clone(),
        (None, None) => CHECK_NAMES.iter().map(|s| s.to_string()).collect(),
    }
}

fn cmd_validate(c: &Common, checks: Option<&str>, inject_fault: bool) -> Result<Status> {
    let mut cfg: ValidateConfig = config::load_or_default(c.config.as_deref())?;
    cfg.seed = c.seed.unwrap_or(cfg.seed);
    cfg.validate()?;
    let names = selected_checks(checks, &cfg.checks);
    let out = match c.out.as_ref().or(cfg.output_dir.as_ref()) {
        Some(root) => Some(OutputDir::prepare(Path::new(root), &["summary.json"], c.force)?),
        None => None,
    };
    if names.is_empty() {
        eprintln!("warning: no checks selected");
    }
    let opts = ValidationOptions {
        seed: cfg.seed,
        tolerance: cfg.tolerance.unwrap_or(ValidationOptions::default().tolerance),
        fault: if inject_fault {
            TwistFault::FlipSign
        } else {
            TwistFault::None
        },
    };
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let outcomes = run_checks(&refs, &opts)?;
    for o in &outcomes {
        println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    if !outcomes.is_empty() {
        println!("validate: {passed}/{} checks passed", outcomes.len());
    }
    let all = passed == outcomes.len();
    if let Some(out) = out {
        let summary = Summary {
            schema_version: SCHEMA_VERSION,
            command: "validate",
            units: units(&[("config.tolerance", "dimensionless")]),
            config: &cfg,
            body: ValidateBody {
                fault_injected: inject_fault,
                passed: all,
                checks: &outcomes,
            },
        };
        out.write_json("summary.json", &summary)?;
    }
    Ok(if all { Status::Ok } else { Status::ChecksFailed })
}
