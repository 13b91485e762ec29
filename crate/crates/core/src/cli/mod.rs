//! Batch front-end: configuration loading, dataset IO and the subcommands.

pub mod config;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::inversion::{estimate_density, EstimatorConfig, Kernel, YGrid};
use crate::marks::{build_bimodal_model, build_conditional_gamma_model, build_mg_infinity_model, EnergyMarginal};
use crate::marks::{MarkModel, ServiceDist, TabulatedDensity};
use crate::simulator::{cycle_moment_check, simulate_cycles, CycleMetadata, CycleSet, StopRule};
use crate::validation::{direct_a, error_decomposition, idle_ks_check, run_mise_study, theorem1_check};
use crate::validation::{AxisValue, MiseAxis, MiseStudy};

pub use config::{ConfigMap, CONFIG_ENV};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "pileup", version, about = "Pileup-corrected energy spectra from busy/idle cycle data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Mode,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Simulate marked Poisson cycles and write them as CSV.
    Simulate,
    /// Estimate the energy density from a cycle CSV.
    Estimate,
    /// Run identity, moment and distribution checks.
    Validate,
    /// Monte-Carlo MISE study along one parameter axis.
    Mise,
    /// Bias/variance decomposition of one estimate.
    Decompose,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Configuration file (default: the file named by PILEUP_CONFIG, if set).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Built-in preset applied before the configuration file.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// `key=value` override, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Clip negative density values and renormalize to unit mass.
    #[arg(long, global = true)]
    pub project_density: bool,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

/// Layers preset, configuration file and command-line overrides.
pub fn load_config(common: &Common) -> Result<ConfigMap> {
    let mut map = ConfigMap::default();
    if let Some(name) = &common.preset {
        map.merge(ConfigMap::parse(config::preset(name)?, &format!("preset:{name}"))?);
    }
    let file = common.config.clone().or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    if let Some(path) = file {
        map.merge(ConfigMap::load(&path)?);
    }
    for s in &common.overrides {
        map.set(s)?;
    }
    if let Some(p) = &common.input {
        map.insert("input", p.display().to_string(), "--input");
    }
    if let Some(p) = &common.output {
        map.insert("output", p.display().to_string(), "--output");
    }
    if common.project_density {
        map.insert("project_density", "true".into(), "--project-density");
    }
    Ok(map)
}

/// Mark law named by `model` (default `bimodal`).
pub fn model_from_config(cfg: &ConfigMap) -> Result<MarkModel> {
    match cfg.get_str("model").unwrap_or("bimodal") {
        "bimodal" => Ok(build_bimodal_model()),
        "conditional-gamma" => {
            let marginal = match cfg.get_path("energy_table") {
                Some(path) => Some(EnergyMarginal::Tabulated(TabulatedDensity::from_csv(&path)?)),
                None => None,
            };
            Ok(build_conditional_gamma_model(marginal))
        }
        "mg-infinity" => {
            let service = match cfg.get_str("service").unwrap_or("exponential") {
                "exponential" => ServiceDist::Exponential { rate: cfg.get_or("service_rate", 1.0)? },
                "deterministic" => ServiceDist::Deterministic { value: cfg.require("service_value")? },
                "gamma" => ServiceDist::Gamma { shape: cfg.require("service_shape")?, scale: cfg.get_or("service_scale", 1.0)? },
                "uniform" => ServiceDist::Uniform { low: cfg.require("service_low")?, high: cfg.require("service_high")? },
                other => return Err(Error::Config(format!("unknown service law `{other}`"))),
            };
            build_mg_infinity_model(service)
        }
        other => Err(Error::Config(format!("unknown model `{other}`, expected bimodal, conditional-gamma or mg-infinity"))),
    }
}

pub fn stop_rule(cfg: &ConfigMap) -> Result<StopRule> {
    match (cfg.get::<usize>("n_cycles")?, cfg.get::<f64>("duration")?) {
        (Some(_), Some(_)) => Err(Error::Config("give either `n_cycles` or `duration`, not both".into())),
        (Some(n), None) => Ok(StopRule::NumCycles(n)),
        (None, Some(t)) => Ok(StopRule::FixedDuration(t)),
        (None, None) => Err(Error::Config("missing required key `n_cycles` (or `duration`)".into())),
    }
}

pub fn estimator_config(cfg: &ConfigMap) -> Result<EstimatorConfig> {
    let d = EstimatorConfig::default();
    let kernel = match cfg.get_str("kernel").unwrap_or("sinc") {
        "sinc" => Kernel::Sinc,
        "sinc_cycles" | "sinc-cycles" => Kernel::SincCycles,
        "flat_top" | "flat-top" => Kernel::FlatTopTrapezoid { a: cfg.get_or("kernel_a", 0.5)? },
        other => return Err(Error::Config(format!("unknown kernel `{other}`, expected sinc, sinc_cycles or flat_top"))),
    };
    let y_grid = match cfg.get::<f64>("y_max")? {
        Some(max) => Some(YGrid { min: cfg.get_or("y_min", 0.0)?, max, count: cfg.get_or("y_count", 1024)? }),
        None if cfg.contains("y_min") => return Err(Error::Config("`y_min` needs `y_max`".into())),
        None => None,
    };
    let out = EstimatorConfig {
        c: cfg.get_or("c", d.c)?,
        x_trunc: cfg.get_or("x", d.x_trunc)?,
        h: cfg.get_or("h", d.h)?,
        omega_max: cfg.get("omega_max")?,
        omega_points: cfg.get("omega_points")?,
        kernel,
        y_grid,
        denominator_floor: cfg.get("denominator_floor")?,
    };
    out.validate()?;
    Ok(out)
}

fn read_cycles(path: &Path) -> Result<CycleSet> {
    let file = File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    CycleSet::read_csv(BufReader::new(file), CycleMetadata::default())
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// `out.csv` → `out.json`.
pub fn sidecar_path(output: &Path) -> PathBuf {
    output.with_extension("json")
}

fn metadata(mode: Mode, cfg: &ConfigMap, seeds: Value, result: Value) -> Result<Value> {
    let mut meta = json!({
        "tool": "pileup",
        "version": VERSION,
        "command": mode,
        "config": cfg.echo(),
        "config_sha256": cfg.hash(),
        "seeds": seeds,
        "result": result,
    });
    if let Some(input) = cfg.get_path("input") {
        meta["input_sha256"] = json!(sha256_file(&input)?);
    }
    Ok(meta)
}

fn write_json(path: Option<&Path>, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn require_output(cfg: &ConfigMap) -> Result<PathBuf> {
    cfg.get_path("output").ok_or_else(|| Error::Config("missing required key `output` (or --output)".into()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(BufWriter::new(file))
}

pub fn cmd_simulate(cfg: &ConfigMap) -> Result<()> {
    let lambda: f64 = cfg.require("lambda")?;
    let seed: u64 = cfg.require("seed")?;
    let stop = stop_rule(cfg)?;
    let model = model_from_config(cfg)?;
    let output = require_output(cfg)?;
    let cycles = simulate_cycles(lambda, &model, stop, seed)?;
    let mut w = create(&output)?;
    cycles.write_csv(&mut w)?;
    w.flush()?;
    let result = json!({ "cycles": cycles.len(), "lambda_true": lambda, "model": model.describe() });
    write_json(Some(&sidecar_path(&output)), &metadata(Mode::Simulate, cfg, json!({ "seed": seed }), result)?)?;
    log::info!("wrote {} cycles to {}", cycles.len(), output.display());
    Ok(())
}

pub fn cmd_estimate(cfg: &ConfigMap) -> Result<()> {
    let input = cfg.get_path("input").ok_or_else(|| Error::Config("missing required key `input` (or --input)".into()))?;
    let output = require_output(cfg)?;
    let est_cfg = estimator_config(cfg)?;
    let cycles = read_cycles(&input)?;
    let mut est = estimate_density(&cycles, &est_cfg)?;
    let projected = cfg.get_bool("project_density")?.unwrap_or(false);
    if projected {
        est.project()?;
    }
    let mut w = create(&output)?;
    writeln!(w, "y,m_hat")?;
    for (y, m) in est.y.iter().zip(&est.m_hat) {
        writeln!(w, "{y:.16e},{m:.16e}")?;
    }
    w.flush()?;
    let mut warnings = Vec::new();
    let d = &est.diagnostics;
    if d.min_denominator < 4.0 * d.denominator_floor {
        warnings.push(format!("denominator margin {:.3e} within 4x of the floor {:.3e}", d.min_denominator, d.denominator_floor));
    }
    if d.max_tail_bound > 1e-3 {
        warnings.push(format!("omega-truncation tail bound {:.3e} exceeds 1e-3", d.max_tail_bound));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let result = json!({
        "n_cycles": est.n_cycles,
        "lambda_hat": est.lambda_hat,
        "estimator": est.config,
        "settings": est.settings,
        "diagnostics": est.diagnostics,
        "projected": projected,
        "integral": est.integral(),
        "warnings": warnings,
    });
    write_json(Some(&sidecar_path(&output)), &metadata(Mode::Estimate, cfg, json!({}), result)?)
}

#[derive(Debug, Serialize)]
struct CheckOutcome {
    name: String,
    passed: bool,
    detail: Value,
}

pub fn cmd_validate(cfg: &ConfigMap) -> Result<()> {
    let lambda: f64 = cfg.require("lambda")?;
    let seed: u64 = cfg.get_or("seed", 1)?;
    let model = model_from_config(cfg)?;
    let cycles = match cfg.get_path("input") {
        Some(path) => read_cycles(&path)?,
        None => simulate_cycles(lambda, &model, stop_rule(cfg)?, seed)?,
    };
    let z_max: f64 = cfg.get_or("z_max", 4.0)?;
    let default_checks = vec!["moments".to_string(), "idle_ks".into(), "identity".into(), "a_bound".into()];
    let checks: Vec<String> = cfg.get_list("checks")?.unwrap_or(default_checks);
    let mut outcomes = Vec::new();
    for check in &checks {
        let outcome = match check.as_str() {
            "moments" => {
                let (mx, my) = model
                    .mean_x()
                    .zip(model.mean_y())
                    .ok_or_else(|| Error::OracleUnavailable(format!("no mark means for {}", model.describe())))?;
                let r = cycle_moment_check(&cycles, lambda, mx, my);
                CheckOutcome { name: check.clone(), passed: r.passes(z_max), detail: serde_json::to_value(r)? }
            }
            "idle_ks" => {
                let r = idle_ks_check(&cycles)?;
                CheckOutcome { name: check.clone(), passed: r.passes(), detail: serde_json::to_value(r)? }
            }
            "identity" => {
                let s: f64 = cfg.get_or("identity_s", 0.1)?;
                let p: f64 = cfg.get_or("identity_p", 0.05)?;
                let n: usize = cfg.get_or("identity_n", 100_000)?;
                let tol: f64 = cfg.get_or("identity_tolerance", 0.03)?;
                let r = theorem1_check(&model, lambda, Complex64::new(s, 0.0), Complex64::new(p, 0.0), n, n, seed)?;
                CheckOutcome { name: check.clone(), passed: r.within(tol), detail: serde_json::to_value(r)? }
            }
            "a_bound" => {
                let mut rows = Vec::new();
                let mut passed = true;
                for x in [0.0, 10.0, 30.0, 60.0] {
                    let a = direct_a(&model, lambda, x, Complex64::new(0.0, 0.05), 20_000, seed)?;
                    let bound = (lambda * x).exp();
                    passed &= a.value.norm() <= bound * (1.0 + 1e-12);
                    rows.push(json!({ "x": x, "a": a, "bound": bound }));
                }
                CheckOutcome { name: check.clone(), passed, detail: json!(rows) }
            }
            other => {
                return Err(Error::Config(format!("unknown check `{other}`, expected moments, idle_ks, identity or a_bound")))
            }
        };
        log::info!("{}: {}", outcome.name, if outcome.passed { "PASS" } else { "FAIL" });
        outcomes.push(outcome);
    }
    let all_passed = outcomes.iter().all(|o| o.passed);
    let result = json!({ "n_cycles": cycles.len(), "all_passed": all_passed, "checks": outcomes });
    let report = metadata(Mode::Validate, cfg, json!({ "seed": seed }), result)?;
    write_json(cfg.get_path("output").as_deref(), &report)
}

pub fn cmd_mise(cfg: &ConfigMap) -> Result<()> {
    let model = model_from_config(cfg)?;
    let axis: MiseAxis = cfg.require("axis")?;
    let values: Vec<AxisValue> = cfg.get_list("values")?.ok_or_else(|| Error::Config("missing required key `values`".into()))?;
    let study = MiseStudy {
        axis,
        values,
        lambda: cfg.require("lambda")?,
        n: cfg.get_or("n_cycles", 10_000)?,
        base: estimator_config(cfg)?,
        replicates: cfg.get_or("replicates", 10)?,
        seed: cfg.get_or("seed", 1)?,
    };
    let output = require_output(cfg)?;
    let report = run_mise_study(&model, &study)?;
    let mut w = create(&output)?;
    report.write_csv(&mut w)?;
    w.flush()?;
    let seeds: Vec<u64> = (0..study.replicates).map(|r| study.replicate_seed(r)).collect();
    let summary = json!({
        "max_min_ratio": report.max_min_ratio(),
        "flat_profile": report.max_min_ratio() < 2.0,
        "strictly_decreasing": report.strictly_decreasing(),
    });
    let result = json!({ "summary": summary, "report": report });
    write_json(Some(&sidecar_path(&output)), &metadata(Mode::Mise, cfg, json!({ "base": study.seed, "replicates": seeds }), result)?)
}

pub fn cmd_decompose(cfg: &ConfigMap) -> Result<()> {
    let model = model_from_config(cfg)?;
    let lambda: f64 = cfg.require("lambda")?;
    let seed: u64 = cfg.get_or("seed", 1)?;
    let n: usize = cfg.get_or("n_cycles", 10_000)?;
    let n_reference: usize = cfg.get_or("n_reference", crate::validation::MIN_REFERENCE_CYCLES)?;
    let report = error_decomposition(&model, lambda, &estimator_config(cfg)?, n, n_reference, seed)?;
    let result = json!({ "b2_vanishes": report.b2_vanishes(), "report": report });
    write_json(cfg.get_path("output").as_deref(), &metadata(Mode::Decompose, cfg, json!({ "seed": seed }), result)?)
}

pub fn run(mode: Mode, cfg: &ConfigMap) -> Result<()> {
    match mode {
        Mode::Simulate => cmd_simulate(cfg),
        Mode::Estimate => cmd_estimate(cfg),
        Mode::Validate => cmd_validate(cfg),
        Mode::Mise => cmd_mise(cfg),
        Mode::Decompose => cmd_decompose(cfg),
    }
}

fn init_logging(verbose: u8, cfg: &ConfigMap) {
    let level = match (verbose, cfg.get_str("log")) {
        (0, Some(l)) => l.to_string(),
        (0, None) => "warn".into(),
        (1, _) => "info".into(),
        _ => "debug".into(),
    };
    let _ = env_logger::Builder::new().parse_filters(&level).format_timestamp(None).try_init();
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let outcome = (|| -> Result<()> {
        let cfg = load_config(&cli.common)?;
        init_logging(cli.common.verbose, &cfg);
        if let Some(t) = cli.common.threads {
            if t == 0 {
                return Err(Error::Config("--threads must be at least 1".into()));
            }
            rayon::ThreadPoolBuilder::new().num_threads(t).build_global().map_err(|e| Error::Config(e.to_string()))?;
        }
        run(cli.command, &cfg)
    })();
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
