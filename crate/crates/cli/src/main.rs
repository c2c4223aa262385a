//! `randschro`: command-line driver for the random Schrödinger laboratory.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde_json::{json, Value};
use thiserror::Error;

use randschro::harness::{self, ExperimentConfig};
use randschro::limitlaw;
use randschro::medium::{MediumSpec, RegimeLabel};
use randschro::oracle::{self, McOptions, SeriesMode};
use randschro::par::{self, Execution};
use randschro::solver::InitialPacket;
use randschro::theory;

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] randschro::Error),
    #[error("{0}")]
    Usage(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "randschro", version, about = "Monte Carlo laboratory for weakly random Schrödinger equations")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; stdout when omitted, except for `simulate`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    A,
    B,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Homogenized,
    NoPhase,
    XiPhase,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Constants table for a medium as JSON.
    Theory {
        /// Built-in medium, used when no config is given.
        #[arg(long, value_enum, default_value = "a")]
        medium: Preset,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0])]
        t: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.0])]
        xi: Vec<f64>,
    },
    /// Runs the ensemble described by the config and writes the CSV and JSON report.
    Simulate,
    /// Samples the limit law of ψ(t, ξ) for the config's regime as CSV.
    LimitSample {
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        /// Defaults to the first probe of the config.
        #[arg(long)]
        xi: Option<f64>,
        /// Defaults to the config's limit sample count.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Per-order series terms and the uniform bound sweep as JSON.
    Oracle {
        #[arg(long, value_enum, default_value = "a")]
        medium: Preset,
        #[arg(long, default_value_t = 1)]
        m: u32,
        #[arg(long, default_value_t = 0)]
        n: u32,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 2)]
        k_max: usize,
        #[arg(long, value_enum, default_value = "homogenized")]
        mode: ModeArg,
        #[arg(long, default_value_t = 1.0)]
        xi: f64,
        #[arg(long, default_value_t = 200_000)]
        samples: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.25, 0.125, 0.0625])]
        eps: Vec<f64>,
    },
    /// Summarizes a JSON report and optionally rewrites its CSV.
    Report {
        /// Directory holding `report.json`, or the file itself.
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn preset(p: Preset) -> MediumSpec {
    match p {
        Preset::A => MediumSpec::medium_a(),
        Preset::B => MediumSpec::medium_b(),
    }
}

fn load_config(common: &Common) -> Result<Option<ExperimentConfig>> {
    let Some(path) = &common.config else {
        return Ok(None);
    };
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = common.seed {
        cfg.master_seed = s;
    }
    Ok(Some(cfg))
}

fn require_config(common: &Common) -> Result<ExperimentConfig> {
    load_config(common)?.ok_or_else(|| CliError::Usage("--config is required for this subcommand".into()))
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `body` to `out/name`, or to stdout without `--out`.
fn deliver(common: &Common, name: &str, body: &str) -> Result<()> {
    match &common.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            let path = dir.join(name);
            fs::write(&path, body).map_err(io_err(&path))?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            let mut out = io::stdout().lock();
            out.write_all(body.as_bytes()).map_err(io_err(Path::new("<stdout>")))?;
        }
    }
    Ok(())
}

fn theory_table(spec: &MediumSpec, alpha: Option<f64>, ts: &[f64], xis: &[f64]) -> Result<Value> {
    let e = spec.exponents();
    let mut samples = Vec::new();
    for &t in ts {
        for &xi in xis {
            samples.push(json!({ "t": t, "xi": xi, "big_d_txi": theory::big_d_txi(spec, t, &[xi])? }));
        }
    }
    let regime = alpha.map(|a| spec.classify_regime(a)).transpose()?;
    Ok(json!({
        "medium": spec,
        "k1": theory::k1(spec),
        "kappa": e.kappa,
        "alpha_c": e.alpha_c,
        "a_sing": e.singular_exponent,
        "hurst": e.hurst,
        "big_d": theory::big_d(spec),
        "regime": regime,
        "big_d_txi": samples,
    }))
}

fn limit_samples(cfg: &ExperimentConfig, t: f64, xi: f64, n: usize, seed: u64, exec: Execution) -> Result<Vec<(f64, f64)>> {
    let regime = cfg.regime()?;
    let phi0 = cfg.packet.fourier(&[xi]);
    let values = match regime.label {
        RegimeLabel::Critical => {
            limitlaw::sample_critical_limit(&cfg.medium, &cfg.packet, xi, t, cfg.limit.critical, n, seed, exec)?
        }
        RegimeLabel::FractionalPhase | RegimeLabel::FractionalPhaseXi => {
            let var = theory::phase_variance(&cfg.medium, &regime, t, &[xi])?.unwrap_or(0.0);
            limitlaw::sample_normal(var, n, seed)?
                .into_iter()
                .map(|th| phi0 * Complex64::from_polar(1.0, th))
                .collect()
        }
        RegimeLabel::Homogenized => {
            let v = theory::predict_moment(&cfg.medium, &regime, 1, 0, t, &[xi], phi0)?;
            vec![v; n]
        }
        RegimeLabel::OutOfTheory => return Err(randschro::Error::NoPrediction { alpha: regime.alpha }.into()),
    };
    Ok(values.into_iter().map(|z| (z.re, z.im)).collect())
}

fn samples_csv(values: &[(f64, f64)]) -> String {
    let mut s = String::from("sample_index,re,im\n");
    for (i, (re, im)) in values.iter().enumerate() {
        s.push_str(&format!("{i},{re},{im}\n"));
    }
    s
}

#[allow(clippy::too_many_arguments)]
fn oracle_table(
    spec: &MediumSpec,
    phi0: Complex64,
    m: u32,
    n: u32,
    t: f64,
    k_max: usize,
    mode: SeriesMode,
    opts: &McOptions,
    eps: &[f64],
) -> Result<Value> {
    let sum = oracle::moment_partial_sum(spec, m, n, t, k_max, &mode, phi0, opts)?;
    let bound = theory::big_d(spec) * t.powf(2.0 / spec.kappa());
    let sweep = eps
        .iter()
        .map(|&e| Ok(json!({ "eps": e, "value": oracle::uniform_bound_integral(spec, e, t)? })))
        .collect::<Result<Vec<_>>>()?;
    Ok(json!({
        "medium": spec,
        "partial_sum": sum,
        "bound_sweep": { "t": t, "limit": bound, "values": sweep },
    }))
}

fn report_summary(report: &harness::Report) -> Value {
    let rows: Vec<Value> = report
        .rows
        .iter()
        .map(|r| {
            let z = match (r.re_pred, r.im_pred) {
                (Some(re), Some(im)) if r.stderr > 0.0 => {
                    Some(((r.re_mean - re).powi(2) + (r.im_mean - im).powi(2)).sqrt() / r.stderr)
                }
                _ => None,
            };
            json!({
                "eps": r.eps, "t": r.t, "xi": r.xi, "M": r.m, "N": r.n,
                "mean": [r.re_mean, r.im_mean],
                "pred": r.re_pred.zip(r.im_pred).map(|(a, b)| [a, b]),
                "stderr": r.stderr,
                "deviation_in_se": z,
                "ks_pass": r.ks_pass,
            })
        })
        .collect();
    json!({
        "experiment_id": report.experiment_id,
        "regime": report.regime,
        "config_hash": report.config_hash,
        "tool_version": report.tool_version,
        "rows": rows,
    })
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        par::configure_threads(n);
    }
    let exec = if common.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.cmd {
        Command::Theory { medium, alpha, t, xi } => {
            let cfg = load_config(common)?;
            let (spec, alpha) = match &cfg {
                Some(c) => (c.medium, Some(alpha.unwrap_or(c.alpha))),
                None => (preset(medium), alpha),
            };
            let table = theory_table(&spec, alpha, &t, &xi)?;
            deliver(common, "theory.json", &(serde_json::to_string_pretty(&table)? + "\n"))
        }
        Command::Simulate => {
            let mut cfg = require_config(common)?;
            if let Some(dir) = &common.out {
                cfg.output.dir = dir.clone();
            }
            let report = harness::run_experiment(&cfg, exec)?;
            let (csv, json) = harness::emit(&report, &cfg.output.dir, &cfg.output.csv, &cfg.output.json)?;
            eprintln!("wrote {} and {}", csv.display(), json.display());
            Ok(())
        }
        Command::LimitSample { t, xi, samples } => {
            let cfg = require_config(common)?;
            let xi = match xi {
                Some(x) => x,
                None => cfg.probes[0][0],
            };
            let n = samples.unwrap_or(cfg.limit.samples);
            let seed = common.seed.unwrap_or(cfg.limit.seed);
            let values = limit_samples(&cfg, t, xi, n, seed, exec)?;
            deliver(common, "limit_samples.csv", &samples_csv(&values))
        }
        Command::Oracle {
            medium,
            m,
            n,
            t,
            k_max,
            mode,
            xi,
            samples,
            eps,
        } => {
            let cfg = load_config(common)?;
            let (spec, phi0) = match &cfg {
                Some(c) => (c.medium, c.packet.fourier(&[xi])),
                None => (preset(medium), InitialPacket::gaussian(1.0, vec![0.0], 1.0).fourier(&[xi])),
            };
            let mode = match mode {
                ModeArg::Homogenized => SeriesMode::Homogenized,
                ModeArg::NoPhase => SeriesMode::NoPhase,
                ModeArg::XiPhase => SeriesMode::XiPhase { xi: vec![xi] },
            };
            let mut opts = McOptions {
                samples,
                exec,
                ..McOptions::default()
            };
            if let Some(s) = common.seed {
                opts.seed = s;
            }
            let table = oracle_table(&spec, phi0, m, n, t, k_max, mode, &opts, &eps)?;
            deliver(common, "oracle.json", &(serde_json::to_string_pretty(&table)? + "\n"))
        }
        Command::Report { input } => {
            let path = if input.is_dir() { input.join("report.json") } else { input };
            let report = harness::read_json(&path)?;
            if let Some(dir) = &common.out {
                fs::create_dir_all(dir).map_err(io_err(dir))?;
                let csv = dir.join("report.csv");
                harness::write_csv(&report, &csv)?;
                eprintln!("wrote {}", csv.display());
            }
            let summary = serde_json::to_string_pretty(&report_summary(&report))? + "\n";
            io::stdout()
                .lock()
                .write_all(summary.as_bytes())
                .map_err(io_err(Path::new("<stdout>")))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
