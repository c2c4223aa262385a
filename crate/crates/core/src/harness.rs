//! Experiment orchestration: configuration, seeded ensembles, statistics, predictions and
//! report emission.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::limitlaw::{sample_critical_limit, CriticalConfig};
use crate::medium::{MediumSpec, Regime, RegimeLabel};
use crate::par::{self, Execution};
use crate::randfield::GridSpec;
use crate::solver::{run_realization, InitialPacket, ProbeRecord, RealizationPlan, StepRule};
use crate::theory::{self, REPORT_MOMENTS};

/// Version of the CSV/JSON output contract.
pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CSV_HEADER: [&str; 18] = [
    "experiment_id",
    "eps",
    "alpha",
    "regime",
    "t",
    "xi",
    "M",
    "N",
    "re_mean",
    "im_mean",
    "stderr",
    "n_samples",
    "re_pred",
    "im_pred",
    "phase_var",
    "phase_var_pred",
    "ks_stat",
    "ks_pass",
];

/// Stephens' asymptotic 1% coefficient for the one-sample KS statistic.
const KS_C_1PCT: f64 = 1.6276;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    #[serde(default = "default_csv")]
    pub csv: String,
    #[serde(default = "default_json")]
    pub json: String,
}

fn default_csv() -> String {
    "report.csv".into()
}
fn default_json() -> String {
    "report.json".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            csv: default_csv(),
            json: default_json(),
        }
    }
}

/// Settings for limit-law predictions that have no closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitConfig {
    pub samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub critical: CriticalConfig,
}

impl Default for LimitConfig {
    fn default() -> Self {
        LimitConfig {
            samples: 10_000,
            seed: 0x11a1_7000,
            critical: CriticalConfig::default(),
        }
    }
}

fn default_moments() -> Vec<(u32, u32)> {
    REPORT_MOMENTS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub medium: MediumSpec,
    pub alpha: f64,
    pub eps: Vec<f64>,
    /// One grid shared by every ε, or one grid per ε.
    pub grid: Vec<GridSpec>,
    pub packet: InitialPacket,
    pub probes: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    pub n_realizations: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub step: StepRule,
    #[serde(default = "default_moments")]
    pub moments: Vec<(u32, u32)>,
    #[serde(default)]
    pub limit: LimitConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s)
    }

    pub fn grid_for(&self, i: usize) -> GridSpec {
        if self.grid.len() == 1 {
            self.grid[0]
        } else {
            self.grid[i]
        }
    }

    pub fn regime(&self) -> Result<Regime> {
        self.medium.classify_regime(self.alpha)
    }

    /// Every check that can fail before a realization starts.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.eps.is_empty() {
            return bad("eps list is empty".into());
        }
        if let Some(e) = self.eps.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
            return bad(format!("eps must lie in (0,1], got {e}"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.grid.len() != 1 && self.grid.len() != self.eps.len() {
            return bad(format!(
                "give one grid or one per eps value ({} grids, {} eps values)",
                self.grid.len(),
                self.eps.len()
            ));
        }
        if self.n_realizations == 0 {
            return bad("n_realizations must be positive".into());
        }
        if self.probes.is_empty() || self.times.is_empty() {
            return bad("probes and times must be nonempty".into());
        }
        if self.moments.is_empty() {
            return bad("moment list is empty".into());
        }
        let regime = self.regime()?;
        for (i, &eps) in self.eps.iter().enumerate() {
            let grid = self.grid_for(i);
            if grid.d != self.medium.d() {
                return bad(format!("grid dimension {} differs from medium dimension {}", grid.d, self.medium.d()));
            }
            // Builds the medium and checks packet, probes, times and step rule.
            RealizationPlan::new(
                self.medium,
                eps,
                self.alpha,
                grid,
                self.packet.clone(),
                self.probes.clone(),
                self.times.clone(),
                self.master_seed,
                self.step,
            )?;
        }
        if regime.label.has_gaussian_phase() {
            self.check_unwrap_grid(regime)?;
        }
        Ok(())
    }

    /// Phase unwrapping needs `3 sd(increment) ≤ π/2` between consecutive record times.
    fn check_unwrap_grid(&self, regime: Regime) -> Result<()> {
        let mut prev = 0.0;
        let kappa = self.medium.kappa();
        for &t in &self.times {
            let dt = t - prev;
            if dt > 0.0 {
                let d = match regime.label {
                    RegimeLabel::FractionalPhaseXi => self
                        .probes
                        .iter()
                        .map(|xi| theory::big_d_txi(&self.medium, t, xi))
                        .collect::<Result<Vec<_>>>()?
                        .into_iter()
                        .fold(0.0, f64::max),
                    _ => theory::big_d(&self.medium),
                };
                let sd = (d * dt.powf(2.0 / kappa)).sqrt();
                if 3.0 * sd > 0.5 * std::f64::consts::PI {
                    return Err(Error::Config(format!(
                        "record times too coarse for phase unwrapping: step {dt} before t = {t} gives increment sd {sd:.3}"
                    )));
                }
            }
            prev = t;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let body = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&body);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub m: u32,
    pub n: u32,
    pub mean: Complex64,
    pub stderr: f64,
    pub n_samples: usize,
}

fn moment_value(z: Complex64, m: u32, n: u32) -> Complex64 {
    z.powu(m) * z.conj().powu(n)
}

/// Sample means of `ψ^M ψ*^N` with standard error `sd/√n` (combined over real and imaginary parts).
pub fn estimate_moments(samples: &[Complex64], pairs: &[(u32, u32)]) -> Result<Vec<MomentEstimate>> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let n = samples.len();
    Ok(pairs
        .iter()
        .map(|&(m, k)| {
            if m == 0 && k == 0 {
                return MomentEstimate {
                    m,
                    n: k,
                    mean: Complex64::new(1.0, 0.0),
                    stderr: 0.0,
                    n_samples: n,
                };
            }
            let vals: Vec<Complex64> = samples.iter().map(|&z| moment_value(z, m, k)).collect();
            // Shifted sums keep constant inputs exact.
            let first = vals[0];
            let shift: Complex64 = vals.iter().map(|v| v - first).sum();
            let mean = first + shift / n as f64;
            let stderr = if n < 2 {
                0.0
            } else {
                let ss: f64 = vals.iter().map(|v| (v - mean).norm_sqr()).sum();
                (ss / (n as f64 - 1.0) / n as f64).sqrt()
            };
            MomentEstimate {
                m,
                n: k,
                mean,
                stderr,
                n_samples: n,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub critical: f64,
    pub pass: bool,
}

/// 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    let s = (n as f64).sqrt();
    KS_C_1PCT / (s + 0.12 + 0.11 / s)
}

/// Two-sided KS test of `phases` against `N(0, variance)` at the 1% level.
pub fn normality_test(phases: &[f64], variance: f64) -> Result<KsResult> {
    if phases.len() < 100 {
        return Err(Error::InvalidArgument(format!("need at least 100 phases, got {}", phases.len())));
    }
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::InvalidArgument(format!("variance must be positive, got {variance}")));
    }
    let dist = Normal::new(0.0, variance.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut x = phases.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut stat: f64 = 0.0;
    for (i, v) in x.iter().enumerate() {
        let f = dist.cdf(*v);
        stat = stat.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let critical = ks_critical_1pct(x.len());
    Ok(KsResult {
        statistic: stat,
        critical,
        pass: stat < critical,
    })
}

/// `arg(ψ/φ̂₀)` at each record time, unwrapped from 0 at `t = 0`.
pub fn unwrap_phases(values: &[Complex64], phi0_hat: Complex64) -> Vec<f64> {
    let mut prev = 0.0;
    values
        .iter()
        .map(|z| {
            let raw = (z / phi0_hat).arg();
            let mut d = raw - prev;
            d -= 2.0 * std::f64::consts::PI * (d / (2.0 * std::f64::consts::PI)).round();
            prev += d;
            prev
        })
        .collect()
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment_id: String,
    pub eps: f64,
    pub alpha: f64,
    pub regime: RegimeLabel,
    pub t: f64,
    pub xi: Vec<f64>,
    pub m: u32,
    pub n: u32,
    pub re_mean: f64,
    pub im_mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub re_pred: Option<f64>,
    pub im_pred: Option<f64>,
    pub phase_var: Option<f64>,
    pub phase_var_pred: Option<f64>,
    pub ks_stat: Option<f64>,
    pub ks_pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeMeta {
    pub started_unix: u64,
    pub elapsed_seconds: f64,
    pub threads: usize,
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub experiment_id: String,
    pub regime: Regime,
    pub big_d: f64,
    pub config: Option<ExperimentConfig>,
    pub rows: Vec<ReportRow>,
    pub runtime: Option<RuntimeMeta>,
}

impl Report {
    pub fn empty(experiment_id: &str, regime: Regime) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            tool_version: TOOL_VERSION.into(),
            config_hash: String::new(),
            experiment_id: experiment_id.into(),
            regime,
            big_d: 0.0,
            config: None,
            rows: Vec::new(),
            runtime: None,
        }
    }

    /// The report without runtime metadata, for determinism comparisons.
    pub fn body(&self) -> Report {
        Report {
            runtime: None,
            ..self.clone()
        }
    }

    pub fn rows_for(&self, eps: f64, t: f64, m: u32, n: u32) -> impl Iterator<Item = &ReportRow> {
        self.rows
            .iter()
            .filter(move |r| r.eps == eps && r.t == t && r.m == m && r.n == n)
    }
}

/// Realizations for one ε, reduced in index order.
pub fn run_ensemble(plan: &RealizationPlan, n: usize, exec: Execution) -> Result<Vec<ProbeRecord>> {
    exec.try_map(n, |i| run_realization(plan, i as u64))
}

fn critical_prediction(
    cfg: &ExperimentConfig,
    xi: &[f64],
    t: f64,
    exec: Execution,
    cache: &mut HashMap<(u64, Vec<u64>), Vec<Complex64>>,
) -> Result<Option<Vec<Complex64>>> {
    if cfg.medium.d() != 1 {
        return Ok(None);
    }
    let key = (t.to_bits(), xi.iter().map(|x| x.to_bits()).collect());
    if let Some(v) = cache.get(&key) {
        return Ok(Some(v.clone()));
    }
    let s = sample_critical_limit(&cfg.medium, &cfg.packet, xi[0], t, cfg.limit.critical, cfg.limit.samples, cfg.limit.seed, exec)?;
    cache.insert(key, s.clone());
    Ok(Some(s))
}

/// Runs every ε of the configuration and assembles the report.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<Report> {
    cfg.validate()?;
    let start = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let regime = cfg.regime()?;
    let mut rows = Vec::new();
    let mut limit_cache = HashMap::new();
    for (ei, &eps) in cfg.eps.iter().enumerate() {
        let plan = RealizationPlan::new(
            cfg.medium,
            eps,
            cfg.alpha,
            cfg.grid_for(ei),
            cfg.packet.clone(),
            cfg.probes.clone(),
            cfg.times.clone(),
            cfg.master_seed,
            cfg.step,
        )?;
        let records = run_ensemble(&plan, cfg.n_realizations, exec)?;
        rows.extend(assemble_rows(cfg, eps, regime, &records, exec, &mut limit_cache)?);
    }
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION.into(),
        config_hash: cfg.hash(),
        experiment_id: cfg.experiment_id.clone(),
        regime,
        big_d: theory::big_d(&cfg.medium),
        config: Some(cfg.clone()),
        rows,
        runtime: Some(RuntimeMeta {
            started_unix,
            elapsed_seconds: start.elapsed().as_secs_f64(),
            threads: par::current_threads(),
            parallel: exec == Execution::Parallel && Execution::parallel_available(),
        }),
    })
}

/// Statistics and predictions for one ε from its ordered realization records.
pub fn assemble_rows(
    cfg: &ExperimentConfig,
    eps: f64,
    regime: Regime,
    records: &[ProbeRecord],
    exec: Execution,
    limit_cache: &mut HashMap<(u64, Vec<u64>), Vec<Complex64>>,
) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for (pi, xi) in cfg.probes.iter().enumerate() {
        let phi0 = cfg.packet.fourier(xi);
        // Unwrapped phase per realization along the time grid.
        let phases: Vec<Vec<f64>> = if regime.label.has_gaussian_phase() {
            records
                .iter()
                .map(|r| unwrap_phases(&r.values.iter().map(|row| row[pi]).collect::<Vec<_>>(), phi0))
                .collect()
        } else {
            Vec::new()
        };
        for (ti, &t) in cfg.times.iter().enumerate() {
            let samples: Vec<Complex64> = records.iter().map(|r| r.values[ti][pi]).collect();
            let estimates = estimate_moments(&samples, &cfg.moments)?;
            let var_pred = theory::phase_variance(&cfg.medium, &regime, t, xi)?;
            let (phase_var, ks) = if regime.label.has_gaussian_phase() {
                let th: Vec<f64> = phases.iter().map(|p| p[ti]).collect();
                let n = th.len() as f64;
                let mean = th.iter().sum::<f64>() / n;
                let var = if th.len() > 1 {
                    th.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                let ks = match var_pred {
                    Some(v) if v > 0.0 && th.len() >= 100 => Some(normality_test(&th, v)?),
                    _ => None,
                };
                (Some(var), ks)
            } else {
                (None, None)
            };
            let limit_samples = if regime.label == RegimeLabel::Critical && t > 0.0 {
                critical_prediction(cfg, xi, t, exec, limit_cache)?
            } else {
                None
            };
            for est in estimates {
                let pred = match theory::predict_moment(&cfg.medium, &regime, est.m, est.n, t, xi, phi0) {
                    Ok(v) => Some(v),
                    Err(Error::UseSampler { .. }) => match &limit_samples {
                        Some(s) => Some(estimate_moments(s, &[(est.m, est.n)])?[0].mean),
                        None => None,
                    },
                    Err(Error::NoPrediction { .. }) => None,
                    Err(e) => return Err(e),
                };
                rows.push(ReportRow {
                    experiment_id: cfg.experiment_id.clone(),
                    eps,
                    alpha: cfg.alpha,
                    regime: regime.label,
                    t,
                    xi: xi.clone(),
                    m: est.m,
                    n: est.n,
                    re_mean: est.mean.re,
                    im_mean: est.mean.im,
                    stderr: est.stderr,
                    n_samples: est.n_samples,
                    re_pred: pred.map(|p| p.re),
                    im_pred: pred.map(|p| p.im),
                    phase_var,
                    phase_var_pred: var_pred,
                    ks_stat: ks.map(|k| k.statistic),
                    ks_pass: ks.map(|k| k.pass),
                });
            }
        }
    }
    Ok(rows)
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `xi` column: components joined by `;`.
pub fn format_xi(xi: &[f64]) -> String {
    xi.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

pub fn row_record(r: &ReportRow) -> [String; 18] {
    [
        r.experiment_id.clone(),
        r.eps.to_string(),
        r.alpha.to_string(),
        r.regime.as_str().to_string(),
        r.t.to_string(),
        format_xi(&r.xi),
        r.m.to_string(),
        r.n.to_string(),
        r.re_mean.to_string(),
        r.im_mean.to_string(),
        r.stderr.to_string(),
        r.n_samples.to_string(),
        fmt_opt(r.re_pred),
        fmt_opt(r.im_pred),
        fmt_opt(r.phase_var),
        fmt_opt(r.phase_var_pred),
        fmt_opt(r.ks_stat),
        fmt_opt(r.ks_pass),
    ]
}

pub fn write_csv(report: &Report, path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in &report.rows {
        w.write_record(row_record(r)).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json(report: &Report, path: &Path) -> Result<()> {
    let body = serde_json::to_string_pretty(report)?;
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn read_json(path: &Path) -> Result<Report> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let report: Report = serde_json::from_str(&s)?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "report schema version {} is not {SCHEMA_VERSION}",
            report.schema_version
        )));
    }
    Ok(report)
}

/// Writes the CSV and JSON files into `dir`, overwriting existing ones.
pub fn emit(report: &Report, dir: &Path, csv_name: &str, json_name: &str) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join(csv_name);
    let json_path = dir.join(json_name);
    write_csv(report, &csv_path)?;
    write_json(report, &json_path)?;
    Ok((csv_path, json_path))
}
