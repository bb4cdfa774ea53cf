//! Monte Carlo sweeps: many independent tracking runs per parameter tuple,
//! aggregated and set against the closed-form bounds.
//!
//! Every random stream is seeded from the master seed and a canonical
//! rendering of the parameters it depends on, so reordering or extending a
//! grid leaves existing streams unchanged. Trials run in parallel and are
//! reduced in trial order, so outputs are byte-stable.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arprocess::{generate, Innovation, ProcessParams};
use crate::error::{Error, Result};
use crate::quantizer::{
    profile_quantizer, tracking_norm_grid, QuantizerSpec, DEFAULT_CODEBOOK_CAP_BITS,
};
use crate::scalar::norm_sq;
use crate::seed::derive_seed;
use crate::theory::{
    converse_accuracy, eval_bt_limit, eval_delta0, eval_g, gamma_from_constants, per_slot_bound,
};
use crate::tracking::{run_tracking, slot_bits, TrackingConfig, TrialResult};

/// Standard errors a simulated mean may fall short of a bound before the
/// row is flagged.
pub const VIOLATION_SIGMAS: f64 = 3.0;

/// Per-coordinate radius, in units of sigma, of the inner profiling shells.
const INNER_RANGE: f64 = 1.5;

fn default_sigma2() -> Vec<f64> {
    vec![1.0]
}
fn default_probe_count() -> usize {
    256
}
fn default_profile_trials() -> usize {
    2000
}
fn default_profile_shells() -> usize {
    8
}
fn default_cap_bits() -> u32 {
    DEFAULT_CODEBOOK_CAP_BITS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub alpha: Vec<f64>,
    #[serde(default = "default_sigma2")]
    pub sigma2: Vec<f64>,
    pub n: Vec<usize>,
    /// Bits per dimension per slot; `n * rate` must be a whole number.
    pub rate: Vec<f64>,
    pub s: Vec<usize>,
    pub p: Vec<usize>,
    pub quantizer: Vec<QuantizerSpec>,
    #[serde(default)]
    pub innovation: Innovation,
    pub trials: usize,
    pub horizon: usize,
    pub master_seed: u64,
    /// Keep per-slot error traces in the trial records.
    #[serde(default)]
    pub record_traces: bool,
    /// Probes used to calibrate each shape codebook.
    #[serde(default = "default_probe_count")]
    pub probe_count: usize,
    /// Directions per norm shell when measuring `(theta, eps)`.
    #[serde(default = "default_profile_trials")]
    pub profile_trials: usize,
    #[serde(default = "default_profile_shells")]
    pub profile_shells: usize,
    #[serde(default = "default_cap_bits")]
    pub codebook_cap_bits: u32,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)
            .map_err(|e| Error::invalid(format!("experiment spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("alpha", self.alpha.is_empty()),
            ("sigma2", self.sigma2.is_empty()),
            ("n", self.n.is_empty()),
            ("rate", self.rate.is_empty()),
            ("s", self.s.is_empty()),
            ("p", self.p.is_empty()),
            ("quantizer", self.quantizer.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::invalid(format!("grid `{name}` is empty")));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if self.profile_shells == 0 || self.profile_trials < 2 {
            return Err(Error::invalid(
                "profiling needs at least one shell and two trials per shell",
            ));
        }
        if let Some(a) = self.alpha.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {a}")));
        }
        if let Some(v) = self.sigma2.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!("sigma2 must be positive, got {v}")));
        }
        if let Some(r) = self.rate.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(Error::invalid(format!("rate must be positive, got {r}")));
        }
        if self.n.contains(&0) {
            return Err(Error::invalid("dimension n must be at least 1"));
        }
        for &s in &self.s {
            for &p in &self.p {
                if p == 0 || s == 0 || s % p != 0 {
                    return Err(Error::invalid(format!(
                        "update period p = {p} must divide s = {s}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Grid points in nesting order alpha, sigma2, n, rate, s, p, quantizer.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut points = Vec::new();
        for &alpha in &self.alpha {
            for &sigma2 in &self.sigma2 {
                for &n in &self.n {
                    for &rate in &self.rate {
                        for &s in &self.s {
                            for &p in &self.p {
                                for &quantizer in &self.quantizer {
                                    points.push(GridPoint {
                                        alpha,
                                        sigma2,
                                        n,
                                        rate,
                                        s,
                                        p,
                                        quantizer,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha: f64,
    pub sigma2: f64,
    pub n: usize,
    pub rate: f64,
    pub s: usize,
    pub p: usize,
    pub quantizer: QuantizerSpec,
}

impl GridPoint {
    fn process_key(&self, innovation: &Innovation) -> String {
        let law = serde_json::to_string(innovation).unwrap_or_default();
        format!(
            "alpha={:?};sigma2={:?};n={};law={law}",
            self.alpha, self.sigma2, self.n
        )
    }

    fn quantizer_key(&self, bits: usize) -> String {
        format!(
            "n={};bits={bits};sigma2={:?};q={}",
            self.n,
            self.sigma2,
            self.quantizer.label()
        )
    }

    /// Canonical rendering of the full tuple.
    pub fn key(&self, innovation: &Innovation) -> String {
        format!(
            "{};rate={:?};s={};p={};q={}",
            self.process_key(innovation),
            self.rate,
            self.s,
            self.p,
            self.quantizer.label()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub grid_index: usize,
    pub key: String,
    pub alpha: f64,
    pub sigma2: f64,
    pub n: usize,
    pub rate: f64,
    pub s: usize,
    pub p: usize,
    pub quantizer: String,
    pub trials: usize,
    pub horizon: usize,
    /// Why the point was not simulated.
    pub skipped: Option<String>,
    pub mean_dbar: Option<f64>,
    pub se_dbar: Option<f64>,
    pub mean_delta: Option<f64>,
    pub se_delta: Option<f64>,
    /// Fraction of trials with a quantizer failure.
    pub beta2_hat: Option<f64>,
    pub kappa_hat: Option<f64>,
    pub theta_hat: Option<f64>,
    pub eps_hat: Option<f64>,
    /// `delta0(R) g(s)`.
    pub achievable_accuracy: f64,
    pub converse_accuracy: f64,
    pub converse_floor: f64,
    /// `g(s) Gamma(p)` with the measured `(theta, eps)`.
    pub predicted_accuracy: Option<f64>,
    /// Asymptotic distortion bound with the measured constants and
    /// `beta = sqrt(beta2_hat)`; absent when `theta_hat = 1`.
    pub b_limit: Option<f64>,
    /// Per-slot mean errors above the per-slot bound by more than
    /// [`VIOLATION_SIGMAS`] standard errors.
    pub trace_violations: Option<usize>,
}

impl SummaryRow {
    pub fn simulated(&self) -> bool {
        self.skipped.is_none()
    }

    /// `mean_delta - predicted_accuracy`.
    pub fn gap(&self) -> Option<f64> {
        Some(self.mean_delta? - self.predicted_accuracy?)
    }

    /// Mean distortion below the converse floor beyond tolerance. Only
    /// meaningful for Gaussian sources.
    pub fn converse_violated(&self) -> Option<bool> {
        let mean = self.mean_dbar?;
        Some(mean < self.converse_floor - VIOLATION_SIGMAS * self.se_dbar? - 1e-12)
    }

    /// Mean distortion above the asymptotic achievability bound beyond tolerance.
    pub fn achievability_violated(&self) -> Option<bool> {
        let mean = self.mean_dbar?;
        Some(mean > self.b_limit? + VIOLATION_SIGMAS * self.se_dbar? + 1e-12)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub grid_index: usize,
    pub trial: usize,
    pub quantizer_seed: u64,
    #[serde(flatten)]
    pub result: TrialResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub rows: Vec<SummaryRow>,
    pub trials: Vec<TrialRecord>,
}

struct Aggregate {
    row: SummaryRow,
    records: Vec<TrialRecord>,
}

fn mean_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let count = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / count;
    if count < 2.0 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1.0);
    (mean, (var / count).sqrt())
}

fn run_point(spec: &ExperimentSpec, grid_index: usize, point: &GridPoint) -> Result<Aggregate> {
    let GridPoint {
        alpha,
        sigma2,
        n,
        rate,
        s,
        p,
        quantizer,
    } = *point;
    let g = eval_g(alpha, s);
    let converse = converse_accuracy(alpha, sigma2, rate, s);
    let mut row = SummaryRow {
        grid_index,
        key: point.key(&spec.innovation),
        alpha,
        sigma2,
        n,
        rate,
        s,
        p,
        quantizer: quantizer.label(),
        trials: spec.trials,
        horizon: spec.horizon,
        skipped: None,
        mean_dbar: None,
        se_dbar: None,
        mean_delta: None,
        se_delta: None,
        beta2_hat: None,
        kappa_hat: None,
        theta_hat: None,
        eps_hat: None,
        achievable_accuracy: eval_delta0(alpha, rate) * g,
        converse_accuracy: converse.accuracy,
        converse_floor: converse.floor,
        predicted_accuracy: None,
        b_limit: None,
        trace_violations: None,
    };
    let skip = |mut row: SummaryRow, e: Error| -> Result<Aggregate> {
        if e.is_validation() {
            row.skipped = Some(e.to_string());
            Ok(Aggregate {
                row,
                records: Vec::new(),
            })
        } else {
            Err(e)
        }
    };

    let bits_per_slot = match slot_bits(n, rate) {
        Ok(b) => b,
        Err(e) => return skip(row, e),
    };
    let cfg = TrackingConfig::new(n, bits_per_slot, s, p, spec.horizon)?.with_trace(true);
    let update_bits = cfg.update_bits();
    let sigma = sigma2.sqrt();
    let qkey = point.quantizer_key(update_bits);
    let build = |seed: u64| {
        quantizer.build::<f64>(
            n,
            update_bits,
            sigma,
            seed,
            spec.probe_count,
            spec.codebook_cap_bits,
        )
    };

    let (theta, eps) = match quantizer {
        QuantizerSpec::Lossless => (0.0, 0.0),
        _ => {
            let probe = match build(derive_seed(
                spec.master_seed,
                &format!("profile-q|{qkey}"),
                0,
            )) {
                Ok(q) => q,
                Err(e) => return skip(row, e),
            };
            let inner = INNER_RANGE * sigma;
            let grid = tracking_norm_grid(n, probe.dynamic_range(), inner, spec.profile_shells);
            let fit = profile_quantizer(
                &*probe,
                &grid,
                spec.profile_trials,
                derive_seed(spec.master_seed, &format!("profile-y|{qkey}"), 0),
            )?;
            (fit.theta, fit.eps)
        }
    };

    let params = ProcessParams::new(alpha, sigma2, n, spec.innovation)?;
    let pkey = point.process_key(&spec.innovation);
    let outcomes: Vec<Result<(TrialRecord, Vec<f64>)>> = (0..spec.trials)
        .into_par_iter()
        .map(|trial| {
            let traj = generate(
                &params,
                spec.horizon,
                derive_seed(spec.master_seed, &pkey, trial as u64),
            )?;
            let quantizer_seed =
                derive_seed(spec.master_seed, &format!("quantizer|{qkey}"), trial as u64);
            let q = build(quantizer_seed)?;
            let result = run_tracking(&traj, &cfg, &*q)?;
            let fourth = traj.rows().map(|x| norm_sq(x).powi(2)).collect();
            Ok((
                TrialRecord {
                    grid_index,
                    trial,
                    quantizer_seed,
                    result,
                },
                fourth,
            ))
        })
        .collect();
    let mut records = Vec::with_capacity(spec.trials);
    let mut fourth_sum = vec![0.0; spec.horizon];
    let mut err_sum = vec![0.0; spec.horizon];
    let mut err_sq = vec![0.0; spec.horizon];
    for outcome in outcomes {
        let (mut record, fourth) = match outcome {
            Ok(v) => v,
            Err(e) => return skip(row, e),
        };
        for (acc, f) in fourth_sum.iter_mut().zip(&fourth) {
            *acc += f;
        }
        let trace = if spec.record_traces {
            record.result.per_t_error.clone()
        } else {
            record.result.per_t_error.take()
        }
        .unwrap_or_default();
        for (t, e) in trace.iter().enumerate() {
            err_sum[t] += e;
            err_sq[t] += e * e;
        }
        records.push(record);
    }

    let count = spec.trials as f64;
    let (mean_dbar, se_dbar) = mean_se(records.iter().map(|r| r.result.dbar));
    let (mean_delta, se_delta) = mean_se(records.iter().map(|r| r.result.delta_hat));
    let beta2 = records.iter().filter(|r| r.result.failed).count() as f64 / count;
    let beta = beta2.sqrt();
    let kappa = fourth_sum
        .iter()
        .map(|f| (f / count).sqrt() / n as f64)
        .fold(0.0, f64::max);

    let slot_mean: Vec<f64> = err_sum.iter().map(|v| v / count).collect();
    let slot_se: Vec<f64> = err_sq
        .iter()
        .zip(&slot_mean)
        .map(|(sq, m)| {
            if spec.trials < 2 {
                0.0
            } else {
                (((sq - count * m * m) / (count - 1.0)).max(0.0) / count).sqrt()
            }
        })
        .collect();
    let mut violations = 0;
    for t in 0..spec.horizon {
        let ks = (t / s) * s;
        let i = t - ks;
        if i == 0 {
            continue;
        }
        let bound = per_slot_bound(
            theta,
            eps * eps,
            beta,
            alpha,
            sigma2,
            kappa,
            slot_mean[ks],
            i / p,
            i,
        );
        if slot_mean[t] > bound + VIOLATION_SIGMAS * slot_se[t] + 1e-12 {
            violations += 1;
        }
    }

    row.mean_dbar = Some(mean_dbar);
    row.se_dbar = Some(se_dbar);
    row.mean_delta = Some(mean_delta);
    row.se_delta = Some(se_delta);
    row.beta2_hat = Some(beta2);
    row.kappa_hat = Some(kappa);
    row.theta_hat = Some(theta);
    row.eps_hat = Some(eps);
    row.predicted_accuracy =
        Some(g * gamma_from_constants(theta, eps * eps, alpha, sigma2, p as f64));
    row.b_limit = eval_bt_limit(theta, eps, beta, alpha, sigma2, kappa, s, p).ok();
    row.trace_violations = Some(violations);
    Ok(Aggregate { row, records })
}

/// Runs every grid point. Points that cannot be built within the spec's
/// limits come back as skipped rows.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let mut rows = Vec::new();
    let mut trials = Vec::new();
    for (i, point) in spec.grid().iter().enumerate() {
        let agg = run_point(spec, i, point)?;
        rows.push(agg.row);
        trials.extend(agg.records);
    }
    Ok(ExperimentOutput { rows, trials })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowComparison {
    pub grid_index: usize,
    pub key: String,
    pub simulated: bool,
    pub gap: Option<f64>,
    pub converse_violation: Option<bool>,
    pub achievability_violation: Option<bool>,
    pub trace_violations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<RowComparison>,
    /// Rows whose mean distortion lies below the converse floor; any entry
    /// indicates a defect.
    pub converse_violations: Vec<usize>,
    pub achievability_violations: Vec<usize>,
    pub trace_violation_rows: Vec<usize>,
    pub skipped_rows: Vec<usize>,
}

/// Per-row gaps and bound checks. `gaussian` enables the converse check,
/// which only applies to Gaussian sources.
pub fn compare_report(rows: &[SummaryRow], gaussian: bool) -> Result<CompareReport> {
    if rows.is_empty() {
        return Err(Error::invalid("no rows to compare"));
    }
    let rows: Vec<RowComparison> = rows
        .iter()
        .map(|r| RowComparison {
            grid_index: r.grid_index,
            key: r.key.clone(),
            simulated: r.simulated(),
            gap: r.gap(),
            converse_violation: if gaussian {
                r.converse_violated()
            } else {
                None
            },
            achievability_violation: r.achievability_violated(),
            trace_violations: r.trace_violations,
        })
        .collect();
    let pick = |f: &dyn Fn(&RowComparison) -> bool| {
        rows.iter().filter(|r| f(r)).map(|r| r.grid_index).collect()
    };
    Ok(CompareReport {
        converse_violations: pick(&|r| r.converse_violation == Some(true)),
        achievability_violations: pick(&|r| r.achievability_violation == Some(true)),
        trace_violation_rows: pick(&|r| r.trace_violations.unwrap_or(0) > 0),
        skipped_rows: pick(&|r| !r.simulated),
        rows,
    })
}

/// Tool version, resolved configuration and seed, embedded in every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub master_seed: u64,
    pub config: serde_json::Value,
}

impl Provenance {
    pub fn new(master_seed: u64, config: &impl Serialize) -> Result<Self> {
        Ok(Provenance {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed,
            config: serde_json::to_value(config)?,
        })
    }

    /// `# `-prefixed header lines for CSV files.
    pub fn csv_header(&self) -> Result<String> {
        Ok(format!(
            "# tool: {} {}\n# master_seed: {}\n# config: {}\n",
            self.tool,
            self.version,
            self.master_seed,
            serde_json::to_string(&self.config)?
        ))
    }
}

#[derive(Serialize)]
struct ProvenanceLine<'a> {
    provenance: &'a Provenance,
}

/// First line is the provenance, then one JSON object per trial.
pub fn write_trials_jsonl(path: &Path, prov: &Provenance, records: &[TrialRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &ProvenanceLine { provenance: prov })?;
    out.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Serializes rows as CSV after the provenance comment lines.
pub fn write_csv<T: Serialize>(path: &Path, prov: &Provenance, rows: &[T]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(prov.csv_header()?.as_bytes())?;
    {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(&mut out);
        for r in rows {
            writer
                .serialize(r)
                .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        }
        writer.flush()?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ReportFile<'a> {
    provenance: &'a Provenance,
    report: &'a CompareReport,
}

pub fn write_report_json(path: &Path, prov: &Provenance, report: &CompareReport) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(
        &mut out,
        &ReportFile {
            provenance: prov,
            report,
        },
    )?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub trials: PathBuf,
    pub summary: PathBuf,
    pub report: PathBuf,
}

/// Writes `trials.jsonl`, `summary.csv` and `report.json` into `dir`.
pub fn write_outputs(
    dir: &Path,
    spec: &ExperimentSpec,
    output: &ExperimentOutput,
) -> Result<OutputPaths> {
    std::fs::create_dir_all(dir)?;
    let prov = Provenance::new(spec.master_seed, spec)?;
    let paths = OutputPaths {
        trials: dir.join("trials.jsonl"),
        summary: dir.join("summary.csv"),
        report: dir.join("report.json"),
    };
    write_trials_jsonl(&paths.trials, &prov, &output.trials)?;
    write_csv(&paths.summary, &prov, &output.rows)?;
    let report = compare_report(&output.rows, spec.innovation == Innovation::Gaussian)?;
    write_report_json(&paths.report, &prov, &report)?;
    Ok(paths)
}
