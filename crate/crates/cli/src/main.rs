// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sutrack::arprocess::Innovation;
use sutrack::quantizer::{bench_quantizer, default_norm_grid, QuantizerProfile, QuantizerSpec};
use sutrack::seed::derive_seed;
use sutrack::sim::{self, ExperimentSpec, Provenance};
use sutrack::theory::{eval_gamma, theory_report, TheoryParams};

/// Tracking of AR(1) sources over rate-limited slotted channels.
#[derive(Parser)]
#[command(name = "sutrack", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form bounds as JSON.
    Theory(TheoryArgs),
    /// Accuracy-speed curve as CSV `p,gamma`.
    SpeedCurve(SpeedCurveArgs),
    /// Per-shell error of a quantizer against its fitted profile, as CSV.
    QuantizerBench(BenchArgs),
    /// Monte Carlo run of a single configuration.
    Simulate(SimulateArgs),
    /// Monte Carlo sweep described by a JSON spec file.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ProfileKind {
    Ideal,
    Uniform,
    GainShape,
    Fixed,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum QuantizerKind {
    Lossless,
    Uniform,
    GainShape,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum InnovationKind {
    Gaussian,
    TruncatedGaussian,
    Degenerate,
}

/// Quantizer family for analytic curves. `range` is `M / sigma`.
#[derive(Args, Debug, Serialize)]
struct ProfileArgs {
    #[arg(long, value_enum, default_value = "ideal")]
    profile: ProfileKind,
    /// Dimension, for the uniform and gain-shape families.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 4.0)]
    range: f64,
    #[arg(long, default_value_t = 2)]
    gain_bits: u32,
    /// Multiplicative constant of the fixed family.
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    /// Additive constant of the fixed family.
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
}

impl ProfileArgs {
    fn build(&self, sigma2: f64) -> Result<QuantizerProfile<f64>, Failure> {
        let need_n = || {
            self.n
                .filter(|&n| n > 0)
                .ok_or_else(|| Failure::Usage("--n is required for this profile".into()))
        };
        let range = self.range * sigma2.sqrt();
        Ok(match self.profile {
            ProfileKind::Ideal => QuantizerProfile::Ideal,
            ProfileKind::Uniform => QuantizerProfile::UniformScalar {
                n: need_n()?,
                range,
            },
            ProfileKind::GainShape => QuantizerProfile::GainShape {
                n: need_n()?,
                range,
                gain_bits: self.gain_bits,
            },
            ProfileKind::Fixed => QuantizerProfile::Fixed {
                theta: self.theta,
                eps: self.eps,
            },
        })
    }
}

#[derive(Args, Debug, Serialize)]
struct TheoryArgs {
    #[arg(long)]
    alpha: f64,
    /// Bits per dimension per slot.
    #[arg(long)]
    rate: f64,
    /// Sampling period in slots.
    #[arg(long, default_value_t = 1)]
    s: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Fourth-moment bound; defaults to the Gaussian value `sqrt(3)`.
    #[arg(long)]
    kappa: Option<f64>,
    /// Square root of the failure probability.
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[command(flatten)]
    profile: ProfileArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SpeedCurveArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    rate: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 8.0)]
    pmax: f64,
    /// Spacing of the `p` grid, which starts at `pstep`.
    #[arg(long, default_value_t = 1.0)]
    pstep: f64,
    #[command(flatten)]
    profile: ProfileArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "gain-shape")]
    quantizer: QuantizerKind,
    #[arg(long, default_value_t = 8)]
    n: usize,
    /// Total code length in bits.
    #[arg(long, default_value_t = 16)]
    bits: usize,
    /// Dynamic range `M / sigma`.
    #[arg(long, default_value_t = 8.0)]
    range: f64,
    #[arg(long, default_value_t = 4)]
    gain_bits: u32,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 8)]
    shells: usize,
    /// Directions per shell.
    #[arg(long, default_value_t = 2000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 256)]
    probe_count: usize,
    #[arg(long, default_value_t = sutrack::quantizer::DEFAULT_CODEBOOK_CAP_BITS)]
    cap_bits: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    rate: f64,
    #[arg(long, default_value_t = 1)]
    s: usize,
    #[arg(long, default_value_t = 1)]
    p: usize,
    #[arg(long, value_enum, default_value = "gain-shape")]
    quantizer: QuantizerKind,
    /// Dynamic range `M / sigma`.
    #[arg(long, default_value_t = 4.0)]
    range: f64,
    #[arg(long, default_value_t = 2)]
    gain_bits: u32,
    #[arg(long, value_enum, default_value = "gaussian")]
    innovation: InnovationKind,
    /// Truncation point of the truncated Gaussian law.
    #[arg(long, default_value_t = 3.0)]
    truncation: f64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 1000)]
    horizon: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    record_traces: bool,
    #[arg(long, default_value_t = 256)]
    probe_count: usize,
    #[arg(long, default_value_t = 2000)]
    profile_trials: usize,
    #[arg(long, default_value_t = 8)]
    profile_shells: usize,
    #[arg(long, default_value_t = sutrack::quantizer::DEFAULT_CODEBOOK_CAP_BITS)]
    cap_bits: u32,
    /// Directory for trials.jsonl, summary.csv and report.json.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    /// JSON experiment spec.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value = "sweep-out")]
    out_dir: PathBuf,
    /// Replaces the spec's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

enum Failure {
    /// Bad flags or parameters; exit code 2.
    Usage(String),
    /// Anything that went wrong while running; exit code 1.
    Runtime(String),
}

impl From<sutrack::Error> for Failure {
    fn from(e: sutrack::Error) -> Self {
        if e.is_validation() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn log_config(name: &str, config: &impl Serialize) -> Result<(), Failure> {
    eprintln!(
        "sutrack {} {name}: {}",
        env!("CARGO_PKG_VERSION"),
        serde_json::to_string(config)?
    );
    Ok(())
}

/// Writes to `out` when given, stdout otherwise.
fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn csv_text<T: Serialize>(prov: &Provenance, rows: &[T]) -> Result<String, Failure> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in rows {
        writer
            .serialize(r)
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let body = writer
        .into_inner()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    Ok(prov.csv_header()? + &String::from_utf8_lossy(&body))
}

#[derive(Serialize)]
struct JsonOutput<'a, T> {
    provenance: &'a Provenance,
    report: &'a T,
}

fn theory(args: &TheoryArgs) -> Result<(), Failure> {
    log_config("theory", args)?;
    let mut params = TheoryParams::new(args.alpha, args.sigma2, args.rate, args.s)?;
    params.profile = args.profile.build(args.sigma2)?;
    params.beta = args.beta;
    if let Some(k) = args.kappa {
        params.kappa = k;
    }
    let report = theory_report(&params)?;
    let prov = Provenance::new(0, args)?;
    let text = serde_json::to_string_pretty(&JsonOutput {
        provenance: &prov,
        report: &report,
    })? + "\n";
    emit(args.out.as_ref(), &text)
}

#[derive(Serialize)]
struct CurveRow {
    p: f64,
    gamma: f64,
}

fn speed_curve(args: &SpeedCurveArgs) -> Result<(), Failure> {
    log_config("speed-curve", args)?;
    TheoryParams::new(args.alpha, args.sigma2, args.rate, 1)?;
    if !(args.pstep > 0.0 && args.pmax >= args.pstep && args.pmax.is_finite()) {
        return Err(Failure::Usage("need 0 < pstep <= pmax".into()));
    }
    let profile = args.profile.build(args.sigma2)?;
    let count = (args.pmax / args.pstep + 1e-9).floor() as usize;
    let rows: Vec<CurveRow> = (1..=count)
        .map(|i| {
            let p = args.pstep * i as f64;
            CurveRow {
                p,
                gamma: eval_gamma(&profile, args.alpha, args.sigma2, args.rate, p),
            }
        })
        .collect();
    let prov = Provenance::new(0, args)?;
    emit(args.out.as_ref(), &csv_text(&prov, &rows)?)
}

fn quantizer_spec(kind: QuantizerKind, range: f64, gain_bits: u32) -> QuantizerSpec {
    match kind {
        QuantizerKind::Lossless => QuantizerSpec::Lossless,
        QuantizerKind::Uniform => QuantizerSpec::Uniform { range },
        QuantizerKind::GainShape => QuantizerSpec::GainShape { range, gain_bits },
    }
}

fn quantizer_bench(args: &BenchArgs) -> Result<(), Failure> {
    log_config("quantizer-bench", args)?;
    if args.n == 0 || !(args.sigma2 > 0.0) {
        return Err(Failure::Usage("need n >= 1 and sigma2 > 0".into()));
    }
    if matches!(args.quantizer, QuantizerKind::Lossless) {
        return Err(Failure::Usage(
            "the lossless mock has no finite range to bench".into(),
        ));
    }
    let spec = quantizer_spec(args.quantizer, args.range, args.gain_bits);
    let q = spec.build::<f64>(
        args.n,
        args.bits,
        args.sigma2.sqrt(),
        derive_seed(args.seed, "codebook", 0),
        args.probe_count,
        args.cap_bits,
    )?;
    if args.shells == 0 {
        return Err(Failure::Usage("--shells must be at least 1".into()));
    }
    let grid = default_norm_grid(args.n, q.dynamic_range(), args.shells);
    let (fit, rows) = bench_quantizer(
        &*q,
        &grid,
        args.trials,
        derive_seed(args.seed, "fit", 0),
        derive_seed(args.seed, "measure", 0),
    )?;
    eprintln!("fitted theta = {}, eps = {}", fit.theta, fit.eps);
    let prov = Provenance::new(args.seed, args)?;
    emit(args.out.as_ref(), &csv_text(&prov, &rows)?)
}

fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    log_config("simulate", args)?;
    let spec = ExperimentSpec {
        alpha: vec![args.alpha],
        sigma2: vec![args.sigma2],
        n: vec![args.n],
        rate: vec![args.rate],
        s: vec![args.s],
        p: vec![args.p],
        quantizer: vec![quantizer_spec(args.quantizer, args.range, args.gain_bits)],
        innovation: match args.innovation {
            InnovationKind::Gaussian => Innovation::Gaussian,
            InnovationKind::TruncatedGaussian => {
                Innovation::TruncatedGaussian { c: args.truncation }
            }
            InnovationKind::Degenerate => Innovation::Degenerate,
        },
        trials: args.trials,
        horizon: args.horizon,
        master_seed: args.seed,
        record_traces: args.record_traces,
        probe_count: args.probe_count,
        profile_trials: args.profile_trials,
        profile_shells: args.profile_shells,
        codebook_cap_bits: args.cap_bits,
    };
    spec.validate()?;
    let output = sim::run_experiment(&spec)?;
    if let Some(reason) = &output.rows[0].skipped {
        return Err(Failure::Usage(reason.clone()));
    }
    finish(&spec, &output, args.out_dir.as_ref())
}

fn finish(
    spec: &ExperimentSpec,
    output: &sim::ExperimentOutput,
    out_dir: Option<&PathBuf>,
) -> Result<(), Failure> {
    if let Some(dir) = out_dir {
        let paths = sim::write_outputs(dir, spec, output)?;
        eprintln!(
            "wrote {}, {}, {}",
            paths.trials.display(),
            paths.summary.display(),
            paths.report.display()
        );
    }
    let text = serde_json::to_string_pretty(&output.rows)? + "\n";
    emit(None, &text)
}

fn sweep(args: &SweepArgs) -> Result<(), Failure> {
    log_config("sweep", args)?;
    let text = fs::read_to_string(&args.spec)
        .map_err(|e| Failure::Usage(format!("cannot read spec {}: {e}", args.spec.display())))?;
    let mut spec = ExperimentSpec::from_json(&text)?;
    if let Some(seed) = args.seed {
        spec.master_seed = seed;
    }
    log_config("sweep spec", &spec)?;
    let output = sim::run_experiment(&spec)?;
    finish(&spec, &output, Some(&args.out_dir))
}

fn main() -> ExitCode {
    let args = match config::expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    // Later flags replace earlier ones, so the command line beats the config file.
    let command = Cli::command().mut_subcommands(|sub| sub.args_override_self(true));
    let parsed = command
        .try_get_matches_from(args)
        .and_then(|m| Cli::from_arg_matches(&m));
    let cli = match parsed {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let result = match &cli.command {
        Command::Theory(a) => theory(a),
        Command::SpeedCurve(a) => speed_curve(a),
        Command::QuantizerBench(a) => quantizer_bench(a),
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
