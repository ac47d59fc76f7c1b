//! Subcommand implementations. Each is a thin wrapper over `qfa_core`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use qfa_core::bspline::{build_spline_basis, default_knot_count};
use qfa_core::qdft::{qdft, sqdft_with_basis, MultiSeries};
use qfa_core::qseries::{half_grid, qacf, qper_at, qser};
use qfa_core::qsmooth::{lwqs, psd_repair, qslw, SmootherConfig, DEFAULT_FLOOR};
use qfa_core::sim::{ensemble_truth, monte_carlo_kld, simulate_run};
use qfa_core::spectral::{kld, lw_estimate_at, LagWindow};
use serde::Serialize;

use crate::config::{
    LambdaModeName, LevelSpec, RhoModeName, RunConfig, SmootherSpec, WindowName, WindowSpec,
};
use crate::container::Container;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "qfa", version, about = "Quantile-frequency analysis of time series")]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the two-series mixture process to CSV.
    Simulate(SimulateArgs),
    /// Quantile discrete Fourier transform of CSV series.
    Qdft(QdftArgs),
    /// Spline-regression QDFT of CSV series.
    Sqdft(SqdftArgs),
    /// Quantile series from a QDFT container.
    Qser(IoArgs),
    /// Quantile auto/cross-covariances from a qser (or qdft) container.
    Qacf(IoArgs),
    /// Quantile periodogram from a QDFT container.
    Qper(QperArgs),
    /// Lag-window spectral estimate from a QACF container.
    Lw(LwArgs),
    /// Smooth across quantile levels: qspec input gives LWQS, qdft input QSLW.
    Smooth(SmoothArgs),
    /// KLD of an estimate against a truth container, as JSON.
    Kld(KldArgs),
    /// Ensemble-mean truth spectrum of the simulated process.
    Truth(TruthArgs),
    /// Long-format CSV of one slice of a container.
    Export(ExportArgs),
    /// Monte Carlo KLD experiment driven by a JSON run config.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct IoArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON run config (simulation block and eval seed).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run index within the seed's stream family.
    #[arg(long, default_value_t = 0)]
    pub run: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct LevelArgs {
    /// Quantile levels as min:max:step.
    #[arg(long, default_value = "0.1:0.9:0.01")]
    pub levels: String,
}

#[derive(Debug, Args)]
pub struct QdftArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub levels: LevelArgs,
}

#[derive(Debug, Args)]
pub struct SqdftArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub levels: LevelArgs,
    /// Log penalty level.
    #[arg(long, default_value_t = 4.0, allow_negative_numbers = true)]
    pub mu: f64,
    /// Use level-dependent penalty weights.
    #[arg(long)]
    pub weighted: bool,
    /// Interior knot budget; defaults to all levels up to L = 50 and
    /// ⌈2.5·L^0.4⌉ above.
    #[arg(long)]
    pub knots: Option<usize>,
}

#[derive(Debug, Args)]
pub struct QperArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Only frequencies 1..⌊(n−1)/2⌋.
    #[arg(long)]
    pub half: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WindowArg {
    TukeyHanning,
    Bartlett,
    Parzen,
}

#[derive(Debug, Args)]
pub struct LwArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Window bandwidth M.
    #[arg(long, default_value_t = 30.0)]
    pub m: f64,
    #[arg(long, value_enum, default_value = "tukey-hanning")]
    pub window: WindowArg,
    /// Evaluate on every Fourier frequency instead of the half grid.
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Args)]
pub struct SmoothArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Fixed normalized smoothing level; GCV when absent.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Interpret --lambda on the raw scale.
    #[arg(long)]
    pub raw: bool,
    /// Whiten residuals with an AR(1) model before smoothing.
    #[arg(long)]
    pub ar1: bool,
    /// Fixed AR(1) coefficient; estimated when absent.
    #[arg(long, allow_negative_numbers = true)]
    pub rho: Option<f64>,
}

#[derive(Debug, Args)]
pub struct KldArgs {
    #[arg(long)]
    pub estimate: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Apply the eigenvalue floor to the estimate first.
    #[arg(long)]
    pub repair: bool,
}

#[derive(Debug, Args)]
pub struct TruthArgs {
    /// JSON run config (levels, simulation, truth seed and runs).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub levels: Option<String>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Part {
    Real,
    Imag,
    Mod,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Series index (1-based).
    #[arg(long, default_value_t = 1)]
    pub j: usize,
    /// Second series index for qacf and qspec (1-based; defaults to j).
    #[arg(long)]
    pub jp: Option<usize>,
    #[arg(long, value_enum, default_value = "real")]
    pub part: Part,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Also write the truth container here.
    #[arg(long)]
    pub truth_out: Option<PathBuf>,
}

pub fn read_series_csv(path: &Path) -> Result<MultiSeries, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let m = rdr.headers().map_err(|e| CliError::io(path, e))?.len();
    let mut cols = vec![Vec::new(); m];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::Validation(format!(
                    "{}: row {}, column {}: '{field}' is not a number",
                    path.display(),
                    row + 2,
                    j + 1
                ))
            })?;
            cols[j].push(v);
        }
    }
    Ok(MultiSeries::new(cols)?)
}

pub fn write_series_csv(path: &Path, s: &MultiSeries) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    let header: Vec<String> = (1..=s.m()).map(|j| format!("y{j}")).collect();
    w.write_record(&header).map_err(|e| CliError::io(path, e))?;
    for t in 0..s.n() {
        let row: Vec<String> = (0..s.m()).map(|j| s.series(j)[t].to_string()).collect();
        w.write_record(&row).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn levels_from(s: &str) -> Result<Vec<f64>, CliError> {
    LevelSpec::parse(s)?.levels()
}

#[derive(Debug, Serialize)]
pub struct KldReport {
    pub kld: f64,
    pub frequencies: usize,
    pub levels: usize,
}

#[derive(Debug, Serialize)]
pub struct EstimatorReport {
    pub estimator: String,
    pub mean: f64,
    pub sd: f64,
    pub runs: usize,
}

/// Thread count requested by the flag or, failing that, a config file.
pub fn requested_threads(cli: &Cli) -> Result<Option<usize>, CliError> {
    if cli.threads.is_some() {
        return Ok(cli.threads);
    }
    let cfg = match &cli.command {
        Command::Experiment(a) => Some(&a.config),
        Command::Truth(a) => a.config.as_ref(),
        Command::Simulate(a) => a.config.as_ref(),
        _ => None,
    };
    match cfg {
        Some(p) => Ok(RunConfig::load(p)?.threads),
        None => Ok(None),
    }
}

/// Execute one subcommand; standard output receives any report.
pub fn run(cmd: &Command, stdout: &mut dyn std::io::Write) -> Result<(), CliError> {
    match cmd {
        Command::Simulate(a) => {
            let cfg = load_config(&a.config)?;
            let mut sim = cfg.sim_config(a.seed.unwrap_or(cfg.seeds.eval));
            if let Some(n) = a.n {
                sim.n = n;
            }
            write_series_csv(&a.output, &simulate_run(&sim, a.run)?)
        }
        Command::Qdft(a) => {
            let s = read_series_csv(&a.input)?;
            let z = qdft(&s, &levels_from(&a.levels.levels)?)?;
            Container::Qdft(z).write(&a.output)
        }
        Command::Sqdft(a) => {
            let s = read_series_csv(&a.input)?;
            let levels = levels_from(&a.levels.levels)?;
            let knots = a.knots.unwrap_or_else(|| default_knot_count(levels.len()));
            let basis = build_spline_basis(&levels, knots)?;
            let z = sqdft_with_basis(&s, &basis, a.mu, a.weighted)?;
            Container::Qdft(z).write(&a.output)
        }
        Command::Qser(a) => {
            let z = Container::read(&a.input)?.expect_qdft()?;
            Container::Qser(qser(&z)?).write(&a.output)
        }
        Command::Qacf(a) => {
            let qs = match Container::read(&a.input)? {
                Container::Qser(q) => q,
                Container::Qdft(z) => qser(&z)?,
                other => return Err(other.mismatch("qser or qdft")),
            };
            Container::Qacf(qacf(&qs)).write(&a.output)
        }
        Command::Qper(a) => {
            let z = Container::read(&a.input)?.expect_qdft()?;
            let freqs = if a.half {
                half_grid(z.n())
            } else {
                (0..z.n()).collect()
            };
            Container::Qspec(qper_at(&z, &freqs)).write(&a.output)
        }
        Command::Lw(a) => {
            let acf = Container::read(&a.input)?.expect_qacf()?;
            let kind = match a.window {
                WindowArg::TukeyHanning => WindowName::TukeyHanning,
                WindowArg::Bartlett => WindowName::Bartlett,
                WindowArg::Parzen => WindowName::Parzen,
            };
            let w: LagWindow = WindowSpec { kind, m: a.m }.window()?;
            let freqs = if a.full {
                (0..acf.n()).collect()
            } else {
                half_grid(acf.n())
            };
            Container::Qspec(lw_estimate_at(&acf, &w, &freqs)?).write(&a.output)
        }
        Command::Smooth(a) => {
            let cfg = smoother_from_flags(a)?;
            match Container::read(&a.input)? {
                Container::Qspec(s) => Container::Qspec(lwqs(&s, &cfg)?).write(&a.output),
                Container::Qdft(z) => Container::Qdft(qslw(&z, &cfg)?).write(&a.output),
                other => Err(other.mismatch("qspec or qdft")),
            }
        }
        Command::Kld(a) => {
            let est = Container::read(&a.estimate)?.expect_qspec()?;
            let truth = Container::read(&a.truth)?.expect_qspec()?;
            let est = if a.repair {
                psd_repair(&est, DEFAULT_FLOOR)
            } else {
                est
            };
            let r = kld(&est, &truth)?;
            let report = KldReport {
                kld: r.value,
                frequencies: r.frequencies,
                levels: r.levels,
            };
            writeln!(stdout, "{}", serde_json::to_string(&report).expect("serializable"))
                .map_err(|e| CliError::Io(e.to_string()))
        }
        Command::Truth(a) => {
            let mut cfg = load_config(&a.config)?;
            if let Some(n) = a.n {
                cfg.simulation.n = n;
            }
            if let Some(l) = &a.levels {
                cfg.levels = LevelSpec::parse(l)?;
            }
            let runs = a.runs.unwrap_or(cfg.runs.truth);
            let sim = cfg.sim_config(a.seed.unwrap_or(cfg.seeds.truth));
            let truth = ensemble_truth(&sim, &cfg.levels.levels()?, runs)?;
            Container::Qspec(truth).write(&a.output)
        }
        Command::Export(a) => export(a),
        Command::Experiment(a) => {
            let cfg = RunConfig::load(&a.config)?;
            let levels = cfg.levels.levels()?;
            let truth = ensemble_truth(&cfg.sim_config(cfg.seeds.truth), &levels, cfg.runs.truth)?;
            if let Some(p) = &a.truth_out {
                Container::Qspec(truth.clone()).write(p)?;
            }
            let specs = cfg.estimator_specs()?;
            let res = monte_carlo_kld(&cfg.sim_config(cfg.seeds.eval), &specs, &truth, cfg.runs.eval)?;
            let report: Vec<EstimatorReport> = cfg
                .estimators
                .iter()
                .zip(res)
                .map(|(name, s)| EstimatorReport {
                    estimator: serde_json::to_value(name)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_owned))
                        .unwrap_or_default(),
                    mean: s.mean,
                    sd: s.sd,
                    runs: s.values.len(),
                })
                .collect();
            writeln!(stdout, "{}", serde_json::to_string_pretty(&report).expect("serializable"))
                .map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

fn smoother_from_flags(a: &SmoothArgs) -> Result<SmootherConfig, CliError> {
    SmootherSpec {
        lambda_mode: if a.lambda.is_some() {
            LambdaModeName::Fixed
        } else {
            LambdaModeName::Gcv
        },
        lambda: a.lambda.unwrap_or(1.0),
        normalized: !a.raw,
        ar1_whiten: a.ar1,
        ar1_rho_mode: if a.rho.is_some() {
            RhoModeName::Fixed
        } else {
            RhoModeName::Estimate
        },
        ar1_rho: a.rho.unwrap_or(0.0),
    }
    .config()
}

fn export(a: &ExportArgs) -> Result<(), CliError> {
    let c = Container::read(&a.input)?;
    let jp = a.jp.unwrap_or(a.j);
    let m = match &c {
        Container::Qdft(z) => z.m(),
        Container::Qser(q) => q.m(),
        Container::Qacf(q) => q.m(),
        Container::Qspec(s) => s.m(),
    };
    if a.j == 0 || a.j > m || jp == 0 || jp > m {
        return Err(CliError::Validation(format!(
            "series indices ({}, {jp}) outside 1..={m}",
            a.j
        )));
    }
    let (j, jp) = (a.j - 1, jp - 1);
    let pick = |c: num_complex::Complex64| match a.part {
        Part::Real => c.re,
        Part::Imag => c.im,
        Part::Mod => c.norm(),
    };
    let real = |v: f64| match a.part {
        Part::Real => v,
        Part::Imag => 0.0,
        Part::Mod => v.abs(),
    };
    let levels = c.levels().to_vec();
    let mut rows: Vec<[String; 3]> = Vec::new();
    let header;
    match &c {
        Container::Qdft(z) => {
            header = ["freq_index", "level", "value"];
            for (lv, &alpha) in levels.iter().enumerate() {
                for v in 0..z.n() {
                    rows.push([v.to_string(), alpha.to_string(), pick(z.get(j, lv, v)).to_string()]);
                }
            }
        }
        Container::Qser(q) => {
            header = ["time", "level", "value"];
            for (lv, &alpha) in levels.iter().enumerate() {
                for (t, x) in q.series(j, lv).iter().enumerate() {
                    rows.push([(t + 1).to_string(), alpha.to_string(), real(*x).to_string()]);
                }
            }
        }
        Container::Qacf(q) => {
            header = ["lag", "level", "value"];
            for (lv, &alpha) in levels.iter().enumerate() {
                for (tau, x) in q.lags(j, jp, lv).iter().enumerate() {
                    rows.push([tau.to_string(), alpha.to_string(), real(*x).to_string()]);
                }
            }
        }
        Container::Qspec(s) => {
            header = ["freq_index", "level", "value"];
            for (lv, &alpha) in levels.iter().enumerate() {
                for (fi, v) in s.freqs().iter().enumerate() {
                    rows.push([v.to_string(), alpha.to_string(), pick(s.get(lv, fi, j, jp)).to_string()]);
                }
            }
        }
    }
    let mut w = csv::Writer::from_path(&a.output).map_err(|e| CliError::io(&a.output, e))?;
    w.write_record(header).map_err(|e| CliError::io(&a.output, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| CliError::io(&a.output, e))?;
    }
    w.flush().map_err(|e| CliError::io(&a.output, e))
}
