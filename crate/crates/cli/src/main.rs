//! `mep`: simulate, estimate, test and compare against limit laws.

mod output;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use mep_core::estimators::{lse_estimate, quantile_estimate, EstimateResult, QuantileIntercept};
use mep_core::harness::{
    convergence_study, empirical_quantile, limit_ensemble, run_experiment_full, EstimatorKind, ExperimentConfig,
    InterceptMode, Statistic, REPORT_LEVELS,
};
use mep_core::processes::{simulate_series, SeriesSample};
use mep_core::Error;

use output::{hash_of, write_json, write_with};

/// Levels at which `gof-test` decides.
const TEST_LEVELS: [f64; 3] = [0.90, 0.95, 0.99];

pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
    fn io(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Domain(_) | Error::Parse(_) | Error::GridMismatch(_) => 2,
            Error::Io(_) => 3,
            Error::Unidentified(_) | Error::NotPositiveSemidefinite { .. } | Error::Degenerate(_) | Error::Numerical(_) => 4,
        };
        Self { code, message: e.to_string() }
    }
}

#[derive(Parser)]
#[command(name = "mep", version, about = "Marked empirical processes for unit-root AR(1) models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides `base_seed` from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate series for every n in n_list.
    Simulate(Common),
    /// Estimate beta on a series file, or on freshly simulated series.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        series: Option<PathBuf>,
    },
    /// Goodness-of-fit test of a series against Monte Carlo critical values.
    GofTest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        series: PathBuf,
        /// Limit summary written by `limit-mc`; computed afresh when absent.
        #[arg(long)]
        critical: Option<PathBuf>,
    },
    /// Draw the limit ensemble of the configured statistic.
    LimitMc(Common),
    /// Finite-n against limit distributions across n_list.
    ConvergenceStudy(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Simulate(c) | Command::LimitMc(c) | Command::ConvergenceStudy(c) => c,
            Command::Estimate { common, .. } | Command::GofTest { common, .. } => common,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = cli.command.common().clone();
    let level = if common.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli.command, &common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let file = File::open(&common.config)
        .map_err(|e| Failure::config(format!("cannot read config {}: {e}", common.config.display())))?;
    let de = &mut serde_json::Deserializer::from_reader(BufReader::new(file));
    let mut config: ExperimentConfig = serde_path_to_error::deserialize(de)
        .map_err(|e| Failure::config(format!("config field '{}': {}", e.path(), e.inner())))?;
    if let Some(seed) = common.seed {
        config.base_seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn run(command: &Command, common: &Common) -> Result<(), Failure> {
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(Failure::config("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::config(format!("thread pool: {e}")))?;
    }
    let config = load_config(common)?;
    std::fs::create_dir_all(&common.out)
        .map_err(|e| Failure::io(format!("creating {}: {e}", common.out.display())))?;
    let stamp = Stamp {
        config_hash: hash_of(&config),
        seed: config.base_seed,
    };
    match command {
        Command::Simulate(_) => cmd_simulate(&config, &common.out, &stamp),
        Command::Estimate { series, .. } => cmd_estimate(&config, series.as_deref(), &common.out, &stamp),
        Command::GofTest { series, critical, .. } => {
            cmd_gof_test(&config, series, critical.as_deref(), &common.out, &stamp)
        }
        Command::LimitMc(_) => cmd_limit_mc(&config, &common.out, &stamp),
        Command::ConvergenceStudy(_) => cmd_convergence_study(&config, &common.out, &stamp),
    }
}

#[derive(Serialize, Clone)]
struct Stamp {
    config_hash: String,
    seed: u64,
}

#[derive(Serialize)]
struct SeriesMeta {
    file: String,
    n: usize,
    stream_id: u64,
    a_n: f64,
    beta: f64,
    truncation_tail_mass: Option<f64>,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct SimulateMeta {
    #[serde(flatten)]
    stamp: Stamp,
    series: Vec<SeriesMeta>,
}

fn cmd_simulate(config: &ExperimentConfig, out: &Path, stamp: &Stamp) -> Result<(), Failure> {
    let mut meta = Vec::new();
    for (m, &n) in config.n_list.iter().enumerate() {
        for r in 0..config.series_count {
            let stream = config.replicate_stream(m, r);
            let s = simulate_series(&config.spec, n, config.beta, config.x0, &stream)?;
            let file = format!("series_n{n}_r{r}.csv");
            write_with(&out.join(&file), |w| s.write_csv(w))?;
            meta.push(SeriesMeta {
                file,
                n,
                stream_id: stream.stream_id,
                a_n: s.a_n,
                beta: config.beta,
                truncation_tail_mass: s.truncation_tail_mass,
                warnings: s.warnings,
            });
        }
    }
    write_json(
        &out.join("simulate_meta.json"),
        &SimulateMeta {
            stamp: stamp.clone(),
            series: meta,
        },
    )
}

fn read_series(config: &ExperimentConfig, path: &Path) -> Result<SeriesSample, Failure> {
    let file = File::open(path).map_err(|e| Failure::config(format!("cannot read series {}: {e}", path.display())))?;
    let mut s = SeriesSample::read_csv(BufReader::new(file))?.with_spec(config.spec.clone());
    s.beta_true = config.beta;
    Ok(s)
}

#[derive(Serialize)]
struct EstimateRow {
    source: String,
    n: usize,
    #[serde(flatten)]
    result: EstimateResult,
}

#[derive(Serialize)]
struct EstimateOut {
    #[serde(flatten)]
    stamp: Stamp,
    estimates: Vec<EstimateRow>,
}

fn estimate(config: &ExperimentConfig, s: &SeriesSample) -> Result<EstimateResult, Failure> {
    Ok(match config.estimator {
        EstimatorKind::Lse => lse_estimate(s)?,
        EstimatorKind::Quantile => {
            let q = match config.intercept {
                InterceptMode::Estimate => QuantileIntercept::Estimate,
                InterceptMode::Known => {
                    let q = match config.q_tau {
                        Some(q) => q,
                        None => config.reference_law(s.n())?.quantile(config.tau),
                    };
                    QuantileIntercept::Known(q)
                }
            };
            quantile_estimate(s, config.tau, q)?
        }
    })
}

fn cmd_estimate(config: &ExperimentConfig, series: Option<&Path>, out: &Path, stamp: &Stamp) -> Result<(), Failure> {
    let mut rows = Vec::new();
    match series {
        Some(path) => {
            let s = read_series(config, path)?;
            rows.push(EstimateRow {
                source: path.display().to_string(),
                n: s.n(),
                result: estimate(config, &s)?,
            });
        }
        None => {
            for (m, &n) in config.n_list.iter().enumerate() {
                let stream = config.replicate_stream(m, 0);
                let s = simulate_series(&config.spec, n, config.beta, config.x0, &stream)?;
                rows.push(EstimateRow {
                    source: format!("simulated stream {}", stream.stream_id),
                    n,
                    result: estimate(config, &s)?,
                });
            }
        }
    }
    write_json(
        &out.join("estimate.json"),
        &EstimateOut {
            stamp: stamp.clone(),
            estimates: rows,
        },
    )
}

#[derive(Serialize, Deserialize, Clone, Copy)]
struct CriticalValue {
    level: f64,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct LimitSummaryOut {
    config_hash: String,
    seed: u64,
    kind: mep_core::limits::LimitKind,
    k: usize,
    grid_min: f64,
    grid_max: f64,
    grid_size: usize,
    cov_model: mep_core::limits::CovModel,
    path_source: mep_core::limits::PathSource,
    draws: usize,
    rejections: usize,
    draws_attempted: usize,
    quantiles: Vec<CriticalValue>,
    critical_values: Vec<CriticalValue>,
}

fn levels_of(draws: &[f64], levels: &[f64]) -> Result<Vec<CriticalValue>, Failure> {
    levels
        .iter()
        .map(|&level| {
            Ok(CriticalValue {
                level,
                value: empirical_quantile(draws, level)?,
            })
        })
        .collect()
}

fn limit_summary(config: &ExperimentConfig, stamp: &Stamp) -> Result<(LimitSummaryOut, mep_core::limits::LimitEnsemble), Failure> {
    let e = limit_ensemble(config)?;
    let summary = LimitSummaryOut {
        config_hash: stamp.config_hash.clone(),
        seed: stamp.seed,
        kind: e.kind,
        k: e.k,
        grid_min: e.grid_min,
        grid_max: e.grid_max,
        grid_size: e.grid_size,
        cov_model: e.cov_model,
        path_source: e.path_source,
        draws: e.draws.len(),
        rejections: e.rejections,
        draws_attempted: e.draws_attempted,
        quantiles: levels_of(&e.draws, &REPORT_LEVELS)?,
        critical_values: levels_of(&e.draws, &TEST_LEVELS)?,
    };
    Ok((summary, e))
}

fn cmd_limit_mc(config: &ExperimentConfig, out: &Path, stamp: &Stamp) -> Result<(), Failure> {
    let (summary, e) = limit_summary(config, stamp)?;
    write_with(&out.join("limit_draws.csv"), |w| e.write_csv(w))?;
    write_json(&out.join("limit_summary.json"), &summary)
}

#[derive(Serialize)]
struct Decision {
    level: f64,
    critical_value: f64,
    reject: bool,
}

#[derive(Serialize)]
struct GofOut {
    #[serde(flatten)]
    stamp: Stamp,
    series: String,
    n: usize,
    statistic: Statistic,
    value: f64,
    critical_source: String,
    decisions: Vec<Decision>,
}

fn cmd_gof_test(
    config: &ExperimentConfig,
    series: &Path,
    critical: Option<&Path>,
    out: &Path,
    stamp: &Stamp,
) -> Result<(), Failure> {
    if matches!(config.statistic, Statistic::QuantileScaledError | Statistic::LseScaledError) {
        return Err(Failure::config(
            "config field 'statistic': gof-test needs residual_sup, long_memory_recentered or marked_sup",
        ));
    }
    let s = read_series(config, series)?;
    let value = if config.g_id.is_zero() {
        0.0
    } else {
        config.statistic_of(&s, &config.reference_law(s.n())?)?
    };
    let (crit, source) = match critical {
        Some(path) => {
            let file = File::open(path)
                .map_err(|e| Failure::config(format!("cannot read critical values {}: {e}", path.display())))?;
            let de = &mut serde_json::Deserializer::from_reader(BufReader::new(file));
            let summary: LimitSummaryOut = serde_path_to_error::deserialize(de)
                .map_err(|e| Failure::config(format!("critical file field '{}': {}", e.path(), e.inner())))?;
            (summary.critical_values, path.display().to_string())
        }
        None => (limit_summary(config, stamp)?.0.critical_values, "computed".to_string()),
    };
    let decisions = TEST_LEVELS
        .iter()
        .map(|&level| {
            let cv = crit
                .iter()
                .find(|c| c.level == level)
                .ok_or_else(|| Failure::config(format!("no critical value at level {level}")))?;
            Ok(Decision {
                level,
                critical_value: cv.value,
                reject: value > cv.value,
            })
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    write_json(
        &out.join("gof_decision.json"),
        &GofOut {
            stamp: stamp.clone(),
            series: series.display().to_string(),
            n: s.n(),
            statistic: config.statistic,
            value,
            critical_source: source,
            decisions,
        },
    )
}

#[derive(Serialize)]
struct StudyOut<'a> {
    #[serde(flatten)]
    stamp: Stamp,
    monotone_trend: bool,
    report: &'a mep_core::harness::ComparisonReport,
}

fn cmd_convergence_study(config: &ExperimentConfig, out: &Path, stamp: &Stamp) -> Result<(), Failure> {
    let (report, monotone_trend) = if config.n_list.len() >= 3 {
        let t = convergence_study(config)?;
        (t.report, Some(t.monotone_trend))
    } else {
        (run_experiment_full(config)?.report, None)
    };
    let mut csv = String::from("n,level,finite_quantile,limit_quantile,ks,r_effective,dropped");
    if config.wasserstein {
        csv.push_str(",wasserstein");
    }
    csv.push('\n');
    for row in &report.rows {
        for (q, lq) in row.quantiles.iter().zip(&report.limit.quantiles) {
            csv.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
                row.n, q.level, q.value, lq.value, row.ks, row.r_effective, row.dropped
            ));
            if let Some(w) = row.wasserstein {
                csv.push_str(&format!(",{w:.16e}"));
            }
            csv.push('\n');
        }
    }
    output::write_file(&out.join("report.csv"), csv.as_bytes())?;
    write_json(
        &out.join("report.json"),
        &StudyOut {
            stamp: stamp.clone(),
            monotone_trend: monotone_trend.unwrap_or(false),
            report: &report,
        },
    )?;
    Ok(())
}
