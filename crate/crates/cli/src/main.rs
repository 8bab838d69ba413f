//! `dnr`: divide-and-recombine likelihood modeling from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime/model error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use dnr_cli::engine::{self, DnrConfig, EngineError, McmcSettings, RequestedKind};
use dnr_cli::experiments::{
    self, exit_poll_data, exitpoll_posterior_mode, simulate_logistic, SimDesign,
};
use dnr_cli::io;
use dnr_core::cpa::{cpa_run, thresholds_for_targets};
use dnr_core::datamodels::{betabinom_log_posterior, logistic_loglik, logistic_mle};
use dnr_core::numkit::DenseVector;
use dnr_core::recombine::{
    recombine_normal, recombine_sn, recombine_ssn, snmm_estimate, ssnmm_estimate, DnrEstimate,
    ModelKind, SubsetFit,
};
use dnr_core::skewnormal::{sn_mode, SnParams};

/// Fixed default master seed used whenever --seed is omitted, so unseeded
/// invocations are still reproducible.
const DEFAULT_SEED: u64 = 2016;

#[derive(Parser)]
#[command(
    name = "dnr",
    version,
    about = "Divide-and-recombine likelihood modeling with MCMC-fitted subset models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Sn,
    Ssn,
    NormalMm,
    NormalLocal,
}

impl ModelArg {
    fn kind(self) -> RequestedKind {
        match self {
            ModelArg::Sn => RequestedKind::SnMm,
            ModelArg::Ssn => RequestedKind::Ssn,
            ModelArg::NormalMm => RequestedKind::NormalMm,
            ModelArg::NormalLocal => RequestedKind::NormalLocal,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum RecombineArg {
    Sn,
    Ssn,
    NormalMm,
    NormalLocal,
    /// both normal kinds present in the fits file
    Normal,
    /// every kind present in the fits file
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline: divide, per-subset MCMC + model fitting,
    /// recombine, estimate
    Fit {
        /// logistic dataset CSV with header y,x1,...,xp
        #[arg(long)]
        data: PathBuf,
        /// log2 of the subset count
        #[arg(long)]
        r: u32,
        /// likelihood model kind; repeat for several (default: all four)
        #[arg(long = "model", value_enum)]
        models: Vec<ModelArg>,
        /// post-burn-in MCMC draws per subset
        #[arg(long, default_value_t = 10_000)]
        draws: usize,
        #[arg(long, default_value_t = 5_000)]
        burnin: usize,
        #[arg(long, default_value_t = 1)]
        thin: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// permute rows (seeded) before block division
        #[arg(long)]
        shuffle: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recombine serialized subset fits into estimates
    Recombine {
        /// fits.json (SubsetFit array, bare or versioned)
        #[arg(long)]
        fits: PathBuf,
        #[arg(long = "model", value_enum, default_value_t = RecombineArg::All)]
        model: RecombineArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Contour probability assessment of an approximate sample against a
    /// reference sample
    Cpa {
        /// reference draws CSV with header t1,...,tp
        #[arg(long = "ref-sample")]
        ref_sample: PathBuf,
        /// approximating draws CSV with header t1,...,tp
        #[arg(long = "approx-sample")]
        approx_sample: PathBuf,
        /// reference log-density: std-normal | exitpoll | logistic:<data.csv>
        /// | sn:<params.json>
        #[arg(long)]
        logref: String,
        /// coverage grid as start:stop:step
        #[arg(long, default_value = "0.05:0.95:0.05")]
        targets: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate logistic datasets with theta = (1,...,1)
    Simulate {
        /// log2 of the subset size
        #[arg(long)]
        m: u32,
        /// log2 of the subset count
        #[arg(long)]
        r: u32,
        /// covariate count
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exit-poll posterior comparison: modes, q-q data, CPA
    Exitpoll {
        #[arg(long, default_value_t = 10_000)]
        draws: usize,
        #[arg(long, default_value_t = 5_000)]
        burnin: usize,
        /// keep every thin-th draw; raises the effective sample size behind
        /// the kept 10000 draws
        #[arg(long, default_value_t = 8)]
        thin: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// sample size drawn from each approximation
        #[arg(long, default_value_t = 10_000)]
        compare: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulated logistic D&R study with per-method CPA series
    LogisticStudy {
        #[arg(long, default_value_t = 8)]
        m: u32,
        #[arg(long, default_value_t = 3)]
        r: u32,
        #[arg(long, default_value_t = 5)]
        p: usize,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        draws: usize,
        #[arg(long, default_value_t = 5_000)]
        burnin: usize,
        /// keep every thin-th draw in every chain of the study
        #[arg(long, default_value_t = 10)]
        thin: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// reference and approximation sample size for CPA
        #[arg(long, default_value_t = 10_000)]
        compare: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

enum AppError {
    Usage(String),
    Runtime(String),
}

impl<E: std::error::Error> From<E> for AppError {
    fn from(e: E) -> Self {
        AppError::Runtime(e.to_string())
    }
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(AppError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            1
        }
        Err(AppError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

fn parse_targets(spec: &str) -> Result<Vec<f64>, AppError> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(AppError::Usage(format!(
            "--targets must be start:stop:step, got {spec:?}"
        )));
    }
    let nums: Result<Vec<f64>, _> = parts.iter().map(|s| s.parse::<f64>()).collect();
    let nums = nums.map_err(|_| AppError::Usage(format!("--targets has a non-number in {spec:?}")))?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if !(start > 0.0 && stop <= 1.0 && start <= stop && step > 0.0) {
        return Err(AppError::Usage(
            "--targets needs 0 < start <= stop <= 1 and step > 0".into(),
        ));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

fn write_warnings(dir: &Path, warnings: &[String]) -> Result<(), AppError> {
    let mut text = warnings.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    fs::write(dir.join("warnings.txt"), text).map_err(|e| AppError::Runtime(e.to_string()))
}

fn write_timing(dir: &Path, timing: &[engine::PhaseTiming]) -> Result<(), AppError> {
    let mut text = String::from("phase,seconds\n");
    for t in timing {
        text.push_str(&format!("{},{}\n", t.phase, io::fmt_f64(t.seconds)));
    }
    fs::write(dir.join("timing.csv"), text).map_err(|e| AppError::Runtime(e.to_string()))
}

fn dispatch(command: Command) -> Result<(), AppError> {
    match command {
        Command::Fit {
            data,
            r,
            models,
            draws,
            burnin,
            thin,
            seed,
            workers,
            shuffle,
            out,
        } => {
            let dataset = io::load_logistic_csv(&data)?;
            let kinds: Vec<RequestedKind> = if models.is_empty() {
                vec![
                    RequestedKind::SnMm,
                    RequestedKind::Ssn,
                    RequestedKind::NormalMm,
                    RequestedKind::NormalLocal,
                ]
            } else {
                let mut kinds: Vec<RequestedKind> = models.iter().map(|m| m.kind()).collect();
                kinds.sort_unstable();
                kinds.dedup();
                kinds
            };
            let mut config = DnrConfig::new(r, kinds, seed);
            config.mcmc = McmcSettings {
                n_draws: draws,
                burnin,
                thin,
            };
            config.workers = workers;
            config.shuffle = shuffle;
            let run = engine::run_pipeline(&dataset, &config).map_err(engine_error)?;
            fs::create_dir_all(&out).map_err(|e| AppError::Runtime(e.to_string()))?;
            io::save_fits(&out.join("fits.json"), &run.fits)?;
            io::save_estimates(&out.join("estimates.json"), &run.estimates)?;
            write_warnings(&out, &run.warnings)?;
            write_timing(&out, &run.timing)?;
            io::write_json(
                &out.join("manifest.json"),
                &json!({
                    "schema_version": io::SCHEMA_VERSION,
                    "command": "fit",
                    "data": data.display().to_string(),
                    "config": run.config,
                    "subset_seeds": run.subset_seeds,
                }),
            )?;
            Ok(())
        }
        Command::Recombine { fits, model, out } => {
            let all = io::load_fits(&fits)?;
            let of_kind = |kind: ModelKind| -> Vec<SubsetFit> {
                all.iter().filter(|f| f.model_kind == kind).cloned().collect()
            };
            let mut selections: Vec<RequestedKind> = Vec::new();
            let has = |kind: ModelKind| all.iter().any(|f| f.model_kind == kind);
            match model {
                RecombineArg::Sn => selections.push(RequestedKind::SnMm),
                RecombineArg::Ssn => selections.push(RequestedKind::Ssn),
                RecombineArg::NormalMm => selections.push(RequestedKind::NormalMm),
                RecombineArg::NormalLocal => selections.push(RequestedKind::NormalLocal),
                RecombineArg::Normal => {
                    if has(ModelKind::NormalMm) {
                        selections.push(RequestedKind::NormalMm);
                    }
                    if has(ModelKind::NormalLocal) {
                        selections.push(RequestedKind::NormalLocal);
                    }
                }
                RecombineArg::All => {
                    if has(ModelKind::SnMm) {
                        selections.push(RequestedKind::SnMm);
                        selections.push(RequestedKind::Ssn);
                    }
                    if has(ModelKind::NormalMm) {
                        selections.push(RequestedKind::NormalMm);
                    }
                    if has(ModelKind::NormalLocal) {
                        selections.push(RequestedKind::NormalLocal);
                    }
                }
            }
            if selections.is_empty() {
                return Err(AppError::Runtime(
                    "fits file has no fits of the requested kind".into(),
                ));
            }
            let mut estimates: BTreeMap<String, DnrEstimate> = BTreeMap::new();
            for sel in selections {
                let estimate = match sel {
                    RequestedKind::SnMm => {
                        snmm_estimate(&recombine_sn(&of_kind(ModelKind::SnMm))?, 1e-8, 200)?
                    }
                    RequestedKind::Ssn => {
                        ssnmm_estimate(&recombine_ssn(&of_kind(ModelKind::SnMm))?, 1e-8, 200)?
                    }
                    RequestedKind::NormalMm => {
                        recombine_normal(&of_kind(ModelKind::NormalMm))?.1
                    }
                    RequestedKind::NormalLocal => {
                        recombine_normal(&of_kind(ModelKind::NormalLocal))?.1
                    }
                };
                estimates.insert(sel.key().to_string(), estimate);
            }
            fs::create_dir_all(&out).map_err(|e| AppError::Runtime(e.to_string()))?;
            io::save_estimates(&out.join("estimates.json"), &estimates)?;
            io::write_json(
                &out.join("manifest.json"),
                &json!({
                    "schema_version": io::SCHEMA_VERSION,
                    "command": "recombine",
                    "fits": fits.display().to_string(),
                    "model": format!("{model:?}").to_lowercase(),
                }),
            )?;
            Ok(())
        }
        Command::Cpa {
            ref_sample,
            approx_sample,
            logref,
            targets,
            out,
        } => {
            let refs = io::load_sample_csv(&ref_sample)?;
            let approx = io::load_sample_csv(&approx_sample)?;
            let grid = parse_targets(&targets)?;
            let p = refs[0].dim();
            let (log_ref, mode): (Box<dyn Fn(&DenseVector) -> f64>, DenseVector) =
                build_logref(&logref, p)?;
            let thresholds = thresholds_for_targets(&*log_ref, &refs, &mode, &grid)?;
            let result = cpa_run(&*log_ref, &refs, &approx, &mode, &thresholds)?;
            fs::create_dir_all(&out).map_err(|e| AppError::Runtime(e.to_string()))?;
            let mut text = String::from("h,T,A,diff\n");
            for i in 0..result.h.len() {
                text.push_str(&format!(
                    "{},{},{},{}\n",
                    io::fmt_f64(result.h[i]),
                    io::fmt_f64(result.t[i]),
                    io::fmt_f64(result.a[i]),
                    io::fmt_f64(result.a[i] - result.t[i]),
                ));
            }
            fs::write(out.join("cpa.csv"), text).map_err(|e| AppError::Runtime(e.to_string()))?;
            io::write_json(
                &out.join("manifest.json"),
                &json!({
                    "schema_version": io::SCHEMA_VERSION,
                    "command": "cpa",
                    "ref_sample": ref_sample.display().to_string(),
                    "approx_sample": approx_sample.display().to_string(),
                    "logref": logref,
                    "targets": targets,
                    "mode": mode.as_slice(),
                    "n1": result.n1,
                    "n2": result.n2,
                }),
            )?;
            Ok(())
        }
        Command::Simulate {
            m,
            r,
            p,
            runs,
            seed,
            out,
        } => {
            let design = SimDesign {
                runs,
                m_log2: m,
                r_log2: r,
                p,
                seed,
            };
            fs::create_dir_all(&out).map_err(|e| AppError::Runtime(e.to_string()))?;
            for run_index in 0..runs {
                let data = simulate_logistic(&design, run_index);
                io::save_logistic_csv(&out.join(format!("run{run_index}.csv")), &data)?;
            }
            io::write_json(
                &out.join("manifest.json"),
                &json!({
                    "schema_version": io::SCHEMA_VERSION,
                    "command": "simulate",
                    "design": design,
                }),
            )?;
            Ok(())
        }
        Command::Exitpoll {
            draws,
            burnin,
            thin,
            seed,
            compare,
            out,
        } => {
            let mcmc = McmcSettings {
                n_draws: draws,
                burnin,
                thin,
            };
            let report = experiments::exitpoll_study(&mcmc, seed, compare)?;
            experiments::write_exitpoll_report(&out, &report)?;
            io::write_json(
                &out.join("manifest.json"),
                &json!({
                    "schema_version": io::SCHEMA_VERSION,
                    "command": "exitpoll",
                    "draws": draws,
                    "burnin": burnin,
                    "thin": thin,
                    "seed": seed,
                    "compare": compare,
                }),
            )?;
            Ok(())
        }
        Command::LogisticStudy {
            m,
            r,
            p,
            runs,
            seed,
            draws,
            burnin,
            thin,
            workers,
            compare,
            out,
        } => {
            let design = SimDesign {
                runs,
                m_log2: m,
                r_log2: r,
                p,
                seed,
            };
            let mcmc = McmcSettings {
                n_draws: draws,
                burnin,
                thin,
            };
            let (reports, failures) =
                experiments::logistic_study(&design, &mcmc, workers, compare);
            if reports.is_empty() {
                return Err(AppError::Runtime(format!(
                    "all runs failed: {}",
                    failures.join("; ")
                )));
            }
            experiments::write_logistic_report(&out, &design, &reports, &failures)?;
            io::write_json(
                &out.join("manifest.json"),
                &json!({
                    "schema_version": io::SCHEMA_VERSION,
                    "command": "logistic-study",
                    "design": design,
                    "draws": draws,
                    "burnin": burnin,
                    "thin": thin,
                    "workers": workers,
                    "compare": compare,
                }),
            )?;
            Ok(())
        }
    }
}

fn engine_error(e: EngineError) -> AppError {
    match e {
        EngineError::IndivisibleRows { .. } => AppError::Usage(e.to_string()),
        e => AppError::Runtime(e.to_string()),
    }
}

/// Resolves a --logref spec into the log-density and its mode.
#[allow(clippy::type_complexity)]
fn build_logref(
    spec: &str,
    p: usize,
) -> Result<(Box<dyn Fn(&DenseVector) -> f64>, DenseVector), AppError> {
    if spec == "std-normal" {
        let f = move |t: &DenseVector| -0.5 * t.iter().map(|v| v * v).sum::<f64>();
        return Ok((Box::new(f), DenseVector::zeros(p)));
    }
    if spec == "exitpoll" {
        if p != 2 {
            return Err(AppError::Usage(
                "exitpoll logref needs 2-column samples (alpha, beta)".into(),
            ));
        }
        let data = exit_poll_data();
        let mode = exitpoll_posterior_mode(&data)?;
        let f = move |t: &DenseVector| {
            betabinom_log_posterior(t[0], t[1], &data).unwrap_or(f64::NEG_INFINITY)
        };
        return Ok((Box::new(f), mode));
    }
    if let Some(path) = spec.strip_prefix("logistic:") {
        let data = io::load_logistic_csv(Path::new(path))?;
        if data.p() != p {
            return Err(AppError::Usage(format!(
                "logref data has {} covariates but samples have {p}",
                data.p()
            )));
        }
        let (mode, _) = logistic_mle(&data, 1e-8, 100)?;
        let f = move |t: &DenseVector| logistic_loglik(t, &data).unwrap_or(f64::NEG_INFINITY);
        return Ok((Box::new(f), mode));
    }
    if let Some(path) = spec.strip_prefix("sn:") {
        let text =
            fs::read_to_string(Path::new(path)).map_err(|e| AppError::Runtime(e.to_string()))?;
        let params: SnParams =
            serde_json::from_str(&text).map_err(|e| AppError::Runtime(e.to_string()))?;
        if params.dim() != p {
            return Err(AppError::Usage(format!(
                "sn params have dimension {} but samples have {p}",
                params.dim()
            )));
        }
        let mode = sn_mode(&params, 1e-8, 200)?;
        let f = move |t: &DenseVector| {
            dnr_core::skewnormal::sn_log_pdf(t, &params).unwrap_or(f64::NEG_INFINITY)
        };
        return Ok((Box::new(f), mode));
    }
    Err(AppError::Usage(format!(
        "unknown --logref {spec:?}; expected std-normal, exitpoll, logistic:<csv>, or sn:<json>"
    )))
}
