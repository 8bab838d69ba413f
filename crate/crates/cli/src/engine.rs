//! Pipeline driver: divide the data, fit each subset concurrently with
//! deterministic per-subset seeds, recombine, and collect estimates.
//!
//! Determinism contract: the fits and estimates depend only on (data,
//! config), never on the worker count. Subset tasks write into slots indexed
//! by subset number and every recombination reduces in ascending subset
//! order, so parallel scheduling cannot reorder any floating-point sum.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use dnr_core::datamodels::{logistic_loglik, logistic_mle, LogisticData, ModelError};
use dnr_core::mcmc::{self, McmcConfig};
use dnr_core::numkit::DenseMatrix;
use dnr_core::random::derive_seed;
use dnr_core::recombine::{
    fit_normal_mm, recombine_normal, recombine_sn, recombine_ssn, snmm_estimate, ssnmm_estimate,
    DnrEstimate, ModelKind, NormalParams, RecombineError, SubsetFit,
};
use dnr_core::skewnormal::fit_sn_mm;
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub enum EngineError {
    IndivisibleRows { n: usize, subsets: usize },
    Subset { index: usize, message: String },
    Recombine(RecombineError),
    Model(ModelError),
    NoKinds,
}

impl fmt::Display for EngineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EngineError::IndivisibleRows { n, subsets } => {
                write!(f, "IndivisibleRows: {n} rows cannot split into {subsets} equal subsets")
            }
            EngineError::Subset { index, message } => {
                write!(f, "subset {index} failed: {message}")
            }
            EngineError::Recombine(e) => write!(f, "recombination failed: {e}"),
            EngineError::Model(e) => write!(f, "model failure: {e}"),
            EngineError::NoKinds => write!(f, "no model kinds requested"),
        }
    }
}

impl std::error::Error for EngineError {}

impl From<RecombineError> for EngineError {
    fn from(e: RecombineError) -> Self {
        EngineError::Recombine(e)
    }
}

impl From<ModelError> for EngineError {
    fn from(e: ModelError) -> Self {
        EngineError::Model(e)
    }
}

/// Likelihood-model kinds a run can request. `Ssn` shares the skew-normal
/// subset fits with `SnMm`; it differs only in recombination.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestedKind {
    SnMm,
    Ssn,
    NormalMm,
    NormalLocal,
}

impl RequestedKind {
    pub fn key(self) -> &'static str {
        match self {
            RequestedKind::SnMm => "sn_mm",
            RequestedKind::Ssn => "ssn",
            RequestedKind::NormalMm => "normal_mm",
            RequestedKind::NormalLocal => "normal_local",
        }
    }
}

/// Sampler knobs shared by every subset chain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McmcSettings {
    pub n_draws: usize,
    pub burnin: usize,
    pub thin: usize,
}

impl Default for McmcSettings {
    fn default() -> Self {
        Self {
            n_draws: 10_000,
            burnin: 5_000,
            thin: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DnrConfig {
    /// log2 of the subset count R
    pub r_log2: u32,
    pub model_kinds: Vec<RequestedKind>,
    pub mcmc: McmcSettings,
    pub master_seed: u64,
    pub workers: usize,
    /// permute rows (seed-controlled) before block division
    pub shuffle: bool,
}

impl DnrConfig {
    pub fn new(r_log2: u32, model_kinds: Vec<RequestedKind>, master_seed: u64) -> Self {
        Self {
            r_log2,
            model_kinds,
            mcmc: McmcSettings::default(),
            master_seed,
            workers: 1,
            shuffle: false,
        }
    }

    pub fn subsets(&self) -> usize {
        1usize << self.r_log2
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PhaseTiming {
    pub phase: &'static str,
    pub seconds: f64,
}

/// Everything a pipeline run produced. `fits` and `estimates` are
/// deterministic for fixed (data, config); `timing` is not.
#[derive(Debug)]
pub struct DnrRun {
    pub config: DnrConfig,
    pub subset_seeds: Vec<u64>,
    pub fits: Vec<SubsetFit>,
    pub estimates: BTreeMap<String, DnrEstimate>,
    pub timing: Vec<PhaseTiming>,
    pub warnings: Vec<String>,
}

/// Splits into 2^r_log2 contiguous, order-preserving blocks.
pub fn divide(data: &LogisticData, r_log2: u32) -> Result<Vec<LogisticData>, EngineError> {
    let subsets = 1usize << r_log2;
    let n = data.n();
    if n % subsets != 0 {
        return Err(EngineError::IndivisibleRows { n, subsets });
    }
    let m = n / subsets;
    let mut out = Vec::with_capacity(subsets);
    for s in 0..subsets {
        let rows: Vec<Vec<f64>> = (s * m..(s + 1) * m)
            .map(|i| data.x().row(i).to_vec())
            .collect();
        let y = data.y()[s * m..(s + 1) * m].to_vec();
        let x = DenseMatrix::from_rows(&rows)
            .map_err(|e| EngineError::Model(ModelError::from(e)))?;
        out.push(LogisticData::new(x, y)?);
    }
    Ok(out)
}

/// Seed stream reserved for the row shuffle so it never collides with a
/// subset index.
const SHUFFLE_STREAM: u64 = u64::MAX;

/// Fisher-Yates row permutation, deterministic per seed.
pub fn shuffle_rows(data: &LogisticData, seed: u64) -> LogisticData {
    let n = data.n();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = dnr_core::random::Rng::from_seed(seed);
    for i in (1..n).rev() {
        let j = ((rng.uniform() * (i + 1) as f64) as usize).min(i);
        order.swap(i, j);
    }
    let rows: Vec<Vec<f64>> = order.iter().map(|&i| data.x().row(i).to_vec()).collect();
    let y: Vec<u8> = order.iter().map(|&i| data.y()[i]).collect();
    LogisticData::new(DenseMatrix::from_rows(&rows).unwrap(), y).unwrap()
}

struct SubsetOutput {
    fits: Vec<SubsetFit>,
    warnings: Vec<String>,
}

fn fit_subset(
    subset: &LogisticData,
    index: usize,
    seed: u64,
    config: &DnrConfig,
) -> Result<SubsetOutput, String> {
    let wants = |k: RequestedKind| config.model_kinds.contains(&k);
    let needs_chain = wants(RequestedKind::SnMm) || wants(RequestedKind::Ssn)
        || wants(RequestedKind::NormalMm);
    let needs_sn = wants(RequestedKind::SnMm) || wants(RequestedKind::Ssn);

    let (mle, neg_hess_inv) =
        logistic_mle(subset, 1e-8, 100).map_err(|e| format!("mle: {e}"))?;

    let mut fits = Vec::new();
    let mut warnings = Vec::new();

    if needs_chain {
        let logf = |t: &dnr_core::numkit::DenseVector| {
            logistic_loglik(t, subset).unwrap_or(f64::NEG_INFINITY)
        };
        let mut cfg = McmcConfig::new(mle.clone(), seed);
        cfg.n_draws = config.mcmc.n_draws;
        cfg.burnin = config.mcmc.burnin;
        cfg.thin = config.mcmc.thin;
        let chain = mcmc::sample(logf, &cfg).map_err(|e| format!("mcmc: {e}"))?;

        if needs_sn {
            let mut resample = |attempt: usize| {
                let mut rcfg = cfg.clone();
                rcfg.seed = derive_seed(seed, attempt as u64 + 1);
                mcmc::sample(logf, &rcfg)
            };
            let fit = fit_sn_mm(&chain, 5, Some(&mut resample))
                .map_err(|e| format!("sn fit: {e}"))?;
            if fit.clipped {
                warnings.push(format!("subset {index}: skew-normal fit clipped"));
            }
            fits.push(SubsetFit::sn_fit(
                index,
                fit.params,
                fit.clipped,
                chain.acceptance_rate,
            ));
        }
        if wants(RequestedKind::NormalMm) {
            let normal = fit_normal_mm(&chain).map_err(|e| format!("normal fit: {e}"))?;
            fits.push(SubsetFit::normal_fit(
                index,
                ModelKind::NormalMm,
                normal,
                chain.acceptance_rate,
            ));
        }
    }
    if wants(RequestedKind::NormalLocal) {
        fits.push(SubsetFit::normal_fit(
            index,
            ModelKind::NormalLocal,
            NormalParams {
                mu: mle,
                sigma: neg_hess_inv,
            },
            0.0,
        ));
    }
    Ok(SubsetOutput { fits, warnings })
}

/// Runs the full pipeline: divide, fit per subset in parallel, recombine.
pub fn run_pipeline(data: &LogisticData, config: &DnrConfig) -> Result<DnrRun, EngineError> {
    if config.model_kinds.is_empty() {
        return Err(EngineError::NoKinds);
    }
    let mut timing = Vec::new();

    let t0 = Instant::now();
    let shuffled;
    let input = if config.shuffle {
        shuffled = shuffle_rows(data, derive_seed(config.master_seed, SHUFFLE_STREAM));
        &shuffled
    } else {
        data
    };
    let subsets = divide(input, config.r_log2)?;
    timing.push(PhaseTiming {
        phase: "divide",
        seconds: t0.elapsed().as_secs_f64(),
    });

    let r = subsets.len();
    let subset_seeds: Vec<u64> = (0..r)
        .map(|s| derive_seed(config.master_seed, s as u64))
        .collect();

    let t1 = Instant::now();
    let workers = config.workers.max(1).min(r);
    let slots: Mutex<Vec<Option<Result<SubsetOutput, String>>>> =
        Mutex::new((0..r).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let s = next.fetch_add(1, Ordering::SeqCst);
                if s >= r {
                    break;
                }
                let out = fit_subset(&subsets[s], s, subset_seeds[s], config);
                slots.lock().unwrap()[s] = Some(out);
            });
        }
    });
    timing.push(PhaseTiming {
        phase: "fit",
        seconds: t1.elapsed().as_secs_f64(),
    });

    let mut fits = Vec::new();
    let mut warnings = Vec::new();
    for (s, slot) in slots.into_inner().unwrap().into_iter().enumerate() {
        match slot.expect("every subset slot filled") {
            Ok(out) => {
                fits.extend(out.fits);
                warnings.extend(out.warnings);
            }
            Err(message) => return Err(EngineError::Subset { index: s, message }),
        }
    }

    let t2 = Instant::now();
    let mut estimates = BTreeMap::new();
    let of_kind = |kind: ModelKind| -> Vec<SubsetFit> {
        fits.iter().filter(|f| f.model_kind == kind).cloned().collect()
    };
    for &req in &config.model_kinds {
        let estimate = match req {
            RequestedKind::SnMm => {
                let model = recombine_sn(&of_kind(ModelKind::SnMm))?;
                snmm_estimate(&model, 1e-8, 200)?
            }
            RequestedKind::Ssn => {
                let model = recombine_ssn(&of_kind(ModelKind::SnMm))?;
                ssnmm_estimate(&model, 1e-8, 200)?
            }
            RequestedKind::NormalMm => recombine_normal(&of_kind(ModelKind::NormalMm))?.1,
            RequestedKind::NormalLocal => recombine_normal(&of_kind(ModelKind::NormalLocal))?.1,
        };
        estimates.insert(req.key().to_string(), estimate);
    }
    timing.push(PhaseTiming {
        phase: "recombine",
        seconds: t2.elapsed().as_secs_f64(),
    });

    Ok(DnrRun {
        config: config.clone(),
        subset_seeds,
        fits,
        estimates,
        timing,
        warnings,
    })
}
