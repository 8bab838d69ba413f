//! The two reproduction studies: the California exit-poll posterior
//! comparison and the simulated logistic-regression pipeline assessment.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use dnr_core::cpa::{cpa_run, max_abs_difference, thresholds_for_targets, CpaError, CpaResult};
use dnr_core::datamodels::{
    betabinom_log_posterior, betabinom_log_posterior_log_coords, logistic_loglik, logistic_mle,
    County, LogisticData, ModelError, PollData,
};
use dnr_core::mcmc::{self, Chain, McmcConfig, McmcError};
use dnr_core::numkit::{fd_hessian, DenseMatrix, DenseVector, SpdMatrix};
use dnr_core::random::{derive_seed, Rng};
use dnr_core::recombine::{
    fit_normal_mm, recombine_normal, recombine_sn, recombine_ssn, DnrEstimate, ModelKind,
    NormalParams, RecombineError, SubsetFit,
};
use dnr_core::skewnormal::{fit_sn_mm, sn_mode, sn_sample, SnError};
use serde::Serialize;

use crate::engine::{self, DnrConfig, EngineError, McmcSettings, RequestedKind};
use crate::io::{fmt_f64, IoError};

/// fips, total_voters, sample_voters, sample_clinton for the 58 California
/// counties of the Democratic primary exit poll.
pub const EXIT_POLL: [(u32, u64, u64, u64); 58] = [
    (6001, 199445, 100, 52),
    (6003, 241, 198, 94),
    (6005, 3769, 150, 75),
    (6007, 24202, 103, 33),
    (6009, 5126, 104, 54),
    (6011, 1275, 100, 45),
    (6013, 117523, 122, 68),
    (6015, 2388, 179, 81),
    (6017, 20130, 166, 79),
    (6019, 55285, 155, 92),
    (6021, 1321, 177, 95),
    (6023, 19470, 153, 46),
    (6025, 8597, 196, 129),
    (6027, 1749, 124, 53),
    (6029, 33340, 112, 60),
    (6031, 6623, 163, 98),
    (6033, 5189, 127, 62),
    (6035, 1516, 198, 91),
    (6037, 1035968, 144, 61),
    (6039, 8688, 101, 54),
    (6041, 47288, 123, 71),
    (6043, 2048, 115, 62),
    (6045, 7390, 140, 43),
    (6047, 12577, 126, 61),
    (6049, 551, 200, 81),
    (6051, 1681, 118, 61),
    (6053, 30311, 146, 90),
    (6055, 12242, 177, 99),
    (6057, 14154, 187, 75),
    (6059, 226598, 165, 93),
    (6061, 30402, 112, 69),
    (6063, 2747, 173, 65),
    (6065, 123078, 152, 90),
    (6067, 119943, 166, 88),
    (6069, 3504, 101, 62),
    (6071, 124555, 124, 69),
    (6073, 253744, 138, 75),
    (6075, 153003, 140, 83),
    (6077, 42003, 121, 81),
    (6079, 33266, 175, 99),
    (6081, 77763, 189, 118),
    (6083, 46898, 184, 97),
    (6085, 181757, 162, 105),
    (6087, 45486, 150, 59),
    (6089, 12290, 113, 58),
    (6091, 493, 183, 81),
    (6093, 3962, 106, 39),
    (6095, 55903, 177, 106),
    (6097, 88257, 128, 70),
    (6099, 27885, 117, 69),
    (6101, 4340, 120, 65),
    (6103, 3117, 154, 86),
    (6105, 1568, 103, 40),
    (6107, 14414, 168, 106),
    (6109, 5557, 182, 100),
    (6111, 85219, 130, 65),
    (6113, 24260, 163, 81),
    (6115, 3387, 196, 85),
];

pub fn exit_poll_data() -> PollData {
    let counties: Vec<County> = EXIT_POLL
        .iter()
        .map(|&(fips, total_voters, sample_voters, sample_clinton)| County {
            fips,
            total_voters,
            sample_voters,
            sample_clinton,
        })
        .collect();
    PollData::new(counties).expect("embedded table is valid")
}

/// The default contour-probability grid: 0.05 to 0.95 in steps of 0.05.
pub fn target_grid() -> Vec<f64> {
    (1..20).map(|i| i as f64 * 0.05).collect()
}

#[derive(Debug)]
pub enum StudyError {
    Model(ModelError),
    Mcmc(McmcError),
    Sn(SnError),
    Recombine(RecombineError),
    Cpa(CpaError),
    Engine(EngineError),
    Io(IoError),
    ModeSearchFailed,
}

impl fmt::Display for StudyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StudyError::Model(e) => write!(f, "model: {e}"),
            StudyError::Mcmc(e) => write!(f, "mcmc: {e}"),
            StudyError::Sn(e) => write!(f, "skew-normal: {e}"),
            StudyError::Recombine(e) => write!(f, "recombine: {e}"),
            StudyError::Cpa(e) => write!(f, "cpa: {e}"),
            StudyError::Engine(e) => write!(f, "engine: {e}"),
            StudyError::Io(e) => write!(f, "io: {e}"),
            StudyError::ModeSearchFailed => write!(f, "posterior mode search failed"),
        }
    }
}

impl std::error::Error for StudyError {}

macro_rules! from_err {
    ($variant:ident, $ty:ty) => {
        impl From<$ty> for StudyError {
            fn from(e: $ty) -> Self {
                StudyError::$variant(e)
            }
        }
    };
}
from_err!(Model, ModelError);
from_err!(Mcmc, McmcError);
from_err!(Sn, SnError);
from_err!(Recombine, RecombineError);
from_err!(Cpa, CpaError);
from_err!(Engine, EngineError);
from_err!(Io, IoError);

/// Mode of the exit-poll posterior over (alpha, beta), found by a coarse
/// grid in log-coordinates followed by damped Newton with finite-difference
/// derivatives. No Jacobian here: the mode is taken in the (alpha, beta)
/// parametrization the study reports.
pub fn exitpoll_posterior_mode(data: &PollData) -> Result<DenseVector, StudyError> {
    let lp = |uv: &DenseVector| {
        betabinom_log_posterior(uv[0].exp(), uv[1].exp(), data).unwrap_or(f64::NEG_INFINITY)
    };
    let mut best = (f64::NEG_INFINITY, DenseVector::zeros(2));
    let mut u = -2.0;
    while u <= 5.0 + 1e-9 {
        let mut v = -2.0;
        while v <= 5.0 + 1e-9 {
            let x = DenseVector::from(vec![u, v]);
            let f = lp(&x);
            if f > best.0 {
                best = (f, x);
            }
            v += 0.25;
        }
        u += 0.25;
    }
    let mut x = best.1;
    let mut f = best.0;
    if !f.is_finite() {
        return Err(StudyError::ModeSearchFailed);
    }
    for _ in 0..100 {
        let g = dnr_core::numkit::fd_gradient(&lp, &x);
        if g.norm_inf() < 1e-10 {
            return Ok(DenseVector::from(vec![x[0].exp(), x[1].exp()]));
        }
        let h = fd_hessian(&lp, &x);
        let dir = match SpdMatrix::from_symmetric(h.scale(-1.0)) {
            Ok(neg_h) => neg_h.solve(&g).map_err(ModelError::from)?,
            // far from the mode the surface can be non-concave numerically
            Err(_) => g.scale(1.0 / g.norm_inf().max(1.0)),
        };
        let mut step = 1.0;
        loop {
            let cand = x.add(&dir.scale(step));
            let cand_f = lp(&cand);
            if cand_f > f {
                x = cand;
                f = cand_f;
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                return Ok(DenseVector::from(vec![x[0].exp(), x[1].exp()]));
            }
        }
    }
    Ok(DenseVector::from(vec![x[0].exp(), x[1].exp()]))
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeRow {
    pub method: String,
    pub alpha: f64,
    pub beta: f64,
    pub distance: f64,
}

/// One q-q table: the grid plus one quantile column per sample.
#[derive(Clone, Debug, Serialize)]
pub struct QqTable {
    pub q: Vec<f64>,
    pub columns: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug)]
pub struct ExitPollReport {
    pub true_mode: DenseVector,
    pub modes: Vec<ModeRow>,
    pub qq_alpha: QqTable,
    pub qq_beta: QqTable,
    pub cpa: BTreeMap<String, CpaResult>,
    pub warnings: Vec<String>,
    pub seed: u64,
    pub n_draws: usize,
    pub n_compare: usize,
}

fn marginal_quantiles(draws: &[DenseVector], coord: usize, grid: &[f64]) -> Vec<f64> {
    let mut values: Vec<f64> = draws.iter().map(|d| d[coord]).collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.iter()
        .map(|&q| {
            let k = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
            values[k - 1]
        })
        .collect()
}

fn normal_sample(params: &NormalParams, n: usize, seed: u64) -> Vec<DenseVector> {
    let p = params.mu.dim();
    let mut rng = Rng::from_seed(seed);
    (0..n)
        .map(|_| {
            let z = DenseVector::from((0..p).map(|_| rng.standard_normal()).collect::<Vec<_>>());
            params.mu.add(&params.sigma.chol().matvec(&z))
        })
        .collect()
}

/// Runs the full exit-poll comparison: true-posterior MCMC, the three
/// approximations, mode distances, marginal q-q data, and CPA.
pub fn exitpoll_study(
    mcmc: &McmcSettings,
    seed: u64,
    n_compare: usize,
) -> Result<ExitPollReport, StudyError> {
    let (n_draws, burnin) = (mcmc.n_draws, mcmc.burnin);
    let data = exit_poll_data();
    let true_mode = exitpoll_posterior_mode(&data)?;

    // true-posterior sample, drawn in log-coordinates (with the Jacobian)
    // and mapped back
    let logf = |uv: &DenseVector| {
        betabinom_log_posterior_log_coords(uv[0], uv[1], &data).unwrap_or(f64::NEG_INFINITY)
    };
    let init = DenseVector::from(vec![true_mode[0].ln(), true_mode[1].ln()]);
    let mut cfg = McmcConfig::new(init, derive_seed(seed, 1));
    cfg.n_draws = n_draws;
    cfg.burnin = burnin;
    cfg.thin = mcmc.thin;
    let to_ab = |chain: Chain| Chain {
        draws: chain
            .draws
            .iter()
            .map(|d| DenseVector::from(vec![d[0].exp(), d[1].exp()]))
            .collect(),
        ..chain
    };
    let true_chain = to_ab(mcmc::sample(logf, &cfg)?);

    let mut warnings = Vec::new();
    let mut modes = Vec::new();
    let mut cpa = BTreeMap::new();
    let mut samples: BTreeMap<String, Vec<DenseVector>> = BTreeMap::new();

    // MM skew-normal
    {
        let mut resample = |attempt: usize| {
            let mut rcfg = cfg.clone();
            rcfg.seed = derive_seed(seed, 100 + attempt as u64);
            mcmc::sample(logf, &rcfg).map(&to_ab)
        };
        match fit_sn_mm(&true_chain, 5, Some(&mut resample)) {
            Ok(fit) => {
                if fit.clipped {
                    warnings.push("sn: moment fit clipped".into());
                }
                let mode = sn_mode(&fit.params, 1e-8, 200)?;
                modes.push(ModeRow {
                    method: "sn".into(),
                    alpha: mode[0],
                    beta: mode[1],
                    distance: mode.sub(&true_mode).norm2(),
                });
                samples.insert(
                    "sn".into(),
                    sn_sample(&fit.params, n_compare, derive_seed(seed, 2))?,
                );
            }
            Err(e) => warnings.push(format!("sn: fit failed: {e}")),
        }
    }

    // MM normal
    match fit_normal_mm(&true_chain) {
        Ok(params) => {
            modes.push(ModeRow {
                method: "normal_mm".into(),
                alpha: params.mu[0],
                beta: params.mu[1],
                distance: params.mu.sub(&true_mode).norm2(),
            });
            samples.insert(
                "normal_mm".into(),
                normal_sample(&params, n_compare, derive_seed(seed, 3)),
            );
        }
        Err(e) => warnings.push(format!("normal_mm: fit failed: {e}")),
    }

    // Local normal: true mode plus inverse negative Hessian there
    {
        let lp_ab = |ab: &DenseVector| {
            betabinom_log_posterior(ab[0], ab[1], &data).unwrap_or(f64::NEG_INFINITY)
        };
        let h = fd_hessian(&lp_ab, &true_mode);
        match SpdMatrix::from_symmetric(h.scale(-1.0)).and_then(|m| m.inverse()) {
            Ok(sigma) => {
                let params = NormalParams {
                    mu: true_mode.clone(),
                    sigma,
                };
                modes.push(ModeRow {
                    method: "normal_local".into(),
                    alpha: params.mu[0],
                    beta: params.mu[1],
                    distance: 0.0,
                });
                samples.insert(
                    "normal_local".into(),
                    normal_sample(&params, n_compare, derive_seed(seed, 4)),
                );
            }
            Err(e) => warnings.push(format!("normal_local: hessian not invertible: {e}")),
        }
    }

    // q-q data on the 19-point grid
    let grid = target_grid();
    let mut qq_alpha = QqTable {
        q: grid.clone(),
        columns: BTreeMap::new(),
    };
    let mut qq_beta = QqTable {
        q: grid.clone(),
        columns: BTreeMap::new(),
    };
    qq_alpha
        .columns
        .insert("true".into(), marginal_quantiles(&true_chain.draws, 0, &grid));
    qq_beta
        .columns
        .insert("true".into(), marginal_quantiles(&true_chain.draws, 1, &grid));
    for (name, sample) in &samples {
        qq_alpha
            .columns
            .insert(name.clone(), marginal_quantiles(sample, 0, &grid));
        qq_beta
            .columns
            .insert(name.clone(), marginal_quantiles(sample, 1, &grid));
    }

    // CPA against each approximation, sharing the reference thresholds
    let log_ref = |ab: &DenseVector| {
        betabinom_log_posterior(ab[0], ab[1], &data).unwrap_or(f64::NEG_INFINITY)
    };
    let thresholds = thresholds_for_targets(log_ref, &true_chain.draws, &true_mode, &grid)?;
    for (name, sample) in &samples {
        match cpa_run(log_ref, &true_chain.draws, sample, &true_mode, &thresholds) {
            Ok(result) => {
                cpa.insert(name.clone(), result);
            }
            Err(e) => warnings.push(format!("{name}: cpa failed: {e}")),
        }
    }

    Ok(ExitPollReport {
        true_mode,
        modes,
        qq_alpha,
        qq_beta,
        cpa,
        warnings,
        seed,
        n_draws,
        n_compare,
    })
}

/// Knobs of one simulated-logistic experiment.
#[derive(Clone, Debug, Serialize)]
pub struct SimDesign {
    pub runs: usize,
    pub m_log2: u32,
    pub r_log2: u32,
    pub p: usize,
    pub seed: u64,
}

impl SimDesign {
    pub fn n(&self) -> usize {
        1usize << (self.m_log2 + self.r_log2)
    }

    /// The study's coefficient vector: all ones.
    pub fn theta_true(&self) -> DenseVector {
        DenseVector::from(vec![1.0; self.p])
    }
}

/// Simulates one run's dataset: X iid standard normal, y Bernoulli with the
/// logistic link at theta = (1,...,1).
pub fn simulate_logistic(design: &SimDesign, run_index: usize) -> LogisticData {
    let n = design.n();
    let theta = design.theta_true();
    let mut rng = Rng::from_seed(derive_seed(derive_seed(design.seed, run_index as u64), 0));
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..design.p).map(|_| rng.standard_normal()).collect();
        let eta: f64 = row.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
        let pr = 1.0 / (1.0 + (-eta).exp());
        y.push(if rng.uniform() < pr { 1u8 } else { 0u8 });
        rows.push(row);
    }
    LogisticData::new(DenseMatrix::from_rows(&rows).unwrap(), y)
        .expect("simulated data is well formed")
}

#[derive(Debug)]
pub struct LogisticRunReport {
    pub run_index: usize,
    pub theta_full: DenseVector,
    pub cov_full: SpdMatrix,
    pub estimates: BTreeMap<String, DnrEstimate>,
    pub cpa: BTreeMap<String, CpaResult>,
    pub warnings: Vec<String>,
}

impl LogisticRunReport {
    pub fn mean_abs_diff(&self, method: &str) -> Option<f64> {
        self.cpa.get(method).map(|r| {
            r.t.iter()
                .zip(&r.a)
                .map(|(t, a)| (a - t).abs())
                .sum::<f64>()
                / r.t.len() as f64
        })
    }
}

/// One run of the logistic D&R study: full-data reference, pipeline fits,
/// and CPA of every recombined approximation against the true likelihood.
pub fn logistic_run(
    design: &SimDesign,
    run_index: usize,
    mcmc: &McmcSettings,
    workers: usize,
    n_compare: usize,
) -> Result<LogisticRunReport, StudyError> {
    let run_seed = derive_seed(design.seed, run_index as u64);
    let data = simulate_logistic(design, run_index);
    let (theta_full, cov_full) = logistic_mle(&data, 1e-8, 100)?;

    // reference sample from the true likelihood
    let log_ref = |t: &DenseVector| logistic_loglik(t, &data).unwrap_or(f64::NEG_INFINITY);
    let mut ref_cfg = McmcConfig::new(theta_full.clone(), derive_seed(run_seed, 1));
    ref_cfg.n_draws = n_compare;
    ref_cfg.burnin = mcmc.burnin;
    ref_cfg.thin = mcmc.thin;
    let ref_chain = mcmc::sample(&log_ref, &ref_cfg)?;

    // D&R pipeline
    let mut config = DnrConfig::new(
        design.r_log2,
        vec![
            RequestedKind::SnMm,
            RequestedKind::Ssn,
            RequestedKind::NormalMm,
            RequestedKind::NormalLocal,
        ],
        derive_seed(run_seed, 2),
    );
    config.mcmc = mcmc.clone();
    config.workers = workers;
    let run = engine::run_pipeline(&data, &config)?;
    let mut warnings = run.warnings.clone();

    // samples from each recombined approximation
    let of_kind = |kind: ModelKind| -> Vec<SubsetFit> {
        run.fits
            .iter()
            .filter(|f| f.model_kind == kind)
            .cloned()
            .collect()
    };
    let mut samples: BTreeMap<String, Vec<DenseVector>> = BTreeMap::new();

    let sn_model = recombine_sn(&of_kind(ModelKind::SnMm))?;
    let sn_start = run.estimates["sn_mm"].theta_hat.clone();
    let mut sn_cfg = McmcConfig::new(sn_start, derive_seed(run_seed, 3));
    sn_cfg.n_draws = n_compare;
    sn_cfg.burnin = mcmc.burnin;
    sn_cfg.thin = mcmc.thin;
    let sn_chain = mcmc::sample(
        |t| sn_model.loglik(t).unwrap_or(f64::NEG_INFINITY),
        &sn_cfg,
    )?;
    samples.insert("sn".into(), sn_chain.draws);

    let ssn_model = recombine_ssn(&of_kind(ModelKind::SnMm))?;
    let ssn_start = run.estimates["ssn"].theta_hat.clone();
    let mut ssn_cfg = McmcConfig::new(ssn_start, derive_seed(run_seed, 4));
    ssn_cfg.n_draws = n_compare;
    ssn_cfg.burnin = mcmc.burnin;
    ssn_cfg.thin = mcmc.thin;
    let ssn_chain = mcmc::sample(
        |t| ssn_model.loglik(t).unwrap_or(f64::NEG_INFINITY),
        &ssn_cfg,
    )?;
    samples.insert("ssn".into(), ssn_chain.draws);

    // the recombined normals are sampled directly: a product of normals is
    // normal, unlike the skew-normal case
    let (nmm, _) = recombine_normal(&of_kind(ModelKind::NormalMm))?;
    samples.insert(
        "normal_mm".into(),
        normal_sample(&nmm, n_compare, derive_seed(run_seed, 5)),
    );
    let (nloc, _) = recombine_normal(&of_kind(ModelKind::NormalLocal))?;
    samples.insert(
        "normal_local".into(),
        normal_sample(&nloc, n_compare, derive_seed(run_seed, 6)),
    );

    let grid = target_grid();
    let thresholds = thresholds_for_targets(&log_ref, &ref_chain.draws, &theta_full, &grid)?;
    let mut cpa = BTreeMap::new();
    for (name, sample) in &samples {
        match cpa_run(&log_ref, &ref_chain.draws, sample, &theta_full, &thresholds) {
            Ok(result) => {
                cpa.insert(name.clone(), result);
            }
            Err(e) => warnings.push(format!("{name}: cpa failed: {e}")),
        }
    }

    Ok(LogisticRunReport {
        run_index,
        theta_full,
        cov_full,
        estimates: run.estimates,
        cpa,
        warnings,
    })
}

/// Runs the study over the requested run indices; failed runs are reported
/// in the error list, not fatal.
pub fn logistic_study(
    design: &SimDesign,
    mcmc: &McmcSettings,
    workers: usize,
    n_compare: usize,
) -> (Vec<LogisticRunReport>, Vec<String>) {
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for run_index in 0..design.runs {
        match logistic_run(design, run_index, mcmc, workers, n_compare) {
            Ok(report) => reports.push(report),
            Err(e) => failures.push(format!("run {run_index}: {e}")),
        }
    }
    (reports, failures)
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes modes.csv, qq_alpha.csv, qq_beta.csv, cpa_<method>.csv, and
/// summary.json into `dir`.
pub fn write_exitpoll_report(dir: &Path, report: &ExitPollReport) -> Result<(), IoError> {
    fs::create_dir_all(dir)?;
    let mode_rows: Vec<Vec<String>> = report
        .modes
        .iter()
        .map(|m| {
            vec![
                m.method.clone(),
                fmt_f64(m.alpha),
                fmt_f64(m.beta),
                fmt_f64(m.distance),
            ]
        })
        .collect();
    write_csv(
        &dir.join("modes.csv"),
        &["method", "alpha", "beta", "distance"],
        &mode_rows,
    )?;

    for (name, table) in [("qq_alpha.csv", &report.qq_alpha), ("qq_beta.csv", &report.qq_beta)] {
        let mut header = vec!["q".to_string()];
        header.extend(table.columns.keys().cloned());
        let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        let rows: Vec<Vec<String>> = table
            .q
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let mut row = vec![fmt_f64(*q)];
                row.extend(table.columns.values().map(|col| fmt_f64(col[i])));
                row
            })
            .collect();
        write_csv(&dir.join(name), &header_refs, &rows)?;
    }

    for (method, result) in &report.cpa {
        let rows: Vec<Vec<String>> = (0..result.h.len())
            .map(|i| {
                vec![
                    fmt_f64(result.h[i]),
                    fmt_f64(result.t[i]),
                    fmt_f64(result.a[i]),
                    fmt_f64(result.a[i] - result.t[i]),
                ]
            })
            .collect();
        write_csv(
            &dir.join(format!("cpa_{method}.csv")),
            &["h", "T", "A", "diff"],
            &rows,
        )?;
    }

    #[derive(Serialize)]
    struct Summary<'a> {
        schema_version: u32,
        seed: u64,
        n_draws: usize,
        n_compare: usize,
        true_mode: &'a DenseVector,
        modes: &'a [ModeRow],
        cpa_max_abs_diff: BTreeMap<String, f64>,
        warnings: &'a [String],
    }
    let summary = Summary {
        schema_version: crate::io::SCHEMA_VERSION,
        seed: report.seed,
        n_draws: report.n_draws,
        n_compare: report.n_compare,
        true_mode: &report.true_mode,
        modes: &report.modes,
        cpa_max_abs_diff: report
            .cpa
            .iter()
            .map(|(k, v)| (k.clone(), max_abs_difference(v)))
            .collect(),
        warnings: &report.warnings,
    };
    crate::io::write_json(&dir.join("summary.json"), &summary)
}

/// Writes cpa_<method>.csv (one file per method, rows tagged by run) and
/// summary.json into `dir`.
pub fn write_logistic_report(
    dir: &Path,
    design: &SimDesign,
    reports: &[LogisticRunReport],
    failures: &[String],
) -> Result<(), IoError> {
    fs::create_dir_all(dir)?;
    let methods: Vec<String> = reports
        .first()
        .map(|r| r.cpa.keys().cloned().collect())
        .unwrap_or_default();
    for method in &methods {
        let mut rows = Vec::new();
        for report in reports {
            if let Some(result) = report.cpa.get(method) {
                for i in 0..result.h.len() {
                    rows.push(vec![
                        report.run_index.to_string(),
                        fmt_f64(result.h[i]),
                        fmt_f64(result.t[i]),
                        fmt_f64(result.a[i]),
                        fmt_f64(result.a[i] - result.t[i]),
                    ]);
                }
            }
        }
        write_csv(
            &dir.join(format!("cpa_{method}.csv")),
            &["run", "h", "T", "A", "diff"],
            &rows,
        )?;
    }

    #[derive(Serialize)]
    struct RunSummary {
        run_index: usize,
        theta_full: Vec<f64>,
        snmm_distance_to_full: Option<f64>,
        mean_abs_diff: BTreeMap<String, f64>,
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        schema_version: u32,
        design: &'a SimDesign,
        runs: Vec<RunSummary>,
        failures: &'a [String],
    }
    let summary = Summary {
        schema_version: crate::io::SCHEMA_VERSION,
        design,
        runs: reports
            .iter()
            .map(|r| RunSummary {
                run_index: r.run_index,
                theta_full: r.theta_full.as_slice().to_vec(),
                snmm_distance_to_full: r
                    .estimates
                    .get("sn_mm")
                    .map(|e| e.theta_hat.sub(&r.theta_full).norm2()),
                mean_abs_diff: r
                    .cpa
                    .keys()
                    .filter_map(|m| r.mean_abs_diff(m).map(|v| (m.clone(), v)))
                    .collect(),
            })
            .collect(),
        failures,
    };
    crate::io::write_json(&dir.join("summary.json"), &summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_poll_table_shape_and_spots() {
        assert_eq!(EXIT_POLL.len(), 58);
        let data = exit_poll_data();
        let counties = data.counties();
        assert_eq!(counties[0].fips, 6001);
        assert_eq!(counties[0].total_voters, 199445);
        assert_eq!(counties[0].sample_voters, 100);
        assert_eq!(counties[0].sample_clinton, 52);
        let last = counties.last().unwrap();
        assert_eq!(last.fips, 6115);
        assert_eq!(last.total_voters, 3387);
        assert_eq!(last.sample_voters, 196);
        assert_eq!(last.sample_clinton, 85);
        for c in counties {
            assert!(c.sample_clinton <= c.sample_voters);
        }
        // pinned column checksums guard against transcription drift
        let sum_total: u64 = counties.iter().map(|c| c.total_voters).sum();
        let sum_voters: u64 = counties.iter().map(|c| c.sample_voters).sum();
        let sum_clinton: u64 = counties.iter().map(|c| c.sample_clinton).sum();
        assert_eq!(sum_voters, 8496);
        assert_eq!(sum_clinton, 4369);
        assert_eq!(sum_total, 3475486);
    }

    #[test]
    fn target_grid_is_19_points() {
        let grid = target_grid();
        assert_eq!(grid.len(), 19);
        assert!((grid[0] - 0.05).abs() < 1e-12);
        assert!((grid[18] - 0.95).abs() < 1e-12);
    }

    #[test]
    fn simulate_deterministic_and_sized() {
        let design = SimDesign {
            runs: 1,
            m_log2: 4,
            r_log2: 2,
            p: 3,
            seed: 7,
        };
        let a = simulate_logistic(&design, 0);
        let b = simulate_logistic(&design, 0);
        let c = simulate_logistic(&design, 1);
        assert_eq!(a.n(), 64);
        assert_eq!(a.p(), 3);
        assert_eq!(a.y(), b.y());
        assert_ne!(a.y(), c.y());
        for i in 0..a.n() {
            assert_eq!(a.x().row(i), b.x().row(i));
        }
    }

    #[test]
    fn simulate_response_rate_matches_oracle() {
        // E[sigma(sum of p iid normals)] by direct Monte Carlo
        let design = SimDesign {
            runs: 1,
            m_log2: 10,
            r_log2: 4,
            p: 5,
            seed: 33,
        };
        let data = simulate_logistic(&design, 0);
        let rate = data.y().iter().map(|&v| v as f64).sum::<f64>() / data.n() as f64;
        let mut rng = Rng::from_seed(9001);
        let mut expect = 0.0;
        let trials = 200_000;
        for _ in 0..trials {
            let eta: f64 = (0..5).map(|_| rng.standard_normal()).sum();
            expect += 1.0 / (1.0 + (-eta).exp());
        }
        expect /= trials as f64;
        assert!(
            (rate - expect).abs() < 0.02,
            "rate = {rate}, expect = {expect}"
        );
    }

    #[test]
    fn posterior_mode_is_a_maximum() {
        let data = exit_poll_data();
        let mode = exitpoll_posterior_mode(&data).unwrap();
        assert!(mode[0] > 0.0 && mode[1] > 0.0);
        let f0 = betabinom_log_posterior(mode[0], mode[1], &data).unwrap();
        for (da, db) in [(0.05, 0.0), (-0.05, 0.0), (0.0, 0.05), (0.0, -0.05), (0.03, -0.03)] {
            let f = betabinom_log_posterior(mode[0] + da, mode[1] + db, &data).unwrap();
            assert!(f <= f0, "({da},{db}): {f} > {f0}");
        }
    }
}
