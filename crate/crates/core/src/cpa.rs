//! Contour probability assessment: compares highest-density regions of a
//! reference sample against an approximating sample using only log-density
//! ratios to the mode, so normalizing constants never enter.

use alloc::vec::Vec;
use core::fmt;

use crate::numkit::DenseVector;

#[derive(Debug, Clone, PartialEq)]
pub enum CpaError {
    EmptySample,
    /// A reference draw exceeds the supplied mode value; the mode is wrong.
    ModeNotMax { excess: f64 },
    BadThreshold,
}

impl fmt::Display for CpaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CpaError::EmptySample => write!(f, "empty sample"),
            CpaError::ModeNotMax { excess } => {
                write!(f, "mode is not the maximum: a draw exceeds it by {excess}")
            }
            CpaError::BadThreshold => write!(f, "threshold outside (0, 1]"),
        }
    }
}

impl core::error::Error for CpaError {}

/// Contour coverage at a ladder of density thresholds.
///
/// `t[i]` is the reference-sample coverage at threshold `h[i]`, `a[i]` the
/// approximating-sample coverage at the same threshold. A faithful
/// approximation has `a` tracking `t` across the ladder.
#[derive(Clone, Debug)]
pub struct CpaResult {
    pub h: Vec<f64>,
    pub t: Vec<f64>,
    pub a: Vec<f64>,
    pub n1: usize,
    pub n2: usize,
    pub mode_logf: f64,
}

fn log_ratios<F: Fn(&DenseVector) -> f64>(
    log_ref: &F,
    draws: &[DenseVector],
    mode_logf: f64,
) -> Vec<f64> {
    draws.iter().map(|d| log_ref(d) - mode_logf).collect()
}

/// Fraction of `ratios` with density ratio strictly above `h`. Comparing on
/// the density scale keeps the boundary order statistic (whose exp defines
/// the threshold) excluded by exact equality rather than by a log round
/// trip, so coverage is invariant to last-ulp shifts of the log-ratios.
fn coverage(ratios: &[f64], h: f64) -> f64 {
    ratios.iter().filter(|r| libm::exp(**r) > h).count() as f64 / ratios.len() as f64
}

/// Computes density thresholds hitting the reference coverages `targets` as
/// closely as the sample allows: `h_i = exp(rho_(ceil(q * n1)))` with the
/// log-ratios `rho` sorted in descending order.
pub fn thresholds_for_targets<F: Fn(&DenseVector) -> f64>(
    log_ref: F,
    ref_draws: &[DenseVector],
    mode: &DenseVector,
    targets: &[f64],
) -> Result<Vec<f64>, CpaError> {
    if ref_draws.is_empty() {
        return Err(CpaError::EmptySample);
    }
    let mode_logf = log_ref(mode);
    let mut rho = log_ratios(&log_ref, ref_draws, mode_logf);
    check_mode(&rho)?;
    rho.sort_by(|x, y| y.partial_cmp(x).unwrap());
    let n1 = rho.len();
    let mut out = Vec::with_capacity(targets.len());
    for &q in targets {
        if !(q > 0.0 && q <= 1.0) {
            return Err(CpaError::BadThreshold);
        }
        let k = ceil_index(q, n1);
        out.push(libm::exp(rho[k - 1]));
    }
    Ok(out)
}

fn ceil_index(q: f64, n: usize) -> usize {
    let k = libm::ceil(q * n as f64) as usize;
    k.clamp(1, n)
}

const MODE_SLACK: f64 = 1e-6;

fn check_mode(rho: &[f64]) -> Result<(), CpaError> {
    let max = rho.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max > MODE_SLACK {
        return Err(CpaError::ModeNotMax { excess: max });
    }
    Ok(())
}

/// Runs the assessment: `t[i]` and `a[i]` are the fractions of reference and
/// approximating draws whose reference log-density sits within `ln h[i]` of
/// the mode value. Only `log_ref` is ever evaluated, so any constant shift
/// in it cancels exactly.
pub fn cpa_run<F: Fn(&DenseVector) -> f64>(
    log_ref: F,
    ref_draws: &[DenseVector],
    approx_draws: &[DenseVector],
    mode: &DenseVector,
    thresholds: &[f64],
) -> Result<CpaResult, CpaError> {
    if ref_draws.is_empty() || approx_draws.is_empty() {
        return Err(CpaError::EmptySample);
    }
    // slack above 1 admits thresholds built from a mode known only to
    // MODE_SLACK precision
    for &h in thresholds {
        if !(h > 0.0 && h <= 1.01) {
            return Err(CpaError::BadThreshold);
        }
    }
    let mode_logf = log_ref(mode);
    let ref_rho = log_ratios(&log_ref, ref_draws, mode_logf);
    check_mode(&ref_rho)?;
    let approx_rho = log_ratios(&log_ref, approx_draws, mode_logf);

    let mut h = thresholds.to_vec();
    let mut t = Vec::with_capacity(h.len());
    let mut a = Vec::with_capacity(h.len());
    for &hi in &h {
        t.push(coverage(&ref_rho, hi));
        a.push(coverage(&approx_rho, hi));
    }
    // report in ascending reference-coverage order
    let mut order: Vec<usize> = (0..h.len()).collect();
    order.sort_by(|&i, &j| t[i].partial_cmp(&t[j]).unwrap());
    h = order.iter().map(|&i| h[i]).collect();
    let t_sorted: Vec<f64> = order.iter().map(|&i| t[i]).collect();
    a = order.iter().map(|&i| a[i]).collect();

    Ok(CpaResult {
        h,
        t: t_sorted,
        a,
        n1: ref_draws.len(),
        n2: approx_draws.len(),
        mode_logf,
    })
}

/// Largest absolute coverage discrepancy across the ladder.
pub fn max_abs_difference(result: &CpaResult) -> f64 {
    result
        .t
        .iter()
        .zip(&result.a)
        .map(|(t, a)| libm::fabs(a - t))
        .fold(0.0, f64::max)
}
