//! The two data models: logistic regression and the beta-binomial
//! hierarchical exit-poll model, each exposed as an unnormalized
//! log-likelihood / log-posterior with derivatives where defined.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::numkit::{log_gamma, DenseMatrix, DenseVector, NumError, SpdMatrix};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelError {
    DimensionMismatch,
    DomainError,
    /// Newton did not converge within the iteration budget; for logistic
    /// regression this usually signals complete separation.
    NoConverge(usize),
    SingularInformation,
    BadData,
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::DimensionMismatch => write!(f, "dimension mismatch"),
            ModelError::DomainError => write!(f, "parameter outside domain"),
            ModelError::NoConverge(n) => write!(f, "no convergence after {n} iterations"),
            ModelError::SingularInformation => write!(f, "singular observed information"),
            ModelError::BadData => write!(f, "invalid data"),
        }
    }
}

impl core::error::Error for ModelError {}

impl From<NumError> for ModelError {
    fn from(e: NumError) -> Self {
        match e {
            NumError::NotPositiveDefinite | NumError::NotSymmetric => {
                ModelError::SingularInformation
            }
            NumError::DomainError => ModelError::DomainError,
            _ => ModelError::DimensionMismatch,
        }
    }
}

/// Bernoulli responses with a logistic link on X theta.
#[derive(Clone, Debug)]
pub struct LogisticData {
    x: DenseMatrix,
    y: Vec<u8>,
}

impl LogisticData {
    pub fn new(x: DenseMatrix, y: Vec<u8>) -> Result<Self, ModelError> {
        if x.rows() != y.len() || y.iter().any(|&v| v > 1) {
            return Err(ModelError::BadData);
        }
        Ok(Self { x, y })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn x(&self) -> &DenseMatrix {
        &self.x
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }
}

/// log(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// sum_i [y_i eta_i - log(1 + exp(eta_i))] with eta = X theta.
pub fn logistic_loglik(theta: &DenseVector, data: &LogisticData) -> Result<f64, ModelError> {
    if theta.dim() != data.p() {
        return Err(ModelError::DimensionMismatch);
    }
    let mut ll = 0.0;
    for (i, &yi) in data.y.iter().enumerate() {
        let eta: f64 = data
            .x
            .row(i)
            .iter()
            .zip(theta.iter())
            .map(|(a, b)| a * b)
            .sum();
        ll += yi as f64 * eta - softplus(eta);
    }
    Ok(ll)
}

/// X^T (y - sigmoid(X theta)).
pub fn logistic_grad(theta: &DenseVector, data: &LogisticData) -> Result<DenseVector, ModelError> {
    if theta.dim() != data.p() {
        return Err(ModelError::DimensionMismatch);
    }
    let p = data.p();
    let mut g = vec![0.0; p];
    for (i, &yi) in data.y.iter().enumerate() {
        let row = data.x.row(i);
        let eta: f64 = row.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
        let r = yi as f64 - sigmoid(eta);
        for (gj, xj) in g.iter_mut().zip(row) {
            *gj += r * xj;
        }
    }
    Ok(DenseVector::from(g))
}

/// -X^T W X with W = diag(sigma (1 - sigma)); negative semidefinite.
pub fn logistic_hess(theta: &DenseVector, data: &LogisticData) -> Result<DenseMatrix, ModelError> {
    if theta.dim() != data.p() {
        return Err(ModelError::DimensionMismatch);
    }
    let p = data.p();
    let mut h = DenseMatrix::zeros(p, p);
    for i in 0..data.n() {
        let row = data.x.row(i);
        let eta: f64 = row.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
        let s = sigmoid(eta);
        let w = s * (1.0 - s);
        for j in 0..p {
            let wxj = w * row[j];
            for k in j..p {
                h[(j, k)] -= wxj * row[k];
            }
        }
    }
    for j in 0..p {
        for k in (j + 1)..p {
            h[(k, j)] = h[(j, k)];
        }
    }
    Ok(h)
}

/// Coefficients beyond this magnitude mean fitted probabilities within 1e-13
/// of 0/1: the likelihood is maximized at infinity (complete separation).
const SEPARATION_BOUND: f64 = 30.0;

/// The logistic log-likelihood has supremum 0 exactly when the data are
/// completely separated; reaching this close to 0 means no finite maximizer.
const PERFECT_FIT_TOL: f64 = 1e-6;

/// Newton MLE with Armijo backtracking from theta = 0.
///
/// Returns the maximizer and the inverse observed Fisher information
/// (-Hessian)^{-1} at the optimum.
pub fn logistic_mle(
    data: &LogisticData,
    tol: f64,
    max_iter: usize,
) -> Result<(DenseVector, SpdMatrix), ModelError> {
    let p = data.p();
    let mut theta = DenseVector::zeros(p);
    let mut ll = logistic_loglik(&theta, data)?;
    for _ in 0..max_iter {
        let g = logistic_grad(&theta, data)?;
        let h = logistic_hess(&theta, data)?;
        let neg_h = SpdMatrix::from_symmetric(h.scale(-1.0))
            .map_err(|_| ModelError::SingularInformation)?;
        if g.norm_inf() <= tol {
            return Ok((theta, neg_h.inverse()?));
        }
        let dir = neg_h.solve(&g)?;
        let slope = g.dot(&dir);
        // near the optimum the Armijo increase falls below the rounding
        // resolution of ll; the full Newton step is still the right move
        let slack = 1e-12 * (1.0 + libm::fabs(ll));
        let mut step = 1.0;
        loop {
            let cand = theta.add(&dir.scale(step));
            let cand_ll = logistic_loglik(&cand, data)?;
            if cand_ll >= ll + 1e-4 * step * slope || (step == 1.0 && cand_ll >= ll - slack) {
                theta = cand;
                ll = cand_ll;
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                return Err(ModelError::NoConverge(max_iter));
            }
        }
        if theta.norm_inf() > SEPARATION_BOUND || ll > -PERFECT_FIT_TOL {
            return Err(ModelError::NoConverge(max_iter));
        }
    }
    Err(ModelError::NoConverge(max_iter))
}

/// One county of the exit-poll table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct County {
    pub fips: u32,
    pub total_voters: u64,
    pub sample_voters: u64,
    pub sample_clinton: u64,
}

/// Exit-poll counts; `total_voters` is carried but unused by the model.
#[derive(Clone, Debug)]
pub struct PollData {
    counties: Vec<County>,
}

impl PollData {
    pub fn new(counties: Vec<County>) -> Result<Self, ModelError> {
        if counties.is_empty() {
            return Err(ModelError::BadData);
        }
        for c in &counties {
            if c.sample_voters < 1 || c.sample_clinton > c.sample_voters {
                return Err(ModelError::BadData);
            }
        }
        let d = Self { counties };
        if !check_propriety(&d) {
            return Err(ModelError::BadData);
        }
        Ok(d)
    }

    /// Constructor that skips the propriety requirement (for testing the
    /// check itself).
    pub fn new_unchecked(counties: Vec<County>) -> Self {
        Self { counties }
    }

    pub fn counties(&self) -> &[County] {
        &self.counties
    }
}

/// The posterior is proper iff some county has 0 < y_j < n_j.
pub fn check_propriety(data: &PollData) -> bool {
    data.counties
        .iter()
        .any(|c| c.sample_clinton > 0 && c.sample_clinton < c.sample_voters)
}

/// Unnormalized marginal log posterior of the beta-binomial hyper-parameters:
/// -(5/2) ln(a+b) + J [lnG(a+b) - lnG(a) - lnG(b)]
///   + sum_j [lnG(a+y_j) + lnG(b+n_j-y_j) - lnG(a+b+n_j)].
pub fn betabinom_log_posterior(
    alpha: f64,
    beta: f64,
    data: &PollData,
) -> Result<f64, ModelError> {
    if !(alpha > 0.0) || !(beta > 0.0) {
        return Err(ModelError::DomainError);
    }
    let j = data.counties.len() as f64;
    let mut lp = -2.5 * libm::log(alpha + beta)
        + j * (log_gamma(alpha + beta)? - log_gamma(alpha)? - log_gamma(beta)?);
    for c in &data.counties {
        let y = c.sample_clinton as f64;
        let n = c.sample_voters as f64;
        lp += log_gamma(alpha + y)? + log_gamma(beta + n - y)? - log_gamma(alpha + beta + n)?;
    }
    Ok(lp)
}

/// Same posterior in (log alpha, log beta) coordinates, including the
/// log-Jacobian (+u +v) of the transformation; this is what MCMC samples so
/// that positivity never has to be enforced by rejection.
pub fn betabinom_log_posterior_log_coords(
    u: f64,
    v: f64,
    data: &PollData,
) -> Result<f64, ModelError> {
    let alpha = libm::exp(u);
    let beta = libm::exp(v);
    if alpha == 0.0 || beta == 0.0 || !alpha.is_finite() || !beta.is_finite() {
        return Err(ModelError::DomainError);
    }
    Ok(betabinom_log_posterior(alpha, beta, data)? + u + v)
}
