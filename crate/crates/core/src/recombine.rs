//! Fitting subset likelihood models and recombining them into the all-data
//! approximate log-likelihood, point estimates, and covariance.
//!
//! The pooled precision is the sum of subset precisions and the pooled
//! location is the precision-weighted combination, reduced in ascending
//! subset-index order so results are bit-identical no matter how the fits
//! were produced or stored.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::datamodels::{logistic_mle, LogisticData, ModelError};
use crate::mcmc::Chain;
use crate::numkit::{
    log_cdf_second_deriv, mills_ratio, sample_moments, std_normal_log_cdf, DenseMatrix,
    DenseVector, NumError, SpdMatrix,
};
use crate::skewnormal::SnParams;

#[derive(Debug, Clone, PartialEq)]
pub enum RecombineError {
    EmptyFits,
    DimensionMismatch,
    ScaleNotPd,
    /// a fit does not carry the parameters its model kind requires
    MissingParams { subset_index: usize },
    NoConverge(usize),
    SingularInformation,
    Numeric(NumError),
    Model(ModelError),
}

impl fmt::Display for RecombineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecombineError::EmptyFits => write!(f, "no subset fits"),
            RecombineError::DimensionMismatch => write!(f, "dimension mismatch"),
            RecombineError::ScaleNotPd => write!(f, "covariance not positive definite"),
            RecombineError::MissingParams { subset_index } => {
                write!(f, "fit for subset {subset_index} lacks required parameters")
            }
            RecombineError::NoConverge(n) => write!(f, "optimizer hit iteration cap {n}"),
            RecombineError::SingularInformation => write!(f, "singular observed information"),
            RecombineError::Numeric(e) => write!(f, "numeric failure: {e}"),
            RecombineError::Model(e) => write!(f, "data-model failure: {e}"),
        }
    }
}

impl core::error::Error for RecombineError {}

impl From<NumError> for RecombineError {
    fn from(e: NumError) -> Self {
        match e {
            NumError::NotPositiveDefinite => RecombineError::ScaleNotPd,
            NumError::DimensionMismatch => RecombineError::DimensionMismatch,
            e => RecombineError::Numeric(e),
        }
    }
}

impl From<ModelError> for RecombineError {
    fn from(e: ModelError) -> Self {
        RecombineError::Model(e)
    }
}

/// Mean/covariance pair of a fitted normal likelihood model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormalParams {
    pub mu: DenseVector,
    pub sigma: SpdMatrix,
}

/// Which likelihood model a subset fit carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    SnMm,
    NormalMm,
    NormalLocal,
}

/// One subset's fitted likelihood-model parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubsetFit {
    pub subset_index: usize,
    pub model_kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sn: Option<SnParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<NormalParams>,
    pub clipped: bool,
    pub mcmc_acceptance: f64,
}

impl SubsetFit {
    pub fn sn_fit(subset_index: usize, params: SnParams, clipped: bool, acc: f64) -> Self {
        Self {
            subset_index,
            model_kind: ModelKind::SnMm,
            sn: Some(params),
            normal: None,
            clipped,
            mcmc_acceptance: acc,
        }
    }

    pub fn normal_fit(subset_index: usize, kind: ModelKind, params: NormalParams, acc: f64) -> Self {
        Self {
            subset_index,
            model_kind: kind,
            sn: None,
            normal: Some(params),
            clipped: false,
            mcmc_acceptance: acc,
        }
    }
}

/// The three D&R point estimators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Nmm,
    Snmm,
    Ssnmm,
}

/// A recombined point estimate with its observed-information covariance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DnrEstimate {
    pub theta_hat: DenseVector,
    pub covariance: SpdMatrix,
    pub estimator_kind: EstimatorKind,
    pub optimizer_iters: usize,
    pub grad_norm: f64,
}

/// Moment-matching normal fit: sample mean and covariance of the draws.
pub fn fit_normal_mm(chain: &Chain) -> Result<NormalParams, RecombineError> {
    if chain.draws.is_empty() {
        return Err(RecombineError::EmptyFits);
    }
    let p = chain.draws[0].dim();
    if chain.draws.len() < p + 2 {
        return Err(RecombineError::Numeric(NumError::TooFewDraws));
    }
    let m = sample_moments(&chain.draws)?;
    Ok(NormalParams {
        mu: m.mu,
        sigma: m.sigma,
    })
}

/// Local-information normal fit: subset MLE plus inverse observed Fisher
/// information.
pub fn fit_normal_local(data: &LogisticData) -> Result<NormalParams, RecombineError> {
    let (mu, sigma) = logistic_mle(data, 1e-8, 100)?;
    Ok(NormalParams { mu, sigma })
}

fn sorted_by_subset<'a>(fits: &'a [SubsetFit]) -> Vec<&'a SubsetFit> {
    let mut v: Vec<&SubsetFit> = fits.iter().collect();
    v.sort_by_key(|f| f.subset_index);
    v
}

/// Precision-weighted pooling of normal subset fits; closed form, no
/// iteration. Returns the pooled model and the NMM estimate.
pub fn recombine_normal(
    fits: &[SubsetFit],
) -> Result<(NormalParams, DnrEstimate), RecombineError> {
    let sorted = sorted_by_subset(fits);
    if sorted.is_empty() {
        return Err(RecombineError::EmptyFits);
    }
    let first = sorted[0]
        .normal
        .as_ref()
        .ok_or(RecombineError::MissingParams {
            subset_index: sorted[0].subset_index,
        })?;
    let p = first.mu.dim();
    if sorted.len() == 1 {
        // R = 1: the pooled model is the single fit, exactly (no inversion
        // round trip)
        let params = NormalParams {
            mu: first.mu.clone(),
            sigma: first.sigma.clone(),
        };
        let estimate = DnrEstimate {
            theta_hat: params.mu.clone(),
            covariance: params.sigma.clone(),
            estimator_kind: EstimatorKind::Nmm,
            optimizer_iters: 0,
            grad_norm: 0.0,
        };
        return Ok((params, estimate));
    }
    let mut precision_sum = DenseMatrix::zeros(p, p);
    let mut weighted_mu = DenseVector::zeros(p);
    for fit in &sorted {
        let normal = fit.normal.as_ref().ok_or(RecombineError::MissingParams {
            subset_index: fit.subset_index,
        })?;
        if normal.mu.dim() != p {
            return Err(RecombineError::DimensionMismatch);
        }
        let prec = normal.sigma.inverse()?;
        precision_sum = precision_sum.add(prec.base());
        weighted_mu = weighted_mu.add(&prec.mul_vec(&normal.mu));
    }
    let precision = SpdMatrix::from_symmetric(precision_sum)?;
    let sigma = precision.inverse()?;
    let mu = sigma.mul_vec(&weighted_mu);
    let estimate = DnrEstimate {
        theta_hat: mu.clone(),
        covariance: sigma.clone(),
        estimator_kind: EstimatorKind::Nmm,
        optimizer_iters: 0,
        grad_norm: 0.0,
    };
    Ok((NormalParams { mu, sigma }, estimate))
}

/// One per-subset skewing term of the recombined skew-normal log-likelihood.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SkewTerm {
    pub lambda: DenseVector,
    pub xi: DenseVector,
}

/// The recombined skew-normal model: pooled quadratic part plus one log Phi
/// term per subset.
#[derive(Clone, Debug)]
pub struct SnModel {
    precision: SpdMatrix,
    scale: SpdMatrix,
    location: DenseVector,
    terms: Vec<SkewTerm>,
}

impl SnModel {
    pub fn dim(&self) -> usize {
        self.location.dim()
    }

    pub fn location(&self) -> &DenseVector {
        &self.location
    }

    pub fn scale(&self) -> &SpdMatrix {
        &self.scale
    }

    pub fn precision(&self) -> &SpdMatrix {
        &self.precision
    }

    pub fn terms(&self) -> &[SkewTerm] {
        &self.terms
    }

    /// l(theta) = -1/2 (theta-xi)' Omega^{-1} (theta-xi)
    ///   + sum_s log Phi(lambda_s'(theta - xi_s)); the arbitrary constant is 0.
    pub fn loglik(&self, theta: &DenseVector) -> Result<f64, RecombineError> {
        if theta.dim() != self.dim() {
            return Err(RecombineError::DimensionMismatch);
        }
        let centered = theta.sub(&self.location);
        let mut v = -0.5 * self.precision.base().quad_form(&centered);
        for term in &self.terms {
            v += std_normal_log_cdf(term.lambda.dot(&theta.sub(&term.xi)));
        }
        Ok(v)
    }

    pub fn grad(&self, theta: &DenseVector) -> Result<DenseVector, RecombineError> {
        if theta.dim() != self.dim() {
            return Err(RecombineError::DimensionMismatch);
        }
        let centered = theta.sub(&self.location);
        let mut g = self.precision.mul_vec(&centered).scale(-1.0);
        for term in &self.terms {
            let t = term.lambda.dot(&theta.sub(&term.xi));
            g = g.add(&term.lambda.scale(mills_ratio(t)));
        }
        Ok(g)
    }

    pub fn hess(&self, theta: &DenseVector) -> Result<DenseMatrix, RecombineError> {
        if theta.dim() != self.dim() {
            return Err(RecombineError::DimensionMismatch);
        }
        let mut h = self.precision.base().scale(-1.0);
        for term in &self.terms {
            let t = term.lambda.dot(&theta.sub(&term.xi));
            h = h.add(
                &DenseMatrix::outer(&term.lambda, &term.lambda).scale(log_cdf_second_deriv(t)),
            );
        }
        Ok(h)
    }
}

/// Pools skew-normal subset fits into the recombined model.
pub fn recombine_sn(fits: &[SubsetFit]) -> Result<SnModel, RecombineError> {
    let sorted = sorted_by_subset(fits);
    if sorted.is_empty() {
        return Err(RecombineError::EmptyFits);
    }
    let first = sorted[0].sn.as_ref().ok_or(RecombineError::MissingParams {
        subset_index: sorted[0].subset_index,
    })?;
    let p = first.dim();
    let mut precision_sum = DenseMatrix::zeros(p, p);
    let mut weighted_xi = DenseVector::zeros(p);
    let mut terms = Vec::with_capacity(sorted.len());
    for fit in &sorted {
        let sn = fit.sn.as_ref().ok_or(RecombineError::MissingParams {
            subset_index: fit.subset_index,
        })?;
        if sn.dim() != p {
            return Err(RecombineError::DimensionMismatch);
        }
        let prec = sn.omega().inverse()?;
        precision_sum = precision_sum.add(prec.base());
        weighted_xi = weighted_xi.add(&prec.mul_vec(sn.xi()));
        terms.push(SkewTerm {
            lambda: sn.lambda().clone(),
            xi: sn.xi().clone(),
        });
    }
    let precision = SpdMatrix::from_symmetric(precision_sum)?;
    let scale = precision.inverse()?;
    let location = scale.mul_vec(&weighted_xi);
    Ok(SnModel {
        precision,
        scale,
        location,
        terms,
    })
}

/// The simplified recombined model: a single averaged skewing term scaled by
/// the subset count R.
#[derive(Clone, Debug)]
pub struct SsnModel {
    precision: SpdMatrix,
    scale: SpdMatrix,
    location: DenseVector,
    lambda_avg: DenseVector,
    xi_avg: DenseVector,
    r: usize,
}

impl SsnModel {
    /// Derives the simplified model from the same per-subset terms as the
    /// full one; there is no separate fitting path.
    pub fn from_sn(model: &SnModel) -> Self {
        let p = model.dim();
        let r = model.terms.len();
        let mut lambda_avg = DenseVector::zeros(p);
        let mut xi_avg = DenseVector::zeros(p);
        for term in &model.terms {
            lambda_avg = lambda_avg.add(&term.lambda);
            xi_avg = xi_avg.add(&term.xi);
        }
        let inv_r = 1.0 / r as f64;
        Self {
            precision: model.precision.clone(),
            scale: model.scale.clone(),
            location: model.location.clone(),
            lambda_avg: lambda_avg.scale(inv_r),
            xi_avg: xi_avg.scale(inv_r),
            r,
        }
    }

    pub fn dim(&self) -> usize {
        self.location.dim()
    }

    pub fn location(&self) -> &DenseVector {
        &self.location
    }

    pub fn scale(&self) -> &SpdMatrix {
        &self.scale
    }

    pub fn loglik(&self, theta: &DenseVector) -> Result<f64, RecombineError> {
        if theta.dim() != self.dim() {
            return Err(RecombineError::DimensionMismatch);
        }
        let centered = theta.sub(&self.location);
        let t = self.lambda_avg.dot(&theta.sub(&self.xi_avg));
        Ok(-0.5 * self.precision.base().quad_form(&centered)
            + self.r as f64 * std_normal_log_cdf(t))
    }

    pub fn grad(&self, theta: &DenseVector) -> Result<DenseVector, RecombineError> {
        let centered = theta.sub(&self.location);
        let t = self.lambda_avg.dot(&theta.sub(&self.xi_avg));
        Ok(self
            .precision
            .mul_vec(&centered)
            .scale(-1.0)
            .add(&self.lambda_avg.scale(self.r as f64 * mills_ratio(t))))
    }

    pub fn hess(&self, theta: &DenseVector) -> Result<DenseMatrix, RecombineError> {
        let t = self.lambda_avg.dot(&theta.sub(&self.xi_avg));
        Ok(self.precision.base().scale(-1.0).add(
            &DenseMatrix::outer(&self.lambda_avg, &self.lambda_avg)
                .scale(self.r as f64 * log_cdf_second_deriv(t)),
        ))
    }
}

/// Pools skew-normal subset fits directly into the simplified model.
pub fn recombine_ssn(fits: &[SubsetFit]) -> Result<SsnModel, RecombineError> {
    Ok(SsnModel::from_sn(&recombine_sn(fits)?))
}

type Evaluation = (f64, DenseVector, DenseMatrix);

/// Damped Newton ascent with Armijo backtracking; the targets here are
/// concave, so the maximizer is unique.
fn newton_maximize<F>(
    eval: F,
    start: DenseVector,
    tol: f64,
    max_iter: usize,
) -> Result<(DenseVector, usize, f64, DenseMatrix), RecombineError>
where
    F: Fn(&DenseVector) -> Result<Evaluation, RecombineError>,
{
    let mut theta = start;
    let (mut f, mut g, mut h) = eval(&theta)?;
    for iter in 0..max_iter {
        if g.norm_inf() <= tol {
            return Ok((theta, iter, g.norm_inf(), h));
        }
        let neg_h = SpdMatrix::from_symmetric(h.scale(-1.0))
            .map_err(|_| RecombineError::SingularInformation)?;
        let dir = neg_h.solve(&g)?;
        let slope = g.dot(&dir);
        // near the optimum the Armijo increase falls below the rounding
        // resolution of f; the full Newton step is still the right move
        let slack = 1e-12 * (1.0 + libm::fabs(f));
        let mut step = 1.0;
        loop {
            let cand = theta.add(&dir.scale(step));
            let (cf, cg, ch) = eval(&cand)?;
            if cf >= f + 1e-4 * step * slope || (step == 1.0 && cf >= f - slack) {
                theta = cand;
                f = cf;
                g = cg;
                h = ch;
                break;
            }
            step *= 0.5;
            if step < 1e-14 {
                return Err(RecombineError::NoConverge(max_iter));
            }
        }
    }
    if g.norm_inf() <= tol {
        return Ok((theta, max_iter, g.norm_inf(), h));
    }
    Err(RecombineError::NoConverge(max_iter))
}

/// SNMM: maximizes the recombined skew-normal log-likelihood by damped
/// Newton from the pooled location; the covariance is the inverse observed
/// Fisher information at the maximizer.
pub fn snmm_estimate(
    model: &SnModel,
    tol: f64,
    max_iter: usize,
) -> Result<DnrEstimate, RecombineError> {
    let eval = |theta: &DenseVector| -> Result<Evaluation, RecombineError> {
        Ok((model.loglik(theta)?, model.grad(theta)?, model.hess(theta)?))
    };
    let (theta, iters, grad_norm, hess) = newton_maximize(eval, model.location.clone(), tol, max_iter)?;
    let info = SpdMatrix::from_symmetric(hess.scale(-1.0))
        .map_err(|_| RecombineError::SingularInformation)?;
    Ok(DnrEstimate {
        theta_hat: theta,
        covariance: info.inverse()?,
        estimator_kind: EstimatorKind::Snmm,
        optimizer_iters: iters,
        grad_norm,
    })
}

/// SSNMM: same optimizer on the simplified model.
pub fn ssnmm_estimate(
    model: &SsnModel,
    tol: f64,
    max_iter: usize,
) -> Result<DnrEstimate, RecombineError> {
    let eval = |theta: &DenseVector| -> Result<Evaluation, RecombineError> {
        Ok((model.loglik(theta)?, model.grad(theta)?, model.hess(theta)?))
    };
    let (theta, iters, grad_norm, hess) = newton_maximize(eval, model.location.clone(), tol, max_iter)?;
    let info = SpdMatrix::from_symmetric(hess.scale(-1.0))
        .map_err(|_| RecombineError::SingularInformation)?;
    Ok(DnrEstimate {
        theta_hat: theta,
        covariance: info.inverse()?,
        estimator_kind: EstimatorKind::Ssnmm,
        optimizer_iters: iters,
        grad_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{fd_gradient, fd_hessian};
    use crate::random::Rng;
    use crate::skewnormal::{sn_log_pdf, SnParams};
    use approx::assert_relative_eq;

    fn sn(xi: &[f64], omega: &[&[f64]], alpha: &[f64]) -> SnParams {
        let rows: alloc::vec::Vec<alloc::vec::Vec<f64>> =
            omega.iter().map(|r| r.to_vec()).collect();
        SnParams::new(
            DenseVector::from(xi.to_vec()),
            SpdMatrix::from_symmetric(DenseMatrix::from_rows(&rows).unwrap()).unwrap(),
            DenseVector::from(alpha.to_vec()),
        )
        .unwrap()
    }

    fn random_sn(p: usize, rng: &mut Rng) -> SnParams {
        loop {
            let xi = DenseVector::from((0..p).map(|_| rng.standard_normal()).collect::<Vec<_>>());
            let a = DenseMatrix::from_rows(
                &(0..p)
                    .map(|_| (0..p).map(|_| rng.standard_normal()).collect::<Vec<_>>())
                    .collect::<Vec<_>>(),
            )
            .unwrap();
            let mut base = DenseMatrix::zeros(p, p);
            for i in 0..p {
                for j in 0..p {
                    let mut s = 0.0;
                    for k in 0..p {
                        s += a[(i, k)] * a[(j, k)];
                    }
                    base[(i, j)] = s;
                }
                base[(i, i)] += 0.5;
            }
            let omega = match SpdMatrix::from_symmetric(base) {
                Ok(m) => m,
                Err(_) => continue,
            };
            let alpha =
                DenseVector::from((0..p).map(|_| 2.0 * rng.standard_normal()).collect::<Vec<_>>());
            if let Ok(params) = SnParams::new(xi, omega, alpha) {
                return params;
            }
        }
    }

    fn sn_fits(params: &[SnParams]) -> Vec<SubsetFit> {
        params
            .iter()
            .enumerate()
            .map(|(i, p)| SubsetFit::sn_fit(i, p.clone(), false, 0.3))
            .collect()
    }

    #[test]
    fn normal_pooling_hand_computed() {
        // N(1,1) and N(3,1): precision 2, mean 2, variance 1/2
        let fits = vec![
            SubsetFit::normal_fit(
                0,
                ModelKind::NormalMm,
                NormalParams {
                    mu: DenseVector::from(vec![1.0]),
                    sigma: SpdMatrix::identity(1),
                },
                0.3,
            ),
            SubsetFit::normal_fit(
                1,
                ModelKind::NormalMm,
                NormalParams {
                    mu: DenseVector::from(vec![3.0]),
                    sigma: SpdMatrix::identity(1),
                },
                0.3,
            ),
        ];
        let (pooled, est) = recombine_normal(&fits).unwrap();
        assert_relative_eq!(pooled.mu[0], 2.0, max_relative = 1e-14);
        assert_relative_eq!(pooled.sigma.base()[(0, 0)], 0.5, max_relative = 1e-14);
        assert_eq!(est.estimator_kind, EstimatorKind::Nmm);
        assert_eq!(est.theta_hat[0], pooled.mu[0]);
    }

    #[test]
    fn normal_pooling_single_subset_identity() {
        let mu = DenseVector::from(vec![0.3, -1.2]);
        let sigma = SpdMatrix::from_symmetric(
            DenseMatrix::from_rows(&[vec![2.0, 0.4], vec![0.4, 1.0]]).unwrap(),
        )
        .unwrap();
        let fits = vec![SubsetFit::normal_fit(
            0,
            ModelKind::NormalLocal,
            NormalParams {
                mu: mu.clone(),
                sigma: sigma.clone(),
            },
            0.25,
        )];
        let (pooled, _) = recombine_normal(&fits).unwrap();
        for i in 0..2 {
            assert_relative_eq!(pooled.mu[i], mu[i], max_relative = 1e-12);
            for j in 0..2 {
                assert_relative_eq!(
                    pooled.sigma.base()[(i, j)],
                    sigma.base()[(i, j)],
                    max_relative = 1e-10
                );
            }
        }
    }

    #[test]
    fn sn_model_single_subset_matches_density() {
        // with R = 1 the recombined log-likelihood is the subset sn log-density
        // up to an additive constant
        let params = sn(&[0.5], &[&[2.0]], &[1.5]);
        let fits = sn_fits(core::slice::from_ref(&params));
        let model = recombine_sn(&fits).unwrap();
        let t0 = DenseVector::from(vec![0.0]);
        let offset = sn_log_pdf(&t0, &params).unwrap() - model.loglik(&t0).unwrap();
        for i in -20..=20 {
            let t = DenseVector::from(vec![0.3 * i as f64]);
            assert_relative_eq!(
                sn_log_pdf(&t, &params).unwrap() - model.loglik(&t).unwrap(),
                offset,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn sn_model_reduces_to_quadratic_at_zero_skew() {
        let params = vec![
            sn(&[1.0, 0.0], &[&[1.0, 0.2], &[0.2, 1.0]], &[0.0, 0.0]),
            sn(&[0.0, -1.0], &[&[2.0, 0.0], &[0.0, 0.5]], &[0.0, 0.0]),
        ];
        let model = recombine_sn(&sn_fits(&params)).unwrap();
        let theta = DenseVector::from(vec![0.7, -0.4]);
        let centered = theta.sub(model.location());
        let quad = -0.5 * model.precision().base().quad_form(&centered);
        // log Phi(0) per subset is the only other contribution
        let expect = quad + 2.0 * libm::log(0.5);
        assert_relative_eq!(model.loglik(&theta).unwrap(), expect, epsilon = 1e-12);
    }

    #[test]
    fn sn_gradient_and_hessian_match_finite_differences() {
        let mut rng = Rng::from_seed(404);
        for p in [1usize, 2, 4] {
            let params: Vec<SnParams> = (0..3).map(|_| random_sn(p, &mut rng)).collect();
            let model = recombine_sn(&sn_fits(&params)).unwrap();
            let theta = DenseVector::from(
                (0..p).map(|_| 0.5 * rng.standard_normal()).collect::<Vec<_>>(),
            );
            let g = model.grad(&theta).unwrap();
            let h = model.hess(&theta).unwrap();
            let f = |x: &DenseVector| model.loglik(x).unwrap();
            let fg = fd_gradient(&f, &theta);
            let fh = fd_hessian(&f, &theta);
            for i in 0..p {
                assert_relative_eq!(g[i], fg[i], epsilon = 1e-5, max_relative = 1e-5);
                for j in 0..p {
                    assert_relative_eq!(h[(i, j)], fh[(i, j)], epsilon = 1e-4, max_relative = 1e-4);
                }
            }
        }
    }

    #[test]
    fn recombination_order_invariant_bit_identical() {
        let mut rng = Rng::from_seed(77);
        let params: Vec<SnParams> = (0..4).map(|_| random_sn(3, &mut rng)).collect();
        let mut fits = sn_fits(&params);
        let model_a = recombine_sn(&fits).unwrap();
        fits.reverse();
        fits.swap(0, 2);
        let model_b = recombine_sn(&fits).unwrap();
        assert_eq!(model_a.location().as_slice(), model_b.location().as_slice());
        assert_eq!(model_a.precision().base(), model_b.precision().base());
        let theta = DenseVector::from(vec![0.1, -0.2, 0.3]);
        assert_eq!(
            model_a.loglik(&theta).unwrap().to_bits(),
            model_b.loglik(&theta).unwrap().to_bits()
        );
    }

    #[test]
    fn sn_model_concave_in_random_directions() {
        let mut rng = Rng::from_seed(2024);
        let params: Vec<SnParams> = (0..5).map(|_| random_sn(3, &mut rng)).collect();
        let model = recombine_sn(&sn_fits(&params)).unwrap();
        for _ in 0..200 {
            let theta = DenseVector::from(
                (0..3).map(|_| 3.0 * rng.standard_normal()).collect::<Vec<_>>(),
            );
            let h = model.hess(&theta).unwrap();
            let v = DenseVector::from(
                (0..3).map(|_| rng.standard_normal()).collect::<Vec<_>>(),
            );
            let quad = h.quad_form(&v);
            assert!(quad < 0.0, "v'Hv = {quad}");
        }
    }

    #[test]
    fn ssn_equals_sn_for_identical_subsets() {
        // identical terms make the averaged term exact, so the two models and
        // their maximizers agree
        let params = sn(&[0.2, -0.5], &[&[1.5, 0.3], &[0.3, 1.0]], &[2.0, -1.0]);
        let fits: Vec<SubsetFit> = (0..4)
            .map(|i| SubsetFit::sn_fit(i, params.clone(), false, 0.3))
            .collect();
        let full = recombine_sn(&fits).unwrap();
        let simple = SsnModel::from_sn(&full);
        for i in -5..=5 {
            for j in -5..=5 {
                let theta = DenseVector::from(vec![0.4 * i as f64, 0.4 * j as f64]);
                assert_relative_eq!(
                    full.loglik(&theta).unwrap(),
                    simple.loglik(&theta).unwrap(),
                    epsilon = 1e-10
                );
            }
        }
        let ea = snmm_estimate(&full, 1e-10, 200).unwrap();
        let eb = ssnmm_estimate(&simple, 1e-10, 200).unwrap();
        for i in 0..2 {
            assert_relative_eq!(ea.theta_hat[i], eb.theta_hat[i], epsilon = 1e-8);
        }
    }

    #[test]
    fn snmm_zero_skew_closed_form() {
        // with all alpha = 0 the maximizer is the pooled location and the
        // covariance is the pooled scale
        let params = vec![
            sn(&[1.0], &[&[1.0]], &[0.0]),
            sn(&[3.0], &[&[1.0]], &[0.0]),
        ];
        let model = recombine_sn(&sn_fits(&params)).unwrap();
        let est = snmm_estimate(&model, 1e-10, 100).unwrap();
        assert_relative_eq!(est.theta_hat[0], 2.0, epsilon = 1e-9);
        assert_relative_eq!(est.covariance.base()[(0, 0)], 0.5, epsilon = 1e-9);
        assert_eq!(est.estimator_kind, EstimatorKind::Snmm);
    }

    #[test]
    fn snmm_gradient_small_at_optimum() {
        let mut rng = Rng::from_seed(11);
        let params: Vec<SnParams> = (0..6).map(|_| random_sn(4, &mut rng)).collect();
        let model = recombine_sn(&sn_fits(&params)).unwrap();
        let est = snmm_estimate(&model, 1e-8, 200).unwrap();
        let g = model.grad(&est.theta_hat).unwrap();
        assert!(g.norm_inf() <= 1e-8, "grad = {}", g.norm_inf());
        assert!(est.grad_norm <= 1e-8);
        // optimum beats nearby points
        let f0 = model.loglik(&est.theta_hat).unwrap();
        for _ in 0..50 {
            let perturbed = est.theta_hat.add(&DenseVector::from(
                (0..4).map(|_| 0.1 * rng.standard_normal()).collect::<Vec<_>>(),
            ));
            assert!(model.loglik(&perturbed).unwrap() <= f0 + 1e-12);
        }
    }

    #[test]
    fn missing_params_and_empty_errors() {
        assert_eq!(recombine_normal(&[]).unwrap_err(), RecombineError::EmptyFits);
        assert_eq!(recombine_sn(&[]).unwrap_err(), RecombineError::EmptyFits);
        let fit = SubsetFit::sn_fit(3, sn(&[0.0], &[&[1.0]], &[1.0]), false, 0.3);
        assert_eq!(
            recombine_normal(core::slice::from_ref(&fit)).unwrap_err(),
            RecombineError::MissingParams { subset_index: 3 }
        );
    }

    #[test]
    fn subset_fit_json_round_trip() {
        let fit = SubsetFit::sn_fit(2, sn(&[0.1, 0.2], &[&[1.0, 0.1], &[0.1, 2.0]], &[1.0, -0.5]), true, 0.27);
        let json = serde_json::to_string(&fit).unwrap();
        let back: SubsetFit = serde_json::from_str(&json).unwrap();
        assert_eq!(back.subset_index, 2);
        assert_eq!(back.model_kind, ModelKind::SnMm);
        assert!(back.clipped);
        let sn_back = back.sn.unwrap();
        let orig = fit.sn.unwrap();
        assert_eq!(sn_back.xi().as_slice(), orig.xi().as_slice());
        assert_eq!(sn_back.alpha().as_slice(), orig.alpha().as_slice());
        let kind_str = serde_json::to_string(&ModelKind::NormalLocal).unwrap();
        assert_eq!(kind_str, "\"normal_local\"");
    }

    #[test]
    fn fit_normal_mm_recovers_sample_moments() {
        let mut rng = Rng::from_seed(55);
        let draws: Vec<DenseVector> = (0..5_000)
            .map(|_| {
                DenseVector::from(vec![1.0 + 0.5 * rng.standard_normal(), rng.standard_normal()])
            })
            .collect();
        let chain = Chain {
            draws,
            acceptance_rate: 0.3,
            final_proposal_cov: SpdMatrix::identity(2),
            seed: 55,
        };
        let params = fit_normal_mm(&chain).unwrap();
        assert!((params.mu[0] - 1.0).abs() < 0.05);
        assert!((params.sigma.base()[(0, 0)] - 0.25).abs() < 0.03);
    }
}
