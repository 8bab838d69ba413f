//! The skew-normal likelihood model: density, sampling, centered-parametrization
//! moment matching, admissibility checks, and log-density derivatives.
//!
//! The centered coordinates are (mean, covariance, componentwise skewness).
//! The inverse map back to (xi, Omega, alpha) exists only inside an
//! admissible region: each |skewness| below [`SKEWNESS_BOUND`] and
//! 1 - delta' OmegaBar^{-1} delta > 0.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::mcmc::{Chain, McmcError};
use crate::numkit::{
    log_cdf_second_deriv, mills_ratio, sample_moments, std_normal_log_cdf, CenteredMoments,
    DenseMatrix, DenseVector, NumError, SpdMatrix, LN_2PI,
};
use crate::random::Rng;

/// Largest componentwise skewness the skew-normal family can produce:
/// (4-pi)/2 * b^3 / (1-b^2)^{3/2} with b = sqrt(2/pi).
pub const SKEWNESS_BOUND: f64 = 0.9952717;

/// Feasibility margin on 1 - delta' OmegaBar^{-1} delta; below this the shape
/// vector alpha blows up through the near-zero square root.
const DELTA_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum SnError {
    InadmissibleSkewness { component: usize, value: f64 },
    InadmissibleDelta,
    ScaleNotPd,
    DimensionMismatch,
    FitFailed,
    Numeric(NumError),
    Mcmc(McmcError),
}

impl fmt::Display for SnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SnError::InadmissibleSkewness { component, value } => {
                write!(f, "inadmissible skewness {value} in component {component}")
            }
            SnError::InadmissibleDelta => write!(f, "delta outside the feasible region"),
            SnError::ScaleNotPd => write!(f, "scale matrix not positive definite"),
            SnError::DimensionMismatch => write!(f, "dimension mismatch"),
            SnError::FitFailed => write!(f, "skew-normal fit failed"),
            SnError::Numeric(e) => write!(f, "numeric failure: {e}"),
            SnError::Mcmc(e) => write!(f, "resampling failure: {e}"),
        }
    }
}

impl core::error::Error for SnError {}

impl From<NumError> for SnError {
    fn from(e: NumError) -> Self {
        match e {
            NumError::NotPositiveDefinite => SnError::ScaleNotPd,
            NumError::DimensionMismatch => SnError::DimensionMismatch,
            e => SnError::Numeric(e),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SnParamsWire {
    xi: Vec<f64>,
    omega: Vec<Vec<f64>>,
    alpha: Vec<f64>,
}

/// Skew-normal parameter triple (location xi, scale Omega, shape alpha) with
/// derived caches used by the density and its derivatives.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "SnParamsWire", into = "SnParamsWire")]
pub struct SnParams {
    xi: DenseVector,
    omega: SpdMatrix,
    alpha: DenseVector,
    omega_diag: Vec<f64>,
    omega_bar: SpdMatrix,
    lambda: DenseVector,
    delta: DenseVector,
}

impl SnParams {
    pub fn new(xi: DenseVector, omega: SpdMatrix, alpha: DenseVector) -> Result<Self, SnError> {
        let p = xi.dim();
        if omega.dim() != p || alpha.dim() != p {
            return Err(SnError::DimensionMismatch);
        }
        let omega_diag: Vec<f64> = (0..p).map(|i| libm::sqrt(omega.base()[(i, i)])).collect();
        let mut bar = DenseMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                bar[(i, j)] = omega.base()[(i, j)] / (omega_diag[i] * omega_diag[j]);
            }
        }
        let omega_bar = SpdMatrix::from_symmetric(bar).map_err(|_| SnError::ScaleNotPd)?;
        let lambda = DenseVector::from(
            (0..p).map(|i| alpha[i] / omega_diag[i]).collect::<Vec<_>>(),
        );
        let bar_alpha = omega_bar.mul_vec(&alpha);
        let quad = alpha.dot(&bar_alpha);
        let delta = bar_alpha.scale(1.0 / libm::sqrt(1.0 + quad));
        // 1 - delta' OmegaBar^{-1} delta = 1/(1 + alpha' OmegaBar alpha) > 0
        let slack = 1.0 - omega_bar.inv_quad_form(&delta)?;
        if !(slack > 0.0) {
            return Err(SnError::InadmissibleDelta);
        }
        Ok(Self {
            xi,
            omega,
            alpha,
            omega_diag,
            omega_bar,
            lambda,
            delta,
        })
    }

    pub fn dim(&self) -> usize {
        self.xi.dim()
    }

    pub fn xi(&self) -> &DenseVector {
        &self.xi
    }

    pub fn omega(&self) -> &SpdMatrix {
        &self.omega
    }

    pub fn alpha(&self) -> &DenseVector {
        &self.alpha
    }

    /// lambda = alpha / omega componentwise; the skewing direction of log Phi.
    pub fn lambda(&self) -> &DenseVector {
        &self.lambda
    }

    pub fn delta(&self) -> &DenseVector {
        &self.delta
    }

    pub fn omega_bar(&self) -> &SpdMatrix {
        &self.omega_bar
    }
}

impl TryFrom<SnParamsWire> for SnParams {
    type Error = SnError;
    fn try_from(w: SnParamsWire) -> Result<Self, SnError> {
        let omega = SpdMatrix::from_symmetric(
            DenseMatrix::from_rows(&w.omega).map_err(SnError::from)?,
        )
        .map_err(|_| SnError::ScaleNotPd)?;
        SnParams::new(DenseVector::from(w.xi), omega, DenseVector::from(w.alpha))
    }
}

impl From<SnParams> for SnParamsWire {
    fn from(p: SnParams) -> Self {
        SnParamsWire {
            xi: p.xi.as_slice().to_vec(),
            omega: p.omega.base().to_nested_rows(),
            alpha: p.alpha.as_slice().to_vec(),
        }
    }
}

/// log f(theta) = log 2 - (p/2) log(2 pi) - (1/2) log|Omega|
///   - (1/2)(theta-xi)' Omega^{-1} (theta-xi) + log Phi(lambda'(theta-xi)).
pub fn sn_log_pdf(theta: &DenseVector, p: &SnParams) -> Result<f64, SnError> {
    if theta.dim() != p.dim() {
        return Err(SnError::DimensionMismatch);
    }
    let centered = theta.sub(&p.xi);
    let quad = p.omega.inv_quad_form(&centered)?;
    let t = p.lambda.dot(&centered);
    Ok(core::f64::consts::LN_2
        - 0.5 * (p.dim() as f64 * LN_2PI + p.omega.log_det())
        - 0.5 * quad
        + std_normal_log_cdf(t))
}

/// grad = -Omega^{-1}(theta-xi) + r(t) lambda, t = lambda'(theta-xi).
pub fn sn_log_pdf_grad(theta: &DenseVector, p: &SnParams) -> Result<DenseVector, SnError> {
    if theta.dim() != p.dim() {
        return Err(SnError::DimensionMismatch);
    }
    let centered = theta.sub(&p.xi);
    let t = p.lambda.dot(&centered);
    Ok(p.omega
        .solve(&centered)?
        .scale(-1.0)
        .add(&p.lambda.scale(mills_ratio(t))))
}

/// hess = -Omega^{-1} + g(t) lambda lambda'.
pub fn sn_log_pdf_hess(theta: &DenseVector, p: &SnParams) -> Result<DenseMatrix, SnError> {
    if theta.dim() != p.dim() {
        return Err(SnError::DimensionMismatch);
    }
    let centered = theta.sub(&p.xi);
    let t = p.lambda.dot(&centered);
    let inv = p.omega.inverse()?;
    Ok(inv
        .base()
        .scale(-1.0)
        .add(&DenseMatrix::outer(&p.lambda, &p.lambda).scale(log_cdf_second_deriv(t))))
}

const MEAN_FACTOR: f64 = 0.7978845608028654; // b = sqrt(2/pi)

fn gamma_from_mu_z(mu_z: f64) -> f64 {
    let m2 = mu_z * mu_z;
    0.5 * (4.0 - core::f64::consts::PI) * mu_z * m2 / libm::pow(1.0 - m2, 1.5)
}

/// Closed-form centered moments of a skew-normal.
pub fn moments_from_params(p: &SnParams) -> Result<CenteredMoments, SnError> {
    let dim = p.dim();
    let mu_z: Vec<f64> = p.delta.iter().map(|d| MEAN_FACTOR * d).collect();
    let scaled: Vec<f64> = (0..dim).map(|i| p.omega_diag[i] * mu_z[i]).collect();
    let mut sigma = p.omega.base().clone();
    for i in 0..dim {
        for j in 0..dim {
            sigma[(i, j)] -= scaled[i] * scaled[j];
        }
    }
    let mu = DenseVector::from(
        (0..dim).map(|i| p.xi[i] + scaled[i]).collect::<Vec<_>>(),
    );
    let gamma = DenseVector::from(mu_z.iter().map(|&m| gamma_from_mu_z(m)).collect::<Vec<_>>());
    Ok(CenteredMoments {
        mu,
        sigma: SpdMatrix::from_symmetric(sigma).map_err(|_| SnError::ScaleNotPd)?,
        gamma,
    })
}

fn mu_z_from_gamma(gamma: &DenseVector) -> Result<Vec<f64>, SnError> {
    gamma
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            if libm::fabs(g) >= SKEWNESS_BOUND {
                return Err(SnError::InadmissibleSkewness {
                    component: i,
                    value: g,
                });
            }
            let c = libm::cbrt(2.0 * g / (4.0 - core::f64::consts::PI));
            Ok(c / libm::sqrt(1.0 + c * c))
        })
        .collect()
}

enum BuildFail {
    ScaleNotPd,
    /// carries delta' OmegaBar^{-1} delta so callers can rescale toward the boundary
    Delta(f64),
    Numeric(NumError),
}

impl From<BuildFail> for SnError {
    fn from(b: BuildFail) -> Self {
        match b {
            BuildFail::ScaleNotPd => SnError::ScaleNotPd,
            BuildFail::Delta(_) => SnError::InadmissibleDelta,
            BuildFail::Numeric(e) => SnError::Numeric(e),
        }
    }
}

fn build_from_mu_z(
    mu: &DenseVector,
    sigma: &SpdMatrix,
    mu_z: &[f64],
    delta_margin: f64,
) -> Result<SnParams, BuildFail> {
    let p = mu.dim();
    let mut omega_hat = sigma.base().clone();
    let mut omega_diag = vec![0.0; p];
    let mut xi = vec![0.0; p];
    for i in 0..p {
        let sigma_z = libm::sqrt(1.0 - mu_z[i] * mu_z[i]);
        let sigma_theta = libm::sqrt(sigma.base()[(i, i)]);
        omega_diag[i] = sigma_theta / sigma_z;
        xi[i] = mu[i] - omega_diag[i] * mu_z[i];
    }
    for i in 0..p {
        for j in 0..p {
            omega_hat[(i, j)] += omega_diag[i] * mu_z[i] * omega_diag[j] * mu_z[j];
        }
    }
    let omega = SpdMatrix::from_symmetric(omega_hat).map_err(|e| match e {
        NumError::NotPositiveDefinite | NumError::NotSymmetric => BuildFail::ScaleNotPd,
        e => BuildFail::Numeric(e),
    })?;
    let mut bar = DenseMatrix::zeros(p, p);
    let bar_diag: Vec<f64> = (0..p).map(|i| libm::sqrt(omega.base()[(i, i)])).collect();
    for i in 0..p {
        for j in 0..p {
            bar[(i, j)] = omega.base()[(i, j)] / (bar_diag[i] * bar_diag[j]);
        }
    }
    let omega_bar = SpdMatrix::from_symmetric(bar).map_err(|_| BuildFail::ScaleNotPd)?;
    let delta = DenseVector::from(mu_z.iter().map(|m| m / MEAN_FACTOR).collect::<Vec<_>>());
    let bar_inv_delta = omega_bar.solve(&delta).map_err(BuildFail::Numeric)?;
    let q = delta.dot(&bar_inv_delta);
    if 1.0 - q <= delta_margin {
        return Err(BuildFail::Delta(q));
    }
    let alpha = bar_inv_delta.scale(1.0 / libm::sqrt(1.0 - q));
    SnParams::new(DenseVector::from(xi), omega, alpha).map_err(|e| match e {
        SnError::ScaleNotPd => BuildFail::ScaleNotPd,
        SnError::InadmissibleDelta => BuildFail::Delta(q),
        SnError::Numeric(e) => BuildFail::Numeric(e),
        _ => BuildFail::Numeric(NumError::NotFinite),
    })
}

/// Inverts the centered parametrization: moments -> (xi, Omega, alpha).
///
/// Round trip with [`moments_from_params`] is the identity whenever the
/// moments are admissible.
pub fn params_from_moments(m: &CenteredMoments) -> Result<SnParams, SnError> {
    let mu_z = mu_z_from_gamma(&m.gamma)?;
    build_from_mu_z(&m.mu, &m.sigma, &mu_z, DELTA_MARGIN).map_err(SnError::from)
}

/// iid draws via the augmented-normal representation: (u0, u) from
/// N(0, [[1, delta'], [delta, OmegaBar]]); z = sign(u0) u; theta = xi + omega z.
pub fn sn_sample(p: &SnParams, n: usize, seed: u64) -> Result<Vec<DenseVector>, SnError> {
    let dim = p.dim();
    let mut star = DenseMatrix::zeros(dim + 1, dim + 1);
    star[(0, 0)] = 1.0;
    for i in 0..dim {
        star[(0, i + 1)] = p.delta[i];
        star[(i + 1, 0)] = p.delta[i];
        for j in 0..dim {
            star[(i + 1, j + 1)] = p.omega_bar.base()[(i, j)];
        }
    }
    let star = SpdMatrix::from_symmetric(star).map_err(|_| SnError::InadmissibleDelta)?;
    let chol = star.chol();
    let mut rng = Rng::from_seed(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let z = DenseVector::from(
            (0..=dim).map(|_| rng.standard_normal()).collect::<Vec<_>>(),
        );
        let u = chol.matvec(&z);
        let sign = if u[0] > 0.0 { 1.0 } else { -1.0 };
        out.push(DenseVector::from(
            (0..dim)
                .map(|i| p.xi[i] + p.omega_diag[i] * sign * u[i + 1])
                .collect::<Vec<_>>(),
        ));
    }
    Ok(out)
}

/// Mode of the skew-normal density by damped Newton on the concave log-pdf.
pub fn sn_mode(p: &SnParams, tol: f64, max_iter: usize) -> Result<DenseVector, SnError> {
    let mut theta = p.xi().clone();
    let mut f = sn_log_pdf(&theta, p)?;
    for _ in 0..max_iter {
        let g = sn_log_pdf_grad(&theta, p)?;
        if g.norm_inf() <= tol {
            return Ok(theta);
        }
        let h = sn_log_pdf_hess(&theta, p)?;
        let neg_h = SpdMatrix::from_symmetric(h.scale(-1.0)).map_err(|_| SnError::ScaleNotPd)?;
        let dir = neg_h.solve(&g)?;
        let slope = g.dot(&dir);
        let mut step = 1.0;
        loop {
            let cand = theta.add(&dir.scale(step));
            let cand_f = sn_log_pdf(&cand, p)?;
            if cand_f >= f + 1e-4 * step * slope {
                theta = cand;
                f = cand_f;
                break;
            }
            step *= 0.5;
            if step < 1e-14 {
                return Ok(theta);
            }
        }
    }
    Err(SnError::FitFailed)
}

/// A moment-matching fit, possibly degraded by clipping.
#[derive(Clone, Debug)]
pub struct SnFit {
    pub params: SnParams,
    /// true when the moments had to be clipped into the admissible region
    pub clipped: bool,
}

/// Skewness clip value used when resampling is exhausted.
const GAMMA_CLIP: f64 = 0.99;
/// Feasibility slack targeted when clipping delta back inside the boundary.
const DELTA_CLIP_SLACK: f64 = 1e-3;

/// Fits a skew-normal to MCMC draws by moment matching.
///
/// On an inadmissible sample the `resampler` (when given) is invoked with the
/// attempt number to produce a fresh chain, up to `max_attempts` times. If
/// the moments still cannot be inverted, the offending skewness components
/// are clipped to +-0.99 and delta is pulled back inside the feasible
/// boundary; such fits are flagged `clipped`.
pub fn fit_sn_mm(
    chain: &Chain,
    max_attempts: usize,
    mut resampler: Option<&mut dyn FnMut(usize) -> Result<Chain, McmcError>>,
) -> Result<SnFit, SnError> {
    if chain.draws.len() < 100 {
        return Err(SnError::FitFailed);
    }
    let mut resampled: Option<Chain> = None;
    let mut moments = None;
    for attempt in 0..max_attempts.max(1) {
        let draws = resampled.as_ref().map_or(&chain.draws, |c| &c.draws);
        let m = sample_moments(draws).map_err(|e| match e {
            NumError::NotFinite => SnError::FitFailed,
            e => SnError::from(e),
        })?;
        match params_from_moments(&m) {
            Ok(params) => {
                return Ok(SnFit {
                    params,
                    clipped: false,
                })
            }
            Err(
                SnError::InadmissibleSkewness { .. }
                | SnError::InadmissibleDelta
                | SnError::ScaleNotPd,
            ) => {
                moments = Some(m);
                match resampler.as_mut() {
                    Some(r) if attempt + 1 < max_attempts => {
                        resampled = Some(r(attempt).map_err(SnError::Mcmc)?);
                    }
                    _ => break,
                }
            }
            Err(e) => return Err(e),
        }
    }

    // degraded path: clip into the admissible region
    let m = moments.ok_or(SnError::FitFailed)?;
    let clipped_gamma = DenseVector::from(
        m.gamma
            .iter()
            .map(|&g| g.clamp(-GAMMA_CLIP, GAMMA_CLIP))
            .collect::<Vec<_>>(),
    );
    let mut mu_z = mu_z_from_gamma(&clipped_gamma)?;
    for _ in 0..50 {
        match build_from_mu_z(&m.mu, &m.sigma, &mu_z, DELTA_CLIP_SLACK) {
            Ok(params) => {
                return Ok(SnFit {
                    params,
                    clipped: true,
                })
            }
            Err(BuildFail::Delta(q)) => {
                // pull delta back to the boundary minus the slack
                let target = 1.0 - 2.0 * DELTA_CLIP_SLACK;
                let s = libm::sqrt(target / q).min(0.995);
                for v in mu_z.iter_mut() {
                    *v *= s;
                }
            }
            Err(BuildFail::ScaleNotPd) => return Err(SnError::ScaleNotPd),
            Err(BuildFail::Numeric(_)) => return Err(SnError::FitFailed),
        }
    }
    Err(SnError::FitFailed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn univariate(xi: f64, omega_sq: f64, alpha: f64) -> SnParams {
        let omega = SpdMatrix::from_symmetric(
            DenseMatrix::from_rows(&[vec![omega_sq]]).unwrap(),
        )
        .unwrap();
        SnParams::new(
            DenseVector::from(vec![xi]),
            omega,
            DenseVector::from(vec![alpha]),
        )
        .unwrap()
    }

    fn random_admissible_params(p: usize, rng: &mut Rng) -> SnParams {
        loop {
            let mut a = DenseMatrix::zeros(p, p);
            for i in 0..p {
                for j in 0..p {
                    a[(i, j)] = rng.standard_normal();
                }
            }
            let mut m = DenseMatrix::zeros(p, p);
            for i in 0..p {
                for j in 0..p {
                    let mut s = 0.0;
                    for k in 0..p {
                        s += a[(i, k)] * a[(j, k)];
                    }
                    m[(i, j)] = s;
                }
            }
            for i in 0..p {
                m[(i, i)] += 0.5 + p as f64 * 0.5;
            }
            let omega = match SpdMatrix::from_symmetric(m) {
                Ok(o) => o,
                Err(_) => continue,
            };
            let xi = DenseVector::from(
                (0..p).map(|_| rng.standard_normal()).collect::<Vec<_>>(),
            );
            let alpha = DenseVector::from(
                (0..p).map(|_| 2.0 * rng.standard_normal()).collect::<Vec<_>>(),
            );
            if let Ok(params) = SnParams::new(xi, omega, alpha) {
                return params;
            }
        }
    }

    #[test]
    fn log_pdf_reduces_to_normal_at_alpha_zero() {
        let p = univariate(0.0, 1.0, 0.0);
        let v = sn_log_pdf(&DenseVector::from(vec![0.0]), &p).unwrap();
        assert_relative_eq!(v, -0.5 * LN_2PI, max_relative = 1e-12);
    }

    #[test]
    fn log_pdf_integrates_to_one() {
        // trapezoid quadrature of exp(log pdf) for SN(0, 1, 3)
        let p = univariate(0.0, 1.0, 3.0);
        let (lo, hi, n) = (-10.0, 10.0, 200_000usize);
        let h = (hi - lo) / n as f64;
        let mut integral = 0.0;
        for i in 0..=n {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            integral += w * libm::exp(sn_log_pdf(&DenseVector::from(vec![x]), &p).unwrap());
        }
        integral *= h;
        assert!((integral - 1.0).abs() < 1e-6, "integral = {integral}");
    }

    #[test]
    fn log_pdf_stable_in_deep_skew_tail() {
        // lambda = 4, so theta = -10 gives t = -40
        let p = univariate(0.0, 1.0, 4.0);
        let v = sn_log_pdf(&DenseVector::from(vec![-10.0]), &p).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = Rng::from_seed(3141);
        for p_dim in [1usize, 2, 5] {
            for _ in 0..10 {
                let params = random_admissible_params(p_dim, &mut rng);
                let theta = DenseVector::from(
                    (0..p_dim).map(|_| rng.standard_normal()).collect::<Vec<_>>(),
                );
                let g = sn_log_pdf_grad(&theta, &params).unwrap();
                let g_fd = crate::numkit::fd_gradient(
                    |t| sn_log_pdf(t, &params).unwrap(),
                    &theta,
                );
                for i in 0..p_dim {
                    assert_relative_eq!(g[i], g_fd[i], max_relative = 1e-5, epsilon = 1e-6);
                }
                let h = sn_log_pdf_hess(&theta, &params).unwrap();
                let h_fd = crate::numkit::fd_hessian(
                    |t| sn_log_pdf(t, &params).unwrap(),
                    &theta,
                );
                for i in 0..p_dim {
                    for j in 0..p_dim {
                        assert_relative_eq!(
                            h[(i, j)],
                            h_fd[(i, j)],
                            max_relative = 1e-4,
                            epsilon = 1e-4
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn hess_at_alpha_zero_is_neg_precision() {
        let params = univariate(1.0, 4.0, 0.0);
        let h = sn_log_pdf_hess(&DenseVector::from(vec![0.3]), &params).unwrap();
        assert_relative_eq!(h[(0, 0)], -0.25, max_relative = 1e-12);
        let g = sn_log_pdf_grad(&DenseVector::from(vec![0.3]), &params).unwrap();
        assert_relative_eq!(g[0], -(0.3 - 1.0) / 4.0, max_relative = 1e-12);
    }

    #[test]
    fn moments_normal_case() {
        let params = univariate(2.0, 3.0, 0.0);
        let m = moments_from_params(&params).unwrap();
        assert_relative_eq!(m.mu[0], 2.0, max_relative = 1e-14);
        assert_relative_eq!(m.sigma.base()[(0, 0)], 3.0, max_relative = 1e-14);
        assert!(m.gamma[0].abs() < 1e-14);
    }

    #[test]
    fn moments_unit_alpha_one() {
        // delta = 1/sqrt(2), mean = sqrt(2/pi)/sqrt(2) = 1/sqrt(pi)
        let params = univariate(0.0, 1.0, 1.0);
        let m = moments_from_params(&params).unwrap();
        assert_relative_eq!(
            m.mu[0],
            1.0 / libm::sqrt(core::f64::consts::PI),
            max_relative = 1e-12
        );
    }

    #[test]
    fn moments_agree_with_monte_carlo() {
        let mut rng = Rng::from_seed(77);
        let params = random_admissible_params(2, &mut rng);
        let n = 1_000_000usize;
        let draws = sn_sample(&params, n, 404).unwrap();
        let mc = sample_moments(&draws).unwrap();
        let exact = moments_from_params(&params).unwrap();
        for i in 0..2 {
            let se = libm::sqrt(exact.sigma.base()[(i, i)] / n as f64);
            assert!(
                (mc.mu[i] - exact.mu[i]).abs() < 4.0 * se,
                "mean off: {} vs {}",
                mc.mu[i],
                exact.mu[i]
            );
            // skewness standard error ~ sqrt(6/n)
            assert!(
                (mc.gamma[i] - exact.gamma[i]).abs() < 4.0 * libm::sqrt(6.0 / n as f64) + 0.003,
                "skew off: {} vs {}",
                mc.gamma[i],
                exact.gamma[i]
            );
        }
    }

    #[test]
    fn round_trip_identity() {
        let mut rng = Rng::from_seed(5150);
        for p_dim in [1usize, 2, 5] {
            for _ in 0..10 {
                let params = random_admissible_params(p_dim, &mut rng);
                let m = moments_from_params(&params).unwrap();
                let back = params_from_moments(&m).unwrap();
                for i in 0..p_dim {
                    assert_relative_eq!(back.xi()[i], params.xi()[i], epsilon = 1e-8);
                    assert_relative_eq!(
                        back.alpha()[i],
                        params.alpha()[i],
                        max_relative = 1e-6,
                        epsilon = 1e-8
                    );
                    for j in 0..p_dim {
                        assert_relative_eq!(
                            back.omega().base()[(i, j)],
                            params.omega().base()[(i, j)],
                            max_relative = 1e-8,
                            epsilon = 1e-8
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn zero_skew_gives_normal_params() {
        let sigma = SpdMatrix::from_symmetric(
            DenseMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap(),
        )
        .unwrap();
        let m = CenteredMoments {
            mu: DenseVector::from(vec![1.0, -1.0]),
            sigma: sigma.clone(),
            gamma: DenseVector::from(vec![0.0, 0.0]),
        };
        let p = params_from_moments(&m).unwrap();
        assert!(p.alpha().norm_inf() < 1e-12);
        for i in 0..2 {
            assert_relative_eq!(p.xi()[i], m.mu[i], max_relative = 1e-12);
            for j in 0..2 {
                assert_relative_eq!(
                    p.omega().base()[(i, j)],
                    sigma.base()[(i, j)],
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn inadmissible_skewness_rejected() {
        let m = CenteredMoments {
            mu: DenseVector::from(vec![0.0]),
            sigma: SpdMatrix::identity(1),
            gamma: DenseVector::from(vec![1.2]),
        };
        assert!(matches!(
            params_from_moments(&m),
            Err(SnError::InadmissibleSkewness { component: 0, .. })
        ));
    }

    #[test]
    fn recovers_univariate_from_exact_moments() {
        let params = univariate(0.0, 1.0, 3.0);
        let m = moments_from_params(&params).unwrap();
        let back = params_from_moments(&m).unwrap();
        assert_relative_eq!(back.xi()[0], 0.0, epsilon = 1e-6);
        assert_relative_eq!(back.omega().base()[(0, 0)], 1.0, max_relative = 1e-6);
        assert_relative_eq!(back.alpha()[0], 3.0, max_relative = 1e-6);
    }

    #[test]
    fn sampling_deterministic_and_skewed() {
        let params = univariate(0.0, 1.0, 5.0);
        let a = sn_sample(&params, 1000, 8).unwrap();
        let b = sn_sample(&params, 1000, 8).unwrap();
        assert_eq!(a, b);

        let draws = sn_sample(&params, 1_000_000, 9).unwrap();
        let m = sample_moments(&draws).unwrap();
        let exact = moments_from_params(&params).unwrap();
        assert!(
            (m.gamma[0] - exact.gamma[0]).abs() < 0.01,
            "sample skew {} vs analytic {}",
            m.gamma[0],
            exact.gamma[0]
        );
    }

    fn chain_from_draws(draws: Vec<DenseVector>) -> Chain {
        Chain {
            draws,
            acceptance_rate: 1.0,
            final_proposal_cov: SpdMatrix::identity(1),
            seed: 0,
        }
    }

    #[test]
    fn fit_recovers_shape_from_sn_draws() {
        let params = univariate(0.0, 1.0, 3.0);
        let draws = sn_sample(&params, 10_000, 31).unwrap();
        let fit = fit_sn_mm(&chain_from_draws(draws), 10, None).unwrap();
        assert!(!fit.clipped);
        let alpha = fit.params.alpha()[0];
        assert!((alpha - 3.0).abs() < 0.25 * 3.0, "alpha = {alpha}");
    }

    #[test]
    fn fit_on_normal_draws_gives_small_alpha() {
        let mut rng = Rng::from_seed(55);
        let draws: Vec<DenseVector> = (0..10_000)
            .map(|_| DenseVector::from(vec![rng.standard_normal()]))
            .collect();
        let fit = fit_sn_mm(&chain_from_draws(draws), 10, None).unwrap();
        assert!(fit.params.alpha()[0].abs() < 0.3);
    }

    #[test]
    fn fit_clips_excess_skewness() {
        // chi-square(1) draws have skewness ~2.83, far past the bound
        let mut rng = Rng::from_seed(56);
        let draws: Vec<DenseVector> = (0..10_000)
            .map(|_| {
                let z = rng.standard_normal();
                DenseVector::from(vec![z * z])
            })
            .collect();
        let fit = fit_sn_mm(&chain_from_draws(draws), 10, None).unwrap();
        assert!(fit.clipped);
        // the clipped fit is still a valid parameter triple
        assert!(moments_from_params(&fit.params).is_ok());
    }

    #[test]
    fn fit_uses_resampler() {
        let params = univariate(0.0, 1.0, 2.0);
        let good_draws = sn_sample(&params, 10_000, 77).unwrap();
        let mut rng = Rng::from_seed(57);
        let bad_draws: Vec<DenseVector> = (0..10_000)
            .map(|_| {
                let z = rng.standard_normal();
                DenseVector::from(vec![z * z])
            })
            .collect();
        let mut calls = 0usize;
        let mut resampler = |_attempt: usize| {
            calls += 1;
            Ok(chain_from_draws(good_draws.clone()))
        };
        let fit = fit_sn_mm(&chain_from_draws(bad_draws), 10, Some(&mut resampler)).unwrap();
        assert_eq!(calls, 1);
        assert!(!fit.clipped);
    }

    #[test]
    fn concavity_random_directions() {
        let mut rng = Rng::from_seed(2718);
        let mut count = 0usize;
        for p_dim in [1usize, 2, 5] {
            for _ in 0..334 {
                let params = random_admissible_params(p_dim, &mut rng);
                let theta = DenseVector::from(
                    (0..p_dim)
                        .map(|_| 3.0 * rng.standard_normal())
                        .collect::<Vec<_>>(),
                );
                let h = sn_log_pdf_hess(&theta, &params).unwrap();
                let v = DenseVector::from(
                    (0..p_dim).map(|_| rng.standard_normal()).collect::<Vec<_>>(),
                );
                assert!(h.quad_form(&v) < 0.0, "v'Hv >= 0");
                count += 1;
            }
        }
        assert!(count >= 1000);
    }

    #[test]
    fn marginal_skewness_inside_bound() {
        let mut rng = Rng::from_seed(606);
        for _ in 0..50 {
            let params = random_admissible_params(3, &mut rng);
            let m = moments_from_params(&params).unwrap();
            for i in 0..3 {
                assert!(m.gamma[i].abs() < SKEWNESS_BOUND);
            }
        }
    }

    #[test]
    fn serde_wire_format_round_trip() {
        let mut rng = Rng::from_seed(99);
        let params = random_admissible_params(2, &mut rng);
        let json = serde_json::to_string(&params).unwrap();
        assert!(json.contains("\"xi\""));
        assert!(json.contains("\"omega\""));
        assert!(json.contains("\"alpha\""));
        let back: SnParams = serde_json::from_str(&json).unwrap();
        for i in 0..2 {
            assert_eq!(back.xi()[i], params.xi()[i]);
            assert_eq!(back.alpha()[i], params.alpha()[i]);
        }
    }

    #[test]
    fn mode_of_skewed_density_matches_grid_search() {
        let params = univariate(0.0, 1.0, 3.0);
        let mode = sn_mode(&params, 1e-10, 200).unwrap();
        let mut best = (f64::NEG_INFINITY, 0.0);
        let n = 2_000_000usize;
        for i in 0..n {
            let x = -2.0 + 4.0 * i as f64 / n as f64;
            let v = sn_log_pdf(&DenseVector::from(vec![x]), &params).unwrap();
            if v > best.0 {
                best = (v, x);
            }
        }
        assert!((mode[0] - best.1).abs() < 1e-5, "{} vs {}", mode[0], best.1);
    }
}
