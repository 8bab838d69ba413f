use alloc::vec;

use super::{DenseMatrix, DenseVector, NumError, SpdMatrix};

/// Sample mean, covariance, and componentwise skewness of a set of draws:
/// the moment-matching intermediary for the centered skew-normal
/// parametrization.
#[derive(Clone, Debug)]
pub struct CenteredMoments {
    pub mu: DenseVector,
    pub sigma: SpdMatrix,
    pub gamma: DenseVector,
}

/// Mean, unbiased covariance (n-1 denominator), and componentwise skewness
/// m3 / m2^{3/2} from biased central moments.
pub fn sample_moments(draws: &[DenseVector]) -> Result<CenteredMoments, NumError> {
    if draws.len() < 3 {
        return Err(NumError::TooFewDraws);
    }
    let p = draws[0].dim();
    if draws.iter().any(|d| d.dim() != p) {
        return Err(NumError::DimensionMismatch);
    }
    let n = draws.len() as f64;

    let mut mean = vec![0.0; p];
    for d in draws {
        for (m, v) in mean.iter_mut().zip(d.iter()) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }

    let mut cov = DenseMatrix::zeros(p, p);
    let mut m2 = vec![0.0; p];
    let mut m3 = vec![0.0; p];
    for d in draws {
        for i in 0..p {
            let ci = d[i] - mean[i];
            m2[i] += ci * ci;
            m3[i] += ci * ci * ci;
            for j in i..p {
                cov[(i, j)] += ci * (d[j] - mean[j]);
            }
        }
    }
    for i in 0..p {
        for j in i..p {
            let v = cov[(i, j)] / (n - 1.0);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let gamma: alloc::vec::Vec<f64> = (0..p)
        .map(|i| {
            let v2 = m2[i] / n;
            let v3 = m3[i] / n;
            v3 / libm::pow(v2, 1.5)
        })
        .collect();
    if gamma.iter().any(|g| !g.is_finite()) {
        return Err(NumError::NotFinite);
    }

    Ok(CenteredMoments {
        mu: DenseVector::from(mean),
        sigma: SpdMatrix::from_symmetric(cov)?,
        gamma: DenseVector::from(gamma),
    })
}
