//! Adaptive random-walk Metropolis sampling from any unnormalized log-density.
//!
//! Adaptation (step-size tuning toward the usual acceptance targets plus a
//! covariance refresh from the running sample covariance) happens during
//! burn-in only and is frozen afterward, so the post-burn-in chain has the
//! target as its exact stationary distribution. Every chain is a pure
//! function of (logf, config): same seed, same draws, bit for bit.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::numkit::{DenseMatrix, DenseVector, NumError, SpdMatrix};
use crate::random::Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum McmcError {
    /// logf is -inf or NaN at the initial point.
    BadInitialPoint,
    /// Post-burn-in acceptance rate below 1%.
    DegenerateChain { acceptance_rate: f64 },
    Numeric(NumError),
}

impl fmt::Display for McmcError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            McmcError::BadInitialPoint => write!(f, "logf not finite at initial point"),
            McmcError::DegenerateChain { acceptance_rate } => {
                write!(f, "degenerate chain: acceptance rate {acceptance_rate}")
            }
            McmcError::Numeric(e) => write!(f, "numeric failure in sampler: {e}"),
        }
    }
}

impl core::error::Error for McmcError {}

impl From<NumError> for McmcError {
    fn from(e: NumError) -> Self {
        McmcError::Numeric(e)
    }
}

/// Sampler configuration. `n_draws` counts post-burn-in states.
#[derive(Clone, Debug)]
pub struct McmcConfig {
    pub n_draws: usize,
    pub burnin: usize,
    pub initial_point: DenseVector,
    pub initial_step_scale: f64,
    pub seed: u64,
    pub thin: usize,
}

impl McmcConfig {
    /// Defaults: 10000 draws after 5000 burn-in, step 2.38/sqrt(p), thin 1.
    pub fn new(initial_point: DenseVector, seed: u64) -> Self {
        let p = initial_point.dim() as f64;
        Self {
            n_draws: 10_000,
            burnin: 5_000,
            initial_point,
            initial_step_scale: 2.38 / libm::sqrt(p),
            seed,
            thin: 1,
        }
    }
}

/// MCMC draws from one target plus diagnostics and the seed that made them.
#[derive(Clone, Debug)]
pub struct Chain {
    pub draws: Vec<DenseVector>,
    pub acceptance_rate: f64,
    pub final_proposal_cov: SpdMatrix,
    pub seed: u64,
}

const ADAPT_WINDOW: usize = 100;
const ADAPT_RATE: f64 = 0.05;
const COV_REGULARIZATION: f64 = 1e-6;

struct RunningCov {
    n: f64,
    mean: Vec<f64>,
    m2: DenseMatrix,
}

impl RunningCov {
    fn new(p: usize) -> Self {
        Self {
            n: 0.0,
            mean: vec![0.0; p],
            m2: DenseMatrix::zeros(p, p),
        }
    }

    fn push(&mut self, x: &DenseVector) {
        let p = self.mean.len();
        self.n += 1.0;
        let mut delta = vec![0.0; p];
        for i in 0..p {
            delta[i] = x[i] - self.mean[i];
            self.mean[i] += delta[i] / self.n;
        }
        for i in 0..p {
            for j in 0..p {
                self.m2[(i, j)] += delta[i] * (x[j] - self.mean[j]);
            }
        }
    }

    fn covariance(&self) -> Option<DenseMatrix> {
        if self.n < 2.0 {
            return None;
        }
        let mut c = self.m2.scale(1.0 / (self.n - 1.0));
        // enforce exact symmetry
        let p = self.mean.len();
        for i in 0..p {
            for j in (i + 1)..p {
                let v = 0.5 * (c[(i, j)] + c[(j, i)]);
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
        }
        Some(c)
    }
}

/// Draws from the unnormalized log-density `logf`.
pub fn sample<F: Fn(&DenseVector) -> f64>(logf: F, config: &McmcConfig) -> Result<Chain, McmcError> {
    let p = config.initial_point.dim();
    let thin = config.thin.max(1);
    let mut rng = Rng::from_seed(config.seed);

    let mut state = config.initial_point.clone();
    let mut state_logf = logf(&state);
    if !state_logf.is_finite() {
        return Err(McmcError::BadInitialPoint);
    }

    let target_acc = if p == 1 { 0.44 } else { 0.234 };
    let mut base_cov = SpdMatrix::identity(p);
    let mut step_scale = config.initial_step_scale;
    let mut cov_replaced = false;

    let mut running = RunningCov::new(p);
    let mut window_accepts = 0usize;

    let propose = |rng: &mut Rng, state: &DenseVector, chol: &DenseMatrix, scale: f64| {
        let z = DenseVector::from((0..p).map(|_| rng.standard_normal()).collect::<Vec<_>>());
        state.add(&chol.matvec(&z).scale(scale))
    };

    // burn-in with adaptation
    for it in 0..config.burnin {
        let cand = propose(&mut rng, &state, base_cov.chol(), step_scale);
        let cand_logf = logf(&cand);
        let accept = cand_logf.is_finite()
            && libm::log(rng.uniform()) < cand_logf - state_logf;
        if accept {
            state = cand;
            state_logf = cand_logf;
            window_accepts += 1;
        }
        running.push(&state);

        if (it + 1) % ADAPT_WINDOW == 0 {
            let rate = window_accepts as f64 / ADAPT_WINDOW as f64;
            step_scale *= libm::exp(if rate > target_acc { ADAPT_RATE } else { -ADAPT_RATE });
            window_accepts = 0;

            if it + 1 >= config.burnin / 2 {
                if let Some(mut cov) = running.covariance() {
                    for i in 0..p {
                        cov[(i, i)] += COV_REGULARIZATION;
                    }
                    let scaled = cov.scale(2.38 * 2.38 / p as f64);
                    if let Ok(spd) = SpdMatrix::from_symmetric(scaled) {
                        base_cov = spd;
                        if !cov_replaced {
                            step_scale = 1.0;
                            cov_replaced = true;
                        }
                    }
                }
            }
        }
    }

    // frozen proposal for the sampling phase
    let final_proposal_cov =
        SpdMatrix::from_symmetric(base_cov.base().scale(step_scale * step_scale))?;

    let mut draws = Vec::with_capacity(config.n_draws);
    let mut accepts = 0usize;
    let total_proposals = config.n_draws * thin;
    for it in 0..total_proposals {
        let cand = propose(&mut rng, &state, base_cov.chol(), step_scale);
        let cand_logf = logf(&cand);
        if cand_logf.is_finite() && libm::log(rng.uniform()) < cand_logf - state_logf {
            state = cand;
            state_logf = cand_logf;
            accepts += 1;
        }
        if (it + 1) % thin == 0 {
            draws.push(state.clone());
        }
    }

    let acceptance_rate = accepts as f64 / total_proposals as f64;
    if acceptance_rate < 0.01 {
        return Err(McmcError::DegenerateChain { acceptance_rate });
    }

    Ok(Chain {
        draws,
        acceptance_rate,
        final_proposal_cov,
        seed: config.seed,
    })
}

/// Effective sample size of a scalar series by the batch-means method.
pub fn batch_means_ess(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 16 {
        return n as f64;
    }
    let b = libm::sqrt(n as f64) as usize;
    let a = n / b;
    let used = a * b;
    let mean: f64 = values[..used].iter().sum::<f64>() / used as f64;
    let s2: f64 = values[..used].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (used as f64 - 1.0);
    let mut var_bm = 0.0;
    for k in 0..a {
        let bm: f64 = values[k * b..(k + 1) * b].iter().sum::<f64>() / b as f64;
        var_bm += (bm - mean) * (bm - mean);
    }
    var_bm *= b as f64 / (a as f64 - 1.0);
    if var_bm <= 0.0 {
        return used as f64;
    }
    (used as f64 * s2 / var_bm).min(used as f64)
}
