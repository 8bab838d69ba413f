use super::NumError;

/// ln(2 pi)
pub const LN_2PI: f64 = 1.837877066409345483560659472811235279723;

const SQRT_2: f64 = core::f64::consts::SQRT_2;

// Lanczos approximation, g = 7, 9 coefficients.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
];

/// ln Gamma(x) for x > 0.
pub fn log_gamma(x: f64) -> Result<f64, NumError> {
    if !(x > 0.0) {
        return Err(NumError::DomainError);
    }
    Ok(log_gamma_unchecked(x))
}

fn log_gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
        return libm::log(core::f64::consts::PI / libm::sin(core::f64::consts::PI * x))
            - log_gamma_unchecked(1.0 - x);
    }
    let z = x - 1.0;
    let mut series = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        series += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * libm::log(2.0 * core::f64::consts::PI) + (z + 0.5) * libm::log(t) - t
        + libm::log(series)
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    libm::exp(-0.5 * x * x - 0.5 * LN_2PI)
}

/// Log of the standard normal density.
pub fn std_normal_log_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * LN_2PI
}

/// Standard normal CDF via the complementary error function.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// log Phi(x), stable far into the left tail.
///
/// For x < -8 the direct CDF loses accuracy, so the asymptotic Mills-ratio
/// expansion Phi(x) = phi(x)/(-x) * (1 - 1/x^2 + 3/x^4 - 15/x^6 + ...) is used.
pub fn std_normal_log_cdf(x: f64) -> f64 {
    if x >= -8.0 {
        libm::log(0.5 * libm::erfc(-x / SQRT_2))
    } else {
        let z = x * x;
        let inv = 1.0 / z;
        let series = 1.0 + inv * (-1.0 + inv * (3.0 + inv * (-15.0 + inv * (105.0 - 945.0 * inv))));
        -0.5 * z - 0.5 * LN_2PI - libm::log(-x) + libm::log(series)
    }
}

/// phi(t)/Phi(t), the derivative of t -> log Phi(t).
pub fn mills_ratio(t: f64) -> f64 {
    libm::exp(std_normal_log_pdf(t) - std_normal_log_cdf(t))
}

/// Second derivative of t -> log Phi(t):
/// g(t) = -r(t) (t + r(t)) with r the Mills ratio; g(t) <= 0 everywhere.
///
/// Computed through the ratio form rather than phi' Phi - phi^2, which
/// cancels catastrophically for large |t|.
pub fn log_cdf_second_deriv(t: f64) -> f64 {
    let r = mills_ratio(t);
    -r * (t + r)
}
