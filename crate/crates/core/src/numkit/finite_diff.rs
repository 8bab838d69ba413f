use alloc::vec;

use super::{DenseMatrix, DenseVector};

fn step(x: f64) -> f64 {
    1e-5 * (1.0 + libm::fabs(x))
}

// second differences divide by h^2, so the step is near eps^(1/4)
fn step2(x: f64) -> f64 {
    3e-4 * (1.0 + libm::fabs(x))
}

/// Central-difference gradient with componentwise step 1e-5 (1 + |x_i|).
pub fn fd_gradient<F: Fn(&DenseVector) -> f64>(f: F, x: &DenseVector) -> DenseVector {
    let p = x.dim();
    let mut g = vec![0.0; p];
    let mut xp = x.clone();
    for i in 0..p {
        let h = step(x[i]);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    DenseVector::from(g)
}

/// Central-difference Hessian (symmetric by construction).
pub fn fd_hessian<F: Fn(&DenseVector) -> f64>(f: F, x: &DenseVector) -> DenseMatrix {
    let p = x.dim();
    let mut h = DenseMatrix::zeros(p, p);
    let f0 = f(x);
    let mut xp = x.clone();
    for i in 0..p {
        let hi = step2(x[i]);
        xp[i] = x[i] + hi;
        let fp = f(&xp);
        xp[i] = x[i] - hi;
        let fm = f(&xp);
        xp[i] = x[i];
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in (i + 1)..p {
            let hj = step2(x[j]);
            let mut eval = |si: f64, sj: f64| {
                xp[i] = x[i] + si * hi;
                xp[j] = x[j] + sj * hj;
                let v = f(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                / (4.0 * hi * hj);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadratic_derivatives() {
        // f(x) = x0^2 + 3 x0 x1 - 2 x1^2
        let f = |x: &DenseVector| x[0] * x[0] + 3.0 * x[0] * x[1] - 2.0 * x[1] * x[1];
        let x = DenseVector::from(vec![1.5, -0.5]);
        let g = fd_gradient(f, &x);
        assert_relative_eq!(g[0], 2.0 * 1.5 + 3.0 * -0.5, max_relative = 1e-7);
        assert_relative_eq!(g[1], 3.0 * 1.5 - 4.0 * -0.5, max_relative = 1e-7);
        let h = fd_hessian(f, &x);
        assert_relative_eq!(h[(0, 0)], 2.0, max_relative = 1e-4);
        assert_relative_eq!(h[(0, 1)], 3.0, max_relative = 1e-4);
        assert_relative_eq!(h[(1, 1)], -4.0, max_relative = 1e-4);
    }
}
