//! Small quadrature toolbox: Gauss-Chebyshev for endpoint square-root
//! singularities, fixed Gauss-Legendre panels, and adaptive Simpson.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Gauss-Chebyshev quadrature for integrals of the form
/// `int_a^b f(x) / sqrt((x-a)(b-x)) dx = (pi/n) sum f(m + h cos((2k-1)pi/2n))`.
///
/// `f` must be smooth on [a, b]; node count doubles until two refinements
/// agree to `tol`.
pub fn chebyshev_sqrt_weight<F>(f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let eval = |n: usize| -> f64 {
        let mut s = 0.0;
        for k in 1..=n {
            let t = (2.0 * k as f64 - 1.0) * std::f64::consts::PI / (2.0 * n as f64);
            s += f(m + h * t.cos());
        }
        s * std::f64::consts::PI / n as f64
    };
    let mut n = 16;
    let mut prev = eval(n);
    for _ in 0..10 {
        n *= 2;
        let next = eval(n);
        let err = (next - prev).abs();
        if err <= tol * next.abs().max(1.0) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::QuadratureFailure((prev).abs()))
}

/// 10-point Gauss-Legendre nodes/weights on [-1, 1].
const GL10_X: [f64; 5] = [
    0.148874338981631211,
    0.433395394129247191,
    0.679409568299024406,
    0.865063366688984511,
    0.973906528517171720,
];
const GL10_W: [f64; 5] = [
    0.295524224714752870,
    0.269266719309996355,
    0.219086362515982044,
    0.149451349150580593,
    0.066671344308688138,
];

/// Fixed 10-point Gauss-Legendre rule on [a, b] for a complex integrand.
pub fn gauss10<F>(f: &F, a: f64, b: f64) -> Complex64
where
    F: Fn(f64) -> Complex64,
{
    let m = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = Complex64::new(0.0, 0.0);
    for i in 0..5 {
        s += (f(m + h * GL10_X[i]) + f(m - h * GL10_X[i])) * GL10_W[i];
    }
    s * h
}

/// Adaptive panel integration: split [a, b] until gauss10 on a panel agrees
/// with the sum over its two halves.
pub fn adaptive_gauss<F>(f: &F, a: f64, b: f64, tol: f64) -> Result<Complex64>
where
    F: Fn(f64) -> Complex64,
{
    fn rec<F: Fn(f64) -> Complex64>(
        f: &F,
        a: f64,
        b: f64,
        whole: Complex64,
        tol: f64,
        depth: usize,
    ) -> Result<Complex64> {
        let m = 0.5 * (a + b);
        let left = gauss10(f, a, m);
        let right = gauss10(f, m, b);
        let err = (left + right - whole).norm();
        if err <= tol || depth >= 24 {
            if depth >= 24 && err > tol * 100.0 {
                return Err(Error::QuadratureFailure(err));
            }
            return Ok(left + right);
        }
        Ok(rec(f, a, m, left, tol * 0.5, depth + 1)? + rec(f, m, b, right, tol * 0.5, depth + 1)?)
    }
    let whole = gauss10(f, a, b);
    rec(f, a, b, whole, tol, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chebyshev_known_integral() {
        // int_-1^1 dx / sqrt(1-x^2) = pi
        let v = chebyshev_sqrt_weight(|_| 1.0, -1.0, 1.0, 1e-12).unwrap();
        assert!((v - std::f64::consts::PI).abs() < 1e-12);
        // int_0^2 x dx / sqrt(x(2-x)) = pi (mean value of x is 1)
        let v = chebyshev_sqrt_weight(|x| x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn adaptive_gauss_exp() {
        let f = |t: f64| Complex64::new(0.0, t).exp();
        let v = adaptive_gauss(&f, 0.0, 1.0, 1e-12).unwrap();
        let exact = Complex64::new(1.0f64.sin(), 1.0 - 1.0f64.cos());
        assert!((v - exact).norm() < 1e-12);
    }
}
