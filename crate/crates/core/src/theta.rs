//! Genus-g Riemann theta functions with characteristics.
//!
//! The basic object is the lattice sum
//!
//! ```text
//! theta(z|Omega) = sum_{n in Z^g} exp(i*pi*(n.Omega n + 2 n.z))
//! ```
//!
//! truncated to a box around the peak of the Gaussian envelope, with the
//! truncation radius chosen so the discarded tail is provably below the
//! requested tolerance.  For large |Im z| the sum is rebalanced by the factor
//! `exp(pi * Im z . (Im Omega)^-1 Im z)`; internally values are kept as
//! (mantissa, log-scale) pairs so products of many thetas cannot overflow.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// The "interesting half" of a period matrix: a symmetric g x g complex
/// matrix with positive definite imaginary part.
#[derive(Debug, Clone)]
pub struct PeriodMatrix {
    omega: DMatrix<Complex64>,
    im: DMatrix<f64>,
    im_inv: DMatrix<f64>,
    lambda_min: f64,
}

impl PeriodMatrix {
    pub const TOL_SYM: f64 = 1e-8;

    pub fn new(omega: DMatrix<Complex64>) -> Result<Self> {
        let g = omega.nrows();
        if g == 0 || omega.ncols() != g {
            return Err(Error::InvalidInput("period matrix must be square and non-empty".into()));
        }
        let mut dev: f64 = 0.0;
        for i in 0..g {
            for j in 0..g {
                dev = dev.max((omega[(i, j)] - omega[(j, i)]).norm());
            }
        }
        if dev > Self::TOL_SYM {
            return Err(Error::NotSymmetric(dev));
        }
        let im = omega.map(|v| v.im);
        let im = (&im + im.transpose()) * 0.5;
        let eig = im.clone().symmetric_eigen();
        let lambda_min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(lambda_min > 0.0) {
            return Err(Error::NonPositiveDefinite);
        }
        let im_inv = im
            .clone()
            .try_inverse()
            .ok_or(Error::NonPositiveDefinite)?;
        Ok(Self { omega, im, im_inv, lambda_min })
    }

    pub fn genus(&self) -> usize {
        self.omega.nrows()
    }

    pub fn omega(&self) -> &DMatrix<Complex64> {
        &self.omega
    }

    pub fn im(&self) -> &DMatrix<f64> {
        &self.im
    }

    /// Largest |Re Omega_ij|; zero (within tolerance) for M-curves.
    pub fn max_re(&self) -> f64 {
        self.omega.iter().map(|v| v.re.abs()).fold(0.0, f64::max)
    }

    pub fn is_purely_imaginary(&self, tol: f64) -> bool {
        self.max_re() <= tol
    }
}

/// Half-integer theta characteristic, stored as twice the value so parity is
/// exact integer arithmetic.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ThetaChar {
    /// 2 * delta'
    pub twice_p: Vec<i64>,
    /// 2 * delta''
    pub twice_pp: Vec<i64>,
}

impl ThetaChar {
    pub fn new(twice_p: Vec<i64>, twice_pp: Vec<i64>) -> Result<Self> {
        if twice_p.len() != twice_pp.len() || twice_p.is_empty() {
            return Err(Error::InvalidInput("characteristic halves must have equal positive length".into()));
        }
        Ok(Self { twice_p, twice_pp })
    }

    pub fn zero(g: usize) -> Self {
        Self { twice_p: vec![0; g], twice_pp: vec![0; g] }
    }

    /// 4 delta'.delta'' mod 2; the characteristic is odd iff this is 1.
    pub fn parity(&self) -> i64 {
        let s: i64 = self.twice_p.iter().zip(&self.twice_pp).map(|(a, b)| a * b).sum();
        s.rem_euclid(2)
    }

    pub fn is_odd(&self) -> bool {
        self.parity() == 1
    }

    pub fn genus(&self) -> usize {
        self.twice_p.len()
    }

    pub fn delta_p(&self) -> DVector<f64> {
        DVector::from_iterator(self.twice_p.len(), self.twice_p.iter().map(|&v| v as f64 / 2.0))
    }

    pub fn delta_pp(&self) -> DVector<f64> {
        DVector::from_iterator(self.twice_pp.len(), self.twice_pp.iter().map(|&v| v as f64 / 2.0))
    }

    pub fn is_zero(&self) -> bool {
        self.twice_p.iter().all(|&v| v == 0) && self.twice_pp.iter().all(|&v| v == 0)
    }
}

/// Truncation control for the lattice sums.
#[derive(Debug, Clone, Copy)]
pub struct ThetaConfig {
    /// Absolute error target for the rebalanced sum.
    pub tol: f64,
}

impl Default for ThetaConfig {
    fn default() -> Self {
        Self { tol: 1e-13 }
    }
}

/// A complex number stored as mantissa * exp(log_scale).
#[derive(Debug, Clone, Copy)]
pub struct Scaled {
    pub mantissa: Complex64,
    pub log_scale: f64,
}

impl Scaled {
    pub fn new(mantissa: Complex64, log_scale: f64) -> Self {
        Self { mantissa, log_scale }
    }

    pub fn from_value(v: Complex64) -> Self {
        Self { mantissa: v, log_scale: 0.0 }
    }

    pub fn one() -> Self {
        Self { mantissa: Complex64::new(1.0, 0.0), log_scale: 0.0 }
    }

    pub fn value(&self) -> Result<Complex64> {
        let ln = self.log_scale + self.mantissa.norm().max(f64::MIN_POSITIVE).ln();
        if ln > 700.0 {
            return Err(Error::Overflow(ln));
        }
        Ok(self.mantissa * self.log_scale.exp())
    }

    pub fn mul(&self, other: &Scaled) -> Scaled {
        Scaled::new(self.mantissa * other.mantissa, self.log_scale + other.log_scale)
    }

    pub fn div(&self, other: &Scaled) -> Scaled {
        Scaled::new(self.mantissa / other.mantissa, self.log_scale - other.log_scale)
    }

    pub fn powi(&self, k: i64) -> Scaled {
        if k == 0 {
            return Scaled::one();
        }
        let m = self.mantissa.norm();
        // renormalize so the mantissa power stays tame
        let unit = self.mantissa / m;
        Scaled::new(unit.powi(k as i32), (self.log_scale + m.ln()) * k as f64)
    }

    pub fn norm_ln(&self) -> f64 {
        self.log_scale + self.mantissa.norm().max(f64::MIN_POSITIVE).ln()
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa == Complex64::new(0.0, 0.0)
    }
}

fn to_dvec(z: &[Complex64]) -> DVector<Complex64> {
    DVector::from_column_slice(z)
}

/// Smallest integer radius r such that the lattice tail
/// `sum_{m >= r} (2m+3)^g * factor(m) * exp(-pi lambda_min m^2)` is below tol.
fn truncation_radius(pm: &PeriodMatrix, tol: f64, grad_center: Option<f64>) -> Result<usize> {
    let g = pm.genus() as i32;
    let lam = pm.lambda_min;
    let tail = |r: usize| -> f64 {
        let mut s = 0.0;
        for m in r..(r + 400) {
            let mf = m as f64;
            let mut t = (2.0 * mf + 3.0).powi(g) * (-PI * lam * mf * mf).exp();
            if let Some(c) = grad_center {
                t *= 2.0 * PI * (mf + 1.0 + c);
            }
            s += t;
            if t < tol * 1e-8 {
                break;
            }
        }
        s
    };
    for r in 1..400 {
        if tail(r) < tol {
            return Ok(r);
        }
    }
    Err(Error::Numeric("theta truncation radius exceeded 400".into()))
}

/// Rebalanced lattice sum.  Returns theta(z|Omega) as (mantissa, log-scale)
/// and, when requested, the gradient with the same log-scale.
fn theta_sum(
    z: &DVector<Complex64>,
    pm: &PeriodMatrix,
    cfg: &ThetaConfig,
    want_grad: bool,
) -> Result<(Scaled, Option<DVector<Complex64>>)> {
    let g = pm.genus();
    if z.len() != g {
        return Err(Error::InvalidInput(format!("argument has length {}, genus is {}", z.len(), g)));
    }
    let y = DVector::from_iterator(g, z.iter().map(|v| v.im));
    let c = &pm.im_inv * &y; // Gaussian peak sits at n = -c
    let log_scale = PI * y.dot(&c);
    let c_inf = c.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
    let radius = truncation_radius(pm, cfg.tol, want_grad.then_some(c_inf))?;

    let lo: Vec<i64> = (0..g).map(|i| (-c[i] - radius as f64).floor() as i64 + 1).collect();
    let hi: Vec<i64> = (0..g).map(|i| (-c[i] + radius as f64).ceil() as i64 - 1).collect();

    let mut sum = Complex64::new(0.0, 0.0);
    let mut grad = want_grad.then(|| DVector::from_element(g, Complex64::new(0.0, 0.0)));

    let mut n: Vec<i64> = lo.clone();
    'outer: loop {
        // exponent = i*pi*(n.Omega n + 2 n.z) - log_scale
        let mut quad = Complex64::new(0.0, 0.0);
        let mut lin = Complex64::new(0.0, 0.0);
        for i in 0..g {
            let ni = n[i] as f64;
            lin += z[i] * ni;
            let mut row = Complex64::new(0.0, 0.0);
            for j in 0..g {
                row += pm.omega[(i, j)] * (n[j] as f64);
            }
            quad += row * ni;
        }
        let expo = Complex64::new(0.0, PI) * (quad + lin * 2.0) - log_scale;
        let term = expo.exp();
        sum += term;
        if let Some(gr) = grad.as_mut() {
            for i in 0..g {
                gr[i] += term * Complex64::new(0.0, 2.0 * PI * n[i] as f64);
            }
        }
        // advance the odometer
        for i in 0..g {
            n[i] += 1;
            if n[i] <= hi[i] {
                continue 'outer;
            }
            n[i] = lo[i];
        }
        break;
    }
    Ok((Scaled::new(sum, log_scale), grad))
}

/// theta(z|Omega) as a scaled value (never overflows).
pub fn theta_scaled(z: &[Complex64], pm: &PeriodMatrix, cfg: &ThetaConfig) -> Result<Scaled> {
    Ok(theta_sum(&to_dvec(z), pm, cfg, false)?.0)
}

/// theta(z|Omega) truncated to guaranteed absolute error < cfg.tol
/// (relative to the rebalanced scale).
pub fn theta(z: &[Complex64], pm: &PeriodMatrix, cfg: &ThetaConfig) -> Result<Complex64> {
    theta_scaled(z, pm, cfg)?.value()
}

/// theta with characteristic, reduced to a plain theta via
/// `theta[d',d''](z) = exp(i pi (d'.Omega d' + 2 d'.(z+d''))) theta(z + Omega d' + d'')`.
pub fn theta_char_scaled(
    chr: &ThetaChar,
    z: &[Complex64],
    pm: &PeriodMatrix,
    cfg: &ThetaConfig,
) -> Result<Scaled> {
    let g = pm.genus();
    if chr.genus() != g {
        return Err(Error::InvalidInput("characteristic genus mismatch".into()));
    }
    if chr.is_zero() {
        return theta_scaled(z, pm, cfg);
    }
    let dp = chr.delta_p().map(Complex64::from);
    let dpp = chr.delta_pp().map(Complex64::from);
    let zv = to_dvec(z);
    let shifted = &zv + pm.omega() * &dp + &dpp;
    let inner = theta_sum(&shifted, pm, cfg, false)?.0;
    // prefactor exp(i pi (d'.Omega d' + 2 d'.(z + d'')))
    let quad = dp.dot(&(pm.omega() * &dp));
    let lin = dp.dot(&(&zv + &dpp)) * 2.0;
    let expo = Complex64::new(0.0, PI) * (quad + lin);
    Ok(Scaled::new(inner.mantissa * Complex64::new(0.0, expo.im).exp(), inner.log_scale + expo.re))
}

pub fn theta_char(
    chr: &ThetaChar,
    z: &[Complex64],
    pm: &PeriodMatrix,
    cfg: &ThetaConfig,
) -> Result<Complex64> {
    theta_char_scaled(chr, z, pm, cfg)?.value()
}

/// Gradient of theta, term-wise differentiated lattice sum with the same
/// tail guarantee.
pub fn grad_theta(z: &[Complex64], pm: &PeriodMatrix, cfg: &ThetaConfig) -> Result<Vec<Complex64>> {
    let (val, grad) = theta_sum(&to_dvec(z), pm, cfg, true)?;
    let grad = grad.expect("gradient requested");
    let scale = val.log_scale.exp();
    if val.log_scale > 700.0 {
        return Err(Error::Overflow(val.log_scale));
    }
    Ok(grad.iter().map(|v| v * scale).collect())
}

/// Gradient of theta with characteristic (scaled): returns (value, gradient)
/// sharing one log-scale.
pub fn theta_char_with_grad_scaled(
    chr: &ThetaChar,
    z: &[Complex64],
    pm: &PeriodMatrix,
    cfg: &ThetaConfig,
) -> Result<(Scaled, Vec<Complex64>)> {
    let g = pm.genus();
    let dp = chr.delta_p().map(Complex64::from);
    let dpp = chr.delta_pp().map(Complex64::from);
    let zv = to_dvec(z);
    let shifted = &zv + pm.omega() * &dp + &dpp;
    let (inner, grad) = theta_sum(&shifted, pm, cfg, true)?;
    let grad = grad.expect("gradient requested");
    let quad = dp.dot(&(pm.omega() * &dp));
    let lin = dp.dot(&(&zv + &dpp)) * 2.0;
    let expo = Complex64::new(0.0, PI) * (quad + lin);
    let phase = Complex64::new(0.0, expo.im).exp();
    let log_scale = inner.log_scale + expo.re;
    let value = Scaled::new(inner.mantissa * phase, log_scale);
    // d/dz_j = prefactor * (2 i pi d'_j * theta(shifted) + d_j theta(shifted))
    let mut out = Vec::with_capacity(g);
    for j in 0..g {
        let dj = Complex64::new(0.0, 2.0 * PI) * dp[j];
        out.push(phase * (inner.mantissa * dj + grad[j]));
    }
    Ok((value, out))
}

/// grad log theta(z); errors with ThetaZero when |theta(z)| is below
/// cfg.tol * SAFETY at the rebalanced scale.
pub fn grad_log_theta(z: &[Complex64], pm: &PeriodMatrix, cfg: &ThetaConfig) -> Result<Vec<Complex64>> {
    const SAFETY: f64 = 100.0;
    let (val, grad) = theta_sum(&to_dvec(z), pm, cfg, true)?;
    let grad = grad.expect("gradient requested");
    let m = val.mantissa.norm();
    if m < cfg.tol * SAFETY {
        return Err(Error::ThetaZero(m));
    }
    Ok(grad.iter().map(|v| v / val.mantissa).collect())
}

/// grad log theta[chr](z).
pub fn grad_log_theta_char(
    chr: &ThetaChar,
    z: &[Complex64],
    pm: &PeriodMatrix,
    cfg: &ThetaConfig,
) -> Result<Vec<Complex64>> {
    const SAFETY: f64 = 100.0;
    let (val, grad) = theta_char_with_grad_scaled(chr, z, pm, cfg)?;
    let m = val.mantissa.norm();
    if m < cfg.tol * SAFETY {
        return Err(Error::ThetaZero(m));
    }
    Ok(grad.iter().map(|v| v / val.mantissa).collect())
}

/// Scan all 2^(2g) half-integer characteristics and return the odd one with
/// the largest gradient norm at the origin.
pub fn pick_odd_characteristic(pm: &PeriodMatrix, cfg: &ThetaConfig) -> Result<ThetaChar> {
    let g = pm.genus();
    let zero = vec![Complex64::new(0.0, 0.0); g];
    let mut best: Option<(f64, ThetaChar)> = None;
    for mask in 0..(1usize << (2 * g)) {
        let twice_p: Vec<i64> = (0..g).map(|i| ((mask >> i) & 1) as i64).collect();
        let twice_pp: Vec<i64> = (0..g).map(|i| ((mask >> (g + i)) & 1) as i64).collect();
        let chr = ThetaChar { twice_p, twice_pp };
        if !chr.is_odd() {
            continue;
        }
        let (_, grad) = theta_char_with_grad_scaled(&chr, &zero, pm, cfg)?;
        let norm = grad.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if best.as_ref().map_or(true, |(b, _)| norm > *b) {
            best = Some((norm, chr));
        }
    }
    match best {
        Some((norm, chr)) if norm >= cfg.tol => Ok(chr),
        _ => Err(Error::Degenerate),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn pm1(tau_im: f64) -> PeriodMatrix {
        PeriodMatrix::new(DMatrix::from_element(1, 1, c(0.0, tau_im))).unwrap()
    }

    fn pm2_diag(a: f64, b: f64) -> PeriodMatrix {
        let mut m = DMatrix::from_element(2, 2, c(0.0, 0.0));
        m[(0, 0)] = c(0.0, a);
        m[(1, 1)] = c(0.0, b);
        PeriodMatrix::new(m).unwrap()
    }

    fn cfg() -> ThetaConfig {
        ThetaConfig::default()
    }

    fn rand_z(rng: &mut ChaCha8Rng, g: usize, scale: f64) -> Vec<Complex64> {
        (0..g)
            .map(|_| c(rng.gen::<f64>() * 2.0 - 1.0, (rng.gen::<f64>() * 2.0 - 1.0) * scale))
            .collect()
    }

    /// Independent 1-D oracle: direct summation of sum exp(-pi n^2 t + 2 i pi n z).
    fn theta1d_oracle(z: Complex64, tau_im: f64) -> Complex64 {
        let mut s = c(0.0, 0.0);
        for n in -60i64..=60 {
            let nf = n as f64;
            s += (c(0.0, PI) * (c(0.0, tau_im) * nf * nf + z * 2.0 * nf)).exp();
        }
        s
    }

    #[test]
    fn one_dim_value_matches_series_oracle() {
        let pm = pm1(1.0);
        let v = theta(&[c(0.0, 0.0)], &pm, &cfg()).unwrap();
        let oracle = theta1d_oracle(c(0.0, 0.0), 1.0);
        assert!((v - oracle).norm() < 1e-13, "{v} vs {oracle}");
        // frozen from the oracle
        assert!((v.re - 1.0864348112133080).abs() < 1e-12);
        assert!(v.im.abs() < 1e-14);
    }

    #[test]
    fn genus1_oracle_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pm = pm1(1.3);
        for _ in 0..200 {
            let z = c(rng.gen::<f64>() * 4.0 - 2.0, rng.gen::<f64>() * 2.0 - 1.0);
            let v = theta(&[z], &pm, &cfg()).unwrap();
            let o = theta1d_oracle(z, 1.3);
            assert!((v - o).norm() <= 1e-10 * o.norm().max(1.0), "z={z} v={v} o={o}");
        }
    }

    #[test]
    fn diagonal_period_matrix_factorizes() {
        let pm = pm2_diag(1.0, 1.0);
        let v = theta(&[c(0.0, 0.0), c(0.0, 0.0)], &pm, &cfg()).unwrap();
        let one = theta(&[c(0.0, 0.0)], &pm1(1.0), &cfg()).unwrap();
        assert!((v - one * one).norm() < 1e-12);
    }

    #[test]
    fn integer_shift_is_exact() {
        let pm = pm2_diag(0.9, 1.4);
        let z = [c(0.31, 0.12), c(-0.45, -0.2)];
        let shifted = [z[0] + 2.0, z[1] - 3.0];
        let a = theta(&z, &pm, &cfg()).unwrap();
        let b = theta(&shifted, &pm, &cfg()).unwrap();
        assert!((a - b).norm() < 1e-13 * a.norm());
    }

    #[test]
    fn quasi_periodicity() {
        // theta(z + m + Omega n) = exp(-i pi n.(2z + Omega n)) theta(z)
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for g in [1usize, 2] {
            let pm = if g == 1 { pm1(1.1) } else { pm2_diag(1.2, 0.8) };
            for _ in 0..50 {
                let z = rand_z(&mut rng, g, 0.5);
                let m: Vec<i64> = (0..g).map(|_| rng.gen_range(-2..=2)).collect();
                let n: Vec<i64> = (0..g).map(|_| rng.gen_range(-2..=2)).collect();
                let zv = to_dvec(&z);
                let nv = DVector::from_iterator(g, n.iter().map(|&v| Complex64::from(v as f64)));
                let mv = DVector::from_iterator(g, m.iter().map(|&v| Complex64::from(v as f64)));
                let arg = &zv + &mv + pm.omega() * &nv;
                let lhs = theta(arg.as_slice(), &pm, &cfg()).unwrap();
                let two = Complex64::from(2.0);
                let factor = (Complex64::new(0.0, -PI) * nv.dot(&(&zv * two + pm.omega() * &nv))).exp();
                let rhs = factor * theta(&z, &pm, &cfg()).unwrap();
                assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1.0), "g={g}");
            }
        }
    }

    #[test]
    fn characteristic_shift_identity() {
        // theta[d](z + g'' + Omega g') = exp(-i pi g'.(2z + 2d'' + 2g'' + Omega g')) theta[d+g](z)
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for g in [1usize, 2] {
            let pm = if g == 1 { pm1(0.9) } else { pm2_diag(1.0, 1.5) };
            for _ in 0..30 {
                let z = rand_z(&mut rng, g, 0.3);
                let d = ThetaChar::new(
                    (0..g).map(|_| rng.gen_range(0..=1)).collect(),
                    (0..g).map(|_| rng.gen_range(0..=1)).collect(),
                )
                .unwrap();
                let gam = ThetaChar::new(
                    (0..g).map(|_| rng.gen_range(0..=1)).collect(),
                    (0..g).map(|_| rng.gen_range(0..=1)).collect(),
                )
                .unwrap();
                let zv = to_dvec(&z);
                let gp = gam.delta_p().map(Complex64::from);
                let gpp = gam.delta_pp().map(Complex64::from);
                let dpp = d.delta_pp().map(Complex64::from);
                let arg = &zv + &gpp + pm.omega() * &gp;
                let lhs = theta_char(&d, arg.as_slice(), &pm, &cfg()).unwrap();
                let sum = ThetaChar::new(
                    d.twice_p.iter().zip(&gam.twice_p).map(|(a, b)| a + b).collect(),
                    d.twice_pp.iter().zip(&gam.twice_pp).map(|(a, b)| a + b).collect(),
                )
                .unwrap();
                let factor = (Complex64::new(0.0, -PI)
                    * gp.dot(&(&zv * Complex64::from(2.0) + &dpp * Complex64::from(2.0) + &gpp * Complex64::from(2.0) + pm.omega() * &gp)))
                .exp();
                let rhs = factor * theta_char(&sum, &z, &pm, &cfg()).unwrap();
                assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1.0));
            }
        }
    }

    #[test]
    fn parity() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for g in [1usize, 2] {
            let pm = if g == 1 { pm1(1.0) } else { pm2_diag(0.7, 1.1) };
            for _ in 0..30 {
                let z = rand_z(&mut rng, g, 0.4);
                let d = ThetaChar::new(
                    (0..g).map(|_| rng.gen_range(0..=1)).collect(),
                    (0..g).map(|_| rng.gen_range(0..=1)).collect(),
                )
                .unwrap();
                let neg: Vec<Complex64> = z.iter().map(|v| -v).collect();
                let a = theta_char(&d, &z, &pm, &cfg()).unwrap();
                let b = theta_char(&d, &neg, &pm, &cfg()).unwrap();
                let sign = if d.is_odd() { -1.0 } else { 1.0 };
                assert!((a * sign - b).norm() <= 1e-12 * a.norm().max(1.0));
            }
        }
    }

    #[test]
    fn reality_and_positivity_for_imaginary_period() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for g in [1usize, 2] {
            let pm = if g == 1 { pm1(1.2) } else { pm2_diag(1.0, 0.6) };
            let mut seen_pos = false;
            let mut seen_neg = false;
            for _ in 0..1000 {
                let z: Vec<Complex64> = (0..g).map(|_| c(rng.gen::<f64>() * 6.0 - 3.0, 0.0)).collect();
                // theta[0; d''] strictly positive on R^g
                let dpp = ThetaChar::new(vec![0; g], (0..g).map(|_| rng.gen_range(0..=1)).collect()).unwrap();
                let v = theta_char(&dpp, &z, &pm, &cfg()).unwrap();
                assert!(v.im.abs() < 1e-10 * v.re.abs().max(1.0));
                assert!(v.re > 0.0, "theta[0;d''] must be positive, got {v}");
                // theta[d'; d''] with d' != 0 attains both signs
                let mut twice_p = vec![0; g];
                twice_p[0] = 1;
                let dnz = ThetaChar::new(twice_p, vec![0; g]).unwrap();
                let w = theta_char(&dnz, &z, &pm, &cfg()).unwrap();
                if w.re > 1e-6 {
                    seen_pos = true;
                }
                if w.re < -1e-6 {
                    seen_neg = true;
                }
                // conjugation symmetry on a complex point
                let zc: Vec<Complex64> = (0..g).map(|_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() * 0.4 - 0.2)).collect();
                let conj: Vec<Complex64> = zc.iter().map(|v| v.conj()).collect();
                let a = theta_char(&dpp, &conj, &pm, &cfg()).unwrap();
                let b = theta_char(&dpp, &zc, &pm, &cfg()).unwrap().conj();
                assert!((a - b).norm() <= 1e-11 * a.norm().max(1.0));
            }
            assert!(seen_pos && seen_neg, "theta with d' != 0 must change sign on R^g");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for g in [1usize, 2] {
            let pm = if g == 1 { pm1(1.0) } else { pm2_diag(1.3, 0.9) };
            for _ in 0..50 {
                let z = rand_z(&mut rng, g, 0.3);
                let grad = grad_theta(&z, &pm, &cfg()).unwrap();
                let h = 1e-5;
                for j in 0..g {
                    let mut zp = z.clone();
                    let mut zm = z.clone();
                    zp[j] += h;
                    zm[j] -= h;
                    let fd = (theta(&zp, &pm, &cfg()).unwrap() - theta(&zm, &pm, &cfg()).unwrap()) / (2.0 * h);
                    assert!((grad[j] - fd).norm() <= 1e-6 * fd.norm().max(1.0));
                }
            }
        }
    }

    #[test]
    fn grad_log_theta_periodic() {
        let pm = pm1(1.0);
        let z = [c(0.3, 0.1)];
        let z1 = [c(1.3, 0.1)];
        let a = grad_log_theta(&z, &pm, &cfg()).unwrap();
        let b = grad_log_theta(&z1, &pm, &cfg()).unwrap();
        assert!((a[0] - b[0]).norm() < 1e-11);
    }

    #[test]
    fn even_characteristic_gradient_vanishes_at_origin() {
        let pm = pm2_diag(1.0, 1.0);
        let zero = [c(0.0, 0.0), c(0.0, 0.0)];
        let even = ThetaChar::new(vec![1, 0], vec![0, 0]).unwrap();
        assert!(!even.is_odd());
        let (_, grad) = theta_char_with_grad_scaled(&even, &zero, &pm, &cfg()).unwrap();
        for v in &grad {
            assert!(v.norm() < 1e-12);
        }
    }

    #[test]
    fn odd_characteristic_selection() {
        // genus 1: the unique odd characteristic is (1/2, 1/2)
        let pm = pm1(1.0);
        let chr = pick_odd_characteristic(&pm, &cfg()).unwrap();
        assert_eq!(chr.twice_p, vec![1]);
        assert_eq!(chr.twice_pp, vec![1]);
        let v = theta_char(&chr, &[c(0.0, 0.0)], &pm, &cfg()).unwrap();
        assert!(v.norm() < 1e-12, "odd theta vanishes at 0");

        // genus 2: some odd characteristic with nonzero gradient
        let pm = pm2_diag(1.0, 0.8);
        let chr = pick_odd_characteristic(&pm, &cfg()).unwrap();
        assert!(chr.is_odd());
        let zero = [c(0.0, 0.0), c(0.0, 0.0)];
        let (val, grad) = theta_char_with_grad_scaled(&chr, &zero, &pm, &cfg()).unwrap();
        assert!(val.mantissa.norm() < 1e-12);
        assert!(grad.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt() > 1e-3);
    }

    #[test]
    fn jacobi_theta_correspondence() {
        // theta[1/2;1/2](z|tau) = -theta_1(pi z), theta[0;0] = theta_3(pi z), etc.
        let tau_im = 1.1;
        let q = (-PI * tau_im).exp();
        let pm = pm1(tau_im);
        let theta1 = |v: f64| {
            let mut s = 0.0;
            for n in 0..40 {
                let e = (n as f64 + 0.5).powi(2);
                s += (-1.0f64).powi(n) * q.powf(e) * ((2 * n + 1) as f64 * v).sin();
            }
            2.0 * s
        };
        let theta2 = |v: f64| {
            let mut s = 0.0;
            for n in 0..40 {
                let e = (n as f64 + 0.5).powi(2);
                s += q.powf(e) * ((2 * n + 1) as f64 * v).cos();
            }
            2.0 * s
        };
        let theta3 = |v: f64| {
            let mut s = 1.0;
            for n in 1..40 {
                s += 2.0 * q.powf((n * n) as f64) * (2.0 * n as f64 * v).cos();
            }
            s
        };
        let theta4 = |v: f64| {
            let mut s = 1.0;
            for n in 1..40 {
                s += 2.0 * (-1.0f64).powi(n) * q.powf((n * n) as f64) * (2.0 * n as f64 * v).cos();
            }
            s
        };
        let z = 0.23;
        let cases: [(ThetaChar, f64); 4] = [
            (ThetaChar::new(vec![0], vec![0]).unwrap(), theta3(PI * z)),
            (ThetaChar::new(vec![0], vec![1]).unwrap(), theta4(PI * z)),
            (ThetaChar::new(vec![1], vec![0]).unwrap(), theta2(PI * z)),
            (ThetaChar::new(vec![1], vec![1]).unwrap(), -theta1(PI * z)),
        ];
        for (chr, expect) in cases {
            let v = theta_char(&chr, &[c(z, 0.0)], &pm, &cfg()).unwrap();
            assert!((v.re - expect).abs() < 1e-12 && v.im.abs() < 1e-12, "{chr:?}: {v} vs {expect}");
        }
    }
}
