//! Bivariate Laurent polynomials with complex coefficients: evaluation,
//! Newton polygons, serialization, and a Durand-Kerner root finder for the
//! univariate slices P(z, .).

use num_complex::Complex64;
use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct CharPoly {
    /// Laurent coefficients on Z^2
    pub coeffs: BTreeMap<(i64, i64), Complex64>,
}

impl CharPoly {
    pub fn eval(&self, z: Complex64, w: Complex64) -> Complex64 {
        let mut s = Complex64::new(0.0, 0.0);
        for (&(i, j), &c) in &self.coeffs {
            s += c * z.powi(i as i32) * w.powi(j as i32);
        }
        s
    }

    /// scale of the evaluation: sum of |c_ij| |z|^i |w|^j, for
    /// scale-invariant residuals |P(z,w)| / eval_scale(z,w)
    pub fn eval_scale(&self, z: Complex64, w: Complex64) -> f64 {
        let (zn, wn) = (z.norm(), w.norm());
        self.coeffs
            .iter()
            .map(|(&(i, j), c)| c.norm() * zn.powi(i as i32) * wn.powi(j as i32))
            .sum()
    }

    /// largest coefficient modulus
    pub fn max_coeff(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn drop_small(&mut self, tol: f64) {
        let m = self.max_coeff();
        self.coeffs.retain(|_, c| c.norm() > tol * m);
    }

    /// Newton polygon: convex hull of the support, counterclockwise,
    /// starting from the lexicographically smallest vertex.
    pub fn newton_polygon(&self) -> Vec<(i64, i64)> {
        let pts: Vec<(i64, i64)> = self.coeffs.keys().cloned().collect();
        convex_hull(&pts)
    }

    /// support bounding box (minx, maxx, miny, maxy)
    pub fn bbox(&self) -> Option<(i64, i64, i64, i64)> {
        if self.coeffs.is_empty() {
            return None;
        }
        let xs: Vec<i64> = self.coeffs.keys().map(|p| p.0).collect();
        let ys: Vec<i64> = self.coeffs.keys().map(|p| p.1).collect();
        Some((
            *xs.iter().min().unwrap(),
            *xs.iter().max().unwrap(),
            *ys.iter().min().unwrap(),
            *ys.iter().max().unwrap(),
        ))
    }

    /// w-roots of P(z, .) = 0 for fixed z, with multiplic structure ignored
    /// (simple roots expected away from the curve's singularities)
    pub fn w_roots(&self, z: Complex64) -> Result<Vec<Complex64>> {
        let (_, _, jmin, jmax) = self
            .bbox()
            .ok_or_else(|| Error::InvalidInput("empty polynomial".into()))?;
        // collect univariate coefficients of w^j, j = jmin..=jmax
        let deg = (jmax - jmin) as usize;
        let mut c = vec![Complex64::new(0.0, 0.0); deg + 1];
        for (&(i, j), &v) in &self.coeffs {
            c[(j - jmin) as usize] += v * z.powi(i as i32);
        }
        // strip exactly-zero leading/trailing coefficients
        let scale = c.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return Err(Error::SingularGrid);
        }
        let mut lo = 0;
        while lo < c.len() && c[lo].norm() < 1e-14 * scale {
            lo += 1;
        }
        let mut hi = c.len();
        while hi > lo && c[hi - 1].norm() < 1e-14 * scale {
            hi -= 1;
        }
        let c = &c[lo..hi];
        if c.len() <= 1 {
            return Ok(Vec::new());
        }
        durand_kerner(c)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let map: BTreeMap<String, [f64; 2]> = self
            .coeffs
            .iter()
            .map(|(&(i, j), c)| (format!("{i},{j}"), [c.re, c.im]))
            .collect();
        serde_json::json!(map)
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let map: BTreeMap<String, [f64; 2]> = serde_json::from_value(v.clone())?;
        let mut coeffs = BTreeMap::new();
        for (k, c) in map {
            let parts: Vec<&str> = k.split(',').collect();
            if parts.len() != 2 {
                return Err(Error::InvalidInput(format!("bad monomial key '{k}'")));
            }
            let i: i64 = parts[0]
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad monomial key '{k}'")))?;
            let j: i64 = parts[1]
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad monomial key '{k}'")))?;
            coeffs.insert((i, j), Complex64::new(c[0], c[1]));
        }
        Ok(Self { coeffs })
    }
}

/// counterclockwise convex hull (monotone chain), collinear points dropped
pub fn convex_hull(pts: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut p: Vec<(i64, i64)> = pts.to_vec();
    p.sort();
    p.dedup();
    if p.len() <= 2 {
        return p;
    }
    let cross = |o: (i64, i64), a: (i64, i64), b: (i64, i64)| -> i64 {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &pt in &p {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], pt) <= 0 {
            lower.pop();
        }
        lower.push(pt);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &pt in p.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], pt) <= 0 {
            upper.pop();
        }
        upper.push(pt);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// polygons equal up to translation (vertex sequences compared after
/// anchoring at the lexicographically smallest vertex)
pub fn polygons_equal_up_to_translation(a: &[(i64, i64)], b: &[(i64, i64)]) -> bool {
    let normalize = |p: &[(i64, i64)]| -> Vec<(i64, i64)> {
        let mut v = convex_hull(p);
        if v.is_empty() {
            return v;
        }
        let min = *v.iter().min().unwrap();
        for q in &mut v {
            q.0 -= min.0;
            q.1 -= min.1;
        }
        let start = v.iter().enumerate().min_by_key(|(_, q)| **q).unwrap().0;
        v.rotate_left(start);
        v
    };
    normalize(a) == normalize(b)
}

/// Durand-Kerner iteration for the roots of a dense univariate polynomial
/// c[0] + c[1] x + ... + c[n] x^n with c[n] != 0.
pub fn durand_kerner(c: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = c.len() - 1;
    // balance the variable by sigma = |c0 / cn|^(1/n) so the rescaled roots
    // have moduli near one even for extreme coefficient ranges
    let sigma = {
        let c0 = c[0].norm().max(1e-300);
        let cn = c[n].norm().max(1e-300);
        (c0 / cn).powf(1.0 / n as f64).clamp(1e-150, 1e150)
    };
    let scaled: Vec<Complex64> = c
        .iter()
        .enumerate()
        .map(|(j, v)| v * Complex64::from(sigma.powi(j as i32)))
        .collect();
    let roots = durand_kerner_balanced(&scaled)?;
    return Ok(roots.into_iter().map(|r| r * sigma).collect());
}

fn durand_kerner_balanced(c: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = c.len() - 1;
    let lead = c[n];
    let monic: Vec<Complex64> = c.iter().map(|v| v / lead).collect();
    let eval = |x: Complex64| -> Complex64 {
        let mut s = Complex64::new(0.0, 0.0);
        for k in (0..=n).rev() {
            s = s * x + monic[k];
        }
        s
    };
    // starting points on a generic circle
    let r = monic[..n]
        .iter()
        .map(|v| v.norm())
        .fold(0.5f64, f64::max)
        .powf(1.0 / n as f64)
        .max(0.5);
    let mut roots: Vec<Complex64> = (0..n)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * (k as f64 + 0.37) / n as f64;
            Complex64::new(r * t.cos(), r * t.sin())
        })
        .collect();
    for _ in 0..400 {
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if j != i {
                    denom *= roots[i] - roots[j];
                }
            }
            if denom.norm() < 1e-290 {
                // perturb coincident iterates
                roots[i] += Complex64::new(1e-8, 1e-8);
                continue;
            }
            let delta = eval(roots[i]) / denom;
            roots[i] -= delta;
            worst = worst.max(delta.norm());
        }
        let scale = roots.iter().map(|r| r.norm()).fold(1.0f64, f64::max);
        if worst < 1e-13 * scale.max(1.0) {
            return Ok(roots);
        }
    }
    Err(Error::Numeric("root iteration did not converge".into()))
}
