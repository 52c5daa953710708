//! The two-parameter family of ergodic Gibbs measures: inverse Kasteleyn
//! operators by the Fourier double integral, by a one-dimensional residue
//! reduction (valid inside the amoeba), and by contour integrals of the
//! theta-kernel 1-form; local single-edge formulas per phase; slopes,
//! surface tension, free energy, Ronkin function and amoeba membership.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::graph::Offset;
use crate::kasteleyn::{adjugate, FockModel, QuadNode};
use crate::poly::CharPoly;
use crate::surface::{OvalPoint, PointHandle, PointLift};

/// Phase classification of a Gibbs measure index point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Solid,
    Gaseous(usize),
    Liquid,
}

/// A point of D = Sigma^+ \ angles indexing a Gibbs measure.
#[derive(Debug, Clone)]
pub struct PhasePoint {
    pub point: PointLift,
    pub phase: Phase,
}

impl PhasePoint {
    pub fn from_oval(model: &FockModel, oval: usize, s: f64) -> Result<Self> {
        let point = model.backend.abel_jacobi(OvalPoint::new(oval, s))?;
        let phase = if oval == 0 { Phase::Solid } else { Phase::Gaseous(oval) };
        Ok(Self { point, phase })
    }

    pub fn from_interior(model: &FockModel, s_cross: f64, depth: f64) -> Result<Self> {
        let point = model.backend.interior_point(s_cross, depth)?;
        Ok(Self { point, phase: Phase::Liquid })
    }
}

/// classify a phase index point structurally
pub fn classify_phase(p: &PhasePoint) -> Phase {
    p.phase
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct MagneticField {
    pub bx: f64,
    pub by: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Provenance {
    Fourier,
    Contour,
    ClosedForm,
}

#[derive(Debug, Clone, Copy)]
pub struct InverseEntry {
    pub value: Complex64,
    pub provenance: Provenance,
}

// ---------------------------------------------------------------------------
// Fourier routes
// ---------------------------------------------------------------------------

/// Inverse by tensor-product trapezoidal quadrature over the torus
/// T_B = {|z| = e^{By}, |w| = e^{-Bx}}; spectrally accurate when B avoids
/// the amoeba (the integrand is then analytic in a neighborhood).
pub fn inverse_fourier(
    model: &FockModel,
    b_field: MagneticField,
    black: usize,
    offset: Offset,
    white: usize,
    order: usize,
) -> Result<Complex64> {
    if !model.periodic {
        return Err(Error::PeriodicityRequired);
    }
    let rz = b_field.by.exp();
    let rw = (-b_field.bx).exp();
    let nw = model.graph.n_whites();
    let mut acc = Complex64::new(0.0, 0.0);
    let mut min_det = f64::INFINITY;
    let mut max_det: f64 = 0.0;
    for a in 0..order {
        let z = Complex64::from_polar(rz, 2.0 * PI * a as f64 / order as f64);
        for c in 0..order {
            let w = Complex64::from_polar(rw, 2.0 * PI * c as f64 / order as f64);
            let k = model.build_k(z, w);
            let lu = k.lu();
            let det = lu.determinant();
            min_det = min_det.min(det.norm());
            max_det = max_det.max(det.norm());
            // solve K y = e_white: y = column `white` of K^{-1}
            let mut rhs = DVector::from_element(nw, Complex64::new(0.0, 0.0));
            rhs[white] = Complex64::new(1.0, 0.0);
            let y = lu.solve(&rhs).ok_or(Error::NearSingular(det.norm()))?;
            acc += y[black] * z.powi(offset.0 as i32) * w.powi(offset.1 as i32);
        }
    }
    if min_det < 1e-10 * max_det {
        return Err(Error::NearSingular(min_det));
    }
    Ok(acc / (order * order) as f64)
}

/// Inverse by taking the w-integral with residues and integrating the
/// remaining variable along the circle |z| = e^{By}, splitting the circle
/// where roots of P(z, .) cross |w| = e^{-Bx}.  Valid for any B, including
/// magnetic fields inside the amoeba.
pub fn inverse_fourier_residue(
    model: &FockModel,
    p: &CharPoly,
    b_field: MagneticField,
    black: usize,
    offset: Offset,
    white: usize,
) -> Result<Complex64> {
    if !model.periodic {
        return Err(Error::PeriodicityRequired);
    }
    let rz = b_field.by.exp();
    let rw = (-b_field.bx).exp();
    // inner w-integral: residues of (K^{-1})_{b,w} w^{n-1} at the roots of
    // P(z, .) inside the annulus rho < |w| < rw, plus a trapezoid integral
    // over a tiny circle |w| = rho capturing the pole at the origin (present
    // whenever the w-offset is non-positive)
    let integrand = |theta: f64| -> Result<Complex64> {
        let z = Complex64::from_polar(rz, theta);
        let roots = p.w_roots(z)?;
        let min_root = roots.iter().map(|r| r.norm()).fold(f64::INFINITY, f64::min);
        let rho = 0.5 * min_root.min(rw);
        let mut s = Complex64::new(0.0, 0.0);
        for wj in roots.iter().filter(|r| r.norm() < rw && r.norm() > rho) {
            let kmat = model.build_k(z, *wj);
            let q = adjugate(&kmat);
            let dpw = eval_dw(p, z, *wj);
            s += q[(black, white)] * wj.powi(offset.1 as i32 - 1) / dpw;
        }
        let nw = model.graph.n_whites();
        let m_inner = 64;
        let mut small = Complex64::new(0.0, 0.0);
        for a in 0..m_inner {
            let w = Complex64::from_polar(rho, 2.0 * PI * a as f64 / m_inner as f64);
            let kmat = model.build_k(z, w);
            let mut rhs = DVector::from_element(nw, Complex64::new(0.0, 0.0));
            rhs[white] = Complex64::new(1.0, 0.0);
            let y = kmat.lu().solve(&rhs).ok_or(Error::NearSingular(0.0))?;
            // (1/2 pi i) \oint f dw = (1/m) sum f(w) w over the nodes
            small += y[black] * w.powi(offset.1 as i32);
        }
        s += small / m_inner as f64;
        Ok(s * z.powi(offset.0 as i32))
    };
    // locate crossing angles by scanning the inside-root count
    let n_scan = 256;
    let mut counts = Vec::with_capacity(n_scan);
    for a in 0..n_scan {
        let th = 2.0 * PI * a as f64 / n_scan as f64;
        let z = Complex64::from_polar(rz, th);
        let roots = p.w_roots(z)?;
        counts.push(roots.iter().filter(|r| r.norm() < rw).count());
    }
    let mut cuts = Vec::new();
    for a in 0..n_scan {
        if counts[a] != counts[(a + 1) % n_scan] {
            // bisect the crossing angle
            let mut lo = 2.0 * PI * a as f64 / n_scan as f64;
            let mut hi = 2.0 * PI * (a + 1) as f64 / n_scan as f64;
            let c_lo = counts[a];
            for _ in 0..50 {
                let mid = 0.5 * (lo + hi);
                let z = Complex64::from_polar(rz, mid);
                let c = p.w_roots(z)?.iter().filter(|r| r.norm() < rw).count();
                if c == c_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            cuts.push(0.5 * (lo + hi));
        }
    }
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut total = Complex64::new(0.0, 0.0);
    let arcs: Vec<(f64, f64)> = if cuts.is_empty() {
        vec![(0.0, 2.0 * PI)]
    } else {
        let mut v = Vec::new();
        for i in 0..cuts.len() {
            let a = cuts[i];
            let b = if i + 1 < cuts.len() { cuts[i + 1] } else { cuts[0] + 2.0 * PI };
            v.push((a, b));
        }
        v
    };
    for (a, b) in arcs {
        // keep clear of the crossing endpoints
        let eps = 1e-9 * (b - a).abs();
        let f = |th: f64| integrand(th).unwrap_or(Complex64::new(f64::NAN, f64::NAN));
        let val = crate::quadrature::adaptive_gauss(&f, a + eps, b - eps, 1e-11)?;
        if val.re.is_nan() {
            return Err(Error::Numeric("residue integrand failed".into()));
        }
        total += val;
    }
    Ok(total / (2.0 * PI))
}

fn eval_dw(p: &CharPoly, z: Complex64, w: Complex64) -> Complex64 {
    let mut s = Complex64::new(0.0, 0.0);
    for (&(i, j), &c) in &p.coeffs {
        if j != 0 {
            s += c * (j as f64) * z.powi(i as i32) * w.powi(j as i32 - 1);
        }
    }
    s
}

// ---------------------------------------------------------------------------
// contour route
// ---------------------------------------------------------------------------

/// crossing parameter on A_0 for the contour of a neighbor pair: the
/// midpoint of the largest angular gap inside the positive arc from beta
/// to alpha (the complement of the sector of the edge)
fn crossing_for_edge(model: &FockModel, e: usize) -> f64 {
    let (ta, tb) = model.graph.edge_track_pair(e);
    let sa = model.angles.s[ta];
    let sb = model.angles.s[tb];
    // the measure of the edge freezes on the arc from tb's angle to ta's
    // angle; the contour crosses in the complementary arc (sa -> sb)
    let arc_len = (sb - sa).rem_euclid(1.0);
    let mut marks = vec![0.0, arc_len];
    for &s in &model.angles.s {
        let d = (s - sa).rem_euclid(1.0);
        if d > 1e-12 && d < arc_len - 1e-12 {
            marks.push(d);
        }
    }
    marks.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut best = (0.0, 0.0);
    for win in marks.windows(2) {
        if win[1] - win[0] > best.1 {
            best = (0.5 * (win[0] + win[1]), win[1] - win[0]);
        }
    }
    (sa + best.0).rem_euclid(1.0)
}

/// half-contour integral of `g_{b,w} zeta` from the crossing point to the
/// endpoint `u0`; the full sigma-symmetric contour value is
/// (I - conj I) = 2i Im I.
fn half_contour_kernel(
    model: &FockModel,
    black: usize,
    offset: Offset,
    white: usize,
    s_cross: f64,
    u0: &PointLift,
) -> Result<Complex64> {
    let b_node = QuadNode::Black(black, offset);
    let w_node = QuadNode::White(white, (0, 0));
    match &u0.handle {
        PointHandle::Torus(z_end) => {
            // polyline in the z-plane from the crossing point to the endpoint
            let start = Complex64::new(s_cross, 0.0);
            let f = |t: f64| -> Complex64 {
                let z = start + (z_end - start) * t;
                let lift = DVector::from_element(1, z);
                let u = PointLift { lift, handle: PointHandle::Torus(z) };
                match model.kernel_g(b_node, w_node, &u) {
                    Ok(v) => v * (z_end - start) * model.backend.odd_grad()[0],
                    Err(_) => Complex64::new(f64::NAN, 0.0),
                }
            };
            let val = crate::quadrature::adaptive_gauss(&f, 0.0, 1.0, 1e-11)?;
            if val.re.is_nan() {
                return Err(Error::PolePoint);
            }
            Ok(val)
        }
        PointHandle::Oval(q) if q.oval >= 1 => {
            if model.genus() == 1 {
                if let crate::surface::BackendSpec::Genus1 { .. } = model.backend.spec() {
                    // the lift is the coordinate: straight segment in C
                    let start = Complex64::new(s_cross, 0.0);
                    let z_end = u0.lift[0];
                    let f = |t: f64| -> Complex64 {
                        let z = start + (z_end - start) * t;
                        let lift = DVector::from_element(1, z);
                        let u = PointLift { lift, handle: PointHandle::Torus(z) };
                        match model.kernel_g(b_node, w_node, &u) {
                            Ok(v) => v * (z_end - start) * model.backend.odd_grad()[0],
                            Err(_) => Complex64::new(f64::NAN, 0.0),
                        }
                    };
                    let val = crate::quadrature::adaptive_gauss(&f, 0.0, 1.0, 1e-11)?;
                    if val.re.is_nan() {
                        return Err(Error::PolePoint);
                    }
                    return Ok(val);
                }
            }
            // trace from the crossing up, across, and down onto the oval
            let (start, path) = hyperelliptic_path(model, s_cross, u0)?;
            model.integrate_kernel_along(b_node, w_node, start, &path)
        }
        PointHandle::HypPath { x, .. } => {
            let target = *x;
            let (start, mut path) = hyperelliptic_overpass(model, s_cross, target.re)?;
            path.push(target);
            model.integrate_kernel_along(b_node, w_node, start, &path)
        }
        _ => Err(Error::InvalidInput("unsupported contour endpoint".into())),
    }
}

fn hyperelliptic_path(
    model: &FockModel,
    s_cross: f64,
    u0: &PointLift,
) -> Result<(PointLift, Vec<Complex64>)> {
    let PointHandle::Oval(q) = &u0.handle else {
        return Err(Error::InvalidInput("expected an oval endpoint".into()));
    };
    let target = model.backend.abel_jacobi(*q)?;
    let (x_t, _) = hyper_xy(model, &target)?;
    let (start, mut path) = hyperelliptic_overpass(model, s_cross, x_t.re)?;
    path.push(x_t);
    Ok((start, path))
}

/// waypoints from the A_0 crossing point up into Sigma^+ and across to the
/// vertical line above `x_target`
fn hyperelliptic_overpass(
    model: &FockModel,
    s_cross: f64,
    x_target: f64,
) -> Result<(PointLift, Vec<Complex64>)> {
    let start = model.backend.abel_jacobi(OvalPoint::new(0, s_cross))?;
    let (x_c, _) = hyper_xy(model, &start)?;
    let spec = model.backend.spec();
    let crate::surface::BackendSpec::Hyperelliptic { branch_points } = spec else {
        return Err(Error::InvalidInput("not hyperelliptic".into()));
    };
    let span = branch_points.last().unwrap() - branch_points.first().unwrap();
    let h = 0.6 * span;
    let side = {
        // local Sigma^+ side at the crossing (same rule as interior_point)
        let probe = model.backend.interior_point(s_cross, 1e-4)?;
        let (xp, _) = hyper_xy(model, &probe)?;
        (xp.im - x_c.im).signum()
    };
    Ok((
        start,
        vec![
            Complex64::new(x_c.re, side * h),
            Complex64::new(x_target, side * h),
        ],
    ))
}

fn hyper_xy(model: &FockModel, p: &PointLift) -> Result<(Complex64, Complex64)> {
    match &p.handle {
        PointHandle::HypPath { x, y, .. } => Ok((*x, *y)),
        PointHandle::Oval(_) | PointHandle::Torus(_) => model.backend.hyp_xy_public(p),
    }
}

impl FockModel {
    /// integrate g * zeta along a traced x-plane polyline (hyperelliptic)
    fn integrate_kernel_along(
        &self,
        b_node: QuadNode,
        w_node: QuadNode,
        start: PointLift,
        waypoints: &[Complex64],
    ) -> Result<Complex64> {
        let (mut x, mut y) = hyper_xy(self, &start)?;
        let mut lift = start.lift.clone();
        let grad = self.backend.odd_grad().clone();
        let mut total = Complex64::new(0.0, 0.0);
        for &x_next in waypoints {
            let f = |l: &DVector<Complex64>| -> DVector<Complex64> {
                let u = PointLift { lift: l.clone(), handle: PointHandle::HypPath { s_cross: 0.0, x, y } };
                match self.kernel_g(b_node, w_node, &u) {
                    Ok(v) => grad.map(|c| c * v),
                    Err(_) => grad.map(|_| Complex64::new(f64::NAN, 0.0)),
                }
            };
            let (seg, end) = self.backend.hyp_integrate_segment_from(x, y, &lift, x_next, &f)?;
            if seg.re.is_nan() {
                return Err(Error::PolePoint);
            }
            total += seg;
            x = end.0;
            y = end.1;
            lift = end.2;
        }
        Ok(total)
    }
}

/// Inverse entry by the sigma-symmetric contour integral
/// `(1/2 pi i) \int_C g_{b,w} zeta` for a *neighbor* pair (b + offset, w):
/// the contour crosses A_0 once in the complement of the edge's sector.
pub fn inverse_contour(
    model: &FockModel,
    u0: &PhasePoint,
    e: usize,
) -> Result<InverseEntry> {
    let edge = &model.graph.edges[e];
    let s_cross = crossing_for_edge(model, e);
    match u0.phase {
        Phase::Solid => {
            // closed trivial contour: sum of enclosed residues of g zeta.
            // The enclosed arc runs from the crossing point to u0 in the
            // positive direction; each angle pole inside contributes its
            // residue, which for g_{b,w} of an edge is a pure theta value.
            let PointHandle::Oval(q) = &u0.point.handle else {
                return Err(Error::InvalidInput("solid phase point must lie on A_0".into()));
            };
            let value = solid_entry_residues(model, e, s_cross, q.s)?;
            Ok(InverseEntry { value, provenance: Provenance::Contour })
        }
        _ => {
            let half = half_contour_kernel(model, edge.b, edge.offset, edge.w, s_cross, &u0.point)?;
            // the contour runs from sigma(u0) through the crossing to u0:
            // full integral = half - conj(half) = 2i Im(half), and the
            // bounding orientation gives A = -Im(half)/pi after 1/(2 pi i)
            let value = Complex64::new(-half.im / PI, 0.0);
            Ok(InverseEntry { value, provenance: Provenance::Contour })
        }
    }
}

/// residue formula for the solid-phase inverse entry of a single edge
fn solid_entry_residues(model: &FockModel, e: usize, s_cross: f64, s_u0: f64) -> Result<Complex64> {
    let edge = &model.graph.edges[e];
    let (ta, tb) = model.graph.edge_track_pair(e);
    // poles of g_{b,w} are at the two angles of the edge; a pole contributes
    // when its angle lies on the positively oriented arc from the crossing
    // point to u0
    let in_arc = |s: f64| -> bool {
        let d = (s - s_cross).rem_euclid(1.0);
        let du = (s_u0 - s_cross).rem_euclid(1.0);
        d < du
    };
    let mut value = Complex64::new(0.0, 0.0);
    for tr in [ta, tb] {
        if !in_arc(model.angles.s[tr]) {
            continue;
        }
        // residue of g_{b,w} zeta at the angle: the kernel product with the
        // vanishing factor removed, evaluated at the angle lift
        let u = model.backend.abel_jacobi(OvalPoint::new(0, model.angles.s[tr]))?;
        let res = model.kernel_residue_at_angle(
            QuadNode::Black(edge.b, edge.offset),
            QuadNode::White(edge.w, (0, 0)),
            tr,
            &u,
        )?;
        value += res;
    }
    Ok(value)
}

// ---------------------------------------------------------------------------
// probabilities
// ---------------------------------------------------------------------------

/// Single-edge probability from the local formulas of the three phases.
pub fn edge_probability_local(model: &FockModel, u0: &PhasePoint, e: usize) -> Result<f64> {
    let (ta, tb) = model.graph.edge_track_pair(e);
    let sa = model.angles.s[ta];
    let sb = model.angles.s[tb];
    match u0.phase {
        Phase::Solid => {
            let PointHandle::Oval(q) = &u0.point.handle else {
                return Err(Error::InvalidInput("solid point must be on A_0".into()));
            };
            // P(e) = 1 iff u0 lies on the positively oriented arc from the
            // beta angle to the alpha angle (with this crate's strand
            // labels; the arcs of the edges at a vertex then tile A_0)
            let d_u = (q.s - sb).rem_euclid(1.0);
            let d_a = (sa - sb).rem_euclid(1.0);
            Ok(if d_u < d_a { 1.0 } else { 0.0 })
        }
        Phase::Gaseous(k) => {
            // closed form: (beta - alpha)_k in crossing-window lifts plus
            // the Omega-column correction, no contour integration
            let s_cross = crossing_for_edge(model, e);
            // re-lift both angles into the window (s_cross, s_cross + 1): a
            // full loop around A_0 adds the all-ones vector to the lift
            let relift = |t: usize| -> DVector<f64> {
                let base = model.angles.lift[t].clone();
                let frac = model.angles.s[t].rem_euclid(1.0);
                let wraps = if frac < s_cross.rem_euclid(1.0) { 1.0 } else { 0.0 };
                let ones = DVector::from_element(base.len(), 1.0);
                &base + ones * wraps
            };
            let la = relift(ta);
            let lb = relift(tb);
            let diff = &la - &lb;
            let cj = model.faydiff_coefficients(e, (0, 0))?;
            let omega = model.backend.period_matrix().omega();
            let mut corr = Complex64::new(0.0, 0.0);
            for j in 0..model.genus() {
                corr += omega[(j, k - 1)] * cj[j];
            }
            let p = diff[k - 1] - (corr / Complex64::new(0.0, 2.0 * PI)).re;
            Ok(p)
        }
        Phase::Liquid => {
            // (1/2 pi i) [ delta log(theta_o(u - beta)/theta_o(u - alpha))
            //   + sum_j c_j int_C omega_j ] over the sigma-symmetric contour;
            // by symmetry this is Im(half) / pi for the half-path
            let s_cross = crossing_for_edge(model, e);
            let half = model.half_log_ratio(ta, tb, s_cross, &u0.point)?;
            let cj = model.faydiff_coefficients(e, (0, 0))?;
            let start = model.backend.abel_jacobi(OvalPoint::new(0, s_cross))?;
            let delta_lift = &u0.point.lift - &start.lift;
            let mut corr = Complex64::new(0.0, 0.0);
            for j in 0..model.genus() {
                corr += cj[j] * delta_lift[j];
            }
            Ok(-(half + corr).im / PI)
        }
    }
}

impl FockModel {
    /// continuous log of theta_o(u - beta)/theta_o(u - alpha) accumulated
    /// along the path from the crossing point to u0
    fn half_log_ratio(&self, ta: usize, tb: usize, s_cross: f64, u0: &PointLift) -> Result<Complex64> {
        let a = self.angles.lift[ta].map(|v| Complex64::from(v));
        let b = self.angles.lift[tb].map(|v| Complex64::from(v));
        let samples = self.path_lift_samples(s_cross, u0)?;
        let mut acc = Complex64::new(0.0, 0.0);
        let mut prev: Option<(Complex64, Complex64)> = None;
        for lift in &samples {
            let va = self.theta_odd_of(&(lift - &a))?;
            let vb = self.theta_odd_of(&(lift - &b))?;
            if let Some((pa, pb)) = prev {
                let ra = va / pa;
                let rb = vb / pb;
                if ra.norm() == 0.0 || rb.norm() == 0.0 || ra.arg().abs() > 2.5 || rb.arg().abs() > 2.5 {
                    return Err(Error::Numeric("log tracking step too large".into()));
                }
                acc += rb.ln() - ra.ln();
            }
            prev = Some((va, vb));
        }
        Ok(acc)
    }

    fn theta_odd_of(&self, arg: &DVector<Complex64>) -> Result<Complex64> {
        let v: Vec<Complex64> = arg.iter().cloned().collect();
        crate::theta::theta_char(
            self.backend.odd_char(),
            &v,
            self.backend.period_matrix(),
            &self.backend.config().theta,
        )
    }

    /// dense lift samples along the canonical path from an A_0 crossing to u0
    pub fn path_lift_samples(&self, s_cross: f64, u0: &PointLift) -> Result<Vec<DVector<Complex64>>> {
        match &u0.handle {
            PointHandle::Torus(z_end) => {
                let start = Complex64::new(s_cross, 0.0);
                let n = 400;
                Ok((0..=n)
                    .map(|k| {
                        let z = start + (z_end - start) * (k as f64 / n as f64);
                        DVector::from_element(1, z)
                    })
                    .collect())
            }
            PointHandle::Oval(q) if q.oval >= 1 => {
                if let crate::surface::BackendSpec::Genus1 { .. } = self.backend.spec() {
                    let start = Complex64::new(s_cross, 0.0);
                    let z_end = u0.lift[0];
                    let n = 400;
                    return Ok((0..=n)
                        .map(|k| {
                            let z = start + (z_end - start) * (k as f64 / n as f64);
                            DVector::from_element(1, z)
                        })
                        .collect());
                }
                let (start, path) = hyperelliptic_path(self, s_cross, u0)?;
                self.hyp_lift_samples(start, &path)
            }
            PointHandle::HypPath { x, .. } => {
                let (start, mut path) = hyperelliptic_overpass(self, s_cross, x.re)?;
                path.push(*x);
                self.hyp_lift_samples(start, &path)
            }
            _ => Err(Error::InvalidInput("unsupported path endpoint".into())),
        }
    }

    fn hyp_lift_samples(
        &self,
        start: PointLift,
        waypoints: &[Complex64],
    ) -> Result<Vec<DVector<Complex64>>> {
        let (mut x, mut y) = hyper_xy(self, &start)?;
        let mut lift = start.lift.clone();
        let mut out = vec![lift.clone()];
        let zero = |_: &DVector<Complex64>| DVector::from_element(self.genus(), Complex64::new(0.0, 0.0));
        for &x_next in waypoints {
            let n = 60;
            for k in 1..=n {
                let xt = x + (x_next - x) * (k as f64 / n as f64);
                let (_, end) = self.backend.hyp_integrate_segment_from(x, y, &lift, xt, &zero)?;
                out.push(end.2.clone());
                x = end.0;
                y = end.1;
                lift = end.2;
            }
        }
        Ok(out)
    }
}

/// Probability of a set of distinct edges under the measure indexed by a
/// magnetic field (Fourier route): (prod K) det(A_{b_i, w_j}).
pub fn cylinder_probability_fourier(
    model: &FockModel,
    p: &CharPoly,
    b_field: MagneticField,
    edges: &[(usize, Offset)],
    order: usize,
) -> Result<f64> {
    let k = edges.len();
    let mut amat = DMatrix::from_element(k, k, Complex64::new(0.0, 0.0));
    for (i, &(ei, di)) in edges.iter().enumerate() {
        for (j, &(ej, dj)) in edges.iter().enumerate() {
            let bi = model.graph.edges[ei].b;
            let wi = model.graph.edges[ei].offset;
            let wj = model.graph.edges[ej].w;
            // entry A_{b_i + d_i + offset_i, w_j + d_j}: translate so the
            // white sits at the origin
            let rel = (di.0 + wi.0 - dj.0, di.1 + wi.1 - dj.1);
            let val = match inverse_fourier(model, b_field, bi, rel, wj, order) {
                Ok(v) => v,
                Err(Error::NearSingular(_)) => {
                    inverse_fourier_residue(model, p, b_field, bi, rel, wj)?
                }
                Err(e) => return Err(e),
            };
            amat[(i, j)] = val;
        }
    }
    let mut prob = amat.lu().determinant();
    for &(e, d) in edges {
        prob *= model.entry_at(e, d)?;
    }
    Ok(prob.re)
}

/// Magnetic field of a point through the spectral parametrization:
/// B = (-log|w(u)|, log|z(u)|).
pub fn field_of_point(model: &FockModel, u: &PointLift) -> Result<MagneticField> {
    let (z, w) = model.spectral_point(u)?;
    Ok(MagneticField { bx: -w.norm().ln(), by: z.norm().ln() })
}

/// A magnetic field strictly inside the bounded amoeba-complement component
/// of oval k: the centroid of the oval's image.
pub fn gaseous_field(model: &FockModel, k: usize) -> Result<MagneticField> {
    let n = 64;
    let mut bx = 0.0;
    let mut by = 0.0;
    for i in 0..n {
        let u = model
            .backend
            .abel_jacobi(OvalPoint::new(k, (i as f64 + 0.5) / n as f64))?;
        let f = field_of_point(model, &u)?;
        bx += f.bx;
        by += f.by;
    }
    Ok(MagneticField { bx: bx / n as f64, by: by / n as f64 })
}

/// A magnetic field deep in the unbounded complement component matching the
/// solid phase of u1 (a point in a gap of A_0): push from the boundary in
/// the direction of the solid slope-polygon vertex.
pub fn solid_field(model: &FockModel, u1: &PhasePoint, push: f64) -> Result<MagneticField> {
    if !matches!(u1.phase, Phase::Solid) {
        return Err(Error::InvalidInput("solid point must be on A_0".into()));
    }
    // the frozen matching contributes the monomial z^h w^v with (h, v) the
    // sum of its edge offsets; its solid component is where that monomial
    // dominates, i.e. B far out along the gradient of h By - v Bx relative
    // to the bulk of the Newton polygon
    let p = model.char_poly()?;
    let m1 = frozen_matching(model, u1)?;
    let (mut h, mut v) = (0i64, 0i64);
    for (e, &inm) in m1.iter().enumerate() {
        if inm {
            h += model.graph.edges[e].offset.0;
            v += model.graph.edges[e].offset.1;
        }
    }
    let n = p.coeffs.len() as f64;
    let cx = p.coeffs.keys().map(|k| k.0 as f64).sum::<f64>() / n;
    let cy = p.coeffs.keys().map(|k| k.1 as f64).sum::<f64>() / n;
    let (dx, dy) = (-(v as f64 - cy), h as f64 - cx);
    let norm = (dx * dx + dy * dy).sqrt();
    if norm < 1e-9 {
        return Err(Error::Numeric("frozen matching is not extremal".into()));
    }
    let b0 = field_of_point(model, &u1.point)?;
    Ok(MagneticField { bx: b0.bx + push * dx / norm, by: b0.by + push * dy / norm })
}

// ---------------------------------------------------------------------------
// gamma paths, height change and slopes
// ---------------------------------------------------------------------------

/// dual paths gamma_x, gamma_y: for each edge, the signed number of
/// crossings with the path from the base face to its (1,0) / (0,1)
/// translate; the sign is +1 when the path crosses from the right face to
/// the left face of the white -> black dart.
pub fn gamma_intersections(model: &FockModel) -> Result<(Vec<i64>, Vec<i64>)> {
    let gx = gamma_path(model, (1, 0))?;
    let gy = gamma_path(model, (0, 1))?;
    Ok((gx, gy))
}

fn gamma_path(model: &FockModel, shift: Offset) -> Result<Vec<i64>> {
    use std::collections::{BTreeMap, VecDeque};
    let g = &model.graph;
    let base = 0usize;
    let start = (base, (0i64, 0i64));
    let goal = (base, shift);
    let window = |d: Offset| d.0.abs() <= 3 && d.1.abs() <= 3;
    let mut prev: BTreeMap<(usize, Offset), ((usize, Offset), usize, Offset, i64)> = BTreeMap::new();
    let mut queue = VecDeque::new();
    queue.push_back(start);
    let mut seen = BTreeMap::new();
    seen.insert(start, true);
    while let Some(cur) = queue.pop_front() {
        if cur == goal {
            break;
        }
        // neighbors: faces across each edge copy
        for e in 0..g.n_edges() {
            let (fl, fl_off) = g.face_left(e);
            let (fr, fr_off) = g.face_right(e);
            // face copies adjacent through the copy of e at white-domain delta:
            // left copy at delta + fl_off, right at delta + fr_off
            for dir in [1i64, -1] {
                let (from_f, from_off, to_f, to_off) = if dir > 0 {
                    (fr, fr_off, fl, fl_off)
                } else {
                    (fl, fl_off, fr, fr_off)
                };
                if from_f != cur.0 {
                    continue;
                }
                // delta of the edge copy: cur position minus the face anchor offset
                let delta = (cur.1 .0 - from_off.0, cur.1 .1 - from_off.1);
                let next = (to_f, (delta.0 + to_off.0, delta.1 + to_off.1));
                if !window(next.1) || seen.contains_key(&next) {
                    continue;
                }
                seen.insert(next, true);
                prev.insert(next, (cur, e, delta, dir));
                queue.push_back(next);
            }
        }
    }
    if !seen.contains_key(&goal) {
        return Err(Error::Numeric("gamma path not found".into()));
    }
    let mut crossings = vec![0i64; g.n_edges()];
    let mut node = goal;
    while node != start {
        let (p, e, _delta, dir) = prev[&node];
        crossings[e] += dir;
        node = p;
    }
    Ok(crossings)
}

/// The frozen matching of a solid reference point: edges with probability 1.
pub fn frozen_matching(model: &FockModel, u1: &PhasePoint) -> Result<Vec<bool>> {
    let mut m = vec![false; model.graph.n_edges()];
    for e in 0..model.graph.n_edges() {
        let p = edge_probability_local(model, u1, e)?;
        m[e] = p > 0.5;
    }
    // sanity: one edge per white and per black
    let mut wc = vec![0usize; model.graph.n_whites()];
    let mut bc = vec![0usize; model.graph.n_blacks()];
    for (e, &inm) in m.iter().enumerate() {
        if inm {
            wc[model.graph.edges[e].w] += 1;
            bc[model.graph.edges[e].b] += 1;
        }
    }
    if wc.iter().any(|&c| c != 1) || bc.iter().any(|&c| c != 1) {
        return Err(Error::Numeric(format!("frozen configuration is not a perfect matching: {wc:?} {bc:?}")));
    }
    Ok(m)
}

/// Slope (s, t) of the measure at u0, relative to the frozen reference u1:
/// s = sum_e (e ^ gamma_x)(P(e) - 1_{e in M1}), t likewise with gamma_y.
pub fn slope(model: &FockModel, u0: &PhasePoint, u1: &PhasePoint) -> Result<(f64, f64)> {
    let (gx, gy) = gamma_intersections(model)?;
    let m1 = frozen_matching(model, u1)?;
    let mut s = 0.0;
    let mut t = 0.0;
    for e in 0..model.graph.n_edges() {
        if gx[e] == 0 && gy[e] == 0 {
            continue;
        }
        let p = edge_probability_local(model, u0, e)?;
        let dp = p - if m1[e] { 1.0 } else { 0.0 };
        s += gx[e] as f64 * dp;
        t += gy[e] as f64 * dp;
    }
    Ok((s, t))
}

// ---------------------------------------------------------------------------
// thermodynamics
// ---------------------------------------------------------------------------

/// surface tension and free energy at u0 by the local path formulas, and
/// the slope/field data needed for the Legendre identity, all accumulated
/// along one path from the solid reference u1 to u0
#[derive(Debug, Clone)]
pub struct Thermodynamics {
    pub tension: f64,
    pub free_energy: f64,
    pub slope: (f64, f64),
    pub b_field: MagneticField,
}

pub fn thermodynamics(model: &FockModel, u0: &PhasePoint, u1: &PhasePoint) -> Result<Thermodynamics> {
    let PointHandle::Oval(q1) = &u1.point.handle else {
        return Err(Error::InvalidInput("reference point must be solid".into()));
    };
    let m1 = frozen_matching(model, u1)?;
    let mut log_k_frozen = 0.0;
    for (e, &inm) in m1.iter().enumerate() {
        if inm {
            log_k_frozen += model.entry(e).norm().ln();
        }
    }
    // track k_alpha = log|E(alpha, u)| and the continuous argument along the
    // path from u1 to u0 for every track
    let samples = model.path_lift_samples(q1.s, &u0.point)?;
    let r = model.graph.tracks().len();
    let mut k_vals = vec![0.0; r];
    let mut l_vals = vec![0.0; r];
    let mut l0_vals = vec![0.0; r];
    let mut tension_int = 0.0;
    let mut free_int = 0.0;
    let mut prev: Option<Vec<Complex64>> = None;
    for lift in &samples {
        let vals: Vec<Complex64> = (0..r)
            .map(|t| {
                let a = model.angles.lift[t].map(Complex64::from);
                model.theta_odd_of(&(lift - &a))
            })
            .collect::<Result<_>>()?;
        if let Some(pv) = &prev {
            let mut dk = vec![0.0; r];
            let mut dl = vec![0.0; r];
            for t in 0..r {
                let ratio = vals[t] / pv[t];
                if ratio.norm() == 0.0 || ratio.arg().abs() > 2.5 {
                    return Err(Error::Numeric("thermodynamic path step too large".into()));
                }
                dk[t] = ratio.norm().ln();
                dl[t] = ratio.arg();
            }
            for (e, _) in model.graph.edges.iter().enumerate() {
                // measure labels: alpha is the beta strand's track and
                // conversely (see edge_probability_local)
                let (tb, ta) = model.graph.edge_track_pair(e);
                // midpoint values of k and l over the step
                let ka = k_vals[ta] + 0.5 * dk[ta];
                let kb = k_vals[tb] + 0.5 * dk[tb];
                let la = l_vals[ta] + 0.5 * dl[ta];
                let lb = l_vals[tb] + 0.5 * dl[tb];
                tension_int += kb * dl[ta] - ka * dl[tb];
                free_int += la * dk[tb] - lb * dk[ta];
            }
            for t in 0..r {
                k_vals[t] += dk[t];
                l_vals[t] += dl[t];
            }
        } else {
            for t in 0..r {
                let a = model.angles.lift[t].map(Complex64::from);
                let v = model.theta_odd_of(&(lift - &a))?;
                k_vals[t] = v.norm().ln();
                // the continuous argument determination starts at zero at
                // the reference point u1
                l_vals[t] = 0.0;
                l0_vals[t] = 0.0;
            }
            prev = Some(vals.clone());
            continue;
        }
        prev = Some(vals);
    }
    let tension = -log_k_frozen + tension_int / PI;
    let free_energy = log_k_frozen + free_int / PI;
    if std::env::var("FOCK_DEBUG_THERMO").is_ok() {
        // endpoint boundary products with measure labels
        let mut boundary = 0.0;
        for e in 0..model.graph.n_edges() {
            let (tb, ta) = model.graph.edge_track_pair(e);
            boundary += k_vals[ta] * l_vals[tb] - k_vals[tb] * l_vals[ta];
        }
        eprintln!(
            "thermo-debug: logK={:.6} ti/pi={:.6} fi/pi={:.6} boundary/pi={:.6}",
            log_k_frozen,
            tension_int / PI,
            free_int / PI,
            boundary / PI
        );
    }
    // slope and magnetic field at the endpoint from the same tracking:
    // log z = sum_T (-v_T) log E(alpha_T, u), log w = sum_T h_T log E;
    // the argument determination is anchored so arg z(u1) = arg w(u1) = 0
    let mut log_z = Complex64::new(0.0, 0.0);
    let mut log_w = Complex64::new(0.0, 0.0);
    let mut arg_z0 = 0.0;
    let mut arg_w0 = 0.0;
    for (t, track) in model.graph.tracks().iter().enumerate() {
        let (h, v) = track.homology;
        log_z += Complex64::new(k_vals[t], l_vals[t]) * (-v as f64);
        log_w += Complex64::new(k_vals[t], l_vals[t]) * (h as f64);
        arg_z0 += l0_vals[t] * (-v as f64);
        arg_w0 += l0_vals[t] * (h as f64);
    }
    let s_slope = -(log_z.im - arg_z0) / PI;
    let t_slope = -(log_w.im - arg_w0) / PI;
    let b_field = MagneticField { bx: -log_w.re, by: log_z.re };
    Ok(Thermodynamics { tension, free_energy, slope: (s_slope, t_slope), b_field })
}

/// Ronkin function of the characteristic polynomial: the torus average of
/// log |P| at radius (e^{By}, e^{-Bx}).
pub fn ronkin(p: &CharPoly, b_field: MagneticField, order: usize) -> Result<f64> {
    let rz = b_field.by.exp();
    let rw = (-b_field.bx).exp();
    for jitter in [0.0, 0.5 / order as f64] {
        let mut acc = 0.0;
        let mut ok = true;
        for a in 0..order {
            let z = Complex64::from_polar(rz, 2.0 * PI * (a as f64 + jitter) / order as f64);
            for c in 0..order {
                let w = Complex64::from_polar(rw, 2.0 * PI * (c as f64 + jitter + 0.25) / order as f64);
                let v = p.eval(z, w).norm();
                if v == 0.0 {
                    ok = false;
                    break;
                }
                acc += v.ln();
            }
            if !ok {
                break;
            }
        }
        if ok {
            return Ok(acc / (order * order) as f64);
        }
    }
    Err(Error::SingularGrid)
}

/// Amoeba membership by root tracking: B is inside exactly when some root
/// w of P(z, .) has |w| = e^{-Bx} for a z on the circle |z| = e^{By}.  The
/// distance function min_j |log(|w_j(theta)| e^{Bx})| is sampled and its
/// best minima are polished by ternary search; the root count changing
/// between samples also certifies membership.
pub fn amoeba_sample(p: &CharPoly, b_field: MagneticField, n_samples: usize) -> Result<bool> {
    let rz = b_field.by.exp();
    let rw = (-b_field.bx).exp();
    let f = |theta: f64| -> Result<f64> {
        let z = Complex64::from_polar(rz, theta);
        let roots = p.w_roots(z)?;
        Ok(roots
            .iter()
            .map(|r| (r.norm() / rw).ln().abs())
            .fold(f64::INFINITY, f64::min))
    };
    let mut vals = Vec::with_capacity(n_samples);
    let mut first_count: Option<usize> = None;
    for a in 0..n_samples {
        let theta = 2.0 * PI * (a as f64 + 0.31) / n_samples as f64;
        let z = Complex64::from_polar(rz, theta);
        let roots = p.w_roots(z)?;
        let count = roots.iter().filter(|r| r.norm() < rw).count();
        match first_count {
            None => first_count = Some(count),
            Some(c) if c != count => return Ok(true),
            _ => {}
        }
        vals.push((
            theta,
            roots
                .iter()
                .map(|r| (r.norm() / rw).ln().abs())
                .fold(f64::INFINITY, f64::min),
        ));
    }
    // polish the three most promising minima
    let mut order: Vec<usize> = (0..n_samples).collect();
    order.sort_by(|&i, &j| vals[i].1.partial_cmp(&vals[j].1).unwrap());
    let h = 2.0 * PI / n_samples as f64;
    for &i in order.iter().take(3) {
        let mut lo = vals[i].0 - h;
        let mut hi = vals[i].0 + h;
        for _ in 0..60 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if f(m1)? < f(m2)? {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        if f(0.5 * (lo + hi))? < 1e-7 {
            return Ok(true);
        }
    }
    Ok(false)
}

// ---------------------------------------------------------------------------
// torus partition function
// ---------------------------------------------------------------------------

/// Partition function of the n x n torus with magnetic weights: the
/// absolute coefficients of the blown-up characteristic polynomial summed
/// with the boundary factors z0^h w0^v.  Within each homology class the
/// Kasteleyn phases align, so |C_{h,v}| is the total matching weight.
pub fn torus_partition_function(model: &FockModel, n: usize, b_field: MagneticField) -> Result<f64> {
    let (pn, _) = blowup_char_poly(model, n)?;
    let z0 = (n as f64 * b_field.by).exp();
    let w0 = (-(n as f64) * b_field.bx).exp();
    let mut z = 0.0;
    for (&(h, v), c) in &pn.coeffs {
        z += c.norm() * z0.powi(h as i32) * w0.powi(v as i32);
    }
    Ok(z)
}

/// blown-up model and its characteristic polynomial
pub fn blowup_char_poly(model: &FockModel, n: usize) -> Result<(CharPoly, FockModel)> {
    let cover = model.graph.sublattice_cover((n as i64, 0), (0, n as i64))?;
    let s = crate::angles::transfer_angles_to_cover(&model.graph, &model.angles, &cover)?;
    let angles = crate::angles::AngleMap::from_parameters(&model.backend, &s)?;
    let cover_model = FockModel::new(cover, model.backend.clone(), angles, model.t_lift.clone())?;
    let p = cover_model.char_poly()?;
    Ok((p, cover_model))
}

/// Single-edge occupation frequency on the n x n torus with magnetic
/// weights, for the copy of fundamental edge `e` at the cover origin.
pub fn torus_edge_frequency(
    model: &FockModel,
    n: usize,
    b_field: MagneticField,
    e: usize,
) -> Result<f64> {
    let (pn, cover_model) = blowup_char_poly(model, n)?;
    // derivative of each Laurent coefficient with respect to log nu_e for
    // the origin copy: extract coefficients of adj(K)_{b,w} * entry * z^dx w^dy
    let (minx, maxx, miny, maxy) = pn
        .bbox()
        .ok_or_else(|| Error::Numeric("empty blow-up polynomial".into()))?;
    let nz = (maxx - minx + 1) as usize;
    let nww = (maxy - miny + 1) as usize;
    let cov = &cover_model.graph;
    // the origin copy of e is edge index e (covers list base edges per coset,
    // coset 0 first)
    let edge = &cov.edges[e];
    let mut dets: Vec<Vec<Complex64>> = Vec::with_capacity(nz);
    for a in 0..nz {
        let z = Complex64::from_polar(1.0, 2.0 * PI * a as f64 / nz as f64);
        let mut row = Vec::with_capacity(nww);
        for c in 0..nww {
            let w = Complex64::from_polar(1.0, 2.0 * PI * c as f64 / nww as f64);
            let kmat = cover_model.build_k(z, w);
            let q = adjugate(&kmat);
            let val = q[(edge.b, edge.w)]
                * cover_model.entry(e)
                * z.powi(edge.offset.0 as i32)
                * w.powi(edge.offset.1 as i32);
            row.push(val);
        }
        dets.push(row);
    }
    let mut dcoeff = std::collections::BTreeMap::new();
    for i in minx..=maxx {
        for j in miny..=maxy {
            let mut c = Complex64::new(0.0, 0.0);
            for (a, row) in dets.iter().enumerate() {
                for (b, &d) in row.iter().enumerate() {
                    let ph = -2.0 * PI * ((a as f64 * i as f64) / nz as f64 + (b as f64 * j as f64) / nww as f64);
                    c += d * Complex64::from_polar(1.0, ph);
                }
            }
            dcoeff.insert((i, j), c / (nz * nww) as f64);
        }
    }
    let z0 = (n as f64 * b_field.by).exp();
    let w0 = (-(n as f64) * b_field.bx).exp();
    let mut num = 0.0;
    let mut den = 0.0;
    for (&(h, v), c) in &pn.coeffs {
        let weight = z0.powi(h as i32) * w0.powi(v as i32);
        den += c.norm() * weight;
        if let Some(d) = dcoeff.get(&(h, v)) {
            // d/d log nu_e |C| = Re(conj(C)/|C| * dC)
            if c.norm() > 0.0 {
                num += (c.conj() / c.norm() * d).re * weight;
            }
        }
    }
    Ok(num / den)
}

impl FockModel {
    /// kernel product with the simple pole at the given track's angle
    /// removed, evaluated at the angle lift (the residue of g zeta there)
    pub fn kernel_residue_at_angle(
        &self,
        x: QuadNode,
        y: QuadNode,
        track: usize,
        u: &PointLift,
    ) -> Result<Complex64> {
        self.kernel_g_with_skip(x, y, u, Some(track))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angles::solve_periodic_angles;
    use crate::graph::square_lattice;
    use crate::kasteleyn::FockModel;
    use crate::surface::{MCurveBackend, SurfaceConfig};

    fn skew_model(tau: f64, t: f64) -> FockModel {
        let g = square_lattice().sublattice_cover((1, 1), (-1, 1)).unwrap();
        let b = MCurveBackend::genus1(tau, SurfaceConfig::default()).unwrap();
        let interior = g.newton_interior_points().unwrap();
        let am = solve_periodic_angles(&g, &b, &interior, None).unwrap();
        FockModel::new(g, b, am, DVector::from_element(1, t)).unwrap()
    }

    /// exhaustive perfect-matching sum with magnetic weights on the n-torus
    fn brute_force(model: &FockModel, n: usize, b: MagneticField) -> (f64, Vec<f64>) {
        let cover = model.graph.sublattice_cover((n as i64, 0), (0, n as i64)).unwrap();
        let s = crate::angles::transfer_angles_to_cover(&model.graph, &model.angles, &cover).unwrap();
        let angles = crate::angles::AngleMap::from_parameters(&model.backend, &s).unwrap();
        let cm = FockModel::new(cover, model.backend.clone(), angles, model.t_lift.clone()).unwrap();
        let g = &cm.graph;
        let nw = g.n_whites();
        let z0 = (n as f64 * b.by).exp();
        let w0 = (-(n as f64) * b.bx).exp();
        // edges by white vertex
        let mut by_white: Vec<Vec<usize>> = vec![Vec::new(); nw];
        for (e, edge) in g.edges.iter().enumerate() {
            by_white[edge.w].push(e);
        }
        let mut z_total = 0.0;
        let mut freq = vec![0.0; g.n_edges()];
        let mut used = vec![false; g.n_blacks()];
        let mut chosen = Vec::new();
        fn rec(
            w: usize,
            nw: usize,
            by_white: &Vec<Vec<usize>>,
            g: &crate::graph::PeriodicBipartiteGraph,
            cm: &FockModel,
            used: &mut Vec<bool>,
            chosen: &mut Vec<usize>,
            z0: f64,
            w0: f64,
            z_total: &mut f64,
            freq: &mut Vec<f64>,
        ) {
            if w == nw {
                let mut weight = 1.0;
                for &e in chosen.iter() {
                    let edge = &g.edges[e];
                    weight *= cm.entry(e).norm()
                        * z0.powi(edge.offset.0 as i32)
                        * w0.powi(edge.offset.1 as i32);
                }
                *z_total += weight;
                for &e in chosen.iter() {
                    freq[e] += weight;
                }
                return;
            }
            for &e in &by_white[w] {
                let b = g.edges[e].b;
                if used[b] {
                    continue;
                }
                used[b] = true;
                chosen.push(e);
                rec(w + 1, nw, by_white, g, cm, used, chosen, z0, w0, z_total, freq);
                chosen.pop();
                used[b] = false;
            }
        }
        rec(0, nw, &by_white, g, &cm, &mut used, &mut chosen, z0, w0, &mut z_total, &mut freq);
        for f in &mut freq {
            *f /= z_total;
        }
        (z_total, freq)
    }

    fn gap_mid(model: &FockModel) -> f64 {
        let mut sorted = model.angles.s.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        (sorted[0] + sorted[1]) / 2.0
    }

    #[test]
    fn local_probabilities_match_fourier_all_phases() {
        let model = skew_model(1.3, 0.19);
        let p = model.char_poly().unwrap();
        let g1 = gap_mid(&model);
        let u1 = PhasePoint::from_oval(&model, 0, g1).unwrap();

        // solid: exact 0/1, matching Fourier deep in the right component
        let bf = solid_field(&model, &u1, 3.0).unwrap();
        for e in 0..model.graph.n_edges() {
            let edge = &model.graph.edges[e];
            let loc = edge_probability_local(&model, &u1, e).unwrap();
            assert!(loc == 0.0 || loc == 1.0);
            let a = inverse_fourier(&model, bf, edge.b, edge.offset, edge.w, 96).unwrap();
            let pf = (model.entry(e) * a).re;
            assert!((loc - pf).abs() < 1e-6, "solid e{e}: {loc} vs {pf}");
        }
        // per-white sums are 1 in every phase
        let u_gas = PhasePoint::from_oval(&model, 1, 0.23).unwrap();
        let u_liq = PhasePoint::from_interior(&model, g1, 0.3).unwrap();
        for u in [&u1, &u_gas, &u_liq] {
            for w in 0..model.graph.n_whites() {
                let mut sum = 0.0;
                for (e, edge) in model.graph.edges.iter().enumerate() {
                    if edge.w == w {
                        sum += edge_probability_local(&model, u, e).unwrap();
                    }
                }
                assert!((sum - 1.0).abs() < 1e-8, "sum at white {w}: {sum}");
            }
        }
        // gaseous: local equals Fourier at the hole field
        let bg = gaseous_field(&model, 1).unwrap();
        for e in 0..model.graph.n_edges() {
            let edge = &model.graph.edges[e];
            let loc = edge_probability_local(&model, &u_gas, e).unwrap();
            let a = inverse_fourier_residue(&model, &p, bg, edge.b, edge.offset, edge.w).unwrap();
            let pf = (model.entry(e) * a).re;
            assert!((loc - pf).abs() < 1e-6, "gaseous e{e}: {loc} vs {pf}");
        }
        // gaseous probabilities are independent of the position on the oval
        for e in 0..model.graph.n_edges() {
            let p1 = edge_probability_local(&model, &u_gas, e).unwrap();
            let u_gas2 = PhasePoint::from_oval(&model, 1, 0.71).unwrap();
            let p2 = edge_probability_local(&model, &u_gas2, e).unwrap();
            assert!((p1 - p2).abs() < 1e-8);
        }
        // liquid: local equals Fourier at the matched field
        let bl = field_of_point(&model, &u_liq.point).unwrap();
        for e in 0..model.graph.n_edges() {
            let edge = &model.graph.edges[e];
            let loc = edge_probability_local(&model, &u_liq, e).unwrap();
            let a = inverse_fourier_residue(&model, &p, bl, edge.b, edge.offset, edge.w).unwrap();
            let pf = (model.entry(e) * a).re;
            assert!((loc - pf).abs() < 1e-6, "liquid e{e}: {loc} vs {pf}");
        }
    }

    #[test]
    fn contour_route_equals_fourier_all_phases() {
        let model = skew_model(1.3, 0.19);
        let p = model.char_poly().unwrap();
        let g1 = gap_mid(&model);
        let u1 = PhasePoint::from_oval(&model, 0, g1).unwrap();
        let u_gas = PhasePoint::from_oval(&model, 1, 0.37).unwrap();
        let u_liq = PhasePoint::from_interior(&model, g1, 0.3).unwrap();
        let bf = solid_field(&model, &u1, 3.0).unwrap();
        let bg = gaseous_field(&model, 1).unwrap();
        let bl = field_of_point(&model, &u_liq.point).unwrap();
        for e in 0..model.graph.n_edges() {
            let edge = &model.graph.edges[e];
            // solid
            let c = inverse_contour(&model, &u1, e).unwrap();
            let f = inverse_fourier(&model, bf, edge.b, edge.offset, edge.w, 96).unwrap();
            assert!((c.value - f).norm() < 1e-6, "solid e{e}: {} vs {f}", c.value);
            // gaseous
            let c = inverse_contour(&model, &u_gas, e).unwrap();
            let f = inverse_fourier_residue(&model, &p, bg, edge.b, edge.offset, edge.w).unwrap();
            assert!((c.value - f).norm() < 1e-6, "gaseous e{e}: {} vs {f}", c.value);
            // liquid
            let c = inverse_contour(&model, &u_liq, e).unwrap();
            let f = inverse_fourier_residue(&model, &p, bl, edge.b, edge.offset, edge.w).unwrap();
            assert!((c.value - f).norm() < 1e-6, "liquid e{e}: {} vs {f}", c.value);
        }
    }

    #[test]
    fn solid_slope_identity() {
        let model = skew_model(1.3, 0.19);
        let mut sorted = model.angles.s.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let g1 = (sorted[0] + sorted[1]) / 2.0;
        let u1 = PhasePoint::from_oval(&model, 0, g1).unwrap();
        assert_eq!(slope(&model, &u1, &u1).unwrap(), (0.0, 0.0));
        for k in 1..sorted.len() {
            let hi = if k + 1 < sorted.len() { sorted[k + 1] } else { sorted[0] + 1.0 };
            let gap = 0.5 * (sorted[k] + hi);
            let u0 = PhasePoint::from_oval(&model, 0, gap).unwrap();
            let (s, t) = slope(&model, &u0, &u1).unwrap();
            let mut expect = (0.0, 0.0);
            for (tr, track) in model.graph.tracks().iter().enumerate() {
                let a = model.angles.s[tr];
                let d_a = (a - gap).rem_euclid(1.0);
                let d_u1 = (g1 - gap).rem_euclid(1.0);
                if d_a < d_u1 {
                    expect.0 += track.homology.1 as f64;
                    expect.1 -= track.homology.0 as f64;
                }
            }
            assert!((s - expect.0).abs() < 1e-9 && (t - expect.1).abs() < 1e-9,
                "gap {k}: ({s},{t}) vs {expect:?}");
        }
    }

    #[test]
    fn gaseous_slope_is_interior_point() {
        let model = skew_model(1.3, 0.19);
        let g1 = gap_mid(&model);
        let u1 = PhasePoint::from_oval(&model, 0, g1).unwrap();
        let u0 = PhasePoint::from_oval(&model, 1, 0.37).unwrap();
        let (s, t) = slope(&model, &u0, &u1).unwrap();
        // P1 + (t, -s) = phi_1: u1 sits in the gap before sorted angle 1
        let sa = crate::angles::sorted_angles(&model.graph, &model.angles);
        let p1 = sa.polygon_points[1];
        let phi = crate::angles::phi_map(&model.graph, &model.angles).unwrap();
        assert!((p1.0 as f64 + t - phi[0].0).abs() < 1e-6, "{p1:?} + t={t} vs {phi:?}");
        assert!((p1.1 as f64 - s - phi[0].1).abs() < 1e-6);
    }

    #[test]
    fn thermodynamic_identities() {
        let model = skew_model(1.3, 0.19);
        let p = model.char_poly().unwrap();
        let g1 = gap_mid(&model);
        let u1 = PhasePoint::from_oval(&model, 0, g1).unwrap();
        for k in 1..=5 {
            let u0 = PhasePoint::from_interior(&model, g1, 0.09 * k as f64).unwrap();
            let th = thermodynamics(&model, &u0, &u1).unwrap();
            let legendre = th.slope.0 * th.b_field.bx + th.slope.1 * th.b_field.by - th.tension;
            assert!((th.free_energy - legendre).abs() < 1e-5, "Legendre: {} vs {legendre}", th.free_energy);
            // path slope equals probability slope
            let (sp, tp) = slope(&model, &u0, &u1).unwrap();
            assert!((th.slope.0 - sp).abs() < 1e-6 && (th.slope.1 - tp).abs() < 1e-6);
            // free energy equals the Ronkin function up to quadrature here
            let r = ronkin(&p, th.b_field, 256).unwrap();
            assert!((th.free_energy - r).abs() < 2e-4, "F = {} vs R = {r}", th.free_energy);
        }
    }

    #[test]
    fn ronkin_convex_and_affine_on_solid() {
        let model = skew_model(1.3, 0.19);
        let p = model.char_poly().unwrap();
        let u1 = PhasePoint::from_oval(&model, 0, gap_mid(&model)).unwrap();
        let bs = solid_field(&model, &u1, 4.0).unwrap();
        // affine on the solid component: second differences vanish
        let h = 0.05;
        for dir in [(h, 0.0), (0.0, h), (h, h)] {
            let r0 = ronkin(&p, bs, 128).unwrap();
            let rp = ronkin(&p, MagneticField { bx: bs.bx + dir.0, by: bs.by + dir.1 }, 128).unwrap();
            let rm = ronkin(&p, MagneticField { bx: bs.bx - dir.0, by: bs.by - dir.1 }, 128).unwrap();
            assert!((rp + rm - 2.0 * r0).abs() < 1e-6, "second difference {}", rp + rm - 2.0 * r0);
        }
        // midpoint convexity at random-ish triples
        for k in 0..5 {
            let f = k as f64;
            let b1 = MagneticField { bx: 0.3 * f.sin(), by: 0.4 * f.cos() };
            let b2 = MagneticField { bx: -0.2 * f.cos(), by: 0.5 * (f * 0.7).sin() };
            let bm = MagneticField { bx: 0.5 * (b1.bx + b2.bx), by: 0.5 * (b1.by + b2.by) };
            let r1 = ronkin(&p, b1, 96).unwrap();
            let r2 = ronkin(&p, b2, 96).unwrap();
            let rm = ronkin(&p, bm, 96).unwrap();
            assert!(0.5 * (r1 + r2) - rm >= -1e-8);
        }
    }

    #[test]
    fn amoeba_membership() {
        let model = skew_model(1.3, 0.19);
        let p = model.char_poly().unwrap();
        // far outside: along a direction between the tentacle fans (the
        // Newton polygon of this model is the diamond with edges (+-1,+-1),
        // so the axis directions stay clear of every tentacle)
        let far = MagneticField { bx: 9.0, by: 0.4 };
        assert!(!amoeba_sample(&p, far, 64).unwrap());
        // nudging from the hole boundary toward the liquid region lands
        // inside (the exact oval image is a boundary point)
        let u = model.backend.abel_jacobi(OvalPoint::new(1, 0.3)).unwrap();
        let b = field_of_point(&model, &u).unwrap();
        let bg_ref = gaseous_field(&model, 1).unwrap();
        let b_in = MagneticField { bx: b.bx + 0.35 * (b.bx - bg_ref.bx), by: b.by + 0.35 * (b.by - bg_ref.by) };
        assert!(amoeba_sample(&p, b_in, 128).unwrap());
        // hole centroid: outside (bounded component)
        let bg = gaseous_field(&model, 1).unwrap();
        assert!(!amoeba_sample(&p, bg, 64).unwrap());
        // a liquid field: inside
        let ul = model.backend.interior_point(gap_mid(&model), 0.3).unwrap();
        let bl = field_of_point(&model, &ul).unwrap();
        assert!(amoeba_sample(&p, bl, 64).unwrap());
    }

    #[test]
    fn finite_torus_frequencies_converge_to_liquid() {
        let model = skew_model(1.3, 0.19);
        let g1 = gap_mid(&model);
        let u0 = PhasePoint::from_interior(&model, g1, 0.3).unwrap();
        let b = field_of_point(&model, &u0.point).unwrap();
        let e = 0usize;
        let target = edge_probability_local(&model, &u0, e).unwrap();
        let mut errs = Vec::new();
        for n in [1usize, 2, 3] {
            let f = torus_edge_frequency(&model, n, b, e).unwrap();
            errs.push((f - target).abs());
        }
        assert!(errs[2] < errs[0], "finite-size errors {errs:?}");
        assert!(errs[2] < 0.05, "n=3 error {}", errs[2]);
    }

    #[test]
    fn cylinder_probabilities_and_vertex_sum() {
        let model = skew_model(1.3, 0.19);
        let p = model.char_poly().unwrap();
        let bg = gaseous_field(&model, 1).unwrap();
        // single edges: in [0,1]; per-white sums 1
        for w in 0..model.graph.n_whites() {
            let mut sum = 0.0;
            for (e, edge) in model.graph.edges.iter().enumerate() {
                if edge.w != w {
                    continue;
                }
                let pe = cylinder_probability_fourier(&model, &p, bg, &[(e, (0, 0))], 128).unwrap();
                assert!(pe > -1e-8 && pe < 1.0 + 1e-8);
                sum += pe;
            }
            assert!((sum - 1.0).abs() < 1e-6, "white {w}: {sum}");
        }
        // a pair of distinct edges
        let p2 = cylinder_probability_fourier(&model, &p, bg, &[(0, (0, 0)), (1, (1, 0))], 128).unwrap();
        assert!(p2 > -1e-8 && p2 < 1.0 + 1e-8, "pair probability {p2}");
    }

    #[test]
    fn torus_partition_function_matches_enumeration() {
        let model = skew_model(1.3, 0.19);
        for n in [1usize, 2] {
            for b in [MagneticField { bx: 0.0, by: 0.0 }, MagneticField { bx: 0.21, by: -0.13 }] {
                let z_det = torus_partition_function(&model, n, b).unwrap();
                let (z_brute, _) = brute_force(&model, n, b);
                assert!(
                    (z_det - z_brute).abs() <= 1e-9 * z_brute,
                    "n={n}: {z_det} vs {z_brute}"
                );
            }
        }
    }

    #[test]
    fn torus_edge_frequencies_match_enumeration() {
        let model = skew_model(1.3, 0.19);
        for n in [1usize, 2] {
            let b = MagneticField { bx: 0.1, by: 0.05 };
            let (_, freq) = brute_force(&model, n, b);
            for e in 0..model.graph.n_edges() {
                let f_det = torus_edge_frequency(&model, n, b, e).unwrap();
                assert!(
                    (f_det - freq[e]).abs() < 1e-8,
                    "n={n} e={e}: {f_det} vs {}",
                    freq[e]
                );
            }
        }
    }

    #[test]
    fn fourier_inverse_is_an_inverse() {
        let model = skew_model(1.3, 0.19);
        // a magnetic field inside the gaseous hole
        let b = gaseous_field(&model, 1).unwrap();
        // K A = Id on the fundamental domain
        let order = 64;
        let nw = model.graph.n_whites();
        for w_test in 0..nw {
            for w2 in 0..nw {
                let mut sum = Complex64::new(0.0, 0.0);
                for (e, edge) in model.graph.edges.iter().enumerate() {
                    if edge.w != w_test {
                        continue;
                    }
                    let a = inverse_fourier(&model, b, edge.b, edge.offset, w2, order).unwrap();
                    sum += model.entry(e) * a;
                }
                let expect = if w_test == w2 { 1.0 } else { 0.0 };
                assert!(
                    (sum - Complex64::new(expect, 0.0)).norm() < 1e-8,
                    "(K A)_{{{w_test},{w2}}} = {sum}"
                );
            }
        }
    }

    #[test]
    fn fourier_residue_route_agrees_off_amoeba() {
        let model = skew_model(1.3, 0.19);
        let p = model.char_poly().unwrap();
        let b = gaseous_field(&model, 1).unwrap();
        for (e, edge) in model.graph.edges.iter().enumerate().take(3) {
            let a1 = inverse_fourier(&model, b, edge.b, edge.offset, edge.w, 512).unwrap();
            let a2 = inverse_fourier_residue(&model, &p, b, edge.b, edge.offset, edge.w).unwrap();
            assert!((a1 - a2).norm() < 1e-7, "edge {e}: {a1} vs {a2}");
        }
    }

    #[test]
    fn gaseous_b_independence_within_hole() {
        let model = skew_model(1.3, 0.19);
        let p = model.char_poly().unwrap();
        let b0 = gaseous_field(&model, 1).unwrap();
        let b1 = MagneticField { by: b0.by + 0.004, bx: b0.bx - 0.003 };
        let edge = &model.graph.edges[0];
        let a0 = inverse_fourier_residue(&model, &p, b0, edge.b, edge.offset, edge.w).unwrap();
        let a1 = inverse_fourier_residue(&model, &p, b1, edge.b, edge.offset, edge.w).unwrap();
        assert!((a0 - a1).norm() < 1e-7, "{a0} vs {a1}");
    }
}
