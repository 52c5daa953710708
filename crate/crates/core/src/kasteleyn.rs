//! Fock's Kasteleyn operator in the reduced pure-theta gauge.
//!
//! The reduced prime form `E(x, y) = theta[odd](y - x)` replaces the full
//! prime form: the omitted spinor factors cancel in every exported
//! observable (face weights, probabilities, the Fay identities, and the
//! spectral parametrization up to a constant scale), so the reduced model is
//! a dimer model with the same gauge-invariant data.  Entries are
//!
//! `K_{w,b} = theta[odd](beta - alpha) / (theta(t + d(f)) theta(t + d(f')))`
//!
//! with alpha, beta the window lifts of the two train-track angles crossing
//! the edge, and d the lifted discrete Abel map.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::angles::{discrete_abel_map, is_operator_periodic, validate_angle_map, AbelMap, AngleMap};
use crate::error::{Error, Result};
use crate::graph::{Offset, PeriodicBipartiteGraph};
use crate::poly::CharPoly;
use crate::surface::{MCurveBackend, PointLift};
use crate::theta::{theta_char_scaled, Scaled, ThetaChar};

#[derive(Debug, Clone)]
pub struct FockModel {
    pub graph: PeriodicBipartiteGraph,
    pub backend: MCurveBackend,
    pub angles: AngleMap,
    pub t_lift: DVector<f64>,
    pub abel: AbelMap,
    /// entries of the fundamental-domain edge copies (white end at (0,0))
    entries: Vec<Complex64>,
    pub periodic: bool,
    pub phi_points: Vec<(i64, i64)>,
}

impl FockModel {
    pub fn new(
        graph: PeriodicBipartiteGraph,
        backend: MCurveBackend,
        angles: AngleMap,
        t_lift: DVector<f64>,
    ) -> Result<Self> {
        let (ok, diag) = validate_angle_map(&graph, &angles);
        if !ok {
            return Err(Error::InvalidInput(format!("invalid angle map: {diag:?}")));
        }
        Self::new_unvalidated(graph, backend, angles, t_lift)
    }

    /// As `new`, but without rejecting invalid angle maps, so diagnostic
    /// commands can evaluate the faces of a broken model and report which
    /// ones violate the Kasteleyn condition.  Minimality is still enforced.
    pub fn new_unvalidated(
        graph: PeriodicBipartiteGraph,
        backend: MCurveBackend,
        angles: AngleMap,
        t_lift: DVector<f64>,
    ) -> Result<Self> {
        let report = graph.check_minimal();
        if !report.minimal {
            return Err(Error::InvalidInput(format!(
                "graph is not minimal: {report:?}"
            )));
        }
        if t_lift.len() != backend.genus() {
            return Err(Error::InvalidInput("t has wrong dimension".into()));
        }
        let abel = discrete_abel_map(&graph, &angles, 0)?;
        let (periodic, phi_points, _) = is_operator_periodic(&graph, &angles, 1e-8)?;
        let mut model = Self {
            graph,
            backend,
            angles,
            t_lift,
            abel,
            entries: Vec::new(),
            periodic,
            phi_points,
        };
        let mut entries = Vec::with_capacity(model.graph.n_edges());
        for e in 0..model.graph.n_edges() {
            entries.push(model.entry_at(e, (0, 0))?);
        }
        model.entries = entries;
        Ok(model)
    }

    pub fn genus(&self) -> usize {
        self.backend.genus()
    }

    /// Shift the lifted discrete Abel map by a constant vector (a change of
    /// base value) and recompute the entries.
    pub fn shift_abel_anchor(&mut self, c: &DVector<f64>) -> Result<()> {
        for v in self.abel.face_val.iter_mut() {
            *v += c;
        }
        for v in self.abel.white_val.iter_mut() {
            *v += c;
        }
        for v in self.abel.black_val.iter_mut() {
            *v += c;
        }
        let mut entries = Vec::with_capacity(self.graph.n_edges());
        for e in 0..self.graph.n_edges() {
            entries.push(self.entry_at(e, (0, 0))?);
        }
        self.entries = entries;
        Ok(())
    }

    fn theta_cfg(&self) -> crate::theta::ThetaConfig {
        self.backend.config().theta
    }

    /// Reduced prime form of two lift vectors, with a canonical sign choice
    /// so that antisymmetry holds exactly in floating point.
    pub fn prime_form_reduced(&self, x: &DVector<Complex64>, y: &DVector<Complex64>) -> Result<Complex64> {
        let diff = y - x;
        let mut sign = 0.0f64;
        for v in diff.iter() {
            if v.re.abs() > 1e-14 {
                sign = v.re.signum();
                break;
            }
            if v.im.abs() > 1e-14 {
                sign = v.im.signum();
                break;
            }
        }
        if sign == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let arg: Vec<Complex64> = diff.iter().map(|v| v * sign).collect();
        let val = crate::theta::theta_char(
            self.backend.odd_char(),
            &arg,
            self.backend.period_matrix(),
            &self.theta_cfg(),
        )?;
        Ok(val * sign * odd_sign(self.backend.odd_char()))
    }

    fn prime_form_scaled(&self, x: &DVector<Complex64>, y: &DVector<Complex64>) -> Result<Scaled> {
        let diff = y - x;
        let arg: Vec<Complex64> = diff.iter().cloned().collect();
        theta_char_scaled(
            self.backend.odd_char(),
            &arg,
            self.backend.period_matrix(),
            &self.theta_cfg(),
        )
    }

    /// plain theta of a real argument vector; strictly positive for real args
    fn theta_real(&self, v: &DVector<f64>) -> Result<f64> {
        let z: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let val = crate::theta::theta(&z, self.backend.period_matrix(), &self.theta_cfg())?;
        Ok(val.re)
    }

    /// window lift of a track angle as a complex vector
    fn track_lift_c(&self, t: usize) -> DVector<Complex64> {
        self.angles.lift[t].map(|v| Complex64::new(v, 0.0))
    }

    /// Kasteleyn entry of the copy of edge `e` whose white end sits in
    /// domain `delta`.
    pub fn entry_at(&self, e: usize, delta: Offset) -> Result<Complex64> {
        let (ta, tb) = self.graph.edge_track_pair(e);
        let alpha = self.track_lift_c(ta);
        let beta = self.track_lift_c(tb);
        let num = self.prime_form_reduced(&alpha, &beta)?;
        if num.norm() == 0.0 {
            return Err(Error::DegenerateAngles);
        }
        let (fl, fl_off) = self.graph.face_left(e);
        let (fr, fr_off) = self.graph.face_right(e);
        let dfl = self.abel.face(fl, (fl_off.0 + delta.0, fl_off.1 + delta.1));
        let dfr = self.abel.face(fr, (fr_off.0 + delta.0, fr_off.1 + delta.1));
        let den_l = self.theta_real(&(&dfl + &self.t_lift))?;
        let den_r = self.theta_real(&(&dfr + &self.t_lift))?;
        if den_l <= 0.0 || den_r <= 0.0 {
            return Err(Error::Numeric(format!(
                "theta denominator not positive: {den_l}, {den_r}"
            )));
        }
        Ok(num / (den_l * den_r))
    }

    /// fundamental-domain entry
    pub fn entry(&self, e: usize) -> Complex64 {
        self.entries[e]
    }

    /// Alternating product of entries around a face (counterclockwise);
    /// identical in the reduced and unreduced gauges.
    pub fn face_weight(&self, f: usize) -> Result<Complex64> {
        let face = &self.graph.faces()[f];
        let mut w = Complex64::new(1.0, 0.0);
        for (pos, d) in face.darts.iter().enumerate() {
            let tau = face.tail_pos[pos];
            let delta = if d.forward {
                tau
            } else {
                let off = self.graph.edges[d.edge].offset;
                (tau.0 - off.0, tau.1 - off.1)
            };
            let val = self.entry_at(d.edge, delta)?;
            if val.norm() == 0.0 {
                return Err(Error::ZeroEdge);
            }
            if d.forward {
                w *= val;
            } else {
                w /= val;
            }
        }
        Ok(w)
    }

    /// Kasteleyn condition: the phase of the weight of a face of degree 2m
    /// equals (-1)^{m+1}.
    pub fn check_kasteleyn_condition(&self, tol: f64) -> Result<KasteleynReport> {
        let mut faces = Vec::new();
        let mut pass = true;
        for f in 0..self.graph.faces().len() {
            let w = self.face_weight(f)?;
            let m = self.graph.faces()[f].degree() / 2;
            let expect = if m % 2 == 0 { -1.0 } else { 1.0 };
            let phase = w / w.norm();
            let dev = (phase - Complex64::new(expect, 0.0)).norm();
            if dev > tol {
                pass = false;
            }
            faces.push(FacePhase { face: f, degree: 2 * m, phase, expected: expect, deviation: dev });
        }
        Ok(KasteleynReport { pass, faces })
    }

    /// K(z, w): finite matrix acting on (z,w)-quasiperiodic functions,
    /// rows = whites, columns = blacks.
    pub fn build_k(&self, z: Complex64, w: Complex64) -> DMatrix<Complex64> {
        let nw = self.graph.n_whites();
        let nb = self.graph.n_blacks();
        let mut k = DMatrix::from_element(nw, nb, Complex64::new(0.0, 0.0));
        for (e, edge) in self.graph.edges.iter().enumerate() {
            let (m, n) = edge.offset;
            k[(edge.w, edge.b)] += self.entries[e] * z.powi(m as i32) * w.powi(n as i32);
        }
        k
    }

    /// monomial support bounds of det K(z,w): row-wise offset sums
    fn det_support_bounds(&self) -> (i64, i64, i64, i64) {
        let nw = self.graph.n_whites();
        let mut minx = 0;
        let mut maxx = 0;
        let mut miny = 0;
        let mut maxy = 0;
        for w in 0..nw {
            let offs: Vec<Offset> = self
                .graph
                .edges
                .iter()
                .filter(|e| e.w == w)
                .map(|e| e.offset)
                .collect();
            minx += offs.iter().map(|o| o.0).min().unwrap();
            maxx += offs.iter().map(|o| o.0).max().unwrap();
            miny += offs.iter().map(|o| o.1).min().unwrap();
            maxy += offs.iter().map(|o| o.1).max().unwrap();
        }
        (minx, maxx, miny, maxy)
    }

    /// Characteristic polynomial P(z,w) = det K(z,w), recovered exactly by
    /// evaluation on a product grid of roots of unity and inverse DFT.
    pub fn char_poly(&self) -> Result<CharPoly> {
        if !self.periodic {
            return Err(Error::PeriodicityRequired);
        }
        let (minx, maxx, miny, maxy) = self.det_support_bounds();
        let nz = (maxx - minx + 1).max(1) as usize;
        let nw = (maxy - miny + 1).max(1) as usize;
        use rayon::prelude::*;
        let dets: Vec<Vec<Complex64>> = (0..nz)
            .into_par_iter()
            .map(|a| {
                let z = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * a as f64 / nz as f64);
                (0..nw)
                    .map(|b| {
                        let w = Complex64::from_polar(
                            1.0,
                            2.0 * std::f64::consts::PI * b as f64 / nw as f64,
                        );
                        self.build_k(z, w).lu().determinant()
                    })
                    .collect()
            })
            .collect();
        let mut coeffs = std::collections::BTreeMap::new();
        for i in minx..=maxx {
            for j in miny..=maxy {
                let mut c = Complex64::new(0.0, 0.0);
                for (a, row) in dets.iter().enumerate() {
                    for (b, &d) in row.iter().enumerate() {
                        let ph = -2.0
                            * std::f64::consts::PI
                            * ((a as f64 * i as f64) / nz as f64 + (b as f64 * j as f64) / nw as f64);
                        c += d * Complex64::from_polar(1.0, ph);
                    }
                }
                c /= (nz * nw) as f64;
                coeffs.insert((i, j), c);
            }
        }
        let mut p = CharPoly { coeffs };
        p.drop_small(1e-11);
        if p.coeffs.is_empty() {
            return Err(Error::SingularGrid);
        }
        Ok(p)
    }

    // -- kernel functions -----------------------------------------------------

    /// quad-graph path from node x to node y (both given with displacements)
    fn quad_path(&self, from: QuadNode, to: QuadNode) -> Result<Vec<QuadStep>> {
        use std::collections::{BTreeMap, VecDeque};
        let reach = 3 + from.delta().0.abs().max(from.delta().1.abs())
            + to.delta().0.abs().max(to.delta().1.abs());
        let window = |d: Offset| d.0.abs() <= reach && d.1.abs() <= reach;
        let mut prev: BTreeMap<QuadNode, (QuadNode, QuadStep)> = BTreeMap::new();
        let mut seen: BTreeMap<QuadNode, bool> = BTreeMap::new();
        let mut queue = VecDeque::new();
        queue.push_back(from);
        seen.insert(from, true);
        while let Some(cur) = queue.pop_front() {
            if cur == to {
                let mut path = Vec::new();
                let mut node = cur;
                while node != from {
                    let (p, step) = prev[&node];
                    path.push(step);
                    node = p;
                }
                path.reverse();
                return Ok(path);
            }
            for (next, step) in self.quad_neighbors(cur) {
                if !window(next.delta()) || seen.contains_key(&next) {
                    continue;
                }
                seen.insert(next, true);
                prev.insert(next, (cur, step));
                queue.push_back(next);
            }
        }
        Err(Error::Numeric("quad-graph path not found".into()))
    }

    fn quad_neighbors(&self, n: QuadNode) -> Vec<(QuadNode, QuadStep)> {
        let mut out = Vec::new();
        match n {
            QuadNode::White(w, d) => {
                for (e, edge) in self.graph.edges.iter().enumerate() {
                    if edge.w != w {
                        continue;
                    }
                    let (fl, fl_off) = self.graph.face_left(e);
                    let (fr, fr_off) = self.graph.face_right(e);
                    let (ta, tb) = self.graph.edge_track_pair(e);
                    // quad-edge (w, fL) crossed by the beta strand
                    out.push((
                        QuadNode::Face(fl, (d.0 + fl_off.0, d.1 + fl_off.1)),
                        QuadStep { edge_copy: d, white_side: true, track: tb, from_vertex: true, e },
                    ));
                    out.push((
                        QuadNode::Face(fr, (d.0 + fr_off.0, d.1 + fr_off.1)),
                        QuadStep { edge_copy: d, white_side: true, track: ta, from_vertex: true, e },
                    ));
                }
            }
            QuadNode::Black(b, d) => {
                for (e, edge) in self.graph.edges.iter().enumerate() {
                    if edge.b != b {
                        continue;
                    }
                    // edge copy with black end at d: white end at d - offset
                    let wd = (d.0 - edge.offset.0, d.1 - edge.offset.1);
                    let (fl, fl_off) = self.graph.face_left(e);
                    let (fr, fr_off) = self.graph.face_right(e);
                    let (ta, tb) = self.graph.edge_track_pair(e);
                    // quad-edge (b, fL) crossed by the alpha strand
                    out.push((
                        QuadNode::Face(fl, (wd.0 + fl_off.0, wd.1 + fl_off.1)),
                        QuadStep { edge_copy: wd, white_side: false, track: ta, from_vertex: true, e },
                    ));
                    out.push((
                        QuadNode::Face(fr, (wd.0 + fr_off.0, wd.1 + fr_off.1)),
                        QuadStep { edge_copy: wd, white_side: false, track: tb, from_vertex: true, e },
                    ));
                }
            }
            QuadNode::Face(f, d) => {
                for (e, edge) in self.graph.edges.iter().enumerate() {
                    let (fl, fl_off) = self.graph.face_left(e);
                    let (fr, fr_off) = self.graph.face_right(e);
                    let (ta, tb) = self.graph.edge_track_pair(e);
                    if fl == f {
                        // copies of e whose left face is this face copy
                        let wd = (d.0 - fl_off.0, d.1 - fl_off.1);
                        out.push((
                            QuadNode::White(edge.w, wd),
                            QuadStep { edge_copy: wd, white_side: true, track: tb, from_vertex: false, e },
                        ));
                        out.push((
                            QuadNode::Black(edge.b, (wd.0 + edge.offset.0, wd.1 + edge.offset.1)),
                            QuadStep { edge_copy: wd, white_side: false, track: ta, from_vertex: false, e },
                        ));
                    }
                    if fr == f {
                        let wd = (d.0 - fr_off.0, d.1 - fr_off.1);
                        out.push((
                            QuadNode::White(edge.w, wd),
                            QuadStep { edge_copy: wd, white_side: true, track: ta, from_vertex: false, e },
                        ));
                        out.push((
                            QuadNode::Black(edge.b, (wd.0 + edge.offset.0, wd.1 + edge.offset.1)),
                            QuadStep { edge_copy: wd, white_side: false, track: tb, from_vertex: false, e },
                        ));
                    }
                }
            }
        }
        out
    }

    /// Kernel function g_{x,y}(u) as a product of quad-graph step factors,
    /// in the reduced gauge (scaled to avoid overflow).
    pub fn kernel_g_scaled(&self, x: QuadNode, y: QuadNode, u: &PointLift) -> Result<Scaled> {
        let path = self.quad_path(x, y)?;
        let mut acc = Scaled::one();
        let mut cur = x;
        for step in path {
            let (factor, _) = self.kernel_step_factor(&cur, &step, u, None)?;
            acc = acc.mul(&factor);
            cur = self.step_target(&cur, &step);
        }
        Ok(acc)
    }

    pub fn kernel_g(&self, x: QuadNode, y: QuadNode, u: &PointLift) -> Result<Complex64> {
        self.kernel_g_scaled(x, y, u)?.value()
    }

    /// Product of the kernel step factors with every reduced-prime-form
    /// factor of `skip`'s angle removed; requires the net removed exponent
    /// to be -1 (a simple pole).  Evaluated at the angle lift this is the
    /// residue of the 1-form g zeta there.
    pub fn kernel_g_with_skip(
        &self,
        x: QuadNode,
        y: QuadNode,
        u: &PointLift,
        skip: Option<usize>,
    ) -> Result<Complex64> {
        let path = self.quad_path(x, y)?;
        let mut acc = Scaled::one();
        let mut net = 0i64;
        let mut cur = x;
        for step in path {
            let (factor, exp) = self.kernel_step_factor(&cur, &step, u, skip)?;
            acc = acc.mul(&factor);
            net += exp;
            cur = self.step_target(&cur, &step);
        }
        if skip.is_some() && net != -1 {
            return Err(Error::Numeric(format!(
                "kernel has a pole of order {} at the requested angle",
                -net
            )));
        }
        acc.value()
    }

    fn step_target(&self, cur: &QuadNode, step: &QuadStep) -> QuadNode {
        let e = step.e;
        let edge = &self.graph.edges[e];
        let wd = step.edge_copy;
        match (cur, step.from_vertex) {
            (QuadNode::White(..), true) | (QuadNode::Black(..), true) => {
                // moving to a face: recompute which one from the track side
                let (fl, fl_off) = self.graph.face_left(e);
                let (fr, fr_off) = self.graph.face_right(e);
                let (ta, _) = self.graph.edge_track_pair(e);
                let to_left = match cur {
                    QuadNode::White(..) => step.track != ta, // beta crosses (w, fL)
                    _ => step.track == ta,                   // alpha crosses (b, fL)
                };
                if to_left {
                    QuadNode::Face(fl, (wd.0 + fl_off.0, wd.1 + fl_off.1))
                } else {
                    QuadNode::Face(fr, (wd.0 + fr_off.0, wd.1 + fr_off.1))
                }
            }
            (QuadNode::Face(..), false) => {
                if step.white_side {
                    QuadNode::White(edge.w, wd)
                } else {
                    QuadNode::Black(edge.b, (wd.0 + edge.offset.0, wd.1 + edge.offset.1))
                }
            }
            _ => unreachable!("inconsistent quad step"),
        }
    }

    /// One step factor: f -> w gives theta(t + u + d(w)) / E(beta, u);
    /// b -> f gives theta(-t + u - d(b)) / E(alpha, u); reversed steps invert.
    /// When `skip` matches the step's track, the prime-form factor is left
    /// out and its exponent reported.
    fn kernel_step_factor(
        &self,
        cur: &QuadNode,
        step: &QuadStep,
        u: &PointLift,
        skip: Option<usize>,
    ) -> Result<(Scaled, i64)> {
        let skipped = skip == Some(step.track);
        let track_lift = self.track_lift_c(step.track);
        let eform = if skipped {
            Scaled::one()
        } else {
            let e = self.prime_form_scaled(&track_lift, &u.lift)?;
            if e.is_zero() {
                return Err(Error::PolePoint);
            }
            e
        };
        let pm = self.backend.period_matrix();
        let cfg = self.theta_cfg();
        let zero = ThetaChar::zero(self.genus());
        let make_theta = |arg: &DVector<Complex64>| -> Result<Scaled> {
            let v: Vec<Complex64> = arg.iter().cloned().collect();
            theta_char_scaled(&zero, &v, pm, &cfg)
        };
        let (vertex_node, into_vertex) = match (cur, step.from_vertex) {
            (v @ (QuadNode::White(..) | QuadNode::Black(..)), true) => (*v, false),
            (QuadNode::Face(..), false) => (self.step_target(cur, step), true),
            _ => unreachable!(),
        };
        let factor = match vertex_node {
            QuadNode::White(w, d) => {
                // g_{f,w} = theta(t + (u + d(w))) / E(track, u)
                let dw = self.abel.white(w, d);
                let arg = u.lift.clone() + dw.map(|v| Complex64::from(v)) + self.t_lift.map(Complex64::from);
                let num = make_theta(&arg)?;
                num.div(&eform)
            }
            QuadNode::Black(b, d) => {
                // g_{b,f} = theta(-t + (u - d(b))) / E(track, u)
                let db = self.abel.black(b, d);
                let arg = u.lift.clone() - db.map(|v| Complex64::from(v)) - self.t_lift.map(Complex64::from);
                let num = make_theta(&arg)?;
                num.div(&eform)
            }
            QuadNode::Face(..) => unreachable!(),
        };
        // orientation: f->w and b->f use the factor, w->f and f->b invert
        let invert = match vertex_node {
            QuadNode::White(..) => !into_vertex, // w -> f inverts g_{f,w}
            QuadNode::Black(..) => into_vertex,  // f -> b inverts g_{b,f}
            _ => unreachable!(),
        };
        let exp = if skipped { if invert { 1 } else { -1 } } else { 0 };
        Ok((if invert { Scaled::one().div(&factor) } else { factor }, exp))
    }

    /// (z(u), w(u)) from the train-track angle products; lies on the
    /// spectral curve of the reduced operator when the model is periodic.
    pub fn spectral_point(&self, u: &PointLift) -> Result<(Complex64, Complex64)> {
        let mut zacc = Scaled::one();
        let mut wacc = Scaled::one();
        for (t, track) in self.graph.tracks().iter().enumerate() {
            let lift = self.track_lift_c(t);
            let e = self.prime_form_scaled(&lift, &u.lift)?;
            if e.is_zero() {
                return Err(Error::AnglePole);
            }
            let (h, v) = track.homology;
            zacc = zacc.mul(&e.powi(v));
            wacc = wacc.mul(&e.powi(-h));
        }
        Ok((zacc.value()?, wacc.value()?))
    }

    /// Fay identity residuals (reduced forms) over the supplied curve points:
    /// returns the max normalized residual of the three-term identity and of
    /// the Fock form F_t(a,b) = theta(a + b - t) E(a, b).
    pub fn check_fay(&self, samples: &[[PointLift; 4]], t_shift: &DVector<f64>) -> Result<(f64, f64)> {
        let pm = self.backend.period_matrix();
        let cfg = self.theta_cfg();
        let theta0 = |arg: &DVector<Complex64>| -> Result<Complex64> {
            let v: Vec<Complex64> = arg.iter().cloned().collect();
            crate::theta::theta(&v, pm, &cfg)
        };
        let mut worst_fay: f64 = 0.0;
        let mut worst_fock: f64 = 0.0;
        let mut used = 0usize;
        for [a, b, c, u] in samples {
            // three-term identity with s = t_shift + u-lift offset choices
            let s: DVector<Complex64> =
                t_shift.map(Complex64::from) + u.lift.map(|v| v * Complex64::new(0.3, 0.1));
            let term = |x: &PointLift, y: &PointLift| -> Result<Complex64> {
                let exy = self.prime_form_reduced(&x.lift, &y.lift)?;
                let exu = self.prime_form_reduced(&x.lift, &u.lift)?;
                let eyu = self.prime_form_reduced(&y.lift, &u.lift)?;
                let n = theta0(&(&s + &u.lift - &x.lift - &y.lift))? * exy;
                let d = exu * eyu * theta0(&(&s - &x.lift))? * theta0(&(&s - &y.lift))?;
                Ok(n / d)
            };
            // skip degenerate probes where a denominator theta vanishes
            // (Weierstrass points and angle collisions are measure zero)
            // for genus >= 2 the reduced prime form also vanishes at the
            // zeros of zeta (the spinor factors are omitted), so reject any
            // probe with a small denominator: the identity stays exact but
            // its floating-point conditioning degrades there
            let mut degenerate = false;
            let pts = [a, b, c, u];
            for x in pts {
                if theta0(&(&s - &x.lift))?.norm() < 2e-2 {
                    degenerate = true;
                }
            }
            for i in 0..4 {
                for j in (i + 1)..4 {
                    if self.prime_form_reduced(&pts[i].lift, &pts[j].lift)?.norm() < 2e-2 {
                        degenerate = true;
                    }
                }
            }
            if degenerate {
                continue;
            }
            used += 1;
            let t1 = term(a, b)?;
            let t2 = term(b, c)?;
            let t3 = term(c, a)?;
            let resid = (t1 + t2 + t3).norm();
            let scale = t1.norm().max(t2.norm()).max(t3.norm()).max(1e-300);
            worst_fay = worst_fay.max(resid / scale);

            // Fock's form of the identity
            let tsv = t_shift.map(Complex64::from);
            let f = |x: &PointLift, y: &PointLift| -> Result<Complex64> {
                let e = self.prime_form_reduced(&x.lift, &y.lift)?;
                let th = theta0(&(&x.lift + &y.lift - &tsv))?;
                Ok(th * e)
            };
            let (fa, fb, fc, fd) = (a, b, c, u);
            let r = f(fa, fb)? * f(fc, fd)? + f(fa, fd)? * f(fb, fc)? + f(fa, fc)? * f(fd, fb)?;
            let scale2 = (f(fa, fb)? * f(fc, fd)?)
                .norm()
                .max((f(fa, fd)? * f(fb, fc)?).norm())
                .max(1e-300);
            worst_fock = worst_fock.max(r.norm() / scale2);
        }
        if used * 2 < samples.len() {
            return Err(Error::Numeric("too many degenerate Fay samples".into()));
        }
        Ok((worst_fay, worst_fock))
    }

    /// The divisor of a white vertex: the zero of
    /// s -> theta(t + lift_{A_j}(s) + d(w)) on each oval A_j, j = 1..g.
    pub fn divisor_of_vertex(&self, w: usize) -> Result<Vec<crate::surface::OvalPoint>> {
        let g = self.genus();
        let dw = self.abel.white(w, (0, 0));
        let shift = &dw + &self.t_lift;
        let mut out = Vec::with_capacity(g);
        for j in 1..=g {
            let s =
                self.backend
                    .oval_theta_zero(j, &DVector::from_element(g, 0.0), &shift)?;
            out.push(crate::surface::OvalPoint::new(j, s));
        }
        Ok(out)
    }

    /// coefficients c_j = d_j log theta(t + d(f)) - d_j log theta(t + d(f'))
    /// of the holomorphic part of K_{w,b} g_{b,w}
    pub fn faydiff_coefficients(&self, e: usize, delta: Offset) -> Result<Vec<Complex64>> {
        let (fl, fl_off) = self.graph.face_left(e);
        let (fr, fr_off) = self.graph.face_right(e);
        let dfl = self.abel.face(fl, (fl_off.0 + delta.0, fl_off.1 + delta.1));
        let dfr = self.abel.face(fr, (fr_off.0 + delta.0, fr_off.1 + delta.1));
        let zl: Vec<Complex64> = (&dfl + &self.t_lift).iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let zr: Vec<Complex64> = (&dfr + &self.t_lift).iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let gl = crate::theta::grad_log_theta(&zl, self.backend.period_matrix(), &self.theta_cfg())?;
        let gr = crate::theta::grad_log_theta(&zr, self.backend.period_matrix(), &self.theta_cfg())?;
        Ok(gl.iter().zip(&gr).map(|(a, b)| a - b).collect())
    }
}

fn odd_sign(_chr: &ThetaChar) -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum QuadNode {
    White(usize, Offset),
    Black(usize, Offset),
    Face(usize, Offset),
}

impl QuadNode {
    fn delta(&self) -> Offset {
        match self {
            QuadNode::White(_, d) | QuadNode::Black(_, d) | QuadNode::Face(_, d) => *d,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadStep {
    /// white-end domain of the edge copy whose quadrilateral is crossed
    pub edge_copy: Offset,
    /// whether the vertex side of the step is the white end
    pub white_side: bool,
    /// track crossing the quad-edge
    pub track: usize,
    /// true when the step starts at the graph vertex (and moves to a face)
    pub from_vertex: bool,
    pub e: usize,
}

#[derive(Debug, Clone)]
pub struct FacePhase {
    pub face: usize,
    pub degree: usize,
    pub phase: Complex64,
    pub expected: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone)]
pub struct KasteleynReport {
    pub pass: bool,
    pub faces: Vec<FacePhase>,
}

/// adjugate of a square complex matrix via cofactor determinants
pub fn adjugate(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = m.nrows();
    if n == 1 {
        return DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
    }
    let mut adj = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for i in 0..n {
        for j in 0..n {
            let minor = m.clone().remove_row(i).remove_column(j);
            let det = minor.lu().determinant();
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            adj[(j, i)] = det * sign;
        }
    }
    adj
}
