//! Angle maps on the distinguished oval, the lifted discrete Abel map on the
//! quad-graph, and the periodicity criterion phi(alpha) in (Z^2)^g.

use nalgebra::DVector;
use std::collections::{BTreeMap, VecDeque};

use crate::error::{Error, Result};
use crate::graph::{Offset, PeriodicBipartiteGraph};
use crate::surface::MCurveBackend;

/// Assignment of an angle on A_0 to every train-track: the cyclic parameter
/// s and the Abel-Jacobi lift of the angle, normalized into one window.
#[derive(Debug, Clone)]
pub struct AngleMap {
    /// cyclic parameters, indexed by track id
    pub s: Vec<f64>,
    /// window lifts in R^g, indexed by track id
    pub lift: Vec<DVector<f64>>,
    /// track ids sorted by increasing s (ties keep insertion order)
    pub order: Vec<usize>,
}

impl AngleMap {
    /// Build from raw cyclic parameters via the backend's Abel-Jacobi map.
    pub fn from_parameters(backend: &MCurveBackend, s_raw: &[f64]) -> Result<Self> {
        let mut s: Vec<f64> = s_raw.iter().map(|v| v.rem_euclid(1.0)).collect();
        let lift: Vec<DVector<f64>> = s
            .iter()
            .map(|&si| backend.a0_lift(si))
            .collect::<Result<_>>()?;
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&a, &b| s[a].partial_cmp(&s[b]).unwrap().then(a.cmp(&b)));
        for v in &mut s {
            *v = v.rem_euclid(1.0);
        }
        Ok(Self { s, lift, order })
    }

    /// Expert mode: lifts supplied directly (must be consistent with the
    /// ordering of the fractional parts).
    pub fn from_lifts(lifts: Vec<DVector<f64>>) -> Self {
        let s: Vec<f64> = lifts.iter().map(|l| l[0].rem_euclid(1.0)).collect();
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&a, &b| s[a].partial_cmp(&s[b]).unwrap().then(a.cmp(&b)));
        Self { s, lift: lifts, order }
    }

    pub fn genus(&self) -> usize {
        self.lift.first().map_or(0, |l| l.len())
    }
}

fn permute(v: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, f);
        v.swap(k, i);
    }
}

/// cyclic order on coprime direction vectors: returns true when b lies
/// strictly inside the counterclockwise arc from a to c
fn cyclic_between(a: (i64, i64), b: (i64, i64), c: (i64, i64)) -> bool {
    let ang = |p: (i64, i64)| (p.1 as f64).atan2(p.0 as f64);
    let (x, y, z) = (ang(a), ang(b), ang(c));
    let norm = |v: f64| v.rem_euclid(std::f64::consts::TAU);
    norm(y - x) < norm(z - x) && norm(y - x) > 0.0 && norm(z - x) > 0.0
}

/// Diagnostics from angle-map validation.
#[derive(Debug, Clone, Default)]
pub struct AngleDiagnostics {
    pub coincident_pairs: Vec<(usize, usize)>,
    pub order_violations: Vec<(usize, usize, usize)>,
}

/// An angle map is valid when non-parallel tracks have distinct angles and
/// the cyclic order of the angles matches the cyclic order of the homology
/// directions.
pub fn validate_angle_map(
    graph: &PeriodicBipartiteGraph,
    angles: &AngleMap,
) -> (bool, AngleDiagnostics) {
    let mut diag = AngleDiagnostics::default();
    let tracks = graph.tracks();
    if angles.s.len() != tracks.len() {
        diag.coincident_pairs.push((usize::MAX, usize::MAX));
        return (false, diag);
    }
    let n = tracks.len();
    for i in 0..n {
        for j in (i + 1)..n {
            if tracks[i].homology != tracks[j].homology
                && (angles.s[i] - angles.s[j]).abs() < 1e-12
            {
                diag.coincident_pairs.push((i, j));
            }
        }
    }
    // cyclic order: for every triple of pairwise distinct homology classes,
    // the order of the angles must match the order of the directions
    let ord = &angles.order;
    for ii in 0..n {
        for jj in 0..n {
            for kk in 0..n {
                if ii == jj || jj == kk || ii == kk {
                    continue;
                }
                let (a, b, c) = (ord[ii], ord[jj], ord[kk]);
                let (ca, cb, cc) = (
                    tracks[a].homology,
                    tracks[b].homology,
                    tracks[c].homology,
                );
                if ca == cb || cb == cc || ca == cc {
                    continue;
                }
                // angles are in cyclic order a -> b -> c (by sorted position)
                let pos = |x: usize| ord.iter().position(|&t| t == x).unwrap();
                let (pa, pb, pc) = (pos(a), pos(b), pos(c));
                let between = (pa < pb && pb < pc)
                    || (pb < pc && pc < pa)
                    || (pc < pa && pa < pb);
                if between && !cyclic_between(ca, cb, cc) {
                    diag.order_violations.push((a, b, c));
                }
            }
        }
    }
    let ok = diag.coincident_pairs.is_empty() && diag.order_violations.is_empty();
    (ok, diag)
}

/// Lifted discrete Abel map: values on the canonical copies of faces and
/// vertices, plus the horizontal and vertical periods.
#[derive(Debug, Clone)]
pub struct AbelMap {
    pub face_val: Vec<DVector<f64>>,
    pub white_val: Vec<DVector<f64>>,
    pub black_val: Vec<DVector<f64>>,
    pub px: DVector<f64>,
    pub py: DVector<f64>,
    pub base_face: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Node {
    Face(usize),
    White(usize),
    Black(usize),
}

impl AbelMap {
    pub fn face(&self, f: usize, delta: Offset) -> DVector<f64> {
        &self.face_val[f] + &self.px * delta.0 as f64 + &self.py * delta.1 as f64
    }

    pub fn white(&self, w: usize, delta: Offset) -> DVector<f64> {
        &self.white_val[w] + &self.px * delta.0 as f64 + &self.py * delta.1 as f64
    }

    pub fn black(&self, b: usize, delta: Offset) -> DVector<f64> {
        &self.black_val[b] + &self.px * delta.0 as f64 + &self.py * delta.1 as f64
    }

    /// degree of the divisor d(x): +1 on blacks, 0 on faces, -1 on whites
    pub fn degree(node_is_black: bool, node_is_face: bool) -> i64 {
        if node_is_face {
            0
        } else if node_is_black {
            1
        } else {
            -1
        }
    }
}

/// BFS over a window of the universal cover applying the local rule
/// d(b) = d(f) + alpha, d(w) = d(f) - beta across every edge.
pub fn discrete_abel_map(
    graph: &PeriodicBipartiteGraph,
    angles: &AngleMap,
    base_face: usize,
) -> Result<AbelMap> {
    let g = angles.genus();
    const W: i64 = 3;
    let window = |d: Offset| d.0.abs() <= W && d.1.abs() <= W;
    let mut values: BTreeMap<(Node, Offset), DVector<f64>> = BTreeMap::new();
    let mut queue: VecDeque<(Node, Offset)> = VecDeque::new();
    values.insert((Node::Face(base_face), (0, 0)), DVector::from_element(g, 0.0));
    queue.push_back((Node::Face(base_face), (0, 0)));

    // incidence: for every edge copy at white-domain delta, the four nodes
    // and their lift relations; we precompute per-edge structure and shift.
    struct Rel {
        node: Node,
        base: Offset,
    }
    let mut edge_rels: Vec<[Rel; 4]> = Vec::with_capacity(graph.n_edges());
    let mut edge_incr: Vec<[DVector<f64>; 4]> = Vec::with_capacity(graph.n_edges());
    for e in 0..graph.n_edges() {
        let (fl, fl_off) = graph.face_left(e);
        let (fr, fr_off) = graph.face_right(e);
        let (ta, tb) = graph.edge_track_pair(e);
        let alpha = &angles.lift[ta];
        let beta = &angles.lift[tb];
        let edge = &graph.edges[e];
        edge_rels.push([
            Rel { node: Node::Face(fl), base: fl_off },
            Rel { node: Node::Face(fr), base: fr_off },
            Rel { node: Node::White(edge.w), base: (0, 0) },
            Rel { node: Node::Black(edge.b), base: edge.offset },
        ]);
        // values relative to d(fL): fL = 0, fR = beta - alpha is wrong way:
        // d(fR) - d(fL) = alpha - beta; b = fL + alpha; w = fL - beta
        edge_incr.push([
            DVector::from_element(g, 0.0),
            alpha - beta,
            -beta.clone(),
            alpha.clone(),
        ]);
    }
    // node -> incident edges (as indices into edge_rels with the node slot)
    let mut incident: BTreeMap<Node, Vec<(usize, usize)>> = BTreeMap::new();
    for (e, rels) in edge_rels.iter().enumerate() {
        for (slot, r) in rels.iter().enumerate() {
            incident.entry(r.node).or_default().push((e, slot));
        }
    }

    let mut worst_residual: f64 = 0.0;
    while let Some((node, delta)) = queue.pop_front() {
        let val = values[&(node, delta)].clone();
        for &(e, slot) in incident.get(&node).into_iter().flatten() {
            // edge copy position: the node sits at rels[slot].base + copy
            let base = edge_rels[e][slot].base;
            let copy = (delta.0 - base.0, delta.1 - base.1);
            // value of d at the fL anchor of this copy
            let fl_anchor = &val - &edge_incr[e][slot];
            for (slot2, r2) in edge_rels[e].iter().enumerate() {
                let pos2 = (copy.0 + r2.base.0, copy.1 + r2.base.1);
                if !window(pos2) {
                    continue;
                }
                let v2 = &fl_anchor + &edge_incr[e][slot2];
                match values.get(&(r2.node, pos2)) {
                    Some(existing) => {
                        let res = (existing - &v2).amax();
                        worst_residual = worst_residual.max(res);
                    }
                    None => {
                        values.insert((r2.node, pos2), v2);
                        queue.push_back((r2.node, pos2));
                    }
                }
            }
        }
    }
    if worst_residual > 1e-12 {
        return Err(Error::Inconsistent(worst_residual));
    }
    let origin = (0i64, 0i64);
    let get = |n: Node, d: Offset| -> Result<DVector<f64>> {
        values
            .get(&(n, d))
            .cloned()
            .ok_or_else(|| Error::Numeric(format!("abel map BFS did not reach {n:?}@{d:?}")))
    };
    let base0 = get(Node::Face(base_face), origin)?;
    let px = get(Node::Face(base_face), (1, 0))? - &base0;
    let py = get(Node::Face(base_face), (0, 1))? - &base0;
    let mut face_val = Vec::with_capacity(graph.faces().len());
    for f in 0..graph.faces().len() {
        face_val.push(get(Node::Face(f), origin)?);
    }
    let mut white_val = Vec::with_capacity(graph.n_whites());
    for w in 0..graph.n_whites() {
        white_val.push(get(Node::White(w), origin)?);
    }
    let mut black_val = Vec::with_capacity(graph.n_blacks());
    for b in 0..graph.n_blacks() {
        black_val.push(get(Node::Black(b), origin)?);
    }
    // period consistency across the whole window
    for ((node, delta), val) in &values {
        let expect = match node {
            Node::Face(f) => &face_val[*f] + &px * delta.0 as f64 + &py * delta.1 as f64,
            Node::White(w) => &white_val[*w] + &px * delta.0 as f64 + &py * delta.1 as f64,
            Node::Black(b) => &black_val[*b] + &px * delta.0 as f64 + &py * delta.1 as f64,
        };
        let res = (val - expect).amax();
        if res > 1e-10 {
            return Err(Error::Inconsistent(res));
        }
    }
    Ok(AbelMap { face_val, white_val, black_val, px, py, base_face })
}

/// Window lifts of the sorted angle sequence: (sorted track ids, lifts with
/// the wrap subtracted so the sequence increases, gap polygon points P_j).
pub struct SortedAngles {
    pub track_order: Vec<usize>,
    pub lifts: Vec<DVector<f64>>,
    /// P_j for j = 0..r: P_{j+1} = P_j + [T_{order[j]}], anchored P_0 = (0,0);
    /// the gap between angle j-1 and angle j carries the point P_j.
    pub polygon_points: Vec<(i64, i64)>,
}

pub fn sorted_angles(graph: &PeriodicBipartiteGraph, angles: &AngleMap) -> SortedAngles {
    let order = angles.order.clone();
    let lifts: Vec<DVector<f64>> = order.iter().map(|&t| angles.lift[t].clone()).collect();
    let mut pts = vec![(0i64, 0i64)];
    for &t in &order {
        let h = graph.tracks()[t].homology;
        let last = *pts.last().unwrap();
        pts.push((last.0 + h.0, last.1 + h.1));
    }
    SortedAngles { track_order: order, lifts, polygon_points: pts }
}

/// phi(alpha) = sum_j P_j \int_{alpha_{j-1}}^{alpha_j} omega, one point of
/// R^2 per coordinate of the Jacobian.
pub fn phi_map(graph: &PeriodicBipartiteGraph, angles: &AngleMap) -> Result<Vec<(f64, f64)>> {
    let g = angles.genus();
    let sa = sorted_angles(graph, angles);
    let r = sa.track_order.len();
    let mut phi = vec![(0.0, 0.0); g];
    for j in 0..r {
        // gap from angle j-1 to angle j carries P_j (P_0 == P_r by closure)
        let p = sa.polygon_points[j];
        let prev = if j == 0 {
            &sa.lifts[r - 1] - DVector::from_element(g, 1.0)
        } else {
            sa.lifts[j - 1].clone()
        };
        let d = &sa.lifts[j] - prev;
        for k in 0..g {
            phi[k].0 += p.0 as f64 * d[k];
            phi[k].1 += p.1 as f64 * d[k];
        }
    }
    Ok(phi)
}

/// The Kasteleyn operator is periodic iff every phi_k is an integer point;
/// returns the verdict, the nearest integer points, and the distance.
pub fn is_operator_periodic(
    graph: &PeriodicBipartiteGraph,
    angles: &AngleMap,
    tol: f64,
) -> Result<(bool, Vec<(i64, i64)>, f64)> {
    let phi = phi_map(graph, angles)?;
    let mut pts = Vec::with_capacity(phi.len());
    let mut worst: f64 = 0.0;
    for (x, y) in &phi {
        let p = (x.round() as i64, y.round() as i64);
        worst = worst.max((x - p.0 as f64).abs().max((y - p.1 as f64).abs()));
        pts.push(p);
    }
    let mut ok = worst <= tol;
    if ok {
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                if pts[i] == pts[j] {
                    ok = false;
                }
            }
        }
    }
    Ok((ok, pts, worst))
}

/// Construct a periodic angle map by Gauss-Newton on the angles, driving
/// phi(alpha) to the requested interior integer points of N(G).
pub fn solve_periodic_angles(
    graph: &PeriodicBipartiteGraph,
    backend: &MCurveBackend,
    targets: &[(i64, i64)],
    initial: Option<&[f64]>,
) -> Result<AngleMap> {
    let g = backend.genus();
    if targets.len() != g {
        return Err(Error::InvalidInput(format!(
            "need {g} target points, got {}",
            targets.len()
        )));
    }
    let tracks = graph.tracks();
    let r = tracks.len();
    // initial guess: tracks spread by homology angle
    let mut s: Vec<f64> = match initial {
        Some(v) => v.to_vec(),
        None => {
            let mut idx: Vec<usize> = (0..r).collect();
            idx.sort_by(|&a, &b| {
                let an = |p: (i64, i64)| (p.1 as f64).atan2(p.0 as f64).rem_euclid(std::f64::consts::TAU);
                an(tracks[a].homology)
                    .partial_cmp(&an(tracks[b].homology))
                    .unwrap()
                    .then(a.cmp(&b))
            });
            let mut s = vec![0.0; r];
            for (pos, &t) in idx.iter().enumerate() {
                s[t] = (pos as f64 + 0.5) / r as f64;
            }
            s
        }
    };
    // assign targets to phi coordinates greedily by initial distance; the
    // correspondence between coordinates and interior points is ours to pick
    let targets = {
        let am0 = AngleMap::from_parameters(backend, &s)?;
        let phi0 = phi_map(graph, &am0)?;
        let cost = |perm: &[usize]| -> f64 {
            perm.iter()
                .enumerate()
                .map(|(k, &i)| {
                    (phi0[k].0 - targets[i].0 as f64).powi(2)
                        + (phi0[k].1 - targets[i].1 as f64).powi(2)
                })
                .sum()
        };
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut perm: Vec<usize> = (0..g).collect();
        permute(&mut perm, 0, &mut |p: &[usize]| {
            let c = cost(p);
            if best.as_ref().map_or(true, |(bc, _)| c < *bc) {
                best = Some((c, p.to_vec()));
            }
        });
        let (_, perm) = best.unwrap();
        perm.iter().map(|&i| targets[i]).collect::<Vec<_>>()
    };
    let target_vec: Vec<f64> = targets
        .iter()
        .flat_map(|p| [p.0 as f64, p.1 as f64])
        .collect();
    for _iter in 0..200 {
        let am = AngleMap::from_parameters(backend, &s)?;
        let phi = phi_map(graph, &am)?;
        let mut resid = DVector::from_element(2 * g, 0.0);
        for k in 0..g {
            resid[2 * k] = phi[k].0 - target_vec[2 * k];
            resid[2 * k + 1] = phi[k].1 - target_vec[2 * k + 1];
        }
        if resid.amax() < 1e-12 {
            let (ok, _, _) = is_operator_periodic(graph, &am, 1e-9)?;
            if !ok {
                return Err(Error::Numeric(
                    "phi reached the target but the integer points are not distinct".into(),
                ));
            }
            let (valid, diag) = validate_angle_map(graph, &am);
            if !valid {
                return Err(Error::Numeric(format!(
                    "periodic solution violates the cyclic order: {diag:?}"
                )));
            }
            return Ok(am);
        }
        // Jacobian: d phi_k / d s_j = -[T_j] * (a0 velocity at s_j)_k
        let mut jac = nalgebra::DMatrix::from_element(2 * g, r, 0.0);
        for j in 0..r {
            let vel = backend.a0_velocity(s[j])?;
            let h = tracks[j].homology;
            for k in 0..g {
                jac[(2 * k, j)] = -(h.0 as f64) * vel[k];
                jac[(2 * k + 1, j)] = -(h.1 as f64) * vel[k];
            }
        }
        // Levenberg-style damped least squares step
        let jt = jac.transpose();
        let mut a = &jac * &jt;
        for i in 0..2 * g {
            a[(i, i)] += 1e-9;
        }
        let rhs = resid.clone();
        let lu = nalgebra::linalg::LU::new(a);
        let y = lu
            .solve(&rhs)
            .ok_or_else(|| Error::Numeric("singular Gauss-Newton system".into()))?;
        let step = &jt * y;
        let mut scale = 1.0;
        // keep the angles inside one period and distinct
        for _ in 0..30 {
            let cand: Vec<f64> = (0..r).map(|j| s[j] - scale * step[j]).collect();
            let mut sorted = cand.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let min_gap = sorted
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::INFINITY, f64::min);
            if min_gap > 1e-4 || scale < 1e-6 {
                s = cand;
                break;
            }
            scale *= 0.5;
        }
    }
    Err(Error::Numeric("periodic angle solve did not converge".into()))
}

/// Transfer an angle map to a sublattice cover: every cover track inherits
/// the parameter of the base track its strands project to.  Cover edges are
/// indexed as coset * n_base_edges + base_edge.
pub fn transfer_angles_to_cover(
    base_graph: &PeriodicBipartiteGraph,
    base_angles: &AngleMap,
    cover: &PeriodicBipartiteGraph,
) -> Result<Vec<f64>> {
    let ne = base_graph.n_edges();
    let mut s = Vec::with_capacity(cover.tracks().len());
    for track in cover.tracks() {
        let (e_cov, side, _) = track.strand[0];
        let base_e = e_cov % ne;
        let (ta, tb) = base_graph.edge_track_pair(base_e);
        let base_track = match side {
            crate::graph::Side::Alpha => ta,
            crate::graph::Side::Beta => tb,
        };
        s.push(base_angles.s[base_track]);
    }
    Ok(s)
}

/// Try g-subsets of the interior integer points until one yields a periodic
/// angle map; subsets are enumerated in index order for determinism.
pub fn solve_periodic_angles_auto(
    graph: &PeriodicBipartiteGraph,
    backend: &MCurveBackend,
) -> Result<AngleMap> {
    let g = backend.genus();
    let interior = graph.newton_interior_points()?;
    if interior.len() < g {
        return Err(Error::InvalidInput(format!(
            "Newton polygon has {} interior points, genus {g} needs at least {g}",
            interior.len()
        )));
    }
    let mut subset: Vec<usize> = (0..g).collect();
    loop {
        let targets: Vec<(i64, i64)> = subset.iter().map(|&i| interior[i]).collect();
        if let Ok(am) = solve_periodic_angles(graph, backend, &targets, None) {
            return Ok(am);
        }
        // next combination
        let mut i = g;
        loop {
            if i == 0 {
                return Err(Error::Numeric(
                    "no subset of interior points yields a periodic angle map".into(),
                ));
            }
            i -= 1;
            if subset[i] + (g - i) < interior.len() {
                subset[i] += 1;
                for j in (i + 1)..g {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}
