//! Local moves: shrinking/expanding of 2-valent vertices and the spider
//! move on quadrilateral faces.  Weights on the moved graph are recomputed
//! from the preserved train-tracks and t, and the gauge-invariant
//! observables are compared before and after.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::angles::AngleMap;
use crate::error::{Error, Result};
use crate::gibbs::{edge_probability_local, torus_partition_function, MagneticField, PhasePoint};
use crate::graph::{Edge, Offset, PeriodicBipartiteGraph, Side};
use crate::kasteleyn::FockModel;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MoveSpec {
    /// contract a 2-valent vertex and merge its two neighbors
    Shrink2Valent { vertex: String },
    /// split `vertex` by a new 2-valent vertex of the opposite color; the
    /// rotation slice [split_start, split_start + split_len) stays with the
    /// original vertex
    Expand2Valent { vertex: String, split_start: usize, split_len: usize, new_vertex: String },
    /// spider move on a quadrilateral face (given by face index)
    Spider { face: usize },
}

/// result of applying a move: the new model plus the correspondence of
/// surviving edges (old index -> new index)
pub struct MovedModel {
    pub model: FockModel,
    pub kept_edges: BTreeMap<usize, usize>,
}

pub fn apply_move(model: &FockModel, spec: &MoveSpec) -> Result<MovedModel> {
    let (graph, kept, angle_hint) = match spec {
        MoveSpec::Spider { face } => spider_graph(&model.graph, *face)?,
        MoveSpec::Shrink2Valent { vertex } => shrink_graph(&model.graph, vertex)?,
        MoveSpec::Expand2Valent { vertex, split_start, split_len, new_vertex } => {
            expand_graph(&model.graph, vertex, *split_start, *split_len, new_vertex)?
        }
    };
    let _ = angle_hint;
    // transfer the angle map through the surviving strands
    let mut s = vec![f64::NAN; graph.tracks().len()];
    for (new_t, track) in graph.tracks().iter().enumerate() {
        for &(e_new, side, _) in &track.strand {
            let Some((&e_old, _)) = kept.iter().find(|(_, &v)| v == e_new) else {
                continue;
            };
            let (ta, tb) = model.graph.edge_track_pair(e_old);
            let old_t = match side {
                Side::Alpha => ta,
                Side::Beta => tb,
            };
            s[new_t] = model.angles.s[old_t];
            break;
        }
    }
    if s.iter().any(|v| v.is_nan()) {
        return Err(Error::PatternMismatch(
            "a track of the moved graph crosses no surviving edge".into(),
        ));
    }
    let angles = AngleMap::from_parameters(&model.backend, &s)?;
    let mut new_model = FockModel::new(graph, model.backend.clone(), angles, model.t_lift.clone())?;
    // re-anchor the lifted Abel map so the values on the untouched part
    // agree with the original model (the periods are preserved, so one
    // constant shift through any surviving edge suffices)
    if let Some((&e_old, &e_new)) = kept.iter().next() {
        let (fl_old, off_old) = model.graph.face_left(e_old);
        let v_old = model.abel.face(fl_old, off_old);
        let (fl_new, off_new) = new_model.graph.face_left(e_new);
        let v_new = new_model.abel.face(fl_new, off_new);
        let c = &v_old - &v_new;
        if c.amax() > 1e-14 {
            new_model.shift_abel_anchor(&c)?;
        }
    }
    Ok(MovedModel { model: new_model, kept_edges: kept })
}

fn vertex_index(g: &PeriodicBipartiteGraph, name: &str) -> Result<(bool, usize)> {
    if let Some(i) = g.white_names.iter().position(|n| n == name) {
        return Ok((false, i));
    }
    if let Some(i) = g.black_names.iter().position(|n| n == name) {
        return Ok((true, i));
    }
    Err(Error::InvalidInput(format!("unknown vertex '{name}'")))
}

/// rebuild a graph from explicit parts, tracking the index map of edges
struct Builder {
    whites: Vec<String>,
    blacks: Vec<String>,
    edges: Vec<Edge>,
    rot_w: Vec<Vec<usize>>,
    rot_b: Vec<Vec<usize>>,
}

impl Builder {
    fn finish(self) -> Result<PeriodicBipartiteGraph> {
        PeriodicBipartiteGraph::new(self.whites, self.blacks, self.edges, self.rot_w, self.rot_b)
    }
}

fn shrink_graph(
    g: &PeriodicBipartiteGraph,
    name: &str,
) -> Result<(PeriodicBipartiteGraph, BTreeMap<usize, usize>, ())> {
    let (is_black, idx) = vertex_index(g, name)?;
    // normalize to the black case by symmetry of the data structure
    if is_black {
        let rot = &g.rot_b[idx];
        if rot.len() != 2 {
            return Err(Error::PatternMismatch(format!(
                "vertex '{name}' has degree {}, need 2",
                rot.len()
            )));
        }
        let (e1, e2) = (rot[0], rot[1]);
        let (w1, off1) = (g.edges[e1].w, g.edges[e1].offset);
        let (w2, off2) = (g.edges[e2].w, g.edges[e2].offset);
        if w1 == w2 {
            return Err(Error::PatternMismatch("shrink would create a self-loop".into()));
        }
        // merge w2 into w1; copies of w2 shift by delta = off1 - off2
        let delta = (off1.0 - off2.0, off1.1 - off2.1);
        let mut whites = Vec::new();
        let mut wmap = BTreeMap::new();
        for (i, n) in g.white_names.iter().enumerate() {
            if i == w2 {
                continue;
            }
            wmap.insert(i, whites.len());
            whites.push(if i == w1 { format!("{n}+{}", g.white_names[w2]) } else { n.clone() });
        }
        let mut edges = Vec::new();
        let mut emap = BTreeMap::new();
        for (e, edge) in g.edges.iter().enumerate() {
            if e == e1 || e == e2 {
                continue;
            }
            let (w, off) = if edge.w == w2 {
                (w1, (edge.offset.0 + delta.0, edge.offset.1 + delta.1))
            } else {
                (edge.w, edge.offset)
            };
            emap.insert(e, edges.len());
            edges.push(Edge { w: wmap[&w], b: edge.b, offset: off });
        }
        // rotations: splice w2's edges (after e2) into w1's slot at e1
        let mut rot_w = Vec::new();
        for (i, rot) in g.rot_w.iter().enumerate() {
            if i == w2 {
                continue;
            }
            if i != w1 {
                rot_w.push(rot.iter().map(|e| emap[e]).collect());
                continue;
            }
            let p1 = rot.iter().position(|&e| e == e1).unwrap();
            let rot2 = &g.rot_w[w2];
            let p2 = rot2.iter().position(|&e| e == e2).unwrap();
            let mut merged = Vec::new();
            for k in 1..rot.len() {
                merged.push(rot[(p1 + k) % rot.len()]);
            }
            for k in 1..rot2.len() {
                merged.push(rot2[(p2 + k) % rot2.len()]);
            }
            rot_w.push(merged.iter().map(|e| emap[e]).collect());
        }
        let mut blacks = Vec::new();
        let mut bmap = BTreeMap::new();
        for (i, n) in g.black_names.iter().enumerate() {
            if i == idx {
                continue;
            }
            bmap.insert(i, blacks.len());
            blacks.push(n.clone());
        }
        let rot_b: Vec<Vec<usize>> = g
            .rot_b
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != idx)
            .map(|(_, rot)| rot.iter().map(|e| emap[e]).collect())
            .collect();
        let mut edges2 = edges.clone();
        for e in &mut edges2 {
            e.b = bmap[&e.b];
        }
        let graph = Builder { whites, blacks, edges: edges2, rot_w, rot_b }.finish()?;
        Ok((graph, emap, ()))
    } else {
        // 2-valent white: merge the two black neighbors
        let rot = &g.rot_w[idx];
        if rot.len() != 2 {
            return Err(Error::PatternMismatch(format!(
                "vertex '{name}' has degree {}, need 2",
                rot.len()
            )));
        }
        let (e1, e2) = (rot[0], rot[1]);
        let (b1, off1) = (g.edges[e1].b, g.edges[e1].offset);
        let (b2, off2) = (g.edges[e2].b, g.edges[e2].offset);
        if b1 == b2 {
            return Err(Error::PatternMismatch("shrink would create a self-loop".into()));
        }
        let delta = (off1.0 - off2.0, off1.1 - off2.1);
        let mut blacks = Vec::new();
        let mut bmap = BTreeMap::new();
        for (i, n) in g.black_names.iter().enumerate() {
            if i == b2 {
                continue;
            }
            bmap.insert(i, blacks.len());
            blacks.push(if i == b1 { format!("{n}+{}", g.black_names[b2]) } else { n.clone() });
        }
        let mut edges = Vec::new();
        let mut emap = BTreeMap::new();
        for (e, edge) in g.edges.iter().enumerate() {
            if e == e1 || e == e2 {
                continue;
            }
            let (b, off) = if edge.b == b2 {
                (b1, (edge.offset.0 + delta.0, edge.offset.1 + delta.1))
            } else {
                (edge.b, edge.offset)
            };
            emap.insert(e, edges.len());
            edges.push(Edge { w: edge.w, b: bmap[&b], offset: off });
        }
        let mut rot_b = Vec::new();
        for (i, rot) in g.rot_b.iter().enumerate() {
            if i == b2 {
                continue;
            }
            if i != b1 {
                rot_b.push(rot.iter().map(|e| emap[e]).collect());
                continue;
            }
            let p1 = rot.iter().position(|&e| e == e1).unwrap();
            let rot2 = &g.rot_b[b2];
            let p2 = rot2.iter().position(|&e| e == e2).unwrap();
            let mut merged = Vec::new();
            for k in 1..rot.len() {
                merged.push(rot[(p1 + k) % rot.len()]);
            }
            for k in 1..rot2.len() {
                merged.push(rot2[(p2 + k) % rot2.len()]);
            }
            rot_b.push(merged.iter().map(|e| emap[e]).collect());
        }
        let mut whites = Vec::new();
        let mut wmap = BTreeMap::new();
        for (i, n) in g.white_names.iter().enumerate() {
            if i == idx {
                continue;
            }
            wmap.insert(i, whites.len());
            whites.push(n.clone());
        }
        let rot_w: Vec<Vec<usize>> = g
            .rot_w
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != idx)
            .map(|(_, rot)| rot.iter().map(|e| emap[e]).collect())
            .collect();
        let mut edges2 = edges.clone();
        for e in &mut edges2 {
            e.w = wmap[&e.w];
        }
        let graph = Builder { whites, blacks, edges: edges2, rot_w, rot_b }.finish()?;
        Ok((graph, emap, ()))
    }
}

fn expand_graph(
    g: &PeriodicBipartiteGraph,
    name: &str,
    split_start: usize,
    split_len: usize,
    new_name: &str,
) -> Result<(PeriodicBipartiteGraph, BTreeMap<usize, usize>, ())> {
    let (is_black, idx) = vertex_index(g, name)?;
    if is_black {
        return Err(Error::PatternMismatch(
            "expansion implemented for white vertices (shrink handles both colors)".into(),
        ));
    }
    let rot = g.rot_w[idx].clone();
    let deg = rot.len();
    if split_len == 0 || split_len >= deg {
        return Err(Error::PatternMismatch("split must be a proper nonempty slice".into()));
    }
    // edges rot[split_start .. split_start + split_len) stay with the old
    // white; the rest move to a second white w', joined to the old one via
    // a new 2-valent black vertex b*
    let mut whites = g.white_names.clone();
    let w2 = whites.len();
    whites.push(format!("{new_name}w"));
    let mut blacks = g.black_names.clone();
    let bstar = blacks.len();
    blacks.push(new_name.to_string());
    let mut edges = g.edges.clone();
    let mut emap = BTreeMap::new();
    for e in 0..edges.len() {
        emap.insert(e, e);
    }
    let moved: Vec<usize> = (0..deg - split_len)
        .map(|k| rot[(split_start + split_len + k) % deg])
        .collect();
    for &e in &moved {
        edges[e].w = w2;
    }
    let e_new1 = edges.len();
    edges.push(Edge { w: idx, b: bstar, offset: (0, 0) });
    let e_new2 = edges.len();
    edges.push(Edge { w: w2, b: bstar, offset: (0, 0) });
    let mut rot_w = g.rot_w.clone();
    let kept: Vec<usize> = (0..split_len).map(|k| rot[(split_start + k) % deg]).collect();
    let mut rw1 = kept;
    rw1.push(e_new1);
    rot_w[idx] = rw1;
    let mut rw2 = moved.clone();
    rw2.push(e_new2);
    rot_w.push(rw2);
    let mut rot_b = g.rot_b.clone();
    rot_b.push(vec![e_new1, e_new2]);
    let graph = Builder { whites, blacks, edges, rot_w, rot_b }.finish()?;
    Ok((graph, emap, ()))
}

fn spider_graph(
    g: &PeriodicBipartiteGraph,
    face: usize,
) -> Result<(PeriodicBipartiteGraph, BTreeMap<usize, usize>, ())> {
    let f = g
        .faces()
        .get(face)
        .ok_or_else(|| Error::InvalidInput(format!("no face {face}")))?
        .clone();
    if f.degree() != 4 {
        return Err(Error::PatternMismatch(format!(
            "face {face} has degree {}, spider needs 4",
            f.degree()
        )));
    }
    // boundary darts in ccw order: (e1: w1->b1), (e2: b1->w2), (e3: w2->b2),
    // (e4: b2->w1), with tail positions in the face's domain
    let mut darts = f.darts.clone();
    let mut tails = f.tail_pos.clone();
    if !darts[0].forward {
        darts.rotate_left(1);
        tails.rotate_left(1);
    }
    let (e1, e2, e3, e4) = (darts[0].edge, darts[1].edge, darts[2].edge, darts[3].edge);
    let w1 = g.edges[e1].w;
    let b1 = g.edges[e1].b;
    let w2 = g.edges[e3].w;
    let b2 = g.edges[e3].b;
    let (tau_w1, tau_b1, tau_w2, tau_b2) = (tails[0], tails[1], tails[2], tails[3]);
    if w1 == w2 || b1 == b2 {
        return Err(Error::PatternMismatch(
            "spider face must have four distinct boundary vertices".into(),
        ));
    }
    let mut whites = g.white_names.clone();
    let w1p = whites.len();
    whites.push(format!("{}*", g.white_names[w1]));
    let w2p = whites.len();
    whites.push(format!("{}*", g.white_names[w2]));
    let mut blacks = g.black_names.clone();
    let b1p = blacks.len();
    blacks.push(format!("{}*", g.black_names[b1]));
    let b2p = blacks.len();
    blacks.push(format!("{}*", g.black_names[b2]));

    let mut edges = Vec::new();
    let mut emap = BTreeMap::new();
    for (e, edge) in g.edges.iter().enumerate() {
        if e == e1 || e == e2 || e == e3 || e == e4 {
            continue;
        }
        emap.insert(e, edges.len());
        edges.push(edge.clone());
    }
    let neg = |t: Offset| (-t.0, -t.1);
    // pendants
    let p_w1 = edges.len();
    edges.push(Edge { w: w1, b: b1p, offset: neg(tau_w1) });
    let p_b1 = edges.len();
    edges.push(Edge { w: w1p, b: b1, offset: tau_b1 });
    let p_w2 = edges.len();
    edges.push(Edge { w: w2, b: b2p, offset: neg(tau_w2) });
    let p_b2 = edges.len();
    edges.push(Edge { w: w2p, b: b2, offset: tau_b2 });
    // inner quadrilateral b1' - w1' - b2' - w2' (counterclockwise)
    let i_11 = edges.len();
    edges.push(Edge { w: w1p, b: b1p, offset: (0, 0) });
    let i_12 = edges.len();
    edges.push(Edge { w: w1p, b: b2p, offset: (0, 0) });
    let i_22 = edges.len();
    edges.push(Edge { w: w2p, b: b2p, offset: (0, 0) });
    let i_21 = edges.len();
    edges.push(Edge { w: w2p, b: b1p, offset: (0, 0) });

    // old-vertex rotations: the two face edges are cyclically consecutive
    // (previous-in-rotation pairs); replace them with the pendant
    let replace_pair = |rot: &[usize], first: usize, second: usize, repl: usize| -> Result<Vec<usize>> {
        let n = rot.len();
        let p = rot
            .iter()
            .position(|&e| e == first)
            .ok_or_else(|| Error::PatternMismatch("face edge missing from rotation".into()))?;
        if rot[(p + 1) % n] != second {
            return Err(Error::PatternMismatch("face corner edges are not adjacent".into()));
        }
        let mut out = Vec::with_capacity(n - 1);
        out.push(repl);
        for k in 2..n {
            out.push(rot[(p + k) % n]);
        }
        Ok(out)
    };
    // assemble rotations with sentinel markers for the new edges so old
    // and new index spaces cannot collide during remapping
    const S_PW1: usize = usize::MAX - 1;
    const S_PB1: usize = usize::MAX - 2;
    const S_PW2: usize = usize::MAX - 3;
    const S_PB2: usize = usize::MAX - 4;
    const S_I11: usize = usize::MAX - 5;
    const S_I12: usize = usize::MAX - 6;
    const S_I22: usize = usize::MAX - 7;
    const S_I21: usize = usize::MAX - 8;
    let mut rot_w: Vec<Vec<usize>> = Vec::new();
    for (i, rot) in g.rot_w.iter().enumerate() {
        let newrot = if i == w1 {
            replace_pair(rot, e1, e4, S_PW1)?
        } else if i == w2 {
            replace_pair(rot, e3, e2, S_PW2)?
        } else {
            rot.clone()
        };
        rot_w.push(newrot);
    }
    rot_w.push(vec![S_I12, S_I11, S_PB1]); // w1' (ccw: N, W, SE)
    rot_w.push(vec![S_I22, S_PB2, S_I21]); // w2' (ccw: E, NW, S)
    let mut rot_b: Vec<Vec<usize>> = Vec::new();
    for (i, rot) in g.rot_b.iter().enumerate() {
        let newrot = if i == b1 {
            replace_pair(rot, e2, e1, S_PB1)?
        } else if i == b2 {
            replace_pair(rot, e4, e3, S_PB2)?
        } else {
            rot.clone()
        };
        rot_b.push(newrot);
    }
    rot_b.push(vec![S_I11, S_I21, S_PW1]); // b1' (ccw: E, N, SW)
    rot_b.push(vec![S_PW2, S_I22, S_I12]); // b2' (ccw: NE, W, S)

    let subst = |e: usize| -> usize {
        match e {
            S_PW1 => p_w1,
            S_PB1 => p_b1,
            S_PW2 => p_w2,
            S_PB2 => p_b2,
            S_I11 => i_11,
            S_I12 => i_12,
            S_I22 => i_22,
            S_I21 => i_21,
            other => emap[&other],
        }
    };
    let rot_w: Vec<Vec<usize>> = rot_w
        .into_iter()
        .map(|r| r.into_iter().map(subst).collect())
        .collect();
    let rot_b: Vec<Vec<usize>> = rot_b
        .into_iter()
        .map(|r| r.into_iter().map(subst).collect())
        .collect();
    let graph = Builder { whites, blacks, edges, rot_w, rot_b }.finish()?;
    Ok((graph, emap, ()))
}

#[derive(Debug, Clone)]
pub struct MoveReport {
    pub face_weight_dev: f64,
    pub char_poly_rel_dev: f64,
    pub partition_log_ratio_dev: f64,
    pub distant_edge_prob_dev: f64,
    pub fay_residual: f64,
    pub pass: bool,
}

/// Compare gauge-invariant observables before and after a move: untouched
/// face weights (exact), characteristic polynomials up to one constant,
/// the consistency of torus partition-function ratios, and probabilities of
/// edges outside the move's support.
pub fn check_move_invariance(model: &FockModel, spec: &MoveSpec) -> Result<MoveReport> {
    let moved = apply_move(model, spec)?;
    let new = &moved.model;

    // untouched faces: match complete dart cycles (edges, directions and
    // relative displacements) up to a cyclic rotation
    let canonical = |darts: &[(usize, bool, Offset)]| -> Vec<(usize, bool, Offset)> {
        let n = darts.len();
        let mut best: Option<Vec<(usize, bool, Offset)>> = None;
        for start in 0..n {
            let base = darts[start].2;
            let rotated: Vec<(usize, bool, Offset)> = (0..n)
                .map(|k| {
                    let d = &darts[(start + k) % n];
                    (d.0, d.1, (d.2 .0 - base.0, d.2 .1 - base.1))
                })
                .collect();
            if best.as_ref().map_or(true, |b| &rotated < b) {
                best = Some(rotated);
            }
        }
        best.unwrap()
    };
    let mut face_weight_dev: f64 = 0.0;
    for (fi, f) in model.graph.faces().iter().enumerate() {
        let old_cycle: Option<Vec<(usize, bool, Offset)>> = f
            .darts
            .iter()
            .zip(&f.tail_pos)
            .map(|(d, &t)| moved.kept_edges.get(&d.edge).map(|&e| (e, d.forward, t)))
            .collect();
        let Some(old_cycle) = old_cycle else { continue };
        let old_canon = canonical(&old_cycle);
        for (fj, f2) in new.graph.faces().iter().enumerate() {
            let new_cycle: Vec<(usize, bool, Offset)> = f2
                .darts
                .iter()
                .zip(&f2.tail_pos)
                .map(|(d, &t)| (d.edge, d.forward, t))
                .collect();
            if canonical(&new_cycle) == old_canon {
                let w_old = model.face_weight(fi)?;
                let w_new = new.face_weight(fj)?;
                face_weight_dev = face_weight_dev.max((w_old - w_new).norm() / w_old.norm());
            }
        }
    }

    // characteristic polynomials proportional
    let char_poly_rel_dev = if model.periodic {
        let p_old = model.char_poly()?;
        let p_new = new.char_poly()?;
        let mut ratio: Option<Complex64> = None;
        let mut dev: f64 = 0.0;
        let scale_old = p_old.max_coeff();
        for (k, v) in &p_old.coeffs {
            if v.norm() < 1e-6 * scale_old {
                continue;
            }
            let v2 = p_new.coeffs.get(k).cloned().unwrap_or(Complex64::new(0.0, 0.0));
            let r = v2 / v;
            match ratio {
                None => ratio = Some(r),
                Some(r0) => dev = dev.max((r - r0).norm() / r0.norm()),
            }
        }
        dev
    } else {
        0.0
    };

    // partition-function ratio consistency: log(Z_after/Z_before) scales
    // with the number of fundamental domains
    let b0 = MagneticField { bx: 0.0, by: 0.0 };
    let z1_old = torus_partition_function(model, 1, b0)?;
    let z1_new = torus_partition_function(new, 1, b0)?;
    let z2_old = torus_partition_function(model, 2, b0)?;
    let z2_new = torus_partition_function(new, 2, b0)?;
    let partition_log_ratio_dev =
        ((z2_new / z2_old).ln() - 4.0 * (z1_new / z1_old).ln()).abs();

    // distant edges: survivors not incident to a modified vertex
    let touched_old: Vec<usize> = (0..model.graph.n_edges())
        .filter(|e| !moved.kept_edges.contains_key(e))
        .collect();
    let mut touched_vertices: Vec<(usize, usize)> = Vec::new();
    for &e in &touched_old {
        touched_vertices.push((model.graph.edges[e].w, model.graph.edges[e].b));
    }
    let mut distant_edge_prob_dev: f64 = 0.0;
    if model.periodic && new.periodic && model.genus() >= 1 {
        let u_old = PhasePoint::from_oval(model, 1, 0.31)?;
        let u_new = PhasePoint::from_oval(new, 1, 0.31)?;
        for (&e_old, &e_new) in &moved.kept_edges {
            let edge = &model.graph.edges[e_old];
            let incident = touched_vertices
                .iter()
                .any(|&(w, b)| w == edge.w || b == edge.b);
            if incident {
                continue;
            }
            let p_old = edge_probability_local(model, &u_old, e_old)?;
            let p_new = edge_probability_local(new, &u_new, e_new)?;
            distant_edge_prob_dev = distant_edge_prob_dev.max((p_old - p_new).abs());
        }
    }

    // Fay identity in Fock form on the move's angles (spider only)
    let fay_residual = match spec {
        MoveSpec::Spider { face } => {
            let f = &model.graph.faces()[*face];
            let mut pts = Vec::new();
            for d in &f.darts {
                let (ta, tb) = model.graph.edge_track_pair(d.edge);
                for t in [ta, tb] {
                    if !pts.contains(&t) {
                        pts.push(t);
                    }
                }
            }
            if pts.len() >= 4 {
                let lifts: Vec<crate::surface::PointLift> = pts
                    .iter()
                    .take(4)
                    .map(|&t| {
                        crate::surface::PointLift {
                            lift: model.angles.lift[t].map(Complex64::from),
                            handle: crate::surface::PointHandle::Oval(crate::surface::OvalPoint::new(
                                0,
                                model.angles.s[t],
                            )),
                        }
                    })
                    .collect();
                let sample = [[lifts[0].clone(), lifts[1].clone(), lifts[2].clone(), lifts[3].clone()]];
                let (_, fock) = model.check_fay(&sample, &model.t_lift.clone())?;
                fock
            } else {
                0.0
            }
        }
        _ => 0.0,
    };

    let pass = face_weight_dev < 1e-10
        && char_poly_rel_dev < 1e-7
        && partition_log_ratio_dev < 1e-8
        && distant_edge_prob_dev < 1e-6
        && fay_residual < 1e-9;
    Ok(MoveReport {
        face_weight_dev,
        char_poly_rel_dev,
        partition_log_ratio_dev,
        distant_edge_prob_dev,
        fay_residual,
        pass,
    })
}

/// the 2-valent identity: entries at a degree-2 vertex sum to zero
pub fn two_valent_identity(model: &FockModel, name: &str) -> Result<Complex64> {
    let (is_black, idx) = vertex_index(&model.graph, name)?;
    let rot = if is_black { &model.graph.rot_b[idx] } else { &model.graph.rot_w[idx] };
    if rot.len() != 2 {
        return Err(Error::PatternMismatch("vertex is not 2-valent".into()));
    }
    Ok(model.entry(rot[0]) + model.entry(rot[1]))
}
