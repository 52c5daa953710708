//! Z^2-periodic bipartite graphs given by a fundamental domain with edge
//! offsets and a rotation system, and the combinatorics derived from them:
//! torus embedding (faces), oriented train-tracks, minimality, and the
//! geometric Newton polygon.
//!
//! Conventions: an edge stores (white, black, offset) where the black copy
//! lives in the white copy's domain translated by the offset.  Rotations
//! list incident edges counterclockwise.  Faces are orbits of the map
//! "reverse, then previous edge in the rotation at the head", which traverses
//! each face counterclockwise (interior on the left of every dart).
//! Train-track strands are oriented with black vertices on the right; the
//! strand crossing the quad-edges (w, right face) -> (b, left face) is the
//! alpha strand of the edge, the other one is beta.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub type Offset = (i64, i64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Vertex {
    White(usize),
    Black(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Edge {
    pub w: usize,
    pub b: usize,
    pub offset: Offset,
}

/// One directed edge occurrence; `forward` means white -> black.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dart {
    pub edge: usize,
    pub forward: bool,
}

impl Dart {
    pub fn rev(self) -> Self {
        Dart { edge: self.edge, forward: !self.forward }
    }
}

#[derive(Debug, Clone)]
pub struct Face {
    /// boundary darts in counterclockwise order
    pub darts: Vec<Dart>,
    /// tail position of each dart relative to the face anchor
    pub tail_pos: Vec<Offset>,
}

impl Face {
    /// degree 2m: number of boundary edges
    pub fn degree(&self) -> usize {
        self.darts.len()
    }
}

/// Strand side: the alpha strand crosses (w, right) -> (b, left), the beta
/// strand crosses (b, right) -> (w, left).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Alpha,
    Beta,
}

#[derive(Debug, Clone)]
pub struct TrainTrack {
    pub id: usize,
    /// crossed edges in strand order, with the side and the white-end domain
    /// displacement accumulated from the start of the cycle
    pub strand: Vec<(usize, Side, Offset)>,
    pub homology: (i64, i64),
}

#[derive(Debug, Clone)]
pub struct MinimalityReport {
    pub minimal: bool,
    pub self_crossings: Vec<(usize, usize)>,
    /// (track, track, found, expected)
    pub bad_pairs: Vec<(usize, usize, usize, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphJson {
    whites: Vec<String>,
    blacks: Vec<String>,
    edges: Vec<EdgeJson>,
    rotations: BTreeMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EdgeJson {
    w: String,
    b: String,
    offset: [i64; 2],
}

#[derive(Debug, Clone)]
pub struct PeriodicBipartiteGraph {
    pub white_names: Vec<String>,
    pub black_names: Vec<String>,
    pub edges: Vec<Edge>,
    /// ccw incident edge lists
    pub rot_w: Vec<Vec<usize>>,
    pub rot_b: Vec<Vec<usize>>,
    faces: Vec<Face>,
    /// face orbit membership of every dart: (face index, position in orbit)
    dart_face: BTreeMap<(usize, bool), (usize, usize)>,
    tracks: Vec<TrainTrack>,
    /// per edge: (alpha track, beta track)
    edge_tracks: Vec<(usize, usize)>,
}

impl PeriodicBipartiteGraph {
    pub fn new(
        white_names: Vec<String>,
        black_names: Vec<String>,
        edges: Vec<Edge>,
        rot_w: Vec<Vec<usize>>,
        rot_b: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let mut g = Self {
            white_names,
            black_names,
            edges,
            rot_w,
            rot_b,
            faces: Vec::new(),
            dart_face: BTreeMap::new(),
            tracks: Vec::new(),
            edge_tracks: Vec::new(),
        };
        g.validate_rotations()?;
        g.build_faces()?;
        g.build_tracks()?;
        Ok(g)
    }

    pub fn n_whites(&self) -> usize {
        self.white_names.len()
    }

    pub fn n_blacks(&self) -> usize {
        self.black_names.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn tracks(&self) -> &[TrainTrack] {
        &self.tracks
    }

    /// (alpha, beta) track ids of an edge
    pub fn edge_track_pair(&self, e: usize) -> (usize, usize) {
        self.edge_tracks[e]
    }

    /// face on the left of the white -> black dart, with the anchor offset
    /// of the face copy relative to the white end's domain
    pub fn face_left(&self, e: usize) -> (usize, Offset) {
        let (f, pos) = self.dart_face[&(e, true)];
        let tau = self.faces[f].tail_pos[pos];
        (f, (-tau.0, -tau.1))
    }

    /// face on the right of the white -> black dart (left of black -> white),
    /// with its anchor offset relative to the white end's domain
    pub fn face_right(&self, e: usize) -> (usize, Offset) {
        let (f, pos) = self.dart_face[&(e, false)];
        let tau = self.faces[f].tail_pos[pos];
        let off = self.edges[e].offset;
        (f, (off.0 - tau.0, off.1 - tau.1))
    }

    fn validate_rotations(&self) -> Result<()> {
        if self.rot_w.len() != self.n_whites() || self.rot_b.len() != self.n_blacks() {
            return Err(Error::EmbeddingInvalid("rotation list count mismatch".into()));
        }
        let mut seen_w = vec![false; self.n_edges()];
        let mut seen_b = vec![false; self.n_edges()];
        for (w, rot) in self.rot_w.iter().enumerate() {
            if rot.len() < 2 {
                return Err(Error::EmbeddingInvalid(format!(
                    "white vertex {w} has degree {} < 2",
                    rot.len()
                )));
            }
            for &e in rot {
                if e >= self.n_edges() || self.edges[e].w != w || seen_w[e] {
                    return Err(Error::EmbeddingInvalid(format!(
                        "edge {e} badly placed in rotation of white {w}"
                    )));
                }
                seen_w[e] = true;
            }
        }
        for (b, rot) in self.rot_b.iter().enumerate() {
            if rot.len() < 2 {
                return Err(Error::EmbeddingInvalid(format!(
                    "black vertex {b} has degree {} < 2",
                    rot.len()
                )));
            }
            for &e in rot {
                if e >= self.n_edges() || self.edges[e].b != b || seen_b[e] {
                    return Err(Error::EmbeddingInvalid(format!(
                        "edge {e} badly placed in rotation of black {b}"
                    )));
                }
                seen_b[e] = true;
            }
        }
        if seen_w.iter().any(|&s| !s) || seen_b.iter().any(|&s| !s) {
            return Err(Error::EmbeddingInvalid("some edge missing from a rotation".into()));
        }
        Ok(())
    }

    fn rotation_prev(&self, at_head_of: Dart) -> usize {
        let e = at_head_of.edge;
        if at_head_of.forward {
            // head is the black end
            let b = self.edges[e].b;
            let rot = &self.rot_b[b];
            let i = rot.iter().position(|&x| x == e).unwrap();
            rot[(i + rot.len() - 1) % rot.len()]
        } else {
            let w = self.edges[e].w;
            let rot = &self.rot_w[w];
            let i = rot.iter().position(|&x| x == e).unwrap();
            rot[(i + rot.len() - 1) % rot.len()]
        }
    }

    /// successor dart in the face orbit (counterclockwise traversal)
    fn face_next(&self, d: Dart) -> Dart {
        let e2 = self.rotation_prev(d);
        Dart { edge: e2, forward: !d.forward }
    }

    fn dart_displacement(&self, d: Dart) -> Offset {
        let off = self.edges[d.edge].offset;
        if d.forward {
            off
        } else {
            (-off.0, -off.1)
        }
    }

    fn build_faces(&mut self) -> Result<()> {
        let mut seen: BTreeMap<(usize, bool), bool> = BTreeMap::new();
        for e in 0..self.n_edges() {
            for fwd in [true, false] {
                seen.insert((e, fwd), false);
            }
        }
        let mut faces = Vec::new();
        let mut dart_face = BTreeMap::new();
        for e in 0..self.n_edges() {
            for fwd in [true, false] {
                if seen[&(e, fwd)] {
                    continue;
                }
                let start = Dart { edge: e, forward: fwd };
                let mut darts = Vec::new();
                let mut tail_pos = Vec::new();
                let mut d = start;
                let mut pos: Offset = (0, 0);
                loop {
                    seen.insert((d.edge, d.forward), true);
                    dart_face.insert((d.edge, d.forward), (faces.len(), darts.len()));
                    darts.push(d);
                    tail_pos.push(pos);
                    let disp = self.dart_displacement(d);
                    pos = (pos.0 + disp.0, pos.1 + disp.1);
                    d = self.face_next(d);
                    if d == start {
                        break;
                    }
                    if darts.len() > 4 * self.n_edges() {
                        return Err(Error::EmbeddingInvalid("face orbit does not close".into()));
                    }
                }
                if pos != (0, 0) {
                    return Err(Error::EmbeddingInvalid(format!(
                        "face orbit closes with displacement {pos:?}; not a disc"
                    )));
                }
                if darts.len() % 2 != 0 {
                    return Err(Error::EmbeddingInvalid("odd face degree in a bipartite graph".into()));
                }
                faces.push(Face { darts, tail_pos });
            }
        }
        // Euler characteristic of the torus
        let v = (self.n_whites() + self.n_blacks()) as i64;
        let e_count = self.n_edges() as i64;
        let f = faces.len() as i64;
        if v - e_count + f != 0 {
            return Err(Error::EmbeddingInvalid(format!(
                "V - E + F = {} != 0, not a torus embedding",
                v - e_count + f
            )));
        }
        self.faces = faces;
        self.dart_face = dart_face;
        Ok(())
    }

    /// step of the train-track strand through edge `e` on side `side`,
    /// starting with white-end displacement `delta`
    fn strand_step(&self, e: usize, side: Side, delta: Offset) -> (usize, Side, Offset) {
        let (f, pos) = self.dart_face[&(e, true)];
        let face = &self.faces[f];
        let len = face.darts.len();
        match side {
            Side::Alpha => {
                // exit through (b, left face): continue with the successor dart
                let nd = face.darts[(pos + 1) % len];
                let e2 = nd.edge;
                let off_e = self.edges[e].offset;
                let off_e2 = self.edges[e2].offset;
                let delta2 = (delta.0 + off_e.0 - off_e2.0, delta.1 + off_e.1 - off_e2.1);
                (e2, Side::Beta, delta2)
            }
            Side::Beta => {
                // exit through (w, left face): continue with the predecessor dart
                let pd = face.darts[(pos + len - 1) % len];
                let e2 = pd.edge;
                (e2, Side::Alpha, delta)
            }
        }
    }

    fn build_tracks(&mut self) -> Result<()> {
        let ne = self.n_edges();
        let mut strand_track: BTreeMap<(usize, Side), usize> = BTreeMap::new();
        let mut tracks = Vec::new();
        for e in 0..ne {
            for side in [Side::Alpha, Side::Beta] {
                if strand_track.contains_key(&(e, side)) {
                    continue;
                }
                let id = tracks.len();
                let mut strand = Vec::new();
                let mut cur = (e, side, (0i64, 0i64));
                loop {
                    strand_track.insert((cur.0, cur.1), id);
                    strand.push(cur);
                    let next = self.strand_step(cur.0, cur.1, cur.2);
                    if next.0 == e && next.1 == side {
                        let homology = next.2;
                        tracks.push(TrainTrack { id, strand, homology });
                        break;
                    }
                    if strand.len() > 4 * ne {
                        return Err(Error::EmbeddingInvalid("train-track does not close".into()));
                    }
                    cur = next;
                }
            }
        }
        let mut edge_tracks = Vec::with_capacity(ne);
        for e in 0..ne {
            edge_tracks.push((strand_track[&(e, Side::Alpha)], strand_track[&(e, Side::Beta)]));
        }
        // the total homology class vanishes
        let sum = tracks.iter().fold((0i64, 0i64), |a, t| (a.0 + t.homology.0, a.1 + t.homology.1));
        if sum != (0, 0) {
            return Err(Error::EmbeddingInvalid(format!("track homology sum {sum:?} != 0")));
        }
        self.tracks = tracks;
        self.edge_tracks = edge_tracks;
        Ok(())
    }

    /// Minimality test by crossing counts.  Tracks may not self-intersect,
    /// non-parallel pairs must cross exactly |det([T],[T'])| times per
    /// fundamental domain (all crossings of one sign), and parallel pairs
    /// may not cross at all.  Anti-parallel pairs cross in pairs of opposite
    /// direction, which minimal graphs allow.
    pub fn check_minimal(&self) -> MinimalityReport {
        let nt = self.tracks.len();
        // count[i][j]: edges where i carries the alpha strand and j the beta
        let mut count = vec![vec![0usize; nt]; nt];
        let mut self_crossings = Vec::new();
        for (e, &(ta, tb)) in self.edge_tracks.iter().enumerate() {
            if ta == tb {
                self_crossings.push((ta, e));
            } else {
                count[ta][tb] += 1;
            }
        }
        let mut bad_pairs = Vec::new();
        for i in 0..nt {
            for j in (i + 1)..nt {
                let (h1, v1) = self.tracks[i].homology;
                let (h2, v2) = self.tracks[j].homology;
                let det = (h1 * v2 - v1 * h2).unsigned_abs() as usize;
                let total = count[i][j] + count[j][i];
                if (h1, v1) == (h2, v2) {
                    // parallel: any crossing is a parallel bigon
                    if total != 0 {
                        bad_pairs.push((i, j, total, 0));
                    }
                } else if (h1, v1) == (-h2, -v2) {
                    // anti-parallel: opposite-direction crossings balance
                    if count[i][j] != count[j][i] {
                        bad_pairs.push((i, j, total, 0));
                    }
                } else if total != det {
                    bad_pairs.push((i, j, total, det));
                }
            }
        }
        MinimalityReport {
            minimal: self_crossings.is_empty() && bad_pairs.is_empty(),
            self_crossings,
            bad_pairs,
        }
    }

    /// Geometric Newton polygon: homology vectors ordered by angle and laid
    /// tail-to-head starting from (0,0).
    pub fn newton_polygon(&self) -> Result<Vec<(i64, i64)>> {
        let mut classes: Vec<(i64, i64)> = self.tracks.iter().map(|t| t.homology).collect();
        sort_by_angle(&mut classes);
        let mut pts = vec![(0i64, 0i64)];
        for c in &classes {
            let last = *pts.last().unwrap();
            pts.push((last.0 + c.0, last.1 + c.1));
        }
        pts.pop(); // closes back to (0,0)
        // area by the shoelace formula
        let mut area2 = 0i64;
        for i in 0..pts.len() {
            let p = pts[i];
            let q = pts[(i + 1) % pts.len()];
            area2 += p.0 * q.1 - p.1 * q.0;
        }
        if area2 == 0 {
            return Err(Error::DegenerateGraph);
        }
        Ok(pts)
    }

    /// Distinct boundary vertices of the Newton polygon (corners only).
    pub fn newton_polygon_corners(&self) -> Result<Vec<(i64, i64)>> {
        let pts = self.newton_polygon()?;
        let n = pts.len();
        let mut corners = Vec::new();
        for i in 0..n {
            let a = pts[(i + n - 1) % n];
            let b = pts[i];
            let c = pts[(i + 1) % n];
            let cross = (b.0 - a.0) * (c.1 - b.1) - (b.1 - a.1) * (c.0 - b.0);
            if cross != 0 {
                corners.push(b);
            }
        }
        Ok(corners)
    }

    /// Interior integer points of the Newton polygon.
    pub fn newton_interior_points(&self) -> Result<Vec<(i64, i64)>> {
        let pts = self.newton_polygon()?;
        let xs: Vec<i64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<i64> = pts.iter().map(|p| p.1).collect();
        let (x0, x1) = (*xs.iter().min().unwrap(), *xs.iter().max().unwrap());
        let (y0, y1) = (*ys.iter().min().unwrap(), *ys.iter().max().unwrap());
        let mut out = Vec::new();
        for x in x0..=x1 {
            for y in y0..=y1 {
                if point_strictly_inside(&pts, (x, y)) {
                    out.push((x, y));
                }
            }
        }
        Ok(out)
    }

    // -- serialization --------------------------------------------------------

    pub fn to_json(&self) -> serde_json::Value {
        let rotations: BTreeMap<String, Vec<usize>> = self
            .white_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), self.rot_w[i].clone()))
            .chain(
                self.black_names
                    .iter()
                    .enumerate()
                    .map(|(i, n)| (n.clone(), self.rot_b[i].clone())),
            )
            .collect();
        serde_json::json!({
            "whites": self.white_names,
            "blacks": self.black_names,
            "edges": self.edges.iter().map(|e| serde_json::json!({
                "w": self.white_names[e.w],
                "b": self.black_names[e.b],
                "offset": [e.offset.0, e.offset.1],
            })).collect::<Vec<_>>(),
            "rotations": rotations,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let parsed: GraphJson = serde_json::from_value(v.clone())?;
        let widx: BTreeMap<&String, usize> =
            parsed.whites.iter().enumerate().map(|(i, n)| (n, i)).collect();
        let bidx: BTreeMap<&String, usize> =
            parsed.blacks.iter().enumerate().map(|(i, n)| (n, i)).collect();
        if widx.len() != parsed.whites.len() || bidx.len() != parsed.blacks.len() {
            return Err(Error::InvalidInput("duplicate vertex identifiers".into()));
        }
        let mut edges = Vec::new();
        for e in &parsed.edges {
            let w = *widx
                .get(&e.w)
                .ok_or_else(|| Error::InvalidInput(format!("unknown white '{}'", e.w)))?;
            let b = *bidx
                .get(&e.b)
                .ok_or_else(|| Error::InvalidInput(format!("unknown black '{}'", e.b)))?;
            edges.push(Edge { w, b, offset: (e.offset[0], e.offset[1]) });
        }
        let mut rot_w = vec![Vec::new(); parsed.whites.len()];
        let mut rot_b = vec![Vec::new(); parsed.blacks.len()];
        for (name, rot) in &parsed.rotations {
            if let Some(&w) = widx.get(name) {
                rot_w[w] = rot.clone();
            } else if let Some(&b) = bidx.get(name) {
                rot_b[b] = rot.clone();
            } else {
                return Err(Error::InvalidInput(format!("rotation for unknown vertex '{name}'")));
            }
        }
        Self::new(parsed.whites, parsed.blacks, edges, rot_w, rot_b)
    }

    // -- covers ----------------------------------------------------------------

    /// Quotient by the sublattice spanned by `u` and `v` (in the fundamental
    /// domain coordinates): the cover with |det| copies of the domain.
    pub fn sublattice_cover(&self, u: Offset, v: Offset) -> Result<Self> {
        let det = u.0 * v.1 - u.1 * v.0;
        if det == 0 {
            return Err(Error::InvalidInput("cover vectors are collinear".into()));
        }
        let hnf = hnf2(u, v);
        let (d1, d2) = (hnf.0, hnf.1 .1);
        let reduce = |p: Offset| -> (Offset, Offset) {
            // returns (coset rep, lattice coordinates of the subtracted part)
            let c2 = p.1.div_euclid(hnf.1 .1);
            let mut rep = (p.0 - c2 * hnf.1 .0, p.1 - c2 * hnf.1 .1);
            let c1 = rep.0.div_euclid(hnf.0);
            rep.0 -= c1 * hnf.0;
            // lattice element = c1 * (d1, 0) + c2 * (h21, d2); convert to
            // coordinates in the (u, v) basis
            let lat = (c1 * hnf.0 + c2 * hnf.1 .0, c2 * hnf.1 .1);
            let coords = lattice_coords(u, v, lat);
            (rep, coords)
        };
        let n_cosets = (d1 * d2) as usize;
        let coset_index = |rep: Offset| -> usize { (rep.0 * d2 + rep.1) as usize };
        let mut whites = Vec::new();
        let mut blacks = Vec::new();
        for i in 0..n_cosets {
            let (r1, r2) = ((i as i64) / d2, (i as i64) % d2);
            for n in &self.white_names {
                whites.push(format!("{n}@{r1},{r2}"));
            }
            for n in &self.black_names {
                blacks.push(format!("{n}@{r1},{r2}"));
            }
        }
        let nw = self.n_whites();
        let nb = self.n_blacks();
        let ne = self.n_edges();
        let mut edges = Vec::new();
        for i in 0..n_cosets {
            let rep = ((i as i64) / d2, (i as i64) % d2);
            for (e, edge) in self.edges.iter().enumerate() {
                let target = (rep.0 + edge.offset.0, rep.1 + edge.offset.1);
                let (rep2, coords) = reduce(target);
                edges.push(Edge {
                    w: i * nw + edge.w,
                    b: coset_index(rep2) * nb + edge.b,
                    offset: coords,
                });
                let _ = e;
            }
        }
        let mut rot_w = vec![Vec::new(); n_cosets * nw];
        let mut rot_b = vec![Vec::new(); n_cosets * nb];
        for i in 0..n_cosets {
            for w in 0..nw {
                rot_w[i * nw + w] = self.rot_w[w].iter().map(|&e| i * ne + e).collect();
            }
            let rep = ((i as i64) / d2, (i as i64) % d2);
            for b in 0..nb {
                rot_b[i * nb + b] = self
                    .rot_b[b]
                    .iter()
                    .map(|&e| {
                        // the copy of e whose black end lands in coset `rep`:
                        // white coset rep_w with rep_w + offset = rep mod L
                        let off = self.edges[e].offset;
                        let (rep_w, _) = reduce((rep.0 - off.0, rep.1 - off.1));
                        coset_index(rep_w) * ne + e
                    })
                    .collect();
            }
        }
        Self::new(whites, blacks, edges, rot_w, rot_b)
    }
}

/// Hermite normal form of the lattice spanned by u, v: basis
/// ((d1, 0), (h21, d2)) with d1, d2 > 0 and 0 <= h21 < d1.
fn hnf2(u: Offset, v: Offset) -> (i64, (i64, i64)) {
    // work with rows (u; v), column convention (x, y)
    let (mut a, mut b) = (u, v);
    // make the second components (b.1) the gcd via euclid on the y-coords
    while b.1 != 0 {
        let q = a.1.div_euclid(b.1);
        let na = (a.0 - q * b.0, a.1 - q * b.1);
        a = b;
        b = na;
    }
    // now b.1 == 0: b = (±d1', 0); a = (h, d2') with d2' = gcd of y's
    let mut d1 = b.0.abs();
    let mut row2 = a;
    if row2.1 < 0 {
        row2 = (-row2.0, -row2.1);
    }
    if d1 == 0 {
        // degenerate: shouldn't happen for det != 0
        d1 = 1;
    }
    let h21 = row2.0.rem_euclid(d1);
    (d1, (h21, row2.1))
}

/// coordinates (m, n) with m*u + n*v = p (p must lie in the lattice)
fn lattice_coords(u: Offset, v: Offset, p: Offset) -> Offset {
    let det = u.0 * v.1 - u.1 * v.0;
    let m = (p.0 * v.1 - p.1 * v.0) / det;
    let n = (u.0 * p.1 - u.1 * p.0) / det;
    debug_assert_eq!((m * u.0 + n * v.0, m * u.1 + n * v.1), p);
    (m, n)
}

/// cyclic sort of integer vectors by angle around the origin, starting just
/// above the positive x-axis
fn sort_by_angle(classes: &mut [(i64, i64)]) {
    classes.sort_by(|a, b| {
        let ha = half_plane(*a);
        let hb = half_plane(*b);
        ha.cmp(&hb).then_with(|| {
            let cross = a.0 * b.1 - a.1 * b.0;
            cross.cmp(&0).reverse()
        })
    });
}

/// 0 for the upper half (including +x axis), 1 for the lower (including -x)
fn half_plane(p: (i64, i64)) -> u8 {
    if p.1 > 0 || (p.1 == 0 && p.0 > 0) {
        0
    } else {
        1
    }
}

fn point_strictly_inside(poly: &[(i64, i64)], p: (i64, i64)) -> bool {
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        if cross <= 0 {
            return false;
        }
    }
    true
}

// ---------------------------------------------------------------------------
// constructors for the standard lattices
// ---------------------------------------------------------------------------

/// Square lattice with one white and one black vertex per fundamental domain
/// (the diagonal presentation); four edges, four train-tracks with homology
/// classes (1,0), (0,1), (-1,0), (0,-1).
pub fn square_lattice() -> PeriodicBipartiteGraph {
    let edges = vec![
        Edge { w: 0, b: 0, offset: (0, 0) },   // east
        Edge { w: 0, b: 0, offset: (0, -1) },  // north
        Edge { w: 0, b: 0, offset: (-1, -1) }, // west
        Edge { w: 0, b: 0, offset: (-1, 0) },  // south
    ];
    PeriodicBipartiteGraph::new(
        vec!["w0".into()],
        vec!["b0".into()],
        edges,
        vec![vec![0, 1, 2, 3]],
        vec![vec![2, 3, 0, 1]],
    )
    .expect("square lattice is a valid torus graph")
}

/// Hexagonal (honeycomb) lattice: one white, one black, three edges, one
/// hexagonal face.
pub fn hexagonal_lattice() -> PeriodicBipartiteGraph {
    let edges = vec![
        Edge { w: 0, b: 0, offset: (0, 0) },
        Edge { w: 0, b: 0, offset: (1, 0) },
        Edge { w: 0, b: 0, offset: (0, 1) },
    ];
    PeriodicBipartiteGraph::new(
        vec!["w0".into()],
        vec!["b0".into()],
        edges,
        vec![vec![0, 1, 2]],
        vec![vec![0, 1, 2]],
    )
    .expect("hexagonal lattice is a valid torus graph")
}

/// Square-octagon (4-8-8) lattice: two squares per fundamental domain,
/// 4 white + 4 black vertices, 12 edges, faces of degree 4, 4, 8, 8.
///
/// Vertex layout: square 0 has white N0, S0 and black E0, W0; square 1 has
/// black N1, S1 and white E1, W1.
pub fn square_octagon() -> PeriodicBipartiteGraph {
    let whites = vec!["N0".into(), "S0".into(), "E1".into(), "W1".into()];
    let blacks = vec!["E0".into(), "W0".into(), "N1".into(), "S1".into()];
    let (n0, s0, e1, w1) = (0usize, 1usize, 2usize, 3usize);
    let (e0, w0, n1, s1) = (0usize, 1usize, 2usize, 3usize);
    let edges = vec![
        Edge { w: n0, b: e0, offset: (0, 0) },  // 0
        Edge { w: s0, b: e0, offset: (0, 0) },  // 1
        Edge { w: s0, b: w0, offset: (0, 0) },  // 2
        Edge { w: n0, b: w0, offset: (0, 0) },  // 3
        Edge { w: e1, b: n1, offset: (0, 0) },  // 4
        Edge { w: e1, b: s1, offset: (0, 0) },  // 5
        Edge { w: w1, b: s1, offset: (0, 0) },  // 6
        Edge { w: w1, b: n1, offset: (0, 0) },  // 7
        Edge { w: w1, b: e0, offset: (0, 0) },  // 8: link E(0,0)-W(1,0)
        Edge { w: e1, b: w0, offset: (1, 1) },  // 9: link E(1,0)-W(2,0)
        Edge { w: n0, b: s1, offset: (0, -1) }, // 10: link N(0,0)-S(0,1)
        Edge { w: s0, b: n1, offset: (-1, 0) }, // 11: link N(1,0)-S(1,1)
    ];
    let rot_w = vec![
        vec![0, 10, 3], // N0: E0 (SE), link up, W0 (SW)
        vec![1, 2, 11], // S0: E0 (NE), W0 (NW), link down
        vec![9, 4, 5],  // E1: link east, N1 (NW), S1 (SW)
        vec![7, 8, 6],  // W1: N1 (NE), link west, S1 (SE)
    ];
    let rot_b = vec![
        vec![8, 0, 1],  // E0: link east, N0 (NW), S0 (SW)
        vec![3, 9, 2],  // W0: N0 (NE), link west, S0 (SE)
        vec![4, 11, 7], // N1: E1 (SE), link up, W1 (SW)
        vec![5, 6, 10], // S1: E1 (NE), W1 (NW), link down
    ];
    PeriodicBipartiteGraph::new(whites, blacks, edges, rot_w, rot_b)
        .expect("square-octagon lattice is a valid torus graph")
}
