//! End-to-end acceptance suite.  Each test exercises one criterion at its
//! stated tolerance and prints one PASS line; run with
//! `cargo test -p fock-dimers-core --test acceptance -- --nocapture`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;

use fock_dimers_core::angles::{phi_map, sorted_angles};
use fock_dimers_core::gibbs::*;
use fock_dimers_core::kasteleyn::FockModel;
use fock_dimers_core::model::instances;
use fock_dimers_core::moves::{apply_move, check_move_invariance, two_valent_identity, MoveSpec};
use fock_dimers_core::poly::polygons_equal_up_to_translation;
use fock_dimers_core::surface::OvalPoint;
use fock_dimers_core::theta::{theta, theta_char, PeriodMatrix, ThetaChar, ThetaConfig};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// deterministic pseudo-random stream (splitmix64)
struct Rng(u64);

impl Rng {
    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    fn f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.f64()
    }

    fn int(&mut self, lo: i64, hi: i64) -> i64 {
        lo + (self.next_u64() % ((hi - lo + 1) as u64)) as i64
    }
}

fn skew_model() -> FockModel {
    let (model, _) = instances::square_skew().unwrap().build().unwrap();
    model
}

fn genus2_model() -> FockModel {
    let (model, _) = instances::square_octagon_genus2().unwrap().build().unwrap();
    model
}

fn gap_mid(model: &FockModel) -> f64 {
    let mut sorted = model.angles.s.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (sorted[0] + sorted[1]) / 2.0
}

/// the boundary lattice point of the Newton polygon attached to the gap of
/// A_0 containing the parameter s
fn gap_polygon_point(model: &FockModel, s: f64) -> (i64, i64) {
    let sa = sorted_angles(&model.graph, &model.angles);
    let r = sa.track_order.len();
    for j in 0..r {
        let lo = model.angles.s[sa.track_order[j]];
        let hi = model.angles.s[sa.track_order[(j + 1) % r]];
        let span = (hi - lo).rem_euclid(1.0);
        let d = (s - lo).rem_euclid(1.0);
        if d > 0.0 && d < span.max(1e-12) {
            return sa.polygon_points[j + 1];
        }
    }
    sa.polygon_points[0]
}

#[test]
fn criterion_01_theta_correctness() {
    let t0 = std::time::Instant::now();
    let cfg = ThetaConfig::default();
    let tol10 = 10.0 * cfg.tol;
    // genus-1 values against an independent Jacobi series oracle
    let tau = 1.17;
    let pm1 = PeriodMatrix::new(DMatrix::from_element(1, 1, c(0.0, tau))).unwrap();
    let oracle = |z: Complex64| -> Complex64 {
        let mut s = c(0.0, 0.0);
        for n in -60i64..=60 {
            let nf = n as f64;
            s += (c(0.0, PI) * (c(0.0, tau) * nf * nf + z * 2.0 * nf)).exp();
        }
        s
    };
    let mut rng = Rng(41);
    for _ in 0..1000 {
        let z = c(rng.range(-2.0, 2.0), rng.range(-0.8, 0.8));
        let v = theta(&[z], &pm1, &cfg).unwrap();
        let o = oracle(z);
        assert!((v - o).norm() <= 1e-10 * o.norm().max(1.0), "theta({z}) = {v} vs {o}");
    }
    // identity battery at genus 1 and 2
    for g in [1usize, 2] {
        let pm = if g == 1 {
            pm1.clone()
        } else {
            let mut m = DMatrix::from_element(2, 2, c(0.0, 0.0));
            m[(0, 0)] = c(0.0, 1.21);
            m[(1, 1)] = c(0.0, 0.83);
            m[(0, 1)] = c(0.0, 0.31);
            m[(1, 0)] = c(0.0, 0.31);
            PeriodMatrix::new(m).unwrap()
        };
        for _ in 0..1000 {
            let z: Vec<Complex64> =
                (0..g).map(|_| c(rng.range(-1.0, 1.0), rng.range(-0.5, 0.5))).collect();
            let chr = ThetaChar::new(
                (0..g).map(|_| rng.int(0, 1)).collect(),
                (0..g).map(|_| rng.int(0, 1)).collect(),
            )
            .unwrap();
            // quasi-periodicity
            let m: Vec<i64> = (0..g).map(|_| rng.int(-2, 2)).collect();
            let n: Vec<i64> = (0..g).map(|_| rng.int(-2, 2)).collect();
            let zv = DVector::from_column_slice(&z);
            let nv = DVector::from_iterator(g, n.iter().map(|&v| Complex64::from(v as f64)));
            let mv = DVector::from_iterator(g, m.iter().map(|&v| Complex64::from(v as f64)));
            let shifted = &zv + &mv + pm.omega() * &nv;
            let lhs = theta(shifted.as_slice(), &pm, &cfg).unwrap();
            let factor =
                (c(0.0, -PI) * nv.dot(&(&zv * Complex64::from(2.0) + pm.omega() * &nv))).exp();
            let rhs = factor * theta(&z, &pm, &cfg).unwrap();
            assert!((lhs - rhs).norm() <= tol10 * lhs.norm().max(1.0), "quasi-periodicity");
            // parity
            let neg: Vec<Complex64> = z.iter().map(|v| -v).collect();
            let a = theta_char(&chr, &z, &pm, &cfg).unwrap();
            let b = theta_char(&chr, &neg, &pm, &cfg).unwrap();
            let sign = if chr.is_odd() { -1.0 } else { 1.0 };
            assert!((a * sign - b).norm() <= tol10 * a.norm().max(1.0), "parity");
            // reality
            let conj: Vec<Complex64> = z.iter().map(|v| v.conj()).collect();
            let cc = theta_char(&chr, &conj, &pm, &cfg).unwrap();
            assert!((cc - a.conj()).norm() <= tol10 * a.norm().max(1.0), "reality");
            // positivity for delta' = 0
            let zr: Vec<Complex64> = (0..g).map(|_| c(rng.range(-3.0, 3.0), 0.0)).collect();
            let chr0 = ThetaChar::new(vec![0; g], (0..g).map(|_| rng.int(0, 1)).collect()).unwrap();
            let v = theta_char(&chr0, &zr, &pm, &cfg).unwrap();
            assert!(v.re > 0.0, "positivity");
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    assert!(dt < 10.0, "criterion 1 runtime {dt:.1}s exceeds 10s");
    println!("criterion 01 PASS: theta oracle and identity battery (genus 1, 2) in {dt:.1}s");
}

#[test]
fn criterion_02_kasteleyn_condition() {
    let t0 = std::time::Instant::now();
    let files = [
        ("square", instances::square().unwrap()),
        ("hexagonal", instances::hexagonal().unwrap()),
        ("square-octagon", instances::square_octagon_genus1().unwrap()),
        ("square-octagon genus-2", instances::square_octagon_genus2().unwrap()),
    ];
    for (name, file) in files {
        let (model, _) = file.build().unwrap();
        let rep = model.check_kasteleyn_condition(1e-8).unwrap();
        assert!(rep.pass, "{name}: {:?}", rep.faces);
    }
    let dt = t0.elapsed().as_secs_f64();
    assert!(dt < 30.0, "criterion 2 runtime {dt:.1}s exceeds 30s");
    println!("criterion 02 PASS: Kasteleyn condition on all packaged instances in {dt:.1}s");
}

#[test]
fn criterion_03_fay_residuals() {
    let model = skew_model();
    let b = &model.backend;
    let mut rng = Rng(43);
    let mut samples = Vec::new();
    while samples.len() < 200 {
        let p = [
            b.interior_point(rng.f64(), rng.range(0.05, 0.6)).unwrap(),
            b.interior_point(rng.f64(), rng.range(0.05, 0.6)).unwrap(),
            b.interior_point(rng.f64(), rng.range(0.05, 0.6)).unwrap(),
            b.interior_point(rng.f64(), rng.range(0.05, 0.6)).unwrap(),
        ];
        samples.push(p);
    }
    let (fay1, fock1) = model.check_fay(&samples, &model.t_lift.clone()).unwrap();
    assert!(fay1 < 1e-9, "genus-1 Fay residual {fay1:.3e}");
    assert!(fock1 < 1e-9, "genus-1 Fock form residual {fock1:.3e}");

    let model2 = genus2_model();
    let b2 = &model2.backend;
    let sing = b2.a0_singular_params();
    let clear = |mut s: f64| -> f64 {
        s = s.rem_euclid(1.0);
        for _ in 0..8 {
            if sing.iter().all(|&p| {
                let d = (s - p).rem_euclid(1.0);
                d.min(1.0 - d) > 0.04
            }) {
                break;
            }
            s = (s + 0.06).rem_euclid(1.0);
        }
        s
    };
    let mut samples2 = Vec::new();
    while samples2.len() < 200 {
        let p = [
            b2.abel_jacobi(OvalPoint::new(1, rng.f64())).unwrap(),
            b2.abel_jacobi(OvalPoint::new(2, rng.f64())).unwrap(),
            b2.interior_point(clear(rng.f64()), rng.range(0.05, 0.3)).unwrap(),
            b2.interior_point(clear(rng.f64()), rng.range(0.05, 0.3)).unwrap(),
        ];
        samples2.push(p);
    }
    let (fay2, fock2) = model2.check_fay(&samples2, &model2.t_lift.clone()).unwrap();
    assert!(fay2 < 1e-7, "genus-2 Fay residual {fay2:.3e}");
    assert!(fock2 < 1e-7, "genus-2 Fock form residual {fock2:.3e}");
    println!(
        "criterion 03 PASS: Fay residuals genus-1 {fay1:.1e}/{fock1:.1e}, genus-2 {fay2:.1e}/{fock2:.1e}"
    );
}

#[test]
fn criterion_04_kernel_and_inverses() {
    let t0 = std::time::Instant::now();
    let model = skew_model();
    assert_eq!(model.graph.n_whites() + model.graph.n_blacks(), 4, "4-vertex fundamental domain");
    // kernel identity at assorted points
    let mut rng = Rng(47);
    use fock_dimers_core::kasteleyn::QuadNode;
    for _ in 0..10 {
        let u = model.backend.interior_point(rng.f64(), rng.range(0.1, 0.5)).unwrap();
        let x = QuadNode::Face(rng.int(0, 3) as usize, (0, 0));
        for w in 0..model.graph.n_whites() {
            let mut sum = c(0.0, 0.0);
            let mut scale: f64 = 0.0;
            for (e, edge) in model.graph.edges.iter().enumerate() {
                if edge.w != w {
                    continue;
                }
                let g = model.kernel_g(QuadNode::Black(edge.b, edge.offset), x, &u).unwrap();
                let term = model.entry(e) * g;
                sum += term;
                scale = scale.max(term.norm());
            }
            assert!(sum.norm() < 1e-9 * scale.max(1e-30), "kernel identity: {sum}");
        }
    }
    // Fourier inverse: || K A - Id ||_inf < 1e-8 at order 64
    let bg = gaseous_field(&model, 1).unwrap();
    let nw = model.graph.n_whites();
    let mut worst: f64 = 0.0;
    for w1 in 0..nw {
        for w2 in 0..nw {
            let mut sum = c(0.0, 0.0);
            for (e, edge) in model.graph.edges.iter().enumerate() {
                if edge.w != w1 {
                    continue;
                }
                let a = inverse_fourier(&model, bg, edge.b, edge.offset, w2, 64).unwrap();
                sum += model.entry(e) * a;
            }
            let expect = if w1 == w2 { 1.0 } else { 0.0 };
            worst = worst.max((sum - c(expect, 0.0)).norm());
        }
    }
    assert!(worst < 1e-8, "||K A - Id|| = {worst:.3e}");
    // contour route equals Fourier route on the three phases
    let p = model.char_poly().unwrap();
    let g1 = gap_mid(&model);
    let u_solid = PhasePoint::from_oval(&model, 0, g1).unwrap();
    let u_gas = PhasePoint::from_oval(&model, 1, 0.37).unwrap();
    let u_liq = PhasePoint::from_interior(&model, g1, 0.3).unwrap();
    let bf = solid_field(&model, &u_solid, 3.0).unwrap();
    let bl = field_of_point(&model, &u_liq.point).unwrap();
    let mut worst_cf: f64 = 0.0;
    for (e, edge) in model.graph.edges.iter().enumerate() {
        let cs = inverse_contour(&model, &u_solid, e).unwrap();
        let fs = inverse_fourier(&model, bf, edge.b, edge.offset, edge.w, 96).unwrap();
        worst_cf = worst_cf.max((cs.value - fs).norm());
        let cg = inverse_contour(&model, &u_gas, e).unwrap();
        let fg = inverse_fourier_residue(&model, &p, bg, edge.b, edge.offset, edge.w).unwrap();
        worst_cf = worst_cf.max((cg.value - fg).norm());
        let cl = inverse_contour(&model, &u_liq, e).unwrap();
        let fl = inverse_fourier_residue(&model, &p, bl, edge.b, edge.offset, edge.w).unwrap();
        worst_cf = worst_cf.max((cl.value - fl).norm());
    }
    assert!(worst_cf < 1e-6, "contour vs Fourier deviation {worst_cf:.3e}");
    let dt = t0.elapsed().as_secs_f64();
    assert!(dt < 120.0, "criterion 4 runtime {dt:.1}s exceeds 2min");
    println!(
        "criterion 04 PASS: kernel, ||K A - Id|| = {worst:.1e}, contour vs Fourier {worst_cf:.1e} in {dt:.1}s"
    );
}

#[test]
fn criterion_05_spectral_parametrization() {
    for (name, model) in [("genus-1", skew_model()), ("genus-2", genus2_model())] {
        let p = model.char_poly().unwrap();
        // Newton polygons coincide up to translation, exactly
        let np = p.newton_polygon();
        let ng = model.graph.newton_polygon().unwrap();
        assert!(polygons_equal_up_to_translation(&np, &ng), "{name}: {np:?} vs {ng:?}");
        // 50 sampled points on the curve
        let mut rng = Rng(53);
        let sing = model.backend.a0_singular_params();
        let mut count = 0;
        let mut worst: f64 = 0.0;
        while count < 50 {
            let g = model.genus();
            let choice = rng.int(0, g as i64);
            let u = if choice == 0 {
                let s = rng.f64();
                if model.angles.s.iter().any(|&a| {
                    let d = (a - s).rem_euclid(1.0);
                    d.min(1.0 - d) < 0.02
                }) || sing.iter().any(|&p0| {
                    let d = (p0 - s).rem_euclid(1.0);
                    d.min(1.0 - d) < 0.03
                }) {
                    continue;
                }
                model.backend.abel_jacobi(OvalPoint::new(0, s)).unwrap()
            } else {
                model.backend.abel_jacobi(OvalPoint::new(choice as usize, rng.f64())).unwrap()
            };
            let (z, w) = match model.spectral_point(&u) {
                Ok(v) => v,
                Err(_) => continue,
            };
            let resid = p.eval(z, w).norm() / p.eval_scale(z, w);
            worst = worst.max(resid);
            count += 1;
        }
        assert!(worst < 1e-7, "{name}: |P(z(u),w(u))| residual {worst:.3e}");
        println!("criterion 05 PASS ({name}): spectral residual {worst:.1e}, N(P) = N(G)");
    }
}

#[test]
fn criterion_06_oracle_equivalence() {
    let t0 = std::time::Instant::now();
    let model = skew_model();
    let fields = [MagneticField { bx: 0.0, by: 0.0 }, MagneticField { bx: 0.17, by: -0.09 }];
    for n in [1usize, 2] {
        for b in fields {
            let z_det = torus_partition_function(&model, n, b).unwrap();
            let (z_brute, freq_brute) = brute_force_torus(&model, n, b);
            assert!(
                (z_det - z_brute).abs() <= 1e-6 * z_brute,
                "Z on {n}x{n} at ({},{}) : {z_det} vs {z_brute}",
                b.bx,
                b.by
            );
            for e in 0..model.graph.n_edges() {
                let f_det = torus_edge_frequency(&model, n, b, e).unwrap();
                assert!(
                    (f_det - freq_brute[e]).abs() < 1e-6,
                    "frequency {n}x{n} edge {e}: {f_det} vs {}",
                    freq_brute[e]
                );
            }
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    assert!(dt < 60.0, "criterion 6 runtime {dt:.1}s exceeds 1min");
    println!("criterion 06 PASS: torus partition function and edge frequencies match enumeration in {dt:.1}s");
}

/// exhaustive perfect-matching sum with magnetic weights on the n-torus,
/// independent of the determinant machinery
fn brute_force_torus(model: &FockModel, n: usize, b: MagneticField) -> (f64, Vec<f64>) {
    let cover = model.graph.sublattice_cover((n as i64, 0), (0, n as i64)).unwrap();
    let s = fock_dimers_core::angles::transfer_angles_to_cover(&model.graph, &model.angles, &cover)
        .unwrap();
    let angles = fock_dimers_core::angles::AngleMap::from_parameters(&model.backend, &s).unwrap();
    let cm = FockModel::new(cover, model.backend.clone(), angles, model.t_lift.clone()).unwrap();
    let g = &cm.graph;
    let z0 = (n as f64 * b.by).exp();
    let w0 = (-(n as f64) * b.bx).exp();
    let mut by_white: Vec<Vec<usize>> = vec![Vec::new(); g.n_whites()];
    for (e, edge) in g.edges.iter().enumerate() {
        by_white[edge.w].push(e);
    }
    let mut z_total = 0.0;
    let mut freq = vec![0.0; g.n_edges()];
    let mut used = vec![false; g.n_blacks()];
    let mut chosen: Vec<usize> = Vec::new();
    fn rec(
        w: usize,
        by_white: &[Vec<usize>],
        g: &fock_dimers_core::graph::PeriodicBipartiteGraph,
        cm: &FockModel,
        used: &mut [bool],
        chosen: &mut Vec<usize>,
        z0: f64,
        w0: f64,
        z_total: &mut f64,
        freq: &mut [f64],
    ) {
        if w == by_white.len() {
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
            let bb = g.edges[e].b;
            if used[bb] {
                continue;
            }
            used[bb] = true;
            chosen.push(e);
            rec(w + 1, by_white, g, cm, used, chosen, z0, w0, z_total, freq);
            chosen.pop();
            used[bb] = false;
        }
    }
    rec(0, &by_white, g, &cm, &mut used, &mut chosen, z0, w0, &mut z_total, &mut freq);
    // frequencies of the fundamental-domain edges (origin copies)
    let mut out = vec![0.0; model.graph.n_edges()];
    for (e, f) in out.iter_mut().enumerate() {
        *f = freq[e] / z_total;
    }
    (z_total, out)
}

#[test]
fn criterion_07_gibbs_structure() {
    let model = skew_model();
    let g1 = gap_mid(&model);
    let u_solid = PhasePoint::from_oval(&model, 0, g1).unwrap();
    let u_gas = PhasePoint::from_oval(&model, 1, 0.29).unwrap();
    let u_liq = PhasePoint::from_interior(&model, g1, 0.33).unwrap();
    // per-white sums are 1 in every phase
    for (name, u) in [("solid", &u_solid), ("gaseous", &u_gas), ("liquid", &u_liq)] {
        for w in 0..model.graph.n_whites() {
            let mut sum = 0.0;
            for (e, edge) in model.graph.edges.iter().enumerate() {
                if edge.w == w {
                    sum += edge_probability_local(&model, u, e).unwrap();
                }
            }
            assert!((sum - 1.0).abs() < 1e-8, "{name}: sum at white {w} = {sum}");
        }
    }
    // gaseous probabilities constant along the oval
    let u_gas2 = PhasePoint::from_oval(&model, 1, 0.83).unwrap();
    for e in 0..model.graph.n_edges() {
        let p1 = edge_probability_local(&model, &u_gas, e).unwrap();
        let p2 = edge_probability_local(&model, &u_gas2, e).unwrap();
        assert!((p1 - p2).abs() < 1e-8, "gaseous dependence on the oval position");
    }
    // solid: exact 0/1 and the slope formula over all gaps
    let mut sorted = model.angles.s.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let r = sorted.len();
    for k in 0..r {
        let hi = if k + 1 < r { sorted[k + 1] } else { sorted[0] + 1.0 };
        let gap = 0.5 * (sorted[k] + hi);
        let u0 = PhasePoint::from_oval(&model, 0, gap).unwrap();
        for e in 0..model.graph.n_edges() {
            let p = edge_probability_local(&model, &u0, e).unwrap();
            assert!(p == 0.0 || p == 1.0, "solid probability {p}");
        }
        let (s, t) = slope(&model, &u0, &u_solid).unwrap();
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
        assert!(
            (s - expect.0).abs() < 1e-12 && (t - expect.1).abs() < 1e-12,
            "solid slope at gap {k}: ({s},{t}) vs {expect:?}"
        );
        // the reachable solid points P1 + (t, -s) are boundary lattice points
        let p1 = gap_polygon_point(&model, g1);
        let pt = (p1.0 + t.round() as i64, p1.1 - s.round() as i64);
        let poly = model.graph.newton_polygon().unwrap();
        assert!(poly.contains(&pt) || on_boundary(&poly, pt), "solid point {pt:?} not on the boundary");
    }
    println!("criterion 07 PASS: vertex sums, gaseous constancy, solid 0/1 and slopes");
}

fn on_boundary(poly: &[(i64, i64)], p: (i64, i64)) -> bool {
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        if cross == 0
            && p.0 >= a.0.min(b.0)
            && p.0 <= a.0.max(b.0)
            && p.1 >= a.1.min(b.1)
            && p.1 <= a.1.max(b.1)
        {
            return true;
        }
    }
    false
}

#[test]
fn criterion_08_gaseous_slopes_genus2() {
    let model = genus2_model();
    assert_eq!(model.phi_points.len(), 2);
    assert_ne!(model.phi_points[0], model.phi_points[1], "interior points distinct");
    let g1 = {
        let mut sorted = model.angles.s.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // widest gap midpoint for the frozen reference
        let r = sorted.len();
        let mut best = (0.0, 0.0);
        for k in 0..r {
            let hi = if k + 1 < r { sorted[k + 1] } else { sorted[0] + 1.0 };
            if hi - sorted[k] > best.1 {
                best = (0.5 * (sorted[k] + hi), hi - sorted[k]);
            }
        }
        best.0
    };
    let u1 = PhasePoint::from_oval(&model, 0, g1).unwrap();
    let p1 = gap_polygon_point(&model, g1);
    let phi = phi_map(&model.graph, &model.angles).unwrap();
    for k in 1..=2usize {
        let u0 = PhasePoint::from_oval(&model, k, 0.41).unwrap();
        let (s, t) = slope(&model, &u0, &u1).unwrap();
        let got = (p1.0 as f64 + t, p1.1 as f64 - s);
        let expect = phi[k - 1];
        assert!(
            (got.0 - expect.0).abs() < 1e-6 && (got.1 - expect.1).abs() < 1e-6,
            "gaseous slope on oval {k}: P1 + (t,-s) = {got:?} vs phi_{k} = {expect:?}"
        );
    }
    println!(
        "criterion 08 PASS: genus-2 gaseous slopes hit the distinct interior points {:?}",
        model.phi_points
    );
}

#[test]
fn criterion_09_thermodynamics() {
    let model = skew_model();
    let p = model.char_poly().unwrap();
    let g1 = gap_mid(&model);
    let u1 = PhasePoint::from_oval(&model, 0, g1).unwrap();
    let mut fs = Vec::new();
    let mut rs = Vec::new();
    let mut bxs = Vec::new();
    let mut bys = Vec::new();
    for k in 1..=10 {
        let u0 = PhasePoint::from_interior(&model, g1, 0.055 * k as f64).unwrap();
        let th = thermodynamics(&model, &u0, &u1).unwrap();
        let legendre = th.slope.0 * th.b_field.bx + th.slope.1 * th.b_field.by - th.tension;
        assert!(
            (th.free_energy - legendre).abs() < 1e-5,
            "Legendre at point {k}: F = {} vs {legendre}",
            th.free_energy
        );
        fs.push(th.free_energy);
        rs.push(ronkin(&p, th.b_field, 384).unwrap());
        bxs.push(th.b_field.bx);
        bys.push(th.b_field.by);
    }
    // best affine fit of F - R over (Bx, By)
    let n = fs.len();
    let mut a = DMatrix::from_element(n, 3, 0.0);
    let mut y = DVector::from_element(n, 0.0);
    for i in 0..n {
        a[(i, 0)] = bxs[i];
        a[(i, 1)] = bys[i];
        a[(i, 2)] = 1.0;
        y[i] = fs[i] - rs[i];
    }
    let ata = a.transpose() * &a;
    let aty = a.transpose() * &y;
    let sol = ata.lu().solve(&aty).unwrap();
    let resid = (&a * sol - &y).amax();
    assert!(resid < 1e-4, "Ronkin vs free energy affine residual {resid:.3e}");
    // Ronkin affine deep in a solid component
    let bs = solid_field(&model, &u1, 4.0).unwrap();
    for dir in [(0.05, 0.0), (0.0, 0.05), (0.05, 0.05)] {
        let r0 = ronkin(&p, bs, 128).unwrap();
        let rp = ronkin(&p, MagneticField { bx: bs.bx + dir.0, by: bs.by + dir.1 }, 128).unwrap();
        let rm = ronkin(&p, MagneticField { bx: bs.bx - dir.0, by: bs.by - dir.1 }, 128).unwrap();
        assert!((rp + rm - 2.0 * r0).abs() < 1e-6, "solid second difference");
    }
    println!("criterion 09 PASS: Legendre identity, Ronkin affine fit residual {resid:.1e}");
}

#[test]
fn criterion_10_moves() {
    let model = skew_model();
    // spider on a quadrilateral face with distinct boundary vertices
    let mut face = None;
    for (fi, f) in model.graph.faces().iter().enumerate() {
        if f.degree() == 4 {
            let mut ws: Vec<usize> = f.darts.iter().map(|d| model.graph.edges[d.edge].w).collect();
            let mut bs: Vec<usize> = f.darts.iter().map(|d| model.graph.edges[d.edge].b).collect();
            ws.sort();
            ws.dedup();
            bs.sort();
            bs.dedup();
            if ws.len() == 2 && bs.len() == 2 {
                face = Some(fi);
                break;
            }
        }
    }
    let spider = MoveSpec::Spider { face: face.expect("no quadrilateral face") };
    let report = check_move_invariance(&model, &spider).unwrap();
    assert!(report.face_weight_dev < 1e-10, "face weights: {report:?}");
    assert!(report.char_poly_rel_dev < 1e-7, "char poly: {report:?}");
    assert!(report.distant_edge_prob_dev < 1e-6, "distant edges: {report:?}");
    assert!(report.pass, "{report:?}");

    // 2-valent expansion and contraction
    let name = model.graph.white_names[0].clone();
    let expand = MoveSpec::Expand2Valent {
        vertex: name,
        split_start: 0,
        split_len: 2,
        new_vertex: "bz".into(),
    };
    let report2 = check_move_invariance(&model, &expand).unwrap();
    assert!(report2.pass, "{report2:?}");
    let expanded = apply_move(&model, &expand).unwrap();
    let sum = two_valent_identity(&expanded.model, "bz").unwrap();
    assert_eq!(sum, c(0.0, 0.0), "2-valent identity exact");
    println!(
        "criterion 10 PASS: spider and 2-valent moves preserve face weights, char poly (dev {:.1e}) and probabilities (dev {:.1e})",
        report.char_poly_rel_dev, report.distant_edge_prob_dev
    );
}
