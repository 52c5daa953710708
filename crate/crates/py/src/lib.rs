//! Python bindings: the `fock_dimers` extension module exposes model files,
//! Kasteleyn data, spectral curves and Gibbs-measure observables.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use fock_dimers_core::error::Error as CoreError;
use fock_dimers_core::gibbs;
use fock_dimers_core::kasteleyn::FockModel;
use fock_dimers_core::model::{instances, ModelFile};
use fock_dimers_core::poly::CharPoly;
use fock_dimers_core::surface::OvalPoint;

fn err(e: CoreError) -> PyErr {
    match e {
        CoreError::InvalidInput(_) | CoreError::Json(_) | CoreError::Io(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn parse_phase(model: &FockModel, phase: &str) -> PyResult<gibbs::PhasePoint> {
    let v: serde_json::Value =
        serde_json::from_str(phase).map_err(|e| PyValueError::new_err(e.to_string()))?;
    if let (Some(oval), Some(s)) =
        (v.get("oval").and_then(|x| x.as_u64()), v.get("s").and_then(|x| x.as_f64()))
    {
        return gibbs::PhasePoint::from_oval(model, oval as usize, s).map_err(err);
    }
    if let Some(int) = v.get("interior") {
        if let (Some(s), Some(d)) = (
            int.get("s_cross").and_then(|x| x.as_f64()),
            int.get("depth").and_then(|x| x.as_f64()),
        ) {
            return gibbs::PhasePoint::from_interior(model, s, d).map_err(err);
        }
    }
    Err(PyValueError::new_err(
        "phase must be {\"oval\":k,\"s\":x} or {\"interior\":{\"s_cross\":x,\"depth\":d}}",
    ))
}

/// A dimer model with Fock weights: graph, M-curve backend, angle map and t.
#[pyclass]
struct Model {
    file: ModelFile,
    model: FockModel,
    poly: std::sync::OnceLock<CharPoly>,
}

impl Model {
    fn char_poly_ref(&self) -> PyResult<&CharPoly> {
        if let Some(p) = self.poly.get() {
            return Ok(p);
        }
        let p = self.model.char_poly().map_err(err)?;
        let _ = self.poly.set(p);
        Ok(self.poly.get().unwrap())
    }
}

#[pymethods]
impl Model {
    /// load a model from a JSON string
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let file = ModelFile::from_json_str(text).map_err(err)?;
        let (model, _) = file.build().map_err(err)?;
        Ok(Model { file, model, poly: std::sync::OnceLock::new() })
    }

    /// load one of the packaged example models: "square", "hexagonal",
    /// "square_skew", "square_octagon", "square_octagon_genus2"
    #[staticmethod]
    fn packaged(name: &str) -> PyResult<Self> {
        let file = match name {
            "square" => instances::square(),
            "hexagonal" => instances::hexagonal(),
            "square_skew" => instances::square_skew(),
            "square_octagon" => instances::square_octagon_genus1(),
            "square_octagon_genus2" => instances::square_octagon_genus2(),
            other => return Err(PyValueError::new_err(format!("unknown instance '{other}'"))),
        }
        .map_err(err)?;
        let (model, _) = file.build().map_err(err)?;
        Ok(Model { file, model, poly: std::sync::OnceLock::new() })
    }

    fn to_json(&self) -> PyResult<String> {
        self.file.to_json_string().map_err(err)
    }

    #[getter]
    fn genus(&self) -> usize {
        self.model.genus()
    }

    #[getter]
    fn n_edges(&self) -> usize {
        self.model.graph.n_edges()
    }

    #[getter]
    fn periodic(&self) -> bool {
        self.model.periodic
    }

    /// train-tracks as (id, h, v, angle) tuples
    fn tracks(&self) -> Vec<(String, i64, i64, f64)> {
        self.model
            .graph
            .tracks()
            .iter()
            .map(|t| (format!("t{}", t.id), t.homology.0, t.homology.1, self.model.angles.s[t.id]))
            .collect()
    }

    /// edges as (white, black, dx, dy) tuples
    fn edges(&self) -> Vec<(String, String, i64, i64)> {
        self.model
            .graph
            .edges
            .iter()
            .map(|e| {
                (
                    self.model.graph.white_names[e.w].clone(),
                    self.model.graph.black_names[e.b].clone(),
                    e.offset.0,
                    e.offset.1,
                )
            })
            .collect()
    }

    /// Kasteleyn entries of the fundamental-domain edges
    fn entries(&self) -> Vec<Complex64> {
        (0..self.model.graph.n_edges()).map(|e| self.model.entry(e)).collect()
    }

    /// worst deviation of the face phases from the Kasteleyn condition
    fn kasteleyn_deviation(&self) -> PyResult<f64> {
        let rep = self.model.check_kasteleyn_condition(1e-8).map_err(err)?;
        Ok(rep.faces.iter().map(|f| f.deviation).fold(0.0, f64::max))
    }

    /// Laurent coefficients of det K(z,w) as {(i, j): complex}
    fn char_poly(&self) -> PyResult<std::collections::HashMap<(i64, i64), Complex64>> {
        let p = self.char_poly_ref()?;
        Ok(p.coeffs.iter().map(|(&k, &v)| (k, v)).collect())
    }

    fn newton_polygon(&self) -> PyResult<Vec<(i64, i64)>> {
        self.model.graph.newton_polygon().map_err(err)
    }

    /// the marked interior lattice points phi(alpha)
    fn phi_points(&self) -> Vec<(i64, i64)> {
        self.model.phi_points.clone()
    }

    /// (z(u), w(u)) for the point of the oval with parameter s
    fn spectral_point(&self, oval: usize, s: f64) -> PyResult<(Complex64, Complex64)> {
        let u = self.model.backend.abel_jacobi(OvalPoint::new(oval, s)).map_err(err)?;
        self.model.spectral_point(&u).map_err(err)
    }

    /// P(z, w)
    fn char_poly_eval(&self, z: Complex64, w: Complex64) -> PyResult<Complex64> {
        Ok(self.char_poly_ref()?.eval(z, w))
    }

    /// single-edge probability under the measure indexed by the phase point
    fn edge_probability(&self, phase: &str, edge: usize) -> PyResult<f64> {
        let u0 = parse_phase(&self.model, phase)?;
        gibbs::edge_probability_local(&self.model, &u0, edge).map_err(err)
    }

    /// slope (s, t) of the measure at `phase` relative to the solid `reference`
    fn slope(&self, phase: &str, reference: &str) -> PyResult<(f64, f64)> {
        let u0 = parse_phase(&self.model, phase)?;
        let u1 = parse_phase(&self.model, reference)?;
        gibbs::slope(&self.model, &u0, &u1).map_err(err)
    }

    /// surface tension, free energy, slope and magnetic field at a phase
    /// point, relative to the solid reference
    fn thermodynamics(&self, phase: &str, reference: &str) -> PyResult<(f64, f64, (f64, f64), (f64, f64))> {
        let u0 = parse_phase(&self.model, phase)?;
        let u1 = parse_phase(&self.model, reference)?;
        let th = gibbs::thermodynamics(&self.model, &u0, &u1).map_err(err)?;
        Ok((th.tension, th.free_energy, th.slope, (th.b_field.bx, th.b_field.by)))
    }

    /// Ronkin function of the characteristic polynomial
    fn ronkin(&self, bx: f64, by: f64, order: usize) -> PyResult<f64> {
        gibbs::ronkin(self.char_poly_ref()?, gibbs::MagneticField { bx, by }, order).map_err(err)
    }

    /// amoeba membership of a magnetic field
    fn amoeba_contains(&self, bx: f64, by: f64) -> PyResult<bool> {
        gibbs::amoeba_sample(self.char_poly_ref()?, gibbs::MagneticField { bx, by }, 128).map_err(err)
    }

    /// partition function of the n x n torus with magnetic weights
    fn torus_partition_function(&self, n: usize, bx: f64, by: f64) -> PyResult<f64> {
        gibbs::torus_partition_function(&self.model, n, gibbs::MagneticField { bx, by }).map_err(err)
    }

    /// the divisor of a white vertex: one (oval, s) point per handle
    fn divisor_of_vertex(&self, white: usize) -> PyResult<Vec<(usize, f64)>> {
        let div = self.model.divisor_of_vertex(white).map_err(err)?;
        Ok(div.iter().map(|p| (p.oval, p.s)).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(genus={}, whites={}, blacks={}, edges={}, periodic={})",
            self.model.genus(),
            self.model.graph.n_whites(),
            self.model.graph.n_blacks(),
            self.model.graph.n_edges(),
            self.model.periodic
        )
    }
}

/// Riemann theta function of a purely imaginary period matrix given by its
/// imaginary part (row-major), evaluated at a complex vector.
#[pyfunction]
fn theta(z: Vec<Complex64>, omega_im: Vec<Vec<f64>>) -> PyResult<Complex64> {
    let g = z.len();
    if omega_im.len() != g || omega_im.iter().any(|r| r.len() != g) {
        return Err(PyValueError::new_err("omega_im must be g x g"));
    }
    let m = nalgebra::DMatrix::from_fn(g, g, |i, j| Complex64::new(0.0, omega_im[i][j]));
    let pm = fock_dimers_core::theta::PeriodMatrix::new(m).map_err(err)?;
    fock_dimers_core::theta::theta(&z, &pm, &fock_dimers_core::theta::ThetaConfig::default())
        .map_err(err)
}

#[pymodule]
fn fock_dimers(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(theta, m)?)?;
    Ok(())
}
