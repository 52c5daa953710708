//! Model files: graph + backend + angles + t + numeric configuration, with
//! a calibration cache keyed by a content hash.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::angles::AngleMap;
use crate::error::{Error, Result};
use crate::graph::PeriodicBipartiteGraph;
use crate::kasteleyn::FockModel;
use crate::surface::{BackendSpec, MCurveBackend, SurfaceConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NumericConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_order")]
    pub order: usize,
}

fn default_tol() -> f64 {
    1e-13
}

fn default_order() -> usize {
    64
}

impl Default for NumericConfig {
    fn default() -> Self {
        Self { tol: default_tol(), order: default_order() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AngleEntry {
    Parameter { s: f64 },
    Lift { lift: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub graph: serde_json::Value,
    pub backend: BackendSpec,
    /// per-track angle assignment keyed by "t{index}"
    pub angles: BTreeMap<String, AngleEntry>,
    pub t: Vec<f64>,
    #[serde(default)]
    pub config: NumericConfig,
    /// cached calibration data (Riemann constant), keyed by a content hash
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Calibration {
    pub model_hash: String,
    pub delta: Vec<[f64; 2]>,
}

/// deterministic content hash (FNV-1a over the canonical serialization)
pub fn content_hash(file: &ModelFile) -> String {
    let mut probe = file.clone();
    probe.calibration = None;
    let bytes = serde_json::to_vec(&probe).unwrap_or_default();
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

impl ModelFile {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Build the Fock model; recomputes the calibration cache when stale.
    pub fn build(&self) -> Result<(FockModel, Calibration)> {
        self.build_inner(true)
    }

    /// Build without rejecting invalid angle maps (diagnostics only).
    pub fn build_unchecked(&self) -> Result<(FockModel, Calibration)> {
        self.build_inner(false)
    }

    fn build_inner(&self, validate: bool) -> Result<(FockModel, Calibration)> {
        let graph = PeriodicBipartiteGraph::from_json(&self.graph)?;
        let mut scfg = SurfaceConfig::default();
        scfg.theta.tol = self.config.tol;
        let backend = MCurveBackend::from_spec(&self.backend, scfg)?;
        let g = backend.genus();
        // angles may be given as parameters or as explicit lifts
        let n_tracks = graph.tracks().len();
        let mut s = vec![f64::NAN; n_tracks];
        let mut lifts: Vec<Option<DVector<f64>>> = vec![None; n_tracks];
        for (key, entry) in &self.angles {
            let idx: usize = key
                .strip_prefix('t')
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::InvalidInput(format!("bad track key '{key}'")))?;
            if idx >= n_tracks {
                return Err(Error::InvalidInput(format!(
                    "track '{key}' out of range (graph has {n_tracks} tracks)"
                )));
            }
            match entry {
                AngleEntry::Parameter { s: v } => s[idx] = *v,
                AngleEntry::Lift { lift } => {
                    if lift.len() != g {
                        return Err(Error::InvalidInput("lift has wrong dimension".into()));
                    }
                    lifts[idx] = Some(DVector::from_column_slice(lift));
                    s[idx] = lift[0].rem_euclid(1.0);
                }
            }
        }
        if s.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidInput("every track needs an angle".into()));
        }
        let angles = if lifts.iter().all(|l| l.is_some()) {
            AngleMap::from_lifts(lifts.into_iter().map(|l| l.unwrap()).collect())
        } else {
            AngleMap::from_parameters(&backend, &s)?
        };
        let t = DVector::from_column_slice(&self.t);
        let model = if validate {
            FockModel::new(graph, backend, angles, t)?
        } else {
            FockModel::new_unvalidated(graph, backend, angles, t)?
        };
        // calibration cache: the Riemann constant
        let hash = content_hash(self);
        let calibration = match &self.calibration {
            Some(c) if c.model_hash == hash => c.clone(),
            _ => {
                let delta = model.backend.riemann_constant()?;
                Calibration {
                    model_hash: hash,
                    delta: delta.iter().map(|v| [v.re, v.im]).collect(),
                }
            }
        };
        Ok((model, calibration))
    }
}

/// Assemble a model file from parts.
pub fn model_file_from_parts(
    graph: &PeriodicBipartiteGraph,
    backend: &BackendSpec,
    angles: &AngleMap,
    t: &[f64],
) -> ModelFile {
    let angle_map: BTreeMap<String, AngleEntry> = angles
        .s
        .iter()
        .enumerate()
        .map(|(i, &s)| (format!("t{i}"), AngleEntry::Parameter { s }))
        .collect();
    ModelFile {
        graph: graph.to_json(),
        backend: backend.clone(),
        angles: angle_map,
        t: t.to_vec(),
        config: NumericConfig::default(),
        calibration: None,
    }
}

/// The packaged instances: standard lattices with angle maps chosen so the
/// operator is periodic where the Newton polygon allows it.
pub mod instances {
    use super::*;
    use crate::angles::{solve_periodic_angles_auto, AngleMap};
    use crate::graph;

    /// plain square lattice (genus-1 torus backend, non-periodic operator:
    /// the unit-square Newton polygon has no interior point)
    pub fn square() -> Result<ModelFile> {
        let g = graph::square_lattice();
        let backend_spec = BackendSpec::Genus1 { tau_im: 1.3 };
        let backend = MCurveBackend::from_spec(&backend_spec, SurfaceConfig::default())?;
        let mut s = vec![0.0; g.tracks().len()];
        for (i, t) in g.tracks().iter().enumerate() {
            let ang = (t.homology.1 as f64)
                .atan2(t.homology.0 as f64)
                .rem_euclid(std::f64::consts::TAU);
            s[i] = (ang / std::f64::consts::TAU + 0.05).rem_euclid(1.0);
        }
        let am = AngleMap::from_parameters(&backend, &s)?;
        Ok(model_file_from_parts(&g, &backend_spec, &am, &[0.11]))
    }

    /// hexagonal lattice (genus-1 torus backend, non-periodic operator)
    pub fn hexagonal() -> Result<ModelFile> {
        let g = graph::hexagonal_lattice();
        let backend_spec = BackendSpec::Genus1 { tau_im: 1.1 };
        let backend = MCurveBackend::from_spec(&backend_spec, SurfaceConfig::default())?;
        let mut s = vec![0.0; g.tracks().len()];
        for (i, t) in g.tracks().iter().enumerate() {
            let ang = (t.homology.1 as f64)
                .atan2(t.homology.0 as f64)
                .rem_euclid(std::f64::consts::TAU);
            s[i] = (ang / std::f64::consts::TAU + 0.03).rem_euclid(1.0);
        }
        let am = AngleMap::from_parameters(&backend, &s)?;
        Ok(model_file_from_parts(&g, &backend_spec, &am, &[0.23]))
    }

    /// square lattice on the skew two-cell domain: the smallest periodic
    /// genus-1 instance (4 vertices, 8 edges, one interior point)
    pub fn square_skew() -> Result<ModelFile> {
        let g = graph::square_lattice().sublattice_cover((1, 1), (-1, 1))?;
        let backend_spec = BackendSpec::Genus1 { tau_im: 1.3 };
        let backend = MCurveBackend::from_spec(&backend_spec, SurfaceConfig::default())?;
        let am = solve_periodic_angles_auto(&g, &backend)?;
        Ok(model_file_from_parts(&g, &backend_spec, &am, &[0.19]))
    }

    /// square-octagon lattice (4-8-8), single fundamental domain with a
    /// genus-1 torus backend and a periodic angle map
    pub fn square_octagon_genus1() -> Result<ModelFile> {
        let g = graph::square_octagon();
        let backend_spec = BackendSpec::Genus1 { tau_im: 1.2 };
        let backend = MCurveBackend::from_spec(&backend_spec, SurfaceConfig::default())?;
        let am = solve_periodic_angles_auto(&g, &backend)?;
        Ok(model_file_from_parts(&g, &backend_spec, &am, &[0.17]))
    }

    /// doubled square-octagon lattice over a genus-2 hyperelliptic curve,
    /// with the angle map solved so the operator is periodic (two distinct
    /// interior integer points)
    pub fn square_octagon_genus2() -> Result<ModelFile> {
        let g = graph::square_octagon().sublattice_cover((2, 0), (0, 1))?;
        let backend_spec =
            BackendSpec::Hyperelliptic { branch_points: vec![-3.0, -2.0, -1.0, 1.0, 2.0, 3.0] };
        let backend = MCurveBackend::from_spec(&backend_spec, SurfaceConfig::default())?;
        let am = solve_periodic_angles_auto(&g, &backend)?;
        Ok(model_file_from_parts(&g, &backend_spec, &am, &[0.13, 0.21]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_file_roundtrip_and_build() {
        let file = instances::square_skew().unwrap();
        let s = file.to_json_string().unwrap();
        let parsed = ModelFile::from_json_str(&s).unwrap();
        let (model, cal) = parsed.build().unwrap();
        assert!(model.periodic);
        assert_eq!(cal.delta.len(), 1);
        // calibration reuse: feeding the cache back skips recomputation
        let mut with_cache = parsed.clone();
        with_cache.calibration = Some(cal.clone());
        let (_, cal2) = with_cache.build().unwrap();
        assert_eq!(cal.model_hash, cal2.model_hash);
    }

    #[test]
    fn packaged_instances_build() {
        for file in [
            instances::square().unwrap(),
            instances::hexagonal().unwrap(),
            instances::square_octagon_genus1().unwrap(),
        ] {
            let (model, _) = file.build().unwrap();
            let rep = model.check_kasteleyn_condition(1e-8).unwrap();
            assert!(rep.pass);
        }
    }

    #[test]
    fn genus2_instance_builds_periodic() {
        let file = instances::square_octagon_genus2().unwrap();
        let (model, _) = file.build().unwrap();
        assert!(model.periodic);
        assert_eq!(model.phi_points.len(), 2);
        assert_ne!(model.phi_points[0], model.phi_points[1]);
    }
}
