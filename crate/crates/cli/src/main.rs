//! Command-line front end: load model files, run structural checks, compute
//! characteristic polynomials, probabilities, scans and local moves.
//!
//! Exit codes: 0 ok, 1 check failure, 2 input error, 3 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use fock_dimers_core::angles::{is_operator_periodic, phi_map, validate_angle_map};
use fock_dimers_core::error::Error as CoreError;
use fock_dimers_core::gibbs::{
    amoeba_sample, edge_probability_local, ronkin, slope, MagneticField, PhasePoint,
};
use fock_dimers_core::kasteleyn::FockModel;
use fock_dimers_core::model::{content_hash, instances, ModelFile};
use fock_dimers_core::moves::{check_move_invariance, apply_move, MoveSpec};

#[derive(Parser)]
#[command(name = "fock-dimers", about = "dimer models with Fock weights on minimal graphs over M-curves")]
struct Cli {
    /// numeric tolerance for checks
    #[arg(long, global = true, default_value_t = 1e-8)]
    tol: f64,
    /// quadrature order for torus integrals
    #[arg(long, global = true, default_value_t = 64)]
    order: usize,
    /// seed for sample selection in checks
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// output path (defaults to stdout)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// run structural and numerical checks on a model file
    Check { model: PathBuf },
    /// compute the characteristic polynomial of a periodic model
    Charpoly { model: PathBuf },
    /// edge probabilities under a Gibbs measure
    Prob {
        model: PathBuf,
        /// phase point: {"oval":k,"s":x} or {"interior":{"s_cross":x,"depth":d}}
        #[arg(long)]
        phase: String,
        /// edge indices (JSON array) or "all"
        #[arg(long, default_value = "all")]
        edges: String,
    },
    /// grid scans: amoeba membership, Ronkin function, or oval slopes
    Scan {
        model: PathBuf,
        #[arg(long, value_parser = ["amoeba", "ronkin", "slope"])]
        what: String,
        /// grid spec "nx,ny,bx0,bx1,by0,by1" (ignored for slope scans)
        #[arg(long, default_value = "9,9,-3,3,-3,3")]
        grid: String,
    },
    /// apply a script of local moves and write the resulting model
    Move {
        model: PathBuf,
        /// JSON file with a list of move specifications
        script: PathBuf,
    },
    /// write the packaged example models into a directory
    Package {
        #[arg(long, default_value = "models")]
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(threads) = std::env::var("FOCK_DIMERS_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e.downcast_ref::<CoreError>() {
                Some(CoreError::InvalidInput(_))
                | Some(CoreError::Json(_))
                | Some(CoreError::Io(_))
                | Some(CoreError::EmbeddingInvalid(_))
                | Some(CoreError::PeriodicityRequired) => 2,
                Some(_) => 3,
                None => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn load(path: &PathBuf) -> anyhow::Result<(ModelFile, FockModel)> {
    let text = std::fs::read_to_string(path).map_err(CoreError::Io)?;
    let file = ModelFile::from_json_str(&text)?;
    let (model, _) = file.build()?;
    Ok((file, model))
}

fn emit(out: &Option<PathBuf>, content: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, content).map_err(|e| CoreError::Io(e).into()),
        None => {
            println!("{content}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match &cli.command {
        Command::Check { model } => cmd_check(&cli, model),
        Command::Charpoly { model } => cmd_charpoly(&cli, model),
        Command::Prob { model, phase, edges } => cmd_prob(&cli, model, phase, edges),
        Command::Scan { model, what, grid } => cmd_scan(&cli, model, what, grid),
        Command::Move { model, script } => cmd_move(&cli, model, script),
        Command::Package { dir } => cmd_package(dir),
    }
}

fn cmd_check(cli: &Cli, path: &PathBuf) -> anyhow::Result<ExitCode> {
    // build without angle validation so a broken model still produces a
    // face-by-face report instead of a load error
    let text = std::fs::read_to_string(path).map_err(CoreError::Io)?;
    let file = ModelFile::from_json_str(&text)?;
    let (model, _) = file.build_unchecked()?;
    let minimal = model.graph.check_minimal();
    let (angles_ok, angle_diag) = validate_angle_map(&model.graph, &model.angles);
    let kast = model.check_kasteleyn_condition(cli.tol)?;
    let (periodic, phi_points, phi_dist) = is_operator_periodic(&model.graph, &model.angles, 1e-8)?;
    let phi = phi_map(&model.graph, &model.angles)?;
    // Fay residuals on seeded backend samples
    let mut samples = Vec::new();
    let mut state = cli.seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
    let mut rand01 = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let sing = model.backend.a0_singular_params();
    while samples.len() < 40 {
        let mut pts = Vec::new();
        for _ in 0..4 {
            let mut s = rand01();
            for _ in 0..8 {
                if sing.iter().all(|&p| {
                    let d = (s - p).rem_euclid(1.0);
                    d.min(1.0 - d) > 0.04
                }) {
                    break;
                }
                s = (s + 0.06).rem_euclid(1.0);
            }
            pts.push(model.backend.interior_point(s, 0.05 + 0.3 * rand01())?);
        }
        samples.push([pts[0].clone(), pts[1].clone(), pts[2].clone(), pts[3].clone()]);
    }
    let (fay, fock) = model.check_fay(&samples, &model.t_lift.clone())?;
    let fay_tol = if model.genus() >= 2 { 1e-7 } else { 1e-9 };
    let pass = minimal.minimal && angles_ok && kast.pass && fay < fay_tol && fock < fay_tol;
    let report = json!({
        "model_hash": content_hash(&file),
        "seed": cli.seed,
        "genus": model.genus(),
        "tracks": model.graph.tracks().iter().map(|t| json!({
            "id": format!("t{}", t.id),
            "homology": [t.homology.0, t.homology.1],
        })).collect::<Vec<_>>(),
        "checks": {
            "minimal": { "pass": minimal.minimal, "bad_pairs": format!("{:?}", minimal.bad_pairs) },
            "angle_map": { "pass": angles_ok, "diagnostics": format!("{angle_diag:?}") },
            "kasteleyn_condition": {
                "pass": kast.pass,
                "faces": kast.faces.iter().map(|f| json!({
                    "face": f.face, "degree": f.degree, "deviation": f.deviation,
                })).collect::<Vec<_>>(),
            },
            "periodicity": {
                "periodic": periodic,
                "phi": phi.iter().map(|p| [p.0, p.1]).collect::<Vec<_>>(),
                "integer_points": phi_points.iter().map(|p| [p.0, p.1]).collect::<Vec<_>>(),
                "distance": phi_dist,
            },
            "fay": { "pass": fay < fay_tol && fock < fay_tol, "residual": fay, "fock_residual": fock },
        },
        "pass": pass,
    });
    emit(&cli.out, &serde_json::to_string_pretty(&report)?)?;
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_charpoly(cli: &Cli, path: &PathBuf) -> anyhow::Result<ExitCode> {
    let (_, model) = load(path)?;
    let p = model.char_poly()?;
    let out = json!({
        "coefficients": p.to_json(),
        "newton_polygon": p.newton_polygon().iter().map(|v| [v.0, v.1]).collect::<Vec<_>>(),
        "geometric_newton_polygon": model.graph.newton_polygon()?.iter().map(|v| [v.0, v.1]).collect::<Vec<_>>(),
    });
    emit(&cli.out, &serde_json::to_string_pretty(&out)?)?;
    Ok(ExitCode::SUCCESS)
}

fn parse_phase(model: &FockModel, phase: &str) -> anyhow::Result<PhasePoint> {
    let v: serde_json::Value = serde_json::from_str(phase).map_err(CoreError::Json)?;
    if let (Some(oval), Some(s)) = (v.get("oval").and_then(|x| x.as_u64()), v.get("s").and_then(|x| x.as_f64())) {
        return Ok(PhasePoint::from_oval(model, oval as usize, s)?);
    }
    if let Some(int) = v.get("interior") {
        let s = int.get("s_cross").and_then(|x| x.as_f64());
        let d = int.get("depth").and_then(|x| x.as_f64());
        if let (Some(s), Some(d)) = (s, d) {
            return Ok(PhasePoint::from_interior(model, s, d)?);
        }
    }
    Err(CoreError::InvalidInput(
        "phase must be {\"oval\":k,\"s\":x} or {\"interior\":{\"s_cross\":x,\"depth\":d}}".into(),
    )
    .into())
}

fn cmd_prob(cli: &Cli, path: &PathBuf, phase: &str, edges: &str) -> anyhow::Result<ExitCode> {
    let (_, model) = load(path)?;
    let u0 = parse_phase(&model, phase)?;
    let edge_list: Vec<usize> = if edges == "all" {
        (0..model.graph.n_edges()).collect()
    } else {
        serde_json::from_str(edges).map_err(CoreError::Json)?
    };
    let mut rows = Vec::new();
    for e in edge_list {
        if e >= model.graph.n_edges() {
            return Err(CoreError::InvalidInput(format!("edge {e} out of range")).into());
        }
        let p = edge_probability_local(&model, &u0, e)?;
        let edge = &model.graph.edges[e];
        rows.push(json!({
            "edge": e,
            "white": model.graph.white_names[edge.w],
            "black": model.graph.black_names[edge.b],
            "offset": [edge.offset.0, edge.offset.1],
            "phase": serde_json::from_str::<serde_json::Value>(phase).unwrap(),
            "probability": p,
            "provenance": "ClosedForm",
        }));
    }
    emit(&cli.out, &serde_json::to_string_pretty(&json!(rows))?)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_scan(cli: &Cli, path: &PathBuf, what: &str, grid: &str) -> anyhow::Result<ExitCode> {
    let (_, model) = load(path)?;
    let mut csv = String::new();
    match what {
        "slope" => {
            // the gaseous slopes over the ovals recover the marked interior
            // lattice points of the Newton polygon
            csv.push_str("oval,s,t,point_x,point_y\n");
            let mut sorted = model.angles.s.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let g1 = {
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
            let u1 = PhasePoint::from_oval(&model, 0, g1)?;
            let p1 = {
                let sa = fock_dimers_core::angles::sorted_angles(&model.graph, &model.angles);
                let r = sa.track_order.len();
                let mut point = sa.polygon_points[0];
                for j in 0..r {
                    let lo = model.angles.s[sa.track_order[j]];
                    let hi = model.angles.s[sa.track_order[(j + 1) % r]];
                    let span = (hi - lo).rem_euclid(1.0);
                    let d = (g1 - lo).rem_euclid(1.0);
                    if d > 0.0 && d < span.max(1e-12) {
                        point = sa.polygon_points[j + 1];
                        break;
                    }
                }
                point
            };
            for k in 1..=model.genus() {
                let u0 = PhasePoint::from_oval(&model, k, 0.41)?;
                let (s, t) = slope(&model, &u0, &u1)?;
                csv.push_str(&format!(
                    "{k},{s:.17e},{t:.17e},{:.17e},{:.17e}\n",
                    p1.0 as f64 + t,
                    p1.1 as f64 - s
                ));
            }
        }
        other => {
            let parts: Vec<f64> = grid
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| CoreError::InvalidInput(format!("bad grid '{grid}'")))?;
            if parts.len() != 6 {
                return Err(CoreError::InvalidInput("grid needs 6 fields".into()).into());
            }
            let (nx, ny) = (parts[0] as usize, parts[1] as usize);
            let p = model.char_poly()?;
            csv.push_str("Bx,By,value\n");
            for i in 0..nx {
                for j in 0..ny {
                    let bx = parts[2] + (parts[3] - parts[2]) * i as f64 / (nx.max(2) - 1) as f64;
                    let by = parts[4] + (parts[5] - parts[4]) * j as f64 / (ny.max(2) - 1) as f64;
                    let b = MagneticField { bx, by };
                    let value = match other {
                        "amoeba" => {
                            if amoeba_sample(&p, b, 64)? {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        "ronkin" => ronkin(&p, b, cli.order)?,
                        _ => unreachable!(),
                    };
                    csv.push_str(&format!("{bx:.17e},{by:.17e},{value:.17e}\n"));
                }
            }
        }
    }
    emit(&cli.out, csv.trim_end())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_move(cli: &Cli, path: &PathBuf, script: &PathBuf) -> anyhow::Result<ExitCode> {
    let (file, model) = load(path)?;
    let text = std::fs::read_to_string(script).map_err(CoreError::Io)?;
    let specs: Vec<MoveSpec> = serde_json::from_str(&text).map_err(CoreError::Json)?;
    let mut current = model;
    let mut reports = Vec::new();
    for spec in &specs {
        let report = check_move_invariance(&current, spec)?;
        reports.push(json!({
            "move": serde_json::to_value(spec).map_err(CoreError::Json)?,
            "face_weight_dev": report.face_weight_dev,
            "char_poly_rel_dev": report.char_poly_rel_dev,
            "partition_log_ratio_dev": report.partition_log_ratio_dev,
            "distant_edge_prob_dev": report.distant_edge_prob_dev,
            "fay_residual": report.fay_residual,
            "pass": report.pass,
        }));
        current = apply_move(&current, spec)?.model;
    }
    let new_file = fock_dimers_core::model::model_file_from_parts(
        &current.graph,
        &file.backend,
        &current.angles,
        current.t_lift.as_slice(),
    );
    let out_model = new_file.to_json_string()?;
    match &cli.out {
        Some(p) => std::fs::write(p, &out_model).map_err(CoreError::Io)?,
        None => println!("{out_model}"),
    }
    eprintln!("{}", serde_json::to_string_pretty(&json!({ "moves": reports }))?);
    let all_pass = reports.iter().all(|r| r["pass"].as_bool().unwrap_or(false));
    Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_package(dir: &PathBuf) -> anyhow::Result<ExitCode> {
    std::fs::create_dir_all(dir).map_err(CoreError::Io)?;
    let items: Vec<(&str, ModelFile)> = vec![
        ("square.json", instances::square()?),
        ("hexagonal.json", instances::hexagonal()?),
        ("square_skew.json", instances::square_skew()?),
        ("square_octagon.json", instances::square_octagon_genus1()?),
        ("square_octagon_genus2.json", instances::square_octagon_genus2()?),
    ];
    for (name, mut file) in items {
        // bake the calibration cache in
        let (_, cal) = file.build()?;
        file.calibration = Some(cal);
        std::fs::write(dir.join(name), file.to_json_string()?).map_err(CoreError::Io)?;
        println!("wrote {}", dir.join(name).display());
    }
    Ok(ExitCode::SUCCESS)
}
