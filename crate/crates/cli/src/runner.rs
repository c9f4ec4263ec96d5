//! Subcommand implementations and artifact writing.

use crate::config::{BoundaryData, ExperimentConfig};
use anyhow::{bail, Context};
use eigenlab::eig::{generalized_eig, EigBc};
use eigenlab::eigenmap::{
    solve_free_boundary, solve_interior, EigenmapSolution, MapField, SolveKind,
};
use eigenlab::ellipsoid::EllipsoidSpec;
use eigenlab::gauge::{
    dbar_frame, holomorphic_factor, omega_from_frame, riviere_ab, uhlenbeck_gauge, DbarOpts,
    GaugeOpts, RiviereOpts, SoMatField,
};
use eigenlab::mesh::{dump_field, make_mesh, BoundaryTag, DiskMesh, Domain, Operators};
use eigenlab::report::{to_csv, EstimateReport};
use eigenlab::rng::CounterRng;
use eigenlab::verify;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy)]
pub enum Mode {
    Mesh,
    Solve,
    Gauge,
    Verify,
    Spectrum,
    Sweep,
}

pub enum Outcome {
    Ok,
    NonConverged,
}

struct Artifacts {
    dir: PathBuf,
    entries: Vec<(String, String)>,
}

impl Artifacts {
    fn new(dir: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output dir {}", dir.display()))?;
        Ok(Artifacts { dir: dir.to_path_buf(), entries: Vec::new() })
    }

    fn write(&mut self, name: &str, content: &str) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, content)
            .with_context(|| format!("writing {}", path.display()))?;
        let hash = Sha256::digest(content.as_bytes());
        let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
        self.entries.push((name.to_string(), hex));
        Ok(())
    }

    fn finish(mut self) -> anyhow::Result<()> {
        self.entries.sort();
        let mut manifest = String::new();
        for (name, hash) in &self.entries {
            manifest.push_str(&format!("{name} {hash}\n"));
        }
        let path = self.dir.join("manifest.txt");
        std::fs::write(&path, manifest)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

fn build_boundary_data(
    cfg: &ExperimentConfig,
    mesh: &DiskMesh,
    spec: &EllipsoidSpec,
) -> anyhow::Result<MapField> {
    let m = spec.m();
    let n = mesh.n_vertices();
    match &cfg.boundary_data {
        BoundaryData::Constant { point } => {
            if point.len() > m {
                bail!("constant point has more coordinates than the target");
            }
            let mut x = point.clone();
            x.resize(m, 0.0);
            let p = spec.proj_p(&x)?;
            Ok(MapField::from_fn(n, m, |_| p.clone()))
        }
        BoundaryData::CircleEigenmap { w } => {
            if m != 2 {
                bail!("circle_eigenmap data needs m = 2");
            }
            let l = spec.lambdas()[0];
            if (spec.lambdas()[1] - l).abs() > 1e-14 {
                bail!("circle_eigenmap data needs lambda_1 = lambda_2");
            }
            Ok(MapField::from_fn(n, 2, |v| {
                let p = mesh.vertices[v];
                let u = w[0] * p[0] + w[1] * p[1];
                vec![u.cos() / l.sqrt(), u.sin() / l.sqrt()]
            }))
        }
        BoundaryData::SteklovLinear => {
            if m != 2 {
                bail!("steklov_linear data needs m = 2");
            }
            let s = spec.lambdas()[0];
            Ok(MapField::from_fn(n, 2, |v| {
                vec![mesh.vertices[v][0] / s.sqrt(), mesh.vertices[v][1] / s.sqrt()]
            }))
        }
        BoundaryData::RandomLoop { scale, seed } => {
            let rng = CounterRng::new(*seed, 0);
            Ok(verify::random_loop_data(mesh, spec, &rng, *scale)?)
        }
    }
}

fn solve(
    cfg: &ExperimentConfig,
    mesh: &DiskMesh,
    ops: &Operators,
    spec: &EllipsoidSpec,
) -> anyhow::Result<EigenmapSolution> {
    let data = build_boundary_data(cfg, mesh, spec)?;
    let opts = cfg.tolerances.to_opts();
    let sol = if cfg.is_free_boundary() {
        match mesh.domain {
            Domain::HalfDisk => {
                solve_free_boundary(mesh, ops, spec, Some(&data), None, &opts)?
            }
            Domain::Disk => solve_free_boundary(mesh, ops, spec, None, Some(&data), &opts)?,
        }
    } else {
        if mesh.domain != Domain::Disk {
            bail!("the interior problem runs on the disk");
        }
        solve_interior(mesh, ops, spec, &data, &opts)?
    };
    Ok(sol)
}

#[derive(Serialize)]
struct SolveSummary {
    kind: &'static str,
    m: usize,
    h: f64,
    dirichlet_energy: f64,
    omega_energy: f64,
    residual_interior: f64,
    residual_boundary: f64,
    iterations: usize,
    converged: bool,
    constraint_violation: f64,
    e_u_degenerate: bool,
}

fn summary(mesh: &DiskMesh, sol: &EigenmapSolution) -> SolveSummary {
    SolveSummary {
        kind: match sol.kind {
            SolveKind::Interior => "interior",
            SolveKind::FreeBoundary => "free_boundary",
        },
        m: sol.phi.m,
        h: mesh.h,
        dirichlet_energy: sol.dirichlet_energy,
        omega_energy: sol.omega_energy,
        residual_interior: sol.residual_interior,
        residual_boundary: sol.residual_boundary,
        iterations: sol.iterations,
        converged: sol.converged,
        constraint_violation: eigenlab::eigenmap::constraint_violation(mesh, sol),
        e_u_degenerate: sol.e_u_degenerate,
    }
}

fn dump_solution(
    art: &mut Artifacts,
    mesh: &DiskMesh,
    sol: &EigenmapSolution,
) -> anyhow::Result<()> {
    art.write("phi.txt", &dump_field(&sol.phi.data, sol.phi.m))?;
    art.write("nu.txt", &dump_field(&sol.nu.data, sol.nu.m))?;
    art.write("beta.txt", &dump_field(&sol.beta_elem, 1))?;
    if sol.kind == SolveKind::FreeBoundary {
        art.write("e_u.txt", &dump_field(&sol.e_u, 1))?;
    }
    art.write(
        "solve.json",
        &serde_json::to_string_pretty(&summary(mesh, sol)).unwrap(),
    )?;
    Ok(())
}

#[derive(Serialize)]
struct GaugeSummary {
    omega_l2: f64,
    bound_ratio: f64,
    defect: f64,
    gauge_iterations: usize,
    riviere_contraction: f64,
    riviere_k: f64,
    riviere_residual: f64,
    dbar_contraction: f64,
    dbar_a_minus_i: f64,
    dbar_residual_rel: f64,
    omega_l21_surrogate: f64,
    dbar_gate_met: bool,
    dbar_alpha_l2: f64,
    dbar_beta_l2: f64,
    holomorphy_improvement: f64,
    alpha_at_floor: bool,
    sup_ratio: f64,
}

fn run_gauge_pipeline(
    cfg: &ExperimentConfig,
    art: &mut Artifacts,
    mesh: &DiskMesh,
    ops: &Operators,
    sol: &EigenmapSolution,
) -> anyhow::Result<GaugeSummary> {
    let m = sol.phi.m;
    let omega = SoMatField::from_omega(&sol.omega, mesh.n_triangles());
    let frame = uhlenbeck_gauge(
        mesh,
        ops,
        &omega,
        &GaugeOpts { eps0: cfg.gates.eps0, ..Default::default() },
    )?;
    let p_flat = MapField::from_fn(mesh.n_vertices(), m * m, |v| {
        let mut row = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                row[i * m + j] = frame.p[v][(i, j)];
            }
        }
        row
    });
    art.write("gauge_p.txt", &dump_field(&p_flat.data, m * m))?;
    art.write("gauge_xi.txt", &dump_field(&frame.xi.data, m * m))?;

    let psi = MapField::from_fn(mesh.n_vertices(), m, |v| {
        sol.phi
            .node(v)
            .iter()
            .zip(sol.spec.lambdas())
            .map(|(&x, &l)| l.sqrt() * x)
            .collect()
    });
    let dec = riviere_ab(mesh, ops, &frame, &psi, sol.omega_energy, &RiviereOpts::default())?;
    art.write("riviere_a.txt", &dump_field(&dec.a.data, m * m))?;
    art.write("riviere_b.txt", &dump_field(&dec.b.data, m * m))?;

    let om = omega_from_frame(mesh, &frame);
    let dbar = dbar_frame(
        mesh,
        &om,
        m,
        &DbarOpts { eps1: cfg.gates.eps1, ..Default::default() },
    )?;
    let mut dbar_flat = Vec::with_capacity(mesh.n_vertices() * m * m * 2);
    for v in 0..mesh.n_vertices() {
        for k in 0..m * m {
            dbar_flat.push(dbar.a[v * m * m + k].re);
            dbar_flat.push(dbar.a[v * m * m + k].im);
        }
    }
    art.write("dbar_a.txt", &dump_field(&dbar_flat, 2 * m * m))?;
    let fac = holomorphic_factor(mesh, sol, &frame, &dbar)?;

    Ok(GaugeSummary {
        omega_l2: frame.omega_l2,
        bound_ratio: frame.bound_ratio,
        defect: frame.defect,
        gauge_iterations: frame.iterations,
        riviere_contraction: dec.contraction_rate,
        riviere_k: dec.k_measured,
        riviere_residual: dec.residual,
        dbar_contraction: dbar.contraction,
        dbar_a_minus_i: dbar.a_minus_i_norm,
        dbar_residual_rel: dbar.residual_rel,
        omega_l21_surrogate: dbar.omega_l21,
        dbar_gate_met: dbar.gate_met,
        dbar_alpha_l2: fac.dbar_alpha_l2,
        dbar_beta_l2: fac.dbar_beta_l2,
        holomorphy_improvement: if fac.dbar_beta_l2 > 0.0 {
            fac.dbar_alpha_l2 / fac.dbar_beta_l2
        } else {
            f64::INFINITY
        },
        alpha_at_floor: fac.at_discretization_floor,
        sup_ratio: fac.sup_ratio,
    })
}

#[derive(Serialize)]
struct SweepSummary {
    reports: Vec<EstimateReport>,
    stability: Vec<StabilityRow>,
    failures: Vec<(usize, String)>,
}

#[derive(Serialize)]
struct StabilityRow {
    anchor: String,
    max_over_min: f64,
    pass: bool,
}

pub fn run(mode: Mode, cfg: &ExperimentConfig, out_dir: &Path) -> anyhow::Result<Outcome> {
    let mut art = Artifacts::new(out_dir)?;
    let mesh = make_mesh(cfg.domain, cfg.h)?;
    art.write("mesh.txt", &mesh.dump())?;
    let outcome = match mode {
        Mode::Mesh => Outcome::Ok,
        Mode::Solve => {
            let ops = Operators::assemble(&mesh);
            let spec = EllipsoidSpec::new(cfg.params()?)?;
            let sol = solve(cfg, &mesh, &ops, &spec)?;
            dump_solution(&mut art, &mesh, &sol)?;
            if sol.converged { Outcome::Ok } else { Outcome::NonConverged }
        }
        Mode::Gauge => {
            let ops = Operators::assemble(&mesh);
            let spec = EllipsoidSpec::new(cfg.params()?)?;
            let sol = solve(cfg, &mesh, &ops, &spec)?;
            dump_solution(&mut art, &mesh, &sol)?;
            if sol.kind != SolveKind::Interior {
                bail!("gauge construction runs on interior eigenmaps");
            }
            let gs = run_gauge_pipeline(cfg, &mut art, &mesh, &ops, &sol)?;
            art.write("gauge_report.json", &serde_json::to_string_pretty(&gs).unwrap())?;
            if sol.converged { Outcome::Ok } else { Outcome::NonConverged }
        }
        Mode::Verify => {
            let ops = Operators::assemble(&mesh);
            let spec = EllipsoidSpec::new(cfg.params()?)?;
            let sol = solve(cfg, &mesh, &ops, &spec)?;
            dump_solution(&mut art, &mesh, &sol)?;
            let gates = cfg.gates.to_gates();
            let mut reports: Vec<EstimateReport> = Vec::new();
            match sol.kind {
                SolveKind::Interior => {
                    reports.push(verify::epsreg_report(&mesh, &sol, &gates));
                    reports.push(verify::lp_report(&mesh, &sol, &gates));
                    if let Ok(r) = verify::spectral_consistency(&mesh, &ops, &sol) {
                        reports.push(r);
                    }
                    if sol.dirichlet_energy > 1e-14 {
                        let (density, c) = verify::rescaled_gradient_density(&mesh, &sol)?;
                        let radii: Vec<f64> = cfg.radii.clone().unwrap_or_else(|| {
                            (mesh.rings / 3..mesh.rings)
                                .map(|j| j as f64 / mesh.rings as f64)
                                .collect()
                        });
                        reports.push(verify::check_monotonicity(
                            &mesh,
                            &ops,
                            verify::ScalarData::PerElement(&density),
                            c,
                            &radii,
                            cfg.mono_slack,
                        )?);
                    }
                }
                SolveKind::FreeBoundary => {
                    reports.push(verify::boundary_report(&mesh, &sol));
                    if let Ok(r) = verify::spectral_consistency(&mesh, &ops, &sol) {
                        reports.push(r);
                    }
                }
            }
            art.write(
                "report.json",
                &serde_json::to_string_pretty(&reports).unwrap(),
            )?;
            art.write("report.csv", &to_csv(&reports))?;
            if sol.converged { Outcome::Ok } else { Outcome::NonConverged }
        }
        Mode::Spectrum => {
            let ops = Operators::assemble(&mesh);
            let spec = EllipsoidSpec::new(cfg.params()?)?;
            let sol = solve(cfg, &mesh, &ops, &spec)?;
            dump_solution(&mut art, &mesh, &sol)?;
            let (weight, fixed, bc) = match sol.kind {
                SolveKind::Interior => (
                    Operators::weighted_mass(&mesh, &sol.beta_elem),
                    (0..mesh.n_vertices()).map(|v| mesh.is_boundary(v)).collect::<Vec<_>>(),
                    EigBc::Dirichlet,
                ),
                SolveKind::FreeBoundary => {
                    let bf = Operators::boundary_mass(&mesh, BoundaryTag::Flat, &sol.e_u);
                    let bc_mass = Operators::boundary_mass(&mesh, BoundaryTag::Circle, &sol.e_u);
                    let mut trip = Vec::new();
                    for mat in [&bf, &bc_mass] {
                        for i in 0..mat.n {
                            for p in mat.row_ptr[i]..mat.row_ptr[i + 1] {
                                trip.push((i, mat.col_idx[p], mat.values[p]));
                            }
                        }
                    }
                    let b = eigenlab::sparse::Csr::from_triplets(mesh.n_vertices(), &trip);
                    let fixed: Vec<bool> = (0..mesh.n_vertices())
                        .map(|v| mesh.is_boundary(v) && sol.e_u[v] == 0.0)
                        .collect();
                    let bc = if fixed.iter().any(|&f| f) { EigBc::Dirichlet } else { EigBc::Neumann };
                    (b, fixed, bc)
                }
            };
            let pairs = generalized_eig(&ops.stiffness, &weight, cfg.spectrum_count, bc, &fixed)?;
            let vals: Vec<f64> = pairs.iter().map(|p| p.value).collect();
            let residuals: Vec<f64> = pairs.iter().map(|p| p.residual).collect();
            art.write("eigenvalues.txt", &dump_field(&vals, 1))?;
            #[derive(Serialize)]
            struct SpectrumSummary {
                eigenvalues: Vec<f64>,
                residuals: Vec<f64>,
            }
            art.write(
                "spectrum.json",
                &serde_json::to_string_pretty(&SpectrumSummary {
                    eigenvalues: vals,
                    residuals,
                })
                .unwrap(),
            )?;
            if sol.converged { Outcome::Ok } else { Outcome::NonConverged }
        }
        Mode::Sweep => {
            let threads = std::env::var("EIGENMAP_LAB_THREADS")
                .ok()
                .and_then(|v| v.parse::<usize>().ok());
            let sweep_cfg = verify::SweepConfig {
                m_list: cfg.sweep.m_list.clone(),
                alpha: cfg.sweep.alpha,
                energy: cfg.sweep.energy,
                h: cfg.h,
                seed: cfg.sweep.seed,
                include_dbar: cfg.sweep.include_dbar,
                dim_ratio_cap: cfg.sweep.dim_ratio_cap,
                gates: cfg.gates.to_gates(),
                solve: cfg.tolerances.to_opts(),
            };
            let out = eigenlab::par::with_thread_cap(threads, || {
                verify::dimension_sweep(&sweep_cfg)
            })?;
            let summary = SweepSummary {
                stability: out
                    .stability
                    .iter()
                    .map(|(a, r, p)| StabilityRow {
                        anchor: a.clone(),
                        max_over_min: *r,
                        pass: *p,
                    })
                    .collect(),
                failures: out.failures.clone(),
                reports: out.reports,
            };
            art.write("report.json", &serde_json::to_string_pretty(&summary).unwrap())?;
            art.write("report.csv", &to_csv(&summary.reports))?;
            let ok = summary.failures.is_empty();
            if ok { Outcome::Ok } else { Outcome::NonConverged }
        }
    };
    art.finish()?;
    Ok(outcome)
}
