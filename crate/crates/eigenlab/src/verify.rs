//! The estimates harness: every inequality and identity measured on solved
//! instances, and the dimension-independence sweep over the number of
//! target coordinates.
//!
//! All measured-constant entries are stability assertions (finite,
//! refinement-stable, dimension-stable); the continuum constants are never
//! asserted as equalities.

use crate::eig::eig_residual;
use crate::eigenmap::{
    map_gradients, solve_free_boundary, solve_interior, weighted_identity_check,
    EigenmapSolution, MapField, SolveKind, SolveOpts,
};
use crate::ellipsoid::EllipsoidSpec;
use crate::gauge::{
    dbar_frame, holomorphic_factor, omega_from_frame, riviere_ab, uhlenbeck_gauge, DbarOpts,
    GaugeOpts, RiviereOpts, SoMatField,
};
use crate::mesh::{BoundaryTag, DiskMesh, Domain, Operators};
use crate::pde;
use crate::report::{EstimateEntry, EstimateReport, GateStatus};
use crate::rng::CounterRng;
use crate::{par, Error, Result};

/// Smallness gates; the paper proves existence of thresholds, these are the
/// configured stand-ins.
#[derive(Clone, Copy, Debug)]
pub struct Gates {
    pub eps0: f64,
    pub eps1: f64,
    pub eps_alpha: f64,
}

impl Default for Gates {
    fn default() -> Self {
        Gates { eps0: 0.05, eps1: 0.05, eps_alpha: 0.5 }
    }
}

pub enum ScalarData<'a> {
    Nodal(&'a [f64]),
    PerElement(&'a [f64]),
}

/// Monotonicity of `r -> e^{c r^2/4} r^{-2} int_{D_r} u` for `u >= 0` with
/// `Δu <= c u`. The subsolution hypothesis is checked weakly and reported;
/// sub-disks are element subsets by centroid membership.
pub fn check_monotonicity(
    mesh: &DiskMesh,
    ops: &Operators,
    u: ScalarData,
    c: f64,
    radii: &[f64],
    mono_slack: f64,
) -> Result<EstimateReport> {
    let nodal: Vec<f64> = match &u {
        ScalarData::Nodal(v) => v.to_vec(),
        ScalarData::PerElement(g) => {
            // lumped projection for the weak hypothesis check
            let mut acc = vec![0.0; mesh.n_vertices()];
            let mut w = vec![0.0; mesh.n_vertices()];
            for (t, tri) in mesh.triangles.iter().enumerate() {
                for &v in tri {
                    acc[v] += mesh.tri_area[t] * g[t];
                    w[v] += mesh.tri_area[t];
                }
            }
            for v in 0..mesh.n_vertices() {
                acc[v] /= w[v];
            }
            acc
        }
    };
    if nodal.iter().any(|&x| x < -1e-12) {
        return Err(Error::BadParam("monotonicity needs u >= 0".into()));
    }
    let elem_val: Vec<f64> = match &u {
        ScalarData::PerElement(g) => g.to_vec(),
        ScalarData::Nodal(v) => mesh
            .triangles
            .iter()
            .map(|tri| (v[tri[0]] + v[tri[1]] + v[tri[2]]) / 3.0)
            .collect(),
    };

    let mut report = EstimateReport::new(0, mesh.h, 0.0);
    // weak subsolution check against interior hats, relative violation
    let ku = ops.stiffness.mul_vec(&nodal);
    let mu = ops.mass.mul_vec(&nodal);
    let mut violation = 0.0f64;
    let mut scale = 0.0f64;
    let u_sup = nodal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for v in 0..mesh.n_vertices() {
        if mesh.is_boundary(v) {
            continue;
        }
        violation = violation.max(ku[v] - c * mu[v]);
        scale = scale.max(ku[v].abs().max((c * mu[v]).abs()));
    }
    // harmonic u with c = 0 leaves only roundoff in both terms; floor the
    // scale with the field magnitude so the check stays well-posed
    let rel_violation = violation.max(0.0) / scale.max(1e-10 * (1.0 + u_sup));
    report.push(EstimateEntry::new(
        "prop:monotonicity:subsolution",
        rel_violation,
        1.0,
        rel_violation,
        0.05,
        rel_violation <= 0.05,
        GateStatus::NotApplicable,
    ));

    let g_of = |r: f64| -> f64 {
        let mut integral = 0.0;
        for t in 0..mesh.n_triangles() {
            let cc = mesh.tri_centroid[t];
            if cc[0] * cc[0] + cc[1] * cc[1] <= r * r {
                integral += mesh.tri_area[t] * elem_val[t];
            }
        }
        (c * r * r / 4.0).exp() * integral / (r * r)
    };
    let vals: Vec<f64> = radii.iter().map(|&r| g_of(r)).collect();
    for k in 0..vals.len().saturating_sub(1) {
        let pass = vals[k + 1] >= vals[k] * (1.0 - mono_slack);
        report.push(EstimateEntry::new(
            "prop:monotonicity",
            vals[k + 1],
            vals[k],
            if vals[k] != 0.0 { vals[k + 1] / vals[k] } else { 1.0 },
            mono_slack,
            pass,
            GateStatus::NotApplicable,
        ));
    }
    Ok(report)
}

/// Max of a per-element density over nodes admissible for sup sampling
/// (`1 - |x| >= 2h`), taking the max over elements incident to each node.
fn sup_weighted(mesh: &DiskMesh, density: &[f64], weight: impl Fn(f64) -> f64) -> f64 {
    let n = mesh.n_vertices();
    let mut nodal = vec![0.0f64; n];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for &v in tri {
            nodal[v] = nodal[v].max(density[t]);
        }
    }
    let mut sup = 0.0f64;
    for v in 0..n {
        let p = mesh.vertices[v];
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        if 1.0 - r < 2.0 * mesh.h {
            continue;
        }
        sup = sup.max(weight(r) * nodal[v]);
    }
    sup
}

/// Interior epsilon-regularity measurements on a solved eigenmap.
pub fn epsreg_report(
    mesh: &DiskMesh,
    sol: &EigenmapSolution,
    gates: &Gates,
) -> EstimateReport {
    let m = sol.phi.m;
    let lam = sol.spec.lambdas();
    let energy2 = 2.0 * sol.dirichlet_energy; // int |∇Phi|^2
    let nu_energy = sol.nu_energy_tangential;
    let mut report = EstimateReport::new(m, mesh.h, sol.dirichlet_energy);
    let gate_alpha = if energy2 <= gates.eps_alpha { GateStatus::Met } else { GateStatus::NotMet };
    let gate_nu = if nu_energy <= gates.eps0 { GateStatus::Met } else { GateStatus::NotMet };

    let grads = map_gradients(mesh, &sol.phi);
    let ne = mesh.n_triangles();
    let grad_sq: Vec<f64> = (0..ne)
        .map(|t| {
            let g = &grads[t * m * 2..(t + 1) * m * 2];
            let mut s = 0.0;
            for i in 0..m {
                s += g[i * 2] * g[i * 2] + g[i * 2 + 1] * g[i * 2 + 1];
            }
            s
        })
        .collect();
    let grad_psi_sq: Vec<f64> = (0..ne)
        .map(|t| {
            let g = &grads[t * m * 2..(t + 1) * m * 2];
            let mut s = 0.0;
            for i in 0..m {
                s += lam[i] * (g[i * 2] * g[i * 2] + g[i * 2 + 1] * g[i * 2 + 1]);
            }
            s
        })
        .collect();
    let psi_energy = pde::integrate_elem(mesh, &grad_psi_sq);

    // theo:epsregharm1  sup (1-|x|)^2 |∇Phi|^2 <= C int |∇Phi|^2
    let sup_phi = sup_weighted(mesh, &grad_sq, |r| (1.0 - r) * (1.0 - r));
    report.push(EstimateEntry::measured("theo:epsregharm1", sup_phi, energy2, gate_alpha));

    // eqconsequenceclaimalphaplus  same with the gate on ∇nu
    report.push(EstimateEntry::measured(
        "eq:consequenceclaimalphaplus",
        sup_phi,
        energy2,
        gate_nu,
    ));

    // prop:Linftyestimateofgradpsi  ||∇Psi|^2||_inf(D_1/4) <= C2 int |∇Psi|^2
    let mut sup_quarter = 0.0f64;
    for t in 0..ne {
        let c = mesh.tri_centroid[t];
        if c[0] * c[0] + c[1] * c[1] <= 0.25 * 0.25 {
            sup_quarter = sup_quarter.max(grad_psi_sq[t]);
        }
    }
    let beta_int = pde::integrate_elem(mesh, &sol.beta_elem);
    let gate_prop = if psi_energy <= 1.0 && beta_int <= 1.0 && nu_energy <= gates.eps0 {
        GateStatus::Met
    } else {
        GateStatus::NotMet
    };
    report.push(EstimateEntry::measured(
        "eq:consequenceclaimalpha",
        sup_quarter,
        psi_energy,
        gate_prop,
    ));

    // eq:consequenceclaimalpha2plus  sum_i int (ΔPhi_i)^2 (1-|x|)^2, with
    // ΔPhi evaluated through the equation's right-hand side beta L Phi
    let mut lhs = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let c = mesh.tri_centroid[t];
        let w = (1.0 - (c[0] * c[0] + c[1] * c[1]).sqrt()).powi(2);
        let mut s = 0.0;
        for i in 0..m {
            let mean = (sol.phi.data[tri[0] * m + i]
                + sol.phi.data[tri[1] * m + i]
                + sol.phi.data[tri[2] * m + i])
                / 3.0;
            let v = sol.beta_elem[t] * lam[i] * mean;
            s += v * v;
        }
        lhs += mesh.tri_area[t] * w * s;
    }
    report.push(EstimateEntry::measured(
        "eq:consequenceclaimalpha2plus",
        lhs,
        energy2 * nu_energy.max(1e-300),
        gate_nu,
    ));

    // eq:epsregconffactor at r = 1/2: ||<∇Phi, ∇nu>||^2_{L2(D_{1/2})}
    let r = 0.5;
    let mut inner_sq = 0.0;
    for t in 0..ne {
        let c = mesh.tri_centroid[t];
        if c[0] * c[0] + c[1] * c[1] > (1.0 - r) * (1.0 - r) {
            continue;
        }
        let g = &grads[t * m * 2..(t + 1) * m * 2];
        let gn = &sol.omega.grad_nu[t * m * 2..(t + 1) * m * 2];
        let mut inner = 0.0;
        for i in 0..m {
            inner += g[i * 2] * gn[i * 2] + g[i * 2 + 1] * gn[i * 2 + 1];
        }
        inner_sq += mesh.tri_area[t] * inner * inner;
    }
    report.push(EstimateEntry::measured(
        "eq:epsregconffactor",
        inner_sq,
        nu_energy.max(1e-300) * energy2 / (r * r),
        gate_nu,
    ));

    // eq:epsregconffactorp: ||beta||^2_{L2(D_1/2)} <= C eps0/(min l)^2 int|∇Phi|^2
    let min_l = lam.iter().cloned().fold(f64::MAX, f64::min);
    let mut beta_sq = 0.0;
    for t in 0..ne {
        let c = mesh.tri_centroid[t];
        if c[0] * c[0] + c[1] * c[1] <= 0.25 {
            beta_sq += mesh.tri_area[t] * sol.beta_elem[t] * sol.beta_elem[t];
        }
    }
    report.push(EstimateEntry::measured(
        "eq:epsregconffactorp",
        beta_sq,
        nu_energy.max(1e-300) * energy2 / (min_l * min_l),
        gate_nu,
    ));

    // identity int |Omega|^2 = 2 int |∇nu|^2 (vertex quadrature, see module
    // docs) and the weighted identity
    let id_gap = (sol.omega_energy - 2.0 * sol.nu_energy_tangential).abs()
        / sol.omega_energy.max(1e-300);
    report.push(EstimateEntry::new(
        "identity:omega_nu",
        sol.omega_energy,
        2.0 * sol.nu_energy_tangential,
        id_gap,
        1e-10,
        id_gap <= 1e-10 || sol.omega_energy == 0.0,
        GateStatus::NotApplicable,
    ));
    if let Ok(wi) = weighted_identity_check(mesh, sol) {
        report.push(EstimateEntry::new(
            "eq:smallnessassump",
            wi.lhs,
            wi.rhs,
            wi.relative_gap,
            0.01,
            wi.relative_gap <= 0.01,
            GateStatus::NotApplicable,
        ));
    }
    report
}

/// Boundary estimates for a Steklov solve on the half-disk.
pub fn boundary_report(mesh: &DiskMesh, sol: &EigenmapSolution) -> EstimateReport {
    let m = sol.phi.m;
    let mut report = EstimateReport::new(m, mesh.h, sol.dirichlet_energy);
    let grads = map_gradients(mesh, &sol.phi);
    let ne = mesh.n_triangles();
    let grad_sq: Vec<f64> = (0..ne)
        .map(|t| {
            let g = &grads[t * m * 2..(t + 1) * m * 2];
            let mut s = 0.0;
            for i in 0..m {
                s += g[i * 2] * g[i * 2] + g[i * 2 + 1] * g[i * 2 + 1];
            }
            s
        })
        .collect();
    let energy2 = pde::integrate_elem(mesh, &grad_sq);
    let quartic = par::sum_indexed(ne, |t| mesh.tri_area[t] * grad_sq[t] * grad_sq[t]);

    // flat-boundary gradient L2 restricted to [-9/10, 9/10]
    let mut edge_of: std::collections::HashMap<(usize, usize), usize> =
        std::collections::HashMap::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            edge_of.insert((a.min(b), a.max(b)), t);
        }
    }
    let mut flat_l2 = 0.0;
    for &(a, b, tag) in &mesh.boundary_edges {
        if tag != BoundaryTag::Flat {
            continue;
        }
        let pa = mesh.vertices[a];
        let pb = mesh.vertices[b];
        if pa[0].abs() > 0.9 || pb[0].abs() > 0.9 {
            continue;
        }
        let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        if let Some(&t) = edge_of.get(&(a.min(b), a.max(b))) {
            flat_l2 += len * grad_sq[t];
        }
    }
    report.push(EstimateEntry::measured(
        "cl:noneedsmallmassboundary",
        flat_l2,
        energy2 + quartic,
        GateStatus::NotApplicable,
    ));

    // cl:uniform  1 - min_{D+_1/2} |Phi|_s^2 <= C sqrt(energy)
    let mut min_nsq = f64::INFINITY;
    for v in 0..mesh.n_vertices() {
        let p = mesh.vertices[v];
        if p[0] * p[0] + p[1] * p[1] <= 0.25 {
            min_nsq = min_nsq.min(sol.spec.lambda_norm_sq_unchecked(sol.phi.node(v)));
        }
    }
    report.push(EstimateEntry::measured(
        "cl:uniform",
        (1.0 - min_nsq).max(0.0),
        energy2.sqrt(),
        GateStatus::NotApplicable,
    ));

    // theo:mainSteklov  sup (1-|x|)^2 |∇Phi|^2 / energy
    let sup = sup_weighted(mesh, &grad_sq, |r| (1.0 - r) * (1.0 - r));
    report.push(EstimateEntry::measured(
        "theo:mainSteklov",
        sup,
        energy2.max(1e-300),
        GateStatus::NotApplicable,
    ));
    report
}

/// Lp / Lq interior estimates of the Riviere system, `p in {2, 4}` with the
/// paired exponent `q = 2p/(p+1)`.
pub fn lp_report(mesh: &DiskMesh, sol: &EigenmapSolution, gates: &Gates) -> EstimateReport {
    let m = sol.phi.m;
    let lam = sol.spec.lambdas();
    let mut report = EstimateReport::new(m, mesh.h, sol.dirichlet_energy);
    let gate = if sol.omega_energy <= gates.eps0 { GateStatus::Met } else { GateStatus::NotMet };
    let n = mesh.n_vertices();
    let psi = MapField::from_fn(n, m, |v| {
        sol.phi.node(v).iter().zip(lam).map(|(&x, &l)| l.sqrt() * x).collect()
    });
    let gpsi = map_gradients(mesh, &psi);
    let ne = mesh.n_triangles();
    let half: Vec<usize> = pde::elements_in_disk(mesh, [0.0, 0.0], 0.5);
    let psi_energy = par::sum_indexed(ne, |t| {
        let g = &gpsi[t * m * 2..(t + 1) * m * 2];
        let mut s = 0.0;
        for i in 0..m {
            s += g[i * 2] * g[i * 2] + g[i * 2 + 1] * g[i * 2 + 1];
        }
        mesh.tri_area[t] * s
    });

    // |Δpsi_i| per element through the equation Ω ∇Psi (never discrete
    // second derivatives)
    let mut dpsi = vec![0.0; ne * m];
    for t in 0..ne {
        let nb = &sol.omega.nu_bar[t * m..(t + 1) * m];
        let gn = &sol.omega.grad_nu[t * m * 2..(t + 1) * m * 2];
        let g = &gpsi[t * m * 2..(t + 1) * m * 2];
        let mut inner = 0.0;
        let mut nphi = [0.0f64; 2];
        for j in 0..m {
            inner += gn[j * 2] * g[j * 2] + gn[j * 2 + 1] * g[j * 2 + 1];
            nphi[0] += nb[j] * g[j * 2];
            nphi[1] += nb[j] * g[j * 2 + 1];
        }
        for i in 0..m {
            dpsi[t * m + i] =
                (nb[i] * inner - (nphi[0] * gn[i * 2] + nphi[1] * gn[i * 2 + 1])).abs();
        }
    }

    for &p in &[2.0f64, 4.0] {
        let q = 2.0 * p / (p + 1.0);
        let mut lp_sum = 0.0;
        let mut lq_sum = 0.0;
        for i in 0..m {
            let mut ip = 0.0;
            let mut iq = 0.0;
            for &t in &half {
                let g = &gpsi[(t * m + i) * 2..];
                let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
                ip += mesh.tri_area[t] * gn.powf(2.0 * p);
                iq += mesh.tri_area[t] * dpsi[t * m + i].powf(q);
            }
            lp_sum += ip.powf(1.0 / p);
            lq_sum += iq.powf(2.0 / q);
        }
        report.push(EstimateEntry::measured(
            &format!("eq:Lpestimate:p{}", p as u32),
            lp_sum,
            psi_energy.max(1e-300),
            gate,
        ));
        report.push(EstimateEntry::measured(
            &format!("eq:Lqestimate:p{}", p as u32),
            lq_sum,
            (sol.omega_energy * psi_energy).max(1e-300),
            gate,
        ));
    }
    report
}

/// Spectral consistency: solved-eigenmap coordinates against the weighted
/// eigenproblem; Steklov solutions against the boundary-weighted problem.
pub fn spectral_consistency(
    mesh: &DiskMesh,
    ops: &Operators,
    sol: &EigenmapSolution,
) -> Result<EstimateReport> {
    let m = sol.phi.m;
    let lam = sol.spec.lambdas();
    let mut report = EstimateReport::new(m, mesh.h, sol.dirichlet_energy);
    let beta_scale = pde::integrate_elem(mesh, &sol.beta_elem);
    if sol.kind == SolveKind::Interior && beta_scale < 1e-14 {
        return Err(Error::Degenerate("constant map: beta vanishes".into()));
    }
    let (weight, fixed): (crate::sparse::Csr, Vec<bool>) = match sol.kind {
        SolveKind::Interior => (
            Operators::weighted_mass(mesh, &sol.beta_elem),
            (0..mesh.n_vertices()).map(|v| mesh.is_boundary(v)).collect(),
        ),
        SolveKind::FreeBoundary => {
            // the free boundary is wherever the Steklov density lives: the
            // flat segment on the half-disk, the circle on the full disk
            let bf = Operators::boundary_mass(mesh, BoundaryTag::Flat, &sol.e_u);
            let bc = Operators::boundary_mass(mesh, BoundaryTag::Circle, &sol.e_u);
            let mut trip = Vec::new();
            for mat in [&bf, &bc] {
                for i in 0..mat.n {
                    for p in mat.row_ptr[i]..mat.row_ptr[i + 1] {
                        trip.push((i, mat.col_idx[p], mat.values[p]));
                    }
                }
            }
            let b = crate::sparse::Csr::from_triplets(mesh.n_vertices(), &trip);
            let fixed = (0..mesh.n_vertices())
                .map(|v| mesh.is_boundary(v) && sol.e_u[v] == 0.0)
                .collect();
            (b, fixed)
        }
    };
    let mut worst_res = 0.0f64;
    for k in 0..m {
        let phi_k = sol.phi.coordinate(k);
        let res = eig_residual(&ops.stiffness, &weight, lam[k], &phi_k, &fixed);
        worst_res = worst_res.max(res);
        report.push(EstimateEntry::new(
            &format!("theo1:coordinate_residual:{k}"),
            res,
            1.0,
            res,
            5e-2,
            res <= 5e-2,
            GateStatus::NotApplicable,
        ));
    }
    // Gram matrix in the weighted inner product
    let mut gram = vec![vec![0.0; m]; m];
    for k in 0..m {
        let pk = sol.phi.coordinate(k);
        let wk = weight.mul_vec(&pk);
        for l in 0..m {
            let pl = sol.phi.coordinate(l);
            gram[k][l] = crate::sparse::dot(&wk, &pl);
        }
    }
    let mut off = 0.0f64;
    for k in 0..m {
        for l in 0..m {
            if k != l {
                let denom = (gram[k][k] * gram[l][l]).sqrt().max(1e-300);
                off = off.max(gram[k][l].abs() / denom);
            }
        }
    }
    report.push(EstimateEntry::new(
        "theo1:gram_offdiagonal",
        off,
        1.0,
        off,
        5e-2,
        off <= 5e-2,
        GateStatus::NotApplicable,
    ));
    // the constraint restated: a positive combination of squares is constant
    let constraint = crate::eigenmap::constraint_violation(mesh, sol);
    report.push(EstimateEntry::new(
        "theo1:squares_constant",
        constraint,
        1.0,
        constraint,
        1e-9,
        constraint <= 1e-9,
        GateStatus::NotApplicable,
    ));
    Ok(report)
}

/// Deterministic perturbed-loop Dirichlet data: a base point plus seeded
/// low-frequency Fourier modes, projected onto the ellipsoid node by node.
pub fn random_loop_data(
    mesh: &DiskMesh,
    spec: &EllipsoidSpec,
    rng: &CounterRng,
    scale: f64,
) -> Result<MapField> {
    let m = spec.m();
    let base = 1.0 / spec.lambdas()[0].sqrt();
    let mut coef = vec![[0.0f64; 12]; m];
    for (i, row) in coef.iter_mut().enumerate() {
        for (k, c) in row.iter_mut().enumerate() {
            let freq = 1 + k % 3;
            *c = rng.normal((i * 12 + k) as u64) / freq as f64;
        }
    }
    let n = mesh.n_vertices();
    let mut data = Vec::with_capacity(n * m);
    for v in 0..n {
        let p = mesh.vertices[v];
        let th = p[1].atan2(p[0]);
        let mut x = vec![0.0; m];
        x[0] = base;
        for i in 0..m {
            let row = &coef[i];
            let mut g = 0.0;
            for k in 0..3 {
                let f = (k + 1) as f64;
                g += row[2 * k] * (f * th).cos() + row[2 * k + 1] * (f * th).sin();
            }
            x[i] += scale * g;
        }
        data.extend(spec.proj_p(&x)?);
    }
    Ok(MapField { m, data })
}

/// Calibrate the perturbation scale so the solved energy hits the target
/// within 2%, by bracketed bisection. Returns the solution.
pub fn calibrated_interior_solve(
    mesh: &DiskMesh,
    ops: &Operators,
    spec: &EllipsoidSpec,
    rng: &CounterRng,
    target_energy: f64,
    opts: &SolveOpts,
) -> Result<EigenmapSolution> {
    // the energy scales roughly quadratically in the perturbation; a
    // multiplicative secant with loose-tolerance probes converges in a few
    // steps, then one tight solve finishes
    let loose = SolveOpts { solve_tol: opts.solve_tol.max(1e-5), ..*opts };
    let probe = |scale: f64, o: &SolveOpts| -> Result<EigenmapSolution> {
        let data = random_loop_data(mesh, spec, rng, scale)?;
        solve_interior(mesh, ops, spec, &data, o)
    };
    let mut scale = 0.2;
    let mut sol = probe(scale, &loose)?;
    for _ in 0..12 {
        if (sol.dirichlet_energy - target_energy).abs() <= 0.015 * target_energy {
            break;
        }
        let f = (target_energy / sol.dirichlet_energy.max(1e-12)).sqrt();
        scale *= f.clamp(0.25, 4.0);
        sol = probe(scale, &loose)?;
    }
    if (sol.dirichlet_energy - target_energy).abs() > 0.02 * target_energy {
        return Err(Error::Degenerate(format!(
            "energy calibration missed the target: {} vs {}",
            sol.dirichlet_energy, target_energy
        )));
    }
    probe(scale, opts)
}

/// The same calibration for the Steklov half-disk problem; the loop data
/// feeds the (unconstrained) arc.
pub fn calibrated_steklov_solve(
    mesh: &DiskMesh,
    ops: &Operators,
    spec: &EllipsoidSpec,
    rng: &CounterRng,
    target_energy: f64,
    opts: &SolveOpts,
) -> Result<EigenmapSolution> {
    let loose = SolveOpts { solve_tol: opts.solve_tol.max(1e-5), ..*opts };
    let probe = |scale: f64, o: &SolveOpts| -> Result<EigenmapSolution> {
        let arc = random_loop_data(mesh, spec, rng, scale)?;
        solve_free_boundary(mesh, ops, spec, Some(&arc), None, o)
    };
    let mut scale = 0.2;
    let mut sol = probe(scale, &loose)?;
    for _ in 0..12 {
        if (sol.dirichlet_energy - target_energy).abs() <= 0.015 * target_energy {
            break;
        }
        let f = (target_energy / sol.dirichlet_energy.max(1e-12)).sqrt();
        scale *= f.clamp(0.25, 4.0);
        sol = probe(scale, &loose)?;
    }
    if (sol.dirichlet_energy - target_energy).abs() > 0.02 * target_energy {
        return Err(Error::Degenerate(format!(
            "energy calibration missed the target: {} vs {}",
            sol.dirichlet_energy, target_energy
        )));
    }
    probe(scale, opts)
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub m_list: Vec<usize>,
    pub alpha: f64,
    pub energy: f64,
    pub h: f64,
    pub seed: u64,
    pub include_dbar: bool,
    pub dim_ratio_cap: f64,
    pub gates: Gates,
    pub solve: SolveOpts,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            m_list: vec![3, 8, 32],
            alpha: 1.5,
            energy: 0.2,
            h: 0.05,
            seed: 7,
            include_dbar: true,
            dim_ratio_cap: 2.0,
            gates: Gates::default(),
            solve: SolveOpts::default(),
        }
    }
}

/// Log-spaced semi-axis parameters in `[1/alpha, alpha]` with elongation
/// exactly `alpha`.
pub fn sweep_lambdas(m: usize, alpha: f64) -> Vec<f64> {
    (0..m)
        .map(|i| {
            let t = if m > 1 { i as f64 / (m - 1) as f64 } else { 0.5 };
            alpha.powf(2.0 * t - 1.0)
        })
        .collect()
}

/// Full per-instance pipeline: solve, gauge, Riviere, optional ∂̄-frame,
/// Steklov companion, all reports merged.
pub fn run_sweep_instance(
    disk: &DiskMesh,
    disk_ops: &Operators,
    half: &DiskMesh,
    half_ops: &Operators,
    m: usize,
    cfg: &SweepConfig,
) -> Result<EstimateReport> {
    let spec = EllipsoidSpec::new(sweep_lambdas(m, cfg.alpha))?;
    let rng = CounterRng::new(cfg.seed, m as u64);
    let sol = calibrated_interior_solve(disk, disk_ops, &spec, &rng, cfg.energy, &cfg.solve)?;
    let mut report = EstimateReport::new(m, cfg.h, sol.dirichlet_energy);
    for e in epsreg_report(disk, &sol, &cfg.gates).entries {
        report.push(e);
    }
    for e in lp_report(disk, &sol, &cfg.gates).entries {
        report.push(e);
    }
    if let Ok(sr) = spectral_consistency(disk, disk_ops, &sol) {
        // only the worst residual and the constraint are dimension constants
        let mut worst = 0.0f64;
        for e in &sr.entries {
            if e.anchor.starts_with("theo1:coordinate_residual") {
                worst = worst.max(e.ratio);
            }
        }
        report.push(EstimateEntry::new(
            "theo1:worst_coordinate_residual",
            worst,
            1.0,
            worst,
            5e-2,
            worst <= 5e-2,
            GateStatus::NotApplicable,
        ));
    }

    let omega_dense = SoMatField::from_omega(&sol.omega, disk.n_triangles());
    let frame = uhlenbeck_gauge(
        disk,
        disk_ops,
        &omega_dense,
        &GaugeOpts { eps0: cfg.gates.eps0, ..Default::default() },
    )?;
    report.push(EstimateEntry::measured(
        "prop:gauge",
        frame.grad_p_l2 + frame.grad_xi_l2,
        frame.omega_l2.max(1e-300),
        if frame.gate_met { GateStatus::Met } else { GateStatus::NotMet },
    ));
    let psi = MapField::from_fn(disk.n_vertices(), m, |v| {
        sol.phi
            .node(v)
            .iter()
            .zip(spec.lambdas())
            .map(|(&x, &l)| l.sqrt() * x)
            .collect()
    });
    match riviere_ab(
        disk,
        disk_ops,
        &frame,
        &psi,
        sol.omega_energy,
        &RiviereOpts::default(),
    ) {
        Ok(dec) => {
            report.push(EstimateEntry::measured(
                "prop:riviereform:K",
                dec.pa_minus_i_sup_sq + dec.grad_a_l2_sq + dec.grad_b_l2_sq,
                sol.omega_energy.max(1e-300),
                if sol.omega_energy <= cfg.gates.eps0 {
                    GateStatus::Met
                } else {
                    GateStatus::NotMet
                },
            ));
            report.push(EstimateEntry::new(
                "prop:riviereform:contraction",
                dec.contraction_rate,
                1.0,
                dec.contraction_rate,
                0.999,
                dec.contraction_rate < 0.999,
                GateStatus::NotApplicable,
            ));
            report.push(EstimateEntry::measured(
                "prop:riviereform:residual",
                dec.residual,
                1.0,
                GateStatus::NotApplicable,
            ));
        }
        Err(Error::ContractionFailure(rate)) => {
            report.push(EstimateEntry::new(
                "prop:riviereform:contraction",
                rate,
                1.0,
                rate,
                0.999,
                false,
                GateStatus::NotMet,
            ));
        }
        Err(e) => return Err(e),
    }

    if cfg.include_dbar {
        let om = omega_from_frame(disk, &frame);
        match dbar_frame(disk, &om, m, &DbarOpts { eps1: cfg.gates.eps1, ..Default::default() }) {
            Ok(db) => {
                report.push(EstimateEntry::new(
                    "cl:createsolution:a_minus_i",
                    db.a_minus_i_norm,
                    1.0 / 3.0,
                    db.a_minus_i_norm * 3.0,
                    1.0,
                    db.a_minus_i_norm <= 1.0 / 3.0 || !db.gate_met,
                    if db.gate_met { GateStatus::Met } else { GateStatus::NotMet },
                ));
                report.push(EstimateEntry::measured(
                    "cl:createsolution:contraction",
                    db.contraction,
                    1.0,
                    if db.gate_met { GateStatus::Met } else { GateStatus::NotMet },
                ));
                if let Ok(fac) = holomorphic_factor(disk, &sol, &frame, &db) {
                    report.push(EstimateEntry::measured(
                        "cl:alphazbaromegaalpha:sup_ratio",
                        fac.sup_ratio,
                        1.0,
                        GateStatus::NotApplicable,
                    ));
                }
            }
            Err(Error::ContractionFailure(rate)) => {
                report.push(EstimateEntry::new(
                    "cl:createsolution:contraction",
                    rate,
                    1.0,
                    rate,
                    1.0,
                    false,
                    GateStatus::NotMet,
                ));
            }
            Err(e) => return Err(e),
        }
    }

    // Steklov companion for the boundary-trace constant
    let ssol = calibrated_steklov_solve(half, half_ops, &spec, &rng, cfg.energy, &cfg.solve)?;
    for e in boundary_report(half, &ssol).entries {
        report.push(e);
    }
    Ok(report)
}

/// Anchors whose measured constants must be stable across the sweep.
pub const STABILITY_ANCHORS: &[&str] = &[
    "theo:epsregharm1",
    "prop:gauge",
    "prop:riviereform:K",
    "eq:Lpestimate:p2",
    "eq:Lpestimate:p4",
    "eq:Lqestimate:p2",
    "eq:Lqestimate:p4",
    "cl:noneedsmallmassboundary",
];

pub struct SweepOutcome {
    pub reports: Vec<EstimateReport>,
    /// (anchor, max/min ratio, pass).
    pub stability: Vec<(String, f64, bool)>,
    pub failures: Vec<(usize, String)>,
}

/// Run the dimension sweep; instances run concurrently and reports merge in
/// m order, so the output is deterministic.
pub fn dimension_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    let disk = crate::mesh::make_mesh(Domain::Disk, cfg.h)?;
    let disk_ops = Operators::assemble(&disk);
    let half = crate::mesh::make_mesh(Domain::HalfDisk, cfg.h)?;
    let half_ops = Operators::assemble(&half);
    let results = par::run_jobs(&cfg.m_list, |&m| {
        run_sweep_instance(&disk, &disk_ops, &half, &half_ops, m, cfg)
            .map_err(|e| format!("{e}"))
    });
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (m, res) in cfg.m_list.iter().zip(results) {
        match res {
            Ok(r) => reports.push(r),
            Err(e) => failures.push((*m, e)),
        }
    }
    let mut stability = Vec::new();
    for &anchor in STABILITY_ANCHORS {
        let vals: Vec<f64> = reports
            .iter()
            .filter_map(|r| r.get(anchor))
            .map(|e| e.ratio)
            .filter(|v| v.is_finite() && *v > 0.0)
            .collect();
        if vals.len() == reports.len() && !vals.is_empty() {
            let max = vals.iter().cloned().fold(f64::MIN, f64::max);
            let min = vals.iter().cloned().fold(f64::MAX, f64::min);
            let ratio = max / min;
            stability.push((anchor.to_string(), ratio, ratio <= cfg.dim_ratio_cap));
        } else {
            stability.push((anchor.to_string(), f64::INFINITY, false));
        }
    }
    Ok(SweepOutcome { reports, stability, failures })
}

/// Rescaled map `Phi~(z) = Phi(x0 + s0 z)` at the max of
/// `(1-|x|)^2 |∇Phi|^2`, together with the constant `c = 8 a^3 |∇Phi~(0)|^2`
/// used by the monotonicity example.
pub fn rescaled_gradient_density(
    mesh: &DiskMesh,
    sol: &EigenmapSolution,
) -> Result<(Vec<f64>, f64)> {
    let m = sol.phi.m;
    let grads = map_gradients(mesh, &sol.phi);
    let ne = mesh.n_triangles();
    let grad_sq: Vec<f64> = (0..ne)
        .map(|t| {
            let g = &grads[t * m * 2..(t + 1) * m * 2];
            let mut s = 0.0;
            for i in 0..m {
                s += g[i * 2] * g[i * 2] + g[i * 2 + 1] * g[i * 2 + 1];
            }
            s
        })
        .collect();
    // x0 = argmax over admissible nodes
    let mut best = (0usize, 0.0f64);
    let mut nodal = vec![0.0f64; mesh.n_vertices()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for &v in tri {
            nodal[v] = nodal[v].max(grad_sq[t]);
        }
    }
    for v in 0..mesh.n_vertices() {
        let p = mesh.vertices[v];
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        let f = (1.0 - r) * (1.0 - r) * nodal[v];
        if f > best.1 {
            best = (v, f);
        }
    }
    let x0 = mesh.vertices[best.0];
    let s0 = (1.0 - (x0[0] * x0[0] + x0[1] * x0[1]).sqrt()) / 2.0;
    // resample Phi~ on the same mesh and differentiate
    let mut tilde = MapField::zeros(mesh.n_vertices(), m);
    for v in 0..mesh.n_vertices() {
        let p = mesh.vertices[v];
        let q = [x0[0] + s0 * p[0], x0[1] + s0 * p[1]];
        let (t, l) = mesh
            .locate(q)
            .ok_or_else(|| Error::Degenerate(format!("rescale target {q:?} not located")))?;
        let tri = mesh.triangles[t];
        for i in 0..m {
            tilde.data[v * m + i] = l[0] * sol.phi.data[tri[0] * m + i]
                + l[1] * sol.phi.data[tri[1] * m + i]
                + l[2] * sol.phi.data[tri[2] * m + i];
        }
    }
    let gt = map_gradients(mesh, &tilde);
    let density: Vec<f64> = (0..ne)
        .map(|t| {
            let g = &gt[t * m * 2..(t + 1) * m * 2];
            let mut s = 0.0;
            for i in 0..m {
                s += g[i * 2] * g[i * 2] + g[i * 2 + 1] * g[i * 2 + 1];
            }
            s
        })
        .collect();
    // |∇Phi~(0)|^2 from the element nearest the origin
    let mut at0 = (f64::INFINITY, 0.0);
    for t in 0..ne {
        let c = mesh.tri_centroid[t];
        let d = c[0] * c[0] + c[1] * c[1];
        if d < at0.0 {
            at0 = (d, density[t]);
        }
    }
    let alpha = sol.spec.elongation();
    let c = 8.0 * alpha.powi(3) * at0.1;
    Ok((density, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigenmap::{build_solution, pad_solution};
    use crate::mesh::make_mesh;

    fn disk(h: f64) -> (DiskMesh, Operators) {
        let m = make_mesh(Domain::Disk, h).unwrap();
        let ops = Operators::assemble(&m);
        (m, ops)
    }

    fn ring_radii(mesh: &DiskMesh, from: usize) -> Vec<f64> {
        (from..mesh.rings).map(|j| j as f64 / mesh.rings as f64).collect()
    }

    fn circle_eigenmap(mesh: &DiskMesh, lambda: f64, w: [f64; 2]) -> MapField {
        MapField::from_fn(mesh.n_vertices(), 2, |v| {
            let p = mesh.vertices[v];
            let u = w[0] * p[0] + w[1] * p[1];
            vec![u.cos() / lambda.sqrt(), u.sin() / lambda.sqrt()]
        })
    }

    #[test]
    fn monotonicity_constant_density() {
        let (m, ops) = disk(0.1);
        let one = vec![1.0; m.n_vertices()];
        let radii = ring_radii(&m, 3);
        let rep =
            check_monotonicity(&m, &ops, ScalarData::Nodal(&one), 0.0, &radii, 0.02).unwrap();
        assert!(rep.all_pass());
        // g(r) ~ pi for every radius
        for e in rep.entries.iter().filter(|e| e.anchor == "prop:monotonicity") {
            assert!((e.lhs - std::f64::consts::PI).abs() < 0.05);
        }
    }

    #[test]
    fn monotonicity_quadratic_density() {
        // u = |grad Re z^2|^2 = 4|z|^2, c = 0: g(r) = 2 pi r^2, increasing
        let (m, ops) = disk(0.1);
        let u: Vec<f64> = m.vertices.iter().map(|p| 4.0 * (p[0] * p[0] + p[1] * p[1])).collect();
        let radii = ring_radii(&m, 3);
        let rep = check_monotonicity(&m, &ops, ScalarData::Nodal(&u), 0.0, &radii, 0.02).unwrap();
        for (k, e) in rep
            .entries
            .iter()
            .filter(|e| e.anchor == "prop:monotonicity")
            .enumerate()
        {
            let r = radii[k + 1];
            assert!((e.lhs - 2.0 * std::f64::consts::PI * r * r).abs() < 0.3 * e.lhs);
            assert!(e.pass);
            assert!(e.ratio > 1.0, "strictly increasing");
        }
    }

    #[test]
    fn monotonicity_rescaled_eigenmap() {
        let (m, ops) = disk(0.05);
        let spec = EllipsoidSpec::new(vec![1.0, 1.0, 4.0]).unwrap();
        let data = MapField::from_fn(m.n_vertices(), 3, |v| {
            let th = m.vertices[v][1].atan2(m.vertices[v][0]);
            spec.proj_p(&vec![th.cos(), th.sin(), 0.3 + 0.1 * (2.0 * th).cos()]).unwrap()
        });
        let sol = solve_interior(&m, &ops, &spec, &data, &SolveOpts::default()).unwrap();
        let (density, c) = rescaled_gradient_density(&m, &sol).unwrap();
        let radii = ring_radii(&m, 6);
        let rep =
            check_monotonicity(&m, &ops, ScalarData::PerElement(&density), c, &radii, 0.02)
                .unwrap();
        for e in rep.entries.iter().filter(|e| e.anchor == "prop:monotonicity") {
            assert!(e.pass, "g dropped by {}", e.ratio);
        }
    }

    #[test]
    fn epsreg_constant_map_all_zero() {
        let (m, ops) = disk(0.15);
        let spec = EllipsoidSpec::new(vec![2.0, 2.0]).unwrap();
        let cmap = MapField::from_fn(m.n_vertices(), 2, |_| vec![1.0 / 2.0f64.sqrt(), 0.0]);
        let sol = build_solution(&m, &ops, &spec, cmap, SolveKind::Interior, 0, true);
        let rep = epsreg_report(&m, &sol, &Gates::default());
        for e in &rep.entries {
            assert!(e.lhs.abs() < 1e-20, "{}: {}", e.anchor, e.lhs);
        }
    }

    #[test]
    fn epsreg_circle_eigenmap_sup_ratio() {
        let (m, ops) = disk(0.05);
        let lambda = 2.0;
        let sol = build_solution(
            &m,
            &ops,
            &EllipsoidSpec::new(vec![lambda, lambda]).unwrap(),
            circle_eigenmap(&m, lambda, [0.4, 0.2]),
            SolveKind::Interior,
            0,
            true,
        );
        let rep = epsreg_report(&m, &sol, &Gates::default());
        let e = rep.get("theo:epsregharm1").unwrap();
        // constant density: sup ratio = 1/pi up to the 2h sampling margin
        let want = 1.0 / std::f64::consts::PI;
        assert!((e.ratio - want).abs() < 0.12 * want, "ratio {} vs {}", e.ratio, want);
        assert!(rep.get("identity:omega_nu").unwrap().pass);
    }

    #[test]
    fn lp_report_matches_independent_quadrature() {
        let (m, ops) = disk(0.1);
        let lambda = 2.0;
        let w = [0.7, -0.4];
        let sol = build_solution(
            &m,
            &ops,
            &EllipsoidSpec::new(vec![lambda, lambda]).unwrap(),
            circle_eigenmap(&m, lambda, w),
            SolveKind::Interior,
            0,
            true,
        );
        let rep = lp_report(&m, &sol, &Gates::default());
        // independent per-element quadrature of the same closed-form data
        let half = pde::elements_in_disk(&m, [0.0, 0.0], 0.5);
        for &p in &[2.0f64, 4.0] {
            let mut lp = 0.0;
            for i in 0..2 {
                let mut ip = 0.0;
                for &t in &half {
                    let tri = m.triangles[t];
                    let g = &m.tri_grads[t];
                    let mut dx = 0.0;
                    let mut dy = 0.0;
                    for k in 0..3 {
                        let pt = m.vertices[tri[k]];
                        let u = w[0] * pt[0] + w[1] * pt[1];
                        // psi = sqrt(lambda) Phi = (cos u, sin u)
                        let val = if i == 0 { u.cos() } else { u.sin() };
                        dx += val * g[k][0];
                        dy += val * g[k][1];
                    }
                    ip += m.tri_area[t] * (dx * dx + dy * dy).sqrt().powf(2.0 * p);
                }
                lp += ip.powf(1.0 / p);
            }
            let mut psi_energy = 0.0;
            for t in 0..m.n_triangles() {
                let tri = m.triangles[t];
                let g = &m.tri_grads[t];
                for i in 0..2 {
                    let mut dx = 0.0;
                    let mut dy = 0.0;
                    for k in 0..3 {
                        let pt = m.vertices[tri[k]];
                        let u = w[0] * pt[0] + w[1] * pt[1];
                        let val = if i == 0 { u.cos() } else { u.sin() };
                        dx += val * g[k][0];
                        dy += val * g[k][1];
                    }
                    psi_energy += m.tri_area[t] * (dx * dx + dy * dy);
                }
            }
            let e = rep.get(&format!("eq:Lpestimate:p{}", p as u32)).unwrap();
            let want = lp / psi_energy;
            assert!(
                (e.ratio - want).abs() <= 1e-10 * want.abs(),
                "p={p}: {} vs {}",
                e.ratio,
                want
            );
        }
    }

    #[test]
    fn spectral_consistency_interior_and_steklov() {
        let (m, ops) = disk(0.05);
        let lambda = 2.0;
        let exact = circle_eigenmap(&m, lambda, [1.0, 0.5]);
        let spec = EllipsoidSpec::new(vec![lambda, lambda]).unwrap();
        let sol = solve_interior(&m, &ops, &spec, &exact, &SolveOpts::default()).unwrap();
        let rep = spectral_consistency(&m, &ops, &sol).unwrap();
        for e in &rep.entries {
            assert!(e.pass, "{}: {}", e.anchor, e.ratio);
        }

        // Steklov z/sqrt(s): coordinates are Steklov eigenfunctions with
        // sigma = s under the weight e^u = 1/s
        let s = 2.0f64;
        let exact = MapField::from_fn(m.n_vertices(), 2, |v| {
            vec![m.vertices[v][0] / s.sqrt(), m.vertices[v][1] / s.sqrt()]
        });
        let ssol = crate::eigenmap::solve_free_boundary(
            &m,
            &ops,
            &EllipsoidSpec::new(vec![s, s]).unwrap(),
            None,
            Some(&exact),
            &SolveOpts { solve_tol: 1e-6, ..Default::default() },
        )
        .unwrap();
        let rep = spectral_consistency(&m, &ops, &ssol).unwrap();
        for e in rep.entries.iter().filter(|e| e.anchor.starts_with("theo1:coordinate")) {
            assert!(e.ratio <= 5e-2, "{}: {}", e.anchor, e.ratio);
        }
    }

    #[test]
    fn steklov_spectral_weight_uses_flat_boundary() {
        // spectral consistency of a Steklov solve needs the full-circle
        // boundary weight when the whole boundary is free; the disk case
        // stores e^u on circle nodes, handled through the Flat tag only on
        // the half-disk. Build a half-disk instance and check residuals.
        let mh = make_mesh(Domain::HalfDisk, 0.1).unwrap();
        let oh = Operators::assemble(&mh);
        let spec = EllipsoidSpec::new(vec![1.5, 1.5]).unwrap();
        let rng = CounterRng::new(3, 1);
        let sol =
            calibrated_steklov_solve(&mh, &oh, &spec, &rng, 0.05, &SolveOpts::default()).unwrap();
        let rep = spectral_consistency(&mh, &oh, &sol).unwrap();
        let worst = rep
            .entries
            .iter()
            .filter(|e| e.anchor.starts_with("theo1:coordinate"))
            .map(|e| e.ratio)
            .fold(0.0f64, f64::max);
        assert!(worst.is_finite());
    }

    #[test]
    fn padding_leaves_reports_invariant() {
        let (m, ops) = disk(0.1);
        let lambda = 1.0;
        let exact = circle_eigenmap(&m, lambda, [0.8, 0.3]);
        let spec = EllipsoidSpec::new(vec![lambda, lambda]).unwrap();
        let sol = solve_interior(&m, &ops, &spec, &exact, &SolveOpts::default()).unwrap();
        let padded = pad_solution(&m, &ops, &sol, 6).unwrap();
        let g = Gates::default();
        let r1 = epsreg_report(&m, &sol, &g);
        let r2 = epsreg_report(&m, &padded, &g);
        for (a, b) in r1.entries.iter().zip(&r2.entries) {
            assert_eq!(a.anchor, b.anchor);
            assert!(
                (a.ratio - b.ratio).abs() <= 1e-12 * a.ratio.abs().max(1.0),
                "{}: {} vs {}",
                a.anchor,
                a.ratio,
                b.ratio
            );
        }
        let l1 = lp_report(&m, &sol, &g);
        let l2 = lp_report(&m, &padded, &g);
        for (a, b) in l1.entries.iter().zip(&l2.entries) {
            assert!((a.ratio - b.ratio).abs() <= 1e-12 * a.ratio.abs().max(1.0));
        }
    }

    #[test]
    fn small_sweep_runs_and_reports() {
        let cfg = SweepConfig {
            m_list: vec![2, 3],
            alpha: 1.2,
            energy: 0.05,
            h: 0.12,
            seed: 5,
            include_dbar: false,
            dim_ratio_cap: 4.0,
            gates: Gates::default(),
            solve: SolveOpts { solve_tol: 1e-6, ..Default::default() },
        };
        let out = dimension_sweep(&cfg).unwrap();
        assert!(out.failures.is_empty(), "{:?}", out.failures);
        assert_eq!(out.reports.len(), 2);
        for r in &out.reports {
            assert!(r.get("theo:epsregharm1").is_some());
            assert!(r.get("prop:gauge").is_some());
            assert!(r.get("cl:noneedsmallmassboundary").is_some());
        }
        for (anchor, ratio, _) in &out.stability {
            assert!(ratio.is_finite(), "unstable anchor {anchor}");
        }
    }
}
