//! Harmonic eigenmap solvers: interior constrained minimization and the
//! free-boundary (Steklov) alternating scheme, plus derived fields, the
//! symmetrized extension across the flat boundary, and the weighted identity
//! check.
//!
//! Interior problem: minimize the discrete Dirichlet energy over nodal maps
//! pinned to the ellipsoid (`|Phi_v|_L = 1` at every node) with Dirichlet
//! boundary values, by projected gradient descent: lumped-mass gradient,
//! nodal projection `proj_p` after every step, Armijo backtracking with
//! factor 1/2 from the heat-flow scale `tau0 = h^2/4`.
//!
//! Free-boundary problem: alternate an exact discrete-harmonic solve given
//! the boundary trace with a projected gradient step of the trace along the
//! boundary energy gradient, at the boundary scale `tau0 = h/4`.

use crate::ellipsoid::EllipsoidSpec;
use crate::mesh::{DiskMesh, Operators, VertexTag};
use crate::pde;
use crate::sparse::{self, CgOpts};
use crate::{par, Error, Result};

/// Nodal map with `m` components per vertex, node-major.
#[derive(Clone, Debug)]
pub struct MapField {
    pub m: usize,
    pub data: Vec<f64>,
}

impl MapField {
    pub fn zeros(n: usize, m: usize) -> Self {
        MapField { m, data: vec![0.0; n * m] }
    }

    pub fn from_fn(n: usize, m: usize, f: impl Fn(usize) -> Vec<f64>) -> Self {
        let mut data = Vec::with_capacity(n * m);
        for v in 0..n {
            let row = f(v);
            assert_eq!(row.len(), m);
            data.extend(row);
        }
        MapField { m, data }
    }

    pub fn n_nodes(&self) -> usize {
        self.data.len() / self.m
    }

    pub fn node(&self, v: usize) -> &[f64] {
        &self.data[v * self.m..(v + 1) * self.m]
    }

    pub fn node_mut(&mut self, v: usize) -> &mut [f64] {
        &mut self.data[v * self.m..(v + 1) * self.m]
    }

    pub fn coordinate(&self, c: usize) -> Vec<f64> {
        (0..self.n_nodes()).map(|v| self.data[v * self.m + c]).collect()
    }

    /// Zero-pad to `new_m` components.
    pub fn pad(&self, new_m: usize) -> MapField {
        assert!(new_m >= self.m);
        let n = self.n_nodes();
        let mut out = MapField::zeros(n, new_m);
        for v in 0..n {
            out.data[v * new_m..v * new_m + self.m].copy_from_slice(self.node(v));
        }
        out
    }
}

/// Per-element gradients of all coordinates, layout `[e][i][c]`.
pub fn map_gradients(mesh: &DiskMesh, phi: &MapField) -> Vec<f64> {
    let m = phi.m;
    let rows = par::map_indexed(mesh.n_triangles(), |t| {
        let tri = mesh.triangles[t];
        let g = &mesh.tri_grads[t];
        let mut out = vec![0.0; m * 2];
        for k in 0..3 {
            let vals = phi.node(tri[k]);
            for i in 0..m {
                out[i * 2] += vals[i] * g[k][0];
                out[i * 2 + 1] += vals[i] * g[k][1];
            }
        }
        out
    });
    let mut flat = Vec::with_capacity(mesh.n_triangles() * m * 2);
    for r in rows {
        flat.extend(r);
    }
    flat
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOpts {
    pub solve_tol: f64,
    pub max_iters: usize,
    pub constraint_tol: f64,
}

impl Default for SolveOpts {
    fn default() -> Self {
        SolveOpts { solve_tol: 1e-7, max_iters: 100_000, constraint_tol: 1e-9 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveKind {
    Interior,
    FreeBoundary,
}

/// Antisymmetric potential `Omega = nu ∇nu^T - ∇nu nu^T` as factored
/// per-element data (element-mean normal and its gradient).
#[derive(Clone, Debug)]
pub struct OmegaField {
    pub m: usize,
    /// Element means of the nodal normal, `[e][i]`.
    pub nu_bar: Vec<f64>,
    /// Per-element gradient of the normal, `[e][i][c]`.
    pub grad_nu: Vec<f64>,
}

impl OmegaField {
    /// Entry `Omega_{ij}` of element `e` (a 2-vector).
    pub fn entry(&self, e: usize, i: usize, j: usize) -> [f64; 2] {
        let m = self.m;
        let nb = &self.nu_bar[e * m..(e + 1) * m];
        let g = &self.grad_nu[e * m * 2..(e + 1) * m * 2];
        [
            nb[i] * g[j * 2] - nb[j] * g[i * 2],
            nb[i] * g[j * 2 + 1] - nb[j] * g[i * 2 + 1],
        ]
    }

    /// `|Omega_e|^2 = sum_ij |Omega_ij|^2` from the factored form.
    pub fn norm_sq_elem(&self, e: usize) -> f64 {
        let m = self.m;
        let nb = &self.nu_bar[e * m..(e + 1) * m];
        let g = &self.grad_nu[e * m * 2..(e + 1) * m * 2];
        let nsq: f64 = nb.iter().map(|v| v * v).sum();
        let mut gsq = 0.0;
        let mut w = [0.0f64; 2];
        for i in 0..m {
            gsq += g[i * 2] * g[i * 2] + g[i * 2 + 1] * g[i * 2 + 1];
            w[0] += nb[i] * g[i * 2];
            w[1] += nb[i] * g[i * 2 + 1];
        }
        2.0 * (nsq * gsq - (w[0] * w[0] + w[1] * w[1]))
    }
}

#[derive(Clone, Debug)]
pub struct EigenmapSolution {
    pub kind: SolveKind,
    pub spec: EllipsoidSpec,
    pub phi: MapField,
    /// Conformal factor per element, `|∇Phi|^2_L / |L Phi|^2`.
    pub beta_elem: Vec<f64>,
    /// Nodal multiplier version of the conformal factor.
    pub beta_node: Vec<f64>,
    /// Nodal unit normal `L Phi / |L Phi|`.
    pub nu: MapField,
    pub omega: OmegaField,
    pub dirichlet_energy: f64,
    /// `int |Omega|^2` at vertex quadrature (nodal normals exactly unit).
    pub omega_energy: f64,
    /// Matching tangential quadrature of `int |∇nu|^2` (half the above up to
    /// roundoff); `nu_energy_raw` is the plain elementwise value.
    pub nu_energy_tangential: f64,
    pub nu_energy_raw: f64,
    pub residual_interior: f64,
    pub residual_boundary: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Steklov density `e^u = dnu Phi . Phi` at free-boundary nodes.
    pub e_u: Vec<f64>,
    pub e_u_degenerate: bool,
}

fn block_energy(k: &sparse::Csr, phi: &MapField) -> f64 {
    let kx = k.mul_block(&phi.data, phi.m);
    0.5 * sparse::dot(&phi.data, &kx)
}

/// Tangential part of the nodal residual `r_v` against the constraint
/// direction `L Phi_v`; returns the squared `M^{-1}`-weighted norm.
fn tangential_residual(
    spec: &EllipsoidSpec,
    phi: &MapField,
    k_phi: &[f64],
    weights: &[f64],
    active: &[bool],
    rho: &mut [f64],
) -> f64 {
    let m = phi.m;
    let mut acc = 0.0;
    for v in 0..phi.n_nodes() {
        let row = &mut rho[v * m..(v + 1) * m];
        if !active[v] {
            row.fill(0.0);
            continue;
        }
        let vals = phi.node(v);
        let r = &k_phi[v * m..(v + 1) * m];
        let mut u: Vec<f64> = spec.lambdas().iter().zip(vals).map(|(&l, &x)| l * x).collect();
        let un: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in u.iter_mut() {
            *x /= un;
        }
        let ru: f64 = r.iter().zip(&u).map(|(a, b)| a * b).sum();
        let mut sq = 0.0;
        for i in 0..m {
            row[i] = r[i] - ru * u[i];
            sq += row[i] * row[i];
        }
        acc += sq / weights[v];
    }
    acc
}

/// Interior Laplace eigenmap: minimize the Dirichlet energy over nodal maps
/// on `E_L` with fixed boundary values.
pub fn solve_interior(
    mesh: &DiskMesh,
    ops: &Operators,
    spec: &EllipsoidSpec,
    boundary_data: &MapField,
    opts: &SolveOpts,
) -> Result<EigenmapSolution> {
    let n = mesh.n_vertices();
    let m = spec.m();
    if boundary_data.m != m || boundary_data.n_nodes() != n {
        return Err(Error::DimensionMismatch { expected: n * m, got: boundary_data.data.len() });
    }
    for v in 0..n {
        if mesh.is_boundary(v) {
            let dev = (spec.lambda_norm_sq_unchecked(boundary_data.node(v)) - 1.0).abs();
            if dev > 100.0 * opts.constraint_tol {
                return Err(Error::BoundaryData(dev));
            }
        }
    }

    // harmonic extension warm start, then nodal projection
    let fixed: Vec<bool> = (0..n).map(|v| mesh.is_boundary(v)).collect();
    let mut phi = MapField::zeros(n, m);
    let cg = CgOpts { rel_tol: pde::LIN_TOL, max_iters: 50_000 };
    for c in 0..m {
        let data = boundary_data.coordinate(c);
        let (sol, _) = sparse::cg_constrained(&ops.stiffness, &vec![0.0; n], &fixed, &data, cg)?;
        for v in 0..n {
            phi.data[v * m + c] = sol[v];
        }
    }
    for v in 0..n {
        if !fixed[v] {
            let p = spec.proj_p(phi.node(v))?;
            phi.node_mut(v).copy_from_slice(&p);
        }
    }

    let interior: Vec<bool> = fixed.iter().map(|f| !f).collect();
    let tau0 = mesh.h * mesh.h / 4.0;
    let mut tau = tau0;
    let mut energy = block_energy(&ops.stiffness, &phi);
    let mut rho = vec![0.0; n * m];
    let mut iterations = 0;
    let mut converged = false;
    let mut residual = f64::INFINITY;
    let mut stalled = false;
    while iterations < opts.max_iters {
        let k_phi = ops.stiffness.mul_block(&phi.data, m);
        let sq = tangential_residual(spec, &phi, &k_phi, &ops.lumped_mass, &interior, &mut rho);
        residual = sq.sqrt();
        if residual <= opts.solve_tol {
            converged = true;
            break;
        }
        // Below the measurement resolution of the energy, Armijo cannot
        // certify decrease; take plain projected-gradient steps at the
        // stable scale instead (tau0/2 halves the top-mode factor to zero).
        let noise = 1e-12 * (energy.abs() + 1.0);
        if 1e-4 * tau * sq < noise {
            let step = tau0 / 2.0;
            for v in 0..n {
                if !interior[v] {
                    continue;
                }
                let w = step / ops.lumped_mass[v];
                for i in 0..m {
                    phi.data[v * m + i] -= w * rho[v * m + i];
                }
                let p = spec.proj_p(phi.node(v))?;
                phi.node_mut(v).copy_from_slice(&p);
            }
            iterations += 1;
            continue;
        }
        // projected gradient trial with Armijo backtracking (factor 1/2)
        let mut accepted = false;
        while !accepted {
            let mut trial = phi.clone();
            for v in 0..n {
                if !interior[v] {
                    continue;
                }
                let w = tau / ops.lumped_mass[v];
                for i in 0..m {
                    trial.data[v * m + i] -= w * rho[v * m + i];
                }
                let p = spec.proj_p(trial.node(v))?;
                trial.node_mut(v).copy_from_slice(&p);
            }
            let e_new = block_energy(&ops.stiffness, &trial);
            if e_new <= energy - 1e-4 * tau * sq + noise {
                phi = trial;
                energy = e_new;
                tau = (tau * 1.1).min(100.0 * tau0);
                accepted = true;
            } else {
                tau *= 0.5;
                if tau < 1e-12 * tau0 {
                    stalled = true;
                    break;
                }
            }
        }
        if stalled {
            break;
        }
        iterations += 1;
    }

    let mut sol = build_solution(
        mesh,
        ops,
        spec,
        phi,
        SolveKind::Interior,
        iterations,
        converged && !stalled,
    );
    sol.residual_interior = residual;
    Ok(sol)
}

/// Free-boundary (Steklov) eigenmap. `arc_data` fixes the circle-tagged
/// nodes; `init` seeds the free trace, falling back to the natural-boundary
/// harmonic extension of the arc data.
pub fn solve_free_boundary(
    mesh: &DiskMesh,
    ops: &Operators,
    spec: &EllipsoidSpec,
    arc_data: Option<&MapField>,
    init: Option<&MapField>,
    opts: &SolveOpts,
) -> Result<EigenmapSolution> {
    let n = mesh.n_vertices();
    let m = spec.m();
    // free constrained nodes: flat tag, or the whole boundary when no arc data
    let free_bd: Vec<bool> = (0..n)
        .map(|v| match mesh.vertex_tag[v] {
            VertexTag::Flat => true,
            VertexTag::Circle => arc_data.is_none(),
            VertexTag::Interior => false,
        })
        .collect();
    let fixed_bd: Vec<bool> = (0..n)
        .map(|v| mesh.vertex_tag[v] == VertexTag::Circle && arc_data.is_some())
        .collect();
    if !free_bd.iter().any(|&f| f) {
        return Err(Error::BadParam("free-boundary solve without free boundary nodes".into()));
    }

    // boundary weights on the free part
    let bl: Vec<f64> = (0..n)
        .map(|v| {
            let w = ops.boundary_lumped_flat[v]
                + if arc_data.is_none() { ops.boundary_lumped_circle[v] } else { 0.0 };
            if w > 0.0 {
                w
            } else {
                1.0
            }
        })
        .collect();

    // arc data pins an interior cut of the original surface; it is not
    // subject to the ellipsoid constraint (only the flat part maps to E_s)
    let mut phi = MapField::zeros(n, m);
    if let Some(a) = arc_data {
        for v in 0..n {
            if fixed_bd[v] {
                phi.node_mut(v).copy_from_slice(a.node(v));
            }
        }
    }
    match init {
        Some(g) => {
            for v in 0..n {
                if free_bd[v] {
                    phi.node_mut(v).copy_from_slice(g.node(v));
                }
            }
        }
        None => {
            let cg = CgOpts { rel_tol: pde::LIN_TOL, max_iters: 50_000 };
            for c in 0..m {
                let data = phi.coordinate(c);
                let (sol, _) =
                    sparse::cg_constrained(&ops.stiffness, &vec![0.0; n], &fixed_bd, &data, cg)?;
                for v in 0..n {
                    phi.data[v * m + c] = sol[v];
                }
            }
        }
    }
    // project the free trace onto the ellipsoid; a vanishing initial value
    // gets a deterministic base point
    for v in 0..n {
        if free_bd[v] {
            if spec.lambda_norm_sq_unchecked(phi.node(v)) < 1e-12 {
                phi.node_mut(v)[0] = 1.0 / spec.lambdas()[0].sqrt();
            }
            let p = spec.proj_p(phi.node(v))?;
            phi.node_mut(v).copy_from_slice(&p);
        }
    }

    let bd_all: Vec<bool> = (0..n).map(|v| free_bd[v] || fixed_bd[v]).collect();
    let harmonic = |phi: &mut MapField| -> Result<()> {
        let cg = CgOpts { rel_tol: pde::LIN_TOL, max_iters: 50_000 };
        for c in 0..m {
            let data = phi.coordinate(c);
            let (sol, _) =
                sparse::cg_constrained(&ops.stiffness, &vec![0.0; n], &bd_all, &data, cg)?;
            for v in 0..n {
                phi.data[v * m + c] = sol[v];
            }
        }
        Ok(())
    };
    harmonic(&mut phi)?;

    let tau0 = mesh.h / 4.0;
    let mut tau = tau0;
    let mut energy = block_energy(&ops.stiffness, &phi);
    let mut rho = vec![0.0; n * m];
    let mut iterations = 0;
    let mut converged = false;
    let mut residual = f64::INFINITY;
    let mut stalled = false;
    while iterations < opts.max_iters {
        let k_phi = ops.stiffness.mul_block(&phi.data, m);
        let sq = tangential_residual(spec, &phi, &k_phi, &bl, &free_bd, &mut rho);
        residual = sq.sqrt();
        if residual <= opts.solve_tol {
            converged = true;
            break;
        }
        let noise = 1e-12 * (energy.abs() + 1.0);
        if 1e-4 * tau * sq < noise {
            let step = tau0 / 2.0;
            for v in 0..n {
                if !free_bd[v] {
                    continue;
                }
                let w = step / bl[v];
                for i in 0..m {
                    phi.data[v * m + i] -= w * rho[v * m + i];
                }
                let p = spec.proj_p(phi.node(v))?;
                phi.node_mut(v).copy_from_slice(&p);
            }
            harmonic(&mut phi)?;
            iterations += 1;
            continue;
        }
        let mut accepted = false;
        while !accepted {
            let mut trial = phi.clone();
            for v in 0..n {
                if !free_bd[v] {
                    continue;
                }
                let w = tau / bl[v];
                for i in 0..m {
                    trial.data[v * m + i] -= w * rho[v * m + i];
                }
                let p = spec.proj_p(trial.node(v))?;
                trial.node_mut(v).copy_from_slice(&p);
            }
            harmonic(&mut trial)?;
            let e_new = block_energy(&ops.stiffness, &trial);
            if e_new <= energy - 1e-4 * tau * sq + noise {
                phi = trial;
                energy = e_new;
                tau = (tau * 1.1).min(100.0 * tau0);
                accepted = true;
            } else {
                tau *= 0.5;
                if tau < 1e-12 * tau0 {
                    stalled = true;
                    break;
                }
            }
        }
        if stalled {
            break;
        }
        iterations += 1;
    }

    let k_phi = ops.stiffness.mul_block(&phi.data, m);
    let mut e_u = vec![0.0; n];
    let mut degenerate = false;
    for v in 0..n {
        if free_bd[v] {
            let r = &k_phi[v * m..(v + 1) * m];
            let dot: f64 = r.iter().zip(phi.node(v)).map(|(a, b)| a * b).sum();
            e_u[v] = dot / bl[v];
            if e_u[v] <= 0.0 {
                degenerate = true;
            }
        }
    }
    let res_int = par::sum_indexed(n, |v| {
        if bd_all[v] {
            return 0.0;
        }
        let r = &k_phi[v * m..(v + 1) * m];
        r.iter().map(|x| x * x).sum::<f64>() / ops.lumped_mass[v]
    })
    .sqrt();

    let mut sol = build_solution(
        mesh,
        ops,
        spec,
        phi,
        SolveKind::FreeBoundary,
        iterations,
        converged && !stalled,
    );
    sol.residual_boundary = residual;
    sol.residual_interior = res_int;
    sol.e_u = e_u;
    sol.e_u_degenerate = degenerate;
    Ok(sol)
}

/// Populate the derived fields of a solution: beta, nu, Omega, energies.
/// Also the entry point for rebuilding a padded solution through the same
/// code paths.
pub fn build_solution(
    mesh: &DiskMesh,
    ops: &Operators,
    spec: &EllipsoidSpec,
    phi: MapField,
    kind: SolveKind,
    iterations: usize,
    converged: bool,
) -> EigenmapSolution {
    let n = mesh.n_vertices();
    let ne = mesh.n_triangles();
    let m = spec.m();
    let grads = map_gradients(mesh, &phi);
    let lam = spec.lambdas();

    let beta_elem: Vec<f64> = (0..ne)
        .map(|t| {
            let tri = mesh.triangles[t];
            let mut grad_l = 0.0;
            for i in 0..m {
                let gx = grads[(t * m + i) * 2];
                let gy = grads[(t * m + i) * 2 + 1];
                grad_l += lam[i] * (gx * gx + gy * gy);
            }
            let mut lphi_sq = 0.0;
            for i in 0..m {
                let mean = (phi.data[tri[0] * m + i]
                    + phi.data[tri[1] * m + i]
                    + phi.data[tri[2] * m + i])
                    / 3.0;
                lphi_sq += (lam[i] * mean) * (lam[i] * mean);
            }
            grad_l / lphi_sq.max(1e-300)
        })
        .collect();

    // nodal multiplier beta: K Phi = mL beta L Phi at interior nodes
    let k_phi = ops.stiffness.mul_block(&phi.data, m);
    let beta_node: Vec<f64> = (0..n)
        .map(|v| {
            let r = &k_phi[v * m..(v + 1) * m];
            let lphi: Vec<f64> = lam.iter().zip(phi.node(v)).map(|(&l, &x)| l * x).collect();
            let nsq: f64 = lphi.iter().map(|x| x * x).sum();
            let dot: f64 = r.iter().zip(&lphi).map(|(a, b)| a * b).sum();
            dot / (ops.lumped_mass[v] * nsq.max(1e-300))
        })
        .collect();

    let nu = MapField::from_fn(n, m, |v| {
        let mut u: Vec<f64> = lam.iter().zip(phi.node(v)).map(|(&l, &x)| l * x).collect();
        let un: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in u.iter_mut() {
            *x /= un.max(1e-300);
        }
        u
    });
    let grad_nu = map_gradients(mesh, &nu);
    let nu_bar: Vec<f64> = {
        let mut nb = vec![0.0; ne * m];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for i in 0..m {
                nb[t * m + i] = (nu.data[tri[0] * m + i]
                    + nu.data[tri[1] * m + i]
                    + nu.data[tri[2] * m + i])
                    / 3.0;
            }
        }
        nb
    };

    // vertex-quadrature energies: |Omega|^2 summed entrywise (independent
    // loop) and the tangential |∇nu|^2 via |G|^2 - |G^T nu_a|^2
    let omega_energy = par::sum_indexed(ne, |t| {
        let tri = mesh.triangles[t];
        let g = &grad_nu[t * m * 2..(t + 1) * m * 2];
        let mut acc = 0.0;
        for &a in &tri {
            let nva = &nu.data[a * m..(a + 1) * m];
            for i in 0..m {
                for j in 0..m {
                    let ox = nva[i] * g[j * 2] - nva[j] * g[i * 2];
                    let oy = nva[i] * g[j * 2 + 1] - nva[j] * g[i * 2 + 1];
                    acc += ox * ox + oy * oy;
                }
            }
        }
        mesh.tri_area[t] * acc / 3.0
    });
    let nu_energy_tangential = par::sum_indexed(ne, |t| {
        let tri = mesh.triangles[t];
        let g = &grad_nu[t * m * 2..(t + 1) * m * 2];
        let mut gsq = 0.0;
        for i in 0..m {
            gsq += g[i * 2] * g[i * 2] + g[i * 2 + 1] * g[i * 2 + 1];
        }
        let mut acc = 0.0;
        for &a in &tri {
            let nva = &nu.data[a * m..(a + 1) * m];
            let mut w = [0.0f64; 2];
            for i in 0..m {
                w[0] += nva[i] * g[i * 2];
                w[1] += nva[i] * g[i * 2 + 1];
            }
            acc += gsq - (w[0] * w[0] + w[1] * w[1]);
        }
        mesh.tri_area[t] * acc / 3.0
    });
    let nu_energy_raw = par::sum_indexed(ne, |t| {
        let g = &grad_nu[t * m * 2..(t + 1) * m * 2];
        let mut gsq = 0.0;
        for i in 0..m {
            gsq += g[i * 2] * g[i * 2] + g[i * 2 + 1] * g[i * 2 + 1];
        }
        mesh.tri_area[t] * gsq
    });

    let dirichlet_energy = 0.5
        * par::sum_indexed(ne, |t| {
            let g = &grads[t * m * 2..(t + 1) * m * 2];
            let mut gsq = 0.0;
            for i in 0..m {
                gsq += g[i * 2] * g[i * 2] + g[i * 2 + 1] * g[i * 2 + 1];
            }
            mesh.tri_area[t] * gsq
        });

    EigenmapSolution {
        kind,
        spec: spec.clone(),
        phi,
        beta_elem,
        beta_node,
        nu,
        omega: OmegaField { m, nu_bar, grad_nu },
        dirichlet_energy,
        omega_energy,
        nu_energy_tangential,
        nu_energy_raw,
        residual_interior: f64::NAN,
        residual_boundary: f64::NAN,
        iterations,
        converged,
        e_u: vec![0.0; n],
        e_u_degenerate: false,
    }
}

/// Zero-pad a solution into a higher-dimensional target (extra semi-axes 1),
/// recomputing every derived field through the ordinary code paths.
pub fn pad_solution(
    mesh: &DiskMesh,
    ops: &Operators,
    sol: &EigenmapSolution,
    new_m: usize,
) -> Result<EigenmapSolution> {
    let mut lam = sol.spec.lambdas().to_vec();
    lam.resize(new_m, 1.0);
    let spec = EllipsoidSpec::new(lam)?;
    let phi = sol.phi.pad(new_m);
    let mut out = build_solution(mesh, ops, &spec, phi, sol.kind, sol.iterations, sol.converged);
    out.residual_interior = sol.residual_interior;
    out.residual_boundary = sol.residual_boundary;
    out.e_u = sol.e_u.clone();
    out.e_u_degenerate = sol.e_u_degenerate;
    Ok(out)
}

/// Weak-form residual of the Riviere equation `ΔPhi = Omega . ∇Phi` against
/// interior hat functions, relative to the energy scale. Discretization
/// limits this to O(h^2); it is a refinement diagnostic, not a solver
/// tolerance.
pub fn riviere_weak_residual(mesh: &DiskMesh, ops: &Operators, sol: &EigenmapSolution) -> f64 {
    let n = mesh.n_vertices();
    let m = sol.phi.m;
    let grads = map_gradients(mesh, &sol.phi);
    let k_phi = ops.stiffness.mul_block(&sol.phi.data, m);
    let mut load = vec![0.0; n * m];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let w = mesh.tri_area[t] / 3.0;
        let nb = &sol.omega.nu_bar[t * m..(t + 1) * m];
        let gn = &sol.omega.grad_nu[t * m * 2..(t + 1) * m * 2];
        let g = &grads[t * m * 2..(t + 1) * m * 2];
        // (Omega ∇Phi)_i = nu_i <∇nu, ∇Phi> - (sum_j nu_j ∇Phi_j) . ∇nu_i
        let mut inner = 0.0;
        let mut nphi = [0.0f64; 2];
        for j in 0..m {
            inner += gn[j * 2] * g[j * 2] + gn[j * 2 + 1] * g[j * 2 + 1];
            nphi[0] += nb[j] * g[j * 2];
            nphi[1] += nb[j] * g[j * 2 + 1];
        }
        for i in 0..m {
            let val = nb[i] * inner - (nphi[0] * gn[i * 2] + nphi[1] * gn[i * 2 + 1]);
            for &v in tri {
                load[v * m + i] += w * val;
            }
        }
    }
    let num = par::sum_indexed(n, |v| {
        if mesh.is_boundary(v) {
            return 0.0;
        }
        let mut sq = 0.0;
        for i in 0..m {
            let r = k_phi[v * m + i] - load[v * m + i];
            sq += r * r;
        }
        sq / ops.lumped_mass[v]
    })
    .sqrt();
    num / (2.0 * sol.dirichlet_energy).max(1e-300)
}

pub struct WeightedIdentity {
    pub lhs: f64,
    pub rhs: f64,
    pub relative_gap: f64,
}

/// Both sides of the weighted identity
/// `1/2 int f |Omega~|^2 + int |∇f|^2 / f = int beta |L Psi|^2 / |Psi|_L`
/// for `Psi = L^{1/2} Phi`, `f = |Psi|_L`, by element quadrature. `∇f` is
/// the P1 derivative of the nodal `f`, so the gap measures discretization.
pub fn weighted_identity_check(
    mesh: &DiskMesh,
    sol: &EigenmapSolution,
) -> Result<WeightedIdentity> {
    let m = sol.phi.m;
    let lam = sol.spec.lambdas();
    let n = mesh.n_vertices();
    let sqrt_lam: Vec<f64> = lam.iter().map(|l| l.sqrt()).collect();
    let psi = MapField::from_fn(n, m, |v| {
        sol.phi.node(v).iter().zip(&sqrt_lam).map(|(&x, &s)| s * x).collect()
    });
    let f_nodal: Vec<f64> = (0..n)
        .map(|v| {
            psi.node(v)
                .iter()
                .zip(lam)
                .map(|(&x, &l)| l * x * x)
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let grad_f = pde::differentiate(mesh, &f_nodal);
    let gpsi = map_gradients(mesh, &psi);
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let a = mesh.tri_area[t];
        let mut psibar = vec![0.0; m];
        for i in 0..m {
            psibar[i] = (psi.data[tri[0] * m + i]
                + psi.data[tri[1] * m + i]
                + psi.data[tri[2] * m + i])
                / 3.0;
        }
        let fbar: f64 = psibar
            .iter()
            .zip(lam)
            .map(|(&x, &l)| l * x * x)
            .sum::<f64>()
            .sqrt();
        if fbar < 1e-12 {
            return Err(Error::Degenerate("f below 1e-12".into()));
        }
        let g = &gpsi[t * m * 2..(t + 1) * m * 2];
        // |Omega~|^2 = 2 (|L Psi|^2 |∇Psi|^2 - |sum_i l_i psi_i ∇psi_i|^2) / f^4
        let mut lpsi_sq = 0.0;
        let mut gsq = 0.0;
        let mut cross = [0.0f64; 2];
        for i in 0..m {
            let li = lam[i] * psibar[i];
            lpsi_sq += li * li;
            gsq += g[i * 2] * g[i * 2] + g[i * 2 + 1] * g[i * 2 + 1];
            cross[0] += li * g[i * 2];
            cross[1] += li * g[i * 2 + 1];
        }
        let f2 = fbar * fbar;
        let omega_t_sq =
            2.0 * (lpsi_sq * gsq - (cross[0] * cross[0] + cross[1] * cross[1])) / (f2 * f2);
        let gradf_sq = grad_f[t][0] * grad_f[t][0] + grad_f[t][1] * grad_f[t][1];
        lhs += a * (0.5 * fbar * omega_t_sq + gradf_sq / fbar);
        let beta = gsq / f2;
        rhs += a * beta * lpsi_sq / fbar;
    }
    let gap = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300);
    Ok(WeightedIdentity { lhs, rhs, relative_gap: gap })
}

pub struct Extension {
    pub full_mesh: DiskMesh,
    pub full_ops: Operators,
    pub u_hat: MapField,
    /// `u ∘ rho` nodal values (meaningful on the lower half).
    pub pullback: MapField,
    /// `M^{-1}`-weighted weak residual of the extension equation, relative
    /// to twice the energy of the extension.
    pub weak_residual: f64,
    /// Max over lower-half elements of `sum_i |Δu_i|^2 / (K^3 |∇u|^4)`.
    pub step2_ratio_max: f64,
    /// Max nodal mismatch `|s(u) - u|` on the flat boundary.
    pub flat_mismatch: f64,
}

/// Symmetrized extension of a half-disk solution to the full disk:
/// `u` on the upper half, `s ∘ u ∘ rho` below, with `rho(x, y) = (x, -y)`.
pub fn symmetrized_extension(half_mesh: &DiskMesh, sol: &EigenmapSolution) -> Result<Extension> {
    use crate::mesh::{make_mesh, Domain};
    if half_mesh.domain != Domain::HalfDisk {
        return Err(Error::BadParam("symmetrized extension needs a half-disk solution".into()));
    }
    let spec = &sol.spec;
    let m = spec.m();
    // validity regime: |u|_s^2 >= 1/2 on the pulled-back region
    let mut min_nsq = f64::INFINITY;
    for v in 0..half_mesh.n_vertices() {
        min_nsq = min_nsq.min(spec.lambda_norm_sq_unchecked(sol.phi.node(v)));
    }
    if min_nsq < 0.5 {
        return Err(Error::SymmetrizationRegime(min_nsq));
    }

    let full = make_mesh(Domain::Disk, half_mesh.h)?;
    // vertex pairing by exact coordinate bits: the disk mesh reproduces the
    // half-disk vertices above the axis and mirrors them bitwise below
    use std::collections::HashMap;
    let key = |p: [f64; 2]| (p[0].to_bits(), p[1].to_bits());
    let mut lookup: HashMap<(u64, u64), usize> = HashMap::new();
    for (v, p) in half_mesh.vertices.iter().enumerate() {
        lookup.insert(key(*p), v);
    }
    let mut u_hat = MapField::zeros(full.n_vertices(), m);
    let mut pullback = MapField::zeros(full.n_vertices(), m);
    let mut flat_mismatch = 0.0f64;
    for (v, p) in full.vertices.iter().enumerate() {
        let upper = p[1] >= 0.0;
        let q = if upper { *p } else { [p[0], -p[1]] };
        let &hv = lookup
            .get(&key(q))
            .ok_or_else(|| Error::Degenerate(format!("no mirror vertex for {q:?}")))?;
        let vals = sol.phi.node(hv);
        pullback.node_mut(v).copy_from_slice(vals);
        if upper {
            u_hat.node_mut(v).copy_from_slice(vals);
        } else {
            let s = spec.invol_s(vals)?;
            u_hat.node_mut(v).copy_from_slice(&s);
        }
        if p[1] == 0.0 {
            let s = spec.invol_s(vals)?;
            let d: f64 =
                s.iter().zip(vals).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            flat_mismatch = flat_mismatch.max(d);
        }
    }

    let full_ops = Operators::assemble(&full);
    // weak residual of Delta u_hat = -D^2 s(u∘rho)(∇(u∘rho), ∇(u∘rho)) on
    // the lower half (geometer convention), 0 above
    let grads_pb = map_gradients(&full, &pullback);
    let grads_hat = map_gradients(&full, &u_hat);
    let mut load = vec![0.0; full.n_vertices() * m];
    let mut step2_max = 0.0f64;
    let k3 = spec.step2_k().powi(3);
    for (t, tri) in full.triangles.iter().enumerate() {
        if full.tri_centroid[t][1] >= 0.0 {
            continue;
        }
        let mut vbar = vec![0.0; m];
        for i in 0..m {
            vbar[i] = (pullback.data[tri[0] * m + i]
                + pullback.data[tri[1] * m + i]
                + pullback.data[tri[2] * m + i])
                / 3.0;
        }
        let gv: Vec<[f64; 2]> = (0..m)
            .map(|i| [grads_pb[(t * m + i) * 2], grads_pb[(t * m + i) * 2 + 1]])
            .collect();
        let h = spec.hess_s_contract(&vbar, &gv)?;
        let w = full.tri_area[t] / 3.0;
        for i in 0..m {
            for &v in tri {
                load[v * m + i] += w * (-h[i]);
            }
        }
        // elementwise Step-2 bound, the Laplacian taken from the equation
        let hsq: f64 = h.iter().map(|x| x * x).sum();
        let ghat = &grads_hat[t * m * 2..(t + 1) * m * 2];
        let mut gsq = 0.0;
        for i in 0..m {
            gsq += ghat[i * 2] * ghat[i * 2] + ghat[i * 2 + 1] * ghat[i * 2 + 1];
        }
        if gsq > 1e-30 {
            step2_max = step2_max.max(hsq / (k3 * gsq * gsq));
        }
    }
    let k_uhat = full_ops.stiffness.mul_block(&u_hat.data, m);
    let energy = 0.5 * sparse::dot(&u_hat.data, &k_uhat);
    let num = par::sum_indexed(full.n_vertices(), |v| {
        if full.is_boundary(v) {
            return 0.0;
        }
        let mut sq = 0.0;
        for i in 0..m {
            let r = k_uhat[v * m + i] - load[v * m + i];
            sq += r * r;
        }
        sq / full_ops.lumped_mass[v]
    })
    .sqrt();
    Ok(Extension {
        full_mesh: full,
        full_ops,
        u_hat,
        pullback,
        weak_residual: num / (2.0 * energy).max(1e-300),
        step2_ratio_max: step2_max,
        flat_mismatch,
    })
}

/// Max nodal constraint violation `||Phi_v|^2_L - 1|` over constrained nodes.
pub fn constraint_violation(mesh: &DiskMesh, sol: &EigenmapSolution) -> f64 {
    let mut worst = 0.0f64;
    for v in 0..mesh.n_vertices() {
        let constrained = match sol.kind {
            SolveKind::Interior => true,
            SolveKind::FreeBoundary => mesh.is_boundary(v),
        };
        if constrained {
            worst = worst.max((sol.spec.lambda_norm_sq_unchecked(sol.phi.node(v)) - 1.0).abs());
        }
    }
    worst
}
