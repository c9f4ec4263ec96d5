//! Discrete gauge theory for the Riviere system `ΔΨ = Ω . ∇Ψ`:
//! the Uhlenbeck frame `P^T Ω P = P^T ∇P + ∇⊥ξ`, the Riviere pair
//! `div(A ∇Ψ) = ∇⊥B ∇Ψ` via the contraction operator built from Wente
//! solves, the ∂̄-frame `∂̄A = ω A` as a Cauchy-transform fixed point, and
//! the holomorphic factorization `β = A^{-1} α` of `α = P^T ∂_z Ψ`.
//!
//! Convention table: the solvers in [`crate::pde`] carry `Δ = -div ∇`;
//! the gauge identities below are stated with the analysts' `Δ = div ∇`
//! and `∇⊥f = (-f_y, f_x)`, `curl v = d_x v_2 - d_y v_1`, so every Poisson
//! right-hand side is negated once when assembled.

use crate::cauchy::{vertex_targets, CauchyOp};
use crate::eigenmap::{map_gradients, EigenmapSolution, MapField, OmegaField};
use crate::mesh::{DiskMesh, Operators};
use crate::pde::{self, Bc, Rhs};
use crate::sparse::{self, CgOpts, Csr};
use crate::{par, Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Dense per-element so(m)-valued 2-vector field,
/// layout `data[e*(m*m*2) + (i*m + j)*2 + c]`.
#[derive(Clone, Debug)]
pub struct SoMatField {
    pub m: usize,
    pub data: Vec<f64>,
}

impl SoMatField {
    pub fn zeros(ne: usize, m: usize) -> Self {
        SoMatField { m, data: vec![0.0; ne * m * m * 2] }
    }

    pub fn n_elems(&self) -> usize {
        self.data.len() / (self.m * self.m * 2)
    }

    pub fn get(&self, e: usize, i: usize, j: usize, c: usize) -> f64 {
        self.data[e * self.m * self.m * 2 + (i * self.m + j) * 2 + c]
    }

    pub fn set(&mut self, e: usize, i: usize, j: usize, c: usize, v: f64) {
        self.data[e * self.m * self.m * 2 + (i * self.m + j) * 2 + c] = v;
    }

    pub fn from_omega(omega: &OmegaField, ne: usize) -> Self {
        let m = omega.m;
        let mut out = Self::zeros(ne, m);
        for e in 0..ne {
            for i in 0..m {
                for j in 0..m {
                    let v = omega.entry(e, i, j);
                    out.set(e, i, j, 0, v[0]);
                    out.set(e, i, j, 1, v[1]);
                }
            }
        }
        out
    }

    pub fn is_antisymmetric(&self, tol: f64) -> bool {
        let m = self.m;
        for e in 0..self.n_elems() {
            for i in 0..m {
                for j in 0..m {
                    for c in 0..2 {
                        if (self.get(e, i, j, c) + self.get(e, j, i, c)).abs() > tol {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    pub fn l2_norm_sq(&self, mesh: &DiskMesh) -> f64 {
        let m = self.m;
        par::sum_indexed(self.n_elems(), |e| {
            let mut s = 0.0;
            for k in 0..m * m * 2 {
                let v = self.data[e * m * m * 2 + k];
                s += v * v;
            }
            mesh.tri_area[e] * s
        })
    }
}

/// Matrix exponential of a skew matrix by scaling-and-squaring Taylor;
/// exactly orthogonal up to roundoff with determinant +1.
pub fn exp_skew(x: &DMatrix<f64>) -> DMatrix<f64> {
    let m = x.nrows();
    let norm = x.norm();
    let squarings = if norm > 0.25 { (norm / 0.25).log2().ceil() as u32 } else { 0 };
    let scaled = x / (2.0f64.powi(squarings as i32));
    let mut term = DMatrix::identity(m, m);
    let mut sum = DMatrix::identity(m, m);
    for k in 1..=14 {
        term = (&term * &scaled) / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

fn skew_part(x: &DMatrix<f64>) -> DMatrix<f64> {
    (x - x.transpose()) * 0.5
}

#[derive(Clone, Copy, Debug)]
pub struct GaugeOpts {
    pub max_iters: usize,
    /// Relative tolerance on the preconditioned gradient norm.
    pub grad_tol: f64,
    /// Smallness gate for asserting the frame bound.
    pub eps0: f64,
    /// Slack on the continuum bound `(||∇P|| + ||∇ξ||) <= 3 ||Ω||`.
    pub gauge_slack: f64,
}

impl Default for GaugeOpts {
    fn default() -> Self {
        GaugeOpts { max_iters: 400, grad_tol: 1e-9, eps0: 0.05, gauge_slack: 0.1 }
    }
}

pub struct GaugeFrame {
    pub m: usize,
    /// Nodal SO(m) frames.
    pub p: Vec<DMatrix<f64>>,
    /// Nodal so(m) potential, exact antisymmetry, zero on the boundary.
    pub xi: MapField,
    /// L2 residual of `∇⊥ξ = P^T Ω P - P^T ∇P`.
    pub defect: f64,
    pub grad_p_l2: f64,
    pub grad_xi_l2: f64,
    pub omega_l2: f64,
    /// `(||∇P|| + ||∇ξ||) / ||Ω||`.
    pub bound_ratio: f64,
    pub iterations: usize,
    pub gate_met: bool,
}

/// Gradients of a nodal frame field per element, layout `[c][i][j]` packed
/// as two m x m matrices.
fn frame_gradients(mesh: &DiskMesh, p: &[DMatrix<f64>], m: usize) -> Vec<[DMatrix<f64>; 2]> {
    par::map_indexed(mesh.n_triangles(), |t| {
        let tri = mesh.triangles[t];
        let g = &mesh.tri_grads[t];
        let mut dx = DMatrix::zeros(m, m);
        let mut dy = DMatrix::zeros(m, m);
        for k in 0..3 {
            dx += &p[tri[k]] * g[k][0];
            dy += &p[tri[k]] * g[k][1];
        }
        [dx, dy]
    })
}

fn omega_matrices(omega: &SoMatField, e: usize) -> [DMatrix<f64>; 2] {
    let m = omega.m;
    let mut ox = DMatrix::zeros(m, m);
    let mut oy = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            ox[(i, j)] = omega.get(e, i, j, 0);
            oy[(i, j)] = omega.get(e, i, j, 1);
        }
    }
    [ox, oy]
}

/// Uhlenbeck gauge by Riemannian descent on
/// `F(P) = int |P^T Ω P - P^T ∇P|^2 = int |Ω P - ∇P|^2` over nodal SO(m),
/// with a Sobolev (stiffness + mass) preconditioner on the skew components,
/// tangent steps retracted by the exponential map. `ξ` is recovered per
/// component from the least-squares Poisson problem with zero Dirichlet
/// values.
pub fn uhlenbeck_gauge(
    mesh: &DiskMesh,
    ops: &Operators,
    omega: &SoMatField,
    opts: &GaugeOpts,
) -> Result<GaugeFrame> {
    if !omega.is_antisymmetric(1e-12) {
        return Err(Error::BadParam("gauge input is not antisymmetric".into()));
    }
    let n = mesh.n_vertices();
    let ne = mesh.n_triangles();
    let m = omega.m;
    let omega_l2 = omega.l2_norm_sq(mesh).sqrt();

    // Sobolev preconditioner K + M
    let sob = {
        let mut trip = Vec::new();
        for i in 0..n {
            for p in ops.stiffness.row_ptr[i]..ops.stiffness.row_ptr[i + 1] {
                trip.push((i, ops.stiffness.col_idx[p], ops.stiffness.values[p]));
            }
            for p in ops.mass.row_ptr[i]..ops.mass.row_ptr[i + 1] {
                trip.push((i, ops.mass.col_idx[p], ops.mass.values[p]));
            }
        }
        Csr::from_triplets(n, &trip)
    };
    let om_elems: Vec<[DMatrix<f64>; 2]> = (0..ne).map(|e| omega_matrices(omega, e)).collect();

    let mut p: Vec<DMatrix<f64>> = vec![DMatrix::identity(m, m); n];
    let energy_and_gradient = |p: &[DMatrix<f64>]| -> (f64, Vec<DMatrix<f64>>) {
        let gp = frame_gradients(mesh, p, m);
        let contribs = par::map_indexed(ne, |e| {
            let tri = mesh.triangles[e];
            let a = mesh.tri_area[e];
            let pbar = (&p[tri[0]] + &p[tri[1]] + &p[tri[2]]) / 3.0;
            let mut local_e = 0.0;
            let mut g_nodes = [
                DMatrix::zeros(m, m),
                DMatrix::zeros(m, m),
                DMatrix::zeros(m, m),
            ];
            for c in 0..2 {
                let r = &om_elems[e][c] * &pbar - &gp[e][c];
                local_e += a * r.norm_squared();
                let omt_r = om_elems[e][c].transpose() * &r;
                for k in 0..3 {
                    let coeff = mesh.tri_grads[e][k][c];
                    g_nodes[k] += a * ((2.0 / 3.0) * &omt_r - 2.0 * coeff * &r);
                }
            }
            (local_e, tri, g_nodes)
        });
        let mut energy = 0.0;
        let mut grad = vec![DMatrix::zeros(m, m); n];
        for (le, tri, gn) in contribs {
            energy += le;
            for k in 0..3 {
                grad[tri[k]] += &gn[k];
            }
        }
        (energy, grad)
    };

    let pairs: Vec<(usize, usize)> =
        (0..m).flat_map(|i| ((i + 1)..m).map(move |j| (i, j))).collect();
    let cg = CgOpts { rel_tol: 1e-10, max_iters: 20_000 };
    let mut warm: Vec<Vec<f64>> = vec![vec![0.0; n]; pairs.len()];
    let (mut energy, mut grad) = energy_and_gradient(&p);
    let mut iterations = 0;
    let mut tau = 1.0;
    let scale = (omega_l2 * omega_l2).max(1e-30);
    while iterations < opts.max_iters {
        // Riemannian gradient in body coordinates, then Sobolev direction
        let gam: Vec<DMatrix<f64>> =
            (0..n).map(|v| skew_part(&(p[v].transpose() * &grad[v]))).collect();
        let mut dir = vec![DMatrix::zeros(m, m); n];
        let mut gd = 0.0;
        let fixed = vec![false; n];
        for (ci, &(i, j)) in pairs.iter().enumerate() {
            let rhs: Vec<f64> = (0..n).map(|v| gam[v][(i, j)]).collect();
            let (d, _) = sparse::cg_constrained(&sob, &rhs, &fixed, &warm[ci], cg)?;
            gd += 2.0 * sparse::dot(&rhs, &d);
            for v in 0..n {
                dir[v][(i, j)] = d[v];
                dir[v][(j, i)] = -d[v];
            }
            warm[ci] = d;
        }
        if gd.sqrt() <= opts.grad_tol * scale.sqrt().max(1e-15) {
            break;
        }
        // Armijo backtracking on F along the retracted direction
        let mut accepted = false;
        while !accepted {
            let trial: Vec<DMatrix<f64>> = par::map_indexed(n, |v| &p[v] * exp_skew(&(-tau * &dir[v])));
            let (e_new, g_new) = energy_and_gradient(&trial);
            let floor = 8.0 * f64::EPSILON * (energy.abs() + 1.0);
            if e_new <= energy - 1e-4 * tau * gd + floor {
                p = trial;
                energy = e_new;
                grad = g_new;
                tau = (tau * 1.3).min(16.0);
                accepted = true;
            } else {
                tau *= 0.5;
                if tau < 1e-14 {
                    break;
                }
            }
        }
        if !accepted {
            break;
        }
        iterations += 1;
    }

    // residual one-form R = P^T Ω P - P^T ∇P per element (skew projected)
    let gp = frame_gradients(mesh, &p, m);
    let r_field: Vec<[DMatrix<f64>; 2]> = par::map_indexed(ne, |e| {
        let tri = mesh.triangles[e];
        let pbar = (&p[tri[0]] + &p[tri[1]] + &p[tri[2]]) / 3.0;
        let mut out = [DMatrix::zeros(m, m), DMatrix::zeros(m, m)];
        for c in 0..2 {
            let r = pbar.transpose() * (&om_elems[e][c] * &pbar - &gp[e][c]);
            out[c] = skew_part(&r);
        }
        out
    });

    // xi per skew component: int ∇ξ.∇φ = int R.∇⊥φ, Dirichlet zero
    let mut xi = MapField::zeros(n, m * m);
    for &(i, j) in &pairs {
        let comp: Vec<[f64; 2]> = (0..ne)
            .map(|e| [r_field[e][0][(i, j)], r_field[e][1][(i, j)]])
            .collect();
        let load = pde::load_weak_perp_gradient(mesh, &comp);
        let (sol, _) = pde::solve_poisson(mesh, ops, Rhs::Load(load), Bc::DirichletZero)?;
        for v in 0..n {
            xi.data[v * m * m + i * m + j] = sol[v];
            xi.data[v * m * m + j * m + i] = -sol[v];
        }
    }

    // defect and energies
    let gxi = map_gradients(mesh, &xi);
    let mut defect_sq = 0.0;
    let mut grad_xi_sq = 0.0;
    for e in 0..ne {
        let a = mesh.tri_area[e];
        for &(i, j) in &pairs {
            let gx = gxi[(e * m * m + i * m + j) * 2];
            let gy = gxi[(e * m * m + i * m + j) * 2 + 1];
            // ∇⊥ξ = (-ξ_y, ξ_x)
            let dx = -gy - r_field[e][0][(i, j)];
            let dy = gx - r_field[e][1][(i, j)];
            defect_sq += 2.0 * a * (dx * dx + dy * dy);
            grad_xi_sq += 2.0 * a * (gx * gx + gy * gy);
        }
    }
    let grad_p_sq = par::sum_indexed(ne, |e| {
        mesh.tri_area[e] * (gp[e][0].norm_squared() + gp[e][1].norm_squared())
    });
    let bound_ratio = (grad_p_sq.sqrt() + grad_xi_sq.sqrt()) / omega_l2.max(1e-300);
    let gate_met = omega_l2 * omega_l2 <= opts.eps0;
    Ok(GaugeFrame {
        m,
        p,
        xi,
        defect: defect_sq.sqrt(),
        grad_p_l2: grad_p_sq.sqrt(),
        grad_xi_l2: grad_xi_sq.sqrt(),
        omega_l2,
        bound_ratio,
        iterations,
        gate_met,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct RiviereOpts {
    pub fp_tol: f64,
    pub max_iters: usize,
    /// Abort when the measured contraction rate exceeds this.
    pub contraction_cap: f64,
}

impl Default for RiviereOpts {
    fn default() -> Self {
        RiviereOpts { fp_tol: 1e-11, max_iters: 80, contraction_cap: 0.999 }
    }
}

pub struct RiviereDecomp {
    pub m: usize,
    /// `A = (I + Â) P^T`, nodal.
    pub a: MapField,
    /// `Â` fixed-point component, nodal.
    pub a_hat: MapField,
    /// `B`, nodal, zero on the boundary.
    pub b: MapField,
    pub iterations: usize,
    pub contraction_rates: Vec<f64>,
    /// max measured rate after the first step
    pub contraction_rate: f64,
    /// `sum_ij ||(PA - I)_ij||_inf^2`.
    pub pa_minus_i_sup_sq: f64,
    pub grad_a_l2_sq: f64,
    pub grad_b_l2_sq: f64,
    /// `(sup term + ∇A + ∇B energies) / int |Ω|^2`.
    pub k_measured: f64,
    /// Weak residual of `div(A ∇Ψ) - ∇⊥B ∇Ψ` against interior hats,
    /// relative to the energy scale.
    pub residual: f64,
}

struct TState {
    alpha: MapField,
    beta: MapField,
}

/// E-norm of the pair: `sum_ij ||α_ij||_inf^2 + int |∇α|^2 + int |∇β|^2`.
fn e_norm_sq(mesh: &DiskMesh, s: &TState) -> f64 {
    let mm = s.alpha.m;
    let n = s.alpha.n_nodes();
    let mut sup_sq = 0.0;
    for k in 0..mm {
        let mut sup = 0.0f64;
        for v in 0..n {
            sup = sup.max(s.alpha.data[v * mm + k].abs());
        }
        sup_sq += sup * sup;
    }
    let ga = map_gradients(mesh, &s.alpha);
    let gb = map_gradients(mesh, &s.beta);
    let mut grads = 0.0;
    for e in 0..mesh.n_triangles() {
        let a = mesh.tri_area[e];
        for k in 0..mm {
            let ax = ga[(e * mm + k) * 2];
            let ay = ga[(e * mm + k) * 2 + 1];
            let bx = gb[(e * mm + k) * 2];
            let by = gb[(e * mm + k) * 2 + 1];
            grads += a * (ax * ax + ay * ay + bx * bx + by * by);
        }
    }
    sup_sq + grads
}

fn state_diff(a: &TState, b: &TState) -> TState {
    TState {
        alpha: MapField {
            m: a.alpha.m,
            data: a.alpha.data.iter().zip(&b.alpha.data).map(|(x, y)| x - y).collect(),
        },
        beta: MapField {
            m: a.beta.m,
            data: a.beta.data.iter().zip(&b.beta.data).map(|(x, y)| x - y).collect(),
        },
    }
}

/// One application of the affine operator `T`: given `(α, β)` return `(R, S)`
/// with (analysts' convention)
/// `ΔR_ij = sum_k [J(β_ik, P_kj) + J(α_ik, ξ_kj)]`, Neumann mean-zero, and
/// `ΔS_ij = sum_l J(P_jl, α_il) + div(((I + α) ∇ξ) P^T)_ij`, Dirichlet zero.
#[allow(clippy::too_many_arguments)]
fn apply_t(
    mesh: &DiskMesh,
    ops: &Operators,
    m: usize,
    p_nodal: &MapField,
    grad_p: &[f64],
    grad_xi: &[f64],
    state: &TState,
    warm: Option<&TState>,
) -> Result<TState> {
    let mm = m * m;
    let ne = mesh.n_triangles();
    let n = mesh.n_vertices();
    let ga = map_gradients(mesh, &state.alpha);
    let gb = map_gradients(mesh, &state.beta);

    // element means of alpha and P
    let mean = |f: &MapField, e: usize, k: usize| -> f64 {
        let tri = mesh.triangles[e];
        (f.data[tri[0] * mm + k] + f.data[tri[1] * mm + k] + f.data[tri[2] * mm + k]) / 3.0
    };

    // loads for all (i,j) components at once
    let r_loads: Vec<Vec<f64>> = par::map_indexed(mm, |ij| {
        let (i, j) = (ij / m, ij % m);
        let mut dens = vec![0.0; ne];
        for e in 0..ne {
            let mut s = 0.0;
            for k in 0..m {
                // J(a, b) = ∇⊥a . ∇b = -a_y b_x + a_x b_y
                let bik = &gb[(e * mm + i * m + k) * 2..];
                let pkj = &grad_p[(e * mm + k * m + j) * 2..];
                s += -bik[1] * pkj[0] + bik[0] * pkj[1];
                let aik = &ga[(e * mm + i * m + k) * 2..];
                let xkj = &grad_xi[(e * mm + k * m + j) * 2..];
                s += -aik[1] * xkj[0] + aik[0] * xkj[1];
            }
            dens[e] = s;
        }
        // analysts' Δ -> our -div∇ flips the sign of the load
        let mut load = pde::assemble_load(mesh, ops, &Rhs::PerElement(&dens));
        for l in load.iter_mut() {
            *l = -*l;
        }
        load
    });
    let s_loads: Vec<Vec<f64>> = par::map_indexed(mm, |ij| {
        let (i, j) = (ij / m, ij % m);
        let mut dens = vec![0.0; ne];
        let mut gfield = vec![[0.0f64; 2]; ne];
        for e in 0..ne {
            let mut s = 0.0;
            for l in 0..m {
                let pjl = &grad_p[(e * mm + j * m + l) * 2..];
                let ail = &ga[(e * mm + i * m + l) * 2..];
                s += -pjl[1] * ail[0] + pjl[0] * ail[1];
            }
            dens[e] = s;
            // G = ((I + α) ∇ξ P^T)_ij per component
            let mut g = [0.0f64; 2];
            for k in 0..m {
                let aik = if i == k { 1.0 } else { 0.0 } + mean(&state.alpha, e, i * m + k);
                if aik == 0.0 {
                    continue;
                }
                for l in 0..m {
                    let pjl = mean(p_nodal, e, j * m + l);
                    if pjl == 0.0 {
                        continue;
                    }
                    let xkl = &grad_xi[(e * mm + k * m + l) * 2..];
                    g[0] += aik * xkl[0] * pjl;
                    g[1] += aik * xkl[1] * pjl;
                }
            }
            gfield[e] = g;
        }
        // Δ_spec S = -J - div G: weak div term integrates against ∇φ
        let mut load = pde::assemble_load(mesh, ops, &Rhs::PerElement(&dens));
        let wg = pde::load_weak_gradient(mesh, &gfield);
        for (l, w) in load.iter_mut().zip(&wg) {
            *l = -*l + w;
        }
        load
    });

    let mut out = TState { alpha: MapField::zeros(n, mm), beta: MapField::zeros(n, mm) };
    for ij in 0..mm {
        let warm_a = warm.map(|w| w.alpha.coordinate(ij));
        let (r, _) = pde::solve_poisson_warm(
            mesh,
            ops,
            Rhs::Load(r_loads[ij].clone()),
            Bc::NeumannMeanZero(None),
            warm_a.as_deref(),
        )?;
        let warm_b = warm.map(|w| w.beta.coordinate(ij));
        let (s, _) = pde::solve_poisson_warm(
            mesh,
            ops,
            Rhs::Load(s_loads[ij].clone()),
            Bc::DirichletZero,
            warm_b.as_deref(),
        )?;
        for v in 0..n {
            out.alpha.data[v * mm + ij] = r[v];
            out.beta.data[v * mm + ij] = s[v];
        }
    }
    Ok(out)
}

/// Riviere decomposition by Picard iteration of the affine operator `T`.
pub fn riviere_ab(
    mesh: &DiskMesh,
    ops: &Operators,
    frame: &GaugeFrame,
    psi: &MapField,
    omega_l2_sq: f64,
    opts: &RiviereOpts,
) -> Result<RiviereDecomp> {
    let m = frame.m;
    let mm = m * m;
    let n = mesh.n_vertices();
    let p_nodal = MapField::from_fn(n, mm, |v| {
        let mut row = vec![0.0; mm];
        for i in 0..m {
            for j in 0..m {
                row[i * m + j] = frame.p[v][(i, j)];
            }
        }
        row
    });
    let grad_p = map_gradients(mesh, &p_nodal);
    let grad_xi = map_gradients(mesh, &frame.xi);

    let mut state = TState { alpha: MapField::zeros(n, mm), beta: MapField::zeros(n, mm) };
    let mut prev_diff: Option<f64> = None;
    let mut rates = Vec::new();
    let mut iterations = 0;
    loop {
        let next =
            apply_t(mesh, ops, m, &p_nodal, &grad_p, &grad_xi, &state, Some(&state))?;
        let diff = e_norm_sq(mesh, &state_diff(&next, &state)).sqrt();
        if let Some(pd) = prev_diff {
            if pd > 1e-300 {
                let rate = diff / pd;
                rates.push(rate);
                if rate >= opts.contraction_cap && diff > opts.fp_tol {
                    return Err(Error::ContractionFailure(rate));
                }
            }
        }
        prev_diff = Some(diff);
        state = next;
        iterations += 1;
        let scale = e_norm_sq(mesh, &state).sqrt().max(1.0);
        if diff <= opts.fp_tol * scale || iterations >= opts.max_iters {
            break;
        }
    }

    // A = (I + Â) P^T nodal
    let a = MapField::from_fn(n, mm, |v| {
        let mut row = vec![0.0; mm];
        for i in 0..m {
            for j in 0..m {
                let mut s = 0.0;
                for k in 0..m {
                    let ihat =
                        if i == k { 1.0 } else { 0.0 } + state.alpha.data[v * mm + i * m + k];
                    s += ihat * frame.p[v][(j, k)];
                }
                row[i * m + j] = s;
            }
        }
        row
    });

    // sup and gradient parts of the bound
    let mut pa_sup_sq = 0.0;
    for k in 0..mm {
        let (i, j) = (k / m, k % m);
        let mut sup = 0.0f64;
        for v in 0..n {
            // PA = P (I + Â) P^T
            let mut s = 0.0;
            for l in 0..m {
                for q in 0..m {
                    let ihat =
                        if l == q { 1.0 } else { 0.0 } + state.alpha.data[v * mm + l * m + q];
                    s += frame.p[v][(i, l)] * ihat * frame.p[v][(j, q)];
                }
            }
            if i == j {
                s -= 1.0;
            }
            sup = sup.max(s.abs());
        }
        pa_sup_sq += sup * sup;
    }
    let ga = map_gradients(mesh, &a);
    let gb = map_gradients(mesh, &state.beta);
    let mut grad_a_sq = 0.0;
    let mut grad_b_sq = 0.0;
    for e in 0..mesh.n_triangles() {
        let ar = mesh.tri_area[e];
        for k in 0..mm {
            grad_a_sq +=
                ar * (ga[(e * mm + k) * 2].powi(2) + ga[(e * mm + k) * 2 + 1].powi(2));
            grad_b_sq +=
                ar * (gb[(e * mm + k) * 2].powi(2) + gb[(e * mm + k) * 2 + 1].powi(2));
        }
    }

    // weak residual of div(A ∇Ψ) = ∇⊥B ∇Ψ against interior hats
    let gpsi = map_gradients(mesh, psi);
    let residual = {
        let ne = mesh.n_triangles();
        let mut load = vec![0.0; n * m];
        for e in 0..ne {
            let tri = mesh.triangles[e];
            let ar = mesh.tri_area[e];
            // element means of A
            let mut abar = vec![0.0; mm];
            for k in 0..mm {
                abar[k] =
                    (a.data[tri[0] * mm + k] + a.data[tri[1] * mm + k] + a.data[tri[2] * mm + k])
                        / 3.0;
            }
            for i in 0..m {
                // -(A ∇Ψ)_i . ∇φ_v  (weak div) minus (∇⊥B ∇Ψ)_i φ_v
                let mut flux = [0.0f64; 2];
                let mut src = 0.0;
                for j in 0..m {
                    let gj = &gpsi[(e * m + j) * 2..];
                    flux[0] += abar[i * m + j] * gj[0];
                    flux[1] += abar[i * m + j] * gj[1];
                    let gbij = &gb[(e * mm + i * m + j) * 2..];
                    src += -gbij[1] * gj[0] + gbij[0] * gj[1];
                }
                for k in 0..3 {
                    let gphi = mesh.tri_grads[e][k];
                    load[tri[k] * m + i] +=
                        ar * (-(flux[0] * gphi[0] + flux[1] * gphi[1]) - src / 3.0);
                }
            }
        }
        let num = par::sum_indexed(n, |v| {
            if mesh.is_boundary(v) {
                return 0.0;
            }
            let mut sq = 0.0;
            for i in 0..m {
                sq += load[v * m + i] * load[v * m + i];
            }
            sq / ops.lumped_mass[v]
        })
        .sqrt();
        let scale = par::sum_indexed(mesh.n_triangles(), |e| {
            let mut s = 0.0;
            for i in 0..m {
                s += gpsi[(e * m + i) * 2].powi(2) + gpsi[(e * m + i) * 2 + 1].powi(2);
            }
            mesh.tri_area[e] * s
        });
        num / scale.max(1e-300)
    };

    let total = pa_sup_sq + grad_a_sq + grad_b_sq;
    let rate = rates.iter().skip(1).cloned().fold(0.0f64, f64::max);
    Ok(RiviereDecomp {
        m,
        a,
        a_hat: state.alpha,
        b: state.beta,
        iterations,
        contraction_rate: rate,
        contraction_rates: rates,
        pa_minus_i_sup_sq: pa_sup_sq,
        grad_a_l2_sq: grad_a_sq,
        grad_b_l2_sq: grad_b_sq,
        k_measured: total / omega_l2_sq.max(1e-300),
        residual,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct DbarOpts {
    pub fp_tol: f64,
    pub max_iters: usize,
    pub eps1: f64,
    /// Kernel cache limit in bytes for the Cauchy operator.
    pub cache_limit: usize,
}

impl Default for DbarOpts {
    fn default() -> Self {
        DbarOpts { fp_tol: 1e-10, max_iters: 60, eps1: 0.05, cache_limit: 256 << 20 }
    }
}

pub struct DbarFrame {
    pub m: usize,
    /// Nodal complex matrices, layout `[v*m*m + i*m + j]`.
    pub a: Vec<Complex64>,
    /// `||A - I||` in the composite norm (spectral norm of entrywise sups).
    pub a_minus_i_norm: f64,
    /// Measured Picard contraction (max rate after the first step).
    pub contraction: f64,
    /// Element-L2 residual of `∂̄A - ω A` relative to `||ω A||_2`.
    pub residual_rel: f64,
    /// `sqrt(sum_ij ||ω_ij||_{L^{2,1}}^2)` surrogate.
    pub omega_l21: f64,
    pub gate_met: bool,
    pub iterations: usize,
}

/// Composite matrix norm `|(||A_ij||_inf)|_{2,2}` of a nodal complex field.
fn sup_matrix_norm(a: &[Complex64], n: usize, m: usize) -> f64 {
    let mut sups = DMatrix::zeros(m, m);
    for v in 0..n {
        for i in 0..m {
            for j in 0..m {
                let x = a[v * m * m + i * m + j].norm();
                if x > sups[(i, j)] {
                    sups[(i, j)] = x;
                }
            }
        }
    }
    sups.svd(false, false).singular_values[0]
}

/// ∂̄-frame `A = I + T(ω A)` by Picard iteration of the Cauchy transform.
/// `omega` is a per-element complex matrix field, layout `[e*m*m + i*m + j]`.
pub fn dbar_frame(
    mesh: &DiskMesh,
    omega: &[Complex64],
    m: usize,
    opts: &DbarOpts,
) -> Result<DbarFrame> {
    let ne = mesh.n_triangles();
    let n = mesh.n_vertices();
    let mm = m * m;
    assert_eq!(omega.len(), ne * mm);

    // L^{2,1} surrogate gate, summed over entries
    let mut l21_sq = 0.0;
    for k in 0..mm {
        let vals: Vec<f64> = (0..ne).map(|e| omega[e * mm + k].norm()).collect();
        let s = pde::lorentz21_surrogate(mesh, &vals);
        l21_sq += s * s;
    }
    let omega_l21 = l21_sq.sqrt();
    let gate_met = omega_l21 <= opts.eps1;

    let op = CauchyOp::new(mesh, vertex_targets(mesh), opts.cache_limit);
    let ident = |v: usize, i: usize, j: usize| -> Complex64 {
        let _ = v;
        if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }
    };
    let mut a: Vec<Complex64> = (0..n * mm)
        .map(|k| ident(k / mm, (k % mm) / m, (k % mm) % m))
        .collect();
    let mut rates = Vec::new();
    let mut prev_diff: Option<f64> = None;
    let mut iterations = 0;
    loop {
        // element averages of A, then fields f_ij = (ω A)_ij
        let fields: Vec<Vec<Complex64>> = par::map_indexed(mm, |ij| {
            let (i, j) = (ij / m, ij % m);
            (0..ne)
                .map(|e| {
                    let tri = mesh.triangles[e];
                    let mut s = Complex64::new(0.0, 0.0);
                    for k in 0..m {
                        let abar = (a[tri[0] * mm + k * m + j]
                            + a[tri[1] * mm + k * m + j]
                            + a[tri[2] * mm + k * m + j])
                            / 3.0;
                        s += omega[e * mm + i * m + k] * abar;
                    }
                    s
                })
                .collect()
        });
        let refs: Vec<&[Complex64]> = fields.iter().map(|f| f.as_slice()).collect();
        let transformed = op.apply_block(&refs);
        let mut next = vec![Complex64::new(0.0, 0.0); n * mm];
        for ij in 0..mm {
            let (i, j) = (ij / m, ij % m);
            for v in 0..n {
                next[v * mm + ij] = ident(v, i, j) + transformed[ij][v];
            }
        }
        let diff: Vec<Complex64> = next.iter().zip(&a).map(|(x, y)| x - y).collect();
        let dn = sup_matrix_norm(&diff, n, m);
        if let Some(pd) = prev_diff {
            if pd > 1e-300 {
                let rate = dn / pd;
                rates.push(rate);
                if rate >= 1.0 && dn > opts.fp_tol {
                    return Err(Error::ContractionFailure(rate));
                }
            }
        }
        prev_diff = Some(dn);
        a = next;
        iterations += 1;
        if dn <= opts.fp_tol || iterations >= opts.max_iters {
            break;
        }
    }

    // residual ∂̄A - ωA in element L2
    let mut resid_sq = 0.0;
    let mut scale_sq = 0.0;
    for ij in 0..mm {
        let (i, j) = (ij / m, ij % m);
        let nodal: Vec<Complex64> = (0..n).map(|v| a[v * mm + ij]).collect();
        let db = pde::dzbar_complex(mesh, &nodal);
        for e in 0..ne {
            let tri = mesh.triangles[e];
            let mut oa = Complex64::new(0.0, 0.0);
            for k in 0..m {
                let abar = (a[tri[0] * mm + k * m + j]
                    + a[tri[1] * mm + k * m + j]
                    + a[tri[2] * mm + k * m + j])
                    / 3.0;
                oa += omega[e * mm + i * m + k] * abar;
            }
            resid_sq += mesh.tri_area[e] * (db[e] - oa).norm_sqr();
            scale_sq += mesh.tri_area[e] * oa.norm_sqr();
        }
    }

    let a_minus_i: Vec<Complex64> = (0..n * mm)
        .map(|k| {
            let (v, r) = (k / mm, k % mm);
            a[k] - ident(v, r / m, r % m)
        })
        .collect();
    let rate = rates.iter().skip(1).cloned().fold(0.0f64, f64::max);
    Ok(DbarFrame {
        m,
        a,
        a_minus_i_norm: sup_matrix_norm(&a_minus_i, n, m),
        contraction: rate,
        residual_rel: (resid_sq / scale_sq.max(1e-300)).sqrt(),
        omega_l21,
        gate_met,
        iterations,
    })
}

/// Complexified gauge potential `ω = i ∂̄ξ` per element.
pub fn omega_from_frame(mesh: &DiskMesh, frame: &GaugeFrame) -> Vec<Complex64> {
    let m = frame.m;
    let mm = m * m;
    let gxi = map_gradients(mesh, &frame.xi);
    let ne = mesh.n_triangles();
    let mut out = vec![Complex64::new(0.0, 0.0); ne * mm];
    for e in 0..ne {
        for k in 0..mm {
            let gx = gxi[(e * mm + k) * 2];
            let gy = gxi[(e * mm + k) * 2 + 1];
            // ∂̄ξ = (ξ_x + i ξ_y)/2, then multiply by i
            out[e * mm + k] = Complex64::new(0.0, 1.0) * Complex64::new(0.5 * gx, 0.5 * gy);
        }
    }
    out
}

pub struct HolomorphicFactor {
    /// Nodal `α = P^T ∂_z Ψ` (complex m-vector per node).
    pub alpha: Vec<Complex64>,
    /// Nodal `β = A^{-1} α`.
    pub beta: Vec<Complex64>,
    /// Element-L2 of `∂̄α - ω α`.
    pub dbar_alpha_residual: f64,
    /// Element-L2 of `∂̄α` and of `∂̄β`.
    pub dbar_alpha_l2: f64,
    pub dbar_beta_l2: f64,
    /// `||ω α||_2`; when `∂̄α` is mostly unexplained by the equation the
    /// holomorphy-improvement assertion is skipped.
    pub omega_alpha_l2: f64,
    pub at_discretization_floor: bool,
    /// `sup over admissible nodes of (1-|z|)^2 |α|^2 / int |α|^2`.
    pub sup_ratio: f64,
}

/// Area-weighted nodal average of a per-element complex field.
fn nodal_from_elements(mesh: &DiskMesh, elems: &[Complex64]) -> Vec<Complex64> {
    let n = mesh.n_vertices();
    let mut acc = vec![Complex64::new(0.0, 0.0); n];
    let mut wsum = vec![0.0; n];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for &v in tri {
            acc[v] += elems[t] * mesh.tri_area[t];
            wsum[v] += mesh.tri_area[t];
        }
    }
    for v in 0..n {
        acc[v] /= wsum[v];
    }
    acc
}

/// Holomorphic factorization of `α = P^T ∂_z Ψ` through the ∂̄-frame.
pub fn holomorphic_factor(
    mesh: &DiskMesh,
    sol: &EigenmapSolution,
    frame: &GaugeFrame,
    dbar: &DbarFrame,
) -> Result<HolomorphicFactor> {
    let m = sol.phi.m;
    let n = mesh.n_vertices();
    let lam = sol.spec.lambdas();
    // Ψ = L^{1/2} Φ (unit-sphere valued)
    let psi = MapField::from_fn(n, m, |v| {
        sol.phi.node(v).iter().zip(lam).map(|(&x, &l)| l.sqrt() * x).collect()
    });
    // nodal ∂_z Ψ by lumped projection of the per-element derivative
    let mut dz_nodal: Vec<Vec<Complex64>> = Vec::with_capacity(m);
    for i in 0..m {
        let coord = psi.coordinate(i);
        let dz_elem = pde::dz(mesh, &coord);
        dz_nodal.push(nodal_from_elements(mesh, &dz_elem));
    }
    // α_v = P_v^T (∂_z Ψ)_v
    let mut alpha = vec![Complex64::new(0.0, 0.0); n * m];
    for v in 0..n {
        for i in 0..m {
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..m {
                s += frame.p[v][(k, i)] * dz_nodal[k][v];
            }
            alpha[v * m + i] = s;
        }
    }
    let omega = omega_from_frame(mesh, frame);

    // residual ∂̄α = ω α per element
    let ne = mesh.n_triangles();
    let mut dbar_alpha = vec![Complex64::new(0.0, 0.0); ne * m];
    for i in 0..m {
        let nodal: Vec<Complex64> = (0..n).map(|v| alpha[v * m + i]).collect();
        let db = pde::dzbar_complex(mesh, &nodal);
        for e in 0..ne {
            dbar_alpha[e * m + i] = db[e];
        }
    }
    let mut resid_sq = 0.0;
    let mut dalpha_sq = 0.0;
    let mut oa_sq = 0.0;
    for e in 0..ne {
        let tri = mesh.triangles[e];
        for i in 0..m {
            let mut oa = Complex64::new(0.0, 0.0);
            for k in 0..m {
                let abar = (alpha[tri[0] * m + k] + alpha[tri[1] * m + k]
                    + alpha[tri[2] * m + k])
                    / 3.0;
                oa += omega[e * m * m + i * m + k] * abar;
            }
            let da = dbar_alpha[e * m + i];
            resid_sq += mesh.tri_area[e] * (da - oa).norm_sqr();
            dalpha_sq += mesh.tri_area[e] * da.norm_sqr();
            oa_sq += mesh.tri_area[e] * oa.norm_sqr();
        }
    }

    // β = A^{-1} α nodally (complex LU per node)
    let mut beta = vec![Complex64::new(0.0, 0.0); n * m];
    for v in 0..n {
        let mut am = DMatrix::<Complex64>::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                am[(i, j)] = dbar.a[v * m * m + i * m + j];
            }
        }
        let rhs = nalgebra::DVector::from_fn(m, |i, _| alpha[v * m + i]);
        let lu = am.lu();
        let x = lu
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("dbar frame not invertible at a node".into()))?;
        for i in 0..m {
            beta[v * m + i] = x[i];
        }
    }
    let mut dbeta_sq = 0.0;
    for i in 0..m {
        let nodal: Vec<Complex64> = (0..n).map(|v| beta[v * m + i]).collect();
        let db = pde::dzbar_complex(mesh, &nodal);
        for e in 0..ne {
            dbeta_sq += mesh.tri_area[e] * db[e].norm_sqr();
        }
    }

    // gradient-bound sup ratio sampled at nodes with 1 - |z| >= 2h
    let mut alpha_l2 = 0.0;
    for e in 0..ne {
        let tri = mesh.triangles[e];
        for i in 0..m {
            let abar =
                (alpha[tri[0] * m + i] + alpha[tri[1] * m + i] + alpha[tri[2] * m + i]) / 3.0;
            alpha_l2 += mesh.tri_area[e] * abar.norm_sqr();
        }
    }
    let mut sup_ratio = 0.0f64;
    for v in 0..n {
        let p = mesh.vertices[v];
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        if 1.0 - r < 2.0 * mesh.h {
            continue;
        }
        let mut asq = 0.0;
        for i in 0..m {
            asq += alpha[v * m + i].norm_sqr();
        }
        sup_ratio = sup_ratio.max((1.0 - r) * (1.0 - r) * asq / alpha_l2.max(1e-300));
    }

    let resid = resid_sq.sqrt();
    Ok(HolomorphicFactor {
        alpha,
        beta,
        dbar_alpha_residual: resid,
        dbar_alpha_l2: dalpha_sq.sqrt(),
        dbar_beta_l2: dbeta_sq.sqrt(),
        omega_alpha_l2: oa_sq.sqrt(),
        at_discretization_floor: resid > 0.5 * dalpha_sq.sqrt().max(1e-300),
        sup_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{make_mesh, Domain};
    use crate::rng::CounterRng;

    fn disk(h: f64) -> (DiskMesh, Operators) {
        let m = make_mesh(Domain::Disk, h).unwrap();
        let ops = Operators::assemble(&m);
        (m, ops)
    }

    /// Smooth random so(2) field with int |Omega|^2 scaled to `target`.
    fn random_so2(mesh: &DiskMesh, seed: u64, target: f64) -> SoMatField {
        let rng = CounterRng::new(seed, 3);
        let coef: Vec<f64> = (0..8).map(|k| rng.normal(k)).collect();
        let w: Vec<[f64; 2]> = (0..mesh.n_triangles())
            .map(|t| {
                let c = mesh.tri_centroid[t];
                [
                    coef[0] * (coef[1] + 2.0 * c[0] + c[1]).sin() + coef[2] * c[1],
                    coef[3] * (coef[4] + c[0] - 2.0 * c[1]).cos() + coef[5] * c[0],
                ]
            })
            .collect();
        let mut field = SoMatField::zeros(mesh.n_triangles(), 2);
        for (t, v) in w.iter().enumerate() {
            field.set(t, 0, 1, 0, v[0]);
            field.set(t, 0, 1, 1, v[1]);
            field.set(t, 1, 0, 0, -v[0]);
            field.set(t, 1, 0, 1, -v[1]);
        }
        let nsq = field.l2_norm_sq(mesh);
        let scale = (target / nsq).sqrt();
        for x in field.data.iter_mut() {
            *x *= scale;
        }
        field
    }

    #[test]
    fn zero_omega_gives_identity_frame() {
        let (m, ops) = disk(0.15);
        let omega = SoMatField::zeros(m.n_triangles(), 3);
        let frame = uhlenbeck_gauge(&m, &ops, &omega, &GaugeOpts::default()).unwrap();
        for v in 0..m.n_vertices() {
            assert!((&frame.p[v] - DMatrix::<f64>::identity(3, 3)).norm() < 1e-12);
        }
        assert!(frame.xi.data.iter().all(|x| x.abs() < 1e-14));
        assert!(frame.defect < 1e-14);
    }

    #[test]
    fn frame_orthogonality_is_exact() {
        let (m, ops) = disk(0.12);
        let omega = random_so2(&m, 5, 0.04);
        let frame = uhlenbeck_gauge(&m, &ops, &omega, &GaugeOpts::default()).unwrap();
        for v in 0..m.n_vertices() {
            let p = &frame.p[v];
            assert!((p.transpose() * p - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
            assert!((p.determinant() - 1.0).abs() < 1e-10);
        }
        // xi vanishes on the boundary and is exactly antisymmetric
        for v in 0..m.n_vertices() {
            if m.is_boundary(v) {
                assert!(frame.xi.data[v * 4 + 1].abs() < 1e-30);
            }
            assert_eq!(frame.xi.data[v * 4 + 1], -frame.xi.data[v * 4 + 2]);
        }
    }

    #[test]
    fn so2_gauge_matches_scalar_hodge_oracle() {
        let (mesh, ops) = disk(0.1);
        let omega = random_so2(&mesh, 11, 0.04);
        let frame = uhlenbeck_gauge(
            &mesh,
            &ops,
            &omega,
            &GaugeOpts { grad_tol: 1e-11, max_iters: 2000, ..Default::default() },
        )
        .unwrap();
        // oracle: two Poisson solves on the (1,2) component w
        let w: Vec<[f64; 2]> = (0..mesh.n_triangles())
            .map(|t| [omega.get(t, 0, 1, 0), omega.get(t, 0, 1, 1)])
            .collect();
        let (a, _) = pde::solve_poisson(
            &mesh,
            &ops,
            Rhs::Load(pde::load_weak_gradient(&mesh, &w)),
            Bc::NeumannMeanZero(None),
        )
        .unwrap();
        let (b, _) = pde::solve_poisson(
            &mesh,
            &ops,
            Rhs::Load(pde::load_weak_perp_gradient(&mesh, &w)),
            Bc::DirichletZero,
        )
        .unwrap();
        // P ~ rotation by -a up to a global constant
        let theta: Vec<f64> = (0..mesh.n_vertices())
            .map(|v| frame.p[v][(1, 0)].atan2(frame.p[v][(0, 0)]))
            .collect();
        let offset = theta[0] + a[0];
        let mut num = 0.0;
        let mut xi_num = 0.0;
        for v in 0..mesh.n_vertices() {
            let mut d = theta[v] + a[v] - offset;
            while d > std::f64::consts::PI {
                d -= 2.0 * std::f64::consts::PI;
            }
            while d < -std::f64::consts::PI {
                d += 2.0 * std::f64::consts::PI;
            }
            num += ops.lumped_mass[v] * d * d;
            let dxi = frame.xi.data[v * 4 + 1] - b[v];
            xi_num += ops.lumped_mass[v] * dxi * dxi;
        }
        assert!(num.sqrt() <= 1e-6, "P vs oracle L2 gap {}", num.sqrt());
        assert!(xi_num.sqrt() <= 1e-6, "xi vs oracle L2 gap {}", xi_num.sqrt());
        // continuum bound with slack
        assert!(frame.bound_ratio <= 3.3, "bound ratio {}", frame.bound_ratio);
    }

    #[test]
    fn riviere_trivial_fixed_point() {
        let (mesh, ops) = disk(0.15);
        let omega = SoMatField::zeros(mesh.n_triangles(), 2);
        let frame = uhlenbeck_gauge(&mesh, &ops, &omega, &GaugeOpts::default()).unwrap();
        let psi = MapField::from_fn(mesh.n_vertices(), 2, |v| {
            vec![mesh.vertices[v][0], mesh.vertices[v][1]]
        });
        let dec = riviere_ab(&mesh, &ops, &frame, &psi, 0.0, &RiviereOpts::default()).unwrap();
        assert!(dec.a_hat.data.iter().all(|x| x.abs() < 1e-12));
        assert!(dec.b.data.iter().all(|x| x.abs() < 1e-12));
        for v in 0..mesh.n_vertices() {
            assert!((dec.a.data[v * 4] - 1.0).abs() < 1e-12);
            assert!((dec.a.data[v * 4 + 3] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn riviere_matches_direct_affine_solve() {
        // coarse mesh so the probed dense system stays small
        let (mesh, ops) = disk(0.22);
        let omega = random_so2(&mesh, 23, 0.03);
        let frame = uhlenbeck_gauge(
            &mesh,
            &ops,
            &omega,
            &GaugeOpts { grad_tol: 1e-11, max_iters: 2000, ..Default::default() },
        )
        .unwrap();
        let m = 2;
        let mm = 4;
        let n = mesh.n_vertices();
        let p_nodal = MapField::from_fn(n, mm, |v| {
            let mut row = vec![0.0; mm];
            for i in 0..m {
                for j in 0..m {
                    row[i * m + j] = frame.p[v][(i, j)];
                }
            }
            row
        });
        let grad_p = map_gradients(&mesh, &p_nodal);
        let grad_xi = map_gradients(&mesh, &frame.xi);
        let tap = |s: &TState| -> TState {
            apply_t(&mesh, &ops, m, &p_nodal, &grad_p, &grad_xi, s, None).unwrap()
        };
        let zero = TState { alpha: MapField::zeros(n, mm), beta: MapField::zeros(n, mm) };
        let c = tap(&zero);
        let dim = 2 * mm * n;
        let pack = |s: &TState| -> Vec<f64> {
            let mut v = s.alpha.data.clone();
            v.extend_from_slice(&s.beta.data);
            v
        };
        let unpack = |v: &[f64]| -> TState {
            TState {
                alpha: MapField { m: mm, data: v[..mm * n].to_vec() },
                beta: MapField { m: mm, data: v[mm * n..].to_vec() },
            }
        };
        // dense (I - L) from probing the linear part of T
        let cvec = pack(&c);
        let mut mat = DMatrix::<f64>::zeros(dim, dim);
        for k in 0..dim {
            let mut e = vec![0.0; dim];
            e[k] = 1.0;
            let te = pack(&tap(&unpack(&e)));
            for r in 0..dim {
                mat[(r, k)] = (if r == k { 1.0 } else { 0.0 }) - (te[r] - cvec[r]);
            }
        }
        let rhs = nalgebra::DVector::from_vec(cvec.clone());
        let direct = mat.lu().solve(&rhs).expect("direct affine solve");

        let psi = MapField::from_fn(n, 2, |v| vec![mesh.vertices[v][0], mesh.vertices[v][1]]);
        let dec = riviere_ab(
            &mesh,
            &ops,
            &frame,
            &psi,
            omega.l2_norm_sq(&mesh),
            &RiviereOpts { fp_tol: 1e-13, ..Default::default() },
        )
        .unwrap();
        let fp = pack(&TState { alpha: dec.a_hat.clone(), beta: dec.b.clone() });
        let mut worst = 0.0f64;
        for k in 0..dim {
            worst = worst.max((fp[k] - direct[k]).abs());
        }
        assert!(worst <= 1e-8, "fixed point vs direct solve: {worst:e}");
        assert!(dec.contraction_rate <= 0.5, "rate {}", dec.contraction_rate);
    }

    #[test]
    fn dbar_zero_is_identity() {
        let mesh = make_mesh(Domain::Disk, 0.15).unwrap();
        let omega = vec![Complex64::new(0.0, 0.0); mesh.n_triangles()];
        let f = dbar_frame(&mesh, &omega, 1, &DbarOpts::default()).unwrap();
        assert_eq!(f.iterations, 1);
        assert!(f.a_minus_i_norm < 1e-15);
    }

    #[test]
    fn dbar_scalar_constant_matches_exponential() {
        // m = 1, ω = c χ_D small: exact fixed point is exp(c T(χ)); compare
        // against the same discrete transform to isolate the Picard path
        let mesh = make_mesh(Domain::Disk, 0.1).unwrap();
        let c = Complex64::new(5e-4, 2e-4);
        let omega = vec![c; mesh.n_triangles()];
        let f = dbar_frame(&mesh, &omega, 1, &DbarOpts { fp_tol: 1e-14, ..Default::default() })
            .unwrap();
        let chi = vec![Complex64::new(1.0, 0.0); mesh.n_triangles()];
        let tchi = crate::cauchy::cauchy_transform(&mesh, &chi, &vertex_targets(&mesh));
        let mut worst = 0.0f64;
        for v in 0..mesh.n_vertices() {
            let want = (c * tchi[v]).exp();
            worst = worst.max((f.a[v] - want).norm());
        }
        assert!(worst <= 1e-6, "Picard vs exponential: {worst:e}");
        assert!(f.contraction <= 0.30, "contraction {}", f.contraction);
        assert!(f.a_minus_i_norm <= 1.0 / 3.0);
    }

    #[test]
    fn holomorphic_factor_constant_map_and_sup_ratio() {
        use crate::eigenmap::{build_solution, SolveKind};
        use crate::ellipsoid::EllipsoidSpec;
        let (mesh, ops) = disk(0.1);
        let spec = EllipsoidSpec::new(vec![2.0, 2.0]).unwrap();
        // constant map: alpha = 0 everywhere
        let cmap = MapField::from_fn(mesh.n_vertices(), 2, |_| vec![1.0 / 2.0f64.sqrt(), 0.0]);
        let sol = build_solution(&mesh, &ops, &spec, cmap, SolveKind::Interior, 0, true);
        let omega0 = SoMatField::from_omega(&sol.omega, mesh.n_triangles());
        let frame = uhlenbeck_gauge(&mesh, &ops, &omega0, &GaugeOpts::default()).unwrap();
        let om = omega_from_frame(&mesh, &frame);
        let dbar = dbar_frame(&mesh, &om, 2, &DbarOpts::default()).unwrap();
        let fac = holomorphic_factor(&mesh, &sol, &frame, &dbar).unwrap();
        assert!(fac.alpha.iter().all(|a| a.norm() < 1e-12));

        // circle eigenmap: |alpha|^2 constant, sup ratio ~ 1/pi
        let w = [0.9, 0.0];
        let lam = 2.0f64;
        let cem = MapField::from_fn(mesh.n_vertices(), 2, |v| {
            let p = mesh.vertices[v];
            let u = w[0] * p[0] + w[1] * p[1];
            vec![u.cos() / lam.sqrt(), u.sin() / lam.sqrt()]
        });
        let sol = build_solution(&mesh, &ops, &spec, cem, SolveKind::Interior, 0, true);
        let omega = SoMatField::from_omega(&sol.omega, mesh.n_triangles());
        let frame = uhlenbeck_gauge(&mesh, &ops, &omega, &GaugeOpts::default()).unwrap();
        let om = omega_from_frame(&mesh, &frame);
        let dbar = dbar_frame(&mesh, &om, 2, &DbarOpts::default()).unwrap();
        let fac = holomorphic_factor(&mesh, &sol, &frame, &dbar).unwrap();
        let want = 1.0 / std::f64::consts::PI;
        assert!(
            (fac.sup_ratio - want).abs() < 0.15 * want,
            "sup ratio {} vs {}",
            fac.sup_ratio,
            want
        );
    }
}
