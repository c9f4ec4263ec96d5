//! Sparse symmetric generalized eigenproblems `K phi = lambda B phi`.
//!
//! Block inverse subspace iteration with Rayleigh-Ritz extraction; the
//! weight matrix `B` may be positive definite (weighted mass) or positive
//! semidefinite (boundary mass of a Steklov problem). When `K` is singular
//! on constants (Neumann), the iteration runs on the shifted pencil
//! `(K + B, B)` and shifts the Ritz values back.

use crate::rng::CounterRng;
use crate::sparse::{self, CgOpts, Csr};
use crate::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};

pub const EIG_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EigBc {
    /// Zero Dirichlet values on the masked dofs.
    Dirichlet,
    /// Natural condition; `K` has the constants in its kernel.
    Neumann,
}

pub struct EigPair {
    pub value: f64,
    pub vector: Vec<f64>,
    /// `||K phi - lambda B phi|| / (||K phi|| + |lambda| ||B phi||)`.
    pub residual: f64,
}

/// Relative residual over the free rows only: the equation does not hold on
/// constrained rows (there `K phi` carries the boundary flux).
pub fn eig_residual(k: &Csr, b: &Csr, lambda: f64, phi: &[f64], fixed: &[bool]) -> f64 {
    let kx = k.mul_vec(phi);
    let bx = b.mul_vec(phi);
    let mut num = 0.0;
    let mut ksq = 0.0;
    let mut bsq = 0.0;
    for i in 0..k.n {
        if fixed[i] {
            continue;
        }
        let r = kx[i] - lambda * bx[i];
        num += r * r;
        ksq += kx[i] * kx[i];
        bsq += bx[i] * bx[i];
    }
    let den = ksq.sqrt() + lambda.abs() * bsq.sqrt();
    num.sqrt() / den.max(1e-300)
}

/// Smallest `count` eigenpairs of `K phi = lambda B phi`, ascending and
/// B-orthonormal. `fixed` marks Dirichlet dofs (may be all-false).
pub fn generalized_eig(
    k: &Csr,
    b: &Csr,
    count: usize,
    bc: EigBc,
    fixed: &[bool],
) -> Result<Vec<EigPair>> {
    let n = k.n;
    let free = fixed.iter().filter(|f| !*f).count();
    if count == 0 || count > free {
        return Err(Error::BadParam(format!("requested {count} pairs of a {free}-dof pencil")));
    }
    let shift = match bc {
        EigBc::Dirichlet => 0.0,
        EigBc::Neumann => 1.0,
    };
    // A = K + shift B
    let a = if shift == 0.0 {
        k.clone()
    } else {
        let mut trip = Vec::new();
        for i in 0..n {
            for p in k.row_ptr[i]..k.row_ptr[i + 1] {
                trip.push((i, k.col_idx[p], k.values[p]));
            }
            for p in b.row_ptr[i]..b.row_ptr[i + 1] {
                trip.push((i, b.col_idx[p], shift * b.values[p]));
            }
        }
        Csr::from_triplets(n, &trip)
    };

    let p = (count + (count + 2).min(8)).min(free);
    let rng = CounterRng::new(0x5eed_e16e, 17);
    let mut x: Vec<Vec<f64>> = (0..p)
        .map(|c| {
            (0..n)
                .map(|i| if fixed[i] { 0.0 } else { rng.normal((c * n + i) as u64) })
                .collect()
        })
        .collect();

    let bdot = |u: &[f64], v: &[f64]| -> f64 { sparse::dot(&b.mul_vec(u), v) };
    let b_orthonormalize = |cols: &mut Vec<Vec<f64>>| -> Result<()> {
        for c in 0..cols.len() {
            for prev in 0..c {
                let proj = bdot(&cols[prev], &cols[c]);
                let (head, tail) = cols.split_at_mut(c);
                sparse::axpy(&mut tail[0], -proj, &head[prev]);
            }
            let nrm = bdot(&cols[c], &cols[c]).sqrt();
            if !(nrm > 1e-13) {
                return Err(Error::Degenerate("B-degenerate subspace in eigensolver".into()));
            }
            for v in cols[c].iter_mut() {
                *v /= nrm;
            }
        }
        Ok(())
    };
    b_orthonormalize(&mut x)?;

    let opts = CgOpts { rel_tol: 1e-12, max_iters: 20_000 };
    let mut pairs: Vec<EigPair> = Vec::new();
    for _iter in 0..300 {
        // Y = A^{-1} B X, warm-started on the previous block
        let mut y = Vec::with_capacity(p);
        for xc in x.iter() {
            let rhs = b.mul_vec(xc);
            let (sol, _) = sparse::cg_constrained(&a, &rhs, fixed, xc, opts)?;
            y.push(sol);
        }
        b_orthonormalize(&mut y)?;
        // Rayleigh-Ritz on the B-orthonormal block: small symmetric eigenproblem
        let mut kr = DMatrix::zeros(p, p);
        let ky: Vec<Vec<f64>> = y.iter().map(|c| a.mul_vec(c)).collect();
        for i in 0..p {
            for j in 0..p {
                kr[(i, j)] = sparse::dot(&ky[i], &y[j]);
            }
        }
        kr = (kr.clone() + kr.transpose()) * 0.5;
        let se = SymmetricEigen::new(kr);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());
        let mut newx: Vec<Vec<f64>> = Vec::with_capacity(p);
        for &oi in &order {
            let mut col = vec![0.0; n];
            for (ci, yc) in y.iter().enumerate() {
                sparse::axpy(&mut col, se.eigenvectors[(ci, oi)], yc);
            }
            newx.push(col);
        }
        x = newx;
        // residuals of the leading pairs against the ORIGINAL pencil
        pairs = (0..count)
            .map(|c| {
                let lam = se.eigenvalues[order[c]] - shift;
                EigPair {
                    value: lam,
                    residual: eig_residual(k, b, lam, &x[c], fixed),
                    vector: x[c].clone(),
                }
            })
            .collect();
        if pairs.iter().all(|pr| pr.residual <= EIG_TOL) {
            break;
        }
    }
    Ok(pairs)
}

/// Dense reference solver on the same matrices (test oracle): reduces the
/// free-dof pencil by a Cholesky factorization of `B` and calls the dense
/// symmetric eigensolver.
pub fn dense_oracle(k: &Csr, b: &Csr, count: usize, fixed: &[bool]) -> Result<Vec<f64>> {
    let idx: Vec<usize> = (0..k.n).filter(|&i| !fixed[i]).collect();
    let nf = idx.len();
    let pos: Vec<isize> = {
        let mut p = vec![-1isize; k.n];
        for (r, &i) in idx.iter().enumerate() {
            p[i] = r as isize;
        }
        p
    };
    let densify = |m: &Csr| {
        let mut d = DMatrix::zeros(nf, nf);
        for i in 0..m.n {
            if pos[i] < 0 {
                continue;
            }
            for pp in m.row_ptr[i]..m.row_ptr[i + 1] {
                let j = m.col_idx[pp];
                if pos[j] >= 0 {
                    d[(pos[i] as usize, pos[j] as usize)] = m.values[pp];
                }
            }
        }
        d
    };
    let kd = densify(k);
    let bd = densify(b);
    let chol = bd
        .cholesky()
        .ok_or_else(|| Error::Singular("dense oracle: B not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("dense oracle: L inverse".into()))?;
    let s = &linv * kd * linv.transpose();
    let s = (s.clone() + s.transpose()) * 0.5;
    let mut vals: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().cloned().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(vals.into_iter().take(count).collect())
}
