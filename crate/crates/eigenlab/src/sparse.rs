//! Compressed sparse row matrices and conjugate-gradient solvers.
//!
//! Everything here is deterministic: assembly sorts column indices, matvecs
//! write each output row from a single task, and dot products reduce over
//! fixed chunks (see [`crate::par`]).

use crate::par;
use crate::{Error, Result};

/// Symmetric sparse matrix in CSR form.
#[derive(Clone, Debug)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    /// Build from (i, j, v) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for &(j, v) in row.iter() {
                if last == Some(j) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Csr { n, row_ptr, col_idx, values }
    }

    pub fn diag(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[k] == i {
                    d[i] = self.values[k];
                }
            }
        }
        d
    }

    /// y = A x.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        par::map_indexed(self.n, |i| {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            s
        })
    }

    /// Matvec on node-major interleaved data with `m` components per node.
    pub fn mul_block(&self, x: &[f64], m: usize) -> Vec<f64> {
        let out = par::map_indexed(self.n, |i| {
            let mut acc = vec![0.0; m];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                let v = self.values[k];
                let xs = &x[j * m..j * m + m];
                for c in 0..m {
                    acc[c] += v * xs[c];
                }
            }
            acc
        });
        let mut flat = Vec::with_capacity(self.n * m);
        for row in out {
            flat.extend_from_slice(&row);
        }
        flat
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let ax = self.mul_vec(x);
        dot(x, &ax)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    par::sum_indexed(a.len(), |i| a[i] * b[i])
}

pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Options for the CG solvers.
#[derive(Clone, Copy, Debug)]
pub struct CgOpts {
    pub rel_tol: f64,
    pub max_iters: usize,
}

impl Default for CgOpts {
    fn default() -> Self {
        CgOpts { rel_tol: 1e-10, max_iters: 50_000 }
    }
}

pub struct CgOutcome {
    pub iterations: usize,
    pub residual: f64,
}

/// Preconditioned CG restricted to the free dofs of a constrained system.
///
/// Solves `A x = b` with `x[i]` pinned to `x0[i]` wherever `fixed[i]`;
/// `x0` also provides the warm start on the free dofs. Jacobi preconditioner.
pub fn cg_constrained(
    a: &Csr,
    b: &[f64],
    fixed: &[bool],
    x0: &[f64],
    opts: CgOpts,
) -> Result<(Vec<f64>, CgOutcome)> {
    let n = a.n;
    let dinv: Vec<f64> = a
        .diag()
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 0.0 })
        .collect();
    let mask = |v: &mut [f64]| {
        for i in 0..n {
            if fixed[i] {
                v[i] = 0.0;
            }
        }
    };
    let mut x = x0.to_vec();
    let mut r = {
        let ax = a.mul_vec(&x);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        mask(&mut r);
        r
    };
    let bnorm = {
        let mut bb = b.to_vec();
        mask(&mut bb);
        let scale = norm2(&bb).max(norm2(&r));
        if scale == 0.0 {
            return Ok((x, CgOutcome { iterations: 0, residual: 0.0 }));
        }
        scale
    };
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(ri, di)| ri * di).collect();
    mask(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut res = norm2(&r);
    let mut it = 0;
    while res > opts.rel_tol * bnorm && it < opts.max_iters {
        let mut ap = a.mul_vec(&p);
        mask(&mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Singular(format!("CG breakdown, pAp = {pap:e}")));
        }
        let alpha = rz / pap;
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        z = r.iter().zip(&dinv).map(|(ri, di)| ri * di).collect();
        mask(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = norm2(&r);
        it += 1;
    }
    if res > opts.rel_tol * bnorm * 10.0 {
        return Err(Error::Singular(format!(
            "CG stalled at relative residual {:e} after {} iterations",
            res / bnorm,
            it
        )));
    }
    Ok((x, CgOutcome { iterations: it, residual: res / bnorm }))
}

/// CG for a consistent singular Neumann system: iterates are kept orthogonal
/// to the kernel of constants in the `weight`-inner product, and the right
/// hand side is projected first (the projection defect is returned).
pub fn cg_neumann_meanzero(
    a: &Csr,
    b: &[f64],
    weight: &[f64],
    x0: &[f64],
    opts: CgOpts,
) -> Result<(Vec<f64>, CgOutcome, f64)> {
    let wsum: f64 = par::sum_indexed(weight.len(), |i| weight[i]);
    let project = |v: &mut [f64]| {
        let mean = par::sum_indexed(v.len(), |i| v[i] * weight[i]) / wsum;
        for vi in v.iter_mut() {
            *vi -= mean;
        }
    };
    // compatibility defect of the load: sum of b should vanish
    let bsum: f64 = par::sum_indexed(b.len(), |i| b[i]);
    let defect = bsum.abs() / norm2(b).max(1e-300);
    let mut bp = b.to_vec();
    let mean = bsum / wsum;
    for (bi, wi) in bp.iter_mut().zip(weight) {
        *bi -= mean * wi;
    }
    let mut x = x0.to_vec();
    project(&mut x);
    let fixed = vec![false; a.n];
    // wrap: run plain CG but re-project the iterate drift at the end
    let (mut sol, out) = cg_constrained(a, &bp, &fixed, &x, opts)?;
    project(&mut sol);
    Ok((sol, out, defect))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spd() -> Csr {
        // 1D Laplacian with Dirichlet ends, n = 5
        let mut t = Vec::new();
        for i in 0..5usize {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i < 4 {
                t.push((i, i + 1, -1.0));
            }
        }
        Csr::from_triplets(5, &t)
    }

    #[test]
    fn cg_solves_tridiagonal() {
        let a = small_spd();
        let b = vec![1.0; 5];
        let fixed = vec![false; 5];
        let x0 = vec![0.0; 5];
        let (x, out) = cg_constrained(&a, &b, &fixed, &x0, CgOpts::default()).unwrap();
        let r = a.mul_vec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-9);
        }
        assert!(out.iterations <= 5);
    }

    #[test]
    fn constrained_pins_values() {
        let a = small_spd();
        let b = vec![0.0; 5];
        let mut fixed = vec![false; 5];
        fixed[0] = true;
        fixed[4] = true;
        let mut x0 = vec![0.0; 5];
        x0[0] = 1.0;
        x0[4] = 3.0;
        // interior equations: 2x_i - x_{i-1} - x_{i+1} = 0 -> linear ramp
        let b2: Vec<f64> = b.clone();
        let (x, _) = cg_constrained(&a, &b2, &fixed, &x0, CgOpts::default()).unwrap();
        for (i, xi) in x.iter().enumerate() {
            assert!((xi - (1.0 + 0.5 * i as f64)).abs() < 1e-9, "x = {x:?}");
        }
    }
}
