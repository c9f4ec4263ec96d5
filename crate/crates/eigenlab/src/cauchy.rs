//! Cauchy transform of piecewise-constant densities,
//! `T(f)(z) = int f(w) / (pi (z - w)) dA(w)`, so that `dzbar T(f) = f`.
//!
//! The integral of the kernel over each triangle is evaluated in closed form
//! via the complex Green identity
//! `int_T dA/(z-w) = (1/2i) oint (wbar - zbar)/(z - w) dw`,
//! which reduces to one principal-branch logarithm per edge. The formula is
//! exact for any target position, including targets inside the element or on
//! its edges; the log coefficient vanishes identically when the target is
//! collinear with an edge, so no NaN can occur.

use crate::mesh::DiskMesh;
use crate::par;
use num_complex::Complex64;

/// `int_T dA(w) / (z - w)` for the CCW triangle `(a, b, c)`.
pub fn triangle_kernel(a: Complex64, b: Complex64, c: Complex64, z: Complex64) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    for (p0, p1) in [(a, b), (b, c), (c, a)] {
        let d = p1 - p0;
        let p = p0 - z;
        sum -= d.conj();
        // coefficient (pbar d - p dbar) = 2i Im(pbar d) = 2i cross(p, d)
        let cross = p.re * d.im - p.im * d.re;
        if cross != 0.0 {
            let q = p1 - z;
            if p.norm_sqr() > 0.0 && q.norm_sqr() > 0.0 {
                let log = (q / p).ln();
                sum -= Complex64::new(0.0, 2.0 * cross) / d * log;
            }
        }
    }
    sum / Complex64::new(0.0, 2.0)
}

/// Cauchy transform operator from per-element densities on `mesh` to values
/// at `targets`. The kernel matrix is cached when it fits in `cache_limit`
/// bytes; otherwise kernels are recomputed per application (amortized over
/// all fields of a block).
pub struct CauchyOp {
    corners: Vec<[Complex64; 3]>,
    targets: Vec<Complex64>,
    kernel: Option<Vec<Complex64>>,
}

impl CauchyOp {
    pub fn new(mesh: &DiskMesh, targets: Vec<Complex64>, cache_limit: usize) -> Self {
        let corners: Vec<[Complex64; 3]> = mesh
            .triangles
            .iter()
            .map(|t| {
                let p = |v: usize| Complex64::new(mesh.vertices[v][0], mesh.vertices[v][1]);
                [p(t[0]), p(t[1]), p(t[2])]
            })
            .collect();
        let ne = corners.len();
        let nt = targets.len();
        let kernel = if nt.saturating_mul(ne).saturating_mul(16) <= cache_limit {
            let rows = par::map_indexed(nt, |i| {
                let z = targets[i];
                let mut row = Vec::with_capacity(ne);
                for tri in &corners {
                    row.push(
                        triangle_kernel(tri[0], tri[1], tri[2], z)
                            / std::f64::consts::PI,
                    );
                }
                row
            });
            let mut flat = Vec::with_capacity(nt * ne);
            for r in rows {
                flat.extend(r);
            }
            Some(flat)
        } else {
            None
        };
        CauchyOp { corners, targets, kernel }
    }

    pub fn n_targets(&self) -> usize {
        self.targets.len()
    }

    /// Apply to one density.
    pub fn apply(&self, f: &[Complex64]) -> Vec<Complex64> {
        self.apply_block(&[f]).pop().unwrap()
    }

    /// Apply to several densities at once (kernel evaluated once per pair).
    pub fn apply_block(&self, fields: &[&[Complex64]]) -> Vec<Vec<Complex64>> {
        let ne = self.corners.len();
        let nf = fields.len();
        let rows: Vec<Vec<Complex64>> = par::map_indexed(self.targets.len(), |i| {
            let mut acc = vec![Complex64::new(0.0, 0.0); nf];
            match &self.kernel {
                Some(k) => {
                    let row = &k[i * ne..(i + 1) * ne];
                    for (e, &kv) in row.iter().enumerate() {
                        for (c, f) in fields.iter().enumerate() {
                            acc[c] += kv * f[e];
                        }
                    }
                }
                None => {
                    let z = self.targets[i];
                    for (e, tri) in self.corners.iter().enumerate() {
                        let kv = triangle_kernel(tri[0], tri[1], tri[2], z)
                            / std::f64::consts::PI;
                        for (c, f) in fields.iter().enumerate() {
                            acc[c] += kv * f[e];
                        }
                    }
                }
            }
            acc
        });
        // transpose to field-major
        let mut out = vec![vec![Complex64::new(0.0, 0.0); self.targets.len()]; nf];
        for (i, row) in rows.iter().enumerate() {
            for c in 0..nf {
                out[c][i] = row[c];
            }
        }
        out
    }
}

/// Convenience: transform of a per-element density at arbitrary points.
pub fn cauchy_transform(
    mesh: &DiskMesh,
    f: &[Complex64],
    targets: &[Complex64],
) -> Vec<Complex64> {
    CauchyOp::new(mesh, targets.to_vec(), 0).apply(f)
}

/// Targets at all mesh vertices.
pub fn vertex_targets(mesh: &DiskMesh) -> Vec<Complex64> {
    mesh.vertices
        .iter()
        .map(|p| Complex64::new(p[0], p[1]))
        .collect()
}
