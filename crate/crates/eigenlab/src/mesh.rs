//! Triangulations of the unit disk and upper half-disk, with P1 operators.
//!
//! Meshes are built from concentric rings (radial step `1/N`, `N ≈ 1/h`),
//! triangulated annulus by annulus with an angular two-pointer merge. The
//! construction is deterministic, quasi-uniform, and symmetric: the upper
//! half of a disk mesh coincides vertex-for-vertex and triangle-for-triangle
//! with the half-disk mesh of the same `h`, which the symmetrized extension
//! relies on.
//!
//! Boundary tags: ring-`N` vertices are `Circle` (exactly on the unit
//! circle); half-disk vertices with `y = 0` are `Flat` (exactly zero). The
//! two corner vertices `(±1, 0)` are tagged `Circle` — arc data wins there.

use crate::sparse::Csr;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Disk,
    HalfDisk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VertexTag {
    Interior,
    Circle,
    Flat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryTag {
    Circle,
    Flat,
}

#[derive(Clone, Debug)]
pub struct DiskMesh {
    pub domain: Domain,
    pub h: f64,
    pub rings: usize,
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub vertex_tag: Vec<VertexTag>,
    /// (a, b, tag), oriented with the domain on the left.
    pub boundary_edges: Vec<(usize, usize, BoundaryTag)>,
    pub tri_area: Vec<f64>,
    /// Gradients of the three hat functions per triangle.
    pub tri_grads: Vec<[[f64; 2]; 3]>,
    pub tri_centroid: Vec<[f64; 2]>,
    /// Inner ring index per triangle (0 = center fan), for point location.
    tri_annulus: Vec<usize>,
}

fn ring_points(domain: Domain, j: usize, rings: usize) -> Vec<[f64; 2]> {
    let r = j as f64 / rings as f64;
    match domain {
        Domain::Disk => {
            let n = 6 * j;
            // Points with k > n/2 are exact mirrors of n-k, so the mesh is
            // bitwise symmetric under y -> -y; axis points are pinned exactly.
            let upper = |k: usize| -> [f64; 2] {
                if k == 0 {
                    [r, 0.0]
                } else if 2 * k == n {
                    [-r, 0.0]
                } else if 4 * k == n {
                    [0.0, r]
                } else {
                    let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                    [r * th.cos(), r * th.sin()]
                }
            };
            (0..n)
                .map(|k| {
                    if 2 * k <= n {
                        upper(k)
                    } else {
                        let m = upper(n - k);
                        [m[0], -m[1]]
                    }
                })
                .collect()
        }
        Domain::HalfDisk => {
            let n = 3 * j;
            (0..=n)
                .map(|k| {
                    let th = std::f64::consts::PI * k as f64 / n as f64;
                    if k == 0 {
                        [r, 0.0]
                    } else if k == n {
                        [-r, 0.0]
                    } else if 2 * k == n {
                        [0.0, r]
                    } else {
                        [r * th.cos(), r * th.sin()]
                    }
                })
                .collect()
        }
    }
}

fn angle_of(domain: Domain, j: usize, k: usize) -> f64 {
    match domain {
        Domain::Disk => 2.0 * std::f64::consts::PI * k as f64 / (6 * j) as f64,
        Domain::HalfDisk => std::f64::consts::PI * k as f64 / (3 * j) as f64,
    }
}

/// Quasi-uniform triangulation of the requested domain with mesh size `h`.
pub fn make_mesh(domain: Domain, h: f64) -> Result<DiskMesh> {
    if !(h > 0.0 && h < 0.5) {
        return Err(Error::BadParam(format!("mesh size h = {h} out of (0, 1/2)")));
    }
    let rings = ((1.0 / h).round() as usize).max(2);
    let mut vertices: Vec<[f64; 2]> = vec![[0.0, 0.0]];
    let mut ring_start = vec![0usize; rings + 1];
    for j in 1..=rings {
        ring_start[j] = vertices.len();
        vertices.extend(ring_points(domain, j, rings));
    }
    let ring_len = |j: usize| -> usize {
        match (j, domain) {
            (0, _) => 1,
            (_, Domain::Disk) => 6 * j,
            (_, Domain::HalfDisk) => 3 * j + 1,
        }
    };

    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let mut tri_annulus: Vec<usize> = Vec::new();

    // center fan
    {
        let s = ring_start[1];
        let n = ring_len(1);
        match domain {
            Domain::Disk => {
                for k in 0..n {
                    triangles.push([0, s + k, s + (k + 1) % n]);
                    tri_annulus.push(0);
                }
            }
            Domain::HalfDisk => {
                for k in 0..n - 1 {
                    triangles.push([0, s + k, s + k + 1]);
                    tri_annulus.push(0);
                }
            }
        }
    }

    // annuli
    for j in 1..rings {
        let (si, so) = (ring_start[j], ring_start[j + 1]);
        let (ni, no) = (ring_len(j), ring_len(j + 1));
        match domain {
            Domain::HalfDisk => {
                // open chains sharing endpoints at angles 0 and pi
                let (mut ai, mut bi) = (0usize, 0usize);
                while ai + 1 < ni || bi + 1 < no {
                    let adv_outer = if ai + 1 >= ni {
                        true
                    } else if bi + 1 >= no {
                        false
                    } else {
                        angle_of(domain, j + 1, bi + 1) <= angle_of(domain, j, ai + 1)
                    };
                    if adv_outer {
                        triangles.push([si + ai, so + bi, so + bi + 1]);
                        bi += 1;
                    } else {
                        triangles.push([si + ai, so + bi, si + ai + 1]);
                        ai += 1;
                    }
                    tri_annulus.push(j);
                }
            }
            Domain::Disk => {
                // cyclic merge; virtual index n maps to 0 at angle 2*pi
                let (mut ai, mut bi) = (0usize, 0usize);
                let two_pi = 2.0 * std::f64::consts::PI;
                let ang_i = |k: usize| {
                    if k >= ni { two_pi } else { angle_of(domain, j, k) }
                };
                let ang_o = |k: usize| {
                    if k >= no { two_pi } else { angle_of(domain, j + 1, k) }
                };
                while ai < ni || bi < no {
                    let adv_outer = if ai >= ni {
                        true
                    } else if bi >= no {
                        false
                    } else {
                        ang_o(bi + 1) <= ang_i(ai + 1)
                    };
                    if adv_outer {
                        triangles.push([si + ai % ni, so + bi % no, so + (bi + 1) % no]);
                        bi += 1;
                    } else {
                        triangles.push([si + ai % ni, so + bi % no, si + (ai + 1) % ni]);
                        ai += 1;
                    }
                    tri_annulus.push(j);
                }
            }
        }
    }

    // tags
    let mut vertex_tag = vec![VertexTag::Interior; vertices.len()];
    for j in 1..=rings {
        let s = ring_start[j];
        for k in 0..ring_len(j) {
            let v = s + k;
            if j == rings {
                vertex_tag[v] = VertexTag::Circle;
            } else if domain == Domain::HalfDisk && vertices[v][1] == 0.0 {
                vertex_tag[v] = VertexTag::Flat;
            }
        }
    }
    if domain == Domain::HalfDisk {
        vertex_tag[0] = VertexTag::Flat;
    }

    // boundary edges, domain on the left
    let mut boundary_edges = Vec::new();
    {
        let s = ring_start[rings];
        let n = ring_len(rings);
        match domain {
            Domain::Disk => {
                for k in 0..n {
                    boundary_edges.push((s + k, s + (k + 1) % n, BoundaryTag::Circle));
                }
            }
            Domain::HalfDisk => {
                for k in 0..n - 1 {
                    boundary_edges.push((s + k, s + k + 1, BoundaryTag::Circle));
                }
                // flat chain from (-1,0) to (1,0): ring endpoints in x order
                let mut chain: Vec<usize> = Vec::new();
                for j in (1..=rings).rev() {
                    chain.push(ring_start[j] + ring_len(j) - 1); // (-r_j, 0)
                }
                chain.push(0);
                for j in 1..=rings {
                    chain.push(ring_start[j]); // (r_j, 0)
                }
                for w in chain.windows(2) {
                    boundary_edges.push((w[0], w[1], BoundaryTag::Flat));
                }
            }
        }
    }

    // geometry
    let mut tri_area = Vec::with_capacity(triangles.len());
    let mut tri_grads = Vec::with_capacity(triangles.len());
    let mut tri_centroid = Vec::with_capacity(triangles.len());
    for t in &triangles {
        let p: Vec<[f64; 2]> = t.iter().map(|&v| vertices[v]).collect();
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
            - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        if det <= 0.0 {
            return Err(Error::Degenerate(format!("non-positive triangle area {det:e}")));
        }
        let area = 0.5 * det;
        tri_area.push(area);
        let mut g = [[0.0; 2]; 3];
        for i in 0..3 {
            let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
            g[i] = [(a[1] - b[1]) / det, (b[0] - a[0]) / det];
        }
        tri_grads.push(g);
        tri_centroid.push([
            (p[0][0] + p[1][0] + p[2][0]) / 3.0,
            (p[0][1] + p[1][1] + p[2][1]) / 3.0,
        ]);
    }

    Ok(DiskMesh {
        domain,
        h,
        rings,
        vertices,
        triangles,
        vertex_tag,
        boundary_edges,
        tri_area,
        tri_grads,
        tri_centroid,
        tri_annulus,
    })
}

impl DiskMesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.vertex_tag[v] != VertexTag::Interior
    }

    pub fn area(&self) -> f64 {
        self.tri_area.iter().sum()
    }

    /// Radius of the inner ring bounding triangle `t` from below.
    pub fn annulus_of(&self, t: usize) -> usize {
        self.tri_annulus[t]
    }

    /// Barycentric point location: returns (triangle, barycentric coords).
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        let j = ((r * self.rings as f64) as usize).min(self.rings - 1);
        let lo = j.saturating_sub(1);
        let hi = (j + 1).min(self.rings - 1);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for (t, tri) in self.triangles.iter().enumerate() {
            let a = self.tri_annulus[t];
            if a < lo || a > hi {
                continue;
            }
            let v0 = self.vertices[tri[0]];
            let v1 = self.vertices[tri[1]];
            let v2 = self.vertices[tri[2]];
            let det = 2.0 * self.tri_area[t];
            let l0 = ((v1[0] - p[0]) * (v2[1] - p[1]) - (v2[0] - p[0]) * (v1[1] - p[1])) / det;
            let l1 = ((v2[0] - p[0]) * (v0[1] - p[1]) - (v0[0] - p[0]) * (v2[1] - p[1])) / det;
            let l2 = 1.0 - l0 - l1;
            let worst = l0.min(l1).min(l2);
            if worst >= -1e-12 {
                return Some((t, [l0, l1, l2]));
            }
            if best.map_or(true, |(_, _, w)| worst > w) {
                best = Some((t, [l0, l1, l2], worst));
            }
        }
        best.filter(|&(_, _, w)| w > -0.05).map(|(t, l, _)| (t, l))
    }

    /// Evaluate a nodal scalar field at a point.
    pub fn eval(&self, field: &[f64], p: [f64; 2]) -> Option<f64> {
        self.locate(p).map(|(t, l)| {
            let tri = self.triangles[t];
            l[0] * field[tri[0]] + l[1] * field[tri[1]] + l[2] * field[tri[2]]
        })
    }

    /// Plain-text dump: `vertices N triangles T`, one vertex per line
    /// `x y tag`, one triangle per line `i j k`.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "vertices {} triangles {}\n",
            self.n_vertices(),
            self.n_triangles()
        ));
        for (v, p) in self.vertices.iter().enumerate() {
            let tag = match self.vertex_tag[v] {
                VertexTag::Interior => "interior",
                VertexTag::Circle => "circle",
                VertexTag::Flat => "flat",
            };
            s.push_str(&format!("{} {} {}\n", p[0], p[1], tag));
        }
        for t in &self.triangles {
            s.push_str(&format!("{} {} {}\n", t[0], t[1], t[2]));
        }
        s
    }
}

/// Assembled P1 operators on a mesh.
pub struct Operators {
    /// Stiffness: `K_ij = sum_e area_e grad(phi_i) . grad(phi_j)`;
    /// carries `Delta = -div grad`.
    pub stiffness: Csr,
    /// Consistent mass.
    pub mass: Csr,
    /// Lumped mass (`area/3` per incident triangle).
    pub lumped_mass: Vec<f64>,
    /// Lumped boundary mass per tag (half edge lengths).
    pub boundary_lumped_circle: Vec<f64>,
    pub boundary_lumped_flat: Vec<f64>,
}

impl Operators {
    pub fn assemble(mesh: &DiskMesh) -> Self {
        let n = mesh.n_vertices();
        let mut kt = Vec::with_capacity(9 * mesh.n_triangles());
        let mut mt = Vec::with_capacity(9 * mesh.n_triangles());
        let mut lumped = vec![0.0; n];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let a = mesh.tri_area[t];
            let g = &mesh.tri_grads[t];
            for i in 0..3 {
                lumped[tri[i]] += a / 3.0;
                for j in 0..3 {
                    kt.push((tri[i], tri[j], a * (g[i][0] * g[j][0] + g[i][1] * g[j][1])));
                    mt.push((tri[i], tri[j], if i == j { a / 6.0 } else { a / 12.0 }));
                }
            }
        }
        let mut blc = vec![0.0; n];
        let mut blf = vec![0.0; n];
        for &(a, b, tag) in &mesh.boundary_edges {
            let pa = mesh.vertices[a];
            let pb = mesh.vertices[b];
            let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
            let dst = match tag {
                BoundaryTag::Circle => &mut blc,
                BoundaryTag::Flat => &mut blf,
            };
            dst[a] += 0.5 * len;
            dst[b] += 0.5 * len;
        }
        Operators {
            stiffness: Csr::from_triplets(n, &kt),
            mass: Csr::from_triplets(n, &mt),
            lumped_mass: lumped,
            boundary_lumped_circle: blc,
            boundary_lumped_flat: blf,
        }
    }

    /// Consistent mass with a piecewise-constant weight.
    pub fn weighted_mass(mesh: &DiskMesh, weight: &[f64]) -> Csr {
        let n = mesh.n_vertices();
        let mut mt = Vec::with_capacity(9 * mesh.n_triangles());
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let aw = mesh.tri_area[t] * weight[t];
            for i in 0..3 {
                for j in 0..3 {
                    mt.push((tri[i], tri[j], if i == j { aw / 6.0 } else { aw / 12.0 }));
                }
            }
        }
        Csr::from_triplets(n, &mt)
    }

    /// Consistent boundary mass on edges of one tag, with a nodal weight.
    pub fn boundary_mass(mesh: &DiskMesh, tag: BoundaryTag, weight: &[f64]) -> Csr {
        let n = mesh.n_vertices();
        let mut bt = Vec::new();
        for &(a, b, etag) in &mesh.boundary_edges {
            if etag != tag {
                continue;
            }
            let pa = mesh.vertices[a];
            let pb = mesh.vertices[b];
            let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
            let w = 0.5 * (weight[a] + weight[b]);
            bt.push((a, a, w * len / 3.0));
            bt.push((b, b, w * len / 3.0));
            bt.push((a, b, w * len / 6.0));
            bt.push((b, a, w * len / 6.0));
        }
        Csr::from_triplets(n, &bt)
    }
}

/// Write a nodal or per-element field dump: one line per entity,
/// whitespace-separated values (shortest round-trip float formatting).
pub fn dump_field(values: &[f64], per_line: usize) -> String {
    let mut s = String::new();
    for chunk in values.chunks(per_line) {
        let parts: Vec<String> = chunk.iter().map(|v| format!("{v}")).collect();
        s.push_str(&parts.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_field(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(|w| w.parse::<f64>()).collect();
        out.push(row.map_err(|e| Error::Parse(format!("bad field value: {e}")))?);
    }
    Ok(out)
}
