//! Strict JSON experiment configuration.

use eigenlab::eigenmap::SolveOpts;
use eigenlab::mesh::Domain;
use eigenlab::verify::{Gates, SweepConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: Domain,
    pub h: f64,
    /// Interior problem parameters (Laplace eigenmap).
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
    /// Free-boundary problem parameters (Steklov eigenmap).
    #[serde(default)]
    pub sigma: Option<Vec<f64>>,
    pub boundary_data: BoundaryData,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub gates: GatesConfig,
    /// Radii for the monotonicity check; defaults to the mesh ring radii
    /// from 0.3 outward.
    #[serde(default)]
    pub radii: Option<Vec<f64>>,
    #[serde(default = "default_mono_slack")]
    pub mono_slack: f64,
    #[serde(default = "default_spectrum_count")]
    pub spectrum_count: usize,
    #[serde(default)]
    pub sweep: SweepSection,
    pub output_dir: String,
}

fn default_mono_slack() -> f64 {
    0.02
}

fn default_spectrum_count() -> usize {
    6
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum BoundaryData {
    /// A fixed point of the ellipsoid, padded with zeros if short.
    Constant { point: Vec<f64> },
    /// `(cos(w.x), sin(w.x))/sqrt(lambda_1)`, requires m = 2.
    CircleEigenmap { w: [f64; 2] },
    /// `z / sqrt(sigma_1)`, requires m = 2 (Steklov closed form).
    SteklovLinear,
    /// Seeded low-frequency loop around a base point, projected to the
    /// ellipsoid; `scale` controls the perturbation amplitude.
    RandomLoop { scale: f64, seed: u64 },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub solve_tol: f64,
    pub max_iters: usize,
    pub constraint_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let o = SolveOpts::default();
        Tolerances {
            solve_tol: o.solve_tol,
            max_iters: o.max_iters,
            constraint_tol: o.constraint_tol,
        }
    }
}

impl Tolerances {
    pub fn to_opts(self) -> SolveOpts {
        SolveOpts {
            solve_tol: self.solve_tol,
            max_iters: self.max_iters,
            constraint_tol: self.constraint_tol,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatesConfig {
    pub eps0: f64,
    pub eps1: f64,
    pub eps_alpha: f64,
}

impl Default for GatesConfig {
    fn default() -> Self {
        let g = Gates::default();
        GatesConfig { eps0: g.eps0, eps1: g.eps1, eps_alpha: g.eps_alpha }
    }
}

impl GatesConfig {
    pub fn to_gates(self) -> Gates {
        Gates { eps0: self.eps0, eps1: self.eps1, eps_alpha: self.eps_alpha }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub m_list: Vec<usize>,
    pub alpha: f64,
    pub energy: f64,
    pub include_dbar: bool,
    pub dim_ratio_cap: f64,
    pub seed: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        let c = SweepConfig::default();
        SweepSection {
            m_list: c.m_list,
            alpha: c.alpha,
            energy: c.energy,
            include_dbar: c.include_dbar,
            dim_ratio_cap: c.dim_ratio_cap,
            seed: c.seed,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        let t = &self.tolerances;
        if !(t.solve_tol > 0.0 && t.constraint_tol > 0.0) {
            anyhow::bail!("tolerances must be positive");
        }
        if !(self.h > 0.0 && self.h < 0.5) {
            anyhow::bail!("h = {} out of (0, 1/2)", self.h);
        }
        let params = self.params()?;
        if params.iter().any(|&l| !(l > 0.0)) {
            anyhow::bail!("semi-axis parameters must be positive");
        }
        let g = &self.gates;
        if !(g.eps0 > 0.0 && g.eps1 > 0.0 && g.eps_alpha > 0.0) {
            anyhow::bail!("gates must be positive");
        }
        if self.sweep.m_list.iter().any(|&m| m < 2) {
            anyhow::bail!("sweep m values must be >= 2");
        }
        Ok(())
    }

    /// Ellipsoid parameters: `lambdas` for the interior problem, `sigma`
    /// for the free-boundary one. Exactly one must be present.
    pub fn params(&self) -> anyhow::Result<Vec<f64>> {
        match (&self.lambdas, &self.sigma) {
            (Some(l), None) => Ok(l.clone()),
            (None, Some(s)) => Ok(s.clone()),
            (Some(_), Some(_)) => anyhow::bail!("give either lambdas or sigma, not both"),
            (None, None) => anyhow::bail!("missing lambdas (interior) or sigma (free-boundary)"),
        }
    }

    pub fn is_free_boundary(&self) -> bool {
        self.sigma.is_some()
    }
}
