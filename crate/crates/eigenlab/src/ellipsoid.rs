//! Exact algebra of the target ellipsoid `E_L = { x : sum_i l_i x_i^2 = 1 }`.
//!
//! The boundary-value parameter `t(x)` is the unique root of
//! `g(t) = sum_i s_i e^{2 s_i t} x_i^2 = 1`; the projection is
//! `p(x) = e^{s t(x)} x` (componentwise) and the involution is
//! `s(x) = e^{2 s t(x)} x`. These maps reflect free-boundary maps across the
//! flat boundary; on the sphere the involution is the inversion `x / |x|^2`.

use crate::{Error, Result};

pub const ROOT_TOL: f64 = 1e-14;
const MIN_NORM: f64 = 1e-300;

/// Semi-axis parameters of the target ellipsoid plus the derived elongation.
#[derive(Clone, Debug, PartialEq)]
pub struct EllipsoidSpec {
    lambdas: Vec<f64>,
}

/// A point of the ambient space; the zero vector is rejected by operations
/// that require `t(x)`.
pub type AmbientPoint = Vec<f64>;

impl EllipsoidSpec {
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.len() < 2 {
            return Err(Error::BadParam(format!(
                "need m >= 2 semi-axis parameters, got {}",
                lambdas.len()
            )));
        }
        if lambdas.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::BadParam("all lambda_i must be positive and finite".into()));
        }
        Ok(Self { lambdas })
    }

    pub fn m(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Elongation `alpha = max(max_i l_i, 1 / min_i l_i)`, so that
    /// `max l_i <= alpha` and `min l_i >= 1/alpha`.
    pub fn elongation(&self) -> f64 {
        let max = self.lambdas.iter().cloned().fold(f64::MIN, f64::max);
        let min = self.lambdas.iter().cloned().fold(f64::MAX, f64::min);
        max.max(1.0 / min)
    }

    /// Pointwise Lipschitz-type constant `K(alpha) = 5 * 2^(2 alpha^2 + 1)`.
    pub fn step2_k(&self) -> f64 {
        let a = self.elongation();
        5.0 * (2.0f64).powf(2.0 * a * a + 1.0)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.m() {
            return Err(Error::DimensionMismatch { expected: self.m(), got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    /// `|x|_L = sqrt(sum_i l_i x_i^2)`.
    pub fn lambda_norm(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.lambda_norm_sq_unchecked(x).sqrt())
    }

    pub(crate) fn lambda_norm_sq_unchecked(&self, x: &[f64]) -> f64 {
        self.lambdas.iter().zip(x).map(|(&l, &xi)| l * xi * xi).sum()
    }

    fn g_of_t(&self, x: &[f64], t: f64) -> f64 {
        self.lambdas
            .iter()
            .zip(x)
            .map(|(&s, &xi)| s * (2.0 * s * t).exp() * xi * xi)
            .sum()
    }

    /// Unique root of `g(t) = sum_i s_i e^{2 s_i t} x_i^2 = 1`.
    ///
    /// `g` is strictly increasing from 0 to infinity, so a bracket always
    /// exists; the bracket is seeded at `t0 = -ln |x|_s` and expanded
    /// geometrically until a sign change, then narrowed by bisection with
    /// Newton steps accepted whenever they stay inside the bracket.
    pub fn solve_t(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let nsq = self.lambda_norm_sq_unchecked(x);
        if nsq < MIN_NORM {
            return Err(Error::ZeroPoint);
        }
        let t0 = -nsq.sqrt().ln();
        let (mut lo, mut hi) = (t0 - 1.0, t0 + 1.0);
        let mut width = 1.0;
        while self.g_of_t(x, lo) > 1.0 {
            width *= 2.0;
            lo -= width;
        }
        while self.g_of_t(x, hi) < 1.0 {
            width *= 2.0;
            hi += width;
        }
        let mut t = 0.5 * (lo + hi);
        for _ in 0..200 {
            let g = self.g_of_t(x, t);
            let resid = g - 1.0;
            if resid.abs() <= ROOT_TOL {
                return Ok(t);
            }
            if resid > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            // g'(t) = 2 sum s^2 e^{2 s t} x^2 > 0
            let gp: f64 = self
                .lambdas
                .iter()
                .zip(x)
                .map(|(&s, &xi)| 2.0 * s * s * (2.0 * s * t).exp() * xi * xi)
                .sum();
            let newton = t - resid / gp;
            t = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        }
        // bisection bracket has collapsed to roundoff; accept the midpoint
        Ok(t)
    }

    fn scaled(&self, x: &[f64], t: f64, factor: f64) -> Vec<f64> {
        self.lambdas
            .iter()
            .zip(x)
            .map(|(&s, &xi)| (factor * s * t).exp() * xi)
            .collect()
    }

    /// Projection `p(x) = e^{s t(x)} x`; lands on `E_s` and fixes it.
    pub fn proj_p(&self, x: &[f64]) -> Result<AmbientPoint> {
        let t = self.solve_t(x)?;
        Ok(self.scaled(x, t, 1.0))
    }

    /// Involution `s(x) = e^{2 s t(x)} x`; satisfies `s∘s = id`, `p∘s = p`,
    /// `t∘s + t = 0`.
    pub fn invol_s(&self, x: &[f64]) -> Result<AmbientPoint> {
        let t = self.solve_t(x)?;
        Ok(self.scaled(x, t, 2.0))
    }

    /// `omega^2 = sum_m s_m^2 u_m^2 e^{2 s_m t(u)} = (s s(x)) . (s x)`.
    fn omega_sq(&self, x: &[f64], s_x: &[f64]) -> f64 {
        self.lambdas
            .iter()
            .zip(x.iter().zip(s_x))
            .map(|(&s, (&xi, &si))| s * s * xi * si)
            .sum()
    }

    /// Closed-form Jacobian
    /// `Ds(x) = diag(e^{2 s t}) - 2 (s s(x)) (s s(x))^T / (s s(x) . s x)`;
    /// symmetric, with `Ds(x) Ds(s(x)) = I`.
    pub fn jac_s(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let m = self.m();
        let t = self.solve_t(x)?;
        let s_x = self.scaled(x, t, 2.0);
        let om2 = self.omega_sq(x, &s_x);
        if om2 < MIN_NORM {
            return Err(Error::Degenerate("near-zero denominator s s(x) . s x".into()));
        }
        let ss: Vec<f64> = self.lambdas.iter().zip(&s_x).map(|(&s, &si)| s * si).collect();
        let mut jac = vec![vec![0.0; m]; m];
        for i in 0..m {
            let e2 = (2.0 * self.lambdas[i] * t).exp();
            for j in 0..m {
                jac[i][j] = -2.0 * ss[i] * ss[j] / om2;
                if i == j {
                    jac[i][j] += e2;
                }
            }
        }
        Ok(jac)
    }

    /// Hessian contraction `H_i = sum_{j,l} d_{j,l} s_i(x) V_j . V_l` for
    /// per-coordinate gradient data `V_j` in R^2, via the closed formula.
    pub fn hess_s_contract(&self, x: &[f64], v: &[[f64; 2]]) -> Result<AmbientPoint> {
        let m = self.m();
        if v.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: v.len() });
        }
        let t = self.solve_t(x)?;
        let s_x = self.scaled(x, t, 2.0);
        let om2 = self.omega_sq(x, &s_x);
        if om2 < MIN_NORM {
            return Err(Error::Degenerate("near-zero denominator s s(x) . s x".into()));
        }
        // omega~^2 = sum_m s_m^3 u_m^2 e^{2 s_m t}
        let omt2: f64 = self
            .lambdas
            .iter()
            .zip(x.iter().zip(&s_x))
            .map(|(&s, (&xi, &si))| s * s * s * xi * si)
            .sum();
        // W1 = sum_j s_j s_j(x) V_j, W2 = sum_j s_j^2 s_j(x) V_j
        let mut w1 = [0.0f64; 2];
        let mut w2 = [0.0f64; 2];
        let mut e_mix = 0.0; // sum_j s_j e^{2 s_j t} |V_j|^2
        for j in 0..m {
            let sj = self.lambdas[j];
            let a = sj * s_x[j];
            w1[0] += a * v[j][0];
            w1[1] += a * v[j][1];
            w2[0] += sj * a * v[j][0];
            w2[1] += sj * a * v[j][1];
            e_mix += sj * (2.0 * sj * t).exp() * (v[j][0] * v[j][0] + v[j][1] * v[j][1]);
        }
        let w1w1 = w1[0] * w1[0] + w1[1] * w1[1];
        let w1w2 = w1[0] * w2[0] + w1[1] * w2[1];
        let mut h = vec![0.0; m];
        for i in 0..m {
            let si = self.lambdas[i];
            let e2i = (2.0 * si * t).exp();
            let w1vi = w1[0] * v[i][0] + w1[1] * v[i][1];
            h[i] = -4.0 * si * e2i * w1vi / om2 - 2.0 * si * s_x[i] * e_mix / om2
                + 8.0 * si * s_x[i] * w1w2 / (om2 * om2)
                + 4.0 * si * si * s_x[i] * w1w1 / (om2 * om2)
                - 4.0 * si * s_x[i] * omt2 * w1w1 / (om2 * om2 * om2);
        }
        Ok(h)
    }

    /// Unit normal `nu = L x / |L x|` at a point of `E_L`.
    pub fn normal_nu(&self, x: &[f64]) -> Result<AmbientPoint> {
        self.check_dim(x)?;
        let dev = (self.lambda_norm_sq_unchecked(x) - 1.0).abs();
        if dev > 1e-6 {
            return Err(Error::OffEllipsoid(dev));
        }
        let lx: Vec<f64> = self.lambdas.iter().zip(x).map(|(&l, &xi)| l * xi).collect();
        let n = lx.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(lx.iter().map(|v| v / n).collect())
    }

    /// Tangential projection at a point of `E_L`:
    /// `v - (v . s x / |s x|^2) s x` (the boundary form of `Dp`).
    pub fn tangent_project(&self, x: &[f64], v: &[f64]) -> Result<AmbientPoint> {
        self.check_dim(x)?;
        self.check_dim(v)?;
        let lx: Vec<f64> = self.lambdas.iter().zip(x).map(|(&l, &xi)| l * xi).collect();
        let nsq: f64 = lx.iter().map(|a| a * a).sum();
        if nsq < MIN_NORM {
            return Err(Error::Degenerate("sigma x vanishes".into()));
        }
        let c = v.iter().zip(&lx).map(|(a, b)| a * b).sum::<f64>() / nsq;
        Ok(v.iter().zip(&lx).map(|(a, b)| a - c * b).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn e(ls: &[f64]) -> EllipsoidSpec {
        EllipsoidSpec::new(ls.to_vec()).unwrap()
    }

    #[test]
    fn lambda_norm_examples() {
        assert_abs_diff_eq!(e(&[1.0, 1.0]).lambda_norm(&[3.0, 4.0]).unwrap(), 5.0);
        assert_abs_diff_eq!(e(&[4.0, 1.0]).lambda_norm(&[1.0, 0.0]).unwrap(), 2.0);
        assert_abs_diff_eq!(
            e(&[2.0, 3.0]).lambda_norm(&[1.0, 1.0]).unwrap(),
            5.0f64.sqrt()
        );
        assert!(matches!(
            e(&[1.0, 1.0]).lambda_norm(&[1.0, 0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn solve_t_examples() {
        // membership gives t = 0
        assert_abs_diff_eq!(e(&[1.0, 1.0]).solve_t(&[1.0, 0.0]).unwrap(), 0.0, epsilon = 1e-14);
        // sphere inversion: t = -ln 2, s(x) = x / |x|^2
        let sp = e(&[1.0, 1.0]);
        assert_abs_diff_eq!(sp.solve_t(&[2.0, 0.0]).unwrap(), -(2.0f64.ln()), epsilon = 1e-13);
        let s = sp.invol_s(&[2.0, 0.0]).unwrap();
        assert_abs_diff_eq!(s[0], 0.5, epsilon = 1e-13);
        assert_abs_diff_eq!(s[1], 0.0);
        // bisection oracle for sigma = (1,4), x = (1,1): root of e^{2t} + 4 e^{8t} = 1
        let el = e(&[1.0, 4.0]);
        let g = |t: f64| (2.0 * t).exp() + 4.0 * (8.0 * t).exp() - 1.0;
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        assert_abs_diff_eq!(el.solve_t(&[1.0, 1.0]).unwrap(), oracle, epsilon = 1e-14);
        assert!(matches!(el.solve_t(&[0.0, 0.0]), Err(Error::ZeroPoint)));
    }

    #[test]
    fn projection_examples() {
        let el = e(&[1.0, 4.0]);
        // fixed point on the ellipsoid
        let on = [0.5f64.sqrt(), (0.125f64).sqrt()]; // 0.5 + 4*0.125 = 1
        let p = el.proj_p(&on).unwrap();
        assert_abs_diff_eq!(p[0], on[0], epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], on[1], epsilon = 1e-12);
        // radial projection on the circle
        let c = e(&[1.0, 1.0]).proj_p(&[2.0, 0.0]).unwrap();
        assert_abs_diff_eq!(c[0], 1.0, epsilon = 1e-13);
        // p lands on E_s
        let q = el.proj_p(&[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(el.lambda_norm_sq_unchecked(&q), 1.0, epsilon = 10.0 * ROOT_TOL);
    }

    #[test]
    fn involution_algebra() {
        let el = e(&[1.0, 2.0, 5.0]);
        let x = vec![0.3, -0.7, 0.45];
        let s = el.invol_s(&x).unwrap();
        let ss = el.invol_s(&s).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(ss[i], x[i], epsilon = 1e-10);
        }
        let t = el.solve_t(&x).unwrap();
        let ts = el.solve_t(&s).unwrap();
        assert_abs_diff_eq!(t + ts, 0.0, epsilon = 1e-10);
        let p = el.proj_p(&x).unwrap();
        let ps = el.proj_p(&s).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(ps[i], p[i], epsilon = 1e-10);
        }
        let pp = el.proj_p(&p).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(pp[i], p[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn jacobian_is_symmetric_and_chains_to_identity() {
        let el = e(&[1.0, 3.0]);
        let x = vec![0.4, 0.55];
        let j = el.jac_s(&x).unwrap();
        assert_abs_diff_eq!(j[0][1], j[1][0], epsilon = 1e-12);
        let s = el.invol_s(&x).unwrap();
        let js = el.jac_s(&s).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let mut acc = 0.0;
                for k in 0..2 {
                    acc += j[a][k] * js[k][b];
                }
                let want = if a == b { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(acc, want, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn jacobian_on_ellipsoid_is_householder() {
        // on E_s: Ds(x) v = v - 2 (v . s x / |s x|^2) s x, and Ds(x)^2 = I
        let el = e(&[1.0, 4.0]);
        let x = [0.5f64.sqrt(), (0.125f64).sqrt()];
        let j = el.jac_s(&x).unwrap();
        let sx = [x[0], 4.0 * x[1]];
        let nsq = sx[0] * sx[0] + sx[1] * sx[1];
        let v = [0.3, -0.9];
        let mut jv = [0.0; 2];
        for a in 0..2 {
            jv[a] = j[a][0] * v[0] + j[a][1] * v[1];
        }
        let c = (v[0] * sx[0] + v[1] * sx[1]) / nsq;
        for a in 0..2 {
            assert_abs_diff_eq!(jv[a], v[a] - 2.0 * c * sx[a], epsilon = 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_inversion_on_sphere() {
        // sigma = (1,1), x = (2,0): Ds equals the Jacobian of x/|x|^2
        let el = e(&[1.0, 1.0]);
        let x = [2.0, 0.0];
        let j = el.jac_s(&x).unwrap();
        // d(x/|x|^2) = I/|x|^2 - 2 x x^T / |x|^4
        let n2 = 4.0;
        for a in 0..2 {
            for b in 0..2 {
                let want = (if a == b { 1.0 / n2 } else { 0.0 })
                    - 2.0 * x[a] * x[b] / (n2 * n2);
                assert_abs_diff_eq!(j[a][b], want, epsilon = 1e-12);
            }
        }
    }

    fn fd_jac(el: &EllipsoidSpec, x: &[f64], h: f64) -> Vec<Vec<f64>> {
        let m = x.len();
        let mut out = vec![vec![0.0; m]; m];
        for j in 0..m {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            let sp = el.invol_s(&xp).unwrap();
            let sm = el.invol_s(&xm).unwrap();
            for i in 0..m {
                out[i][j] = (sp[i] - sm[i]) / (2.0 * h);
            }
        }
        out
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let el = e(&[1.0, 3.0]);
        let x = vec![0.52, -0.61];
        let j = el.jac_s(&x).unwrap();
        let fd = fd_jac(&el, &x, 1e-6);
        for a in 0..2 {
            for b in 0..2 {
                assert!((j[a][b] - fd[a][b]).abs() < 1e-6, "{a},{b}");
            }
        }
    }

    #[test]
    fn hessian_contraction_examples() {
        let el = e(&[1.0, 1.0]);
        // V = 0 -> 0
        let z = el.hess_s_contract(&[2.0, 0.0], &[[0.0; 2]; 2]).unwrap();
        assert_abs_diff_eq!(z[0], 0.0);
        assert_abs_diff_eq!(z[1], 0.0);
        // sphere closed form at x = (2,0), canonical V
        let v = [[1.0, 0.0], [0.0, 1.0]];
        let h = el.hess_s_contract(&[2.0, 0.0], &v).unwrap();
        // s(x) = x/|x|^2: H_i = -4 (q.V_i)/|x|^4 - 2 x_i |V|^2/|x|^4 + 8 x_i |q|^2/|x|^6
        // with q = sum x_j V_j = (2, 0)
        let x = [2.0, 0.0];
        let n2 = 4.0f64;
        let q = [2.0, 0.0];
        let vsq = 2.0;
        for i in 0..2 {
            let qvi = q[0] * v[i][0] + q[1] * v[i][1];
            let expect = -4.0 * qvi / (n2 * n2)
                - 2.0 * x[i] * vsq / (n2 * n2)
                + 8.0 * x[i] * (q[0] * q[0] + q[1] * q[1]) / (n2 * n2 * n2);
            assert_abs_diff_eq!(h[i], expect, epsilon = 1e-12);
        }
    }

    fn fd_hess_contract(el: &EllipsoidSpec, x: &[f64], v: &[[f64; 2]], h: f64) -> Vec<f64> {
        // second directional differences of s along the two gradient columns:
        // sum_{jl} d_{jl} s_i V_j.V_l = sum_c D^2 s (w_c, w_c) with w_c = column c
        let m = x.len();
        let mut out = vec![0.0; m];
        for c in 0..2 {
            let w: Vec<f64> = (0..m).map(|j| v[j][c]).collect();
            let xp: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a + h * b).collect();
            let xm: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a - h * b).collect();
            let sp = el.invol_s(&xp).unwrap();
            let s0 = el.invol_s(x).unwrap();
            let sm = el.invol_s(&xm).unwrap();
            for i in 0..m {
                out[i] += (sp[i] - 2.0 * s0[i] + sm[i]) / (h * h);
            }
        }
        out
    }

    #[test]
    fn hessian_contraction_matches_second_differences() {
        let el = e(&[1.0, 2.0]);
        let x = vec![0.6, 0.35];
        let v = [[0.3, -0.2], [0.15, 0.4]];
        let h = el.hess_s_contract(&x, &v).unwrap();
        let fd = fd_hess_contract(&el, &x, &v, 1e-5);
        for i in 0..2 {
            assert!((h[i] - fd[i]).abs() < 1e-5, "H[{i}] = {} vs fd {}", h[i], fd[i]);
        }
    }

    #[test]
    fn step2_bound_with_paper_constant() {
        // random-ish case sigma = (1,2): the explicit Step-2 constant
        let el = e(&[1.0, 2.0]);
        let a = el.elongation();
        let x = vec![0.55, 0.35]; // |x|_s^2 = 0.3025 + 0.245 = 0.5475 in [1/2, 1]
        assert!(el.lambda_norm_sq_unchecked(&x) >= 0.5);
        let v = [[0.7, -0.3], [0.2, 0.5]];
        let h = el.hess_s_contract(&x, &v).unwrap();
        let hsq: f64 = h.iter().map(|a| a * a).sum();
        let vsq: f64 = v.iter().map(|w| w[0] * w[0] + w[1] * w[1]).sum();
        let c = 64.0 * (2.0f64).powf(2.0 * a * a)
            + 16.0 * (2.0f64).powf(3.0 * a * a)
            + 256.0 * a * a * (2.0f64).powf(3.0 * a * a)
            + 64.0 * a * a * (2.0f64).powf(3.0 * a * a);
        assert!(hsq <= c * vsq * vsq);
        assert!(hsq <= el.step2_k().powi(3) * vsq * vsq);
    }

    #[test]
    fn normal_and_tangent() {
        let sp = e(&[1.0, 1.0, 1.0]);
        let x = vec![0.6, 0.0, 0.8];
        let nu = sp.normal_nu(&x).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(nu[i], x[i], epsilon = 1e-12);
        }
        let el = e(&[4.0, 1.0]);
        let nu = el.normal_nu(&[0.5, 0.0]).unwrap();
        assert_abs_diff_eq!(nu[0], 1.0, epsilon = 1e-12);
        // projector idempotence and orthogonality to the normal
        let v = vec![0.3, -0.8];
        let x = vec![0.5, 0.0];
        let tv = el.tangent_project(&x, &v).unwrap();
        let ttv = el.tangent_project(&x, &tv).unwrap();
        assert_abs_diff_eq!(tv[0], ttv[0], epsilon = 1e-12);
        assert_abs_diff_eq!(tv[1], ttv[1], epsilon = 1e-12);
        let nu = el.normal_nu(&x).unwrap();
        let d: f64 = nu.iter().zip(&tv).map(|(a, b)| a * b).sum();
        assert_abs_diff_eq!(d, 0.0, epsilon = 1e-12);
    }
}
