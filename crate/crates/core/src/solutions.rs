//! Explicit map families: radial maps `e^{g(|x|^2)} x` (including the eikonal
//! family built from the solved profile), power maps `|x|^gamma x`, the
//! `mu`-parametrised power maps, the identity and the trigonometric map
//! `(x, y) -> e^{ix} - e^{iy}`.

use crate::error::{Error, Result};
use crate::map::{check_point, norm, Domain, MapModel};
use crate::ode::{self, ProfileSolution};
use crate::tensor::{Hessian, Matrix, Vector};

/// A radial profile `g` on an interval of `t = |x|^2`, with two derivatives.
pub trait Profile: Send + Sync {
    fn id(&self) -> String;

    /// `(t_lo, t_hi)`: the profile is defined for `t_lo < t <= t_hi`.
    fn t_range(&self) -> (f64, f64);

    /// `(g(t), g'(t), g''(t))`.
    fn eval(&self, t: f64) -> Result<(f64, f64, f64)>;
}

/// `g = 0`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroProfile;

impl Profile for ZeroProfile {
    fn id(&self) -> String {
        "zero".into()
    }

    fn t_range(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    fn eval(&self, _t: f64) -> Result<(f64, f64, f64)> {
        Ok((0.0, 0.0, 0.0))
    }
}

/// `g(t) = (gamma/2) ln t`, which turns the radial map into `|x|^gamma x`.
#[derive(Debug, Clone, Copy)]
pub struct PowerProfile {
    pub gamma: f64,
}

impl Profile for PowerProfile {
    fn id(&self) -> String {
        format!("power-profile(gamma={})", self.gamma)
    }

    fn t_range(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    fn eval(&self, t: f64) -> Result<(f64, f64, f64)> {
        let g = 0.5 * self.gamma;
        Ok((g * t.ln(), g / t, -g / (t * t)))
    }
}

/// The solved eikonal profile: `g` and `g'` from the dense output, `g''`
/// from the closed form.
impl Profile for ProfileSolution {
    fn id(&self) -> String {
        format!("eikonal-profile(a={},n={})", self.a(), self.n())
    }

    fn t_range(&self) -> (f64, f64) {
        (self.t_lo(), 1.0)
    }

    fn eval(&self, t: f64) -> Result<(f64, f64, f64)> {
        Ok((self.g_at(t)?, self.gprime_at(t)?, self.gsecond_at(t)?))
    }
}

/// `v(x) = e^{g(|x|^2)} x`.
#[derive(Debug, Clone)]
pub struct RadialMap<P> {
    profile: P,
    n: usize,
    label: Option<String>,
}

impl<P: Profile> RadialMap<P> {
    pub fn new(profile: P, n: usize) -> Self {
        RadialMap {
            profile,
            n,
            label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn profile(&self) -> &P {
        &self.profile
    }

    fn parts(&self, x: &[f64]) -> Result<(f64, f64, f64, f64)> {
        check_point(self, x)?;
        let t: f64 = x.iter().map(|v| v * v).sum();
        let (g, gp, gpp) = self.profile.eval(t)?;
        Ok((t, g, gp, gpp))
    }
}

/// `u(x) = e^{g(|x|^2)} x` for the profile in `map`.
pub fn radial_map<P: Profile>(profile: P, n: usize) -> RadialMap<P> {
    RadialMap::new(profile, n)
}

impl<P: Profile> MapModel for RadialMap<P> {
    fn id(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| format!("radial({},n={})", self.profile.id(), self.n))
    }

    fn dims(&self) -> (usize, usize) {
        (self.n, self.n)
    }

    fn domain(&self) -> Domain {
        let (lo, hi) = self.profile.t_range();
        Domain::Annulus {
            inner: lo.sqrt(),
            outer: hi.sqrt(),
        }
    }

    fn value(&self, x: &[f64]) -> Result<Vector> {
        let (_, g, _, _) = self.parts(x)?;
        Ok(Vector::from_row_slice(x) * g.exp())
    }

    fn gradient(&self, x: &[f64]) -> Result<Matrix> {
        let (_, g, gp, _) = self.parts(x)?;
        let n = self.n;
        let e = g.exp();
        Ok(Matrix::from_fn(n, n, |i, j| {
            e * ((if i == j { 1.0 } else { 0.0 }) + 2.0 * gp * x[i] * x[j])
        }))
    }

    fn hessian(&self, x: &[f64]) -> Result<Hessian> {
        // phi(t) = e^{g(t)}: D_j D_i v_a = 2 phi' (d_ai x_j + d_aj x_i + d_ij x_a) + 4 phi'' x_a x_i x_j
        let (_, g, gp, gpp) = self.parts(x)?;
        let e = g.exp();
        let phi1 = gp * e;
        let phi2 = (gpp + gp * gp) * e;
        Ok(radial_hessian(x, 2.0 * phi1, 4.0 * phi2))
    }

    fn is_radial(&self) -> bool {
        true
    }
}

/// `c1 (d_ai x_j + d_aj x_i + d_ij x_a) + c2 x_a x_i x_j`.
fn radial_hessian(x: &[f64], c1: f64, c2: f64) -> Hessian {
    let n = x.len();
    let d = |p: usize, q: usize| if p == q { 1.0 } else { 0.0 };
    Hessian::new(
        (0..n)
            .map(|a| {
                Matrix::from_fn(n, n, |i, j| {
                    c1 * (d(a, i) * x[j] + d(a, j) * x[i] + d(i, j) * x[a])
                        + c2 * x[a] * x[i] * x[j]
                })
            })
            .collect(),
    )
}

pub type EikonalMap = RadialMap<ProfileSolution>;

/// `v_a(x) = e^{g_a(|x|^2)} x` with `g_a` the solved eikonal profile on its
/// maximal interval below `t = 1`.
pub fn eikonal_map(a: f64, n: usize) -> Result<EikonalMap> {
    eikonal_map_with(a, n, ode::DEFAULT_T_MIN, ode::DEFAULT_TOL)
}

pub fn eikonal_map_with(a: f64, n: usize, t_min: f64, tol: f64) -> Result<EikonalMap> {
    if n < 2 {
        return Err(Error::domain("eikonal maps need n >= 2"));
    }
    let profile = ode::solve_profile_maximal(a, n, t_min, tol)?;
    Ok(RadialMap::new(profile, n).with_label(format!("eikonal(a={a},n={n})")))
}

/// `v^gamma(x) = |x|^gamma x`, with closed-form derivatives.
#[derive(Debug, Clone)]
pub struct PowerMap {
    gamma: f64,
    n: usize,
    label: String,
}

impl PowerMap {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// The constant dilation `K(Dv^gamma)`, see [`power_dilation_level`].
    pub fn dilation_level(&self) -> f64 {
        power_dilation_level(self.gamma, self.n)
    }
}

/// `a(gamma) = (n + gamma^2 + 2 gamma) / (1 + gamma)^{2/n}`.
///
/// Follows from `|Dv|^2 = |x|^{2 gamma} (n + gamma^2 + 2 gamma)` and
/// `det(Dv^T Dv) = |x|^{2 n gamma} (1 + gamma)^2`. The exponent `n/2` that is
/// sometimes quoted for this constant agrees only when `n = 2`.
pub fn power_dilation_level(gamma: f64, n: usize) -> f64 {
    let nf = n as f64;
    (nf + gamma * gamma + 2.0 * gamma) / (1.0 + gamma).powf(2.0 / nf)
}

pub fn power_map(gamma: f64, n: usize) -> Result<PowerMap> {
    if !(gamma > -1.0) || !gamma.is_finite() {
        return Err(Error::domain(format!(
            "power maps need gamma > -1, got {gamma}"
        )));
    }
    if n < 1 {
        return Err(Error::domain("dimension must be positive"));
    }
    Ok(PowerMap {
        gamma,
        n,
        label: format!("power(gamma={gamma},n={n})"),
    })
}

/// `gamma(mu) = (n - mu) / (mu - 1)`.
pub fn mu_exponent(mu: f64, n: usize) -> Result<f64> {
    if !(mu > 1.0) || !mu.is_finite() {
        return Err(Error::domain(format!("mu must exceed 1, got {mu}")));
    }
    Ok((n as f64 - mu) / (mu - 1.0))
}

/// `u^mu(x) = |x|^{(n - mu)/(mu - 1)} x`.
pub fn mu_map(mu: f64, n: usize) -> Result<PowerMap> {
    if n < 2 {
        return Err(Error::domain("mu maps need n >= 2"));
    }
    let gamma = mu_exponent(mu, n)?;
    let mut map = power_map(gamma, n)?;
    map.label = format!("mu(mu={mu},n={n})");
    Ok(map)
}

impl MapModel for PowerMap {
    fn id(&self) -> String {
        self.label.clone()
    }

    fn dims(&self) -> (usize, usize) {
        (self.n, self.n)
    }

    fn domain(&self) -> Domain {
        Domain::punctured_space()
    }

    fn value(&self, x: &[f64]) -> Result<Vector> {
        check_point(self, x)?;
        Ok(Vector::from_row_slice(x) * norm(x).powf(self.gamma))
    }

    fn gradient(&self, x: &[f64]) -> Result<Matrix> {
        check_point(self, x)?;
        let r = norm(x);
        let (rg, gam) = (r.powf(self.gamma), self.gamma);
        Ok(Matrix::from_fn(self.n, self.n, |i, j| {
            rg * ((if i == j { 1.0 } else { 0.0 }) + gam * x[i] * x[j] / (r * r))
        }))
    }

    fn hessian(&self, x: &[f64]) -> Result<Hessian> {
        // gamma r^{gamma-2} (d_ai x_j + d_aj x_i + d_ij x_a + (gamma-2) x_a x_i x_j / r^2)
        check_point(self, x)?;
        let r = norm(x);
        let c1 = self.gamma * r.powf(self.gamma - 2.0);
        Ok(radial_hessian(x, c1, c1 * (self.gamma - 2.0) / (r * r)))
    }

    fn is_radial(&self) -> bool {
        true
    }
}

/// `u(x) = x` on the punctured space.
#[derive(Debug, Clone, Copy)]
pub struct IdentityMap {
    n: usize,
}

pub fn identity_map(n: usize) -> IdentityMap {
    IdentityMap { n }
}

impl MapModel for IdentityMap {
    fn id(&self) -> String {
        format!("identity(n={})", self.n)
    }

    fn dims(&self) -> (usize, usize) {
        (self.n, self.n)
    }

    fn domain(&self) -> Domain {
        Domain::punctured_space()
    }

    fn value(&self, x: &[f64]) -> Result<Vector> {
        check_point(self, x)?;
        Ok(Vector::from_row_slice(x))
    }

    fn gradient(&self, x: &[f64]) -> Result<Matrix> {
        check_point(self, x)?;
        Ok(Matrix::identity(self.n, self.n))
    }

    fn hessian(&self, x: &[f64]) -> Result<Hessian> {
        check_point(self, x)?;
        Ok(Hessian::zeros(self.n, self.n))
    }

    fn is_radial(&self) -> bool {
        true
    }
}

/// `u(x, y) = (cos x - cos y, sin x - sin y)`, the real form of `e^{ix} - e^{iy}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrigMap;

pub fn trig_map() -> TrigMap {
    TrigMap
}

impl MapModel for TrigMap {
    fn id(&self) -> String {
        "trig".into()
    }

    fn dims(&self) -> (usize, usize) {
        (2, 2)
    }

    fn domain(&self) -> Domain {
        Domain::Everywhere
    }

    fn value(&self, x: &[f64]) -> Result<Vector> {
        check_point(self, x)?;
        let (p, q) = (x[0], x[1]);
        Ok(Vector::from_row_slice(&[
            p.cos() - q.cos(),
            p.sin() - q.sin(),
        ]))
    }

    fn gradient(&self, x: &[f64]) -> Result<Matrix> {
        check_point(self, x)?;
        let (p, q) = (x[0], x[1]);
        Ok(Matrix::from_row_slice(
            2,
            2,
            &[-p.sin(), q.sin(), p.cos(), -q.cos()],
        ))
    }

    fn hessian(&self, x: &[f64]) -> Result<Hessian> {
        check_point(self, x)?;
        let (p, q) = (x[0], x[1]);
        Ok(Hessian::new(vec![
            Matrix::from_row_slice(2, 2, &[-p.cos(), 0.0, 0.0, q.cos()]),
            Matrix::from_row_slice(2, 2, &[-p.sin(), 0.0, 0.0, q.sin()]),
        ]))
    }

    /// `rank Du = 1` exactly where `sin(x - y) = 0`.
    fn interface_distance(&self, x: &[f64]) -> Option<f64> {
        let d = x[0] - x[1];
        let k = (d / std::f64::consts::PI).round();
        Some((d - k * std::f64::consts::PI).abs() / std::f64::consts::SQRT_2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{ahlfors, dilation, numerical_rank, radial_projections, RANK_TOL};

    #[test]
    fn zero_profile_is_identity() {
        let m = radial_map(ZeroProfile, 3);
        let x = [0.2, -0.4, 0.1];
        assert_eq!(m.value(&x).unwrap(), Vector::from_row_slice(&x));
        assert_eq!(m.gradient(&x).unwrap(), Matrix::identity(3, 3));
        assert_eq!(m.hessian(&x).unwrap().norm(), 0.0);
    }

    #[test]
    fn radial_norm_identity_two_routes() {
        // |Dv|^2 = e^{2g}(n + 4 g' t + 4 g'^2 t^2)
        let m = radial_map(PowerProfile { gamma: 0.7 }, 3);
        let x = [0.3, 0.2, -0.5];
        let t: f64 = x.iter().map(|v| v * v).sum();
        let (g, gp, _) = m.profile().eval(t).unwrap();
        let formula = (2.0 * g).exp() * (3.0 + 4.0 * gp * t + 4.0 * gp * gp * t * t);
        let direct = m.gradient(&x).unwrap().norm_squared();
        assert!((formula - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn radial_power_profile_agrees_with_power_map() {
        for gamma in [-0.5, 0.5, 1.0, 2.0] {
            let r = radial_map(PowerProfile { gamma }, 2);
            let p = power_map(gamma, 2).unwrap();
            let x = [0.31, -0.52];
            assert!((r.value(&x).unwrap() - p.value(&x).unwrap()).amax() < 1e-14);
            assert!((r.gradient(&x).unwrap() - p.gradient(&x).unwrap()).amax() < 1e-13);
            assert!(r.hessian(&x).unwrap().max_abs_diff(&p.hessian(&x).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn gradient_in_projection_form() {
        // Dv = e^g ((1 + 2 g' t)[x]^T + [x]^perp)
        let m = radial_map(PowerProfile { gamma: 1.3 }, 2);
        let x = [0.4, 0.25];
        let t = 0.4f64 * 0.4 + 0.25 * 0.25;
        let (g, gp, _) = m.profile().eval(t).unwrap();
        let (pt, pn) = radial_projections(&x).unwrap();
        let expect = (pt * (1.0 + 2.0 * gp * t) + pn) * g.exp();
        assert!((m.gradient(&x).unwrap() - expect).amax() < 1e-14);
    }

    #[test]
    fn eikonal_boundary_and_slope() {
        let m = eikonal_map(5.0, 2).unwrap();
        assert_eq!(
            m.value(&[1.0, 0.0]).unwrap(),
            Vector::from_row_slice(&[1.0, 0.0])
        );
        let x = [0.6, 0.8];
        assert!((m.value(&x).unwrap() - Vector::from_row_slice(&x)).amax() < 1e-15);
        assert!((m.profile().gprime_at(1.0).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(eikonal_map(2.0, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn eikonal_has_constant_frobenius_norm() {
        let m = eikonal_map(5.0, 2).unwrap();
        for k in 0..50 {
            let r = 0.56 + 0.43 * k as f64 / 49.0;
            let th = 0.37 * k as f64;
            let x = [r * th.cos(), r * th.sin()];
            let d = m.gradient(&x).unwrap();
            assert!((d.norm_squared() - 5.0).abs() < 1e-8, "r = {r}");
            assert_eq!(numerical_rank(&d, RANK_TOL), 2);
        }
    }

    #[test]
    fn eikonal_is_undefined_inside_blowup_radius() {
        let m = eikonal_map(5.0, 2).unwrap();
        let inner = m.domain().inner_radius();
        assert!(inner > 0.5 && inner < 0.56, "inner radius {inner}");
        assert!(matches!(m.value(&[0.3, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn power_map_examples() {
        let id = power_map(0.0, 3).unwrap();
        let x = [0.1, 0.2, 0.3];
        assert!((id.gradient(&x).unwrap() - Matrix::identity(3, 3)).amax() < 1e-15);
        assert!((power_dilation_level(1.0, 2) - 2.5).abs() < 1e-15);
        assert!(matches!(power_map(-1.0, 2), Err(Error::Domain(_))));
        assert!(matches!(id.value(&[0.0, 0.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn power_map_dilation_and_ahlfors_closed_forms() {
        for (gamma, n) in [(1.0, 2usize), (-0.5, 3), (2.0, 3)] {
            let m = power_map(gamma, n).unwrap();
            let x: Vec<f64> = (0..n).map(|i| 0.3 - 0.17 * i as f64).collect();
            let d = m.gradient(&x).unwrap();
            let k = dilation(&d).finite().unwrap();
            assert!((k - m.dilation_level()).abs() < 1e-12);
            let r = norm(&x);
            let gram = d.transpose() * &d;
            assert!(
                (gram.determinant() - r.powf(2.0 * n as f64 * gamma) * (1.0 + gamma).powi(2)).abs()
                    < 1e-12
            );
            let (pt, pn) = radial_projections(&x).unwrap();
            let nf = n as f64;
            let expect = (pt * (1.0 - 1.0 / nf) - pn / nf)
                * ((gamma * gamma + 2.0 * gamma) * r.powf(2.0 * gamma));
            assert!((ahlfors(&gram).unwrap() - expect).amax() < 1e-12);
        }
    }

    #[test]
    fn mu_map_exponents() {
        assert_eq!(mu_map(2.0, 2).unwrap().gamma(), 0.0);
        assert_eq!(mu_map(2.0, 3).unwrap().gamma(), 1.0);
        assert_eq!(mu_map(3.0, 2).unwrap().gamma(), -0.5);
        assert!(matches!(mu_map(1.0, 2), Err(Error::Domain(_))));
        let m = mu_map(2.0, 3).unwrap();
        let x = [0.2, 0.1, -0.3];
        assert!((m.value(&x).unwrap() - Vector::from_row_slice(&x) * norm(&x)).amax() < 1e-16);
    }

    #[test]
    fn trig_rank_on_and_off_diagonal() {
        let m = trig_map();
        assert_eq!(
            numerical_rank(&m.gradient(&[0.2, 0.2]).unwrap(), RANK_TOL),
            1
        );
        assert_eq!(
            numerical_rank(&m.gradient(&[0.1, 0.2]).unwrap(), RANK_TOL),
            2
        );
        assert!(m.interface_distance(&[0.2, 0.2]).unwrap() < 1e-16);
    }

    #[test]
    fn identity_dilation_is_n() {
        let m = identity_map(3);
        assert_eq!(
            dilation(&m.gradient(&[1.0, 0.0, 0.0]).unwrap()).finite(),
            Some(3.0)
        );
    }
}
