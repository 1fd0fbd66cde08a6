//! Pointwise evaluation of the second-order systems:
//!
//! * `Delta_inf u = (Du (x) Du + |Du|^2 [Du]^perp (x) I) : D^2 u`
//! * `A_inf u = (H_P (x) H_P + H [H_P]^perp H_PP)(Du) : D^2 u` for a Hamiltonian `H`
//! * `Q_inf u = (K_P (x) K_P + [K_P]^perp K_PP)(Du) : D^2 u` for the dilation `K`
//! * the linear system `A(x) : D^2 u` with `A = (I - mu [x]^T) (x) (I - mu [x]^T)`
//!
//! Each full operator is assembled as a coefficient 4-tensor contracted with
//! the Hessian. The decoupled forms are computed along a separate route
//! (chain rule through `D(|Du|^2)` or `D(K(Du))`) so that the two can be
//! checked against each other.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::Hamiltonian;
use crate::map::{norm, MapModel};
use crate::tensor::{
    dilation_gradient, dilation_hessian_projected, nullspace_projection, radial_tangent,
    FourTensor, Hessian, Matrix, Vector, RANK_TOL,
};

/// A residual vector at a point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub point: Vec<f64>,
    pub value: Vec<f64>,
    pub norm: f64,
}

impl Residual {
    pub fn new(point: &[f64], value: &Vector) -> Self {
        Residual {
            point: point.to_vec(),
            value: value.iter().copied().collect(),
            norm: value.norm(),
        }
    }
}

/// `(1 + |Du|^3)(1 + |D^2 u|)`, the scale used to normalise residuals.
pub fn residual_scale(du: &Matrix, d2u: &Hessian) -> f64 {
    (1.0 + du.norm().powi(3)) * (1.0 + d2u.norm())
}

fn check_square_system(u: &dyn MapModel) -> Result<()> {
    let (n, big_n) = u.dims();
    if n != big_n {
        return Err(Error::dimension(format!(
            "{} maps R^{n} to R^{big_n}; this operator needs n = N",
            u.id()
        )));
    }
    Ok(())
}

/// Coefficient `Du (x) Du + |Du|^2 [Du]^perp (x) I`.
pub fn infinity_laplacian_coefficient(du: &Matrix) -> FourTensor {
    let (big_n, n) = (du.nrows(), du.ncols());
    let proj = nullspace_projection(du, RANK_TOL);
    let s = du.norm_squared();
    FourTensor::from_fn([big_n, n, big_n, n], |a, i, b, j| {
        du[(a, i)] * du[(b, j)] + if i == j { s * proj[(a, b)] } else { 0.0 }
    })
}

/// `Delta_inf u(x)` by contracting the coefficient tensor with `D^2 u(x)`.
pub fn infinity_laplacian(u: &dyn MapModel, x: &[f64]) -> Result<Vector> {
    let du = u.gradient(x)?;
    let d2u = u.hessian(x)?;
    Ok(infinity_laplacian_coefficient(&du).contract_hessian(&d2u))
}

/// `(Du D(|Du|^2 / 2), |Du|^2 [Du]^perp Delta u)`.
pub fn infinity_laplacian_decoupled(u: &dyn MapModel, x: &[f64]) -> Result<(Vector, Vector)> {
    let du = u.gradient(x)?;
    let d2u = u.hessian(x)?;
    Ok(infinity_laplacian_parts(&du, &d2u))
}

fn infinity_laplacian_parts(du: &Matrix, d2u: &Hessian) -> (Vector, Vector) {
    let n = du.ncols();
    // D_i(|Du|^2 / 2) = D_j u_b D^2_{ij} u_b
    let half_grad = Vector::from_fn(n, |i, _| {
        (0..du.nrows())
            .map(|b| (0..n).map(|j| du[(b, j)] * d2u.get(b, i, j)).sum::<f64>())
            .sum()
    });
    let tangential = du * half_grad;
    let proj = nullspace_projection(du, RANK_TOL);
    let normal = proj * d2u.laplacian() * du.norm_squared();
    (tangential, normal)
}

/// Coefficient `H_P (x) H_P + H [H_P]^perp H_PP` at `P`.
pub fn aronsson_coefficient(h: &dyn Hamiltonian, p: &Matrix) -> Result<FourTensor> {
    let hp = h.gradient(p)?;
    let hpp = h.hessian(p)?;
    let value = h.value(p)?;
    let proj = nullspace_projection(&hp, RANK_TOL);
    let normal = hpp.project_first(&proj);
    let [d0, d1, d2, d3] = normal.dims();
    Ok(FourTensor::from_fn([d0, d1, d2, d3], |a, i, b, j| {
        hp[(a, i)] * hp[(b, j)] + value * normal.get(a, i, b, j)
    }))
}

/// `A_inf u(x)` for a general Hamiltonian.
pub fn aronsson_system(h: &dyn Hamiltonian, u: &dyn MapModel, x: &[f64]) -> Result<Vector> {
    let du = u.gradient(x)?;
    let d2u = u.hessian(x)?;
    Ok(aronsson_coefficient(h, &du)?.contract_hessian(&d2u))
}

fn full_rank_gradient(u: &dyn MapModel, x: &[f64]) -> Result<(Matrix, Hessian)> {
    let du = u.gradient(x)?;
    if crate::tensor::numerical_rank(&du, RANK_TOL) < du.ncols() {
        return Err(Error::domain(format!(
            "Du of {} is rank deficient at |x| = {:e}; the dilation is infinite",
            u.id(),
            norm(x)
        )));
    }
    Ok((du, u.hessian(x)?))
}

/// Coefficient `K_P (x) K_P + [K_P]^perp K_PP` at `P`, with `K_PP` replaced by
/// its two explicit summands (the rest is removed by the projection).
pub fn q_infinity_coefficient(p: &Matrix) -> Result<FourTensor> {
    let kp = dilation_gradient(p)?;
    let proj = nullspace_projection(&kp, RANK_TOL);
    let normal = dilation_hessian_projected(p)?.project_first(&proj);
    let outer = FourTensor::outer(&kp, &kp);
    Ok(&outer + &normal)
}

/// `Q_inf u(x)`.
pub fn q_infinity(u: &dyn MapModel, x: &[f64]) -> Result<Vector> {
    let (du, d2u) = full_rank_gradient(u, x)?;
    Ok(q_infinity_coefficient(&du)?.contract_hessian(&d2u))
}

/// `(K_P(Du) D(K(Du)), ([K_P]^perp K_PP)(Du) : D^2 u)`, with `D(K(Du))` from the
/// chain rule `D_i K(Du) = K_{P_bj}(Du) D^2_{ij} u_b`.
pub fn q_infinity_decoupled(u: &dyn MapModel, x: &[f64]) -> Result<(Vector, Vector)> {
    let (du, d2u) = full_rank_gradient(u, x)?;
    let kp = dilation_gradient(&du)?;
    let n = du.ncols();
    let dk = Vector::from_fn(n, |i, _| {
        (0..du.nrows())
            .map(|b| (0..n).map(|j| kp[(b, j)] * d2u.get(b, i, j)).sum::<f64>())
            .sum()
    });
    let tangential = &kp * dk;
    let proj = nullspace_projection(&kp, RANK_TOL);
    let normal = dilation_hessian_projected(&du)?
        .project_first(&proj)
        .contract_hessian(&d2u);
    Ok((tangential, normal))
}

/// `A_{a i b j}(x) = (d_ai - mu x_a x_i / |x|^2)(d_bj - mu x_b x_j / |x|^2)`.
pub fn coefficient_tensor(mu: f64, x: &[f64]) -> Result<FourTensor> {
    if !(mu > 1.0) || !mu.is_finite() {
        return Err(Error::domain(format!(
            "coefficient tensor needs mu > 1, got {mu}"
        )));
    }
    let m = linear_factor(mu, x)?;
    Ok(FourTensor::outer(&m, &m))
}

/// `I - mu [x]^T`.
pub fn linear_factor(mu: f64, x: &[f64]) -> Result<Matrix> {
    let t = radial_tangent(x)?;
    let n = x.len();
    Ok(Matrix::identity(n, n) - t * mu)
}

/// `A(x) : D^2 u(x)`.
pub fn linear_system_residual(mu: f64, u: &dyn MapModel, x: &[f64]) -> Result<Vector> {
    check_square_system(u)?;
    let a = coefficient_tensor(mu, x)?;
    let d2u = u.hessian(x)?;
    Ok(a.contract_hessian(&d2u))
}

/// The systems the harness knows how to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "id", rename_all = "kebab-case")]
pub enum Operator {
    InfinityLaplacian,
    QInfinity,
    Linear { mu: f64 },
}

impl Operator {
    pub fn id(&self) -> &'static str {
        match self {
            Operator::InfinityLaplacian => "infinity-laplacian",
            Operator::QInfinity => "q-infinity",
            Operator::Linear { .. } => "linear",
        }
    }

    pub fn evaluate(&self, u: &dyn MapModel, x: &[f64]) -> Result<Vector> {
        match *self {
            Operator::InfinityLaplacian => infinity_laplacian(u, x),
            Operator::QInfinity => q_infinity(u, x),
            Operator::Linear { mu } => linear_system_residual(mu, u, x),
        }
    }

    /// Tangential and normal parts, where the operator has such a split.
    pub fn decoupled(&self, u: &dyn MapModel, x: &[f64]) -> Option<Result<(Vector, Vector)>> {
        match self {
            Operator::InfinityLaplacian => Some(infinity_laplacian_decoupled(u, x)),
            Operator::QInfinity => Some(q_infinity_decoupled(u, x)),
            Operator::Linear { .. } => None,
        }
    }
}
