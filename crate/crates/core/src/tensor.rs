//! Small dense linear algebra: radial and nullspace projections, the Ahlfors
//! operator, and the dilation function `K(P) = |P|^2 / det(P^T P)^{1/n}` with
//! its first derivative and the projected part of its second derivative.
//!
//! Matrices are `nalgebra::DMatrix<f64>`; a matrix `P` of shape `N x n` is
//! indexed `(alpha, i)`. Sizes are tiny, so everything is dense.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default relative singular-value cutoff for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Dense 4-tensor indexed `(alpha, i, beta, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourTensor {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl FourTensor {
    pub fn zeros(dims: [usize; 4]) -> Self {
        FourTensor {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut t = FourTensor::zeros(dims);
        for a in 0..dims[0] {
            for i in 0..dims[1] {
                for b in 0..dims[2] {
                    for j in 0..dims[3] {
                        t.set(a, i, b, j, f(a, i, b, j));
                    }
                }
            }
        }
        t
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    #[inline]
    fn offset(&self, a: usize, i: usize, b: usize, j: usize) -> usize {
        ((a * self.dims[1] + i) * self.dims[2] + b) * self.dims[3] + j
    }

    #[inline]
    pub fn get(&self, a: usize, i: usize, b: usize, j: usize) -> f64 {
        self.data[self.offset(a, i, b, j)]
    }

    #[inline]
    pub fn set(&mut self, a: usize, i: usize, b: usize, j: usize, v: f64) {
        let k = self.offset(a, i, b, j);
        self.data[k] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `(Q T)_{g i b j} = Q_{g a} T_{a i b j}`.
    pub fn project_first(&self, q: &Matrix) -> FourTensor {
        let [d0, d1, d2, d3] = self.dims;
        FourTensor::from_fn([q.nrows(), d1, d2, d3], |g, i, b, j| {
            (0..d0).map(|a| q[(g, a)] * self.get(a, i, b, j)).sum()
        })
    }

    /// `T : P (x) P = T_{a i b j} P_{a i} P_{b j}`.
    pub fn quadratic_form(&self, p: &Matrix) -> f64 {
        let [d0, d1, d2, d3] = self.dims;
        let mut s = 0.0;
        for a in 0..d0 {
            for i in 0..d1 {
                for b in 0..d2 {
                    for j in 0..d3 {
                        s += self.get(a, i, b, j) * p[(a, i)] * p[(b, j)];
                    }
                }
            }
        }
        s
    }

    /// `(T : D^2 u)_a = T_{a i b j} D^2_{ij} u_b`.
    pub fn contract_hessian(&self, h: &Hessian) -> Vector {
        let [d0, d1, d2, d3] = self.dims;
        Vector::from_fn(d0, |a, _| {
            let mut s = 0.0;
            for i in 0..d1 {
                for b in 0..d2 {
                    let hb = h.component(b);
                    for j in 0..d3 {
                        s += self.get(a, i, b, j) * hb[(i, j)];
                    }
                }
            }
            s
        })
    }

    /// `A (x) B` for two matrices: `(A (x) B)_{a i b j} = A_{a i} B_{b j}`.
    pub fn outer(a: &Matrix, b: &Matrix) -> FourTensor {
        FourTensor::from_fn(
            [a.nrows(), a.ncols(), b.nrows(), b.ncols()],
            |p, i, q, j| a[(p, i)] * b[(q, j)],
        )
    }
}

impl std::ops::Add for &FourTensor {
    type Output = FourTensor;
    fn add(self, rhs: &FourTensor) -> FourTensor {
        assert_eq!(self.dims, rhs.dims);
        FourTensor {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(x, y)| x + y)
                .collect(),
        }
    }
}

impl std::ops::Sub for &FourTensor {
    type Output = FourTensor;
    fn sub(self, rhs: &FourTensor) -> FourTensor {
        assert_eq!(self.dims, rhs.dims);
        FourTensor {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(x, y)| x - y)
                .collect(),
        }
    }
}

/// Second derivatives of a map `R^n -> R^N`: one symmetric `n x n` matrix per
/// output component, `D^2_{ij} u_beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hessian {
    components: Vec<Matrix>,
}

impl Hessian {
    pub fn new(components: Vec<Matrix>) -> Self {
        Hessian { components }
    }

    pub fn zeros(n_out: usize, n: usize) -> Self {
        Hessian {
            components: vec![Matrix::zeros(n, n); n_out],
        }
    }

    pub fn n_out(&self) -> usize {
        self.components.len()
    }

    pub fn n_in(&self) -> usize {
        self.components.first().map_or(0, |m| m.nrows())
    }

    pub fn component(&self, beta: usize) -> &Matrix {
        &self.components[beta]
    }

    pub fn component_mut(&mut self, beta: usize) -> &mut Matrix {
        &mut self.components[beta]
    }

    pub fn get(&self, beta: usize, i: usize, j: usize) -> f64 {
        self.components[beta][(i, j)]
    }

    pub fn components(&self) -> &[Matrix] {
        &self.components
    }

    /// `Delta u` as an `N`-vector.
    pub fn laplacian(&self) -> Vector {
        Vector::from_iterator(self.n_out(), self.components.iter().map(|m| m.trace()))
    }

    pub fn norm(&self) -> f64 {
        self.components
            .iter()
            .map(|m| m.norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_diff(&self, other: &Hessian) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }

    pub fn max_asymmetry(&self) -> f64 {
        self.components
            .iter()
            .map(|m| (m - m.transpose()).amax())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.components
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()))
    }
}

fn check_vector(x: &[f64]) -> Result<f64> {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    if x.is_empty() || !(r2 > 0.0) || !r2.is_finite() {
        return Err(Error::domain(
            "radial projection needs a finite nonzero vector",
        ));
    }
    Ok(r2)
}

/// `x (x) x / |x|^2`.
pub fn radial_tangent(x: &[f64]) -> Result<Matrix> {
    let r2 = check_vector(x)?;
    let n = x.len();
    Ok(Matrix::from_fn(n, n, |i, j| x[i] * x[j] / r2))
}

/// Returns `([x]^T, [x]^perp) = (x (x) x / |x|^2, I - x (x) x / |x|^2)`.
pub fn radial_projections(x: &[f64]) -> Result<(Matrix, Matrix)> {
    let tangent = radial_tangent(x)?;
    let n = x.len();
    let normal = Matrix::identity(n, n) - &tangent;
    Ok((tangent, normal))
}

fn singular_values(p: &Matrix) -> Vec<f64> {
    if p.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = p.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values above `tol * sigma_max`.
pub fn numerical_rank(p: &Matrix, tol: f64) -> usize {
    let s = singular_values(p);
    let smax = s.first().copied().unwrap_or(0.0);
    if smax <= 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > tol * smax).count()
}

/// How close the singular spectrum of `p` comes to the rank cutoff, measured
/// in multiplicative distance: `min_k max(s_k / c, c / s_k)` with
/// `c = tol * sigma_max`. Values below `1e3` mean some singular value sits
/// within three decades of the cutoff. Exactly-zero singular values and a
/// zero matrix give `+inf`.
pub fn cutoff_separation(p: &Matrix, tol: f64) -> f64 {
    let s = singular_values(p);
    let smax = s.first().copied().unwrap_or(0.0);
    if smax <= 0.0 {
        return f64::INFINITY;
    }
    let cut = tol * smax;
    s.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| (v / cut).max(cut / v))
        .fold(f64::INFINITY, f64::min)
}

/// Orthogonal projection of `R^N` onto `null(P^T)`, for `P` of shape `N x n`.
///
/// The rank `r` counts singular values above `tol * sigma_max`; the first `r`
/// columns of a column-pivoted QR factor span `range(P)` and the projection is
/// `I - Q_r Q_r^T`.
pub fn nullspace_projection(p: &Matrix, tol: f64) -> Matrix {
    let big_n = p.nrows();
    let mut proj = Matrix::identity(big_n, big_n);
    let rank = numerical_rank(p, tol);
    if rank == 0 {
        return proj;
    }
    if rank == big_n {
        return Matrix::zeros(big_n, big_n);
    }
    // nalgebra's SVD returns wrong singular vectors for some rank-deficient
    // inputs (its singular values are fine), so the basis comes from QR.
    let q = p.clone().col_piv_qr().q();
    for k in 0..rank {
        let col = q.column(k);
        proj -= col * col.transpose();
    }
    proj
}

/// Ahlfors operator `S(A) = (A + A^T)/2 - (tr A / n) I`.
pub fn ahlfors(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(Error::domain(format!(
            "Ahlfors operator needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    let sym = (a + a.transpose()) * 0.5;
    Ok(sym - Matrix::identity(n, n) * (a.trace() / n as f64))
}

/// Value of the dilation function. Rank deficiency is tagged rather than
/// encoded as a float infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Dilation {
    Finite(f64),
    Infinite,
}

impl Dilation {
    pub fn finite(self) -> Option<f64> {
        match self {
            Dilation::Finite(v) => Some(v),
            Dilation::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Dilation::Infinite)
    }
}

fn gram_parts(p: &Matrix) -> Result<(Matrix, Matrix, f64)> {
    let n = p.ncols();
    if p.nrows() < n || numerical_rank(p, RANK_TOL) < n {
        return Err(Error::domain("dilation derivatives need rank(P) = n"));
    }
    let gram = p.transpose() * p;
    let det = gram.determinant();
    if !(det > 0.0) {
        return Err(Error::domain("det(P^T P) is not positive"));
    }
    let inv = gram
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::domain("P^T P is singular"))?;
    Ok((gram, inv, det.powf(1.0 / n as f64)))
}

/// `K(P) = |P|^2 / det(P^T P)^{1/n}`, or `Infinite` when `rank(P) < n`.
pub fn dilation(p: &Matrix) -> Dilation {
    let n = p.ncols();
    if n == 0 || p.nrows() < n || numerical_rank(p, RANK_TOL) < n {
        return Dilation::Infinite;
    }
    let det = (p.transpose() * p).determinant();
    if !(det > 0.0) {
        return Dilation::Infinite;
    }
    Dilation::Finite(p.norm_squared() / det.powf(1.0 / n as f64))
}

/// `K_P(P)_{alpha i} = 2 P_{alpha m} (delta_{mi} - |P|^2/n (P^T P)^{-1}_{mi}) / det(P^T P)^{1/n}`.
pub fn dilation_gradient(p: &Matrix) -> Result<Matrix> {
    let n = p.ncols();
    let (_, inv, det_root) = gram_parts(p)?;
    let c = p.norm_squared() / n as f64;
    let bracket = Matrix::identity(n, n) - inv * c;
    Ok(p * bracket * (2.0 / det_root))
}

/// Square-matrix form `2 P^{-T} S(P^T P) / det(P^T P)^{1/n}`, an independent
/// route to [`dilation_gradient`].
pub fn dilation_gradient_square(p: &Matrix) -> Result<Matrix> {
    if !p.is_square() {
        return Err(Error::domain("square form needs n = N"));
    }
    let (gram, _, det_root) = gram_parts(p)?;
    let inv_t = p
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::domain("P is singular"))?;
    Ok(inv_t * ahlfors(&gram)? * (2.0 / det_root))
}

/// Constant tensor `E_{kjlm} = d_ml d_jk + d_mj d_kl - (2/n) d_mk d_jl`.
pub fn e_tensor(n: usize) -> FourTensor {
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let two_n = 2.0 / n as f64;
    FourTensor::from_fn([n, n, n, n], |k, j, l, m| {
        d(m, l) * d(j, k) + d(m, j) * d(k, l) - two_n * d(m, k) * d(j, l)
    })
}

/// The two explicit summands of `K_PP(P)`:
///
/// `2 d_ab (C S)_{ij} / det^{1/n} + 2 P_am P_bl C_ik E_kjlm / det^{1/n}`
///
/// with `C = (P^T P)^{-1}`, `S = S(P^T P)`. The remaining part of the true
/// Hessian has the form `K_{P_am} A_{m b i j}` and is annihilated by
/// `[K_P]^perp`, so this tensor is only meaningful after that projection.
pub fn dilation_hessian_projected(p: &Matrix) -> Result<FourTensor> {
    let (big_n, n) = (p.nrows(), p.ncols());
    let (gram, inv, det_root) = gram_parts(p)?;
    let cs = &inv * ahlfors(&gram)?;
    let e = e_tensor(n);
    let scale = 2.0 / det_root;

    // W_{a k j l} = P_am E_kjlm, then contract with C_ik and P_bl.
    let mut out = FourTensor::zeros([big_n, n, big_n, n]);
    for a in 0..big_n {
        for i in 0..n {
            for b in 0..big_n {
                for j in 0..n {
                    let mut s = if a == b { cs[(i, j)] } else { 0.0 };
                    for k in 0..n {
                        let cik = inv[(i, k)];
                        if cik == 0.0 {
                            continue;
                        }
                        for l in 0..n {
                            let pbl = p[(b, l)];
                            for m in 0..n {
                                s += p[(a, m)] * pbl * cik * e.get(k, j, l, m);
                            }
                        }
                    }
                    out.set(a, i, b, j, scale * s);
                }
            }
        }
    }
    Ok(out)
}

/// `(I + gamma [x]^T)^{-1} = I - gamma/(gamma + 1) [x]^T`.
pub fn rank_one_inverse(gamma: f64, x: &[f64]) -> Result<Matrix> {
    if (1.0 + gamma).abs() <= f64::EPSILON {
        return Err(Error::domain("I + gamma [x]^T is singular for gamma = -1"));
    }
    let tangent = radial_tangent(x)?;
    let n = x.len();
    Ok(Matrix::identity(n, n) - tangent * (gamma / (gamma + 1.0)))
}

/// Frobenius inner product `A : B`.
pub fn frobenius(a: &Matrix, b: &Matrix) -> f64 {
    a.component_mul(b).sum()
}
