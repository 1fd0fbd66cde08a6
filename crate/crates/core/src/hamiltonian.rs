//! Hamiltonians `H(P)` on `R^{N x n}` with their first and second derivatives.

use crate::error::{Error, Result};
use crate::map::Provenance;
use crate::tensor::{dilation, dilation_gradient, FourTensor, Matrix};

/// Step for finite-difference derivatives of a Hamiltonian, scaled by `max(1, |P|)`.
pub const HAMILTONIAN_FD_STEP: f64 = 1e-5;

pub trait Hamiltonian: Send + Sync {
    fn name(&self) -> &str;
    fn value(&self, p: &Matrix) -> Result<f64>;
    fn gradient(&self, p: &Matrix) -> Result<Matrix>;
    fn hessian(&self, p: &Matrix) -> Result<FourTensor>;

    fn gradient_provenance(&self) -> Provenance {
        Provenance::Analytic
    }

    fn hessian_provenance(&self) -> Provenance {
        Provenance::Analytic
    }
}

/// `H(P) = |P|^2`; `H_P = 2P`, `H_PP = 2 d_ab d_ij`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Euclidean;

impl Hamiltonian for Euclidean {
    fn name(&self) -> &str {
        "euclidean"
    }

    fn value(&self, p: &Matrix) -> Result<f64> {
        Ok(p.norm_squared())
    }

    fn gradient(&self, p: &Matrix) -> Result<Matrix> {
        Ok(p * 2.0)
    }

    fn hessian(&self, p: &Matrix) -> Result<FourTensor> {
        Ok(FourTensor::from_fn(
            [p.nrows(), p.ncols(), p.nrows(), p.ncols()],
            |a, i, b, j| if a == b && i == j { 2.0 } else { 0.0 },
        ))
    }
}

/// The dilation `K(P)` as a Hamiltonian: analytic gradient, Hessian by central
/// differences of the gradient (the closed form is only known up to a term
/// killed by `[K_P]^perp`).
#[derive(Debug, Clone, Copy, Default)]
pub struct DilationHamiltonian;

impl Hamiltonian for DilationHamiltonian {
    fn name(&self) -> &str {
        "dilation"
    }

    fn value(&self, p: &Matrix) -> Result<f64> {
        dilation(p)
            .finite()
            .ok_or_else(|| Error::domain("dilation is infinite for rank-deficient P"))
    }

    fn gradient(&self, p: &Matrix) -> Result<Matrix> {
        dilation_gradient(p)
    }

    fn hessian(&self, p: &Matrix) -> Result<FourTensor> {
        fd_hessian_of_gradient(|q| self.gradient(q), p)
    }

    fn hessian_provenance(&self) -> Provenance {
        Provenance::FiniteDifference
    }
}

/// Any scalar function of a matrix, with both derivatives by central differences.
pub struct FdHamiltonian<F> {
    name: String,
    f: F,
}

impl<F> FdHamiltonian<F>
where
    F: Fn(&Matrix) -> Result<f64> + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FdHamiltonian {
            name: name.into(),
            f,
        }
    }
}

impl<F> Hamiltonian for FdHamiltonian<F>
where
    F: Fn(&Matrix) -> Result<f64> + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn value(&self, p: &Matrix) -> Result<f64> {
        (self.f)(p)
    }

    fn gradient(&self, p: &Matrix) -> Result<Matrix> {
        let h = HAMILTONIAN_FD_STEP * p.norm().max(1.0);
        let mut g = Matrix::zeros(p.nrows(), p.ncols());
        for a in 0..p.nrows() {
            for i in 0..p.ncols() {
                let mut pp = p.clone();
                let mut pm = p.clone();
                pp[(a, i)] += h;
                pm[(a, i)] -= h;
                g[(a, i)] = ((self.f)(&pp)? - (self.f)(&pm)?) / (2.0 * h);
            }
        }
        Ok(g)
    }

    fn hessian(&self, p: &Matrix) -> Result<FourTensor> {
        // Second differences of the value; step 1e-4 balances truncation and rounding.
        let h = 1e-4 * p.norm().max(1.0);
        let (big_n, n) = (p.nrows(), p.ncols());
        let f0 = (self.f)(p)?;
        let shifted = |da: (usize, usize, f64), db: (usize, usize, f64)| -> Result<f64> {
            let mut q = p.clone();
            q[(da.0, da.1)] += da.2;
            q[(db.0, db.1)] += db.2;
            (self.f)(&q)
        };
        let mut t = FourTensor::zeros([big_n, n, big_n, n]);
        for a in 0..big_n {
            for i in 0..n {
                for b in 0..big_n {
                    for j in 0..n {
                        let v = if (a, i) == (b, j) {
                            (shifted((a, i, h), (b, j, 0.0))? - 2.0 * f0
                                + shifted((a, i, -h), (b, j, 0.0))?)
                                / (h * h)
                        } else {
                            (shifted((a, i, h), (b, j, h))?
                                - shifted((a, i, h), (b, j, -h))?
                                - shifted((a, i, -h), (b, j, h))?
                                + shifted((a, i, -h), (b, j, -h))?)
                                / (4.0 * h * h)
                        };
                        t.set(a, i, b, j, v);
                    }
                }
            }
        }
        Ok(t)
    }

    fn gradient_provenance(&self) -> Provenance {
        Provenance::FiniteDifference
    }

    fn hessian_provenance(&self) -> Provenance {
        Provenance::FiniteDifference
    }
}

/// Central differences of a matrix-valued gradient: `T_{a i b j} = d G_{a i} / d P_{b j}`.
pub fn fd_hessian_of_gradient(
    grad: impl Fn(&Matrix) -> Result<Matrix>,
    p: &Matrix,
) -> Result<FourTensor> {
    let h = HAMILTONIAN_FD_STEP * p.norm().max(1.0);
    let (big_n, n) = (p.nrows(), p.ncols());
    let mut t = FourTensor::zeros([big_n, n, big_n, n]);
    for b in 0..big_n {
        for j in 0..n {
            let mut pp = p.clone();
            let mut pm = p.clone();
            pp[(b, j)] += h;
            pm[(b, j)] -= h;
            let d = (grad(&pp)? - grad(&pm)?) / (2.0 * h);
            for a in 0..big_n {
                for i in 0..n {
                    t.set(a, i, b, j, d[(a, i)]);
                }
            }
        }
    }
    Ok(t)
}

/// Largest `|H_{a i b j} - H_{b j a i}|`.
pub fn hessian_asymmetry(t: &FourTensor) -> f64 {
    let [d0, d1, d2, d3] = t.dims();
    let mut worst: f64 = 0.0;
    for a in 0..d0 {
        for i in 0..d1 {
            for b in 0..d2 {
                for j in 0..d3 {
                    worst = worst.max((t.get(a, i, b, j) - t.get(b, j, a, i)).abs());
                }
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_p() -> Matrix {
        Matrix::from_row_slice(3, 2, &[1.3, -0.2, 0.4, 0.9, -0.5, 0.7])
    }

    #[test]
    fn euclidean_matches_fd_backed_version() {
        let fd = FdHamiltonian::new("fd-euclidean", |p: &Matrix| Ok(p.norm_squared()));
        let p = sample_p();
        assert!((Euclidean.gradient(&p).unwrap() - fd.gradient(&p).unwrap()).amax() < 1e-8);
        let diff = &Euclidean.hessian(&p).unwrap() - &fd.hessian(&p).unwrap();
        assert!(diff.max_abs() < 1e-5);
    }

    #[test]
    fn dilation_hessian_is_symmetric_and_gradient_matches_fd() {
        let p = sample_p();
        let h = DilationHamiltonian.hessian(&p).unwrap();
        assert!(hessian_asymmetry(&h) < 1e-6 * h.max_abs().max(1.0));
        let fd = FdHamiltonian::new("fd-k", |q: &Matrix| DilationHamiltonian.value(q));
        let g = DilationHamiltonian.gradient(&p).unwrap();
        assert!((g.clone() - fd.gradient(&p).unwrap()).amax() < 1e-6 * g.amax().max(1.0));
    }

    #[test]
    fn dilation_value_rejects_rank_deficiency() {
        let p = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(DilationHamiltonian.value(&p).is_err());
    }
}
