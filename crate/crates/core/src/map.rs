//! The `MapModel` abstraction: a map `u: R^n -> R^N` with value, gradient and
//! Hessian evaluators.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{Hessian, Matrix, Vector};

/// How an evaluator produces its output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Analytic,
    FiniteDifference,
}

/// Where a map may be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    /// All of `R^n`.
    Everywhere,
    /// `inner < |x| <= outer`; `inner = 0` gives a punctured ball or space.
    Annulus { inner: f64, outer: f64 },
}

impl Domain {
    pub fn punctured_space() -> Self {
        Domain::Annulus {
            inner: 0.0,
            outer: f64::INFINITY,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match *self {
            Domain::Everywhere => true,
            Domain::Annulus { inner, outer } => {
                let r = norm(x);
                // a few ulps of slack so that normalised points on |x| = outer count
                r > inner && r <= outer * (1.0 + 4.0 * f64::EPSILON)
            }
        }
    }

    /// Distance to the inner edge, or `+inf` when there is none. Used to scale
    /// finite-difference steps near singular points.
    pub fn inner_distance(&self, x: &[f64]) -> f64 {
        match *self {
            Domain::Everywhere => f64::INFINITY,
            Domain::Annulus { inner, .. } => norm(x) - inner,
        }
    }

    pub fn inner_radius(&self) -> f64 {
        match *self {
            Domain::Everywhere => 0.0,
            Domain::Annulus { inner, .. } => inner,
        }
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// A map `u: R^n -> R^N`. Implementations are immutable and safe to share
/// across threads.
pub trait MapModel: Send + Sync {
    /// Short identifier used in reports, e.g. `power(gamma=1,n=2)`.
    fn id(&self) -> String;

    /// `(n, N)`: input and output dimensions.
    fn dims(&self) -> (usize, usize);

    fn domain(&self) -> Domain;

    fn value(&self, x: &[f64]) -> Result<Vector>;

    /// `Du(x)`, an `N x n` matrix.
    fn gradient(&self, x: &[f64]) -> Result<Matrix>;

    /// `D^2 u(x)`, one `n x n` block per output component.
    fn hessian(&self, x: &[f64]) -> Result<Hessian>;

    fn gradient_provenance(&self) -> Provenance {
        Provenance::Analytic
    }

    fn hessian_provenance(&self) -> Provenance {
        Provenance::Analytic
    }

    /// Distance to a known rank interface of `Du`, if the map has one.
    fn interface_distance(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// Whether the map is of the form `u(x) = rho(|x|) x/|x|` (used by the
    /// convex hull check in dimension >= 3).
    fn is_radial(&self) -> bool {
        false
    }

    fn fully_analytic(&self) -> bool {
        self.gradient_provenance() == Provenance::Analytic
            && self.hessian_provenance() == Provenance::Analytic
    }
}

/// Checks dimension and domain before an evaluator runs.
pub fn check_point(map: &dyn MapModel, x: &[f64]) -> Result<()> {
    let (n, _) = map.dims();
    if x.len() != n {
        return Err(Error::dimension(format!(
            "{} expects points in R^{n}, got length {}",
            map.id(),
            x.len()
        )));
    }
    if !map.domain().contains(x) {
        return Err(Error::domain(format!(
            "{} is not defined at |x| = {:e}",
            map.id(),
            norm(x)
        )));
    }
    Ok(())
}
