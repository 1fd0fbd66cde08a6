//! Membership tests for the inclusion sets
//!
//! * `L_a = { A : |A|^2 = a, det A != 0 }`
//! * `K_a = { A : K(A) = a, det S(A^T A) > 0 }` (or `!= 0`, see [`DetMode`])
//!
//! and scans of `Du(x)` over a point set.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::map::MapModel;
use crate::tensor::{ahlfors, dilation, Matrix};

/// Equality tolerance for fully analytic maps.
pub const ANALYTIC_TOL: f64 = 1e-9;
/// Equality tolerance when any evaluator uses finite differences.
pub const FD_TOL: f64 = 1e-6;
/// Relative determinant margin; multiplied by the natural scale of the determinant.
pub const DET_MARGIN: f64 = 1e-12;

/// Sign condition on `det S(A^T A)` for the `K_a` set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetMode {
    /// `det S(A^T A) > margin`.
    Positive,
    /// `|det S(A^T A)| > margin`.
    #[default]
    Nonzero,
}

impl std::str::FromStr for DetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positive" => Ok(DetMode::Positive),
            "nonzero" => Ok(DetMode::Nonzero),
            other => Err(Error::domain(format!(
                "unknown det mode {other:?}; expected positive or nonzero"
            ))),
        }
    }
}

/// Which inclusion set to test against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "set")]
pub enum SetSpec {
    L { a: f64 },
    K { a: f64, det_mode: DetMode },
}

impl SetSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SetSpec::L { .. } => "L",
            SetSpec::K { .. } => "K",
        }
    }

    pub fn level(&self) -> f64 {
        match *self {
            SetSpec::L { a } | SetSpec::K { a, .. } => a,
        }
    }
}

/// One named constraint of a membership test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    /// `true` for `value <= tolerance`, `false` for `value > tolerance`.
    pub upper: bool,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &'static str, value: f64, tolerance: f64) -> Self {
        Check {
            name,
            value,
            tolerance,
            upper: true,
            passed: value <= tolerance,
        }
    }

    fn above(name: &'static str, value: f64, tolerance: f64) -> Self {
        Check {
            name,
            value,
            tolerance,
            upper: false,
            passed: value > tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InclusionVerdict {
    pub member: bool,
    pub checks: Vec<Check>,
}

impl InclusionVerdict {
    fn from_checks(checks: Vec<Check>) -> Self {
        InclusionVerdict {
            member: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn deviation(&self, name: &str) -> Option<f64> {
        self.check(name).map(|c| c.value)
    }
}

fn require_square(a: &Matrix) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::domain(format!(
            "inclusion sets are defined for square matrices, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.ncols())
}

fn largest_singular_value(a: &Matrix) -> f64 {
    a.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// `A in L_a`: `||A|^2 - a| <= tol` and `|det A| > 1e-12 sigma_max^n`.
pub fn in_l_a(m: &Matrix, a: f64, tol: f64) -> Result<InclusionVerdict> {
    let n = require_square(m)?;
    if !(a >= 0.0) {
        return Err(Error::domain(format!("L_a needs a >= 0, got {a}")));
    }
    let margin = DET_MARGIN * largest_singular_value(m).powi(n as i32);
    Ok(InclusionVerdict::from_checks(vec![
        Check::at_most("norm_deviation", (m.norm_squared() - a).abs(), tol),
        Check::above("determinant_margin", m.determinant().abs(), margin),
    ]))
}

/// `A in K_a`: `|K(A) - a| <= tol` and the sign condition on `det S(A^T A)`,
/// with margin `1e-12 sigma_max^{2n}`.
pub fn in_k_a(m: &Matrix, a: f64, tol: f64, mode: DetMode) -> Result<InclusionVerdict> {
    let n = require_square(m)?;
    if !(a >= n as f64) {
        return Err(Error::domain(format!("K_a needs a >= n = {n}, got {a}")));
    }
    let k_dev = match dilation(m).finite() {
        Some(k) => (k - a).abs(),
        None => f64::INFINITY,
    };
    let s_det = ahlfors(&(m.transpose() * m))?.determinant();
    let margin = DET_MARGIN * largest_singular_value(m).powi(2 * n as i32);
    let signed = match mode {
        DetMode::Positive => s_det,
        DetMode::Nonzero => s_det.abs(),
    };
    let mut det_check = Check::above("ahlfors_determinant", signed, margin);
    det_check.value = s_det;
    Ok(InclusionVerdict::from_checks(vec![
        Check::at_most("dilation_deviation", k_dev, tol),
        det_check,
    ]))
}

/// Dispatch on a [`SetSpec`].
pub fn test_membership(m: &Matrix, set: SetSpec, tol: f64) -> Result<InclusionVerdict> {
    match set {
        SetSpec::L { a } => in_l_a(m, a, tol),
        SetSpec::K { a, det_mode } => in_k_a(m, a, tol, det_mode),
    }
}

/// Default equality tolerance for a map, by evaluator provenance.
pub fn default_tolerance(map: &dyn MapModel) -> f64 {
    if map.gradient_provenance() == crate::map::Provenance::Analytic {
        ANALYTIC_TOL
    } else {
        FD_TOL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InclusionPoint {
    pub x: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<InclusionVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl InclusionPoint {
    pub fn member(&self) -> bool {
        self.verdict.as_ref().is_some_and(|v| v.member)
    }
}

/// Result of [`scan_inclusion`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InclusionScan {
    pub set: SetSpec,
    pub tolerance: f64,
    pub points: Vec<InclusionPoint>,
    pub members: usize,
    pub errors: usize,
    pub membership_fraction: f64,
    /// For each named check, the worst value seen: the largest for upper
    /// bounds, the smallest for lower bounds (in absolute value for
    /// `DetMode::Nonzero`).
    pub worst: BTreeMap<String, f64>,
}

impl InclusionScan {
    pub fn all_members(&self) -> bool {
        !self.points.is_empty() && self.members == self.points.len()
    }
}

/// Tests `Du(x)` against `set` at every point. Evaluation failures are recorded
/// per point and count as non-members.
pub fn scan_inclusion(
    map: &dyn MapModel,
    points: &[Vec<f64>],
    set: SetSpec,
    tol: Option<f64>,
) -> InclusionScan {
    let tol = tol.unwrap_or_else(|| default_tolerance(map));
    let results: Vec<InclusionPoint> = points
        .par_iter()
        .map(|x| {
            let verdict = map
                .gradient(x)
                .and_then(|du| test_membership(&du, set, tol));
            match verdict {
                Ok(v) => InclusionPoint {
                    x: x.clone(),
                    verdict: Some(v),
                    error: None,
                },
                Err(e) => InclusionPoint {
                    x: x.clone(),
                    verdict: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    for v in results.iter().filter_map(|p| p.verdict.as_ref()) {
        for c in &v.checks {
            let value = match set {
                SetSpec::K {
                    det_mode: DetMode::Nonzero,
                    ..
                } if !c.upper => c.value.abs(),
                _ => c.value,
            };
            let entry = worst.entry(c.name.to_string()).or_insert(value);
            *entry = if c.upper {
                entry.max(value)
            } else {
                entry.min(value)
            };
        }
    }
    let members = results.iter().filter(|p| p.member()).count();
    let errors = results.iter().filter(|p| p.error.is_some()).count();
    let membership_fraction = if results.is_empty() {
        0.0
    } else {
        members as f64 / results.len() as f64
    };
    InclusionScan {
        set,
        tolerance: tol,
        points: results,
        members,
        errors,
        membership_fraction,
        worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_in_l_n() {
        let v = in_l_a(&Matrix::identity(3, 3), 3.0, 1e-12).unwrap();
        assert!(v.member);
    }

    #[test]
    fn singular_matrix_fails_determinant_margin() {
        let v = in_l_a(
            &Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            1.0,
            1e-12,
        )
        .unwrap();
        assert!(!v.member);
        assert!(v.check("norm_deviation").unwrap().passed);
        assert!(!v.check("determinant_margin").unwrap().passed);
    }

    #[test]
    fn conformal_matrices_are_excluded_from_k_n() {
        for mode in [DetMode::Positive, DetMode::Nonzero] {
            let v = in_k_a(&Matrix::identity(2, 2), 2.0, 1e-12, mode).unwrap();
            assert!(!v.member);
            assert!(v.check("dilation_deviation").unwrap().passed);
        }
    }

    #[test]
    fn non_square_is_a_domain_error() {
        let m = Matrix::zeros(3, 2);
        assert!(matches!(in_l_a(&m, 1.0, 1e-9), Err(Error::Domain(_))));
        assert!(matches!(
            in_k_a(&m, 3.0, 1e-9, DetMode::Nonzero),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn det_mode_parses() {
        assert_eq!("positive".parse::<DetMode>().unwrap(), DetMode::Positive);
        assert_eq!("nonzero".parse::<DetMode>().unwrap(), DetMode::Nonzero);
        assert!("other".parse::<DetMode>().is_err());
    }
}
