//! Sampling, finite-difference oracles, residual reports, boundary checks and
//! nonuniqueness demonstrations.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::inclusion::InclusionScan;
use crate::map::{norm, Domain, MapModel, Provenance};
use crate::operators::{residual_scale, Operator};
use crate::solutions::{eikonal_map, identity_map, mu_exponent, mu_map, power_map};
use crate::tensor::{
    cutoff_separation, dilation_gradient, rank_one_inverse, Hessian, Matrix, Vector, RANK_TOL,
};

pub const FD_GRADIENT_STEP: f64 = 1e-5;
pub const FD_HESSIAN_STEP: f64 = 1e-4;
pub const FD_GRADIENT_REL_TOL: f64 = 1e-6;
pub const FD_HESSIAN_REL_TOL: f64 = 1e-5;
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-6;
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-10;
pub const DEFAULT_DISTINCTNESS: f64 = 1e-2;
/// Width of the band around a known rank interface that is excluded from
/// aggregation.
pub const INTERFACE_BAND: f64 = 1e-3;
/// Points whose singular spectrum comes within this factor of the rank cutoff
/// are treated as near-interface.
pub const SEPARATION_THRESHOLD: f64 = 1e3;
/// Radius at which `|u|` is reported as a stand-in for `u(0) = 0`.
pub const INNER_PROXY_RADIUS: f64 = 1e-3;

// ---------------------------------------------------------------------------
// sampling

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSpec {
    pub shells: usize,
    pub per_shell: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSet {
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<SampleSpec>,
    #[serde(skip)]
    pub points: Vec<Vec<f64>>,
}

impl SampleSet {
    /// A sample set from explicit points.
    pub fn from_points(n: usize, points: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| p.len() != n) {
            return Err(Error::dimension(format!(
                "sample point of length {} in a set for R^{n}",
                p.len()
            )));
        }
        Ok(SampleSet {
            n,
            spec: None,
            points,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn radius_range(&self) -> Option<(f64, f64)> {
        self.points
            .iter()
            .map(|p| norm(p))
            .fold(None, |acc, r| match acc {
                None => Some((r, r)),
                Some((lo, hi)) => Some((lo.min(r), hi.max(r))),
            })
    }
}

fn check_radii(n: usize, r_min: f64, r_max: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::domain("dimension must be positive"));
    }
    if !(r_min > 0.0 && r_min < r_max && r_max < 1.0) {
        return Err(Error::domain(format!(
            "sampling radii must satisfy 0 < r_min < r_max < 1, got [{r_min}, {r_max}]"
        )));
    }
    Ok(())
}

/// A uniformly distributed unit vector in `R^n`.
pub fn random_direction(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let r = norm(&v);
        if r > 1e-8 {
            return v.into_iter().map(|c| c / r).collect();
        }
    }
}

/// `per_shell` directions for a shell: equally spaced with a random phase in
/// the plane, Gaussian otherwise.
fn shell_directions(rng: &mut impl Rng, n: usize, count: usize) -> Vec<Vec<f64>> {
    match n {
        1 => (0..count)
            .map(|j| vec![if j % 2 == 0 { 1.0 } else { -1.0 }])
            .collect(),
        2 => {
            let phase: f64 = rng.random();
            (0..count)
                .map(|j| {
                    let th = std::f64::consts::TAU * (j as f64 + phase) / count as f64;
                    vec![th.cos(), th.sin()]
                })
                .collect()
        }
        _ => (0..count).map(|_| random_direction(rng, n)).collect(),
    }
}

/// Concentric shells of points in `r_min <= |x| <= r_max`, deterministic in
/// `seed`. Shell radii are equally spaced and include both endpoints.
pub fn sample_punctured_ball(
    n: usize,
    shells: usize,
    per_shell: usize,
    r_min: f64,
    r_max: f64,
    seed: u64,
) -> Result<SampleSet> {
    check_radii(n, r_min, r_max)?;
    if shells == 0 || per_shell == 0 {
        return Err(Error::domain(
            "need at least one shell and one point per shell",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(shells * per_shell);
    for k in 0..shells {
        let r = if shells == 1 {
            0.5 * (r_min + r_max)
        } else {
            (r_min + (r_max - r_min) * k as f64 / (shells - 1) as f64).clamp(r_min, r_max)
        };
        for d in shell_directions(&mut rng, n, per_shell) {
            points.push(d.into_iter().map(|c| c * r).collect());
        }
    }
    Ok(SampleSet {
        n,
        spec: Some(SampleSpec {
            shells,
            per_shell,
            r_min,
            r_max,
            seed,
        }),
        points,
    })
}

/// `count` independent draws, uniform in volume on `r_min <= |x| <= r_max`.
pub fn random_annulus_points(
    n: usize,
    count: usize,
    r_min: f64,
    r_max: f64,
    seed: u64,
) -> Result<SampleSet> {
    check_radii(n, r_min, r_max)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nf = n as f64;
    let (lo, hi) = (r_min.powf(nf), r_max.powf(nf));
    let points = (0..count)
        .map(|_| {
            let u: f64 = rng.random();
            let r = (lo + u * (hi - lo)).powf(1.0 / nf).clamp(r_min, r_max);
            random_direction(&mut rng, n)
                .into_iter()
                .map(|c| c * r)
                .collect()
        })
        .collect();
    Ok(SampleSet {
        n,
        spec: None,
        points,
    })
}

/// A matrix with independent standard normal entries.
pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// A random orthogonal matrix (QR of a Gaussian matrix with sign correction).
pub fn random_orthogonal(rng: &mut impl Rng, n: usize) -> Matrix {
    let qr = random_matrix(rng, n, n).qr();
    let (q, r) = (qr.q(), qr.r());
    let signs = Matrix::from_diagonal(&Vector::from_fn(n, |i, _| {
        if r[(i, i)] < 0.0 {
            -1.0
        } else {
            1.0
        }
    }));
    q * signs
}

// ---------------------------------------------------------------------------
// random smooth maps

/// `u_b(x) = c_b + L_b x + x^T Q_b x / 2 + T_b[x, x, x] / 6` with symmetric
/// `Q_b` and fully symmetric `T_b`.
#[derive(Debug, Clone)]
pub struct PolynomialMap {
    n: usize,
    big_n: usize,
    constant: Vector,
    linear: Matrix,
    quadratic: Vec<Matrix>,
    cubic: Vec<Vec<f64>>,
    label: String,
}

impl PolynomialMap {
    /// Random coefficients; higher-order terms are multiplied by `curvature`.
    pub fn random(n: usize, big_n: usize, curvature: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let constant = Vector::from_fn(big_n, |_, _| rng.sample(StandardNormal));
        let linear = random_matrix(&mut rng, big_n, n);
        let quadratic = (0..big_n)
            .map(|_| {
                let m = random_matrix(&mut rng, n, n) * curvature;
                (&m + m.transpose()) * 0.5
            })
            .collect();
        let cubic = (0..big_n)
            .map(|_| {
                let raw: Vec<f64> = (0..n * n * n)
                    .map(|_| curvature * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let idx = |i: usize, j: usize, k: usize| (i * n + j) * n + k;
                let mut sym = vec![0.0; n * n * n];
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            sym[idx(i, j, k)] = (raw[idx(i, j, k)]
                                + raw[idx(i, k, j)]
                                + raw[idx(j, i, k)]
                                + raw[idx(j, k, i)]
                                + raw[idx(k, i, j)]
                                + raw[idx(k, j, i)])
                                / 6.0;
                        }
                    }
                }
                sym
            })
            .collect();
        PolynomialMap {
            n,
            big_n,
            constant,
            linear,
            quadratic,
            cubic,
            label: format!("polynomial(n={n},N={big_n},seed={seed})"),
        }
    }

    fn t(&self, b: usize, i: usize, j: usize, k: usize) -> f64 {
        self.cubic[b][(i * self.n + j) * self.n + k]
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        crate::map::check_point(self, x)
    }
}

impl MapModel for PolynomialMap {
    fn id(&self) -> String {
        self.label.clone()
    }

    fn dims(&self) -> (usize, usize) {
        (self.n, self.big_n)
    }

    fn domain(&self) -> Domain {
        Domain::Everywhere
    }

    fn value(&self, x: &[f64]) -> Result<Vector> {
        self.check(x)?;
        let xv = Vector::from_row_slice(x);
        let n = self.n;
        Ok(Vector::from_fn(self.big_n, |b, _| {
            let mut cubic = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        cubic += self.t(b, i, j, k) * x[i] * x[j] * x[k];
                    }
                }
            }
            self.constant[b]
                + (self.linear.row(b) * &xv)[0]
                + 0.5 * xv.dot(&(&self.quadratic[b] * &xv))
                + cubic / 6.0
        }))
    }

    fn gradient(&self, x: &[f64]) -> Result<Matrix> {
        self.check(x)?;
        let xv = Vector::from_row_slice(x);
        let n = self.n;
        let mut g = self.linear.clone();
        for b in 0..self.big_n {
            let qx = &self.quadratic[b] * &xv;
            for i in 0..n {
                let mut c = 0.0;
                for j in 0..n {
                    for k in 0..n {
                        c += self.t(b, i, j, k) * x[j] * x[k];
                    }
                }
                g[(b, i)] += qx[i] + 0.5 * c;
            }
        }
        Ok(g)
    }

    fn hessian(&self, x: &[f64]) -> Result<Hessian> {
        self.check(x)?;
        let n = self.n;
        Ok(Hessian::new(
            (0..self.big_n)
                .map(|b| {
                    Matrix::from_fn(n, n, |i, j| {
                        self.quadratic[b][(i, j)]
                            + (0..n).map(|k| self.t(b, i, j, k) * x[k]).sum::<f64>()
                    })
                })
                .collect(),
        ))
    }
}

// ---------------------------------------------------------------------------
// finite-difference oracle

/// The stencil `x +- h e_j` must not reach the inner edge of the domain, even
/// where the map happens to be defined on the far side of it.
fn check_stencil(map: &dyn MapModel, x: &[f64], h: f64) -> Result<()> {
    if x.len() != map.dims().0 {
        return Err(Error::dimension(format!(
            "{} expects points in R^{}, got length {}",
            map.id(),
            map.dims().0,
            x.len()
        )));
    }
    if !(h > 0.0) || map.domain().inner_distance(x) <= h {
        return Err(Error::domain(format!(
            "FD stencil of width {h:e} at |x| = {:e} leaves the domain of {}",
            norm(x),
            map.id()
        )));
    }
    Ok(())
}

/// Central differences of the value: column `j` is
/// `(u(x + h e_j) - u(x - h e_j)) / 2h`.
pub fn fd_gradient(map: &dyn MapModel, x: &[f64], h: f64) -> Result<Matrix> {
    check_stencil(map, x, h)?;
    let (n, big_n) = map.dims();
    let mut g = Matrix::zeros(big_n, n);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for j in 0..n {
        xp[j] = x[j] + h;
        xm[j] = x[j] - h;
        let d = (map.value(&xp)? - map.value(&xm)?) / (xp[j] - xm[j]);
        g.set_column(j, &d);
        xp[j] = x[j];
        xm[j] = x[j];
    }
    Ok(g)
}

/// Central differences of the analytic gradient:
/// `H_b[i][j] = (D_i u_b(x + h e_j) - D_i u_b(x - h e_j)) / 2h`.
pub fn fd_hessian(map: &dyn MapModel, x: &[f64], h: f64) -> Result<Hessian> {
    check_stencil(map, x, h)?;
    let (n, big_n) = map.dims();
    let mut out = Hessian::zeros(big_n, n);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for j in 0..n {
        xp[j] = x[j] + h;
        xm[j] = x[j] - h;
        let d = (map.gradient(&xp)? - map.gradient(&xm)?) / (xp[j] - xm[j]);
        for b in 0..big_n {
            for i in 0..n {
                out.component_mut(b)[(i, j)] = d[(b, i)];
            }
        }
        xp[j] = x[j];
        xm[j] = x[j];
    }
    Ok(out)
}

/// `max |a - b| / max(max |a|, 1)`.
pub fn relative_error(analytic: &Matrix, oracle: &Matrix) -> f64 {
    (analytic - oracle).amax() / analytic.amax().max(1.0)
}

pub fn hessian_relative_error(analytic: &Hessian, oracle: &Hessian) -> f64 {
    let scale = analytic
        .components()
        .iter()
        .map(|c| c.amax())
        .fold(0.0, f64::max)
        .max(1.0);
    analytic.max_abs_diff(oracle) / scale
}

/// FD step `h` shrunk near the inner edge of the domain so that the stencil
/// stays inside it.
pub fn scaled_step(map: &dyn MapModel, x: &[f64], h: f64) -> f64 {
    h * map.domain().inner_distance(x).min(1.0)
}

/// Relative FD disagreement of the analytic gradient and Hessian at `x`.
pub fn oracle_errors(map: &dyn MapModel, x: &[f64], tol: &Tolerances) -> Result<(f64, f64)> {
    let hg = scaled_step(map, x, tol.fd_gradient_step);
    let hh = scaled_step(map, x, tol.fd_hessian_step);
    let g = relative_error(&map.gradient(x)?, &fd_gradient(map, x, hg)?);
    let h = hessian_relative_error(&map.hessian(x)?, &fd_hessian(map, x, hh)?);
    Ok((g, h))
}

// ---------------------------------------------------------------------------
// reports

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tolerances {
    pub residual: f64,
    pub fd_gradient_rel: f64,
    pub fd_hessian_rel: f64,
    pub fd_gradient_step: f64,
    pub fd_hessian_step: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            residual: DEFAULT_RESIDUAL_TOL,
            fd_gradient_rel: FD_GRADIENT_REL_TOL,
            fd_hessian_rel: FD_HESSIAN_REL_TOL,
            fd_gradient_step: FD_GRADIENT_STEP,
            fd_hessian_step: FD_HESSIAN_STEP,
        }
    }
}

impl Tolerances {
    fn to_map(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("residual".to_string(), self.residual),
            ("fd_gradient_rel".to_string(), self.fd_gradient_rel),
            ("fd_hessian_rel".to_string(), self.fd_hessian_rel),
            ("fd_gradient_step".to_string(), self.fd_gradient_step),
            ("fd_hessian_step".to_string(), self.fd_hessian_step),
        ])
    }
}

/// Per-point record of a residual evaluation. Raw and normalised values are
/// both kept; `flags` explains why a point was excluded or failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointRecord {
    pub x: Vec<f64>,
    pub residual: f64,
    pub normalized_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tangential: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normal: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fd_gradient_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fd_hessian_error: Option<f64>,
    pub flags: Vec<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PointRecord {
    fn failed(x: &[f64], flag: &'static str, error: String) -> Self {
        PointRecord {
            x: x.to_vec(),
            residual: f64::NAN,
            normalized_residual: f64::NAN,
            tangential: None,
            normal: None,
            split_gap: None,
            fd_gradient_error: None,
            fd_hessian_error: None,
            flags: vec![flag],
            error: Some(error),
        }
    }

    pub fn excluded(&self) -> bool {
        self.flags == ["near_interface"]
    }

    pub fn failed_evaluation(&self) -> bool {
        self.error.is_some() || self.flags.iter().any(|f| *f != "near_interface")
    }

    pub fn counted(&self) -> bool {
        self.flags.is_empty()
    }
}

/// Aggregates over the counted (unflagged) points; recomputable from the
/// per-point records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregates {
    pub counted: usize,
    pub excluded: usize,
    pub failed: usize,
    pub max: f64,
    pub mean: f64,
    pub p99: f64,
    pub max_raw: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tangential: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_normal: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_split_gap: Option<f64>,
    pub max_fd_gradient_error: f64,
    pub max_fd_hessian_error: f64,
}

fn max_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    values.fold(None, |acc, v| match (acc, v) {
        (None, v) => v,
        (a, None) => a,
        (Some(a), Some(b)) => Some(a.max(b)),
    })
}

/// Nearest-rank percentile of an unsorted slice.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

impl Aggregates {
    pub fn from_points(points: &[PointRecord]) -> Self {
        let counted: Vec<&PointRecord> = points.iter().filter(|p| p.counted()).collect();
        let norm_values: Vec<f64> = counted.iter().map(|p| p.normalized_residual).collect();
        let fold_max = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0, f64::max);
        let mean = if norm_values.is_empty() {
            f64::NAN
        } else {
            norm_values.iter().sum::<f64>() / norm_values.len() as f64
        };
        Aggregates {
            counted: counted.len(),
            excluded: points.iter().filter(|p| p.excluded()).count(),
            failed: points.iter().filter(|p| p.failed_evaluation()).count(),
            max: fold_max(&mut norm_values.iter().copied()),
            mean,
            p99: percentile(&norm_values, 0.99),
            max_raw: fold_max(&mut counted.iter().map(|p| p.residual)),
            max_tangential: max_opt(counted.iter().map(|p| p.tangential)),
            max_normal: max_opt(counted.iter().map(|p| p.normal)),
            max_split_gap: max_opt(counted.iter().map(|p| p.split_gap)),
            max_fd_gradient_error: fold_max(
                &mut counted.iter().filter_map(|p| p.fd_gradient_error),
            ),
            max_fd_hessian_error: fold_max(&mut counted.iter().filter_map(|p| p.fd_hessian_error)),
        }
    }
}

/// FD agreement of one analytic evaluator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleEntry {
    pub evaluator: &'static str,
    pub provenance: Provenance,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryReport {
    pub outer_points: usize,
    pub outer_deviation: f64,
    pub tolerance: f64,
    pub inner_radius: f64,
    /// `max |u(x)|` at `|x| = inner_radius`, or `None` when the map is not
    /// defined there.
    pub inner_magnitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDistance {
    pub first: String,
    pub second: String,
    pub sup_distance: f64,
    pub common_points: usize,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub pass: bool,
    pub failures: Vec<String>,
}

impl Verdict {
    fn from_failures(failures: Vec<String>) -> Self {
        Verdict {
            pass: failures.is_empty(),
            failures,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSummary {
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<SampleSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_radius: Option<f64>,
}

impl SampleSummary {
    fn of(samples: &SampleSet) -> Self {
        let range = samples.radius_range();
        SampleSummary {
            count: samples.len(),
            spec: samples.spec.clone(),
            min_radius: range.map(|r| r.0),
            max_radius: range.map(|r| r.1),
        }
    }
}

/// Shared report schema for residual scans, inclusion scans and demos.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub map: String,
    pub operator: String,
    pub params: BTreeMap<String, Value>,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
    pub samples: SampleSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregates: Option<Aggregates>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<PointRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BoundaryReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inclusion: Option<InclusionScan>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub oracle: Vec<OracleEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<Report>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub distinctness: Vec<PairDistance>,
    pub tolerances: BTreeMap<String, f64>,
    pub verdict: Verdict,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Numerical(format!("report serialisation failed: {e}")))
    }

    /// Per-point rows. Residual reports (and demo members) give
    /// `map, x0.., residual, normalized_residual, flags`; inclusion reports give
    /// `map, x0.., member, <check values>.., flags`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let io = |e: csv::Error| Error::Numerical(format!("csv write failed: {e}"));
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(writer);
        let coords: Vec<String> = (0..self.n).map(|i| format!("x{i}")).collect();
        if let Some(scan) = &self.inclusion {
            let names: Vec<&str> = scan
                .points
                .iter()
                .find_map(|p| p.verdict.as_ref())
                .map(|v| v.checks.iter().map(|c| c.name).collect())
                .unwrap_or_default();
            let mut header = vec!["map".to_string()];
            header.extend(coords.iter().cloned());
            header.push("member".into());
            header.extend(names.iter().map(|s| s.to_string()));
            header.push("flags".into());
            w.write_record(&header).map_err(io)?;
            for p in &scan.points {
                let mut row = vec![self.map.clone()];
                row.extend(p.x.iter().map(|v| format!("{v:.16e}")));
                row.push(p.member().to_string());
                for name in &names {
                    let v = p.verdict.as_ref().and_then(|v| v.deviation(name));
                    row.push(v.map(|v| format!("{v:.16e}")).unwrap_or_default());
                }
                row.push(if p.error.is_some() {
                    "error".into()
                } else {
                    String::new()
                });
                w.write_record(&row).map_err(io)?;
            }
        } else {
            let mut header = vec!["map".to_string()];
            header.extend(coords.iter().cloned());
            header.extend(["residual", "normalized_residual", "flags"].map(String::from));
            w.write_record(&header).map_err(io)?;
            let own = std::iter::once(self);
            for report in own.chain(self.members.iter()) {
                for p in &report.points {
                    let mut row = vec![report.map.clone()];
                    row.extend(p.x.iter().map(|v| format!("{v:.16e}")));
                    row.push(format!("{:.16e}", p.residual));
                    row.push(format!("{:.16e}", p.normalized_residual));
                    row.push(p.flags.join("|"));
                    w.write_record(&row).map_err(io)?;
                }
            }
        }
        w.flush()
            .map_err(|e| Error::Numerical(format!("csv flush failed: {e}")))
    }
}

fn near_interface(map: &dyn MapModel, op: Operator, x: &[f64], du: &Matrix) -> bool {
    if map
        .interface_distance(x)
        .is_some_and(|d| d < 0.5 * INTERFACE_BAND)
    {
        return true;
    }
    if cutoff_separation(du, RANK_TOL) < SEPARATION_THRESHOLD {
        return true;
    }
    if op == Operator::QInfinity {
        if let Ok(kp) = dilation_gradient(du) {
            return cutoff_separation(&kp, RANK_TOL) < SEPARATION_THRESHOLD;
        }
    }
    false
}

fn evaluate_point(op: Operator, map: &dyn MapModel, x: &[f64], tol: &Tolerances) -> PointRecord {
    let outcome = (|| -> Result<PointRecord> {
        let du = map.gradient(x)?;
        let d2u = map.hessian(x)?;
        let value = op.evaluate(map, x)?;
        let scale = residual_scale(&du, &d2u);
        let residual = value.norm();
        let (tangential, normal, split_gap) = match op.decoupled(map, x) {
            Some(parts) => {
                let (t, n) = parts?;
                let gap = (&value - (&t + &n)).norm() / scale;
                (Some(t.norm() / scale), Some(n.norm() / scale), Some(gap))
            }
            None => (None, None, None),
        };
        let (fd_g, fd_h) = oracle_errors(map, x, tol)?;
        let mut flags = Vec::new();
        let finite = residual.is_finite()
            && scale.is_finite()
            && [tangential, normal, split_gap]
                .iter()
                .all(|v| v.is_none_or(f64::is_finite));
        if !finite {
            flags.push("non_finite");
        }
        if near_interface(map, op, x, &du) {
            flags.push("near_interface");
        }
        Ok(PointRecord {
            x: x.to_vec(),
            residual,
            normalized_residual: residual / scale,
            tangential,
            normal,
            split_gap,
            fd_gradient_error: Some(fd_g),
            fd_hessian_error: Some(fd_h),
            flags,
            error: None,
        })
    })();
    outcome.unwrap_or_else(|e| {
        let flag = match e {
            Error::Domain(_) | Error::Dimension(_) => "domain_error",
            _ => "numerical_error",
        };
        PointRecord::failed(x, flag, e.to_string())
    })
}

fn check_applicable(op: Operator, map: &dyn MapModel, samples: &SampleSet) -> Result<()> {
    let (n, big_n) = map.dims();
    if samples.n != n {
        return Err(Error::dimension(format!(
            "{} has n = {n} but the samples live in R^{}",
            map.id(),
            samples.n
        )));
    }
    match op {
        Operator::Linear { mu } if n != big_n => Err(Error::dimension(format!(
            "the linear system with mu = {mu} needs n = N"
        ))),
        Operator::QInfinity if big_n < n => Err(Error::dimension(
            "Q_inf needs N >= n for full-rank gradients",
        )),
        _ => Ok(()),
    }
}

fn oracle_entries(map: &dyn MapModel, agg: &Aggregates, tol: &Tolerances) -> Vec<OracleEntry> {
    vec![
        OracleEntry {
            evaluator: "gradient",
            provenance: map.gradient_provenance(),
            max_rel_error: agg.max_fd_gradient_error,
            tolerance: tol.fd_gradient_rel,
            passed: agg.max_fd_gradient_error <= tol.fd_gradient_rel,
        },
        OracleEntry {
            evaluator: "hessian",
            provenance: map.hessian_provenance(),
            max_rel_error: agg.max_fd_hessian_error,
            tolerance: tol.fd_hessian_rel,
            passed: agg.max_fd_hessian_error <= tol.fd_hessian_rel,
        },
    ]
}

fn operator_params(op: Operator) -> BTreeMap<String, Value> {
    let mut params = BTreeMap::new();
    if let Operator::Linear { mu } = op {
        params.insert("mu".into(), Value::from(mu));
    }
    params
}

/// Evaluates `op` on `map` at every sample. The verdict passes iff every point
/// evaluated, the largest normalised residual over non-excluded points is
/// within `tol.residual`, and the FD oracle agrees with the analytic
/// derivatives.
pub fn residual_report(
    op: Operator,
    map: &dyn MapModel,
    samples: &SampleSet,
    tol: &Tolerances,
) -> Result<Report> {
    check_applicable(op, map, samples)?;
    let points: Vec<PointRecord> = samples
        .points
        .par_iter()
        .map(|x| evaluate_point(op, map, x, tol))
        .collect();
    let agg = Aggregates::from_points(&points);
    let oracle = oracle_entries(map, &agg, tol);

    let mut failures = Vec::new();
    if agg.failed > 0 {
        let first = points
            .iter()
            .find(|p| p.failed_evaluation())
            .and_then(|p| p.error.clone())
            .unwrap_or_else(|| "non-finite residual".into());
        failures.push(format!(
            "{} point(s) failed to evaluate, e.g. {first}",
            agg.failed
        ));
    }
    if agg.counted == 0 {
        failures.push("no points were counted".into());
    } else if !(agg.max <= tol.residual) {
        failures.push(format!(
            "max normalized residual {:.3e} exceeds {:.1e}",
            agg.max, tol.residual
        ));
    }
    for e in oracle.iter().filter(|e| !e.passed) {
        failures.push(format!(
            "FD oracle disagrees with the analytic {} ({:.3e} > {:.1e})",
            e.evaluator, e.max_rel_error, e.tolerance
        ));
    }

    Ok(Report {
        map: map.id(),
        operator: op.id().into(),
        params: operator_params(op),
        n: samples.n,
        domain: Some(map.domain()),
        samples: SampleSummary::of(samples),
        aggregates: Some(agg),
        points,
        boundary: None,
        inclusion: None,
        oracle,
        members: Vec::new(),
        distinctness: Vec::new(),
        tolerances: tol.to_map(),
        verdict: Verdict::from_failures(failures),
    })
}

/// Wraps an inclusion scan in the shared report schema.
pub fn inclusion_report(map: &dyn MapModel, samples: &SampleSet, scan: InclusionScan) -> Report {
    let mut failures = Vec::new();
    if !scan.all_members() {
        failures.push(format!(
            "membership {}/{} ({} evaluation errors)",
            scan.members,
            scan.points.len(),
            scan.errors
        ));
    }
    let mut params = BTreeMap::new();
    params.insert("a".into(), Value::from(scan.set.level()));
    params.insert("set".into(), Value::from(scan.set.name()));
    if let crate::inclusion::SetSpec::K { det_mode, .. } = scan.set {
        params.insert(
            "det_mode".into(),
            serde_json::to_value(det_mode).unwrap_or(Value::Null),
        );
    }
    let tolerances = BTreeMap::from([("equality".to_string(), scan.tolerance)]);
    Report {
        map: map.id(),
        operator: "inclusion".into(),
        params,
        n: samples.n,
        domain: Some(map.domain()),
        samples: SampleSummary::of(samples),
        aggregates: None,
        points: Vec::new(),
        boundary: None,
        inclusion: Some(scan),
        oracle: Vec::new(),
        members: Vec::new(),
        distinctness: Vec::new(),
        tolerances,
        verdict: Verdict::from_failures(failures),
    }
}

/// Deterministic unit directions for boundary checks.
fn boundary_directions(n: usize, count: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    shell_directions(&mut rng, n, count)
}

/// `max |u(x) - x|` over `count` points of the unit sphere, plus `max |u(x)|` at
/// `|x| = 1e-3` as a proxy for `u(0) = 0`. Passes iff the outer deviation is
/// within `tol` and the map is defined at the inner proxy radius.
pub fn boundary_check(map: &dyn MapModel, count: usize, tol: f64) -> BoundaryReport {
    let (n, _) = map.dims();
    let dirs = boundary_directions(n, count.max(1));
    let outer_deviation = dirs
        .iter()
        .map(|d| match map.value(d) {
            Ok(u) => (u - Vector::from_row_slice(d)).norm(),
            Err(_) => f64::INFINITY,
        })
        .fold(0.0, f64::max);
    let inner = INNER_PROXY_RADIUS;
    let mut note = None;
    let inner_magnitude = if map
        .domain()
        .contains(&dirs[0].iter().map(|c| c * inner).collect::<Vec<_>>())
    {
        dirs.iter()
            .map(|d| {
                let x: Vec<f64> = d.iter().map(|c| c * inner).collect();
                map.value(&x).map(|u| u.norm())
            })
            .try_fold(0.0, |acc: f64, v| v.map(|v| acc.max(v)))
            .ok()
    } else {
        None
    };
    if inner_magnitude.is_none() {
        note = Some(format!(
            "map is undefined at |x| = {inner:e}; its domain starts at |x| = {:.6}",
            map.domain().inner_radius()
        ));
    }
    let outer_ok = outer_deviation <= tol;
    if !outer_ok {
        let msg = format!("outer deviation {outer_deviation:.3e} exceeds {tol:.1e}");
        note = Some(match note {
            Some(n) => format!("{n}; {msg}"),
            None => msg,
        });
    }
    BoundaryReport {
        outer_points: dirs.len(),
        outer_deviation,
        tolerance: tol,
        inner_radius: inner,
        inner_magnitude,
        note,
        passed: outer_ok && inner_magnitude.is_some(),
    }
}

/// `max |u(x) - v(x)|` over the samples where both maps are defined.
pub fn sup_distance(u: &dyn MapModel, v: &dyn MapModel, samples: &SampleSet) -> (f64, usize) {
    let diffs: Vec<Option<f64>> = samples
        .points
        .par_iter()
        .map(|x| match (u.value(x), v.value(x)) {
            (Ok(a), Ok(b)) => Some((a - b).norm()),
            _ => None,
        })
        .collect();
    let common = diffs.iter().flatten().count();
    (diffs.iter().flatten().copied().fold(0.0, f64::max), common)
}

/// A family of Dirichlet problems with several known solutions.
#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    /// `Delta_inf u = 0` with eikonal solutions, one per `a`.
    InfinityLaplacian { a: Vec<f64> },
    /// `Q_inf u = 0` with power-map solutions, one per `gamma`.
    QInfinity { gamma: Vec<f64> },
    /// The linear system for one `mu`, solved by `u^mu` and the identity.
    Linear { mu: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoOptions {
    pub tolerances: Tolerances,
    pub boundary_tol: f64,
    pub boundary_points: usize,
    pub distinctness: f64,
}

impl Default for DemoOptions {
    fn default() -> Self {
        DemoOptions {
            tolerances: Tolerances::default(),
            boundary_tol: DEFAULT_BOUNDARY_TOL,
            boundary_points: 360,
            distinctness: DEFAULT_DISTINCTNESS,
        }
    }
}

fn require_distinct(name: &str, values: &[f64]) -> Result<()> {
    if values.len() < 2 {
        return Err(Error::domain(format!(
            "a nonuniqueness demo needs at least two values of {name}, got {}",
            values.len()
        )));
    }
    for (i, a) in values.iter().enumerate() {
        if values[..i].contains(a) {
            return Err(Error::domain(format!("{name} = {a} is listed twice")));
        }
    }
    Ok(())
}

type Member = (Box<dyn MapModel>, Operator);

fn build_members(
    problem: &Problem,
    n: usize,
) -> Result<(Vec<Member>, Operator, BTreeMap<String, Value>)> {
    let mut params = BTreeMap::new();
    match problem {
        Problem::InfinityLaplacian { a } => {
            require_distinct("a", a)?;
            params.insert("a".into(), Value::from(a.clone()));
            let op = Operator::InfinityLaplacian;
            let members = a
                .iter()
                .map(|&a| Ok((Box::new(eikonal_map(a, n)?) as Box<dyn MapModel>, op)))
                .collect::<Result<_>>()?;
            Ok((members, op, params))
        }
        Problem::QInfinity { gamma } => {
            require_distinct("gamma", gamma)?;
            params.insert("gamma".into(), Value::from(gamma.clone()));
            let op = Operator::QInfinity;
            let members = gamma
                .iter()
                .map(|&g| Ok((Box::new(power_map(g, n)?) as Box<dyn MapModel>, op)))
                .collect::<Result<_>>()?;
            Ok((members, op, params))
        }
        Problem::Linear { mu } => {
            params.insert("mu".into(), Value::from(*mu));
            params.insert("gamma".into(), Value::from(mu_exponent(*mu, n)?));
            let op = Operator::Linear { mu: *mu };
            let members: Vec<Member> = vec![
                (Box::new(mu_map(*mu, n)?), op),
                (Box::new(identity_map(n)), op),
            ];
            Ok((members, op, params))
        }
    }
}

/// Builds every solution of `problem`, checks each against the residual and
/// boundary tests, and certifies pairwise distinctness on the samples.
pub fn nonuniqueness_demo(
    problem: &Problem,
    n: usize,
    samples: &SampleSet,
    opts: &DemoOptions,
) -> Result<Report> {
    let (members, op, params) = build_members(problem, n)?;
    let mut reports = Vec::with_capacity(members.len());
    let mut failures = Vec::new();
    for (map, op) in &members {
        let mut r = residual_report(*op, map.as_ref(), samples, &opts.tolerances)?;
        let b = boundary_check(map.as_ref(), opts.boundary_points, opts.boundary_tol);
        if !b.passed {
            r.verdict.pass = false;
            r.verdict.failures.push(format!(
                "boundary check failed: {}",
                b.note.clone().unwrap_or_default()
            ));
        }
        r.boundary = Some(b);
        if !r.verdict.pass {
            failures.push(format!("{}: {}", r.map, r.verdict.failures.join("; ")));
        }
        reports.push(r);
    }
    let mut pairs = Vec::new();
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            let (d, common) = sup_distance(members[i].0.as_ref(), members[j].0.as_ref(), samples);
            let passed = common > 0 && d >= opts.distinctness;
            if !passed {
                failures.push(format!(
                    "{} and {} are not certified distinct (sup distance {d:.3e} over {common} points)",
                    reports[i].map, reports[j].map
                ));
            }
            pairs.push(PairDistance {
                first: reports[i].map.clone(),
                second: reports[j].map.clone(),
                sup_distance: d,
                common_points: common,
                threshold: opts.distinctness,
                passed,
            });
        }
    }
    let mut tolerances = opts.tolerances.to_map();
    tolerances.insert("boundary".into(), opts.boundary_tol);
    tolerances.insert("distinctness".into(), opts.distinctness);
    Ok(Report {
        map: format!(
            "family[{}]",
            reports
                .iter()
                .map(|r| r.map.as_str())
                .collect::<Vec<_>>()
                .join(",")
        ),
        operator: op.id().into(),
        params,
        n,
        domain: None,
        samples: SampleSummary::of(samples),
        aggregates: None,
        points: Vec::new(),
        boundary: None,
        inclusion: None,
        oracle: Vec::new(),
        members: reports,
        distinctness: pairs,
        tolerances,
        verdict: Verdict::from_failures(failures),
    })
}

// ---------------------------------------------------------------------------
// convex hull property

/// Andrew's monotone chain; returns the hull in counter-clockwise order.
pub fn convex_hull_2d(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Whether `p` lies in the counter-clockwise convex polygon `hull`, allowing
/// a slack of `eps` (in units of edge-length times distance).
pub fn in_convex_polygon(hull: &[[f64; 2]], p: [f64; 2], eps: f64) -> bool {
    if hull.len() < 3 {
        return false;
    }
    (0..hull.len()).all(|k| {
        let a = hull[k];
        let b = hull[(k + 1) % hull.len()];
        (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= -eps
    })
}

/// Sampled check of `u(A) in co(u(dA))` for the annulus `A = {r1 < |x| < r2}`.
///
/// For `n = 2` the boundary images of both circles are hulled exactly and
/// every interior image is tested against that polygon. For `n >= 3` only
/// radial maps are supported, through the sufficient condition that `|u|`
/// increases along rays (then `u(A)` lies in the ball bounded by the image of
/// the outer sphere). Evaluation failures make the check fail.
pub fn convex_hull_check(map: &dyn MapModel, r1: f64, r2: f64, resolution: usize) -> bool {
    let (n, big_n) = map.dims();
    if !(r1 > 0.0 && r1 < r2 && r2 < 1.0) || resolution < 8 {
        return false;
    }
    let interior_radii: Vec<f64> = (1..resolution / 4)
        .map(|k| r1 + (r2 - r1) * k as f64 / (resolution / 4) as f64)
        .collect();
    if n == 2 && big_n == 2 {
        let dirs = boundary_directions(2, resolution);
        let image = |r: f64, d: &[f64]| -> Option<[f64; 2]> {
            map.value(&[r * d[0], r * d[1]]).ok().map(|u| [u[0], u[1]])
        };
        let mut boundary = Vec::new();
        for r in [r1, r2] {
            for d in &dirs {
                match image(r, d) {
                    Some(p) => boundary.push(p),
                    None => return false,
                }
            }
        }
        let hull = convex_hull_2d(&boundary);
        let scale = boundary
            .iter()
            .map(|p| p[0].hypot(p[1]))
            .fold(0.0, f64::max)
            .max(1e-300);
        // interior images are compared with the inscribed polygon, so allow
        // for the chord sag of the sampled outer circle
        let sag = scale * (1.0 - (std::f64::consts::PI / resolution as f64).cos());
        let eps = 4.0 * sag * scale;
        let inner_dirs = {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            shell_directions(&mut rng, 2, resolution / 2)
        };
        interior_radii.iter().all(|&r| {
            inner_dirs
                .iter()
                .all(|d| image(r, d).is_some_and(|p| in_convex_polygon(&hull, p, eps)))
        })
    } else {
        if !map.is_radial() {
            return false;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rays: Vec<Vec<f64>> = (0..resolution)
            .map(|_| random_direction(&mut rng, n))
            .collect();
        let mut radii = vec![r1];
        radii.extend(interior_radii);
        radii.push(r2);
        rays.iter().all(|d| {
            let mags: Option<Vec<f64>> = radii
                .iter()
                .map(|&r| {
                    let x: Vec<f64> = d.iter().map(|c| c * r).collect();
                    map.value(&x).ok().map(|u| u.norm())
                })
                .collect();
            mags.is_some_and(|m| m.windows(2).all(|w| w[1] > w[0]))
        })
    }
}

// ---------------------------------------------------------------------------
// closed forms for the linear system

/// `-(2 gamma (2 + gamma) / (n (1 + gamma)^{2/n})) |x|^{-gamma} (I - mu [x]^T)`,
/// the dilation gradient along `u^mu`.
pub fn mu_dilation_gradient(mu: f64, x: &[f64]) -> Result<Matrix> {
    let n = x.len();
    let g = mu_exponent(mu, n)?;
    let nf = n as f64;
    let c = -2.0 * g * (2.0 + g) / (nf * (1.0 + g).powf(2.0 / nf)) * norm(x).powf(-g);
    Ok(crate::operators::linear_factor(mu, x)? * c)
}

/// `c(x) = 4 gamma^2 (2 + gamma)^2 |x|^{-2 gamma} / (n^2 (1 + gamma)^{4/n})`.
pub fn proportionality_constant(mu: f64, x: &[f64]) -> Result<f64> {
    let n = x.len();
    let g = mu_exponent(mu, n)?;
    let nf = n as f64;
    Ok(4.0 * g * g * (2.0 + g).powi(2) * norm(x).powf(-2.0 * g)
        / (nf * nf * (1.0 + g).powf(4.0 / nf)))
}

/// Largest entrywise relative gap between `K_P (x) K_P` (computed from the
/// analytic gradient of `u^mu`) and `c(x) A(x)`; entries where both vanish
/// count as zero.
pub fn proportionality_error(mu: f64, x: &[f64]) -> Result<f64> {
    let n = x.len();
    let u = mu_map(mu, n)?;
    let kp = dilation_gradient(&u.gradient(x)?)?;
    let lhs = crate::tensor::FourTensor::outer(&kp, &kp);
    let a = crate::operators::coefficient_tensor(mu, x)?;
    let c = proportionality_constant(mu, x)?;
    let scale = lhs.max_abs().max((c * a.max_abs()).abs());
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(lhs
        .as_slice()
        .iter()
        .zip(a.as_slice())
        .map(|(l, r)| (l - c * r).abs() / scale)
        .fold(0.0, f64::max))
}

/// `max |(I + gamma [x]^T)(I - gamma/(gamma+1) [x]^T) - I|`.
pub fn rank_one_inverse_error(gamma: f64, x: &[f64]) -> Result<f64> {
    let n = x.len();
    let m = Matrix::identity(n, n) + crate::tensor::radial_tangent(x)? * gamma;
    Ok((m * rank_one_inverse(gamma, x)? - Matrix::identity(n, n)).amax())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solutions::trig_map;

    #[test]
    fn shells_have_the_requested_size_and_radii() {
        let s = sample_punctured_ball(2, 10, 36, 0.1, 0.9, 7).unwrap();
        assert_eq!(s.len(), 360);
        let (lo, hi) = s.radius_range().unwrap();
        assert!(lo >= 0.1 - 1e-15 && hi <= 0.9 + 1e-15);
        assert_eq!(s, sample_punctured_ball(2, 10, 36, 0.1, 0.9, 7).unwrap());
        assert_ne!(
            s.points,
            sample_punctured_ball(2, 10, 36, 0.1, 0.9, 8)
                .unwrap()
                .points
        );
    }

    #[test]
    fn invalid_radii_are_rejected() {
        for (lo, hi) in [(0.0, 0.5), (0.5, 0.4), (0.1, 1.0), (-0.1, 0.5)] {
            assert!(matches!(
                sample_punctured_ball(2, 2, 2, lo, hi, 0),
                Err(Error::Domain(_))
            ));
        }
    }

    #[test]
    fn fd_gradient_of_identity() {
        let id = identity_map(3);
        let g = fd_gradient(&id, &[0.1, 0.2, 0.3], FD_GRADIENT_STEP).unwrap();
        assert!((g - Matrix::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn fd_leaving_the_domain_is_an_error() {
        let p = power_map(1.0, 2).unwrap();
        assert!(fd_gradient(&p, &[1e-6, 0.0], 1e-5).is_err());
    }

    #[test]
    fn polynomial_map_derivatives_match_fd() {
        let m = PolynomialMap::random(3, 4, 0.7, 11);
        let x = [0.3, -0.2, 0.5];
        let g = relative_error(
            &m.gradient(&x).unwrap(),
            &fd_gradient(&m, &x, 1e-5).unwrap(),
        );
        let h = hessian_relative_error(&m.hessian(&x).unwrap(), &fd_hessian(&m, &x, 1e-4).unwrap());
        assert!(g < 1e-8 && h < 1e-7, "{g} {h}");
        assert!(m.hessian(&x).unwrap().max_asymmetry() < 1e-14);
    }

    #[test]
    fn residual_report_for_identity_under_linear_system() {
        let s = sample_punctured_ball(3, 4, 20, 0.1, 0.9, 1).unwrap();
        let r = residual_report(
            Operator::Linear { mu: 2.0 },
            &identity_map(3),
            &s,
            &Tolerances::default(),
        )
        .unwrap();
        assert!(r.verdict.pass);
        assert_eq!(r.aggregates.as_ref().unwrap().max_raw, 0.0);
    }

    #[test]
    fn trig_diagonal_is_excluded_not_failed() {
        let pts = vec![vec![0.1, 0.1], vec![0.1, 0.2]];
        let s = SampleSet::from_points(2, pts).unwrap();
        let r = residual_report(
            Operator::InfinityLaplacian,
            &trig_map(),
            &s,
            &Tolerances::default(),
        )
        .unwrap();
        assert!(r.points[0].excluded());
        assert!(r.points[1].counted());
        let agg = r.aggregates.unwrap();
        assert_eq!((agg.counted, agg.excluded, agg.failed), (1, 1, 0));
    }

    #[test]
    fn boundary_of_power_map() {
        let b = boundary_check(&power_map(1.0, 2).unwrap(), 64, 1e-12);
        assert!(b.passed);
        assert!((b.inner_magnitude.unwrap() - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn hull_of_square_and_membership() {
        let hull = convex_hull_2d(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]]);
        assert_eq!(hull.len(), 4);
        assert!(in_convex_polygon(&hull, [0.5, 0.5], 0.0));
        assert!(!in_convex_polygon(&hull, [1.5, 0.5], 0.0));
    }

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.99), 99.0);
        assert_eq!(percentile(&v, 1.0), 100.0);
    }

    #[test]
    fn rank_one_identity_holds() {
        assert!(rank_one_inverse_error(-0.5, &[0.3, 0.4, 0.1]).unwrap() < 1e-15);
    }
}
