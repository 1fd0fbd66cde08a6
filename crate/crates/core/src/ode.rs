//! The radial eikonal profile: the terminal-value problem
//!
//! ```text
//! g'(t) = (sqrt(a e^{-2g} - (n-1)) - 1) / (2t),   g(1) = 0,   a > n,
//! ```
//!
//! integrated backward from `t = 1`. In `tau = ln t` the equation is autonomous,
//! `dg/dtau = (sqrt(a e^{-2g} - (n-1)) - 1) / 2`, and that is the form the
//! Dormand-Prince 5(4) stepper works with.
//!
//! The solution reaches `g = -inf` at a finite `t* > 0` (near `g -> -inf` the
//! right-hand side grows like `e^{-g}`). The integrator detects this and either
//! reports it as an error ([`solve_profile`]) or returns the profile on its
//! maximal interval ([`solve_profile_maximal`]).

use std::io::Write;

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_T_MIN: f64 = 1e-6;
/// Below this value of `g` the profile is treated as having blown up. Past it
/// the steps in `tau` shrink like `e^g` and the grid loses resolution, while
/// `e^g < 1e-5` already makes the map value negligible.
pub const BLOWUP_FLOOR: f64 = -12.0;
/// `g(t_lo)` below this certifies the approach to `-inf`.
pub const CERTIFY_THRESHOLD: f64 = -5.0;

const MAX_STEPS: usize = 1_000_000;
const MAX_STEP: f64 = 0.05;

/// Upper edge of the admissible strip: `ln sqrt(a/n)`.
pub fn admissible_bound(a: f64, n: usize) -> f64 {
    0.5 * (a / n as f64).ln()
}

fn check_params(a: f64, n: usize) -> Result<()> {
    if n < 1 {
        return Err(Error::domain("dimension n must be positive"));
    }
    if !(a > n as f64) || !a.is_finite() {
        return Err(Error::domain(format!(
            "profile needs a > n, got a = {a}, n = {n}"
        )));
    }
    Ok(())
}

fn radicand(y: f64, a: f64, n: usize) -> f64 {
    a * (-2.0 * y).exp() - (n as f64 - 1.0)
}

/// `F(t, y) = (sqrt(a e^{-2y} - (n-1)) - 1) / (2t)`, defined for `t > 0` and
/// `y < ln sqrt(a/n)`.
pub fn rhs(t: f64, y: f64, a: f64, n: usize) -> Result<f64> {
    check_params(a, n)?;
    if !(t > 0.0) {
        return Err(Error::domain(format!("rhs needs t > 0, got {t}")));
    }
    if !(y < admissible_bound(a, n)) {
        return Err(Error::domain(format!(
            "y = {y} is outside the admissible strip y < {}",
            admissible_bound(a, n)
        )));
    }
    Ok((radicand(y, a, n).sqrt() - 1.0) / (2.0 * t))
}

/// `g'' = -(g'/t) (1 + a e^{-2g} / (2 sqrt(a e^{-2g} - (n-1))))`.
pub fn second_derivative(t: f64, g: f64, gprime: f64, a: f64, n: usize) -> Result<f64> {
    check_params(a, n)?;
    if !(t > 0.0) {
        return Err(Error::domain(format!(
            "second derivative needs t > 0, got {t}"
        )));
    }
    if !(g < admissible_bound(a, n)) {
        return Err(Error::domain(format!(
            "g = {g} is outside the admissible strip"
        )));
    }
    let e = a * (-2.0 * g).exp();
    let root = radicand(g, a, n).sqrt();
    Ok(-(gprime / t) * (1.0 + e / (2.0 * root)))
}

/// `dg/dtau` as a function of `g`; NaN outside the admissible strip.
fn log_rhs(g: f64, a: f64, n: usize) -> f64 {
    if g >= admissible_bound(a, n) {
        return f64::NAN;
    }
    0.5 * (radicand(g, a, n).sqrt() - 1.0)
}

/// `d^2 g / dtau^2 = G'(g) G(g)`.
fn log_rhs_prime(g: f64, a: f64, n: usize) -> f64 {
    let e = a * (-2.0 * g).exp();
    -0.5 * e / radicand(g, a, n).sqrt()
}

/// The solved profile on a grid `t_lo = t_0 < ... < t_k = 1`, stored in
/// `tau = ln t` with `(g, dg/dtau, d^2g/dtau^2)` at every node. Dense output is
/// a quintic Hermite interpolant in `tau`.
#[derive(Debug, Clone)]
pub struct ProfileSolution {
    a: f64,
    n: usize,
    tol: f64,
    t_min: f64,
    tau: Vec<f64>,
    g: Vec<f64>,
    g_tau: Vec<f64>,
    g_tautau: Vec<f64>,
    singularity: Option<f64>,
    rejected: usize,
}

/// A grid row in `t` variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRow {
    pub t: f64,
    pub g: f64,
    pub gprime: f64,
    pub gsecond: f64,
}

impl ProfileSolution {
    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn requested_t_min(&self) -> f64 {
        self.t_min
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn rejected_steps(&self) -> usize {
        self.rejected
    }

    /// Smallest `t` on the grid.
    pub fn t_lo(&self) -> f64 {
        self.tau[0].exp()
    }

    /// Estimated blow-up point, if the profile blows up before `t_min`.
    ///
    /// With `w = e^g` the equation reads `dw/dtau = (sqrt(a - (n-1) w^2) - w) / 2`,
    /// which is regular at `w = 0`, so the last grid point is extrapolated
    /// linearly to `w = 0`.
    pub fn singularity(&self) -> Option<f64> {
        self.singularity
    }

    pub fn t_grid(&self) -> Vec<f64> {
        self.tau.iter().map(|s| s.exp()).collect()
    }

    pub fn g_grid(&self) -> &[f64] {
        &self.g
    }

    pub fn max_g(&self) -> f64 {
        self.g.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn rows(&self) -> Vec<ProfileRow> {
        (0..self.len())
            .map(|k| {
                let t = self.tau[k].exp();
                let gprime = self.g_tau[k] / t;
                ProfileRow {
                    t,
                    g: self.g[k],
                    gprime,
                    gsecond: second_derivative(t, self.g[k], gprime, self.a, self.n)
                        .unwrap_or(f64::NAN),
                }
            })
            .collect()
    }

    pub fn contains(&self, t: f64) -> bool {
        t > 0.0 && t.ln() >= self.tau[0] && t <= 1.0
    }

    fn segment(&self, tau: f64) -> Result<usize> {
        let last = self.tau.len() - 1;
        let lo = self.tau[0];
        let hi = self.tau[last];
        // allow tau(1) = 0 to be hit through rounding of ln(t)
        if !(tau >= lo - 1e-15 * lo.abs().max(1.0)) || tau > hi + 1e-15 {
            return Err(Error::domain(format!(
                "t = {:e} is outside the profile interval [{:e}, 1]",
                tau.exp(),
                lo.exp()
            )));
        }
        let k = self.tau.partition_point(|&s| s <= tau);
        Ok(k.clamp(1, last) - 1)
    }

    /// `(g, dg/dtau, d^2g/dtau^2)` from the quintic Hermite interpolant.
    fn interpolate(&self, tau: f64) -> Result<(f64, f64, f64)> {
        let k = self.segment(tau)?;
        let h = self.tau[k + 1] - self.tau[k];
        let s = ((tau - self.tau[k]) / h).clamp(0.0, 1.0);
        let q = QuinticHermite {
            y0: self.g[k],
            d0: self.g_tau[k] * h,
            dd0: self.g_tautau[k] * h * h,
            y1: self.g[k + 1],
            d1: self.g_tau[k + 1] * h,
            dd1: self.g_tautau[k + 1] * h * h,
        };
        let (v, dv, ddv) = q.eval(s);
        Ok((v, dv / h, ddv / (h * h)))
    }

    pub fn g_at(&self, t: f64) -> Result<f64> {
        Ok(self.interpolate(t.ln())?.0)
    }

    /// `g'(t)` from the interpolant.
    pub fn gprime_at(&self, t: f64) -> Result<f64> {
        Ok(self.interpolate(t.ln())?.1 / t)
    }

    /// `g''(t)` from the closed form evaluated at the interpolated `(g, g')`.
    pub fn gsecond_at(&self, t: f64) -> Result<f64> {
        let (g, g_tau, _) = self.interpolate(t.ln())?;
        second_derivative(t, g, g_tau / t, self.a, self.n)
    }

    /// `g''(t)` from the interpolant itself (for cross-checks).
    pub fn gsecond_interp_at(&self, t: f64) -> Result<f64> {
        let (_, g_tau, g_tautau) = self.interpolate(t.ln())?;
        Ok((g_tautau - g_tau) / (t * t))
    }

    /// Scale-relative ODE residual at `t`:
    /// `|t g'_interp - t F(t, g_interp)| / (1 + |t F|)`.
    pub fn residual_at(&self, t: f64) -> Result<f64> {
        let (g, g_tau, _) = self.interpolate(t.ln())?;
        let f = log_rhs(g, self.a, self.n);
        if !f.is_finite() {
            return Ok(f64::INFINITY);
        }
        Ok((g_tau - f).abs() / (1.0 + f.abs()))
    }

    /// Largest [`residual_at`](Self::residual_at) over the grid midpoints.
    pub fn max_midpoint_residual(&self) -> f64 {
        self.tau
            .windows(2)
            .map(|w| {
                self.residual_at((0.5 * (w[0] + w[1])).exp())
                    .unwrap_or(f64::INFINITY)
            })
            .fold(0.0, f64::max)
    }

    /// Writes `t,g,gprime,gsecond` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Numerical(format!("csv write failed: {e}"));
        w.write_record(["t", "g", "gprime", "gsecond"])
            .map_err(io)?;
        for row in self.rows() {
            w.write_record([
                format!("{:.16e}", row.t),
                format!("{:.16e}", row.g),
                format!("{:.16e}", row.gprime),
                format!("{:.16e}", row.gsecond),
            ])
            .map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::Numerical(format!("csv flush failed: {e}")))?;
        Ok(())
    }
}

struct QuinticHermite {
    y0: f64,
    d0: f64,
    dd0: f64,
    y1: f64,
    d1: f64,
    dd1: f64,
}

impl QuinticHermite {
    /// Value and first two derivatives in the unit variable `s`.
    fn eval(&self, s: f64) -> (f64, f64, f64) {
        let (s2, s3, s4, s5) = (s * s, s * s * s, s.powi(4), s.powi(5));
        let h0 = [
            1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5,
            -30.0 * s2 + 60.0 * s3 - 30.0 * s4,
            -60.0 * s + 180.0 * s2 - 120.0 * s3,
        ];
        let h1 = [
            s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5,
            1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4,
            -36.0 * s + 96.0 * s2 - 60.0 * s3,
        ];
        let h2 = [
            0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5),
            0.5 * (2.0 * s - 9.0 * s2 + 12.0 * s3 - 5.0 * s4),
            0.5 * (2.0 - 18.0 * s + 36.0 * s2 - 20.0 * s3),
        ];
        let h3 = [
            0.5 * (s3 - 2.0 * s4 + s5),
            0.5 * (3.0 * s2 - 8.0 * s3 + 5.0 * s4),
            0.5 * (6.0 * s - 24.0 * s2 + 20.0 * s3),
        ];
        let h4 = [
            -4.0 * s3 + 7.0 * s4 - 3.0 * s5,
            -12.0 * s2 + 28.0 * s3 - 15.0 * s4,
            -24.0 * s + 84.0 * s2 - 60.0 * s3,
        ];
        let h5 = [
            10.0 * s3 - 15.0 * s4 + 6.0 * s5,
            30.0 * s2 - 60.0 * s3 + 30.0 * s4,
            60.0 * s - 180.0 * s2 + 120.0 * s3,
        ];
        let c = [self.y0, self.d0, self.dd0, self.dd1, self.d1, self.y1];
        let basis = [h0, h1, h2, h3, h4, h5];
        let mut out = [0.0; 3];
        for (ci, b) in c.iter().zip(basis.iter()) {
            for d in 0..3 {
                out[d] += ci * b[d];
            }
        }
        (out[0], out[1], out[2])
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

enum Termination {
    Reached,
    Singular { t: f64, g: f64 },
}

fn integrate(a: f64, n: usize, t_min: f64, tol: f64) -> Result<(ProfileSolution, Termination)> {
    check_params(a, n)?;
    if !(t_min > 0.0 && t_min < 1.0) {
        return Err(Error::domain(format!(
            "t_min must lie in (0, 1), got {t_min}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::domain(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let _ = C; // autonomous system: stage times are not needed
    let f = |g: f64| log_rhs(g, a, n);
    let tau_end = t_min.ln();
    let max_dg = tol.powf(0.2).min(MAX_STEP);

    let mut tau = 0.0;
    let mut g = 0.0;
    let mut k1 = f(g);
    let mut taus = vec![tau];
    let mut gs = vec![g];
    let mut rejected = 0;
    let mut h = -1e-3;
    let mut termination = Termination::Reached;

    for _ in 0..MAX_STEPS {
        if tau <= tau_end {
            break;
        }
        if tau + h < tau_end {
            h = tau_end - tau;
        }
        // the stored grid must match the step actually taken
        h = (tau + h) - tau;
        let mut k = [0.0; 7];
        k[0] = k1;
        for s in 1..7 {
            let y = g + h * (0..s).map(|j| A[s][j] * k[j]).sum::<f64>();
            k[s] = f(y);
        }
        let g_new = g + h * (0..6).map(|j| A[6][j] * k[j]).sum::<f64>();
        let err_abs = (h * (0..7).map(|j| E[j] * k[j]).sum::<f64>()).abs();
        let scale = tol * (1.0 + g.abs().max(g_new.abs()));
        let err = if g_new.is_finite() && err_abs.is_finite() && k.iter().all(|v| v.is_finite()) {
            err_abs / scale
        } else {
            f64::INFINITY
        };

        if err <= 1.0 {
            tau = if tau + h <= tau_end { tau_end } else { tau + h };
            g = g_new;
            k1 = k[6];
            taus.push(tau);
            gs.push(g);
            if g <= BLOWUP_FLOOR {
                termination = Termination::Singular { t: tau.exp(), g };
                break;
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            // near the blow-up g_tau grows without bound; cap the change in g per step
            h = (h * factor).max(-max_dg / (1.0 + k1.abs()));
        } else {
            rejected += 1;
            let factor = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.1
            };
            h *= factor;
        }
        if h.abs() < 1e-14 * (1.0 + tau.abs()) {
            termination = Termination::Singular { t: tau.exp(), g };
            break;
        }
    }
    if tau > tau_end && matches!(termination, Termination::Reached) {
        return Err(Error::Numerical(format!(
            "profile integration exhausted {MAX_STEPS} steps at t = {:e}",
            tau.exp()
        )));
    }

    // ascending tau
    taus.reverse();
    gs.reverse();
    let g_tau: Vec<f64> = gs.iter().map(|&y| log_rhs(y, a, n)).collect();
    let g_tautau: Vec<f64> = gs
        .iter()
        .zip(&g_tau)
        .map(|(&y, &d)| log_rhs_prime(y, a, n) * d)
        .collect();
    if g_tau.iter().chain(&g_tautau).any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "non-finite derivative on the profile grid".into(),
        ));
    }
    let singularity = match termination {
        Termination::Singular { t, g } => {
            let w = g.exp();
            let rate = 0.5 * ((a - (n as f64 - 1.0) * w * w).sqrt() - w);
            Some((t.ln() - w / rate).exp())
        }
        Termination::Reached => None,
    };
    let sol = ProfileSolution {
        a,
        n,
        tol,
        t_min,
        tau: taus,
        g: gs,
        g_tau,
        g_tautau,
        singularity,
        rejected,
    };
    Ok((sol, termination))
}

/// Integrates from `t = 1` down to `t_min`. Fails with
/// [`Error::SingularityReached`] if the profile blows up first.
pub fn solve_profile(a: f64, n: usize, t_min: f64, tol: f64) -> Result<ProfileSolution> {
    let (sol, termination) = integrate(a, n, t_min, tol)?;
    match termination {
        Termination::Reached => Ok(sol),
        Termination::Singular { t, g } => Err(Error::SingularityReached {
            last_t: t,
            last_g: g,
        }),
    }
}

/// Like [`solve_profile`] but returns the profile on its maximal interval
/// `[t_lo, 1]` when the blow-up comes before `t_min`.
pub fn solve_profile_maximal(a: f64, n: usize, t_min: f64, tol: f64) -> Result<ProfileSolution> {
    Ok(integrate(a, n, t_min, tol)?.0)
}
