//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_RED` are expected to fail; the run exits non-zero
//! if any other criterion fails or if a known-red one starts passing.

use std::process::ExitCode;
use std::time::Instant;

use linfty_core::ode::{
    admissible_bound, solve_profile_maximal, ProfileSolution, CERTIFY_THRESHOLD, DEFAULT_TOL,
    DEFAULT_T_MIN,
};
use linfty_core::operators::{
    infinity_laplacian, infinity_laplacian_decoupled, q_infinity, q_infinity_decoupled,
    residual_scale,
};
use linfty_core::solutions::{eikonal_map, identity_map, mu_exponent, mu_map, power_map, trig_map};
use linfty_core::tensor::{
    ahlfors, cutoff_separation, dilation, dilation_gradient, nullspace_projection, numerical_rank,
    radial_projections, Matrix, RANK_TOL,
};
use linfty_core::verify::{
    boundary_check, fd_gradient, fd_hessian, mu_dilation_gradient, oracle_errors,
    proportionality_error, random_annulus_points, random_matrix, random_orthogonal,
    rank_one_inverse_error, relative_error, residual_report, sample_punctured_ball, sup_distance,
    PolynomialMap, SampleSet, Tolerances, SEPARATION_THRESHOLD,
};
use linfty_core::{MapModel, Operator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Eikonal maps blow up at a finite radius inside the unit ball, so samples
/// down to |x| = 1e-2 cannot all be evaluated.
const KNOWN_RED: &[u32] = &[1];

const SHELLS: usize = 10;
const PER_SHELL: usize = 36;
const R_MIN: f64 = 1e-2;
const R_MAX: f64 = 0.99;
const SEED: u64 = 42;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

/// Folds named sub-checks into one outcome; the detail lists the failing ones
/// first.
#[derive(Default)]
struct Checks {
    failed: Vec<String>,
    info: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if ok {
            self.info.push(what);
        } else {
            self.failed.push(what);
        }
    }

    fn note(&mut self, what: impl Into<String>) {
        self.info.push(what.into());
    }

    fn finish(self) -> Outcome {
        let pass = self.failed.is_empty();
        let mut parts = self.failed;
        if pass {
            parts = self.info;
        } else {
            parts.extend(self.info.into_iter().filter(|s| s.starts_with("note")));
        }
        Outcome::new(pass, parts.join("; "))
    }
}

fn ball(n: usize) -> SampleSet {
    sample_punctured_ball(n, SHELLS, PER_SHELL, R_MIN, R_MAX, SEED).unwrap()
}

// 1 ---------------------------------------------------------------------------

fn eikonal_family() -> Outcome {
    let mut c = Checks::default();
    let tol = Tolerances::default();
    for n in [2usize, 3] {
        let samples = ball(n);
        let levels = [n as f64 + 1.0, 2.0 * n as f64, 10.0];
        let maps: Vec<_> = levels.iter().map(|&a| eikonal_map(a, n).unwrap()).collect();
        for (&a, v) in levels.iter().zip(&maps) {
            let tag = format!("n={n} a={a}");
            let r_star = v.domain().inner_radius();
            let defined: Vec<&Vec<f64>> = samples
                .points
                .iter()
                .filter(|x| v.gradient(x).is_ok())
                .collect();
            let eikonal_dev = defined
                .iter()
                .map(|x| (v.gradient(x).unwrap().norm_squared() - a).abs())
                .fold(0.0, f64::max);
            c.check(
                defined.len() == samples.len(),
                format!(
                    "{tag}: defined at {}/{} samples (blow-up radius {r_star:.4})",
                    defined.len(),
                    samples.len()
                ),
            );
            c.check(
                eikonal_dev <= 1e-6,
                format!("{tag}: max ||Dv|^2 - a| = {eikonal_dev:.1e}"),
            );

            let report = residual_report(Operator::InfinityLaplacian, v, &samples, &tol).unwrap();
            let agg = report.aggregates.as_ref().unwrap();
            c.check(
                agg.failed == 0 && agg.max <= 1e-6 && agg.counted >= 360,
                format!(
                    "{tag}: residual max {:.1e} over {} points, {} failed",
                    agg.max, agg.counted, agg.failed
                ),
            );
            let b = boundary_check(v, 360, 1e-10);
            c.check(
                b.outer_deviation <= 1e-10,
                format!("{tag}: outer deviation {:.1e}", b.outer_deviation),
            );

            // what does hold: the same checks on the annulus where v exists
            let annulus =
                sample_punctured_ball(n, SHELLS, PER_SHELL, 1.02 * r_star, R_MAX, SEED).unwrap();
            let inner = residual_report(Operator::InfinityLaplacian, v, &annulus, &tol).unwrap();
            c.note(format!(
                "note {tag}: on {:.3} <= |x| <= {R_MAX} residual max {:.1e}, verdict {}",
                1.02 * r_star,
                inner.aggregates.as_ref().unwrap().max,
                if inner.verdict.pass { "pass" } else { "fail" }
            ));
        }
        for i in 0..maps.len() {
            for j in i + 1..maps.len() {
                let (d, common) = sup_distance(&maps[i], &maps[j], &samples);
                c.check(
                    d >= 1e-2 && common > 0,
                    format!(
                        "n={n}: sup|v_{} - v_{}| = {d:.3} on {common} points",
                        levels[i], levels[j]
                    ),
                );
            }
        }
    }
    c.finish()
}

// 2 ---------------------------------------------------------------------------

/// K by its definition, without the library's rank test.
fn dilation_by_definition(p: &Matrix) -> f64 {
    let n = p.ncols() as f64;
    p.norm_squared() / (p.transpose() * p).determinant().powf(1.0 / n)
}

fn power_family() -> Outcome {
    let mut c = Checks::default();
    let tol = Tolerances::default();
    for n in [2usize, 3] {
        let samples = ball(n);
        let nf = n as f64;
        for gamma in [-0.5, 0.5, 1.0, 2.0] {
            let u = power_map(gamma, n).unwrap();
            let level = (nf + gamma * gamma + 2.0 * gamma) / (1.0 + gamma).powf(2.0 / nf);
            let k_dev = samples
                .points
                .iter()
                .map(|x| (dilation_by_definition(&u.gradient(x).unwrap()) - level).abs())
                .fold(0.0, f64::max);
            let lib_dev = (u.dilation_level() - level).abs();
            let tag = format!("n={n} gamma={gamma}");
            c.check(
                k_dev <= 1e-10 && lib_dev <= 1e-12,
                format!("{tag}: |K - a| = {k_dev:.1e} (a = {level:.6})"),
            );
            let r = residual_report(Operator::QInfinity, &u, &samples, &tol).unwrap();
            let agg = r.aggregates.as_ref().unwrap();
            let (t, nn) = (agg.max_tangential.unwrap(), agg.max_normal.unwrap());
            c.check(
                r.verdict.pass && agg.max <= 1e-6 && t <= 1e-6 && nn <= 1e-6,
                format!(
                    "{tag}: Q residual {:.1e}, tangential {t:.1e}, normal {nn:.1e}",
                    agg.max
                ),
            );
            let misprint = (nf + gamma * gamma + 2.0 * gamma) / (1.0 + gamma).powf(nf / 2.0);
            if (misprint - level).abs() > 1e-12 {
                c.note(format!(
                    "note {tag}: exponent n/2 would give {misprint:.6}, off by {:.1e}",
                    (misprint - level).abs()
                ));
            }
        }
    }
    c.finish()
}

// 3 ---------------------------------------------------------------------------

fn linear_family() -> Outcome {
    let mut c = Checks::default();
    let tol = Tolerances {
        residual: 1e-8,
        ..Tolerances::default()
    };
    for n in [2usize, 3] {
        let samples = ball(n);
        let star = identity_map(n);
        for mu in [1.5, 2.0, 3.0] {
            let tag = format!("n={n} mu={mu}");
            let op = Operator::Linear { mu };
            let u = mu_map(mu, n).unwrap();
            let r = residual_report(op, &u, &samples, &tol).unwrap();
            let max = r.aggregates.as_ref().unwrap().max;
            c.check(
                r.verdict.pass && max <= 1e-8,
                format!("{tag}: u^mu residual {max:.1e}"),
            );

            let star_max = samples
                .points
                .iter()
                .map(|x| op.evaluate(&star, x).unwrap().amax())
                .fold(0.0, f64::max);
            c.check(
                star_max == 0.0,
                format!("{tag}: identity residual {star_max:e}"),
            );

            let gamma = mu_exponent(mu, n).unwrap();
            let mut prop: f64 = 0.0;
            let mut kp_gap: f64 = 0.0;
            let mut inverse: f64 = 0.0;
            for x in &samples.points {
                prop = prop.max(proportionality_error(mu, x).unwrap());
                let generic = dilation_gradient(&u.gradient(x).unwrap()).unwrap();
                kp_gap = kp_gap.max(relative_error(
                    &generic,
                    &mu_dilation_gradient(mu, x).unwrap(),
                ));
                inverse = inverse.max(rank_one_inverse_error(gamma, x).unwrap());
            }
            c.check(
                prop <= 1e-8,
                format!("{tag}: K_P(x)K_P vs cA rel {prop:.1e}"),
            );
            c.check(
                kp_gap <= 1e-8,
                format!("{tag}: K_P closed form rel {kp_gap:.1e}"),
            );
            c.check(
                inverse <= 1e-12,
                format!("{tag}: rank-one inverse {inverse:.1e}"),
            );
        }
    }
    c.finish()
}

// 4 ---------------------------------------------------------------------------

fn decoupled_forms() -> Outcome {
    let mut worst_lap: f64 = 0.0;
    let mut worst_q: f64 = 0.0;
    let mut worst_orth: f64 = 0.0;
    let mut q_points = 0;
    for k in 0..100u64 {
        let n = 2 + (k % 2) as usize;
        let big_n = n + (k / 2 % 2) as usize;
        let map = PolynomialMap::random(n, big_n, 1.0, 5000 + k);
        let x = random_annulus_points(n, 1, 0.05, 0.95, k)
            .unwrap()
            .points
            .remove(0);
        let du = map.gradient(&x).unwrap();
        let d2u = map.hessian(&x).unwrap();
        let scale = residual_scale(&du, &d2u);

        let full = infinity_laplacian(&map, &x).unwrap();
        let (t, nn) = infinity_laplacian_decoupled(&map, &x).unwrap();
        worst_lap = worst_lap.max((&full - (&t + &nn)).amax() / scale);
        worst_orth = worst_orth.max(t.dot(&nn).abs() / (scale * scale));

        let kp = dilation_gradient(&du).unwrap();
        if cutoff_separation(&du, RANK_TOL) < SEPARATION_THRESHOLD
            || cutoff_separation(&kp, RANK_TOL) < SEPARATION_THRESHOLD
        {
            continue;
        }
        q_points += 1;
        let full = q_infinity(&map, &x).unwrap();
        let (t, nn) = q_infinity_decoupled(&map, &x).unwrap();
        let q_scale = (1.0 + kp.norm_squared()) * (1.0 + d2u.norm());
        worst_q = worst_q.max((&full - (&t + &nn)).amax() / q_scale);
        worst_orth =
            worst_orth.max(t.dot(&nn).abs() / (t.norm() * nn.norm()).max(q_scale * q_scale));
    }
    let pass = worst_lap <= 1e-10 && worst_q <= 1e-9 && worst_orth <= 1e-10 && q_points >= 90;
    Outcome::new(
        pass,
        format!(
            "Delta_inf gap {worst_lap:.1e}; Q_inf gap {worst_q:.1e} on {q_points} full-rank points; orthogonality {worst_orth:.1e}"
        ),
    )
}

// 5 ---------------------------------------------------------------------------

fn oracle_suite() -> Outcome {
    let mut maps: Vec<(Box<dyn MapModel>, f64)> = Vec::new();
    for n in [2, 3] {
        for gamma in [-0.5, 0.5, 1.0, 2.0] {
            maps.push((Box::new(power_map(gamma, n).unwrap()), R_MIN));
        }
        for mu in [1.5, 2.0, 3.0] {
            maps.push((Box::new(mu_map(mu, n).unwrap()), R_MIN));
        }
        maps.push((Box::new(identity_map(n)), R_MIN));
        for a in [n as f64 + 1.0, 2.0 * n as f64, 10.0] {
            let v = eikonal_map(a, n).unwrap();
            let r = 1.02 * v.domain().inner_radius();
            maps.push((Box::new(v), r));
        }
    }
    maps.push((Box::new(trig_map()), R_MIN));
    for k in 0..4 {
        maps.push((
            Box::new(PolynomialMap::random(2 + k % 2, 2 + k, 1.0, 77 + k as u64)),
            R_MIN,
        ));
    }

    let tol = Tolerances::default();
    let (mut g_worst, mut h_worst): (f64, f64) = (0.0, 0.0);
    let mut evaluated = 0;
    for (map, r_min) in &maps {
        let n = map.dims().0;
        for x in random_annulus_points(n, 50, *r_min, R_MAX, 5)
            .unwrap()
            .points
        {
            if map.interface_distance(&x).is_some_and(|d| d < 1e-2) {
                continue;
            }
            let (g, h) = oracle_errors(map.as_ref(), &x, &tol).unwrap();
            g_worst = g_worst.max(g);
            h_worst = h_worst.max(h);
            evaluated += 1;
        }
    }

    // second order: halving h divides the error by about four
    let x = [0.31, -0.42, 0.27];
    let mut ratios = Vec::new();
    for gamma in [-0.5, 1.5] {
        let u = power_map(gamma, 3).unwrap();
        let exact = u.gradient(&x).unwrap();
        let hess = u.hessian(&x).unwrap();
        let e = |h: f64| relative_error(&exact, &fd_gradient(&u, &x, h).unwrap());
        let eh = |h: f64| hess.max_abs_diff(&fd_hessian(&u, &x, h).unwrap());
        ratios.push(e(2e-2) / e(1e-2));
        ratios.push(eh(2e-2) / eh(1e-2));
    }
    let order_ok = ratios.iter().all(|r| (3.5..=4.5).contains(r));
    let pass = g_worst <= 1e-6 && h_worst <= 1e-5 && order_ok;
    let ratios: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    Outcome::new(
        pass,
        format!(
            "{} maps, {evaluated} points: gradient rel {g_worst:.1e}, Hessian rel {h_worst:.1e}; halving ratios [{}]",
            maps.len(),
            ratios.join(", ")
        ),
    )
}

// 6 ---------------------------------------------------------------------------

/// Gaussian matrix redrawn until `sigma_min > 0.05 sigma_max`; the
/// invariance checks compare `K` values to 1e-10, which needs a bounded
/// condition number.
fn conditioned(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    loop {
        let m = random_matrix(rng, rows, cols);
        let s = m.singular_values();
        if s.min() > 0.05 * s.max() {
            return m;
        }
    }
}

fn algebra_suite() -> Outcome {
    const INSTANCES: usize = 1000;
    let eps = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut c = Checks::default();
    let mut worst = [0.0f64; 7];
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
    for _ in 0..INSTANCES {
        let n = rng.random_range(2..5usize);
        let big_n = n + rng.random_range(0..3usize);
        let p = random_matrix(&mut rng, big_n, n);
        let q = nullspace_projection(&p, RANK_TOL);
        worst[0] = worst[0].max((&q * &q - &q).amax());
        worst[0] = worst[0].max((q.transpose() * &p).amax() / p.amax().max(1.0));
        let x: Vec<f64> = random_matrix(&mut rng, n, 1).iter().copied().collect();
        let (t, perp) = radial_projections(&x).unwrap();
        worst[0] = worst[0].max((&t * &perp).amax()).max((&t * &t - &t).amax());

        let a = random_matrix(&mut rng, n, n);
        let s = ahlfors(&a).unwrap();
        worst[1] = worst[1]
            .max(s.trace().abs())
            .max((&s - s.transpose()).amax());

        let sq = conditioned(&mut rng, n, n);
        let k = dilation(&sq).finite().unwrap();
        let scale = rng.random_range(1e-3..1e3);
        let r = random_orthogonal(&mut rng, n);
        let o = random_orthogonal(&mut rng, n);
        worst[2] = worst[2].max(rel(k, dilation(&(&sq * scale)).finite().unwrap()));
        worst[3] = worst[3].max(rel(k, dilation(&(&r * &sq * &o)).finite().unwrap()));

        let tall = conditioned(&mut rng, big_n, n);
        worst[4] = worst[4].max(n as f64 - dilation(&tall).finite().unwrap());
        let kp = dilation_gradient(&tall).unwrap();
        worst[6] = worst[6].max(kp.dot(&tall).abs() / (kp.norm() * tall.norm()).max(1.0));
        worst[5] = worst[5].max(dilation_gradient(&Matrix::identity(n, n)).unwrap().amax());
    }
    let names = [
        "projections",
        "Ahlfors",
        "K scale",
        "K rotation",
        "n - K",
        "K_P(I)",
        "K_P(P):P",
    ];
    for (name, w) in names.iter().zip(worst) {
        c.check(w <= eps, format!("{name} {w:.1e}"));
    }
    let mut out = c.finish();
    out.detail = format!("{INSTANCES} instances: {}", out.detail);
    out
}

// 7 ---------------------------------------------------------------------------

/// `ln t(g)` by Gauss-Legendre quadrature of `2 dw / (sqrt(a - (n-1) w^2) - w)`
/// over `[e^g, 1]`.
fn log_t_of_g(g: f64, a: f64, n: usize) -> f64 {
    const X: [f64; 3] = [0.0, -0.774_596_669_241_483_4, 0.774_596_669_241_483_4];
    const W: [f64; 3] = [8.0 / 9.0, 5.0 / 9.0, 5.0 / 9.0];
    let nm1 = n as f64 - 1.0;
    let f = |w: f64| 2.0 / ((a - nm1 * w * w).sqrt() - w);
    let (lo, panels) = (g.exp(), 2000);
    let h = (1.0 - lo) / panels as f64;
    let sum: f64 = (0..panels)
        .map(|k| {
            let mid = lo + (k as f64 + 0.5) * h;
            X.iter()
                .zip(W)
                .map(|(x, w)| w * f(mid + 0.5 * h * x))
                .sum::<f64>()
                * 0.5
                * h
        })
        .sum();
    -sum
}

fn ode_suite() -> Outcome {
    let mut c = Checks::default();
    let solve =
        |a, n, tol| -> ProfileSolution { solve_profile_maximal(a, n, DEFAULT_T_MIN, tol).unwrap() };
    for (a, n) in [
        (3.0, 2usize),
        (4.0, 2),
        (10.0, 2),
        (4.0, 3),
        (6.0, 3),
        (10.0, 3),
    ] {
        let tag = format!("a={a} n={n}");
        let sol = solve(a, n, DEFAULT_TOL);
        c.check(sol.g_at(1.0).unwrap() == 0.0, format!("{tag}: g(1) = 0"));
        let rows = sol.rows();
        let monotone = rows.iter().all(|r| r.gprime > 0.0 && r.gsecond < 0.0);
        c.check(
            monotone,
            format!("{tag}: g' > 0, g'' < 0 on {} nodes", rows.len()),
        );
        c.check(
            sol.max_g() < admissible_bound(a, n),
            format!("{tag}: strip guard"),
        );
        for tol in [1e-8, DEFAULT_TOL, 1e-12] {
            let r = solve(a, n, tol).max_midpoint_residual();
            c.check(
                r <= 10.0 * tol,
                format!("{tag} tol={tol:e}: midpoint residual {r:.1e}"),
            );
        }
        for tol in [1e-8, DEFAULT_TOL] {
            let coarse = solve(a, n, tol);
            let fine = solve(a, n, tol / 10.0);
            let drift = coarse
                .t_grid()
                .iter()
                .zip(coarse.g_grid())
                .filter(|(t, g)| **g >= CERTIFY_THRESHOLD && fine.contains(**t))
                .map(|(t, g)| (fine.g_at(*t).unwrap() - g).abs())
                .fold(0.0, f64::max);
            c.check(
                drift <= 10.0 * tol && coarse.len() != fine.len(),
                format!("{tag} tol={tol:e}: tol/10 changes g by {drift:.1e}"),
            );
        }
        let t_star = log_t_of_g(f64::NEG_INFINITY, a, n).exp();
        let got = sol.singularity().unwrap_or(f64::NAN);
        c.check(
            (got - t_star).abs() <= 1e-8 * t_star,
            format!("{tag}: blow-up at t = {got:.10} (quadrature {t_star:.10})"),
        );
    }
    c.finish()
}

// 8 ---------------------------------------------------------------------------

fn trig_interface() -> Outcome {
    let u = trig_map();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut diag_ok = true;
    for _ in 0..100 {
        let s: f64 = rng.random_range(-0.7..0.7);
        if s.abs() < 1e-3 {
            continue;
        }
        diag_ok &= numerical_rank(&u.gradient(&[s, s]).unwrap(), RANK_TOL) == 1;
    }
    let mut off_ok = true;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    while count < 100 {
        let x: [f64; 2] = [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)];
        if (x[0] * x[0] + x[1] * x[1]).sqrt() >= 0.3 || (x[0] - x[1]).abs() < 1e-2 {
            continue;
        }
        off_ok &= numerical_rank(&u.gradient(&x).unwrap(), RANK_TOL) == 2;
        worst = worst.max(infinity_laplacian(&u, &x).unwrap().norm());
        count += 1;
    }
    Outcome::new(
        diag_ok && off_ok && worst <= 1e-8,
        format!("rank 1 on diagonal: {diag_ok}; rank 2 off it: {off_ok}; max |Delta_inf u| {worst:.1e} at {count} points"),
    )
}

// 9 ---------------------------------------------------------------------------

fn negative_control() -> Outcome {
    let u = power_map(1.0, 2).unwrap();
    let r = residual_report(
        Operator::InfinityLaplacian,
        &u,
        &ball(2),
        &Tolerances::default(),
    )
    .unwrap();
    let max = r.aggregates.as_ref().unwrap().max;
    Outcome::new(
        max > 1e-2 && !r.verdict.pass,
        format!("power map gamma=1 Delta_inf residual max {max:.3} (must exceed 1e-2), verdict fails: {}", !r.verdict.pass),
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (
            1,
            "eikonal family solves Delta_inf on the punctured ball",
            eikonal_family,
        ),
        (2, "power maps: K level and Q_inf residual", power_family),
        (
            3,
            "linear system: u^mu, identity, proportionality",
            linear_family,
        ),
        (4, "decoupled vs full operators", decoupled_forms),
        (5, "finite-difference oracle suite", oracle_suite),
        (6, "algebra suite", algebra_suite),
        (7, "ODE suite", ode_suite),
        (8, "trig-map rank interface", trig_interface),
        (9, "negative control", negative_control),
    ];
    let mut unexpected = 0;
    for (id, title, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let known_red = KNOWN_RED.contains(&id);
        let status = if outcome.pass { "PASS" } else { "FAIL" };
        let tag = match (known_red, outcome.pass) {
            (true, false) => " (known)",
            (true, true) => " (known-red criterion now passes)",
            _ => "",
        };
        println!(
            "{status} [{id}] {title}{tag} ({secs:.2}s): {}",
            outcome.detail
        );
        if outcome.pass == known_red {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        println!("{unexpected} unexpected outcome(s)");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
