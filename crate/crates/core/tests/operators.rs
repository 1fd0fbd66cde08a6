use linfty_core::hamiltonian::{DilationHamiltonian, Euclidean, FdHamiltonian};
use linfty_core::operators::{
    aronsson_system, infinity_laplacian, infinity_laplacian_decoupled, q_infinity,
    q_infinity_decoupled, residual_scale,
};
use linfty_core::solutions::{power_map, trig_map};
use linfty_core::tensor::{
    cutoff_separation, dilation, dilation_gradient, Matrix, Vector, RANK_TOL,
};
use linfty_core::verify::{random_annulus_points, PolynomialMap, SEPARATION_THRESHOLD};
use linfty_core::{MapModel, Operator};

/// 100 (map, point) pairs: random cubic maps `R^n -> R^N` with `N >= n`.
fn random_cases() -> Vec<(PolynomialMap, Vec<f64>)> {
    (0..100u64)
        .map(|k| {
            let n = 2 + (k % 2) as usize;
            let big_n = n + (k / 2 % 2) as usize;
            let map = PolynomialMap::random(n, big_n, 1.0, 1000 + k);
            let x = random_annulus_points(n, 1, 0.05, 0.95, k)
                .unwrap()
                .points
                .remove(0);
            (map, x)
        })
        .collect()
}

fn well_separated(p: &Matrix) -> bool {
    cutoff_separation(p, RANK_TOL) >= SEPARATION_THRESHOLD
}

fn cosine(a: &Vector, b: &Vector) -> f64 {
    let d = a.norm() * b.norm();
    if d == 0.0 {
        0.0
    } else {
        a.dot(b).abs() / d
    }
}

#[test]
fn infinity_laplacian_full_and_decoupled_agree() {
    for (map, x) in random_cases() {
        let full = infinity_laplacian(&map, &x).unwrap();
        let (t, n) = infinity_laplacian_decoupled(&map, &x).unwrap();
        let scale = residual_scale(&map.gradient(&x).unwrap(), &map.hessian(&x).unwrap());
        let gap = (&full - (&t + &n)).amax() / scale;
        assert!(gap <= 1e-10, "{} at {x:?}: {gap:e}", map.id());
        assert!(
            t.dot(&n).abs() <= 1e-10 * scale * scale,
            "{} at {x:?}",
            map.id()
        );
    }
}

#[test]
fn q_infinity_full_and_decoupled_agree() {
    let mut checked = 0;
    for (map, x) in random_cases() {
        let du = map.gradient(&x).unwrap();
        if !well_separated(&du) || !well_separated(&dilation_gradient(&du).unwrap()) {
            continue;
        }
        let full = q_infinity(&map, &x).unwrap();
        let (t, n) = q_infinity_decoupled(&map, &x).unwrap();
        // K_P grows with K(Du), so measure against the size of the coefficient
        let kp = dilation_gradient(&du).unwrap();
        let scale = (1.0 + kp.norm_squared()) * (1.0 + map.hessian(&x).unwrap().norm());
        let gap = (&full - (&t + &n)).amax() / scale;
        assert!(gap <= 1e-9, "{} at {x:?}: {gap:e}", map.id());
        assert!(
            cosine(&t, &n) <= 1e-10,
            "{} at {x:?}: cos {}",
            map.id(),
            cosine(&t, &n)
        );
        checked += 1;
    }
    assert!(checked >= 90, "only {checked} full-rank points");
}

#[test]
fn aronsson_of_euclidean_is_a_weighted_infinity_laplacian() {
    // H = |P|^2: A_inf = 4 (Du (x) Du) : D^2u + 2 |Du|^2 [Du]^perp Lap u
    for (map, x) in random_cases().into_iter().take(30) {
        let (t, n) = infinity_laplacian_decoupled(&map, &x).unwrap();
        let expected = t * 4.0 + n * 2.0;
        let got = aronsson_system(&Euclidean, &map, &x).unwrap();
        assert!((&got - &expected).amax() <= 1e-10 * expected.amax().max(1.0));

        let fd = FdHamiltonian::new("fd-euclidean", |p: &Matrix| Ok(p.norm_squared()));
        let via_fd = aronsson_system(&fd, &map, &x).unwrap();
        assert!((&via_fd - &expected).amax() <= 1e-5 * expected.amax().max(1.0));
    }
}

#[test]
fn aronsson_of_dilation_matches_q_infinity_parts() {
    // H = K: tangential parts coincide and the normal part carries a factor K
    for (map, x) in random_cases().into_iter().take(40) {
        let du = map.gradient(&x).unwrap();
        if !well_separated(&du) || !well_separated(&dilation_gradient(&du).unwrap()) {
            continue;
        }
        let k = dilation(&du).finite().unwrap();
        let (t, n) = q_infinity_decoupled(&map, &x).unwrap();
        let expected = t + n * k;
        let got = aronsson_system(&DilationHamiltonian, &map, &x).unwrap();
        assert!(
            (&got - &expected).amax() <= 1e-5 * expected.amax().max(1.0),
            "{got} vs {expected}"
        );
    }
}

#[test]
fn operator_dispatch_matches_direct_calls() {
    let u = power_map(0.5, 3).unwrap();
    let x = [0.1, 0.2, -0.3];
    assert_eq!(
        Operator::QInfinity.evaluate(&u, &x).unwrap(),
        q_infinity(&u, &x).unwrap()
    );
    assert_eq!(
        Operator::InfinityLaplacian.evaluate(&u, &x).unwrap(),
        infinity_laplacian(&u, &x).unwrap()
    );
    assert!(Operator::Linear { mu: 2.0 }.decoupled(&u, &x).is_none());
}

#[test]
fn trig_map_is_infinity_harmonic_off_the_diagonal() {
    let u = trig_map();
    for x in random_annulus_points(2, 200, 0.01, 0.5, 3).unwrap().points {
        if (x[0] - x[1]).abs() < 1e-2 {
            continue;
        }
        let r = infinity_laplacian(&u, &x).unwrap();
        assert!(r.amax() <= 1e-12, "{x:?}: {r}");
    }
}
