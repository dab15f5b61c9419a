mod support;

use contact_lqr::contact::ContactSet;
use contact_lqr::dynamics::{mass_matrix, nonlinear_effects, total_energy};
use contact_lqr::linearize::linearize;
use contact_lqr::model::FullState;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use support::double_pendulum::{dv, DoublePendulum};

#[test]
fn mass_matrix_matches_lagrangian() {
    let dp = DoublePendulum::default();
    let model = dp.model();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
    for _ in 0..50 {
        let q = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let m = mass_matrix(&model, &dv(&q)).unwrap();
        let expect = dp.mass_matrix(&q);
        for r in 0..2 {
            for c in 0..2 {
                assert!((m[(r, c)] - expect[(r, c)]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn bias_matches_lagrangian() {
    let dp = DoublePendulum::default();
    let model = dp.model();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let q = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let v = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
        let h = nonlinear_effects(&model, &dv(&q), &dv(&v)).unwrap();
        let expect = dp.bias(&q, &v);
        assert!((h[0] - expect[0]).abs() < 1e-8);
        assert!((h[1] - expect[1]).abs() < 1e-8);
    }
}

#[test]
fn energy_matches_lagrangian() {
    let dp = DoublePendulum::default();
    let model = dp.model();
    let (q, v) = ([0.4, -1.1], [0.7, 2.0]);
    let e = total_energy(&model, &dv(&q), &dv(&v));
    assert!((e - dp.energy(&q, &v)).abs() < 1e-10);
}

#[test]
fn finite_difference_linearization_matches_symbolic_jacobian() {
    let dp = DoublePendulum::default();
    let model = dp.model();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let q = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let v = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        // compensate gravity and Coriolis so the point is an equilibrium of the acceleration
        let tau0 = nonlinear_effects(&model, &dv(&q), &dv(&v)).unwrap();
        let sys = linearize(&model, &FullState { q: dv(&q), v: dv(&v) }, &tau0, &ContactSet::empty()).unwrap();
        let (a, b) = dp.linearization(&q, &v, &[tau0[0], tau0[1]]);
        assert!((&sys.a - a).amax() < 1e-5);
        assert!((&sys.b - b).amax() < 1e-5);
    }
}

#[test]
fn halving_the_step_behaves_like_second_order() {
    use contact_lqr::linearize::{linearize_with, FdSteps};
    let dp = DoublePendulum::default();
    let model = dp.model();
    let (q, v) = ([0.7, -0.4], [0.3, -0.5]);
    let tau0 = DVector::zeros(2);
    let state = FullState { q: dv(&q), v: dv(&v) };
    let (exact, _) = dp.linearization(&q, &v, &[0.0, 0.0]);
    let err = |h: f64| {
        let steps = FdSteps { state_step: h, torque_step: 1e-4 };
        (linearize_with(&model, &state, &tau0, &ContactSet::empty(), steps).unwrap().a - &exact).amax()
    };
    let (e1, e2) = (err(1e-3), err(5e-4));
    // O(h^2): halving h divides the error by about four
    assert!(e2 < e1 / 2.5, "e(h)={e1:e}, e(h/2)={e2:e}");
}
