//! Acceptance checks, one line per criterion. Exits nonzero if any fails.

mod support;

use std::path::PathBuf;
use std::time::Instant;

use contact_lqr::contact::{constrained_forward_dynamics, constraint_matrix, contact_jacobians, ContactSet};
use contact_lqr::dynamics::{mass_matrix, nonlinear_effects, total_energy};
use contact_lqr::linearize::{linearize, nullspace_basis};
use contact_lqr::lqr::{
    care_residual, coupling_ratio, lqr_gain, solve_care, spectral_abscissa, swing_leg_dominant, synthesize_detailed,
    LqrWeights,
};
use contact_lqr::model::{bundled, FullState, JointKind, Link, Plane, RobotModel};
use contact_lqr::planner::{distribute_contact_forces, key_pose, load_poses, KeyPoseSpec};
use contact_lqr::scheduler::{distance_table, KeyframeLibrary, PdGains};
use contact_lqr::sim::{metrics, run_scenario, step, Disturbance, Metrics, Scenario};
use nalgebra::{DMatrix, DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::double_pendulum::{dv, DoublePendulum};
use support::riccati::care_hamiltonian;

type Check = Result<String, String>;

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(rel)
}

fn scenario(name: &str) -> Scenario {
    Scenario::load(data(&format!("suites/full/{name}.toml"))).expect("bundled scenario loads")
}

fn run(s: &Scenario) -> Result<Metrics, String> {
    run_scenario(s).map(|t| metrics(&t)).map_err(|e| format!("{}: {e}", s.name))
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_system(rng: &mut impl Rng, n: usize, nu: usize) -> [DMatrix<f64>; 4] {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.5..1.5));
    let b = DMatrix::from_fn(n, nu, |_, _| rng.random_range(-1.0..1.0));
    let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let q = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
    [a, b, q, DMatrix::identity(nu, nu)]
}

fn numerics_core() -> Check {
    let start = Instant::now();
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
    let p = solve_care(&a, &b, &DMatrix::identity(2, 2), &DMatrix::identity(1, 1)).map_err(|e| e.to_string())?;
    let s3 = 3f64.sqrt();
    let closed_form = (&p - DMatrix::from_row_slice(2, 2, &[s3, 1.0, 1.0, s3])).amax();
    if closed_form > 1e-10 {
        return Err(format!("double integrator off by {closed_form:.2e}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_res, mut worst_cross, mut worst_abscissa) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    let mut redrawn = 0;
    for n in 2..=20 {
        // draws the oracle itself cannot solve in double precision are redrawn
        let ([a, b, q, r], oracle) = loop {
            let nu = 1 + rng.random_range(0..n.min(5));
            let sys = random_system(&mut rng, n, nu);
            let [a, b, q, r] = &sys;
            let oracle = care_hamiltonian(a, b, q, r);
            if care_residual(a, b, q, r, &oracle) < 1e-10 {
                break (sys, oracle);
            }
            redrawn += 1;
        };
        let p = solve_care(&a, &b, &q, &r).map_err(|e| format!("r = {n}: {e}"))?;
        let k = lqr_gain(&b, &r, &p).map_err(|e| e.to_string())?;
        worst_res = worst_res.max(care_residual(&a, &b, &q, &r, &p));
        worst_abscissa = worst_abscissa.max(spectral_abscissa(&(&a - &b * k)));
        worst_cross = worst_cross.max((&p - oracle).norm() / p.norm());
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        worst_res < 1e-8 && worst_abscissa < 0.0 && worst_cross < 1e-8 && secs < 1.0,
        format!(
            "closed form {closed_form:.1e}; r <= 20: residual {worst_res:.1e}, abscissa {worst_abscissa:.3}, \
             Hamiltonian cross-check {worst_cross:.1e}; {redrawn} ill-conditioned draws replaced; {secs:.2} s"
        ),
    )
}

fn projection() -> Check {
    let model = bundled::biped_sagittal();
    let (qw, rw) = LqrWeights::default().matrices(&model);
    let n = model.n();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let supports: [&[&str]; 3] = [&["left", "right"], &["left"], &["right"]];
    let (mut cn, mut ortho, mut kproj) = (0.0f64, 0.0f64, 0.0f64);
    for trial in 0..100 {
        let support = supports[trial % 3];
        let pose = key_pose(&model, &KeyPoseSpec::new("p", support)).map_err(|e| e.to_string())?;
        let mut q = pose.state.q.clone();
        for i in model.n_base()..n {
            q[i] += rng.random_range(-0.1..0.1);
        }
        let cs = pose.contacts.clone();
        let v_rand = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
        let c = constraint_matrix(&model, &q, &v_rand, &cs).map_err(|e| e.to_string())?;
        let basis = nullspace_basis(&c);
        cn = cn.max((&c * &basis).amax());
        ortho = ortho.max((basis.transpose() * &basis - DMatrix::identity(basis.ncols(), basis.ncols())).amax());
        let expect = 2 * n - 2 * cs.m();
        if basis.ncols() != expect {
            return Err(format!("trial {trial}: r = {} but 2n - 2m = {expect}", basis.ncols()));
        }
        let state = FullState::at_rest(q);
        let s = synthesize_detailed(&model, &state, &cs, &qw, &rw, "p").map_err(|e| format!("trial {trial}: {e}"))?;
        let proj = DMatrix::identity(2 * n, 2 * n) - &s.basis * s.basis.transpose();
        kproj = kproj.max((&s.controller.k * proj).amax());
    }
    ensure(
        cn < 1e-10 && ortho < 1e-12 && kproj < 1e-10,
        format!("100 configurations: |C N| {cn:.1e}, |N'N - I| {ortho:.1e}, |K (I - N N')| {kproj:.1e}, r = 2n - 2m"),
    )
}

fn upright_pendulum() -> RobotModel {
    let link = Link {
        name: "rod".into(),
        parent: None,
        joint: JointKind::Revolute,
        origin: Vector2::zeros(),
        origin_angle: 0.0,
        mass: 1.0,
        com: Vector2::new(0.0, 1.0),
        inertia: 0.0,
        rest: 0.0,
        armature: 0.0,
    };
    RobotModel::new("pendulum", Plane::Sagittal, 9.81, vec![link], vec![], vec![]).expect("valid pendulum")
}

fn linearization() -> Check {
    let dp = DoublePendulum::default();
    let model = dp.model();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let q = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let v = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let tau0 = nonlinear_effects(&model, &dv(&q), &dv(&v)).map_err(|e| e.to_string())?;
        let sys = linearize(&model, &FullState { q: dv(&q), v: dv(&v) }, &tau0, &ContactSet::empty())
            .map_err(|e| e.to_string())?;
        let (a, b) = dp.linearization(&q, &v, &[tau0[0], tau0[1]]);
        worst = worst.max((&sys.a - a).amax()).max((&sys.b - b).amax());
    }
    let pend = upright_pendulum();
    let sys = linearize(&pend, &FullState::at_rest(DVector::zeros(1)), &DVector::zeros(1), &ContactSet::empty())
        .map_err(|e| e.to_string())?;
    let upright = (&sys.a - DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 9.81, 0.0])).amax();
    ensure(
        worst < 1e-5 && upright < 1e-6,
        format!("double pendulum max entry error {worst:.1e}; upright pendulum A off by {upright:.1e}"),
    )
}

fn dynamics() -> Check {
    let dp = DoublePendulum::default();
    let model = dp.model();
    let mut state = FullState { q: dv(&[1.2, -0.4]), v: dv(&[0.0, 0.5]) };
    let e0 = total_energy(&model, &state.q, &state.v);
    let zero = DVector::zeros(2);
    let mut drift = 0.0f64;
    for _ in 0..50_000 {
        state = step(&model, &state, &zero, &ContactSet::empty(), 1e-4).map_err(|e| e.to_string())?.0;
        drift = drift.max((total_energy(&model, &state.q, &state.v) - e0).abs() / e0.abs());
    }

    let biped = bundled::biped_sagittal();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut kkt = 0.0f64;
    for trial in 0..50 {
        let support: &[usize] = [&[0usize, 1][..], &[0][..], &[1][..]][trial % 3];
        let cs = ContactSet::flat_feet(&biped, support).map_err(|e| e.to_string())?;
        let q = DVector::from_fn(biped.n(), |i, _| if i == 1 { 0.8 } else { rng.random_range(-0.5..0.5) });
        let v = DVector::from_fn(biped.n(), |_, _| rng.random_range(-1.0..1.0));
        let tau = DVector::from_fn(biped.n_u(), |_, _| rng.random_range(-50.0..50.0));
        let fd = constrained_forward_dynamics(&biped, &q, &v, &tau, &cs).map_err(|e| e.to_string())?;
        let m = mass_matrix(&biped, &q).map_err(|e| e.to_string())?;
        let h = nonlinear_effects(&biped, &q, &v).map_err(|e| e.to_string())?;
        let (jac, jdot) = contact_jacobians(&biped, &q, &v, &cs);
        let motion = &m * &fd.qdd + h - biped.apply_selector(&tau) - jac.transpose() * &fd.f_c;
        let constraint = &jac * &fd.qdd + jdot * &v;
        kkt = kkt.max(motion.amax()).max(constraint.amax());
    }

    let pose = key_pose(&biped, &KeyPoseSpec::new("ds", &["left", "right"])).map_err(|e| e.to_string())?;
    let tau = distribute_contact_forces(&biped, &pose.state.q, &pose.contacts, &[0.3, 0.7]).map_err(|e| e.to_string())?;
    let fd = constrained_forward_dynamics(&biped, &pose.state.q, &pose.state.v, &tau, &pose.contacts)
        .map_err(|e| e.to_string())?;
    let rest = fd.qdd.amax();
    ensure(
        drift < 1e-3 && kkt < 1e-9 && rest < 1e-8,
        format!("pendulum energy drift {drift:.1e} over 5 s; KKT residual {kkt:.1e}; static |qdd| {rest:.1e}"),
    )
}

fn library(model: &RobotModel, file: &str) -> Result<KeyframeLibrary, String> {
    let poses = load_poses(data(file)).map_err(|e| e.to_string())?;
    KeyframeLibrary::synthesize(model, &poses, &LqrWeights::default(), PdGains::default()).map_err(|e| e.to_string())
}

fn gain_distance_ordering() -> Check {
    let mut details = Vec::new();
    let mut ok = true;
    for (model, file) in [
        (bundled::biped_sagittal(), "poses/biped-sagittal-5.toml"),
        (bundled::biped_frontal(), "poses/biped-frontal-5.toml"),
    ] {
        let lib = library(&model, file)?;
        let d = distance_table(&lib.controllers);
        let (mut same, mut cross) = (0.0f64, f64::INFINITY);
        for i in 0..lib.len() {
            for j in i + 1..lib.len() {
                if lib.controllers[i].contacts == lib.controllers[j].contacts {
                    same = same.max(d[(i, j)]);
                } else {
                    cross = cross.min(d[(i, j)]);
                }
            }
        }
        ok &= same < cross;
        details.push(format!("{}: max same-contact {same:.1} < min cross-contact {cross:.1}", model.name));
    }
    ensure(ok, details.join("; "))
}

fn gain_structure() -> Check {
    let model = bundled::biped_sagittal();
    let lib = library(&model, "poses/biped-sagittal-5.toml")?;
    let by_label = |l: &str| lib.controllers.iter().find(|c| c.label == l).expect("pose in library");
    let ratio = coupling_ratio(by_label("ds"));
    let left = swing_leg_dominant(&model, by_label("ss_left"), 1);
    let right = swing_leg_dominant(&model, by_label("ss_right"), 0);
    ensure(
        ratio > 0.25 && left && right,
        format!("double support coupling ratio {ratio:.3} (> 0.25); swing leg dominant: ss_left {left}, ss_right {right}"),
    )
}

fn torso_sine() -> Check {
    let start = Instant::now();
    let slow = run(&scenario("torso-sine-0.2"))?;
    let fast = run(&scenario("torso-sine-0.8"))?;
    let secs = start.elapsed().as_secs_f64();
    ensure(
        !slow.fell && !fast.fell && fast.peak_base_error > slow.peak_base_error && secs < 60.0,
        format!(
            "peak base error {:.4} m at 0.2 Hz, {:.4} m at 0.8 Hz; falls: {}, {}; {secs:.1} s",
            slow.peak_base_error, fast.peak_base_error, slow.fell, fast.fell
        ),
    )
}

fn with_impulse(base: &Scenario, impulse: f64) -> Scenario {
    let mut s = base.clone();
    for d in s.disturbances.iter_mut() {
        if let Disturbance::Impulse { impulse: i, .. } = d {
            *i = impulse;
        }
    }
    s
}

/// Upper bisection bracket as a multiple of the nominal push.
const FALLING_FACTOR: f64 = 5.0;

fn push_recovery() -> Check {
    let base = scenario("ss-push");
    let weight = bundled::biped_sagittal().weight();
    let nominal = 0.02 * weight;
    let m = run(&with_impulse(&base, nominal))?;
    let recovered = !m.fell && m.recovery_time.is_some_and(|t| t <= 5.0);
    let mut samples = vec![(nominal, m.fell)];
    let (mut lo, mut hi) = (nominal, FALLING_FACTOR * nominal);
    samples.push((hi, run(&with_impulse(&base, hi))?.fell));
    for _ in 0..3 {
        let mid = 0.5 * (lo + hi);
        let fell = run(&with_impulse(&base, mid))?.fell;
        samples.push((mid, fell));
        if fell {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = samples.windows(2).all(|w| w[0].1 <= w[1].1) && samples.last().is_some_and(|s| s.1);
    let listing: Vec<String> = samples.iter().map(|(i, f)| format!("{i:.1}{}", if *f { " fall" } else { "" })).collect();
    ensure(
        recovered && monotone,
        format!(
            "{nominal:.2} N s push: fell {}, recovery {:?} s; fall boundary in ({lo:.1}, {hi:.1}] N s, monotone {monotone} [{}]",
            m.fell,
            m.recovery_time.map(|t| (t * 1000.0).round() / 1000.0),
            listing.join(", ")
        ),
    )
}

fn side_to_side() -> Check {
    let mut ok = true;
    let mut details = Vec::new();
    for (timing, band) in [("slow", 0.10), ("fast", 1.00)] {
        let runs = [1, 3, 5]
            .iter()
            .map(|n| run(&scenario(&format!("side-to-side-{timing}-{n}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let base = runs[0].rmse_com;
        let mut worst = 0.0f64;
        for m in &runs {
            ok &= !m.fell;
            for axis in 0..3 {
                if base[axis] == 0.0 && m.rmse_com[axis] == 0.0 {
                    continue;
                }
                worst = worst.max((m.rmse_com[axis] - base[axis]).abs() / base[axis]);
            }
        }
        ok &= worst <= band;
        let rows: Vec<String> = runs
            .iter()
            .zip([1, 3, 5])
            .map(|(m, n)| format!("{n}: y {:.3e} z {:.3e}", m.rmse_com[1], m.rmse_com[2]))
            .collect();
        details.push(format!("{timing} [{}] worst deviation {:.0}% (limit {:.0}%)", rows.join(", "), worst * 100.0, band * 100.0));
    }
    ensure(ok, details.join("; "))
}

fn walking(in_place: &Metrics, forward: &Metrics, secs: f64) -> Check {
    let keys = scenario("walk-in-place").library.poses.len();
    let ok_in_place = !in_place.fell
        && in_place.steps >= 9
        && keys == 3
        && in_place.cop_violations == 0
        && in_place.false_double_support == 0;
    let ok_forward = !forward.fell && forward.steps >= 8 && forward.max_footstep_error.is_some_and(|e| e < 0.02);
    ensure(
        ok_in_place && ok_forward && secs < 120.0,
        format!(
            "in place: {} steps with {keys} keyframes, fell {}, CoP outside support {} ticks, false double support {} ticks; \
             forward: {} steps, footstep error {:.4} m, fell {}; {secs:.1} s",
            in_place.steps,
            in_place.fell,
            in_place.cop_violations,
            in_place.false_double_support,
            forward.steps,
            forward.max_footstep_error.unwrap_or(f64::NAN),
            forward.fell
        ),
    )
}

fn blending(in_place: &Metrics) -> Check {
    let ratio = in_place.max_switch_jump / in_place.max_unblended_jump;
    ensure(
        in_place.switches > 0 && ratio < 0.25,
        format!(
            "{} switches: blended {:.3} vs unblended {:.3} (ratio {:.1}%)",
            in_place.switches,
            in_place.max_switch_jump,
            in_place.max_unblended_jump,
            ratio * 100.0
        ),
    )
}

fn determinism() -> Check {
    let mut s = scenario("side-to-side-fast-3");
    s.seed = 7;
    let a = run_scenario(&s).map_err(|e| e.to_string())?.to_csv_string();
    let b = run_scenario(&s).map_err(|e| e.to_string())?.to_csv_string();
    s.seed = 8;
    let c = run_scenario(&s).map_err(|e| e.to_string())?.to_csv_string();
    ensure(
        a == b && a != c,
        format!("same seed identical: {}; another seed differs: {} ({} bytes)", a == b, a != c, a.len()),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |id: u32, name: &str, check: Check, secs: f64| {
        let (tag, detail) = match check {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] {id:>2} {name} ({secs:.1} s): {detail}");
    };
    let timed = |f: &dyn Fn() -> Check| {
        let t = Instant::now();
        let c = f();
        (c, t.elapsed().as_secs_f64())
    };

    let (c, t) = timed(&numerics_core);
    report(1, "numerics core", c, t);
    let (c, t) = timed(&projection);
    report(2, "projection", c, t);
    let (c, t) = timed(&linearization);
    report(3, "linearization", c, t);
    let (c, t) = timed(&dynamics);
    report(4, "dynamics", c, t);
    let (c, t) = timed(&gain_distance_ordering);
    report(5, "gain distance ordering", c, t);
    let (c, t) = timed(&gain_structure);
    report(6, "gain structure", c, t);
    let (c, t) = timed(&torso_sine);
    report(7, "torso-sine load", c, t);
    let (c, t) = timed(&push_recovery);
    report(8, "single support push", c, t);
    let (c, t) = timed(&side_to_side);
    report(9, "side-to-side keyframe count", c, t);

    let start = Instant::now();
    let walks = run(&scenario("walk-in-place")).and_then(|a| run(&scenario("walk-forward")).map(|b| (a, b)));
    let secs = start.elapsed().as_secs_f64();
    match &walks {
        Ok((a, b)) => {
            report(10, "walking", walking(a, b, secs), secs);
            report(11, "blending", blending(a), 0.0);
        }
        Err(e) => {
            report(10, "walking", Err(e.clone()), secs);
            report(11, "blending", Err(e.clone()), 0.0);
        }
    }
    let (c, t) = timed(&determinism);
    report(12, "determinism", c, t);

    if failed > 0 {
        println!("{failed} of 12 criteria failed");
        std::process::exit(1);
    }
    println!("all 12 criteria passed");
}
