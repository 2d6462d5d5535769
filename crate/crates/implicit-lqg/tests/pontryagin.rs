//! Costates and gradients of the power design against finite differences.

mod support;

use implicit_lqg::channel::ChannelSetup;
use implicit_lqg::gains::backward_riccati;
use implicit_lqg::matcore::{self, Mat, Vector};
use implicit_lqg::model::fully_actuated_preset;
use implicit_lqg::power::{costate_z, Costates, FaProblem, Mdp};
use implicit_lqg::Error;

use support::{hamiltonian_case, symmetric_gradient, HamiltonianCase};

fn problem(c: &HamiltonianCase) -> FaProblem<'_> {
    FaProblem::new(Mdp::new(&c.model, &c.gains, &c.channel).unwrap()).unwrap()
}

fn costates(c: &HamiltonianCase) -> Costates<'_> {
    Costates {
        theta_z: &c.theta_z,
        theta_sigma: &c.theta_sigma,
    }
}

fn rel_gap(a: &Mat, b: &Mat) -> f64 {
    (a - b).amax() / a.amax().max(b.amax()).max(1e-12)
}

#[test]
fn expanded_and_dynamics_forms_agree() {
    let mut rng = support::rng(5);
    for _ in 0..50 {
        let c = hamiltonian_case(&mut rng);
        let p = problem(&c);
        let a = p.hamiltonian(&c.z, &c.sigma, &c.lambda, costates(&c), c.t).unwrap();
        let b = p
            .hamiltonian_dynamics_form(&c.z, &c.sigma, &c.lambda, costates(&c), c.t)
            .unwrap();
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn power_gradient_matches_central_differences() {
    let mut rng = support::rng(6);
    for _ in 0..50 {
        let c = hamiltonian_case(&mut rng);
        let p = problem(&c);
        let grad = p.grad_lambda(&c.sigma, &c.lambda, costates(&c), c.t).unwrap();
        let fd = Vector::from_fn(c.lambda.len(), |j, _| {
            let h = 1e-6 * c.lambda[j].max(1.0);
            let mut up = c.lambda.clone();
            let mut down = c.lambda.clone();
            up[j] += h;
            down[j] -= h;
            let f = |l: &Vector| p.hamiltonian(&c.z, &c.sigma, l, costates(&c), c.t).unwrap();
            (f(&up) - f(&down)) / (2.0 * h)
        });
        let gap = (&grad - &fd).amax() / grad.amax().max(1e-12);
        assert!(gap < 1e-5, "relative gap {gap:e}\n{grad}\n{fd}");
    }
}

#[test]
fn sigma_costate_matches_central_differences() {
    let mut rng = support::rng(7);
    for _ in 0..50 {
        let c = hamiltonian_case(&mut rng);
        let p = problem(&c);
        let g = p.theta_sigma_step(&c.sigma, &c.lambda, costates(&c), c.t).unwrap();
        assert!(g.residual < 1e-10, "Sylvester residual {:e}", g.residual);
        let fd = symmetric_gradient(&c.sigma, 1e-5, |s| {
            p.hamiltonian(&c.z, s, &c.lambda, costates(&c), c.t).unwrap()
        });
        let gap = rel_gap(&g.theta_sigma, &fd);
        assert!(gap < 1e-5, "relative gap {gap:e}\n{}\n{fd}", g.theta_sigma);
    }
}

#[test]
fn identity_covariance_halves_the_right_hand_sides() {
    let mut rng = support::rng(8);
    let mut c = hamiltonian_case(&mut rng);
    let d = c.sigma.nrows();
    c.sigma = Mat::identity(d, d);
    let p = problem(&c);
    let g = p.theta_sigma_step(&c.sigma, &c.lambda, costates(&c), c.t).unwrap();
    let fa = c.channel.fa().unwrap();
    let v = fa.v(&c.lambda);
    let rhs1 = &c.theta_sigma * &v + &v * &c.theta_sigma;
    assert!(rel_gap(&g.theta1, &(rhs1 * 0.5)) < 1e-12);
}

#[test]
fn silent_costates_leave_only_linear_terms() {
    let mut rng = support::rng(9);
    let mut c = hamiltonian_case(&mut rng);
    let d = c.sigma.nrows();
    c.model.g1 *= 0.0;
    c.model.g2 *= 0.0;
    c.theta_z = Mat::zeros(d, d);
    c.theta_sigma = Mat::zeros(d, d);
    let p = problem(&c);
    let g = p.theta_sigma_step(&c.sigma, &c.lambda, costates(&c), c.t).unwrap();
    assert_eq!(g.theta1.amax(), 0.0);
    assert_eq!(g.theta2.amax(), 0.0);
    assert_eq!(g.theta3.amax(), 0.0);
}

#[test]
fn zero_power_entry_is_rejected() {
    let mut rng = support::rng(10);
    let mut c = hamiltonian_case(&mut rng);
    c.lambda[1] = 0.0;
    let p = problem(&c);
    let err = p.grad_lambda(&c.sigma, &c.lambda, costates(&c), c.t).unwrap_err();
    assert_eq!(err, Error::ZeroLambdaEntry { index: 1, value: 0.0 });
}

#[test]
fn large_sigma_costate_makes_power_worthwhile() {
    let m = fully_actuated_preset();
    let g = backward_riccati(&m).unwrap();
    let ch = ChannelSetup::new(&m).unwrap();
    let p = FaProblem::new(Mdp::new(&m, &g, &ch).unwrap()).unwrap();
    let tz = Mat::zeros(4, 4);
    let ts = Mat::identity(4, 4) * 1e6;
    let grad = p
        .grad_lambda(
            &m.sigma0,
            &Vector::from_element(4, 0.5),
            Costates {
                theta_z: &tz,
                theta_sigma: &ts,
            },
            3,
        )
        .unwrap();
    assert!(grad.iter().all(|&x| x < 0.0), "{grad}");
}

#[test]
fn vanishing_covariance_isolates_the_power_price() {
    let mut rng = support::rng(12);
    let c = hamiltonian_case(&mut rng);
    let p = problem(&c);
    let d = c.sigma.nrows();
    let tiny = Mat::identity(d, d) * 1e-20;
    let zero = Mat::zeros(d, d);
    let co = Costates {
        theta_z: &c.theta_z,
        theta_sigma: &zero,
    };
    let grad = p.grad_lambda(&tiny, &c.lambda, co, c.t).unwrap();
    let fa = c.channel.fa().unwrap();
    let u = &fa.eig.u;
    let m3 = u.transpose() * (fa.q1.transpose() * &c.theta_z * &fa.q1 + fa.q.transpose() * &c.model.g1 * &fa.q) * u;
    for j in 0..d {
        assert!((grad[j] - m3[(j, j)]).abs() < 1e-8 * m3[(j, j)].abs());
    }
}

#[test]
fn state_costate_examples() {
    let mut m = fully_actuated_preset().with_horizon(1);
    let g = backward_riccati(&m).unwrap();
    let th = costate_z(&g, &m);
    let abar = &m.a - m.b() * &g.k[0];
    let want = &m.f + g.k[0].transpose() * m.g() * &g.k[0] + abar.transpose() * &m.f_n * &abar;
    assert!(rel_gap(&th[0], &want) < 1e-12);

    m = fully_actuated_preset();
    let g = backward_riccati(&m).unwrap();
    for t in costate_z(&g, &m) {
        assert!(matcore::min_eig(&t) > -1e-9);
    }

    m.f *= 0.0;
    m.f_n *= 0.0;
    m.g1 *= 0.0;
    m.g2 *= 0.0;
    let zero = implicit_lqg::gains::GainSchedule {
        k: vec![Mat::zeros(6, 4); m.n],
        ..g
    };
    assert!(costate_z(&zero, &m).iter().all(|t| t.amax() == 0.0));
}
