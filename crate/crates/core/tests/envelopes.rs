use approx::assert_relative_eq;
use fracgrid_core::gronwall::*;
use fracgrid_core::ml::{estimate_sigma_constants, MittagLeffler};
use fracgrid_core::*;
use proptest::prelude::*;

fn constants(nu: f64, sigma: f64, mu: f64) -> EnvelopeConstants {
    EnvelopeConstants {
        nu,
        rho1: 1.0,
        sigma,
        mu,
    }
}

fn envelope(variant: EnvelopeVariant, alpha: f64, lambda: f64, c: f64, v0: f64, k: EnvelopeConstants, mesh: &Mesh) -> GronwallEnvelope {
    GronwallEnvelope::new(variant, alpha, lambda, c, v0, k, mesh.clone()).unwrap()
}

#[test]
fn lambda_zero_hand_value() {
    let mesh = uniform_mesh(1.0, 1).unwrap();
    let env = envelope(EnvelopeVariant::LambdaZero, 0.5, 0.0, 1.0, 0.25, constants(1.0, 1.0, 1.0), &mesh);
    assert_relative_eq!(env.value(1), 0.25 + std::f64::consts::FRAC_2_SQRT_PI, max_relative = 1e-14);
}

#[test]
fn dalpha_of_power_single_step() {
    let k = l1_kernel(0.5, &uniform_mesh(1.0, 1).unwrap()).unwrap();
    assert_relative_eq!(dalpha_of_power(&k, 1), 4.0 / std::f64::consts::PI, max_relative = 1e-14);
    let mut k2 = k.clone();
    k2.c = k2.c.scaled(2.0);
    assert_relative_eq!(dalpha_of_power(&k2, 1), 8.0 / std::f64::consts::PI, max_relative = 1e-14);
}

#[test]
fn uniform_bound_approaches_equilibrium() {
    let mesh = graded_mesh(200.0, 400, 2.0).unwrap();
    let env = envelope(EnvelopeVariant::UniformBound, 0.6, 1.0, 2.0, 0.5, constants(1.0, 1.0, 1.0), &mesh);
    let v = env.values();
    assert_eq!(v[0], 0.5);
    assert!(v.windows(2).all(|w| w[1] >= w[0] - 1e-15));
    assert!((v[400] - 2.0).abs() < 0.1);
}

#[test]
fn solver_trajectories_respect_envelopes() {
    let sigma = estimate_sigma_constants().sigma;
    for alpha in [0.3, 0.6, 0.9] {
        let mesh = graded_mesh(5.0, 120, 2.0).unwrap();
        let k = l1_kernel(alpha, &mesh).unwrap();
        let base = EnvelopeConstants::for_kernel(&k).unwrap();
        assert_relative_eq!(base.nu, 1.0, max_relative = 1e-12);
        assert_relative_eq!(base.rho1, 1.0, max_relative = 1e-12);

        let u = solve(&k, &FodeProblem::affine(-1.0, 2.0, 0.5)).unwrap().u;
        let env = envelope(EnvelopeVariant::UniformBound, alpha, 1.0, 2.0, 0.5, base, &mesh);
        assert!(verify_trajectory(&env, &u, Direction::Upper).unwrap().pass);

        let u = solve(&k, &FodeProblem::affine(-0.8, 0.0, 1.0)).unwrap().u;
        let lower = envelope(EnvelopeVariant::DecayLower, alpha, 0.8, 0.0, 1.0, base, &mesh);
        assert!(verify_trajectory(&lower, &u, Direction::Lower).unwrap().pass);
        let upper = envelope(EnvelopeVariant::DecayUpperStepRestricted, alpha, 0.8, 0.0, 1.0, base, &mesh);
        assert!(upper.rho() <= sigma);
        assert!(verify_trajectory(&upper, &u, Direction::Upper).unwrap().pass);
        let basic = envelope(EnvelopeVariant::DecayUpperBasic, alpha, 0.8, 0.0, 1.0, base, &mesh);
        assert!(verify_trajectory(&basic, &u, Direction::Upper).unwrap().pass);
    }
}

#[test]
fn hypotheses_are_enforced() {
    let mesh = uniform_mesh(10.0, 2).unwrap();
    let k = constants(1.0, 46.0, 0.36);
    use EnvelopeVariant::*;
    assert!(GronwallEnvelope::new(UniformBound, 0.5, 1.0, 1.0, 2.0, k, mesh.clone()).is_err());
    assert!(GronwallEnvelope::new(DecayLower, 0.5, 1.0, 1.0, 0.5, k, mesh.clone()).is_err());
    assert!(GronwallEnvelope::new(DecayUpperStepRestricted, 0.5, 1.0, 0.0, 1.0, k, mesh.clone()).is_err());
    assert!(GronwallEnvelope::new(GrowingLinear, 0.5, 1.0, 0.0, 1.0, k, mesh.clone()).is_err());
    assert!(GronwallEnvelope::new(LambdaZero, 0.5, 1.0, 0.0, 1.0, k, mesh).is_err());
}

#[test]
fn violations_are_reported() {
    let mesh = uniform_mesh(1.0, 4).unwrap();
    let env = envelope(EnvelopeVariant::DecayUpperBasic, 0.5, 1.0, 0.0, 1.0, constants(1.0, 1.0, 1.0), &mesh);
    let rep = verify_trajectory(&env, &[1.0, 1.0, 1.0, 1.0, 1.0], Direction::Upper).unwrap();
    assert!(!rep.pass);
    assert_eq!(rep.violations, 4);
    assert_eq!(rep.worst_index, 4);
}

#[test]
fn decay_fit_recovers_power_laws() {
    let mesh = graded_mesh(1e3, 500, 2.0).unwrap();
    let t = mesh.points();
    let v: Vec<f64> = t.iter().map(|&x| if x > 0.0 { x.powf(-0.5) } else { 1.0 }).collect();
    assert!((decay_rate_fit(t, &v).unwrap() + 0.5).abs() < 0.01);

    for (alpha, t_end, tol) in [(0.5, 1e4, 0.05), (0.3, 1e6, 0.05)] {
        let mesh = graded_mesh(t_end, 800, 2.0).unwrap();
        let e = MittagLeffler::classical(alpha).unwrap();
        let v: Vec<f64> = mesh.points().iter().map(|&x| e.eval(-x.powf(alpha))).collect();
        let rate = decay_rate_fit(mesh.points(), &v).unwrap();
        assert!((rate + alpha).abs() < tol, "alpha={alpha} rate={rate}");
    }
}

fn mesh_strategy() -> impl Strategy<Value = Mesh> {
    (2usize..=40, 1.0f64..30.0, 0.2f64..5.0, any::<u64>())
        .prop_map(|(n, ratio, t, seed)| random_mesh(t, n, ratio, seed).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn sandwich_is_well_formed(mesh in mesh_strategy(), alpha in 0.1f64..0.95, lambda in 0.1f64..3.0, c in 0.0f64..1.0) {
        let sigma = estimate_sigma_constants().sigma;
        let v0 = c / lambda + 1.0;
        let k = constants(1.0, sigma, 0.36);
        let lo = envelope(EnvelopeVariant::DecayLower, alpha, lambda, c, v0, k, &mesh);
        let hi = envelope(EnvelopeVariant::DecayUpperBasic, alpha, lambda, c, v0, k, &mesh);
        for n in 0..=mesh.len() {
            prop_assert!(lo.value(n) <= hi.value(n) + 1e-14);
        }
        prop_assert_eq!(lo.value(0), v0);
        prop_assert_eq!(hi.value(0), v0);
    }

    #[test]
    fn smaller_constants_weaken_envelopes(mesh in mesh_strategy(), alpha in 0.1f64..0.95, nu in 0.5f64..2.0) {
        let (lambda, c, v0) = (1.0, 1.0, 0.2);
        let strong = envelope(EnvelopeVariant::UniformBound, alpha, lambda, c, v0, constants(nu * 1.5, 1.0, 1.0), &mesh);
        let weak = envelope(EnvelopeVariant::UniformBound, alpha, lambda, c, v0, constants(nu, 1.0, 1.0), &mesh);
        for n in 0..=mesh.len() {
            prop_assert!(weak.value(n) >= strong.value(n) - 1e-14);
        }
        let tiny = 0.01 / mesh.max_step().powf(alpha);
        let strong = envelope(EnvelopeVariant::GrowingLinear, alpha, tiny, c, v0, constants(1.0, 1.0, 0.4), &mesh);
        let weak = envelope(EnvelopeVariant::GrowingLinear, alpha, tiny, c, v0, constants(1.0, 1.0, 0.2), &mesh);
        for n in 0..=mesh.len() {
            prop_assert!(weak.value(n) >= strong.value(n) - 1e-14);
        }
    }

    #[test]
    fn concave_comparison(mesh in mesh_strategy(), alpha in 0.1f64..0.95) {
        let k = l1_kernel(alpha, &mesh).unwrap();
        for n in 1..=mesh.len() {
            prop_assert!(dalpha_of_power(&k, n) >= 1.0 - 1e-10);
        }
        // v = 1 - E_α(-t^α) has D^α v = E_α(-t^α)
        let e = MittagLeffler::classical(alpha).unwrap();
        let v: Vec<f64> = mesh.points().iter().map(|&t| 1.0 - e.eval(-t.powf(alpha))).collect();
        let d = k.apply_derivative(&v).unwrap();
        for n in 1..=mesh.len() {
            let exact = e.eval(-mesh.t(n).powf(alpha));
            prop_assert!(d[n - 1] >= exact - 1e-10);
        }
    }
}
