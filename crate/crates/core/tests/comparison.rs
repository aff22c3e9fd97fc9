use fracgrid_core::ml::MittagLeffler;
use fracgrid_core::solver::{solve_forced, weighted_theta_conditions};
use fracgrid_core::*;
use proptest::prelude::*;

const TOL: f64 = 1e-10;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 200,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn mesh_strategy() -> impl Strategy<Value = Mesh> {
    (1usize..=40, 1.0f64..100.0, 0.2f64..2.0, any::<u64>())
        .prop_map(|(n, ratio, t, seed)| random_mesh(t, n, ratio, seed).unwrap())
}

/// `f(t, u) = b u + g sin u + c t`; nonincreasing in `u` when `b + |g| ≤ 0`.
fn rhs(b: f64, g: f64, c: f64) -> Rhs {
    Rhs::general(move |t, u| b * u + g * u.sin() + c * t)
}

/// Supersolution `y` and subsolution `z` of the same problem, built by
/// adding nonnegative slack on the `y` side and subtracting it on the `z` side.
fn ordered_pair(
    k: &SchemeKernel,
    p: &FodeProblem,
    gap: f64,
    slack: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = k.n_steps();
    let up: Vec<f64> = slack[..n].to_vec();
    let down: Vec<f64> = slack[..n].iter().map(|s| -s).collect();
    let mut py = p.clone();
    py.u0 += gap;
    let y = solve_forced(k, &py, Some(&up)).unwrap().u;
    let z = solve_forced(k, p, Some(&down)).unwrap().u;
    (y, z)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn implicit_nonincreasing_rhs(
        mesh in mesh_strategy(),
        alpha in 0.05f64..0.95,
        b in -3.0f64..0.0,
        c in -1.0f64..1.0,
        gap in 0.0f64..0.5,
        slack in prop::collection::vec(0.0f64..1.0, 40),
    ) {
        let g = 0.5 * b.abs();
        let k = l1_kernel(alpha, &mesh).unwrap();
        let p = FodeProblem::new(rhs(b, g, c), 0.3);
        let (y, z) = ordered_pair(&k, &p, gap, &slack);
        for (yn, zn) in y.iter().zip(&z) {
            prop_assert!(*yn >= zn - TOL);
        }
    }

    #[test]
    fn implicit_lipschitz_rhs(
        mesh in mesh_strategy(),
        alpha in 0.05f64..0.95,
        b in -1.0f64..1.0,
        g in -1.0f64..1.0,
        c in -1.0f64..1.0,
        gap in 0.0f64..0.5,
        slack in prop::collection::vec(0.0f64..1.0, 40),
    ) {
        let m = b.abs() + g.abs();
        let k = l1_kernel(alpha, &mesh).unwrap();
        prop_assume!(weighted_theta_conditions(&k.c, 1.0, m));
        let p = FodeProblem::new(rhs(b, g, c), -0.2).with_lipschitz(m);
        let (y, z) = ordered_pair(&k, &p, gap, &slack);
        for (yn, zn) in y.iter().zip(&z) {
            prop_assert!(*yn >= zn - TOL);
        }
    }

    #[test]
    fn weighted_theta_rhs(
        mesh in mesh_strategy(),
        alpha in 0.05f64..0.95,
        theta_ix in 0usize..3,
        b in -1.0f64..1.0,
        g in -1.0f64..1.0,
        gap in 0.0f64..0.5,
        slack in prop::collection::vec(0.0f64..1.0, 40),
    ) {
        let theta = [0.0, 0.3, 0.7][theta_ix];
        let m = b.abs() + g.abs();
        let k = l1_kernel(alpha, &mesh).unwrap();
        prop_assume!(weighted_theta_conditions(&k.c, theta, m));
        let p = FodeProblem::new(rhs(b, g, 0.4), 0.1)
            .with_lipschitz(m)
            .with_theta(theta, ThetaRule::ConvexComboOfF);
        let (y, z) = ordered_pair(&k, &p, gap, &slack);
        for (yn, zn) in y.iter().zip(&z) {
            prop_assert!(*yn >= zn - TOL);
        }
    }

    #[test]
    fn ordered_derivatives_give_ordered_sequences(
        mesh in mesh_strategy(),
        alpha in 0.05f64..0.95,
        gap in 0.0f64..1.0,
        dy in prop::collection::vec(-1.0f64..1.0, 40),
        extra in prop::collection::vec(0.0f64..1.0, 40),
    ) {
        // 𝒟x ≥ 𝒟y with x_0 ≥ y_0 forces x_n ≥ y_n
        let k = l1_kernel(alpha, &mesh).unwrap();
        let n = mesh.len();
        let zero = FodeProblem::affine(0.0, 0.0, 0.0);
        let y = solve_forced(&k, &zero, Some(&dy[..n])).unwrap().u;
        let dx: Vec<f64> = dy[..n].iter().zip(&extra).map(|(a, b)| a + b).collect();
        let mut px = zero.clone();
        px.u0 = gap;
        let x = solve_forced(&k, &px, Some(&dx)).unwrap().u;
        let d = k.apply_derivative(&x).unwrap();
        for i in 0..n {
            prop_assert!((d[i] - dx[i]).abs() < 1e-9 * (1.0 + dx[i].abs()));
        }
        for (a, b) in x.iter().zip(&y) {
            prop_assert!(*a >= b - TOL);
        }
    }

    #[test]
    fn solution_map_is_monotone_in_initial_data(
        mesh in mesh_strategy(),
        alpha in 0.05f64..0.95,
        u0 in -2.0f64..2.0,
        gap in 0.0f64..1.0,
        b in -1.0f64..1.0,
    ) {
        let k = l1_kernel(alpha, &mesh).unwrap();
        let m = b.abs() + 0.5;
        prop_assume!(weighted_theta_conditions(&k.c, 1.0, m));
        let p = FodeProblem::new(Rhs::general(move |_, u| b * u + 0.5 * u.cos()), u0).with_lipschitz(m);
        let mut q = p.clone();
        q.u0 += gap;
        let lo = solve(&k, &p).unwrap().u;
        let hi = solve(&k, &q).unwrap().u;
        for (a, b) in hi.iter().zip(&lo) {
            prop_assert!(*a >= b - TOL);
        }
    }

    #[test]
    fn crank_nicolson_comparison(
        n in 4usize..32,
        alpha in 0.7f64..0.95,
        b in -1.0f64..1.0,
        gap in 0.0f64..0.5,
        slack in prop::collection::vec(0.0f64..1.0, 32),
    ) {
        let mesh = uniform_mesh(1.0, n).unwrap();
        let k = cn_l1plus_kernel(alpha, &mesh).unwrap();
        let chi = k.chi.as_ref().unwrap();
        let m = b.abs() + 0.3;
        let ok = (1..=n).all(|r| {
            let c1 = if r > 1 { chi.entry(r, 1) } else { 0.0 };
            chi.entry(r, 0) - c1 >= m / 2.0
        });
        prop_assume!(ok);
        let p = FodeProblem::new(Rhs::general(move |_, u| b * u + 0.3 * u.sin()), 0.5).with_lipschitz(m);
        let (y, z) = ordered_pair(&k, &p, gap, &slack);
        for (yn, zn) in y.iter().zip(&z) {
            prop_assert!(*yn >= zn - TOL);
        }
    }
}

#[test]
fn near_one_order_tracks_exponential() {
    let mesh = uniform_mesh(2.0, 2000).unwrap();
    let k = l1_kernel(0.999, &mesh).unwrap();
    let u = solve(&k, &FodeProblem::affine(-1.0, 0.0, 1.0)).unwrap();
    for (t, v) in u.t.iter().zip(&u.u) {
        assert!((v - (-t).exp()).abs() <= 0.02 * (-t).exp(), "t={t}");
    }
}

#[test]
fn affine_trajectory_sits_between_exact_and_relaxed_solution() {
    let alpha = 0.6;
    let mesh = graded_mesh(3.0, 80, 2.0).unwrap();
    let k = l1_kernel(alpha, &mesh).unwrap();
    let (beta, c, u0) = (-1.5, 0.6, 2.0);
    let u = solve(&k, &FodeProblem::affine(beta, c, u0)).unwrap().u;
    let rho = 1.0 / (1.0 - alpha);
    let e = MittagLeffler::classical(alpha).unwrap();
    let lam = -beta;
    for (n, &t) in mesh.points().iter().enumerate() {
        let ta = t.powf(alpha);
        let lo = linear_fode_exact(alpha, beta, c, u0, t).unwrap();
        let hi = (u0 - c / lam) * e.eval(-lam * ta / rho) + c / lam;
        assert!(u[n] >= lo - 1e-12 && u[n] <= hi + 1e-12, "n={n}");
    }
}

#[test]
fn crank_nicolson_reaches_high_order_on_smooth_solution() {
    // u = t² solves D^α u = 2 t^{2-α}/Γ(3-α) - u + t²
    let alpha = 0.7;
    let g = libm::tgamma(3.0 - alpha);
    let mut errs = Vec::new();
    for n in [16, 32, 64] {
        let mesh = graded_mesh(1.0, n, 2.0).unwrap();
        let k = cn_l1plus_kernel(alpha, &mesh).unwrap();
        let p = FodeProblem::new(
            Rhs::general(move |t, u| 2.0 * t.powf(2.0 - alpha) / g - u + t * t),
            0.0,
        );
        let u = solve(&k, &p).unwrap();
        let err = u.t.iter().zip(&u.u).map(|(t, v)| (v - t * t).abs()).fold(0.0, f64::max);
        errs.push(err);
    }
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.5, "errors {errs:?}");
    }
}
