use approx::assert_relative_eq;
use fracgrid_core::kernel::{
    heaviside_kernel, identity_kernel, invert, left_complementary, pseudo_convolve, resolvent,
    right_complementary,
};
use fracgrid_core::schemes::{certify_kernel, integral_form_scheme, DEFAULT_LAMBDAS};
use fracgrid_core::solver::solve_integral_form;
use fracgrid_core::*;
use proptest::prelude::*;

fn kernel_strategy(max_n: usize, diag_shift: f64) -> impl Strategy<Value = TriKernel> {
    (1..=max_n).prop_flat_map(move |n| {
        prop::collection::vec(-1.0f64..1.0, n * (n + 1) / 2).prop_map(move |v| {
            let mut it = v.into_iter();
            let rows = (1..=n)
                .map(|r| {
                    (1..=r)
                        .map(|j| it.next().unwrap() + if j == r { diag_shift } else { 0.0 })
                        .collect()
                })
                .collect();
            TriKernel::from_rows(rows).unwrap()
        })
    })
}

fn mesh_strategy(max_n: usize, t_max: f64) -> impl Strategy<Value = Mesh> {
    (1..=max_n, 1.0f64..50.0, 0.1f64..t_max, any::<u64>())
        .prop_map(|(n, ratio, t, seed)| random_mesh(t, n, ratio, seed).unwrap())
}

fn resize(k: &TriKernel, n: usize) -> TriKernel {
    TriKernel::from_fn(n, |r, j| if r <= k.n_rows() { k.at(r, j) } else { f64::from(r == j) })
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 100,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn pseudo_convolution_is_associative(
        a in kernel_strategy(32, 0.0),
        b in kernel_strategy(32, 0.0),
        c in kernel_strategy(32, 0.0),
    ) {
        let n = a.n_rows().min(b.n_rows()).min(c.n_rows());
        let (a, b, c) = (resize(&a, n), resize(&b, n), resize(&c, n));
        let l = pseudo_convolve(&pseudo_convolve(&a, &b).unwrap(), &c).unwrap();
        let r = pseudo_convolve(&a, &pseudo_convolve(&b, &c).unwrap()).unwrap();
        prop_assert!(l.max_abs_diff(&r).unwrap() <= 1e-12 * l.max_abs().max(1.0));
    }

    #[test]
    fn inverse_is_two_sided(a in kernel_strategy(32, 3.0)) {
        let inv = invert(&a).unwrap();
        let id = identity_kernel(a.n_rows());
        prop_assert!(pseudo_convolve(&a, &inv).unwrap().max_abs_diff(&id).unwrap() < 1e-12);
        prop_assert!(pseudo_convolve(&inv, &a).unwrap().max_abs_diff(&id).unwrap() < 1e-12);
    }

    #[test]
    fn complementary_kernels_recover_heaviside(a in kernel_strategy(24, 3.0)) {
        let l = heaviside_kernel(a.n_rows());
        let cr = right_complementary(&a).unwrap();
        let cl = left_complementary(&a).unwrap();
        prop_assert!(pseudo_convolve(&a, &cr).unwrap().max_abs_diff(&l).unwrap() < 1e-12);
        prop_assert!(pseudo_convolve(&cl, &a).unwrap().max_abs_diff(&l).unwrap() < 1e-12);
    }

    #[test]
    fn resolvent_identity(mesh in mesh_strategy(32, 5.0), alpha in 0.05f64..0.95, log_l in -3.0f64..3.0) {
        let lambda = 10f64.powf(log_l);
        let a = integral_form_kernel(alpha, &mesh).unwrap();
        let r = resolvent(&a, lambda).unwrap();
        let lhs = r.sub(&pseudo_convolve(&r, &a).unwrap().scaled(-lambda)).unwrap();
        prop_assert!(lhs.max_abs_diff(&a.scaled(lambda)).unwrap() < 1e-12 * lambda * a.max_abs().max(1.0));
    }

    #[test]
    fn l1_differential_and_integral_forms_agree(mesh in mesh_strategy(32, 1.0), alpha in 0.05f64..0.95, beta in -0.8f64..0.5) {
        let k = l1_kernel(alpha, &mesh).unwrap();
        let p = FodeProblem::new(Rhs::general(move |t, u| beta * u + 0.2 * (u - t).cos()), 0.7)
            .with_lipschitz(beta.abs() + 0.2);
        let d = solve(&k, &p).unwrap();
        let s = solve_integral_form(&k.integral_kernel().unwrap(), &mesh, &p, 1.0).unwrap();
        for (x, y) in d.u.iter().zip(&s.u) {
            prop_assert!((x - y).abs() <= 1e-10 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn integral_scheme_forms_agree(mesh in mesh_strategy(32, 1.0), alpha in 0.05f64..0.95, beta in -0.8f64..0.5) {
        let k = integral_form_scheme(alpha, &mesh).unwrap();
        let p = FodeProblem::affine(beta, 0.3, 1.0);
        let d = solve(&k, &p).unwrap();
        let s = solve_integral_form(&integral_form_kernel(alpha, &mesh).unwrap(), &mesh, &p, 1.0).unwrap();
        for (x, y) in d.u.iter().zip(&s.u) {
            prop_assert!((x - y).abs() <= 1e-10 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn integral_kernel_monotone_in_n_and_telescopes(mesh in mesh_strategy(32, 5.0), alpha in 0.05f64..0.95) {
        let a = integral_form_kernel(alpha, &mesh).unwrap();
        let g = libm::tgamma(1.0 + alpha);
        for n in 1..=a.n_rows() {
            let sum: f64 = a.row(n).iter().sum();
            prop_assert!((sum - mesh.t(n).powf(alpha) / g).abs() < 1e-12 * sum);
            if n > 1 {
                for j in 1..n {
                    // a_{j-1}^{n-1} >= a_j^n
                    prop_assert!(a.entry(n - 1, j - 1) >= a.entry(n, j) * (1.0 - 1e-13));
                }
            }
        }
    }

    #[test]
    fn l1_rows_positive_and_nonincreasing_away_from_diagonal(mesh in mesh_strategy(48, 5.0), alpha in 0.05f64..0.95) {
        let k = l1_kernel(alpha, &mesh).unwrap();
        for n in 1..=mesh.len() {
            for m in 0..n {
                prop_assert!(k.c.entry(n, m) > 0.0);
                if m > 0 {
                    prop_assert!(k.c.entry(n, m) <= k.c.entry(n, m - 1));
                }
            }
        }
    }

    #[test]
    fn integral_kernel_is_completely_positive(mesh in mesh_strategy(32, 5.0), alpha in 0.05f64..0.95) {
        let rep = certify_kernel(&integral_form_kernel(alpha, &mesh).unwrap(), &DEFAULT_LAMBDAS).unwrap();
        prop_assert!(rep.is_completely_positive && rep.tests_agree);
    }

    #[test]
    fn convexity_inequality_for_squares(
        mesh in mesh_strategy(32, 5.0),
        alpha in 0.05f64..0.95,
        raw in prop::collection::vec(-2.0f64..2.0, 33),
    ) {
        let k = l1_kernel(alpha, &mesh).unwrap();
        let u = &raw[..=mesh.len()];
        let sq: Vec<f64> = u.iter().map(|x| x * x).collect();
        let d_sq = k.apply_derivative(&sq).unwrap();
        let d_u = k.apply_derivative(u).unwrap();
        for n in 1..=mesh.len() {
            let rhs = 2.0 * u[n] * d_u[n - 1];
            prop_assert!(d_sq[n - 1] <= rhs + 1e-10 * (1.0 + rhs.abs()));
        }
    }
}

#[test]
fn scaled_kernel_doubles_nu_and_rho1() {
    let mesh = graded_mesh(1.0, 12, 2.0).unwrap();
    let mut k = l1_kernel(0.4, &mesh).unwrap();
    let (nu, rho1) = fracgrid_core::schemes::estimate_nu_rho1(&k).unwrap();
    assert_relative_eq!(nu, 1.0, max_relative = 1e-12);
    assert_relative_eq!(rho1, 1.0, max_relative = 1e-12);
    k.c = k.c.scaled(2.0);
    let (nu, rho1) = fracgrid_core::schemes::estimate_nu_rho1(&k).unwrap();
    assert_relative_eq!(nu, 2.0, max_relative = 1e-12);
    assert_relative_eq!(rho1, 2.0, max_relative = 1e-12);
}

#[test]
fn hand_built_kernel_with_positive_offdiagonal_is_rejected() {
    let b = TriKernel::from_rows(vec![vec![1.0], vec![0.5, 1.0]]).unwrap();
    let rep = certify_kernel(&invert(&b).unwrap(), &DEFAULT_LAMBDAS).unwrap();
    assert!(!rep.is_completely_positive);
}

#[test]
fn crank_nicolson_kernel_certifies_at_high_order() {
    let mesh = uniform_mesh(1.0, 16).unwrap();
    let k = cn_l1plus_kernel(0.9, &mesh).unwrap();
    let rep = certify(&k, &DEFAULT_LAMBDAS).unwrap();
    assert!(rep.is_completely_positive && rep.tests_agree);
    assert_eq!(rep.chi_monotone, Some(true));
    let (nu, rho1) = (rep.nu.unwrap(), rep.rho1.unwrap());
    assert!(nu >= 1.0 - 1e-12 && rho1 <= 2.0 + 1e-12 && nu <= rho1);
}
