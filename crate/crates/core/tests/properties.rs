use implicit_stability::implicit::ImplicitSystem;
use implicit_stability::nestdiff::{self, fd_jacobian};
use implicit_stability::numkernel::{
    contract_mode1, contract_mode2, lu_solve, lu_solve_transposed, outer, rel_error, svd_cond, Matrix, Tensor3,
    Vector,
};
use implicit_stability::problems::Registry;
use implicit_stability::solvers::{perturb, Direction, PerturbationSpec};
use implicit_stability::stability::predict_tangent_linear;
use proptest::collection::vec;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    vec(-1.0f64..1.0, rows * cols).prop_map(move |d| Matrix::new(rows, cols, d).unwrap())
}

fn vector(len: usize) -> impl Strategy<Value = Vector> {
    vec(-1.0f64..1.0, len).prop_map(|d| Vector::new(d).unwrap())
}

fn nonzero_matrix() -> impl Strategy<Value = Matrix> {
    (1usize..6, 1usize..6)
        .prop_flat_map(|(r, c)| matrix(r, c))
        .prop_filter("nonzero", |m| m.max_abs() > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lu_solve_has_small_backward_error(
        (a, b) in (1usize..=50).prop_flat_map(|n| (matrix(n, n), vector(n)))
    ) {
        let n = a.rows();
        // Shift towards the identity to keep the matrix well conditioned.
        let a = &a + &Matrix::identity(n).scale(2.0 * (n as f64).sqrt());
        prop_assume!(svd_cond(&a) <= 1e3);
        let x = lu_solve(&a, &b).unwrap();
        let r = (&(&a * &x) - &b).norm();
        let scale = a.frobenius_norm() * x.norm() + b.norm();
        prop_assert!(r <= 1e-10 * scale, "residual {r} scale {scale}");

        let y = lu_solve_transposed(&a, &b).unwrap();
        let r = (&a.transpose().mul_vec(&y).unwrap() - &b).norm();
        prop_assert!(r <= 1e-10 * (a.frobenius_norm() * y.norm() + b.norm()));
    }

    #[test]
    fn kappa_is_scale_invariant(m in nonzero_matrix(), c in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3]) {
        let k = svd_cond(&m);
        let kc = svd_cond(&m.scale(c));
        if k.is_finite() {
            prop_assert!((kc - k).abs() <= 1e-10 * k, "{k} vs {kc}");
        }
    }

    #[test]
    fn kappa_is_at_least_one(m in nonzero_matrix()) {
        prop_assert!(svd_cond(&m) >= 1.0);
    }

    #[test]
    fn contractions_match_triple_loops(
        (t, w, z) in (1usize..=5, 1usize..=5, 1usize..=5).prop_flat_map(|(a, b, c)| (
            vec(-1.0f64..1.0, a * b * c).prop_map(move |d| Tensor3::new((a, b, c), d).unwrap()),
            vector(b),
            vector(a),
        ))
    ) {
        let (d1, d2, d3) = t.dims();
        let m2 = contract_mode2(&t, &w).unwrap();
        let m1 = contract_mode1(&t, &z).unwrap();
        for i in 0..d1 {
            for k in 0..d3 {
                let mut s = 0.0;
                for j in 0..d2 {
                    s += t[(i, j, k)] * w[j];
                }
                prop_assert!((m2[(i, k)] - s).abs() <= 1e-14);
            }
        }
        for j in 0..d2 {
            for k in 0..d3 {
                let mut s = 0.0;
                for i in 0..d1 {
                    s += t[(i, j, k)] * z[i];
                }
                prop_assert!((m1[(j, k)] - s).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn outer_product_is_associative(
        (u, v, w) in (1usize..8, 1usize..8).prop_flat_map(|(n, m)| (vector(n), vector(m), vector(m)))
    ) {
        let lhs = outer(&u, &v).mul_vec(&w).unwrap();
        let rhs = u.scale(v.dot(&w));
        let scale = u.norm() * v.norm() * w.norm();
        prop_assert!((&lhs - &rhs).norm() <= 1e-13 * scale.max(1e-300));
    }

    #[test]
    fn perturbation_has_requested_relative_error(
        x in vector(4).prop_filter("nonzero", |x| x.norm() > 1e-3),
        eps in 1e-8f64..1e-1,
        seed in any::<u64>(),
    ) {
        let xp = perturb(&x, &PerturbationSpec { epsilon: eps, direction: Direction::Random { seed } }).unwrap();
        prop_assert!((rel_error(&xp, &x).unwrap() - eps).abs() <= 1e-12 * eps);
    }

    #[test]
    fn prediction_is_linear_in_delta_x(a_diag in vec(0.1f64..10.0, 3), dx in 1e-8f64..1e-2) {
        let a = Matrix::diag(&a_diag);
        let ad = Matrix::identity(3);
        let one = predict_tangent_linear(&a, &ad, dx).value;
        let two = predict_tangent_linear(&a, &ad, 2.0 * dx).value;
        prop_assert!((two - 2.0 * one).abs() <= 1e-14 * two);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn nl2d_jacobian_matches_finite_differences(
        x in vec(0.5f64..3.0, 2), p in vec(-5.0f64..5.0, 2)
    ) {
        let reg = Registry::builtin();
        let nl = reg.get("nl2d").unwrap();
        let r = nl.residual().unwrap();
        let (x, p) = (Vector::new(x).unwrap(), Vector::new(p).unwrap());
        let ad = nestdiff::jacobian_x(r, &x, &p).unwrap();
        let fd = fd_jacobian(r, &x, &p, nestdiff::default_step(&x)).unwrap();
        prop_assert!(rel_error(&fd, &ad).unwrap() <= 1e-6);
    }

    #[test]
    fn second_derivative_tensors_are_symmetric(x in vec(0.5f64..3.0, 2), p in vec(0.5f64..5.0, 2)) {
        let reg = Registry::builtin();
        let (x, p) = (Vector::new(x).unwrap(), Vector::new(p).unwrap());
        let t = nestdiff::tensor_xx(reg.get("nl2d").unwrap().residual().unwrap(), &x, &p).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    prop_assert_eq!(t[(i, j, k)], t[(i, k, j)]);
                }
            }
        }
        let f = reg.get("quad_nd").unwrap();
        let third = nestdiff::third_xxx(f.objective().unwrap(), &x, &p).unwrap();
        prop_assert!(third.is_zero());
    }

    #[test]
    fn tangent_and_adjoint_are_dual(pd in vec(-1.0f64..1.0, 2), xb in vec(-1.0f64..1.0, 2)) {
        let reg = Registry::builtin();
        let (pd, xb) = (Vector::new(pd).unwrap(), Vector::new(xb).unwrap());
        for name in ["nl2d", "quad_nd", "linsys_param"] {
            let spec = reg.get(name).unwrap();
            let x = implicit_stability::solvers::reference_solution(
                &spec, &spec.default_p, Default::default()).unwrap();
            let sys = ImplicitSystem::assemble(spec.root_function(), &x, &spec.default_p).unwrap();
            let lhs = xb.dot(&sys.tangent(&pd).unwrap().x_dot);
            let rhs = sys.adjoint(&xb).unwrap().p_bar.dot(&pd);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1e-300));
        }
    }
}
