use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use urom::benchmarks::parse_instance;
use urom::oracle::AffineOperator;
use urom::problem::taylor_model;
use urom::step::{alpha_from, solve_inner_vi, solve_step, verify_progress, StepParams};
use urom::{CompositeVI, EuclideanSpace, FeasibleSet};

fn vector(n: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-2.0f64..2.0, n).prop_map(DVector::from_vec)
}

fn weights(n: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(0.1f64..5.0, n).prop_map(DVector::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norm_duality(w in weights(4), x in vector(4), s in vector(4)) {
        let space = EuclideanSpace::diagonal(w).unwrap();
        prop_assert!(s.dot(&x).abs() <= space.norm(&x) * space.dual_norm(&s) * (1.0 + 1e-12) + 1e-15);
        let bx = space.apply(&x);
        prop_assert!((space.dual_norm(&bx) - space.norm(&x)).abs() <= 1e-12 * (1.0 + space.norm(&x)));
    }

    #[test]
    fn projections_are_idempotent_and_optimal(
        w in weights(3), y in vector(3), z in prop::collection::vec(0.0f64..1.0, 3),
    ) {
        let space = EuclideanSpace::diagonal(w).unwrap();
        let sets = [
            FeasibleSet::ball(DVector::from_vec(vec![0.2, -0.1, 0.0]), 0.7).unwrap(),
            FeasibleSet::boxed(DVector::from_element(3, -0.5), DVector::from_element(3, 0.25)).unwrap(),
            FeasibleSet::simplex(3).unwrap(),
        ];
        for set in &sets {
            let p = set.project(&space, &y).unwrap();
            prop_assert!(set.contains(&space, &p, 1e-10));
            let again = set.project(&space, &p).unwrap();
            prop_assert!((&again - &p).norm() <= 1e-10);
            // variational characterization: ⟨B(y − p), q − p⟩ ≤ 0 for q ∈ Q
            let q = set.project(&space, &DVector::from_column_slice(&z)).unwrap();
            prop_assert!(space.apply(&(&y - &p)).dot(&(&q - &p)) <= 1e-9);
            // the LMO vertex is no worse than any feasible point
            let vertex = set.lmo(&space, &y).unwrap();
            prop_assert!(y.dot(&vertex) <= y.dot(&q) + 1e-12);
        }
    }

    #[test]
    fn affine_inner_solution_is_exact(x in vector(3), beta in 0.01f64..10.0) {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, -2.0, 0.5, 1.0, 0.0, -1.0, 0.0]);
        let oracle = AffineOperator::new(a.clone(), DVector::from_vec(vec![0.1, 0.2, -0.3])).unwrap();
        let space = EuclideanSpace::identity(3).unwrap();
        let prob = CompositeVI::new(space, FeasibleSet::whole_space(3, None).unwrap(), Arc::new(oracle)).unwrap();
        let y = solve_inner_vi(&prob, &x, beta, 1, 1e-10, 100).unwrap().y;
        let residual = prob.oracle.eval(&x) + &a * (&y - &x) + (&y - &x) * beta;
        prop_assert!(residual.norm() <= 1e-9);
    }

    #[test]
    fn cubic_step_invariants(x in vector(4), m in 0.5f64..20.0) {
        let inst = parse_instance("cubic_field:n=4,set=ball:D=2").unwrap();
        let prob = &inst.problem;
        let x = prob.set.project(&prob.space, &x).unwrap();
        let delta = 1e-3;
        for p in [1usize, 2] {
            let params = StepParams::new(p, alpha_from(m, delta, p), m, delta);
            let step = solve_step(prob, &x, &params).unwrap();
            prop_assert!(prob.set.contains(&prob.space, &step.x_plus, 1e-10));
            prop_assert!(step.bracket_ok);
            prop_assert!(step.inner_residual <= params.tol_inner);
            let tol_r = 1e-10 * step.trajectory[0].1.max(1.0);
            prop_assert!((step.r - step.r_fixed).abs() <= 2.0 * tol_r, "{} vs {}", step.r, step.r_fixed);

            let remainder = prob.oracle.eval(&step.x_plus) - taylor_model(prob.oracle.as_ref(), &x, &step.x_plus, p).unwrap();
            let d = &step.x_plus - &x;
            let lhs = prob.space.dual_norm(&(&step.v_psi + prob.space.apply(&d) * step.beta));
            let rem = prob.space.dual_norm(&remainder);
            prop_assert!((lhs - rem).abs() <= 1e-10 * rem.max(lhs) + 1e-300);
            let sigma = inst.sigma(p).unwrap();
            prop_assert!(rem <= sigma.sigma(step.r).unwrap() + 1e-8);
        }
    }

    #[test]
    fn second_order_progress_when_m_is_large(x in vector(3)) {
        // σ̂₁(r) = r³, so M ≥ 2 satisfies the step lemma's condition for every δ
        let inst = parse_instance("cubic_field:n=3,set=ball:D=2").unwrap();
        let prob = &inst.problem;
        let x = prob.set.project(&prob.space, &x).unwrap();
        let (m, delta) = (2.0, 1e-3);
        let step = solve_step(prob, &x, &StepParams::new(2, alpha_from(m, delta, 2), m, delta)).unwrap();
        let check = verify_progress(prob, &step, &x, m, delta, 2);
        if check.norm_v_psi >= delta {
            prop_assert_eq!(check.progress_ok, Some(true));
            prop_assert_eq!(check.radius_ok, Some(true));
        }
    }
}

#[test]
fn radius_is_nonincreasing_over_a_beta_sweep() {
    let inst = parse_instance("power_potential:n=5,nu=0.5,set=ball:D=2").unwrap();
    let prob = &inst.problem;
    let x = inst.start.clone();
    let mut last = f64::INFINITY;
    for k in -8..=4 {
        let beta = 10f64.powf(k as f64 / 2.0);
        let y = solve_inner_vi(prob, &x, beta, 1, 1e-12, 100_000).unwrap().y;
        let r = prob.space.distance(&x, &y);
        assert!(r <= last + 1e-10, "beta={beta}: {r} > {last}");
        last = r;
    }
}

#[test]
fn tiny_m_on_curved_problem_fails_progress() {
    let inst = parse_instance("cubic_field:n=1,skew=0,set=box:lo=-1,hi=1").unwrap();
    let prob = &inst.problem;
    let x = DVector::from_element(1, 0.8);
    let (m, delta) = (1e-8, 1e-3);
    let step = solve_step(prob, &x, &StepParams::new(1, alpha_from(m, delta, 1), m, delta)).unwrap();
    let check = verify_progress(prob, &step, &x, m, delta, 1);
    assert_eq!(check.progress_ok, Some(false));
    assert!(!check.accepted());
}
