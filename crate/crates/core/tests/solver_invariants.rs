use nalgebra::DVector;

use urom::benchmarks::{merit_lower_bound, parse_instance, BenchmarkInstance};
use urom::solver::{check_telescoped_guarantee, run, trace_csv, RunResult, SolverConfig, Status};
use urom::step::c_p_constant;

struct Case {
    spec: &'static str,
    p: usize,
    delta: f64,
    epsilon: f64,
}

const CASES: [Case; 7] = [
    Case { spec: "matrix_game:game=pennies", p: 1, delta: 0.0, epsilon: 1e-3 },
    Case { spec: "matrix_game:game=rps", p: 1, delta: 0.0, epsilon: 1e-3 },
    Case { spec: "affine:n=4", p: 1, delta: 1e-6, epsilon: 0.0 },
    Case { spec: "power_potential:n=10,nu=1,set=ball:D=1", p: 1, delta: 1e-5, epsilon: 0.0 },
    Case { spec: "power_potential:n=5,nu=0.5,set=ball:D=1", p: 1, delta: 0.0, epsilon: 1e-4 },
    Case { spec: "cubic_field:n=5,set=ball:D=1", p: 2, delta: 1e-6, epsilon: 0.0 },
    Case { spec: "holder_mixture:n=4,set=ball:D=1", p: 1, delta: 0.0, epsilon: 1e-4 },
];

fn solve(case: &Case) -> (BenchmarkInstance, SolverConfig, RunResult) {
    let inst = parse_instance(case.spec).unwrap();
    let cfg = SolverConfig {
        p: case.p,
        delta: case.delta,
        epsilon: case.epsilon,
        x0: Some(inst.start.clone()),
        ..Default::default()
    };
    let res = run(&inst.problem, &cfg).unwrap();
    (inst, cfg, res)
}

#[test]
fn runs_terminate_with_a_stopping_test() {
    for case in &CASES {
        let (_, _, res) = solve(case);
        assert!(matches!(res.status, Status::StoppedOnDelta | Status::StoppedOnEpsilon), "{}: {:?}", case.spec, res.status);
        if case.epsilon > 0.0 {
            assert!(res.final_certificate.unwrap() <= case.epsilon, "{}", case.spec);
        }
    }
}

#[test]
fn weights_are_positive_and_accumulate() {
    for case in &CASES {
        let (_, _, res) = solve(case);
        let mut last_sum = 0.0;
        for (i, rec) in res.trace.iter().enumerate() {
            let terminal = i + 1 == res.trace.len() && res.status == Status::StoppedOnDelta;
            if terminal {
                assert!(rec.a.is_none());
                continue;
            }
            let a = rec.a.unwrap_or_else(|| panic!("{}: step {} has no weight", case.spec, rec.k));
            assert!(a > 0.0);
            let sum = rec.a_sum.unwrap();
            assert!(sum > last_sum);
            last_sum = sum;
        }
    }
}

#[test]
fn accepted_steps_satisfy_the_progress_inequality() {
    for case in &CASES {
        let (inst, cfg, res) = solve(case);
        let space = &inst.problem.space;
        let mut v = res.x0.clone();
        for rec in &res.trace {
            let norm = space.dual_norm(&rec.v_psi);
            if norm > res.delta_eff {
                let lhs = rec.v_psi.dot(&(&v - &rec.x));
                let pf = cfg.p as f64;
                let rhs = c_p_constant(cfg.p) * (norm.powf(pf + 2.0) / rec.m_plus).powf(1.0 / (pf + 1.0));
                assert!(lhs >= rhs * (1.0 - 1e-12), "{} k={}: {lhs} < {rhs}", case.spec, rec.k);
                assert!((lhs - rec.progress_lhs).abs() <= 1e-12 * lhs.abs().max(1e-300));
            }
            if let Some(next) = &rec.v_next {
                v = next.clone();
            }
        }
    }
}

#[test]
fn regularization_stays_bounded() {
    for case in &CASES {
        let (inst, cfg, res) = solve(case);
        let Some(sigma) = inst.sigma(cfg.p) else { continue };
        let delta = res.delta_eff;
        let inv = sigma.inverse(delta / 5.0).unwrap().r;
        let threshold = 0.4 * delta / inv.powi(cfg.p as i32 + 1);
        let bound = 2.0 * threshold.max(res.m0);
        assert!(res.max_m_plus() <= bound * (1.0 + 1e-12), "{}: {} > {bound}", case.spec, res.max_m_plus());
    }
}

#[test]
fn certificate_dominates_sampled_merit() {
    for case in &CASES {
        let (inst, _, res) = solve(case);
        let prob = &inst.problem;
        let diameter = prob.diameter().unwrap();
        // inner solves are exact only up to their residual tolerance
        let slack = 1e-8 * diameter + 1e-9;
        for rec in &res.trace {
            if let (Some(cert), Some(x_bar)) = (rec.certificate, &rec.x_bar) {
                let low = merit_lower_bound(prob, x_bar, 200, rec.k as u64).unwrap();
                assert!(cert >= low - slack, "{} k={}: {cert} < {low}", case.spec, rec.k);
            }
            let low = merit_lower_bound(prob, &rec.x, 200, rec.k as u64).unwrap();
            assert!(rec.norm_v_psi >= (low - slack) / diameter, "{} k={}", case.spec, rec.k);
        }
        let low = merit_lower_bound(prob, res.output_point(), 500, 0).unwrap();
        assert!(res.final_certificate.unwrap() >= low - slack, "{}", case.spec);
    }
}

#[test]
fn telescoped_guarantee_replays() {
    for case in &CASES {
        let (inst, _, res) = solve(case);
        let x_star = inst.known.x_star.clone().unwrap();
        let tol = 1e-8 * inst.problem.space.distance(&res.x0, &x_star).powi(2);
        let rep = check_telescoped_guarantee(&res.x0, &res.trace, &x_star, &inst.problem.space, tol);
        assert!(rep.passed, "{}: {rep:?}", case.spec);
        if case.spec.starts_with("affine") || case.spec.starts_with("matrix_game") {
            assert!(rep.terms == 0 || rep.min_term >= -1e-10, "{}: {}", case.spec, rep.min_term);
        }
    }
}

#[test]
fn identical_configs_give_identical_traces() {
    for case in &CASES[..4] {
        let (_, _, a) = solve(case);
        let (_, _, b) = solve(case);
        assert_eq!(trace_csv(&a.trace), trace_csv(&b.trace));
        assert_eq!(a.x_last, b.x_last);
    }
}

#[test]
fn zero_iteration_cap_reports_max_iters() {
    let inst = parse_instance("power_potential:n=3").unwrap();
    let cfg = SolverConfig { max_outer_iters: 0, x0: Some(inst.start.clone()), ..Default::default() };
    let res = run(&inst.problem, &cfg).unwrap();
    assert_eq!(res.status, Status::MaxIters);
    assert_eq!(res.iterations(), 0);
    assert_eq!(res.x_last, inst.start);
    let empty = check_telescoped_guarantee(&res.x0, &res.trace, &DVector::zeros(3), &inst.problem.space, 0.0);
    assert!(empty.passed && empty.terms == 0);
}
