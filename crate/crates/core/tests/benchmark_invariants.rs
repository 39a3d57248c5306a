use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use urom::benchmarks::{parse_instance, weak_solution_margin, BenchmarkInstance};
use urom::curvature::{gcb_estimate, CurvatureProfile, GcbOptions, MetricKind, SamplingRegion};
use urom::oracle::finite_difference_error;

const SPECS: [&str; 7] = [
    "zero:n=3",
    "affine:n=4",
    "matrix_game:game=pennies",
    "matrix_game:game=random,n=3,m=4,seed=11",
    "power_potential:n=6,nu=0.5,set=ball:D=2",
    "cubic_field:n=5,set=ball:D=1",
    "holder_mixture:n=4,set=ball:D=1",
];

fn instances() -> Vec<BenchmarkInstance> {
    SPECS.iter().map(|s| parse_instance(s).unwrap()).collect()
}

#[test]
fn finite_difference_jacobians() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for inst in instances() {
        let (space, set) = (&inst.problem.space, &inst.problem.set);
        for _ in 0..50 {
            let x = set.sample(space, &mut rng).unwrap();
            let h = space.random_unit(&mut rng);
            let err = finite_difference_error(inst.problem.oracle.as_ref(), space, &x, &h);
            assert!(err <= 1e-5, "{}: {err}", inst.name);
        }
    }
}

#[test]
fn monotone_instances_are_monotone_on_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for inst in instances() {
        let prob = &inst.problem;
        assert!(prob.oracle.is_monotone(), "{}", inst.name);
        for _ in 0..10_000 {
            let x = prob.set.sample(&prob.space, &mut rng).unwrap();
            let y = prob.set.sample(&prob.space, &mut rng).unwrap();
            let gap = (prob.oracle.eval(&y) - prob.oracle.eval(&x)).dot(&(&y - &x));
            assert!(gap >= -1e-10, "{}: {gap}", inst.name);
        }
    }
}

#[test]
fn known_solutions_are_weak_solutions() {
    for (i, inst) in instances().into_iter().enumerate() {
        let x_star = inst.known.x_star.as_ref().unwrap_or_else(|| panic!("{} has no solution", inst.name));
        let margin = weak_solution_margin(&inst.problem, x_star, 1000, i as u64).unwrap();
        assert!(margin >= -1e-8, "{}: {margin}", inst.name);
    }
}

#[test]
fn stored_holder_constants_hold_on_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for inst in instances() {
        let prob = &inst.problem;
        let (space, set) = (&prob.space, &prob.set);
        for p in [1usize, 2] {
            let terms: Vec<(f64, f64)> =
                inst.known.holder.iter().filter(|t| t.0 == p).map(|&(_, nu, h)| (nu, h)).collect();
            if terms.is_empty() {
                continue;
            }
            for _ in 0..10_000 {
                let x = set.sample(space, &mut rng).unwrap();
                let y = set.sample(space, &mut rng).unwrap();
                let dir = space.random_unit(&mut rng);
                let gap = if p == 1 {
                    prob.oracle.jvp(&x, &dir) - prob.oracle.jvp(&y, &dir)
                } else {
                    let other = space.random_unit(&mut rng);
                    prob.oracle.d2vp(&x, &dir, &other).unwrap() - prob.oracle.d2vp(&y, &dir, &other).unwrap()
                };
                let dist = space.distance(&x, &y);
                let bound = terms.iter().map(|&(nu, h)| h * dist.powf(nu)).sum::<f64>() + 1e-9;
                assert!(space.dual_norm(&gap) <= bound, "{} (p={p}): {} > {bound}", inst.name, space.dual_norm(&gap));
            }
        }
    }
}

#[test]
fn analytic_kappa_dominates_empirical_profile() {
    for inst in instances() {
        let Some(form) = inst.known.kappa.clone() else { continue };
        let prob = &inst.problem;
        let diameter = prob.diameter().unwrap();
        let grid = CurvatureProfile::uniform_grid(0.5 * diameter, 8);
        let region = SamplingRegion::in_set(prob.set.clone(), prob.space.clone());
        let oracle = prob.oracle.clone();
        let map = move |x: &DVector<f64>| oracle.eval(x);
        let opts = GcbOptions { n_pairs: 64, seed: 4, ..Default::default() };
        let profile = gcb_estimate(
            &map,
            &MetricKind::primal(&prob.space),
            &MetricKind::dual(&prob.space),
            &region,
            &grid,
            &opts,
        )
        .unwrap();
        for (&r, &k) in profile.r_grid().iter().zip(profile.kappa_values()) {
            assert!(k <= form.eval(r) * (1.0 + 1e-9) + 1e-12, "{}: r={r}, {k} > {}", inst.name, form.eval(r));
        }
    }
}

#[test]
fn analytic_jacobian_kappa_dominates_empirical_profile() {
    let inst = parse_instance("cubic_field:n=3,set=ball:D=1").unwrap();
    let prob = &inst.problem;
    let n = prob.dim();
    let oracle = prob.oracle.clone();
    let map = move |x: &DVector<f64>| {
        let jac: DMatrix<f64> = oracle.jacobian(x);
        DVector::from_column_slice(jac.as_slice())
    };
    let grid = CurvatureProfile::uniform_grid(0.9, 6);
    let region = SamplingRegion::in_set(prob.set.clone(), prob.space.clone());
    let opts = GcbOptions { n_pairs: 64, seed: 5, ..Default::default() };
    let profile =
        gcb_estimate(&map, &MetricKind::primal(&prob.space), &MetricKind::operator(&prob.space), &region, &grid, &opts)
            .unwrap();
    let form = inst.known.kappa_jacobian.unwrap();
    for (&r, &k) in profile.r_grid().iter().zip(profile.kappa_values()) {
        assert!(k <= form.eval(r) * (1.0 + 1e-9), "r={r}: {k}");
    }
    assert_eq!(n * n, map(&DVector::zeros(n)).len());
}
