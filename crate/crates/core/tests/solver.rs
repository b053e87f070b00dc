use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use multilayer_vi::assembly::VIProblem;
use multilayer_vi::problems::{canonical_config, random_small_instance, Manufactured};
use multilayer_vi::solver::{
    estimate_contraction, feasible_start, fixed_point_solve, solve_inner_tresca, InnerMethod, SolverConfig,
    SolverError, SolverReport,
};
use multilayer_vi::verification::properties::random_field;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dist(p: &VIProblem, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    p.energy_norm(&d)
}

#[test]
fn zero_forcing_gives_zero() {
    let mut cfg = canonical_config();
    cfg.loads.body = vec![[0.0, 0.0]; 3];
    cfg.loads.traction = multilayer_vi::config::TractionConfig::Uniform { value: [0.0, 0.0] };
    let mesh = cfg.build_mesh(Some(4)).unwrap();
    let p = cfg.build_problem(&mesh).unwrap();
    let (u, rep) = fixed_point_solve(&p, &cfg.solver, &p.zero_field()).unwrap();
    assert!(u.iter().all(|v| *v == 0.0));
    assert_eq!(rep.outer_iters, 1);
    let (w, _) = solve_inner_tresca(&p, &p.zero_field(), &cfg.solver).unwrap();
    assert!(w.iter().all(|v| *v == 0.0));
}

/// Damped Newton on `1/2 u.K u - f.u + sum w kappa/2 ((-u_y)_+)^2`, the smooth
/// energy whose stationarity condition is the frictionless problem with a
/// linear foundation.
fn smooth_newton(p: &VIProblem, kappa: f64) -> Vec<f64> {
    let k = p.stiffness.as_ref().unwrap();
    let free = p.dofs.free_dofs();
    let mut u = p.zero_field();
    let energy = |u: &[f64]| {
        let mut e = 0.5 * k.bilinear(u, u) - p.load.iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
        for n in &p.foundation_nodes {
            let r = (-u[2 * n.node + 1]).max(0.0);
            e += n.weight * 0.5 * kappa * r * r;
        }
        e
    };
    for _ in 0..100 {
        let ku = k.matvec(&u);
        let mut g: Vec<f64> = ku.iter().zip(&p.load).map(|(a, b)| a - b).collect();
        let mut extra = vec![0.0; p.n_dofs()];
        for n in &p.foundation_nodes {
            let d = 2 * n.node + 1;
            let r = -u[d];
            if r > 0.0 {
                g[d] -= n.weight * kappa * r;
                extra[d] += n.weight * kappa;
            }
        }
        let gn = free.iter().map(|&d| g[d].abs()).fold(0.0, f64::max);
        if gn < 1e-15 {
            break;
        }
        let h = Mat::from_fn(free.len(), free.len(), |i, j| {
            k.get(free[i], free[j]) + if i == j { extra[free[i]] } else { 0.0 }
        });
        let rhs = Mat::from_fn(free.len(), 1, |i, _| -g[free[i]]);
        let step = h.llt(Side::Lower).unwrap().solve(&rhs);
        let e0 = energy(&u);
        let mut alpha = 1.0;
        loop {
            let mut t = u.clone();
            for (i, &d) in free.iter().enumerate() {
                t[d] += alpha * step[(i, 0)];
            }
            if energy(&t) <= e0 || alpha < 1e-10 {
                u = t;
                break;
            }
            alpha *= 0.5;
        }
    }
    u
}

#[test]
fn frictionless_matches_smooth_energy_newton() {
    let m = Manufactured::default();
    let mesh = m.mesh(8, 4);
    let p = m.build(&mesh).unwrap();
    let cfg = SolverConfig {
        outer_tol: 1e-12,
        ..Default::default()
    };
    let (u, rep) = fixed_point_solve(&p, &cfg, &p.zero_field()).unwrap();
    let v = smooth_newton(&p, m.kappa);
    let e = dist(&p, &u, &v);
    assert!(e <= 1e-8 * p.energy_norm(&v), "{e:e}");
    let rho = estimate_contraction(&rep).unwrap();
    assert!(rho < 1.0);
    // the ratios settle: the tail spread is small
    let tail = &rep.contraction_ratios[rep.contraction_ratios.len() / 2..];
    let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(hi - lo < 0.05 && hi < 1.0, "{tail:?}");
}

#[test]
fn contraction_estimate_examples() {
    let inc: Vec<f64> = (0..12).map(|k| 0.5f64.powi(k)).collect();
    let r = estimate_contraction(&SolverReport::from_increments(&inc)).unwrap();
    assert!((r - 0.5).abs() < 1e-14);
    assert!(matches!(
        estimate_contraction(&SolverReport::from_increments(&[1.0])),
        Err(SolverError::TooFewIterations(1))
    ));
}

#[test]
fn canonical_contraction_below_one() {
    let cfg = canonical_config();
    let mesh = cfg.build_mesh(None).unwrap();
    let p = cfg.build_problem(&mesh).unwrap();
    let (_, rep) = fixed_point_solve(&p, &cfg.solver, &p.zero_field()).unwrap();
    assert!(estimate_contraction(&rep).unwrap() < 1.0);
}

#[test]
fn large_friction_is_flagged_or_solved() {
    let cfg = canonical_config().with_interface_mu(1e4);
    let mesh = cfg.build_mesh(None).unwrap();
    let p = cfg.build_problem(&mesh).unwrap();
    match fixed_point_solve(&p, &cfg.solver, &p.zero_field()) {
        Ok((u, rep)) => {
            assert!(rep.converged && !rep.diverged);
            assert!(*rep.relative_increments.last().unwrap() < cfg.solver.outer_tol);
            assert!(p.max_penetration(&u) <= 1e-12);
        }
        Err(SolverError::Diverged(rep)) | Err(SolverError::NotConverged(rep)) => assert!(!rep.converged),
        Err(e) => panic!("{e}"),
    }
    // a divergent run carries the diagnostic
    let cfg = canonical_config().with_interface_mu(10.0);
    let p = cfg.build_problem(&mesh).unwrap();
    match fixed_point_solve(&p, &cfg.solver, &p.zero_field()) {
        Err(e @ SolverError::Diverged(_)) => assert!(e.to_string().contains("M > m")),
        Err(SolverError::NotConverged(_)) => {}
        Ok((_, rep)) => assert!(rep.converged),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn projected_sor_energy_does_not_increase() {
    for seed in 0..8 {
        let p = random_small_instance(seed, 1 + seed as usize % 3, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_field(&p, &mut rng, 0.05);
        let start = feasible_start(&p, &random_field(&p, &mut rng, 0.1));
        let cfg = SolverConfig::default();
        let mut solver = multilayer_vi::solver::TrescaSolver::new(&p, &cfg).unwrap();
        let (_, stats) = solver.solve(&p.friction_bounds(&w), &start).unwrap();
        for e in stats.energy.windows(2) {
            assert!(e[1] <= e[0] + 1e-12 * e[0].abs().max(1.0), "{:?}", stats.energy);
        }
    }
}

/// `(K u - f_p) . (v - u) + j_p(v) - j_p(u)` for frozen bounds `p`.
fn inner_vi_residual(problem: &VIProblem, p: &[f64], u: &[f64], v: &[f64]) -> f64 {
    let b = problem.friction_bounds(p);
    let au = problem.internal_force(u);
    let mut r = 0.0;
    for i in 0..u.len() {
        r += (au[i] - problem.load[i]) * (v[i] - u[i]);
    }
    r + problem.j_with_bounds(&b, v) - problem.j_with_bounds(&b, u)
}

#[test]
fn inner_solution_satisfies_inequality() {
    for seed in 0..6 {
        let problem = random_small_instance(seed, 1 + seed as usize % 3, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let p = random_field(&problem, &mut rng, 0.05);
        let cfg = SolverConfig::default();
        for method in [InnerMethod::ProjectedSor, InnerMethod::Semismooth] {
            let cfg = SolverConfig {
                inner_method: method,
                regularization_eps: 1e-12,
                ..cfg.clone()
            };
            let (u, _) = solve_inner_tresca(&problem, &p, &cfg).unwrap();
            let f_norm = problem.load.iter().map(|x| x * x).sum::<f64>().sqrt();
            let au_norm = problem.internal_force(&u).iter().map(|x| x * x).sum::<f64>().sqrt();
            let scale = f_norm + au_norm;
            let tol = match method {
                InnerMethod::ProjectedSor => cfg.inner_tol,
                // the regularized kink costs about eps per term
                InnerMethod::Semismooth => 1e-8,
            };
            for k in 0..200 {
                let s = [1.0, 0.1, 0.01][k % 3];
                let trial: Vec<f64> = u
                    .iter()
                    .zip(random_field(&problem, &mut rng, s))
                    .map(|(a, b)| a + b)
                    .collect();
                let v = feasible_start(&problem, &trial);
                let r = inner_vi_residual(&problem, &p, &u, &v);
                assert!(r >= -tol * scale, "seed {seed} {method:?}: {r:e} (scale {scale:e})");
            }
        }
    }
}

#[test]
fn reports_are_deterministic() {
    let cfg = canonical_config();
    let mesh = cfg.build_mesh(None).unwrap();
    let p = cfg.build_problem(&mesh).unwrap();
    let (u1, r1) = fixed_point_solve(&p, &cfg.solver, &p.zero_field()).unwrap();
    let (u2, r2) = fixed_point_solve(&p, &cfg.solver, &p.zero_field()).unwrap();
    assert!(r1.same_result(&r2));
    assert!(u1.iter().zip(&u2).all(|(a, b)| a.to_bits() == b.to_bits()));
}

fn tail_ratio(cfg: &multilayer_vi::config::ProblemConfig, mu: f64) -> Option<f64> {
    let c = cfg.with_interface_mu(mu);
    let mesh = c.build_mesh(None).unwrap();
    let p = c.build_problem(&mesh).unwrap();
    match fixed_point_solve(&p, &c.solver, &p.zero_field()) {
        Ok((_, rep)) => estimate_contraction(&rep).ok(),
        Err(_) => None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn iterates_are_feasible(seed in 0u64..500, layers in 1usize..=3, mu in 0.0f64..0.5) {
        let p = random_small_instance(seed, layers, mu);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_field(&p, &mut rng, 0.05);
        for method in [InnerMethod::ProjectedSor, InnerMethod::Semismooth] {
            let cfg = SolverConfig { inner_method: method, ..Default::default() };
            let (u, _) = solve_inner_tresca(&p, &w, &cfg).unwrap();
            prop_assert!(p.max_penetration(&u) <= 1e-12);
        }
        let (u, _) = fixed_point_solve(&p, &SolverConfig::default(), &p.zero_field()).unwrap();
        prop_assert!(p.max_penetration(&u) <= 1e-12);
    }

    // doubling the interface coefficient of the shipped configuration never
    // lowers the measured tail ratio of a convergent run
    #[test]
    fn contraction_ratio_does_not_drop_when_friction_doubles(mu in 0.05f64..5.0) {
        let cfg = canonical_config();
        if let Some(r) = tail_ratio(&cfg, mu).filter(|r| *r < 1.0) {
            if let Some(r2) = tail_ratio(&cfg, 2.0 * mu) {
                prop_assert!(r2 >= r, "mu {mu}: {r} -> {r2}");
            }
        }
    }
}
