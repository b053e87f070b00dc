use multilayer_vi::problems::random_small_instance;
use multilayer_vi::solver::{fixed_point_solve, solve_inner_tresca, InnerMethod, SolverConfig};
use multilayer_vi::verification::oracle::oracle_solve_dense;

fn dist(p: &multilayer_vi::assembly::VIProblem, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    p.energy_norm(&d)
}

#[test]
fn inner_solve_matches_dense_oracle() {
    let cfg = SolverConfig::default();
    for seed in 0..12u64 {
        for layers in 1..=3 {
            let mu = [0.0, 0.1, 0.3][seed as usize % 3];
            let p = random_small_instance(seed, layers, mu);
            let w = p.zero_field();
            let oracle = oracle_solve_dense(&p, &w, 1e-12).unwrap();
            let (u, _) = solve_inner_tresca(&p, &w, &cfg).unwrap();
            let n = p.energy_norm(&oracle);
            let e = dist(&p, &u, &oracle);
            assert!(e <= 1e-7 * (1.0 + n), "seed {seed} layers {layers}: {e:e} vs {n:e}");
        }
    }
}

#[test]
fn semismooth_matches_dense_oracle() {
    let cfg = SolverConfig {
        inner_method: InnerMethod::Semismooth,
        regularization_eps: 1e-10,
        ..Default::default()
    };
    for seed in 0..6u64 {
        for layers in 1..=3 {
            let p = random_small_instance(seed, layers, 0.3);
            let w = p.zero_field();
            let oracle = oracle_solve_dense(&p, &w, 1e-12).unwrap();
            let (u, _) = solve_inner_tresca(&p, &w, &cfg).unwrap();
            let e = dist(&p, &u, &oracle);
            assert!(
                e <= 1e-6 * (1.0 + p.energy_norm(&oracle)),
                "seed {seed} layers {layers}: {e:e}"
            );
        }
    }
}

#[test]
fn fixed_point_matches_oracle_iteration() {
    let cfg = SolverConfig::default();
    for seed in 0..5u64 {
        let layers = 1 + seed as usize % 3;
        let p = random_small_instance(seed, layers, [0.0, 0.1, 0.3][seed as usize % 3]);
        let (u, rep) = fixed_point_solve(&p, &cfg, &p.zero_field()).unwrap();
        // the fixed point reproduces itself under the oracle
        let again = oracle_solve_dense(&p, &u, 1e-12).unwrap();
        let e = dist(&p, &u, &again);
        assert!(
            e <= 1e-7 * (1.0 + p.energy_norm(&u)),
            "seed {seed}: {e:e} after {} iters",
            rep.outer_iters
        );
    }
}
