//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints its PASS/FAIL line; the process fails if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use multilayer_vi::assembly::VIProblem;
use multilayer_vi::config::ProblemConfig;
use multilayer_vi::constitutive::{estimate_constants, LawRef, MaterialLaw, SamplingBox};
use multilayer_vi::problems::{canonical_config, random_small_instance, Manufactured};
use multilayer_vi::solver::{estimate_contraction, fixed_point_solve, SolverConfig, SolverError, SolverReport};
use multilayer_vi::verification::convergence::{convergence_study, ConvergenceTable};
use multilayer_vi::verification::kkt::{exceeded, kkt_check, kkt_scales, kkt_thresholds, KKT_CONSTANT};
use multilayer_vi::verification::oracle::oracle_solve_dense;
use multilayer_vi::verification::properties::{estimate_m, j_convexity_defect, j_lipschitz_sample, random_field};
use multilayer_vi::verification::residual::greens_identity_check;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn dist(p: &VIProblem, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    p.energy_norm(&d)
}

fn canonical_solution() -> (ProblemConfig, VIProblem, Vec<f64>, SolverReport) {
    let cfg = canonical_config();
    let mesh = cfg.build_mesh(None).unwrap();
    let problem = cfg.build_problem(&mesh).unwrap();
    let (u, report) =
        fixed_point_solve(&problem, &cfg.solver, &problem.zero_field()).expect("canonical problem converges");
    (cfg, problem, u, report)
}

/// Fixed point of the dense oracle, iterated independently of the solver.
fn oracle_fixed_point(p: &VIProblem) -> Option<Vec<f64>> {
    let mut u = p.zero_field();
    for _ in 0..500 {
        let next = oracle_solve_dense(p, &u, 1e-13).ok()?;
        let step = dist(p, &next, &u);
        u = next;
        if step <= 1e-14 * (1.0 + p.energy_norm(&u)) {
            return Some(u);
        }
    }
    None
}

fn a1() -> Verdict {
    let cases = [(11, 1, 0.0), (12, 2, 0.1), (13, 3, 0.3), (14, 2, 0.3), (15, 3, 0.0)];
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    for (seed, layers, mu) in cases {
        let p = random_small_instance(seed, layers, mu);
        let (u, _) = match fixed_point_solve(&p, &SolverConfig::default(), &p.zero_field()) {
            Ok(r) => r,
            Err(e) => return verdict(false, format!("seed {seed}: solver failed: {e}")),
        };
        let Some(o) = oracle_fixed_point(&p) else {
            return verdict(false, format!("seed {seed}: oracle iteration failed"));
        };
        let rel = dist(&p, &u, &o) / (1.0 + p.energy_norm(&o));
        worst = worst.max(rel);
        notes.push(format!("{layers}L/{}dofs/mu={mu}", p.n_dofs()));
    }
    verdict(
        worst <= 1e-7,
        format!(
            "max ||u - u_oracle|| / (1 + ||u_oracle||) = {worst:.2e} (limit 1e-7) over {}",
            notes.join(", ")
        ),
    )
}

fn a2() -> Verdict {
    let (cfg, problem, u, _) = canonical_solution();
    let h = problem.mesh.h;
    let limit = kkt_thresholds(KKT_CONSTANT, h, cfg.solver.outer_tol, kkt_scales(&problem, &u));
    let report = kkt_check(&problem, &u);
    let bad = exceeded(&report, &limit);
    let worst = report
        .values()
        .iter()
        .zip(limit.values())
        .map(|(v, l)| v / l)
        .fold(0.0, f64::max);

    // fault injection: push one interior pair 0.1 into penetration
    let mut faulty = u.clone();
    let pairs = &problem.interface_nodes[0];
    let pair = pairs[pairs.len() / 2];
    faulty[2 * pair.lower + 1] = faulty[2 * pair.upper + 1] + 0.1;
    let f = kkt_check(&problem, &faulty);
    let detected = (f.max_penetration - 0.1).abs() < 1e-9 && exceeded(&f, &limit).contains(&"max_penetration");
    verdict(
        bad.is_empty() && detected,
        format!(
            "largest entry/threshold {worst:.3} (c = {KKT_CONSTANT}, h = {h:.4}); exceeded {bad:?}; injected penetration reported as {:.6}",
            f.max_penetration
        ),
    )
}

/// One run of the contraction sweep.
struct SweepRun {
    mu: f64,
    status: &'static str,
    ratio: Option<f64>,
    first_step: Option<f64>,
    sampled_bound: f64,
    flagged_correctly: bool,
}

fn sweep_run(cfg: &ProblemConfig, mu: f64) -> SweepRun {
    let c = cfg.with_interface_mu(mu);
    let mesh = c.build_mesh(None).unwrap();
    let p = c.build_problem(&mesh).unwrap();
    let sampled_bound = estimate_m(&p, 200, 5) / p.monotonicity_constant();
    let (status, report, flagged_correctly) = match fixed_point_solve(&p, &c.solver, &p.zero_field()) {
        Ok((_, r)) => {
            let last = r.relative_increments.last().copied().unwrap_or(f64::INFINITY);
            let honest = r.converged && !r.diverged && last < c.solver.outer_tol;
            ("converged", r, honest)
        }
        Err(SolverError::Diverged(r)) => ("diverged", *r, true),
        Err(SolverError::NotConverged(r)) => ("not converged", *r, true),
        Err(e) => panic!("unexpected solver error: {e}"),
    };
    SweepRun {
        mu,
        status,
        ratio: estimate_contraction(&report).ok(),
        first_step: report.contraction_ratios.first().copied(),
        sampled_bound,
        flagged_correctly,
    }
}

fn a3() -> Verdict {
    let cfg = canonical_config();
    let runs: Vec<SweepRun> = [0.1, 1.0, 10.0, 1e3].iter().map(|&mu| sweep_run(&cfg, mu)).collect();
    for r in &runs {
        println!(
            "    mu = {:<6} {:<14} tail ratio {:<10} first-step ratio {:<10} sampled m/M {:.3e}",
            r.mu,
            r.status,
            r.ratio.map_or("n/a".to_string(), |x| format!("{x:.4}")),
            r.first_step.map_or("n/a".to_string(), |x| format!("{x:.4}")),
            r.sampled_bound
        );
    }
    let base = &runs[0];
    let base_ok = base.status == "converged" && base.ratio.is_some_and(|x| x < 1.0);
    let flagged = runs.iter().all(|r| r.flagged_correctly);
    // a run that fails to converge has measured ratio at least 1
    let measured: Vec<f64> = runs
        .iter()
        .map(|r| match (r.status, r.ratio) {
            ("converged", Some(x)) => x,
            (_, x) => x.unwrap_or(1.0).max(1.0),
        })
        .collect();
    let monotone = measured.windows(2).all(|w| w[1] >= w[0]);
    let drops: Vec<String> = measured
        .windows(2)
        .zip(runs.windows(2))
        .filter(|(m, _)| m[1] < m[0])
        .map(|(m, r)| format!("mu {} -> {}: {:.4} -> {:.4}", r[0].mu, r[1].mu, m[0], m[1]))
        .collect();
    verdict(
        base_ok && flagged && monotone,
        format!(
            "mu=0.1 tail ratio {:.4}; non-converged runs flagged: {flagged}; non-decreasing: {monotone}{}",
            base.ratio.unwrap_or(f64::NAN),
            if drops.is_empty() {
                String::new()
            } else {
                format!(" (drops: {})", drops.join("; "))
            }
        ),
    )
}

fn canonical_study() -> ConvergenceTable {
    let cfg = canonical_config();
    let base = cfg.build_mesh(Some(8)).unwrap();
    convergence_study(&base, |m| cfg.build_problem(m), 4, &cfg.solver).expect("canonical study runs")
}

fn print_table(t: &ConvergenceTable) {
    for (r, c) in t.rows.iter().zip(t.bound_constants()) {
        println!(
            "    h {:.4e} dofs {:>6} error {:.4e} interp {:.4e} R {:+.3e} local slope {:>6.3} c {:.3}",
            r.h, r.dofs, r.error, r.interp_error, r.residual, r.local_slope, c
        );
    }
}

fn a4(table: &ConvergenceTable) -> Verdict {
    let c = table.bound_constants();
    let spread = table.bound_spread();
    verdict(
        spread <= 3.0 && c.iter().all(|x| x.is_finite() && *x > 0.0),
        format!("per-level constants {c:.3?}, max/min {spread:.3} (limit 3)"),
    )
}

fn a5(table: &ConvergenceTable) -> Verdict {
    let m = Manufactured::default();
    let smooth = convergence_study(&m.mesh(4, 2), |mesh| m.build(mesh), 4, &SolverConfig::default())
        .expect("control study runs");
    print_table(&smooth);
    let ok = table.fitted_slope >= 0.70
        && smooth.fitted_slope >= 0.90
        && table.strictly_decreasing()
        && smooth.strictly_decreasing();
    verdict(
        ok,
        format!(
            "frictional slope {:.3} (>= 0.70), decreasing {}; frictionless control slope {:.3} (>= 0.90), decreasing {}",
            table.fitted_slope,
            table.strictly_decreasing(),
            smooth.fitted_slope,
            smooth.strictly_decreasing()
        ),
    )
}

fn a6() -> Verdict {
    let (_, problem, u, _) = canonical_solution();
    let g = greens_identity_check(&problem, &u, 7).unwrap();
    let greens_ok = g.defect <= 1e-10 * g.scale;

    // j scale: the friction functional on a unit-size field
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = random_field(&problem, &mut rng, 0.05);
    let ones = random_field(&problem, &mut rng, 1.0);
    let j_scale = problem
        .j_with_bounds(&problem.friction_bounds(&w), &ones)
        .abs()
        .max(1.0);
    let convexity = j_convexity_defect(&problem, 200, 11);
    let lip = j_lipschitz_sample(&problem, 200, 12);
    let j_ok = convexity <= 1e-12 * j_scale && lip.max_excess <= 1e-12 * j_scale && lip.max_ratio.is_finite();

    let sbox = SamplingBox::new(-1e-3, 1e-3);
    let mut laws: Vec<MaterialLaw> = problem.materials.clone();
    laws.push(MaterialLaw::perturbed(2.0, 1.0, 0.3).unwrap());
    let mut worst_lip: f64 = 0.0;
    let mut worst_mono: f64 = 0.0;
    let mut consts_ok = true;
    for (k, law) in laws.iter().enumerate() {
        let est = estimate_constants(LawRef::Material(law), 4000, sbox, 100 + k as u64).unwrap();
        let (l, m) = law.analytic_bounds();
        // sampled quotients lie inside the closed-form bounds and approach them
        consts_ok &= est.lipschitz <= l * (1.0 + 1e-12) && est.monotonicity >= m * (1.0 - 1e-12);
        if law.is_linear() {
            consts_ok &= est.lipschitz >= 0.9 * l && est.monotonicity <= 1.1 * m;
        }
        worst_lip = worst_lip.max(est.lipschitz / l);
        worst_mono = worst_mono.max(m / est.monotonicity);
    }
    verdict(
        greens_ok && j_ok && consts_ok,
        format!(
            "Green defect {:.2e} vs 1e-10*{:.2e}; j convexity defect {convexity:.2e}, Lipschitz excess {:.2e} (j scale {j_scale:.2e}); max sampled L/L_bound {worst_lip:.4}, max M_bound/M {worst_mono:.4}",
            g.defect, g.scale, lip.max_excess
        ),
    )
}

fn timed<F: FnOnce() -> Verdict>(name: &str, budget: Duration, f: F) -> bool {
    let t = Instant::now();
    let v = f();
    let elapsed = t.elapsed();
    let in_time = elapsed <= budget;
    let pass = v.pass && in_time;
    println!(
        "{name} {}: {} [{:.1} s, budget {} s]",
        if pass { "PASS" } else { "FAIL" },
        v.detail,
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    pass
}

fn main() -> ExitCode {
    // libtest-style flags (e.g. --list from tooling) are accepted and ignored
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut all = true;
    all &= timed("A1 oracle equivalence", Duration::from_secs(60), a1);
    all &= timed("A2 KKT and complementarity", Duration::from_secs(30), a2);
    all &= timed("A3 fixed-point contraction", Duration::from_secs(120), a3);
    let t = Instant::now();
    let table = canonical_study();
    let study_time = t.elapsed();
    print_table(&table);
    all &= timed(
        "A4 error-bound form",
        Duration::from_secs(300).saturating_sub(study_time),
        || a4(&table),
    );
    all &= timed(
        "A5 convergence rate",
        Duration::from_secs(600).saturating_sub(study_time),
        || a5(&table),
    );
    println!(
        "    (refinement study on the shipped configuration took {:.1} s)",
        study_time.as_secs_f64()
    );
    all &= timed("A6 structural identities", Duration::from_secs(60), a6);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
