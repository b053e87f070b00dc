//! Command-line front end: `mlvi <mesh|solve|converge|verify> --config <path>`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};

use crate::assembly::VIProblem;
use crate::config::{parse_config, ProblemConfig};
use crate::output::{
    write_convergence_csv, write_convergence_dat, write_kkt_csv, write_solver_csv, write_solver_log, write_vtk,
};
use crate::solver::{estimate_contraction, fixed_point_solve, solve_inner_tresca, SolverError};
use crate::verification::convergence::convergence_study;
use crate::verification::kkt::{
    exceeded, kkt_check, kkt_scales, kkt_thresholds, stick_slip_case_analysis, KKT_CONSTANT,
};
use crate::verification::oracle::{oracle_solve_dense, DENSE_LIMIT};
use crate::verification::residual::greens_identity_check;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Write the mesh as text and as an empty VTK grid.
    Mesh,
    /// Solve the configured problem and write fields and reports.
    Solve,
    /// Run a refinement study against a fine-grid reference.
    Converge,
    /// Cross-check the solver on the configured problem.
    Verify,
}

#[derive(Debug, Parser)]
#[command(name = "mlvi", version, about = "Layered elastic stacks with interlayer friction")]
pub struct Cli {
    pub command: Command,
    /// Problem description (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Number of levels for `converge`; the configured mesh is the coarsest.
    #[arg(long, default_value_t = 4)]
    pub levels: usize,
    /// Seed for sampled checks; overrides the solver seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Result of a command that ran to completion.
#[derive(Debug, Default)]
pub struct Outcome {
    pub passed: bool,
    pub lines: Vec<String>,
    pub written: Vec<PathBuf>,
}

impl Outcome {
    fn say(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }
}

fn create(dir: &Path, name: &str, out: &mut Outcome) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    out.written.push(path);
    Ok(BufWriter::new(f))
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let text = fs::read_to_string(&cli.config).with_context(|| format!("reading {}", cli.config.display()))?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = cli.seed {
        cfg.solver.seed = seed;
        cfg.validate()?;
    }
    fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    match cli.command {
        Command::Mesh => run_mesh(&cfg, &cli.out_dir),
        Command::Solve => run_solve(&cfg, &cli.out_dir),
        Command::Converge => run_converge(&cfg, &cli.out_dir, cli.levels),
        Command::Verify => run_verify(&cfg, &cli.out_dir),
    }
}

fn run_mesh(cfg: &ProblemConfig, dir: &Path) -> Result<Outcome> {
    let mesh = cfg.build_mesh(None)?;
    let mut out = Outcome {
        passed: true,
        ..Default::default()
    };
    mesh.write_text(create(dir, "mesh.txt", &mut out)?)?;
    write_vtk(create(dir, "mesh.vtk", &mut out)?, &mesh, None, None)?;
    out.say(format!(
        "mesh: {} nodes, {} triangles, h = {:e}",
        mesh.n_nodes(),
        mesh.triangles.len(),
        mesh.h
    ));
    Ok(out)
}

fn solve(problem: &VIProblem, cfg: &ProblemConfig) -> Result<(Vec<f64>, crate::solver::SolverReport)> {
    match fixed_point_solve(problem, &cfg.solver, &problem.zero_field()) {
        Ok(r) => Ok(r),
        Err(e @ (SolverError::Diverged(_) | SolverError::NotConverged(_))) => {
            let report = e.report().expect("iteration errors carry a report");
            let last = report.relative_increments.last().copied().unwrap_or(f64::NAN);
            bail!(
                "{e} after {} outer iterations (last relative increment {last:e})",
                report.outer_iters
            )
        }
        Err(e) => Err(e.into()),
    }
}

fn run_solve(cfg: &ProblemConfig, dir: &Path) -> Result<Outcome> {
    let mesh = cfg.build_mesh(None)?;
    let problem = cfg.build_problem(&mesh)?;
    let (u, report) = solve(&problem, cfg)?;
    let mut out = Outcome::default();
    let contraction = estimate_contraction(&report).ok();
    let kkt = kkt_check(&problem, &u);
    let limit = kkt_thresholds(KKT_CONSTANT, mesh.h, cfg.solver.outer_tol, kkt_scales(&problem, &u));
    let bad = exceeded(&kkt, &limit);
    if cfg.output.vtk {
        write_vtk(
            create(dir, "solution.vtk", &mut out)?,
            &mesh,
            Some(&u),
            Some(&problem.element_stresses(&u)),
        )?;
    }
    if cfg.output.csv {
        write_solver_csv(create(dir, "solver.csv", &mut out)?, &report)?;
        write_kkt_csv(create(dir, "kkt.csv", &mut out)?, &kkt, Some(&limit))?;
    }
    write_solver_log(create(dir, "solver.log", &mut out)?, &report, contraction)?;
    out.say(format!(
        "converged in {} outer iterations, {} dofs",
        report.outer_iters,
        problem.n_dofs()
    ));
    if let Some(r) = contraction {
        out.say(format!("tail contraction ratio {r:.4}"));
    }
    for name in &bad {
        out.say(format!("KKT entry {name} above threshold"));
    }
    out.passed = bad.is_empty();
    Ok(out)
}

fn run_converge(cfg: &ProblemConfig, dir: &Path, levels: usize) -> Result<Outcome> {
    let base = cfg.build_mesh(None)?;
    let mut out = Outcome::default();
    let table = match convergence_study(&base, |m| cfg.build_problem(m), levels, &cfg.solver) {
        Ok(t) => t,
        Err(e) => {
            if let Some(partial) = e.partial() {
                write_convergence_csv(create(dir, "convergence_partial.csv", &mut out)?, partial)?;
            }
            return Err(e.into());
        }
    };
    write_convergence_csv(create(dir, "convergence.csv", &mut out)?, &table)?;
    write_convergence_dat(create(dir, "convergence.dat", &mut out)?, &table)?;
    out.say(format!("{:>12} {:>8} {:>12} {:>8}", "h", "dofs", "error", "slope"));
    for r in &table.rows {
        out.say(format!(
            "{:>12.4e} {:>8} {:>12.4e} {:>8.3}",
            r.h, r.dofs, r.error, r.local_slope
        ));
    }
    out.say(format!("fitted slope {:.3}", table.fitted_slope));
    out.passed = table.strictly_decreasing();
    if !out.passed {
        out.say("errors do not decrease strictly");
    }
    Ok(out)
}

fn run_verify(cfg: &ProblemConfig, dir: &Path) -> Result<Outcome> {
    let mesh = cfg.build_mesh(None)?;
    let problem = cfg.build_problem(&mesh)?;
    let (u, _) = solve(&problem, cfg)?;
    let mut out = Outcome::default();
    let mut rows: Vec<(String, f64, f64)> = Vec::new();

    if problem.n_dofs() > DENSE_LIMIT {
        out.say(format!(
            "oracle: skipped: dense regime exceeded ({} dofs > {DENSE_LIMIT})",
            problem.n_dofs()
        ));
    } else if !problem.is_linear() {
        out.say("oracle: skipped: nonlinear material law");
    } else {
        let scale = 1.0 + problem.energy_norm(&u);
        // the inner solve at the converged bounds, against the dense oracle
        let (inner, _) = solve_inner_tresca(&problem, &u, &cfg.solver)?;
        let dense = oracle_solve_dense(&problem, &u, 1e-13)?;
        let diff: Vec<f64> = inner.iter().zip(&dense).map(|(a, b)| a - b).collect();
        rows.push(("oracle".into(), problem.energy_norm(&diff), 1e-7 * scale));
    }

    if problem.is_linear() {
        let g = greens_identity_check(&problem, &u, cfg.solver.seed)?;
        rows.push((
            "greens_identity".into(),
            g.defect,
            1e-10 * g.scale.max(f64::MIN_POSITIVE),
        ));
    } else {
        out.say("greens_identity: skipped: nonlinear material law");
    }

    let kkt = kkt_check(&problem, &u);
    let direct = stick_slip_case_analysis(&problem, &u);
    let limit = kkt_thresholds(KKT_CONSTANT, mesh.h, cfg.solver.outer_tol, kkt_scales(&problem, &u));
    rows.push((
        "stick_slip_equivalence".into(),
        (kkt.max_stick_slip - direct).abs(),
        1e-9 * kkt.max_stick_slip.max(direct).max(f64::MIN_POSITIVE),
    ));
    for ((name, v), l) in crate::verification::kkt::KktReport::FIELDS
        .iter()
        .zip(kkt.values())
        .zip(limit.values())
    {
        rows.push((format!("kkt_{name}"), v, l));
    }

    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(create(dir, "verify.csv", &mut out)?);
    w.write_record(["check", "value", "threshold", "pass"])?;
    out.passed = true;
    for (name, v, t) in &rows {
        let ok = v <= t;
        out.passed &= ok;
        w.write_record([name.clone(), format!("{v:e}"), format!("{t:e}"), ok.to_string()])?;
        out.say(format!(
            "{name}: {} ({v:.3e} <= {t:.3e})",
            if ok { "pass" } else { "FAIL" }
        ));
    }
    w.flush()?;
    Ok(out)
}
