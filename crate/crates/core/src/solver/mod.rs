//! Fixed-point iteration on the friction bound around a convex inner solve.
//!
//! For a frozen state `p` the inner problem minimizes
//! `1/2 a(u, u) - L(u) + j(p, u)` over fields with non-positive normal jumps.
//! The outer loop iterates `u_{k+1} = Lambda(u_k)` until the relative change
//! in the energy norm drops below `outer_tol`.

mod condensed;
pub mod psor;
mod semismooth;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{AssemblyError, Field, FrictionBounds, VIProblem};
use crate::sparse::SparseError;
use crate::verification::kkt::{kkt_check, KktReport};

use condensed::Condensed;
use psor::{ActiveSet, ContactQp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerMethod {
    ProjectedSor,
    Semismooth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub outer_tol: f64,
    pub outer_max_iters: usize,
    pub inner_tol: f64,
    pub inner_max_iters: usize,
    pub inner_method: InnerMethod,
    pub regularization_eps: f64,
    pub seed: u64,
    /// Over-relaxation factor of the projected SOR sweeps.
    pub relaxation: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            outer_tol: 1e-8,
            outer_max_iters: 200,
            inner_tol: 1e-10,
            inner_max_iters: 20_000,
            inner_method: InnerMethod::ProjectedSor,
            regularization_eps: 1e-9,
            seed: 0,
            relaxation: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::Config(m.to_string()));
        if !(self.outer_tol > 0.0) {
            return bad("outer_tol must be positive");
        }
        if !(self.inner_tol > 0.0) {
            return bad("inner_tol must be positive");
        }
        if !(self.regularization_eps >= 0.0) {
            return bad("regularization_eps must be non-negative");
        }
        if self.inner_method == InnerMethod::Semismooth && self.regularization_eps == 0.0 {
            return bad("semismooth method requires regularization_eps > 0");
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return bad("relaxation must lie in (0, 2)");
        }
        if self.outer_max_iters == 0 || self.inner_max_iters == 0 {
            return bad("iteration limits must be positive");
        }
        // TOML integers are signed 64-bit
        if self.seed > i64::MAX as u64 {
            return bad("seed must not exceed 2^63 - 1");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("stiffness is not positive definite on the free dofs")]
    NotCoercive,
    #[error("inner solve did not converge in {iterations} iterations (relative residual {residual:e})")]
    InnerNotConverged { iterations: usize, residual: f64 },
    #[error("start field violates non-penetration by {0:e}")]
    InfeasibleStart(f64),
    #[error("fixed-point iteration diverged after {} iterations: M > m condition likely violated", .0.outer_iters)]
    Diverged(Box<SolverReport>),
    #[error("fixed-point iteration did not converge in {} iterations", .0.outer_iters)]
    NotConverged(Box<SolverReport>),
    #[error("too few iterations to estimate contraction ({0} < 3)")]
    TooFewIterations(usize),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Sparse(SparseError),
}

impl SolverError {
    /// Report attached to an outer-loop failure.
    pub fn report(&self) -> Option<&SolverReport> {
        match self {
            SolverError::Diverged(r) | SolverError::NotConverged(r) => Some(r),
            _ => None,
        }
    }
}

/// Statistics of one inner solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InnerStats {
    /// Sweeps (projected SOR) or Newton steps (semismooth and nonlinear layers).
    pub iterations: usize,
    /// Natural residual (projected SOR) or regularized gradient norm at exit.
    pub residual: f64,
    /// Whether the exact active-set solve produced the result.
    pub polished: bool,
    /// Condensed objective after each sweep, starting with the initial point.
    pub energy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub converged: bool,
    pub diverged: bool,
    pub outer_iters: usize,
    /// `||u_{k+1} - u_k||_V` per outer iteration.
    pub increments: Vec<f64>,
    /// Increment divided by `||u_{k+1}||_V`.
    pub relative_increments: Vec<f64>,
    pub contraction_ratios: Vec<f64>,
    pub inner_iterations: Vec<usize>,
    pub kkt: Option<KktReport>,
    pub wall_time: Duration,
}

impl SolverReport {
    fn new() -> Self {
        Self {
            converged: false,
            diverged: false,
            outer_iters: 0,
            increments: Vec::new(),
            relative_increments: Vec::new(),
            contraction_ratios: Vec::new(),
            inner_iterations: Vec::new(),
            kkt: None,
            wall_time: Duration::ZERO,
        }
    }

    /// Equality ignoring wall time.
    pub fn same_result(&self, other: &SolverReport) -> bool {
        let mut a = self.clone();
        a.wall_time = other.wall_time;
        &a == other
    }

    /// Report from a plain list of increments.
    pub fn from_increments(increments: &[f64]) -> Self {
        let mut r = Self::new();
        r.outer_iters = increments.len();
        r.increments = increments.to_vec();
        r.contraction_ratios = ratios(increments);
        r
    }
}

fn ratios(inc: &[f64]) -> Vec<f64> {
    inc.windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
        .collect()
}

/// Inner solver with reusable factorizations for one problem.
pub struct TrescaSolver<'a> {
    problem: &'a VIProblem,
    cfg: SolverConfig,
    condensed: Option<Condensed>,
    warm: Option<ActiveSet>,
}

impl<'a> TrescaSolver<'a> {
    pub fn new(problem: &'a VIProblem, cfg: &SolverConfig) -> Result<Self, SolverError> {
        cfg.validate()?;
        let condensed = match &problem.stiffness {
            Some(k) => Some(Condensed::new(problem, k.clone())?),
            None => None,
        };
        Ok(Self {
            problem,
            cfg: cfg.clone(),
            condensed,
            warm: None,
        })
    }

    /// Load vector with the frozen foundation pressure added.
    fn rhs(&self, bounds: &FrictionBounds) -> Field {
        let mut b = self.problem.load.clone();
        for (k, n) in self.problem.foundation_nodes.iter().enumerate() {
            let d = 2 * n.node + 1;
            if !self.problem.dofs.is_fixed(d) {
                b[d] += n.weight * bounds.foundation_normal[k];
            }
        }
        b
    }

    fn quadratic(
        &mut self,
        cond: &Condensed,
        b_full: &[f64],
        bounds: &FrictionBounds,
        start: &[f64],
        warm: bool,
    ) -> Result<(Field, InnerStats), SolverError> {
        let b = cond.reduce_rhs(b_full);
        let (wp, wf) = cond.layout.weights(bounds);
        let qp = ContactQp {
            s: &cond.s,
            b: &b,
            layout: &cond.layout,
            w_pair: &wp,
            w_found: &wf,
        };
        let z0 = cond.restrict(start);
        let (z, stats) = match self.cfg.inner_method {
            InnerMethod::ProjectedSor => {
                let warm_state = if warm { self.warm.as_ref() } else { None };
                let (z, st, stats) = psor::solve(&qp, &z0, warm_state, &self.cfg)?;
                if warm {
                    self.warm = Some(st);
                }
                (z, stats)
            }
            InnerMethod::Semismooth => semismooth::solve(&qp, &z0, &self.cfg)?,
        };
        Ok((cond.expand(&z, b_full), stats))
    }

    /// Solve the inner problem with bounds frozen at `bounds`, starting from `start`.
    pub fn solve(&mut self, bounds: &FrictionBounds, start: &[f64]) -> Result<(Field, InnerStats), SolverError> {
        self.problem.check_field(start)?;
        let b = self.rhs(bounds);
        if let Some(cond) = self.condensed.take() {
            let out = self.quadratic(&cond, &b, bounds, start, true);
            self.condensed = Some(cond);
            return out;
        }
        self.solve_nonlinear(bounds, &b, start)
    }

    /// Proximal Newton: each step minimizes the tangent model plus `j` exactly,
    /// then a backtracking search on the true objective.
    fn solve_nonlinear(
        &mut self,
        bounds: &FrictionBounds,
        b: &[f64],
        start: &[f64],
    ) -> Result<(Field, InnerStats), SolverError> {
        let p = self.problem;
        let objective = |u: &[f64]| p.strain_energy(u) - dot(b, u) + p.j_with_bounds(bounds, u);
        let mut u = start.to_vec();
        p.dofs.clamp(&mut u);
        let mut stats = InnerStats::default();
        let mut e = objective(&u);
        stats.energy.push(e);
        for it in 1..=self.cfg.inner_max_iters.min(100) {
            let kt = p.tangent(&u)?;
            let cond = Condensed::new(p, kt.clone())?;
            let f_int = p.internal_force(&u);
            let ku = kt.matvec(&u);
            let rhs: Field = (0..u.len()).map(|i| ku[i] - (f_int[i] - b[i])).collect();
            let (mut v, _) = self.quadratic(&cond, &rhs, bounds, &u, false)?;
            p.dofs.clamp(&mut v);
            let d: Field = v.iter().zip(&u).map(|(a, b)| a - b).collect();
            let dn = p.energy_norm(&d);
            let un = p.energy_norm(&u).max(p.energy_norm(&v));
            stats.iterations = it;
            stats.residual = if un > 0.0 { dn / un } else { dn };
            if dn == 0.0 || dn <= self.cfg.inner_tol * un {
                stats.energy.push(e);
                return Ok((v, stats));
            }
            let pred = dot(&(0..u.len()).map(|i| f_int[i] - b[i]).collect::<Vec<_>>(), &d)
                + p.j_with_bounds(bounds, &v)
                - p.j_with_bounds(bounds, &u);
            let mut alpha = 1.0;
            loop {
                let trial: Field = u.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
                let et = objective(&trial);
                if et <= e + 1e-4 * alpha * pred.min(0.0) || alpha < 1e-10 {
                    u = trial;
                    e = et;
                    break;
                }
                alpha *= 0.5;
            }
            stats.energy.push(e);
        }
        Err(SolverError::InnerNotConverged {
            iterations: stats.iterations,
            residual: stats.residual,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One application of the inner solve with the bound frozen at `p`.
pub fn solve_inner_tresca(
    problem: &VIProblem,
    p: &[f64],
    cfg: &SolverConfig,
) -> Result<(Field, InnerStats), SolverError> {
    problem.check_field(p)?;
    let mut solver = TrescaSolver::new(problem, cfg)?;
    let bounds = problem.friction_bounds(p);
    let start = feasible_start(problem, p);
    solver.solve(&bounds, &start)
}

/// Clamp fixed dofs and close any overlapping interface pair at its midpoint.
pub fn feasible_start(problem: &VIProblem, p: &[f64]) -> Field {
    let mut u = p.to_vec();
    problem.dofs.clamp(&mut u);
    for r in &problem.constraint_rows {
        if r.eval(&u) > 0.0 {
            let m = 0.5 * (u[r.upper_dof] + u[r.lower_dof]);
            u[r.upper_dof] = m;
            u[r.lower_dof] = m;
        }
    }
    u
}

/// Number of trailing ratios at or above one that counts as divergence.
const DIVERGENCE_WINDOW: usize = 6;

/// Iterate `u_{k+1} = Lambda(u_k)` from `p0`.
pub fn fixed_point_solve(
    problem: &VIProblem,
    cfg: &SolverConfig,
    p0: &[f64],
) -> Result<(Field, SolverReport), SolverError> {
    let t0 = Instant::now();
    problem.check_field(p0)?;
    let pen = problem.max_penetration(p0);
    if pen > 1e-12 {
        return Err(SolverError::InfeasibleStart(pen));
    }
    let mut solver = TrescaSolver::new(problem, cfg)?;
    let mut report = SolverReport::new();
    let mut u = p0.to_vec();
    problem.dofs.clamp(&mut u);

    for _ in 0..cfg.outer_max_iters {
        let bounds = problem.friction_bounds(&u);
        let (next, stats) = solver.solve(&bounds, &u)?;
        let diff: Field = next.iter().zip(&u).map(|(a, b)| a - b).collect();
        let d = problem.energy_norm(&diff);
        let nrm = problem.energy_norm(&next);
        report.outer_iters += 1;
        report.increments.push(d);
        report.relative_increments.push(if nrm > 0.0 { d / nrm } else { d });
        report.inner_iterations.push(stats.iterations);
        report.contraction_ratios = ratios(&report.increments);
        u = next;
        if !d.is_finite() {
            report.diverged = true;
            break;
        }
        if d == 0.0 || d <= cfg.outer_tol * nrm {
            report.converged = true;
            break;
        }
        let r = &report.contraction_ratios;
        if r.len() >= DIVERGENCE_WINDOW && r[r.len() - DIVERGENCE_WINDOW..].iter().all(|&x| x >= 1.0) {
            report.diverged = true;
            break;
        }
        if d > 1e8 * report.increments[0].max(f64::MIN_POSITIVE) {
            report.diverged = true;
            break;
        }
    }
    report.wall_time = t0.elapsed();
    if report.converged {
        report.kkt = Some(kkt_check(problem, &u));
        return Ok((u, report));
    }
    if !report.diverged {
        let tail = estimate_contraction(&report).unwrap_or(0.0);
        if tail >= 1.0 {
            report.diverged = true;
        }
    }
    if report.diverged {
        Err(SolverError::Diverged(Box::new(report)))
    } else {
        Err(SolverError::NotConverged(Box::new(report)))
    }
}

/// Geometric mean of the second half of the contraction ratios.
pub fn estimate_contraction(report: &SolverReport) -> Result<f64, SolverError> {
    if report.outer_iters < 3 || report.contraction_ratios.len() < 2 {
        return Err(SolverError::TooFewIterations(report.outer_iters));
    }
    let r = &report.contraction_ratios;
    let tail = &r[r.len() / 2..];
    if tail.iter().any(|&x| x <= 0.0) {
        return Ok(0.0);
    }
    let mean_log = tail.iter().map(|x| x.ln()).sum::<f64>() / tail.len() as f64;
    Ok(mean_log.exp())
}
