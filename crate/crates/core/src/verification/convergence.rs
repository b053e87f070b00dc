//! Error against a fine-grid reference on a sequence of nested meshes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{AssemblyError, Field, VIProblem};
use crate::mesh::{refine_uniform_with_map, Mesh, Prolongation};
use crate::solver::{feasible_start, fixed_point_solve, SolverConfig, SolverError};

use super::residual::residual_r;

/// Number of uniform refinements between the finest level and the reference.
pub const REFERENCE_OFFSET: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub dofs: usize,
    /// `||u_ref - u_h||_V`.
    pub error: f64,
    /// Error of the previous level over this one; NaN on the first row.
    pub ratio: f64,
    /// `log2(ratio)`; NaN on the first row.
    pub local_slope: f64,
    /// `||u_ref - I_h u_ref||_V`, with `I_h` nodal interpolation on this level.
    pub interp_error: f64,
    /// `R(u_ref, I_h u_ref)` on the reference mesh.
    pub residual: f64,
    pub outer_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log error` against `log h`; NaN with fewer than two rows.
    pub fitted_slope: f64,
    pub reference: String,
    /// Monotonicity constant of the reference operator. `R` carries energy
    /// units, so the bound compares `sqrt(|R| / stiffness)` with V-norms.
    pub stiffness: f64,
}

impl ConvergenceTable {
    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error).collect()
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].error < w[0].error)
    }

    /// Per-level `error / (interp_error + sqrt(|R| / stiffness))`.
    pub fn bound_constants(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.error / (r.interp_error + (r.residual.abs() / self.stiffness).sqrt()))
            .collect()
    }

    /// Largest over smallest of [`Self::bound_constants`].
    pub fn bound_spread(&self) -> f64 {
        let c = self.bound_constants();
        let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
        hi / lo
    }
}

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("convergence study needs at least {min} levels (got {got})")]
    TooFewLevels { min: usize, got: usize },
    #[error("building the problem failed: {0}")]
    Build(String),
    #[error(transparent)]
    Field(#[from] AssemblyError),
    #[error("solve failed at {stage}: {source}")]
    Solve {
        stage: String,
        source: SolverError,
        partial: Box<ConvergenceTable>,
    },
}

impl StudyError {
    pub fn partial(&self) -> Option<&ConvergenceTable> {
        match self {
            StudyError::Solve { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return f64::NAN;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n as f64;
    let my = ly.iter().sum::<f64>() / n as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Prolong a displacement field through a chain of refinement maps.
pub fn prolong_chain(maps: &[Prolongation], u: &[f64]) -> Field {
    maps.iter().fold(u.to_vec(), |acc, m| m.apply(&acc, 2))
}

/// Run `levels` solves on `base` and its refinements, plus a reference solve
/// [`REFERENCE_OFFSET`] refinements beyond the finest level. Each level starts
/// from the prolonged solution of the level below.
pub fn convergence_study<F, E>(
    base: &Mesh,
    build: F,
    levels: usize,
    cfg: &SolverConfig,
) -> Result<ConvergenceTable, StudyError>
where
    F: Fn(&Mesh) -> Result<VIProblem, E>,
    E: std::fmt::Display,
{
    convergence_study_min(base, build, levels, cfg, 4)
}

/// [`convergence_study`] with a caller-chosen minimum level count, for small smoke runs.
pub fn convergence_study_min<F, E>(
    base: &Mesh,
    build: F,
    levels: usize,
    cfg: &SolverConfig,
    min_levels: usize,
) -> Result<ConvergenceTable, StudyError>
where
    F: Fn(&Mesh) -> Result<VIProblem, E>,
    E: std::fmt::Display,
{
    if levels < min_levels.max(1) {
        return Err(StudyError::TooFewLevels {
            min: min_levels.max(1),
            got: levels,
        });
    }
    let mut meshes = vec![base.clone()];
    let mut maps = Vec::new();
    for _ in 1..levels + REFERENCE_OFFSET {
        let (m, p) = refine_uniform_with_map(meshes.last().unwrap());
        meshes.push(m);
        maps.push(p);
    }
    let n_ref = meshes.len() - 1;
    let mut table = ConvergenceTable {
        rows: Vec::new(),
        fitted_slope: f64::NAN,
        reference: format!(
            "fine-grid solve after {REFERENCE_OFFSET} further uniform refinements (h = {:e}, {} dofs)",
            meshes[n_ref].h,
            2 * meshes[n_ref].n_nodes()
        ),
        stiffness: f64::NAN,
    };

    let mut solutions: Vec<(Field, usize)> = Vec::new();
    let mut warm: Option<Field> = None;
    let mut last = None;
    for (l, mesh) in meshes.iter().enumerate() {
        let problem = build(mesh).map_err(|e| StudyError::Build(e.to_string()))?;
        let p0 = match (&warm, l) {
            (Some(prev), l) if l > 0 => feasible_start(&problem, &maps[l - 1].apply(prev, 2)),
            _ => problem.zero_field(),
        };
        let stage = if l == n_ref {
            "reference".to_string()
        } else {
            format!("level {}", l + 1)
        };
        match fixed_point_solve(&problem, cfg, &p0) {
            Ok((u, report)) => {
                warm = Some(u.clone());
                solutions.push((u, report.outer_iters));
                last = Some(problem);
            }
            Err(source) => {
                // solved levels are listed without errors, which need the reference
                for (k, (_, iters)) in solutions.iter().enumerate().take(levels) {
                    table.rows.push(ConvergenceRow {
                        h: meshes[k].h,
                        dofs: 2 * meshes[k].n_nodes(),
                        error: f64::NAN,
                        ratio: f64::NAN,
                        local_slope: f64::NAN,
                        interp_error: f64::NAN,
                        residual: f64::NAN,
                        outer_iters: *iters,
                    });
                }
                return Err(StudyError::Solve {
                    stage,
                    source,
                    partial: Box::new(table),
                });
            }
        }
    }

    let reference = last.expect("reference level solved");
    table.stiffness = reference.monotonicity_constant();
    let u_ref = &solutions[n_ref].0;
    for l in 0..levels {
        let (u_h, iters) = &solutions[l];
        let up = prolong_chain(&maps[l..], u_h);
        let diff: Field = up.iter().zip(u_ref).map(|(a, b)| b - a).collect();
        let error = reference.energy_norm(&diff);
        let n_l = meshes[l].n_nodes();
        let interp = prolong_chain(&maps[l..], &u_ref[..2 * n_l]);
        let idiff: Field = interp.iter().zip(u_ref).map(|(a, b)| b - a).collect();
        let interp_error = reference.energy_norm(&idiff);
        let residual = residual_r(&reference, u_ref, &interp)?;
        let (ratio, local_slope) = match table.rows.last() {
            Some(prev) => {
                let r = prev.error / error;
                (r, r.ln() / (prev.h / meshes[l].h).ln())
            }
            None => (f64::NAN, f64::NAN),
        };
        table.rows.push(ConvergenceRow {
            h: meshes[l].h,
            dofs: 2 * n_l,
            error,
            ratio,
            local_slope,
            interp_error,
            residual,
            outer_iters: *iters,
        });
    }
    let h: Vec<f64> = table.rows.iter().map(|r| r.h).collect();
    table.fitted_slope = fit_slope(&h, &table.errors());
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let h = [0.25, 0.125, 0.0625];
        let e: Vec<f64> = h.iter().map(|x: &f64| 3.0 * x.powf(0.75)).collect();
        assert!((fit_slope(&h, &e) - 0.75).abs() < 1e-12);
        assert!(fit_slope(&[1.0], &[1.0]).is_nan());
    }
}
