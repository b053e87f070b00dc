//! Variational residual and an elementwise integration-by-parts check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{AssemblyError, VIProblem};

/// `a(u, v - u) - (f, v - u) + j(u, v) - j(u, u)`, which is non-negative for
/// every admissible `v` when `u` solves the inequality.
pub fn residual_r(problem: &VIProblem, u: &[f64], v: &[f64]) -> Result<f64, AssemblyError> {
    problem.check_field(u)?;
    problem.check_field(v)?;
    let b = problem.friction_bounds(u);
    let au = problem.internal_force(u);
    let mut r = 0.0;
    for i in 0..u.len() {
        let d = v[i] - u[i];
        r += (au[i] - problem.load[i]) * d;
    }
    Ok(r + problem.j_with_bounds(&b, v) - problem.j_with_bounds(&b, u))
}

/// Outcome of [`greens_identity_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreensDefect {
    /// `|(sigma, eps(v)) + (div sigma, v) - sum of edge fluxes|`, worst over test fields.
    pub defect: f64,
    /// Sum of `|int_T sigma : eps(v)|`, for relative comparison.
    pub scale: f64,
}

/// Green's formula for one test field `v`. The element stress is constant,
/// so the divergence term vanishes and each element contributes
/// `int_T sigma : eps(v) - int_dT (sigma nu) . v`; interface edges are
/// visited from both sides.
pub fn greens_defect(problem: &VIProblem, u: &[f64], v: &[f64]) -> Result<GreensDefect, AssemblyError> {
    problem.check_field(u)?;
    problem.check_field(v)?;
    let stresses = problem.element_stresses(u);
    let (mut volume_sum, mut flux_sum, mut scale) = (0.0, 0.0, 0.0);
    for (t, tri) in problem.mesh.triangles.iter().enumerate() {
        let g = &problem.geometry[t];
        let sigma = stresses[t];
        let volume = g.area * sigma.ddot(&g.strain(tri.nodes, v));
        for k in 0..3 {
            let (a, b) = (tri.nodes[k], tri.nodes[(k + 1) % 3]);
            let (pa, pb) = (problem.mesh.nodes[a], problem.mesh.nodes[b]);
            // outward normal of a counter-clockwise edge, scaled by its length
            let tr = sigma.apply([pb[1] - pa[1], pa[0] - pb[0]]);
            let vm = [0.5 * (v[2 * a] + v[2 * b]), 0.5 * (v[2 * a + 1] + v[2 * b + 1])];
            flux_sum += tr[0] * vm[0] + tr[1] * vm[1];
        }
        volume_sum += volume;
        scale += volume.abs();
    }
    Ok(GreensDefect {
        defect: (volume_sum - flux_sum).abs(),
        scale,
    })
}

/// Number of random test fields used by [`greens_identity_check`].
pub const GREENS_SAMPLES: usize = 20;

/// Worst [`greens_defect`] over random test fields.
pub fn greens_identity_check(problem: &VIProblem, u: &[f64], seed: u64) -> Result<GreensDefect, AssemblyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GreensDefect {
        defect: 0.0,
        scale: 0.0,
    };
    for _ in 0..GREENS_SAMPLES {
        let v: Vec<f64> = (0..problem.n_dofs()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let d = greens_defect(problem, u, &v)?;
        out.defect = out.defect.max(d.defect);
        out.scale = out.scale.max(d.scale);
    }
    Ok(out)
}
