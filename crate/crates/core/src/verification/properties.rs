//! Sampled structural properties: interpolation error, convexity and
//! continuity of the friction functional, and the variational inequality itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{interpolate_nodal, ElementGeometry, Field, VIProblem};
use crate::mesh::Mesh;
use crate::solver::feasible_start;

use super::residual::residual_r;

/// Step used for finite-difference derivatives of analytic fields.
const FD_STEP: f64 = 1e-5;

fn grad<F: Fn([f64; 2]) -> [f64; 2]>(f: &F, x: [f64; 2]) -> [[f64; 2]; 2] {
    let h = FD_STEP;
    let px = f([x[0] + h, x[1]]);
    let mx = f([x[0] - h, x[1]]);
    let py = f([x[0], x[1] + h]);
    let my = f([x[0], x[1] - h]);
    // g[c][d] = d u_c / d x_d
    [
        [(px[0] - mx[0]) / (2.0 * h), (py[0] - my[0]) / (2.0 * h)],
        [(px[1] - mx[1]) / (2.0 * h), (py[1] - my[1]) / (2.0 * h)],
    ]
}

/// `||v - I_h v||_V` for an analytic field `v`, by three-point quadrature per triangle.
pub fn interpolation_error<F: Fn([f64; 2]) -> [f64; 2]>(mesh: &Mesh, f: F) -> f64 {
    let vh = interpolate_nodal(mesh, |x, _| f(x));
    let mut acc = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let g = ElementGeometry::new(mesh, t).expect("valid mesh");
        let eh = g.strain(tri.nodes, &vh);
        let p: Vec<[f64; 2]> = tri.nodes.iter().map(|&n| mesh.nodes[n]).collect();
        for bary in [
            [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
            [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
            [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
        ] {
            let x = [
                bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
                bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
            ];
            let d = grad(&f, x);
            let exx = d[0][0] - eh.xx;
            let eyy = d[1][1] - eh.yy;
            let exy = 0.5 * (d[0][1] + d[1][0]) - eh.xy;
            acc += g.area / 3.0 * (exx * exx + eyy * eyy + 2.0 * exy * exy);
        }
    }
    acc.sqrt()
}

/// Discrete stand-in for the `H^2` seminorm: second differences at triangle
/// centroids, integrated with the centroid rule.
pub fn h2_surrogate<F: Fn([f64; 2]) -> [f64; 2]>(mesh: &Mesh, f: F) -> f64 {
    let h = 1e-3;
    let mut acc = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.triangle_area(t);
        let c = tri.nodes.iter().fold([0.0, 0.0], |a, &n| {
            [a[0] + mesh.nodes[n][0] / 3.0, a[1] + mesh.nodes[n][1] / 3.0]
        });
        let at = |dx: f64, dy: f64| f([c[0] + dx * h, c[1] + dy * h]);
        let f0 = at(0.0, 0.0);
        let (fxp, fxm, fyp, fym) = (at(1.0, 0.0), at(-1.0, 0.0), at(0.0, 1.0), at(0.0, -1.0));
        let (fpp, fpm, fmp, fmm) = (at(1.0, 1.0), at(1.0, -1.0), at(-1.0, 1.0), at(-1.0, -1.0));
        for k in 0..2 {
            let dxx = (fxp[k] - 2.0 * f0[k] + fxm[k]) / (h * h);
            let dyy = (fyp[k] - 2.0 * f0[k] + fym[k]) / (h * h);
            let dxy = (fpp[k] - fpm[k] - fmp[k] + fmm[k]) / (4.0 * h * h);
            acc += area * (dxx * dxx + dyy * dyy + 2.0 * dxy * dxy);
        }
    }
    acc.sqrt()
}

/// `||v - I_h v||_V / (h |v|_{H^2})`: bounded across levels when interpolation is first order.
pub fn interpolation_constant<F: Fn([f64; 2]) -> [f64; 2] + Copy>(mesh: &Mesh, f: F) -> f64 {
    interpolation_error(mesh, f) / (mesh.h * h2_surrogate(mesh, f))
}

/// Random field with free entries uniform in `[-scale, scale]`, fixed dofs zero.
pub fn random_field(problem: &VIProblem, rng: &mut ChaCha8Rng, scale: f64) -> Field {
    let mut u: Field = (0..problem.n_dofs())
        .map(|_| scale * rng.gen_range(-1.0..=1.0))
        .collect();
    problem.dofs.clamp(&mut u);
    u
}

/// Largest `j(w, t a + (1-t) b) - t j(w, a) - (1-t) j(w, b)` over random samples.
/// Convexity in the second argument makes this non-positive up to round-off.
pub fn j_convexity_defect(problem: &VIProblem, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let w = random_field(problem, &mut rng, 0.05);
        let a = random_field(problem, &mut rng, 1.0);
        let b = random_field(problem, &mut rng, 1.0);
        let t: f64 = rng.gen_range(0.0..=1.0);
        let mid: Field = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        let bounds = problem.friction_bounds(&w);
        let lhs = problem.j_with_bounds(&bounds, &mid);
        let rhs = t * problem.j_with_bounds(&bounds, &a) + (1.0 - t) * problem.j_with_bounds(&bounds, &b);
        worst = worst.max(lhs - rhs);
    }
    worst
}

/// Sampled continuity of `j(w, .)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzSample {
    /// Largest `|j(w, v1) - j(w, v2)| / ||v1 - v2||_V`.
    pub max_ratio: f64,
    /// Largest `|j(w, v1) - j(w, v2)| - D_w(v1 - v2)`, where `D_w` is the
    /// weighted l1 seminorm bounding the difference; non-positive up to round-off.
    pub max_excess: f64,
}

pub fn j_lipschitz_sample(problem: &VIProblem, samples: usize, seed: u64) -> LipschitzSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = LipschitzSample {
        max_ratio: 0.0,
        max_excess: f64::NEG_INFINITY,
    };
    for k in 0..samples {
        let w = random_field(problem, &mut rng, 0.05);
        let v1 = random_field(problem, &mut rng, 1.0);
        // alternate large and small separations
        let s = if k % 2 == 0 { 1.0 } else { 1e-3 };
        let d = random_field(problem, &mut rng, s);
        let v2: Field = v1.iter().zip(&d).map(|(a, b)| a + b).collect();
        let b = problem.friction_bounds(&w);
        let diff = (problem.j_with_bounds(&b, &v1) - problem.j_with_bounds(&b, &v2)).abs();
        let mut seminorm = 0.0;
        for (i, n) in problem.foundation_nodes.iter().enumerate() {
            seminorm += n.weight
                * (b.foundation_normal[i].abs() * d[2 * n.node + 1].abs()
                    + b.foundation_tangential[i] * d[2 * n.node].abs());
        }
        for (i, pairs) in problem.interface_nodes.iter().enumerate() {
            for (k, p) in pairs.iter().enumerate() {
                seminorm += p.weight * b.interface_tangential[i][k] * (d[2 * p.upper] - d[2 * p.lower]).abs();
            }
        }
        let nv = problem.energy_norm(&d);
        if nv > 0.0 {
            out.max_ratio = out.max_ratio.max(diff / nv);
        }
        out.max_excess = out.max_excess.max(diff - seminorm);
    }
    out
}

/// Sampled estimate of the smallest `m` with
/// `j(w1, v2) - j(w1, v1) - j(w2, v2) + j(w2, v1) <= m ||w1 - w2|| ||v1 - v2||`.
pub fn estimate_m(problem: &VIProblem, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m: f64 = 0.0;
    for _ in 0..samples {
        let w1 = random_field(problem, &mut rng, 0.05);
        let dw = random_field(problem, &mut rng, 0.01);
        let w2: Field = w1.iter().zip(&dw).map(|(a, b)| a + b).collect();
        let v1 = random_field(problem, &mut rng, 1.0);
        let v2 = random_field(problem, &mut rng, 1.0);
        let b1 = problem.friction_bounds(&w1);
        let b2 = problem.friction_bounds(&w2);
        let num = problem.j_with_bounds(&b1, &v2) - problem.j_with_bounds(&b1, &v1) - problem.j_with_bounds(&b2, &v2)
            + problem.j_with_bounds(&b2, &v1);
        let dv: Field = v1.iter().zip(&v2).map(|(a, b)| a - b).collect();
        let den = problem.energy_norm(&dw) * problem.energy_norm(&dv);
        if den > 0.0 {
            m = m.max(num / den);
        }
    }
    m
}

/// Smallest `R(u, v)` over random admissible `v` near `u`. A solution of the
/// inequality gives a value no lower than round-off.
pub fn vi_min_residual(problem: &VIProblem, u: &[f64], samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = u.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-6);
    let mut worst = f64::INFINITY;
    for k in 0..samples {
        let s = scale * [1.0, 0.1, 0.01][k % 3];
        let d = random_field(problem, &mut rng, s);
        let trial: Field = u.iter().zip(&d).map(|(a, b)| a + b).collect();
        let v = feasible_start(problem, &trial);
        let r = residual_r(problem, u, &v).expect("fields match the problem");
        worst = worst.min(r);
    }
    worst
}
