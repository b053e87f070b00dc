//! Contact and friction conditions evaluated with recovered stresses.

use serde::{Deserialize, Serialize};

use crate::assembly::{compression, VIProblem};
use crate::constitutive::Sym2;

/// Largest violation of each contact condition. All entries are non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktReport {
    /// `max [u_N]_+` over interface pairs.
    pub max_penetration: f64,
    /// `max |sigma_N [u_N]|`.
    pub max_complementarity: f64,
    /// `max (|sigma_T| - g_T)_+` on interfaces.
    pub max_friction_violation: f64,
    /// `max |g_T |[u_T]| + sigma_T [u_T]|` on interfaces.
    pub max_stick_slip: f64,
    /// `max |sigma_beta + g_N(u_beta)|` on the foundation.
    pub foundation_normal: f64,
    /// `max (|sigma_tau| - g_T)_+` on the foundation.
    pub foundation_friction: f64,
    /// `max |g_T |u_tau| + sigma_tau u_tau|` on the foundation.
    pub foundation_stick_slip: f64,
}

impl KktReport {
    pub const FIELDS: [&'static str; 7] = [
        "max_penetration",
        "max_complementarity",
        "max_friction_violation",
        "max_stick_slip",
        "foundation_normal",
        "foundation_friction",
        "foundation_stick_slip",
    ];

    pub fn values(&self) -> [f64; 7] {
        [
            self.max_penetration,
            self.max_complementarity,
            self.max_friction_violation,
            self.max_stick_slip,
            self.foundation_normal,
            self.foundation_friction,
            self.foundation_stick_slip,
        ]
    }
}

/// Area-weighted average of element stresses around each foundation node.
fn foundation_stress(problem: &VIProblem, element: &[Sym2]) -> Vec<Sym2> {
    let last = problem.mesh.n_layers() - 1;
    let mut acc = vec![(Sym2::ZERO, 0.0); problem.mesh.n_nodes()];
    for (t, tri) in problem.mesh.triangles.iter().enumerate() {
        if tri.layer != last {
            continue;
        }
        let a = problem.geometry[t].area;
        for &n in &tri.nodes {
            acc[n].0 = acc[n].0.add(&element[t].scale(a));
            acc[n].1 += a;
        }
    }
    problem
        .foundation_nodes
        .iter()
        .map(|f| {
            let (s, a) = acc[f.node];
            s.scale(1.0 / a)
        })
        .collect()
}

/// Evaluate every contact condition at `u`. Nodes on clamped sides are skipped.
pub fn kkt_check(problem: &VIProblem, u: &[f64]) -> KktReport {
    let mut r = KktReport::default();
    let fixed = |n: usize| problem.dofs.is_fixed(2 * n);
    let stresses = problem.stress_field(u);
    for (i, pairs) in problem.interface_nodes.iter().enumerate() {
        for (k, p) in pairs.iter().enumerate() {
            if fixed(p.upper) || fixed(p.lower) {
                continue;
            }
            let s = stresses.interfaces[i][k];
            let jn = u[2 * p.lower + 1] - u[2 * p.upper + 1];
            let jt = u[2 * p.upper] - u[2 * p.lower];
            let gt = problem.interfaces[i].eval(compression(s.sigma_n));
            r.max_penetration = r.max_penetration.max(jn.max(0.0));
            r.max_complementarity = r.max_complementarity.max((s.sigma_n * jn).abs());
            r.max_friction_violation = r.max_friction_violation.max((s.sigma_t.abs() - gt).max(0.0));
            r.max_stick_slip = r.max_stick_slip.max((gt * jt.abs() + s.sigma_t * jt).abs());
        }
    }
    let fs = foundation_stress(problem, &stresses.element);
    for (f, s) in problem.foundation_nodes.iter().zip(&fs) {
        if fixed(f.node) {
            continue;
        }
        let u_beta = -u[2 * f.node + 1];
        let ut = u[2 * f.node];
        let gn = problem.foundation.g_n(u_beta);
        let gt = problem.foundation.g_t(gn);
        let (sigma_beta, sigma_tau) = (s.yy, -s.xy);
        r.foundation_normal = r.foundation_normal.max((sigma_beta + gn).abs());
        r.foundation_friction = r.foundation_friction.max((sigma_tau.abs() - gt).max(0.0));
        r.foundation_stick_slip = r.foundation_stick_slip.max((gt * ut.abs() + sigma_tau * ut).abs());
    }
    r
}

/// Stick/slip consistency by explicit case analysis of the friction law:
/// a sticking pair needs nothing further, a slipping pair needs
/// `sigma_T = -g_T sign([u_T])`. Returns the largest `|[u_T]| |sigma_T + g_T sign([u_T])|`.
pub fn stick_slip_case_analysis(problem: &VIProblem, u: &[f64]) -> f64 {
    let fixed = |n: usize| problem.dofs.is_fixed(2 * n);
    let stresses = problem.stress_field(u);
    let mut worst: f64 = 0.0;
    for (i, pairs) in problem.interface_nodes.iter().enumerate() {
        for (k, p) in pairs.iter().enumerate() {
            if fixed(p.upper) || fixed(p.lower) {
                continue;
            }
            let s = stresses.interfaces[i][k];
            let jt = u[2 * p.upper] - u[2 * p.lower];
            if jt == 0.0 {
                continue;
            }
            let gt = problem.interfaces[i].eval(compression(s.sigma_n));
            worst = worst.max(jt.abs() * (s.sigma_t + gt * jt.signum()).abs());
        }
    }
    worst
}

/// Reference magnitudes used to scale KKT thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktScales {
    /// Largest element stress norm.
    pub stress: f64,
    /// Largest nodal displacement magnitude.
    pub displacement: f64,
}

pub fn kkt_scales(problem: &VIProblem, u: &[f64]) -> KktScales {
    let stress = problem.element_stresses(u).iter().map(Sym2::norm).fold(0.0, f64::max);
    let displacement = u
        .chunks(2)
        .map(|c| (c[0] * c[0] + c[1] * c[1]).sqrt())
        .fold(0.0, f64::max);
    KktScales { stress, displacement }
}

/// Constant `c` in [`kkt_thresholds`]. Calibrated once on the shipped pavement
/// configuration, where the largest entry sits near `2 (h + tol) * scale`
/// (friction violation at the load edges), and frozen.
pub const KKT_CONSTANT: f64 = 10.0;

/// Per-entry thresholds `c (h + tol) * scale`, with each entry's physical units.
pub fn kkt_thresholds(c: f64, h: f64, tol: f64, s: KktScales) -> KktReport {
    let f = c * (h + tol);
    let su = s.stress * s.displacement;
    KktReport {
        max_penetration: f * s.displacement,
        max_complementarity: f * su,
        max_friction_violation: f * s.stress,
        max_stick_slip: f * su,
        foundation_normal: f * s.stress,
        foundation_friction: f * s.stress,
        foundation_stick_slip: f * su,
    }
}

/// Names of entries of `report` above `limit`.
pub fn exceeded(report: &KktReport, limit: &KktReport) -> Vec<&'static str> {
    KktReport::FIELDS
        .iter()
        .zip(report.values().iter().zip(limit.values()))
        .filter(|(_, (v, l))| **v > *l)
        .map(|(n, _)| *n)
        .collect()
}
