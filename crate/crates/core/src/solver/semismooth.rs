//! Damped Newton on the condensed problem with `|t|` replaced by
//! `sqrt(t^2 + eps^2) - eps`. Non-penetration is handled by a primal-dual
//! active set: closed pairs are tied, and a tie is released when its
//! multiplier turns negative.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use super::condensed::ContactLayout;
use super::psor::ContactQp;
use super::{InnerStats, SolverConfig, SolverError};

fn psi(t: f64, eps: f64) -> f64 {
    (t * t + eps * eps).sqrt() - eps
}

fn dpsi(t: f64, eps: f64) -> f64 {
    t / (t * t + eps * eps).sqrt()
}

fn ddpsi(t: f64, eps: f64) -> f64 {
    let r = t * t + eps * eps;
    eps * eps / (r * r.sqrt())
}

struct Smoothed<'a, 'b> {
    qp: &'a ContactQp<'b>,
    eps: f64,
}

impl Smoothed<'_, '_> {
    fn layout(&self) -> &ContactLayout {
        self.qp.layout
    }

    fn energy(&self, z: &[f64]) -> f64 {
        let g = self.qp.gradient(z);
        let quad = 0.5
            * z.iter()
                .zip(&g)
                .zip(self.qp.b)
                .map(|((z, g), b)| z * (g - b))
                .sum::<f64>();
        let mut v = quad;
        for (p, &w) in self.layout().pairs.iter().zip(self.qp.w_pair) {
            v += w * psi(z[p.xu] - z[p.xl], self.eps);
        }
        for (f, &w) in self.layout().foundation.iter().zip(self.qp.w_found) {
            v += w * psi(z[f.x], self.eps);
        }
        v
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let mut g = self.qp.gradient(z);
        for (p, &w) in self.layout().pairs.iter().zip(self.qp.w_pair) {
            let d = w * dpsi(z[p.xu] - z[p.xl], self.eps);
            g[p.xu] += d;
            g[p.xl] -= d;
        }
        for (f, &w) in self.layout().foundation.iter().zip(self.qp.w_found) {
            g[f.x] += w * dpsi(z[f.x], self.eps);
        }
        g
    }

    fn hessian_entry_extra(&self, z: &[f64], h: &mut [f64], n: usize) {
        for (p, &w) in self.layout().pairs.iter().zip(self.qp.w_pair) {
            let c = w * ddpsi(z[p.xu] - z[p.xl], self.eps);
            h[p.xu * n + p.xu] += c;
            h[p.xl * n + p.xl] += c;
            h[p.xu * n + p.xl] -= c;
            h[p.xl * n + p.xu] -= c;
        }
        for (f, &w) in self.layout().foundation.iter().zip(self.qp.w_found) {
            h[f.x * n + f.x] += w * ddpsi(z[f.x], self.eps);
        }
    }
}

fn reduced_norm(g: &[f64], idx: &[usize], m: usize) -> f64 {
    let mut gr = vec![0.0; m];
    for (i, v) in g.iter().enumerate() {
        gr[idx[i]] += v;
    }
    gr.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Reduced coordinates: closed pairs share one unknown for both y values.
fn tie_map(layout: &ContactLayout, n: usize, closed: &[bool]) -> (Vec<usize>, usize) {
    let mut idx = vec![usize::MAX; n];
    let mut m = 0;
    for (k, p) in layout.pairs.iter().enumerate() {
        idx[p.xu] = m;
        idx[p.xl] = m + 1;
        m += 2;
        if closed[k] {
            idx[p.yu] = m;
            idx[p.yl] = m;
            m += 1;
        } else {
            idx[p.yu] = m;
            idx[p.yl] = m + 1;
            m += 2;
        }
    }
    for i in idx.iter_mut() {
        if *i == usize::MAX {
            *i = m;
            m += 1;
        }
    }
    (idx, m)
}

pub(crate) fn solve(qp: &ContactQp<'_>, z0: &[f64], cfg: &SolverConfig) -> Result<(Vec<f64>, InnerStats), SolverError> {
    let eps = cfg.regularization_eps;
    if !(eps > 0.0) {
        return Err(SolverError::Config(
            "semismooth method requires regularization_eps > 0".into(),
        ));
    }
    let n = qp.n();
    let layout = qp.layout;
    let mut z = z0.to_vec();
    let mut closed: Vec<bool> = layout.pairs.iter().map(|p| z[p.yl] - z[p.yu] >= 0.0).collect();
    for p in &layout.pairs {
        if z[p.yl] > z[p.yu] {
            let m = 0.5 * (z[p.yl] + z[p.yu]);
            z[p.yl] = m;
            z[p.yu] = m;
        }
    }
    let mut stats = InnerStats::default();
    if n == 0 {
        return Ok((z, stats));
    }
    // Newton on a tiny eps crawls across the kinks, so eps is lowered from a
    // fraction of the displacement scale with warm starts.
    let length = (0..n)
        .filter(|&i| qp.s[i * n + i] > 0.0)
        .map(|i| qp.b[i].abs() / qp.s[i * n + i])
        .fold(0.0f64, f64::max);
    let mut levels = vec![eps];
    let mut e = eps;
    while e < 1e-2 * length {
        e *= 100.0;
        levels.push(e);
    }
    let mut newton_steps = 0usize;
    for &e in levels.iter().rev() {
        let sm = Smoothed { qp, eps: e };
        solve_level(&sm, &mut z, &mut closed, cfg, &mut newton_steps, &mut stats)?;
    }
    stats.iterations = newton_steps;
    Ok((z, stats))
}

fn solve_level(
    sm: &Smoothed<'_, '_>,
    z: &mut Vec<f64>,
    closed: &mut [bool],
    cfg: &SolverConfig,
    newton_steps: &mut usize,
    stats: &mut InnerStats,
) -> Result<(), SolverError> {
    let qp = sm.qp;
    let n = qp.n();
    let layout = qp.layout;
    let tol = cfg.inner_tol * qp.scale().max(f64::MIN_POSITIVE);
    let wmax = qp.w_pair.iter().chain(qp.w_found).fold(0.0f64, |a, v| a.max(v.abs()));
    for _round in 0..(10 * layout.pairs.len() + 10) {
        // Newton on the current tie pattern
        loop {
            let (idx, m) = tie_map(layout, n, closed);
            let g = sm.gradient(z);
            let mut gr = vec![0.0; m];
            for i in 0..n {
                gr[idx[i]] += g[i];
            }
            let gnorm = gr.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            stats.residual = gnorm;
            // the smoothed gradient at a kink is only known to about
            // eps_mach * |z| * w / eps; below that Newton stagnates
            let zmax = z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let floor = 16.0 * f64::EPSILON * zmax * wmax / sm.eps;
            if gnorm <= tol.max(floor) {
                break;
            }
            if *newton_steps >= cfg.inner_max_iters {
                return Err(SolverError::InnerNotConverged {
                    iterations: *newton_steps,
                    residual: gnorm / qp.scale().max(f64::MIN_POSITIVE),
                });
            }
            *newton_steps += 1;
            let mut h = qp.s.to_vec();
            sm.hessian_entry_extra(z, &mut h, n);
            let mut hr = Mat::<f64>::zeros(m, m);
            for i in 0..n {
                for j in 0..n {
                    hr[(idx[i], idx[j])] += h[i * n + j];
                }
            }
            let rhs = Mat::from_fn(m, 1, |i, _| -gr[i]);
            let llt = hr.llt(Side::Lower).map_err(|_| SolverError::NotCoercive)?;
            let dr = llt.solve(&rhs);
            let d: Vec<f64> = (0..n).map(|i| dr[(idx[i], 0)]).collect();

            // largest feasible step for open pairs
            let mut alpha_max: f64 = 1.0;
            let mut blocking = None;
            for (k, p) in layout.pairs.iter().enumerate() {
                if closed[k] {
                    continue;
                }
                let c = z[p.yl] - z[p.yu];
                let dc = d[p.yl] - d[p.yu];
                if dc > 0.0 && c + alpha_max * dc > 0.0 {
                    alpha_max = (-c / dc).max(0.0);
                    blocking = Some(k);
                }
            }
            let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            let e0 = sm.energy(z);
            let mut alpha = alpha_max;
            let mut trial;
            loop {
                trial = z.iter().zip(&d).map(|(a, b)| a + alpha * b).collect::<Vec<_>>();
                // near the solution the energy decrease drops below round-off;
                // a step that halves the reduced gradient is then taken as is
                let et = sm.energy(&trial);
                let accept = et <= e0 + 1e-4 * alpha * slope
                    || (et <= e0 + 1e-13 * e0.abs() && reduced_norm(&sm.gradient(&trial), &idx, m) <= 0.5 * gnorm);
                if accept || alpha < 1e-12 {
                    break;
                }
                alpha *= 0.5;
                blocking = None;
            }
            if let Some(k) = blocking {
                let p = layout.pairs[k];
                let mid = 0.5 * (trial[p.yl] + trial[p.yu]);
                trial[p.yl] = mid;
                trial[p.yu] = mid;
                closed[k] = true;
            }
            let moved = alpha * d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            *z = trial;
            if alpha < 1e-12 && moved == 0.0 {
                break;
            }
        }
        // release the tie with the most negative multiplier; releasing one at a
        // time keeps the next direction from re-closing it at once
        let g = sm.gradient(z);
        let release = layout
            .pairs
            .iter()
            .enumerate()
            .filter(|(k, p)| closed[*k] && g[p.yu] < -tol)
            .min_by(|a, b| g[a.1.yu].total_cmp(&g[b.1.yu]))
            .map(|(k, _)| k);
        if let Some(k) = release {
            closed[k] = false;
        } else {
            return Ok(());
        }
    }
    Err(SolverError::InnerNotConverged {
        iterations: *newton_steps,
        residual: stats.residual / qp.scale().max(f64::MIN_POSITIVE),
    })
}
