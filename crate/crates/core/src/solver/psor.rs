//! Projected block SOR on the condensed contact problem.
//!
//! Blocks are the tangential pair `(x_upper, x_lower)` with the term
//! `w |x_upper - x_lower|`, the normal pair `(y_upper, y_lower)` with the
//! constraint `y_lower - y_upper <= 0`, and each foundation x dof with
//! `w |x|`. Every block subproblem is solved exactly. Once the sweeps have
//! settled on a contact state, the state is polished by solving the linear
//! system it implies; the polished point is accepted only if it satisfies every
//! sign condition, in which case it is the exact minimizer.

use faer::{Mat, Side};

use super::condensed::ContactLayout;
use super::{InnerStats, SolverConfig, SolverError};

/// Sign of a tangential slip, or stick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slip {
    Stick,
    Pos,
    Neg,
}

impl Slip {
    fn of(v: f64) -> Slip {
        if v > 0.0 {
            Slip::Pos
        } else if v < 0.0 {
            Slip::Neg
        } else {
            Slip::Stick
        }
    }

    fn sign(self) -> f64 {
        match self {
            Slip::Pos => 1.0,
            Slip::Neg => -1.0,
            Slip::Stick => 0.0,
        }
    }
}

/// Contact state of every block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveSet {
    pub pair_slip: Vec<Slip>,
    pub pair_closed: Vec<bool>,
    pub foundation_slip: Vec<Slip>,
}

/// Condensed problem `min 1/2 z^T S z - b^T z + phi(z)` with frozen weights.
pub(crate) struct ContactQp<'a> {
    pub s: &'a [f64],
    pub b: &'a [f64],
    pub layout: &'a ContactLayout,
    pub w_pair: &'a [f64],
    pub w_found: &'a [f64],
}

impl ContactQp<'_> {
    pub fn n(&self) -> usize {
        self.b.len()
    }

    #[inline]
    fn s(&self, i: usize, j: usize) -> f64 {
        self.s[i * self.n() + j]
    }

    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|i| {
                let row = &self.s[i * n..(i + 1) * n];
                row.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() - self.b[i]
            })
            .collect()
    }

    pub fn phi(&self, z: &[f64]) -> f64 {
        let mut v = 0.0;
        for (p, &w) in self.layout.pairs.iter().zip(self.w_pair) {
            v += w * (z[p.xu] - z[p.xl]).abs();
        }
        for (f, &w) in self.layout.foundation.iter().zip(self.w_found) {
            v += w * z[f.x].abs();
        }
        v
    }

    /// Objective value given the gradient `g = S z - b`.
    pub fn energy_with(&self, z: &[f64], g: &[f64]) -> f64 {
        0.5 * z.iter().zip(g).zip(self.b).map(|((z, g), b)| z * (g - b)).sum::<f64>() + self.phi(z)
    }

    pub fn energy(&self, z: &[f64]) -> f64 {
        self.energy_with(z, &self.gradient(z))
    }

    pub fn scale(&self) -> f64 {
        let b = self.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let w = self
            .w_pair
            .iter()
            .chain(self.w_found)
            .fold(0.0f64, |a, v| a.max(v.abs()));
        b.max(w)
    }

    fn feasible(&self, z: &[f64]) -> bool {
        self.layout.pairs.iter().all(|p| z[p.yl] - z[p.yu] <= 0.0)
    }

    /// Natural residual: largest `|H (y* - z)|` over blocks at fixed `z`.
    pub fn natural_residual(&self, z: &[f64]) -> f64 {
        let g = self.gradient(z);
        let mut res: f64 = 0.0;
        for (k, p) in self.layout.pairs.iter().enumerate() {
            let (_, r, _) = self.solve_x(p.xu, p.xl, self.w_pair[k], z, &g);
            res = res.max(r);
            let (_, r, _) = self.solve_y(p.yu, p.yl, z, &g);
            res = res.max(r);
        }
        for (k, f) in self.layout.foundation.iter().enumerate() {
            let (_, r, _) = self.solve_f(f.x, self.w_found[k], z, &g);
            res = res.max(r);
        }
        res
    }

    fn local(&self, p: usize, q: usize, z: &[f64], g: &[f64]) -> ([[f64; 2]; 2], [f64; 2]) {
        let h = [[self.s(p, p), self.s(p, q)], [self.s(q, p), self.s(q, q)]];
        let r = [
            h[0][0] * z[p] + h[0][1] * z[q] - g[p],
            h[1][0] * z[p] + h[1][1] * z[q] - g[q],
        ];
        (h, r)
    }

    /// Exact minimizer of the tangential pair block.
    fn solve_x(&self, p: usize, q: usize, w: f64, z: &[f64], g: &[f64]) -> ([f64; 2], f64, Slip) {
        let (h, r) = self.local(p, q, z, g);
        let y0 = solve2(&h, r);
        let dq = solve2(&h, [1.0, -1.0]);
        let a = dq[0] - dq[1];
        let s0 = y0[0] - y0[1];
        let (xi, st) = if s0.abs() <= w * a {
            (s0 / a, Slip::Stick)
        } else {
            (w * s0.signum(), Slip::of(s0))
        };
        let y = [y0[0] - xi * dq[0], y0[1] - xi * dq[1]];
        let y = if st == Slip::Stick {
            let m = 0.5 * (y[0] + y[1]);
            [m, m]
        } else {
            y
        };
        (y, step_residual(&h, [y[0] - z[p], y[1] - z[q]]), st)
    }

    /// Exact minimizer of the normal pair block under `y_lower <= y_upper`.
    fn solve_y(&self, p: usize, q: usize, z: &[f64], g: &[f64]) -> ([f64; 2], f64, bool) {
        let (h, r) = self.local(p, q, z, g);
        let y0 = solve2(&h, r);
        let c0 = y0[1] - y0[0];
        let (y, closed) = if c0 <= 0.0 {
            (y0, false)
        } else {
            let hd = solve2(&h, [-1.0, 1.0]);
            let lam = c0 / (hd[1] - hd[0]);
            let y = [y0[0] - lam * hd[0], y0[1] - lam * hd[1]];
            let m = 0.5 * (y[0] + y[1]);
            ([m, m], true)
        };
        (y, step_residual(&h, [y[0] - z[p], y[1] - z[q]]), closed)
    }

    fn solve_f(&self, p: usize, w: f64, z: &[f64], g: &[f64]) -> (f64, f64, Slip) {
        let h = self.s(p, p);
        let r = h * z[p] - g[p];
        let (y, st) = if r.abs() <= w {
            (0.0, Slip::Stick)
        } else {
            ((r - w * r.signum()) / h, Slip::of(r))
        };
        (y, (h * (y - z[p])).abs(), st)
    }

    fn local_energy2(&self, h: &[[f64; 2]; 2], r: [f64; 2], y: [f64; 2]) -> f64 {
        0.5 * (h[0][0] * y[0] * y[0] + 2.0 * h[0][1] * y[0] * y[1] + h[1][1] * y[1] * y[1]) - r[0] * y[0] - r[1] * y[1]
    }

    fn apply(&self, g: &mut [f64], z: &mut [f64], p: usize, delta: f64) {
        if delta == 0.0 {
            return;
        }
        z[p] += delta;
        let n = self.n();
        // S is symmetric, so row p is column p
        for (gi, s) in g.iter_mut().zip(&self.s[p * n..(p + 1) * n]) {
            *gi += s * delta;
        }
    }

    /// One Gauss-Seidel sweep; returns the largest block residual met.
    fn sweep(&self, z: &mut [f64], g: &mut [f64], omega: f64, state: &mut ActiveSet) -> f64 {
        let mut res: f64 = 0.0;
        for (k, p) in self.layout.pairs.iter().enumerate() {
            let w = self.w_pair[k];
            let (y, r, st) = self.solve_x(p.xu, p.xl, w, z, g);
            res = res.max(r);
            state.pair_slip[k] = st;
            let y = self.relax_pair(p.xu, p.xl, y, omega, z, g, |yy| w * (yy[0] - yy[1]).abs(), |_| true);
            self.apply(g, z, p.xu, y[0] - z[p.xu]);
            self.apply(g, z, p.xl, y[1] - z[p.xl]);

            let (y, r, closed) = self.solve_y(p.yu, p.yl, z, g);
            res = res.max(r);
            state.pair_closed[k] = closed;
            let y = self.relax_pair(p.yu, p.yl, y, omega, z, g, |_| 0.0, |yy| yy[1] - yy[0] <= 0.0);
            self.apply(g, z, p.yu, y[0] - z[p.yu]);
            self.apply(g, z, p.yl, y[1] - z[p.yl]);
        }
        for (k, f) in self.layout.foundation.iter().enumerate() {
            let w = self.w_found[k];
            let (mut y, r, st) = self.solve_f(f.x, w, z, g);
            res = res.max(r);
            state.foundation_slip[k] = st;
            if omega != 1.0 {
                let h = self.s(f.x, f.x);
                let rr = h * z[f.x] - g[f.x];
                let e = |v: f64| 0.5 * h * v * v - rr * v + w * v.abs();
                let cand = z[f.x] + omega * (y - z[f.x]);
                if e(cand) <= e(z[f.x]) {
                    y = cand;
                }
            }
            self.apply(g, z, f.x, y - z[f.x]);
        }
        res
    }

    #[allow(clippy::too_many_arguments)]
    fn relax_pair(
        &self,
        p: usize,
        q: usize,
        y: [f64; 2],
        omega: f64,
        z: &[f64],
        g: &[f64],
        phi: impl Fn([f64; 2]) -> f64,
        feasible: impl Fn([f64; 2]) -> bool,
    ) -> [f64; 2] {
        if omega == 1.0 {
            return y;
        }
        let cand = [z[p] + omega * (y[0] - z[p]), z[q] + omega * (y[1] - z[q])];
        if !feasible(cand) {
            return y;
        }
        let (h, r) = self.local(p, q, z, g);
        let old = [z[p], z[q]];
        if self.local_energy2(&h, r, cand) + phi(cand) <= self.local_energy2(&h, r, old) + phi(old) {
            cand
        } else {
            y
        }
    }

    /// Solve the linear system implied by `state` and check its sign conditions.
    /// Returns the point if it is optimal, otherwise the corrected state.
    fn polish(&self, state: &ActiveSet, tol: f64) -> Result<Vec<f64>, ActiveSet> {
        let n = self.n();
        const NONE: usize = usize::MAX;
        let mut idx = vec![NONE; n];
        let mut m = 0;
        let mut lin = vec![0.0; n];
        let fresh = |m: &mut usize| {
            *m += 1;
            *m - 1
        };
        for (k, p) in self.layout.pairs.iter().enumerate() {
            match state.pair_slip[k] {
                Slip::Stick => {
                    let r = fresh(&mut m);
                    idx[p.xu] = r;
                    idx[p.xl] = r;
                }
                s => {
                    idx[p.xu] = fresh(&mut m);
                    idx[p.xl] = fresh(&mut m);
                    lin[p.xu] += self.w_pair[k] * s.sign();
                    lin[p.xl] -= self.w_pair[k] * s.sign();
                }
            }
            if state.pair_closed[k] {
                let r = fresh(&mut m);
                idx[p.yu] = r;
                idx[p.yl] = r;
            } else {
                idx[p.yu] = fresh(&mut m);
                idx[p.yl] = fresh(&mut m);
            }
        }
        for (k, f) in self.layout.foundation.iter().enumerate() {
            match state.foundation_slip[k] {
                Slip::Stick => {}
                s => {
                    idx[f.x] = fresh(&mut m);
                    lin[f.x] += self.w_found[k] * s.sign();
                }
            }
        }
        let mut a = Mat::<f64>::zeros(m, m);
        let mut rhs = Mat::<f64>::zeros(m, 1);
        for i in 0..n {
            let ri = idx[i];
            if ri == NONE {
                continue;
            }
            rhs[(ri, 0)] += self.b[i] - lin[i];
            for j in 0..n {
                let rj = idx[j];
                if rj != NONE {
                    a[(ri, rj)] += self.s(i, j);
                }
            }
        }
        let y = if m == 0 {
            Mat::<f64>::zeros(0, 1)
        } else {
            match a.llt(Side::Lower) {
                Ok(llt) => {
                    use faer::linalg::solvers::Solve;
                    llt.solve(&rhs)
                }
                Err(_) => return Err(state.clone()),
            }
        };
        let z: Vec<f64> = idx.iter().map(|&r| if r == NONE { 0.0 } else { y[(r, 0)] }).collect();
        let g = self.gradient(&z);

        let mut next = state.clone();
        let mut ok = true;
        for (k, p) in self.layout.pairs.iter().enumerate() {
            let w = self.w_pair[k];
            match state.pair_slip[k] {
                Slip::Stick => {
                    let xi = -g[p.xu];
                    if xi.abs() > w + tol {
                        next.pair_slip[k] = Slip::of(xi);
                        ok = false;
                    }
                }
                s => {
                    if s.sign() * (z[p.xu] - z[p.xl]) < 0.0 {
                        next.pair_slip[k] = Slip::Stick;
                        ok = false;
                    }
                }
            }
            if state.pair_closed[k] {
                if g[p.yu] < -tol {
                    next.pair_closed[k] = false;
                    ok = false;
                }
            } else if z[p.yl] - z[p.yu] > 0.0 {
                next.pair_closed[k] = true;
                ok = false;
            }
        }
        for (k, f) in self.layout.foundation.iter().enumerate() {
            let w = self.w_found[k];
            match state.foundation_slip[k] {
                Slip::Stick => {
                    if g[f.x].abs() > w + tol {
                        next.foundation_slip[k] = Slip::of(-g[f.x]);
                        ok = false;
                    }
                }
                s => {
                    if s.sign() * z[f.x] < 0.0 {
                        next.foundation_slip[k] = Slip::Stick;
                        ok = false;
                    }
                }
            }
        }
        if ok {
            Ok(z)
        } else {
            Err(next)
        }
    }

    /// Repeated polishing with active-set corrections.
    fn polish_loop(&self, state: &ActiveSet, tol: f64, tries: usize) -> Option<(Vec<f64>, ActiveSet)> {
        let mut st = state.clone();
        for _ in 0..tries {
            match self.polish(&st, tol) {
                Ok(z) => return Some((z, st)),
                Err(next) => {
                    if next == st {
                        return None;
                    }
                    st = next;
                }
            }
        }
        None
    }

    pub fn empty_state(&self) -> ActiveSet {
        ActiveSet {
            pair_slip: vec![Slip::Stick; self.layout.pairs.len()],
            pair_closed: vec![false; self.layout.pairs.len()],
            foundation_slip: vec![Slip::Stick; self.layout.foundation.len()],
        }
    }
}

fn solve2(h: &[[f64; 2]; 2], r: [f64; 2]) -> [f64; 2] {
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    [
        (h[1][1] * r[0] - h[0][1] * r[1]) / det,
        (h[0][0] * r[1] - h[1][0] * r[0]) / det,
    ]
}

fn step_residual(h: &[[f64; 2]; 2], d: [f64; 2]) -> f64 {
    (h[0][0] * d[0] + h[0][1] * d[1])
        .abs()
        .max((h[1][0] * d[0] + h[1][1] * d[1]).abs())
}

const POLISH_EVERY: usize = 20;
const POLISH_TRIES: usize = 8;

/// Minimize the condensed problem starting from `z0` (made feasible first).
pub(crate) fn solve(
    qp: &ContactQp<'_>,
    z0: &[f64],
    warm: Option<&ActiveSet>,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, ActiveSet, InnerStats), SolverError> {
    let mut z = z0.to_vec();
    for p in &qp.layout.pairs {
        if z[p.yl] > z[p.yu] {
            let m = 0.5 * (z[p.yl] + z[p.yu]);
            z[p.yl] = m;
            z[p.yu] = m;
        }
    }
    let scale = qp.scale();
    let mut stats = InnerStats::default();
    if qp.n() == 0 {
        return Ok((z, qp.empty_state(), stats));
    }
    let tol = cfg.inner_tol * scale.max(f64::MIN_POSITIVE);
    let mut g = qp.gradient(&z);
    stats.energy.push(qp.energy_with(&z, &g));

    if let Some(st) = warm {
        if st.pair_slip.len() == qp.layout.pairs.len() {
            if let Some((zp, st)) = qp.polish_loop(st, tol, POLISH_TRIES) {
                let e = qp.energy(&zp);
                if e <= stats.energy[0] + 1e-14 * e.abs().max(1.0) {
                    stats.residual = qp.natural_residual(&zp);
                    stats.polished = true;
                    stats.energy.push(e);
                    return Ok((zp, st, stats));
                }
            }
        }
    }

    let mut state = qp.empty_state();
    let omega = cfg.relaxation;
    for sweep in 1..=cfg.inner_max_iters {
        let res = qp.sweep(&mut z, &mut g, omega, &mut state);
        stats.iterations = sweep;
        stats.energy.push(qp.energy_with(&z, &g));
        if res <= tol {
            let exact = qp.natural_residual(&z);
            if exact <= tol {
                stats.residual = exact;
                return Ok((z, state, stats));
            }
        }
        if sweep % POLISH_EVERY == 0 {
            if let Some((zp, st)) = qp.polish_loop(&state, tol, POLISH_TRIES) {
                let e = qp.energy(&zp);
                if e <= *stats.energy.last().unwrap() + 1e-14 * e.abs().max(1.0) && qp.feasible(&zp) {
                    stats.residual = qp.natural_residual(&zp);
                    stats.polished = true;
                    stats.energy.push(e);
                    return Ok((zp, st, stats));
                }
            }
        }
    }
    Err(SolverError::InnerNotConverged {
        iterations: cfg.inner_max_iters,
        residual: qp.natural_residual(&z) / scale.max(f64::MIN_POSITIVE),
    })
}
