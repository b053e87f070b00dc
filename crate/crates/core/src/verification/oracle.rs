//! Dense reference solver for small inner problems.
//!
//! Solves the dual of `min 1/2 u^T K u - f^T u + sum w_k |d_k . u|` subject to
//! `c_l . u <= 0`: a box-constrained QP in the multipliers `xi_k in [-w_k, w_k]`
//! and `lambda_l >= 0`, handled by a primal active-set method on the dense
//! matrix `G = B K^-1 B^T`. Shares no code with the iterative solvers.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use thiserror::Error;

use crate::assembly::{Field, VIProblem};

/// Largest problem the dense oracle accepts.
pub const DENSE_LIMIT: usize = 200;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("dense oracle limited to {DENSE_LIMIT} dofs (problem has {0})")]
    TooManyDofs(usize),
    #[error("dense oracle requires linear material laws")]
    Nonlinear,
    #[error("matrix not positive definite")]
    Indefinite,
    #[error("active-set iteration limit reached")]
    NoConvergence,
}

/// One dual row: `sum coef * u[dof]`, with bounds on its multiplier.
struct Row {
    terms: Vec<(usize, f64)>,
    lo: f64,
    hi: f64,
}

pub fn oracle_solve_dense(problem: &VIProblem, p: &[f64], tol: f64) -> Result<Field, OracleError> {
    let n_all = problem.n_dofs();
    if n_all > DENSE_LIMIT {
        return Err(OracleError::TooManyDofs(n_all));
    }
    let k_full = problem.stiffness.as_ref().ok_or(OracleError::Nonlinear)?;
    let free: Vec<usize> = (0..n_all).filter(|&d| !problem.dofs.fixed[d]).collect();
    let mut pos = vec![usize::MAX; n_all];
    for (i, &d) in free.iter().enumerate() {
        pos[d] = i;
    }
    let n = free.len();

    // load including the frozen foundation pressure
    let mut f = problem.load.clone();
    let mut rows = Vec::new();
    for fnode in &problem.foundation_nodes {
        let node = fnode.node;
        let gn = problem.foundation.g_n(-p[2 * node + 1]);
        f[2 * node + 1] += fnode.weight * gn;
        let w = fnode.weight * problem.foundation.g_t(gn);
        if pos[2 * node] != usize::MAX {
            rows.push(Row {
                terms: vec![(pos[2 * node], 1.0)],
                lo: -w,
                hi: w,
            });
        }
    }
    for (i, pairs) in problem.interface_nodes.iter().enumerate() {
        let recovered = problem
            .recover_interface_stress(p, i)
            .expect("interface index within range");
        for (k, pr) in pairs.iter().enumerate() {
            let (xu, xl, yu, yl) = (2 * pr.upper, 2 * pr.lower, 2 * pr.upper + 1, 2 * pr.lower + 1);
            if [xu, xl, yu, yl].iter().any(|&d| pos[d] == usize::MAX) {
                continue;
            }
            let s = (-recovered[k].sigma_n).max(0.0);
            let w = pr.weight * problem.interfaces[i].eval(s);
            rows.push(Row {
                terms: vec![(pos[xu], 1.0), (pos[xl], -1.0)],
                lo: -w,
                hi: w,
            });
            rows.push(Row {
                terms: vec![(pos[yl], 1.0), (pos[yu], -1.0)],
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
    }

    let k = Mat::from_fn(n, n, |i, j| k_full.get(free[i], free[j]));
    let llt = k.llt(Side::Lower).map_err(|_| OracleError::Indefinite)?;
    let ff = Mat::from_fn(n, 1, |i, _| f[free[i]]);
    let m = rows.len();
    let bt = Mat::from_fn(n, m, |i, r| {
        rows[r].terms.iter().filter(|(d, _)| *d == i).map(|(_, c)| *c).sum()
    });
    let kinv_bt = llt.solve(&bt);
    let kinv_f = llt.solve(&ff);
    // G = B K^-1 B^T, h = B K^-1 f
    let g = bt.transpose() * &kinv_bt;
    let h = bt.transpose() * &kinv_f;

    let y = box_qp(&g, &h, &rows, tol)?;
    let mut u = vec![0.0; n_all];
    for i in 0..n {
        let mut v = kinv_f[(i, 0)];
        for r in 0..m {
            v -= kinv_bt[(i, r)] * y[r];
        }
        u[free[i]] = v;
    }
    Ok(u)
}

#[derive(Clone, Copy, PartialEq)]
enum Bound {
    Free,
    Lo,
    Hi,
}

/// `min 1/2 y^T G y - h^T y` subject to `lo <= y <= hi`, by primal active set.
fn box_qp(g: &Mat<f64>, h: &Mat<f64>, rows: &[Row], tol: f64) -> Result<Vec<f64>, OracleError> {
    let m = rows.len();
    let mut y = vec![0.0; m];
    let mut state: Vec<Bound> = rows
        .iter()
        .map(|r| if r.lo == 0.0 { Bound::Lo } else { Bound::Free })
        .collect();
    for (r, st) in rows.iter().zip(state.iter_mut()) {
        if r.lo == r.hi {
            *st = Bound::Lo;
        }
    }
    let gscale = (0..m).map(|i| g[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    for _ in 0..(20 * m + 20) {
        let free: Vec<usize> = (0..m).filter(|&i| state[i] == Bound::Free).collect();
        // equality-constrained minimizer on the free set
        let mut target = y.clone();
        for (i, st) in state.iter().enumerate() {
            match st {
                Bound::Lo => target[i] = rows[i].lo,
                Bound::Hi => target[i] = rows[i].hi,
                Bound::Free => {}
            }
        }
        if !free.is_empty() {
            let nf = free.len();
            let a = Mat::from_fn(nf, nf, |i, j| g[(free[i], free[j])]);
            let rhs = Mat::from_fn(nf, 1, |i, _| {
                let fi = free[i];
                let mut v = h[(fi, 0)];
                for j in 0..m {
                    if state[j] != Bound::Free {
                        v -= g[(fi, j)] * target[j];
                    }
                }
                v
            });
            let sol = a.llt(Side::Lower).map_err(|_| OracleError::Indefinite)?.solve(&rhs);
            for (i, &fi) in free.iter().enumerate() {
                target[fi] = sol[(i, 0)];
            }
        }
        // step from y toward target, stopping at the first bound hit
        let mut alpha = 1.0;
        let mut block = None;
        for &i in &free {
            let d = target[i] - y[i];
            if d < 0.0 && target[i] < rows[i].lo {
                let a = (rows[i].lo - y[i]) / d;
                if a < alpha {
                    alpha = a;
                    block = Some((i, Bound::Lo));
                }
            } else if d > 0.0 && target[i] > rows[i].hi {
                let a = (rows[i].hi - y[i]) / d;
                if a < alpha {
                    alpha = a;
                    block = Some((i, Bound::Hi));
                }
            }
        }
        for i in 0..m {
            y[i] += alpha * (target[i] - y[i]);
        }
        if let Some((i, b)) = block {
            y[i] = if b == Bound::Lo { rows[i].lo } else { rows[i].hi };
            state[i] = b;
            continue;
        }
        // multipliers of the bound constraints
        let mut worst = None;
        let mut worst_val = tol * gscale;
        for i in 0..m {
            let grad: f64 = (0..m).map(|j| g[(i, j)] * y[j]).sum::<f64>() - h[(i, 0)];
            let viol = match state[i] {
                Bound::Lo => -grad,
                Bound::Hi => grad,
                Bound::Free => 0.0,
            };
            if viol > worst_val && rows[i].lo < rows[i].hi {
                worst_val = viol;
                worst = Some(i);
            }
        }
        match worst {
            None => return Ok(y),
            Some(i) => state[i] = Bound::Free,
        }
    }
    Err(OracleError::NoConvergence)
}
