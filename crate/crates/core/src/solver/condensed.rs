//! Static condensation of the stiffness onto the contact degrees of freedom.
//!
//! Friction and non-penetration only involve interface and foundation dofs.
//! Eliminating every other free dof leaves a small dense problem
//! `min 1/2 z^T S z - b^T z + phi(z)` on which the nonsmooth solvers work.

use faer::Mat;

use crate::assembly::{FrictionBounds, VIProblem};
use crate::sparse::{SparseCholesky, SparseMatrix};

use super::SolverError;

/// Condensed variables of one interface pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PairVars {
    pub interface: usize,
    pub index: usize,
    pub xu: usize,
    pub xl: usize,
    pub yu: usize,
    pub yl: usize,
    pub weight: f64,
}

/// Condensed x variable of one foundation node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct FoundationVar {
    pub index: usize,
    pub x: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ContactLayout {
    /// Condensed variable -> global dof.
    pub dofs: Vec<usize>,
    pub pairs: Vec<PairVars>,
    pub foundation: Vec<FoundationVar>,
}

impl ContactLayout {
    pub fn new(problem: &VIProblem) -> Self {
        let mut dofs = Vec::new();
        let mut pairs = Vec::new();
        for (i, list) in problem.interface_nodes.iter().enumerate() {
            for (k, p) in list.iter().enumerate() {
                let (xu, xl, yu, yl) = (2 * p.upper, 2 * p.lower, 2 * p.upper + 1, 2 * p.lower + 1);
                if [xu, xl, yu, yl].iter().any(|&d| problem.dofs.is_fixed(d)) {
                    continue;
                }
                let base = dofs.len();
                dofs.extend([xu, xl, yu, yl]);
                pairs.push(PairVars {
                    interface: i,
                    index: k,
                    xu: base,
                    xl: base + 1,
                    yu: base + 2,
                    yl: base + 3,
                    weight: p.weight,
                });
            }
        }
        let mut foundation = Vec::new();
        for (k, n) in problem.foundation_nodes.iter().enumerate() {
            let x = 2 * n.node;
            if problem.dofs.is_fixed(x) {
                continue;
            }
            foundation.push(FoundationVar {
                index: k,
                x: dofs.len(),
                weight: n.weight,
            });
            dofs.push(x);
        }
        Self {
            dofs,
            pairs,
            foundation,
        }
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    /// Quadrature-weighted friction bounds `(pairs, foundation)`.
    pub fn weights(&self, b: &FrictionBounds) -> (Vec<f64>, Vec<f64>) {
        (
            self.pairs
                .iter()
                .map(|p| p.weight * b.interface_tangential[p.interface][p.index])
                .collect(),
            self.foundation
                .iter()
                .map(|f| f.weight * b.foundation_tangential[f.index])
                .collect(),
        )
    }
}

/// Dense condensed operator plus what is needed to recover the full field.
pub(crate) struct Condensed {
    pub layout: ContactLayout,
    /// Row-major `n x n` Schur complement.
    pub s: Vec<f64>,
    interior: Vec<usize>,
    factor: Option<SparseCholesky>,
    k: SparseMatrix,
}

impl Condensed {
    pub fn new(problem: &VIProblem, k: SparseMatrix) -> Result<Self, SolverError> {
        let layout = ContactLayout::new(problem);
        let n_dofs = problem.n_dofs();
        let mut in_contact = vec![false; n_dofs];
        for &d in &layout.dofs {
            in_contact[d] = true;
        }
        let interior: Vec<usize> = (0..n_dofs)
            .filter(|&d| !problem.dofs.is_fixed(d) && !in_contact[d])
            .collect();
        let mut pos_i = vec![usize::MAX; n_dofs];
        for (k, &d) in interior.iter().enumerate() {
            pos_i[d] = k;
        }
        let factor = if interior.is_empty() {
            None
        } else {
            Some(
                k.principal(&interior)
                    .map_err(SolverError::Sparse)?
                    .cholesky()
                    .map_err(|_| SolverError::NotCoercive)?,
            )
        };

        let n = layout.len();
        let mut s = vec![0.0; n * n];
        for (j, &dj) in layout.dofs.iter().enumerate() {
            for (i, &di) in layout.dofs.iter().enumerate() {
                s[i * n + j] = k.get(di, dj);
            }
        }
        if let Some(f) = &factor {
            const BLOCK: usize = 128;
            let mut pos_c = vec![usize::MAX; n_dofs];
            for (c, &d) in layout.dofs.iter().enumerate() {
                pos_c[d] = c;
            }
            let mut start = 0;
            while start < n {
                let width = BLOCK.min(n - start);
                let mut rhs = Mat::<f64>::zeros(interior.len(), width);
                for jj in 0..width {
                    let (rows, vals) = k.col(layout.dofs[start + jj]);
                    for (&r, &v) in rows.iter().zip(vals) {
                        if pos_i[r] != usize::MAX {
                            rhs[(pos_i[r], jj)] = v;
                        }
                    }
                }
                let x = f.solve_mat(&rhs);
                for (c, &dc) in layout.dofs.iter().enumerate() {
                    let (rows, vals) = k.col(dc);
                    for jj in 0..width {
                        let mut acc = 0.0;
                        for (&r, &v) in rows.iter().zip(vals) {
                            if pos_i[r] != usize::MAX {
                                acc += v * x[(pos_i[r], jj)];
                            }
                        }
                        s[c * n + start + jj] -= acc;
                    }
                }
                start += width;
            }
            let _ = pos_c;
            // restore exact symmetry lost to round-off
            for i in 0..n {
                for j in i + 1..n {
                    let m = 0.5 * (s[i * n + j] + s[j * n + i]);
                    s[i * n + j] = m;
                    s[j * n + i] = m;
                }
            }
        }
        Ok(Self {
            layout,
            s,
            interior,
            factor,
            k,
        })
    }

    /// Condensed right-hand side for the full load vector `b`.
    pub fn reduce_rhs(&self, b: &[f64]) -> Vec<f64> {
        let mut bc: Vec<f64> = self.layout.dofs.iter().map(|&d| b[d]).collect();
        if let Some(f) = &self.factor {
            let bi: Vec<f64> = self.interior.iter().map(|&d| b[d]).collect();
            let xi = f.solve(&bi);
            let mut full = vec![0.0; b.len()];
            for (&d, &v) in self.interior.iter().zip(&xi) {
                full[d] = v;
            }
            let kx = self.k.matvec(&full);
            for (c, &d) in self.layout.dofs.iter().enumerate() {
                bc[c] -= kx[d];
            }
        }
        bc
    }

    /// Full field from condensed values `z`: interior dofs minimize the energy.
    pub fn expand(&self, z: &[f64], b: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; b.len()];
        for (&d, &v) in self.layout.dofs.iter().zip(z) {
            u[d] = v;
        }
        if let Some(f) = &self.factor {
            let kz = self.k.matvec(&u);
            let rhs: Vec<f64> = self.interior.iter().map(|&d| b[d] - kz[d]).collect();
            let xi = f.solve(&rhs);
            for (&d, &v) in self.interior.iter().zip(&xi) {
                u[d] = v;
            }
        }
        u
    }

    pub fn restrict(&self, u: &[f64]) -> Vec<f64> {
        self.layout.dofs.iter().map(|&d| u[d]).collect()
    }
}
