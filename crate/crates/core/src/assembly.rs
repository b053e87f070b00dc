//! P1 discretization of the layered contact problem.
//!
//! Displacement fields are flat vectors with two entries per mesh node,
//! `[u_x(0), u_y(0), u_x(1), ...]`. Clamped degrees of freedom are kept in the
//! vector and are always zero.

use thiserror::Error;

use crate::constitutive::{FrictionLaw, MaterialLaw, Sym2, TangentialLaw};
use crate::mesh::{audit_mesh, BoundaryTag, Mesh, Violation};
use crate::sparse::{SparseError, SparseMatrix};

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("{what} count must equal {expected} (got {got})")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("mesh failed audit: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidMesh(Vec<Violation>),
    #[error("triangle {0} is degenerate")]
    Degenerate(usize),
    #[error("interface {index} out of range (mesh has {count} interfaces)")]
    InterfaceOutOfRange { index: usize, count: usize },
    #[error("field has {got} entries, expected {expected}")]
    FieldLength { expected: usize, got: usize },
    #[error("interface node {0} has no incident triangle of its layer")]
    Orphan(usize),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

pub type Field = Vec<f64>;

/// Degree-of-freedom numbering: node `k` owns `2k` (x) and `2k + 1` (y).
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub fixed: Vec<bool>,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let nodes = mesh.dirichlet_nodes();
        let fixed = nodes.iter().flat_map(|&f| [f, f]).collect();
        Self { fixed }
    }

    #[inline]
    pub fn dof(node: usize, comp: usize) -> usize {
        2 * node + comp
    }

    pub fn n_dofs(&self) -> usize {
        self.fixed.len()
    }

    pub fn is_fixed(&self, dof: usize) -> bool {
        self.fixed[dof]
    }

    pub fn free_dofs(&self) -> Vec<usize> {
        (0..self.n_dofs()).filter(|&d| !self.fixed[d]).collect()
    }

    pub fn n_free(&self) -> usize {
        self.fixed.iter().filter(|f| !**f).count()
    }

    /// Zero every clamped entry.
    pub fn clamp(&self, u: &mut [f64]) {
        for (v, &f) in u.iter_mut().zip(&self.fixed) {
            if f {
                *v = 0.0;
            }
        }
    }
}

/// Volume force.
#[derive(Debug, Clone, PartialEq)]
pub enum BodyForce {
    /// One constant vector per layer.
    PerLayer(Vec<[f64; 2]>),
    /// Nodal values, integrated exactly as a P1 field.
    Nodal(Vec<[f64; 2]>),
}

/// Surface force on the top edge of the top layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Traction {
    Uniform([f64; 2]),
    /// Rows `(x, t_x, t_y)` sorted by `x`, linearly interpolated, constant beyond the ends.
    Table(Vec<[f64; 3]>),
    /// `amplitude * cos^2(pi (x - center) / (2 half_width))` for `|x - center| < half_width`.
    Patch {
        center: f64,
        half_width: f64,
        amplitude: [f64; 2],
    },
    /// Nodal values indexed by mesh node; only top-edge nodes are read.
    Nodal(Vec<[f64; 2]>),
}

impl Traction {
    fn at_x(&self, x: f64) -> [f64; 2] {
        match self {
            Traction::Uniform(t) => *t,
            Traction::Table(rows) => table_lookup(rows, x),
            Traction::Patch {
                center,
                half_width,
                amplitude,
            } => {
                let d = (x - center) / half_width;
                if d.abs() >= 1.0 {
                    [0.0, 0.0]
                } else {
                    let c = (0.5 * std::f64::consts::PI * d).cos().powi(2);
                    [amplitude[0] * c, amplitude[1] * c]
                }
            }
            Traction::Nodal(_) => unreachable!("nodal traction is evaluated per edge"),
        }
    }
}

fn table_lookup(rows: &[[f64; 3]], x: f64) -> [f64; 2] {
    match rows {
        [] => [0.0, 0.0],
        [r] => [r[1], r[2]],
        _ => {
            if x <= rows[0][0] {
                return [rows[0][1], rows[0][2]];
            }
            let last = rows[rows.len() - 1];
            if x >= last[0] {
                return [last[1], last[2]];
            }
            let k = rows.partition_point(|r| r[0] <= x).max(1);
            let (a, b) = (rows[k - 1], rows[k]);
            let s = (x - a[0]) / (b[0] - a[0]);
            [a[1] + s * (b[1] - a[1]), a[2] + s * (b[2] - a[2])]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Loads {
    pub body: BodyForce,
    pub traction: Traction,
}

impl Loads {
    pub fn zero(n_layers: usize) -> Self {
        Self {
            body: BodyForce::PerLayer(vec![[0.0, 0.0]; n_layers]),
            traction: Traction::Uniform([0.0, 0.0]),
        }
    }
}

/// Node carrying a trapezoidal quadrature weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedNode {
    pub node: usize,
    pub weight: f64,
}

/// Interface node pair with the trapezoidal weight of the shared position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPair {
    pub upper: usize,
    pub lower: usize,
    pub weight: f64,
}

/// `u[lower_dof] - u[upper_dof] <= 0`, the discrete non-penetration condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintRow {
    pub interface: usize,
    pub upper_dof: usize,
    pub lower_dof: usize,
}

impl ConstraintRow {
    pub fn eval(&self, u: &[f64]) -> f64 {
        u[self.lower_dof] - u[self.upper_dof]
    }
}

/// Precomputed P1 shape-function gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub area: f64,
    /// d(phi_a)/dx
    pub b: [f64; 3],
    /// d(phi_a)/dy
    pub c: [f64; 3],
}

impl ElementGeometry {
    pub fn new(mesh: &Mesh, t: usize) -> Result<Self, AssemblyError> {
        let [p1, p2, p3] = mesh.triangles[t].nodes.map(|i| mesh.nodes[i]);
        let det = (p2[0] - p1[0]) * (p3[1] - p1[1]) - (p3[0] - p1[0]) * (p2[1] - p1[1]);
        if !(det.abs() > 0.0) {
            return Err(AssemblyError::Degenerate(t));
        }
        let b = [(p2[1] - p3[1]) / det, (p3[1] - p1[1]) / det, (p1[1] - p2[1]) / det];
        let c = [(p3[0] - p2[0]) / det, (p1[0] - p3[0]) / det, (p2[0] - p1[0]) / det];
        Ok(Self {
            area: 0.5 * det.abs(),
            b,
            c,
        })
    }

    pub fn strain(&self, nodes: [usize; 3], u: &[f64]) -> Sym2 {
        let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
        for a in 0..3 {
            let (ux, uy) = (u[2 * nodes[a]], u[2 * nodes[a] + 1]);
            xx += self.b[a] * ux;
            yy += self.c[a] * uy;
            xy += 0.5 * (self.c[a] * ux + self.b[a] * uy);
        }
        Sym2::new(xx, yy, xy)
    }

    /// Row `k` of the Voigt strain-displacement matrix, as 6 local entries.
    fn b_matrix(&self) -> [[f64; 6]; 3] {
        let mut m = [[0.0; 6]; 3];
        for a in 0..3 {
            m[0][2 * a] = self.b[a];
            m[1][2 * a + 1] = self.c[a];
            m[2][2 * a] = self.c[a];
            m[2][2 * a + 1] = self.b[a];
        }
        m
    }

    fn element_matrix(&self, d: &[[f64; 3]; 3]) -> [[f64; 6]; 6] {
        let bm = self.b_matrix();
        let mut db = [[0.0; 6]; 3];
        for i in 0..3 {
            for k in 0..6 {
                db[i][k] = (0..3).map(|j| d[i][j] * bm[j][k]).sum();
            }
        }
        let mut ke = [[0.0; 6]; 6];
        for p in 0..6 {
            for q in 0..6 {
                ke[p][q] = self.area * (0..3).map(|i| bm[i][p] * db[i][q]).sum::<f64>();
            }
        }
        ke
    }

    fn element_force(&self, sigma: &Sym2) -> [f64; 6] {
        let bm = self.b_matrix();
        let s = [sigma.xx, sigma.yy, sigma.xy];
        let mut f = [0.0; 6];
        for (p, fp) in f.iter_mut().enumerate() {
            *fp = self.area * (0..3).map(|i| bm[i][p] * s[i]).sum::<f64>();
        }
        f
    }
}

/// Exact constant strain of the P1 interpolant on triangle `t`.
pub fn strain(mesh: &Mesh, t: usize, u: &[f64]) -> Result<Sym2, AssemblyError> {
    let g = ElementGeometry::new(mesh, t)?;
    Ok(g.strain(mesh.triangles[t].nodes, u))
}

/// Assembled discrete problem.
#[derive(Debug, Clone)]
pub struct VIProblem {
    pub mesh: Mesh,
    pub dofs: DofMap,
    pub materials: Vec<MaterialLaw>,
    pub foundation: FrictionLaw,
    pub interfaces: Vec<TangentialLaw>,
    pub loads: Loads,
    /// Load vector of the volume and surface forces; zero on clamped dofs.
    pub load: Field,
    /// Full stiffness matrix (all dofs) when every layer is linear.
    pub stiffness: Option<SparseMatrix>,
    pub geometry: Vec<ElementGeometry>,
    /// Bottom-edge nodes of the last layer, with quadrature weights.
    pub foundation_nodes: Vec<WeightedNode>,
    /// Weighted pairs per interface, in the mesh's pair order.
    pub interface_nodes: Vec<Vec<WeightedPair>>,
    pub constraint_rows: Vec<ConstraintRow>,
    /// For each interface and pair: incident upper-layer triangles.
    recovery: Vec<Vec<Vec<usize>>>,
}

pub fn assemble(
    mesh: &Mesh,
    materials: &[MaterialLaw],
    foundation: FrictionLaw,
    interfaces: &[TangentialLaw],
    loads: &Loads,
) -> Result<VIProblem, AssemblyError> {
    let n_layers = mesh.n_layers();
    if materials.len() != n_layers {
        return Err(AssemblyError::CountMismatch {
            what: "material",
            expected: n_layers,
            got: materials.len(),
        });
    }
    if interfaces.len() + 1 != n_layers {
        return Err(AssemblyError::CountMismatch {
            what: "interface law",
            expected: n_layers - 1,
            got: interfaces.len(),
        });
    }
    if let BodyForce::PerLayer(f) = &loads.body {
        if f.len() != n_layers {
            return Err(AssemblyError::CountMismatch {
                what: "body force",
                expected: n_layers,
                got: f.len(),
            });
        }
    }
    for nodal in [
        match &loads.body {
            BodyForce::Nodal(v) => Some(v),
            _ => None,
        },
        match &loads.traction {
            Traction::Nodal(v) => Some(v),
            _ => None,
        },
    ]
    .into_iter()
    .flatten()
    {
        if nodal.len() != mesh.n_nodes() {
            return Err(AssemblyError::CountMismatch {
                what: "nodal load",
                expected: mesh.n_nodes(),
                got: nodal.len(),
            });
        }
    }
    let violations = audit_mesh(mesh);
    if !violations.is_empty() {
        return Err(AssemblyError::InvalidMesh(violations));
    }

    let dofs = DofMap::new(mesh);
    let geometry = (0..mesh.triangles.len())
        .map(|t| ElementGeometry::new(mesh, t))
        .collect::<Result<Vec<_>, _>>()?;

    let mut load = vec![0.0; dofs.n_dofs()];
    for (t, (tri, g)) in mesh.triangles.iter().zip(&geometry).enumerate() {
        let _ = t;
        match &loads.body {
            BodyForce::PerLayer(f) => {
                let f = f[tri.layer];
                for &a in &tri.nodes {
                    load[2 * a] += g.area / 3.0 * f[0];
                    load[2 * a + 1] += g.area / 3.0 * f[1];
                }
            }
            BodyForce::Nodal(f) => {
                for &a in &tri.nodes {
                    for &b in &tri.nodes {
                        let m = g.area / 12.0 * if a == b { 2.0 } else { 1.0 };
                        load[2 * a] += m * f[b][0];
                        load[2 * a + 1] += m * f[b][1];
                    }
                }
            }
        }
    }
    for e in mesh.edges_with(0, BoundaryTag::Top) {
        let [a, b] = e.nodes;
        let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
        let len = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
        let t = match &loads.traction {
            Traction::Nodal(v) => [0.5 * (v[a][0] + v[b][0]), 0.5 * (v[a][1] + v[b][1])],
            other => other.at_x(0.5 * (pa[0] + pb[0])),
        };
        for n in [a, b] {
            load[2 * n] += 0.5 * len * t[0];
            load[2 * n + 1] += 0.5 * len * t[1];
        }
    }
    dofs.clamp(&mut load);

    let stiffness = if materials.iter().all(MaterialLaw::is_linear) {
        let zero = vec![0.0; dofs.n_dofs()];
        Some(assemble_tangent(mesh, &geometry, materials, &zero)?)
    } else {
        None
    };

    let last = n_layers - 1;
    let foundation_nodes = trapezoid_weights(mesh, last);
    let mut interface_nodes = Vec::with_capacity(n_layers - 1);
    let mut constraint_rows = Vec::new();
    let mut recovery = Vec::with_capacity(n_layers - 1);
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); mesh.n_nodes()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for &a in &tri.nodes {
            incident[a].push(t);
        }
    }
    for (i, pairs) in mesh.interface_pairs.iter().enumerate() {
        let w: std::collections::HashMap<usize, f64> = trapezoid_weights(mesh, i)
            .into_iter()
            .map(|wn| (wn.node, wn.weight))
            .collect();
        let mut list = Vec::with_capacity(pairs.len());
        let mut rec = Vec::with_capacity(pairs.len());
        for p in pairs {
            list.push(WeightedPair {
                upper: p.upper,
                lower: p.lower,
                weight: w.get(&p.upper).copied().unwrap_or(0.0),
            });
            constraint_rows.push(ConstraintRow {
                interface: i,
                upper_dof: DofMap::dof(p.upper, 1),
                lower_dof: DofMap::dof(p.lower, 1),
            });
            let tris: Vec<usize> = incident[p.upper]
                .iter()
                .copied()
                .filter(|&t| mesh.triangles[t].layer == i)
                .collect();
            if tris.is_empty() {
                return Err(AssemblyError::Orphan(p.upper));
            }
            rec.push(tris);
        }
        interface_nodes.push(list);
        recovery.push(rec);
    }

    Ok(VIProblem {
        mesh: mesh.clone(),
        dofs,
        materials: materials.to_vec(),
        foundation,
        interfaces: interfaces.to_vec(),
        loads: loads.clone(),
        load,
        stiffness,
        geometry,
        foundation_nodes,
        interface_nodes,
        constraint_rows,
        recovery,
    })
}

/// Trapezoidal weights of the bottom-edge nodes of `layer`, sorted by x.
fn trapezoid_weights(mesh: &Mesh, layer: usize) -> Vec<WeightedNode> {
    let mut w: std::collections::BTreeMap<usize, f64> = Default::default();
    for e in mesh.edges_with(layer, BoundaryTag::Bottom) {
        let [a, b] = e.nodes;
        let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
        let len = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
        *w.entry(a).or_insert(0.0) += 0.5 * len;
        *w.entry(b).or_insert(0.0) += 0.5 * len;
    }
    let mut v: Vec<WeightedNode> = w
        .into_iter()
        .map(|(node, weight)| WeightedNode { node, weight })
        .collect();
    v.sort_by(|p, q| mesh.nodes[p.node][0].total_cmp(&mesh.nodes[q.node][0]));
    v
}

fn assemble_tangent(
    mesh: &Mesh,
    geometry: &[ElementGeometry],
    materials: &[MaterialLaw],
    u: &[f64],
) -> Result<SparseMatrix, AssemblyError> {
    let mut trip = Vec::with_capacity(36 * mesh.triangles.len());
    for (tri, g) in mesh.triangles.iter().zip(geometry) {
        let eps = g.strain(tri.nodes, u);
        let ke = g.element_matrix(&materials[tri.layer].tangent(&eps));
        let dof = |k: usize| 2 * tri.nodes[k / 2] + k % 2;
        for p in 0..6 {
            for q in 0..6 {
                trip.push((dof(p), dof(q), ke[p][q]));
            }
        }
    }
    Ok(SparseMatrix::from_triplets(2 * mesh.n_nodes(), &trip)?)
}

/// Normal-stress magnitude fed to the interface friction bound: compression
/// only, tension gives a zero bound.
pub fn compression(sigma_n: f64) -> f64 {
    (-sigma_n).max(0.0)
}

/// Recovered traction quantities at one interface pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InterfaceStress {
    /// `beta . sigma . beta` with `beta = (0, -1)`, i.e. `sigma_yy`.
    pub sigma_n: f64,
    /// Tangential component of `sigma . beta`, i.e. `-sigma_xy`.
    pub sigma_t: f64,
}

/// Element stresses plus recovered interface stresses.
#[derive(Debug, Clone, PartialEq)]
pub struct StressField {
    pub element: Vec<Sym2>,
    pub interfaces: Vec<Vec<InterfaceStress>>,
}

/// Friction bounds frozen at a state `p`, aligned with the problem's node lists.
#[derive(Debug, Clone, PartialEq)]
pub struct FrictionBounds {
    /// `g_N(p_beta)` per foundation node.
    pub foundation_normal: Vec<f64>,
    /// `g_T(g_N(p_beta))` per foundation node.
    pub foundation_tangential: Vec<f64>,
    /// `g_T(|sigma_N(p)|)` per interface pair.
    pub interface_tangential: Vec<Vec<f64>>,
}

impl VIProblem {
    pub fn n_dofs(&self) -> usize {
        self.dofs.n_dofs()
    }

    pub fn is_linear(&self) -> bool {
        self.stiffness.is_some()
    }

    pub fn zero_field(&self) -> Field {
        vec![0.0; self.n_dofs()]
    }

    pub fn check_field(&self, u: &[f64]) -> Result<(), AssemblyError> {
        if u.len() != self.n_dofs() {
            return Err(AssemblyError::FieldLength {
                expected: self.n_dofs(),
                got: u.len(),
            });
        }
        Ok(())
    }

    pub fn element_strains(&self, u: &[f64]) -> Vec<Sym2> {
        self.mesh
            .triangles
            .iter()
            .zip(&self.geometry)
            .map(|(t, g)| g.strain(t.nodes, u))
            .collect()
    }

    pub fn element_stresses(&self, u: &[f64]) -> Vec<Sym2> {
        self.mesh
            .triangles
            .iter()
            .zip(&self.geometry)
            .map(|(t, g)| self.materials[t.layer].stress(&g.strain(t.nodes, u)))
            .collect()
    }

    /// Internal force vector `A(u)` (the gradient of the strain energy).
    pub fn internal_force(&self, u: &[f64]) -> Field {
        if let Some(k) = &self.stiffness {
            return k.matvec(u);
        }
        let mut f = vec![0.0; self.n_dofs()];
        for (tri, g) in self.mesh.triangles.iter().zip(&self.geometry) {
            let sigma = self.materials[tri.layer].stress(&g.strain(tri.nodes, u));
            let fe = g.element_force(&sigma);
            for (k, v) in fe.iter().enumerate() {
                f[2 * tri.nodes[k / 2] + k % 2] += v;
            }
        }
        f
    }

    /// Consistent tangent at `u`; the constant stiffness for linear layers.
    pub fn tangent(&self, u: &[f64]) -> Result<SparseMatrix, AssemblyError> {
        match &self.stiffness {
            Some(k) => Ok(k.clone()),
            None => assemble_tangent(&self.mesh, &self.geometry, &self.materials, u),
        }
    }

    /// Stored elastic energy.
    pub fn strain_energy(&self, u: &[f64]) -> f64 {
        self.mesh
            .triangles
            .iter()
            .zip(&self.geometry)
            .map(|(t, g)| g.area * self.materials[t.layer].energy_density(&g.strain(t.nodes, u)))
            .sum()
    }

    /// `a(v, w)` for linear layers, by element loop.
    pub fn bilinear_elementwise(&self, v: &[f64], w: &[f64]) -> f64 {
        self.mesh
            .triangles
            .iter()
            .zip(&self.geometry)
            .map(|(t, g)| {
                let law = &self.materials[t.layer];
                g.area * law.stress(&g.strain(t.nodes, v)).ddot(&g.strain(t.nodes, w))
            })
            .sum()
    }

    fn interface_index(&self, i: usize) -> Result<(), AssemblyError> {
        if i >= self.interface_nodes.len() {
            return Err(AssemblyError::InterfaceOutOfRange {
                index: i,
                count: self.interface_nodes.len(),
            });
        }
        Ok(())
    }

    /// `u_y(lower) - u_y(upper)` per pair of interface `i` (0-based).
    pub fn jump_normal(&self, u: &[f64], i: usize) -> Result<Vec<f64>, AssemblyError> {
        self.interface_index(i)?;
        self.check_field(u)?;
        Ok(self.interface_nodes[i]
            .iter()
            .map(|p| u[2 * p.lower + 1] - u[2 * p.upper + 1])
            .collect())
    }

    /// `u_x(upper) - u_x(lower)` per pair of interface `i` (0-based).
    pub fn jump_tangential(&self, u: &[f64], i: usize) -> Result<Vec<f64>, AssemblyError> {
        self.interface_index(i)?;
        self.check_field(u)?;
        Ok(self.interface_nodes[i]
            .iter()
            .map(|p| u[2 * p.upper] - u[2 * p.lower])
            .collect())
    }

    fn recover_with(&self, stresses: &[Sym2], i: usize) -> Vec<InterfaceStress> {
        self.recovery[i]
            .iter()
            .map(|tris| {
                let (mut acc, mut area) = (Sym2::ZERO, 0.0);
                for &t in tris {
                    let a = self.geometry[t].area;
                    acc = acc.add(&stresses[t].scale(a));
                    area += a;
                }
                let s = acc.scale(1.0 / area);
                InterfaceStress {
                    sigma_n: s.yy,
                    sigma_t: -s.xy,
                }
            })
            .collect()
    }

    /// Area-weighted nodal average of upper-layer stresses at interface `i`.
    pub fn recover_interface_stress(&self, u: &[f64], i: usize) -> Result<Vec<InterfaceStress>, AssemblyError> {
        self.interface_index(i)?;
        self.check_field(u)?;
        Ok(self.recover_with(&self.element_stresses(u), i))
    }

    pub fn stress_field(&self, u: &[f64]) -> StressField {
        let element = self.element_stresses(u);
        let interfaces = (0..self.interface_nodes.len())
            .map(|i| self.recover_with(&element, i))
            .collect();
        StressField { element, interfaces }
    }

    pub fn friction_bounds(&self, p: &[f64]) -> FrictionBounds {
        let foundation_normal: Vec<f64> = self
            .foundation_nodes
            .iter()
            .map(|n| self.foundation.g_n(-p[2 * n.node + 1]))
            .collect();
        let foundation_tangential = foundation_normal.iter().map(|&g| self.foundation.g_t(g)).collect();
        let element = self.element_stresses(p);
        let interface_tangential = (0..self.interface_nodes.len())
            .map(|i| {
                self.recover_with(&element, i)
                    .iter()
                    .map(|s| self.interfaces[i].eval(compression(s.sigma_n)))
                    .collect()
            })
            .collect();
        FrictionBounds {
            foundation_normal,
            foundation_tangential,
            interface_tangential,
        }
    }

    /// `j` with frozen bounds evaluated at `w`.
    pub fn j_with_bounds(&self, b: &FrictionBounds, w: &[f64]) -> f64 {
        let mut j = 0.0;
        for (k, n) in self.foundation_nodes.iter().enumerate() {
            let w_beta = -w[2 * n.node + 1];
            j += n.weight * (b.foundation_normal[k] * w_beta + b.foundation_tangential[k] * w[2 * n.node].abs());
        }
        for (i, pairs) in self.interface_nodes.iter().enumerate() {
            for (k, p) in pairs.iter().enumerate() {
                j += p.weight * b.interface_tangential[i][k] * (w[2 * p.upper] - w[2 * p.lower]).abs();
            }
        }
        j
    }

    /// The friction functional `j(p, w)`.
    pub fn eval_j(&self, p: &[f64], w: &[f64]) -> Result<f64, AssemblyError> {
        self.check_field(p)?;
        self.check_field(w)?;
        Ok(self.j_with_bounds(&self.friction_bounds(p), w))
    }

    /// Smallest closed-form monotonicity constant over the layers; the
    /// operator `A` is strongly monotone with this constant in `||.||_V`.
    pub fn monotonicity_constant(&self) -> f64 {
        self.materials
            .iter()
            .map(|m| m.analytic_bounds().1)
            .fold(f64::INFINITY, f64::min)
    }

    /// `sqrt(sum over layers of int eps(u) : eps(u))`.
    pub fn energy_norm(&self, u: &[f64]) -> f64 {
        energy_norm(&self.mesh, &self.geometry, u)
    }

    /// Largest violation of the non-penetration rows.
    pub fn max_penetration(&self, u: &[f64]) -> f64 {
        self.constraint_rows
            .iter()
            .map(|r| r.eval(u).max(0.0))
            .fold(0.0, f64::max)
    }
}

pub fn energy_norm(mesh: &Mesh, geometry: &[ElementGeometry], u: &[f64]) -> f64 {
    mesh.triangles
        .iter()
        .zip(geometry)
        .map(|(t, g)| {
            let e = g.strain(t.nodes, u);
            g.area * e.ddot(&e)
        })
        .sum::<f64>()
        .sqrt()
}

/// Nodal interpolant of `f(point, layer)`.
pub fn interpolate_nodal<F: Fn([f64; 2], usize) -> [f64; 2]>(mesh: &Mesh, f: F) -> Field {
    mesh.nodes
        .iter()
        .zip(&mesh.node_layer)
        .flat_map(|(&p, &l)| f(p, l))
        .collect()
}
