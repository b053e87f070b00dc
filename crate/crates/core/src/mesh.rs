//! Conforming P1 triangulations of a stack of rectangular layers.
//!
//! Layer 0 is the top of the stack (the one carrying the surface traction) and
//! layer `n - 1` rests on the foundation. Every layer owns its own nodes, so the
//! two sides of a contact interface carry distinct degrees of freedom; the
//! geometric coincidence is recorded in [`Mesh::interface_pairs`].
//!
//! Per layer the boundary is split into three parts:
//!
//! * [`BoundaryTag::Dirichlet`]: the two vertical sides (clamped),
//! * [`BoundaryTag::Top`]: the top edge, outward normal `(0, 1)`,
//! * [`BoundaryTag::Bottom`]: the bottom edge, outward normal `(0, -1)`.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use thiserror::Error;

/// Minimum admissible ratio `area / h^2` of a triangle.
pub const SHAPE_CONSTANT: f64 = 0.05;

const GEOM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("layer stack is empty")]
    NoLayers,
    #[error("nx must be at least 1")]
    ZeroColumns,
    #[error("layer {layer}: {what} must be positive (got {value})")]
    NonPositive {
        layer: usize,
        what: &'static str,
        value: f64,
    },
    #[error("layer {layer}: ny must be at least 1")]
    ZeroRows { layer: usize },
    #[error("inconsistent layer widths: layer 1 has {first}, layer {layer} has {width}")]
    InconsistentWidth { first: f64, layer: usize, width: f64 },
    #[error("mesh parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Geometry and resolution of one layer of the stack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub width: f64,
    pub thickness: f64,
    /// Element rows through the thickness.
    pub ny: usize,
}

impl LayerSpec {
    pub fn new(width: f64, thickness: f64, ny: usize) -> Self {
        Self { width, thickness, ny }
    }
}

/// Which part of a layer boundary an edge belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    /// Clamped vertical side.
    Dirichlet,
    /// Top edge; traction on layer 0, contact with the layer above otherwise.
    Top,
    /// Bottom edge; contact with the layer below, or the foundation for the last layer.
    Bottom,
}

impl BoundaryTag {
    pub fn label(self) -> &'static str {
        match self {
            BoundaryTag::Dirichlet => "G1",
            BoundaryTag::Top => "G2",
            BoundaryTag::Bottom => "G3",
        }
    }

    fn from_label(s: &str) -> Option<Self> {
        match s {
            "G1" => Some(BoundaryTag::Dirichlet),
            "G2" => Some(BoundaryTag::Top),
            "G3" => Some(BoundaryTag::Bottom),
            _ => None,
        }
    }

    /// Outward unit normal of the tagged edge, or `None` for the two-sided Dirichlet tag.
    pub fn normal(self) -> Option<[f64; 2]> {
        match self {
            BoundaryTag::Dirichlet => None,
            BoundaryTag::Top => Some([0.0, 1.0]),
            BoundaryTag::Bottom => Some([0.0, -1.0]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    /// Counter-clockwise node indices.
    pub nodes: [usize; 3],
    pub layer: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub layer: usize,
    pub tag: BoundaryTag,
}

/// Matched node pair across interface `i` (between layers `i` and `i + 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterfacePair {
    /// Node on the bottom edge of the upper layer `i`.
    pub upper: usize,
    /// Node on the top edge of the lower layer `i + 1`.
    pub lower: usize,
}

/// Vertical extent of one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerBox {
    pub y_bottom: f64,
    pub y_top: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    pub node_layer: Vec<usize>,
    pub triangles: Vec<Triangle>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// One list per interface, each ordered by increasing x.
    pub interface_pairs: Vec<Vec<InterfacePair>>,
    pub layers: Vec<LayerBox>,
    pub width: f64,
    /// Maximum element diameter.
    pub h: f64,
}

/// Build the structured stack mesh. Each layer is an `nx` by `ny` grid of cells,
/// every cell cut along the diagonal from its lower-left to upper-right corner.
pub fn build_layered_mesh(layers: &[LayerSpec], nx: usize) -> Result<Mesh, MeshError> {
    if layers.is_empty() {
        return Err(MeshError::NoLayers);
    }
    if nx == 0 {
        return Err(MeshError::ZeroColumns);
    }
    let width = layers[0].width;
    for (i, l) in layers.iter().enumerate() {
        if !(l.width > 0.0) {
            return Err(MeshError::NonPositive {
                layer: i + 1,
                what: "width",
                value: l.width,
            });
        }
        if !(l.thickness > 0.0) {
            return Err(MeshError::NonPositive {
                layer: i + 1,
                what: "thickness",
                value: l.thickness,
            });
        }
        if l.ny == 0 {
            return Err(MeshError::ZeroRows { layer: i + 1 });
        }
        if (l.width - width).abs() > GEOM_TOL * width {
            return Err(MeshError::InconsistentWidth {
                first: width,
                layer: i + 1,
                width: l.width,
            });
        }
    }

    let total: f64 = layers.iter().map(|l| l.thickness).sum();
    let mut mesh = Mesh {
        nodes: Vec::new(),
        node_layer: Vec::new(),
        triangles: Vec::new(),
        boundary_edges: Vec::new(),
        interface_pairs: Vec::new(),
        layers: Vec::with_capacity(layers.len()),
        width,
        h: 0.0,
    };

    let dx = width / nx as f64;
    let mut y_top = total;
    // (first node index, ny) per layer, to wire the interfaces afterwards.
    let mut grids = Vec::with_capacity(layers.len());
    for (li, spec) in layers.iter().enumerate() {
        let y_bottom = if li + 1 == layers.len() {
            0.0
        } else {
            y_top - spec.thickness
        };
        mesh.layers.push(LayerBox { y_bottom, y_top });
        let dy = (y_top - y_bottom) / spec.ny as f64;
        let base = mesh.nodes.len();
        let id = |i: usize, j: usize| base + j * (nx + 1) + i;
        for j in 0..=spec.ny {
            let y = if j == spec.ny { y_top } else { y_bottom + j as f64 * dy };
            for i in 0..=nx {
                let x = if i == nx { width } else { i as f64 * dx };
                mesh.nodes.push([x, y]);
                mesh.node_layer.push(li);
            }
        }
        for j in 0..spec.ny {
            for i in 0..nx {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                mesh.triangles.push(Triangle {
                    nodes: [a, b, c],
                    layer: li,
                });
                mesh.triangles.push(Triangle {
                    nodes: [a, c, d],
                    layer: li,
                });
            }
        }
        for i in 0..nx {
            mesh.boundary_edges.push(BoundaryEdge {
                nodes: [id(i, 0), id(i + 1, 0)],
                layer: li,
                tag: BoundaryTag::Bottom,
            });
            mesh.boundary_edges.push(BoundaryEdge {
                nodes: [id(i + 1, spec.ny), id(i, spec.ny)],
                layer: li,
                tag: BoundaryTag::Top,
            });
        }
        for j in 0..spec.ny {
            mesh.boundary_edges.push(BoundaryEdge {
                nodes: [id(0, j + 1), id(0, j)],
                layer: li,
                tag: BoundaryTag::Dirichlet,
            });
            mesh.boundary_edges.push(BoundaryEdge {
                nodes: [id(nx, j), id(nx, j + 1)],
                layer: li,
                tag: BoundaryTag::Dirichlet,
            });
        }
        grids.push((base, spec.ny));
        y_top = y_bottom;
    }

    for li in 0..layers.len().saturating_sub(1) {
        let (upper_base, _) = grids[li];
        let (lower_base, lower_ny) = grids[li + 1];
        let pairs = (0..=nx)
            .map(|i| InterfacePair {
                upper: upper_base + i,
                lower: lower_base + lower_ny * (nx + 1) + i,
            })
            .collect();
        mesh.interface_pairs.push(pairs);
    }
    // Snap shared interface coordinates so paired nodes coincide bit-for-bit.
    for pairs in &mesh.interface_pairs {
        for p in pairs {
            mesh.nodes[p.lower] = mesh.nodes[p.upper];
        }
    }
    mesh.h = mesh.max_diameter();
    Ok(mesh)
}

/// Maps a field on a coarse mesh onto its uniform refinement.
///
/// Fine node `k < n_coarse` is coarse node `k`; every later fine node is the
/// midpoint of the coarse edge stored in `midpoints`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prolongation {
    pub n_coarse: usize,
    pub midpoints: Vec<[usize; 2]>,
}

impl Prolongation {
    pub fn n_fine(&self) -> usize {
        self.n_coarse + self.midpoints.len()
    }

    /// Prolong a nodal field with `comps` values per node.
    pub fn apply(&self, coarse: &[f64], comps: usize) -> Vec<f64> {
        assert_eq!(coarse.len(), self.n_coarse * comps);
        let mut fine = Vec::with_capacity(self.n_fine() * comps);
        fine.extend_from_slice(coarse);
        for &[a, b] in &self.midpoints {
            for c in 0..comps {
                fine.push(0.5 * (coarse[a * comps + c] + coarse[b * comps + c]));
            }
        }
        fine
    }

    /// Nodal injection back onto the coarse nodes.
    pub fn restrict(&self, fine: &[f64], comps: usize) -> Vec<f64> {
        fine[..self.n_coarse * comps].to_vec()
    }
}

/// Red refinement: every triangle is split into four similar ones.
pub fn refine_uniform(mesh: &Mesh) -> Mesh {
    refine_uniform_with_map(mesh).0
}

pub fn refine_uniform_with_map(mesh: &Mesh) -> (Mesh, Prolongation) {
    let mut nodes = mesh.nodes.clone();
    let mut node_layer = mesh.node_layer.clone();
    let mut midpoints: Vec<[usize; 2]> = Vec::new();
    let mut mid_of: HashMap<(usize, usize), usize> = HashMap::new();

    let mut midpoint = |a: usize, b: usize| -> usize {
        let key = (a.min(b), a.max(b));
        *mid_of.entry(key).or_insert_with(|| {
            let (pa, pb) = (mesh.nodes[key.0], mesh.nodes[key.1]);
            nodes.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            node_layer.push(mesh.node_layer[key.0]);
            midpoints.push([key.0, key.1]);
            nodes.len() - 1
        })
    };

    let mut triangles = Vec::with_capacity(4 * mesh.triangles.len());
    for t in &mesh.triangles {
        let [a, b, c] = t.nodes;
        let ab = midpoint(a, b);
        let bc = midpoint(b, c);
        let ca = midpoint(c, a);
        for nodes in [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]] {
            triangles.push(Triangle { nodes, layer: t.layer });
        }
    }

    let mut boundary_edges = Vec::with_capacity(2 * mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let [a, b] = e.nodes;
        let m = midpoint(a, b);
        boundary_edges.push(BoundaryEdge { nodes: [a, m], ..*e });
        boundary_edges.push(BoundaryEdge { nodes: [m, b], ..*e });
    }

    let mut interface_pairs = Vec::with_capacity(mesh.interface_pairs.len());
    for (i, pairs) in mesh.interface_pairs.iter().enumerate() {
        let partner: HashMap<usize, usize> = pairs.iter().map(|p| (p.upper, p.lower)).collect();
        let mut refined = pairs.clone();
        for e in mesh
            .boundary_edges
            .iter()
            .filter(|e| e.layer == i && e.tag == BoundaryTag::Bottom)
        {
            let [a, b] = e.nodes;
            if let (Some(&pa), Some(&pb)) = (partner.get(&a), partner.get(&b)) {
                refined.push(InterfacePair {
                    upper: midpoint(a, b),
                    lower: midpoint(pa, pb),
                });
            }
        }
        interface_pairs.push(refined);
    }
    for pairs in &mut interface_pairs {
        pairs.sort_by(|p, q| nodes[p.upper][0].total_cmp(&nodes[q.upper][0]));
    }

    let fine = Mesh {
        nodes,
        node_layer,
        triangles,
        boundary_edges,
        interface_pairs,
        layers: mesh.layers.clone(),
        width: mesh.width,
        h: 0.5 * mesh.h,
    };
    let map = Prolongation {
        n_coarse: mesh.nodes.len(),
        midpoints,
    };
    (fine, map)
}

/// A broken mesh invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub invariant: &'static str,
    pub entity: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.invariant, self.entity)
    }
}

pub const V_DEGENERATE: &str = "triangle degenerate or below shape bound";
pub const V_ORIENTATION: &str = "triangle not counter-clockwise";
pub const V_H_MISMATCH: &str = "h differs from max element diameter";
pub const V_NONCONFORMING: &str = "edge shared by more than two triangles";
pub const V_UNTAGGED: &str = "boundary edge without tag";
pub const V_TAG_INTERIOR: &str = "tagged edge is not on the layer boundary";
pub const V_TAG_MISPLACED: &str = "tag does not match edge position";
pub const V_NO_DIRICHLET: &str = "meas(Γ₁^i) = 0";
pub const V_WIDTH: &str = "layer widths differ";
pub const V_PAIR_COORDS: &str = "interface pair coordinates differ";
pub const V_PAIR_LAYER: &str = "interface pair node in wrong layer or boundary part";
pub const V_PAIR_BIJECTION: &str = "interface pairing is not a bijection";
pub const V_INTERFACE_COUNT: &str = "interface count must be layer count - 1";

/// Check every mesh invariant; an empty result means the mesh is valid.
pub fn audit_mesh(mesh: &Mesh) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |invariant: &'static str, entity: String| out.push(Violation { invariant, entity });
    let n_layers = mesh.layers.len();

    // Elements.
    let mut diam: f64 = 0.0;
    for (k, t) in mesh.triangles.iter().enumerate() {
        let [a, b, c] = t.nodes.map(|i| mesh.nodes[i]);
        let area = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
        let d = dist(a, b).max(dist(b, c)).max(dist(c, a));
        diam = diam.max(d);
        if area <= 0.0 {
            push(V_ORIENTATION, format!("triangle {k}"));
        }
        if area.abs() < SHAPE_CONSTANT * mesh.h * mesh.h {
            push(V_DEGENERATE, format!("triangle {k}, area {area:e}"));
        }
    }
    if (diam - mesh.h).abs() > 1e-10 * mesh.h.max(diam) {
        push(V_H_MISMATCH, format!("h = {:e}, max diameter = {diam:e}", mesh.h));
    }

    // Edge incidence per layer.
    let mut incidence: HashMap<(usize, usize), usize> = HashMap::new();
    for t in &mesh.triangles {
        let [a, b, c] = t.nodes;
        for (p, q) in [(a, b), (b, c), (c, a)] {
            *incidence.entry((p.min(q), p.max(q))).or_insert(0) += 1;
        }
    }
    let mut tagged: HashMap<(usize, usize), BoundaryTag> = HashMap::new();
    for e in &mesh.boundary_edges {
        let [a, b] = e.nodes;
        tagged.insert((a.min(b), a.max(b)), e.tag);
    }
    let mut edges: Vec<_> = incidence.iter().collect();
    edges.sort();
    for (&(a, b), &count) in edges {
        if count > 2 {
            push(V_NONCONFORMING, format!("edge {a}-{b}"));
        } else if count == 1 && !tagged.contains_key(&(a, b)) {
            push(V_UNTAGGED, format!("edge {a}-{b}"));
        }
    }

    let mut dirichlet_measure = vec![0.0; n_layers];
    for (k, e) in mesh.boundary_edges.iter().enumerate() {
        let [a, b] = e.nodes;
        if incidence.get(&(a.min(b), a.max(b))).copied() != Some(1) {
            push(V_TAG_INTERIOR, format!("boundary edge {k}"));
        }
        if e.layer >= n_layers {
            push(V_TAG_MISPLACED, format!("boundary edge {k}: layer {}", e.layer + 1));
            continue;
        }
        let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
        let lb = mesh.layers[e.layer];
        let on_y = |y: f64| (pa[1] - y).abs() <= GEOM_TOL && (pb[1] - y).abs() <= GEOM_TOL;
        let on_x = |x: f64| (pa[0] - x).abs() <= GEOM_TOL && (pb[0] - x).abs() <= GEOM_TOL;
        let placed = match e.tag {
            BoundaryTag::Dirichlet => on_x(0.0) || on_x(mesh.width),
            BoundaryTag::Top => on_y(lb.y_top),
            BoundaryTag::Bottom => on_y(lb.y_bottom),
        };
        if !placed {
            push(
                V_TAG_MISPLACED,
                format!("boundary edge {k} ({}) of layer {}", e.tag.label(), e.layer + 1),
            );
        }
        if e.tag == BoundaryTag::Dirichlet {
            dirichlet_measure[e.layer] += dist(pa, pb);
        }
    }
    for (i, &m) in dirichlet_measure.iter().enumerate() {
        if m <= 0.0 {
            push(V_NO_DIRICHLET, format!("layer {}", i + 1));
        }
    }

    // All layers span [0, width].
    for li in 0..n_layers {
        let xs = mesh
            .nodes
            .iter()
            .zip(&mesh.node_layer)
            .filter(|(_, &l)| l == li)
            .map(|(p, _)| p[0]);
        let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        if lo.abs() > GEOM_TOL || (hi - mesh.width).abs() > GEOM_TOL {
            push(V_WIDTH, format!("layer {} spans [{lo}, {hi}]", li + 1));
        }
    }

    // Interfaces.
    if mesh.interface_pairs.len() + 1 != n_layers.max(1) {
        push(
            V_INTERFACE_COUNT,
            format!("{} interfaces for {n_layers} layers", mesh.interface_pairs.len()),
        );
    }
    let boundary_nodes = |layer: usize, tag: BoundaryTag| {
        let mut v: Vec<usize> = mesh
            .boundary_edges
            .iter()
            .filter(|e| e.layer == layer && e.tag == tag)
            .flat_map(|e| e.nodes)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    for (i, pairs) in mesh.interface_pairs.iter().enumerate() {
        if i + 1 >= n_layers {
            break;
        }
        let mut uppers = boundary_nodes(i, BoundaryTag::Bottom);
        let mut lowers = boundary_nodes(i + 1, BoundaryTag::Top);
        for (k, p) in pairs.iter().enumerate() {
            let (pu, pl) = (mesh.nodes[p.upper], mesh.nodes[p.lower]);
            if dist(pu, pl) > GEOM_TOL {
                push(
                    V_PAIR_COORDS,
                    format!("interface {} pair {k}: nodes {} / {}", i + 1, p.upper, p.lower),
                );
            }
            if p.upper == p.lower
                || mesh.node_layer[p.upper] != i
                || mesh.node_layer[p.lower] != i + 1
                || uppers.binary_search(&p.upper).is_err()
                || lowers.binary_search(&p.lower).is_err()
            {
                push(V_PAIR_LAYER, format!("interface {} pair {k}", i + 1));
            }
        }
        let mut pu: Vec<usize> = pairs.iter().map(|p| p.upper).collect();
        let mut pl: Vec<usize> = pairs.iter().map(|p| p.lower).collect();
        pu.sort_unstable();
        pl.sort_unstable();
        uppers.dedup();
        lowers.dedup();
        if pu != uppers || pl != lowers {
            push(
                V_PAIR_BIJECTION,
                format!(
                    "interface {}: {} pairs, {} upper nodes, {} lower nodes",
                    i + 1,
                    pairs.len(),
                    uppers.len(),
                    lowers.len()
                ),
            );
        }
    }
    out
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].nodes.map(|i| self.nodes[i]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    fn max_diameter(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.nodes.map(|i| self.nodes[i]);
                dist(a, b).max(dist(b, c)).max(dist(c, a))
            })
            .fold(0.0, f64::max)
    }

    /// Edges of `layer` carrying `tag`.
    pub fn edges_with(&self, layer: usize, tag: BoundaryTag) -> impl Iterator<Item = &BoundaryEdge> {
        self.boundary_edges
            .iter()
            .filter(move |e| e.layer == layer && e.tag == tag)
    }

    /// Nodes lying on the closure of some Dirichlet edge.
    pub fn dirichlet_nodes(&self) -> Vec<bool> {
        let mut fixed = vec![false; self.nodes.len()];
        for e in self.boundary_edges.iter().filter(|e| e.tag == BoundaryTag::Dirichlet) {
            for n in e.nodes {
                fixed[n] = true;
            }
        }
        fixed
    }

    /// Serialize to the plain-text mesh format.
    ///
    /// ```text
    /// # layered-mesh v1
    /// width <w>
    /// h <h>
    /// layers <n>
    /// <layer> <y_bottom> <y_top>
    /// nodes <count>
    /// <id> <x> <y> <layer>
    /// triangles <count>
    /// <id> <n0> <n1> <n2> <layer>
    /// tags <count>
    /// <n0> <n1> <layer> <G1|G2|G3>
    /// pairs <count>
    /// <interface> <upper node> <lower node>
    /// ```
    ///
    /// Layers and interfaces are numbered from 1, nodes and triangles from 0.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# layered-mesh v1")?;
        writeln!(w, "width {:e}", self.width)?;
        writeln!(w, "h {:e}", self.h)?;
        writeln!(w, "layers {}", self.layers.len())?;
        for (i, l) in self.layers.iter().enumerate() {
            writeln!(w, "{} {:e} {:e}", i + 1, l.y_bottom, l.y_top)?;
        }
        writeln!(w, "nodes {}", self.nodes.len())?;
        for (i, (p, l)) in self.nodes.iter().zip(&self.node_layer).enumerate() {
            writeln!(w, "{i} {:e} {:e} {}", p[0], p[1], l + 1)?;
        }
        writeln!(w, "triangles {}", self.triangles.len())?;
        for (i, t) in self.triangles.iter().enumerate() {
            let [a, b, c] = t.nodes;
            writeln!(w, "{i} {a} {b} {c} {}", t.layer + 1)?;
        }
        writeln!(w, "tags {}", self.boundary_edges.len())?;
        for e in &self.boundary_edges {
            writeln!(w, "{} {} {} {}", e.nodes[0], e.nodes[1], e.layer + 1, e.tag.label())?;
        }
        let count: usize = self.interface_pairs.iter().map(Vec::len).sum();
        writeln!(w, "pairs {count}")?;
        for (i, pairs) in self.interface_pairs.iter().enumerate() {
            for p in pairs {
                writeln!(w, "{} {} {}", i + 1, p.upper, p.lower)?;
            }
        }
        Ok(())
    }

    /// Parse the format written by [`Mesh::write_text`].
    pub fn read_text<R: BufRead>(r: R) -> Result<Mesh, MeshError> {
        let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| match l {
            Ok(s) => !s.trim().is_empty() && !s.trim_start().starts_with('#'),
            Err(_) => true,
        });
        let mut next = |expect: &str| -> Result<(usize, Vec<String>), MeshError> {
            let (ln, line) = lines.next().ok_or(MeshError::Parse {
                line: 0,
                msg: format!("unexpected end of file, expected {expect}"),
            })?;
            let line = line?;
            Ok((ln, line.split_whitespace().map(str::to_owned).collect()))
        };
        fn num<T: std::str::FromStr>(ln: usize, s: Option<&String>) -> Result<T, MeshError> {
            s.and_then(|s| s.parse().ok()).ok_or(MeshError::Parse {
                line: ln,
                msg: format!("bad or missing number {s:?}"),
            })
        }
        let header = |ln: usize, f: &[String], key: &str| -> Result<(), MeshError> {
            if f.first().map(String::as_str) != Some(key) {
                return Err(MeshError::Parse {
                    line: ln,
                    msg: format!("expected section `{key}`"),
                });
            }
            Ok(())
        };

        let (ln, f) = next("width")?;
        header(ln, &f, "width")?;
        let width: f64 = num(ln, f.get(1))?;
        let (ln, f) = next("h")?;
        header(ln, &f, "h")?;
        let h: f64 = num(ln, f.get(1))?;
        let (ln, f) = next("layers")?;
        header(ln, &f, "layers")?;
        let n_layers: usize = num(ln, f.get(1))?;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let (ln, f) = next("layer row")?;
            layers.push(LayerBox {
                y_bottom: num(ln, f.get(1))?,
                y_top: num(ln, f.get(2))?,
            });
        }
        let (ln, f) = next("nodes")?;
        header(ln, &f, "nodes")?;
        let count: usize = num(ln, f.get(1))?;
        let mut nodes = Vec::with_capacity(count);
        let mut node_layer = Vec::with_capacity(count);
        for _ in 0..count {
            let (ln, f) = next("node row")?;
            nodes.push([num(ln, f.get(1))?, num(ln, f.get(2))?]);
            node_layer.push(num::<usize>(ln, f.get(3))?.saturating_sub(1));
        }
        let (ln, f) = next("triangles")?;
        header(ln, &f, "triangles")?;
        let count: usize = num(ln, f.get(1))?;
        let mut triangles = Vec::with_capacity(count);
        for _ in 0..count {
            let (ln, f) = next("triangle row")?;
            triangles.push(Triangle {
                nodes: [num(ln, f.get(1))?, num(ln, f.get(2))?, num(ln, f.get(3))?],
                layer: num::<usize>(ln, f.get(4))?.saturating_sub(1),
            });
        }
        let (ln, f) = next("tags")?;
        header(ln, &f, "tags")?;
        let count: usize = num(ln, f.get(1))?;
        let mut boundary_edges = Vec::with_capacity(count);
        for _ in 0..count {
            let (ln, f) = next("tag row")?;
            let tag = f
                .get(3)
                .and_then(|s| BoundaryTag::from_label(s))
                .ok_or(MeshError::Parse {
                    line: ln,
                    msg: "unknown boundary tag".into(),
                })?;
            boundary_edges.push(BoundaryEdge {
                nodes: [num(ln, f.first())?, num(ln, f.get(1))?],
                layer: num::<usize>(ln, f.get(2))?.saturating_sub(1),
                tag,
            });
        }
        let (ln, f) = next("pairs")?;
        header(ln, &f, "pairs")?;
        let count: usize = num(ln, f.get(1))?;
        let mut interface_pairs = vec![Vec::new(); n_layers.saturating_sub(1)];
        for _ in 0..count {
            let (ln, f) = next("pair row")?;
            let i: usize = num(ln, f.first())?;
            let slot = interface_pairs.get_mut(i.wrapping_sub(1)).ok_or(MeshError::Parse {
                line: ln,
                msg: format!("interface {i} out of range"),
            })?;
            slot.push(InterfacePair {
                upper: num(ln, f.get(1))?,
                lower: num(ln, f.get(2))?,
            });
        }
        Ok(Mesh {
            nodes,
            node_layer,
            triangles,
            boundary_edges,
            interface_pairs,
            layers,
            width,
            h,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Mesh {
        build_layered_mesh(&[LayerSpec::new(1.0, 1.0, 1)], 1).unwrap()
    }

    #[test]
    fn single_cell_counts_and_tags() {
        let m = unit_square();
        assert_eq!(m.nodes.len(), 4);
        assert_eq!(m.triangles.len(), 2);
        assert!(m.interface_pairs.is_empty());
        let count = |tag| m.boundary_edges.iter().filter(|e| e.tag == tag).count();
        assert_eq!(count(BoundaryTag::Dirichlet), 2);
        assert_eq!(count(BoundaryTag::Top), 1);
        assert_eq!(count(BoundaryTag::Bottom), 1);
        assert!((m.h - 2f64.sqrt()).abs() < 1e-15);
        assert!(audit_mesh(&m).is_empty());
    }

    #[test]
    fn two_layer_counts() {
        let layers = [LayerSpec::new(1.0, 0.5, 1); 2];
        let m = build_layered_mesh(&layers, 2).unwrap();
        assert_eq!(m.nodes.len(), 12);
        assert_eq!(m.triangles.len(), 8);
        assert_eq!(m.interface_pairs.len(), 1);
        assert_eq!(m.interface_pairs[0].len(), 3);
        for p in &m.interface_pairs[0] {
            assert_eq!(m.nodes[p.upper], m.nodes[p.lower]);
            assert_ne!(p.upper, p.lower);
        }
        assert!(audit_mesh(&m).is_empty());
    }

    #[test]
    fn three_layer_pairs_cover_every_bottom_node() {
        let layers = [LayerSpec::new(2.0, 0.3, 2); 3];
        let m = build_layered_mesh(&layers, 4).unwrap();
        assert!(audit_mesh(&m).is_empty());
        for i in 0..2 {
            let mut bottom: Vec<usize> = m.edges_with(i, BoundaryTag::Bottom).flat_map(|e| e.nodes).collect();
            bottom.sort_unstable();
            bottom.dedup();
            for n in bottom {
                let hits = m.interface_pairs[i].iter().filter(|p| p.upper == n).count();
                assert_eq!(hits, 1, "node {n} on interface {i}");
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            build_layered_mesh(&[LayerSpec::new(1.0, 1.0, 1), LayerSpec::new(2.0, 1.0, 1)], 2),
            Err(MeshError::InconsistentWidth { .. })
        ));
        assert!(matches!(
            build_layered_mesh(&[LayerSpec::new(1.0, 0.0, 1)], 2),
            Err(MeshError::NonPositive { .. })
        ));
        assert!(matches!(
            build_layered_mesh(&[LayerSpec::new(-1.0, 1.0, 1)], 2),
            Err(MeshError::NonPositive { .. })
        ));
        assert!(matches!(build_layered_mesh(&[], 2), Err(MeshError::NoLayers)));
        assert!(matches!(
            build_layered_mesh(&[LayerSpec::new(1.0, 1.0, 1)], 0),
            Err(MeshError::ZeroColumns)
        ));
    }

    #[test]
    fn refinement_of_unit_square() {
        let m = unit_square();
        let (r, map) = refine_uniform_with_map(&m);
        assert_eq!(r.triangles.len(), 8);
        assert_eq!(r.h, m.h / 2.0);
        assert!(audit_mesh(&r).is_empty());
        for (k, p) in m.nodes.iter().enumerate() {
            assert_eq!(r.nodes[k], *p);
        }
        assert_eq!(map.n_fine(), r.nodes.len());
    }

    #[test]
    fn refined_interface_pair_count() {
        let layers = [LayerSpec::new(1.0, 0.5, 1); 2];
        let m = build_layered_mesh(&layers, 2).unwrap();
        let r = refine_uniform(&m);
        // midpoints counted explicitly: 3 coarse nodes, 2 coarse edges
        let coarse = m.interface_pairs[0].len();
        let edges = m.edges_with(0, BoundaryTag::Bottom).count();
        assert_eq!(r.interface_pairs[0].len(), coarse + edges);
        assert_eq!(r.interface_pairs[0].len(), 2 * coarse - 1);
        assert!(audit_mesh(&r).is_empty());
    }

    #[test]
    fn refine_k_times_halves_h_exactly() {
        let layers = [LayerSpec::new(1.0, 0.25, 1), LayerSpec::new(1.0, 0.75, 3)];
        let mut m = build_layered_mesh(&layers, 4).unwrap();
        let h0 = m.h;
        for k in 1..=3 {
            m = refine_uniform(&m);
            assert_eq!(m.h, h0 * 0.5f64.powi(k));
            assert!(audit_mesh(&m).is_empty(), "{:?}", audit_mesh(&m));
        }
    }

    #[test]
    fn prolongation_then_restriction_is_identity() {
        let m = build_layered_mesh(&[LayerSpec::new(1.0, 1.0, 2)], 3).unwrap();
        let (_, map) = refine_uniform_with_map(&m);
        let coarse: Vec<f64> = (0..2 * m.n_nodes()).map(|i| (i as f64).sin()).collect();
        let fine = map.apply(&coarse, 2);
        assert_eq!(map.restrict(&fine, 2), coarse);
    }

    #[test]
    fn audit_detects_displaced_interface_node() {
        let layers = [LayerSpec::new(1.0, 0.5, 1); 2];
        let mut m = build_layered_mesh(&layers, 2).unwrap();
        let n = m.interface_pairs[0][1].upper;
        m.nodes[n][1] += 1e-3;
        let v = audit_mesh(&m);
        assert!(v.iter().any(|v| v.invariant == V_PAIR_COORDS), "{v:?}");
    }

    #[test]
    fn audit_detects_missing_dirichlet() {
        let mut m = build_layered_mesh(&[LayerSpec::new(1.0, 1.0, 2)], 2).unwrap();
        m.boundary_edges.retain(|e| e.tag != BoundaryTag::Dirichlet);
        let v = audit_mesh(&m);
        assert!(v.iter().any(|v| v.invariant == V_NO_DIRICHLET), "{v:?}");
    }

    #[test]
    fn audit_detects_flipped_triangle() {
        let mut m = unit_square();
        m.triangles[0].nodes.swap(1, 2);
        let v = audit_mesh(&m);
        assert!(v.iter().any(|v| v.invariant == V_ORIENTATION));
    }

    #[test]
    fn text_round_trip() {
        let layers = [LayerSpec::new(1.0, 0.5, 1), LayerSpec::new(1.0, 0.5, 2)];
        let m = refine_uniform(&build_layered_mesh(&layers, 3).unwrap());
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let back = Mesh::read_text(&buf[..]).unwrap();
        assert_eq!(back, m);
    }
}
