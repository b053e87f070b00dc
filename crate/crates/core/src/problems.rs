//! Ready-made problems: the pavement configuration shipped in `configs/`,
//! a frictionless problem with a known smooth solution, and small random
//! instances for cross-checking solvers.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{assemble, interpolate_nodal, AssemblyError, BodyForce, Loads, Traction, VIProblem};
use crate::config::{parse_config, ProblemConfig};
use crate::constitutive::{FrictionLaw, MaterialLaw, NormalCompliance, TangentialLaw};
use crate::mesh::{build_layered_mesh, LayerSpec, Mesh};

pub const CANONICAL_TOML: &str = include_str!("../../../configs/canonical.toml");

pub fn canonical_config() -> ProblemConfig {
    parse_config(CANONICAL_TOML).expect("shipped configuration is valid")
}

/// Single frictionless layer on a linear foundation `g_N(r) = kappa r`, loaded
/// so that
///
/// `u_x = d c'(x) t`, `u_y = -d c(x) (1 + a t)`, with `c = sin^2(pi x / W)`,
/// `t = y` and `a = kappa / (lambda + 2 mu)`.
///
/// The field vanishes on the clamped sides, the foundation is in contact
/// everywhere and the foundation shear is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Manufactured {
    pub width: f64,
    pub thickness: f64,
    pub lambda: f64,
    pub mu: f64,
    pub kappa: f64,
    pub d: f64,
}

impl Default for Manufactured {
    fn default() -> Self {
        Self {
            width: 1.0,
            thickness: 0.5,
            lambda: 1.0,
            mu: 1.0,
            kappa: 2.0,
            d: 0.01,
        }
    }
}

impl Manufactured {
    fn k(&self) -> f64 {
        PI / self.width
    }

    fn a(&self) -> f64 {
        self.kappa / (self.lambda + 2.0 * self.mu)
    }

    /// `c, c', c'', c'''`.
    fn profile(&self, x: f64) -> [f64; 4] {
        let k = self.k();
        let s = (k * x).sin();
        [
            s * s,
            k * (2.0 * k * x).sin(),
            2.0 * k * k * (2.0 * k * x).cos(),
            -4.0 * k * k * k * (2.0 * k * x).sin(),
        ]
    }

    pub fn exact(&self, p: [f64; 2]) -> [f64; 2] {
        let [c, c1, _, _] = self.profile(p[0]);
        let t = p[1];
        [self.d * c1 * t, -self.d * c * (1.0 + self.a() * t)]
    }

    /// Stress `(xx, yy, xy)` of the exact field.
    pub fn stress(&self, p: [f64; 2]) -> [f64; 3] {
        let [c, c1, c2, _] = self.profile(p[0]);
        let (t, d, a, l, m) = (p[1], self.d, self.a(), self.lambda, self.mu);
        let exx = d * c2 * t;
        let eyy = -d * c * a;
        let exy = -0.5 * d * c1 * a * t;
        [
            (l + 2.0 * m) * exx + l * eyy,
            l * exx + (l + 2.0 * m) * eyy,
            2.0 * m * exy,
        ]
    }

    /// `f_0 = -div sigma`.
    pub fn body_force(&self, p: [f64; 2]) -> [f64; 2] {
        let [_, c1, c2, c3] = self.profile(p[0]);
        let (t, d, a, l, m) = (p[1], self.d, self.a(), self.lambda, self.mu);
        [
            -((l + 2.0 * m) * d * c3 * t - l * d * a * c1 - m * d * a * c1),
            -(-m * d * a * t * c2 + l * d * c2),
        ]
    }

    /// Top-edge traction `sigma (0, 1)`.
    pub fn traction(&self, x: f64) -> [f64; 2] {
        let s = self.stress([x, self.thickness]);
        [s[2], s[1]]
    }

    pub fn mesh(&self, nx: usize, ny: usize) -> Mesh {
        build_layered_mesh(&[LayerSpec::new(self.width, self.thickness, ny)], nx).expect("valid geometry")
    }

    pub fn build(&self, mesh: &Mesh) -> Result<VIProblem, AssemblyError> {
        let body = mesh.nodes.iter().map(|&p| self.body_force(p)).collect();
        let traction = mesh.nodes.iter().map(|&p| self.traction(p[0])).collect();
        let foundation = FrictionLaw::new(
            NormalCompliance::Power { c: self.kappa, m: 1.0 },
            TangentialLaw::Coulomb { mu: 0.0 },
        )
        .expect("valid law");
        let material = MaterialLaw::linear(self.lambda, self.mu).expect("valid law");
        assemble(
            mesh,
            &[material],
            foundation,
            &[],
            &Loads {
                body: BodyForce::Nodal(body),
                traction: Traction::Nodal(traction),
            },
        )
    }

    pub fn interpolant(&self, mesh: &Mesh) -> Vec<f64> {
        interpolate_nodal(mesh, |p, _| self.exact(p))
    }
}

/// Random problem with at most 200 dofs: `n_layers` linear layers, Coulomb
/// interfaces with coefficient `mu`, and a downward load with a shear part.
pub fn random_small_instance(seed: u64, n_layers: usize, mu: f64) -> VIProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nx, ny): (usize, Vec<usize>) = match n_layers {
        1 => (rng.gen_range(4..=7), vec![rng.gen_range(2..=4)]),
        2 => (rng.gen_range(4..=6), vec![rng.gen_range(1..=2), rng.gen_range(1..=3)]),
        _ => (
            rng.gen_range(3..=5),
            (0..n_layers).map(|_| rng.gen_range(1..=2)).collect(),
        ),
    };
    let width = rng.gen_range(1.0..2.0);
    // cell aspect ratios kept within [0.6, 1.6] so every instance is shape-regular
    let dx = width / nx as f64;
    let specs: Vec<LayerSpec> = ny
        .iter()
        .map(|&n| LayerSpec::new(width, n as f64 * dx * rng.gen_range(0.6..1.6), n))
        .collect();
    let mesh = build_layered_mesh(&specs, nx).expect("valid geometry");
    assert!(2 * mesh.n_nodes() <= 200, "instance exceeds the dense regime");
    let materials: Vec<MaterialLaw> = (0..n_layers)
        .map(|_| MaterialLaw::linear(rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)).unwrap())
        .collect();
    let foundation = FrictionLaw::new(
        NormalCompliance::Power {
            c: rng.gen_range(0.05..0.4),
            m: 1.0,
        },
        TangentialLaw::Coulomb {
            mu: rng.gen_range(0.0..0.5),
        },
    )
    .unwrap();
    let interfaces = vec![TangentialLaw::Coulomb { mu }; n_layers - 1];
    let body = (0..n_layers)
        .map(|_| [rng.gen_range(-0.1..0.1), rng.gen_range(-0.2..0.2)])
        .collect();
    let loads = Loads {
        body: BodyForce::PerLayer(body),
        traction: Traction::Patch {
            center: width * rng.gen_range(0.3..0.7),
            half_width: width * rng.gen_range(0.15..0.3),
            amplitude: [rng.gen_range(-0.6..0.6), -rng.gen_range(0.5..1.5)],
        },
    };
    assemble(&mesh, &materials, foundation, &interfaces, &loads).expect("valid instance")
}
