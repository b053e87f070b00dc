//! TOML problem description.
//!
//! ```toml
//! [geometry]
//! width = 1.0          # m
//! nx = 16
//!
//! [layer.1]            # top layer; numbering runs downwards
//! thickness = 0.25     # m
//! ny = 4
//! material = "linear-isotropic"   # or "p-perturbed" (needs gamma)
//! lambda = 1.0         # Pa
//! mu = 1.0             # Pa
//!
//! [interface.1]        # between layer 1 and layer 2
//! law = "modified-coulomb"        # or "coulomb"
//! mu = 0.1
//! delta = 0.2          # 1/Pa, modified law only
//!
//! [foundation]
//! normal = "power"     # c * r^m, or "capped": c * min(r, r0)
//! c = 10.0
//! m = 1.0
//! tangential = "coulomb"
//! mu = 0.2
//!
//! [loads]
//! body = [[0.0, -0.1], ...]       # N/m^3, one vector per layer
//! traction = { kind = "patch", center = 0.5, half_width = 0.25, amplitude = [0.5, -1.0] }
//!
//! [solver]             # optional; defaults are the canonical tolerances
//! [output]             # optional
//! ```
//!
//! Every physics key is required and unknown keys are rejected.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{assemble, AssemblyError, BodyForce, Loads, Traction, VIProblem};
use crate::constitutive::{ConstitutiveError, FrictionLaw, MaterialLaw, NormalCompliance, TangentialLaw};
use crate::mesh::{build_layered_mesh, LayerSpec, Mesh, MeshError};
use crate::solver::SolverConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{what} count must equal {expected} (got {got})")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("section [{section}.{key}]: keys must be consecutive integers starting at 1")]
    BadIndex { section: &'static str, key: String },
    #[error("{context}: missing key `{key}`")]
    Missing { context: String, key: &'static str },
    #[error("{context}: key `{key}` is not used by this law")]
    Unused { context: String, key: &'static str },
    #[error("{context}: {source}")]
    Invalid { context: String, source: ConstitutiveError },
    #[error("{0}")]
    Value(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub width: f64,
    pub nx: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaterialName {
    LinearIsotropic,
    PPerturbed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub thickness: f64,
    pub ny: usize,
    pub material: MaterialName,
    pub lambda: f64,
    pub mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TangentialName {
    Coulomb,
    ModifiedCoulomb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalName {
    Power,
    Capped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfaceConfig {
    pub law: TangentialName,
    pub mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoundationConfig {
    pub normal: NormalName,
    pub c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    pub tangential: TangentialName,
    pub mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TractionConfig {
    Uniform {
        value: [f64; 2],
    },
    Patch {
        center: f64,
        half_width: f64,
        amplitude: [f64; 2],
    },
    /// Rows `[x, t_x, t_y]`, linearly interpolated.
    Table {
        rows: Vec<[f64; 3]>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadsConfig {
    pub body: Vec<[f64; 2]>,
    pub traction: TractionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub vtk: bool,
    pub csv: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { vtk: true, csv: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub geometry: GeometryConfig,
    pub layer: BTreeMap<String, LayerConfig>,
    #[serde(default)]
    pub interface: BTreeMap<String, InterfaceConfig>,
    pub foundation: FoundationConfig,
    pub loads: LoadsConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Entries of a `[section.k]` map in numeric order, checking that keys run `1..=n`.
fn ordered<'a, T>(section: &'static str, map: &'a BTreeMap<String, T>) -> Result<Vec<&'a T>, ConfigError> {
    let mut v: Vec<(usize, &T)> = Vec::with_capacity(map.len());
    for (k, t) in map {
        let i: usize = k.parse().map_err(|_| ConfigError::BadIndex {
            section,
            key: k.clone(),
        })?;
        v.push((i, t));
    }
    v.sort_by_key(|(i, _)| *i);
    for (pos, (i, _)) in v.iter().enumerate() {
        if *i != pos + 1 {
            return Err(ConfigError::BadIndex {
                section,
                key: i.to_string(),
            });
        }
    }
    Ok(v.into_iter().map(|(_, t)| t).collect())
}

fn tangential(context: &str, law: TangentialName, mu: f64, delta: Option<f64>) -> Result<TangentialLaw, ConfigError> {
    let t = match (law, delta) {
        (TangentialName::Coulomb, None) => TangentialLaw::Coulomb { mu },
        (TangentialName::Coulomb, Some(_)) => {
            return Err(ConfigError::Unused {
                context: context.into(),
                key: "delta",
            })
        }
        (TangentialName::ModifiedCoulomb, Some(delta)) => TangentialLaw::ModifiedCoulomb { mu, delta },
        (TangentialName::ModifiedCoulomb, None) => {
            return Err(ConfigError::Missing {
                context: context.into(),
                key: "delta",
            })
        }
    };
    t.validate().map_err(|source| ConfigError::Invalid {
        context: context.into(),
        source,
    })?;
    Ok(t)
}

fn from_law(law: &TangentialLaw) -> (TangentialName, f64, Option<f64>) {
    match *law {
        TangentialLaw::Coulomb { mu } => (TangentialName::Coulomb, mu, None),
        TangentialLaw::ModifiedCoulomb { mu, delta } => (TangentialName::ModifiedCoulomb, mu, Some(delta)),
    }
}

pub fn parse_config(text: &str) -> Result<ProblemConfig, ConfigError> {
    let cfg: ProblemConfig = toml::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

impl ProblemConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Re-check every count and constitutive invariant.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.layer.len();
        if n == 0 {
            return Err(ConfigError::CountMismatch {
                what: "layer",
                expected: 1,
                got: 0,
            });
        }
        if self.interface.len() != n - 1 {
            return Err(ConfigError::CountMismatch {
                what: "interface law",
                expected: n - 1,
                got: self.interface.len(),
            });
        }
        if self.loads.body.len() != n {
            return Err(ConfigError::CountMismatch {
                what: "body force",
                expected: n,
                got: self.loads.body.len(),
            });
        }
        if !(self.geometry.width > 0.0) || !self.geometry.width.is_finite() {
            return Err(ConfigError::Value(format!(
                "geometry.width must be positive (got {})",
                self.geometry.width
            )));
        }
        if self.geometry.nx == 0 {
            return Err(ConfigError::Value("geometry.nx must be at least 1".into()));
        }
        self.materials()?;
        self.interface_laws()?;
        self.foundation_law()?;
        self.solver
            .validate()
            .map_err(|e| ConfigError::Value(format!("[solver]: {e}")))?;
        Ok(())
    }

    pub fn n_layers(&self) -> usize {
        self.layer.len()
    }

    pub fn layer_specs(&self) -> Result<Vec<LayerSpec>, ConfigError> {
        Ok(ordered("layer", &self.layer)?
            .into_iter()
            .map(|l| LayerSpec::new(self.geometry.width, l.thickness, l.ny))
            .collect())
    }

    pub fn materials(&self) -> Result<Vec<MaterialLaw>, ConfigError> {
        ordered("layer", &self.layer)?
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                let context = format!("[layer.{}]", i + 1);
                let wrap = |source| ConfigError::Invalid {
                    context: context.clone(),
                    source,
                };
                match (l.material, l.gamma) {
                    (MaterialName::LinearIsotropic, None) => MaterialLaw::linear(l.lambda, l.mu).map_err(wrap),
                    (MaterialName::PPerturbed, Some(g)) => MaterialLaw::perturbed(l.lambda, l.mu, g).map_err(wrap),
                    (MaterialName::LinearIsotropic, Some(_)) => Err(ConfigError::Unused {
                        context: context.clone(),
                        key: "gamma",
                    }),
                    (MaterialName::PPerturbed, None) => Err(ConfigError::Missing {
                        context: context.clone(),
                        key: "gamma",
                    }),
                }
            })
            .collect()
    }

    pub fn interface_laws(&self) -> Result<Vec<TangentialLaw>, ConfigError> {
        ordered("interface", &self.interface)?
            .into_iter()
            .enumerate()
            .map(|(i, c)| tangential(&format!("[interface.{}]", i + 1), c.law, c.mu, c.delta))
            .collect()
    }

    pub fn foundation_law(&self) -> Result<FrictionLaw, ConfigError> {
        let f = &self.foundation;
        let ctx = || "[foundation]".to_string();
        let normal = match (f.normal, f.m, f.r0) {
            (NormalName::Power, Some(m), None) => NormalCompliance::Power { c: f.c, m },
            (NormalName::Capped, None, Some(r0)) => NormalCompliance::Capped { c: f.c, r0 },
            (NormalName::Power, None, _) => {
                return Err(ConfigError::Missing {
                    context: ctx(),
                    key: "m",
                })
            }
            (NormalName::Power, Some(_), Some(_)) => {
                return Err(ConfigError::Unused {
                    context: ctx(),
                    key: "r0",
                })
            }
            (NormalName::Capped, _, None) => {
                return Err(ConfigError::Missing {
                    context: ctx(),
                    key: "r0",
                })
            }
            (NormalName::Capped, Some(_), Some(_)) => {
                return Err(ConfigError::Unused {
                    context: ctx(),
                    key: "m",
                })
            }
        };
        let t = tangential("[foundation]", f.tangential, f.mu, f.delta)?;
        FrictionLaw::new(normal, t).map_err(|source| ConfigError::Invalid { context: ctx(), source })
    }

    pub fn loads(&self) -> Loads {
        let traction = match &self.loads.traction {
            TractionConfig::Uniform { value } => Traction::Uniform(*value),
            TractionConfig::Patch {
                center,
                half_width,
                amplitude,
            } => Traction::Patch {
                center: *center,
                half_width: *half_width,
                amplitude: *amplitude,
            },
            TractionConfig::Table { rows } => Traction::Table(rows.clone()),
        };
        Loads {
            body: BodyForce::PerLayer(self.loads.body.clone()),
            traction,
        }
    }

    /// Mesh with `nx` columns (the configured value when `None`). Row counts
    /// scale with `nx` so cells keep the configured aspect ratio.
    pub fn build_mesh(&self, nx: Option<usize>) -> Result<Mesh, ConfigError> {
        let nx0 = self.geometry.nx;
        let nx = nx.unwrap_or(nx0);
        let mut specs = self.layer_specs()?;
        for (i, s) in specs.iter_mut().enumerate() {
            if (s.ny * nx) % nx0 != 0 || s.ny * nx < nx0 {
                return Err(ConfigError::Value(format!(
                    "nx = {nx} does not scale layer {} (ny = {} at nx = {nx0}) to a whole number of rows",
                    i + 1,
                    s.ny
                )));
            }
            s.ny = s.ny * nx / nx0;
        }
        Ok(build_layered_mesh(&specs, nx)?)
    }

    /// Assemble the configured physics on any compatible mesh.
    pub fn build_problem(&self, mesh: &Mesh) -> Result<VIProblem, ConfigError> {
        Ok(assemble(
            mesh,
            &self.materials()?,
            self.foundation_law()?,
            &self.interface_laws()?,
            &self.loads(),
        )?)
    }

    /// Replace every interface friction coefficient.
    pub fn with_interface_mu(&self, mu: f64) -> ProblemConfig {
        let mut c = self.clone();
        for i in c.interface.values_mut() {
            i.mu = mu;
        }
        c
    }

    /// Set the interface laws from constitutive values.
    pub fn set_interface_laws(&mut self, laws: &[TangentialLaw]) {
        self.interface = laws
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let (law, mu, delta) = from_law(l);
                ((i + 1).to_string(), InterfaceConfig { law, mu, delta })
            })
            .collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_LAYER: &str = r#"
[geometry]
width = 1.0
nx = 4

[layer.1]
thickness = 1.0
ny = 4
material = "linear-isotropic"
lambda = 1.0
mu = 1.0

[foundation]
normal = "power"
c = 1.0
m = 1.0
tangential = "coulomb"
mu = 0.0

[loads]
body = [[0.0, 0.0]]
traction = { kind = "uniform", value = [0.0, -1.0] }
"#;

    fn two_layers(interfaces: &str) -> String {
        format!(
            r#"
[geometry]
width = 2.0
nx = 4

[layer.1]
thickness = 0.5
ny = 2
material = "linear-isotropic"
lambda = 1.0
mu = 1.0

[layer.2]
thickness = 0.5
ny = 2
material = "p-perturbed"
lambda = 1.0
mu = 1.0
gamma = 0.5

{interfaces}

[foundation]
normal = "capped"
c = 2.0
r0 = 0.1
tangential = "modified-coulomb"
mu = 0.3
delta = 0.5

[loads]
body = [[0.0, -0.1], [0.0, -0.1]]
traction = {{ kind = "patch", center = 1.0, half_width = 0.5, amplitude = [0.2, -1.0] }}

[solver]
outer_tol = 1e-9
"#
        )
    }

    #[test]
    fn minimal_single_layer() {
        let c = parse_config(ONE_LAYER).unwrap();
        assert!(c.interface.is_empty());
        assert!(c.interface_laws().unwrap().is_empty());
        assert_eq!(c.solver, SolverConfig::default());
    }

    #[test]
    fn two_layers_one_interface() {
        let c = parse_config(&two_layers("[interface.1]\nlaw = \"coulomb\"\nmu = 0.1")).unwrap();
        assert_eq!(c.interface_laws().unwrap(), vec![TangentialLaw::Coulomb { mu: 0.1 }]);
        assert_eq!(c.solver.outer_tol, 1e-9);
        assert_eq!(c.solver.inner_tol, 1e-10);
    }

    #[test]
    fn interface_count_rule() {
        let text = ONE_LAYER.replace(
            "[foundation]",
            "[layer.2]\nthickness = 1.0\nny = 1\nmaterial = \"linear-isotropic\"\nlambda = 1.0\nmu = 1.0\n\n\
             [layer.3]\nthickness = 1.0\nny = 1\nmaterial = \"linear-isotropic\"\nlambda = 1.0\nmu = 1.0\n\n\
             [interface.1]\nlaw = \"coulomb\"\nmu = 0.1\n\n[foundation]",
        );
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("interface law count must equal 2"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = ONE_LAYER.replace("nx = 4", "nx = 4\ncolour = 3");
        assert!(parse_config(&text).is_err());
        let text = ONE_LAYER.replace("mu = 0.0", "mu = 0.0\nfriction = 1.0");
        assert!(parse_config(&text).is_err());
        let text = format!("{ONE_LAYER}\n[solver]\nspeed = 1\n");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn missing_physics_key() {
        let text = ONE_LAYER.replace("lambda = 1.0\n", "");
        assert!(parse_config(&text).is_err());
        let text = ONE_LAYER.replace("m = 1.0\n", "");
        assert!(matches!(
            parse_config(&text),
            Err(ConfigError::Missing { key: "m", .. })
        ));
    }

    #[test]
    fn invariants_rechecked() {
        let text = ONE_LAYER.replace("mu = 1.0", "mu = -1.0");
        assert!(matches!(parse_config(&text), Err(ConfigError::Invalid { .. })));
    }

    #[test]
    fn round_trip() {
        let c = parse_config(&two_layers(
            "[interface.1]\nlaw = \"modified-coulomb\"\nmu = 0.1\ndelta = 0.25",
        ))
        .unwrap();
        let again = parse_config(&c.to_toml()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn builds_problem() {
        let c = parse_config(ONE_LAYER).unwrap();
        let mesh = c.build_mesh(None).unwrap();
        let p = c.build_problem(&mesh).unwrap();
        assert_eq!(p.n_dofs(), 2 * 25);
        let coarse = c.build_mesh(Some(2)).unwrap();
        assert_eq!(coarse.n_nodes(), 9);
        assert_eq!(c.build_mesh(Some(3)).unwrap().n_nodes(), 16);
        let thin = parse_config(&ONE_LAYER.replace("ny = 4", "ny = 2")).unwrap();
        assert!(thin.build_mesh(Some(3)).is_err());
    }
}
