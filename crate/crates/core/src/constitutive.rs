//! Material laws and contact functions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConstitutiveError {
    #[error("strain tensor is not symmetric (xy = {xy}, yx = {yx})")]
    NotSymmetric { xy: f64, yx: f64 },
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("empty sampling box [{lo}, {hi}]")]
    EmptyBox { lo: f64, hi: f64 },
    #[error("sample_count must be at least 2")]
    TooFewSamples,
}

/// Symmetric 2x2 tensor stored as (xx, yy, xy).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Sym2 {
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
}

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 {
        xx: 0.0,
        yy: 0.0,
        xy: 0.0,
    };

    pub fn new(xx: f64, yy: f64, xy: f64) -> Self {
        Self { xx, yy, xy }
    }

    pub fn identity() -> Self {
        Self::new(1.0, 1.0, 0.0)
    }

    /// Accept a full 2x2 matrix, rejecting asymmetric input.
    pub fn from_matrix(m: [[f64; 2]; 2]) -> Result<Self, ConstitutiveError> {
        let (xy, yx) = (m[0][1], m[1][0]);
        let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        if (xy - yx).abs() > 1e-12 * scale.max(1.0) {
            return Err(ConstitutiveError::NotSymmetric { xy, yx });
        }
        Ok(Self::new(m[0][0], m[1][1], 0.5 * (xy + yx)))
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    /// Frobenius product `a : b`.
    pub fn ddot(&self, o: &Sym2) -> f64 {
        self.xx * o.xx + self.yy * o.yy + 2.0 * self.xy * o.xy
    }

    pub fn norm(&self) -> f64 {
        self.ddot(self).sqrt()
    }

    pub fn scale(&self, a: f64) -> Sym2 {
        Sym2::new(a * self.xx, a * self.yy, a * self.xy)
    }

    pub fn add(&self, o: &Sym2) -> Sym2 {
        Sym2::new(self.xx + o.xx, self.yy + o.yy, self.xy + o.xy)
    }

    pub fn sub(&self, o: &Sym2) -> Sym2 {
        Sym2::new(self.xx - o.xx, self.yy - o.yy, self.xy - o.xy)
    }

    /// `self * n` for a vector `n`.
    pub fn apply(&self, n: [f64; 2]) -> [f64; 2] {
        [self.xx * n[0] + self.xy * n[1], self.xy * n[0] + self.yy * n[1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaterialKind {
    LinearIsotropic,
    PPerturbed,
}

/// Isotropic elasticity, optionally with a strain-dependent shear modulus
/// `mu * (1 + gamma / (1 + |eps|))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialLaw {
    pub kind: MaterialKind,
    pub lambda: f64,
    pub mu: f64,
    pub gamma: f64,
}

fn invalid(name: &'static str, value: f64, reason: &'static str) -> ConstitutiveError {
    ConstitutiveError::InvalidParameter { name, value, reason }
}

impl MaterialLaw {
    pub fn linear(lambda: f64, mu: f64) -> Result<Self, ConstitutiveError> {
        let law = Self {
            kind: MaterialKind::LinearIsotropic,
            lambda,
            mu,
            gamma: 0.0,
        };
        law.validate()?;
        Ok(law)
    }

    pub fn perturbed(lambda: f64, mu: f64, gamma: f64) -> Result<Self, ConstitutiveError> {
        let law = Self {
            kind: MaterialKind::PPerturbed,
            lambda,
            mu,
            gamma,
        };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<(), ConstitutiveError> {
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(invalid("mu", self.mu, "must be positive"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(invalid("lambda", self.lambda, "must be non-negative"));
        }
        if self.kind == MaterialKind::PPerturbed && !(0.0..1.0).contains(&self.gamma) {
            return Err(invalid("gamma", self.gamma, "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn is_linear(&self) -> bool {
        self.kind == MaterialKind::LinearIsotropic
    }

    fn phi(&self, s: f64) -> f64 {
        match self.kind {
            MaterialKind::LinearIsotropic => 1.0,
            MaterialKind::PPerturbed => 1.0 + self.gamma / (1.0 + s),
        }
    }

    pub fn stress(&self, eps: &Sym2) -> Sym2 {
        let shear = 2.0 * self.mu * self.phi(eps.norm());
        let vol = self.lambda * eps.trace();
        Sym2::new(shear * eps.xx + vol, shear * eps.yy + vol, shear * eps.xy)
    }

    /// Stored energy density whose gradient is [`MaterialLaw::stress`].
    pub fn energy_density(&self, eps: &Sym2) -> f64 {
        let s = eps.norm();
        let dev = match self.kind {
            MaterialKind::LinearIsotropic => 0.5 * s * s,
            MaterialKind::PPerturbed => 0.5 * s * s + self.gamma * (s - s.ln_1p()),
        };
        2.0 * self.mu * dev + 0.5 * self.lambda * eps.trace().powi(2)
    }

    /// Consistent tangent in Voigt form, mapping `[d_xx, d_yy, 2 d_xy]` to
    /// `[d_sigma_xx, d_sigma_yy, d_sigma_xy]`.
    pub fn tangent(&self, eps: &Sym2) -> [[f64; 3]; 3] {
        let s = eps.norm();
        let g = 2.0 * self.mu * self.phi(s);
        let l = self.lambda;
        let mut d = [[g + l, l, 0.0], [l, g + l, 0.0], [0.0, 0.0, 0.5 * g]];
        if self.kind == MaterialKind::PPerturbed && s > 1e-300 {
            let dphi = -self.gamma / (1.0 + s).powi(2);
            let c = 2.0 * self.mu * dphi / s;
            let a = [eps.xx, eps.yy, eps.xy];
            for (i, row) in d.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v += c * a[i] * a[j];
                }
            }
        }
        d
    }

    /// Closed-form Lipschitz and monotonicity bounds of the stress map.
    pub fn analytic_bounds(&self) -> (f64, f64) {
        let lip = 2.0 * self.mu * (1.0 + self.gamma) + 2.0 * self.lambda;
        (lip, 2.0 * self.mu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NormalCompliance {
    /// `c * max(0, r)^m`
    Power { c: f64, m: f64 },
    /// `c * clamp(r, 0, r0)`
    Capped { c: f64, r0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TangentialLaw {
    /// `mu * s`
    Coulomb { mu: f64 },
    /// `mu * s * max(0, 1 - delta * s)`
    ModifiedCoulomb { mu: f64, delta: f64 },
}

impl NormalCompliance {
    pub fn validate(&self) -> Result<(), ConstitutiveError> {
        match *self {
            NormalCompliance::Power { c, m } => {
                if !(c >= 0.0) || !c.is_finite() {
                    return Err(invalid("c", c, "must be non-negative"));
                }
                if !(m >= 1.0) || !m.is_finite() {
                    return Err(invalid("m", m, "must be at least 1"));
                }
            }
            NormalCompliance::Capped { c, r0 } => {
                if !(c >= 0.0) || !c.is_finite() {
                    return Err(invalid("c", c, "must be non-negative"));
                }
                if !(r0 > 0.0) || !r0.is_finite() {
                    return Err(invalid("r0", r0, "must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match *self {
            NormalCompliance::Power { c, m } => {
                if m == 1.0 {
                    c * r
                } else {
                    c * r.powf(m)
                }
            }
            NormalCompliance::Capped { c, r0 } => c * r.min(r0),
        }
    }
}

impl TangentialLaw {
    pub fn validate(&self) -> Result<(), ConstitutiveError> {
        let (mu, delta) = match *self {
            TangentialLaw::Coulomb { mu } => (mu, 0.0),
            TangentialLaw::ModifiedCoulomb { mu, delta } => (mu, delta),
        };
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(invalid("mu", mu, "must be non-negative"));
        }
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(invalid("delta", delta, "must be non-negative"));
        }
        Ok(())
    }

    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            TangentialLaw::Coulomb { mu } => mu * s.max(0.0),
            TangentialLaw::ModifiedCoulomb { mu, delta } => {
                let s = s.max(0.0);
                mu * s * (1.0 - delta * s).max(0.0)
            }
        }
    }

    pub fn coefficient(&self) -> f64 {
        match *self {
            TangentialLaw::Coulomb { mu } | TangentialLaw::ModifiedCoulomb { mu, .. } => mu,
        }
    }

    /// Same law with the friction coefficient replaced.
    pub fn with_coefficient(&self, mu: f64) -> Self {
        match *self {
            TangentialLaw::Coulomb { .. } => TangentialLaw::Coulomb { mu },
            TangentialLaw::ModifiedCoulomb { delta, .. } => TangentialLaw::ModifiedCoulomb { mu, delta },
        }
    }
}

/// Normal compliance and friction on the foundation or an interface. Interfaces
/// use only the tangential part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionLaw {
    pub normal: NormalCompliance,
    pub tangential: TangentialLaw,
}

impl FrictionLaw {
    pub fn new(normal: NormalCompliance, tangential: TangentialLaw) -> Result<Self, ConstitutiveError> {
        normal.validate()?;
        tangential.validate()?;
        Ok(Self { normal, tangential })
    }

    pub fn g_n(&self, r: f64) -> f64 {
        self.normal.eval(r)
    }

    pub fn g_t(&self, s: f64) -> f64 {
        self.tangential.eval(s)
    }
}

/// Closed interval sampled uniformly per component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingBox {
    pub lo: f64,
    pub hi: f64,
}

impl SamplingBox {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn check(&self) -> Result<(), ConstitutiveError> {
        if !(self.hi > self.lo) {
            return Err(ConstitutiveError::EmptyBox {
                lo: self.lo,
                hi: self.hi,
            });
        }
        Ok(())
    }
}

/// Sampled Lipschitz and monotonicity quotients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantEstimate {
    /// Largest sampled `|F(x1) - F(x2)| / |x1 - x2|`.
    pub lipschitz: f64,
    /// Smallest sampled `(F(x1) - F(x2)) . (x1 - x2) / |x1 - x2|^2`.
    pub monotonicity: f64,
}

/// Anything whose difference quotients can be sampled.
pub enum LawRef<'a> {
    Material(&'a MaterialLaw),
    Normal(&'a NormalCompliance),
    Tangential(&'a TangentialLaw),
}

pub fn estimate_constants(
    law: LawRef<'_>,
    sample_count: usize,
    sbox: SamplingBox,
    seed: u64,
) -> Result<ConstantEstimate, ConstitutiveError> {
    if sample_count < 2 {
        return Err(ConstitutiveError::TooFewSamples);
    }
    sbox.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut est = ConstantEstimate {
        lipschitz: 0.0,
        monotonicity: f64::INFINITY,
    };
    let mut record = |num_lip: f64, num_mono: f64, den: f64| {
        if den > 0.0 {
            est.lipschitz = est.lipschitz.max(num_lip / den);
            est.monotonicity = est.monotonicity.min(num_mono / (den * den));
        }
    };
    let mut draw = || rng.gen_range(sbox.lo..=sbox.hi);
    for _ in 0..sample_count {
        match law {
            LawRef::Material(m) => {
                let a = Sym2::new(draw(), draw(), draw());
                let b = Sym2::new(draw(), draw(), draw());
                let de = a.sub(&b);
                let ds = m.stress(&a).sub(&m.stress(&b));
                record(ds.norm(), ds.ddot(&de), de.norm());
            }
            LawRef::Normal(g) => {
                let (a, b) = (draw(), draw());
                let d = g.eval(a) - g.eval(b);
                record(d.abs(), d * (a - b), (a - b).abs());
            }
            LawRef::Tangential(g) => {
                let (a, b) = (draw(), draw());
                let d = g.eval(a) - g.eval(b);
                record(d.abs(), d * (a - b), (a - b).abs());
            }
        }
    }
    Ok(est)
}
