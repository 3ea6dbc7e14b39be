//! The two reaction networks, their conserved masses and equilibria.
//!
//! `P1` is the catalytic network `A + B -> C`, `B + C -> A + 2B`; `P2` is the
//! symmetric network `A + B -> 2C`, `B + C -> 2A`, `C + A -> 2B`. All rate
//! constants are normalized to one and the domain has unit measure, so a
//! spatially constant field equals its own integral.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{integrate, Mesh};
use crate::solver::State;

/// Concentrations `(a, b, c)` at one point, or a homogeneous state.
pub type Triple = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    /// Catalytic network with two conservation laws.
    P1,
    /// Symmetric network with total-mass conservation only.
    P2,
}

impl System {
    pub fn name(self) -> &'static str {
        match self {
            System::P1 => "p1",
            System::P2 => "p2",
        }
    }
}

impl std::str::FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p1" => Ok(System::P1),
            "p2" => Ok(System::P2),
            other => Err(Error::InvalidArgument(format!("unknown system '{other}'"))),
        }
    }
}

/// Conserved masses of a state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "lowercase")]
pub enum Masses {
    /// `m1 = ∫(a + c)`, `m2 = ∫(b + c)`.
    P1 { m1: f64, m2: f64 },
    /// `m = ∫(a + b + c)`.
    P2 { m: f64 },
}

impl Masses {
    pub fn p1(m1: f64, m2: f64) -> Self {
        Masses::P1 { m1, m2 }
    }

    pub fn p2(m: f64) -> Self {
        Masses::P2 { m }
    }

    pub fn system(&self) -> System {
        match self {
            Masses::P1 { .. } => System::P1,
            Masses::P2 { .. } => System::P2,
        }
    }

    /// Build from a slice of values, `[m1, m2]` for P1 and `[m]` for P2.
    pub fn from_values(system: System, values: &[f64]) -> Result<Self> {
        let masses = match (system, values) {
            (System::P1, &[m1, m2]) => Masses::p1(m1, m2),
            (System::P2, &[m]) => Masses::p2(m),
            _ => {
                return Err(Error::InvalidMasses(format!(
                    "{} expects {} mass value(s), got {}",
                    system.name(),
                    if system == System::P1 { 2 } else { 1 },
                    values.len()
                )))
            }
        };
        masses.validate()?;
        Ok(masses)
    }

    /// Conserved combinations of the species integrals `[∫a, ∫b, ∫c]`.
    pub fn from_integrals(system: System, integrals: Triple) -> Self {
        let [ia, ib, ic] = integrals;
        match system {
            System::P1 => Masses::p1(ia + ic, ib + ic),
            System::P2 => Masses::p2(ia + ib + ic),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match *self {
            Masses::P1 { m1, m2 } => vec![m1, m2],
            Masses::P2 { m } => vec![m],
        }
    }

    pub fn max(&self) -> f64 {
        self.values().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        let values = self.values();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMasses(format!(
                "non-finite masses {values:?}"
            )));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidMasses(format!("negative masses {values:?}")));
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidMasses("all masses are zero".into()));
        }
        Ok(())
    }
}

/// Which equilibria exist for the given masses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// P1 with `m1 < m2`.
    PositiveOnly,
    /// P1 with `m2 <= m1 < 2 m2`.
    Coexistence,
    /// P1 with `m1 >= 2 m2`.
    BoundaryOnly,
    /// P2, any positive total mass.
    Symmetric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSet {
    pub positive: Option<Triple>,
    pub boundary: Vec<Triple>,
    pub regime: Regime,
}

impl EquilibriumSet {
    /// Whether `eq` is one of the listed boundary equilibria (exact match).
    pub fn has_boundary(&self, eq: &Triple) -> bool {
        self.boundary.iter().any(|b| b == eq)
    }
}

/// Diffusion coefficients `(d1, d2, d3)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub diffusion: [f64; 3],
}

impl Params {
    pub fn new(diffusion: [f64; 3]) -> Result<Self> {
        let params = Params { diffusion };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.diffusion.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "diffusion coefficients must be positive, got {:?}",
                self.diffusion
            )));
        }
        Ok(())
    }
}

impl Default for Params {
    fn default() -> Self {
        Params {
            diffusion: [1.0, 1.0, 1.0],
        }
    }
}

/// Pointwise reaction terms `(f_a, f_b, f_c)`.
#[inline]
pub fn reaction_rhs(system: System, a: f64, b: f64, c: f64) -> Triple {
    match system {
        System::P1 => {
            let r = b * (c - a);
            [r, r, -r]
        }
        System::P2 => {
            let fa = -a * b - a * c + 2.0 * b * c;
            let fb = -b * a - b * c + 2.0 * a * c;
            // equals -c*a - c*b + 2*a*b; written this way so fa + fb + fc == 0 in floating point
            [fa, fb, -(fa + fb)]
        }
    }
}

/// Jacobian of [`reaction_rhs`] at `z`, row `i` holding `∂f_i/∂(a, b, c)`.
pub fn reaction_jacobian(system: System, z: Triple) -> [[f64; 3]; 3] {
    let [a, b, c] = z;
    match system {
        System::P1 => {
            let row = [-b, c - a, b];
            [row, row, [b, a - c, -b]]
        }
        System::P2 => [
            [-b - c, -a + 2.0 * c, -a + 2.0 * b],
            [-b + 2.0 * c, -a - c, 2.0 * a - b],
            [-c + 2.0 * b, 2.0 * a - c, -a - b],
        ],
    }
}

/// Equilibria compatible with the given masses.
pub fn classify_equilibria(system: System, masses: Masses) -> Result<EquilibriumSet> {
    masses.validate()?;
    if masses.system() != system {
        return Err(Error::InvalidMasses(format!(
            "masses for {} given to {}",
            masses.system().name(),
            system.name()
        )));
    }
    Ok(match masses {
        Masses::P1 { m1, m2 } => {
            let positive = [m1 / 2.0, m2 - m1 / 2.0, m1 / 2.0];
            let boundary = [m1 - m2, 0.0, m2];
            if m1 < m2 {
                EquilibriumSet {
                    positive: Some(positive),
                    boundary: vec![],
                    regime: Regime::PositiveOnly,
                }
            } else if m1 < 2.0 * m2 {
                EquilibriumSet {
                    positive: Some(positive),
                    boundary: vec![boundary],
                    regime: Regime::Coexistence,
                }
            } else {
                EquilibriumSet {
                    positive: None,
                    boundary: vec![boundary],
                    regime: Regime::BoundaryOnly,
                }
            }
        }
        Masses::P2 { m } => EquilibriumSet {
            positive: Some([m / 3.0; 3]),
            boundary: vec![[m, 0.0, 0.0], [0.0, m, 0.0], [0.0, 0.0, m]],
            regime: Regime::Symmetric,
        },
    })
}

/// Species integrals `[∫a, ∫b, ∫c]` by midpoint quadrature.
pub fn species_integrals(state: &State, mesh: &Mesh) -> Result<Triple> {
    Ok([
        integrate(&state.a, mesh)?,
        integrate(&state.b, mesh)?,
        integrate(&state.c, mesh)?,
    ])
}

pub fn compute_masses(system: System, state: &State, mesh: &Mesh) -> Result<Masses> {
    Ok(Masses::from_integrals(
        system,
        species_integrals(state, mesh)?,
    ))
}
