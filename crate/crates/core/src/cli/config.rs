//! Experiment configuration documents.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Mesh;
use crate::init::{cosine_perturbed, random_initial_state};
use crate::instability::Shape;
use crate::model::{classify_equilibria, Masses, Params, System, Triple};
use crate::solver::{default_dt, Scheme, SolverConfig, State};

use super::io::read_states_csv;

/// Cosine perturbation with seeded random amplitudes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// Largest total amplitude relative to the smallest base component.
    pub amplitude: f64,
    #[serde(default = "default_modes")]
    pub modes: usize,
}

fn default_modes() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Initial {
    /// A homogeneous triple, optionally perturbed.
    Constant {
        values: Triple,
        #[serde(default)]
        perturbation: Option<Perturbation>,
    },
    /// Random smooth positive data with the top-level `masses`.
    Random {
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_modes")]
        modes: usize,
    },
    /// The first time level of a states CSV (`t,cell,x,a,b,c`).
    Csv { path: PathBuf },
}

fn default_amplitude() -> f64 {
    0.5
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    #[serde(default)]
    pub trajectory_csv: Option<PathBuf>,
    #[serde(default)]
    pub summary_json: Option<PathBuf>,
    #[serde(default)]
    pub states_csv: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstabilitySection {
    /// Defaults to the first admissible boundary equilibrium.
    #[serde(default)]
    pub boundary_eq: Option<Triple>,
    pub delta: f64,
    #[serde(default = "default_shape")]
    pub shape: Shape,
    /// Defaults to `0.05 · min(masses)`.
    #[serde(default)]
    pub tau: Option<f64>,
    /// If given together with `t_probe`, the deviation scaling is measured.
    #[serde(default)]
    pub deltas: Option<Vec<f64>>,
    #[serde(default)]
    pub t_probe: Option<f64>,
}

fn default_shape() -> Shape {
    Shape::HomogeneousB
}

fn default_record_every() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: System,
    pub n_cells: usize,
    #[serde(default = "default_diffusion")]
    pub diffusion: [f64; 3],
    /// `[m1, m2]` for P1 or `[m]` for P2. Required for random initial data
    /// and for instability runs.
    #[serde(default)]
    pub masses: Option<Vec<f64>>,
    pub initial: Initial,
    pub t_end: f64,
    #[serde(default)]
    pub dt_init: Option<f64>,
    #[serde(default)]
    pub dt_min: Option<f64>,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub instability: Option<InstabilitySection>,
}

fn default_diffusion() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Config(m));
        if self.n_cells < 2 {
            return cfg_err(format!("n_cells must be at least 2, got {}", self.n_cells));
        }
        if self.diffusion.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return cfg_err(format!(
                "diffusion must be positive, got {:?}",
                self.diffusion
            ));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return cfg_err(format!("t_end must be positive, got {}", self.t_end));
        }
        if self.record_every == 0 {
            return cfg_err("record_every must be at least 1".into());
        }
        if let Some(dt) = self.dt_init {
            if !(dt.is_finite() && dt > 0.0) {
                return cfg_err(format!("dt_init must be positive, got {dt}"));
            }
        }
        if let Some(m) = &self.masses {
            Masses::from_values(self.system, m)?.validate()?;
        }
        Ok(())
    }

    pub fn mesh(&self) -> Result<Mesh> {
        Mesh::new(self.n_cells)
    }

    pub fn params(&self) -> Result<Params> {
        Params::new(self.diffusion)
    }

    pub fn masses(&self) -> Result<Masses> {
        match &self.masses {
            Some(m) => Masses::from_values(self.system, m),
            None => Err(Error::Config("this run needs `masses`".into())),
        }
    }

    pub fn initial_state(&self, mesh: &Mesh) -> Result<State> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let state = match &self.initial {
            Initial::Constant {
                values,
                perturbation,
            } => match perturbation {
                None => State::constant(mesh, *values),
                Some(p) => {
                    use rand::Rng;
                    let floor = values.iter().copied().fold(f64::INFINITY, f64::min);
                    let per_mode = p.amplitude * floor / p.modes.max(1) as f64;
                    let amps: Vec<Triple> = (0..p.modes)
                        .map(|_| {
                            [
                                per_mode * rng.gen_range(-1.0..1.0),
                                per_mode * rng.gen_range(-1.0..1.0),
                                per_mode * rng.gen_range(-1.0..1.0),
                            ]
                        })
                        .collect();
                    cosine_perturbed(mesh, *values, &amps)
                }
            },
            Initial::Random { amplitude, modes } => {
                random_initial_state(&self.masses()?, mesh, *amplitude, *modes, &mut rng)?
            }
            Initial::Csv { path } => {
                let states = read_states_csv(path)?;
                let first = states
                    .into_iter()
                    .next()
                    .ok_or_else(|| Error::Config(format!("{} holds no states", path.display())))?;
                let mut s = first;
                s.t = 0.0;
                s
            }
        };
        state
            .check(mesh)
            .map_err(|e| Error::Config(format!("initial data: {e}")))?;
        if state.min() < 0.0 {
            return Err(Error::Config(format!(
                "initial data has negative values (min {:e})",
                state.min()
            )));
        }
        Ok(state)
    }

    /// Solver settings; `masses` sets the default time step.
    pub fn solver_config(&self, masses: &Masses) -> Result<SolverConfig> {
        let mut cfg = SolverConfig::new(self.system, self.params()?, masses, self.t_end);
        cfg.scheme = self.scheme;
        cfg.record_every = self.record_every;
        let dt = self.dt_init.unwrap_or_else(|| default_dt(masses));
        cfg.dt_init = dt;
        cfg.dt_min = self.dt_min.unwrap_or(dt / (1u64 << 20) as f64);
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Boundary equilibrium for an instability run.
    pub fn boundary_eq(&self, masses: Masses) -> Result<Triple> {
        let set = classify_equilibria(self.system, masses)?;
        let explicit = self.instability.as_ref().and_then(|s| s.boundary_eq);
        match explicit {
            Some(eq) => Ok(eq),
            None => set.boundary.first().copied().ok_or_else(|| {
                Error::RegimeMismatch(format!("{masses:?} admit no boundary equilibrium"))
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_parses_with_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"system":"p1","n_cells":8,"initial":{"kind":"constant","values":[0.5,1.5,0.5]},"t_end":1}"#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.diffusion, [1.0; 3]);
        assert_eq!(cfg.record_every, 1);
        assert_eq!(cfg.scheme, Scheme::BackwardEulerDiffusion);
        let mesh = cfg.mesh().unwrap();
        assert_eq!(
            cfg.initial_state(&mesh).unwrap(),
            State::constant(&mesh, [0.5, 1.5, 0.5])
        );
    }

    #[test]
    fn invalid_documents_are_config_errors() {
        let bad: ExperimentConfig = serde_json::from_str(
            r#"{"system":"p1","n_cells":1,"initial":{"kind":"constant","values":[1,1,1]},"t_end":1}"#,
        )
        .unwrap();
        assert_eq!(bad.validate().unwrap_err().exit_code(), 2);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"system":"p9"}"#).is_err());
    }
}
