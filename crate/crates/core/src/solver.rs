//! Lie splitting: explicit Euler for the reaction, then an implicit diffusion
//! solve per species. Steps that would go negative are retried with half the
//! time step.

use serde::{Deserialize, Serialize};

use crate::entropy;
use crate::error::{Error, Result};
use crate::grid::{h1_seminorm_sq, l2_norm_sq, laplacian_neumann, Field, Mesh};
use crate::model::{
    classify_equilibria, compute_masses, reaction_jacobian, reaction_rhs, EquilibriumSet, Masses,
    Params, Regime, System, Triple,
};
use crate::tridiag::solve_neumann_implicit;

#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub t: f64,
    pub a: Field,
    pub b: Field,
    pub c: Field,
}

impl State {
    pub fn new(a: Field, b: Field, c: Field) -> Self {
        State { t: 0.0, a, b, c }
    }

    pub fn constant(mesh: &Mesh, z: Triple) -> Self {
        State::new(
            Field::constant(mesh, z[0]),
            Field::constant(mesh, z[1]),
            Field::constant(mesh, z[2]),
        )
    }

    pub fn fields(&self) -> [&Field; 3] {
        [&self.a, &self.b, &self.c]
    }

    pub fn fields_mut(&mut self) -> [&mut Field; 3] {
        [&mut self.a, &mut self.b, &mut self.c]
    }

    pub fn n_cells(&self) -> usize {
        self.a.len()
    }

    pub fn min(&self) -> f64 {
        self.a.min().min(self.b.min()).min(self.c.min())
    }

    pub fn max(&self) -> f64 {
        self.a.max().max(self.b.max()).max(self.c.max())
    }

    /// Checks sizes against the mesh and that all values are finite.
    pub fn check(&self, mesh: &Mesh) -> Result<()> {
        for f in self.fields() {
            if f.len() != mesh.n_cells() {
                return Err(Error::SizeMismatch {
                    expected: mesh.n_cells(),
                    got: f.len(),
                });
            }
            if !f.is_finite() {
                return Err(Error::InvalidArgument("state has non-finite values".into()));
            }
        }
        Ok(())
    }

    /// Pointwise difference `self - z`, keeping `self.t`.
    pub fn minus_constant(&self, z: Triple) -> State {
        State {
            t: self.t,
            a: self.a.map(|v| v - z[0]),
            b: self.b.map(|v| v - z[1]),
            c: self.c.map(|v| v - z[2]),
        }
    }

    pub fn plus_constant(&self, z: Triple) -> State {
        self.minus_constant([-z[0], -z[1], -z[2]])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    BackwardEulerDiffusion,
    CrankNicolsonDiffusion,
}

/// Reaction term used by the explicit substep.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum ReactionMode {
    #[default]
    Full,
    /// Jacobian at `eq` applied to `z - eq`; the quadratic part is dropped.
    Linearized { eq: Triple },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub system: System,
    pub params: Params,
    pub scheme: Scheme,
    pub dt_init: f64,
    pub dt_min: f64,
    pub t_end: f64,
    pub record_every: usize,
    pub positivity_tol: f64,
    pub reaction: ReactionMode,
}

impl SolverConfig {
    /// Defaults: backward Euler diffusion, `dt_init = 0.01 / max(1, masses)`,
    /// `dt_min = dt_init / 2^20`, a record every step.
    pub fn new(system: System, params: Params, masses: &Masses, t_end: f64) -> Self {
        let dt_init = default_dt(masses);
        SolverConfig {
            system,
            params,
            scheme: Scheme::default(),
            dt_init,
            dt_min: dt_init / (1u64 << 20) as f64,
            t_end,
            record_every: 1,
            positivity_tol: 1e-13,
            reaction: ReactionMode::Full,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt_init = dt;
        self.dt_min = self.dt_min.min(dt);
        self
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.dt_init.is_finite() && self.dt_init > 0.0) {
            return bad("dt_init must be positive");
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init) {
            return bad("dt_min must lie in (0, dt_init]");
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return bad("t_end must be positive");
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1");
        }
        if !(self.positivity_tol >= 0.0) {
            return bad("positivity_tol must be non-negative");
        }
        Ok(())
    }
}

pub fn default_dt(masses: &Masses) -> f64 {
    0.01 / masses.max().max(1.0)
}

fn reaction_at(mode: &ReactionMode, system: System, z: Triple) -> Triple {
    match mode {
        ReactionMode::Full => reaction_rhs(system, z[0], z[1], z[2]),
        ReactionMode::Linearized { eq } => {
            let j = reaction_jacobian(system, *eq);
            let u = [z[0] - eq[0], z[1] - eq[1], z[2] - eq[2]];
            let mut out = [0.0; 3];
            for i in 0..3 {
                out[i] = j[i][0] * u[0] + j[i][1] * u[1] + j[i][2] * u[2];
            }
            out
        }
    }
}

/// Explicit Euler reaction substep. Does not check positivity.
pub fn reaction_substep(state: &State, dt: f64, system: System, mode: &ReactionMode) -> State {
    let n = state.n_cells();
    let mut out = state.clone();
    for i in 0..n {
        let f = reaction_at(mode, system, [state.a[i], state.b[i], state.c[i]]);
        out.a[i] += dt * f[0];
        out.b[i] += dt * f[1];
        out.c[i] += dt * f[2];
    }
    out
}

/// Implicit diffusion substep, one tridiagonal solve per species.
pub fn diffusion_substep(
    state: &State,
    dt: f64,
    params: &Params,
    scheme: Scheme,
    mesh: &Mesh,
) -> Result<State> {
    let mut out = state.clone();
    let h2 = mesh.h() * mesh.h();
    for (k, f) in out.fields_mut().into_iter().enumerate() {
        let alpha = dt * params.diffusion[k] / h2;
        let old = f.to_vec();
        // the update is rebuilt from face fluxes of the implicit solution so
        // that rounding in the solve cannot bias the cell sum
        let (weight, explicit_part) = match scheme {
            Scheme::BackwardEulerDiffusion => {
                solve_neumann_implicit(alpha, f)?;
                (alpha, false)
            }
            Scheme::CrankNicolsonDiffusion => {
                let lap = laplacian_neumann(f, mesh)?;
                let half = 0.5 * dt * params.diffusion[k];
                for (v, l) in f.iter_mut().zip(lap.iter()) {
                    *v += half * l;
                }
                solve_neumann_implicit(0.5 * alpha, f)?;
                (0.5 * alpha, true)
            }
        };
        let n = old.len();
        let flux: Vec<f64> = (0..n - 1)
            .map(|i| {
                let implicit = f[i + 1] - f[i];
                if explicit_part {
                    implicit + (old[i + 1] - old[i])
                } else {
                    implicit
                }
            })
            .collect();
        for i in 0..n {
            let right = if i + 1 < n { flux[i] } else { 0.0 };
            let left = if i > 0 { flux[i - 1] } else { 0.0 };
            f[i] = old[i] + weight * (right - left);
        }
    }
    Ok(out)
}

/// `Some(min)` if some value is below `-tol`; otherwise clamps the small
/// negatives to zero and returns `None`.
fn guard(state: &mut State, tol: f64) -> Option<f64> {
    let min = state.min();
    if min < -tol || !min.is_finite() {
        return Some(min);
    }
    if min < 0.0 {
        for f in state.fields_mut() {
            for v in f.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }
    None
}

/// One split step, halving `dt` on negativity until `dt_min`.
pub fn step(state: &State, dt: f64, config: &SolverConfig, mesh: &Mesh) -> Result<State> {
    let mut dt = dt;
    loop {
        let mut next = reaction_substep(state, dt, config.system, &config.reaction);
        let mut bad = guard(&mut next, config.positivity_tol);
        if bad.is_none() {
            next = diffusion_substep(&next, dt, &config.params, config.scheme, mesh)?;
            bad = guard(&mut next, config.positivity_tol);
        }
        match bad {
            None => {
                next.t = state.t + dt;
                return Ok(next);
            }
            Some(min) => {
                if dt * 0.5 < config.dt_min {
                    return Err(Error::PositivityFailure {
                        t: state.t,
                        min,
                        dt,
                    });
                }
                dt *= 0.5;
            }
        }
    }
}

/// Exact time derivative `d_z Δz + f_z` of the semi-discrete system.
pub fn rhs_full(system: System, state: &State, params: &Params, mesh: &Mesh) -> Result<[Field; 3]> {
    state.check(mesh)?;
    let mut out = [
        laplacian_neumann(&state.a, mesh)?,
        laplacian_neumann(&state.b, mesh)?,
        laplacian_neumann(&state.c, mesh)?,
    ];
    for (k, f) in out.iter_mut().enumerate() {
        for v in f.iter_mut() {
            *v *= params.diffusion[k];
        }
    }
    for i in 0..state.n_cells() {
        let r = reaction_rhs(system, state.a[i], state.b[i], state.c[i]);
        for k in 0..3 {
            out[k][i] += r[k];
        }
    }
    Ok(out)
}

/// Everything the per-record diagnostics depend on besides the state.
#[derive(Clone, Debug)]
pub struct DiagnosticContext {
    pub system: System,
    pub params: Params,
    pub mesh: Mesh,
    pub masses: Masses,
    pub equilibria: EquilibriumSet,
}

impl DiagnosticContext {
    pub fn new(system: System, params: Params, mesh: Mesh, masses: Masses) -> Result<Self> {
        let equilibria = classify_equilibria(system, masses)?;
        Ok(DiagnosticContext {
            system,
            params,
            mesh,
            masses,
            equilibria,
        })
    }

    /// Reference for the entropy. P1 uses `a* = c* = m1/2`, which makes the
    /// reaction part of the entropy production sign-definite in every regime.
    pub fn entropy_reference(&self) -> Triple {
        match self.masses {
            Masses::P1 { m1, m2 } => [m1 / 2.0, m2 - m1 / 2.0, m1 / 2.0],
            Masses::P2 { m } => [m / 3.0; 3],
        }
    }

    /// Threshold defining the reaction set `{b >= threshold}`, if one applies.
    pub fn omega_threshold(&self) -> Option<f64> {
        match (self.masses, self.equilibria.regime) {
            (Masses::P1 { m1, m2 }, Regime::PositiveOnly) => Some((m2 - m1) / 2.0),
            (Masses::P1 { m1, m2 }, Regime::Coexistence) => Some((m2 - m1 / 2.0) / 2.0),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub masses: Masses,
    pub min_conc: f64,
    pub max_conc: f64,
    /// L² distance to the positive equilibrium, NaN if there is none.
    pub dist_pos_eq: f64,
    /// Smallest L² distance to a boundary equilibrium, NaN if there is none.
    pub dist_bnd_eq: f64,
    pub entropy: f64,
    pub dissipation: f64,
    /// `|{b >= threshold}|`, NaN where no threshold applies.
    pub omega_measure: f64,
    /// `‖∇a‖₂²`.
    pub grad_a_sq: f64,
}

pub fn l2_distance(state: &State, z: Triple, mesh: &Mesh) -> Result<f64> {
    let d = state.minus_constant(z);
    Ok((l2_norm_sq(&d.a, mesh)? + l2_norm_sq(&d.b, mesh)? + l2_norm_sq(&d.c, mesh)?).sqrt())
}

impl Diagnostics {
    pub fn compute(ctx: &DiagnosticContext, state: &State) -> Result<Self> {
        let mesh = &ctx.mesh;
        state.check(mesh)?;
        let masses = compute_masses(ctx.system, state, mesh)?;
        let dist_pos_eq = match ctx.equilibria.positive {
            Some(z) => l2_distance(state, z, mesh)?,
            None => f64::NAN,
        };
        let mut dist_bnd_eq = f64::NAN;
        for &z in &ctx.equilibria.boundary {
            let d = l2_distance(state, z, mesh)?;
            if !(d >= dist_bnd_eq) {
                dist_bnd_eq = d;
            }
        }
        let reference = ctx.entropy_reference();
        let (entropy, dissipation) = match ctx.system {
            System::P1 => (
                entropy::relative_entropy_ac(&state.a, &state.c, reference[0], reference[2], mesh)?,
                entropy::dissipation_p1(state, &ctx.params, mesh)?.total,
            ),
            System::P2 => (
                entropy::boltzmann_entropy_p2(state, reference, mesh)?,
                entropy::dissipation_p2(state, &ctx.params, mesh)?.total,
            ),
        };
        let omega_measure = match ctx.omega_threshold() {
            Some(th) => entropy::superlevel_measure(&state.b, th, mesh)?,
            None => f64::NAN,
        };
        Ok(Diagnostics {
            masses,
            min_conc: state.min(),
            max_conc: state.max(),
            dist_pos_eq,
            dist_bnd_eq,
            entropy,
            dissipation,
            omega_measure,
            grad_a_sq: h1_seminorm_sq(&state.a, mesh)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub step: usize,
    pub state: State,
    pub diag: Diagnostics,
    /// Trapezoidal `∫₀ᵗ ‖∇a‖₂² ds` over every accepted step.
    pub grad_a_time_integral: f64,
}

impl Record {
    pub fn t(&self) -> f64 {
        self.state.t
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub context: DiagnosticContext,
    pub samples: Vec<Record>,
    /// Largest concentration seen over all accepted steps.
    pub k_emp: f64,
    pub steps_accepted: usize,
    /// Steps that needed at least one halving.
    pub steps_reduced: usize,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(Record::t).collect()
    }

    pub fn series(&self, f: impl Fn(&Diagnostics) -> f64) -> Vec<(f64, f64)> {
        self.samples.iter().map(|r| (r.t(), f(&r.diag))).collect()
    }

    pub fn last(&self) -> &Record {
        self.samples
            .last()
            .expect("trajectory always holds the initial record")
    }

    /// Largest relative drift of any conserved mass against the first record.
    pub fn max_mass_drift(&self) -> f64 {
        let m0 = self.samples[0].diag.masses.values();
        self.samples
            .iter()
            .flat_map(|r| {
                r.diag
                    .masses
                    .values()
                    .into_iter()
                    .zip(m0.clone())
                    .map(|(m, m0)| {
                        if m0 != 0.0 {
                            (m - m0).abs() / m0.abs()
                        } else {
                            m.abs()
                        }
                    })
            })
            .fold(0.0, f64::max)
    }
}

/// Integrates to `config.t_end`, recording the initial state, every
/// `record_every` accepted steps, and the final state.
pub fn simulate(initial: &State, config: &SolverConfig, mesh: &Mesh) -> Result<Trajectory> {
    config.validate()?;
    initial.check(mesh)?;
    if initial.min() < 0.0 {
        return Err(Error::InvalidArgument(
            "initial data must be non-negative".into(),
        ));
    }
    let masses = compute_masses(config.system, initial, mesh)?;
    let ctx = DiagnosticContext::new(config.system, config.params, *mesh, masses)?;
    simulate_with_context(initial, config, ctx)
}

pub fn simulate_with_context(
    initial: &State,
    config: &SolverConfig,
    ctx: DiagnosticContext,
) -> Result<Trajectory> {
    let mesh = ctx.mesh;
    let mut state = initial.clone();
    let mut grad_prev = h1_seminorm_sq(&state.a, &mesh)?;
    let mut grad_int = 0.0;
    let mut samples = vec![Record {
        step: 0,
        diag: Diagnostics::compute(&ctx, &state)?,
        state: state.clone(),
        grad_a_time_integral: 0.0,
    }];
    let mut k_emp = state.max();
    let mut steps = 0usize;
    let mut reduced = 0usize;
    let t_end = config.t_end;
    let eps_t = 1e-12 * t_end.max(1.0);
    while state.t < t_end - eps_t {
        let remaining = t_end - state.t;
        let dt = config.dt_init.min(remaining);
        let next = step(&state, dt, config, &mesh).map_err(|e| Error::SolverAt {
            t: state.t,
            source: Box::new(e),
        })?;
        if next.t - state.t < dt {
            reduced += 1;
        }
        let mut next = next;
        if dt == remaining && next.t - state.t == dt {
            next.t = t_end;
        }
        let grad = h1_seminorm_sq(&next.a, &mesh)?;
        grad_int += 0.5 * (grad + grad_prev) * (next.t - state.t);
        grad_prev = grad;
        state = next;
        steps += 1;
        k_emp = k_emp.max(state.max());
        let finished = state.t >= t_end - eps_t;
        if steps % config.record_every == 0 || finished {
            samples.push(Record {
                step: steps,
                diag: Diagnostics::compute(&ctx, &state)?,
                state: state.clone(),
                grad_a_time_integral: grad_int,
            });
        }
    }
    Ok(Trajectory {
        context: ctx,
        samples,
        k_emp,
        steps_accepted: steps,
        steps_reduced: reduced,
    })
}
