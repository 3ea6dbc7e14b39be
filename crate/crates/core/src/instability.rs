//! Growth of small perturbations of an unstable boundary equilibrium.
//!
//! A perturbation `u = z - z̄` is paired with its time derivative into
//! `y = (u, u_t)`. The run tracks `‖y‖`, compares the species averages with
//! the closed-form solution of the averaged linear system, and records the
//! time at which `‖y‖` first reaches a fixed threshold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{fit_log_linear, DecayFit};
use crate::error::{Error, Result};
use crate::grid::{h2_norm_sq, l2_norm_sq, laplacian_neumann, Field, Mesh};
use crate::model::{classify_equilibria, reaction_jacobian, reaction_rhs, Masses, System, Triple};
use crate::solver::{l2_distance, rhs_full, step, SolverConfig, State};

/// Shape of the perturbation before normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Spatially constant, along the unstable eigenvector of the averaged
    /// linear system. It adds catalyst (P1) or the depleted pair (P2) and
    /// draws the same amount from the other species, so masses are unchanged.
    HomogeneousB,
    /// `weights[s] cos(kπx)` in species `s`.
    Mode { k: usize, weights: Triple },
    /// Explicit perturbation fields.
    Fields {
        a: Vec<f64>,
        b: Vec<f64>,
        c: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub delta: f64,
    pub shape: Shape,
}

/// Dominant species of a P2 boundary equilibrium.
fn p2_dominant(eq: &Triple) -> Result<(usize, f64)> {
    let nz: Vec<usize> = (0..3).filter(|&i| eq[i] != 0.0).collect();
    match nz.as_slice() {
        [i] => Ok((*i, eq[*i])),
        _ => Err(Error::RegimeMismatch(format!(
            "{eq:?} is not a boundary equilibrium of the symmetric network"
        ))),
    }
}

/// Growth rate of the averaged linear system at `eq`.
pub fn linear_rate(system: System, eq: &Triple) -> Result<f64> {
    Ok(match system {
        System::P1 => eq[2] - eq[0],
        System::P2 => p2_dominant(eq)?.1,
    })
}

fn unstable_direction(system: System, eq: &Triple) -> Result<Triple> {
    Ok(match system {
        System::P1 => [1.0, 1.0, -1.0],
        System::P2 => {
            let (i, _) = p2_dominant(eq)?;
            let mut v = [1.0; 3];
            v[i] = -2.0;
            v
        }
    })
}

/// `diag(d) Δ_h u + J(eq) u`.
pub fn linear_operator(
    system: System,
    params: &crate::model::Params,
    eq: &Triple,
    u: &State,
    mesh: &Mesh,
) -> Result<State> {
    let j = reaction_jacobian(system, *eq);
    let mut out = [
        laplacian_neumann(&u.a, mesh)?,
        laplacian_neumann(&u.b, mesh)?,
        laplacian_neumann(&u.c, mesh)?,
    ];
    for (s, f) in out.iter_mut().enumerate() {
        for v in f.iter_mut() {
            *v *= params.diffusion[s];
        }
    }
    for i in 0..u.n_cells() {
        let z = [u.a[i], u.b[i], u.c[i]];
        for s in 0..3 {
            out[s][i] += j[s][0] * z[0] + j[s][1] * z[1] + j[s][2] * z[2];
        }
    }
    let [a, b, c] = out;
    Ok(State { t: u.t, a, b, c })
}

fn aggregate_l2(fields: [&Field; 3], mesh: &Mesh) -> Result<f64> {
    Ok(
        (l2_norm_sq(fields[0], mesh)?
            + l2_norm_sq(fields[1], mesh)?
            + l2_norm_sq(fields[2], mesh)?)
        .sqrt(),
    )
}

fn aggregate_h2(fields: [&Field; 3], mesh: &Mesh) -> Result<f64> {
    Ok(
        (h2_norm_sq(fields[0], mesh)?
            + h2_norm_sq(fields[1], mesh)?
            + h2_norm_sq(fields[2], mesh)?)
        .sqrt(),
    )
}

/// The unit perturbation `u0` with `‖u0‖₂ + ‖L u0‖₂ = 1`.
pub fn normalized_perturbation(
    system: System,
    params: &crate::model::Params,
    eq: &Triple,
    shape: &Shape,
    mesh: &Mesh,
) -> Result<State> {
    let raw = match shape {
        Shape::HomogeneousB => State::constant(mesh, unstable_direction(system, eq)?),
        Shape::Mode { k, weights } => {
            let profile = Field::from_fn(mesh, |x| (*k as f64 * std::f64::consts::PI * x).cos());
            State::new(
                profile.map(|v| v * weights[0]),
                profile.map(|v| v * weights[1]),
                profile.map(|v| v * weights[2]),
            )
        }
        Shape::Fields { a, b, c } => {
            State::new(a.clone().into(), b.clone().into(), c.clone().into())
        }
    };
    raw.check(mesh)?;
    let lu = linear_operator(system, params, eq, &raw, mesh)?;
    let norm = aggregate_l2(raw.fields(), mesh)? + aggregate_l2(lu.fields(), mesh)?;
    if !(norm > 0.0) {
        return Err(Error::InvalidArgument("perturbation shape is zero".into()));
    }
    Ok(State::new(
        raw.a.map(|v| v / norm),
        raw.b.map(|v| v / norm),
        raw.c.map(|v| v / norm),
    ))
}

/// `(‖u‖₂ + ‖u_t‖₂, ‖u‖_{H²} + ‖u_t‖₂)` with `u_t` the exact right-hand side
/// at `eq + u`.
pub fn y_norm(
    system: System,
    params: &crate::model::Params,
    eq: &Triple,
    u: &State,
    mesh: &Mesh,
) -> Result<(f64, f64)> {
    let z = u.plus_constant(*eq);
    let ut = rhs_full(system, &z, params, mesh)?;
    let ut_norm = aggregate_l2([&ut[0], &ut[1], &ut[2]], mesh)?;
    Ok((
        aggregate_l2(u.fields(), mesh)? + ut_norm,
        aggregate_h2(u.fields(), mesh)? + ut_norm,
    ))
}

/// Averages of the linear flow at a boundary equilibrium with growth rate `r`.
pub fn linear_avg_solution_p1(averages: Triple, r: f64, t: f64) -> Triple {
    let [a1, a2, a3] = averages;
    let g = a2 * (r * t).exp();
    [g - a2 + a1, g, -g + a2 + a3]
}

/// Averages of the linear flow at `(ā, 0, 0)` of the symmetric network.
pub fn linear_avg_solution_p2(c1: f64, c2: f64, c3: f64, a_bar: f64, t: f64) -> Triple {
    let up = c1 * (a_bar * t).exp();
    let down = c2 * (-3.0 * a_bar * t).exp();
    [-2.0 * up + c3, up + down, up - down]
}

/// Averages at time `t` of the linear flow started from `averages` at `eq`.
pub fn linear_avg_solution(
    system: System,
    eq: &Triple,
    averages: Triple,
    t: f64,
) -> Result<Triple> {
    match system {
        System::P1 => Ok(linear_avg_solution_p1(averages, eq[2] - eq[0], t)),
        System::P2 => {
            let (i, a_bar) = p2_dominant(eq)?;
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            let c1 = 0.5 * (averages[j] + averages[k]);
            let c2 = 0.5 * (averages[j] - averages[k]);
            let c3 = averages[0] + averages[1] + averages[2];
            let r = linear_avg_solution_p2(c1, c2, c3, a_bar, t);
            let mut out = [0.0; 3];
            out[i] = r[0];
            out[j] = r[1];
            out[k] = r[2];
            Ok(out)
        }
    }
}

/// `ln(theta0/delta) / rate`.
pub fn escape_time_theoretical(theta0: f64, delta: f64, rate: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::RateNonPositive(rate));
    }
    if !(delta > 0.0 && delta < theta0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < delta < theta0, got delta = {delta}, theta0 = {theta0}"
        )));
    }
    Ok((theta0 / delta).ln() / rate)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstabilitySample {
    pub t: f64,
    pub y_low: f64,
    pub y_high: f64,
    /// `Σ_s |∫u_s - linear average_s|`.
    pub avg_deviation: f64,
    /// Same quantity for the explicit-Euler recursion of the averaged linear
    /// system; what the scheme would show with the nonlinearity removed.
    pub truncation_floor: f64,
    pub min_conc: f64,
    /// `|||y|||² / (∫₀ᵗ ‖y‖² ds + ‖y(0)‖²)`.
    pub energy_ratio: f64,
    /// `(‖N(u)‖₂ + ‖∂t N(u)‖₂) / |||y|||²`.
    pub nonlinear_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstabilityReport {
    pub system: System,
    pub boundary_eq: Triple,
    pub delta: f64,
    pub tau: f64,
    pub linear_rate: f64,
    pub samples: Vec<InstabilitySample>,
    /// Fit of `‖y‖` over the window `‖y‖ <= 10 δ`; `alpha` is minus the
    /// growth rate.
    pub fitted_rate: DecayFit,
    pub growth_rate: f64,
    /// Fitted prefactor divided by `δ`.
    pub c_l_emp: f64,
    pub escape_time_empirical: Option<f64>,
    pub escape_time_theoretical: f64,
    /// Distance of the state at escape to the nearest boundary equilibrium.
    pub escape_distance: Option<f64>,
    /// Extremes of `‖y‖ / (C δ e^{rt})` over pre-escape samples.
    pub envelope_ratio: (f64, f64),
    /// Largest `avg_deviation / (δ² e^{2rt})`.
    pub max_scaled_deviation: f64,
    pub max_energy_ratio: f64,
    pub max_nonlinear_ratio: f64,
    pub deviation_scaling_exponent: Option<f64>,
    pub t_final: f64,
}

impl InstabilityReport {
    /// Averaged deviation and floor at the last sample.
    pub fn final_deviation(&self) -> (f64, f64) {
        let s = self.samples.last().expect("report has samples");
        (s.avg_deviation, s.truncation_floor)
    }
}

/// Threshold default: `0.05 · min(masses)`.
pub fn default_tau(masses: &Masses) -> f64 {
    0.05 * masses.min()
}

fn species_averages(state: &State, mesh: &Mesh) -> Result<Triple> {
    crate::model::species_integrals(state, mesh)
}

fn nonlinear_norm(
    system: System,
    eq: &Triple,
    state: &State,
    ut: &[Field; 3],
    mesh: &Mesh,
) -> Result<f64> {
    let j0 = reaction_jacobian(system, *eq);
    let n = state.n_cells();
    let mut nl = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut dnl = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        let z = [state.a[i], state.b[i], state.c[i]];
        let u = [z[0] - eq[0], z[1] - eq[1], z[2] - eq[2]];
        let f = reaction_rhs(system, z[0], z[1], z[2]);
        let j = reaction_jacobian(system, z);
        let v = [ut[0][i], ut[1][i], ut[2][i]];
        for s in 0..3 {
            let lin: f64 = (0..3).map(|r| j0[s][r] * u[r]).sum();
            nl[s][i] = f[s] - lin;
            dnl[s][i] = (0..3).map(|r| (j[s][r] - j0[s][r]) * v[r]).sum();
        }
    }
    let norm = |f: &[Vec<f64>; 3]| -> Result<f64> {
        Ok((l2_norm_sq(&f[0], mesh)? + l2_norm_sq(&f[1], mesh)? + l2_norm_sq(&f[2], mesh)?).sqrt())
    };
    Ok(norm(&nl)? + norm(&dnl)?)
}

/// Evolves `eq + δ u0` until `‖y‖ >= tau` or `config.t_end`.
///
/// `config.system` and `config.params` select the dynamics; `config.t_end`
/// is the time limit.
pub fn run_instability(
    masses: Masses,
    boundary_eq: Triple,
    spec: &PerturbationSpec,
    tau: f64,
    config: &SolverConfig,
    mesh: &Mesh,
) -> Result<InstabilityReport> {
    config.validate()?;
    let system = config.system;
    let params = config.params;
    let set = classify_equilibria(system, masses)?;
    if !set.has_boundary(&boundary_eq) {
        return Err(Error::RegimeMismatch(format!(
            "{boundary_eq:?} is not an admissible boundary equilibrium for {masses:?}"
        )));
    }
    let r = linear_rate(system, &boundary_eq)?;
    if !(r > 0.0) {
        return Err(Error::RateNonPositive(r));
    }
    if !(spec.delta > 0.0) || !(tau > 0.0) {
        return Err(Error::InvalidArgument(
            "delta and tau must be positive".into(),
        ));
    }
    let u0 = normalized_perturbation(system, &params, &boundary_eq, &spec.shape, mesh)?;
    let mut state = State::new(
        Field::constant(mesh, boundary_eq[0]).axpy(spec.delta, &u0.a),
        Field::constant(mesh, boundary_eq[1]).axpy(spec.delta, &u0.b),
        Field::constant(mesh, boundary_eq[2]).axpy(spec.delta, &u0.c),
    );
    if state.min() < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "perturbed initial data is negative (min {:e}); reduce delta",
            state.min()
        )));
    }

    let a0 = species_averages(&state.minus_constant(boundary_eq), mesh)?;
    let jac = reaction_jacobian(system, boundary_eq);
    let mut euler_avg = a0;
    let mut y_sq_integral = 0.0;
    let mut y0_sq = 0.0;
    let mut prev_y_sq = 0.0;
    let mut last_taken = 0.0;
    let mut samples = Vec::new();
    let mut escape_time = None;
    let mut escape_distance = None;
    let mut steps = 0usize;

    let eps_t = 1e-12 * config.t_end.max(1.0);
    loop {
        let u = state.minus_constant(boundary_eq);
        let ut = rhs_full(system, &state, &params, mesh)?;
        let ut_norm = aggregate_l2([&ut[0], &ut[1], &ut[2]], mesh)?;
        let y_low = aggregate_l2(u.fields(), mesh)? + ut_norm;
        let y_sq = y_low * y_low;
        if steps == 0 {
            y0_sq = y_sq;
        } else {
            y_sq_integral += 0.5 * (prev_y_sq + y_sq) * last_taken;
        }
        prev_y_sq = y_sq;
        let escaped = y_low >= tau;
        let finished = state.t >= config.t_end - eps_t;
        if steps % config.record_every == 0 || escaped || finished {
            let y_high = aggregate_h2(u.fields(), mesh)? + ut_norm;
            let avg = species_averages(&u, mesh)?;
            let lin = linear_avg_solution(system, &boundary_eq, a0, state.t)?;
            let avg_deviation: f64 = (0..3).map(|s| (avg[s] - lin[s]).abs()).sum();
            let truncation_floor: f64 = (0..3).map(|s| (euler_avg[s] - lin[s]).abs()).sum();
            let nl = nonlinear_norm(system, &boundary_eq, &state, &ut, mesh)?;
            samples.push(InstabilitySample {
                t: state.t,
                y_low,
                y_high,
                avg_deviation,
                truncation_floor,
                min_conc: state.min(),
                energy_ratio: y_high * y_high / (y_sq_integral + y0_sq),
                nonlinear_ratio: if y_high > 0.0 {
                    nl / (y_high * y_high)
                } else {
                    0.0
                },
            });
        }
        if escaped {
            escape_time = Some(state.t);
            let mut nearest = f64::INFINITY;
            for z in &set.boundary {
                nearest = nearest.min(l2_distance(&state, *z, mesh)?);
            }
            escape_distance = Some(nearest);
            break;
        }
        if finished {
            break;
        }
        let dt = config.dt_init.min(config.t_end - state.t);
        let mut next = step(&state, dt, config, mesh).map_err(|e| Error::SolverAt {
            t: state.t,
            source: Box::new(e),
        })?;
        let taken = next.t - state.t;
        if taken == dt && dt == config.t_end - state.t {
            next.t = config.t_end;
        }
        // averaged linear system under the same explicit Euler step
        let mut e = [0.0; 3];
        for s in 0..3 {
            e[s] = euler_avg[s] + taken * (0..3).map(|k| jac[s][k] * euler_avg[k]).sum::<f64>();
        }
        euler_avg = e;
        state = next;
        steps += 1;
        last_taken = taken;
    }

    let window: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.y_low <= 10.0 * spec.delta)
        .map(|s| (s.t, s.y_low))
        .collect();
    if window.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "only {} samples with ‖y‖ <= 10 delta; record more often",
            window.len()
        )));
    }
    let fit = fit_log_linear(&window)?;
    let growth = -fit.alpha;
    let c_l_emp = fit.c / spec.delta;
    let theory = if tau > fit.c {
        (tau / fit.c).ln() / r
    } else {
        0.0
    };
    let mut env = (f64::INFINITY, 0.0f64);
    let mut max_scaled = 0.0f64;
    let mut max_energy = 0.0f64;
    let mut max_nl = 0.0f64;
    for s in &samples {
        if s.y_low < tau {
            let ratio = s.y_low / (fit.c * (r * s.t).exp());
            env = (env.0.min(ratio), env.1.max(ratio));
        }
        max_scaled =
            max_scaled.max(s.avg_deviation / (spec.delta * spec.delta * (2.0 * r * s.t).exp()));
        max_energy = max_energy.max(s.energy_ratio);
        max_nl = max_nl.max(s.nonlinear_ratio);
    }
    Ok(InstabilityReport {
        system,
        boundary_eq,
        delta: spec.delta,
        tau,
        linear_rate: r,
        t_final: state.t,
        samples,
        fitted_rate: fit,
        growth_rate: growth,
        c_l_emp,
        escape_time_empirical: escape_time,
        escape_time_theoretical: theory,
        escape_distance,
        envelope_ratio: env,
        max_scaled_deviation: max_scaled,
        max_energy_ratio: max_energy,
        max_nonlinear_ratio: max_nl,
        deviation_scaling_exponent: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationScaling {
    pub exponent: f64,
    pub deltas: Vec<f64>,
    pub deviations: Vec<f64>,
    pub floors: Vec<f64>,
}

/// Slope of `ln(deviation at t_probe)` against `ln δ`.
///
/// Each run must still be below `tau` at `t_probe`, and its deviation must
/// exceed twice what the scheme's own truncation of the linear averaged
/// system produces; otherwise the slope would measure the time stepping
/// rather than the nonlinearity.
pub fn deviation_scaling(
    masses: Masses,
    boundary_eq: Triple,
    shape: &Shape,
    deltas: &[f64],
    t_probe: f64,
    tau: f64,
    config: &SolverConfig,
    mesh: &Mesh,
) -> Result<DeviationScaling> {
    if deltas.len() < 2 {
        return Err(Error::InvalidArgument("need at least two deltas".into()));
    }
    let mut cfg = config.clone();
    cfg.t_end = t_probe;
    let results: Vec<Result<(f64, f64)>> = deltas
        .par_iter()
        .map(|&delta| {
            let spec = PerturbationSpec {
                delta,
                shape: shape.clone(),
            };
            let report = run_instability(masses, boundary_eq, &spec, tau, &cfg, mesh)?;
            if let Some(escape) = report.escape_time_empirical {
                return Err(Error::ProbeAfterEscape {
                    t_probe,
                    escape,
                    delta,
                });
            }
            let (dev, floor) = report.final_deviation();
            if !(dev > 2.0 * floor) {
                return Err(Error::NoNonlinearDeviation {
                    delta,
                    deviation: dev,
                    floor,
                });
            }
            Ok((dev, floor))
        })
        .collect();
    let mut deviations = Vec::with_capacity(deltas.len());
    let mut floors = Vec::with_capacity(deltas.len());
    for r in results {
        let (d, f) = r?;
        deviations.push(d);
        floors.push(f);
    }
    let points: Vec<(f64, f64)> = deltas
        .iter()
        .map(|d| d.ln())
        .zip(deviations.iter().copied())
        .collect();
    // fit_log_linear regresses ln(value) on its first coordinate
    let fit = fit_log_linear(&points)?;
    Ok(DeviationScaling {
        exponent: -fit.alpha,
        deltas: deltas.to_vec(),
        deviations,
        floors,
    })
}
