//! Relative entropies, their dissipation, and the rate constants built on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{integrate, Mesh, PoincareConstants};
use crate::model::{classify_equilibria, Masses, Params, Regime, System, Triple};
use crate::solver::State;

/// Floor used inside logarithms and Fisher denominators.
pub const EPS_LOG: f64 = 1e-300;

/// `x ln x - x + 1`, accurate near `x = 1`.
fn phi(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let y = x - 1.0;
    if y.abs() < 0.1 {
        // Σ_{k>=2} (-1)^k y^k / (k (k-1))
        let mut sum = 0.0;
        let mut pow = y * y;
        for k in 2..24 {
            let term = pow / (k * (k - 1)) as f64;
            sum += if k % 2 == 0 { term } else { -term };
            pow *= y;
        }
        sum
    } else {
        x * x.ln() - x + 1.0
    }
}

/// Pointwise `z ln(z/z*) - z + z*` with `0 ln 0 = 0`.
pub fn entropy_density(z: f64, z_star: f64) -> f64 {
    z_star * phi(z / z_star)
}

fn check_reference(values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "entropy reference values must be positive, got {values:?}"
        )));
    }
    Ok(())
}

fn species_entropy(f: &[f64], z_star: f64, mesh: &Mesh) -> Result<f64> {
    let density: Vec<f64> = f
        .iter()
        .map(|&z| entropy_density(z.max(0.0), z_star))
        .collect();
    integrate(&density, mesh)
}

/// `E(a, c | a*, c*)`.
pub fn relative_entropy_ac(
    a: &[f64],
    c: &[f64],
    a_star: f64,
    c_star: f64,
    mesh: &Mesh,
) -> Result<f64> {
    check_reference(&[a_star, c_star])?;
    Ok(species_entropy(a, a_star, mesh)? + species_entropy(c, c_star, mesh)?)
}

/// Relative Boltzmann entropy of all three species.
pub fn boltzmann_entropy_p2(state: &State, eq: Triple, mesh: &Mesh) -> Result<f64> {
    check_reference(&eq)?;
    let mut total = 0.0;
    for (f, z) in state.fields().into_iter().zip(eq) {
        total += species_entropy(f, z, mesh)?;
    }
    Ok(total)
}

/// `∫|∇f|²/f` on interior faces, with the face value the arithmetic mean.
/// Faces touching a cell at or below the floor contribute nothing.
pub fn fisher_information(f: &[f64], mesh: &Mesh) -> Result<f64> {
    if f.len() != mesh.n_cells() {
        return Err(Error::SizeMismatch {
            expected: mesh.n_cells(),
            got: f.len(),
        });
    }
    let h = mesh.h();
    let mut sum = 0.0;
    for w in f.windows(2) {
        if w[0] > EPS_LOG && w[1] > EPS_LOG {
            let g = (w[1] - w[0]) / h;
            let face = (0.5 * (w[0] + w[1])).max(EPS_LOG);
            sum += g * g / face;
        }
    }
    Ok(sum * h)
}

fn log_ratio(x: f64, y: f64) -> f64 {
    (x.max(EPS_LOG) / y.max(EPS_LOG)).ln()
}

/// Terms of an entropy dissipation. `fisher[k]` already carries `d_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dissipation {
    pub fisher: Triple,
    pub reaction: Vec<f64>,
    pub total: f64,
}

impl Dissipation {
    fn new(fisher: Triple, reaction: Vec<f64>) -> Self {
        let total = fisher.iter().sum::<f64>() + reaction.iter().sum::<f64>();
        Dissipation {
            fisher,
            reaction,
            total,
        }
    }
}

/// `d1 ∫|∇a|²/a + d3 ∫|∇c|²/c + ∫ b (c - a) ln(c/a)`.
pub fn dissipation_p1(state: &State, params: &Params, mesh: &Mesh) -> Result<Dissipation> {
    let [d1, _, d3] = params.diffusion;
    let fisher = [
        d1 * fisher_information(&state.a, mesh)?,
        0.0,
        d3 * fisher_information(&state.c, mesh)?,
    ];
    let density: Vec<f64> = (0..state.n_cells())
        .map(|i| {
            let (a, b, c) = (state.a[i], state.b[i], state.c[i]);
            b * (c - a) * log_ratio(c, a)
        })
        .collect();
    Ok(Dissipation::new(fisher, vec![integrate(&density, mesh)?]))
}

/// Three Fisher terms plus `∫a(b-c)ln(b/c) + ∫b(a-c)ln(a/c) + ∫c(a-b)ln(a/b)`.
pub fn dissipation_p2(state: &State, params: &Params, mesh: &Mesh) -> Result<Dissipation> {
    let mut fisher = [0.0; 3];
    for (k, f) in state.fields().into_iter().enumerate() {
        fisher[k] = params.diffusion[k] * fisher_information(f, mesh)?;
    }
    let n = state.n_cells();
    let mut terms = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        let (a, b, c) = (state.a[i], state.b[i], state.c[i]);
        terms[0][i] = a * (b - c) * log_ratio(b, c);
        terms[1][i] = b * (a - c) * log_ratio(a, c);
        terms[2][i] = c * (a - b) * log_ratio(a, b);
    }
    let reaction = terms
        .iter()
        .map(|t| integrate(t, mesh))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dissipation::new(fisher, reaction))
}

/// `λ = min{1, 1/(K C_PW)} a* / (1 + 3/δ)`.
pub fn eed_constant(k: f64, delta: f64, a_star: f64, c_pw: f64) -> Result<f64> {
    for (name, v) in [("K", k), ("a_star", a_star), ("C_PW", c_pw)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta must lie in (0, 1], got {delta}"
        )));
    }
    Ok((1.0f64).min(1.0 / (k * c_pw)) * a_star / (1.0 + 3.0 / delta))
}

/// The constant `C` of the equivalent form `1/λ = C (1 + 1/δ)`.
pub fn eed_remark_constant(lambda: f64, delta: f64) -> f64 {
    1.0 / (lambda * (1.0 + 1.0 / delta))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EedCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub lambda: f64,
    pub omega_measure: f64,
    pub satisfied: bool,
}

/// Evaluates both sides of the entropy/entropy-dissipation inequality.
///
/// `threshold` defaults to `(m2 - m1)/2`, which requires `m1 < m2`.
pub fn eed_check(
    state: &State,
    eq: Triple,
    mesh: &Mesh,
    k_emp: f64,
    c_pw: f64,
    threshold: Option<f64>,
) -> Result<EedCheck> {
    let threshold = match threshold {
        Some(t) => t,
        None => {
            let masses = crate::model::compute_masses(System::P1, state, mesh)?;
            match masses {
                Masses::P1 { m1, m2 } if m1 < m2 => (m2 - m1) / 2.0,
                _ => {
                    return Err(Error::RegimeMismatch(
                        "default reaction-set threshold needs m1 < m2".into(),
                    ))
                }
            }
        }
    };
    let omega = superlevel_measure(&state.b, threshold, mesh)?;
    if omega == 0.0 {
        return Err(Error::EmptyOmega);
    }
    let on_omega: Vec<f64> = (0..state.n_cells())
        .map(|i| {
            if state.b[i] >= threshold {
                let d = state.c[i] - state.a[i];
                d * d
            } else {
                0.0
            }
        })
        .collect();
    let lhs = fisher_information(&state.a, mesh)?
        + fisher_information(&state.c, mesh)?
        + integrate(&on_omega, mesh)?;
    let lambda = eed_constant(k_emp, omega, eq[0], c_pw)?;
    let rhs = lambda * relative_entropy_ac(&state.a, &state.c, eq[0], eq[2], mesh)?;
    Ok(EedCheck {
        lhs,
        rhs,
        lambda,
        omega_measure: omega,
        satisfied: lhs >= rhs,
    })
}

/// `|{x : b(x) >= threshold}|` counted in whole cells.
pub fn superlevel_measure(b: &[f64], threshold: f64, mesh: &Mesh) -> Result<f64> {
    if !(threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be non-negative, got {threshold}"
        )));
    }
    if b.len() != mesh.n_cells() {
        return Err(Error::SizeMismatch {
            expected: mesh.n_cells(),
            got: b.len(),
        });
    }
    Ok(b.iter().filter(|&&v| v >= threshold).count() as f64 * mesh.h())
}

/// `‖u1‖² + β‖u2‖² + ‖u3‖²` for a perturbation `u`.
pub fn lyapunov_p1_boundary(u: &State, beta: f64, mesh: &Mesh) -> Result<f64> {
    use crate::grid::l2_norm_sq;
    Ok(l2_norm_sq(&u.a, mesh)? + beta * l2_norm_sq(&u.b, mesh)? + l2_norm_sq(&u.c, mesh)?)
}

/// Theoretical constants for one regime. Fields that do not apply are `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RateCertificate {
    /// Entropy decay rate towards the positive equilibrium (`m1 < m2`).
    pub kappa1: Option<f64>,
    /// EED constant used in `kappa1`.
    pub eed_lambda: Option<f64>,
    /// Lyapunov weight and decay rate near a stable boundary equilibrium.
    pub beta: Option<f64>,
    pub mu: Option<f64>,
    pub alpha3: Option<f64>,
    /// Decay rate near the positive equilibrium of the symmetric network.
    pub alpha4: Option<f64>,
    /// Growth rate of the linearization at the boundary equilibrium; negative
    /// when that equilibrium is linearly stable.
    pub growth_rate: Option<f64>,
    pub c_pw: f64,
    pub p_gap: f64,
}

/// Result of the `μ` search: `(β, μ, α3)`.
fn boundary_lyapunov_constants(d: [f64; 3], lambda: f64) -> Option<(f64, f64, f64)> {
    let [d1, d2, d3] = d;
    if !(lambda > 0.0) {
        return None;
    }
    let mu_lo = (1.0 - lambda / (2.0 * d2)).max(0.0);
    let span = 1.0 - mu_lo;
    let n = 2000;
    let mut best: Option<(f64, f64, f64)> = None;
    for i in 1..n {
        let mu = mu_lo + span * i as f64 / n as f64;
        let gap = mu * d2 - d2 + lambda / 2.0;
        if !(gap > 0.0) || mu <= 0.0 {
            continue;
        }
        let beta = (lambda / (mu * d1))
            .max(lambda / (mu * d3))
            .max((d1 + d3) / gap);
        let alpha3 = (1.0 - mu) * d1.min(beta * d2).min(d3);
        if best.map_or(true, |(_, _, a)| alpha3 > a) {
            best = Some((beta, mu, alpha3));
        }
    }
    best
}

/// Theoretical rate constants for the regime of `masses`.
///
/// `k_emp` is an empirical bound on all concentrations and is only needed
/// for `kappa1`.
pub fn rate_certificate(
    system: System,
    params: &Params,
    masses: Masses,
    regime: Regime,
    k_emp: Option<f64>,
    poincare: PoincareConstants,
) -> Result<RateCertificate> {
    params.validate()?;
    let set = classify_equilibria(system, masses)?;
    if set.regime != regime {
        return Err(Error::RegimeMismatch(format!(
            "masses belong to {:?}, not {:?}",
            set.regime, regime
        )));
    }
    let d = params.diffusion;
    let mut cert = RateCertificate {
        c_pw: poincare.c_pw,
        p_gap: poincare.p_gap,
        ..Default::default()
    };
    match masses {
        Masses::P1 { m1, m2 } => {
            cert.growth_rate = Some(2.0 * m2 - m1);
            if regime == Regime::PositiveOnly {
                if let Some(k) = k_emp {
                    let a_star = m1 / 2.0;
                    let delta = ((m2 - m1) / (2.0 * k)).min(1.0);
                    let lambda = eed_constant(k, delta, a_star, poincare.c_pw)?;
                    cert.eed_lambda = Some(lambda);
                    cert.kappa1 = Some(d[0].min(d[2]).min((m2 - m1) / (2.0 * k)) * lambda);
                }
            }
            if regime == Regime::BoundaryOnly {
                // λ = ā - c̄ at the boundary equilibrium (m1 - m2, 0, m2)
                let lambda = m1 - 2.0 * m2;
                let dt = d.map(|x| x * poincare.p_gap);
                if let Some((beta, mu, alpha3)) = boundary_lyapunov_constants(dt, lambda) {
                    cert.beta = Some(beta);
                    cert.mu = Some(mu);
                    cert.alpha3 = Some(alpha3);
                }
            }
        }
        Masses::P2 { m } => {
            cert.growth_rate = Some(m);
            cert.alpha4 = Some(d.iter().fold(m, |acc, di| acc.min(poincare.p_gap * di)));
        }
    }
    Ok(cert)
}

/// Log-linear least-squares fit `value ≈ C e^{-alpha t}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    #[serde(rename = "C")]
    pub c: f64,
    pub alpha: f64,
    pub window: (f64, f64),
    pub residual: f64,
    pub n_points: usize,
}

/// Fits on the last half of the samples whose value exceeds `1e-12`.
pub fn fit_decay_rate(series: &[(f64, f64)]) -> Result<DecayFit> {
    let candidates: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(t, v)| t.is_finite() && v.is_finite() && v > 1e-12)
        .collect();
    if candidates.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "need at least 10 samples above 1e-12, got {}",
            candidates.len()
        )));
    }
    let window = &candidates[candidates.len() / 2..];
    fit_log_linear(window)
}

/// Least squares of `ln v` against `t` over all points given.
pub fn fit_log_linear(points: &[(f64, f64)]) -> Result<DecayFit> {
    if points.len() < 2 || points.iter().any(|&(_, v)| !(v > 0.0)) {
        return Err(Error::InsufficientData(
            "log-linear fit needs at least 2 positive samples".into(),
        ));
    }
    let n = points.len() as f64;
    let t_mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(t, v) in points {
        sxx += (t - t_mean) * (t - t_mean);
        sxy += (t - t_mean) * (v.ln() - y_mean);
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientData(
            "fit window has zero time span".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * t_mean;
    let residual = (points
        .iter()
        .map(|&(t, v)| {
            let r = v.ln() - (intercept + slope * t);
            r * r
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(DecayFit {
        c: intercept.exp(),
        alpha: -slope,
        window: (points[0].0, points[points.len() - 1].0),
        residual,
        n_points: points.len(),
    })
}
