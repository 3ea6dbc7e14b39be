//! Spectra of the linearization at boundary equilibria.
//!
//! Neumann cosine modes diagonalize every diffusion block at once, so the
//! linearized operator splits into one 3×3 matrix `d λ_k + J` per mode.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Mesh;
use crate::model::{classify_equilibria, reaction_jacobian, Masses, Params, System, Triple};

/// Largest mesh accepted by [`discrete_operator_spectrum`].
pub const MAX_DENSE_CELLS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Laplacian {
    Continuum,
    Discrete(Mesh),
}

/// Neumann Laplacian eigenvalue of mode `k`.
pub fn neumann_eigenvalue(kind: Laplacian, k: usize) -> f64 {
    match kind {
        Laplacian::Continuum if k == 0 => 0.0,
        Laplacian::Continuum => -(k as f64 * PI).powi(2),
        Laplacian::Discrete(mesh) => {
            let h = mesh.h();
            -(2.0 / (h * h)) * (1.0 - (k as f64 * PI * h).cos())
        }
    }
}

pub fn neumann_eigenvalues(kind: Laplacian, count: usize) -> Vec<f64> {
    (0..count).map(|k| neumann_eigenvalue(kind, k)).collect()
}

/// `{d1 λ, d3 λ, d2 λ + c̄ - ā}`.
pub fn linearized_modes_p1(lambda_k: f64, params: &Params, a_bar: f64, c_bar: f64) -> [f64; 3] {
    let [d1, d2, d3] = params.diffusion;
    [d1 * lambda_k, d3 * lambda_k, d2 * lambda_k + c_bar - a_bar]
}

/// Roots of `η² + p η + q`, largest first, without cancellation.
fn real_quadratic_roots(p: f64, q: f64) -> Option<(f64, f64)> {
    let disc = p * p - 4.0 * q;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let w = -0.5 * (p + if p >= 0.0 { s } else { -s });
    if w == 0.0 {
        return Some((0.0, 0.0));
    }
    let (r1, r2) = (w, q / w);
    Some(if r1 >= r2 { (r1, r2) } else { (r2, r1) })
}

/// `{d1 λ}` together with the roots of
/// `η² - ((d2 + d3) λ - 2ā) η + d2 d3 λ² - (d2 + d3) λ ā - 3ā²`.
pub fn linearized_modes_p2(lambda_k: f64, params: &Params, a_bar: f64) -> [f64; 3] {
    let [d1, d2, d3] = params.diffusion;
    let p = -((d2 + d3) * lambda_k - 2.0 * a_bar);
    let q = d2 * d3 * lambda_k * lambda_k - (d2 + d3) * lambda_k * a_bar - 3.0 * a_bar * a_bar;
    // discriminant (d2 - d3)² λ² + 16 ā² is never negative
    let (hi, lo) = real_quadratic_roots(p, q).expect("real roots");
    [d1 * lambda_k, hi, lo]
}

/// Largest root `g(λ)` of the P2 quadratic in closed form.
pub fn p2_top_root(lambda_k: f64, d2: f64, d3: f64, a_bar: f64) -> f64 {
    let disc = (d2 - d3).powi(2) * lambda_k * lambda_k + 16.0 * a_bar * a_bar;
    ((d2 + d3) * lambda_k - 2.0 * a_bar + disc.sqrt()) / 2.0
}

/// Index of the nonzero component of a P2 boundary equilibrium and its value.
fn p2_dominant(eq: &Triple) -> Result<(usize, f64)> {
    let nonzero: Vec<usize> = (0..3).filter(|&i| eq[i] != 0.0).collect();
    match nonzero.as_slice() {
        [i] => Ok((*i, eq[*i])),
        _ => Err(Error::RegimeMismatch(format!(
            "{eq:?} is not a boundary equilibrium of the symmetric network"
        ))),
    }
}

/// Per-mode eigenvalues at a boundary equilibrium. For P2 the equilibrium
/// may carry its mass in any species; the network's cyclic symmetry lets the
/// formula be applied with the diffusion coefficients permuted accordingly.
pub fn mode_eigenvalues(
    system: System,
    lambda_k: f64,
    params: &Params,
    eq: &Triple,
) -> Result<[f64; 3]> {
    match system {
        System::P1 => Ok(linearized_modes_p1(lambda_k, params, eq[0], eq[2])),
        System::P2 => {
            let (i, a_bar) = p2_dominant(eq)?;
            let d = params.diffusion;
            let rotated = Params {
                diffusion: [d[i], d[(i + 1) % 3], d[(i + 2) % 3]],
            };
            Ok(linearized_modes_p2(lambda_k, &rotated, a_bar))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSpectrum {
    pub mode_index: usize,
    pub laplacian_eigenvalue: f64,
    pub operator_eigenvalues: [f64; 3],
}

pub fn mode_spectra(
    system: System,
    params: &Params,
    eq: &Triple,
    kind: Laplacian,
    n_modes: usize,
) -> Result<Vec<ModeSpectrum>> {
    (0..n_modes)
        .map(|k| {
            let lambda = neumann_eigenvalue(kind, k);
            Ok(ModeSpectrum {
                mode_index: k,
                laplacian_eigenvalue: lambda,
                operator_eigenvalues: mode_eigenvalues(system, lambda, params, eq)?,
            })
        })
        .collect()
}

fn check_boundary(system: System, masses: Masses, eq: &Triple) -> Result<()> {
    let set = classify_equilibria(system, masses)?;
    if !set.has_boundary(eq) {
        return Err(Error::RegimeMismatch(format!(
            "{eq:?} is not an admissible boundary equilibrium for {masses:?}"
        )));
    }
    Ok(())
}

/// Largest per-mode eigenvalue over modes `0..n_modes` and the mode attaining it.
///
/// At mode 0 the zero eigenvalues carried by the conservation laws are left
/// out: mass-preserving perturbations have no component along them, so the
/// mode-0 rate is the reactive one (`c̄ - ā` for P1, `ā` for P2).
pub fn max_growth_rate(
    system: System,
    params: &Params,
    masses: Masses,
    eq: &Triple,
    n_modes: usize,
) -> Result<(f64, usize)> {
    if n_modes == 0 {
        return Err(Error::InvalidArgument("n_modes must be at least 1".into()));
    }
    check_boundary(system, masses, eq)?;
    let mut best = (f64::NEG_INFINITY, 0);
    for s in mode_spectra(system, params, eq, Laplacian::Continuum, n_modes)? {
        let conserved = match (s.mode_index, system) {
            (0, System::P1) => 2,
            (0, System::P2) => 1,
            _ => 0,
        };
        let top = s.operator_eigenvalues[conserved..]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if top > best.0 {
            best = (top, s.mode_index);
        }
    }
    Ok(best)
}

/// Dense `3n × 3n` matrix of `diag(d) Δ_h + J(eq)`, species-major ordering.
pub fn assemble_operator(
    mesh: &Mesh,
    system: System,
    params: &Params,
    eq: &Triple,
) -> DMatrix<f64> {
    let n = mesh.n_cells();
    let inv_h2 = 1.0 / (mesh.h() * mesh.h());
    let jac = reaction_jacobian(system, *eq);
    let mut m = DMatrix::zeros(3 * n, 3 * n);
    for s in 0..3 {
        let d = params.diffusion[s] * inv_h2;
        for i in 0..n {
            let row = s * n + i;
            if i > 0 {
                m[(row, row - 1)] += d;
                m[(row, row)] -= d;
            }
            if i + 1 < n {
                m[(row, row + 1)] += d;
                m[(row, row)] -= d;
            }
            for r in 0..3 {
                m[(row, r * n + i)] += jac[s][r];
            }
        }
    }
    m
}

/// Real parts of all eigenvalues of the assembled operator, descending.
pub fn discrete_operator_spectrum(
    mesh: &Mesh,
    system: System,
    params: &Params,
    eq: &Triple,
) -> Result<Vec<f64>> {
    if mesh.n_cells() > MAX_DENSE_CELLS {
        return Err(Error::MeshTooLarge {
            n_cells: mesh.n_cells(),
            max: MAX_DENSE_CELLS,
        });
    }
    let m = assemble_operator(mesh, system, params, eq);
    let mut re: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.re).collect();
    re.sort_by(|a, b| b.total_cmp(a));
    Ok(re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn laplacian_eigenvalues() {
        assert_eq!(neumann_eigenvalue(Laplacian::Continuum, 0), 0.0);
        assert!(
            (neumann_eigenvalue(Laplacian::Continuum, 1) + 9.869_604_401_089_358).abs() < 1e-12
        );
        let m = Mesh::new(256).unwrap();
        let l1 = neumann_eigenvalue(Laplacian::Discrete(m), 1);
        assert!(((l1 + PI * PI) / (PI * PI)).abs() < 1e-3);
        let ev = neumann_eigenvalues(Laplacian::Discrete(m), 256);
        assert!(ev.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn p1_mode_examples() {
        let p = Params::default();
        assert_eq!(linearized_modes_p1(0.0, &p, 0.5, 1.0), [0.0, 0.0, 0.5]);
        let l = -PI * PI;
        assert_eq!(linearized_modes_p1(l, &p, 0.5, 1.0), [l, l, l + 0.5]);
    }

    #[test]
    fn p2_mode_examples() {
        let p = Params::default();
        let ev = linearized_modes_p2(0.0, &p, 1.0);
        assert_eq!(ev[0], 0.0);
        assert!((ev[1] - 1.0).abs() < 1e-15 && (ev[2] + 3.0).abs() < 1e-15);
        for m in [0.3, 3.0, 11.0] {
            assert!((linearized_modes_p2(0.0, &p, m)[1] - m).abs() < 1e-13 * m);
        }
    }

    #[test]
    fn growth_rates() {
        let p = Params::default();
        let (r, k) =
            max_growth_rate(System::P1, &p, Masses::p1(1.5, 1.0), &[0.5, 0.0, 1.0], 64).unwrap();
        assert_eq!((r, k), (0.5, 0));
        let (r, k) =
            max_growth_rate(System::P2, &p, Masses::p2(3.0), &[3.0, 0.0, 0.0], 64).unwrap();
        assert!((r - 3.0).abs() < 1e-14 && k == 0);
        let (r, _) =
            max_growth_rate(System::P1, &p, Masses::p1(3.0, 1.0), &[2.0, 0.0, 1.0], 8).unwrap();
        assert_eq!(r, -1.0);
        assert!(matches!(
            max_growth_rate(System::P1, &p, Masses::p1(1.0, 2.0), &[0.5, 0.0, 1.0], 8),
            Err(Error::RegimeMismatch(_))
        ));
    }

    #[test]
    fn symmetric_boundary_equilibria_share_rates() {
        let p = Params::new([0.3, 1.7, 0.9]).unwrap();
        for eq in [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]] {
            let (r, k) = max_growth_rate(System::P2, &p, Masses::p2(2.0), &eq, 16).unwrap();
            assert!((r - 2.0).abs() < 1e-14 && k == 0);
        }
    }

    #[test]
    fn dense_spectrum_top_is_mode_zero() {
        let m = Mesh::new(64).unwrap();
        let p = Params::default();
        let spec = discrete_operator_spectrum(&m, System::P1, &p, &[0.5, 0.0, 1.0]).unwrap();
        assert_eq!(spec.len(), 192);
        assert!((spec[0] - 0.5).abs() < 1e-10);
        assert!(spec.iter().all(|&v| v <= 0.5 + 1e-8));
        assert!(matches!(
            discrete_operator_spectrum(&Mesh::new(257).unwrap(), System::P1, &p, &[0.5, 0.0, 1.0]),
            Err(Error::MeshTooLarge { .. })
        ));
    }

    /// Eigenvalues of the per-mode 3×3 matrix `λ diag(d) + J` by a generic solver.
    fn per_mode_oracle(system: System, lambda: f64, p: &Params, eq: &Triple) -> Vec<f64> {
        let j = reaction_jacobian(system, *eq);
        let m = DMatrix::from_fn(3, 3, |r, c| {
            j[r][c] + if r == c { p.diffusion[r] * lambda } else { 0.0 }
        });
        let mut ev: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.re).collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    proptest! {
        #[test]
        fn closed_forms_match_dense_3x3(
            d in prop::array::uniform3(0.1..3.0f64),
            m1 in 1.0..1.9f64,
            mass in 0.2..5.0f64,
            k in 0usize..12,
            which in 0usize..3,
        ) {
            let p = Params::new(d).unwrap();
            let lambda = neumann_eigenvalue(Laplacian::Continuum, k);
            let eq1 = [m1 - 1.0, 0.0, 1.0];
            let got = sorted(mode_eigenvalues(System::P1, lambda, &p, &eq1).unwrap().to_vec());
            let want = per_mode_oracle(System::P1, lambda, &p, &eq1);
            for (g, w) in got.iter().zip(&want) {
                prop_assert!((g - w).abs() <= 1e-10 * (1.0 + w.abs()));
            }
            let mut eq2 = [0.0; 3];
            eq2[which] = mass;
            let got = sorted(mode_eigenvalues(System::P2, lambda, &p, &eq2).unwrap().to_vec());
            let want = per_mode_oracle(System::P2, lambda, &p, &eq2);
            for (g, w) in got.iter().zip(&want) {
                prop_assert!((g - w).abs() <= 1e-10 * (1.0 + w.abs()));
            }
        }

        #[test]
        fn top_root_is_nondecreasing(d2 in 0.05..5.0f64, d3 in 0.05..5.0f64, a_bar in 0.01..10.0f64) {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..1000 {
                let lambda = -200.0 + 200.0 * i as f64 / 999.0;
                let g = p2_top_root(lambda, d2, d3, a_bar);
                prop_assert!(g >= prev - 1e-12 * g.abs().max(1.0));
                prev = g;
            }
            prop_assert!((p2_top_root(0.0, d2, d3, a_bar) - a_bar).abs() < 1e-12 * a_bar);
        }

        #[test]
        fn p1_modes_bounded_by_mode_zero(d in prop::array::uniform3(0.1..3.0f64), lambda in -1e3..0.0f64, gap in -2.0..2.0f64) {
            let p = Params::new(d).unwrap();
            let ev = linearized_modes_p1(lambda, &p, 1.0, 1.0 + gap);
            let zero = linearized_modes_p1(0.0, &p, 1.0, 1.0 + gap);
            let top = zero.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(ev.iter().all(|&v| v <= top));
            prop_assert!(ev[2] <= zero[2]);
        }
    }
}
