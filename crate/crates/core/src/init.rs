//! Initial data: homogeneous states with optional smooth perturbations.

use rand::Rng;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{Field, Mesh};
use crate::model::{Masses, Triple};
use crate::solver::State;

/// `z + Σ_k amp_k cos(kπx)` per species. Cosine modes integrate to zero on
/// cell-average data only approximately, so the sampled perturbation is
/// re-centered to keep the species integrals at `z`.
pub fn cosine_perturbed(mesh: &Mesh, z: Triple, modes: &[[f64; 3]]) -> State {
    let mut fields = [Field::zeros(mesh), Field::zeros(mesh), Field::zeros(mesh)];
    for (s, f) in fields.iter_mut().enumerate() {
        let pert: Vec<f64> = mesh
            .centers()
            .map(|x| {
                modes
                    .iter()
                    .enumerate()
                    .map(|(k, amp)| amp[s] * ((k + 1) as f64 * PI * x).cos())
                    .sum::<f64>()
            })
            .collect();
        let mean = pert.iter().sum::<f64>() / pert.len() as f64;
        for (v, p) in f.iter_mut().zip(pert) {
            *v = z[s] + (p - mean);
        }
    }
    let [a, b, c] = fields;
    State::new(a, b, c)
}

/// A random positive homogeneous triple with exactly the given masses.
pub fn random_constant<R: Rng>(masses: &Masses, rng: &mut R) -> Result<Triple> {
    masses.validate()?;
    Ok(match *masses {
        Masses::P1 { m1, m2 } => {
            // c ∈ (0, min(m1, m2)) leaves a = m1 - c and b = m2 - c positive
            let top = m1.min(m2);
            if !(top > 0.0) {
                return Err(Error::InvalidMasses(
                    "random positive data needs m1 > 0 and m2 > 0".into(),
                ));
            }
            let c = top * rng.gen_range(0.05..0.95);
            [m1 - c, m2 - c, c]
        }
        Masses::P2 { m } => {
            let w: [f64; 3] = [
                rng.gen_range(0.1..1.0),
                rng.gen_range(0.1..1.0),
                rng.gen_range(0.1..1.0),
            ];
            let s: f64 = w.iter().sum();
            let a = m * w[0] / s;
            let b = m * w[1] / s;
            [a, b, m - a - b]
        }
    })
}

/// Random smooth positive data with the given masses: a random homogeneous
/// triple plus zero-mean cosine modes `1..=modes`, each amplitude at most
/// `amplitude` times the smallest component so the result stays positive.
pub fn random_initial_state<R: Rng>(
    masses: &Masses,
    mesh: &Mesh,
    amplitude: f64,
    modes: usize,
    rng: &mut R,
) -> Result<State> {
    if !(0.0..1.0).contains(&amplitude) {
        return Err(Error::InvalidArgument(format!(
            "amplitude must lie in [0, 1), got {amplitude}"
        )));
    }
    let z = random_constant(masses, rng)?;
    let floor = z.iter().copied().fold(f64::INFINITY, f64::min);
    let per_mode = amplitude * floor / modes.max(1) as f64;
    let amps: Vec<[f64; 3]> = (0..modes)
        .map(|_| {
            [
                per_mode * rng.gen_range(-1.0..1.0),
                per_mode * rng.gen_range(-1.0..1.0),
                per_mode * rng.gen_range(-1.0..1.0),
            ]
        })
        .collect();
    let state = cosine_perturbed(mesh, z, &amps);
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::compute_masses;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_states_have_exact_masses() {
        let mesh = Mesh::new(50).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for masses in [Masses::p1(1.0, 2.0), Masses::p1(3.0, 1.0), Masses::p2(3.0)] {
            for _ in 0..20 {
                let s = random_initial_state(&masses, &mesh, 0.5, 4, &mut rng).unwrap();
                assert!(s.min() > 0.0);
                let got = compute_masses(masses.system(), &s, &mesh).unwrap().values();
                for (g, w) in got.iter().zip(masses.values()) {
                    assert!((g - w).abs() < 1e-13 * w);
                }
            }
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let mesh = Mesh::new(16).unwrap();
        let m = Masses::p1(1.0, 2.0);
        let s1 =
            random_initial_state(&m, &mesh, 0.3, 3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let s2 =
            random_initial_state(&m, &mesh, 0.3, 3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn rejects_degenerate_p1_masses() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(random_constant(&Masses::p1(1.0, 0.0), &mut rng).is_err());
    }
}
