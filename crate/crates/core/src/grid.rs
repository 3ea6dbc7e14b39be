//! Uniform cell-centered mesh on the unit interval.
//!
//! Fields hold cell averages. The Neumann Laplacian uses mirrored ghost
//! cells, which is the same as the flux form with zero boundary fluxes, so
//! the discrete integral of `Δf` telescopes to zero.

use std::f64::consts::PI;
use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mesh {
    n_cells: usize,
    h: f64,
}

impl Mesh {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::InvalidArgument(format!(
                "mesh needs at least 2 cells, got {n_cells}"
            )));
        }
        Ok(Mesh {
            n_cells,
            h: 1.0 / n_cells as f64,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Cell center `x_i = (i + 1/2) h`.
    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_cells).map(|i| self.center(i))
    }

    fn check(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.n_cells {
            return Err(Error::SizeMismatch {
                expected: self.n_cells,
                got: f.len(),
            });
        }
        Ok(())
    }
}

/// Cell averages of one species.
#[derive(Clone, Debug, PartialEq)]
pub struct Field(Vec<f64>);

impl Field {
    pub fn new(values: Vec<f64>) -> Self {
        Field(values)
    }

    pub fn constant(mesh: &Mesh, value: f64) -> Self {
        Field(vec![value; mesh.n_cells()])
    }

    pub fn zeros(mesh: &Mesh) -> Self {
        Self::constant(mesh, 0.0)
    }

    /// Samples `f` at the cell centers.
    pub fn from_fn(mesh: &Mesh, f: impl Fn(f64) -> f64) -> Self {
        Field(mesh.centers().map(f).collect())
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field(self.0.iter().map(|&v| f(v)).collect())
    }

    /// `self + scale * other`, element-wise.
    pub fn axpy(&self, scale: f64, other: &Field) -> Field {
        Field(
            self.0
                .iter()
                .zip(other.0.iter())
                .map(|(x, y)| x + scale * y)
                .collect(),
        )
    }
}

impl Deref for Field {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Field {
    fn from(values: Vec<f64>) -> Self {
        Field(values)
    }
}

/// `(Δf)_i = (f_{i-1} - 2 f_i + f_{i+1}) / h²` with `f_{-1} = f_0`, `f_n = f_{n-1}`.
pub fn laplacian_neumann(f: &[f64], mesh: &Mesh) -> Result<Field> {
    mesh.check(f)?;
    let n = f.len();
    let inv_h2 = 1.0 / (mesh.h() * mesh.h());
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let left = if i == 0 { f[0] } else { f[i - 1] };
        let right = if i + 1 == n { f[n - 1] } else { f[i + 1] };
        // flux form: (right - f_i) - (f_i - left)
        out.push(((right - f[i]) - (f[i] - left)) * inv_h2);
    }
    Ok(Field(out))
}

/// Midpoint quadrature, exact for cell-average data.
pub fn integrate(f: &[f64], mesh: &Mesh) -> Result<f64> {
    mesh.check(f)?;
    Ok(f.iter().sum::<f64>() * mesh.h())
}

/// Differences `(f_{i+1} - f_i) / h` on the `n - 1` interior faces.
pub fn face_gradients(f: &[f64], mesh: &Mesh) -> Result<Vec<f64>> {
    mesh.check(f)?;
    let inv_h = 1.0 / mesh.h();
    Ok(f.windows(2).map(|w| (w[1] - w[0]) * inv_h).collect())
}

pub fn l2_norm_sq(f: &[f64], mesh: &Mesh) -> Result<f64> {
    mesh.check(f)?;
    Ok(f.iter().map(|v| v * v).sum::<f64>() * mesh.h())
}

pub fn l2_norm(f: &[f64], mesh: &Mesh) -> Result<f64> {
    Ok(l2_norm_sq(f, mesh)?.sqrt())
}

/// `‖∇f‖₂²` from one-sided differences on interior faces.
pub fn h1_seminorm_sq(f: &[f64], mesh: &Mesh) -> Result<f64> {
    Ok(face_gradients(f, mesh)?.iter().map(|g| g * g).sum::<f64>() * mesh.h())
}

pub fn h1_seminorm(f: &[f64], mesh: &Mesh) -> Result<f64> {
    Ok(h1_seminorm_sq(f, mesh)?.sqrt())
}

/// `‖f‖²_{H²} = ‖f‖² + ‖∇f‖² + ‖Δf‖²`, using the Neumann Laplacian.
pub fn h2_norm_sq(f: &[f64], mesh: &Mesh) -> Result<f64> {
    let lap = laplacian_neumann(f, mesh)?;
    Ok(l2_norm_sq(f, mesh)? + h1_seminorm_sq(f, mesh)? + l2_norm_sq(&lap, mesh)?)
}

pub fn h2_norm(f: &[f64], mesh: &Mesh) -> Result<f64> {
    Ok(h2_norm_sq(f, mesh)?.sqrt())
}

/// Constant of the Poincaré–Wirtinger inequality `‖f - f̄‖² <= c_pw ‖∇f‖²`
/// together with its reciprocal, the spectral gap of the Neumann Laplacian.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PoincareConstants {
    pub c_pw: f64,
    pub p_gap: f64,
}

impl PoincareConstants {
    /// Unit interval: first nonzero Neumann eigenvalue is `π²`.
    pub fn continuum() -> Self {
        let p_gap = PI * PI;
        PoincareConstants {
            c_pw: 1.0 / p_gap,
            p_gap,
        }
    }

    /// From the second-smallest eigenvalue of the mirrored-ghost stencil.
    pub fn discrete(mesh: &Mesh) -> Self {
        let h = mesh.h();
        let p_gap = 2.0 / (h * h) * (1.0 - (PI * h).cos());
        PoincareConstants {
            c_pw: 1.0 / p_gap,
            p_gap,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoincarePair {
    pub discrete: PoincareConstants,
    pub continuum: PoincareConstants,
}

pub fn poincare_constants(mesh: &Mesh) -> PoincarePair {
    PoincarePair {
        discrete: PoincareConstants::discrete(mesh),
        continuum: PoincareConstants::continuum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn mesh_invariants() {
        assert!(Mesh::new(1).is_err());
        let mesh = Mesh::new(10).unwrap();
        assert!((mesh.h() * 10.0 - 1.0).abs() < 1e-15);
        assert!((mesh.center(0) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let mesh = Mesh::new(17).unwrap();
        let f = Field::constant(&mesh, 3.25);
        assert!(laplacian_neumann(&f, &mesh)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn cosine_is_discrete_eigenfunction() {
        let mesh = Mesh::new(256).unwrap();
        let h = mesh.h();
        let f = Field::from_fn(&mesh, |x| (PI * x).cos());
        let lap = laplacian_neumann(&f, &mesh).unwrap();
        let lambda_h = -(2.0 / (h * h)) * (1.0 - (PI * h).cos());
        for (l, v) in lap.iter().zip(f.iter()) {
            assert!((l - lambda_h * v).abs() < 1e-9);
        }
        // O(h²) agreement with the continuum eigenvalue
        assert!(rel(lambda_h, -PI * PI) < PI * PI * h * h / 12.0 * 1.01);
    }

    #[test]
    fn size_mismatch_is_reported() {
        let mesh = Mesh::new(8).unwrap();
        assert!(matches!(
            laplacian_neumann(&[1.0; 7], &mesh),
            Err(Error::SizeMismatch {
                expected: 8,
                got: 7
            })
        ));
    }

    #[test]
    fn quadrature() {
        let mesh = Mesh::new(64).unwrap();
        assert!((integrate(&Field::constant(&mesh, 1.0), &mesh).unwrap() - 1.0).abs() < 1e-15);
        let x = Field::from_fn(&mesh, |x| x);
        assert!((integrate(&x, &mesh).unwrap() - 0.5).abs() < mesh.h() * mesh.h());
        let half = Field::from_fn(&mesh, |x| if x < 0.5 { 1.0 } else { 0.0 });
        assert_eq!(integrate(&half, &mesh).unwrap(), 0.5);
    }

    #[test]
    fn norms() {
        let mesh = Mesh::new(512).unwrap();
        let one = Field::constant(&mesh, 1.0);
        assert!((l2_norm(&one, &mesh).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(h1_seminorm(&one, &mesh).unwrap(), 0.0);
        let cos = Field::from_fn(&mesh, |x| (PI * x).cos());
        assert!((l2_norm(&cos, &mesh).unwrap() - 0.5f64.sqrt()).abs() < 1e-5);
        assert!(h2_norm(&cos, &mesh).unwrap() >= l2_norm(&cos, &mesh).unwrap());
    }

    #[test]
    fn poincare() {
        let c = PoincareConstants::continuum();
        assert!((c.c_pw - 0.101_321_183_642_337_77).abs() < 1e-15);
        assert!((c.c_pw * c.p_gap - 1.0).abs() < 1e-15);
        let d = poincare_constants(&Mesh::new(256).unwrap()).discrete;
        assert!(rel(d.c_pw, 1.0 / (PI * PI)) < 1e-3);
        assert!((d.c_pw * d.p_gap - 1.0).abs() < 1e-15);
        // stencil eigenvalue sits below π², so the discrete constant is larger
        assert!(d.c_pw > c.c_pw);
    }

    #[test]
    fn discrete_eigenvalues_converge_at_second_order() {
        let errs: Vec<f64> = [32usize, 64, 128]
            .iter()
            .map(|&n| {
                let d = PoincareConstants::discrete(&Mesh::new(n).unwrap());
                (d.p_gap - PI * PI).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() < 0.05, "order {order}");
        }
    }

    fn field_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0..5.0f64, n)
    }

    proptest! {
        #[test]
        fn laplacian_conserves_mass(f in field_strategy(33)) {
            let mesh = Mesh::new(33).unwrap();
            let lap = laplacian_neumann(&f, &mesh).unwrap();
            let scale: f64 = lap.iter().map(|v| v.abs()).sum::<f64>() * mesh.h();
            prop_assert!(integrate(&lap, &mesh).unwrap().abs() <= 1e-12 * scale.max(1.0));
        }

        #[test]
        fn summation_by_parts(f in field_strategy(20), g in field_strategy(20)) {
            let mesh = Mesh::new(20).unwrap();
            let lap_g = laplacian_neumann(&g, &mesh).unwrap();
            let lhs: f64 = f.iter().zip(lap_g.iter()).map(|(a, b)| a * b).sum::<f64>() * mesh.h();
            let df = face_gradients(&f, &mesh).unwrap();
            let dg = face_gradients(&g, &mesh).unwrap();
            let rhs: f64 = -df.iter().zip(dg.iter()).map(|(a, b)| a * b).sum::<f64>() * mesh.h();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }

        #[test]
        fn discrete_poincare_holds(f in field_strategy(40)) {
            let mesh = Mesh::new(40).unwrap();
            let mean = integrate(&f, &mesh).unwrap();
            let centered: Vec<f64> = f.iter().map(|v| v - mean).collect();
            let lhs = l2_norm_sq(&centered, &mesh).unwrap();
            let rhs = PoincareConstants::discrete(&mesh).c_pw * h1_seminorm_sq(&f, &mesh).unwrap();
            prop_assert!(lhs <= rhs * (1.0 + 1e-10) + 1e-14);
        }

        #[test]
        fn h2_dominates_l2(f in field_strategy(16)) {
            let mesh = Mesh::new(16).unwrap();
            prop_assert!(h2_norm(&f, &mesh).unwrap() >= l2_norm(&f, &mesh).unwrap());
        }
    }
}
