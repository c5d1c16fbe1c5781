//! Static relaxation of a homogeneously pre-stressed, perforated film.
//!
//! The film starts with isotropic stress `σ̄` and relaxes under linear plane
//! stress: clamped frame edges are fixed, hole rims are traction free and a
//! periodic cell keeps its shape (zero mean strain).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{self, DofMap};
use crate::material::MaterialSpec;
use crate::mesh::{EdgeTag, Mesh};
use crate::sparse::Factorization;

/// Per-element stress `(σxx, σyy, σxy)` in Pa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressField {
    pub sigma: Vec<[f64; 3]>,
}

/// Principal stresses `(major, minor)` of `(σxx, σyy, σxy)`.
pub fn principal(s: [f64; 3]) -> (f64, f64) {
    let mean = 0.5 * (s[0] + s[1]);
    let radius = (0.25 * (s[0] - s[1]).powi(2) + s[2] * s[2]).sqrt();
    (mean + radius, mean - radius)
}

impl StressField {
    pub fn homogeneous(n_elements: usize, sigma: f64) -> Self {
        Self {
            sigma: vec![[sigma, sigma, 0.0]; n_elements],
        }
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// Area-weighted mean of `(σxx + σyy)/2`.
    pub fn mean_isotropic(&self, mesh: &Mesh) -> f64 {
        let mut acc = 0.0;
        let mut area = 0.0;
        for (e, s) in self.sigma.iter().enumerate() {
            let a = mesh.triangle_area(e);
            acc += a * 0.5 * (s[0] + s[1]);
            area += a;
        }
        acc / area
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            sigma: self.sigma.iter().map(|s| [s[0] * factor, s[1] * factor, s[2] * factor]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relaxation {
    pub stress: StressField,
    /// Interleaved nodal displacements (m).
    pub displacement: Vec<f64>,
    /// `‖K u − f‖ / ‖f‖` of the reduced system.
    pub residual: f64,
}

pub fn relax_stress(mesh: &Mesh, material: &MaterialSpec, periodic: bool) -> Result<StressField> {
    Ok(relax_stress_detailed(mesh, material, periodic)?.stress)
}

pub fn relax_stress_detailed(mesh: &Mesh, material: &MaterialSpec, periodic: bool) -> Result<Relaxation> {
    material.validate_elastic()?;
    if periodic && !mesh.is_periodic() {
        return Err(Error::Singular("periodic relaxation requested on a mesh without periodic pairing".into()));
    }
    let n = mesh.nodes.len();
    let mut fixed = if periodic {
        vec![false; n]
    } else {
        mesh.nodes_with_tag(EdgeTag::OuterClamp)
    };
    if periodic {
        // Rigid translations are the only null space left; pin one node.
        let source = mesh.periodic_images.first().map(|p| p.source).unwrap_or(0);
        fixed[source] = true;
    } else if !fixed.iter().any(|f| *f) {
        return Err(Error::Singular(
            "no clamped edge: the in-plane problem has rigid-body modes".into(),
        ));
    }

    let sigma0 = [material.prestress, material.prestress, 0.0];
    let h = material.thickness;
    let k_full = fem::plane_stress(mesh, material.youngs_modulus, material.poisson_ratio, h);
    let f_full = fem::initial_stress_load(mesh, sigma0, h);
    let map: DofMap<f64> = DofMap::new(mesh, &fixed, 2, |_| 1.0);
    let k = map.project(&k_full);
    let f = map.restrict(&f_full);

    let f_norm = crate::sparse::norm(&f);
    let (u_red, residual) = if f_norm == 0.0 || map.n_reduced == 0 {
        (vec![0.0; map.n_reduced], 0.0)
    } else {
        let factor = Factorization::new(&k, true)?;
        let mut u = factor.solve(&f)?;
        let mut r: Vec<f64> = k.mul_vec(&u).iter().zip(&f).map(|(a, b)| b - a).collect();
        let mut rel = crate::sparse::norm(&r) / f_norm;
        // One step of iterative refinement if round-off left a visible residual.
        if rel > 1e-12 {
            let du = factor.solve(&r)?;
            u.iter_mut().zip(&du).for_each(|(a, b)| *a += b);
            r = k.mul_vec(&u).iter().zip(&f).map(|(a, b)| b - a).collect();
            rel = crate::sparse::norm(&r) / f_norm;
        }
        (u, rel)
    };
    if !(residual <= 1e-10) {
        return Err(Error::Singular(format!(
            "equilibrium residual {residual:.3e} exceeds 1e-10"
        )));
    }
    let u = map.expand(&u_red);
    let sigma = fem::element_stress(mesh, &u, material.youngs_modulus, material.poisson_ratio, sigma0);
    let stress = StressField { sigma };
    let stats = stress_stats(&stress);
    if stats.compressive_fraction > 0.0 {
        log::warn!(
            "{:.2}% of elements carry compressive stress; the linear model ignores buckling",
            100.0 * stats.compressive_fraction
        );
    }
    Ok(Relaxation {
        stress,
        displacement: u,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressStats {
    /// Smallest minor principal stress (Pa).
    pub min_principal: f64,
    /// Largest major principal stress (Pa).
    pub max_principal: f64,
    /// Element mean of `(σ₁ + σ₂)/2` (Pa).
    pub mean_principal: f64,
    /// Fraction of elements whose minor principal stress is negative.
    pub compressive_fraction: f64,
}

pub fn stress_stats(field: &StressField) -> StressStats {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut mean = 0.0;
    let mut compressive = 0usize;
    for s in &field.sigma {
        let (major, minor) = principal(*s);
        min = min.min(minor);
        max = max.max(major);
        mean += 0.5 * (major + minor);
        if minor < 0.0 {
            compressive += 1;
        }
    }
    let n = field.sigma.len().max(1) as f64;
    StressStats {
        min_principal: min,
        max_principal: max,
        mean_principal: mean / n,
        compressive_fraction: compressive as f64 / n,
    }
}

/// Relative traction `|σ·n| / σ_ref` at the midpoint of every hole-rim edge,
/// using the stress of the adjacent element.
pub fn hole_tractions(mesh: &Mesh, field: &StressField, reference: f64) -> Vec<f64> {
    let mut owner = std::collections::HashMap::new();
    for (e, t) in mesh.triangles.iter().enumerate() {
        for k in 0..3 {
            owner.insert((t[k], t[(k + 1) % 3]), e);
        }
    }
    mesh.boundary_edges
        .iter()
        .filter(|b| b.tag == EdgeTag::HoleFree)
        .filter_map(|b| {
            let e = owner.get(&(b.nodes[0], b.nodes[1]))?;
            let (p, q) = (mesh.nodes[b.nodes[0]], mesh.nodes[b.nodes[1]]);
            let len = (q[0] - p[0]).hypot(q[1] - p[1]);
            let nrm = [(q[1] - p[1]) / len, -(q[0] - p[0]) / len];
            let s = field.sigma[*e];
            let t = [s[0] * nrm[0] + s[2] * nrm[1], s[2] * nrm[0] + s[1] * nrm[1]];
            Some(t[0].hypot(t[1]) / reference)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_square, build_unit_cell, LatticeSpec};
    use crate::mesh::mesh;
    use approx::assert_relative_eq;

    fn sin() -> MaterialSpec {
        MaterialSpec::silicon_nitride(66e-9)
    }

    #[test]
    fn plain_square_keeps_homogeneous_stress() {
        let m = mesh(&build_square(100e-6).unwrap(), 10e-6).unwrap();
        let r = relax_stress_detailed(&m, &sin(), false).unwrap();
        for s in &r.stress.sigma {
            assert_relative_eq!(s[0], 1.27e9, max_relative = 1e-9);
            assert_relative_eq!(s[1], 1.27e9, max_relative = 1e-9);
            assert!(s[2].abs() < 1e-9 * 1.27e9);
        }
        let st = stress_stats(&r.stress);
        assert_relative_eq!(st.min_principal, 1.27e9, max_relative = 1e-9);
        assert_relative_eq!(st.max_principal, 1.27e9, max_relative = 1e-9);
        assert_eq!(st.compressive_fraction, 0.0);
    }

    #[test]
    fn unit_cell_concentrates_stress_in_tethers() {
        let g = build_unit_cell(&LatticeSpec::standard(100e-6)).unwrap();
        let m = mesh(&g, 2.5e-6).unwrap();
        let r = relax_stress_detailed(&m, &sin(), true).unwrap();
        assert!(r.residual <= 1e-10);
        let st = stress_stats(&r.stress);
        let ratio = st.max_principal / 1.27e9;
        assert!(ratio > 1.0 && ratio < 4.0, "{ratio}");
        // Traction-free rims up to discretization error.
        let tr = hole_tractions(&m, &r.stress, 1.27e9);
        let mean = tr.iter().sum::<f64>() / tr.len() as f64;
        assert!(mean < 0.25, "{mean}");
    }

    #[test]
    fn zero_prestress_gives_zero_field() {
        let g = build_unit_cell(&LatticeSpec::standard(1e-4)).unwrap();
        let m = mesh(&g, 5e-6).unwrap();
        let mat = sin().with_prestress(0.0);
        let f = relax_stress(&m, &mat, true).unwrap();
        assert!(f.sigma.iter().all(|s| s.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn periodic_flag_needs_periodic_mesh() {
        let m = mesh(&build_square(1e-4).unwrap(), 1e-5).unwrap();
        assert!(relax_stress(&m, &sin(), true).is_err());
    }
}
