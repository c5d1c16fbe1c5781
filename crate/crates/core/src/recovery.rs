//! Nodal second-derivative recovery for P1 fields by local quadratic
//! least-squares patches.

use faer::linalg::solvers::SolveLstsq;
use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem;
use crate::mesh::Mesh;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curvature {
    /// Nodal `∂²u/∂x² + ∂²u/∂y²` (1/m² per unit displacement).
    pub laplacian: Vec<f64>,
    /// Nodes whose first patch was too small or ill-conditioned and were fitted
    /// on a larger one.
    pub fallback_nodes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryOptions {
    /// Minimum number of points in a patch before it is widened.
    pub min_points: usize,
    /// Ratio of smallest to largest R-diagonal below which a patch counts as
    /// ill-conditioned.
    pub min_conditioning: f64,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self {
            min_points: 12,
            min_conditioning: 1e-6,
        }
    }
}

/// Quadratic fit `u ≈ c₀ + c₁x + c₂y + c₃x² + c₄xy + c₅y²` around each node;
/// the Laplacian is `2c₃ + 2c₅`. Patches of 15 points or more also carry the
/// cubic terms, which removes the leading truncation error on irregular
/// patches without changing the Laplacian at the node. Patches grow ring by ring until they are big
/// enough and well-conditioned; nodes that needed more than the second ring
/// are reported.
pub fn recover_curvature(mesh: &Mesh, u: &[f64], opts: &RecoveryOptions) -> Result<Curvature> {
    if u.len() != mesh.nodes.len() {
        return Err(Error::Domain("field length does not match the mesh".into()));
    }
    let adjacency = mesh.node_neighbors();
    let results: Vec<Result<(f64, bool)>> = (0..mesh.nodes.len())
        .into_par_iter()
        .map(|v| node_laplacian(mesh, u, &adjacency, v, opts))
        .collect();
    let mut laplacian = Vec::with_capacity(u.len());
    let mut fallback_nodes = Vec::new();
    for (v, r) in results.into_iter().enumerate() {
        let (lap, widened) = r?;
        laplacian.push(lap);
        if widened {
            fallback_nodes.push(v);
        }
    }
    Ok(Curvature {
        laplacian,
        fallback_nodes,
    })
}

fn node_laplacian(mesh: &Mesh, u: &[f64], adjacency: &[Vec<usize>], v: usize, opts: &RecoveryOptions) -> Result<(f64, bool)> {
    let mut patch = vec![v];
    let mut frontier = vec![v];
    let mut seen = std::collections::HashSet::from([v]);
    for ring in 1..=4 {
        let mut next = Vec::new();
        for &w in &frontier {
            for &x in &adjacency[w] {
                if seen.insert(x) {
                    next.push(x);
                }
            }
        }
        next.sort_unstable();
        patch.extend(&next);
        frontier = next;
        if patch.len() >= opts.min_points.max(6) {
            if let Some(lap) = fit(mesh, u, v, &patch, opts) {
                return Ok((lap, ring > 2));
            }
        }
        if frontier.is_empty() {
            break;
        }
    }
    Err(Error::Domain(format!("no well-posed curvature patch around node {v}")))
}

fn fit(mesh: &Mesh, u: &[f64], v: usize, patch: &[usize], opts: &RecoveryOptions) -> Option<f64> {
    let o = mesh.nodes[v];
    let scale = patch
        .iter()
        .map(|&w| (mesh.nodes[w][0] - o[0]).hypot(mesh.nodes[w][1] - o[1]))
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    let terms = if patch.len() >= 15 { 10 } else { 6 };
    let a = Mat::<f64>::from_fn(patch.len(), terms, |r, c| {
        let p = mesh.nodes[patch[r]];
        let (x, y) = ((p[0] - o[0]) / scale, (p[1] - o[1]) / scale);
        [1.0, x, y, x * x, x * y, y * y, x * x * x, x * x * y, x * y * y, y * y * y][c]
    });
    let qr = a.col_piv_qr();
    let r = qr.thin_R();
    let diag: Vec<f64> = (0..terms).map(|i| r[(i, i)].abs()).collect();
    let dmax = diag.iter().cloned().fold(0.0, f64::max);
    let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(dmin > opts.min_conditioning * dmax) {
        return None;
    }
    let b = Mat::<f64>::from_fn(patch.len(), 1, |r, _| u[patch[r]]);
    let c = qr.solve_lstsq(&b);
    Some(2.0 * (c[(3, 0)] + c[(5, 0)]) / (scale * scale))
}

/// `∫ (Δu)² dA` with the nodal Laplacian interpolated linearly.
pub fn integrated_squared(mesh: &Mesh, laplacian: &[f64]) -> f64 {
    fem::mass(mesh, 1.0).quadratic_form(laplacian)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_square;
    use crate::mesh::mesh;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn plane_has_zero_curvature() {
        let m = mesh(&build_square(1.0).unwrap(), 0.05).unwrap();
        let u: Vec<f64> = m.nodes.iter().map(|p| 0.3 + 2.0 * p[0] - p[1]).collect();
        let c = recover_curvature(&m, &u, &RecoveryOptions::default()).unwrap();
        assert!(c.laplacian.iter().all(|l| l.abs() < 1e-8));
    }

    #[test]
    fn quadratic_is_exact() {
        let m = mesh(&build_square(1.0).unwrap(), 0.05).unwrap();
        let u: Vec<f64> = m.nodes.iter().map(|p| 3.0 * p[0] * p[0] - p[0] * p[1] + 0.5 * p[1] * p[1]).collect();
        let c = recover_curvature(&m, &u, &RecoveryOptions::default()).unwrap();
        assert!(c.laplacian.iter().all(|l| (l - 7.0).abs() < 1e-8));
    }

    #[test]
    fn sine_product_laplacian() {
        let l = 1.0;
        let m = mesh(&build_square(l).unwrap(), l / 60.0).unwrap();
        let k = PI / l;
        // Square is centred on the origin.
        let shape = |p: [f64; 2]| (k * (p[0] + 0.5)).sin() * (k * (p[1] + 0.5)).sin();
        let u: Vec<f64> = m.nodes.iter().map(|p| shape(*p)).collect();
        let c = recover_curvature(&m, &u, &RecoveryOptions::default()).unwrap();
        for (p, lap) in m.nodes.iter().zip(&c.laplacian) {
            if p[0].abs() < 0.3 && p[1].abs() < 0.3 {
                let exact = -2.0 * k * k * shape(*p);
                assert!((lap - exact).abs() < 0.02 * exact.abs(), "{lap} vs {exact}");
            }
        }
        let integral = integrated_squared(&m, &c.laplacian);
        assert_relative_eq!(integral, PI.powi(4) / (l * l), max_relative = 0.02);
    }
}
