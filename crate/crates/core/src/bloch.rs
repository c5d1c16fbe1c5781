//! Phonon bands of a stressed periodic unit cell and the out-of-plane
//! quasi-bandgap.
//!
//! Out-of-plane and in-plane motion are solved as separate operators, so the
//! polarization of every band is known by construction.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{EigenOptions, ShiftInvert};
use crate::error::{Error, Result};
use crate::fem::{self, DofMap};
use crate::material::MaterialSpec;
use crate::mesh::Mesh;
use crate::prestress::StressField;
use crate::sparse::{Csr, Scalar};

/// Sampled path Γ → M → K → Γ through the hexagonal Brillouin zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KPath {
    pub points: Vec<[f64; 2]>,
    /// Cumulative path length (1/m).
    pub arclength: Vec<f64>,
    /// `(index, label)` of the symmetry points.
    pub labels: Vec<(usize, String)>,
}

impl KPath {
    /// Symmetry points of the honeycomb lattice with `a1 = (a, 0)`.
    pub fn symmetry_points(a: f64) -> [(&'static str, [f64; 2]); 3] {
        [
            ("Γ", [0.0, 0.0]),
            ("M", [PI / a, PI / (3f64.sqrt() * a)]),
            ("K", [4.0 * PI / (3.0 * a), 0.0]),
        ]
    }

    pub fn hexagonal(a: f64, per_segment: usize) -> Result<Self> {
        if !(a > 0.0) || per_segment == 0 {
            return Err(Error::Domain("k-path needs a > 0 and at least one point per segment".into()));
        }
        let [g, m, k] = Self::symmetry_points(a);
        let corners = [g, m, k, g];
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for s in 0..3 {
            let (p, q) = (corners[s].1, corners[s + 1].1);
            labels.push((points.len(), corners[s].0.to_string()));
            for i in 0..per_segment {
                let t = i as f64 / per_segment as f64;
                points.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
        labels.push((points.len(), "Γ".to_string()));
        points.push([0.0, 0.0]);
        let mut arclength = vec![0.0];
        for w in points.windows(2) {
            let d = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            arclength.push(arclength.last().unwrap() + d);
        }
        Ok(Self {
            points,
            arclength,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Linear interpolation between samples `i` and `i + 1`.
    fn between(&self, i: usize, t: f64) -> [f64; 2] {
        let (p, q) = (self.points[i], self.points[i + 1]);
        [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarization {
    OutOfPlane,
    InPlane,
}

impl Polarization {
    pub fn as_str(&self) -> &'static str {
        match self {
            Polarization::OutOfPlane => "out_of_plane",
            Polarization::InPlane => "in_plane",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuasiGap {
    pub f_low: f64,
    pub f_high: f64,
    pub center: f64,
    pub relative_width: f64,
    /// Zero-based index of the out-of-plane band below the gap.
    pub band_below: usize,
    /// Number of in-plane band samples that fall inside the gap.
    pub in_plane_samples_inside: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandDiagram {
    pub kpath: KPath,
    /// Out-of-plane frequencies (Hz) per k point, ascending.
    pub out_of_plane: Vec<Vec<f64>>,
    /// In-plane frequencies (Hz) per k point, ascending; empty when skipped.
    pub in_plane: Vec<Vec<f64>>,
    pub gap: Option<QuasiGap>,
    /// Worst relative eigen-residual over all solves.
    pub max_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochOptions {
    pub n_bands: usize,
    pub in_plane: bool,
    /// Include the thin-plate bending term in the out-of-plane operator.
    pub bending: bool,
    /// Golden-section iterations used to sharpen each gap edge; 0 disables.
    pub refine_iterations: usize,
}

impl Default for BlochOptions {
    fn default() -> Self {
        Self {
            n_bands: 8,
            in_plane: true,
            bending: false,
            refine_iterations: 24,
        }
    }
}

/// Real-space operators of a periodic cell, reused for every wavevector.
pub struct BlochOperators<'a> {
    mesh: &'a Mesh,
    lattice: [[f64; 2]; 2],
    tension: Csr<f64>,
    mass: Csr<f64>,
    laplace: Csr<f64>,
    lumped: Vec<f64>,
    rim: Vec<bool>,
    rigidity: f64,
    in_plane_stiffness: Csr<f64>,
    in_plane_mass: Csr<f64>,
    /// Eigenvalue scales used to place the shifts below the spectra.
    scale_out: f64,
    scale_in: f64,
}

impl<'a> BlochOperators<'a> {
    pub fn new(mesh: &'a Mesh, stress: &StressField, material: &MaterialSpec) -> Result<Self> {
        material.validate()?;
        let lattice = mesh
            .lattice_vectors
            .ok_or_else(|| Error::Mesh("band structure needs a mesh with periodic pairing".into()))?;
        if mesh.periodic_images.is_empty() {
            return Err(Error::Mesh("periodic mesh carries no image pairs".into()));
        }
        if stress.len() != mesh.triangles.len() {
            return Err(Error::Domain("stress field does not belong to this mesh".into()));
        }
        let h = material.thickness;
        let mu = material.density * h;
        let mass = fem::mass(mesh, mu);
        let geometric = fem::tension(mesh, &stress.sigma, h);
        let elastic = fem::plane_stress(mesh, material.youngs_modulus, material.poisson_ratio, h);
        let in_plane_stiffness = elastic.linear_combination(1.0, &fem::expand_vector(&geometric), 1.0);
        let a = lattice[0][0].hypot(lattice[0][1]);
        let k_ref = 2.0 * PI / a;
        let c_in = (material.youngs_modulus / (material.density * (1.0 - material.poisson_ratio.powi(2)))).sqrt();
        Ok(Self {
            mesh,
            lattice,
            tension: geometric,
            in_plane_mass: fem::expand_vector(&mass),
            mass,
            laplace: fem::laplace(mesh),
            lumped: fem::lumped_mass(mesh, mu),
            rim: mesh.physical_boundary_nodes(),
            // Lumped masses carry the areal density, so the rigidity does too.
            rigidity: material.bending_rigidity() * mu,
            in_plane_stiffness,
            scale_out: (material.membrane_wave_speed() * k_ref).powi(2),
            scale_in: (c_in * k_ref).powi(2),
        })
    }

    fn dof_map(&self, k: [f64; 2], components: usize) -> DofMap<Complex64> {
        let [a1, a2] = self.lattice;
        let clamped = vec![false; self.mesh.nodes.len()];
        DofMap::new(self.mesh, &clamped, components, |s| {
            let r = [
                s[0] as f64 * a1[0] + s[1] as f64 * a2[0],
                s[0] as f64 * a1[1] + s[1] as f64 * a2[1],
            ];
            Complex64::from_polar(1.0, k[0] * r[0] + k[1] * r[1])
        })
    }

    /// Lowest `n` out-of-plane frequencies (Hz) and the worst residual.
    pub fn out_of_plane(&self, k: [f64; 2], n: usize, bending: bool) -> Result<(Vec<f64>, f64)> {
        let map = self.dof_map(k, 1);
        let mut stiff = map.project(&fem::promote::<Complex64>(&self.tension));
        if bending {
            let lap = map.project(&fem::promote::<Complex64>(&self.laplace));
            let mut lumped = vec![0.0; map.n_reduced];
            let mut active = vec![true; map.n_reduced];
            for (i, list) in map.reduce.iter().enumerate() {
                for &(j, _) in list {
                    lumped[j] += self.lumped[i];
                    if self.rim[i] {
                        active[j] = false;
                    }
                }
            }
            let kb = fem::bending(&lap, &lumped, &active, self.rigidity);
            stiff = stiff.linear_combination(Complex64::from_f64(1.0), &kb, Complex64::from_f64(1.0));
        }
        let mass = map.project(&fem::promote::<Complex64>(&self.mass));
        solve_lowest(&stiff, &mass, n, -0.01 * self.scale_out)
    }

    /// Lowest `n` in-plane frequencies (Hz) and the worst residual.
    pub fn in_plane(&self, k: [f64; 2], n: usize) -> Result<(Vec<f64>, f64)> {
        let map = self.dof_map(k, 2);
        let stiff = map.project(&fem::promote::<Complex64>(&self.in_plane_stiffness));
        let mass = map.project(&fem::promote::<Complex64>(&self.in_plane_mass));
        solve_lowest(&stiff, &mass, n, -0.01 * self.scale_in)
    }
}

fn solve_lowest(k: &Csr<Complex64>, m: &Csr<Complex64>, n: usize, shift: f64) -> Result<(Vec<f64>, f64)> {
    let si = ShiftInvert::new(k, m, shift, true)?;
    let (pairs, _) = si.nearest(n, &EigenOptions::new(shift, n))?;
    let residual = pairs.iter().map(|p| p.residual).fold(0.0, f64::max);
    let freqs = pairs.iter().map(|p| p.value.max(0.0).sqrt() / (2.0 * PI)).collect();
    Ok((freqs, residual))
}

pub fn band_structure(
    mesh: &Mesh,
    stress: &StressField,
    material: &MaterialSpec,
    kpath: &KPath,
    opts: &BlochOptions,
) -> Result<BandDiagram> {
    let ops = BlochOperators::new(mesh, stress, material)?;
    let solved: Vec<Result<(Vec<f64>, Vec<f64>, f64)>> = kpath
        .points
        .par_iter()
        .map(|&k| {
            let (oop, r1) = ops.out_of_plane(k, opts.n_bands, opts.bending)?;
            let (ip, r2) = if opts.in_plane {
                ops.in_plane(k, opts.n_bands)?
            } else {
                (Vec::new(), 0.0)
            };
            Ok((oop, ip, r1.max(r2)))
        })
        .collect();
    let mut diagram = BandDiagram {
        kpath: kpath.clone(),
        out_of_plane: Vec::with_capacity(kpath.len()),
        in_plane: Vec::with_capacity(kpath.len()),
        gap: None,
        max_residual: 0.0,
    };
    for r in solved {
        let (oop, ip, res) = r?;
        diagram.out_of_plane.push(oop);
        diagram.in_plane.push(ip);
        diagram.max_residual = diagram.max_residual.max(res);
    }
    diagram.gap = find_quasi_gap(&diagram);
    if let (Some(gap), true) = (diagram.gap, opts.refine_iterations > 0) {
        diagram.gap = Some(refine_gap(&ops, &diagram, gap, opts)?);
    }
    Ok(diagram)
}

/// Widest interval between consecutive out-of-plane bands that no sample of
/// either band enters. In-plane bands are counted but never close a gap.
pub fn find_quasi_gap(diagram: &BandDiagram) -> Option<QuasiGap> {
    let n_bands = diagram.out_of_plane.iter().map(|b| b.len()).min()?;
    let mut best: Option<QuasiGap> = None;
    for b in 0..n_bands.saturating_sub(1) {
        let low = diagram.out_of_plane.iter().map(|f| f[b]).fold(f64::NEG_INFINITY, f64::max);
        let high = diagram.out_of_plane.iter().map(|f| f[b + 1]).fold(f64::INFINITY, f64::min);
        if high <= low {
            continue;
        }
        if best.is_none_or(|g| high - low > g.f_high - g.f_low) {
            best = Some(make_gap(diagram, low, high, b));
        }
    }
    best
}

fn make_gap(diagram: &BandDiagram, low: f64, high: f64, band_below: usize) -> QuasiGap {
    let center = 0.5 * (low + high);
    QuasiGap {
        f_low: low,
        f_high: high,
        center,
        relative_width: (high - low) / center,
        band_below,
        in_plane_samples_inside: diagram.in_plane.iter().flatten().filter(|f| **f > low && **f < high).count(),
    }
}

/// Sharpens the gap edges by golden-section search along the path segments
/// adjacent to the sampled extrema.
fn refine_gap(ops: &BlochOperators, diagram: &BandDiagram, gap: QuasiGap, opts: &BlochOptions) -> Result<QuasiGap> {
    let b = gap.band_below;
    let path = &diagram.kpath;
    let eval = |k: [f64; 2], band: usize| -> Result<f64> { Ok(ops.out_of_plane(k, band + 1, opts.bending)?.0[band]) };
    let values: Vec<f64> = diagram.out_of_plane.iter().map(|f| f[b]).collect();
    let above: Vec<f64> = diagram.out_of_plane.iter().map(|f| f[b + 1]).collect();
    let arg = |v: &[f64], better: &dyn Fn(f64, f64) -> bool| {
        let mut best = 0;
        for i in 1..v.len() {
            if better(v[i], v[best]) {
                best = i;
            }
        }
        best
    };
    let i_low = arg(&values, &|x, y| x > y);
    let i_high = arg(&above, &|x, y| x < y);

    let mut low = gap.f_low;
    for seg in [i_low.wrapping_sub(1), i_low] {
        if seg + 1 < path.len() {
            let (_, v) = golden(|t| eval(path.between(seg, t), b).map(|f| -f), opts.refine_iterations)?;
            low = low.max(-v);
        }
    }
    let mut high = gap.f_high;
    for seg in [i_high.wrapping_sub(1), i_high] {
        if seg + 1 < path.len() {
            let (_, v) = golden(|t| eval(path.between(seg, t), b + 1), opts.refine_iterations)?;
            high = high.min(v);
        }
    }
    if high <= low {
        return Ok(gap);
    }
    Ok(make_gap(diagram, low, high, b))
}

/// Minimizes `f` on `[0, 1]`, including both endpoints as candidates.
fn golden(f: impl Fn(f64) -> Result<f64>, iterations: usize) -> Result<(f64, f64)> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..iterations {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    let mut best = if fc < fd { (c, fc) } else { (d, fd) };
    for t in [0.0, 1.0] {
        let v = f(t)?;
        if v < best.1 {
            best = (t, v);
        }
    }
    Ok(best)
}

/// Columnar export: `k_arclength band frequency_hz polarization`.
pub fn to_columns(diagram: &BandDiagram) -> String {
    let mut out = String::from("# k_arclength_per_m band frequency_hz polarization\n");
    for (pol, bands) in [
        (Polarization::OutOfPlane, &diagram.out_of_plane),
        (Polarization::InPlane, &diagram.in_plane),
    ] {
        for (i, freqs) in bands.iter().enumerate() {
            for (b, f) in freqs.iter().enumerate() {
                let _ = writeln!(out, "{:.9e} {} {:.9e} {}", diagram.kpath.arclength[i], b, f, pol.as_str());
            }
        }
    }
    out
}

/// Folded free-membrane dispersion `c|k + G| / 2π`, lowest `n` values.
pub fn free_membrane_bands(k: [f64; 2], a: f64, wave_speed: f64, n: usize) -> Vec<f64> {
    let b1 = [2.0 * PI / a, -2.0 * PI / (3f64.sqrt() * a)];
    let b2 = [0.0, 4.0 * PI / (3f64.sqrt() * a)];
    let mut f = Vec::new();
    for i in -6i32..=6 {
        for j in -6i32..=6 {
            let g = [i as f64 * b1[0] + j as f64 * b2[0], i as f64 * b1[1] + j as f64 * b2[1]];
            f.push(wave_speed * (k[0] + g[0]).hypot(k[1] + g[1]) / (2.0 * PI));
        }
    }
    f.sort_by(f64::total_cmp);
    f.truncate(n);
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn path_endpoints() {
        let a = 2.0;
        let p = KPath::hexagonal(a, 4).unwrap();
        assert_eq!(p.len(), 13);
        assert_eq!(p.points[0], [0.0, 0.0]);
        assert_eq!(*p.points.last().unwrap(), [0.0, 0.0]);
        let m = p.points[4];
        assert_relative_eq!(m[0].hypot(m[1]), 2.0 * PI / (3f64.sqrt() * a), max_relative = 1e-12);
        let k = p.points[8];
        assert_relative_eq!(k[0], 4.0 * PI / (3.0 * a), max_relative = 1e-12);
        let labels: Vec<&str> = p.labels.iter().map(|l| l.1.as_str()).collect();
        assert_eq!(labels, ["Γ", "M", "K", "Γ"]);
    }

    fn synthetic(bands: Vec<Vec<f64>>) -> BandDiagram {
        let n = bands.len();
        BandDiagram {
            kpath: KPath {
                points: vec![[0.0, 0.0]; n],
                arclength: (0..n).map(|i| i as f64).collect(),
                labels: vec![],
            },
            in_plane: vec![vec![2.5]; n],
            out_of_plane: bands,
            gap: None,
            max_residual: 0.0,
        }
    }

    #[test]
    fn constructed_gap_is_found() {
        let d = synthetic(vec![vec![0.0, 3.0, 5.0], vec![1.0, 4.0, 6.0], vec![2.0, 3.5, 7.0]]);
        let g = find_quasi_gap(&d).unwrap();
        assert_eq!((g.f_low, g.f_high, g.band_below), (2.0, 3.0, 0));
        assert_eq!(g.in_plane_samples_inside, 3);
        assert_relative_eq!(g.relative_width, 1.0 / 2.5);
    }

    #[test]
    fn overlapping_bands_have_no_gap() {
        let d = synthetic(vec![vec![0.0, 2.0], vec![2.5, 3.0], vec![1.0, 1.5]]);
        assert!(find_quasi_gap(&d).is_none());
    }

    #[test]
    fn golden_finds_interior_minimum() {
        let (t, v) = golden(|t| Ok((t - 0.3) * (t - 0.3) + 1.0), 40).unwrap();
        assert_relative_eq!(t, 0.3, epsilon = 1e-6);
        assert_relative_eq!(v, 1.0, epsilon = 1e-12);
    }
}
