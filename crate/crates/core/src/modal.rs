//! Out-of-plane eigenmodes of a stressed device, defect-mode labelling and
//! the evanescent-tail fit.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bloch::QuasiGap;
use crate::eigen::{EigenOptions, EigenPair, ShiftInvert};
use crate::error::{Error, Result};
use crate::fem::{self, DofMap};
use crate::material::MaterialSpec;
use crate::mesh::{EdgeTag, Mesh};
use crate::prestress::StressField;
use crate::recovery::{recover_curvature, RecoveryOptions};
use crate::sparse::Csr;

/// Disc used to measure how strongly a mode is confined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModalOptions {
    /// Add the thin-plate bending stiffness to the tension operator.
    pub bending: bool,
    /// Keep the bending rows of nodes on hole rims. Off by default: the rim
    /// is a free edge where the Laplacian stencil is one-sided.
    pub rim_rows: bool,
    pub recovery: RecoveryOptions,
    pub seed: u64,
}

impl Default for ModalOptions {
    fn default() -> Self {
        Self {
            bending: true,
            rim_rows: false,
            recovery: RecoveryOptions::default(),
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeResult {
    /// Hz.
    pub frequency: f64,
    /// Nodal out-of-plane shape with `max |u| = 1`, positive at the region centre.
    pub displacement: Vec<f64>,
    /// Recovered nodal Laplacian of `displacement` (1/m²).
    pub curvature: Vec<f64>,
    /// Nodes whose curvature patch had to be widened.
    pub curvature_fallback: usize,
    /// Kinetic-energy fraction inside the localization region.
    pub localization: f64,
    /// Relative eigen-residual.
    pub residual: f64,
    /// `|ω² − uᵀKu / uᵀMu| / ω²`.
    pub rayleigh_defect: f64,
}

/// Reduced stiffness and mass of the clamped device.
pub struct ModalSystem<'a> {
    mesh: &'a Mesh,
    map: DofMap<f64>,
    stiffness: Csr<f64>,
    mass: Csr<f64>,
    element_mass: Vec<[[f64; 3]; 3]>,
    opts: ModalOptions,
}

impl<'a> ModalSystem<'a> {
    pub fn new(mesh: &'a Mesh, stress: &StressField, material: &MaterialSpec, opts: &ModalOptions) -> Result<Self> {
        material.validate()?;
        if stress.len() != mesh.triangles.len() {
            return Err(Error::Domain("stress field does not belong to this mesh".into()));
        }
        let clamped = mesh.nodes_with_tag(EdgeTag::OuterClamp);
        let map: DofMap<f64> = DofMap::new(mesh, &clamped, 1, |_| 1.0);
        if map.n_reduced == 0 {
            return Err(Error::Mesh("no free nodes left after clamping".into()));
        }
        let h = material.thickness;
        let mu = material.density * h;
        let mut stiffness = map.project(&fem::tension(mesh, &stress.sigma, h));
        if opts.bending {
            let lap = map.project(&fem::laplace(mesh));
            let lumped_full = fem::lumped_mass(mesh, mu);
            let rim = mesh.physical_boundary_nodes();
            let mut lumped = vec![0.0; map.n_reduced];
            let mut active = vec![true; map.n_reduced];
            for (i, list) in map.reduce.iter().enumerate() {
                for &(j, _) in list {
                    lumped[j] += lumped_full[i];
                    active[j] &= opts.rim_rows || !rim[i];
                }
            }
            // Lumped masses carry the areal density, so the rigidity does too.
            let kb = fem::bending(&lap, &lumped, &active, material.bending_rigidity() * mu);
            stiffness = stiffness.linear_combination(1.0, &kb, 1.0);
        }
        let mass = map.project(&fem::mass(mesh, mu));
        let element_mass = (0..mesh.triangles.len())
            .map(|e| {
                let a = mesh.triangle_area(e) * mu;
                let (d, o) = (a / 6.0, a / 12.0);
                [[d, o, o], [o, d, o], [o, o, d]]
            })
            .collect();
        Ok(Self {
            mesh,
            map,
            stiffness,
            mass,
            element_mass,
            opts: *opts,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.map.n_reduced
    }

    /// All modes with frequency in `[f_lo, f_hi]` (Hz), at most `max_modes`.
    pub fn window(&self, f_lo: f64, f_hi: f64, max_modes: usize, region: &Region) -> Result<Vec<ModeResult>> {
        if !(f_lo >= 0.0 && f_hi > f_lo) {
            return Err(Error::Domain(format!("invalid frequency window [{f_lo}, {f_hi}]")));
        }
        let (lo, hi) = ((2.0 * PI * f_lo).powi(2), (2.0 * PI * f_hi).powi(2));
        let shift = (2.0 * PI * 0.5 * (f_lo + f_hi)).powi(2);
        let si = ShiftInvert::new(&self.stiffness, &self.mass, shift, false)?;
        let mut eo = EigenOptions::new(shift, max_modes.clamp(1, 16));
        eo.seed = self.opts.seed;
        let (pairs, stats) = si.window(lo, hi, max_modes, &eo)?;
        log::debug!("window solve: {} operator applications", stats.operator_applications);
        pairs.into_iter().map(|p| self.finish(p, region)).collect()
    }

    /// The `n` lowest modes.
    pub fn lowest(&self, n: usize, region: &Region) -> Result<Vec<ModeResult>> {
        // Place the shift below the spectrum, scaled by the stiffest diagonal ratio
        // of the smallest expected eigenvalue.
        let diag_k = self.stiffness.diagonal();
        let diag_m = self.mass.diagonal();
        let typical = diag_k.iter().zip(&diag_m).map(|(k, m)| k / m).fold(0.0, f64::max);
        let shift = -1e-6 * typical;
        let si = ShiftInvert::new(&self.stiffness, &self.mass, shift, true)?;
        let mut eo = EigenOptions::new(shift, n);
        eo.seed = self.opts.seed;
        let (pairs, _) = si.nearest(n, &eo)?;
        pairs.into_iter().map(|p| self.finish(p, region)).collect()
    }

    fn finish(&self, pair: EigenPair<f64>, region: &Region) -> Result<ModeResult> {
        let omega2 = pair.value.max(0.0);
        let ku = self.stiffness.quadratic_form(&pair.vector);
        let mu = self.mass.quadratic_form(&pair.vector);
        let rayleigh_defect = if omega2 > 0.0 { (omega2 - ku / mu).abs() / omega2 } else { 0.0 };
        let mut u = self.map.expand(&pair.vector);
        normalize(self.mesh, &mut u, region.center);
        let curvature = recover_curvature(self.mesh, &u, &self.opts.recovery)?;
        Ok(ModeResult {
            frequency: omega2.sqrt() / (2.0 * PI),
            localization: self.localization(&u, region),
            displacement: u,
            curvature: curvature.laplacian,
            curvature_fallback: curvature.fallback_nodes.len(),
            residual: pair.residual,
            rayleigh_defect,
        })
    }

    fn localization(&self, u: &[f64], region: &Region) -> f64 {
        localization(self.mesh, &self.element_mass, u, region)
    }
}

fn localization(mesh: &Mesh, element_mass: &[[[f64; 3]; 3]], u: &[f64], region: &Region) -> f64 {
    let mut inside = 0.0;
    let mut total = 0.0;
    for (e, t) in mesh.triangles.iter().enumerate() {
        let me = &element_mass[e];
        let mut energy = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                energy += u[t[i]] * me[i][j] * u[t[j]];
            }
        }
        total += energy;
        let c = mesh.centroid(e);
        if (c[0] - region.center[0]).hypot(c[1] - region.center[1]) <= region.radius {
            inside += energy;
        }
    }
    if total > 0.0 {
        (inside / total).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Scales to `max |u| = 1` and fixes the sign: positive at the node nearest
/// `center`, or at the largest entry when the centre sits on a nodal line.
fn normalize(mesh: &Mesh, u: &mut [f64], center: [f64; 2]) {
    let (imax, umax) = u
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |acc, (i, v)| if v.abs() > acc.1.abs() { (i, *v) } else { acc });
    if umax == 0.0 {
        return;
    }
    let nearest = (0..mesh.nodes.len())
        .min_by(|&a, &b| {
            let da = (mesh.nodes[a][0] - center[0]).hypot(mesh.nodes[a][1] - center[1]);
            let db = (mesh.nodes[b][0] - center[0]).hypot(mesh.nodes[b][1] - center[1]);
            da.total_cmp(&db)
        })
        .unwrap_or(imax);
    let reference = if u[nearest].abs() > 1e-6 * umax.abs() { u[nearest] } else { umax };
    let scale = reference.signum() / umax.abs();
    u.iter_mut().for_each(|v| *v *= scale);
}

pub fn eigenmodes(
    mesh: &Mesh,
    stress: &StressField,
    material: &MaterialSpec,
    window: (f64, f64),
    n_modes: usize,
    region: &Region,
    opts: &ModalOptions,
) -> Result<Vec<ModeResult>> {
    ModalSystem::new(mesh, stress, material, opts)?.window(window.0, window.1, n_modes, region)
}

pub fn lowest_modes(
    mesh: &Mesh,
    stress: &StressField,
    material: &MaterialSpec,
    n_modes: usize,
    region: &Region,
    opts: &ModalOptions,
) -> Result<Vec<ModeResult>> {
    ModalSystem::new(mesh, stress, material, opts)?.lowest(n_modes, region)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledMode {
    pub label: String,
    /// Index into the mode list passed to [`classify_localized`].
    pub index: usize,
}

/// `A`, `B`, …, `Z`, `AA`, `AB`, …
pub fn mode_label(mut i: usize) -> String {
    let mut s = Vec::new();
    loop {
        s.push(b'A' + (i % 26) as u8);
        if i < 26 {
            break;
        }
        i = i / 26 - 1;
    }
    s.reverse();
    String::from_utf8(s).unwrap()
}

/// Modes inside the gap whose localization reaches `threshold`, labelled by
/// ascending frequency. Without a gap nothing is labelled.
pub fn classify_localized(modes: &[ModeResult], gap: Option<&QuasiGap>, threshold: f64) -> Vec<LabeledMode> {
    let Some(gap) = gap else {
        return Vec::new();
    };
    let mut picked: Vec<usize> = (0..modes.len())
        .filter(|&i| {
            let m = &modes[i];
            m.frequency >= gap.f_low && m.frequency <= gap.f_high && m.localization >= threshold
        })
        .collect();
    picked.sort_by(|&a, &b| modes[a].frequency.total_cmp(&modes[b].frequency));
    picked
        .into_iter()
        .enumerate()
        .map(|(k, index)| LabeledMode {
            label: mode_label(k),
            index,
        })
        .collect()
}

/// Finds the triangle containing a point through a uniform bucket grid.
pub struct PointLocator<'a> {
    mesh: &'a Mesh,
    origin: [f64; 2],
    cell: f64,
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl<'a> PointLocator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &mesh.nodes {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let area = mesh.area().max(f64::MIN_POSITIVE);
        let cell = (2.0 * area / mesh.triangles.len().max(1) as f64).sqrt() * 2.0;
        let dims = [
            (((hi[0] - lo[0]) / cell).ceil() as usize).max(1),
            (((hi[1] - lo[1]) / cell).ceil() as usize).max(1),
        ];
        let mut buckets = vec![Vec::new(); dims[0] * dims[1]];
        for (e, t) in mesh.triangles.iter().enumerate() {
            let xs = t.map(|v| mesh.nodes[v][0]);
            let ys = t.map(|v| mesh.nodes[v][1]);
            let cx = |x: f64| (((x - lo[0]) / cell).floor().max(0.0) as usize).min(dims[0] - 1);
            let cy = |y: f64| (((y - lo[1]) / cell).floor().max(0.0) as usize).min(dims[1] - 1);
            let (x0, x1) = (cx(xs.iter().cloned().fold(f64::INFINITY, f64::min)), cx(xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)));
            let (y0, y1) = (cy(ys.iter().cloned().fold(f64::INFINITY, f64::min)), cy(ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max)));
            for i in x0..=x1 {
                for j in y0..=y1 {
                    buckets[j * dims[0] + i].push(e);
                }
            }
        }
        Self {
            mesh,
            origin: lo,
            cell,
            dims,
            buckets,
        }
    }

    /// Containing triangle and barycentric weights, or `None` outside the mesh.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let i = ((p[0] - self.origin[0]) / self.cell).floor();
        let j = ((p[1] - self.origin[1]) / self.cell).floor();
        if i < 0.0 || j < 0.0 || i as usize >= self.dims[0] || j as usize >= self.dims[1] {
            return None;
        }
        for &e in &self.buckets[j as usize * self.dims[0] + i as usize] {
            let q = self.mesh.triangle_points(e);
            let det = (q[1][0] - q[0][0]) * (q[2][1] - q[0][1]) - (q[2][0] - q[0][0]) * (q[1][1] - q[0][1]);
            let l1 = ((p[0] - q[0][0]) * (q[2][1] - q[0][1]) - (q[2][0] - q[0][0]) * (p[1] - q[0][1])) / det;
            let l2 = ((q[1][0] - q[0][0]) * (p[1] - q[0][1]) - (p[0] - q[0][0]) * (q[1][1] - q[0][1])) / det;
            let l0 = 1.0 - l1 - l2;
            let tol = -1e-12;
            if l0 >= tol && l1 >= tol && l2 >= tol {
                return Some((e, [l0, l1, l2]));
            }
        }
        None
    }

    pub fn interpolate(&self, field: &[f64], p: [f64; 2]) -> Option<f64> {
        let (e, w) = self.locate(p)?;
        let t = self.mesh.triangles[e];
        Some(w[0] * field[t[0]] + w[1] * field[t[1]] + w[2] * field[t[2]])
    }
}

/// Field samples along a straight cut through the membrane; points that fall
/// into holes are skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    /// Signed distance from the cut origin (m).
    pub position: Vec<f64>,
    pub value: Vec<f64>,
}

pub fn cross_section(
    mesh: &Mesh,
    field: &[f64],
    origin: [f64; 2],
    direction: [f64; 2],
    half_length: f64,
    spacing: f64,
) -> Result<CrossSection> {
    let norm = direction[0].hypot(direction[1]);
    if !(norm > 0.0 && spacing > 0.0 && half_length > 0.0) {
        return Err(Error::Domain("cross-section needs a direction, a spacing and a length".into()));
    }
    let d = [direction[0] / norm, direction[1] / norm];
    let locator = PointLocator::new(mesh);
    let n = (half_length / spacing).floor() as i64;
    let mut out = CrossSection {
        position: Vec::new(),
        value: Vec::new(),
    };
    for k in -n..=n {
        let s = k as f64 * spacing;
        if let Some(v) = locator.interpolate(field, [origin[0] + s * d[0], origin[1] + s * d[1]]) {
            out.position.push(s);
            out.value.push(v);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvanescentFit {
    /// Real wavenumber (1/m).
    pub k_re: f64,
    /// Decay constant (1/m).
    pub k_im: f64,
    pub amplitude: f64,
    /// Root-mean-square misfit relative to the largest sample.
    pub fit_rmse: f64,
    pub n_samples: usize,
}

impl EvanescentFit {
    pub fn model(&self, s: f64) -> f64 {
        evanescent(self.amplitude, self.k_re, self.k_im, s)
    }
}

fn evanescent(amplitude: f64, k_re: f64, k_im: f64, s: f64) -> f64 {
    amplitude * (-k_im * s.abs()).exp() * (k_re * s.abs()).cos()
}

/// Least-squares fit of `A·exp(−k_im|s|)·cos(k_re|s|)`, the real part of
/// `exp(i k |s|)`, to samples with `|s| ≥ min_distance`. `length_scale` sets
/// the search range: wavenumbers up to `2π·1.5/length_scale`.
pub fn fit_evanescent(section: &CrossSection, min_distance: f64, length_scale: f64, max_rmse: f64) -> Result<EvanescentFit> {
    let samples: Vec<(f64, f64)> = section
        .position
        .iter()
        .zip(&section.value)
        .filter(|(s, _)| s.abs() >= min_distance)
        .map(|(s, v)| (*s, *v))
        .collect();
    if samples.len() < 4 {
        return Err(Error::Fit(format!("only {} samples available for the decay fit", samples.len())));
    }
    let peak = samples.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::Fit("cross-section is identically zero".into()));
    }
    let unit = 2.0 * PI / length_scale;
    // Misfit with the amplitude eliminated by linear least squares.
    let misfit = |k_re: f64, k_im: f64| -> (f64, f64) {
        let (mut gg, mut gu, mut uu) = (0.0, 0.0, 0.0);
        for &(s, v) in &samples {
            let g = evanescent(1.0, k_re, k_im, s);
            gg += g * g;
            gu += g * v;
            uu += v * v;
        }
        if gg == 0.0 {
            return (uu, 0.0);
        }
        ((uu - gu * gu / gg).max(0.0), gu / gg)
    };

    let mut best = (f64::INFINITY, 0.0, 0.0);
    let (mut step_re, mut step_im) = (0.005 * unit, 0.005 * unit);
    for i in 1..=300 {
        for j in 0..=120 {
            let (kr, ki) = (i as f64 * step_re, j as f64 * step_im);
            let (r, _) = misfit(kr, ki);
            if r < best.0 {
                best = (r, kr, ki);
            }
        }
    }
    for _ in 0..30 {
        let (_, cr, ci) = best;
        for i in -5..=5 {
            for j in -5..=5 {
                let kr = cr + i as f64 * step_re / 5.0;
                let ki = (ci + j as f64 * step_im / 5.0).max(0.0);
                if kr <= 0.0 {
                    continue;
                }
                let (r, _) = misfit(kr, ki);
                if r < best.0 {
                    best = (r, kr, ki);
                }
            }
        }
        step_re /= 2.5;
        step_im /= 2.5;
    }
    let (residual, k_re, k_im) = best;
    let (_, amplitude) = misfit(k_re, k_im);
    let fit_rmse = (residual / samples.len() as f64).sqrt() / peak;
    if fit_rmse > max_rmse {
        return Err(Error::Fit(format!(
            "decay model misfit {fit_rmse:.3} exceeds {max_rmse}; the mode is not evanescently localized"
        )));
    }
    Ok(EvanescentFit {
        k_re,
        k_im,
        amplitude,
        fit_rmse,
        n_samples: samples.len(),
    })
}

/// Decay fit of a mode along the cut through `center` in `direction`.
pub fn fit_mode_decay(
    mode: &ModeResult,
    mesh: &Mesh,
    center: [f64; 2],
    direction: [f64; 2],
    lattice_constant: f64,
    min_localization: f64,
) -> Result<(EvanescentFit, CrossSection)> {
    if mode.localization < min_localization {
        return Err(Error::Fit(format!(
            "mode at {:.6e} Hz is not localized (fraction {:.3})",
            mode.frequency, mode.localization
        )));
    }
    let (lo, hi) = mesh.nodes.iter().fold(([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]), |(lo, hi), p| {
        ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])
    });
    let half = 0.5 * (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let spacing = mesh.element_size_target / 2.0;
    let section = cross_section(mesh, &mode.displacement, center, direction, half, spacing)?;
    let fit = fit_evanescent(&section, 0.0, lattice_constant, 0.25)?;
    Ok((fit, section))
}

/// Largest `|u|` over nodes within `band` of the clamped frame.
pub fn boundary_amplitude(mesh: &Mesh, u: &[f64], band: f64) -> f64 {
    let clamp = mesh.nodes_with_tag(EdgeTag::OuterClamp);
    let (lo, hi) = mesh.nodes.iter().zip(&clamp).filter(|(_, c)| **c).fold(
        ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]),
        |(lo, hi), (p, _)| ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])]),
    );
    mesh.nodes
        .iter()
        .zip(u)
        .filter(|(p, _)| {
            let d = (p[0] - lo[0]).min(hi[0] - p[0]).min(p[1] - lo[1]).min(hi[1] - p[1]);
            d <= band
        })
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max)
}

/// Number of sign changes of `u` around a circle, sampled at `samples` points
/// that fall on the membrane.
pub fn azimuthal_sign_changes(mesh: &Mesh, u: &[f64], center: [f64; 2], radius: f64, samples: usize) -> usize {
    let locator = PointLocator::new(mesh);
    let values: Vec<f64> = (0..samples)
        .filter_map(|k| {
            let t = 2.0 * PI * k as f64 / samples as f64;
            locator.interpolate(u, [center[0] + radius * t.cos(), center[1] + radius * t.sin()])
        })
        .collect();
    let peak = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let signs: Vec<f64> = values.iter().filter(|v| v.abs() > 1e-3 * peak).map(|v| v.signum()).collect();
    if signs.is_empty() {
        return 0;
    }
    (0..signs.len()).filter(|&i| signs[i] != signs[(i + 1) % signs.len()]).count()
}
