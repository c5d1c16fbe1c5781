//! Zener dissipation dilution: bending loss, stored energy and quality
//! factors of simulated modes, the analytic square-membrane reference and
//! power-law fits of quality-factor families.
//!
//! The loss per cycle of a thin film with out-of-plane shape `u` is
//!
//! ```text
//! ΔW = π E₂ h³ / (12 (1 − ν²)) ∫ (∇²u)² dA,   E₂ = E₁ / Q_int(h)
//! ```
//!
//! and `Q = 2π W / ΔW` with `W` either the tensile energy `½ uᵀ K_σ u` or the
//! maximum kinetic energy `½ ω² uᵀ M u`.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::fmt::Write as _;

use faer::linalg::solvers::SolveLstsq;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem;
use crate::material::{LossModel, MaterialSpec};
use crate::mesh::{EdgeTag, Mesh};
use crate::modal::ModeResult;
use crate::prestress::StressField;
use crate::recovery::integrated_squared;

/// Above this dilution parameter the square-membrane formula loses accuracy.
pub const LAMBDA_WARN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyMethod {
    Tension,
    Kinetic,
}

/// How the outer frame enters the loss budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClampModel {
    /// Only the resolved curvature counts; appropriate when the mode has
    /// decayed before reaching the frame.
    Soft,
    /// Adds the unresolved bending layer at the rigid frame analytically.
    BoundaryLayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QReport {
    /// Hz.
    pub frequency: f64,
    /// Stored energy for unit peak displacement (J/m²).
    pub stored_energy: f64,
    /// Loss per cycle for unit peak displacement (J/m²).
    pub loss_per_cycle: f64,
    /// Part of `loss_per_cycle` coming from the clamp boundary layer.
    pub clamp_loss: f64,
    pub q: f64,
    /// Hz.
    pub qf: f64,
    /// `Q·h/a²` (1/m).
    pub q_norm: f64,
    /// Dilution parameter, square membranes only.
    pub lambda: Option<f64>,
    /// Prefactor of the soft-clamping law, once backed out.
    pub eta: Option<f64>,
    /// Set when the loss vanishes and `q` is infinite.
    pub lossless: bool,
}

impl QReport {
    fn new(frequency: f64, w: f64, dw: f64, clamp_loss: f64, h: f64, length: f64) -> Self {
        let lossless = dw <= 0.0;
        let q = if lossless { f64::INFINITY } else { 2.0 * PI * w / dw };
        Self {
            frequency,
            stored_energy: w,
            loss_per_cycle: dw.max(0.0),
            clamp_loss,
            q,
            qf: q * frequency,
            q_norm: q * h / (length * length),
            lambda: None,
            eta: None,
            lossless,
        }
    }
}

/// Loss modulus `E₂ = E₁/Q_int(h)`.
pub fn loss_modulus(material: &MaterialSpec, loss: &LossModel) -> Result<f64> {
    Ok(material.youngs_modulus / loss.q_intrinsic(material.thickness)?)
}

fn lossy_rigidity(material: &MaterialSpec, loss: &LossModel) -> Result<f64> {
    let nu = material.poisson_ratio;
    Ok(PI * loss_modulus(material, loss)? * material.thickness.powi(3) / (12.0 * (1.0 - nu * nu)))
}

/// Bending loss per cycle from the recovered curvature (J per unit peak
/// displacement squared).
pub fn bending_loss(mode: &ModeResult, mesh: &Mesh, material: &MaterialSpec, loss: &LossModel) -> Result<f64> {
    if mode.curvature.len() != mesh.nodes.len() {
        return Err(Error::Domain(format!(
            "mode carries {} curvature values for {} nodes; recover curvature first",
            mode.curvature.len(),
            mesh.nodes.len()
        )));
    }
    Ok(lossy_rigidity(material, loss)? * integrated_squared(mesh, &mode.curvature))
}

pub fn stored_energy(
    mode: &ModeResult,
    mesh: &Mesh,
    material: &MaterialSpec,
    stress: Option<&StressField>,
    method: EnergyMethod,
) -> Result<f64> {
    let u = &mode.displacement;
    if u.len() != mesh.nodes.len() {
        return Err(Error::Domain("mode does not belong to this mesh".into()));
    }
    match method {
        EnergyMethod::Kinetic => {
            let omega = 2.0 * PI * mode.frequency;
            let m = fem::mass(mesh, material.density * material.thickness);
            Ok(0.5 * omega * omega * m.quadratic_form(u))
        }
        EnergyMethod::Tension => {
            let stress = stress.ok_or_else(|| Error::Domain("tension energy needs the stress field".into()))?;
            if stress.len() != mesh.triangles.len() {
                return Err(Error::Domain("stress field does not belong to this mesh".into()));
            }
            let k = fem::tension(mesh, &stress.sigma, material.thickness);
            Ok(0.5 * k.quadratic_form(u))
        }
    }
}

/// Slope and normal stress on one clamped boundary edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampSample {
    pub length: f64,
    /// Outward normal derivative of `u`.
    pub slope: f64,
    /// Normal stress `nᵀσn` (Pa).
    pub normal_stress: f64,
}

pub fn clamp_samples(mesh: &Mesh, u: &[f64], stress: &StressField) -> Vec<ClampSample> {
    let mut owner: HashMap<(usize, usize), usize> = HashMap::new();
    for (e, t) in mesh.triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            owner.insert((a.min(b), a.max(b)), e);
        }
    }
    let elements = fem::elements(mesh);
    mesh.boundary_edges
        .iter()
        .filter(|edge| edge.tag == EdgeTag::OuterClamp)
        .filter_map(|edge| {
            let [a, b] = edge.nodes;
            let e = *owner.get(&(a.min(b), a.max(b)))?;
            let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
            let length = (pb[0] - pa[0]).hypot(pb[1] - pa[1]);
            let mut n = [(pb[1] - pa[1]) / length, -(pb[0] - pa[0]) / length];
            let c = mesh.centroid(e);
            if (c[0] - pa[0]) * n[0] + (c[1] - pa[1]) * n[1] > 0.0 {
                n = [-n[0], -n[1]];
            }
            let t = mesh.triangles[e];
            let g = elements[e].gradient([u[t[0]], u[t[1]], u[t[2]]]);
            let s = stress.sigma[e];
            Some(ClampSample {
                length,
                slope: g[0] * n[0] + g[1] * n[1],
                normal_stress: s[0] * n[0] * n[0] + 2.0 * s[2] * n[0] * n[1] + s[1] * n[1] * n[1],
            })
        })
        .collect()
}

/// Width `h·√(E₁/(12 σ_nn (1 − ν²)))` of the bending layer at a rigid clamp.
pub fn boundary_layer_width(material: &MaterialSpec, normal_stress: f64) -> f64 {
    let nu = material.poisson_ratio;
    material.thickness * (material.youngs_modulus / (12.0 * normal_stress * (1.0 - nu * nu))).sqrt()
}

/// Loss in the bending layers along the rigid frame. Across a layer of width
/// `l` the curvature is `θ e^{−x/l}/l`, which integrates to `θ²/(2l)`.
pub fn clamp_layer_loss(
    mode: &ModeResult,
    mesh: &Mesh,
    material: &MaterialSpec,
    stress: &StressField,
    loss: &LossModel,
) -> Result<f64> {
    let c = lossy_rigidity(material, loss)?;
    let total: f64 = clamp_samples(mesh, &mode.displacement, stress)
        .iter()
        .filter(|s| s.normal_stress > 0.0)
        .map(|s| s.slope * s.slope * s.length / (2.0 * boundary_layer_width(material, s.normal_stress)))
        .sum();
    Ok(c * total)
}

/// Peak curvature at the rigid frame, `max |∂u/∂n| / l` (1/m² per unit peak
/// displacement). Zero without a frame or without tension across it.
pub fn clamp_curvature_peak(mode: &ModeResult, mesh: &Mesh, material: &MaterialSpec, stress: &StressField) -> f64 {
    clamp_samples(mesh, &mode.displacement, stress)
        .iter()
        .filter(|s| s.normal_stress > 0.0)
        .map(|s| s.slope.abs() / boundary_layer_width(material, s.normal_stress))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QOptions {
    pub energy: EnergyMethod,
    pub clamp: ClampModel,
    /// Length used for `q_norm = Q·h/a²` (m).
    pub length_scale: f64,
}

pub fn q_factor(
    mode: &ModeResult,
    mesh: &Mesh,
    material: &MaterialSpec,
    stress: &StressField,
    loss: &LossModel,
    opts: &QOptions,
) -> Result<QReport> {
    let w = stored_energy(mode, mesh, material, Some(stress), opts.energy)?;
    if !(w > 0.0) {
        return Err(Error::Domain(format!("stored energy must be positive, got {w:e}")));
    }
    let bulk = bending_loss(mode, mesh, material, loss)?;
    let clamp = match opts.clamp {
        ClampModel::Soft => 0.0,
        ClampModel::BoundaryLayer => clamp_layer_loss(mode, mesh, material, stress, loss)?,
    };
    let report = QReport::new(mode.frequency, w, bulk + clamp, clamp, material.thickness, opts.length_scale);
    if report.lossless {
        log::warn!("mode at {:.6e} Hz has no bending loss; Q reported as infinite", mode.frequency);
    }
    Ok(report)
}

/// Fundamental mode of a rigidly clamped square membrane of side `side`
/// under the homogeneous film stress.
///
/// ```text
/// λ = √(E₁/(12σ̄)) h/L,   1/Q = (2λ + 2π²λ²)/Q_int
/// ```
pub fn square_oracle(side: f64, material: &MaterialSpec, loss: &LossModel) -> Result<QReport> {
    material.validate()?;
    if !(side > 0.0 && side.is_finite()) {
        return Err(Error::Domain(format!("side length must be positive, got {side}")));
    }
    let h = material.thickness;
    let sigma = material.prestress;
    let q_int = loss.q_intrinsic(h)?;
    let lambda = (material.youngs_modulus / (12.0 * sigma)).sqrt() * h / side;
    if lambda >= LAMBDA_WARN {
        log::warn!("dilution parameter {lambda:.3} is not small; the square-membrane formula degrades");
    }
    let q = q_int / (2.0 * lambda + 2.0 * PI * PI * lambda * lambda);
    let frequency = material.membrane_wave_speed() / (2.0 * side) * 2f64.sqrt();
    // Tensile energy of sin(πx/L)·sin(πy/L) is σ̄hπ²/4.
    let w = sigma * h * PI * PI / 4.0;
    let mut report = QReport::new(frequency, w, 2.0 * PI * w / q, 2.0 * PI * w / q_int * 2.0 * lambda, h, side);
    report.lambda = Some(lambda);
    Ok(report)
}

/// Backs out `η` in `1/Q = η (E₁/σ̄)(h²/a²)/Q_int(h)` for a soft-clamped mode.
pub fn soft_clamp_model(
    report: &QReport,
    mode: &ModeResult,
    material: &MaterialSpec,
    loss: &LossModel,
    lattice_constant: f64,
    min_localization: f64,
) -> Result<f64> {
    if mode.localization < min_localization {
        return Err(Error::Domain(format!(
            "mode at {:.6e} Hz is not localized (fraction {:.3} < {min_localization})",
            mode.frequency, mode.localization
        )));
    }
    if report.lossless {
        return Err(Error::Domain("lossless mode has no soft-clamping prefactor".into()));
    }
    let h = material.thickness;
    let q_int = loss.q_intrinsic(h)?;
    Ok(q_int * material.prestress * lattice_constant * lattice_constant
        / (report.q * material.youngs_modulus * h * h))
}

/// One measured or simulated quality factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    /// Lattice constant or side length (m).
    pub a: f64,
    /// Thickness (m).
    pub h: f64,
    pub q: f64,
    pub label: String,
}

/// `Q = C_label · a^{p_a} · h^{p_h}`, with exponents only for the variables
/// that actually vary in the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub p_a: Option<f64>,
    pub p_h: Option<f64>,
    /// `ln C` per label.
    pub log_prefactors: BTreeMap<String, f64>,
    /// Root-mean-square residual of `ln Q`.
    pub rms_log_residual: f64,
    pub n_points: usize,
}

impl ScalingFit {
    pub fn predict(&self, a: f64, h: f64, label: &str) -> Option<f64> {
        let c = self.log_prefactors.get(label)?;
        Some((c + self.p_a.unwrap_or(0.0) * a.ln() + self.p_h.unwrap_or(0.0) * h.ln()).exp())
    }
}

fn distinct(values: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|x, y| ((*x - *y) / *y).abs() < 1e-9);
    v.len()
}

/// Least-squares power-law fit in log space. Labels get separate prefactors
/// and share the exponents.
pub fn fit_scaling(points: &[ScalingPoint]) -> Result<ScalingFit> {
    for p in points {
        if !(p.a > 0.0 && p.h > 0.0 && p.q > 0.0) || !(p.a.is_finite() && p.h.is_finite() && p.q.is_finite()) {
            return Err(Error::Fit(format!(
                "scaling point ({}, {}, {}) must be positive and finite",
                p.a, p.h, p.q
            )));
        }
    }
    let fit_a = distinct(points.iter().map(|p| p.a)) >= 2;
    let fit_h = distinct(points.iter().map(|p| p.h)) >= 2;
    if !fit_a && !fit_h {
        return Err(Error::Fit("neither a nor h varies; no exponent to fit".into()));
    }
    let labels: Vec<String> = points
        .iter()
        .map(|p| p.label.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let n_exp = fit_a as usize + fit_h as usize;
    let n_cols = n_exp + labels.len();
    if points.len() <= n_cols {
        return Err(Error::Fit(format!(
            "{} points cannot determine {} parameters",
            points.len(),
            n_cols
        )));
    }
    let label_col: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), n_exp + i)).collect();
    let design = Mat::<f64>::from_fn(points.len(), n_cols, |r, c| {
        let p = &points[r];
        let mut k = 0;
        if fit_a {
            if c == k {
                return p.a.ln();
            }
            k += 1;
        }
        if fit_h && c == k {
            return p.h.ln();
        }
        if c == label_col[p.label.as_str()] {
            1.0
        } else {
            0.0
        }
    });
    let qr = design.col_piv_qr();
    let r = qr.thin_R();
    let diag: Vec<f64> = (0..n_cols).map(|i| r[(i, i)].abs()).collect();
    let dmax = diag.iter().cloned().fold(0.0, f64::max);
    if diag.iter().any(|&d| !(d > 1e-10 * dmax)) {
        return Err(Error::Fit("degenerate design: exponents are not identifiable".into()));
    }
    let rhs = Mat::<f64>::from_fn(points.len(), 1, |r, _| points[r].q.ln());
    let coef = qr.solve_lstsq(&rhs);
    let mut k = 0;
    let mut next = || {
        k += 1;
        coef[(k - 1, 0)]
    };
    let p_a = fit_a.then(&mut next);
    let p_h = fit_h.then(&mut next);
    let log_prefactors: BTreeMap<String, f64> = labels.iter().map(|l| (l.clone(), coef[(label_col[l.as_str()], 0)])).collect();
    let fit = ScalingFit {
        p_a,
        p_h,
        log_prefactors,
        rms_log_residual: 0.0,
        n_points: points.len(),
    };
    let ss: f64 = points
        .iter()
        .map(|p| (fit.predict(p.a, p.h, &p.label).unwrap().ln() - p.q.ln()).powi(2))
        .sum();
    Ok(ScalingFit {
        rms_log_residual: (ss / points.len() as f64).sqrt(),
        ..fit
    })
}

const LENGTH_UNITS: [(&str, f64); 4] = [("m", 1.0), ("mm", 1e-3), ("um", 1e-6), ("nm", 1e-9)];

fn unit_factor(column: &str, base: &str) -> Option<f64> {
    let suffix = column.strip_prefix(base)?.strip_prefix('_')?;
    LENGTH_UNITS.iter().find(|(u, _)| *u == suffix).map(|(_, f)| *f)
}

/// Reads a whitespace- or comma-separated table with a header naming the
/// columns, e.g.
///
/// ```text
/// # a_um  h_nm  q       label
/// 160     66    2.1e7   A
/// ```
///
/// Lengths carry their unit in the column name (`m`, `mm`, `um`, `nm`); the
/// `label` column is optional. Lines starting with `#` after the header and
/// blank lines are ignored.
pub fn parse_scaling_table(text: &str) -> Result<Vec<ScalingPoint>> {
    let mut header: Option<(usize, f64, usize, f64, usize, Option<usize>)> = None;
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let mut line = raw.trim();
        let commented = line.starts_with('#');
        if commented {
            line = line.trim_start_matches('#').trim();
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        let Some((ia, fa, ih, fh, iq, il)) = header else {
            if commented && !fields.iter().any(|f| unit_factor(f, "a").is_some()) {
                continue;
            }
            let mut a = None;
            let mut h = None;
            let mut q = None;
            let mut label = None;
            for (c, name) in fields.iter().enumerate() {
                let lower = name.to_ascii_lowercase();
                if let Some(f) = unit_factor(&lower, "a") {
                    a = Some((c, f));
                } else if let Some(f) = unit_factor(&lower, "h") {
                    h = Some((c, f));
                } else if lower == "q" {
                    q = Some(c);
                } else if lower == "label" {
                    label = Some(c);
                } else {
                    return Err(Error::parse(line_no, format!("unknown column '{name}'")));
                }
            }
            let (Some((ia, fa)), Some((ih, fh)), Some(iq)) = (a, h, q) else {
                return Err(Error::parse(line_no, "header must name a_<unit>, h_<unit> and q columns"));
            };
            header = Some((ia, fa, ih, fh, iq, label));
            continue;
        };
        if commented {
            continue;
        }
        let width = 1 + [ia, ih, iq, il.unwrap_or(0)].into_iter().max().unwrap_or(0);
        if fields.len() != width {
            return Err(Error::parse(line_no, format!("expected {width} fields, found {}", fields.len())));
        }
        let number = |c: usize, what: &str| -> Result<f64> {
            let v: f64 = fields[c]
                .parse()
                .map_err(|_| Error::parse(line_no, format!("{what} '{}' is not a number", fields[c])))?;
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(Error::parse(line_no, format!("{what} must be positive and finite, got {v}")))
            }
        };
        points.push(ScalingPoint {
            a: number(ia, "a")? * fa,
            h: number(ih, "h")? * fh,
            q: number(iq, "q")?,
            label: il.map(|c| fields[c]).filter(|l| *l != "-").unwrap_or_default().to_string(),
        });
    }
    if header.is_none() {
        return Err(Error::parse(0, "missing header line"));
    }
    Ok(points)
}

pub fn write_scaling_table(points: &[ScalingPoint]) -> String {
    let mut out = String::from("# a_um h_nm q label\n");
    for p in points {
        let label = if p.label.is_empty() { "-" } else { p.label.as_str() };
        let _ = writeln!(out, "{:.6} {:.6} {:.6e} {}", p.a * 1e6, p.h * 1e9, p.q, label);
    }
    out
}
