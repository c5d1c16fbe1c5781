//! Stage functions and the full single-device pipeline
//! mesh → prestress → bands → modes → Q → figures of merit.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use softclamp::bloch::{band_structure, BandDiagram, BlochOptions, KPath, QuasiGap};
use softclamp::dissipation::{q_factor, soft_clamp_model, square_oracle, QOptions, QReport};
use softclamp::fom::{effective_mass, room_and_cryo, FiguresOfMerit};
use softclamp::geometry::DeviceGeometry;
use softclamp::mesh::{mesh, Mesh};
use softclamp::modal::{
    azimuthal_sign_changes, boundary_amplitude, classify_localized, cross_section, fit_evanescent, CrossSection,
    EvanescentFit, LabeledMode, ModalOptions, ModalSystem, ModeResult, Region,
};
use softclamp::prestress::{relax_stress, stress_stats, StressField, StressStats};

use crate::config::{GeometryConfig, RunConfig};
use crate::error::{CliError, CliResult};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Largest relative misfit accepted by the decay fit.
pub const DECAY_MAX_RMSE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshSummary {
    pub nodes: usize,
    pub triangles: usize,
    pub element_size: f64,
    pub min_quality: f64,
    pub area: f64,
}

impl MeshSummary {
    pub fn of(mesh: &Mesh) -> Self {
        Self {
            nodes: mesh.nodes.len(),
            triangles: mesh.triangles.len(),
            element_size: mesh.element_size_target,
            min_quality: mesh.min_quality(),
            area: mesh.area(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRecord {
    pub index: usize,
    /// Letter of a localized in-gap mode, by ascending frequency.
    pub label: Option<String>,
    pub frequency_hz: f64,
    /// `f·a` (m/s).
    pub f_times_a: f64,
    pub localization: f64,
    pub residual: f64,
    pub rayleigh_defect: f64,
    pub curvature_fallback: usize,
    /// Peak-normalized effective mass (kg).
    pub effective_mass_kg: f64,
    /// Sign changes of the shape around a circle of radius `a/2` about the defect centre.
    pub azimuthal_sign_changes: Option<usize>,
    /// Largest `|u|` within `a/2` of the clamp, relative to the peak.
    pub boundary_amplitude: f64,
    /// `None` for lossless modes.
    pub q: Option<QReport>,
    /// Soft-clamping prefactor of localized modes.
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRecord {
    pub label: String,
    pub direction_deg: f64,
    /// Start of the fitted tail (m).
    pub min_distance: f64,
    pub section: CrossSection,
    pub fit: Option<EvanescentFit>,
    /// `k_re·a/2π` and `k_im·a/2π`.
    pub k_over_2pi_a: Option<[f64; 2]>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FomRecord {
    pub label: String,
    /// Room-temperature and cryogenic columns.
    pub columns: Vec<FiguresOfMerit>,
}

/// Everything a run produces. Numerical fields are reproducible bit for bit;
/// `timings_s` is not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub tool_version: String,
    pub config: RunConfig,
    pub mesh: Option<MeshSummary>,
    pub stress: Option<StressStats>,
    /// Unit-cell bands at the band-structure resolution.
    pub bands: Option<BandDiagram>,
    /// Gap of the unit cell meshed like the device; sets the eigen window.
    pub window_gap: Option<QuasiGap>,
    pub window_hz: Option<[f64; 2]>,
    pub modes: Vec<ModeRecord>,
    pub decay: Option<DecayRecord>,
    /// Closed-form square-membrane reference.
    pub oracle: Option<QReport>,
    pub fom: Vec<FomRecord>,
    pub timings_s: BTreeMap<String, f64>,
}

impl RunRecord {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            config_hash: config.hash(),
            tool_version: TOOL_VERSION.into(),
            config: config.clone(),
            mesh: None,
            stress: None,
            bands: None,
            window_gap: None,
            window_hz: None,
            modes: Vec::new(),
            decay: None,
            oracle: None,
            fom: Vec::new(),
            timings_s: BTreeMap::new(),
        }
    }

    pub fn labeled(&self) -> impl Iterator<Item = &ModeRecord> {
        self.modes.iter().filter(|m| m.label.is_some())
    }

    pub fn mode(&self, label: &str) -> Option<&ModeRecord> {
        self.modes.iter().find(|m| m.label.as_deref() == Some(label))
    }
}

fn timed<T>(timings: &mut BTreeMap<String, f64>, stage: &str, f: impl FnOnce() -> CliResult<T>) -> CliResult<T> {
    let t0 = Instant::now();
    let out = f();
    let dt = t0.elapsed().as_secs_f64();
    log::info!("{stage}: {dt:.2} s");
    timings.insert(stage.into(), dt);
    out
}

pub fn stage_mesh(config: &RunConfig) -> CliResult<(DeviceGeometry, Mesh)> {
    let geometry = config.geometry()?;
    let size = config.solver.element_size_ratio * config.length_scale();
    let m = mesh(&geometry, size).map_err(|e| CliError::core("mesh", e))?;
    log::info!("mesh: {} nodes, {} triangles", m.nodes.len(), m.triangles.len());
    Ok((geometry, m))
}

pub fn stage_prestress(config: &RunConfig, mesh: &Mesh) -> CliResult<StressField> {
    relax_stress(mesh, &config.material.spec(), mesh.is_periodic()).map_err(|e| CliError::core("prestress", e))
}

/// Band diagram of the unit cell meshed at `element_size_ratio·a`. `None` for squares.
pub fn stage_bands(config: &RunConfig, element_size_ratio: f64) -> CliResult<Option<BandDiagram>> {
    let Some(cell) = config.unit_cell()? else {
        return Ok(None);
    };
    let a = config.length_scale();
    let m = mesh(&cell, element_size_ratio * a).map_err(|e| CliError::core("bands", e))?;
    let material = config.material.spec();
    let stress = relax_stress(&m, &material, true).map_err(|e| CliError::core("bands", e))?;
    let kpath = KPath::hexagonal(a, config.solver.kpoints_per_segment).map_err(|e| CliError::core("bands", e))?;
    let opts = BlochOptions {
        n_bands: config.solver.n_bands,
        in_plane: config.solver.in_plane_bands,
        ..BlochOptions::default()
    };
    let diagram = band_structure(&m, &stress, &material, &kpath, &opts).map_err(|e| CliError::core("bands", e))?;
    match &diagram.gap {
        Some(g) => log::info!(
            "quasi-gap {:.4}–{:.4} MHz ({:.1}% wide)",
            g.f_low / 1e6,
            g.f_high / 1e6,
            100.0 * g.relative_width
        ),
        None => log::warn!("no out-of-plane quasi-gap found"),
    }
    Ok(Some(diagram))
}

/// Eigenmodes of the device and their labels.
pub struct ModeStage {
    pub modes: Vec<ModeResult>,
    pub labels: Vec<LabeledMode>,
    /// Gap used for classification.
    pub gap: Option<QuasiGap>,
    pub window_hz: Option<[f64; 2]>,
}

pub fn localization_region(config: &RunConfig) -> Region {
    let radius = match config.geometry {
        GeometryConfig::Lattice(_) => config.solver.localization_radius_ratio * config.length_scale(),
        // The whole membrane.
        GeometryConfig::Square(_) => config.length_scale(),
    };
    Region {
        center: [0.0, 0.0],
        radius,
    }
}

pub fn modal_options(config: &RunConfig) -> ModalOptions {
    ModalOptions {
        bending: config.solver.bending,
        rim_rows: config.solver.rim_rows,
        seed: config.solver.seed,
        ..ModalOptions::default()
    }
}

/// Solves the device. Lattices use the window `[f_low, f_high]` of `gap`
/// (or the configured window); squares use the lowest `n_modes`.
pub fn stage_modes(config: &RunConfig, mesh: &Mesh, stress: &StressField, gap: Option<QuasiGap>) -> CliResult<ModeStage> {
    let material = config.material.spec();
    let region = localization_region(config);
    let system = ModalSystem::new(mesh, stress, &material, &modal_options(config)).map_err(|e| CliError::core("modes", e))?;
    log::info!("modes: {} degrees of freedom", system.n_dofs());
    match config.geometry {
        GeometryConfig::Square(_) => {
            let modes = system
                .lowest(config.solver.n_modes, &region)
                .map_err(|e| CliError::core("modes", e))?;
            Ok(ModeStage {
                modes,
                labels: Vec::new(),
                gap: None,
                window_hz: None,
            })
        }
        GeometryConfig::Lattice(_) => {
            let gap = match config.solver.window_mhz {
                Some([lo, hi]) => Some(QuasiGap {
                    f_low: lo * 1e6,
                    f_high: hi * 1e6,
                    center: 0.5e6 * (lo + hi),
                    relative_width: (hi - lo) / (0.5 * (lo + hi)),
                    band_below: 0,
                    in_plane_samples_inside: 0,
                }),
                None => gap,
            };
            let Some(g) = gap else {
                return Err(CliError::core(
                    "modes",
                    softclamp::Error::Domain("no quasi-gap to place the eigen window in; set solver.window_mhz".into()),
                ));
            };
            let modes = system
                .window(g.f_low, g.f_high, config.solver.max_modes, &region)
                .map_err(|e| CliError::core("modes", e))?;
            let labels = classify_localized(&modes, Some(&g), config.solver.localization_threshold);
            log::info!("{} modes in window, {} localized", modes.len(), labels.len());
            Ok(ModeStage {
                modes,
                labels,
                gap: Some(g),
                window_hz: Some([g.f_low, g.f_high]),
            })
        }
    }
}

/// Quality factors, effective masses and shape diagnostics of every mode.
pub fn stage_q(config: &RunConfig, mesh: &Mesh, stress: &StressField, stage: &ModeStage) -> CliResult<Vec<ModeRecord>> {
    let material = config.material.spec();
    let loss = config.loss.model()?;
    let a = config.length_scale();
    let opts = QOptions {
        energy: config.solver.energy_method(),
        clamp: config.clamp_model(),
        length_scale: a,
    };
    let lattice = matches!(config.geometry, GeometryConfig::Lattice(_));
    stage
        .modes
        .iter()
        .enumerate()
        .map(|(index, mode)| {
            let label = stage.labels.iter().find(|l| l.index == index).map(|l| l.label.clone());
            let report = q_factor(mode, mesh, &material, stress, &loss, &opts).map_err(|e| CliError::core("q", e))?;
            let eta = match (&label, lattice, report.lossless) {
                (Some(_), true, false) => {
                    soft_clamp_model(&report, mode, &material, &loss, a, config.solver.localization_threshold).ok()
                }
                _ => None,
            };
            let peak = mode.displacement.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            Ok(ModeRecord {
                index,
                label,
                frequency_hz: mode.frequency,
                f_times_a: mode.frequency * a,
                localization: mode.localization,
                residual: mode.residual,
                rayleigh_defect: mode.rayleigh_defect,
                curvature_fallback: mode.curvature_fallback,
                effective_mass_kg: effective_mass(mode, mesh, &material).map_err(|e| CliError::core("q", e))?,
                azimuthal_sign_changes: lattice.then(|| azimuthal_sign_changes(mesh, &mode.displacement, [0.0, 0.0], 0.5 * a, 256)),
                boundary_amplitude: if lattice { boundary_amplitude(mesh, &mode.displacement, 0.5 * a) / peak } else { 0.0 },
                q: (!report.lossless).then_some(report),
                eta,
            })
        })
        .collect()
}

/// Samples of `field` along the half-line from `origin` in `direction`.
pub fn half_line(mesh: &Mesh, field: &[f64], origin: [f64; 2], direction: [f64; 2]) -> softclamp::Result<CrossSection> {
    let (lo, hi) = mesh.nodes.iter().fold(([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]), |(lo, hi), p| {
        ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])
    });
    let reach = (hi[0] - lo[0]).hypot(hi[1] - lo[1]);
    let full = cross_section(mesh, field, origin, direction, reach, mesh.element_size_target / 2.0)?;
    let (position, value) = full.position.iter().zip(&full.value).filter(|(s, _)| **s >= 0.0).unzip();
    Ok(CrossSection { position, value })
}

/// Half-line cross-section of mode `label` from the defect centre and the
/// evanescent fit of its tail outside the defect. A half-line keeps the fit
/// valid for shapes that are odd through the centre.
pub fn stage_decay(config: &RunConfig, mesh: &Mesh, mode: &ModeResult, label: &str) -> CliResult<DecayRecord> {
    let a = config.length_scale();
    let t = config.solver.decay_direction_deg.to_radians();
    let section = half_line(mesh, &mode.displacement, [0.0, 0.0], [t.cos(), t.sin()])
        .map_err(|e| CliError::core("decay", e))?;
    let min_distance = config.decay_min_distance_ratio()? * a;
    let (fit, error) = match fit_evanescent(&section, min_distance, a, DECAY_MAX_RMSE) {
        Ok(f) => (Some(f), None),
        Err(e) => {
            log::warn!("decay fit of mode {label}: {e}");
            (None, Some(e.to_string()))
        }
    };
    Ok(DecayRecord {
        label: label.into(),
        direction_deg: config.solver.decay_direction_deg,
        min_distance,
        k_over_2pi_a: fit.map(|f| [f.k_re * a / (2.0 * PI), f.k_im * a / (2.0 * PI)]),
        section,
        fit,
        error,
    })
}

pub fn stage_fom(records: &[ModeRecord], lattice: bool) -> CliResult<Vec<FomRecord>> {
    records
        .iter()
        .filter(|m| !lattice || m.label.is_some())
        .filter_map(|m| {
            let label = m.label.clone().unwrap_or_else(|| format!("#{}", m.index));
            m.q.map(|q| (label, m, q))
        })
        .map(|(label, m, q)| {
            let columns = room_and_cryo(m.frequency_hz, q.q, m.effective_mass_kg).map_err(|e| CliError::core("fom", e))?;
            Ok(FomRecord {
                label,
                columns: columns.to_vec(),
            })
        })
        .collect()
}

/// In-memory products of a run that are too large for the record.
pub struct RunArtifacts {
    pub mesh: Option<Mesh>,
    pub stress: Option<StressField>,
    pub modes: Vec<ModeResult>,
}

/// Runs every stage without touching the file system.
pub fn execute(config: &RunConfig) -> CliResult<(RunRecord, RunArtifacts)> {
    execute_with(config, true)
}

/// As [`execute`]; `band_plot = false` skips the band structure at the
/// unit-cell resolution, which only feeds the band plot.
pub fn execute_with(config: &RunConfig, band_plot: bool) -> CliResult<(RunRecord, RunArtifacts)> {
    config.validate()?;
    let mut record = RunRecord::new(config);
    let mut artifacts = RunArtifacts {
        mesh: None,
        stress: None,
        modes: Vec::new(),
    };
    let timings = &mut record.timings_s;
    if let GeometryConfig::Square(s) = &config.geometry {
        let oracle = square_oracle(s.side_um * 1e-6, &config.material.spec(), &config.loss.model()?)
            .map_err(|e| CliError::core("q", e))?;
        record.oracle = Some(oracle);
        if config.solver.analytic_only {
            return Ok((record, artifacts));
        }
    }
    let (_, m) = timed(timings, "mesh", || stage_mesh(config))?;
    let stress = timed(timings, "prestress", || stage_prestress(config, &m))?;
    record.mesh = Some(MeshSummary::of(&m));
    record.stress = Some(stress_stats(&stress));
    let lattice = matches!(config.geometry, GeometryConfig::Lattice(_));
    if lattice {
        if band_plot {
            record.bands = timed(timings, "bands", || stage_bands(config, config.solver.unit_cell_element_size_ratio))?;
        }
        if config.solver.window_mhz.is_none() {
            let matched = timed(timings, "window", || stage_bands(config, config.solver.element_size_ratio))?;
            record.window_gap = matched.and_then(|d| d.gap);
        }
    }
    let stage = timed(timings, "modes", || stage_modes(config, &m, &stress, record.window_gap))?;
    record.window_hz = stage.window_hz;
    record.modes = timed(timings, "q", || stage_q(config, &m, &stress, &stage))?;
    if let Some(first) = stage.labels.first() {
        let mode = &stage.modes[first.index];
        record.decay = Some(timed(timings, "decay", || stage_decay(config, &m, mode, &first.label))?);
    }
    record.fom = stage_fom(&record.modes, lattice)?;
    artifacts.mesh = Some(m);
    artifacts.stress = Some(stress);
    artifacts.modes = stage.modes;
    Ok((record, artifacts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(extra: &str) -> RunConfig {
        RunConfig::from_toml(&format!(
            "[geometry]\nkind = \"square\"\nside_um = 305\n[solver]\nelement_size_ratio = 0.04\nn_modes = 2\n{extra}"
        ))
        .unwrap()
    }

    fn without_timings(mut r: RunRecord) -> RunRecord {
        r.timings_s.clear();
        r
    }

    #[test]
    fn square_fundamental_matches_reference() {
        let (record, artifacts) = execute(&square("")).unwrap();
        let oracle = record.oracle.unwrap();
        let fundamental = &record.modes[0];
        assert!((fundamental.frequency_hz / oracle.frequency - 1.0).abs() < 2e-3);
        let q = fundamental.q.unwrap().q;
        assert!((q / oracle.q - 1.0).abs() < 0.1, "{q:.4e} vs {:.4e}", oracle.q);
        assert_eq!(artifacts.modes.len(), 2);
        assert!(record.decay.is_none());
        assert_eq!(record.fom.len(), 2);
        assert_eq!(record.fom[0].label, "#0");
    }

    #[test]
    fn reruns_are_identical_and_records_round_trip() {
        let c = square("");
        let (a, _) = execute(&c).unwrap();
        let (b, _) = execute(&c).unwrap();
        let (a, b) = (without_timings(a), without_timings(b));
        assert_eq!(a, b);
        let back: RunRecord = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn analytic_square_skips_the_solver() {
        let (record, artifacts) = execute(&square("analytic_only = true\n")).unwrap();
        assert!(record.mesh.is_none() && record.modes.is_empty() && artifacts.mesh.is_none());
        assert!(record.oracle.unwrap().q > 1e6);
    }

    #[test]
    fn half_line_keeps_one_side() {
        let c = square("");
        let (_, m) = stage_mesh(&c).unwrap();
        let u: Vec<f64> = m.nodes.iter().map(|p| p[1]).collect();
        let s = half_line(&m, &u, [0.0, 0.0], [0.0, 1.0]).unwrap();
        assert!(!s.position.is_empty());
        for (p, v) in s.position.iter().zip(&s.value) {
            assert!(*p >= 0.0);
            assert!((p - v).abs() < 1e-12, "{p} {v}");
        }
    }
}
