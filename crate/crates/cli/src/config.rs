//! Run configuration. Every dimensional key carries its unit in the name.

use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use softclamp::dissipation::{ClampModel, EnergyMethod};
use softclamp::geometry::{
    build_device, build_square, build_unit_cell, DefectSpec, DeviceGeometry, HoleShift, LatticeSpec, SiteIndex,
    Sublattice, DEFAULT_MARGIN_RATIO,
};
use softclamp::material::{LossModel, MaterialSpec};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Free-form label copied into the run record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Parent directory of the per-run directories. Not part of the config hash.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub material: MaterialConfig,
    #[serde(default)]
    pub loss: LossConfig,
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialConfig {
    pub youngs_modulus_gpa: f64,
    pub poisson_ratio: f64,
    pub density_kg_m3: f64,
    /// Film stress before patterning.
    pub prestress_gpa: f64,
    pub thickness_nm: f64,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        let m = MaterialSpec::silicon_nitride(66e-9);
        Self {
            youngs_modulus_gpa: m.youngs_modulus / 1e9,
            poisson_ratio: m.poisson_ratio,
            density_kg_m3: m.density,
            prestress_gpa: m.prestress / 1e9,
            thickness_nm: 66.0,
        }
    }
}

impl MaterialConfig {
    pub fn spec(&self) -> MaterialSpec {
        MaterialSpec {
            youngs_modulus: self.youngs_modulus_gpa * 1e9,
            poisson_ratio: self.poisson_ratio,
            density: self.density_kg_m3,
            prestress: self.prestress_gpa * 1e9,
            thickness: self.thickness_nm * 1e-9,
        }
    }
}

/// Intrinsic loss, calibrated so that `Q_int(anchor_thickness_nm) = anchor_q_int`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub anchor_thickness_nm: f64,
    pub anchor_q_int: f64,
    /// Volume contribution; omit for pure surface loss.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volume_q: Option<f64>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            anchor_thickness_nm: 66.0,
            anchor_q_int: 3750.0,
            volume_q: None,
        }
    }
}

impl LossConfig {
    pub fn model(&self) -> CliResult<LossModel> {
        let volume_q = self.volume_q.unwrap_or(f64::INFINITY);
        LossModel::calibrate(self.anchor_thickness_nm * 1e-9, self.anchor_q_int, volume_q)
            .map_err(|e| CliError::core("loss", e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeometryConfig {
    /// Honeycomb hole lattice with a central defect inside a clamped frame.
    Lattice(LatticeConfig),
    /// Uniform square membrane clamped on all four sides.
    Square(SquareConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub a_um: f64,
    #[serde(default = "default_hole_radius_ratio")]
    pub hole_radius_ratio: f64,
    /// Lattice periods across the device.
    #[serde(default = "default_cells")]
    pub n_cols: f64,
    /// Lattice periods along the device; defaults to `n_cols + 0.5`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_rows: Option<f64>,
    /// Solid rim between the outermost holes and the clamp, in units of `a`.
    #[serde(default = "default_margin_ratio")]
    pub margin_ratio: f64,
    #[serde(default)]
    pub defect: DefectConfig,
}

fn default_hole_radius_ratio() -> f64 {
    0.26
}

fn default_cells() -> f64 {
    19.0
}

fn default_margin_ratio() -> f64 {
    DEFAULT_MARGIN_RATIO
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SquareConfig {
    pub side_um: f64,
}

/// Either a named preset or an explicit list of removed and displaced holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DefectConfig {
    /// One of `none`, `paper-like`, `trampoline`, `large`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Overrides the radial ring shift of the `paper-like` preset (units of `a`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ring_shift_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub removed: Vec<SiteConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub displaced: Vec<ShiftConfig>,
}

impl Default for DefectConfig {
    fn default() -> Self {
        Self {
            preset: Some("paper-like".into()),
            ring_shift_a: None,
            removed: Vec::new(),
            displaced: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SiteConfig {
    pub i: i32,
    pub j: i32,
    /// `up` or `down`.
    pub sublattice: SublatticeConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum SublatticeConfig {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ShiftConfig {
    pub i: i32,
    pub j: i32,
    pub sublattice: SublatticeConfig,
    /// Offset in units of `a`.
    pub dx_a: f64,
    pub dy_a: f64,
}

impl SiteConfig {
    fn site(&self) -> SiteIndex {
        site(self.i, self.j, self.sublattice)
    }
}

fn site(i: i32, j: i32, s: SublatticeConfig) -> SiteIndex {
    let sublattice = match s {
        SublatticeConfig::Up => Sublattice::Up,
        SublatticeConfig::Down => Sublattice::Down,
    };
    SiteIndex::new(i, j, sublattice)
}

impl DefectConfig {
    pub fn spec(&self) -> CliResult<DefectSpec> {
        let explicit = !self.removed.is_empty() || !self.displaced.is_empty();
        match (&self.preset, explicit) {
            (Some(_), true) => Err(CliError::Config(
                "geometry.defect: give either a preset or explicit hole lists, not both".into(),
            )),
            (Some(name), false) => {
                if let Some(shift) = self.ring_shift_a {
                    if !matches!(name.as_str(), "paper-like" | "paper_like") {
                        return Err(CliError::Config(format!(
                            "geometry.defect.ring_shift_a only applies to the paper-like preset, not `{name}`"
                        )));
                    }
                    return Ok(DefectSpec::vacancy_ring(shift));
                }
                DefectSpec::preset(name)
                    .ok_or_else(|| CliError::Config(format!("unknown defect preset `{name}`")))
            }
            (None, _) => {
                if self.ring_shift_a.is_some() {
                    return Err(CliError::Config("geometry.defect.ring_shift_a needs a preset".into()));
                }
                Ok(DefectSpec {
                    removed: self.removed.iter().map(SiteConfig::site).collect(),
                    displaced: self
                        .displaced
                        .iter()
                        .map(|d| HoleShift {
                            site: site(d.i, d.j, d.sublattice),
                            offset: [d.dx_a, d.dy_a],
                        })
                        .collect(),
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ClampChoice {
    /// Soft clamping for lattices, boundary-layer correction for squares.
    Auto,
    Soft,
    BoundaryLayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum EnergyChoice {
    Tension,
    Kinetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Device element size in units of `a` (or of the side for squares).
    pub element_size_ratio: f64,
    /// Element size of the band-structure unit cell, in units of `a`.
    pub unit_cell_element_size_ratio: f64,
    pub kpoints_per_segment: usize,
    pub n_bands: usize,
    /// Compute in-plane bands so the gap report can flag them.
    pub in_plane_bands: bool,
    /// Include bending stiffness in the device eigenproblem.
    pub bending: bool,
    /// Keep bending rows at hole-rim nodes.
    pub rim_rows: bool,
    /// Eigen window in MHz. Defaults to the quasi-gap of a unit cell meshed at
    /// the device element size.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_mhz: Option<[f64; 2]>,
    pub max_modes: usize,
    /// Number of lowest modes solved for square membranes.
    pub n_modes: usize,
    /// Kinetic-energy fraction inside the localization disc for a defect mode.
    pub localization_threshold: f64,
    /// Radius of the localization disc in units of `a`.
    pub localization_radius_ratio: f64,
    pub energy: EnergyChoice,
    pub clamp: ClampChoice,
    /// Direction of the decay half-line from the defect centre, degrees from the x axis.
    pub decay_direction_deg: f64,
    /// Samples closer than this to the centre (units of `a`) are left out of
    /// the decay fit. Defaults to the outer edge of the defect.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay_min_distance_a: Option<f64>,
    /// Skip the finite-element stages of a square membrane.
    pub analytic_only: bool,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            element_size_ratio: 0.08,
            unit_cell_element_size_ratio: 0.0255,
            kpoints_per_segment: 10,
            n_bands: 8,
            in_plane_bands: true,
            bending: true,
            rim_rows: false,
            window_mhz: None,
            max_modes: 80,
            n_modes: 5,
            localization_threshold: 0.8,
            localization_radius_ratio: 2.0,
            energy: EnergyChoice::Tension,
            clamp: ClampChoice::Auto,
            decay_direction_deg: 90.0,
            decay_min_distance_a: None,
            analytic_only: false,
            seed: 0x5eed,
        }
    }
}

impl SolverConfig {
    pub fn energy_method(&self) -> EnergyMethod {
        match self.energy {
            EnergyChoice::Tension => EnergyMethod::Tension,
            EnergyChoice::Kinetic => EnergyMethod::Kinetic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Lattice constants (or square sides); defaults to the geometry value.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub a_um: Vec<f64>,
    /// Thicknesses; defaults to the material value.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub h_nm: Vec<f64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration always serializes")
    }

    /// Semantic checks that the schema cannot express. Builds the geometry so
    /// overlapping holes are reported before any solve.
    pub fn validate(&self) -> CliResult<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CliError::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        self.material.spec().validate().map_err(|e| CliError::core("material", e))?;
        self.loss.model()?;
        let s = &self.solver;
        positive("solver.element_size_ratio", s.element_size_ratio)?;
        positive("solver.unit_cell_element_size_ratio", s.unit_cell_element_size_ratio)?;
        positive("solver.localization_radius_ratio", s.localization_radius_ratio)?;
        if let Some(d) = s.decay_min_distance_a {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(CliError::Config(format!("solver.decay_min_distance_a must be non-negative, got {d}")));
            }
        }
        if !(0.0..=1.0).contains(&s.localization_threshold) {
            return Err(CliError::Config(format!(
                "solver.localization_threshold must lie in [0, 1], got {}",
                s.localization_threshold
            )));
        }
        if s.kpoints_per_segment == 0 || s.n_bands < 2 || s.max_modes == 0 || s.n_modes == 0 {
            return Err(CliError::Config(
                "solver.kpoints_per_segment, max_modes and n_modes must be positive and n_bands at least 2".into(),
            ));
        }
        if let Some([lo, hi]) = s.window_mhz {
            if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
                return Err(CliError::Config(format!("solver.window_mhz must be increasing, got [{lo}, {hi}]")));
            }
        }
        if let Some(sweep) = &self.sweep {
            for (name, list) in [("sweep.a_um", &sweep.a_um), ("sweep.h_nm", &sweep.h_nm)] {
                for (i, &v) in list.iter().enumerate() {
                    positive(name, v)?;
                    if list[..i].contains(&v) {
                        return Err(CliError::Config(format!("{name} lists {v} twice")));
                    }
                }
            }
        }
        if let GeometryConfig::Square(_) = self.geometry {
            if s.clamp == ClampChoice::Soft {
                log::warn!("soft clamping on a square membrane ignores the clamp loss");
            }
        }
        self.geometry().map(|_| ())
    }

    /// Lattice constant or square side (m).
    pub fn length_scale(&self) -> f64 {
        match &self.geometry {
            GeometryConfig::Lattice(l) => l.a_um * 1e-6,
            GeometryConfig::Square(s) => s.side_um * 1e-6,
        }
    }

    pub fn lattice_spec(&self) -> Option<LatticeSpec> {
        match &self.geometry {
            GeometryConfig::Lattice(l) => Some(LatticeSpec {
                lattice_constant: l.a_um * 1e-6,
                hole_radius_ratio: l.hole_radius_ratio,
                n_cols: l.n_cols,
                n_rows: l.n_rows.unwrap_or(l.n_cols + 0.5),
            }),
            GeometryConfig::Square(_) => None,
        }
    }

    pub fn geometry(&self) -> CliResult<DeviceGeometry> {
        let g = match &self.geometry {
            GeometryConfig::Lattice(l) => {
                let spec = self.lattice_spec().expect("lattice geometry");
                build_device(&spec, &l.defect.spec()?, l.margin_ratio * spec.lattice_constant)
            }
            GeometryConfig::Square(s) => build_square(s.side_um * 1e-6),
        };
        g.map_err(|e| CliError::core("geometry", e))
    }

    /// Start of the decay fit in units of `a`.
    pub fn decay_min_distance_ratio(&self) -> CliResult<f64> {
        if let Some(d) = self.solver.decay_min_distance_a {
            return Ok(d);
        }
        Ok(match &self.geometry {
            GeometryConfig::Lattice(l) => l.defect.spec()?.extent(l.hole_radius_ratio),
            GeometryConfig::Square(_) => 0.0,
        })
    }

    pub fn unit_cell(&self) -> CliResult<Option<DeviceGeometry>> {
        self.lattice_spec()
            .map(|spec| build_unit_cell(&spec).map_err(|e| CliError::core("geometry", e)))
            .transpose()
    }

    pub fn clamp_model(&self) -> ClampModel {
        match (self.solver.clamp, &self.geometry) {
            (ClampChoice::Soft, _) => ClampModel::Soft,
            (ClampChoice::BoundaryLayer, _) => ClampModel::BoundaryLayer,
            (ClampChoice::Auto, GeometryConfig::Lattice(_)) => ClampModel::Soft,
            (ClampChoice::Auto, GeometryConfig::Square(_)) => ClampModel::BoundaryLayer,
        }
    }

    /// Copy with a different length scale and thickness, for sweeps.
    pub fn with_point(&self, a_um: f64, h_nm: f64) -> Self {
        let mut c = self.clone();
        c.sweep = None;
        c.material.thickness_nm = h_nm;
        match &mut c.geometry {
            GeometryConfig::Lattice(l) => l.a_um = a_um,
            GeometryConfig::Square(s) => s.side_um = a_um,
        }
        c
    }

    /// The `(a, h)` combinations of the sweep block, `a` outermost.
    pub fn sweep_points(&self) -> Vec<(f64, f64)> {
        let a0 = self.length_scale() * 1e6;
        let h0 = self.material.thickness_nm;
        let (a_list, h_list) = match &self.sweep {
            Some(s) => (
                if s.a_um.is_empty() { vec![a0] } else { s.a_um.clone() },
                if s.h_nm.is_empty() { vec![h0] } else { s.h_nm.clone() },
            ),
            None => (vec![a0], vec![h0]),
        };
        a_list.iter().flat_map(|&a| h_list.iter().map(move |&h| (a, h))).collect()
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("configuration always serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
        }
        let canonical = serde_json::to_string(&value).expect("json value always serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `output_dir/<first 12 hex digits of the hash>`.
    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.hash()[..12])
    }
}

/// JSON schema of [`RunConfig`].
pub fn schema() -> String {
    let schema = schemars::schema_for!(RunConfig);
    serde_json::to_string_pretty(&schema).expect("schema always serializes") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[geometry]\nkind = \"lattice\"\na_um = 160\n";

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.material.thickness_nm, 66.0);
        assert_eq!(c.solver.element_size_ratio, 0.08);
        assert_eq!(c.lattice_spec().unwrap().n_rows, 19.5);
        assert_eq!(c.clamp_model(), ClampModel::Soft);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            "bogus = 1\n[geometry]\nkind = \"lattice\"\na_um = 160\n",
            "[geometry]\nkind = \"lattice\"\na = 160\n",
            "[geometry]\nkind = \"lattice\"\na_um = 160\n[solver]\nmesh = 1\n",
            "[geometry]\nkind = \"hexagon\"\na_um = 160\n",
        ] {
            assert!(matches!(RunConfig::from_toml(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn hash_ignores_output_dir_but_not_physics() {
        let a = RunConfig::from_toml(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.material.thickness_nm = 35.0;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn round_trip_through_toml() {
        let mut c = RunConfig::from_toml(MINIMAL).unwrap();
        c.sweep = Some(SweepConfig {
            a_um: vec![87.0, 160.0],
            h_nm: vec![35.0],
        });
        c.loss.volume_q = Some(5e4);
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn overlapping_holes_fail_validation() {
        let text = format!("{MINIMAL}[geometry.defect]\npreset = \"paper-like\"\nring_shift_a = 0.4\n");
        assert!(matches!(RunConfig::from_toml(&text), Err(CliError::Core { .. })));
    }

    #[test]
    fn explicit_defect_and_preset_conflict() {
        let text = format!(
            "{MINIMAL}[geometry.defect]\npreset = \"none\"\nremoved = [{{ i = 0, j = 0, sublattice = \"up\" }}]\n"
        );
        assert!(matches!(RunConfig::from_toml(&text), Err(CliError::Config(_))));
        let text = format!(
            "{MINIMAL}[geometry.defect]\nremoved = [{{ i = 0, j = 0, sublattice = \"up\" }}]\n\
             displaced = [{{ i = 0, j = 0, sublattice = \"down\", dx_a = 0.0, dy_a = -0.05 }}]\n"
        );
        let c = RunConfig::from_toml(&text).unwrap();
        let GeometryConfig::Lattice(l) = &c.geometry else { panic!() };
        let d = l.defect.spec().unwrap();
        assert_eq!(d.removed.len(), 1);
        assert_eq!(d.displaced[0].offset, [0.0, -0.05]);
    }

    #[test]
    fn sweep_points_are_a_major() {
        let text = format!("{MINIMAL}[sweep]\na_um = [87, 160]\nh_nm = [35, 66, 121]\n");
        let c = RunConfig::from_toml(&text).unwrap();
        let p = c.sweep_points();
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], (87.0, 35.0));
        assert_eq!(p[3], (160.0, 35.0));
        let one = c.with_point(87.0, 121.0);
        assert_eq!(one.length_scale(), 87e-6);
        assert!(one.sweep.is_none());
    }

    #[test]
    fn repeated_sweep_values_are_rejected() {
        let text = format!("{MINIMAL}[sweep]\na_um = [87, 160, 87]\n");
        assert!(matches!(RunConfig::from_toml(&text), Err(CliError::Config(_))));
    }

    proptest::proptest! {
        #[test]
        fn sweep_grid_and_hash_survive_round_trip(
            a in proptest::collection::btree_set(20u32..400, 1..4),
            h in proptest::collection::btree_set(20u32..150, 0..4),
        ) {
            let list = |s: &std::collections::BTreeSet<u32>| s.iter().map(|&v| v as f64).collect::<Vec<_>>();
            let mut c = RunConfig::from_toml(MINIMAL).unwrap();
            c.sweep = Some(SweepConfig { a_um: list(&a), h_nm: list(&h) });
            let back = RunConfig::from_toml(&c.to_toml()).unwrap();
            proptest::prop_assert_eq!(back.hash(), c.hash());
            let points = back.sweep_points();
            proptest::prop_assert_eq!(points.len(), a.len() * h.len().max(1));
            let hashes: std::collections::BTreeSet<_> = points.iter().map(|&(a, h)| c.with_point(a, h).hash()).collect();
            proptest::prop_assert_eq!(hashes.len(), points.len());
        }
    }

    #[test]
    fn infeasible_loss_is_reported() {
        let text = format!("{MINIMAL}[loss]\nvolume_q = 1000\n");
        assert!(matches!(RunConfig::from_toml(&text), Err(CliError::Core { .. })));
    }
}
