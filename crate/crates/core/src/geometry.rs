//! Honeycomb phononic-crystal membranes, their periodic unit cell and plain
//! square membranes.
//!
//! Coordinates are centred on the defect. Pads (the hexagon centres of the
//! hole honeycomb) sit on the triangular Bravais lattice
//! `R = i·a1 + j·a2` with `a1 = (a, 0)` and `a2 = (a/2, √3·a/2)`; holes sit at
//! `R ± (0, a/√3)`. The lattice therefore has a pad at the origin and mirror
//! lines along both coordinate axes.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of polygon segments used for the geometric representation of a hole.
pub const HOLE_POLYGON_SEGMENTS: usize = 64;

/// Largest hole radius (in units of `a`) before neighbouring holes touch.
pub const TETHER_PINCH_RATIO: f64 = 0.288_675_134_594_812_9; // 1/(2√3)

/// Default clamp margin between the patterned region and the frame, in units of `a`.
pub const DEFAULT_MARGIN_RATIO: f64 = 0.25;

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sublattice {
    /// Hole above its pad, at `R + (0, a/√3)`.
    Up,
    /// Hole below its pad, at `R - (0, a/√3)`.
    Down,
}

impl Sublattice {
    fn sign(self) -> f64 {
        match self {
            Sublattice::Up => 1.0,
            Sublattice::Down => -1.0,
        }
    }
}

/// Address of a honeycomb hole site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SiteIndex {
    pub i: i32,
    pub j: i32,
    pub sublattice: Sublattice,
}

impl SiteIndex {
    pub const fn new(i: i32, j: i32, sublattice: Sublattice) -> Self {
        Self { i, j, sublattice }
    }

    /// Centre of the hole in metres for lattice constant `a`.
    pub fn position(&self, a: f64) -> [f64; 2] {
        let x = a * (self.i as f64 + 0.5 * self.j as f64);
        let y = a * (0.5 * SQRT3 * self.j as f64 + self.sublattice.sign() / SQRT3);
        [x, y]
    }

    /// Site obtained by reflecting `x -> -x`.
    pub fn mirror_x(&self) -> Self {
        Self::new(-self.i - self.j, self.j, self.sublattice)
    }

    /// Site obtained by reflecting `y -> -y`.
    pub fn mirror_y(&self) -> Self {
        let sublattice = match self.sublattice {
            Sublattice::Up => Sublattice::Down,
            Sublattice::Down => Sublattice::Up,
        };
        Self::new(self.i + self.j, -self.j, sublattice)
    }
}

/// Honeycomb lattice description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    /// Lattice constant `a` (m).
    pub lattice_constant: f64,
    /// Hole radius in units of `a`.
    pub hole_radius_ratio: f64,
    /// Width of the patterned region in units of `a`.
    pub n_cols: f64,
    /// Height of the patterned region in units of `a`.
    pub n_rows: f64,
}

impl LatticeSpec {
    /// Default lattice: `r = 0.26 a` over a 19 × 19.5 a² region.
    pub fn standard(lattice_constant: f64) -> Self {
        Self {
            lattice_constant,
            hole_radius_ratio: 0.26,
            n_cols: 19.0,
            n_rows: 19.5,
        }
    }

    pub fn hole_radius(&self) -> f64 {
        self.hole_radius_ratio * self.lattice_constant
    }

    /// Primitive-cell vectors of the triangular Bravais lattice.
    pub fn lattice_vectors(&self) -> [[f64; 2]; 2] {
        let a = self.lattice_constant;
        [[a, 0.0], [0.5 * a, 0.5 * SQRT3 * a]]
    }

    /// Tether width between nearest-neighbour holes (m).
    pub fn tether_width(&self) -> f64 {
        (1.0 / SQRT3 - 2.0 * self.hole_radius_ratio) * self.lattice_constant
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lattice_constant > 0.0 && self.lattice_constant.is_finite()) {
            return Err(Error::Geometry(format!(
                "lattice constant must be positive, got {}",
                self.lattice_constant
            )));
        }
        if !(0.0..0.5).contains(&self.hole_radius_ratio) {
            return Err(Error::Geometry(format!(
                "hole radius ratio must lie in [0, 0.5), got {}",
                self.hole_radius_ratio
            )));
        }
        if !(self.n_cols >= 1.0 && self.n_rows >= 1.0) {
            return Err(Error::Geometry(format!(
                "lattice extent must be at least one cell, got {} x {}",
                self.n_cols, self.n_rows
            )));
        }
        Ok(())
    }
}

/// A hole moved away from its lattice site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoleShift {
    pub site: SiteIndex,
    /// Displacement in units of `a`.
    pub offset: [f64; 2],
}

/// Removed and displaced holes forming the defect.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DefectSpec {
    #[serde(default)]
    pub removed: Vec<SiteIndex>,
    #[serde(default)]
    pub displaced: Vec<HoleShift>,
}

/// Holes sitting on the hexagon around the central pad.
pub fn central_ring() -> [SiteIndex; 6] {
    use Sublattice::*;
    [
        SiteIndex::new(0, 0, Up),
        SiteIndex::new(0, 0, Down),
        SiteIndex::new(0, 1, Down),
        SiteIndex::new(-1, 1, Down),
        SiteIndex::new(1, -1, Up),
        SiteIndex::new(0, -1, Up),
    ]
}

/// Holes one bond further out from the central ring, radially in line with
/// the ring holes (distance `2a/√3` from the origin).
pub fn second_ring() -> [SiteIndex; 6] {
    use Sublattice::*;
    [
        SiteIndex::new(-1, 2, Down),
        SiteIndex::new(1, -2, Up),
        SiteIndex::new(1, 0, Up),
        SiteIndex::new(-1, 0, Up),
        SiteIndex::new(1, 0, Down),
        SiteIndex::new(-1, 0, Down),
    ]
}

impl DefectSpec {
    pub fn none() -> Self {
        Self::default()
    }

    /// Default soft-clamping defect: the six holes around the central pad are
    /// removed, merging it with its neighbours into one island of size `~2a`,
    /// and the next ring of six holes is pushed radially outward by
    /// [`PAPER_LIKE_RING_SHIFT`]. The shift is calibrated so that the lowest
    /// localized mode sits at `f·a ≈ 235 m/s`.
    pub fn paper_like() -> Self {
        Self::vacancy_ring(PAPER_LIKE_RING_SHIFT)
    }

    /// Family behind [`DefectSpec::paper_like`] with a free radial shift (in
    /// units of `a`) of the ring surrounding the vacancies.
    pub fn vacancy_ring(shift: f64) -> Self {
        Self {
            removed: central_ring().to_vec(),
            displaced: radial_shifts(&second_ring(), shift),
        }
    }

    /// Central ring pushed radially outward by `shift` with the ring behind it
    /// removed, which enlarges only the central pad.
    pub fn radial_island(shift: f64) -> Self {
        Self {
            removed: second_ring().to_vec(),
            displaced: radial_shifts(&central_ring(), shift),
        }
    }

    /// Unvalidated preset: a reduced central pad suspended on narrowed
    /// tethers, made by pulling the central ring of holes inward.
    pub fn trampoline() -> Self {
        Self::radial_island_without_removal(-0.04)
    }

    fn radial_island_without_removal(shift: f64) -> Self {
        Self {
            removed: Vec::new(),
            displaced: radial_shifts(&central_ring(), shift),
        }
    }

    /// Unvalidated preset: a large defect supporting a richer multimode
    /// spectrum (both rings removed).
    pub fn large() -> Self {
        let mut removed = central_ring().to_vec();
        removed.extend_from_slice(&second_ring());
        Self {
            removed,
            displaced: Vec::new(),
        }
    }

    /// Looks up a named preset.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "none" | "perfect" => Some(Self::none()),
            "paper-like" | "paper_like" => Some(Self::paper_like()),
            "trampoline" => Some(Self::trampoline()),
            "large" | "large-defect" => Some(Self::large()),
            _ => None,
        }
    }

    /// Distance from the origin to the far edge of the outermost removed or
    /// displaced hole, in units of `a`; zero for a perfect lattice.
    pub fn extent(&self, hole_radius_ratio: f64) -> f64 {
        let removed = self.removed.iter().map(|s| s.position(1.0));
        let displaced = self.displaced.iter().map(|d| {
            let p = d.site.position(1.0);
            [p[0] + d.offset[0], p[1] + d.offset[1]]
        });
        removed
            .chain(displaced)
            .map(|p| p[0].hypot(p[1]) + hole_radius_ratio)
            .fold(0.0, f64::max)
    }

    /// True when the defect maps onto itself under both coordinate mirrors.
    pub fn is_mirror_symmetric(&self) -> bool {
        let removed: std::collections::HashSet<_> = self.removed.iter().copied().collect();
        let removed_ok = self
            .removed
            .iter()
            .all(|s| removed.contains(&s.mirror_x()) && removed.contains(&s.mirror_y()));
        let shifts: HashMap<_, _> = self.displaced.iter().map(|d| (d.site, d.offset)).collect();
        let close = |u: [f64; 2], v: [f64; 2]| (u[0] - v[0]).abs() < 1e-12 && (u[1] - v[1]).abs() < 1e-12;
        let shifts_ok = self.displaced.iter().all(|d| {
            let mx = shifts.get(&d.site.mirror_x());
            let my = shifts.get(&d.site.mirror_y());
            matches!(mx, Some(o) if close(*o, [-d.offset[0], d.offset[1]]))
                && matches!(my, Some(o) if close(*o, [d.offset[0], -d.offset[1]]))
        });
        removed_ok && shifts_ok
    }
}

/// Ring shift of the calibrated default defect, in units of `a`.
pub const PAPER_LIKE_RING_SHIFT: f64 = 0.11;

fn radial_shifts(sites: &[SiteIndex], shift: f64) -> Vec<HoleShift> {
    sites
        .iter()
        .map(|site| {
            let p = site.position(1.0);
            let norm = p[0].hypot(p[1]);
            HoleShift {
                site: *site,
                offset: [shift * p[0] / norm, shift * p[1] / norm],
            }
        })
        .collect()
}

/// A circular hole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hole {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Hole {
    /// Vertices of the regular `n`-gon inscribed in the hole, starting on the +x axis.
    pub fn polygon(&self, n: usize) -> Vec<[f64; 2]> {
        (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                [self.center[0] + self.radius * t.cos(), self.center[1] + self.radius * t.sin()]
            })
            .collect()
    }

    /// Area of the inscribed `n`-gon.
    pub fn polygon_area(&self, n: usize) -> f64 {
        0.5 * n as f64 * self.radius * self.radius * (2.0 * PI / n as f64).sin()
    }
}

/// Outer shape of the simulated membrane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Outline {
    /// Rectangle centred at the origin, clamped along its whole perimeter.
    Rectangle { half_width: f64, half_height: f64 },
    /// Primitive cell spanned by `a1` and `a2` from the origin, with periodic edges.
    Periodic { a1: [f64; 2], a2: [f64; 2] },
}

impl Outline {
    pub fn area(&self) -> f64 {
        match *self {
            Outline::Rectangle {
                half_width,
                half_height,
            } => 4.0 * half_width * half_height,
            Outline::Periodic { a1, a2 } => (a1[0] * a2[1] - a1[1] * a2[0]).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GeometryKind {
    Device {
        lattice: LatticeSpec,
        defect: DefectSpec,
        margin: f64,
    },
    UnitCell {
        lattice: LatticeSpec,
    },
    Square {
        side: f64,
    },
}

/// Geometric description of a membrane ready for meshing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceGeometry {
    pub kind: GeometryKind,
    pub outline: Outline,
    pub holes: Vec<Hole>,
}

/// Honeycomb device with the default clamp margin of `0.25 a`.
pub fn build_lattice(spec: &LatticeSpec, defect: &DefectSpec) -> Result<DeviceGeometry> {
    build_device(spec, defect, DEFAULT_MARGIN_RATIO * spec.lattice_constant)
}

/// Honeycomb device with an explicit clamp margin (m).
pub fn build_device(spec: &LatticeSpec, defect: &DefectSpec, margin: f64) -> Result<DeviceGeometry> {
    spec.validate()?;
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::Geometry(format!("margin must be non-negative, got {margin}")));
    }
    let a = spec.lattice_constant;
    let r = spec.hole_radius();
    let half_w = 0.5 * spec.n_cols * a;
    let half_h = 0.5 * spec.n_rows * a;
    let tol = 1e-9 * a;

    // Every honeycomb site whose hole fits inside the patterned region.
    let mut sites: Vec<(SiteIndex, [f64; 2])> = Vec::new();
    if r > 0.0 {
        let j_max = (half_h / (0.5 * SQRT3 * a)).ceil() as i32 + 2;
        for j in -j_max..=j_max {
            let i_max = (half_w / a).ceil() as i32 + j.abs() + 2;
            for i in -i_max..=i_max {
                for sub in [Sublattice::Up, Sublattice::Down] {
                    let site = SiteIndex::new(i, j, sub);
                    let c = site.position(a);
                    if c[0].abs() + r <= half_w + tol && c[1].abs() + r <= half_h + tol {
                        sites.push((site, c));
                    }
                }
            }
        }
    }
    let index: HashMap<SiteIndex, usize> = sites.iter().enumerate().map(|(k, (s, _))| (*s, k)).collect();

    let mut keep = vec![true; sites.len()];
    for site in &defect.removed {
        let k = index.get(site).ok_or_else(|| {
            Error::Geometry(format!("removed site {site:?} lies outside the lattice"))
        })?;
        keep[*k] = false;
    }
    for shift in &defect.displaced {
        let k = *index.get(&shift.site).ok_or_else(|| {
            Error::Geometry(format!("displaced site {:?} lies outside the lattice", shift.site))
        })?;
        if !keep[k] {
            return Err(Error::Geometry(format!(
                "site {:?} is both removed and displaced",
                shift.site
            )));
        }
        sites[k].1[0] += shift.offset[0] * a;
        sites[k].1[1] += shift.offset[1] * a;
    }

    // Stable ordering: by row then column, which also keeps output deterministic.
    let mut holes: Vec<Hole> = sites
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|((_, c), _)| Hole { center: *c, radius: r })
        .collect();
    holes.sort_by(|p, q| {
        (p.center[1], p.center[0])
            .partial_cmp(&(q.center[1], q.center[0]))
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let outline = Outline::Rectangle {
        half_width: half_w + margin,
        half_height: half_h + margin,
    };
    check_holes(&holes, &outline)?;
    Ok(DeviceGeometry {
        kind: GeometryKind::Device {
            lattice: *spec,
            defect: defect.clone(),
            margin,
        },
        outline,
        holes,
    })
}

/// Periodic primitive cell of the honeycomb lattice (two holes per cell).
pub fn build_unit_cell(spec: &LatticeSpec) -> Result<DeviceGeometry> {
    spec.validate()?;
    if spec.hole_radius_ratio >= TETHER_PINCH_RATIO {
        return Err(Error::Geometry(format!(
            "hole radius ratio {} pinches off the tethers (limit {:.4})",
            spec.hole_radius_ratio, TETHER_PINCH_RATIO
        )));
    }
    let [a1, a2] = spec.lattice_vectors();
    let r = spec.hole_radius();
    let holes = if r > 0.0 {
        [1.0 / 3.0, 2.0 / 3.0]
            .iter()
            .map(|f| Hole {
                center: [f * (a1[0] + a2[0]), f * (a1[1] + a2[1])],
                radius: r,
            })
            .collect()
    } else {
        Vec::new()
    };
    let outline = Outline::Periodic { a1, a2 };
    Ok(DeviceGeometry {
        kind: GeometryKind::UnitCell { lattice: *spec },
        outline,
        holes,
    })
}

/// Plain square membrane of side `side`, clamped on all edges.
pub fn build_square(side: f64) -> Result<DeviceGeometry> {
    if !(side > 0.0 && side.is_finite()) {
        return Err(Error::Geometry(format!("square side must be positive, got {side}")));
    }
    Ok(DeviceGeometry {
        kind: GeometryKind::Square { side },
        outline: Outline::Rectangle {
            half_width: 0.5 * side,
            half_height: 0.5 * side,
        },
        holes: Vec::new(),
    })
}

fn check_holes(holes: &[Hole], outline: &Outline) -> Result<()> {
    if let Outline::Rectangle {
        half_width,
        half_height,
    } = *outline
    {
        for h in holes {
            if h.center[0].abs() + h.radius >= half_width || h.center[1].abs() + h.radius >= half_height {
                return Err(Error::Geometry(format!(
                    "hole at ({:.4e}, {:.4e}) reaches the clamped frame",
                    h.center[0], h.center[1]
                )));
            }
        }
    }
    // Bucket holes on a grid of the largest diameter to find close pairs.
    let Some(max_r) = holes.iter().map(|h| h.radius).reduce(f64::max) else {
        return Ok(());
    };
    if max_r <= 0.0 {
        return Ok(());
    }
    let cell = 2.0 * max_r;
    let key = |c: [f64; 2]| ((c[0] / cell).floor() as i64, (c[1] / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (k, h) in holes.iter().enumerate() {
        grid.entry(key(h.center)).or_default().push(k);
    }
    for (k, h) in holes.iter().enumerate() {
        let (gx, gy) = key(h.center);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(bucket) = grid.get(&(gx + dx, gy + dy)) else {
                    continue;
                };
                for &m in bucket.iter().filter(|&&m| m > k) {
                    let o = &holes[m];
                    let d = (h.center[0] - o.center[0]).hypot(h.center[1] - o.center[1]);
                    if d <= h.radius + o.radius {
                        return Err(Error::HoleOverlap {
                            first: k,
                            second: m,
                            distance: d,
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

impl DeviceGeometry {
    pub fn lattice(&self) -> Option<&LatticeSpec> {
        match &self.kind {
            GeometryKind::Device { lattice, .. } | GeometryKind::UnitCell { lattice } => Some(lattice),
            GeometryKind::Square { .. } => None,
        }
    }

    pub fn lattice_constant(&self) -> Option<f64> {
        self.lattice().map(|l| l.lattice_constant)
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.outline, Outline::Periodic { .. })
    }

    /// Membrane area with holes represented by their 64-gons.
    pub fn area(&self) -> f64 {
        self.outline.area()
            - self
                .holes
                .iter()
                .map(|h| h.polygon_area(HOLE_POLYGON_SEGMENTS))
                .sum::<f64>()
    }

    /// Outline side lengths `(width, height)` of a rectangular membrane.
    pub fn sidelengths(&self) -> Option<(f64, f64)> {
        match self.outline {
            Outline::Rectangle {
                half_width,
                half_height,
            } => Some((2.0 * half_width, 2.0 * half_height)),
            Outline::Periodic { .. } => None,
        }
    }

    /// Typical length scale: the lattice constant, or the square side.
    pub fn length_scale(&self) -> f64 {
        match &self.kind {
            GeometryKind::Device { lattice, .. } | GeometryKind::UnitCell { lattice } => lattice.lattice_constant,
            GeometryKind::Square { side } => *side,
        }
    }

    /// True when the hole set maps onto itself under `x -> -x` and `y -> -y`.
    pub fn is_mirror_symmetric(&self) -> bool {
        if self.is_periodic() {
            return false;
        }
        let scale = self.length_scale();
        let quant = |v: f64| (v / (1e-9 * scale)).round() as i64;
        let set: std::collections::HashSet<(i64, i64, i64)> = self
            .holes
            .iter()
            .map(|h| (quant(h.center[0]), quant(h.center[1]), quant(h.radius)))
            .collect();
        self.holes.iter().all(|h| {
            set.contains(&(quant(-h.center[0]), quant(h.center[1]), quant(h.radius)))
                && set.contains(&(quant(h.center[0]), quant(-h.center[1]), quant(h.radius)))
        })
    }

    /// Rigidly rescales every length by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let scale_lattice = |l: &LatticeSpec| LatticeSpec {
            lattice_constant: l.lattice_constant * factor,
            ..*l
        };
        let kind = match &self.kind {
            GeometryKind::Device {
                lattice,
                defect,
                margin,
            } => GeometryKind::Device {
                lattice: scale_lattice(lattice),
                defect: defect.clone(),
                margin: margin * factor,
            },
            GeometryKind::UnitCell { lattice } => GeometryKind::UnitCell {
                lattice: scale_lattice(lattice),
            },
            GeometryKind::Square { side } => GeometryKind::Square { side: side * factor },
        };
        let outline = match self.outline {
            Outline::Rectangle {
                half_width,
                half_height,
            } => Outline::Rectangle {
                half_width: half_width * factor,
                half_height: half_height * factor,
            },
            Outline::Periodic { a1, a2 } => Outline::Periodic {
                a1: [a1[0] * factor, a1[1] * factor],
                a2: [a2[0] * factor, a2[1] * factor],
            },
        };
        Self {
            kind,
            outline,
            holes: self
                .holes
                .iter()
                .map(|h| Hole {
                    center: [h.center[0] * factor, h.center[1] * factor],
                    radius: h.radius * factor,
                })
                .collect(),
        }
    }
}
