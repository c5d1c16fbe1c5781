//! Boundary-tagged triangular meshes of membrane geometries.
//!
//! Triangulation is delegated to a constrained Delaunay refiner; this module
//! owns the planar straight-line graph handed to it, the boundary tagging and
//! the periodic node pairing. Mirror-symmetric rectangular membranes are
//! meshed on the quadrant `x, y >= 0` and reflected, so the mesh, and every
//! field computed on it, carries the geometry's symmetry exactly.

use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use spade::{AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation};

use crate::error::{Error, Result};
use crate::geometry::{DeviceGeometry, Hole, Outline};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeTag {
    /// Edge on the rigidly clamped frame.
    OuterClamp,
    /// Traction-free rim of a hole.
    HoleFree,
    /// Edge of a periodic cell, matched to its image.
    Periodic,
}

impl EdgeTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            EdgeTag::OuterClamp => "outer_clamp",
            EdgeTag::HoleFree => "hole_free",
            EdgeTag::Periodic => "periodic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "outer_clamp" => Some(EdgeTag::OuterClamp),
            "hole_free" => Some(EdgeTag::HoleFree),
            "periodic" => Some(EdgeTag::Periodic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: EdgeTag,
}

/// A node on the upper/right edge of a periodic cell that duplicates `source`
/// shifted by `shift[0]·a1 + shift[1]·a2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicImage {
    pub node: usize,
    pub source: usize,
    pub shift: [i32; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    /// Counter-clockwise node triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub periodic_images: Vec<PeriodicImage>,
    pub lattice_vectors: Option<[[f64; 2]; 2]>,
    pub element_size_target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshOptions {
    pub element_size_target: f64,
    /// Minimum inner angle requested from the refiner (degrees).
    pub min_angle_deg: f64,
    /// Floor on the inradius/circumradius ratio of every triangle.
    pub min_quality: f64,
    pub max_triangles: usize,
    /// Mesh one quadrant and reflect it when the geometry allows.
    pub mirror: bool,
}

impl MeshOptions {
    pub fn new(element_size_target: f64) -> Self {
        Self {
            element_size_target,
            min_angle_deg: 25.0,
            min_quality: 0.05,
            max_triangles: 2_000_000,
            mirror: true,
        }
    }
}

/// Meshes `geom` with the default options.
pub fn mesh(geom: &DeviceGeometry, element_size_target: f64) -> Result<Mesh> {
    mesh_with(geom, &MeshOptions::new(element_size_target))
}

/// Number of segments used for a hole of radius `r` at element size `target`:
/// at least 16, rounded up to a multiple of four so that the polygon keeps
/// both mirror symmetries.
pub fn hole_segments(radius: f64, target: f64) -> usize {
    let n = (2.0 * PI * radius / target).ceil().max(16.0) as usize;
    n.div_ceil(4) * 4
}

pub fn mesh_with(geom: &DeviceGeometry, opts: &MeshOptions) -> Result<Mesh> {
    let target = opts.element_size_target;
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::Mesh(format!("element size target must be positive, got {target}")));
    }
    let min_extent = match geom.outline {
        Outline::Rectangle {
            half_width,
            half_height,
        } => 2.0 * half_width.min(half_height),
        Outline::Periodic { a1, a2 } => a1[0].hypot(a1[1]).min(a2[0].hypot(a2[1])),
    };
    if target > 0.5 * min_extent {
        return Err(Error::Mesh(format!(
            "element size {target:.3e} cannot resolve a domain of extent {min_extent:.3e}"
        )));
    }
    let estimate = geom.area() / (0.433 * target * target);
    if estimate > opts.max_triangles as f64 {
        return Err(Error::Mesh(format!(
            "requested size would need ~{estimate:.0} triangles (limit {})",
            opts.max_triangles
        )));
    }

    let mesh = match geom.outline {
        Outline::Rectangle {
            half_width,
            half_height,
        } => {
            let quadrant = if opts.mirror && geom.is_mirror_symmetric() {
                quadrant_pslg(&geom.holes, half_width, half_height, target)
            } else {
                None
            };
            match quadrant {
                Some(pslg) => {
                    let (nodes, tris) = triangulate(&pslg, opts)?;
                    let (nodes, tris) = reflect_quadrant(nodes, tris);
                    finish(nodes, tris, geom, target, None)
                }
                None => {
                    let pslg = rectangle_pslg(&geom.holes, half_width, half_height, target);
                    let (nodes, tris) = triangulate(&pslg, opts)?;
                    finish(nodes, tris, geom, target, None)
                }
            }
        }
        Outline::Periodic { a1, a2 } => {
            let pslg = periodic_pslg(&geom.holes, a1, a2, target);
            let (nodes, tris) = triangulate(&pslg, opts)?;
            finish(nodes, tris, geom, target, Some([a1, a2]))
        }
    }?;

    if mesh.triangles.len() > opts.max_triangles {
        return Err(Error::Mesh(format!(
            "mesh has {} triangles, above the limit {}",
            mesh.triangles.len(),
            opts.max_triangles
        )));
    }
    let q = mesh.min_quality();
    if q < opts.min_quality {
        return Err(Error::Mesh(format!(
            "worst triangle quality {q:.3} is below the floor {}",
            opts.min_quality
        )));
    }
    Ok(mesh)
}

/// Planar straight-line graph: points plus constraint segments between them.
#[derive(Default)]
struct Pslg {
    points: Vec<[f64; 2]>,
    lookup: HashMap<(u64, u64), usize>,
    segments: Vec<[usize; 2]>,
}

impl Pslg {
    fn point(&mut self, p: [f64; 2]) -> usize {
        // Normalise -0.0 so mirrored axis points coincide.
        let p = [p[0] + 0.0, p[1] + 0.0];
        let key = (p[0].to_bits(), p[1].to_bits());
        if let Some(&k) = self.lookup.get(&key) {
            return k;
        }
        self.points.push(p);
        self.lookup.insert(key, self.points.len() - 1);
        self.points.len() - 1
    }

    fn polyline(&mut self, pts: &[[f64; 2]], closed: bool) {
        let ids: Vec<usize> = pts.iter().map(|p| self.point(*p)).collect();
        for w in ids.windows(2) {
            if w[0] != w[1] {
                self.segments.push([w[0], w[1]]);
            }
        }
        if closed && ids.len() > 2 {
            self.segments.push([ids[ids.len() - 1], ids[0]]);
        }
    }

    /// Straight segment subdivided into pieces no longer than `target`.
    fn line(&mut self, p: [f64; 2], q: [f64; 2], target: f64) {
        let len = (q[0] - p[0]).hypot(q[1] - p[1]);
        let n = ((len / target).ceil() as usize).max(1);
        let pts: Vec<[f64; 2]> = (0..=n)
            .map(|k| {
                if k == 0 {
                    p
                } else if k == n {
                    q
                } else {
                    let t = k as f64 / n as f64;
                    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
                }
            })
            .collect();
        self.polyline(&pts, false);
    }
}

fn rectangle_pslg(holes: &[Hole], hw: f64, hh: f64, target: f64) -> Pslg {
    let mut g = Pslg::default();
    let c = [[-hw, -hh], [hw, -hh], [hw, hh], [-hw, hh]];
    for k in 0..4 {
        g.line(c[k], c[(k + 1) % 4], target);
    }
    for h in holes {
        g.polyline(&h.polygon(hole_segments(h.radius, target)), true);
    }
    g
}

fn periodic_pslg(holes: &[Hole], a1: [f64; 2], a2: [f64; 2], target: f64) -> Pslg {
    let mut g = Pslg::default();
    // Opposite edges share the same parameter values so nodes pair up exactly.
    let along = |v: [f64; 2]| v[0].hypot(v[1]);
    let n1 = ((along(a1) / target).ceil() as usize).max(1);
    let n2 = ((along(a2) / target).ceil() as usize).max(1);
    let at = |s: f64, t: f64| [s * a1[0] + t * a2[0], s * a1[1] + t * a2[1]];
    let edge = |n: usize, f: &dyn Fn(f64) -> [f64; 2]| -> Vec<[f64; 2]> { (0..=n).map(|k| f(k as f64 / n as f64)).collect() };
    g.polyline(&edge(n1, &|s| at(s, 0.0)), false);
    g.polyline(&edge(n1, &|s| at(s, 1.0)), false);
    g.polyline(&edge(n2, &|t| at(0.0, t)), false);
    g.polyline(&edge(n2, &|t| at(1.0, t)), false);
    for h in holes {
        g.polyline(&h.polygon(hole_segments(h.radius, target)), true);
    }
    g
}

/// Quadrant graph for a mirror-symmetric rectangle. Returns `None` when a hole
/// straddles an axis without being centred on it, or covers the origin.
fn quadrant_pslg(holes: &[Hole], hw: f64, hh: f64, target: f64) -> Option<Pslg> {
    let tol = 1e-12 * hw.max(hh);
    let mut g = Pslg::default();
    let mut on_y_axis: Vec<&Hole> = Vec::new();
    let mut on_x_axis: Vec<&Hole> = Vec::new();
    let mut interior: Vec<&Hole> = Vec::new();
    for h in holes {
        let (cx, cy, r) = (h.center[0], h.center[1], h.radius);
        if cx < -tol || cy < -tol {
            continue;
        }
        let x_axis_cut = cy - r <= tol;
        let y_axis_cut = cx - r <= tol;
        match (cx.abs() <= tol, cy.abs() <= tol) {
            (true, true) => return None,
            (true, false) if !x_axis_cut => on_y_axis.push(h),
            (false, true) if !y_axis_cut => on_x_axis.push(h),
            (false, false) if !x_axis_cut && !y_axis_cut => interior.push(h),
            _ => return None,
        }
    }

    // Frame edges.
    g.line([hw, 0.0], [hw, hh], target);
    g.line([hw, hh], [0.0, hh], target);

    // Axes, interrupted where holes cut them.
    let axis = |g: &mut Pslg, cuts: &mut Vec<(f64, f64)>, end: f64, to_point: &dyn Fn(f64) -> [f64; 2]| {
        cuts.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
        let mut start = 0.0;
        for &(lo, hi) in cuts.iter() {
            g.line(to_point(start), to_point(lo), target);
            start = hi;
        }
        g.line(to_point(start), to_point(end), target);
    };
    let mut y_cuts: Vec<(f64, f64)> = on_y_axis.iter().map(|h| (h.center[1] - h.radius, h.center[1] + h.radius)).collect();
    axis(&mut g, &mut y_cuts, hh, &|t| [0.0, t]);
    let mut x_cuts: Vec<(f64, f64)> = on_x_axis.iter().map(|h| (h.center[0] - h.radius, h.center[0] + h.radius)).collect();
    axis(&mut g, &mut x_cuts, hw, &|t| [t, 0.0]);

    // Half holes: vertices at multiples of 2π/n, endpoints placed exactly on the axis.
    for h in &on_y_axis {
        let n = hole_segments(h.radius, target);
        let q = (n / 4) as i64;
        let pts: Vec<[f64; 2]> = (-q..=q)
            .map(|k| {
                if k == -q {
                    [0.0, h.center[1] - h.radius]
                } else if k == q {
                    [0.0, h.center[1] + h.radius]
                } else {
                    let t = 2.0 * PI * k as f64 / n as f64;
                    [h.radius * t.cos(), h.center[1] + h.radius * t.sin()]
                }
            })
            .collect();
        g.polyline(&pts, false);
    }
    for h in &on_x_axis {
        let n = hole_segments(h.radius, target);
        let half = n / 2;
        let pts: Vec<[f64; 2]> = (0..=half)
            .map(|k| {
                if k == 0 {
                    [h.center[0] + h.radius, 0.0]
                } else if k == half {
                    [h.center[0] - h.radius, 0.0]
                } else {
                    let t = 2.0 * PI * k as f64 / n as f64;
                    [h.center[0] + h.radius * t.cos(), h.radius * t.sin()]
                }
            })
            .collect();
        g.polyline(&pts, false);
    }
    for h in &interior {
        g.polyline(&h.polygon(hole_segments(h.radius, target)), true);
    }
    Some(g)
}

fn triangulate(g: &Pslg, opts: &MeshOptions) -> Result<(Vec<[f64; 2]>, Vec<[usize; 3]>)> {
    let vertices: Vec<Point2<f64>> = g.points.iter().map(|p| Point2::new(p[0], p[1])).collect();
    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> =
        ConstrainedDelaunayTriangulation::bulk_load_cdt(vertices, g.segments.clone())
            .map_err(|e| Error::Mesh(format!("triangulation failed: {e:?}")))?;
    let target = opts.element_size_target;
    let params = RefinementParameters::<f64>::new()
        .exclude_outer_faces(true)
        .keep_constraint_edges()
        .with_angle_limit(AngleLimit::from_deg(opts.min_angle_deg))
        .with_max_allowed_area(0.25 * 3f64.sqrt() * target * target)
        .with_max_additional_vertices(opts.max_triangles);
    let result = cdt.refine(params);
    if !result.refinement_complete {
        return Err(Error::Mesh("refinement ran out of vertices".into()));
    }
    let excluded: HashSet<_> = result.excluded_faces.into_iter().collect();

    let mut index: Vec<Option<usize>> = vec![None; cdt.num_vertices()];
    let mut raw: Vec<[usize; 3]> = Vec::new();
    for face in cdt.inner_faces() {
        if excluded.contains(&face.fix()) {
            continue;
        }
        let v = face.vertices();
        raw.push([v[0].fix().index(), v[1].fix().index(), v[2].fix().index()]);
    }
    // Renumber in vertex order, keeping only referenced vertices.
    for t in &raw {
        for &v in t {
            index[v] = Some(0);
        }
    }
    let mut nodes = Vec::new();
    for (v, slot) in index.iter_mut().enumerate() {
        if slot.is_some() {
            let p = cdt.vertex(spade::handles::FixedVertexHandle::from_index(v)).position();
            *slot = Some(nodes.len());
            nodes.push([p.x, p.y]);
        }
    }
    let tris = raw
        .into_iter()
        .map(|t| [index[t[0]].unwrap(), index[t[1]].unwrap(), index[t[2]].unwrap()])
        .collect();
    Ok((nodes, tris))
}

/// Reflects a quadrant mesh into the full rectangle, sharing nodes that lie on
/// the mirror axes.
fn reflect_quadrant(nodes: Vec<[f64; 2]>, tris: Vec<[usize; 3]>) -> (Vec<[f64; 2]>, Vec<[usize; 3]>) {
    let mut all = nodes.clone();
    let n = nodes.len();
    let mut maps: Vec<Vec<usize>> = vec![(0..n).collect()];
    for (sx, sy) in [(-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)] {
        let mut map = Vec::with_capacity(n);
        for (k, p) in nodes.iter().enumerate() {
            let x_fixed = sx > 0.0 || p[0] == 0.0;
            let y_fixed = sy > 0.0 || p[1] == 0.0;
            if x_fixed && y_fixed {
                map.push(k);
            } else if x_fixed && !y_fixed && sx < 0.0 {
                // (-x, -y) image of a node on the y axis equals its (x, -y) image.
                map.push(maps[2][k]);
            } else if !x_fixed && y_fixed && sy < 0.0 {
                map.push(maps[1][k]);
            } else {
                map.push(all.len());
                all.push([sx * p[0] + 0.0, sy * p[1] + 0.0]);
            }
        }
        maps.push(map);
    }
    let mut out = tris.clone();
    for (q, (sx, sy)) in [(-1.0f64, 1.0f64), (1.0, -1.0), (-1.0, -1.0)].into_iter().enumerate() {
        let map = &maps[q + 1];
        let flip = sx * sy < 0.0;
        for t in &tris {
            let m = [map[t[0]], map[t[1]], map[t[2]]];
            out.push(if flip { [m[0], m[2], m[1]] } else { m });
        }
    }
    (all, out)
}

fn finish(
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    geom: &DeviceGeometry,
    target: f64,
    lattice: Option<[[f64; 2]; 2]>,
) -> Result<Mesh> {
    let mut edge_count: HashMap<[usize; 2], usize> = HashMap::new();
    for t in &triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *edge_count.entry([a.min(b), a.max(b)]).or_default() += 1;
        }
    }
    let scale = geom.length_scale();
    let tol = 1e-9 * scale;
    let mut boundary_edges: Vec<BoundaryEdge> = Vec::new();
    // Walk triangles in order so the edge list is deterministic.
    for t in &triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            if edge_count[&[a.min(b), a.max(b)]] != 1 {
                continue;
            }
            let m = [0.5 * (nodes[a][0] + nodes[b][0]), 0.5 * (nodes[a][1] + nodes[b][1])];
            let tag = match geom.outline {
                Outline::Rectangle {
                    half_width,
                    half_height,
                } => {
                    if (m[0].abs() - half_width).abs() < tol || (m[1].abs() - half_height).abs() < tol {
                        EdgeTag::OuterClamp
                    } else {
                        EdgeTag::HoleFree
                    }
                }
                Outline::Periodic { a1, a2 } => {
                    let (s, u) = lattice_coords(m, a1, a2);
                    if s.abs() < 1e-9 || (s - 1.0).abs() < 1e-9 || u.abs() < 1e-9 || (u - 1.0).abs() < 1e-9 {
                        EdgeTag::Periodic
                    } else {
                        EdgeTag::HoleFree
                    }
                }
            };
            boundary_edges.push(BoundaryEdge { nodes: [a, b], tag });
        }
    }

    let periodic_images = match lattice {
        Some([a1, a2]) => pair_periodic(&nodes, a1, a2)?,
        None => Vec::new(),
    };
    Ok(Mesh {
        nodes,
        triangles,
        boundary_edges,
        periodic_images,
        lattice_vectors: lattice,
        element_size_target: target,
    })
}

fn lattice_coords(p: [f64; 2], a1: [f64; 2], a2: [f64; 2]) -> (f64, f64) {
    let det = a1[0] * a2[1] - a1[1] * a2[0];
    let s = (p[0] * a2[1] - p[1] * a2[0]) / det;
    let t = (a1[0] * p[1] - a1[1] * p[0]) / det;
    (s, t)
}

fn pair_periodic(nodes: &[[f64; 2]], a1: [f64; 2], a2: [f64; 2]) -> Result<Vec<PeriodicImage>> {
    let tol = 1e-9;
    let coords: Vec<(f64, f64)> = nodes.iter().map(|p| lattice_coords(*p, a1, a2)).collect();
    let mut left: Vec<(f64, usize)> = Vec::new();
    let mut bottom: Vec<(f64, usize)> = Vec::new();
    for (k, &(s, t)) in coords.iter().enumerate() {
        if s.abs() < tol {
            left.push((t, k));
        }
        if t.abs() < tol {
            bottom.push((s, k));
        }
    }
    let find = |list: &[(f64, usize)], v: f64| list.iter().find(|(w, _)| (w - v).abs() < tol).map(|(_, k)| *k);
    let origin = find(&left, 0.0).ok_or_else(|| Error::Mesh("periodic cell lacks its origin node".into()))?;
    let mut images = Vec::new();
    for (k, &(s, t)) in coords.iter().enumerate() {
        let right = (s - 1.0).abs() < tol;
        let top = (t - 1.0).abs() < tol;
        let image = match (right, top) {
            (false, false) => continue,
            (true, true) => PeriodicImage { node: k, source: origin, shift: [1, 1] },
            (true, false) if t.abs() < tol => PeriodicImage { node: k, source: origin, shift: [1, 0] },
            (false, true) if s.abs() < tol => PeriodicImage { node: k, source: origin, shift: [0, 1] },
            (true, false) => PeriodicImage {
                node: k,
                source: find(&left, t).ok_or_else(|| Error::Mesh(format!("no periodic partner for node {k}")))?,
                shift: [1, 0],
            },
            (false, true) => PeriodicImage {
                node: k,
                source: find(&bottom, s).ok_or_else(|| Error::Mesh(format!("no periodic partner for node {k}")))?,
                shift: [0, 1],
            },
        };
        images.push(image);
    }
    Ok(images)
}

/// Inradius over circumradius; 0.5 for an equilateral triangle.
pub fn triangle_quality(p: [[f64; 2]; 3]) -> f64 {
    let d = |u: [f64; 2], v: [f64; 2]| (u[0] - v[0]).hypot(u[1] - v[1]);
    let (a, b, c) = (d(p[1], p[2]), d(p[0], p[2]), d(p[0], p[1]));
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])).abs();
    if area == 0.0 {
        return 0.0;
    }
    let inradius = 2.0 * area / (a + b + c);
    let circumradius = a * b * c / (4.0 * area);
    inradius / circumradius
}

impl Mesh {
    pub fn triangle_points(&self, e: usize) -> [[f64; 2]; 3] {
        let t = self.triangles[e];
        [self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]]
    }

    pub fn triangle_area(&self, e: usize) -> f64 {
        let p = self.triangle_points(e);
        0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
    }

    pub fn centroid(&self, e: usize) -> [f64; 2] {
        let p = self.triangle_points(e);
        [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0]
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|e| self.triangle_area(e)).sum()
    }

    pub fn min_quality(&self) -> f64 {
        (0..self.triangles.len())
            .map(|e| triangle_quality(self.triangle_points(e)))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_periodic(&self) -> bool {
        self.lattice_vectors.is_some()
    }

    /// Flags nodes touching an edge with the given tag.
    pub fn nodes_with_tag(&self, tag: EdgeTag) -> Vec<bool> {
        let mut flags = vec![false; self.nodes.len()];
        for e in self.boundary_edges.iter().filter(|e| e.tag == tag) {
            flags[e.nodes[0]] = true;
            flags[e.nodes[1]] = true;
        }
        flags
    }

    /// Flags nodes on any physical boundary (clamp or hole rim).
    pub fn physical_boundary_nodes(&self) -> Vec<bool> {
        let mut flags = vec![false; self.nodes.len()];
        for e in self.boundary_edges.iter().filter(|e| e.tag != EdgeTag::Periodic) {
            flags[e.nodes[0]] = true;
            flags[e.nodes[1]] = true;
        }
        flags
    }

    /// Node-to-node adjacency through triangle edges, sorted per node.
    pub fn node_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Rigidly rescales node coordinates and lattice vectors.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            nodes: self.nodes.iter().map(|p| [p[0] * factor, p[1] * factor]).collect(),
            lattice_vectors: self
                .lattice_vectors
                .map(|[a1, a2]| [[a1[0] * factor, a1[1] * factor], [a2[0] * factor, a2[1] * factor]]),
            element_size_target: self.element_size_target * factor,
            ..self.clone()
        }
    }

    /// Checks structural invariants: indices in range, positive orientation,
    /// conforming edges, complete tagging and consistent periodic images.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if self.nodes.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::Mesh("non-finite node coordinate".into()));
        }
        for (e, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= n) || t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::Mesh(format!("triangle {e} has invalid node indices")));
            }
            if self.triangle_area(e) <= 0.0 {
                return Err(Error::Mesh(format!("triangle {e} is not counter-clockwise")));
            }
        }
        let mut edge_count: HashMap<[usize; 2], usize> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edge_count.entry([a.min(b), a.max(b)]).or_default() += 1;
            }
        }
        if let Some((edge, c)) = edge_count.iter().find(|(_, c)| **c > 2) {
            return Err(Error::Mesh(format!("edge {edge:?} shared by {c} triangles")));
        }
        let mut tagged: HashSet<[usize; 2]> = HashSet::new();
        for b in &self.boundary_edges {
            let key = [b.nodes[0].min(b.nodes[1]), b.nodes[0].max(b.nodes[1])];
            if b.nodes.iter().any(|&v| v >= n) || edge_count.get(&key) != Some(&1) {
                return Err(Error::Mesh(format!("tagged edge {:?} is not a boundary edge", b.nodes)));
            }
            if !tagged.insert(key) {
                return Err(Error::Mesh(format!("edge {:?} tagged twice", b.nodes)));
            }
        }
        let boundary = edge_count.values().filter(|c| **c == 1).count();
        if boundary != tagged.len() {
            return Err(Error::Mesh(format!(
                "{} boundary edges but {} tags",
                boundary,
                tagged.len()
            )));
        }
        // Hanging nodes show up as a boundary vertex with an odd number of boundary edges.
        let mut degree: HashMap<usize, usize> = HashMap::new();
        for key in edge_count.iter().filter(|(_, c)| **c == 1).map(|(k, _)| k) {
            *degree.entry(key[0]).or_default() += 1;
            *degree.entry(key[1]).or_default() += 1;
        }
        if let Some((v, _)) = degree.iter().find(|(_, d)| **d % 2 == 1) {
            return Err(Error::Mesh(format!("node {v} breaks boundary conformity")));
        }
        if let Some([a1, a2]) = self.lattice_vectors {
            for img in &self.periodic_images {
                if img.node >= n || img.source >= n {
                    return Err(Error::Mesh("periodic image index out of range".into()));
                }
                let p = self.nodes[img.node];
                let s = self.nodes[img.source];
                let shifted = [
                    s[0] + img.shift[0] as f64 * a1[0] + img.shift[1] as f64 * a2[0],
                    s[1] + img.shift[0] as f64 * a1[1] + img.shift[1] as f64 * a2[1],
                ];
                let scale = a1[0].hypot(a1[1]);
                if (p[0] - shifted[0]).hypot(p[1] - shifted[1]) > 1e-8 * scale {
                    return Err(Error::Mesh(format!("periodic image of node {} is misplaced", img.node)));
                }
            }
        } else if !self.periodic_images.is_empty() {
            return Err(Error::Mesh("periodic images without lattice vectors".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_lattice, build_square, build_unit_cell, DefectSpec, LatticeSpec, HOLE_POLYGON_SEGMENTS};
    use approx::assert_relative_eq;

    #[test]
    fn square_is_structured_and_clamped() {
        let g = build_square(1.0).unwrap();
        let m = mesh(&g, 1.0 / 50.0).unwrap();
        m.validate().unwrap();
        assert!(m.boundary_edges.iter().all(|e| e.tag == EdgeTag::OuterClamp));
        assert!((3000..9000).contains(&m.triangles.len()), "{}", m.triangles.len());
        assert_relative_eq!(m.area(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn deterministic() {
        let g = build_unit_cell(&LatticeSpec::standard(1.0)).unwrap();
        assert_eq!(mesh(&g, 0.05).unwrap(), mesh(&g, 0.05).unwrap());
    }

    #[test]
    fn unit_cell_periodic_pairs() {
        let g = build_unit_cell(&LatticeSpec::standard(1.0)).unwrap();
        let m = mesh(&g, 0.04).unwrap();
        m.validate().unwrap();
        assert!(!m.periodic_images.is_empty());
        assert!(m.boundary_edges.iter().any(|e| e.tag == EdgeTag::HoleFree));
        // Default hole resolution: 64 segments reproduces the geometric area.
        let target = 2.0 * PI * 0.26 / HOLE_POLYGON_SEGMENTS as f64;
        assert_eq!(hole_segments(0.26, target), HOLE_POLYGON_SEGMENTS);
        let fine = mesh(&g, target).unwrap();
        assert_relative_eq!(fine.area(), g.area(), max_relative = 1e-3);
    }

    #[test]
    fn symmetric_device_mesh_is_mirrored() {
        let spec = LatticeSpec {
            lattice_constant: 1.0,
            hole_radius_ratio: 0.26,
            n_cols: 4.0,
            n_rows: 4.0,
        };
        let g = build_lattice(&spec, &DefectSpec::paper_like()).unwrap();
        let m = mesh(&g, 0.08).unwrap();
        m.validate().unwrap();
        let key = |p: [f64; 2]| ((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64);
        let set: HashSet<_> = m.nodes.iter().map(|p| key(*p)).collect();
        for p in &m.nodes {
            assert!(set.contains(&key([-p[0], p[1]])));
            assert!(set.contains(&key([p[0], -p[1]])));
        }
        let tagged_clamp = m.boundary_edges.iter().filter(|e| e.tag == EdgeTag::OuterClamp).count();
        assert!(tagged_clamp > 0);
    }

    #[test]
    fn asymmetric_device_falls_back_to_full_mesh() {
        let spec = LatticeSpec {
            lattice_constant: 1.0,
            hole_radius_ratio: 0.2,
            n_cols: 3.0,
            n_rows: 3.0,
        };
        let defect = DefectSpec {
            removed: vec![crate::geometry::central_ring()[0]],
            displaced: vec![],
        };
        let g = build_lattice(&spec, &defect).unwrap();
        assert!(!g.is_mirror_symmetric());
        let m = mesh(&g, 0.1).unwrap();
        m.validate().unwrap();
        assert_relative_eq!(m.area(), g.outline.area() - g.holes.iter().map(|h| h.polygon_area(hole_segments(0.2, 0.1))).sum::<f64>(), max_relative = 1e-9);
    }

    #[test]
    fn bad_sizes_rejected() {
        let g = build_square(1.0).unwrap();
        assert!(mesh(&g, 0.0).is_err());
        assert!(mesh(&g, 2.0).is_err());
        assert!(mesh_with(&g, &MeshOptions { max_triangles: 10, ..MeshOptions::new(0.01) }).is_err());
    }

    #[test]
    fn quality_of_equilateral() {
        let q = triangle_quality([[0.0, 0.0], [1.0, 0.0], [0.5, 0.75f64.sqrt()]]);
        assert_relative_eq!(q, 0.5, max_relative = 1e-12);
    }
}
