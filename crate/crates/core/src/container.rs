//! Line-oriented text container for a mesh and the fields living on it.
//!
//! ```text
//! softclamp-mesh 1
//! element_size 1.2e-5
//! lattice 1.6e-4 0 8e-5 1.3856e-4      (periodic meshes only)
//! nodes 3
//! 0 0
//! ...
//! triangles 1
//! 0 1 2
//! boundary 3
//! 0 1 outer_clamp
//! ...
//! periodic 0
//! field stress element 3
//! 1.27e9 1.27e9 0
//! ...
//! end
//! ```
//!
//! Floats are written in shortest round-trip form, so a write/read cycle is
//! bit-exact. Blank lines and `#` comments are ignored.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{BoundaryEdge, EdgeTag, Mesh, PeriodicImage};

pub const MAGIC: &str = "softclamp-mesh";
pub const VERSION: u32 = 1;

/// Upper bound on any declared count, to reject absurd headers before
/// allocating.
const MAX_COUNT: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Node,
    Element,
}

impl Location {
    fn as_str(self) -> &'static str {
        match self {
            Location::Node => "node",
            Location::Element => "element",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub location: Location,
    pub components: usize,
    /// Row-major, `components` values per node or element.
    pub values: Vec<f64>,
}

impl Field {
    pub fn nodal(name: &str, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            location: Location::Node,
            components: 1,
            values,
        }
    }

    pub fn stress(sigma: &[[f64; 3]]) -> Self {
        Self {
            name: "stress".into(),
            location: Location::Element,
            components: 3,
            values: sigma.iter().flatten().copied().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.values.len() / self.components.max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub mesh: Mesh,
    pub fields: Vec<Field>,
}

impl Container {
    pub fn new(mesh: Mesh) -> Self {
        Self { mesh, fields: Vec::new() }
    }

    pub fn with_field(mut self, field: Field) -> Self {
        self.fields.push(field);
        self
    }

    pub fn field(&self, name: &str) -> Option<&Field> {
        self.fields.iter().find(|f| f.name == name)
    }

    /// Element stress as `[σxx, σyy, σxy]` rows, if present.
    pub fn stress(&self) -> Option<Vec<[f64; 3]>> {
        let f = self.field("stress")?;
        (f.location == Location::Element && f.components == 3)
            .then(|| f.values.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name.chars().any(|c| c.is_whitespace() || c == '#') {
        return Err(Error::Domain(format!("field name '{name}' must be a single token")));
    }
    Ok(())
}

pub fn write(container: &Container) -> Result<String> {
    let m = &container.mesh;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {VERSION}");
    let _ = writeln!(out, "element_size {}", m.element_size_target);
    if let Some([a1, a2]) = m.lattice_vectors {
        let _ = writeln!(out, "lattice {} {} {} {}", a1[0], a1[1], a2[0], a2[1]);
    }
    let _ = writeln!(out, "nodes {}", m.nodes.len());
    for p in &m.nodes {
        let _ = writeln!(out, "{} {}", p[0], p[1]);
    }
    let _ = writeln!(out, "triangles {}", m.triangles.len());
    for t in &m.triangles {
        let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(out, "boundary {}", m.boundary_edges.len());
    for b in &m.boundary_edges {
        let _ = writeln!(out, "{} {} {}", b.nodes[0], b.nodes[1], b.tag.as_str());
    }
    let _ = writeln!(out, "periodic {}", m.periodic_images.len());
    for p in &m.periodic_images {
        let _ = writeln!(out, "{} {} {} {}", p.node, p.source, p.shift[0], p.shift[1]);
    }
    for f in &container.fields {
        check_name(&f.name)?;
        let rows = match f.location {
            Location::Node => m.nodes.len(),
            Location::Element => m.triangles.len(),
        };
        if f.components == 0 || f.values.len() != rows * f.components {
            return Err(Error::Domain(format!(
                "field '{}' has {} values, expected {} x {}",
                f.name,
                f.values.len(),
                rows,
                f.components
            )));
        }
        let _ = writeln!(out, "field {} {} {}", f.name, f.location.as_str(), f.components);
        for row in f.values.chunks_exact(f.components) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
    }
    out.push_str("end\n");
    Ok(out)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self { inner: text.lines().enumerate(), last: 0 }
    }

    /// Next non-blank, non-comment line split into tokens.
    fn next_tokens(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (i, raw) in self.inner.by_ref() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if !line.is_empty() {
                self.last = i + 1;
                return Some((i + 1, line.split_whitespace().collect()));
            }
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        self.next_tokens()
            .ok_or_else(|| Error::parse(self.last + 1, format!("unexpected end of input, expected {what}")))
    }
}

fn number<T: std::str::FromStr>(line: usize, token: &str, what: &str) -> Result<T> {
    token
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} '{token}'")))
}

fn finite(line: usize, token: &str) -> Result<f64> {
    let v: f64 = number(line, token, "number")?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::parse(line, format!("non-finite value '{token}'")))
    }
}

fn arity(line: usize, tokens: &[&str], n: usize) -> Result<()> {
    if tokens.len() == n {
        Ok(())
    } else {
        Err(Error::parse(line, format!("expected {n} fields, found {}", tokens.len())))
    }
}

fn section(lines: &mut Lines, keyword: &str) -> Result<usize> {
    let (line, t) = lines.expect(keyword)?;
    if t[0] != keyword {
        return Err(Error::parse(line, format!("expected '{keyword}', found '{}'", t[0])));
    }
    arity(line, &t, 2)?;
    count(line, t[1])
}

fn count(line: usize, token: &str) -> Result<usize> {
    let n: usize = number(line, token, "count")?;
    if n > MAX_COUNT {
        return Err(Error::parse(line, format!("count {n} exceeds the limit of {MAX_COUNT}")));
    }
    Ok(n)
}

fn index(line: usize, token: &str, bound: usize, what: &str) -> Result<usize> {
    let i: usize = number(line, token, what)?;
    if i >= bound {
        return Err(Error::parse(line, format!("{what} {i} out of range (< {bound})")));
    }
    Ok(i)
}

/// Parses and validates a container. Every failure is reported with the
/// line it was detected on.
pub fn read(text: &str) -> Result<Container> {
    let mut lines = Lines::new(text);
    let (line, t) = lines.expect("header")?;
    if t[0] != MAGIC {
        return Err(Error::parse(line, format!("not a {MAGIC} file")));
    }
    arity(line, &t, 2)?;
    let version: u32 = number(line, t[1], "version")?;
    if version != VERSION {
        return Err(Error::parse(line, format!("unsupported version {version}")));
    }

    let (line, t) = lines.expect("element_size")?;
    if t[0] != "element_size" {
        return Err(Error::parse(line, format!("expected 'element_size', found '{}'", t[0])));
    }
    arity(line, &t, 2)?;
    let element_size_target = finite(line, t[1])?;

    let (line, t) = lines.expect("nodes")?;
    let (lattice_vectors, n_nodes) = match t[0] {
        "lattice" => {
            arity(line, &t, 5)?;
            let v: Vec<f64> = t[1..].iter().map(|s| finite(line, s)).collect::<Result<_>>()?;
            (Some([[v[0], v[1]], [v[2], v[3]]]), section(&mut lines, "nodes")?)
        }
        "nodes" => {
            arity(line, &t, 2)?;
            (None, count(line, t[1])?)
        }
        other => return Err(Error::parse(line, format!("expected 'nodes', found '{other}'"))),
    };

    let mut nodes = Vec::with_capacity(n_nodes.min(1 << 16));
    for _ in 0..n_nodes {
        let (line, t) = lines.expect("node coordinates")?;
        arity(line, &t, 2)?;
        nodes.push([finite(line, t[0])?, finite(line, t[1])?]);
    }

    let n_tri = section(&mut lines, "triangles")?;
    let mut triangles = Vec::with_capacity(n_tri.min(1 << 16));
    for _ in 0..n_tri {
        let (line, t) = lines.expect("triangle")?;
        arity(line, &t, 3)?;
        triangles.push([
            index(line, t[0], n_nodes, "node")?,
            index(line, t[1], n_nodes, "node")?,
            index(line, t[2], n_nodes, "node")?,
        ]);
    }

    let n_bnd = section(&mut lines, "boundary")?;
    let mut boundary_edges = Vec::with_capacity(n_bnd.min(1 << 16));
    for _ in 0..n_bnd {
        let (line, t) = lines.expect("boundary edge")?;
        arity(line, &t, 3)?;
        let tag = EdgeTag::parse(t[2]).ok_or_else(|| Error::parse(line, format!("unknown edge tag '{}'", t[2])))?;
        boundary_edges.push(BoundaryEdge {
            nodes: [index(line, t[0], n_nodes, "node")?, index(line, t[1], n_nodes, "node")?],
            tag,
        });
    }

    let n_per = section(&mut lines, "periodic")?;
    let mut periodic_images = Vec::with_capacity(n_per.min(1 << 16));
    for _ in 0..n_per {
        let (line, t) = lines.expect("periodic image")?;
        arity(line, &t, 4)?;
        periodic_images.push(PeriodicImage {
            node: index(line, t[0], n_nodes, "node")?,
            source: index(line, t[1], n_nodes, "node")?,
            shift: [number(line, t[2], "shift")?, number(line, t[3], "shift")?],
        });
    }

    let mesh = Mesh {
        nodes,
        triangles,
        boundary_edges,
        periodic_images,
        lattice_vectors,
        element_size_target,
    };
    mesh.validate().map_err(|e| Error::parse(lines.last, format!("invalid mesh: {e}")))?;

    let mut fields: Vec<Field> = Vec::new();
    loop {
        let (line, t) = lines.expect("'field' or 'end'")?;
        match t[0] {
            "end" => {
                arity(line, &t, 1)?;
                break;
            }
            "field" => {
                arity(line, &t, 4)?;
                let name = t[1].to_string();
                if fields.iter().any(|f| f.name == name) {
                    return Err(Error::parse(line, format!("duplicate field '{name}'")));
                }
                let (location, rows) = match t[2] {
                    "node" => (Location::Node, mesh.nodes.len()),
                    "element" => (Location::Element, mesh.triangles.len()),
                    other => return Err(Error::parse(line, format!("unknown field location '{other}'"))),
                };
                let components = count(line, t[3])?;
                if components == 0 || components > 64 {
                    return Err(Error::parse(line, format!("unsupported component count {components}")));
                }
                let mut values = Vec::with_capacity((rows * components).min(1 << 16));
                for _ in 0..rows {
                    let (line, t) = lines.expect("field values")?;
                    arity(line, &t, components)?;
                    for s in t {
                        values.push(finite(line, s)?);
                    }
                }
                fields.push(Field { name, location, components, values });
            }
            other => return Err(Error::parse(line, format!("unexpected '{other}'"))),
        }
    }
    if let Some((line, _)) = lines.next_tokens() {
        return Err(Error::parse(line, "content after 'end'"));
    }
    Ok(Container { mesh, fields })
}

pub fn write_file(path: &std::path::Path, container: &Container) -> Result<()> {
    std::fs::write(path, write(container)?)?;
    Ok(())
}

pub fn read_file(path: &std::path::Path) -> Result<Container> {
    read(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_square, build_unit_cell, LatticeSpec};
    use crate::mesh::mesh;

    #[test]
    fn round_trip_is_bit_exact() {
        let m = mesh(&build_unit_cell(&LatticeSpec::standard(160e-6)).unwrap(), 0.1 * 160e-6).unwrap();
        let stress: Vec<[f64; 3]> = (0..m.triangles.len()).map(|e| [e as f64 * 1.1e8, 0.3, -1.0 / 3.0]).collect();
        let u: Vec<f64> = m.nodes.iter().map(|p| p[0].sin() * 1e3 + p[1]).collect();
        let c = Container::new(m).with_field(Field::stress(&stress)).with_field(Field::nodal("mode_A", u));
        let text = write(&c).unwrap();
        let back = read(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.stress().unwrap(), stress);
        assert_eq!(write(&back).unwrap(), text);
    }

    #[test]
    fn malformed_inputs_report_lines() {
        let m = mesh(&build_square(1.0).unwrap(), 0.5).unwrap();
        let text = write(&Container::new(m)).unwrap();
        let cases = [
            text.replacen("softclamp-mesh 1", "softclamp-mesh 2", 1),
            text.replacen("outer_clamp", "glued", 1),
            text.replacen("end\n", "", 1),
            text.replacen("end\n", "end\nextra\n", 1),
            text.replacen("nodes ", "nodes 9", 1),
            text.replacen("triangles ", "triangles 99999999999", 1),
            text.replacen("\n0 ", "\nnan ", 1),
            "".to_string(),
            "softclamp-mesh".to_string(),
        ];
        for case in cases {
            match read(&case) {
                Err(Error::Parse { .. }) => {}
                other => panic!("expected parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn inconsistent_field_rejected_on_write() {
        let m = mesh(&build_square(1.0).unwrap(), 0.5).unwrap();
        let c = Container::new(m).with_field(Field::nodal("u", vec![1.0]));
        assert!(write(&c).is_err());
        let c = Container { fields: vec![Field::nodal("bad name", vec![])], ..c };
        assert!(write(&c).is_err());
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let m = mesh(&build_square(1.0).unwrap(), 0.5).unwrap();
        let text = write(&Container::new(m.clone())).unwrap();
        let spaced = text.replace('\n', "\n\n# note\n");
        assert_eq!(read(&spaced).unwrap().mesh, m);
    }
}
