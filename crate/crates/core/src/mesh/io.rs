//! Plain-text mesh format.
//!
//! ```text
//! # comment lines and blank lines are ignored
//! NODES <count>
//! <x> <y>
//! TRIANGLES <count>
//! <a> <b> <c>
//! BOUNDARY <count>
//! <a> <b> EXTERIOR|HOLE
//! PERIODIC <count>        (optional)
//! <master> <slave>
//! ```
//!
//! Coordinates are written in shortest round-trip form, so reading a written
//! mesh reproduces it exactly.

use std::fmt::Write as _;
use std::path::Path;

use super::{signed_area, BoundaryEdge, BoundaryTag, Mesh, Point};
use crate::error::{Error, Result};

pub fn format_mesh(mesh: &Mesh) -> String {
    let mut s = String::new();
    s.push_str("# lscheme mesh\n");
    let _ = writeln!(s, "NODES {}", mesh.node_count());
    for p in mesh.nodes() {
        let _ = writeln!(s, "{:?} {:?}", p[0], p[1]);
    }
    let _ = writeln!(s, "TRIANGLES {}", mesh.triangle_count());
    for t in mesh.triangles() {
        let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "BOUNDARY {}", mesh.boundary_edges().len());
    for e in mesh.boundary_edges() {
        let _ = writeln!(s, "{} {} {}", e.nodes[0], e.nodes[1], e.tag);
    }
    if let Some(pairs) = mesh.periodic_pairs() {
        let _ = writeln!(s, "PERIODIC {}", pairs.len());
        for (m, sl) in pairs {
            let _ = writeln!(s, "{m} {sl}");
        }
    }
    s
}

pub fn write_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, format_mesh(mesh))?;
    Ok(())
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    parse_mesh(&std::fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
    last_line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, &'a str)> + 'a> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
                .filter(|(_, l)| !l.is_empty()),
        );
        Lines {
            inner: it.peekable(),
            last_line: text.lines().count(),
        }
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        self.inner.next()
    }

    fn peek_is(&mut self, keyword: &str) -> bool {
        matches!(self.inner.peek(), Some((_, l)) if l.split_whitespace().next() == Some(keyword))
    }
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn header(lines: &mut Lines<'_>, keyword: &str) -> Result<usize> {
    let Some((ln, l)) = lines.next() else {
        return Err(err(lines.last_line + 1, format!("missing section {keyword}")));
    };
    let mut parts = l.split_whitespace();
    if parts.next() != Some(keyword) {
        return Err(err(ln, format!("expected section {keyword}, found '{l}'")));
    }
    let count = parts
        .next()
        .ok_or_else(|| err(ln, format!("section {keyword} has no record count")))?;
    count
        .parse()
        .map_err(|_| err(ln, format!("invalid record count '{count}' for {keyword}")))
}

fn records<'a>(lines: &mut Lines<'a>, keyword: &str, count: usize, width: usize) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let Some((ln, l)) = lines.next() else {
            return Err(err(
                lines.last_line + 1,
                format!("section {keyword} truncated: expected {count} records, found {i}"),
            ));
        };
        let fields: Vec<&str> = l.split_whitespace().collect();
        if fields.len() != width {
            return Err(err(
                ln,
                format!("{keyword} record needs {width} fields, found {}", fields.len()),
            ));
        }
        out.push((ln, fields));
    }
    Ok(out)
}

fn parse_field<T: std::str::FromStr>(ln: usize, s: &str) -> Result<T> {
    s.parse().map_err(|_| err(ln, format!("cannot parse '{s}'")))
}

pub fn parse_mesh(text: &str) -> Result<Mesh> {
    let mut lines = Lines::new(text);

    let count = header(&mut lines, "NODES")?;
    let mut nodes: Vec<Point> = Vec::with_capacity(count);
    for (ln, f) in records(&mut lines, "NODES", count, 2)? {
        nodes.push([parse_field(ln, f[0])?, parse_field(ln, f[1])?]);
    }

    let count = header(&mut lines, "TRIANGLES")?;
    let mut triangles = Vec::with_capacity(count);
    for (ln, f) in records(&mut lines, "TRIANGLES", count, 3)? {
        let t: [usize; 3] = [parse_field(ln, f[0])?, parse_field(ln, f[1])?, parse_field(ln, f[2])?];
        if t.iter().any(|&v| v >= nodes.len()) {
            return Err(err(ln, "triangle references a node index out of range"));
        }
        let a = signed_area(nodes[t[0]], nodes[t[1]], nodes[t[2]]);
        if !(a > 0.0) {
            return Err(err(
                ln,
                format!("triangle orientation is not counterclockwise (signed area {a:e})"),
            ));
        }
        triangles.push(t);
    }

    let count = header(&mut lines, "BOUNDARY")?;
    let mut boundary = Vec::with_capacity(count);
    for (ln, f) in records(&mut lines, "BOUNDARY", count, 3)? {
        let tag: BoundaryTag = f[2].parse().map_err(|e: String| err(ln, e))?;
        boundary.push(BoundaryEdge {
            nodes: [parse_field(ln, f[0])?, parse_field(ln, f[1])?],
            tag,
        });
    }

    let periodic = if lines.peek_is("PERIODIC") {
        let count = header(&mut lines, "PERIODIC")?;
        let mut pairs = Vec::with_capacity(count);
        for (ln, f) in records(&mut lines, "PERIODIC", count, 2)? {
            pairs.push((parse_field(ln, f[0])?, parse_field(ln, f[1])?));
        }
        Some(pairs)
    } else {
        None
    };

    if let Some((ln, l)) = lines.next() {
        return Err(err(ln, format!("unexpected content '{l}'")));
    }
    Mesh::new(nodes, triangles, boundary, periodic)
}
